use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufWriter, Read, Write};
use std::path::Path;

use crate::corpus::{open_text, Vocabulary};
use crate::embio::WordEmbeddings;
use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 8] = b"VEKTOR01";

/// Write the word2vec-style text format: a `<|V|> <d>` header, one
/// `word v1 ... vd` line per word, then `#key=value` metadata lines.
///
/// Values use the shortest decimal form that reads back to the same `f32`.
pub fn write_text<W: Write>(emb: &WordEmbeddings, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "{} {}", emb.len(), emb.dim())?;
    for (id, word) in emb.vocab().words().iter().enumerate() {
        w.write_all(word.as_bytes())?;
        for x in emb.row(id as u32) {
            write!(w, " {x}")?;
        }
        w.write_all(b"\n")?;
    }
    for (k, v) in emb.metadata() {
        writeln!(w, "#{k}={v}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_text<R: BufRead>(r: R) -> Result<WordEmbeddings> {
    let mut lines = r.lines();
    let parse_err = |line: usize, message: String| Error::Parse { line, message };

    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| parse_err(1, "missing header".into()))?;
    let mut fields = header.split_whitespace();
    let (n_words, dim) = match (fields.next(), fields.next(), fields.next()) {
        (Some(n), Some(d), None) => (
            n.parse::<usize>()
                .map_err(|_| parse_err(1, format!("bad vocabulary size {n:?}")))?,
            d.parse::<usize>()
                .map_err(|_| parse_err(1, format!("bad dimension {d:?}")))?,
        ),
        _ => return Err(parse_err(1, format!("expected `<words> <dim>`, found {header:?}"))),
    };
    if dim == 0 {
        return Err(parse_err(1, "dimension must be at least 1".into()));
    }

    let mut words = Vec::with_capacity(n_words);
    let mut seen = std::collections::HashSet::with_capacity(n_words);
    let mut matrix = Vec::with_capacity(n_words * dim);
    for i in 0..n_words {
        let lineno = i + 2;
        let line = lines
            .next()
            .transpose()?
            .ok_or_else(|| parse_err(lineno, format!("expected {n_words} rows, file ends early")))?;
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let word = fields
            .next()
            .ok_or_else(|| parse_err(lineno, "empty row".into()))?;
        let start = matrix.len();
        for f in fields {
            let x: f32 = f
                .trim_end()
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad value {f:?}")))?;
            if !x.is_finite() {
                return Err(parse_err(lineno, format!("non-finite value {f:?}")));
            }
            matrix.push(x);
        }
        let found = matrix.len() - start;
        if found != dim {
            return Err(parse_err(lineno, format!("expected {dim} values, found {found}")));
        }
        if !seen.insert(word.to_owned()) {
            return Err(parse_err(lineno, format!("duplicate word {word:?}")));
        }
        words.push(word.to_owned());
    }

    let mut metadata = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = n_words + 2 + i;
        if line.trim().is_empty() {
            continue;
        }
        let entry = line
            .strip_prefix('#')
            .and_then(|kv| kv.split_once('='))
            .ok_or_else(|| parse_err(lineno, format!("unexpected trailing line {line:?}")))?;
        metadata.insert(entry.0.to_owned(), entry.1.to_owned());
    }

    let vocab = Vocabulary::from_words(words)?;
    let mut emb = WordEmbeddings::new(vocab, dim, matrix)?;
    *emb.metadata_mut() = metadata;
    Ok(emb)
}

pub fn save_text<P: AsRef<Path>>(emb: &WordEmbeddings, path: P) -> Result<()> {
    write_text(emb, File::create(path)?)
}

pub fn load_text<P: AsRef<Path>>(path: P) -> Result<WordEmbeddings> {
    read_text(open_text(path)?)
}

/// Binary layout (little-endian): magic, `u32` word count, `u32` dim,
/// length-prefixed UTF-8 words, `f32` rows, then a metadata block of
/// length-prefixed key/value pairs preceded by a `u32` count.
pub fn write_binary<W: Write>(emb: &WordEmbeddings, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&(emb.len() as u32).to_le_bytes())?;
    w.write_all(&(emb.dim() as u32).to_le_bytes())?;
    for word in emb.vocab().words() {
        write_str(&mut w, word)?;
    }
    for x in emb.matrix() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.write_all(&(emb.metadata().len() as u32).to_le_bytes())?;
    for (k, v) in emb.metadata() {
        write_str(&mut w, k)?;
        write_str(&mut w, v)?;
    }
    w.flush()?;
    Ok(())
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

struct ByteCursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Format {
            offset: self.pos as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(self.err(format!("truncated while reading {what}")));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let start = self.pos;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|e| Error::Format {
            offset: (start + e.utf8_error().valid_up_to()) as u64,
            message: format!("invalid UTF-8 in {what}"),
        })
    }
}

pub fn read_binary<R: Read>(mut r: R) -> Result<WordEmbeddings> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    let mut cur = ByteCursor { data: &data, pos: 0 };

    if cur.take(8, "magic")? != BINARY_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "bad magic".into(),
        });
    }
    let n_words = cur.u32("word count")? as usize;
    let dim_offset = cur.pos;
    let dim = cur.u32("dimension")? as usize;
    if dim == 0 {
        return Err(Error::Format {
            offset: dim_offset as u64,
            message: "dimension must be at least 1".into(),
        });
    }

    let mut words = Vec::with_capacity(n_words);
    for _ in 0..n_words {
        words.push(cur.string("word")?);
    }
    let row_bytes = cur.take(n_words * dim * 4, "matrix")?;
    let matrix: Vec<f32> = row_bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();

    let mut metadata = BTreeMap::new();
    let n_meta = cur.u32("metadata count")?;
    for _ in 0..n_meta {
        let k = cur.string("metadata key")?;
        let v = cur.string("metadata value")?;
        metadata.insert(k, v);
    }
    if cur.pos != data.len() {
        return Err(cur.err("trailing bytes after metadata"));
    }

    let vocab = Vocabulary::from_words(words).map_err(|e| Error::Format {
        offset: 16,
        message: e.to_string(),
    })?;
    let mut emb = WordEmbeddings::new(vocab, dim, matrix)?;
    *emb.metadata_mut() = metadata;
    Ok(emb)
}

pub fn save_binary<P: AsRef<Path>>(emb: &WordEmbeddings, path: P) -> Result<()> {
    write_binary(emb, File::create(path)?)
}

pub fn load_binary<P: AsRef<Path>>(path: P) -> Result<WordEmbeddings> {
    read_binary(File::open(path)?)
}

/// Load either format, choosing binary when the file starts with the
/// binary magic.
pub fn load<P: AsRef<Path>>(path: P) -> Result<WordEmbeddings> {
    let mut head = [0u8; 8];
    let n = File::open(path.as_ref())?.read(&mut head)?;
    if n == 8 && &head == BINARY_MAGIC {
        load_binary(path)
    } else {
        load_text(path)
    }
}

/// Save as binary when the path ends in `.bin`, otherwise as text.
pub fn save<P: AsRef<Path>>(emb: &WordEmbeddings, path: P) -> Result<()> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e == "bin") {
        save_binary(emb, path)
    } else {
        save_text(emb, path)
    }
}
