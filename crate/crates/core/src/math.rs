//! Small numeric helpers shared by the trainers.

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)` without overflow for large `|x|`.
#[inline]
pub(crate) fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn dot(a: &[f32], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y).sum()
}

/// `row += scale * v`, accumulated in `f64`.
#[inline]
pub(crate) fn axpy(row: &mut [f32], scale: f64, v: &[f64]) {
    for (r, x) in row.iter_mut().zip(v) {
        *r = (*r as f64 + scale * x) as f32;
    }
}

/// Linear decay from `initial` to `initial * 1e-4` as `progress` goes 0 → 1.
#[inline]
pub(crate) fn decayed_lr(initial: f64, progress: f64) -> f64 {
    initial * (1.0 - progress.clamp(0.0, 1.0) * (1.0 - 1e-4))
}

/// Raw pointer handed to lock-free training workers. Concurrent updates
/// to the same rows race and may be lost.
pub(crate) struct Hogwild<T>(pub *mut T);

unsafe impl<T> Send for Hogwild<T> {}
unsafe impl<T> Sync for Hogwild<T> {}

impl<T> Clone for Hogwild<T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T> Copy for Hogwild<T> {}

impl<T> Hogwild<T> {
    /// # Safety
    /// The pointee must outlive every worker; callers accept racy writes.
    #[allow(clippy::mut_from_ref)]
    pub(crate) unsafe fn get(&self) -> &mut T {
        &mut *self.0
    }
}
