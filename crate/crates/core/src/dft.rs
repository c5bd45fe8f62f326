//! Unnormalized DFT conventions used throughout the crate.
//!
//! Forward: `ẑ[k] = Σ_n z[n] exp(-2πi k n / n_total)`.
//! Inverse: `z[n] = (1/n_total) Σ_k ẑ[k] exp(2πi k n / n_total)`.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::scalar::Real;

/// Forward and inverse plans for one transform length.
#[derive(Clone)]
pub struct DftPlan<T: Real> {
    len: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> std::fmt::Debug for DftPlan<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DftPlan").field("len", &self.len).finish()
    }
}

impl<T: Real> DftPlan<T> {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn forward_real(&self, z: &[T]) -> Vec<Complex<T>> {
        assert_eq!(z.len(), self.len);
        let mut buf: Vec<Complex<T>> = z.iter().map(|&x| Complex::new(x, T::zero())).collect();
        self.forward.process(&mut buf);
        buf
    }

    pub fn forward_in_place(&self, buf: &mut [Complex<T>]) {
        self.forward.process(buf);
    }

    /// Normalized inverse, in place.
    pub fn inverse_in_place(&self, buf: &mut [Complex<T>]) {
        self.inverse.process(buf);
        let scale = T::one() / T::of_usize(self.len);
        for v in buf.iter_mut() {
            *v = *v * scale;
        }
    }

    /// Normalized inverse keeping the real part.
    pub fn inverse_real(&self, spectrum: &[Complex<T>]) -> Vec<T> {
        let mut buf = spectrum.to_vec();
        self.inverse_in_place(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// `c[s] = Σ_n a[n] b[(n + s) mod len]` from precomputed spectra.
    pub fn cross_correlation_from_spectra(
        &self,
        a_hat: &[Complex<T>],
        b_hat: &[Complex<T>],
    ) -> Vec<T> {
        let mut buf: Vec<Complex<T>> = a_hat.iter().zip(b_hat).map(|(a, b)| a.conj() * b).collect();
        self.inverse_in_place(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }
}

pub fn dft<T: Real>(z: &[T]) -> Vec<Complex<T>> {
    if z.is_empty() {
        return Vec::new();
    }
    DftPlan::new(z.len()).forward_real(z)
}

pub fn dft_complex<T: Real>(z: &[Complex<T>]) -> Vec<Complex<T>> {
    let mut buf = z.to_vec();
    if !buf.is_empty() {
        DftPlan::new(buf.len()).forward_in_place(&mut buf);
    }
    buf
}

pub fn idft<T: Real>(spectrum: &[Complex<T>]) -> Vec<Complex<T>> {
    let mut buf = spectrum.to_vec();
    if !buf.is_empty() {
        DftPlan::new(buf.len()).inverse_in_place(&mut buf);
    }
    buf
}

/// Inverse transform of a (conjugate-symmetric) spectrum, real part only.
pub fn idft_real<T: Real>(spectrum: &[Complex<T>]) -> Vec<T> {
    idft(spectrum).into_iter().map(|c| c.re).collect()
}

/// Cyclic cross-correlation `c[s] = Σ_n a[n] b[(n + s) mod n_total]`.
pub fn cross_correlation<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    assert_eq!(a.len(), b.len(), "cross-correlation needs equal lengths");
    if a.is_empty() {
        return Vec::new();
    }
    let plan = DftPlan::new(a.len());
    plan.cross_correlation_from_spectra(&plan.forward_real(a), &plan.forward_real(b))
}

/// Frequency index in `[-(n-1)/2, n/2]` for DFT bin `k`.
#[inline]
pub fn signed_frequency(k: usize, n: usize) -> i64 {
    let k = k as i64;
    let n = n as i64;
    if 2 * k > n {
        k - n
    } else {
        k
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_dft(z: &[f64]) -> Vec<Complex<f64>> {
        let n = z.len();
        (0..n)
            .map(|k| {
                z.iter()
                    .enumerate()
                    .map(|(j, &x)| {
                        let ang = -2.0 * std::f64::consts::PI * (k * j) as f64 / n as f64;
                        Complex::new(x * ang.cos(), x * ang.sin())
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn delta_and_constant() {
        let d = dft(&[1.0f64, 0.0, 0.0, 0.0]);
        assert!(d.iter().all(|c| (c.re - 1.0).abs() < 1e-15 && c.im.abs() < 1e-15));
        let c = dft(&[1.0f64; 4]);
        assert!((c[0].re - 4.0).abs() < 1e-15);
        assert!(c[1..].iter().all(|c| c.norm() < 1e-15));
    }

    #[test]
    fn matches_naive_and_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1usize, 2, 5, 12, 15, 64, 120] {
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fast = dft(&z);
            for (a, b) in fast.iter().zip(naive_dft(&z)) {
                assert!((a - b).norm() < 1e-10);
            }
            let back = idft_real(&fast);
            for (a, b) in back.iter().zip(&z) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn cross_correlation_matches_direct_sum() {
        let a = [1.0f64, 2.0, -1.0, 0.5, 3.0];
        let b = [0.0f64, 1.0, 4.0, -2.0, 1.0];
        let c = cross_correlation(&a, &b);
        for s in 0..5 {
            let direct: f64 = (0..5).map(|n| a[n] * b[(n + s) % 5]).sum();
            assert!((c[s] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn signed_frequency_wraps() {
        assert_eq!(signed_frequency(0, 8), 0);
        assert_eq!(signed_frequency(4, 8), 4);
        assert_eq!(signed_frequency(5, 8), -3);
        assert_eq!(signed_frequency(4, 7), -3);
    }
}
