//! Recovery error up to a global cyclic shift.

use serde::{Deserialize, Serialize};

use crate::dft::{cross_correlation, dft};
use crate::error::{MraError, Result};
use crate::scalar::Real;
use crate::signal::{circular_shift, HighResSignal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alignment<T> {
    /// Shift `ℓ` applied to the estimate (`R_ℓ x_est`).
    pub shift: usize,
    pub relative_error: T,
}

/// `min_ℓ ‖R_ℓ x_est − x‖ / ‖x‖`, with the minimizing `ℓ` (smallest on ties).
pub fn align<T: Real>(estimate: &HighResSignal<T>, truth: &HighResSignal<T>) -> Result<Alignment<T>> {
    if estimate.len() != truth.len() {
        return Err(MraError::Dimension(format!(
            "estimate length {} vs truth length {}",
            estimate.len(),
            truth.len()
        )));
    }
    let tn = truth.norm_sq();
    if tn == T::zero() {
        return Err(MraError::InvalidSignal);
    }
    // corr[ℓ] = Σ_n x_est[n] x[n + ℓ] = ⟨R_ℓ x_est, x⟩
    let corr = cross_correlation(estimate.values(), truth.values());
    let (shift, _) = corr
        .iter()
        .enumerate()
        .fold((0, corr[0]), |(bs, bv), (s, &v)| if v > bv { (s, v) } else { (bs, bv) });
    // The cross term comes from an FFT; recompute the winner exactly.
    let diff = circular_shift(estimate.values(), shift as i64)
        .iter()
        .zip(truth.values())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<T>();
    Ok(Alignment {
        shift,
        relative_error: (diff / tn).sqrt(),
    })
}

pub fn relative_error<T: Real>(estimate: &HighResSignal<T>, truth: &HighResSignal<T>) -> Result<T> {
    Ok(align(estimate, truth)?.relative_error)
}

/// Magnitude threshold below which a truth coefficient has no relative error.
pub const FREQUENCY_FLOOR: f64 = 1e-12;

/// `|x̂_est[k] − x̂[k]| / |x̂[k]|` for `k = 0..=M/2`, after alignment;
/// `None` where `|x̂[k]| < 1e−12`.
pub fn per_frequency_error<T: Real>(
    estimate: &HighResSignal<T>,
    truth: &HighResSignal<T>,
) -> Result<Vec<Option<T>>> {
    let a = align(estimate, truth)?;
    let eh = dft(&circular_shift(estimate.values(), a.shift as i64));
    let th = dft(truth.values());
    Ok((0..=truth.len() / 2)
        .map(|k| {
            let mag = th[k].norm();
            (mag >= T::of(FREQUENCY_FLOOR)).then(|| (eh[k] - th[k]).norm() / mag)
        })
        .collect())
}

/// Mean of the defined entries over `k > cutoff`.
pub fn mean_error_above<T: Real>(errors: &[Option<T>], cutoff: usize) -> Option<T> {
    let vals: Vec<T> = errors.iter().skip(cutoff + 1).filter_map(|&e| e).collect();
    (!vals.is_empty()).then(|| vals.iter().copied().sum::<T>() / T::of_usize(vals.len()))
}

pub fn median<T: Real>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / T::of(2.0)
    })
}

/// Least-squares slope of `log10(errors)` against `log10(snrs)`.
pub fn log_log_slope<T: Real>(snrs: &[T], errors: &[T]) -> Option<T> {
    if snrs.len() != errors.len() || snrs.len() < 2 {
        return None;
    }
    let xs: Vec<T> = snrs.iter().map(|v| v.log10()).collect();
    let ys: Vec<T> = errors.iter().map(|v| v.log10()).collect();
    let n = T::of_usize(xs.len());
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let sxy: T = xs.iter().zip(&ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let sxx: T = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    (sxx > T::zero()).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::signal::{low_pass, sample_bandlimited_signal};

    fn signal(m: usize, seed: u64) -> HighResSignal<f64> {
        let mut rng = stream_rng(seed, 0);
        HighResSignal::new((0..m).map(|_| f64::standard_normal(&mut rng)).collect()).unwrap()
    }

    #[test]
    fn relative_error_examples() {
        let x = signal(20, 1);
        assert_eq!(relative_error(&x, &x).unwrap(), 0.0);
        let shifted = x.shifted(7);
        assert!(relative_error(&shifted, &x).unwrap() < 1e-15);
        assert_eq!(align(&shifted, &x).unwrap().shift, 13);
        let zero = HighResSignal::zeros(20);
        assert!((relative_error(&zero, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!(relative_error(&x, &zero).is_err());
    }

    #[test]
    fn relative_error_matches_brute_force() {
        for seed in 0..10 {
            let x = signal(13, seed);
            let e = signal(13, seed + 100);
            let brute = (0..13)
                .map(|s| {
                    let d: f64 = circular_shift(e.values(), s)
                        .iter()
                        .zip(x.values())
                        .map(|(a, b)| (a - b).powi(2))
                        .sum();
                    (d / x.norm_sq()).sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            assert!((relative_error(&e, &x).unwrap() - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn per_frequency_examples() {
        let x = signal(16, 4);
        let errs = per_frequency_error(&x, &x).unwrap();
        assert_eq!(errs.len(), 9);
        assert!(errs.iter().all(|e| e.unwrap() < 1e-12));

        let mut spec = dft(x.values());
        spec[3] = num_complex::Complex::new(0.0, 0.0);
        spec[13] = num_complex::Complex::new(0.0, 0.0);
        let dropped = HighResSignal::new(crate::dft::idft_real(&spec)).unwrap();
        let errs = per_frequency_error(&dropped, &x).unwrap();
        for (k, e) in errs.iter().enumerate() {
            let expect = if k == 3 { 1.0 } else { 0.0 };
            assert!((e.unwrap() - expect).abs() < 1e-9, "k={k}");
        }
    }

    #[test]
    fn low_passed_estimate_loses_high_frequencies() {
        let (m, l) = (60usize, 10usize);
        let mut rng = stream_rng(3, 0);
        let x: HighResSignal<f64> = sample_bandlimited_signal(m, 12, true, &mut rng).unwrap();
        let lp = HighResSignal::new(low_pass(x.values(), l / 2)).unwrap();
        let errs = per_frequency_error(&lp, &x).unwrap();
        for (k, e) in errs.iter().enumerate() {
            match (k, e) {
                (k, Some(e)) if k <= l / 2 => assert!(*e < 1e-9),
                (k, Some(e)) if k <= 12 => assert!((e - 1.0).abs() < 1e-9),
                (_, e) => assert!(e.is_none()),
            }
        }
        assert!((mean_error_above(&errs, l / 2).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn slope_and_median() {
        assert!((log_log_slope(&[1.0f64, 100.0], &[1.0, 0.1]).unwrap() + 0.5).abs() < 1e-15);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median::<f64>(&[]), None);
    }
}
