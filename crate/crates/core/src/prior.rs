//! Zero-mean Gaussian priors, stored through their precision `Σ⁻¹`.

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dft::{dft, idft_real, DftPlan};
use crate::error::{MraError, Result};
use crate::linalg::{Cholesky, DenseMatrix};
use crate::scalar::{abs, Real};
use crate::signal::HighResSignal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorSpec<T> {
    /// Circulant covariance with eigenvalue `power_profile[k]` at DFT bin `k`
    /// (the expected power spectrum, up to the factor `M`). The profile must
    /// satisfy `profile[k] == profile[M-k]` so that the covariance is real.
    Circulant { power_profile: Vec<T> },
    /// Dense symmetric positive-definite precision matrix.
    Dense { precision: DenseMatrix<T> },
}

impl<T: Real> PriorSpec<T> {
    pub fn circulant(power_profile: Vec<T>) -> Result<Self> {
        let p = PriorSpec::Circulant { power_profile };
        p.validate()?;
        Ok(p)
    }

    pub fn dense(precision: DenseMatrix<T>) -> Result<Self> {
        let p = PriorSpec::Dense { precision };
        p.validate()?;
        Ok(p)
    }

    /// `Σ = variance · I`.
    pub fn white(m: usize, variance: T) -> Result<Self> {
        Self::circulant(vec![variance; m])
    }

    /// Power spectrum decaying as `1/f`: eigenvalue `c / max(1, f)` at
    /// frequency `f = min(k, M - k)`, with `c` fixed so that `E‖x‖² = M`.
    pub fn one_over_f(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(MraError::InvalidParameter("M must be positive".into()));
        }
        let shape: Vec<T> = (0..m)
            .map(|k| T::one() / T::of_usize(k.min(m - k).max(1)))
            .collect();
        let total: T = shape.iter().copied().sum();
        let c = T::of_usize(m) / total;
        Self::circulant(shape.into_iter().map(|v| v * c).collect())
    }

    /// Flat power on `|k| <= b` with `E‖x‖² = M`, and `floor` times that
    /// level outside the band.
    pub fn flat_band(m: usize, b: usize, floor: T) -> Result<Self> {
        if 2 * b + 1 > m {
            return Err(MraError::InvalidParameter(format!(
                "bandlimit {b} needs M >= {}",
                2 * b + 1
            )));
        }
        let level = T::of_usize(m) / T::of_usize(2 * b + 1);
        let profile = (0..m)
            .map(|k| {
                if k.min(m - k) <= b {
                    level
                } else {
                    level * floor
                }
            })
            .collect();
        Self::circulant(profile)
    }

    pub fn dim(&self) -> usize {
        match self {
            PriorSpec::Circulant { power_profile } => power_profile.len(),
            PriorSpec::Dense { precision } => precision.rows(),
        }
    }

    pub fn is_circulant(&self) -> bool {
        matches!(self, PriorSpec::Circulant { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PriorSpec::Circulant { power_profile } => {
                let m = power_profile.len();
                if m == 0 {
                    return Err(MraError::InvalidParameter("empty power profile".into()));
                }
                for (k, &v) in power_profile.iter().enumerate() {
                    if !(v > T::zero()) || !v.is_finite() {
                        return Err(MraError::NotPositiveDefinite(format!(
                            "power profile entry {k} is not strictly positive"
                        )));
                    }
                    let mirror = power_profile[(m - k) % m];
                    if abs(v - mirror) > T::of(1e-12) * v.max(mirror) {
                        return Err(MraError::InvalidParameter(format!(
                            "power profile is not conjugate-symmetric at bin {k}"
                        )));
                    }
                }
                Ok(())
            }
            PriorSpec::Dense { precision } => {
                if !precision.is_square() || precision.rows() == 0 {
                    return Err(MraError::Dimension("precision must be square".into()));
                }
                let scale = precision.max_abs().max(T::one());
                if precision.asymmetry() > T::of(1e-12) * scale {
                    return Err(MraError::InvalidParameter("precision is not symmetric".into()));
                }
                Cholesky::new(precision).map(|_| ())
            }
        }
    }

    /// Dense `Σ⁻¹`.
    pub fn precision_matrix(&self) -> DenseMatrix<T> {
        match self {
            PriorSpec::Circulant { power_profile } => {
                let m = power_profile.len();
                let inv: Vec<Complex<T>> = power_profile
                    .iter()
                    .map(|&v| Complex::new(T::one() / v, T::zero()))
                    .collect();
                // first column of W diag(1/v) W*
                let col = idft_real(&inv);
                DenseMatrix::from_fn(m, m, |i, j| col[(i + m - j) % m])
            }
            PriorSpec::Dense { precision } => precision.clone(),
        }
    }

    /// `xᵀ Σ⁻¹ x`; circulant priors use `(1/M) Σ_k |x̂[k]|² / v_k`.
    pub fn quadratic_form(&self, x: &[T]) -> Result<T> {
        if x.len() != self.dim() {
            return Err(MraError::Dimension(format!(
                "signal length {} vs prior dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(match self {
            PriorSpec::Circulant { power_profile } => {
                let spectrum = dft(x);
                let s: T = spectrum
                    .iter()
                    .zip(power_profile)
                    .map(|(c, &v)| c.norm_sqr() / v)
                    .sum();
                s / T::of_usize(x.len())
            }
            PriorSpec::Dense { precision } => precision.quadratic_form(x),
        })
    }

    /// Draws `x ~ N(0, Σ)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<HighResSignal<T>> {
        let m = self.dim();
        let white: Vec<T> = (0..m).map(|_| T::standard_normal(rng)).collect();
        let values = match self {
            PriorSpec::Circulant { power_profile } => {
                // Filtering white noise gives conjugate-symmetric Gaussian
                // coefficients with E|x̂[k]|² = M v_k.
                let plan = DftPlan::new(m);
                let mut spec = plan.forward_real(&white);
                for (c, &v) in spec.iter_mut().zip(power_profile) {
                    *c = *c * v.sqrt();
                }
                plan.inverse_real(&spec)
            }
            PriorSpec::Dense { precision } => {
                // Σ⁻¹ = C Cᵀ  =>  x = C⁻ᵀ g has covariance Σ.
                Cholesky::new(precision)?.solve_upper(&white)
            }
        };
        HighResSignal::new(values)
    }
}

/// Samples from the prior of dimension `m`, optionally rescaled to `‖x‖² = M`.
pub fn sample_prior<T: Real, R: Rng + ?Sized>(
    prior: &PriorSpec<T>,
    m: usize,
    normalize: bool,
    rng: &mut R,
) -> Result<HighResSignal<T>> {
    if prior.dim() != m {
        return Err(MraError::Dimension(format!(
            "prior dimension {} vs M = {m}",
            prior.dim()
        )));
    }
    prior.validate()?;
    let x = prior.sample(rng)?;
    Ok(if normalize { x.normalized() } else { x })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::signal::circular_shift;

    fn empirical_covariance(prior: &PriorSpec<f64>, draws: usize, seed: u64) -> (Vec<f64>, usize) {
        let m = prior.dim();
        let mut rng = stream_rng(seed, 0);
        let mut cov = vec![0.0; m * m];
        for _ in 0..draws {
            let x = sample_prior(prior, m, false, &mut rng).unwrap();
            let v = x.values();
            for i in 0..m {
                for j in 0..m {
                    cov[i * m + j] += v[i] * v[j];
                }
            }
        }
        for c in cov.iter_mut() {
            *c /= draws as f64;
        }
        (cov, m)
    }

    fn assert_identity_within_3se(cov: &[f64], m: usize, draws: usize) {
        // For standard normals: var(x_i^2) = 2, var(x_i x_j) = 1.
        for i in 0..m {
            for j in 0..m {
                let expected = if i == j { 1.0 } else { 0.0 };
                let se = if i == j { (2.0 / draws as f64).sqrt() } else { (1.0 / draws as f64).sqrt() };
                let got = cov[i * m + j];
                assert!((got - expected).abs() < 3.0 * se, "({i},{j}) = {got}");
            }
        }
    }

    #[test]
    fn white_circulant_sampler_has_identity_covariance() {
        let prior = PriorSpec::white(5, 1.0).unwrap();
        let (cov, m) = empirical_covariance(&prior, 10_000, 21);
        assert_identity_within_3se(&cov, m, 10_000);
    }

    #[test]
    fn identity_precision_sampler_has_identity_covariance() {
        let prior = PriorSpec::dense(DenseMatrix::identity(5)).unwrap();
        let (cov, m) = empirical_covariance(&prior, 10_000, 22);
        assert_identity_within_3se(&cov, m, 10_000);
    }

    #[test]
    fn one_over_f_spectrum_ratios() {
        let m = 64;
        let prior = PriorSpec::<f64>::one_over_f(m).unwrap();
        if let PriorSpec::Circulant { power_profile } = &prior {
            let total: f64 = power_profile.iter().sum();
            assert!((total - m as f64).abs() < 1e-10);
        }
        let mut rng = stream_rng(5, 0);
        let mut power = vec![0.0; m];
        let draws = 10_000;
        for _ in 0..draws {
            let x = sample_prior(&prior, m, false, &mut rng).unwrap();
            for (p, c) in power.iter_mut().zip(dft(x.values())) {
                *p += c.norm_sqr();
            }
        }
        for f in [1usize, 2, 4, 8, 16] {
            let ratio = power[f] / power[2 * f];
            assert!((ratio - 2.0).abs() < 0.2, "f={f} ratio={ratio}");
        }
    }

    #[test]
    fn circulant_precision_matches_fourier_quadratic_form() {
        let prior = PriorSpec::<f64>::one_over_f(9).unwrap();
        let p = prior.precision_matrix();
        assert!(p.asymmetry() < 1e-12);
        let x: Vec<f64> = (0..9).map(|i| (i as f64 * 0.7).cos() + 0.1 * i as f64).collect();
        let direct = p.quadratic_form(&x);
        let fast = prior.quadratic_form(&x).unwrap();
        assert!((direct - fast).abs() < 1e-10 * direct);
        for s in 0..9 {
            let q = prior.quadratic_form(&circular_shift(&x, s)).unwrap();
            assert!((q - fast).abs() <= 1e-10 * fast);
        }
    }

    #[test]
    fn quadratic_form_trivial_cases() {
        let prior = PriorSpec::<f64>::dense(DenseMatrix::identity(4)).unwrap();
        assert_eq!(prior.quadratic_form(&[0.0; 4]).unwrap(), 0.0);
        assert!((prior.quadratic_form(&[1.0, 2.0, -1.0, 0.5]).unwrap() - 6.25).abs() < 1e-14);
        assert!(matches!(
            prior.quadratic_form(&[1.0; 3]),
            Err(MraError::Dimension(_))
        ));
    }

    #[test]
    fn invalid_priors_are_rejected() {
        assert!(PriorSpec::circulant(vec![1.0, 0.0, 1.0]).is_err());
        assert!(PriorSpec::circulant(vec![1.0, 2.0, 3.0]).is_err());
        let indefinite = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(
            PriorSpec::dense(indefinite),
            Err(MraError::NotPositiveDefinite(_))
        ));
        let asym = DenseMatrix::from_rows(&[vec![2.0, 0.1], vec![0.0, 2.0]]).unwrap();
        assert!(PriorSpec::dense(asym).is_err());
    }

    #[test]
    fn dense_sampler_covariance_inverts_precision() {
        let p = DenseMatrix::from_rows(&[
            vec![2.0, -0.5, 0.0],
            vec![-0.5, 1.5, 0.3],
            vec![0.0, 0.3, 1.0],
        ])
        .unwrap();
        let prior = PriorSpec::dense(p.clone()).unwrap();
        let (cov, m) = empirical_covariance(&prior, 20_000, 8);
        let cov = DenseMatrix::from_row_major(m, m, cov).unwrap();
        let prod = cov.matmul(&p);
        assert!(prod.distance(&DenseMatrix::identity(3)) < 0.08);
    }
}
