//! Signals, the shift-and-sample observation model and batch generation.

use num_complex::Complex;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dft::{dft, idft_real, signed_frequency};
use crate::error::{MraError, Result};
use crate::linalg::DenseMatrix;
use crate::rng::stream_rng;
use crate::scalar::{norm_sq, Real};

/// High-resolution target `x ∈ ℝ^M`, optionally tagged with its bandlimit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighResSignal<T> {
    values: Vec<T>,
    bandlimit: Option<usize>,
}

impl<T: Real> HighResSignal<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(MraError::InvalidSignal);
        }
        Ok(Self {
            values,
            bandlimit: None,
        })
    }

    /// Tags the signal with bandlimit `b`, checking that all DFT coefficients
    /// with `|k| > b` vanish (relative to the signal norm).
    pub fn with_bandlimit(values: Vec<T>, b: usize) -> Result<Self> {
        let mut s = Self::new(values)?;
        let m = s.len();
        if 2 * b + 1 > m {
            return Err(MraError::InvalidParameter(format!(
                "bandlimit {b} needs M >= {}, got {m}",
                2 * b + 1
            )));
        }
        let spectrum = dft(&s.values);
        let scale = (norm_sq(&s.values) * T::of_usize(m)).sqrt().max(T::min_positive_value());
        let tol = T::of(1e-9).max(T::epsilon() * T::of(64.0));
        for (k, c) in spectrum.iter().enumerate() {
            if signed_frequency(k, m).unsigned_abs() as usize > b && c.norm() > tol * scale {
                return Err(MraError::InvalidParameter(format!(
                    "frequency {k} is nonzero beyond bandlimit {b}"
                )));
            }
        }
        s.bandlimit = Some(b);
        Ok(s)
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            values: vec![T::zero(); m.max(1)],
            bandlimit: None,
        }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn bandlimit(&self) -> Option<usize> {
        self.bandlimit
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm_sq(&self) -> T {
        norm_sq(&self.values)
    }

    pub fn mean(&self) -> T {
        self.values.iter().copied().sum::<T>() / T::of_usize(self.len())
    }

    /// Rescaled copy with `‖x‖² = M`; the zero signal is returned unchanged.
    pub fn normalized(&self) -> Self {
        let n2 = self.norm_sq();
        if n2 == T::zero() {
            return self.clone();
        }
        let scale = (T::of_usize(self.len()) / n2).sqrt();
        Self {
            values: self.values.iter().map(|&v| v * scale).collect(),
            bandlimit: self.bandlimit,
        }
    }

    pub fn shifted(&self, s: i64) -> Self {
        Self {
            values: circular_shift(&self.values, s),
            bandlimit: self.bandlimit,
        }
    }

    /// `SNR = ‖x‖² / (M σ²)`.
    pub fn snr(&self, sigma: T) -> T {
        self.norm_sq() / (T::of_usize(self.len()) * sigma * sigma)
    }

    /// Noise level giving the requested SNR for this signal.
    pub fn sigma_for_snr(&self, snr: T) -> T {
        (self.norm_sq() / (T::of_usize(self.len()) * snr)).sqrt()
    }
}

/// Dimensions and noise of the observation model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    /// Signal length.
    pub m: usize,
    /// Samples per observation.
    pub l: usize,
    /// Noise standard deviation.
    pub sigma: T,
    /// Number of observations.
    pub n: usize,
    pub seed: u64,
}

impl<T: Real> ModelParams<T> {
    pub fn new(m: usize, l: usize, sigma: T, n: usize, seed: u64) -> Result<Self> {
        let p = Self {
            m,
            l,
            sigma,
            n,
            seed,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.l == 0 || self.n == 0 {
            return Err(MraError::InvalidParameter(
                "M, L and N must be positive".into(),
            ));
        }
        if self.m % self.l != 0 {
            return Err(MraError::InvalidParameter(format!(
                "L = {} does not divide M = {}",
                self.l, self.m
            )));
        }
        if !(self.sigma >= T::zero()) || !self.sigma.is_finite() {
            return Err(MraError::InvalidParameter("sigma must be >= 0".into()));
        }
        Ok(())
    }

    /// Super-resolution factor `K = M / L`.
    pub fn k(&self) -> usize {
        self.m / self.l
    }
}

/// `N` noisy low-resolution observations, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBatch<T> {
    samples: Vec<T>,
    params: ModelParams<T>,
    true_shifts: Option<Vec<usize>>,
}

impl<T: Real> ObservationBatch<T> {
    pub fn new(
        rows: Vec<Vec<T>>,
        params: ModelParams<T>,
        true_shifts: Option<Vec<usize>>,
    ) -> Result<Self> {
        if rows.iter().any(|r| r.len() != params.l) {
            return Err(MraError::Dimension(format!(
                "every observation must have length L = {}",
                params.l
            )));
        }
        Self::from_flat(rows.concat(), params, true_shifts)
    }

    pub fn from_flat(
        samples: Vec<T>,
        mut params: ModelParams<T>,
        true_shifts: Option<Vec<usize>>,
    ) -> Result<Self> {
        if params.l == 0 || samples.len() % params.l != 0 {
            return Err(MraError::Dimension("samples are not a whole number of rows".into()));
        }
        let n = samples.len() / params.l;
        if n == 0 {
            return Err(MraError::EmptyBatch);
        }
        params.n = n;
        params.validate()?;
        if let Some(shifts) = &true_shifts {
            if shifts.len() != n || shifts.iter().any(|&s| s >= params.m) {
                return Err(MraError::Dimension(
                    "true shifts must have one entry in [0, M) per row".into(),
                ));
            }
        }
        Ok(Self {
            samples,
            params,
            true_shifts,
        })
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.n
    }

    pub fn is_empty(&self) -> bool {
        self.params.n == 0
    }

    pub fn sigma(&self) -> T {
        self.params.sigma
    }

    pub fn row(&self, i: usize) -> &[T] {
        let l = self.params.l;
        &self.samples[i * l..(i + 1) * l]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.samples.chunks_exact(self.params.l)
    }

    pub fn as_flat(&self) -> &[T] {
        &self.samples
    }

    pub fn true_shifts(&self) -> Option<&[usize]> {
        self.true_shifts.as_deref()
    }
}

/// `(R_s z)[n] = z[(n - s) mod len]`.
pub fn circular_shift<T: Copy>(z: &[T], s: i64) -> Vec<T> {
    let n = z.len();
    if n == 0 {
        return Vec::new();
    }
    let s = s.rem_euclid(n as i64) as usize;
    (0..n).map(|i| z[(i + n - s) % n]).collect()
}

/// Noiseless observation `P R_s x`: `y[ℓ] = x[(ℓK - s) mod M]`.
pub fn template<T: Real>(x: &[T], l: usize, s: usize) -> Vec<T> {
    let m = x.len();
    let k = m / l;
    let s = s % m;
    (0..l).map(|i| x[(i * k + m - s) % m]).collect()
}

fn check_dims<T: Real>(x: &HighResSignal<T>, params: &ModelParams<T>) -> Result<()> {
    params.validate()?;
    if x.len() != params.m {
        return Err(MraError::Dimension(format!(
            "signal has length {} but M = {}",
            x.len(),
            params.m
        )));
    }
    Ok(())
}

/// Draws one observation and its shift from `rng`.
pub fn sample_observation<T: Real, R: Rng + ?Sized>(
    x: &HighResSignal<T>,
    params: &ModelParams<T>,
    rng: &mut R,
) -> Result<(Vec<T>, usize)> {
    check_dims(x, params)?;
    let s = rng.random_range(0..params.m);
    Ok((noisy_template(x, params, s, rng), s))
}

fn noisy_template<T: Real, R: Rng + ?Sized>(
    x: &HighResSignal<T>,
    params: &ModelParams<T>,
    s: usize,
    rng: &mut R,
) -> Vec<T> {
    let mut y = template(x.values(), params.l, s);
    if params.sigma > T::zero() {
        for v in y.iter_mut() {
            *v += params.sigma * T::standard_normal(rng);
        }
    }
    y
}

/// `N` independent observations; row `i` uses stream `i` of `params.seed`.
pub fn generate_batch<T: Real>(
    x: &HighResSignal<T>,
    params: &ModelParams<T>,
) -> Result<ObservationBatch<T>> {
    check_dims(x, params)?;
    let draws: Vec<(Vec<T>, usize)> = (0..params.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(params.seed, i as u64);
            let s = rng.random_range(0..params.m);
            (noisy_template(x, params, s, &mut rng), s)
        })
        .collect();
    let mut samples = Vec::with_capacity(params.n * params.l);
    let mut shifts = Vec::with_capacity(params.n);
    for (row, s) in draws {
        samples.extend(row);
        shifts.push(s);
    }
    ObservationBatch::from_flat(samples, *params, Some(shifts))
}

/// Batch with prescribed shifts (noise still drawn from per-row streams).
pub fn generate_batch_with_shifts<T: Real>(
    x: &HighResSignal<T>,
    params: &ModelParams<T>,
    shifts: &[usize],
) -> Result<ObservationBatch<T>> {
    let mut params = *params;
    params.n = shifts.len();
    check_dims(x, &params)?;
    let rows: Vec<Vec<T>> = shifts
        .par_iter()
        .enumerate()
        .map(|(i, &s)| {
            let mut rng = stream_rng(params.seed, i as u64);
            noisy_template(x, &params, s % params.m, &mut rng)
        })
        .collect();
    let shifts = shifts.iter().map(|&s| s % params.m).collect();
    ObservationBatch::new(rows, params, Some(shifts))
}

/// Random real signal whose spectrum is supported on `|k| <= b`.
pub fn sample_bandlimited_signal<T: Real, R: Rng + ?Sized>(
    m: usize,
    b: usize,
    normalize: bool,
    rng: &mut R,
) -> Result<HighResSignal<T>> {
    if m == 0 || 2 * b + 1 > m {
        return Err(MraError::InvalidParameter(format!(
            "bandlimit {b} needs M >= {}, got M = {m}",
            2 * b + 1
        )));
    }
    let mut spectrum = vec![Complex::new(T::zero(), T::zero()); m];
    spectrum[0] = Complex::new(T::standard_normal(rng), T::zero());
    for k in 1..=b {
        let c = Complex::new(T::standard_normal(rng), T::standard_normal(rng));
        spectrum[k] = c;
        spectrum[m - k] = c.conj();
    }
    let values = idft_real(&spectrum);
    let mut x = HighResSignal {
        values,
        bandlimit: Some(b),
    };
    if normalize {
        x = x.normalized();
    }
    Ok(x)
}

/// Zeroes every DFT coefficient with `|k| > cutoff`.
pub fn low_pass<T: Real>(x: &[T], cutoff: usize) -> Vec<T> {
    let m = x.len();
    let mut spectrum = dft(x);
    for (k, c) in spectrum.iter_mut().enumerate() {
        if signed_frequency(k, m).unsigned_abs() as usize > cutoff {
            *c = Complex::new(T::zero(), T::zero());
        }
    }
    idft_real(&spectrum)
}

/// Orthonormal real basis (columns) of the signals with bandlimit `b`:
/// the constant, then `cos` and `sin` pairs for `k = 1..=b`.
pub fn bandlimit_basis<T: Real>(m: usize, b: usize) -> Result<DenseMatrix<T>> {
    if 2 * b + 1 > m {
        return Err(MraError::InvalidParameter(format!(
            "bandlimit {b} needs M >= {}",
            2 * b + 1
        )));
    }
    let mf = T::of_usize(m);
    let c0 = T::one() / mf.sqrt();
    let c1 = (T::of(2.0) / mf).sqrt();
    Ok(DenseMatrix::from_fn(m, 2 * b + 1, |n, col| {
        if col == 0 {
            return c0;
        }
        let k = (col + 1) / 2;
        let ang = T::of(2.0) * T::PI() * T::of_usize(k * n % m) / mf;
        if col % 2 == 1 {
            c1 * ang.cos()
        } else {
            c1 * ang.sin()
        }
    }))
}
