//! Shift-invariant moments: mean, power spectrum and bispectrum, their
//! mixtures over sub-signals, empirical estimates and noise debiasing.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dft::DftPlan;
use crate::error::{MraError, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::{CompensatedSum, Real};
use crate::signal::ObservationBatch;

/// Time-domain auto-correlation of order `q`.
#[derive(Debug, Clone, PartialEq)]
pub enum Autocorrelation<T> {
    /// `Σ_i z[i]`
    First(T),
    /// `Σ_i z[i] z[i+ℓ]`
    Second(Vec<T>),
    /// `Σ_i z[i] z[i+ℓ₁] z[i+ℓ₂]`
    Third(DenseMatrix<T>),
}

pub fn autocorrelation<T: Real>(z: &[T], q: usize) -> Result<Autocorrelation<T>> {
    let n = z.len();
    match q {
        1 => Ok(Autocorrelation::First(z.iter().copied().sum())),
        2 => Ok(Autocorrelation::Second(
            (0..n)
                .map(|l| (0..n).map(|i| z[i] * z[(i + l) % n]).sum())
                .collect(),
        )),
        3 => Ok(Autocorrelation::Third(DenseMatrix::from_fn(n, n, |l1, l2| {
            (0..n)
                .map(|i| z[i] * z[(i + l1) % n] * z[(i + l2) % n])
                .sum()
        }))),
        _ => Err(MraError::InvalidParameter(format!(
            "auto-correlation order {q} is not supported (1, 2 or 3)"
        ))),
    }
}

/// Mean (`ẑ[0]`), power spectrum `|ẑ[k]|²` and bispectrum
/// `ẑ[k₁] ẑ[k₂] ẑ[-k₁-k₂]` of a length-`L` signal or mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    into = "TripleRecord<T>",
    try_from = "TripleRecord<T>",
    bound = "T: Real + Serialize + for<'a> Deserialize<'a>"
)]
pub struct InvariantTriple<T> {
    pub mean: T,
    pub power_spectrum: Vec<T>,
    /// Row-major `L × L`, entry `(k₁, k₂)` at `k₁ * L + k₂`.
    pub bispectrum: Vec<Complex<T>>,
}

#[derive(Serialize, Deserialize)]
struct TripleRecord<T> {
    l: usize,
    mean: T,
    power_spectrum: Vec<T>,
    bispectrum_re: Vec<Vec<T>>,
    bispectrum_im: Vec<Vec<T>>,
}

impl<T: Real> From<InvariantTriple<T>> for TripleRecord<T> {
    fn from(t: InvariantTriple<T>) -> Self {
        let l = t.len();
        let part = |f: fn(&Complex<T>) -> T| -> Vec<Vec<T>> {
            t.bispectrum.chunks(l.max(1)).map(|r| r.iter().map(f).collect()).collect()
        };
        Self {
            l,
            mean: t.mean,
            bispectrum_re: part(|c| c.re),
            bispectrum_im: part(|c| c.im),
            power_spectrum: t.power_spectrum,
        }
    }
}

impl<T: Real> TryFrom<TripleRecord<T>> for InvariantTriple<T> {
    type Error = MraError;

    fn try_from(r: TripleRecord<T>) -> Result<Self> {
        let l = r.l;
        let square = |m: &Vec<Vec<T>>| m.len() == l && m.iter().all(|row| row.len() == l);
        if r.power_spectrum.len() != l || !square(&r.bispectrum_re) || !square(&r.bispectrum_im) {
            return Err(MraError::Dimension("invariant record has inconsistent sizes".into()));
        }
        let bispectrum = r
            .bispectrum_re
            .iter()
            .flatten()
            .zip(r.bispectrum_im.iter().flatten())
            .map(|(&re, &im)| Complex::new(re, im))
            .collect();
        Ok(Self {
            mean: r.mean,
            power_spectrum: r.power_spectrum,
            bispectrum,
        })
    }
}

impl<T: Real> InvariantTriple<T> {
    pub fn zeros(l: usize) -> Self {
        Self {
            mean: T::zero(),
            power_spectrum: vec![T::zero(); l],
            bispectrum: vec![Complex::new(T::zero(), T::zero()); l * l],
        }
    }

    /// Signal length `L`.
    pub fn len(&self) -> usize {
        self.power_spectrum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power_spectrum.is_empty()
    }

    #[inline]
    pub fn bispectrum_at(&self, k1: usize, k2: usize) -> Complex<T> {
        self.bispectrum[k1 * self.len() + k2]
    }

    /// Real coordinates: mean, power spectrum, bispectrum real parts, then
    /// bispectrum imaginary parts.
    pub fn to_real_coordinates(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(1 + self.len() + 2 * self.bispectrum.len());
        out.push(self.mean);
        out.extend_from_slice(&self.power_spectrum);
        out.extend(self.bispectrum.iter().map(|c| c.re));
        out.extend(self.bispectrum.iter().map(|c| c.im));
        out
    }

    pub fn real_dimension(l: usize) -> usize {
        1 + l + 2 * l * l
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self {
            mean: self.mean * factor,
            power_spectrum: self.power_spectrum.iter().map(|&p| p * factor).collect(),
            bispectrum: self.bispectrum.iter().map(|&b| b * factor).collect(),
        }
    }

    fn add_assign(&mut self, other: &Self) {
        self.mean += other.mean;
        for (a, &b) in self.power_spectrum.iter_mut().zip(&other.power_spectrum) {
            *a += b;
        }
        for (a, &b) in self.bispectrum.iter_mut().zip(&other.bispectrum) {
            *a = *a + b;
        }
    }
}

/// Invariants of a spectrum `ẑ`.
pub fn invariants_from_spectrum<T: Real>(zh: &[Complex<T>]) -> InvariantTriple<T> {
    let l = zh.len();
    let mut bispectrum = Vec::with_capacity(l * l);
    for k1 in 0..l {
        for k2 in 0..l {
            let k3 = (2 * l - k1 - k2) % l;
            bispectrum.push(zh[k1] * zh[k2] * zh[k3]);
        }
    }
    InvariantTriple {
        mean: zh.first().map_or(T::zero(), |c| c.re),
        power_spectrum: zh.iter().map(|c| c.norm_sqr()).collect(),
        bispectrum,
    }
}

pub fn fourier_invariants<T: Real>(z: &[T]) -> InvariantTriple<T> {
    if z.is_empty() {
        return InvariantTriple::zeros(0);
    }
    invariants_from_spectrum(&DftPlan::new(z.len()).forward_real(z))
}

/// Average of the invariants of `K` equal-length sub-signals.
pub fn mixed_invariants<T: Real>(subs: &[Vec<T>]) -> Result<InvariantTriple<T>> {
    let l = subs
        .first()
        .map(Vec::len)
        .ok_or_else(|| MraError::InvalidParameter("no sub-signals".into()))?;
    if subs.iter().any(|s| s.len() != l) {
        return Err(MraError::Dimension("sub-signals have different lengths".into()));
    }
    let plan = DftPlan::new(l);
    let mut acc = InvariantTriple::zeros(l);
    for s in subs {
        acc.add_assign(&invariants_from_spectrum(&plan.forward_real(s)));
    }
    Ok(acc.scaled(T::one() / T::of_usize(subs.len())))
}

/// Streaming, compensated sum of per-observation invariants.
#[derive(Debug, Clone)]
pub struct InvariantAccumulator<T> {
    l: usize,
    count: usize,
    mean: CompensatedSum<T>,
    power: Vec<CompensatedSum<T>>,
    bis_re: Vec<CompensatedSum<T>>,
    bis_im: Vec<CompensatedSum<T>>,
}

impl<T: Real> InvariantAccumulator<T> {
    pub fn new(l: usize) -> Self {
        Self {
            l,
            count: 0,
            mean: CompensatedSum::new(),
            power: vec![CompensatedSum::new(); l],
            bis_re: vec![CompensatedSum::new(); l * l],
            bis_im: vec![CompensatedSum::new(); l * l],
        }
    }

    pub fn push_spectrum(&mut self, zh: &[Complex<T>]) {
        let l = self.l;
        self.count += 1;
        self.mean.add(zh[0].re);
        for (p, c) in self.power.iter_mut().zip(zh) {
            p.add(c.norm_sqr());
        }
        for k1 in 0..l {
            for k2 in 0..l {
                let b = zh[k1] * zh[k2] * zh[(2 * l - k1 - k2) % l];
                self.bis_re[k1 * l + k2].add(b.re);
                self.bis_im[k1 * l + k2].add(b.im);
            }
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.count += other.count;
        self.mean.merge(&other.mean);
        for (a, b) in self.power.iter_mut().zip(&other.power) {
            a.merge(b);
        }
        for (a, b) in self.bis_re.iter_mut().zip(&other.bis_re) {
            a.merge(b);
        }
        for (a, b) in self.bis_im.iter_mut().zip(&other.bis_im) {
            a.merge(b);
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn average(&self) -> Result<InvariantTriple<T>> {
        if self.count == 0 {
            return Err(MraError::EmptyBatch);
        }
        let inv = T::one() / T::of_usize(self.count);
        Ok(InvariantTriple {
            mean: self.mean.value() * inv,
            power_spectrum: self.power.iter().map(|p| p.value() * inv).collect(),
            bispectrum: self
                .bis_re
                .iter()
                .zip(&self.bis_im)
                .map(|(r, i)| Complex::new(r.value() * inv, i.value() * inv))
                .collect(),
        })
    }
}

const ACCUMULATION_CHUNK: usize = 2048;

/// Sample average of per-observation invariants (no debiasing).
///
/// Rows are reduced in fixed chunks merged in order, so the result does not
/// depend on the thread count.
pub fn empirical_invariants<T: Real>(batch: &ObservationBatch<T>) -> Result<InvariantTriple<T>> {
    if batch.is_empty() {
        return Err(MraError::EmptyBatch);
    }
    let l = batch.params().l;
    let plan = DftPlan::new(l);
    let partials: Vec<InvariantAccumulator<T>> = batch
        .as_flat()
        .par_chunks(ACCUMULATION_CHUNK * l)
        .map(|chunk| {
            let mut acc = InvariantAccumulator::new(l);
            for row in chunk.chunks_exact(l) {
                acc.push_spectrum(&plan.forward_real(row));
            }
            acc
        })
        .collect();
    let mut total = InvariantAccumulator::new(l);
    for p in &partials {
        total.merge(p);
    }
    total.average()
}

/// Additive noise bias of the empirical invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasTerms<T> {
    /// Power-spectrum bias `σ² L` at every frequency.
    pub b2: Vec<T>,
    /// Bispectrum bias, real and row-major `L × L`.
    pub b3: DenseMatrix<T>,
    /// Signal average used in `b3`.
    pub xbar: T,
}

/// Support pattern of the bispectrum bias: 3 at `(0,0)`, 1 on the rest of
/// row 0, column 0 and the anti-diagonal `k₁ + k₂ ≡ 0 (mod L)`.
pub fn bispectrum_bias_pattern<T: Real>(l: usize) -> DenseMatrix<T> {
    DenseMatrix::from_fn(l, l, |a, b| {
        let hits = usize::from(a == 0) + usize::from(b == 0) + usize::from((a + b) % l == 0);
        T::of_usize(hits)
    })
}

/// Support pattern of the time-domain third auto-correlation bias: 3 at
/// `(0,0)`, 1 on the rest of row 0, column 0 and the diagonal.
pub fn autocorrelation_bias_pattern<T: Real>(l: usize) -> DenseMatrix<T> {
    DenseMatrix::from_fn(l, l, |a, b| {
        let hits = usize::from(a == 0) + usize::from(b == 0) + usize::from(a == b);
        T::of_usize(hits)
    })
}

impl<T: Real> BiasTerms<T> {
    /// Bias of the Fourier invariants for noise `sigma` and signal average `xbar`.
    pub fn new(sigma: T, l: usize, xbar: T) -> Self {
        let s2 = sigma * sigma;
        let lf = T::of_usize(l);
        let scale = xbar * s2 * lf * lf;
        let pattern = bispectrum_bias_pattern::<T>(l);
        Self {
            b2: vec![s2 * lf; l],
            b3: DenseMatrix::from_fn(l, l, |a, b| scale * pattern[(a, b)]),
            xbar,
        }
    }
}

/// Bias of the time-domain third auto-correlation: `x̄ σ² L` times the
/// diagonal pattern.
pub fn autocorrelation_third_order_bias<T: Real>(sigma: T, l: usize, xbar: T) -> DenseMatrix<T> {
    let scale = xbar * sigma * sigma * T::of_usize(l);
    let pattern = autocorrelation_bias_pattern::<T>(l);
    DenseMatrix::from_fn(l, l, |a, b| scale * pattern[(a, b)])
}

/// Removes the noise bias, estimating `x̄` as `mean / L`.
pub fn debias<T: Real>(triple: &InvariantTriple<T>, sigma: T, l: usize) -> Result<InvariantTriple<T>> {
    if triple.len() != l {
        return Err(MraError::Dimension(format!(
            "triple has L = {} but {l} was given",
            triple.len()
        )));
    }
    if !(sigma >= T::zero()) {
        return Err(MraError::InvalidParameter("sigma must be >= 0".into()));
    }
    if l == 0 {
        return Ok(triple.clone());
    }
    let bias = BiasTerms::new(sigma, l, triple.mean / T::of_usize(l));
    let mut out = triple.clone();
    for (p, &b) in out.power_spectrum.iter_mut().zip(&bias.b2) {
        *p -= b;
    }
    for (i, c) in out.bispectrum.iter_mut().enumerate() {
        c.re -= bias.b3.as_slice()[i];
    }
    Ok(out)
}

/// Weighted sum of squared differences of the three invariants.
pub fn invariant_distance<T: Real>(
    a: &InvariantTriple<T>,
    b: &InvariantTriple<T>,
    weights: [T; 3],
) -> Result<T> {
    if a.len() != b.len() || a.bispectrum.len() != b.bispectrum.len() {
        return Err(MraError::Dimension("invariants of different lengths".into()));
    }
    let dm = a.mean - b.mean;
    let dp: T = a
        .power_spectrum
        .iter()
        .zip(&b.power_spectrum)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    let db: T = a
        .bispectrum
        .iter()
        .zip(&b.bispectrum)
        .map(|(&x, &y)| (x - y).norm_sqr())
        .sum();
    Ok(weights[0] * dm * dm + weights[1] * dp + weights[2] * db)
}

pub const DEFAULT_DISTANCE_WEIGHTS: [f64; 3] = [1.0, 1.0, 1.0];
