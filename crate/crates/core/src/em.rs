//! Expectation-maximization for the signal under a Gaussian prior, with the
//! cyclic shift of each observation as the latent variable.
//!
//! Log-likelihoods drop the Gaussian normalizer: each observation contributes
//! `log Σ_s exp(−‖y − P R_s x‖² / 2σ²) − log M`.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dft::DftPlan;
use crate::error::{MraError, Result};
use crate::linalg::{Cholesky, DenseMatrix};
use crate::orbit::decompose;
use crate::prior::PriorSpec;
use crate::rng::{derive_seed, stream_rng};
use crate::scalar::{abs, log_sum_exp, norm_sq, Real};
use crate::signal::{bandlimit_basis, low_pass, HighResSignal, ObservationBatch};

/// Observations per parallel work unit; fixed so that reductions do not
/// depend on the thread count.
const CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig<T> {
    /// Stop when `|lp_t − lp_{t−1}| / max(1, |lp_{t−1}|)` falls below this.
    pub tol: T,
    pub max_iter: usize,
    pub restarts: usize,
    /// Restrict iterates to frequencies `|k| <= B`.
    pub bandlimit: Option<usize>,
    pub seed: u64,
}

impl<T: Real> EmConfig<T> {
    pub fn new(restarts: usize, seed: u64) -> Self {
        Self {
            tol: T::of(1e-5),
            max_iter: 100,
            restarts,
            bandlimit: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > T::zero()) || self.max_iter == 0 || self.restarts == 0 {
            return Err(MraError::InvalidParameter(
                "EM needs tol > 0, max_iter >= 1 and restarts >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary<T> {
    pub restart_index: usize,
    pub final_log_posterior: T,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmResult<T> {
    pub estimate: HighResSignal<T>,
    /// Log-posterior of the initial point followed by one value per iteration.
    pub log_posterior_trace: Vec<T>,
    pub restart_index: usize,
    pub converged: bool,
    pub iterations: usize,
    pub restarts: Vec<RestartSummary<T>>,
}

/// Shift hypothesis `s` samples sub-signal `k = r mod K` at offset `c = r / K`,
/// `r = (−s) mod M`: `P R_s x = R_{−c} x_k` on the `L`-grid.
#[inline]
fn shift_of(k: usize, c: usize, m: usize, kk: usize) -> usize {
    (m - (k + kk * c)) % m
}

fn check_batch<T: Real>(x_len: usize, batch: &ObservationBatch<T>) -> Result<()> {
    let p = batch.params();
    if batch.is_empty() {
        return Err(MraError::EmptyBatch);
    }
    if p.sigma <= T::zero() {
        return Err(MraError::ZeroNoise);
    }
    if x_len != p.m {
        return Err(MraError::Dimension(format!(
            "signal length {x_len} vs M = {}",
            p.m
        )));
    }
    Ok(())
}

/// Precomputed spectra of the current iterate's sub-signals.
struct ResidualKernel<T: Real> {
    plan: DftPlan<T>,
    subs_hat: Vec<Vec<Complex<T>>>,
    subs_norm: Vec<T>,
    m: usize,
}

impl<T: Real> ResidualKernel<T> {
    fn new(x: &HighResSignal<T>, l: usize) -> Result<Self> {
        let subs = decompose(x, l)?;
        let plan = DftPlan::new(l);
        Ok(Self {
            subs_hat: subs.subs().iter().map(|s| plan.forward_real(s)).collect(),
            subs_norm: subs.subs().iter().map(|s| norm_sq(s)).collect(),
            plan,
            m: x.len(),
        })
    }

    /// `‖y − P R_s x‖²` for every `s`, from `K` cyclic cross-correlations.
    fn residuals(&self, y: &[T], out: &mut [T]) {
        let kk = self.subs_hat.len();
        let yh = self.plan.forward_real(y);
        let yn = norm_sq(y);
        for (k, (xh, &xn)) in self.subs_hat.iter().zip(&self.subs_norm).enumerate() {
            let corr = self.plan.cross_correlation_from_spectra(&yh, xh);
            for (c, &v) in corr.iter().enumerate() {
                out[shift_of(k, c, self.m, kk)] = yn + xn - T::of(2.0) * v;
            }
        }
    }
}

/// `‖y_i − P R_s x‖²` for all observations and shifts, as an `N × M` matrix.
pub fn shift_residuals<T: Real>(x: &HighResSignal<T>, batch: &ObservationBatch<T>) -> Result<DenseMatrix<T>> {
    let p = batch.params();
    if x.len() != p.m {
        return Err(MraError::Dimension(format!("signal length {} vs M = {}", x.len(), p.m)));
    }
    let kernel = ResidualKernel::new(x, p.l)?;
    let m = p.m;
    let mut data = vec![T::zero(); batch.len() * m];
    data.par_chunks_mut(m * CHUNK)
        .enumerate()
        .for_each(|(chunk, out)| {
            for (j, row_out) in out.chunks_mut(m).enumerate() {
                kernel.residuals(batch.row(chunk * CHUNK + j), row_out);
            }
        });
    DenseMatrix::from_row_major(batch.len(), m, data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EStep<T> {
    /// `N × M` responsibilities; each row sums to one.
    pub weights: DenseMatrix<T>,
    pub log_likelihood: T,
}

/// Shift responsibilities at `x` and the log-likelihood of `x`.
pub fn e_step<T: Real>(x: &HighResSignal<T>, batch: &ObservationBatch<T>) -> Result<EStep<T>> {
    check_batch(x.len(), batch)?;
    let p = batch.params();
    let m = p.m;
    let scale = -T::one() / (T::of(2.0) * p.sigma * p.sigma);
    let kernel = ResidualKernel::new(x, p.l)?;
    let mut data = vec![T::zero(); batch.len() * m];
    let partial: Vec<T> = data
        .par_chunks_mut(m * CHUNK)
        .enumerate()
        .map(|(chunk, out)| {
            let mut ll = T::zero();
            for (j, w) in out.chunks_mut(m).enumerate() {
                kernel.residuals(batch.row(chunk * CHUNK + j), w);
                for v in w.iter_mut() {
                    *v *= scale;
                }
                let lse = log_sum_exp(w);
                for v in w.iter_mut() {
                    *v = (*v - lse).exp();
                }
                ll += lse;
            }
            ll
        })
        .collect();
    let log_m = T::of_usize(m).ln();
    let ll = partial.into_iter().fold(T::zero(), |a, b| a + b) - T::of_usize(batch.len()) * log_m;
    Ok(EStep {
        weights: DenseMatrix::from_row_major(batch.len(), m, data)?,
        log_likelihood: ll,
    })
}

pub fn log_likelihood<T: Real>(x: &HighResSignal<T>, batch: &ObservationBatch<T>) -> Result<T> {
    Ok(e_step(x, batch)?.log_likelihood)
}

/// `log p(y | x) − xᵀ Σ⁻¹ x / 2`.
pub fn log_posterior<T: Real>(
    x: &HighResSignal<T>,
    batch: &ObservationBatch<T>,
    prior: &PriorSpec<T>,
) -> Result<T> {
    Ok(log_likelihood(x, batch)? - prior.quadratic_form(x.values())? / T::of(2.0))
}

/// The M-step normal equations `A x = b` with
/// `A = Σ⁻¹ + D / σ²` (`D` diagonal) and `b = Σ_{i,s} w_{i,s} (P R_s)ᵀ y_i / σ²`.
#[derive(Debug, Clone, PartialEq)]
pub struct MStepSystem<T> {
    pub a: DenseMatrix<T>,
    pub b: Vec<T>,
}

/// Diagonal of `Σ_{i,s} w_{i,s} (P R_s)ᵀ P R_s` and the right-hand side
/// `Σ_{i,s} w_{i,s} (P R_s)ᵀ y_i`, both before scaling by `1/σ²`.
fn accumulate<T: Real>(weights: &DenseMatrix<T>, batch: &ObservationBatch<T>) -> (Vec<T>, Vec<T>) {
    let p = batch.params();
    let (m, l, kk) = (p.m, p.l, p.k());
    let plan = DftPlan::new(l);
    let zero = Complex::new(T::zero(), T::zero());
    let n = batch.len();
    let partials: Vec<(Vec<T>, Vec<Complex<T>>)> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut mass = vec![T::zero(); kk];
            let mut conv = vec![zero; kk * l];
            let mut wk = vec![T::zero(); l];
            for i in chunk * CHUNK..((chunk + 1) * CHUNK).min(n) {
                let yh = plan.forward_real(batch.row(i));
                let w = weights.row(i);
                for k in 0..kk {
                    for (c, v) in wk.iter_mut().enumerate() {
                        *v = w[shift_of(k, c, m, kk)];
                    }
                    mass[k] += wk.iter().copied().sum::<T>();
                    // b_k = Σ_c w[c] y[(j − c) mod L], a circular convolution
                    let wh = plan.forward_real(&wk);
                    for (acc, (a, b)) in conv[k * l..(k + 1) * l].iter_mut().zip(wh.iter().zip(&yh)) {
                        *acc = *acc + a * b;
                    }
                }
            }
            (mass, conv)
        })
        .collect();
    let mut mass = vec![T::zero(); kk];
    let mut conv = vec![zero; kk * l];
    for (pm, pc) in partials {
        for (a, b) in mass.iter_mut().zip(pm) {
            *a += b;
        }
        for (a, b) in conv.iter_mut().zip(pc) {
            *a = *a + b;
        }
    }
    let mut diag = vec![T::zero(); m];
    let mut rhs = vec![T::zero(); m];
    for k in 0..kk {
        let bk = plan.inverse_real(&conv[k * l..(k + 1) * l]);
        for j in 0..l {
            diag[k + kk * j] = mass[k];
            rhs[k + kk * j] = bk[j];
        }
    }
    (diag, rhs)
}

pub fn assemble_m_step_system<T: Real>(
    weights: &DenseMatrix<T>,
    batch: &ObservationBatch<T>,
    prior: &PriorSpec<T>,
) -> Result<MStepSystem<T>> {
    check_weights(weights, batch, prior)?;
    Ok(system_from(weights, batch, prior.precision_matrix()))
}

fn system_from<T: Real>(
    weights: &DenseMatrix<T>,
    batch: &ObservationBatch<T>,
    mut a: DenseMatrix<T>,
) -> MStepSystem<T> {
    let inv_var = T::one() / (batch.sigma() * batch.sigma());
    let (diag, rhs) = accumulate(weights, batch);
    a.add_diagonal(&diag.iter().map(|&d| d * inv_var).collect::<Vec<_>>());
    MStepSystem {
        a,
        b: rhs.into_iter().map(|v| v * inv_var).collect(),
    }
}

fn check_weights<T: Real>(
    weights: &DenseMatrix<T>,
    batch: &ObservationBatch<T>,
    prior: &PriorSpec<T>,
) -> Result<()> {
    let p = batch.params();
    if p.sigma <= T::zero() {
        return Err(MraError::ZeroNoise);
    }
    if weights.rows() != batch.len() || weights.cols() != p.m || prior.dim() != p.m {
        return Err(MraError::Dimension(format!(
            "weights {}x{}, prior dimension {}, batch N = {}, M = {}",
            weights.rows(),
            weights.cols(),
            prior.dim(),
            batch.len(),
            p.m
        )));
    }
    Ok(())
}

/// Maximizer of the expected complete-data log-posterior for fixed weights.
pub fn m_step<T: Real>(
    weights: &DenseMatrix<T>,
    batch: &ObservationBatch<T>,
    prior: &PriorSpec<T>,
) -> Result<HighResSignal<T>> {
    let sys = assemble_m_step_system(weights, batch, prior)?;
    HighResSignal::new(Cholesky::new(&sys.a)?.solve(&sys.b))
}

/// Solver state shared by all iterations of one EM run.
struct Solver<'a, T: Real> {
    batch: &'a ObservationBatch<T>,
    prior: &'a PriorSpec<T>,
    precision: DenseMatrix<T>,
    band: Option<(usize, DenseMatrix<T>)>,
}

impl<'a, T: Real> Solver<'a, T> {
    fn new(batch: &'a ObservationBatch<T>, prior: &'a PriorSpec<T>, bandlimit: Option<usize>) -> Result<Self> {
        let m = batch.params().m;
        if prior.dim() != m {
            return Err(MraError::Dimension(format!(
                "prior dimension {} vs M = {m}",
                prior.dim()
            )));
        }
        prior.validate()?;
        let band = match bandlimit {
            Some(b) => Some((b, bandlimit_basis(m, b)?)),
            None => None,
        };
        Ok(Self {
            batch,
            prior,
            precision: prior.precision_matrix(),
            band,
        })
    }

    fn restrict(&self, x: HighResSignal<T>) -> Result<HighResSignal<T>> {
        match &self.band {
            Some((b, _)) => HighResSignal::with_bandlimit(low_pass(x.values(), *b), *b),
            None => Ok(x),
        }
    }

    /// With a bandlimit, the M-step is solved on the band:
    /// `(Uᵀ A U) z = Uᵀ b`, `x = U z`.
    fn m_step(&self, weights: &DenseMatrix<T>) -> Result<HighResSignal<T>> {
        let sys = system_from(weights, self.batch, self.precision.clone());
        match &self.band {
            None => HighResSignal::new(Cholesky::new(&sys.a)?.solve(&sys.b)),
            Some((b, u)) => {
                let ut = u.transpose();
                let reduced = ut.matmul(&sys.a).matmul(u);
                let z = Cholesky::new(&reduced)?.solve(&ut.mul_vec(&sys.b));
                HighResSignal::with_bandlimit(u.mul_vec(&z), *b)
            }
        }
    }

    fn run(&self, init: HighResSignal<T>, tol: T, max_iter: usize) -> Result<RunOutcome<T>> {
        let mut x = self.restrict(init)?;
        let mut trace = Vec::with_capacity(max_iter + 1);
        let mut converged = false;
        let mut iterations = 0;
        loop {
            let e = e_step(&x, self.batch)?;
            let lp = e.log_likelihood - self.prior.quadratic_form(x.values())? / T::of(2.0);
            if !lp.is_finite() {
                return Err(MraError::Numerical("non-finite log-posterior".into()));
            }
            if let Some(&prev) = trace.last() {
                let prev: T = prev;
                if abs(lp - prev) / abs(prev).max(T::one()) < tol {
                    converged = true;
                }
            }
            trace.push(lp);
            if converged || iterations == max_iter {
                break;
            }
            x = self.m_step(&e.weights)?;
            iterations += 1;
        }
        Ok(RunOutcome {
            estimate: x,
            trace,
            converged,
            iterations,
        })
    }
}

struct RunOutcome<T> {
    estimate: HighResSignal<T>,
    trace: Vec<T>,
    converged: bool,
    iterations: usize,
}

/// Runs EM from a given starting point (one restart).
pub fn run_em_from<T: Real>(
    batch: &ObservationBatch<T>,
    prior: &PriorSpec<T>,
    config: &EmConfig<T>,
    init: HighResSignal<T>,
) -> Result<EmResult<T>> {
    config.validate()?;
    check_batch(init.len(), batch)?;
    let out = Solver::new(batch, prior, config.bandlimit)?.run(init, config.tol, config.max_iter)?;
    let summary = RestartSummary {
        restart_index: 0,
        final_log_posterior: *out.trace.last().expect("trace holds the initial value"),
        iterations: out.iterations,
        converged: out.converged,
    };
    Ok(EmResult {
        estimate: out.estimate,
        log_posterior_trace: out.trace,
        restart_index: 0,
        converged: out.converged,
        iterations: out.iterations,
        restarts: vec![summary],
    })
}

/// Starting point of restart `r`: a prior draw from a stream derived from
/// the configured seed.
pub fn restart_init<T: Real>(prior: &PriorSpec<T>, seed: u64, restart: usize) -> Result<HighResSignal<T>> {
    let mut rng = stream_rng(derive_seed(seed, &[0x454d, restart as u64]), 0);
    prior.sample(&mut rng)
}

/// Runs `config.restarts` independent EM runs in parallel and keeps the one
/// with the largest final log-posterior (ties go to the lowest index).
pub fn run_em<T: Real>(
    batch: &ObservationBatch<T>,
    prior: &PriorSpec<T>,
    config: &EmConfig<T>,
) -> Result<EmResult<T>> {
    config.validate()?;
    check_batch(prior.dim(), batch)?;
    let solver = Solver::new(batch, prior, config.bandlimit)?;
    let outcomes = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let init = restart_init(prior, config.seed, r)?;
            solver.run(init, config.tol, config.max_iter)
        })
        .collect::<Result<Vec<_>>>()?;
    let restarts: Vec<RestartSummary<T>> = outcomes
        .iter()
        .enumerate()
        .map(|(r, o)| RestartSummary {
            restart_index: r,
            final_log_posterior: *o.trace.last().expect("trace holds the initial value"),
            iterations: o.iterations,
            converged: o.converged,
        })
        .collect();
    let best = restarts
        .iter()
        .fold(0, |best, s| {
            if s.final_log_posterior > restarts[best].final_log_posterior {
                s.restart_index
            } else {
                best
            }
        });
    let out = outcomes.into_iter().nth(best).expect("best index is in range");
    Ok(EmResult {
        estimate: out.estimate,
        log_posterior_trace: out.trace,
        restart_index: best,
        converged: out.converged,
        iterations: out.iterations,
        restarts,
    })
}
