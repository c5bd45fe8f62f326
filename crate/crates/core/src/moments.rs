//! The moment map from `K` sub-signals to their averaged invariants, its
//! exact Jacobian, a numerical rank test for local identifiability, and a
//! least-squares demixer that inverts the map.

use num_complex::Complex;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dft::DftPlan;
use crate::error::{MraError, Result};
use crate::invariants::{invariant_distance, mixed_invariants, InvariantTriple};
use crate::linalg::{numerical_rank, singular_values, Cholesky, DenseMatrix};
use crate::orbit::SubSignalSet;
use crate::rng::stream_rng;
use crate::scalar::Real;

/// Mixed invariants of the flattened sub-signals `u = [x_0, …, x_{K−1}]`, in
/// real coordinates.
pub fn invariant_map<T: Real>(u: &[T], k: usize) -> Result<Vec<T>> {
    let subs = split(u, k)?;
    Ok(mixed_invariants(&subs)?.to_real_coordinates())
}

fn split<T: Real>(u: &[T], k: usize) -> Result<Vec<Vec<T>>> {
    if k == 0 || u.is_empty() || u.len() % k != 0 {
        return Err(MraError::Dimension(format!(
            "{} coordinates do not split into K = {k} sub-signals",
            u.len()
        )));
    }
    Ok(u.chunks(u.len() / k).map(<[T]>::to_vec).collect())
}

/// Exact Jacobian of [`invariant_map`], shape `(1 + L + 2L²) × KL`.
pub fn invariant_jacobian<T: Real>(u: &[T], k: usize) -> Result<DenseMatrix<T>> {
    let subs = split(u, k)?;
    let l = subs[0].len();
    let plan = DftPlan::new(l);
    let inv_k = T::one() / T::of_usize(k);
    let omega: Vec<Complex<T>> = (0..l)
        .map(|j| Complex::from_polar(T::one(), -T::TAU() * T::of_usize(j) / T::of_usize(l)))
        .collect();
    let rows = InvariantTriple::<T>::real_dimension(l);
    let cols = k * l;
    let mut data = vec![T::zero(); rows * cols];
    let (ps0, re0, im0) = (1, 1 + l, 1 + l + l * l);
    for (kk, sub) in subs.iter().enumerate() {
        let xh = plan.forward_real(sub);
        for ell in 0..l {
            let col = kk * l + ell;
            // d X[j] / d x[ell] = ω^{j·ell}
            let d = |j: usize| omega[(j * ell) % l];
            data[col] = inv_k;
            for j in 0..l {
                data[(ps0 + j) * cols + col] = T::of(2.0) * inv_k * (xh[j].conj() * d(j)).re;
            }
            for a in 0..l {
                for b in 0..l {
                    let c = (2 * l - a - b) % l;
                    let v = (d(a) * xh[b] * xh[c] + xh[a] * d(b) * xh[c] + xh[a] * xh[b] * d(c))
                        * inv_k;
                    data[(re0 + a * l + b) * cols + col] = v.re;
                    data[(im0 + a * l + b) * cols + col] = v.im;
                }
            }
        }
    }
    DenseMatrix::from_row_major(rows, cols, data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub l: usize,
    pub k: usize,
    pub rank: usize,
    pub identifiable: bool,
}

pub const DEFAULT_RANK_TOL: f64 = 1e-8;
pub const DEFAULT_RANK_TRIALS: usize = 3;

/// Numerical rank of the moment-map Jacobian at `trials` Gaussian points
/// (maximum over trials). Full rank `K·L` means the orbit is locally
/// determined by the first three invariants.
pub fn jacobian_rank_test<R: Rng + ?Sized>(
    l: usize,
    k: usize,
    trials: usize,
    tol: f64,
    rng: &mut R,
) -> Result<RankReport> {
    if l == 0 || k == 0 || trials == 0 {
        return Err(MraError::InvalidParameter("L, K and trials must be positive".into()));
    }
    let base: u64 = rng.random();
    let rank = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut r = stream_rng(base, t as u64);
            let u: Vec<f64> = (0..k * l).map(|_| f64::standard_normal(&mut r)).collect();
            let jac = invariant_jacobian(&u, k)?;
            Ok(numerical_rank(&singular_values(&jac), tol))
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .max()
        .unwrap_or(0);
    Ok(RankReport {
        l,
        k,
        rank,
        identifiable: rank == k * l,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemixConfig<T> {
    pub restarts: usize,
    pub max_iter: usize,
    pub weights: [T; 3],
}

impl<T: Real> DemixConfig<T> {
    pub fn new(restarts: usize) -> Self {
        Self {
            restarts,
            max_iter: 500,
            weights: [T::one(); 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemixResult<T> {
    pub subs: SubSignalSet<T>,
    pub objective: T,
    pub restart_index: usize,
    pub iterations: usize,
}

/// Weighted least-squares residual `W^{1/2} (Φ(u) − t)` in real coordinates.
struct Objective<T> {
    target: Vec<T>,
    sqrt_w: Vec<T>,
    k: usize,
}

impl<T: Real> Objective<T> {
    fn new(target: &InvariantTriple<T>, k: usize, weights: [T; 3]) -> Self {
        let l = target.len();
        let mut sqrt_w = vec![weights[0].sqrt()];
        sqrt_w.extend(std::iter::repeat_n(weights[1].sqrt(), l));
        sqrt_w.extend(std::iter::repeat_n(weights[2].sqrt(), 2 * l * l));
        Self {
            target: target.to_real_coordinates(),
            sqrt_w,
            k,
        }
    }

    fn residual(&self, u: &[T]) -> Result<Vec<T>> {
        Ok(invariant_map(u, self.k)?
            .iter()
            .zip(&self.target)
            .zip(&self.sqrt_w)
            .map(|((&p, &t), &w)| w * (p - t))
            .collect())
    }

    fn value(&self, u: &[T]) -> Result<T> {
        Ok(self.residual(u)?.iter().map(|&r| r * r).sum())
    }

    /// Weighted Jacobian `W^{1/2} J`.
    fn jacobian(&self, u: &[T]) -> Result<DenseMatrix<T>> {
        let j = invariant_jacobian(u, self.k)?;
        let cols = j.cols();
        let data = j
            .as_slice()
            .iter()
            .enumerate()
            .map(|(idx, &v)| v * self.sqrt_w[idx / cols])
            .collect();
        DenseMatrix::from_row_major(j.rows(), cols, data)
    }
}

/// Gradient of `invariant_distance(mixed_invariants(u), target, weights)`
/// with respect to the flattened sub-signals.
pub fn demix_gradient<T: Real>(
    u: &[T],
    k: usize,
    target: &InvariantTriple<T>,
    weights: [T; 3],
) -> Result<Vec<T>> {
    let obj = Objective::new(target, k, weights);
    let r = obj.residual(u)?;
    let j = obj.jacobian(u)?;
    Ok(j.transpose().mul_vec(&r).into_iter().map(|g| g * T::of(2.0)).collect())
}

/// Damped Gauss–Newton descent from `init` with Armijo backtracking.
/// Returns the final point, objective and iteration count.
pub fn demix_from<T: Real>(
    target: &InvariantTriple<T>,
    init: &SubSignalSet<T>,
    max_iter: usize,
    weights: [T; 3],
) -> Result<(SubSignalSet<T>, T, usize)> {
    let k = init.k();
    if init.l() != target.len() {
        return Err(MraError::Dimension(format!(
            "sub-signals of length {} vs invariants of length {}",
            init.l(),
            target.len()
        )));
    }
    let obj = Objective::new(target, k, weights);
    let scale = obj.target.iter().map(|&t| t * t).sum::<T>().max(T::one());
    let floor = T::of(1e-28) * scale;
    let mut u = init.flatten();
    let mut f = obj.value(&u)?;
    let mut lambda = T::of(1e-3);
    let mut iterations = 0;
    while iterations < max_iter && f > floor {
        iterations += 1;
        let r = obj.residual(&u)?;
        let j = obj.jacobian(&u)?;
        let jt = j.transpose();
        let g = jt.mul_vec(&r);
        let h = jt.matmul(&j);
        let diag_max = (0..h.rows()).map(|i| h[(i, i)]).fold(T::zero(), T::max);
        let mut improved = false;
        while lambda < T::of(1e12) {
            let mut damped = h.clone();
            let shift = lambda * diag_max.max(T::min_positive_value());
            damped.add_diagonal(&vec![shift; h.rows()]);
            let Ok(chol) = Cholesky::new(&damped) else {
                lambda *= T::of(10.0);
                continue;
            };
            let step: Vec<T> = chol.solve(&g).into_iter().map(|v| -v).collect();
            // directional derivative of f = ‖r‖² along the step
            let slope = T::of(2.0) * g.iter().zip(&step).map(|(&a, &b)| a * b).sum::<T>();
            let mut alpha = T::one();
            for _ in 0..20 {
                let trial: Vec<T> = u.iter().zip(&step).map(|(&x, &d)| x + alpha * d).collect();
                let ft = obj.value(&trial)?;
                if ft <= f + T::of(1e-4) * alpha * slope {
                    u = trial;
                    f = ft;
                    improved = true;
                    break;
                }
                alpha *= T::of(0.5);
            }
            if improved {
                lambda = (lambda / T::of(3.0)).max(T::of(1e-12));
                break;
            }
            lambda *= T::of(10.0);
        }
        if !improved {
            break;
        }
    }
    let subs = SubSignalSet::from_subs(split(&u, k)?)?;
    let objective = invariant_distance(&mixed_invariants(subs.subs())?, target, weights)?;
    Ok((subs, objective, iterations))
}

/// Fits `K` sub-signals to `target` from `restarts` random Gaussian starts
/// scaled to the target's power; returns the best local minimum (ties to the
/// lowest restart index).
pub fn demix_invariants<T: Real, R: Rng + ?Sized>(
    target: &InvariantTriple<T>,
    k: usize,
    config: &DemixConfig<T>,
    rng: &mut R,
) -> Result<DemixResult<T>> {
    let l = target.len();
    if k == 0 || l == 0 || config.restarts == 0 {
        return Err(MraError::InvalidParameter("K, L and restarts must be positive".into()));
    }
    let power: T = target.power_spectrum.iter().copied().sum::<T>() / T::of_usize(l * l);
    let std = power.max(T::min_positive_value()).sqrt();
    let base: u64 = rng.random();
    let runs = (0..config.restarts)
        .into_par_iter()
        .map(|restart| {
            let mut r = stream_rng(base, restart as u64);
            let subs = (0..k)
                .map(|_| (0..l).map(|_| std * T::standard_normal(&mut r)).collect())
                .collect();
            let init = SubSignalSet::from_subs(subs)?;
            let (subs, objective, iterations) = demix_from(target, &init, config.max_iter, config.weights)?;
            Ok(DemixResult {
                subs,
                objective,
                restart_index: restart,
                iterations,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    runs.into_iter()
        .reduce(|best, r| if r.objective < best.objective { r } else { best })
        .ok_or_else(|| MraError::Numerical("no restarts ran".into()))
}
