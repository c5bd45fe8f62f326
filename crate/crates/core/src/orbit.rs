//! Sub-signal decomposition and the group that permutes the `K` sub-signals
//! and cyclically shifts each one. Every signal in an orbit of this group has
//! the same likelihood; a Gaussian prior selects one of them.

use num_rational::Ratio;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MraError, Result};
use crate::linalg::DenseMatrix;
use crate::prior::PriorSpec;
use crate::scalar::{abs, Real};
use crate::signal::{circular_shift, HighResSignal, ObservationBatch};

/// The `K` length-`L` sub-signals `x_k[ℓ] = x[k + Kℓ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubSignalSet<T> {
    subs: Vec<Vec<T>>,
    m: usize,
    l: usize,
}

impl<T: Real> SubSignalSet<T> {
    pub fn from_subs(subs: Vec<Vec<T>>) -> Result<Self> {
        let l = subs
            .first()
            .map(Vec::len)
            .ok_or_else(|| MraError::InvalidParameter("no sub-signals".into()))?;
        if l == 0 || subs.iter().any(|s| s.len() != l) {
            return Err(MraError::Dimension("sub-signals must share a positive length".into()));
        }
        Ok(Self {
            m: l * subs.len(),
            l,
            subs,
        })
    }

    pub fn subs(&self) -> &[Vec<T>] {
        &self.subs
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn k(&self) -> usize {
        self.subs.len()
    }

    /// Interleaves the sub-signals back into `x`.
    pub fn recompose(&self) -> HighResSignal<T> {
        let k = self.k();
        let mut values = vec![T::zero(); self.m];
        for (kk, sub) in self.subs.iter().enumerate() {
            for (l, &v) in sub.iter().enumerate() {
                values[kk + k * l] = v;
            }
        }
        HighResSignal::new(values).expect("sub-signals hold finite values")
    }

    pub fn flatten(&self) -> Vec<T> {
        self.subs.concat()
    }

    /// True when a permutation of `other`, with each member cyclically
    /// shifted, matches `self` to within `tol` (max-abs).
    pub fn same_orbit(&self, other: &Self, tol: T) -> bool {
        if self.k() != other.k() || self.l != other.l {
            return false;
        }
        let mut used = vec![false; other.k()];
        'outer: for a in &self.subs {
            for (j, b) in other.subs.iter().enumerate() {
                if !used[j] && cyclic_match(a, b, tol).is_some() {
                    used[j] = true;
                    continue 'outer;
                }
            }
            return false;
        }
        true
    }
}

/// Shift `c` with `b[(ℓ + c) mod L] ≈ a[ℓ]` for all `ℓ`, if any.
pub fn cyclic_match<T: Real>(a: &[T], b: &[T], tol: T) -> Option<usize> {
    let l = a.len();
    if l != b.len() {
        return None;
    }
    (0..l).find(|&c| (0..l).all(|i| abs(a[i] - b[(i + c) % l]) <= tol))
}

pub fn decompose<T: Real>(x: &HighResSignal<T>, l: usize) -> Result<SubSignalSet<T>> {
    let m = x.len();
    if l == 0 || m % l != 0 {
        return Err(MraError::InvalidParameter(format!(
            "L = {l} does not divide M = {m}"
        )));
    }
    let k = m / l;
    let v = x.values();
    let subs = (0..k)
        .map(|kk| (0..l).map(|ll| v[(kk + k * ll) % m]).collect())
        .collect();
    Ok(SubSignalSet { subs, m, l })
}

/// Element `(π, ℓ₀..ℓ_{K-1})` acting as `x_k ← R_{ℓ_k} x_{π(k)}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OrbitElement {
    perm: Vec<usize>,
    shifts: Vec<usize>,
    l: usize,
}

impl OrbitElement {
    pub fn new(perm: Vec<usize>, shifts: Vec<usize>, l: usize) -> Result<Self> {
        let k = perm.len();
        let mut seen = vec![false; k];
        for &p in &perm {
            if p >= k || std::mem::replace(&mut seen[p], true) {
                return Err(MraError::InvalidParameter(format!(
                    "{perm:?} is not a permutation"
                )));
            }
        }
        if shifts.len() != k || l == 0 || shifts.iter().any(|&s| s >= l) {
            return Err(MraError::InvalidParameter(format!(
                "need {k} shifts in [0, {l})"
            )));
        }
        Ok(Self { perm, shifts, l })
    }

    pub fn identity(k: usize, l: usize) -> Self {
        Self {
            perm: (0..k).collect(),
            shifts: vec![0; k],
            l,
        }
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn shifts(&self) -> &[usize] {
        &self.shifts
    }

    pub fn k(&self) -> usize {
        self.perm.len()
    }

    /// The element equal to applying `self` and then `next`.
    pub fn then(&self, next: &Self) -> Self {
        let l = self.l;
        let perm = next.perm.iter().map(|&p| self.perm[p]).collect();
        let shifts = next
            .perm
            .iter()
            .zip(&next.shifts)
            .map(|(&p, &s)| (s + self.shifts[p]) % l)
            .collect();
        Self {
            perm,
            shifts,
            l,
        }
    }

    pub fn inverse(&self) -> Self {
        let k = self.k();
        let mut perm = vec![0; k];
        let mut shifts = vec![0; k];
        for (kk, &p) in self.perm.iter().enumerate() {
            perm[p] = kk;
            shifts[p] = (self.l - self.shifts[kk]) % self.l;
        }
        Self {
            perm,
            shifts,
            l: self.l,
        }
    }

    /// The M-grid index that lands at position `n` under the action.
    pub fn source_index(&self, n: usize) -> usize {
        let k = self.k();
        let (kk, ll) = (n % k, n / k);
        let src = (ll + self.l - self.shifts[kk]) % self.l;
        self.perm[kk] + k * src
    }

    pub fn act(&self, subs: &SubSignalSet<impl Real>) -> Vec<Vec<impl Real>> {
        self.act_inner(subs)
    }

    fn act_inner<T: Real>(&self, subs: &SubSignalSet<T>) -> Vec<Vec<T>> {
        self.perm
            .iter()
            .zip(&self.shifts)
            .map(|(&p, &s)| circular_shift(&subs.subs[p], s as i64))
            .collect()
    }
}

/// Applies `g` to `x` viewed as `K = M / L` sub-signals.
pub fn apply_orbit_element<T: Real>(x: &HighResSignal<T>, g: &OrbitElement) -> Result<HighResSignal<T>> {
    let k = g.k();
    if k == 0 || x.len() % k != 0 || x.len() / k != g.l {
        return Err(MraError::Dimension(format!(
            "element for K = {k}, L = {} applied to a signal of length {}",
            g.l,
            x.len()
        )));
    }
    let subs = decompose(x, g.l)?;
    Ok(SubSignalSet {
        subs: g.act_inner(&subs),
        m: subs.m,
        l: subs.l,
    }
    .recompose())
}

/// `K! · L^K`, or `None` on overflow.
pub fn orbit_size(k: usize, l: usize) -> Option<u128> {
    let mut size: u128 = 1;
    for i in 1..=k {
        size = size.checked_mul(i as u128)?;
        size = size.checked_mul(l as u128)?;
    }
    Some(size)
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut current: Vec<usize> = (0..n).collect();
    let mut out = vec![current.clone()];
    loop {
        let Some(i) = (1..n).rev().find(|&i| current[i - 1] < current[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| current[j] > current[i - 1]).unwrap();
        current.swap(i - 1, j);
        current[i..].reverse();
        out.push(current.clone());
    }
}

/// Decodes `index` in `0..K!·L^K` into a group element (lexicographic in
/// the permutation, then base-`L` in the shifts).
fn element_at(perms: &[Vec<usize>], l: usize, index: u128) -> OrbitElement {
    let k = perms[0].len();
    let per_perm = (l as u128).pow(k as u32);
    let perm = perms[(index / per_perm) as usize].clone();
    let mut rest = index % per_perm;
    let mut shifts = vec![0; k];
    for s in shifts.iter_mut().rev() {
        *s = (rest % l as u128) as usize;
        rest /= l as u128;
    }
    OrbitElement { perm, shifts, l }
}

/// Iterates over every element of the group for `(K, L)`.
pub fn orbit_elements(k: usize, l: usize) -> impl Iterator<Item = OrbitElement> {
    let perms = permutations(k);
    let size = orbit_size(k, l).unwrap_or(0);
    (0..size).map(move |i| element_at(&perms, l, i))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSelection<T> {
    pub best: HighResSignal<T>,
    pub element: OrbitElement,
    pub value: T,
    pub unique: bool,
    pub orbit_size: u128,
}

pub const DEFAULT_ORBIT_BUDGET: u128 = 1_000_000;

/// Minimizes `yᵀ Σ⁻¹ y` over the orbit of `x`.
///
/// `unique` compares the minimum against the best value attained by a
/// different signal; for circulant priors, signals that are cyclic shifts of
/// each other on the `M`-grid count as one. Ties are broken towards the
/// lexicographically smallest signal.
pub fn orbit_select_map<T: Real>(
    x: &HighResSignal<T>,
    l: usize,
    prior: &PriorSpec<T>,
    budget: u128,
) -> Result<OrbitSelection<T>> {
    let subs = decompose(x, l)?;
    let k = subs.k();
    if prior.dim() != x.len() {
        return Err(MraError::Dimension(format!(
            "prior dimension {} vs M = {}",
            prior.dim(),
            x.len()
        )));
    }
    prior.validate()?;
    let size = orbit_size(k, l).unwrap_or(u128::MAX);
    if size > budget {
        return Err(MraError::BudgetExceeded { size, budget });
    }
    let perms = permutations(k);
    let signal_of = |i: u128| -> Vec<T> {
        SubSignalSet {
            subs: element_at(&perms, l, i).act_inner(&subs),
            m: subs.m,
            l,
        }
        .recompose()
        .into_values()
    };
    let mut scored: Vec<(T, u128)> = (0..size as u64)
        .into_par_iter()
        .map(|i| {
            let y = signal_of(i as u128);
            prior.quadratic_form(&y).map(|v| (v, i as u128))
        })
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));

    let min_value = scored[0].0;
    let tol = T::of(1e-9) * abs(min_value).max(T::min_positive_value());
    let key = |y: &[T]| -> Vec<u64> {
        let canon = if prior.is_circulant() {
            canonical_rotation(y)
        } else {
            y.to_vec()
        };
        canon.iter().map(|v| v.as_f64().to_bits()).collect()
    };

    // lexicographically smallest among the near-minimizers
    let mut best_index = scored[0].1;
    let mut best_signal = signal_of(best_index);
    for &(v, i) in scored.iter().skip(1) {
        if v - min_value > tol {
            break;
        }
        let y = signal_of(i);
        if lex_less(&y, &best_signal) {
            best_signal = y;
            best_index = i;
        }
    }
    let best_key = key(&best_signal);
    let runner_up = scored
        .iter()
        .find(|&&(_, i)| key(&signal_of(i)) != best_key)
        .map(|&(v, _)| v);
    let unique = runner_up.is_none_or(|r| r - min_value > tol);
    Ok(OrbitSelection {
        value: prior.quadratic_form(&best_signal)?,
        best: HighResSignal::new(best_signal)?,
        element: element_at(&perms, l, best_index),
        unique,
        orbit_size: size,
    })
}

fn lex_less<T: Real>(a: &[T], b: &[T]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

/// Lexicographically smallest cyclic rotation.
pub fn canonical_rotation<T: Real>(y: &[T]) -> Vec<T> {
    let n = y.len();
    let mut best = y.to_vec();
    for s in 1..n {
        let r = circular_shift(y, s as i64);
        if lex_less(&r, &best) {
            best = r;
        }
    }
    best
}

/// Identifiability bound
/// `(L + 3 + ⌊L/2⌋ + ⌈(L−1)(L−2)/6⌉) / (L + 1)` as an exact fraction;
/// orbits are identifiable from the first three moments when `K` is
/// strictly below it.
pub fn identifiability_bound(l: u64) -> Ratio<u64> {
    let cubic = if l >= 2 { ((l - 1) * (l - 2)).div_ceil(6) } else { 0 };
    Ratio::new(l + 3 + l / 2 + cubic, l + 1)
}

/// Largest `K` with `K < bound(L)`.
pub fn max_identifiable_k(l: u64) -> u64 {
    let p = identifiability_bound(l);
    if p.is_integer() {
        p.to_integer() - 1
    } else {
        p.floor().to_integer()
    }
}

pub fn harmonic_number<T: Real>(k: usize) -> T {
    (1..=k).map(|i| T::one() / T::of_usize(i)).sum()
}

/// Expected draws to see all `K` sub-signals: `K · H_K`.
pub fn coupon_collector_expectation<T: Real>(k: usize) -> T {
    T::of_usize(k) * harmonic_number::<T>(k)
}

/// Index of the sub-signal an observation with shift `s` samples:
/// `P R_s x` is a cyclic shift of `x_k` with `k = (-s) mod K`.
pub fn subsignal_of_shift(s: usize, m: usize, k: usize) -> usize {
    (m - s % m) % m % k
}

/// Draws uniform shifts on `[0, K·L)` until every sub-signal has appeared;
/// returns the number of draws.
pub fn draws_to_cover_subsignals<R: Rng + ?Sized>(k: usize, l: usize, rng: &mut R) -> usize {
    let m = k * l;
    let mut seen = vec![false; k];
    let mut remaining = k;
    let mut draws = 0;
    while remaining > 0 {
        draws += 1;
        let idx = subsignal_of_shift(rng.random_range(0..m), m, k);
        if !std::mem::replace(&mut seen[idx], true) {
            remaining -= 1;
        }
    }
    draws
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiselessRecovery<T> {
    /// One representative per cyclic-shift class of observed rows.
    pub representatives: Vec<Vec<T>>,
    /// True when all `K` sub-signals were observed.
    pub complete: bool,
}

/// Clusters noiseless rows by cyclic-shift equivalence on the `L`-grid.
pub fn recover_orbit_noiseless<T: Real>(batch: &ObservationBatch<T>) -> Result<NoiselessRecovery<T>> {
    let params = batch.params();
    if params.sigma > T::zero() {
        return Err(MraError::NoisyBatch(format!(
            "sigma = {} > 0",
            params.sigma
        )));
    }
    let k = params.k();
    let mut reps: Vec<Vec<T>> = Vec::new();
    for row in batch.rows() {
        let scale = row.iter().fold(T::one(), |m, &v| m.max(abs(v)));
        let tol = T::of(1e-9) * scale;
        if !reps.iter().any(|r| cyclic_match(row, r, tol).is_some()) {
            reps.push(row.to_vec());
            if reps.len() > k {
                return Err(MraError::NoisyBatch(format!(
                    "found more than K = {k} distinct rows up to shift"
                )));
            }
        }
    }
    Ok(NoiselessRecovery {
        complete: reps.len() == k,
        representatives: reps,
    })
}

/// Circulant matrix with the given first column: `C[i][j] = c[(i − j) mod n]`.
pub fn circulant_matrix<T: Real>(first_column: &[T]) -> DenseMatrix<T> {
    let n = first_column.len();
    DenseMatrix::from_fn(n, n, |i, j| first_column[(i + n - j) % n])
}

/// Permutation matrix `P` with `(P v)[i] = v[perm[i]]`.
pub fn permutation_matrix<T: Real>(perm: &[usize]) -> DenseMatrix<T> {
    let n = perm.len();
    DenseMatrix::from_fn(n, n, |i, j| if perm[i] == j { T::one() } else { T::zero() })
}

/// Frobenius norm of `A P − P A`.
pub fn commutator_norm<T: Real>(a: &DenseMatrix<T>, perm: &[usize]) -> T {
    let p = permutation_matrix::<T>(perm);
    a.matmul(&p).distance(&p.matmul(a))
}

/// `perm[i] = (i + a) mod n` for some `a`.
pub fn is_cyclic_permutation(perm: &[usize]) -> bool {
    let n = perm.len();
    n == 0 || (0..n).all(|i| perm[i] == (perm[0] + i) % n)
}

/// Cyclic shift or reflection `i ↦ (a − i) mod n`.
pub fn is_dihedral_permutation(perm: &[usize]) -> bool {
    let n = perm.len();
    is_cyclic_permutation(perm) || (0..n).all(|i| perm[i] == (perm[0] + n - i) % n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::signal::{generate_batch, generate_batch_with_shifts, ModelParams};
    use rand::Rng;

    fn random_signal(m: usize, seed: u64) -> HighResSignal<f64> {
        let mut rng = stream_rng(seed, 0);
        HighResSignal::new((0..m).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn decompose_examples() {
        let x = HighResSignal::new((0..12).map(|i| i as f64).collect()).unwrap();
        let s = decompose(&x, 4).unwrap();
        assert_eq!(
            s.subs(),
            &[
                vec![0.0, 3.0, 6.0, 9.0],
                vec![1.0, 4.0, 7.0, 10.0],
                vec![2.0, 5.0, 8.0, 11.0]
            ]
        );
        let whole = decompose(&x, 12).unwrap();
        assert_eq!(whole.subs(), &[x.values().to_vec()]);
        assert!(decompose(&x, 5).is_err());
    }

    #[test]
    fn recompose_inverts_decompose() {
        for m in 1..=24usize {
            let x = random_signal(m, m as u64);
            for l in (1..=m).filter(|l| m % l == 0) {
                assert_eq!(decompose(&x, l).unwrap().recompose(), x);
            }
        }
    }

    #[test]
    fn identity_and_uniform_shift_actions() {
        for (m, l) in [(12usize, 4usize), (24, 6), (6, 3), (8, 8)] {
            let x = random_signal(m, 3);
            let k = m / l;
            assert_eq!(apply_orbit_element(&x, &OrbitElement::identity(k, l)).unwrap(), x);
            let g = OrbitElement::new((0..k).collect(), vec![1; k], l).unwrap();
            assert_eq!(
                apply_orbit_element(&x, &g).unwrap().values(),
                &circular_shift(x.values(), k as i64)[..]
            );
        }
    }

    #[test]
    fn group_product_matches_sequential_action() {
        let (k, l) = (2, 3);
        let x = random_signal(6, 9);
        let elements: Vec<OrbitElement> = orbit_elements(k, l).collect();
        assert_eq!(elements.len(), 18);
        for g in &elements {
            let gx = apply_orbit_element(&x, g).unwrap();
            for h in &elements {
                let hgx = apply_orbit_element(&gx, h).unwrap();
                let prod = g.then(h);
                assert!(elements.contains(&prod), "closure");
                assert_eq!(apply_orbit_element(&x, &prod).unwrap(), hgx);
            }
            let back = apply_orbit_element(&gx, &g.inverse()).unwrap();
            assert_eq!(back, x);
            for n in 0..6 {
                assert_eq!(gx.values()[n], x.values()[g.source_index(n)]);
            }
        }
    }

    #[test]
    fn orbit_sizes_and_permutations() {
        assert_eq!(orbit_size(2, 4), Some(32));
        assert_eq!(orbit_size(3, 5), Some(6 * 125));
        assert_eq!(permutations(3).len(), 6);
        assert_eq!(permutations(0), vec![Vec::<usize>::new()]);
        let all: std::collections::HashSet<_> = orbit_elements(3, 2).collect();
        assert_eq!(all.len(), 48);
        assert!(OrbitElement::new(vec![0, 0], vec![0, 0], 3).is_err());
        assert!(OrbitElement::new(vec![1, 0], vec![0, 3], 3).is_err());
    }

    #[test]
    fn selection_with_identity_precision_is_never_unique() {
        let x = random_signal(8, 4);
        let prior = PriorSpec::dense(DenseMatrix::identity(8)).unwrap();
        let sel = orbit_select_map(&x, 4, &prior, DEFAULT_ORBIT_BUDGET).unwrap();
        assert!(!sel.unique);
        assert_eq!(sel.orbit_size, 32);
        assert!((sel.value - x.norm_sq()).abs() < 1e-12);
    }

    #[test]
    fn selection_with_k1_is_brute_force_shift_argmin() {
        let mut rng = stream_rng(77, 0);
        for trial in 0..10 {
            let m = 7;
            let b = DenseMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
            let mut p = b.matmul(&b.transpose());
            p.add_diagonal(&[0.1; 7]);
            let prior = PriorSpec::dense(p.clone()).unwrap();
            let x = random_signal(m, 100 + trial);
            let sel = orbit_select_map(&x, m, &prior, DEFAULT_ORBIT_BUDGET).unwrap();
            let (best_s, best_v) = (0..m as i64)
                .map(|s| (s, p.quadratic_form(&circular_shift(x.values(), s))))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            assert!((sel.value - best_v).abs() < 1e-12 * best_v.abs().max(1.0));
            assert_eq!(sel.best.values(), &circular_shift(x.values(), best_s)[..]);
            assert!(sel.unique);
        }
    }

    #[test]
    fn selection_budget_is_enforced() {
        let x = random_signal(12, 1);
        let prior = PriorSpec::white(12, 1.0).unwrap();
        assert!(matches!(
            orbit_select_map(&x, 4, &prior, 100),
            Err(MraError::BudgetExceeded { size: 384, budget: 100 })
        ));
        let wrong = PriorSpec::white(8, 1.0).unwrap();
        assert!(orbit_select_map(&x, 4, &wrong, 1000).is_err());
    }

    #[test]
    fn identifiability_bound_values() {
        assert_eq!(identifiability_bound(15), Ratio::new(7, 2));
        assert_eq!(max_identifiable_k(15), 3);
        assert_eq!(identifiability_bound(32), Ratio::new(206, 33));
        assert_eq!(max_identifiable_k(32), 6);
        assert_eq!(identifiability_bound(12), Ratio::new(40, 13));
        let ratio = *identifiability_bound(192).numer() as f64
            / *identifiability_bound(192).denom() as f64
            / 192.0;
        assert!((ratio - 1.0 / 6.0).abs() < 0.15 / 6.0);
        assert_eq!(identifiability_bound(1), Ratio::new(2, 1));
        assert_eq!(max_identifiable_k(1), 1);
    }

    #[test]
    fn coupon_collector_values() {
        assert_eq!(coupon_collector_expectation::<f64>(1), 1.0);
        assert!((coupon_collector_expectation::<f64>(3) - 5.5).abs() < 1e-14);
        let direct: f64 = 10.0 * (1..=10).map(|i| 1.0 / i as f64).sum::<f64>();
        assert!((coupon_collector_expectation::<f64>(10) - direct).abs() < 1e-12);
        assert!((coupon_collector_expectation::<f64>(10) - 29.289_682_539_682_54).abs() < 1e-10);
    }

    #[test]
    fn shift_to_subsignal_map_matches_templates() {
        let (m, l) = (12usize, 4usize);
        let k = m / l;
        let x = random_signal(m, 5);
        let subs = decompose(&x, l).unwrap();
        for s in 0..m {
            let t = crate::signal::template(x.values(), l, s);
            let idx = subsignal_of_shift(s, m, k);
            assert!(cyclic_match(&t, &subs.subs()[idx], 0.0).is_some(), "s={s}");
        }
    }

    #[test]
    fn noiseless_recovery() {
        let (m, l) = (12usize, 4usize);
        let x = random_signal(m, 6);
        let p = ModelParams::new(m, l, 0.0, 1, 0).unwrap();
        let all: Vec<usize> = (0..m).collect();
        let batch = generate_batch_with_shifts(&x, &p, &all).unwrap();
        let rec = recover_orbit_noiseless(&batch).unwrap();
        assert!(rec.complete);
        let got = SubSignalSet::from_subs(rec.representatives).unwrap();
        assert!(got.same_orbit(&decompose(&x, l).unwrap(), 1e-12));

        let one = generate_batch_with_shifts(&x, &p, &[5]).unwrap();
        let rec = recover_orbit_noiseless(&one).unwrap();
        assert_eq!(rec.representatives.len(), 1);
        assert!(!rec.complete);

        let c = HighResSignal::new(vec![2.0; m]).unwrap();
        let rec = recover_orbit_noiseless(&generate_batch_with_shifts(&c, &p, &all).unwrap()).unwrap();
        assert_eq!(rec.representatives.len(), 1);
        assert!(!rec.complete);
        let pk1 = ModelParams::new(m, m, 0.0, 1, 0).unwrap();
        let rec = recover_orbit_noiseless(&generate_batch_with_shifts(&c, &pk1, &all).unwrap()).unwrap();
        assert!(rec.complete);

        let noisy = ModelParams::new(m, l, 0.1, 20, 1).unwrap();
        let nb = generate_batch(&x, &noisy).unwrap();
        assert!(matches!(recover_orbit_noiseless(&nb), Err(MraError::NoisyBatch(_))));
        // noise hidden behind sigma = 0 metadata is still detected
        let forged = ObservationBatch::new(nb.rows().map(<[f64]>::to_vec).collect(), p, None).unwrap();
        assert!(matches!(recover_orbit_noiseless(&forged), Err(MraError::NoisyBatch(_))));
    }

    fn random_column(n: usize, seed: u64, symmetric: bool) -> Vec<f64> {
        let mut rng = stream_rng(seed, 1);
        let mut c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        if symmetric {
            for k in 1..n {
                c[n - k] = c[k];
            }
        }
        c
    }

    #[test]
    fn cyclic_shifts_commute_with_circulants() {
        for n in 1..=8 {
            let c = circulant_matrix(&random_column(n, n as u64, false));
            for a in 0..n {
                let perm: Vec<usize> = (0..n).map(|i| (i + a) % n).collect();
                assert!(commutator_norm(&c, &perm) <= 1e-10);
            }
        }
    }

    #[test]
    fn generic_circulant_commutes_only_with_cyclic_shifts() {
        for n in 3..=6 {
            let c = circulant_matrix(&random_column(n, 10 + n as u64, false));
            for perm in permutations(n) {
                let norm = commutator_norm(&c, &perm);
                if is_cyclic_permutation(&perm) {
                    assert!(norm <= 1e-10);
                } else {
                    assert!(norm > 1e-6, "n={n} {perm:?}");
                }
            }
        }
    }

    #[test]
    fn symmetric_circulant_commutes_exactly_with_dihedral_group() {
        for n in 3..=6 {
            let c = circulant_matrix(&random_column(n, 20 + n as u64, true));
            for perm in permutations(n) {
                let norm = commutator_norm(&c, &perm);
                assert_eq!(norm <= 1e-10, is_dihedral_permutation(&perm), "n={n} {perm:?}");
            }
        }
    }
}
