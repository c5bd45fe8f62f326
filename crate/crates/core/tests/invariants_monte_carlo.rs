//! Monte Carlo checks of the empirical invariants and their noise bias.

use mra_core::invariants::{autocorrelation_third_order_bias, Autocorrelation};
use mra_core::orbit::{apply_orbit_element, decompose, orbit_elements};
use mra_core::rng::stream_rng;
use mra_core::{
    autocorrelation, debias, empirical_invariants, fourier_invariants, generate_batch,
    mixed_invariants, HighResSignal, ModelParams, Signal, Triple,
};
use rand::Rng;

/// Per-coordinate mean and standard error over rows.
fn mean_and_se(samples: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = samples.len() as f64;
    let d = samples[0].len();
    let mean: Vec<f64> = (0..d).map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / n).collect();
    let se = (0..d)
        .map(|j| {
            let var = samples.iter().map(|s| (s[j] - mean[j]).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        })
        .collect();
    (mean, se)
}

fn within(got: &[f64], expect: &[f64], se: &[f64], z: f64) -> Vec<usize> {
    (0..got.len())
        .filter(|&i| (got[i] - expect[i]).abs() > z * se[i] + 1e-9 * (1.0 + expect[i].abs()))
        .collect()
}

fn batch(x: &Signal, l: usize, sigma: f64, n: usize, seed: u64) -> mra_core::Batch {
    generate_batch(x, &ModelParams::new(x.len(), l, sigma, n, seed).unwrap()).unwrap()
}

fn row_coordinates(b: &mra_core::Batch, sigma: f64, l: usize, unbias: bool) -> Vec<Vec<f64>> {
    b.rows()
        .map(|r| {
            let t = fourier_invariants(r);
            if unbias { debias(&t, sigma, l).unwrap() } else { t }.to_real_coordinates()
        })
        .collect()
}

#[test]
fn pure_noise_power_spectrum_sits_at_the_noise_floor() {
    let (l, sigma) = (4usize, 1.0);
    let b = batch(&HighResSignal::zeros(8), l, sigma, 20_000, 1);
    let rows: Vec<Vec<f64>> = b.rows().map(|r| fourier_invariants(r).power_spectrum).collect();
    let (mean, se) = mean_and_se(&rows);
    assert!(within(&mean, &[4.0; 4], &se, 3.0).is_empty(), "{mean:?} ± {se:?}");
    let avg = empirical_invariants(&b).unwrap();
    for (a, m) in avg.power_spectrum.iter().zip(&mean) {
        assert!((a - m).abs() < 1e-9);
    }

    let coords = row_coordinates(&b, sigma, l, true);
    let (mean, se) = mean_and_se(&coords);
    let off = within(&mean, &vec![0.0; mean.len()], &se, 3.5);
    assert!(off.len() <= 1, "debiased noise off zero at {off:?}");
}

#[test]
fn constant_signal_bispectrum_bias_is_removed() {
    for l in [4usize, 8] {
        let sigma = 0.8;
        let x = HighResSignal::new(vec![1.5; 2 * l]).unwrap();
        let b = batch(&x, l, sigma, 20_000, 2 + l as u64);
        let exact = fourier_invariants(&vec![1.5; l]).to_real_coordinates();

        let raw = mean_and_se(&row_coordinates(&b, sigma, l, false));
        assert!(!within(&raw.0, &exact, &raw.1, 3.0).is_empty(), "bias should be visible");

        let (mean, se) = mean_and_se(&row_coordinates(&b, sigma, l, true));
        let off = within(&mean, &exact, &se, 3.5);
        assert!(off.len() <= 1, "L={l}: debiased entries off at {off:?}");
        let direct = debias(&empirical_invariants(&b).unwrap(), sigma, l).unwrap();
        for (a, m) in direct.to_real_coordinates().iter().zip(&mean) {
            assert!((a - m).abs() <= 1e-9 * (1.0 + m.abs()));
        }
    }
}

#[test]
fn time_domain_third_moment_bias_pattern() {
    let (l, sigma) = (5usize, 0.7);
    let mut rng = stream_rng(11, 0);
    let x = HighResSignal::new((0..2 * l).map(|_| rng.random_range(0.2..1.5)).collect()).unwrap();
    let b = batch(&x, l, sigma, 40_000, 12);
    let third = |z: &[f64]| match autocorrelation(z, 3).unwrap() {
        Autocorrelation::Third(m) => m.as_slice().to_vec(),
        _ => unreachable!(),
    };
    let rows: Vec<Vec<f64>> = b.rows().map(third).collect();
    let (mean, se) = mean_and_se(&rows);
    // average over the two sub-signals, each seen with all shifts equally often
    let subs = decompose(&x, l).unwrap();
    let mut expect = vec![0.0; l * l];
    for s in subs.subs() {
        let xbar = s.iter().sum::<f64>() / l as f64;
        let bias = autocorrelation_third_order_bias(sigma, l, xbar);
        for (e, (c, d)) in expect.iter_mut().zip(third(s).iter().zip(bias.as_slice())) {
            *e += (c + d) / subs.k() as f64;
        }
    }
    let off = within(&mean, &expect, &se, 3.5);
    assert!(off.len() <= 1, "off at {off:?}");
}

#[test]
fn debiased_invariants_converge_at_root_n() {
    let (m, l, sigma) = (12usize, 6usize, 1.0);
    let mut rng = stream_rng(21, 0);
    let x = HighResSignal::new((0..m).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let truth = mixed_invariants(decompose(&x, l).unwrap().subs()).unwrap().to_real_coordinates();
    let err = |n: usize| -> f64 {
        // average squared error over independent replicates
        let reps = 8;
        let total: f64 = (0..reps)
            .map(|r| {
                let b = batch(&x, l, sigma, n, 100 * n as u64 + r);
                let est = debias(&empirical_invariants(&b).unwrap(), sigma, l).unwrap();
                est.to_real_coordinates()
                    .iter()
                    .zip(&truth)
                    .map(|(a, t)| (a - t).powi(2))
                    .sum::<f64>()
            })
            .sum();
        (total / reps as f64).sqrt()
    };
    let e = [err(1_000), err(10_000), err(100_000)];
    let ratio = e[0] / e[2];
    assert!((10.0 / 3.0..=30.0).contains(&ratio), "errors {e:?}, ratio {ratio}");
}

#[test]
fn mixed_invariants_are_constant_on_orbits() {
    let (k, l) = (2usize, 4usize);
    let mut rng = stream_rng(31, 0);
    let x = HighResSignal::new((0..k * l).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let base: Triple = mixed_invariants(decompose(&x, l).unwrap().subs()).unwrap();
    let mut count = 0;
    for g in orbit_elements(k, l) {
        let gx = apply_orbit_element(&x, &g).unwrap();
        let t = mixed_invariants(decompose(&gx, l).unwrap().subs()).unwrap();
        for (a, b) in t.to_real_coordinates().iter().zip(base.to_real_coordinates()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        count += 1;
    }
    assert_eq!(count, 32);
}
