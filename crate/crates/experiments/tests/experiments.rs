use mra_core::metrics::median;
use mra_core::orbit::{cyclic_match, decompose, recover_orbit_noiseless, subsignal_of_shift};
use mra_core::rng::stream_rng;
use mra_core::{generate_batch, generate_batch_with_shifts, sample_bandlimited_signal, ModelParams};
use mra_experiments::io::{self, parse_csv, read_csv};
use mra_experiments::{run_experiment, ExperimentConfig, FrequencyRow, ResultRow, SummaryRow};

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::parse(text).unwrap()
}

fn small_exp1() -> ExperimentConfig {
    config("experiment = 1\nM = 24\nL = 6\nB = 4\nN = 300\ntrials = 2\nrestarts = 2\nseed = 4\nmax_iter = 30\n")
}

#[test]
fn output_files_are_bit_identical_across_runs() {
    let cfg = small_exp1();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    io::write_experiment(a.path(), &run_experiment(&cfg).unwrap()).unwrap();
    io::write_experiment(b.path(), &run_experiment(&cfg).unwrap()).unwrap();
    for f in ["results.csv", "summary.csv", "per_frequency.csv", "overlay.csv", "config.txt", "metadata.json"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn tables_round_trip_with_schema_headers() {
    let cfg = small_exp1();
    let out = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    io::write_experiment(dir.path(), &out).unwrap();

    let text = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# schema: results/v1"));
    assert_eq!(
        lines.next(),
        Some("experiment_id,trial,snr,M,L,N,relative_error,iterations,converged,wall_time_seconds")
    );
    let rows: Vec<ResultRow> = read_csv(&dir.path().join("results.csv"), io::RESULTS_SCHEMA).unwrap();
    assert_eq!(rows, out.rows);
    assert!(parse_csv::<ResultRow>(&text, io::SUMMARY_SCHEMA).is_err());

    let summary: Vec<SummaryRow> = read_csv(&dir.path().join("summary.csv"), io::SUMMARY_SCHEMA).unwrap();
    assert_eq!(summary.len(), 1);
    let errs: Vec<f64> = rows.iter().map(|r| r.relative_error).collect();
    assert_eq!(summary[0].median_error, median(&errs).unwrap());
    assert_eq!(summary[0].trials, 2);

    // one row per non-negative frequency per trial
    let freq: Vec<FrequencyRow> =
        read_csv(&dir.path().join("per_frequency.csv"), io::PER_FREQUENCY_SCHEMA).unwrap();
    assert_eq!(freq.len(), 2 * (24 / 2 + 1));
    assert!(freq.iter().filter(|r| r.trial == 0).map(|r| r.k).eq(0..=12));
}

#[test]
fn scale_factor_changes_only_counts() {
    let base = small_exp1();
    let mut scaled = base.clone();
    scaled.set("scale_factor", "0.5").unwrap();
    assert_eq!(scaled.scaled_n(), 150);
    assert_eq!(scaled.scaled_trials(), 1);
    let mut back = scaled.clone();
    back.scale_factor = base.scale_factor;
    assert_eq!(back, base);
    let out = run_experiment(&scaled).unwrap();
    assert_eq!(out.rows.len(), 1);
    assert!(out.rows.iter().all(|r| r.n == 150 && r.m == 24 && r.l == 6));
}

#[test]
fn noiseless_exp1_setup_recovers_a_subsignal() {
    let (m, l) = (120usize, 15usize);
    let k = m / l;
    let x = sample_bandlimited_signal::<f64, _>(m, 15, true, &mut stream_rng(3, 0)).unwrap();
    let shifts: Vec<usize> = (0..2 * l).map(|i| (i * k) % m).collect();
    assert!(shifts.iter().all(|s| subsignal_of_shift(*s, m, k) == 0));
    let p = ModelParams::new(m, l, 0.0, shifts.len(), 9).unwrap();
    let batch = generate_batch_with_shifts(&x, &p, &shifts).unwrap();
    let rec = recover_orbit_noiseless(&batch).unwrap();
    assert_eq!(rec.representatives.len(), 1);
    let subs = decompose(&x, l).unwrap();
    let truth = &subs.subs()[0];
    let got = &rec.representatives[0];
    let c = cyclic_match(got, truth, 1e-9).expect("cyclic shift of x_0");
    let err: f64 = (0..l)
        .map(|i| (got[i] - truth[(i + c) % l]).powi(2))
        .sum::<f64>()
        .sqrt()
        / truth.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(err <= 1e-6, "{err}");

    // random shifts with sigma = 0 also never split a sub-signal class
    let p = ModelParams::new(m, l, 0.0, 400, 10).unwrap();
    let rec = recover_orbit_noiseless(&generate_batch(&x, &p).unwrap()).unwrap();
    assert!(rec.representatives.len() <= k);
}

#[test]
fn exp3_marker_and_smallest_error_at_full_resolution() {
    let cfg = config(
        "experiment = 3\nM = 12\nL = 3, 4, 6, 12\nsnr = 5\nN = 400\ntrials = 3\nrestarts = 4\nseed = 0\n",
    );
    let out = run_experiment(&cfg).unwrap();
    assert!((out.marker.unwrap() - 12f64.powf(2.0 / 3.0)).abs() < 1e-12);
    let medians: Vec<(usize, f64)> = out.summary.iter().map(|s| (s.l, s.median_error)).collect();
    assert_eq!(medians.len(), 4);
    let full = medians.iter().find(|(l, _)| *l == 12).unwrap().1;
    for &(l, e) in &medians {
        assert!(full <= e, "L=12 error {full} exceeds L={l} error {e}: {medians:?}");
    }

    let default = ExperimentConfig::defaults(3, None).unwrap();
    let marker = (default.m as f64).powf(2.0 / 3.0);
    assert!((marker - 15.33).abs() < 0.01);
}

#[test]
fn config_echo_parses_back() {
    let cfg = config("experiment = 2\nregime = low\nsnr = logspace(-0.6, 0, 3)\nseed = 8\n");
    assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
}
