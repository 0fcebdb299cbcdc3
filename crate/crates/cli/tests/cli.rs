//! End-to-end tests of the `dtomo` binary: exit codes, file round trips, and
//! cross-command consistency.

use std::path::Path;
use std::process::{Command, Output};

use dtomo::{CoherentInput, Dataset};
use dtomo_cli::FitReport;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dtomo"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("failed to launch dtomo")
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const SIM_ARGS: &[&str] = &[
    "simulate",
    "--eta",
    "1.6e-6",
    "--p",
    "0.568",
    "--powers",
    "5e-9:7e-6:8log",
    "--trials",
    "20000",
    "--seed",
    "42",
    "--out",
    "data.csv",
];

fn fit_args(out_dir: &str) -> Vec<&str> {
    vec![
        "fit", "--data", "data.csv", "--n-max", "1", "--walkers", "16", "--steps", "500",
        "--burn-in", "150", "--thin", "1", "--seed", "7", "--out-dir", out_dir,
    ]
}

#[test]
fn simulate_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    assert_code(&run_in(dir.path(), SIM_ARGS), 0);
    let first = std::fs::read(dir.path().join("data.csv")).unwrap();

    // same invocation refuses to overwrite without --force
    let refused = run_in(dir.path(), SIM_ARGS);
    assert_code(&refused, 2);
    assert!(String::from_utf8_lossy(&refused.stderr).contains("--force"));

    let mut forced: Vec<&str> = SIM_ARGS.to_vec();
    forced.push("--force");
    assert_code(&run_in(dir.path(), &forced), 0);
    let second = std::fs::read(dir.path().join("data.csv")).unwrap();
    assert_eq!(first, second, "same seed must reproduce identical bytes");

    let parsed = Dataset::read_from(dir.path().join("data.csv")).unwrap();
    assert_eq!(parsed.len(), 8);
    assert_eq!(parsed.to_text().as_bytes(), &first[..]);
}

#[test]
fn simulate_requires_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "simulate", "--eta", "1e-6", "--p", "0.5", "--powers", "1e-9:1e-6:5log", "--out",
            "data.csv",
        ],
    );
    assert_code(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn events_pipeline_matches_direct_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let mut sim: Vec<&str> = SIM_ARGS.to_vec();
    sim.extend_from_slice(&["--tags-dir", "tags", "--dark-rate", "200", "--force"]);
    assert_code(&run_in(dir.path(), &sim), 0);

    let direct = Dataset::read_from(dir.path().join("data.csv")).unwrap();

    let mut tag_files: Vec<String> = std::fs::read_dir(dir.path().join("tags"))
        .unwrap()
        .map(|e| e.unwrap().path().to_string_lossy().into_owned())
        .collect();
    tag_files.sort();
    assert_eq!(tag_files.len(), 8);

    let mut args: Vec<String> = vec![
        "events".into(),
        "--out".into(),
        "events.csv".into(),
        "--window-start".into(),
        "5e-8".into(),
        "--recovery-time".into(),
        "14e-9".into(),
    ];
    args.extend(tag_files);
    let args_ref: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
    let out = run_in(dir.path(), &args_ref);
    assert_code(&out, 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("dead-time overlap"), "stdout: {stdout}");

    let rebuilt = Dataset::read_from(dir.path().join("events.csv")).unwrap();
    assert_eq!(rebuilt.len(), direct.len());
    for (a, b) in rebuilt.points.iter().zip(&direct.points) {
        assert_eq!(a.mean_photons, b.mean_photons, "same measured powers");
        assert!(
            (a.p_click - b.p_click).abs() <= 4.0 * b.sigma_p_click,
            "p_click {} vs direct {}",
            a.p_click,
            b.p_click
        );
        // dark leakage can only add clicks
        assert!(a.clicks >= b.clicks);
    }
}

#[test]
fn events_with_auto_window_placement() {
    let dir = tempfile::tempdir().unwrap();
    let mut sim: Vec<&str> = SIM_ARGS.to_vec();
    sim.extend_from_slice(&["--tags-dir", "tags", "--force"]);
    assert_code(&run_in(dir.path(), &sim), 0);

    let mut tag_files: Vec<String> = std::fs::read_dir(dir.path().join("tags"))
        .unwrap()
        .map(|e| e.unwrap().path().to_string_lossy().into_owned())
        .collect();
    tag_files.sort();
    let mut args: Vec<String> = vec!["events".into(), "--out".into(), "auto.csv".into()];
    args.extend(tag_files);
    let args_ref: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
    assert_code(&run_in(dir.path(), &args_ref), 0);

    let direct = Dataset::read_from(dir.path().join("data.csv")).unwrap();
    let rebuilt = Dataset::read_from(dir.path().join("auto.csv")).unwrap();
    for (a, b) in rebuilt.points.iter().zip(&direct.points) {
        assert!((a.p_click - b.p_click).abs() <= 4.0 * b.sigma_p_click);
    }
}

#[test]
fn events_rejects_empty_streams_by_name() {
    let dir = tempfile::tempdir().unwrap();
    for i in 0..2 {
        std::fs::write(
            dir.path().join(format!("tags_{i}.csv")),
            "# period=2e-7\n# pulses=1000\n# power=1e-9\npulse_index,delay_seconds\n0,5e-8\n",
        )
        .unwrap();
    }
    // no events and no pulses header: the pulse count is unknowable
    std::fs::write(
        dir.path().join("tags_empty.csv"),
        "# period=2e-7\n# power=1e-9\npulse_index,delay_seconds\n",
    )
    .unwrap();

    let out = run_in(
        dir.path(),
        &[
            "events",
            "--out",
            "events.csv",
            "tags_0.csv",
            "tags_1.csv",
            "tags_empty.csv",
        ],
    );
    assert_code(&out, 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("tags_empty.csv") && stderr.contains("empty setting"),
        "stderr: {stderr}"
    );
}

#[test]
fn fit_writes_consistent_reproducible_outputs() {
    let dir = tempfile::tempdir().unwrap();
    assert_code(&run_in(dir.path(), SIM_ARGS), 0);

    let out = run_in(dir.path(), &fit_args("fit1"));
    let code = out.status.code().unwrap();
    assert!(code == 0 || code == 3, "unexpected exit {code}");

    let report = FitReport::read_from(dir.path().join("fit1/report.txt")).unwrap();
    assert_eq!(report.k_params, 2);
    assert_eq!(report.n_points, 8);
    assert_eq!(report.dof, 6);
    // internal identities hold exactly as written
    assert!((report.chi2_reduced * report.dof as f64 - report.chi2).abs() <= 1e-12 * report.chi2);
    assert!(
        (report.aic - (2.0 * report.k_params as f64 + report.chi2)).abs() <= 1e-12 * report.aic
    );
    // the report reconstructs the fitted model
    let model = report.map_model().unwrap();
    assert!(model.eta() > 0.0 && model.eta() < 1e-4);

    let chain = dtomo::Chain::read_from(dir.path().join("fit1/chain.csv")).unwrap();
    assert_eq!(chain.walkers(), 16);
    assert_eq!(chain.dim(), 2);
    assert!(dir.path().join("fit1/corner_1d_eta.csv").exists());
    assert!(dir.path().join("fit1/corner_2d_eta_p1.csv").exists());

    // identical invocation -> identical bytes
    let out2 = run_in(dir.path(), &fit_args("fit2"));
    assert_eq!(out.status.code(), out2.status.code());
    let report1 = std::fs::read(dir.path().join("fit1/report.txt")).unwrap();
    let report2 = std::fs::read(dir.path().join("fit2/report.txt")).unwrap();
    assert_eq!(report1, report2);
    let chain1 = std::fs::read(dir.path().join("fit1/chain.csv")).unwrap();
    let chain2 = std::fs::read(dir.path().join("fit2/chain.csv")).unwrap();
    assert_eq!(chain1, chain2);
}

#[test]
fn ideal_fit_has_a_single_parameter() {
    let dir = tempfile::tempdir().unwrap();
    assert_code(&run_in(dir.path(), SIM_ARGS), 0);
    let out = run_in(
        dir.path(),
        &[
            "fit", "--data", "data.csv", "--ideal", "--walkers", "16", "--steps", "400",
            "--burn-in", "100", "--thin", "1", "--seed", "3", "--out-dir", "ideal",
        ],
    );
    assert!(matches!(out.status.code(), Some(0) | Some(3)));
    let report = FitReport::read_from(dir.path().join("ideal/report.txt")).unwrap();
    assert!(report.ideal);
    assert_eq!(report.k_params, 1);
    assert_eq!(report.estimates.len(), 1);
    assert_eq!(report.estimates[0].name, "eta");
    let model = report.map_model().unwrap();
    assert_eq!(model.internal_efficiencies(), &[1.0]);
}

#[test]
fn bad_sampler_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_code(&run_in(dir.path(), SIM_ARGS), 0);
    for args in [
        vec!["fit", "--data", "data.csv", "--seed", "1", "--out-dir", "f", "--walkers", "3"],
        vec!["fit", "--data", "data.csv", "--seed", "1", "--out-dir", "f", "--stretch", "1.0"],
        vec!["fit", "--data", "data.csv", "--seed", "1", "--out-dir", "f", "--bins", "5"],
        vec![
            "fit", "--data", "data.csv", "--seed", "1", "--out-dir", "f",
            "--log10-eta-min", "0", "--log10-eta-max", "-12",
        ],
    ] {
        assert_code(&run_in(dir.path(), &args), 1);
    }
}

#[test]
fn report_emits_matching_plot_tables() {
    let dir = tempfile::tempdir().unwrap();
    assert_code(&run_in(dir.path(), SIM_ARGS), 0);
    let fit_out = run_in(dir.path(), &fit_args("fit"));
    assert!(matches!(fit_out.status.code(), Some(0) | Some(3)));

    let out = run_in(
        dir.path(),
        &[
            "report",
            "--report",
            "fit/report.txt",
            "--data",
            "data.csv",
            "--chain",
            "fit/chain.csv",
            "--out-dir",
            "plots",
        ],
    );
    assert_code(&out, 0);

    let report = FitReport::read_from(dir.path().join("fit/report.txt")).unwrap();
    let model = report.map_model().unwrap();
    let data = Dataset::read_from(dir.path().join("data.csv")).unwrap();

    // curve file contains every data abscissa with the exact model value
    let curve = std::fs::read_to_string(dir.path().join("plots/best_fit_curve.csv")).unwrap();
    let mut rows = std::collections::HashMap::new();
    for line in curve.lines().skip(1) {
        let (n, p) = line.split_once(',').unwrap();
        rows.insert(n.to_string(), p.parse::<f64>().unwrap());
    }
    for point in &data.points {
        let key = point.mean_photons.to_string();
        let curve_p = rows.get(&key).expect("data abscissa missing from curve");
        let model_p = model.click_probability(CoherentInput::new(point.mean_photons).unwrap());
        assert!((curve_p - model_p).abs() <= 1e-12, "{curve_p} vs {model_p}");
    }

    // log grid covers [min/3, max*3]
    let grid: Vec<f64> = curve
        .lines()
        .skip(1)
        .map(|l| l.split_once(',').unwrap().0.parse().unwrap())
        .collect();
    let n_min = data.points.first().unwrap().mean_photons;
    let n_max = data.points.last().unwrap().mean_photons;
    assert!(grid.first().unwrap() <= &(n_min / 3.0 * 1.001));
    assert!(grid.last().unwrap() >= &(n_max * 3.0 * 0.999));

    // ideal comparison curve uses eta_ideal = eta_hat * p1_hat
    let eta_hat = report.estimate("eta").unwrap().median;
    let p1_hat = report.estimate("p1").unwrap().median;
    let ideal = dtomo::DetectorModel::ideal(eta_hat * p1_hat).unwrap();
    let ideal_curve = std::fs::read_to_string(dir.path().join("plots/ideal_curve.csv")).unwrap();
    let second_row = ideal_curve.lines().nth(1).unwrap();
    let (n, p) = second_row.split_once(',').unwrap();
    let n: f64 = n.parse().unwrap();
    let p: f64 = p.parse().unwrap();
    let expected = ideal.click_probability(CoherentInput::new(n).unwrap());
    assert!((p - expected).abs() <= 1e-15, "{p} vs {expected}");

    assert!(dir.path().join("plots/data_with_errors.csv").exists());
    assert!(dir.path().join("plots/residuals.csv").exists());
    assert!(dir.path().join("plots/corner_2d_eta_p1.csv").exists());

    // missing inputs are data errors
    let missing = run_in(
        dir.path(),
        &[
            "report", "--report", "nope.txt", "--data", "data.csv", "--out-dir", "plots2",
        ],
    );
    assert_code(&missing, 2);
}

#[test]
fn select_ranks_models_and_marks_the_winner() {
    let dir = tempfile::tempdir().unwrap();
    assert_code(&run_in(dir.path(), SIM_ARGS), 0);

    let out = run_in(
        dir.path(),
        &[
            "select", "--data", "data.csv", "--max-n-max", "1", "--walkers", "16", "--steps",
            "500", "--burn-in", "150", "--thin", "1", "--seed", "11", "--out", "select.csv",
        ],
    );
    assert_code(&out, 0);
    let table = std::fs::read_to_string(dir.path().join("select.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3); // header + ideal + n_max=1
    assert!(lines[0].starts_with("model,k,"));
    let winners: Vec<&&str> = lines[1..].iter().filter(|l| l.contains(",true,")).collect();
    assert_eq!(winners.len(), 1);
    // the winner's delta_aic column is exactly 0
    let winner_fields: Vec<&str> = winners[0].split(',').collect();
    assert_eq!(winner_fields[5], "0");
}

#[test]
fn out_dir_env_var_redirects_relative_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let outside = tempfile::tempdir().unwrap();
    let out = bin()
        .current_dir(dir.path())
        .env("DTOMO_OUT_DIR", outside.path())
        .args(SIM_ARGS)
        .output()
        .unwrap();
    assert_code(&out, 0);
    assert!(outside.path().join("data.csv").exists());
    assert!(!dir.path().join("data.csv").exists());
}
