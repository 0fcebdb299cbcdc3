//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//!
//! Run with `cargo test -p dtomo --test acceptance -- --nocapture` to see the
//! per-criterion lines.

use std::sync::OnceLock;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use dtomo::likelihood::{harmonic_orthogonal_term, ModelSpec};
use dtomo::sampler::{sample_stretch_factor, SplitMix64};
use dtomo::{
    classify_events, dead_time_overlap_rate, fit, generate_dataset, generate_with_tags,
    log_spaced_powers, run_sampler, sample_target, select_models, taper_effective_p1,
    BridgeGeometry, CoherentInput, Dataset, DetectorModel, EnsembleState, ExperimentMeta,
    FitOptions, FitResult, GroundTruth, PriorSpec, RawTag, SamplerSettings, TagStream,
    WindowConfig,
};

const REF_ETA: f64 = 1.60e-6;
const REF_P1: f64 = 0.568;

fn check(criterion: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[{tag}] {criterion}: {detail}");
    assert!(pass, "{criterion}: {detail}");
}

fn meta() -> ExperimentMeta {
    ExperimentMeta::new(850e-9, 5e6).unwrap()
}

/// The standard fixture: reference-device truth, 25 log-spaced powers from 5 nW to
/// 7 uW, 3e5 trials per setting, 3% power noise.
fn standard_fixture(seed: u64) -> Dataset {
    let truth = GroundTruth {
        model: DetectorModel::new(REF_ETA, vec![REF_P1]).unwrap(),
        power_settings: log_spaced_powers(5e-9, 7e-6, 25).unwrap(),
        trials_per_setting: 300_000,
        power_noise_relative: 0.03,
        dark_rate: 0.0,
        seed,
    };
    generate_dataset(&truth, &meta()).unwrap()
}

fn ideal_fixture(seed: u64) -> Dataset {
    let truth = GroundTruth {
        model: DetectorModel::ideal(REF_ETA).unwrap(),
        power_settings: log_spaced_powers(5e-9, 7e-6, 25).unwrap(),
        trials_per_setting: 300_000,
        power_noise_relative: 0.03,
        dark_rate: 0.0,
        seed,
    };
    generate_dataset(&truth, &meta()).unwrap()
}

struct FixtureFit {
    result: FitResult,
    elapsed_secs: f64,
}

fn fixture_fit() -> &'static FixtureFit {
    static FIT: OnceLock<FixtureFit> = OnceLock::new();
    FIT.get_or_init(|| {
        let data = standard_fixture(42);
        let settings = SamplerSettings::new(4000, 42);
        let start = Instant::now();
        let result = fit(&data, ModelSpec::fitted(1), &FitOptions::new(settings)).unwrap();
        FixtureFit {
            result,
            elapsed_secs: start.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn criterion_1_parameter_recovery_at_reference_scale() {
    let fixture = fixture_fit();
    let result = &fixture.result;
    let eta = &result.summary.params[0];
    let p1 = &result.summary.params[1];

    let eta_ok = (eta.median - REF_ETA).abs() <= 3.0 * eta.half_width();
    let p1_ok = (p1.median - REF_P1).abs() <= 3.0 * p1.half_width();
    let width_ok = p1.half_width() <= 0.03;
    let runtime_ok = fixture.elapsed_secs <= 300.0;

    check(
        "criterion 1 (parameter recovery)",
        eta_ok && p1_ok && width_ok && runtime_ok,
        &format!(
            "eta={:.3e} (+/-{:.2e}, truth {REF_ETA:.3e}), p1={:.4} (+/-{:.4}, truth {REF_P1}), fit took {:.1}s",
            eta.median,
            eta.half_width(),
            p1.median,
            p1.half_width(),
            fixture.elapsed_secs
        ),
    );
}

#[test]
fn criterion_2_eta_p1_anticorrelation() {
    let result = &fixture_fit().result;
    let corr = result.summary.correlation_between(0, 1);
    check(
        "criterion 2 (anti-correlation)",
        corr < 0.0,
        &format!("corr(eta, p1) = {corr:.3}"),
    );
}

#[test]
fn criterion_3_model_selection() {
    let selection_settings = |seed: u64| SamplerSettings {
        walkers: 32,
        steps: 1500,
        burn_in: Some(500),
        thin: Some(2),
        stretch_scale: 2.0,
        seed,
    };

    let mut two_param_wins = 0;
    for k in 0..10u64 {
        let data = standard_fixture(100 + k);
        let opts = FitOptions::new(selection_settings(200 + k));
        let rows = select_models(&data, 2, &opts).unwrap();
        let best = rows.iter().find(|r| r.best).unwrap();
        if !best.spec.ideal && best.spec.n_max == 1 {
            two_param_wins += 1;
        }
    }

    let data = ideal_fixture(77);
    let rows = select_models(&data, 2, &FitOptions::new(selection_settings(78))).unwrap();
    let ideal_best = rows.iter().find(|r| r.best).unwrap().spec.ideal;

    check(
        "criterion 3 (model selection)",
        two_param_wins >= 8 && ideal_best,
        &format!("2-parameter model won {two_param_wins}/10 seeds; ideal fixture picks k=1: {ideal_best}"),
    );
}

#[test]
fn criterion_4_sampler_calibration() {
    // Correlated 2D Gaussian with known moments.
    let mean = [1.0, -0.5];
    let cov = [[2.0, 1.2], [1.2, 2.0]];
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let inv = [
        [cov[1][1] / det, -cov[0][1] / det],
        [-cov[1][0] / det, cov[0][0] / det],
    ];
    let target = move |x: &[f64]| {
        let d = [x[0] - mean[0], x[1] - mean[1]];
        -0.5 * (d[0] * (inv[0][0] * d[0] + inv[0][1] * d[1])
            + d[1] * (inv[1][0] * d[0] + inv[1][1] * d[1]))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let positions: Vec<Vec<f64>> = (0..32)
        .map(|_| vec![rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5])
        .collect();
    let state = EnsembleState::from_positions(positions, &target, 19).unwrap();
    let chain = sample_target(&target, state, 20_000, 2.0, vec!["x0".into(), "x1".into()])
        .burn_and_thin(2000, 1);

    let n = chain.n_samples() as f64;
    let tau = chain.autocorrelation_time().unwrap();
    let sample_mean: Vec<f64> = (0..2)
        .map(|k| chain.iter_flat().map(|(_, x)| x[k]).sum::<f64>() / n)
        .collect();
    let mut sample_cov = [[0.0f64; 2]; 2];
    for (_, x) in chain.iter_flat() {
        for i in 0..2 {
            for j in 0..2 {
                sample_cov[i][j] += (x[i] - sample_mean[i]) * (x[j] - sample_mean[j]);
            }
        }
    }
    for row in sample_cov.iter_mut() {
        for v in row.iter_mut() {
            *v /= n - 1.0;
        }
    }

    let mut mean_ok = true;
    let mut mean_detail = String::new();
    for k in 0..2 {
        let se = (cov[k][k] * tau[k] / n).sqrt();
        let dev = (sample_mean[k] - mean[k]).abs();
        mean_ok &= dev <= 3.0 * se;
        mean_detail.push_str(&format!("mean[{k}] off by {:.2} SE; ", dev / se));
    }
    let mut cov_ok = true;
    for i in 0..2 {
        for j in 0..2 {
            let rel = (sample_cov[i][j] - cov[i][j]).abs() / cov[i][j].abs();
            cov_ok &= rel <= 0.05;
        }
    }

    // Stretch-factor draws against the analytic 1/sqrt(z) density: decile
    // edges z_k = ((a-1) k/10 + 1)^2 / a must each hold 10% of the draws.
    let a = 2.0;
    let draws = 1_000_000usize;
    let mut stream = SplitMix64::new(777);
    let edges: Vec<f64> = (0..=10)
        .map(|k| {
            let s = (a - 1.0) * k as f64 / 10.0 + 1.0;
            s * s / a
        })
        .collect();
    let mut counts = [0u64; 10];
    for _ in 0..draws {
        let z = sample_stretch_factor(a, stream.next_f64());
        let bin = edges[..10].iter().rposition(|&e| z >= e).unwrap();
        counts[bin] += 1;
    }
    // Each decile's occupancy must sit within 1% of the expected tenth.
    let z_worst = counts
        .iter()
        .map(|&c| (c as f64 / (draws as f64 / 10.0) - 1.0).abs())
        .fold(0.0f64, f64::max);
    let z_ok = z_worst <= 0.01;

    check(
        "criterion 4 (sampler calibration)",
        mean_ok && cov_ok && z_ok,
        &format!(
            "{mean_detail}cov rel err max {:.4}; z-decile worst dev {:.4}",
            (0..2)
                .flat_map(|i| (0..2).map(move |j| (i, j)))
                .map(|(i, j)| ((sample_cov[i][j] - cov[i][j]) / cov[i][j]).abs())
                .fold(0.0f64, f64::max),
            z_worst
        ),
    );
}

#[test]
fn criterion_5_likelihood_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);

    // Effective-variance closed form on a straight line.
    let mut line_ok = true;
    for _ in 0..10_000 {
        let a = 10f64.powf(rng.gen_range(-6.0..0.0));
        let n: f64 = rng.gen_range(1.0..1e6);
        let p_meas: f64 = rng.gen_range(0.0..1.0);
        let sigma_p = rng.gen_range(1e-5..1e-1);
        let sigma_n = rng.gen_range(1e-3..1e3);
        let delta_p = a * n - p_meas;
        let delta_n = p_meas / a - n;
        let term = harmonic_orthogonal_term(delta_p, delta_n, sigma_p, sigma_n);
        let closed = delta_p * delta_p / (sigma_p * sigma_p + a * a * sigma_n * sigma_n);
        if (term - closed).abs() > 1e-9 * closed.abs() {
            line_ok = false;
            break;
        }
    }

    // Harmonic bound on random residual configurations.
    let mut bound_ok = true;
    for _ in 0..10_000 {
        let delta_p = rng.gen_range(-1.0..1.0);
        let delta_n = rng.gen_range(-1e6..1e6);
        let sigma_p = rng.gen_range(1e-6..1.0);
        let sigma_n = rng.gen_range(1e-3..1e6);
        let term = harmonic_orthogonal_term(delta_p, delta_n, sigma_p, sigma_n);
        let vertical = (delta_p / sigma_p).powi(2);
        let horizontal = (delta_n / sigma_n).powi(2);
        if term > vertical.min(horizontal) * (1.0 + 1e-12) {
            bound_ok = false;
            break;
        }
    }

    // Zero residual contributes exactly zero.
    let model = DetectorModel::new(1e-3, vec![0.6]).unwrap();
    let n = 700.0;
    let p = model.click_probability(CoherentInput::new(n).unwrap());
    let point = dtomo::DataPoint::new(n, 10.0, p, 1e-3, 1, 10).unwrap();
    let zero_ok =
        dtomo::orthogonal_chi_square_term(&model, &point).unwrap().value == 0.0;

    check(
        "criterion 5 (likelihood correctness)",
        line_ok && bound_ok && zero_ok,
        &format!("closed form: {line_ok}, harmonic bound: {bound_ok}, zero residual exact: {zero_ok}"),
    );
}

#[test]
fn criterion_6_model_math() {
    let mut rng = ChaCha8Rng::seed_from_u64(66);

    // Inverse round trip in probability across [1e-8, 1 - 1e-8].
    let mut inverse_ok = true;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let eta = 10f64.powf(rng.gen_range(-8.0..-0.5));
        let n_max = rng.gen_range(1..4);
        let mut p: Vec<f64> = (0..n_max).map(|_| rng.gen_range(0.05..1.0)).collect();
        p.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let model = DetectorModel::new(eta, p).unwrap();
        for k in 0..=40 {
            let y = if k <= 20 {
                10f64.powf(-8.0 + 7.7 * k as f64 / 20.0) // 1e-8 .. ~0.5
            } else {
                1.0 - 10f64.powf(-8.0 + 7.7 * (40 - k) as f64 / 20.0)
            };
            let n = model.inverse_click_probability(y).unwrap();
            let back = model.click_probability(CoherentInput::new(n).unwrap());
            let err = (back - y).abs();
            worst = worst.max(err);
            if err >= 1e-10 {
                inverse_ok = false;
            }
        }
    }

    // Brute-force Poisson sum, mu <= 50.
    let mut brute_ok = true;
    for _ in 0..300 {
        let n_max = rng.gen_range(1..5);
        let mut p: Vec<f64> = (0..n_max).map(|_| rng.gen_range(0.0..1.0)).collect();
        p.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let eta = 10f64.powf(rng.gen_range(-6.0..0.0));
        let model = DetectorModel::new(eta, p.clone()).unwrap();
        let mu = 10f64.powf(rng.gen_range(-6.0..f64::log10(50.0)));

        let mut pmf = (-mu).exp();
        let mut brute = 0.0;
        for i in 0..=200usize {
            let p_i = if i == 0 {
                0.0
            } else if i <= n_max {
                p[i - 1]
            } else {
                1.0
            };
            brute += p_i * pmf;
            pmf *= mu / (i as f64 + 1.0);
        }
        let direct = model.click_probability(CoherentInput::new(mu / eta).unwrap());
        if (direct - brute).abs() > 1e-12 {
            brute_ok = false;
        }
    }

    // Low-flux slope against finite differences.
    let mut slope_ok = true;
    for _ in 0..100 {
        let eta = 10f64.powf(rng.gen_range(-8.0..-0.5));
        let p1 = rng.gen_range(0.05..1.0);
        let model = DetectorModel::new(eta, vec![p1]).unwrap();
        let slope = model.low_flux_slope();
        let delta = 1e-9 / slope;
        let fd = model.click_probability(CoherentInput::new(delta).unwrap()) / delta;
        if ((fd - slope) / slope).abs() > 1e-6 {
            slope_ok = false;
        }
    }

    check(
        "criterion 6 (model math)",
        inverse_ok && brute_ok && slope_ok,
        &format!(
            "round trip worst |P(Pinv(y)) - y| = {worst:.2e}; brute-force sum: {brute_ok}; slope FD: {slope_ok}"
        ),
    );
}

#[test]
fn criterion_7_event_pipeline() {
    // Uniform dark events over a 200 ns period against a 2 ns window.
    let window = WindowConfig::new(50e-9, 2e-9, 200e-9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n_dark = 50_000u64;
    let tags: Vec<RawTag> = (0..n_dark)
        .map(|i| RawTag {
            pulse_index: i,
            delay: rng.gen::<f64>() * 200e-9,
        })
        .collect();
    let classified = classify_events(&tags, &window).unwrap();
    let rejection = classified.dark_count as f64 / n_dark as f64;
    // expected rejection 1 - 2/200 = 0.99; binomial tolerance around it
    let sigma = (0.99 * 0.01 / n_dark as f64).sqrt();
    let rejection_ok = rejection >= 0.98 && (rejection - 0.99).abs() <= 5.0 * sigma;

    let (events_per_s, _) = dead_time_overlap_rate(1000.0, 14e-9, 5e6).unwrap();
    let dead_time_ok = (events_per_s - 70.0).abs() < 1e-9 && (events_per_s - 75.0).abs() <= 0.2 * 75.0;

    check(
        "criterion 7 (event pipeline)",
        rejection_ok && dead_time_ok,
        &format!("dark rejection {rejection:.4} (>= 0.98); dead-time estimate {events_per_s} events/s vs ~75 +/- 20%"),
    );
}

#[test]
fn criterion_8_geometry_model() {
    let geometry = BridgeGeometry::with_default_angle(120e-9, 120e-9, 40e-9, 500e-9).unwrap();
    let p1 = taper_effective_p1(&geometry);

    // Independent numerical integration of the width profile.
    let steps = 1_000_000;
    let dx = geometry.taper_length / steps as f64;
    let quad_area: f64 = (0..steps)
        .map(|i| geometry.width_at((i as f64 + 0.5) * dx) * dx)
        .sum();
    let bridge = geometry.bridge_length * geometry.bridge_width;
    let p1_quad = bridge / (bridge + 2.0 * quad_area);

    let closed_ok = (p1 - 14400.0 / 27200.0).abs() < 1e-12;
    let quad_ok = (p1 - p1_quad).abs() < 1e-6;
    let reference_ok = (p1 - REF_P1).abs() <= 0.10;

    let mut monotone_ok = true;
    let mut prev = 1.0 + 1e-12;
    for k in 0..40 {
        let g = BridgeGeometry {
            taper_length: k as f64 * 5e-9,
            ..geometry
        };
        let v = taper_effective_p1(&g);
        monotone_ok &= v < prev;
        prev = v;
    }

    check(
        "criterion 8 (geometry model)",
        closed_ok && quad_ok && reference_ok && monotone_ok,
        &format!("p1 = {p1:.4} (closed form {:.4}, quadrature {p1_quad:.4}, reference fit {REF_P1})", 14400.0 / 27200.0),
    );
}

#[test]
fn criterion_9_determinism_and_round_trips() {
    // Bitwise-identical chains regardless of worker threads.
    let data = standard_fixture(9);
    let small = SamplerSettings {
        walkers: 16,
        steps: 150,
        burn_in: Some(50),
        thin: Some(1),
        stretch_scale: 2.0,
        seed: 91,
    };
    let run_with_threads = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| run_sampler(&data, ModelSpec::fitted(1), &PriorSpec::default(), &small).unwrap())
    };
    let chain_1 = run_with_threads(1).chain;
    let chain_4 = run_with_threads(4).chain;
    let threads_ok = chain_1 == chain_4;

    // Same seed, same outputs; different seed, different outputs.
    let repeat_ok = standard_fixture(9) == data && standard_fixture(10) != data;

    // Lossless file round trips: dataset, chain, tag streams.
    let dataset_ok = {
        let text = data.to_text();
        Dataset::from_reader(text.as_bytes()).unwrap() == data
    };
    let chain_ok = {
        let text = chain_1.to_text();
        dtomo::Chain::from_reader(text.as_bytes()).unwrap() == chain_1
    };
    let tags_ok = {
        let truth = GroundTruth {
            model: DetectorModel::new(1e-4, vec![0.6]).unwrap(),
            power_settings: log_spaced_powers(1e-9, 1e-7, 3).unwrap(),
            trials_per_setting: 2000,
            power_noise_relative: 0.03,
            dark_rate: 500.0,
            seed: 12,
        };
        let window = WindowConfig::new(5e-8, 2e-9, 2e-7).unwrap();
        let (_, streams) = generate_with_tags(&truth, &meta(), &window).unwrap();
        streams
            .iter()
            .all(|s| TagStream::from_reader(s.to_text().as_bytes()).unwrap() == *s)
    };

    check(
        "criterion 9 (determinism and round trips)",
        threads_ok && repeat_ok && dataset_ok && chain_ok && tags_ok,
        &format!("threads: {threads_ok}, reseed: {repeat_ok}, dataset: {dataset_ok}, chain: {chain_ok}, tags: {tags_ok}"),
    );
}
