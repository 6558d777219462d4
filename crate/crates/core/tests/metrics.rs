use std::f64::consts::PI;

use beamform::beamformers::{oracle_mvdr_weights, BeamWeights, Normalization, SteeringVector};
use beamform::cxlinalg::sample_covariance;
use beamform::metrics::{
    output_sinr_improvement, ratio_dominance_table, robustness_ratio, robustness_ratio_quadratic,
    si_sdr, EvalRecord, EvalReport, Provenance, RobustnessScenario, DEFAULT_VAD_THRESHOLD_DB,
    SI_SDR_CAP_DB,
};
use beamform::stft::{StftTensor, Window};
use beamform::Error;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scenario(speech: f64, noise: f64, delta: f64, l1: usize, l2: usize) -> RobustnessScenario {
    RobustnessScenario {
        speech_power: speech,
        noise_power: noise,
        floor_delta: delta,
        frames_speech_absent: l1,
        frames_speech_present: l2,
    }
}

#[test]
fn quadratic_ratio_matches_the_frozen_hand_computation() {
    // L = 100 frames, half of them speech-active, speech and noise at
    // equal power: L / (L2 * eps) = 100 / (50 * 1) = 2.
    let sc = scenario(1.0, 1.0, 1e-4, 50, 50);
    let r2 = robustness_ratio_quadratic(&sc).unwrap();
    assert!((r2 - 2.0).abs() <= 1e-12, "r2 = {r2}");
    // The general expression at p = 2 must collapse to the same value.
    let rp = robustness_ratio(&sc, 2.0).unwrap();
    assert!((rp - r2).abs() <= 1e-12, "rp = {rp}, r2 = {r2}");
}

#[test]
fn ratios_coincide_when_speech_power_sits_at_the_floor() {
    for &p in &[0.0, 0.2, 0.5, 1.0, 1.5, 1.9] {
        let sc = scenario(1e-3, 0.2, 1e-3, 120, 30);
        let rp = robustness_ratio(&sc, p).unwrap();
        let r2 = robustness_ratio_quadratic(&sc).unwrap();
        assert!(
            (rp - r2).abs() <= 1e-12 * r2.abs(),
            "p = {p}: rp = {rp}, r2 = {r2}"
        );
    }
}

#[test]
fn shrinking_the_shape_parameter_raises_the_ratio_above_the_floor() {
    // Speech well above the floor: smaller p weights loud frames down
    // harder, so the noise-frame share grows monotonically as p drops.
    let sc = scenario(0.5, 0.05, 1e-4, 200, 100);
    let r2 = robustness_ratio_quadratic(&sc).unwrap();
    let ps = [1.9, 1.5, 1.0, 0.5, 0.0];
    let mut prev = r2;
    for &p in &ps {
        let rp = robustness_ratio(&sc, p).unwrap();
        assert!(rp > prev, "p = {p}: expected {rp} > {prev}");
        prev = rp;
    }
}

#[test]
fn ratio_ordering_follows_the_sign_of_speech_power_minus_floor() {
    for &p in &[0.0, 0.5, 1.0, 1.7] {
        let above = scenario(1e-2, 0.1, 1e-4, 80, 40);
        let below = scenario(1e-6, 0.1, 1e-4, 80, 40);
        let r2_above = robustness_ratio_quadratic(&above).unwrap();
        let r2_below = robustness_ratio_quadratic(&below).unwrap();
        assert!(robustness_ratio(&above, p).unwrap() > r2_above);
        assert!(robustness_ratio(&below, p).unwrap() < r2_below);
    }
}

#[test]
fn dominance_table_agrees_with_the_floor_comparison() {
    let template = scenario(1.0, 0.08, 1e-3, 150, 50);
    let speech: Vec<f64> = (0..25)
        .map(|i| 1e-3 * 10f64.powf(-2.0 + 4.0 * i as f64 / 24.0))
        .collect();
    let shapes = [0.0, 0.5, 1.0, 1.5, 1.99];
    let table = ratio_dominance_table(&template, &speech, &shapes).unwrap();
    assert_eq!(table.len(), speech.len() * shapes.len());
    for point in &table {
        let expected = point.speech_power >= template.floor_delta;
        assert_eq!(
            point.p_at_least_quadratic(),
            expected,
            "lambda_s = {}, p = {}: r_p = {}, r_2 = {}",
            point.speech_power,
            point.shape_p,
            point.ratio_p,
            point.ratio_quadratic
        );
    }
    // At p = 2 the two expressions are the same quantity.
    let flat = ratio_dominance_table(&template, &speech, &[2.0]).unwrap();
    for point in &flat {
        assert!(point.difference().abs() <= 1e-12 * point.ratio_quadratic.max(1.0));
    }
    assert!(matches!(
        ratio_dominance_table(&template, &[], &shapes),
        Err(Error::EmptyInput(_))
    ));
}

#[test]
fn robustness_ratio_rejects_degenerate_scenarios() {
    let no_speech_frames = scenario(1.0, 1.0, 1e-4, 10, 0);
    assert!(matches!(
        robustness_ratio(&no_speech_frames, 1.0),
        Err(Error::UndefinedMetric(_))
    ));
    let zero_noise = scenario(1.0, 0.0, 1e-4, 10, 10);
    assert!(matches!(
        robustness_ratio(&zero_noise, 1.0),
        Err(Error::InvalidParameter(_))
    ));
    let ok = scenario(1.0, 1.0, 1e-4, 10, 10);
    assert!(matches!(
        robustness_ratio(&ok, 2.5),
        Err(Error::InvalidParameter(_))
    ));
    assert!(matches!(
        robustness_ratio(&ok, -0.1),
        Err(Error::InvalidParameter(_))
    ));
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
        })
        .collect()
}

#[test]
fn si_sdr_matches_an_orthogonal_projection_oracle() {
    // Build est = ref + sigma * w with w orthogonalized against ref by
    // Gram-Schmidt. The projection step inside SI-SDR then recovers the
    // reference exactly, so the metric equals the constructed energy
    // ratio to rounding.
    let mut rng = ChaCha8Rng::seed_from_u64(07);
    let reference = gaussian(&mut rng, 4096);
    let raw = gaussian(&mut rng, 4096);
    let ref_energy: f64 = reference.iter().map(|x| x * x).sum();
    let dot: f64 = raw.iter().zip(&reference).map(|(a, b)| a * b).sum();
    let w: Vec<f64> = raw
        .iter()
        .zip(&reference)
        .map(|(a, b)| a - dot / ref_energy * b)
        .collect();
    let w_energy: f64 = w.iter().map(|x| x * x).sum();
    for target_db in [0.0, 10.0, 25.0] {
        let sigma = (ref_energy / w_energy * 10f64.powf(-target_db / 10.0)).sqrt();
        let est: Vec<f64> = reference
            .iter()
            .zip(&w)
            .map(|(r, wi)| r + sigma * wi)
            .collect();
        let got = si_sdr(&est, &reference).unwrap();
        assert!(
            (got - target_db).abs() <= 1e-9,
            "target {target_db} dB, got {got} dB"
        );
    }
}

#[test]
fn si_sdr_is_invariant_to_gain_on_either_signal() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let reference = gaussian(&mut rng, 1000);
    let noise = gaussian(&mut rng, 1000);
    let est: Vec<f64> = reference
        .iter()
        .zip(&noise)
        .map(|(r, n)| r + 0.1 * n)
        .collect();
    let base = si_sdr(&est, &reference).unwrap();
    let est_scaled: Vec<f64> = est.iter().map(|x| 37.0 * x).collect();
    let ref_scaled: Vec<f64> = reference.iter().map(|x| 0.003 * x).collect();
    assert!((si_sdr(&est_scaled, &reference).unwrap() - base).abs() <= 1e-9);
    assert!((si_sdr(&est, &ref_scaled).unwrap() - base).abs() <= 1e-9);
}

#[test]
fn si_sdr_is_capped_for_a_perfect_estimate() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let reference = gaussian(&mut rng, 256);
    assert_eq!(si_sdr(&reference, &reference).unwrap(), SI_SDR_CAP_DB);
    // A scaled copy is still perfect under scale invariance.
    let scaled: Vec<f64> = reference.iter().map(|x| -2.5 * x).collect();
    assert_eq!(si_sdr(&scaled, &reference).unwrap(), SI_SDR_CAP_DB);
}

#[test]
fn si_sdr_rejects_bad_inputs() {
    let a = vec![1.0, 2.0, 3.0];
    assert!(matches!(
        si_sdr(&a, &[1.0, 2.0]),
        Err(Error::DimensionMismatch(_))
    ));
    assert!(matches!(si_sdr(&[], &[]), Err(Error::EmptyInput(_))));
    assert!(matches!(
        si_sdr(&a, &[0.0, 0.0, 0.0]),
        Err(Error::UndefinedMetric(_))
    ));
}

/// Deterministic complex circular Gaussian.
fn cgauss(rng: &mut ChaCha8Rng) -> Complex64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    let r = (-u1.ln()).sqrt();
    Complex64::new(r * (2.0 * PI * u2).cos(), r * (2.0 * PI * u2).sin())
}

/// Synthetic two-channel scene in the STFT domain: desired source with
/// per-bin steering `h`, interferer with steering `g`, plus white sensor
/// noise at `sensor` amplitude on the interference image.
fn synthetic_scene(
    num_bins: usize,
    num_frames: usize,
    sensor: f64,
    seed: u64,
) -> (StftTensor, StftTensor, SteeringVector) {
    let frame_len = (num_bins - 1) * 2;
    let hop = frame_len / 2;
    let source_len = (num_frames - 1) * hop;
    let mut desired = StftTensor::zeros(
        2,
        num_frames,
        frame_len,
        hop,
        Window::SqrtHann,
        16_000,
        source_len,
    )
    .unwrap();
    let mut ipn = desired.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = Vec::with_capacity(num_bins);
    for k in 0..num_bins {
        let phi = 0.9 * PI * k as f64 / num_bins as f64;
        // Keep the interferer's inter-channel phase at least a quarter
        // turn away from the desired one at every bin, so no bin is
        // blind to it.
        let psi = phi - PI * (0.5 + 0.3 * k as f64 / num_bins as f64);
        let h = [Complex64::new(1.0, 0.0), Complex64::from_polar(1.0, phi)];
        let g = [Complex64::new(1.0, 0.0), Complex64::from_polar(1.0, psi)];
        raw.push(h.to_vec());
        for l in 0..num_frames {
            let s = cgauss(&mut rng);
            let n = cgauss(&mut rng);
            for m in 0..2 {
                desired.set(m, k, l, h[m] * s);
                ipn.set(m, k, l, g[m] * n + sensor * cgauss(&mut rng));
            }
        }
    }
    let steering = SteeringVector::new(raw, 0, Normalization::ReferenceChannel).unwrap();
    (desired, ipn, steering)
}

#[test]
fn reference_channel_selector_scores_exactly_zero_improvement() {
    let (desired, ipn, _) = synthetic_scene(33, 40, 0.05, 21);
    let w = BeamWeights::channel_selector(33, 2, 0).unwrap();
    let r = output_sinr_improvement(&w, &desired, &ipn, 0, DEFAULT_VAD_THRESHOLD_DB).unwrap();
    assert_eq!(r.improvement_db, 0.0);
    assert_eq!(r.input_db, r.output_db);
    assert_eq!(r.active_frames, 40);
}

#[test]
fn oracle_weights_on_a_synthetic_scene_gain_over_twenty_decibels() {
    let (desired, ipn, steering) = synthetic_scene(33, 200, 1e-3, 22);
    let covariances: Vec<_> = (0..33)
        .map(|k| sample_covariance(&ipn.bin_snapshots(k)).unwrap())
        .collect();
    let w = oracle_mvdr_weights(&covariances, &steering, 1e-10).unwrap();
    let r = output_sinr_improvement(&w, &desired, &ipn, 0, DEFAULT_VAD_THRESHOLD_DB).unwrap();
    assert!(
        r.improvement_db > 20.0,
        "expected > 20 dB, got {} dB",
        r.improvement_db
    );
    // The distortionless constraint keeps the desired image intact at
    // the reference channel, so output SINR must not fall below input.
    assert!(r.output_db > r.input_db);
}

#[test]
fn quiet_frames_are_excluded_from_the_sinr_average() {
    let num_bins = 9;
    let frame_len = 16;
    let mut desired =
        StftTensor::zeros(2, 6, frame_len, 8, Window::SqrtHann, 8_000, 40).unwrap();
    let mut ipn = desired.clone();
    // Frames 0..3 carry strong speech; frames 4 and 5 are 60 dB down,
    // far below the -40 dB activity threshold.
    for k in 0..num_bins {
        for l in 0..6 {
            let level = if l < 4 { 1.0 } else { 1e-3 };
            desired.set(0, k, l, Complex64::new(level, 0.0));
            desired.set(1, k, l, Complex64::new(level, 0.0));
            // Interference only in the quiet frames: if they were
            // counted, input SINR would be dragged down.
            let v = if l < 4 { 1e-6 } else { 10.0 };
            ipn.set(0, k, l, Complex64::new(v, 0.0));
            ipn.set(1, k, l, Complex64::new(v, 0.0));
        }
    }
    let w = BeamWeights::channel_selector(num_bins, 2, 0).unwrap();
    let r = output_sinr_improvement(&w, &desired, &ipn, 0, DEFAULT_VAD_THRESHOLD_DB).unwrap();
    assert_eq!(r.active_frames, 4);
    // Active-frame SINR: |1|^2 / |1e-6|^2 per bin-frame = 120 dB.
    assert!((r.input_db - 120.0).abs() < 1e-9, "input {}", r.input_db);
}

#[test]
fn sinr_improvement_rejects_silent_and_mismatched_scenes() {
    let (desired, ipn, _) = synthetic_scene(17, 12, 0.05, 30);
    let w = BeamWeights::channel_selector(17, 2, 0).unwrap();

    let silent = StftTensor::zeros(2, 12, 32, 16, Window::SqrtHann, 16_000, 160).unwrap();
    assert!(matches!(
        output_sinr_improvement(&w, &silent, &ipn, 0, DEFAULT_VAD_THRESHOLD_DB),
        Err(Error::UndefinedMetric(_))
    ));
    assert!(matches!(
        output_sinr_improvement(&w, &desired, &silent, 0, DEFAULT_VAD_THRESHOLD_DB),
        Err(Error::UndefinedMetric(_))
    ));

    let w_bad = BeamWeights::channel_selector(9, 2, 0).unwrap();
    assert!(matches!(
        output_sinr_improvement(&w_bad, &desired, &ipn, 0, DEFAULT_VAD_THRESHOLD_DB),
        Err(Error::DimensionMismatch(_))
    ));

    let shaped = StftTensor::zeros(2, 11, 32, 16, Window::SqrtHann, 16_000, 150).unwrap();
    assert!(matches!(
        output_sinr_improvement(&w, &desired, &shaped, 0, DEFAULT_VAD_THRESHOLD_DB),
        Err(Error::InconsistentMetadata(_))
    ));

    assert!(matches!(
        output_sinr_improvement(&w, &desired, &ipn, 5, DEFAULT_VAD_THRESHOLD_DB),
        Err(Error::InvalidParameter(_))
    ));
}

fn record(scenario: &str, beamformer: &str, p: Option<f64>, iter: usize) -> EvalRecord {
    EvalRecord {
        scenario: scenario.to_string(),
        beamformer: beamformer.to_string(),
        shape_p: p,
        rt60_s: 0.16,
        input_sinr_db: 0.0,
        iteration: iter,
        si_sdr_db: 5.25,
        si_sdr_improvement_db: 4.0,
        output_sinr_improvement_db: 6.5,
        max_constraint_deviation: 1e-12,
        weight_delta: if iter == 0 { None } else { Some(1e-3) },
    }
}

#[test]
fn report_serialization_is_sorted_and_order_independent() {
    let prov = Provenance::new(42, "0123456789abcdef".into());
    let mut a = EvalReport::new(prov.clone());
    let mut b = EvalReport::new(prov);
    let rows = [
        record("standard", "cggd_mldr", Some(0.5), 2),
        record("standard", "mpdr", None, 0),
        record("standard", "cggd_mldr", Some(0.5), 0),
        record("standard", "mldr", None, 1),
    ];
    for r in &rows {
        a.push(r.clone()).unwrap();
    }
    for r in rows.iter().rev() {
        b.push(r.clone()).unwrap();
    }
    assert_eq!(a.to_csv_string(), b.to_csv_string());
    assert_eq!(a.to_json_string(), b.to_json_string());

    let csv = a.to_csv_string();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("scenario,beamformer,shape_p"));
    // Within one beamformer, iterations appear in ascending order.
    let i0 = lines.iter().position(|l| l.contains("cggd_mldr") && l.contains(",0,")).unwrap();
    let i2 = lines.iter().position(|l| l.contains("cggd_mldr") && l.contains(",2,")).unwrap();
    assert!(i0 < i2);
    assert!(!csv.contains("202"), "no dates expected in {csv}");
}

#[test]
fn report_round_trips_through_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let mut report = EvalReport::new(Provenance::new(7, "deadbeefdeadbeef".into()));
    report.push(record("s1", "mpdr", None, 0)).unwrap();
    report.push(record("s1", "cggd_mldr", Some(1.0), 3)).unwrap();
    report.write_json(&path).unwrap();
    let back = EvalReport::read_json(&path).unwrap();
    assert_eq!(back.provenance.seed, 7);
    assert_eq!(back.provenance.config_hash, "deadbeefdeadbeef");
    assert_eq!(back.records.len(), 2);
    let mut sorted = report.clone();
    sorted.records.sort_by_key(|r| r.key());
    assert_eq!(back, sorted);
}

#[test]
fn duplicate_report_rows_are_rejected() {
    let mut report = EvalReport::new(Provenance::new(1, "00ff00ff00ff00ff".into()));
    report.push(record("s", "mpdr", None, 0)).unwrap();
    assert!(matches!(
        report.push(record("s", "mpdr", None, 0)),
        Err(Error::InconsistentMetadata(_))
    ));
    // Same condition at a different iteration is a distinct row.
    report.push(record("s", "mpdr", None, 1)).unwrap();
}
