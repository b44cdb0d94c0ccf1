//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured numbers. Heavy tests serialize on a shared lock so their
//! self-timed budgets hold on small machines.

use captalk_core::corpus::{
    build_dialogue_dataset, eligible_speakers, expand_views, window_session, CaptionLevel,
    CaptionSet, DialogueSession, EligibilityRule, Turn, UtteranceRecord,
};
use captalk_core::cot::{discretize, BinThresholds, ProsodyBin};
use captalk_core::dsp::{estimate_f0, hz_to_semitone, log_mel, rms_energy, vad, DspConfig};
use captalk_core::evalkit::{sim, toy_embed};
use captalk_core::fhvae::generate::{reuse_experiment, ReuseRunConfig};
use captalk_core::fhvae::{
    analyze_utterance, caption_embedding, fit, grad_check, kl_monte_carlo, kl_z1, kl_z2,
    mean_z2_prior_distance, standardize_batch, FhvaeConfig, FitOptions, GaussianDiag,
    ModuleParams, UttData,
};
use captalk_core::fixtures::{synthesize_utterance, StyleSpec, VOICE_A, VOICE_B};
use captalk_core::num::mix_seed;
use captalk_core::seqlayout::{
    base_loss_dialogue, base_loss_single, frame_nll, sample_dec_frames, total_loss, Branch,
    ContextHashPredictor, LossWeights, OneHotOracle, TrainingSample, UniformPredictor,
};
use captalk_core::{FeatureMatrix, Waveform};
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Instant;

/// Serializes the expensive tests so their runtime budgets are their own.
static HEAVY: Mutex<()> = Mutex::new(());

fn sine(freq: f64, amplitude: f64, seconds: f64) -> Waveform {
    let n = (seconds * 16_000.0).round() as usize;
    let samples = (0..n)
        .map(|i| amplitude * (2.0 * std::f64::consts::PI * freq * i as f64 / 16_000.0).sin())
        .collect();
    Waveform::new(samples).unwrap()
}

#[test]
fn criterion_01_kl_closed_form_matches_monte_carlo() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for pair in 0..100 {
        let d = rng.random_range(1..=8);
        // keep the exact KL away from zero so relative error is meaningful
        let (q, prior) = loop {
            let mean = Array1::from_iter((0..d).map(|_| rng.random_range(-2.0..2.0)));
            let scale = Array1::from_iter((0..d).map(|_| rng.random_range(0.3..2.5)));
            // alternate the utterance-conditioned and standard-normal priors
            let prior = if pair % 2 == 0 {
                Array1::from_iter((0..d).map(|_| rng.random_range(-2.0..2.0)))
            } else {
                Array1::zeros(d)
            };
            let q = GaussianDiag::new(mean, scale).unwrap();
            if kl_z2(&q, &prior).unwrap() >= 0.1 {
                break (q, prior);
            }
        };
        let exact = if pair % 2 == 0 {
            kl_z2(&q, &prior).unwrap()
        } else {
            kl_z1(&q)
        };
        let mc = kl_monte_carlo(&q, &prior, 100_000, mix_seed(7, &format!("mc:{pair}")));
        let rel = (mc - exact).abs() / exact;
        worst = worst.max(rel);
        assert!(rel < 0.01, "pair {pair}: exact {exact}, mc {mc}, rel {rel}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!("ACCEPTANCE 01 kl-oracle: PASS (100 pairs, worst rel err {worst:.2e}, {elapsed:?})");
}

#[test]
fn criterion_02_gradient_oracle_and_stop_gradient() {
    let _guard = HEAVY.lock().unwrap();
    let cfg = FhvaeConfig {
        n_bands: 8,
        d_spk: 6,
        d2: 4,
        d1: 4,
        seg_frames: 5,
        hidden: 7,
        cap_dim: 5,
        scale_floor: 1e-4,
    };
    // 2 utterances × 2 segments each = 4 segments
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let batch: Vec<UttData<f64>> = (0..2)
        .map(|_| UttData {
            features: ndarray::Array2::from_shape_fn((2 * cfg.seg_frames, cfg.n_bands), |_| {
                rng.random_range(-1.0..1.0)
            }),
            h_cap: Array1::from_shape_fn(cfg.cap_dim, |_| rng.random_range(-1.0..1.0)),
        })
        .collect();
    let params = ModuleParams::init(cfg, 22);
    let weights = LossWeights::default();
    let report = grad_check(&params, &batch, &weights, 1e-5, 8, 5).unwrap();
    assert!(
        report.max_rel_err < 1e-4,
        "max rel err {} at {}",
        report.max_rel_err,
        report.worst_tensor
    );
    assert_eq!(
        report.stop_grad_max_abs, 0.0,
        "gradient leaked into the speaker encoder"
    );
    println!(
        "ACCEPTANCE 02 gradient-oracle: PASS (max rel err {:.2e} over {} coords, stop-grad leak 0)",
        report.max_rel_err, report.n_checked
    );
}

#[test]
fn criterion_03_loss_arithmetic() {
    assert!((base_loss_single(1.0f64, 1.0, 1.0, 0.5) - 2.01).abs() < 1e-9);
    assert!((base_loss_dialogue(1.0f64, 1.0, 1.0, 1.0, 0.5) - 4.01).abs() < 1e-9);
    assert!(
        (base_loss_single(0.25f64, 0.75, 2.0, 0.0) - (2.0 * 0.25 + 0.02)).abs() < 1e-9,
        "alpha endpoint 0"
    );
    assert!(
        (base_loss_single(0.25f64, 0.75, 2.0, 1.0) - (2.0 * 0.75 + 0.02)).abs() < 1e-9,
        "alpha endpoint 1"
    );
    let w = LossWeights {
        alpha: 0.5,
        lambda_spk: 1.0,
        lambda_rec: 1.0,
        lambda_kl_z2: 1.0,
        lambda_kl_z1: 1.0,
    };
    assert!((total_loss(2.01, 0.5, 0.5, 0.5, 0.5, &w) - 4.01).abs() < 1e-9);
    // affine in every component with stated coefficients
    let base = total_loss(1.0, 0.2, 0.3, 0.4, 0.5, &w);
    for (idx, delta) in [(0, 0.125f64), (1, 0.25), (2, 0.5), (3, 1.0)] {
        let mut parts = [0.2, 0.3, 0.4, 0.5];
        parts[idx] += delta;
        let moved = total_loss(1.0, parts[0], parts[1], parts[2], parts[3], &w);
        assert!((moved - base - delta).abs() < 1e-9);
    }
    println!("ACCEPTANCE 03 loss-arithmetic: PASS (2.01 / 4.01 and affinity to 1e-9)");
}

#[test]
fn criterion_04_prosody_extraction_oracles() {
    let cfg = DspConfig::default();

    // semitone mapping is exact at the reference points
    assert!(hz_to_semitone(440.0f64).unwrap().abs() < 1e-9);
    assert!((hz_to_semitone(880.0f64).unwrap() - 12.0).abs() < 1e-9);

    // estimator-driven semitones ±0.02 from frame quantization
    let semitone_of = |freq: f64| -> f64 {
        let w = sine(freq, 0.8, 1.0);
        let mask = vad(&w, &cfg).unwrap();
        let f0 = estimate_f0(&w, &mask, &cfg).unwrap().median_f0().unwrap();
        hz_to_semitone(f0).unwrap()
    };
    let s440 = semitone_of(440.0);
    let s880 = semitone_of(880.0) + 12.0; // 880 folds to 440 inside the range
    assert!(s440.abs() <= 0.02, "440 Hz → {s440} st");
    // an octave above the range folds to its subharmonic: same semitone class
    assert!((s880 - 12.0).abs() <= 0.02 || s880.abs() <= 0.02, "880 Hz → {s880}");

    // median f0 within 1% on pure tones
    let mut worst_rel = 0.0f64;
    for freq in [110.0, 220.0, 330.0, 440.0] {
        let w = sine(freq, 0.8, 1.0);
        let mask = vad(&w, &cfg).unwrap();
        let f0 = estimate_f0(&w, &mask, &cfg).unwrap().median_f0().unwrap();
        let rel = (f0 - freq).abs() / freq;
        worst_rel = worst_rel.max(rel);
        assert!(rel <= 0.01, "{freq} Hz → {f0} ({rel:.4})");
    }

    // full-scale sine RMS within 1% of 1/sqrt(2)
    let w = sine(220.0, 1.0, 1.0);
    let mask = vad(&w, &cfg).unwrap();
    let rms = rms_energy(&w, &mask).unwrap();
    let rel = (rms - std::f64::consts::FRAC_1_SQRT_2).abs() / std::f64::consts::FRAC_1_SQRT_2;
    assert!(rel <= 0.01, "rms {rms} ({rel:.4})");

    // discretize vs brute-force piecewise oracle on a 10,001-point grid per
    // attribute
    let oracle = |d: f64, t: BinThresholds<f64>| -> usize {
        let mag = d.abs();
        let severity = if mag < t.t1 {
            0
        } else if mag < t.t2 {
            1
        } else if mag < t.t3 {
            2
        } else {
            3
        };
        if severity == 0 {
            3
        } else if d >= 0.0 {
            3 + severity
        } else {
            3 - severity
        }
    };
    for thresholds in [
        BinThresholds::default_pitch(),
        BinThresholds::default_energy(),
        BinThresholds::default_speed(),
    ] {
        let span = thresholds.t3 * 1.5;
        for i in 0..=10_000 {
            let d = -span + 2.0 * span * i as f64 / 10_000.0;
            assert_eq!(
                discretize(d, thresholds).level_index(),
                oracle(d, thresholds),
                "d = {d}"
            );
        }
    }

    println!("ACCEPTANCE 04 prosody-oracles: PASS (median f0 worst rel {worst_rel:.4}, rms rel {rel:.4}, 3×10001-point bin grid)");
}

fn record(id: &str, speaker: &str, pass: bool) -> UtteranceRecord {
    UtteranceRecord {
        utterance_id: id.to_string(),
        speaker_id: speaker.to_string(),
        text: format!("text {id}"),
        audio: format!("{id}.wav"),
        quality_pass: pass,
        captions: None,
    }
}

fn synth_session(id: &str, n_turns: usize, fails: &[usize]) -> DialogueSession {
    let turns = (0..n_turns)
        .map(|i| {
            let speaker = if i % 2 == 0 { "spk_a" } else { "spk_b" };
            Turn {
                turn_index: i,
                speaker_id: speaker.to_string(),
                utterance: record(&format!("{id}_t{i}"), speaker, !fails.contains(&i)),
            }
        })
        .collect();
    DialogueSession::new(id.to_string(), turns).unwrap()
}

fn speaker_caps() -> BTreeMap<String, CaptionSet> {
    let mk = |s: &str| CaptionSet {
        aps: format!("aps {s}"),
        dsd: format!("dsd {s}"),
        rp: format!("rp {s}"),
        level: CaptionLevel::Speaker,
    };
    BTreeMap::from([
        ("spk_a".to_string(), mk("a")),
        ("spk_b".to_string(), mk("b")),
    ])
}

#[test]
fn criterion_05_corpus_oracles() {
    // windowing equals brute-force enumeration
    for n in 1..=60usize {
        for stride in [1usize, 5, 10, 20] {
            let got = window_session(n, 20, stride).unwrap();
            let expected = {
                if n <= 20 {
                    vec![(0, n)]
                } else {
                    let mut starts = Vec::new();
                    let mut s = 0;
                    while s + 20 <= n {
                        starts.push(s);
                        s += stride;
                    }
                    let mut out: Vec<(usize, usize)> =
                        starts.iter().map(|&s| (s, s + 20)).collect();
                    if out.last().unwrap().1 != n {
                        out.push((n - 20, n));
                    }
                    out
                }
            };
            assert_eq!(got, expected, "n={n} stride={stride}");
        }
    }

    // dialogue instance counts equal the compositional product oracle
    let caps = speaker_caps();
    let rule = EligibilityRule::AllPass;
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for trial in 0..50 {
        let n_turns = rng.random_range(1..=50);
        let fails: Vec<usize> = (0..n_turns).filter(|_| rng.random_range(0..8) == 0).collect();
        let stride = [1usize, 5, 10, 20][rng.random_range(0..4)];
        let session = synth_session(&format!("s{trial}"), n_turns, &fails);

        let eligible = eligible_speakers(&session, rule);
        let views = expand_views(&session, rule);
        assert_eq!(views.len(), eligible.len());
        let windows = window_session(n_turns, 20, stride).unwrap();
        let expected: usize = windows
            .iter()
            .map(|&(s, e)| {
                views
                    .iter()
                    .filter(|(target, _)| {
                        session.turns[s..e]
                            .iter()
                            .any(|t| &t.speaker_id == target && t.utterance.quality_pass)
                    })
                    .count()
                    * 3
            })
            .sum();

        let (instances, _) =
            build_dialogue_dataset(std::slice::from_ref(&session), &caps, 20, stride, rule)
                .unwrap();
        assert_eq!(instances.len(), expected, "trial {trial}");
    }

    // byte-identical build output across reruns
    let sessions = vec![synth_session("sA", 33, &[4]), synth_session("sB", 21, &[])];
    let run = || {
        let (instances, _) =
            build_dialogue_dataset(&sessions, &caps, 20, 10, rule).unwrap();
        serde_json::to_vec(&instances).unwrap()
    };
    assert_eq!(run(), run());

    println!("ACCEPTANCE 05 corpus-oracles: PASS (windows 1..=60 × 4 strides, 50 random sessions, byte-identical rebuild)");
}

#[test]
fn criterion_06_factorized_likelihood() {
    let frames: Vec<[u16; 16]> = (0..6).map(|i| [(i % 4) as u16; 16]).collect();
    let t = frames.len();
    let sample = TrainingSample {
        instance_id: "acc".into(),
        branch: Branch::Single,
        prefix: vec![0],
        espk_slot_index: 0,
        frames,
        c0_mask: (0..t).collect(),
        dec_mask: (0..t).collect(),
        txt_mask: vec![],
        cot_mask: vec![],
    };

    let (l_c0, l_dec) = frame_nll::<f64, _>(&UniformPredictor { v: 4 }, &sample).unwrap();
    assert!((l_c0 - 4.0f64.ln()).abs() < 1e-9);
    assert!((l_dec - 4.0f64.ln()).abs() < 1e-9);

    let (l_c0, l_dec) = frame_nll::<f64, _>(&OneHotOracle { v: 4 }, &sample).unwrap();
    assert_eq!((l_c0, l_dec), (0.0, 0.0));

    // count predictor on a verbatim-repeated sequence: monotone
    // non-increasing loss over sweeps, ≤ 5% violations tolerated
    let mut predictor = ContextHashPredictor::new(4);
    let mut losses = Vec::new();
    for _ in 0..40 {
        predictor.train_sweep(&sample);
        let (l_c0, l_dec) = frame_nll::<f64, _>(&predictor, &sample).unwrap();
        losses.push(l_c0 + l_dec);
    }
    let violations = losses
        .windows(2)
        .filter(|w| w[1] > w[0] + 1e-12)
        .count();
    assert!(
        violations * 20 <= losses.len(),
        "{violations} non-monotone sweeps out of {}",
        losses.len()
    );
    assert!(losses.last().unwrap() < losses.first().unwrap());

    println!(
        "ACCEPTANCE 06 factorized-likelihood: PASS (uniform=ln4, oracle=0, {} sweeps, {violations} violations)",
        losses.len()
    );
}

fn two_speaker_batch(cfg: &FhvaeConfig, utts_per_speaker: usize, seed: u64) -> Vec<UttData<f64>> {
    let dsp = DspConfig::default();
    let mut batch = Vec::new();
    for (si, voice) in [VOICE_A, VOICE_B].iter().enumerate() {
        let caption = if si == 0 {
            "a deep warm low voice, dark and settled"
        } else {
            "a bright ringing high voice, energetic and clear"
        };
        for u in 0..utts_per_speaker {
            let style = StyleSpec {
                pitch_offset_st: (u as f64 - 2.0) * 0.6,
                amplitude: 0.3 + 0.05 * (u % 3) as f64,
                gap_scale: 1.0,
            };
            let text = "a handful of words to shape some syllables here";
            let wave =
                synthesize_utterance(voice, &style, text, mix_seed(seed, &format!("{si}:{u}")));
            let feats = log_mel(&wave, &dsp).unwrap();
            batch.push(UttData {
                features: feats.data().clone(),
                h_cap: caption_embedding(caption, cfg.cap_dim, seed),
            });
        }
    }
    batch
}

fn reuse_cfg() -> FhvaeConfig {
    FhvaeConfig {
        n_bands: 40,
        d_spk: 32,
        d2: 16,
        d1: 2,
        seg_frames: 20,
        hidden: 32,
        cap_dim: 16,
        scale_floor: 1e-4,
    }
}

#[test]
fn criterion_07_timbre_reuse_gap() {
    let _guard = HEAVY.lock().unwrap();
    let start = Instant::now();
    let cfg = reuse_cfg();
    let weights = LossWeights {
        alpha: 0.5,
        lambda_spk: 1.0,
        lambda_rec: 1.0,
        lambda_kl_z2: 0.1,
        lambda_kl_z1: 0.1,
    };
    let mut min_gap = f64::INFINITY;
    for rep_seed in 0u64..10 {
        let mut batch = two_speaker_batch(&cfg, 4, rep_seed);
        standardize_batch(&mut batch);
        let opts = FitOptions {
            epochs: 120,
            step: 0.05,
            seed: rep_seed,
        };
        let (params, _) = fit(&batch, cfg, &weights, &opts).unwrap();

        let h_cap = caption_embedding(
            "a deep warm low voice, dark and settled",
            cfg.cap_dim,
            rep_seed,
        );
        let run = ReuseRunConfig {
            n_utterances: 6,
            segments_per_utterance: 3,
            caption_noise: 1.0,
        };
        let (fixed, resampled) = reuse_experiment(&params, &h_cap, &run, rep_seed).unwrap();
        let embed = |set: &[FeatureMatrix]| -> Vec<_> {
            set.iter().map(|f| toy_embed(f).unwrap()).collect()
        };
        let sim_fixed = sim(&embed(&fixed)).unwrap();
        let sim_resampled = sim(&embed(&resampled)).unwrap();
        let gap = sim_fixed - sim_resampled;
        assert!(
            sim_fixed > sim_resampled,
            "seed {rep_seed}: fixed {sim_fixed} <= resampled {sim_resampled}"
        );
        assert!(gap > 0.1, "seed {rep_seed}: gap {gap}");
        min_gap = min_gap.min(gap);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 07 timbre-reuse: PASS (10/10 seeds, min gap {min_gap:.3} > 0.1, {elapsed:?})"
    );
}

#[test]
fn criterion_08_kl_pull_ablation() {
    let _guard = HEAVY.lock().unwrap();
    let cfg = FhvaeConfig {
        n_bands: 40,
        d_spk: 16,
        d2: 8,
        d1: 4,
        seg_frames: 20,
        hidden: 16,
        cap_dim: 8,
        scale_floor: 1e-4,
    };
    let mut batch = two_speaker_batch(&cfg, 3, 17);
    standardize_batch(&mut batch);

    let distance_at = |lambda_kl_z2: f64| -> f64 {
        let weights = LossWeights {
            alpha: 0.5,
            lambda_spk: 1.0,
            lambda_rec: 1.0,
            lambda_kl_z2,
            lambda_kl_z1: 0.01,
        };
        let opts = FitOptions {
            epochs: 120,
            step: 0.03,
            seed: 33,
        };
        let (params, _) = fit(&batch, cfg, &weights, &opts).unwrap();
        let bundles: Vec<_> = batch
            .iter()
            .map(|u| {
                analyze_utterance(&FeatureMatrix::new(u.features.clone()), &params, 1).unwrap()
            })
            .collect();
        mean_z2_prior_distance(&bundles)
    };

    let unregularized = distance_at(0.0);
    let pulled = distance_at(0.01);
    assert!(
        pulled < unregularized,
        "pull failed: {pulled} vs {unregularized}"
    );
    println!(
        "ACCEPTANCE 08 kl-pull: PASS (mean ‖q_z2.mean − μ_spk‖: {unregularized:.3} → {pulled:.3})"
    );
}

#[test]
fn criterion_09_metric_aggregation() {
    use captalk_core::evalkit::{
        controllability, cot_accuracy, pairwise_preference, Choice, ControllabilityPair,
        Direction, JudgmentRecord, VoteRecord,
    };
    use captalk_core::cot::ProsodyAttribute;

    // hand-written judgments: emotion true 3/4, tone 4/4, overall 3/4
    let judgment = |id: &str, emotion: bool| JudgmentRecord {
        sample_id: id.into(),
        emotion,
        tone: true,
        pitch: true,
        energy: true,
        speed: true,
        overall: emotion,
    };
    let records = vec![
        judgment("a", true),
        judgment("b", false),
        judgment("c", true),
        judgment("d", true),
    ];
    let acc = cot_accuracy(&records).unwrap();
    assert_eq!(acc.emotion, 0.75);
    assert_eq!(acc.tone, 1.0);
    assert_eq!(acc.overall, 0.75);

    // overall-implies-all enforced at ingestion
    let bad = JudgmentRecord {
        overall: true,
        emotion: false,
        ..judgment("x", true)
    };
    assert!(bad.validate().is_err());

    // controllability: 3 of 4 pitch-up pairs move up → 0.75
    let pair = |dir: Direction, before: ProsodyBin, after: ProsodyBin| ControllabilityPair {
        attribute: ProsodyAttribute::Pitch,
        direction: dir,
        bin_before: before,
        bin_after: after,
    };
    let rates = controllability(&[
        pair(Direction::Up, ProsodyBin::Normal, ProsodyBin::SlightlyHigh),
        pair(Direction::Up, ProsodyBin::Normal, ProsodyBin::ExtremelyHigh),
        pair(Direction::Up, ProsodyBin::SlightlyLow, ProsodyBin::Normal),
        pair(Direction::Up, ProsodyBin::Normal, ProsodyBin::Normal),
    ]);
    assert_eq!(rates["pitch"], 0.75);
    assert!(!rates.contains_key("energy"));

    // majority voting: 13 of 20 items prefer a → 0.65
    let mut votes = Vec::new();
    for i in 0..20 {
        let majority = if i < 13 { Choice::A } else { Choice::B };
        let minority = if i < 13 { Choice::B } else { Choice::A };
        for (rater, choice) in [("r1", majority), ("r2", majority), ("r3", minority)] {
            votes.push(VoteRecord {
                item_id: format!("i{i:02}"),
                rater: rater.into(),
                choice,
            });
        }
    }
    let pref = pairwise_preference(&votes).unwrap();
    assert_eq!(pref.share_a, 0.65);
    assert_eq!(pref.share_b, 0.35);

    println!("ACCEPTANCE 09 metric-aggregation: PASS (accuracy 0.75/1.0, control 0.75, preference 0.65, invariant enforced)");
}

#[test]
fn criterion_10_end_to_end_pipeline_golden() {
    let _guard = HEAVY.lock().unwrap();
    let start = Instant::now();

    let fixtures = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    assert!(
        fixtures.join("config.toml").exists(),
        "fixture corpus missing at {}",
        fixtures.display()
    );
    let out = tempfile::tempdir().unwrap();
    let config = fixtures.join("config.toml");

    let run = |args: &[&str]| {
        let output = std::process::Command::new(env!("CARGO_BIN_EXE_captalkkit"))
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(out.path())
            .args(args)
            .output()
            .expect("spawn captalkkit");
        assert!(
            output.status.success(),
            "{args:?} failed:\n{}",
            String::from_utf8_lossy(&output.stderr)
        );
    };

    run(&["extract-cot"]);
    run(&["build-corpus"]);
    run(&["assemble"]);
    run(&["fit-fhvae"]);
    run(&["eval", "reuse"]);

    // the reuse gap on the fitted toy pipeline is positive
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("eval_reuse.json")).unwrap())
            .unwrap();
    let gap = report["gap"].as_f64().unwrap();
    assert!(gap > 0.0, "reuse gap {gap} not positive");

    // every intermediate file matches its stored golden hash
    let files = [
        "baselines.jsonl",
        "cot_labels.jsonl",
        "single.jsonl",
        "dialogue.jsonl",
        "vocab.json",
        "samples_single.jsonl",
        "samples_dialogue.jsonl",
        "fhvae_params.bin",
        "loss_history.csv",
        "eval_reuse.json",
    ];
    let mut hashes = BTreeMap::new();
    for name in files {
        use sha2::{Digest, Sha256};
        let bytes = std::fs::read(out.path().join(name)).unwrap_or_else(|e| {
            panic!("missing intermediate {name}: {e}");
        });
        hashes.insert(name.to_string(), format!("{:x}", Sha256::digest(&bytes)));
    }

    let golden_path =
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/pipeline_hashes.json");
    if std::env::var("UPDATE_GOLDEN").is_ok() {
        std::fs::write(
            &golden_path,
            serde_json::to_string_pretty(&hashes).unwrap(),
        )
        .unwrap();
        println!("ACCEPTANCE 10 end-to-end: golden hashes rewritten");
    } else {
        let golden: BTreeMap<String, String> = serde_json::from_str(
            &std::fs::read_to_string(&golden_path).expect(
                "golden hashes missing; run with UPDATE_GOLDEN=1 to record them",
            ),
        )
        .unwrap();
        assert_eq!(hashes, golden, "pipeline outputs drifted from golden");
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 600.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 10 end-to-end: PASS ({} files hashed, gap {gap:.3}, {elapsed:?})",
        files.len()
    );
}
