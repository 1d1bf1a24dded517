//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 1 4 10`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wristsonic::cfmcw::{
    compute_echo_profile, differentiate, ProfileGrid, TransmitConfig, CHANNELS, RANGE_BINS, SPEED_OF_SOUND,
};
use wristsonic::dataset::{
    crop_at, patchify, read_manifest, sliding_windows, synth_windows, EchoWindow, Provenance, CROP_FRAMES,
    N_PATCHES, PATCH_DIM, WINDOW_FRAMES,
};
use wristsonic::formats::{read_wsep, wsep, write_wsep};
use wristsonic::model::gradcheck::check_all;
use wristsonic::model::{
    cross_entropy, encoder_forward, evaluate, fine_tune, focal_loss, focal_loss_grad, forward, log_csv,
    lopo_evaluate, param_gradients, project_patches, train_model, Checkpoint, DropoutMasks, EvalReport,
    LopoMode, ModelConfig, ModelParams, TrainConfig,
};
use wristsonic::plot::render_pgm;
use wristsonic::sim::{
    render_received, synth_dataset, synth_record, Environment, GestureLabel, LabelRegistry, ParticipantShift,
    ParticipantSpec, Scene, ScattererTrack, SynthPlan,
};
use wristsonic::sim::{DelayFn, GainFn};
use wristsonic::{Error, Result};

// Pinned tolerances and budgets.
const RANGE_TARGET_M: f64 = 0.343;
const RANGE_BIN_TOL: usize = 1;
const FAST_BUDGET: Duration = Duration::from_secs(5);
const SHAPE_BUDGET: Duration = Duration::from_secs(1);
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_BUDGET: Duration = Duration::from_secs(60);
const LOSS_TOL: f64 = 1e-12;
const MACRO_F1_ORACLE: f64 = 0.6970;
const MACRO_F1_TOL: f64 = 5e-4;
const LOPO_F1_MIN: f64 = 0.90;
const LOPO_BUDGET: Duration = Duration::from_secs(30 * 60);
const CAFE_PROFILE_REL_L2_MAX: f64 = 0.01;
const CAFE_F1_DELTA_MAX: f64 = 0.01;
const FINE_TUNE_TRIALS: u32 = 5;
const FINE_TUNE_MIN_IMPROVED: usize = 4;

// Default synthetic dataset and end-to-end training setup.
const DATA_SEED: u64 = 2024;
const TRAIN_SEED: u64 = 1;
const N_PARTICIPANTS: u32 = 6;
const N_SESSIONS: u32 = 3;
const N_REPS: u32 = 3;

/// Distribution shift applied to the fine-tuning participants.
const SHIFT: ParticipantShift = ParticipantShift {
    delay_offset: 12.0,
    speed_scale: 1.3,
    gain_scale: 0.7,
};

fn model_cfg() -> ModelConfig {
    ModelConfig::desk()
}

fn train_cfg() -> TrainConfig {
    TrainConfig {
        seed: TRAIN_SEED,
        ..TrainConfig::default()
    }
}

fn plan(env: Environment) -> SynthPlan {
    SynthPlan::new(N_PARTICIPANTS, N_SESSIONS, N_REPS, vec![env], DATA_SEED)
}

fn labels() -> Vec<GestureLabel> {
    LabelRegistry::default().labels().cloned().collect()
}

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn ok<T>(r: Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn within(budget: Duration, start: Instant, what: &str) -> std::result::Result<(), String> {
    let t = start.elapsed();
    ensure(t < budget, format!("{what} took {:.1} s, budget {:.0} s", t.as_secs_f64(), budget.as_secs_f64()))
}

fn static_scene(delay: f64, noise_sigma: f64) -> Scene {
    Scene {
        tracks: vec![ScattererTrack::new(DelayFn::fixed(delay), GainFn::constant([0.5, 0.4, 0.35, 0.3]))],
        noise_sigma,
        duration: 1.2,
        seed: 3,
        ambient: None,
    }
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let cfg = TransmitConfig::default();
    let delay = 2.0 * RANGE_TARGET_M / SPEED_OF_SOUND * cfg.sample_rate;
    let mics = ok(render_received(&static_scene(delay, 0.0), &cfg))?;
    let p = ok(compute_echo_profile(&mics, &cfg))?;
    let g = p.grid();
    let (mut lo, mut hi) = (usize::MAX, 0);
    for t in 0..g.frames {
        for c in 0..CHANNELS {
            let row = g.frame_channel(t, c);
            let peak = (0..row.len()).max_by(|&i, &j| row[i].abs().total_cmp(&row[j].abs())).unwrap();
            lo = lo.min(peak);
            hi = hi.max(peak);
        }
    }
    ensure(
        lo + RANGE_BIN_TOL >= 100 && hi <= 100 + RANGE_BIN_TOL,
        format!("peak bins {lo}..{hi}, expected 100 +/- {RANGE_BIN_TOL}"),
    )?;
    within(FAST_BUDGET, start, "ranging")?;
    Ok(format!("peak bins {lo}..{hi} over {} frames x {CHANNELS} channels", g.frames))
}

fn criterion_2() -> Check {
    let start = Instant::now();
    let cfg = TransmitConfig::default();
    let mut worst = 0.0f32;
    for delay in [37.0, 100.0, 151.25] {
        let mics = ok(render_received(&static_scene(delay, 0.0), &cfg))?;
        let d = ok(differentiate(&ok(compute_echo_profile(&mics, &cfg))?))?;
        worst = d.grid().values.iter().fold(worst, |m, v| m.max(v.abs()));
    }
    ensure(worst == 0.0, format!("max |differential| = {worst:e}"))?;
    within(FAST_BUDGET, start, "nullity")?;
    Ok("differential profile identically 0 for 3 static scenes".into())
}

fn criterion_3() -> Check {
    let p = SynthPlan::new(1, 1, 1, vec![Environment::Lab], 9);
    let processor = ok(wristsonic::cfmcw::EchoProcessor::new(&p.transmit))?;
    let key = p.keys().into_iter().next().unwrap();
    let rec = ok(synth_record(&p, &processor, &key))?;
    let cfg = ModelConfig::default();
    let params = ok(ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(0)))?;
    let start = Instant::now();
    let origin = Provenance {
        participant_id: 0,
        session_id: 0,
        repetition: 0,
        label_id: key.label.id,
        window_index: 0,
    };
    let windows = ok(sliding_windows(&rec.profile, &key.label, &origin))?;
    let w = &windows[0];
    ensure(
        EchoWindow::SHAPE == (4, 200, 83) && w.values().len() == 4 * 200 * 83 && WINDOW_FRAMES == 83,
        "window shape",
    )?;
    let cropped = crop_at(w, 0);
    ensure(CROP_FRAMES == 80 && CHANNELS * RANGE_BINS * CROP_FRAMES == 4 * 200 * 80, "crop shape")?;
    let patches = ok(patchify(&cropped))?;
    ensure(
        patches.len() == 16 && N_PATCHES == 16 && PATCH_DIM == 4000 && patches.patch(15).len() == 4000,
        "patch shape",
    )?;
    let x = ndarray::Array2::from_shape_vec((N_PATCHES, PATCH_DIM), patches.as_flat().to_vec()).unwrap();
    let tokens = ok(project_patches(&cfg, &params, &x, &DropoutMasks::none()))?;
    ensure(tokens.dim() == (17, 768), format!("tokens {:?}", tokens.dim()))?;
    let (encoded, _) = ok(encoder_forward(&cfg, &params, &tokens))?;
    ensure(encoded.dim() == (17, 768), format!("encoded {:?}", encoded.dim()))?;
    let fwd = ok(forward(&cfg, &params, &x, &DropoutMasks::none()))?;
    ensure(fwd.logits.dim() == (1, 22), format!("logits {:?}", fwd.logits.dim()))?;
    within(SHAPE_BUDGET, start, "shape chain")?;
    Ok("(4,200,83) -> (4,200,80) -> 16x4000 -> 17x768 -> 22 logits".into())
}

fn criterion_4() -> Check {
    let start = Instant::now();
    let cfg = ModelConfig::tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut params = ok(ModelParams::init(&cfg, &mut rng))?;
    params.for_each_mut(|name, t| {
        if !name.ends_with(".w") && !name.contains(".w_") && name != "cls" {
            for (i, v) in t.iter_mut().enumerate() {
                *v += 0.05 * ((i as f64) * 0.7).sin();
            }
        }
    });
    let batch = 3;
    let x = ndarray::Array2::from_shape_fn((batch * cfg.n_patches, cfg.patch_dim), |(i, j)| {
        ((i * 7 + j * 3) as f64 * 0.37).sin()
    });
    let targets = [0, 2, 1];
    let masks = DropoutMasks::sample(&cfg, batch, &mut rng);
    let (_, _, grads) = ok(param_gradients(&cfg, &params, &x, &targets, &masks, 2.0))?;
    let errs = check_all(&params, &grads, |p| {
        let f = forward(&cfg, p, &x, &masks).unwrap();
        focal_loss(&f.logits, &targets, 2.0).unwrap()
    });
    let (worst_name, worst) = errs
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .cloned()
        .unwrap();
    ensure(worst <= GRAD_REL_TOL, format!("{worst_name}: relative error {worst:.2e}"))?;
    within(GRAD_BUDGET, start, "gradient check")?;
    Ok(format!("{} groups, worst {worst_name} at {worst:.2e}", errs.len()))
}

fn criterion_5() -> Check {
    let logits = ndarray::array![[1.2, -0.4, 0.3], [0.0, 2.5, -1.0], [-3.0, 0.1, 0.2]];
    let t = [0, 1, 2];
    let gap = (ok(focal_loss(&logits, &t, 0.0))? - ok(cross_entropy(&logits, &t))?).abs();
    ensure(gap <= LOSS_TOL, format!("gamma 0 vs cross-entropy differ by {gap:e}"))?;
    let half = ndarray::array![[0.7, 0.7]];
    let v = ok(focal_loss(&half, &[1], 2.0))?;
    let err = (v - 0.25 * 2f64.ln()).abs();
    ensure(err <= LOSS_TOL, format!("p_t = 0.5 gives {v}, off by {err:e}"))?;
    let _ = ok(focal_loss_grad(&half, &[1], 2.0))?;
    Ok(format!("|FL0 - CE| = {gap:.1e}, FL(0.5, 2) = {v:.6}"))
}

fn criterion_6() -> Check {
    let names = vec!["a".to_string(), "b".to_string()];
    let r = ok(EvalReport::from_confusion(names, vec![vec![8, 2], vec![4, 6]]))?;
    ensure(
        (r.macro_f1 - MACRO_F1_ORACLE).abs() <= MACRO_F1_TOL,
        format!("macro F1 {:.6}", r.macro_f1),
    )?;
    Ok(format!("macro F1 {:.4}", r.macro_f1))
}

/// Results shared between the end-to-end criteria.
#[derive(Default)]
struct Shared {
    lab_windows: Option<Vec<EchoWindow>>,
    lab_f1: Option<f64>,
}

impl Shared {
    fn lab_windows(&mut self) -> std::result::Result<&Vec<EchoWindow>, String> {
        if self.lab_windows.is_none() {
            self.lab_windows = Some(ok(synth_windows(&plan(Environment::Lab)))?);
        }
        Ok(self.lab_windows.as_ref().unwrap())
    }

    fn lab_f1(&mut self) -> std::result::Result<(f64, Duration), String> {
        if let Some(f) = self.lab_f1 {
            return Ok((f, Duration::ZERO));
        }
        let start = Instant::now();
        let f = lopo(self.lab_windows()?, "lab")?;
        self.lab_f1 = Some(f);
        Ok((f, start.elapsed()))
    }
}

fn lopo(windows: &[EchoWindow], tag: &str) -> std::result::Result<f64, String> {
    let report = ok(lopo_evaluate(windows, &labels(), &model_cfg(), &train_cfg(), LopoMode::Joint, |f| {
        eprintln!("  {tag} fold p{}: macro F1 {:.4}", f.participant, f.report.macro_f1)
    }))?;
    Ok(report.mean_macro_f1())
}

fn criterion_7(shared: &mut Shared) -> Check {
    shared.lab_windows()?;
    let (f1, took) = shared.lab_f1()?;
    ensure(f1 >= LOPO_F1_MIN, format!("mean LOPO macro F1 {f1:.4} < {LOPO_F1_MIN}"))?;
    ensure(took < LOPO_BUDGET, format!("LOPO took {:.0} s", took.as_secs_f64()))?;
    Ok(format!("mean LOPO macro F1 {f1:.4} in {:.0} s", took.as_secs_f64()))
}

fn rel_l2(a: &[f32], b: &[f32]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum();
    let den: f64 = b.iter().map(|y| (*y as f64).powi(2)).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

fn criterion_8(shared: &mut Shared) -> Check {
    let (lab_f1, _) = shared.lab_f1()?;
    let cafe = ok(synth_windows(&plan(Environment::Cafe)))?;
    let lab = shared.lab_windows()?;
    ensure(cafe.len() == lab.len(), "cafe and lab datasets differ in size")?;
    let worst_l2 = cafe
        .iter()
        .zip(lab)
        .map(|(c, l)| rel_l2(c.values(), l.values()))
        .fold(0.0, f64::max);
    let cafe_f1 = lopo(&cafe, "cafe")?;
    drop(cafe);
    let walk = ok(synth_windows(&plan(Environment::IndoorWalk)))?;
    let walk_f1 = lopo(&walk, "walking")?;
    let detail = format!(
        "profile rel L2 {worst_l2:.2e}; macro F1 lab {lab_f1:.4}, cafe {cafe_f1:.4}, walking {walk_f1:.4}"
    );
    ensure(worst_l2 < CAFE_PROFILE_REL_L2_MAX, format!("{detail}: cafe profiles moved"))?;
    ensure(
        (cafe_f1 - lab_f1).abs() < CAFE_F1_DELTA_MAX,
        format!("{detail}: cafe F1 moved"),
    )?;
    ensure(walk_f1 < lab_f1, format!("{detail}: walking not below lab"))?;
    Ok(detail)
}

fn criterion_9(shared: &mut Shared) -> Check {
    let base = ok(train_model(shared.lab_windows()?, &labels(), &model_cfg(), &train_cfg()))?.checkpoint;
    let mut deltas = Vec::new();
    for k in 0..FINE_TUNE_TRIALS {
        let mut p = SynthPlan::new(1, N_SESSIONS, N_REPS, vec![Environment::Lab], DATA_SEED + 1 + k as u64);
        p.participants = vec![ParticipantSpec {
            id: 100 + k,
            shift: SHIFT,
        }];
        let w = ok(synth_windows(&p))?;
        let (tune, held): (Vec<EchoWindow>, Vec<EchoWindow>) =
            w.into_iter().partition(|x| x.provenance.session_id == 0);
        let before = ok(evaluate(&base, &held))?.macro_f1;
        let cfg = TrainConfig {
            seed: k as u64,
            ..base.train_cfg.fine_tune()
        };
        let tuned = ok(fine_tune(&base, &tune, &cfg))?.checkpoint;
        let after = ok(evaluate(&tuned, &held))?.macro_f1;
        eprintln!("  trial {k}: macro F1 {before:.4} -> {after:.4}");
        deltas.push(after - before);
    }
    let improved = deltas.iter().filter(|d| **d > 0.0).count();
    let detail = format!(
        "deltas [{}]",
        deltas.iter().map(|d| format!("{d:+.4}")).collect::<Vec<_>>().join(", ")
    );
    ensure(deltas.iter().all(|d| *d >= 0.0), format!("{detail}: a trial got worse"))?;
    ensure(
        improved >= FINE_TUNE_MIN_IMPROVED,
        format!("{detail}: only {improved} trials improved"),
    )?;
    Ok(format!("{detail}, {improved}/{FINE_TUNE_TRIALS} improved"))
}

fn files_under(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let (manifest, base) = read_manifest(dir.join("manifest.tsv")).unwrap();
    let mut out = vec![("manifest.tsv".to_string(), std::fs::read(dir.join("manifest.tsv")).unwrap())];
    for r in &manifest.records {
        for rel in [&r.audio_path, &r.profile_path] {
            out.push((rel.clone(), std::fs::read(base.join(rel)).unwrap()));
        }
    }
    out
}

fn criterion_10() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let small = SynthPlan::new(2, 1, 1, vec![Environment::Lab], 5);
    ok(synth_dataset(&small, tmp.path().join("a")))?;
    ok(synth_dataset(&small, tmp.path().join("b")))?;
    let (fa, fb) = (files_under(&tmp.path().join("a")), files_under(&tmp.path().join("b")));
    ensure(fa.len() == 89 && fa == fb, "datasets differ between identical seeds")?;

    let windows = ok(synth_windows(&small))?;
    let cfg = ModelConfig {
        n_classes: 22,
        ..ModelConfig::desk()
    };
    let tc = TrainConfig {
        epochs: 2,
        batch: 16,
        seed: 8,
        ..TrainConfig::default()
    };
    let a = ok(train_model(&windows, &labels(), &cfg, &tc))?;
    let b = ok(train_model(&windows, &labels(), &cfg, &tc))?;
    let bytes = ok(a.checkpoint.to_bytes())?;
    ensure(bytes == ok(b.checkpoint.to_bytes())?, "checkpoints differ")?;
    ensure(log_csv(&a.log) == log_csv(&b.log), "training logs differ")?;
    let back = ok(Checkpoint::from_bytes(&bytes))?;
    ensure(back == a.checkpoint && ok(back.to_bytes())? == bytes, "checkpoint round trip")?;

    let cfg = TransmitConfig::default();
    let mics = ok(render_received(&static_scene(80.0, 0.01), &cfg))?;
    let owned = ok(differentiate(&ok(compute_echo_profile(&mics, &cfg))?))?.into_grid();
    let grid = &owned;
    ensure(ok(render_pgm(grid, 1))? == ok(render_pgm(grid, 1))?, "PGM renders differ")?;
    let path = tmp.path().join("g.wsep");
    ok(write_wsep(&path, grid))?;
    let read = ok(read_wsep(&path))?;
    let bits = |g: &ProfileGrid| g.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    ensure(read == *grid && bits(&read) == bits(grid), ".wsep round trip is not bit-exact")?;

    let enc = wsep::encode(grid);
    let mut bad = enc.clone();
    bad[1] = b'!';
    ensure(matches!(wsep::decode(&bad), Err(Error::BadMagic { .. })), ".wsep magic")?;
    let mut bad = enc.clone();
    bad[4] = 9;
    ensure(matches!(wsep::decode(&bad), Err(Error::UnsupportedVersion { .. })), ".wsep version")?;
    ensure(matches!(wsep::decode(&enc[..enc.len() - 1]), Err(Error::Truncated { .. })), ".wsep truncation")?;
    let mut bad = bytes.clone();
    bad[0] = b'Z';
    ensure(matches!(Checkpoint::from_bytes(&bad), Err(Error::BadMagic { .. })), "checkpoint magic")?;
    let mut bad = bytes.clone();
    bad[4] = 2;
    ensure(
        matches!(Checkpoint::from_bytes(&bad), Err(Error::UnsupportedVersion { .. })),
        "checkpoint version",
    )?;
    ensure(
        matches!(Checkpoint::from_bytes(&bytes[..bytes.len() / 2]), Err(Error::Truncated { .. })),
        "checkpoint truncation",
    )?;
    Ok("datasets, checkpoints, logs and PGMs repeat byte for byte; round trips exact; corruptions classified".into())
}

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |n: u32| selected.is_empty() || selected.contains(&n);
    let mut shared = Shared::default();
    let names = [
        "ranging oracle",
        "static-scene nullity",
        "shape chain",
        "gradient correctness",
        "loss identities",
        "metric oracle",
        "end-to-end LOPO",
        "environment robustness",
        "fine-tuning direction",
        "determinism and formats",
    ];
    let mut failed = 0;
    for (i, name) in names.iter().enumerate() {
        let n = i as u32 + 1;
        if !want(n) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| match n {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(),
            4 => criterion_4(),
            5 => criterion_5(),
            6 => criterion_6(),
            7 => criterion_7(&mut shared),
            8 => criterion_8(&mut shared),
            9 => criterion_9(&mut shared),
            _ => criterion_10(),
        }))
        .unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {n:>2} {name}: {detail} ({secs:.1} s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {detail} ({secs:.1} s)");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
