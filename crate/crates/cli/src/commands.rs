use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ccmx::calibrate::{calibration_model, extrapolate, run, CalibrationState, Checkpoint, Objective, OptConfig};
use ccmx::ccm::{Ccm, McSamples};
use ccmx::channel::gains_csv;
use ccmx::experiment::{evaluate, generate_truth, run_experiment, ExperimentConfig, ExperimentOutcome, Metrics};
use ccmx::loss::{LossConfig, LossKind};
use ccmx::raytrace::dump_paths;
use ccmx::rng::Purpose;
use ccmx::roughfield::{roughness_field, BasisSet};
use ccmx::scene::Scene;
use ccmx::Domain;

use crate::args::*;
use crate::manifest::{ResolvedConfig, WaveformRecord};
use crate::Failure;

pub struct Outcome {
    pub config: ResolvedConfig,
    pub outputs: Vec<PathBuf>,
    pub summary: String,
}

/// Makes every input path absolute and creates the output directory, so a
/// manifest can be replayed from any working directory.
pub fn resolve_paths(mut command: Command) -> Result<Command, Failure> {
    fn input(p: &mut PathBuf) -> Result<(), Failure> {
        *p = std::fs::canonicalize(&*p).map_err(|e| Failure::io(p, e))?;
        Ok(())
    }
    fn output(p: &mut PathBuf) -> Result<(), Failure> {
        std::fs::create_dir_all(&*p).map_err(|e| Failure::io(p, e))?;
        input(p)
    }
    match &mut command {
        Command::GenerateTruth(a) => {
            input(&mut a.scene)?;
            output(&mut a.out)?;
        }
        Command::Calibrate(a) => {
            input(&mut a.scene)?;
            input(&mut a.train)?;
            if let Some(r) = a.resume.as_mut() {
                input(r)?;
            }
            output(&mut a.out)?;
        }
        Command::Extrapolate(a) => {
            input(&mut a.scene)?;
            input(&mut a.checkpoint)?;
            output(&mut a.out)?;
        }
        Command::Evaluate(a) => {
            input(&mut a.truth)?;
            input(&mut a.estimate)?;
            if let Some(b) = a.baseline.as_mut() {
                input(b)?;
            }
            output(&mut a.out)?;
        }
        Command::Reproduce(a) => {
            input(&mut a.scene)?;
            output(&mut a.out)?;
        }
        Command::Replay(_) => unreachable!("replay is unwrapped before execution"),
    }
    Ok(command)
}

pub fn execute(command: &Command) -> Result<Outcome, Failure> {
    match command {
        Command::GenerateTruth(a) => cmd_generate_truth(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Extrapolate(a) => cmd_extrapolate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Reproduce(a) => cmd_reproduce(a),
        Command::Replay(_) => unreachable!("replay is unwrapped before execution"),
    }
}

struct Writer<'a> {
    dir: &'a Path,
    written: Vec<PathBuf>,
}

impl<'a> Writer<'a> {
    fn new(dir: &'a Path) -> Self {
        Writer { dir, written: Vec::new() }
    }

    fn put(&mut self, name: &str, text: &str) -> Result<PathBuf, Failure> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|e| Failure::io(&path, e))?;
        self.written.push(path.clone());
        Ok(path)
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

fn load_scene(path: &Path) -> Result<Scene, Failure> {
    Scene::parse(&read(path)?).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn load_ccm(path: &Path) -> Result<Ccm, Failure> {
    Ccm::from_text(&read(path)?).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Failure> {
    Checkpoint::from_text(&read(path)?).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn scene_config(path: &Path, scene: &Scene) -> ResolvedConfig {
    ResolvedConfig {
        scene: Some(path.to_path_buf()),
        waveform: Some(WaveformRecord::of(scene)),
        ..ResolvedConfig::default()
    }
}

fn cmd_generate_truth(a: &TruthArgs) -> Result<Outcome, Failure> {
    let scene = load_scene(&a.scene)?;
    if a.areas.is_empty() {
        return Err(Failure::Usage("no areas requested".into()));
    }
    for name in &a.areas {
        scene.area(name)?;
    }
    let mut w = Writer::new(&a.out);
    let mut summary = String::new();
    for (i, name) in a.areas.iter().enumerate() {
        let ccm = generate_truth(&scene, name, a.domain, a.n_mc, a.seed.wrapping_add(i as u64))?;
        let path = w.put(&format!("R_{name}.ccm"), &ccm.to_text())?;
        writeln!(summary, "{name}: {0}x{0} {1} CCM -> {2}", ccm.dim(), ccm.domain, path.display()).unwrap();
    }
    let mut config = scene_config(&a.scene, &scene);
    config.truth_seed = Some(a.seed);
    config.truth_n_mc = Some(a.n_mc);
    Ok(Outcome {
        config,
        outputs: w.written,
        summary,
    })
}

fn default_max_iter(domain: Domain) -> usize {
    match domain {
        Domain::Frequency => OptConfig::default().max_iterations,
        Domain::Spatial => 600,
    }
}

fn cmd_calibrate(a: &CalibrateArgs) -> Result<Outcome, Failure> {
    let scene = load_scene(&a.scene)?;
    let r_train = load_ccm(&a.train)?;
    let kind = a.loss.unwrap_or(match r_train.domain {
        Domain::Frequency => LossKind::Mmse,
        Domain::Spatial => LossKind::Frobenius,
    });
    if kind.domain() != r_train.domain {
        return Err(Failure::Usage(format!(
            "loss `{}` expects a {} CCM, but {} holds a {} CCM",
            loss_name(kind),
            kind.domain(),
            a.train.display(),
            r_train.domain
        )));
    }
    let loss = LossConfig::new(kind, a.snr)?;
    let opt = OptConfig {
        learning_rate: a.lr,
        max_iterations: a.max_iter.unwrap_or_else(|| default_max_iter(r_train.domain)),
        window: a.window,
        rel_tol: a.rel_tol,
        seed: a.seed,
        n_mc: a.n_mc,
        ..OptConfig::default()
    };
    opt.validate()?;
    let area = scene.area(&a.area)?;

    let (bases, state) = match &a.resume {
        Some(path) => {
            let cp = load_checkpoint(path)?;
            (BasisSet::from_specs(&scene, &cp.bases)?, cp.state)
        }
        None => {
            let bases = BasisSet::for_scene(&scene)?;
            let state = CalibrationState::initial(&bases, scene.model.g_max, opt.seed);
            (bases, state)
        }
    };
    let objective = Objective::new(&scene, &bases, &r_train, area, loss, opt.n_mc, opt.seed)?;
    let state = run(&objective, state, &opt, None)?;

    let mut w = Writer::new(&a.out);
    let checkpoint = Checkpoint {
        train_area: a.area.clone(),
        opt,
        loss,
        bases: bases.specs(),
        state,
    };
    w.put("checkpoint.toml", &checkpoint.to_text()?)?;
    w.put("loss.csv", &checkpoint.state.history_csv())?;

    let h = &checkpoint.state.history;
    let mut summary = String::new();
    writeln!(
        summary,
        "{} iterations, loss {:.6e} -> {:.6e}{}",
        h.len(),
        h.first().map_or(f64::NAN, |e| e.train_loss),
        h.last().map_or(f64::NAN, |e| e.train_loss),
        if checkpoint.state.converged { " (converged)" } else { "" }
    )
    .unwrap();
    let mut config = scene_config(&a.scene, &scene);
    config.optimizer = Some(opt);
    config.snr = Some(a.snr);
    Ok(Outcome {
        config,
        outputs: w.written,
        summary,
    })
}

fn loss_name(kind: LossKind) -> &'static str {
    match kind {
        LossKind::Mmse => "mmse",
        LossKind::Frobenius => "frobenius",
    }
}

fn cmd_extrapolate(a: &ExtrapolateArgs) -> Result<Outcome, Failure> {
    let scene = load_scene(&a.scene)?;
    let cp = load_checkpoint(&a.checkpoint)?;
    let bases = BasisSet::from_specs(&scene, &cp.bases)?;
    let area = scene.area(&a.area)?;
    let purpose = if a.calibration_draws {
        Purpose::Calibration
    } else {
        Purpose::Extrapolation
    };
    let ccm = extrapolate(&scene, &bases, &cp.state.params, area, a.domain, a.n_mc, a.seed, purpose)?;

    let mut w = Writer::new(&a.out);
    let path = w.put(&format!("R_hat_{}.ccm", a.area), &ccm.to_text())?;
    if a.dump_paths {
        let samples = McSamples::draw(&scene, area, 1, a.seed, purpose)?;
        let alpha = roughness_field(&cp.state.params, &bases)?;
        w.put("paths.txt", &dump_paths(&scene, &samples.paths[0]))?;
        w.put("gains.csv", &gains_csv(&calibration_model(&scene), &samples.paths[0], &alpha)?)?;
    }
    let mut config = scene_config(&a.scene, &scene);
    config.eval_seed = Some(a.seed);
    config.eval_n_mc = Some(a.n_mc);
    Ok(Outcome {
        config,
        outputs: w.written,
        summary: format!("{0}x{0} {1} CCM -> {2}\n", ccm.dim(), ccm.domain, path.display()),
    })
}

fn metrics_report(m: &Metrics) -> String {
    let mut s = format!("relative frobenius error  {:.6e}\n", m.rel_frobenius);
    if let (Some(f), Some(v)) = (m.floor, m.variable) {
        writeln!(s, "floor term                {f:.6e}").unwrap();
        writeln!(s, "variable term             {v:.6e}").unwrap();
    }
    s
}

fn opt_field(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.16e}"))
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<Outcome, Failure> {
    let truth = load_ccm(&a.truth)?;
    let estimate = load_ccm(&a.estimate)?;
    let m = evaluate(&truth, &estimate, a.snr)?;
    let mut report = metrics_report(&m);
    let mut csv = String::from("rel_frobenius,floor,variable,baseline_metric,ratio\n");
    let (base, ratio) = match &a.baseline {
        Some(path) => {
            let b = evaluate(&truth, &load_ccm(path)?, a.snr)?;
            let (now, before) = (
                ExperimentOutcome::headline(&m, truth.domain),
                ExperimentOutcome::headline(&b, truth.domain),
            );
            let label = match truth.domain {
                Domain::Frequency => "variable-term",
                Domain::Spatial => "frobenius-error",
            };
            writeln!(report, "baseline                  {before:.6e}").unwrap();
            writeln!(report, "{label} reduction {:.1}%", 100.0 * (1.0 - now / before)).unwrap();
            (Some(before), Some(now / before))
        }
        None => (None, None),
    };
    writeln!(
        csv,
        "{:.16e},{},{},{},{}",
        m.rel_frobenius,
        opt_field(m.floor),
        opt_field(m.variable),
        opt_field(base),
        opt_field(ratio)
    )
    .unwrap();
    let mut w = Writer::new(&a.out);
    w.put("report.txt", &report)?;
    w.put("metrics.csv", &csv)?;
    Ok(Outcome {
        config: ResolvedConfig {
            snr: Some(a.snr),
            ..ResolvedConfig::default()
        },
        outputs: w.written,
        summary: report,
    })
}

fn cmd_reproduce(a: &ReproduceArgs) -> Result<Outcome, Failure> {
    let scene = load_scene(&a.scene)?;
    let bases = BasisSet::for_scene(&scene)?;
    let id = a.experiment;
    let mut cfg = ExperimentConfig::for_experiment(id, a.seed);
    cfg.truth_seed = a.truth_seed;
    cfg.truth_n_mc = a.truth_n_mc;
    cfg.eval_seed = a.eval_seed;
    cfg.eval_n_mc = a.eval_n_mc;
    cfg.snr = a.snr;
    cfg.track_test = a.track_test;
    cfg.opt.n_mc = a.n_mc;
    if let Some(n) = a.max_iter {
        cfg.opt.max_iterations = n;
    }
    cfg.opt.validate()?;
    let o = run_experiment(&scene, &bases, id, &cfg)?;

    let mut w = Writer::new(&a.out);
    w.put("R_train.ccm", &o.r_train.to_text())?;
    w.put("R_test.ccm", &o.r_test.to_text())?;
    w.put("R_hat_initial.ccm", &o.r_hat_initial.to_text())?;
    w.put("R_hat.ccm", &o.r_hat_final.to_text())?;
    let checkpoint = Checkpoint {
        train_area: "train".into(),
        opt: cfg.opt,
        loss: LossConfig::new(id.loss_kind(), cfg.snr)?,
        bases: bases.specs(),
        state: o.state.clone(),
    };
    w.put("checkpoint.toml", &checkpoint.to_text()?)?;
    w.put("loss.csv", &o.state.history_csv())?;

    let mut csv = String::from("stage,rel_frobenius,floor,variable\n");
    for (stage, m) in [("initial", &o.initial), ("final", &o.final_)] {
        writeln!(
            csv,
            "{stage},{:.16e},{},{}",
            m.rel_frobenius,
            opt_field(m.floor),
            opt_field(m.variable)
        )
        .unwrap();
    }
    w.put("metrics.csv", &csv)?;

    let label = match id.test_domain() {
        Domain::Frequency => "variable-term",
        Domain::Spatial => "frobenius-error",
    };
    let mut report = format!(
        "{}: train {} / test {}, {} iterations{}\n",
        id.name(),
        id.train_domain(),
        id.test_domain(),
        o.state.history.len(),
        if o.state.converged { " (converged)" } else { "" }
    );
    report.push_str("initial:\n");
    report.push_str(&metrics_report(&o.initial));
    report.push_str("final:\n");
    report.push_str(&metrics_report(&o.final_));
    writeln!(
        report,
        "{label}: {:.6e} -> {:.6e}, reduction {:.1}%",
        o.initial_metric(),
        o.final_metric(),
        100.0 * (1.0 - o.ratio())
    )
    .unwrap();
    w.put("report.txt", &report)?;

    let mut config = scene_config(&a.scene, &scene);
    config.optimizer = Some(cfg.opt);
    config.snr = Some(cfg.snr);
    config.truth_seed = Some(cfg.truth_seed);
    config.truth_n_mc = Some(cfg.truth_n_mc);
    config.eval_seed = Some(cfg.eval_seed);
    config.eval_n_mc = Some(cfg.eval_n_mc);
    Ok(Outcome {
        config,
        outputs: w.written,
        summary: report,
    })
}
