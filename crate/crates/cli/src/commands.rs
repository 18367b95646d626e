use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use lpvlfr::bench::{
    bfr, generate_msd_dataset_with, mse, read_csv, write_csv, Dataset, MsdProtocol, NoiseLevel,
    Split,
};
use lpvlfr::lfr::{is_well_posed, LfrModel, ModelDocument, SchedulingBox};
use lpvlfr::linalg::Mat;
use lpvlfr::train::{fit, fit_initial_state, RestartSummary, TrainConfig, TrainError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{resolve_out_dir, ExperimentConfig, BENCHMARKS};
use crate::{
    runtime, usage, EvalArgs, ExportArgs, Failure, GenerateArgs, TrainArgs, VerifyArgs, EXIT_VERIFY,
};

type CmdResult = Result<(), Failure>;

const X0_ITERS: usize = 100;

fn protocol(noise_variance: Option<f64>, snr_db: Option<f64>) -> MsdProtocol {
    let mut p = MsdProtocol::default();
    if let Some(v) = noise_variance {
        p.noise = NoiseLevel::Variance(v);
    } else if let Some(s) = snr_db {
        p.noise = NoiseLevel::SnrDb(s);
    }
    p
}

fn check_benchmark(name: &str) -> Result<(), Failure> {
    if BENCHMARKS.contains(&name) {
        Ok(())
    } else {
        Err(usage(anyhow!(
            "unknown benchmark '{name}' (available: {})",
            BENCHMARKS.join(", ")
        )))
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(runtime)
}

pub fn generate(a: GenerateArgs) -> CmdResult {
    check_benchmark(&a.benchmark)?;
    let splits: Vec<Split> = match a.split.as_str() {
        "all" => Split::ALL.to_vec(),
        s => vec![s.parse().map_err(usage)?],
    };
    let proto = protocol(a.noise_variance, a.snr_db);
    let out = resolve_out_dir(a.out.as_deref(), None);
    create_dir(&out)?;
    for split in splits {
        let ds = generate_msd_dataset_with(&proto, split, a.seed).map_err(runtime)?;
        let path = out.join(format!("{}.csv", split.name()));
        write_csv(&ds, &path).map_err(runtime)?;
        println!(
            "{}: N = {}, SNR {:.2} dB -> {}",
            split.name(),
            ds.len(),
            ds.meta.snr_db.unwrap_or(f64::NAN),
            path.display()
        );
    }
    Ok(())
}

/// Applies command-line overrides on top of the file (or default) config.
fn merged_config(a: &TrainArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let ds = &mut cfg.dataset;
    if let Some(b) = &a.benchmark {
        ds.benchmark = Some(b.clone());
        ds.train = None;
        ds.val = None;
    }
    if let (Some(t), Some(v)) = (&a.train, &a.val) {
        ds.benchmark = None;
        ds.train = Some(t.clone());
        ds.val = Some(v.clone());
    }
    if let Some(t) = &a.test {
        ds.test = Some(t.clone());
    }
    if let Some(s) = a.data_seed {
        ds.seed = s;
    }
    if ds.benchmark.is_none() && ds.train.is_none() && ds.val.is_none() {
        ds.benchmark = Some("nl-msd".into());
    }
    let m = &mut cfg.model;
    if let Some(mode) = &a.mode {
        m.mode = mode.parse().map_err(|e: String| anyhow!(e))?;
    }
    if let Some(n) = a.n_x {
        m.n_x = n;
    }
    if let Some(eta) = &a.eta {
        m.n_p = Some(eta.len());
        m.eta = Some(eta.clone());
    }
    if let Some(h) = &a.hidden {
        m.net.hidden = h.clone();
    }
    let t = &mut cfg.training;
    if let Some(v) = a.restarts {
        t.restarts = v;
    }
    if let Some(v) = a.seed {
        t.seed = v;
    }
    if let Some(v) = a.adam_epochs {
        t.adam_epochs = v;
    }
    if let Some(v) = a.lbfgs_epochs {
        t.lbfgs_epochs = v;
    }
    if let Some(v) = a.reg_rho {
        t.reg_rho = v;
    }
    if a.normalize_data {
        t.normalize_data = true;
    }
    if a.jobs.is_some() {
        t.jobs = a.jobs;
    }
    if a.emit_plot_data {
        cfg.output.emit_plot_data = true;
    }
    Ok(cfg)
}

struct Splits {
    train: Dataset,
    val: Dataset,
    test: Option<Dataset>,
}

fn load_splits(cfg: &ExperimentConfig) -> Result<Splits, Failure> {
    let ds = &cfg.dataset;
    if ds.benchmark.is_some() {
        let proto = protocol(ds.noise_variance, ds.snr_db);
        let gen = |s| generate_msd_dataset_with(&proto, s, ds.seed).map_err(runtime);
        return Ok(Splits {
            train: gen(Split::Train)?,
            val: gen(Split::Val)?,
            test: Some(gen(Split::Test)?),
        });
    }
    let read = |p: &PathBuf| {
        read_csv(p)
            .with_context(|| format!("reading {}", p.display()))
            .map_err(usage)
    };
    let train = read(ds.train.as_ref().expect("validated"))?;
    let val = read(ds.val.as_ref().expect("validated"))?;
    let test = ds.test.as_ref().map(read).transpose()?;
    for (name, other) in [("val", Some(&val)), ("test", test.as_ref())] {
        if let Some(o) = other {
            o.check_channels(train.n_u(), train.n_d(), train.n_y())
                .with_context(|| format!("{name} split does not match the training channels"))
                .map_err(usage)?;
        }
    }
    Ok(Splits { train, val, test })
}

#[derive(Serialize)]
struct FitSummary<'a> {
    mode: String,
    n_x: usize,
    n_p: usize,
    eta: &'a [usize],
    restarts: usize,
    best_restart: usize,
    bfr_train: f64,
    bfr_val: f64,
    bfr_test: Option<f64>,
    /// BFR of the noiseless test output against the noisy one.
    noise_floor_test: Option<f64>,
    wall_seconds: f64,
    config: &'a TrainConfig,
    per_restart: &'a [RestartSummary],
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(runtime)
}

/// `k, y.., y_hat.., e..` per sample.
fn write_prediction(path: &Path, y: &Mat, y_hat: &Mat) -> anyhow::Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    let n_y = y.cols();
    let mut header = vec!["k".to_string()];
    for prefix in ["y", "y_hat", "e"] {
        header.extend((1..=n_y).map(|i| format!("{prefix}{i}")));
    }
    writeln!(w, "{}", header.join(","))?;
    for k in 0..y.rows() {
        let (yk, hk) = (y.row(k), y_hat.row(k));
        let mut row = vec![k.to_string()];
        row.extend(yk.iter().map(|v| v.to_string()));
        row.extend(hk.iter().map(|v| v.to_string()));
        row.extend(yk.iter().zip(hk).map(|(a, b)| (a - b).to_string()));
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn train(a: TrainArgs) -> CmdResult {
    let cfg = merged_config(&a).map_err(usage)?;
    cfg.validate().map_err(usage)?;
    let tc = cfg.train_config().map_err(usage)?;
    let out = resolve_out_dir(a.out.as_deref(), cfg.output.dir.as_deref());
    let splits = load_splits(&cfg)?;

    let result = fit(&tc, &splits.train, &splits.val).map_err(|e| match e {
        TrainError::Config(_) => usage(e),
        e => runtime(e),
    })?;

    let (bfr_test, floor) = match &splits.test {
        Some(t) => {
            let y_hat = result.best.predict(&t.u, &t.d).ok();
            let score = y_hat.as_ref().and_then(|yh| bfr(&t.y, yh).ok());
            let floor = t
                .meta
                .y_noiseless
                .as_ref()
                .and_then(|y0| bfr(&t.y, y0).ok());
            (score, floor)
        }
        None => (None, None),
    };

    create_dir(&out)?;
    write_text(&out.join("model.json"), &result.best.to_json())?;
    let trace_path = out.join("trace.jsonl");
    let write_trace = || -> anyhow::Result<()> {
        let mut w = BufWriter::new(File::create(&trace_path)?);
        for r in &result.traces {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    };
    write_trace()
        .with_context(|| format!("writing {}", trace_path.display()))
        .map_err(runtime)?;
    let summary = FitSummary {
        mode: tc.mode.to_string(),
        n_x: tc.n_x,
        n_p: tc.eta.len(),
        eta: &tc.eta,
        restarts: tc.restarts,
        best_restart: result.best_restart,
        bfr_train: result.bfr_train,
        bfr_val: result.bfr_val,
        bfr_test,
        noise_floor_test: floor,
        wall_seconds: result.wall_seconds,
        config: &tc,
        per_restart: &result.restarts,
    };
    let summary_json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_text(&out.join("fit.json"), &summary_json)?;

    if cfg.output.emit_plot_data {
        let mut targets = vec![("val", &splits.val)];
        if let Some(t) = &splits.test {
            targets.push(("test", t));
        }
        for (name, ds) in targets {
            let y_hat = result.best.predict(&ds.u, &ds.d).map_err(runtime)?;
            let path = out.join(format!("{name}_prediction.csv"));
            write_prediction(&path, &ds.y, &y_hat).map_err(runtime)?;
        }
    }

    println!(
        "mode {}, n_p = {}, eta = {:?}",
        tc.mode,
        tc.eta.len(),
        tc.eta
    );
    println!(
        "best restart {} of {}: BFR train {:.2}, val {:.2}",
        result.best_restart, tc.restarts, result.bfr_train, result.bfr_val
    );
    if let Some(b) = bfr_test {
        println!("BFR test {b:.2}");
    }
    println!(
        "wall time {:.1} s -> {}",
        result.wall_seconds,
        out.display()
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<LfrModel, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(usage)?;
    LfrModel::from_json(&text)
        .with_context(|| format!("loading model {}", path.display()))
        .map_err(usage)
}

pub fn eval(a: EvalArgs) -> CmdResult {
    let model = load_model(&a.model)?;
    let data = read_csv(&a.data)
        .with_context(|| format!("reading {}", a.data.display()))
        .map_err(usage)?;
    let (n_u, n_y, n_d) = (model.plant.b_u.cols(), model.plant.c_y.rows(), model.n_d());
    data.check_channels(n_u, n_d, n_y)
        .context("data channels do not match the model")
        .map_err(usage)?;
    let x0 = if a.fit_x0 {
        fit_initial_state(&model, &data, a.x0_samples, X0_ITERS).map_err(runtime)?
    } else {
        model.x0.clone()
    };
    let y_hat = model
        .simulate_from(&data.u, &data.d, &x0)
        .map_err(runtime)?
        .y;
    let score = bfr(&data.y, &y_hat).map_err(runtime)?;
    let err = mse(&data.y, &y_hat).map_err(runtime)?;
    let out = match a.out {
        Some(p) => p,
        None => {
            let dir = resolve_out_dir(None, None);
            create_dir(&dir)?;
            let stem = a.data.file_stem().unwrap_or_default().to_string_lossy();
            dir.join(format!("{stem}.eval.csv"))
        }
    };
    write_prediction(&out, &data.y, &y_hat).map_err(runtime)?;
    println!("BFR {score:.4}");
    println!("MSE {err:.6e}");
    println!("per-sample output -> {}", out.display());
    Ok(())
}

pub fn verify(a: VerifyArgs) -> CmdResult {
    let text = fs::read_to_string(&a.model)
        .with_context(|| format!("reading {}", a.model.display()))
        .map_err(usage)?;
    let doc: ModelDocument = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", a.model.display()))
        .map_err(usage)?;
    let plant = doc.plant().map_err(usage)?;
    if let Err(e) = LfrModel::from_document(doc.clone()) {
        log::warn!("model document is not a valid trained model ({e}); checking its plant anyway");
    }
    if plant.is_affine() {
        println!("D_zw = 0: trivially well-posed");
        return Ok(());
    }
    let n_p = plant.n_p();
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let report = is_well_posed(
        &plant,
        &SchedulingBox::unit(n_p),
        a.grid,
        a.samples,
        &mut rng,
    )
    .map_err(usage)?;
    println!("spectral radius rho(D_zw) = {:.6}", report.spectral_radius);
    println!(
        "largest singular value sigma_max(D_zw) = {:.6}",
        report.sigma_max
    );
    println!(
        "small-gain certificate (sigma_max < 1): {}",
        report.small_gain_certified
    );
    println!("rho(D_zw) < 1: {}", report.spectral_radius_below_one);
    println!(
        "min |det(I - D_zw Delta(p))| over {} points = {:.6e} at p = {:?}",
        report.samples, report.min_abs_det, report.argmin_p
    );
    if report.empirical_ok {
        println!("empirical check: passed");
        Ok(())
    } else {
        let p = report.counterexample.unwrap_or(report.argmin_p);
        Err(Failure {
            code: EXIT_VERIFY,
            error: anyhow!("well-posedness violated: I - D_zw Delta(p) is singular near p = {p:?}"),
        })
    }
}

/// One scheduling point per non-empty line, comma or whitespace separated.
/// Lines starting with `#` and a non-numeric first line are skipped.
fn read_points(path: &Path, n_p: usize) -> anyhow::Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        let parsed: Result<Vec<f64>, _> = fields.iter().map(|s| s.parse::<f64>()).collect();
        let p = match parsed {
            Ok(p) => p,
            Err(_) if points.is_empty() && i == 0 => continue,
            Err(e) => bail!("{}:{}: {e}", path.display(), i + 1),
        };
        if p.len() != n_p {
            bail!(
                "{}:{}: expected {n_p} values, found {}",
                path.display(),
                i + 1,
                p.len()
            );
        }
        points.push(p);
    }
    Ok(points)
}

#[derive(Serialize)]
#[serde(untagged)]
enum FrozenRecord {
    Ok {
        p: Vec<f64>,
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        #[serde(rename = "B")]
        b: Vec<Vec<f64>>,
        #[serde(rename = "C")]
        c: Vec<Vec<f64>>,
        #[serde(rename = "D")]
        d: Vec<Vec<f64>>,
    },
    Failed {
        p: Vec<f64>,
        error: String,
    },
}

pub fn export_ss(a: ExportArgs) -> CmdResult {
    let model = load_model(&a.model)?;
    let points = read_points(&a.points, model.plant.n_p()).map_err(usage)?;
    let sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(
            File::create(p)
                .with_context(|| format!("creating {}", p.display()))
                .map_err(runtime)?,
        ),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = BufWriter::new(sink);
    let mut failed = 0;
    for p in points {
        let rec = match model.frozen(&p) {
            Ok(ss) => FrozenRecord::Ok {
                p,
                a: ss.a.to_rows(),
                b: ss.b.to_rows(),
                c: ss.c.to_rows(),
                d: ss.d.to_rows(),
            },
            Err(e) => {
                failed += 1;
                log::warn!("p = {p:?}: {e}");
                FrozenRecord::Failed {
                    p,
                    error: e.to_string(),
                }
            }
        };
        let line = serde_json::to_string(&rec).expect("record serializes");
        writeln!(w, "{line}")
            .context("writing output")
            .map_err(runtime)?;
    }
    w.flush().context("writing output").map_err(runtime)?;
    if failed > 0 {
        eprintln!("{failed} scheduling point(s) were singular");
    }
    Ok(())
}
