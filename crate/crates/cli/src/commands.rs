use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use mauc::bench::{run_bench, BenchConfig, DEFAULT_RHO};
use mauc::dataset::{imbalance_factors, load_csv, load_libsvm, split_stratified, synth_blobs, synth_uniform};
use mauc::kernels::dispatch_fast;
use mauc::metrics::{mauc_ova, mauc_ovo, pair_auc_all, pair_report, PairReportRow};
use mauc::trainer::{train as train_pairwise, train_ce_baseline, TrainConfig};
use mauc::verify::{verify_kernel, VerifyConfig};
use mauc::{ClassIndex, Dataset, LinearSoftmaxModel};
use ndarray::{s, Array2};
use serde::Serialize;
use serde_json::json;

use crate::{Baseline, BenchArgs, DataArgs, EvalArgs, Format, SynthArgs, SynthKind, TrainArgs, VerifyArgs};

#[derive(Debug)]
pub enum CliError {
    Lib(mauc::Error),
    Write { path: PathBuf, source: std::io::Error },
    VerifyFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::VerifyFailed(_) => 1,
            CliError::Lib(mauc::Error::ShapeMismatch(_)) => 3,
            CliError::Lib(mauc::Error::Diverged { .. }) => 4,
            CliError::Lib(_) | CliError::Write { .. } => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Write { path, source } => write!(f, "cannot write {}: {source}", path.display()),
            CliError::VerifyFailed(n) => write!(f, "{n} trial(s) violated the tolerances"),
        }
    }
}

impl From<mauc::Error> for CliError {
    fn from(e: mauc::Error) -> Self {
        CliError::Lib(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes")
}

fn load(args: &DataArgs) -> Result<Dataset> {
    Ok(match args.format {
        Format::Csv => load_csv(&args.data, args.label_col)?,
        Format::Libsvm => load_libsvm(&args.data)?,
    })
}

/// LIBSVM files omit trailing zero features, so the inferred dimension may
/// fall short of the model's.
fn pad_features(ds: Dataset, dim: usize) -> Result<Dataset> {
    if ds.dim() >= dim {
        return Ok(ds);
    }
    let mut x = Array2::zeros((ds.len(), dim));
    x.slice_mut(s![.., ..ds.dim()]).assign(&ds.features());
    Ok(Dataset::new(x, ds.labels().to_vec(), ds.n_classes())?)
}

#[derive(Serialize)]
struct EvalReport {
    n: usize,
    n_classes: usize,
    mauc: f64,
    mauc_ova: f64,
    priors: Vec<f64>,
    xi: f64,
    chi: f64,
    pairs: Vec<PairReportRow>,
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let model = LinearSoftmaxModel::load(&args.model)?;
    let mut ds = load(&args.data)?;
    if args.data.format == Format::Libsvm {
        ds = pad_features(ds, model.dim())?;
    }
    if ds.n_classes() != model.n_classes() {
        return Err(mauc::Error::ShapeMismatch(format!(
            "data has {} classes, model has {}",
            ds.n_classes(),
            model.n_classes()
        ))
        .into());
    }
    let idx = ClassIndex::from_labels(ds.labels(), ds.n_classes())?;
    let scores = model.score(ds.features())?;
    let pairs = pair_auc_all(&scores, &idx)?;
    let priors = idx.proportions().to_vec();
    let (xi, chi) = imbalance_factors(&idx);
    let report = EvalReport {
        n: ds.len(),
        n_classes: ds.n_classes(),
        mauc: mauc_ovo(&pairs),
        mauc_ova: mauc_ova(&pairs, &priors)?,
        priors,
        xi,
        chi,
        pairs: pair_report(&scores, &idx, args.pairs.max(1))?,
    };
    if args.json {
        println!("{}", to_json(&report));
    } else {
        println!("samples    {}", report.n);
        println!("classes    {}", report.n_classes);
        println!("MAUC       {:.6}", report.mauc);
        println!("MAUC-ova   {:.6}", report.mauc_ova);
        println!("xi         {:.6}", report.xi);
        println!("chi        {:.6}", report.chi);
        println!("rarest pairs:");
        println!("  i  j  rho_i*rho_j  AUC_i|j");
        for r in &report.pairs {
            println!("  {:<2} {:<2} {:<12.6} {:.6}", r.i, r.j, r.freq, r.auc);
        }
    }
    Ok(())
}

pub fn verify(args: &VerifyArgs) -> Result<()> {
    let cfg = VerifyConfig {
        trials: args.trials,
        max_n: args.max_n,
        min_n: VerifyConfig::default().min_n.min(args.max_n),
        seed: args.seed,
        ..VerifyConfig::default()
    };
    let factor = 1.0 + args.perturb;
    let report = verify_kernel(&args.loss, &cfg, |f, idx, spec, g| {
        let mut out = dispatch_fast(f, idx, spec, g)?;
        out.loss.value *= factor;
        Ok(out)
    })?;
    if args.json {
        let mut v = serde_json::to_value(&report).expect("report serializes");
        v["passed"] = json!(report.passed());
        v["seed"] = json!(args.seed);
        v["max_n"] = json!(args.max_n);
        println!("{}", to_json(&v));
    } else {
        println!(
            "{}: {} trials, worst relative loss deviation {:.3e}, worst gradient deviation {:.3e}",
            report.spec, report.trials, report.worst_loss_dev, report.worst_grad_dev
        );
        for t in &report.failures {
            println!(
                "FAIL seed {} (N={}, N_C={}): loss {} vs oracle {}, loss dev {:.3e}, grad dev {:.3e}; replay with --seed {} --trials 1 --max-n {}",
                t.seed, t.n, t.n_classes, t.fast_loss, t.naive_loss, t.loss_dev, t.grad_dev, t.seed, args.max_n
            );
        }
        println!("{}", if report.passed() { "PASS" } else { "FAIL" });
    }
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::VerifyFailed(report.failures.len()))
    }
}

pub fn bench(args: &BenchArgs) -> Result<()> {
    let rho = match (&args.rho, args.nc) {
        (Some(rho), Some(nc)) if rho.len() != nc => {
            return Err(
                mauc::Error::InvalidArgument(format!("--rho has {} entries but --nc is {nc}", rho.len())).into(),
            )
        }
        (Some(rho), _) => rho.clone(),
        (None, Some(nc)) if nc != DEFAULT_RHO.len() => vec![1.0 / nc as f64; nc],
        (None, _) => DEFAULT_RHO.to_vec(),
    };
    let cfg = BenchConfig {
        sizes: args.sizes.clone(),
        n_classes: rho.len(),
        dim: args.d,
        rho,
        trials: args.trials,
        seed: args.seed,
        with_grad: args.grad,
        ..BenchConfig::new(args.loss)
    };
    let report = run_bench(&cfg)?;
    match &args.out {
        None => print!("{}", report.to_csv()),
        Some(path) => {
            let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
            let body = if is_json {
                to_json(&report) + "\n"
            } else {
                report.to_csv()
            };
            write_file(path, body)?;
            for r in &report.rows {
                println!(
                    "N={:<6} naive {:>10.4} ms  fast {:>8.4} ms  ratio {:.1}",
                    r.n, r.naive_ms, r.fast_ms, r.ratio
                );
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    objective: String,
    n_train: usize,
    n_valid: usize,
    n_test: usize,
    epochs: usize,
    final_risk: f64,
    best_val_mauc: Option<f64>,
    best_val_epoch: Option<usize>,
    test_mauc: f64,
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let ds = load(&args.data)?;
    let (tr, va, te) = split_stratified(&ds, (0.8, 0.1, 0.1), args.seed)?;
    let cfg = TrainConfig {
        lr: args.lr,
        momentum: args.momentum,
        weight_decay: args.wd,
        epochs: args.epochs,
        batch: args.batch,
        lr_decay: args.lr_decay,
        seed: args.seed,
        eval_every: args.eval_every,
    };
    let (model, trace, objective) = match args.baseline {
        Some(Baseline::Ce) => {
            let (m, t) = train_ce_baseline(&tr, Some(&va), &cfg)?;
            (m, t, "ce".to_string())
        }
        None => {
            let (m, t) = train_pairwise(&tr, Some(&va), &args.loss, &cfg)?;
            (m, t, args.loss.to_string())
        }
    };
    write_file(&args.out, model.to_text())?;
    if let Some(path) = &args.trace {
        write_file(path, trace.to_csv())?;
    }
    let idx = ClassIndex::from_labels(te.labels(), te.n_classes())?;
    let test_mauc = mauc::metrics::mauc(&model.score(te.features())?, &idx)?;
    let best = trace.best_validation();
    let summary = TrainSummary {
        objective,
        n_train: tr.len(),
        n_valid: va.len(),
        n_test: te.len(),
        epochs: cfg.epochs,
        final_risk: trace.last().map_or(f64::NAN, |r| r.risk),
        best_val_mauc: best.map(|b| b.1),
        best_val_epoch: best.map(|b| b.0),
        test_mauc,
    };
    if args.json {
        println!("{}", to_json(&summary));
    } else {
        println!("objective  {}", summary.objective);
        println!(
            "split      {} / {} / {}",
            summary.n_train, summary.n_valid, summary.n_test
        );
        println!("risk       {:.6}", summary.final_risk);
        if let (Some(v), Some(e)) = (summary.best_val_mauc, summary.best_val_epoch) {
            println!("best val   {v:.6} (epoch {e})");
        }
        println!("test MAUC  {:.6}", summary.test_mauc);
    }
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let ds = match args.kind {
        SynthKind::Uniform => synth_uniform(args.n, args.d, &args.rho, args.seed)?,
        SynthKind::Blobs => synth_blobs(args.n, args.d, &args.rho, args.sep, args.seed)?,
    };
    let mut buf = Vec::new();
    ds.write_csv(&mut buf).expect("writing to memory");
    write_file(&args.out, buf)?;
    println!(
        "wrote {} samples, {} features, class counts {:?}",
        ds.len(),
        ds.dim(),
        ds.class_counts()
    );
    Ok(())
}
