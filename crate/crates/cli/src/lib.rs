//! Command-line front end for `npica`: `fit`, `predict`, `eval`, `synth`
//! and `oracle`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

mod args;
mod error;
mod model_file;
mod pipeline;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::Path;

use clap::Parser;
use npica::data::{load_csv, synth, synth_patches, Dataset, SynthSpec};
use npica::eval::{best_permutation_error, PermutationMatch};
use npica::nsmmica::{predict, FitConfig, Init, Mode};
use npica::oracle::run_suite;
use npica::wfastica::Nonlinearity;

pub use args::{Cli, Command, FitArgs};
pub use error::{CliError, CliResult};
pub use model_file::{ModelFile, FORMAT_VERSION};
pub use pipeline::{fit_dataset, FitOptions, Fitted, Preprocess};

use args::{EvalArgs, InitArg, ModeArg, NonlinearityArg, OracleArgs, PredictArgs, SynthArgs, SynthKind};

/// Parses `argv` (program name first) and runs the subcommand, writing to
/// the process streams.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// [`run`] with explicit output streams.
pub fn run_with<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    1
                }
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> CliResult<i32> {
    match cmd {
        Command::Fit(a) => buffered(a.threads, out, |buf| cmd_fit(&a, buf)),
        Command::Predict(a) => buffered(a.threads, out, |buf| cmd_predict(&a, buf)),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Synth(a) => cmd_synth(&a, out),
        Command::Oracle(a) => cmd_oracle(&a, out),
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    match threads {
        None => f(),
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))?
            .install(f),
    }
}

// Worker pools need `Send` closures, so output is collected first.
fn buffered(
    threads: Option<usize>,
    out: &mut dyn Write,
    f: impl FnOnce(&mut dyn Write) -> CliResult<i32> + Send,
) -> CliResult<i32> {
    let mut buf = Vec::new();
    let result = with_threads(threads, || f(&mut buf));
    out.write_all(&buf).map_err(io_err)?;
    result
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Data(format!("write failed: {e}"))
}

/// Maps parsed `fit` flags onto a validated configuration.
pub fn fit_options(a: &FitArgs) -> CliResult<FitOptions> {
    let nonlinearity = match a.nonlinearity {
        NonlinearityArg::Logcosh => {
            Nonlinearity::logcosh(a.alpha1).map_err(|e| CliError::Usage(e.to_string()))?
        }
        NonlinearityArg::Gauss => Nonlinearity::Gauss,
    };
    let config = FitConfig {
        m: a.components,
        mode: match a.mode {
            ModeArg::Ica => Mode::Ica,
            ModeArg::Npem => Mode::Npem,
        },
        max_outer: a.max_iter,
        outer_tol: a.tol,
        ica_tol: a.ica_tol,
        ica_max_inner: a.ica_max_inner,
        nonlinearity,
        bandwidth_coef: a.bandwidth_coef,
        init: match a.init {
            InitArg::Kmeans => Init::KMeans,
            InitArg::Random => Init::Random,
        },
        kmeans_restarts: a.kmeans_restarts,
        kmeans_confidence: a.kmeans_confidence,
        seed: a.seed,
        min_lambda: a.min_lambda,
        reinit_dying: a.reinit_dying,
        recompute_posterior_after_ica: a.recompute_posterior_after_ica,
        ..FitConfig::default()
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(FitOptions {
        config,
        standardize: a.standardize,
        pca: a.pca,
        pca_corr: a.pca_corr,
    })
}

fn cmd_fit(a: &FitArgs, out: &mut dyn Write) -> CliResult<i32> {
    let opts = fit_options(a)?;
    let ds = load(&a.input, a.label_column.as_deref())?;
    if let Some(d) = a.pca {
        if d == 0 || d > ds.r() {
            return Err(CliError::Usage(format!("--pca must lie in 1..={}, got {d}", ds.r())));
        }
    }
    let fitted = fit_dataset(&ds, &opts)?;
    let model = &fitted.model;
    let rep = &model.report;
    let w = |out: &mut dyn Write, s: String| writeln!(out, "{s}").map_err(io_err);
    w(out, format!(
        "fit: n={} r={} m={} mode={:?} seed={}",
        ds.n(),
        model.r(),
        model.m(),
        opts.config.mode,
        opts.config.seed
    ))?;
    if let Some(p) = &fitted.preprocess.pca {
        let kept: f64 = p.explained_ratio().iter().sum();
        w(out, format!(
            "pca: {} -> {} ({} matrix), explained variance {kept:.4}",
            p.means.len(),
            p.d(),
            if opts.pca_corr { "correlation" } else { "covariance" }
        ))?;
    }
    w(out, format!(
        "iterations: {} ({})",
        rep.outer_iters,
        if rep.converged { "converged" } else { "not converged" }
    ))?;
    if let Some(ll) = rep.final_loglik() {
        w(out, format!("log-likelihood: {ll:.6}"))?;
    }
    let lambdas: Vec<String> = model.lambdas().iter().map(|l| format!("{l:.6}")).collect();
    w(out, format!("lambda: {}", lambdas.join(" ")))?;
    if let Some(e) = &fitted.error {
        w(out, error_line(e))?;
    }
    for warning in &rep.warnings {
        w(out, format!("warning: {warning}"))?;
    }
    w(out, format!("elapsed: {:.3}s", fitted.elapsed.as_secs_f64()))?;
    if let Some(path) = &a.output {
        ModelFile::from_fit(model, &fitted.preprocess, a.label_column.as_deref(), &opts.config).save(path)?;
        w(out, format!("model written to {}", path.display()))?;
    }
    Ok(0)
}

fn error_line(e: &PermutationMatch) -> String {
    let total = e.confusion.total();
    let wrong = (e.error_rate * total as f64).round() as usize;
    format!("error rate: {:.6} ({wrong}/{total})", e.error_rate)
}

fn load(path: &Path, label: Option<&str>) -> CliResult<Dataset> {
    load_csv(path, label).map_err(|e| match e {
        npica::Error::Io(io) => CliError::Data(format!("cannot read `{}`: {io}", path.display())),
        other => CliError::Data(format!("`{}`: {other}", path.display())),
    })
}

/// Reads a CSV header without parsing the body.
fn header(path: &Path) -> CliResult<Vec<String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read `{}`: {e}", path.display())))?;
    let first = text.lines().next().unwrap_or("");
    Ok(first.split(',').map(|s| s.trim().trim_matches('"').to_string()).collect())
}

fn load_for_model(path: &Path, mf: &ModelFile) -> CliResult<Dataset> {
    let names = header(path)?;
    let label = mf
        .label_column
        .as_deref()
        .filter(|l| names.iter().any(|n| n == l));
    load(path, label)
}

fn cmd_predict(a: &PredictArgs, out: &mut dyn Write) -> CliResult<i32> {
    let mf = ModelFile::load(&a.model)?;
    let model = mf.to_model()?;
    let pre = mf.to_preprocess()?;
    let ds = load_for_model(&a.input, &mf)?;
    let x = pre.apply(&ds)?;
    let (labels, post) = predict(&model, &x)?;
    let mut s = String::from("row,label");
    for j in 0..model.m() {
        s.push_str(&format!(",p{j}"));
    }
    s.push('\n');
    for (i, l) in labels.iter().enumerate() {
        s.push_str(&format!("{i},{l}"));
        for v in post.row(i) {
            s.push_str(&format!(",{v:?}"));
        }
        s.push('\n');
    }
    fs::write(&a.output, s)
        .map_err(|e| CliError::Data(format!("cannot write `{}`: {e}", a.output.display())))?;
    writeln!(out, "predicted {} rows into {}", labels.len(), a.output.display()).map_err(io_err)?;
    Ok(0)
}

fn labels_of(path: &Path, column: &str) -> CliResult<Vec<usize>> {
    let ds = load(path, Some(column))?;
    ds.labels
        .ok_or_else(|| CliError::Data(format!("`{}` has no column `{column}`", path.display())))
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> CliResult<i32> {
    let pred = labels_of(&a.pred, &a.pred_column)?;
    let truth = labels_of(&a.truth, &a.truth_column)?;
    if pred.len() != truth.len() {
        return Err(CliError::Data(format!(
            "{} predictions but {} true labels",
            pred.len(),
            truth.len()
        )));
    }
    let e = best_permutation_error(&pred, &truth)?;
    let mut s = format!("{}\n", error_line(&e));
    s.push_str("confusion (rows: true class, columns: predicted label)\n");
    for row in &e.confusion.counts {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:>5}")).collect();
        s.push_str(&cells.join(""));
        s.push('\n');
    }
    write!(out, "{s}").map_err(io_err)?;
    Ok(0)
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> CliResult<i32> {
    let ds = match a.kind {
        SynthKind::Mixture => {
            let lambdas = a
                .lambdas
                .clone()
                .unwrap_or_else(|| vec![1.0 / a.components as f64; a.components]);
            let spec = SynthSpec::random(a.components, a.dim, a.n, lambdas, a.separation, a.seed)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            synth(&spec)?
        }
        SynthKind::Patches => synth_patches(a.n, a.side, a.seed).map_err(|e| CliError::Usage(e.to_string()))?,
    };
    npica::data::write_csv(&ds, &a.output)?;
    writeln!(out, "wrote {} rows x {} columns to {}", ds.n(), ds.r(), a.output.display()).map_err(io_err)?;
    Ok(0)
}

fn cmd_oracle(a: &OracleArgs, out: &mut dyn Write) -> CliResult<i32> {
    let rows = run_suite(a.seed);
    let mut all = true;
    for r in &rows {
        all &= r.passed;
        writeln!(
            out,
            "{} {:<42} {:>8.1} ms  {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.elapsed.as_secs_f64() * 1e3,
            r.detail
        )
        .map_err(io_err)?;
    }
    Ok(if all { 0 } else { 3 })
}
