//! Command-line front end.
//!
//! Every subcommand prints its primary JSON result to stdout, or writes it
//! with companion TSV files and a `manifest.json` under `--out DIR`.
//!
//! Exit codes: 0 success, 1 input error, 2 no weight solution for the
//! posited model, 3 success with a warning.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::counts::{
    analyze, parse_covariate, synthesize, AnalysisParams, CountDataset, PriorProbability,
    SynthConfig,
};
use crate::error::{Error, Result};
use crate::power::{PowerModel, TabulatedCurve};
use crate::procedure::{
    alpha_star, fdr_upper_bound, read_pvalue_csv, run_procedure, write_decision_tsv,
    ProcedureParams, TestBattery, ThresholdMode, Variant,
};
use crate::sim::{run_preset_table, SimFile, SimTable};
use crate::weights::{
    asymptotically_optimal_weights, optimal_fixed_t_weights, PriorSpec, WeightProfile,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 1;
pub const EXIT_NO_SOLUTION: u8 = 2;
pub const EXIT_WARNING: u8 = 3;

#[derive(Debug, Parser, Serialize)]
#[command(name = "wamdf", version, about = "Weighted adaptive multiple testing")]
pub struct Cli {
    /// Worker threads; defaults to all cores. Results do not depend on it.
    #[arg(long, global = true, env = "WAMDF_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Optimal weights from a `p,gamma` prior CSV.
    Weights(WeightsArgs),
    /// Apply UU, WU, UA or WA to a p-value file.
    Run(RunArgs),
    /// Monte Carlo presets 1-4.
    Simulate(SimulateArgs),
    /// Score tests and weighted analysis of a count table.
    Analyze(AnalyzeArgs),
    /// Write a seeded synthetic count table.
    SynthCounts(SynthArgs),
    /// Finite-sample level adjustment and FDR bound.
    Bounds(BoundsArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct WeightsArgs {
    #[arg(long)]
    pub prior: PathBuf,
    /// Asymptotically optimal weights at this level.
    #[arg(long, conflicts_with = "t", required_unless_present = "t")]
    pub alpha: Option<f64>,
    /// Optimal fixed-t weights with this mean threshold.
    #[arg(long)]
    pub t: Option<f64>,
    /// Tabulated `t,power` CSV replacing the normal power model.
    #[arg(long)]
    pub power_curve: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct RunArgs {
    /// CSV with a `p` column and optionally a `weight` column.
    #[arg(long)]
    pub pvalues: PathBuf,
    /// Weights as profile JSON or a delimited file with a `weight` column.
    #[arg(long, conflicts_with = "unit")]
    pub weights: Option<PathBuf>,
    /// Use unit weights.
    #[arg(long)]
    pub unit: bool,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Defaults to the profile's mean threshold when the weights are JSON.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Upper bound on the threshold; defaults to `1/max(w)`.
    #[arg(long)]
    pub u: Option<f64>,
    #[arg(long, value_delimiter = ',', default_value = "WA")]
    pub variant: Vec<Variant>,
    /// Finite-sample mode: level `alpha_star` and `u = lambda`.
    #[arg(long)]
    pub finite_fdr: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, required_unless_present = "config")]
    pub preset: Option<u8>,
    /// Upper ends of the effect-size range, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub a: Vec<f64>,
    #[arg(long = "M")]
    pub m: Option<usize>,
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML file with `preset`, `a`, `m`, `replications`, `seed`; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub counts: PathBuf,
    /// Covariate values, comma separated.
    #[arg(long, conflicts_with = "x_file", required_unless_present = "x_file")]
    pub x: Option<String>,
    #[arg(long)]
    pub x_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.5, conflicts_with = "p_prior_file")]
    pub p_prior: f64,
    /// One prior probability per feature, whitespace or comma separated.
    #[arg(long)]
    pub p_prior_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub target_power: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    pub features: usize,
    #[arg(long, default_value_t = 0.2)]
    pub alt_fraction: f64,
    #[arg(long, default_value_t = 0.8)]
    pub beta: f64,
    #[arg(long, default_value_t = 6)]
    pub n_min: u64,
    #[arg(long, default_value_t = 911)]
    pub n_max: u64,
    #[arg(long, value_delimiter = ',')]
    pub x: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BoundsArgs {
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    pub lambda: f64,
    /// Largest weight; gives `alpha_star`.
    #[arg(long)]
    pub w_max: Option<f64>,
    /// Mean true-null weight; with `--m0` gives the FDR bound.
    #[arg(long, requires = "m0")]
    pub w0_bar: Option<f64>,
    #[arg(long)]
    pub m0: Option<usize>,
}

/// Written next to every output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub argv: Vec<String>,
    pub flags: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub outputs: Vec<PathBuf>,
    pub version: &'static str,
    pub timestamp: String,
}

struct Outcome {
    json: serde_json::Value,
    files: Vec<(String, Vec<u8>)>,
    inputs: Vec<PathBuf>,
    seed: Option<u64>,
    warning: Option<String>,
}

impl Outcome {
    fn new(json: serde_json::Value) -> Self {
        Outcome {
            json,
            files: Vec::new(),
            inputs: Vec::new(),
            seed: None,
            warning: None,
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| Error::io(path, e))
}

fn profile_tsv(prior: &PriorSpec, profile: &WeightProfile) -> Result<Vec<u8>> {
    let mut wtr = csv::WriterBuilder::new().delimiter(b'\t').from_writer(Vec::new());
    wtr.write_record(["index", "p", "gamma", "weight", "threshold"])?;
    for (i, &w) in profile.weights.iter().enumerate() {
        wtr.write_record([
            i.to_string(),
            prior.p()[i].to_string(),
            prior.gamma()[i].to_string(),
            w.to_string(),
            (profile.t_bar * w).to_string(),
        ])?;
    }
    wtr.into_inner().map_err(|e| Error::io("<tsv>", e.into_error()))
}

fn cmd_weights(a: &WeightsArgs) -> Result<Outcome> {
    let prior = PriorSpec::from_csv_path(&a.prior)?;
    let model = match &a.power_curve {
        Some(p) => PowerModel::Tabulated(TabulatedCurve::from_csv_path(p)?),
        None => PowerModel::NormalLocation,
    };
    let profile = match (a.alpha, a.t) {
        (Some(alpha), None) => asymptotically_optimal_weights(&model, &prior, alpha)?,
        (None, Some(t)) => optimal_fixed_t_weights(&model, &prior, t)?,
        _ => return Err(Error::invalid("give exactly one of --alpha and --t")),
    };
    let mut out = Outcome::new(serde_json::to_value(&profile)?);
    out.files.push(("weights.json".into(), serde_json::to_vec_pretty(&profile)?));
    out.files.push(("weights.tsv".into(), profile_tsv(&prior, &profile)?));
    out.inputs.push(a.prior.clone());
    out.inputs.extend(a.power_curve.clone());
    out.warning = profile.warning.clone();
    Ok(out)
}

/// Weights and, for a profile JSON, its mean threshold.
pub fn read_weights(path: &Path) -> Result<(Vec<f64>, Option<f64>)> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        let profile: WeightProfile = serde_json::from_str(&read_text(path)?)?;
        return Ok((profile.weights, Some(profile.t_bar)));
    }
    let text = read_text(path)?;
    let delim = if text.lines().next().is_some_and(|l| l.contains('\t')) { b'\t' } else { b',' };
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delim)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let col = rdr
        .headers()?
        .iter()
        .position(|h| h == "weight")
        .ok_or_else(|| Error::invalid(format!("{}: no \"weight\" column", path.display())))?;
    let mut w = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let f = rec.get(col).unwrap_or("");
        w.push(f.parse().map_err(|_| {
            Error::invalid(format!("{}: row {}: bad weight {f:?}", path.display(), i + 2))
        })?);
    }
    Ok((w, None))
}

fn cmd_run(a: &RunArgs) -> Result<Outcome> {
    let (p, embedded) = read_pvalue_csv(open(&a.pvalues)?)?;
    let mut inputs = vec![a.pvalues.clone()];
    let (weights, t_bar) = match (&a.weights, a.unit) {
        (Some(path), _) => {
            inputs.push(path.clone());
            read_weights(path)?
        }
        (None, true) => (vec![1.0; p.len()], None),
        (None, false) => match embedded {
            Some(w) => (w, None),
            None if a.variant.iter().any(|v| v.is_weighted()) => {
                return Err(Error::invalid(
                    "weighted variants need --weights, --unit or a weight column",
                ))
            }
            None => (vec![1.0; p.len()], None),
        },
    };
    let battery = TestBattery::new(p.clone(), weights.clone())?;
    let mut params = ProcedureParams::new(a.alpha);
    if let Some(l) = a.lambda.or(t_bar) {
        params = params.with_lambda(l);
    }
    if let Some(u) = a.u {
        params = params.with_u(u);
    }
    if a.finite_fdr {
        params = params.with_mode(ThresholdMode::FiniteSample);
    }
    let mut reports = Vec::new();
    let mut out = Outcome::new(serde_json::Value::Null);
    for &v in &a.variant {
        let report = run_procedure(v, &p, Some(&weights), &params)?;
        let shown = if v.is_weighted() {
            battery.clone()
        } else {
            TestBattery::unweighted(p.clone())?
        };
        let mut buf = Vec::new();
        write_decision_tsv(&mut buf, &shown, &report)?;
        out.files.push((format!("decisions_{v}.tsv"), buf));
        reports.push(report);
    }
    out.json = serde_json::to_value(&reports)?;
    out.files.push(("report.json".into(), serde_json::to_vec_pretty(&reports)?));
    out.inputs = inputs;
    Ok(out)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<Outcome> {
    let file = match &a.config {
        Some(path) => Some(SimFile::parse(&read_text(path)?)?),
        None => None,
    };
    let preset = a
        .preset
        .or(file.as_ref().map(|f| f.preset))
        .ok_or_else(|| Error::invalid("--preset is required"))?;
    let seed = a
        .seed
        .or(file.as_ref().map(|f| f.seed))
        .ok_or_else(|| Error::invalid("--seed is required; simulations never pick a seed silently"))?;
    let a_values = if !a.a.is_empty() {
        a.a.clone()
    } else {
        file.as_ref().map_or_else(|| vec![1.0, 3.0, 5.0], |f| f.a.clone())
    };
    let m = a.m.or(file.as_ref().map(|f| f.m)).unwrap_or(1000);
    let k = a.k.or(file.as_ref().map(|f| f.replications)).unwrap_or(1000);
    let table: SimTable = run_preset_table(preset, &a_values, m, k, seed)?;

    let mut out = Outcome::new(serde_json::to_value(&table)?);
    let mut tsv = Vec::new();
    table.write_tsv(&mut tsv)?;
    let mut long = Vec::new();
    table.write_long_tsv(&mut long)?;
    out.files.push(("table.tsv".into(), tsv));
    out.files.push(("long.tsv".into(), long));
    out.files.push(("summary.json".into(), serde_json::to_vec_pretty(&table)?));
    out.inputs.extend(a.config.clone());
    out.seed = Some(seed);
    let warnings: usize = table.columns.iter().map(|c| c.summary.warnings).sum();
    let skipped: usize = table.columns.iter().map(|c| c.summary.skipped).sum();
    if skipped > 0 {
        out.warning = Some(format!("{skipped} replications had no weight solution and were skipped"));
    } else if warnings > 0 {
        eprintln!("note: {warnings} replications solved with alpha > 1 - max(p)");
    }
    Ok(out)
}

fn parse_values(path: &Path) -> Result<Vec<f64>> {
    parse_covariate(&read_text(path)?)
}

#[derive(Serialize)]
struct AnalysisSummary<'a> {
    features_tested: usize,
    excluded: &'a [crate::counts::ExcludedFeature],
    k_beta: f64,
    achieved_power: f64,
    k_star: f64,
    lambda: f64,
    u: f64,
    rejections_wa: usize,
    rejections_ua: usize,
    wa: &'a crate::procedure::DecisionReport,
    ua: &'a crate::procedure::DecisionReport,
}

fn cmd_analyze(a: &AnalyzeArgs) -> Result<Outcome> {
    let mut inputs = vec![a.counts.clone()];
    let x = match (&a.x, &a.x_file) {
        (Some(s), _) => parse_covariate(s)?,
        (None, Some(p)) => {
            inputs.push(p.clone());
            parse_values(p)?
        }
        (None, None) => return Err(Error::invalid("give --x or --x-file")),
    };
    let data = CountDataset::from_csv_path(&a.counts, x)?;
    let p_prior = match &a.p_prior_file {
        Some(p) => {
            inputs.push(p.clone());
            PriorProbability::PerFeature(parse_values(p)?)
        }
        None => PriorProbability::Common(a.p_prior),
    };
    let params = AnalysisParams {
        alpha: a.alpha,
        p_prior,
        target_power: a.target_power,
    };
    let analysis = analyze(&data, &params)?;
    let c = &analysis.calibration;
    let summary = AnalysisSummary {
        features_tested: analysis.features.len(),
        excluded: &analysis.excluded,
        k_beta: c.k_beta,
        achieved_power: c.achieved_power,
        k_star: c.k_star,
        lambda: c.profile.t_bar,
        u: c.profile.u,
        rejections_wa: analysis.wa.r,
        rejections_ua: analysis.ua.r,
        wa: &analysis.wa,
        ua: &analysis.ua,
    };
    let mut out = Outcome::new(serde_json::to_value(&summary)?);
    let mut features = Vec::new();
    analysis.write_feature_tsv(&mut features)?;
    let mut power = Vec::new();
    analysis.write_power_tsv(&mut power)?;
    out.files.push(("features.tsv".into(), features));
    out.files.push(("power.tsv".into(), power));
    out.files.push(("summary.json".into(), serde_json::to_vec_pretty(&summary)?));
    out.inputs = inputs;
    out.warning = c.profile.warning.clone();
    if !analysis.excluded.is_empty() {
        eprintln!("note: {} degenerate features excluded", analysis.excluded.len());
    }
    Ok(out)
}

fn cmd_synth(a: &SynthArgs) -> Result<Outcome> {
    let mut config = SynthConfig::default_design(a.features, a.alt_fraction, a.beta, a.seed);
    config.n_min = a.n_min;
    config.n_max = a.n_max;
    if let Some(x) = &a.x {
        config.x = x.clone();
    }
    let data = synthesize(&config)?;
    let mut counts = Vec::new();
    data.dataset.write_csv(&mut counts)?;
    let x_text = config.x.iter().map(f64::to_string).collect::<Vec<_>>().join(",") + "\n";
    let mut truth = String::from("feature\tassociated\n");
    for (name, &t) in data.dataset.names().iter().zip(&data.associated) {
        truth.push_str(&format!("{name}\t{}\n", u8::from(t)));
    }
    let mut out = Outcome::new(serde_json::to_value(&config)?);
    out.files.push(("counts.csv".into(), counts));
    out.files.push(("x.txt".into(), x_text.into_bytes()));
    out.files.push(("truth.tsv".into(), truth.into_bytes()));
    out.seed = Some(a.seed);
    Ok(out)
}

fn cmd_bounds(a: &BoundsArgs) -> Result<Outcome> {
    if a.w_max.is_none() && a.w0_bar.is_none() {
        return Err(Error::invalid("give --w-max, or --w0-bar with --m0"));
    }
    let mut json = serde_json::Map::new();
    if let Some(w) = a.w_max {
        json.insert("alpha_star".into(), alpha_star(a.alpha, a.lambda, w)?.into());
    }
    if let (Some(w0), Some(m0)) = (a.w0_bar, a.m0) {
        json.insert("fdr_upper_bound".into(), fdr_upper_bound(a.alpha, a.lambda, w0, m0)?.into());
    }
    Ok(Outcome::new(json.into()))
}

fn out_dir(cmd: &Command) -> Option<&Path> {
    match cmd {
        Command::Weights(a) => a.out.as_deref(),
        Command::Run(a) => a.out.as_deref(),
        Command::Simulate(a) => a.out.as_deref(),
        Command::Analyze(a) => a.out.as_deref(),
        Command::SynthCounts(a) => Some(&a.out),
        Command::Bounds(_) => None,
    }
}

fn name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Weights(_) => "weights",
        Command::Run(_) => "run",
        Command::Simulate(_) => "simulate",
        Command::Analyze(_) => "analyze",
        Command::SynthCounts(_) => "synth-counts",
        Command::Bounds(_) => "bounds",
    }
}

fn execute(cli: &Cli, argv: &[String]) -> Result<Option<String>> {
    let outcome = match &cli.command {
        Command::Weights(a) => cmd_weights(a)?,
        Command::Run(a) => cmd_run(a)?,
        Command::Simulate(a) => cmd_simulate(a)?,
        Command::Analyze(a) => cmd_analyze(a)?,
        Command::SynthCounts(a) => cmd_synth(a)?,
        Command::Bounds(a) => cmd_bounds(a)?,
    };
    match out_dir(&cli.command) {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let mut outputs = Vec::new();
            for (file, bytes) in &outcome.files {
                let path = dir.join(file);
                fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
                outputs.push(path);
            }
            let manifest = RunManifest {
                subcommand: name(&cli.command).into(),
                argv: argv.to_vec(),
                flags: serde_json::to_value(cli)?,
                inputs: outcome.inputs,
                seed: outcome.seed,
                outputs,
                version: env!("CARGO_PKG_VERSION"),
                timestamp: chrono::Utc::now().to_rfc3339(),
            };
            let path = dir.join("manifest.json");
            fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
        }
        None => {
            let text = serde_json::to_string_pretty(&outcome.json)?;
            // a closed pipe (e.g. `| head`) is not an error
            let _ = writeln!(std::io::stdout().lock(), "{text}");
        }
    }
    Ok(outcome.warning)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let argv: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads.filter(|&n| n > 0) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match execute(&cli, &argv) {
        Ok(None) => ExitCode::from(EXIT_OK),
        Ok(Some(w)) => {
            eprintln!("warning: {w}");
            ExitCode::from(EXIT_WARNING)
        }
        Err(e @ Error::NoSolution { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_NO_SOLUTION)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
