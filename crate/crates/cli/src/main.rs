//! `dflsim` command-line driver.
//!
//! Every command reads inputs from flags, writes its outputs under `--out`,
//! and echoes the flags into a provenance block so a run can be repeated
//! exactly. Failures print one JSON line on stderr and exit non-zero.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use dflsim::codebook::{default_codebook, Codebook};
use dflsim::competency::{score_dataset, scores_csv};
use dflsim::dataset::{parse_csv, Dataset, Provenance};
use dflsim::models::{ModelRegistry, TrainedModel, DEFAULT_ACCURACY_TOLERANCE};
use dflsim::pipeline::SplitSpec;
use dflsim::profiling::{profile, ProfileReport, DEFAULT_MIN_CELL};
use dflsim::report;
use dflsim::scenario::{disaggregate, partition_responders, simulate, ResponderConfig, ResponderPartition, Scenario, SimulationResult};
use dflsim::synth::{synthesize_with_codebook, SynthesisSpec};
use dflsim::training::{train, TrainingOutcome, TrainingRequest};
use dflsim_service::{serve, ServiceConfig};

#[derive(Parser)]
#[command(name = "dflsim", version, about = "Digital financial literacy profiling, modelling and scenario simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a calibrated synthetic survey.
    Synth(SynthArgs),
    /// Validate a survey against a codebook and store a normalised copy.
    Ingest(IngestArgs),
    /// Country statistics, CV discriminance and gap tables.
    Profile(ProfileArgs),
    /// Cross-validate, compare and select model families.
    Train(TrainArgs),
    /// Run what-if scenarios through a trained model.
    Simulate(SimulateArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
    /// Render the tables from earlier outputs into one markdown report.
    Report(ReportArgs),
}

#[derive(Args, Serialize)]
struct DataArgs {
    /// Codebook JSON; the built-in codebook when omitted.
    #[arg(long)]
    codebook: Option<PathBuf>,
    /// Survey CSV.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args, Serialize)]
struct SynthArgs {
    #[arg(long, default_value = "appendixA")]
    calibration: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    codebook: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct IngestArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: DataArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct ProfileArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: DataArgs,
    #[arg(long, default_value_t = DEFAULT_MIN_CELL)]
    min_cell: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: DataArgs,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Comma-separated registered family names.
    #[arg(long, default_value = "linear,forest,boosting")]
    families: String,
    #[arg(long, default_value = "country")]
    strata: String,
    #[arg(long, default_value_t = DEFAULT_ACCURACY_TOLERANCE)]
    tolerance: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: DataArgs,
    /// Model JSON written by `train` (defaults to `<out>/model.json`).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Preset names or scenario JSON files, comma-separated or repeated.
    #[arg(long, value_delimiter = ',', required = true)]
    scenario: Vec<String>,
    #[arg(long, overrides_with = "no_clip")]
    clip: bool,
    #[arg(long = "no-clip", overrides_with = "clip")]
    no_clip: bool,
    /// Segmentation fields to disaggregate by.
    #[arg(long, value_delimiter = ',')]
    by: Vec<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct ServeArgs {
    #[arg(long, env = "DFLSIM_BIND", default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    #[arg(long, env = "DFLSIM_DATA_DIR", default_value = "dflsim-data")]
    data_dir: PathBuf,
    #[arg(long, env = "DFLSIM_SEED", default_value_t = 7)]
    seed: u64,
}

#[derive(Args, Serialize)]
struct ReportArgs {
    /// Directory holding profile.json / training.json / simulation.json.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug)]
struct Failure {
    kind: &'static str,
    message: String,
}

impl From<dflsim::Error> for Failure {
    fn from(e: dflsim::Error) -> Self {
        use dflsim::Error as E;
        let kind = match &e {
            E::Io { .. } => "io",
            E::Malformed { .. } => "malformed",
            E::Codebook(_) => "codebook",
            E::Validation(_) => "validation",
            E::Synthesis(_) => "synthesis",
            E::InvalidInput(_) => "invalid_input",
            E::Scenario(_) => "scenario",
            E::LeverScope(_) => "lever_scope",
            E::UnknownFamily(_) => "unknown_family",
            E::Json(_) => "json",
        };
        Failure { kind, message: e.to_string() }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure { kind: "json", message: e.to_string() }
    }
}

fn fail(kind: &'static str, message: impl Into<String>) -> Failure {
    Failure { kind, message: message.into() }
}

type CliResult<T = ()> = Result<T, Failure>;

fn write(path: &Path, text: &str) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| fail("io", format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| fail("io", format!("{}: {e}", path.display())))
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| fail("io", format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, &text)
}

fn ensure_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| fail("io", format!("{}: {e}", dir.display())))
}

fn load_codebook(path: Option<&Path>) -> CliResult<Codebook> {
    Ok(match path {
        Some(p) => Codebook::load(p)?,
        None => default_codebook(),
    })
}

fn load_data(args: &DataArgs) -> CliResult<Dataset> {
    let cb = load_codebook(args.codebook.as_deref())?;
    Ok(parse_csv(cb, &read(&args.data)?, Provenance::Ingested)?)
}

fn provenance<T: Serialize>(command: &str, flags: &T, extra: serde_json::Value) -> CliResult<serde_json::Value> {
    let mut p = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "flags": serde_json::to_value(flags)?,
    });
    if let (Some(obj), serde_json::Value::Object(more)) = (p.as_object_mut(), extra) {
        obj.extend(more);
    }
    Ok(p)
}

fn markdown_header(p: &serde_json::Value) -> String {
    let mut pairs: Vec<(&str, String)> = Vec::new();
    if let Some(obj) = p.as_object() {
        for (k, v) in obj {
            pairs.push((k.as_str(), serde_json::to_string(v).unwrap_or_default()));
        }
    }
    report::provenance_header(&pairs)
}

fn cmd_synth(a: &SynthArgs) -> CliResult {
    let spec = SynthesisSpec::preset(&a.calibration)
        .ok_or_else(|| fail("invalid_input", format!("unknown calibration preset {:?}", a.calibration)))?;
    let cb = load_codebook(a.codebook.as_deref())?;
    let data = synthesize_with_codebook(&spec, &cb, a.seed)?;
    ensure_dir(&a.out)?;
    cb.save(&a.out.join("codebook.json"))?;
    write(&a.out.join("survey.csv"), &data.to_csv_string())?;
    let prov = provenance("synth", a, json!({ "dataset_fingerprint": data.fingerprint() }))?;
    write_json(&a.out.join("synth.json"), &json!({ "provenance": prov, "spec": spec, "summary": data.summarize() }))?;
    println!("synthesized {} records into {}", data.len(), a.out.display());
    Ok(())
}

fn cmd_ingest(a: &IngestArgs) -> CliResult {
    let data = load_data(&a.input)?;
    ensure_dir(&a.out)?;
    data.codebook.save(&a.out.join("codebook.json"))?;
    write(&a.out.join("survey.csv"), &data.to_csv_string())?;
    let prov = provenance("ingest", a, json!({ "dataset_fingerprint": data.fingerprint() }))?;
    write_json(&a.out.join("summary.json"), &json!({ "provenance": prov, "summary": data.summarize() }))?;
    println!("ingested {} records", data.len());
    Ok(())
}

fn cmd_profile(a: &ProfileArgs) -> CliResult {
    let data = load_data(&a.input)?;
    let scores = score_dataset(&data);
    let rep = profile(&data, &scores, a.min_cell)?;
    let prov = provenance("profile", a, json!({ "dataset_fingerprint": data.fingerprint() }))?;
    write(&a.out.join("scores.csv"), &scores_csv(&data, &scores))?;
    write_json(&a.out.join("profile.json"), &json!({ "provenance": prov, "profile": rep }))?;
    write(&a.out.join("profile.md"), &(markdown_header(&prov) + &report::profile_markdown(&rep)))?;
    for d in &rep.discriminance {
        println!(
            "{}: CV(DFC) {} CV(DFL) {}",
            d.country,
            d.cv_dfc.map_or("n/a".into(), |v| format!("{v:.3}")),
            d.cv_dfl.map_or("n/a".into(), |v| format!("{v:.3}"))
        );
    }
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> CliResult {
    let data = load_data(&a.input)?;
    let request = TrainingRequest {
        split: SplitSpec { test_fraction: a.test_fraction, strata_field: a.strata.clone(), folds: a.folds, seed: a.seed },
        families: a.families.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
        tolerance: a.tolerance,
    };
    let outcome = train(&data, &ModelRegistry::with_defaults(), &request)?;
    let prov = provenance(
        "train",
        a,
        json!({ "dataset_fingerprint": outcome.dataset_fingerprint, "model_fingerprint": outcome.chosen().fingerprint() }),
    )?;
    write_json(&a.out.join("training.json"), &json!({ "provenance": prov, "training": outcome }))?;
    write_json(&a.out.join("model.json"), outcome.chosen())?;
    let mut md = markdown_header(&prov) + &report::evaluation_markdown(&outcome);
    match (&outcome.lever_table, &outcome.lever_error) {
        (Some(t), _) => {
            write(&a.out.join("levers.csv"), &t.to_csv_string())?;
            md.push('\n');
            md.push_str(&report::lever_markdown(t));
        }
        (None, Some(e)) => md.push_str(&format!("\nLever table unavailable: {e}\n")),
        _ => {}
    }
    write(&a.out.join("evaluation.md"), &md)?;
    for (name, r) in outcome.reports() {
        println!("{name}: test R² {:?} rmse {:.3}", r.test_r2, r.rmse);
    }
    println!("selected {}", outcome.selection.chosen);
    Ok(())
}

fn load_scenario(spec: &str, codebook: &Codebook) -> CliResult<Scenario> {
    if spec.ends_with(".json") {
        Ok(serde_json::from_str(&read(Path::new(spec))?)?)
    } else {
        Ok(Scenario::preset(spec, codebook)?)
    }
}

#[derive(Serialize)]
struct SimulationOutput<'a> {
    provenance: serde_json::Value,
    results: &'a [SimulationResult],
    responders: &'a ResponderPartition,
}

fn cmd_simulate(a: &SimulateArgs) -> CliResult {
    let data = load_data(&a.input)?;
    let model_path = a.model.clone().unwrap_or_else(|| a.out.join("model.json"));
    let model: TrainedModel = serde_json::from_str(&read(&model_path)?)?;
    let by: Vec<&str> = a.by.iter().map(String::as_str).collect();
    let mut results = Vec::new();
    for s in &a.scenario {
        let mut scenario = load_scenario(s, &data.codebook)?;
        if a.clip {
            scenario.clip = true;
        }
        if a.no_clip {
            scenario.clip = false;
        }
        let mut r = simulate(&data, &model, &scenario)?;
        r.subgroups = disaggregate(&r, &data, &by)?;
        println!(
            "{}: reach {:.1}% gain {:.3} pp",
            r.scenario.name,
            r.reach * 100.0,
            r.population_gain_pct
        );
        results.push(r);
    }
    let responders = partition_responders(&results, &data, &ResponderConfig::default())?;
    let prov = provenance(
        "simulate",
        a,
        json!({ "dataset_fingerprint": data.fingerprint(), "model_fingerprint": model.fingerprint(), "model_seed": model.seed }),
    )?;
    let md = markdown_header(&prov) + &report::scenario_markdown(&results) + "\n" + &report::responder_markdown(&responders);
    write_json(&a.out.join("simulation.json"), &SimulationOutput { provenance: prov, results: &results, responders: &responders })?;
    write(&a.out.join("simulation.md"), &md)?;
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> CliResult {
    let mut md = String::from("# DFL analysis report\n\n");
    let mut found = false;
    let load = |name: &str| -> CliResult<Option<serde_json::Value>> {
        let p = a.out.join(name);
        if !p.exists() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_str(&read(&p)?)?))
    };
    if let Some(v) = load("profile.json")? {
        let rep: ProfileReport = serde_json::from_value(v["profile"].clone())?;
        md += &markdown_header(&v["provenance"]);
        md += &report::profile_markdown(&rep);
        md.push('\n');
        found = true;
    }
    if let Some(v) = load("training.json")? {
        let t: TrainingOutcome = serde_json::from_value(v["training"].clone())?;
        md += &markdown_header(&v["provenance"]);
        md += &report::evaluation_markdown(&t);
        if let Some(l) = &t.lever_table {
            md.push('\n');
            md += &report::lever_markdown(l);
        }
        md.push('\n');
        found = true;
    }
    if let Some(v) = load("simulation.json")? {
        let results: Vec<SimulationResult> = serde_json::from_value(v["results"].clone())?;
        let resp: ResponderPartition = serde_json::from_value(v["responders"].clone())?;
        md += &markdown_header(&v["provenance"]);
        md += &report::scenario_markdown(&results);
        md.push('\n');
        md += &report::responder_markdown(&resp);
        found = true;
    }
    if !found {
        return Err(fail("invalid_input", format!("no profile, training or simulation outputs in {}", a.out.display())));
    }
    write(&a.out.join("report.md"), &md)?;
    println!("wrote {}", a.out.join("report.md").display());
    Ok(())
}

fn cmd_serve(a: &ServeArgs) -> CliResult {
    let rt = tokio::runtime::Runtime::new().map_err(|e| fail("io", e.to_string()))?;
    rt.block_on(serve(ServiceConfig { bind: a.bind, data_dir: a.data_dir.clone(), default_seed: a.seed }))
        .map_err(|e| fail("service", e.to_string()))
}

fn run(cli: Cli) -> CliResult {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Profile(a) => cmd_profile(a),
        Command::Train(a) => cmd_train(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn emit(f: &Failure) {
    eprintln!("{}", json!({ "error": { "kind": f.kind, "message": f.message.replace('\n', " ") } }));
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            emit(&fail("usage", first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            emit(&f);
            ExitCode::FAILURE
        }
    }
}
