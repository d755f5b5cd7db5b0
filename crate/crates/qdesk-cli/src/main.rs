//! `qdesk`: runs experiment configs and the bundled reproduction presets, writing CSV tables
//! and a manifest per run.

mod config;
mod error;
mod kinds;
mod output;

use clap::{Parser, Subcommand};
use config::{ExperimentConfig, Format};
use error::{config_err, CliError, CliResult};
use output::Table;
use serde_json::{json, Map, Value};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Run-wide context handed to every experiment kind.
pub struct Ctx {
    pub seed: u64,
}

const DEFAULT_SEED: u64 = 0;

/// Bundled presets: name and TOML source.
const PRESETS: &[(&str, &str)] = &[
    ("table1", include_str!("../presets/table1.toml")),
    ("closure-map-r1", include_str!("../presets/closure-map-r1.toml")),
    ("fig-qrs-five-photon", include_str!("../presets/fig-qrs-five-photon.toml")),
    ("fock-pump-17", include_str!("../presets/fock-pump-17.toml")),
    ("fig-bs-estimations", include_str!("../presets/fig-bs-estimations.toml")),
    ("fig-probs", include_str!("../presets/fig-probs.toml")),
    ("fig-whole", include_str!("../presets/fig-whole.toml")),
];

#[derive(Parser)]
#[command(name = "qdesk", version, about = "Quantum dynamics experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunOpts {
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Allow configs marked long-running.
    #[arg(long)]
    long_running: bool,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config (TOML, or JSON by extension).
    Run {
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run a bundled preset and check its targets.
    Reproduce {
        preset: String,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// List the bundled presets.
    ListPresets,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, opts } => ExperimentConfig::load(&config).and_then(|cfg| {
            let stem = config.file_stem().and_then(|s| s.to_str()).unwrap_or("run").to_string();
            execute(cfg, &stem, &opts)
        }),
        Command::Reproduce { preset, opts } => preset_config(&preset).and_then(|cfg| execute(cfg, &preset, &opts)),
        Command::ListPresets => list_presets(),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn preset_config(name: &str) -> CliResult<ExperimentConfig> {
    let (_, src) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| config_err(format!("unknown preset `{name}`; see `qdesk list-presets`")))?;
    ExperimentConfig::parse(src, Format::Toml)
}

fn list_presets() -> CliResult<()> {
    for (name, _) in PRESETS {
        let cfg = preset_config(name)?;
        let flag = if cfg.long_running { " [long-running]" } else { "" };
        println!("{name:<22} {:<20} {}{flag}", cfg.kind.name(), cfg.description.as_deref().unwrap_or(""));
    }
    Ok(())
}

fn execute(mut cfg: ExperimentConfig, default_name: &str, opts: &RunOpts) -> CliResult<()> {
    let name = cfg.name.clone().unwrap_or_else(|| default_name.to_string());
    if cfg.long_running && !opts.long_running {
        return Err(config_err(format!("`{name}` is long-running; pass --long-running to start it")));
    }
    let seed = opts.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    cfg.seed = Some(seed);
    if let Some(n) = opts.workers {
        if n == 0 {
            return Err(config_err("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config_err(format!("cannot size the worker pool: {e}")))?;
    }
    let dir = opts.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| Path::new("qdesk-out").join(&name));

    let start = Instant::now();
    let ctx = Ctx { seed };
    let points = cfg.points();
    let swept = !cfg.sweep.is_empty();
    let mut tables: Vec<Table> = Vec::new();
    let mut summaries = Vec::new();
    for (coords, params) in &points {
        let outcome = kinds::run_kind(cfg.kind, params, &ctx)?;
        for t in outcome.tables {
            merge_table(&mut tables, t, coords);
        }
        let mut s = Map::new();
        for (axis, v) in coords {
            s.insert(axis.clone(), v.clone());
        }
        s.extend(outcome.summary);
        summaries.push(Value::Object(s));
    }
    let summary = if swept { json!({ "points": summaries }) } else { summaries.pop().unwrap_or(Value::Null) };

    std::fs::create_dir_all(&dir)?;
    let outputs = tables.iter().map(|t| t.write(&dir)).collect::<CliResult<Vec<_>>>()?;
    let checks: Vec<Check> = cfg.targets.iter().map(|t| Check::evaluate(t, &summary)).collect();
    let manifest = json!({
        "toolkit": "qdesk",
        "version": env!("CARGO_PKG_VERSION"),
        "kind": cfg.kind.name(),
        "name": name,
        "config_sha256": cfg.hash(),
        "seed": seed,
        "workers": opts.workers.unwrap_or_else(rayon::current_num_threads),
        "wall_time_s": start.elapsed().as_secs_f64(),
        "outputs": outputs,
        "summary": summary,
        "checks": checks.iter().map(Check::to_json).collect::<Vec<_>>(),
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(dir.join("manifest.json"), text + "\n")?;

    println!("{name}: wrote {} table(s) to {}", outputs.len(), dir.display());
    for c in &checks {
        println!("{} {}", if c.pass { "PASS" } else { "FAIL" }, c.describe());
    }
    let missed = checks.iter().filter(|c| !c.pass).count();
    if missed > 0 {
        return Err(CliError::TargetMissed(format!("{missed} of {} target(s) missed", checks.len())));
    }
    Ok(())
}

/// Appends a table, prefixing rows with the sweep coordinates of the point they came from.
fn merge_table(tables: &mut Vec<Table>, t: Table, coords: &[(String, Value)]) {
    let prefix: Vec<String> = coords.iter().map(|(_, v)| cell(v)).collect();
    let rows = t.rows.into_iter().map(|r| prefix.iter().cloned().chain(r).collect());
    match tables.iter_mut().find(|x| x.name == t.name) {
        Some(existing) => existing.rows.extend(rows),
        None => {
            let header = coords.iter().map(|(a, _)| a.clone()).chain(t.header).collect();
            tables.push(Table { name: t.name, header, rows: rows.collect() });
        }
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

struct Check {
    pointer: String,
    min: Option<f64>,
    max: Option<f64>,
    value: Option<f64>,
    pass: bool,
}

impl Check {
    fn evaluate(t: &config::Target, summary: &Value) -> Self {
        let value = summary.pointer(&t.pointer).and_then(Value::as_f64);
        let pass = value.is_some_and(|v| t.min.map_or(true, |m| v >= m) && t.max.map_or(true, |m| v <= m));
        Check { pointer: t.pointer.clone(), min: t.min, max: t.max, value, pass }
    }

    fn describe(&self) -> String {
        let bound = |b: Option<f64>| b.map_or("-".to_string(), |x| x.to_string());
        let value = self.value.map_or("missing".to_string(), |v| v.to_string());
        format!("{} = {value} in [{}, {}]", self.pointer, bound(self.min), bound(self.max))
    }

    fn to_json(&self) -> Value {
        json!({ "pointer": self.pointer, "min": self.min, "max": self.max, "value": self.value, "pass": self.pass })
    }
}
