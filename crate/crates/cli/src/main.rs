//! `rcl`: diagnose microservice failures from offline telemetry, benchmark
//! the engine against labeled datasets, and generate synthetic fixtures.
//!
//! Exit codes: 0 success, 2 no failure detected (diagnose --auto-detect),
//! 1 any error.

use std::collections::HashSet;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rcl_core::config::RunConfig;
use rcl_core::evaluation::{self, diagnose_case, run_benchmark};
use rcl_core::fixture::{generate, ScenarioSpec};
use rcl_core::ingest::load_bundle;
use rcl_core::reasoner::{Backend, HeuristicReasoner, LlmReasoner, Reasoner};
use rcl_core::synthesizer::{DiagnosisReport, FallbackFlags};
use rcl_core::trace::{build_trace_graph, detect_failed_requests, normal_entry_latency_mean};

#[derive(Parser)]
#[command(
    name = "rcl",
    version,
    about = "Root cause localization over distributed traces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Diagnose one failed request and write report.json.
    Diagnose(DiagnoseArgs),
    /// Run the benchmark harness over a dataset's labeled failures.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic fault-injected dataset from a scenario file.
    GenFixtures(GenArgs),
}

/// Flags shared by diagnose and evaluate. Every flag has a config-file
/// equivalent; the CLI overrides the file, the file overrides defaults.
#[derive(Args, Clone)]
struct EngineArgs {
    /// Dataset directory (traces.csv, metrics.csv, logs.jsonl, ...).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reasoner backend.
    #[arg(long, value_parser = parse_backend)]
    reasoner: Option<Backend>,
    /// Anomaly threshold in sigmas.
    #[arg(long)]
    n_sigma: Option<f64>,
    /// Tool retrieval half-window in milliseconds.
    #[arg(long)]
    delta_ms: Option<i64>,
    /// Agents pool capacity.
    #[arg(long)]
    pool: Option<usize>,
    /// Candidates kept in the ranked list.
    #[arg(long)]
    top_n: Option<usize>,
    /// Output file path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Machine-readable JSON on stdout.
    #[arg(long)]
    json: bool,
    /// Seed forwarded to seeded subsystems.
    #[arg(long)]
    seed: Option<u64>,
}

impl EngineArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_toml_file(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.data_dir {
            cfg.data_dir = Some(v.clone());
        }
        if let Some(v) = self.reasoner {
            cfg.reasoner = v;
        }
        if let Some(v) = self.n_sigma {
            cfg.n_sigma = v;
        }
        if let Some(v) = self.delta_ms {
            cfg.delta_ms = v;
        }
        if let Some(v) = self.pool {
            cfg.pool = v;
        }
        if let Some(v) = self.top_n {
            cfg.top_n = v;
        }
        if let Some(v) = &self.out {
            cfg.out = Some(v.clone());
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        Ok(cfg)
    }
}

fn parse_backend(s: &str) -> Result<Backend, String> {
    s.parse()
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    engine: EngineArgs,
    /// Trace to diagnose.
    #[arg(long, conflicts_with = "auto_detect")]
    trace_id: Option<String>,
    /// Detect failed requests (entry latency > 100x normal) and diagnose
    /// the worst one.
    #[arg(long)]
    auto_detect: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    engine: EngineArgs,
    /// Also write per-case outcomes as CSV next to the report.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Scenario spec file (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Generation seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Machine-readable JSON on stdout.
    #[arg(long)]
    json: bool,
}

fn build_reasoner(cfg: &RunConfig) -> Result<Box<dyn Reasoner>> {
    let rc = cfg.reasoner_config();
    match rc.backend {
        Backend::Heuristic => Ok(Box::new(HeuristicReasoner::new(rc.heuristic))),
        Backend::Llm => Ok(Box::new(LlmReasoner::new(rc.llm)?)),
    }
}

fn cmd_diagnose(args: &DiagnoseArgs) -> Result<u8> {
    let cfg = args.engine.resolve()?;
    let data_dir = cfg
        .data_dir
        .clone()
        .ok_or_else(|| anyhow!("--data-dir (or data_dir in the config file) is required"))?;
    let load_start = Instant::now();
    let bundle = load_bundle(&data_dir)
        .with_context(|| format!("loading dataset {}", data_dir.display()))?;
    let load_secs = load_start.elapsed().as_secs_f64();

    let trace_id = match (&args.trace_id, args.auto_detect) {
        (Some(id), _) => id.clone(),
        (None, true) => {
            let failure_ids = evaluation::failure_trace_ids(&bundle);
            let mu = cfg
                .mu_lat_ms
                .or_else(|| normal_entry_latency_mean(&bundle.spans, &failure_ids))
                .ok_or_else(|| {
                    anyhow!("cannot establish a normal-latency baseline; set mu_lat_ms")
                })?;
            let trace_ids: HashSet<&str> =
                bundle.spans.iter().map(|s| s.trace_id.as_str()).collect();
            let mut graphs = Vec::new();
            for id in trace_ids {
                if let Ok(g) = build_trace_graph(&bundle.spans, id) {
                    graphs.push(g);
                }
            }
            let mut episodes = detect_failed_requests(&graphs, mu)?;
            episodes.sort_by(|a, b| {
                b.ratio
                    .partial_cmp(&a.ratio)
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            match episodes.first() {
                Some(worst) => {
                    if episodes.len() > 1 {
                        eprintln!(
                            "{} failure episodes detected; diagnosing the worst (ratio {:.1})",
                            episodes.len(),
                            worst.ratio
                        );
                    }
                    worst.trace_id.clone()
                }
                None => {
                    eprintln!("no failure episodes detected (baseline {mu:.1} ms)");
                    return Ok(2);
                }
            }
        }
        (None, false) => bail!("pass --trace-id or --auto-detect"),
    };

    let reasoner = build_reasoner(&cfg)?;
    let (outcome, diagnosis) = diagnose_case(&bundle, &trace_id, &cfg, reasoner.as_ref())?;
    let failure_id = bundle.ground_truth.as_ref().and_then(|cases| {
        cases
            .iter()
            .find(|c| c.entry_trace_id == trace_id)
            .map(|c| c.failure_id.clone())
    });
    let agent_failures = outcome
        .tasks
        .values()
        .any(|t| t.state == rcl_core::orchestrator::TaskState::Failed);
    let report = DiagnosisReport {
        failure_id,
        trace_id: trace_id.clone(),
        root_report: outcome.root_report.evidence.clone(),
        ranked: diagnosis.candidates.clone(),
        evidence_graph: serde_json::from_str(&outcome.evidence_graph.to_canonical_json())?,
        config_echo: cfg.echo(),
        fallback_flags: FallbackFlags {
            llm_synthesizer_fallback: false,
            agent_failures,
        },
    };

    let out_path = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("report.json"));
    std::fs::write(&out_path, report.to_json_pretty())
        .with_context(|| format!("writing {}", out_path.display()))?;

    if args.engine.json {
        println!("{}", report.to_json_pretty());
    } else {
        println!("trace {trace_id}: loaded in {load_secs:.2}s");
        println!(
            "root report: {} (confidence {:.2})",
            report.root_report.local_root_cause, report.root_report.confidence
        );
        for (i, c) in report.ranked.iter().enumerate() {
            println!(
                "  {:>2}. [{:.3}] {} {}",
                i + 1,
                c.score,
                c.component.level,
                c.component.name
            );
        }
        println!("report written to {}", out_path.display());
    }
    Ok(0)
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<u8> {
    let cfg = args.engine.resolve()?;
    let data_dir = cfg
        .data_dir
        .clone()
        .ok_or_else(|| anyhow!("--data-dir (or data_dir in the config file) is required"))?;
    let load_start = Instant::now();
    let bundle = load_bundle(&data_dir)
        .with_context(|| format!("loading dataset {}", data_dir.display()))?;
    let load_secs = load_start.elapsed().as_secs_f64();

    let reasoner = build_reasoner(&cfg)?;
    let report = run_benchmark(&bundle, &cfg, reasoner.as_ref())?;

    let out_path = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("benchmark_report.json"));
    let mut value = serde_json::to_value(&report)?;
    value["load_secs"] = serde_json::json!(load_secs);
    value["config_echo"] = cfg.echo();
    std::fs::write(&out_path, serde_json::to_string_pretty(&value)?)
        .with_context(|| format!("writing {}", out_path.display()))?;
    if let Some(csv_path) = &args.csv {
        evaluation::write_outcomes_csv(csv_path, &report.outcomes)?;
    }

    if args.engine.json {
        println!("{}", serde_json::to_string_pretty(&value)?);
    } else {
        println!(
            "{} cases | R@1 {:.3} R@3 {:.3} R@5 {:.3} R@10 {:.3} | MRR {:.3} | {:.2}s/query (load {:.2}s)",
            report.cases,
            report.recall_at_1,
            report.recall_at_3,
            report.recall_at_5,
            report.recall_at_10,
            report.mrr,
            report.mean_secs_per_query,
            load_secs,
        );
        println!("report written to {}", out_path.display());
    }
    Ok(0)
}

fn cmd_gen_fixtures(args: &GenArgs) -> Result<u8> {
    let spec = ScenarioSpec::from_json_file(&args.spec)
        .with_context(|| format!("loading scenario {}", args.spec.display()))?;
    let bundle = generate(&spec, args.seed, &args.out)?;
    if args.json {
        println!(
            "{}",
            serde_json::json!({
                "out_dir": args.out,
                "spans": bundle.spans.len(),
                "metric_points": bundle.metrics.point_count(),
                "log_entries": bundle.logs.entry_count(),
                "cases": bundle.ground_truth.as_ref().map(Vec::len).unwrap_or(0),
            })
        );
    } else {
        println!(
            "wrote {} spans, {} metric points, {} log entries to {}",
            bundle.spans.len(),
            bundle.metrics.point_count(),
            bundle.logs.entry_count(),
            args.out.display()
        );
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Diagnose(args) => cmd_diagnose(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::GenFixtures(args) => cmd_gen_fixtures(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
