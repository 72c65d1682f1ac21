use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use dialeval_core::autometrics::{
    metric_human_correlation, parse_candidates, parse_test_set, score_system, FedConfig,
    MetricName, MetricSettings, NgramScorer,
};
use dialeval_core::eventlog;
use dialeval_core::qc::DEFAULT_ALPHA;
use dialeval_core::report::{analyze_run, render_tables, AnalysisReport};
use dialeval_core::scoring::{self, Replication};
use dialeval_core::simulator::{simulate_log, LatentConfig, SimError};
use dialeval_core::SystemId;
use dialeval_harness::{HarnessConfig, Service, StartupError};
use serde::Serialize;

/// Crowd-sourced human evaluation of open-domain dialogue systems.
#[derive(Debug, Parser)]
#[command(name = "dialeval", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the assessment service and, when configured, the static assessor client.
    Serve {
        /// Service config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's port.
        #[arg(long)]
        port: Option<u16>,
        /// Address to bind.
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Export a log, filter workers, score systems and write the report.
    Analyze {
        /// Event log (JSON lines).
        #[arg(long)]
        log: PathBuf,
        /// Significance level of the worker consistency test.
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        /// Report destination.
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
        /// Also print aligned text tables to stdout.
        #[arg(long)]
        tables: bool,
    },
    /// Correlate two reports over the same systems.
    Compare {
        #[arg(long)]
        report_a: PathBuf,
        #[arg(long)]
        report_b: PathBuf,
        /// Level at which pairwise conclusions are compared.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Also write the summary here; it is always printed to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic event log from latent system qualities.
    Simulate {
        /// Simulation config (JSON); built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Log destination.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the effective config, every default included.
        #[arg(long)]
        config_out: Option<PathBuf>,
    },
    /// Score system responses with automatic metrics.
    Metrics {
        /// Test set: JSON lines of {"context": [...], "reference": "..."}.
        #[arg(long)]
        test_set: PathBuf,
        /// Candidate responses as SYSTEM=PATH (or PATH, named by its file stem): JSON lines
        /// of {"context_id": n, "response": "..."}.
        #[arg(long, required = true)]
        candidates: Vec<String>,
        /// Metric to compute; repeatable. All metrics when omitted.
        #[arg(long)]
        metric: Vec<String>,
        /// Analysis report whose standardized overall scores are correlated with each metric.
        #[arg(long)]
        human_report: Option<PathBuf>,
        /// Add-one smoothing of higher-order BLEU precisions.
        #[arg(long)]
        smoothed_bleu: bool,
        /// FED utterance config (JSON); the built-in table when omitted.
        #[arg(long)]
        fed_config: Option<PathBuf>,
        /// Also write the result here; it is always printed to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Exit 1 for operational failures, 2 for bad input from the caller.
enum Failure {
    Operational(anyhow::Error),
    Usage(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Operational(e)
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

type Outcome = Result<(), Failure>;

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn print_json(value: &impl Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn check_alpha(alpha: f64) -> Outcome {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(usage(anyhow!("--alpha must lie in (0, 1), got {alpha}")))
    }
}

fn serve(config: &Path, port: Option<u16>, host: &str, seed: Option<u64>) -> Outcome {
    let mut cfg = HarnessConfig::load(config).map_err(usage)?;
    if let Some(p) = port {
        cfg.port = p;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let addr: SocketAddr = format!("{host}:{}", cfg.port)
        .parse()
        .map_err(|e| usage(anyhow!("invalid address {host}:{}: {e}", cfg.port)))?;
    let service = match Service::new(cfg) {
        Ok(s) => Arc::new(s),
        Err(e @ StartupError::Config(_)) => return Err(usage(e)),
        Err(e) => return Err(Failure::Operational(e.into())),
    };
    let runtime = tokio::runtime::Runtime::new().context("cannot start runtime")?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("cannot bind {addr}"))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        dialeval_harness::serve(service, listener).await?;
        Ok::<_, anyhow::Error>(())
    })?;
    Ok(())
}

fn analyze(log: &Path, alpha: f64, out: &Path, tables: bool) -> Outcome {
    check_alpha(alpha)?;
    let run = eventlog::export_run(log).with_context(|| format!("cannot export {}", log.display()))?;
    let report = analyze_run(&run, alpha);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    write_json(out, &report)?;
    if tables {
        print!("{}", render_tables(&report));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct Comparison {
    systems: Vec<SystemId>,
    alpha: f64,
    replication: Replication,
    conclusion_agreement: Option<f64>,
}

fn read_report(path: &Path) -> anyhow::Result<AnalysisReport> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not an analysis report", path.display()))
}

fn compare(a: &Path, b: &Path, alpha: f64, out: Option<&Path>) -> Outcome {
    check_alpha(alpha)?;
    let (ra, rb) = (read_report(a)?, read_report(b)?);
    let replication = scoring::replication_correlation(&ra.scoreboard.scorecards, &rb.scoreboard.scorecards)
        .context("reports cannot be compared")?;
    let conclusion_agreement = match (&ra.significance, &rb.significance) {
        (Some(ma), Some(mb)) => Some(scoring::conclusion_agreement(ma, mb, alpha).context("reports cannot be compared")?),
        _ => None,
    };
    let mut systems: Vec<SystemId> = ra.scoreboard.order();
    systems.sort();
    let summary = Comparison {
        systems,
        alpha,
        replication,
        conclusion_agreement,
    };
    print_json(&summary)?;
    if let Some(path) = out {
        write_json(path, &summary)?;
    }
    Ok(())
}

fn simulate(config: Option<&Path>, out: &Path, seed: Option<u64>, config_out: Option<&Path>) -> Outcome {
    let mut cfg = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))
                .map_err(Failure::Usage)?;
            serde_json::from_str::<LatentConfig>(&text)
                .with_context(|| format!("cannot parse {}", path.display()))
                .map_err(Failure::Usage)?
        }
        None => LatentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let records = match simulate_log(&cfg) {
        Ok(r) => r,
        Err(e @ SimError::Config(_)) => return Err(usage(e)),
        Err(e) => return Err(Failure::Operational(e.into())),
    };
    if let Some(path) = config_out {
        write_json(path, &cfg)?;
    }
    eventlog::write_log(out, &records).context("cannot write log")?;
    Ok(())
}

fn candidate_source(spec: &str) -> (SystemId, PathBuf) {
    match spec.split_once('=') {
        Some((id, path)) if !id.is_empty() => (SystemId::from(id), PathBuf::from(path)),
        _ => {
            let path = PathBuf::from(spec);
            let id = path
                .file_stem()
                .map_or_else(|| spec.to_string(), |s| s.to_string_lossy().into_owned());
            (SystemId::new(id), path)
        }
    }
}

#[derive(Debug, Serialize)]
struct MetricsOutput {
    systems: BTreeMap<SystemId, BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    correlations: Option<BTreeMap<String, Option<f64>>>,
}

#[allow(clippy::too_many_arguments)]
fn metrics(
    test_set: &Path,
    candidates: &[String],
    metric: &[String],
    human_report: Option<&Path>,
    smoothed_bleu: bool,
    fed_config: Option<&Path>,
    out: Option<&Path>,
) -> Outcome {
    let names: Vec<MetricName> = if metric.is_empty() {
        MetricName::ALL.to_vec()
    } else {
        metric
            .iter()
            .map(|m| {
                MetricName::from_name(m).ok_or_else(|| {
                    let valid: Vec<&str> = MetricName::ALL.iter().map(|m| m.name()).collect();
                    usage(anyhow!("unknown metric {m}; valid metrics: {}", valid.join(", ")))
                })
            })
            .collect::<Result<_, _>>()?
    };
    let fed = match fed_config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            let cfg: FedConfig = serde_json::from_str(&text)
                .with_context(|| format!("cannot parse {}", path.display()))
                .map_err(Failure::Usage)?;
            let problems = cfg.problems();
            if !problems.is_empty() {
                return Err(usage(anyhow!("invalid FED config: {}", problems.join("; "))));
            }
            cfg
        }
        None => FedConfig::default(),
    };
    let scorer = NgramScorer::bundled();
    let settings = MetricSettings {
        smoothed_bleu,
        fed: &fed,
        scorer: &scorer,
    };
    let items_text = std::fs::read_to_string(test_set).with_context(|| format!("cannot read {}", test_set.display()))?;
    let items = parse_test_set(&items_text).with_context(|| format!("in {}", test_set.display()))?;

    let mut systems: BTreeMap<SystemId, BTreeMap<String, f64>> = BTreeMap::new();
    for spec in candidates {
        let (id, path) = candidate_source(spec);
        let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
        let cands = parse_candidates(&text).with_context(|| format!("in {}", path.display()))?;
        let entry = systems.entry(id.clone()).or_default();
        if !entry.is_empty() {
            return Err(usage(anyhow!("system {id} given twice")));
        }
        for &m in &names {
            let scores = score_system(&items, &cands, m, &settings).with_context(|| format!("{m} for {id}"))?;
            entry.extend(scores);
        }
    }

    let correlations = match human_report {
        None => None,
        Some(path) => {
            let report = read_report(path)?;
            let human: BTreeMap<SystemId, f64> = report
                .scoreboard
                .scorecards
                .iter()
                .map(|s| (s.system_id.clone(), s.overall_z))
                .collect();
            let keys: Vec<String> = systems.values().next().map(|m| m.keys().cloned().collect()).unwrap_or_default();
            let mut out = BTreeMap::new();
            for key in keys {
                let per: BTreeMap<SystemId, f64> = systems.iter().map(|(id, m)| (id.clone(), m[&key])).collect();
                let r = match metric_human_correlation(&per, &human) {
                    Ok(r) => Some(r),
                    Err(dialeval_core::autometrics::MetricError::Stat(_)) => None,
                    Err(e) => return Err(Failure::Operational(anyhow!(e).context("cannot correlate with human scores"))),
                };
                out.insert(key, r);
            }
            Some(out)
        }
    };
    let result = MetricsOutput { systems, correlations };
    print_json(&result)?;
    if let Some(path) = out {
        write_json(path, &result)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Serve { config, port, host, seed } => serve(&config, port, &host, seed),
        Command::Analyze { log, alpha, out, tables } => analyze(&log, alpha, &out, tables),
        Command::Compare {
            report_a,
            report_b,
            alpha,
            out,
        } => compare(&report_a, &report_b, alpha, out.as_deref()),
        Command::Simulate {
            config,
            out,
            seed,
            config_out,
        } => simulate(config.as_deref(), &out, seed, config_out.as_deref()),
        Command::Metrics {
            test_set,
            candidates,
            metric,
            human_report,
            smoothed_bleu,
            fed_config,
            out,
        } => metrics(
            &test_set,
            &candidates,
            &metric,
            human_report.as_deref(),
            smoothed_bleu,
            fed_config.as_deref(),
            out.as_deref(),
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Operational(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
