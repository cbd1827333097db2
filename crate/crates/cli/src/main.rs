//! `ctl`: evaluate scenario files against compute-threshold rule sets.
//!
//! Exit codes: 0 ok, 1 usage, 2 parse or validation failure, 3 internal error.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ctl_core::rulesets::builtin_rulesets;
use ctl_core::rulesets::RuleError;
use ctl_core::scenario::{
    find_crossing, parse_scenario, render_report, sweep, ReportFormat, Scenario, ScenarioError,
    DEFAULT_TOLERANCE_OOMS,
};

#[derive(Parser)]
#[command(name = "ctl", version, about = "Training-compute threshold calculator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the scenario's subject under the selected rule sets.
    Evaluate {
        file: PathBuf,
        /// Comma-separated rule set ids, or `all`.
        #[arg(long, value_delimiter = ',')]
        rulesets: Option<Vec<String>>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Evaluate every point of the scenario's sweep.
    Sweep {
        file: PathBuf,
        #[arg(long, value_delimiter = ',')]
        rulesets: Option<Vec<String>>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Bisect the sweep range for the value where the subject becomes Covered.
    Crossing {
        file: PathBuf,
        #[arg(long)]
        ruleset: String,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE_OOMS)]
        tol_ooms: f64,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// List built-in rule sets with thresholds and citations.
    Rulesets {
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Start the HTTP API (bind address from CTL_BIND, default 127.0.0.1).
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

enum Failure {
    Input(String),
    Internal(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Rule(RuleError::RecursionDepthExceeded) => {
                Failure::Internal(e.to_string())
            }
            other => Failure::Input(format!("{}: {other}", other.code())),
        }
    }
}

fn load(file: &PathBuf, rulesets: Option<&[String]>) -> Result<Scenario, Failure> {
    let text = std::fs::read_to_string(file)
        .map_err(|e| Failure::Input(format!("cannot read {}: {e}", file.display())))?;
    let mut scenario = parse_scenario(&text)?;
    if let Some(ids) = rulesets {
        scenario.select(ids)?;
    }
    Ok(scenario)
}

fn json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

fn rulesets_text() -> String {
    let mut out = String::new();
    for rs in builtin_rulesets() {
        let _ = writeln!(out, "{} [{}]", rs.id, rs.jurisdiction);
        let _ = writeln!(out, "    {}", rs.description);
        let _ = write!(out, "    threshold: {}", rs.threshold.canonical_string());
        if let Some(cost) = rs.cost_threshold {
            let _ = write!(out, " and cost > {cost}");
        }
        let _ = writeln!(out);
        if let ctl_core::rulesets::RuleEngine::CoveredModel {
            finetune_threshold,
            finetune_cost,
        } = &rs.engine
        {
            let _ = writeln!(
                out,
                "    fine-tune limb: >= {} and cost > {finetune_cost}",
                finetune_threshold.canonical_string()
            );
        }
        if let Some(t) = rs.reuse_threshold() {
            let _ = writeln!(out, "    reuse threshold: {t}");
        }
        if let Some(t) = rs.expansion_threshold() {
            let _ = writeln!(out, "    expansion threshold: {t}");
        }
        if let Some(n) = rs.notification_rule {
            let _ = writeln!(out, "    notification window: {} days", n.window_days);
        }
        for c in &rs.citations {
            let _ = writeln!(out, "    citation: {c}");
        }
    }
    out
}

fn run(command: Command) -> Result<String, Failure> {
    match command {
        Command::Evaluate {
            file,
            rulesets,
            format,
        } => {
            let scenario = load(&file, rulesets.as_deref())?;
            let report = scenario.evaluate()?;
            Ok(render_report(
                &report,
                match format {
                    Format::Text => ReportFormat::Text,
                    Format::Json => ReportFormat::Json,
                },
            ))
        }
        Command::Sweep {
            file,
            rulesets,
            format,
        } => {
            let scenario = load(&file, rulesets.as_deref())?;
            let rows = sweep(&scenario, &scenario.selected_rulesets())?;
            Ok(match format {
                Format::Json => json(&rows),
                Format::Text => {
                    let mut out = format!(
                        "{:<9}  {:<24}  {:<10}  EFFECTIVE\n",
                        "VALUE", "RULESET", "STATUS"
                    );
                    for r in rows {
                        let _ = writeln!(
                            out,
                            "{:<9}  {:<24}  {:<10}  {}",
                            r.value.to_string(),
                            r.ruleset,
                            r.status.to_string(),
                            r.effective
                        );
                    }
                    out
                }
            })
        }
        Command::Crossing {
            file,
            ruleset,
            tol_ooms,
            format,
        } => {
            let scenario = load(&file, None)?;
            let rs = scenario
                .selected_rulesets()
                .into_iter()
                .chain(builtin_rulesets())
                .find(|r| r.id == ruleset)
                .ok_or_else(|| {
                    Failure::Input(format!("SchemaError: unknown rule set `{ruleset}`"))
                })?;
            let c = find_crossing(&scenario, &rs, tol_ooms)?;
            Ok(match format {
                Format::Json => json(&c),
                Format::Text => format!(
                    "{}: Covered from {} ({}), not Covered at {} ({}); tolerance {} OOM\n",
                    c.ruleset,
                    c.value,
                    c.value.canonical_string(),
                    c.below,
                    c.below.canonical_string(),
                    c.tolerance_ooms
                ),
            })
        }
        Command::Rulesets { format } => Ok(match format {
            Format::Text => rulesets_text(),
            Format::Json => json(&builtin_rulesets()),
        }),
        Command::Serve { port } => {
            let addr = ctl_service::bind_address(port).map_err(Failure::Input)?;
            let rt =
                tokio::runtime::Runtime::new().map_err(|e| Failure::Internal(e.to_string()))?;
            rt.block_on(ctl_service::serve(addr))
                .map_err(|e| Failure::Internal(e.to_string()))?;
            Ok(String::new())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(3)
        }
    }
}
