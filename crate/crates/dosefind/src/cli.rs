//! The `dosefind` command line.

use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dosefind_core::tables::{decision_table, default_margins, diff_grid, GridSide};
use dosefind_core::{BetaPrior, DoseTally, TrialConfig};

use crate::batch::{empirical_table, run_batch, BatchSpec};
use crate::config::{parse_design_list, DesignConfig, DEFAULT_EPS};
use crate::error::{AppError, AppResult};
use crate::io::{empirical_csv, heatmap_csv, load_scenarios, oc_csv, oc_text, scenario_csv, scenario_json, table_csv, write_output};
use crate::service::{serve, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "dosefind", version, about = "Interval-based dose-finding designs: decisions, tables and simulation")]
pub struct Cli {
    /// Seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for simulation (0 uses every core).
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decision for one tally.
    Decide {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long)]
        x: u32,
        #[arg(long)]
        n: u32,
        /// Print interval scores, boundaries and the safety check.
        #[arg(long)]
        explain: bool,
        #[arg(long, conflicts_with = "explain")]
        json: bool,
    },
    /// Decision table as CSV.
    Table {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long, default_value_t = 30)]
        nmax: u32,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Summed decision difference between two designs over a margin grid.
    Diff {
        #[arg(long)]
        first: String,
        /// `crm` compares against CRM decision frequencies from simulation.
        #[arg(long)]
        second: String,
        #[arg(long)]
        pt: f64,
        #[arg(long, default_value_t = 51)]
        n: u32,
        #[arg(long, value_delimiter = ',')]
        eps1: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        eps2: Option<Vec<f64>>,
        /// Scenarios for the CRM frequency table (defaults to the built-in set at `--pt`).
        #[arg(long)]
        scenarios: Option<String>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Also write the CRM frequency table here.
        #[arg(long)]
        table_out: Option<PathBuf>,
    },
    /// Operating characteristics of designs across scenarios.
    Simulate {
        /// Comma-separated design names.
        #[arg(long)]
        designs: String,
        /// `jiwang[:p_T]`, `paoletti:...`, `random:...` or a CSV/JSON file.
        #[arg(long)]
        scenarios: String,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 30)]
        sample_size: u32,
        #[arg(long, default_value_t = 3)]
        cohort: u32,
        /// 1-based.
        #[arg(long, default_value_t = 1)]
        start_dose: usize,
        #[arg(long, num_args = 2, value_names = ["EPS1", "EPS2"], default_values_t = [DEFAULT_EPS, DEFAULT_EPS])]
        eps: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Generate or convert scenario sets.
    Scenarios {
        #[arg(long)]
        source: String,
        #[arg(long, value_enum, default_value_t = ScenarioFormat::Csv)]
        format: ScenarioFormat,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "DOSEFIND_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// JSON-lines file holding session events.
        #[arg(long, env = "DOSEFIND_STORE")]
        store: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioFormat {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[arg(long)]
    pub design: String,
    #[arg(long)]
    pub pt: f64,
    #[arg(long, num_args = 2, value_names = ["EPS1", "EPS2"], default_values_t = [DEFAULT_EPS, DEFAULT_EPS])]
    pub eps: Vec<f64>,
    /// Beta prior as `a,b`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub prior: Option<Vec<f64>>,
    #[arg(long)]
    pub no_safety: bool,
    #[arg(long)]
    pub safety_threshold: Option<f64>,
    #[arg(long)]
    pub safety_min_n: Option<u32>,
    /// CCD half-width override.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub k1: Option<f64>,
    #[arg(long)]
    pub k2: Option<f64>,
}

impl DesignArgs {
    pub fn config(&self) -> DesignConfig {
        DesignConfig {
            prior: self.prior.as_ref().map(|v| BetaPrior { a: v[0], b: v[1] }),
            safety: self.no_safety.then_some(false),
            safety_threshold: self.safety_threshold,
            safety_min_n: self.safety_min_n,
            delta: self.delta,
            k1: self.k1,
            k2: self.k2,
            ..DesignConfig::named(&self.design).with_target(self.pt, self.eps[0], self.eps[1])
        }
    }
}

fn text_err(e: std::io::Error) -> AppError {
    AppError::io("cannot write output", e)
}

fn decide(design: &DesignArgs, x: u32, n: u32, explain: bool, json: bool, out: &mut dyn Write) -> AppResult<()> {
    let design = design.config().instantiate(None, None)?.compile()?;
    let tally = DoseTally::new(x, n).map_err(|e| AppError::BadRequest(e.to_string()))?;
    if !explain && !json {
        return writeln!(out, "{}", design.decide(tally)?).map_err(text_err);
    }
    let d = design.explain(tally)?;
    if json {
        let body = serde_json::to_string_pretty(&d).map_err(|e| AppError::Internal(e.to_string()))?;
        return writeln!(out, "{body}").map_err(text_err);
    }
    let mut text = format!("{}\ndesign {} at x={x}, n={n}\n", d.decision, design.name());
    for s in &d.intervals {
        text += &format!("  {} ({:.4}, {:.4}]  prob {:.6}  score {:.6}\n", s.tag, s.lo, s.hi, s.probability, s.score);
    }
    if let Some((lo, hi)) = d.boundaries {
        text += &format!("  escalate if x/n <= {lo:.4}, de-escalate if x/n >= {hi:.4}\n");
    }
    if let Some(p) = d.overdose_probability {
        text += &format!("  Pr(p > p_T) = {p:.6}, exclusion {}\n", if d.safety_fired { "fires" } else { "does not fire" });
    }
    if d.rule_decision != d.decision {
        text += &format!("  rule alone: {}\n", d.rule_decision);
    }
    write!(out, "{text}").map_err(text_err)
}

/// Runs one command, writing results to `out` unless an output file is given.
pub fn run(cli: Cli, out: &mut dyn Write) -> AppResult<()> {
    let emit = |path: Option<PathBuf>, text: String, out: &mut dyn Write| -> AppResult<()> {
        match path {
            Some(_) => write_output(path.as_deref(), &text),
            None => out.write_all(text.as_bytes()).map_err(text_err),
        }
    };
    match cli.command {
        Command::Decide { design, x, n, explain, json } => decide(&design, x, n, explain, json, out),
        Command::Table { design, nmax, out: path } => {
            let design = design.config().instantiate(None, None)?.compile()?;
            emit(path, table_csv(&decision_table(&design, nmax)?), out)
        }
        Command::Diff { first, second, pt, n, eps1, eps2, scenarios, trials, out: path, table_out } => {
            let eps1 = eps1.unwrap_or_else(default_margins);
            let eps2 = eps2.unwrap_or_else(default_margins);
            let a = DesignConfig::named(&first).instantiate(Some(pt), None)?;
            let grid = if second.eq_ignore_ascii_case("crm") {
                let source = scenarios.unwrap_or_else(|| format!("jiwang:{pt}"));
                let spec = BatchSpec {
                    designs: vec![DesignConfig::named("crm")],
                    scenarios: load_scenarios(&source, cli.seed)?,
                    trial: TrialConfig::new(n, 3)?.with_seed(cli.seed),
                    trials,
                };
                let table = empirical_table(&spec, n, cli.workers)?;
                if let Some(p) = table_out {
                    write_output(Some(&p), &empirical_csv(&table))?;
                }
                diff_grid(&GridSide::Design(&a), &GridSide::Table(&table), pt, &eps1, &eps2, n)?
            } else {
                let b = DesignConfig::named(&second).instantiate(Some(pt), None)?;
                diff_grid(&GridSide::Design(&a), &GridSide::Design(&b), pt, &eps1, &eps2, n)?
            };
            emit(path, heatmap_csv(&grid), out)
        }
        Command::Simulate { designs, scenarios, trials, sample_size, cohort, start_dose, eps, format, out: path } => {
            if start_dose == 0 {
                return Err(AppError::BadRequest("--start-dose is 1-based".into()));
            }
            let spec = BatchSpec {
                designs: parse_design_list(&designs, eps[0], eps[1])?,
                scenarios: load_scenarios(&scenarios, cli.seed)?,
                trial: TrialConfig::new(sample_size, cohort)?.with_seed(cli.seed).with_start_dose(start_dose - 1),
                trials,
            };
            let summaries = run_batch(&spec, cli.workers)?;
            let text = match format {
                Format::Csv => oc_csv(&summaries),
                Format::Text => oc_text(&summaries),
            };
            emit(path, text, out)
        }
        Command::Scenarios { source, format, out: path } => {
            let list = load_scenarios(&source, cli.seed)?;
            let text = match format {
                ScenarioFormat::Csv => scenario_csv(&list),
                ScenarioFormat::Json => scenario_json(&list),
            };
            emit(path, text, out)
        }
        Command::Serve { port, host, store } => {
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|e| AppError::io("cannot start runtime", e))?;
            runtime.block_on(serve(SocketAddr::new(host, port), ServiceConfig { store, workers: cli.workers }))
        }
    }
}
