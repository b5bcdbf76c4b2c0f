use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use twostage_risk::error::{Error, Result};
use twostage_risk::harness::config::Config;
use twostage_risk::harness::experiment::{calibrate, run_experiment};
use twostage_risk::harness::io::{load_dataset, write_dataset, Format};
use twostage_risk::harness::synth::{exceedance_report, synth_generate, AnalyticRisk, Composition};
use twostage_risk::harness::validate::mc_validate;
use twostage_risk::retrieval::{build_loss_tables, QueryRecord};
use twostage_risk::selection::{evaluate, select_pair, Selection};

#[derive(Parser)]
#[command(name = "twostage", version, about = "Two-stage risk control for retrieval and ranking")]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the selected command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct DataArgs {
    /// Dataset file (TSV or JSONL).
    #[arg(long)]
    data: PathBuf,
    /// `tsv` or `jsonl`; inferred from the extension when absent.
    #[arg(long)]
    format: Option<Format>,
}

impl DataArgs {
    fn load(&self) -> Result<Vec<QueryRecord>> {
        let format = self.format.unwrap_or_else(|| Format::from_path(&self.data));
        let (queries, summary) = load_dataset(&self.data, format)?;
        eprintln!("loaded {} rows in {} queries from {}", summary.rows, summary.queries, self.data.display());
        Ok(queries)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate on a dataset and report the chosen pair per calibrator.
    Calibrate {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Evaluate a fixed (λ, γ) pair on a dataset.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        gamma: f64,
    },
    /// Run the replicated experiment and write a CSV table.
    Run {
        /// Dataset file; the synthetic model is sampled when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        format: Option<Format>,
    },
    /// Write a synthetic dataset.
    Simulate {
        #[arg(long)]
        n_queries: Option<usize>,
        /// Output format; inferred from `--out` when absent.
        #[arg(long)]
        format: Option<Format>,
        /// Also write per-grade exceedance probabilities as JSON.
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
    /// Monte Carlo check of the calibrators' guarantees.
    Validate {
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Dump loss tables in long format.
    Losses {
        #[command(flatten)]
        data: DataArgs,
    },
}

fn output(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut w = output(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

#[derive(Serialize)]
struct CalibrationSummary {
    method: String,
    feasible_size: usize,
    lambda_min: f64,
    gamma_min: f64,
    selection: Selection,
}

/// Returns the process exit code.
fn execute(cli: Cli) -> Result<u8> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let out = cli.out.as_deref();
    match cli.command {
        Command::Calibrate { data } => {
            if let Some(s) = cli.seed {
                cfg.experiment.seed = s;
            }
            let e = &cfg.experiment;
            e.validate()?;
            let queries = data.load()?;
            let (gl, gg) = e.grids()?;
            let r0 = e.r0()?;
            r0.check_against(&queries)?;
            let (t1, t2) = build_loss_tables(&queries, &gl, &gg, r0)?;
            let mut summaries = Vec::new();
            for c in &e.calibrators {
                let set = calibrate(c, &t1, &t2, e.levels()?, e.seed, None)?;
                let selection = select_pair(&set, &queries, &gl, &gg, &e.objective)?;
                let (amin, bmin) = set.iter().fold((usize::MAX, usize::MAX), |(a0, b0), (a, b)| (a0.min(a), b0.min(b)));
                summaries.push(CalibrationSummary {
                    method: c.label(),
                    feasible_size: set.len(),
                    lambda_min: gl.value(amin),
                    gamma_min: gg.value(bmin),
                    selection,
                });
            }
            write_json(out, &summaries)?;
        }
        Command::Evaluate { data, lambda, gamma } => {
            for (name, v) in [("lambda", lambda), ("gamma", gamma)] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Config(format!("{name} = {v} not in [0, 1]")));
                }
            }
            let queries = data.load()?;
            write_json(out, &evaluate(&queries, lambda, gamma, cfg.experiment.r0()?))?;
        }
        Command::Run { data, format } => {
            if let Some(s) = cli.seed {
                cfg.experiment.seed = s;
            }
            let (queries, model) = match data {
                Some(path) => (DataArgs { data: path, format }.load()?, None),
                None => {
                    let model = match cfg.synth.composition {
                        Composition::Template { .. } => Some(AnalyticRisk::new(&cfg.synth, cfg.experiment.r0()?)?),
                        Composition::Random { .. } => None,
                    };
                    (synth_generate(&cfg.synth)?, model)
                }
            };
            let result = run_experiment(&queries, &cfg.experiment, model.as_ref())?;
            output(out)?.write_all(result.to_csv().as_bytes())?;
        }
        Command::Simulate { n_queries, format, model_out } => {
            if let Some(s) = cli.seed {
                cfg.synth.seed = s;
            }
            if let Some(n) = n_queries {
                cfg.synth.n_queries = n;
            }
            let queries = synth_generate(&cfg.synth)?;
            let format = format.unwrap_or_else(|| out.map_or(Format::Tsv, Format::from_path));
            let mut w = output(out)?;
            write_dataset(&mut w, &queries, format)?;
            w.flush()?;
            if let Some(p) = model_out {
                let thresholds: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
                write_json(Some(&p), &exceedance_report(&cfg.synth, &thresholds))?;
            }
        }
        Command::Validate { trials, n } => {
            if let Some(s) = cli.seed {
                cfg.validate.seed = s;
            }
            if let Some(t) = trials {
                cfg.validate.trials = t;
            }
            if let Some(n) = n {
                cfg.validate.n = n;
            }
            let report = mc_validate(&cfg.validate)?;
            output(out)?.write_all(report.to_text().as_bytes())?;
            if !report.pass() {
                return Ok(1);
            }
        }
        Command::Losses { data } => {
            let e = &cfg.experiment;
            let queries = data.load()?;
            let (gl, gg) = e.grids()?;
            let (t1, t2) = build_loss_tables(&queries, &gl, &gg, e.r0()?)?;
            let mut w = output(out)?;
            writeln!(w, "query_id\tlambda\tgamma\tretrieval_loss\tranking_loss")?;
            for (i, q) in queries.iter().enumerate() {
                for a in 0..gl.len() {
                    for b in 0..gg.len() {
                        writeln!(
                            w,
                            "{}\t{}\t{}\t{}\t{}",
                            q.query_id,
                            gl.value(a),
                            gg.value(b),
                            t1.get(i, a),
                            t2.get(i, a, b)
                        )?;
                    }
                }
            }
            w.flush()?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
