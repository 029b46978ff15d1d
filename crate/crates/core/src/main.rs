use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use preempt_core::analysis::{self, BoundParams};
use preempt_core::experiment::{run_experiment, ExperimentConfig};
use preempt_core::graph;
use preempt_core::model::PreemptionInstance;
use preempt_core::solvers::{self, GibbsConfig, SolverResult};
use preempt_core::traffic::{self, PijConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Parser, Debug)]
#[command(name = "preempt", version, about = "Multi-hop preemption experiments")]
struct Cli {
    /// Overrides the seed in configs and seeds ad-hoc commands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment described by a JSON config.
    Run { config: PathBuf },
    /// Print the closed-form bounds for one parameter set.
    Bounds {
        #[arg(long, default_value_t = 10)]
        links: usize,
        #[arg(long, default_value_t = 4)]
        d0: usize,
        #[arg(long, default_value_t = 1.0 / 3.0)]
        p_c: f64,
        #[arg(long, default_value_t = 1)]
        nd: usize,
        #[arg(long, default_value_t = 20.0)]
        c_new: f64,
        #[arg(long, default_value_t = 0.2)]
        eps_b: f64,
        #[arg(long, default_value_t = 10.0)]
        epsilon: f64,
    },
    /// Solve an instance file exactly and with the distributed sampler.
    Oracle {
        instance: PathBuf,
        #[arg(long, default_value_t = 1)]
        nd: usize,
        #[arg(long)]
        repair: bool,
    },
    /// Estimate link-dependency probabilities on a lattice.
    Pij {
        #[arg(long, default_value_t = 10)]
        rows: usize,
        #[arg(long, default_value_t = 25)]
        cols: usize,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long, default_value_t = 10)]
        route_hops: usize,
        #[arg(long, default_value_t = 6)]
        max_h: usize,
    },
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit<T: Serialize>(rows: &[T], format: Format, out: &mut dyn Write) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, rows)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct BoundLine {
    quantity: &'static str,
    l: usize,
    h: Option<usize>,
    n_d: Option<usize>,
    value: Option<f64>,
}

#[derive(Serialize)]
struct SolveLine {
    solver: String,
    cost: f64,
    hamiltonian: f64,
    feasible: bool,
    preempted: String,
    avg_preempted_bw: f64,
    messages: u64,
}

impl SolveLine {
    fn new(inst: &PreemptionInstance, r: &SolverResult) -> Self {
        SolveLine {
            solver: r.solver.clone(),
            cost: r.cost,
            hamiltonian: r.hamiltonian,
            feasible: r.feasible,
            preempted: r.preempted.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" "),
            avg_preempted_bw: analysis::avg_preempted_bw(inst, r),
            messages: r.trace.messages_exchanged,
        }
    }
}

#[derive(Serialize)]
struct PijLine {
    h: usize,
    mean: f64,
    stderr: f64,
    lemma2_lower: Option<f64>,
    lemma3_upper: Option<f64>,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => {
            let mut cfg = ExperimentConfig::load(&config).with_context(|| format!("reading {}", config.display()))?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let res = run_experiment(&cfg)?;
            let target = cli.out.clone().or_else(|| cfg.output.clone());
            let mut out = sink(&target)?;
            match cli.format {
                Format::Csv => res.write_csv(&mut out)?,
                Format::Json => res.write_json(&mut out)?,
            }
            out.flush()?;
        }
        Command::Bounds {
            links,
            d0,
            p_c,
            nd,
            c_new,
            eps_b,
            epsilon,
        } => {
            let p = BoundParams {
                links,
                d0,
                p_c,
                nd,
                c_new,
                eps_b,
                epsilon,
            };
            p.validate()?;
            let mut lines = Vec::new();
            for h in 1..=links {
                lines.push(BoundLine {
                    quantity: "lemma2_lower",
                    l: links,
                    h: Some(h),
                    n_d: None,
                    value: Some(analysis::lemma2_lower(links, d0, h)?),
                });
                if h >= 2 {
                    lines.push(BoundLine {
                        quantity: "lemma3_upper",
                        l: links,
                        h: Some(h),
                        n_d: None,
                        value: Some(analysis::lemma3_upper(links, h)?),
                    });
                }
            }
            lines.push(BoundLine {
                quantity: "theorem1_bound",
                l: links,
                h: None,
                n_d: Some(nd),
                value: Some(analysis::theorem1_bound(&p)?),
            });
            lines.push(BoundLine {
                quantity: "theorem1_approx",
                l: links,
                h: None,
                n_d: Some(nd),
                value: analysis::theorem1_approx(&p)?,
            });
            lines.push(BoundLine {
                quantity: "corollary1_min_nd",
                l: links,
                h: None,
                n_d: analysis::corollary1_min_nd(&p)?,
                value: Some(epsilon),
            });
            let mut out = sink(&cli.out)?;
            emit(&lines, cli.format, &mut out)?;
            out.flush()?;
        }
        Command::Oracle { instance, nd, repair } => {
            let text = std::fs::read_to_string(&instance).with_context(|| format!("reading {}", instance.display()))?;
            let inst: PreemptionInstance = serde_json::from_str(&text).context("parsing instance")?;
            let exact = if inst.flow_count() <= solvers::MAX_BRUTE_FORCE_FLOWS {
                solvers::brute_force_optimal(&inst)?
            } else {
                solvers::exact_optimal(&inst)?
            };
            let cfg = GibbsConfig {
                repair,
                ..GibbsConfig::new(nd, cli.seed.unwrap_or(0))
            };
            let gibbs = solvers::gibbs_solve(&inst, &cfg)?;
            let min_conn = solvers::min_conn(&inst);
            let mut out = sink(&cli.out)?;
            match cli.format {
                Format::Json => {
                    serde_json::to_writer_pretty(&mut out, &[&exact, &gibbs, &min_conn])?;
                    writeln!(out)?;
                }
                Format::Csv => {
                    let lines: Vec<SolveLine> = [&exact, &gibbs, &min_conn]
                        .iter()
                        .map(|r| SolveLine::new(&inst, r))
                        .collect();
                    emit(&lines, cli.format, &mut out)?;
                }
            }
            out.flush()?;
        }
        Command::Pij {
            rows,
            cols,
            samples,
            runs,
            route_hops,
            max_h,
        } => {
            let t = graph::build_lattice(rows, cols, 100.0)?;
            let cfg = PijConfig {
                samples,
                runs,
                route_hops,
                max_h,
            };
            let points = traffic::empirical_link_dependency(&t, &cfg, cli.seed.unwrap_or(0))?;
            let lines: Vec<PijLine> = points
                .iter()
                .map(|p| PijLine {
                    h: p.h,
                    mean: p.mean,
                    stderr: p.stderr,
                    lemma2_lower: analysis::lemma2_lower(route_hops, 4, p.h).ok(),
                    lemma3_upper: analysis::lemma3_upper(route_hops, p.h).ok(),
                })
                .collect();
            let mut out = sink(&cli.out)?;
            emit(&lines, cli.format, &mut out)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
