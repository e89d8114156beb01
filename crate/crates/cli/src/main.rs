use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pivot_core::config::ScenarioBundle;
use pivot_core::{output, pipeline, Error, Result};

/// Soil-water simulation, model reduction and irrigation scheduling for center-pivot fields.
#[derive(Debug, Parser)]
#[command(name = "pivot", version)]
struct Cli {
    #[command(flatten)]
    source: Source,

    /// Directory for output files (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Seed for the initial-state jitter; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Scenario TOML file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Built-in desk-scale scenario.
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..=3))]
    scenario: Option<u32>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the configured irrigation schedule on the full model.
    Simulate,
    /// Cluster the training trajectory and score the reduced model.
    Reduce {
        /// Clustering threshold; defaults to the config value.
        #[arg(long, conflicts_with = "sweep")]
        threshold: Option<f64>,
        /// Threshold sweep `A:B:S`.
        #[arg(long)]
        sweep: Option<String>,
        /// Also evaluate the reduction at the config's alternative inputs.
        #[arg(long, conflicts_with = "sweep")]
        robustness: bool,
    },
    /// Receding-horizon closed loop over the season.
    Schedule,
    /// Days until the root zone leaves the band after one event, per amount.
    SweepDays {
        /// Comma-separated rates (m/s); defaults to the config list.
        #[arg(long, value_delimiter = ',')]
        amounts: Option<Vec<f64>>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn parse_sweep(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let nums: Option<Vec<f64>> = parts.iter().map(|p| p.trim().parse().ok()).collect();
    match nums.as_deref() {
        Some(&[a, b, step]) => pipeline::sweep_range(a, b, step),
        _ => Err(Error::Parameter(format!(
            "--sweep expects A:B:S, got `{s}`"
        ))),
    }
}

fn save(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    output::write(&path, text)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let bundle = match (&cli.source.config, cli.source.scenario) {
        (Some(path), _) => ScenarioBundle::load(path)?,
        (None, Some(n)) => ScenarioBundle::builtin(n)?,
        (None, None) => unreachable!("clap requires a source"),
    };
    let sweep = match &cli.command {
        Command::Reduce { sweep: Some(s), .. } => Some(parse_sweep(s)?),
        _ => None,
    };
    std::fs::create_dir_all(&cli.out).map_err(|e| Error::Io {
        path: cli.out.clone(),
        source: e,
    })?;
    let out = cli.out.as_path();
    let hash = bundle.sha256();

    match &cli.command {
        Command::Simulate => {
            let tr = pipeline::simulate(&bundle, cli.seed)?;
            println!(
                "simulated {} samples of {} nodes; mass balance error {:.3e} m3",
                tr.len(),
                tr.states[0].len(),
                tr.ledger.net()
            );
            save(out, "trajectory.csv", &output::trajectory_csv(&tr, hash))?;
        }
        Command::Reduce {
            threshold,
            robustness,
            ..
        } => {
            if let Some(thresholds) = sweep {
                let rows = pipeline::reduce_sweep(&bundle, &thresholds)?;
                for r in &rows {
                    println!(
                        "threshold {:.3}  r {:4}  mse {:.4e}",
                        r.threshold, r.r, r.mse
                    );
                }
                save(out, "reduce_sweep.csv", &output::reduce_csv(&rows, hash))?;
            } else {
                let th = threshold.unwrap_or(bundle.config.reduction.threshold);
                let (clustering, row) = pipeline::reduce(&bundle, th)?;
                println!(
                    "threshold {}  r {}  mse {:.4e}",
                    row.threshold, row.r, row.mse
                );
                save(out, "clusters.csv", &output::cluster_csv(&clustering, hash))?;
                save(out, "reduce.csv", &output::reduce_csv(&[row], hash))?;
                if *robustness {
                    let rep = pipeline::robustness(&bundle, th)?;
                    let mut text = output::provenance(hash);
                    text.push_str("rate,mse,ratio_to_training\n");
                    for (rate, mse) in &rep.other {
                        text.push_str(&format!("{rate},{mse},{}\n", mse / rep.same_input_mse));
                    }
                    println!(
                        "worst evaluation / training MSE ratio {:.3}",
                        rep.worst_ratio()
                    );
                    save(out, "robustness.csv", &text)?;
                }
            }
        }
        Command::Schedule => {
            let run = pipeline::schedule(&bundle, cli.seed)?;
            let s = &run.summary;
            println!(
                "r = {}; {} events, water {:.2} m3, deficiency {:.4}",
                run.clustering.len(),
                s.events,
                s.total_water_m3,
                s.total_deficiency
            );
            println!(
                "root zone: min head {:.3} m, {:.1}% above actual lower bound, {:.1}% above target lower bound",
                s.min_head,
                100.0 * s.frac_above_actual_lower,
                100.0 * s.frac_above_lower
            );
            for r in &run.log.rows {
                let rates: Vec<String> = r.u_rates.iter().map(|u| format!("{u:.3e}")).collect();
                println!(
                    "  step {:2} day {:6.2}  rates [{}]  T {:6.2} d  water {:8.2} m3",
                    r.event_index,
                    r.t_start_s / pivot_core::SECONDS_PER_DAY,
                    rates.join(", "),
                    r.t_chosen_s / pivot_core::SECONDS_PER_DAY,
                    r.water_m3
                );
            }
            save(
                out,
                "clusters.csv",
                &output::cluster_csv(&run.clustering, hash),
            )?;
            save(out, "log.csv", &output::log_csv(&run.log, hash))?;
            save(out, "stress.csv", &output::stress_csv(&run.log, hash))?;
            save(out, "summary.csv", &output::summary_csv(s, hash))?;
        }
        Command::SweepDays { amounts } => {
            let rep = pipeline::sweep_days(&bundle, amounts.as_deref())?;
            for r in &rep.rows {
                println!(
                    "amount {:.4e}  days {:7.3}{}",
                    r.amount,
                    r.days,
                    if r.capped { " (cap)" } else { "" }
                );
            }
            if let Some(k) = rep.knee_amount {
                println!("knee near {k:.4e}; saturating: {}", rep.saturating());
            }
            save(out, "sweep_days.csv", &output::sweep_csv(&rep, hash))?;
        }
    }
    Ok(())
}
