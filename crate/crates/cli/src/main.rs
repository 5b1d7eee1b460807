use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use greenwave_core::markov::TransitionModel;
use greenwave_core::rl::{curve_csv, EpisodeStats, TrainedPolicy};
use greenwave_core::sim::{
    collect_profiles, compare, export, plot_svg, read_trace, run_scenario, train_models, ControllerPair,
    HigherLevel, LowerLevel, Metrics, PlotKind, Scenario, TrainedModels,
};

#[derive(Parser)]
#[command(name = "greenwave", version, about = "Eco-driving through signalized corridors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one controller pair on one seed and export trace, metrics and plots.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// mpc+rl, mpc+mpcbase, cruise+rl or cruise+mpcbase
        #[arg(long)]
        controller: ControllerPair,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// directory written by `train`; trained from scratch when omitted
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Collect driving profiles, estimate demand models and train one
    /// policy per vehicle.
    Train {
        #[arg(long)]
        scenario: PathBuf,
        /// overrides the scenario's episode count
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run two controller pairs over the same seeds and report savings of
    /// the first relative to the second.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        arms: Vec<ControllerPair>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Render one plot of a trace CSV.
    Plot {
        #[arg(long)]
        trace: PathBuf,
        /// distance, velocity, soc, power or engine
        #[arg(long)]
        kind: PlotKind,
        #[arg(long)]
        out: PathBuf,
        /// scenario for the light schedule and engine map (defaults otherwise)
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    Scenario::load(path).with_context(|| format!("loading scenario {}", path.display()))
}

fn needs_models(pair: ControllerPair) -> bool {
    matches!(pair.lower, LowerLevel::Rl | LowerLevel::MpcBaseline)
}

fn train(scn: &Scenario) -> Result<TrainedModels> {
    let profiles = collect_profiles(scn, HigherLevel::Mpc, &scn.training.profile_seeds)?;
    Ok(train_models(scn, &profiles, &scn.schedule)?)
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn save_models(models: &TrainedModels, scn: &Scenario, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (i, (tpm, pol)) in models.tpms.iter().zip(&models.policies).enumerate() {
        tpm.save(&dir.join(format!("tpm_{i}.txt")))?;
        pol.save(&dir.join(format!("qtable_{i}.txt")))?;
        write(&dir.join(format!("curve_{i}.csv")), curve_csv(&pol.curve))?;
    }
    write(&dir.join("engine_map.csv"), scn.powertrain.engine_model().map_csv())
}

fn load_models(dir: &Path, fleet: usize) -> Result<TrainedModels> {
    let mut tpms = Vec::with_capacity(fleet);
    let mut policies = Vec::with_capacity(fleet);
    for i in 0..fleet {
        let tpm = dir.join(format!("tpm_{i}.txt"));
        let q = dir.join(format!("qtable_{i}.txt"));
        tpms.push(TransitionModel::load(&tpm).with_context(|| format!("loading {}", tpm.display()))?);
        policies.push(TrainedPolicy::load(&q).with_context(|| format!("loading {}", q.display()))?);
    }
    Ok(TrainedModels { tpms, policies })
}

/// Models from `--models`, or freshly trained (and saved under `out`) when
/// the controller needs them.
fn models_for(
    scn: &Scenario,
    pairs: &[ControllerPair],
    models: Option<&Path>,
    out: &Path,
) -> Result<Option<TrainedModels>> {
    if !pairs.iter().copied().any(needs_models) {
        return Ok(None);
    }
    Ok(Some(match models {
        Some(dir) => load_models(dir, scn.fleet_size)?,
        None => {
            eprintln!("training lower-level models for {} vehicles", scn.fleet_size);
            let m = train(scn)?;
            save_models(&m, scn, &out.join("models"))?;
            m
        }
    }))
}

fn summary_line(m: &Metrics) -> String {
    let travel = m
        .fleet_mean_travel_time
        .map_or("timeout".to_string(), |t| format!("{t:.1} s"));
    format!(
        "{} seed {}: mean travel time {travel}, mean corrected fuel {:.2} g, wall clock {:.2} s",
        m.controller, m.seed, m.fleet_mean_corrected_fuel_g, m.wall_clock_s
    )
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            scenario,
            controller,
            seed,
            out,
            models,
        } => {
            let scn = load_scenario(&scenario)?;
            let models = models_for(&scn, &[controller], models.as_deref(), &out)?;
            let output = run_scenario(&scn, controller, seed, models.as_ref())?;
            export(&output, &scn, &out)?;
            println!("{}", summary_line(&output.metrics));
        }
        Command::Train {
            scenario,
            episodes,
            out,
        } => {
            let mut scn = load_scenario(&scenario)?;
            if let Some(n) = episodes {
                scn.schedule.episodes = n;
            }
            let t0 = std::time::Instant::now();
            let models = train(&scn)?;
            save_models(&models, &scn, &out)?;
            for (i, pol) in models.policies.iter().enumerate() {
                let n = pol.curve.len();
                let w = (n / 10).max(1);
                let mean = |r: &[EpisodeStats]| {
                    r.iter().map(|e| e.cost).sum::<f64>() / r.len().max(1) as f64
                };
                println!(
                    "vehicle {i}: episode cost {:.1} -> {:.1}",
                    mean(&pol.curve[..w.min(n)]),
                    mean(&pol.curve[n.saturating_sub(w)..])
                );
            }
            println!("trained in {:.1} s", t0.elapsed().as_secs_f64());
        }
        Command::Compare {
            scenario,
            arms,
            seeds,
            out,
            models,
        } => {
            let scn = load_scenario(&scenario)?;
            let [a, b] = arms[..] else {
                bail!("--arms takes exactly two controller pairs");
            };
            let models = models_for(&scn, &arms, models.as_deref(), &out)?;
            let mut runs: [Vec<Metrics>; 2] = [Vec::new(), Vec::new()];
            for (arm, pair) in [a, b].into_iter().enumerate() {
                for &seed in &seeds {
                    let output = run_scenario(&scn, pair, seed, models.as_ref())?;
                    let dir = out.join(pair.to_string()).join(format!("seed_{seed}"));
                    export(&output, &scn, &dir)?;
                    println!("{}", summary_line(&output.metrics));
                    runs[arm].push(output.metrics);
                }
            }
            let cmp = compare(&runs[0], &runs[1])?;
            std::fs::create_dir_all(&out)?;
            write(&out.join("comparison.json"), serde_json::to_string_pretty(&cmp)?)?;
            let table = cmp.table();
            write(&out.join("comparison.txt"), &table)?;
            print!("{table}");
        }
        Command::Plot {
            trace,
            kind,
            out,
            scenario,
        } => {
            let scn = match scenario {
                Some(p) => load_scenario(&p)?,
                None => Scenario::default(),
            };
            let rows = read_trace(&trace).with_context(|| format!("reading {}", trace.display()))?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            write(&out, plot_svg(&rows, kind, &scn)?)?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    run(Cli::parse())
}
