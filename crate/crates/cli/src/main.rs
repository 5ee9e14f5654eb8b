use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cdreadout::config::{Protocol, RunConfig};
use cdreadout::harness::{self, RECIPES};
use cdreadout::measurement::NormalizationMode;

/// Counter-diabatic measurement drives: runs, sweeps and figure recipes.
#[derive(Debug, Parser)]
#[command(name = "cdreadout", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory (overrides `output_dir` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Upper bound on the integration step in µs.
    #[arg(long, global = true)]
    dt: Option<f64>,

    /// Which quantity the cap in the config applies to.
    #[arg(long, global = true, value_enum)]
    normalization: Option<NormalizationArg>,

    #[arg(long, global = true, value_enum)]
    detection: Option<DetectionArg>,

    /// Accepted for forward compatibility; every computation is deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one configuration (ignores any sweep section).
    Run { config: PathBuf },
    /// Evaluate the configuration's sweep grid (a single run if it has none).
    Sweep { config: PathBuf },
    /// Parse and check a configuration without simulating.
    Validate { config: PathBuf },
    /// Bundled figure-reproduction configs.
    Recipes {
        #[command(subcommand)]
        action: RecipeAction,
    },
}

#[derive(Debug, Subcommand)]
enum RecipeAction {
    List,
    Run { name: String },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NormalizationArg {
    Cavity,
    Power,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DetectionArg {
    Homodyne,
    Synodyne,
    Both,
}

impl Cli {
    fn apply(&self, mut config: RunConfig) -> cdreadout::Result<RunConfig> {
        if let Some(dt) = self.dt {
            config.simulation.dt = Some(dt);
        }
        if let Some(n) = self.normalization {
            let cap = match config.normalization {
                NormalizationMode::MaxIntracavity { cap } | NormalizationMode::InputPower { cap } => {
                    cap
                }
            };
            config.normalization = match n {
                NormalizationArg::Cavity => NormalizationMode::MaxIntracavity { cap },
                NormalizationArg::Power => NormalizationMode::InputPower { cap },
            };
        }
        if let Some(d) = self.detection {
            config.detection.protocol = match d {
                DetectionArg::Homodyne => Protocol::Homodyne,
                DetectionArg::Synodyne => Protocol::Synodyne,
                DetectionArg::Both => Protocol::Both,
            };
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.6e}"))
}

fn run(config: &RunConfig) -> cdreadout::Result<()> {
    let artifacts = harness::run_scenario(config)?;
    let written = harness::write_run(&artifacts, &config.output_dir)?;
    for v in &artifacts.summary.variants {
        println!(
            "{:<12} residual {:.3e}  ring-down {:.4} us{}  Q_hom {}  Q_syn {}",
            v.name,
            v.residual_ratio,
            v.ring_down_time,
            if v.settled { "" } else { " (unsettled)" },
            fmt(v.homodyne_q),
            fmt(v.synodyne_q),
        );
    }
    report_written(&written);
    Ok(())
}

fn sweep(config: &RunConfig, workers: Option<usize>) -> cdreadout::Result<()> {
    let result = harness::run_sweep(config, workers)?;
    let written = harness::write_sweep(&result, &config.output_dir)?;
    let failed = result.points.iter().filter(|p| p.error.is_some()).count();
    println!(
        "{} points, {} failed, {:.2} s",
        result.points.len(),
        failed,
        result.metadata.wall_time_s
    );
    if let Some(p) = result.homodyne_argmax() {
        let at: Vec<String> = result
            .axes
            .iter()
            .zip(&p.values)
            .map(|(a, v)| format!("{}={v}", a.path))
            .collect();
        println!("homodyne maximum {} at {}", fmt(p.homodyne_q), at.join(", "));
    }
    report_written(&written);
    Ok(())
}

fn report_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn load(path: &Path) -> cdreadout::Result<RunConfig> {
    RunConfig::load(path)
}

fn execute(cli: &Cli) -> cdreadout::Result<()> {
    match &cli.command {
        Command::Run { config } => run(&cli.apply(load(config)?)?),
        Command::Sweep { config } => {
            let c = cli.apply(load(config)?)?;
            if c.sweep.is_some() {
                sweep(&c, cli.workers)
            } else {
                println!("no sweep section; running once");
                run(&c)
            }
        }
        Command::Validate { config } => {
            let c = cli.apply(load(config)?)?;
            println!("{}: ok (hash {})", config.display(), c.hash());
            Ok(())
        }
        Command::Recipes { action } => match action {
            RecipeAction::List => {
                for (name, text) in RECIPES {
                    let about = text
                        .lines()
                        .next()
                        .and_then(|l| l.strip_prefix("# "))
                        .unwrap_or("");
                    println!("{name:<6} {about}");
                }
                Ok(())
            }
            RecipeAction::Run { name } => {
                let c = cli.apply(harness::recipe(name)?)?;
                if c.sweep.is_some() {
                    sweep(&c, cli.workers)
                } else {
                    run(&c)
                }
            }
        },
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    if cli.workers == Some(0) {
        eprintln!("error: --workers must be at least 1");
        return ExitCode::from(2);
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
