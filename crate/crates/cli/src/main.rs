use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use colav::formulations::{Body, FormulationKind, Kind, Mode};
use colav::harness::{render_report, run_matrix, trajectory_csv, InputHold, Matrix, MatrixOptions, ReportFormat};
use colav::scenario::Scenario;
use colav::svg::{render, PlotOptions, Track};

/// Plan vessel trajectories and benchmark obstacle-constraint formulations.
#[derive(Parser)]
#[command(name = "colav", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one formulation.
    Plan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        formulation: Kind,
        #[arg(long, default_value = "separate")]
        mode: Mode,
        #[arg(long, default_value = "point")]
        body: Body,
    },
    /// Solve the formulation matrix.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Run both body models (the default when `--body` is absent).
        #[arg(long)]
        all: bool,
        /// Restrict the matrix to one body model.
        #[arg(long, conflicts_with = "all")]
        body: Option<Body>,
        /// Solve runs one after another.
        #[arg(long)]
        serial: bool,
    },
    /// Validate a scenario and print it with defaults applied.
    Check {
        /// Scenario file, or `kiel-harbor` for the bundled one.
        scenario: String,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file, or `kiel-harbor` for the bundled one.
    scenario: String,
    /// Override the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for the report, trajectory CSVs and the SVG plot.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "md")]
    report: Format,
    /// Include wall-clock times in the report.
    #[arg(long)]
    times: bool,
    /// Input reconstruction for the open-loop replay.
    #[arg(long, value_enum, default_value = "linear")]
    hold: Hold,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Md,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Hold {
    Zoh,
    Linear,
}

fn load(name: &str) -> colav::Result<Scenario> {
    if name == "kiel-harbor" && !Path::new(name).exists() {
        Ok(Scenario::kiel_harbor())
    } else {
        Scenario::load(Path::new(name))
    }
}

fn file_stem(id: &str) -> String {
    id.replace('/', "_")
}

fn write_outputs(
    dir: &Path,
    scenario: &Scenario,
    matrix: &Matrix,
    report: &str,
    format: ReportFormat,
) -> colav::Result<()> {
    fs::create_dir_all(dir)?;
    let ext = match format {
        ReportFormat::Markdown => "md",
        ReportFormat::Csv => "csv",
    };
    fs::write(dir.join(format!("report.{ext}")), report)?;
    for run in &matrix.runs {
        if let Some(t) = &run.trajectory {
            let csv = trajectory_csv(t, &scenario.vessel, &run.sample_times);
            fs::write(dir.join(format!("{}.csv", file_stem(&run.report.id))), csv)?;
        }
    }
    let tracks: Vec<Track> = matrix
        .runs
        .iter()
        .filter_map(|r| r.trajectory.as_ref().map(|t| Track { label: &r.report.id, trajectory: t }))
        .collect();
    let svg = render(&scenario.obstacles, &scenario.vessel.footprint, &tracks, &PlotOptions::default());
    fs::write(dir.join("plot.svg"), svg)?;
    Ok(())
}

fn run(common: &Common, selection: &[FormulationKind], parallel: bool) -> colav::Result<bool> {
    let mut scenario = load(&common.scenario)?;
    if let Some(seed) = common.seed {
        scenario.seed = seed;
    }
    let mut options = MatrixOptions { parallel, ..Default::default() };
    options.replay.hold = match common.hold {
        Hold::Zoh => InputHold::ZeroOrder,
        Hold::Linear => InputHold::Linear,
    };
    let matrix = run_matrix(&scenario, selection, &options)?;
    let format = match common.report {
        Format::Md => ReportFormat::Markdown,
        Format::Csv => ReportFormat::Csv,
    };
    let report = render_report(&matrix, format, common.times);
    print!("{report}");
    if let Some(dir) = &common.out {
        write_outputs(dir, &scenario, &matrix, &report, format)?;
    }
    Ok(matrix.all_converged())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Plan { common, formulation, mode, body } => {
            FormulationKind::new(*formulation, *mode, *body).and_then(|f| run(common, &[f], false))
        }
        Command::Bench { common, all: _, body, serial } => {
            let selection: Vec<_> =
                FormulationKind::table_matrix().into_iter().filter(|f| body.is_none_or(|b| f.body == b)).collect();
            run(common, &selection, !serial)
        }
        Command::Check { scenario } => load(scenario).map(|s| {
            for w in &s.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", s.echo());
            true
        }),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
