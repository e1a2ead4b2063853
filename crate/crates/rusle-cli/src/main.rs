//! `rusle`: batch pipeline for raster soil-erosion modeling.
//!
//! Exit codes: 0 success, 2 validation error (bad config or inputs),
//! 3 I/O error, 4 computation error. Outputs are deterministic: the same
//! inputs and configuration produce byte-identical files at any `--jobs`.

mod demo;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rusle::ErrorCategory;

#[derive(Parser)]
#[command(
    name = "rusle",
    version,
    about = "Raster soil-erosion modeling: RUSLE factors, rainfall erosivity, climatic ensemble"
)]
struct Cli {
    /// Worker threads; all cores when absent. Output bytes do not depend
    /// on this.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Configuration file; RUSLE_CONFIG or the built-in default when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the seeded synthetic demo dataset
    Demo {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Compute climatic indicator rasters from daily precipitation fields
    Indicators {
        /// Directory of precip_YYYY-MM-DD.asc daily fields
        #[arg(long)]
        precip_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Exact R factor from high-frequency gauge records (EI30 summation)
    ErosivityExact {
        /// Gauge CSV; repeat for several gauges
        #[arg(long = "gauge", required = true)]
        gauges: Vec<PathBuf>,
        /// JSON report path
        #[arg(long)]
        out: PathBuf,
    },
    /// Ensemble R from empirical equations weighted by climate similarity
    ErosivityEnsemble {
        #[arg(long)]
        precip_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Compute K, L, S, C, St, P factor rasters
    RusleFactors {
        #[arg(long)]
        dem: PathBuf,
        #[arg(long)]
        clay: PathBuf,
        #[arg(long)]
        silt: PathBuf,
        #[arg(long)]
        sand: PathBuf,
        #[arg(long)]
        landcover: PathBuf,
        #[arg(long)]
        stoniness: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Uniform slope length in meters; cell size when absent
        #[arg(long)]
        slope_length: Option<f64>,
    },
    /// Multiply factor rasters with R into the soil-loss map and classes
    Compose {
        /// Directory holding k/l/s/c/st/p.asc
        #[arg(long)]
        factors_dir: PathBuf,
        /// R raster path
        #[arg(long)]
        r: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Render a raster to PNG with a color ramp and legend sidecar
    Render {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// blue_red, grayscale, or heat
        #[arg(long)]
        ramp: Option<String>,
        #[arg(long)]
        log_scale: bool,
        #[arg(long)]
        min: Option<f64>,
        #[arg(long)]
        max: Option<f64>,
    },
    /// Full pipeline over a dataset directory laid out like the demo
    RunAll {
        #[arg(long)]
        input_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .is_err()
        {
            eprintln!("error: could not configure the thread pool");
            return ExitCode::from(2);
        }
    }
    let config = cli.config.as_deref();
    let result = match &cli.command {
        Command::Demo { out_dir, seed } => demo::generate(out_dir, *seed),
        Command::Indicators {
            precip_dir,
            out_dir,
        } => stages::indicators(precip_dir, out_dir, config),
        Command::ErosivityExact { gauges, out } => stages::erosivity_exact(gauges, out, config),
        Command::ErosivityEnsemble {
            precip_dir,
            out_dir,
        } => stages::erosivity_ensemble(precip_dir, out_dir, config),
        Command::RusleFactors {
            dem,
            clay,
            silt,
            sand,
            landcover,
            stoniness,
            out_dir,
            slope_length,
        } => {
            let inputs = stages::FactorInputs {
                dem: dem.clone(),
                clay: clay.clone(),
                silt: silt.clone(),
                sand: sand.clone(),
                landcover: landcover.clone(),
                stoniness: stoniness.clone(),
            };
            stages::rusle_factors(&inputs, out_dir, *slope_length, config)
        }
        Command::Compose {
            factors_dir,
            r,
            out_dir,
        } => stages::compose(factors_dir, r, out_dir, config),
        Command::Render {
            input,
            out,
            ramp,
            log_scale,
            min,
            max,
        } => {
            let args = stages::RenderArgs {
                ramp: ramp.clone(),
                log_scale: *log_scale,
                min: *min,
                max: *max,
            };
            stages::render(input, out, &args, config)
        }
        Command::RunAll { input_dir, out_dir } => stages::run_all(input_dir, out_dir, config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.category() {
                ErrorCategory::Validation => 2,
                ErrorCategory::Io => 3,
                ErrorCategory::Computation => 4,
            })
        }
    }
}
