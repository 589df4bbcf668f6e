//! Command-line surface.
//!
//! Exit codes: 0 when every required solve converged, 2 for unreadable or
//! invalid input, 3 when a solve finished without converging.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::assignment::{solve_user_equilibrium, Mode, SolveOptions};
use crate::harness::{metrics_report, run_endogeneity_comparison, sweep, SweepParameter};
use crate::io::{parse_scenario, Report, Section, ToReport};
use crate::model::{PriceProfile, Scenario, StationId};
use crate::placement::{solve_placement, Method};
use crate::pricing::{solve_price_equilibrium, PricingOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "trilevel", version, about = "Entrant placement, price competition and driver equilibrium on a road network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Endogenous,
    Exogenous,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Endogenous => Mode::Endogenous,
            ModeArg::Exogenous => Mode::Exogenous,
        }
    }
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario file.
    scenario: PathBuf,
    /// Relative-gap tolerance of every Level 1 solve.
    #[arg(long, default_value_t = 1e-6)]
    gap: f64,
    /// Iteration cap of every Level 1 solve.
    #[arg(long = "max-iter", default_value_t = 10_000)]
    max_iter: usize,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn solve_options(&self, mode: Mode) -> SolveOptions {
        SolveOptions {
            gap_tolerance: self.gap,
            max_iterations: self.max_iter,
            mode,
            ..SolveOptions::default()
        }
    }

    fn pricing_options(&self, mode: Mode) -> PricingOptions {
        PricingOptions {
            assignment: self.solve_options(mode),
            ..PricingOptions::default()
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and validate a scenario.
    Validate {
        scenario: PathBuf,
    },
    /// Level 1 equilibrium with every open station at one price.
    SolveUe {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = ModeArg::Endogenous)]
        mode: ModeArg,
        /// Price at every open station; defaults to p_min.
        #[arg(long)]
        price: Option<f64>,
    },
    /// Price equilibrium among the open stations.
    SolvePricing {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = ModeArg::Endogenous)]
        mode: ModeArg,
        /// Candidate stations to open as well, comma separated.
        #[arg(long, value_delimiter = ',')]
        open: Vec<u32>,
    },
    /// Entrant's best placement of k candidate sites.
    SolvePlacement {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = ModeArg::Endogenous)]
        mode: ModeArg,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value = "exhaustive")]
        method: Method,
    },
    /// Placement with non-EV traffic re-routing versus frozen.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value = "exhaustive")]
        method: Method,
    },
    /// One comparison per parameter value.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// nonev_scale, outside_cost or k.
        #[arg(long)]
        param: SweepParameter,
        /// Strictly increasing, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value = "exhaustive")]
        method: Method,
    },
}

fn load(path: &PathBuf) -> Result<Scenario, i32> {
    parse_scenario(path).map_err(|e| {
        for m in e.messages() {
            eprintln!("error: {m}");
        }
        EXIT_INPUT
    })
}

fn input_error(e: impl std::fmt::Display) -> i32 {
    eprintln!("error: {e}");
    EXIT_INPUT
}

fn emit(report: &Report, out: &Option<PathBuf>) -> Result<(), i32> {
    let text = report.render();
    match out {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(path) => std::fs::write(path, text)
            .map_err(|e| input_error(format!("cannot write {}: {e}", path.display()))),
    }
}

fn finish(report: &Report, out: &Option<PathBuf>, converged: bool) -> Result<i32, i32> {
    emit(report, out)?;
    if converged {
        Ok(EXIT_OK)
    } else {
        eprintln!("warning: a solve did not converge");
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn dispatch(command: Command) -> Result<i32, i32> {
    match command {
        Command::Validate { scenario } => {
            let s = load(&scenario)?;
            println!(
                "valid: {} nodes, {} links, {} stations, {} demand entries",
                s.nodes.len(),
                s.links.len(),
                s.stations.len(),
                s.demand.len()
            );
            Ok(EXIT_OK)
        }
        Command::SolveUe { common, mode, price } => {
            let s = load(&common.scenario)?;
            let price = price.unwrap_or(s.params.price_min);
            let open = s.open_stations();
            let prices = PriceProfile::uniform(&open, price);
            let flow = solve_user_equilibrium(&s, &open, &prices, &common.solve_options(mode.into()))
                .map_err(input_error)?;
            let mut report = Report::new("solve-ue");
            let mut settings = Section::new("settings");
            settings
                .push("mode", vec![Mode::from(mode).to_string().into()])
                .push("price", vec![price.into()]);
            report.sections.push(settings);
            report.sections.extend(flow.to_report().sections);
            report.extend_prefixed("metrics", metrics_report(&s, &flow, &prices).to_report());
            finish(&report, &common.out, flow.converged)
        }
        Command::SolvePricing { common, mode, open } => {
            let s = load(&common.scenario)?;
            let mut stations = s.open_stations();
            stations.extend(open.into_iter().map(StationId));
            for &id in &stations {
                if s.station(id).is_none() {
                    return Err(input_error(format!("unknown station {id}")));
                }
            }
            let result = solve_price_equilibrium(&s, &stations, &common.pricing_options(mode.into()))
                .map_err(input_error)?;
            let mut report = Report::new("solve-pricing");
            report.sections = result.to_report().sections;
            report.extend_prefixed("metrics", metrics_report(&s, &result.flow, &result.prices).to_report());
            finish(&report, &common.out, result.converged)
        }
        Command::SolvePlacement { common, mode, k, method } => {
            let s = load(&common.scenario)?;
            let result = solve_placement(&s, k, method, &common.pricing_options(mode.into()))
                .map_err(input_error)?;
            let mut report = result.to_report();
            report.kind = "solve-placement".into();
            report.extend_prefixed(
                "metrics",
                metrics_report(&s, &result.pricing.flow, &result.pricing.prices).to_report(),
            );
            finish(&report, &common.out, result.converged)
        }
        Command::Compare { common, k, method } => {
            let s = load(&common.scenario)?;
            let result = run_endogeneity_comparison(&s, k, method, &common.pricing_options(Mode::Endogenous))
                .map_err(input_error)?;
            finish(&result.to_report(), &common.out, result.converged())
        }
        Command::Sweep { common, param, values, k, method } => {
            let s = load(&common.scenario)?;
            let series = sweep(&s, param, &values, k, method, &common.pricing_options(Mode::Endogenous))
                .map_err(input_error)?;
            finish(&series.to_report(), &common.out, series.converged())
        }
    }
}

/// Runs the command line `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) | Err(code) => code,
    }
}
