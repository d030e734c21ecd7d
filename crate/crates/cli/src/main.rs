use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use richex::experiments::{parse_config_text, run, ExperimentConfig, ExperimentKind, CONFIG_KEYS};
use richex::Error;

#[derive(Parser)]
#[command(name = "richex", version, about = "Richardson extrapolation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a named experiment.
    Run {
        #[arg(value_parser = parse_kind)]
        experiment: ExperimentKind,
        #[command(flatten)]
        options: Options,
    },
    /// Print the integer Richardson weights and check their moment identities.
    Weights(Options),
    /// Compare the closed-form spectral filter with the direct weighted sum.
    Filter(Options),
    /// Smoothing experiments on the Lasso.
    Smoothing {
        #[arg(long, value_enum, default_value_t = SmoothingMode::Bias)]
        mode: SmoothingMode,
        #[command(flatten)]
        options: Options,
    },
    /// Kernel ridge regression experiments.
    Ridge {
        #[arg(long, value_enum, default_value_t = RidgeMode::Experiment)]
        mode: RidgeMode,
        #[command(flatten)]
        options: Options,
    },
    /// List experiment names and configuration keys.
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum SmoothingMode {
    Bias,
    Oracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum RidgeMode {
    Experiment,
    Decay,
}

#[derive(Args)]
struct Options {
    /// File of key=value lines; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    iterations: Option<String>,
    /// Orders as a comma list, e.g. 0,1,3.
    #[arg(long)]
    m: Option<String>,
    /// lo:hi:per_octave base-2 exponents, or a comma list of values.
    #[arg(long = "lambda-grid")]
    lambda_grid: Option<String>,
    #[arg(long)]
    noise: Option<String>,
    /// Frank-Wolfe step rule: 1/k or 2/(k+1).
    #[arg(long)]
    rule: Option<String>,
    /// Smoothing penalty: quadratic or entropic.
    #[arg(long)]
    penalty: Option<String>,
    #[arg(long)]
    radius: Option<String>,
    #[arg(long)]
    weight: Option<String>,
    #[arg(long)]
    replications: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    /// Fraction of the largest checkpoints used by slope fits.
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    feasibility: Option<String>,
    #[arg(long = "per-octave")]
    per_octave: Option<String>,
    /// CSV destination; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

impl Options {
    fn flags(&self) -> Vec<(&'static str, String)> {
        let fields = [
            ("seed", &self.seed),
            ("n", &self.n),
            ("d", &self.d),
            ("iterations", &self.iterations),
            ("m", &self.m),
            ("lambda-grid", &self.lambda_grid),
            ("noise", &self.noise),
            ("rule", &self.rule),
            ("penalty", &self.penalty),
            ("radius", &self.radius),
            ("weight", &self.weight),
            ("replications", &self.replications),
            ("beta", &self.beta),
            ("delta", &self.delta),
            ("window", &self.window),
            ("feasibility", &self.feasibility),
            ("per-octave", &self.per_octave),
        ];
        let mut out: Vec<(&'static str, String)> =
            fields.into_iter().filter_map(|(k, v)| v.clone().map(|v| (k, v))).collect();
        if let Some(p) = &self.output {
            out.push(("output", p.display().to_string()));
        }
        out
    }

    fn resolve(&self, kind: ExperimentKind) -> Result<ExperimentConfig, Error> {
        let mut pairs = vec![("experiment".to_string(), kind.name().to_string())];
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)?;
            for (k, v) in parse_config_text(&text)? {
                if k == "experiment" && v != kind.name() {
                    return Err(Error::InvalidArgument(format!(
                        "config file names experiment {v:?} but {kind} was requested"
                    )));
                }
                pairs.push((k, v));
            }
        }
        pairs.extend(self.flags().into_iter().map(|(k, v)| (k.to_string(), v)));
        ExperimentConfig::from_pairs(pairs)
    }
}

fn parse_kind(s: &str) -> Result<ExperimentKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn execute(kind: ExperimentKind, options: &Options) -> ExitCode {
    let config = match options.resolve(kind) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let outcome = match run(&config) {
        Ok(o) => o,
        Err(e @ (Error::InvalidArgument(_) | Error::Unsupported(_) | Error::Parse(_))) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    let written = match &config.output {
        Some(path) => fs::write(path, &outcome.csv),
        None => {
            print!("{}", outcome.csv);
            Ok(())
        }
    };
    if let Err(e) = written {
        eprintln!("error: cannot write CSV: {e}");
        return ExitCode::from(EXIT_RUNTIME);
    }
    eprint!("{}", outcome.report());
    if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECK_FAILED)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Run { experiment, options } => execute(*experiment, options),
        Command::Weights(options) => execute(ExperimentKind::Weights, options),
        Command::Filter(options) => execute(ExperimentKind::Filter, options),
        Command::Smoothing { mode, options } => {
            let kind = match mode {
                SmoothingMode::Bias => ExperimentKind::SmoothingBias,
                SmoothingMode::Oracle => ExperimentKind::SmoothingOracle,
            };
            execute(kind, options)
        }
        Command::Ridge { mode, options } => {
            let kind = match mode {
                RidgeMode::Experiment => ExperimentKind::RidgeExperiment,
                RidgeMode::Decay => ExperimentKind::RidgeDecay,
            };
            execute(kind, options)
        }
        Command::List => {
            println!("experiments:");
            for k in ExperimentKind::ALL {
                println!("  {k}");
            }
            println!("config keys: {}", CONFIG_KEYS.join(", "));
            ExitCode::SUCCESS
        }
    }
}
