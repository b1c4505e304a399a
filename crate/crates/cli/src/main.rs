//! `siqrng`: command-line front end for the siqrng toolkit.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgMatches, Args, FromArgMatches, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use siqrng::config::RunConfig;
use siqrng::extractor::{extract_blocks, plan_extraction, seed_bits_required, ExtractionPlan};
use siqrng::io::{
    decode_tally, encode_tally, read_bitstream, read_json, read_text, write_bitstream, write_file,
    write_json,
};
use siqrng::montecarlo::{
    double_click_assignment, simulate, tally_to_estimation_input, ClickTally,
};
use siqrng::pipeline::{
    evaluate_model, generated_toeplitz_seed, run_pipeline, sweep, ModelEvaluation,
};
use siqrng::security::{analyze, EstimationInput, RateReport};
use siqrng::stattests::{battery_passed, run_battery, TestReport};
use siqrng::Error;

#[derive(Parser, Debug)]
#[command(
    name = "siqrng",
    version,
    about = "Source-independent QRNG modeling and post-processing"
)]
struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true, env = "SIQRNG_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Analytic click probabilities, expected counts and rate.
    ModelEval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Write the report here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analytic rate over a grid of mean photon numbers.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 1.0)]
        mu_min: f64,
        #[arg(long, default_value_t = 200.0)]
        mu_max: f64,
        #[arg(long, default_value_t = 100)]
        points: usize,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo run producing a tally file and raw Z-basis bits.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        tally: Option<PathBuf>,
        #[arg(long)]
        bits: Option<PathBuf>,
    },
    /// Finite-key analysis of a tally file.
    Estimate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Tally file from `simulate` or an external recording.
        #[arg(long)]
        tally: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Toeplitz hashing of raw bits sized by an estimate report.
    Extract {
        #[command(flatten)]
        config: ConfigArgs,
        /// Raw bitstream.
        #[arg(long)]
        input: PathBuf,
        /// Report written by `estimate`.
        #[arg(long)]
        report: PathBuf,
        /// Toeplitz seed bitstream (overrides `toeplitz_seed_file`).
        #[arg(long)]
        seed_bits: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Statistical test battery on a bitstream.
    Test {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// simulate, estimate, extract and test in one go.
    Pipeline {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

/// `--config FILE` plus one `--key value` override per config field.
#[derive(Debug, Clone, Default)]
struct ConfigArgs {
    path: Option<PathBuf>,
    overrides: Vec<(&'static str, String)>,
}

impl ConfigArgs {
    fn resolve(&self, fallback: Option<RunConfig>) -> Result<RunConfig, Error> {
        let mut config = match &self.path {
            Some(path) => RunConfig::load(path)?,
            None => fallback.unwrap_or_default(),
        };
        for (key, value) in &self.overrides {
            config.set(key, value)?;
        }
        config.validate()?;
        Ok(config)
    }
}

impl FromArgMatches for ConfigArgs {
    fn from_arg_matches(matches: &ArgMatches) -> Result<Self, clap::Error> {
        let mut args = ConfigArgs::default();
        args.update_from_arg_matches(matches)?;
        Ok(args)
    }

    fn update_from_arg_matches(&mut self, matches: &ArgMatches) -> Result<(), clap::Error> {
        if let Some(path) = matches.get_one::<PathBuf>("config") {
            self.path = Some(path.clone());
        }
        for key in RunConfig::KEYS {
            if let Some(value) = matches.get_one::<String>(key) {
                self.overrides.push((key, value.clone()));
            }
        }
        Ok(())
    }
}

impl Args for ConfigArgs {
    fn augment_args(cmd: clap::Command) -> clap::Command {
        let cmd = cmd.arg(
            clap::Arg::new("config")
                .long("config")
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .help("JSON run configuration"),
        );
        RunConfig::KEYS.iter().fold(cmd, |cmd, key| {
            let mut arg = clap::Arg::new(*key)
                .long(*key)
                .value_name("VALUE")
                .help(format!("Override `{key}`"))
                .hide_short_help(true);
            let dashed = key.replace('_', "-");
            if dashed != *key {
                arg = arg.alias(&*Box::leak(dashed.into_boxed_str()));
            }
            cmd.arg(arg)
        })
    }

    fn augment_args_for_update(cmd: clap::Command) -> clap::Command {
        Self::augment_args(cmd)
    }
}

#[derive(Serialize)]
struct ModelEvalReport<'a> {
    config: &'a RunConfig,
    #[serde(flatten)]
    evaluation: &'a ModelEvaluation,
}

#[derive(Serialize, Deserialize)]
struct EstimateReport {
    config: RunConfig,
    tally: ClickTally,
    estimation_input: EstimationInput,
    rate: RateReport,
}

#[derive(Serialize)]
struct ExtractReport<'a> {
    config: &'a RunConfig,
    plan: ExtractionPlan,
    raw_bits: u64,
    final_bits: u64,
}

#[derive(Serialize)]
struct BatteryReport<'a> {
    config: &'a RunConfig,
    bits: u64,
    passed: bool,
    tests: &'a [TestReport],
}

/// Outcome of a command that ran to completion.
enum Outcome {
    Success,
    BatteryFailed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        pool = pool.num_threads(threads);
    }
    let pool = match pool.build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::BatteryFailed) => {
            eprintln!("statistical battery failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}

fn run(command: Command) -> Result<Outcome, Error> {
    match command {
        Command::ModelEval { config, out } => {
            let config = config.resolve(None)?;
            let evaluation = evaluate_model(&config.model(), &config.security())?;
            emit(
                &ModelEvalReport {
                    config: &config,
                    evaluation: &evaluation,
                },
                out.as_deref(),
            )?;
        }
        Command::Sweep {
            config,
            mu_min,
            mu_max,
            points,
            out,
        } => {
            let config = config.resolve(None)?;
            let rows = sweep(&config.model(), &config.security(), mu_min, mu_max, points)?;
            let mut table = String::from("mu\trate_bps\n");
            for row in rows {
                writeln!(table, "{}\t{}", row.mu, row.rate_bps).expect("write to string");
            }
            match out {
                Some(path) => write_file(&path, table)?,
                None => print_stdout(&table)?,
            }
        }
        Command::Simulate {
            config,
            tally,
            bits,
        } => {
            let config = config.resolve(None)?;
            let model = config.model();
            let (counts, raw) = simulate(&model, config.n_pulses, config.seed)?;
            let raw = if config.double_click_bits {
                double_click_assignment(&raw, &counts, config.seed)
            } else {
                raw
            };
            let tally_path = tally.unwrap_or_else(|| output_path(&config, "tally.json"));
            let bits_path = bits.unwrap_or_else(|| output_path(&config, "raw.siqb"));
            prepare_parent(&tally_path)?;
            prepare_parent(&bits_path)?;
            write_file(&tally_path, encode_tally(&counts, Some(&config)) + "\n")?;
            write_bitstream(&bits_path, &raw.bits)?;
            print_stdout(&(encode_tally(&counts, None) + "\n"))?;
        }
        Command::Estimate { config, tally, out } => {
            let (counts, recorded) = decode_tally(&read_text(&tally)?)?;
            let config = config.resolve(recorded)?;
            let input = tally_to_estimation_input(&counts, &config.model())?;
            let rate = analyze(&input, &config.security())?;
            emit(
                &EstimateReport {
                    config,
                    tally: counts,
                    estimation_input: input,
                    rate,
                },
                out.as_deref(),
            )?;
        }
        Command::Extract {
            config,
            input,
            report,
            seed_bits,
            out,
        } => {
            let estimate: EstimateReport = read_json(&report)?;
            let config = config.resolve(Some(estimate.config))?;
            let raw = read_bitstream(&input)?;
            let plan = plan_extraction(&estimate.rate, config.block_n)?;
            let seed = match seed_bits.or_else(|| config.toeplitz_seed_file.clone()) {
                Some(path) => read_bitstream(&path)?,
                None => generated_toeplitz_seed(
                    config.seed,
                    seed_bits_required(&plan, raw.len(), config.seed_policy),
                ),
            };
            let extracted = extract_blocks(&raw, &seed, &plan, config.seed_policy)?;
            prepare_parent(&out)?;
            write_bitstream(&out, &extracted)?;
            emit(
                &ExtractReport {
                    config: &config,
                    plan,
                    raw_bits: raw.len() as u64,
                    final_bits: extracted.len() as u64,
                },
                None,
            )?;
        }
        Command::Test { config, input, out } => {
            let config = config.resolve(None)?;
            let bits = read_bitstream(&input)?;
            let tests = run_battery(&bits, config.sample_bits, config.alpha)?;
            let passed = battery_passed(&tests);
            emit(
                &BatteryReport {
                    config: &config,
                    bits: bits.len() as u64,
                    passed,
                    tests: &tests,
                },
                out.as_deref(),
            )?;
            if !passed {
                return Ok(Outcome::BatteryFailed);
            }
        }
        Command::Pipeline { config } => {
            let config = config.resolve(None)?;
            let output = run_pipeline(&config, None)?;
            let dir = output_path(&config, "");
            create_dir(&dir)?;
            write_file(
                &dir.join("tally.json"),
                encode_tally(&output.tally, Some(&config)) + "\n",
            )?;
            write_bitstream(&dir.join("raw.siqb"), &output.raw_bits)?;
            write_bitstream(&dir.join("final.siqb"), &output.final_bits)?;
            write_json(
                &dir.join("estimate.json"),
                &EstimateReport {
                    config: config.clone(),
                    tally: output.tally,
                    estimation_input: output.estimation_input,
                    rate: output.rate,
                },
            )?;
            write_json(
                &dir.join("battery.json"),
                &BatteryReport {
                    config: &config,
                    bits: output.final_bits.len() as u64,
                    passed: output.passed(),
                    tests: &output.battery,
                },
            )?;
            emit(&output.summary(&config), Some(&dir.join("summary.json")))?;
            if !output.passed() {
                return Ok(Outcome::BatteryFailed);
            }
        }
    }
    Ok(Outcome::Success)
}

/// Prints `value` as JSON and optionally writes the same text to `path`.
fn emit<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), Error> {
    if let Some(path) = path {
        prepare_parent(path)?;
        write_json(path, value)?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    print_stdout(&text)
}

/// Writes to stdout, treating a closed pipe as success.
fn print_stdout(text: &str) -> Result<(), Error> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn output_path(config: &RunConfig, name: &str) -> PathBuf {
    config
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("siqrng-out"))
        .join(name)
}

fn prepare_parent(path: &Path) -> Result<(), Error> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => create_dir(dir),
        _ => Ok(()),
    }
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", dir.display()),
        ))
    })
}
