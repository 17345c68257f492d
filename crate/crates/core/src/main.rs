use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use coded_batch::analytic::asymptotic_ejct;
use coded_batch::experiments::record::{self, SweepRecord};
use coded_batch::experiments::{run_config, run_path_battery, run_preset, OutputFormat, Preset};
use coded_batch::optimizer::{
    evaluate, optimize_batch, optimize_joint, recommend_strategy, OptimizationReport, SimOptions,
};
use coded_batch::simulator::{DEFAULT_SAMPLES, DEFAULT_SEED};
use coded_batch::{Error, Method, Policy, Result, ServiceModel, SystemSpec};

#[derive(Parser)]
#[command(
    name = "coded-batch",
    version,
    about = "Batch size and code rate optimization for coded distributed jobs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo estimate for one policy
    Simulate(Common),
    /// Large-n closed form for one policy (shifted exponential, k < n)
    Analytic(Common),
    /// Exact finite-n quadrature for one policy (shifted exponential)
    Quadrature(Common),
    /// Best batch size at fixed k
    OptimizeBatch {
        #[command(flatten)]
        common: Common,
        /// Compare only b = 1 and b = s
        #[arg(long)]
        restricted: bool,
    },
    /// Best (k, b) over all feasible policies
    OptimizeJoint(Common),
    /// Replication vs splitting vs coding
    Recommend(Common),
    /// Run a JSON experiment config
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Run a named scenario (fig2a..fig2c, fig3a..fig3d, table_rprime)
    Preset {
        name: String,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: u64,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Sample-path inequality battery on random CU matrices
    Check {
        #[arg(long, default_value_t = 1000)]
        matrices: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    n: u64,
    #[arg(long = "job-size")]
    job_size: u64,
    #[arg(long)]
    k: Option<u64>,
    #[arg(long)]
    b: Option<u64>,
    /// shifted_exponential or bimodal
    #[arg(long, default_value = "shifted_exponential")]
    model: String,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    w: f64,
    #[arg(long = "t-fast")]
    t_fast: Option<f64>,
    #[arg(long = "t-slow")]
    t_slow: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: u64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    estimator: Option<String>,
    #[command(flatten)]
    out: OutputArgs,
}

impl Common {
    fn spec(&self) -> Result<SystemSpec> {
        SystemSpec::new(self.n, self.job_size)
    }

    fn model(&self) -> Result<ServiceModel> {
        match self.model.as_str() {
            "shifted_exponential" => ServiceModel::shifted_exponential(self.delta, self.w),
            "bimodal" => {
                let need = |v: Option<f64>, flag: &str| {
                    v.ok_or_else(|| Error::invalid(flag, "required for the bimodal model"))
                };
                ServiceModel::bimodal(
                    need(self.t_fast, "t-fast")?,
                    need(self.t_slow, "t-slow")?,
                    need(self.eps, "eps")?,
                )
            }
            other => Err(Error::invalid(
                "model",
                format!("expected shifted_exponential or bimodal, got `{other}`"),
            )),
        }
    }

    fn k(&self) -> Result<u64> {
        self.k.ok_or_else(|| Error::invalid("k", "required"))
    }

    fn policy(&self, spec: &SystemSpec) -> Result<Policy> {
        let b = self.b.ok_or_else(|| Error::invalid("b", "required"))?;
        Policy::new(spec, self.k()?, b)
    }

    fn sim(&self) -> SimOptions {
        SimOptions {
            samples: self.samples,
            seed: self.seed,
        }
    }

    fn estimator(&self, default: Method) -> Result<Method> {
        self.estimator.as_deref().map_or(Ok(default), str::parse)
    }
}

impl OutputArgs {
    fn format(&self, default: OutputFormat) -> Result<OutputFormat> {
        self.format.as_deref().map_or(Ok(default), str::parse)
    }

    fn write(&self, bytes: &[u8]) -> Result<()> {
        match &self.out {
            Some(path) => record::write_atomic(path, bytes),
            None => std::io::stdout()
                .write_all(bytes)
                .map_err(|source| Error::Io {
                    path: "<stdout>".into(),
                    source,
                }),
        }
    }

    /// JSON of `value`, or the CSV rendering of `records` with `--format csv`.
    fn emit<T: Serialize>(&self, value: &T, records: &[SweepRecord]) -> Result<()> {
        let bytes = match self.format(OutputFormat::Json)? {
            OutputFormat::Json => {
                let mut v = serde_json::to_vec_pretty(value)?;
                v.push(b'\n');
                v
            }
            OutputFormat::Csv => record::to_csv(records)?,
        };
        self.write(&bytes)
    }
}

fn report_records(
    id: &str,
    spec: &SystemSpec,
    model: &ServiceModel,
    report: &OptimizationReport,
    seed: u64,
) -> Vec<SweepRecord> {
    report
        .table
        .iter()
        .map(|c| SweepRecord::new(id, spec, &c.policy, model, &c.estimate, seed))
        .collect()
}

fn single(c: &Common, estimator: Method) -> Result<()> {
    let spec = c.spec()?;
    let model = c.model()?;
    let policy = c.policy(&spec)?;
    let estimate = evaluate(&spec, &policy, &model, estimator, &c.sim())?;
    let rec = SweepRecord::new("cli", &spec, &policy, &model, &estimate, c.seed);
    c.out.emit(&estimate, &[rec])
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(c) => single(&c, Method::MonteCarlo),
        Command::Quadrature(c) => single(&c, Method::Quadrature),
        Command::Analytic(c) => {
            let spec = c.spec()?;
            let model = c.model()?;
            let policy = c.policy(&spec)?;
            let result = asymptotic_ejct(&model, spec.l(), policy.r(), policy.b)?;
            let estimate = evaluate(&spec, &policy, &model, Method::Asymptotic, &c.sim())?;
            let rec = SweepRecord::new("cli", &spec, &policy, &model, &estimate, c.seed);
            c.out.emit(&result, &[rec])
        }
        Command::OptimizeBatch {
            common: c,
            restricted,
        } => {
            let spec = c.spec()?;
            let model = c.model()?;
            let report = optimize_batch(
                &spec,
                &model,
                c.k()?,
                c.estimator(Method::Quadrature)?,
                restricted,
                &c.sim(),
            )?;
            c.out.emit(
                &report,
                &report_records("cli", &spec, &model, &report, c.seed),
            )
        }
        Command::OptimizeJoint(c) => {
            let spec = c.spec()?;
            let model = c.model()?;
            let report = optimize_joint(&spec, &model, c.estimator(Method::Quadrature)?, &c.sim())?;
            c.out.emit(
                &report,
                &report_records("cli", &spec, &model, &report, c.seed),
            )
        }
        Command::Recommend(c) => {
            let spec = c.spec()?;
            let model = c.model()?;
            let report =
                recommend_strategy(&spec, &model, c.estimator(Method::Quadrature)?, &c.sim())?;
            let records: Vec<SweepRecord> = [
                report.replication_b1,
                report.coding_b1,
                report.splitting_bmax,
            ]
            .into_iter()
            .flatten()
            .map(|v| {
                SweepRecord::new(
                    v.strategy.as_str(),
                    &spec,
                    &v.policy,
                    &model,
                    &v.estimate,
                    c.seed,
                )
            })
            .collect();
            c.out.emit(&report, &records)
        }
        Command::Sweep { config, out } => {
            let records = run_config(&config)?;
            eprintln!("{} records", records.len());
            if out.out.is_some() || out.format.is_some() {
                out.write(&record::render(&records, out.format(OutputFormat::Csv)?)?)?;
            }
            Ok(())
        }
        Command::Preset {
            name,
            samples,
            seed,
            out,
        } => {
            let preset: Preset = name.parse()?;
            let outcome = run_preset(preset, &SimOptions { samples, seed })?;
            out.write(&record::render(
                &outcome.records,
                out.format(OutputFormat::Csv)?,
            )?)?;
            eprintln!("{preset}: {}", outcome.verdict);
            Ok(())
        }
        Command::Check { matrices, seed } => {
            let battery = run_path_battery(matrices, seed)?;
            println!("{}", serde_json::to_string_pretty(&battery)?);
            if battery.passed() {
                Ok(())
            } else {
                Err(Error::Numerical("sample-path inequality violated".into()))
            }
        }
    }
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
