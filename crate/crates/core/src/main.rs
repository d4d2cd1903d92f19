use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mmssdu::container::{read_dataset, write_dataset};
use mmssdu::experiment::{
    checkpoint_from_container, checkpoint_to_container, compare_methods, evaluate_recons, generate_benchmark,
    recons_from_container, recons_to_container, reconstruct_case, run_sweep, write_report, write_table,
    BenchmarkConfig, BenchmarkData, Method, SweepAxis, SweepConfig,
};
use mmssdu::nn::ResNetArch;
use mmssdu::sampling::{MaskDistribution, UndersamplingSpec};
use mmssdu::solver::UnrollConfig;
use mmssdu::training::{train, write_training_log, TrainConfig, TrainMode};
use mmssdu::{Error, Result};

#[derive(Parser)]
#[command(name = "ssdu", version, about = "Multi-mask self-supervised unrolled MRI reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a seeded phantom train / test set.
    GenData {
        #[command(flatten)]
        gen: GenOpts,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model and write its checkpoint.
    Train {
        #[command(flatten)]
        opts: TrainOpts,
        #[arg(long, value_enum, default_value_t = ModeArg::Multimask)]
        mode: ModeArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Training-log CSV.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Fill the wall-time column of the log (makes it non-reproducible).
        #[arg(long)]
        log_wall_time: bool,
    },
    /// Reconstruct every test case of a dataset.
    Recon {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// NMSE / SSIM of reconstructions against the dataset ground truth.
    Eval {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        rec: PathBuf,
        #[arg(long)]
        csv: PathBuf,
    },
    /// Train and evaluate one model per value of K or rho.
    Sweep {
        #[arg(long, value_enum)]
        axis: AxisArg,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
        #[arg(long, value_enum, default_value_t = ModeArg::Ssdu)]
        mode: ModeArg,
        #[command(flatten)]
        opts: TrainOpts,
        #[command(flatten)]
        source: DataSource,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        csv: PathBuf,
    },
    /// Train and evaluate several methods on a shared test set.
    Compare {
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        methods: Vec<String>,
        #[command(flatten)]
        opts: TrainOpts,
        #[command(flatten)]
        source: DataSource,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        csv: PathBuf,
    },
}

#[derive(Args, Clone)]
struct GenOpts {
    #[arg(long, default_value_t = 64)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    coils: usize,
    #[arg(long, default_value_t = 20)]
    train: usize,
    #[arg(long, default_value_t = 8)]
    test: usize,
    #[arg(long, default_value_t = 4)]
    r: usize,
    #[arg(long, default_value_t = 8)]
    acs: usize,
    #[arg(long, default_value_t = 1)]
    shear: i64,
    #[arg(long, default_value_t = 0.01)]
    sigma: f64,
}

impl GenOpts {
    fn config(&self, seed: u64) -> Result<BenchmarkConfig> {
        let spec = UndersamplingSpec::for_rate(self.r, self.shear, self.acs)?;
        Ok(BenchmarkConfig {
            n: self.n,
            coils: self.coils,
            ntrain: self.train,
            ntest: self.test,
            r_y: spec.r_y,
            r_z: spec.r_z,
            shear: self.shear,
            acs: self.acs,
            sigma: self.sigma,
            seed,
        })
    }
}

#[derive(Args, Clone)]
struct DataSource {
    /// Dataset file; generated from the options below when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    gen: GenOpts,
}

#[derive(Args, Clone)]
struct TrainOpts {
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0.4)]
    rho: f64,
    #[arg(long, value_enum, default_value_t = DistArg::Uniform)]
    dist: DistArg,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 5e-4)]
    lr: f64,
    #[arg(long, default_value_t = 5)]
    t_unroll: usize,
    #[arg(long, default_value_t = 10)]
    cg_iters: usize,
    #[arg(long, default_value_t = 16)]
    channels: usize,
    #[arg(long, default_value_t = 3)]
    blocks: usize,
    #[arg(long, default_value_t = 0.05)]
    mu: f64,
    #[arg(long)]
    fixed_mu: bool,
    #[arg(long)]
    regenerate_masks: bool,
}

impl TrainOpts {
    fn config(&self, mode: TrainMode, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            mode,
            k: self.k,
            rho: self.rho,
            dist: match self.dist {
                DistArg::Uniform => MaskDistribution::UniformRandom,
                DistArg::Gaussian => MaskDistribution::gaussian(),
            },
            unroll: UnrollConfig {
                t_unroll: self.t_unroll,
                cg_iters: self.cg_iters,
                mu_init: self.mu,
                mu_trainable: !self.fixed_mu,
                ..UnrollConfig::default()
            },
            arch: ResNetArch { channels: self.channels, blocks: self.blocks },
            seed,
            regenerate_masks: self.regenerate_masks,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Supervised,
    Ssdu,
    Multimask,
    Cyclic,
}

impl From<ModeArg> for TrainMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Supervised => TrainMode::Supervised,
            ModeArg::Ssdu => TrainMode::Ssdu,
            ModeArg::Multimask => TrainMode::MultiMask,
            ModeArg::Cyclic => TrainMode::CyclicMultiMask,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DistArg {
    Uniform,
    Gaussian,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    K,
    Rho,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn load_data(path: &Path) -> Result<BenchmarkData> {
    BenchmarkData::from_container(&read_dataset(path)?)
}

fn source_data(source: &DataSource, seed: u64) -> Result<BenchmarkData> {
    match &source.data {
        Some(p) => load_data(p),
        None => generate_benchmark(&source.gen.config(seed)?),
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData { gen, seed, out } => {
            let data = generate_benchmark(&gen.config(seed)?)?;
            write_dataset(&out, &data.to_container()?)
        }
        Command::Train { opts, mode, seed, data, out, log, log_wall_time } => {
            let data = load_data(&data)?;
            let cfg = opts.config(mode.into(), seed);
            let outcome = train(&data.training_samples()?, &cfg)?;
            write_dataset(&out, &checkpoint_to_container(&outcome.params, &cfg.unroll)?)?;
            if let Some(path) = log {
                write_training_log(create(&path)?, &outcome.log, log_wall_time)?;
            }
            Ok(())
        }
        Command::Recon { ckpt, data, out } => {
            let (params, unroll) = checkpoint_from_container(&read_dataset(&ckpt)?)?;
            let data = load_data(&data)?;
            let recons = data
                .test
                .iter()
                .map(|c| reconstruct_case(&c.y_omega, &data.coils, &params, &unroll))
                .collect::<Result<Vec<_>>>()?;
            write_dataset(&out, &recons_to_container(&recons)?)
        }
        Command::Eval { reference, rec, csv } => {
            let data = load_data(&reference)?;
            let recons = recons_from_container(&read_dataset(&rec)?)?;
            let report = evaluate_recons(&data, &recons)?;
            write_report(create(&csv)?, &report)
        }
        Command::Sweep { axis, values, mode, opts, source, seed, csv } => {
            let data = source_data(&source, seed)?;
            let cfg = SweepConfig {
                axis: match axis {
                    AxisArg::K => SweepAxis::K,
                    AxisArg::Rho => SweepAxis::Rho,
                },
                values,
                base: opts.config(mode.into(), seed),
            };
            let entries = run_sweep(&data, &cfg)?;
            let label = match axis {
                AxisArg::K => "K",
                AxisArg::Rho => "rho",
            };
            write_table(create(&csv)?, label, &entries)
        }
        Command::Compare { methods, opts, source, seed, csv } => {
            let methods = methods.iter().map(|m| m.parse::<Method>()).collect::<Result<Vec<_>>>()?;
            let data = source_data(&source, seed)?;
            let base = opts.config(TrainMode::MultiMask, seed);
            write_table(create(&csv)?, "method", &compare_methods(&data, &methods, &base))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Mode(_) => 1,
        Error::Numerical { .. } | Error::Training { .. } | Error::Graph(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
