use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hsi_deconv::bench::{run_benchmark, summary_csv};
use hsi_deconv::config::RunConfig;
use hsi_deconv::degradation::{degrade, make_kernel, KernelSpec, NoiseSpec};
use hsi_deconv::denoiser::{smooth_cube, train_b3ddn, B3ddn, BaselineDenoiser, Denoiser};
use hsi_deconv::io::{
    read_cube, read_kernels, read_weights, write_cube, write_kernels, write_weights, DType,
};
use hsi_deconv::metrics::{evaluate, MetricReport};
use hsi_deconv::solver::deconvolve;
use hsi_deconv::{Error, Result};

#[derive(Parser)]
#[command(
    name = "hsi-deconv",
    version,
    about = "Plug-and-play ADMM deconvolution of hyperspectral cubes"
)]
struct Cli {
    /// Worker threads (0 = all cores, 1 = single-threaded).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a benchmark blur kernel to a PSF1 file.
    MakeKernel {
        #[arg(long)]
        kernel_spec: KernelSpec,
        #[arg(long)]
        output: PathBuf,
    },
    /// Write a synthetic smooth cube.
    Synth {
        #[arg(long, default_value = "8x32x32")]
        shape: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        dtype: DtypeArg,
    },
    /// Blur a cube and add seeded Gaussian noise.
    Degrade {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        dtype: DtypeArg,
    },
    /// Restore a blurred, noisy cube.
    Deconvolve {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        denoiser: DenoiserArgs,
        /// Per-iteration CSV trace.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        zeta: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Penalty search bracket as `a,b`.
        #[arg(long)]
        bracket: Option<String>,
        #[command(flatten)]
        dtype: DtypeArg,
    },
    /// Apply a denoiser once.
    Denoise {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        denoiser: DenoiserArgs,
        #[command(flatten)]
        dtype: DtypeArg,
    },
    /// Train the 3D CNN denoiser.
    Train {
        /// Training cubes. Without any, smooth synthetic cubes are used.
        #[arg(long)]
        input: Vec<PathBuf>,
        /// Weights file to write.
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Loss curve CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Print `rmse,psnr,ssim,ergas` for a test cube against a reference.
    Metrics {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Also print the header line.
        #[arg(long)]
        header: bool,
    },
    /// Run the scenario grid and write a summary CSV.
    Benchmark {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        denoiser: DenoiserArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct KernelArgs {
    /// PSF1 kernel file.
    #[arg(long, conflicts_with = "kernel_spec")]
    kernel: Option<PathBuf>,
    /// Kernel spec such as `gaussian:9:2`.
    #[arg(long)]
    kernel_spec: Option<KernelSpec>,
}

#[derive(Args)]
struct DenoiserArgs {
    /// B3W1 weights. Without them the spectral baseline denoiser is used.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    strength: Option<f64>,
}

#[derive(Args)]
struct DtypeArg {
    /// Store output samples as 32-bit floats.
    #[arg(long)]
    f32: bool,
}

impl DtypeArg {
    fn get(&self) -> DType {
        if self.f32 {
            DType::F32
        } else {
            DType::F64
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::parse(&fs::read_to_string(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn load_kernel(args: &KernelArgs, cfg: &RunConfig) -> Result<hsi_deconv::KernelStack> {
    match (&args.kernel, &args.kernel_spec) {
        (Some(p), _) => read_kernels(p),
        (None, Some(s)) => make_kernel(s),
        (None, None) => make_kernel(&cfg.kernel),
    }
}

fn load_denoiser(args: &DenoiserArgs, cfg: &RunConfig) -> Result<Box<dyn Denoiser>> {
    Ok(match &args.weights {
        Some(p) => Box::new(B3ddn::new(read_weights(p)?)?),
        None => Box::new(BaselineDenoiser {
            strength: args.strength.unwrap_or(cfg.strength),
        }),
    })
}

fn parse_shape(s: &str) -> Result<(usize, usize, usize)> {
    let v: Vec<usize> = s
        .split('x')
        .map(|t| t.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("invalid shape '{s}', expected NxPxQ")))?;
    match v[..] {
        [n, p, q] => Ok((n, p, q)),
        _ => Err(Error::Config(format!(
            "invalid shape '{s}', expected NxPxQ"
        ))),
    }
}

fn parse_bracket(s: &str) -> Result<(f64, f64)> {
    let bad = || Error::Config(format!("invalid bracket '{s}', expected a,b"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok((
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ))
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::MakeKernel {
            kernel_spec,
            output,
        } => write_kernels(&make_kernel(&kernel_spec)?, output),
        Command::Synth {
            shape,
            seed,
            output,
            dtype,
        } => {
            let (n, p, q) = parse_shape(&shape)?;
            if n * p * q == 0 {
                return Err(Error::Config("shape must be non-empty".into()));
            }
            write_cube(&smooth_cube(n, p, q, seed), output, dtype.get())
        }
        Command::Degrade {
            input,
            output,
            kernel,
            sigma,
            seed,
            config,
            dtype,
        } => {
            let cfg = load_config(config.as_deref())?;
            let x = read_cube(input)?;
            let k = load_kernel(&kernel, &cfg)?;
            let noise = NoiseSpec {
                sigma: sigma.unwrap_or(cfg.noise.sigma),
                seed: seed.unwrap_or(cfg.noise.seed),
            };
            write_cube(&degrade(&x, &k, &noise)?, output, dtype.get())
        }
        Command::Deconvolve {
            input,
            output,
            kernel,
            denoiser,
            trace,
            config,
            max_iters,
            zeta,
            epsilon,
            bracket,
            dtype,
        } => {
            let cfg = load_config(config.as_deref())?;
            let mut opts = cfg.solver.clone();
            if let Some(v) = max_iters {
                opts.max_iters = v;
            }
            if let Some(v) = zeta {
                opts.zeta = v;
            }
            if let Some(v) = epsilon {
                opts.epsilon = v;
            }
            if let Some(s) = bracket {
                (opts.bracket_a, opts.bracket_b) = parse_bracket(&s)?;
            }
            let y = read_cube(input)?;
            let k = load_kernel(&kernel, &cfg)?;
            let d = load_denoiser(&denoiser, &cfg)?;
            let (x, state) = deconvolve(&y, &k, d.as_ref(), &opts)?;
            write_cube(&x, output, dtype.get())?;
            if let Some(t) = trace {
                fs::write(t, state.to_csv())?;
            }
            Ok(())
        }
        Command::Denoise {
            input,
            output,
            denoiser,
            dtype,
        } => {
            let cfg = RunConfig::default();
            let z = read_cube(input)?;
            let d = load_denoiser(&denoiser, &cfg)?;
            write_cube(&d.denoise(&z)?, output, dtype.get())
        }
        Command::Train {
            input,
            output,
            config,
            seed,
            trace,
        } => {
            let cfg = load_config(config.as_deref())?;
            let mut opts = cfg.train.clone();
            if let Some(s) = seed {
                opts.seed = s;
            }
            let dataset = if input.is_empty() {
                let (n, p, q) = (
                    opts.patch_bands * 2,
                    opts.patch_size * 2,
                    opts.patch_size * 2,
                );
                (0..4)
                    .map(|i| smooth_cube(n, p, q, opts.seed + i))
                    .collect()
            } else {
                input.iter().map(read_cube).collect::<Result<Vec<_>>>()?
            };
            let (weights, report) = train_b3ddn(&dataset, &opts)?;
            write_weights(&weights, output)?;
            if let Some(t) = trace {
                fs::write(t, report.to_csv(10))?;
            }
            Ok(())
        }
        Command::Metrics {
            reference,
            test,
            header,
        } => {
            let x = read_cube(reference)?;
            let x_hat = read_cube(test)?;
            let r = evaluate(&x_hat, &x)?;
            if header {
                println!("{}", MetricReport::CSV_HEADER);
            }
            println!("{}", r.to_csv_row());
            Ok(())
        }
        Command::Benchmark {
            config,
            output,
            denoiser,
            seed,
        } => {
            let cfg = load_config(config.as_deref())?;
            let d = load_denoiser(&denoiser, &cfg)?;
            let cells = run_benchmark(&cfg.bench, seed, &cfg.solver, d.as_ref())?;
            fs::write(output, summary_csv(&cells, &cfg.bench.scenarios))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            eprintln!("{}", msg.lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(2);
        }
    };
    let result = if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build()
            .map_err(|e| Error::Config(e.to_string()))
            .and_then(|pool| pool.install(|| run(cli.command)))
    } else {
        run(cli.command)
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
