//! `tvl1flow` command-line front end.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use tvl1flow::filters::{iterated_median, median_filter};
use tvl1flow::image_ops::{add_gaussian_noise, add_salt_pepper_noise, psnr};
use tvl1flow::io::{self, InputRecord, RunManifest, RunMetrics};
use tvl1flow::metrics::{evaluate, is_known, mean_flow_cosine};
use tvl1flow::synth::{make_ball_sequence, BallSpec};
use tvl1flow::{estimate_flow, FlowField, ScalarField, SolverConfig, ValidMask};

#[derive(Debug, Parser)]
#[command(
    name = "tvl1flow",
    version,
    about = "TV-L1 optical flow with iterated median filtering"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the flow from FRAME1 to FRAME2.
    Estimate {
        frame1: PathBuf,
        frame2: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Also write a color rendering of the flow.
        #[arg(long)]
        viz: Option<PathBuf>,
        /// Flat key=value file with solver settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one setting, e.g. `--param warps_per_level=5`.
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
        /// Ground truth to score the result against in the manifest.
        #[arg(long)]
        gt: Option<PathBuf>,
    },
    /// Print AAE and EPE of a computed flow against ground truth.
    Evaluate {
        computed: PathBuf,
        groundtruth: PathBuf,
        #[arg(long)]
        json: bool,
        /// Also print the mean cosine between flow vectors (diagnostic).
        #[arg(long)]
        printed_aae: bool,
    },
    /// Write a synthetic translating-disc sequence.
    Synth {
        #[arg(long, default_value_t = 200)]
        size: usize,
        #[arg(long, default_value_t = 100.0)]
        radius: f64,
        #[arg(long, default_value_t = 4.0)]
        shift: f64,
        /// Put the disc at the image centre instead of the top-left corner.
        #[arg(long)]
        centered: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Corrupt an image with noise and filter it.
    Denoise {
        image: PathBuf,
        /// `gaussian:VARIANCE` or `saltpepper:DENSITY`.
        #[arg(long)]
        noise: NoiseSpec,
        #[arg(long, value_enum)]
        mode: DenoiseMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
        /// Print PSNR of the noisy and filtered images against the input.
        #[arg(long)]
        report: bool,
    },
    /// Render a .flo file with the Middlebury color wheel.
    Visualize {
        flow: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Magnitude mapped to full saturation (default: 99th percentile).
        #[arg(long)]
        max_magnitude: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DenoiseMode {
    Median,
    Iterated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum NoiseSpec {
    Gaussian(f64),
    SaltPepper(f64),
}

impl std::str::FromStr for NoiseSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| format!("expected KIND:VALUE, got `{s}`"))?;
        let value: f64 = value
            .parse()
            .map_err(|_| format!("`{value}` is not a number"))?;
        match kind {
            "gaussian" => Ok(NoiseSpec::Gaussian(value)),
            "saltpepper" | "salt-pepper" => Ok(NoiseSpec::SaltPepper(value)),
            _ => Err(format!("unknown noise kind `{kind}`")),
        }
    }
}

/// A failed command and the exit status it maps to.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    const USAGE: u8 = 1;
    const IO: u8 = 2;
    const NUMERICAL: u8 = 3;

    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: Self::USAGE,
            message: message.into(),
        }
    }

    fn io(path: &Path, err: impl fmt::Display) -> Self {
        Self {
            code: Self::IO,
            message: format!("{}: {err}", path.display()),
        }
    }
}

impl From<tvl1flow::Error> for Failure {
    fn from(err: tvl1flow::Error) -> Self {
        use tvl1flow::Error as E;
        let code = match err {
            E::Io { .. } | E::Format { .. } => Failure::IO,
            E::NonFinite { .. } => Failure::NUMERICAL,
            _ => Failure::USAGE,
        };
        Self {
            code,
            message: err.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) if !err.use_stderr() => {
            let _ = err.print();
            return ExitCode::SUCCESS;
        }
        Err(err) => {
            let text = err.to_string();
            let head = text.split("\n\n").next().unwrap_or("invalid arguments");
            let line = head.split_whitespace().collect::<Vec<_>>().join(" ");
            eprintln!("tvl1flow: {}", line.trim_start_matches("error: "));
            return ExitCode::from(Failure::USAGE);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("tvl1flow: {}", f.message.lines().next().unwrap_or(""));
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> CmdResult {
    match command {
        Command::Estimate {
            frame1,
            frame2,
            output,
            viz,
            config,
            params,
            gt,
        } => estimate(
            &frame1,
            &frame2,
            &output,
            viz.as_deref(),
            config.as_deref(),
            &params,
            gt.as_deref(),
        ),
        Command::Evaluate {
            computed,
            groundtruth,
            json,
            printed_aae,
        } => evaluate_cmd(&computed, &groundtruth, json, printed_aae),
        Command::Synth {
            size,
            radius,
            shift,
            centered,
            output,
        } => synth(
            BallSpec::new(size, radius, shift, 1.0, 0.0).centered(centered),
            &output,
        ),
        Command::Denoise {
            image,
            noise,
            mode,
            seed,
            output,
            report,
        } => denoise(&image, noise, mode, seed, &output, report),
        Command::Visualize {
            flow,
            output,
            max_magnitude,
        } => visualize(&flow, &output, max_magnitude),
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::io(path, e))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn load_config(file: Option<&Path>, params: &[String]) -> Result<SolverConfig, Failure> {
    let mut cfg = SolverConfig::default();
    if let Some(path) = file {
        let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        cfg.apply_kv_text(&text)
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    }
    for p in params {
        cfg.apply_assignment(p)
            .map_err(|e| Failure::usage(format!("--param {p}: {e}")))?;
    }
    Ok(cfg)
}

fn ensure_finite(flow: &FlowField) -> CmdResult {
    let bad = flow
        .u1()
        .as_slice()
        .iter()
        .chain(flow.u2().as_slice())
        .position(|v| !v.is_finite());
    match bad {
        Some(i) => Err(Failure {
            code: Failure::NUMERICAL,
            message: format!("computed flow is not finite (value {i}); nothing written"),
        }),
        None => Ok(()),
    }
}

fn manifest_path(output: &Path) -> PathBuf {
    output.with_extension("manifest.json")
}

fn estimate(
    frame1: &Path,
    frame2: &Path,
    output: &Path,
    viz: Option<&Path>,
    config: Option<&Path>,
    params: &[String],
    gt: Option<&Path>,
) -> CmdResult {
    let cfg = load_config(config, params)?;
    let mut timings = BTreeMap::new();
    let start = Instant::now();

    let mut inputs = Vec::new();
    for path in [Some(frame1), Some(frame2), config, gt]
        .into_iter()
        .flatten()
    {
        inputs.push(InputRecord {
            path: path.display().to_string(),
            sha256: sha256_hex(&read_bytes(path)?),
        });
    }
    let f1 = io::read_image(frame1)?;
    let f2 = io::read_image(frame2)?;
    if f1.dims() != f2.dims() {
        return Err(Failure::usage(format!(
            "frame sizes differ: {:?} vs {:?}",
            f1.dims(),
            f2.dims()
        )));
    }
    let exact = gt.map(io::read_flo).transpose()?;
    timings.insert("read".to_string(), start.elapsed().as_secs_f64());

    let t = Instant::now();
    let result = estimate_flow(&f1, &f2, &cfg)?;
    timings.insert("estimate".to_string(), t.elapsed().as_secs_f64());
    ensure_finite(&result.flow)?;

    let metrics = match &exact {
        Some(exact) => {
            let mask = ValidMask::known(exact);
            let report = evaluate(&result.flow, exact, Some(&mask))?;
            Some(RunMetrics {
                aae_degrees: report.aae_degrees,
                epe_pixels: report.epe_pixels,
            })
        }
        None => None,
    };

    let manifest_file = manifest_path(output);
    let mut outputs = vec![output.display().to_string()];
    io::write_flo(output, &result.flow)?;
    if let Some(viz) = viz {
        io::flow_to_color(&result.flow, None)
            .save(viz)
            .map_err(|e| Failure::io(viz, e))?;
        outputs.push(viz.display().to_string());
    }
    outputs.push(manifest_file.display().to_string());
    timings.insert("total".to_string(), start.elapsed().as_secs_f64());

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: std::env::args().collect::<Vec<_>>().join(" "),
        config: cfg,
        inputs,
        outputs,
        seeds: Vec::new(),
        traces: result.traces,
        metrics,
        timings,
    };
    let text =
        serde_json::to_string_pretty(&manifest).map_err(|e| Failure::io(&manifest_file, e))?;
    fs::write(&manifest_file, text).map_err(|e| Failure::io(&manifest_file, e))?;
    if let Some(m) = metrics {
        println!("AAE {:.3} deg  EPE {:.3} px", m.aae_degrees, m.epe_pixels);
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalOutput {
    aae_degrees: f64,
    epe_pixels: f64,
    valid_pixels: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_flow_cosine: Option<f64>,
}

fn evaluate_cmd(computed: &Path, groundtruth: &Path, json: bool, printed_aae: bool) -> CmdResult {
    let c = io::read_flo(computed)?;
    let e = io::read_flo(groundtruth)?;
    if c.dims() != e.dims() {
        return Err(Failure::usage(format!(
            "flow sizes differ: {:?} vs {:?}",
            c.dims(),
            e.dims()
        )));
    }
    ensure_finite(&c)?;
    let mask = ValidMask::known(&e);
    let report = evaluate(&c, &e, Some(&mask))?;
    let cosine = if printed_aae {
        Some(mean_flow_cosine(&c, &e, Some(&mask))?)
    } else {
        None
    };
    let out = EvalOutput {
        aae_degrees: report.aae_degrees,
        epe_pixels: report.epe_pixels,
        valid_pixels: mask.count(),
        mean_flow_cosine: cosine,
    };
    if json {
        let text = serde_json::to_string(&out).map_err(|e| Failure::usage(e.to_string()))?;
        println!("{text}");
    } else {
        println!("AAE {:.3} deg", out.aae_degrees);
        println!("EPE {:.3} px", out.epe_pixels);
        if let Some(c) = cosine {
            println!("mean flow cosine {c:.6}");
        }
    }
    Ok(())
}

fn synth(spec: BallSpec, dir: &Path) -> CmdResult {
    let seq = make_ball_sequence(&spec)?;
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    io::write_png_gray(dir.join("frame1.png"), &seq.f1)?;
    io::write_png_gray(dir.join("frame2.png"), &seq.f2)?;
    io::write_flo(dir.join("gt.flo"), &seq.ground_truth)?;
    Ok(())
}

fn denoise(
    image: &Path,
    noise: NoiseSpec,
    mode: DenoiseMode,
    seed: u64,
    output: &Path,
    report: bool,
) -> CmdResult {
    let clean = io::read_image(image)?;
    let noisy = match noise {
        NoiseSpec::Gaussian(v) => add_gaussian_noise(&clean, v, seed)?,
        NoiseSpec::SaltPepper(d) => add_salt_pepper_noise(&clean, d, seed)?,
    };
    let filtered: ScalarField = match mode {
        DenoiseMode::Median => median_filter(&noisy, 5)?,
        DenoiseMode::Iterated => iterated_median(&noisy, 5, 3, 2.0)?,
    };
    io::write_png_gray(output, &filtered.map(|v| v.clamp(0.0, 1.0)))?;
    if report {
        println!("PSNR noisy {:.2} dB", psnr(&clean, &noisy)?);
        println!("PSNR filtered {:.2} dB", psnr(&clean, &filtered)?);
    }
    Ok(())
}

fn visualize(flow: &Path, output: &Path, max_magnitude: Option<f64>) -> CmdResult {
    let f = io::read_flo(flow)?;
    let (w, h) = f.dims();
    let known = FlowField::from_fn(w, h, |x, y| {
        let (a, b) = f.get(x, y);
        if is_known(a, b) {
            (a, b)
        } else {
            (0.0, 0.0)
        }
    });
    ensure_finite(&known)?;
    io::flow_to_color(&known, max_magnitude)
        .save(output)
        .map_err(|e| Failure::io(output, e))
}
