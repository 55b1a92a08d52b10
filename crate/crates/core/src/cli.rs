//! Command-line front end. Exit codes: 0 ok, 2 usage, 3 I/O, 4 numeric
//! failure, 5 corrupt artifact.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, Parser, Subcommand};

use crate::cfpg::{self, CfpgError, CfpgParams, ConditionMeans, GuidanceMode, ToyDiffusionSpec};
use crate::config::CliConfig;
use crate::degrade::{
    generate_dataset, DatasetManifest, DegradeError, LevelSampling, MANIFEST_NAME,
};
use crate::encoder::{Checkpoint, EncoderError};
use crate::imageio;
use crate::infer::{self, InferError, TopK};
use crate::scene;
use crate::train::{self, Ablation, TrainError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_ARTIFACT: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "ordeg",
    version,
    about = "Degradation-aware ordinal representations and projection guidance"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render procedural clean images to use as a synthesis corpus.
    Scenes {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        count: u64,
        /// Image side in pixels.
        #[arg(long, default_value_t = 256)]
        size: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Crop, degrade and write a paired dataset with its manifest.
    Synth {
        /// Directory of clean images.
        #[arg(long)]
        input: PathBuf,
        /// Output directory for lq/, gt/ and the manifest.
        #[arg(long)]
        out: PathBuf,
        /// Number of records.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Fraction of records with more than one degradation type.
        #[arg(long)]
        mixture: Option<f64>,
        /// Square patch side in pixels.
        #[arg(long)]
        patch: Option<u32>,
        /// Draw levels from N evenly spaced values per type instead of a
        /// continuous range.
        #[arg(long, value_name = "N")]
        grid: Option<usize>,
        /// JSON config file; flags override its `dataset` section.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train an encoder and write a checkpoint plus a loss log.
    Train {
        /// JSON config file.
        #[arg(long)]
        config: PathBuf,
        /// Manifest file or the directory holding it.
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// Loss-term combination: A conf only, B +level, C +contrastive, D all.
        #[arg(long)]
        ablation: Option<Ablation>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Bin spacing on the 0-100 severity scale.
        #[arg(long)]
        gap: Option<f64>,
        /// Bins used by the level term: a count or "all".
        #[arg(long)]
        top_k: Option<TopK>,
        /// Loss log path [default: checkpoint path with .loss.csv].
        #[arg(long)]
        loss_csv: Option<PathBuf>,
    },
    /// Score a checkpoint on a labelled manifest.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// Manifest file or the directory holding it.
        #[arg(long)]
        data: PathBuf,
        /// Output JSON report.
        #[arg(long)]
        report: PathBuf,
        /// Also write the report as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        regression: RegressionArgs,
    },
    /// Detect degradations in one image and regress their levels.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Print the prediction as JSON on stdout.
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        regression: RegressionArgs,
    },
    /// Sample the two-dimensional toy diffusion with projection guidance.
    CfpgDemo {
        /// Scale on the deviation component along the textual estimate.
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        eta_par: f64,
        /// Scale on the orthogonal component.
        #[arg(long, default_value_t = 0.6, allow_negative_numbers = true)]
        eta_perp: f64,
        /// Guidance scale.
        #[arg(long, default_value_t = 5.5, allow_negative_numbers = true)]
        scale: f64,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// cfpg or linear_cfg (interpolation weight taken from --eta-par).
        #[arg(long, default_value = "cfpg")]
        mode: GuidanceMode,
        /// Trajectory CSV (step, x, y, mode).
        #[arg(long)]
        out: PathBuf,
        /// Also run linear_cfg and report the largest per-step deviation.
        #[arg(long)]
        compare: bool,
    },
}

#[derive(Debug, clap::Args)]
pub struct RegressionArgs {
    /// JSON config file; its `regression` section sets the defaults below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bins used for level interpolation: a count or "all".
    #[arg(long)]
    top_k: Option<TopK>,
    /// Presence threshold on the confidence.
    #[arg(long)]
    conf_threshold: Option<f64>,
    /// Softmax temperature of the interpolation weights.
    #[arg(long)]
    tau_w: Option<f64>,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, message)
    }
}

fn degrade_code(e: &DegradeError) -> i32 {
    match e {
        DegradeError::Io { .. } | DegradeError::EmptyCorpus(_) | DegradeError::Codec(_) => EXIT_IO,
        DegradeError::Manifest(_) => EXIT_ARTIFACT,
        _ => EXIT_USAGE,
    }
}

fn encoder_code(e: &EncoderError) -> i32 {
    match e {
        EncoderError::InvalidCheckpoint(_)
        | EncoderError::ShapeMismatch(_)
        | EncoderError::NonFinite => EXIT_ARTIFACT,
        EncoderError::Io { .. } => EXIT_IO,
        EncoderError::Image(d) => degrade_code(d),
        EncoderError::OrdSpace(_) => EXIT_ARTIFACT,
        EncoderError::ImageTooSmall { .. } => EXIT_USAGE,
    }
}

impl From<DegradeError> for Failure {
    fn from(e: DegradeError) -> Self {
        Failure::new(degrade_code(&e), e.to_string())
    }
}

impl From<EncoderError> for Failure {
    fn from(e: EncoderError) -> Self {
        Failure::new(encoder_code(&e), e.to_string())
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        let code = match &e {
            TrainError::NonFiniteLoss { .. } | TrainError::Numerics(_) => EXIT_NUMERIC,
            TrainError::Encoder(x) => encoder_code(x),
            TrainError::Degrade(x) => degrade_code(x),
            TrainError::Io(_) | TrainError::Csv(_) => EXIT_IO,
            _ => EXIT_USAGE,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<InferError> for Failure {
    fn from(e: InferError) -> Self {
        let code = match &e {
            InferError::Numerics(_) => EXIT_NUMERIC,
            InferError::Encoder(x) => encoder_code(x),
            InferError::Degrade(x) => degrade_code(x),
            InferError::OrdSpace(_) => EXIT_ARTIFACT,
            InferError::EmptyDataset | InferError::InvalidConfig(_) => EXIT_USAGE,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<CfpgError> for Failure {
    fn from(e: CfpgError) -> Self {
        let code = match &e {
            CfpgError::ZeroNorm | CfpgError::Numerics(_) | CfpgError::NonFinite => EXIT_NUMERIC,
            _ => EXIT_USAGE,
        };
        Failure::new(code, e.to_string())
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::new(EXIT_IO, format!("{}: {e}", path.display()))
}

fn load_config(path: Option<&Path>, command: &str) -> Result<CliConfig, Failure> {
    let cfg = match path {
        Some(p) => CliConfig::load(p).map_err(|m| {
            let mut cli = Cli::command();
            let usage = cli
                .find_subcommand_mut(command)
                .map(|c| c.render_usage().to_string())
                .unwrap_or_default();
            Failure::usage(format!("{m}\n\n{usage}"))
        })?,
        None => CliConfig::default(),
    };
    Ok(cfg)
}

fn manifest_path(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join(MANIFEST_NAME)
    } else {
        data.to_path_buf()
    }
}

fn read_manifest(data: &Path) -> Result<DatasetManifest, Failure> {
    Ok(DatasetManifest::read(&manifest_path(data))?)
}

fn regression(args: &RegressionArgs, command: &str) -> Result<infer::RegressionConfig, Failure> {
    let mut r = load_config(args.config.as_deref(), command)?.regression;
    if let Some(k) = args.top_k {
        r.top_k = k;
    }
    if let Some(c) = args.conf_threshold {
        r.conf_threshold = c;
    }
    if let Some(t) = args.tau_w {
        r.tau_w = t;
    }
    Ok(r)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Failure> {
    Ok(Checkpoint::load(path)?)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_failure(path, e))
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    match cmd {
        Command::Scenes {
            out: dir,
            count,
            size,
            seed,
        } => {
            if size < 64 {
                return Err(Failure::usage("--size must be at least 64"));
            }
            for i in 0..count {
                let img = scene::render(seed.wrapping_add(i), size, size);
                imageio::save_png(&img, &dir.join(format!("scene_{i:04}.png")))?;
            }
            let _ = writeln!(out, "{count}");
        }
        Command::Synth {
            input,
            out: dir,
            count,
            seed,
            mixture,
            patch,
            grid,
            config,
        } => {
            let mut cfg = load_config(config.as_deref(), "synth")?;
            let d = &mut cfg.dataset;
            if let Some(c) = count {
                d.count = c;
            }
            if let Some(s) = seed {
                d.seed = s;
            }
            if let Some(m) = mixture {
                d.mixture_ratio = m;
            }
            if let Some(p) = patch {
                d.patch_size = p;
            }
            if let Some(n) = grid {
                if n < 2 {
                    return Err(Failure::usage("--grid needs at least 2 levels"));
                }
                d.levels = LevelSampling::even_grid(n);
            }
            d.validate()?;
            let m = generate_dataset(&input, &dir, d)?;
            let _ = writeln!(out, "{}", m.len());
        }
        Command::Train {
            config,
            data,
            out: ckpt_path,
            ablation,
            epochs,
            seed,
            gap,
            top_k,
            loss_csv,
        } => {
            let mut cfg = load_config(Some(&config), "train")?;
            let t = &mut cfg.train;
            if let Some(a) = ablation {
                (t.use_level, t.use_scl) = a.toggles();
            }
            if let Some(e) = epochs {
                t.epochs = e;
            }
            if let Some(s) = seed {
                t.seed = s;
            }
            if let Some(g) = gap {
                t.gap = g;
            }
            if let Some(k) = top_k {
                t.top_k = k;
            }
            cfg.validate().map_err(Failure::usage)?;
            let manifest = read_manifest(&data)?;
            let outcome = train::train(&cfg.train, &manifest)?;
            outcome.checkpoint.save(&ckpt_path)?;
            let loss_path = loss_csv.unwrap_or_else(|| ckpt_path.with_extension("loss.csv"));
            train::save_loss_csv(&outcome.log, &loss_path)?;
            if let Some(last) = outcome.log.last() {
                let _ = writeln!(
                    err,
                    "epoch {}: conf {:.5} level {:.5} scl {:.5} total {:.5}",
                    last.epoch, last.conf, last.level, last.scl, last.total
                );
            }
        }
        Command::Eval {
            ckpt,
            data,
            report,
            csv,
            regression: r,
        } => {
            let reg = regression(&r, "eval")?;
            let ckpt = load_checkpoint(&ckpt)?;
            let manifest = read_manifest(&data)?;
            let m = infer::evaluate(&ckpt, &manifest, &reg)?;
            write_file(&report, m.to_json().as_bytes())?;
            if let Some(p) = csv {
                let mut buf = Vec::new();
                m.write_csv(&mut buf).map_err(|e| io_failure(&p, e))?;
                write_file(&p, &buf)?;
            }
            let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
            let _ = writeln!(
                err,
                "type_acc {:.2}% mae {:.4} mae_norm {:.4} srocc {} pcc {}",
                m.type_acc,
                m.mae,
                m.mae_norm,
                fmt(m.srocc),
                fmt(m.pcc)
            );
        }
        Command::Predict {
            ckpt,
            image,
            json,
            regression: r,
        } => {
            let reg = regression(&r, "predict")?;
            let ckpt = load_checkpoint(&ckpt)?;
            let img = imageio::load_rgb(&image)?;
            let p = infer::predict(&ckpt, &img, &reg)?;
            if json {
                let _ = writeln!(
                    out,
                    "{}",
                    serde_json::to_string(&p).expect("prediction serializes")
                );
            } else {
                for (t, tp) in &p.0 {
                    let level = tp
                        .level_raw
                        .map_or(String::from("-"), |l| format!("{l:.3}"));
                    let _ = writeln!(out, "{:<10} conf {:.3}  level {level}", t.name(), tp.conf);
                }
            }
        }
        Command::CfpgDemo {
            eta_par,
            eta_perp,
            scale,
            steps,
            seed,
            mode,
            out: csv_path,
            compare,
        } => {
            let params = CfpgParams {
                eta_par,
                eta_perp,
                w: scale,
            };
            let spec = ToyDiffusionSpec::cosine(ConditionMeans::default(), steps, seed);
            let main = cfpg::sample(&spec, &params, mode)?;
            let mut runs = vec![(mode, &main)];
            let other;
            if compare {
                let m = match mode {
                    GuidanceMode::Cfpg => GuidanceMode::LinearCfg,
                    GuidanceMode::LinearCfg => GuidanceMode::Cfpg,
                };
                other = cfpg::sample(&spec, &params, m)?;
                runs.push((m, &other));
                let dev = main
                    .states
                    .iter()
                    .zip(&other.states)
                    .flat_map(|(a, b)| [(a[0] - b[0]).abs(), (a[1] - b[1]).abs()])
                    .fold(0.0, f64::max);
                let _ = writeln!(out, "max deviation: {dev:e}");
            }
            let mut buf = Vec::new();
            cfpg::write_trajectories_csv(&mut buf, &runs).map_err(|e| io_failure(&csv_path, e))?;
            write_file(&csv_path, &buf)?;
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}
