//! Subcommands of the `ditto` binary. Each command writes its outputs to a
//! temporary sibling path and renames them into place only on success.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use ditto_core::bundle::{subsample_indices, to_json_pretty, EpisodeBundle, MANIFEST_FILE};
use ditto_core::demo::{extract_trajectory, CorrespondenceSource, DemoTrajectory, ExplicitFile, FileSource};
use ditto_core::eval::{
    generate_synthetic_episode, run_offline_eval, CompositeSource, EvalOptions, Protocol, SyntheticEpisodeConfig,
    SyntheticSource,
};
use ditto_core::registration::RansacParams;
use ditto_core::warp::{generate, GenerateOptions, WarpConfig, DEFAULT_MARGIN, DEFAULT_MAX_OBJ_DIST, DEFAULT_SIGMA};

pub const TOOL: &str = "ditto";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "ditto", version, about = "Extract, transfer and evaluate object trajectories from RGB-D demonstrations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic episode bundle with a ground-truth sidecar.
    Synth(SynthArgs),
    /// Extract the demonstrated object trajectory from a bundle.
    Extract(ExtractArgs),
    /// Warp an extracted trajectory into a live scene.
    Generate(GenerateArgs),
    /// Evaluate bundles under one protocol and write report tables.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RansacArgs {
    /// Seed for every random choice made by the command.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// RANSAC inlier distance, meters.
    #[arg(long, default_value_t = 0.01)]
    pub ransac_threshold: f64,
    /// RANSAC hypothesis count.
    #[arg(long, default_value_t = 1000)]
    pub ransac_iters: usize,
}

impl RansacArgs {
    pub fn params(&self) -> RansacParams {
        RansacParams {
            max_iterations: self.ransac_iters,
            inlier_threshold: self.ransac_threshold,
            seed: self.seed,
            ..RansacParams::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Episode config (JSON); defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output bundle directory (must not exist or be empty).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of episodes; above 1, bundles go to `<out>/episode_NN` with seeds `seed + NN`.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExtractBackend {
    /// Correspondence files listed in the manifest.
    Files,
    /// Regenerate from the ground-truth sidecar.
    Synthetic,
}

#[derive(Debug, Clone, Args)]
pub struct ExtractArgs {
    pub bundle: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ExtractBackend::Files)]
    pub backend: ExtractBackend,
    /// Keep this many linearly spaced frames.
    #[arg(long)]
    pub subsample: Option<usize>,
    #[command(flatten)]
    pub ransac: RansacArgs,
}

#[derive(Debug, Clone, Args)]
pub struct WarpArgs {
    /// Steepness of the object-to-goal mixing curve.
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    pub sigma: f64,
    /// Blend toward the trajectory anchored on the secondary object.
    #[arg(long)]
    pub use_secondary: bool,
    /// Re-detection box margin, pixels.
    #[arg(long, default_value_t = DEFAULT_MARGIN)]
    pub margin: u32,
}

impl WarpArgs {
    fn config(&self) -> WarpConfig {
        WarpConfig {
            sigma: self.sigma,
            use_secondary: self.use_secondary,
            ..WarpConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenerateBackend {
    /// Regenerate demo-to-live matches from both ground-truth sidecars.
    Synthetic,
    /// Read matches from --correspondences.
    Files,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    /// Trajectory file written by `extract`.
    pub trajectory: PathBuf,
    /// Bundle whose first kept frame is the live observation.
    pub live: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Demo bundle; defaults to the one recorded in the trajectory file.
    #[arg(long)]
    pub demo_bundle: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = GenerateBackend::Synthetic)]
    pub backend: GenerateBackend,
    /// Demo-to-live correspondence file for the files backend.
    #[arg(long)]
    pub correspondences: Option<PathBuf>,
    /// Grasps farther than this from the live object are discarded, meters.
    #[arg(long, default_value_t = DEFAULT_MAX_OBJ_DIST)]
    pub max_obj_dist: f64,
    #[command(flatten)]
    pub warp: WarpArgs,
    #[command(flatten)]
    pub ransac: RansacArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Intra,
    Inter,
    Trajectory,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Intra => Protocol::Intra,
            ProtocolArg::Inter => Protocol::Inter,
            ProtocolArg::Trajectory => Protocol::Trajectory,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalBackend {
    /// Files within a bundle, synthetic regeneration across bundles.
    Auto,
    Files,
    Synthetic,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Bundle directories or glob patterns.
    #[arg(required = true)]
    pub bundles: Vec<String>,
    #[arg(long, value_enum)]
    pub protocol: ProtocolArg,
    /// Report path; the extension is replaced per format.
    #[arg(long)]
    pub out: PathBuf,
    /// Write only this format (both by default).
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long, value_enum, default_value_t = EvalBackend::Auto)]
    pub backend: EvalBackend,
    /// Leave runtime cells empty so reports are byte-reproducible.
    #[arg(long)]
    pub omit_runtime: bool,
    #[command(flatten)]
    pub warp: WarpArgs,
    #[command(flatten)]
    pub ransac: RansacArgs,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Extract(a) => cmd_extract(&a),
        Command::Generate(a) => cmd_generate(&a),
        Command::Eval(a) => cmd_eval(&a),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Serialize)]
struct InputHash {
    path: String,
    sha256: String,
}

/// Everything needed to reproduce an output; never contains timestamps.
#[derive(Debug, Serialize)]
struct RunMetadata<'a, P: Serialize> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    seed: u64,
    inputs: Vec<InputHash>,
    params: P,
}

fn input(path: &Path) -> Result<InputHash> {
    let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    Ok(InputHash {
        path: path.display().to_string(),
        sha256: hash_file(&file)?,
    })
}

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp-{}", std::process::id()))
}

/// Writes `bytes` to a temp sibling, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = temp_sibling(path);
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| {
        let _ = std::fs::remove_file(&tmp);
        format!("moving output into place at {}", path.display())
    })
}

fn run_path(out: &Path) -> PathBuf {
    out.with_extension("run.json")
}

fn write_run<P: Serialize>(path: &Path, command: &str, seed: u64, inputs: Vec<InputHash>, params: P) -> Result<()> {
    let meta = RunMetadata {
        tool: TOOL,
        version: VERSION,
        command,
        seed,
        inputs,
        params,
    };
    write_atomic(path, to_json_pretty(&meta).as_bytes())
}

fn load_bundle(path: &Path) -> Result<EpisodeBundle> {
    EpisodeBundle::load(path).with_context(|| format!("loading bundle {}", path.display()))
}

#[derive(Serialize)]
struct SynthParams<'a> {
    config_sha256: String,
    config: &'a SyntheticEpisodeConfig,
    count: usize,
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let (cfg, cfg_bytes, inputs) = match &a.config {
        Some(p) => {
            let bytes = std::fs::read(p).with_context(|| format!("reading config {}", p.display()))?;
            let cfg: SyntheticEpisodeConfig =
                serde_json::from_slice(&bytes).with_context(|| format!("invalid config {}", p.display()))?;
            (cfg, bytes, vec![input(p)?])
        }
        None => {
            let cfg = SyntheticEpisodeConfig::default();
            let bytes = serde_json::to_vec(&cfg)?;
            (cfg, bytes, vec![])
        }
    };
    cfg.validate().context("invalid episode config")?;
    if a.count == 0 {
        bail!("--count must be at least 1");
    }
    if a.out.exists() && std::fs::read_dir(&a.out).map(|mut d| d.next().is_some()).unwrap_or(true) {
        bail!("output {} already exists and is not empty; remove it or choose another path", a.out.display());
    }
    let tmp = temp_sibling(&a.out);
    let result = (|| -> Result<()> {
        for i in 0..a.count {
            let (dir, seed) = if a.count == 1 {
                (tmp.clone(), a.seed)
            } else {
                (tmp.join(format!("episode_{i:02}")), a.seed + i as u64)
            };
            generate_synthetic_episode(&cfg, seed, &dir)
                .with_context(|| format!("writing bundle under {}", a.out.display()))?;
            log::info!("wrote episode seed {seed}");
        }
        let params = SynthParams {
            config_sha256: sha256_hex(&cfg_bytes),
            config: &cfg,
            count: a.count,
        };
        write_run(&tmp.join("run.json"), "synth", a.seed, inputs, params)?;
        if a.out.exists() {
            std::fs::remove_dir(&a.out).with_context(|| format!("replacing {}", a.out.display()))?;
        }
        std::fs::rename(&tmp, &a.out).with_context(|| format!("moving bundle into place at {}", a.out.display()))
    })();
    if result.is_err() {
        let _ = std::fs::remove_dir_all(&tmp);
    }
    result
}

#[derive(Serialize)]
struct ExtractParams {
    backend: &'static str,
    subsample: Option<usize>,
    ransac: RansacParams,
}

pub fn cmd_extract(a: &ExtractArgs) -> Result<()> {
    let mut bundle = load_bundle(&a.bundle)?;
    if let Some(t) = a.subsample {
        let kept = bundle.kept_frames();
        let keep: Vec<usize> = subsample_indices(kept.len(), t).into_iter().map(|i| kept[i]).collect();
        bundle = bundle.with_only_frames(&keep);
    }
    let params = a.ransac.params();
    let synth = SyntheticSource::new(a.ransac.seed);
    let (backend, name): (&dyn CorrespondenceSource, _) = match a.backend {
        ExtractBackend::Files => (&FileSource, "files"),
        ExtractBackend::Synthetic => (&synth, "synthetic"),
    };
    let traj = extract_trajectory(&bundle, backend, &params)
        .with_context(|| format!("extracting trajectory from {}", a.bundle.display()))?;
    write_atomic(&a.out, to_json_pretty(&traj).as_bytes())?;
    let meta = ExtractParams {
        backend: name,
        subsample: a.subsample,
        ransac: params,
    };
    write_run(&run_path(&a.out), "extract", a.ransac.seed, vec![input(&a.bundle)?], meta)
}

pub fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.trajectory)
        .with_context(|| format!("reading trajectory {}", a.trajectory.display()))?;
    let traj: DemoTrajectory =
        serde_json::from_str(&text).with_context(|| format!("malformed trajectory {}", a.trajectory.display()))?;
    let demo_path = a.demo_bundle.clone().unwrap_or_else(|| PathBuf::from(&traj.bundle));
    let demo = load_bundle(&demo_path)?;
    let live = load_bundle(&a.live)?;
    let opts = GenerateOptions {
        warp: a.warp.config(),
        ransac: a.ransac.params(),
        margin: a.warp.margin,
        max_obj_dist: a.max_obj_dist,
    };
    let synth = SyntheticSource::new(a.ransac.seed);
    let explicit;
    let backend: &dyn CorrespondenceSource = match a.backend {
        GenerateBackend::Synthetic => &synth,
        GenerateBackend::Files => {
            let p = a
                .correspondences
                .clone()
                .ok_or_else(|| anyhow!("--backend files needs --correspondences <file>"))?;
            explicit = ExplicitFile(p);
            &explicit
        }
    };
    let warped = generate(&traj, &demo, &live, backend, &opts).context("generating live trajectory")?;
    write_atomic(&a.out, to_json_pretty(&warped).as_bytes())?;
    let mut inputs = vec![input(&a.trajectory)?, input(&demo_path)?, input(&a.live)?];
    if let Some(c) = &a.correspondences {
        inputs.push(input(c)?);
    }
    write_run(&run_path(&a.out), "generate", a.ransac.seed, inputs, opts)
}

/// Expands each argument as a glob; arguments without matches are taken
/// literally so a missing bundle reports its own path.
pub fn expand_bundles(args: &[String]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for a in args {
        let mut matched: Vec<PathBuf> = glob::glob(a)
            .with_context(|| format!("bad pattern {a:?}"))?
            .filter_map(|p| p.ok())
            .filter(|p| p.join(MANIFEST_FILE).is_file())
            .collect();
        if matched.is_empty() {
            matched.push(PathBuf::from(a));
        }
        matched.sort();
        out.extend(matched);
    }
    Ok(out)
}

#[derive(Serialize)]
struct EvalParams {
    protocol: &'static str,
    backend: String,
    omit_runtime: bool,
    options: EvalOptions,
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let paths = expand_bundles(&a.bundles)?;
    let bundles = paths.iter().map(|p| load_bundle(p)).collect::<Result<Vec<_>>>()?;
    let synth = SyntheticSource::new(a.ransac.seed);
    let auto = CompositeSource::new(&FileSource, &synth);
    let backend: &dyn CorrespondenceSource = match a.backend {
        EvalBackend::Auto => &auto,
        EvalBackend::Files => &FileSource,
        EvalBackend::Synthetic => &synth,
    };
    let opts = EvalOptions {
        ransac: a.ransac.params(),
        warp: a.warp.config(),
        margin: a.warp.margin,
        measure_runtime: !a.omit_runtime,
    };
    let protocol = Protocol::from(a.protocol);
    let report = run_offline_eval(&bundles, protocol, backend, &opts).context("evaluation failed")?;
    let formats = match a.format {
        Some(f) => vec![f],
        None => vec![Format::Csv, Format::Json],
    };
    for f in formats {
        let (ext, body) = match f {
            Format::Csv => ("csv", report.to_csv()),
            Format::Json => ("json", report.to_json()),
        };
        write_atomic(&a.out.with_extension(ext), body.as_bytes())?;
    }
    let inputs = paths.iter().map(|p| input(p)).collect::<Result<Vec<_>>>()?;
    let meta = EvalParams {
        protocol: protocol.as_str(),
        backend: backend.name().to_string(),
        omit_runtime: a.omit_runtime,
        options: opts,
    };
    write_run(&run_path(&a.out), "eval", a.ransac.seed, inputs, meta)
}
