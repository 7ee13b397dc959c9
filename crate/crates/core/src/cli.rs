//! The `duo` command line: `gen`, `precompute`, `match`, `refine`, `eval`.
//!
//! Settings come from an optional `key=value` config file (`#` starts a
//! comment), then `--set key=value` flags, then dedicated flags. Exit code 0
//! means success, 1 a compute failure, 2 a usage or configuration error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::convert::{
    evaluate, read_index_list, read_point_map, write_index_list, write_point_map, EvalReport,
    LossTuple, PointMap,
};
use crate::descriptors::{default_channel_columns, wks, WksParams};
use crate::fmap::{write_fmap, FmapOptions};
use crate::mesh::{
    generate_icosphere, generate_symmetric_blob, load_mesh, save_mesh, BlobOptions, MeshFormat,
};
use crate::pipeline::{match_shapes, wks_descriptors, MatchOutcome};
use crate::qmap::{
    default_probes, verify_pushforward_relation, write_qmap, PushforwardReport, ShapeView,
};
use crate::refine::{
    optimize, probe_input, write_training_log, LinearProbe, PairState, TrainConfig,
};
use crate::spectral::{
    cache_read, cache_read_for, cache_write, SpectralData, DEFAULT_K_C, DEFAULT_K_Q,
};
use crate::{Error, Result};

/// Validated run settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub k_c: usize,
    pub k_q: usize,
    pub lambda: f64,
    pub wks_dims: usize,
    pub sigma_scale: f64,
    /// Number of WKS columns whose gradients feed the orientation channel.
    pub channels: usize,
    pub d_out: usize,
    pub w_ortho: f64,
    pub w_q_ortho: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub cache_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            k_c: DEFAULT_K_C,
            k_q: DEFAULT_K_Q,
            lambda: 1e-3,
            wks_dims: 128,
            sigma_scale: 7.0,
            channels: 8,
            d_out: 32,
            w_ortho: 1.0,
            w_q_ortho: 1.0,
            lr: 1e-3,
            epochs: 15,
            seed: 0,
            cache_dir: None,
            out_dir: None,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "k_c" => self.k_c = parse_value(key, value)?,
            "k_q" => self.k_q = parse_value(key, value)?,
            "lambda" => self.lambda = parse_value(key, value)?,
            "wks_dims" => self.wks_dims = parse_value(key, value)?,
            "sigma_scale" => self.sigma_scale = parse_value(key, value)?,
            "channels" => self.channels = parse_value(key, value)?,
            "d_out" => self.d_out = parse_value(key, value)?,
            "w_ortho" => self.w_ortho = parse_value(key, value)?,
            "w_q_ortho" => self.w_q_ortho = parse_value(key, value)?,
            "lr" => self.lr = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "cache_dir" => self.cache_dir = Some(PathBuf::from(value)),
            "out_dir" => self.out_dir = Some(PathBuf::from(value)),
            other => return Err(Error::Config(format!("unknown setting {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got {line:?}", n + 1))
            })?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_c < 8 {
            return Err(Error::Config(format!("k_c must be >= 8, got {}", self.k_c)));
        }
        if self.k_q < 1 {
            return Err(Error::Config("k_q must be >= 1".into()));
        }
        if self.channels > self.wks_dims {
            return Err(Error::Config("channels cannot exceed wks_dims".into()));
        }
        if self.d_out == 0 {
            return Err(Error::Config("d_out must be >= 1".into()));
        }
        self.wks_params().validate()?;
        self.train_config().validate()
    }

    pub fn wks_params(&self) -> WksParams {
        WksParams {
            num_energies: self.wks_dims,
            sigma_scale: self.sigma_scale,
        }
    }

    pub fn fmap_options(&self) -> FmapOptions {
        FmapOptions {
            lambda: self.lambda,
            use_normalized_spectra: true,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            w_ortho: self.w_ortho,
            w_q_ortho: self.w_q_ortho,
            learning_rate: self.lr,
            epochs: self.epochs,
            seed: self.seed,
            fmap: self.fmap_options(),
            ..TrainConfig::default()
        }
    }

    pub fn channel_columns(&self) -> Vec<usize> {
        if self.channels == 0 {
            Vec::new()
        } else {
            default_channel_columns(self.wks_dims, self.channels)
        }
    }

    /// Flag, then config value, then `DUO_CACHE_DIR`, then `./duo-cache`.
    pub fn resolve_cache_dir(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .or_else(|| std::env::var_os("DUO_CACHE_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("duo-cache"))
    }

    pub fn resolve_out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "duo",
    version,
    about = "Orientation-aware functional maps between triangle meshes"
)]
pub struct Cli {
    /// Key=value config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set k_c=30`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic mesh.
    Gen(GenArgs),
    /// Build operators, eigenbases and WKS for a mesh and cache them.
    Precompute(PrecomputeArgs),
    /// Estimate C and Q between two cached meshes and extract point maps.
    Match(MatchArgs),
    /// Optimize a linear descriptor probe over a list of cached pairs.
    Refine(RefineArgs),
    /// Score a point map against ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GenKind {
    Icosphere,
    Blob,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    pub kind: GenKind,
    /// Icosphere subdivision level (0..=6).
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(0..=6))]
    pub subdiv: u8,
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    /// Blob seed; also names the output files.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Blob icosphere level (0..=4).
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(0..=4))]
    pub resolution: u8,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PrecomputeArgs {
    pub mesh: PathBuf,
    #[arg(long)]
    pub k_c: Option<usize>,
    #[arg(long)]
    pub k_q: Option<usize>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    pub source: PathBuf,
    pub target: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Probe checkpoint applied to the probe input of both shapes.
    #[arg(long)]
    pub probe: Option<PathBuf>,
    /// Ground-truth target index per source vertex.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Compose target descriptors with this self-symmetry file.
    #[arg(long, value_name = "SYM")]
    pub mirror_descriptors: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    /// File with one `source_cache target_cache` pair per line.
    pub pairs: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Starting probe; defaults to a seeded near-identity.
    #[arg(long)]
    pub init: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub map: PathBuf,
    pub gt: PathBuf,
    pub target_mesh: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses arguments, runs one command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 2,
                _ => 1,
            }
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be >= 1".into()));
        }
        // a pool may already exist when called in-process; the cap then does not apply
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p).map_err(|e| match e {
            Error::Io { .. } => Error::Config(e.to_string()),
            other => other,
        })?,
        None => RunConfig::default(),
    };
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    match cli.command {
        Command::Gen(a) => cmd_gen(&a, &cfg).map(|_| ()),
        Command::Precompute(a) => {
            if let Some(k) = a.k_c {
                cfg.k_c = k;
            }
            if let Some(k) = a.k_q {
                cfg.k_q = k;
            }
            if a.cache_dir.is_some() {
                cfg.cache_dir = a.cache_dir.clone();
            }
            cfg.validate()?;
            let outcome = cmd_precompute(&a.mesh, &cfg)?;
            println!("{}", outcome.message());
            Ok(())
        }
        Command::Match(a) => {
            if let Some(l) = a.lambda {
                cfg.lambda = l;
            }
            if a.out.is_some() {
                cfg.out_dir = a.out.clone();
            }
            cfg.validate()?;
            cmd_match(&a, &cfg).map(|_| ())
        }
        Command::Refine(a) => {
            if let Some(e) = a.epochs {
                cfg.epochs = e;
            }
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if a.out.is_some() {
                cfg.out_dir = a.out.clone();
            }
            cfg.validate()?;
            cmd_refine(&a, &cfg).map(|_| ())
        }
        Command::Eval(a) => {
            let report = cmd_eval(&a.map, &a.gt, &a.target_mesh)?;
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            match &a.out {
                Some(p) => std::fs::write(p, json + "\n").map_err(|e| Error::io(p, e)),
                None => {
                    println!("{json}");
                    Ok(())
                }
            }
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes an icosphere OFF, or a blob OFF plus its `.sym` permutation.
pub fn cmd_gen(args: &GenArgs, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let dir = args.out.clone().unwrap_or_else(|| cfg.resolve_out_dir());
    ensure_dir(&dir)?;
    match args.kind {
        GenKind::Icosphere => {
            let mesh = generate_icosphere(args.subdiv as usize, args.radius)?;
            let path = dir.join(format!("icosphere_{}.off", args.subdiv));
            save_mesh(&mesh, &path, Some(MeshFormat::Off))?;
            println!(
                "wrote {} ({} vertices)",
                path.display(),
                mesh.num_vertices()
            );
            Ok(vec![path])
        }
        GenKind::Blob => {
            let opts = BlobOptions {
                resolution: args.resolution as usize,
                ..BlobOptions::default()
            };
            let (mesh, sym) = generate_symmetric_blob(args.seed, &opts)?;
            let stem = format!("blob_{:04}", args.seed);
            let off = dir.join(format!("{stem}.off"));
            let symf = dir.join(format!("{stem}.sym"));
            save_mesh(&mesh, &off, Some(MeshFormat::Off))?;
            write_index_list(&symf, sym.permutation())?;
            println!(
                "wrote {} ({} vertices) and {}",
                off.display(),
                mesh.num_vertices(),
                symf.display()
            );
            Ok(vec![off, symf])
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PrecomputeOutcome {
    Hit(PathBuf),
    Built(PathBuf),
    Rebuilt { path: PathBuf, reason: String },
}

impl PrecomputeOutcome {
    pub fn path(&self) -> &Path {
        match self {
            PrecomputeOutcome::Hit(p) | PrecomputeOutcome::Built(p) => p,
            PrecomputeOutcome::Rebuilt { path, .. } => path,
        }
    }

    pub fn message(&self) -> String {
        match self {
            PrecomputeOutcome::Hit(p) => format!("cache hit: {}", p.display()),
            PrecomputeOutcome::Built(p) => format!("wrote {}", p.display()),
            PrecomputeOutcome::Rebuilt { path, .. } => format!("rebuilt {}", path.display()),
        }
    }
}

pub fn cache_path_for(mesh_path: &Path, cfg: &RunConfig) -> PathBuf {
    let stem = mesh_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "mesh".into());
    cfg.resolve_cache_dir().join(format!("{stem}.duoc"))
}

fn cache_matches(data: &SpectralData, cfg: &RunConfig) -> bool {
    data.lb.k() == cfg.k_c
        && data.conn.k() == cfg.k_q
        && data.wks.as_ref().and_then(|w| w.wks_params.as_ref()) == Some(&cfg.wks_params())
}

/// Builds the spectral cache for a mesh unless an up-to-date one exists.
pub fn cmd_precompute(mesh_path: &Path, cfg: &RunConfig) -> Result<PrecomputeOutcome> {
    let mesh = load_mesh(mesh_path, None)?;
    let path = cache_path_for(mesh_path, cfg);
    let mut reason = None;
    if path.exists() {
        match cache_read_for(&path, &mesh) {
            Ok(data) if cache_matches(&data, cfg) => return Ok(PrecomputeOutcome::Hit(path)),
            Ok(_) => reason = Some("settings changed".to_string()),
            Err(e) => {
                eprintln!(
                    "warning: cache {} unusable ({e}); rebuilding",
                    path.display()
                );
                reason = Some(e.to_string());
            }
        }
    }
    let mut data = SpectralData::compute(&mesh, cfg.k_c, cfg.k_q)?;
    data.wks = Some(wks(&data.lb, &cfg.wks_params())?);
    ensure_dir(path.parent().unwrap_or(Path::new(".")))?;
    cache_write(&path, &data)?;
    Ok(match reason {
        Some(reason) => PrecomputeOutcome::Rebuilt { path, reason },
        None => PrecomputeOutcome::Built(path),
    })
}

/// Summary written by `match` as `report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct MatchReport {
    pub source_vertices: usize,
    pub target_vertices: usize,
    pub mirrored_descriptors: bool,
    pub orientation_c: i8,
    pub orientation_q: i8,
    pub losses: LossTuple,
    pub pushforward_max_residual: f64,
    pub pushforward_mean_residual: f64,
    pub rank_warning_c: Option<String>,
    pub rank_warning_q: Option<String>,
    pub eval_c: Option<EvalReport>,
    pub eval_q: Option<EvalReport>,
}

fn match_descriptors(
    data: &SpectralData,
    cfg: &RunConfig,
    probe: Option<&LinearProbe>,
) -> Result<DMatrix<f64>> {
    match probe {
        Some(p) => {
            let base = probe_input(data, &cfg.wks_params(), &cfg.channel_columns())?;
            if base.ncols() != p.input_dim() {
                return Err(Error::Dimension(format!(
                    "probe expects {} inputs, configuration yields {}",
                    p.input_dim(),
                    base.ncols()
                )));
            }
            Ok(base * &p.w)
        }
        None => wks_descriptors(data, &cfg.wks_params()),
    }
}

pub fn cmd_match(args: &MatchArgs, cfg: &RunConfig) -> Result<MatchReport> {
    let src = cache_read(&args.source)?;
    let tgt = cache_read(&args.target)?;
    let probe = args.probe.as_ref().map(LinearProbe::read).transpose()?;
    let opts = cfg.fmap_options();

    let desc_m = match_descriptors(&src, cfg, probe.as_ref())?;
    let mut desc_n = match_descriptors(&tgt, cfg, probe.as_ref())?;
    if let Some(sym_path) = &args.mirror_descriptors {
        let perm = read_index_list(sym_path)?;
        crate::mesh::SelfSymmetry::new(&tgt.mesh, perm.clone(), -1)?;
        desc_n = DMatrix::from_fn(desc_n.nrows(), desc_n.ncols(), |i, j| desc_n[(perm[i], j)]);
    }

    let MatchOutcome { c, q, map_c, map_q } = match_shapes(&src, &tgt, &desc_m, &desc_n, &opts)?;

    let (vs, vt) = (ShapeView::of(&src), ShapeView::of(&tgt));
    let (f, x) = default_probes(vs, vt, 20);
    let push: PushforwardReport = verify_pushforward_relation(&c, &q, vs, vt, &f, &x)?;
    let losses = LossTuple::evaluate(&src, &tgt, &desc_m, &desc_n, &opts)?;

    let (eval_c, eval_q) = match &args.gt {
        Some(gt_path) => {
            let gt = read_index_list(gt_path)?;
            (
                Some(evaluate(&map_c, &gt, &tgt.mesh)?),
                Some(evaluate(&map_q, &gt, &tgt.mesh)?),
            )
        }
        None => (None, None),
    };

    let out = cfg.resolve_out_dir();
    ensure_dir(&out)?;
    write_fmap(out.join("map.fmap"), &c)?;
    write_qmap(out.join("map.qmap"), &q)?;
    write_point_map(out.join("p2p_c.txt"), &map_c)?;
    write_point_map(out.join("p2p_q.txt"), &map_q)?;
    let report = MatchReport {
        source_vertices: src.mesh.num_vertices(),
        target_vertices: tgt.mesh.num_vertices(),
        mirrored_descriptors: args.mirror_descriptors.is_some(),
        orientation_c: map_c.orientation,
        orientation_q: map_q.orientation,
        losses,
        pushforward_max_residual: push.max_residual,
        pushforward_mean_residual: push.mean_residual,
        rank_warning_c: c.rank_warning,
        rank_warning_q: q.rank_warning,
        eval_c,
        eval_q,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    let report_path = out.join("report.json");
    std::fs::write(&report_path, json + "\n").map_err(|e| Error::io(&report_path, e))?;
    if let Some(w) = &report.rank_warning_c {
        eprintln!("warning: C estimation: {w}");
    }
    println!(
        "orientation C={} Q={}  L_ortho={:.3e} L_Q-ortho={:.3e}  pushforward residual={:.3e}",
        report.orientation_c,
        report.orientation_q,
        report.losses.ortho,
        report.losses.q_ortho,
        report.pushforward_max_residual
    );
    Ok(report)
}

/// Reads `source target` cache pairs, one per line, `#` comments allowed.
pub fn read_pair_list(path: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(Error::parse(n + 1, "expected two cache paths"));
        }
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        pairs.push((resolve(parts[0]), resolve(parts[1])));
    }
    if pairs.is_empty() {
        return Err(Error::Config(format!("{} lists no pairs", path.display())));
    }
    Ok(pairs)
}

pub struct RefineOutput {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub initial_loss: f64,
    pub final_loss: f64,
}

pub fn cmd_refine(args: &RefineArgs, cfg: &RunConfig) -> Result<RefineOutput> {
    let list = read_pair_list(&args.pairs)?;
    let (wp, cols) = (cfg.wks_params(), cfg.channel_columns());
    let mut states = Vec::with_capacity(list.len());
    for (i, (s, t)) in list.iter().enumerate() {
        let (src, tgt) = (cache_read(s)?, cache_read(t)?);
        let (bm, bn) = (
            probe_input(&src, &wp, &cols)?,
            probe_input(&tgt, &wp, &cols)?,
        );
        states.push(PairState::new(format!("pair{i}"), &src, &tgt, &bm, &bn)?);
    }
    let d = states[0].dim();
    let init = match &args.init {
        Some(p) => LinearProbe::read(p)?,
        None => {
            let mut p = LinearProbe::random(d, cfg.d_out, 1e-2, cfg.seed);
            p.w += DMatrix::<f64>::identity(d, cfg.d_out);
            p
        }
    };
    let train = cfg.train_config();
    let result = optimize(&states, &init, &train)?;
    let out = cfg.resolve_out_dir();
    ensure_dir(&out)?;
    let checkpoint = out.join("probe.bin");
    let log = out.join("train.jsonl");
    result.probe.write(&checkpoint)?;
    write_training_log(&log, &result.history)?;
    let mean_loss = |w: &DMatrix<f64>| -> Result<f64> {
        let sum = states
            .iter()
            .map(|p| crate::refine::total_loss(p, w, &train).map(|d| d.l_final))
            .sum::<Result<f64>>()?;
        Ok(sum / states.len() as f64)
    };
    let initial_loss = mean_loss(&init.w)?;
    let final_loss = mean_loss(&result.probe.w)?;
    println!(
        "{} steps, loss {:.6e} -> {:.6e}; wrote {} and {}",
        result.history.len(),
        initial_loss,
        final_loss,
        checkpoint.display(),
        log.display()
    );
    Ok(RefineOutput {
        checkpoint,
        log,
        initial_loss,
        final_loss,
    })
}

pub fn cmd_eval(map_path: &Path, gt_path: &Path, target_mesh: &Path) -> Result<EvalReport> {
    let map: PointMap = read_point_map(map_path)?;
    let gt = read_index_list(gt_path)?;
    let mesh = load_mesh(target_mesh, None)?;
    evaluate(&map, &gt, &mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_text_and_overrides() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\nk_c = 30  # trailing\n\nlambda=0.01\n")
            .unwrap();
        assert_eq!(cfg.k_c, 30);
        assert_eq!(cfg.lambda, 0.01);
        assert!(cfg.apply_text("nonsense").is_err());
        assert!(cfg.apply_text("k_c=abc").is_err());
        assert!(cfg.apply_text("colour=blue").is_err());
        cfg.k_c = 4;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn defaults() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.k_c, 50);
        assert_eq!(cfg.wks_dims, 128);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn bad_subdivision_is_usage_error() {
        assert_eq!(run(["duo", "gen", "icosphere", "--subdiv", "9"]), 2);
        assert_eq!(run(["duo", "frobnicate"]), 2);
    }
}
