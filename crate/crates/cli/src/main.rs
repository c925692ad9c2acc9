use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use xtopo_core::{BindingFile, Error, FeatureMode, TransferConfig};
use xtopo_cli::pipeline::{self, Character};
use xtopo_cli::service::{router, AppState};

#[derive(Parser)]
#[command(name = "xtopo", version, about = "Transfer motion between skeletons of different topology")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Feature {
    Rotation6d,
    LocalPosition,
    Velocity,
}

impl From<Feature> for FeatureMode {
    fn from(f: Feature) -> Self {
        match f {
            Feature::Rotation6d => FeatureMode::Rotation6d,
            Feature::LocalPosition => FeatureMode::LocalPosition,
            Feature::Velocity => FeatureMode::Velocity,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Transfer a source motion onto the target skeleton.
    Transfer {
        #[arg(long)]
        source: PathBuf,
        /// Target example motions; all must share one skeleton.
        #[arg(long = "target", required = true, num_args = 1..)]
        targets: Vec<PathBuf>,
        /// Binding JSON file.
        #[arg(long, conflicts_with = "autobind", required_unless_present = "autobind")]
        bindings: Option<PathBuf>,
        /// Bind automatically by chain similarity.
        #[arg(long)]
        autobind: bool,
        #[arg(long, default_value_t = 4)]
        chain_length: usize,
        #[arg(long, default_value_t = 2)]
        top_k: usize,
        #[arg(long, default_value_t = 0.85)]
        alpha: f64,
        #[arg(long = "patch", default_value_t = 11)]
        patch_size: usize,
        #[arg(long, default_value_t = 1)]
        step: usize,
        #[arg(long = "iters", default_value_t = 3)]
        iterations: usize,
        #[arg(long, default_value_t = 3)]
        pyramid: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of results with seeds seed, seed+1, ...
        #[arg(long, default_value_t = 1)]
        variants: usize,
        #[arg(long, value_enum, default_value_t = Feature::Rotation6d)]
        feature: Feature,
        /// Match on raw features instead of standardised ones.
        #[arg(long)]
        no_normalize: bool,
        /// Overwrite bound channels with the source after transfer.
        #[arg(long)]
        copy_bound: bool,
        /// Output BVH; with several variants `_v0`, `_v1`, ... is appended.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print ranked automatic binding proposals as JSON.
    Autobind {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value_t = 4)]
        chain_length: usize,
        #[arg(long, default_value_t = 5)]
        top_k: usize,
    },
    /// Run the local HTTP service.
    Serve {
        #[arg(long, default_value_t = 7842)]
        port: u16,
        /// Directory of UI assets served at `/`.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
        /// Directory for session snapshots.
        #[arg(long)]
        persist: Option<PathBuf>,
    },
}

enum Failure {
    Parse(String),
    Binding(String),
    Transfer(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Parse(_) => 2,
            Failure::Binding(_) => 3,
            Failure::Transfer(_) => 4,
            Failure::Io(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Parse(m) | Failure::Binding(m) | Failure::Transfer(m) | Failure::Io(m) => m,
        }
    }
}

fn load(path: &Path) -> Result<Character, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))?;
    Character::parse(&text).map_err(|e| Failure::Parse(format!("{}: {} ({})", path.display(), e, e.kind())))
}

fn binding_failure(e: Error) -> Failure {
    Failure::Binding(format!("{e} ({})", e.kind()))
}

fn transfer_failure(e: Error) -> Failure {
    Failure::Transfer(format!("{e} ({})", e.kind()))
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<(), Failure> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::Io(e.to_string())),
        _ => Ok(()),
    }
}

fn variant_path(out: &Path, index: usize, count: usize) -> PathBuf {
    if count < 2 {
        return out.to_path_buf();
    }
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}_v{index}.{}", ext.to_string_lossy()),
        None => format!("{stem}_v{index}"),
    };
    out.with_file_name(name)
}

#[allow(clippy::too_many_arguments)]
fn transfer(
    source: &Path,
    targets: &[PathBuf],
    bindings: Option<&Path>,
    chain_length: usize,
    top_k: usize,
    config: TransferConfig,
    variants: usize,
    copy_bound: bool,
    out: &Path,
) -> Result<(), Failure> {
    let source = load(source)?;
    let targets: Vec<Character> = targets.iter().map(|p| load(p)).collect::<Result<_, _>>()?;
    pipeline::check_targets(&targets).map_err(|e| Failure::Parse(format!("target examples: {e}")))?;
    let target = &targets[0];
    let file = match bindings {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Binding(format!("{}: {e}", path.display())))?;
            BindingFile::from_json(&text).map_err(|e| binding_failure(e.into()))?
        }
        None => pipeline::autobind_file(&source.skeleton, &target.skeleton, chain_length, top_k).map_err(binding_failure)?,
    };
    let resolved = file
        .resolve(&source.skeleton, &target.skeleton)
        .map_err(|e| binding_failure(e.into()))?;
    resolved
        .bindings
        .validate(target.skeleton.joint_count(), source.skeleton.joint_count())
        .map_err(|e| binding_failure(e.into()))?;
    config.validate().map_err(|e| transfer_failure(e.into()))?;
    if variants == 0 {
        return Err(Failure::Transfer("--variants must be at least 1".into()));
    }

    let run = pipeline::run_transfer(&source, &targets, &resolved, &config, variants, copy_bound).map_err(transfer_failure)?;
    let report = pipeline::evaluate(&source, &targets, &resolved, &run).map_err(transfer_failure)?;
    let mut outputs = Vec::new();
    for (i, r) in run.results.iter().enumerate() {
        let text = pipeline::result_bvh(target, &r.motion).map_err(transfer_failure)?;
        let path = variant_path(out, i, run.results.len());
        std::fs::write(&path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        outputs.push(path.display().to_string());
    }
    let summary = json!({
        "outputs": outputs,
        "energy": run.results.iter().map(|r| r.energy.clone()).collect::<Vec<_>>(),
        "levels": run.results[0].levels,
        "metrics": report,
    });
    emit(&serde_json::to_string_pretty(&summary).expect("summary serialises"))
}

fn autobind(source: &Path, target: &Path, chain_length: usize, top_k: usize) -> Result<(), Failure> {
    let source = load(source)?;
    let target = load(target)?;
    let proposals =
        xtopo_core::auto_bind(&source.skeleton, &target.skeleton, chain_length, top_k).map_err(|e| binding_failure(e.into()))?;
    let named = pipeline::name_proposals(&proposals, &source.skeleton, &target.skeleton);
    emit(&serde_json::to_string_pretty(&named).expect("proposals serialise"))
}

fn serve(port: u16, static_dir: Option<&Path>, persist: Option<PathBuf>) -> Result<(), Failure> {
    let state = AppState::new(persist).map_err(|e| Failure::Io(e.to_string()))?;
    let app = router(Arc::new(state), static_dir);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Io(e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("127.0.0.1", port))
            .await
            .map_err(|e| Failure::Io(format!("port {port}: {e}")))?;
        eprintln!("listening on http://127.0.0.1:{port}");
        axum::serve(listener, app).await.map_err(|e| Failure::Io(e.to_string()))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Transfer {
            source,
            targets,
            bindings,
            autobind: _,
            chain_length,
            top_k,
            alpha,
            patch_size,
            step,
            iterations,
            pyramid,
            seed,
            variants,
            feature,
            no_normalize,
            copy_bound,
            out,
        } => {
            let config = TransferConfig {
                alpha,
                patch_size,
                step,
                iterations,
                pyramid_levels: pyramid,
                feature_mode: feature.into(),
                seed,
                normalize: !no_normalize,
                keyframe_mask: None,
            };
            transfer(
                &source,
                &targets,
                bindings.as_deref(),
                chain_length,
                top_k,
                config,
                variants,
                copy_bound,
                &out,
            )
        }
        Command::Autobind {
            source,
            target,
            chain_length,
            top_k,
        } => autobind(&source, &target, chain_length, top_k),
        Command::Serve {
            port,
            static_dir,
            persist,
        } => serve(port, static_dir.as_deref(), persist),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
