//! Per-invocation state: resolved config, output root, artifact bookkeeping
//! and the run manifest written beside every command's outputs.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use deco_core::backbone::Backbone;
use deco_core::data::{DatasetManifest, SplitMode};
use deco_core::deco::{build_deco, DecoModel};
use deco_core::pipeline::ExperimentConfig;
use deco_core::Error;
use deco_tensor::Checkpoint;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::GlobalArgs;

pub const OUTPUT_ROOT_ENV: &str = "DECO_OUTPUT_ROOT";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) => match e {
                Error::Config(_) => "config",
                Error::Data(_) | Error::File { .. } | Error::Io(_) => "data",
                Error::Protocol(_) | Error::Training(_) | Error::Tensor(_) => "training",
                Error::MissingArtifact(_) => "missing-artifact",
            },
        }
    }

    pub fn code(&self) -> u8 {
        match self.kind() {
            "usage" => 1,
            "config" => 2,
            "data" => 3,
            "training" => 4,
            _ => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl From<deco_tensor::TensorError> for CliError {
    fn from(e: deco_tensor::TensorError) -> Self {
        CliError::Core(Error::Tensor(e))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub struct Context {
    pub exp: ExperimentConfig,
    pub root: PathBuf,
    config_label: String,
    config_dir: PathBuf,
    verbose: u8,
    started: Instant,
}

impl Context {
    pub fn new(g: &GlobalArgs) -> Result<Self> {
        let (mut exp, config_label, config_dir) = match &g.config {
            Some(p) => {
                let exp = ExperimentConfig::load(p)?;
                let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (exp, p.display().to_string(), dir)
            }
            None => (ExperimentConfig::default(), "<defaults>".to_string(), PathBuf::new()),
        };
        if let Some(s) = g.seed {
            exp.seed = s;
            exp.validate()?;
        }
        let root = match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(r) if g.out.is_relative() => PathBuf::from(r).join(&g.out),
            _ => g.out.clone(),
        };
        Ok(Context {
            exp,
            root,
            config_label,
            config_dir,
            verbose: g.verbose,
            started: Instant::now(),
        })
    }

    pub fn log(&self, level: u8, msg: impl AsRef<str>) {
        if self.verbose >= level {
            eprintln!("[{:>7.1}s] {}", self.started.elapsed().as_secs_f64(), msg.as_ref());
        }
    }

    /// Starts the bookkeeping for a command whose outputs go to `stage`
    /// (relative to the output root).
    pub fn stage(&self, command: &str, stage: impl AsRef<Path>) -> Result<Stage> {
        let dir = self.root.join(stage.as_ref());
        std::fs::create_dir_all(&dir)?;
        Ok(Stage {
            command: command.to_string(),
            root: self.root.clone(),
            dir,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    /// A dataset named in the config: the key of a `[synth]` table (written
    /// by `gen-data` under the output root) or a manifest path relative to
    /// the config file.
    pub fn dataset(&self, key: &str, value: Option<&String>, stage: &mut Stage) -> Result<DatasetManifest> {
        let name = value.ok_or_else(|| Error::Config(format!("data.{key} is not set")))?;
        let path = if self.exp.synth.contains_key(name) {
            self.root.join("data").join(name).join("manifest.csv")
        } else {
            self.config_dir.join(name)
        };
        if !path.exists() {
            return Err(Error::MissingArtifact(path).into());
        }
        stage.input(&path)?;
        Ok(DatasetManifest::load(&path)?)
    }

    /// Uses the manifest's own split when every entry has one.
    pub fn split(&self, m: &DatasetManifest, mode: SplitMode, seed: u64) -> Result<DatasetManifest> {
        if m.entries.iter().all(|e| e.split.is_some()) {
            Ok(m.clone())
        } else {
            Ok(m.make_split(seed, self.exp.data.val_fraction, mode)?)
        }
    }

    pub fn backbone(&self, explicit: Option<&PathBuf>, default: &str, stage: &mut Stage) -> Result<Backbone> {
        let path = explicit.cloned().unwrap_or_else(|| self.root.join(default));
        let b = Backbone::load(&path, &self.exp.backbone)?;
        stage.input(&path)?;
        Ok(b)
    }

    /// Loads a trained colorizer; it comes back frozen.
    pub fn deco(&self, explicit: Option<&PathBuf>, stage: &mut Stage) -> Result<DecoModel> {
        let path = explicit.cloned().unwrap_or_else(|| self.root.join(crate::commands::DECO_CKPT));
        if !path.exists() {
            return Err(Error::MissingArtifact(path).into());
        }
        let deco = build_deco(&self.exp.deco, 0)?;
        deco.load_checkpoint(&Checkpoint::load(&path)?)?;
        deco.set_frozen(true);
        stage.input(&path)?;
        Ok(deco)
    }

    pub fn config_hash(&self) -> String {
        sha256_hex(self.exp.to_toml().as_bytes())
    }
}

#[derive(Serialize)]
struct FileRecord {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a str,
    config_sha256: String,
    seed: u64,
    inputs: &'a [FileRecord],
    outputs: &'a [FileRecord],
}

pub struct Stage {
    command: String,
    root: PathBuf,
    pub dir: PathBuf,
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
}

impl Stage {
    /// Paths under the output root are recorded relative to it, so reruns
    /// into different directories produce identical manifests.
    fn label(&self, path: &Path) -> String {
        path.strip_prefix(&self.root).unwrap_or(path).display().to_string()
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|_| Error::MissingArtifact(path.to_path_buf()))?;
        self.inputs.push(FileRecord {
            path: self.label(path),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Records a file some other routine already wrote.
    pub fn record(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)?;
        self.outputs.push(FileRecord {
            path: self.label(path),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.path(name);
        if let Some(p) = path.parent() {
            std::fs::create_dir_all(p)?;
        }
        std::fs::write(&path, bytes.as_ref())?;
        self.record(&path)?;
        Ok(path)
    }

    pub fn output_count(&self) -> usize {
        self.outputs.len()
    }

    /// Writes `run.toml` in the stage directory.
    pub fn finish(self, ctx: &Context) -> Result<()> {
        let m = RunManifest {
            command: &self.command,
            version: env!("CARGO_PKG_VERSION"),
            config: &ctx.config_label,
            config_sha256: ctx.config_hash(),
            seed: ctx.exp.seed,
            inputs: &self.inputs,
            outputs: &self.outputs,
        };
        let text = toml::to_string(&m).expect("run manifest is always serializable");
        std::fs::write(self.dir.join("run.toml"), text)?;
        ctx.log(1, format!("{}: {} outputs in {}", self.command, self.outputs.len(), self.dir.display()));
        Ok(())
    }
}
