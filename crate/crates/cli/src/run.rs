//! Run directories: one checkpoint per trained parameter set plus the
//! metrics log and the config echo.
//!
//! ```text
//! run/
//!   config.echo.json
//!   metrics.csv
//!   N1/ N2/ ... Nstar/        extractors that were trained
//!   head/                     shared head (joint runs)
//!   head-N1/ head-Nstar/ ...  per-model heads (baseline runs)
//! ```

use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use aggnet::checkpoint::{run_id, Checkpoint, MANIFEST_FILE};
use aggnet::config::TrainConfig;
use aggnet::model::{share, ModelSpec, SharedHead};
use aggnet::report::metrics_csv;
use aggnet::train::{model_name, Heads, TrainedBundle, STAR_NAME};
use aggnet::{Error, ParamSet, Result};

pub const CONFIG_ECHO: &str = "config.echo.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const LOCK_FILE: &str = ".lock";
pub const HEAD_DIR: &str = "head";

/// Exclusive claim on an output directory, released on drop.
pub struct Lock(PathBuf);

impl Lock {
    pub fn acquire(dir: &Path) -> Result<Lock> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Lock(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::data(format!(
                "{} is in use by another run (remove {} if it is stale)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Directory name of an identifier used in expressions (`N*` is stored as `Nstar`).
pub fn canonical(id: &str) -> &str {
    if id == "N*" {
        STAR_NAME
    } else {
        id
    }
}

fn head_dir(model: &str) -> String {
    format!("{HEAD_DIR}-{model}")
}

pub fn save_trained(dir: &Path, bundle: &TrainedBundle) -> Result<()> {
    let config = &bundle.config;
    let id = run_id(config);
    let save = |name: &str, params: &ParamSet| {
        Checkpoint::new(params.clone(), id.clone(), Some(config.clone()), Some((*bundle.spec).clone()), None)
            .save(&dir.join(name))
    };
    let n = bundle.extractors.len();
    for (i, ex) in bundle.extractors.iter().enumerate() {
        if bundle.trained[i] {
            save(&model_name(i), ex)?;
        }
    }
    if bundle.trained[n] {
        save(STAR_NAME, &bundle.star)?;
    }
    match &bundle.heads {
        Heads::Shared(h) => save(HEAD_DIR, &aggnet::model::read_head(h))?,
        Heads::PerModel { extractors, star } => {
            for (i, h) in extractors.iter().enumerate() {
                if bundle.trained[i] {
                    save(&head_dir(&model_name(i)), &aggnet::model::read_head(h))?;
                }
            }
            if bundle.trained[n] {
                save(&head_dir(STAR_NAME), &aggnet::model::read_head(star))?;
            }
        }
    }
    fs::write(dir.join(METRICS_FILE), metrics_csv(&bundle.history))?;
    let mut echo = serde_json::to_string_pretty(config)?;
    echo.push('\n');
    fs::write(dir.join(CONFIG_ECHO), echo)?;
    Ok(())
}

/// A completed run opened for reading.
pub struct Run {
    pub dir: PathBuf,
    pub config: TrainConfig,
    pub spec: Arc<ModelSpec>,
}

impl Run {
    pub fn open(dir: &Path) -> Result<Run> {
        let echo = dir.join(CONFIG_ECHO);
        if !echo.is_file() {
            return Err(Error::data(format!("{} is not a run directory (no {CONFIG_ECHO})", dir.display())));
        }
        let config = TrainConfig::from_json(&fs::read_to_string(&echo)?)?;
        let spec = Arc::new(config.preset.resolve()?);
        Ok(Run { dir: dir.to_path_buf(), config, spec })
    }

    pub fn has(&self, name: &str) -> bool {
        self.dir.join(canonical(name)).join(MANIFEST_FILE).is_file()
    }

    fn load(&self, name: &str) -> Result<Checkpoint> {
        let name = canonical(name);
        if !self.has(name) {
            return Err(Error::data(format!("no checkpoint `{name}` in {}", self.dir.display())));
        }
        let ck = Checkpoint::load(&self.dir.join(name))?;
        if ck.manifest.model.as_ref().is_some_and(|m| m != &*self.spec) {
            return Err(Error::data(format!("checkpoint `{name}` was saved for a different architecture")));
        }
        Ok(ck)
    }

    pub fn extractor(&self, id: &str) -> Result<ParamSet> {
        let params = self.load(id)?.params;
        if !params.role().is_extractor() {
            return Err(Error::data(format!("checkpoint `{id}` holds {:?}, not an extractor", params.role())));
        }
        Ok(params)
    }

    /// The shared head if the run has one, otherwise the head trained with `id`.
    pub fn head_for(&self, id: &str) -> Result<SharedHead> {
        let name = if self.has(HEAD_DIR) { HEAD_DIR.to_string() } else { head_dir(canonical(id)) };
        Ok(share(self.load(&name)?.params))
    }

    /// `Nstar` when the run trained it, otherwise the expression's first operand.
    pub fn default_donor(&self, first_operand: &str) -> String {
        if self.has(STAR_NAME) {
            STAR_NAME.to_string()
        } else {
            canonical(first_operand).to_string()
        }
    }

    /// Identifiers of the extractors this run trained, `N1..Nn` then `N*`.
    pub fn trained(&self) -> Vec<String> {
        let mut ids: Vec<String> = (0..self.config.n).map(model_name).filter(|m| self.has(m)).collect();
        if self.has(STAR_NAME) {
            ids.push("N*".to_string());
        }
        ids
    }
}
