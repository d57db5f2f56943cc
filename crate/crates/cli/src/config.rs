//! Config-file merging and the resolved run record.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use breastsos::dataset::PipelineConfig;
use breastsos::PIPELINE_VERSION;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::Failure;

pub const RUN_CONFIG: &str = "run_config.json";

/// Contents of a `--config` file: flag values keyed by flag name, plus an
/// optional `pipeline` object overriding the pipeline defaults.
#[derive(Debug, Default)]
pub struct ConfigFile {
    pub path: Option<PathBuf>,
    pub flags: Map<String, Value>,
    pub pipeline: Option<Value>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        let value: Value =
            serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        let Value::Object(mut flags) = value else {
            return Err(Failure::usage(format!("{}: expected a JSON object", path.display())));
        };
        let pipeline = flags.remove("pipeline");
        Ok(ConfigFile {
            path: Some(path.to_path_buf()),
            flags,
            pipeline,
        })
    }

    /// Fills every flag left unset on the command line from the file.
    /// Keys that `T` does not know are ignored, so one file can serve
    /// several subcommands.
    pub fn merge<T: Serialize + DeserializeOwned>(&self, args: &T) -> Result<T, Failure> {
        let mut v = serde_json::to_value(args).expect("arguments serialize");
        let obj = v.as_object_mut().expect("arguments are a struct");
        for (k, fv) in &self.flags {
            if let Some(slot) = obj.get_mut(k) {
                if slot.is_null() {
                    *slot = fv.clone();
                }
            } else {
                log::debug!("config key `{k}` does not apply here");
            }
        }
        serde_json::from_value(v).map_err(|e| Failure::usage(format!("config file: {e}")))
    }

    pub fn pipeline(&self) -> Result<PipelineConfig, Failure> {
        let cfg = match &self.pipeline {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| Failure::usage(format!("pipeline: {e}")))?,
            None => PipelineConfig::default(),
        };
        cfg.validate().map_err(|e| Failure::usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Serialize, Deserialize)]
pub struct RunConfig<A> {
    pub pipeline_version: String,
    pub command: String,
    pub config_file: Option<PathBuf>,
    pub args: A,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pipeline: Option<PipelineConfig>,
}

pub fn write_run_config<A: Serialize>(
    dir: &Path,
    command: &str,
    file: &ConfigFile,
    args: &A,
    pipeline: Option<&PipelineConfig>,
) -> anyhow::Result<()> {
    let rc = RunConfig {
        pipeline_version: PIPELINE_VERSION.into(),
        command: command.into(),
        config_file: file.path.clone(),
        args,
        pipeline: pipeline.cloned(),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(RUN_CONFIG);
    let mut json = serde_json::to_vec_pretty(&rc)?;
    json.push(b'\n');
    fs::write(&path, json).with_context(|| format!("writing {}", path.display()))
}
