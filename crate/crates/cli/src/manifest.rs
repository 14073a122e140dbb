//! `manifest.json`: everything needed to reproduce a run.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Context, Kind, Result};

pub struct Manifest {
    command: &'static str,
    started: Instant,
    seed: Option<u64>,
    config: Value,
    outputs: Vec<String>,
    results: serde_json::Map<String, Value>,
}

impl Manifest {
    pub fn start(command: &'static str) -> Self {
        Manifest {
            command,
            started: Instant::now(),
            seed: None,
            config: Value::Null,
            outputs: Vec::new(),
            results: serde_json::Map::new(),
        }
    }

    pub fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    pub fn config(&mut self, config: &impl Serialize) {
        self.config = serde_json::to_value(config).expect("configuration serializes");
    }

    pub fn output(&mut self, path: &Path) {
        let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        self.outputs.push(name);
    }

    pub fn result(&mut self, key: &str, value: impl Serialize) {
        self.results
            .insert(key.to_string(), serde_json::to_value(value).expect("result serializes"));
    }

    pub fn write(mut self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        self.outputs.push("manifest.json".into());
        let doc = json!({
            "command": self.command,
            "versions": {
                "rtpmcmc": env!("CARGO_PKG_VERSION"),
            },
            "seed": self.seed,
            "config": self.config,
            "wall_time_seconds": self.started.elapsed().as_secs_f64(),
            "outputs": self.outputs,
            "results": self.results,
        });
        write_json(&path, &doc)?;
        Ok(path)
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    std::fs::write(path, text).context_kind(Kind::Io, format!("cannot write {}", path.display()))
}
