//! On-disk datasets: one JSON file per episode plus `manifest.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{oracle_action, sample_scene, Demo, SceneSpec, TaskConfig};
use crate::error::{Error, Result};
use crate::geometry::{ActionLayout, ActionVec};

pub const DATASET_FORMAT: &str = "c3dm-dataset/1";
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub task: TaskConfig,
    pub seeds: Vec<u64>,
    pub episodes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub index: usize,
    pub seed: u64,
    pub scene: SceneSpec,
    /// Oracle action, table frame: pick (x, y, yaw), place (x, y, yaw).
    pub action: Vec<f64>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Sample one scene per seed and write it with its oracle action.
pub fn write_dataset(dir: &Path, task: &TaskConfig, seeds: &[u64]) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut episodes = Vec::with_capacity(seeds.len());
    for (index, &seed) in seeds.iter().enumerate() {
        let scene = sample_scene(task, seed)?;
        let action = oracle_action(&scene).values;
        let name = format!("ep{index:05}.json");
        write_json(
            &dir.join(&name),
            &Episode {
                index,
                seed,
                scene,
                action,
            },
        )?;
        episodes.push(name);
    }
    let manifest = Manifest {
        format: DATASET_FORMAT.to_string(),
        task: task.clone(),
        seeds: seeds.to_vec(),
        episodes,
    };
    write_json(&dir.join(MANIFEST_NAME), &manifest)?;
    Ok(manifest)
}

pub fn read_dataset(dir: &Path) -> Result<(Manifest, Vec<Demo>)> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST_NAME))?;
    if manifest.format != DATASET_FORMAT {
        return Err(Error::Config(format!(
            "unsupported dataset format `{}`",
            manifest.format
        )));
    }
    let mut demos = Vec::with_capacity(manifest.episodes.len());
    for name in &manifest.episodes {
        let ep: Episode = read_json(&dir.join(name))?;
        ep.scene.validate()?;
        let action = ActionVec::global(ep.action, ActionLayout::desk())?;
        demos.push(Demo {
            scene: ep.scene,
            action,
        });
    }
    Ok((manifest, demos))
}
