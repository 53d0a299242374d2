//! Synthetic scene corpora, their simulated tensors, and the on-disk manifest
//! that links the two.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_json, read_scene, read_tensor, write_json, write_scene, write_tensor};
use crate::model::{wrap_angle, ArrayGeometry, PolarGrid, RotatedBox, Scatterer, Scene};
use crate::rng::{label, RngStream};
use crate::simulator::{integrate_heatmap, synthesize_tensor, visibility_mask, SimConfig};
use crate::tensor::{Heatmap, VirtualArrayTensor};

/// Car-sized ground-truth box around each scatterer.
pub const BOX_LENGTH: f64 = 4.5;
pub const BOX_WIDTH: f64 = 1.8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneGenConfig {
    pub count: usize,
    pub seed: u64,
    pub scatterers_min: usize,
    pub scatterers_max: usize,
    pub amplitude_min: f64,
    pub amplitude_max: f64,
    pub visibility_min: f64,
    pub max_radial_velocity: f64,
    /// Bins kept clear at every grid edge.
    pub edge_margin_bins: f64,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        Self {
            count: 100,
            seed: 0,
            scatterers_min: 1,
            scatterers_max: 3,
            amplitude_min: 0.5,
            amplitude_max: 1.5,
            visibility_min: 0.9,
            max_radial_velocity: 10.0,
            edge_margin_bins: 1.0,
        }
    }
}

impl SceneGenConfig {
    pub fn validate(&self, grid: &PolarGrid) -> Result<()> {
        grid.validate()?;
        if self.scatterers_min > self.scatterers_max {
            return Err(Error::invalid(
                "scene generation",
                format!(
                    "scatterers_min {} > scatterers_max {}",
                    self.scatterers_min, self.scatterers_max
                ),
            ));
        }
        if !(0.0 <= self.amplitude_min && self.amplitude_min <= self.amplitude_max) {
            return Err(Error::invalid(
                "scene generation",
                "need 0 <= amplitude_min <= amplitude_max",
            ));
        }
        if !(0.0..=1.0).contains(&self.visibility_min) {
            return Err(Error::invalid("scene generation", "visibility_min outside [0, 1]"));
        }
        if self.max_radial_velocity < 0.0 {
            return Err(Error::invalid("scene generation", "max_radial_velocity < 0"));
        }
        let m = self.edge_margin_bins;
        if m < 0.0 || 2.0 * m >= grid.num_range as f64 || 2.0 * m >= grid.num_azimuth as f64 {
            return Err(Error::invalid(
                "scene generation",
                format!("edge margin {m} leaves no room in the grid"),
            ));
        }
        Ok(())
    }
}

/// Heading with a balanced mix of straight, incoming and oriented vehicles.
fn draw_yaw(rng: &mut RngStream) -> f64 {
    let jitter = 4.0_f64.to_radians();
    match rng.below(3) {
        0 => rng.uniform(-jitter, jitter),
        1 => wrap_angle(PI + rng.uniform(-jitter, jitter)),
        _ => {
            // at least 10° away from both straight and incoming
            let lo = 10.0_f64.to_radians();
            let mag = rng.uniform(lo, PI - lo);
            if rng.bernoulli(0.5) {
                mag
            } else {
                -mag
            }
        }
    }
}

pub fn generate_scene(index: usize, config: &SceneGenConfig, grid: &PolarGrid) -> Scene {
    let mut rng = RngStream::new(config.seed, label("scenes")).derive(index as u64);
    let span = (config.scatterers_max - config.scatterers_min) as u64 + 1;
    let count = config.scatterers_min + rng.below(span) as usize;
    let m = config.edge_margin_bins;
    let mut scatterers = Vec::with_capacity(count);
    let mut boxes = Vec::with_capacity(count);
    for _ in 0..count {
        let range = rng.uniform(
            grid.range_min + m * grid.range_step(),
            grid.range_max - m * grid.range_step(),
        );
        let azimuth = rng.uniform(
            grid.az_min + m * grid.azimuth_step(),
            grid.az_max - m * grid.azimuth_step(),
        );
        let s = Scatterer {
            range,
            azimuth,
            amplitude: rng.uniform(config.amplitude_min, config.amplitude_max),
            visibility: rng.uniform(config.visibility_min, 1.0),
            radial_velocity: rng.uniform(-config.max_radial_velocity, config.max_radial_velocity),
        };
        let (x, y) = s.position();
        boxes.push(RotatedBox::new(x, y, BOX_LENGTH, BOX_WIDTH, draw_yaw(&mut rng)));
        scatterers.push(s);
    }
    Scene {
        id: format!("scene-{index:06}"),
        scatterers,
        boxes,
    }
}

pub fn generate_scenes(config: &SceneGenConfig, grid: &PolarGrid) -> Result<Vec<Scene>> {
    config.validate(grid)?;
    Ok((0..config.count).map(|i| generate_scene(i, config, grid)).collect())
}

/// Per-scene simulation stream; scene `i` never shares draws with scene `j`.
pub fn scene_stream(seed: u64, index: usize) -> RngStream {
    RngStream::new(seed, label("simulate")).derive(index as u64)
}

#[derive(Clone, Debug)]
pub struct Frame {
    pub scene: Scene,
    pub tensor: VirtualArrayTensor,
    /// Realized visibility per scatterer.
    pub visible: Vec<bool>,
}

impl Frame {
    pub fn heatmap(&self) -> Heatmap {
        integrate_heatmap(&self.tensor)
    }

    /// BEV position of the strongest scatterer that reached the array in
    /// this frame, if any.
    pub fn strongest_xy(&self) -> Option<(f64, f64)> {
        let mut best: Option<&Scatterer> = None;
        for (s, _) in self.scene.scatterers.iter().zip(&self.visible).filter(|(_, v)| **v) {
            if best.is_none_or(|b| s.amplitude > b.amplitude) {
                best = Some(s);
            }
        }
        best.map(Scatterer::position)
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub geometry: ArrayGeometry,
    pub grid: PolarGrid,
    pub frames: Vec<Frame>,
}

impl Dataset {
    pub fn simulate(
        scenes: Vec<Scene>,
        geometry: ArrayGeometry,
        grid: PolarGrid,
        sim: &SimConfig,
        seed: u64,
    ) -> Result<Self> {
        let frames = scenes
            .into_par_iter()
            .enumerate()
            .map(|(i, scene)| {
                let rng = scene_stream(seed, i);
                let tensor = synthesize_tensor(&scene, &geometry, &grid, sim, &rng)?;
                let visible = visibility_mask(&scene, &rng);
                Ok(Frame { scene, tensor, visible })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { geometry, grid, frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.grid.cells()
    }

    /// Frames `[start, end)` as a new dataset.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            geometry: self.geometry.clone(),
            grid: self.grid.clone(),
            frames: self.frames[start..end.min(self.frames.len())].to_vec(),
        }
    }

    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Self> {
        let manifest_path = manifest_path.as_ref();
        let manifest: Manifest = read_json(manifest_path)?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        manifest.geometry.validate()?;
        manifest.grid.validate()?;
        let frames = manifest
            .entries
            .par_iter()
            .enumerate()
            .map(|(i, e)| {
                let scene = read_scene(base.join(&e.scene))?;
                let tensor = read_tensor(base.join(&e.tensor))?;
                if tensor.num_virtual() != manifest.geometry.num_virtual()
                    || tensor.num_range() != manifest.grid.num_range
                    || tensor.num_azimuth() != manifest.grid.num_azimuth
                {
                    return Err(Error::Shape(format!(
                        "{} does not match the manifest grid/geometry",
                        e.tensor.display()
                    )));
                }
                let visible = visibility_mask(&scene, &scene_stream(manifest.seed, i));
                Ok(Frame { scene, tensor, visible })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            geometry: manifest.geometry,
            grid: manifest.grid,
            frames,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub scene: PathBuf,
    pub tensor: PathBuf,
}

/// Links scene files to their simulated tensors; paths are relative to the
/// manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub geometry: ArrayGeometry,
    pub grid: PolarGrid,
    pub sim: SimConfig,
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Write every scene as `<id>.json` under `dir`.
pub fn write_scenes(scenes: &[Scene], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    scenes
        .iter()
        .map(|s| {
            let path = dir.join(format!("{}.json", s.id));
            write_scene(s, &path)?;
            Ok(path)
        })
        .collect()
}

/// Scene files in `dir`, sorted by file name.
pub fn list_scene_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Simulate one tensor per scene file into `out_dir` and write the manifest.
/// Scene `i` in file-name order uses stream `i` of `seed`.
pub fn simulate_dir(
    scene_dir: impl AsRef<Path>,
    geometry: &ArrayGeometry,
    grid: &PolarGrid,
    sim: &SimConfig,
    seed: u64,
    out_dir: impl AsRef<Path>,
) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let files = list_scene_files(scene_dir)?;
    let entries = files
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let scene = read_scene(path)?;
            let tensor = synthesize_tensor(&scene, geometry, grid, sim, &scene_stream(seed, i))?;
            let stem = path.file_stem().unwrap().to_string_lossy().into_owned();
            let scene_name = format!("{stem}.json");
            let tensor_name = format!("{stem}.rst");
            write_scene(&scene, out_dir.join(&scene_name))?;
            write_tensor(&tensor, out_dir.join(&tensor_name))?;
            Ok(ManifestEntry {
                scene: scene_name.into(),
                tensor: tensor_name.into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        geometry: geometry.clone(),
        grid: grid.clone(),
        sim: sim.clone(),
        seed,
        entries,
    };
    write_json(&manifest, out_dir.join(MANIFEST_NAME))?;
    Ok(manifest)
}
