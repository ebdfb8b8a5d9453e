//! On-disk frame-pair datasets.
//!
//! A dataset directory holds `manifest.json` plus shards
//! `data_<split>_<k>.bin` in the SVLB tensor container. Each trajectory
//! contributes `<id>/obs` (one observation per frame: `C×H×W` pixels or an
//! embedding row), and when known `<id>/states` and `<id>/aux`. The manifest
//! is written last, so a directory with a manifest is complete.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{pnm, render_state, Geometry, StateEmbedding, EMBED_WIDTH};
use crate::dynsys::{SystemSpec, Trajectory};
use crate::error::{Error, Result};
use crate::numcore::checkpoint::{load_tensors, save_tensors};
use crate::numcore::{Rng, Tensor};

pub const MANIFEST: &str = "manifest.json";

/// Child stream of the dataset seed used for the split shuffle.
const SPLIT_STREAM: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetMode {
    Frames,
    Vectors,
}

impl std::str::FromStr for DatasetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frames" => Ok(DatasetMode::Frames),
            "vectors" => Ok(DatasetMode::Vectors),
            _ => Err(Error::Config {
                key: "dataset.mode".into(),
                msg: format!("expected `frames` or `vectors`, got `{s}`"),
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }

    fn bump(&mut self, split: Split, by: usize) {
        match split {
            Split::Train => self.train += by,
            Split::Val => self.val += by,
            Split::Test => self.test += by,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub mode: DatasetMode,
    pub geometry: Geometry,
    /// Target pair starts this many frames after the input pair.
    pub shift: usize,
    pub embed_seed: u64,
    pub trajectories_per_shard: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            mode: DatasetMode::Frames,
            geometry: Geometry::default(),
            shift: 2,
            embed_seed: 0,
            trajectories_per_shard: 64,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.shift == 0 {
            return Err(Error::Config {
                key: "dataset.shift".into(),
                msg: "must be at least 1".into(),
            });
        }
        if self.trajectories_per_shard == 0 {
            return Err(Error::Config {
                key: "dataset.trajectories_per_shard".into(),
                msg: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub id: usize,
    /// Source name for imported trajectories.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub frames: usize,
    pub split: Split,
    pub shard: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    /// `None` for imported footage.
    pub system: Option<SystemSpec>,
    pub mode: DatasetMode,
    pub geometry: Geometry,
    /// Shape of one stored observation.
    pub observation_shape: Vec<usize>,
    pub shift: usize,
    pub dt_frame: f64,
    pub seed: u64,
    pub embed_seed: Option<u64>,
    pub sample_counts: SplitCounts,
    pub trajectory_counts: SplitCounts,
    pub trajectories: Vec<TrajectoryEntry>,
    pub shards: Vec<String>,
    pub aux_names: Vec<String>,
}

impl DatasetManifest {
    pub fn samples_per_trajectory(&self, frames: usize) -> usize {
        frames.saturating_sub(self.shift + 1)
    }
}

/// One trajectory ready to be written: observations and optional ground truth,
/// each with one leading row per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryData {
    pub id: usize,
    pub name: Option<String>,
    pub observations: Tensor,
    pub states: Option<Tensor>,
    pub aux: Option<Tensor>,
}

impl TrajectoryData {
    pub fn frames(&self) -> usize {
        self.observations.shape()[0]
    }

    fn row(t: &Tensor, i: usize) -> &[f64] {
        let width = t.len() / t.shape()[0];
        &t.data()[i * width..(i + 1) * width]
    }

    pub fn observation(&self, frame: usize) -> &[f64] {
        Self::row(&self.observations, frame)
    }

    pub fn state(&self, frame: usize) -> Option<&[f64]> {
        self.states.as_ref().map(|s| Self::row(s, frame))
    }

    pub fn aux(&self, frame: usize) -> Option<&[f64]> {
        self.aux.as_ref().map(|a| Self::row(a, frame))
    }
}

/// Shared metadata for [`write_dataset`].
struct Meta {
    system: Option<SystemSpec>,
    mode: DatasetMode,
    geometry: Geometry,
    shift: usize,
    dt_frame: f64,
    seed: u64,
    embed_seed: Option<u64>,
    aux_names: Vec<String>,
    trajectories_per_shard: usize,
}

fn split_assignment(n: usize, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).split(SPLIT_STREAM).shuffle(&mut order);
    let n_train = (0.8 * n as f64).round() as usize;
    let n_val = (0.1 * n as f64).round() as usize;
    let mut out = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    out
}

fn write_dataset_inner(out_dir: &Path, data: &[TrajectoryData], meta: Meta) -> Result<DatasetManifest> {
    fs::create_dir_all(out_dir)?;
    if let Ok(old) = fs::read_dir(out_dir) {
        for entry in old.flatten() {
            let name = entry.file_name().to_string_lossy().into_owned();
            if name == MANIFEST || (name.starts_with("data_") && name.ends_with(".bin")) {
                fs::remove_file(entry.path())?;
            }
        }
    }
    let splits = split_assignment(data.len(), meta.seed);
    let mut entries = Vec::with_capacity(data.len());
    let mut shards = Vec::new();
    let mut sample_counts = SplitCounts::default();
    let mut trajectory_counts = SplitCounts::default();
    let observation_shape = data
        .first()
        .map(|d| d.observations.shape()[1..].to_vec())
        .unwrap_or_default();
    for split in Split::ALL {
        let members: Vec<&TrajectoryData> = data
            .iter()
            .zip(&splits)
            .filter(|(_, &s)| s == split)
            .map(|(d, _)| d)
            .collect();
        for (k, chunk) in members.chunks(meta.trajectories_per_shard).enumerate() {
            let shard = format!("data_{split}_{k}.bin");
            let mut tensors = Vec::new();
            for d in chunk {
                tensors.push((format!("{}/obs", d.id), d.observations.clone()));
                if let Some(s) = &d.states {
                    tensors.push((format!("{}/states", d.id), s.clone()));
                }
                if let Some(a) = &d.aux {
                    tensors.push((format!("{}/aux", d.id), a.clone()));
                }
                entries.push(TrajectoryEntry {
                    id: d.id,
                    name: d.name.clone(),
                    frames: d.frames(),
                    split,
                    shard: shard.clone(),
                });
                trajectory_counts.bump(split, 1);
                sample_counts.bump(split, d.frames() - meta.shift - 1);
            }
            save_tensors(&out_dir.join(&shard), &tensors)?;
            shards.push(shard);
        }
    }
    entries.sort_by_key(|e| e.id);
    let manifest = DatasetManifest {
        format_version: 1,
        system: meta.system,
        mode: meta.mode,
        geometry: meta.geometry,
        observation_shape,
        shift: meta.shift,
        dt_frame: meta.dt_frame,
        seed: meta.seed,
        embed_seed: meta.embed_seed,
        sample_counts,
        trajectory_counts,
        trajectories: entries,
        shards,
        aux_names: meta.aux_names,
    };
    fs::write(out_dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

fn check_lengths(lengths: impl Iterator<Item = (usize, usize)>, shift: usize) -> Result<()> {
    let short: Vec<String> = lengths
        .filter(|&(_, n)| n < shift + 2)
        .map(|(id, n)| format!("trajectory {id} has {n} frames"))
        .collect();
    if short.is_empty() {
        Ok(())
    } else {
        Err(Error::Contract(format!(
            "shift {shift} needs at least {} frames per trajectory: {}",
            shift + 2,
            short.join("; ")
        )))
    }
}

/// Writes already-rendered trajectories (used by importers and tests).
pub fn write_dataset(
    out_dir: &Path,
    data: &[TrajectoryData],
    config: &DatasetConfig,
    system: Option<SystemSpec>,
    dt_frame: f64,
    aux_names: Vec<String>,
    seed: u64,
) -> Result<DatasetManifest> {
    config.validate()?;
    check_lengths(data.iter().map(|d| (d.id, d.frames())), config.shift)?;
    let embed_seed = (config.mode == DatasetMode::Vectors).then_some(config.embed_seed);
    write_dataset_inner(
        out_dir,
        data,
        Meta {
            system,
            mode: config.mode,
            geometry: config.geometry,
            shift: config.shift,
            dt_frame,
            seed,
            embed_seed,
            aux_names,
            trajectories_per_shard: config.trajectories_per_shard,
        },
    )
}

/// Renders (or embeds) simulated trajectories and writes them as a dataset.
/// Split assignment is a seeded shuffle of whole trajectories.
pub fn build_dataset(
    trajectories: &[Trajectory],
    config: &DatasetConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    config.validate()?;
    let Some(first) = trajectories.first() else {
        return Err(Error::Contract("no trajectories to write".into()));
    };
    let spec = first.spec.clone();
    if trajectories
        .iter()
        .any(|t| t.spec != spec || t.dt_frame != first.dt_frame)
    {
        return Err(Error::Contract("trajectories mix systems or frame intervals".into()));
    }
    check_lengths(trajectories.iter().map(Trajectory::len).enumerate(), config.shift)?;
    let embedding = match config.mode {
        DatasetMode::Vectors => Some(StateEmbedding::new(&spec, config.embed_seed)?),
        DatasetMode::Frames => None,
    };
    let mut data = Vec::with_capacity(trajectories.len());
    let mut clamped = 0usize;
    for (id, traj) in trajectories.iter().enumerate() {
        let n = traj.len();
        let (obs_shape, obs) = match &embedding {
            Some(e) => {
                let mut rows = Vec::with_capacity(n * EMBED_WIDTH);
                for s in &traj.states {
                    rows.extend(e.embed(s)?);
                }
                (vec![n, EMBED_WIDTH], rows)
            }
            None => {
                let g = config.geometry;
                let mut px = Vec::with_capacity(n * g.pixel_count());
                for s in &traj.states {
                    let r = render_state(&spec, s, g)?;
                    clamped += r.clamped as usize;
                    px.extend(r.frame.pixels);
                }
                (vec![n, g.channels, g.height, g.width], px)
            }
        };
        let states: Vec<f64> = traj.states.iter().flat_map(|s| s.values().iter().copied()).collect();
        let aux: Vec<f64> = traj.aux.iter().flatten().copied().collect();
        data.push(TrajectoryData {
            id,
            name: None,
            observations: Tensor::new(obs_shape, obs)?,
            states: Some(Tensor::new(vec![n, states.len() / n], states)?),
            aux: if aux.is_empty() {
                None
            } else {
                Some(Tensor::new(vec![n, aux.len() / n], aux)?)
            },
        });
    }
    if clamped > 0 {
        log::warn!("{clamped} frames had shapes clamped to the border");
    }
    write_dataset(
        out_dir,
        &data,
        config,
        Some(spec),
        first.dt_frame,
        first.aux_names.clone(),
        seed,
    )
}

/// Imports `<trajectory>_<index>.(pgm|ppm)` files as a frames-mode dataset.
/// Indices must run from 0 without gaps; all files must share one size.
pub fn import_frames_dir(
    frames_dir: &Path,
    config: &DatasetConfig,
    dt_frame: f64,
    seed: u64,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    config.validate()?;
    if config.mode != DatasetMode::Frames {
        return Err(Error::Config {
            key: "dataset.mode".into(),
            msg: "imported footage can only form a frames-mode dataset".into(),
        });
    }
    let mut groups: BTreeMap<String, BTreeMap<usize, PathBuf>> = BTreeMap::new();
    for entry in fs::read_dir(frames_dir)? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if ext != "pgm" && ext != "ppm" {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        let parsed = stem
            .rsplit_once('_')
            .and_then(|(name, idx)| idx.parse::<usize>().ok().map(|i| (name.to_string(), i)));
        let Some((name, index)) = parsed else {
            return Err(Error::parse(&path, "file name is not <trajectory>_<index>"));
        };
        if groups.entry(name).or_default().insert(index, path.clone()).is_some() {
            return Err(Error::parse(&path, "duplicate frame index"));
        }
    }
    if groups.is_empty() {
        return Err(Error::Contract(format!(
            "no .pgm/.ppm frames in {}",
            frames_dir.display()
        )));
    }
    let g = config.geometry;
    let mut native: Option<(Geometry, PathBuf)> = None;
    let mut data = Vec::with_capacity(groups.len());
    for (id, (name, frames)) in groups.into_iter().enumerate() {
        if let Some(gap) = (0..frames.len()).find(|i| !frames.contains_key(i)) {
            return Err(Error::Contract(format!("trajectory `{name}` is missing frame {gap}")));
        }
        let mut px = Vec::with_capacity(frames.len() * g.pixel_count());
        for path in frames.values() {
            let frame = pnm::read(path)?;
            match &native {
                Some((geom, first)) if *geom != frame.geometry => {
                    return Err(Error::parse(
                        path,
                        format!(
                            "size {}×{}×{} differs from {} ({}×{}×{})",
                            frame.geometry.width,
                            frame.geometry.height,
                            frame.geometry.channels,
                            first.display(),
                            geom.width,
                            geom.height,
                            geom.channels
                        ),
                    ))
                }
                Some(_) => {}
                None => native = Some((frame.geometry, path.clone())),
            }
            px.extend(pnm::resample(&frame, g).pixels);
        }
        data.push(TrajectoryData {
            id,
            name: Some(name),
            observations: Tensor::new(vec![frames.len(), g.channels, g.height, g.width], px)?,
            states: None,
            aux: None,
        });
    }
    write_dataset(out_dir, &data, config, None, dt_frame, Vec::new(), seed)
}

/// Position of one sample: trajectory index into [`Dataset::trajectories`]
/// and the frame index of the first input frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SampleRef {
    pub traj: usize,
    pub frame: usize,
}

/// Input pair `(x_t, x_{t+1})` and target pair `(x_{t+s}, x_{t+s+1})`,
/// stacked along the channel axis.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePairSample {
    pub input: Tensor,
    pub target: Tensor,
    pub trajectory_id: usize,
    pub frame_index: usize,
}

/// Vectors-mode sample: the embedding at `t` stands in for the outer latent
/// of the input pair; `target` is the embedding at `t + shift`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorSample {
    pub embedding: Vec<f64>,
    pub target: Vec<f64>,
    pub trajectory_id: usize,
    pub frame_index: usize,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
    /// In manifest (trajectory id) order.
    pub trajectories: Vec<(TrajectoryEntry, TrajectoryData)>,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST);
        let text = fs::read_to_string(&manifest_path)?;
        let manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::parse(&manifest_path, e.to_string()))?;
        let mut tensors: BTreeMap<String, Tensor> = BTreeMap::new();
        for shard in &manifest.shards {
            tensors.extend(load_tensors(&dir.join(shard))?);
        }
        let mut trajectories = Vec::with_capacity(manifest.trajectories.len());
        let mut counts = SplitCounts::default();
        for entry in &manifest.trajectories {
            let missing = || Error::parse(&manifest_path, format!("trajectory {} not in shards", entry.id));
            let observations = tensors.remove(&format!("{}/obs", entry.id)).ok_or_else(missing)?;
            if observations.shape()[0] != entry.frames || observations.shape()[1..] != manifest.observation_shape[..] {
                return Err(Error::parse(
                    &manifest_path,
                    format!(
                        "trajectory {} shape {:?} disagrees with manifest",
                        entry.id,
                        observations.shape()
                    ),
                ));
            }
            counts.bump(entry.split, manifest.samples_per_trajectory(entry.frames));
            trajectories.push((
                entry.clone(),
                TrajectoryData {
                    id: entry.id,
                    name: entry.name.clone(),
                    observations,
                    states: tensors.remove(&format!("{}/states", entry.id)),
                    aux: tensors.remove(&format!("{}/aux", entry.id)),
                },
            ));
        }
        if counts != manifest.sample_counts {
            return Err(Error::parse(
                &manifest_path,
                format!(
                    "sample counts {counts:?} disagree with manifest {:?}",
                    manifest.sample_counts
                ),
            ));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            trajectories,
        })
    }

    pub fn shift(&self) -> usize {
        self.manifest.shift
    }

    /// Indices of trajectories in a split.
    pub fn split_trajectories(&self, split: Split) -> Vec<usize> {
        self.trajectories
            .iter()
            .enumerate()
            .filter(|(_, (e, _))| e.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// Every sample of a split, ordered by (trajectory, frame).
    pub fn samples(&self, split: Split) -> Vec<SampleRef> {
        let mut out = Vec::new();
        for traj in self.split_trajectories(split) {
            out.extend(self.trajectory_samples(traj));
        }
        out
    }

    pub fn trajectory_samples(&self, traj: usize) -> impl Iterator<Item = SampleRef> {
        let n = self.manifest.samples_per_trajectory(self.trajectories[traj].0.frames);
        (0..n).map(move |frame| SampleRef { traj, frame })
    }

    /// The next sample in the same trajectory, if any.
    pub fn successor(&self, s: SampleRef) -> Option<SampleRef> {
        let n = self.manifest.samples_per_trajectory(self.trajectories[s.traj].0.frames);
        (s.frame + 1 < n).then_some(SampleRef {
            traj: s.traj,
            frame: s.frame + 1,
        })
    }

    pub fn data(&self, traj: usize) -> &TrajectoryData {
        &self.trajectories[traj].1
    }

    pub fn observation(&self, traj: usize, frame: usize) -> &[f64] {
        self.data(traj).observation(frame)
    }

    fn stacked(&self, traj: usize, frame: usize) -> Result<Tensor> {
        let mut shape = self.manifest.observation_shape.clone();
        if shape.len() != 3 {
            return Err(Error::Contract("frame pairs need a frames-mode dataset".into()));
        }
        shape[0] *= 2;
        let mut px = self.observation(traj, frame).to_vec();
        px.extend_from_slice(self.observation(traj, frame + 1));
        Tensor::new(shape, px)
    }

    pub fn frame_pair(&self, s: SampleRef) -> Result<FramePairSample> {
        Ok(FramePairSample {
            input: self.stacked(s.traj, s.frame)?,
            target: self.stacked(s.traj, s.frame + self.shift())?,
            trajectory_id: self.trajectories[s.traj].0.id,
            frame_index: s.frame,
        })
    }

    pub fn vector_sample(&self, s: SampleRef) -> Result<VectorSample> {
        if self.manifest.mode != DatasetMode::Vectors {
            return Err(Error::Contract("vector samples need a vectors-mode dataset".into()));
        }
        Ok(VectorSample {
            embedding: self.observation(s.traj, s.frame).to_vec(),
            target: self.observation(s.traj, s.frame + self.shift()).to_vec(),
            trajectory_id: self.trajectories[s.traj].0.id,
            frame_index: s.frame,
        })
    }

    /// Batched input and target stacks, `B×2C×H×W`.
    pub fn frame_batch(&self, samples: &[SampleRef]) -> Result<(Tensor, Tensor)> {
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        let mut shape = vec![samples.len()];
        for (i, &s) in samples.iter().enumerate() {
            let p = self.frame_pair(s)?;
            if i == 0 {
                shape.extend_from_slice(p.input.shape());
            }
            inputs.extend(p.input.into_data());
            targets.extend(p.target.into_data());
        }
        Ok((Tensor::new(shape.clone(), inputs)?, Tensor::new(shape, targets)?))
    }
}
