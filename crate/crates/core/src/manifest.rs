//! Run manifests: which stages to run, where artifacts live, and parameter
//! overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detect::DetectParams;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::microdoppler::{StftParams, Window};
use crate::sync::SyncParams;
use crate::tracker::TrackerParams;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub schema_version: u32,
    /// Scene TOML; relative paths resolve against the manifest's directory.
    pub scene: PathBuf,
    pub output_dir: PathBuf,
    /// Overrides the scene's seed when present.
    #[serde(default)]
    pub rng_seed: Option<u64>,
    #[serde(default)]
    pub exec: Exec,
    /// Frames held in memory per processing block.
    #[serde(default = "default_chunk")]
    pub chunk_frames: usize,
    #[serde(default)]
    pub stages: Stages,
    /// Per-receiver path overrides; unspecified paths default to
    /// `output_dir/rx{id}/…`.
    #[serde(default)]
    pub receivers: Vec<ReceiverPaths>,
    #[serde(default)]
    pub params: Params,
}

fn default_chunk() -> usize {
    512
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stages {
    pub simulate: bool,
    pub sync: bool,
    pub detect: bool,
    pub track: bool,
    pub mdoppler: bool,
    pub evaluate: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Self::all(true)
    }
}

impl Stages {
    pub fn all(on: bool) -> Self {
        Self {
            simulate: on,
            sync: on,
            detect: on,
            track: on,
            mdoppler: on,
            evaluate: on,
        }
    }

    pub fn any(&self) -> bool {
        self.simulate || self.sync || self.detect || self.track || self.mdoppler || self.evaluate
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverPaths {
    pub rx_id: usize,
    pub raw: Option<PathBuf>,
    pub sync_log: Option<PathBuf>,
    pub synced: Option<PathBuf>,
    pub detections: Option<PathBuf>,
    pub tracks: Option<PathBuf>,
    pub spectrogram: Option<PathBuf>,
    pub peaks: Option<PathBuf>,
}

/// Fully resolved artifact paths for one receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverArtifacts {
    pub rx_id: usize,
    pub raw: PathBuf,
    pub sync_log: PathBuf,
    pub synced: PathBuf,
    pub detections: PathBuf,
    pub tracks: PathBuf,
    /// Binary matrix; the sidecar and CSV sit next to it.
    pub spectrogram: PathBuf,
    pub peaks: PathBuf,
}

impl ReceiverArtifacts {
    pub fn in_dir(dir: &Path, rx_id: usize) -> Self {
        let d = dir.join(format!("rx{rx_id}"));
        Self {
            rx_id,
            raw: d.join("raw.cirs"),
            sync_log: d.join("sync.csv"),
            synced: d.join("synced.cirs"),
            detections: d.join("detections.csv"),
            tracks: d.join("tracks.csv"),
            spectrogram: d.join("spectrogram.spgm"),
            peaks: d.join("peaks.csv"),
        }
    }

    pub fn spectrogram_sidecar(&self) -> PathBuf {
        self.spectrogram.with_extension("txt")
    }

    pub fn spectrogram_csv(&self) -> PathBuf {
        self.spectrogram.with_extension("csv")
    }

    fn apply(&mut self, o: &ReceiverPaths, base: &Path) {
        let set = |slot: &mut PathBuf, v: &Option<PathBuf>| {
            if let Some(p) = v {
                *slot = base.join(p);
            }
        };
        set(&mut self.raw, &o.raw);
        set(&mut self.sync_log, &o.sync_log);
        set(&mut self.synced, &o.synced);
        set(&mut self.detections, &o.detections);
        set(&mut self.tracks, &o.tracks);
        set(&mut self.spectrogram, &o.spectrogram);
        set(&mut self.peaks, &o.peaks);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub sync: SyncParams,
    pub detect: DetectParams,
    pub tracker: TrackerOverrides,
    pub mdoppler: MdopplerParams,
    pub eval: EvalParams,
}

/// Tracker settings; unset values come from the scene (tap length, beam
/// spacing, speed bound) or the tracker defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerOverrides {
    pub q: Option<f64>,
    pub sigma_range: Option<f64>,
    pub sigma_aod: Option<f64>,
    pub gate: Option<f64>,
    pub confirm_hits: Option<usize>,
    pub confirm_window: Option<usize>,
    pub max_coast: Option<usize>,
    pub decimation: Option<usize>,
    pub v_max: Option<f64>,
    pub init_position_std: Option<f64>,
    pub init_velocity_std: Option<f64>,
}

impl TrackerOverrides {
    pub fn apply(&self, base: TrackerParams) -> TrackerParams {
        TrackerParams {
            q: self.q.unwrap_or(base.q),
            sigma_range: self.sigma_range.unwrap_or(base.sigma_range),
            sigma_aod: self.sigma_aod.unwrap_or(base.sigma_aod),
            gate: self.gate.unwrap_or(base.gate),
            confirm_hits: self.confirm_hits.unwrap_or(base.confirm_hits),
            confirm_window: self.confirm_window.unwrap_or(base.confirm_window),
            max_coast: self.max_coast.unwrap_or(base.max_coast),
            decimation: self.decimation.unwrap_or(base.decimation),
            v_max: self.v_max.unwrap_or(base.v_max),
            init_position_std: self.init_position_std.unwrap_or(base.init_position_std),
            init_velocity_std: self.init_velocity_std.unwrap_or(base.init_velocity_std),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdopplerParams {
    /// Taps either side of the predicted target tap.
    pub half_width: usize,
    pub window_len: usize,
    pub hop: usize,
    pub window: Window,
    /// Peak floor above the median bin power, dB.
    pub floor_db: f64,
    /// Subtract the slow-time mean before the STFT.
    pub remove_mean: bool,
}

impl Default for MdopplerParams {
    fn default() -> Self {
        let stft = StftParams::default();
        Self {
            half_width: 2,
            window_len: stft.window_len,
            hop: stft.hop,
            window: stft.window,
            floor_db: 10.0,
            remove_mean: true,
        }
    }
}

impl MdopplerParams {
    pub fn stft(&self) -> StftParams {
        StftParams {
            window_len: self.window_len,
            hop: self.hop,
            window: self.window,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    /// Detections within this distance of a person count as hits, m.
    pub match_radius: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self { match_radius: 1.0 }
    }
}

impl RunManifest {
    pub fn new(scene: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            schema_version: MANIFEST_VERSION,
            scene: scene.into(),
            output_dir: output_dir.into(),
            rng_seed: None,
            exec: Exec::default(),
            chunk_frames: default_chunk(),
            stages: Stages::default(),
            receivers: Vec::new(),
            params: Params::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: RunManifest =
            toml::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    /// Load and resolve relative paths against the manifest's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        m.scene = base.join(&m.scene);
        m.output_dir = base.join(&m.output_dir);
        for r in &mut m.receivers {
            for p in [
                &mut r.raw,
                &mut r.sync_log,
                &mut r.synced,
                &mut r.detections,
                &mut r.tracks,
                &mut r.spectrogram,
                &mut r.peaks,
            ]
            .into_iter()
            .flatten()
            {
                *p = base.join(&*p);
            }
        }
        Ok(m)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("manifest: {e}")))
    }

    /// Check values that the schema alone cannot.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MANIFEST_VERSION {
            return Err(Error::Config(format!(
                "manifest schema_version {} is not supported (expected {MANIFEST_VERSION})",
                self.schema_version
            )));
        }
        if self.chunk_frames == 0 {
            return Err(Error::Config("chunk_frames must be at least 1".into()));
        }
        let md = &self.params.mdoppler;
        if md.window_len == 0 || md.hop == 0 {
            return Err(Error::Config(
                "mdoppler window_len and hop must be positive".into(),
            ));
        }
        if self.params.tracker.decimation == Some(0) {
            return Err(Error::Config(
                "tracker decimation must be at least 1".into(),
            ));
        }
        if !(self.params.sync.kappa.is_finite() && self.params.sync.kappa >= 0.0) {
            return Err(Error::Config(
                "sync kappa must be a finite non-negative number".into(),
            ));
        }
        Ok(())
    }

    /// Resolved artifact paths for `num_receivers` receivers.
    pub fn artifacts(&self, num_receivers: usize) -> Result<Vec<ReceiverArtifacts>> {
        let mut out: Vec<ReceiverArtifacts> = (0..num_receivers)
            .map(|rx| ReceiverArtifacts::in_dir(&self.output_dir, rx))
            .collect();
        for o in &self.receivers {
            let slot = out.get_mut(o.rx_id).ok_or_else(|| {
                Error::Config(format!(
                    "receiver override for rx {} but the scene has {num_receivers} receivers",
                    o.rx_id
                ))
            })?;
            slot.apply(o, Path::new(""));
        }
        Ok(out)
    }

    pub fn truth_path(&self) -> PathBuf {
        self.output_dir.join("truth.csv")
    }

    pub fn report_path(&self) -> PathBuf {
        self.output_dir.join("report.json")
    }

    pub fn timings_path(&self) -> PathBuf {
        self.output_dir.join("timings.json")
    }

    /// Check that every input a disabled upstream stage would have produced
    /// already exists.
    pub fn check_inputs(&self, artifacts: &[ReceiverArtifacts]) -> Result<()> {
        let s = &self.stages;
        let need = |p: &Path, why: &str| -> Result<()> {
            if p.exists() {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{why} input {} does not exist",
                    p.display()
                )))
            }
        };
        need(&self.scene, "scene")?;
        for a in artifacts {
            if s.sync && !s.simulate {
                need(&a.raw, "sync")?;
            }
            if (s.detect || s.mdoppler) && !s.sync {
                need(&a.synced, "detect/mdoppler")?;
            }
            if s.track && !s.detect {
                need(&a.detections, "track")?;
            }
            if s.mdoppler && !s.track {
                need(&a.tracks, "mdoppler")?;
            }
        }
        Ok(())
    }
}
