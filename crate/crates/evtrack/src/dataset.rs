//! Sequence directory layout and dataset tooling. A sequence directory
//! holds a `manifest.txt` naming the event file, ground-truth boxes (one
//! per frame timestamp), the timestamp list, an optional initialization
//! event segment, and the sensor geometry.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::events::{slice_window, BoundingBox, Event, EventWindow, SensorGeometry};
use crate::io;
use crate::simulator::{
    make_init_sequence, make_synthetic_sequence, simulate_events, SimConfig, SyntheticSpec,
};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const EVENTS_FILE: &str = "events.sevt";
pub const GROUNDTRUTH_FILE: &str = "groundtruth.txt";
pub const TIMESTAMPS_FILE: &str = "timestamps.txt";
pub const INIT_EVENTS_FILE: &str = "init_events.sevt";

/// Names of the files making up one sequence, plus sensor geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceManifest {
    pub events: String,
    pub groundtruth: String,
    pub timestamps: String,
    pub init_events: Option<String>,
    pub width: usize,
    pub height: usize,
    pub description: String,
}

impl SequenceManifest {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut entries = vec![
            ("description".to_string(), self.description.clone()),
            ("events".to_string(), self.events.clone()),
            ("groundtruth".to_string(), self.groundtruth.clone()),
            ("height".to_string(), self.height.to_string()),
            ("timestamps".to_string(), self.timestamps.clone()),
            ("width".to_string(), self.width.to_string()),
        ];
        if let Some(init) = &self.init_events {
            entries.push(("init_events".to_string(), init.clone()));
        }
        entries.sort();
        io::write_kv(&dir.join(MANIFEST_FILE), &entries)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let entries = io::read_kv(&path)?;
        let get = |key: &str| -> Result<String> {
            entries
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| Error::format("sequence manifest", format!("missing key `{key}`")))
        };
        let width = get("width")?
            .parse::<usize>()
            .map_err(|e| Error::format("sequence manifest", format!("bad width: {e}")))?;
        let height = get("height")?
            .parse::<usize>()
            .map_err(|e| Error::format("sequence manifest", format!("bad height: {e}")))?;
        Ok(SequenceManifest {
            events: get("events")?,
            groundtruth: get("groundtruth")?,
            timestamps: get("timestamps")?,
            init_events: entries
                .iter()
                .find(|(k, _)| k == "init_events")
                .map(|(_, v)| v.clone()),
            width,
            height,
            description: get("description").unwrap_or_default(),
        })
    }
}

/// A sequence loaded into memory.
#[derive(Debug, Clone)]
pub struct LoadedSequence {
    pub dir: PathBuf,
    pub name: String,
    pub geometry: SensorGeometry,
    pub events: Vec<Event>,
    pub groundtruth: Vec<BoundingBox>,
    pub timestamps: Vec<u64>,
    pub init_events: Option<Vec<Event>>,
    pub description: String,
}

impl LoadedSequence {
    /// Ground-truth box at the frame timestamp nearest to `t`.
    pub fn gt_at(&self, t: u64) -> BoundingBox {
        let idx = match self.timestamps.binary_search(&t) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) if i >= self.timestamps.len() => self.timestamps.len() - 1,
            Err(i) => {
                let before = t - self.timestamps[i - 1];
                let after = self.timestamps[i] - t;
                if after < before {
                    i
                } else {
                    i - 1
                }
            }
        };
        self.groundtruth[idx]
    }

    /// The initialization segment as an event window spanning all of its
    /// events.
    pub fn init_window(&self) -> Result<Option<EventWindow>> {
        match &self.init_events {
            None => Ok(None),
            Some(events) if events.is_empty() => Ok(None),
            Some(events) => {
                let t_end = events.last().map(|e| e.t + 1).unwrap_or(1);
                Ok(Some(EventWindow::new(
                    events.clone(),
                    0,
                    t_end,
                    self.geometry,
                )?))
            }
        }
    }

    /// Consecutive `[start, start + window_us)` windows covering the
    /// sequence's time span.
    pub fn windows(&self, window_us: u64) -> Result<Vec<EventWindow>> {
        let t0 = *self.timestamps.first().unwrap();
        let t1 = *self.timestamps.last().unwrap();
        if window_us == 0 || t1 <= t0 {
            return Err(Error::InvalidArgument(
                "window duration must be positive and the sequence non-degenerate".into(),
            ));
        }
        let count = ((t1 - t0) / window_us).max(1);
        let mut out = Vec::with_capacity(count as usize);
        for i in 0..count {
            let start = t0 + i * window_us;
            out.push(slice_window(
                &self.events,
                start,
                start + window_us,
                self.geometry,
            )?);
        }
        Ok(out)
    }
}

pub fn load_sequence(dir: &Path) -> Result<LoadedSequence> {
    let manifest = SequenceManifest::load(dir)?;
    let geometry = SensorGeometry::new(manifest.width, manifest.height)?;
    let (events, file_geometry) = io::read_events_binary(&dir.join(&manifest.events))?;
    if file_geometry != geometry {
        return Err(Error::format(
            "sequence",
            format!(
                "event file geometry {}x{} disagrees with manifest {}x{}",
                file_geometry.width(),
                file_geometry.height(),
                geometry.width(),
                geometry.height()
            ),
        ));
    }
    let groundtruth = io::read_groundtruth(&dir.join(&manifest.groundtruth))?;
    let timestamps = io::read_timestamps(&dir.join(&manifest.timestamps))?;
    if groundtruth.len() != timestamps.len() {
        return Err(Error::format(
            "sequence",
            format!(
                "{} ground-truth boxes but {} timestamps",
                groundtruth.len(),
                timestamps.len()
            ),
        ));
    }
    if groundtruth.is_empty() {
        return Err(Error::format("sequence", "no ground-truth entries"));
    }
    let init_events = match &manifest.init_events {
        Some(name) => Some(io::read_events_binary(&dir.join(name))?.0),
        None => None,
    };
    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sequence".to_string());
    Ok(LoadedSequence {
        dir: dir.to_path_buf(),
        name,
        geometry,
        events,
        groundtruth,
        timestamps,
        init_events,
        description: manifest.description,
    })
}

/// Write a complete sequence directory.
#[allow(clippy::too_many_arguments)]
pub fn write_sequence(
    dir: &Path,
    geometry: SensorGeometry,
    events: &[Event],
    groundtruth: &[BoundingBox],
    timestamps: &[u64],
    init_events: Option<&[Event]>,
    description: &str,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    io::write_events_binary(&dir.join(EVENTS_FILE), events, geometry)?;
    io::write_groundtruth(&dir.join(GROUNDTRUTH_FILE), groundtruth)?;
    io::write_timestamps(&dir.join(TIMESTAMPS_FILE), timestamps)?;
    if let Some(init) = init_events {
        io::write_events_binary(&dir.join(INIT_EVENTS_FILE), init, geometry)?;
    }
    let manifest = SequenceManifest {
        events: EVENTS_FILE.to_string(),
        groundtruth: GROUNDTRUTH_FILE.to_string(),
        timestamps: TIMESTAMPS_FILE.to_string(),
        init_events: init_events.map(|_| INIT_EVENTS_FILE.to_string()),
        width: geometry.width(),
        height: geometry.height(),
        description: description.to_string(),
    };
    manifest.save(dir)
}

/// Sequence directories under `root` (directories containing a manifest),
/// sorted by name for deterministic traversal. A root that is itself a
/// sequence directory yields just itself.
pub fn discover_sequences(root: &Path) -> Result<Vec<PathBuf>> {
    if root.join(MANIFEST_FILE).is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut dirs = Vec::new();
    for entry in std::fs::read_dir(root)? {
        let entry = entry?;
        let path = entry.path();
        if path.is_dir() && path.join(MANIFEST_FILE).is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Render a synthetic sequence, simulate its events and the target-edge
/// initialization segment, and write the sequence directory.
pub fn build_synthetic_sequence(
    spec: &SyntheticSpec,
    sim: &SimConfig,
    dir: &Path,
    description: &str,
) -> Result<()> {
    let (frames, groundtruth) = make_synthetic_sequence(spec)?;
    let events = simulate_events(&frames, sim)?;
    let init_seq = make_init_sequence(&frames.frames()[0], &groundtruth[0])?;
    let init_events = simulate_events(&init_seq, sim)?;
    write_sequence(
        dir,
        frames.geometry(),
        &events,
        &groundtruth,
        frames.timestamps(),
        Some(&init_events),
        description,
    )
}
