//! File codecs: binary CIR streams and spectrograms, CSV tables.

pub mod frames;
pub mod spectrogram;

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub use frames::{read_frames, write_frames, FrameHeader, FrameReader, FrameWriter};
pub use spectrogram::{read_spectrogram, write_sidecar, write_spectrogram};

/// Write rows as CSV with a header line.
pub fn write_csv<T: Serialize>(
    path: impl AsRef<Path>,
    rows: impl IntoIterator<Item = T>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::csv(path, e))
}

/// Serialize to pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub fn read_text(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::Detection;
    use crate::sync::{SyncEntry, SyncStatus};
    use crate::tracker::{TrackSample, TrackStatus};
    use proptest::prelude::*;

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![
            any::<f64>().prop_filter("finite", |v| v.is_finite()),
            Just(0.1),
            Just(-0.0),
            Just(1e-300)
        ]
    }

    #[test]
    fn sync_entries_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let rows = vec![
            SyncEntry {
                rx_id: 0,
                k: 0,
                los_tap: 3,
                shift: 3,
                phase: 0.25,
                magnitude: 1.0,
                threshold: 0.1,
                status: SyncStatus::Ok,
            },
            SyncEntry {
                rx_id: 0,
                k: 1,
                los_tap: -1,
                shift: 3,
                phase: 0.25,
                magnitude: 0.0,
                threshold: 0.1,
                status: SyncStatus::ReusedPrevious,
            },
        ];
        write_csv(&path, &rows).unwrap();
        assert_eq!(read_csv::<SyncEntry>(&path).unwrap(), rows);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("rx_id,k,los_tap,shift,phase,magnitude,threshold,status"));
        assert!(text.contains("reused_previous"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn detections_and_tracks_round_trip(vals in prop::collection::vec(finite(), 6), k in 0usize..100000, tap in 0usize..128) {
            let dir = tempfile::tempdir().unwrap();
            let det = Detection { k, rx_id: 1, tap, beam: 3, power: vals[0], excess_range: vals[1], aod: vals[2], x: vals[3], y: vals[4] };
            let path = dir.path().join("d.csv");
            write_csv(&path, [&det]).unwrap();
            prop_assert_eq!(read_csv::<Detection>(&path).unwrap(), vec![det]);

            let t = TrackSample { k, rx_id: 0, track_id: tap, x: vals[5], y: vals[0], vx: vals[1], vy: vals[2], status: TrackStatus::Coasting };
            let path = dir.path().join("t.csv");
            write_csv(&path, [&t]).unwrap();
            prop_assert_eq!(read_csv::<TrackSample>(&path).unwrap(), vec![t]);
        }
    }
}
