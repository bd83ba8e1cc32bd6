//! Recording CSV files (`sample,lao,dao,zm`) and their JSON sidecar.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{TimeSeries, DEFAULT_SAMPLE_RATE};
use crate::{Error, Result, CHANNEL_NAMES};

/// Sidecar manifest stored next to a recording CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingManifest {
    pub sample_rate_hz: f64,
    #[serde(default)]
    pub subject_id: Option<String>,
    /// Class id of the word repeated in the trial.
    #[serde(default)]
    pub word_label: Option<usize>,
    #[serde(default)]
    pub trial_id: Option<String>,
}

impl Default for RecordingManifest {
    fn default() -> Self {
        Self {
            sample_rate_hz: DEFAULT_SAMPLE_RATE,
            subject_id: None,
            word_label: None,
            trial_id: None,
        }
    }
}

/// `recording.csv` → `recording.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn read_manifest(path: &Path) -> Result<RecordingManifest> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(file)?)
}

pub fn write_manifest(path: &Path, manifest: &RecordingManifest) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(file, manifest)?;
    Ok(())
}

/// Reads a three-channel recording; the sample rate comes from the sidecar
/// when present, else 1 kHz.
pub fn read_recording(path: &Path) -> Result<(TimeSeries, RecordingManifest)> {
    let sidecar = sidecar_path(path);
    let manifest = if sidecar.exists() {
        read_manifest(&sidecar)?
    } else {
        RecordingManifest::default()
    };

    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers()?.clone();
    let expected = ["sample", CHANNEL_NAMES[0], CHANNEL_NAMES[1], CHANNEL_NAMES[2]];
    if headers.iter().map(str::trim).ne(expected) {
        return Err(Error::format(format!(
            "{}: expected header `{}`, found `{}`",
            path.display(),
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut channels = vec![Vec::new(), Vec::new(), Vec::new()];
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        for (c, channel) in channels.iter_mut().enumerate() {
            let field = record.get(c + 1).unwrap_or("");
            let value: f64 = field.trim().parse().map_err(|_| {
                Error::format(format!(
                    "{}: row {}: cannot parse `{field}` as a number",
                    path.display(),
                    row + 2
                ))
            })?;
            channel.push(value);
        }
    }
    let ts = TimeSeries::new(channels, manifest.sample_rate_hz)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    Ok((ts, manifest))
}

/// Writes a three-channel series. `first_sample` offsets the `sample`
/// column (an envelope starts at raw index `N_w / 2`).
pub fn write_recording(path: &Path, ts: &TimeSeries, first_sample: usize) -> Result<()> {
    if ts.channel_count() != 3 {
        return Err(Error::invalid(format!(
            "recording files hold 3 channels, got {}",
            ts.channel_count()
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    writer.write_record(["sample", CHANNEL_NAMES[0], CHANNEL_NAMES[1], CHANNEL_NAMES[2]])?;
    for i in 0..ts.len() {
        writer.write_record([
            (first_sample + i).to_string(),
            ts.channel(0)[i].to_string(),
            ts.channel(1)[i].to_string(),
            ts.channel(2)[i].to_string(),
        ])?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
