//! Dataset archives.
//!
//! Directory layout: one `segment_NNNNN.csv` per sample (header `lao,dao,zm`,
//! 1500 rows) plus `manifest.json`.
//!
//! Packed layout (little-endian): magic `KDSS`, `u32` version, `u32` sample
//! count, then per sample 4500 `f32` values (channel-major) followed by a
//! `u8` label.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{GeneratorConfig, LabeledDataset};
use crate::words::{WordSegment, WORD_CHANNELS, WORD_SAMPLES};
use crate::{Error, Result, CHANNEL_NAMES, CLASS_COUNT};

pub const ARCHIVE_VERSION: u32 = 1;
pub const PACKED_MAGIC: [u8; 4] = *b"KDSS";
pub const PACKED_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub file: String,
    pub label: usize,
    pub center: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub format_version: u32,
    pub class_count: usize,
    pub samples: Vec<ArchiveEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
}

pub fn save_archive(ds: &LabeledDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(ds.len());
    for (i, s) in ds.samples().iter().enumerate() {
        let file = format!("segment_{i:05}.csv");
        write_segment_csv(&dir.join(&file), s)?;
        entries.push(ArchiveEntry {
            file,
            label: ds.label(i),
            center: s.center,
        });
    }
    let manifest = ArchiveManifest {
        format_version: ARCHIVE_VERSION,
        class_count: ds.class_count(),
        samples: entries,
        generator: ds.generator.clone(),
    };
    let path = dir.join("manifest.json");
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &manifest)?;
    Ok(())
}

pub fn write_segment_csv(path: &Path, s: &WordSegment) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(CHANNEL_NAMES)?;
    for t in 0..WORD_SAMPLES {
        w.write_record((0..WORD_CHANNELS).map(|c| s.channel(c)[t].to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_segment_csv(path: &Path, center: usize, label: Option<usize>) -> Result<WordSegment> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(BufReader::new(file));
    if r.headers()?.iter().map(str::trim).ne(CHANNEL_NAMES) {
        return Err(Error::format(format!("{}: expected header `lao,dao,zm`", path.display())));
    }
    let mut channels = vec![Vec::with_capacity(WORD_SAMPLES); WORD_CHANNELS];
    for record in r.records() {
        let record = record?;
        for (c, ch) in channels.iter_mut().enumerate() {
            let field = record.get(c).unwrap_or("");
            ch.push(field.trim().parse::<f32>().map_err(|_| {
                Error::format(format!("{}: bad value `{field}`", path.display()))
            })?);
        }
    }
    if channels[0].len() != WORD_SAMPLES {
        return Err(Error::format(format!(
            "{}: expected {WORD_SAMPLES} rows, found {}",
            path.display(),
            channels[0].len()
        )));
    }
    WordSegment::new(channels.concat(), center, label)
}

pub fn load_archive(dir: &Path) -> Result<LabeledDataset> {
    let path = dir.join("manifest.json");
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: ArchiveManifest = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    if manifest.format_version != ARCHIVE_VERSION {
        return Err(Error::format(format!(
            "unsupported archive version {}",
            manifest.format_version
        )));
    }
    let samples = manifest
        .samples
        .iter()
        .map(|e| read_segment_csv(&dir.join(&e.file), e.center, Some(e.label)))
        .collect::<Result<Vec<_>>>()?;
    let mut ds = LabeledDataset::new(samples, manifest.class_count)
        .map_err(|e| Error::format(e.to_string()))?;
    ds.generator = manifest.generator;
    Ok(ds)
}

pub fn save_packed(ds: &LabeledDataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(&PACKED_MAGIC).map_err(io)?;
    w.write_u32::<LittleEndian>(PACKED_VERSION).map_err(io)?;
    w.write_u32::<LittleEndian>(ds.len() as u32).map_err(io)?;
    for (i, s) in ds.samples().iter().enumerate() {
        for &v in s.data() {
            w.write_f32::<LittleEndian>(v).map_err(io)?;
        }
        let label = u8::try_from(ds.label(i))
            .map_err(|_| Error::invalid("packed archives hold labels below 256"))?;
        w.write_u8(label).map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::format("packed archive is truncated")
    } else {
        Error::format(format!("packed archive: {e}"))
    }
}

pub fn read_packed<R: Read>(mut r: R) -> Result<LabeledDataset> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if magic != PACKED_MAGIC {
        return Err(Error::format(format!("bad magic {magic:?}, expected KDSS")));
    }
    let version = r.read_u32::<LittleEndian>().map_err(truncated)?;
    if version != PACKED_VERSION {
        return Err(Error::format(format!("unsupported packed version {version}")));
    }
    let count = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
    let mut samples = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let mut data = vec![0f32; WORD_SAMPLES * WORD_CHANNELS];
        r.read_f32_into::<LittleEndian>(&mut data).map_err(truncated)?;
        let label = r.read_u8().map_err(truncated)? as usize;
        samples.push(WordSegment::new(data, WORD_SAMPLES / 2, Some(label))?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(truncated)? != 0 {
        return Err(Error::format("trailing bytes after packed archive"));
    }
    LabeledDataset::new(samples, CLASS_COUNT).map_err(|e| Error::format(e.to_string()))
}

pub fn load_packed(path: &Path) -> Result<LabeledDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_packed(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_synthetic;

    fn tiny() -> LabeledDataset {
        generate_synthetic(&GeneratorConfig::nato(1, 0.3, 4))
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny();
        save_archive(&ds, dir.path()).unwrap();
        assert_eq!(load_archive(dir.path()).unwrap(), ds);
    }

    #[test]
    fn packed_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.kdss");
        let ds = tiny();
        save_packed(&ds, &path).unwrap();
        let back = load_packed(&path).unwrap();
        assert_eq!(back.labels(), ds.labels());
        for (a, b) in back.samples().iter().zip(ds.samples()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn empty_dataset_is_a_valid_archive() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.kdss");
        save_packed(&LabeledDataset::empty(), &path).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 12);
        assert!(load_packed(&path).unwrap().is_empty());
        save_archive(&LabeledDataset::empty(), dir.path()).unwrap();
        assert!(load_archive(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn truncated_or_foreign_files_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.kdss");
        save_packed(&tiny(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        for cut in [2, 10, 12 + 4500 * 4, bytes.len() - 1] {
            let err = read_packed(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, Error::Format(_)), "cut {cut}: {err}");
        }
        let mut foreign = bytes.clone();
        foreign[0] = b'X';
        assert!(matches!(read_packed(&foreign[..]), Err(Error::Format(_))));
    }
}
