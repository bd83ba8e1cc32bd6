//! Model files: magic `KDSM`, `u32` version, `u32` descriptor length, JSON
//! descriptor, then little-endian `f32` parameters followed by the
//! normalization running statistics, each in declaration order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{ParamInfo, Resnet1d, Resnet1dConfig};
use crate::{Error, Result};

pub const MODEL_MAGIC: [u8; 4] = *b"KDSM";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub config: Resnet1dConfig,
    pub params: Vec<ParamInfo>,
    pub buffers: Vec<ParamInfo>,
}

pub fn write_model<W: Write>(model: &Resnet1d<f32>, mut w: W) -> std::io::Result<()> {
    let descriptor = ModelDescriptor {
        config: model.config().clone(),
        params: model.param_info(),
        buffers: model.buffer_info(),
    };
    let json = serde_json::to_vec(&descriptor).expect("descriptor serializes");
    w.write_all(&MODEL_MAGIC)?;
    w.write_u32::<LittleEndian>(MODEL_VERSION)?;
    w.write_u32::<LittleEndian>(json.len() as u32)?;
    w.write_all(&json)?;
    for &v in model.params().iter().chain(model.buffers()) {
        w.write_f32::<LittleEndian>(v)?;
    }
    w.flush()
}

fn eof(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::format("model file is truncated")
    } else {
        Error::format(format!("model file: {e}"))
    }
}

pub fn read_model<R: Read>(mut r: R) -> Result<Resnet1d<f32>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(eof)?;
    if magic != MODEL_MAGIC {
        return Err(Error::format(format!("bad magic {magic:?}, expected KDSM")));
    }
    let version = r.read_u32::<LittleEndian>().map_err(eof)?;
    if version != MODEL_VERSION {
        return Err(Error::format(format!("unsupported model version {version}")));
    }
    let n = r.read_u32::<LittleEndian>().map_err(eof)? as usize;
    let mut json = vec![0u8; n];
    r.read_exact(&mut json).map_err(eof)?;
    let descriptor: ModelDescriptor = serde_json::from_slice(&json)
        .map_err(|e| Error::format(format!("model descriptor: {e}")))?;

    let mut model = Resnet1d::<f32>::zeroed(descriptor.config.clone())
        .map_err(|e| Error::format(format!("model descriptor: {e}")))?;
    if descriptor.params != model.param_info() || descriptor.buffers != model.buffer_info() {
        return Err(Error::format(
            "descriptor arrays do not match the architecture it declares",
        ));
    }
    r.read_f32_into::<LittleEndian>(model.params_mut()).map_err(eof)?;
    r.read_f32_into::<LittleEndian>(model.buffers_mut()).map_err(eof)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(eof)? != 0 {
        return Err(Error::format("trailing bytes after model data"));
    }
    Ok(model)
}

pub fn save_model(model: &Resnet1d<f32>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_model(model, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Resnet1d<f32>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(BufReader::new(file)).map_err(|e| match e {
        Error::Format(msg) => Error::format(format!("{}: {msg}", path.display())),
        other => other,
    })
}
