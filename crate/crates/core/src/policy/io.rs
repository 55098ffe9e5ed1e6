//! Little-endian parameter files.
//!
//! Layout: a 16-byte header `magic "DTPO" | version u16 | input u16 | hidden u32 | vocab u32`,
//! then `theta`, Adam `m`, Adam `v` as `f64` arrays of `param_count` entries,
//! then the Adam step counter as `u64`.

use std::io::{Read, Write};
use std::path::Path;

use super::{AdamState, PolicyDims, PolicyParams};
use crate::error::{LabError, Result};

const MAGIC: &[u8; 4] = b"DTPO";
const VERSION: u16 = 1;

pub fn write_params<W: Write>(mut out: W, params: &PolicyParams) -> Result<()> {
    let d = params.dims;
    let input = u16::try_from(d.input)
        .map_err(|_| LabError::Format(format!("input dimension {} exceeds u16", d.input)))?;
    let mut header = [0u8; 16];
    header[..4].copy_from_slice(MAGIC);
    header[4..6].copy_from_slice(&VERSION.to_le_bytes());
    header[6..8].copy_from_slice(&input.to_le_bytes());
    header[8..12].copy_from_slice(&(d.hidden as u32).to_le_bytes());
    header[12..16].copy_from_slice(&(d.vocab as u32).to_le_bytes());
    out.write_all(&header)?;
    for block in [&params.theta, &params.adam.m, &params.adam.v] {
        let mut bytes = Vec::with_capacity(block.len() * 8);
        for x in block.iter() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        out.write_all(&bytes)?;
    }
    out.write_all(&params.adam.step.to_le_bytes())?;
    Ok(())
}

/// A short read means a damaged file rather than a failing device.
fn read_exact<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<()> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => LabError::Format("parameter file is truncated".into()),
        _ => e.into(),
    })
}

pub fn read_params<R: Read>(mut input: R) -> Result<PolicyParams> {
    let mut header = [0u8; 16];
    read_exact(&mut input, &mut header)?;
    if &header[..4] != MAGIC {
        return Err(LabError::Format("not a parameter file (bad magic)".into()));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != VERSION {
        return Err(LabError::Format(format!("unsupported parameter file version {version}")));
    }
    let dims = PolicyDims {
        input: u16::from_le_bytes([header[6], header[7]]) as usize,
        hidden: u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize,
        vocab: u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize,
    };
    let n = dims.param_count();
    let mut read_block = || -> Result<Vec<f64>> {
        let mut bytes = vec![0u8; n * 8];
        read_exact(&mut input, &mut bytes)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let theta = read_block()?;
    let m = read_block()?;
    let v = read_block()?;
    let mut step = [0u8; 8];
    read_exact(&mut input, &mut step)?;
    Ok(PolicyParams {
        dims,
        theta,
        adam: AdamState {
            m,
            v,
            step: u64::from_le_bytes(step),
        },
    })
}

pub fn save_params(path: &Path, params: &PolicyParams) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    write_params(&mut out, params)?;
    out.flush()?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<PolicyParams> {
    let file = std::fs::File::open(path)?;
    read_params(std::io::BufReader::new(file))
}
