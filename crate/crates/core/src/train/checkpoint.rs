//! Versioned binary checkpoints.
//!
//! Layout (little endian): magic `VXCKPT`, version byte, 32-byte architecture
//! digest, `u32` parameter count, then per parameter `u32` rank, `u32` extents
//! and `f64` values in declaration order; `u32` batch-norm count, then per layer
//! a presence byte and, when present, `u32` channels, running means and running
//! variances; finally an optimizer byte and, when set, the `u64` Adam step
//! followed by every parameter's first and second moments.

use std::io::{Read, Write};
use std::path::Path;

use crate::arch::{ModelSpec, Network};
use crate::error::{Error, Result};
use crate::nn::optim::Adam;
use crate::tensor::Tensor;

const MAGIC: &[u8; 6] = b"VXCKPT";
const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    /// Adam step count when optimizer state was stored.
    pub adam_step: Option<u64>,
}

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format("value exceeds u32".into()))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64s<W: Write>(w: &mut W, vs: &[f64]) -> Result<()> {
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn get_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn get_u32<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn get_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

fn fill(dst: &mut Tensor, values: Vec<f64>) -> Result<()> {
    if values.len() != dst.len() {
        return Err(Error::Format("checkpoint tensor size mismatch".into()));
    }
    dst.data_mut().copy_from_slice(&values);
    Ok(())
}

pub fn write_checkpoint<W: Write>(mut w: W, net: &Network, adam: Option<&Adam>) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    w.write_all(&net.spec().digest())?;
    let params = net.all_params();
    put_u32(&mut w, params.len())?;
    for p in &params {
        put_u32(&mut w, p.value.rank())?;
        for &d in p.value.shape() {
            put_u32(&mut w, d)?;
        }
        put_f64s(&mut w, p.value.data())?;
    }
    let bns: Vec<_> = net.batch_norms().collect();
    put_u32(&mut w, bns.len())?;
    for bn in bns {
        match (&bn.running_mean, &bn.running_var) {
            (Some(m), Some(v)) => {
                w.write_all(&[1])?;
                put_u32(&mut w, m.len())?;
                put_f64s(&mut w, m)?;
                put_f64s(&mut w, v)?;
            }
            _ => w.write_all(&[0])?,
        }
    }
    match adam {
        Some(a) => {
            w.write_all(&[1])?;
            w.write_all(&a.t.to_le_bytes())?;
            for p in &params {
                put_f64s(&mut w, p.m.data())?;
                put_f64s(&mut w, p.v.data())?;
            }
        }
        None => w.write_all(&[0])?,
    }
    Ok(())
}

/// Restores a network for `spec`; the stored digest must match the spec's.
pub fn read_checkpoint<R: Read>(mut r: R, spec: &ModelSpec) -> Result<Checkpoint> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let version = get_u8(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let mut digest = [0u8; 32];
    r.read_exact(&mut digest)?;
    if digest != spec.digest() {
        return Err(Error::Format(
            "checkpoint was written for a different architecture".into(),
        ));
    }
    let mut net = Network::new(spec, 0)?;
    let count = get_u32(&mut r)?;
    {
        let mut params = net.all_params_mut();
        if count != params.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {count} parameters, model has {}",
                params.len()
            )));
        }
        for p in params.iter_mut() {
            let rank = get_u32(&mut r)?;
            let shape = (0..rank)
                .map(|_| get_u32(&mut r))
                .collect::<Result<Vec<_>>>()?;
            if shape != p.value.shape() {
                return Err(Error::Format(format!(
                    "parameter shape {shape:?} does not match {:?}",
                    p.value.shape()
                )));
            }
            let n = p.value.len();
            fill(&mut p.value, get_f64s(&mut r, n)?)?;
        }
    }
    let bn_count = get_u32(&mut r)?;
    let mut bns: Vec<_> = net.batch_norms_mut().collect();
    if bn_count != bns.len() {
        return Err(Error::Format("batch-norm layer count mismatch".into()));
    }
    for bn in bns.iter_mut() {
        match get_u8(&mut r)? {
            0 => {
                bn.running_mean = None;
                bn.running_var = None;
            }
            1 => {
                let c = get_u32(&mut r)?;
                if c != bn.channels() {
                    return Err(Error::Format("batch-norm channel mismatch".into()));
                }
                bn.running_mean = Some(get_f64s(&mut r, c)?);
                bn.running_var = Some(get_f64s(&mut r, c)?);
            }
            b => return Err(Error::Format(format!("bad batch-norm flag {b}"))),
        }
    }
    let adam_step = match get_u8(&mut r)? {
        0 => None,
        1 => {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            for p in net.all_params_mut() {
                let n = p.value.len();
                fill(&mut p.m, get_f64s(&mut r, n)?)?;
                fill(&mut p.v, get_f64s(&mut r, n)?)?;
            }
            Some(u64::from_le_bytes(b))
        }
        b => return Err(Error::Format(format!("bad optimizer flag {b}"))),
    };
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    Ok(Checkpoint {
        network: net,
        adam_step,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, net: &Network, adam: Option<&Adam>) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, net, adam)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>, spec: &ModelSpec) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    read_checkpoint(bytes.as_slice(), spec)
}
