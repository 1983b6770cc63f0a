//! Versioned binary checkpoints.
//!
//! Layout (all little-endian): magic `MPNC`, version u32, point-layer count
//! u32, head-layer count u32, then per layer `outputs` u32, `inputs` u32,
//! `outputs·inputs` f32 weights (row-major) and `outputs` f32 biases.

use std::fs;
use std::path::Path;

use super::{Dense, MiniPointNet, ModelError};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MPNC";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(net: &MiniPointNet, path: &Path) -> Result<(), ModelError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(net.point_layers.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(net.head_layers.len() as u32).to_le_bytes());
    for layer in net.point_layers.iter().chain(&net.head_layers) {
        buf.extend_from_slice(&(layer.outputs as u32).to_le_bytes());
        buf.extend_from_slice(&(layer.inputs as u32).to_le_bytes());
        for x in layer.weights.iter().chain(&layer.bias) {
            buf.extend_from_slice(&(*x as f32).to_le_bytes());
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn err(&self, message: impl Into<String>) -> ModelError {
        ModelError::Checkpoint {
            path: self.path.display().to_string(),
            message: format!("{} (at byte {})", message.into(), self.pos),
        }
    }

    fn take(&mut self, n: usize) -> Result<&[u8], ModelError> {
        if self.pos + n > self.bytes.len() {
            return Err(self.err("unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>, ModelError> {
        Ok(self
            .take(n * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }

    fn layer(&mut self) -> Result<Dense, ModelError> {
        let outputs = self.u32()? as usize;
        let inputs = self.u32()? as usize;
        if outputs == 0 || inputs == 0 || outputs.saturating_mul(inputs) > 1 << 26 {
            return Err(self.err(format!("implausible layer shape {outputs}×{inputs}")));
        }
        let weights = self.f32s(outputs * inputs)?;
        let bias = self.f32s(outputs)?;
        Ok(Dense {
            inputs,
            outputs,
            weights,
            bias,
        })
    }
}

pub fn load_checkpoint(path: &Path) -> Result<MiniPointNet, ModelError> {
    let bytes = fs::read(path)?;
    let mut r = Reader { bytes: &bytes, pos: 0, path };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(r.err("bad magic, expected MPNC"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(r.err(format!("unsupported checkpoint version {version}")));
    }
    let n_point = r.u32()? as usize;
    let n_head = r.u32()? as usize;
    if n_point == 0 || n_head == 0 || n_point + n_head > 64 {
        return Err(r.err(format!("implausible layer counts {n_point}/{n_head}")));
    }
    let point_layers = (0..n_point).map(|_| r.layer()).collect::<Result<Vec<_>, _>>()?;
    let head_layers = (0..n_head).map(|_| r.layer()).collect::<Result<Vec<_>, _>>()?;
    if r.pos != bytes.len() {
        return Err(r.err("trailing bytes"));
    }
    MiniPointNet::from_layers(point_layers, head_layers).map_err(|e| r.err(e.to_string()))
}
