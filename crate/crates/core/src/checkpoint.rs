//! Binary checkpoint: `BOSC` magic, a version byte, a little-endian `u32`
//! header length, a JSON header, then every parameter tensor as
//! little-endian `f32` in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::model::{Classifier, Mode};
use crate::nn::{Architecture, Network};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"BOSC";
pub const VERSION: u8 = 1;
const MAX_HEADER: usize = 1 << 20;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    architecture: Architecture,
    num_classes: usize,
    stats: NormStats,
    alpha: f64,
    mode: Mode,
    trigger_digest: Option<String>,
    param_shapes: Vec<Vec<usize>>,
}

pub fn encode(clf: &Classifier) -> Result<Vec<u8>> {
    clf.validate()?;
    let header = Header {
        architecture: clf.network.architecture().clone(),
        num_classes: clf.num_classes,
        stats: clf.stats.clone(),
        alpha: clf.alpha,
        mode: clf.mode,
        trigger_digest: clf.trigger_digest.clone(),
        param_shapes: clf.network.params().iter().map(|p| p.shape().to_vec()).collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(9 + json.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in clf.network.params() {
        for v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Classifier> {
    let bad = |reason: String| Error::format("checkpoint", reason);
    if bytes.len() < 9 || &bytes[..4] != MAGIC {
        return Err(bad("missing BOSC magic".into()));
    }
    if bytes[4] != VERSION {
        return Err(bad(format!("unsupported version {}", bytes[4])));
    }
    let len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    if len > MAX_HEADER || bytes.len() - 9 < len {
        return Err(bad(format!("header length {len} exceeds the file")));
    }
    let header: Header = serde_json::from_slice(&bytes[9..9 + len]).map_err(|e| bad(format!("header: {e}")))?;
    header.architecture.validate()?;
    if header.param_shapes != header.architecture.param_shapes() {
        return Err(bad("parameter shapes do not match the architecture".into()));
    }
    let mut total = 0usize;
    for shape in &header.param_shapes {
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| bad("parameter size overflows".into()))?;
        total = total.checked_add(n).ok_or_else(|| bad("parameter size overflows".into()))?;
    }
    let body = &bytes[9 + len..];
    if total.checked_mul(4) != Some(body.len()) {
        return Err(bad(format!("expected {} parameter bytes, found {}", total.saturating_mul(4), body.len())));
    }
    let mut values = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    let mut params = Vec::with_capacity(header.param_shapes.len());
    for shape in header.param_shapes {
        let n = shape.iter().product();
        let data: Vec<f32> = values.by_ref().take(n).collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("checkpoint contains non-finite parameters".into()));
        }
        params.push(Tensor::new(shape, data)?);
    }
    let clf = Classifier {
        network: Network::from_params(header.architecture, params)?,
        stats: header.stats,
        num_classes: header.num_classes,
        alpha: header.alpha,
        mode: header.mode,
        trigger_digest: header.trigger_digest,
    };
    clf.validate()?;
    Ok(clf)
}

pub fn save(path: &Path, clf: &Classifier) -> Result<()> {
    let bytes = encode(clf)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Classifier> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| e.in_file(path))
}
