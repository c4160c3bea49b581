//! Trigger sets: one image per in-set class, bound by position.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::ppm;
use crate::error::{Error, Result};
use crate::tensor::{image_dims, TensorF};

/// Optional file in a trigger directory naming the class of each trigger.
pub const TRIGGER_MANIFEST: &str = "triggers.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerSource {
    Files(Vec<PathBuf>),
    Procedural { seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TriggerSet {
    triggers: Vec<TensorF>,
    source: TriggerSource,
}

impl TriggerSet {
    /// Checks count, range and pairwise distinctness.
    pub fn new(triggers: Vec<TensorF>, source: TriggerSource) -> Result<Self> {
        let first = triggers
            .first()
            .ok_or_else(|| Error::Config("a trigger set needs at least one trigger".into()))?;
        image_dims(first)?;
        for (i, t) in triggers.iter().enumerate() {
            first.same_shape(t)?;
            if t.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Config(format!("trigger {} has values outside [0, 1]", i + 1)));
            }
            if let Some(j) = triggers[..i].iter().position(|u| u == t) {
                return Err(Error::Config(format!("triggers {} and {} are identical", j + 1, i + 1)));
            }
        }
        Ok(TriggerSet { triggers, source })
    }

    pub fn len(&self) -> usize {
        self.triggers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triggers.is_empty()
    }

    /// Trigger bound to 0-based class `k`.
    pub fn get(&self, k: usize) -> &TensorF {
        &self.triggers[k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &TensorF> {
        self.triggers.iter()
    }

    pub fn shape(&self) -> &[usize] {
        self.triggers[0].shape()
    }

    pub fn source(&self) -> &TriggerSource {
        &self.source
    }

    /// SHA-256 over shape and pixel values, stored in checkpoints.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.triggers.len() as u64).to_le_bytes());
        for t in &self.triggers {
            for &d in t.shape() {
                h.update((d as u64).to_le_bytes());
            }
            for v in t.data() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Writes each trigger as `<dir>/trigger_<k>.ppm` plus a binding manifest.
    pub fn write_dir(&self, dir: &Path, class_names: &[String]) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = TriggerManifest { bindings: Vec::new() };
        for (k, t) in self.triggers.iter().enumerate() {
            let file = format!("trigger_{:02}.ppm", k + 1);
            ppm::write(&dir.join(&file), t)?;
            manifest.bindings.push(Binding {
                class: class_names.get(k).cloned().unwrap_or_else(|| format!("{}", k + 1)),
                file,
            });
        }
        let path = dir.join(TRIGGER_MANIFEST);
        let text = toml::to_string(&manifest).expect("manifest serializes");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Binding {
    pub class: String,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerManifest {
    #[serde(rename = "binding")]
    pub bindings: Vec<Binding>,
}

impl TriggerManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let m: TriggerManifest = toml::from_str(text).map_err(|e| Error::format("trigger manifest", e.to_string()))?;
        for b in &m.bindings {
            let plain = !b.file.is_empty() && !b.file.contains(['/', '\\']) && b.file != "." && b.file != "..";
            if !plain {
                return Err(Error::format("trigger manifest", format!("file {:?} must be a plain file name", b.file)));
            }
        }
        Ok(m)
    }

    /// Files ordered by `class_names`.
    pub fn ordered_files(&self, class_names: &[String]) -> Result<Vec<String>> {
        class_names
            .iter()
            .map(|name| {
                let mut hits = self.bindings.iter().filter(|b| &b.class == name);
                match (hits.next(), hits.next()) {
                    (Some(b), None) => Ok(b.file.clone()),
                    (None, _) => Err(Error::Config(format!("no trigger bound to class {name}"))),
                    (Some(_), Some(_)) => Err(Error::Config(format!("class {name} has several triggers"))),
                }
            })
            .collect()
    }
}

/// Bilinear resize of a `[c, h, w]` image to `[c, th, tw]`.
pub fn resize(x: &TensorF, th: usize, tw: usize) -> Result<TensorF> {
    let (c, h, w) = image_dims(x)?;
    if (h, w) == (th, tw) {
        return Ok(x.clone());
    }
    let src = x.data();
    let mut out = vec![0.0f32; c * th * tw];
    let coord = |i: usize, from: usize, to: usize| -> (usize, usize, f32) {
        let f = ((i as f64 + 0.5) * from as f64 / to as f64 - 0.5).clamp(0.0, (from - 1) as f64);
        let i0 = f.floor() as usize;
        (i0, (i0 + 1).min(from - 1), (f - i0 as f64) as f32)
    };
    for y in 0..th {
        let (y0, y1, fy) = coord(y, h, th);
        for xx in 0..tw {
            let (x0, x1, fx) = coord(xx, w, tw);
            for ch in 0..c {
                let at = |yy: usize, xq: usize| src[(ch * h + yy) * w + xq];
                out[(ch * th + y) * tw + xx] = (at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx) * (1.0 - fy)
                    + (at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx) * fy;
            }
        }
    }
    TensorF::new(vec![c, th, tw], out)
}

/// Decodes `paths` in order, resizes each to `shape` and binds trigger `k`
/// to class `k`.
pub fn load_triggers(paths: &[PathBuf], n: usize, shape: [usize; 3]) -> Result<TriggerSet> {
    if paths.len() != n {
        return Err(Error::Config(format!("expected {n} trigger images, got {}", paths.len())));
    }
    let mut triggers = Vec::with_capacity(n);
    for path in paths {
        let img = ppm::read(path)?;
        if img.shape()[0] != shape[0] {
            return Err(Error::Config(format!("{}: expected {} channels", path.display(), shape[0])));
        }
        triggers.push(resize(&img, shape[1], shape[2])?);
    }
    TriggerSet::new(triggers, TriggerSource::Files(paths.to_vec()))
}

/// Loads a trigger directory. With a `triggers.toml` binding file the order
/// follows `class_names`; otherwise `.ppm` files are taken in lexicographic order.
pub fn load_trigger_dir(dir: &Path, class_names: &[String], shape: [usize; 3]) -> Result<TriggerSet> {
    let manifest_path = dir.join(TRIGGER_MANIFEST);
    let files: Vec<PathBuf> = if manifest_path.exists() {
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest = TriggerManifest::parse(&text).map_err(|e| e.in_file(&manifest_path))?;
        manifest
            .ordered_files(class_names)?
            .into_iter()
            .map(|f| dir.join(f))
            .collect()
    } else {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "ppm"))
            .collect();
        files.sort();
        files
    };
    load_triggers(&files, class_names.len(), shape)
}

/// Procedural high-contrast triggers, deterministic in `(n, shape, seed)`.
/// Each trigger mixes a distinct geometric pattern with a two-color palette.
pub fn generate_default_triggers(n: usize, shape: [usize; 3], seed: u64) -> TriggerSet {
    let [c, h, w] = shape;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7419_6E5E);
    let mut triggers: Vec<TensorF> = Vec::with_capacity(n);
    while triggers.len() < n {
        let k = triggers.len();
        let kind = k % 4;
        let scale = rng.gen_range(4.0..9.0f64);
        let theta = rng.gen_range(0.0..PI);
        let (cy, cx) = (rng.gen_range(0.0..h as f64), rng.gen_range(0.0..w as f64));
        let fg: Vec<f32> = (0..c).map(|_| if rng.gen_bool(0.5) { rng.gen_range(0.8..1.0) } else { rng.gen_range(0.0..0.2) }).collect();
        let bg: Vec<f32> = fg.iter().map(|&v| 1.0 - v).collect();
        let mut data = vec![0.0f32; c * h * w];
        for y in 0..h {
            for x in 0..w {
                let (fy, fx) = (y as f64, x as f64);
                let on = match kind {
                    // checkerboard
                    0 => ((fy / scale).floor() as i64 + (fx / scale).floor() as i64) % 2 == 0,
                    // oriented stripes
                    1 => ((fx * theta.cos() + fy * theta.sin()) / scale).floor() as i64 % 2 == 0,
                    // concentric rings
                    2 => (((fy - cy).powi(2) + (fx - cx).powi(2)).sqrt() / scale).floor() as i64 % 2 == 0,
                    // dot lattice
                    _ => {
                        let (my, mx) = ((fy % (2.0 * scale)) - scale, (fx % (2.0 * scale)) - scale);
                        my * my + mx * mx < (0.6 * scale).powi(2)
                    }
                };
                for ch in 0..c {
                    data[(ch * h + y) * w + x] = if on { fg[ch] } else { bg[ch] };
                }
            }
        }
        let mut candidate = TensorF::new(vec![c, h, w], data).expect("shape matches");
        // On the 8-bit grid, so a written and reloaded set keeps its digest.
        ppm::quantize_in_place(&mut candidate);
        let distinct = triggers.iter().all(|t| mean_abs_diff(t, &candidate) > 0.05);
        if distinct {
            triggers.push(candidate);
        }
    }
    TriggerSet::new(triggers, TriggerSource::Procedural { seed }).expect("generated triggers are valid")
}

pub fn mean_abs_diff(a: &TensorF, b: &TensorF) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs() as f64).sum::<f64>() / a.len() as f64
}
