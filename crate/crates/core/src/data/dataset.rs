//! On-disk dataset layout: `<root>/<split>/<class>/<index>.ppm` plus a
//! `manifest.toml` describing the classes and how they were generated.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::ppm;
use crate::data::synth::{class_pattern, render, validate_class_name, ClassSpec, Role, Split, SplitCounts, SynthConfig};
use crate::error::{Error, Result};
use crate::tensor::TensorF;

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const MANIFEST_VERSION: u32 = 1;

/// Ground truth of a sample: an in-set class index (0-based) or out-of-set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Truth {
    InSet(usize),
    OutOfSet,
}

impl Truth {
    pub fn in_set(self) -> Option<usize> {
        match self {
            Truth::InSet(k) => Some(k),
            Truth::OutOfSet => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: TensorF,
    pub truth: Truth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    /// Hex SHA-256 of the canonical generation config.
    pub digest: String,
    pub shape: [usize; 3],
    pub seed: u64,
    pub counts: SplitCounts,
    pub family_share: f64,
    pub noise_sigma: f64,
    pub classes: Vec<ClassSpec>,
}

impl Manifest {
    pub fn new(config: SynthConfig) -> Result<Self> {
        config.validate()?;
        Ok(Manifest {
            version: MANIFEST_VERSION,
            digest: config_digest(&config),
            shape: config.shape,
            seed: config.seed,
            counts: config.counts,
            family_share: config.family_share,
            noise_sigma: config.noise_sigma,
            classes: config.classes,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let manifest: Manifest = toml::from_str(text).map_err(|e| Error::format("manifest", e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Config(format!("unsupported manifest version {}", self.version)));
        }
        let config = self.config();
        config.validate()?;
        let expected = config_digest(&config);
        if expected != self.digest {
            return Err(Error::Config(format!(
                "manifest digest mismatch (recorded {}, computed {expected}); the class list or generation settings were edited",
                self.digest
            )));
        }
        Ok(())
    }

    pub fn config(&self) -> SynthConfig {
        SynthConfig {
            shape: self.shape,
            seed: self.seed,
            counts: self.counts,
            family_share: self.family_share,
            noise_sigma: self.noise_sigma,
            classes: self.classes.clone(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.config().num_in_set()
    }

    pub fn in_set_names(&self) -> Vec<String> {
        self.config().in_set().map(|c| c.name.clone()).collect()
    }
}

pub fn config_digest(config: &SynthConfig) -> String {
    let canonical = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(&canonical))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[Sample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    fn split_mut(&mut self, split: Split) -> &mut Vec<Sample> {
        match split {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }
}

fn truths(config: &SynthConfig) -> Vec<Truth> {
    let mut next = 0;
    config
        .classes
        .iter()
        .map(|c| match c.role {
            Role::InSet => {
                next += 1;
                Truth::InSet(next - 1)
            }
            Role::OutOfSet => Truth::OutOfSet,
        })
        .collect()
}

fn file_name(index: usize) -> String {
    format!("{index:05}.ppm")
}

fn sample_id(split: Split, class: &ClassSpec, index: usize) -> String {
    format!("{}/{}/{}", split.name(), class.name, file_name(index))
}

/// Renders every image of the dataset in memory, already quantized to 8 bits
/// so it is identical to what [`load_dataset`] returns after writing.
pub fn generate(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let truths = truths(config);
    let mut out = Dataset::default();
    for (ci, class) in config.classes.iter().enumerate() {
        let pattern = class_pattern(config, ci);
        for split in Split::ALL {
            for index in 0..config.count(class, split) {
                let (image, _) = render(config, ci, split, index, &pattern);
                out.split_mut(split).push(Sample {
                    id: sample_id(split, class, index),
                    image,
                    truth: truths[ci],
                });
            }
        }
    }
    Ok(out)
}

/// Generates the dataset and writes it under `root`, creating directories.
pub fn synth_dataset(config: &SynthConfig, root: &Path) -> Result<Manifest> {
    let manifest = Manifest::new(config.clone())?;
    for (ci, class) in config.classes.iter().enumerate() {
        let pattern = class_pattern(config, ci);
        for split in Split::ALL {
            let count = config.count(class, split);
            if count == 0 {
                continue;
            }
            let dir = root.join(split.name()).join(&class.name);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for index in 0..count {
                let (image, _) = render(config, ci, split, index, &pattern);
                ppm::write(&dir.join(file_name(index)), &image)?;
            }
        }
    }
    let path = root.join(MANIFEST_FILE);
    std::fs::write(&path, manifest.to_toml()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(root: &Path) -> Result<Manifest> {
    let path = root.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Manifest::parse(&text).map_err(|e| e.in_file(path))
}

/// Loads all splits listed in the manifest at `root`.
pub fn load_dataset(root: &Path) -> Result<(Manifest, Dataset)> {
    let manifest = read_manifest(root)?;
    let config = &manifest.config();
    let truths = truths(config);
    let [c, h, w] = config.shape;
    let mut out = Dataset::default();
    for (ci, class) in config.classes.iter().enumerate() {
        validate_class_name(&class.name)?;
        for split in Split::ALL {
            for index in 0..config.count(class, split) {
                let path: PathBuf = root.join(split.name()).join(&class.name).join(file_name(index));
                let image = ppm::read(&path)?;
                if image.shape() != [c, h, w] {
                    return Err(Error::Shape {
                        expected: vec![c, h, w],
                        actual: image.shape().to_vec(),
                    }
                    .in_file(path));
                }
                out.split_mut(split).push(Sample {
                    id: sample_id(split, class, index),
                    image,
                    truth: truths[ci],
                });
            }
        }
    }
    Ok((manifest, out))
}

pub fn small_counts() -> SplitCounts {
    SplitCounts {
        train: 4,
        val: 2,
        test: 2,
        out_of_set_test: 2,
    }
}
