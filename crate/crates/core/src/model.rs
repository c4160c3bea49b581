//! A trained classifier: network, normalization statistics and the trigger
//! binding it was trained with.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backdoor::TriggerSet;
use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::nn::{Architecture, LayerSpec, Network};
use crate::tensor::TensorF;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Bosc,
    Baseline,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Bosc => "bosc",
            Mode::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bosc" => Ok(Mode::Bosc),
            "baseline" => Ok(Mode::Baseline),
            _ => Err(Error::Config(format!("unknown mode {s:?} (expected bosc or baseline)"))),
        }
    }
}

/// Widths of the default network: two `conv3x3 -> relu -> maxpool2` stages,
/// an optional hidden dense layer (0 disables it), then the output layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub conv1: usize,
    pub conv2: usize,
    pub hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            conv1: 8,
            conv2: 16,
            hidden: 64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=256).contains(&self.conv1) || !(1..=256).contains(&self.conv2) || self.hidden > 4096 {
            return Err(Error::Config(format!(
                "layer widths out of range: conv {} and {} (1..=256), hidden {} (at most 4096)",
                self.conv1, self.conv2, self.hidden
            )));
        }
        Ok(())
    }

    /// Network with `num_classes + 1` outputs, the last being the backdoor class.
    pub fn architecture(&self, input: [usize; 3], num_classes: usize) -> Result<Architecture> {
        self.validate()?;
        let [_, h, w] = input;
        if h < 4 || w < 4 {
            return Err(Error::Config(format!("input {h}x{w} is too small for two pooling stages")));
        }
        let mut arch = Architecture::small_cnn(input, (self.conv1, self.conv2), num_classes + 1);
        if self.hidden > 0 {
            let head = arch.layers.pop().expect("small_cnn ends in a dense layer");
            let LayerSpec::Dense { inputs, outputs } = head else {
                unreachable!("small_cnn ends in a dense layer")
            };
            arch.layers.extend([
                LayerSpec::Dense {
                    inputs,
                    outputs: self.hidden,
                },
                LayerSpec::Relu,
                LayerSpec::Dense {
                    inputs: self.hidden,
                    outputs,
                },
            ]);
        }
        arch.validate()?;
        Ok(arch)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub network: Network<f32>,
    pub stats: NormStats,
    /// Number of in-set classes `N`; the network has `N + 1` outputs.
    pub num_classes: usize,
    pub alpha: f64,
    pub mode: Mode,
    /// Digest of the trigger set used in training, if any.
    pub trigger_digest: Option<String>,
}

impl Classifier {
    pub fn validate(&self) -> Result<()> {
        self.stats.validate()?;
        if self.num_classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.num_classes)));
        }
        if self.network.num_outputs() != self.num_classes + 1 {
            return Err(Error::Config(format!(
                "network has {} outputs, expected {} classes plus the backdoor output",
                self.network.num_outputs(),
                self.num_classes
            )));
        }
        if self.stats.mean.len() != self.network.architecture().input[0] {
            return Err(Error::Config("normalization stats do not match the input channels".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        Ok(())
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.network.architecture().input
    }

    /// Logits of an unnormalized image in `[0, 1]`.
    pub fn logits(&self, x: &TensorF) -> Result<Vec<f32>> {
        let z = self.stats.normalize(x)?;
        self.network.forward_sample(z.data())
    }

    /// Checks that `triggers` is the set this classifier was trained with.
    pub fn check_triggers(&self, triggers: &TriggerSet) -> Result<()> {
        if triggers.len() != self.num_classes {
            return Err(Error::Config(format!(
                "{} triggers for a {}-class model",
                triggers.len(),
                self.num_classes
            )));
        }
        if triggers.shape() != self.input_shape() {
            return Err(Error::Shape {
                expected: self.input_shape().to_vec(),
                actual: triggers.shape().to_vec(),
            });
        }
        if let Some(expected) = &self.trigger_digest {
            let actual = triggers.digest();
            if &actual != expected {
                return Err(Error::Config(format!(
                    "trigger set digest {actual} does not match the checkpoint ({expected})"
                )));
            }
        }
        Ok(())
    }
}
