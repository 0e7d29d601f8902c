use super::{param_count, FEATURE_DIM, OUTPUT_DIM, TEACHER_INPUT_DIM};
use crate::{rng, Error, Result};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

pub const WEIGHTS_SCHEMA: &str = "weights.v1";
pub const WEIGHTS_VERSION: u32 = 1;

/// Which slot of the refinement algorithm a weight set fills.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Pre-trained per-frame backbone.
    F0,
    /// Pre-adapted learner.
    Fs,
    /// Learner being refined on the stream.
    Fa,
    Teacher,
}

impl Role {
    pub fn is_learner(self) -> bool {
        !matches!(self, Role::Teacher)
    }

    fn input_dim(self) -> usize {
        if self.is_learner() {
            FEATURE_DIM
        } else {
            TEACHER_INPUT_DIM
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::F0 => "f0",
            Role::Fs => "fs",
            Role::Fa => "fa",
            Role::Teacher => "teacher",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub version: u32,
    pub role: Role,
    pub seed: u64,
    pub layer_dims: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct WeightsFile {
    schema: String,
    version: u32,
    role_tag: Role,
    seed: u64,
    layer_dims: Vec<usize>,
    values: String,
}

/// Glorot-uniform weights, zero biases.
pub fn init_weights(role: Role, layer_dims: &[usize], seed: u64) -> Result<ModelWeights> {
    check_dims(role, layer_dims)?;
    let mut rng = rng::stream(seed, 0x3E16);
    let mut values = Vec::with_capacity(param_count(layer_dims));
    for w in layer_dims.windows(2) {
        let a = (6.0 / (w[0] + w[1]) as f64).sqrt();
        values.extend((0..w[0] * w[1]).map(|_| rng.random_range(-a..=a)));
        values.extend(std::iter::repeat_n(0.0, w[1]));
    }
    Ok(ModelWeights {
        version: WEIGHTS_VERSION,
        role,
        seed,
        layer_dims: layer_dims.to_vec(),
        values,
    })
}

/// Independent copy of `w`.
pub fn deepcopy_weights(w: &ModelWeights) -> ModelWeights {
    w.clone()
}

fn check_dims(role: Role, dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::Configuration(format!("invalid layer dims {dims:?}")));
    }
    if dims[0] != role.input_dim() {
        return Err(Error::Configuration(format!(
            "{role} network needs input width {}, got {}",
            role.input_dim(),
            dims[0]
        )));
    }
    if *dims.last().unwrap() != OUTPUT_DIM {
        return Err(Error::Configuration(format!(
            "{role} network needs output width {OUTPUT_DIM}, got {}",
            dims.last().unwrap()
        )));
    }
    Ok(())
}

impl ModelWeights {
    pub fn validate(&self) -> Result<()> {
        check_dims(self.role, &self.layer_dims)?;
        let n = param_count(&self.layer_dims);
        if self.values.len() != n {
            return Err(Error::dim("weight values", n, self.values.len()));
        }
        Ok(())
    }

    /// Copy carrying a different role tag, e.g. `f0 -> fs`.
    pub fn retagged(&self, role: Role) -> Result<Self> {
        if role.is_learner() != self.role.is_learner() {
            return Err(Error::Configuration(format!("cannot retag {} as {role}", self.role)));
        }
        let mut w = deepcopy_weights(self);
        w.role = role;
        Ok(w)
    }

    pub fn expect_learner(&self) -> Result<()> {
        if !self.role.is_learner() {
            return Err(Error::Configuration(format!(
                "expected learner weights, got role {}",
                self.role
            )));
        }
        Ok(())
    }

    pub fn expect_role(&self, role: Role) -> Result<()> {
        if self.role != role {
            return Err(Error::Configuration(format!(
                "expected role {role}, got {}",
                self.role
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let bytes: Vec<u8> = self.values.iter().flat_map(|v| v.to_le_bytes()).collect();
        let file = WeightsFile {
            schema: WEIGHTS_SCHEMA.into(),
            version: self.version,
            role_tag: self.role,
            seed: self.seed,
            layer_dims: self.layer_dims.clone(),
            values: B64.encode(bytes),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: WeightsFile = serde_json::from_str(text)?;
        if file.schema != WEIGHTS_SCHEMA {
            return Err(Error::Format {
                line: 1,
                message: format!("expected schema {WEIGHTS_SCHEMA}, found {}", file.schema),
            });
        }
        if file.version != WEIGHTS_VERSION {
            return Err(Error::Format {
                line: 1,
                message: format!("unsupported weights version {}", file.version),
            });
        }
        let bytes = B64.decode(file.values.as_bytes()).map_err(|e| Error::Format {
            line: 1,
            message: format!("weight values are not valid base64: {e}"),
        })?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Format {
                line: 1,
                message: "weight payload is not a whole number of f64 values".into(),
            });
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let w = Self {
            version: file.version,
            role: file.role_tag,
            seed: file.seed,
            layer_dims: file.layer_dims,
            values,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Short content hash used to tag reports.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for v in &self.values {
            h.update(v.to_le_bytes());
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
