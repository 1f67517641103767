use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::{FeatureConfig, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::question::{self, TEMPLATES_PER_TYPE};
use crate::types::ErrorType;

pub const N_TYPES: usize = 5;
pub const N_SIDES: usize = 2;
pub const N_FAULTS: usize = 4;

/// Parameters of the three heads, stored as one flat vector.
///
/// Layout: type head `W[5][D]`, `b[5]`; addressee head over
/// `[features; one_hot(type)]`, `W[2][D+5]`, `b[2]`; then one template head
/// per fault type, `W[4][D]`, `b[4]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    pub features: FeatureConfig,
    pub theta: Vec<f64>,
}

/// Gradients share the parameter layout.
pub type Gradient = PolicyParams;

pub const fn param_count() -> usize {
    let d = FEATURE_DIM;
    N_TYPES * d + N_TYPES + N_SIDES * (d + N_TYPES) + N_SIDES + N_FAULTS * (TEMPLATES_PER_TYPE * d + TEMPLATES_PER_TYPE)
}

const TYPE_W: usize = 0;
const TYPE_B: usize = TYPE_W + N_TYPES * FEATURE_DIM;
const ADDR_W: usize = TYPE_B + N_TYPES;
const ADDR_IN: usize = FEATURE_DIM + N_TYPES;
const ADDR_B: usize = ADDR_W + N_SIDES * ADDR_IN;
const Q_BASE: usize = ADDR_B + N_SIDES;
const Q_BLOCK: usize = TEMPLATES_PER_TYPE * FEATURE_DIM + TEMPLATES_PER_TYPE;

impl PolicyParams {
    pub fn zeros(features: FeatureConfig) -> Self {
        PolicyParams { features, theta: vec![0.0; param_count()] }
    }

    pub fn random<R: Rng>(features: FeatureConfig, scale: f64, rng: &mut R) -> Self {
        let theta = (0..param_count()).map(|_| rng.gen_range(-scale..=scale)).collect();
        PolicyParams { features, theta }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.features.clone())
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        if self.theta.len() != param_count() {
            return Err(Error::Contract(format!(
                "parameter vector has {} entries, expected {}",
                self.theta.len(),
                param_count()
            )));
        }
        if self.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn type_w(type_idx: usize, j: usize) -> usize {
        TYPE_W + type_idx * FEATURE_DIM + j
    }

    pub fn type_b(type_idx: usize) -> usize {
        TYPE_B + type_idx
    }

    pub fn addr_w(side: usize, j: usize) -> usize {
        ADDR_W + side * ADDR_IN + j
    }

    pub fn addr_b(side: usize) -> usize {
        ADDR_B + side
    }

    pub fn q_w(fault: usize, tpl: usize, j: usize) -> usize {
        Q_BASE + fault * Q_BLOCK + tpl * FEATURE_DIM + j
    }

    pub fn q_b(fault: usize, tpl: usize) -> usize {
        Q_BASE + fault * Q_BLOCK + TEMPLATES_PER_TYPE * FEATURE_DIM + tpl
    }

    /// Index range of the addressee and template heads.
    pub fn ask_heads_range() -> std::ops::Range<usize> {
        ADDR_W..param_count()
    }

    pub fn axpy(&mut self, alpha: f64, other: &PolicyParams) {
        for (a, b) in self.theta.iter_mut().zip(&other.theta) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.theta.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn norm(&self) -> f64 {
        self.theta.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Sets the type-head bias so the initial policy prefers `NONE`.
    pub fn with_type_bias(mut self, kind: ErrorType, bias: f64) -> Self {
        self.theta[Self::type_b(kind.index())] = bias;
        self
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk checkpoint; loading verifies the feature and template-library hashes.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub feature_config: FeatureConfig,
    pub feature_hash: String,
    pub library_hash: String,
    pub config_hash: String,
    pub theta: Vec<f64>,
}

impl Checkpoint {
    pub fn new(params: &PolicyParams, config_hash: impl Into<String>) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            feature_config: params.features.clone(),
            feature_hash: params.features.hash(),
            library_hash: question::library_hash(),
            config_hash: config_hash.into(),
            theta: params.theta.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn into_params(self) -> Result<PolicyParams> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Version { expected: CHECKPOINT_VERSION, found: self.version.to_string() });
        }
        if self.feature_hash != self.feature_config.hash() {
            return Err(Error::Data("checkpoint feature hash does not match its feature config".into()));
        }
        if self.library_hash != question::library_hash() {
            return Err(Error::Data("checkpoint was trained against a different question library".into()));
        }
        let p = PolicyParams { features: self.feature_config, theta: self.theta };
        p.check()?;
        Ok(p)
    }
}
