//! JSON run configurations.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::SolverConfig;
use crate::error::{Error, Result};
use crate::medium::{DistributionRecord, DistributionSpec};
use crate::potential::{ClassParams, PotentialRegistry};

pub const SCHEMA: &str = "homchain/v1";

/// Hex SHA-256 of the JSON serialization of `value`.
pub fn content_hash<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable value");
    hex::encode(Sha256::digest(&bytes))
}

/// Seconds since the epoch taken from `SOURCE_DATE_EPOCH`, so that outputs
/// stay byte-identical across reruns unless a build date is supplied.
pub fn timestamp() -> Option<u64> {
    std::env::var("SOURCE_DATE_EPOCH").ok()?.trim().parse().ok()
}

/// Negative-control table used by `verify`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableFixture {
    Nonconvex,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<DistributionRecord>,
    /// Overrides the class of the distribution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<ClassParams>,
    /// Overrides the interaction range of the distribution.
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    #[serde(default = "default_schedule")]
    pub schedule: Vec<usize>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(rename = "L_max", default = "default_l_max")]
    pub l_max: usize,
    /// Base seed; realization `s` uses a seed derived from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Total stretch for `minimize`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell: Option<f64>,
    /// Chain sizes for `minimize`.
    #[serde(default = "default_chain_n")]
    pub chain_n: Vec<usize>,
    /// Accepted gap for `minimize` and Cauchy tolerance for `converge`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Number of subadditivity probes run by `verify`.
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_fixture: Option<TableFixture>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<String>,
}

fn default_schedule() -> Vec<usize> {
    vec![200, 800, 3200]
}

fn default_samples() -> usize {
    16
}

fn default_l_max() -> usize {
    5
}

fn default_chain_n() -> Vec<usize> {
    vec![1000]
}

fn default_probes() -> usize {
    10
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        if cfg.schema != SCHEMA {
            return Err(Error::Validation(vec![format!(
                "schema `{}` is not `{SCHEMA}`",
                cfg.schema
            )]));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// A config with every optional field unset.
    pub fn minimal() -> Self {
        Self::from_json(&format!("{{\"schema\": \"{SCHEMA}\"}}")).expect("minimal config parses")
    }

    /// Hash of everything that influences numerical results; the output
    /// location is excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.outputs = None;
        content_hash(&c)
    }

    /// Validates every field that does not depend on the subcommand.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if let Some(g) = &self.z_grid {
            if g.is_empty() || g.iter().any(|z| !z.is_finite()) || g.windows(2).any(|w| w[1] <= w[0]) {
                errs.push("z_grid must be a non-empty, strictly increasing list of finite strains".into());
            }
        }
        if let Some(z) = self.z {
            if !z.is_finite() {
                errs.push(format!("z = {z} is not finite"));
            }
        }
        if self.schedule.len() < 2 || self.schedule.windows(2).any(|w| w[1] <= w[0]) {
            errs.push("schedule must be increasing with at least two entries".into());
        }
        if self.samples == 0 {
            errs.push("samples must be positive".into());
        }
        if let Some(ell) = self.ell {
            if !(ell > 0.0 && ell.is_finite()) {
                errs.push(format!("ell = {ell} must be positive"));
            }
        }
        if self.chain_n.is_empty() {
            errs.push("chain_n must not be empty".into());
        }
        if let Some(t) = self.tolerance {
            if !(t > 0.0) {
                errs.push(format!("tolerance = {t} must be positive"));
            }
        }
        let s = &self.solver;
        if !(s.grad_tol > 0.0) || !(s.strain_floor >= 0.0) || s.max_iter == 0 {
            errs.push("solver knobs must be positive".into());
        }
        if let Err(e) = self.distribution_spec() {
            match e {
                Error::Validation(v) => errs.extend(v),
                other => errs.push(other.to_string()),
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// The distribution with top-level `K` and `class` applied, if one is
    /// configured.
    pub fn distribution_spec(&self) -> Result<Option<DistributionSpec>> {
        let Some(rec) = &self.distribution else {
            return Ok(None);
        };
        let mut rec = rec.clone();
        if let Some(k) = self.k {
            if rec.order_scale.as_ref().is_some_and(|s| s.len() != k) {
                return Err(Error::Validation(vec!["order_scale length differs from K".into()]));
            }
            rec.k = k;
        }
        if let Some(class) = self.class {
            rec.class = Some(class);
        }
        rec.to_spec(&PotentialRegistry::with_builtins()).map(Some)
    }

    pub fn require_distribution(&self) -> Result<DistributionSpec> {
        self.distribution_spec()?
            .ok_or_else(|| Error::Validation(vec!["missing key `distribution`".into()]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIFORM: &str = r#"{
        "schema": "homchain/v1",
        "distribution": {"kind": "iid_uniform_box", "box": {"delta": [1, 2], "epsilon": [3, 4]}},
        "z_grid": [1.5, 2.0],
        "solver": {"n_starts": 4}
    }"#;

    #[test]
    fn parses_and_applies_defaults() {
        let c = RunConfig::from_json(UNIFORM).unwrap();
        c.validate().unwrap();
        assert_eq!(c.schedule, vec![200, 800, 3200]);
        assert_eq!(c.samples, 16);
        assert_eq!(c.solver.n_starts, 4);
        assert_eq!(c.solver.grad_tol, SolverConfig::default().grad_tol);
        assert_eq!(c.require_distribution().unwrap().k, 1);
    }

    #[test]
    fn rejects_unknown_keys_and_schema() {
        let bad = UNIFORM.replace("\"z_grid\"", "\"zgrid\"");
        assert!(matches!(RunConfig::from_json(&bad), Err(Error::Json(_))));
        let bad = UNIFORM.replace("homchain/v1", "homchain/v0");
        assert!(matches!(RunConfig::from_json(&bad), Err(Error::Validation(_))));
        let bad = UNIFORM.replace("\"n_starts\"", "\"starts\"");
        assert!(RunConfig::from_json(&bad).is_err());
    }

    #[test]
    fn validation_collects_errors() {
        let mut c = RunConfig::from_json(UNIFORM).unwrap();
        c.z_grid = Some(vec![2.0, 1.0]);
        c.samples = 0;
        match c.validate() {
            Err(Error::Validation(v)) => assert_eq!(v.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn top_level_k_overrides() {
        let mut c = RunConfig::from_json(UNIFORM).unwrap();
        c.k = Some(2);
        assert_eq!(c.require_distribution().unwrap().k, 2);
        assert!(RunConfig::minimal().require_distribution().is_err());
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = RunConfig::from_json(UNIFORM).unwrap();
        let mut b = a.clone();
        b.outputs = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
