//! Channel configuration files and run records.
//!
//! Configurations are TOML:
//!
//! ```toml
//! budget = 3.0
//!
//! [noise]
//! n = 2
//! ar = [[[0.5, 0.0], [0.0, 0.2]]]   # F_1, F_2, ... as row lists
//! ma = []                            # G_1, G_2, ...
//! innovation_cov = [[1.0, 0.0], [0.0, 2.0]]
//!
//! [options]
//! sign = "auto"      # "auto", "+" or "-"
//! steps = 1000000
//! seed = 0
//! nodes = 16384
//! restarts = 0
//! ```
//!
//! Instead of `innovation_cov` the covariance may be given as
//! `[noise.innovation_eig]` with `vectors` (orthogonal matrix whose columns
//! are eigenvectors, as row lists) and `values`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::capacity::{
    Allocation, CapacityResult, ChannelDesign, Eigenbasis, Method, SearchOptions, SearchTrace, Sign, SignPolicy,
};
use crate::coding::{ControllerForm, Verification, VerifyOptions};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::noise::ArmaNoise;
use crate::tol;

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub budget: f64,
    pub noise: NoiseSpec,
    #[serde(default)]
    pub options: RunOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub n: usize,
    #[serde(default)]
    pub ar: Vec<Rows>,
    #[serde(default)]
    pub ma: Vec<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub innovation_cov: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub innovation_eig: Option<EigSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigSpec {
    pub vectors: Rows,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    pub sign: SignPolicy,
    pub steps: usize,
    pub seed: u64,
    pub nodes: usize,
    pub restarts: usize,
    pub controller: ControllerForm,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            sign: SignPolicy::Auto,
            steps: tol::MC_REFERENCE_STEPS,
            seed: 0,
            nodes: tol::QUAD_NODES,
            restarts: 0,
            controller: ControllerForm::Innovations,
        }
    }
}

impl RunOptions {
    pub fn search(&self) -> SearchOptions {
        SearchOptions {
            sign: self.sign,
            restarts: self.restarts,
            seed: self.seed,
        }
    }

    pub fn verify(&self) -> VerifyOptions {
        VerifyOptions {
            steps: self.steps,
            seed: self.seed,
            nodes: self.nodes,
            form: self.controller,
        }
    }
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

impl NoiseSpec {
    pub fn from_noise(noise: &ArmaNoise) -> Self {
        Self {
            n: noise.dim(),
            ar: noise.ar().iter().map(linalg::to_rows).collect(),
            ma: noise.ma().iter().map(linalg::to_rows).collect(),
            innovation_cov: Some(linalg::to_rows(noise.innovation_cov())),
            innovation_eig: None,
        }
    }

    fn matrix(&self, rows: &Rows, what: &str) -> Result<Mat> {
        let m = linalg::from_rows(rows).map_err(|e| Error::Config(format!("{what}: {e}")))?;
        if m.shape() != (self.n, self.n) {
            return Err(Error::Config(format!(
                "{what} is {}x{}, expected {n}x{n}",
                m.nrows(),
                m.ncols(),
                n = self.n
            )));
        }
        Ok(m)
    }

    /// Build the noise model. Structural problems are config errors; a
    /// model that parses but fails validation is reported as invalid.
    pub fn to_noise(&self) -> Result<ArmaNoise> {
        if self.n == 0 {
            return Err(Error::Config("noise.n must be positive".into()));
        }
        let ar = self
            .ar
            .iter()
            .enumerate()
            .map(|(i, m)| self.matrix(m, &format!("noise.ar[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let ma = self
            .ma
            .iter()
            .enumerate()
            .map(|(j, m)| self.matrix(m, &format!("noise.ma[{j}]")))
            .collect::<Result<Vec<_>>>()?;
        let cov = match (&self.innovation_cov, &self.innovation_eig) {
            (Some(rows), None) => self.matrix(rows, "noise.innovation_cov")?,
            (None, Some(eig)) => {
                let u = self.matrix(&eig.vectors, "noise.innovation_eig.vectors")?;
                if eig.values.len() != self.n {
                    return Err(Error::Config(format!(
                        "noise.innovation_eig.values has {} entries, expected {}",
                        eig.values.len(),
                        self.n
                    )));
                }
                let orth = linalg::inf_norm(&(u.transpose() * &u - Mat::identity(self.n, self.n)));
                if orth > 1e-9 {
                    return Err(Error::Config(format!(
                        "noise.innovation_eig.vectors is not orthogonal (‖U'U - I‖ = {orth:.3e})"
                    )));
                }
                linalg::symmetrize(&(&u * Mat::from_diagonal(&Vector::from_column_slice(&eig.values)) * u.transpose()))
            }
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "give either noise.innovation_cov or noise.innovation_eig, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "noise needs innovation_cov or innovation_eig".into(),
                ))
            }
        };
        let noise = ArmaNoise::new(ar, ma, cov)?;
        noise.ensure_valid()?;
        Ok(noise)
    }
}

impl ChannelConfig {
    pub fn new(noise: &ArmaNoise, budget: f64) -> Self {
        Self {
            budget,
            noise: NoiseSpec::from_noise(noise),
            options: RunOptions::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Internal(format!("config serialization: {e}")))
    }

    pub fn check(&self) -> Result<()> {
        if !(self.budget.is_finite() && self.budget > 0.0) {
            return Err(Error::Config("budget must be positive".into()));
        }
        if self.options.nodes == 0 {
            return Err(Error::Config("options.nodes must be positive".into()));
        }
        Ok(())
    }

    pub fn noise(&self) -> Result<ArmaNoise> {
        self.noise.to_noise().map_err(|e| match e {
            Error::InvalidModel(_) | Error::Config(_) => e,
            other => config_err(other),
        })
    }
}

/// Serializable form of a [`ChannelDesign`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRecord {
    #[serde(with = "linalg::rows")]
    pub a: Mat,
    #[serde(with = "linalg::rows")]
    pub c: Mat,
    #[serde(with = "linalg::rows")]
    pub p: Mat,
    #[serde(with = "linalg::rows")]
    pub gain: Mat,
    #[serde(with = "linalg::rows")]
    pub chat: Mat,
    #[serde(with = "linalg::rows")]
    pub basis: Mat,
    pub allocation: Allocation,
    pub transmit_power: f64,
    pub are_residual: f64,
}

impl From<&ChannelDesign> for DesignRecord {
    fn from(d: &ChannelDesign) -> Self {
        Self {
            a: d.a.clone(),
            c: d.c.clone(),
            p: d.p.clone(),
            gain: d.gain.clone(),
            chat: d.chat.clone(),
            basis: d.basis.vectors.clone(),
            allocation: d.allocation.clone(),
            transmit_power: d.transmit_power,
            are_residual: d.are_residual,
        }
    }
}

impl DesignRecord {
    /// Rebuild the design as stored, without re-deriving any matrix.
    pub fn to_design(&self) -> Result<ChannelDesign> {
        let n = self.a.nrows();
        for (name, m) in [
            ("a", &self.a),
            ("c", &self.c),
            ("p", &self.p),
            ("gain", &self.gain),
            ("chat", &self.chat),
            ("basis", &self.basis),
        ] {
            if m.shape() != (n, n) {
                return Err(Error::Config(format!("design.{name} must be {n}x{n}")));
            }
        }
        let al = &self.allocation;
        let allocation = Allocation::new(al.powers.clone(), al.variances.clone(), al.signs.clone())
            .map_err(config_err)?;
        Ok(ChannelDesign {
            a: self.a.clone(),
            c: self.c.clone(),
            p: self.p.clone(),
            gain: self.gain.clone(),
            chat: self.chat.clone(),
            basis: Eigenbasis {
                vectors: self.basis.clone(),
                variances: al.variances.clone(),
            },
            allocation,
            transmit_power: self.transmit_power,
            are_residual: self.are_residual,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("design file: {e}")))
    }
}

/// Capacity result without the design matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacitySummary {
    pub lower_bound_bits: f64,
    pub budget: f64,
    pub method: Method,
    pub transmit_power: f64,
    pub powers: Vec<f64>,
    pub variances: Vec<f64>,
    pub gains: Vec<f64>,
    pub signs: Vec<Sign>,
    pub trace: SearchTrace,
}

impl From<&CapacityResult> for CapacitySummary {
    fn from(r: &CapacityResult) -> Self {
        let al = &r.design.allocation;
        Self {
            lower_bound_bits: r.lower_bound_bits,
            budget: r.budget,
            method: r.method,
            transmit_power: r.design.transmit_power,
            powers: al.powers.clone(),
            variances: al.variances.clone(),
            gains: al.gains.clone(),
            signs: al.signs.clone(),
            trace: r.trace.clone(),
        }
    }
}

/// Everything a command produced, for `--json` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: ChannelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<CapacitySummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification: Option<Verification>,
    pub wall_time_s: f64,
}

impl RunRecord {
    pub fn new(command: &str, config: &ChannelConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: config.clone(),
            capacity: None,
            design: None,
            verification: None,
            wall_time_s: 0.0,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Internal(format!("record serialization: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("run record: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const AR1: &str = r#"
budget = 1.92

[noise]
n = 1
ar = [[[0.5]]]
innovation_cov = [[1.0]]

[options]
sign = "-"
steps = 200000
seed = 7
"#;

    #[test]
    fn parses_scalar_ar1() {
        let cfg = ChannelConfig::parse(AR1).unwrap();
        assert_eq!(cfg.options.sign, SignPolicy::Minus);
        assert_eq!(cfg.options.nodes, tol::QUAD_NODES);
        let noise = cfg.noise().unwrap();
        assert_eq!(noise.ar_order(), 1);
        assert_eq!(noise.ar()[0][(0, 0)], 0.5);
    }

    #[test]
    fn round_trip() {
        let cfg = ChannelConfig::parse(AR1).unwrap();
        let again = ChannelConfig::parse(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn eigenpair_form() {
        let text = r#"
budget = 2.0
[noise]
n = 2
[noise.innovation_eig]
vectors = [[0.7071067811865476, -0.7071067811865476], [0.7071067811865476, 0.7071067811865476]]
values = [3.0, 1.0]
"#;
        let noise = ChannelConfig::parse(text).unwrap().noise().unwrap();
        let v = noise.innovation_cov();
        assert!((v[(0, 0)] - 2.0).abs() < 1e-12 && (v[(0, 1)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_budget() {
        let text = AR1.replace("budget = 1.92", "budget = -1");
        let err = ChannelConfig::parse(&text).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("budget must be positive"));
    }

    #[test]
    fn reports_unstable_ar() {
        let text = AR1.replace("[[[0.5]]]", "[[[1.1]]]");
        let err = ChannelConfig::parse(&text).unwrap().noise().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("AR polynomial root modulus 1.1 ≥ 1"), "{err}");
    }

    #[test]
    fn rejects_unknown_keys_and_shapes() {
        assert!(ChannelConfig::parse(&AR1.replace("seed = 7", "sede = 7")).is_err());
        let text = AR1.replace("[[[0.5]]]", "[[[0.5, 0.1]]]");
        let err = ChannelConfig::parse(&text).unwrap().noise().unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
