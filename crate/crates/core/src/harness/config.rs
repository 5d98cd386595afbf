//! Experiment configuration (TOML).
//!
//! ```toml
//! n_users = 1
//! eta = [0.05, 0.1, 0.2]
//! trials = 500
//! seed = 42
//!
//! [geometry]
//! kind = "ula"
//! n_t = 64
//! d_over_lambda = [0.1]
//!
//! [[arms]]
//! scheme = "modified-omp"
//! basis = "klt"
//! sparsity = 9
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel_model::{ArrayGeometry, CorrelationSpec, UpaGeometry};
use crate::compression::{measurements_for_ratio, MeasurementEnsemble};
use crate::error::{Error, Result};
use crate::precoding_metrics::PowerNormalization;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrayKind {
    Ula,
    Upa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub kind: ArrayKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_t: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_v: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_h: Option<usize>,
    #[serde(default = "one")]
    pub n_r: usize,
    pub d_over_lambda: Vec<f64>,
    /// ULA angular spread Δ in radians; defaults to `atan(r/s)` of the ring
    /// geometry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angular_spread: Option<f64>,
    #[serde(default = "default_u")]
    pub elevation_u: f64,
    #[serde(default = "default_r")]
    pub ring_radius_r: f64,
    #[serde(default = "default_s")]
    pub distance_s: f64,
    /// Fixed per-user horizontal AoA in radians; drawn per drop when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aoa: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Conventional OMP on random projections.
    Omp,
    ModifiedOmp,
    Truncation,
    /// No compression: `ĥ = h` (or `Q(h)` when quantized).
    Perfect,
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::Omp => "omp",
            Scheme::ModifiedOmp => "modified-omp",
            Scheme::Truncation => "truncation",
            Scheme::Perfect => "perfect",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisChoice {
    Klt,
    Dct,
}

impl BasisChoice {
    pub fn label(&self) -> &'static str {
        match self {
            BasisChoice::Klt => "klt",
            BasisChoice::Dct => "dct",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantizerChoice {
    #[default]
    None,
    Lbg,
    Rvq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    pub scheme: Scheme,
    /// Defaults to DCT for OMP and KLT otherwise; unused by `perfect`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<BasisChoice>,
    /// `K` for OMP, `K_p` for modified OMP.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<usize>,
    #[serde(default)]
    pub quantizer: QuantizerChoice,
    /// Overrides the top-level `bits` grid for this arm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bits: Option<Vec<u32>>,
    /// Pre-trained LBG codebook used for every drop and user instead of
    /// training one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codebook: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    #[serde(default = "one")]
    pub n_users: usize,
    #[serde(default)]
    pub eta: Vec<f64>,
    /// Explicit measurement counts; takes precedence over `eta`.
    #[serde(default)]
    pub m: Vec<usize>,
    #[serde(default)]
    pub snr_db: Vec<f64>,
    #[serde(default)]
    pub bits: Vec<u32>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Number of user-placement drops; trial `t` uses drop `t % drops`.
    #[serde(default = "default_drops")]
    pub drops: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_covariance_samples")]
    pub covariance_samples: usize,
    #[serde(default = "default_training_size")]
    pub training_size: usize,
    #[serde(default = "default_epsilon")]
    pub lbg_epsilon: f64,
    #[serde(default)]
    pub measurement: MeasurementEnsemble,
    #[serde(default)]
    pub power_normalization: PowerNormalization,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub arms: Vec<ArmConfig>,
}

fn one() -> usize {
    1
}
fn default_u() -> f64 {
    60.0
}
fn default_r() -> f64 {
    30.0
}
fn default_s() -> f64 {
    100.0
}
fn default_trials() -> usize {
    500
}
fn default_drops() -> usize {
    10
}
fn default_covariance_samples() -> usize {
    crate::channel_model::DEFAULT_COVARIANCE_SAMPLES
}
fn default_training_size() -> usize {
    10_000
}
fn default_epsilon() -> f64 {
    0.01
}

/// Which sweep a configuration drives; changes the default `K_p` and
/// which grids are required.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    Mse,
    Rate,
}

impl GeometryConfig {
    pub fn array(&self) -> Result<ArrayGeometry> {
        match self.kind {
            ArrayKind::Ula => {
                let n_t = self.n_t.ok_or_else(|| Error::Config("geometry.n_t is required for kind = \"ula\"".into()))?;
                if self.n_v.is_some() || self.n_h.is_some() {
                    return Err(Error::Config("geometry.n_v/n_h only apply to kind = \"upa\"".into()));
                }
                Ok(ArrayGeometry::Ula { n_t })
            }
            ArrayKind::Upa => {
                let n_v = self.n_v.ok_or_else(|| Error::Config("geometry.n_v is required for kind = \"upa\"".into()))?;
                let n_h = self.n_h.ok_or_else(|| Error::Config("geometry.n_h is required for kind = \"upa\"".into()))?;
                if let Some(n_t) = self.n_t {
                    if n_t != n_v * n_h {
                        return Err(Error::Config(format!("geometry.n_t = {n_t} but n_v * n_h = {}", n_v * n_h)));
                    }
                }
                Ok(ArrayGeometry::Upa { n_v, n_h })
            }
        }
    }

    pub fn ring(&self) -> UpaGeometry {
        UpaGeometry {
            elevation_u: self.elevation_u,
            ring_radius_r: self.ring_radius_r,
            distance_s: self.distance_s,
        }
    }

    pub fn n_t(&self) -> Result<usize> {
        Ok(self.array()?.n_t())
    }

    /// Correlation spec at antenna spacing `d_over_lambda`.
    pub fn correlation_spec(&self, d_over_lambda: f64) -> Result<CorrelationSpec> {
        let spec = match self.array()? {
            ArrayGeometry::Ula { n_t } => {
                let spread = self
                    .angular_spread
                    .unwrap_or_else(|| (self.ring_radius_r / self.distance_s).atan());
                CorrelationSpec::ula(n_t, d_over_lambda, spread)
            }
            ArrayGeometry::Upa { n_v, n_h } => {
                if self.angular_spread.is_some() {
                    return Err(Error::Config(
                        "geometry.angular_spread applies to kind = \"ula\"; UPA spreads follow from u, r, s".into(),
                    ));
                }
                CorrelationSpec::upa(n_v, n_h, d_over_lambda, self.ring())
            }
        };
        spec.validate().map_err(|e| Error::Config(format!("geometry: {e}")))?;
        Ok(spec)
    }
}

impl ArmConfig {
    pub fn basis_choice(&self) -> Option<BasisChoice> {
        match self.scheme {
            Scheme::Perfect => None,
            Scheme::Omp => Some(self.basis.unwrap_or(BasisChoice::Dct)),
            _ => Some(self.basis.unwrap_or(BasisChoice::Klt)),
        }
    }

    /// Reference-setup `K_p` for modified OMP when none is configured.
    pub fn default_k_p(&self, sweep: SweepKind, geometry: ArrayKind) -> usize {
        match (sweep, self.basis_choice(), geometry) {
            (SweepKind::Rate, Some(BasisChoice::Dct), _) => 4,
            (SweepKind::Rate, _, _) => 3,
            (SweepKind::Mse, Some(BasisChoice::Dct), _) => 19,
            (SweepKind::Mse, _, ArrayKind::Ula) => 9,
            (SweepKind::Mse, _, ArrayKind::Upa) => 6,
        }
    }

    pub fn label(&self) -> String {
        match self.quantizer {
            QuantizerChoice::None => self.scheme.label().to_string(),
            QuantizerChoice::Lbg => format!("{}+lbg", self.scheme.label()),
            QuantizerChoice::Rvq => format!("{}+rvq", self.scheme.label()),
        }
    }
}

/// Default conventional-OMP sparsity: `max(1, ⌊M/2⌋)`.
pub fn default_omp_sparsity(m: usize) -> usize {
    (m / 2).max(1)
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// CSI dimension `N = N_r · N_t`.
    pub fn n(&self) -> Result<usize> {
        Ok(self.geometry.n_r * self.geometry.n_t()?)
    }

    /// Measurement-count grid: `m` if given, else `round(η N)` per `eta`.
    pub fn m_grid(&self) -> Result<Vec<usize>> {
        let n = self.n()?;
        if !self.m.is_empty() {
            return Ok(self.m.clone());
        }
        Ok(self.eta.iter().map(|&eta| measurements_for_ratio(eta, n)).collect())
    }

    pub fn validate(&self, sweep: SweepKind) -> Result<()> {
        let cfg_err = |msg: String| Err(Error::Config(msg));
        let g = &self.geometry;
        g.array()?;
        if g.n_t()? == 0 {
            return cfg_err("geometry: array must have at least one antenna".into());
        }
        if g.n_r == 0 {
            return cfg_err("geometry.n_r must be >= 1".into());
        }
        if g.d_over_lambda.is_empty() {
            return cfg_err("geometry.d_over_lambda must list at least one spacing".into());
        }
        for &d in &g.d_over_lambda {
            g.correlation_spec(d)?;
        }
        if self.n_users == 0 {
            return cfg_err("n_users must be >= 1".into());
        }
        if let Some(aoa) = &g.aoa {
            if aoa.len() != self.n_users {
                return cfg_err(format!("geometry.aoa has {} entries for n_users = {}", aoa.len(), self.n_users));
            }
            if aoa.iter().any(|a| !a.is_finite()) {
                return cfg_err("geometry.aoa entries must be finite".into());
            }
        }
        if self.trials == 0 {
            return cfg_err("trials must be >= 1".into());
        }
        if self.drops == 0 {
            return cfg_err("drops must be >= 1".into());
        }
        if self.covariance_samples == 0 || self.training_size == 0 {
            return cfg_err("covariance_samples and training_size must be >= 1".into());
        }
        if !(self.lbg_epsilon > 0.0 && self.lbg_epsilon < 1.0) {
            return cfg_err(format!("lbg_epsilon must be in (0, 1) (got {})", self.lbg_epsilon));
        }
        if self.arms.is_empty() {
            return cfg_err("at least one [[arms]] entry is required".into());
        }
        let n = self.n()?;
        let needs_m = self.arms.iter().any(|a| a.scheme != Scheme::Perfect);
        if needs_m {
            if self.m.is_empty() && self.eta.is_empty() {
                return cfg_err("either eta or m must list at least one grid point".into());
            }
            for &eta in &self.eta {
                if !(eta > 0.0 && eta <= 1.0) {
                    return cfg_err(format!("eta values must lie in (0, 1] (got {eta})"));
                }
            }
            for &m in &self.m {
                if m == 0 || m > n {
                    return cfg_err(format!("m values must lie in 1..={n} (got {m})"));
                }
            }
        }
        if sweep == SweepKind::Rate {
            if self.snr_db.is_empty() {
                return cfg_err("snr_db must list at least one SNR for a rate sweep".into());
            }
            if self.snr_db.iter().any(|s| !s.is_finite()) {
                return cfg_err("snr_db entries must be finite".into());
            }
            if g.n_r != 1 {
                return cfg_err("rate sweeps require geometry.n_r = 1".into());
            }
        }
        for (i, arm) in self.arms.iter().enumerate() {
            let at = |msg: &str| Error::Config(format!("arms[{i}] ({}): {msg}", arm.label()));
            if arm.scheme == Scheme::Perfect && arm.basis.is_some() {
                return Err(at("basis does not apply to the perfect scheme"));
            }
            if matches!(arm.scheme, Scheme::Truncation | Scheme::Perfect) && arm.sparsity.is_some() {
                return Err(at("sparsity applies to omp and modified-omp only"));
            }
            if arm.sparsity == Some(0) {
                return Err(at("sparsity must be >= 1"));
            }
            match arm.quantizer {
                QuantizerChoice::None => {
                    if arm.bits.is_some() || arm.codebook.is_some() {
                        return Err(at("bits/codebook require a quantizer"));
                    }
                }
                q => {
                    let bits = arm.bits.as_ref().unwrap_or(&self.bits);
                    if bits.is_empty() && arm.codebook.is_none() {
                        return Err(at("quantized arms need a bits grid"));
                    }
                    if bits.iter().any(|&b| b == 0 || b > 20) {
                        return Err(at("bits must lie in 1..=20"));
                    }
                    if arm.codebook.is_some() {
                        if q != QuantizerChoice::Lbg {
                            return Err(at("a codebook file can only replace LBG training"));
                        }
                        if arm.bits.is_some() {
                            return Err(at("bits come from the codebook file"));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        eta = [0.25]
        [geometry]
        kind = "ula"
        n_t = 8
        d_over_lambda = [0.1]
        [[arms]]
        scheme = "truncation"
    "#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.trials, 500);
        assert_eq!(cfg.drops, 10);
        assert_eq!(cfg.covariance_samples, 1000);
        assert_eq!(cfg.training_size, 10_000);
        assert_eq!(cfg.geometry.n_r, 1);
        assert_eq!(cfg.m_grid().unwrap(), vec![2]);
        assert_eq!(cfg.arms[0].basis_choice(), Some(BasisChoice::Klt));
        cfg.validate(SweepKind::Mse).unwrap();
        assert!(cfg.validate(SweepKind::Rate).is_err());
    }

    #[test]
    fn reports_unknown_fields_with_location() {
        let err = ExperimentConfig::from_toml_str(&MINIMAL.replace("trials", "x").replace("eta =", "etaa =")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("etaa"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn reports_type_errors() {
        let err = ExperimentConfig::from_toml_str(&MINIMAL.replace("n_t = 8", "n_t = \"eight\"")).unwrap_err();
        assert!(err.to_string().contains("n_t"), "{err}");
    }

    #[test]
    fn validation_names_the_field() {
        let mut cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        cfg.eta = vec![1.5];
        assert!(cfg.validate(SweepKind::Mse).unwrap_err().to_string().contains("eta"));
        let mut cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        cfg.arms[0].quantizer = QuantizerChoice::Lbg;
        assert!(cfg.validate(SweepKind::Mse).unwrap_err().to_string().contains("bits"));
        let mut cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        cfg.geometry.kind = ArrayKind::Upa;
        assert!(cfg.validate(SweepKind::Mse).unwrap_err().to_string().contains("n_v"));
    }

    #[test]
    fn reference_default_k_p() {
        let arm = |basis| ArmConfig {
            scheme: Scheme::ModifiedOmp,
            basis: Some(basis),
            sparsity: None,
            quantizer: QuantizerChoice::None,
            bits: None,
            codebook: None,
        };
        assert_eq!(arm(BasisChoice::Klt).default_k_p(SweepKind::Mse, ArrayKind::Ula), 9);
        assert_eq!(arm(BasisChoice::Klt).default_k_p(SweepKind::Mse, ArrayKind::Upa), 6);
        assert_eq!(arm(BasisChoice::Dct).default_k_p(SweepKind::Mse, ArrayKind::Upa), 19);
        assert_eq!(arm(BasisChoice::Klt).default_k_p(SweepKind::Rate, ArrayKind::Upa), 3);
        assert_eq!(arm(BasisChoice::Dct).default_k_p(SweepKind::Rate, ArrayKind::Upa), 4);
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&json).unwrap(), cfg);
    }
}
