//! Sweep engine shared by the MSE and sum-rate protocols.
//!
//! Seeds are pure functions of the base seed and the quantities a result row
//! reports, so any row can be reproduced from a config holding just that row:
//!
//! * user AoA, covariance draws and LBG training channels: `(drop, user)`
//! * channel realizations: `trial` (shared by every arm, grid point and
//!   spacing, so comparisons are paired)
//! * measurement matrix: `M`
//! * RVQ codebooks: `(M, bits, trial, user)`

use std::collections::HashMap;

use rayon::prelude::*;

use super::config::{
    default_omp_sparsity, ArmConfig, BasisChoice, ExperimentConfig, QuantizerChoice, Scheme, SweepKind,
};
use super::output::{ResultRow, ResultTable};
use super::stats::summarize;
use crate::bases::{dct2d_basis, klt_basis, Basis};
use crate::channel_model::{draw_aoa, draw_multiuser, estimate_covariance, CorrelationSpec, KroneckerLink};
use crate::compression::{
    compress_random_projection, compress_truncation, compression_ratio, draw_measurement_matrix, CompressedCsi,
    FeedbackScheme, MeasurementMatrix,
};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector};
use crate::precoding_metrics::{mmse_precoder, normalized_mse, sum_rate, PrecoderConfig};
use crate::quantization::{
    mean_squared_norm, quantize_vector, rvq_codebook, train_lbg_nested, Codebook, LbgConfig,
};
use crate::reconstruction::{modified_omp_with, omp, reconstruct_truncation, ModifiedOmpOptions};
use crate::rng::{derive_seed, stream_rng, Stream};

/// Per-user state fixed for a drop.
#[derive(Debug, Clone)]
pub struct UserSetup {
    pub aoa: f64,
    pub link: KroneckerLink,
    /// KLT basis from `covariance_samples` channel draws.
    pub klt: Basis,
}

/// Horizontal AoA of `user` in `drop`.
pub fn user_aoa(cfg: &ExperimentConfig, drop: usize, user: usize) -> f64 {
    match &cfg.geometry.aoa {
        Some(aoa) => aoa[user],
        None => draw_aoa(&mut stream_rng(cfg.seed, Stream::Aoa, &[drop as u64, user as u64])),
    }
}

pub fn user_setup(cfg: &ExperimentConfig, spec: &CorrelationSpec, drop: usize, user: usize) -> Result<UserSetup> {
    let aoa = user_aoa(cfg, drop, user);
    let r_tx = spec.transmit_correlation(aoa)?;
    let link = KroneckerLink::with_identity_rx(&r_tx, cfg.geometry.n_r)?;
    let mut rng = stream_rng(cfg.seed, Stream::Covariance, &[drop as u64, user as u64]);
    let samples: Vec<CVector> = (0..cfg.covariance_samples).map(|_| link.draw_vectorized(&mut rng)).collect();
    let klt = klt_basis(&estimate_covariance(&samples)?)?;
    Ok(UserSetup { aoa, link, klt })
}

/// Fresh channel draws used to train quantizers for `user` in `drop`.
pub fn training_channels(cfg: &ExperimentConfig, link: &KroneckerLink, drop: usize, user: usize) -> Vec<CVector> {
    let mut rng = stream_rng(cfg.seed, Stream::Training, &[drop as u64, user as u64]);
    (0..cfg.training_size).map(|_| link.draw_vectorized(&mut rng)).collect()
}

/// The measurement matrix shared by both link ends for `M = m`.
pub fn measurement_matrix(cfg: &ExperimentConfig, m: usize) -> Result<MeasurementMatrix> {
    draw_measurement_matrix(m, cfg.n()?, derive_seed(cfg.seed, Stream::Measurement, &[m as u64]), cfg.measurement)
}

/// The vector an arm feeds back for channel `h`, before quantization.
pub fn feedback_vector(
    scheme: Scheme,
    basis: Option<&Basis>,
    phi: Option<&MeasurementMatrix>,
    m: usize,
    h: &CVector,
) -> Result<CVector> {
    match scheme {
        Scheme::Perfect => Ok(h.clone()),
        Scheme::Truncation => Ok(compress_truncation(need(basis)?, h, m)?.vector),
        Scheme::Omp | Scheme::ModifiedOmp => Ok(compress_random_projection(need(phi)?, h)?.vector),
    }
}

fn need<T>(x: Option<T>) -> Result<T> {
    x.ok_or_else(|| Error::invalid("pipeline stage is missing its basis or measurement matrix"))
}

fn decode(
    scheme: Scheme,
    sparsity: Option<usize>,
    basis: Option<&Basis>,
    phi: Option<&MeasurementMatrix>,
    y: CVector,
) -> Result<CVector> {
    match scheme {
        Scheme::Perfect => Ok(y),
        Scheme::Truncation => {
            let basis = need(basis)?;
            let csi = CompressedCsi {
                vector: y,
                scheme: FeedbackScheme::Truncation,
                basis_kind: Some(basis.kind()),
                n: basis.dim(),
            };
            Ok(reconstruct_truncation(&csi, basis)?.h_hat)
        }
        Scheme::ModifiedOmp => {
            let opts = ModifiedOmpOptions {
                k_p: need(sparsity)?,
                allow_underdetermined: true,
            };
            Ok(modified_omp_with(&y, need(phi)?.matrix(), need(basis)?, opts)?.h_hat)
        }
        Scheme::Omp => Ok(omp(&y, need(phi)?.matrix(), need(basis)?, need(sparsity)?)?.h_hat),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Status {
    Ok,
    Underdetermined,
    Invalid(String),
}

impl Status {
    fn label(&self) -> String {
        match self {
            Status::Ok => "ok".into(),
            Status::Underdetermined => "underdetermined".into(),
            Status::Invalid(why) => format!("invalid: {why}"),
        }
    }
}

struct Arm {
    cfg: ArmConfig,
    bits: Vec<u32>,
    loaded: Option<Codebook>,
}

struct Cell {
    arm: usize,
    m: usize,
    sparsity: Option<usize>,
    bits: Option<u32>,
    status: Status,
    /// First output slot: normalized MSE, followed by one rate per SNR.
    slot: usize,
}

/// Per-user quantizer state for one drop, keyed by `(arm, M)`.
#[derive(Default)]
struct QuantizerState {
    lbg: HashMap<(usize, usize), Vec<Codebook>>,
    rvq_target: HashMap<(usize, usize), f64>,
}

struct DropState {
    users: Vec<UserSetup>,
    quantizers: Vec<QuantizerState>,
}

struct Plan<'a> {
    cfg: &'a ExperimentConfig,
    sweep: SweepKind,
    n: usize,
    arms: Vec<Arm>,
    cells: Vec<Cell>,
    slots: usize,
    dct: Basis,
    phis: HashMap<usize, MeasurementMatrix>,
    warnings: Vec<String>,
}

impl<'a> Plan<'a> {
    fn new(cfg: &'a ExperimentConfig, sweep: SweepKind) -> Result<Self> {
        cfg.validate(sweep)?;
        let n = cfg.n()?;
        let m_grid = cfg.m_grid()?;
        let mut warnings = Vec::new();
        let mut arms = Vec::with_capacity(cfg.arms.len());
        for a in &cfg.arms {
            let loaded = match &a.codebook {
                Some(path) => Some(Codebook::load(path).map_err(|e| {
                    Error::Config(format!("arms ({}): cannot load codebook {}: {e}", a.label(), path.display()))
                })?),
                None => None,
            };
            let bits = match (&loaded, a.quantizer) {
                (_, QuantizerChoice::None) => Vec::new(),
                (Some(cb), _) => vec![cb.bits()],
                (None, _) => a.bits.clone().unwrap_or_else(|| cfg.bits.clone()),
            };
            if a.quantizer == QuantizerChoice::Lbg && loaded.is_none() {
                if let Some(&b) = bits.iter().max() {
                    if (1usize << b) > cfg.training_size {
                        warnings.push(format!(
                            "{}: {b}-bit LBG codebook has more cells than training vectors ({})",
                            a.label(),
                            cfg.training_size
                        ));
                    }
                }
            }
            arms.push(Arm {
                cfg: a.clone(),
                bits,
                loaded,
            });
        }

        let geometry_kind = cfg.geometry.kind;
        let rate_slots = if sweep == SweepKind::Rate { cfg.snr_db.len() } else { 0 };
        let mut cells = Vec::new();
        let mut slots = 0;
        for (ai, arm) in arms.iter().enumerate() {
            let ms: Vec<usize> = if arm.cfg.scheme == Scheme::Perfect { vec![n] } else { m_grid.clone() };
            for &m in &ms {
                let (sparsity, status) = match arm.cfg.scheme {
                    Scheme::Omp => {
                        let k = arm.cfg.sparsity.unwrap_or_else(|| default_omp_sparsity(m));
                        let status = if k > m {
                            Status::Invalid(format!("OMP sparsity K = {k} exceeds M = {m}"))
                        } else {
                            Status::Ok
                        };
                        (Some(k), status)
                    }
                    Scheme::ModifiedOmp => {
                        let k_p = arm.cfg.sparsity.unwrap_or_else(|| arm.cfg.default_k_p(sweep, geometry_kind));
                        if k_p as f64 / m as f64 > 0.8 {
                            let msg = format!(
                                "{} ({}): K_p = {k_p} at M = {m} (K_p/M = {:.2} > 0.8); the dominant-block solve is ill-conditioned",
                                arm.cfg.label(),
                                arm.cfg.basis_choice().map_or("", |b| b.label()),
                                k_p as f64 / m as f64
                            );
                            if !warnings.contains(&msg) {
                                warnings.push(msg);
                            }
                        }
                        let status = if k_p > n {
                            Status::Invalid(format!("K_p = {k_p} exceeds N = {n}"))
                        } else if k_p > m {
                            Status::Underdetermined
                        } else {
                            Status::Ok
                        };
                        (Some(k_p), status)
                    }
                    Scheme::Truncation | Scheme::Perfect => (None, Status::Ok),
                };
                let bit_levels: Vec<Option<u32>> = if arm.bits.is_empty() {
                    vec![None]
                } else {
                    arm.bits.iter().map(|&b| Some(b)).collect()
                };
                for bits in bit_levels {
                    let mut status = status.clone();
                    if let (Some(cb), Status::Ok | Status::Underdetermined) = (&arm.loaded, &status) {
                        if cb.dim() != m {
                            status = Status::Invalid(format!(
                                "codebook dimension {} does not match feedback length {m}",
                                cb.dim()
                            ));
                        }
                    }
                    cells.push(Cell {
                        arm: ai,
                        m,
                        sparsity,
                        bits,
                        status,
                        slot: slots,
                    });
                    slots += 1 + rate_slots;
                }
            }
        }

        let mut phis = HashMap::new();
        for cell in &cells {
            if matches!(arms[cell.arm].cfg.scheme, Scheme::Omp | Scheme::ModifiedOmp) && !phis.contains_key(&cell.m) {
                phis.insert(cell.m, measurement_matrix(cfg, cell.m)?);
            }
        }
        let dct = dct2d_basis(cfg.geometry.n_r, cfg.geometry.n_t()?)?;
        Ok(Plan {
            cfg,
            sweep,
            n,
            arms,
            cells,
            slots,
            dct,
            phis,
            warnings,
        })
    }

    fn basis<'b>(&'b self, arm: &Arm, user: &'b UserSetup) -> Option<&'b Basis> {
        match arm.cfg.basis_choice()? {
            BasisChoice::Klt => Some(&user.klt),
            BasisChoice::Dct => Some(&self.dct),
        }
    }

    fn quantized_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for c in &self.cells {
            let arm = &self.arms[c.arm];
            if arm.cfg.quantizer != QuantizerChoice::None
                && arm.loaded.is_none()
                && !matches!(c.status, Status::Invalid(_))
                && !pairs.contains(&(c.arm, c.m))
            {
                pairs.push((c.arm, c.m));
            }
        }
        pairs
    }

    fn build_drop(&self, spec: &CorrelationSpec, drop: usize) -> Result<DropState> {
        let pairs = self.quantized_pairs();
        let mut users = Vec::with_capacity(self.cfg.n_users);
        let mut quantizers = Vec::with_capacity(self.cfg.n_users);
        for u in 0..self.cfg.n_users {
            let setup = user_setup(self.cfg, spec, drop, u)?;
            let mut state = QuantizerState::default();
            if !pairs.is_empty() {
                let training = training_channels(self.cfg, &setup.link, drop, u);
                for &(ai, m) in &pairs {
                    let arm = &self.arms[ai];
                    let basis = self.basis(arm, &setup);
                    let phi = self.phis.get(&m);
                    let ys = training
                        .iter()
                        .map(|h| feedback_vector(arm.cfg.scheme, basis, phi, m, h))
                        .collect::<Result<Vec<_>>>()?;
                    match arm.cfg.quantizer {
                        QuantizerChoice::Lbg => {
                            let mut lbg = LbgConfig::new(*arm.bits.iter().max().expect("quantized arm has bits"));
                            lbg.epsilon = self.cfg.lbg_epsilon;
                            state.lbg.insert((ai, m), train_lbg_nested(&ys, &lbg)?);
                        }
                        QuantizerChoice::Rvq => {
                            state.rvq_target.insert((ai, m), mean_squared_norm(&ys)?);
                        }
                        QuantizerChoice::None => {}
                    }
                }
            }
            users.push(setup);
            quantizers.push(state);
        }
        Ok(DropState { users, quantizers })
    }

    fn run_trial(&self, drops: &[DropState], t: usize) -> Result<Vec<f64>> {
        let cfg = self.cfg;
        let state = &drops[t % drops.len()];
        let links: Vec<KroneckerLink> = state.users.iter().map(|u| u.link.clone()).collect();
        let sample = draw_multiuser(&links, &mut stream_rng(cfg.seed, Stream::Channel, &[t as u64]))?;
        let mut out = vec![f64::NAN; self.slots];
        for cell in &self.cells {
            if matches!(cell.status, Status::Invalid(_)) {
                continue;
            }
            let arm = &self.arms[cell.arm];
            let phi = self.phis.get(&cell.m);
            let mut nmse = 0.0;
            let mut h_hat_rows = CMatrix::zeros(cfg.n_users, self.n);
            for (u, user) in state.users.iter().enumerate() {
                let h = sample.vectorized(u);
                let basis = self.basis(arm, user);
                let y = feedback_vector(arm.cfg.scheme, basis, phi, cell.m, h)?;
                let y = match (arm.cfg.quantizer, cell.bits) {
                    (QuantizerChoice::None, _) | (_, None) => y,
                    (QuantizerChoice::Lbg, Some(b)) => {
                        let cb = match &arm.loaded {
                            Some(cb) => cb,
                            None => &state.quantizers[u].lbg[&(cell.arm, cell.m)][b as usize - 1],
                        };
                        quantize_vector(&y, cb)?
                    }
                    (QuantizerChoice::Rvq, Some(b)) => {
                        let target = state.quantizers[u].rvq_target[&(cell.arm, cell.m)];
                        let seed =
                            derive_seed(cfg.seed, Stream::Rvq, &[cell.m as u64, b as u64, t as u64, u as u64]);
                        quantize_vector(&y, &rvq_codebook(y.len(), b, seed, target)?)?
                    }
                };
                let h_hat = decode(arm.cfg.scheme, cell.sparsity, basis, phi, y)?;
                nmse += normalized_mse(h, &h_hat)?;
                h_hat_rows.row_mut(u).tr_copy_from(&h_hat);
            }
            out[cell.slot] = nmse / cfg.n_users as f64;
            if self.sweep == SweepKind::Rate {
                for (si, &snr_db) in cfg.snr_db.iter().enumerate() {
                    let mut pc = PrecoderConfig::new(snr_db, cfg.n_users);
                    pc.power_normalization = cfg.power_normalization;
                    let w = mmse_precoder(&h_hat_rows, &pc)?.matrix;
                    out[cell.slot + 1 + si] = sum_rate(sample.stacked(), &w, &pc)?;
                }
            }
        }
        Ok(out)
    }

    fn rows_for(&self, d_over_lambda: f64, per_trial: &[Vec<f64>]) -> Vec<ResultRow> {
        let cfg = self.cfg;
        let mut rows = Vec::new();
        for cell in &self.cells {
            let arm = &self.arms[cell.arm];
            let mut metrics = vec![("nmse", None, cell.slot)];
            if self.sweep == SweepKind::Rate {
                for (si, &snr) in cfg.snr_db.iter().enumerate() {
                    metrics.push(("sum_rate", Some(snr), cell.slot + 1 + si));
                }
            }
            for (name, snr_db, slot) in metrics {
                let samples: Vec<f64> = if matches!(cell.status, Status::Invalid(_)) {
                    Vec::new()
                } else {
                    per_trial.iter().map(|v| v[slot]).collect()
                };
                let s = summarize(&samples);
                rows.push(ResultRow {
                    scheme: arm.cfg.label(),
                    basis: arm.cfg.basis_choice().map_or("none", |b| b.label()).to_string(),
                    geometry: cfg.geometry.array().map(|g| g.label()).unwrap_or("?").to_string(),
                    d_over_lambda,
                    n_t: cfg.geometry.n_t().unwrap_or(0),
                    n_r: cfg.geometry.n_r,
                    n_users: cfg.n_users,
                    eta: compression_ratio(cell.m, self.n),
                    m: cell.m,
                    k_p: cell.sparsity,
                    bits: cell.bits,
                    snr_db,
                    metric_name: name.to_string(),
                    mean: (s.count > 0).then_some(s.mean),
                    stderr: s.stderr,
                    trials: s.count,
                    status: cell.status.label(),
                    samples,
                });
            }
        }
        rows
    }
}

fn run(cfg: &ExperimentConfig, sweep: SweepKind) -> Result<ResultTable> {
    let mut resolved = cfg.clone();
    if sweep == SweepKind::Rate
        && !resolved
            .arms
            .iter()
            .any(|a| a.scheme == Scheme::Perfect && a.quantizer == QuantizerChoice::None)
    {
        resolved.arms.insert(
            0,
            ArmConfig {
                scheme: Scheme::Perfect,
                basis: None,
                sparsity: None,
                quantizer: QuantizerChoice::None,
                bits: None,
                codebook: None,
            },
        );
    }
    let plan = Plan::new(&resolved, sweep)?;
    let drops = resolved.drops.min(resolved.trials);
    let mut rows = Vec::new();
    for &d in &resolved.geometry.d_over_lambda {
        let spec = resolved.geometry.correlation_spec(d)?;
        let states = (0..drops)
            .into_par_iter()
            .map(|drop| plan.build_drop(&spec, drop))
            .collect::<Result<Vec<_>>>()?;
        let per_trial = (0..resolved.trials)
            .into_par_iter()
            .map(|t| plan.run_trial(&states, t))
            .collect::<Result<Vec<_>>>()?;
        rows.extend(plan.rows_for(d, &per_trial));
    }
    Ok(ResultTable {
        sweep,
        n: plan.n,
        m_grid: resolved.m_grid()?,
        warnings: plan.warnings.clone(),
        config: resolved,
        rows,
    })
}

/// Normalized-MSE sweep over the `M` grid for every arm and spacing.
pub fn run_mse_sweep(cfg: &ExperimentConfig) -> Result<ResultTable> {
    run(cfg, SweepKind::Mse)
}

/// Sum-rate sweep: every arm's per-user feedback is assembled into `Ĥ`,
/// precoded, and evaluated on the true channel at each SNR. A perfect-CSI
/// arm is added when the config lacks one.
pub fn run_sum_rate_sweep(cfg: &ExperimentConfig) -> Result<ResultTable> {
    run(cfg, SweepKind::Rate)
}

/// LBG training set of arm `arm` at `M = m` for `user` in `drop`, at spacing
/// index `d_index`.
pub fn quantizer_training_set(
    cfg: &ExperimentConfig,
    arm: usize,
    m: usize,
    d_index: usize,
    drop: usize,
    user: usize,
) -> Result<Vec<CVector>> {
    let a = cfg
        .arms
        .get(arm)
        .ok_or_else(|| Error::Config(format!("arm index {arm} out of range ({} arms)", cfg.arms.len())))?;
    let d = *cfg
        .geometry
        .d_over_lambda
        .get(d_index)
        .ok_or_else(|| Error::Config(format!("d index {d_index} out of range")))?;
    if user >= cfg.n_users {
        return Err(Error::Config(format!("user {user} out of range (n_users = {})", cfg.n_users)));
    }
    let spec = cfg.geometry.correlation_spec(d)?;
    let setup = user_setup(cfg, &spec, drop, user)?;
    let n = cfg.n()?;
    let m = if a.scheme == Scheme::Perfect { n } else { m };
    let phi = match a.scheme {
        Scheme::Omp | Scheme::ModifiedOmp => Some(measurement_matrix(cfg, m)?),
        _ => None,
    };
    let dct;
    let basis = match a.basis_choice() {
        Some(BasisChoice::Klt) => Some(&setup.klt),
        Some(BasisChoice::Dct) => {
            dct = dct2d_basis(cfg.geometry.n_r, cfg.geometry.n_t()?)?;
            Some(&dct)
        }
        None => None,
    };
    training_channels(cfg, &setup.link, drop, user)
        .iter()
        .map(|h| feedback_vector(a.scheme, basis, phi.as_ref(), m, h))
        .collect()
}
