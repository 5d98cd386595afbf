//! Vector quantization of feedback vectors.
//!
//! [`train_lbg`] grows a codebook by splitting and Lloyd iterations;
//! [`rvq_codebook`] draws a random codebook whose second moment matches the
//! vectors it will quantize. Distances are Euclidean throughout.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bases::{read_f64, read_u32, read_u64, read_u8};
use crate::error::{Error, Result};
use crate::linalg::{CVector, C64};
use crate::rng::{complex_gaussian, rng_from_seed};

const CODEBOOK_MAGIC: &[u8; 8] = b"CSIFBCB1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CodebookKind {
    Lbg { epsilon: f64 },
    /// `scale` is the per-component standard deviation applied to CN(0, 1)
    /// draws.
    Rvq { seed: u64, scale: f64 },
}

/// MQE trace of one iterative phase, recorded at codebook size `size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbgPhase {
    pub size: usize,
    pub mqe: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    dim: usize,
    bits: u32,
    kind: CodebookKind,
    /// Code vectors back to back, each as interleaved (re, im) pairs.
    data: Vec<f64>,
    mqe_history: Vec<LbgPhase>,
    id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuantizedFeedback {
    pub index: usize,
    pub codebook_id: u64,
}

fn flatten(v: &CVector) -> Vec<f64> {
    v.iter().flat_map(|z| [z.re, z.im]).collect()
}

fn unflatten(x: &[f64]) -> CVector {
    CVector::from_iterator(x.len() / 2, x.chunks_exact(2).map(|p| C64::new(p[0], p[1])))
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// FNV-1a over the codebook's file representation.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl Codebook {
    fn build(dim: usize, bits: u32, kind: CodebookKind, data: Vec<f64>, mqe_history: Vec<LbgPhase>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("codebook dimension must be positive"));
        }
        if bits == 0 || bits > 24 {
            return Err(Error::invalid(format!("codebook bits must be in 1..=24 (got {bits})")));
        }
        let expected = (1usize << bits) * 2 * dim;
        if data.len() != expected {
            return Err(Error::dims("codebook payload", expected, data.len()));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("codebook contains non-finite entries"));
        }
        let mut cb = Codebook {
            dim,
            bits,
            kind,
            data,
            mqe_history,
            id: 0,
        };
        let mut bytes = Vec::new();
        cb.write_to(&mut bytes)?;
        cb.id = fnv1a(&bytes);
        Ok(cb)
    }

    /// Codebook from explicit code vectors; `2^bits` vectors are required.
    pub fn from_vectors(vectors: &[CVector], kind: CodebookKind) -> Result<Self> {
        let n = vectors.len();
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::invalid(format!("codebook size must be a power of two (got {n})")));
        }
        let dim = vectors[0].len();
        if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
            return Err(Error::dims("code vector", dim, v.len()));
        }
        let data = vectors.iter().flat_map(flatten).collect();
        Self::build(dim, n.trailing_zeros(), kind, data, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn len(&self) -> usize {
        1 << self.bits
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn kind(&self) -> CodebookKind {
        self.kind
    }

    pub fn mqe_history(&self) -> &[LbgPhase] {
        &self.mqe_history
    }

    /// Content hash identifying this codebook.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn vector(&self, i: usize) -> CVector {
        let w = 2 * self.dim;
        unflatten(&self.data[i * w..(i + 1) * w])
    }

    pub fn vectors(&self) -> Vec<CVector> {
        (0..self.len()).map(|i| self.vector(i)).collect()
    }

    /// Index and squared distance of the nearest code vector (lowest index on
    /// ties).
    fn nearest_flat(&self, x: &[f64]) -> (usize, f64) {
        nearest(&self.data, 2 * self.dim, x)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(CODEBOOK_MAGIC)?;
        match self.kind {
            CodebookKind::Lbg { epsilon } => {
                w.write_all(&[1])?;
                w.write_all(&epsilon.to_le_bytes())?;
            }
            CodebookKind::Rvq { seed, scale } => {
                w.write_all(&[2])?;
                w.write_all(&seed.to_le_bytes())?;
                w.write_all(&scale.to_le_bytes())?;
            }
        }
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&self.bits.to_le_bytes())?;
        w.write_all(&(self.mqe_history.len() as u32).to_le_bytes())?;
        for phase in &self.mqe_history {
            w.write_all(&(phase.size as u32).to_le_bytes())?;
            w.write_all(&(phase.mqe.len() as u32).to_le_bytes())?;
            for v in &phase.mqe {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CODEBOOK_MAGIC {
            return Err(Error::Format("not a codebook file".into()));
        }
        let kind = match read_u8(r)? {
            1 => CodebookKind::Lbg { epsilon: read_f64(r)? },
            2 => CodebookKind::Rvq {
                seed: read_u64(r)?,
                scale: read_f64(r)?,
            },
            t => return Err(Error::Format(format!("unknown codebook kind tag {t}"))),
        };
        let dim = read_u32(r)? as usize;
        let bits = read_u32(r)?;
        if bits == 0 || bits > 24 || dim == 0 {
            return Err(Error::Format(format!("bad codebook header (dim {dim}, bits {bits})")));
        }
        let phases = read_u32(r)? as usize;
        let mut history = Vec::with_capacity(phases.min(64));
        for _ in 0..phases {
            let size = read_u32(r)? as usize;
            let len = read_u32(r)? as usize;
            let mqe = (0..len).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
            history.push(LbgPhase { size, mqe });
        }
        let n = (1usize << bits) * 2 * dim;
        let data = (0..n).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
        Self::build(dim, bits, kind, data, history)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

fn nearest(codes: &[f64], width: usize, x: &[f64]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in codes.chunks_exact(width).enumerate() {
        // Partial distance search: abandon a candidate once it cannot win.
        let mut d = 0.0;
        for (a, b) in c.iter().zip(x) {
            d += (a - b) * (a - b);
            if d >= best_d {
                break;
            }
        }
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    (best, best_d)
}

/// Index of the nearest code vector to `v`; ties go to the lowest index.
pub fn quantize(v: &CVector, cb: &Codebook) -> Result<QuantizedFeedback> {
    if v.len() != cb.dim {
        return Err(Error::dims("quantizer input", cb.dim, v.len()));
    }
    let (index, _) = cb.nearest_flat(&flatten(v));
    Ok(QuantizedFeedback {
        index,
        codebook_id: cb.id,
    })
}

pub fn dequantize(q: &QuantizedFeedback, cb: &Codebook) -> Result<CVector> {
    if q.codebook_id != cb.id {
        return Err(Error::SchemeMismatch(format!(
            "index refers to codebook {:016x}, decoder holds {:016x}",
            q.codebook_id, cb.id
        )));
    }
    if q.index >= cb.len() {
        return Err(Error::invalid(format!("codebook index {} out of range", q.index)));
    }
    Ok(cb.vector(q.index))
}

/// `Q(v)`: the nearest code vector itself.
pub fn quantize_vector(v: &CVector, cb: &Codebook) -> Result<CVector> {
    dequantize(&quantize(v, cb)?, cb)
}

/// Distance from each vector to its nearest code vector.
pub fn quantization_errors(cb: &Codebook, eval: &[CVector]) -> Result<Vec<f64>> {
    if let Some(v) = eval.iter().find(|v| v.len() != cb.dim) {
        return Err(Error::dims("evaluation vector", cb.dim, v.len()));
    }
    Ok(eval
        .par_iter()
        .map(|v| cb.nearest_flat(&flatten(v)).1.sqrt())
        .collect())
}

/// Mean quantization error: mean Euclidean distance to the nearest code
/// vector.
pub fn mqe(cb: &Codebook, eval: &[CVector]) -> Result<f64> {
    if eval.is_empty() {
        return Err(Error::EmptySamples);
    }
    let d = quantization_errors(cb, eval)?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbgConfig {
    pub bits: u32,
    pub epsilon: f64,
    /// Stop an iterative phase once `(MQE_prev - MQE) / MQE_prev` drops below
    /// this value.
    pub threshold: f64,
    pub max_iterations: usize,
}

impl LbgConfig {
    pub fn new(bits: u32) -> Self {
        LbgConfig {
            bits,
            epsilon: 0.01,
            threshold: 1e-4,
            max_iterations: 100,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.bits == 0 || self.bits > 24 {
            return Err(Error::invalid(format!("LBG bits must be in 1..=24 (got {})", self.bits)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid(format!("LBG epsilon must be in (0, 1) (got {})", self.epsilon)));
        }
        if !(self.threshold >= 0.0) || self.max_iterations == 0 {
            return Err(Error::invalid("LBG threshold must be >= 0 and max_iterations >= 1"));
        }
        Ok(())
    }
}

/// Trains a `cfg.bits`-bit LBG codebook.
pub fn train_lbg(training: &[CVector], cfg: &LbgConfig) -> Result<Codebook> {
    let mut all = train_lbg_nested(training, cfg)?;
    Ok(all.pop().expect("at least one bit level"))
}

/// Trains up to `cfg.bits` and returns the codebook reached at every bit
/// level `1..=cfg.bits`. Splitting is deterministic, so entry `b - 1` is
/// exactly what a `b`-bit run would produce.
pub fn train_lbg_nested(training: &[CVector], cfg: &LbgConfig) -> Result<Vec<Codebook>> {
    cfg.validate()?;
    if training.is_empty() {
        return Err(Error::EmptySamples);
    }
    let dim = training[0].len();
    if dim == 0 {
        return Err(Error::invalid("training vectors must be non-empty"));
    }
    if let Some(v) = training.iter().find(|v| v.len() != dim) {
        return Err(Error::dims("training vector", dim, v.len()));
    }
    let w = 2 * dim;
    let points: Vec<f64> = training.iter().flat_map(flatten).collect();
    let n = training.len();
    let eps = cfg.epsilon;

    let mut codes = vec![0.0; w];
    for p in points.chunks_exact(w) {
        codes.iter_mut().zip(p).for_each(|(c, x)| *c += x);
    }
    codes.iter_mut().for_each(|c| *c /= n as f64);

    let mut assign = vec![0usize; n];
    let mut history = Vec::with_capacity(cfg.bits as usize);
    let mut out = Vec::with_capacity(cfg.bits as usize);

    for b in 1..=cfg.bits {
        codes = split(&codes, w, eps, &points, &assign);
        let size = 1usize << b;
        let mut trace = Vec::new();
        let mut previous: Option<Vec<f64>> = None;
        for _ in 0..cfg.max_iterations {
            let (new_assign, mqe) = voronoi(&codes, w, &points);
            if let Some(&last) = trace.last() {
                if mqe > last {
                    // The centroid step lowers squared error, not mean
                    // distance; keep the better codebook and stop.
                    codes = previous.take().expect("previous codebook saved");
                    break;
                }
            }
            let changed = new_assign != assign;
            assign = new_assign;
            let done = match trace.last() {
                Some(&last) => !changed || last <= 0.0 || (last - mqe) / last < cfg.threshold,
                None => mqe <= 0.0,
            };
            trace.push(mqe);
            if done {
                break;
            }
            previous = Some(codes.clone());
            codes = centroids(&points, w, &assign, size, eps, &codes);
        }
        // `assign` must describe the final codebook for the next split.
        assign = voronoi(&codes, w, &points).0;
        history.push(LbgPhase { size, mqe: trace });
        out.push(Codebook::build(
            dim,
            b,
            CodebookKind::Lbg { epsilon: eps },
            codes.clone(),
            history.clone(),
        )?);
    }
    Ok(out)
}

fn voronoi(codes: &[f64], w: usize, points: &[f64]) -> (Vec<usize>, f64) {
    let nearest: Vec<(usize, f64)> = points.par_chunks_exact(w).map(|p| nearest(codes, w, p)).collect();
    // Summed sequentially so the result does not depend on thread scheduling.
    let total: f64 = nearest.iter().map(|(_, d)| d.sqrt()).sum();
    let mean = total / nearest.len() as f64;
    (nearest.into_iter().map(|(i, _)| i).collect(), mean)
}

/// Doubles the codebook: code `n` becomes `(1+ε)c_n` at `2n` and `(1-ε)c_n`
/// at `2n+1`. A zero code vector cannot be split multiplicatively; it is
/// split additively along its farthest member instead.
fn split(codes: &[f64], w: usize, eps: f64, points: &[f64], assign: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(codes.len() * 2);
    for (n, c) in codes.chunks_exact(w).enumerate() {
        let norm2: f64 = c.iter().map(|x| x * x).sum();
        let mut far: Option<(&[f64], f64)> = None;
        if norm2 == 0.0 {
            for (p, _) in points.chunks_exact(w).zip(assign).filter(|(_, &a)| a == n) {
                let d = dist2(p, c);
                if far.is_none_or(|(_, best)| d > best) {
                    far = Some((p, d));
                }
            }
        }
        match far {
            Some((p, d)) if d > 0.0 => {
                out.extend(c.iter().zip(p).map(|(x, y)| x + eps * y));
                out.extend(c.iter().zip(p).map(|(x, y)| x - eps * y));
            }
            _ => {
                out.extend(c.iter().map(|x| (1.0 + eps) * x));
                out.extend(c.iter().map(|x| (1.0 - eps) * x));
            }
        }
    }
    out
}

/// Centroid update. An empty cell takes `(1+ε)` times the centroid of the
/// currently most populous cell, whose count is then shared between the two.
fn centroids(points: &[f64], w: usize, assign: &[usize], size: usize, eps: f64, old: &[f64]) -> Vec<f64> {
    let mut sums = vec![0.0; size * w];
    let mut counts = vec![0usize; size];
    for (p, &a) in points.chunks_exact(w).zip(assign) {
        counts[a] += 1;
        sums[a * w..(a + 1) * w].iter_mut().zip(p).for_each(|(s, x)| *s += x);
    }
    let mut codes = old.to_vec();
    for i in 0..size {
        if counts[i] > 0 {
            let inv = 1.0 / counts[i] as f64;
            for (c, s) in codes[i * w..(i + 1) * w].iter_mut().zip(&sums[i * w..(i + 1) * w]) {
                *c = s * inv;
            }
        }
    }
    let mut load = counts.clone();
    for i in 0..size {
        if counts[i] == 0 {
            let big = (0..size).fold(0, |best, j| if load[j] > load[best] { j } else { best });
            let donor: Vec<f64> = codes[big * w..(big + 1) * w].iter().map(|x| (1.0 + eps) * x).collect();
            codes[i * w..(i + 1) * w].copy_from_slice(&donor);
            load[i] = load[big] / 2;
            load[big] -= load[i];
        }
    }
    codes
}

/// Mean squared norm of a vector population, the RVQ calibration target.
pub fn mean_squared_norm(samples: &[CVector]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    Ok(samples.iter().map(crate::linalg::norm_sqr).sum::<f64>() / samples.len() as f64)
}

/// Random codebook of `2^bits` i.i.d. CN(0, σ²I) vectors with
/// `dim · σ² = target_second_moment`.
pub fn rvq_codebook(dim: usize, bits: u32, seed: u64, target_second_moment: f64) -> Result<Codebook> {
    if !(target_second_moment.is_finite() && target_second_moment > 0.0) {
        return Err(Error::invalid(format!(
            "RVQ second-moment target must be positive (got {target_second_moment})"
        )));
    }
    if dim == 0 || bits == 0 || bits > 24 {
        return Err(Error::invalid(format!("bad RVQ shape (dim {dim}, bits {bits})")));
    }
    let scale = (target_second_moment / dim as f64).sqrt();
    let mut rng = rng_from_seed(seed);
    let data = (0..(1usize << bits) * dim)
        .flat_map(|_| {
            let z = complex_gaussian(&mut rng) * scale;
            [z.re, z.im]
        })
        .collect();
    Codebook::build(dim, bits, CodebookKind::Rvq { seed, scale }, data, Vec::new())
}
