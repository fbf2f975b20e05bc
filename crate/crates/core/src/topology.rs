//! Winding numbers, participation ratios, localization lengths and seeded
//! disorder ensembles.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_float;
use crate::model::{build_tb_hamiltonian, ChainSpec, ChiralOperator};
use crate::spectral::eigendecompose;

/// Shifted eigenvalues below this magnitude (GHz) are treated as exact zeros.
pub const ZERO_MODE_TOL: f64 = 1e-12;

/// Amplitudes below this are dropped from localization fits.
pub const AMPLITUDE_FLOOR: f64 = 1e-12;

pub const MIN_K_POINTS: usize = 1024;

const MAX_K_POINTS: usize = 1 << 24;

/// Name of the generator behind [`disorder_ensemble`], recorded in outputs.
pub const GENERATOR: &str = "ChaCha8Rng(seed, stream = sample index)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindingMethod {
    RealSpace,
    KSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindingResult {
    pub nu: f64,
    /// Unrounded value; equals `nu` for the real-space marker.
    pub raw: f64,
    pub chain_length: usize,
    pub method: WindingMethod,
}

/// Flat-band operator Q = P₊ − P₋ of H − ε_ref·I.
///
/// Exact zero modes (|λ| < [`ZERO_MODE_TOL`]) are split by chirality: the
/// zero-mode subspace is diagonalized under Γ and the +1 states go to P₊,
/// the −1 states to P₋. This keeps Q² = I when the protected pair is
/// numerically degenerate. If the subspace is not chirally polarized the
/// sign is ambiguous and [`Error::DegenerateMidgap`] is returned.
pub fn flatband(h: &DMatrix<f64>, eps_ref: f64) -> Result<DMatrix<f64>> {
    let n = h.nrows();
    let shifted = h - DMatrix::identity(n, n) * eps_ref;
    let spec = eigendecompose(&shifted)?;

    let mut q = DMatrix::zeros(n, n);
    let mut zero_idx = Vec::new();
    for (k, &e) in spec.eigenvalues.iter().enumerate() {
        if e.abs() < ZERO_MODE_TOL {
            zero_idx.push(k);
            continue;
        }
        let v = spec.eigenvectors.column(k);
        q += v * v.transpose() * e.signum();
    }
    if zero_idx.is_empty() {
        return Ok(q);
    }
    if !n.is_multiple_of(2) {
        return Err(Error::DegenerateMidgap { indices: zero_idx });
    }

    let z = spec.eigenvectors.select_columns(&zero_idx);
    let gamma = DVector::from_fn(n, |i, _| ChiralOperator::sign(i));
    let gz = DMatrix::from_fn(n, zero_idx.len(), |i, j| gamma[i] * z[(i, j)]);
    let reduced = z.transpose() * gz;
    let eig = ((&reduced + reduced.transpose()) * 0.5).symmetric_eigen();
    let plus = eig.eigenvalues.iter().filter(|g| **g > 0.5).count();
    let minus = eig.eigenvalues.iter().filter(|g| **g < -0.5).count();
    if plus != minus || plus + minus != zero_idx.len() {
        return Err(Error::DegenerateMidgap { indices: zero_idx });
    }
    for (j, g) in eig.eigenvalues.iter().enumerate() {
        let v = &z * eig.eigenvectors.column(j);
        q += &v * v.transpose() * g.signum();
    }
    Ok(q)
}

/// Local winding marker per unit cell.
///
/// With A the first site of a cell, the cell-c entry is the diagonal of
/// Q_BA [X, Q_AB] at the B site, Σ_a Q_ba² (x_a − x_b); X counts unit cells
/// from 1. Summed over an open chain the markers cancel exactly.
pub fn local_winding_marker(h: &DMatrix<f64>, eps_ref: f64) -> Result<Vec<f64>> {
    let n = h.nrows();
    if !n.is_multiple_of(2) || n == 0 {
        return Err(Error::validation(format!("winding needs an even site count, got {n}")));
    }
    let q = flatband(h, eps_ref)?;
    let cell = |site: usize| (site / 2 + 1) as f64;
    Ok((0..n / 2)
        .map(|c| {
            let b = 2 * c + 1;
            (0..n)
                .step_by(2)
                .map(|a| q[(b, a)] * q[(b, a)] * (cell(a) - cell(b)))
                .sum()
        })
        .collect())
}

/// Cells [⌊N/4⌋, N − ⌊N/4⌋) over which the trace per volume is taken.
pub fn bulk_window(n_cells: usize) -> std::ops::Range<usize> {
    let skip = n_cells / 4;
    skip..n_cells - skip
}

/// Real-space winding number: trace per volume of the local marker over the
/// central half of the chain.
pub fn winding_number_real_space(h: &DMatrix<f64>, eps_ref: f64) -> Result<WindingResult> {
    let marker = local_winding_marker(h, eps_ref)?;
    let window = bulk_window(marker.len());
    let count = window.len() as f64;
    let nu = marker[window].iter().sum::<f64>() / count;
    Ok(WindingResult { nu, raw: nu, chain_length: marker.len(), method: WindingMethod::RealSpace })
}

/// Winding of h(k) = v + w·e^{ik} around the origin, by periodic quadrature.
pub fn winding_number_k_space(v: f64, w: f64) -> Result<WindingResult> {
    if !(v >= 0.0 && w >= 0.0 && v.is_finite() && w.is_finite()) {
        return Err(Error::validation(format!("hops must be finite and non-negative, got v={v}, w={w}")));
    }
    if v == 0.0 && w == 0.0 {
        return Err(Error::validation("v and w are both zero"));
    }
    if v == w {
        return Err(Error::GapClosing(v));
    }
    // periodic trapezoid error decays like r^M with r = min/max
    let r = v.min(w) / v.max(w);
    let needed = if r == 0.0 { 0.0 } else { (1e-13_f64).ln() / r.ln() };
    let points = (needed.ceil() as usize).clamp(MIN_K_POINTS, MAX_K_POINTS);
    let dk = 2.0 * PI / points as f64;
    let raw = (0..points)
        .map(|j| {
            let k = j as f64 * dk;
            let (s, c) = k.sin_cos();
            // Re[w e^{ik} / (v + w e^{ik})]
            let (re_n, im_n) = (w * c, w * s);
            let (re_d, im_d) = (v + w * c, w * s);
            (re_n * re_d + im_n * im_d) / (re_d * re_d + im_d * im_d)
        })
        .sum::<f64>()
        / points as f64;
    Ok(WindingResult { nu: raw.round(), raw, chain_length: 0, method: WindingMethod::KSpace })
}

/// Inverse participation ratio Σ|ψ|⁴ / (Σ|ψ|²)².
pub fn ipr(state: &[f64]) -> Result<f64> {
    let norm2: f64 = state.iter().map(|x| x * x).sum();
    if !(norm2 > 0.0) || !norm2.is_finite() {
        return Err(Error::validation("IPR of a zero or non-finite vector"));
    }
    Ok(state.iter().map(|x| x.powi(4)).sum::<f64>() / (norm2 * norm2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sublattice {
    A,
    B,
}

/// Decay length ξ (unit cells) of a state on one sublattice.
///
/// Fits log|ψ| against cell distance from the edge the sublattice's zero
/// mode lives on: from the left end for A, from the right end for B.
pub fn localization_length_fit(state: &[f64], sublattice: Sublattice) -> Result<f64> {
    let n = state.len();
    if !n.is_multiple_of(2) || n == 0 {
        return Err(Error::validation(format!("state length {n} is not a 2N-site chain")));
    }
    let norm = state.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::validation("zero state"));
    }
    let cells = n / 2;
    let points: Vec<(f64, f64)> = (0..cells)
        .filter_map(|c| {
            let (site, x) = match sublattice {
                Sublattice::A => (2 * c, (c + 1) as f64),
                Sublattice::B => (2 * c + 1, (cells - c) as f64),
            };
            let amp = state[site].abs() / norm;
            (amp > AMPLITUDE_FLOOR).then(|| (x, amp.ln()))
        })
        .collect();
    if points.len() < 3 {
        return Err(Error::FitUnsupported(format!(
            "{} usable amplitudes on sublattice {sublattice:?}, need 3",
            points.len()
        )));
    }
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(Error::FitUnsupported(format!("profile does not decay (slope {slope:e})")));
    }
    Ok(-1.0 / slope)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisorderTarget {
    Eps,
    V,
    W,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisorderConfig {
    pub strength: f64,
    pub targets: Vec<DisorderTarget>,
    pub samples: usize,
    pub seed: u64,
}

impl DisorderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.strength) {
            return Err(Error::validation(format!("disorder strength must be in [0, 1), got {}", self.strength)));
        }
        if self.samples == 0 {
            return Err(Error::validation("ensemble needs at least one sample"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSample {
    pub index: usize,
    pub nu: f64,
    /// Distance of the mode nearest the mean on-site energy (GHz).
    pub min_gap: f64,
    pub rejections: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleResult {
    pub samples: Vec<EnsembleSample>,
    pub mean_nu: f64,
    pub std_nu: f64,
    pub rejections: usize,
    pub seed: u64,
    pub generator: &'static str,
}

/// Draw the k-th disordered chain of an ensemble. Returns the chain and the
/// number of rejected draws.
pub fn disorder_sample(base: &ChainSpec, config: &DisorderConfig, k: usize) -> Result<(ChainSpec, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(k as u64);
    let mut targets = config.targets.clone();
    targets.sort();
    targets.dedup();
    let delta = config.strength;
    let mut rejections = 0;
    const MAX_REDRAWS: usize = 10_000;
    loop {
        let mut eps = base.eps().to_vec();
        let mut v = base.v().to_vec();
        let mut w = base.w().to_vec();
        for t in &targets {
            let slot = match t {
                DisorderTarget::Eps => &mut eps,
                DisorderTarget::V => &mut v,
                DisorderTarget::W => &mut w,
            };
            for x in slot.iter_mut() {
                let u: f64 = rng.random_range(-1.0..=1.0);
                *x *= 1.0 + delta * u;
            }
        }
        if v.iter().chain(&w).all(|h| *h >= 0.0) {
            return Ok((ChainSpec::new(base.n_cells(), eps, v, w)?, rejections));
        }
        rejections += 1;
        if rejections > MAX_REDRAWS {
            return Err(Error::Numerical("disorder draw keeps producing negative hops".into()));
        }
    }
}

/// Seeded ensemble of real-space winding numbers.
///
/// Sample k perturbs every targeted entry as x → x·(1 + δu), u ~ U[−1, 1],
/// from a stream derived from (seed, k). Samples run in parallel; output
/// is identical for any thread count.
pub fn disorder_ensemble(base: &ChainSpec, config: &DisorderConfig) -> Result<EnsembleResult> {
    config.validate()?;
    let samples: Vec<EnsembleSample> = (0..config.samples)
        .into_par_iter()
        .map(|k| {
            let (chain, rejections) = disorder_sample(base, config, k)?;
            let eps_ref = chain.mean_eps();
            let h = build_tb_hamiltonian(&chain);
            let nu = winding_number_real_space(&h, eps_ref)?.nu;
            let min_gap = crate::spectral::eigenvalues(&h)?
                .iter()
                .map(|e| (e - eps_ref).abs())
                .fold(f64::INFINITY, f64::min);
            Ok(EnsembleSample { index: k, nu, min_gap, rejections })
        })
        .collect::<Result<_>>()?;
    let m = samples.len() as f64;
    let mean_nu = samples.iter().map(|s| s.nu).sum::<f64>() / m;
    let std_nu = if samples.len() > 1 {
        (samples.iter().map(|s| (s.nu - mean_nu).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    let rejections = samples.iter().map(|s| s.rejections).sum();
    Ok(EnsembleResult { samples, mean_nu, std_nu, rejections, seed: config.seed, generator: GENERATOR })
}

/// `sample_index,nu,min_gap_GHz`
pub fn write_ensemble_csv<W: Write>(mut out: W, result: &EnsembleResult) -> std::io::Result<()> {
    writeln!(out, "sample_index,nu,min_gap_GHz")?;
    for s in &result.samples {
        writeln!(out, "{},{},{}", s.index, fmt_float(s.nu), fmt_float(s.min_gap))?;
    }
    Ok(())
}

pub fn ensemble_summary_json(result: &EnsembleResult) -> serde_json::Value {
    serde_json::json!({
        "mean_nu": result.mean_nu,
        "std_nu": result.std_nu,
        "rejections": result.rejections,
        "seed": result.seed,
        "generator": result.generator,
        "samples": result.samples.len(),
    })
}
