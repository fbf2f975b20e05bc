//! Eigendecomposition, edge/bulk labelling, free spectral ranges and
//! coupling-inductance sweeps.

use std::cmp::Ordering;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_float;
use crate::model::{build_tb_hamiltonian, map_circuit_to_tb, CircuitSpec};

const SYMMETRY_TOL: f64 = 1e-10;

/// Ascending eigenvalues with orthonormal eigenvectors (column k ↔ value k).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn mode(&self, k: usize) -> DVector<f64> {
        self.eigenvectors.column(k).into_owned()
    }

    /// max |VᵀV − I|
    pub fn orthonormality_error(&self) -> f64 {
        let n = self.len();
        let gram = self.eigenvectors.transpose() * &self.eigenvectors;
        (gram - DMatrix::identity(n, n)).amax()
    }

    /// max |H − VΛVᵀ|
    pub fn reconstruction_error(&self, h: &DMatrix<f64>) -> f64 {
        let lambda = DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigenvalues));
        let rebuilt = &self.eigenvectors * lambda * self.eigenvectors.transpose();
        (h - rebuilt).amax()
    }
}

fn check_symmetric(h: &DMatrix<f64>) -> Result<()> {
    let (r, c) = h.shape();
    if r != c || r == 0 {
        return Err(Error::validation(format!("expected a non-empty square matrix, got {r}x{c}")));
    }
    if h.iter().any(|x| !x.is_finite()) {
        return Err(Error::validation("matrix has non-finite entries"));
    }
    let asym = (h - h.transpose()).amax();
    if asym > SYMMETRY_TOL {
        return Err(Error::validation(format!("matrix not symmetric (max |H - Hᵀ| = {asym:e})")));
    }
    Ok(())
}

/// Dense symmetric eigendecomposition.
///
/// Eigenvalues are sorted ascending with ties broken by solver index, and
/// each eigenvector is signed so its largest-magnitude component is positive.
pub fn eigendecompose(h: &DMatrix<f64>) -> Result<Spectrum> {
    check_symmetric(h)?;
    let sym = (h + h.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));

    let mut vecs = DMatrix::zeros(n, n);
    for (k, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        let pivot = col.iter().copied().fold(0.0_f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            col.neg_mut();
        }
        vecs.set_column(k, &col);
    }
    Ok(Spectrum {
        eigenvalues: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        eigenvectors: vecs,
    })
}

/// Sorted eigenvalues only.
pub fn eigenvalues(h: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_symmetric(h)?;
    let mut e: Vec<f64> = h.clone().symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(f64::total_cmp);
    Ok(e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeLabel {
    BulkLower,
    Edge,
    BulkUpper,
}

impl ModeLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ModeLabel::BulkLower => "bulk-lower",
            ModeLabel::Edge => "edge",
            ModeLabel::BulkUpper => "bulk-upper",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseTag {
    Topological,
    Normal,
    Trivial,
}

impl PhaseTag {
    /// Edge-edge gap below 20% of the edge-bulk gap is topological, the
    /// mirror condition is trivial, anything in between is normal.
    pub fn from_fsr(edge_bulk: f64, edge_edge: f64) -> Self {
        const BAND: f64 = 0.2;
        if edge_edge < BAND * edge_bulk {
            PhaseTag::Topological
        } else if edge_bulk < BAND * edge_edge {
            PhaseTag::Trivial
        } else {
            PhaseTag::Normal
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PhaseTag::Topological => "topological",
            PhaseTag::Normal => "normal",
            PhaseTag::Trivial => "trivial",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeClassification {
    pub labels: Vec<ModeLabel>,
    /// Indices (into the sorted spectrum) of the two edge-labelled modes.
    pub edge_indices: [usize; 2],
    /// Larger of the two per-side edge-bulk gaps (GHz).
    pub fsr_edge_bulk: f64,
    /// Gap between the lower edge mode and the bulk below it, if any.
    pub fsr_edge_bulk_lower: Option<f64>,
    /// Gap between the upper edge mode and the bulk above it, if any.
    pub fsr_edge_bulk_upper: Option<f64>,
    pub fsr_edge_edge: f64,
    pub phase_tag: PhaseTag,
}

/// Label the two modes nearest `eps_ref` as edge modes and everything else
/// as lower/upper bulk, then compute the free spectral ranges.
pub fn classify_modes(spectrum: &Spectrum, eps_ref: f64) -> Result<ModeClassification> {
    classify_eigenvalues(&spectrum.eigenvalues, eps_ref)
}

/// Same as [`classify_modes`] on a bare ascending eigenvalue list.
pub fn classify_eigenvalues(eigenvalues: &[f64], eps_ref: f64) -> Result<ModeClassification> {
    let n = eigenvalues.len();
    if n < 4 {
        return Err(Error::ClassificationUnsupported(n));
    }
    let mut by_distance: Vec<usize> = (0..n).collect();
    by_distance.sort_by(|&a, &b| {
        let da = (eigenvalues[a] - eps_ref).abs();
        let db = (eigenvalues[b] - eps_ref).abs();
        da.partial_cmp(&db).unwrap_or(Ordering::Equal).then(a.cmp(&b))
    });
    // the two nearest points of a sorted list are adjacent
    let lo = by_distance[0].min(by_distance[1]);
    let hi = by_distance[0].max(by_distance[1]);

    let labels = (0..n)
        .map(|k| {
            if k == lo || k == hi {
                ModeLabel::Edge
            } else if k < lo {
                ModeLabel::BulkLower
            } else {
                ModeLabel::BulkUpper
            }
        })
        .collect();
    let lower = (lo > 0).then(|| eigenvalues[lo] - eigenvalues[lo - 1]);
    let upper = (hi + 1 < n).then(|| eigenvalues[hi + 1] - eigenvalues[hi]);
    let fsr_edge_bulk = lower.into_iter().chain(upper).fold(0.0_f64, f64::max);
    let fsr_edge_edge = eigenvalues[hi] - eigenvalues[lo];
    Ok(ModeClassification {
        labels,
        edge_indices: [lo, hi],
        fsr_edge_bulk,
        fsr_edge_bulk_lower: lower,
        fsr_edge_bulk_upper: upper,
        fsr_edge_edge,
        phase_tag: PhaseTag::from_fsr(fsr_edge_bulk, fsr_edge_edge),
    })
}

/// One grid point of a coupling-inductance sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub lv: f64,
    /// Site-mean ħω of the mapped chain, used as the classification reference.
    pub eps_ref: f64,
    pub spectrum: Spectrum,
    pub classification: ModeClassification,
}

/// Diagonalize the mapped chain for every `lv` on the grid.
///
/// `cells` restricts which junctions take the swept value; the others keep
/// their value from `circuit`. Points are computed in parallel and returned
/// in grid order.
pub fn sweep_coupling(
    circuit: &CircuitSpec,
    lv_grid: &[f64],
    cells: Option<&[usize]>,
) -> Result<Vec<SweepPoint>> {
    if lv_grid.is_empty() {
        return Err(Error::validation("empty L_v grid"));
    }
    if let Some(bad) = lv_grid.iter().find(|x| !(**x > 0.0)) {
        return Err(Error::validation(format!("L_v grid values must be > 0, got {bad}")));
    }
    lv_grid
        .par_iter()
        .map(|&lv| analyze(&circuit.with_lv(lv, cells)?, lv))
        .collect()
}

/// Like [`sweep_coupling`] with a full per-cell `lv` list at every point.
///
/// `SweepPoint::lv` holds the first cell's value.
pub fn sweep_coupling_list(circuit: &CircuitSpec, lv_lists: &[Vec<f64>]) -> Result<Vec<SweepPoint>> {
    lv_lists
        .par_iter()
        .map(|lv| {
            let spec = circuit.with_lv_list(lv.clone())?;
            analyze(&spec, lv[0])
        })
        .collect()
}

fn analyze(spec: &CircuitSpec, lv: f64) -> Result<SweepPoint> {
    let chain = map_circuit_to_tb(spec)?;
    let eps_ref = chain.mean_eps();
    let spectrum = eigendecompose(&build_tb_hamiltonian(&chain))?;
    let classification = classify_modes(&spectrum, eps_ref)?;
    Ok(SweepPoint { lv, eps_ref, spectrum, classification })
}

/// Sweep output with every eigenvalue divided by its point's site-mean ħω.
pub fn normalized_spectrum(points: &[SweepPoint]) -> Vec<SweepPoint> {
    points
        .iter()
        .map(|p| {
            let eigenvalues: Vec<f64> = p.spectrum.eigenvalues.iter().map(|e| e / p.eps_ref).collect();
            let classification = classify_eigenvalues(&eigenvalues, 1.0)
                .expect("normalization keeps the mode count");
            SweepPoint {
                lv: p.lv,
                eps_ref: 1.0,
                spectrum: Spectrum { eigenvalues, eigenvectors: p.spectrum.eigenvectors.clone() },
                classification,
            }
        })
        .collect()
}

/// Largest violation of λ_k − c = −(λ_{n−1−k} − c) over a sorted list.
pub fn mirror_asymmetry(sorted: &[f64], center: f64) -> f64 {
    let n = sorted.len();
    (0..n)
        .map(|k| ((sorted[k] - center) + (sorted[n - 1 - k] - center)).abs())
        .fold(0.0, f64::max)
}

/// Grid positions where fsr_edge_bulk − fsr_edge_edge changes sign,
/// linearly interpolated between neighbouring points.
pub fn fsr_crossings(points: &[SweepPoint]) -> Vec<f64> {
    let diff = |p: &SweepPoint| p.classification.fsr_edge_bulk - p.classification.fsr_edge_edge;
    points
        .windows(2)
        .filter_map(|pair| {
            let (a, b) = (&pair[0], &pair[1]);
            let (da, db) = (diff(a), diff(b));
            if da == 0.0 {
                Some(a.lv)
            } else if da.signum() != db.signum() && db != 0.0 && a.lv.is_finite() && b.lv.is_finite() {
                Some(a.lv + (b.lv - a.lv) * da / (da - db))
            } else {
                None
            }
        })
        .collect()
}

/// Per-mode CSV: `lv_nH,mode_index,freq_GHz,label`.
pub fn write_modes_csv<W: Write>(mut out: W, points: &[SweepPoint]) -> std::io::Result<()> {
    writeln!(out, "lv_nH,mode_index,freq_GHz,label")?;
    for p in points {
        for (k, (e, label)) in p.spectrum.eigenvalues.iter().zip(&p.classification.labels).enumerate() {
            writeln!(out, "{},{},{},{}", fmt_float(p.lv), k, fmt_float(*e), label.as_str())?;
        }
    }
    Ok(())
}

/// Summary CSV: `lv_nH,fsr_edge_bulk_GHz,fsr_edge_edge_GHz,phase_tag` plus per-side gaps.
pub fn write_summary_csv<W: Write>(mut out: W, points: &[SweepPoint]) -> std::io::Result<()> {
    writeln!(
        out,
        "lv_nH,fsr_edge_bulk_GHz,fsr_edge_edge_GHz,phase_tag,fsr_edge_bulk_lower_GHz,fsr_edge_bulk_upper_GHz"
    )?;
    let side = |x: Option<f64>| x.map(fmt_float).unwrap_or_default();
    for p in points {
        let c = &p.classification;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_float(p.lv),
            fmt_float(c.fsr_edge_bulk),
            fmt_float(c.fsr_edge_edge),
            c.phase_tag.as_str(),
            side(c.fsr_edge_bulk_lower),
            side(c.fsr_edge_bulk_upper)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ChainSpec;

    fn chain_spectrum(eps: f64, v: f64, w: f64, n: usize) -> Spectrum {
        eigendecompose(&build_tb_hamiltonian(&ChainSpec::uniform(n, eps, v, w).unwrap())).unwrap()
    }

    #[test]
    fn two_by_two() {
        let h = DMatrix::from_row_slice(2, 2, &[6.5, 0.5, 0.5, 6.5]);
        let s = eigendecompose(&h).unwrap();
        assert!((s.eigenvalues[0] - 6.0).abs() < 1e-12);
        assert!((s.eigenvalues[1] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_gives_permuted_identity() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let s = eigendecompose(&h).unwrap();
        assert_eq!(s.eigenvalues, vec![1.0, 2.0, 3.0]);
        let expect = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!((s.eigenvectors - expect).amax() < 1e-14);
    }

    #[test]
    fn rejects_asymmetric() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(eigendecompose(&h), Err(Error::Validation(_))));
    }

    #[test]
    fn sign_convention_and_invariants() {
        let s = chain_spectrum(6.5, 0.25, 0.5, 5);
        let h = build_tb_hamiltonian(&ChainSpec::uniform(5, 6.5, 0.25, 0.5).unwrap());
        assert!(s.orthonormality_error() < 1e-9);
        assert!(s.reconstruction_error(&h) < 1e-8);
        for k in 0..s.len() {
            let col = s.mode(k);
            let pivot = col.iter().copied().fold(0.0_f64, |a, x| if x.abs() > a.abs() { x } else { a });
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn dimer_limit_classification() {
        let s = chain_spectrum(6.5, 0.0, 0.5, 5);
        let c = classify_modes(&s, 6.5).unwrap();
        assert!(c.fsr_edge_edge.abs() < 1e-12);
        assert!((c.fsr_edge_bulk - 0.5).abs() < 1e-12);
        assert_eq!(c.phase_tag, PhaseTag::Topological);
        assert_eq!(c.labels.iter().filter(|l| **l == ModeLabel::Edge).count(), 2);
        assert_eq!(c.labels.iter().filter(|l| **l == ModeLabel::BulkLower).count(), 4);
    }

    #[test]
    fn uniform_chain_is_normal() {
        let c = classify_modes(&chain_spectrum(6.5, 0.5, 0.5, 5), 6.5).unwrap();
        let ratio = c.fsr_edge_edge / c.fsr_edge_bulk;
        assert!((0.5..=2.0).contains(&ratio));
        assert_eq!(c.phase_tag, PhaseTag::Normal);
    }

    #[test]
    fn strong_intracell_is_trivial() {
        let c = classify_modes(&chain_spectrum(6.5, 1.0, 0.5, 5), 6.5).unwrap();
        assert!(c.fsr_edge_edge > 2.0 * c.fsr_edge_bulk);
        assert_eq!(c.phase_tag, PhaseTag::Trivial);
    }

    #[test]
    fn too_small_to_classify() {
        let s = chain_spectrum(6.5, 0.5, 0.5, 1);
        assert_eq!(classify_modes(&s, 6.5), Err(Error::ClassificationUnsupported(2)));
    }

    #[test]
    fn sweep_errors_and_order() {
        let dev = CircuitSpec::reference_device();
        assert!(sweep_coupling(&dev, &[], None).is_err());
        assert!(sweep_coupling(&dev, &[10.0, -1.0], None).is_err());
        let pts = sweep_coupling(&dev, &[40.0, 10.0, f64::INFINITY], None).unwrap();
        assert_eq!(pts.iter().map(|p| p.lv).collect::<Vec<_>>(), vec![40.0, 10.0, f64::INFINITY]);
        let inf = &pts[2];
        assert_eq!(inf.classification.phase_tag, PhaseTag::Topological);
        assert!(inf.classification.fsr_edge_edge < 1e-12);
    }

    #[test]
    fn crossing_interpolation() {
        let dev = CircuitSpec::reference_device();
        let grid: Vec<f64> = (0..=40).map(|k| 12.0 + 0.5 * k as f64).collect();
        let pts = sweep_coupling(&dev, &grid, None).unwrap();
        let x = fsr_crossings(&pts);
        assert_eq!(x.len(), 1, "{x:?}");
        assert!((x[0] - 22.0).abs() < 0.5, "{x:?}");
    }

    #[test]
    fn csv_layout() {
        let pts = sweep_coupling(&CircuitSpec::reference_device(), &[20.0], None).unwrap();
        let mut modes = Vec::new();
        write_modes_csv(&mut modes, &pts).unwrap();
        let text = String::from_utf8(modes).unwrap();
        assert_eq!(text.lines().count(), 11);
        assert!(text.starts_with("lv_nH,mode_index,freq_GHz,label\n20,0,"));
        let mut summary = Vec::new();
        write_summary_csv(&mut summary, &pts).unwrap();
        assert_eq!(String::from_utf8(summary).unwrap().lines().count(), 2);
    }
}
