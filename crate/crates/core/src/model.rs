//! Chain data model: tight-binding and lumped-element descriptions, the
//! circuit-to-hopping mapping and the sublattice (chiral) operator.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `1 / (2π sqrt(L C))` with L in nH and C in fF gives GHz after this factor.
const GHZ_PER_INV_SQRT_NH_FF: f64 = 1.0e3;

fn resonance_ghz(l_nh: f64, c_ff: f64) -> f64 {
    GHZ_PER_INV_SQRT_NH_FF / (2.0 * PI * (l_nh * c_ff).sqrt())
}

/// Tight-binding chain: per-site on-site energies and alternating hops.
///
/// `eps` has 2N entries, `v` (intra-cell) N entries and `w` (inter-cell)
/// N-1 entries. Energies are in GHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChainSpecRepr", into = "ChainSpecRepr")]
pub struct ChainSpec {
    n_cells: usize,
    eps: Vec<f64>,
    v: Vec<f64>,
    w: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainSpecRepr {
    n_cells: usize,
    #[serde(rename = "eps_GHz")]
    eps: Vec<f64>,
    #[serde(rename = "v_GHz")]
    v: Vec<f64>,
    #[serde(rename = "w_GHz")]
    w: Vec<f64>,
}

impl TryFrom<ChainSpecRepr> for ChainSpec {
    type Error = Error;
    fn try_from(r: ChainSpecRepr) -> Result<Self> {
        ChainSpec::new(r.n_cells, r.eps, r.v, r.w)
    }
}

impl From<ChainSpec> for ChainSpecRepr {
    fn from(s: ChainSpec) -> Self {
        ChainSpecRepr { n_cells: s.n_cells, eps: s.eps, v: s.v, w: s.w }
    }
}

impl ChainSpec {
    pub fn new(n_cells: usize, eps: Vec<f64>, v: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        if n_cells == 0 {
            return Err(Error::validation("chain needs at least one unit cell"));
        }
        if eps.len() != 2 * n_cells || v.len() != n_cells || w.len() != n_cells - 1 {
            return Err(Error::validation(format!(
                "expected {} on-site energies, {} intra-cell and {} inter-cell hops, got {}, {}, {}",
                2 * n_cells,
                n_cells,
                n_cells - 1,
                eps.len(),
                v.len(),
                w.len()
            )));
        }
        if let Some(e) = eps.iter().find(|e| !e.is_finite()) {
            return Err(Error::validation(format!("non-finite on-site energy {e}")));
        }
        if let Some(h) = v.iter().chain(&w).find(|h| !h.is_finite() || **h < 0.0) {
            return Err(Error::validation(format!("hops must be finite and non-negative, got {h}")));
        }
        Ok(Self { n_cells, eps, v, w })
    }

    /// Chain with identical on-site energies and hops.
    pub fn uniform(n_cells: usize, eps: f64, v: f64, w: f64) -> Result<Self> {
        Self::new(
            n_cells,
            vec![eps; 2 * n_cells],
            vec![v; n_cells],
            vec![w; n_cells.saturating_sub(1)],
        )
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_sites(&self) -> usize {
        2 * self.n_cells
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn mean_eps(&self) -> f64 {
        self.eps.iter().sum::<f64>() / self.eps.len() as f64
    }

    /// Hop between site `i` and `i + 1`: v on even bonds, w on odd bonds.
    pub fn bond(&self, i: usize) -> f64 {
        if i.is_multiple_of(2) {
            self.v[i / 2]
        } else {
            self.w[i / 2]
        }
    }
}

/// Per-cell coupling inductance. `f64::INFINITY` marks a pinched-off junction.
pub type Inductance = f64;

/// Lumped-element description of the chain (fF, nH).
///
/// Site `2c` (sublattice A) touches coupling capacitor `cw[c]`, site
/// `2c + 1` (sublattice B) touches `cw[c + 1]`. The outer entries `cw[0]`
/// and `cw[N]` are the capacitors to the terminating coupling sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CircuitSpecRepr", into = "CircuitSpecRepr")]
pub struct CircuitSpec {
    n_cells: usize,
    c0: Vec<f64>,
    l0: Vec<f64>,
    lv: Vec<Inductance>,
    cw: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CircuitSpecRepr {
    n_cells: usize,
    #[serde(rename = "c0_fF")]
    c0: Vec<f64>,
    #[serde(rename = "l0_nH")]
    l0: Vec<f64>,
    #[serde(rename = "lv_nH", with = "crate::io::inf_list")]
    lv: Vec<f64>,
    #[serde(rename = "cw_fF")]
    cw: Vec<f64>,
}

impl TryFrom<CircuitSpecRepr> for CircuitSpec {
    type Error = Error;
    fn try_from(r: CircuitSpecRepr) -> Result<Self> {
        CircuitSpec::new(r.n_cells, r.c0, r.l0, r.lv, r.cw)
    }
}

impl From<CircuitSpec> for CircuitSpecRepr {
    fn from(s: CircuitSpec) -> Self {
        CircuitSpecRepr { n_cells: s.n_cells, c0: s.c0, l0: s.l0, lv: s.lv, cw: s.cw }
    }
}

impl CircuitSpec {
    pub fn new(
        n_cells: usize,
        c0: Vec<f64>,
        l0: Vec<f64>,
        lv: Vec<Inductance>,
        cw: Vec<f64>,
    ) -> Result<Self> {
        if n_cells == 0 {
            return Err(Error::validation("circuit needs at least one unit cell"));
        }
        let n = 2 * n_cells;
        if c0.len() != n || l0.len() != n || lv.len() != n_cells || cw.len() != n_cells + 1 {
            return Err(Error::validation(format!(
                "expected c0/l0 of length {n}, lv of length {n_cells}, cw of length {}; got {}, {}, {}, {}",
                n_cells + 1,
                c0.len(),
                l0.len(),
                lv.len(),
                cw.len()
            )));
        }
        let finite_pos = |x: &f64| x.is_finite() && *x > 0.0;
        if !c0.iter().chain(&l0).chain(&cw).all(finite_pos) {
            return Err(Error::validation("capacitances and site inductances must be finite and > 0"));
        }
        if !lv.iter().all(|x| *x > 0.0 && !x.is_nan()) {
            return Err(Error::validation("coupling inductances must be > 0 (infinity allowed)"));
        }
        Ok(Self { n_cells, c0, l0, lv, cw })
    }

    pub fn uniform(n_cells: usize, c0: f64, l0: f64, lv: Inductance, cw: f64) -> Result<Self> {
        Self::new(
            n_cells,
            vec![c0; 2 * n_cells],
            vec![l0; 2 * n_cells],
            vec![lv; n_cells],
            vec![cw; n_cells + 1],
        )
    }

    /// Five-cell device with pinched-off junctions.
    ///
    /// Chosen so the mapped chain sits at ε ≈ 6.04 GHz, w ≈ 0.35 GHz and
    /// reaches v = w at L_v = 22 nH.
    pub fn reference_device() -> Self {
        Self::uniform(5, 212.8, 2.884, f64::INFINITY, 27.9).expect("reference values are valid")
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_sites(&self) -> usize {
        2 * self.n_cells
    }

    pub fn c0(&self) -> &[f64] {
        &self.c0
    }

    pub fn l0(&self) -> &[f64] {
        &self.l0
    }

    pub fn lv(&self) -> &[f64] {
        &self.lv
    }

    pub fn cw(&self) -> &[f64] {
        &self.cw
    }

    /// Copy with `lv` replaced on the given cells (all cells when `cells` is `None`).
    pub fn with_lv(&self, lv: Inductance, cells: Option<&[usize]>) -> Result<Self> {
        let mut out = self.clone();
        match cells {
            None => out.lv.iter_mut().for_each(|x| *x = lv),
            Some(cells) => {
                for &c in cells {
                    let slot = out
                        .lv
                        .get_mut(c)
                        .ok_or_else(|| Error::validation(format!("cell {c} out of range")))?;
                    *slot = lv;
                }
            }
        }
        Self::new(out.n_cells, out.c0, out.l0, out.lv, out.cw)
    }

    /// Copy with every coupling inductance replaced.
    pub fn with_lv_list(&self, lv: Vec<Inductance>) -> Result<Self> {
        Self::new(self.n_cells, self.c0.clone(), self.l0.clone(), lv, self.cw.clone())
    }

    /// Coupling capacitor index touched by site `i`.
    pub fn site_cw_index(i: usize) -> usize {
        if i.is_multiple_of(2) {
            i / 2
        } else {
            i / 2 + 1
        }
    }

    /// Parallel node inductance L₀ ∥ L_v of site `i`.
    pub fn site_l_total(&self, i: usize) -> f64 {
        let lv = self.lv[i / 2];
        if lv.is_infinite() {
            self.l0[i]
        } else {
            1.0 / (1.0 / self.l0[i] + 1.0 / lv)
        }
    }

    /// Node capacitance C₀ + C_w of site `i`.
    pub fn site_c_total(&self, i: usize) -> f64 {
        self.c0[i] + self.cw[Self::site_cw_index(i)]
    }

    /// Bare resonance frequency of site `i` in GHz.
    pub fn site_frequency(&self, i: usize) -> f64 {
        resonance_ghz(self.site_l_total(i), self.site_c_total(i))
    }
}

/// Map circuit parameters onto on-site energies and hops.
///
/// ε = ħω with ω from the parallel node inductance and total node
/// capacitance. The hops use the site-local frequencies of both ends:
/// v = √(ω_a ω_b) √(L_Ta L_Tb) / (2 L_v) and w = √(ω_a ω_b) C_w / (2 √(C_Ta C_Tb)),
/// which reduce to (ħω/2)(L_T/L_v) and (ħω/2)(C_w/C_T) for identical sites.
pub fn map_circuit_to_tb(spec: &CircuitSpec) -> Result<ChainSpec> {
    let n = spec.n_sites();
    let mut eps = Vec::with_capacity(n);
    let mut lt = Vec::with_capacity(n);
    let mut ct = Vec::with_capacity(n);
    for i in 0..n {
        let l = spec.site_l_total(i);
        let c = spec.site_c_total(i);
        if !(l > 0.0 && l.is_finite() && c > 0.0 && c.is_finite()) {
            return Err(Error::validation(format!("site {i}: non-positive effective L_T or C_T")));
        }
        lt.push(l);
        ct.push(c);
        eps.push(resonance_ghz(l, c));
    }
    let v = (0..spec.n_cells)
        .map(|c| {
            let lv = spec.lv[c];
            if lv.is_infinite() {
                return 0.0;
            }
            let (a, b) = (2 * c, 2 * c + 1);
            (eps[a] * eps[b]).sqrt() * (lt[a] * lt[b]).sqrt() / (2.0 * lv)
        })
        .collect();
    let w = (0..spec.n_cells - 1)
        .map(|c| {
            let (b, a) = (2 * c + 1, 2 * c + 2);
            (eps[a] * eps[b]).sqrt() * spec.cw[c + 1] / (2.0 * (ct[a] * ct[b]).sqrt())
        })
        .collect();
    ChainSpec::new(spec.n_cells, eps, v, w)
}

/// Tri-diagonal real-space Hamiltonian (GHz).
pub fn build_tb_hamiltonian(spec: &ChainSpec) -> DMatrix<f64> {
    let n = spec.n_sites();
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = spec.eps[i];
    }
    for i in 0..n - 1 {
        let t = spec.bond(i);
        h[(i, i + 1)] = t;
        h[(i + 1, i)] = t;
    }
    h
}

/// Sublattice operator Γ = I_N ⊗ σ_z.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiralOperator {
    pub n_cells: usize,
    pub matrix: DMatrix<f64>,
}

impl ChiralOperator {
    /// +1 on sublattice A (even sites), -1 on B.
    pub fn sign(site: usize) -> f64 {
        if site.is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }
}

pub fn chiral_operator(n_cells: usize) -> ChiralOperator {
    let n = 2 * n_cells;
    let matrix = DMatrix::from_fn(n, n, |i, j| if i == j { ChiralOperator::sign(i) } else { 0.0 });
    ChiralOperator { n_cells, matrix }
}

/// Largest entry of {Γ, H − ε_ref·I}; zero iff the shifted Hamiltonian is chiral.
pub fn chiral_defect(h: &DMatrix<f64>, eps_ref: f64) -> Result<f64> {
    let (r, c) = h.shape();
    if r != c {
        return Err(Error::validation(format!("Hamiltonian must be square, got {r}x{c}")));
    }
    if r % 2 != 0 {
        return Err(Error::validation(format!("Hamiltonian dimension {r} is odd")));
    }
    let mut worst = 0.0_f64;
    for i in 0..r {
        for j in 0..r {
            let shifted = if i == j { h[(i, j)] - eps_ref } else { h[(i, j)] };
            let anti = (ChiralOperator::sign(i) + ChiralOperator::sign(j)) * shifted;
            worst = worst.max(anti.abs());
        }
    }
    Ok(worst)
}

/// Normal-mode frequencies (GHz) of the closed lumped-element ladder.
///
/// Solves K x = ω² C x with the full node capacitance and inverse-inductance
/// matrices rather than the first-order hopping picture. The outer coupling
/// capacitors go to ground through `termination_ff` (the coupling-site
/// capacitance); `None` grounds them directly.
pub fn circuit_normal_modes(spec: &CircuitSpec, termination_ff: Option<f64>) -> Result<Vec<f64>> {
    let n = spec.n_sites();
    let mut cap = DMatrix::<f64>::zeros(n, n);
    let mut kin = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        cap[(i, i)] += spec.c0[i];
        kin[(i, i)] += 1.0 / spec.l0[i];
    }
    for c in 0..spec.n_cells {
        let lv = spec.lv[c];
        if lv.is_finite() {
            let (a, b) = (2 * c, 2 * c + 1);
            kin[(a, a)] += 1.0 / lv;
            kin[(b, b)] += 1.0 / lv;
            kin[(a, b)] -= 1.0 / lv;
            kin[(b, a)] -= 1.0 / lv;
        }
    }
    let end_cap = |cw: f64| match termination_ff {
        Some(ct) => cw * ct / (cw + ct),
        None => cw,
    };
    cap[(0, 0)] += end_cap(spec.cw[0]);
    cap[(n - 1, n - 1)] += end_cap(spec.cw[spec.n_cells]);
    for c in 0..spec.n_cells - 1 {
        let (b, a) = (2 * c + 1, 2 * c + 2);
        let cw = spec.cw[c + 1];
        cap[(a, a)] += cw;
        cap[(b, b)] += cw;
        cap[(a, b)] -= cw;
        cap[(b, a)] -= cw;
    }
    let chol = Cholesky::new(cap)
        .ok_or_else(|| Error::Numerical("capacitance matrix is not positive definite".into()))?;
    let l_inv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular capacitance factor".into()))?;
    let m = &l_inv * kin * l_inv.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let mut omega_sq: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    omega_sq.sort_by(f64::total_cmp);
    Ok(omega_sq
        .into_iter()
        .map(|w2| GHZ_PER_INV_SQRT_NH_FF * w2.max(0.0).sqrt() / (2.0 * PI))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted_eigs(h: &DMatrix<f64>) -> Vec<f64> {
        let mut e: Vec<f64> = h.clone().symmetric_eigenvalues().iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    #[test]
    fn single_cell_dimer() {
        let spec = ChainSpec::new(1, vec![6.5, 6.5], vec![0.5], vec![]).unwrap();
        let e = sorted_eigs(&build_tb_hamiltonian(&spec));
        assert!((e[0] - 6.0).abs() < 1e-12 && (e[1] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn dimerized_chain_has_free_end_sites() {
        let spec = ChainSpec::uniform(5, 6.5, 0.0, 0.5).unwrap();
        let e = sorted_eigs(&build_tb_hamiltonian(&spec));
        let expect = [6.0, 6.0, 6.0, 6.0, 6.5, 6.5, 7.0, 7.0, 7.0, 7.0];
        for (a, b) in e.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{e:?}");
        }
    }

    #[test]
    fn hamiltonian_layout() {
        let spec = ChainSpec::new(2, vec![1.0, 2.0, 3.0, 4.0], vec![0.1, 0.2], vec![0.3]).unwrap();
        let h = build_tb_hamiltonian(&spec);
        assert_eq!(h[(0, 1)], 0.1);
        assert_eq!(h[(1, 2)], 0.3);
        assert_eq!(h[(2, 3)], 0.2);
        assert_eq!(h[(0, 2)], 0.0);
        assert_eq!(h[(3, 3)], 4.0);
        assert_eq!(h, h.transpose());
    }

    #[test]
    fn rejects_bad_lengths_and_signs() {
        assert!(ChainSpec::new(2, vec![1.0; 3], vec![0.1; 2], vec![0.1]).is_err());
        assert!(ChainSpec::new(2, vec![1.0; 4], vec![0.1; 2], vec![-0.1]).is_err());
        assert!(ChainSpec::new(0, vec![], vec![], vec![]).is_err());
        assert!(CircuitSpec::uniform(2, 300.0, 1.0, 0.0, 30.0).is_err());
        assert!(CircuitSpec::new(2, vec![1.0; 4], vec![1.0; 4], vec![1.0; 2], vec![1.0; 2]).is_err());
    }

    #[test]
    fn mapping_matches_direct_formula() {
        let spec = CircuitSpec::uniform(1, 300.0, 1.0, f64::INFINITY, 30.0).unwrap();
        let chain = map_circuit_to_tb(&spec).unwrap();
        // direct SI evaluation
        let f = 1.0 / (2.0 * PI * (1e-9_f64 * 330e-15).sqrt()) / 1e9;
        assert!((chain.eps()[0] - f).abs() < 1e-9);
        assert!((chain.eps()[0] - 8.76).abs() < 0.01);
        assert_eq!(chain.v()[0], 0.0);

        let two = CircuitSpec::uniform(2, 300.0, 1.0, f64::INFINITY, 30.0).unwrap();
        let chain = map_circuit_to_tb(&two).unwrap();
        assert!((chain.w()[0] - f / 2.0 * 30.0 / 330.0).abs() < 1e-12);
        assert!((chain.w()[0] - 0.398).abs() < 1e-3);
    }

    #[test]
    fn pinched_junctions_give_zero_v() {
        let spec = CircuitSpec::reference_device();
        let chain = map_circuit_to_tb(&spec).unwrap();
        assert!(chain.v().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn smaller_lv_raises_every_site() {
        let a = map_circuit_to_tb(&CircuitSpec::reference_device().with_lv(20.0, None).unwrap()).unwrap();
        let b = map_circuit_to_tb(&CircuitSpec::reference_device().with_lv(10.0, None).unwrap()).unwrap();
        assert!(a.eps().iter().zip(b.eps()).all(|(x, y)| y > x));
    }

    #[test]
    fn reference_device_crosses_at_22_nh() {
        let chain = map_circuit_to_tb(&CircuitSpec::reference_device().with_lv(22.0, None).unwrap()).unwrap();
        assert!((chain.v()[0] / chain.w()[0] - 1.0).abs() < 2e-3);
        let pinched = map_circuit_to_tb(&CircuitSpec::reference_device()).unwrap();
        assert!((pinched.eps()[0] - 6.04).abs() < 2e-3);
        assert!((pinched.w()[0] - 0.35).abs() < 1e-3);
    }

    #[test]
    fn local_lv_only_touches_its_cell() {
        let spec = CircuitSpec::reference_device().with_lv(15.0, Some(&[2])).unwrap();
        let chain = map_circuit_to_tb(&spec).unwrap();
        let base = map_circuit_to_tb(&CircuitSpec::reference_device()).unwrap();
        for i in 0..10 {
            let changed = i == 4 || i == 5;
            assert_eq!(chain.eps()[i] != base.eps()[i], changed, "site {i}");
        }
        assert!(chain.v()[2] > 0.0 && chain.v()[1] == 0.0);
    }

    #[test]
    fn chiral_operator_basics() {
        let g = chiral_operator(1);
        assert_eq!(g.matrix, DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0])));
        let g = chiral_operator(5);
        assert_eq!(g.matrix.trace(), 0.0);
        assert_eq!(&g.matrix * &g.matrix, DMatrix::identity(10, 10));
        let h = build_tb_hamiltonian(&ChainSpec::uniform(5, 0.0, 0.3, 0.7).unwrap());
        assert_eq!(&g.matrix * &h * &g.matrix, -h);
    }

    #[test]
    fn chiral_defect_cases() {
        let h = build_tb_hamiltonian(&ChainSpec::uniform(5, 6.5, 0.2, 0.5).unwrap());
        assert_eq!(chiral_defect(&h, 6.5).unwrap(), 0.0);
        let mut snn = h.clone();
        snn[(0, 2)] = 0.03;
        snn[(2, 0)] = 0.03;
        assert!((chiral_defect(&snn, 6.5).unwrap() - 0.06).abs() < 1e-15);
        let lc = map_circuit_to_tb(&CircuitSpec::reference_device().with_lv(18.0, None).unwrap()).unwrap();
        let h = build_tb_hamiltonian(&lc);
        assert!(chiral_defect(&h, lc.eps()[0]).unwrap() < 1e-12);
        assert!(chiral_defect(&DMatrix::zeros(3, 3), 0.0).is_err());
    }

    #[test]
    fn normal_modes_close_to_tight_binding() {
        let spec = CircuitSpec::reference_device().with_lv(30.0, None).unwrap();
        let exact = circuit_normal_modes(&spec, None).unwrap();
        let tb = sorted_eigs(&build_tb_hamiltonian(&map_circuit_to_tb(&spec).unwrap()));
        for (a, b) in exact.iter().zip(&tb) {
            // first-order mapping; second-order error ~ (w/ε)² ε
            assert!((a - b).abs() < 0.06, "{exact:?} vs {tb:?}");
        }
    }

    #[test]
    fn json_roundtrip_with_infinite_lv() {
        let spec = CircuitSpec::reference_device().with_lv(12.5, Some(&[1])).unwrap();
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"inf\"") && text.contains("lv_nH"));
        let back: CircuitSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let bad = text.replace("\"cw_fF\"", "\"cw\"");
        assert!(serde_json::from_str::<CircuitSpec>(&bad).is_err());
    }
}
