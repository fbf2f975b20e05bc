//! Complex natural frequencies of the port-loaded ladder.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CircuitSpec;

use super::ladder::LadderConfig;

/// One damped normal mode: transmission peaks near `freq` with a |s21|²
/// full width of `linewidth` (both GHz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadedMode {
    #[serde(rename = "freq_GHz")]
    pub freq: f64,
    #[serde(rename = "linewidth_GHz")]
    pub linewidth: f64,
}

/// Oscillatory poles of the ladder with both ports terminated in `z0`.
///
/// Nodes are the two coupling sites plus the 2N chain sites. With node
/// fluxes φ the network obeys C φ'' + G φ' + K φ = 0; in fF, nH, S and
/// rad/ns this reads C σ² + 10⁶ G σ + 10⁶ L⁻¹ = 0, solved through the
/// companion linearization. Overdamped (real) roots are dropped; the rest
/// are returned ascending in frequency.
pub fn loaded_modes(circuit: &CircuitSpec, config: &LadderConfig) -> Result<Vec<LoadedMode>> {
    config.validate()?;
    let n_sites = circuit.n_sites();
    let n = n_sites + 2;
    let (c0, l0, lv, cw) = (circuit.c0(), circuit.l0(), circuit.lv(), circuit.cw());
    // node 0 and n - 1 are the coupling sites, chain site i is node i + 1
    let mut cap = DMatrix::<f64>::zeros(n, n);
    let mut kin = DMatrix::<f64>::zeros(n, n);
    let mut cond = DMatrix::<f64>::zeros(n, n);
    let link_c = |m: &mut DMatrix<f64>, a: usize, b: usize, x: f64| {
        m[(a, a)] += x;
        m[(b, b)] += x;
        m[(a, b)] -= x;
        m[(b, a)] -= x;
    };
    cap[(0, 0)] += config.coupling_site_ff.unwrap_or(c0[0]);
    cap[(n - 1, n - 1)] += config.coupling_site_ff.unwrap_or(c0[n_sites - 1]);
    cond[(0, 0)] = 1e6 / config.z0;
    cond[(n - 1, n - 1)] = 1e6 / config.z0;
    for i in 0..n_sites {
        cap[(i + 1, i + 1)] += c0[i];
        kin[(i + 1, i + 1)] += 1e6 / l0[i];
    }
    for (c, &x) in cw.iter().enumerate() {
        // cw[c] joins the B site of cell c - 1 (or coupling site 0) to the A site of cell c
        link_c(&mut cap, 2 * c, 2 * c + 1, x);
    }
    for (c, &l) in lv.iter().enumerate() {
        if l.is_finite() {
            link_c(&mut kin, 2 * c + 1, 2 * c + 2, 1e6 / l);
        }
    }

    let c_inv = cap
        .try_inverse()
        .ok_or_else(|| Error::Numerical("capacitance matrix is singular".into()))?;
    let mut companion = DMatrix::<f64>::zeros(2 * n, 2 * n);
    companion.view_mut((0, n), (n, n)).fill_with_identity();
    companion.view_mut((n, 0), (n, n)).copy_from(&(-&c_inv * kin));
    companion.view_mut((n, n), (n, n)).copy_from(&(-&c_inv * cond));
    let roots = companion.complex_eigenvalues();
    if roots.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical("non-finite natural frequency".into()));
    }
    let mut modes: Vec<LoadedMode> = roots
        .iter()
        .filter(|z| z.im > 1e-9 * z.norm())
        .map(|z| LoadedMode { freq: z.im / (2.0 * PI), linewidth: (-2.0 * z.re / (2.0 * PI)).max(0.0) })
        .collect();
    modes.sort_by(|a, b| a.freq.total_cmp(&b.freq));
    Ok(modes)
}
