//! Two-port ladder network and its transmission coefficient.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_float;
use crate::model::CircuitSpec;

/// Port reference impedance (Ω).
pub const DEFAULT_Z0: f64 = 50.0;
pub const DEFAULT_F_BOX: f64 = 6.0;
pub const DEFAULT_Q_BOX: f64 = 5.0;
pub const DEFAULT_BOX_COUPLING: f64 = 0.1;

const J: Complex64 = Complex64::new(0.0, 1.0);

/// Lumped element in GHz/nH/fF units. Reactances come out in Ω.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Element {
    SeriesC(f64),
    /// Infinite inductance is an open circuit.
    SeriesL(f64),
    ShuntC(f64),
    /// Parallel L‖C to ground.
    ShuntLC { c: f64, l: f64 },
    /// Series L–C branch to ground.
    ShuntSeriesLC { c: f64, l: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Abcd([Complex64; 4]);

impl Abcd {
    const IDENTITY: Abcd = Abcd([Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]);

    fn series(z: Complex64) -> Self {
        Abcd([1.0.into(), z, 0.0.into(), 1.0.into()])
    }

    fn shunt(y: Complex64) -> Self {
        Abcd([1.0.into(), 0.0.into(), y, 1.0.into()])
    }

    fn then(self, o: Abcd) -> Abcd {
        let [a, b, c, d] = self.0;
        let [e, f, g, h] = o.0;
        Abcd([a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h])
    }
}

/// 2×2 admittance matrix [[y11, y12], [y21, y22]].
type Y = [Complex64; 4];

/// Series-LC-R branch between the two ports, standing in for an enclosure mode.
///
/// `coupling` is the on-resonance |s21| of the branch alone; `q_box` its
/// loaded quality factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxMode {
    pub f_box: f64,
    pub q_box: f64,
    pub coupling: f64,
}

impl Default for BoxMode {
    fn default() -> Self {
        Self { f_box: DEFAULT_F_BOX, q_box: DEFAULT_Q_BOX, coupling: DEFAULT_BOX_COUPLING }
    }
}

impl BoxMode {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_box > 0.0 && self.f_box.is_finite()) || !(self.q_box > 0.0 && self.q_box.is_finite()) {
            return Err(Error::validation("box mode needs f_box > 0 and q_box > 0"));
        }
        if !(self.coupling > 0.0 && self.coupling <= 1.0) {
            return Err(Error::validation("box coupling must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Series (R Ω, L nH, C fF) realizing the branch at reference impedance `z0`.
    pub fn elements(&self, z0: f64) -> (f64, f64, f64) {
        let r = 2.0 * z0 * (1.0 / self.coupling - 1.0);
        let w = 2.0 * PI * self.f_box;
        let l = self.q_box * (2.0 * z0 + r) / w;
        let c = 1e6 / (w * w * l);
        (r, l, c)
    }

    fn admittance(&self, f: f64, z0: f64) -> Y {
        let (r, l, c) = self.elements(z0);
        let w = 2.0 * PI * f;
        let z = Complex64::new(r, w * l - 1e6 / (w * c));
        let y = z.inv();
        [y, -y, -y, y]
    }
}

/// Cascade of elements from port 1 to port 2.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ladder {
    pub elements: Vec<Element>,
}

impl Ladder {
    /// Coupling site, C_w[0], then per cell: site A, L_v, site B, C_w[c+1], coupling site.
    ///
    /// Coupling sites are capacitors to ground; `None` gives each the C₀ of
    /// the adjacent chain site.
    pub fn from_circuit(circuit: &CircuitSpec, coupling_site_ff: Option<f64>) -> Self {
        let n = circuit.n_cells();
        let (c0, l0, lv, cw) = (circuit.c0(), circuit.l0(), circuit.lv(), circuit.cw());
        let left = coupling_site_ff.unwrap_or(c0[0]);
        let right = coupling_site_ff.unwrap_or(c0[2 * n - 1]);
        let mut elements = vec![Element::ShuntC(left), Element::SeriesC(cw[0])];
        for c in 0..n {
            let (a, b) = (2 * c, 2 * c + 1);
            elements.push(Element::ShuntLC { c: c0[a], l: l0[a] });
            elements.push(Element::SeriesL(lv[c]));
            elements.push(Element::ShuntLC { c: c0[b], l: l0[b] });
            elements.push(Element::SeriesC(cw[c + 1]));
        }
        elements.push(Element::ShuntC(right));
        Self { elements }
    }

    /// Same network seen from port 2.
    pub fn reversed(&self) -> Self {
        Self { elements: self.elements.iter().rev().copied().collect() }
    }

    /// Transmission at `f` GHz, optionally with a box branch in parallel.
    pub fn s21(&self, f: f64, z0: f64, box_mode: Option<&BoxMode>) -> Result<Complex64> {
        if f == 0.0 {
            return Err(Error::SingularElement(f));
        }
        if !(f > 0.0 && f.is_finite()) {
            return Err(Error::validation(format!("frequency must be positive, got {f}")));
        }
        let w = 2.0 * PI * f;
        // sections between open elements
        let mut sections = vec![Abcd::IDENTITY];
        for e in &self.elements {
            let m = match *e {
                Element::SeriesC(c) => Abcd::series(-J * 1e6 / (w * c)),
                Element::SeriesL(l) if l.is_infinite() => {
                    sections.push(Abcd::IDENTITY);
                    continue;
                }
                Element::SeriesL(l) => Abcd::series(J * w * l),
                Element::ShuntC(c) => Abcd::shunt(J * w * c * 1e-6),
                Element::ShuntLC { c, l } => Abcd::shunt(J * (w * c * 1e-6 - 1.0 / (w * l))),
                Element::ShuntSeriesLC { c, l } => Abcd::shunt((J * (w * l - 1e6 / (w * c))).inv()),
            };
            let last = sections.last_mut().expect("non-empty");
            *last = last.then(m);
        }

        let chain_y = if sections.len() == 1 {
            let [a, b, c, d] = sections[0].0;
            match box_mode {
                None => return Ok(2.0 / (a + b / z0 + c * z0 + d)),
                Some(_) if b.norm() == 0.0 => {
                    return Err(Error::Numerical("chain without series element has no admittance form".into()))
                }
                // every element is reciprocal (AD − BC = 1), so Y12 = Y21 = −1/B;
                // forming BC − AD instead cancels catastrophically for long chains
                Some(_) => [d / b, -b.inv(), -b.inv(), a / b],
            }
        } else {
            let [a_l, _, c_l, _] = sections[0].0;
            let [_, _, c_r, d_r] = sections[sections.len() - 1].0;
            let zero = Complex64::new(0.0, 0.0);
            [c_l / a_l, zero, zero, c_r / d_r]
        };
        let y = match box_mode {
            Some(b) => {
                let yb = b.admittance(f, z0);
                [chain_y[0] + yb[0], chain_y[1] + yb[1], chain_y[2] + yb[2], chain_y[3] + yb[3]]
            }
            None => chain_y,
        };
        let [y11, y12, y21, y22] = y;
        let den = (1.0 + y11 * z0) * (1.0 + y22 * z0) - y12 * y21 * z0 * z0;
        let s = -2.0 * y21 * z0 / den;
        if !s.re.is_finite() || !s.im.is_finite() {
            return Err(Error::Numerical(format!("non-finite transmission at {f} GHz")));
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LadderConfig {
    #[serde(rename = "z0_ohm")]
    pub z0: f64,
    /// `None`: each coupling site takes the C₀ of its neighbouring site.
    #[serde(rename = "coupling_site_fF")]
    pub coupling_site_ff: Option<f64>,
}

impl Default for LadderConfig {
    fn default() -> Self {
        Self { z0: DEFAULT_Z0, coupling_site_ff: None }
    }
}

impl LadderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.z0 > 0.0 && self.z0.is_finite()) {
            return Err(Error::validation("z0 must be positive"));
        }
        if self.coupling_site_ff.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::validation("coupling-site capacitance must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    #[serde(rename = "gate_setting_V")]
    pub gate_setting: Option<Vec<f64>>,
    #[serde(rename = "i_s_uA")]
    pub i_s: Option<f64>,
    #[serde(rename = "power_dBm")]
    pub power_dbm: Option<f64>,
    pub box_mode: Option<BoxMode>,
    #[serde(rename = "z0_ohm")]
    pub z0: f64,
    #[serde(rename = "coupling_site_fF")]
    pub coupling_site_ff: [f64; 2],
    #[serde(rename = "lv_nH", with = "crate::io::inf_list")]
    pub lv: Vec<f64>,
    /// Inputs that fell back to library defaults.
    pub defaults_used: Vec<String>,
    pub normalized: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct S21Trace {
    /// Strictly increasing, GHz.
    pub freqs: Vec<f64>,
    pub s21: Vec<Complex64>,
    pub metadata: TraceMetadata,
}

impl S21Trace {
    pub fn magnitudes(&self) -> Vec<f64> {
        self.s21.iter().map(|z| z.norm()).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "freq_GHz,re_s21,im_s21,abs_s21")?;
        for (f, z) in self.freqs.iter().zip(&self.s21) {
            writeln!(out, "{},{},{},{}", fmt_float(*f), fmt_float(z.re), fmt_float(z.im), fmt_float(z.norm()))?;
        }
        Ok(())
    }

    pub fn metadata_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.metadata).expect("metadata serializes")
    }
}

pub(crate) fn check_grid(freqs: &[f64]) -> Result<()> {
    if freqs.is_empty() {
        return Err(Error::validation("frequency grid is empty"));
    }
    if freqs.windows(2).any(|p| !(p[0] < p[1])) {
        return Err(Error::validation("frequency grid must be strictly increasing"));
    }
    if let Some(&f) = freqs.iter().find(|f| **f == 0.0) {
        return Err(Error::SingularElement(f));
    }
    if freqs.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
        return Err(Error::validation("frequencies must be positive and finite"));
    }
    Ok(())
}

/// `n` evenly spaced points over [lo, hi].
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Evaluate a ladder over a grid (parallel over frequency, order preserved).
pub fn ladder_s21(ladder: &Ladder, freqs: &[f64], z0: f64, box_mode: Option<&BoxMode>) -> Result<Vec<Complex64>> {
    check_grid(freqs)?;
    if let Some(b) = box_mode {
        b.validate()?;
    }
    freqs.par_iter().map(|&f| ladder.s21(f, z0, box_mode)).collect()
}

/// Transmission through the circuit ladder terminated by the coupling sites.
pub fn s21_trace(
    circuit: &CircuitSpec,
    freqs: &[f64],
    config: &LadderConfig,
    box_mode: Option<&BoxMode>,
) -> Result<S21Trace> {
    config.validate()?;
    let ladder = Ladder::from_circuit(circuit, config.coupling_site_ff);
    let s21 = ladder_s21(&ladder, freqs, config.z0, box_mode)?;
    let mut defaults_used = Vec::new();
    if config.coupling_site_ff.is_none() {
        defaults_used.push("coupling_site_fF".to_string());
    }
    let coupling_site_ff = match (ladder.elements.first(), ladder.elements.last()) {
        (Some(Element::ShuntC(l)), Some(Element::ShuntC(r))) => [*l, *r],
        _ => unreachable!("circuit ladders start and end on a coupling site"),
    };
    if let Some(b) = box_mode {
        if b.q_box == DEFAULT_Q_BOX {
            defaults_used.push("q_box".to_string());
        }
        if b.coupling == DEFAULT_BOX_COUPLING {
            defaults_used.push("box_coupling".to_string());
        }
    }
    Ok(S21Trace {
        freqs: freqs.to_vec(),
        s21,
        metadata: TraceMetadata {
            gate_setting: None,
            i_s: None,
            power_dbm: None,
            box_mode: box_mode.copied(),
            z0: config.z0,
            coupling_site_ff,
            lv: circuit.lv().to_vec(),
            defaults_used,
            normalized: false,
        },
    })
}
