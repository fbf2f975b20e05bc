//! Gate- and power-dependent nanowire junction inductance.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Junction {
    /// Pinch-off voltage (V); the junction is open circuit at or below it.
    pub v_p: f64,
    /// Open voltage (V) of maximal supercurrent.
    pub v_o: f64,
    /// Inductance at `v_o` and zero signal current (nH).
    pub l_min: f64,
    /// Current scale of the kinetic nonlinearity (µA).
    pub i_star: f64,
}

/// Measured (voltage, inductance) samples for one junction, sorted by voltage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct GateTable {
    samples: Vec<(f64, f64)>,
}

impl TryFrom<Vec<(f64, f64)>> for GateTable {
    type Error = Error;
    fn try_from(samples: Vec<(f64, f64)>) -> Result<Self> {
        GateTable::new(samples)
    }
}

impl From<GateTable> for Vec<(f64, f64)> {
    fn from(t: GateTable) -> Self {
        t.samples
    }
}

impl GateTable {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::validation("gate table needs at least two samples"));
        }
        if samples.windows(2).any(|p| !(p[0].0 < p[1].0)) {
            return Err(Error::validation("gate table voltages must be strictly increasing"));
        }
        if samples.iter().any(|(v, l)| !v.is_finite() || !(*l > 0.0)) {
            return Err(Error::validation("gate table needs finite voltages and positive inductances"));
        }
        Ok(Self { samples })
    }

    /// Parse `v_gate_V,l_nH` CSV with a header row.
    pub fn from_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::validation(e.to_string()))?
            .unwrap_or_default();
        let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
        if cols != ["v_gate_V", "l_nH"] {
            return Err(Error::validation(format!("expected header v_gate_V,l_nH, got {header:?}")));
        }
        let mut samples = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::validation(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let parse = |s: Option<&str>| -> Result<f64> {
                s.map(str::trim)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::validation(format!("gate table row {}: {line:?}", row + 2)))
            };
            let mut it = line.split(',');
            samples.push((parse(it.next())?, parse(it.next())?));
        }
        Self::new(samples)
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    /// Piecewise-linear interpolation, which preserves monotone data.
    pub fn interpolate(&self, v: f64) -> Result<f64> {
        let (lo, hi) = (self.samples[0].0, self.samples[self.samples.len() - 1].0);
        if !(lo..=hi).contains(&v) {
            return Err(Error::Extrapolation { query: v, lo, hi });
        }
        let k = self.samples.partition_point(|(x, _)| *x <= v).clamp(1, self.samples.len() - 1);
        let (x0, y0) = self.samples[k - 1];
        let (x1, y1) = self.samples[k];
        Ok(y0 + (y1 - y0) * (v - x0) / (x1 - x0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateMode {
    Parametric,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateModel {
    pub mode: GateMode,
    pub junctions: Vec<Junction>,
    /// Table mode: one table per junction, or a single table shared by all.
    #[serde(default)]
    pub tables: Vec<GateTable>,
}

/// Smoothstep ramp 3u² − 2u³, clamped to [0, 1].
pub fn gate_ramp(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

impl GateModel {
    pub fn parametric(junctions: Vec<Junction>) -> Result<Self> {
        let m = Self { mode: GateMode::Parametric, junctions, tables: Vec::new() };
        m.validate()?;
        Ok(m)
    }

    /// Five junctions with the pinch-off/open voltages of the measured device.
    ///
    /// `l_min` = 8 nH puts the fully open chain deep in the trivial phase
    /// while 5·l_min (i_s = 2 i_star) is topological; `i_star` = 1 µA is a
    /// placeholder scale.
    pub fn reference_device() -> Self {
        let v_p = [0.40, 0.15, 0.43, 0.40, 1.90];
        let v_o = [1.80, 1.80, 1.80, 1.80, 4.00];
        let junctions = v_p
            .iter()
            .zip(v_o)
            .map(|(&v_p, v_o)| Junction { v_p, v_o, l_min: 8.0, i_star: 1.0 })
            .collect();
        Self::parametric(junctions).expect("reference junctions are valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.junctions.is_empty() {
            return Err(Error::validation("gate model has no junctions"));
        }
        for (j, p) in self.junctions.iter().enumerate() {
            if !(p.v_p < p.v_o) {
                return Err(Error::validation(format!("junction {j}: v_p must be below v_o")));
            }
            if !(p.l_min > 0.0 && p.l_min.is_finite()) {
                return Err(Error::validation(format!("junction {j}: l_min must be positive")));
            }
            if !(p.i_star > 0.0) {
                return Err(Error::validation(format!("junction {j}: i_star must be positive")));
            }
        }
        if self.mode == GateMode::Table
            && !(self.tables.len() == 1 || self.tables.len() == self.junctions.len())
        {
            return Err(Error::validation(format!(
                "table mode needs 1 or {} tables, got {}",
                self.junctions.len(),
                self.tables.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.junctions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.junctions.is_empty()
    }
}

/// Junction inductance L₀(V_g)·[1 + (I_s/I_*)²] in nH, +∞ when pinched off.
pub fn nanowire_inductance(model: &GateModel, junction: usize, v_g: f64, i_s: f64) -> Result<f64> {
    let p = model
        .junctions
        .get(junction)
        .ok_or_else(|| Error::validation(format!("junction {junction} out of range")))?;
    if !(i_s >= 0.0) || !i_s.is_finite() {
        return Err(Error::validation(format!("signal current must be finite and >= 0, got {i_s}")));
    }
    let low_power = match model.mode {
        GateMode::Parametric => {
            if v_g <= p.v_p {
                return Ok(f64::INFINITY);
            }
            p.l_min / gate_ramp((v_g - p.v_p) / (p.v_o - p.v_p))
        }
        GateMode::Table => {
            let table = model
                .tables
                .get(junction)
                .or_else(|| (model.tables.len() == 1).then(|| &model.tables[0]))
                .ok_or_else(|| Error::validation(format!("no gate table for junction {junction}")))?;
            table.interpolate(v_g)?
        }
    };
    Ok(low_power * (1.0 + (i_s / p.i_star).powi(2)))
}

/// Joint settings interpolating every junction linearly from v_p to v_o.
pub fn joint_settings(model: &GateModel, steps: usize) -> Vec<Vec<f64>> {
    let denom = steps.saturating_sub(1).max(1) as f64;
    (0..steps)
        .map(|k| {
            let t = k as f64 / denom;
            model.junctions.iter().map(|j| (1.0 - t) * j.v_p + t * j.v_o).collect()
        })
        .collect()
}

/// Settings sweeping one junction while the others sit at their pinch-off voltage.
pub fn single_gate_settings(model: &GateModel, junction: usize, voltages: &[f64]) -> Vec<Vec<f64>> {
    voltages
        .iter()
        .map(|&v| {
            model
                .junctions
                .iter()
                .enumerate()
                .map(|(j, p)| if j == junction { v } else { p.v_p })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> GateModel {
        GateModel::reference_device()
    }

    #[test]
    fn pinched_open_and_power_points() {
        let m = model();
        let j = m.junctions[0];
        assert_eq!(nanowire_inductance(&m, 0, j.v_p, 5.0).unwrap(), f64::INFINITY);
        assert_eq!(nanowire_inductance(&m, 0, j.v_p - 1.0, 0.0).unwrap(), f64::INFINITY);
        assert_eq!(nanowire_inductance(&m, 0, j.v_o, 0.0).unwrap(), j.l_min);
        assert_eq!(nanowire_inductance(&m, 0, j.v_o, j.i_star).unwrap(), 2.0 * j.l_min);
        // clamped above v_o
        assert_eq!(nanowire_inductance(&m, 0, j.v_o + 3.0, 0.0).unwrap(), j.l_min);
    }

    #[test]
    fn errors() {
        let m = model();
        assert!(nanowire_inductance(&m, 9, 1.0, 0.0).is_err());
        assert!(nanowire_inductance(&m, 0, 1.0, -1.0).is_err());
        let bad = Junction { v_p: 1.0, v_o: 0.5, l_min: 1.0, i_star: 1.0 };
        assert!(GateModel::parametric(vec![bad]).is_err());
    }

    #[test]
    fn table_mode() {
        let table = GateTable::new(vec![(0.0, 40.0), (1.0, 20.0), (2.0, 10.0)]).unwrap();
        let mut m = model();
        m.mode = GateMode::Table;
        m.tables = vec![table];
        m.validate().unwrap();
        assert_eq!(nanowire_inductance(&m, 3, 1.5, 0.0).unwrap(), 15.0);
        assert!(matches!(nanowire_inductance(&m, 3, 2.5, 0.0), Err(Error::Extrapolation { .. })));
        assert!(GateTable::new(vec![(1.0, 1.0), (0.5, 2.0)]).is_err());
    }

    #[test]
    fn table_csv() {
        let text = "v_gate_V,l_nH\n0.5,30\n1.0,12.5\n";
        let t = GateTable::from_csv(text.as_bytes()).unwrap();
        assert_eq!(t.samples(), &[(0.5, 30.0), (1.0, 12.5)]);
        assert!(GateTable::from_csv("v,l\n1,2\n".as_bytes()).is_err());
        assert!(GateTable::from_csv("v_gate_V,l_nH\n1,x\n2,3\n".as_bytes()).is_err());
    }

    #[test]
    fn setting_generators() {
        let m = model();
        let joint = joint_settings(&m, 3);
        assert_eq!(joint[0], m.junctions.iter().map(|j| j.v_p).collect::<Vec<_>>());
        assert_eq!(joint[2], m.junctions.iter().map(|j| j.v_o).collect::<Vec<_>>());
        let single = single_gate_settings(&m, 2, &[1.0]);
        assert_eq!(single[0][2], 1.0);
        assert_eq!(single[0][0], m.junctions[0].v_p);
    }
}
