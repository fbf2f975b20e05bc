//! Junction inductance, ladder transmission and spectral line analysis.

pub mod gate;
pub mod ladder;
pub mod peaks;
pub mod poles;

pub use gate::{
    gate_ramp, joint_settings, nanowire_inductance, single_gate_settings, GateMode, GateModel, GateTable, Junction,
};
pub use ladder::{
    ladder_s21, linear_grid, s21_trace, BoxMode, Element, Ladder, LadderConfig, S21Trace, TraceMetadata,
    DEFAULT_Z0,
};
pub use peaks::{background_normalize, extract_peaks, Peak};
pub use poles::{loaded_modes, LoadedMode};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::CircuitSpec;
use crate::spectral::{sweep_coupling_list, Spectrum, SweepPoint};

/// κ_n = kappa_port · (ψ_n(first)² + ψ_n(last)²), in the units of `kappa_port`.
pub fn mode_linewidths(spectrum: &Spectrum, kappa_port: f64) -> Vec<f64> {
    let v = &spectrum.eigenvectors;
    let last = v.nrows() - 1;
    (0..v.ncols()).map(|k| kappa_port * (v[(0, k)].powi(2) + v[(last, k)].powi(2))).collect()
}

/// Coupling inductances for one gate setting at signal current `i_s` (µA).
pub fn gate_setting_lv(model: &GateModel, setting: &[f64], i_s: f64) -> Result<Vec<f64>> {
    if setting.len() != model.len() {
        return Err(Error::validation(format!(
            "gate setting has {} voltages for {} junctions",
            setting.len(),
            model.len()
        )));
    }
    setting.iter().enumerate().map(|(j, &v)| nanowire_inductance(model, j, v, i_s)).collect()
}

/// One S21 trace per gate setting, in input order.
pub fn gate_sweep_spectrum(
    circuit: &CircuitSpec,
    model: &GateModel,
    settings: &[Vec<f64>],
    i_s: f64,
    freqs: &[f64],
    config: &LadderConfig,
    box_mode: Option<&BoxMode>,
) -> Result<Vec<S21Trace>> {
    model.validate()?;
    if model.len() != circuit.n_cells() {
        return Err(Error::validation(format!(
            "gate model has {} junctions for {} cells",
            model.len(),
            circuit.n_cells()
        )));
    }
    settings
        .par_iter()
        .map(|setting| {
            let lv = gate_setting_lv(model, setting, i_s)?;
            let mut trace = s21_trace(&circuit.with_lv_list(lv)?, freqs, config, box_mode)?;
            trace.metadata.gate_setting = Some(setting.clone());
            trace.metadata.i_s = Some(i_s);
            Ok(trace)
        })
        .collect()
}

/// Tight-binding spectra at a fixed gate setting for each signal current (µA).
pub fn power_sweep(
    circuit: &CircuitSpec,
    model: &GateModel,
    setting: &[f64],
    currents: &[f64],
) -> Result<Vec<(f64, SweepPoint)>> {
    model.validate()?;
    let lists = currents
        .iter()
        .map(|&i_s| gate_setting_lv(model, setting, i_s))
        .collect::<Result<Vec<_>>>()?;
    let points = sweep_coupling_list(circuit, &lists)?;
    Ok(currents.iter().copied().zip(points).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_tb_hamiltonian, ChainSpec};
    use crate::spectral::eigendecompose;

    #[test]
    fn linewidths_sum_to_two_ports() {
        let chain = ChainSpec::uniform(5, 6.0, 0.1, 0.35).unwrap();
        let s = eigendecompose(&build_tb_hamiltonian(&chain)).unwrap();
        let k = mode_linewidths(&s, 3.0);
        assert!((k.iter().sum::<f64>() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn setting_length_checked() {
        let m = GateModel::reference_device();
        assert!(gate_setting_lv(&m, &[1.0], 0.0).is_err());
    }
}
