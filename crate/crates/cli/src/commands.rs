//! Per-subcommand configs and drivers.
//!
//! Every config serializes completely, so its `Default` doubles as the key
//! tree that config files are checked against.

use std::io::Write;
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sshchain::estimation::{fit_circuit_params, write_parameters_csv, FitOptions, FitProblem};
use sshchain::io::fmt_float;
use sshchain::microwave::{
    background_normalize, extract_peaks, gate_setting_lv, gate_sweep_spectrum, joint_settings, linear_grid,
    loaded_modes, mode_linewidths, power_sweep, s21_trace, single_gate_settings, BoxMode, GateModel, GateTable,
    LadderConfig, Peak,
};
use sshchain::model::{build_tb_hamiltonian, map_circuit_to_tb};
use sshchain::spectral::{
    classify_modes, eigendecompose, fsr_crossings, normalized_spectrum, sweep_coupling, write_modes_csv,
    write_summary_csv, ModeClassification,
};
use sshchain::topology::{
    disorder_ensemble, ensemble_summary_json, ipr, local_winding_marker, localization_length_fit,
    winding_number_k_space, winding_number_real_space, write_ensemble_csv, DisorderTarget, Sublattice,
    WindingMethod,
};
use sshchain::{ChainSpec, CircuitSpec, Error, PhaseTag};

use crate::output::Output;
use crate::CliError;

/// One-line stdout summary plus structured details for the sidecar.
pub struct Report {
    pub summary: String,
    pub details: Value,
}

pub trait Command: Serialize + DeserializeOwned + Default {
    const NAME: &'static str;
    /// Config path that `--seed` writes to, for commands with randomness.
    const SEED_PATH: Option<&'static str> = None;

    /// Cross-field checks and loading of referenced input files; runs
    /// before `--dry-run` exits, so the echoed config is what `run` sees.
    fn validate(&mut self) -> Result<(), CliError> {
        Ok(())
    }

    fn run(&self, out: &mut Output) -> Result<Report, CliError>;
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn reference_with_lv(lv: f64) -> CircuitSpec {
    CircuitSpec::reference_device().with_lv(lv, None).expect("reference device accepts any positive L_v")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreqGrid {
    #[serde(rename = "start_GHz")]
    pub start: f64,
    #[serde(rename = "stop_GHz")]
    pub stop: f64,
    pub points: usize,
}

impl FreqGrid {
    fn values(&self) -> Result<Vec<f64>, CliError> {
        if !(self.start > 0.0 && self.stop > self.start && self.stop.is_finite()) {
            return Err(invalid(format!("frequency grid needs 0 < start < stop, got [{}, {}]", self.start, self.stop)));
        }
        if self.points < 2 {
            return Err(invalid("frequency grid needs at least 2 points"));
        }
        Ok(linear_grid(self.start, self.stop, self.points))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeakSettings {
    pub prominence: f64,
    pub max_peaks: usize,
}

impl Default for PeakSettings {
    fn default() -> Self {
        Self { prominence: 0.05, max_peaks: 20 }
    }
}

fn write_peaks<W: Write>(w: &mut W, rows: &[(usize, &[Peak])]) -> std::io::Result<()> {
    writeln!(w, "setting_index,peak_index,f0_GHz,linewidth_GHz,amplitude,prominence")?;
    for (s, peaks) in rows {
        for (k, p) in peaks.iter().enumerate() {
            writeln!(
                w,
                "{s},{k},{},{},{},{}",
                fmt_float(p.f0),
                fmt_float(p.linewidth),
                fmt_float(p.amplitude),
                fmt_float(p.prominence)
            )?;
        }
    }
    Ok(())
}

fn classification_json(c: &ModeClassification) -> Value {
    json!({
        "phase_tag": c.phase_tag.as_str(),
        "edge_indices": c.edge_indices,
        "fsr_edge_bulk_GHz": c.fsr_edge_bulk,
        "fsr_edge_bulk_lower_GHz": c.fsr_edge_bulk_lower,
        "fsr_edge_bulk_upper_GHz": c.fsr_edge_bulk_upper,
        "fsr_edge_edge_GHz": c.fsr_edge_edge,
    })
}

// ---------------------------------------------------------------- spectrum

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Circuit,
    Chain,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Spectrum {
    /// Which of `circuit` and `chain` is diagonalized.
    pub model: ModelKind,
    pub circuit: CircuitSpec,
    pub chain: ChainSpec,
    /// Classification reference; the chain's mean on-site energy if unset.
    #[serde(rename = "eps_ref_GHz")]
    pub eps_ref: Option<f64>,
    /// Port coupling rate for the linewidth column; left empty if unset.
    #[serde(rename = "kappa_port_MHz")]
    pub kappa_port: Option<f64>,
}

impl Default for Spectrum {
    fn default() -> Self {
        Self {
            model: ModelKind::Circuit,
            circuit: reference_with_lv(15.0),
            chain: ChainSpec::uniform(5, 6.04, 0.01, 0.35).expect("valid chain"),
            eps_ref: None,
            kappa_port: None,
        }
    }
}

impl Command for Spectrum {
    const NAME: &'static str = "spectrum";

    fn validate(&mut self) -> Result<(), CliError> {
        if self.kappa_port.is_some_and(|k| !(k >= 0.0 && k.is_finite())) {
            return Err(invalid("kappa_port_MHz must be finite and >= 0"));
        }
        Ok(())
    }

    fn run(&self, out: &mut Output) -> Result<Report, CliError> {
        let chain = match self.model {
            ModelKind::Circuit => map_circuit_to_tb(&self.circuit)?,
            ModelKind::Chain => self.chain.clone(),
        };
        let eps_ref = self.eps_ref.unwrap_or_else(|| chain.mean_eps());
        let spec = eigendecompose(&build_tb_hamiltonian(&chain))?;
        let cls = classify_modes(&spec, eps_ref)?;
        let iprs = (0..spec.len()).map(|k| ipr(spec.mode(k).as_slice())).collect::<Result<Vec<_>, _>>()?;
        let widths = self.kappa_port.map(|k| mode_linewidths(&spec, k));
        out.csv(None, |w| {
            writeln!(w, "mode_index,freq_GHz,label,ipr,linewidth_MHz")?;
            for (k, e) in spec.eigenvalues.iter().enumerate() {
                let width = widths.as_ref().map(|x| fmt_float(x[k])).unwrap_or_default();
                writeln!(w, "{k},{},{},{},{width}", fmt_float(*e), cls.labels[k].as_str(), fmt_float(iprs[k]))?;
            }
            Ok(())
        })?;
        out.csv(Some("chain"), |w| {
            writeln!(w, "kind,index,value_GHz")?;
            for (i, e) in chain.eps().iter().enumerate() {
                writeln!(w, "eps,{i},{}", fmt_float(*e))?;
            }
            for (i, v) in chain.v().iter().enumerate() {
                writeln!(w, "v,{i},{}", fmt_float(*v))?;
            }
            for (i, x) in chain.w().iter().enumerate() {
                writeln!(w, "w,{i},{}", fmt_float(*x))?;
            }
            Ok(())
        })?;
        Ok(Report {
            summary: format!(
                "spectrum: {} modes, phase={}, fsr_edge_bulk={} GHz, fsr_edge_edge={} GHz",
                spec.len(),
                cls.phase_tag.as_str(),
                fmt_float(cls.fsr_edge_bulk),
                fmt_float(cls.fsr_edge_edge)
            ),
            details: json!({ "eps_ref_GHz": eps_ref, "classification": classification_json(&cls) }),
        })
    }
}

// ------------------------------------------------------------------- sweep

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LvGrid {
    #[serde(rename = "start_nH")]
    pub start: f64,
    #[serde(rename = "stop_nH")]
    pub stop: f64,
    #[serde(rename = "step_nH")]
    pub step: f64,
}

impl LvGrid {
    fn values(&self) -> Result<Vec<f64>, CliError> {
        if !(self.start > 0.0 && self.stop >= self.start && self.stop.is_finite() && self.step > 0.0) {
            return Err(invalid("L_v grid needs 0 < start <= stop and step > 0"));
        }
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|k| self.start + k as f64 * self.step).collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub circuit: CircuitSpec,
    pub lv_grid: LvGrid,
    /// Junctions that take the swept value; all when unset.
    pub cells: Option<Vec<usize>>,
    /// Divide every eigenvalue by its point's mean on-site energy.
    pub normalized: bool,
}

impl Default for Sweep {
    fn default() -> Self {
        Self {
            circuit: CircuitSpec::reference_device(),
            lv_grid: LvGrid { start: 5.0, stop: 100.0, step: 0.5 },
            cells: None,
            normalized: false,
        }
    }
}

impl Command for Sweep {
    const NAME: &'static str = "sweep";

    fn validate(&mut self) -> Result<(), CliError> {
        self.lv_grid.values()?;
        if let Some(bad) = self.cells.iter().flatten().find(|c| **c >= self.circuit.n_cells()) {
            return Err(invalid(format!("cell {bad} out of range for {} cells", self.circuit.n_cells())));
        }
        Ok(())
    }

    fn run(&self, out: &mut Output) -> Result<Report, CliError> {
        let grid = self.lv_grid.values()?;
        let mut points = sweep_coupling(&self.circuit, &grid, self.cells.as_deref())?;
        if self.normalized {
            points = normalized_spectrum(&points);
        }
        let crossings = fsr_crossings(&points);
        out.csv(Some("modes"), |w| write_modes_csv(w, &points))?;
        out.csv(Some("summary"), |w| write_summary_csv(w, &points))?;
        let listed = if crossings.is_empty() {
            "none".to_string()
        } else {
            crossings.iter().map(|x| format!("{} nH", fmt_float(*x))).collect::<Vec<_>>().join(", ")
        };
        Ok(Report {
            summary: format!("sweep: {} points, fsr crossing at {listed}", points.len()),
            details: json!({ "points": points.len(), "fsr_crossings_nH": crossings }),
        })
    }
}

// ----------------------------------------------------------------- winding

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Winding {
    pub method: WindingMethod,
    #[serde(rename = "v_GHz")]
    pub v: f64,
    #[serde(rename = "w_GHz")]
    pub w: f64,
    /// Real space: on-site energy and length of the uniform chain built from v, w.
    #[serde(rename = "eps_GHz")]
    pub eps: f64,
    pub n_cells: usize,
    /// Real space: explicit chain replacing the uniform one.
    pub chain: Option<ChainSpec>,
    #[serde(rename = "eps_ref_GHz")]
    pub eps_ref: Option<f64>,
}

impl Default for Winding {
    fn default() -> Self {
        Self {
            method: WindingMethod::KSpace,
            v: 0.25,
            w: 0.5,
            eps: 6.5,
            n_cells: 100,
            chain: None,
            eps_ref: None,
        }
    }
}

impl Command for Winding {
    const NAME: &'static str = "winding";

    fn validate(&mut self) -> Result<(), CliError> {
        if self.method == WindingMethod::KSpace && (self.chain.is_some() || self.eps_ref.is_some()) {
            return Err(invalid("chain and eps_ref_GHz apply to the real-space method only"));
        }
        Ok(())
    }

    fn run(&self, out: &mut Output) -> Result<Report, CliError> {
        let (result, marker) = match self.method {
            WindingMethod::KSpace => (winding_number_k_space(self.v, self.w)?, None),
            WindingMethod::RealSpace => {
                let chain = match &self.chain {
                    Some(c) => c.clone(),
                    None => ChainSpec::uniform(self.n_cells, self.eps, self.v, self.w)?,
                };
                let eps_ref = self.eps_ref.unwrap_or_else(|| chain.mean_eps());
                let h = build_tb_hamiltonian(&chain);
                (winding_number_real_space(&h, eps_ref)?, Some(local_winding_marker(&h, eps_ref)?))
            }
        };
        let method = match result.method {
            WindingMethod::KSpace => "k-space",
            WindingMethod::RealSpace => "real-space",
        };
        out.csv(None, |w| {
            writeln!(w, "method,nu,raw,chain_length")?;
            writeln!(w, "{method},{},{},{}", fmt_float(result.nu), fmt_float(result.raw), result.chain_length)
        })?;
        if let Some(m) = &marker {
            out.csv(Some("marker"), |w| {
                writeln!(w, "cell,marker")?;
                for (c, x) in m.iter().enumerate() {
                    writeln!(w, "{c},{}", fmt_float(*x))?;
                }
                Ok(())
            })?;
        }
        Ok(Report {
            summary: format!("winding: nu={} ({method}, raw={})", fmt_float(result.nu), fmt_float(result.raw)),
            details: serde_json::to_value(result).expect("serializes"),
        })
    }
}

// --------------------------------------------------------------------- ipr

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ipr {
    pub chain: ChainSpec,
    #[serde(rename = "eps_ref_GHz")]
    pub eps_ref: Option<f64>,
}

impl Default for Ipr {
    fn default() -> Self {
        Self { chain: ChainSpec::uniform(20, 6.5, 0.1, 0.5).expect("valid chain"), eps_ref: None }
    }
}

impl Command for Ipr {
    const NAME: &'static str = "ipr";

    fn run(&self, out: &mut Output) -> Result<Report, CliError> {
        let eps_ref = self.eps_ref.unwrap_or_else(|| self.chain.mean_eps());
        let spec = eigendecompose(&build_tb_hamiltonian(&self.chain))?;
        let cls = classify_modes(&spec, eps_ref)?;
        // decay lengths only where the profile supports a fit
        let xi = |state: &[f64], s| match localization_length_fit(state, s) {
            Ok(x) => Ok(Some(x)),
            Err(Error::FitUnsupported(_)) => Ok(None),
            Err(e) => Err(e),
        };
        let mut rows = Vec::with_capacity(spec.len());
        for k in 0..spec.len() {
            let mode = spec.mode(k);
            let state = mode.as_slice();
            rows.push((ipr(state)?, xi(state, Sublattice::A)?, xi(state, Sublattice::B)?));
        }
        out.csv(None, |w| {
            writeln!(w, "mode_index,freq_GHz,label,ipr,xi_A_cells,xi_B_cells")?;
            let opt = |x: Option<f64>| x.map(fmt_float).unwrap_or_default();
            for (k, (p, a, b)) in rows.iter().enumerate() {
                let (e, label) = (spec.eigenvalues[k], cls.labels[k].as_str());
                writeln!(w, "{k},{},{label},{},{},{}", fmt_float(e), fmt_float(*p), opt(*a), opt(*b))?;
            }
            Ok(())
        })?;
        let edge: Vec<f64> = cls.edge_indices.iter().map(|&k| rows[k].0).collect();
        let bulk: Vec<f64> =
            (0..rows.len()).filter(|k| !cls.edge_indices.contains(k)).map(|k| rows[k].0).collect();
        let bulk_mean = bulk.iter().sum::<f64>() / bulk.len().max(1) as f64;
        Ok(Report {
            summary: format!(
                "ipr: edge {}/{}, bulk mean {}, phase={}",
                fmt_float(edge[0]),
                fmt_float(edge[1]),
                fmt_float(bulk_mean),
                cls.phase_tag.as_str()
            ),
            details: json!({ "edge_ipr": edge, "bulk_mean_ipr": bulk_mean, "classification": classification_json(&cls) }),
        })
    }
}

// ---------------------------------------------------------------- disorder

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disorder {
    pub chain: ChainSpec,
    pub disorder: sshchain::topology::DisorderConfig,
}

impl Default for Disorder {
    fn default() -> Self {
        Self {
            chain: ChainSpec::uniform(50, 6.5, 0.01, 0.5).expect("valid chain"),
            disorder: sshchain::topology::DisorderConfig {
                strength: 0.1,
                targets: vec![DisorderTarget::V, DisorderTarget::W],
                samples: 200,
                seed: 0,
            },
        }
    }
}

impl Command for Disorder {
    const NAME: &'static str = "disorder";
    const SEED_PATH: Option<&'static str> = Some("disorder.seed");

    fn validate(&mut self) -> Result<(), CliError> {
        Ok(self.disorder.validate()?)
    }

    fn run(&self, out: &mut Output) -> Result<Report, CliError> {
        let result = disorder_ensemble(&self.chain, &self.disorder)?;
        out.csv(None, |w| write_ensemble_csv(w, &result))?;
        Ok(Report {
            summary: format!(
                "disorder: mean nu={} std={} over {} samples (seed {})",
                fmt_float(result.mean_nu),
                fmt_float(result.std_nu),
                result.samples.len(),
                result.seed
            ),
            details: ensemble_summary_json(&result),
        })
    }
}

// --------------------------------------------------------------------- s21

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Normalize {
    None,
    /// Windows of ±(3κ + 1 MHz) around every loaded pole.
    Auto,
    /// The configured `windows_GHz`.
    Windows,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct S21 {
    pub circuit: CircuitSpec,
    pub freq: FreqGrid,
    pub ladder: LadderConfig,
    pub box_mode: Option<BoxMode>,
    pub normalize: Normalize,
    #[serde(rename = "windows_GHz")]
    pub windows: Vec<(f64, f64)>,
    pub peaks: PeakSettings,
}

impl Default for S21 {
    fn default() -> Self {
        Self {
            circuit: reference_with_lv(80.0),
            freq: FreqGrid { start: 5.3, stop: 6.9, points: 80_001 },
            ladder: LadderConfig::default(),
            box_mode: None,
            normalize: Normalize::None,
            windows: Vec::new(),
            peaks: PeakSettings::default(),
        }
    }
}

impl Command for S21 {
    const NAME: &'static str = "s21";

    fn validate(&mut self) -> Result<(), CliError> {
        self.freq.values()?;
        self.ladder.validate()?;
        if let Some(b) = &self.box_mode {
            b.validate()?;
        }
        if self.normalize == Normalize::Windows && self.windows.is_empty() {
            return Err(invalid("normalize = \"windows\" needs windows_GHz"));
        }
        if self.normalize != Normalize::Windows && !self.windows.is_empty() {
            return Err(invalid("windows_GHz is only used with normalize = \"windows\""));
        }
        Ok(())
    }

    fn run(&self, out: &mut Output) -> Result<Report, CliError> {
        let freqs = self.freq.values()?;
        let poles = loaded_modes(&self.circuit, &self.ladder)?;
        let mut trace = s21_trace(&self.circuit, &freqs, &self.ladder, self.box_mode.as_ref())?;
        let windows = match self.normalize {
            Normalize::None => Vec::new(),
            Normalize::Auto => {
                poles.iter().map(|p| (p.freq - 3.0 * p.linewidth - 1e-3, p.freq + 3.0 * p.linewidth + 1e-3)).collect()
            }
            Normalize::Windows => self.windows.clone(),
        };
        if !windows.is_empty() {
            trace = background_normalize(&trace, &windows)?;
        }
        let peaks = extract_peaks(&trace, self.peaks.prominence, self.peaks.max_peaks)?;
        out.csv(None, |w| trace.write_csv(w))?;
        out.csv(Some("peaks"), |w| write_peaks(w, &[(0, &peaks)]))?;
        out.csv(Some("poles"), |w| {
            writeln!(w, "pole_index,freq_GHz,linewidth_GHz")?;
            for (k, p) in poles.iter().enumerate() {
                writeln!(w, "{k},{},{}", fmt_float(p.freq), fmt_float(p.linewidth))?;
            }
            Ok(())
        })?;
        let in_band = poles.iter().filter(|p| (self.freq.start..=self.freq.stop).contains(&p.freq)).count();
        Ok(Report {
            summary: format!("s21: {} points, {} peaks, {in_band} poles in band", freqs.len(), peaks.len()),
            details: json!({ "metadata": trace.metadata_json(), "peaks": peaks, "poles": poles }),
        })
    }
}

// ------------------------------------------------------- gate and power sweeps

fn load_tables(model: &GateModel, files: &[PathBuf]) -> Result<GateModel, CliError> {
    let mut model = model.clone();
    if !files.is_empty() {
        model.tables = files
            .iter()
            .map(|path| {
                let file = std::fs::File::open(path)
                    .map_err(|e| invalid(format!("gate table {}: {e}", path.display())))?;
                Ok(GateTable::from_csv(std::io::BufReader::new(file))?)
            })
            .collect::<Result<_, CliError>>()?;
    }
    model.validate()?;
    Ok(model)
}

fn tb_phase(circuit: &CircuitSpec, lv: Vec<f64>) -> Result<ModeClassification, CliError> {
    let chain = map_circuit_to_tb(&circuit.with_lv_list(lv)?)?;
    let spec = eigendecompose(&build_tb_hamiltonian(&chain))?;
    Ok(classify_modes(&spec, chain.mean_eps())?)
}

fn tag_path(tags: &[PhaseTag]) -> String {
    let mut path: Vec<&str> = Vec::new();
    for t in tags {
        if path.last() != Some(&t.as_str()) {
            path.push(t.as_str());
        }
    }
    path.join("->")
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum GateSweepMode {
    /// All junctions together from pinch-off to open in `steps` settings.
    Joint,
    /// `junction` through `voltages_V`, the rest pinched off.
    Single,
    /// The listed `settings_V`.
    Explicit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSweep {
    pub circuit: CircuitSpec,
    pub gate: GateModel,
    /// `v_gate_V,l_nH` CSVs replacing `gate.tables`; read during validation.
    pub gate_table_files: Vec<PathBuf>,
    pub mode: GateSweepMode,
    pub steps: usize,
    pub junction: usize,
    #[serde(rename = "voltages_V")]
    pub voltages: Vec<f64>,
    #[serde(rename = "settings_V")]
    pub settings: Vec<Vec<f64>>,
    #[serde(rename = "i_s_uA")]
    pub i_s: f64,
    pub freq: FreqGrid,
    pub ladder: LadderConfig,
    pub box_mode: Option<BoxMode>,
    pub peaks: PeakSettings,
}

impl Default for GateSweep {
    fn default() -> Self {
        Self {
            circuit: CircuitSpec::reference_device(),
            gate: GateModel::reference_device(),
            gate_table_files: Vec::new(),
            mode: GateSweepMode::Joint,
            steps: 9,
            junction: 0,
            voltages: Vec::new(),
            settings: Vec::new(),
            i_s: 0.0,
            freq: FreqGrid { start: 5.0, stop: 10.0, points: 10_001 },
            ladder: LadderConfig::default(),
            box_mode: None,
            peaks: PeakSettings::default(),
        }
    }
}

impl GateSweep {
    fn gate_settings(&self, model: &GateModel) -> Result<Vec<Vec<f64>>, CliError> {
        let settings = match self.mode {
            GateSweepMode::Joint => joint_settings(model, self.steps),
            GateSweepMode::Single => {
                if self.junction >= model.len() {
                    return Err(invalid(format!("junction {} out of range for {} junctions", self.junction, model.len())));
                }
                single_gate_settings(model, self.junction, &self.voltages)
            }
            GateSweepMode::Explicit => self.settings.clone(),
        };
        if settings.is_empty() {
            return Err(invalid("gate sweep has no settings"));
        }
        Ok(settings)
    }
}

impl Command for GateSweep {
    const NAME: &'static str = "gatesweep";

    fn validate(&mut self) -> Result<(), CliError> {
        self.gate = load_tables(&self.gate, &self.gate_table_files)?;
        self.freq.values()?;
        self.ladder.validate()?;
        if let Some(b) = &self.box_mode {
            b.validate()?;
        }
        self.gate_settings(&self.gate)?;
        Ok(())
    }

    fn run(&self, out: &mut Output) -> Result<Report, CliError> {
        let model = &self.gate;
        let settings = self.gate_settings(model)?;
        let freqs = self.freq.values()?;
        let traces =
            gate_sweep_spectrum(&self.circuit, model, &settings, self.i_s, &freqs, &self.ladder, self.box_mode.as_ref())?;
        let mut peaks = Vec::with_capacity(traces.len());
        let mut phases = Vec::with_capacity(traces.len());
        for (setting, trace) in settings.iter().zip(&traces) {
            peaks.push(extract_peaks(trace, self.peaks.prominence, self.peaks.max_peaks)?);
            phases.push(tb_phase(&self.circuit, gate_setting_lv(model, setting, self.i_s)?)?);
        }
        out.csv(None, |w| {
            writeln!(w, "setting_index,freq_GHz,re_s21,im_s21,abs_s21")?;
            for (s, t) in traces.iter().enumerate() {
                for (f, z) in t.freqs.iter().zip(&t.s21) {
                    writeln!(w, "{s},{},{},{},{}", fmt_float(*f), fmt_float(z.re), fmt_float(z.im), fmt_float(z.norm()))?;
                }
            }
            Ok(())
        })?;
        out.csv(Some("settings"), |w| {
            writeln!(w, "setting_index,junction,v_gate_V,lv_nH")?;
            for (s, t) in traces.iter().enumerate() {
                for (j, (v, l)) in settings[s].iter().zip(&t.metadata.lv).enumerate() {
                    writeln!(w, "{s},{j},{},{}", fmt_float(*v), fmt_float(*l))?;
                }
            }
            Ok(())
        })?;
        out.csv(Some("phases"), |w| {
            writeln!(w, "setting_index,fsr_edge_bulk_GHz,fsr_edge_edge_GHz,phase_tag")?;
            for (s, c) in phases.iter().enumerate() {
                writeln!(w, "{s},{},{},{}", fmt_float(c.fsr_edge_bulk), fmt_float(c.fsr_edge_edge), c.phase_tag.as_str())?;
            }
            Ok(())
        })?;
        let rows: Vec<(usize, &[Peak])> = peaks.iter().enumerate().map(|(s, p)| (s, p.as_slice())).collect();
        out.csv(Some("peaks"), |w| write_peaks(w, &rows))?;
        let tags: Vec<PhaseTag> = phases.iter().map(|c| c.phase_tag).collect();
        Ok(Report {
            summary: format!("gatesweep: {} settings, phases {}", settings.len(), tag_path(&tags)),
            details: json!({
                "settings_V": settings,
                "phase_tags": tags,
                "peak_counts": peaks.iter().map(Vec::len).collect::<Vec<_>>(),
                "metadata": traces.iter().map(|t| t.metadata_json()).collect::<Vec<_>>(),
            }),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurrentGrid {
    #[serde(rename = "start_uA")]
    pub start: f64,
    #[serde(rename = "stop_uA")]
    pub stop: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSweep {
    pub circuit: CircuitSpec,
    pub gate: GateModel,
    pub gate_table_files: Vec<PathBuf>,
    /// Gate voltages held during the sweep; every junction open if unset.
    #[serde(rename = "setting_V")]
    pub setting: Option<Vec<f64>>,
    pub currents: CurrentGrid,
}

impl Default for PowerSweep {
    fn default() -> Self {
        Self {
            circuit: CircuitSpec::reference_device(),
            gate: GateModel::reference_device(),
            gate_table_files: Vec::new(),
            setting: None,
            currents: CurrentGrid { start: 0.0, stop: 2.0, points: 41 },
        }
    }
}

impl Command for PowerSweep {
    const NAME: &'static str = "powersweep";

    fn validate(&mut self) -> Result<(), CliError> {
        self.gate = load_tables(&self.gate, &self.gate_table_files)?;
        let c = &self.currents;
        if !(c.start >= 0.0 && c.stop >= c.start && c.stop.is_finite()) || c.points == 0 {
            return Err(invalid("current grid needs 0 <= start <= stop and at least one point"));
        }
        Ok(())
    }

    fn run(&self, out: &mut Output) -> Result<Report, CliError> {
        let model = &self.gate;
        let setting = self.setting.clone().unwrap_or_else(|| model.junctions.iter().map(|j| j.v_o).collect());
        let c = &self.currents;
        let currents = if c.points == 1 { vec![c.start] } else { linear_grid(c.start, c.stop, c.points) };
        let sweep = power_sweep(&self.circuit, model, &setting, &currents)?;
        out.csv(Some("modes"), |w| {
            writeln!(w, "i_s_uA,mode_index,freq_GHz,label")?;
            for (i_s, p) in &sweep {
                for (k, (e, label)) in p.spectrum.eigenvalues.iter().zip(&p.classification.labels).enumerate() {
                    writeln!(w, "{},{k},{},{}", fmt_float(*i_s), fmt_float(*e), label.as_str())?;
                }
            }
            Ok(())
        })?;
        out.csv(Some("summary"), |w| {
            writeln!(w, "i_s_uA,fsr_edge_bulk_GHz,fsr_edge_edge_GHz,phase_tag")?;
            for (i_s, p) in &sweep {
                let c = &p.classification;
                writeln!(
                    w,
                    "{},{},{},{}",
                    fmt_float(*i_s),
                    fmt_float(c.fsr_edge_bulk),
                    fmt_float(c.fsr_edge_edge),
                    c.phase_tag.as_str()
                )?;
            }
            Ok(())
        })?;
        let tags: Vec<PhaseTag> = sweep.iter().map(|(_, p)| p.classification.phase_tag).collect();
        Ok(Report {
            summary: format!(
                "powersweep: {} currents from {} to {} uA, phases {}",
                currents.len(),
                fmt_float(currents[0]),
                fmt_float(currents[currents.len() - 1]),
                tag_path(&tags)
            ),
            details: json!({ "setting_V": setting, "phase_tags": tags }),
        })
    }
}

// --------------------------------------------------------------------- fit

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fit {
    pub problem: FitProblem,
    pub options: FitOptions,
}

impl Default for Fit {
    fn default() -> Self {
        Self {
            problem: FitProblem {
                target_freqs: Vec::new(),
                start: reference_with_lv(25.0),
                mask: Default::default(),
                bounds: Default::default(),
            },
            options: FitOptions::default(),
        }
    }
}

impl Command for Fit {
    const NAME: &'static str = "fit";
    const SEED_PATH: Option<&'static str> = Some("options.seed");

    fn validate(&mut self) -> Result<(), CliError> {
        let (targets, n) = (&self.problem.target_freqs, self.problem.start.n_sites());
        if targets.len() != n {
            return Err(invalid(format!("fit needs {n} target frequencies for the start circuit, got {}", targets.len())));
        }
        Ok(())
    }

    fn run(&self, out: &mut Output) -> Result<Report, CliError> {
        let fit = fit_circuit_params(&self.problem, &self.options)?;
        out.csv(Some("parameters"), |w| write_parameters_csv(w, &fit.best))?;
        let mut targets = self.problem.target_freqs.clone();
        targets.sort_by(f64::total_cmp);
        out.csv(Some("freqs"), |w| {
            writeln!(w, "mode_index,target_GHz,model_GHz")?;
            for (k, (t, m)) in targets.iter().zip(&fit.model_freqs).enumerate() {
                writeln!(w, "{k},{},{}", fmt_float(*t), fmt_float(*m))?;
            }
            Ok(())
        })?;
        let result = serde_json::to_value(&fit).expect("fit result serializes");
        out.json("result", &result)?;
        Ok(Report {
            summary: format!(
                "fit: residual_rms={} kHz, {}, {} evaluations",
                fmt_float(fit.residual_rms_khz),
                if fit.converged { "converged" } else { "not converged" },
                fit.evaluations
            ),
            details: json!({
                "residual_rms_kHz": fit.residual_rms_khz,
                "converged": fit.converged,
                "max_spread_percent": fit.disorder_report.max_spread(),
            }),
        })
    }
}
