//! Fit lumped-element parameters to a list of eigenfrequencies.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::nelder_mead::{nelder_mead, NelderMeadOptions};
use crate::error::{Error, Result};
use crate::io::fmt_float;
use crate::model::{build_tb_hamiltonian, map_circuit_to_tb, CircuitSpec};
use crate::spectral::eigenvalues;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    C0,
    L0,
    Cw,
    Lv,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::C0, Family::L0, Family::Cw, Family::Lv];

    pub fn name(self) -> &'static str {
        match self {
            Family::C0 => "C0",
            Family::L0 => "L0",
            Family::Cw => "Cw",
            Family::Lv => "Lv",
        }
    }

    fn values(self, spec: &CircuitSpec) -> &[f64] {
        match self {
            Family::C0 => spec.c0(),
            Family::L0 => spec.l0(),
            Family::Cw => spec.cw(),
            Family::Lv => spec.lv(),
        }
    }
}

/// Per-entry flags; `true` lets the entry vary. Missing lists mean "all free".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FreeMask {
    pub c0: Option<Vec<bool>>,
    pub l0: Option<Vec<bool>>,
    pub cw: Option<Vec<bool>>,
    pub lv: Option<Vec<bool>>,
}

impl FreeMask {
    pub fn all() -> Self {
        Self::default()
    }

    /// Only the listed families vary.
    pub fn families(spec: &CircuitSpec, free: &[Family]) -> Self {
        let flags = |f: Family| Some(vec![free.contains(&f); f.values(spec).len()]);
        Self { c0: flags(Family::C0), l0: flags(Family::L0), cw: flags(Family::Cw), lv: flags(Family::Lv) }
    }

    fn get(&self, f: Family) -> Option<&Vec<bool>> {
        match f {
            Family::C0 => self.c0.as_ref(),
            Family::L0 => self.l0.as_ref(),
            Family::Cw => self.cw.as_ref(),
            Family::Lv => self.lv.as_ref(),
        }
    }
}

/// Per-entry (lo, hi) bounds in natural units. Missing lists are unbounded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bounds {
    pub c0: Option<Vec<(f64, f64)>>,
    pub l0: Option<Vec<(f64, f64)>>,
    pub cw: Option<Vec<(f64, f64)>>,
    pub lv: Option<Vec<(f64, f64)>>,
}

impl Bounds {
    fn get(&self, f: Family) -> Option<&Vec<(f64, f64)>> {
        match f {
            Family::C0 => self.c0.as_ref(),
            Family::L0 => self.l0.as_ref(),
            Family::Cw => self.cw.as_ref(),
            Family::Lv => self.lv.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitProblem {
    #[serde(rename = "targets_GHz")]
    pub target_freqs: Vec<f64>,
    pub start: CircuitSpec,
    #[serde(default)]
    pub mask: FreeMask,
    #[serde(default)]
    pub bounds: Bounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub simplex: NelderMeadOptions,
    /// Fresh-simplex restarts from the current best after convergence.
    pub restarts: usize,
    /// Independent runs; run 0 starts at `start`, the others at seeded
    /// log-space jitters of it.
    pub multistart: usize,
    /// Half-width of the uniform log-space jitter of extra starts.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { simplex: NelderMeadOptions::default(), restarts: 4, multistart: 1, jitter: 0.05, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisorderReport {
    /// 100·σ/μ per family (population σ).
    pub spread_percent: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl DisorderReport {
    pub fn max_spread(&self) -> f64 {
        self.spread_percent.values().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub best: CircuitSpec,
    #[serde(rename = "residual_rms_kHz")]
    pub residual_rms_khz: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Some vertex left the bounds and was clamped.
    pub clamped: bool,
    pub disorder_report: DisorderReport,
    #[serde(rename = "model_freqs_GHz")]
    pub model_freqs: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    family: Family,
    index: usize,
    lo: f64,
    hi: f64,
}

fn free_slots(problem: &FitProblem) -> Result<Vec<Slot>> {
    let spec = &problem.start;
    let mut slots = Vec::new();
    for family in Family::ALL {
        let values = family.values(spec);
        let mask = problem.mask.get(family);
        let bounds = problem.bounds.get(family);
        if let Some(m) = mask {
            if m.len() != values.len() {
                return Err(Error::validation(format!(
                    "{} mask has {} entries, spec has {}",
                    family.name(),
                    m.len(),
                    values.len()
                )));
            }
        }
        if let Some(b) = bounds {
            if b.len() != values.len() {
                return Err(Error::validation(format!(
                    "{} bounds have {} entries, spec has {}",
                    family.name(),
                    b.len(),
                    values.len()
                )));
            }
        }
        for (i, &x) in values.iter().enumerate() {
            let (lo, hi) = bounds.map(|b| b[i]).unwrap_or((0.0, f64::INFINITY));
            if !(lo <= x && x <= hi) {
                return Err(Error::validation(format!(
                    "start {}[{i}] = {x} outside bounds ({lo}, {hi})",
                    family.name()
                )));
            }
            // pinched junctions have no finite log-parameter
            let free = mask.map(|m| m[i]).unwrap_or(true) && x.is_finite();
            if free {
                slots.push(Slot { family, index: i, lo, hi });
            }
        }
    }
    Ok(slots)
}

fn assemble(start: &CircuitSpec, slots: &[Slot], log_x: &[f64], clamped: &Cell<bool>) -> Result<CircuitSpec> {
    let mut c0 = start.c0().to_vec();
    let mut l0 = start.l0().to_vec();
    let mut cw = start.cw().to_vec();
    let mut lv = start.lv().to_vec();
    for (slot, &lx) in slots.iter().zip(log_x) {
        let original = slot.family.values(start)[slot.index];
        // exp(ln x) need not round-trip; untouched slots keep their exact value
        let mut x = if lx == original.ln() { original } else { lx.exp() };
        if x < slot.lo || x > slot.hi {
            x = x.clamp(slot.lo, slot.hi);
            clamped.set(true);
        }
        let target = match slot.family {
            Family::C0 => &mut c0,
            Family::L0 => &mut l0,
            Family::Cw => &mut cw,
            Family::Lv => &mut lv,
        };
        target[slot.index] = x;
    }
    CircuitSpec::new(start.n_cells(), c0, l0, lv, cw)
}

/// Sorted tight-binding eigenfrequencies (GHz) of a circuit.
pub fn model_frequencies(spec: &CircuitSpec) -> Result<Vec<f64>> {
    eigenvalues(&build_tb_hamiltonian(&map_circuit_to_tb(spec)?))
}

/// RMS difference (GHz) between sorted model eigenfrequencies and sorted targets.
pub fn rms_mismatch(spec: &CircuitSpec, targets: &[f64]) -> Result<f64> {
    let model = model_frequencies(spec)?;
    if model.len() != targets.len() {
        return Err(Error::validation(format!("{} targets for {} modes", targets.len(), model.len())));
    }
    let mut sorted = targets.to_vec();
    sorted.sort_by(f64::total_cmp);
    let ss: f64 = model.iter().zip(&sorted).map(|(m, t)| (m - t).powi(2)).sum();
    Ok((ss / model.len() as f64).sqrt())
}

/// Relative spread 100·σ/μ of each parameter family, ignoring infinite L_v.
pub fn disorder_report(spec: &CircuitSpec) -> DisorderReport {
    let mut spread_percent = BTreeMap::new();
    let mut notes = Vec::new();
    for family in Family::ALL {
        let finite: Vec<f64> = family.values(spec).iter().copied().filter(|x| x.is_finite()).collect();
        if finite.len() < 2 {
            notes.push(format!("{} omitted: {} finite entries", family.name(), finite.len()));
            continue;
        }
        if finite.iter().all(|x| *x == finite[0]) {
            spread_percent.insert(family.name().to_string(), 0.0);
            continue;
        }
        let m = finite.len() as f64;
        let mean = finite.iter().sum::<f64>() / m;
        let var = finite.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m;
        spread_percent.insert(family.name().to_string(), 100.0 * var.sqrt() / mean);
    }
    DisorderReport { spread_percent, notes }
}

/// Fit the free circuit parameters so the mapped chain reproduces the targets.
///
/// Works in log-parameter space. After the simplex converges it is rebuilt
/// around the best point up to `options.restarts` times, stopping early
/// once a restart no longer improves the residual. With `multistart > 1`
/// the runs execute in parallel and the lowest residual wins (ties go to
/// the lower run index), so the result does not depend on thread count.
pub fn fit_circuit_params(problem: &FitProblem, options: &FitOptions) -> Result<FitResult> {
    let n_modes = problem.start.n_sites();
    if problem.target_freqs.len() != n_modes {
        return Err(Error::validation(format!(
            "{} target frequencies for a {n_modes}-site chain",
            problem.target_freqs.len()
        )));
    }
    if problem.target_freqs.iter().any(|f| !f.is_finite()) {
        return Err(Error::validation("non-finite target frequency"));
    }
    if options.multistart == 0 {
        return Err(Error::validation("multistart must be >= 1"));
    }
    if !(options.jitter >= 0.0 && options.jitter.is_finite()) {
        return Err(Error::validation("jitter must be finite and >= 0"));
    }
    let slots = free_slots(problem)?;
    let start_x: Vec<f64> = slots
        .iter()
        .map(|s| s.family.values(&problem.start)[s.index].ln())
        .collect();

    let runs: Vec<Run> = (0..options.multistart)
        .into_par_iter()
        .map(|k| {
            let mut x0 = start_x.clone();
            if k > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
                rng.set_stream(k as u64);
                for x in &mut x0 {
                    *x += rng.random_range(-options.jitter..=options.jitter);
                }
            }
            single_run(problem, &slots, x0, options)
        })
        .collect::<Result<_>>()?;
    let best_run = runs
        .into_iter()
        .reduce(|a, b| if b.value < a.value { b } else { a })
        .expect("at least one run");

    let final_clamp = Cell::new(false);
    let best = assemble(&problem.start, &slots, &best_run.x, &final_clamp)?;
    let residual = rms_mismatch(&best, &problem.target_freqs)?;
    Ok(FitResult {
        disorder_report: disorder_report(&best),
        model_freqs: model_frequencies(&best)?,
        best,
        residual_rms_khz: residual * 1e6,
        iterations: best_run.iterations,
        evaluations: best_run.evaluations,
        converged: best_run.converged,
        clamped: best_run.clamped || final_clamp.get(),
    })
}

struct Run {
    x: Vec<f64>,
    value: f64,
    iterations: usize,
    evaluations: usize,
    converged: bool,
    clamped: bool,
}

fn single_run(problem: &FitProblem, slots: &[Slot], start_x: Vec<f64>, options: &FitOptions) -> Result<Run> {
    let clamped = Cell::new(false);
    let objective = |x: &[f64]| {
        assemble(&problem.start, slots, x, &clamped)
            .and_then(|spec| rms_mismatch(&spec, &problem.target_freqs))
            .unwrap_or(f64::INFINITY)
    };
    let mut x = start_x;
    let mut value = objective(&x);
    if slots.is_empty() {
        return Ok(Run { x, value, iterations: 0, evaluations: 0, converged: true, clamped: clamped.get() });
    }
    let (mut iterations, mut evaluations, mut converged) = (0, 0, false);
    for _ in 0..=options.restarts {
        let out = nelder_mead(objective, &x, &options.simplex)?;
        iterations += out.iterations;
        evaluations += out.evaluations;
        converged = out.converged;
        let improved = out.value < value;
        if out.value <= value {
            x = out.x;
            value = out.value;
        }
        if !improved || value < options.simplex.tol_f {
            break;
        }
    }
    Ok(Run { x, value, iterations, evaluations, converged, clamped: clamped.get() })
}

/// Per-site and per-coupling CSV of fitted parameters.
pub fn write_parameters_csv<W: Write>(mut out: W, spec: &CircuitSpec) -> std::io::Result<()> {
    writeln!(out, "kind,index,C0_fF,L0_nH,Cw_fF,Lv_nH")?;
    for i in 0..spec.n_sites() {
        writeln!(out, "site,{},{},{},,", i, fmt_float(spec.c0()[i]), fmt_float(spec.l0()[i]))?;
    }
    for (i, cw) in spec.cw().iter().enumerate() {
        // cw[0] and cw[N] are the terminating coupling sites; L_v has N entries
        let lv = spec.lv().get(i).map(|x| fmt_float(*x)).unwrap_or_default();
        writeln!(out, "coupling,{},,,{},{}", i, fmt_float(*cw), lv)?;
    }
    Ok(())
}
