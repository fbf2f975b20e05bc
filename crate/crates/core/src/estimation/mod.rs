//! Derivative-free circuit-parameter estimation.

mod fit;
mod nelder_mead;

pub use fit::{
    disorder_report, fit_circuit_params, model_frequencies, rms_mismatch, write_parameters_csv, Bounds,
    DisorderReport, Family, FitOptions, FitProblem, FitResult, FreeMask,
};
pub use nelder_mead::{nelder_mead, NelderMeadOptions, NelderMeadOutcome};
