//! Derivative-free simplex minimization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NelderMeadOptions {
    /// Stop once max f − min f over the simplex falls below this.
    pub tol_f: f64,
    /// Stop once every vertex lies within this (max-norm) of the best one.
    pub tol_x: f64,
    pub max_iterations: usize,
    /// Per-coordinate offset of the initial vertices from the start point.
    pub initial_step: f64,
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            tol_f: 1e-7,
            tol_x: 1e-9,
            max_iterations: 5000,
            initial_step: 0.02,
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Best vertex value at the start of each iteration.
    pub history: Vec<f64>,
}

struct Simplex<'a, F> {
    f: &'a F,
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
    evaluations: usize,
}

impl<F: Fn(&[f64]) -> f64> Simplex<'_, F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        let v = (self.f)(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }

    fn order(&mut self) {
        let mut idx: Vec<usize> = (0..self.points.len()).collect();
        idx.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]).then(a.cmp(&b)));
        self.points = idx.iter().map(|&i| self.points[i].clone()).collect();
        self.values = idx.iter().map(|&i| self.values[i]).collect();
    }

    fn spread(&self) -> f64 {
        self.values[self.values.len() - 1] - self.values[0]
    }

    fn size(&self) -> f64 {
        let best = &self.points[0];
        self.points[1..]
            .iter()
            .flat_map(|p| p.iter().zip(best).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }
}

fn affine(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    // a + t (b - a)
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

/// Minimize `objective` from `start`.
///
/// Non-finite objective values during the run count as +∞ so the vertex is
/// never kept; a non-finite value at the start point is an error.
pub fn nelder_mead<F>(objective: F, start: &[f64], opts: &NelderMeadOptions) -> Result<NelderMeadOutcome>
where
    F: Fn(&[f64]) -> f64,
{
    let n = start.len();
    if n == 0 {
        return Err(Error::validation("nothing to optimize: empty start vector"));
    }
    let f0 = objective(start);
    if !f0.is_finite() {
        return Err(Error::validation(format!("objective is not finite at the start point ({f0})")));
    }
    let mut s = Simplex { f: &objective, points: vec![start.to_vec()], values: vec![f0], evaluations: 1 };
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += opts.initial_step;
        let v = s.eval(&p);
        s.points.push(p);
        s.values.push(v);
    }

    let mut iterations = 0;
    let mut history = Vec::new();
    let converged = loop {
        s.order();
        history.push(s.values[0]);
        if s.spread() < opts.tol_f || s.size() < opts.tol_x {
            break true;
        }
        if iterations >= opts.max_iterations {
            break false;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|j| s.points[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64)
            .collect();
        let worst = s.points[n].clone();
        let (f_best, f_second, f_worst) = (s.values[0], s.values[n - 1], s.values[n]);

        let xr = affine(&centroid, &worst, -opts.reflection);
        let fr = s.eval(&xr);
        if fr < f_best {
            let xe = affine(&centroid, &xr, opts.expansion);
            let fe = s.eval(&xe);
            if fe < fr {
                s.points[n] = xe;
                s.values[n] = fe;
            } else {
                s.points[n] = xr;
                s.values[n] = fr;
            }
            continue;
        }
        if fr < f_second {
            s.points[n] = xr;
            s.values[n] = fr;
            continue;
        }
        let (xc, fc, accept) = if fr < f_worst {
            let xc = affine(&centroid, &xr, opts.contraction);
            let fc = s.eval(&xc);
            (xc, fc, fc <= fr)
        } else {
            let xc = affine(&centroid, &worst, opts.contraction);
            let fc = s.eval(&xc);
            (xc, fc, fc < f_worst)
        };
        if accept {
            s.points[n] = xc;
            s.values[n] = fc;
            continue;
        }
        let best = s.points[0].clone();
        for i in 1..=n {
            let p = affine(&best, &s.points[i], opts.shrink);
            s.values[i] = s.eval(&p);
            s.points[i] = p;
        }
    };
    Ok(NelderMeadOutcome {
        x: s.points[0].clone(),
        value: s.values[0],
        iterations,
        evaluations: s.evaluations,
        converged,
        history,
    })
}
