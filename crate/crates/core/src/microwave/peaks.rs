//! Background normalization and Lorentzian peak extraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{nelder_mead, NelderMeadOptions};

use super::ladder::S21Trace;

/// Divide |s21| by a background interpolated linearly through the points
/// outside `windows` (closed intervals, GHz). Phases are kept.
///
/// The background is held constant beyond the outermost retained points.
pub fn background_normalize(trace: &S21Trace, windows: &[(f64, f64)]) -> Result<S21Trace> {
    if windows.iter().any(|(lo, hi)| !(lo <= hi)) {
        return Err(Error::validation("exclusion windows must satisfy lo <= hi"));
    }
    let mags = trace.magnitudes();
    let anchors: Vec<(f64, f64)> = trace
        .freqs
        .iter()
        .zip(&mags)
        .filter(|(f, _)| !windows.iter().any(|(lo, hi)| (*lo..=*hi).contains(*f)))
        .map(|(f, m)| (*f, *m))
        .collect();
    if anchors.len() < 2 {
        return Err(Error::validation(format!(
            "exclusion windows leave {} background point(s), need at least 2",
            anchors.len()
        )));
    }
    if anchors.iter().any(|(_, m)| *m <= 0.0) {
        return Err(Error::validation("background vanishes outside the exclusion windows"));
    }
    let background = |f: f64| -> f64 {
        let k = anchors.partition_point(|(x, _)| *x <= f);
        if k == 0 {
            anchors[0].1
        } else if k == anchors.len() {
            anchors[k - 1].1
        } else {
            let (x0, y0) = anchors[k - 1];
            let (x1, y1) = anchors[k];
            y0 + (y1 - y0) * (f - x0) / (x1 - x0)
        }
    };
    let mut out = trace.clone();
    for (z, f) in out.s21.iter_mut().zip(&trace.freqs) {
        *z /= background(*f);
    }
    out.metadata.normalized = true;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    #[serde(rename = "f0_GHz")]
    pub f0: f64,
    /// Full width at half maximum of |s21|², GHz.
    #[serde(rename = "linewidth_GHz")]
    pub linewidth: f64,
    /// Fitted |s21| at the peak center.
    pub amplitude: f64,
    pub prominence: f64,
}

struct Candidate {
    index: usize,
    prominence: f64,
    base: f64,
}

/// Values closer than this (relative) count as a plateau, so rounding
/// noise on flat stretches does not spawn peaks.
const FLAT_TOL: f64 = 1e-12;

fn find_candidates(y: &[f64]) -> Vec<Candidate> {
    let n = y.len();
    let same = |a: f64, b: f64| (a - b).abs() <= FLAT_TOL * a.abs().max(b.abs());
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if y[i] > y[i - 1] && !same(y[i], y[i - 1]) {
            // walk across a flat top
            let mut j = i;
            while j + 1 < n && same(y[j + 1], y[i]) {
                j += 1;
            }
            if j + 1 < n && y[j + 1] < y[i] {
                let mid = (i + j) / 2;
                let mut left_min = y[mid];
                let mut k = i;
                while k > 0 && y[k - 1] <= y[mid] {
                    k -= 1;
                    left_min = left_min.min(y[k]);
                }
                let mut right_min = y[mid];
                let mut k = j;
                while k + 1 < n && y[k + 1] <= y[mid] {
                    k += 1;
                    right_min = right_min.min(y[k]);
                }
                let base = left_min.max(right_min);
                out.push(Candidate { index: mid, prominence: y[mid] - base, base });
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Half-maximum width of |s21|² above the prominence base.
fn width_estimate(freqs: &[f64], p: &[f64], c: &Candidate) -> f64 {
    let half = 0.5 * (p[c.index] + c.base * c.base);
    let crossing = |range: &mut dyn Iterator<Item = usize>, step: isize| -> Option<f64> {
        for k in range {
            let inner = (k as isize - step) as usize;
            if p[k] < half {
                let t = (p[inner] - half) / (p[inner] - p[k]);
                return Some(freqs[inner] + t * (freqs[k] - freqs[inner]));
            }
        }
        None
    };
    let left = crossing(&mut (0..c.index).rev(), -1);
    let right = crossing(&mut (c.index + 1..freqs.len()), 1);
    let f0 = freqs[c.index];
    let spacing = freqs[(c.index + 1).min(freqs.len() - 1)] - freqs[c.index.saturating_sub(1)];
    match (left, right) {
        (Some(l), Some(r)) => r - l,
        (Some(l), None) => 2.0 * (f0 - l),
        (None, Some(r)) => 2.0 * (r - f0),
        (None, None) => 2.0 * spacing,
    }
    .max(spacing * 0.5)
}

fn lorentzian(f: f64, f0: f64, kappa: f64, a: f64) -> f64 {
    let x = 2.0 * (f - f0) / kappa;
    a / (1.0 + x * x)
}

struct Seed {
    f0: f64,
    kappa: f64,
    height: f64,
}

/// Fitted (f0, κ, height) per line, plus the constant offset.
type GroupFit = (Vec<(f64, f64, f64)>, f64);

/// Joint least-squares fit of `offset + Σ Lorentzian` to |s21|² on the given points.
fn fit_group(freqs: &[f64], p: &[f64], seeds: &[Seed]) -> Result<GroupFit> {
    let scale = p.iter().fold(0.0_f64, |m, v| m.max(*v)).max(f64::MIN_POSITIVE);
    let base = p.iter().copied().fold(f64::INFINITY, f64::min);
    let decode = |x: &[f64]| -> GroupFit {
        let peaks = seeds
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let kappa = s.kappa * x[3 * k + 1].exp();
                (s.f0 + s.kappa * x[3 * k], kappa, s.height * x[3 * k + 2].exp())
            })
            .collect();
        (peaks, scale * x[3 * seeds.len()])
    };
    let objective = |x: &[f64]| -> f64 {
        let (peaks, offset) = decode(x);
        freqs
            .iter()
            .zip(p)
            .map(|(f, v)| {
                let model = offset + peaks.iter().map(|&(f0, k, a)| lorentzian(*f, f0, k, a)).sum::<f64>();
                ((model - v) / scale).powi(2)
            })
            .sum::<f64>()
            / freqs.len() as f64
    };
    let mut start = vec![0.0; 3 * seeds.len() + 1];
    start[3 * seeds.len()] = base / scale;
    let opts = NelderMeadOptions {
        tol_f: 1e-18,
        tol_x: 1e-10,
        max_iterations: 4000 * start.len(),
        initial_step: 0.1,
        ..Default::default()
    };
    let mut best = nelder_mead(objective, &start, &opts)?;
    for _ in 0..2 {
        let again = nelder_mead(objective, &best.x, &NelderMeadOptions { initial_step: 0.02, ..opts.clone() })?;
        let done = again.value >= best.value * (1.0 - 1e-9);
        best = again;
        if done {
            break;
        }
    }
    Ok(decode(&best.x))
}

/// Local maxima of |s21| with prominence ≥ `prominence`, refined by
/// Lorentzian fits of |s21|² over ±5 estimated linewidths.
///
/// Peaks whose fit windows overlap are fitted jointly; fits landing within
/// half a linewidth of each other count as one peak. At most `max_peaks`
/// (largest prominence first) are kept; the result is sorted by frequency.
pub fn extract_peaks(trace: &S21Trace, prominence: f64, max_peaks: usize) -> Result<Vec<Peak>> {
    if !(prominence >= 0.0) {
        return Err(Error::validation("prominence must be >= 0"));
    }
    let freqs = &trace.freqs;
    let y = trace.magnitudes();
    let p: Vec<f64> = y.iter().map(|v| v * v).collect();
    let mut cands: Vec<Candidate> = find_candidates(&y).into_iter().filter(|c| c.prominence >= prominence).collect();
    cands.sort_by(|a, b| b.prominence.total_cmp(&a.prominence).then(a.index.cmp(&b.index)));
    cands.truncate(max_peaks);
    cands.sort_by_key(|c| c.index);
    if cands.is_empty() {
        return Ok(Vec::new());
    }

    let widths: Vec<f64> = cands.iter().map(|c| width_estimate(freqs, &p, c)).collect();
    let window = |k: usize| (freqs[cands[k].index] - 5.0 * widths[k], freqs[cands[k].index] + 5.0 * widths[k]);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for k in 0..cands.len() {
        match groups.last_mut() {
            Some(g) if window(*g.last().expect("non-empty")).1 >= window(k).0 => g.push(k),
            _ => groups.push(vec![k]),
        }
    }

    let mut out = Vec::with_capacity(cands.len());
    for g in groups {
        let lo = g.iter().map(|&k| window(k).0).fold(f64::INFINITY, f64::min);
        let hi = g.iter().map(|&k| window(k).1).fold(f64::NEG_INFINITY, f64::max);
        let i0 = freqs.partition_point(|f| *f < lo);
        let i1 = freqs.partition_point(|f| *f <= hi);
        let raw = || {
            g.iter().map(|&k| Peak {
                f0: freqs[cands[k].index],
                linewidth: widths[k],
                amplitude: y[cands[k].index],
                prominence: cands[k].prominence,
            })
        };
        if i1 - i0 < 3 * g.len() + 2 {
            out.extend(raw());
            continue;
        }
        let seeds: Vec<Seed> = g
            .iter()
            .map(|&k| {
                let c = &cands[k];
                Seed { f0: freqs[c.index], kappa: widths[k], height: (p[c.index] - c.base * c.base).max(1e-300) }
            })
            .collect();
        let (fitted, offset) = fit_group(&freqs[i0..i1], &p[i0..i1], &seeds)?;
        for (&k, (f0, kappa, a)) in g.iter().zip(fitted) {
            // a fit that wanders outside its window is not trusted
            let (wlo, whi) = window(k);
            if f0.is_finite() && (wlo..=whi).contains(&f0) && kappa.is_finite() && kappa > 0.0 {
                out.push(Peak {
                    f0,
                    linewidth: kappa,
                    amplitude: (offset + a).max(0.0).sqrt(),
                    prominence: cands[k].prominence,
                });
            } else {
                out.push(Peak {
                    f0: freqs[cands[k].index],
                    linewidth: widths[k],
                    amplitude: y[cands[k].index],
                    prominence: cands[k].prominence,
                });
            }
        }
    }
    out.sort_by(|a, b| a.f0.total_cmp(&b.f0));
    // two candidates on one line (a flank shoulder) converge to the same center
    let mut merged: Vec<Peak> = Vec::with_capacity(out.len());
    for peak in out {
        match merged.last_mut() {
            Some(prev) if peak.f0 - prev.f0 < 0.5 * prev.linewidth.min(peak.linewidth) => {
                if peak.prominence > prev.prominence {
                    *prev = peak;
                }
            }
            _ => merged.push(peak),
        }
    }
    Ok(merged)
}
