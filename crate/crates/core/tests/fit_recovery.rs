//! Parameter recovery from synthetic eigenfrequency lists.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sshchain::estimation::{
    fit_circuit_params, model_frequencies, Bounds, Family, FitOptions, FitProblem, FreeMask, NelderMeadOptions,
};
use sshchain::model::map_circuit_to_tb;
use sshchain::CircuitSpec;

fn options(multistart: usize, seed: u64) -> FitOptions {
    FitOptions { simplex: NelderMeadOptions { tol_f: 1e-12, ..Default::default() }, multistart, seed, ..Default::default() }
}

/// Disordered truth near the reference device: C₀, L₀ ±1%, C_w ±5%, L_v ±`lv_spread`.
fn random_truth(rng: &mut ChaCha8Rng, lv_spread: f64) -> CircuitSpec {
    let dev = CircuitSpec::reference_device();
    let mut jitter = |x: f64, d: f64| x * (1.0 + rng.random_range(-d..d));
    let c0 = dev.c0().iter().map(|&x| jitter(x, 0.01)).collect();
    let l0 = dev.l0().iter().map(|&x| jitter(x, 0.01)).collect();
    let cw = dev.cw().iter().map(|&x| jitter(x, 0.05)).collect();
    let lv = (0..dev.n_cells()).map(|_| jitter(22.0, lv_spread)).collect();
    CircuitSpec::new(dev.n_cells(), c0, l0, lv, cw).unwrap()
}

#[test]
fn disordered_truths_are_recovered() {
    // the 10 frequencies fix the L_v and inner C_w entries; site and outer
    // coupling values are held at their true values
    for lv_spread in [0.1, 0.3] {
        let mut recovered = 0;
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let truth = random_truth(&mut rng, lv_spread);
            let n = truth.n_cells();
            let mut mask = FreeMask::families(&truth, &[Family::Lv, Family::Cw]);
            mask.cw = Some((0..=n).map(|k| k != 0 && k != n).collect());
            let mut jitter = |x: f64| x * (1.0 + rng.random_range(-0.05..0.05));
            let lv = truth.lv().iter().map(|&x| jitter(x)).collect();
            let cw = truth.cw().iter().enumerate().map(|(k, &x)| if k == 0 || k == n { x } else { jitter(x) }).collect();
            let start = CircuitSpec::new(n, truth.c0().to_vec(), truth.l0().to_vec(), lv, cw).unwrap();
            let problem =
                FitProblem { target_freqs: model_frequencies(&truth).unwrap(), start, mask, bounds: Bounds::default() };
            let fit = fit_circuit_params(&problem, &options(16, seed)).unwrap();
            let err = fit
                .best
                .lv()
                .iter()
                .zip(truth.lv())
                .chain(fit.best.cw().iter().zip(truth.cw()))
                .map(|(a, b)| (a / b - 1.0).abs())
                .fold(0.0, f64::max);
            if fit.residual_rms_khz < 1.0 && err < 1e-3 {
                recovered += 1;
            }
        }
        assert!(recovered >= 18, "±{lv_spread}: {recovered}/20");
    }
}

#[test]
fn dimer_limit_frequency_list() {
    // band centres 5.70/6.40 GHz and a mid-gap pair at 6.04 GHz
    let targets = vec![5.70, 5.70, 5.70, 5.70, 6.04, 6.04, 6.40, 6.40, 6.40, 6.40];
    let start = CircuitSpec::reference_device().with_lv(60.0, None).unwrap();
    let mut mask = FreeMask::families(&start, &[Family::Lv, Family::Cw]);
    mask.cw = Some((0..=5).map(|k| k != 0 && k != 5).collect());
    let problem = FitProblem { target_freqs: targets, start, mask, bounds: Bounds::default() };
    let fit = fit_circuit_params(&problem, &options(1, 0)).unwrap();
    let chain = map_circuit_to_tb(&fit.best).unwrap();
    let mean_w = chain.w().iter().sum::<f64>() / chain.w().len() as f64;
    assert!((chain.mean_eps() - 6.04).abs() < 0.01, "ε = {}", chain.mean_eps());
    assert!((mean_w - 0.35).abs() < 0.02, "w = {mean_w}");
    // the list is not mirror-symmetric about 6.04 GHz, so a chiral spectrum
    // {ε−w ×4, ε ×2, ε+w ×4} cannot match it; least squares gives w = 0.35,
    // ε = (4·5.70 + 2·6.04 + 4·6.40)/10 and this RMS floor
    let (w, eps) = (0.35, (4.0 * 5.70 + 2.0 * 6.04 + 4.0 * 6.40) / 10.0);
    let ss = 4.0 * (eps - w - 5.70_f64).powi(2) + 2.0 * (eps - 6.04_f64).powi(2) + 4.0 * (eps + w - 6.40_f64).powi(2);
    let floor_khz = (ss / 10.0).sqrt() * 1e6;
    assert!(fit.residual_rms_khz >= floor_khz - 1e-6);
    assert!(fit.residual_rms_khz < 1.5 * floor_khz, "{} kHz vs floor {floor_khz} kHz", fit.residual_rms_khz);
}
