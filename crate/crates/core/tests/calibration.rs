//! Servoloop calibration against simulated devices with known transitions.

use quantnoise_core::servoloop::{calibrate_all, servoloop, IdealDevice, ServoloopConfig, SimulatedDevice};
use quantnoise_core::{normal, Error, NoiseModel, QuantizerModel};

/// Level uncertainty of one decision: `sqrt(1/4M) / f(0)`, the binomial
/// spread of `p̂` at the threshold mapped through the noise density.
fn binomial_resolution(m: usize, sigma: f64) -> f64 {
    (0.25 / m as f64).sqrt() / (normal::pdf(0.0) / sigma)
}

fn twelve_bit() -> (QuantizerModel, QuantizerModel, f64) {
    let nominal = QuantizerModel::uniform(12, -10.0, 10.0).unwrap();
    let delta = nominal.mean_step();
    let q = QuantizerModel::perturbed(&nominal, 0.25 * delta, 4096).unwrap();
    (nominal, q, delta)
}

#[test]
fn perturbed_twelve_bit_line_deviation_and_pattern() {
    let (nominal, q, delta) = twelve_bit();
    let sigma = 0.2 * delta;
    let cfg = ServoloopConfig::for_step(delta);
    let res = binomial_resolution(cfg.samples_per_step, sigma);
    let mut dev = SimulatedDevice::new(q.clone(), NoiseModel::gaussian(0.0, sigma, 5));
    let codes: Vec<usize> = (1..q.code_count()).collect();
    let cal = calibrate_all(&mut dev, &cfg, &codes, |k| nominal.transition(k)).unwrap();
    assert!(cal.failures.is_empty());
    assert!(cal.all_converged());

    let line = cal.line.unwrap();
    let bound = 0.25 * delta + cfg.tolerance + 5.0 * res;
    assert!(line.max_deviation <= bound, "{} > {bound}", line.max_deviation / delta);
    assert!((line.gain - delta).abs() < 1e-3 * delta);

    // each calibrated level reproduces the injected deviation
    for e in &cal.entries {
        let err = (e.level - q.transition(e.k)).abs();
        assert!(err <= 2.0 * cfg.tolerance + 5.0 * res, "k={}: {}", e.k, err / delta);
    }
    let levels: Vec<f64> = cal.entries.iter().map(|e| e.level).collect();
    assert!(levels.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn ideal_device_line_is_exact() {
    let q = QuantizerModel::uniform(8, -1.0, 1.0).unwrap();
    let delta = q.mean_step();
    let cfg = ServoloopConfig::for_step(delta);
    let mut dev = SimulatedDevice::new(q.clone(), NoiseModel::gaussian(0.0, 0.2 * delta, 2));
    let codes: Vec<usize> = (1..q.code_count()).collect();
    let cal = calibrate_all(&mut dev, &cfg, &codes, |k| q.transition(k)).unwrap();
    let res = binomial_resolution(cfg.samples_per_step, 0.2 * delta);
    assert!(cal.line.unwrap().max_deviation <= cfg.tolerance + 5.0 * res);
}

#[test]
fn noiseless_device_fails_for_every_code() {
    let q = QuantizerModel::uniform(6, -1.0, 1.0).unwrap();
    let cfg = ServoloopConfig::for_step(q.mean_step());
    let codes = [10, 20, 30];
    let cal = calibrate_all(&mut IdealDevice(q.clone()), &cfg, &codes, |k| q.transition(k)).unwrap();
    assert!(cal.entries.is_empty());
    assert_eq!(cal.failures.len(), 3);
    assert!(cal.failures.iter().all(|(_, e)| matches!(e, Error::Calibration(_))));
    assert!(!cal.all_converged());
}

#[test]
fn doubling_samples_shrinks_spread() {
    let q = QuantizerModel::uniform(8, -1.0, 1.0).unwrap();
    let delta = q.mean_step();
    let codes = 110..130usize;
    let spread = |m: usize| {
        let mut cfg = ServoloopConfig::for_step(delta);
        cfg.samples_per_step = m;
        let mut pooled = 0.0;
        for k in codes.clone() {
            let levels: Vec<f64> = (0..30u64)
                .map(|run| {
                    let noise = NoiseModel::gaussian(0.0, 0.2 * delta, 1_000 * m as u64 + run);
                    let mut dev = SimulatedDevice::new(q.clone(), noise).fork(k as u64);
                    servoloop(&mut dev, &cfg, k, q.transition(k) + 0.3 * delta).unwrap().level
                })
                .collect();
            let mean = levels.iter().sum::<f64>() / 30.0;
            pooled += levels.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 29.0;
        }
        pooled / codes.len() as f64
    };
    let ratio = spread(20_000) / spread(10_000);
    assert!(ratio < 0.7, "variance ratio {ratio}");
}
