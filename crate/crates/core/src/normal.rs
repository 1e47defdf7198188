//! Standard normal distribution helpers.

use core::f64::consts::{FRAC_1_SQRT_2, PI};

/// `Φ(z)`, computed through `erfc` so both tails keep full relative accuracy.
#[inline]
pub fn cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// `φ(z)`.
#[inline]
pub fn pdf(z: f64) -> f64 {
    libm::exp(-0.5 * z * z) / libm::sqrt(2.0 * PI)
}

/// Location/scale pair of a Gaussian noise model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianParams {
    pub mean: f64,
    pub sigma: f64,
}

impl GaussianParams {
    pub fn cdf(&self, x: f64) -> f64 {
        cdf((x - self.mean) / self.sigma)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        pdf((x - self.mean) / self.sigma) / self.sigma
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // composite Simpson on [0, z] with 4000 panels per unit length
    fn simpson_cdf(z: f64) -> f64 {
        let panels = ((z.abs() * 4000.0) as usize).max(2) & !1;
        let h = z / panels as f64;
        let mut acc = pdf(0.0) + pdf(z);
        for i in 1..panels {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * pdf(i as f64 * h);
        }
        0.5 + acc * h / 3.0
    }

    #[test]
    fn matches_quadrature_on_range() {
        let mut z = -8.0;
        while z <= 8.0 {
            let err = (cdf(z) - simpson_cdf(z)).abs();
            assert!(err <= 1e-12, "z = {z}: err {err}");
            z += 0.37;
        }
        assert!((cdf(8.0) - simpson_cdf(8.0)).abs() <= 1e-12);
    }

    #[test]
    fn reference_values() {
        assert!((cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((cdf(-8.0) - 6.220_960_574_271_784e-16).abs() < 1e-27);
        assert!((pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-16);
    }

    #[test]
    fn symmetry() {
        for i in 0..100 {
            let z = i as f64 * 0.08;
            assert!((cdf(z) + cdf(-z) - 1.0).abs() < 1e-15);
        }
    }
}
