//! Gamma function via the Lanczos approximation (g = 7, 9 coefficients).

use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Γ(x) for real x, using reflection for x < 1/2.
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS_COEF[0];
        for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + LANCZOS_G + 0.5;
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
    }
}

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS_COEF[0];
        for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + LANCZOS_G + 0.5;
        0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

/// Surface area of the unit sphere S^{d-1}, 2π^{d/2}/Γ(d/2).
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

/// Volume of the unit ball in ℝ^d, π^{d/2}/Γ(1+d/2).
pub fn ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    PI.powf(h) / gamma(1.0 + h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn integer_and_half_integer_values() {
        let mut fact = 1.0;
        for k in 1..15 {
            assert!(rel(gamma(k as f64), fact) < 1e-13, "Γ({k})");
            fact *= k as f64;
        }
        let sqrt_pi = PI.sqrt();
        assert!(rel(gamma(0.5), sqrt_pi) < 1e-14);
        assert!(rel(gamma(1.5), sqrt_pi / 2.0) < 1e-14);
        assert!(rel(gamma(3.5), 15.0 * sqrt_pi / 8.0) < 1e-14);
    }

    #[test]
    fn quarter_values() {
        // Γ(1/4) = 3.6256099082219083119...
        assert!(rel(gamma(0.25), 3.625_609_908_221_908_3) < 1e-14);
        assert!(rel(2.0 * gamma(1.25), 1.812_804_954_110_954) < 1e-14);
        assert!(rel(gamma(2.25), 1.25 * gamma(1.25)) < 1e-14);
    }

    #[test]
    fn recurrence_on_needed_range() {
        let mut x = 1.0;
        while x < 8.0 {
            assert!(rel(gamma(x + 1.0), x * gamma(x)) < 1e-13, "x = {x}");
            assert!((ln_gamma(x) - gamma(x).ln()).abs() < 1e-13);
            x += 0.0625;
        }
    }

    #[test]
    fn areas_and_volumes() {
        assert!(rel(sphere_area(2), 2.0 * PI) < 1e-14);
        assert!(rel(sphere_area(3), 4.0 * PI) < 1e-14);
        assert!(rel(ball_volume(2), PI) < 1e-14);
        assert!(rel(ball_volume(3), 4.0 * PI / 3.0) < 1e-14);
        assert!(rel(ball_volume(4), PI * PI / 2.0) < 1e-14);
        assert!(rel(sphere_area(1), 2.0) < 1e-14);
    }
}
