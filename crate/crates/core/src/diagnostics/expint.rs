use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const MAX_TERMS: usize = 500;

/// Exponential integral `E1(x) = int_x^inf e^(-t) / t dt` for `x > 0`.
///
/// Power series for `x <= 1`, modified Lentz continued fraction above.
pub fn exp_integral_e1(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("E1 needs a finite x > 0, got {x}")));
    }
    if x <= 1.0 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 1..MAX_TERMS {
            let kf = k as f64;
            term *= -x / kf;
            let add = term / kf;
            sum += add;
            if add.abs() < 1e-18 * sum.abs().max(1e-300) {
                break;
            }
        }
        Ok(-EULER_GAMMA - x.ln() - sum)
    } else {
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_TERMS {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        Ok(h * (-x).exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        let cases = [
            (1e-3, 6.331539364136149),
            (0.1053605156578263, 1.7758006834235252),
            (1.0, 0.2193839343955205),
            (2.0, 0.048900510708061125),
            (10.0, 4.156968929685325e-06),
        ];
        for (x, e) in cases {
            let v = exp_integral_e1(x).unwrap();
            assert!((v - e).abs() <= 1e-13 * e.max(1.0), "x={x} got {v} want {e}");
        }
    }

    #[test]
    fn standard_upper_bound_and_monotonicity() {
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let x = 1e-3 * 1.05f64.powi(i);
            let v = exp_integral_e1(x).unwrap();
            assert!(v > 0.0 && v < prev);
            assert!(v <= (-x).exp() / x);
            prev = v;
        }
    }

    #[test]
    fn rejects_nonpositive() {
        for x in [0.0, -1.0, f64::NAN] {
            assert!(matches!(exp_integral_e1(x), Err(Error::Domain(_))));
        }
    }
}
