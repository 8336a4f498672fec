//! Error-estimating numerical differentiation.
//!
//! Central-difference stencils refined by a four-level Richardson tableau.
//! Every derivative is returned together with an error estimate: the
//! last-column tableau difference plus a rounding floor. Downstream zero
//! finders use these estimates as their tolerances, so the estimates are
//! deliberately conservative.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A numeric value paired with a non-negative error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueWithError {
    pub value: f64,
    pub error: f64,
}

impl ValueWithError {
    /// Whether zero lies within `n_sigma` error bars of the value.
    pub fn consistent_with_zero(&self, n_sigma: f64) -> bool {
        self.value.abs() <= n_sigma * self.error
    }
}

/// Highest derivative order the engine supports.
pub const MAX_ORDER: usize = 5;

/// Rounding amplification of each central stencil (sum of |weights| over the
/// step power).
const ROUND_AMP: [f64; MAX_ORDER + 1] = [0.0, 1.0, 4.0, 3.0, 16.0, 20.0];

/// Per-order widening of the base step; higher orders divide by higher powers
/// of `h` and need coarser sampling to stay above rounding noise.
const BASE_MULT: [f64; MAX_ORDER + 1] = [0.0, 1.0, 4.0, 8.0, 16.0, 24.0];

/// Relative accuracy model for one evaluation of the differentiated function.
const EPS_F: f64 = 1e-13;

/// `k`-th derivative of `f` at `x` with an error estimate.
///
/// The base step is `max(1e-3, 1e-3·|x|)` scaled per order; the tableau runs
/// the stencil at steps `8h, 4h, 2h, h` (largest first). Evaluation failures
/// inside the stencil surface as [`Error::DerivativeUnavailable`].
pub fn derivative<F>(f: &mut F, x: f64, k: usize) -> Result<ValueWithError>
where
    F: FnMut(f64) -> Result<f64>,
{
    assert!((1..=MAX_ORDER).contains(&k), "order {k} unsupported");
    let mut cache: HashMap<u64, f64> = HashMap::new();
    derivative_cached(f, &mut cache, x, k)
}

/// Derivatives of orders `1..=max_order` sharing one evaluation cache.
pub fn derivatives_up_to<F>(f: &mut F, x: f64, max_order: usize) -> Result<Vec<ValueWithError>>
where
    F: FnMut(f64) -> Result<f64>,
{
    assert!((1..=MAX_ORDER).contains(&max_order));
    let mut cache: HashMap<u64, f64> = HashMap::new();
    (1..=max_order)
        .map(|k| derivative_cached(f, &mut cache, x, k))
        .collect()
}

fn derivative_cached<F>(
    f: &mut F,
    cache: &mut HashMap<u64, f64>,
    x: f64,
    k: usize,
) -> Result<ValueWithError>
where
    F: FnMut(f64) -> Result<f64>,
{
    let h0 = x.abs().max(1.0) * 1e-3 * BASE_MULT[k];
    let mut eval = |t: f64| -> Result<f64> {
        if let Some(&y) = cache.get(&t.to_bits()) {
            return Ok(y);
        }
        let y = f(t).map_err(|e| Error::DerivativeUnavailable {
            v: x,
            reason: format!("evaluation at {t} failed: {e}"),
        })?;
        cache.insert(t.to_bits(), y);
        Ok(y)
    };

    let mut samples = [0.0; 4];
    for (i, s) in samples.iter_mut().enumerate() {
        let h = h0 * f64::powi(2.0, 3 - i as i32);
        *s = stencil(&mut eval, x, h, k)?;
    }
    let (value, trunc_err) = richardson(&samples);
    let f0 = eval(x).unwrap_or(1.0);
    let round_err = ROUND_AMP[k] * EPS_F * f0.abs().max(1.0) / h0.powi(k as i32);
    Ok(ValueWithError {
        value,
        error: trunc_err + round_err,
    })
}

fn stencil<F>(eval: &mut F, x: f64, h: f64, k: usize) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let v = match k {
        1 => (eval(x + h)? - eval(x - h)?) / (2.0 * h),
        2 => (eval(x + h)? - 2.0 * eval(x)? + eval(x - h)?) / (h * h),
        3 => {
            (eval(x + 2.0 * h)? - 2.0 * eval(x + h)? + 2.0 * eval(x - h)? - eval(x - 2.0 * h)?)
                / (2.0 * h.powi(3))
        }
        4 => {
            (eval(x + 2.0 * h)? - 4.0 * eval(x + h)? + 6.0 * eval(x)? - 4.0 * eval(x - h)?
                + eval(x - 2.0 * h)?)
                / h.powi(4)
        }
        5 => {
            (eval(x + 3.0 * h)? - 4.0 * eval(x + 2.0 * h)? + 5.0 * eval(x + h)?
                - 5.0 * eval(x - h)?
                + 4.0 * eval(x - 2.0 * h)?
                - eval(x - 3.0 * h)?)
                / (2.0 * h.powi(5))
        }
        _ => unreachable!(),
    };
    Ok(v)
}

/// Classic Richardson tableau for O(h²) stencils sampled largest-step first.
/// Returns the most-refined entry and the last-column difference.
fn richardson(samples: &[f64; 4]) -> (f64, f64) {
    let m = samples.len();
    let mut tab = [[0.0; 4]; 4];
    for i in 0..m {
        tab[i][0] = samples[i];
    }
    for j in 1..m {
        let w = f64::powi(4.0, j as i32);
        for i in j..m {
            tab[i][j] = (w * tab[i][j - 1] - tab[i - 1][j - 1]) / (w - 1.0);
        }
    }
    (
        tab[m - 1][m - 1],
        (tab[m - 1][m - 1] - tab[m - 1][m - 2]).abs(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(k: usize, x: f64, f: impl Fn(f64) -> f64, exact: f64) {
        let mut g = |t: f64| Ok(f(t));
        let d = derivative(&mut g, x, k).unwrap();
        assert!(
            (d.value - exact).abs() <= d.error.max(1e-14),
            "order {k} at {x}: got {} ± {}, exact {exact}",
            d.value,
            d.error
        );
    }

    #[test]
    fn polynomial_derivatives_exact_within_error() {
        let f = |t: f64| 2.0 + 3.0 * t - 1.5 * t.powi(2) + 0.25 * t.powi(3);
        check(1, 0.7, f, 3.0 - 3.0 * 0.7 + 0.75 * 0.49);
        check(2, 0.7, f, -3.0 + 1.5 * 0.7);
        check(3, 0.7, f, 1.5);
        check(4, 0.7, f, 0.0);
    }

    #[test]
    fn transcendental_derivatives_within_estimates() {
        for k in 1..=5 {
            let exact = match k % 4 {
                1 => (2.0f64).cos(),
                2 => -(2.0f64).sin(),
                3 => -(2.0f64).cos(),
                _ => (2.0f64).sin(),
            };
            check(k, 2.0, |t| t.sin(), exact);
        }
    }

    #[test]
    fn error_estimates_are_positive_and_finite() {
        let mut g = |t: f64| Ok((t * t + 1.0).ln());
        for k in 1..=4 {
            let d = derivative(&mut g, 1.3, k).unwrap();
            assert!(d.error.is_finite() && d.error > 0.0);
        }
    }

    #[test]
    fn shared_cache_matches_individual_calls() {
        let f = |t: f64| (0.3 * t).exp() * t.cos();
        let mut g = |t: f64| Ok(f(t));
        let all = derivatives_up_to(&mut g, 0.9, 4).unwrap();
        for (i, d) in all.iter().enumerate() {
            let mut g2 = |t: f64| Ok(f(t));
            let single = derivative(&mut g2, 0.9, i + 1).unwrap();
            assert_eq!(d.value, single.value);
            assert_eq!(d.error, single.error);
        }
    }

    #[test]
    fn failure_inside_stencil_is_reported() {
        let mut g = |t: f64| {
            if t > 1.0 {
                Err(crate::Error::NotFound("past the wall".into()))
            } else {
                Ok(t)
            }
        };
        let err = derivative(&mut g, 1.0, 1).unwrap_err();
        assert!(matches!(err, Error::DerivativeUnavailable { .. }));
    }

    #[test]
    fn consistent_with_zero_helper() {
        let v = ValueWithError {
            value: 2.0e-9,
            error: 1.0e-9,
        };
        assert!(v.consistent_with_zero(3.0));
        assert!(!v.consistent_with_zero(1.0));
    }
}
