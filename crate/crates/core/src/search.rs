//! Derivative-free compass search on box- or circle-shaped domains.

use crate::Result;

/// How one coordinate is kept inside its domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Free,
    Clamp {
        lo: f64,
        hi: f64,
    },
    /// Periodic with the given period; values are wrapped into `[0, period)`.
    Wrap {
        period: f64,
    },
}

impl Bound {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Bound::Free => x,
            Bound::Clamp { lo, hi } => x.clamp(lo, hi),
            Bound::Wrap { period } => {
                let w = x.rem_euclid(period);
                if w >= period {
                    0.0
                } else {
                    w
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Minimizes `f` by compass search from `x0`.
///
/// Each coordinate is probed at `±step[i]`; the first improvement is taken
/// and the step kept, otherwise all steps are halved. Stops once every step
/// is below `tol`. A point is accepted only if it lowers `f` strictly, so the
/// returned value never exceeds `f(x0)`.
pub fn minimize<F>(mut f: F, x0: &[f64], step: &[f64], bounds: &[Bound], tol: f64) -> Result<SearchResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = x0.len();
    assert!(step.len() == n && bounds.len() == n, "dimension mismatch");
    let mut x: Vec<f64> = x0.iter().zip(bounds).map(|(v, b)| b.apply(*v)).collect();
    let mut best = f(&x)?;
    let mut evaluations = 1;
    let mut h = step.to_vec();
    // Guards against endless halving when tol is far below rounding.
    let mut halvings = 0;
    while h.iter().any(|s| *s >= tol) && halvings < 200 {
        let mut improved = false;
        'probe: for i in 0..n {
            for sign in [1.0, -1.0] {
                let mut trial = x.clone();
                trial[i] = bounds[i].apply(x[i] + sign * h[i]);
                if trial[i] == x[i] {
                    continue;
                }
                let v = f(&trial)?;
                evaluations += 1;
                if v < best {
                    best = v;
                    x = trial;
                    improved = true;
                    break 'probe;
                }
            }
        }
        if !improved {
            for s in h.iter_mut() {
                *s *= 0.5;
            }
            halvings += 1;
        }
    }
    Ok(SearchResult {
        x,
        value: best,
        evaluations,
    })
}

/// Maximizes `f`; see [`minimize`].
pub fn maximize<F>(mut f: F, x0: &[f64], step: &[f64], bounds: &[Bound], tol: f64) -> Result<SearchResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let r = minimize(|x| f(x).map(|v| -v), x0, step, bounds, tol)?;
    Ok(SearchResult { value: -r.value, ..r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn finds_quadratic_minimum() {
        let r = minimize(
            |x| Ok((x[0] - 0.3).powi(2) + 2.0 * (x[1] + 0.7).powi(2)),
            &[0.0, 0.0],
            &[0.25, 0.25],
            &[Bound::Free, Bound::Free],
            1e-9,
        )
        .unwrap();
        assert!((r.x[0] - 0.3).abs() < 1e-8);
        assert!((r.x[1] + 0.7).abs() < 1e-8);
    }

    #[test]
    fn clamps_at_the_boundary() {
        let r = minimize(
            |x| Ok(x[0]),
            &[0.5],
            &[0.1],
            &[Bound::Clamp { lo: -1.0, hi: 1.0 }],
            1e-10,
        )
        .unwrap();
        assert_eq!(r.x[0], -1.0);
    }

    #[test]
    fn wraps_periodic_coordinates() {
        // Minimum of -cos(x - 6.2) sits just below 2π; start at 0.1 and walk down across 0.
        let r = minimize(
            |x| Ok(-(x[0] - 6.2).cos()),
            &[0.1],
            &[0.2],
            &[Bound::Wrap { period: TAU }],
            1e-10,
        )
        .unwrap();
        assert!((r.x[0] - 6.2).abs() < 1e-8);
        assert!((0.0..TAU).contains(&r.x[0]));
    }

    #[test]
    fn stationary_start_is_a_fixed_point() {
        let f = |x: &[f64]| Ok((x[0] - 1.0).powi(2));
        let r = minimize(f, &[1.0], &[0.1], &[Bound::Free], 1e-8).unwrap();
        assert_eq!(r.x[0], 1.0);
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn maximize_negates() {
        let r = maximize(
            |x| Ok(-(x[0] - 2.0).powi(2) + 3.0),
            &[0.0],
            &[1.0],
            &[Bound::Free],
            1e-9,
        )
        .unwrap();
        assert!((r.value - 3.0).abs() < 1e-12);
    }
}
