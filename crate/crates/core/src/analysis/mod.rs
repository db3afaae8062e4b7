//! Analysis of the antenna characterization data: NV ODMR level shifts,
//! decaying-sine Rabi fits, and unit conversions.

pub mod odmr;
pub mod rabi;
pub mod units;

pub use odmr::{fit_odmr_series, odmr_transitions, read_odmr_csv, write_odmr_csv, NvModel, OdmrFit, OdmrPoint};
pub use rabi::{fit_decaying_sine, rabi_vs_current, read_rabi_csv, write_rabi_csv, RabiFit, RabiLine, RabiTrace};
pub use units::{larmor_frequency, rabi_to_field, Species};

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt, TerminationReason};
use nalgebra::{storage::Owned, DMatrix, DVector, Dyn};

use crate::{Error, Result};

/// Residuals and Jacobian at a parameter vector, `None` if not finite.
type Model<'a> = dyn Fn(&DVector<f64>) -> Option<(DVector<f64>, DMatrix<f64>)> + 'a;

struct Problem<'a> {
    model: &'a Model<'a>,
    params: DVector<f64>,
    cache: Option<(DVector<f64>, DMatrix<f64>)>,
}

impl LeastSquaresProblem<f64, Dyn, Dyn> for Problem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.params.copy_from(x);
        self.cache = (self.model)(x);
    }

    fn params(&self) -> DVector<f64> {
        self.params.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        self.cache.as_ref().map(|c| c.0.clone())
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        self.cache.as_ref().map(|c| c.1.clone())
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    pub params: DVector<f64>,
    pub residuals: DVector<f64>,
    /// `s² (JᵀJ)⁻¹` with `s² = SSR/(m − n)`; `None` when singular or `m ≤ n`.
    pub covariance: Option<DMatrix<f64>>,
}

impl Solution {
    pub fn stderr(&self, i: usize) -> Option<f64> {
        self.covariance.as_ref().map(|c| c[(i, i)].max(0.0).sqrt())
    }

    pub fn rms(&self) -> f64 {
        (self.residuals.norm_squared() / self.residuals.len() as f64).sqrt()
    }
}

pub(crate) fn least_squares(model: &Model<'_>, p0: DVector<f64>) -> Result<Solution> {
    let problem = Problem {
        model,
        cache: model(&p0),
        params: p0,
    };
    if problem.cache.is_none() {
        return Err(Error::Fit("model is not finite at the initial guess".into()));
    }
    let (problem, report) = LevenbergMarquardt::new()
        .with_tol(1e-14)
        .with_patience(400)
        .minimize(problem);
    // Hitting machine precision on a noiseless fit is success too.
    let ok = report.termination.was_successful()
        || matches!(report.termination, TerminationReason::NoImprovementPossible(_));
    if !ok {
        return Err(Error::Fit(format!("least squares stopped: {:?}", report.termination)));
    }
    let (residuals, jac) = problem
        .cache
        .ok_or_else(|| Error::Fit("model is not finite at the solution".into()))?;
    let (m, n) = jac.shape();
    let covariance = if m > n {
        let s2 = residuals.norm_squared() / (m - n) as f64;
        (jac.transpose() * &jac).try_inverse().map(|inv| inv * s2)
    } else {
        None
    };
    Ok(Solution {
        params: problem.params,
        residuals,
        covariance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_fit_through_the_wrapper() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let ys = [1.1, 2.9, 5.2, 6.8, 9.1];
        let model = |p: &DVector<f64>| {
            let r = DVector::from_iterator(5, xs.iter().zip(&ys).map(|(x, y)| p[0] * x + p[1] - y));
            let j = DMatrix::from_fn(5, 2, |i, k| if k == 0 { xs[i] } else { 1.0 });
            Some((r, j))
        };
        let sol = least_squares(&model, DVector::from_vec(vec![0.0, 0.0])).unwrap();
        // Closed-form ordinary least squares.
        let (mx, my) = (2.0, 5.02);
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        assert!((sol.params[0] - sxy / sxx).abs() < 1e-10);
        assert!((sol.params[1] - (my - sxy / sxx * mx)).abs() < 1e-10);
        let s2 = sol.residuals.norm_squared() / 3.0;
        assert!((sol.stderr(0).unwrap() - (s2 / sxx).sqrt()).abs() < 1e-10);
    }
}
