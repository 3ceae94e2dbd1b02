//! Single-predictor logistic calibration of document scores.

use serde::{Deserialize, Serialize};

use crate::corpus::Label;

use super::ClassifierError;

/// Ridge penalty on (a, b). Keeps the maximizer finite when the classes are
/// completely separated by score.
pub const RIDGE_PENALTY: f64 = 1e-6;
pub const MAX_NEWTON_ITERATIONS: usize = 200;
/// Converged once the Newton step is this small relative to the parameters.
/// A gradient test alone stops far from the optimum on separable data, where
/// the objective is nearly flat.
pub const STEP_TOLERANCE: f64 = 1e-12;

/// Intercept `a` and slope `b` of P(C|x) = sigmoid(a + b x).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub intercept: f64,
    pub slope: f64,
}

impl LogisticParams {
    /// The uncalibrated pass-through used when only one class is present.
    pub const IDENTITY: LogisticParams = LogisticParams {
        intercept: 0.0,
        slope: 1.0,
    };

    pub fn new(intercept: f64, slope: f64) -> Self {
        Self { intercept, slope }
    }

    pub fn is_finite(&self) -> bool {
        self.intercept.is_finite() && self.slope.is_finite()
    }

    pub fn linear(&self, score: f64) -> f64 {
        self.intercept + self.slope * score
    }

    pub fn probability(&self, score: f64) -> f64 {
        sigmoid(self.linear(score))
    }
}

/// exp(z) / (1 + exp(z)) without overflow for large |z|.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(z)) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Penalized binomial log-likelihood of (score, label) points.
#[derive(Clone, Copy, Debug)]
pub struct LogisticObjective<'a> {
    points: &'a [(f64, Label)],
    penalty: f64,
}

impl<'a> LogisticObjective<'a> {
    pub fn new(points: &'a [(f64, Label)]) -> Self {
        Self {
            points,
            penalty: RIDGE_PENALTY,
        }
    }

    pub fn value(&self, p: LogisticParams) -> f64 {
        let ll: f64 = self
            .points
            .iter()
            .map(|&(x, y)| {
                let z = p.linear(x);
                match y {
                    Label::Positive => -softplus(-z),
                    Label::Negative => -softplus(z),
                }
            })
            .sum();
        ll - self.penalty * (p.intercept * p.intercept + p.slope * p.slope)
    }

    /// Gradient with respect to (intercept, slope).
    pub fn gradient(&self, p: LogisticParams) -> [f64; 2] {
        let mut g = [0.0, 0.0];
        for &(x, y) in self.points {
            // y - sigmoid(z), computed from the side that does not cancel.
            let z = p.linear(x);
            let residual = match y {
                Label::Positive => sigmoid(-z),
                Label::Negative => -sigmoid(z),
            };
            g[0] += residual;
            g[1] += residual * x;
        }
        g[0] -= 2.0 * self.penalty * p.intercept;
        g[1] -= 2.0 * self.penalty * p.slope;
        g
    }

    /// Negated Hessian, which is positive definite: [[haa, hab], [hab, hbb]].
    fn neg_hessian(&self, p: LogisticParams) -> [f64; 3] {
        let mut h = [2.0 * self.penalty, 0.0, 2.0 * self.penalty];
        for &(x, _) in self.points {
            let z = p.linear(x);
            let w = sigmoid(z) * sigmoid(-z);
            h[0] += w;
            h[1] += w * x;
            h[2] += w * x * x;
        }
        h
    }
}

/// Outcome of a Newton fit, for diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogisticFit {
    pub params: LogisticParams,
    pub iterations: usize,
    pub converged: bool,
}

/// Maximizes the ridge-penalized likelihood of `points`.
///
/// If every point carries the same label the model is not identifiable and
/// [`LogisticParams::IDENTITY`] is returned, which keeps score order intact.
pub fn fit_logistic(points: &[(f64, Label)]) -> Result<LogisticParams, ClassifierError> {
    fit_logistic_detailed(points).map(|fit| fit.params)
}

pub fn fit_logistic_detailed(points: &[(f64, Label)]) -> Result<LogisticFit, ClassifierError> {
    if points.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    if let Some(&(x, _)) = points.iter().find(|(x, _)| !x.is_finite()) {
        return Err(ClassifierError::NonFiniteScore(x));
    }
    let first = points[0].1;
    if points.iter().all(|(_, y)| *y == first) {
        return Ok(LogisticFit {
            params: LogisticParams::IDENTITY,
            iterations: 0,
            converged: true,
        });
    }

    let objective = LogisticObjective::new(points);
    let mut params = LogisticParams::new(0.0, 0.0);
    let mut value = objective.value(params);

    for iteration in 0..MAX_NEWTON_ITERATIONS {
        let g = objective.gradient(params);
        let [haa, hab, hbb] = objective.neg_hessian(params);
        let det = haa * hbb - hab * hab;
        let (da, db) = if det > 0.0 && det.is_finite() {
            ((hbb * g[0] - hab * g[1]) / det, (haa * g[1] - hab * g[0]) / det)
        } else {
            // Gradient ascent step scaled by the diagonal.
            (g[0] / haa, g[1] / hbb)
        };
        let scale = 1.0 + params.intercept.abs().max(params.slope.abs());
        if da.abs().max(db.abs()) <= STEP_TOLERANCE * scale {
            return Ok(LogisticFit {
                params,
                iterations: iteration,
                converged: true,
            });
        }

        // Backtracking: Newton on a concave objective can overshoot far from
        // the optimum, so halve until the objective does not decrease.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let candidate = LogisticParams::new(params.intercept + step * da, params.slope + step * db);
            let v = objective.value(candidate);
            if v >= value {
                accepted = candidate != params;
                params = candidate;
                value = v;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No representable ascent left along the Newton direction.
            return Ok(LogisticFit {
                params,
                iterations: iteration + 1,
                converged: da.abs().max(db.abs()) <= 1e-6 * scale,
            });
        }
    }

    Ok(LogisticFit {
        params,
        iterations: MAX_NEWTON_ITERATIONS,
        converged: false,
    })
}
