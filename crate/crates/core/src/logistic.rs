//! L2-regularized logistic regression, fitted by iteratively reweighted
//! least squares (damped Newton) to high precision.
//!
//! The ridge penalty `λ‖w‖²/2` is charged once against the *total* negative
//! log-likelihood — the convention of the widespread library
//! implementations — so the optimizer minimizes the equivalent mean-scaled
//! objective `mean NLL + λ‖w‖²/(2n)`, with the intercept unpenalized. The
//! problem is convex, so the fit lands on the global optimum regardless of
//! the starting point.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub l2_lambda: f64,
}

/// Regularization strength used throughout the pipeline unless overridden.
pub const DEFAULT_L2_LAMBDA: f64 = 1.0;

const GRAD_TOL: f64 = 1e-8;
const MAX_ITER: usize = 1_000;

/// Numerically stable standard logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Stable ln(1 + e^z).
fn log1p_exp(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn check_inputs(x: &[Vec<f64>], y: &[bool]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::EmptyInput("logistic training set"));
    }
    assert_eq!(x.len(), y.len(), "one label per row");
    let width = x[0].len();
    for row in x {
        if row.len() != width {
            return Err(Error::DimensionMismatch {
                expected: width,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature);
        }
    }
    if y.iter().all(|&l| l) || y.iter().all(|&l| !l) {
        return Err(Error::SingleClass);
    }
    Ok(width)
}

/// `(Σ NLL + λ‖w‖²/2) / n`: total negative log-likelihood plus the ridge
/// term (intercept unpenalized), scaled by 1/n so tolerances are
/// independent of the training-set size.
pub fn logistic_objective(
    x: &[Vec<f64>],
    y: &[bool],
    weights: &[f64],
    intercept: f64,
    l2_lambda: f64,
) -> f64 {
    let n = x.len() as f64;
    let mut nll = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let z = dot(weights, row) + intercept;
        nll += log1p_exp(z) - if label { z } else { 0.0 };
    }
    (nll + 0.5 * l2_lambda * weights.iter().map(|w| w * w).sum::<f64>()) / n
}

/// Gradient of [`logistic_objective`] in (weights, intercept).
pub fn logistic_gradient(
    x: &[Vec<f64>],
    y: &[bool],
    weights: &[f64],
    intercept: f64,
    l2_lambda: f64,
) -> (Vec<f64>, f64) {
    let n = x.len() as f64;
    let width = weights.len();
    let mut gw = vec![0.0; width];
    let mut gb = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let p = sigmoid(dot(weights, row) + intercept);
        let r = p - if label { 1.0 } else { 0.0 };
        for (g, &v) in gw.iter_mut().zip(row) {
            *g += r * v;
        }
        gb += r;
    }
    for (g, &w) in gw.iter_mut().zip(weights) {
        *g = (*g + l2_lambda * w) / n;
    }
    (gw, gb / n)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gaussian elimination with partial pivoting; None on (near-)singularity.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in (row + 1)..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Fits from a caller-chosen starting point (the optimum does not depend on
/// it; exposed so convexity is testable).
pub fn fit_logistic_from(
    x: &[Vec<f64>],
    y: &[bool],
    l2_lambda: f64,
    init_weights: Vec<f64>,
    init_intercept: f64,
) -> Result<LogisticModel> {
    let width = check_inputs(x, y)?;
    assert!(l2_lambda >= 0.0 && l2_lambda.is_finite());
    assert_eq!(init_weights.len(), width);
    let n = x.len() as f64;
    let mut w = init_weights;
    let mut b = init_intercept;

    for _ in 0..MAX_ITER {
        let (gw, gb) = logistic_gradient(x, y, &w, b, l2_lambda);
        let grad_norm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        if grad_norm <= GRAD_TOL {
            break;
        }

        // Hessian over the augmented vector (weights, intercept).
        let m = width + 1;
        let mut h = vec![vec![0.0; m]; m];
        for row in x.iter() {
            let p = sigmoid(dot(&w, row) + b);
            let s = p * (1.0 - p);
            for i in 0..width {
                let si = s * row[i];
                for j in i..width {
                    h[i][j] += si * row[j];
                }
                h[i][width] += si;
            }
            h[width][width] += s;
        }
        for i in 0..m {
            for j in i..m {
                h[i][j] /= n;
                h[j][i] = h[i][j];
            }
        }
        for (i, hi) in h.iter_mut().enumerate().take(width) {
            hi[i] += l2_lambda / n;
        }

        let mut g = gw.clone();
        g.push(gb);
        // Newton direction; fall back to plain gradient if the Hessian is
        // effectively singular (can happen under complete saturation).
        let step = solve_linear(h, g.clone()).unwrap_or_else(|| g.clone());
        let descent: f64 = dot(&g, &step);
        let step = if descent > 0.0 { step } else { g.clone() };
        let descent = if descent > 0.0 { descent } else { dot(&g, &g) };

        // Backtracking (Armijo) damping.
        let j0 = logistic_objective(x, y, &w, b, l2_lambda);
        let mut alpha = 1.0;
        loop {
            let cand_w: Vec<f64> = w.iter().zip(&step).map(|(wi, si)| wi - alpha * si).collect();
            let cand_b = b - alpha * step[width];
            let j = logistic_objective(x, y, &cand_w, cand_b, l2_lambda);
            if j <= j0 - 1e-4 * alpha * descent || alpha < 1e-12 {
                w = cand_w;
                b = cand_b;
                break;
            }
            alpha *= 0.5;
        }
    }
    Ok(LogisticModel {
        weights: w,
        intercept: b,
        l2_lambda,
    })
}

/// Fits the regularized model from the origin.
pub fn fit_logistic(x: &[Vec<f64>], y: &[bool], l2_lambda: f64) -> Result<LogisticModel> {
    let width = check_inputs(x, y)?;
    fit_logistic_from(x, y, l2_lambda, vec![0.0; width], 0.0)
}

/// σ(w·x + b).
pub fn predict_proba(model: &LogisticModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.weights.len() {
        return Err(Error::DimensionMismatch {
            expected: model.weights.len(),
            got: x.len(),
        });
    }
    Ok(sigmoid(dot(&model.weights, x) + model.intercept))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_separable() -> (Vec<Vec<f64>>, Vec<bool>) {
        let x = vec![
            vec![2.0, 1.0],
            vec![1.5, 2.0],
            vec![2.5, 0.5],
            vec![1.0, 1.5],
            vec![-2.0, -1.0],
            vec![-1.5, -2.0],
            vec![-2.5, -0.5],
            vec![-1.0, -1.5],
        ];
        let y = vec![true, true, true, true, false, false, false, false];
        (x, y)
    }

    #[test]
    fn predict_basic_values() {
        let m = LogisticModel {
            weights: vec![0.0, 0.0, 0.0],
            intercept: 0.0,
            l2_lambda: 0.0,
        };
        assert_eq!(predict_proba(&m, &[1.0, 2.0, 3.0]).unwrap(), 0.5);

        let saturated = LogisticModel {
            weights: vec![0.0, 0.0, 0.0],
            intercept: 20.0,
            l2_lambda: 0.0,
        };
        assert!(predict_proba(&saturated, &[0.0, 0.0, 0.0]).unwrap() > 0.999999);

        let unit = LogisticModel {
            weights: vec![1.0, 0.0, 0.0],
            intercept: 0.0,
            l2_lambda: 0.0,
        };
        let p = predict_proba(&unit, &[3.0f64.ln(), 5.0, -2.0]).unwrap();
        assert!((p - 0.75).abs() < 1e-12);
    }

    #[test]
    fn predict_rejects_wrong_dimension() {
        let m = LogisticModel {
            weights: vec![1.0, 2.0],
            intercept: 0.0,
            l2_lambda: 0.0,
        };
        assert!(matches!(
            predict_proba(&m, &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn fit_rejects_degenerate_inputs() {
        assert!(matches!(
            fit_logistic(&[], &[], 1.0),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            fit_logistic(&[vec![1.0], vec![2.0]], &[true, true], 1.0),
            Err(Error::SingleClass)
        ));
        assert!(matches!(
            fit_logistic(&[vec![1.0], vec![f64::NAN]], &[true, false], 1.0),
            Err(Error::NonFiniteFeature)
        ));
    }

    #[test]
    fn label_flip_symmetry_gives_zero_intercept() {
        // Class 1 at x, class 0 at −x: the optimum is antisymmetric, so the
        // intercept must vanish.
        let (x, y) = toy_separable();
        let model = fit_logistic(&x, &y, 1.0).unwrap();
        assert!(model.intercept.abs() < 1e-6, "intercept {}", model.intercept);
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let n = rng.gen_range(3..12);
            let d = rng.gen_range(1..4);
            let x: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let mut y: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
            y[0] = true;
            y[1] = false;
            let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let b: f64 = rng.gen_range(-1.0..1.0);
            let lambda = 0.7;

            let (gw, gb) = logistic_gradient(&x, &y, &w, b, lambda);
            let eps = 1e-6;
            for j in 0..d {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[j] += eps;
                wm[j] -= eps;
                let fd = (logistic_objective(&x, &y, &wp, b, lambda)
                    - logistic_objective(&x, &y, &wm, b, lambda))
                    / (2.0 * eps);
                let rel = (gw[j] - fd).abs() / fd.abs().max(1e-8);
                assert!(rel < 1e-5, "weight {j}: analytic {} vs fd {fd}", gw[j]);
            }
            let fd_b = (logistic_objective(&x, &y, &w, b + eps, lambda)
                - logistic_objective(&x, &y, &w, b - eps, lambda))
                / (2.0 * eps);
            let rel = (gb - fd_b).abs() / fd_b.abs().max(1e-8);
            assert!(rel < 1e-5, "intercept: analytic {gb} vs fd {fd_b}");
        }
    }

    /// Bare-bones backtracking gradient descent on the same objective — an
    /// independent route to the optimum.
    fn gradient_descent_oracle(
        x: &[Vec<f64>],
        y: &[bool],
        lambda: f64,
    ) -> (Vec<f64>, f64) {
        let d = x[0].len();
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        for _ in 0..200_000 {
            let (gw, gb) = logistic_gradient(x, y, &w, b, lambda);
            let norm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
            if norm < 1e-10 {
                break;
            }
            let j0 = logistic_objective(x, y, &w, b, lambda);
            let mut step = 1.0;
            loop {
                let cw: Vec<f64> = w.iter().zip(&gw).map(|(wi, gi)| wi - step * gi).collect();
                let cb = b - step * gb;
                if logistic_objective(x, y, &cw, cb, lambda) < j0 || step < 1e-14 {
                    w = cw;
                    b = cb;
                    break;
                }
                step *= 0.5;
            }
        }
        (w, b)
    }

    #[test]
    fn irls_matches_gradient_descent_on_toy_problem() {
        let (x, y) = toy_separable();
        let model = fit_logistic(&x, &y, 1.0).unwrap();
        let (ow, ob) = gradient_descent_oracle(&x, &y, 1.0);
        for row in &x {
            let p_irls = predict_proba(&model, row).unwrap();
            let p_gd = sigmoid(dot(&ow, row) + ob);
            assert!(
                (p_irls - p_gd).abs() < 1e-4,
                "probabilities diverge: {p_irls} vs {p_gd}"
            );
        }
    }

    #[test]
    fn convexity_random_starts_agree() {
        let (x, y) = toy_separable();
        let reference = fit_logistic(&x, &y, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let init: Vec<f64> = (0..2).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let b0 = rng.gen_range(-5.0..5.0);
            let m = fit_logistic_from(&x, &y, 1.0, init, b0).unwrap();
            for (a, b) in m.weights.iter().zip(&reference.weights) {
                assert!((a - b).abs() < 1e-5);
            }
            assert!((m.intercept - reference.intercept).abs() < 1e-5);
        }
    }

    #[test]
    fn refit_is_deterministic() {
        let (x, y) = toy_separable();
        let a = fit_logistic(&x, &y, 1.0).unwrap();
        let b = fit_logistic(&x, &y, 1.0).unwrap();
        assert_eq!(a, b);
    }
}
