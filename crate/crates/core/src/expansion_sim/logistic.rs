//! Maximum-likelihood logistic regression by fixed-step gradient ascent.
//!
//! The objective is the mean log-likelihood
//! `l(b) = 1/n * sum(y_i * eta_i - ln(1 + exp(eta_i)))` with
//! `eta_i = b_0 + sum_j b_j x_ij`; its gradient is `1/n * sum((y_i - p_i) x_i)`.
//! Ascent runs on internally standardized columns, and convergence is judged
//! on the gradient in the caller's original coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn linear(beta: &[f64], row: &[f64]) -> f64 {
    beta[0] + row.iter().zip(&beta[1..]).map(|(x, b)| x * b).sum::<f64>()
}

/// Mean log-likelihood; `beta[0]` is the intercept.
pub fn log_likelihood(beta: &[f64], rows: &[Vec<f64>], y: &[bool]) -> f64 {
    let n = rows.len() as f64;
    rows.iter()
        .zip(y)
        .map(|(row, &yi)| {
            let eta = linear(beta, row);
            if yi {
                eta - softplus(eta)
            } else {
                -softplus(eta)
            }
        })
        .sum::<f64>()
        / n
}

/// Gradient of [`log_likelihood`].
pub fn log_likelihood_gradient(beta: &[f64], rows: &[Vec<f64>], y: &[bool]) -> Vec<f64> {
    let n = rows.len() as f64;
    let mut g = vec![0.0; beta.len()];
    for (row, &yi) in rows.iter().zip(y) {
        let r = f64::from(u8::from(yi)) - sigmoid(linear(beta, row));
        g[0] += r;
        for (gj, x) in g[1..].iter_mut().zip(row) {
            *gj += r * x;
        }
    }
    g.iter_mut().for_each(|v| *v /= n);
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Stop once the gradient's Euclidean norm falls to this value.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Coefficient magnitude cap applied when the classes are separable.
    pub coefficient_limit: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tolerance: 1e-8,
            max_iterations: 500_000,
            coefficient_limit: 25.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    /// Intercept first, then one coefficient per feature column.
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub step: f64,
    pub converged: bool,
    /// The data were perfectly separable and coefficients were scaled to the limit.
    pub separated: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest eigenvalue of `Z'Z / n` by power iteration.
fn gram_spectral_radius(z: &[Vec<f64>]) -> f64 {
    let k = z[0].len();
    let n = z.len() as f64;
    let mut gram = vec![vec![0.0; k]; k];
    for row in z {
        for a in 0..k {
            for b in a..k {
                gram[a][b] += row[a] * row[b];
            }
        }
    }
    for a in 0..k {
        for b in a..k {
            gram[a][b] /= n;
            gram[b][a] = gram[a][b];
        }
    }
    let mut v = vec![1.0 / (k as f64).sqrt(); k];
    let mut lambda = 0.0;
    for _ in 0..200 {
        let w: Vec<f64> = (0..k).map(|a| (0..k).map(|b| gram[a][b] * v[b]).sum()).collect();
        let nw = norm(&w);
        if nw == 0.0 {
            break;
        }
        let next = nw;
        v = w.into_iter().map(|x| x / nw).collect();
        if (next - lambda).abs() <= 1e-12 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // Power iteration approaches from below; pad so the step stays stable.
    lambda * 1.01
}

/// Fits `P(y) = sigmoid(b_0 + b . x)`.
pub fn fit_logistic(rows: &[Vec<f64>], y: &[bool], options: &FitOptions) -> Result<LogisticFit> {
    if rows.is_empty() || rows.len() != y.len() {
        return Err(Error::LengthMismatch(format!(
            "{} rows, {} labels",
            rows.len(),
            y.len()
        )));
    }
    let p = rows[0].len();
    if rows.iter().any(|r| r.len() != p) {
        return Err(Error::LengthMismatch("ragged feature rows".into()));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Calibration("non-finite feature value".into()));
    }
    let n = rows.len() as f64;

    let means: Vec<f64> = (0..p).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let scales: Vec<f64> = (0..p)
        .map(|j| (rows.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    // Constant columns are absorbed by the intercept and keep a zero coefficient.
    let active: Vec<usize> = (0..p)
        .filter(|&j| scales[j] > 1e-12 * means[j].abs().max(1.0))
        .collect();
    let z: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            std::iter::once(1.0)
                .chain(active.iter().map(|&j| (r[j] - means[j]) / scales[j]))
                .collect()
        })
        .collect();
    let k = z[0].len();
    let step = 4.0 / gram_spectral_radius(&z);

    let to_original = |theta: &[f64]| -> Vec<f64> {
        let mut beta = vec![0.0; p + 1];
        beta[0] = theta[0];
        for (a, &j) in active.iter().enumerate() {
            beta[j + 1] = theta[a + 1] / scales[j];
            beta[0] -= theta[a + 1] * means[j] / scales[j];
        }
        beta
    };

    let rate = y.iter().filter(|v| **v).count() as f64 / n;
    let mut theta = vec![0.0; k];
    if rate > 0.0 && rate < 1.0 {
        theta[0] = (rate / (1.0 - rate)).ln();
    }
    let yf: Vec<f64> = y.iter().map(|&v| f64::from(u8::from(v))).collect();
    let mut iterations = 0;
    loop {
        let mut g = vec![0.0; k];
        let mut separated = true;
        for (row, &yi) in z.iter().zip(&yf) {
            let eta: f64 = row.iter().zip(&theta).map(|(a, b)| a * b).sum();
            separated &= (2.0 * yi - 1.0) * eta > 0.0;
            let r = yi - sigmoid(eta);
            for (gj, x) in g.iter_mut().zip(row) {
                *gj += r * x;
            }
        }
        g.iter_mut().for_each(|v| *v /= n);

        // Chain rule back to the caller's coordinates.
        let mut g_orig = vec![0.0; p + 1];
        g_orig[0] = g[0];
        for j in 0..p {
            g_orig[j + 1] = means[j] * g[0];
        }
        for (a, &j) in active.iter().enumerate() {
            g_orig[j + 1] += scales[j] * g[a + 1];
        }
        let gnorm = norm(&g_orig);

        if gnorm <= options.tolerance {
            return Ok(LogisticFit {
                coefficients: to_original(&theta),
                iterations,
                gradient_norm: gnorm,
                step,
                converged: true,
                separated: false,
            });
        }
        if separated && iterations > 0 {
            let mut beta = to_original(&theta);
            let biggest = beta.iter().fold(0.0f64, |m, b| m.max(b.abs()));
            if biggest > 0.0 {
                let s = options.coefficient_limit / biggest;
                beta.iter_mut().for_each(|b| *b *= s);
            }
            log::warn!("classes are perfectly separable; coefficients scaled to |coef| <= {}", options.coefficient_limit);
            return Ok(LogisticFit {
                coefficients: beta,
                iterations,
                gradient_norm: gnorm,
                step,
                converged: false,
                separated: true,
            });
        }
        if iterations >= options.max_iterations {
            log::warn!("logistic fit stopped after {iterations} iterations, gradient norm {gnorm:e}");
            return Ok(LogisticFit {
                coefficients: to_original(&theta),
                iterations,
                gradient_norm: gnorm,
                step,
                converged: false,
                separated: false,
            });
        }
        for (t, gj) in theta.iter_mut().zip(&g) {
            *t += step * gj;
        }
        iterations += 1;
    }
}
