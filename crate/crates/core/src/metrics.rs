//! Estimation and selection metrics against a known truth.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Laplacian;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl SelectionOutcome {
    /// Compares the nonzero pattern of `estimate` with that of `truth`.
    pub fn from_supports(estimate: &DVector<f64>, truth: &DVector<f64>) -> Result<Self> {
        check_len(estimate, truth)?;
        let mut out = Self::default();
        for (e, t) in estimate.iter().zip(truth.iter()) {
            match (*e != 0.0, *t != 0.0) {
                (true, true) => out.tp += 1,
                (true, false) => out.fp += 1,
                (false, true) => out.fn_ += 1,
                (false, false) => out.tn += 1,
            }
        }
        Ok(out)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn check_len(a: &DVector<f64>, b: &DVector<f64>) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "vectors have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Per-coordinate mean squared error `p⁻¹ Σ (β̂ⱼ − β⁰ⱼ)²`.
pub fn mse(beta_hat: &DVector<f64>, beta0: &DVector<f64>) -> Result<f64> {
    check_len(beta_hat, beta0)?;
    if beta0.is_empty() {
        return Ok(0.0);
    }
    Ok((beta_hat - beta0).norm_squared() / beta0.len() as f64)
}

/// Matthews correlation coefficient; 0 when any marginal count is zero.
pub fn mcc(o: &SelectionOutcome) -> f64 {
    let (tp, fp, tn, fn_) = (o.tp as f64, o.fp as f64, o.tn as f64, o.fn_ as f64);
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom == 0.0 {
        return 0.0;
    }
    ((tp * tn - fp * fn_) / denom.sqrt()).clamp(-1.0, 1.0)
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// True iff every coordinate has the same sign (with `sign(0) = 0`).
pub fn sign_recovery(beta_hat: &DVector<f64>, beta0: &DVector<f64>) -> Result<bool> {
    check_len(beta_hat, beta0)?;
    Ok(beta_hat.iter().zip(beta0.iter()).all(|(a, b)| sign(*a) == sign(*b)))
}

/// Empirical network-irrepresentability value
///
/// ```text
/// ‖(Σ_{Sᶜ,S} + λ₂ L_{Sᶜ,S}) (Σ_{S,S} + λ₂ L_{S,S})⁻¹ sign(β⁰_S)‖_∞,   Σ = n⁻¹ XᵀX
/// ```
///
/// `signs[i]` is the sign of the truth at `support[i]`. The condition holds
/// when the value is below one.
pub fn irrepresentability(
    x: &DMatrix<f64>,
    lap: &Laplacian,
    lambda2: f64,
    support: &[usize],
    signs: &[f64],
) -> Result<f64> {
    let p = x.ncols();
    if lap.p() != p {
        return Err(Error::DimensionMismatch("Laplacian and design disagree on p".into()));
    }
    if support.is_empty() {
        return Err(Error::InvalidInput("support must be nonempty".into()));
    }
    if signs.len() != support.len() {
        return Err(Error::DimensionMismatch("one sign per support index is required".into()));
    }
    if support.iter().any(|&j| j >= p) {
        return Err(Error::InvalidInput("support index out of range".into()));
    }
    let mut in_s = vec![false; p];
    for &j in support {
        in_s[j] = true;
    }
    let complement: Vec<usize> = (0..p).filter(|&j| !in_s[j]).collect();

    let sigma = x.tr_mul(x) / x.nrows() as f64;
    let m = &sigma + lap.matrix() * lambda2;
    let inner = DMatrix::from_fn(support.len(), support.len(), |a, b| m[(support[a], support[b])]);
    let sv = inner.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-12 * smax.max(f64::MIN_POSITIVE)) {
        return Err(Error::DiagnosticUnavailable(
            "support block of Σ + λ₂L is singular".into(),
        ));
    }
    let s = DVector::from_column_slice(signs);
    let v = inner
        .lu()
        .solve(&s)
        .ok_or_else(|| Error::DiagnosticUnavailable("support block is singular".into()))?;
    let outer = DMatrix::from_fn(complement.len(), support.len(), |a, b| {
        m[(complement[a], support[b])]
    });
    Ok((outer * v).amax())
}
