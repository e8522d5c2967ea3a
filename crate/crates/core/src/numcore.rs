//! Sum-of-squares machinery: numerical Jacobians and a box-constrained
//! Levenberg–Marquardt descent that only moves to accepted points.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// A residual vector `F(x)` whose squared norm is minimized, plus a predicate
/// deciding which points the descent may move to.
pub trait ResidualSystem {
    /// Residuals at `x`. Non-finite entries mark values that cannot be evaluated.
    fn residuals(&mut self, x: &[f64]) -> Result<Vec<f64>>;

    fn accept(&mut self, _x: &[f64]) -> Result<bool> {
        Ok(true)
    }
}

/// Adapter turning a closure into an unconstrained [`ResidualSystem`].
pub struct FnSystem<F>(pub F);

impl<F: FnMut(&[f64]) -> Vec<f64>> ResidualSystem for FnSystem<F> {
    fn residuals(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        Ok((self.0)(x))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(invalid("bound vectors differ in length"));
        }
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] <= upper[i])) {
            return Err(invalid(format!("empty interval in dimension {i}")));
        }
        Ok(Bounds { lower, upper })
    }

    pub fn unbounded(n: usize) -> Self {
        Bounds { lower: vec![f64::NEG_INFINITY; n], upper: vec![f64::INFINITY; n] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.lower).zip(&self.upper).all(|((v, lo), hi)| lo <= v && v <= hi)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    /// Euclidean length of the box diagonal.
    pub fn diameter(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| (u - l) * (u - l)).sum::<f64>().sqrt()
    }

    pub fn subset(&self, dims: &[usize]) -> Bounds {
        Bounds {
            lower: dims.iter().map(|&i| self.lower[i]).collect(),
            upper: dims.iter().map(|&i| self.upper[i]).collect(),
        }
    }
}

/// `Σ F_i²`, or NaN when any residual is non-finite.
pub fn sum_of_squares(f: &[f64]) -> f64 {
    if f.iter().all(|v| v.is_finite()) {
        f.iter().map(|v| v * v).sum()
    } else {
        f64::NAN
    }
}

// Failures of the analysis itself must surface; anything else only means the
// residual cannot be evaluated at the probe.
fn probe(sys: &mut dyn ResidualSystem, x: &[f64]) -> Result<Option<Vec<f64>>> {
    match sys.residuals(x) {
        Ok(f) => Ok(Some(f)),
        Err(e @ (Error::Oracle(_) | Error::Timeout | Error::Io(_) | Error::ResourceLimit(_))) => {
            Err(e)
        }
        Err(_) => Ok(None),
    }
}

/// Finite-difference Jacobian `J_ij = ∂F_i/∂x_j`.
///
/// Central differences with step `h`; a one-sided difference is used when a
/// probe would leave `bounds` or when only one side can be evaluated. Entries
/// that cannot be estimated are 0.
pub fn numerical_jacobian(
    sys: &mut dyn ResidualSystem,
    x: &[f64],
    h: f64,
    bounds: Option<&Bounds>,
) -> Result<DMatrix<f64>> {
    if !(h > 0.0) {
        return Err(invalid("difference step must be positive"));
    }
    let base = probe(sys, x)?.ok_or_else(|| invalid("residuals not evaluable at the base point"))?;
    let m = base.len();
    let mut jac = DMatrix::zeros(m, x.len());
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let (lo, hi) = bounds.map_or((f64::NEG_INFINITY, f64::INFINITY), |b| (b.lower[j], b.upper[j]));
        let up = if x[j] + h <= hi {
            xp[j] = x[j] + h;
            probe(sys, &xp)?
        } else {
            None
        };
        let down = if x[j] - h >= lo {
            xp[j] = x[j] - h;
            probe(sys, &xp)?
        } else {
            None
        };
        xp[j] = x[j];
        for i in 0..m {
            let fu = up.as_ref().map(|f| f[i]).filter(|v| v.is_finite());
            let fd = down.as_ref().map(|f| f[i]).filter(|v| v.is_finite());
            let f0 = Some(base[i]).filter(|v| v.is_finite());
            jac[(i, j)] = match (fu, fd, f0) {
                (Some(u), Some(d), _) => (u - d) / (2.0 * h),
                (Some(u), None, Some(c)) => (u - c) / h,
                (None, Some(d), Some(c)) => (c - d) / h,
                _ => 0.0,
            };
        }
    }
    Ok(jac)
}

/// Solves `(JᵀJ + λ·diag(JᵀJ)) Δ = −JᵀF`. Zero diagonal entries of `JᵀJ`
/// are replaced by `1e-12` so that dimensions without gradient stay put.
pub fn lm_step(jac: &DMatrix<f64>, f: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) {
        return Err(invalid("damping must be nonnegative"));
    }
    if jac.nrows() != f.len() {
        return Err(invalid("Jacobian and residual sizes differ"));
    }
    let fv = DVector::from_column_slice(f);
    let mut a = jac.transpose() * jac;
    let g = jac.transpose() * fv;
    for i in 0..a.nrows() {
        let d = if a[(i, i)] > 0.0 { a[(i, i)] } else { 1e-12 };
        a[(i, i)] = d * (1.0 + lambda);
    }
    let rhs = -g;
    let sol = match a.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numeric("damped normal equations are singular".into()))?,
    };
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("damped step is not finite".into()));
    }
    Ok(sol.iter().copied().collect())
}

#[derive(Clone, Debug)]
pub struct LmOptions {
    pub lambda0: f64,
    pub lambda_factor: f64,
    pub lambda_min: f64,
    pub max_retries: usize,
    /// Stop once the clamped step is shorter than this. The short step is
    /// still taken when it improves the objective and is accepted.
    pub step_tol: f64,
    /// Stop when an accepted step improves the objective by at most this fraction.
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Finite-difference step.
    pub h: f64,
    /// Cooperative time limit, checked once per iteration.
    pub deadline: Option<Instant>,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            lambda0: 1e3,
            lambda_factor: 10.0,
            lambda_min: 1e-9,
            max_retries: 20,
            step_tol: 1e-5,
            rel_tol: 1e-5,
            max_iter: 1000,
            h: 1e-5,
            deadline: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    RelativeTolerance,
    StepTolerance,
    RetriesExhausted,
    IterationCap,
}

#[derive(Clone, Debug)]
pub struct LmOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    /// Objective at the start and after every accepted step.
    pub trace: Vec<f64>,
    pub lambda: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Clamped step of the last rejected proposal.
    pub last_rejected: Option<Vec<f64>>,
    /// Last accepted step.
    pub last_accepted: Option<Vec<f64>>,
}

pub(crate) fn check_deadline(deadline: Option<Instant>) -> Result<()> {
    match deadline {
        Some(d) if Instant::now() >= d => Err(Error::Timeout),
        _ => Ok(()),
    }
}

/// Levenberg–Marquardt descent restricted to `bounds` and to points the
/// system accepts.
///
/// A proposal is clamped into the box, then kept only if it lowers the
/// objective and passes [`ResidualSystem::accept`]. Rejections multiply λ
/// by `lambda_factor`; acceptances divide it (down to `lambda_min`).
pub fn lm_minimize(
    sys: &mut dyn ResidualSystem,
    x0: &[f64],
    bounds: &Bounds,
    opts: &LmOptions,
) -> Result<LmOutcome> {
    if x0.len() != bounds.dim() || x0.iter().any(|v| !v.is_finite()) {
        return Err(invalid("starting point must be finite and match the bounds"));
    }
    if !bounds.contains(x0) || !sys.accept(x0)? {
        return Err(invalid(format!("starting point {x0:?} is not acceptable")));
    }
    let mut x = x0.to_vec();
    let mut value = sum_of_squares(&sys.residuals(&x)?);
    if !value.is_finite() {
        return Err(Error::Numeric(format!("objective not finite at {x0:?}")));
    }
    let mut out = LmOutcome {
        x: Vec::new(),
        value,
        trace: vec![value],
        lambda: opts.lambda0,
        iterations: 0,
        termination: Termination::IterationCap,
        last_rejected: None,
        last_accepted: None,
    };
    let mut lambda = opts.lambda0;
    'outer: while out.iterations < opts.max_iter {
        check_deadline(opts.deadline)?;
        out.iterations += 1;
        let f = sys.residuals(&x)?;
        let jac = numerical_jacobian(sys, &x, opts.h, Some(bounds))?;
        let mut retries = 0;
        loop {
            let delta = lm_step(&jac, &f, lambda)?;
            let mut cand: Vec<f64> = x.iter().zip(&delta).map(|(a, b)| a + b).collect();
            bounds.clamp(&mut cand);
            let step: Vec<f64> = cand.iter().zip(&x).map(|(a, b)| a - b).collect();
            let norm = step.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                out.termination = Termination::StepTolerance;
                break 'outer;
            }
            let tiny = norm < opts.step_tol;
            let cand_value = sum_of_squares(&sys.residuals(&cand)?);
            if cand_value < value && sys.accept(&cand)? {
                lambda = (lambda / opts.lambda_factor).max(opts.lambda_min);
                let rel = (value - cand_value) / value;
                x = cand;
                value = cand_value;
                out.trace.push(value);
                out.last_accepted = Some(step);
                if tiny {
                    out.termination = Termination::StepTolerance;
                    break 'outer;
                }
                if rel <= opts.rel_tol {
                    out.termination = Termination::RelativeTolerance;
                    break 'outer;
                }
                break;
            }
            if tiny {
                out.last_rejected = Some(step);
                out.termination = Termination::StepTolerance;
                break 'outer;
            }
            out.last_rejected = Some(step);
            lambda *= opts.lambda_factor;
            retries += 1;
            if retries > opts.max_retries {
                out.termination = Termination::RetriesExhausted;
                break 'outer;
            }
        }
    }
    out.x = x;
    out.value = value;
    out.lambda = lambda;
    Ok(out)
}

/// Gradient of `Σ F_i²`, i.e. `2 JᵀF`.
pub fn gradient(jac: &DMatrix<f64>, f: &[f64]) -> Vec<f64> {
    let g = jac.transpose() * DVector::from_column_slice(f);
    g.iter().map(|v| 2.0 * v).collect()
}
