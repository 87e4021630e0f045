//! Classic Friedkin-Johnsen dynamics.
//!
//! Every node holds an innate opinion `s_i` with unit weight and repeatedly
//! averages it with its neighbors' expressed opinions. The equilibrium is
//! `(I + L)⁻¹ s`.

use crate::error::ModelError;
use crate::graph::Graph;
use crate::numerics::{
    default_max_iter, fixed_point_iterate, residual_tol_for_abs, solve_spd, DiagPlusLaplacian,
};

/// Slack allowed when turning solver output back into opinions.
const SOLVER_SLACK: f64 = 1e-6;

/// Per-node opinions, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OpinionVector(Vec<f64>);

impl OpinionVector {
    pub fn new(values: Vec<f64>) -> Result<Self, ModelError> {
        if let Some((index, &value)) =
            values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(ModelError::OpinionOutOfRange { index, value });
        }
        Ok(Self(values))
    }

    pub fn constant(n: usize, value: f64) -> Result<Self, ModelError> {
        Self::new(vec![value; n])
    }

    /// Wraps a solver result, clamping round-off just outside `[0, 1]`.
    pub(crate) fn from_solution(values: Vec<f64>) -> Result<Self, ModelError> {
        let mut values = values;
        for (index, v) in values.iter_mut().enumerate() {
            if !(-SOLVER_SLACK..=1.0 + SOLVER_SLACK).contains(v) {
                return Err(ModelError::OpinionOutOfRange { index, value: *v });
            }
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.0.len() as f64
    }
}

impl AsRef<[f64]> for OpinionVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EquilibriumMethod {
    /// Conjugate-gradient solve of the closed form.
    #[default]
    DirectSolve,
    /// Repeated synchronous sweeps of the dynamics.
    Iterate,
}

/// One synchronous FJ update: `z'_i = (s_i + Σ w_ij z_j) / (1 + Σ w_ij)`.
pub fn fj_step(g: &Graph, s: &OpinionVector, z: &OpinionVector) -> Result<OpinionVector, ModelError> {
    g.check_len(s.len())?;
    g.check_len(z.len())?;
    let extra = vec![0.0; g.node_count()];
    let mut out = vec![0.0; g.node_count()];
    sweep(g, s.values(), &extra, z.values(), &mut out);
    Ok(OpinionVector(out))
}

/// Equilibrium `(I + L)⁻¹ s`, accurate to `tol` in ℓ∞.
pub fn fj_equilibrium(
    g: &Graph,
    s: &OpinionVector,
    method: EquilibriumMethod,
    tol: f64,
) -> Result<OpinionVector, ModelError> {
    g.check_len(s.len())?;
    let extra = vec![0.0; g.node_count()];
    let z = solve_fj_system(g, s.values().to_vec(), &extra, method, tol)?;
    OpinionVector::from_solution(z)
}

/// `z'_i = (rhs_i + Σ w_ij z_j) / (1 + d_i + extra_i)`.
fn sweep(g: &Graph, rhs: &[f64], extra: &[f64], z: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let pull: f64 = g.neighbors(i).map(|(j, w)| w * z[j]).sum();
        *o = (rhs[i] + pull) / (1.0 + g.degree(i) + extra[i]);
    }
}

/// Solves `(I + diag(extra) + L) z = rhs` to absolute ℓ∞ accuracy `tol`.
///
/// `extra_i` is the total weight of edges from node `i` to stubborn nodes
/// whose contribution is already folded into `rhs`. The iterate path stops
/// once the a-posteriori bound `q/(1-q)·‖Δz‖∞` (with `q` the ℓ∞ norm of the
/// sweep's linear part) drops below `tol`.
pub(crate) fn solve_fj_system(
    g: &Graph,
    rhs: Vec<f64>,
    extra: &[f64],
    method: EquilibriumMethod,
    tol: f64,
) -> Result<Vec<f64>, ModelError> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(ModelError::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let n = g.node_count();
    match method {
        EquilibriumMethod::DirectSolve => {
            let diag: Vec<f64> = extra.iter().map(|e| 1.0 + e).collect();
            let op = DiagPlusLaplacian::new(g, diag)?;
            let rel = residual_tol_for_abs(&op, &rhs, tol);
            Ok(solve_spd(&op, &rhs, rel, default_max_iter(n))?.solution)
        }
        EquilibriumMethod::Iterate => {
            let q = (0..n)
                .map(|i| g.degree(i) / (1.0 + g.degree(i) + extra[i]))
                .fold(0.0, f64::max);
            let stop = if q > 0.0 { tol.min(tol * (1.0 - q) / q) } else { tol };
            // initial change is at most 1 for opinions in [0, 1]
            let max_iter = if q > 0.0 {
                2 * (stop.ln() / q.ln()).ceil() as usize + 100
            } else {
                100
            };
            let x0 = rhs.iter().zip(extra).map(|(r, e)| r / (1.0 + e)).collect();
            let step = |z: &[f64], out: &mut [f64]| sweep(g, &rhs, extra, z, out);
            Ok(fixed_point_iterate(step, x0, stop, max_iter)?.solution)
        }
    }
}
