//! Two stubborn media sources `M` and `M'` attached to a network.
//!
//! Node `i` is linked to exactly one source with weight `β(1 + d_i)`.
//! The source edges are never added to the [`Graph`]; their effect is
//! folded into the operator diagonal and the right-hand side:
//!
//! ```text
//! z* = ((1+β)I + βD + L)⁻¹ (s + β(I + D) ζ)
//! ```
//!
//! `M` expresses `min{(1+γ)s̄, 1}` and `M'` expresses `(1-γ)s̄`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::ModelError;
use crate::fj::{solve_fj_system, EquilibriumMethod, OpinionVector};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MediaConfig {
    /// Fraction of nodes attached to `M`.
    pub alpha: f64,
    /// Relative influence of a source on its nodes.
    pub beta: f64,
    /// Bias of the sources around the mean innate opinion.
    pub gamma: f64,
}

impl MediaConfig {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self, ModelError> {
        let cfg = Self { alpha, beta, gamma };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(ModelError::InvalidParameter(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        check_beta(self.beta)?;
        check_gamma(self.gamma)
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        Self { alpha, ..self }
    }
}

fn check_beta(beta: f64) -> Result<(), ModelError> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(ModelError::InvalidParameter(format!("beta must be >= 0, got {beta}")));
    }
    Ok(())
}

fn check_gamma(gamma: f64) -> Result<(), ModelError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(ModelError::InvalidParameter(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    Ok(())
}

/// Which nodes listen to `M` (the rest listen to `M'`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MediaAssignment {
    attached_to_m: Vec<bool>,
    count_m: usize,
}

impl MediaAssignment {
    pub fn from_mask(attached_to_m: Vec<bool>) -> Self {
        let count_m = attached_to_m.iter().filter(|&&b| b).count();
        Self { attached_to_m, count_m }
    }

    pub fn all_m(n: usize) -> Self {
        Self::from_mask(vec![true; n])
    }

    pub fn attached_to_m(&self) -> &[bool] {
        &self.attached_to_m
    }

    pub fn count_m(&self) -> usize {
        self.count_m
    }

    pub fn len(&self) -> usize {
        self.attached_to_m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attached_to_m.is_empty()
    }

    /// Realized fraction `count_m / n`, which differs from the requested
    /// alpha whenever `alpha·n` is not an integer.
    pub fn effective_alpha(&self) -> f64 {
        self.count_m as f64 / self.attached_to_m.len() as f64
    }
}

/// Number of `M` nodes for a requested fraction: `alpha·n` rounded half away
/// from zero.
pub fn media_count(n: usize, alpha: f64) -> usize {
    ((alpha * n as f64).round() as usize).min(n)
}

/// Attaches `round(alpha·n)` uniformly chosen nodes to `M`.
pub fn assign_media(g: &Graph, alpha: f64, seed: u64) -> Result<MediaAssignment, ModelError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ModelError::InvalidParameter(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let n = g.node_count();
    let count = media_count(n, alpha);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = vec![false; n];
    for i in rand::seq::index::sample(&mut rng, n, count) {
        mask[i] = true;
    }
    Ok(MediaAssignment::from_mask(mask))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceOpinions {
    pub mean_innate: f64,
    pub z_m: f64,
    pub z_mprime: f64,
    /// `(1+γ)s̄ > 1`; the boundary itself counts as not truncated.
    pub truncated: bool,
}

pub fn source_opinions(s: &OpinionVector, gamma: f64) -> Result<SourceOpinions, ModelError> {
    check_gamma(gamma)?;
    if s.is_empty() {
        return Err(ModelError::InvalidParameter("opinion vector is empty".into()));
    }
    Ok(sources_for_mean(s.mean(), gamma))
}

pub(crate) fn sources_for_mean(mean: f64, gamma: f64) -> SourceOpinions {
    let up = (1.0 + gamma) * mean;
    SourceOpinions { mean_innate: mean, z_m: up.min(1.0), z_mprime: (1.0 - gamma) * mean, truncated: up > 1.0 }
}

/// Per-node opinion of the attached source.
#[derive(Debug, Clone, PartialEq)]
pub struct ZetaVector {
    values: Vec<f64>,
    z_m: f64,
    z_mprime: f64,
}

impl ZetaVector {
    pub fn new(assignment: &MediaAssignment, z_m: f64, z_mprime: f64) -> Self {
        let values = assignment
            .attached_to_m()
            .iter()
            .map(|&on_m| if on_m { z_m } else { z_mprime })
            .collect();
        Self { values, z_m, z_mprime }
    }

    pub fn from_sources(assignment: &MediaAssignment, sources: &SourceOpinions) -> Self {
        Self::new(assignment, sources.z_m, sources.z_mprime)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_consistent_with(&self, assignment: &MediaAssignment) -> bool {
        self.values.len() == assignment.len()
            && self.values.iter().zip(assignment.attached_to_m()).all(|(&v, &on_m)| {
                v == if on_m { self.z_m } else { self.z_mprime }
            })
    }
}

/// Equilibrium expressed opinions with both stubborn sources present.
pub fn equilibrium_with_media(
    g: &Graph,
    s: &OpinionVector,
    assignment: &MediaAssignment,
    beta: f64,
    zeta: &ZetaVector,
    method: EquilibriumMethod,
    tol: f64,
) -> Result<OpinionVector, ModelError> {
    check_beta(beta)?;
    g.check_len(s.len())?;
    g.check_len(assignment.len())?;
    if !zeta.is_consistent_with(assignment) {
        return Err(ModelError::InvalidParameter("zeta does not match the media assignment".into()));
    }
    let extra: Vec<f64> = g.degrees().iter().map(|d| beta * (1.0 + d)).collect();
    let rhs = s
        .values()
        .iter()
        .zip(&extra)
        .zip(zeta.values())
        .map(|((si, e), zi)| si + e * zi)
        .collect();
    OpinionVector::from_solution(solve_fj_system(g, rhs, &extra, method, tol)?)
}

/// Single-period sum multiplier on a `d`-regular graph with untruncated
/// sources: `1 + γ·β(d+1)(2α-1) / (β(d+1)+1)`.
pub fn regular_gain_factor(d: f64, cfg: &MediaConfig) -> f64 {
    let bd = cfg.beta * (d + 1.0);
    1.0 + cfg.gamma * bd * (2.0 * cfg.alpha - 1.0) / (bd + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SumBounds {
    pub lower: f64,
    pub upper: f64,
    /// Exact equilibrium sum, present when the graph is regular.
    pub exact_if_regular: Option<f64>,
}

/// Degree-based bounds on `1ᵀz*` for untruncated sources.
///
/// `cfg.alpha` must be the realized fraction of `M` nodes
/// ([`MediaAssignment::effective_alpha`]) for the bounds to be rigorous.
pub fn sum_bounds(g: &Graph, s: &OpinionVector, cfg: &MediaConfig) -> Result<SumBounds, ModelError> {
    cfg.validate()?;
    g.check_len(s.len())?;
    let src = source_opinions(s, cfg.gamma)?;
    if src.truncated {
        return Err(ModelError::Truncated { scaled_mean: (1.0 + cfg.gamma) * src.mean_innate });
    }
    let st = g.stats();
    let sum_s = s.sum();
    let bias = (2.0 * cfg.alpha - 1.0) * cfg.gamma + 1.0;
    let b = cfg.beta;
    let lower = (1.0 + (st.d_min + 1.0) * b * bias) / (b * (st.d_max + 1.0) + 1.0) * sum_s;
    let upper = (1.0 + (st.d_max + 1.0) * b * bias) / (b * (st.d_min + 1.0) + 1.0) * sum_s;
    let exact_if_regular = st.is_regular.then(|| regular_gain_factor(st.d_max, cfg) * sum_s);
    Ok(SumBounds { lower, upper, exact_if_regular })
}

/// Exact `1ᵀz*` on a `d`-regular graph when `M` is truncated to 1.
pub fn truncated_regular_sum(d: f64, n: usize, sum_s: f64, cfg: &MediaConfig) -> f64 {
    let bd = cfg.beta * (1.0 + d);
    ((1.0 + bd * (1.0 - cfg.alpha) * (1.0 - cfg.gamma)) * sum_s + cfg.alpha * bd * n as f64) / (1.0 + bd)
}

/// Degree-free lower bound `sum_s·(1 - γ + αγ)` for the truncated regime.
pub fn truncated_lower_bound(sum_s: f64, alpha: f64, gamma: f64) -> f64 {
    sum_s * (1.0 - gamma + alpha * gamma)
}
