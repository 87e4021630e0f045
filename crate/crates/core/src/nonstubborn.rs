//! A single media source that follows the FJ dynamics itself.
//!
//! The source becomes node `n` of an augmented graph, linked to every node
//! `i` with weight `β(1 + d_i)` and holding innate opinion
//! `s_M = min{(1+γ)s̄, 1}`. Sum conservation on the augmented graph caps
//! the network's gain at `s_M`.

use crate::error::ModelError;
use crate::fj::{fj_equilibrium, EquilibriumMethod, OpinionVector};
use crate::graph::Graph;
use crate::media::{source_opinions, MediaConfig};

/// The `(n+1)`-node instance built around a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedInstance {
    pub media_edge_weights: Vec<f64>,
    pub s_m: f64,
    pub graph: Graph,
    pub innate: OpinionVector,
}

impl AugmentedInstance {
    pub fn build(g: &Graph, s: &OpinionVector, cfg: &MediaConfig) -> Result<Self, ModelError> {
        cfg.validate()?;
        g.check_len(s.len())?;
        let n = g.node_count();
        let s_m = source_opinions(s, cfg.gamma)?.z_m;
        let media_edge_weights: Vec<f64> = g.degrees().iter().map(|d| cfg.beta * (1.0 + d)).collect();
        let base = g.edges().iter().map(|e| (e.u, e.v, e.weight));
        // β = 0 leaves the source isolated
        let media = media_edge_weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, &w)| (i, n, w));
        let graph = Graph::from_edges(n + 1, base.chain(media))?;
        let mut innate = s.values().to_vec();
        innate.push(s_m);
        Ok(Self { media_edge_weights, s_m, graph, innate: OpinionVector::new(innate)? })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonStubbornEquilibrium {
    pub node_opinions: OpinionVector,
    /// Equilibrium expressed opinion of the source.
    pub z_m_star: f64,
    /// Innate opinion the source was given.
    pub s_m: f64,
}

impl NonStubbornEquilibrium {
    /// Upper bound `(1 + (1+γ)/n)·1ᵀs` on the network's equilibrium sum.
    pub fn sum_bound(sum_s: f64, n: usize, gamma: f64) -> f64 {
        (1.0 + (1.0 + gamma) / n as f64) * sum_s
    }
}

/// Equilibrium with a single non-stubborn source attached to every node.
pub fn nonstubborn_equilibrium(
    g: &Graph,
    s: &OpinionVector,
    cfg: &MediaConfig,
    tol: f64,
) -> Result<NonStubbornEquilibrium, ModelError> {
    if cfg.alpha != 1.0 {
        return Err(ModelError::InvalidParameter(format!(
            "a single non-stubborn source needs alpha = 1, got {}",
            cfg.alpha
        )));
    }
    let aug = AugmentedInstance::build(g, s, cfg)?;
    let mut z = fj_equilibrium(&aug.graph, &aug.innate, EquilibriumMethod::DirectSolve, tol)?.into_inner();
    let z_m_star = z.pop().expect("augmented graph has the source node");
    Ok(NonStubbornEquilibrium {
        node_opinions: OpinionVector::new(z)?,
        z_m_star,
        s_m: aug.s_m,
    })
}
