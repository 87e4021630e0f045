//! Weighted undirected simple graphs.
//!
//! A [`Graph`] is immutable once built. Adjacency is kept in compressed
//! sparse row form alongside the canonical edge list, and weighted degrees
//! are precomputed so every consumer sees the same `d_i`.

use std::collections::HashMap;
use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Degree spread below which a graph counts as regular.
pub const REGULARITY_TOL: f64 = 1e-12;

/// Restart budget for the random-regular sampler.
const MAX_REGULAR_RESTARTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph has no nodes")]
    Empty,
    #[error("node id {node} out of range for {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("self-loop on node {node}")]
    SelfLoop { node: u64 },
    #[error("edge ({u}, {v}) has invalid weight {weight}; weights must be positive and finite")]
    InvalidWeight { u: u64, v: u64, weight: f64 },
    #[error("duplicate edge ({u}, {v})")]
    DuplicateEdge { u: u64, v: u64 },
    #[error("unparsable token {token:?}")]
    Parse { token: String },
    #[error("expected 2 or 3 fields, found {found}")]
    FieldCount { found: usize },
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<GraphError>,
    },
    #[error("vector length {found} does not match node count {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid generator parameters: {0}")]
    InvalidParameters(String),
    #[error("random-regular sampler gave up after {0} restarts")]
    SamplerExhausted(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GraphError {
    fn at_line(self, line: usize) -> Self {
        GraphError::AtLine { line, source: Box::new(self) }
    }

    /// Line number for errors raised during edge-list ingestion.
    pub fn line(&self) -> Option<usize> {
        match self {
            GraphError::AtLine { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// An undirected edge `{u, v}` with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphStats {
    pub d_min: f64,
    pub d_max: f64,
    pub is_regular: bool,
    pub total_edge_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    edges: Vec<Edge>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    weights: Vec<f64>,
    degree: Vec<f64>,
}

impl Graph {
    /// Builds a graph on nodes `0..n` from `(u, v, w)` triples.
    ///
    /// Rejects self-loops, non-positive or non-finite weights and repeated
    /// unordered pairs. The edge order of the input is kept.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut seen = HashSet::new();
        let mut canon = Vec::new();
        for (u, v, weight) in edges {
            for node in [u, v] {
                if node >= n {
                    return Err(GraphError::NodeOutOfRange { node, n });
                }
            }
            check_edge(u as u64, v as u64, weight)?;
            let (u, v) = if u < v { (u, v) } else { (v, u) };
            if !seen.insert((u, v)) {
                return Err(GraphError::DuplicateEdge { u: u as u64, v: v as u64 });
            }
            canon.push(Edge { u, v, weight });
        }
        Ok(Self::from_canonical(n, canon))
    }

    /// Assembles CSR adjacency from an already validated edge list.
    fn from_canonical(n: usize, edges: Vec<Edge>) -> Self {
        let mut counts = vec![0usize; n];
        for e in &edges {
            counts[e.u] += 1;
            counts[e.v] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for c in &counts {
            offsets.push(offsets.last().unwrap() + c);
        }
        let mut cursor = offsets[..n].to_vec();
        let mut neighbors = vec![0usize; offsets[n]];
        let mut weights = vec![0.0; offsets[n]];
        let mut degree = vec![0.0; n];
        for e in &edges {
            for (a, b) in [(e.u, e.v), (e.v, e.u)] {
                neighbors[cursor[a]] = b;
                weights[cursor[a]] = e.weight;
                cursor[a] += 1;
                degree[a] += e.weight;
            }
        }
        Graph { edges, offsets, neighbors, weights, degree }
    }

    pub fn node_count(&self) -> usize {
        self.degree.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Weighted degrees `d_i`.
    pub fn degrees(&self) -> &[f64] {
        &self.degree
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.degree[i]
    }

    /// Neighbors of `i` with the connecting edge weights.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.neighbors[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    /// Weight of `{u, v}`, or `None` when the nodes are not adjacent.
    pub fn weight(&self, u: usize, v: usize) -> Option<f64> {
        self.neighbors(u).find(|&(j, _)| j == v).map(|(_, w)| w)
    }

    pub fn stats(&self) -> GraphStats {
        let d_min = self.degree.iter().copied().fold(f64::INFINITY, f64::min);
        let d_max = self.degree.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        GraphStats {
            d_min,
            d_max,
            is_regular: d_max - d_min <= REGULARITY_TOL,
            total_edge_weight: self.edges.iter().map(|e| e.weight).sum(),
        }
    }

    /// Computes `Lx = Dx - Wx`.
    pub fn laplacian_apply(&self, x: &[f64]) -> Result<Vec<f64>, GraphError> {
        self.check_len(x.len())?;
        let mut out = vec![0.0; x.len()];
        self.laplacian_apply_into(x, &mut out);
        Ok(out)
    }

    /// Unchecked variant writing into `out`; both slices must have length `n`.
    pub(crate) fn laplacian_apply_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for e in &self.edges {
            let flow = e.weight * (x[e.u] - x[e.v]);
            out[e.u] += flow;
            out[e.v] -= flow;
        }
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<(), GraphError> {
        if len != self.node_count() {
            return Err(GraphError::LengthMismatch { expected: self.node_count(), found: len });
        }
        Ok(())
    }

    /// Serializes as `u v w` lines preceded by `#` header lines.
    pub fn to_edge_list(&self, header: &[String]) -> String {
        let mut out = String::new();
        for line in header {
            let _ = writeln!(out, "# {line}");
        }
        for e in &self.edges {
            let _ = writeln!(out, "{} {} {}", e.u, e.v, e.weight);
        }
        out
    }
}

fn check_edge(u: u64, v: u64, weight: f64) -> Result<(), GraphError> {
    if u == v {
        return Err(GraphError::SelfLoop { node: u });
    }
    if !(weight.is_finite() && weight > 0.0) {
        return Err(GraphError::InvalidWeight { u, v, weight });
    }
    Ok(())
}

/// Parses a whitespace-separated edge list (`u v` or `u v w` per line).
///
/// Lines starting with `#` are comments. Node ids may be any non-negative
/// integers; they are remapped to `0..n` in order of first appearance.
pub fn load_edge_list(text: &str) -> Result<Graph, GraphError> {
    load_edge_list_from_reader(text.as_bytes())
}

pub fn load_edge_list_from_reader<R: BufRead>(reader: R) -> Result<Graph, GraphError> {
    let mut ids: HashMap<u64, usize> = HashMap::new();
    let mut seen = HashSet::new();
    let mut edges = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(GraphError::FieldCount { found: fields.len() }.at_line(lineno));
        }
        let parse_id = |tok: &str| {
            tok.parse::<u64>()
                .map_err(|_| GraphError::Parse { token: tok.to_string() }.at_line(lineno))
        };
        let (a, b) = (parse_id(fields[0])?, parse_id(fields[1])?);
        let weight = match fields.get(2) {
            Some(tok) => tok
                .parse::<f64>()
                .map_err(|_| GraphError::Parse { token: tok.to_string() }.at_line(lineno))?,
            None => 1.0,
        };
        check_edge(a, b, weight).map_err(|e| e.at_line(lineno))?;
        let key = if a < b { (a, b) } else { (b, a) };
        if !seen.insert(key) {
            return Err(GraphError::DuplicateEdge { u: a, v: b }.at_line(lineno));
        }
        let mut dense = |raw: u64| {
            let next = ids.len();
            *ids.entry(raw).or_insert(next)
        };
        let (u, v) = (dense(a), dense(b));
        edges.push(if u < v { Edge { u, v, weight } } else { Edge { u: v, v: u, weight } });
    }
    if ids.is_empty() {
        return Err(GraphError::Empty);
    }
    Ok(Graph::from_canonical(ids.len(), edges))
}

/// Barabási-Albert graph with unit weights.
///
/// Starts from the complete graph on `m` nodes. Every later node attaches to
/// `m` distinct existing nodes, drawn one at a time with probability
/// proportional to current degree (already drawn targets are redrawn).
pub fn gen_barabasi_albert(n: usize, m: usize, seed: u64) -> Result<Graph, GraphError> {
    if m == 0 || m >= n {
        return Err(GraphError::InvalidParameters(format!(
            "Barabási-Albert requires 1 <= m < n (got n={n}, m={m})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::with_capacity(m * (m - 1) / 2 + (n - m) * m);
    // each node appears once per unit of degree
    let mut pool: Vec<usize> = Vec::with_capacity(2 * edges.capacity());
    for u in 0..m {
        for v in (u + 1)..m {
            edges.push(Edge { u, v, weight: 1.0 });
            pool.push(u);
            pool.push(v);
        }
    }
    let mut chosen = Vec::with_capacity(m);
    for v in m..n {
        chosen.clear();
        if pool.is_empty() {
            // only reachable for m = 1: the seed is a single isolated node
            chosen.push(0);
        } else {
            while chosen.len() < m {
                let t = pool[rng.random_range(0..pool.len())];
                if !chosen.contains(&t) {
                    chosen.push(t);
                }
            }
        }
        for &t in &chosen {
            edges.push(Edge { u: t, v, weight: 1.0 });
            pool.push(t);
            pool.push(v);
        }
    }
    Ok(Graph::from_canonical(n, edges))
}

/// Random `d`-regular simple graph with unit weights.
///
/// Pairing model with incremental rejection: stubs are shuffled and paired,
/// pairs that would form a loop or a repeated edge are returned to the pool
/// and re-paired in the next round. When the leftover stubs admit no valid
/// pair the whole construction restarts.
pub fn gen_random_regular(n: usize, d: usize, seed: u64) -> Result<Graph, GraphError> {
    if d >= n {
        return Err(GraphError::InvalidParameters(format!(
            "random regular graph requires d < n (got n={n}, d={d})"
        )));
    }
    if (n * d) % 2 == 1 {
        return Err(GraphError::InvalidParameters(format!(
            "random regular graph requires n*d even (got n={n}, d={d})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_REGULAR_RESTARTS {
        if let Some(edges) = try_regular_pairing(n, d, &mut rng) {
            let edges = edges.into_iter().map(|(u, v)| Edge { u, v, weight: 1.0 }).collect();
            return Ok(Graph::from_canonical(n, edges));
        }
    }
    Err(GraphError::SamplerExhausted(MAX_REGULAR_RESTARTS))
}

fn try_regular_pairing(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Option<Vec<(usize, usize)>> {
    let mut edges = Vec::with_capacity(n * d / 2);
    let mut present = HashSet::with_capacity(n * d / 2);
    let mut stubs: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, d)).collect();
    let mut leftover = vec![0usize; n];
    while !stubs.is_empty() {
        stubs.shuffle(rng);
        for pair in stubs.chunks_exact(2) {
            let (u, v) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if u != v && present.insert((u, v)) {
                edges.push((u, v));
            } else {
                leftover[u] += 1;
                leftover[v] += 1;
            }
        }
        let pending: Vec<usize> = (0..n).filter(|&i| leftover[i] > 0).collect();
        let can_pair = pending.iter().enumerate().any(|(k, &a)| {
            pending[k + 1..].iter().any(|&b| !present.contains(&(a, b)))
        });
        if !pending.is_empty() && !can_pair {
            return None;
        }
        stubs.clear();
        for &i in &pending {
            stubs.extend(std::iter::repeat_n(i, leftover[i]));
            leftover[i] = 0;
        }
    }
    Some(edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn path3() -> Graph {
        Graph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn loads_smallest_path() {
        let g = load_edge_list("0 1\n1 2").unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.degrees(), &[1.0, 2.0, 1.0]);
        assert!(g.edges().iter().all(|e| e.weight == 1.0));
    }

    #[test]
    fn skips_comments_and_remaps_ids() {
        let g = load_edge_list("# c\n5 9 2.5").unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.degrees(), &[2.5, 2.5]);
        assert_eq!(g.weight(0, 1), Some(2.5));
    }

    #[test]
    fn remaps_in_first_appearance_order() {
        let g = load_edge_list("10 3\r\n3 7\r\n").unwrap();
        // 10 -> 0, 3 -> 1, 7 -> 2
        assert_eq!(g.degrees(), &[1.0, 2.0, 1.0]);
        assert!(g.weight(1, 2).is_some());
    }

    #[test]
    fn rejects_reversed_duplicate() {
        let err = load_edge_list("0 1\n1 0").unwrap_err();
        assert_eq!(err.line(), Some(2));
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn rejects_bad_lines() {
        let cases = [
            ("0 1\n2 2", 2, "self-loop"),
            ("0 1 0.0", 1, "invalid weight"),
            ("0 1 -3", 1, "invalid weight"),
            ("0 x", 1, "unparsable"),
            ("0 1\n\n-1 2", 3, "unparsable"),
            ("0 1 1 1", 1, "expected 2 or 3"),
        ];
        for (text, line, needle) in cases {
            let err = load_edge_list(text).unwrap_err();
            assert_eq!(err.line(), Some(line), "{text:?}");
            assert!(err.to_string().contains(needle), "{err}");
        }
        assert!(matches!(load_edge_list("# nothing\n"), Err(GraphError::Empty)));
    }

    #[test]
    fn laplacian_on_path() {
        assert_eq!(path3().laplacian_apply(&[1.0, 0.0, 0.0]).unwrap(), vec![1.0, -1.0, 0.0]);
        assert_eq!(path3().laplacian_apply(&[3.0; 3]).unwrap(), vec![0.0; 3]);
        assert!(matches!(
            path3().laplacian_apply(&[1.0]),
            Err(GraphError::LengthMismatch { expected: 3, found: 1 })
        ));
    }

    #[test]
    fn laplacian_single_node() {
        let g = Graph::from_edges(1, []).unwrap();
        assert_eq!(g.laplacian_apply(&[5.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn ba_triangle_is_forced() {
        for seed in 0..5 {
            let g = gen_barabasi_albert(3, 2, seed).unwrap();
            assert_eq!(g.edge_count(), 3);
            assert_eq!(g.degrees(), &[2.0, 2.0, 2.0]);
        }
    }

    #[test]
    fn ba_edge_count_and_connectivity() {
        let g = gen_barabasi_albert(4039, 22, 7).unwrap();
        assert_eq!(g.node_count(), 4039);
        assert_eq!(g.edge_count(), 88605);
        assert!(is_connected(&g));
        let g = gen_barabasi_albert(50, 1, 3).unwrap();
        assert_eq!(g.edge_count(), 49);
        assert!(is_connected(&g));
    }

    #[test]
    fn ba_rejects_m_at_least_n() {
        assert!(gen_barabasi_albert(10, 10, 1).is_err());
        assert!(gen_barabasi_albert(10, 0, 1).is_err());
    }

    #[test]
    fn regular_four_cycle() {
        for seed in 0..10 {
            let g = gen_random_regular(4, 2, seed).unwrap();
            assert_eq!(g.edge_count(), 4);
            assert!(g.degrees().iter().all(|&d| d == 2.0));
        }
    }

    #[test]
    fn regular_rejects_odd_and_dense() {
        assert!(gen_random_regular(4039, 43, 1).is_err());
        assert!(gen_random_regular(5, 5, 1).is_err());
    }

    #[test]
    fn regular_large_dense() {
        let g = gen_random_regular(4038, 44, 11).unwrap();
        assert_eq!(g.edge_count(), 88836);
        assert!(g.stats().is_regular);
        assert!(g.degrees().iter().all(|&d| d == 44.0));
    }

    #[test]
    fn edge_list_roundtrip() {
        let g = gen_barabasi_albert(30, 3, 5).unwrap();
        let text = g.to_edge_list(&["generator ba".to_string()]);
        assert!(text.starts_with("# generator ba\n"));
        assert_eq!(load_edge_list(&text).unwrap().degrees(), g.degrees());
    }

    fn is_connected(g: &Graph) -> bool {
        let mut seen = vec![false; g.node_count()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for (j, _) in g.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    fn any_graph() -> impl Strategy<Value = Graph> {
        prop_oneof![
            (3usize..60, 1usize..4, any::<u64>())
                .prop_map(|(n, m, seed)| gen_barabasi_albert(n + m, m, seed).unwrap()),
            (4usize..40, 1usize..4, any::<u64>())
                .prop_map(|(n, d, seed)| gen_random_regular(2 * n, d, seed).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn laplacian_kills_ones_and_is_psd(g in any_graph(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..g.node_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lx = g.laplacian_apply(&x).unwrap();
            let xmax = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let total: f64 = lx.iter().sum();
            prop_assert!(total.abs() <= 1e-10 * g.node_count() as f64 * xmax);
            let quad: f64 = x.iter().zip(&lx).map(|(a, b)| a * b).sum();
            prop_assert!(quad >= -1e-12);
        }

        #[test]
        fn degrees_match_incident_weights(g in any_graph()) {
            for i in 0..g.node_count() {
                let sum: f64 = g.neighbors(i).map(|(_, w)| w).sum();
                prop_assert!((sum - g.degree(i)).abs() <= 1e-12 * g.neighbors(i).count().max(1) as f64);
                for (j, w) in g.neighbors(i) {
                    prop_assert_eq!(g.weight(j, i), Some(w));
                }
            }
        }

        #[test]
        fn generators_are_reproducible(n in 5usize..40, seed in any::<u64>()) {
            let a = gen_barabasi_albert(n, 2, seed).unwrap().to_edge_list(&[]);
            let b = gen_barabasi_albert(n, 2, seed).unwrap().to_edge_list(&[]);
            prop_assert_eq!(a, b);
            let a = gen_random_regular(2 * n, 3, seed).unwrap();
            let b = gen_random_regular(2 * n, 3, seed).unwrap();
            prop_assert!(a.degrees().iter().all(|&d| d == 3.0));
            prop_assert_eq!(a.to_edge_list(&[]), b.to_edge_list(&[]));
        }
    }
}
