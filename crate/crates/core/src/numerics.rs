//! Matrix-free solves for `Γ + c·L` with a positive diagonal `Γ`.
//!
//! Any such operator is a nonsingular M-matrix, hence symmetric positive
//! definite and inverse-positive, so plain conjugate gradient applies and a
//! nonnegative right-hand side yields a nonnegative solution.

use thiserror::Error;

use crate::graph::{Graph, GraphError};

pub const DEFAULT_TOL: f64 = 1e-10;

/// Default conjugate-gradient iteration cap for an `n`-node system.
pub fn default_max_iter(n: usize) -> usize {
    10 * n
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("diagonal entry {index} is {value}; must be positive and finite")]
    NonPositiveDiagonal { index: usize, value: f64 },
    #[error("laplacian scale must be non-negative and finite, got {0}")]
    InvalidScale(f64),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Relative residual `‖Ax - b‖₂ / ‖b‖₂` for linear solves, last ℓ∞
    /// step for fixed-point runs.
    pub residual: f64,
}

/// The operator `x ↦ Γx + c·Lx`.
#[derive(Debug, Clone)]
pub struct DiagPlusLaplacian<'g> {
    graph: &'g Graph,
    diag: Vec<f64>,
    laplacian_scale: f64,
}

impl<'g> DiagPlusLaplacian<'g> {
    pub fn new(graph: &'g Graph, diag: Vec<f64>) -> Result<Self, SolveError> {
        graph.check_len(diag.len())?;
        if let Some((index, &value)) =
            diag.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(SolveError::NonPositiveDiagonal { index, value });
        }
        Ok(Self { graph, diag, laplacian_scale: 1.0 })
    }

    pub fn with_laplacian_scale(mut self, scale: f64) -> Result<Self, SolveError> {
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(SolveError::InvalidScale(scale));
        }
        self.laplacian_scale = scale;
        Ok(self)
    }

    pub fn graph(&self) -> &Graph {
        self.graph
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn min_diag(&self) -> f64 {
        self.diag.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, SolveError> {
        self.graph.check_len(x.len())?;
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out);
        Ok(out)
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        self.graph.laplacian_apply_into(x, out);
        for ((o, &g), &xi) in out.iter_mut().zip(&self.diag).zip(x) {
            *o = g * xi + self.laplacian_scale * *o;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Conjugate-gradient solve of `op · x = rhs` to relative residual `tol`.
///
/// Convergence is confirmed against the true residual; if recurrence drift
/// leaves it above `tol` the iteration restarts from the current iterate.
pub fn solve_spd(
    op: &DiagPlusLaplacian<'_>,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport, SolveError> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(SolveError::InvalidTolerance(tol));
    }
    op.graph.check_len(rhs.len())?;
    let n = rhs.len();
    let bnorm = norm2(rhs);
    if bnorm == 0.0 {
        return Ok(SolveReport { solution: vec![0.0; n], iterations: 0, residual: 0.0 });
    }

    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let mut residual = rr.sqrt() / bnorm;

    for it in 1..=max_iter {
        op.apply_into(&p, &mut ap);
        let step = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        let rr_next = dot(&r, &r);
        residual = rr_next.sqrt() / bnorm;
        if residual <= tol {
            op.apply_into(&x, &mut ap);
            for i in 0..n {
                r[i] = rhs[i] - ap[i];
            }
            rr = dot(&r, &r);
            residual = rr.sqrt() / bnorm;
            if residual <= tol {
                return Ok(SolveReport { solution: x, iterations: it, residual });
            }
            p.copy_from_slice(&r);
            continue;
        }
        let ratio = rr_next / rr;
        for i in 0..n {
            p[i] = r[i] + ratio * p[i];
        }
        rr = rr_next;
    }
    Err(SolveError::NotConverged { iterations: max_iter, residual })
}

/// Relative-residual tolerance guaranteeing `‖x - x*‖∞ <= abs_tol`.
///
/// `‖(Γ + cL)⁻¹‖₂ <= 1 / min Γ`, so a relative residual of
/// `abs_tol · min Γ / ‖b‖₂` bounds the ℓ₂ (hence ℓ∞) error by `abs_tol`.
pub(crate) fn residual_tol_for_abs(op: &DiagPlusLaplacian<'_>, rhs: &[f64], abs_tol: f64) -> f64 {
    let bnorm = norm2(rhs);
    if bnorm == 0.0 {
        return abs_tol;
    }
    (abs_tol * op.min_diag() / bnorm).clamp(1e-14, 1e-2)
}

/// Iterates `x ← step(x)` until the ℓ∞ change between sweeps is `<= tol`.
///
/// `step` writes the image of its first argument into the second. The
/// caller is responsible for passing a contraction (spectral radius of the
/// linear part below one); otherwise the run ends in `NotConverged`.
pub fn fixed_point_iterate<F>(
    mut step: F,
    x0: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport, SolveError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    if !(tol.is_finite() && tol > 0.0) {
        return Err(SolveError::InvalidTolerance(tol));
    }
    let mut x = x0;
    let mut next = vec![0.0; x.len()];
    let mut change = f64::INFINITY;
    for it in 1..=max_iter {
        step(&x, &mut next);
        change = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut x, &mut next);
        if change <= tol {
            return Ok(SolveReport { solution: x, iterations: it, residual: change });
        }
    }
    Err(SolveError::NotConverged { iterations: max_iter, residual: change })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_barabasi_albert, gen_random_regular};
    use crate::test_support::{dense_operator, dense_solve, max_abs_diff};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn path3() -> Graph {
        Graph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
    }

    fn edge_triples(g: &Graph) -> Vec<(usize, usize, f64)> {
        g.edges().iter().map(|e| (e.u, e.v, e.weight)).collect()
    }

    #[test]
    fn identity_operator() {
        let g = Graph::from_edges(4, []).unwrap();
        let op = DiagPlusLaplacian::new(&g, vec![1.0; 4]).unwrap();
        let b = vec![0.1, 0.7, 0.0, 0.3];
        let rep = solve_spd(&op, &b, 1e-12, 40).unwrap();
        assert!(max_abs_diff(&rep.solution, &b) < 1e-15);
    }

    #[test]
    fn path_hand_solve() {
        let g = path3();
        let op = DiagPlusLaplacian::new(&g, vec![1.0; 3]).unwrap();
        let rep = solve_spd(&op, &[0.0, 0.5, 1.0], 1e-12, 30).unwrap();
        assert!(max_abs_diff(&rep.solution, &[0.25, 0.5, 0.75]) < 1e-12);
        assert!(rep.residual <= 1e-12);
    }

    #[test]
    fn zero_rhs_takes_no_iterations() {
        let g = path3();
        let op = DiagPlusLaplacian::new(&g, vec![2.0; 3]).unwrap();
        let rep = solve_spd(&op, &[0.0; 3], 1e-10, 30).unwrap();
        assert_eq!(rep.solution, vec![0.0; 3]);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn reports_non_convergence() {
        let g = gen_barabasi_albert(200, 3, 1).unwrap();
        let op = DiagPlusLaplacian::new(&g, vec![0.01; 200]).unwrap();
        let b: Vec<f64> = (0..200).map(|i| (i % 7) as f64).collect();
        match solve_spd(&op, &b, 1e-12, 2) {
            Err(SolveError::NotConverged { iterations: 2, residual }) => assert!(residual > 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = path3();
        assert!(matches!(
            DiagPlusLaplacian::new(&g, vec![1.0, 0.0, 1.0]),
            Err(SolveError::NonPositiveDiagonal { index: 1, .. })
        ));
        let op = DiagPlusLaplacian::new(&g, vec![1.0; 3]).unwrap();
        assert!(matches!(solve_spd(&op, &[1.0; 3], 0.0, 10), Err(SolveError::InvalidTolerance(_))));
        assert!(matches!(solve_spd(&op, &[1.0; 2], 1e-8, 10), Err(SolveError::Graph(_))));
    }

    #[test]
    fn fixed_point_identity_takes_one_sweep() {
        let x0 = vec![0.3, 0.9];
        let rep = fixed_point_iterate(|x, out| out.copy_from_slice(x), x0.clone(), 1e-9, 10).unwrap();
        assert_eq!(rep.solution, x0);
        assert_eq!(rep.iterations, 1);
    }

    #[test]
    fn fixed_point_fj_path() {
        let g = path3();
        let s = [0.0, 0.5, 1.0];
        let step = |z: &[f64], out: &mut [f64]| {
            for i in 0..3 {
                let pull: f64 = g.neighbors(i).map(|(j, w)| w * z[j]).sum();
                out[i] = (s[i] + pull) / (1.0 + g.degree(i));
            }
        };
        let rep = fixed_point_iterate(step, s.to_vec(), 1e-12, 100).unwrap();
        assert_eq!(rep.solution, vec![0.25, 0.5, 0.75]);
        // one sweep reaches the fixed point, the second confirms it
        assert_eq!(rep.iterations, 2);
    }

    #[test]
    fn fixed_point_halving() {
        let tol = 1e-6;
        let rep = fixed_point_iterate(
            |x, out| out.iter_mut().zip(x).for_each(|(o, v)| *o = v / 2.0),
            vec![1.0; 3],
            tol,
            100,
        )
        .unwrap();
        assert!(rep.iterations <= (1.0f64 / tol).log2().ceil() as usize);
        assert!(rep.solution.iter().all(|v| v.abs() <= tol));
    }

    #[test]
    fn fixed_point_non_contraction_fails() {
        let res = fixed_point_iterate(
            |x, out| out.iter_mut().zip(x).for_each(|(o, v)| *o = 2.0 * v),
            vec![1.0],
            1e-9,
            20,
        );
        assert!(matches!(res, Err(SolveError::NotConverged { iterations: 20, .. })));
    }

    #[test]
    fn laplacian_scale_matches_rescaled_system() {
        let g = gen_random_regular(20, 4, 3).unwrap();
        let b: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
        let scaled = DiagPlusLaplacian::new(&g, vec![1.0; 20]).unwrap().with_laplacian_scale(0.25).unwrap();
        let plain = DiagPlusLaplacian::new(&g, vec![4.0; 20]).unwrap();
        let b4: Vec<f64> = b.iter().map(|v| 4.0 * v).collect();
        let x1 = solve_spd(&scaled, &b, 1e-13, 200).unwrap().solution;
        let x2 = solve_spd(&plain, &b4, 1e-13, 200).unwrap().solution;
        assert!(max_abs_diff(&x1, &x2) < 1e-11);
    }

    /// Columns of `(Γ + L)⁻¹` summed give `1ᵀ(Γ + L)⁻¹`.
    fn column_sums(g: &Graph, beta: f64) -> Vec<f64> {
        let n = g.node_count();
        let diag: Vec<f64> = g.degrees().iter().map(|d| 1.0 + beta + beta * d).collect();
        let op = DiagPlusLaplacian::new(g, diag).unwrap();
        (0..n)
            .map(|j| {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                // (Γ+L) is symmetric, so the j-th column sum of its inverse
                // equals the sum of the solution for e_j
                solve_spd(&op, &e, 1e-14, 10 * n).unwrap().solution.iter().sum()
            })
            .collect()
    }

    #[test]
    fn row_sum_bounds_tight_on_regular() {
        let g = gen_random_regular(30, 6, 9).unwrap();
        let beta = 0.3;
        let exact = 1.0 / (beta * 7.0 + 1.0);
        for y in column_sums(&g, beta) {
            assert!((y - exact).abs() <= 1e-10, "{y} vs {exact}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn agrees_with_dense_oracle(n in 5usize..120, m in 1usize..4, seed in any::<u64>()) {
            let g = gen_barabasi_albert(n, m.min(n - 1), seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
            let diag: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..3.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let op = DiagPlusLaplacian::new(&g, diag.clone()).unwrap();
            let x = solve_spd(&op, &b, 1e-13, 10 * n).unwrap().solution;
            let oracle = dense_solve(dense_operator(n, &edge_triples(&g), &diag), b);
            prop_assert!(max_abs_diff(&x, &oracle) <= 1e-8);
        }

        #[test]
        fn inverse_positive(n in 5usize..120, seed in any::<u64>()) {
            let g = gen_barabasi_albert(n, 2.min(n - 1), seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
            let diag: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..2.0)).collect();
            let b: Vec<f64> = (0..n)
                .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..1.0) })
                .collect();
            let op = DiagPlusLaplacian::new(&g, diag).unwrap();
            let x = solve_spd(&op, &b, 1e-13, 10 * n).unwrap().solution;
            prop_assert!(x.iter().all(|&v| v >= -1e-12));
        }

        #[test]
        fn row_sum_bounds(n in 4usize..60, seed in any::<u64>(), beta in 0.001f64..=1.0) {
            let g = gen_barabasi_albert(n, 2.min(n - 1), seed).unwrap();
            let st = g.stats();
            let lo = 1.0 / (beta * (st.d_max + 1.0) + 1.0);
            let hi = 1.0 / (beta * (st.d_min + 1.0) + 1.0);
            for y in column_sums(&g, beta) {
                prop_assert!(y >= lo - 1e-10 && y <= hi + 1e-10);
            }
        }
    }
}
