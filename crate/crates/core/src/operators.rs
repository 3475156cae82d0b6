//! The mu-Laplacian, the Dirichlet Laplacian on balls, the gradient forms
//! `Gamma` / `Gamma_2` and the exponential curvature-dimension residual.
//!
//! Sign convention: `Delta f(x) = (1/mu(x)) sum_y w_xy (f(y) - f(x))` is
//! negative semidefinite and the heat semigroup is `exp(t Delta_r)`.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Ball, WeightedGraph};

fn require_complete(g: &WeightedGraph, x: usize) -> Result<()> {
    g.check(x)?;
    if g.is_frontier(x) {
        return Err(Error::MissingNeighborValue(g.id(x).to_string()));
    }
    Ok(())
}

fn lap_at(g: &WeightedGraph, f: &impl Fn(usize) -> f64, x: usize) -> f64 {
    let fx = f(x);
    g.neighbors(x).iter().map(|&(y, w)| w * (f(y) - fx)).sum::<f64>() / g.mu(x)
}

fn gamma_at(g: &WeightedGraph, f: &impl Fn(usize) -> f64, h: &impl Fn(usize) -> f64, x: usize) -> f64 {
    let (fx, hx) = (f(x), h(x));
    g.neighbors(x)
        .iter()
        .map(|&(y, w)| w * (f(y) - fx) * (h(y) - hx))
        .sum::<f64>()
        / (2.0 * g.mu(x))
}

/// `Gamma_2(f, h)(x)` from `2 Gamma_2 = Delta Gamma(f,h) - Gamma(f, Delta h) - Gamma(Delta f, h)`.
/// Reads `f`, `h` on the 2-hop neighborhood of `x`.
fn gamma2_at(g: &WeightedGraph, f: &impl Fn(usize) -> f64, h: &impl Fn(usize) -> f64, x: usize) -> f64 {
    let gfh = |z: usize| gamma_at(g, f, h, z);
    let lap_f = |z: usize| lap_at(g, f, z);
    let lap_h = |z: usize| lap_at(g, h, z);
    let (gx, lfx, lhx, fx, hx) = (gfh(x), lap_f(x), lap_h(x), f(x), h(x));
    let mut delta_gamma = 0.0;
    let mut gamma_f_lh = 0.0;
    let mut gamma_lf_h = 0.0;
    for &(y, w) in g.neighbors(x) {
        delta_gamma += w * (gfh(y) - gx);
        gamma_f_lh += w * (f(y) - fx) * (lap_h(y) - lhx);
        gamma_lf_h += w * (lap_f(y) - lfx) * (h(y) - hx);
    }
    let mu = g.mu(x);
    0.5 * (delta_gamma / mu - gamma_f_lh / (2.0 * mu) - gamma_lf_h / (2.0 * mu))
}

fn check_len(g: &WeightedGraph, f: &[f64]) -> Result<()> {
    if f.len() != g.len() {
        return Err(Error::InvalidArgument(format!(
            "function has {} values, graph has {} vertices",
            f.len(),
            g.len()
        )));
    }
    Ok(())
}

/// `Delta f(x)`.
pub fn laplacian_apply(g: &WeightedGraph, f: &[f64], x: usize) -> Result<f64> {
    check_len(g, f)?;
    require_complete(g, x)?;
    Ok(lap_at(g, &|v| f[v], x))
}

/// `Gamma(f, h)(x)`.
pub fn gamma(g: &WeightedGraph, f: &[f64], h: &[f64], x: usize) -> Result<f64> {
    check_len(g, f)?;
    check_len(g, h)?;
    require_complete(g, x)?;
    Ok(gamma_at(g, &|v| f[v], &|v| h[v], x))
}

/// `Gamma_2(f, h)(x)`. Needs `x` and all its neighbors away from the
/// truncation edge.
pub fn gamma2(g: &WeightedGraph, f: &[f64], h: &[f64], x: usize) -> Result<f64> {
    check_len(g, f)?;
    check_len(g, h)?;
    require_two_hop(g, x)?;
    Ok(gamma2_at(g, &|v| f[v], &|v| h[v], x))
}

fn require_two_hop(g: &WeightedGraph, x: usize) -> Result<()> {
    require_complete(g, x)?;
    for &(y, _) in g.neighbors(x) {
        require_complete(g, y)?;
    }
    Ok(())
}

fn two_hop(g: &WeightedGraph, x: usize) -> Vec<usize> {
    let mut out = vec![x];
    for &(y, _) in g.neighbors(x) {
        out.push(y);
        out.extend(g.neighbors(y).iter().map(|&(z, _)| z));
    }
    out.sort_unstable();
    out.dedup();
    out
}

fn cde_residual_with(g: &WeightedGraph, x: usize, n: f64, k: f64, f: &impl Fn(usize) -> f64) -> f64 {
    let gamma_f = |z: usize| gamma_at(g, f, f, z);
    let ratio = |z: usize| gamma_f(z) / f(z);
    let log_f = |z: usize| f(z).ln();
    let fx = f(x);
    let lap_log = lap_at(g, &log_f, x);
    gamma2_at(g, f, f, x) - gamma_at(g, f, &ratio, x) - fx * fx * lap_log * lap_log / n - k * gamma_f(x)
}

/// Slack of `CDE'(x, n, K)` for the positive test function `f`:
///
/// `Gamma_2(f)(x) - Gamma(f, Gamma(f)/f)(x) - f(x)^2 (Delta log f)(x)^2 / n - K Gamma(f)(x)`.
///
/// The inequality holds for this `f` iff the result is `>= 0`.
pub fn cde_residual(g: &WeightedGraph, x: usize, n: f64, k: f64, f: &[f64]) -> Result<f64> {
    check_len(g, f)?;
    if !(n > 0.0) {
        return Err(Error::InvalidArgument(format!("dimension parameter n = {n} must be positive")));
    }
    require_two_hop(g, x)?;
    for v in two_hop(g, x) {
        if !(f[v] > 0.0) {
            return Err(Error::NonpositiveTestFunction(g.id(v).to_string()));
        }
    }
    Ok(cde_residual_with(g, x, n, k, &|v| f[v]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    NoViolationFound,
    Violated,
}

/// Outcome of a randomized search for `CDE'(n, K)` violations.
///
/// Residuals are normalized by `f(x)^2` (the residual is 2-homogeneous in
/// `f`), so `worst_residual` is comparable across trials.
#[derive(Clone, Debug, Serialize)]
pub struct CurvatureReport {
    pub n: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub verdict: Verdict,
    pub worst_residual: f64,
    pub tolerance: f64,
    pub witness_vertex: String,
    pub witness: BTreeMap<String, f64>,
    pub trials: usize,
    pub vertices_tested: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct SearchOptions {
    pub trials: usize,
    pub seed: u64,
    pub initial_step: f64,
    pub sweeps: usize,
    pub tolerance: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            trials: 32,
            seed: 0,
            initial_step: 1e-2,
            sweeps: 50,
            tolerance: 1e-10,
        }
    }
}

struct Candidate {
    residual: f64,
    vertex: usize,
    support: Vec<usize>,
    values: Vec<f64>,
}

fn refine_trial(g: &WeightedGraph, x: usize, n: f64, k: f64, opts: &SearchOptions, stream: u64) -> Candidate {
    let support = two_hop(g, x);
    let pos = |v: usize| support.binary_search(&v).expect("in support");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(stream);
    let dist = LogNormal::new(0.0, 1.0).expect("valid log-normal");
    let mut values: Vec<f64> = support.iter().map(|_| dist.sample(&mut rng)).collect();

    let objective = |vals: &[f64]| {
        let f = |v: usize| vals[pos(v)];
        let fx = f(x);
        cde_residual_with(g, x, n, k, &f) / (fx * fx)
    };

    let mut best = objective(&values);
    let mut step = opts.initial_step;
    for _ in 0..opts.sweeps {
        let mut improved = false;
        for i in 0..values.len() {
            for factor in [1.0 + step, 1.0 - step] {
                let old = values[i];
                values[i] = old * factor;
                let r = objective(&values);
                if r < best {
                    best = r;
                    improved = true;
                } else {
                    values[i] = old;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    let scale = values[pos(x)];
    for v in &mut values {
        *v /= scale;
    }
    Candidate {
        residual: best,
        vertex: x,
        support,
        values,
    }
}

/// Randomized search for violations of `CDE'(n, K)` over all vertices whose
/// 2-hop neighborhood lies inside the stored graph.
///
/// Each `(vertex, trial)` pair draws log-normal test values from its own
/// ChaCha stream, so the report does not depend on thread scheduling.
/// A `NoViolationFound` verdict is evidence, never proof.
pub fn cde_search(g: &WeightedGraph, n: f64, k: f64, opts: &SearchOptions) -> Result<CurvatureReport> {
    if opts.trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    if !(n > 0.0) {
        return Err(Error::InvalidArgument(format!("dimension parameter n = {n} must be positive")));
    }
    let vertices: Vec<usize> = (0..g.len()).filter(|&x| require_two_hop(g, x).is_ok()).collect();
    if vertices.is_empty() {
        return Err(Error::MissingNeighborValue("no vertex has a complete 2-hop neighborhood".into()));
    }
    let jobs: Vec<(usize, usize)> = vertices
        .iter()
        .flat_map(|&x| (0..opts.trials).map(move |t| (x, t)))
        .collect();
    let candidates: Vec<Candidate> = jobs
        .par_iter()
        .map(|&(x, t)| refine_trial(g, x, n, k, opts, (x * opts.trials + t) as u64))
        .collect();
    // first minimum in job order, independent of scheduling
    let worst = candidates
        .iter()
        .fold(None::<&Candidate>, |acc, c| match acc {
            Some(a) if a.residual <= c.residual => Some(a),
            _ => Some(c),
        })
        .expect("at least one job");
    let verdict = if worst.residual < -opts.tolerance {
        Verdict::Violated
    } else {
        Verdict::NoViolationFound
    };
    Ok(CurvatureReport {
        n,
        k,
        verdict,
        worst_residual: worst.residual,
        tolerance: opts.tolerance,
        witness_vertex: g.id(worst.vertex).to_string(),
        witness: worst
            .support
            .iter()
            .zip(&worst.values)
            .map(|(&v, &val)| (g.id(v).to_string(), val))
            .collect(),
        trials: opts.trials,
        vertices_tested: vertices.len(),
        seed: opts.seed,
    })
}

/// The Dirichlet Laplacian of a ball in the symmetrized coordinates
/// `S = M^{1/2} L M^{-1/2}` on interior vertices, with its cached
/// eigendecomposition (eigenvalues sorted from 0 downwards).
#[derive(Clone, Debug)]
pub struct DirichletOperator {
    ball: Arc<Ball>,
    matrix: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    sqrt_mu: Vec<f64>,
    /// Interior position of each ball member, `None` on the boundary.
    slot: Vec<Option<usize>>,
}

impl DirichletOperator {
    pub fn new(ball: impl Into<Arc<Ball>>) -> Result<Self> {
        let ball: Arc<Ball> = ball.into();
        let n = ball.interior.len();
        if n == 0 {
            return Err(Error::EmptyInterior);
        }
        let mut slot = vec![None; ball.len()];
        for (k, &i) in ball.interior.iter().enumerate() {
            slot[i] = Some(k);
        }
        let sqrt_mu: Vec<f64> = ball.interior.iter().map(|&i| ball.mu[i].sqrt()).collect();
        let mut matrix = DMatrix::zeros(n, n);
        for (a, &i) in ball.interior.iter().enumerate() {
            matrix[(a, a)] = -ball.degree[i] / ball.mu[i];
            for &(j, w) in &ball.adj[i] {
                if let Some(b) = slot[j] {
                    matrix[(a, b)] = w / (sqrt_mu[a] * sqrt_mu[b]);
                }
            }
        }
        // faer's self-adjoint solver; nalgebra's SymmetricEigen returned
        // eigenpairs with O(1e-1) residuals on small weighted graphs
        let eig = faer::Mat::<f64>::from_fn(n, n, |r, c| matrix[(r, c)])
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|e| Error::InvalidArgument(format!("eigendecomposition failed: {e:?}")))?;
        let (values, vectors) = (eig.S(), eig.U());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&p, &q| values[q].total_cmp(&values[p]));
        let eigenvalues = DVector::from_iterator(n, order.iter().map(|&k| values[k]));
        let eigenvectors = DMatrix::from_fn(n, n, |r, c| vectors[(r, order[c])]);
        Ok(DirichletOperator {
            ball,
            matrix,
            eigenvalues,
            eigenvectors,
            sqrt_mu,
            slot,
        })
    }

    pub fn ball(&self) -> &Ball {
        &self.ball
    }

    pub fn ball_arc(&self) -> Arc<Ball> {
        Arc::clone(&self.ball)
    }

    /// The symmetrized interior matrix `S`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors of `S`, one per column.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn interior_len(&self) -> usize {
        self.sqrt_mu.len()
    }

    pub fn sqrt_mu(&self) -> &[f64] {
        &self.sqrt_mu
    }

    /// Interior position of ball member `i`.
    pub fn slot(&self, i: usize) -> Option<usize> {
        self.slot[i]
    }

    /// `Delta_r f` for `f` given on ball members; boundary values of `f` are
    /// treated as zero and the result vanishes on the boundary.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let b = &self.ball;
        let mut out = vec![0.0; b.len()];
        for &i in &b.interior {
            let s: f64 = b.adj[i]
                .iter()
                .map(|&(j, w)| w * if b.boundary[j] { 0.0 } else { f[j] })
                .sum();
            out[i] = (s - b.degree[i] * f[i]) / b.mu[i];
        }
        out
    }

    /// Spectral coordinates `Phi^T M^{1/2} f` of a function on ball members.
    pub fn to_spectral(&self, f: &[f64]) -> DVector<f64> {
        let v = DVector::from_iterator(
            self.interior_len(),
            self.ball.interior.iter().zip(&self.sqrt_mu).map(|(&i, s)| s * f[i]),
        );
        self.eigenvectors.tr_mul(&v)
    }

    /// Inverse of [`Self::to_spectral`], zero on the boundary.
    pub fn from_spectral(&self, c: &DVector<f64>) -> Vec<f64> {
        let v = &self.eigenvectors * c;
        let mut out = vec![0.0; self.ball.len()];
        for (k, &i) in self.ball.interior.iter().enumerate() {
            out[i] = v[k] / self.sqrt_mu[k];
        }
        out
    }

    /// `P^r_t f = exp(t Delta_r) f` for `f` on ball members.
    pub fn propagate(&self, t: f64, f: &[f64]) -> Vec<f64> {
        let mut c = self.to_spectral(f);
        for (ci, &lambda) in c.iter_mut().zip(self.eigenvalues.iter()) {
            *ci *= (t * lambda).exp();
        }
        self.from_spectral(&c)
    }

    /// Row `y -> p_r(t, x, y)` of the Dirichlet heat kernel for ball member `x`.
    pub fn kernel_row(&self, t: f64, x: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.ball.len()];
        let Some(a) = self.slot[x] else {
            return out;
        };
        let weights: Vec<f64> = self
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(k, &lambda)| (t * lambda).exp() * self.eigenvectors[(a, k)])
            .collect();
        for (b, &j) in self.ball.interior.iter().enumerate() {
            let s: f64 = weights
                .iter()
                .enumerate()
                .map(|(k, w)| w * self.eigenvectors[(b, k)])
                .sum();
            out[j] = s / (self.sqrt_mu[a] * self.sqrt_mu[b]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{MuMode, VertexId};

    fn p3_finite() -> WeightedGraph {
        let e: Vec<(VertexId, VertexId, f64)> = vec![("a".into(), "b".into(), 1.0), ("b".into(), "c".into(), 1.0)];
        WeightedGraph::from_edges(&e, &[("a".into(), 2.0), ("b".into(), 2.0), ("c".into(), 2.0)]).unwrap()
    }

    #[test]
    fn laplacian_examples() {
        let g = WeightedGraph::lattice(1, 10, MuMode::Degree).unwrap();
        let coord = |v: usize| match g.id(v) {
            VertexId::Point(p) => p[0] as f64,
            _ => unreachable!(),
        };
        let konst = vec![3.5; g.len()];
        let lin: Vec<f64> = (0..g.len()).map(coord).collect();
        let sq: Vec<f64> = (0..g.len()).map(|v| coord(v).powi(2)).collect();
        for x in -9..=9 {
            let v = g.point(&[x]).unwrap();
            assert_eq!(laplacian_apply(&g, &konst, v).unwrap(), 0.0);
            assert_eq!(laplacian_apply(&g, &lin, v).unwrap(), 0.0);
            assert_eq!(laplacian_apply(&g, &sq, v).unwrap(), 1.0);
        }
        let edge = g.point(&[10]).unwrap();
        assert!(matches!(
            laplacian_apply(&g, &konst, edge),
            Err(Error::MissingNeighborValue(_))
        ));
    }

    #[test]
    fn gamma_examples() {
        let g = WeightedGraph::lattice(1, 10, MuMode::Degree).unwrap();
        let lin: Vec<f64> = (0..g.len())
            .map(|v| match g.id(v) {
                VertexId::Point(p) => p[0] as f64,
                _ => unreachable!(),
            })
            .collect();
        let o = g.point(&[0]).unwrap();
        assert_eq!(gamma(&g, &lin, &lin, o).unwrap(), 0.5);
        assert_eq!(gamma(&g, &vec![1.0; g.len()], &lin, o).unwrap(), 0.0);
        let near_edge = g.point(&[9]).unwrap();
        assert!(gamma(&g, &lin, &lin, near_edge).is_ok());
        assert!(matches!(
            gamma2(&g, &lin, &lin, near_edge),
            Err(Error::MissingNeighborValue(_))
        ));
    }

    #[test]
    fn p3_dirichlet_single_eigenvalue() {
        let g = WeightedGraph::lattice(1, 3, MuMode::Degree).unwrap();
        let op = DirichletOperator::new(g.ball(g.point(&[0]).unwrap(), 1).unwrap()).unwrap();
        assert_eq!(op.interior_len(), 1);
        assert_eq!(op.eigenvalues()[0], -1.0);
        assert_eq!(op.apply(&[0.0, 0.0, 0.0]), vec![0.0; 3]);
    }

    #[test]
    fn z1_ball_tridiagonal_spectrum() {
        let g = WeightedGraph::lattice(1, 8, MuMode::Degree).unwrap();
        let op = DirichletOperator::new(g.ball(g.point(&[0]).unwrap(), 5).unwrap()).unwrap();
        assert_eq!(op.interior_len(), 9);
        // closed form for the tridiagonal (1/2, -1, 1/2) of size 9
        let mut expected: Vec<f64> = (1..=9)
            .map(|k| -1.0 + (k as f64 * std::f64::consts::PI / 10.0).cos())
            .collect();
        expected.sort_by(|a, b| b.total_cmp(a));
        for (got, want) in op.eigenvalues().iter().zip(&expected) {
            assert!((got - want).abs() < 1e-13, "{got} vs {want}");
        }
        assert!(op.eigenvalues().iter().all(|&l| l < 0.0));
    }

    #[test]
    fn empty_interior() {
        let g = WeightedGraph::lattice(1, 3, MuMode::Degree).unwrap();
        let b = g.ball(g.point(&[0]).unwrap(), 0).unwrap();
        assert!(matches!(DirichletOperator::new(b), Err(Error::EmptyInterior)));
    }

    #[test]
    fn cde_constant_and_homogeneous() {
        let g = WeightedGraph::lattice(1, 6, MuMode::Counting).unwrap();
        let o = g.point(&[0]).unwrap();
        assert_eq!(cde_residual(&g, o, 2.0, 0.0, &vec![2.0; g.len()]).unwrap(), 0.0);
        let f: Vec<f64> = (0..g.len()).map(|v| 1.0 + 0.3 * (v as f64).sin().abs()).collect();
        let f3: Vec<f64> = f.iter().map(|x| 3.0 * x).collect();
        let r1 = cde_residual(&g, o, 2.0, 0.5, &f).unwrap();
        let r3 = cde_residual(&g, o, 2.0, 0.5, &f3).unwrap();
        assert!((r3 - 9.0 * r1).abs() <= 1e-12 * r3.abs().max(1e-300));
        let mut bad = f.clone();
        bad[g.point(&[2]).unwrap()] = 0.0;
        assert!(matches!(
            cde_residual(&g, o, 2.0, 0.0, &bad),
            Err(Error::NonpositiveTestFunction(_))
        ));
    }

    #[test]
    fn large_curvature_fails_on_p3() {
        let g = p3_finite();
        let rep = cde_search(&g, 2.0, 10.0, &SearchOptions { trials: 8, ..Default::default() }).unwrap();
        assert_eq!(rep.verdict, Verdict::Violated);
    }

    #[test]
    fn trivial_constraint_not_violated() {
        let g = p3_finite();
        let rep = cde_search(&g, 1e9, -1e9, &SearchOptions { trials: 8, ..Default::default() }).unwrap();
        assert_eq!(rep.verdict, Verdict::NoViolationFound);
    }
}
