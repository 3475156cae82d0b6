//! Dirichlet heat kernels on balls and their exhaustion limit.
//!
//! With `delta_x(y) = 1_{y=x} / mu(x)`, the Dirichlet kernel is
//!
//! `p_r(t,x,y) = sum_i exp(t lambda_i) phi_i(x) phi_i(y) / sqrt(mu(x) mu(y))`
//!
//! on interior vertices and zero as soon as `x` or `y` is on the boundary,
//! where `(lambda_i, phi_i)` are the eigenpairs of the symmetrized Dirichlet
//! Laplacian. The global kernel is the limit `r -> infinity`, approached by
//! doubling the radius until successive values agree.

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Ball, WeightedGraph};
use crate::operators::DirichletOperator;

/// `p_r(t, ., .)` on all members of a ball.
#[derive(Clone, Debug)]
pub struct HeatKernelMatrix {
    pub ball: Arc<Ball>,
    pub time: f64,
    pub values: DMatrix<f64>,
}

impl HeatKernelMatrix {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[(x, y)]
    }

    /// `sum_y mu(y) p_r(t, x, y)` for ball member `x`.
    pub fn mass(&self, x: usize) -> f64 {
        (0..self.ball.len()).map(|y| self.ball.mu[y] * self.values[(x, y)]).sum()
    }

    /// `P^r_t f` for `f` on ball members.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let n = self.ball.len();
        (0..n)
            .map(|x| (0..n).map(|y| self.ball.mu[y] * self.values[(x, y)] * f[y]).sum())
            .collect()
    }
}

/// Dirichlet heat kernel from the cached eigenpairs.
pub fn dirichlet_heat_kernel(op: &DirichletOperator, t: f64) -> Result<HeatKernelMatrix> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("time {t} must be nonnegative")));
    }
    let ball = op.ball_arc();
    let n = ball.len();
    let mut values = DMatrix::zeros(n, n);
    if t == 0.0 {
        for &i in &ball.interior {
            values[(i, i)] = 1.0 / ball.mu[i];
        }
        return Ok(HeatKernelMatrix { ball, time: t, values });
    }
    let m = op.interior_len();
    // A = Phi diag(exp(t lambda / 2)), kernel = M^{-1/2} A A^T M^{-1/2}
    let mut a = op.eigenvectors().clone();
    for (k, &lambda) in op.eigenvalues().iter().enumerate() {
        let s = (0.5 * t * lambda).exp();
        a.column_mut(k).scale_mut(s);
    }
    let inner = &a * a.transpose();
    let sq = op.sqrt_mu();
    for p in 0..m {
        let i = ball.interior[p];
        for q in 0..m {
            let j = ball.interior[q];
            values[(i, j)] = inner[(p, q)] / (sq[p] * sq[q]);
        }
    }
    // exact symmetry
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (values[(i, j)] + values[(j, i)]);
            values[(i, j)] = s;
            values[(j, i)] = s;
        }
    }
    Ok(HeatKernelMatrix { ball, time: t, values })
}

/// Same kernel computed as `exp(t L)[x, y] / mu(y)` with a Taylor scaling
/// and squaring matrix exponential of the non-symmetrized Dirichlet
/// Laplacian. Independent of the eigendecomposition route; meant as a
/// cross-check on small balls.
pub fn dirichlet_heat_kernel_expm(ball: &Ball, t: f64) -> Result<HeatKernelMatrix> {
    if ball.interior.is_empty() {
        return Err(Error::EmptyInterior);
    }
    let n = ball.len();
    let m = ball.interior.len();
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in ball.interior.iter().enumerate() {
        pos[i] = k;
    }
    let mut l = DMatrix::zeros(m, m);
    for (a, &i) in ball.interior.iter().enumerate() {
        l[(a, a)] = -ball.degree[i] / ball.mu[i];
        for &(j, w) in &ball.adj[i] {
            if pos[j] != usize::MAX {
                l[(a, pos[j])] = w / ball.mu[i];
            }
        }
    }
    let e = expm(&(l * t));
    let mut values = DMatrix::zeros(n, n);
    for (a, &i) in ball.interior.iter().enumerate() {
        for (b, &j) in ball.interior.iter().enumerate() {
            values[(i, j)] = e[(a, b)] / ball.mu[j];
        }
    }
    Ok(HeatKernelMatrix {
        ball: Arc::new(ball.clone()),
        time: t,
        values,
    })
}

fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let norm = a.iter().map(|x| x.abs()).fold(0.0, f64::max) * a.nrows() as f64;
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(squarings);
    let n = a.nrows();
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if term.iter().all(|x| x.abs() < 1e-18) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// `P^r_t f` on a ball, via the spectral decomposition.
pub fn semigroup_apply(op: &DirichletOperator, t: f64, f: &[f64]) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("time {t} must be nonnegative")));
    }
    if f.len() != op.ball().len() {
        return Err(Error::InvalidArgument("function length differs from ball size".into()));
    }
    if t == 0.0 {
        let b = op.ball();
        return Ok((0..b.len()).map(|i| if b.boundary[i] { 0.0 } else { f[i] }).collect());
    }
    Ok(op.propagate(t, f))
}

/// Result of an exhaustion run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Exhausted<T> {
    pub value: T,
    pub radius: u32,
    /// Value at the previous radius of the doubling sequence.
    pub previous: Option<T>,
    pub converged: bool,
}

/// Radius-doubling exhaustion around a fixed center with a per-radius
/// operator cache.
///
/// Radii are powers of two starting at [`Exhaustion::MIN_RADIUS`], capped
/// by the largest ball that fits in the stored truncation. On a finite
/// graph the ball covering the whole graph gives the exact kernel.
pub struct Exhaustion<'g> {
    graph: &'g WeightedGraph,
    center: usize,
    max_radius: u32,
    exact_radius: Option<u32>,
    cache: BTreeMap<u32, Arc<DirichletOperator>>,
}

impl<'g> Exhaustion<'g> {
    pub const MIN_RADIUS: u32 = 4;

    pub fn new(graph: &'g WeightedGraph, center: usize) -> Result<Self> {
        let max_radius = graph.max_ball_radius(center)?;
        let exact_radius = if graph.has_frontier() { None } else { Some(max_radius) };
        Ok(Exhaustion {
            graph,
            center,
            max_radius,
            exact_radius,
            cache: BTreeMap::new(),
        })
    }

    pub fn graph(&self) -> &'g WeightedGraph {
        self.graph
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn max_radius(&self) -> u32 {
        self.max_radius
    }

    pub fn operator(&mut self, r: u32) -> Result<Arc<DirichletOperator>> {
        if let Some(op) = self.cache.get(&r) {
            return Ok(Arc::clone(op));
        }
        let op = Arc::new(DirichletOperator::new(self.graph.ball(self.center, r)?)?);
        self.cache.insert(r, Arc::clone(&op));
        Ok(op)
    }

    /// Doubling sequence of radii, starting at the first power of two that
    /// is `>= min_radius`.
    pub fn radii(&self, min_radius: u32) -> Vec<u32> {
        let mut r = Self::MIN_RADIUS;
        while r < min_radius {
            r *= 2;
        }
        let mut out = Vec::new();
        while r < self.max_radius {
            out.push(r);
            r *= 2;
        }
        out.push(self.max_radius);
        out
    }

    /// Evaluate `eval` on growing balls until two successive values agree to
    /// `tol` in sup-norm. `eval` must be monotone in the radius for the
    /// final value to be a lower bound when the truncation runs out.
    pub fn converge<F>(&mut self, min_radius: u32, tol: f64, mut eval: F) -> Result<Exhausted<Vec<f64>>>
    where
        F: FnMut(&DirichletOperator) -> Vec<f64>,
    {
        let min_radius = match self.exact_radius {
            Some(r) => min_radius.min(r),
            None => min_radius,
        };
        if min_radius > self.max_radius {
            return Err(Error::TruncationTooSmall {
                center: self.graph.id(self.center).to_string(),
                radius: min_radius,
                edge_distance: self.max_radius + 1,
            });
        }
        let mut previous: Option<(u32, Vec<f64>)> = None;
        let mut before: Option<(u32, Vec<f64>)> = None;
        for r in self.radii(min_radius) {
            let op = self.operator(r)?;
            let value = eval(&op);
            let exact = self.exact_radius == Some(r);
            let agrees = previous.as_ref().is_some_and(|(_, prev)| {
                let diff = prev
                    .iter()
                    .zip(&value)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                diff < tol
            });
            if exact || agrees {
                return Ok(Exhausted {
                    value,
                    radius: r,
                    previous: previous.map(|p| p.1),
                    converged: true,
                });
            }
            before = previous.take();
            previous = Some((r, value));
        }
        let (radius, value) = previous.expect("at least one radius");
        Ok(Exhausted {
            value,
            radius,
            previous: before.map(|p| p.1),
            converged: false,
        })
    }

    /// `p(t, center, y)` for each `y` in `targets` (graph indices).
    pub fn kernel_values(&mut self, t: f64, targets: &[usize], tol: f64) -> Result<Exhausted<Vec<f64>>> {
        let dist = self.graph.bfs(self.center);
        let reach = targets.iter().map(|&y| dist[y]).max().unwrap_or(0);
        let center = self.center;
        self.converge(reach + 1, tol, |op| {
            let b = op.ball();
            let row = op.kernel_row(t, b.local(center).expect("center in ball"));
            targets.iter().map(|&y| b.local(y).map_or(0.0, |i| row[i])).collect()
        })
    }

    /// `P_t f(center)` for `f` on the whole stored graph.
    pub fn semigroup_at_center(&mut self, t: f64, f: &[f64], min_radius: u32, tol: f64) -> Result<Exhausted<f64>> {
        let center = self.center;
        let out = self.converge(min_radius, tol, |op| {
            let b = op.ball();
            let row = op.kernel_row(t, b.local(center).expect("center in ball"));
            vec![(0..b.len()).map(|i| b.mu[i] * row[i] * f[b.members[i]]).sum()]
        })?;
        Ok(Exhausted {
            value: out.value[0],
            radius: out.radius,
            previous: out.previous.map(|p| p[0]),
            converged: out.converged,
        })
    }
}

/// `p(t, x, .)` on the whole stored graph (zero outside the final ball),
/// converged in sup-norm. Values are lower bounds when not converged;
/// rounding negatives are clamped to zero.
pub fn kernel_profile(g: &WeightedGraph, t: f64, x: usize, tol: f64) -> Result<Exhausted<Vec<f64>>> {
    if !(t >= 0.0 && tol > 0.0) {
        return Err(Error::InvalidArgument(format!("need t >= 0 and tol > 0 (t = {t}, tol = {tol})")));
    }
    let n = g.len();
    let mut ex = Exhaustion::new(g, x)?;
    ex.converge(1, tol, |op| {
        let b = op.ball();
        let row = op.kernel_row(t, b.local(x).expect("center in ball"));
        let mut full = vec![0.0; n];
        for (i, &v) in b.members.iter().enumerate() {
            full[v] = row[i].max(0.0);
        }
        full
    })
}

/// Converged `p(t, x, y)` and the radius used.
pub fn heat_kernel(g: &WeightedGraph, t: f64, x: usize, y: usize, tol: f64) -> Result<(f64, u32)> {
    if !(t > 0.0 && tol > 0.0) {
        return Err(Error::InvalidArgument(format!("need t > 0 and tol > 0 (t = {t}, tol = {tol})")));
    }
    g.check(y)?;
    let mut ex = Exhaustion::new(g, x)?;
    let out = ex.kernel_values(t, &[y], tol)?;
    if out.converged {
        Ok((out.value[0], out.radius))
    } else {
        Err(exhausted_error(&ex, &out))
    }
}

pub(crate) fn exhausted_error(ex: &Exhaustion<'_>, out: &Exhausted<Vec<f64>>) -> Error {
    let radii = ex.radii(0);
    let r_prev = radii
        .iter()
        .rev()
        .find(|&&r| r < out.radius)
        .copied()
        .unwrap_or(out.radius);
    Error::TruncationExhausted {
        r_prev,
        r_last: out.radius,
        prev: out.previous.as_ref().map_or(f64::NAN, |p| p[0]),
        last: out.value[0],
    }
}

/// Stochastic-completeness mass `sum_y mu(y) p(t, x, y)`.
pub fn mass(g: &WeightedGraph, t: f64, x: usize, tol: f64) -> Result<(f64, u32)> {
    if !(t > 0.0 && tol > 0.0) {
        return Err(Error::InvalidArgument(format!("need t > 0 and tol > 0 (t = {t}, tol = {tol})")));
    }
    let ones = vec![1.0; g.len()];
    let mut ex = Exhaustion::new(g, x)?;
    let out = ex.semigroup_at_center(t, &ones, 1, tol)?;
    if out.converged {
        Ok((out.value, out.radius))
    } else {
        let out = Exhausted {
            value: vec![out.value],
            radius: out.radius,
            previous: out.previous.map(|p| vec![p]),
            converged: false,
        };
        Err(exhausted_error(&ex, &out))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FitPoint {
    pub t: f64,
    pub x: String,
    pub y: String,
    pub distance: u32,
    pub kernel: f64,
    pub volume: f64,
}

/// Empirical constants for the two-sided Gaussian bounds
/// `c2/V(x,sqrt t) exp(-c3 d^2/t) <= p(t,x,y) <= c1/V(x,sqrt t)` on a grid.
///
/// These are fitted stand-ins for constants that are only known to exist;
/// every report that consumes them says so.
#[derive(Clone, Debug, Serialize)]
pub struct GaussianFit {
    pub c1_hat: f64,
    pub c2_hat: f64,
    pub c3_hat: f64,
    pub t0: f64,
    pub t_grid: Vec<f64>,
    pub points: Vec<FitPoint>,
    /// Least-squares line `log(p V) ~ intercept - c3 d^2/t` before the shift.
    pub ls_intercept: f64,
    pub ls_slope: f64,
    pub ls_rms: f64,
}

impl GaussianFit {
    pub fn upper(&self, volume: f64) -> f64 {
        self.c1_hat / volume
    }

    pub fn lower(&self, volume: f64, d: u32, t: f64) -> f64 {
        self.c2_hat / volume * (-self.c3_hat * (d as f64).powi(2) / t).exp()
    }
}

pub fn gaussian_fit(
    g: &WeightedGraph,
    t_grid: &[f64],
    pairs: &[(usize, usize)],
    t0: f64,
    tol: f64,
) -> Result<GaussianFit> {
    if t_grid.is_empty() || pairs.is_empty() {
        return Err(Error::DegenerateFit("empty time grid or pair set".into()));
    }
    if let Some(&t) = t_grid.iter().find(|&&t| !(t > t0)) {
        return Err(Error::InvalidArgument(format!("grid time {t} is not above t0 = {t0}")));
    }
    let mut by_center: HashMap<usize, Vec<usize>> = HashMap::new();
    for &(x, y) in pairs {
        g.check(x)?;
        g.check(y)?;
        by_center.entry(x).or_default().push(y);
    }
    let mut centers: Vec<usize> = by_center.keys().copied().collect();
    centers.sort_unstable();

    let mut points = Vec::new();
    for x in centers {
        let targets = &by_center[&x];
        let dist = g.bfs(x);
        let mut ex = Exhaustion::new(g, x)?;
        for &t in t_grid {
            let out = ex.kernel_values(t, targets, tol)?;
            if !out.converged {
                return Err(exhausted_error(&ex, &out));
            }
            let volume = g.volume_real(x, t.sqrt())?;
            for (k, &y) in targets.iter().enumerate() {
                points.push(FitPoint {
                    t,
                    x: g.id(x).to_string(),
                    y: g.id(y).to_string(),
                    distance: dist[y],
                    kernel: out.value[k],
                    volume,
                });
            }
        }
    }

    let c1_hat = points.iter().map(|p| p.kernel * p.volume).fold(0.0, f64::max);
    let xs: Vec<f64> = points.iter().map(|p| (p.distance as f64).powi(2) / p.t).collect();
    let ys: Vec<f64> = points.iter().map(|p| (p.kernel * p.volume).ln()).collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::DegenerateFit("kernel value underflowed to zero".into()));
    }
    let (intercept, slope) = least_squares(&xs, &ys)
        .ok_or_else(|| Error::DegenerateFit("need at least two distinct d^2/t values".into()))?;
    if !(slope < 0.0) {
        return Err(Error::DegenerateFit(format!("no off-diagonal decay (slope {slope})")));
    }
    let c3_hat = -slope;
    let c2_hat = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y + c3_hat * x).exp())
        .fold(f64::INFINITY, f64::min);
    let ls_rms = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / xs.len() as f64)
        .sqrt();
    Ok(GaussianFit {
        c1_hat,
        c2_hat,
        c3_hat,
        t0,
        t_grid: t_grid.to_vec(),
        points,
        ls_intercept: intercept,
        ls_slope: slope,
        ls_rms,
    })
}

/// Ordinary least squares `y ~ a + b x`; `None` if `x` is constant.
pub(crate) fn least_squares(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 1e-14 * (1.0 + mx * mx) * n) {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    Some((my - b * mx, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::MuMode;

    #[test]
    fn p3_kernel_closed_form() {
        let g = WeightedGraph::lattice(1, 4, MuMode::Degree).unwrap();
        let o = g.point(&[0]).unwrap();
        let op = DirichletOperator::new(g.ball(o, 1).unwrap()).unwrap();
        for t in [0.0, 0.3, 1.0, 2.5] {
            let k = dirichlet_heat_kernel(&op, t).unwrap();
            assert!((k.get(0, 0) - (-t).exp() / 2.0).abs() < 1e-15);
            assert_eq!(k.get(1, 1), 0.0);
            assert_eq!(k.get(0, 2), 0.0);
        }
    }

    #[test]
    fn t_zero_is_normalized_delta() {
        let g = WeightedGraph::lattice(1, 10, MuMode::Degree).unwrap();
        let op = DirichletOperator::new(g.ball(g.point(&[3]).unwrap(), 4).unwrap()).unwrap();
        let k = dirichlet_heat_kernel(&op, 0.0).unwrap();
        let b = op.ball();
        for i in 0..b.len() {
            for j in 0..b.len() {
                let want = if i == j && !b.boundary[i] { 1.0 / b.mu[i] } else { 0.0 };
                assert_eq!(k.get(i, j), want);
            }
        }
    }

    #[test]
    fn zero_function_stays_zero() {
        let g = WeightedGraph::lattice(1, 10, MuMode::Degree).unwrap();
        let op = DirichletOperator::new(g.ball(g.point(&[0]).unwrap(), 5).unwrap()).unwrap();
        assert!(semigroup_apply(&op, 1.3, &vec![0.0; op.ball().len()])
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn truncation_exhausted_is_reported() {
        let g = WeightedGraph::lattice(1, 6, MuMode::Degree).unwrap();
        let o = g.point(&[0]).unwrap();
        assert!(matches!(
            heat_kernel(&g, 50.0, o, o, 1e-12),
            Err(Error::TruncationExhausted { .. })
        ));
    }

    #[test]
    fn finite_graph_exhaustion_is_exact() {
        let g = WeightedGraph::from_edges(
            &[("a".into(), "b".into(), 1.0), ("b".into(), "c".into(), 2.0)],
            &[("a".into(), 1.0), ("b".into(), 1.0), ("c".into(), 1.0)],
        )
        .unwrap();
        let (m, _) = mass(&g, 3.0, 0, 1e-12).unwrap();
        assert!((m - 1.0).abs() < 1e-13);
    }

    #[test]
    fn least_squares_line() {
        let (a, b) = least_squares(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((a - 1.0).abs() < 1e-14 && (b - 2.0).abs() < 1e-14);
        assert!(least_squares(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }
}
