//! The semilinear problem `u_t = Delta u + u^{1+alpha}`, `u(0) = a`, on a
//! ball with Dirichlet truncation (or on a whole finite graph).
//!
//! Two solvers: a method-of-lines Dormand-Prince 5(4) integrator with blow-up
//! detection, and Picard iteration of the Duhamel formula
//! `u(t) = P_t a + int_0^t P_{t-s} u(s)^{1+alpha} ds`.

use std::sync::Arc;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::Ball;
use crate::operators::DirichletOperator;

/// Attached to every result computed on a Dirichlet truncation.
pub const TRUNCATION_CAVEAT: &str = "Dirichlet truncation of an infinite graph: solutions on a ball are dominated by \
the full-graph solution, so blow-up here certifies blow-up on the full graph, while a bounded trajectory does not \
certify a global solution";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMode {
    DirichletTruncation,
    None,
}

#[derive(Clone, Debug)]
pub struct Problem {
    pub ball: Arc<Ball>,
    pub alpha: f64,
    /// Initial data on ball members; boundary entries are forced to zero.
    pub initial: Vec<f64>,
    pub horizon: f64,
}

impl Problem {
    pub fn new(ball: impl Into<Arc<Ball>>, alpha: f64, initial: Vec<f64>, horizon: f64) -> Result<Self> {
        let ball: Arc<Ball> = ball.into();
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidProblem(format!("alpha = {alpha} must be positive")));
        }
        if !(horizon > 0.0) {
            return Err(Error::InvalidProblem(format!("horizon = {horizon} must be positive")));
        }
        if initial.len() != ball.len() {
            return Err(Error::InvalidProblem(format!(
                "initial data has {} values, ball has {} members",
                initial.len(),
                ball.len()
            )));
        }
        if let Some(v) = initial.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidProblem(format!("initial value {v} is not a finite nonnegative number")));
        }
        let initial: Vec<f64> = initial
            .iter()
            .zip(&ball.boundary)
            .map(|(&v, &b)| if b { 0.0 } else { v })
            .collect();
        if initial.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidProblem("initial data vanishes on the interior".into()));
        }
        Ok(Problem {
            ball,
            alpha,
            initial,
            horizon,
        })
    }

    pub fn boundary_mode(&self) -> BoundaryMode {
        if self.ball.has_boundary() {
            BoundaryMode::DirichletTruncation
        } else {
            BoundaryMode::None
        }
    }
}

/// `u^p` evaluated as `exp(p ln u)`, zero for `u <= 0`.
#[inline]
pub fn power(u: f64, p: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        (p * u.ln()).exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    HorizonReached,
    /// Blow-up bracketed in `(t_low, t_high]`.
    BlowUp { t_low: f64, t_high: f64 },
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub ball: Arc<Ball>,
    pub times: Vec<f64>,
    /// States on ball members, one per entry of `times`.
    pub states: Vec<Vec<f64>>,
    /// `(t, sup_x u(t, x))` at every accepted step.
    pub sup_norm_series: Vec<(f64, f64)>,
    pub status: Status,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub caveat: Option<&'static str>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectorySummary {
    #[serde(flatten)]
    pub status: Status,
    pub final_time: f64,
    pub final_sup_norm: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub sup_norm_series: Vec<(f64, f64)>,
    pub caveat: Option<&'static str>,
}

impl Trajectory {
    pub fn summary(&self) -> TrajectorySummary {
        let (t, s) = self.sup_norm_series.last().copied().unwrap_or((0.0, 0.0));
        TrajectorySummary {
            status: self.status,
            final_time: t,
            final_sup_norm: s,
            accepted_steps: self.accepted_steps,
            rejected_steps: self.rejected_steps,
            sup_norm_series: self.sup_norm_series.clone(),
            caveat: self.caveat,
        }
    }

    pub fn is_blow_up(&self) -> bool {
        matches!(self.status, Status::BlowUp { .. })
    }
}

#[derive(Clone, Debug)]
pub enum Output {
    /// Record the state after every accepted step.
    Steps,
    /// Record the state exactly at these times (steps are shortened to hit them).
    Times(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct MolOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Sup-norm entry criterion for blow-up.
    pub threshold: f64,
    /// Blow-up needs the step to drop below `step_floor * (t + 1)`.
    pub step_floor: f64,
    pub max_steps: usize,
    pub output: Output,
}

impl Default for MolOptions {
    fn default() -> Self {
        MolOptions {
            rtol: 1e-9,
            atol: 1e-12,
            threshold: 1e8,
            step_floor: 1e-12,
            max_steps: 2_000_000,
            output: Output::Steps,
        }
    }
}

/// Vertex-indexed ODE system `u' = L u + u^{1+alpha}` on interior vertices.
struct System {
    diag: Vec<f64>,
    off: Vec<Vec<(usize, f64)>>,
    exponent: f64,
}

impl System {
    fn new(ball: &Ball, alpha: f64) -> Self {
        let mut slot = vec![usize::MAX; ball.len()];
        for (k, &i) in ball.interior.iter().enumerate() {
            slot[i] = k;
        }
        let diag = ball.interior.iter().map(|&i| -ball.degree[i] / ball.mu[i]).collect();
        let off = ball
            .interior
            .iter()
            .map(|&i| {
                ball.adj[i]
                    .iter()
                    .filter(|(j, _)| slot[*j] != usize::MAX)
                    .map(|&(j, w)| (slot[j], w / ball.mu[i]))
                    .collect()
            })
            .collect();
        System {
            diag,
            off,
            exponent: 1.0 + alpha,
        }
    }

    fn rhs(&self, u: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let lap: f64 = self.off[k].iter().map(|&(j, c)| c * u[j]).sum::<f64>() + self.diag[k] * u[k];
            *o = lap + power(u[k], self.exponent);
        }
    }
}

/// Time as an unevaluated sum `hi + lo`, so that steps far below the
/// resolution of `t` near a blow-up still advance the clock.
#[derive(Clone, Copy, Debug)]
struct Clock {
    hi: f64,
    lo: f64,
}

impl Clock {
    fn advance(&mut self, h: f64) {
        let s = self.hi + h;
        let bp = s - self.hi;
        let err = (self.hi - (s - bp)) + (h - bp);
        let lo = self.lo + err;
        self.hi = s + lo;
        self.lo = lo - (self.hi - s);
    }

    fn until(&self, target: f64) -> f64 {
        (target - self.hi) - self.lo
    }

    fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

// Dormand-Prince 5(4)
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Time left before blow-up is forced, from the comparison ODE
/// `v' = -D v + v^{1+alpha}`, `v(0) = M`, where `D = m(x)/mu(x)` at the
/// maximizing vertex (neighbors only push the solution up).
pub fn comparison_blowup_time(sup: f64, d: f64, alpha: f64) -> f64 {
    let m_alpha = power(sup, alpha);
    if d == 0.0 {
        return 1.0 / (alpha * m_alpha);
    }
    let x = d / m_alpha;
    if x >= 1.0 {
        f64::INFINITY
    } else {
        -(-x).ln_1p() / (alpha * d)
    }
}

fn sup_and_argmax(u: &[f64]) -> (f64, usize) {
    u.iter()
        .copied()
        .enumerate()
        .fold((f64::NEG_INFINITY, 0), |acc, (i, v)| if v > acc.0 { (v, i) } else { acc })
}

/// Adaptive method-of-lines integration.
///
/// Blow-up is declared only when the sup-norm has passed
/// `opts.threshold` *and* the accepted step has dropped below
/// `opts.step_floor * (t + 1)`. The returned bracket is
/// `(t, t + tau]`, with `tau` from [`comparison_blowup_time`].
pub fn integrate_mol(p: &Problem, opts: &MolOptions) -> Result<Trajectory> {
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(Error::InvalidArgument("rtol and atol must be positive".into()));
    }
    let ball = &p.ball;
    let sys = System::new(ball, p.alpha);
    let n = ball.interior.len();
    if n == 0 {
        return Err(Error::EmptyInterior);
    }
    let embed = |u: &[f64]| {
        let mut full = vec![0.0; ball.len()];
        for (k, &i) in ball.interior.iter().enumerate() {
            full[i] = u[k];
        }
        full
    };

    let mut targets: Vec<f64> = match &opts.output {
        Output::Steps => vec![],
        Output::Times(ts) => {
            let mut ts: Vec<f64> = ts.iter().copied().filter(|&t| t > 0.0 && t <= p.horizon).collect();
            ts.sort_by(f64::total_cmp);
            ts.dedup();
            ts
        }
    };
    if targets.last() != Some(&p.horizon) {
        targets.push(p.horizon);
    }
    let record_all = matches!(opts.output, Output::Steps);
    let record_target = |t: f64| match &opts.output {
        Output::Steps => false,
        Output::Times(ts) => ts.contains(&t),
    };

    let mut u: Vec<f64> = ball.interior.iter().map(|&i| p.initial[i]).collect();
    let mut clock = Clock { hi: 0.0, lo: 0.0 };
    let mut times = vec![0.0];
    let mut states = vec![embed(&u)];
    let (mut sup, _) = sup_and_argmax(&u);
    let mut sup_series = vec![(0.0, sup)];

    let mut k = vec![vec![0.0; n]; 7];
    sys.rhs(&u, &mut k[0]);
    let fnorm = k[0].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut h = if fnorm > 0.0 { 0.01 * sup.max(1e-5) / fnorm } else { 1e-3 };
    h = h.min(p.horizon).max(1e-14);
    let mut err_prev: f64 = 1.0;
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut stage = vec![0.0; n];
    let mut u_new = vec![0.0; n];
    let mut target_idx = 0;

    let caveat = (p.boundary_mode() == BoundaryMode::DirichletTruncation).then_some(TRUNCATION_CAVEAT);

    loop {
        if accepted + rejected >= opts.max_steps {
            return Err(Error::StepLimit {
                t: clock.value(),
                steps: accepted + rejected,
            });
        }
        let remaining = clock.until(targets[target_idx]);
        let natural = h;
        let hits = h >= remaining;
        let step = if hits { remaining } else { h };

        for s in 1..7 {
            for i in 0..n {
                let mut acc = u[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += step * A[s][j] * kj[i];
                }
                stage[i] = acc;
            }
            let (head, tail) = k.split_at_mut(s);
            let _ = head;
            sys.rhs(&stage, &mut tail[0]);
        }
        // stage 7 input is the 5th-order solution
        u_new.copy_from_slice(&stage);
        let mut err: f64 = 0.0;
        for i in 0..n {
            let e: f64 = (0..7).map(|j| E[j] * k[j][i]).sum::<f64>() * step;
            let sc = opts.atol + opts.rtol * u[i].abs().max(u_new[i].abs());
            err = err.max((e / sc).abs());
        }
        if !err.is_finite() || u_new.iter().any(|v| !v.is_finite()) {
            err = f64::INFINITY;
        }

        let t_now = clock.value();
        let floor = opts.step_floor * (t_now + 1.0);
        if err <= 1.0 {
            accepted += 1;
            let min = u_new.iter().copied().fold(f64::INFINITY, f64::min);
            if min < -opts.atol {
                return Err(Error::NegativeState { t: t_now + step, value: min });
            }
            for v in u_new.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            std::mem::swap(&mut u, &mut u_new);
            if hits {
                clock = Clock {
                    hi: targets[target_idx],
                    lo: 0.0,
                };
            } else {
                clock.advance(step);
            }
            let t = clock.value();
            let prev_sup = sup;
            let (new_sup, argmax) = sup_and_argmax(&u);
            sup = new_sup;
            sup_series.push((t, sup));
            if record_all || (hits && record_target(t)) {
                times.push(t);
                states.push(embed(&u));
            }
            // FSAL
            let last = k[6].clone();
            k[0].copy_from_slice(&last);

            if sup >= opts.threshold && natural < floor {
                let tau = comparison_blowup_time(sup, -sys.diag[argmax], p.alpha);
                let mut t_high = t + tau;
                if !(t_high > t) {
                    t_high = t.next_up();
                }
                return Ok(Trajectory {
                    ball: Arc::clone(ball),
                    times,
                    states,
                    sup_norm_series: sup_series,
                    status: Status::BlowUp { t_low: t, t_high },
                    accepted_steps: accepted,
                    rejected_steps: rejected,
                    caveat,
                });
            }
            if hits {
                target_idx += 1;
                if target_idx == targets.len() {
                    return Ok(Trajectory {
                        ball: Arc::clone(ball),
                        times,
                        states,
                        sup_norm_series: sup_series,
                        status: Status::HorizonReached,
                        accepted_steps: accepted,
                        rejected_steps: rejected,
                        caveat,
                    });
                }
            }
            let e = err.max(1e-10);
            let fac = 0.9 * e.powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
            h = natural * fac.clamp(0.2, 5.0);
            err_prev = e;
            if h < floor && sup < opts.threshold && sup <= prev_sup {
                return Err(Error::StepFloorWithoutGrowth { t, sup_norm: sup });
            }
        } else {
            rejected += 1;
            let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).max(0.2) } else { 0.2 };
            h = step * fac;
            if h < floor && sup >= opts.threshold {
                // the trial step keeps collapsing while the solution is huge
                let (_, argmax) = sup_and_argmax(&u);
                let t = clock.value();
                let tau = comparison_blowup_time(sup, -sys.diag[argmax], p.alpha);
                let mut t_high = t + tau;
                if !(t_high > t) {
                    t_high = t.next_up();
                }
                return Ok(Trajectory {
                    ball: Arc::clone(ball),
                    times,
                    states,
                    sup_norm_series: sup_series,
                    status: Status::BlowUp { t_low: t, t_high },
                    accepted_steps: accepted,
                    rejected_steps: rejected,
                    caveat,
                });
            }
            if h < floor * 1e-6 {
                return Err(Error::StepFloorWithoutGrowth {
                    t: clock.value(),
                    sup_norm: sup,
                });
            }
        }
    }
}

/// One threshold of a [`blowup_time`] refinement.
#[derive(Clone, Debug, Serialize)]
pub struct ThresholdRun {
    pub threshold: f64,
    pub t_detect: f64,
    pub t_detect_coarse: f64,
    pub tau: f64,
    pub t_low: f64,
    pub t_high: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BlowupBracket {
    pub t_low: f64,
    pub t_high: f64,
    pub within_rtol: bool,
    pub solver_rtol: f64,
    pub runs: Vec<ThresholdRun>,
    pub caveat: Option<&'static str>,
}

#[derive(Clone, Debug)]
pub struct BlowupOptions {
    pub solver_rtol: f64,
    pub atol: f64,
    pub thresholds: Vec<f64>,
}

impl Default for BlowupOptions {
    fn default() -> Self {
        BlowupOptions {
            solver_rtol: 1e-9,
            atol: 1e-12,
            thresholds: vec![1e6, 1e8, 1e10],
        }
    }
}

/// Bracket the blow-up time, or `None` if the horizon is reached.
///
/// For each threshold the problem is integrated twice, at the solver
/// tolerance and 100 times tighter. The fine detection time, widened by ten
/// times the coarse/fine disagreement (an estimate of the integration error
/// in time) and extended by the comparison time `tau`, gives one bracket;
/// the brackets of all thresholds are intersected.
pub fn blowup_time(p: &Problem, rtol: f64, opts: &BlowupOptions) -> Result<Option<BlowupBracket>> {
    let mut solver_rtol = opts.solver_rtol;
    loop {
        let Some(b) = bracket_once(p, rtol, solver_rtol, opts)? else {
            return Ok(None);
        };
        if b.within_rtol || solver_rtol <= 1e-12 {
            return Ok(Some(b));
        }
        solver_rtol = (solver_rtol * 1e-2).max(1e-12);
    }
}

fn bracket_once(p: &Problem, rtol: f64, solver_rtol: f64, opts: &BlowupOptions) -> Result<Option<BlowupBracket>> {
    let mut runs = Vec::new();
    for &threshold in &opts.thresholds {
        let run = |r: f64| {
            integrate_mol(
                p,
                &MolOptions {
                    rtol: r,
                    atol: opts.atol,
                    threshold,
                    output: Output::Times(vec![]),
                    ..MolOptions::default()
                },
            )
        };
        let fine = run(solver_rtol * 1e-2)?;
        let Status::BlowUp { t_low, t_high } = fine.status else {
            return Ok(None);
        };
        let coarse = run(solver_rtol)?;
        let t_coarse = match coarse.status {
            Status::BlowUp { t_low, .. } => t_low,
            Status::HorizonReached => t_low * (1.0 + 100.0 * solver_rtol),
        };
        let d = 10.0 * (t_coarse - t_low).abs() + 4.0 * f64::EPSILON * t_low;
        runs.push(ThresholdRun {
            threshold,
            t_detect: t_low,
            t_detect_coarse: t_coarse,
            tau: t_high - t_low,
            t_low: t_low - d,
            t_high: t_high + d,
        });
    }
    let lo = runs.iter().map(|r| r.t_low).fold(f64::NEG_INFINITY, f64::max);
    let hi = runs.iter().map(|r| r.t_high).fold(f64::INFINITY, f64::min);
    let (t_low, t_high) = if lo < hi {
        (lo, hi)
    } else {
        // disjoint brackets: fall back to their hull
        (
            runs.iter().map(|r| r.t_low).fold(f64::INFINITY, f64::min),
            runs.iter().map(|r| r.t_high).fold(f64::NEG_INFINITY, f64::max),
        )
    };
    Ok(Some(BlowupBracket {
        t_low,
        t_high,
        within_rtol: t_high - t_low <= rtol * t_high,
        solver_rtol,
        runs,
        caveat: (p.boundary_mode() == BoundaryMode::DirichletTruncation).then_some(TRUNCATION_CAVEAT),
    }))
}

/// The Duhamel map `u -> P_t a + int_0^t P_{t-s} u(s)^{1+alpha} ds` on a
/// time grid refined once by midpoints.
///
/// The integral uses the trapezoid rule on the refined grid with one
/// Richardson step against the original grid, which is Simpson's rule on
/// each original interval. At midpoints, the half-interval integral comes
/// from the quadratic through the surrounding three nodes.
pub struct DuhamelMap {
    op: DirichletOperator,
    exponent: f64,
    nodes: Vec<f64>,
    linear: Vec<DVector<f64>>,
}

impl DuhamelMap {
    pub fn new(p: &Problem, t_grid: &[f64]) -> Result<Self> {
        let mut grid: Vec<f64> = t_grid.to_vec();
        if grid.first().copied() != Some(0.0) {
            grid.insert(0, 0.0);
        }
        if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) || grid[0] < 0.0 {
            return Err(Error::InvalidArgument("time grid must be increasing and nonnegative".into()));
        }
        let mut nodes = Vec::with_capacity(2 * grid.len() - 1);
        for w in grid.windows(2) {
            nodes.push(w[0]);
            nodes.push(0.5 * (w[0] + w[1]));
        }
        nodes.push(*grid.last().unwrap());
        let op = DirichletOperator::new(Arc::clone(&p.ball))?;
        let a_hat = op.to_spectral(&p.initial);
        let linear = nodes.iter().map(|&t| decay(&op, t, &a_hat)).collect();
        Ok(DuhamelMap {
            op,
            exponent: 1.0 + p.alpha,
            nodes,
            linear,
        })
    }

    /// Refined grid; even positions are the original grid times.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn operator(&self) -> &DirichletOperator {
        &self.op
    }

    /// `P_t a` at every node.
    pub fn linear_part(&self) -> Vec<Vec<f64>> {
        self.linear.iter().map(|c| self.op.from_spectral(c)).collect()
    }

    /// Apply the map to states given at every node.
    pub fn apply(&self, u: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let forcing: Vec<DVector<f64>> = u
            .iter()
            .map(|s| {
                let powered: Vec<f64> = s.iter().map(|&v| power(v, self.exponent)).collect();
                self.op.to_spectral(&powered)
            })
            .collect();
        let nodes = &self.nodes;
        let last = nodes.len() - 1;
        (0..nodes.len())
            .map(|j| {
                let tj = nodes[j];
                let g = |i: usize| decay(&self.op, tj - nodes[i], &forcing[i]);
                let mut integral = DVector::zeros(self.op.interior_len());
                let full = j / 2;
                for m in 0..full {
                    let (i0, i1, i2) = (2 * m, 2 * m + 1, 2 * m + 2);
                    let h = nodes[i2] - nodes[i0];
                    integral += (g(i0) + g(i1) * 4.0 + g(i2)) * (h / 6.0);
                }
                if j % 2 == 1 && j < last {
                    let (i0, i1, i2) = (j - 1, j, j + 1);
                    let d = nodes[i1] - nodes[i0];
                    integral += (g(i0) * 5.0 + g(i1) * 8.0 - g(i2)) * (d / 12.0);
                }
                self.op.from_spectral(&(&self.linear[j] + integral))
            })
            .collect()
    }
}

fn decay(op: &DirichletOperator, t: f64, c: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        c.len(),
        c.iter().zip(op.eigenvalues().iter()).map(|(v, &l)| v * (t * l).exp()),
    )
}

/// Picard iteration of the Duhamel formula starting from `u^0 = P_t a`.
///
/// The grid must stay inside the existence interval. Fails with
/// `NoConvergence` if the iterates diverge or `max_iters` is exhausted.
pub fn duhamel_iterate(p: &Problem, t_grid: &[f64], max_iters: usize, tol: f64) -> Result<Trajectory> {
    let map = DuhamelMap::new(p, t_grid)?;
    let mut u = map.linear_part();
    let mut first_increment = None;
    for it in 0..max_iters {
        let next = map.apply(&u);
        let increment = u
            .iter()
            .zip(&next)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        let scale = next.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        u = next;
        if !increment.is_finite() || !scale.is_finite() {
            return Err(Error::NoConvergence {
                iterations: it + 1,
                increment,
            });
        }
        let first = *first_increment.get_or_insert(increment);
        if increment > 1e8 * first.max(1e-300) {
            return Err(Error::NoConvergence {
                iterations: it + 1,
                increment,
            });
        }
        if increment < tol {
            let times: Vec<f64> = map.nodes().iter().step_by(2).copied().collect();
            let states: Vec<Vec<f64>> = u.iter().step_by(2).cloned().collect();
            let sup_norm_series = times
                .iter()
                .zip(&states)
                .map(|(&t, s)| (t, s.iter().copied().fold(0.0, f64::max)))
                .collect();
            return Ok(Trajectory {
                ball: Arc::clone(&p.ball),
                times,
                states,
                sup_norm_series,
                status: Status::HorizonReached,
                accepted_steps: it + 1,
                rejected_steps: 0,
                caveat: (p.boundary_mode() == BoundaryMode::DirichletTruncation).then_some(TRUNCATION_CAVEAT),
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        increment: f64::NAN,
    })
}
