//! Quantitative blow-up machinery: the Fujita product constant, the
//! boundedness certificate for `t^{1/alpha} P_t a`, initial-mass bounds,
//! volume-growth fits and the `G(t, r)` squeeze reports.
//!
//! Every constant that the estimates only assert to exist is replaced by an
//! empirical fit, so the outputs here are relative to fitted constants.

use std::f64::consts::E;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::heat_kernel::{least_squares, Exhaustion, GaussianFit};

pub const FITTED_CONSTANTS_CAVEAT: &str =
    "relative to fitted constants: kernel and volume constants are empirical fits on a finite range";

/// Converged value of `prod_{i>=2} (((1+alpha)^i - 1)/alpha)^{(1+alpha)^{-i}}`.
#[derive(Clone, Debug, Serialize)]
pub struct FujitaProduct {
    pub alpha: f64,
    pub value: f64,
    pub log_value: f64,
    /// Last index `N` included.
    pub terms: usize,
    /// Rigorous bound on the omitted log-tail.
    pub tail_bound: f64,
}

/// `ln` of the `i`-th factor, `(1+alpha)^{-i} ln(((1+alpha)^i - 1)/alpha)`.
pub fn log_factor(alpha: f64, i: usize) -> f64 {
    let l = alpha.ln_1p();
    let il = i as f64 * l;
    let log_num = il + (-(-il).exp()).ln_1p();
    (-il).exp() * (log_num - alpha.ln())
}

/// `(1+alpha)^{-i} ln(i (1+alpha)^i)`, the majorant of [`log_factor`].
pub fn log_majorant(alpha: f64, i: usize) -> f64 {
    let l = alpha.ln_1p();
    let il = i as f64 * l;
    (-il).exp() * ((i as f64).ln() + il)
}

/// Upper bound on `sum_{i>N} q^i (ln i + i L)`, `q = 1/(1+alpha)`,
/// `L = ln(1+alpha)`.
pub fn majorant_tail(alpha: f64, n: usize) -> f64 {
    let l = alpha.ln_1p();
    let q = 1.0 / (1.0 + alpha);
    let one_q = alpha / (1.0 + alpha);
    let nf = n as f64;
    let qn1 = (-(nf + 1.0) * l).exp();
    // sum_{i>N} i q^i = q^{N+1} ((N+1) - N q) / (1-q)^2
    let linear = l * qn1 * ((nf + 1.0) - nf * q) / (one_q * one_q);
    // ln i <= ln(N+1) + (i-N-1)/(N+1)
    let logs = qn1 * (nf + 1.0).ln() / one_q + qn1 * q / ((nf + 1.0) * one_q * one_q);
    linear + logs
}

pub fn fujita_product(alpha: f64, tol: f64) -> Result<FujitaProduct> {
    if !(alpha > 0.0 && alpha.is_finite() && tol > 0.0) {
        return Err(Error::InvalidArgument(format!("need alpha > 0 and tol > 0 (alpha = {alpha}, tol = {tol})")));
    }
    let mut log_value = 0.0;
    let mut n = 1;
    loop {
        n += 1;
        log_value += log_factor(alpha, n);
        let tail = majorant_tail(alpha, n);
        // the log-tail bound also bounds the value error by value * expm1(tail)
        if tail < tol && log_value.exp() * tail.exp_m1() < tol {
            return Ok(FujitaProduct {
                alpha,
                value: log_value.exp(),
                log_value,
                terms: n,
                tail_bound: tail,
            });
        }
    }
}

/// Partial products `prod_{i=2}^{N}` for `N = 2..=n_max`.
pub fn fujita_partial_products(alpha: f64, n_max: usize) -> Vec<f64> {
    let mut acc = 0.0;
    (2..=n_max)
        .map(|i| {
            acc += log_factor(alpha, i);
            acc.exp()
        })
        .collect()
}

/// Geometric grid `start, start*ratio, ...` up to `end` (inclusive within
/// rounding).
pub fn geometric_grid(start: f64, end: f64, ratio: f64) -> Vec<f64> {
    let steps = ((end / start).ln() / ratio.ln() + 1e-9).floor() as i32;
    (0..=steps).map(|k| start * ratio.powi(k)).collect()
}

/// Default certificate grid: `1` to `1e4` with ratio `2^{1/4}`.
pub fn default_certificate_grid() -> Vec<f64> {
    geometric_grid(1.0, 1e4, 2f64.powf(0.25))
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificatePoint {
    pub t: f64,
    pub semigroup: f64,
    pub scaled: f64,
    pub radius: u32,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct FujitaCertificate {
    pub alpha: f64,
    pub x0: String,
    pub t_grid: Vec<f64>,
    pub points: Vec<CertificatePoint>,
    /// `max_t t^{1/alpha} P_t a(x0)` over the grid.
    pub sup_value: f64,
    pub sup_t: f64,
    pub c_prime: f64,
    pub fired: bool,
    pub truncation_radius: u32,
    pub all_converged: bool,
    pub note: &'static str,
}

const CERTIFICATE_NOTE: &str = "fired: no nonnegative global solution exists (given D_mu finite); not fired proves \
nothing. Unconverged points use the largest ball, a lower bound for P_t a, so firing stays sound";

/// Evaluate `t^{1/alpha} P_t a(x0)` on `t_grid` and compare with the Fujita
/// product `C'`.
pub fn lemma41_certificate(
    g: &WeightedGraph,
    a: &[f64],
    x0: usize,
    alpha: f64,
    t_grid: &[f64],
    tol: f64,
) -> Result<FujitaCertificate> {
    check_initial(g, a)?;
    if t_grid.is_empty() || t_grid[0] <= 0.0 || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("t grid must be positive and increasing".into()));
    }
    let c_prime = fujita_product(alpha, 1e-12)?.value;
    let mut ex = Exhaustion::new(g, x0)?;
    let mut points = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let out = ex.semigroup_at_center(t, a, 1, tol)?;
        points.push(CertificatePoint {
            t,
            semigroup: out.value,
            scaled: t.powf(1.0 / alpha) * out.value,
            radius: out.radius,
            converged: out.converged,
        });
    }
    let best = points
        .iter()
        .max_by(|p, q| p.scaled.total_cmp(&q.scaled))
        .expect("nonempty grid");
    Ok(FujitaCertificate {
        alpha,
        x0: g.id(x0).to_string(),
        t_grid: t_grid.to_vec(),
        sup_value: best.scaled,
        sup_t: best.t,
        c_prime,
        fired: best.scaled > c_prime,
        truncation_radius: points.iter().map(|p| p.radius).max().unwrap_or(0),
        all_converged: points.iter().all(|p| p.converged),
        points,
        note: CERTIFICATE_NOTE,
    })
}

fn check_initial(g: &WeightedGraph, a: &[f64]) -> Result<()> {
    if a.len() != g.len() {
        return Err(Error::InvalidArgument(format!(
            "initial data has {} values, graph has {} vertices",
            a.len(),
            g.len()
        )));
    }
    if a.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || a.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidArgument("initial data must be finite, nonnegative and nonzero".into()));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
pub enum Regime {
    /// Two-sided polynomial growth `c^{-1} r^m <= V <= c r^m`.
    #[serde(rename = "c1-critical")]
    C1Critical,
    /// Log-corrected growth `c' r^m log^{-zeta} r <= V <= c'' r^m log^eta r`.
    #[serde(rename = "c2-subcritical")]
    C2Subcritical,
}

#[derive(Clone, Debug, Serialize)]
pub struct LogFit {
    pub theta: f64,
    pub zeta: f64,
    pub eta: f64,
    pub c_prime: f64,
    pub c_double_prime: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct VolumeGrowthFit {
    pub x0: String,
    pub regime: Regime,
    pub r_range: (u32, u32),
    pub radii: Vec<u32>,
    pub volumes: Vec<f64>,
    pub m_hat: f64,
    pub intercept: f64,
    /// `max r^m / V`, so that `V >= r^m / c_low`.
    pub c_low: f64,
    /// `max V / r^m`, so that `V <= c_high r^m`.
    pub c_high: f64,
    pub log_fit: Option<LogFit>,
    /// `ln V - (intercept + m_hat ln r)`.
    pub residuals: Vec<f64>,
}

impl VolumeGrowthFit {
    /// The single constant of the two-sided polynomial bound.
    pub fn c(&self) -> f64 {
        self.c_low.max(self.c_high)
    }

    /// Re-check the bracketing inequalities at every fitted radius, with a
    /// relative slack of `rel`.
    pub fn brackets_hold(&self, rel: f64) -> bool {
        let m = self.m_hat;
        self.radii.iter().zip(&self.volumes).all(|(&r, &v)| {
            let rf = r as f64;
            let rm = rf.powf(m);
            let poly = rm / self.c_low <= v * (1.0 + rel) && v <= self.c_high * rm * (1.0 + rel);
            let logc = self.log_fit.as_ref().is_none_or(|lf| {
                let lr = rf.ln();
                lf.c_prime * rm * lr.powf(-lf.zeta) <= v * (1.0 + rel)
                    && v <= lf.c_double_prime * rm * lr.powf(lf.eta) * (1.0 + rel)
            });
            poly && logc
        })
    }
}

pub fn volume_growth_fit(
    g: &WeightedGraph,
    x0: usize,
    r_min: u32,
    r_max: u32,
    regime: Regime,
) -> Result<VolumeGrowthFit> {
    if r_min < 2 {
        return Err(Error::InvalidArgument(format!("r_min = {r_min} must be at least 2")));
    }
    if r_max <= r_min {
        return Err(Error::DegenerateFit(format!("radius range [{r_min}, {r_max}] has fewer than two radii")));
    }
    // one BFS, then cumulative sums by distance
    let limit = g.max_ball_radius(x0)?;
    if r_max > limit {
        return Err(Error::TruncationTooSmall {
            center: g.id(x0).to_string(),
            radius: r_max,
            edge_distance: limit + 1,
        });
    }
    let dist = g.bfs(x0);
    let mut shell = vec![0.0; r_max as usize + 1];
    for (v, &d) in dist.iter().enumerate() {
        if d <= r_max {
            shell[d as usize] += g.mu(v);
        }
    }
    let mut cumulative = Vec::with_capacity(shell.len());
    let mut acc = 0.0;
    for s in shell {
        acc += s;
        cumulative.push(acc);
    }
    let radii: Vec<u32> = (r_min..=r_max).collect();
    let volumes: Vec<f64> = radii.iter().map(|&r| cumulative[r as usize]).collect();
    let xs: Vec<f64> = radii.iter().map(|&r| (r as f64).ln()).collect();
    let ys: Vec<f64> = volumes.iter().map(|v| v.ln()).collect();
    let (intercept, m_hat) =
        least_squares(&xs, &ys).ok_or_else(|| Error::DegenerateFit("log-log regression is singular".into()))?;
    let residuals: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - (intercept + m_hat * x)).collect();
    let rm: Vec<f64> = radii.iter().map(|&r| (r as f64).powf(m_hat)).collect();
    let c_low = rm.iter().zip(&volumes).map(|(p, v)| p / v).fold(0.0, f64::max);
    let c_high = rm.iter().zip(&volumes).map(|(p, v)| v / p).fold(0.0, f64::max);

    let log_fit = match regime {
        Regime::C1Critical => None,
        Regime::C2Subcritical => {
            let lnln: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
            let (_, theta) = least_squares(&lnln, &residuals)
                .ok_or_else(|| Error::DegenerateFit("log-correction regression is singular".into()))?;
            let eta = theta.max(0.0);
            let zeta = (-theta).max(0.0);
            let c_prime = radii
                .iter()
                .zip(&volumes)
                .zip(&rm)
                .map(|((&r, v), p)| v * (r as f64).ln().powf(zeta) / p)
                .fold(f64::INFINITY, f64::min);
            let c_double_prime = radii
                .iter()
                .zip(&volumes)
                .zip(&rm)
                .map(|((&r, v), p)| v / (p * (r as f64).ln().powf(eta)))
                .fold(0.0, f64::max);
            Some(LogFit {
                theta,
                zeta,
                eta,
                c_prime,
                c_double_prime,
            })
        }
    };
    Ok(VolumeGrowthFit {
        x0: g.id(x0).to_string(),
        regime,
        r_range: (r_min, r_max),
        radii,
        volumes,
        m_hat,
        intercept,
        c_low,
        c_high,
        log_fit,
        residuals,
    })
}

/// `rho = max(t0, r0^2)` with `r0` the smallest fitted radius.
pub fn rho(fit: &GaussianFit, vol: &VolumeGrowthFit) -> f64 {
    fit.t0.max((vol.r_range.0 as f64).powi(2))
}

#[derive(Clone, Debug, Serialize)]
pub struct MassEntry {
    pub r: u32,
    pub mass: f64,
    pub bound: f64,
    pub exceeds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MassBoundReport {
    pub regime: Regime,
    pub c_prime: f64,
    /// `C''`: `e c C'/c2` in regime c1, `e c'' C'/c2` in regime c2.
    pub c_double_prime: f64,
    pub rho: f64,
    pub min_radius: f64,
    pub entries: Vec<MassEntry>,
    pub any_exceeds: bool,
    pub caveat: &'static str,
}

/// Compare `sum_{B_r} mu a` with the mass bound a global solution would
/// force.
pub fn lemma42_mass_bound(
    g: &WeightedGraph,
    a: &[f64],
    x0: usize,
    r_list: &[u32],
    fit: &GaussianFit,
    c_prime: f64,
    vol: &VolumeGrowthFit,
) -> Result<MassBoundReport> {
    check_initial(g, a)?;
    let rho = rho(fit, vol);
    let min_radius = (rho / fit.c3_hat).sqrt();
    let (c_double_prime, eta) = match (vol.regime, &vol.log_fit) {
        (Regime::C1Critical, _) => (E * vol.c() * c_prime / fit.c2_hat, 0.0),
        (Regime::C2Subcritical, Some(lf)) => (E * lf.c_double_prime * c_prime / fit.c2_hat, lf.eta),
        (Regime::C2Subcritical, None) => return Err(Error::MissingFit("log-corrected volume fit".into())),
    };
    let dist = g.bfs(x0);
    let mut entries = Vec::with_capacity(r_list.len());
    for &r in r_list {
        if !((r as f64) > min_radius) {
            return Err(Error::RadiusBelowValidity {
                r: r as f64,
                min_radius,
            });
        }
        let limit = g.max_ball_radius(x0)?;
        if r > limit {
            return Err(Error::TruncationTooSmall {
                center: g.id(x0).to_string(),
                radius: r,
                edge_distance: limit + 1,
            });
        }
        let mass: f64 = (0..g.len()).filter(|&v| dist[v] <= r).map(|v| g.mu(v) * a[v]).sum();
        let bound = match vol.regime {
            Regime::C1Critical => c_double_prime,
            Regime::C2Subcritical => c_double_prime * (fit.c3_hat * (r as f64).powi(2)).sqrt().ln().powf(eta),
        };
        entries.push(MassEntry {
            r,
            mass,
            bound,
            exceeds: mass > bound,
        });
    }
    Ok(MassBoundReport {
        regime: vol.regime,
        c_prime,
        c_double_prime,
        rho,
        min_radius,
        any_exceeds: entries.iter().any(|e| e.exceeds),
        entries,
        caveat: FITTED_CONSTANTS_CAVEAT,
    })
}

/// `G(t, r) = sum_{y in B_r} mu(y) p(t, x0, y) u(y)` with the
/// exhaustion-converged kernel; `u` is indexed by graph vertex.
pub fn g_functional(g: &WeightedGraph, x0: usize, t: f64, r: u32, u: &[f64], tol: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("t = {t} must be positive")));
    }
    if u.len() != g.len() {
        return Err(Error::InvalidArgument("u must be defined on every vertex".into()));
    }
    let ball = g.ball(x0, r)?;
    let mut ex = Exhaustion::new(g, x0)?;
    let out = ex.kernel_values(t, &ball.members, tol)?;
    if !out.converged {
        return Err(crate::heat_kernel::exhausted_error(&ex, &out));
    }
    Ok(ball
        .members
        .iter()
        .zip(&out.value)
        .map(|(&y, p)| g.mu(y) * p * u[y])
        .sum())
}

/// All constants entering the squeeze, fitted or derived.
#[derive(Clone, Debug, Serialize)]
pub struct SqueezeConstants {
    pub regime: Regime,
    pub alpha: f64,
    pub m: f64,
    /// Volume constants: `c` for (c.1); `c'`, `c''`, `zeta`, `eta` for (c.2).
    pub c: f64,
    pub c_prime_vol: f64,
    pub c_double_prime_vol: f64,
    pub zeta: f64,
    pub eta: f64,
    /// Gaussian kernel constants.
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Mass bound `C''`.
    pub mass_bound: f64,
    /// `C1 = mu(x0) a(x0)`.
    pub big_c1: f64,
    /// `a0 = inf a`.
    pub a0: f64,
    pub rho: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct DerivedConstants {
    pub big_c2: Option<f64>,
    pub big_c3: Option<f64>,
    pub c_tilde: Option<f64>,
    pub b: Option<f64>,
}

impl SqueezeConstants {
    pub fn derived(&self, r: f64) -> DerivedConstants {
        let a = self.alpha;
        match self.regime {
            Regime::C1Critical => {
                let c2b = self.c2.powf(a) * self.big_c1.powf(1.0 + a) / (E * self.c.powf(a));
                let c3b = c2b * self.c2 / (2f64.powf(self.m / 2.0) * self.c);
                DerivedConstants {
                    big_c2: Some(c2b),
                    big_c3: Some(c3b),
                    c_tilde: None,
                    b: None,
                }
            }
            Regime::C2Subcritical => {
                let e = self.eta * (1.0 + a) + self.zeta;
                let b = (e > 0.0).then(|| (1.0 + a) / e);
                let pow2 = 2f64.powf((self.eta - 1.0 / a) * (1.0 + a) + self.zeta);
                let inner = self.a0.powf(a) * self.c2 * self.big_c1 / self.c_double_prime_vol;
                let log_r = (self.c3 * r * r).sqrt().ln();
                let c_tilde = self.c_prime_vol * pow2 / ((2.0 + a) * self.c1 * self.mass_bound)
                    * inner.powf(1.0 + a)
                    * log_r.powf(-self.eta);
                DerivedConstants {
                    big_c2: None,
                    big_c3: None,
                    c_tilde: Some(c_tilde),
                    b,
                }
            }
        }
    }

    /// `(lower, upper)` at time `t`; the lower curve is `None` outside its
    /// range of validity.
    pub fn curves(&self, d: &DerivedConstants, t: f64, r: f64) -> (Option<f64>, f64) {
        let a = self.alpha;
        match self.regime {
            Regime::C1Critical => {
                let start = self.c3 * a * r * r;
                let upper = self.c * self.c1 * self.mass_bound;
                let lower = (t >= start && t >= self.rho).then(|| d.big_c3.unwrap() * (t / start).ln());
                (lower, upper)
            }
            Regime::C2Subcritical => {
                let e = self.eta * (1.0 + a) + self.zeta;
                let lower = (t > self.rho && t > 0.5).then(|| {
                    // C~ (t^b / log 2t)^{eta(1+alpha)+zeta} = C~ t^{1+alpha} / (log 2t)^{eta(1+alpha)+zeta}
                    d.c_tilde.unwrap() * t.powf(1.0 + a) / (2.0 * t).ln().powf(e)
                });
                (lower, 1.0)
            }
        }
    }

    /// Where the lower curve first exceeds the upper one, as `ln t`.
    pub fn analytic_log_t_star(&self, d: &DerivedConstants, r: f64) -> Option<f64> {
        let a = self.alpha;
        match self.regime {
            Regime::C1Critical => {
                let start = (self.c3 * a * r * r).ln();
                let v = start + self.c * self.c1 * self.mass_bound / d.big_c3?;
                Some(v.max(self.rho.ln()))
            }
            Regime::C2Subcritical => {
                let e = self.eta * (1.0 + a) + self.zeta;
                let ln_ct = d.c_tilde?.ln();
                let f = |s: f64| ln_ct + (1.0 + a) * s - e * (std::f64::consts::LN_2 + s).ln();
                // f is increasing once (1+alpha)(ln 2 + s) > e
                let mut lo = self.rho.max(1.0).ln().max(e / (1.0 + a));
                if f(lo) > 0.0 {
                    return Some(lo);
                }
                let mut hi = lo + 1.0;
                while f(hi) <= 0.0 {
                    lo = hi;
                    hi = 2.0 * hi + 1.0;
                    if !hi.is_finite() {
                        return None;
                    }
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid) > 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                Some(hi)
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SqueezePoint {
    pub t: f64,
    pub lower: Option<f64>,
    pub upper: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SqueezeReport {
    pub regime: Regime,
    pub r: f64,
    pub validity_radius: f64,
    pub constants: SqueezeConstants,
    pub derived: DerivedConstants,
    pub curves: Vec<SqueezePoint>,
    /// First grid time where the lower curve exceeds the upper one.
    pub t_star: Option<f64>,
    pub analytic_log_t_star: Option<f64>,
    pub caveat: &'static str,
}

/// Assemble both bound curves from explicit constants.
pub fn squeeze_from_constants(k: SqueezeConstants, t_grid: &[f64], r: f64, validity_radius: f64) -> SqueezeReport {
    let derived = k.derived(r);
    let curves: Vec<SqueezePoint> = t_grid
        .iter()
        .map(|&t| {
            let (lower, upper) = k.curves(&derived, t, r);
            SqueezePoint { t, lower, upper }
        })
        .collect();
    let t_star = curves
        .iter()
        .find(|p| p.lower.is_some_and(|l| l > p.upper))
        .map(|p| p.t);
    SqueezeReport {
        regime: k.regime,
        r,
        validity_radius,
        analytic_log_t_star: k.analytic_log_t_star(&derived, r),
        constants: k,
        derived,
        curves,
        t_star,
        caveat: FITTED_CONSTANTS_CAVEAT,
    }
}

/// Squeeze report from fitted kernel and volume constants.
///
/// `r` must exceed the validity radius: `max(R, sqrt(rho/c3))` with
/// `R = sqrt(rho/(c3 alpha))` in regime c1, `R' = sqrt(rho/c3)` in regime c2.
#[allow(clippy::too_many_arguments)]
pub fn squeeze_report(
    g: &WeightedGraph,
    a: &[f64],
    x0: usize,
    alpha: f64,
    fit: Option<&GaussianFit>,
    vol: Option<&VolumeGrowthFit>,
    t_grid: &[f64],
    r: f64,
) -> Result<SqueezeReport> {
    check_initial(g, a)?;
    let fit = fit.ok_or_else(|| Error::MissingFit("Gaussian kernel fit".into()))?;
    let vol = vol.ok_or_else(|| Error::MissingFit("volume growth fit".into()))?;
    let rho = rho(fit, vol);
    let c_prime = fujita_product(alpha, 1e-12)?.value;
    let big_c1 = g.mu(x0) * a[x0];
    let a0 = a.iter().copied().fold(f64::INFINITY, f64::min);
    let (validity_radius, k) = match vol.regime {
        Regime::C1Critical => {
            let c = vol.c();
            let big_r = (rho / (fit.c3_hat * alpha)).sqrt();
            (
                big_r.max((rho / fit.c3_hat).sqrt()),
                SqueezeConstants {
                    regime: Regime::C1Critical,
                    alpha,
                    m: vol.m_hat,
                    c,
                    c_prime_vol: f64::NAN,
                    c_double_prime_vol: f64::NAN,
                    zeta: 0.0,
                    eta: 0.0,
                    c1: fit.c1_hat,
                    c2: fit.c2_hat,
                    c3: fit.c3_hat,
                    mass_bound: E * c * c_prime / fit.c2_hat,
                    big_c1,
                    a0,
                    rho,
                },
            )
        }
        Regime::C2Subcritical => {
            let lf = vol
                .log_fit
                .as_ref()
                .ok_or_else(|| Error::MissingFit("log-corrected volume fit".into()))?;
            (
                (rho / fit.c3_hat).sqrt(),
                SqueezeConstants {
                    regime: Regime::C2Subcritical,
                    alpha,
                    m: vol.m_hat,
                    c: f64::NAN,
                    c_prime_vol: lf.c_prime,
                    c_double_prime_vol: lf.c_double_prime,
                    zeta: lf.zeta,
                    eta: lf.eta,
                    c1: fit.c1_hat,
                    c2: fit.c2_hat,
                    c3: fit.c3_hat,
                    mass_bound: E * lf.c_double_prime * c_prime / fit.c2_hat,
                    big_c1,
                    a0,
                    rho,
                },
            )
        }
    };
    if !(r > validity_radius) {
        return Err(Error::RadiusBelowValidity {
            r,
            min_radius: validity_radius,
        });
    }
    Ok(squeeze_from_constants(k, t_grid, r, validity_radius))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::MuMode;

    #[test]
    fn product_exceeds_first_factor() {
        for alpha in [0.1, 0.5, 1.0, 2.0, 4.0, 10.0] {
            let p = fujita_product(alpha, 1e-12).unwrap();
            let first = (2.0 + alpha).powf(1.0 / (1.0 + alpha).powi(2));
            assert!(p.value >= first, "alpha = {alpha}");
            assert!(p.value > 1.0);
            assert!(p.tail_bound < 1e-12);
        }
        assert!(fujita_product(1.0, 1e-12).unwrap().value >= 3f64.powf(0.25));
    }

    #[test]
    fn partial_products_increase() {
        for alpha in [0.05, 1.0, 3.0] {
            let pp = fujita_partial_products(alpha, 60);
            assert!(pp.windows(2).all(|w| w[1] > w[0] || (w[1] - w[0]).abs() <= 1e-15 * w[0]));
        }
    }

    #[test]
    fn majorant_dominates_terms_and_tail() {
        for alpha in [0.2, 1.0, 5.0] {
            for i in 2..200 {
                assert!(log_factor(alpha, i) <= log_majorant(alpha, i) + 1e-300);
            }
            for n in [2, 5, 20, 50] {
                let direct: f64 = (n + 1..20_000).map(|i| log_majorant(alpha, i)).sum();
                assert!(majorant_tail(alpha, n) >= direct * (1.0 - 1e-12), "alpha {alpha} n {n}");
            }
        }
    }

    #[test]
    fn grid_defaults() {
        let g = default_certificate_grid();
        assert_eq!(g.len(), 54);
        assert_eq!(g[0], 1.0);
        assert!((g.last().unwrap() - 1e4).abs() / 1e4 < 0.2);
    }

    #[test]
    fn volume_fit_on_z1() {
        let g = WeightedGraph::lattice(1, 80, MuMode::Counting).unwrap();
        let o = g.point(&[0]).unwrap();
        let f = volume_growth_fit(&g, o, 8, 64, Regime::C1Critical).unwrap();
        assert!((f.m_hat - 1.0).abs() < 0.05);
        assert!(f.brackets_hold(1e-12));
        assert!(matches!(
            volume_growth_fit(&g, o, 8, 8, Regime::C1Critical),
            Err(Error::DegenerateFit(_))
        ));
        let f2 = volume_growth_fit(&g, o, 8, 64, Regime::C2Subcritical).unwrap();
        assert!(f2.brackets_hold(1e-12));
    }

    #[test]
    fn unit_constants() {
        let k = SqueezeConstants {
            regime: Regime::C1Critical,
            alpha: 2.0,
            m: 1.0,
            c: 1.0,
            c_prime_vol: 1.0,
            c_double_prime_vol: 1.0,
            zeta: 0.0,
            eta: 0.0,
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
            mass_bound: 1.0,
            big_c1: 1.0,
            a0: 1.0,
            rho: 1.0,
        };
        let d = k.derived(1.0);
        assert_eq!(d.big_c2, Some(1.0 / E));
        assert_eq!(d.big_c3, Some(1.0 / E / 2f64.sqrt()));
        let (lo, up) = k.curves(&d, 2.0 * E.powi(3), 1.0);
        assert_eq!(up, 1.0);
        assert!((lo.unwrap() - 3.0 / E / 2f64.sqrt()).abs() < 1e-15);
    }
}
