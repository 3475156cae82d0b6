use std::fmt::Write as _;

use heatlab_core::fujita::{default_certificate_grid, geometric_grid, rho, FITTED_CONSTANTS_CAVEAT};
use heatlab_core::heat_kernel::{dirichlet_heat_kernel, heat_kernel};
use heatlab_core::io::{curves_csv, fmt_float, kernel_csv, parse_edge_list, trajectory_csv};
use heatlab_core::semilinear::TRUNCATION_CAVEAT;
use heatlab_core::{
    blowup_time, cde_search, gaussian_fit, integrate_mol, kernel_profile, lemma41_certificate, lemma42_mass_bound,
    squeeze_report, volume_growth_fit, BlowupOptions, DirichletOperator, MolOptions, MuMode, Output, Problem, Regime,
    SearchOptions, Status, WeightedGraph,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, GraphKind, InitialKind, InitialSpec, Pipeline};
use crate::{stage_err, Recorder, RunError, StageError};

pub(crate) fn run(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<(), RunError> {
    let (g, x0) = rec.stage("graph", || build_graph(cfg))?;
    if g.has_frontier() {
        rec.caveat(TRUNCATION_CAVEAT);
    }
    match cfg.pipeline {
        Pipeline::KernelValidate => kernel_validate(cfg, &g, x0, rec),
        Pipeline::CurvatureSearch => curvature_search(cfg, &g, rec),
        Pipeline::Blowup => blowup(cfg, &g, x0, rec),
        Pipeline::FujitaDichotomy => dichotomy(cfg, &g, x0, rec),
        Pipeline::Certificate => certificate(cfg, &g, x0, rec),
        Pipeline::VolumeFit => volume_fit(cfg, &g, x0, rec),
        Pipeline::Squeeze => squeeze(cfg, &g, x0, rec),
    }
}

fn build_graph(cfg: &ExperimentConfig) -> Result<(WeightedGraph, usize), RunError> {
    let graph_err = stage_err("graph");
    let g = match cfg.graph {
        GraphKind::Lattice => WeightedGraph::lattice(
            cfg.dim.expect("validated"),
            cfg.half_width.expect("validated"),
            cfg.mu_mode.unwrap_or(MuMode::Degree),
        ),
        GraphKind::EdgeList => {
            let path = cfg.edge_list.as_ref().expect("validated");
            let text = std::fs::read_to_string(path).map_err(|e| RunError::StageFailure {
                stage: "graph".into(),
                source: StageError::Io(format!("{}: {e}", path.display())),
            })?;
            parse_edge_list(&text, cfg.mu_mode)
        }
    }
    .map_err(graph_err)?;
    let x0 = match (&cfg.center, cfg.dim) {
        (Some(id), _) => g.vertex(id),
        (None, Some(dim)) => g.point(&vec![0; dim]),
        (None, None) => unreachable!("edge lists need a center"),
    }
    .map_err(stage_err("graph"))?;
    Ok((g, x0))
}

fn radius(cfg: &ExperimentConfig, g: &WeightedGraph, x0: usize) -> Result<u32, RunError> {
    let max = g.max_ball_radius(x0).map_err(stage_err("graph"))?;
    Ok(cfg.radius.unwrap_or(max))
}

fn t_grid(cfg: &ExperimentConfig, default: impl FnOnce() -> Vec<f64>) -> Vec<f64> {
    match (&cfg.t_grid, cfg.t_geometric) {
        (Some(g), _) => g.clone(),
        (None, Some([start, end, ratio])) => geometric_grid(start, end, ratio),
        (None, None) => default(),
    }
}

/// Initial data on every stored vertex.
fn initial_data(spec: &InitialSpec, g: &WeightedGraph, x0: usize, tol: f64) -> Result<Vec<f64>, RunError> {
    Ok(match spec.kind {
        InitialKind::Constant => vec![spec.a0; g.len()],
        InitialKind::Bump => {
            let dist = g.bfs(x0);
            dist.iter().map(|&d| if d <= spec.bump_radius { spec.a0 } else { 0.0 }).collect()
        }
        InitialKind::Gaussian => {
            let profile = kernel_profile(g, spec.gamma, x0, tol).map_err(stage_err("initial"))?;
            profile.value.iter().map(|p| spec.delta * p).collect()
        }
    })
}

fn check_failure(stage: &str, message: String) -> RunError {
    RunError::StageFailure {
        stage: stage.to_string(),
        source: StageError::Check(message),
    }
}

#[derive(Serialize)]
struct Invariant {
    name: &'static str,
    value: f64,
    tolerance: f64,
    pass: bool,
}

impl Invariant {
    fn at_most(name: &'static str, value: f64, tolerance: f64) -> Self {
        Invariant {
            name,
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }
}

#[derive(Serialize)]
struct KernelValidation {
    center: String,
    radius: u32,
    t_grid: Vec<f64>,
    invariants: Vec<Invariant>,
    exhaustion: Vec<(u32, f64)>,
    all_pass: bool,
}

/// Dirichlet kernel invariants on the configured ball, plus monotonicity in
/// the radius and symmetry of the exhausted limit.
fn kernel_validate(cfg: &ExperimentConfig, g: &WeightedGraph, x0: usize, rec: &mut Recorder) -> Result<(), RunError> {
    let r = radius(cfg, g, x0)?;
    let grid = t_grid(cfg, || vec![0.5, 1.0, 2.0]);
    let report = rec.stage("kernel", || {
        let op = DirichletOperator::new(g.ball(x0, r).map_err(stage_err("kernel"))?).map_err(stage_err("kernel"))?;
        let b = op.ball().clone();
        let n = b.len();
        let (mut sym, mut neg, mut excess, mut ck, mut semigroup, mut heat) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let mut boundary = 0.0f64;
        let mut first = None;
        for &t in &grid {
            let k = dirichlet_heat_kernel(&op, t).map_err(stage_err("kernel"))?;
            let half = dirichlet_heat_kernel(&op, t / 2.0).map_err(stage_err("kernel"))?;
            let h = 1e-3 * t;
            let kp = dirichlet_heat_kernel(&op, t + h).map_err(stage_err("kernel"))?;
            let km = dirichlet_heat_kernel(&op, t - h).map_err(stage_err("kernel"))?;
            let rows: Vec<(f64, f64, f64, f64, f64, f64)> = (0..n)
                .into_par_iter()
                .map(|x| {
                    let row: Vec<f64> = (0..n).map(|y| k.get(x, y)).collect();
                    let lap = op.apply(&row);
                    let (mut s, mut ng, mut c, mut bd, mut ht) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
                    for y in 0..n {
                        s = s.max((k.get(x, y) - k.get(y, x)).abs());
                        ng = ng.max(-k.get(x, y));
                        let composed: f64 = (0..n).map(|z| b.mu[z] * half.get(x, z) * half.get(z, y)).sum();
                        c = c.max((composed - k.get(x, y)).abs());
                        if b.boundary[x] || b.boundary[y] {
                            bd = bd.max(k.get(x, y).abs());
                        } else {
                            let dt = (kp.get(x, y) - km.get(x, y)) / (2.0 * h);
                            ht = ht.max((dt - lap[y]).abs());
                        }
                    }
                    (s, ng, k.mass(x) - 1.0, c, bd, ht)
                })
                .collect();
            for (s, ng, m, c, bd, ht) in rows {
                sym = sym.max(s);
                neg = neg.max(ng);
                excess = excess.max(m);
                ck = ck.max(c);
                boundary = boundary.max(bd);
                heat = heat.max(ht);
            }
            // P_t P_s f = P_{t+s} f on the indicator of the center
            let f: Vec<f64> = (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
            let two = op.propagate(t / 2.0, &op.propagate(t / 2.0, &f));
            let one = op.propagate(t, &f);
            semigroup = semigroup.max(two.iter().zip(&one).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            first.get_or_insert(k);
        }
        // p_r(t, x0, x0) along the doubling radii
        let t_mid = grid[grid.len() / 2];
        let mut exhaustion = Vec::new();
        let mut radii: Vec<u32> = std::iter::successors(Some(1u32), |r| Some(r * 2)).take_while(|&s| s < r).collect();
        radii.push(r);
        for s in radii {
            let op = DirichletOperator::new(g.ball(x0, s).map_err(stage_err("kernel"))?).map_err(stage_err("kernel"))?;
            exhaustion.push((s, op.kernel_row(t_mid, 0)[0]));
        }
        let dip = exhaustion
            .windows(2)
            .map(|w| (w[0].1 - w[1].1) / w[0].1.max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        // limit symmetry against the first neighbor of the center
        let y = g.neighbors(x0)[0].0;
        let limit_asym = match (heat_kernel(g, t_mid, x0, y, cfg.tol), heat_kernel(g, t_mid, y, x0, cfg.tol)) {
            (Ok((a, _)), Ok((b, _))) => (a - b).abs(),
            (Err(e), _) | (_, Err(e)) => return Err(stage_err("kernel")(e)),
        };
        let invariants = vec![
            Invariant::at_most("symmetry", sym, 1e-10),
            Invariant::at_most("nonnegativity", neg, 1e-12),
            Invariant::at_most("mass_excess", excess, 1e-10),
            Invariant::at_most("boundary_rows", boundary, 0.0),
            Invariant::at_most("chapman_kolmogorov", ck, 1e-8),
            Invariant::at_most("semigroup_law", semigroup, 1e-10),
            Invariant::at_most("heat_equation_residual", heat, 1e-5),
            Invariant::at_most("radius_monotonicity_dip", dip, 64.0 * f64::EPSILON),
            Invariant::at_most("limit_symmetry", limit_asym, 2.0 * cfg.tol),
        ];
        let all_pass = invariants.iter().all(|i| i.pass);
        Ok((
            KernelValidation {
                center: g.id(x0).to_string(),
                radius: r,
                t_grid: grid.clone(),
                invariants,
                exhaustion,
                all_pass,
            },
            first.expect("nonempty grid"),
        ))
    })?;
    let (report, kernel) = report;
    rec.json("kernel_validate.json", &report);
    rec.csv("kernel.csv", kernel_csv(&kernel));
    if !report.all_pass {
        let failed: Vec<&str> = report.invariants.iter().filter(|i| !i.pass).map(|i| i.name).collect();
        return Err(check_failure("kernel", format!("invariants failed: {}", failed.join(", "))));
    }
    Ok(())
}

fn curvature_search(cfg: &ExperimentConfig, g: &WeightedGraph, rec: &mut Recorder) -> Result<(), RunError> {
    let opts = SearchOptions {
        trials: cfg.trials,
        seed: cfg.seed,
        tolerance: cfg.tol,
        ..Default::default()
    };
    let report = rec.stage("search", || cde_search(g, cfg.n, cfg.k, &opts).map_err(stage_err("search")))?;
    rec.json("curvature.json", &report);
    Ok(())
}

fn problem(cfg: &ExperimentConfig, g: &WeightedGraph, x0: usize, alpha: f64, a: &[f64]) -> Result<Problem, RunError> {
    let ball = g.ball(x0, radius(cfg, g, x0)?).map_err(stage_err("solve"))?;
    let initial = ball.restrict(a);
    Problem::new(ball, alpha, initial, cfg.horizon).map_err(stage_err("solve"))
}

fn mol_options(cfg: &ExperimentConfig) -> MolOptions {
    MolOptions {
        rtol: cfg.solver_rtol,
        atol: cfg.atol,
        output: match &cfg.t_grid {
            Some(g) => Output::Times(g.iter().copied().filter(|&t| t <= cfg.horizon).collect()),
            None => Output::Steps,
        },
        ..Default::default()
    }
}

fn blowup(cfg: &ExperimentConfig, g: &WeightedGraph, x0: usize, rec: &mut Recorder) -> Result<(), RunError> {
    let spec = cfg.initial.as_ref().expect("validated");
    let a = rec.stage("initial", || initial_data(spec, g, x0, cfg.tol))?;
    let p = problem(cfg, g, x0, cfg.alpha.expect("validated"), &a)?;
    let tr = rec.stage("solve", || integrate_mol(&p, &mol_options(cfg)).map_err(stage_err("solve")))?;
    let opts = BlowupOptions {
        solver_rtol: cfg.solver_rtol,
        atol: cfg.atol,
        ..Default::default()
    };
    let bracket = rec.stage("bracket", || blowup_time(&p, cfg.rtol, &opts).map_err(stage_err("bracket")))?;
    if let Some(c) = tr.caveat.or(bracket.as_ref().and_then(|b| b.caveat)) {
        rec.caveat(c);
    }
    #[derive(Serialize)]
    struct BlowupReport<'a> {
        alpha: f64,
        radius: u32,
        trajectory: heatlab_core::semilinear::TrajectorySummary,
        bracket: &'a Option<heatlab_core::BlowupBracket>,
    }
    rec.json(
        "blowup.json",
        &BlowupReport {
            alpha: p.alpha,
            radius: p.ball.radius,
            trajectory: tr.summary(),
            bracket: &bracket,
        },
    );
    rec.csv("trajectory.csv", trajectory_csv(&tr));
    Ok(())
}

#[derive(Serialize)]
struct DichotomyEntry {
    alpha: f64,
    initial: InitialSpec,
    #[serde(flatten)]
    status: Status,
    final_time: f64,
    final_sup_norm: f64,
    accepted_steps: usize,
}

fn dichotomy(cfg: &ExperimentConfig, g: &WeightedGraph, x0: usize, rec: &mut Recorder) -> Result<(), RunError> {
    let alphas = cfg.alphas.clone().expect("validated");
    let specs: Vec<InitialSpec> = match &cfg.initial_list {
        Some(list) => list.clone(),
        None => vec![cfg.initial.clone().expect("validated"); alphas.len()],
    };
    let problems = rec.stage("initial", || {
        alphas
            .iter()
            .zip(&specs)
            .map(|(&alpha, spec)| problem(cfg, g, x0, alpha, &initial_data(spec, g, x0, cfg.tol)?))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let opts = MolOptions {
        rtol: cfg.solver_rtol,
        atol: cfg.atol,
        output: Output::Times(Vec::new()),
        ..Default::default()
    };
    let runs = rec.stage("solve", || {
        problems
            .par_iter()
            .map(|p| integrate_mol(p, &opts).map_err(stage_err("solve")))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let entries: Vec<DichotomyEntry> = runs
        .iter()
        .zip(alphas.iter().zip(specs))
        .map(|(tr, (&alpha, initial))| {
            let s = tr.summary();
            DichotomyEntry {
                alpha,
                initial,
                status: s.status,
                final_time: s.final_time,
                final_sup_norm: s.final_sup_norm,
                accepted_steps: s.accepted_steps,
            }
        })
        .collect();
    if let Some(c) = runs.iter().find_map(|tr| tr.caveat) {
        rec.caveat(c);
    }
    let mut csv = String::from("alpha,status,t_low,t_high,final_sup_norm\n");
    for e in &entries {
        let (status, lo, hi) = match e.status {
            Status::HorizonReached => ("horizon_reached", String::new(), String::new()),
            Status::BlowUp { t_low, t_high } => ("blow_up", fmt_float(t_low), fmt_float(t_high)),
        };
        let _ = writeln!(csv, "{},{status},{lo},{hi},{}", fmt_float(e.alpha), fmt_float(e.final_sup_norm));
    }
    rec.json("dichotomy.json", &entries);
    rec.csv("dichotomy.csv", csv);
    Ok(())
}

fn certificate(cfg: &ExperimentConfig, g: &WeightedGraph, x0: usize, rec: &mut Recorder) -> Result<(), RunError> {
    let spec = cfg.initial.as_ref().expect("validated");
    let a = rec.stage("initial", || initial_data(spec, g, x0, cfg.tol))?;
    let grid = t_grid(cfg, default_certificate_grid);
    let alpha = cfg.alpha.expect("validated");
    let cert = rec.stage("certificate", || {
        lemma41_certificate(g, &a, x0, alpha, &grid, cfg.tol).map_err(stage_err("certificate"))
    })?;
    let mut csv = String::from("t,semigroup,scaled,radius,converged\n");
    for p in &cert.points {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            fmt_float(p.t),
            fmt_float(p.semigroup),
            fmt_float(p.scaled),
            p.radius,
            p.converged
        );
    }
    rec.json("certificate.json", &cert);
    rec.csv("certificate.csv", csv);
    Ok(())
}

fn volume_fit(cfg: &ExperimentConfig, g: &WeightedGraph, x0: usize, rec: &mut Recorder) -> Result<(), RunError> {
    let regime = cfg.regime.unwrap_or(Regime::C1Critical);
    let fit = rec.stage("fit", || {
        volume_growth_fit(g, x0, cfg.r_min, cfg.r_max, regime).map_err(stage_err("fit"))
    })?;
    let mut csv = String::from("r,volume,residual\n");
    for ((r, v), res) in fit.radii.iter().zip(&fit.volumes).zip(&fit.residuals) {
        let _ = writeln!(csv, "{r},{},{}", fmt_float(*v), fmt_float(*res));
    }
    rec.json("volume_fit.json", &fit);
    rec.csv("volume.csv", csv);
    Ok(())
}

fn squeeze(cfg: &ExperimentConfig, g: &WeightedGraph, x0: usize, rec: &mut Recorder) -> Result<(), RunError> {
    let spec = cfg.initial.as_ref().expect("validated");
    let alpha = cfg.alpha.expect("validated");
    let regime = cfg.regime.unwrap_or(Regime::C1Critical);
    let a = rec.stage("initial", || initial_data(spec, g, x0, cfg.tol))?;
    let (kfit, vfit) = rec.stage("fit", || {
        let times = cfg.fit_times.clone().unwrap_or_else(|| vec![2.0, 4.0, 8.0, 16.0, 32.0]);
        let dist = g.bfs(x0);
        let pairs: Vec<(usize, usize)> =
            (0..g.len()).filter(|&y| dist[y] <= cfg.fit_max_distance).map(|y| (x0, y)).collect();
        let kfit = gaussian_fit(g, &times, &pairs, cfg.t0, cfg.tol).map_err(stage_err("fit"))?;
        let vfit = volume_growth_fit(g, x0, cfg.r_min, cfg.r_max, regime).map_err(stage_err("fit"))?;
        Ok((kfit, vfit))
    })?;
    rec.caveat(FITTED_CONSTANTS_CAVEAT);
    let rho = rho(&kfit, &vfit);
    let validity = match regime {
        Regime::C1Critical => (rho / (kfit.c3_hat * alpha)).sqrt().max((rho / kfit.c3_hat).sqrt()),
        Regime::C2Subcritical => (rho / kfit.c3_hat).sqrt(),
    };
    let r = cfg.r.unwrap_or(validity.floor() + 1.0);
    let grid = t_grid(cfg, || geometric_grid(1.0, 1e6, 2.0));
    let report = rec.stage("squeeze", || {
        squeeze_report(g, &a, x0, alpha, Some(&kfit), Some(&vfit), &grid, r).map_err(stage_err("squeeze"))
    })?;
    if let Some(radii) = &cfg.mass_radii {
        let c_prime = heatlab_core::fujita_product(alpha, 1e-12).map_err(stage_err("mass"))?.value;
        let mass = rec.stage("mass", || {
            lemma42_mass_bound(g, &a, x0, radii, &kfit, c_prime, &vfit).map_err(stage_err("mass"))
        })?;
        rec.json("mass_bound.json", &mass);
    }
    rec.json("gaussian_fit.json", &kfit);
    rec.json("volume_fit.json", &vfit);
    rec.json("squeeze.json", &report);
    rec.csv("curves.csv", curves_csv(&report));
    Ok(())
}
