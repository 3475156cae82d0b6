use heatlab_core::fujita::{fujita_partial_products, log_factor, log_majorant};
use heatlab_core::heat_kernel::{dirichlet_heat_kernel, dirichlet_heat_kernel_expm};
use heatlab_core::io::{parse_edge_list, write_edge_list};
use heatlab_core::operators::{cde_residual, gamma, laplacian_apply, DirichletOperator};
use heatlab_core::semilinear::{integrate_mol, DuhamelMap, MolOptions, Output, Problem};
use heatlab_core::{MuMode, VertexId, WeightedGraph};
use proptest::prelude::*;

/// Connected graph: a random spanning tree plus extra edges.
fn arb_graph(max_n: usize) -> impl Strategy<Value = WeightedGraph> {
    (3..=max_n).prop_flat_map(|n| {
        let parents = proptest::collection::vec(any::<prop::sample::Index>(), n - 1);
        let extra = proptest::collection::vec((0..n, 0..n, 0.1f64..3.0), 0..n);
        let weights = proptest::collection::vec(0.1f64..3.0, n - 1);
        let mu = proptest::collection::vec(0.2f64..3.0, n);
        (parents, extra, weights, mu).prop_map(move |(parents, extra, weights, mu)| {
            let v = |i: usize| VertexId::Name(format!("v{i}"));
            let mut edges = Vec::new();
            let mut seen = std::collections::HashSet::new();
            for (i, (p, w)) in parents.iter().zip(weights).enumerate() {
                let child = i + 1;
                let parent = p.index(child);
                seen.insert((parent, child));
                edges.push((v(parent), v(child), w));
            }
            for (a, b, w) in extra {
                let key = (a.min(b), a.max(b));
                if a != b && seen.insert(key) {
                    edges.push((v(key.0), v(key.1), w));
                }
            }
            let measures: Vec<_> = mu.into_iter().enumerate().map(|(i, m)| (v(i), m)).collect();
            WeightedGraph::from_edges(&edges, &measures).unwrap()
        })
    })
}

fn arb_graph_and_fn(max_n: usize) -> impl Strategy<Value = (WeightedGraph, Vec<f64>, Vec<f64>)> {
    arb_graph(max_n).prop_flat_map(|g| {
        let n = g.len();
        (
            Just(g),
            proptest::collection::vec(-2.0f64..2.0, n),
            proptest::collection::vec(-2.0f64..2.0, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn volume_is_monotone_and_balls_nest(g in arb_graph(12), x in any::<prop::sample::Index>()) {
        let x = x.index(g.len());
        let rmax = g.max_ball_radius(x).unwrap();
        let mut prev: Option<heatlab_core::Ball> = None;
        for r in 0..=rmax {
            let b = g.ball(x, r).unwrap();
            if let Some(p) = &prev {
                prop_assert!(b.volume() >= p.volume());
                prop_assert!(p.members.iter().all(|&v| b.contains(v)));
            }
            prev = Some(b);
        }
        prop_assert_eq!(prev.unwrap().len(), g.len());
    }

    #[test]
    fn hop_distance_is_a_metric(g in arb_graph(12)) {
        let d: Vec<Vec<u32>> = (0..g.len()).map(|x| g.bfs(x)).collect();
        for x in 0..g.len() {
            prop_assert_eq!(d[x][x], 0);
            for y in 0..g.len() {
                prop_assert_eq!(d[x][y], d[y][x]);
                if x != y { prop_assert!(d[x][y] >= 1); }
                for z in 0..g.len() {
                    prop_assert!(d[x][z] <= d[x][y] + d[y][z]);
                }
            }
        }
    }

    #[test]
    fn laplacian_is_symmetric_in_l2_mu((g, f, h) in arb_graph_and_fn(10)) {
        let pair = |a: &[f64], b: &[f64]| -> f64 {
            (0..g.len()).map(|x| g.mu(x) * a[x] * laplacian_apply(&g, b, x).unwrap()).sum()
        };
        let (fh, hf) = (pair(&f, &h), pair(&h, &f));
        prop_assert!((fh - hf).abs() <= 1e-10 * (1.0 + fh.abs()));
        prop_assert!(pair(&f, &f) <= 1e-12);
    }

    #[test]
    fn gamma_is_the_carre_du_champ((g, f, h) in arb_graph_and_fn(10)) {
        let fh: Vec<f64> = f.iter().zip(&h).map(|(a, b)| a * b).collect();
        for x in 0..g.len() {
            let lhs = 2.0 * gamma(&g, &f, &h, x).unwrap();
            let rhs = laplacian_apply(&g, &fh, x).unwrap()
                - f[x] * laplacian_apply(&g, &h, x).unwrap()
                - h[x] * laplacian_apply(&g, &f, x).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
            prop_assert!(gamma(&g, &f, &f, x).unwrap() >= 0.0);
        }
    }

    #[test]
    fn cde_residual_is_monotone_in_n_and_k(g in arb_graph(8), seed in proptest::collection::vec(0.1f64..5.0, 8)) {
        let f: Vec<f64> = (0..g.len()).map(|i| seed[i % seed.len()]).collect();
        for x in 0..g.len() {
            let base = cde_residual(&g, x, 2.0, 0.0, &f).unwrap();
            let bigger_n = cde_residual(&g, x, 5.0, 0.0, &f).unwrap();
            let bigger_k = cde_residual(&g, x, 2.0, 1.0, &f).unwrap();
            let tol = 1e-12 * (1.0 + base.abs());
            prop_assert!(bigger_n >= base - tol);
            prop_assert!(bigger_k <= base + tol);
        }
    }

    #[test]
    fn heat_kernel_laws_on_finite_graphs(g in arb_graph(9), t in 0.05f64..3.0, s in 0.05f64..3.0) {
        let op = DirichletOperator::new(g.whole().unwrap()).unwrap();
        let b = op.ball().clone();
        let n = b.len();
        let kt = dirichlet_heat_kernel(&op, t).unwrap();
        let ks = dirichlet_heat_kernel(&op, s).unwrap();
        let kts = dirichlet_heat_kernel(&op, t + s).unwrap();
        let expm = dirichlet_heat_kernel_expm(&b, t).unwrap();
        for x in 0..n {
            // no boundary: the finite graph is stochastically complete
            prop_assert!((kt.mass(x) - 1.0).abs() <= 1e-10);
            for y in 0..n {
                let scale = 1.0 + kt.get(x, y).abs();
                prop_assert!((kt.get(x, y) - kt.get(y, x)).abs() <= 1e-12 * scale);
                prop_assert!(kt.get(x, y) >= -1e-12);
                prop_assert!((kt.get(x, y) - expm.get(x, y)).abs() <= 1e-9 * scale, "expm gap {:e} at t {}", (kt.get(x, y) - expm.get(x, y)).abs(), t);
                let ck: f64 = (0..n).map(|z| b.mu[z] * kt.get(x, z) * ks.get(z, y)).sum();
                prop_assert!((ck - kts.get(x, y)).abs() <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn semigroup_law(g in arb_graph(9), t in 0.0f64..2.0, s in 0.0f64..2.0, f in proptest::collection::vec(-1.0f64..1.0, 9)) {
        let op = DirichletOperator::new(g.whole().unwrap()).unwrap();
        let f: Vec<f64> = (0..op.ball().len()).map(|i| f[i % f.len()]).collect();
        let two = op.propagate(t, &op.propagate(s, &f));
        let one = op.propagate(t + s, &f);
        for (a, b) in two.iter().zip(&one) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
        prop_assert_eq!(op.propagate(0.0, &f).len(), f.len());
    }

    #[test]
    fn comparison_principle(g in arb_graph(7), a in proptest::collection::vec(0.0f64..0.5, 7), bump in proptest::collection::vec(0.0f64..0.3, 7)) {
        let n = g.len();
        let ball = g.whole().unwrap();
        let lo: Vec<f64> = (0..n).map(|i| a[i % a.len()] + 0.01).collect();
        let hi: Vec<f64> = lo.iter().enumerate().map(|(i, v)| v + bump[i % bump.len()]).collect();
        let times: Vec<f64> = (1..=5).map(|k| 0.1 * k as f64).collect();
        let opts = MolOptions { output: Output::Times(times), ..Default::default() };
        let ul = integrate_mol(&Problem::new(ball.clone(), 1.0, lo, 0.5).unwrap(), &opts).unwrap();
        let uh = integrate_mol(&Problem::new(ball, 1.0, hi, 0.5).unwrap(), &opts).unwrap();
        for (sl, sh) in ul.states.iter().zip(&uh.states) {
            for (x, y) in sl.iter().zip(sh) {
                prop_assert!(*x <= *y + 1e-9);
            }
        }
    }

    #[test]
    fn fujita_partial_products_increase(alpha in 0.05f64..8.0) {
        let pp = fujita_partial_products(alpha, 40);
        prop_assert!(pp.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(pp[0] > 1.0);
        for i in 2..60 {
            prop_assert!(log_factor(alpha, i) <= log_majorant(alpha, i));
        }
    }

    #[test]
    fn edge_list_round_trip(g in arb_graph(10)) {
        let h = parse_edge_list(&write_edge_list(&g), None).unwrap();
        prop_assert_eq!(h.len(), g.len());
        prop_assert_eq!(h.edge_count(), g.edge_count());
        for x in 0..g.len() {
            let hx = h.vertex(g.id(x)).unwrap();
            prop_assert_eq!(h.mu(hx), g.mu(x));
            prop_assert!((h.degree(hx) - g.degree(x)).abs() <= 1e-14 * g.degree(x));
        }
    }
}

#[test]
fn duhamel_residual_of_the_mol_solution() {
    let g = WeightedGraph::lattice(1, 8, MuMode::Degree).unwrap();
    let ball = g.ball(g.point(&[0]).unwrap(), 6).unwrap();
    let a: Vec<f64> = ball.dist.iter().map(|&d| 0.5 / (1.0 + d as f64)).collect();
    let p = Problem::new(ball, 1.0, a, 1.0).unwrap();
    let grid: Vec<f64> = (1..=40).map(|k| k as f64 / 40.0).collect();
    let map = DuhamelMap::new(&p, &grid).unwrap();
    let tr = integrate_mol(
        &p,
        &MolOptions {
            rtol: 1e-12,
            atol: 1e-14,
            output: Output::Times(map.nodes()[1..].to_vec()),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(tr.states.len(), map.nodes().len());
    let image = map.apply(&tr.states);
    let gap = image
        .iter()
        .zip(&tr.states)
        .flat_map(|(u, v)| u.iter().zip(v).map(|(a, b)| (a - b).abs()))
        .fold(0.0f64, f64::max);
    assert!(gap < 1e-7, "Duhamel residual {gap:e}");
}

#[test]
fn exhaustion_increases_on_z2() {
    let g = WeightedGraph::lattice(2, 14, MuMode::Counting).unwrap();
    let o = g.point(&[0, 0]).unwrap();
    let vals: Vec<f64> = [2, 4, 8, 13]
        .iter()
        .map(|&r| DirichletOperator::new(g.ball(o, r).unwrap()).unwrap().kernel_row(2.0, 0)[0])
        .collect();
    assert!(vals.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-13)), "{vals:?}");
}
