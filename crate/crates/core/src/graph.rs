//! Locally finite weighted graphs, stored as finite truncations.
//!
//! A [`WeightedGraph`] is either a genuinely finite graph (built from an edge
//! list) or a finite window onto an infinite family such as the lattice
//! `Z^m`. In the second case the vertices on the edge of the window are
//! marked as *frontier* vertices: their neighborhood in the ambient graph is
//! incomplete, so any ball or local operator that would need it fails with
//! an error instead of silently using the clipped neighborhood.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on `m * (2W+1)^m` for lattice truncations.
pub const DEFAULT_VERTEX_BUDGET: usize = 4_000_000;

/// Opaque vertex identifier. Lattice vertices are integer tuples.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VertexId {
    Point(Vec<i64>),
    Name(String),
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VertexId::Name(s) => f.write_str(s),
            VertexId::Point(p) => {
                f.write_str("(")?;
                for (i, c) in p.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl From<&str> for VertexId {
    fn from(s: &str) -> Self {
        VertexId::Name(s.to_string())
    }
}

impl From<i64> for VertexId {
    fn from(x: i64) -> Self {
        VertexId::Point(vec![x])
    }
}

/// Vertex measure used for lattice truncations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MuMode {
    /// `mu = 1` everywhere.
    Counting,
    /// `mu(x) = m(x)`, the weighted degree in the ambient lattice.
    Degree,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Family {
    Lattice {
        dim: usize,
        half_width: i64,
        mu_mode: MuMode,
    },
}

#[derive(Clone, Debug)]
pub struct WeightedGraph {
    ids: Vec<VertexId>,
    index: HashMap<VertexId, usize>,
    adj: Vec<Vec<(usize, f64)>>,
    mu: Vec<f64>,
    frontier: Vec<bool>,
    omega_min: f64,
    family: Option<Family>,
}

/// `D_mu`, `D_omega` and the weighted degrees `m(x)`, with the vertex / edge
/// attaining each supremum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DegreeBounds {
    pub d_mu: f64,
    pub d_mu_vertex: usize,
    pub d_omega: f64,
    pub mu_max_vertex: usize,
    pub omega_min_edge: (usize, usize),
    pub m_of: Vec<f64>,
}

impl WeightedGraph {
    /// Validate an edge list `(x, y, w)` and a vertex measure.
    ///
    /// An undirected edge may be listed once or in both directions; listing
    /// both directions with different weights is an asymmetry error.
    pub fn from_edges(edges: &[(VertexId, VertexId, f64)], measures: &[(VertexId, f64)]) -> Result<Self> {
        let mut ids: Vec<VertexId> = Vec::new();
        let mut index: HashMap<VertexId, usize> = HashMap::new();
        let mut intern = |v: &VertexId, ids: &mut Vec<VertexId>| -> usize {
            *index.entry(v.clone()).or_insert_with(|| {
                ids.push(v.clone());
                ids.len() - 1
            })
        };

        let mut directed: HashMap<(usize, usize), f64> = HashMap::new();
        for (x, y, w) in edges {
            if !(w.is_finite() && *w > 0.0) {
                return Err(Error::NonpositiveWeightOrMeasure(format!("edge {x}-{y} has weight {w}")));
            }
            if x == y {
                return Err(Error::SelfLoop(x.to_string()));
            }
            let i = intern(x, &mut ids);
            let j = intern(y, &mut ids);
            if directed.contains_key(&(i, j)) {
                return Err(Error::DuplicateEdge(x.to_string(), y.to_string()));
            }
            if let Some(&back) = directed.get(&(j, i)) {
                if back != *w {
                    return Err(Error::AsymmetricWeight {
                        x: x.to_string(),
                        y: y.to_string(),
                        forward: *w,
                        backward: back,
                    });
                }
            }
            directed.insert((i, j), *w);
        }
        for (v, _) in measures {
            intern(v, &mut ids);
        }
        drop(intern);

        let n = ids.len();
        let mut mu = vec![f64::NAN; n];
        for (v, m) in measures {
            if !(m.is_finite() && *m > 0.0) {
                return Err(Error::NonpositiveWeightOrMeasure(format!("measure of {v} is {m}")));
            }
            mu[index[v]] = *m;
        }
        if let Some(i) = mu.iter().position(|m| m.is_nan()) {
            return Err(Error::NonpositiveWeightOrMeasure(format!("vertex {} has no measure", ids[i])));
        }

        let mut adj = vec![Vec::new(); n];
        let mut keys: Vec<_> = directed.keys().copied().collect();
        keys.sort_unstable();
        for (i, j) in keys {
            if i < j || !directed.contains_key(&(j, i)) {
                let w = directed[&(i, j)];
                adj[i].push((j, w));
                adj[j].push((i, w));
            }
        }
        let frontier = vec![false; n];
        Self::assemble(ids, index, adj, mu, frontier, None)
    }

    fn assemble(
        ids: Vec<VertexId>,
        index: HashMap<VertexId, usize>,
        mut adj: Vec<Vec<(usize, f64)>>,
        mu: Vec<f64>,
        frontier: Vec<bool>,
        family: Option<Family>,
    ) -> Result<Self> {
        for list in &mut adj {
            list.sort_unstable_by_key(|&(j, _)| j);
        }
        let omega_min = adj
            .iter()
            .flat_map(|l| l.iter().map(|&(_, w)| w))
            .fold(f64::INFINITY, f64::min);
        if !omega_min.is_finite() {
            return Err(Error::InvalidFamily("graph has no edges, omega_min undefined".into()));
        }
        let g = WeightedGraph {
            ids,
            index,
            adj,
            mu,
            frontier,
            omega_min,
            family,
        };
        let components = g.component_count();
        if components != 1 {
            return Err(Error::Disconnected { components });
        }
        Ok(g)
    }

    fn component_count(&self) -> usize {
        let mut seen = vec![false; self.len()];
        let mut count = 0;
        for s in 0..self.len() {
            if seen[s] {
                continue;
            }
            count += 1;
            seen[s] = true;
            let mut queue = VecDeque::from([s]);
            while let Some(x) = queue.pop_front() {
                for &(y, _) in &self.adj[x] {
                    if !seen[y] {
                        seen[y] = true;
                        queue.push_back(y);
                    }
                }
            }
        }
        count
    }

    /// Truncation of `Z^dim` to `{-W..W}^dim` with unit weights.
    pub fn lattice(dim: usize, half_width: i64, mu_mode: MuMode) -> Result<Self> {
        Self::lattice_with_budget(dim, half_width, mu_mode, DEFAULT_VERTEX_BUDGET)
    }

    pub fn lattice_with_budget(dim: usize, half_width: i64, mu_mode: MuMode, budget: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidFamily("lattice dimension must be >= 1".into()));
        }
        if half_width < 1 {
            return Err(Error::InvalidFamily(format!(
                "half-width {half_width} leaves no edges (omega_min undefined)"
            )));
        }
        let side = (2 * half_width + 1) as usize;
        let n = (0..dim)
            .try_fold(1usize, |acc, _| acc.checked_mul(side))
            .and_then(|n| n.checked_mul(dim).map(|cost| (n, cost)));
        let n = match n {
            Some((n, cost)) if cost <= budget => n,
            Some((_, cost)) => return Err(Error::BudgetExceeded { requested: cost, budget }),
            None => return Err(Error::BudgetExceeded { requested: usize::MAX, budget }),
        };

        let coords = |mut k: usize| -> Vec<i64> {
            let mut c = vec![0i64; dim];
            for slot in c.iter_mut() {
                *slot = (k % side) as i64 - half_width;
                k /= side;
            }
            c
        };
        let mut ids = Vec::with_capacity(n);
        let mut index = HashMap::with_capacity(n);
        let mut frontier = Vec::with_capacity(n);
        for k in 0..n {
            let c = coords(k);
            frontier.push(c.iter().any(|x| x.abs() == half_width));
            index.insert(VertexId::Point(c.clone()), k);
            ids.push(VertexId::Point(c));
        }
        let mut adj = vec![Vec::with_capacity(2 * dim); n];
        let mut stride = 1usize;
        for _ in 0..dim {
            for (k, list) in adj.iter_mut().enumerate() {
                let c = (k / stride) % side;
                if c > 0 {
                    list.push((k - stride, 1.0));
                }
                if c + 1 < side {
                    list.push((k + stride, 1.0));
                }
            }
            stride *= side;
        }
        let mu = match mu_mode {
            MuMode::Counting => vec![1.0; n],
            MuMode::Degree => adj.iter().map(|l| l.iter().map(|&(_, w)| w).sum()).collect(),
        };
        Self::assemble(
            ids,
            index,
            adj,
            mu,
            frontier,
            Some(Family::Lattice {
                dim,
                half_width,
                mu_mode,
            }),
        )
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn id(&self, v: usize) -> &VertexId {
        &self.ids[v]
    }

    pub fn ids(&self) -> &[VertexId] {
        &self.ids
    }

    pub fn vertex(&self, id: &VertexId) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownVertex(id.to_string()))
    }

    /// Index of a lattice point, e.g. `g.point(&[0, 0])`.
    pub fn point(&self, coords: &[i64]) -> Result<usize> {
        self.vertex(&VertexId::Point(coords.to_vec()))
    }

    pub(crate) fn check(&self, v: usize) -> Result<()> {
        if v < self.len() {
            Ok(())
        } else {
            Err(Error::UnknownVertex(format!("#{v}")))
        }
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adj[v]
    }

    pub fn mu(&self, v: usize) -> f64 {
        self.mu[v]
    }

    pub fn measure(&self) -> &[f64] {
        &self.mu
    }

    /// Weighted degree `m(x) = sum_y w_xy` over the stored neighbors.
    pub fn degree(&self, v: usize) -> f64 {
        self.adj[v].iter().map(|&(_, w)| w).sum()
    }

    pub fn omega_min(&self) -> f64 {
        self.omega_min
    }

    pub fn family(&self) -> Option<&Family> {
        self.family.as_ref()
    }

    /// True if `v` sits on the artificial edge of a truncation.
    pub fn is_frontier(&self, v: usize) -> bool {
        self.frontier[v]
    }

    pub fn has_frontier(&self) -> bool {
        self.frontier.iter().any(|&f| f)
    }

    /// BFS hop distances from `source` to every vertex.
    pub fn bfs(&self, source: usize) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.len()];
        dist[source] = 0;
        let mut queue = VecDeque::from([source]);
        while let Some(x) = queue.pop_front() {
            let d = dist[x] + 1;
            for &(y, _) in &self.adj[x] {
                if dist[y] == u32::MAX {
                    dist[y] = d;
                    queue.push_back(y);
                }
            }
        }
        dist
    }

    pub fn distance(&self, x: usize, y: usize) -> Result<u32> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.bfs(x)[y])
    }

    /// Hop distance from `x` to the nearest frontier vertex, `None` for a
    /// graph without truncation edge.
    pub fn frontier_distance(&self, x: usize) -> Option<u32> {
        if !self.has_frontier() {
            return None;
        }
        self.bfs(x)
            .iter()
            .zip(&self.frontier)
            .filter(|(_, &f)| f)
            .map(|(&d, _)| d)
            .min()
    }

    /// Largest radius `r` for which `B_r(x)` is valid, i.e. distinct from
    /// the truncation. For finite graphs this is the eccentricity of `x`.
    pub fn max_ball_radius(&self, x: usize) -> Result<u32> {
        self.check(x)?;
        Ok(match self.frontier_distance(x) {
            Some(d) => d.saturating_sub(1),
            None => self.bfs(x).into_iter().max().unwrap_or(0),
        })
    }

    pub fn degree_bounds(&self) -> DegreeBounds {
        let m_of: Vec<f64> = (0..self.len()).map(|v| self.degree(v)).collect();
        let (d_mu_vertex, d_mu) = m_of
            .iter()
            .zip(&self.mu)
            .map(|(m, mu)| m / mu)
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, r)| if r > acc.1 { (i, r) } else { acc });
        let (mu_max_vertex, mu_max) = self
            .mu
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, m)| if m > acc.1 { (i, m) } else { acc });
        let mut omega_min_edge = (0, 0);
        'outer: for (x, list) in self.adj.iter().enumerate() {
            for &(y, w) in list {
                if w == self.omega_min {
                    omega_min_edge = (x.min(y), x.max(y));
                    break 'outer;
                }
            }
        }
        DegreeBounds {
            d_mu,
            d_mu_vertex,
            d_omega: mu_max / self.omega_min,
            mu_max_vertex,
            omega_min_edge,
            m_of,
        }
    }

    /// `B_r(x0)`; fails if the ball, or the neighborhood needed to decide
    /// its boundary, reaches the truncation edge.
    pub fn ball(&self, x0: usize, r: u32) -> Result<Ball> {
        self.check(x0)?;
        let dist = self.bfs(x0);
        if self.has_frontier() {
            let edge = dist
                .iter()
                .zip(&self.frontier)
                .filter(|(_, &f)| f)
                .map(|(&d, _)| d)
                .min()
                .unwrap_or(u32::MAX);
            if r + 1 > edge {
                return Err(Error::TruncationTooSmall {
                    center: self.ids[x0].to_string(),
                    radius: r,
                    edge_distance: edge,
                });
            }
        }
        let mut members: Vec<usize> = (0..self.len()).filter(|&v| dist[v] <= r).collect();
        members.sort_by_key(|&v| (dist[v], v));
        let local: HashMap<usize, usize> = members.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut boundary = Vec::with_capacity(members.len());
        let mut adj = Vec::with_capacity(members.len());
        for &v in &members {
            boundary.push(self.adj[v].iter().any(|(y, _)| !local.contains_key(y)));
            adj.push(
                self.adj[v]
                    .iter()
                    .filter_map(|&(y, w)| local.get(&y).map(|&j| (j, w)))
                    .collect(),
            );
        }
        let interior: Vec<usize> = (0..members.len()).filter(|&i| !boundary[i]).collect();
        Ok(Ball {
            center: x0,
            radius: r,
            mu: members.iter().map(|&v| self.mu[v]).collect(),
            degree: members.iter().map(|&v| self.degree(v)).collect(),
            dist: members.iter().map(|&v| dist[v]).collect(),
            ids: members.iter().map(|&v| self.ids[v].clone()).collect(),
            members,
            local,
            boundary,
            interior,
            adj,
        })
    }

    /// The whole of a finite graph as a ball (empty boundary). Refused for
    /// truncations of infinite families.
    pub fn whole(&self) -> Result<Ball> {
        if self.has_frontier() {
            return Err(Error::TruncationTooSmall {
                center: self.ids[0].to_string(),
                radius: u32::MAX,
                edge_distance: self.frontier_distance(0).unwrap_or(0),
            });
        }
        let ecc = self.bfs(0).into_iter().max().unwrap_or(0);
        self.ball(0, ecc)
    }

    /// `V(x0, r) = sum over B_r of mu`.
    pub fn volume(&self, x0: usize, r: u32) -> Result<f64> {
        Ok(self.ball(x0, r)?.volume())
    }

    /// Volume of the ball of real radius `s`, i.e. `V(x0, floor(s))`.
    pub fn volume_real(&self, x0: usize, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::InvalidArgument(format!("radius {s}")));
        }
        self.volume(x0, s.floor() as u32)
    }
}

/// A ball `B_r(x0)` with its own copy of the local structure, so it can be
/// used without the ambient graph.
///
/// Local indices run over `members`, sorted by distance from the center; the
/// center is always local index 0.
#[derive(Clone, Debug)]
pub struct Ball {
    pub center: usize,
    pub radius: u32,
    pub members: Vec<usize>,
    pub ids: Vec<VertexId>,
    pub dist: Vec<u32>,
    pub mu: Vec<f64>,
    /// Ambient weighted degree `m(x)`, including edges leaving the ball.
    pub degree: Vec<f64>,
    pub boundary: Vec<bool>,
    pub interior: Vec<usize>,
    /// Neighbors inside the ball, by local index.
    pub adj: Vec<Vec<(usize, f64)>>,
    local: HashMap<usize, usize>,
}

impl Ball {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn local(&self, v: usize) -> Option<usize> {
        self.local.get(&v).copied()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.local.contains_key(&v)
    }

    pub fn volume(&self) -> f64 {
        self.mu.iter().sum()
    }

    pub fn has_boundary(&self) -> bool {
        self.boundary.iter().any(|&b| b)
    }

    /// Restrict a function on the ambient graph to the ball.
    pub fn restrict(&self, f: &[f64]) -> Vec<f64> {
        self.members.iter().map(|&v| f[v]).collect()
    }
}
