//! Edge-list text format and CSV export.
//!
//! Edge lists have one `x y w` line per edge. A `# measure` line starts the
//! measure section, which holds `x mu` lines. Any other line starting with
//! `#` is a comment. Vertex tokens of the form `(i,j,...)` are lattice
//! points; anything else is a name.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::fujita::SqueezeReport;
use crate::graph::{MuMode, VertexId, WeightedGraph};
use crate::heat_kernel::HeatKernelMatrix;
use crate::semilinear::Trajectory;

fn parse_vertex(token: &str) -> std::result::Result<VertexId, String> {
    if let Some(inner) = token.strip_prefix('(').and_then(|s| s.strip_suffix(')')) {
        inner
            .split(',')
            .map(|c| c.trim().parse::<i64>().map_err(|e| format!("bad coordinate in {token}: {e}")))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(VertexId::Point)
    } else {
        Ok(VertexId::Name(token.to_string()))
    }
}

fn parse_number(token: &str, line: usize) -> Result<f64> {
    token.parse::<f64>().map_err(|e| Error::Parse {
        line,
        message: format!("bad number {token:?}: {e}"),
    })
}

/// Parse an edge list. Vertices without an explicit measure get one from
/// `default_mu` (1 for counting, weighted degree for degree); with no
/// default every vertex must be listed in the measure section.
pub fn parse_edge_list(text: &str, default_mu: Option<MuMode>) -> Result<WeightedGraph> {
    let mut edges = Vec::new();
    let mut measures: Vec<(VertexId, f64)> = Vec::new();
    let mut in_measure = false;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let s = raw.trim();
        if s.is_empty() {
            continue;
        }
        if let Some(comment) = s.strip_prefix('#') {
            if comment.trim().eq_ignore_ascii_case("measure") {
                in_measure = true;
            }
            continue;
        }
        let tokens: Vec<&str> = s.split_whitespace().collect();
        let vertex = |t: &str| parse_vertex(t).map_err(|message| Error::Parse { line, message });
        match (in_measure, tokens.as_slice()) {
            (false, [x, y, w]) => edges.push((vertex(x)?, vertex(y)?, parse_number(w, line)?)),
            (true, [x, m]) => measures.push((vertex(x)?, parse_number(m, line)?)),
            (false, _) => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected `x y weight`, got {s:?}"),
                })
            }
            (true, _) => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected `x measure`, got {s:?}"),
                })
            }
        }
    }
    if let Some(mode) = default_mu {
        let given: std::collections::HashSet<VertexId> = measures.iter().map(|(v, _)| v.clone()).collect();
        let mut degree: BTreeMap<VertexId, f64> = BTreeMap::new();
        let mut seen = std::collections::HashSet::new();
        for (x, y, w) in &edges {
            // an edge listed in both directions counts once
            let key = if x <= y { (x.clone(), y.clone()) } else { (y.clone(), x.clone()) };
            if seen.insert(key) {
                *degree.entry(x.clone()).or_default() += w;
                *degree.entry(y.clone()).or_default() += w;
            }
        }
        for (v, d) in degree {
            if !given.contains(&v) {
                let m = match mode {
                    MuMode::Counting => 1.0,
                    MuMode::Degree => d,
                };
                measures.push((v, m));
            }
        }
    }
    WeightedGraph::from_edges(&edges, &measures)
}

/// Inverse of [`parse_edge_list`], each edge written once.
pub fn write_edge_list(g: &WeightedGraph) -> String {
    let mut out = String::new();
    for x in 0..g.len() {
        for &(y, w) in g.neighbors(x) {
            if x < y {
                let _ = writeln!(out, "{} {} {:e}", token(g.id(x)), token(g.id(y)), w);
            }
        }
    }
    out.push_str("# measure\n");
    for x in 0..g.len() {
        let _ = writeln!(out, "{} {:e}", token(g.id(x)), g.mu(x));
    }
    out
}

fn token(v: &VertexId) -> String {
    v.to_string().replace(' ', "")
}

/// Floats in CSV output carry 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn kernel_csv(k: &HeatKernelMatrix) -> String {
    let mut out = String::from("x,y,t,value\n");
    let ids = &k.ball.ids;
    for i in 0..ids.len() {
        for j in 0..ids.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                csv_field(&ids[i].to_string()),
                csv_field(&ids[j].to_string()),
                fmt_float(k.time),
                fmt_float(k.get(i, j))
            );
        }
    }
    out
}

pub fn trajectory_csv(tr: &Trajectory) -> String {
    let mut out = String::from("t,vertex,value\n");
    let names: Vec<String> = tr.ball.ids.iter().map(|v| csv_field(&v.to_string())).collect();
    for (t, state) in tr.times.iter().zip(&tr.states) {
        for (name, v) in names.iter().zip(state) {
            let _ = writeln!(out, "{},{},{}", fmt_float(*t), name, fmt_float(*v));
        }
    }
    out
}

pub fn curves_csv(report: &SqueezeReport) -> String {
    let mut out = String::from("t,lower,upper\n");
    for p in &report.curves {
        let lower = p.lower.map_or_else(String::new, fmt_float);
        let _ = writeln!(out, "{},{},{}", fmt_float(p.t), lower, fmt_float(p.upper));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let text = "# a triangle\na b 1\nb c 2.5\nc a 1\n# measure\na 1\nb 2\nc 3\n";
        let g = parse_edge_list(text, None).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.edge_count(), 3);
        let h = parse_edge_list(&write_edge_list(&g), None).unwrap();
        assert_eq!(h.len(), 3);
        for x in 0..3 {
            let hx = h.vertex(g.id(x)).unwrap();
            assert_eq!(h.mu(hx), g.mu(x));
            assert_eq!(h.degree(hx), g.degree(x));
        }
    }

    #[test]
    fn lattice_tokens_round_trip() {
        let g = WeightedGraph::lattice(2, 2, MuMode::Counting).unwrap();
        let h = parse_edge_list(&write_edge_list(&g), None).unwrap();
        assert_eq!(h.len(), g.len());
        assert!(h.point(&[1, -1]).is_ok());
    }

    #[test]
    fn default_measures() {
        let g = parse_edge_list("a b 2\nb c 1\n", Some(MuMode::Degree)).unwrap();
        assert_eq!(g.mu(g.vertex(&"b".into()).unwrap()), 3.0);
        let g = parse_edge_list("a b 2\nb a 2\n", Some(MuMode::Counting)).unwrap();
        assert_eq!(g.mu(0), 1.0);
        assert!(matches!(parse_edge_list("a b 1\n", None), Err(Error::NonpositiveWeightOrMeasure(_))));
    }

    #[test]
    fn parse_errors_carry_lines() {
        assert!(matches!(parse_edge_list("a b\n", None), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse_edge_list("a b 1\n# measure\na x\n", None),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn float_format() {
        assert_eq!(fmt_float(0.1), "1.0000000000000001e-1");
        assert_eq!(csv_field("(0,1)"), "\"(0,1)\"");
    }
}
