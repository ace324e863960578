//! CSV tables, SVG plots and the OFF mesh of the cliff-wall cycle.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use phasefront::capacity::CapacityRow;
use phasefront::cliffwall::{jump_covectors, CliffwallCycle, FaceTag, SelectorField2D, Strata};
use phasefront::front::WaveFront;
use phasefront::selector::SelectorField;

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn num(x: f64) -> String {
    format!("{x}")
}

/// One row per branch node: `branch, s, q (lifted), p, h`.
pub fn front_csv(front: &WaveFront) -> Vec<u8> {
    let rows = front.branches.iter().flat_map(|b| {
        b.nodes.iter().map(move |n| vec![b.id.to_string(), num(n.s), num(n.q), num(n.p), num(n.h)])
    });
    csv_bytes(&["branch", "s", "q", "p", "h"], rows)
}

pub fn selector_csv(field: &SelectorField) -> Vec<u8> {
    let rows = (0..field.len()).map(|i| {
        vec![num(field.grid[i]), num(field.f[i]), num(field.sigma[i]), field.branch[i].to_string()]
    });
    csv_bytes(&["q", "f", "sigma", "branch"], rows)
}

pub fn capacity_csv(rows: &[CapacityRow], decay: &[CapacityRow]) -> Vec<u8> {
    let table = |name: &'static str, rs: &[CapacityRow]| -> Vec<Vec<String>> {
        rs.iter()
            .map(|r| {
                vec![
                    name.to_string(),
                    num(r.amplitude),
                    num(r.osc_c0),
                    num(r.gamma),
                    num(r.bound),
                    r.admissible.to_string(),
                ]
            })
            .collect()
    };
    let mut all = table("sweep", rows);
    all.extend(table("decay", decay));
    csv_bytes(&["table", "amplitude", "osc_c0", "gamma", "bound", "admissible"], all)
}

/// Stratum points (`s1`, `triple`, `caustic`) and polyline vertices.
pub fn strata_csv(field: &SelectorField2D, strata: &Strata) -> Vec<u8> {
    let mut rows = Vec::new();
    for (i, j) in jump_covectors(field, strata).iter().enumerate() {
        let v = strata.s1[i].sheets[0].value;
        rows.push(vec![
            "s1".into(),
            i.to_string(),
            num(j.x[0]),
            num(j.x[1]),
            num(v),
            num(j.jump[0]),
            num(j.jump[1]),
            num(j.residual),
        ]);
    }
    for (i, t) in strata.triples.iter().enumerate() {
        let e = String::new();
        rows.push(vec!["triple".into(), i.to_string(), num(t.x[0]), num(t.x[1]), num(t.sheets[0].value), e.clone(), e.clone(), e]);
    }
    for (i, c) in strata.caustics.iter().enumerate() {
        let e = String::new();
        rows.push(vec!["caustic".into(), i.to_string(), num(c.x[0]), num(c.x[1]), e.clone(), e.clone(), e.clone(), e]);
    }
    for (i, p) in strata.polylines.iter().enumerate() {
        for x in &p.points {
            let e = String::new();
            rows.push(vec!["polyline".into(), i.to_string(), num(x[0]), num(x[1]), e.clone(), e.clone(), e.clone(), e]);
        }
    }
    csv_bytes(&["kind", "id", "x1", "x2", "f", "jump1", "jump2", "conormal_residual"], rows)
}

fn tag_name(t: FaceTag) -> &'static str {
    match t {
        FaceTag::Selector => "selector",
        FaceTag::Closure => "closure",
        FaceTag::Cliff => "cliff",
        FaceTag::Simplex => "simplex",
    }
}

/// `4OFF` mesh: vertices `(q1, q2, p1, p2)`, each face followed by its tag
/// as a trailing comment.
pub fn cycle_off(cycle: &CliffwallCycle) -> Vec<u8> {
    let mut s = String::from("4OFF\n");
    let _ = writeln!(s, "# cliff-wall cycle: vertices (q1 q2 p1 p2); faces tagged selector|closure|cliff|simplex");
    let _ = writeln!(s, "{} {} 0", cycle.vertices.len(), cycle.faces.len());
    for v in &cycle.vertices {
        let p = v.point;
        let _ = writeln!(s, "{} {} {} {}", p[0], p[1], p[2], p[3]);
    }
    for f in &cycle.faces {
        let _ = write!(s, "{}", f.vertices.len());
        for v in &f.vertices {
            let _ = write!(s, " {v}");
        }
        let _ = writeln!(s, " # {}", tag_name(f.tag));
    }
    s.into_bytes()
}

const W: f64 = 800.0;
const H: f64 = 500.0;
const PAD: f64 = 40.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn x(&self, x: f64) -> f64 {
        PAD + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD)
    }

    fn y(&self, y: f64) -> f64 {
        H - PAD - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD)
    }
}

fn svg_open(s: &mut String, title: &str) {
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, "<title>{title}</title>");
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
}

/// Polyline split wherever consecutive points jump by more than `period/2`
/// (a wrap of the base coordinate).
fn polylines(s: &mut String, pts: &[(f64, f64)], period: f64, style: &str) {
    let mut flush = |run: &[(f64, f64)]| {
        if run.len() > 1 {
            let coords: Vec<String> = run.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(s, r#"<polyline points="{}" {style}/>"#, coords.join(" "));
        }
    };
    let mut start = 0;
    for k in 1..pts.len() {
        if (pts[k].0 - pts[k - 1].0).abs() > period / 2.0 {
            flush(&pts[start..k]);
            start = k;
        }
    }
    flush(&pts[start..]);
}

fn wrap(q: f64) -> f64 {
    q.rem_euclid(TAU)
}

/// Front branches (thin), the selector (bold), caustics (circles), Maxwell
/// crossings (squares) and zero-section crossings (diamonds).
pub fn front_svg(front: &WaveFront, field: Option<&SelectorField>) -> Vec<u8> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for n in front.branches.iter().flat_map(|b| &b.nodes) {
        lo = lo.min(n.h);
        hi = hi.max(n.h);
    }
    if hi - lo <= 1e-9 || (hi - lo).is_nan() {
        let mid = if lo.is_finite() { lo } else { 0.0 };
        lo = mid - 0.5;
        hi = mid + 0.5;
    }
    let margin = 0.05 * (hi - lo);
    let fr = Frame { x0: 0.0, x1: TAU, y0: lo - margin, y1: hi + margin };
    let mut s = String::new();
    svg_open(&mut s, "wave front");
    let _ = writeln!(
        s,
        r##"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="#888"/>"##,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let px = |q: f64| fr.x(wrap(q));
    for b in &front.branches {
        let pts: Vec<(f64, f64)> = b.nodes.iter().map(|n| (px(n.q), fr.y(n.h))).collect();
        polylines(&mut s, &pts, W - 2.0 * PAD, r##"fill="none" stroke="#4a78b5" stroke-width="1""##);
    }
    if let Some(f) = field {
        let mut pts: Vec<(f64, f64)> = (0..f.len()).map(|i| (fr.x(f.grid[i]), fr.y(f.f[i]))).collect();
        pts.push((fr.x(TAU), fr.y(f.f[0])));
        polylines(&mut s, &pts, W - 2.0 * PAD, r#"fill="none" stroke="black" stroke-width="3""#);
    }
    for c in &front.caustics {
        let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#d62728"/>"##, px(c.q), fr.y(c.h));
    }
    for m in &front.maxwell_crossings {
        let (x, y) = (px(m.q), fr.y(m.height));
        let _ = writeln!(s, r##"<rect x="{:.2}" y="{:.2}" width="8" height="8" fill="#2ca02c"/>"##, x - 4.0, y - 4.0);
    }
    for z in &front.zero_crossings {
        let (x, y) = (px(z.q), fr.y(z.action));
        let _ = writeln!(
            s,
            r##"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="#ff7f0e"/>"##,
            x,
            y - 5.0,
            x + 5.0,
            y,
            x,
            y + 5.0,
            x - 5.0,
            y
        );
    }
    s.push_str("</svg>\n");
    s.into_bytes()
}

/// Selector values as a coarse heat map with the stratum, triple points and
/// caustic-type points on top.
pub fn strata_svg(field: &SelectorField2D, strata: &Strata) -> Vec<u8> {
    let span = field.step * field.cells() as f64;
    let fr = Frame { x0: field.origin[0], x1: field.origin[0] + span, y0: field.origin[1], y1: field.origin[1] + span };
    let mut s = String::new();
    svg_open(&mut s, "selector strata");
    let (lo, hi) = (field.min_f(), field.max_f());
    let cells = field.cells().min(64);
    let cw = (W - 2.0 * PAD) / cells as f64;
    let ch = (H - 2.0 * PAD) / cells as f64;
    for a in 0..cells {
        for b in 0..cells {
            let i = a * field.cells() / cells;
            let j = b * field.cells() / cells;
            let v = field.f(field.index(i, j));
            let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
            let shade = (235.0 - 150.0 * t).round() as u8;
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({shade},{shade},255)"/>"#,
                PAD + a as f64 * cw,
                H - PAD - (b + 1) as f64 * ch,
                cw + 0.3,
                ch + 0.3
            );
        }
    }
    let local = |x: [f64; 2]| {
        if field.periodic {
            let w = |c: f64, o: f64| o + (c - o).rem_euclid(span);
            [w(x[0], field.origin[0]), w(x[1], field.origin[1])]
        } else {
            x
        }
    };
    for p in &strata.polylines {
        let mut pts: Vec<[f64; 2]> = p.points.iter().map(|&x| local(x)).collect();
        if p.closed {
            if let Some(&first) = pts.first() {
                pts.push(first);
            }
        }
        // split at torus wraps in either coordinate
        let mut run: Vec<(f64, f64)> = Vec::new();
        for (k, x) in pts.iter().enumerate() {
            if k > 0 {
                let prev = pts[k - 1];
                if (x[0] - prev[0]).abs() > span / 2.0 || (x[1] - prev[1]).abs() > span / 2.0 {
                    polylines(&mut s, &run, f64::INFINITY, r#"fill="none" stroke="black" stroke-width="2""#);
                    run.clear();
                }
            }
            run.push((fr.x(x[0]), fr.y(x[1])));
        }
        polylines(&mut s, &run, f64::INFINITY, r#"fill="none" stroke="black" stroke-width="2""#);
    }
    for t in &strata.triples {
        let x = local(t.x);
        let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="5" fill="#d62728"/>"##, fr.x(x[0]), fr.y(x[1]));
    }
    for c in &strata.caustics {
        let x = local(c.x);
        let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#ff7f0e"/>"##, fr.x(x[0]), fr.y(x[1]));
    }
    s.push_str("</svg>\n");
    s.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use phasefront::cliffwall::{cliffwall, synthetic_field, AffineArrangement};
    use phasefront::flow::time_one_curve;
    use phasefront::front::decompose_front;
    use phasefront::phase_space::figure1;

    #[test]
    fn front_csv_reads_back_exactly() {
        let front = decompose_front(&time_one_curve(&figure1(), 256).unwrap()).unwrap();
        let bytes = front_csv(&front);
        let mut r = csv::Reader::from_reader(bytes.as_slice());
        let rows: Vec<Vec<f64>> =
            r.records().map(|x| x.unwrap().iter().map(|v| v.parse().unwrap()).collect()).collect();
        let nodes: Vec<_> = front.branches.iter().flat_map(|b| b.nodes.iter().map(move |n| (b.id, n))).collect();
        assert_eq!(rows.len(), nodes.len());
        for (row, (id, n)) in rows.iter().zip(nodes) {
            assert_eq!(row, &vec![id as f64, n.s, n.q, n.p, n.h]);
        }
        let svg = String::from_utf8(front_svg(&front, None)).unwrap();
        assert_eq!(svg.matches("<circle").count(), front.caustics.len());
    }

    #[test]
    fn off_counts_match_the_cycle() {
        let field = synthetic_field(&AffineArrangement::min_of_three([0.2, 0.1]), 21).unwrap();
        let (strata, cycle, _) = cliffwall(&field, 1e-12).unwrap();
        let off = String::from_utf8(cycle_off(&cycle)).unwrap();
        let mut lines = off.lines().filter(|l| !l.starts_with('#'));
        assert_eq!(lines.next(), Some("4OFF"));
        let counts: Vec<usize> = lines.next().unwrap().split_whitespace().map(|x| x.parse().unwrap()).collect();
        assert_eq!(counts[0], cycle.vertices.len());
        assert_eq!(counts[1], cycle.faces.len());
        let strata_rows = strata_csv(&field, &strata);
        let text = String::from_utf8(strata_rows).unwrap();
        assert_eq!(text.lines().next(), Some("kind,id,x1,x2,f,jump1,jump2,conormal_residual"));
        assert_eq!(text.lines().filter(|l| l.starts_with("triple,")).count(), strata.triples.len());
    }
}
