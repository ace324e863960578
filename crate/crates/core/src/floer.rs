//! Filtered Floer complexes of a time-one curve against the zero section or
//! a cotangent fiber, in the combinatorial model for curves on the annulus:
//! generators are transverse intersections and the differential counts
//! embedded bigons with convex corners, mod 2.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::flow::{proper_intersection, segment_interp, CurvePoint, LagrangianCurve};
use crate::front::zero_section_crossings;
use crate::math::{bracketed_root, circ_diff, median_abs, wrap, Hermite, PI, TAU};

/// The second Lagrangian of the pair.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum TestObject {
    ZeroSection,
    /// The cotangent fiber over a base point.
    Fiber(f64),
}

/// An intersection point of the curve with the test object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Generator {
    pub id: usize,
    pub q: f64,
    pub p: f64,
    /// Curve parameter of the intersection.
    pub s: f64,
    /// Continuous lift of `Q` at `s`.
    pub q_lift: f64,
    pub action: f64,
    /// Mod-2 grading from the crossing sign.
    pub grading: u8,
    /// Integer degree from the lifted tangent angle.
    pub degree: i32,
    pub dq: f64,
    pub dp: f64,
}

/// A counted bigon: boundary arc of the curve from `from` to `to`, closed by
/// an arc of the test object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bigon {
    pub from: usize,
    pub to: usize,
    /// Whether the curve arc runs forward in `s` from `from` to `to`.
    pub forward: bool,
}

#[derive(Debug, Clone)]
pub struct FilteredChainComplex {
    pub test: TestObject,
    pub generators: Vec<Generator>,
    /// `boundary[i]`: sorted ids `j` with `⟨∂gᵢ, gⱼ⟩ = 1`.
    pub boundary: Vec<Vec<usize>>,
    pub bigons: Vec<Bigon>,
}

impl FilteredChainComplex {
    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    /// `∂∘∂ = 0` over Z/2.
    pub fn d_squared_vanishes(&self) -> bool {
        let n = self.len();
        for i in 0..n {
            let mut acc = vec![false; n];
            for &j in &self.boundary[i] {
                for &k in &self.boundary[j] {
                    acc[k] = !acc[k];
                }
            }
            if acc.iter().any(|&b| b) {
                return false;
            }
        }
        true
    }

    /// Every nonzero entry strictly lowers the action.
    pub fn respects_filtration(&self) -> bool {
        self.boundary.iter().enumerate().all(|(i, col)| {
            col.iter().all(|&j| self.generators[j].action < self.generators[i].action)
        })
    }

    /// Every nonzero entry lowers the integer degree by one.
    pub fn lowers_degree(&self) -> bool {
        self.boundary.iter().enumerate().all(|(i, col)| {
            col.iter().all(|&j| self.generators[j].degree + 1 == self.generators[i].degree)
        })
    }

    /// Rank of `∂` over Z/2.
    pub fn boundary_rank(&self) -> usize {
        let n = self.len();
        let mut rows: Vec<Vec<bool>> = self
            .boundary
            .iter()
            .map(|col| {
                let mut r = vec![false; n];
                for &j in col {
                    r[j] = true;
                }
                r
            })
            .collect();
        let mut rank = 0;
        for c in 0..n {
            let Some(pivot) = (rank..rows.len()).find(|&r| rows[r][c]) else { continue };
            rows.swap(rank, pivot);
            for r in 0..rows.len() {
                if r != rank && rows[r][c] {
                    for k in 0..n {
                        rows[r][k] ^= rows[rank][k];
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    /// Total rank of homology over Z/2.
    pub fn homology_rank(&self) -> usize {
        self.len() - 2 * self.boundary_rank()
    }

    /// Text dump: one generator per line (`id q p action grading`), then the
    /// differential as `from to` pairs.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# generators: id q p action grading degree");
        for g in &self.generators {
            let _ = writeln!(out, "{} {:.12} {:.12} {:.12} {} {}", g.id, g.q, g.p, g.action, g.grading, g.degree);
        }
        let _ = writeln!(out, "# differential: from to");
        for (i, col) in self.boundary.iter().enumerate() {
            for j in col {
                let _ = writeln!(out, "{i} {j}");
            }
        }
        out
    }
}

/// Lifted tangent angles at the samples, continued from the curve's anchor.
pub fn tangent_angles(curve: &LagrangianCurve) -> Vec<f64> {
    let mut out = Vec::with_capacity(curve.points.len());
    let first = &curve.points[0];
    let mut prev = first.dp.atan2(first.dq);
    let mut acc = curve.anchor_angle + circ_diff(prev, curve.anchor_angle);
    out.push(acc);
    for p in &curve.points[1..] {
        let a = p.dp.atan2(p.dq);
        acc += circ_diff(a, prev);
        prev = a;
        out.push(acc);
    }
    out
}

fn angle_at(curve: &LagrangianCurve, angles: &[f64], point: &CurvePoint) -> f64 {
    let s = point.s - point.s.floor();
    let i = curve.points.partition_point(|p| p.s <= s).saturating_sub(1);
    let base = &curve.points[i];
    angles[i] + circ_diff(point.dp.atan2(point.dq), base.dp.atan2(base.dq))
}

fn degree(test: TestObject, alpha: f64) -> i32 {
    let theta = match test {
        TestObject::ZeroSection => 0.0,
        TestObject::Fiber(_) => -PI / 2.0,
    };
    ((theta - alpha) / PI).floor() as i32 + 1
}

/// Intersection points of the curve with the test object, in order of `s`.
pub fn intersections(curve: &LagrangianCurve, test: TestObject) -> Result<Vec<CurvePoint>> {
    let scale = median_abs(curve.points.iter().map(|p| p.dq.hypot(p.dp))).max(1e-300);
    match test {
        TestObject::ZeroSection => {
            let zs = zero_section_crossings(curve)?;
            if zs.iter().any(|z| z.degenerate) {
                return Err(Error::Precondition("curve meets the zero section non-transversally".into()));
            }
            zs.iter().map(|z| curve.eval(z.s)).collect()
        }
        TestObject::Fiber(q0) => {
            let n = curve.points.len();
            let mut out = Vec::new();
            for i in 0..n {
                let a = curve.cyclic(i);
                let b = curve.cyclic(i + 1);
                let (lo, hi) = (a.q.min(b.q), a.q.max(b.q));
                let mut k = ((lo - q0) / TAU).ceil();
                while q0 + k * TAU <= hi {
                    let target = q0 + k * TAU;
                    k += 1.0;
                    // half-open intervals avoid double counting at samples
                    if target == b.q {
                        continue;
                    }
                    let hq = Hermite::new(a.q, b.q, a.dq, b.dq, b.s - a.s);
                    let Some(u) = bracketed_root(|u| hq.eval(u) - target, 0.0, 1.0, 1e-15) else { continue };
                    let mut p = segment_interp(&a, &b, u);
                    for _ in 0..3 {
                        if p.dq.abs() < 1e-300 {
                            break;
                        }
                        let s = (p.s - (p.q - target) / p.dq).clamp(a.s, b.s);
                        p = curve.eval(s)?;
                        if (p.q - target).abs() < 1e-13 {
                            break;
                        }
                    }
                    if p.dq.abs() < 1e-6 * scale {
                        return Err(Error::Precondition(format!("fiber over q = {q0:.6} is tangent to the curve")));
                    }
                    p.s -= p.s.floor();
                    out.push(p);
                }
            }
            out.sort_by(|x, y| x.s.total_cmp(&y.s));
            Ok(out)
        }
    }
}

/// Builds the filtered complex of `(curve, test)`.
pub fn build_complex(curve: &LagrangianCurve, test: TestObject) -> Result<FilteredChainComplex> {
    if !curve.embedded {
        return Err(Error::Unsupported("bigon enumeration needs an embedded curve".into()));
    }
    let pts = intersections(curve, test)?;
    let angles = tangent_angles(curve);
    let generators: Vec<Generator> = pts
        .iter()
        .enumerate()
        .map(|(id, p)| {
            let grading = match test {
                TestObject::ZeroSection => (p.dp < 0.0) as u8,
                TestObject::Fiber(_) => (p.dq < 0.0) as u8,
            };
            let alpha = angle_at(curve, &angles, p);
            Generator {
                id,
                q: wrap(p.q),
                p: if matches!(test, TestObject::ZeroSection) { 0.0 } else { p.p },
                s: p.s,
                q_lift: p.q,
                action: p.h,
                grading,
                degree: degree(test, alpha),
                dq: p.dq,
                dp: p.dp,
            }
        })
        .collect();
    let n = generators.len();
    let mut boundary = vec![Vec::new(); n];
    let mut bigons = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            // arcs from i forward in s to j; the backward arcs are the forward
            // arcs of the reversed pair
            if let Some(b) = bigon_on_forward_arc(&generators, test, i, j) {
                let entry = &mut boundary[b.from];
                if let Some(pos) = entry.iter().position(|&k| k == b.to) {
                    entry.remove(pos);
                } else {
                    entry.push(b.to);
                }
                bigons.push(b);
            }
        }
    }
    for col in &mut boundary {
        col.sort_unstable();
    }
    Ok(FilteredChainComplex { test, generators, boundary, bigons })
}

/// Checks the loop formed by the curve arc from `i` forward to `j` and the
/// test arc back to `i`.
fn bigon_on_forward_arc(gens: &[Generator], test: TestObject, i: usize, j: usize) -> Option<Bigon> {
    let x = &gens[i];
    let y = &gens[j];
    let s_end = if y.s > x.s { y.s } else { y.s + 1.0 };
    let y_lift = if y.s > x.s { y.q_lift } else { y.q_lift + TAU };
    let d = y_lift - x.q_lift;
    // the return arc along the test object, as a direction and a span
    let (delta_dir, horizontal, lo, hi) = match test {
        TestObject::ZeroSection => {
            if d.abs() < 1e-12 || d.abs() >= TAU {
                return None;
            }
            ([-d.signum(), 0.0], true, x.q_lift.min(y_lift), x.q_lift.max(y_lift))
        }
        TestObject::Fiber(_) => {
            if (d / TAU).round() != 0.0 {
                return None;
            }
            ([0.0, (x.p - y.p).signum()], false, x.p.min(y.p), x.p.max(y.p))
        }
    };
    let on_delta = |z: &Generator| {
        if horizontal {
            let l = z.q_lift + ((lo - z.q_lift) / TAU).ceil() * TAU;
            l > lo + 1e-12 && l < hi - 1e-12
        } else {
            z.p > lo && z.p < hi
        }
    };
    for z in gens {
        if z.id == i || z.id == j {
            continue;
        }
        let zs = if z.s > x.s { z.s } else { z.s + 1.0 };
        if zs < s_end && on_delta(z) {
            return None;
        }
    }
    let sigma = (x.action - y.action).signum();
    if sigma == 0.0 {
        return None;
    }
    let cross = |a: [f64; 2], b: [f64; 2]| a[0] * b[1] - a[1] * b[0];
    let convex_y = cross([y.dq, y.dp], delta_dir) * sigma > 0.0;
    let convex_x = cross(delta_dir, [x.dq, x.dp]) * sigma > 0.0;
    if !(convex_x && convex_y) {
        return None;
    }
    let (from, to) = if sigma > 0.0 { (i, j) } else { (j, i) };
    Some(Bigon { from, to, forward: sigma > 0.0 })
}

/// Polygon of the loop for a bigon in the universal cover: densified curve
/// arc followed by the straight test arc (implicit closing edge).
fn bigon_polygon(curve: &LagrangianCurve, x: &Generator, y: &Generator, per_segment: usize) -> Result<Vec<(f64, f64)>> {
    let s_end = if y.s > x.s { y.s } else { y.s + 1.0 };
    let mut pts = Vec::new();
    let start = curve.eval(x.s)?;
    pts.push((start.q, start.p));
    let n = curve.points.len();
    let mut i = curve.points.partition_point(|p| p.s <= x.s);
    let mut prev = start;
    loop {
        let next = curve.cyclic(i);
        let last = next.s >= s_end;
        let target = if last { curve.eval(s_end)? } else { next };
        let mut a = prev;
        let mut b = target;
        let shift = ((a.q - b.q) / TAU).round() * TAU;
        b.q += shift;
        a.s = prev.s;
        for k in 1..=per_segment {
            let c = segment_interp(&a, &b, k as f64 / per_segment as f64);
            pts.push((c.q, c.p));
        }
        if last {
            break;
        }
        prev = b;
        i += 1;
        if i > 3 * n {
            break;
        }
    }
    // samples coinciding with a corner would give zero-length corner chords
    let end = pts[pts.len() - 1];
    let near = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).hypot(a.1 - b.1) < 1e-9;
    let mut cleaned: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for (k, &p) in pts.iter().enumerate() {
        let last = k + 1 == pts.len();
        if k > 0 && (cleaned.last().is_some_and(|&c| near(c, p)) || (!last && near(p, end))) {
            continue;
        }
        cleaned.push(p);
    }
    Ok(cleaned)
}

/// Brute-force bigon scan on explicit polygons: for every ordered pair and
/// curve arc, test simplicity in the annulus (against the `±2π` translates),
/// corner convexity from chord directions, and the closing condition.
pub fn brute_force_differential(curve: &LagrangianCurve, complex: &FilteredChainComplex) -> Result<Vec<Vec<usize>>> {
    let gens = &complex.generators;
    let n = gens.len();
    let mut boundary = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (x, y) = (&gens[i], &gens[j]);
            let poly = bigon_polygon(curve, x, y, 2)?;
            let (qx, px) = poly[0];
            let (qy, py) = poly[poly.len() - 1];
            let closes = match complex.test {
                TestObject::ZeroSection => (qy - qx).abs() > 1e-9 && (qy - qx).abs() < TAU,
                TestObject::Fiber(_) => (qy - qx).abs() < 1e-6,
            };
            if !closes || !polygon_is_simple(&poly) {
                continue;
            }
            let area = signed_area(&poly);
            let sigma = area.signum();
            let m = poly.len();
            let close_dir = (qx - qy, px - py);
            let in_y = (poly[m - 1].0 - poly[m - 2].0, poly[m - 1].1 - poly[m - 2].1);
            let out_x = (poly[1].0 - poly[0].0, poly[1].1 - poly[0].1);
            let cross = |a: (f64, f64), b: (f64, f64)| a.0 * b.1 - a.1 * b.0;
            if cross(in_y, close_dir) * sigma > 0.0 && cross(close_dir, out_x) * sigma > 0.0 {
                let (from, to) = if x.action > y.action { (i, j) } else { (j, i) };
                let entry = &mut boundary[from];
                if let Some(pos) = entry.iter().position(|&k| k == to) {
                    entry.remove(pos);
                } else {
                    entry.push(to);
                }
            }
        }
    }
    for col in &mut boundary {
        col.sort_unstable();
    }
    Ok(boundary)
}

/// Shoelace area in the `dq ∧ dp` orientation of a closed polygon.
pub fn signed_area(poly: &[(f64, f64)]) -> f64 {
    let m = poly.len();
    let mut a = 0.0;
    for k in 0..m {
        let (x0, y0) = poly[k];
        let (x1, y1) = poly[(k + 1) % m];
        a += x0 * y1 - x1 * y0;
    }
    0.5 * a
}

/// No two non-adjacent edges cross, and no edge crosses a `±2π` translate of
/// another, so the loop bounds an embedded disc in the annulus.
pub fn polygon_is_simple(poly: &[(f64, f64)]) -> bool {
    let m = poly.len();
    let edges: Vec<((f64, f64), (f64, f64))> = (0..m).map(|k| (poly[k], poly[(k + 1) % m])).collect();
    let mut order: Vec<(f64, f64, usize, f64)> = Vec::new();
    for shift in [-TAU, 0.0, TAU] {
        for (k, (a, b)) in edges.iter().enumerate() {
            order.push((a.0.min(b.0) + shift, a.0.max(b.0) + shift, k, shift));
        }
    }
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut active: Vec<(f64, f64, usize, f64)> = Vec::new();
    for cur in order {
        active.retain(|e| e.1 >= cur.0);
        for e in &active {
            let (i, j) = (cur.2, e.2);
            if cur.3 == e.3 {
                // same copy: skip the edge itself and its neighbours
                let gap = i.abs_diff(j);
                if gap <= 1 || gap == m - 1 {
                    continue;
                }
            }
            let (a, b) = edges[i];
            let (c, d) = edges[j];
            let sh = |p: (f64, f64), s: f64| (p.0 + s, p.1);
            if proper_intersection(sh(a, cur.3), sh(b, cur.3), sh(c, e.3), sh(d, e.3)) {
                return false;
            }
        }
        active.push(cur);
    }
    true
}

/// Largest `| area − (action(from) − action(to)) |` over the counted bigons,
/// with areas from shoelace quadrature of the densified loop.
pub fn check_energy_identity(complex: &FilteredChainComplex, curve: &LagrangianCurve) -> Result<f64> {
    let mut worst = 0.0f64;
    for b in &complex.bigons {
        let (x, y) =
            if b.forward { (&complex.generators[b.from], &complex.generators[b.to]) } else { (&complex.generators[b.to], &complex.generators[b.from]) };
        let poly = bigon_polygon(curve, x, y, 16)?;
        let area = signed_area(&poly).abs();
        let drop = complex.generators[b.from].action - complex.generators[b.to].action;
        worst = worst.max((area - drop).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{sample_curve, time_one_curve, CurveOptions, CurveSource};
    use crate::phase_space::{figure1, figure1_profile, BaseProfile, HamiltonianSpec, TimeProfile, FIGURE1_TWIST};
    use proptest::prelude::*;

    fn graph(eps: f64) -> LagrangianCurve {
        let h = HamiltonianSpec::base_lift(1, BaseProfile::fourier1(&[(1, eps)], &[]), TimeProfile::Constant);
        time_one_curve(&h, 256).unwrap()
    }

    fn fold_curve(g: BaseProfile, twist: f64) -> LagrangianCurve {
        sample_curve(CurveSource::Fold { g, twist }, 256, CurveOptions::default()).unwrap()
    }

    #[test]
    fn morse_graph_complex() {
        let c = build_complex(&graph(0.1), TestObject::ZeroSection).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.boundary.iter().all(|b| b.is_empty()));
        assert_eq!(c.homology_rank(), 2);
        let mut degrees: Vec<i32> = c.generators.iter().map(|g| g.degree).collect();
        degrees.sort();
        assert_eq!(degrees, vec![0, 1]);
        // the degree-1 generator is the maximum of h = −f
        let top = c.generators.iter().find(|g| g.degree == 1).unwrap();
        assert!((top.action - 0.1).abs() < 1e-9);
        let f = build_complex(&graph(0.1), TestObject::Fiber(1.0)).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f.homology_rank(), 1);
        assert_eq!(f.generators[0].degree, 0);
        assert!(brute_force_differential(&graph(0.1), &c).unwrap().iter().all(|b| b.is_empty()));
    }

    #[test]
    fn figure1_differential() {
        let curve = time_one_curve(&figure1(), 256).unwrap();
        let c = build_complex(&curve, TestObject::ZeroSection).unwrap();
        assert_eq!(c.len(), 4);
        let top: Vec<usize> = c.generators.iter().filter(|g| g.degree == 1).map(|g| g.id).collect();
        let mut bottom: Vec<usize> = c.generators.iter().filter(|g| g.degree == 0).map(|g| g.id).collect();
        bottom.sort();
        assert_eq!(top.len(), 2);
        for t in top {
            assert_eq!(c.boundary[t], bottom);
        }
        for &b in &bottom {
            assert!(c.boundary[b].is_empty());
        }
        assert!(c.d_squared_vanishes() && c.respects_filtration() && c.lowers_degree());
        assert_eq!(c.homology_rank(), 2);
        assert_eq!(brute_force_differential(&curve, &c).unwrap(), c.boundary);
        let scale = curve.action_scale();
        let residual = check_energy_identity(&c, &curve).unwrap();
        assert!(residual <= 1e-4 * scale, "{residual}");
        for g in &c.generators {
            assert_eq!(g.grading as i32, g.degree.rem_euclid(2));
        }
    }

    #[test]
    fn fiber_complexes_over_the_fold() {
        let curve = fold_curve(figure1_profile(), FIGURE1_TWIST);
        for k in 0..64 {
            let q = TAU * (k as f64 + 0.5) / 64.0;
            let c = build_complex(&curve, TestObject::Fiber(q)).unwrap();
            assert_eq!(c.len() % 2, 1);
            assert!(c.d_squared_vanishes() && c.respects_filtration() && c.lowers_degree());
            assert_eq!(c.homology_rank(), 1);
            assert_eq!(brute_force_differential(&curve, &c).unwrap(), c.boundary);
            assert!(check_energy_identity(&c, &curve).unwrap() < 1e-6);
        }
    }

    #[test]
    fn polygon_helpers() {
        let sq = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        assert_eq!(signed_area(&sq), 1.0);
        assert!(polygon_is_simple(&sq));
        let bow = [(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)];
        assert!(!polygon_is_simple(&bow));
        // a loop wider than a turn overlaps its own translate
        let wide = [(0.0, 0.0), (7.0, 0.5), (7.0, 1.0), (0.0, 1.0)];
        assert!(!polygon_is_simple(&wide));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn random_folds_give_valid_complexes(
            a1 in 0.05f64..0.4, a2 in 0.05f64..0.4, b1 in -0.1f64..0.1, phase in 0.0f64..1.0, twist in -1.2f64..-0.3,
        ) {
            let g = BaseProfile::fourier1(&[(1, a1), (2, a2 * phase.cos())], &[(1, b1), (2, a2 * phase.sin())]);
            let curve = fold_curve(g, twist);
            prop_assume!(curve.embedded);
            let Ok(c) = build_complex(&curve, TestObject::ZeroSection) else { return Ok(()) };
            prop_assert!(c.d_squared_vanishes());
            prop_assert!(c.respects_filtration());
            prop_assert_eq!(c.homology_rank(), 2);
            if c.len() <= 12 {
                prop_assert_eq!(brute_force_differential(&curve, &c).unwrap(), c.boundary.clone());
            }
            let res = check_energy_identity(&c, &curve).unwrap();
            prop_assert!(res <= 1e-4 * curve.action_scale(), "{}", res);
        }
    }
}
