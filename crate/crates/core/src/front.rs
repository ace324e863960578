//! Wave-front decomposition of a time-one curve over the base circle.
//!
//! The curve is cut at its caustics (zeros of `dQ/ds`) into branches on which
//! `Q` is strictly monotone; each branch is then a single-valued section
//! `q ↦ (p_b(q), h_b(q))` of the multivalued generating function.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::flow::{segment_interp, CurvePoint, LagrangianCurve};
use crate::math::{bracketed_root, circ_diff, median_abs, wrap, Hermite, TAU};

/// How a branch ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum EndKind {
    Caustic,
    Wraparound,
}

/// A maximal arc of the curve on which `Q` is strictly monotone.
#[derive(Debug, Clone)]
pub struct Branch {
    pub id: usize,
    /// Curve points along the arc, caustic endpoints included; `s` and the
    /// `Q` lift increase continuously (possibly past 1 and 2π).
    pub nodes: Vec<CurvePoint>,
    /// Sign of `dQ/ds` on the arc.
    pub orientation: i8,
    pub start_kind: EndKind,
    pub end_kind: EndKind,
}

impl Branch {
    /// Lifted base interval `[lo, hi]` covered by the branch.
    pub fn base_range(&self) -> (f64, f64) {
        let a = self.nodes[0].q;
        let b = self.nodes[self.nodes.len() - 1].q;
        (a.min(b), a.max(b))
    }

    pub fn s_range(&self) -> (f64, f64) {
        (self.nodes[0].s, self.nodes[self.nodes.len() - 1].s)
    }

    /// All lifts `q + 2πk` inside the branch's base range.
    pub fn lifts(&self, q: f64) -> Vec<f64> {
        let (lo, hi) = self.base_range();
        let mut out = Vec::new();
        let mut k = ((lo - q) / TAU).ceil();
        while q + k * TAU <= hi {
            out.push(q + k * TAU);
            k += 1.0;
        }
        out
    }

    /// Interpolated curve point(s) over the base point `q`, one per lift.
    pub fn locate(&self, q: f64) -> Vec<CurvePoint> {
        self.lifts(q).into_iter().filter_map(|ql| self.locate_lifted(ql)).collect()
    }

    /// Interpolated point with lifted coordinate `ql`.
    pub fn locate_lifted(&self, ql: f64) -> Option<CurvePoint> {
        let n = self.nodes.len();
        let key = |i: usize| self.orientation as f64 * self.nodes[i].q;
        let target = self.orientation as f64 * ql;
        if target < key(0) || target > key(n - 1) {
            return None;
        }
        // nodes are monotone in `key`
        let mut lo = 0;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if key(mid) <= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let a = &self.nodes[lo];
        let b = &self.nodes[hi];
        let hq = Hermite::new(a.q, b.q, a.dq, b.dq, b.s - a.s);
        let u = bracketed_root(|u| hq.eval(u) - ql, 0.0, 1.0, 1e-15)?;
        Some(segment_interp(a, b, u))
    }

    /// Height `h_b(q)` of the first lift over `q`.
    pub fn height(&self, q: f64) -> Option<f64> {
        self.locate(q).first().map(|p| p.h)
    }

    /// Whether a base point lies strictly inside the branch's range.
    pub fn covers(&self, q: f64) -> bool {
        let (lo, hi) = self.base_range();
        self.lifts(q).iter().any(|&l| l > lo && l < hi)
    }
}

/// A fold point of the front, joining two branches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Caustic {
    pub s: f64,
    pub q: f64,
    pub p: f64,
    pub h: f64,
    /// (branch ending here, branch starting here)
    pub branches: (usize, usize),
}

/// Transverse self-crossing of the front: two branches at equal height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxwellCrossing {
    pub q: f64,
    pub branches: (usize, usize),
    pub height: f64,
    /// Momenta of the two branches at the crossing.
    pub momenta: (f64, f64),
}

/// Intersection of the curve with the zero section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroCrossing {
    pub s: f64,
    pub q: f64,
    pub branch: usize,
    pub action: f64,
    /// Curve derivatives at the crossing.
    pub dq: f64,
    pub dp: f64,
    /// Tangential (or non-isolated) intersection.
    pub degenerate: bool,
}

/// Decomposition of a time-one curve.
#[derive(Debug, Clone)]
pub struct WaveFront {
    pub branches: Vec<Branch>,
    pub caustics: Vec<Caustic>,
    pub maxwell_crossings: Vec<MaxwellCrossing>,
    pub zero_crossings: Vec<ZeroCrossing>,
    /// Base points where three or more branches meet at one height.
    pub non_generic: Vec<f64>,
    /// Geometric tolerance: ten times the largest sample gap in the plane.
    pub geometric_tol: f64,
    /// Spread of action values on the curve.
    pub action_scale: f64,
}

impl WaveFront {
    /// Number of branch lifts over a base point.
    pub fn branch_count(&self, q: f64) -> usize {
        self.branches.iter().map(|b| b.locate(q).len()).sum()
    }

    /// All `(branch id, point)` pairs over a base point.
    pub fn sheets(&self, q: f64) -> Vec<(usize, CurvePoint)> {
        let mut out = Vec::new();
        for b in &self.branches {
            for p in b.locate(q) {
                out.push((b.id, p));
            }
        }
        out
    }

    pub fn has_degenerate_crossing(&self) -> bool {
        self.zero_crossings.iter().any(|z| z.degenerate)
    }
}

/// Splits a refined curve into branches and locates caustics, Maxwell
/// crossings and zero-section crossings.
pub fn decompose_front(curve: &LagrangianCurve) -> Result<WaveFront> {
    let n = curve.points.len();
    if n < 8 {
        return Err(Error::Precondition("curve has too few samples".into()));
    }
    // caustics: sign changes of dQ/ds, polished through the curve source
    let mut caustic_pts: Vec<CurvePoint> = Vec::new();
    for i in 0..n {
        let a = curve.cyclic(i);
        let b = curve.cyclic(i + 1);
        if a.dq == 0.0 || a.dq.signum() != b.dq.signum() {
            if a.dq == 0.0 && i > 0 && curve.cyclic(i - 1).dq.signum() == b.dq.signum() {
                continue;
            }
            let root = polish(curve, a.s, b.s, |p| p.dq).ok_or_else(|| {
                Error::Resolution(format!("fold between s = {:.6} and {:.6} not bracketed", a.s, b.s))
            })?;
            caustic_pts.push(root);
        }
    }
    if caustic_pts.len() % 2 == 1 {
        return Err(Error::Resolution("odd number of folds on a closed curve".into()));
    }
    let branches = build_branches(curve, &caustic_pts)?;
    let mut caustics = Vec::new();
    let m = branches.len();
    if !caustic_pts.is_empty() {
        for (k, c) in caustic_pts.iter().enumerate() {
            // branch k starts at caustic k, so caustic k joins branches k-1 and k
            caustics.push(Caustic { s: c.s, q: wrap(c.q), p: c.p, h: c.h, branches: ((k + m - 1) % m, k) });
        }
    }
    let mut gap = 0.0f64;
    for i in 0..n {
        let a = curve.cyclic(i);
        let b = curve.cyclic(i + 1);
        gap = gap.max((b.q - a.q).hypot(b.p - a.p));
    }
    let action_scale = curve.action_scale();
    let mut front = WaveFront {
        branches,
        caustics,
        maxwell_crossings: Vec::new(),
        zero_crossings: Vec::new(),
        non_generic: Vec::new(),
        geometric_tol: 10.0 * gap,
        action_scale,
    };
    front.zero_crossings = zero_crossings(curve, Some(&front))?;
    let (maxwell, ties) = maxwell_crossings(curve, &front);
    front.maxwell_crossings = maxwell;
    front.non_generic = ties;
    Ok(front)
}

/// Root of `field` on the curve between parameters `a < b`, evaluated through
/// the curve source.
fn polish<F>(curve: &LagrangianCurve, a: f64, b: f64, field: F) -> Option<CurvePoint>
where
    F: Fn(&CurvePoint) -> f64,
{
    let mut failed = false;
    let s = bracketed_root(
        |s| match curve.eval(s) {
            Ok(p) => field(&p),
            Err(_) => {
                failed = true;
                f64::NAN
            }
        },
        a,
        b,
        1e-14,
    )?;
    if failed {
        return None;
    }
    curve.eval(s).ok()
}

fn build_branches(curve: &LagrangianCurve, caustics: &[CurvePoint]) -> Result<Vec<Branch>> {
    let n = curve.points.len();
    if caustics.is_empty() {
        let mut nodes: Vec<CurvePoint> = (0..=n).map(|i| curve.cyclic(i)).collect();
        nodes.dedup_by(|x, y| (x.s - y.s).abs() < 1e-15);
        let orientation = if nodes[0].dq > 0.0 { 1 } else { -1 };
        let b = Branch { id: 0, nodes, orientation, start_kind: EndKind::Wraparound, end_kind: EndKind::Wraparound };
        check_monotone(&b)?;
        return Ok(vec![b]);
    }
    let m = caustics.len();
    let mut branches = Vec::with_capacity(m);
    for k in 0..m {
        let start = caustics[k];
        let mut end = caustics[(k + 1) % m];
        if k + 1 == m {
            end.s += 1.0;
            end.q += TAU;
        }
        let first = curve.points.partition_point(|p| p.s <= start.s);
        let mut nodes = vec![start];
        let mut i = first;
        loop {
            let p = curve.cyclic(i);
            if p.s >= end.s {
                break;
            }
            nodes.push(p);
            i += 1;
        }
        // keep lifts continuous with the caustic that opens the branch
        let shift = ((start.q - nodes[0].q) / TAU).round() * TAU;
        for node in nodes.iter_mut().skip(1) {
            node.q += shift;
        }
        let lift = ((nodes[nodes.len() - 1].q - end.q) / TAU).round() * TAU;
        end.q += lift;
        nodes.push(end);
        // drop interior samples sitting on top of a caustic
        let len = nodes.len();
        let mut cleaned = Vec::with_capacity(len);
        for (j, p) in nodes.into_iter().enumerate() {
            if j > 0 && j + 1 < len && (p.s - start.s < 1e-12 || end.s - p.s < 1e-12) {
                continue;
            }
            cleaned.push(p);
        }
        let mid = cleaned[cleaned.len() / 2];
        let probe = if cleaned.len() > 2 { mid.dq } else { cleaned[0].dq + cleaned[1].dq };
        let orientation = if probe > 0.0 { 1 } else { -1 };
        let b = Branch { id: k, nodes: cleaned, orientation, start_kind: EndKind::Caustic, end_kind: EndKind::Caustic };
        check_monotone(&b)?;
        branches.push(b);
    }
    Ok(branches)
}

fn check_monotone(b: &Branch) -> Result<()> {
    for w in b.nodes.windows(2) {
        if (w[1].q - w[0].q) * b.orientation as f64 <= 0.0 && (w[1].q - w[0].q).abs() > 1e-12 {
            return Err(Error::Resolution(format!(
                "branch {} is not monotone near s = {:.6}; refine the curve",
                b.id, w[0].s
            )));
        }
    }
    Ok(())
}

fn branch_of(front: &WaveFront, s: f64) -> usize {
    for b in &front.branches {
        let (a, e) = b.s_range();
        for shift in [0.0, 1.0, -1.0] {
            if s + shift >= a && s + shift <= e {
                return b.id;
            }
        }
    }
    0
}

/// Intersections with the zero section without a branch decomposition
/// (branch ids are reported as 0).
pub fn zero_section_crossings(curve: &LagrangianCurve) -> Result<Vec<ZeroCrossing>> {
    zero_crossings(curve, None)
}

fn zero_crossings(curve: &LagrangianCurve, front: Option<&WaveFront>) -> Result<Vec<ZeroCrossing>> {
    let branch_at = |s: f64| front.map_or(0, |f| branch_of(f, s));
    let n = curve.points.len();
    let scale = median_abs(curve.points.iter().map(|p| p.dq.hypot(p.dp))).max(1e-300);
    let p_floor = 1e-12 * (1.0 + curve.max_abs_p());
    let sign = |p: &CurvePoint| -> i8 {
        if p.p.abs() <= p_floor {
            0
        } else if p.p > 0.0 {
            1
        } else {
            -1
        }
    };
    let signs: Vec<i8> = curve.points.iter().map(sign).collect();
    let mut out = Vec::new();
    if signs.iter().all(|&s| s == 0) {
        let p = curve.points[0];
        out.push(ZeroCrossing { s: p.s, q: wrap(p.q), branch: 0, action: p.h, dq: p.dq, dp: p.dp, degenerate: true });
        return Ok(out);
    }
    let start = signs.iter().position(|&s| s != 0).expect("some nonzero sign");
    let mut i = start;
    let end = start + n;
    while i < end {
        let a = curve.cyclic(i);
        let sa = signs[i % n];
        // walk over a run of zero samples
        let mut j = i + 1;
        while signs[j % n] == 0 {
            j += 1;
        }
        let b = curve.cyclic(j);
        let sb = signs[j % n];
        let single_transverse = j == i + 2 && sa != sb;
        if j > i + 1 && !single_transverse {
            // tangency or non-isolated contact with the zero section
            let mid = curve.cyclic((i + j) / 2);
            out.push(ZeroCrossing {
                s: mid.s % 1.0,
                q: wrap(mid.q),
                branch: branch_at(mid.s % 1.0),
                action: mid.h,
                dq: mid.dq,
                dp: mid.dp,
                degenerate: true,
            });
        } else if sa != sb {
            let r = polish(curve, a.s, b.s, |p| p.p)
                .ok_or_else(|| Error::Resolution("zero-section crossing not bracketed".into()))?;
            let s = r.s - r.s.floor();
            let degenerate = r.dp.abs() < 1e-12 * scale;
            out.push(ZeroCrossing {
                s,
                q: wrap(r.q),
                branch: branch_at(s),
                action: r.h,
                dq: r.dq,
                dp: r.dp,
                degenerate,
            });
        }
        i = j;
    }
    out.sort_by(|x, y| x.s.total_cmp(&y.s));
    Ok(out)
}

/// Exact point on branch `b` over lifted `ql` by Newton on the curve source.
fn exact_on_branch(curve: &LagrangianCurve, b: &Branch, ql: f64) -> Option<CurvePoint> {
    let mut p = b.locate_lifted(ql)?;
    let (lo, hi) = b.s_range();
    for _ in 0..6 {
        if p.dq.abs() < 1e-300 {
            break;
        }
        let s = (p.s - (p.q - ql) / p.dq).clamp(lo, hi);
        let next = curve.eval(s).ok()?;
        let done = (next.q - ql).abs() < 1e-14 * (1.0 + ql.abs());
        p = next;
        if done {
            break;
        }
    }
    Some(p)
}

fn maxwell_crossings(curve: &LagrangianCurve, front: &WaveFront) -> (Vec<MaxwellCrossing>, Vec<f64>) {
    let mut out: Vec<MaxwellCrossing> = Vec::new();
    let bs = &front.branches;
    for ia in 0..bs.len() {
        // a branch longer than a turn overlaps its own translate
        for ib in ia..bs.len() {
            let (a, b) = (&bs[ia], &bs[ib]);
            let (a0, a1) = a.base_range();
            let (b0, b1) = b.base_range();
            let kmin = ((a0 - b1) / TAU).floor() as i64;
            let kmax = ((a1 - b0) / TAU).ceil() as i64;
            for k in kmin..=kmax {
                if ia == ib && k <= 0 {
                    continue;
                }
                let shift = k as f64 * TAU;
                let lo = a0.max(b0 + shift);
                let hi = a1.min(b1 + shift);
                if hi - lo < 1e-12 {
                    continue;
                }
                let diff = |q: f64| -> Option<f64> {
                    Some(a.locate_lifted(q)?.h - b.locate_lifted(q - shift)?.h)
                };
                let samples = 400;
                let margin = 1e-9 * (hi - lo);
                let mut prev: Option<(f64, f64)> = None;
                for j in 0..=samples {
                    let q = lo + margin + (hi - lo - 2.0 * margin) * j as f64 / samples as f64;
                    let Some(d) = diff(q) else { continue };
                    if let Some((qp, dp)) = prev {
                        if dp.signum() != d.signum() && dp != 0.0 {
                            if let Some(c) = refine_maxwell(curve, a, b, shift, qp, q) {
                                // two sheets touching at their common cusp do not cross
                                let at_cusp = front.caustics.iter().any(|k| {
                                    (k.branches == (a.id, b.id) || k.branches == (b.id, a.id))
                                        && circ_diff(k.q, c.q).abs() < 1e-8
                                });
                                if !at_cusp {
                                    out.push(c);
                                }
                            }
                        }
                    }
                    prev = Some((q, d));
                }
            }
        }
    }
    out.sort_by(|x, y| x.q.total_cmp(&y.q));
    let mut ties = Vec::new();
    // polished heights agree to round-off; anything wider is a resolved gap
    let tol = 1e-10 * front.action_scale;
    for c in &out {
        let at = front.sheets(c.q);
        let same = at.iter().filter(|(_, p)| (p.h - c.height).abs() <= tol).count();
        if same >= 3 {
            ties.push(c.q);
        }
    }
    (out, ties)
}

fn refine_maxwell(
    curve: &LagrangianCurve,
    a: &Branch,
    b: &Branch,
    shift: f64,
    q0: f64,
    q1: f64,
) -> Option<MaxwellCrossing> {
    let interp = bracketed_root(
        |q| match (a.locate_lifted(q), b.locate_lifted(q - shift)) {
            (Some(x), Some(y)) => x.h - y.h,
            _ => f64::NAN,
        },
        q0,
        q1,
        1e-13,
    )?;
    // Newton on the exact difference, slope p_a − p_b
    let mut q = interp;
    let mut pa = exact_on_branch(curve, a, q)?;
    let mut pb = exact_on_branch(curve, b, q - shift)?;
    for _ in 0..4 {
        let slope = pa.p - pb.p;
        if slope.abs() < 1e-12 {
            break;
        }
        let step = (pa.h - pb.h) / slope;
        q -= step;
        pa = exact_on_branch(curve, a, q)?;
        pb = exact_on_branch(curve, b, q - shift)?;
        if step.abs() < 1e-14 {
            break;
        }
    }
    Some(MaxwellCrossing { q: wrap(q), branches: (a.id, b.id), height: 0.5 * (pa.h + pb.h), momenta: (pa.p, pb.p) })
}

/// A spectrum value with the crossings that realise it.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumValue {
    pub value: f64,
    pub multiplicity: usize,
    pub crossings: Vec<usize>,
    /// Distinct crossings closer than the merge tolerance.
    pub merged: bool,
}

/// Sorted action values at zero-section crossings.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpectrum {
    pub values: Vec<SpectrumValue>,
    /// Some crossing is tangential or non-isolated.
    pub degenerate: bool,
}

impl ActionSpectrum {
    /// Distance from `x` to the nearest spectrum value.
    pub fn distance(&self, x: f64) -> f64 {
        self.values.iter().map(|v| (v.value - x).abs()).fold(f64::INFINITY, f64::min)
    }

    pub fn levels(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.value).collect()
    }
}

/// Action values at the zero crossings, merging values closer than
/// `merge_tol` (merges are flagged).
pub fn action_spectrum(front: &WaveFront, merge_tol: f64) -> ActionSpectrum {
    let mut idx: Vec<usize> = (0..front.zero_crossings.len()).collect();
    idx.sort_by(|&a, &b| front.zero_crossings[a].action.total_cmp(&front.zero_crossings[b].action));
    let mut values: Vec<SpectrumValue> = Vec::new();
    for i in idx {
        let a = front.zero_crossings[i].action;
        if let Some(last) = values.last_mut() {
            if (a - last.value).abs() <= merge_tol {
                last.multiplicity += 1;
                last.crossings.push(i);
                last.merged = true;
                continue;
            }
        }
        values.push(SpectrumValue { value: a, multiplicity: 1, crossings: vec![i], merged: false });
    }
    ActionSpectrum { values, degenerate: front.has_degenerate_crossing() }
}

/// Symmetric Hausdorff distance between the curve and the zero section in
/// the flat product metric.
pub fn hausdorff_to_zero_section(curve: &LagrangianCurve) -> f64 {
    let n = curve.points.len();
    let mut dense = Vec::with_capacity(4 * n);
    for i in 0..n {
        let a = curve.cyclic(i);
        let b = curve.cyclic(i + 1);
        for k in 0..4 {
            dense.push(segment_interp(&a, &b, k as f64 / 4.0));
        }
    }
    let from_curve = dense.iter().fold(0.0f64, |m, p| m.max(p.p.abs()));
    let grid = 1024;
    let mut from_zero = 0.0f64;
    for g in 0..grid {
        let q = TAU * g as f64 / grid as f64;
        let d = dense
            .iter()
            .map(|p| crate::math::circ_diff(p.q, q).hypot(p.p))
            .fold(f64::INFINITY, f64::min);
        from_zero = from_zero.max(d);
    }
    from_curve.max(from_zero)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{sample_curve, time_one_curve, CurveOptions, CurveSource};
    use crate::phase_space::{figure1, figure1_profile, BaseProfile, HamiltonianSpec, TimeProfile, FIGURE1_TWIST};

    fn fold(g: BaseProfile, twist: f64) -> LagrangianCurve {
        sample_curve(CurveSource::Fold { g, twist }, 256, CurveOptions::default()).unwrap()
    }

    #[test]
    fn graph_has_one_branch() {
        let eps = 0.3;
        let h = HamiltonianSpec::base_lift(1, BaseProfile::fourier1(&[(1, eps)], &[]), TimeProfile::Constant);
        let front = decompose_front(&time_one_curve(&h, 256).unwrap()).unwrap();
        assert_eq!(front.branches.len(), 1);
        assert!(front.caustics.is_empty() && front.maxwell_crossings.is_empty());
        assert_eq!(front.zero_crossings.len(), 2);
        let spec = action_spectrum(&front, 1e-9);
        // H = ε cos q: Spec = {−f(q_min), −f(q_max)} = {ε, −ε}
        let levels = spec.levels();
        assert!((levels[0] + eps).abs() < 1e-12 && (levels[1] - eps).abs() < 1e-12);
        for q in [0.1, 2.0, 5.0] {
            let h = front.branches[0].height(q).unwrap();
            assert!((h + eps * q.cos()).abs() < 1e-7);
            assert_eq!(front.branch_count(q), 1);
        }
    }

    #[test]
    fn constant_hamiltonian_spectrum() {
        let h = HamiltonianSpec::time_constant(1, 2.0, TimeProfile::Smoothstep);
        let front = decompose_front(&time_one_curve(&h, 256).unwrap()).unwrap();
        let s = action_spectrum(&front, 1e-9);
        assert_eq!(s.values.len(), 1);
        assert!(s.degenerate);
        assert!((s.values[0].value + 2.0).abs() < 1e-4);
    }

    #[test]
    fn figure1_front_structure() {
        let curve = time_one_curve(&figure1(), 256).unwrap();
        let front = decompose_front(&curve).unwrap();
        assert_eq!(front.caustics.len(), 2);
        assert_eq!(front.branches.len(), 2);
        assert_eq!(front.maxwell_crossings.len(), 1);
        assert_eq!(front.zero_crossings.len(), 4);
        assert!(front.non_generic.is_empty());
        assert!(!front.has_degenerate_crossing());
        for q in [0.5, 3.0, 4.5] {
            assert_eq!(front.branch_count(q) % 2, 1);
        }
        let c = &front.maxwell_crossings[0];
        let heights: Vec<f64> = front.sheets(c.q).iter().map(|(_, p)| p.h).collect();
        assert!(heights.iter().filter(|h| (**h - c.height).abs() < 1e-6).count() == 2, "{heights:?}");
    }

    #[test]
    fn flowed_and_closed_form_fronts_agree() {
        let flowed = decompose_front(&time_one_curve(&figure1(), 256).unwrap()).unwrap();
        let exact = decompose_front(&fold(figure1_profile(), FIGURE1_TWIST)).unwrap();
        for (a, b) in flowed.caustics.iter().zip(&exact.caustics) {
            assert!((a.q - b.q).abs() < 1e-5 && (a.h - b.h).abs() < 1e-5);
        }
        for (a, b) in flowed.zero_crossings.iter().zip(&exact.zero_crossings) {
            assert!((a.q - b.q).abs() < 1e-5 && (a.action - b.action).abs() < 1e-5);
        }
        let (a, b) = (flowed.maxwell_crossings[0], exact.maxwell_crossings[0]);
        assert!((a.q - b.q).abs() < 1e-5 && (a.height - b.height).abs() < 1e-5);
    }

    #[test]
    fn branches_satisfy_dh_equals_p() {
        let front = decompose_front(&fold(figure1_profile(), FIGURE1_TWIST)).unwrap();
        for b in &front.branches {
            let (lo, hi) = b.base_range();
            for k in 1..50 {
                let q = lo + (hi - lo) * k as f64 / 50.0;
                let e = 1e-6;
                let (Some(x), Some(xp), Some(xm)) = (b.locate_lifted(q), b.locate_lifted(q + e), b.locate_lifted(q - e))
                else {
                    continue;
                };
                let fd = (xp.h - xm.h) / (2.0 * e);
                assert!((fd - x.p).abs() < 1e-4, "{fd} {}", x.p);
            }
        }
        // heights agree at shared caustics
        for c in &front.caustics {
            let end = front.branches[c.branches.0].nodes.last().unwrap();
            let start = front.branches[c.branches.1].nodes[0];
            assert!((end.h - start.h).abs() < 1e-12);
        }
    }

    /// Three folds: caustic count against a brute-force scan of Q' on a fine grid.
    #[test]
    fn tiny_swallowtail_is_generic() {
        // cusps 5e-5 apart; the middle sheet sits 7e-7 below the crossing
        let g = BaseProfile::fourier1(
            &[(1, 0.3958365329346938), (2, 0.15083967487691557)],
            &[(1, -0.07925339416919847), (2, 0.27416259242495766)],
        );
        let front = decompose_front(&fold(g, -1.0443516018526584)).unwrap();
        assert_eq!(front.caustics.len(), 4);
        assert!(front.non_generic.is_empty(), "{:?}", front.non_generic);
        for c in &front.maxwell_crossings {
            assert!((c.momenta.0 - c.momenta.1).abs() > 1e-3, "{c:?}");
        }
        assert_eq!(front.maxwell_crossings.len(), 2);
    }

    #[test]
    fn triple_fold_matches_sign_scan() {
        let g = BaseProfile::fourier1(&[(3, 0.25)], &[(1, 0.02), (2, 0.03)]);
        let src = CurveSource::Fold { g: g.clone(), twist: -1.0 };
        let front = decompose_front(&fold(g, -1.0)).unwrap();
        let m = 20000;
        let mut changes = 0;
        let mut prev = src.eval(0.0).unwrap().dq;
        for i in 1..=m {
            let d = src.eval(i as f64 / m as f64 % 1.0).unwrap().dq;
            if d.signum() != prev.signum() {
                changes += 1;
            }
            prev = d;
        }
        assert_eq!(front.caustics.len(), changes);
        assert_eq!(front.caustics.len(), 6);
    }

    #[test]
    fn hausdorff_examples() {
        assert!(hausdorff_to_zero_section(&time_one_curve(&HamiltonianSpec::zero(1), 256).unwrap()) < 1e-12);
        let eps = 0.4;
        let h = HamiltonianSpec::base_lift(1, BaseProfile::fourier1(&[(1, eps)], &[]), TimeProfile::Constant);
        let d = hausdorff_to_zero_section(&time_one_curve(&h, 256).unwrap());
        assert!((d - eps).abs() < 1e-4, "{d}");
        let f1 = figure1();
        let d = hausdorff_to_zero_section(&time_one_curve(&f1, 256).unwrap());
        let osc = crate::flow::osc_c0(&f1, 256).unwrap();
        assert!(d > 0.0 && d <= osc + 1e-9, "{d} {osc}");
    }
}
