//! Selectors over two-dimensional bases, their singular strata, the jump
//! covectors across the codimension-one stratum and the mod-2 cliff-wall
//! cycle assembled from selector faces, cliff strips and fiber simplices.
//!
//! Sheets are tracked exactly: a flowed sheet is identified by its preimage
//! `ξ` on the zero section and continued by Newton on `Q(ξ) = x`, a
//! synthetic sheet by the index of its affine piece.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::Cell;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::flow::propagate;
use crate::math::{bracketed_root, circ_diff, par_map, wrap, TAU};
use crate::phase_space::{BaseProfile, HamiltonianSpec, Mode, Support};
use crate::report::{Check, Report};

/// Two node sheets are the same when each predicts the other's preimage
/// to within this distance by linearisation; misses up to 1 are settled by
/// exact continuation.
pub const SAME_SHEET_TOL: f64 = 0.02;
/// Fourth-sheet height gap below which a triple point is a quadruple point.
pub const QUADRUPLE_TOL: f64 = 1e-6;
const NEWTON_TOL: f64 = 1e-11;
const DEFAULT_FOLD_STEPS: usize = 128;
/// `(cos q, sin 2q)` amplitudes of the two factors of the product scenario.
const PRODUCT_FOLDS: [(f64, f64); 2] = [(1.3, 0.15), (1.2, -0.1)];

type V2 = [f64; 2];
type M2 = [[f64; 2]; 2];

fn sub(a: V2, b: V2) -> V2 {
    [a[0] - b[0], a[1] - b[1]]
}
fn add(a: V2, b: V2) -> V2 {
    [a[0] + b[0], a[1] + b[1]]
}
fn scale(a: V2, s: f64) -> V2 {
    [a[0] * s, a[1] * s]
}
fn dot(a: V2, b: V2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}
fn det(a: V2, b: V2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}
fn norm(a: V2) -> f64 {
    dot(a, a).sqrt()
}
fn mat_vec(m: &M2, v: V2) -> V2 {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}
fn inv2(m: &M2) -> Option<M2> {
    let d = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let s = m[0][0].abs().max(m[0][1].abs()).max(m[1][0].abs()).max(m[1][1].abs());
    if d.is_nan() || d.abs() <= 1e-14 * s * s {
        return None;
    }
    Some([[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]])
}
fn circ2(a: V2, b: V2) -> V2 {
    [circ_diff(a[0], b[0]), circ_diff(a[1], b[1])]
}

/// `a·x + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Plane {
    pub a: V2,
    pub b: f64,
}

impl Plane {
    pub fn eval(&self, x: V2) -> f64 {
        dot(self.a, x) + self.b
    }
}

/// Upper or lower envelope of finitely many affine functions on a patch.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AffineArrangement {
    pub planes: Vec<Plane>,
    pub upper: bool,
}

impl AffineArrangement {
    /// Lower envelope of three planes with pairwise independent slopes, all
    /// equal at `at`.
    pub fn min_of_three(at: V2) -> Self {
        let slopes = [[1.0, 0.15], [-0.55, 0.8], [-0.35, -0.95]];
        let planes = slopes.iter().map(|&a| Plane { a, b: -dot(a, at) }).collect();
        Self { planes, upper: false }
    }

    /// `slope · |x₁ − c|` written as the maximum of two planes.
    pub fn abs_fold(c: f64, slope: f64) -> Self {
        let planes = vec![Plane { a: [slope, 0.0], b: -slope * c }, Plane { a: [-slope, 0.0], b: slope * c }];
        Self { planes, upper: true }
    }

    fn select(&self, x: V2) -> usize {
        let mut best = 0;
        for (i, p) in self.planes.iter().enumerate() {
            let v = p.eval(x);
            let b = self.planes[best].eval(x);
            if (self.upper && v > b) || (!self.upper && v < b) {
                best = i;
            }
        }
        best
    }
}

/// Fold family on `T*T²`: the base lift of `g`, then the fiberwise shear
/// `twist · |p|²/2`. Its front has the generating family
/// `S(x, ξ) = −g(ξ) + |x − ξ|²/(2·twist)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TorusFold {
    pub g: BaseProfile,
    pub twist: f64,
    pub steps: usize,
}

impl TorusFold {
    pub fn new(g: BaseProfile, twist: f64) -> Self {
        Self { g, twist, steps: DEFAULT_FOLD_STEPS }
    }

    /// A one-dimensional Z-fold in each variable (different profiles, so
    /// no symmetry aligns the strata with the grid) coupled by
    /// `eps·cos(q₁ − q₂)`. At `eps = 0` the two Maxwell lines cross in a
    /// quadruple point.
    pub fn perturbed_product(eps: f64) -> Self {
        let mut modes = vec![
            Mode { k: [1, 0], a: PRODUCT_FOLDS[0].0, b: 0.0 },
            Mode { k: [2, 0], a: 0.0, b: PRODUCT_FOLDS[0].1 },
            Mode { k: [0, 1], a: PRODUCT_FOLDS[1].0, b: 0.0 },
            Mode { k: [0, 2], a: 0.0, b: PRODUCT_FOLDS[1].1 },
        ];
        if eps != 0.0 {
            modes.push(Mode { k: [1, -1], a: eps, b: 0.0 });
        }
        Self::new(BaseProfile::Fourier { modes }, -1.0)
    }

    /// Base profile of the `i`-th factor of the product scenario.
    pub fn product_factor(i: usize) -> BaseProfile {
        let (a, b) = PRODUCT_FOLDS[i];
        BaseProfile::fourier1(&[(1, a)], &[(2, b)])
    }

    /// The fold Hamiltonian, with its fiber cutoff pushed beyond `|∇g|` so
    /// the flow realises the closed-form fold map.
    pub fn spec(&self) -> HamiltonianSpec {
        let spec = HamiltonianSpec::fold(2, self.g.clone(), self.twist);
        let bound = match &self.g {
            BaseProfile::Fourier { modes } => modes
                .iter()
                .map(|m| (m.a.hypot(m.b)) * f64::from(m.k[0]).hypot(f64::from(m.k[1])))
                .sum::<f64>(),
            _ => 0.0,
        };
        if bound + 0.5 <= spec.support.inner {
            return spec;
        }
        spec.with_support(Support { inner: bound + 0.5, outer: bound + 1.5 })
    }

    /// The selector is the upper envelope for `twist ≤ 0`.
    pub fn upper(&self) -> bool {
        self.twist <= 0.0
    }

    /// Closed-form generating family and its `ξ`-gradient.
    pub fn generating(&self, x: V2, xi: V2) -> (f64, V2) {
        let j = self.g.eval(xi);
        let d = sub(x, xi);
        let v = -j.v + dot(d, d) / (2.0 * self.twist);
        (v, [-j.g[0] - d[0] / self.twist, -j.g[1] - d[1] / self.twist])
    }
}

/// A sheet of the front evaluated over a base point.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SheetPoint {
    /// Preimage `ξ` (flowed) or `[piece, 0]` (synthetic).
    pub key: V2,
    /// Base point, lifted.
    pub at: V2,
    pub value: f64,
    pub df: V2,
    /// `(∂Q/∂ξ)⁻¹` (identity for synthetic sheets).
    pub inv: M2,
}

#[derive(Debug, Clone)]
pub enum Source2D {
    Synthetic(AffineArrangement),
    Flowed { fold: TorusFold, spec: HamiltonianSpec },
}

struct FlowEval {
    q: V2,
    p: V2,
    h: f64,
    dq: M2,
}

fn flow_eval(spec: &HamiltonianSpec, steps: usize, xi: V2) -> Result<FlowEval> {
    let pr = propagate(spec, 0.0, 1.0, &[xi[0], xi[1], 0.0, 0.0], steps, true)?;
    let m = pr.jacobian.ok_or_else(|| Error::Numerical("missing Jacobian".into()))?;
    Ok(FlowEval {
        q: [pr.state[0], pr.state[1]],
        p: [pr.state[2], pr.state[3]],
        h: pr.action,
        dq: [[m[0][0], m[0][1]], [m[1][0], m[1][1]]],
    })
}

/// Newton on `Q(ξ) = target` starting from `xi`.
fn solve_sheet(spec: &HamiltonianSpec, steps: usize, mut xi: V2, target: V2) -> Result<SheetPoint> {
    for _ in 0..20 {
        let e = flow_eval(spec, steps, xi)?;
        let inv = inv2(&e.dq).ok_or_else(|| Error::Degenerate(format!("caustic at ξ = {xi:?}")))?;
        let r = sub(target, e.q);
        if norm(r) < NEWTON_TOL {
            return Ok(SheetPoint { key: xi, at: target, value: e.h, df: e.p, inv });
        }
        let mut d = mat_vec(&inv, r);
        let len = norm(d);
        if len > 0.5 {
            d = scale(d, 0.5 / len);
        }
        xi = add(xi, d);
    }
    Err(Error::Numerical(format!("sheet continuation to {target:?} did not converge")))
}

impl Source2D {
    pub fn flowed(fold: TorusFold) -> Self {
        let spec = fold.spec();
        Source2D::Flowed { fold, spec }
    }

    pub fn upper(&self) -> bool {
        match self {
            Source2D::Synthetic(a) => a.upper,
            Source2D::Flowed { fold, .. } => fold.upper(),
        }
    }

    fn periodic(&self) -> bool {
        matches!(self, Source2D::Flowed { .. })
    }

    fn delta(&self, a: V2, b: V2) -> V2 {
        if self.periodic() {
            circ2(a, b)
        } else {
            sub(a, b)
        }
    }

    fn synthetic_sheet(arr: &AffineArrangement, piece: usize, x: V2) -> SheetPoint {
        let p = arr.planes[piece];
        SheetPoint { key: [piece as f64, 0.0], at: x, value: p.eval(x), df: p.a, inv: [[1.0, 0.0], [0.0, 1.0]] }
    }

    /// Continues the sheet through `from` to the base point `x`.
    pub fn continue_to(&self, from: &SheetPoint, x: V2) -> Result<SheetPoint> {
        match self {
            Source2D::Synthetic(arr) => Ok(Self::synthetic_sheet(arr, from.key[0] as usize, x)),
            Source2D::Flowed { fold, spec } => {
                let target = add(from.at, circ2(x, from.at));
                let guess = add(from.key, mat_vec(&from.inv, sub(target, from.at)));
                solve_sheet(spec, fold.steps, guess, target)
            }
        }
    }

    /// Sheet identity between neighbouring sheet points.
    pub fn same_sheet(&self, a: &SheetPoint, b: &SheetPoint) -> bool {
        match self {
            Source2D::Synthetic(_) => a.key[0] == b.key[0],
            Source2D::Flowed { .. } => {
                let d = circ2(b.at, a.at);
                let pa = add(a.key, mat_vec(&a.inv, d));
                let pb = add(b.key, mat_vec(&b.inv, scale(d, -1.0)));
                let miss = norm(circ2(b.key, pa)).max(norm(circ2(a.key, pb)));
                if miss < SAME_SHEET_TOL {
                    return true;
                }
                if miss > 1.0 {
                    return false;
                }
                // Strongly bent sheet: decide by exact continuation.
                [(a, b), (b, a)].iter().all(|(u, w)| {
                    self.continue_to(u, w.at).is_ok_and(|c| norm(circ2(c.key, w.key)) < 1e-6)
                })
            }
        }
    }
}

/// The selector sampled on an `n × n` grid: the torus `[0, 2π)²` for
/// flowed sources, the closed patch `[−1, 1]²` for synthetic ones.
#[derive(Debug, Clone)]
pub struct SelectorField2D {
    pub n: usize,
    pub origin: V2,
    pub step: f64,
    pub periodic: bool,
    pub source: Source2D,
    pub nodes: Vec<SheetPoint>,
    /// Connected component of the same-sheet relation over grid edges.
    pub branch: Vec<usize>,
    /// Number of distinct sheets found over each node.
    pub sheet_count: Vec<usize>,
}

impl SelectorField2D {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        (i % self.n) + self.n * (j % self.n)
    }

    pub fn position(&self, k: usize) -> V2 {
        let (i, j) = (k % self.n, k / self.n);
        [self.origin[0] + self.step * i as f64, self.origin[1] + self.step * j as f64]
    }

    pub fn f(&self, k: usize) -> f64 {
        self.nodes[k].value
    }

    pub fn df(&self, k: usize) -> V2 {
        self.nodes[k].df
    }

    pub fn cells(&self) -> usize {
        if self.periodic {
            self.n
        } else {
            self.n - 1
        }
    }

    pub fn branch_count(&self) -> usize {
        self.branch.iter().collect::<BTreeSet<_>>().len()
    }

    fn on_boundary(&self, k: usize) -> bool {
        let (i, j) = (k % self.n, k / self.n);
        !self.periodic && (i == 0 || j == 0 || i == self.n - 1 || j == self.n - 1)
    }

    /// `p` moved to the lift nearest `anchor`.
    fn near(&self, p: V2, anchor: V2) -> V2 {
        add(anchor, self.source.delta(p, anchor))
    }

    fn wrapped(&self, p: V2) -> V2 {
        if self.periodic {
            [wrap(p[0]), wrap(p[1])]
        } else {
            p
        }
    }

    /// Edge `3k + dir` from node `k` along `+x`, `+y` or the diagonal.
    fn edge_ends(&self, e: usize) -> (usize, usize, V2) {
        let (k, dir) = (e / 3, e % 3);
        let (i, j) = (k % self.n, k / self.n);
        let (di, dj) = [(1, 0), (0, 1), (1, 1)][dir];
        let b = self.index(i + di, j + dj);
        let xb = add(self.position(k), [self.step * di as f64, self.step * dj as f64]);
        (k, b, xb)
    }

    fn edge_on_boundary(&self, e: usize) -> bool {
        let (a, b, _) = self.edge_ends(e);
        if self.periodic || !self.on_boundary(a) || !self.on_boundary(b) {
            return false;
        }
        let (ia, ja, ib, jb) = (a % self.n, a / self.n, b % self.n, b / self.n);
        (ia == ib && (ia == 0 || ia == self.n - 1)) || (ja == jb && (ja == 0 || ja == self.n - 1))
    }

    /// Corner nodes (counter-clockwise), edges `vertex k → k+1` and lifted
    /// corner positions of triangle `t`.
    fn triangle(&self, t: usize) -> ([usize; 3], [usize; 3], [V2; 3]) {
        let (c, half) = (t / 2, t % 2);
        let m = self.cells();
        let (i, j) = (c % m, c / m);
        let v00 = self.index(i, j);
        let v10 = self.index(i + 1, j);
        let v11 = self.index(i + 1, j + 1);
        let v01 = self.index(i, j + 1);
        let x = self.position(v00);
        let s = self.step;
        let (p10, p11, p01) = (add(x, [s, 0.0]), add(x, [s, s]), add(x, [0.0, s]));
        if half == 0 {
            ([v00, v10, v11], [3 * v00, 3 * v10 + 1, 3 * v00 + 2], [x, p10, p11])
        } else {
            ([v00, v11, v01], [3 * v00 + 2, 3 * v01, 3 * v00 + 1], [x, p11, p01])
        }
    }

    fn triangle_count(&self) -> usize {
        2 * self.cells() * self.cells()
    }

    fn cell_corners(&self, t: usize) -> [usize; 4] {
        let m = self.cells();
        let c = t / 2;
        let (i, j) = (c % m, c / m);
        [self.index(i, j), self.index(i + 1, j), self.index(i + 1, j + 1), self.index(i, j + 1)]
    }

    fn singular_edge(&self, a: usize, b: usize) -> bool {
        !self.source.same_sheet(&self.nodes[a], &self.nodes[b])
    }

    pub fn min_f(&self) -> f64 {
        self.nodes.iter().map(|s| s.value).fold(f64::INFINITY, f64::min)
    }

    pub fn max_f(&self) -> f64 {
        self.nodes.iter().map(|s| s.value).fold(f64::NEG_INFINITY, f64::max)
    }

    fn value_scale(&self) -> f64 {
        1.0 + self.max_f().abs().max(self.min_f().abs())
    }
}

fn connect_branches(source: &Source2D, n: usize, periodic: bool, nodes: &[SheetPoint]) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..nodes.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for j in 0..n {
        for i in 0..n {
            let a = i + n * j;
            for (di, dj) in [(1, 0), (0, 1), (1, 1)] {
                if !periodic && (i + di >= n || j + dj >= n) {
                    continue;
                }
                let b = (i + di) % n + n * ((j + dj) % n);
                if source.same_sheet(&nodes[a], &nodes[b]) {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    (0..nodes.len()).map(|k| find(&mut parent, k)).collect()
}

/// Samples the envelope of an affine arrangement on `[−1, 1]²`.
pub fn synthetic_field(arr: &AffineArrangement, n: usize) -> Result<SelectorField2D> {
    if n < 3 || arr.planes.is_empty() {
        return Err(Error::Precondition("synthetic field needs n ≥ 3 and at least one plane".into()));
    }
    let step = 2.0 / (n - 1) as f64;
    let source = Source2D::Synthetic(arr.clone());
    let nodes: Vec<SheetPoint> = (0..n * n)
        .map(|k| {
            let x = [-1.0 + step * (k % n) as f64, -1.0 + step * (k / n) as f64];
            Source2D::synthetic_sheet(arr, arr.select(x), x)
        })
        .collect();
    let branch = connect_branches(&source, n, false, &nodes);
    Ok(SelectorField2D { n, origin: [-1.0, -1.0], step, periodic: false, source, nodes, branch, sheet_count: vec![arr.planes.len(); n * n] })
}

struct Candidate {
    xi: V2,
    target: V2,
    hint: f64,
}

/// Samples the selector of a flowed fold family on the `n × n` torus grid.
///
/// The zero section is flowed on the same grid; every image triangle is
/// rasterised onto the target grid to collect candidate sheets, the
/// plausible ones are polished by Newton and the extremal height wins.
pub fn sample_selector_2d(fold: &TorusFold, n: usize) -> Result<SelectorField2D> {
    if n < 16 {
        return Err(Error::Precondition(format!("two-dimensional selector needs n ≥ 16, got {n}")));
    }
    let source = Source2D::flowed(fold.clone());
    let Source2D::Flowed { spec, .. } = &source else { unreachable!() };
    if spec.dim != 2 {
        return Err(Error::Structural("torus fold must live on T*T²".into()));
    }
    let step = TAU / n as f64;
    let ids: Vec<usize> = (0..n * n).collect();
    let evals: Vec<Result<FlowEval>> =
        par_map(&ids, |&k| flow_eval(spec, fold.steps, [step * (k % n) as f64, step * (k / n) as f64]));
    let evals: Vec<FlowEval> = evals.into_iter().collect::<Result<_>>()?;

    let mut cands: Vec<Vec<Candidate>> = (0..n * n).map(|_| Vec::new()).collect();
    for j in 0..n {
        for i in 0..n {
            let corner = |di: usize, dj: usize| {
                let k = (i + di) % n + n * ((j + dj) % n);
                let xi = [step * (i + di) as f64, step * (j + dj) as f64];
                let disp = sub(evals[k].q, [step * (k % n) as f64, step * (k / n) as f64]);
                (xi, add(xi, disp), evals[k].h)
            };
            let c00 = corner(0, 0);
            let c10 = corner(1, 0);
            let c11 = corner(1, 1);
            let c01 = corner(0, 1);
            for tri in [[c00, c10, c11], [c00, c11, c01]] {
                rasterize(&tri, step, n, &mut cands);
            }
        }
    }

    let upper = fold.upper();
    let picked: Vec<Result<(SheetPoint, usize)>> = par_map(&ids, |&k| {
        let list = &cands[k];
        if list.is_empty() {
            return Err(Error::Resolution(format!("no sheet found over grid node {k}; refine the grid")));
        }
        let best_hint =
            list.iter().map(|c| c.hint).fold(if upper { f64::NEG_INFINITY } else { f64::INFINITY }, |a, b| {
                if upper {
                    a.max(b)
                } else {
                    a.min(b)
                }
            });
        let mut polished: Vec<SheetPoint> = Vec::new();
        for c in list {
            if (c.hint - best_hint).abs() > 0.05 * (1.0 + best_hint.abs()) {
                continue;
            }
            if polished.iter().any(|p| norm(circ2(p.key, c.xi)) < 0.25 * step) {
                continue;
            }
            if let Ok(s) = solve_sheet(spec, fold.steps, c.xi, c.target) {
                if !polished.iter().any(|p| norm(circ2(p.key, s.key)) < 1e-7) {
                    polished.push(s);
                }
            }
        }
        let count = polished.len();
        let best = polished
            .into_iter()
            .reduce(|a, b| if (upper && b.value > a.value) || (!upper && b.value < a.value) { b } else { a })
            .ok_or_else(|| Error::Numerical(format!("no candidate sheet over node {k} converged")))?;
        let mut best = best;
        let x = [step * (k % n) as f64, step * (k / n) as f64];
        let shift = sub(x, best.at);
        best.at = x;
        best.key = add(best.key, shift);
        Ok((best, count))
    });
    let picked: Vec<(SheetPoint, usize)> = picked.into_iter().collect::<Result<_>>()?;
    let (nodes, sheet_count): (Vec<_>, Vec<_>) = picked.into_iter().unzip();
    let branch = connect_branches(&source, n, true, &nodes);
    Ok(SelectorField2D { n, origin: [0.0, 0.0], step, periodic: true, source, nodes, branch, sheet_count })
}

fn rasterize(tri: &[(V2, V2, f64); 3], step: f64, n: usize, cands: &mut [Vec<Candidate>]) {
    let (p0, p1, p2) = (tri[0].1, tri[1].1, tri[2].1);
    let area = det(sub(p1, p0), sub(p2, p0));
    if area.abs() < 1e-300 {
        return;
    }
    let lo = [p0[0].min(p1[0]).min(p2[0]), p0[1].min(p1[1]).min(p2[1])];
    let hi = [p0[0].max(p1[0]).max(p2[0]), p0[1].max(p1[1]).max(p2[1])];
    let (kx0, kx1) = ((lo[0] / step).ceil() as i64, (hi[0] / step).floor() as i64);
    let (ky0, ky1) = ((lo[1] / step).ceil() as i64, (hi[1] / step).floor() as i64);
    for ky in ky0..=ky1 {
        for kx in kx0..=kx1 {
            let x = [kx as f64 * step, ky as f64 * step];
            let l1 = det(sub(x, p0), sub(p2, p0)) / area;
            let l2 = det(sub(p1, p0), sub(x, p0)) / area;
            let l0 = 1.0 - l1 - l2;
            if l0 < -1e-9 || l1 < -1e-9 || l2 < -1e-9 {
                continue;
            }
            let xi = add(add(scale(tri[0].0, l0), scale(tri[1].0, l1)), scale(tri[2].0, l2));
            let hint = l0 * tri[0].2 + l1 * tri[1].2 + l2 * tri[2].2;
            let (wx, wy) = (kx.rem_euclid(n as i64), ky.rem_euclid(n as i64));
            let shift = [(kx - wx) as f64 * step, (ky - wy) as f64 * step];
            cands[wx as usize + n * wy as usize].push(Candidate { xi: sub(xi, shift), target: sub(x, shift), hint });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum BaseKey {
    Node(usize),
    Edge(usize),
    Triple(usize),
}

/// A point of the codimension-one stratum on grid edge `edge`, with both
/// adjacent sheets continued exactly to it (`sheets[0]` from the edge's
/// start node).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct S1Point {
    pub edge: usize,
    pub ends: [usize; 2],
    pub x: V2,
    pub sheets: [SheetPoint; 2],
    /// False when the sheets could not be continued and the point fell
    /// back to the edge midpoint.
    pub resolved: bool,
}

/// A point where three sheets tie.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TriplePoint {
    pub triangle: usize,
    pub nodes: [usize; 3],
    pub x: V2,
    pub sheets: [SheetPoint; 3],
    pub resolved: bool,
}

/// Endpoint of the codimension-one stratum inside a triangle where the
/// same-sheet relation is not transitive (a caustic-type point).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CausticPoint {
    pub triangle: usize,
    pub edge: usize,
    pub x: V2,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Polyline {
    pub keys: Vec<BaseKey>,
    pub points: Vec<V2>,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Strata {
    pub s1: Vec<S1Point>,
    pub triples: Vec<TriplePoint>,
    pub caustics: Vec<CausticPoint>,
    /// Segments of the stratum, one per adjacent pair inside a triangle.
    pub segments: Vec<(BaseKey, BaseKey)>,
    pub polylines: Vec<Polyline>,
    /// Triangles by number of singular edges (0, 1, 2, 3).
    pub triangle_classes: [usize; 4],
    edge_index: BTreeMap<usize, usize>,
    triple_index: BTreeMap<usize, usize>,
}

impl Strata {
    pub fn is_empty(&self) -> bool {
        self.s1.is_empty() && self.triples.is_empty()
    }

    pub fn s1_at_edge(&self, e: usize) -> Option<&S1Point> {
        self.edge_index.get(&e).map(|&i| &self.s1[i])
    }

    fn position(&self, key: BaseKey) -> Option<V2> {
        match key {
            BaseKey::Edge(e) => self.s1_at_edge(e).map(|p| p.x),
            BaseKey::Triple(t) => self.triple_index.get(&t).map(|&i| self.triples[i].x),
            BaseKey::Node(_) => None,
        }
    }

    fn adjacency(&self) -> BTreeMap<BaseKey, Vec<BaseKey>> {
        let mut adj: BTreeMap<BaseKey, Vec<BaseKey>> = BTreeMap::new();
        for &(a, b) in &self.segments {
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        }
        adj
    }

    pub fn unresolved(&self) -> usize {
        self.s1.iter().filter(|p| !p.resolved).count() + self.triples.iter().filter(|t| !t.resolved).count()
    }
}

fn s1_point(field: &SelectorField2D, e: usize) -> S1Point {
    let (a, b, xb) = field.edge_ends(e);
    let xa = field.position(a);
    let src = &field.source;
    let (na, nb) = (field.nodes[a], field.nodes[b]);
    let failed = Cell::new(false);
    let at = |t: f64| add(xa, scale(sub(xb, xa), t));
    let phi = |t: f64| {
        let x = at(t);
        match (src.continue_to(&na, x), src.continue_to(&nb, x)) {
            (Ok(sa), Ok(sb)) => sa.value - sb.value,
            _ => {
                failed.set(true);
                f64::NAN
            }
        }
    };
    let root = bracketed_root(phi, 0.0, 1.0, 1e-15);
    let resolved_root = root.filter(|_| !failed.get());
    let t = resolved_root.unwrap_or(0.5);
    let x = at(t);
    let sheets = match (src.continue_to(&na, x), src.continue_to(&nb, x)) {
        (Ok(sa), Ok(sb)) if resolved_root.is_some() => Some([sa, sb]),
        _ => None,
    };
    match sheets {
        Some(sheets) => S1Point { edge: e, ends: [a, b], x, sheets, resolved: true },
        None => {
            let mut sa = na;
            let mut sb = nb;
            sa.at = x;
            sb.at = x;
            S1Point { edge: e, ends: [a, b], x, sheets: [sa, sb], resolved: false }
        }
    }
}

fn triple_point(field: &SelectorField2D, t: usize, nodes: [usize; 3], corners: [V2; 3]) -> Result<TriplePoint> {
    let src = &field.source;
    let mut x = scale(add(add(corners[0], corners[1]), corners[2]), 1.0 / 3.0);
    let mut sheets = [field.nodes[nodes[0]], field.nodes[nodes[1]], field.nodes[nodes[2]]];
    let vs = field.value_scale();
    let mut resolved = false;
    for _ in 0..30 {
        let mut next = sheets;
        let mut ok = true;
        for (k, s) in sheets.iter().enumerate() {
            match src.continue_to(s, x) {
                Ok(c) => next[k] = c,
                Err(_) => ok = false,
            }
        }
        if !ok {
            break;
        }
        sheets = next;
        let f = [sheets[0].value - sheets[1].value, sheets[0].value - sheets[2].value];
        let j = [sub(sheets[0].df, sheets[1].df), sub(sheets[0].df, sheets[2].df)];
        let area = det(j[0], j[1]);
        let cscale = 1.0 + sheets.iter().map(|s| norm(s.df)).fold(0.0, f64::max);
        if area.abs() < 1e-10 * cscale * cscale {
            return Err(Error::NonGeneric(format!("collinear jump covectors at triple point near {x:?}")));
        }
        if norm(f) < 1e-13 * vs {
            resolved = true;
            break;
        }
        let inv = inv2(&[j[0], j[1]]).ok_or_else(|| Error::NonGeneric("singular triple-point system".into()))?;
        let mut dx = mat_vec(&inv, f);
        let len = norm(dx);
        if len > field.step {
            dx = scale(dx, field.step / len);
        }
        x = sub(x, dx);
    }
    Ok(TriplePoint { triangle: t, nodes, x, sheets, resolved })
}

/// Locates the singular strata of the sampled selector: points of the
/// codimension-one stratum on grid edges, triple points inside triangles
/// and caustic-type endpoints, and chains them into polylines.
///
/// Fails with `NonGeneric` at a quadruple point (a fourth sheet ties at a
/// triple point) or when the three jump covectors are collinear.
pub fn extract_strata(field: &SelectorField2D) -> Result<Strata> {
    let nt = field.triangle_count();
    let mut singular_edges = BTreeSet::new();
    for t in 0..nt {
        let (v, e, _) = field.triangle(t);
        for k in 0..3 {
            if field.singular_edge(v[k], v[(k + 1) % 3]) {
                singular_edges.insert(e[k]);
            }
        }
    }
    let edges: Vec<usize> = singular_edges.into_iter().collect();
    let s1: Vec<S1Point> = par_map(&edges, |&e| s1_point(field, e));
    let edge_index: BTreeMap<usize, usize> = edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();

    let mut triples = Vec::new();
    let mut caustics = Vec::new();
    let mut segments = Vec::new();
    let mut classes = [0usize; 4];
    for t in 0..nt {
        let (v, e, p) = field.triangle(t);
        let sing: Vec<usize> = (0..3).filter(|&k| edge_index.contains_key(&e[k])).collect();
        classes[sing.len()] += 1;
        match sing.len() {
            1 => {
                let k = sing[0];
                caustics.push(CausticPoint { triangle: t, edge: e[k], x: s1[edge_index[&e[k]]].x });
            }
            2 => segments.push((BaseKey::Edge(e[sing[0]]), BaseKey::Edge(e[sing[1]]))),
            3 => {
                let tp = triple_point(field, t, v, p)?;
                check_quadruple(field, &tp, p)?;
                for &ek in &e {
                    segments.push((BaseKey::Edge(ek), BaseKey::Triple(t)));
                }
                triples.push(tp);
            }
            _ => {}
        }
    }
    let triple_index = triples.iter().enumerate().map(|(i, tp)| (tp.triangle, i)).collect();
    let mut strata = Strata {
        s1,
        triples,
        caustics,
        segments,
        polylines: Vec::new(),
        triangle_classes: classes,
        edge_index,
        triple_index,
    };
    strata.polylines = chain(field, &strata);
    Ok(strata)
}

/// Rejects quadruple points, and triple points that the grid has not
/// resolved (far outside their triangle, or beaten by a fourth sheet).
fn check_quadruple(field: &SelectorField2D, tp: &TriplePoint, corners: [V2; 3]) -> Result<()> {
    let src = &field.source;
    let area = det(sub(corners[1], corners[0]), sub(corners[2], corners[0]));
    let x = field.near(tp.x, corners[0]);
    let bary = [
        det(sub(corners[1], x), sub(corners[2], x)) / area,
        det(sub(corners[2], x), sub(corners[0], x)) / area,
        det(sub(corners[0], x), sub(corners[1], x)) / area,
    ];
    if bary.iter().any(|&l| l < -2.0) {
        return Err(Error::Resolution(format!("triple point {:?} lies outside its cell; refine the grid", tp.x)));
    }
    for &c in &field.cell_corners(tp.triangle) {
        let s = &field.nodes[c];
        if tp.nodes.contains(&c) || tp.nodes.iter().any(|&v| src.same_sheet(s, &field.nodes[v])) {
            continue;
        }
        let Ok(fourth) = src.continue_to(s, tp.x) else { continue };
        let gap = fourth.value - tp.sheets[0].value;
        if gap.abs() < QUADRUPLE_TOL * field.value_scale() {
            return Err(Error::NonGeneric(format!(
                "four sheets tie at {:?} (gap {gap:.2e}); perturb to split the quadruple point",
                tp.x
            )));
        }
        if (src.upper() && gap > 0.0) || (!src.upper() && gap < 0.0) {
            return Err(Error::Resolution(format!(
                "a fourth sheet dominates the triple point at {:?}; refine the grid",
                tp.x
            )));
        }
    }
    Ok(())
}

fn chain(field: &SelectorField2D, strata: &Strata) -> Vec<Polyline> {
    let adj = strata.adjacency();
    let mut used = BTreeSet::new();
    let seg_key = |a: BaseKey, b: BaseKey| if a < b { (a, b) } else { (b, a) };
    let mut out = Vec::new();
    let walk = |start: BaseKey, used: &mut BTreeSet<(BaseKey, BaseKey)>| -> Option<Polyline> {
        let mut keys = vec![start];
        let mut cur = start;
        loop {
            let next = adj.get(&cur)?.iter().copied().find(|&nb| !used.contains(&seg_key(cur, nb)));
            let Some(nb) = next else { break };
            used.insert(seg_key(cur, nb));
            keys.push(nb);
            cur = nb;
            if adj[&cur].len() != 2 || cur == start {
                break;
            }
        }
        if keys.len() < 2 {
            return None;
        }
        let closed = keys.len() > 2 && keys.first() == keys.last();
        if closed {
            keys.pop();
        }
        let mut points: Vec<V2> = Vec::with_capacity(keys.len());
        for &k in &keys {
            let p = strata.position(k).unwrap_or([0.0, 0.0]);
            let p = match points.last() {
                Some(&prev) => field.near(p, prev),
                None => p,
            };
            points.push(p);
        }
        Some(Polyline { keys, points, closed })
    };
    let starts: Vec<BaseKey> = adj.iter().filter(|(_, v)| v.len() != 2).map(|(k, _)| *k).collect();
    for s in starts {
        for _ in 0..adj[&s].len() {
            if let Some(p) = walk(s, &mut used) {
                out.push(p);
            }
        }
    }
    let rest: Vec<BaseKey> = adj.keys().copied().collect();
    for s in rest {
        while adj[&s].iter().any(|&nb| !used.contains(&seg_key(s, nb))) {
            match walk(s, &mut used) {
                Some(p) => out.push(p),
                None => break,
            }
        }
    }
    out
}

/// Jump of the selector differential across the codimension-one stratum.
/// `minus` is the side of the edge's start node; `jump = df⁻ − df⁺`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct JumpCovector {
    pub edge: usize,
    pub x: V2,
    pub df_minus: V2,
    pub df_plus: V2,
    pub jump: V2,
    /// Unit tangent of the stratum: derivative of the interpolant through
    /// up to five consecutive stratum points, in chord length.
    pub tangent: V2,
    /// `|⟨jump, t̂⟩| / |jump|`.
    pub residual: f64,
    pub resolved: bool,
}

/// Derivative at `x` of the Lagrange interpolant through up to two
/// stratum points on each side of `key`, parametrised by chord length.
fn stratum_tangent(
    field: &SelectorField2D,
    strata: &Strata,
    adj: &BTreeMap<BaseKey, Vec<BaseKey>>,
    key: BaseKey,
    x: V2,
) -> V2 {
    let nbs = adj.get(&key).cloned().unwrap_or_default();
    let mut sides: Vec<Vec<V2>> = Vec::new();
    for &first in nbs.iter().take(2) {
        let mut pts = Vec::new();
        let (mut prev, mut cur) = (key, first);
        // a stratum through or near a grid node or a triple point repeats
        // its position; close chords would amplify round-off
        for _ in 0..8 {
            if pts.len() == 2 {
                break;
            }
            let Some(q) = strata.position(cur) else { break };
            let anchor = pts.last().copied().unwrap_or(x);
            let q = field.near(q, anchor);
            if norm(sub(q, anchor)) > 0.05 * field.step {
                pts.push(q);
            }
            let next = match adj.get(&cur) {
                Some(v) if v.len() == 2 => v.iter().copied().find(|&k| k != prev),
                _ => None,
            };
            match next {
                Some(k) if k != key => {
                    prev = cur;
                    cur = k;
                }
                _ => break,
            }
        }
        sides.push(pts);
    }
    let mut pts: Vec<V2> = Vec::new();
    if let Some(back) = sides.first() {
        pts.extend(back.iter().rev());
    }
    let c = pts.len();
    pts.push(x);
    if let Some(fwd) = sides.get(1) {
        pts.extend(fwd.iter());
    }
    if pts.len() < 2 {
        return [0.0, 0.0];
    }
    let mut t = vec![0.0; pts.len()];
    for i in 1..pts.len() {
        t[i] = t[i - 1] + norm(sub(pts[i], pts[i - 1]));
    }
    let tc = t[c];
    let mut d = [0.0, 0.0];
    for i in 0..pts.len() {
        let w = if i == c {
            (0..pts.len()).filter(|&k| k != c).map(|k| 1.0 / (tc - t[k])).sum::<f64>()
        } else {
            let num: f64 = (0..pts.len()).filter(|&k| k != i && k != c).map(|k| tc - t[k]).product();
            let den: f64 = (0..pts.len()).filter(|&k| k != i).map(|k| t[i] - t[k]).product();
            num / den
        };
        d = add(d, scale(pts[i], w));
    }
    d
}

/// Jump covectors at every resolved or unresolved point of the
/// codimension-one stratum.
pub fn jump_covectors(field: &SelectorField2D, strata: &Strata) -> Vec<JumpCovector> {
    let adj = strata.adjacency();
    strata
        .s1
        .iter()
        .map(|p| {
            let t = stratum_tangent(field, strata, &adj, BaseKey::Edge(p.edge), p.x);
            let tl = norm(t);
            let tangent = if tl > 0.0 { scale(t, 1.0 / tl) } else { t };
            let jump = sub(p.sheets[0].df, p.sheets[1].df);
            let jl = norm(jump);
            let residual = if jl > 0.0 && tl > 0.0 { dot(jump, tangent).abs() / jl } else { f64::INFINITY };
            JumpCovector {
                edge: p.edge,
                x: p.x,
                df_minus: p.sheets[0].df,
                df_plus: p.sheets[1].df,
                jump,
                tangent,
                residual,
                resolved: p.resolved,
            }
        })
        .collect()
}

/// Summary of the conormality of the jumps.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConormalSummary {
    pub max_residual: f64,
    pub median_residual: f64,
    /// Points whose two sheets carry the same covector (a sheet switch
    /// without a jump).
    pub spurious: usize,
    pub unresolved: usize,
    pub points: usize,
}

pub fn conormal_residual(jumps: &[JumpCovector]) -> ConormalSummary {
    let scale_ = jumps.iter().map(|j| norm(j.df_minus).max(norm(j.df_plus))).fold(0.0, f64::max);
    let mut spurious = 0;
    let mut res = Vec::new();
    for j in jumps.iter().filter(|j| j.resolved) {
        if norm(j.jump) <= 1e-9 * (1.0 + scale_) {
            spurious += 1;
        } else {
            res.push(j.residual);
        }
    }
    let max_residual = res.iter().copied().fold(0.0, f64::max);
    let median_residual = crate::math::median_abs(res.iter().copied());
    ConormalSummary {
        max_residual,
        median_residual,
        spurious,
        unresolved: jumps.iter().filter(|j| !j.resolved).count(),
        points: jumps.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VertexKey {
    pub base: BaseKey,
    /// Grid node whose sheet supplies the covector.
    pub side: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FaceTag {
    Selector,
    /// Selector piece closing a caustic-type triangle.
    Closure,
    Cliff,
    Simplex,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Face {
    pub tag: FaceTag,
    pub vertices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MeshVertex {
    pub key: VertexKey,
    /// `[x₁, x₂, p₁, p₂]`.
    pub point: [f64; 4],
}

/// Affine line `df⁻ + ℝ·ν` over a point of the stratum, with `ν` normal to
/// the stratum: the cliff's share of the micro-support.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MicroLine {
    pub x: V2,
    pub base: V2,
    pub normal: V2,
    /// Distance of `df⁺` from the line, relative to `|jump|`.
    pub residual: f64,
}

/// The piecewise-linear mod-2 cycle in `T*M²` (or over the patch).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CliffwallCycle {
    pub vertices: Vec<MeshVertex>,
    pub faces: Vec<Face>,
    pub micro_support: Vec<MicroLine>,
    /// Edges lying over the boundary of a patch (excluded from the
    /// boundary computation).
    pub boundary_edges: Vec<(usize, usize)>,
    /// Stratum points whose jump points against the orientation convention.
    pub orientation_flips: usize,
}

impl CliffwallCycle {
    pub fn count(&self, tag: FaceTag) -> usize {
        self.faces.iter().filter(|f| f.tag == tag).count()
    }
}

struct Builder<'a> {
    field: &'a SelectorField2D,
    strata: &'a Strata,
    index: BTreeMap<VertexKey, usize>,
    vertices: Vec<MeshVertex>,
    faces: Vec<Face>,
}

impl Builder<'_> {
    fn sheet(&self, key: VertexKey) -> SheetPoint {
        match key.base {
            BaseKey::Node(v) => self.field.nodes[v],
            BaseKey::Edge(e) => {
                let p = self.strata.s1_at_edge(e).expect("stratum point");
                p.sheets[if p.ends[0] == key.side { 0 } else { 1 }]
            }
            BaseKey::Triple(t) => {
                let tp = &self.strata.triples[self.strata.triple_index[&t]];
                let k = tp.nodes.iter().position(|&v| v == key.side).unwrap_or(0);
                tp.sheets[k]
            }
        }
    }

    fn base_point(&self, key: BaseKey) -> V2 {
        match key {
            BaseKey::Node(v) => self.field.position(v),
            _ => self.strata.position(key).expect("stratum point"),
        }
    }

    fn vertex(&mut self, base: BaseKey, side: usize) -> usize {
        let key = VertexKey { base, side };
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        let x = self.field.wrapped(self.base_point(base));
        let df = self.sheet(key).df;
        let i = self.vertices.len();
        self.vertices.push(MeshVertex { key, point: [x[0], x[1], df[0], df[1]] });
        self.index.insert(key, i);
        i
    }

    fn face(&mut self, tag: FaceTag, keys: &[(BaseKey, usize)]) {
        let vertices = keys.iter().map(|&(b, s)| self.vertex(b, s)).collect();
        self.faces.push(Face { tag, vertices });
    }
}

/// Assembles the cliff-wall cycle: selector faces over every triangle,
/// one cliff strip over every segment of the stratum and one fiber
/// simplex over every triple point.
pub fn build_cliffwall_cycle(field: &SelectorField2D, strata: &Strata) -> Result<CliffwallCycle> {
    let mut b = Builder { field, strata, index: BTreeMap::new(), vertices: Vec::new(), faces: Vec::new() };
    use BaseKey::{Edge, Node, Triple};
    for t in 0..field.triangle_count() {
        let (v, e, _) = field.triangle(t);
        let sing: Vec<bool> = e.iter().map(|ek| strata.edge_index.contains_key(ek)).collect();
        match sing.iter().filter(|&&s| s).count() {
            0 => b.face(FaceTag::Selector, &[(Node(v[0]), v[0]), (Node(v[1]), v[1]), (Node(v[2]), v[2])]),
            1 => {
                let k = sing.iter().position(|&s| s).unwrap();
                let (x, y, z) = (v[k], v[(k + 1) % 3], v[(k + 2) % 3]);
                let m = Edge(e[k]);
                b.face(FaceTag::Selector, &[(Node(x), x), (m, x), (Node(z), z)]);
                b.face(FaceTag::Selector, &[(m, y), (Node(y), y), (Node(z), z)]);
                b.face(FaceTag::Closure, &[(m, x), (m, y), (Node(z), z)]);
            }
            2 => {
                // Lone vertex X between the two singular edges X→Y and Z→X.
                let k = (0..3).find(|&k| sing[k] && sing[(k + 2) % 3]).unwrap();
                let (x, y, z) = (v[k], v[(k + 1) % 3], v[(k + 2) % 3]);
                let (mxy, mzx) = (Edge(e[k]), Edge(e[(k + 2) % 3]));
                b.face(FaceTag::Selector, &[(Node(x), x), (mxy, x), (mzx, x)]);
                b.face(FaceTag::Selector, &[(mxy, y), (Node(y), y), (Node(z), z), (mzx, z)]);
                // Strips run against the selector faces along the stratum;
                // the far side is read from each edge's own endpoint.
                b.face(FaceTag::Cliff, &[(mzx, x), (mxy, x), (mxy, y), (mzx, z)]);
            }
            _ => {
                let tk = Triple(t);
                for k in 0..3 {
                    let (x, y) = (v[k], v[(k + 1) % 3]);
                    b.face(FaceTag::Selector, &[(Node(x), x), (Edge(e[k]), x), (tk, x), (Edge(e[(k + 2) % 3]), x)]);
                    b.face(FaceTag::Cliff, &[(tk, x), (Edge(e[k]), x), (Edge(e[k]), y), (tk, y)]);
                }
                b.face(FaceTag::Simplex, &[(tk, v[0]), (tk, v[1]), (tk, v[2])]);
            }
        }
    }
    let micro_support = micro_support(field, strata);
    let mut boundary_edges = Vec::new();
    if !field.periodic {
        for f in &b.faces {
            for i in 0..f.vertices.len() {
                let (u, w) = (f.vertices[i], f.vertices[(i + 1) % f.vertices.len()]);
                if over_boundary(field, b.vertices[u].key.base) && over_boundary(field, b.vertices[w].key.base)
                    && same_boundary_edge(field, b.vertices[u].key.base, b.vertices[w].key.base)
                {
                    boundary_edges.push((u.min(w), u.max(w)));
                }
            }
        }
        boundary_edges.sort_unstable();
        boundary_edges.dedup();
    }
    // Along the stratum f_x − f_y grows towards x for an upper envelope:
    // ⟨df_x − df_y, x − y⟩ keeps one sign for a consistent orientation.
    let want = if field.source.upper() { 1.0 } else { -1.0 };
    let orientation_flips = strata
        .s1
        .iter()
        .filter(|p| {
            let d = field.source.delta(field.position(p.ends[0]), field.position(p.ends[1]));
            dot(sub(p.sheets[0].df, p.sheets[1].df), d) * want <= 0.0
        })
        .count();
    Ok(CliffwallCycle { vertices: b.vertices, faces: b.faces, micro_support, boundary_edges, orientation_flips })
}

fn over_boundary(field: &SelectorField2D, key: BaseKey) -> bool {
    match key {
        BaseKey::Node(v) => field.on_boundary(v),
        BaseKey::Edge(e) => field.edge_on_boundary(e),
        BaseKey::Triple(_) => false,
    }
}

fn boundary_sides(field: &SelectorField2D, key: BaseKey) -> [bool; 4] {
    let n = field.n;
    let side = |k: usize| {
        let (i, j) = (k % n, k / n);
        [i == 0, i == n - 1, j == 0, j == n - 1]
    };
    match key {
        BaseKey::Node(v) => side(v),
        BaseKey::Edge(e) => {
            let (a, b, _) = field.edge_ends(e);
            let (sa, sb) = (side(a), side(b));
            [sa[0] && sb[0], sa[1] && sb[1], sa[2] && sb[2], sa[3] && sb[3]]
        }
        BaseKey::Triple(_) => [false; 4],
    }
}

fn same_boundary_edge(field: &SelectorField2D, a: BaseKey, b: BaseKey) -> bool {
    let (sa, sb) = (boundary_sides(field, a), boundary_sides(field, b));
    (0..4).any(|k| sa[k] && sb[k])
}

fn micro_support(field: &SelectorField2D, strata: &Strata) -> Vec<MicroLine> {
    jump_covectors(field, strata)
        .into_iter()
        .filter(|j| j.resolved)
        .map(|j| {
            let normal = [-j.tangent[1], j.tangent[0]];
            let off = sub(j.df_plus, j.df_minus);
            let jl = norm(off);
            let residual = if jl > 0.0 { det(off, normal).abs() / jl } else { 0.0 };
            MicroLine { x: j.x, base: j.df_minus, normal, residual }
        })
        .collect()
}

/// Mod-2 boundary of the cycle: the number of undirected edges used by an
/// odd number of faces, ignoring edges over a patch boundary.
pub fn mod2_defect(cycle: &CliffwallCycle) -> usize {
    let mut count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for f in &cycle.faces {
        for i in 0..f.vertices.len() {
            let (u, w) = (f.vertices[i], f.vertices[(i + 1) % f.vertices.len()]);
            *count.entry((u.min(w), u.max(w))).or_default() += 1;
        }
    }
    let boundary: BTreeSet<(usize, usize)> = cycle.boundary_edges.iter().copied().collect();
    count.iter().filter(|(e, &c)| c % 2 == 1 && !boundary.contains(e)).count()
}

/// Directed cliff edges along the stratum that are not traversed in the
/// opposite direction by a selector face.
pub fn orientation_mismatches(cycle: &CliffwallCycle) -> usize {
    let mut selector: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for f in cycle.faces.iter().filter(|f| f.tag == FaceTag::Selector) {
        for i in 0..f.vertices.len() {
            let (u, w) = (f.vertices[i], f.vertices[(i + 1) % f.vertices.len()]);
            *selector.entry((u, w)).or_default() += 1;
        }
    }
    let mut bad = 0;
    for f in cycle.faces.iter().filter(|f| f.tag == FaceTag::Cliff) {
        for (i, j) in [(0, 1), (2, 3)] {
            let (u, w) = (f.vertices[i], f.vertices[j]);
            if !selector.contains_key(&(w, u)) {
                bad += 1;
            }
        }
    }
    bad
}

/// Checks the cycle and the stratum: zero mod-2 boundary, strip
/// orientations agreeing with the selector faces, three arcs at every
/// triple point, and conormal jumps within `conormal_tol`.
pub fn verify_mod2_cycle(
    field: &SelectorField2D,
    strata: &Strata,
    cycle: &CliffwallCycle,
    conormal_tol: f64,
) -> Report {
    let mut r = Report::default();
    r.push(Check::within("mod-2 boundary of the cycle", mod2_defect(cycle) as f64, 0.0));
    r.push(Check::within("cliff edges cancel selector edges", orientation_mismatches(cycle) as f64, 0.0));
    r.push(Check::within("jumps follow the orientation convention", cycle.orientation_flips as f64, 0.0));
    let adj = strata.adjacency();
    let bad_triples =
        strata.triples.iter().filter(|t| adj.get(&BaseKey::Triple(t.triangle)).map_or(0, |v| v.len()) != 3).count();
    r.push(Check::within("three arcs at each triple point", bad_triples as f64, 0.0));
    let summary = conormal_residual(&jump_covectors(field, strata));
    r.push(
        Check::within("jumps are conormal", summary.max_residual, conormal_tol)
            .with_note(format!("{} points, median {:.2e}", summary.points, summary.median_residual)),
    );
    r.push(Check::within("no jump-free sheet switches", summary.spurious as f64, 0.0));
    r.push(Check::within("unresolved stratum points", strata.unresolved() as f64, 0.0));
    let micro = cycle.micro_support.iter().map(|m| m.residual).fold(0.0, f64::max);
    r.push(Check::within("cliffs lie on the conormal lines", micro, conormal_tol));
    r
}

/// Full pipeline on a sampled field.
pub fn cliffwall(field: &SelectorField2D, conormal_tol: f64) -> Result<(Strata, CliffwallCycle, Report)> {
    let strata = extract_strata(field)?;
    let cycle = build_cliffwall_cycle(field, &strata)?;
    let report = verify_mod2_cycle(field, &strata, &cycle, conormal_tol);
    Ok((strata, cycle, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selector::basic_phase_function;
    use crate::spectral::SpectralOptions;
    use proptest::prelude::*;

    fn torus_profile() -> BaseProfile {
        BaseProfile::Fourier {
            modes: vec![
                Mode { k: [1, 0], a: 0.4, b: 0.1 },
                Mode { k: [0, 1], a: 0.3, b: 0.0 },
                Mode { k: [1, 1], a: 0.05, b: 0.0 },
            ],
        }
    }

    /// Distinct critical values of `ξ ↦ S(x, ξ)` near `x`, by Newton from a
    /// grid of starts.
    pub(super) fn critical_values(fold: &TorusFold, x: V2) -> Vec<f64> {
        critical_points(fold, x).into_iter().map(|(_, v)| v).collect()
    }

    pub(super) fn critical_points(fold: &TorusFold, x: V2) -> Vec<(V2, f64)> {
        let mut found: Vec<(V2, f64)> = Vec::new();
        for a in 0..14 {
            for b in 0..14 {
                let mut xi = add(x, [(a as f64 - 6.5) * 0.25, (b as f64 - 6.5) * 0.25]);
                for _ in 0..50 {
                    let (_, g) = fold.generating(x, xi);
                    let h = fold.g.eval(xi).h;
                    let hess = [[-h[0][0] + 1.0 / fold.twist, -h[0][1]], [-h[1][0], -h[1][1] + 1.0 / fold.twist]];
                    let Some(inv) = inv2(&hess) else { break };
                    let mut d = mat_vec(&inv, g);
                    if norm(d) > 0.3 {
                        d = scale(d, 0.3 / norm(d));
                    }
                    xi = sub(xi, d);
                }
                let (v, g) = fold.generating(x, xi);
                if norm(g) < 1e-10 && !found.iter().any(|(p, _)| norm(sub(*p, xi)) < 1e-6) {
                    found.push((xi, v));
                }
            }
        }
        found
    }

    #[test]
    fn single_branch_is_minus_f() {
        let g = torus_profile();
        let field = sample_selector_2d(&TorusFold::new(g.clone(), 0.0), 32).unwrap();
        let err = (0..field.len()).map(|k| (field.f(k) + g.eval(field.position(k)).v).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
        assert_eq!(field.branch_count(), 1);
        let (strata, cycle, report) = cliffwall(&field, 1e-2).unwrap();
        assert!(strata.is_empty());
        assert_eq!(cycle.count(FaceTag::Cliff), 0);
        assert_eq!(cycle.count(FaceTag::Selector), 2 * 32 * 32);
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn min_of_three_planes() {
        let arr = AffineArrangement::min_of_three([0.1234, -0.0567]);
        let field = synthetic_field(&arr, 41).unwrap();
        let (strata, cycle, report) = cliffwall(&field, 1e-12).unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(strata.triples.len(), 1);
        assert!(norm(sub(strata.triples[0].x, [0.1234, -0.0567])) < 1e-13);
        assert_eq!(cycle.count(FaceTag::Simplex), 1);
        assert_eq!(strata.polylines.len(), 3);
        assert!(strata.caustics.is_empty());
        let summary = conormal_residual(&jump_covectors(&field, &strata));
        assert!(summary.max_residual <= 1e-12, "{summary:?}");
    }

    #[test]
    fn abs_fold_has_vertical_cliff() {
        let field = synthetic_field(&AffineArrangement::abs_fold(0.0371, 0.8), 33).unwrap();
        let (strata, cycle, report) = cliffwall(&field, 1e-12).unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(strata.polylines.len(), 1);
        assert!(strata.triples.is_empty());
        for j in jump_covectors(&field, &strata) {
            assert!((j.x[0] - 0.0371).abs() < 1e-13);
            assert!(j.jump[1].abs() < 1e-15 && (j.jump[0].abs() - 1.6).abs() < 1e-13);
        }
        assert_eq!(mod2_defect(&cycle), 0);
    }

    #[test]
    fn dropping_a_strip_breaks_the_cycle() {
        let field = synthetic_field(&AffineArrangement::min_of_three([0.1, 0.2]), 17).unwrap();
        let (strata, mut cycle, _) = cliffwall(&field, 1e-12).unwrap();
        let k = cycle.faces.iter().position(|f| f.tag == FaceTag::Cliff).unwrap();
        cycle.faces.remove(k);
        assert!(mod2_defect(&cycle) > 0);
        assert!(!strata.segments.is_empty());
    }

    #[test]
    fn product_fold_matches_one_dimensional_selectors() {
        let fold = TorusFold::perturbed_product(0.0);
        let n = 64;
        let field = sample_selector_2d(&fold, n).unwrap();
        let opts = SpectralOptions { steps: fold.steps, ..Default::default() };
        let factor = |i: usize| {
            let h = HamiltonianSpec::fold(1, TorusFold::product_factor(i), fold.twist);
            basic_phase_function(&h, 4 * n, &opts).unwrap()
        };
        let (f1, f2) = (factor(0), factor(1));
        let err =
            (0..field.len()).map(|k| (field.f(k) - f1.f[4 * (k % n)] - f2.f[4 * (k / n)]).abs()).fold(0.0, f64::max);
        assert!(err < 1e-5, "{err}");
        assert!(matches!(extract_strata(&field), Err(Error::NonGeneric(_))));
    }

    #[test]
    fn perturbed_product_cycle() {
        let fold = TorusFold::perturbed_product(0.05);
        // The two triple points are closer than a 64² cell.
        let coarse = sample_selector_2d(&fold, 64).unwrap();
        assert!(matches!(extract_strata(&coarse), Err(Error::Resolution(_))));
        let field = sample_selector_2d(&fold, 96).unwrap();
        let (strata, cycle, report) = cliffwall(&field, 5e-3).unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(strata.triples.len(), 2);
        assert_eq!(cycle.count(FaceTag::Simplex), 2);
        assert!(strata.caustics.is_empty());
        // The flowed selector is the upper envelope of the generating family.
        let mut worst: f64 = 0.0;
        for k in (0..field.len()).step_by(97) {
            let best = critical_values(&fold, field.position(k)).into_iter().fold(f64::NEG_INFINITY, f64::max);
            worst = worst.max((best - field.f(k)).abs());
        }
        assert!(worst < 1e-5, "{worst}");
        // Triple points are where the three largest critical values tie.
        for t in &strata.triples {
            let mut v = critical_values(&fold, t.x);
            v.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert!(v[0] - v[2] < 1e-5 && v[2] - v[3] > 1e-3, "{v:?}");
            assert!((t.sheets[0].value - v[0]).abs() < 1e-5);
        }
    }

    #[test]
    fn strata_through_grid_nodes() {
        // (0.3, 0.2): a stratum line crosses the node (-0.25, 0.875);
        // (0.05, 0): the triple point lies on a grid line
        for at in [[0.3, 0.2], [0.05, 0.0], [0.0, 0.0]] {
            let field = synthetic_field(&AffineArrangement::min_of_three(at), 17).unwrap();
            let (_, _, report) = cliffwall(&field, 1e-12).unwrap();
            assert!(report.passed(), "{at:?}: {:?}", report.failures().collect::<Vec<_>>());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn arrangements_close_up(x in -0.8f64..0.8, y in -0.8f64..0.8, n in 9usize..30) {
            let field = synthetic_field(&AffineArrangement::min_of_three([x, y]), n).unwrap();
            let (strata, cycle, report) = cliffwall(&field, 1e-10).unwrap();
            prop_assert!(report.passed(), "{:?}", report.failures().collect::<Vec<_>>());
            prop_assert_eq!(strata.triples.len(), 1);
            prop_assert_eq!(mod2_defect(&cycle), 0);
        }
    }
}
