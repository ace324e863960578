//! Hamiltonian flows with simultaneous action accumulation.
//!
//! The integrator is the implicit midpoint rule applied to the augmented
//! system `ż = X_H(t, z)`, `Ȧ = p·q̇ − H`. Tangent vectors are propagated by
//! the exact derivative of the discrete map (a Cayley transform of `DX`), so
//! curve derivatives are consistent with the sampled points.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::math::{circ_diff, median_abs, par_map, solve4, Hermite, PI, TAU};
use crate::phase_space::{active_indices, BasePoint, BaseProfile, HamiltonianSpec, Metric, Node, PhasePoint, State};

/// Default number of time steps on `[0, 1]`.
pub const DEFAULT_STEPS: usize = 256;
const NEWTON_TOL: f64 = 1e-13;
const NEWTON_MAX: usize = 30;
const MAX_HALVINGS: u32 = 8;

/// Outcome of integrating from `t0` to `t1`.
#[derive(Debug, Clone)]
pub struct Propagated {
    pub state: State,
    pub action: f64,
    pub jacobian: Option<[[f64; 4]; 4]>,
}

fn vector_field(grad: &[f64; 4]) -> [f64; 4] {
    [grad[2], grad[3], -grad[0], -grad[1]]
}

fn field_derivative(hess: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut a = [[0.0; 4]; 4];
    for j in 0..4 {
        a[0][j] = hess[2][j];
        a[1][j] = hess[3][j];
        a[2][j] = -hess[0][j];
        a[3][j] = -hess[1][j];
    }
    a
}

/// One implicit-midpoint step of size `h` from time `t`. Tangent vectors are
/// advanced in place. Returns the new state and the action increment.
fn midpoint_step(
    spec: &HamiltonianSpec,
    t: f64,
    h: f64,
    z0: &State,
    tangents: &mut [[f64; 4]],
    depth: u32,
) -> Result<(State, f64)> {
    let tm = t + 0.5 * h;
    let mut z1 = *z0;
    let mut last_residual = f64::INFINITY;
    for _ in 0..NEWTON_MAX {
        let m = midpoint(z0, &z1);
        let jet = spec.jet(tm, &m, true)?;
        let x = vector_field(&jet.grad);
        let mut f = [0.0; 4];
        let mut res = 0.0f64;
        for i in 0..4 {
            f[i] = z1[i] - z0[i] - h * x[i];
            res = res.max(f[i].abs());
        }
        if !res.is_finite() {
            break;
        }
        let a = field_derivative(&jet.hess);
        let scale = 1.0 + z0.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if res <= NEWTON_TOL * scale {
            let da = h * ((m[2] * x[0] + m[3] * x[1]) - jet.value);
            advance_tangents(&a, h, tangents)?;
            return Ok((z1, da));
        }
        last_residual = res;
        let mut jm = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                jm[i][j] = if i == j { 1.0 } else { 0.0 } - 0.5 * h * a[i][j];
            }
        }
        let delta = solve4(&jm, &f).ok_or_else(|| Error::Numerical("singular Newton matrix".into()))?;
        for i in 0..4 {
            z1[i] -= delta[i];
        }
    }
    if depth >= MAX_HALVINGS {
        return Err(Error::Numerical(format!(
            "implicit midpoint failed at t = {t:.6}, z = {z0:?}, residual {last_residual:.3e} after {depth} halvings"
        )));
    }
    let (zm, a1) = midpoint_step(spec, t, 0.5 * h, z0, tangents, depth + 1)?;
    let (z2, a2) = midpoint_step(spec, t + 0.5 * h, 0.5 * h, &zm, tangents, depth + 1)?;
    Ok((z2, a1 + a2))
}

fn midpoint(a: &State, b: &State) -> State {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2]), 0.5 * (a[3] + b[3])]
}

fn advance_tangents(a: &[[f64; 4]; 4], h: f64, tangents: &mut [[f64; 4]]) -> Result<()> {
    if tangents.is_empty() {
        return Ok(());
    }
    let mut lhs = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            lhs[i][j] = if i == j { 1.0 } else { 0.0 } - 0.5 * h * a[i][j];
        }
    }
    for v in tangents.iter_mut() {
        let mut rhs = *v;
        for i in 0..4 {
            for j in 0..4 {
                rhs[i] += 0.5 * h * a[i][j] * v[j];
            }
        }
        *v = solve4(&lhs, &rhs).ok_or_else(|| Error::Numerical("singular Cayley matrix".into()))?;
    }
    Ok(())
}

/// Integrates from `t0` to `t1` (either direction) in `steps` equal steps,
/// advancing the given tangent vectors.
pub fn propagate_tangents(
    spec: &HamiltonianSpec,
    t0: f64,
    t1: f64,
    z: &State,
    steps: usize,
    tangents: &mut [[f64; 4]],
) -> Result<(State, f64)> {
    let steps = steps.max(1);
    let h = (t1 - t0) / steps as f64;
    let mut state = *z;
    let mut action = 0.0;
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let (next, da) = midpoint_step(spec, t, h, &state, tangents, 0)?;
        state = next;
        action += da;
    }
    Ok((state, action))
}

/// Integrates from `t0` to `t1`; optionally returns the full Jacobian
/// `∂z(t1)/∂z(t0)` (rows: output components).
pub fn propagate(
    spec: &HamiltonianSpec,
    t0: f64,
    t1: f64,
    z: &State,
    steps: usize,
    jacobian: bool,
) -> Result<Propagated> {
    if !jacobian {
        let (state, action) = propagate_tangents(spec, t0, t1, z, steps, &mut [])?;
        return Ok(Propagated { state, action, jacobian: None });
    }
    let active = active_indices(spec.dim);
    let mut tangents: Vec<[f64; 4]> = active
        .iter()
        .map(|&a| {
            let mut e = [0.0; 4];
            e[a] = 1.0;
            e
        })
        .collect();
    let (state, action) = propagate_tangents(spec, t0, t1, z, steps, &mut tangents)?;
    let mut m = [[0.0; 4]; 4];
    for i in 0..4 {
        m[i][i] = 1.0;
    }
    for (col, &a) in active.iter().enumerate() {
        for i in 0..4 {
            m[i][a] = tangents[col][i];
        }
    }
    Ok(Propagated { state, action, jacobian: Some(m) })
}

/// Sampled trajectory `z(t)` launched from the zero section, with the
/// accumulated action `h̃(t)`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<(f64, PhasePoint)>,
    pub states: Vec<State>,
    pub action: Vec<f64>,
}

impl Trajectory {
    pub fn end_state(&self) -> State {
        *self.states.last().expect("trajectory has samples")
    }

    pub fn end_action(&self) -> f64 {
        *self.action.last().expect("trajectory has samples")
    }
}

/// Trajectory from `(q0, 0)` over `[0, 1]` with `steps ≥ 16` steps.
pub fn integrate_trajectory(spec: &HamiltonianSpec, q0: &BasePoint, steps: usize) -> Result<Trajectory> {
    if steps < 16 {
        return Err(Error::Precondition(format!("need at least 16 steps, got {steps}")));
    }
    spec.validate()?;
    if q0.dim() != spec.dim {
        return Err(Error::Structural("base point dimension differs from the Hamiltonian".into()));
    }
    let c = q0.coords();
    let mut z = [c[0], c[1], 0.0, 0.0];
    let h = 1.0 / steps as f64;
    let mut samples = vec![(0.0, PhasePoint::from_state(&z, spec.dim))];
    let mut states = vec![z];
    let mut action = vec![0.0];
    let mut acc = 0.0;
    for k in 0..steps {
        let t = k as f64 * h;
        let (next, da) = midpoint_step(spec, t, h, &z, &mut [], 0)?;
        z = next;
        acc += da;
        let tn = (k + 1) as f64 * h;
        samples.push((tn, PhasePoint::from_state(&z, spec.dim)));
        states.push(z);
        action.push(acc);
    }
    Ok(Trajectory { samples, states, action })
}

/// Richardson-extrapolated time-one action `(4A(2n) − A(n))/3`.
pub fn richardson_action(spec: &HamiltonianSpec, q0: &BasePoint, steps: usize) -> Result<f64> {
    let coarse = integrate_trajectory(spec, q0, steps)?.end_action();
    let fine = integrate_trajectory(spec, q0, 2 * steps)?.end_action();
    Ok((4.0 * fine - coarse) / 3.0)
}

/// A point of the time-one curve with derivatives in the curve parameter
/// `s ∈ [0, 1)` (initial base point `2πs`). `q` is the continuous lift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub s: f64,
    pub q: f64,
    pub p: f64,
    pub h: f64,
    pub dq: f64,
    pub dp: f64,
}

impl CurvePoint {
    /// `dh/ds = P · dQ/ds`.
    pub fn dh(&self) -> f64 {
        self.p * self.dq
    }
}

/// How curve points are produced on demand (used by refinement and root
/// polishing downstream).
#[derive(Debug, Clone, PartialEq)]
pub enum CurveSource {
    /// Time-one map of a Hamiltonian on `T*S¹`.
    Flow { spec: Box<HamiltonianSpec>, steps: usize },
    /// Successive time-one maps (first stage applied first); actions add.
    /// This is how `H # F` curves are sampled: stages `[F, H]`.
    Stages { stages: Vec<HamiltonianSpec>, steps: usize },
    /// Closed form of the fold family `Q = q − c g'(q)`, `P = −g'(q)`,
    /// `h = −g(q) + c P²/2` (valid while `|P|` is inside the inner radius).
    Fold { g: BaseProfile, twist: f64 },
    /// Followed by the time-one map of `δ·g∘π`: `P ↦ P − δ g'(Q)`,
    /// `h ↦ h − δ g(Q)`.
    Shifted { base: Box<CurveSource>, g: BaseProfile, delta: f64 },
}

impl CurveSource {
    pub fn eval(&self, s: f64) -> Result<CurvePoint> {
        match self {
            CurveSource::Flow { spec, steps } => {
                let q0 = TAU * s;
                let mut tangent = [[1.0, 0.0, 0.0, 0.0]];
                let (z, a) = propagate_tangents(spec, 0.0, 1.0, &[q0, 0.0, 0.0, 0.0], *steps, &mut tangent)?;
                Ok(CurvePoint { s, q: z[0], p: z[2], h: a, dq: TAU * tangent[0][0], dp: TAU * tangent[0][2] })
            }
            CurveSource::Stages { stages, steps } => {
                let mut tangent = [[TAU, 0.0, 0.0, 0.0]];
                let mut z = [TAU * s, 0.0, 0.0, 0.0];
                let mut h = 0.0;
                for spec in stages {
                    let (next, a) = propagate_tangents(spec, 0.0, 1.0, &z, *steps, &mut tangent)?;
                    z = next;
                    h += a;
                }
                Ok(CurvePoint { s, q: z[0], p: z[2], h, dq: tangent[0][0], dp: tangent[0][2] })
            }
            CurveSource::Fold { g, twist } => {
                let q0 = TAU * s;
                let j = g.eval([q0, 0.0]);
                let p = -j.g[0];
                let dp = -j.h[0][0];
                Ok(CurvePoint {
                    s,
                    q: q0 + twist * p,
                    p,
                    h: -j.v + twist * p * p / 2.0,
                    dq: TAU * (1.0 + twist * dp),
                    dp: TAU * dp,
                })
            }
            CurveSource::Shifted { base, g, delta } => Ok(shift_point(&base.eval(s)?, g, *delta)),
        }
    }

    /// Lift of the tangent angle at `s = 0`, continued along the isotopy from
    /// the zero section (where the angle is 0).
    pub fn anchor_angle(&self) -> Result<f64> {
        match self {
            CurveSource::Flow { spec, steps } => anchor_through(core::slice::from_ref(spec.as_ref()), *steps),
            CurveSource::Stages { stages, steps } => anchor_through(stages, *steps),
            CurveSource::Fold { g, twist } => {
                let d2 = g.eval([0.0, 0.0]).h[0][0];
                let mut angle = 0.0;
                let mut prev = 0.0f64;
                let n = 256;
                for k in 1..=n {
                    let tau = k as f64 / n as f64;
                    let cur = (-tau * d2).atan2(1.0);
                    angle += circ_diff(cur, prev);
                    prev = cur;
                }
                for k in 1..=n {
                    let tau = k as f64 / n as f64;
                    let cur = (-d2).atan2(1.0 - tau * twist * d2);
                    angle += circ_diff(cur, prev);
                    prev = cur;
                }
                Ok(angle)
            }
            CurveSource::Shifted { base, .. } => {
                let before = base.eval(0.0)?;
                let after = self.eval(0.0)?;
                let a0 = before.dp.atan2(before.dq);
                let a1 = after.dp.atan2(after.dq);
                Ok(base.anchor_angle()? + circ_diff(a1, a0))
            }
        }
    }
}

/// Applies the time-one map of `δ·g∘π` to a curve point.
fn shift_point(b: &CurvePoint, g: &BaseProfile, delta: f64) -> CurvePoint {
    let j = g.eval([b.q, 0.0]);
    CurvePoint { p: b.p - delta * j.g[0], h: b.h - delta * j.v, dp: b.dp - delta * j.h[0][0] * b.dq, ..*b }
}

/// Tangent angle at `s = 0` continued step by step through the stages.
fn anchor_through(stages: &[HamiltonianSpec], steps: usize) -> Result<f64> {
    let mut tangent = [[1.0, 0.0, 0.0, 0.0]];
    let mut z = [0.0; 4];
    let h = 1.0 / steps as f64;
    let mut angle = 0.0;
    let mut prev = 0.0f64;
    for spec in stages {
        for k in 0..steps {
            let (next, _) = midpoint_step(spec, k as f64 * h, h, &z, &mut tangent, 0)?;
            z = next;
            let cur = tangent[0][2].atan2(tangent[0][0]);
            angle += circ_diff(cur, prev);
            prev = cur;
        }
    }
    Ok(angle)
}

/// Flattens nested products into the sequence of flows they compose.
fn product_stages(spec: &HamiltonianSpec, out: &mut Vec<HamiltonianSpec>) {
    match &spec.node {
        Node::Product { first, second, .. } => {
            product_stages(second, out);
            product_stages(first, out);
        }
        _ => out.push(spec.clone()),
    }
}

/// Sampling and refinement controls for `time_one_curve`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveOptions {
    pub steps: usize,
    /// Maximum number of interval bisections.
    pub max_depth: u32,
    /// Largest tangent turn allowed between neighbouring samples (radians).
    pub max_turn: f64,
    /// Relative `|Q'|` threshold (vs. the median) marking fold neighbourhoods.
    pub caustic_ratio: f64,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self { steps: DEFAULT_STEPS, max_depth: 6, max_turn: 0.1, caustic_ratio: 1e-2 }
    }
}

/// Closed time-one curve `L = φ¹_H(o_N)` sampled in the parameter `s`.
#[derive(Debug, Clone)]
pub struct LagrangianCurve {
    pub source: CurveSource,
    pub points: Vec<CurvePoint>,
    pub anchor_angle: f64,
    /// `∮ P dQ`, zero for an exact Lagrangian.
    pub circulation: f64,
    /// No self-intersection found at sampling resolution.
    pub embedded: bool,
    pub initial_samples: usize,
}

impl LagrangianCurve {
    /// Point `i` with its lift continued past `s = 1` when `i ≥ len`.
    pub fn cyclic(&self, i: usize) -> CurvePoint {
        let n = self.points.len();
        let turns = (i / n) as f64;
        let mut p = self.points[i % n];
        p.s += turns;
        p.q += TAU * turns;
        p
    }

    /// Hermite interpolation of `(Q, P, h)` between samples `i` and `i+1`.
    pub fn interpolate(&self, i: usize, u: f64) -> CurvePoint {
        let a = self.cyclic(i);
        let b = self.cyclic(i + 1);
        segment_interp(&a, &b, u)
    }

    /// `max |P|` over the samples and the interpolant between them.
    pub fn max_abs_p(&self) -> f64 {
        let mut m = self.points.iter().fold(0.0f64, |m, p| m.max(p.p.abs()));
        for i in 0..self.points.len() {
            for u in [0.25, 0.5, 0.75] {
                m = m.max(self.interpolate(i, u).p.abs());
            }
        }
        m
    }

    /// Spread of the action values, used to scale tolerances.
    pub fn action_scale(&self) -> f64 {
        let (lo, hi) = self.points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p.h), h.max(p.h)));
        let mag = self.points.iter().fold(0.0f64, |m, p| m.max(p.h.abs()));
        (hi - lo).max(mag).max(1e-3)
    }

    /// Largest parameter gap between samples.
    pub fn max_gap(&self) -> f64 {
        let n = self.points.len();
        (0..n).map(|i| self.cyclic(i + 1).s - self.points[i].s).fold(0.0, f64::max)
    }

    /// The curve followed by the time-one map of `δ·g∘π`; used to make
    /// degenerate zero-section contact transverse.
    pub fn shifted(&self, g: &BaseProfile, delta: f64) -> Result<LagrangianCurve> {
        let source = CurveSource::Shifted { base: Box::new(self.source.clone()), g: g.clone(), delta };
        let points = self.points.iter().map(|p| shift_point(p, g, delta)).collect();
        let anchor_angle = source.anchor_angle()?;
        let mut curve = LagrangianCurve {
            source,
            points,
            anchor_angle,
            circulation: 0.0,
            embedded: true,
            initial_samples: self.initial_samples,
        };
        curve.circulation = circulation(&curve);
        curve.embedded = find_self_intersection(&curve).is_none();
        Ok(curve)
    }

    /// Re-evaluates the curve at `s` through its source.
    pub fn eval(&self, s: f64) -> Result<CurvePoint> {
        let turns = s.floor();
        let mut p = self.source.eval(s - turns)?;
        p.s += turns;
        p.q += TAU * turns;
        Ok(p)
    }
}

/// Hermite interpolation between two curve points; `u ∈ [0, 1]`.
pub fn segment_interp(a: &CurvePoint, b: &CurvePoint, u: f64) -> CurvePoint {
    let len = b.s - a.s;
    let hq = Hermite::new(a.q, b.q, a.dq, b.dq, len);
    let hp = Hermite::new(a.p, b.p, a.dp, b.dp, len);
    let hh = Hermite::new(a.h, b.h, a.dh(), b.dh(), len);
    CurvePoint {
        s: a.s + u * len,
        q: hq.eval(u),
        p: hp.eval(u),
        h: hh.eval(u),
        dq: hq.deriv(u) / len,
        dp: hp.deriv(u) / len,
    }
}

/// The time-one curve of `H` from `n ≥ 256` uniformly spaced base points,
/// refined near folds.
pub fn time_one_curve(spec: &HamiltonianSpec, n: usize) -> Result<LagrangianCurve> {
    if n < 256 {
        return Err(Error::Precondition(format!("need at least 256 curve samples, got {n}")));
    }
    time_one_curve_with(spec, n, CurveOptions::default())
}

pub fn time_one_curve_with(spec: &HamiltonianSpec, n: usize, opts: CurveOptions) -> Result<LagrangianCurve> {
    spec.validate()?;
    if spec.dim != 1 {
        return Err(Error::Unsupported("time-one curves are one-dimensional; use the 2-D sampler on T*T²".into()));
    }
    sample_curve(curve_source(spec, opts.steps), n, opts)
}

/// Curve source for a Hamiltonian; products are flowed factor by factor.
pub fn curve_source(spec: &HamiltonianSpec, steps: usize) -> CurveSource {
    if matches!(spec.node, Node::Product { .. }) {
        let mut stages = Vec::new();
        product_stages(spec, &mut stages);
        CurveSource::Stages { stages, steps }
    } else {
        CurveSource::Flow { spec: Box::new(spec.clone()), steps }
    }
}

/// Samples an arbitrary curve source on `n` uniform parameters and refines.
pub fn sample_curve(source: CurveSource, n: usize, opts: CurveOptions) -> Result<LagrangianCurve> {
    if n < 8 {
        return Err(Error::Precondition("need at least 8 curve samples".into()));
    }
    let params: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
    let mut points = collect(par_map(&params, |&s| source.eval(s)))?;
    let min_len = 1.0 / (n as f64 * (1u64 << opts.max_depth) as f64) * 1.0001;
    for _ in 0..opts.max_depth {
        let median = median_abs(points.iter().map(|p| p.dq));
        let m = points.len();
        let mut inserts = Vec::new();
        for i in 0..m {
            let a = points[i];
            let mut b = points[(i + 1) % m];
            if i + 1 == m {
                b.s += 1.0;
                b.q += TAU;
            }
            if b.s - a.s <= min_len {
                continue;
            }
            let fold = a.dq.signum() != b.dq.signum()
                || a.dq.abs() < opts.caustic_ratio * median
                || b.dq.abs() < opts.caustic_ratio * median;
            let turn = circ_diff(b.dp.atan2(b.dq), a.dp.atan2(a.dq)).abs() > opts.max_turn;
            if fold || turn {
                inserts.push(0.5 * (a.s + b.s));
            }
        }
        if inserts.is_empty() {
            break;
        }
        let fresh = collect(par_map(&inserts, |&s| source.eval(s - s.floor())))?;
        points.extend(fresh);
        points.sort_by(|x, y| x.s.total_cmp(&y.s));
        points.dedup_by(|x, y| (x.s - y.s).abs() < 1e-15);
        align_lifts(&mut points);
    }
    align_lifts(&mut points);
    let anchor_angle = source.anchor_angle()?;
    let mut curve =
        LagrangianCurve { source, points, anchor_angle, circulation: 0.0, embedded: true, initial_samples: n };
    curve.circulation = circulation(&curve);
    curve.embedded = find_self_intersection(&curve).is_none();
    Ok(curve)
}

fn collect(v: Vec<Result<CurvePoint>>) -> Result<Vec<CurvePoint>> {
    v.into_iter().collect()
}

/// Makes the lifted `Q` continuous in `s` starting from the first sample.
fn align_lifts(points: &mut [CurvePoint]) {
    for i in 1..points.len() {
        let prev = points[i - 1].q;
        let cur = points[i].q;
        let k = ((prev - cur) / TAU).round();
        // Jumps of a whole turn between neighbours come from wrapping only.
        if k != 0.0 && (cur + k * TAU - prev).abs() < PI {
            points[i].q = cur + k * TAU;
        }
    }
}

/// `∮ P dQ` by Simpson's rule on the Hermite interpolants.
pub fn circulation(curve: &LagrangianCurve) -> f64 {
    let n = curve.points.len();
    let mut total = 0.0;
    for i in 0..n {
        let a = curve.cyclic(i);
        let b = curve.cyclic(i + 1);
        let m = segment_interp(&a, &b, 0.5);
        total += (b.s - a.s) / 6.0 * (a.p * a.dq + 4.0 * m.p * m.dq + b.p * b.dq);
    }
    total
}

/// First pair of non-adjacent sample segments that cross in the annulus.
pub fn find_self_intersection(curve: &LagrangianCurve) -> Option<(usize, usize)> {
    let n = curve.points.len();
    let cells = 128usize;
    let width = TAU / cells as f64;
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); cells];
    for i in 0..n {
        let a = curve.cyclic(i);
        let b = curve.cyclic(i + 1);
        let lo = a.q.min(b.q);
        let hi = a.q.max(b.q);
        let first = (lo / width).floor() as i64;
        let last = (hi / width).floor() as i64;
        for c in first..=last.min(first + cells as i64) {
            buckets[c.rem_euclid(cells as i64) as usize].push(i);
        }
    }
    for bucket in &buckets {
        for (x, &i) in bucket.iter().enumerate() {
            for &j in &bucket[x + 1..] {
                let gap = i.abs_diff(j);
                if gap <= 1 || gap == n - 1 {
                    continue;
                }
                if segments_cross(curve, i, j) {
                    return Some((i.min(j), i.max(j)));
                }
            }
        }
    }
    None
}

fn segments_cross(curve: &LagrangianCurve, i: usize, j: usize) -> bool {
    let a0 = curve.cyclic(i);
    let a1 = curve.cyclic(i + 1);
    let b0 = curve.cyclic(j);
    let b1 = curve.cyclic(j + 1);
    let shift = (((a0.q + a1.q) - (b0.q + b1.q)) / (2.0 * TAU)).round() * TAU;
    for k in [-1.0, 0.0, 1.0] {
        let d = shift + k * TAU;
        let p = [(a0.q, a0.p), (a1.q, a1.p), (b0.q + d, b0.p), (b1.q + d, b1.p)];
        if proper_intersection(p[0], p[1], p[2], p[3]) {
            return true;
        }
    }
    false
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

/// Strict crossing of segments `ab` and `cd`.
pub fn proper_intersection(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// Hofer length `∫₀¹ osc(H_t) dt`, with the oscillation taken over the
/// support disc bundle together with the asymptotic constant. Grid extrema
/// are polished by projected gradient steps.
pub fn hofer_norm(spec: &HamiltonianSpec, t_samples: usize, x_samples: usize) -> Result<f64> {
    if t_samples < 64 || x_samples < 64 {
        return Err(Error::Precondition("Hofer norm needs at least 64 samples per axis".into()));
    }
    spec.validate()?;
    let r = spec.support_radius();
    let per_axis = if spec.dim == 1 { x_samples } else { (x_samples / 4).max(16) };
    let grid: Vec<State> = if spec.dim == 1 {
        let mut g = Vec::with_capacity(per_axis * per_axis);
        for i in 0..per_axis {
            for j in 0..per_axis {
                let q = TAU * i as f64 / per_axis as f64;
                let p = -r + 2.0 * r * j as f64 / (per_axis - 1) as f64;
                g.push([q, 0.0, p, 0.0]);
            }
        }
        g
    } else {
        let mut g = Vec::new();
        let pa = per_axis / 2;
        for i in 0..per_axis {
            for j in 0..per_axis {
                for k in 0..pa {
                    for l in 0..pa {
                        let q1 = TAU * i as f64 / per_axis as f64;
                        let q2 = TAU * j as f64 / per_axis as f64;
                        let p1 = -r + 2.0 * r * k as f64 / (pa - 1) as f64;
                        let p2 = -r + 2.0 * r * l as f64 / (pa - 1) as f64;
                        g.push([q1, q2, p1, p2]);
                    }
                }
            }
        }
        g
    };
    let times: Vec<f64> = (0..t_samples).map(|k| (k as f64 + 0.5) / t_samples as f64).collect();
    let oscs = par_map(&times, |&t| -> Result<f64> {
        let inf = spec.value_at_infinity(t);
        let mut vals: Vec<(f64, usize)> = Vec::with_capacity(grid.len());
        for (idx, z) in grid.iter().enumerate() {
            vals.push((spec.jet(t, z, false)?.value, idx));
        }
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut lo = inf.min(vals[0].0);
        let mut hi = inf.max(vals[vals.len() - 1].0);
        for &(_, idx) in vals.iter().take(3) {
            lo = lo.min(polish(spec, t, grid[idx], -1.0, r)?);
        }
        for &(_, idx) in vals.iter().rev().take(3) {
            hi = hi.max(polish(spec, t, grid[idx], 1.0, r)?);
        }
        Ok(hi - lo)
    });
    let mut total = 0.0;
    for o in oscs {
        total += o?;
    }
    Ok(total / t_samples as f64)
}

/// Projected gradient ascent of `sign · H_t` inside `|p_i| ≤ r`.
fn polish(spec: &HamiltonianSpec, t: f64, start: State, sign: f64, r: f64) -> Result<f64> {
    let active = active_indices(spec.dim);
    let mut z = start;
    let mut val = sign * spec.jet(t, &z, false)?.value;
    let mut step = 0.1;
    for _ in 0..60 {
        let g = spec.jet(t, &z, false)?.grad;
        let norm = active.iter().map(|&a| g[a] * g[a]).sum::<f64>().sqrt();
        if norm < 1e-14 {
            break;
        }
        let mut improved = false;
        while step > 1e-12 {
            let mut cand = z;
            for &a in active {
                cand[a] += sign * step * g[a] / norm;
                if a >= 2 {
                    cand[a] = cand[a].clamp(-r, r);
                }
            }
            let v = sign * spec.jet(t, &cand, false)?.value;
            if v > val {
                z = cand;
                val = v;
                improved = true;
                step *= 1.5;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(sign * val)
}

/// `max_x max(d(φ¹x, x), d(φ⁻¹x, x))` over `n ≥ 256` points of the zero
/// section.
pub fn osc_c0(spec: &HamiltonianSpec, n: usize) -> Result<f64> {
    osc_c0_with(spec, n, DEFAULT_STEPS)
}

pub fn osc_c0_with(spec: &HamiltonianSpec, n: usize, steps: usize) -> Result<f64> {
    if n < 256 {
        return Err(Error::Precondition(format!("need at least 256 base samples, got {n}")));
    }
    spec.validate()?;
    let metric = Metric::default();
    let pts: Vec<State> = if spec.dim == 1 {
        (0..n).map(|i| [TAU * i as f64 / n as f64, 0.0, 0.0, 0.0]).collect()
    } else {
        let m = (n as f64).sqrt().ceil() as usize;
        let mut v = Vec::new();
        for i in 0..m {
            for j in 0..m {
                v.push([TAU * i as f64 / m as f64, TAU * j as f64 / m as f64, 0.0, 0.0]);
            }
        }
        v
    };
    let d = par_map(&pts, |z| -> Result<f64> {
        let fwd = propagate(spec, 0.0, 1.0, z, steps, false)?.state;
        let bwd = propagate(spec, 1.0, 0.0, z, steps, false)?.state;
        Ok(metric.state_distance(&fwd, z).max(metric.state_distance(&bwd, z)))
    });
    let mut best = 0.0f64;
    for v in d {
        best = best.max(v?);
    }
    Ok(best)
}

/// Error-tagged helper for callers that need the pre-image of a point under
/// the time-one map.
pub fn inverse_time_one(spec: &HamiltonianSpec, z: &State, steps: usize) -> Result<State> {
    let out = propagate(spec, 1.0, 0.0, z, steps, false)?;
    if out.state.iter().all(|v| v.is_finite()) {
        Ok(out.state)
    } else {
        Err(Error::Numerical("inverse flow produced non-finite state".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::{
        compose_product, transform, Chi, FiberProfile, Support, Term, TimeProfile, Transform,
    };

    fn cos_lift(eps: f64) -> HamiltonianSpec {
        HamiltonianSpec::base_lift(1, BaseProfile::fourier1(&[(1, eps)], &[]), TimeProfile::Constant)
    }

    #[test]
    fn zero_and_constant_trajectories() {
        let q0 = BasePoint::circle(1.1);
        let tr = integrate_trajectory(&HamiltonianSpec::zero(1), &q0, 32).unwrap();
        assert!(tr.action.iter().all(|a| *a == 0.0));
        assert_eq!(tr.end_state(), [1.1, 0.0, 0.0, 0.0]);
        let c = HamiltonianSpec::time_constant(1, 2.5, TimeProfile::Smoothstep);
        let tr = integrate_trajectory(&c, &q0, 64).unwrap();
        assert_eq!(tr.end_state(), [1.1, 0.0, 0.0, 0.0]);
        // midpoint quadrature of 6t(1−t) carries an O(h²) error
        assert!((tr.end_action() + 2.5).abs() < 1e-3);
        assert!(integrate_trajectory(&c, &q0, 8).is_err());
    }

    #[test]
    fn base_lift_is_vertical() {
        let eps = 0.4;
        let h = cos_lift(eps);
        for k in 0..10 {
            let q = 0.3 + k as f64 * 0.6;
            let tr = integrate_trajectory(&h, &BasePoint::circle(q), 16).unwrap();
            for (t, x) in &tr.samples {
                assert!((x.base.coords()[0] - crate::math::wrap(q)).abs() < 1e-13);
                assert!((x.momentum[0] - t * eps * q.sin()).abs() < 1e-13);
            }
            assert!((tr.end_action() + eps * q.cos()).abs() < 1e-13);
        }
    }

    #[test]
    fn fold_family_matches_closed_form() {
        let g = BaseProfile::fourier1(&[(1, 0.3), (2, 0.3)], &[(1, 0.05)]);
        let h = HamiltonianSpec::fold(1, g.clone(), -1.0);
        let oracle = CurveSource::Fold { g, twist: -1.0 };
        let flow = CurveSource::Flow { spec: Box::new(h), steps: 512 };
        for k in 0..25 {
            let s = (k as f64 + 0.37) / 25.0;
            let a = flow.eval(s).unwrap();
            let b = oracle.eval(s).unwrap();
            assert!((a.q - b.q).abs() < 1e-5, "{a:?} {b:?}");
            assert!((a.p - b.p).abs() < 1e-5);
            assert!((a.h - b.h).abs() < 1e-5);
            assert!((a.dq - b.dq).abs() < 1e-4);
            assert!((a.dp - b.dp).abs() < 1e-4);
        }
    }

    #[test]
    fn second_order_convergence() {
        let g = BaseProfile::fourier1(&[(1, 0.3), (2, 0.3)], &[(1, 0.05)]);
        let h = HamiltonianSpec::fold(1, g.clone(), -1.0);
        let oracle = CurveSource::Fold { g, twist: -1.0 };
        for s in [0.1, 0.43, 0.8] {
            let exact = oracle.eval(s).unwrap().h;
            let q0 = BasePoint::circle(TAU * s);
            let e1 = (integrate_trajectory(&h, &q0, 32).unwrap().end_action() - exact).abs();
            let e2 = (integrate_trajectory(&h, &q0, 64).unwrap().end_action() - exact).abs();
            assert!(e1 / e2 >= 3.5, "ratio {}", e1 / e2);
        }
    }

    fn pendulum() -> HamiltonianSpec {
        HamiltonianSpec::from_terms(
            1,
            Support::default(),
            vec![
                Term {
                    scale: 0.5,
                    time: TimeProfile::Constant,
                    base: BaseProfile::fourier1(&[(1, 1.0)], &[]),
                    fiber: FiberProfile::Cutoff,
                },
                Term {
                    scale: 1.0,
                    time: TimeProfile::Constant,
                    base: BaseProfile::One,
                    fiber: FiberProfile::Quadratic { twist: 1.0 },
                },
            ],
        )
    }

    #[test]
    fn richardson_beats_plain_steps_on_coupled_flow() {
        let h = pendulum();
        let q0 = BasePoint::circle(0.9);
        let reference = richardson_action(&h, &q0, 4096).unwrap();
        let e1 = (integrate_trajectory(&h, &q0, 32).unwrap().end_action() - reference).abs();
        let e2 = (integrate_trajectory(&h, &q0, 64).unwrap().end_action() - reference).abs();
        assert!(e1 / e2 >= 3.5, "ratio {}", e1 / e2);
        let rich = richardson_action(&h, &q0, 32).unwrap();
        assert!((rich - reference).abs() < 0.1 * e2, "{rich} {reference} {e2}");
    }

    #[test]
    fn energy_is_conserved_for_autonomous_flows() {
        let h = pendulum();
        let tr = integrate_trajectory(&h, &BasePoint::circle(0.7), 200).unwrap();
        let e0 = h.jet(0.0, &tr.states[0], false).unwrap().value;
        for z in &tr.states {
            assert!((h.jet(0.0, z, false).unwrap().value - e0).abs() < 1e-4);
        }
    }

    #[test]
    fn time_one_curves() {
        let zero = time_one_curve(&HamiltonianSpec::zero(1), 256).unwrap();
        assert!(zero.points.iter().all(|p| p.p == 0.0 && p.h == 0.0));
        let eps = 0.3;
        let c = time_one_curve(&cos_lift(eps), 256).unwrap();
        for p in &c.points {
            let q = TAU * p.s;
            assert!((p.p - eps * q.sin()).abs() < 1e-12);
            assert!((p.h + eps * q.cos()).abs() < 1e-12);
        }
        assert!(c.embedded);
        assert!(c.circulation.abs() < 1e-10);
        assert!(time_one_curve(&cos_lift(eps), 100).is_err());
    }

    #[test]
    fn exactness_along_curve() {
        let h = crate::phase_space::figure1();
        let c = time_one_curve(&h, 256).unwrap();
        assert!(c.embedded);
        assert!(c.circulation.abs() < 1e-6, "{}", c.circulation);
        // finite-difference dh/ds against P dQ/ds
        for i in 0..c.points.len() - 1 {
            let a = c.points[i];
            let b = c.points[i + 1];
            let fd = (b.h - a.h) / (b.s - a.s);
            let mid = segment_interp(&a, &b, 0.5);
            assert!((fd - mid.p * mid.dq).abs() < 1e-3 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn hofer_norm_examples() {
        assert_eq!(hofer_norm(&HamiltonianSpec::zero(1), 64, 64).unwrap(), 0.0);
        let c = HamiltonianSpec::time_constant(1, 3.0, TimeProfile::Smoothstep);
        assert!(hofer_norm(&c, 64, 64).unwrap().abs() < 1e-14);
        let eps = 0.7;
        let n = hofer_norm(&cos_lift(eps), 64, 64).unwrap();
        assert!((n - 2.0 * eps).abs() < 1e-10, "{n}");
    }

    #[test]
    fn osc_examples() {
        assert_eq!(osc_c0(&HamiltonianSpec::zero(1), 256).unwrap(), 0.0);
        let eps = 0.2;
        let o = osc_c0(&cos_lift(eps), 256).unwrap();
        assert!((o - eps).abs() < 1e-4, "{o}");
    }

    #[test]
    fn product_and_inverse_nodes() {
        let f = cos_lift(0.3);
        let g = HamiltonianSpec::base_lift(1, BaseProfile::fourier1(&[], &[(2, 0.2)]), TimeProfile::Constant);
        let fg = compose_product(&f, &g).unwrap();
        let sum = HamiltonianSpec::base_lift(
            1,
            BaseProfile::fourier1(&[(1, 0.3)], &[(2, 0.2)]),
            TimeProfile::Constant,
        );
        for s in [0.05, 0.3, 0.71] {
            let a = CurveSource::Flow { spec: Box::new(fg.clone()), steps: 32 }.eval(s).unwrap();
            let b = CurveSource::Flow { spec: Box::new(sum.clone()), steps: 32 }.eval(s).unwrap();
            assert!((a.q - b.q).abs() < 1e-9 && (a.p - b.p).abs() < 1e-9 && (a.h - b.h).abs() < 1e-9);
        }
        let h = HamiltonianSpec::fold(1, BaseProfile::fourier1(&[(1, 0.3)], &[]), 0.8);
        let zero = HamiltonianSpec::zero(1);
        for s in [0.2, 0.6] {
            let plain = CurveSource::Flow { spec: Box::new(h.clone()), steps: 64 }.eval(s).unwrap();
            for composed in [compose_product(&h, &zero).unwrap(), compose_product(&zero, &h).unwrap()] {
                let c = CurveSource::Flow { spec: Box::new(composed), steps: 64 }.eval(s).unwrap();
                assert!((c.q - plain.q).abs() < 1e-6 && (c.p - plain.p).abs() < 1e-6, "{c:?} {plain:?}");
                assert!((c.h - plain.h).abs() < 1e-6);
            }
        }
        // inverse and time reversal both generate (φ¹)⁻¹
        let inv = transform(&h, Transform::Inverse).unwrap();
        let rev = transform(&h, Transform::TimeReverse).unwrap();
        let z = [1.0, 0.0, 0.2, 0.0];
        let a = propagate(&inv, 0.0, 1.0, &z, 64, false).unwrap().state;
        let b = propagate(&rev, 0.0, 1.0, &z, 64, false).unwrap().state;
        assert!((a[0] - b[0]).abs() < 1e-4 && (a[2] - b[2]).abs() < 1e-4, "{a:?} {b:?}");
        let back = propagate(&h, 0.0, 1.0, &a, 256, false).unwrap().state;
        assert!((back[0] - z[0]).abs() < 1e-4 && (back[2] - z[2]).abs() < 1e-4);
        let _ = Chi::smoothstep();
    }

    /// Sequential flows against the lazily evaluated product Hamiltonian:
    /// same endpoint, and `A_{H#F}(x) = A_F(x) + A_H(φ¹_F x)`.
    #[test]
    fn product_stages_match_lazy_product() {
        let h = HamiltonianSpec::fold(1, BaseProfile::fourier1(&[(1, 0.2)], &[(2, 0.1)]), 0.6);
        let f = HamiltonianSpec::fiberwise(1, -0.5, TimeProfile::Smoothstep);
        let hf = compose_product(&h, &f).unwrap();
        let staged = curve_source(&hf, 128);
        assert!(matches!(staged, CurveSource::Stages { .. }));
        let lazy = CurveSource::Flow { spec: Box::new(hf), steps: 128 };
        for s in [0.13, 0.5, 0.82] {
            let a = staged.eval(s).unwrap();
            let b = lazy.eval(s).unwrap();
            assert!((a.q - b.q).abs() < 1e-4 && (a.p - b.p).abs() < 1e-4, "{a:?} {b:?}");
            assert!((a.h - b.h).abs() < 1e-4, "{a:?} {b:?}");
        }
        assert!((staged.anchor_angle().unwrap() - lazy.anchor_angle().unwrap()).abs() < 1e-3);
    }

    #[test]
    fn reflect_and_reverse_involutions() {
        let h = crate::phase_space::figure1();
        let rr = transform(&transform(&h, Transform::Reflect).unwrap(), Transform::Reflect).unwrap();
        let tt = transform(&transform(&h, Transform::TimeReverse).unwrap(), Transform::TimeReverse).unwrap();
        for s in [0.0, 0.25, 0.5, 0.9] {
            let base = CurveSource::Flow { spec: Box::new(h.clone()), steps: 128 }.eval(s).unwrap();
            for other in [&rr, &tt] {
                let c = CurveSource::Flow { spec: Box::new(other.clone()), steps: 128 }.eval(s).unwrap();
                assert!((c.q - base.q).abs() < 1e-12 && (c.p - base.p).abs() < 1e-12 && (c.h - base.h).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shifted_source_composes_base_lift() {
        let g = BaseProfile::fourier1(&[(1, 1.0)], &[]);
        let h = cos_lift(0.2);
        let shifted = CurveSource::Shifted {
            base: Box::new(CurveSource::Flow { spec: Box::new(h), steps: 16 }),
            g: g.clone(),
            delta: 0.1,
        };
        let direct = CurveSource::Flow { spec: Box::new(cos_lift(0.3)), steps: 16 };
        for s in [0.1, 0.5, 0.77] {
            let a = shifted.eval(s).unwrap();
            let b = direct.eval(s).unwrap();
            assert!((a.p - b.p).abs() < 1e-13 && (a.h - b.h).abs() < 1e-13 && (a.dp - b.dp).abs() < 1e-12);
        }
    }

    #[test]
    fn anchor_angles_agree_between_flow_and_closed_form() {
        let g = crate::phase_space::figure1_profile();
        let flow = CurveSource::Flow { spec: Box::new(crate::phase_space::figure1()), steps: 256 };
        let oracle = CurveSource::Fold { g, twist: crate::phase_space::FIGURE1_TWIST };
        let a = flow.anchor_angle().unwrap();
        let b = oracle.anchor_angle().unwrap();
        assert!((a - b).abs() < 1e-3, "{a} {b}");
        // the folded point at s = 0 has its tangent turned past the vertical
        assert!(a > PI / 2.0 && a < PI);
    }
}
