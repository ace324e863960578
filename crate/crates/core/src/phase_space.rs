//! Phase-space model of `T*S¹` and `T*T²` with the flat metric, Hamiltonian
//! specifications and the algebra of Hamiltonian transformations.
//!
//! Conventions: `ω = dq ∧ dp`, so `q̇ = ∂H/∂p`, `ṗ = −∂H/∂q`. States are packed
//! as `[q₁, q₂, p₁, p₂]`; in dimension one the second components are inert.

pub mod profile;

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::flow;
use crate::math::{circ_diff, wrap};
pub use profile::{BaseProfile, Chi, FiberProfile, Mode, Tabulated, TimeProfile};

/// Packed phase-space state `[q₁, q₂, p₁, p₂]` (angles unwrapped).
pub type State = [f64; 4];

/// Point of the base `N = S¹` or `T²`, angles in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BasePoint {
    coords: [f64; 2],
    dim: usize,
}

impl BasePoint {
    pub fn circle(q: f64) -> Self {
        Self { coords: [wrap(q), 0.0], dim: 1 }
    }

    pub fn torus(q1: f64, q2: f64) -> Self {
        Self { coords: [wrap(q1), wrap(q2)], dim: 2 }
    }

    pub fn coords(&self) -> [f64; 2] {
        self.coords
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Covector `(q, p)` over a base point.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PhasePoint {
    pub base: BasePoint,
    pub momentum: [f64; 2],
}

impl PhasePoint {
    pub fn circle(q: f64, p: f64) -> Self {
        Self { base: BasePoint::circle(q), momentum: [p, 0.0] }
    }

    pub fn torus(q: [f64; 2], p: [f64; 2]) -> Self {
        Self { base: BasePoint::torus(q[0], q[1]), momentum: p }
    }

    pub fn state(&self) -> State {
        let q = self.base.coords;
        [q[0], q[1], self.momentum[0], self.momentum[1]]
    }

    pub fn from_state(z: &State, dim: usize) -> Self {
        if dim == 1 {
            Self::circle(z[0], z[2])
        } else {
            Self::torus([z[0], z[1]], [z[2], z[3]])
        }
    }

    pub fn is_finite(&self) -> bool {
        self.momentum.iter().all(|p| p.is_finite())
    }
}

/// Flat product metric on `T*N`. The constant `r` with `d(o_q, x) ≥ |p(x)|`
/// inside the radius-`r` disc bundle is `+∞` for the flat model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metric {
    pub r: f64,
}

impl Default for Metric {
    fn default() -> Self {
        Self { r: f64::INFINITY }
    }
}

impl Metric {
    pub fn base_distance(&self, a: &BasePoint, b: &BasePoint) -> f64 {
        let d0 = circ_diff(a.coords[0], b.coords[0]);
        let d1 = circ_diff(a.coords[1], b.coords[1]);
        (d0 * d0 + d1 * d1).sqrt()
    }

    pub fn distance(&self, x: &PhasePoint, y: &PhasePoint) -> f64 {
        let b = self.base_distance(&x.base, &y.base);
        let dp0 = x.momentum[0] - y.momentum[0];
        let dp1 = x.momentum[1] - y.momentum[1];
        (b * b + dp0 * dp0 + dp1 * dp1).sqrt()
    }

    /// Distance between packed states (angles compared on the torus).
    pub fn state_distance(&self, x: &State, y: &State) -> f64 {
        let d0 = circ_diff(x[0], y[0]);
        let d1 = circ_diff(x[1], y[1]);
        let e0 = x[2] - y[2];
        let e1 = x[3] - y[3];
        (d0 * d0 + d1 * d1 + e0 * e0 + e1 * e1).sqrt()
    }

    /// Distance from the zero covector at `q` to `x`.
    pub fn to_zero_covector(&self, q: &BasePoint, x: &PhasePoint) -> f64 {
        self.distance(&PhasePoint { base: *q, momentum: [0.0, 0.0] }, x)
    }
}

/// Cutoff radii of the disc bundle: the vector field vanishes for
/// `|p| ≥ outer`; fiber profiles are unmodified inside `inner`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Support {
    pub inner: f64,
    pub outer: f64,
}

impl Default for Support {
    fn default() -> Self {
        Self { inner: 2.0, outer: 3.0 }
    }
}

/// Separable summand `scale · w(t) · A(q) · B(|p|)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Term {
    pub scale: f64,
    pub time: TimeProfile,
    pub base: BaseProfile,
    pub fiber: FiberProfile,
}

/// Node of a Hamiltonian expression tree.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "op", rename_all = "snake_case"))]
pub enum Node {
    Terms { terms: Vec<Term> },
    /// `−H(t, q, −p)`.
    Reflect { inner: Box<HamiltonianSpec> },
    /// `−H(1 − t, x)`.
    TimeReverse { inner: Box<HamiltonianSpec> },
    /// `−H(t, φᵗ_H(x))`, generating `(φᵗ_H)⁻¹`; evaluated by forward flow.
    Inverse { inner: Box<HamiltonianSpec>, steps: usize },
    /// `χ'(t) H(χ(t), x)`.
    Reparametrize { inner: Box<HamiltonianSpec>, chi: Chi },
    /// `H` on `[0, ½]` at double speed, then `F` on `[½, 1]`.
    Concat { first: Box<HamiltonianSpec>, second: Box<HamiltonianSpec> },
    /// `Σ cᵢ Hᵢ`.
    Combination { parts: Vec<(f64, HamiltonianSpec)> },
    /// `H(t, x) + F(t, (φᵗ_H)⁻¹ x)`, generating `φᵗ_H ∘ φᵗ_F`; evaluated by
    /// backward flow of `H`.
    Product { first: Box<HamiltonianSpec>, second: Box<HamiltonianSpec>, steps: usize },
}

/// Evaluable, asymptotically constant time-dependent Hamiltonian on
/// `T*S¹` (`dim = 1`) or `T*T²` (`dim = 2`).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HamiltonianSpec {
    pub dim: usize,
    pub support: Support,
    pub node: Node,
}

/// Coarse classification of a spec.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Zero,
    TimeConstant,
    BaseLift,
    Fiberwise,
    Fold,
    Tabulated,
    Composition,
}

/// Which transformation `transform` applies.
#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    Reflect,
    TimeReverse,
    Inverse,
    Reparametrize(Chi),
}

/// `H(t, x)` with first and second derivatives in packed coordinates.
#[derive(Debug, Clone, Copy, Default)]
pub struct Jet {
    pub value: f64,
    pub grad: [f64; 4],
    pub hess: [[f64; 4]; 4],
}

/// Result of `eval_hamiltonian`: value and partials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub dq: [f64; 2],
    pub dp: [f64; 2],
}

/// Inner step count used by lazily evaluated nodes.
pub const LAZY_STEPS: usize = 64;

impl HamiltonianSpec {
    pub fn zero(dim: usize) -> Self {
        Self { dim, support: Support::default(), node: Node::Terms { terms: vec![] } }
    }

    pub fn from_terms(dim: usize, support: Support, terms: Vec<Term>) -> Self {
        Self { dim, support, node: Node::Terms { terms } }
    }

    /// `H(t, x) = value · w(t)`.
    pub fn time_constant(dim: usize, value: f64, time: TimeProfile) -> Self {
        Self::from_terms(
            dim,
            Support::default(),
            vec![Term { scale: value, time, base: BaseProfile::One, fiber: FiberProfile::One }],
        )
    }

    /// `f ∘ π` with the fiber cutoff, weighted by `w(t)`.
    pub fn base_lift(dim: usize, f: BaseProfile, time: TimeProfile) -> Self {
        Self::from_terms(dim, Support::default(), vec![Term { scale: 1.0, time, base: f, fiber: FiberProfile::Cutoff }])
    }

    /// `twist · |p|²/2` with its compact modification, weighted by `w(t)`.
    pub fn fiberwise(dim: usize, twist: f64, time: TimeProfile) -> Self {
        Self::from_terms(
            dim,
            Support::default(),
            vec![Term { scale: 1.0, time, base: BaseProfile::One, fiber: FiberProfile::Quadratic { twist } }],
        )
    }

    /// Two-stage fold family: the base lift of `g` on `[0, ½]` followed by the
    /// fiberwise shear `twist · |p|²/2` on `[½, 1]`. The time-one image of the
    /// zero section is `Q = q − twist·g'(q)`, `P = −g'(q)`, with action
    /// `−g(q) + twist·|P|²/2` (while `|P|` stays below `support.inner`).
    pub fn fold(dim: usize, g: BaseProfile, twist: f64) -> Self {
        Self::from_terms(
            dim,
            Support::default(),
            vec![
                Term {
                    scale: 1.0,
                    time: TimeProfile::Bump { start: 0.0, end: 0.5 },
                    base: g,
                    fiber: FiberProfile::Cutoff,
                },
                Term {
                    scale: 1.0,
                    time: TimeProfile::Bump { start: 0.5, end: 1.0 },
                    base: BaseProfile::One,
                    fiber: FiberProfile::Quadratic { twist },
                },
            ],
        )
    }

    /// Autonomous base lift of a tabulated periodic profile.
    pub fn tabulated(values: Vec<f64>) -> Self {
        Self::base_lift(1, BaseProfile::tabulated(values), TimeProfile::Constant)
    }

    pub fn with_support(mut self, support: Support) -> Self {
        self.support = support;
        self
    }

    /// Multiplies the Hamiltonian by `c`.
    pub fn scaled(self, c: f64) -> Self {
        match self.node {
            Node::Terms { mut terms } => {
                for t in &mut terms {
                    t.scale *= c;
                }
                Self { dim: self.dim, support: self.support, node: Node::Terms { terms } }
            }
            _ => combination(vec![(c, self)]).expect("single part combination"),
        }
    }

    pub fn kind(&self) -> Kind {
        match &self.node {
            Node::Terms { terms } => {
                let live: Vec<&Term> = terms.iter().filter(|t| t.scale != 0.0).collect();
                if live.is_empty() {
                    return Kind::Zero;
                }
                if live.iter().all(|t| t.fiber == FiberProfile::One) {
                    return Kind::TimeConstant;
                }
                if live.len() == 2
                    && matches!(live[0].fiber, FiberProfile::Cutoff)
                    && matches!(live[1].fiber, FiberProfile::Quadratic { .. })
                {
                    return Kind::Fold;
                }
                if live.iter().all(|t| matches!(t.fiber, FiberProfile::Cutoff)) {
                    if live.iter().any(|t| matches!(t.base, BaseProfile::Tabulated(_))) {
                        return Kind::Tabulated;
                    }
                    return Kind::BaseLift;
                }
                if live.iter().all(|t| t.base == BaseProfile::One) {
                    return Kind::Fiberwise;
                }
                Kind::Composition
            }
            _ => Kind::Composition,
        }
    }

    /// Checks dimensions, profile admissibility and asymptotic constancy.
    pub fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::Structural(format!("dimension {} not supported", self.dim)));
        }
        if !(self.support.inner > 0.0 && self.support.outer > self.support.inner) {
            return Err(Error::Structural("support radii must satisfy 0 < inner < outer".into()));
        }
        let child = |h: &HamiltonianSpec| -> Result<()> {
            if h.dim != self.dim {
                return Err(Error::Structural("dimension mismatch in composition".into()));
            }
            h.validate()
        };
        match &self.node {
            Node::Terms { terms } => {
                for t in terms {
                    t.time.validate()?;
                    t.base.validate(self.dim)?;
                    let base_free = t.base == BaseProfile::One;
                    match t.fiber {
                        FiberProfile::One | FiberProfile::Quadratic { .. } if !base_free => {
                            return Err(Error::Structural(
                                "a q-dependent term needs a fiber profile that is constant at infinity".into(),
                            ));
                        }
                        _ => {}
                    }
                }
                Ok(())
            }
            Node::Reflect { inner } | Node::TimeReverse { inner } => child(inner),
            Node::Inverse { inner, steps } => {
                if *steps < 4 {
                    return Err(Error::Structural("lazy node needs at least 4 steps".into()));
                }
                child(inner)
            }
            Node::Reparametrize { inner, chi } => {
                chi.validate()?;
                child(inner)
            }
            Node::Concat { first, second } => {
                child(first)?;
                child(second)
            }
            Node::Product { first, second, steps } => {
                if *steps < 4 {
                    return Err(Error::Structural("lazy node needs at least 4 steps".into()));
                }
                child(first)?;
                child(second)
            }
            Node::Combination { parts } => {
                if parts.is_empty() {
                    return Err(Error::Structural("empty combination".into()));
                }
                parts.iter().try_for_each(|(_, h)| child(h))
            }
        }
    }

    /// Largest fiber radius outside of which the vector field vanishes.
    pub fn support_radius(&self) -> f64 {
        let own = self.support.outer;
        match &self.node {
            Node::Terms { .. } => own,
            Node::Reflect { inner }
            | Node::TimeReverse { inner }
            | Node::Inverse { inner, .. }
            | Node::Reparametrize { inner, .. } => inner.support_radius(),
            Node::Concat { first, second } | Node::Product { first, second, .. } => {
                first.support_radius().max(second.support_radius())
            }
            Node::Combination { parts } => parts.iter().map(|(_, h)| h.support_radius()).fold(0.0, f64::max),
        }
    }

    /// Time weight vanishes at `t = 0` and `t = 1`.
    pub fn is_boundary_flat(&self) -> bool {
        match &self.node {
            Node::Terms { terms } => terms.iter().all(|t| t.scale == 0.0 || t.time.is_boundary_flat()),
            Node::Reflect { inner } | Node::TimeReverse { inner } | Node::Inverse { inner, .. } => {
                inner.is_boundary_flat()
            }
            Node::Reparametrize { inner, chi } => chi.is_boundary_flat() || inner.is_boundary_flat(),
            Node::Concat { first, second } | Node::Product { first, second, .. } => {
                first.is_boundary_flat() && second.is_boundary_flat()
            }
            Node::Combination { parts } => parts.iter().all(|(_, h)| h.is_boundary_flat()),
        }
    }

    /// Independent of `t`.
    pub fn is_autonomous(&self) -> bool {
        match &self.node {
            Node::Terms { terms } => terms.iter().all(|t| t.scale == 0.0 || t.time.is_constant()),
            Node::Reflect { inner } | Node::TimeReverse { inner } | Node::Inverse { inner, .. } => {
                inner.is_autonomous()
            }
            Node::Reparametrize { inner, chi } => inner.is_autonomous() && *chi == Chi::identity(),
            Node::Concat { .. } => false,
            Node::Product { first, second, .. } => first.is_autonomous() && second.is_autonomous(),
            Node::Combination { parts } => parts.iter().all(|(_, h)| h.is_autonomous()),
        }
    }

    /// Whether evaluation needs to integrate flows.
    pub fn is_lazy(&self) -> bool {
        match &self.node {
            Node::Terms { .. } => false,
            Node::Inverse { .. } | Node::Product { .. } => true,
            Node::Reflect { inner } | Node::TimeReverse { inner } | Node::Reparametrize { inner, .. } => {
                inner.is_lazy()
            }
            Node::Concat { first, second } => first.is_lazy() || second.is_lazy(),
            Node::Combination { parts } => parts.iter().any(|(_, h)| h.is_lazy()),
        }
    }

    /// The asymptotic constant `c_∞(t) = H(t, x)` for `|p| ≥ R`. Stored and
    /// exposed; never subtracted.
    pub fn value_at_infinity(&self, t: f64) -> f64 {
        match &self.node {
            Node::Terms { terms } => terms
                .iter()
                .map(|term| {
                    term.scale
                        * term.time.weight(t)
                        * term.base.eval([0.0, 0.0]).v
                        * term.fiber.at_infinity(self.support.inner, self.support.outer)
                })
                .sum(),
            Node::Reflect { inner } | Node::Inverse { inner, .. } => -inner.value_at_infinity(t),
            Node::TimeReverse { inner } => -inner.value_at_infinity(1.0 - t),
            Node::Reparametrize { inner, chi } => {
                let (c, dc) = chi.eval(t);
                dc * inner.value_at_infinity(c)
            }
            Node::Concat { first, second } => {
                if t <= 0.5 {
                    2.0 * first.value_at_infinity(2.0 * t)
                } else {
                    2.0 * second.value_at_infinity(2.0 * t - 1.0)
                }
            }
            Node::Combination { parts } => parts.iter().map(|(c, h)| c * h.value_at_infinity(t)).sum(),
            Node::Product { first, second, .. } => first.value_at_infinity(t) + second.value_at_infinity(t),
        }
    }

    /// Value, gradient and (optionally) Hessian at packed state `z`.
    pub fn jet(&self, t: f64, z: &State, hessian: bool) -> Result<Jet> {
        match &self.node {
            Node::Terms { terms } => Ok(self.terms_jet(terms, t, z)),
            Node::Reflect { inner } => {
                let rz = [z[0], z[1], -z[2], -z[3]];
                let j = inner.jet(t, &rz, hessian)?;
                let sign = [1.0, 1.0, -1.0, -1.0];
                let mut out = Jet { value: -j.value, ..Default::default() };
                for a in 0..4 {
                    out.grad[a] = -sign[a] * j.grad[a];
                    for b in 0..4 {
                        out.hess[a][b] = -sign[a] * sign[b] * j.hess[a][b];
                    }
                }
                Ok(out)
            }
            Node::TimeReverse { inner } => Ok(negate(inner.jet(1.0 - t, z, hessian)?)),
            Node::Reparametrize { inner, chi } => {
                let (c, dc) = chi.eval(t);
                Ok(scale_jet(inner.jet(c, z, hessian)?, dc))
            }
            Node::Concat { first, second } => {
                if t <= 0.5 {
                    Ok(scale_jet(first.jet(2.0 * t, z, hessian)?, 2.0))
                } else {
                    Ok(scale_jet(second.jet(2.0 * t - 1.0, z, hessian)?, 2.0))
                }
            }
            Node::Combination { parts } => {
                let mut out = Jet::default();
                for (c, h) in parts {
                    add_scaled(&mut out, &h.jet(t, z, hessian)?, *c);
                }
                Ok(out)
            }
            Node::Product { .. } | Node::Inverse { .. } => {
                let mut out = self.lazy_gradient(t, z)?;
                if hessian {
                    out.hess = self.fd_hessian(t, z)?;
                }
                Ok(out)
            }
        }
    }

    fn terms_jet(&self, terms: &[Term], t: f64, z: &State) -> Jet {
        let mut out = Jet::default();
        let (p0, p1) = if self.dim == 1 { (z[2], 0.0) } else { (z[2], z[3]) };
        let r = (p0 * p0 + p1 * p1).sqrt();
        for term in terms {
            let w = term.scale * term.time.weight(t);
            if w == 0.0 {
                continue;
            }
            let a = term.base.eval([z[0], z[1]]);
            let b = term.fiber.eval(r, self.support.inner, self.support.outer);
            let gp = [b.d_over_r * p0, b.d_over_r * p1];
            let mut hp = [[b.d_over_r, 0.0], [0.0, b.d_over_r]];
            if r > 0.0 {
                let n = [p0 / r, p1 / r];
                for i in 0..2 {
                    for j in 0..2 {
                        hp[i][j] += (b.dd - b.d_over_r) * n[i] * n[j];
                    }
                }
            } else {
                hp = [[b.dd, 0.0], [0.0, b.dd]];
            }
            out.value += w * a.v * b.v;
            for i in 0..2 {
                out.grad[i] += w * a.g[i] * b.v;
                out.grad[2 + i] += w * a.v * gp[i];
                for j in 0..2 {
                    out.hess[i][j] += w * a.h[i][j] * b.v;
                    out.hess[i][2 + j] += w * a.g[i] * gp[j];
                    out.hess[2 + i][j] += w * gp[i] * a.g[j];
                    out.hess[2 + i][2 + j] += w * a.v * hp[i][j];
                }
            }
        }
        if self.dim == 1 {
            clear_second_dimension(&mut out);
        }
        out
    }

    fn lazy_gradient(&self, t: f64, z: &State) -> Result<Jet> {
        match &self.node {
            Node::Product { first, second, steps } => {
                let own = first.jet(t, z, false)?;
                let n = ((t * *steps as f64).ceil() as usize).max(1);
                let back = flow::propagate(first, t, 0.0, z, n, true)?;
                let m = back.jacobian.expect("jacobian requested");
                let other = second.jet(t, &back.state, false)?;
                let mut out = Jet { value: own.value + other.value, grad: own.grad, ..Default::default() };
                for a in 0..4 {
                    for b in 0..4 {
                        out.grad[a] += m[b][a] * other.grad[b];
                    }
                }
                if self.dim == 1 {
                    clear_second_dimension(&mut out);
                }
                Ok(out)
            }
            Node::Inverse { inner, steps } => {
                let n = ((t * *steps as f64).ceil() as usize).max(1);
                let fwd = flow::propagate(inner, 0.0, t, z, n, true)?;
                let m = fwd.jacobian.expect("jacobian requested");
                let j = inner.jet(t, &fwd.state, false)?;
                let mut out = Jet { value: -j.value, ..Default::default() };
                for a in 0..4 {
                    for b in 0..4 {
                        out.grad[a] -= m[b][a] * j.grad[b];
                    }
                }
                if self.dim == 1 {
                    clear_second_dimension(&mut out);
                }
                Ok(out)
            }
            _ => self.jet(t, z, false),
        }
    }

    fn fd_hessian(&self, t: f64, z: &State) -> Result<[[f64; 4]; 4]> {
        let mut h = [[0.0; 4]; 4];
        let eps = 1e-5;
        for &a in active_indices(self.dim) {
            let mut zp = *z;
            let mut zm = *z;
            zp[a] += eps;
            zm[a] -= eps;
            let gp = self.lazy_gradient(t, &zp)?.grad;
            let gm = self.lazy_gradient(t, &zm)?.grad;
            for b in 0..4 {
                h[b][a] = (gp[b] - gm[b]) / (2.0 * eps);
            }
        }
        for a in 0..4 {
            for b in 0..a {
                let s = 0.5 * (h[a][b] + h[b][a]);
                h[a][b] = s;
                h[b][a] = s;
            }
        }
        Ok(h)
    }
}

/// Indices of packed coordinates that carry dynamics.
pub fn active_indices(dim: usize) -> &'static [usize] {
    if dim == 1 {
        &[0, 2]
    } else {
        &[0, 1, 2, 3]
    }
}

fn clear_second_dimension(j: &mut Jet) {
    for a in [1, 3] {
        j.grad[a] = 0.0;
        for b in 0..4 {
            j.hess[a][b] = 0.0;
            j.hess[b][a] = 0.0;
        }
    }
}

fn negate(j: Jet) -> Jet {
    scale_jet(j, -1.0)
}

fn scale_jet(mut j: Jet, c: f64) -> Jet {
    j.value *= c;
    for a in 0..4 {
        j.grad[a] *= c;
        for b in 0..4 {
            j.hess[a][b] *= c;
        }
    }
    j
}

fn add_scaled(acc: &mut Jet, j: &Jet, c: f64) {
    acc.value += c * j.value;
    for a in 0..4 {
        acc.grad[a] += c * j.grad[a];
        for b in 0..4 {
            acc.hess[a][b] += c * j.hess[a][b];
        }
    }
}

/// `H(t, x)` with its exact partials. Outside the support disc bundle the
/// partials vanish.
pub fn eval_hamiltonian(spec: &HamiltonianSpec, t: f64, x: &PhasePoint) -> Result<Evaluation> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Precondition(format!("time {t} outside [0, 1]")));
    }
    spec.validate()?;
    if x.base.dim != spec.dim {
        return Err(Error::Structural("phase point dimension differs from the Hamiltonian".into()));
    }
    let j = spec.jet(t, &x.state(), false)?;
    Ok(Evaluation { value: j.value, dq: [j.grad[0], j.grad[1]], dp: [j.grad[2], j.grad[3]] })
}

fn check_pair(h: &HamiltonianSpec, f: &HamiltonianSpec) -> Result<()> {
    h.validate()?;
    f.validate()?;
    if h.dim != f.dim {
        return Err(Error::Structural("cannot combine Hamiltonians of different dimension".into()));
    }
    Ok(())
}

fn enclosing_support(h: &HamiltonianSpec, f: &HamiltonianSpec) -> Support {
    Support { inner: h.support.inner.max(f.support.inner), outer: h.support_radius().max(f.support_radius()) }
}

/// The product `H # F`, generating `φᵗ_H ∘ φᵗ_F`.
pub fn compose_product(h: &HamiltonianSpec, f: &HamiltonianSpec) -> Result<HamiltonianSpec> {
    check_pair(h, f)?;
    Ok(HamiltonianSpec {
        dim: h.dim,
        support: enclosing_support(h, f),
        node: Node::Product { first: Box::new(h.clone()), second: Box::new(f.clone()), steps: LAZY_STEPS },
    })
}

/// The concatenation `H * F`; both inputs must be boundary flat.
pub fn concatenate(h: &HamiltonianSpec, f: &HamiltonianSpec) -> Result<HamiltonianSpec> {
    check_pair(h, f)?;
    if !h.is_boundary_flat() || !f.is_boundary_flat() {
        return Err(Error::Precondition(
            "concatenation needs boundary-flat Hamiltonians; reparametrize with a boundary-flat χ first".into(),
        ));
    }
    Ok(HamiltonianSpec {
        dim: h.dim,
        support: enclosing_support(h, f),
        node: Node::Concat { first: Box::new(h.clone()), second: Box::new(f.clone()) },
    })
}

/// Linear combination `Σ cᵢ Hᵢ`.
pub fn combination(parts: Vec<(f64, HamiltonianSpec)>) -> Result<HamiltonianSpec> {
    let first = parts.first().ok_or_else(|| Error::Structural("empty combination".into()))?;
    let dim = first.1.dim;
    let mut support = first.1.support;
    for (_, h) in &parts {
        h.validate()?;
        if h.dim != dim {
            return Err(Error::Structural("cannot combine Hamiltonians of different dimension".into()));
        }
        support.inner = support.inner.max(h.support.inner);
        support.outer = support.outer.max(h.support_radius());
    }
    Ok(HamiltonianSpec { dim, support, node: Node::Combination { parts } })
}

/// Wraps `h` in a reflection, time reversal, inverse or reparametrisation.
pub fn transform(h: &HamiltonianSpec, which: Transform) -> Result<HamiltonianSpec> {
    h.validate()?;
    let inner = Box::new(h.clone());
    let node = match which {
        Transform::Reflect => Node::Reflect { inner },
        Transform::TimeReverse => Node::TimeReverse { inner },
        Transform::Inverse => Node::Inverse { inner, steps: LAZY_STEPS },
        Transform::Reparametrize(chi) => {
            chi.validate()?;
            Node::Reparametrize { inner, chi }
        }
    };
    Ok(HamiltonianSpec { dim: h.dim, support: h.support, node })
}

/// Parameters of the built-in `figure1` scenario: `g = ε(cos q + cos 2q +
/// δ sin q)` followed by the shear `twist`.
pub const FIGURE1_EPS: f64 = 0.3;
pub const FIGURE1_DELTA: f64 = 0.15;
pub const FIGURE1_TWIST: f64 = -1.0;

/// The base profile of the `figure1` fold.
pub fn figure1_profile() -> BaseProfile {
    let e = FIGURE1_EPS;
    BaseProfile::fourier1(&[(1, e), (2, e)], &[(1, e * FIGURE1_DELTA)])
}

/// Built-in scenario with one Z-fold: four zero-section crossings, two
/// caustics and one Maxwell crossing.
pub fn figure1() -> HamiltonianSpec {
    HamiltonianSpec::fold(1, figure1_profile(), FIGURE1_TWIST)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::TAU;

    fn samples() -> Vec<State> {
        let mut out = Vec::new();
        let mut seed = 12345u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            out.push([next() * TAU, next() * TAU, (next() - 0.5) * 6.0, (next() - 0.5) * 6.0]);
        }
        out
    }

    fn zoo(dim: usize) -> Vec<HamiltonianSpec> {
        let g = if dim == 1 {
            BaseProfile::fourier1(&[(1, 0.4), (3, -0.1)], &[(2, 0.2)])
        } else {
            BaseProfile::Fourier {
                modes: vec![
                    Mode { k: [1, 0], a: 0.4, b: 0.0 },
                    Mode { k: [0, 1], a: 0.0, b: 0.3 },
                    Mode { k: [1, 1], a: 0.1, b: 0.05 },
                ],
            }
        };
        let base = HamiltonianSpec::base_lift(dim, g.clone(), TimeProfile::Smoothstep);
        let fib = HamiltonianSpec::fiberwise(dim, -0.8, TimeProfile::Bump { start: 0.1, end: 0.9 });
        let fold = HamiltonianSpec::fold(dim, g, 1.2);
        let bump = HamiltonianSpec::from_terms(
            dim,
            Support::default(),
            vec![Term {
                scale: 0.7,
                time: TimeProfile::Constant,
                base: if dim == 1 { BaseProfile::Bump { center: 2.0, half_width: 1.0 } } else { BaseProfile::One },
                fiber: FiberProfile::CompactQuadratic { twist: 1.5 },
            }],
        );
        vec![
            base.clone(),
            fib.clone(),
            fold.clone(),
            bump,
            transform(&fold, Transform::Reflect).unwrap(),
            transform(&fold, Transform::TimeReverse).unwrap(),
            transform(&fold, Transform::Reparametrize(Chi::smoothstep())).unwrap(),
            concatenate(&base, &fib).unwrap(),
            combination(vec![(0.5, base), (-2.0, fib)]).unwrap(),
        ]
    }

    #[test]
    fn analytic_partials_match_finite_differences() {
        for dim in [1, 2] {
            for h in zoo(dim) {
                for (k, z) in samples().iter().enumerate() {
                    let t = (k as f64 + 0.5) / 200.0;
                    let j = h.jet(t, z, true).unwrap();
                    for a in active_indices(dim).iter().copied() {
                        let eps = 1e-6;
                        let mut zp = *z;
                        let mut zm = *z;
                        zp[a] += eps;
                        zm[a] -= eps;
                        let jp = h.jet(t, &zp, true).unwrap();
                        let jm = h.jet(t, &zm, true).unwrap();
                        let d = (jp.value - jm.value) / (2.0 * eps);
                        let scale = 1.0 + j.grad[a].abs();
                        assert!((d - j.grad[a]).abs() <= 1e-6 * scale, "{:?} grad {a}: {d} vs {}", h.kind(), j.grad[a]);
                        for b in 0..4 {
                            let dd = (jp.grad[b] - jm.grad[b]) / (2.0 * eps);
                            let s = 1.0 + j.hess[b][a].abs();
                            assert!((dd - j.hess[b][a]).abs() <= 1e-5 * s, "hess {b}{a}: {dd} vs {}", j.hess[b][a]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn vector_field_vanishes_outside_support() {
        for dim in [1, 2] {
            for h in zoo(dim) {
                let r = h.support_radius();
                for (k, z) in samples().iter().enumerate() {
                    let ang = k as f64;
                    let rad = r + 0.01 + (k % 7) as f64;
                    let zz = [z[0], z[1], rad * ang.cos(), if dim == 2 { rad * ang.sin() } else { 0.0 }];
                    let zz = if dim == 1 { [zz[0], 0.0, rad * ang.cos().signum(), 0.0] } else { zz };
                    let t = (k as f64 + 0.5) / 200.0;
                    let j = h.jet(t, &zz, false).unwrap();
                    assert!(j.grad.iter().all(|g| g.abs() < 1e-12), "{:?}", h.kind());
                    assert!((j.value - h.value_at_infinity(t)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn spec_examples() {
        let x = PhasePoint::circle(1.3, -0.4);
        let z = eval_hamiltonian(&HamiltonianSpec::zero(1), 0.5, &x).unwrap();
        assert_eq!(z, Evaluation { value: 0.0, dq: [0.0; 2], dp: [0.0; 2] });
        let c = HamiltonianSpec::time_constant(1, 1.0, TimeProfile::Constant);
        for t in [0.0, 0.3, 1.0] {
            assert_eq!(eval_hamiltonian(&c, t, &x).unwrap(), Evaluation { value: 1.0, dq: [0.0; 2], dp: [0.0; 2] });
        }
        let eps = 0.25;
        let f = HamiltonianSpec::base_lift(1, BaseProfile::fourier1(&[(1, eps)], &[]), TimeProfile::Constant);
        let e = eval_hamiltonian(&f, 0.4, &x).unwrap();
        assert!((e.value - eps * 1.3f64.cos()).abs() < 1e-15);
        assert!((e.dq[0] + eps * 1.3f64.sin()).abs() < 1e-15);
        assert_eq!(e.dp, [0.0, 0.0]);
        assert!(eval_hamiltonian(&f, 1.5, &x).is_err());
    }

    #[test]
    fn transform_rules() {
        let zero = HamiltonianSpec::zero(1);
        let rz = transform(&zero, Transform::Reflect).unwrap();
        let z = [0.3, 0.0, 0.7, 0.0];
        assert_eq!(rz.jet(0.2, &z, false).unwrap().value, 0.0);
        let f = HamiltonianSpec::base_lift(1, BaseProfile::fourier1(&[(1, 0.5)], &[]), TimeProfile::Constant);
        let rf = transform(&f, Transform::Reflect).unwrap();
        let minus_f = f.clone().scaled(-1.0);
        for k in 0..20 {
            let z = [k as f64 * 0.3, 0.0, 0.1 * k as f64 - 1.0, 0.0];
            let a = rf.jet(0.5, &z, true).unwrap();
            let b = minus_f.jet(0.5, &z, true).unwrap();
            assert!((a.value - b.value).abs() < 1e-14);
            assert!((a.grad[0] - b.grad[0]).abs() < 1e-14);
        }
        let bad = Chi { coeffs: vec![0.0, 3.0, -2.0] };
        assert!(transform(&f, Transform::Reparametrize(bad)).is_err());
        assert!(concatenate(&f, &f).is_err());
        let flat = transform(&f, Transform::Reparametrize(Chi::smoothstep())).unwrap();
        assert!(concatenate(&flat, &flat).is_ok());
    }

    #[test]
    fn structural_errors() {
        let bad = HamiltonianSpec::from_terms(
            1,
            Support::default(),
            vec![Term {
                scale: 1.0,
                time: TimeProfile::Constant,
                base: BaseProfile::fourier1(&[(1, 1.0)], &[]),
                fiber: FiberProfile::One,
            }],
        );
        assert!(matches!(bad.validate(), Err(Error::Structural(_))));
        let twod = BaseProfile::Fourier { modes: vec![Mode { k: [1, 1], a: 1.0, b: 0.0 }] };
        assert!(HamiltonianSpec::base_lift(1, twod, TimeProfile::Constant).validate().is_err());
        let one = HamiltonianSpec::zero(1);
        let two = HamiltonianSpec::zero(2);
        assert!(compose_product(&one, &two).is_err());
    }

    #[test]
    fn kinds() {
        assert_eq!(HamiltonianSpec::zero(1).kind(), Kind::Zero);
        assert_eq!(HamiltonianSpec::time_constant(1, 2.0, TimeProfile::Constant).kind(), Kind::TimeConstant);
        assert_eq!(figure1().kind(), Kind::Fold);
        assert_eq!(HamiltonianSpec::tabulated(vec![0.0, 1.0, 0.5, 0.2]).kind(), Kind::Tabulated);
        assert_eq!(HamiltonianSpec::fiberwise(1, 1.0, TimeProfile::Constant).kind(), Kind::Fiberwise);
    }

    #[test]
    fn metric_lower_bound() {
        let m = Metric::default();
        for z in samples() {
            let x = PhasePoint::torus([z[0], z[1]], [z[2], z[3]]);
            let q = BasePoint::torus(z[1], z[0]);
            let d = m.to_zero_covector(&q, &x);
            let p = (z[2] * z[2] + z[3] * z[3]).sqrt();
            assert!(d + 1e-15 >= p.max(m.base_distance(&q, &x.base)));
        }
        assert!(m.r.is_infinite());
    }
}
