//! Building blocks of separable Hamiltonian terms `w(t)·A(q)·B(|p|)`.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::math::{circ_diff, wrap, TAU};

/// Quintic smoothstep `S(u)` clamped to `[0, 1]`, with two derivatives.
pub(crate) fn smoothstep(u: f64) -> (f64, f64, f64) {
    if u <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if u >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let s = u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
        let ds = 30.0 * u * u * (1.0 - u) * (1.0 - u);
        let dds = 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u);
        (s, ds, dds)
    }
}

/// Time weight `w(t)`. Every profile has unit integral over `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "snake_case"))]
pub enum TimeProfile {
    /// `w ≡ 1` (autonomous).
    Constant,
    /// `140 u³(1−u)³ / (end − start)` on `[start, end]`, zero elsewhere.
    Bump { start: f64, end: f64 },
    /// `6t(1−t)`, the derivative of the smoothstep reparametrization.
    Smoothstep,
}

impl TimeProfile {
    pub fn weight(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant => 1.0,
            TimeProfile::Bump { start, end } => {
                if t <= start || t >= end {
                    return 0.0;
                }
                let len = end - start;
                let u = (t - start) / len;
                let v = u * (1.0 - u);
                140.0 * v * v * v / len
            }
            TimeProfile::Smoothstep => 6.0 * t * (1.0 - t),
        }
    }

    /// Weight vanishes at both ends of `[0, 1]`.
    pub fn is_boundary_flat(&self) -> bool {
        self.weight(0.0).abs() < 1e-14 && self.weight(1.0).abs() < 1e-14
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, TimeProfile::Constant)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if let TimeProfile::Bump { start, end } = *self {
            if !(0.0 <= start && start < end && end <= 1.0) {
                return Err(Error::Structural("time bump must satisfy 0 <= start < end <= 1".into()));
            }
        }
        Ok(())
    }
}

/// Monotone reparametrization `χ: [0,1] → [0,1]` given by polynomial
/// coefficients in increasing degree.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Chi {
    pub coeffs: Vec<f64>,
}

impl Chi {
    /// `χ(t) = t²(3 − 2t)`.
    pub fn smoothstep() -> Self {
        Self { coeffs: vec![0.0, 0.0, 3.0, -2.0] }
    }

    pub fn identity() -> Self {
        Self { coeffs: vec![0.0, 1.0] }
    }

    pub fn eval(&self, t: f64) -> (f64, f64) {
        let mut v = 0.0;
        let mut d = 0.0;
        for c in self.coeffs.iter().rev() {
            d = d * t + v;
            v = v * t + c;
        }
        (v, d)
    }

    /// Checks `χ(0) = 0`, `χ(1) = 1` and `χ' ≥ 0` on a fine grid.
    pub fn validate(&self) -> Result<()> {
        let (c0, _) = self.eval(0.0);
        let (c1, _) = self.eval(1.0);
        if c0.abs() > 1e-12 || (c1 - 1.0).abs() > 1e-12 {
            return Err(Error::Precondition("reparametrization must fix 0 and 1".into()));
        }
        for i in 0..=1000 {
            let (_, d) = self.eval(i as f64 / 1000.0);
            if d < -1e-12 {
                return Err(Error::Precondition("reparametrization is not monotone".into()));
            }
        }
        Ok(())
    }

    pub fn is_boundary_flat(&self) -> bool {
        self.eval(0.0).1.abs() < 1e-14 && self.eval(1.0).1.abs() < 1e-14
    }
}

/// One Fourier mode `a·cos(k·q) + b·sin(k·q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mode {
    pub k: [i32; 2],
    pub a: f64,
    pub b: f64,
}

/// Periodic cubic spline through samples on a uniform grid of `[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(from = "TabulatedValues", into = "TabulatedValues"))]
pub struct Tabulated {
    values: Vec<f64>,
    moments: Vec<f64>,
}

#[cfg(feature = "serde")]
#[derive(serde::Serialize, serde::Deserialize)]
struct TabulatedValues {
    values: Vec<f64>,
}

#[cfg(feature = "serde")]
impl From<TabulatedValues> for Tabulated {
    fn from(t: TabulatedValues) -> Self {
        Tabulated::new(t.values)
    }
}

#[cfg(feature = "serde")]
impl From<Tabulated> for TabulatedValues {
    fn from(t: Tabulated) -> Self {
        TabulatedValues { values: t.values }
    }
}

impl Tabulated {
    /// Builds the spline; the second-derivative moments solve the cyclic
    /// tridiagonal system `M_{i-1} + 4M_i + M_{i+1} = 6Δ²y_i / h²`.
    pub fn new(values: Vec<f64>) -> Self {
        let n = values.len();
        let mut moments = vec![0.0; n];
        if n >= 3 {
            let h = TAU / n as f64;
            let rhs: Vec<f64> = (0..n)
                .map(|i| 6.0 * (values[(i + 1) % n] - 2.0 * values[i] + values[(i + n - 1) % n]) / (h * h))
                .collect();
            moments = solve_cyclic(1.0, 4.0, 1.0, &rhs);
        }
        Self { values, moments }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn eval(&self, q: f64) -> (f64, f64, f64) {
        let n = self.values.len();
        if n == 0 {
            return (0.0, 0.0, 0.0);
        }
        if n < 3 {
            return (self.values[0], 0.0, 0.0);
        }
        let h = TAU / n as f64;
        let x = wrap(q) / h;
        let i = (x.floor() as usize).min(n - 1);
        let j = (i + 1) % n;
        let t = x - i as f64;
        let (a, b) = (1.0 - t, t);
        let (yi, yj, mi, mj) = (self.values[i], self.values[j], self.moments[i], self.moments[j]);
        let v = a * yi + b * yj + ((a * a * a - a) * mi + (b * b * b - b) * mj) * h * h / 6.0;
        let d = (yj - yi) / h + ((1.0 - 3.0 * a * a) * mi + (3.0 * b * b - 1.0) * mj) * h / 6.0;
        let dd = a * mi + b * mj;
        (v, d, dd)
    }
}

/// Solves a cyclic tridiagonal system with constant bands via Sherman–Morrison.
fn solve_cyclic(lower: f64, diag: f64, upper: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let gamma = -diag;
    let mut main = vec![diag; n];
    main[0] = diag - gamma;
    main[n - 1] = diag - lower * upper / gamma;
    let thomas = |d: &[f64]| -> Vec<f64> {
        let mut c = vec![0.0; n];
        let mut x = vec![0.0; n];
        c[0] = upper / main[0];
        x[0] = d[0] / main[0];
        for i in 1..n {
            let m = main[i] - lower * c[i - 1];
            c[i] = upper / m;
            x[i] = (d[i] - lower * x[i - 1]) / m;
        }
        for i in (0..n - 1).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        x
    };
    let x = thomas(rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = lower;
    let z = thomas(&u);
    let fact = (x[0] + upper * x[n - 1] / gamma) / (1.0 + z[0] + upper * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect()
}

/// Value, gradient and Hessian of a base function on `N`.
#[derive(Debug, Clone, Copy, Default)]
pub struct BaseJet {
    pub v: f64,
    pub g: [f64; 2],
    pub h: [[f64; 2]; 2],
}

/// Functions on the base `S¹` or `T²`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "snake_case"))]
pub enum BaseProfile {
    One,
    /// Trigonometric polynomial; in dimension one only `k[0]` may be nonzero.
    Fourier { modes: Vec<Mode> },
    /// Morse function on `S¹` with one maximum and one minimum inside the arc
    /// `B = [center − half_width, center + half_width]`, linear with slope
    /// `slope` on the complement, and `C²` throughout.
    Ramp { center: f64, half_width: f64, slope: f64 },
    /// `(1 − u²)⁴` with `u = (q − center)/half_width`, zero for `|u| ≥ 1`.
    Bump { center: f64, half_width: f64 },
    /// Equal to 1 on `|q − center| ≤ half_width − ramp`, smoothly zero beyond
    /// `half_width`.
    Plateau { center: f64, half_width: f64, ramp: f64 },
    /// Periodic cubic spline through tabulated samples.
    Tabulated(Tabulated),
}

impl BaseProfile {
    /// Single-variable Fourier profile `Σ a_k cos kq + b_k sin kq`.
    pub fn fourier1(cos: &[(i32, f64)], sin: &[(i32, f64)]) -> Self {
        let mut modes: Vec<Mode> = cos.iter().map(|&(k, a)| Mode { k: [k, 0], a, b: 0.0 }).collect();
        modes.extend(sin.iter().map(|&(k, b)| Mode { k: [k, 0], a: 0.0, b }));
        BaseProfile::Fourier { modes }
    }

    pub fn tabulated(values: Vec<f64>) -> Self {
        BaseProfile::Tabulated(Tabulated::new(values))
    }

    /// Whether the profile only depends on the first base angle.
    pub fn is_one_dimensional(&self) -> bool {
        match self {
            BaseProfile::Fourier { modes } => modes.iter().all(|m| m.k[1] == 0),
            _ => true,
        }
    }

    pub(crate) fn validate(&self, dim: usize) -> Result<()> {
        match self {
            BaseProfile::Fourier { .. } => {
                if dim == 1 && !self.is_one_dimensional() {
                    return Err(Error::Structural("two-dimensional Fourier mode on S¹".into()));
                }
            }
            BaseProfile::One => {}
            BaseProfile::Ramp { half_width, slope, .. } => {
                if dim != 1 {
                    return Err(Error::Structural("ramp profile is defined on S¹ only".into()));
                }
                if !(*half_width > 0.0 && *half_width < core::f64::consts::PI) || *slope <= 0.0 {
                    return Err(Error::Structural("ramp needs 0 < half_width < π and slope > 0".into()));
                }
            }
            BaseProfile::Bump { half_width, .. } => {
                if dim != 1 || !(*half_width > 0.0 && *half_width <= core::f64::consts::PI) {
                    return Err(Error::Structural("bump profile needs S¹ and 0 < half_width <= π".into()));
                }
            }
            BaseProfile::Plateau { half_width, ramp, .. } => {
                if dim != 1 || !(*ramp > 0.0 && *ramp < *half_width && *half_width <= core::f64::consts::PI) {
                    return Err(Error::Structural("plateau needs S¹ and 0 < ramp < half_width <= π".into()));
                }
            }
            BaseProfile::Tabulated(t) => {
                if dim != 1 || t.values.len() < 3 {
                    return Err(Error::Structural("tabulated profile needs S¹ and at least 3 samples".into()));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, q: [f64; 2]) -> BaseJet {
        match self {
            BaseProfile::One => BaseJet { v: 1.0, ..Default::default() },
            BaseProfile::Fourier { modes } => {
                let mut j = BaseJet::default();
                for m in modes {
                    let k = [m.k[0] as f64, m.k[1] as f64];
                    let phase = k[0] * q[0] + k[1] * q[1];
                    let (s, c) = phase.sin_cos();
                    let val = m.a * c + m.b * s;
                    let der = -m.a * s + m.b * c;
                    j.v += val;
                    for a in 0..2 {
                        j.g[a] += der * k[a];
                        for b in 0..2 {
                            j.h[a][b] -= val * k[a] * k[b];
                        }
                    }
                }
                j
            }
            BaseProfile::Ramp { center, half_width, slope } => {
                let (v, d, dd) = ramp(q[0], *center, *half_width, *slope);
                one_dim(v, d, dd)
            }
            BaseProfile::Bump { center, half_width } => {
                let u = circ_diff(q[0], *center) / half_width;
                if u.abs() >= 1.0 {
                    return BaseJet::default();
                }
                let w = 1.0 - u * u;
                let v = w.powi(4);
                let du = -8.0 * u * w.powi(3);
                let ddu = -8.0 * w.powi(3) + 48.0 * u * u * w * w;
                one_dim(v, du / half_width, ddu / (half_width * half_width))
            }
            BaseProfile::Plateau { center, half_width, ramp } => {
                let u = circ_diff(q[0], *center);
                let inner = half_width - ramp;
                let x = (u.abs() - inner) / ramp;
                let (s, ds, dds) = smoothstep(x);
                let sign = if u < 0.0 { -1.0 } else { 1.0 };
                one_dim(1.0 - s, -sign * ds / ramp, -dds / (ramp * ramp))
            }
            BaseProfile::Tabulated(t) => {
                let (v, d, dd) = t.eval(q[0]);
                one_dim(v, d, dd)
            }
        }
    }

    /// Critical points known in closed form (ramp profile only).
    pub fn ramp_critical_points(&self) -> Option<(f64, f64)> {
        if let BaseProfile::Ramp { center, half_width, slope } = *self {
            let (a1, a3, a5) = ramp_coefficients(half_width, slope);
            let _ = a3;
            // p'(v) = a1 − 10 a5 b² v + 5 a5 v² with v = u², root in (0, b²)
            let b2 = half_width * half_width;
            let (qa, qb, qc) = (5.0 * a5, -10.0 * a5 * b2, a1);
            let disc = (qb * qb - 4.0 * qa * qc).sqrt();
            let r1 = (-qb + disc) / (2.0 * qa);
            let r2 = (-qb - disc) / (2.0 * qa);
            let v = if r1 > 0.0 && r1 < b2 { r1 } else { r2 };
            let u = v.sqrt();
            // maximum at center − u, minimum at center + u
            Some((wrap(center - u), wrap(center + u)))
        } else {
            None
        }
    }
}

fn one_dim(v: f64, d: f64, dd: f64) -> BaseJet {
    BaseJet { v, g: [d, 0.0], h: [[dd, 0.0], [0.0, 0.0]] }
}

/// Odd quintic `a1 u + a3 u³ + a5 u⁵` on `[−b, b]` matching the linear ramp
/// (value, slope and zero curvature) at both ends of the arc.
fn ramp_coefficients(b: f64, m: f64) -> (f64, f64, f64) {
    let pi = core::f64::consts::PI;
    let a5 = -3.0 * m * pi / (8.0 * b.powi(5));
    let a3 = -(10.0 / 3.0) * a5 * b * b;
    let a1 = m + 5.0 * a5 * b.powi(4);
    (a1, a3, a5)
}

fn ramp(q: f64, center: f64, b: f64, m: f64) -> (f64, f64, f64) {
    let pi = core::f64::consts::PI;
    let u = circ_diff(q, center);
    if u.abs() <= b {
        let (a1, a3, a5) = ramp_coefficients(b, m);
        let v = a1 * u + a3 * u.powi(3) + a5 * u.powi(5);
        let d = a1 + 3.0 * a3 * u * u + 5.0 * a5 * u.powi(4);
        let dd = 6.0 * a3 * u + 20.0 * a5 * u.powi(3);
        (v, d, dd)
    } else {
        // θ ∈ (0, 2π − 2b) measured from the right end of the arc
        let theta = wrap(q - (center + b));
        (m * (theta - (pi - b)), m, 0.0)
    }
}

/// Radial function of the fiber norm: value, `B'(r)/r` and `B''(r)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RadialJet {
    pub v: f64,
    pub d_over_r: f64,
    pub dd: f64,
}

/// Functions of `|p|`; `inner`/`outer` are the cutoff radii of the support.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "snake_case"))]
pub enum FiberProfile {
    One,
    /// `ψ(|p|)`: 1 inside `inner`, 0 beyond `outer`.
    Cutoff,
    /// `twist · m(|p|)` with `m(r) = r²/2` inside `inner` and constant beyond
    /// `outer` (`m' = r ψ`).
    Quadratic { twist: f64 },
    /// `twist · ψ(|p|) |p|²/2`, compactly supported.
    CompactQuadratic { twist: f64 },
}

impl FiberProfile {
    pub fn eval(&self, r: f64, inner: f64, outer: f64) -> RadialJet {
        let w = outer - inner;
        let u = (r - inner) / w;
        let (s, ds, dds) = smoothstep(u);
        let psi = 1.0 - s;
        let dpsi = -ds / w;
        let ddpsi = -dds / (w * w);
        match *self {
            FiberProfile::One => RadialJet { v: 1.0, ..Default::default() },
            FiberProfile::Cutoff => {
                if r <= inner {
                    RadialJet { v: 1.0, ..Default::default() }
                } else {
                    RadialJet { v: psi, d_over_r: dpsi / r, dd: ddpsi }
                }
            }
            FiberProfile::Quadratic { twist } => {
                if r <= inner {
                    return RadialJet { v: twist * r * r / 2.0, d_over_r: twist, dd: twist };
                }
                let uc = u.min(1.0);
                let int_s = 2.5 * uc.powi(4) - 3.0 * uc.powi(5) + uc.powi(6);
                let int_us = 2.0 * uc.powi(5) - 2.5 * uc.powi(6) + (6.0 / 7.0) * uc.powi(7);
                let m = inner * inner / 2.0 + w * (inner * (uc - int_s) + w * (uc * uc / 2.0 - int_us));
                RadialJet { v: twist * m, d_over_r: twist * psi, dd: twist * (psi + r * dpsi) }
            }
            FiberProfile::CompactQuadratic { twist } => {
                if r <= inner {
                    return RadialJet { v: twist * r * r / 2.0, d_over_r: twist, dd: twist };
                }
                RadialJet {
                    v: twist * psi * r * r / 2.0,
                    d_over_r: twist * (psi + r * dpsi / 2.0),
                    dd: twist * (psi + 2.0 * r * dpsi + r * r * ddpsi / 2.0),
                }
            }
        }
    }

    /// Value for `|p| ≥ outer`.
    pub fn at_infinity(&self, inner: f64, outer: f64) -> f64 {
        match self {
            FiberProfile::One => 1.0,
            FiberProfile::Quadratic { .. } => self.eval(outer, inner, outer).v,
            _ => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(profile: &BaseProfile, q: f64) {
        let h = 1e-5;
        let j = profile.eval([q, 0.0]);
        let jp = profile.eval([q + h, 0.0]);
        let jm = profile.eval([q - h, 0.0]);
        let d = (jp.v - jm.v) / (2.0 * h);
        let dd = (jp.g[0] - jm.g[0]) / (2.0 * h);
        let scale = 1.0 + j.g[0].abs() + j.h[0][0].abs();
        assert!((d - j.g[0]).abs() < 1e-6 * scale, "{profile:?} at {q}: {d} vs {}", j.g[0]);
        assert!((dd - j.h[0][0]).abs() < 1e-5 * scale, "{profile:?} at {q}: {dd} vs {}", j.h[0][0]);
    }

    #[test]
    fn base_profiles_match_finite_differences() {
        let profiles = [
            BaseProfile::fourier1(&[(1, 0.3), (2, -0.2)], &[(3, 0.1)]),
            BaseProfile::Ramp { center: 0.5, half_width: 0.9, slope: 0.2 },
            BaseProfile::Bump { center: 3.0, half_width: 1.2 },
            BaseProfile::Plateau { center: 3.0, half_width: 2.0, ramp: 0.5 },
            BaseProfile::tabulated((0..32).map(|i| (i as f64 * TAU / 32.0).cos()).collect()),
        ];
        for p in &profiles {
            for i in 0..97 {
                fd_check(p, 0.013 + i as f64 * TAU / 97.0);
            }
        }
    }

    #[test]
    fn ramp_has_two_critical_points_inside_the_arc() {
        let p = BaseProfile::Ramp { center: 1.0, half_width: 0.8, slope: 0.3 };
        let (qmax, qmin) = p.ramp_critical_points().unwrap();
        assert!(p.eval([qmax, 0.0]).g[0].abs() < 1e-12);
        assert!(p.eval([qmin, 0.0]).g[0].abs() < 1e-12);
        assert!(p.eval([qmax, 0.0]).h[0][0] < 0.0);
        assert!(p.eval([qmin, 0.0]).h[0][0] > 0.0);
        let mut sign_changes = 0;
        let n = 4000;
        for i in 0..n {
            let a = p.eval([i as f64 * TAU / n as f64, 0.0]).g[0];
            let b = p.eval([(i + 1) as f64 * TAU / n as f64, 0.0]).g[0];
            if a.signum() != b.signum() {
                sign_changes += 1;
            }
        }
        assert_eq!(sign_changes, 2);
        // value continuity across the arc ends
        for end in [1.0 - 0.8, 1.0 + 0.8] {
            let l = p.eval([end - 1e-9, 0.0]).v;
            let r = p.eval([end + 1e-9, 0.0]).v;
            assert!((l - r).abs() < 1e-7);
        }
    }

    #[test]
    fn tabulated_spline_interpolates_samples() {
        let vals: Vec<f64> = (0..40).map(|i| (2.0 * i as f64 * TAU / 40.0).sin()).collect();
        let t = BaseProfile::tabulated(vals.clone());
        for (i, v) in vals.iter().enumerate() {
            assert!((t.eval([i as f64 * TAU / 40.0, 0.0]).v - v).abs() < 1e-12);
        }
        let q = 0.77;
        assert!((t.eval([q, 0.0]).v - (2.0 * q).sin()).abs() < 1e-3);
    }

    #[test]
    fn fiber_profiles_match_finite_differences() {
        let (inner, outer) = (1.0, 2.0);
        for prof in [
            FiberProfile::Cutoff,
            FiberProfile::Quadratic { twist: -0.7 },
            FiberProfile::CompactQuadratic { twist: 1.3 },
        ] {
            for i in 1..300 {
                let r = i as f64 * 0.008;
                let h = 1e-6;
                let j = prof.eval(r, inner, outer);
                let jp = prof.eval(r + h, inner, outer);
                let jm = prof.eval(r - h, inner, outer);
                let d = (jp.v - jm.v) / (2.0 * h);
                let dd = (jp.d_over_r * (r + h) - jm.d_over_r * (r - h)) / (2.0 * h);
                assert!((d - j.d_over_r * r).abs() < 1e-6, "{prof:?} r={r}");
                // the second derivative is only C⁰ at the two knots
                if (r - inner).abs() > 1e-4 && (r - outer).abs() > 1e-4 {
                    assert!((dd - j.dd).abs() < 1e-5, "{prof:?} r={r} {dd} {}", j.dd);
                }
            }
            let far = prof.eval(outer + 0.5, inner, outer);
            assert!(far.d_over_r == 0.0 && far.dd == 0.0);
            assert!((far.v - prof.at_infinity(inner, outer)).abs() < 1e-14);
        }
    }

    #[test]
    fn time_profiles_have_unit_integral() {
        for p in [TimeProfile::Constant, TimeProfile::Bump { start: 0.2, end: 0.7 }, TimeProfile::Smoothstep] {
            let n = 20000;
            let s: f64 = (0..n).map(|i| p.weight((i as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64;
            assert!((s - 1.0).abs() < 1e-8, "{p:?}");
        }
        assert!(!TimeProfile::Constant.is_boundary_flat());
        assert!(TimeProfile::Bump { start: 0.0, end: 0.5 }.is_boundary_flat());
    }

    #[test]
    fn chi_validation() {
        assert!(Chi::smoothstep().validate().is_ok());
        // 3t − 2t² fixes the endpoints but decreases near t = 1
        assert!(Chi { coeffs: vec![0.0, 3.0, -2.0] }.validate().is_err());
        let (v, d) = Chi::smoothstep().eval(0.5);
        assert!((v - 0.5).abs() < 1e-15 && (d - 1.5).abs() < 1e-15);
    }
}
