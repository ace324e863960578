//! Small numerical helpers: angle arithmetic, cubic Hermite pieces,
//! bracketed root finding and dense 4×4 solves.

use alloc::vec::Vec;
use nalgebra::{Matrix4, Vector4};
#[allow(unused_imports)]
use num_traits::Float;

pub const TAU: f64 = core::f64::consts::TAU;
pub const PI: f64 = core::f64::consts::PI;

/// Angle reduced to `[0, 2π)`.
pub fn wrap(a: f64) -> f64 {
    let mut r = a % TAU;
    if r < 0.0 {
        r += TAU;
    }
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Signed angular difference `a − b` reduced to `(−π, π]`.
pub fn circ_diff(a: f64, b: f64) -> f64 {
    let d = wrap(a - b);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

/// Cubic Hermite interpolant on `[0, 1]` with endpoint values and
/// derivatives already scaled to the unit parameter.
#[derive(Debug, Clone, Copy)]
pub struct Hermite {
    pub y0: f64,
    pub y1: f64,
    pub m0: f64,
    pub m1: f64,
}

impl Hermite {
    /// `dy0`, `dy1` are derivatives with respect to the original parameter on
    /// an interval of length `len`.
    pub fn new(y0: f64, y1: f64, dy0: f64, dy1: f64, len: f64) -> Self {
        Self { y0, y1, m0: dy0 * len, m1: dy1 * len }
    }

    pub fn eval(&self, u: f64) -> f64 {
        let u2 = u * u;
        let u3 = u2 * u;
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        h00 * self.y0 + h10 * self.m0 + h01 * self.y1 + h11 * self.m1
    }

    /// Derivative with respect to `u`.
    pub fn deriv(&self, u: f64) -> f64 {
        let u2 = u * u;
        let d00 = 6.0 * u2 - 6.0 * u;
        let d10 = 3.0 * u2 - 4.0 * u + 1.0;
        let d01 = -6.0 * u2 + 6.0 * u;
        let d11 = 3.0 * u2 - 2.0 * u;
        d00 * self.y0 + d10 * self.m0 + d01 * self.y1 + d11 * self.m1
    }
}

/// Root of `f` on `[a, b]` given a sign change, by the Illinois variant of
/// regula falsi with a bisection safeguard. Returns `None` without a bracket.
pub fn bracketed_root<F>(mut f: F, a: f64, b: f64, xtol: f64) -> Option<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return None;
    }
    let mut side = 0i8;
    for it in 0..200 {
        let width = (b - a).abs();
        if width <= xtol {
            break;
        }
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !(c > a.min(b) && c < a.max(b)) || it % 8 == 7 {
            c = 0.5 * (a + b);
        }
        let fc = f(c);
        if fc == 0.0 {
            return Some(c);
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Some(if fa.abs() < fb.abs() { a } else { b })
}

/// Solves `a x = b` for a dense 4×4 system; `None` if singular.
pub fn solve4(a: &[[f64; 4]; 4], b: &[f64; 4]) -> Option<[f64; 4]> {
    let m = Matrix4::from_fn(|i, j| a[i][j]);
    let v = Vector4::from_column_slice(b);
    let x = m.lu().solve(&v)?;
    Some([x[0], x[1], x[2], x[3]])
}

/// Maps `f` over `items`, in parallel when the `parallel` feature is on.
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Median of the absolute values of `xs` (0 for an empty slice).
pub fn median_abs(xs: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = xs.map(|x| x.abs()).collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    v[v.len() / 2]
}
