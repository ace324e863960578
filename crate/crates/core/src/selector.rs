//! Basic phase function `f_H(q) = ρ(H; {q})`, the selector `σ_H`, its
//! singular locus and the transfer map `φ^H`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::floer::{build_complex, TestObject};
use crate::flow::{hofer_norm, inverse_time_one, osc_c0_with, CurvePoint, LagrangianCurve};
use crate::front::{decompose_front, hausdorff_to_zero_section, WaveFront};
use crate::math::{bracketed_root, circ_diff, par_map, wrap, TAU};
use crate::phase_space::{combination, transform, HamiltonianSpec, Metric, BasePoint, Transform};
use crate::report::{Check, Report};
use crate::spectral::{analyze, curve_for, spectral_number, Class, SpectralOptions};

/// A grid cell across which the selected sheet changes.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SingularPoint {
    pub q: f64,
    /// Grid cell `[q_i, q_{i+1}]` containing the switch.
    pub cell: usize,
    /// Selected branch on the left and on the right.
    pub branches: (usize, usize),
    /// One-sided covectors `df⁻`, `df⁺`.
    pub sigma_minus: f64,
    pub sigma_plus: f64,
    /// Index of the matching Maxwell crossing of the front.
    pub maxwell: Option<usize>,
}

/// `f_H` and `σ_H` sampled on a uniform grid of `S¹`.
#[derive(Debug, Clone)]
pub struct SelectorField {
    pub grid: Vec<f64>,
    pub f: Vec<f64>,
    pub branch: Vec<usize>,
    /// Lifted base coordinate of the selected point on its branch.
    pub lift: Vec<f64>,
    /// Momentum of the selected point.
    pub sigma: Vec<f64>,
    /// Curve parameter of the selected point (its preimage on `o_N` is at
    /// `2πs`).
    pub source: Vec<f64>,
    /// Grid points where the fiber was tangent and the value was continued
    /// from a neighbour.
    pub filled: Vec<usize>,
    /// Grid points snapped to the neighbouring branch after a numerical tie.
    pub snapped: Vec<usize>,
    pub sing_locus: Vec<SingularPoint>,
    /// Base projection of `φ^H(q)`; empty until `transfer_map` runs.
    pub transfer: Vec<f64>,
    pub curve: LagrangianCurve,
    pub front: WaveFront,
    pub tol: f64,
}

impl SelectorField {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn step(&self) -> f64 {
        TAU / self.grid.len() as f64
    }

    pub fn min_f(&self) -> f64 {
        self.f.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_f(&self) -> f64 {
        self.f.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs_sigma(&self) -> f64 {
        self.sigma.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Grid points not adjacent to a singular cell or a filled value.
    pub fn is_regular(&self, i: usize) -> bool {
        let n = self.len();
        !self.filled.contains(&i)
            && !self.sing_locus.iter().any(|s| s.cell == i || (s.cell + 1) % n == i)
    }
}

/// Samples `H`'s time-one curve and evaluates the selector on `grid_n`
/// points.
pub fn basic_phase_function(h: &HamiltonianSpec, grid_n: usize, opts: &SpectralOptions) -> Result<SelectorField> {
    selector_from_curve(curve_for(h, opts)?, grid_n, opts)
}

/// Selected point over one grid point.
#[derive(Clone, Copy)]
struct Pick {
    f: f64,
    s: f64,
    p: f64,
    branch: usize,
    lift: f64,
}

fn locate_sheet(front: &WaveFront, q: f64, s: f64) -> Option<(usize, f64, CurvePoint)> {
    let mut best: Option<(f64, usize, f64, CurvePoint)> = None;
    for b in &front.branches {
        for ql in b.lifts(q) {
            let Some(pt) = b.locate_lifted(ql) else { continue };
            let ds = {
                let d = frac(pt.s - s);
                d.min(1.0 - d)
            };
            if best.is_none_or(|(bd, ..)| ds < bd) {
                best = Some((ds, b.id, ql, pt));
            }
        }
    }
    best.filter(|(ds, ..)| *ds < 1e-6).map(|(_, id, ql, pt)| (id, ql, pt))
}

fn pick_at(curve: &LagrangianCurve, front: &WaveFront, q: f64) -> Result<Pick> {
    let c = build_complex(curve, TestObject::Fiber(q))?;
    let v = spectral_number(&c, Class::Point)?;
    let g = c.generators[v.generator];
    let (branch, lift, _) = locate_sheet(front, q, g.s)
        .ok_or_else(|| Error::Structural(format!("selected point at q = {q:.6} lies on no branch")))?;
    Ok(Pick { f: v.level, s: g.s, p: g.p, branch, lift })
}

/// Continues a branch sheet from a neighbour's pick to the base point `q`.
fn continue_pick(front: &WaveFront, from: &Pick, q: f64) -> Option<Pick> {
    let b = &front.branches[from.branch];
    let target = from.lift + circ_diff(q, wrap(from.lift));
    let pt = b.locate_lifted(target)?;
    Some(Pick { f: pt.h, s: frac(pt.s), p: pt.p, branch: b.id, lift: target })
}

/// Selector from an already sampled curve.
pub fn selector_from_curve(curve: LagrangianCurve, grid_n: usize, opts: &SpectralOptions) -> Result<SelectorField> {
    if grid_n < 256 {
        return Err(Error::Precondition(format!("selector grid needs at least 256 points, got {grid_n}")));
    }
    let front = decompose_front(&curve)?;
    let tol = 1e-4 * front.action_scale * opts.tol_scale;
    let grid: Vec<f64> = (0..grid_n).map(|i| TAU * i as f64 / grid_n as f64).collect();
    let raw = par_map(&grid, |&q| pick_at(&curve, &front, q));
    let mut picks: Vec<Option<Pick>> = Vec::with_capacity(grid_n);
    let mut failed = Vec::new();
    for (i, r) in raw.into_iter().enumerate() {
        match r {
            Ok(p) => picks.push(Some(p)),
            Err(Error::Precondition(_)) => {
                picks.push(None);
                failed.push(i);
            }
            Err(e) => return Err(e),
        }
    }
    if failed.len() == grid_n || failed.len() > grid_n / 16 {
        return Err(Error::Degenerate(format!(
            "fibers are tangent to the curve at {} of {grid_n} grid points",
            failed.len()
        )));
    }
    // one-sided continuation from the nearest transverse neighbour
    for &i in &failed {
        let mut filled = None;
        for d in 1..grid_n {
            for j in [(i + grid_n - d) % grid_n, (i + d) % grid_n] {
                if let Some(src) = picks[j].filter(|_| !failed.contains(&j)) {
                    filled = continue_pick(&front, &src, grid[i]);
                }
                if filled.is_some() {
                    break;
                }
            }
            if filled.is_some() {
                break;
            }
        }
        picks[i] = Some(filled.ok_or_else(|| Error::Degenerate(format!("cannot continue the selector to q = {:.6}", grid[i])))?);
    }
    let mut picks: Vec<Pick> = picks.into_iter().map(|p| p.unwrap()).collect();

    // isolated one-cell branch deviations from numerical ties
    let mut snapped = Vec::new();
    for i in 0..grid_n {
        let l = picks[(i + grid_n - 1) % grid_n];
        let r = picks[(i + 1) % grid_n];
        if l.branch == r.branch && picks[i].branch != l.branch {
            if let Some(c) = continue_pick(&front, &l, grid[i]) {
                if (c.f - picks[i].f).abs() <= tol {
                    picks[i] = c;
                    snapped.push(i);
                }
            }
        }
    }

    let step = TAU / grid_n as f64;
    let mut sing_locus = Vec::new();
    if !front.caustics.is_empty() {
        for i in 0..grid_n {
            let a = picks[i];
            let b = picks[(i + 1) % grid_n];
            if a.branch == b.branch && (b.lift - a.lift - step).abs() < 0.5 * step {
                continue;
            }
            sing_locus.push(singular_point(&front, i, &a, &b, step));
        }
    }

    Ok(SelectorField {
        f: picks.iter().map(|p| p.f).collect(),
        branch: picks.iter().map(|p| p.branch).collect(),
        lift: picks.iter().map(|p| p.lift).collect(),
        sigma: picks.iter().map(|p| p.p).collect(),
        source: picks.iter().map(|p| p.s).collect(),
        grid,
        filled: failed,
        snapped,
        sing_locus,
        transfer: Vec::new(),
        curve,
        front,
        tol,
    })
}

/// Locates the height crossing of the two selected sheets inside a cell.
fn singular_point(front: &WaveFront, cell: usize, a: &Pick, b: &Pick, step: f64) -> SingularPoint {
    let ba = &front.branches[a.branch];
    let bb = &front.branches[b.branch];
    let at = |u: f64| -> Option<(CurvePoint, CurvePoint)> {
        Some((ba.locate_lifted(a.lift + u * step)?, bb.locate_lifted(b.lift - (1.0 - u) * step)?))
    };
    let diff = |u: f64| at(u).map_or(f64::NAN, |(x, y)| x.h - y.h);
    // a branch may end at a caustic inside the cell
    let (alo, ahi) = ba.base_range();
    let (blo, bhi) = bb.base_range();
    let lo = 0.0f64.max((alo - a.lift) / step).max(1.0 + (blo - b.lift) / step) + 1e-12;
    let hi = 1.0f64.min((ahi - a.lift) / step).min(1.0 + (bhi - b.lift) / step) - 1e-12;
    let u = if lo < hi { bracketed_root(diff, lo, hi, 1e-14) } else { None }.unwrap_or(0.5);
    let (sm, sp) = at(u).map_or((a.p, b.p), |(x, y)| (x.p, y.p));
    let q = wrap(a.lift + u * step);
    let pair = (a.branch.min(b.branch), a.branch.max(b.branch));
    let maxwell = front.maxwell_crossings.iter().position(|m| {
        (m.branches.0.min(m.branches.1), m.branches.0.max(m.branches.1)) == pair
            && circ_diff(m.q, q).abs() < 2.0 * step
            && (m.height - sp_height(front, b, q)).abs() < 1e-3 * front.action_scale.max(1.0)
    });
    SingularPoint { q, cell, branches: (a.branch, b.branch), sigma_minus: sm, sigma_plus: sp, maxwell }
}

fn sp_height(front: &WaveFront, b: &Pick, q: f64) -> f64 {
    continue_pick(front, b, q).map_or(b.f, |p| p.f)
}

/// Grid points where the selected sheet changes (with one-sided covectors).
pub fn singular_locus(field: &SelectorField) -> Vec<SingularPoint> {
    field.sing_locus.clone()
}

/// Fills `φ^H(q) = π (φ¹_H)⁻¹(q, σ_H(q))` by backward integration and checks
/// it against the curve parameter of the selected point, the displacement
/// bound and `f(q) = 𝒜_H(z^{φ^H(q)})`.
pub fn transfer_map(h: &HamiltonianSpec, field: &SelectorField, opts: &SpectralOptions) -> Result<(SelectorField, Report)> {
    let n = field.len();
    let idx: Vec<usize> = (0..n).collect();
    let back = par_map(&idx, |&i| inverse_time_one(h, &[field.grid[i], 0.0, field.sigma[i], 0.0], opts.steps));
    let mut transfer = Vec::with_capacity(n);
    for b in back {
        transfer.push(wrap(b?[0]));
    }
    let osc = osc_c0_with(h, 256, opts.steps)?;
    let dh = hausdorff_to_zero_section(&field.curve);
    let metric = Metric::default();
    let mut worst_disp: f64 = 0.0;
    let mut worst_src: f64 = 0.0;
    let mut worst_action: f64 = 0.0;
    for i in 0..n {
        if !field.is_regular(i) {
            continue;
        }
        let d = metric.base_distance(&BasePoint::circle(transfer[i]), &BasePoint::circle(field.grid[i]));
        worst_disp = worst_disp.max(d);
        worst_src = worst_src.max(circ_diff(transfer[i], TAU * field.source[i]).abs());
        let z = field.curve.eval(field.source[i])?;
        worst_action = worst_action.max((z.h - field.f[i]).abs());
    }
    let geom = 1e-6 * (1.0 + field.curve.max_abs_p());
    let mut r = Report::default();
    r.push(Check::at_most("transfer displacement <= d_H + osc", worst_disp, dh + osc, geom));
    r.push(Check::at_most("transfer displacement <= 2 osc", worst_disp, 2.0 * osc, geom));
    r.push(Check::within("transfer agrees with the selected preimage", worst_src, 1e-5));
    r.push(Check::within("f(q) = action at the transferred point", worst_action, field.tol));
    let mut out = field.clone();
    out.transfer = transfer;
    Ok((out, r))
}

/// `(q, σ(q)) ∈ L`, `|σ| ≤ max|P|`, `σ = df` on regular cells and `f` taking
/// values in the front.
pub fn verify_selector_axioms(field: &SelectorField) -> Result<Report> {
    let n = field.len();
    let step = field.step();
    let mut on_curve: f64 = 0.0;
    let mut in_front: f64 = 0.0;
    for i in 0..n {
        let z = field.curve.eval(field.source[i])?;
        on_curve = on_curve.max(circ_diff(z.q, field.grid[i]).abs()).max((z.p - field.sigma[i]).abs());
        let d = field
            .front
            .sheets(field.grid[i])
            .iter()
            .map(|(_, p)| (p.h - field.f[i]).abs())
            .fold(f64::INFINITY, f64::min);
        in_front = in_front.max(d);
    }
    let mut r = Report::default();
    r.push(Check::within("(q, sigma(q)) lies on L", on_curve, 1e-6 * (1.0 + field.curve.max_abs_p())));
    r.push(Check::within("f(q) is a branch height", in_front, field.tol));
    r.push(Check::at_most("sup |sigma| <= max |P|", field.max_abs_sigma(), field.curve.max_abs_p(), 1e-4 * (1.0 + field.curve.max_abs_p())));
    let (mut df_gap, mut lip): (f64, f64) = (0.0, 0.0);
    let maxp = field.curve.max_abs_p();
    for i in 0..n {
        let j = (i + 1) % n;
        let df = field.f[j] - field.f[i];
        lip = lip.max(df.abs() - maxp * step);
        if field.is_regular(i) && field.is_regular(j) {
            // trapezoid rule error is bounded by the local variation of σ
            let trap = 0.5 * step * (field.sigma[i] + field.sigma[j]);
            let slack = step * (field.sigma[j] - field.sigma[i]).abs();
            df_gap = df_gap.max((df - trap).abs() - slack);
        }
    }
    r.push(Check::within("f is max|P|-Lipschitz", lip, field.tol));
    r.push(Check::within("one-sided differences of f match sigma", df_gap, field.tol));
    let mx = field.sing_locus.iter().filter(|s| s.maxwell.is_none()).count();
    r.push(Check::within("singular points sit on Maxwell crossings", mx as f64, 0.0));
    Ok(r)
}

/// `sup|σ_{εH}|` decreases along a shrinking sequence of multipliers.
pub fn verify_shrinking(h: &HamiltonianSpec, eps: &[f64], grid_n: usize, opts: &SpectralOptions) -> Result<Report> {
    let mut sups = Vec::with_capacity(eps.len());
    for &e in eps {
        sups.push(basic_phase_function(&h.clone().scaled(e), grid_n, opts)?.max_abs_sigma());
    }
    let mut r = Report::default();
    for k in 1..sups.len() {
        r.push(Check::at_most(format!("sup|sigma| at eps = {}", eps[k]), sups[k], sups[k - 1], 1e-9));
    }
    Ok(r)
}

/// `‖f_H − f_K‖_∞ ≤ ‖H − K‖` on a common grid, up to `10⁻³ ‖H − K‖` plus
/// the two action tolerances.
pub fn verify_lipschitz(h: &HamiltonianSpec, k: &HamiltonianSpec, grid_n: usize, opts: &SpectralOptions) -> Result<Report> {
    let a = basic_phase_function(h, grid_n, opts)?;
    let b = basic_phase_function(k, grid_n, opts)?;
    let gap = sup_gap(&a, &b);
    let dist = hofer_norm(&combination(vec![(1.0, h.clone()), (-1.0, k.clone())])?, 64, 128)?;
    let mut r = Report::default();
    r.push(Check::at_most("sup |f_H - f_K| <= ||H - K||", gap, dist, 1e-3 * dist + a.tol + b.tol).with_note(format!("gap {gap:.6e}, Hofer {dist:.6e}")));
    Ok(r)
}

/// Along a sequence, consecutive selector gaps are bounded by consecutive
/// Hofer distances, so a Hofer-Cauchy sequence has uniformly Cauchy
/// selectors.
pub fn verify_uniform_convergence(hs: &[HamiltonianSpec], grid_n: usize, opts: &SpectralOptions) -> Result<Report> {
    let mut r = Report::default();
    for w in hs.windows(2) {
        r.extend(verify_lipschitz(&w[0], &w[1], grid_n, opts)?);
    }
    Ok(r)
}

/// `ρ(pt) ≤ min f ≤ max f ≤ ρ(1)`; the gaps are recorded in the notes.
pub fn verify_comparison(h: &HamiltonianSpec, field: &SelectorField, opts: &SpectralOptions) -> Result<Report> {
    let a = analyze(h, opts)?;
    let tol = a.tol.max(field.tol) + a.numbers.perturbation_error;
    let (lo, hi) = (field.min_f(), field.max_f());
    let mut r = Report::default();
    r.push(
        Check::at_most("rho(pt) <= min f", a.numbers.rho_pt, lo, tol)
            .with_note(format!("gap {:.6e}", lo - a.numbers.rho_pt)),
    );
    r.push(
        Check::at_most("max f <= rho(1)", hi, a.numbers.rho_one, tol)
            .with_note(format!("gap {:.6e}", a.numbers.rho_one - hi)),
    );
    Ok(r)
}

/// `f_{H^𝔯} = −f_H` pointwise.
pub fn verify_reflection(h: &HamiltonianSpec, grid_n: usize, opts: &SpectralOptions) -> Result<Report> {
    let a = basic_phase_function(h, grid_n, opts)?;
    let b = basic_phase_function(&transform(h, Transform::Reflect)?, grid_n, opts)?;
    let worst = a.f.iter().zip(&b.f).map(|(x, y)| (x + y).abs()).fold(0.0, f64::max);
    let mut r = Report::default();
    r.push(Check::within("f of the reflection = -f", worst, a.tol + b.tol));
    Ok(r)
}

fn sup_gap(a: &SelectorField, b: &SelectorField) -> f64 {
    a.f.iter().zip(&b.f).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn frac(x: f64) -> f64 {
    x - x.floor()
}
