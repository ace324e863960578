//! B-supported Hamiltonians, the shifting constant `C_(f;B,T)`, the
//! shifting lemma and the capacity bound `γ ≤ (2 osc f / C) · osc_C0`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::flow::{osc_c0_with, propagate, time_one_curve_with, CurveOptions};
use crate::front::zero_section_crossings;
use crate::math::{bracketed_root, circ_diff, par_map, wrap, PI, TAU};
use crate::phase_space::{
    compose_product, BaseProfile, FiberProfile, HamiltonianSpec, Support, Term, TimeProfile,
};
use crate::report::{Check, Report};
use crate::spectral::{gamma, SpectralOptions};

/// Closed arc `[center − half_width, center + half_width]` of `S¹`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Arc {
    pub center: f64,
    pub half_width: f64,
}

impl Arc {
    /// Signed distance to the complement: positive inside the arc.
    pub fn depth(&self, q: f64) -> f64 {
        self.half_width - circ_diff(q, self.center).abs()
    }

    pub fn contains(&self, q: f64) -> bool {
        self.depth(q) >= 0.0
    }
}

/// `(B, T, f, H)` for the capacity experiments.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CapacityScenario {
    pub b: Arc,
    /// Fiber radius of the tube `T ⊃ o_B`.
    pub t_radius: f64,
    /// Morse function with its critical points inside `B`.
    pub f: BaseProfile,
    /// Hamiltonian whose flow is the identity on `T`.
    pub h: HamiltonianSpec,
}

/// Resolution of the grid searches over `S¹`.
const GRID: usize = 8192;

fn derivative(f: &BaseProfile, q: f64) -> f64 {
    f.eval([q, 0.0]).g[0]
}

/// Critical points of a one-dimensional profile, from sign changes of `f'`
/// on a fine grid polished by bracketing.
pub fn critical_points(f: &BaseProfile) -> Vec<f64> {
    let h = TAU / GRID as f64;
    let mut out = Vec::new();
    for i in 0..GRID {
        let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
        let (da, db) = (derivative(f, a), derivative(f, b));
        if da == 0.0 {
            out.push(a);
        } else if da * db < 0.0 {
            if let Some(r) = bracketed_root(|q| derivative(f, q), a, b, 1e-15) {
                out.push(wrap(r));
            }
        }
    }
    out
}

fn osc_profile(f: &BaseProfile) -> f64 {
    let mut vals: Vec<f64> = (0..GRID).map(|i| f.eval([TAU * i as f64 / GRID as f64, 0.0]).v).collect();
    vals.extend(critical_points(f).iter().map(|&c| f.eval([c, 0.0]).v));
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

/// `C = min(min_{N∖B} |df|, dist(N∖B, Crit f))`, with `Graph df|_B ⊂ T`
/// checked against the tube radius.
pub fn constant_c(f: &BaseProfile, b: Arc, t_radius: f64) -> Result<f64> {
    if !f.is_one_dimensional() {
        return Err(Error::Unsupported("the shifting constant is computed on S¹".into()));
    }
    let crit = critical_points(f);
    if crit.is_empty() {
        return Err(Error::Precondition("f has no critical points".into()));
    }
    if let Some(c) = crit.iter().find(|&&c| b.depth(c) <= 0.0) {
        return Err(Error::Precondition(format!("critical point q = {c:.6} lies outside Int B")));
    }
    let h = TAU / GRID as f64;
    let mut min_slope = f64::INFINITY;
    let mut max_in_b: f64 = 0.0;
    let mut argmin = 0.0;
    for i in 0..GRID {
        let q = i as f64 * h;
        let d = derivative(f, q).abs();
        if b.contains(q) {
            max_in_b = max_in_b.max(d);
        } else if d < min_slope {
            min_slope = d;
            argmin = q;
        }
    }
    // polish the minimum of |f'| over the complement (and its endpoints)
    let ends = [wrap(b.center + b.half_width), wrap(b.center - b.half_width)];
    for q in ends {
        min_slope = min_slope.min(derivative(f, q).abs());
    }
    let (mut lo, mut hi) = (argmin - h, argmin + h);
    for _ in 0..80 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        let (v1, v2) = (derivative(f, m1).abs(), derivative(f, m2).abs());
        if v1 < v2 {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let mid = 0.5 * (lo + hi);
    if !b.contains(mid) {
        min_slope = min_slope.min(derivative(f, mid).abs());
    }
    if min_slope < 1e-12 {
        return Err(Error::Precondition("df vanishes somewhere on N∖B".into()));
    }
    if max_in_b > t_radius {
        return Err(Error::Precondition(format!(
            "Graph df|_B leaves the tube: max |df| on B = {max_in_b:.6} > {t_radius}"
        )));
    }
    let dist = crit.iter().map(|&c| b.depth(c)).fold(f64::INFINITY, f64::min);
    Ok(min_slope.min(dist))
}

/// A B-supported Hamiltonian: on `[0, ½]` the base lift of a bump centred
/// opposite to `B`, on `[½, 1]` a compactly supported fiber shear localised
/// over the same region, all scaled by `amplitude`. The vector field
/// vanishes over a neighbourhood of `B`, so the flow is the identity on any
/// tube over `B`.
pub fn b_supported(b: Arc, width: f64, shear: f64, amplitude: f64) -> Result<HamiltonianSpec> {
    let center = wrap(b.center + PI);
    if width + b.half_width >= PI {
        return Err(Error::Precondition("bump support overlaps B".into()));
    }
    let terms = vec![
        Term {
            scale: amplitude,
            time: TimeProfile::Bump { start: 0.0, end: 0.5 },
            base: BaseProfile::Bump { center, half_width: width },
            fiber: FiberProfile::Cutoff,
        },
        Term {
            scale: amplitude,
            time: TimeProfile::Bump { start: 0.5, end: 1.0 },
            base: BaseProfile::Plateau { center, half_width: width, ramp: 0.5 * width },
            fiber: FiberProfile::CompactQuadratic { twist: shear },
        },
    ];
    Ok(HamiltonianSpec::from_terms(1, Support::default(), terms))
}

/// Built-in scenario: `B` of half-width 0.9 around 0, a ramp with slope 0.3
/// and critical points near `±0.4`, and the B-supported family at
/// `amplitude`.
pub fn standard_scenario(amplitude: f64) -> Result<CapacityScenario> {
    let b = Arc { center: 0.0, half_width: 0.9 };
    Ok(CapacityScenario {
        b,
        t_radius: 3.0,
        f: BaseProfile::Ramp { center: 0.0, half_width: 0.6, slope: 0.3 },
        h: b_supported(b, 1.6, 4.0, amplitude)?,
    })
}

fn osc_of(h: &HamiltonianSpec, opts: &SpectralOptions) -> Result<f64> {
    osc_c0_with(h, 512, opts.steps)
}

/// `L_f ∩ o_N = φ¹_H(L_f) ∩ o_N` and the chords of `H # f∘π` ending there
/// are constant.
pub fn verify_shift_lemma(sc: &CapacityScenario, opts: &SpectralOptions) -> Result<Report> {
    let c = constant_c(&sc.f, sc.b, sc.t_radius)?;
    let osc = osc_of(&sc.h, opts)?;
    let mut r = Report::default();
    if osc >= c {
        r.push(Check::skipped("shift lemma", format!("osc_C0 = {osc:.6} is not below C = {c:.6}")));
        return Ok(r);
    }
    let mut crit = critical_points(&sc.f);
    crit.sort_by(f64::total_cmp);
    // the base lift of −f carries o_N to L_f = Graph df
    let lift = HamiltonianSpec::base_lift(1, sc.f.clone(), TimeProfile::Constant)
        .scaled(-1.0)
        .with_support(Support { inner: 2.0 * sc.t_radius, outer: 3.0 * sc.t_radius });
    let product = compose_product(&sc.h, &lift)?;
    let curve = time_one_curve_with(&product, opts.samples.max(512), CurveOptions { steps: opts.steps, ..CurveOptions::default() })?;
    let mut hits: Vec<f64> = zero_section_crossings(&curve)?.iter().map(|z| wrap(z.q)).collect();
    hits.sort_by(f64::total_cmp);
    r.push(Check::within("intersection counts agree", (hits.len() as f64 - crit.len() as f64).abs(), 0.0)
        .with_note(format!("Crit f: {crit:?}; image: {hits:?}")));
    if hits.len() == crit.len() {
        let worst = hits.iter().zip(&crit).map(|(a, b)| circ_diff(*a, *b).abs()).fold(0.0, f64::max);
        r.push(Check::within("intersection positions agree", worst, 1e-8));
    }
    // chords t ↦ φᵗ_H φᵗ_{f∘π}(o_p) stay at o_p
    let mut drift: f64 = 0.0;
    for &p in &crit {
        for k in 0..=8 {
            let t = k as f64 / 8.0;
            let z = propagate(&lift, 0.0, t, &[p, 0.0, 0.0, 0.0], opts.steps, false)?.state;
            let z = propagate(&sc.h, 0.0, t, &z, opts.steps, false)?.state;
            drift = drift.max(circ_diff(z[0], p).abs()).max(z[2].abs());
        }
    }
    r.push(Check::within("chords at the intersections are constant", drift, 1e-12));
    Ok(r)
}

/// `λ f` for the profiles that admit exact rescaling.
pub fn scaled_profile(f: &BaseProfile, lambda: f64) -> Result<BaseProfile> {
    match f {
        BaseProfile::Fourier { modes } => Ok(BaseProfile::Fourier {
            modes: modes.iter().map(|m| crate::phase_space::Mode { k: m.k, a: lambda * m.a, b: lambda * m.b }).collect(),
        }),
        BaseProfile::Ramp { center, half_width, slope } if lambda > 0.0 => {
            Ok(BaseProfile::Ramp { center: *center, half_width: *half_width, slope: lambda * slope })
        }
        _ => Err(Error::Unsupported("profile cannot be rescaled".into())),
    }
}

/// One row of the capacity bound.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CapacityRow {
    pub amplitude: f64,
    pub osc_c0: f64,
    pub gamma: f64,
    /// `(2 osc f / C) · osc_C0`.
    pub bound: f64,
    /// `osc_C0 < C`, so the bound applies.
    pub admissible: bool,
}

/// `γ / osc_C0 ≤ 2 osc f / C`, plus `γ ≤ 2 osc(δf)` for the smallest
/// admissible rescaling `δ f`.
pub fn capacity_bound(sc: &CapacityScenario, opts: &SpectralOptions) -> Result<(CapacityRow, Report)> {
    let c = constant_c(&sc.f, sc.b, sc.t_radius)?;
    let osc_f = osc_profile(&sc.f);
    let osc = osc_of(&sc.h, opts)?;
    let mut r = Report::default();
    let mut row = CapacityRow { amplitude: f64::NAN, osc_c0: osc, gamma: 0.0, bound: 2.0 * osc_f / c * osc, admissible: false };
    if osc <= 1e-12 {
        r.push(Check::skipped("capacity bound", "osc_C0 vanishes"));
        return Ok((row, r));
    }
    let g = gamma(&sc.h, opts)?;
    row.gamma = g.gamma;
    if osc >= c {
        r.push(Check::skipped("capacity bound", format!("osc_C0 = {osc:.6} is not below C = {c:.6}")));
        return Ok((row, r));
    }
    row.admissible = true;
    let tol = 1e-4 * opts.tol_scale * g.rho_one.abs().max(g.rho_pt.abs()).max(1e-3) + g.perturbation_error;
    r.push(Check::at_most("gamma / osc_C0 <= 2 osc f / C", g.gamma / osc, 2.0 * osc_f / c, tol / osc));
    // the intermediate inequality for δ f with C(δf) just above osc_C0
    let delta = (osc / c) * (1.0 + 1e-6);
    if delta < 1.0 {
        if let Ok(df) = scaled_profile(&sc.f, delta) {
            let cd = constant_c(&df, sc.b, sc.t_radius)?;
            if cd > osc {
                r.push(Check::at_most("gamma <= 2 osc(delta f)", g.gamma, 2.0 * osc_profile(&df), tol));
            }
        }
    }
    Ok((row, r))
}

/// `γ` against `osc_C0` along a family `H_ε`: rowwise bound, monotone decay
/// and the ratio of the last to the first `γ`.
pub fn continuity_experiment<F>(family: F, eps_list: &[f64], opts: &SpectralOptions) -> Result<(Vec<CapacityRow>, Report)>
where
    F: Fn(f64) -> Result<CapacityScenario> + Sync,
{
    let rows = par_map(eps_list, |&e| -> Result<(CapacityRow, Report)> {
        let sc = family(e)?;
        let (mut row, rep) = capacity_bound(&sc, opts)?;
        row.amplitude = e;
        Ok((row, rep))
    });
    let mut table = Vec::with_capacity(rows.len());
    let mut r = Report::default();
    for res in rows {
        let (row, rep) = res?;
        for c in rep.checks {
            r.push(Check { name: format!("{} (eps = {})", c.name, row.amplitude), ..c });
        }
        table.push(row);
    }
    for w in table.windows(2) {
        if w[1].amplitude < w[0].amplitude {
            let tol = 1e-4 * opts.tol_scale * w[0].gamma.abs().max(1e-3);
            r.push(Check::at_most(format!("gamma decreases at eps = {}", w[1].amplitude), w[1].gamma, w[0].gamma, tol));
        }
    }
    Ok((table, r))
}
