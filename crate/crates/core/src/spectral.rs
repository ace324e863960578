//! Min-max spectral numbers from filtered complexes, the end-to-end
//! pipeline `H ↦ ρ(H; ·)`, and the identity/inequality harness.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::floer::{build_complex, FilteredChainComplex, TestObject};
use crate::flow::{time_one_curve_with, CurveOptions, LagrangianCurve, DEFAULT_STEPS};
use crate::front::{action_spectrum, decompose_front, ActionSpectrum, WaveFront};
use crate::phase_space::{compose_product, concatenate, transform, BaseProfile, Chi, HamiltonianSpec, Transform};
use crate::report::{Check, Report};

/// Homology class whose spectral number is requested.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Class {
    /// The fundamental class `1` of `HF(L, o_N)`.
    Fundamental,
    /// The point class `[pt]^♯` of `HF(L, o_N)`.
    Point,
    /// The unique class of `HF(L, T*_q N)`; its level is `f_H(q)`.
    Fiber(f64),
}

/// Output of the boundary-matrix reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    /// Generator ids in filtration order (action, then id).
    pub order: Vec<usize>,
    /// Finite bars as (birth generator, death generator).
    pub pairs: Vec<(usize, usize)>,
    /// Essential classes: (generator whose level is the birth, cycle of
    /// generator ids representing it with that maximal level).
    pub essential: Vec<(usize, Vec<usize>)>,
}

fn xor_into(a: &mut Vec<usize>, b: &[usize]) {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x == y => {
                i += 1;
                j += 1;
            }
            (Some(&x), Some(&y)) if x < y => {
                out.push(x);
                i += 1;
            }
            (Some(_), Some(&y)) => {
                out.push(y);
                j += 1;
            }
            (Some(&x), None) => {
                out.push(x);
                i += 1;
            }
            (None, Some(&y)) => {
                out.push(y);
                j += 1;
            }
            (None, None) => break,
        }
    }
    *a = out;
}

/// Left-to-right Z/2 reduction of the boundary matrix in filtration order.
pub fn reduce(complex: &FilteredChainComplex) -> Reduction {
    let n = complex.len();
    let gens = &complex.generators;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| gens[a].action.total_cmp(&gens[b].action).then(a.cmp(&b)));
    let mut pos = vec![0; n];
    for (k, &g) in order.iter().enumerate() {
        pos[g] = k;
    }
    let mut r: Vec<Vec<usize>> = order
        .iter()
        .map(|&g| {
            let mut c: Vec<usize> = complex.boundary[g].iter().map(|&j| pos[j]).collect();
            c.sort_unstable();
            c
        })
        .collect();
    let mut v: Vec<Vec<usize>> = (0..n).map(|k| vec![k]).collect();
    let mut pivot_of: Vec<Option<usize>> = vec![None; n];
    for j in 0..n {
        while let Some(&low) = r[j].last() {
            match pivot_of[low] {
                Some(k) => {
                    let (rk, vk) = (r[k].clone(), v[k].clone());
                    xor_into(&mut r[j], &rk);
                    xor_into(&mut v[j], &vk);
                }
                None => {
                    pivot_of[low] = Some(j);
                    break;
                }
            }
        }
    }
    let mut pairs = Vec::new();
    let mut essential = Vec::new();
    for j in 0..n {
        if let Some(&low) = r[j].last() {
            pairs.push((order[low], order[j]));
        } else if pivot_of[j].is_none() {
            let cycle: Vec<usize> = v[j].iter().map(|&k| order[k]).collect();
            essential.push((order[j], cycle));
        }
    }
    Reduction { order, pairs, essential }
}

/// A spectral number with the cycle realising it.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpectralValue {
    pub level: f64,
    pub generator: usize,
    pub cycle: Vec<usize>,
}

fn class_grading(test: TestObject, cls: Class) -> Result<Option<u8>> {
    match (test, cls) {
        (TestObject::ZeroSection, Class::Fundamental) => Ok(Some(1)),
        (TestObject::ZeroSection, Class::Point) => Ok(Some(0)),
        (TestObject::Fiber(_), Class::Point | Class::Fiber(_)) => Ok(None),
        _ => Err(Error::Structural(format!("class {cls:?} is not defined for test object {test:?}"))),
    }
}

/// Level at which `cls` is born: the infimum over representing cycles of
/// their top action.
pub fn spectral_number(complex: &FilteredChainComplex, cls: Class) -> Result<SpectralValue> {
    let grading = class_grading(complex.test, cls)?;
    let red = reduce(complex);
    let matching: Vec<&(usize, Vec<usize>)> = red
        .essential
        .iter()
        .filter(|(g, _)| grading.is_none_or(|gr| complex.generators[*g].grading == gr))
        .collect();
    if matching.len() != 1 {
        return Err(Error::Structural(format!(
            "expected one essential class for {cls:?}, found {} (homology rank {})",
            matching.len(),
            red.essential.len()
        )));
    }
    let (g, cycle) = matching[0];
    Ok(SpectralValue { level: complex.generators[*g].action, generator: *g, cycle: cycle.clone() })
}

/// Spectral number by enumerating every Z/2 chain (at most 12 generators):
/// the least top level of a cycle in the class's grading that is not a
/// boundary.
pub fn brute_force_spectral_number(complex: &FilteredChainComplex, cls: Class) -> Result<f64> {
    let n = complex.len();
    if n > 12 {
        return Err(Error::Precondition("brute-force enumeration is limited to 12 generators".into()));
    }
    let grading = class_grading(complex.test, cls)?;
    let dmask: Vec<u32> = complex.boundary.iter().map(|c| c.iter().fold(0u32, |m, &j| m | (1 << j))).collect();
    // xor basis of the image of ∂
    let mut basis: Vec<u32> = Vec::new();
    let reduce_mask = |basis: &[u32], mut m: u32| {
        for &b in basis {
            m = m.min(m ^ b);
        }
        m
    };
    for &d in &dmask {
        let r = reduce_mask(&basis, d);
        if r != 0 {
            basis.push(r);
            basis.sort_unstable_by(|a, b| b.cmp(a));
        }
    }
    let mut best = f64::INFINITY;
    for mask in 1u32..(1u32 << n) {
        let mut boundary = 0u32;
        let mut top = f64::NEG_INFINITY;
        let mut ok = true;
        for i in 0..n {
            if mask & (1 << i) != 0 {
                boundary ^= dmask[i];
                top = top.max(complex.generators[i].action);
                if grading.is_some_and(|g| complex.generators[i].grading != g) {
                    ok = false;
                }
            }
        }
        if ok && boundary == 0 && reduce_mask(&basis, mask) != 0 {
            best = best.min(top);
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::Structural(format!("no cycle represents {cls:?}")))
    }
}

/// Numerical controls of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpectralOptions {
    /// Initial curve samples (≥ 256 for public entry points).
    pub samples: usize,
    /// Integrator steps on `[0, 1]`.
    pub steps: usize,
    /// Size of the base-lift shift applied when the curve meets the zero
    /// section non-transversally.
    pub perturbation: f64,
    /// Multiplier on the default action tolerance `10⁻⁴ × scale`.
    pub tol_scale: f64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self { samples: 256, steps: DEFAULT_STEPS, perturbation: 1e-9, tol_scale: 1.0 }
    }
}

/// Generic shift profile for degenerate intersections (`osc ≈ 3.6`).
pub fn perturbation_profile() -> BaseProfile {
    BaseProfile::fourier1(&[(1, 1.0), (2, 0.37)], &[(1, 0.61), (3, 0.23)])
}

/// `ρ(1)`, `ρ([pt]^♯)` and `γ` with provenance.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpectralNumbers {
    pub rho_one: f64,
    pub rho_pt: f64,
    pub gamma: f64,
    pub one: SpectralValue,
    pub pt: SpectralValue,
    /// Bound on the change of every ρ caused by the transversality shift
    /// (0 when none was needed).
    pub perturbation_error: f64,
    /// Two generators have actions within tolerance.
    pub action_ties: bool,
}

/// Everything computed for one Hamiltonian on `T*S¹`.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub curve: LagrangianCurve,
    pub front: WaveFront,
    pub spectrum: ActionSpectrum,
    pub complex: FilteredChainComplex,
    pub numbers: SpectralNumbers,
    /// Action tolerance `10⁻⁴ × action scale × tol_scale`.
    pub tol: f64,
}

/// Samples the time-one curve of `h` with the given options.
pub fn curve_for(h: &HamiltonianSpec, opts: &SpectralOptions) -> Result<LagrangianCurve> {
    if h.dim != 1 {
        return Err(Error::Unsupported("spectral numbers are computed on T*S¹".into()));
    }
    time_one_curve_with(h, opts.samples, CurveOptions { steps: opts.steps, ..CurveOptions::default() })
}

/// Flow → front → complex → reduction.
pub fn analyze(h: &HamiltonianSpec, opts: &SpectralOptions) -> Result<Analysis> {
    analyze_curve(curve_for(h, opts)?, opts)
}

/// The pipeline from an already sampled curve.
pub fn analyze_curve(curve: LagrangianCurve, opts: &SpectralOptions) -> Result<Analysis> {
    let mut curve = curve;
    let mut front = decompose_front(&curve)?;
    let mut perturbation_error = 0.0;
    if front.has_degenerate_crossing() {
        let g = perturbation_profile();
        curve = curve.shifted(&g, opts.perturbation)?;
        front = decompose_front(&curve)?;
        perturbation_error = opts.perturbation * 3.6;
        if front.has_degenerate_crossing() {
            return Err(Error::Degenerate("zero-section contact stays degenerate after the shift".into()));
        }
    }
    if !front.non_generic.is_empty() {
        return Err(Error::NonGeneric(format!(
            "three or more branches share a height at q = {:?}",
            front.non_generic
        )));
    }
    let tol = 1e-4 * front.action_scale * opts.tol_scale;
    let spectrum = action_spectrum(&front, tol);
    let complex = build_complex(&curve, TestObject::ZeroSection)?;
    if !complex.d_squared_vanishes() {
        return Err(Error::Structural("∂² ≠ 0 in the zero-section complex".into()));
    }
    let one = spectral_number(&complex, Class::Fundamental)?;
    let pt = spectral_number(&complex, Class::Point)?;
    let action_ties = spectrum.values.iter().any(|v| v.merged);
    let numbers = SpectralNumbers {
        rho_one: one.level,
        rho_pt: pt.level,
        gamma: one.level - pt.level,
        one,
        pt,
        perturbation_error,
        action_ties,
    };
    Ok(Analysis { curve, front, spectrum, complex, numbers, tol })
}

/// End-to-end spectral number of one class.
pub fn rho(h: &HamiltonianSpec, cls: Class, opts: &SpectralOptions) -> Result<f64> {
    match cls {
        Class::Fiber(q) => fiber_rho(&curve_for(h, opts)?, q),
        _ => {
            let a = analyze(h, opts)?;
            Ok(if cls == Class::Fundamental { a.numbers.rho_one } else { a.numbers.rho_pt })
        }
    }
}

/// `f_H(q)` from the fiber complex over `q`.
pub fn fiber_rho(curve: &LagrangianCurve, q: f64) -> Result<f64> {
    let c = build_complex(curve, TestObject::Fiber(q))?;
    Ok(spectral_number(&c, Class::Point)?.level)
}

/// `γ = ρ(1) − ρ([pt]^♯)` with provenance.
pub fn gamma(h: &HamiltonianSpec, opts: &SpectralOptions) -> Result<SpectralNumbers> {
    Ok(analyze(h, opts)?.numbers)
}

/// Both ρ values lie in the action spectrum.
pub fn verify_spectrality(h: &HamiltonianSpec, opts: &SpectralOptions) -> Result<Report> {
    let a = analyze(h, opts)?;
    let mut r = Report::default();
    let tol = a.tol + a.numbers.perturbation_error;
    r.push(Check::within("spectrality rho_one", a.spectrum.distance(a.numbers.rho_one), tol));
    r.push(Check::within("spectrality rho_pt", a.spectrum.distance(a.numbers.rho_pt), tol));
    r.push(Check::at_most("gamma nonnegative", -a.numbers.gamma, 0.0, tol));
    Ok(r)
}

/// `ρ(H^𝔯; 1) = −ρ(H; [pt]^♯)` and the same for the time-reversed
/// Hamiltonian, plus the companion identities with the classes swapped.
pub fn verify_duality(h: &HamiltonianSpec, opts: &SpectralOptions) -> Result<Report> {
    let base = analyze(h, opts)?;
    let mut r = Report::default();
    for (name, which) in [("reflect", Transform::Reflect), ("time_reverse", Transform::TimeReverse)] {
        let t = analyze(&transform(h, which)?, opts)?;
        let tol = base.tol.max(t.tol) + base.numbers.perturbation_error + t.numbers.perturbation_error;
        r.push(Check::within(
            format!("duality {name}: rho(1) = -rho(pt)"),
            (t.numbers.rho_one + base.numbers.rho_pt).abs(),
            tol,
        ));
        r.push(Check::within(
            format!("duality {name}: rho(pt) = -rho(1)"),
            (t.numbers.rho_pt + base.numbers.rho_one).abs(),
            tol,
        ));
    }
    Ok(r)
}

/// ρ is unchanged by a boundary-flat reparametrization of time.
pub fn verify_reparametrization(h: &HamiltonianSpec, chi: Chi, opts: &SpectralOptions) -> Result<Report> {
    let a = analyze(h, opts)?;
    let b = analyze(&transform(h, Transform::Reparametrize(chi))?, opts)?;
    let tol = a.tol.max(b.tol) + a.numbers.perturbation_error + b.numbers.perturbation_error;
    let mut r = Report::default();
    r.push(Check::within("reparametrization rho(1)", (a.numbers.rho_one - b.numbers.rho_one).abs(), tol));
    r.push(Check::within("reparametrization rho(pt)", (a.numbers.rho_pt - b.numbers.rho_pt).abs(), tol));
    Ok(r)
}

fn flat(h: &HamiltonianSpec) -> Result<HamiltonianSpec> {
    if h.is_boundary_flat() {
        Ok(h.clone())
    } else {
        transform(h, Transform::Reparametrize(Chi::smoothstep()))
    }
}

fn triangle_checks(r: &mut Report, label: &str, k: &SpectralNumbers, h: &SpectralNumbers, f: &SpectralNumbers, tol: f64) {
    r.push(Check::at_most(format!("{label}: rho(1) <= rho_H(1) + rho_F(1)"), k.rho_one, h.rho_one + f.rho_one, tol));
    r.push(Check::at_most(format!("{label}: rho(pt) <= rho_H(1) + rho_F(pt)"), k.rho_pt, h.rho_one + f.rho_pt, tol));
    r.push(Check::at_most(format!("{label}: rho(pt) <= rho_H(pt) + rho_F(1)"), k.rho_pt, h.rho_pt + f.rho_one, tol));
}

/// Triangle inequalities for the concatenation `H * F` and, when `F` is
/// autonomous, for the product `H # F`.
pub fn verify_triangle(h: &HamiltonianSpec, f: &HamiltonianSpec, opts: &SpectralOptions) -> Result<Report> {
    let ah = analyze(h, opts)?;
    let af = analyze(f, opts)?;
    let mut r = Report::default();
    let concat = analyze(&concatenate(&flat(h)?, &flat(f)?)?, opts)?;
    let err = |x: &Analysis| x.tol + x.numbers.perturbation_error;
    let tol = err(&ah) + err(&af) + err(&concat);
    triangle_checks(&mut r, "concatenation", &concat.numbers, &ah.numbers, &af.numbers, tol);
    if f.is_autonomous() {
        let prod = analyze(&compose_product(h, f)?, opts)?;
        let tol = err(&ah) + err(&af) + err(&prod);
        triangle_checks(&mut r, "product", &prod.numbers, &ah.numbers, &af.numbers, tol);
    } else {
        r.push(Check::skipped("product triangle", "second Hamiltonian is not autonomous"));
    }
    Ok(r)
}

/// Equal ρ values for two Hamiltonians with the same time-one image of the
/// zero section (checked on the samples) and equal normalisation.
pub fn verify_invariance(h: &HamiltonianSpec, f: &HamiltonianSpec, opts: &SpectralOptions) -> Result<Report> {
    let a = analyze(h, opts)?;
    let b = analyze(f, opts)?;
    let mut r = Report::default();
    let gap = curve_gap(&a.curve, &b.curve)?;
    let geom = a.front.geometric_tol.min(b.front.geometric_tol) * 1e-3;
    if gap > geom {
        r.push(Check::skipped("invariance", format!("time-one curves differ by {gap:.3e}")));
        return Ok(r);
    }
    let tol = a.tol.max(b.tol) + a.numbers.perturbation_error + b.numbers.perturbation_error;
    r.push(Check::within("invariance rho(1)", (a.numbers.rho_one - b.numbers.rho_one).abs(), tol));
    r.push(Check::within("invariance rho(pt)", (a.numbers.rho_pt - b.numbers.rho_pt).abs(), tol));
    Ok(r)
}

/// Largest distance between the two curves at the first curve's parameters.
fn curve_gap(a: &LagrangianCurve, b: &LagrangianCurve) -> Result<f64> {
    let mut gap = 0.0f64;
    for (k, p) in a.points.iter().enumerate() {
        if k % 8 != 0 {
            continue;
        }
        let q = b.eval(p.s)?;
        gap = gap.max(crate::math::circ_diff(p.q, q.q).abs().max((p.p - q.p).abs()));
    }
    Ok(gap)
}
