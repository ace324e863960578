//! Executes a scenario into a versioned report plus output files.

use phasefront::capacity::{capacity_bound, continuity_experiment, standard_scenario, verify_shift_lemma, CapacityRow};
use phasefront::cliffwall::{
    cliffwall, conormal_residual, jump_covectors, mod2_defect, sample_selector_2d, synthetic_field, AffineArrangement,
    ConormalSummary, FaceTag, TorusFold,
};
use phasefront::floer::{brute_force_differential, build_complex, check_energy_identity, TestObject};
use phasefront::flow::{integrate_trajectory, richardson_action};
use phasefront::phase_space::{BasePoint, Chi, HamiltonianSpec, TimeProfile};
use phasefront::report::{Check, Report};
use phasefront::selector::{
    basic_phase_function, selector_from_curve, verify_comparison, verify_lipschitz, verify_reflection,
    verify_selector_axioms, SelectorField,
};
use phasefront::spectral::{
    analyze, brute_force_spectral_number, perturbation_profile, spectral_number, verify_duality,
    verify_reparametrization, verify_spectrality, verify_triangle, Analysis, Class, SpectralOptions,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::builtin::fold_member;
use crate::export;
use crate::scenario::{CheckKind, Model, Resolution, Scenario};
use crate::RunError;

pub const REPORT_SCHEMA: &str = "phasefront.report/1";

/// Relative action tolerance before `tol_scale`.
pub const ACTION_REL: f64 = 1e-4;
/// Conormal tolerance for flowed fields on `T²`.
pub const CONORMAL_TOL: f64 = 1e-2;
/// Conormal tolerance for exact plane arrangements.
pub const SYNTHETIC_CONORMAL_TOL: f64 = 1e-12;
/// Integrator steps of the coarsest level in the step-halving check.
pub const HALVING_STEPS: usize = 32;
/// Minimum error ratio per halving of the step.
pub const HALVING_RATIO: f64 = 3.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// The scenario's checks, with output files.
    Run,
    /// Every supported check, report only.
    Verify,
    /// Output files only.
    Plot,
}

#[derive(Debug, Clone, Serialize)]
pub struct TolerancePolicy {
    pub tol_scale: f64,
    /// Action tolerance is `action_rel × action scale × tol_scale`.
    pub action_rel: f64,
    pub conormal: f64,
    pub halving_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema: &'static str,
    pub scenario: String,
    pub model: &'static str,
    pub seed: u64,
    pub resolution: Resolution,
    pub tolerance: TolerancePolicy,
    pub checks: Vec<CheckKind>,
    pub passed: bool,
    pub check_count: usize,
    pub failure_count: usize,
    pub items: Vec<Item>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Item {
    pub label: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<Summary>,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Summary {
    Hamiltonian(HamiltonianSummary),
    Capacity(CapacitySummary),
    Cliffwall(CliffwallSummary),
}

#[derive(Debug, Clone, Serialize)]
pub struct HamiltonianSummary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub twist: Option<f64>,
    pub branches: usize,
    pub caustics: usize,
    pub maxwell_crossings: usize,
    pub zero_crossings: usize,
    pub generators: usize,
    pub action_scale: f64,
    pub tol: f64,
    pub rho_one: f64,
    pub rho_pt: f64,
    pub gamma: f64,
    pub perturbation_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selector: Option<SelectorSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectorSummary {
    pub min_f: f64,
    pub max_f: f64,
    pub max_abs_sigma: f64,
    pub singular_points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CapacitySummary {
    pub rows: Vec<CapacityRow>,
    pub decay: Vec<CapacityRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CliffwallSummary {
    pub grid: usize,
    pub s1_points: usize,
    pub triple_points: usize,
    pub caustic_points: usize,
    pub polylines: usize,
    pub selector_faces: usize,
    pub closure_faces: usize,
    pub cliff_faces: usize,
    pub simplices: usize,
    pub mod2_defect: usize,
    pub conormal: ConormalSummary,
    pub min_f: f64,
    pub max_f: f64,
}

/// An output file, named relative to the output directory.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub contents: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: RunReport,
    pub artifacts: Vec<Artifact>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn spectral_options(sc: &Scenario) -> SpectralOptions {
    SpectralOptions {
        samples: sc.resolution.samples,
        steps: sc.resolution.steps,
        tol_scale: sc.tol_scale,
        ..SpectralOptions::default()
    }
}

/// Runs the scenario on a pool of `jobs` threads (0: rayon's default).
pub fn run(sc: &Scenario, mode: Mode, jobs: usize) -> Result<Outcome, RunError> {
    sc.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| RunError::Usage(format!("cannot start {jobs} worker threads: {e}")))?;
    Ok(pool.install(|| execute(sc, mode)))
}

fn execute(sc: &Scenario, mode: Mode) -> Outcome {
    let checks = match mode {
        Mode::Run => sc.active_checks(),
        Mode::Verify => sc.model.supported_checks().to_vec(),
        Mode::Plot => vec![],
    };
    let plots = mode != Mode::Verify;
    let opts = spectral_options(sc);
    let ctx = Ctx { checks: &checks, res: &sc.resolution, opts, plots };
    let results: Vec<(Item, Vec<Artifact>)> = match &sc.model {
        Model::Hamiltonian { hamiltonian } => vec![ctx.hamiltonian(&sc.name, hamiltonian, None, None)],
        Model::FoldFamily { count, partner } => (0..*count)
            .into_par_iter()
            .map(|i| {
                let m = fold_member(sc.seed, i, *partner);
                ctx.hamiltonian(&format!("fold-{i:03}"), &m.spec(), Some(&m.partner_spec()), Some(m.twist))
            })
            .collect(),
        Model::CapacitySweep { amplitudes, decay } => vec![ctx.capacity(amplitudes, decay)],
        Model::TorusCliffwall { eps } => vec![ctx.torus(*eps, sc.tol_scale)],
        Model::MinOfThree { at } => vec![ctx.min_of_three(*at, sc.tol_scale)],
    };
    let mut items = Vec::with_capacity(results.len());
    let mut artifacts = Vec::new();
    for (item, arts) in results {
        items.push(item);
        artifacts.extend(arts);
    }
    let check_count = items.iter().map(|i| i.checks.len()).sum();
    let failure_count =
        items.iter().map(|i| i.checks.iter().filter(|c| !c.passed).count() + usize::from(i.error.is_some())).sum();
    let conormal = match sc.model {
        Model::MinOfThree { .. } => SYNTHETIC_CONORMAL_TOL,
        _ => CONORMAL_TOL,
    } * sc.tol_scale;
    let report = RunReport {
        schema: REPORT_SCHEMA,
        scenario: sc.name.clone(),
        model: sc.model.kind(),
        seed: sc.seed,
        resolution: sc.resolution,
        tolerance: TolerancePolicy { tol_scale: sc.tol_scale, action_rel: ACTION_REL, conormal, halving_ratio: HALVING_RATIO },
        checks,
        passed: failure_count == 0,
        check_count,
        failure_count,
        items,
    };
    let mut arts = vec![Artifact { name: "report.json".into(), contents: report.to_json().into_bytes() }];
    if plots {
        arts.extend(artifacts);
    }
    Outcome { report, artifacts: arts }
}

struct Ctx<'a> {
    checks: &'a [CheckKind],
    res: &'a Resolution,
    opts: SpectralOptions,
    plots: bool,
}

fn item(label: &str, res: phasefront::Result<(Summary, Report)>) -> Item {
    match res {
        Ok((summary, report)) => {
            Item { label: label.into(), passed: report.passed(), error: None, summary: Some(summary), checks: report.checks }
        }
        Err(e) => Item { label: label.into(), passed: false, error: Some(e.to_string()), summary: None, checks: vec![] },
    }
}

fn prefixed(r: &mut Report, prefix: &str, other: Report) {
    for c in other.checks {
        r.push(Check { name: format!("{prefix}: {}", c.name), ..c });
    }
}

impl Ctx<'_> {
    fn wants(&self, k: CheckKind) -> bool {
        self.checks.contains(&k)
    }

    fn hamiltonian(
        &self,
        label: &str,
        h: &HamiltonianSpec,
        partner: Option<&HamiltonianSpec>,
        twist: Option<f64>,
    ) -> (Item, Vec<Artifact>) {
        let mut arts = Vec::new();
        let res = self.hamiltonian_checks(label, h, partner, twist, &mut arts);
        (item(label, res), arts)
    }

    fn hamiltonian_checks(
        &self,
        label: &str,
        h: &HamiltonianSpec,
        partner: Option<&HamiltonianSpec>,
        twist: Option<f64>,
        arts: &mut Vec<Artifact>,
    ) -> phasefront::Result<(Summary, Report)> {
        let opts = &self.opts;
        let a = analyze(h, opts)?;
        let mut r = Report::default();
        let field = if self.plots || self.wants(CheckKind::Selector) {
            Some(selector_from_curve(a.curve.clone(), self.res.grid, opts)?)
        } else {
            None
        };
        if self.wants(CheckKind::Front) {
            prefixed(&mut r, "front", front_checks(&a));
        }
        if self.wants(CheckKind::Complex) {
            prefixed(&mut r, "complex", complex_checks(&a)?);
        }
        if self.wants(CheckKind::Spectral) {
            prefixed(&mut r, "spectral", verify_spectrality(h, opts)?);
        }
        if let (true, Some(f)) = (self.wants(CheckKind::Selector), &field) {
            let mut s = verify_selector_axioms(f)?;
            s.extend(verify_comparison(h, f, opts)?);
            prefixed(&mut r, "selector", s);
        }
        if let (true, Some(k)) = (self.wants(CheckKind::Lipschitz), partner) {
            prefixed(&mut r, "lipschitz", verify_lipschitz(h, k, self.res.grid, opts)?);
        }
        if self.wants(CheckKind::Duality) {
            let mut s = verify_duality(h, opts)?;
            s.extend(verify_reflection(h, self.res.grid, opts)?);
            s.extend(verify_reparametrization(h, Chi::smoothstep(), opts)?);
            prefixed(&mut r, "duality", s);
        }
        if self.wants(CheckKind::Triangle) {
            let f = HamiltonianSpec::base_lift(1, perturbation_profile(), TimeProfile::Constant).scaled(0.05);
            prefixed(&mut r, "triangle", verify_triangle(h, &f, opts)?);
        }
        if self.wants(CheckKind::Convergence) {
            prefixed(&mut r, "convergence", convergence_checks(h, &a, self.res, opts)?);
        }
        if self.plots {
            arts.push(Artifact { name: format!("{label}.front.csv"), contents: export::front_csv(&a.front) });
            if let Some(f) = &field {
                arts.push(Artifact { name: format!("{label}.selector.csv"), contents: export::selector_csv(f) });
            }
            arts.push(Artifact { name: format!("{label}.front.svg"), contents: export::front_svg(&a.front, field.as_ref()) });
        }
        let n = &a.numbers;
        let summary = HamiltonianSummary {
            twist,
            branches: a.front.branches.len(),
            caustics: a.front.caustics.len(),
            maxwell_crossings: a.front.maxwell_crossings.len(),
            zero_crossings: a.front.zero_crossings.len(),
            generators: a.complex.len(),
            action_scale: a.front.action_scale,
            tol: a.tol,
            rho_one: n.rho_one,
            rho_pt: n.rho_pt,
            gamma: n.gamma,
            perturbation_error: n.perturbation_error,
            selector: field.as_ref().map(|f| SelectorSummary {
                min_f: f.min_f(),
                max_f: f.max_f(),
                max_abs_sigma: f.max_abs_sigma(),
                singular_points: f.sing_locus.len(),
            }),
        };
        Ok((Summary::Hamiltonian(summary), r))
    }

    fn capacity(&self, amplitudes: &[f64], decay: &[f64]) -> (Item, Vec<Artifact>) {
        let mut rows = Vec::new();
        let res = (|| {
            let mut r = Report::default();
            if self.wants(CheckKind::Capacity) {
                for &amp in amplitudes {
                    let sc = standard_scenario(amp)?;
                    let (mut row, rep) = capacity_bound(&sc, &self.opts)?;
                    row.amplitude = amp;
                    rows.push(row);
                    prefixed(&mut r, &format!("amplitude {amp}"), rep);
                    prefixed(&mut r, &format!("amplitude {amp}"), verify_shift_lemma(&sc, &self.opts)?);
                }
            } else {
                for &amp in amplitudes {
                    let (mut row, _) = capacity_bound(&standard_scenario(amp)?, &self.opts)?;
                    row.amplitude = amp;
                    rows.push(row);
                }
            }
            let (table, rep) = continuity_experiment(standard_scenario, decay, &self.opts)?;
            if self.wants(CheckKind::Capacity) {
                r.extend(rep);
                if let (Some(first), Some(last)) = (table.first(), table.last()) {
                    r.push(
                        Check::within("gamma decays below 1e-3 of its initial value", last.gamma, 1e-3 * first.gamma)
                            .with_note(format!("gamma {:.6e} -> {:.6e}", first.gamma, last.gamma)),
                    );
                }
            }
            Ok((Summary::Capacity(CapacitySummary { rows: rows.clone(), decay: table }), r))
        })();
        let mut arts = Vec::new();
        if let (true, Ok((Summary::Capacity(s), _))) = (self.plots, &res) {
            arts.push(Artifact { name: "capacity.csv".into(), contents: export::capacity_csv(&s.rows, &s.decay) });
        }
        (item("capacity", res), arts)
    }

    fn torus(&self, eps: f64, tol_scale: f64) -> (Item, Vec<Artifact>) {
        let label = "torus";
        let mut arts = Vec::new();
        let res = sample_selector_2d(&TorusFold::perturbed_product(eps), self.res.grid_2d)
            .and_then(|field| self.cliffwall_item(label, &field, CONORMAL_TOL * tol_scale, &mut arts));
        (item(label, res), arts)
    }

    fn min_of_three(&self, at: [f64; 2], tol_scale: f64) -> (Item, Vec<Artifact>) {
        let label = "min-of-three";
        let mut arts = Vec::new();
        let res = synthetic_field(&AffineArrangement::min_of_three(at), self.res.grid_2d)
            .and_then(|field| self.cliffwall_item(label, &field, SYNTHETIC_CONORMAL_TOL * tol_scale, &mut arts));
        (item(label, res), arts)
    }

    fn cliffwall_item(
        &self,
        label: &str,
        field: &phasefront::cliffwall::SelectorField2D,
        tol: f64,
        arts: &mut Vec<Artifact>,
    ) -> phasefront::Result<(Summary, Report)> {
        let (strata, cycle, report) = cliffwall(field, tol)?;
        let summary = CliffwallSummary {
            grid: field.n,
            s1_points: strata.s1.len(),
            triple_points: strata.triples.len(),
            caustic_points: strata.caustics.len(),
            polylines: strata.polylines.len(),
            selector_faces: cycle.count(FaceTag::Selector),
            closure_faces: cycle.count(FaceTag::Closure),
            cliff_faces: cycle.count(FaceTag::Cliff),
            simplices: cycle.count(FaceTag::Simplex),
            mod2_defect: mod2_defect(&cycle),
            conormal: conormal_residual(&jump_covectors(field, &strata)),
            min_f: field.min_f(),
            max_f: field.max_f(),
        };
        if self.plots {
            arts.push(Artifact { name: format!("{label}.off"), contents: export::cycle_off(&cycle) });
            arts.push(Artifact { name: format!("{label}.strata.csv"), contents: export::strata_csv(field, &strata) });
            arts.push(Artifact { name: format!("{label}.strata.svg"), contents: export::strata_svg(field, &strata) });
        }
        let report = if self.wants(CheckKind::Cliffwall) { report } else { Report::default() };
        Ok((Summary::Cliffwall(summary), report))
    }
}

/// Structural facts every front of a degree-one exact curve satisfies.
pub fn front_checks(a: &Analysis) -> Report {
    let f = &a.front;
    let mut r = Report::default();
    let z = f.zero_crossings.len();
    r.push(Check::within("at least two zero-section crossings", 2usize.saturating_sub(z) as f64, 0.0));
    r.push(Check::within("zero-section crossings come in pairs", (z % 2) as f64, 0.0));
    r.push(Check::within("caustics come in pairs", (f.caustics.len() % 2) as f64, 0.0));
    let even = (0..64)
        .map(|k| (k as f64 + 0.381_966_011) * core::f64::consts::TAU / 64.0)
        .filter(|&q| f.branch_count(q).is_multiple_of(2))
        .count();
    r.push(Check::within("odd number of sheets over generic points", even as f64, 0.0));
    r
}

/// Fiber base points probed by the complex checks.
const FIBERS: [f64; 4] = [0.517, 2.043, 3.571, 5.109];

/// Generators above which the bigon brute force is skipped.
const BRUTE_FORCE_MAX: usize = 12;

/// `∂² = 0`, filtration, ranks, energy identity and brute-force
/// agreement for the zero-section complex and a few fiber complexes.
pub fn complex_checks(a: &Analysis) -> phasefront::Result<Report> {
    let mut r = Report::default();
    let tol = a.tol;
    let mut complexes = vec![("zero section".to_string(), a.complex.clone(), 2usize)];
    for q in FIBERS {
        complexes.push((format!("fiber {q}"), build_complex(&a.curve, TestObject::Fiber(q))?, 1));
    }
    for (name, c, rank) in complexes {
        r.push(Check::within(format!("{name}: d^2 = 0"), f64::from(u8::from(!c.d_squared_vanishes())), 0.0));
        r.push(Check::within(format!("{name}: d lowers action"), f64::from(u8::from(!c.respects_filtration())), 0.0));
        r.push(Check::within(
            format!("{name}: homology rank {rank}"),
            (c.homology_rank() as f64 - rank as f64).abs(),
            0.0,
        ));
        r.push(Check::within(format!("{name}: bigon areas equal action drops"), check_energy_identity(&c, &a.curve)?, tol));
        if c.len() > BRUTE_FORCE_MAX {
            r.push(Check::skipped(format!("{name}: brute force"), format!("{} generators", c.len())));
            continue;
        }
        let brute = brute_force_differential(&a.curve, &c)?;
        let diff: usize = brute.iter().zip(&c.boundary).filter(|(x, y)| x != y).count();
        r.push(Check::within(format!("{name}: brute-force differential"), diff as f64, 0.0));
        let classes: &[Class] = if rank == 2 { &[Class::Fundamental, Class::Point] } else { &[Class::Point] };
        for &cls in classes {
            let fast = spectral_number(&c, cls)?.level;
            let slow = brute_force_spectral_number(&c, cls)?;
            r.push(Check::within(format!("{name}: brute-force level of {cls:?}"), (fast - slow).abs(), 1e-12));
        }
    }
    Ok(r)
}

/// Second-order step halving of the action and grid doubling of ρ and f.
pub fn convergence_checks(
    h: &HamiltonianSpec,
    a: &Analysis,
    res: &Resolution,
    opts: &SpectralOptions,
) -> phasefront::Result<Report> {
    let mut r = Report::default();
    let levels = [HALVING_STEPS, 2 * HALVING_STEPS, 4 * HALVING_STEPS];
    let mut errs = [0.0f64; 3];
    for q in FIBERS {
        let p = BasePoint::circle(q);
        let reference = richardson_action(h, &p, 32 * HALVING_STEPS)?;
        for (e, &n) in errs.iter_mut().zip(&levels) {
            *e = e.max((integrate_trajectory(h, &p, n)?.end_action() - reference).abs());
        }
    }
    let floor = 1e-11 * (1.0 + a.front.action_scale);
    for k in 0..2 {
        let name = format!("action error ratio {} -> {} steps", levels[k], levels[k + 1]);
        if errs[k] <= floor {
            r.push(Check::skipped(name, format!("error {:.3e} at round-off", errs[k])));
        } else {
            let ratio = errs[k] / errs[k + 1].max(f64::MIN_POSITIVE);
            r.push(Check::at_most(name, HALVING_RATIO, ratio, 0.0).with_note(format!("ratio {ratio:.3}")));
        }
    }
    let fine_opts = SpectralOptions { samples: 2 * opts.samples, ..*opts };
    let fine = analyze(h, &fine_opts)?;
    let tol = 2.0 * a.tol.max(fine.tol) + a.numbers.perturbation_error + fine.numbers.perturbation_error;
    r.push(Check::within("rho(1) under sample doubling", (a.numbers.rho_one - fine.numbers.rho_one).abs(), tol));
    r.push(Check::within("rho(pt) under sample doubling", (a.numbers.rho_pt - fine.numbers.rho_pt).abs(), tol));
    let coarse = basic_phase_function(h, res.grid, opts)?;
    let dense = basic_phase_function(h, 2 * res.grid, opts)?;
    r.push(Check::within("f under grid doubling", grid_gap(&coarse, &dense), 2.0 * coarse.tol.max(dense.tol)));
    Ok(r)
}

fn grid_gap(coarse: &SelectorField, dense: &SelectorField) -> f64 {
    coarse.f.iter().enumerate().map(|(i, v)| (v - dense.f[2 * i]).abs()).fold(0.0, f64::max)
}
