//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::process::ExitCode;
use std::time::Instant;

use phasefront::cliffwall::{cliffwall, mod2_defect, synthetic_field, AffineArrangement, FaceTag};
use phasefront::phase_space::figure1;
use phasefront::selector::basic_phase_function;
use phasefront::spectral::{analyze, SpectralOptions};
use phasefront_cli::builtin::builtin;
use phasefront_cli::run::{Item, Summary};
use phasefront_cli::scenario::CheckKind;
use phasefront_cli::{run, Mode, RunReport};

const GOLDEN_REL: f64 = 1e-4;
const GOLDEN_MARGIN: f64 = 10.0;
const GOLDEN_SECONDS: f64 = 10.0;
const MIN_FOLDS: usize = 50;
const MIN_LIPSCHITZ_PAIRS: usize = 30;
const CLIFFWALL_SECONDS: f64 = 60.0;
const SYNTHETIC_RESIDUAL: f64 = 1e-12;
const FLOWED_RESIDUAL: f64 = 1e-2;
const BUILTIN_HAMILTONIANS: [&str; 6] = ["zero", "constant", "base-lift", "fiberwise", "pendulum", "figure1"];
const SUITE: usize = 12;

struct Line {
    ok: bool,
    text: String,
}

fn line(n: usize, title: &str, ok: bool, detail: String) -> Line {
    let text = format!("criterion {n} [{title}]: {} - {detail}", if ok { "PASS" } else { "FAIL" });
    println!("{text}");
    Line { ok, text }
}

fn scenario_run(name: &str, mode: Mode, checks: Option<Vec<CheckKind>>) -> (RunReport, f64) {
    let mut sc = builtin(name).expect("built-in scenario");
    if let Some(c) = checks {
        sc.checks = c;
    }
    let t = Instant::now();
    let out = run(&sc, mode, 0).expect("scenario runs");
    (out.report, t.elapsed().as_secs_f64())
}

/// Checks whose name starts with `prefix`, over every item.
struct Tally {
    checks: usize,
    failures: Vec<String>,
    items: usize,
    errors: Vec<String>,
}

fn tally<'a>(reports: impl IntoIterator<Item = &'a RunReport>, prefix: &str) -> Tally {
    let mut t = Tally { checks: 0, failures: vec![], items: 0, errors: vec![] };
    for r in reports {
        for item in &r.items {
            let mut seen = false;
            for c in item.checks.iter().filter(|c| c.name.starts_with(prefix)) {
                seen = true;
                t.checks += 1;
                if !c.passed {
                    t.failures.push(format!("{}/{}: {} ({:e} > {:e})", r.scenario, item.label, c.name, c.residual, c.tolerance));
                }
            }
            if let Some(e) = &item.error {
                t.errors.push(format!("{}/{}: {e}", r.scenario, item.label));
            }
            t.items += usize::from(seen);
        }
    }
    t
}

fn tally_line(n: usize, title: &str, t: &Tally, min_items: usize, extra: &str) -> Line {
    let ok = t.failures.is_empty() && t.errors.is_empty() && t.items >= min_items && t.checks > 0;
    let mut detail = format!("{} checks on {} scenarios, {} violations{extra}", t.checks, t.items, t.failures.len());
    for f in t.failures.iter().chain(&t.errors).take(3) {
        detail.push_str(&format!("; {f}"));
    }
    line(n, title, ok, detail)
}

fn golden() -> Line {
    let t = Instant::now();
    let opts = SpectralOptions::default();
    let a = analyze(&figure1(), &opts).expect("figure1 analysis");
    let f = basic_phase_function(&figure1(), 512, &opts).expect("figure1 selector");
    let secs = t.elapsed().as_secs_f64();
    let tol = GOLDEN_REL * a.front.action_scale;
    let fr = &a.front;
    let c = &a.complex;
    let mut problems = Vec::new();
    let counts = (fr.zero_crossings.len(), fr.caustics.len(), fr.maxwell_crossings.len());
    if counts != (4, 2, 1) {
        problems.push(format!("front counts {counts:?}"));
    }
    // z0, z2: boundary {z1, z3}; z1, z3: cycles
    let cycles: Vec<usize> = (0..c.len()).filter(|&i| c.boundary[i].is_empty()).collect();
    let chains: Vec<usize> = (0..c.len()).filter(|&i| !c.boundary[i].is_empty()).collect();
    if c.len() != 4 || cycles.len() != 2 || chains.iter().any(|&i| c.boundary[i] != cycles) {
        problems.push(format!("differential {:?}", c.boundary));
    }
    let z1 = cycles.iter().copied().min_by(|&x, &y| c.generators[x].action.total_cmp(&c.generators[y].action));
    let n = &a.numbers;
    if let Some(z1) = z1 {
        let d = (n.rho_pt - c.generators[z1].action).abs();
        if d > tol {
            problems.push(format!("rho(pt) - A(z1) = {d:e}"));
        }
    }
    let (lo, hi) = (f.min_f(), f.max_f());
    if (hi - n.rho_one).abs() > tol {
        problems.push(format!("max f - rho(1) = {:e}", hi - n.rho_one));
    }
    let (m1, m2) = (lo - n.rho_pt, hi - lo);
    if m1 < GOLDEN_MARGIN * tol || m2 < GOLDEN_MARGIN * tol {
        problems.push(format!("strict margins {m1:e}, {m2:e}"));
    }
    if secs > GOLDEN_SECONDS {
        problems.push(format!("runtime {secs:.1} s"));
    }
    let detail = format!(
        "crossings/caustics/Maxwell {counts:?}, rho(pt) {:.6} < min f {lo:.6} < max f {hi:.6} = rho(1) {:.6}, \
         margins {m1:.3e}/{m2:.3e} (>= {:.1e}), {secs:.2} s{}",
        n.rho_pt,
        n.rho_one,
        GOLDEN_MARGIN * tol,
        if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
    );
    line(1, "figure1 golden", problems.is_empty(), detail)
}

fn summary(item: &Item) -> Option<&phasefront_cli::run::CliffwallSummary> {
    match &item.summary {
        Some(Summary::Cliffwall(s)) => Some(s),
        _ => None,
    }
}

fn cliffwall_line() -> Line {
    let mut problems = Vec::new();
    let field = synthetic_field(&AffineArrangement::min_of_three([0.1234, -0.0567]), 41).expect("synthetic field");
    let (strata, cycle, rep) = cliffwall(&field, SYNTHETIC_RESIDUAL).expect("synthetic cycle");
    let simplices = cycle.count(FaceTag::Simplex);
    let defect = mod2_defect(&cycle);
    if !rep.passed() || simplices != 1 || strata.triples.len() != 1 || defect != 0 {
        problems.push(format!("synthetic: {} simplices, defect {defect}, {:?}", simplices, rep.failures().collect::<Vec<_>>()));
    }
    let (torus, secs) = scenario_run("torus-cliffwall", Mode::Run, None);
    let s = torus.items.first().and_then(summary);
    let detail_t = match s {
        Some(s) => {
            if !torus.passed || s.mod2_defect != 0 || s.conormal.max_residual > FLOWED_RESIDUAL || s.grid != 128 {
                problems.push(format!("torus: {:?}", tally([&torus], "").failures));
            }
            format!(
                "torus {}^2: {} triple points, defect {}, conormal residual {:.2e} (<= {FLOWED_RESIDUAL:e}), {secs:.1} s",
                s.grid, s.triple_points, s.mod2_defect, s.conormal.max_residual
            )
        }
        None => {
            problems.push(format!("torus: {:?}", torus.items.first().and_then(|i| i.error.clone())));
            "torus failed".into()
        }
    };
    if secs > CLIFFWALL_SECONDS {
        problems.push(format!("torus runtime {secs:.1} s"));
    }
    let synth = rep.checks.iter().find(|c| c.name == "jumps are conormal").map_or(f64::NAN, |c| c.residual);
    let detail = format!(
        "min-of-3: {simplices} simplex, defect {defect}, conormal residual {synth:.1e} (<= {SYNTHETIC_RESIDUAL:e}); {detail_t}{}",
        if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
    );
    line(8, "cliff-wall cycle", problems.is_empty(), detail)
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut lines = vec![golden()];

    let mut ham = Vec::new();
    for name in BUILTIN_HAMILTONIANS {
        ham.push(scenario_run(name, Mode::Verify, None).0);
    }
    let (folds, _) = scenario_run(
        "fold-family",
        Mode::Run,
        Some(vec![CheckKind::Front, CheckKind::Complex, CheckKind::Spectral, CheckKind::Selector, CheckKind::Lipschitz]),
    );
    let (suite, _) = scenario_run("duality-suite", Mode::Run, None);

    let mut comparison = tally([&folds], "selector: rho(pt) <= min f");
    let other = tally([&folds], "selector: max f <= rho(1)");
    comparison.checks += other.checks;
    comparison.failures.extend(other.failures);
    lines.push(tally_line(2, "comparison on seeded folds", &comparison, MIN_FOLDS, ""));
    lines.push(tally_line(3, "Lipschitz pairs", &tally([&folds], "lipschitz"), MIN_LIPSCHITZ_PAIRS, ", tol 1e-3 ||H-K|| + floor"));
    lines.push(tally_line(4, "duality, reflection, reparametrization", &tally(ham.iter().chain([&suite]), "duality"), SUITE + BUILTIN_HAMILTONIANS.len(), ""));
    let mut complex = tally(ham.iter().chain([&folds]), "complex");
    let front = tally(ham.iter().chain([&folds]), "front");
    complex.checks += front.checks;
    complex.failures.extend(front.failures);
    lines.push(tally_line(5, "complex validity", &complex, MIN_FOLDS + BUILTIN_HAMILTONIANS.len(), ""));
    lines.push(tally_line(6, "spectrality", &tally(ham.iter().chain([&folds]), "spectral"), MIN_FOLDS + BUILTIN_HAMILTONIANS.len(), ""));

    let (cap, _) = scenario_run("capacity-sweep", Mode::Run, None);
    let rows = match cap.items.first().and_then(|i| i.summary.as_ref()) {
        Some(Summary::Capacity(s)) => s.rows.iter().filter(|r| r.admissible).count(),
        _ => 0,
    };
    let mut t = tally([&cap], "");
    if rows < 3 {
        t.failures.push(format!("{rows} admissible amplitudes"));
    }
    lines.push(tally_line(7, "capacity bound, decay and shift lemma", &t, 1, &format!(", {rows} admissible amplitudes")));

    lines.push(cliffwall_line());
    lines.push(tally_line(9, "convergence certificate", &tally(&ham, "convergence"), BUILTIN_HAMILTONIANS.len(), ", step ratio >= 3.5, grid doubling < 2 tol"));

    let failed = lines.iter().filter(|l| !l.ok).count();
    println!("acceptance: {} of {} criteria pass in {:.1} s", lines.len() - failed, lines.len(), start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        for l in lines.iter().filter(|l| !l.ok) {
            eprintln!("{}", l.text);
        }
        ExitCode::FAILURE
    }
}
