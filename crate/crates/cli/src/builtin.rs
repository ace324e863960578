//! Built-in scenarios and the seeded fold family.

use phasefront::phase_space::{combination, figure1, BaseProfile, HamiltonianSpec, TimeProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scenario::{CheckKind, Model, Resolution, Scenario, SCENARIO_SCHEMA};

pub const BUILTINS: &[(&str, &str)] = &[
    ("zero", "H = 0: the zero section itself"),
    ("constant", "time-constant H = 0.7: spectral numbers shift by 0.7"),
    ("base-lift", "autonomous base lift: the graph of -df"),
    ("fiberwise", "fiberwise shear 0.8|p|^2/2: fixes the zero section"),
    ("pendulum", "autonomous g(q) + 0.8|p|^2/2: a genuinely second-order integration"),
    ("figure1", "the Z-shaped fold with two caustics and one Maxwell crossing"),
    ("fold-family", "50 seeded random folds"),
    ("duality-suite", "duality, reflection, reparametrization and triangle checks on 12 folds"),
    ("capacity-sweep", "gamma against osc_C0 for the B-supported family"),
    ("torus-cliffwall", "coupled product fold on T*T2 at 128^2"),
    ("min-of-three", "lower envelope of three planes on [-1, 1]^2"),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    BUILTINS.iter().map(|(n, _)| *n)
}

fn scenario(name: &str, model: Model, checks: Vec<CheckKind>, seed: u64) -> Scenario {
    Scenario {
        schema: SCENARIO_SCHEMA.into(),
        name: name.into(),
        model,
        resolution: Resolution::default(),
        checks,
        seed,
        tol_scale: 1.0,
    }
}

fn hamiltonian(name: &str, h: HamiltonianSpec) -> Scenario {
    scenario(name, Model::Hamiltonian { hamiltonian: h }, vec![], 0)
}

pub fn builtin(name: &str) -> Option<Scenario> {
    Some(match name {
        "zero" => hamiltonian(name, HamiltonianSpec::zero(1)),
        "constant" => hamiltonian(name, HamiltonianSpec::time_constant(1, 0.7, TimeProfile::Constant)),
        "base-lift" => hamiltonian(
            name,
            HamiltonianSpec::base_lift(1, BaseProfile::fourier1(&[(1, 0.3)], &[(2, 0.1)]), TimeProfile::Constant),
        ),
        "fiberwise" => hamiltonian(name, HamiltonianSpec::fiberwise(1, 0.8, TimeProfile::Constant)),
        "pendulum" => hamiltonian(name, pendulum()),
        "figure1" => hamiltonian(name, figure1()),
        "fold-family" => scenario(name, Model::FoldFamily { count: 50, partner: 0.05 }, vec![], 7),
        "duality-suite" => scenario(
            name,
            Model::FoldFamily { count: 12, partner: 0.05 },
            vec![CheckKind::Duality, CheckKind::Triangle],
            11,
        ),
        "capacity-sweep" => scenario(
            name,
            Model::CapacitySweep {
                amplitudes: vec![0.05, 0.1, 0.15],
                decay: vec![0.15, 0.05, 0.015, 5e-3, 1.5e-3, 1.5e-4, 1.5e-5],
            },
            vec![],
            0,
        ),
        "torus-cliffwall" => {
            let mut s = scenario(name, Model::TorusCliffwall { eps: 0.05 }, vec![], 0);
            s.resolution.grid_2d = 128;
            s
        }
        "min-of-three" => {
            let mut s = scenario(name, Model::MinOfThree { at: [0.1234, -0.0567] }, vec![], 0);
            s.resolution.grid_2d = 41;
            s
        }
        _ => return None,
    })
}

fn pendulum() -> HamiltonianSpec {
    let g = BaseProfile::fourier1(&[(1, 0.35)], &[(2, 0.12)]);
    combination(vec![
        (1.0, HamiltonianSpec::base_lift(1, g, TimeProfile::Constant)),
        (1.0, HamiltonianSpec::fiberwise(1, 0.8, TimeProfile::Constant)),
    ])
    .expect("matching dimensions")
}

/// One member of the seeded fold family.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldMember {
    pub g: BaseProfile,
    pub twist: f64,
    /// `g` plus a perturbation of size at most `partner`.
    pub partner: BaseProfile,
}

impl FoldMember {
    pub fn spec(&self) -> HamiltonianSpec {
        HamiltonianSpec::fold(1, self.g.clone(), self.twist)
    }

    pub fn partner_spec(&self) -> HamiltonianSpec {
        HamiltonianSpec::fold(1, self.partner.clone(), self.twist)
    }
}

/// Member `index` of the family with the given seed; every member has its
/// own ChaCha stream, so members do not depend on the family size.
pub fn fold_member(seed: u64, index: usize, partner: f64) -> FoldMember {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let a1 = rng.random_range(0.05..0.4);
    let a2 = rng.random_range(0.05..0.4);
    let b1 = rng.random_range(-0.1..0.1);
    let phase = rng.random_range(0.0..core::f64::consts::TAU);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let twist = sign * rng.random_range(0.3..1.2);
    let c = partner * rng.random_range(-1.0..1.0);
    let s = partner * rng.random_range(-1.0..1.0);
    let (a2c, a2s) = (a2 * phase.cos(), a2 * phase.sin());
    FoldMember {
        g: BaseProfile::fourier1(&[(1, a1), (2, a2c)], &[(1, b1), (2, a2s)]),
        twist,
        partner: BaseProfile::fourier1(&[(1, a1 + c), (2, a2c)], &[(1, b1), (2, a2s + s)]),
    }
}
