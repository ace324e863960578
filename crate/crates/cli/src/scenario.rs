//! Versioned scenario files.

use phasefront::phase_space::HamiltonianSpec;
use serde::{Deserialize, Serialize};

use crate::RunError;

pub const SCENARIO_SCHEMA: &str = "phasefront.scenario/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_schema")]
    pub schema: String,
    pub name: String,
    pub model: Model,
    #[serde(default)]
    pub resolution: Resolution,
    /// Empty means every check the model supports.
    #[serde(default)]
    pub checks: Vec<CheckKind>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub tol_scale: f64,
}

fn default_schema() -> String {
    SCENARIO_SCHEMA.into()
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Model {
    /// A single Hamiltonian on `T*S¹`.
    Hamiltonian { hamiltonian: HamiltonianSpec },
    /// `count` seeded folds `g ↦ (q − twist·g', −g')`; `partner` is the
    /// size of the perturbation paired with each member for the Lipschitz
    /// checks.
    FoldFamily {
        count: usize,
        #[serde(default = "default_partner")]
        partner: f64,
    },
    /// The supported family at each amplitude, plus a decay sequence.
    CapacitySweep { amplitudes: Vec<f64>, decay: Vec<f64> },
    /// The coupled product fold on `T*T²`.
    TorusCliffwall { eps: f64 },
    /// Lower envelope of three planes meeting at `at` on `[−1, 1]²`.
    MinOfThree { at: [f64; 2] },
}

fn default_partner() -> f64 {
    0.05
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Hamiltonian { .. } => "hamiltonian",
            Model::FoldFamily { .. } => "fold-family",
            Model::CapacitySweep { .. } => "capacity-sweep",
            Model::TorusCliffwall { .. } => "torus-cliffwall",
            Model::MinOfThree { .. } => "min-of-three",
        }
    }

    pub fn is_two_dimensional(&self) -> bool {
        matches!(self, Model::TorusCliffwall { .. } | Model::MinOfThree { .. })
    }

    /// Checks that make sense for the model.
    pub fn supported_checks(&self) -> &'static [CheckKind] {
        use CheckKind::*;
        match self {
            Model::Hamiltonian { .. } => &[Front, Complex, Spectral, Selector, Duality, Triangle, Convergence],
            Model::FoldFamily { .. } => &[Front, Complex, Spectral, Selector, Lipschitz, Duality, Triangle],
            Model::CapacitySweep { .. } => &[Capacity],
            Model::TorusCliffwall { .. } | Model::MinOfThree { .. } => &[Cliffwall],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Front,
    Complex,
    Spectral,
    Selector,
    Lipschitz,
    Duality,
    Triangle,
    Convergence,
    Capacity,
    Cliffwall,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Resolution {
    /// Initial samples of the time-one curve.
    pub samples: usize,
    /// Integrator steps on `[0, 1]`.
    pub steps: usize,
    /// Selector grid on `S¹`.
    pub grid: usize,
    /// Selector grid per side on `T²` or the planar patch.
    pub grid_2d: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Self { samples: 256, steps: 256, grid: 512, grid_2d: 96 }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| RunError::Usage(format!("invalid scenario: {e}")))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenarios serialize")
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Usage(m));
        if self.schema != SCENARIO_SCHEMA {
            return bad(format!("unsupported scenario schema {:?} (expected {SCENARIO_SCHEMA:?})", self.schema));
        }
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return bad(format!("scenario name {:?} must be non-empty [A-Za-z0-9_-]", self.name));
        }
        if !(self.tol_scale.is_finite() && self.tol_scale > 0.0) {
            return bad("tol_scale must be positive".into());
        }
        let r = &self.resolution;
        if self.model.is_two_dimensional() {
            let min = if matches!(self.model, Model::MinOfThree { .. }) { 3 } else { 16 };
            if r.grid_2d < min {
                return bad(format!("grid_2d must be at least {min}"));
            }
        } else if r.samples < 256 || r.steps < 16 || r.grid < 256 {
            return bad("resolution needs samples >= 256, steps >= 16 and grid >= 256".into());
        }
        for c in &self.checks {
            if !self.model.supported_checks().contains(c) {
                return bad(format!("check {c:?} does not apply to a {} model", self.model.kind()));
            }
        }
        match &self.model {
            Model::Hamiltonian { hamiltonian } => {
                if hamiltonian.dim != 1 {
                    return bad("hamiltonian models live on T*S1 (dim = 1)".into());
                }
                hamiltonian.validate().map_err(|e| RunError::Usage(e.to_string()))?;
            }
            Model::FoldFamily { count, partner } => {
                if *count == 0 || !(partner.is_finite() && *partner > 0.0) {
                    return bad("fold-family needs count > 0 and a positive partner size".into());
                }
            }
            Model::CapacitySweep { amplitudes, decay } => {
                if amplitudes.is_empty() || amplitudes.iter().chain(decay).any(|a| !(a.is_finite() && *a > 0.0)) {
                    return bad("capacity amplitudes must be positive".into());
                }
            }
            Model::TorusCliffwall { eps } => {
                if !eps.is_finite() {
                    return bad("eps must be finite".into());
                }
            }
            Model::MinOfThree { at } => {
                if at.iter().any(|c| !c.is_finite() || c.abs() >= 1.0) {
                    return bad("the triple point must lie inside (-1, 1)^2".into());
                }
            }
        }
        Ok(())
    }

    /// The checks to run: the explicit subset or everything supported.
    pub fn active_checks(&self) -> Vec<CheckKind> {
        if self.checks.is_empty() {
            self.model.supported_checks().to_vec()
        } else {
            let mut c = self.checks.clone();
            c.sort();
            c.dedup();
            c
        }
    }

    /// Applies a `--resolution` override to the grid that matters for the
    /// model.
    pub fn with_resolution(mut self, n: usize) -> Self {
        if self.model.is_two_dimensional() {
            self.resolution.grid_2d = n;
        } else {
            self.resolution.samples = n;
            self.resolution.grid = n;
        }
        self
    }
}
