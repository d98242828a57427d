//! Acceptance checks. Each check draws its own seeded inputs, compares the
//! library against an oracle and reports pass/fail with the numbers behind it.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

mod closed_form;
mod decay_checks;
mod descent_checks;
mod geometry_checks;
mod map;
mod sample;
mod structure;

pub use map::{damped_newton_map, LogisticOracle};

#[derive(Clone, Debug, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub metrics: BTreeMap<String, f64>,
    pub runtime_s: f64,
}

/// What a check hands back before timing and naming are attached.
#[derive(Debug, Default)]
pub struct Outcome {
    pub passed: bool,
    pub detail: String,
    pub metrics: BTreeMap<String, f64>,
}

impl Outcome {
    fn metric(&mut self, key: &str, v: f64) {
        self.metrics.insert(key.to_string(), v);
    }
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    /// Comma-separated names or ids; `None` runs everything.
    pub filter: Option<String>,
    pub seed: u64,
    /// Multiplies the decay rates before they are checked. Anything other
    /// than 1 is a tamper that the refined-decay check must catch.
    pub rate_scale: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { filter: None, seed: 20_240_601, rate_scale: 1.0 }
    }
}

pub struct Criterion {
    pub id: u32,
    pub name: &'static str,
    pub summary: &'static str,
    run: fn(&VerifyOptions) -> hkgf::Result<Outcome>,
}

pub const CRITERIA: &[Criterion] = &[
    Criterion {
        id: 1,
        name: "closed-form-precision",
        summary: "RK4 in exponent coordinates vs the closed-form precision",
        run: closed_form::closed_form_precision,
    },
    Criterion {
        id: 2,
        name: "gradient-structure",
        summary: "flow field equals minus the Onsager operator applied to the energy differential",
        run: structure::gradient_structure,
    },
    Criterion {
        id: 3,
        name: "onsager-reduction",
        summary: "integral-route quadratic form vs closed-form reduced operators",
        run: structure::onsager_reduction,
    },
    Criterion {
        id: 4,
        name: "hessian-oracle",
        summary: "explicit Hessian vs energy curvature along geodesics; Hamiltonian drift",
        run: geometry_checks::hessian_oracle,
    },
    Criterion {
        id: 5,
        name: "convexity-dichotomy",
        summary: "transport-only Rayleigh bound and reaction witness",
        run: geometry_checks::convexity_dichotomy,
    },
    Criterion {
        id: 6,
        name: "pl-sublevel",
        summary: "PL inequalities on sublevel samples",
        run: decay_checks::pl_sublevel,
    },
    Criterion {
        id: 7,
        name: "refined-decay",
        summary: "eigenvalue-refined decay bounds and the fitted covariance rate",
        run: decay_checks::refined_decay,
    },
    Criterion {
        id: 8,
        name: "mass-closed-form",
        summary: "integrated mass vs the closed form; mass conserved without reaction",
        run: closed_form::mass_closed_form,
    },
    Criterion {
        id: 9,
        name: "precision-contraction",
        summary: "‖A(t)−Ā‖² ≤ e^{−βt}‖A₀−Ā‖² along integrated trajectories",
        run: closed_form::precision_contraction,
    },
    Criterion {
        id: 10,
        name: "gaussian-moments",
        summary: "standard-normal moment formulas vs Monte Carlo and diagonal cases",
        run: structure::gaussian_moments,
    },
    Criterion {
        id: 11,
        name: "descent-gaussian",
        summary: "descent on a Gaussian target: convergence, order vs RK4, geometry ordering",
        run: descent_checks::descent_gaussian,
    },
    Criterion {
        id: 12,
        name: "logistic-map",
        summary: "logistic posterior: descent mean vs damped-Newton MAP, stationarity residuals",
        run: descent_checks::logistic_map,
    },
    Criterion {
        id: 13,
        name: "eigen-sandwich",
        summary: "eigenvalue envelope and the Hellmann–Feynman eigenvalue ODE",
        run: decay_checks::eigen_sandwich,
    },
];

fn selected(c: &Criterion, filter: Option<&str>) -> bool {
    let Some(f) = filter else { return true };
    f.split(',').map(str::trim).filter(|s| !s.is_empty()).any(|tok| {
        tok.parse::<u32>().map(|id| id == c.id).unwrap_or(false) || c.name.contains(tok)
    })
}

/// The criteria a filter selects, in id order.
pub fn select(filter: Option<&str>) -> Vec<&'static Criterion> {
    CRITERIA.iter().filter(|c| selected(c, filter)).collect()
}

pub fn run_criterion(c: &Criterion, opts: &VerifyOptions) -> CriterionResult {
    let start = Instant::now();
    let out = (c.run)(opts).unwrap_or_else(|e| Outcome { passed: false, detail: format!("error: {e}"), metrics: BTreeMap::new() });
    CriterionResult {
        id: c.id,
        name: c.name.to_string(),
        passed: out.passed,
        detail: out.detail,
        metrics: out.metrics,
        runtime_s: start.elapsed().as_secs_f64(),
    }
}

pub fn run(opts: &VerifyOptions) -> Vec<CriterionResult> {
    select(opts.filter.as_deref()).into_iter().map(|c| run_criterion(c, opts)).collect()
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {:<22} {:>7.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.runtime_s,
            self.detail
        )
    }
}

/// Seed for one check, derived from the suite seed.
fn seed_for(opts: &VerifyOptions, id: u32) -> u64 {
    opts.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(id as u64)
}
