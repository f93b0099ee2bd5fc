//! Closed-form results for the three-site minimal model: a pair (0, 1)
//! coupled by `J`, both reaching site 2 through `ε`, uniform dephasing `Γ`
//! and optionally recycling extraction `γ_l` from site 2 back into site 0.

use serde::Serialize;

use crate::dynamics::{evolve, log_times, settling_time, DensityMatrix, EvolveOptions};
use crate::liouvillian::{build_uniform, Hamiltonian};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MinimalModelParams {
    pub j: f64,
    pub eps: f64,
    pub gamma: f64,
    pub gamma_l: Option<f64>,
}

/// Dephasing relative to the coupling it competes with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Regime {
    Weak,
    Strong,
}

/// Factor by which Γ must differ from the reference coupling before a
/// regime is assigned.
pub const REGIME_SEPARATION: f64 = 3.0;

pub fn classify(gamma: f64, coupling: f64) -> Option<Regime> {
    if gamma * REGIME_SEPARATION < coupling {
        Some(Regime::Weak)
    } else if gamma > REGIME_SEPARATION * coupling {
        Some(Regime::Strong)
    } else {
        None
    }
}

impl MinimalModelParams {
    pub fn new(j: f64, eps: f64, gamma: f64) -> Self {
        MinimalModelParams { j, eps, gamma, gamma_l: None }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [Some(self.j), Some(self.eps), Some(self.gamma), self.gamma_l];
        if all.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput(format!("model parameters must be finite and non-negative: {self:?}")));
        }
        Ok(())
    }

    /// Γ against the pair coupling J.
    pub fn regime(&self) -> Option<Regime> {
        classify(self.gamma, self.j)
    }
}

/// `γ_tr = 4ε²Γ/(J² + Γ²)`. Zero without dephasing.
pub fn golden_rule_rate(p: &MinimalModelParams) -> Result<f64> {
    p.validate()?;
    if p.gamma == 0.0 {
        return Ok(0.0);
    }
    Ok(4.0 * p.eps * p.eps * p.gamma / (p.j * p.j + p.gamma * p.gamma))
}

/// Exact steady-state flux of the three-site model with injection at 0 and
/// extraction at 2.
pub fn analytic_eta(p: &MinimalModelParams) -> Result<f64> {
    p.validate()?;
    let gl = p.gamma_l.ok_or_else(|| Error::InvalidInput("analytic η needs γ_l".into()))?;
    let (j2, e2, g) = (p.j * p.j, p.eps * p.eps, p.gamma);
    let num = 4.0 * g * gl * (2.0 * g + gl) * e2;
    let den = 4.0 * g.powi(3) * gl
        + 4.0 * gl * gl * e2
        + 4.0 * g * g * (gl * gl + 6.0 * e2)
        + g * (gl.powi(3) + 4.0 * gl * (j2 + 5.0 * e2));
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(num / den)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Connectivity {
    /// Hybridized pair plus a weakly coupled remote site.
    Hierarchical,
    /// All sites coupled by `J`.
    HomogeneousStrong,
    /// All sites coupled by `ε`.
    HomogeneousWeak,
}

impl Connectivity {
    pub const ALL: [Connectivity; 3] = [Connectivity::Hierarchical, Connectivity::HomogeneousStrong, Connectivity::HomogeneousWeak];

    pub fn label(&self) -> &'static str {
        match self {
            Connectivity::Hierarchical => "hierarchical",
            Connectivity::HomogeneousStrong => "homogeneous-strong",
            Connectivity::HomogeneousWeak => "homogeneous-weak",
        }
    }

    /// The coupling Γ competes with.
    fn reference_coupling(&self, p: &MinimalModelParams) -> f64 {
        match self {
            Connectivity::Hierarchical | Connectivity::HomogeneousStrong => p.j,
            Connectivity::HomogeneousWeak => p.eps,
        }
    }

    pub fn hamiltonian(&self, p: &MinimalModelParams) -> Hamiltonian {
        match self {
            Connectivity::Hierarchical => Hamiltonian::three_site(p.j, p.eps),
            Connectivity::HomogeneousStrong => Hamiltonian::homogeneous(3, p.j),
            Connectivity::HomogeneousWeak => Hamiltonian::homogeneous(3, p.eps),
        }
    }
}

/// Leading-order relaxation time for a connectivity class. Refuses inside
/// the crossover `Γ ∈ [g/3, 3g]` of the competing coupling `g`.
pub fn regime_timescale(p: &MinimalModelParams, c: Connectivity) -> Result<f64> {
    p.validate()?;
    let coupling = c.reference_coupling(p);
    let regime = classify(p.gamma, coupling).ok_or_else(|| {
        Error::InvalidInput(format!("Γ = {} is within a factor {REGIME_SEPARATION} of the coupling {coupling}", p.gamma))
    })?;
    let (j2, e2, g) = (p.j * p.j, p.eps * p.eps, p.gamma);
    Ok(match (c, regime) {
        (Connectivity::Hierarchical, Regime::Weak) => j2 / (e2 * g),
        (Connectivity::Hierarchical, Regime::Strong) => g / e2,
        (_, Regime::Weak) => 1.0 / g,
        (Connectivity::HomogeneousStrong, Regime::Strong) => g / j2,
        (Connectivity::HomogeneousWeak, Regime::Strong) => g / e2,
    })
}

/// Time after which site 2 stays within `e⁻¹` of its initial distance from
/// 1/3, starting from site 0.
pub fn simulated_transfer_time(p: &MinimalModelParams, c: Connectivity) -> Result<f64> {
    p.validate()?;
    if p.gamma_l.is_some() {
        return Err(Error::InvalidInput("equilibration time is defined without extraction".into()));
    }
    let l = build_uniform(&c.hamiltonian(p), p.gamma, None)?;
    let times = log_times(1e-2, 1e14, 1601);
    let traj = evolve(&l, &DensityMatrix::pure_site(3, 0), &times, &EvolveOptions { allow_fallback: false, ..Default::default() })?;
    settling_time(&traj, 2, 1.0 / 3.0, 0.0)
        .ok_or_else(|| Error::Numerical { what: "site 2 did not settle inside the time grid".into(), residual: f64::NAN })
}

#[derive(Clone, Debug, Serialize)]
pub struct Table1Row {
    pub regime: Regime,
    pub connectivity: Connectivity,
    pub j: f64,
    pub eps: f64,
    pub gamma: f64,
    pub formula: &'static str,
    pub timescale: f64,
    /// Order of magnitude quoted for this entry.
    pub quoted: f64,
}

/// The regime grid: weak (Γ=1e-5) and strong (Γ=1e-1) dephasing with
/// J=1e-2, ε=1e-4.
pub fn table1() -> Vec<Table1Row> {
    let quoted = [(Regime::Weak, [1e9, 1e5, 1e5]), (Regime::Strong, [1e7, 1e3, 1e7])];
    let mut rows = Vec::new();
    for (regime, q) in quoted {
        let gamma = if regime == Regime::Weak { 1e-5 } else { 1e-1 };
        let p = MinimalModelParams::new(1e-2, 1e-4, gamma);
        for (c, quoted) in Connectivity::ALL.into_iter().zip(q) {
            let formula = match (c, regime) {
                (Connectivity::Hierarchical, Regime::Weak) => "J^2/(eps^2*Gamma)",
                (Connectivity::Hierarchical, Regime::Strong) => "Gamma/eps^2",
                (_, Regime::Weak) => "1/Gamma",
                (Connectivity::HomogeneousStrong, Regime::Strong) => "Gamma/J^2",
                (Connectivity::HomogeneousWeak, Regime::Strong) => "Gamma/eps^2",
            };
            let timescale = regime_timescale(&p, c).expect("table parameters are outside the crossover");
            rows.push(Table1Row { regime, connectivity: c, j: p.j, eps: p.eps, gamma, formula, timescale, quoted });
        }
    }
    rows
}
