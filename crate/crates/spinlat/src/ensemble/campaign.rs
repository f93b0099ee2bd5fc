//! Disorder campaigns: the gateway model and size scaling at fixed density
//! or fixed radius.
//!
//! Realization `r` of size `N` is generated from stream `(N << 32) | r` of
//! the campaign seed, and results are collected in task order, so output is
//! identical for any thread count. Uncertainties come from resampling whole
//! realizations; every derived quantity (minima, fits) is recomputed on each
//! resample.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{fit_model, fit_params, FitModel, FitResult};
use super::grid::GammaGrid;
use super::stats::{ks_critical, ks_two_sample, median, median_in_place, resample_indices, Estimate, BOOTSTRAP_STREAM, CI_LEVEL};
use crate::geometry::{coupling_matrix, coupling_stats, generate_configuration_stream, place_gateway, SpinConfiguration, DEFAULT_MIN_SEPARATION};
use crate::liouvillian::build_hamiltonian;
use crate::measures::{log_parabolic_minimum, DephasingResolvent};
use crate::rng::Stream;
use crate::{linalg, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CampaignMode {
    Gateway,
    FixedDensity,
    FixedRadius,
}

impl CampaignMode {
    pub fn label(self) -> &'static str {
        match self {
            CampaignMode::Gateway => "gateway",
            CampaignMode::FixedDensity => "fixed-density",
            CampaignMode::FixedRadius => "fixed-radius",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Statistic {
    #[default]
    Median,
}

/// Preset sizes: `Desk` runs in minutes on a laptop, `Full` uses the large
/// ensembles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Desk,
    Full,
}

fn default_min_separation() -> f64 {
    DEFAULT_MIN_SEPARATION
}
fn default_fixed_gamma() -> f64 {
    3.2e-5
}
fn default_strong_gamma() -> f64 {
    0.1
}
fn default_weak_gamma() -> f64 {
    1e-6
}
fn default_large_j_factor() -> f64 {
    10.0
}
fn default_max_exclusion() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub mode: CampaignMode,
    /// Bath sizes. Gateway mode uses the first (the gateway is extra).
    pub n_values: Vec<usize>,
    /// Realizations per size; when absent, `round(site_budget / N)`.
    #[serde(default)]
    pub realizations: Option<usize>,
    #[serde(default)]
    pub site_budget: Option<usize>,
    pub gammas: GammaGrid,
    #[serde(default)]
    pub j_values: Vec<f64>,
    /// Radius at N = 10; fixed-density mode scales it as `√(N/10)`.
    pub base_radius: f64,
    pub seed: u64,
    #[serde(default)]
    pub statistic: Statistic,
    pub bootstrap_resamples: usize,
    #[serde(default = "default_min_separation")]
    pub min_separation: f64,
    /// Γ at which gateway `T_ii(J)` is read off.
    #[serde(default = "default_fixed_gamma")]
    pub fixed_gamma: f64,
    #[serde(default = "default_strong_gamma")]
    pub strong_gamma: f64,
    #[serde(default = "default_weak_gamma")]
    pub weak_gamma: f64,
    /// Gateway fits use `J ≥ large_j_factor · ε_link`.
    #[serde(default = "default_large_j_factor")]
    pub large_j_factor: f64,
    #[serde(default = "default_max_exclusion")]
    pub max_exclusion_fraction: f64,
}

fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64)).collect()
}

impl CampaignSpec {
    fn base(mode: CampaignMode, seed: u64) -> Self {
        CampaignSpec {
            mode,
            n_values: vec![10],
            realizations: None,
            site_budget: None,
            gammas: GammaGrid::scaling_default(),
            j_values: Vec::new(),
            base_radius: 32.0,
            seed,
            statistic: Statistic::Median,
            bootstrap_resamples: 400,
            min_separation: DEFAULT_MIN_SEPARATION,
            fixed_gamma: default_fixed_gamma(),
            strong_gamma: default_strong_gamma(),
            weak_gamma: default_weak_gamma(),
            large_j_factor: default_large_j_factor(),
            max_exclusion_fraction: default_max_exclusion(),
        }
    }

    /// Ten bath sites plus a gateway, `J ∈ [1e-3, 1]`.
    pub fn gateway(profile: Profile, seed: u64) -> Self {
        let mut s = Self::base(CampaignMode::Gateway, seed);
        let (count, nj) = match profile {
            Profile::Desk => (40, 6),
            Profile::Full => (100, 8),
        };
        s.realizations = Some(count);
        s.j_values = logspace(-3.0, 0.0, nj);
        s
    }

    /// `R_N = R_10·√(N/10)` with about 2000 sampled sites per size.
    pub fn fixed_density(profile: Profile, seed: u64) -> Self {
        let mut s = Self::base(CampaignMode::FixedDensity, seed);
        s.n_values = match profile {
            Profile::Desk => vec![5, 10, 20, 40],
            Profile::Full => vec![5, 10, 20, 30, 40, 60],
        };
        s.site_budget = Some(2000);
        s
    }

    /// Constant radius with growing N, fifty realizations per size.
    pub fn fixed_radius(profile: Profile, seed: u64) -> Self {
        let mut s = Self::base(CampaignMode::FixedRadius, seed);
        s.n_values = match profile {
            Profile::Desk => vec![10, 20, 30, 40],
            Profile::Full => vec![10, 20, 30, 40, 50, 60],
        };
        s.realizations = Some(50);
        s.strong_gamma = 1.0;
        s
    }

    pub fn preset(mode: CampaignMode, profile: Profile, seed: u64) -> Self {
        match mode {
            CampaignMode::Gateway => Self::gateway(profile, seed),
            CampaignMode::FixedDensity => Self::fixed_density(profile, seed),
            CampaignMode::FixedRadius => Self::fixed_radius(profile, seed),
        }
    }

    pub fn realizations_for(&self, n: usize) -> usize {
        match (self.realizations, self.site_budget) {
            (Some(r), _) => r,
            (None, Some(b)) => ((b as f64 / n as f64).round() as usize).max(1),
            (None, None) => 1,
        }
    }

    pub fn radius_for(&self, n: usize) -> f64 {
        match self.mode {
            CampaignMode::FixedDensity => self.base_radius * (n as f64 / 10.0).sqrt(),
            CampaignMode::Gateway | CampaignMode::FixedRadius => self.base_radius,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if self.n_values.is_empty() || self.n_values.iter().any(|&n| n < 2) {
            return bad("campaign sizes must be at least 2");
        }
        if self.realizations == Some(0) || (self.realizations.is_none() && self.site_budget.is_none()) {
            return bad("need a positive realization count or a site budget");
        }
        if !(self.base_radius > 0.0) {
            return bad("base radius must be positive");
        }
        if self.bootstrap_resamples < 100 {
            return bad("use at least 100 bootstrap resamples");
        }
        if !(0.0..1.0).contains(&self.max_exclusion_fraction) {
            return bad("exclusion fraction must lie in [0, 1)");
        }
        match self.mode {
            CampaignMode::Gateway => {
                if self.j_values.is_empty() || self.j_values.iter().any(|&j| !(1e-4..=1.0).contains(&j)) {
                    return bad("gateway J values must lie in [1e-4, 1]");
                }
                if self.gammas.position(self.fixed_gamma).is_none() {
                    return bad("fixed Γ must be a grid point");
                }
            }
            CampaignMode::FixedDensity | CampaignMode::FixedRadius => {
                for g in [self.strong_gamma, self.weak_gamma] {
                    if self.gammas.position(g).is_none() {
                        return bad("strong and weak Γ must be grid points");
                    }
                }
            }
        }
        Ok(())
    }

    fn stream(n: usize, r: usize) -> u64 {
        ((n as u64) << 32) | r as u64
    }

    fn configuration(&self, n: usize, r: usize) -> Result<SpinConfiguration> {
        generate_configuration_stream(n, self.radius_for(n), self.seed, Self::stream(n, r), self.min_separation)
    }
}

/// One tidy output row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleRecord {
    pub mode: CampaignMode,
    pub n: usize,
    pub j: Option<f64>,
    pub gamma: f64,
    pub realization: usize,
    pub site: usize,
    pub t_ii: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Exclusion {
    pub n: usize,
    pub realization: usize,
    pub reason: String,
}

fn check_exclusions(spec: &CampaignSpec, exclusions: &[Exclusion], total: usize) -> Result<()> {
    let frac = exclusions.len() as f64 / total as f64;
    if frac > spec.max_exclusion_fraction {
        let first = exclusions.first().map(|e| e.reason.as_str()).unwrap_or("");
        return Err(Error::Numerical {
            what: format!("{} of {total} realizations failed (first: {first})", exclusions.len()),
            residual: frac,
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Gateway model

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GatewayRealization {
    pub index: usize,
    /// `t_ii[j][g]` at the excitation site.
    pub t_ii: Vec<Vec<f64>>,
    pub eps_link: f64,
    pub eps_bath: f64,
}

/// Coupling of the excitation–gateway bright state to the bath:
/// `√Σ_k (J_ek + J_gk)²`.
pub fn eps_link(cm: &Array2<f64>, excitation: usize, gateway: usize) -> f64 {
    (0..cm.nrows())
        .filter(|&k| k != excitation && k != gateway)
        .map(|k| (cm[[excitation, k]] + cm[[gateway, k]]).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Characteristic intra-bath coupling `√(1/(2·median_k [L⁺]_kk))`, with `L`
/// the `J²`-weighted graph Laplacian of the `sites`. In the incoherent
/// limit `T_kk = (Γ/2)[L⁺]_kk`, so this is the coupling of a uniform bath
/// with the same median survival time.
pub fn eps_bath(cm: &Array2<f64>, sites: &[usize]) -> Result<f64> {
    let m = sites.len();
    if m < 2 {
        return Err(Error::InvalidInput("bath needs two sites".into()));
    }
    let mut lap = Array2::<f64>::zeros((m, m));
    for (a, &i) in sites.iter().enumerate() {
        for (b, &j) in sites.iter().enumerate() {
            if a != b {
                let w = cm[[i, j]].powi(2);
                lap[[a, b]] = -w;
                lap[[a, a]] += w;
            }
        }
    }
    let (vals, vecs) = linalg::eigh(&lap)?;
    let tol = 1e-12 * vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let diag: Vec<f64> = (0..m)
        .map(|k| (0..m).filter(|&q| vals[q] > tol).map(|q| vecs[[k, q]].powi(2) / vals[q]).sum())
        .collect();
    Ok((0.5 / median(&diag)).sqrt())
}

fn gateway_realization(spec: &CampaignSpec, r: usize) -> Result<GatewayRealization> {
    let n = spec.n_values[0];
    let mut bath = spec.configuration(n, r)?;
    let exc = 0;
    bath.labels.excitation = Some(exc);
    let gammas = spec.gammas.points();
    let mut t_ii = Vec::with_capacity(spec.j_values.len());
    let mut link = f64::NAN;
    let j_top = spec.j_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for &j in &spec.j_values {
        let cfg = place_gateway(&bath, j, 1.0)?;
        let cm = coupling_matrix(&cfg, 1.0, None)?;
        let h = build_hamiltonian(&cfg, &cm)?;
        let res = DephasingResolvent::new(&h)?;
        let row = gammas.iter().map(|&g| Ok(res.rows(g, &[exc])?.0[0][exc])).collect::<Result<Vec<f64>>>()?;
        if let Some(&bad) = row.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Numerical { what: format!("non-positive survival time at J = {j}"), residual: bad });
        }
        t_ii.push(row);
        if j == j_top {
            link = eps_link(&cm.values, exc, cfg.labels.gateway.expect("gateway placed"));
        }
    }
    let cm = coupling_matrix(&bath, 1.0, None)?;
    let sites: Vec<usize> = (0..n).filter(|&k| k != exc).collect();
    Ok(GatewayRealization { index: r, t_ii, eps_link: link, eps_bath: eps_bath(&cm.values, &sites)? })
}

/// Curves derived from one set of realizations.
struct GatewayCurves {
    median: Vec<Vec<f64>>,
    gamma_star: Vec<f64>,
    t_min: Vec<f64>,
    t_fixed: Vec<f64>,
}

fn gateway_curves(data: &[GatewayRealization], pick: &[usize], gammas: &[f64], fixed: usize) -> GatewayCurves {
    let nj = data[0].t_ii.len();
    let mut buf = Vec::with_capacity(pick.len());
    let median: Vec<Vec<f64>> = (0..nj)
        .map(|j| {
            (0..gammas.len())
                .map(|g| {
                    buf.clear();
                    buf.extend(pick.iter().map(|&r| data[r].t_ii[j][g]));
                    median_in_place(&mut buf)
                })
                .collect()
        })
        .collect();
    let (gamma_star, t_min) = median.iter().map(|c| log_parabolic_minimum(gammas, c)).unzip();
    let t_fixed = median.iter().map(|c| c[fixed]).collect();
    GatewayCurves { median, gamma_star, t_min, t_fixed }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GatewayFits {
    /// `T_ii(J) = A·J^α` at the fixed Γ.
    pub t_fixed_power: Option<FitResult>,
    /// `T_ii(J) = a·J²` at the fixed Γ.
    pub t_fixed_quadratic: Option<FitResult>,
    /// `Γ*(J) = a·J + b`.
    pub gamma_star_linear: Option<FitResult>,
    /// `T_min(J) = A·J^α`.
    pub t_min_power: Option<FitResult>,
    /// `T_min(J) = a·J + b`.
    pub t_min_linear: Option<FitResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GatewayCampaignResult {
    pub spec: CampaignSpec,
    pub gammas: Vec<f64>,
    pub j_values: Vec<f64>,
    pub realizations: Vec<GatewayRealization>,
    pub exclusions: Vec<Exclusion>,
    /// `median[j][g]` of the excitation-site `T_ii`.
    pub median: Vec<Vec<Estimate>>,
    pub eps_link: Estimate,
    pub eps_bath: Estimate,
    pub gamma_star: Vec<Estimate>,
    pub t_min: Vec<Estimate>,
    pub t_fixed: Vec<Estimate>,
    pub large_j: Vec<bool>,
    pub fits: GatewayFits,
}

impl GatewayCampaignResult {
    pub fn eps_ratio(&self) -> f64 {
        self.eps_bath.value / self.eps_link.value
    }

    /// Expected `T_min` slope `1/(ε_bath·ε_link)`.
    pub fn t_min_slope_scale(&self) -> f64 {
        1.0 / (self.eps_bath.value * self.eps_link.value)
    }

    pub fn records(&self) -> impl Iterator<Item = EnsembleRecord> + '_ {
        let n = self.spec.n_values[0];
        self.realizations.iter().flat_map(move |r| {
            self.j_values.iter().enumerate().flat_map(move |(ji, &j)| {
                self.gammas.iter().enumerate().map(move |(g, &gamma)| EnsembleRecord {
                    mode: CampaignMode::Gateway,
                    n,
                    j: Some(j),
                    gamma,
                    realization: r.index,
                    site: 0,
                    t_ii: r.t_ii[ji][g],
                })
            })
        })
    }
}

fn large_points(xs: &[f64], ys: &[f64], mask: &[bool]) -> (Vec<f64>, Vec<f64>) {
    xs.iter().zip(ys).zip(mask).filter(|(_, &m)| m).map(|((x, y), _)| (*x, *y)).unzip()
}

fn fit_with(xs: &[f64], ys: &[f64], model: FitModel, replicates: &[(Vec<f64>, Vec<f64>)]) -> Option<FitResult> {
    let fit = fit_model(xs, ys, model, None, 0, 0).ok()?;
    let reps: Vec<Vec<f64>> = replicates
        .iter()
        .map(|(x, y)| fit_params(x, y, model).unwrap_or_else(|_| vec![f64::NAN; model.param_count()]))
        .collect();
    Some(fit.with_replicates(&reps))
}

pub fn run_gateway_campaign(spec: &CampaignSpec) -> Result<GatewayCampaignResult> {
    if spec.mode != CampaignMode::Gateway {
        return Err(Error::InvalidInput("not a gateway campaign".into()));
    }
    spec.validate()?;
    let n = spec.n_values[0];
    let count = spec.realizations_for(n);
    let outcomes: Vec<Result<GatewayRealization>> = (0..count).into_par_iter().map(|r| gateway_realization(spec, r)).collect();
    let mut data = Vec::new();
    let mut exclusions = Vec::new();
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(d) => data.push(d),
            Err(e) => exclusions.push(Exclusion { n, realization: r, reason: e.to_string() }),
        }
    }
    check_exclusions(spec, &exclusions, count)?;
    if data.len() < 2 {
        return Err(Error::InvalidInput("need at least two successful realizations".into()));
    }

    let gammas = spec.gammas.points().to_vec();
    let fixed = spec.gammas.position(spec.fixed_gamma).expect("validated");
    let links: Vec<f64> = data.iter().map(|d| d.eps_link).collect();
    let baths: Vec<f64> = data.iter().map(|d| d.eps_bath).collect();
    let all: Vec<usize> = (0..data.len()).collect();
    let point = gateway_curves(&data, &all, &gammas, fixed);
    let link = median(&links);
    let large: Vec<bool> = spec.j_values.iter().map(|&j| j >= spec.large_j_factor * link).collect();

    let reps: Vec<(GatewayCurves, f64, f64)> = (0..spec.bootstrap_resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = Stream::new(spec.seed, BOOTSTRAP_STREAM + 16 + b as u64);
            let pick = resample_indices(&mut rng, data.len());
            let c = gateway_curves(&data, &pick, &gammas, fixed);
            let l = median(&pick.iter().map(|&r| links[r]).collect::<Vec<_>>());
            let e = median(&pick.iter().map(|&r| baths[r]).collect::<Vec<_>>());
            (c, l, e)
        })
        .collect();
    let est = |v: f64, f: &dyn Fn(&(GatewayCurves, f64, f64)) -> f64| {
        Estimate::from_replicates(v, &reps.iter().map(f).collect::<Vec<_>>(), CI_LEVEL)
    };
    let nj = spec.j_values.len();
    let median_est = (0..nj)
        .map(|j| (0..gammas.len()).map(|g| est(point.median[j][g], &|r| r.0.median[j][g])).collect())
        .collect();
    let gamma_star = (0..nj).map(|j| est(point.gamma_star[j], &|r| r.0.gamma_star[j])).collect();
    let t_min = (0..nj).map(|j| est(point.t_min[j], &|r| r.0.t_min[j])).collect();
    let t_fixed = (0..nj).map(|j| est(point.t_fixed[j], &|r| r.0.t_fixed[j])).collect();

    let js = &spec.j_values;
    let series = |f: &dyn Fn(&GatewayCurves) -> &Vec<f64>| {
        let p = large_points(js, f(&point), &large);
        let r: Vec<(Vec<f64>, Vec<f64>)> = reps.iter().map(|rep| large_points(js, f(&rep.0), &large)).collect();
        (p, r)
    };
    let ((fx, fy), frep) = series(&|c| &c.t_fixed);
    let ((gx, gy), grep) = series(&|c| &c.gamma_star);
    let ((mx, my), mrep) = series(&|c| &c.t_min);
    let fits = GatewayFits {
        t_fixed_power: fit_with(&fx, &fy, FitModel::PowerLaw, &frep),
        t_fixed_quadratic: fit_with(&fx, &fy, FitModel::Quadratic, &frep),
        gamma_star_linear: fit_with(&gx, &gy, FitModel::Linear, &grep),
        t_min_power: fit_with(&mx, &my, FitModel::PowerLaw, &mrep),
        t_min_linear: fit_with(&mx, &my, FitModel::Linear, &mrep),
    };

    Ok(GatewayCampaignResult {
        spec: spec.clone(),
        gammas,
        j_values: spec.j_values.clone(),
        eps_link: est(link, &|r| r.1),
        eps_bath: est(median(&baths), &|r| r.2),
        realizations: data,
        exclusions,
        median: median_est,
        gamma_star,
        t_min,
        t_fixed,
        large_j: large,
        fits,
    })
}

// ---------------------------------------------------------------------------
// Size scaling

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingRealization {
    pub n: usize,
    pub index: usize,
    /// `t_ii[g][site]`.
    pub t_ii: Vec<Vec<f64>>,
    /// Per-site maximum coupling `M_i`.
    pub max_coupling: Vec<f64>,
    pub jmax_bath: f64,
}

fn scaling_realization(spec: &CampaignSpec, n: usize, r: usize) -> Result<ScalingRealization> {
    let cfg = spec.configuration(n, r)?;
    let cm = coupling_matrix(&cfg, 1.0, None)?;
    let stats = coupling_stats(&cm, &[]);
    let h = build_hamiltonian(&cfg, &cm)?;
    let res = DephasingResolvent::new(&h)?;
    let t_ii = spec.gammas.points().iter().map(|&g| res.survival(g)).collect::<Result<Vec<_>>>()?;
    if t_ii.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numerical { what: "non-finite survival time".into(), residual: f64::NAN });
    }
    Ok(ScalingRealization { n, index: r, t_ii, max_coupling: stats.m, jmax_bath: stats.jmax_bath })
}

/// Pooled median `|T_ii|` per Γ and its minimum, for one size.
struct SizeCurve {
    median: Vec<f64>,
    gamma_star: f64,
    t_min: f64,
}

fn size_curve(data: &[ScalingRealization], pick: &[usize], gammas: &[f64]) -> SizeCurve {
    let mut buf = Vec::new();
    let median: Vec<f64> = (0..gammas.len())
        .map(|g| {
            buf.clear();
            for &r in pick {
                buf.extend(data[r].t_ii[g].iter().map(|v| v.abs()));
            }
            median_in_place(&mut buf)
        })
        .collect();
    let (gamma_star, t_min) = log_parabolic_minimum(gammas, &median);
    SizeCurve { median, gamma_star, t_min }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SizeSummary {
    pub n: usize,
    pub radius: f64,
    pub realizations: usize,
    pub sites: usize,
    /// Pooled median `|T_ii|` per Γ.
    pub median: Vec<Estimate>,
    pub gamma_star: Estimate,
    pub t_min: Estimate,
    pub jmax_bath_median: f64,
    /// KS distance of the `M_i` distribution from the reference size.
    pub max_coupling_ks: f64,
    pub max_coupling_ks_critical: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingFits {
    /// `median |T_ii| ∝ N^α` at the strong Γ.
    pub strong_power: Option<FitResult>,
    /// Same at the weak Γ.
    pub weak_power: Option<FitResult>,
    /// `Γ* ∝ N^s`; `s` is the trend exponent.
    pub gamma_star_power: Option<FitResult>,
    /// `T_min ∝ N^α`.
    pub t_min_power: Option<FitResult>,
    /// `T_min = C e^(−αN) + b` (fixed radius).
    pub t_min_exponential: Option<FitResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingCampaignResult {
    pub spec: CampaignSpec,
    pub gammas: Vec<f64>,
    pub sizes: Vec<SizeSummary>,
    pub realizations: Vec<ScalingRealization>,
    pub exclusions: Vec<Exclusion>,
    pub fits: ScalingFits,
    /// Every size's `M_i` distribution is within the KS critical value
    /// (α = 0.01) of the reference size.
    pub local_invariance: bool,
    pub jmax_bath_monotone: bool,
    /// Point estimates of Γ* increase with N.
    pub gamma_star_monotone: bool,
    /// `T_min` intervals at N = 30 and 40 overlap (the two largest sizes
    /// when those are not both present).
    pub t_min_saturates: bool,
}

impl ScalingCampaignResult {
    pub fn records(&self) -> impl Iterator<Item = EnsembleRecord> + '_ {
        let mode = self.spec.mode;
        self.realizations.iter().flat_map(move |r| {
            self.gammas.iter().enumerate().flat_map(move |(g, &gamma)| {
                r.t_ii[g].iter().enumerate().map(move |(site, &t)| EnsembleRecord {
                    mode,
                    n: r.n,
                    j: None,
                    gamma,
                    realization: r.index,
                    site,
                    t_ii: t,
                })
            })
        })
    }
}

pub fn run_scaling_campaign(spec: &CampaignSpec) -> Result<ScalingCampaignResult> {
    if spec.mode == CampaignMode::Gateway {
        return Err(Error::InvalidInput("gateway specs go to run_gateway_campaign".into()));
    }
    spec.validate()?;
    let tasks: Vec<(usize, usize)> = spec.n_values.iter().flat_map(|&n| (0..spec.realizations_for(n)).map(move |r| (n, r))).collect();
    let outcomes: Vec<Result<ScalingRealization>> = tasks.par_iter().map(|&(n, r)| scaling_realization(spec, n, r)).collect();
    let mut data = Vec::new();
    let mut exclusions = Vec::new();
    for (&(n, r), o) in tasks.iter().zip(outcomes) {
        match o {
            Ok(d) => data.push(d),
            Err(e) => exclusions.push(Exclusion { n, realization: r, reason: e.to_string() }),
        }
    }
    check_exclusions(spec, &exclusions, tasks.len())?;

    let gammas = spec.gammas.points().to_vec();
    let by_size: Vec<Vec<ScalingRealization>> =
        spec.n_values.iter().map(|&n| data.iter().filter(|d| d.n == n).cloned().collect()).collect();
    if by_size.iter().any(|v| v.is_empty()) {
        return Err(Error::InvalidInput("a campaign size has no successful realizations".into()));
    }
    let points: Vec<SizeCurve> = by_size.iter().map(|d| size_curve(d, &(0..d.len()).collect::<Vec<_>>(), &gammas)).collect();
    let reps: Vec<Vec<SizeCurve>> = (0..spec.bootstrap_resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = Stream::new(spec.seed, BOOTSTRAP_STREAM + 16 + b as u64);
            by_size.iter().map(|d| size_curve(d, &resample_indices(&mut rng, d.len()), &gammas)).collect()
        })
        .collect();

    let reference = spec.n_values.iter().position(|&n| n >= 10).unwrap_or(0);
    let m_ref: Vec<f64> = by_size[reference].iter().flat_map(|d| d.max_coupling.iter().copied()).collect();
    let sizes: Vec<SizeSummary> = by_size
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let n = spec.n_values[k];
            let est = |v: f64, f: &dyn Fn(&SizeCurve) -> f64| Estimate::from_replicates(v, &reps.iter().map(|r| f(&r[k])).collect::<Vec<_>>(), CI_LEVEL);
            let m: Vec<f64> = d.iter().flat_map(|r| r.max_coupling.iter().copied()).collect();
            SizeSummary {
                n,
                radius: spec.radius_for(n),
                realizations: d.len(),
                sites: m.len(),
                median: (0..gammas.len()).map(|g| est(points[k].median[g], &|c| c.median[g])).collect(),
                gamma_star: est(points[k].gamma_star, &|c| c.gamma_star),
                t_min: est(points[k].t_min, &|c| c.t_min),
                jmax_bath_median: median(&d.iter().map(|r| r.jmax_bath).collect::<Vec<_>>()),
                max_coupling_ks: ks_two_sample(&m, &m_ref),
                max_coupling_ks_critical: ks_critical(m.len(), m_ref.len(), 0.01),
            }
        })
        .collect();

    let ns: Vec<f64> = spec.n_values.iter().map(|&n| n as f64).collect();
    let strong = spec.gammas.position(spec.strong_gamma).expect("validated");
    let weak = spec.gammas.position(spec.weak_gamma).expect("validated");
    let fit_over = |model: FitModel, f: &dyn Fn(&SizeCurve) -> f64| {
        let ys: Vec<f64> = points.iter().map(f).collect();
        let r: Vec<(Vec<f64>, Vec<f64>)> = reps.iter().map(|rep| (ns.clone(), rep.iter().map(f).collect())).collect();
        fit_with(&ns, &ys, model, &r)
    };
    let fits = ScalingFits {
        strong_power: fit_over(FitModel::PowerLaw, &|c| c.median[strong]),
        weak_power: fit_over(FitModel::PowerLaw, &|c| c.median[weak]),
        gamma_star_power: fit_over(FitModel::PowerLaw, &|c| c.gamma_star),
        t_min_power: fit_over(FitModel::PowerLaw, &|c| c.t_min),
        t_min_exponential: if spec.mode == CampaignMode::FixedRadius { fit_over(FitModel::Exponential, &|c| c.t_min) } else { None },
    };

    let local_invariance = sizes.iter().all(|s| s.max_coupling_ks <= s.max_coupling_ks_critical);
    let jmax_bath_monotone = sizes.windows(2).all(|w| w[1].jmax_bath_median > w[0].jmax_bath_median);
    let gamma_star_monotone = sizes.windows(2).all(|w| w[1].gamma_star.value > w[0].gamma_star.value);
    let size = |n: usize| sizes.iter().find(|s| s.n == n);
    let t_min_saturates = match (size(30), size(40)) {
        (Some(a), Some(b)) => a.t_min.overlaps(&b.t_min),
        _ => sizes.len() >= 2 && sizes[sizes.len() - 1].t_min.overlaps(&sizes[sizes.len() - 2].t_min),
    };

    Ok(ScalingCampaignResult {
        spec: spec.clone(),
        gammas,
        sizes,
        realizations: data,
        exclusions,
        fits,
        local_invariance,
        jmax_bath_monotone,
        gamma_star_monotone,
        t_min_saturates,
    })
}
