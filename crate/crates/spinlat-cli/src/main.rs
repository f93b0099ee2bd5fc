mod output;
mod plot;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use output::{num, CliError, CliResult, Run};
use spinlat::dynamics::{evolve, log_times, DensityMatrix, EvolveOptions, Method};
use spinlat::ensemble::{run_gateway_campaign, run_scaling_campaign, CampaignMode, CampaignSpec, Estimate, FitResult, GammaGrid, Profile};
use spinlat::geometry::{coupling_matrix, coupling_stats, generate_configuration, log_bins, SpinConfiguration, DEFAULT_MIN_SEPARATION};
use spinlat::liouvillian::{build_hamiltonian, build_liouvillian, build_uniform, decompose, DecomposeOptions, Hamiltonian, Loss};
use spinlat::measures::{log_parabolic_minimum, mfpt_with_trap, survival_table, transfer_matrix, transfer_matrix_spectral, DephasingResolvent};
use spinlat::ness::{dominant_pathway, flux_sweep, solve_ness, NessProblem, NessResult};
use spinlat::reference::{analytic_eta, simulated_transfer_time, table1, MinimalModelParams};
use spinlat::synth::{config_a, config_b};

#[derive(Parser, Serialize)]
#[command(name = "spinlat", version, about = "Single-excitation transport in disordered dipolar spin networks")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads for sweeps and campaigns.
    #[arg(long, global = true, env = "SPINLAT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Sample a random disc configuration.
    GenConfig(GenConfigArgs),
    /// Pair couplings, per-site statistics and a coupling histogram.
    Couplings(CouplingsArgs),
    /// Liouvillian eigenvalues at uniform dephasing.
    Spectrum(SpectrumArgs),
    /// Site populations and purity over time.
    Evolve(EvolveArgs),
    /// Integrated transfer matrix T_ij, optionally with a trap MFPT.
    Transfer(TransferArgs),
    /// Survival times T_ii over a Γ grid.
    Survival(SurvivalArgs),
    /// Steady-state flux and currents.
    Ness(NessArgs),
    /// Flux η(Γ) for one or more extraction rates, with peaks.
    FluxSweep(FluxSweepArgs),
    /// Dominant current pathway at one dephasing rate.
    Pathway(PathwayArgs),
    /// Three-site regime timescales.
    Table1(Table1Args),
    /// Disorder campaign (gateway, fixed density or fixed radius).
    Campaign(CampaignArgs),
    /// Render a CSV table as SVG.
    Plot(PlotArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenConfig(_) => "gen-config",
            Command::Couplings(_) => "couplings",
            Command::Spectrum(_) => "spectrum",
            Command::Evolve(_) => "evolve",
            Command::Transfer(_) => "transfer",
            Command::Survival(_) => "survival",
            Command::Ness(_) => "ness",
            Command::FluxSweep(_) => "flux-sweep",
            Command::Pathway(_) => "pathway",
            Command::Table1(_) => "table1",
            Command::Campaign(_) => "campaign",
            Command::Plot(_) => "plot",
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SynthKind {
    A,
    B,
}

/// Where the network comes from: a configuration file, the three-site
/// model or a synthesized geometry.
#[derive(Args, Clone, Serialize)]
struct NetworkArgs {
    /// Configuration JSON written by gen-config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Pair (0, 1) coupled by --j, both coupled to site 2 by --eps.
    #[arg(long)]
    three_site: bool,
    #[arg(long)]
    j: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    /// Synthesized geometry: one tight cluster (a) or two routes (b).
    #[arg(long, value_enum)]
    synth: Option<SynthKind>,
    /// Positional jitter for --synth.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    /// Jitter seed for --synth.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

struct Network {
    h: Hamiltonian,
    /// Default injection/extraction pair.
    terminals: Option<(usize, usize)>,
    three_site: Option<(f64, f64)>,
}

impl NetworkArgs {
    fn load(&self, run: &mut Run) -> CliResult<Network> {
        let chosen = self.config.is_some() as u8 + self.three_site as u8 + self.synth.is_some() as u8;
        if chosen != 1 {
            return Err(CliError::Usage("give exactly one of --config, --three-site, --synth".into()));
        }
        if let Some(path) = &self.config {
            let cfg = read_config(path, run)?;
            let cm = coupling_matrix(&cfg, 1.0, None)?;
            return Ok(Network { h: build_hamiltonian(&cfg, &cm)?, terminals: None, three_site: None });
        }
        if self.three_site {
            let (Some(j), Some(eps)) = (self.j, self.eps) else {
                return Err(CliError::Usage("--three-site needs --j and --eps".into()));
            };
            return Ok(Network { h: Hamiltonian::three_site(j, eps), terminals: Some((0, 2)), three_site: Some((j, eps)) });
        }
        run.seed = Some(self.seed);
        let g = match self.synth.expect("counted above") {
            SynthKind::A => config_a(self.jitter, self.seed)?,
            SynthKind::B => config_b(self.jitter, self.seed)?,
        };
        let cm = coupling_matrix(&g.config, 1.0, None)?;
        Ok(Network { h: build_hamiltonian(&g.config, &cm)?, terminals: Some((g.inject, g.extract)), three_site: None })
    }
}

impl Network {
    fn terminals(&self, inject: Option<usize>, extract: Option<usize>) -> CliResult<(usize, usize)> {
        match (inject.or(self.terminals.map(|t| t.0)), extract.or(self.terminals.map(|t| t.1))) {
            (Some(i), Some(e)) => Ok((i, e)),
            _ => Err(CliError::Usage("give --inject and --extract".into())),
        }
    }
}

fn read_config(path: &Path, run: &mut Run) -> CliResult<SpinConfiguration> {
    run.input(path);
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(SpinConfiguration::from_json(&text)?)
}

fn parse_grid(spec: &str) -> CliResult<Vec<f64>> {
    GammaGrid::parse(spec).map(|g| g.points().to_vec()).map_err(|e| CliError::Usage(e.to_string()))
}

#[derive(Args, Serialize)]
struct GenConfigArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    radius: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MIN_SEPARATION)]
    min_separation: f64,
    /// Output file name inside --out.
    #[arg(long, default_value = "config.json")]
    file: String,
}

fn gen_config(a: &GenConfigArgs, run: &mut Run) -> CliResult<()> {
    run.seed = Some(a.seed);
    let cfg = generate_configuration(a.n, a.radius, a.seed, a.min_separation)?;
    run.text(&a.file, &(cfg.to_json() + "\n"))?;
    Ok(())
}

#[derive(Args, Serialize)]
struct CouplingsArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 40)]
    bins: usize,
    #[arg(long, default_value_t = 1e-8)]
    lo: f64,
    #[arg(long, default_value_t = 1.0)]
    hi: f64,
}

fn couplings(a: &CouplingsArgs, run: &mut Run) -> CliResult<()> {
    if !(a.lo > 0.0 && a.hi > a.lo && a.bins > 0) {
        return Err(CliError::Usage("histogram needs 0 < lo < hi and at least one bin".into()));
    }
    let cfg = read_config(&a.config, run)?;
    let cm = coupling_matrix(&cfg, 1.0, None)?;
    let n = cfg.n;
    let pairs = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
    let rows: Vec<Vec<String>> = pairs
        .map(|(i, j)| {
            let r = spinlat::geometry::distance(cfg.positions[i], cfg.positions[j]);
            vec![i.to_string(), j.to_string(), num(r), num(cm.values[[i, j]])]
        })
        .collect();
    run.csv("couplings.csv", &["i", "j", "r", "J"], rows)?;
    let st = coupling_stats(&cm, &log_bins(a.lo, a.hi, a.bins));
    run.csv(
        "site_stats.csv",
        &["site", "S1", "S2", "M"],
        (0..n).map(|i| vec![i.to_string(), num(st.s1[i]), num(st.s2[i]), num(st.m[i])]),
    )?;
    let h = &st.histogram;
    run.csv(
        "histogram.csv",
        &["bin_lo", "bin_hi", "count"],
        (0..h.counts.len()).map(|k| vec![num(h.edges[k]), num(h.edges[k + 1]), h.counts[k].to_string()]),
    )?;
    run.residual("jmax_bath", st.jmax_bath);
    run.residual("pairs_below_histogram", h.below as f64);
    run.residual("pairs_above_histogram", h.above as f64);
    Ok(())
}

#[derive(Args, Serialize)]
struct SpectrumArgs {
    #[command(flatten)]
    network: NetworkArgs,
    #[arg(long)]
    gamma: f64,
}

fn spectrum(a: &SpectrumArgs, run: &mut Run) -> CliResult<()> {
    let net = a.network.load(run)?;
    let l = build_uniform(&net.h, a.gamma, None)?;
    let s = decompose(&l, &DecomposeOptions { allow_multiple_zero_modes: true })?;
    let mut ev: Vec<_> = s.eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| y.re.total_cmp(&x.re).then(x.im.total_cmp(&y.im)));
    run.csv("spectrum.csv", &["k", "re", "im"], ev.iter().enumerate().map(|(k, v)| vec![k.to_string(), num(v.re), num(v.im)]))?;
    let gap = ev.iter().filter(|v| v.norm() > s.zero_tolerance).map(|v| -v.re).fold(f64::INFINITY, f64::min);
    run.residual("gap", gap);
    run.residual("zero_modes", s.zero_mode_count as f64);
    run.residual("eigen_residual", s.residual);
    run.residual("biorthogonality_error", s.biorthogonality_error);
    run.residual("conjugate_pairing_error", s.conjugate_pairing_error());
    Ok(())
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum MethodArg {
    Spectral,
    Rk4,
}

#[derive(Args, Serialize)]
struct EvolveArgs {
    #[command(flatten)]
    network: NetworkArgs,
    #[arg(long)]
    gamma: f64,
    /// Initially excited site.
    #[arg(long, default_value_t = 0)]
    site: usize,
    #[arg(long, default_value_t = 1e-2)]
    t0: f64,
    #[arg(long, default_value_t = 1e8)]
    t1: f64,
    /// Log-spaced sample times (t = 0 is always included).
    #[arg(long, default_value_t = 400)]
    points: usize,
    #[arg(long, value_enum, default_value = "spectral")]
    method: MethodArg,
}

fn evolve_cmd(a: &EvolveArgs, run: &mut Run) -> CliResult<()> {
    let net = a.network.load(run)?;
    if !(a.t0 > 0.0 && a.t1 > a.t0 && a.points >= 2) {
        return Err(CliError::Usage("need 0 < t0 < t1 and at least two points".into()));
    }
    let n = net.h.n();
    if a.site >= n {
        return Err(CliError::Input(format!("site {} outside 0..{n}", a.site)));
    }
    let l = build_uniform(&net.h, a.gamma, None)?;
    let mut times = vec![0.0];
    times.extend(log_times(a.t0, a.t1, a.points));
    let method = match a.method {
        MethodArg::Spectral => Method::Spectral,
        MethodArg::Rk4 => Method::Rk4,
    };
    let opts = EvolveOptions { method, ..Default::default() };
    let tr = evolve(&l, &DensityMatrix::pure_site(n, a.site), &times, &opts)?;
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((0..n).map(|j| format!("P{j}")));
    header.push("purity".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = tr.times.iter().enumerate().map(|(k, &t)| {
        let mut r = vec![num(t)];
        r.extend(tr.populations[k].iter().map(|&p| num(p)));
        r.push(num(tr.purity[k]));
        r
    });
    run.csv("trajectory.csv", &header, rows)?;
    run.residual("trace_drift", spinlat::dynamics::trace_drift(&tr));
    run.residual("used_rk4", (tr.method == Method::Rk4) as u8 as f64);
    Ok(())
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum RouteArg {
    Deflated,
    Spectral,
    Eigenbasis,
}

#[derive(Args, Serialize)]
struct TransferArgs {
    #[command(flatten)]
    network: NetworkArgs,
    #[arg(long)]
    gamma: f64,
    #[arg(long, value_enum, default_value = "deflated")]
    route: RouteArg,
    /// Also compute the mean first-passage time into an absorbing trap here.
    #[arg(long)]
    trap_site: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    trap_rate: f64,
    /// Preparation site for the MFPT.
    #[arg(long, default_value_t = 0)]
    site: usize,
}

fn transfer(a: &TransferArgs, run: &mut Run) -> CliResult<()> {
    let net = a.network.load(run)?;
    let n = net.h.n();
    let t = match a.route {
        RouteArg::Deflated => transfer_matrix(&build_uniform(&net.h, a.gamma, None)?)?,
        RouteArg::Spectral => {
            let l = build_uniform(&net.h, a.gamma, None)?;
            transfer_matrix_spectral(&decompose(&l, &DecomposeOptions::default())?, Some(a.gamma))?
        }
        RouteArg::Eigenbasis => DephasingResolvent::new(&net.h)?.transfer_matrix(a.gamma)?,
    };
    let header: Vec<String> = (0..n).map(|j| format!("T{j}")).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    run.csv("transfer.csv", &header, t.values.rows().into_iter().map(|r| r.iter().map(|&v| num(v)).collect()))?;
    run.residual("max_row_sum", t.max_row_sum());
    run.residual("imag_residue", t.imag_residue);
    if let Some(rc) = t.rcond {
        run.residual("rcond", rc);
    }
    if let Some(sink) = a.trap_site {
        if sink >= n || a.site >= n {
            return Err(CliError::Input(format!("trap or preparation site outside 0..{n}")));
        }
        let l = build_liouvillian(&net.h, &vec![a.gamma; n], Some(Loss::Absorbing { sink, rate: a.trap_rate }))?;
        let m = mfpt_with_trap(&l, &DensityMatrix::pure_site(n, a.site))?;
        run.json("mfpt.json", &m)?;
    }
    Ok(())
}

#[derive(Args, Serialize)]
struct SurvivalArgs {
    #[command(flatten)]
    network: NetworkArgs,
    /// Γ value or log grid lo:hi:count.
    #[arg(long, default_value = "1e-7:10:41")]
    gamma: String,
    /// Restrict the output to one site.
    #[arg(long)]
    site: Option<usize>,
}

fn survival(a: &SurvivalArgs, run: &mut Run) -> CliResult<()> {
    let net = a.network.load(run)?;
    let gammas = parse_grid(&a.gamma)?;
    let n = net.h.n();
    let sites: Vec<usize> = match a.site {
        Some(s) if s >= n => return Err(CliError::Input(format!("site {s} outside 0..{n}"))),
        Some(s) => vec![s],
        None => (0..n).collect(),
    };
    let table = survival_table(&net.h, &gammas)?;
    let rows = sites.iter().flat_map(|&s| {
        let table = &table;
        gammas.iter().enumerate().map(move |(g, &gamma)| vec![s.to_string(), num(gamma), num(table[g][s]), num(1.0 / table[g][s])])
    });
    run.csv("survival.csv", &["site", "gamma", "t_ii", "inv_t_ii"], rows.collect::<Vec<_>>())?;
    let minima = sites.iter().map(|&s| {
        let curve: Vec<f64> = table.iter().map(|row| row[s]).collect();
        let (g, t) = log_parabolic_minimum(&gammas, &curve);
        vec![s.to_string(), num(g), num(t)]
    });
    run.csv("survival_minima.csv", &["site", "gamma_star", "t_min"], minima.collect::<Vec<_>>())?;
    Ok(())
}

#[derive(Args, Serialize)]
struct NessArgs {
    #[command(flatten)]
    network: NetworkArgs,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    gamma_l: f64,
    #[arg(long)]
    inject: Option<usize>,
    #[arg(long)]
    extract: Option<usize>,
}

#[derive(Serialize)]
struct NessSummary {
    eta: f64,
    analytic_eta: Option<f64>,
    relative_error: Option<f64>,
    inject: usize,
    extract: usize,
    populations: Vec<f64>,
    residual: f64,
    pinned_row_residual: f64,
    rcond: f64,
    kirchhoff_error: f64,
    extract_balance_error: f64,
}

fn currents_csv(r: &NessResult, run: &mut Run) -> CliResult<()> {
    let n = r.currents.nrows();
    let rows = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).map(|(a, b)| vec![a.to_string(), b.to_string(), num(r.currents[[a, b]])]);
    run.csv("currents.csv", &["from", "to", "current"], rows.collect::<Vec<_>>())?;
    Ok(())
}

fn ness(a: &NessArgs, run: &mut Run) -> CliResult<()> {
    let net = a.network.load(run)?;
    let (inject, extract) = net.terminals(a.inject, a.extract)?;
    let r = solve_ness(&NessProblem::uniform(&net.h, a.gamma, inject, extract, a.gamma_l)?)?;
    let analytic = match (net.three_site, inject, extract) {
        (Some((j, eps)), 0, 2) => Some(analytic_eta(&MinimalModelParams { j, eps, gamma: a.gamma, gamma_l: Some(a.gamma_l) })?),
        _ => None,
    };
    let summary = NessSummary {
        eta: r.eta,
        analytic_eta: analytic,
        relative_error: analytic.map(|w| (r.eta / w - 1.0).abs()),
        inject,
        extract,
        populations: (0..net.h.n()).map(|k| r.rho.matrix[[k, k]].re).collect(),
        residual: r.residual,
        pinned_row_residual: r.pinned_row_residual,
        rcond: r.rcond,
        kirchhoff_error: r.kirchhoff_error,
        extract_balance_error: r.extract_balance_error,
    };
    run.json("ness.json", &summary)?;
    currents_csv(&r, run)?;
    run.residual("residual", r.residual);
    run.residual("kirchhoff_relative", r.kirchhoff_error / r.eta);
    println!("eta = {}", num(r.eta));
    Ok(())
}

#[derive(Args, Serialize)]
struct FluxSweepArgs {
    #[command(flatten)]
    network: NetworkArgs,
    #[arg(long, default_value = "1e-7:1:36")]
    gamma: String,
    /// Extraction rates, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1e-4,1e-5")]
    gamma_l: Vec<f64>,
    #[arg(long)]
    inject: Option<usize>,
    #[arg(long)]
    extract: Option<usize>,
}

fn flux_sweep_cmd(a: &FluxSweepArgs, run: &mut Run) -> CliResult<()> {
    let net = a.network.load(run)?;
    let (inject, extract) = net.terminals(a.inject, a.extract)?;
    let gammas = parse_grid(&a.gamma)?;
    let s = flux_sweep(&net.h, inject, extract, &gammas, &a.gamma_l)?;
    let rows = s.gamma_ls.iter().enumerate().flat_map(|(l, &gl)| {
        let s = &s;
        s.gammas.iter().enumerate().map(move |(g, &gamma)| vec![num(gl), num(gamma), num(s.eta[l][g])])
    });
    run.csv("flux.csv", &["gamma_l", "gamma", "eta"], rows.collect::<Vec<_>>())?;
    let peaks = s.gamma_ls.iter().zip(&s.peaks).flat_map(|(&gl, ps)| {
        ps.iter().map(move |p| vec![num(gl), num(p.gamma), num(p.gamma_refined), num(p.eta), num(p.prominence)])
    });
    run.csv("peaks.csv", &["gamma_l", "gamma", "gamma_refined", "eta", "prominence"], peaks.collect::<Vec<_>>())?;
    run.residual("max_relative_kirchhoff", s.max_relative_kirchhoff);
    Ok(())
}

#[derive(Args, Serialize)]
struct PathwayArgs {
    #[command(flatten)]
    network: NetworkArgs,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    gamma_l: f64,
    #[arg(long)]
    inject: Option<usize>,
    #[arg(long)]
    extract: Option<usize>,
    /// Keep edges carrying at least this fraction of the largest current.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

fn pathway(a: &PathwayArgs, run: &mut Run) -> CliResult<()> {
    let net = a.network.load(run)?;
    let (inject, extract) = net.terminals(a.inject, a.extract)?;
    let r = solve_ness(&NessProblem::uniform(&net.h, a.gamma, inject, extract, a.gamma_l)?)?;
    let p = dominant_pathway(&r, a.threshold);
    run.json("pathway.json", &p)?;
    currents_csv(&r, run)?;
    run.residual("eta", r.eta);
    if let Some(chain) = &p.chain {
        println!("{}", chain.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" -> "));
    }
    Ok(())
}

#[derive(Args, Serialize)]
struct Table1Args {
    /// Also propagate each case and report the simulated equilibration time.
    #[arg(long)]
    simulate: bool,
}

fn table1_cmd(a: &Table1Args, run: &mut Run) -> CliResult<()> {
    let mut rows = Vec::new();
    for r in table1() {
        let mut row = vec![
            format!("{:?}", r.regime).to_lowercase(),
            r.connectivity.label().to_string(),
            num(r.j),
            num(r.eps),
            num(r.gamma),
            r.formula.to_string(),
            num(r.timescale),
            num(r.quoted),
        ];
        if a.simulate {
            row.push(num(simulated_transfer_time(&MinimalModelParams::new(r.j, r.eps, r.gamma), r.connectivity)?));
        }
        rows.push(row);
    }
    let mut header = vec!["regime", "connectivity", "J", "eps", "Gamma", "formula", "timescale", "quoted"];
    if a.simulate {
        header.push("simulated");
    }
    run.csv("table1.csv", &header, rows)?;
    Ok(())
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ModeArg {
    Gateway,
    FixedDensity,
    FixedRadius,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ProfileArg {
    Desk,
    Full,
}

#[derive(Args, Serialize)]
struct CampaignArgs {
    /// Campaign spec JSON; otherwise a preset from --mode and --profile.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum, default_value = "desk")]
    profile: ProfileArg,
    #[arg(long)]
    seed: Option<u64>,
    /// Replace the Γ grid (value or lo:hi:count).
    #[arg(long)]
    gamma: Option<String>,
    /// Replace the realization count per size.
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    bootstrap_resamples: Option<usize>,
}

fn est_cells(e: &Estimate) -> [String; 3] {
    [num(e.value), num(e.lo), num(e.hi)]
}

fn resolve_spec(a: &CampaignArgs, run: &mut Run) -> CliResult<CampaignSpec> {
    let mut spec = match (&a.config, a.mode) {
        (Some(path), None) => {
            run.input(path);
            let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<CampaignSpec>(&text)?
        }
        (None, Some(m)) => {
            let mode = match m {
                ModeArg::Gateway => CampaignMode::Gateway,
                ModeArg::FixedDensity => CampaignMode::FixedDensity,
                ModeArg::FixedRadius => CampaignMode::FixedRadius,
            };
            let profile = match a.profile {
                ProfileArg::Desk => Profile::Desk,
                ProfileArg::Full => Profile::Full,
            };
            CampaignSpec::preset(mode, profile, 0)
        }
        _ => return Err(CliError::Usage("give exactly one of --config and --mode".into())),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(g) = &a.gamma {
        spec.gammas = GammaGrid::new(parse_grid(g)?).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(r) = a.realizations {
        spec.realizations = Some(r);
    }
    if let Some(b) = a.bootstrap_resamples {
        spec.bootstrap_resamples = b;
    }
    spec.validate()?;
    Ok(spec)
}

#[derive(Serialize)]
struct GatewayFitsOut<'a> {
    eps_link: &'a Estimate,
    eps_bath: &'a Estimate,
    eps_ratio: f64,
    t_min_slope_scale: f64,
    large_j: &'a [bool],
    fits: &'a spinlat::ensemble::campaign::GatewayFits,
    exclusions: &'a [spinlat::ensemble::campaign::Exclusion],
}

#[derive(Serialize)]
struct ScalingFitsOut<'a> {
    fits: &'a spinlat::ensemble::campaign::ScalingFits,
    local_invariance: bool,
    jmax_bath_monotone: bool,
    gamma_star_monotone: bool,
    t_min_saturates: bool,
    exclusions: &'a [spinlat::ensemble::campaign::Exclusion],
}

fn record_fit(run: &mut Run, name: &str, f: &Option<FitResult>) {
    if let Some(f) = f {
        run.residual(&format!("{name}_residual"), f.residual);
    }
}

fn campaign(a: &CampaignArgs, run: &mut Run) -> CliResult<()> {
    let spec = resolve_spec(a, run)?;
    run.seed = Some(spec.seed);
    run.json("spec.json", &spec)?;
    let record_row = |r: spinlat::ensemble::EnsembleRecord| {
        vec![
            r.mode.label().to_string(),
            r.n.to_string(),
            r.j.map(num).unwrap_or_default(),
            num(r.gamma),
            r.realization.to_string(),
            r.site.to_string(),
            num(r.t_ii),
        ]
    };
    let header = ["mode", "N", "J", "Gamma", "realization", "site", "T_ii"];
    if spec.mode == CampaignMode::Gateway {
        let r = run_gateway_campaign(&spec)?;
        run.csv("records.csv", &header, r.records().map(record_row))?;
        let rows = r.j_values.iter().enumerate().flat_map(|(j, &jv)| {
            let r = &r;
            r.gammas.iter().enumerate().map(move |(g, &gv)| {
                let mut row = vec![num(jv), num(gv)];
                row.extend(est_cells(&r.median[j][g]));
                row
            })
        });
        run.csv("summary.csv", &["J", "Gamma", "median", "lo", "hi"], rows.collect::<Vec<_>>())?;
        let derived = r.j_values.iter().enumerate().map(|(j, &jv)| {
            let mut row = vec![num(jv), r.large_j[j].to_string()];
            row.extend(est_cells(&r.gamma_star[j]));
            row.extend(est_cells(&r.t_min[j]));
            row.extend(est_cells(&r.t_fixed[j]));
            row
        });
        let dh = ["J", "large_j", "gamma_star", "gamma_star_lo", "gamma_star_hi", "t_min", "t_min_lo", "t_min_hi", "t_fixed", "t_fixed_lo", "t_fixed_hi"];
        run.csv("derived.csv", &dh, derived.collect::<Vec<_>>())?;
        run.json(
            "fits.json",
            &GatewayFitsOut {
                eps_link: &r.eps_link,
                eps_bath: &r.eps_bath,
                eps_ratio: r.eps_ratio(),
                t_min_slope_scale: r.t_min_slope_scale(),
                large_j: &r.large_j,
                fits: &r.fits,
                exclusions: &r.exclusions,
            },
        )?;
        run.residual("exclusions", r.exclusions.len() as f64);
        record_fit(run, "t_fixed_power", &r.fits.t_fixed_power);
        record_fit(run, "gamma_star_linear", &r.fits.gamma_star_linear);
        record_fit(run, "t_min_power", &r.fits.t_min_power);
    } else {
        let r = run_scaling_campaign(&spec)?;
        run.csv("records.csv", &header, r.records().map(record_row))?;
        let rows = r.sizes.iter().flat_map(|s| {
            r.gammas.iter().zip(&s.median).map(move |(&g, e)| {
                let mut row = vec![s.n.to_string(), num(g)];
                row.extend(est_cells(e));
                row
            })
        });
        run.csv("summary.csv", &["N", "Gamma", "median", "lo", "hi"], rows.collect::<Vec<_>>())?;
        let sizes = r.sizes.iter().map(|s| {
            let mut row = vec![s.n.to_string(), num(s.radius), s.realizations.to_string(), s.sites.to_string()];
            row.extend(est_cells(&s.gamma_star));
            row.extend(est_cells(&s.t_min));
            row.extend([num(s.jmax_bath_median), num(s.max_coupling_ks), num(s.max_coupling_ks_critical)]);
            row
        });
        let sh = [
            "N", "radius", "realizations", "sites", "gamma_star", "gamma_star_lo", "gamma_star_hi", "t_min", "t_min_lo", "t_min_hi",
            "jmax_bath_median", "m_ks", "m_ks_critical",
        ];
        run.csv("sizes.csv", &sh, sizes.collect::<Vec<_>>())?;
        run.json(
            "fits.json",
            &ScalingFitsOut {
                fits: &r.fits,
                local_invariance: r.local_invariance,
                jmax_bath_monotone: r.jmax_bath_monotone,
                gamma_star_monotone: r.gamma_star_monotone,
                t_min_saturates: r.t_min_saturates,
                exclusions: &r.exclusions,
            },
        )?;
        run.residual("exclusions", r.exclusions.len() as f64);
        record_fit(run, "strong_power", &r.fits.strong_power);
        record_fit(run, "weak_power", &r.fits.weak_power);
    }
    Ok(())
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum PlotKind {
    Line,
    Loglog,
    Heatmap,
}

#[derive(Args, Serialize)]
struct PlotArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "line")]
    kind: PlotKind,
    /// x column (default: the first column, or the row index for a single column).
    #[arg(long)]
    x: Option<String>,
    /// y columns, comma separated (default: all others).
    #[arg(long, value_delimiter = ',')]
    y: Vec<String>,
    #[arg(long)]
    logx: bool,
    #[arg(long)]
    logy: bool,
    #[arg(long, default_value = "")]
    title: String,
    /// Output file name inside --out.
    #[arg(long, default_value = "plot.svg")]
    file: String,
}

fn plot_cmd(a: &PlotArgs, run: &mut Run) -> CliResult<()> {
    run.input(&a.input);
    let t = plot::Table::read(&a.input)?;
    let svg = match a.kind {
        PlotKind::Heatmap => plot::heatmap(&t, &a.title)?,
        PlotKind::Line | PlotKind::Loglog => {
            let log = matches!(a.kind, PlotKind::Loglog);
            let o = plot::LineOptions { x: a.x.as_deref(), y: &a.y, logx: log || a.logx, logy: log || a.logy, title: &a.title };
            plot::line(&t, &o)?
        }
    };
    run.text(&a.file, &svg)?;
    Ok(())
}

fn dispatch(cmd: &Command, run: &mut Run) -> CliResult<()> {
    match cmd {
        Command::GenConfig(a) => gen_config(a, run),
        Command::Couplings(a) => couplings(a, run),
        Command::Spectrum(a) => spectrum(a, run),
        Command::Evolve(a) => evolve_cmd(a, run),
        Command::Transfer(a) => transfer(a, run),
        Command::Survival(a) => survival(a, run),
        Command::Ness(a) => ness(a, run),
        Command::FluxSweep(a) => flux_sweep_cmd(a, run),
        Command::Pathway(a) => pathway(a, run),
        Command::Table1(a) => table1_cmd(a, run),
        Command::Campaign(a) => campaign(a, run),
        Command::Plot(a) => plot_cmd(a, run),
    }
}

fn main() {
    let cli = Cli::parse();
    let parameters = serde_json::to_value(&cli).expect("arguments serialize");
    let mut run = Run::new(cli.command.name(), &cli.out, parameters);
    let outcome = match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be positive".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string())),
        None => Ok(()),
    }
    .and_then(|_| dispatch(&cli.command, &mut run));
    if let Err(e) = &outcome {
        eprintln!("{e}");
    }
    std::process::exit(run.finish(&outcome));
}
