//! Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. Thresholds are the stated ones; nothing here is tuned.

use std::cell::Cell;
use std::time::{Duration, Instant};

use ndarray::Array2;
use spinlat::dynamics::{evolve, log_times, DensityMatrix, EvolveOptions};
use spinlat::ensemble::{fit_model, run_gateway_campaign, run_scaling_campaign, CampaignSpec, FitModel, Profile};
use spinlat::liouvillian::{build_liouvillian, build_uniform, decompose, DecomposeOptions, Hamiltonian, LiouvillianOperator};
use spinlat::measures::{transfer_matrix, transfer_matrix_spectral};
use spinlat::ness::{flux_sweep, solve_ness, NessProblem, NessResult};
use spinlat::reference::{analytic_eta, simulated_transfer_time, table1, MinimalModelParams};
use spinlat::rng::Stream;
use spinlat::synth::{config_a, config_b, SynthGeometry};
use spinlat::{geometry, liouvillian, C64};

/// Campaign seed, fixed before any campaign was run.
const SEED: u64 = 20240601;

thread_local! {
    /// Worst continuity violation relative to η over every NESS solve.
    static WORST_CONTINUITY: Cell<f64> = const { Cell::new(0.0) };
    static NESS_SOLVES: Cell<usize> = const { Cell::new(0) };
}

fn record_continuity(rel: f64) {
    WORST_CONTINUITY.with(|w| w.set(w.get().max(rel)));
    NESS_SOLVES.with(|c| c.set(c.get() + 1));
}

fn ness(h: &Hamiltonian, gamma: f64, inject: usize, extract: usize, gamma_l: f64) -> NessResult {
    let r = solve_ness(&NessProblem::uniform(h, gamma, inject, extract, gamma_l).unwrap()).unwrap();
    record_continuity(r.kirchhoff_error.max(r.extract_balance_error) / r.eta);
    r
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn part(ok: bool, label: &str, value: String) -> (bool, String) {
    (ok, format!("{label} {value} [{}]", if ok { "ok" } else { "FAIL" }))
}

fn combine(parts: Vec<(bool, String)>, elapsed: Duration, limit: Duration) -> Outcome {
    let mut pass = parts.iter().all(|p| p.0);
    let mut detail: Vec<String> = parts.into_iter().map(|p| p.1).collect();
    let timely = elapsed <= limit;
    pass &= timely;
    detail.push(format!("time {:.1}s/{}s{}", elapsed.as_secs_f64(), limit.as_secs(), if timely { "" } else { " [FAIL]" }));
    Outcome { pass, detail: detail.join("; ") }
}

fn random_network(n: usize, seed: u64, stream: u64) -> (Hamiltonian, Vec<f64>) {
    let mut s = Stream::new(seed, stream);
    let mut m = Array2::zeros((n, n));
    for a in 0..n {
        m[[a, a]] = 1e-2 * (s.uniform() - 0.5);
        for b in 0..a {
            let v = 10f64.powf(-3.0 * s.uniform());
            m[[a, b]] = v;
            m[[b, a]] = v;
        }
    }
    let gammas = (0..n).map(|_| 10f64.powf(-3.0 * s.uniform())).collect();
    (Hamiltonian::from_matrix(m).unwrap(), gammas)
}

fn c1_three_site_oracle() -> Outcome {
    let t = Instant::now();
    let mut s = Stream::new(SEED, 1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mut draw = |lo: f64, hi: f64| 10f64.powf(lo + (hi - lo) * s.uniform());
        let (j, e, g, gl) = (draw(-3.0, -0.5), draw(-5.0, -2.0), draw(-7.0, 0.0), draw(-7.0, -2.0));
        let r = ness(&Hamiltonian::three_site(j, e), g, 0, 2, gl);
        let want = analytic_eta(&MinimalModelParams { j, eps: e, gamma: g, gamma_l: Some(gl) }).unwrap();
        worst = worst.max((r.eta / want - 1.0).abs());
    }
    combine(vec![part(worst <= 1e-8, "max rel err over 100 sets", format!("{worst:.2e}"))], t.elapsed(), Duration::from_secs(5))
}

fn c2_flux_asymptotics() -> Outcome {
    let t = Instant::now();
    let h = Hamiltonian::three_site(1e-2, 1e-4);
    let weak = ness(&h, 1e-5, 0, 2, 1e-6).eta / 1e-9;
    let a = part((0.5..=2.0).contains(&weak), "weak η/(Γε²/J²)", format!("{weak:.4}"));
    // γ_l = 1e-5 keeps Γ ≥ 100·ε²/γ_l over the whole decade.
    let gammas: Vec<f64> = (0..=10).map(|k| 10f64.powf(-1.0 + 0.1 * k as f64)).collect();
    let etas: Vec<f64> = gammas.iter().map(|&g| ness(&h, g, 0, 2, 1e-5).eta).collect();
    let slope = fit_model(&gammas, &etas, FitModel::PowerLaw, None, 0, 0).unwrap().params[1].value;
    let b = part((slope + 1.0).abs() <= 0.1, "strong log-log slope over Γ∈[0.1,1]", format!("{slope:.4}"));
    combine(vec![a, b], t.elapsed(), Duration::from_secs(10))
}

fn c3_table1() -> Outcome {
    let t = Instant::now();
    let mut parts = Vec::new();
    for row in table1() {
        let mut p = MinimalModelParams::new(row.j, row.eps, row.gamma);
        p.gamma_l = None;
        let sim = simulated_transfer_time(&p, row.connectivity).unwrap();
        let ratio = sim / row.quoted;
        parts.push(part(
            (0.1..=10.0).contains(&ratio),
            &format!("{:?}/{}", row.regime, row.connectivity.label()),
            format!("{sim:.2e} vs {:.0e}", row.quoted),
        ));
    }
    combine(parts, t.elapsed(), Duration::from_secs(60))
}

/// Trapezoid quadrature of `∫(ρ_jj − 1/N)dt` from `site`, on a log grid out
/// to 60 slowest relaxation times.
fn quadrature_row(l: &LiouvillianOperator, site: usize) -> Vec<f64> {
    let n = l.n;
    let s = decompose(l, &DecomposeOptions::default()).unwrap();
    let slowest = s.eigenvalues.iter().filter(|v| v.norm() > s.zero_tolerance).map(|v| -v.re).fold(f64::INFINITY, f64::min);
    let mut times = vec![0.0];
    times.extend(log_times(1e-4, 60.0 / slowest, 24000));
    let tr = evolve(l, &DensityMatrix::pure_site(n, site), &times, &EvolveOptions::default()).unwrap();
    (0..n)
        .map(|j| {
            (1..times.len())
                .map(|k| 0.5 * (tr.populations[k - 1][j] + tr.populations[k][j] - 2.0 / n as f64) * (times[k] - times[k - 1]))
                .sum()
        })
        .collect()
}

fn c4_transfer_suite() -> Outcome {
    let t = Instant::now();
    let (mut rows, mut imag, mut routes, mut quad) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for k in 0..45u64 {
        let n = 2 + (k as usize % 9);
        let (h, gammas) = random_network(n, SEED, 100 + k);
        let l = build_liouvillian(&h, &gammas, None).unwrap();
        let a = transfer_matrix(&l).unwrap();
        let b = transfer_matrix_spectral(&decompose(&l, &DecomposeOptions::default()).unwrap(), None).unwrap();
        let scale = a.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        rows = rows.max(a.max_row_sum().max(b.max_row_sum()) / scale);
        imag = imag.max(b.imag_residue);
        for (x, y) in a.values.iter().zip(b.values.iter()) {
            routes = routes.max((x - y).abs() / scale);
        }
        if n <= 4 && k < 12 {
            let q = quadrature_row(&l, 0);
            for j in 0..n {
                quad = quad.max((q[j] - a.values[[0, j]]).abs() / a.values[[0, 0]].abs());
            }
        }
    }
    let two = transfer_matrix(&build_uniform(&Hamiltonian::homogeneous(2, 1.0), 1.0, None).unwrap()).unwrap();
    let closed = (two.values[[0, 0]] / 0.125 - 1.0).abs();
    combine(
        vec![
            part(rows <= 1e-8, "row sums", format!("{rows:.1e}")),
            part(imag <= 1e-8, "imag residue", format!("{imag:.1e}")),
            part(routes <= 1e-8, "spectral vs deflated", format!("{routes:.1e}")),
            part(quad <= 1e-6, "time quadrature (N≤4)", format!("{quad:.1e}")),
            part(closed <= 1e-10, "two-site Γ/(8J²)", format!("{closed:.1e}")),
        ],
        t.elapsed(),
        Duration::from_secs(30),
    )
}

fn random_state(n: usize, s: &mut Stream) -> Array2<C64> {
    let mut x = Array2::from_shape_fn((n, n), |_| C64::new(s.uniform() - 0.5, s.uniform() - 0.5));
    x = &x + &x.t().mapv(|z| z.conj());
    let tr: C64 = (0..n).map(|k| x[[k, k]]).sum();
    x.mapv(|z| z / tr)
}

fn c5_liouvillian_invariants() -> Outcome {
    let t = Instant::now();
    let mut s = Stream::new(SEED, 5);
    let (mut trace, mut herm, mut re_max, mut pairing) = (0.0f64, 0.0f64, f64::NEG_INFINITY, 0.0f64);
    let mut unique = 0;
    for k in 0..200u64 {
        let n = 2 + s.below(11);
        let (h, gammas) = random_network(n, SEED, 1000 + k);
        let l = build_liouvillian(&h, &gammas, None).unwrap();
        let norm = l.norm();
        let rho = random_state(n, &mut s);
        let out = l.apply(&rho);
        let tr: C64 = (0..n).map(|a| out[[a, a]]).sum();
        trace = trace.max(tr.norm() / norm);
        herm = herm.max((&out - &out.t().mapv(|z| z.conj())).iter().map(|z| z.norm()).fold(0.0, f64::max) / norm);
        if let Ok(spec) = decompose(&l, &DecomposeOptions::default()) {
            if spec.zero_mode_count == 1 {
                unique += 1;
            }
            re_max = re_max.max(spec.eigenvalues.iter().map(|v| v.re).fold(f64::NEG_INFINITY, f64::max) - spec.zero_tolerance);
            pairing = pairing.max(spec.conjugate_pairing_error() / norm);
        }
    }
    combine(
        vec![
            part(trace <= 1e-12, "trace", format!("{trace:.1e}")),
            part(herm <= 1e-12, "hermiticity", format!("{herm:.1e}")),
            part(re_max <= 0.0, "max Re λ − tol", format!("{re_max:.1e}")),
            part(pairing <= 1e-8, "conjugate pairing", format!("{pairing:.1e}")),
            part(unique == 200, "unique zero mode", format!("{unique}/200")),
        ],
        t.elapsed(),
        Duration::from_secs(120),
    )
}

fn c6_gateway() -> Outcome {
    let t = Instant::now();
    let r = run_gateway_campaign(&CampaignSpec::gateway(Profile::Desk, SEED)).unwrap();
    let quad = r.fits.t_fixed_power.as_ref().map_or(f64::NAN, |f| f.params[1].value);
    let slope = r.fits.gamma_star_linear.as_ref().map_or(f64::NAN, |f| f.params[0].value);
    let ratio = r.eps_ratio();
    let tmin = r.fits.t_min_power.as_ref().map_or(f64::NAN, |f| f.params[1].value);
    let q = slope / ratio;
    combine(
        vec![
            part((quad - 2.0).abs() <= 0.3, "T_ii(J) exponent at Γ=3.2e-5", format!("{quad:.3}")),
            part((0.5..=2.0).contains(&q), "Γ* slope / (ε_bath/ε_link)", format!("{slope:.3e}/{ratio:.3e} = {q:.3}")),
            part((tmin - 1.0).abs() <= 0.3, "T_min(J) exponent", format!("{tmin:.3}")),
            part(r.exclusions.is_empty(), "exclusions", format!("{}", r.exclusions.len())),
        ],
        t.elapsed(),
        Duration::from_secs(20 * 60),
    )
}

fn c7_fixed_density() -> Outcome {
    let t = Instant::now();
    let r = run_scaling_campaign(&CampaignSpec::fixed_density(Profile::Desk, SEED)).unwrap();
    let exp = |f: &Option<spinlat::ensemble::FitResult>| f.as_ref().map(|f| f.params[1]);
    let strong = exp(&r.fits.strong_power).map_or(f64::NAN, |e| e.value);
    let weak = exp(&r.fits.weak_power).map_or(f64::NAN, |e| e.value);
    let gs = exp(&r.fits.gamma_star_power);
    combine(
        vec![
            part((strong - 0.5).abs() <= 0.2, "α(Γ=0.1)", format!("{strong:.3}")),
            part(weak.abs() <= 0.2, "|α(Γ=1e-6)|", format!("{:.3}", weak.abs())),
            part(
                gs.is_some_and(|e| e.contains(0.0)),
                "Γ*(N) slope CI",
                gs.map_or("none".into(), |e| format!("{:.3} [{:.3}, {:.3}]", e.value, e.lo, e.hi)),
            ),
        ],
        t.elapsed(),
        Duration::from_secs(45 * 60),
    )
}

fn synth_peaks(g: &SynthGeometry, gammas: &[f64]) -> Vec<Vec<f64>> {
    let cm = geometry::coupling_matrix(&g.config, 1.0, None).unwrap();
    let h = liouvillian::build_hamiltonian(&g.config, &cm).unwrap();
    let sweep = flux_sweep(&h, g.inject, g.extract, gammas, &[1e-4, 1e-5]).unwrap();
    record_continuity(sweep.max_relative_kirchhoff);
    NESS_SOLVES.with(|c| c.set(c.get() + gammas.len() * 2 - 1));
    sweep.peaks.iter().map(|ps| ps.iter().map(|p| p.gamma_refined).collect()).collect()
}

fn c8_synthesized_geometries() -> Outcome {
    let t = Instant::now();
    let gammas: Vec<f64> = (0..=40).map(|k| 10f64.powf(-7.0 + 0.15 * k as f64)).collect();
    let a = synth_peaks(&config_a(0.5, SEED).unwrap(), &gammas);
    let b = synth_peaks(&config_b(0.5, SEED).unwrap(), &gammas);
    let single = a.iter().all(|p| p.len() == 1);
    let double = b.iter().all(|p| p.len() == 2 && (p[1] / p[0]).log10() >= 1.5);
    let fmt = |v: &Vec<Vec<f64>>| v.iter().map(|p| p.iter().map(|g| format!("{g:.1e}")).collect::<Vec<_>>().join(",")).collect::<Vec<_>>().join(" | ");
    combine(
        vec![part(single, "A peaks", fmt(&a)), part(double, "B peaks", fmt(&b))],
        t.elapsed(),
        Duration::from_secs(300),
    )
}

fn c9_continuity() -> Outcome {
    let t = Instant::now();
    // A few larger random networks on top of every solve made above.
    for k in 0..10u64 {
        let n = 4 + k as usize % 6;
        let (h, _) = random_network(n, SEED, 9000 + k);
        ness(&h, 10f64.powf(-1.0 - 0.5 * k as f64), 0, n - 1, 1e-4);
    }
    let worst = WORST_CONTINUITY.with(|w| w.get());
    let solves = NESS_SOLVES.with(|c| c.get());
    combine(
        vec![part(worst <= 1e-8, &format!("max continuity error / η over {solves} solves"), format!("{worst:.1e}"))],
        t.elapsed(),
        Duration::from_secs(60),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 three-site exact flux", c1_three_site_oracle),
        ("2 flux asymptotics", c2_flux_asymptotics),
        ("3 regime timescales", c3_table1),
        ("4 transfer-matrix oracles", c4_transfer_suite),
        ("5 Liouvillian invariants", c5_liouvillian_invariants),
        ("6 gateway scaling", c6_gateway),
        ("7 fixed-density scaling", c7_fixed_density),
        ("8 synthesized geometries", c8_synthesized_geometries),
        ("9 current continuity", c9_continuity),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
