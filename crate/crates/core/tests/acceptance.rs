//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::f64::consts::TAU;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use restrictlab::arith::{divisor_count_below, dyadic_ramanujan_mass, gcd, ramanujan_sum, ArithTable};
use restrictlab::counting::{count_bruteforce, count_meet_in_middle, scaling_fit, verify_lower_bound};
use restrictlab::expsum::CoeffSequence;
use restrictlab::fit::loglog_fit;
use restrictlab::gkdv::{
    gauge_equivalence_check, make_hs_data, self_convergence, solve, wellposedness_probe, Nonlinearity, SobolevSpec,
    SolverConfig, SpectralState,
};
use restrictlab::kernel::{decompose_kernel, verify_prop1};
use restrictlab::levelset::{estimate_kp, verify_cor1, OptimizerConfig};
use restrictlab::xsb::{linear_estimate_check, lp_telescope_check, nonlinear_scaling_check, solver_samples};
use restrictlab::Result;

struct Verdict {
    ok: bool,
    detail: String,
}

fn verdict(ok: bool, detail: String) -> Result<Verdict> {
    Ok(Verdict { ok, detail })
}

fn counting_oracle() -> Result<Verdict> {
    let mut cases: Vec<(u64, u32)> = (1..=4).flat_map(|n| (1..=4).map(move |b| (n, b))).collect();
    cases.extend([(1, 5), (2, 5)]);
    let mut bad = Vec::new();
    for &(n, b) in &cases {
        let mim = count_meet_in_middle(n, b)?.value;
        let brute = count_bruteforce(n, b)?.value;
        if mim != brute {
            bad.push(format!("N={n} b={b}: {mim} vs {brute}"));
        }
    }
    verdict(bad.is_empty(), format!("{} cases, mismatches: {:?}", cases.len(), bad))
}

fn hua_scaling() -> Result<Verdict> {
    let counts = [4u64, 8, 12, 16, 24, 32, 40]
        .iter()
        .map(|&n| count_meet_in_middle(n, 5))
        .collect::<Result<Vec<_>>>()?;
    let fit = scaling_fit(&counts)?;
    let mut lower = true;
    let mut boxed = true;
    for c in &counts {
        lower &= c.value >= c.diagonal();
        boxed &= verify_lower_bound(c)?.box_bound_holds();
    }
    let ok = (5.4..=6.3).contains(&fit.slope) && lower && boxed;
    verdict(ok, format!("slope {:.4}, S >= (2N+1)^5: {lower}, S·N^4 >= c·N^10: {boxed}", fit.slope))
}

fn cubic_energy() -> Result<Verdict> {
    let counts = [8u64, 16, 32, 64, 128]
        .iter()
        .map(|&n| count_meet_in_middle(n, 3))
        .collect::<Result<Vec<_>>>()?;
    let fit = scaling_fit(&counts)?;
    verdict((2.8..=3.4).contains(&fit.slope), format!("S(N;3) slope {:.4} over N = 8..128", fit.slope))
}

fn kernel_split() -> Result<Verdict> {
    let degrees = [8u64, 16, 32];
    let mut on_curve = true;
    for &n in &degrees {
        let k = decompose_kernel(n, n * n)?;
        let d = n as i64;
        on_curve &= (-d..=d).all(|m| k.k2_coeff(m, m * m * m).norm() == 0.0);
    }
    let rep = verify_prop1(&degrees, |n| n * n)?;
    let ok = on_curve && rep.spread1 < 4.0 && rep.spread2_log < 4.0;
    verdict(
        ok,
        format!(
            "K̂2 zero on curve: {on_curve}, K1 ratio spread {:.3}, Q·max|K̂2|/log(2+N) spread {:.3}",
            rep.spread1, rep.spread2_log
        ),
    )
}

fn level_sets() -> Result<Verdict> {
    let degrees = [8usize, 16, 32];
    let mut reports = vec![("uniform".to_string(), verify_cor1(&degrees, CoeffSequence::uniform)?)];
    for seed in 0..5u64 {
        reports.push((format!("random:{seed}"), verify_cor1(&degrees, |n| CoeffSequence::random_unit(n, seed))?));
    }
    let mut ok = true;
    let mut worst_spread: f64 = 0.0;
    let mut worst_cheb: f64 = 0.0;
    for (_, r) in &reports {
        ok &= r.passes();
        worst_spread = worst_spread.max(r.spread);
        for row in &r.rows {
            worst_cheb = worst_cheb.max(row.max_chebyshev);
        }
    }
    ok &= worst_cheb <= 1.0 + 1e-6;
    verdict(ok, format!("{} sequences, max spread {worst_spread:.3}, max λ²|E_λ| {worst_cheb:.4}", reports.len()))
}

fn strichartz() -> Result<Verdict> {
    let cfg = OptimizerConfig {
        max_iter: 30,
        random_starts: 1,
        ..OptimizerConfig::default()
    };
    let mut points = Vec::new();
    let mut monotone = true;
    let mut p2_err: f64 = 0.0;
    for n in [4usize, 8, 16, 32] {
        let e = estimate_kp(n, 10.0, &cfg)?;
        monotone &= e.starts.iter().all(|s| s.is_monotone());
        points.push((n as f64, e.lower_bound));
        let e2 = estimate_kp(n, 2.0, &cfg)?;
        monotone &= e2.starts.iter().all(|s| s.is_monotone());
        p2_err = p2_err.max((e2.lower_bound - 1.0).abs());
    }
    let slope = loglog_fit(&points, 2)?.slope;
    let ok = (slope - 0.10).abs() <= 0.07 && p2_err <= 1e-8 && monotone;
    verdict(
        ok,
        format!("K_10 bounds {:?}, slope {slope:.4}, |K_2 - 1| <= {p2_err:.1e}, monotone {monotone}", points.iter().map(|p| p.1).collect::<Vec<_>>()),
    )
}

fn small(m: usize, seed: u64, amplitude: f64) -> Result<SpectralState> {
    make_hs_data(m, SobolevSpec { s: 1.0, seed, amplitude })
}

fn solver() -> Result<Verdict> {
    let phi = small(256, 1, 1.0)?;
    let traj = solve(&phi, &SolverConfig::new(Nonlinearity::Zero, 1e-3, 0.1))?;
    let last = traj.last();
    let airy = (-127i64..=128)
        .map(|n| (last.coeff(n) - phi.coeff(n) * num_complex::Complex64::from_polar(1.0, (n as f64).powi(3) * 0.1)).norm())
        .fold(0.0, f64::max)
        / phi.hs_norm(0.0);
    let order = self_convergence(&small(64, 5, 0.3)?, &SolverConfig::new(Nonlinearity::Power(1), 5e-4, 0.1))?.order;
    let mut mass: f64 = traj.conservation.mass_drift;
    let mut momentum: f64 = 0.0;
    for k in 1..=3u32 {
        let t = solve(&small(256, k as u64, 0.1)?, &SolverConfig::new(Nonlinearity::Power(k), 1e-5, 0.1))?;
        mass = mass.max(t.conservation.mass_drift);
        momentum = momentum.max(t.conservation.momentum_drift);
    }
    let ok = airy <= 1e-9 && (3.5..=4.5).contains(&order) && mass <= 1e-10 && momentum <= 1e-8;
    verdict(ok, format!("Airy rel err {airy:.1e}, order {order:.3}, mass drift {mass:.1e}, momentum drift {momentum:.1e}"))
}

fn gauge() -> Result<Verdict> {
    let phi = small(256, 9, 0.1)?;
    let mut disc: f64 = 0.0;
    let mut trip: f64 = 0.0;
    for k in [2u32, 3] {
        let r = gauge_equivalence_check(&phi, &SolverConfig::new(Nonlinearity::Power(k), 1e-4, 0.05))?;
        disc = disc.max(r.discrepancy);
        trip = trip.max(r.round_trip);
    }
    verdict(disc < 1e-6 && trip < 1e-9, format!("discrepancy {disc:.1e}, round trip {trip:.1e}"))
}

fn probes() -> Result<Verdict> {
    let spec = SobolevSpec { s: 0.6, seed: 3, amplitude: 0.1 };
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, nl) in [("u^3", Nonlinearity::Power(3)), ("sin u", Nonlinearity::Sin)] {
        let r = wellposedness_probe(128, spec, &SolverConfig::new(nl, 1e-4, 0.1), 1.0, &[1e-2, 1e-3, 1e-4])?;
        ok &= r.passes();
        let worst = r.rows.iter().map(|x| x.ratio).fold(0.0, f64::max);
        parts.push(format!("{name}: max ratio {worst:.4}, growth {:.4}, window {:.3}", r.growth, r.window));
    }
    verdict(ok, parts.join("; "))
}

fn bourgain() -> Result<Verdict> {
    let deltas = [0.2, 0.1, 0.05, 0.025];
    let phi = make_hs_data(32, SobolevSpec { s: 0.6, seed: 7, amplitude: 0.2 })?;
    let lin = linear_estimate_check(&phi, 0.6, &deltas)?;
    let cubic = nonlinear_scaling_check(&phi, &Nonlinearity::Power(3), 0.6, &deltas)?;
    let sine = nonlinear_scaling_check(&phi, &Nonlinearity::Sin, 0.6, &deltas)?;
    let field = solver_samples(&phi, &Nonlinearity::Power(3), 1.6, 512, 0.4)?;
    let defect = lp_telescope_check(&field, &Nonlinearity::Power(3), 1, 16)?
        .max(lp_telescope_check(&field, &Nonlinearity::Sin, 1, 16)?);
    let ok = lin.passes() && cubic.passes() && sine.passes() && defect <= 1e-10;
    verdict(
        ok,
        format!(
            "linear drift {:.3}, θ(u^3) {:.3}, θ(sin) {:.3}, telescoping defect {defect:.1e}",
            lin.drift,
            cubic.theta().unwrap_or(f64::NAN),
            sine.theta().unwrap_or(f64::NAN)
        ),
    )
}

fn ramanujan() -> Result<Verdict> {
    let mut worst: f64 = 0.0;
    for q in 1..=200u64 {
        let units: Vec<u64> = (1..=q).filter(|&a| gcd(a, q) == 1).collect();
        for n in -500i64..=500 {
            let direct: f64 = units.iter().map(|&a| (TAU * ((a as i64 * n).rem_euclid(q as i64)) as f64 / q as f64).cos()).sum();
            worst = worst.max((direct - ramanujan_sum(q, n) as f64).abs());
        }
    }
    let table = ArithTable::new(256);
    let mut violations = 0usize;
    let mut tightest: f64 = 0.0;
    for scale in (0..=7).map(|e| 1u64 << e) {
        let bound_factor = (2 * scale) as f64 * ((4 * scale) as f64).ln();
        for n in (1i64..=10_000).flat_map(|n| [n, -n]) {
            let (signed, absolute) = dyadic_ramanujan_mass(&table, n, scale);
            let bound = divisor_count_below(n, 2 * scale)? as f64 * bound_factor;
            if signed as f64 > bound || absolute as f64 > bound {
                violations += 1;
            }
            tightest = tightest.max(absolute as f64 / bound);
        }
    }
    verdict(
        worst < 1e-6 && violations == 0,
        format!("max |direct - formula| {worst:.1e}; dyadic bound violations {violations}, max Σ|c_q| / bound {tightest:.3}"),
    )
}

type Check = fn() -> Result<Verdict>;

fn main() -> ExitCode {
    let criteria: [(&str, Check, u64); 11] = [
        ("counting oracle equivalence", counting_oracle, 60),
        ("S(N;5) scaling and lower bounds", hua_scaling, 900),
        ("S(N;3) scaling", cubic_energy, 120),
        ("kernel decomposition", kernel_split, 300),
        ("gated level sets", level_sets, 600),
        ("Strichartz exponents", strichartz, 1200),
        ("solver correctness", solver, 300),
        ("gauge equivalence", gauge, 300),
        ("well-posedness probes", probes, 900),
        ("Bourgain-space estimates", bourgain, 1200),
        ("Ramanujan sums and divisor bound", ramanujan, 120),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(*budget);
        let (ok, detail) = match result {
            Ok(v) => (v.ok && in_time, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += !ok as usize;
        println!(
            "{} [{:>2}] {name} ({:.1} s of {budget} s): {detail}",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            elapsed.as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
