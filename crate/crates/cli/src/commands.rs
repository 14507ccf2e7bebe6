use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::str::FromStr;
use std::time::Instant;

use restrictlab::counting::{
    count_bruteforce, count_meet_in_middle, verify_lower_bound, CountResult, BRUTE_FORCE_GUARD,
};
use restrictlab::expsum::{weyl_bound_report, CoeffSequence};
use restrictlab::fit::loglog_fit;
use restrictlab::gkdv::{
    gauge_equivalence_check, make_hs_data, solve, write_binary, write_text, Nonlinearity, SobolevSpec, SolverConfig,
    Variant,
};
use restrictlab::kernel::{decompose_kernel, verify_prop1, PhiFunction};
use restrictlab::levelset::{estimate_kp, verify_cor1, verify_hua, OptimizerConfig};
use restrictlab::xsb::{
    embedding_check, linear_estimate_check, lp_telescope_check, nonlinear_scaling_check, solver_samples, Embedding,
};
use restrictlab::{arith::FareySystem, LabError};

use crate::config::Config;
use crate::record::Record;
use crate::{
    Command, CountArgs, DecomposeArgs, FareyArgs, HuaArgs, LevelsetArgs, SolveArgs, StrichartzArgs, WeylArgs, XsbArgs,
};

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Usage(String),
    /// A checked property failed; the message names it.
    Assertion(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Assertion(_) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Assertion(m) => write!(f, "check failed: {m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        match e {
            LabError::InvalidArgument(_) | LabError::Resolution(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

/// Records produced before a failure, kept so they are still written.
pub struct Failure {
    pub error: CliError,
    pub records: Vec<Record>,
}

#[derive(Default)]
struct Outcome {
    records: Vec<Record>,
    failures: Vec<String>,
}

impl Outcome {
    fn push(&mut self, r: Record) {
        self.records.push(r);
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }

    fn merge(&mut self, other: Outcome) {
        self.records.extend(other.records);
        self.failures.extend(other.failures);
    }
}

/// Flag value, else config value under `[section]` or globally, else the default.
struct Params<'a> {
    cfg: &'a Config,
    section: &'static str,
}

impl Params<'_> {
    fn parse<T: FromStr>(&self, key: &str, raw: &str) -> Result<T, CliError> {
        raw.trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("config key `{key}`: cannot parse `{raw}`")))
    }

    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        match (flag, self.cfg.get(self.section, key)) {
            (Some(v), _) => Ok(v),
            (None, Some(raw)) => self.parse(key, raw),
            (None, None) => Ok(default),
        }
    }

    fn list<T: FromStr + Clone>(&self, flag: &Option<Vec<T>>, key: &str, default: &[T]) -> Result<Vec<T>, CliError> {
        let v = match (flag, self.cfg.get(self.section, key)) {
            (Some(v), _) => v.clone(),
            (None, Some(raw)) => raw.split(',').map(|x| self.parse(key, x)).collect::<Result<_, _>>()?,
            (None, None) => default.to_vec(),
        };
        if v.is_empty() {
            return Err(CliError::Usage(format!("`{key}` needs at least one value")));
        }
        Ok(v)
    }
}

fn nonlinearity(spec: &str) -> Result<Nonlinearity, CliError> {
    match spec.trim() {
        "sin" => Ok(Nonlinearity::Sin),
        "zero" => Ok(Nonlinearity::Zero),
        k => match k.parse::<u32>() {
            Ok(k) if k >= 1 => Ok(Nonlinearity::Power(k)),
            _ => Err(CliError::Usage(format!("F must be a positive integer, `sin` or `zero`, got `{k}`"))),
        },
    }
}

pub fn dispatch(cmd: &Command, cfg: &Config) -> (&'static str, Result<Vec<Record>, Failure>) {
    let started = Instant::now();
    let (stem, result) = match cmd {
        Command::Count(a) => ("count", count(a, cfg)),
        Command::Weyl(a) => ("weyl", weyl(a, cfg)),
        Command::Farey(a) => ("farey", farey(a, cfg)),
        Command::Decompose(a) => ("decompose", decompose(a, cfg)),
        Command::Levelset(a) => ("levelset", levelset(a, cfg)),
        Command::Strichartz(a) => ("strichartz", strichartz(a, cfg)),
        Command::Hua(a) => ("hua", hua(a, cfg)),
        Command::Solve(a) => ("solve", solve_cmd(a, cfg)),
        Command::Gauge(a) => ("gauge", gauge(a, cfg)),
        Command::Xsb(a) => ("xsb", xsb(a, cfg)),
        Command::All => ("all", all(cfg)),
    };
    // timing goes to stderr so that output files stay reproducible
    eprintln!("{stem}: {:.3} s", started.elapsed().as_secs_f64());
    let out = match result {
        Err(error) => Err(Failure { error, records: Vec::new() }),
        Ok(o) if o.failures.is_empty() => Ok(o.records),
        Ok(o) => Err(Failure {
            error: CliError::Assertion(o.failures.join("; ")),
            records: o.records,
        }),
    };
    (stem, out)
}

fn count_record(r: &CountResult) -> Result<Record, CliError> {
    let lb = verify_lower_bound(r)?;
    let mut rec = Record::new("count")
        .param("N", r.degree)
        .param("b", r.arity)
        .value("value", r.value)
        .value("method", r.method.tag())
        .value("diagonal", r.diagonal())
        .value("diagonal_ratio", lb.diagonal_ratio)
        .value("rho", lb.rho)
        .value("box_constant", lb.box_constant)
        .value("box_ratio", lb.box_ratio);
    if let Some(h) = lb.high_ratio {
        rec = rec.value("high_ratio", h);
    }
    Ok(rec)
}

fn count(a: &CountArgs, cfg: &Config) -> Result<Outcome, CliError> {
    let p = Params { cfg, section: "count" };
    let ns = p.list(&a.n, "N", &[1, 2, 3])?;
    let b = p.pick(a.b, "b", 2)?;
    let method = p.pick(a.method.clone(), "method", "both".to_string())?;
    if !["mim", "brute", "both"].contains(&method.as_str()) {
        return Err(CliError::Usage(format!("method must be mim, brute or both, got `{method}`")));
    }
    let mut out = Outcome::default();
    for n in ns {
        let brute_ok = (2 * n as u128 + 1).checked_pow(2 * b).is_some_and(|c| c <= BRUTE_FORCE_GUARD);
        let primary = if method == "brute" { count_bruteforce(n, b)? } else { count_meet_in_middle(n, b)? };
        let mut rec = count_record(&primary)?;
        if method == "both" && brute_ok {
            let brute = count_bruteforce(n, b)?;
            rec = rec.value("bruteforce", brute.value);
            out.check(brute.value == primary.value, || {
                format!("counting: meet-in-the-middle {} differs from brute force {} at N={n}, b={b}", primary.value, brute.value)
            });
        }
        out.check(primary.value >= primary.diagonal(), || {
            format!("counting: S({n};{b}) below the diagonal count (2N+1)^b")
        });
        out.push(rec);
    }
    Ok(out)
}

fn weyl(a: &WeylArgs, cfg: &Config) -> Result<Outcome, CliError> {
    let p = Params { cfg, section: "weyl" };
    let ns = p.list(&a.n, "N", &[64, 128, 256])?;
    let trials = p.pick(a.trials, "trials", 200)?;
    let seed = p.pick(a.seed, "seed", 0)?;
    let mut out = Outcome::default();
    for n in ns {
        let r = weyl_bound_report(n, trials, seed)?;
        let mut rec = Record::new("weyl")
            .seed(seed)
            .param("N", n)
            .param("trials", trials)
            .value("included", r.included)
            .value("max_ratio", r.max_ratio)
            .value("mean_ratio", r.mean_ratio);
        if let Some(q) = r.argmax_fraction {
            rec = rec.value("argmax_q", q.denom());
        }
        out.push(rec);
    }
    Ok(out)
}

fn farey(a: &FareyArgs, cfg: &Config) -> Result<Outcome, CliError> {
    let p = Params { cfg, section: "farey" };
    let qs = p.list(&a.q, "Q", &[4, 8, 16, 32])?;
    let mut out = Outcome::default();
    for q in qs {
        let system = FareySystem::new(q)?;
        let phi = PhiFunction::new(q)?;
        let disjoint = phi.supports_disjoint();
        out.check(disjoint, || format!("kernel_decomp: bump supports of Φ overlap at Q={q}"));
        out.push(
            Record::new("farey")
                .param("Q", q)
                .value("fractions", system.len())
                .value("phi_hat0", phi.fourier_zero())
                .value("disjoint", disjoint),
        );
    }
    Ok(out)
}

fn decompose(a: &DecomposeArgs, cfg: &Config) -> Result<Outcome, CliError> {
    let p = Params { cfg, section: "decompose" };
    let ns = p.list(&a.n, "N", &[4, 8])?;
    let mut out = Outcome::default();
    for &n in &ns {
        let k = decompose_kernel(n, n * n)?;
        let d = n as i64;
        let on_curve = (-d..=d).all(|m| k.k2_coeff(m, m * m * m).norm() == 0.0);
        out.check(on_curve, || format!("kernel_decomp: K̂2 does not vanish on the curve at N={n}"));
    }
    let rep = verify_prop1(&ns, |n| n * n)?;
    for r in &rep.rows {
        out.push(
            Record::new("decompose")
                .param("N", r.degree)
                .param("Q", r.scale)
                .value("phi_hat0", r.phi_hat0)
                .value("k1_sup", r.k1_sup)
                .value("k1_argmax", format!("{}/{}", r.k1_argmax.numer(), r.k1_argmax.denom()))
                .value("ratio1", r.ratio1)
                .value("k2_max", r.k2_max)
                .value("ratio2", r.ratio2)
                .value("ratio2_log", r.ratio2_log),
        );
    }
    if ns.len() >= 2 {
        out.check(rep.passes(), || {
            format!(
                "kernel_decomp: ratio spreads {:.3}, {:.3}, {:.3} across N exceed 4",
                rep.spread1, rep.spread2, rep.spread2_log
            )
        });
    }
    Ok(out)
}

fn levelset(a: &LevelsetArgs, cfg: &Config) -> Result<Outcome, CliError> {
    let p = Params { cfg, section: "levelset" };
    let ns = p.list(&a.n, "N", &[8, 16])?;
    let seq = p.pick(a.seq.clone(), "seq", "uniform".to_string())?;
    let seed = p.pick(a.seed, "seed", 0)?;
    let rep = match seq.as_str() {
        "uniform" => verify_cor1(&ns, CoeffSequence::uniform)?,
        "random" => verify_cor1(&ns, |n| CoeffSequence::random_unit(n, seed))?,
        other => return Err(CliError::Usage(format!("seq must be uniform or random, got `{other}`"))),
    };
    let mut out = Outcome::default();
    for r in &rep.rows {
        out.check(r.max_chebyshev <= 1.0 + 1e-6, || {
            format!("levelset: Chebyshev bound λ²|E_λ| <= 1 violated ({}) at N={}", r.max_chebyshev, r.degree)
        });
        out.check(r.monotone, || format!("levelset: |E_λ| not monotone in λ at N={}", r.degree));
        let mut rec = Record::new("levelset")
            .param("N", r.degree)
            .param("seq", seq.as_str())
            .value("gate", r.gate)
            .value("value", r.value)
            .value("argmax_lambda", r.argmax_lambda)
            .value("max_chebyshev", r.max_chebyshev);
        if seq == "random" {
            rec = rec.seed(seed);
        }
        out.push(rec);
    }
    if ns.len() >= 2 {
        out.check(rep.passes(), || format!("levelset: gated |E_λ|λ^10/N spread {:.3} across N exceeds 8", rep.spread));
    }
    Ok(out)
}

fn strichartz(a: &StrichartzArgs, cfg: &Config) -> Result<Outcome, CliError> {
    let p = Params { cfg, section: "strichartz" };
    let ns = p.list(&a.n, "N", &[4, 8])?;
    let pp = p.pick(a.p, "p", 10.0)?;
    let seed = p.pick(a.seed, "seed", 0)?;
    let opt = OptimizerConfig {
        max_iter: p.pick(a.max_iter, "max_iter", 30)?,
        random_starts: p.pick(a.starts, "starts", 1)?,
        seed,
        ..OptimizerConfig::default()
    };
    let mut out = Outcome::default();
    let mut points = Vec::new();
    for n in ns {
        let e = estimate_kp(n, pp, &opt)?;
        for s in &e.starts {
            out.check(s.is_monotone(), || format!("levelset: optimizer objective decreased for start {} at N={n}", s.label));
        }
        if pp == 2.0 {
            out.check((e.lower_bound - 1.0).abs() <= 1e-8, || format!("levelset: K_2 estimate {} is not 1 at N={n}", e.lower_bound));
        }
        points.push((n as f64, e.lower_bound));
        out.push(
            Record::new("strichartz")
                .seed(seed)
                .param("N", n)
                .param("p", pp)
                .value("lower_bound", e.lower_bound)
                .value("iterations", e.iterations)
                .value("converged", e.converged)
                .value("mx", e.mx)
                .value("mt", e.mt),
        );
    }
    if points.len() >= 2 && pp != 2.0 {
        let fit = loglog_fit(&points, 2)?;
        out.push(Record::new("strichartz_fit").param("p", pp).value("slope", fit.slope).value("residual", fit.residual));
    }
    Ok(out)
}

fn hua(a: &HuaArgs, cfg: &Config) -> Result<Outcome, CliError> {
    let p = Params { cfg, section: "hua" };
    let ns = p.list(&a.n, "N", &[4, 8, 12, 16, 24, 32, 40])?;
    let prof = p.list(&a.profile_n, "profile_N", &[8, 16])?;
    let rep = verify_hua(&ns, &prof)?;
    let mut out = Outcome::default();
    for c in &rep.counts {
        let rec = count_record(c)?;
        out.check(verify_lower_bound(c)?.box_bound_holds(), || {
            format!("counting: Ω-box lower bound S·N^4 >= c·N^10 fails at N={}", c.degree)
        });
        out.push(Record { experiment: "hua".into(), ..rec });
    }
    for r in &rep.kernel.rows {
        out.push(Record::new("hua_kernel").param("N", r.degree).value("gate", r.gate).value("value", r.value));
    }
    out.push(
        Record::new("hua_fit")
            .value("slope", rep.fit.slope)
            .value("residual", rep.fit.residual)
            .value("kernel_spread", rep.kernel.spread),
    );
    out.check(rep.slope_ok(), || format!("counting: S(N;5) slope {:.3} outside [5.4, 6.3]", rep.fit.slope));
    out.check(rep.lower_bounds_ok(), || "counting: S(N;5) below (2N+1)^5".to_string());
    if prof.len() >= 2 {
        out.check(rep.kernel.passes(), || format!("levelset: gated kernel profile spread {:.3} exceeds 8", rep.kernel.spread));
    }
    Ok(out)
}

struct SolveSetup {
    phi: restrictlab::gkdv::SpectralState,
    config: SolverConfig,
    record: Record,
}

fn solve_setup(a: &SolveArgs, cfg: &Config, section: &'static str, default_t: f64) -> Result<SolveSetup, CliError> {
    let p = Params { cfg, section };
    let m = p.pick(a.m, "M", 64)?;
    let f = p.pick(a.f.clone(), "F", "3".to_string())?;
    let s = p.pick(a.s, "s", 1.0)?;
    let amp = p.pick(a.amp, "amp", 0.2)?;
    let seed = p.pick(a.seed, "seed", 0)?;
    let dt = p.pick(a.dt, "dt", 1e-4)?;
    let t = p.pick(a.t, "T", default_t)?;
    let variant = match p.pick(a.variant.clone(), "variant", "original".to_string())?.as_str() {
        "original" => Variant::Original,
        "mean-removed" => Variant::MeanRemoved,
        other => return Err(CliError::Usage(format!("variant must be original or mean-removed, got `{other}`"))),
    };
    let phi = make_hs_data(m, SobolevSpec { s, seed, amplitude: amp })?;
    let config = SolverConfig::new(nonlinearity(&f)?, dt, t).with_variant(variant);
    let record = Record::new(section)
        .seed(seed)
        .param("M", m)
        .param("F", f.as_str())
        .param("s", s)
        .param("amp", amp)
        .param("dt", dt)
        .param("T", t)
        .value("data_norm", phi.hs_norm(s));
    Ok(SolveSetup { phi, config, record })
}

fn solve_cmd(a: &SolveArgs, cfg: &Config) -> Result<Outcome, CliError> {
    let setup = solve_setup(a, cfg, "solve", 0.01)?;
    let p = Params { cfg, section: "solve" };
    let s = p.pick(a.s, "s", 1.0)?;
    let traj = solve(&setup.phi, &setup.config)?;
    let export = a.export.clone().or_else(|| cfg.get("solve", "export").map(Into::into));
    if let Some(path) = export {
        let file = BufWriter::new(File::create(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?);
        if path.extension().is_some_and(|e| e == "bin") {
            write_binary(&traj.states, file)?;
        } else {
            write_text(&traj.states, file)?;
        }
    }
    let c = traj.conservation;
    let mut out = Outcome::default();
    out.check(c.mass_drift <= 1e-10, || format!("gkdv: mass drift {:e} exceeds 1e-10", c.mass_drift));
    out.push(
        setup
            .record
            .value("steps", traj.steps)
            .value("mass_drift", c.mass_drift)
            .value("momentum_drift", c.momentum_drift)
            .value("final_norm", traj.last().hs_norm(s))
            .value("stored", traj.states.len()),
    );
    Ok(out)
}

fn gauge(a: &SolveArgs, cfg: &Config) -> Result<Outcome, CliError> {
    let setup = solve_setup(a, cfg, "gauge", 0.01)?;
    let rep = gauge_equivalence_check(&setup.phi, &setup.config)?;
    let mut out = Outcome::default();
    out.check(rep.discrepancy < 1e-6, || format!("gkdv: gauged solution differs from direct solve by {:e}", rep.discrepancy));
    out.check(rep.round_trip < 1e-9, || format!("gkdv: gauge round trip error {:e}", rep.round_trip));
    out.push(setup.record.value("discrepancy", rep.discrepancy).value("round_trip", rep.round_trip));
    Ok(out)
}

const DELTAS: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

fn xsb(a: &XsbArgs, cfg: &Config) -> Result<Outcome, CliError> {
    let p = Params { cfg, section: "xsb" };
    let check = p.pick(a.check.clone(), "check", "all".to_string())?;
    let s = p.pick(a.s, "s", 0.6)?;
    let f = p.pick(a.f.clone(), "F", "3".to_string())?;
    let nl = nonlinearity(&f)?;
    let deltas = p.list(&a.deltas, "deltas", &DELTAS)?;
    let seed = p.pick(a.seed, "seed", 0)?;
    let known = ["linear", "nonlinear", "embedding", "telescope", "all"];
    if !known.contains(&check.as_str()) {
        return Err(CliError::Usage(format!("check must be one of {known:?}, got `{check}`")));
    }
    let wants = |c: &str| check == c || check == "all";
    let phi = make_hs_data(32, SobolevSpec { s, seed, amplitude: 0.2 })?;
    let mut out = Outcome::default();
    if wants("linear") {
        let rep = linear_estimate_check(&phi, s, &deltas)?;
        for (d, r) in &rep.ratios {
            out.push(Record::new("xsb_linear").seed(seed).param("s", s).param("delta", *d).value("ratio", *r));
        }
        out.check(rep.passes(), || format!("xsb: linear estimate ratio drift {:.3} across δ exceeds 4", rep.drift));
    }
    if wants("nonlinear") {
        let rep = nonlinear_scaling_check(&phi, &nl, s, &deltas)?;
        for r in &rep.rows {
            out.push(
                Record::new("xsb_nonlinear")
                    .seed(seed)
                    .param("F", f.as_str())
                    .param("s", s)
                    .param("delta", r.delta)
                    .value("lhs", r.lhs)
                    .value("ys", r.ys)
                    .value("ratio", r.ratio),
            );
        }
        let theta = rep.theta();
        out.push(Record::new("xsb_theta").seed(seed).param("F", f.as_str()).param("s", s).value("theta", theta.unwrap_or(f64::NAN)));
        out.check(rep.passes(), || format!("xsb: fitted δ-exponent {theta:?} is not positive"));
    }
    if wants("embedding") {
        for which in [Embedding::L4, Embedding::Lq, Embedding::Mixed] {
            let rep = embedding_check(which, &[4, 8], &[seed, seed + 1])?;
            for (nx, r) in &rep.rows {
                out.push(Record::new("xsb_embedding").param("which", format!("{which:?}")).param("N", *nx).value("ratio", *r));
            }
            out.check(rep.passes(), || format!("xsb: {which:?} embedding ratio drift {:.3} exceeds 4", rep.drift));
        }
    }
    if wants("telescope") {
        let field = solver_samples(&phi, &nl, 1.6, 256, 0.4)?;
        let defect = lp_telescope_check(&field, &nl, 1, 16)?;
        out.push(Record::new("xsb_telescope").param("F", f.as_str()).value("defect", defect));
        out.check(defect <= 1e-10, || format!("xsb: Littlewood–Paley telescoping defect {defect:e}"));
    }
    Ok(out)
}

fn all(cfg: &Config) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    out.merge(count(&CountArgs::default(), cfg)?);
    out.merge(weyl(&WeylArgs::default(), cfg)?);
    out.merge(farey(&FareyArgs::default(), cfg)?);
    out.merge(decompose(&DecomposeArgs::default(), cfg)?);
    out.merge(levelset(&LevelsetArgs::default(), cfg)?);
    out.merge(strichartz(&StrichartzArgs::default(), cfg)?);
    out.merge(hua(&HuaArgs::default(), cfg)?);
    out.merge(solve_cmd(&SolveArgs::default(), cfg)?);
    out.merge(gauge(&SolveArgs::default(), cfg)?);
    out.merge(xsb(&XsbArgs::default(), cfg)?);
    Ok(out)
}
