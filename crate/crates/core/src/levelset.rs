//! Level sets `E_λ = {|F_N| > λ}`, space-time `L^p` norms, and lower bounds for
//! the Strichartz constants `K_{p,N}` by ascent on the unit sphere.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::counting::{count_meet_in_middle, scaling_fit, CountResult};
use crate::error::{invalid, LabError, Result};
use crate::expsum::{tree_sum, CoeffSequence, SliceSynth, MAX_GRID_CELLS};
use crate::fit::{spread, LogLogFit};

/// Largest number of cells a streamed reduction will visit.
pub const STREAM_CELL_CAP: u128 = 1 << 32;

/// Time slices handled sequentially per task; fixes the summation tree.
const CHUNK: usize = 256;

/// Smallest `m >= n` with no prime factor above 5.
pub fn smooth_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Level-set grid `M_x = 8N`, `M_t = 8N³`, with `M_t` reduced to respect
/// [`MAX_GRID_CELLS`] as long as `M_t >= 2N³+1` keeps `|F|²` quadrature exact.
pub fn level_grid(degree: usize) -> Result<(usize, usize)> {
    if degree == 0 {
        return Err(invalid("N must be >= 1"));
    }
    let mx = 8 * degree;
    let mt = (8 * degree.pow(3)).min(MAX_GRID_CELLS / mx);
    if mt < 2 * degree.pow(3) + 1 {
        return Err(LabError::Guard {
            what: "level-set grid cells",
            needed: (mx * (2 * degree.pow(3) + 1)) as u128,
            cap: MAX_GRID_CELLS as u128,
        });
    }
    Ok((mx, mt))
}

/// Grid on which the mean of `|F|^p` is exact for even `p`: `M_x > pN`, `M_t > pN³`.
/// Non-even `p` uses `⌈p⌉`.
pub fn exact_grid(degree: usize, p: f64) -> (usize, usize) {
    let m = p.ceil() as usize;
    (smooth_size(m * degree + 1), m * degree.pow(3) + 1)
}

/// `a^e`, by repeated multiplication when `e` is a small integer.
#[inline]
fn power(a: f64, e: f64) -> f64 {
    if e.fract() == 0.0 && e.abs() <= 64.0 {
        a.powi(e as i32)
    } else {
        a.powf(e)
    }
}

fn is_even_integer(p: f64) -> bool {
    p.fract() == 0.0 && (p as u64) % 2 == 0
}

fn check_cells(mx: usize, mt: usize) -> Result<()> {
    let cells = mx as u128 * mt as u128;
    if cells > STREAM_CELL_CAP {
        return Err(LabError::Guard {
            what: "streamed grid cells",
            needed: cells,
            cap: STREAM_CELL_CAP,
        });
    }
    Ok(())
}

/// Reduces every time slice of `F` in fixed chunks, in parallel; `fold` sees
/// slices of one chunk in order and the chunk results are returned in order.
fn chunked<A, I, F>(synth: &SliceSynth, coeffs: &[Complex64], init: I, fold: F) -> Vec<A>
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, usize, &mut [Complex64], &mut Vec<Complex64>) + Sync + Send,
{
    let mt = synth.mt();
    let chunks = mt.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map_init(
            || (vec![Complex64::new(0.0, 0.0); synth.mx()], Vec::new()),
            |(buf, scratch), c| {
                let mut acc = init();
                for k in c * CHUNK..((c + 1) * CHUNK).min(mt) {
                    synth.synth(coeffs, k, buf, scratch);
                    fold(&mut acc, k, buf, scratch);
                }
                acc
            },
        )
        .collect()
}

/// `L^p` norm together with how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpNorm {
    pub value: f64,
    /// The grid quadrature is exact (even `p` on a fine enough grid).
    pub exact: bool,
    /// `|value - value on the doubled grid|` when the quadrature is not exact.
    pub refinement: Option<f64>,
}

fn grid_mean_pow(seq: &CoeffSequence, p: f64, mx: usize, mt: usize) -> Result<f64> {
    check_cells(mx, mt)?;
    let synth = SliceSynth::new(seq.degree(), mx, mt)?;
    let half = p / 2.0;
    let sums = chunked(&synth, seq.coeffs(), || 0.0f64, |acc, _, buf, _| {
        *acc += buf.iter().map(|v| power(v.norm_sqr(), half)).sum::<f64>();
    });
    Ok(tree_sum(&sums) / (mx as f64 * mt as f64))
}

fn resolution_guard(degree: usize, p: f64, mx: usize, mt: usize) -> Result<()> {
    let m = p.ceil() as usize;
    if mx < m * degree + 1 || mt < m * degree.pow(3) + 1 {
        return Err(LabError::Resolution(format!(
            "p = {p} needs M_x >= {} and M_t >= {}, got {mx} x {mt}",
            m * degree + 1,
            m * degree.pow(3) + 1
        )));
    }
    Ok(())
}

/// `(grid mean of |F|^p)^{1/p}`, with a refinement estimate for non-even `p`.
pub fn lp_norm_estimate(seq: &CoeffSequence, p: f64, mx: usize, mt: usize) -> Result<LpNorm> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid(format!("p must be a finite real >= 1, got {p}")));
    }
    resolution_guard(seq.degree(), p, mx, mt)?;
    let value = grid_mean_pow(seq, p, mx, mt)?.powf(1.0 / p);
    if is_even_integer(p) {
        return Ok(LpNorm {
            value,
            exact: true,
            refinement: None,
        });
    }
    let fine = grid_mean_pow(seq, p, 2 * mx, 2 * mt)?.powf(1.0 / p);
    Ok(LpNorm {
        value,
        exact: false,
        refinement: Some((fine - value).abs()),
    })
}

pub fn lp_norm(seq: &CoeffSequence, p: f64, mx: usize, mt: usize) -> Result<f64> {
    Ok(lp_norm_estimate(seq, p, mx, mt)?.value)
}

/// Strict `|F| > λ` or non-strict `|F| >= λ` level sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Threshold {
    Above,
    AtLeast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelProfile {
    pub degree: usize,
    pub lambdas: Vec<f64>,
    /// Fraction of grid cells in the level set, per threshold.
    pub measures: Vec<f64>,
    pub counts: Vec<u64>,
    pub mx: usize,
    pub mt: usize,
    /// Grid mean of `|F|²`.
    pub l2_sq: f64,
    /// Largest `|F|` on the grid.
    pub sup: f64,
}

impl LevelProfile {
    /// `max λ² |E_λ|`.
    pub fn max_chebyshev(&self) -> f64 {
        self.lambdas
            .iter()
            .zip(&self.measures)
            .map(|(l, m)| l * l * m)
            .fold(0.0, f64::max)
    }

    pub fn is_monotone(&self) -> bool {
        self.counts.windows(2).all(|w| w[0] >= w[1])
    }
}

fn profile_with(seq: &CoeffSequence, lambdas: &[f64], mx: usize, mt: usize, mode: Threshold) -> Result<LevelProfile> {
    if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(invalid("thresholds must be finite and non-negative"));
    }
    if lambdas.windows(2).any(|w| w[0] > w[1]) {
        return Err(invalid("thresholds must be non-decreasing"));
    }
    check_cells(mx, mt)?;
    let synth = SliceSynth::new(seq.degree(), mx, mt)?;
    let sq: Vec<f64> = lambdas.iter().map(|l| l * l).collect();
    let nl = lambdas.len();
    let parts = chunked(
        &synth,
        seq.coeffs(),
        || (vec![0u64; nl + 1], 0.0f64, 0.0f64),
        |(hist, l2, sup), _, buf, _| {
            for v in buf.iter() {
                let a = v.norm_sqr();
                *l2 += a;
                *sup = sup.max(a);
                // number of thresholds exceeded
                let idx = match mode {
                    Threshold::Above => sq.partition_point(|&s| a > s),
                    Threshold::AtLeast => sq.partition_point(|&s| a >= s),
                };
                hist[idx] += 1;
            }
        },
    );
    let mut hist = vec![0u64; nl + 1];
    let mut l2s = Vec::with_capacity(parts.len());
    let mut sup = 0.0f64;
    for (h, l2, s) in &parts {
        for (a, b) in hist.iter_mut().zip(h) {
            *a += b;
        }
        l2s.push(*l2);
        sup = sup.max(*s);
    }
    // cells exceeding threshold i are those whose index is > i
    let mut counts = vec![0u64; nl];
    let mut tail = 0u64;
    for i in (0..nl).rev() {
        tail += hist[i + 1];
        counts[i] = tail;
    }
    let cells = (mx * mt) as f64;
    Ok(LevelProfile {
        degree: seq.degree(),
        lambdas: lambdas.to_vec(),
        measures: counts.iter().map(|&c| c as f64 / cells).collect(),
        counts,
        mx,
        mt,
        l2_sq: tree_sum(&l2s) / cells,
        sup: sup.sqrt(),
    })
}

/// Measures of `{|F| > λ}` by cell counting.
pub fn level_profile(seq: &CoeffSequence, lambdas: &[f64], mx: usize, mt: usize) -> Result<LevelProfile> {
    profile_with(seq, lambdas, mx, mt, Threshold::Above)
}

/// Measures of `G_λ = {|K_N| >= λ}`.
pub fn kernel_level_profile(degree: usize, lambdas: &[f64], mx: usize, mt: usize) -> Result<LevelProfile> {
    profile_with(&CoeffSequence::ones(degree)?, lambdas, mx, mt, Threshold::AtLeast)
}

/// `count` thresholds spaced geometrically on `[lo, hi]`.
pub fn geometric_ladder(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 || hi <= lo {
        return vec![lo];
    }
    let r = (hi / lo).ln() / (count - 1) as f64;
    (0..count).map(|i| lo * (r * i as f64).exp()).collect()
}

/// Constants standing in for `C_1`, `C_2` in the two-term level-set inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thm2Constants {
    pub c1: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Thm2Row {
    pub scale: u64,
    pub lambda: f64,
    pub measure: f64,
    /// `λ² |E_λ|²`.
    pub lhs: f64,
    /// `C_1 N^{1/4} Q^{1/4} |E_λ|² + C_2 |E_λ| / Q`.
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Thm2Report {
    pub degree: usize,
    pub rows: Vec<Thm2Row>,
    /// `max lhs / rhs` over rows with a non-empty level set.
    pub slack: f64,
}

/// Largest tolerated `lhs / rhs`.
pub const THM2_SLACK: f64 = 8.0;

impl Thm2Report {
    pub fn passes(&self) -> bool {
        self.slack <= THM2_SLACK
    }
}

/// Evaluates `λ²|E_λ|² <= C_1 N^{1/4}Q^{1/4}|E_λ|² + C_2|E_λ|/Q` on the dyadic
/// ladder `λ = 2^{j}/4 <= √(2N+1)` for every `Q` in `scales`.
pub fn verify_thm2(seq: &CoeffSequence, scales: &[u64], constants: Thm2Constants) -> Result<Thm2Report> {
    let n = seq.degree();
    let (lo, hi) = (n.pow(2) as u64, n.pow(3) as u64);
    if let Some(q) = scales.iter().find(|&&q| q < lo || q > hi) {
        return Err(invalid(format!("Q = {q} outside [N², N³] = [{lo}, {hi}]")));
    }
    let top = ((2 * n + 1) as f64).sqrt();
    let mut lambdas = vec![0.25];
    while lambdas[lambdas.len() - 1] * 2.0 <= top {
        lambdas.push(lambdas[lambdas.len() - 1] * 2.0);
    }
    let (mx, mt) = level_grid(n)?;
    let prof = level_profile(seq, &lambdas, mx, mt)?;
    let mut rows = Vec::new();
    let mut slack: f64 = 0.0;
    for &q in scales {
        for (&l, &m) in lambdas.iter().zip(&prof.measures) {
            let lhs = l * l * m * m;
            let rhs = constants.c1 * (n as f64).powf(0.25) * (q as f64).powf(0.25) * m * m + constants.c2 * m / q as f64;
            if m > 0.0 {
                slack = slack.max(lhs / rhs);
            }
            rows.push(Thm2Row {
                scale: q,
                lambda: l,
                measure: m,
                lhs,
                rhs,
            });
        }
    }
    Ok(Thm2Report { degree: n, rows, slack })
}

/// Gate `λ >= N^{3/8}/2` for the `λ^{-10}` level-set decay.
pub fn cor1_gate(degree: usize) -> f64 {
    0.5 * (degree as f64).powf(0.375)
}

/// Thresholds per degree in the gated ladders.
pub const LADDER_POINTS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct GatedRow {
    pub degree: usize,
    pub gate: f64,
    /// `sup_{λ >= gate} |level set| λ^{10} / normaliser`.
    pub value: f64,
    pub argmax_lambda: f64,
    pub max_chebyshev: f64,
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatedReport {
    pub rows: Vec<GatedRow>,
    pub spread: f64,
}

/// Largest tolerated spread across `N` of the gated quantity.
pub const GATED_SPREAD: f64 = 8.0;

impl GatedReport {
    pub fn passes(&self) -> bool {
        self.spread < GATED_SPREAD
    }
}

fn gated_row(degree: usize, gate: f64, prof: &LevelProfile, normaliser: f64) -> GatedRow {
    let (value, argmax_lambda) = prof
        .lambdas
        .iter()
        .zip(&prof.measures)
        .filter(|(l, _)| **l >= gate)
        .map(|(l, m)| (m * l.powi(10) / normaliser, *l))
        .fold((0.0, gate), |best, cur| if cur.0 > best.0 { cur } else { best });
    GatedRow {
        degree,
        gate,
        value,
        argmax_lambda,
        max_chebyshev: prof.max_chebyshev(),
        monotone: prof.is_monotone(),
    }
}

/// `sup_{λ >= N^{3/8}/2} |E_λ| λ^{10} / N` for `seq_rule(N)` over each `N`.
pub fn verify_cor1<S>(degrees: &[usize], seq_rule: S) -> Result<GatedReport>
where
    S: Fn(usize) -> Result<CoeffSequence>,
{
    let mut rows = Vec::with_capacity(degrees.len());
    for &n in degrees {
        let seq = seq_rule(n)?;
        let gate = cor1_gate(n);
        let top = ((2 * n + 1) as f64).sqrt();
        let (mx, mt) = level_grid(n)?;
        let prof = level_profile(&seq, &geometric_ladder(gate, top.max(gate), LADDER_POINTS), mx, mt)?;
        rows.push(gated_row(n, gate, &prof, n as f64));
    }
    let spread = spread(&rows.iter().map(|r| r.value).collect::<Vec<_>>());
    Ok(GatedReport { rows, spread })
}

/// Exponent fit for `S(N;5)` and the gated `|G_λ| λ^{10} / N^6` profile of `K_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct HuaReport {
    pub counts: Vec<CountResult>,
    pub fit: LogLogFit,
    pub kernel: GatedReport,
}

pub const HUA_SLOPE_RANGE: (f64, f64) = (5.4, 6.3);

impl HuaReport {
    pub fn slope_ok(&self) -> bool {
        (HUA_SLOPE_RANGE.0..=HUA_SLOPE_RANGE.1).contains(&self.fit.slope)
    }

    pub fn lower_bounds_ok(&self) -> bool {
        self.counts.iter().all(|c| c.value >= c.diagonal())
    }

    pub fn passes(&self) -> bool {
        self.slope_ok() && self.lower_bounds_ok() && self.kernel.passes()
    }
}

/// Gate `λ >= N^{3/4}` for `|G_λ|`.
pub fn hua_gate(degree: usize) -> f64 {
    (degree as f64).powf(0.75)
}

pub fn verify_hua(count_degrees: &[u64], profile_degrees: &[usize]) -> Result<HuaReport> {
    let counts = count_degrees
        .iter()
        .map(|&n| count_meet_in_middle(n, 5))
        .collect::<Result<Vec<_>>>()?;
    let fit = scaling_fit(&counts)?;
    let mut rows = Vec::with_capacity(profile_degrees.len());
    for &n in profile_degrees {
        let gate = hua_gate(n);
        let top = (2 * n + 1) as f64;
        let (mx, mt) = level_grid(n)?;
        let prof = kernel_level_profile(n, &geometric_ladder(gate, top, LADDER_POINTS), mx, mt)?;
        rows.push(gated_row(n, gate, &prof, (n as f64).powi(6)));
    }
    let spread = spread(&rows.iter().map(|r| r.value).collect::<Vec<_>>());
    Ok(HuaReport {
        counts,
        fit,
        kernel: GatedReport { rows, spread },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub max_iter: usize,
    /// Stop once an accepted step gains less than this, relatively.
    pub rel_tol: f64,
    pub max_halvings: usize,
    /// Random unit starts in addition to the uniform one.
    pub random_starts: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iter: 500,
            rel_tol: 1e-6,
            max_halvings: 30,
            random_starts: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StartSummary {
    /// `uniform` or `random:<seed>`.
    pub label: String,
    pub initial: f64,
    pub best: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

impl StartSummary {
    pub fn is_monotone(&self) -> bool {
        self.history.windows(2).all(|w| w[1] >= w[0])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrichartzEstimate {
    pub degree: usize,
    pub p: f64,
    /// `max ‖F‖_p / ‖a‖_2` found; exact quadrature makes it a lower bound for `K_{p,N}`.
    pub lower_bound: f64,
    pub witness: CoeffSequence,
    pub iterations: usize,
    pub converged: bool,
    pub mx: usize,
    pub mt: usize,
    pub starts: Vec<StartSummary>,
}

/// `J(a) = mean |F|^p` and `∂J/∂ā_n = (p/2) mean |F|^{p-2} F ē_n` on the grid.
struct Objective {
    synth: SliceSynth,
    p: f64,
    cells: f64,
}

impl Objective {
    fn eval(&self, coeffs: &[Complex64]) -> Result<(f64, Vec<Complex64>)> {
        let width = coeffs.len();
        let half = self.p / 2.0;
        let parts = chunked(
            &self.synth,
            coeffs,
            || (0.0f64, vec![Complex64::new(0.0, 0.0); width]),
            |(j, grad), k, buf, scratch| {
                for v in buf.iter_mut() {
                    let a = v.norm_sqr();
                    let w = if a == 0.0 { 0.0 } else { power(a, half - 1.0) };
                    *j += w * a;
                    *v *= w;
                }
                self.synth.analyze_add(buf, k, grad, scratch);
            },
        );
        let js: Vec<f64> = parts.iter().map(|p| p.0).collect();
        let j = tree_sum(&js) / self.cells;
        let mut grad = vec![Complex64::new(0.0, 0.0); width];
        for (_, g) in &parts {
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        let scale = half / self.cells;
        grad.iter_mut().for_each(|g| *g *= scale);
        if !j.is_finite() || grad.iter().any(|g| !(g.re.is_finite() && g.im.is_finite())) {
            return Err(LabError::NonFinite("objective gradient".into()));
        }
        Ok((j, grad))
    }
}

fn unit(mut v: Vec<Complex64>) -> Vec<Complex64> {
    let n = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|c| *c /= n);
    v
}

fn ascend(obj: &Objective, start: Vec<Complex64>, label: String, cfg: &OptimizerConfig) -> Result<(StartSummary, Vec<Complex64>)> {
    let mut a = unit(start);
    let (mut j, mut g) = obj.eval(&a)?;
    let initial = j.powf(1.0 / obj.p);
    let mut history = vec![initial];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        iterations += 1;
        // ĝ has unit component along a, since <g, a> = (p/2) J
        let ghat: Vec<Complex64> = g.iter().map(|x| x / (0.5 * obj.p * j)).collect();
        let mut eta = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let cand = unit(a.iter().zip(&ghat).map(|(x, d)| x + d * eta).collect());
            let (jc, gc) = obj.eval(&cand)?;
            if jc > j {
                accepted = Some((cand, jc, gc));
                break;
            }
            eta *= 0.5;
        }
        let Some((cand, jc, gc)) = accepted else {
            converged = true;
            break;
        };
        let gain = (jc - j) / j;
        a = cand;
        j = jc;
        g = gc;
        history.push(j.powf(1.0 / obj.p));
        if gain < cfg.rel_tol {
            converged = true;
            break;
        }
    }
    Ok((
        StartSummary {
            label,
            initial,
            best: j.powf(1.0 / obj.p),
            iterations,
            converged,
            history,
        },
        a,
    ))
}

/// Projected ascent of `‖F‖_p` over unit coefficient sequences, from the uniform
/// sequence and `cfg.random_starts` random ones; returns the best value found.
pub fn estimate_kp(degree: usize, p: f64, cfg: &OptimizerConfig) -> Result<StrichartzEstimate> {
    if degree == 0 {
        return Err(invalid("N must be >= 1"));
    }
    if !(p >= 2.0 && p.is_finite()) {
        return Err(invalid(format!("p must be a finite real >= 2, got {p}")));
    }
    let (mx, mt) = exact_grid(degree, p);
    check_cells(mx, mt)?;
    let obj = Objective {
        synth: SliceSynth::new(degree, mx, mt)?,
        p,
        cells: mx as f64 * mt as f64,
    };
    let mut starts = vec![(CoeffSequence::uniform(degree)?, "uniform".to_string())];
    for i in 0..cfg.random_starts {
        let seed = cfg.seed.wrapping_add(i as u64);
        starts.push((CoeffSequence::random_unit(degree, seed)?, format!("random:{seed}")));
    }
    let mut summaries = Vec::with_capacity(starts.len());
    let mut best: Option<(f64, Vec<Complex64>, usize, bool)> = None;
    for (seq, label) in starts {
        let (summary, a) = ascend(&obj, seq.coeffs().to_vec(), label, cfg)?;
        if best.as_ref().map_or(true, |b| summary.best > b.0) {
            best = Some((summary.best, a, summary.iterations, summary.converged));
        }
        summaries.push(summary);
    }
    let (lower_bound, coeffs, iterations, converged) = best.expect("at least one start");
    Ok(StrichartzEstimate {
        degree,
        p,
        lower_bound,
        witness: CoeffSequence::new(degree, coeffs)?,
        iterations,
        converged,
        mx,
        mt,
        starts: summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counting::count_bruteforce;

    #[test]
    fn smooth_sizes() {
        assert_eq!(smooth_size(1), 1);
        assert_eq!(smooth_size(7), 8);
        assert_eq!(smooth_size(41), 45);
        assert_eq!(smooth_size(321), 324);
    }

    #[test]
    fn lp_norm_examples() {
        let n = 4;
        let (mx, mt) = exact_grid(n, 6.0);
        let u = CoeffSequence::random_unit(n, 5).unwrap();
        assert!((lp_norm(&u, 2.0, mx, mt).unwrap() - 1.0).abs() < 1e-12);
        let d = CoeffSequence::delta(n).unwrap();
        for p in [1.0, 2.0, 3.5, 6.0] {
            assert!((lp_norm(&d, p, mx, mt).unwrap() - 1.0).abs() < 1e-12, "p={p}");
        }
        let ones = CoeffSequence::ones(n).unwrap();
        assert!((lp_norm(&ones, 2.0, mx, mt).unwrap() - 9f64.sqrt()).abs() < 1e-12);
        assert!(matches!(lp_norm(&u, 6.0, 10, mt), Err(LabError::Resolution(_))));
        assert!(lp_norm(&u, 0.5, mx, mt).is_err());
    }

    #[test]
    fn lp_norm_matches_counts() {
        // ‖Σ e(nx + n³t)‖_{2b}^{2b} = S(N;b)
        for (n, b) in [(2usize, 2u32), (3, 2), (2, 3)] {
            let p = 2.0 * b as f64;
            let (mx, mt) = exact_grid(n, p);
            let ones = CoeffSequence::ones(n).unwrap();
            let v = lp_norm(&ones, p, mx, mt).unwrap().powf(p);
            let s = count_bruteforce(n as u64, b).unwrap().value as f64;
            assert!((v - s).abs() < 1e-9 * s, "N={n} b={b}: {v} vs {s}");
        }
    }

    #[test]
    fn lp_norm_non_even_has_refinement() {
        let u = CoeffSequence::random_unit(3, 1).unwrap();
        let (mx, mt) = exact_grid(3, 3.0);
        let r = lp_norm_estimate(&u, 3.0, mx, mt).unwrap();
        assert!(!r.exact);
        assert!(r.refinement.unwrap() < 0.05);
    }

    #[test]
    fn lp_norm_monotone_in_p() {
        let n = 3;
        let (mx, mt) = exact_grid(n, 8.0);
        for seed in 0..20 {
            let u = CoeffSequence::random_unit(n, seed).unwrap();
            let vals: Vec<f64> = [1.0, 2.0, 3.0, 4.0, 6.0, 8.0].iter().map(|&p| lp_norm(&u, p, mx, mt).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[1] >= w[0] - 1e-12), "seed {seed}: {vals:?}");
        }
    }

    #[test]
    fn level_profile_examples() {
        let n = 4;
        let (mx, mt) = level_grid(n).unwrap();
        let u = CoeffSequence::uniform(n).unwrap();
        let top = (9f64).sqrt();
        let prof = level_profile(&u, &[0.0, 0.5, 1.0, 2.0, top + 1e-9], mx, mt).unwrap();
        assert_eq!(prof.measures[0], 1.0);
        assert_eq!(prof.measures[4], 0.0);
        assert!(prof.is_monotone());
        assert!(prof.max_chebyshev() <= 1.0 + 1e-6);
        assert!((prof.l2_sq - 1.0).abs() < 1e-12);
        assert!(level_profile(&u, &[1.0, 0.5], mx, mt).is_err());
    }

    #[test]
    fn chebyshev_random_sequences() {
        let n = 6;
        let (mx, mt) = level_grid(n).unwrap();
        let ladder = geometric_ladder(0.1, 4.0, 40);
        for seed in 0..5 {
            let prof = level_profile(&CoeffSequence::random_unit(n, seed).unwrap(), &ladder, mx, mt).unwrap();
            assert!(prof.is_monotone());
            assert!(prof.max_chebyshev() <= 1.0 + 1e-6);
            assert!(prof.measures.iter().all(|m| (0.0..=1.0).contains(m)));
        }
    }

    #[test]
    fn level_measures_stable_under_refinement() {
        let n = 4;
        let (mx, mt) = level_grid(n).unwrap();
        let u = CoeffSequence::random_unit(n, 9).unwrap();
        let coarse = level_profile(&u, &[0.5, 1.0, 1.5], mx, mt).unwrap();
        let fine = level_profile(&u, &[0.5, 1.0, 1.5], 2 * mx, 2 * mt).unwrap();
        for (i, (a, b)) in coarse.measures.iter().zip(&fine.measures).enumerate() {
            if coarse.lambdas[i] < 0.99 * fine.sup {
                assert!((a - b).abs() <= 0.02 * b, "λ={}: {a} vs {b}", coarse.lambdas[i]);
            }
        }
    }

    #[test]
    fn kernel_profile_uses_non_strict_threshold() {
        let prof = kernel_level_profile(3, &[7.0], 24, 216).unwrap();
        // the cell at the origin has |K_N| = 2N+1 exactly
        assert!(prof.counts[0] >= 1);
        assert!((prof.sup - 7.0).abs() < 1e-12);
    }

    #[test]
    fn thm2_examples() {
        let u = CoeffSequence::uniform(4).unwrap();
        let rep = verify_thm2(&u, &[16, 64], Thm2Constants { c1: 1.0, c2: 1.0 }).unwrap();
        assert!(rep.rows.iter().all(|r| r.lhs >= 0.0 && r.rhs >= 0.0));
        assert_eq!(rep.rows[0].lambda, 0.25);
        assert!(rep.rows[0].measure > 0.5);
        assert!(verify_thm2(&u, &[15], Thm2Constants { c1: 1.0, c2: 1.0 }).is_err());
    }

    #[test]
    fn gated_value_zero_above_sup() {
        let rep = verify_cor1(&[4], |n| CoeffSequence::uniform(n)).unwrap();
        assert_eq!(rep.rows.len(), 1);
        assert!(rep.rows[0].value > 0.0);
        assert!(rep.rows[0].monotone);
        assert_eq!(rep.spread, 1.0);
    }

    #[test]
    fn kp_at_p2_is_one() {
        let est = estimate_kp(5, 2.0, &OptimizerConfig::default()).unwrap();
        assert!((est.lower_bound - 1.0).abs() < 1e-10);
        assert!(est.witness.is_unit());
    }

    #[test]
    fn kp_n1_p4_beats_uniform() {
        let est = estimate_kp(1, 4.0, &OptimizerConfig::default()).unwrap();
        let uniform = (19.0f64).powf(0.25) / 3f64.sqrt();
        assert!((est.starts[0].initial - uniform).abs() < 1e-12);
        assert!(est.lower_bound >= uniform - 1e-12);
        for s in &est.starts {
            assert!(s.is_monotone(), "{}", s.label);
        }
        assert!(est.witness.is_unit());
    }

    #[test]
    fn kp_at_least_uniform_bound() {
        let cfg = OptimizerConfig {
            max_iter: 30,
            random_starts: 1,
            ..OptimizerConfig::default()
        };
        for (n, b) in [(2usize, 2u32), (3, 2), (2, 3), (4, 2)] {
            let est = estimate_kp(n, 2.0 * b as f64, &cfg).unwrap();
            let s = count_bruteforce(n as u64, b).unwrap().value as f64;
            let floor = s.powf(1.0 / (2.0 * b as f64)) / ((2 * n + 1) as f64).sqrt();
            assert!(est.lower_bound >= floor - 1e-6, "N={n} b={b}");
        }
    }
}
