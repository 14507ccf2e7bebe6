//! Cubic Weyl sums, the kernel `K_N(x,t) = Σ_{|n|<=N} e(n³t + nx)` and
//! sampling of the extremal functions `F_N(x,t) = Σ a_n e(nx + n³t)` on
//! uniform space-time grids of the torus.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::arith::{dirichlet_approx, Rational};
use crate::error::{invalid, LabError, Result};
use crate::phase::{cis_turns, frac, frac_mul, RootTable};

/// Largest grid that [`sample_extremal`] will materialize.
pub const MAX_GRID_CELLS: usize = 1 << 26;

/// Root tables are used for the time phases when `m_t` is at most this.
const ROOT_TABLE_LIMIT: u64 = 1 << 22;

/// Finitely supported coefficients `a_n`, `-N <= n <= N`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffSequence {
    degree: usize,
    coeffs: Vec<Complex64>,
}

impl CoeffSequence {
    /// Coefficients listed from `n = -N` to `n = N`.
    pub fn new(degree: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if degree == 0 {
            return Err(invalid("sequence degree N must be >= 1"));
        }
        if coeffs.len() != 2 * degree + 1 {
            return Err(invalid(format!(
                "expected {} coefficients, got {}",
                2 * degree + 1,
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(LabError::NonFinite("sequence coefficient".into()));
        }
        Ok(CoeffSequence { degree, coeffs })
    }

    /// `a_n = 1/√(2N+1)` for all `n`.
    pub fn uniform(degree: usize) -> Result<Self> {
        let len = 2 * degree + 1;
        let v = 1.0 / (len as f64).sqrt();
        Self::new(degree, vec![Complex64::new(v, 0.0); len])
    }

    /// All ones (not normalized); `F_N` is then the kernel `K_N`.
    pub fn ones(degree: usize) -> Result<Self> {
        Self::new(degree, vec![Complex64::new(1.0, 0.0); 2 * degree + 1])
    }

    /// `a_n = δ_{n,0}`.
    pub fn delta(degree: usize) -> Result<Self> {
        let mut c = vec![Complex64::new(0.0, 0.0); 2 * degree + 1];
        c[degree] = Complex64::new(1.0, 0.0);
        Self::new(degree, c)
    }

    /// Unit-norm sequence with i.i.d. complex Gaussian entries.
    pub fn random_unit(degree: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = (0..2 * degree + 1)
            .map(|_| {
                // Box-Muller
                let u1: f64 = 1.0 - rng.gen::<f64>();
                let u2: f64 = rng.gen();
                let r = (-2.0 * u1.ln()).sqrt();
                Complex64::from_polar(r, std::f64::consts::TAU * u2)
            })
            .collect();
        let mut seq = Self::new(degree, coeffs)?;
        seq.normalize()?;
        Ok(seq)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeff(&self, n: i64) -> Complex64 {
        self.coeffs[(n + self.degree as i64) as usize]
    }

    /// Iterator over `(n, a_n)`.
    pub fn iter(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let d = self.degree as i64;
        self.coeffs.iter().enumerate().map(move |(i, &c)| (i as i64 - d, c))
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(LabError::Degenerate("cannot normalize a zero sequence".into()));
        }
        for c in &mut self.coeffs {
            *c /= n;
        }
        Ok(())
    }

    /// True when `Σ|a_n|² = 1 ± 1e-12`.
    pub fn is_unit(&self) -> bool {
        (self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>() - 1.0).abs() <= 1e-12
    }
}

/// Cubic phase `t n³ + b n² + c n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeylPhase {
    pub t: f64,
    pub b: f64,
    pub c: f64,
}

impl WeylPhase {
    pub fn new(t: f64, b: f64, c: f64) -> Result<Self> {
        if !(t.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(LabError::NonFinite("Weyl phase coefficient".into()));
        }
        Ok(WeylPhase { t, b, c })
    }

    /// `frac(t n³ + b n² + c n)` with each monomial reduced exactly.
    pub fn turns(&self, n: i64) -> f64 {
        let n2 = n * n;
        let n3 = n2 * n;
        frac(frac_mul(n3, self.t) + frac_mul(n2, self.b) + frac_mul(n, self.c))
    }
}

fn pairwise<F: Fn(u64) -> Complex64 + Copy>(lo: u64, hi: u64, term: F) -> Complex64 {
    if hi - lo <= 64 {
        let mut s = Complex64::new(0.0, 0.0);
        for n in lo..hi {
            s += term(n);
        }
        s
    } else {
        let mid = lo + (hi - lo) / 2;
        pairwise(lo, mid, term) + pairwise(mid, hi, term)
    }
}

/// `Σ_{n=1}^N e^{2πi(t n³ + b n² + c n)}` with exact phase reduction and
/// pairwise summation.
pub fn weyl_sum(degree: u64, phase: WeylPhase) -> Result<Complex64> {
    if degree == 0 {
        return Err(invalid("weyl_sum requires N >= 1"));
    }
    if degree > 2_000_000 {
        return Err(invalid("weyl_sum: N too large for exact i64 cubes"));
    }
    Ok(pairwise(1, degree + 1, |n| cis_turns(phase.turns(n as i64))))
}

/// The kernel `K_N(x, t) = Σ_{n=-N}^N e^{2πi(t n³ + x n)}`, real valued by symmetry.
pub fn eval_kernel(degree: u64, x: f64, t: f64) -> Result<Complex64> {
    if degree == 0 {
        return Err(invalid("eval_kernel requires N >= 1"));
    }
    if !(x.is_finite() && t.is_finite()) {
        return Err(LabError::NonFinite("kernel argument".into()));
    }
    let phase = WeylPhase { t, b: 0.0, c: x };
    let half = pairwise(1, degree + 1, |n| {
        let th = phase.turns(n as i64);
        Complex64::new((std::f64::consts::TAU * th).cos(), 0.0)
    });
    Ok(Complex64::new(1.0 + 2.0 * half.re, 0.0))
}

/// Samples `F(x_j, t_k)` with `x_j = j/M_x`, `t_k = k/M_t`, stored by time slice.
#[derive(Debug, Clone)]
pub struct SpaceTimeGrid {
    mx: usize,
    mt: usize,
    values: Vec<Complex64>,
}

impl SpaceTimeGrid {
    pub fn mx(&self) -> usize {
        self.mx
    }

    pub fn mt(&self) -> usize {
        self.mt
    }

    pub fn cell_measure(&self) -> f64 {
        1.0 / (self.mx as f64 * self.mt as f64)
    }

    pub fn get(&self, j: usize, k: usize) -> Complex64 {
        self.values[k * self.mx + j]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn slice(&self, k: usize) -> &[Complex64] {
        &self.values[k * self.mx..(k + 1) * self.mx]
    }

    /// Grid mean of `|F|^2`.
    pub fn mean_abs_sq(&self) -> f64 {
        let per_slice: Vec<f64> = (0..self.mt)
            .map(|k| self.slice(k).iter().map(|v| v.norm_sqr()).sum())
            .collect();
        tree_sum(&per_slice) * self.cell_measure()
    }
}

/// Fixed-order pairwise sum, independent of thread count.
pub fn tree_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        tree_sum(&values[..mid]) + tree_sum(&values[mid..])
    }
}

/// Per-time-slice synthesis of `F_N(·, k/M_t)` by an inverse FFT of length `M_x`.
pub(crate) struct SliceSynth {
    degree: usize,
    mx: usize,
    mt: u64,
    /// `n³ mod M_t` for `n = -N..=N`.
    cube_mod: Vec<u64>,
    roots: Option<Arc<RootTable>>,
    ifft: Arc<dyn Fft<f64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl SliceSynth {
    pub(crate) fn new(degree: usize, mx: usize, mt: usize) -> Result<Self> {
        if mx < 2 * degree + 1 {
            return Err(LabError::Resolution(format!(
                "M_x = {mx} must be >= 2N+1 = {}",
                2 * degree + 1
            )));
        }
        if mt < 2 {
            return Err(LabError::Resolution(format!("M_t = {mt} must be >= 2")));
        }
        let mt64 = mt as u64;
        let d = degree as i64;
        let cube_mod = (-d..=d)
            .map(|n| ((n as i128).pow(3)).rem_euclid(mt64 as i128) as u64)
            .collect();
        let roots = (mt64 <= ROOT_TABLE_LIMIT).then(|| Arc::new(RootTable::new(mt64)));
        let mut planner = FftPlanner::new();
        Ok(SliceSynth {
            degree,
            mx,
            mt: mt64,
            cube_mod,
            roots,
            ifft: planner.plan_fft_inverse(mx),
            fft: planner.plan_fft_forward(mx),
        })
    }

    pub(crate) fn mx(&self) -> usize {
        self.mx
    }

    pub(crate) fn mt(&self) -> usize {
        self.mt as usize
    }

    /// `e^{2πi n³ k / M_t}` for the `i`-th frequency `n = i - N`.
    #[inline]
    pub(crate) fn time_phase(&self, i: usize, k: usize) -> Complex64 {
        let j = if self.mt <= u32::MAX as u64 {
            self.cube_mod[i] * k as u64 % self.mt
        } else {
            (self.cube_mod[i] as u128 * k as u128 % self.mt as u128) as u64
        };
        match &self.roots {
            Some(r) => r.at(j as usize),
            None => cis_turns(j as f64 / self.mt as f64),
        }
    }

    /// Writes `F(x_j, k/M_t)`, `j < M_x`, into `out`.
    pub(crate) fn synth(&self, coeffs: &[Complex64], k: usize, out: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        debug_assert_eq!(out.len(), self.mx);
        out.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        let d = self.degree as i64;
        for (i, &a) in coeffs.iter().enumerate() {
            if a == Complex64::new(0.0, 0.0) {
                continue;
            }
            let n = i as i64 - d;
            let slot = n.rem_euclid(self.mx as i64) as usize;
            out[slot] += a * self.time_phase(i, k);
        }
        scratch.resize(self.ifft.get_inplace_scratch_len().max(self.fft.get_inplace_scratch_len()), Complex64::new(0.0, 0.0));
        self.ifft.process_with_scratch(out, scratch);
    }

    /// Projects a slice of values `g(x_j)` onto `Σ_j g(x_j) e^{-2πi n x_j} e^{-2πi n³ k/M_t}`
    /// for each `n` and adds to `acc`.
    pub(crate) fn analyze_add(&self, values: &mut [Complex64], k: usize, acc: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        scratch.resize(self.ifft.get_inplace_scratch_len().max(self.fft.get_inplace_scratch_len()), Complex64::new(0.0, 0.0));
        self.fft.process_with_scratch(values, scratch);
        let d = self.degree as i64;
        for (i, slot) in acc.iter_mut().enumerate() {
            let n = i as i64 - d;
            let idx = n.rem_euclid(self.mx as i64) as usize;
            *slot += values[idx] * self.time_phase(i, k).conj();
        }
    }

    /// Maps every time slice through `f`, in parallel, returning results in slice order.
    pub(crate) fn map_slices<R, F>(&self, coeffs: &[Complex64], f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize, &mut [Complex64], &mut Vec<Complex64>) -> R + Sync + Send,
    {
        (0..self.mt as usize)
            .into_par_iter()
            .map_init(
                || (vec![Complex64::new(0.0, 0.0); self.mx], Vec::new()),
                |(buf, scratch), k| {
                    self.synth(coeffs, k, buf, scratch);
                    f(k, buf, scratch)
                },
            )
            .collect()
    }
}

/// Samples `F_N` for `seq` on the `M_x × M_t` grid of `𝕋²`.
pub fn sample_extremal(seq: &CoeffSequence, mx: usize, mt: usize) -> Result<SpaceTimeGrid> {
    let cells = mx.checked_mul(mt).unwrap_or(usize::MAX);
    if cells > MAX_GRID_CELLS {
        return Err(LabError::Guard {
            what: "grid cells",
            needed: cells as u128,
            cap: MAX_GRID_CELLS as u128,
        });
    }
    let synth = SliceSynth::new(seq.degree(), mx, mt)?;
    let slices = synth.map_slices(seq.coeffs(), |_, buf, _| buf.to_vec());
    Ok(SpaceTimeGrid {
        mx,
        mt,
        values: slices.concat(),
    })
}

/// Empirical Weyl-bound ratios `|S| / (N^{1/4} q^{1/4})` over random phases.
#[derive(Debug, Clone, PartialEq)]
pub struct WeylReport {
    pub degree: u64,
    pub trials: usize,
    /// Trials whose Dirichlet denominator satisfied `q >= N²`.
    pub included: usize,
    pub max_ratio: f64,
    pub mean_ratio: f64,
    pub argmax_phase: Option<WeylPhase>,
    pub argmax_fraction: Option<Rational>,
}

/// Denominator cap used when approximating the cubic coefficient.
pub fn weyl_q_max(degree: u64) -> u64 {
    degree.saturating_pow(3).min(1 << 32)
}

/// Ratio for one phase, or `None` when the Dirichlet denominator is below `N²`.
pub fn weyl_ratio(degree: u64, phase: WeylPhase) -> Result<Option<(f64, Rational)>> {
    let t = frac(phase.t);
    let r = dirichlet_approx(t, weyl_q_max(degree))?;
    if r.denom() < degree * degree {
        return Ok(None);
    }
    let s = weyl_sum(degree, phase)?.norm();
    let scale = (degree as f64).powf(0.25) * (r.denom() as f64).powf(0.25);
    Ok(Some((s / scale, r)))
}

pub fn weyl_bound_report(degree: u64, trials: usize, seed: u64) -> Result<WeylReport> {
    if trials == 0 {
        return Err(invalid("weyl_bound_report requires at least one trial"));
    }
    if degree == 0 {
        return Err(invalid("weyl_bound_report requires N >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases: Vec<WeylPhase> = (0..trials)
        .map(|_| WeylPhase {
            t: rng.gen(),
            b: rng.gen(),
            c: rng.gen(),
        })
        .collect();
    let ratios: Vec<Option<(f64, Rational)>> = phases
        .par_iter()
        .map(|&p| weyl_ratio(degree, p))
        .collect::<Result<_>>()?;
    let mut included = 0usize;
    let mut sum = Vec::with_capacity(trials);
    let mut best: Option<(f64, usize, Rational)> = None;
    for (i, r) in ratios.iter().enumerate() {
        if let Some((v, frac_t)) = r {
            included += 1;
            sum.push(*v);
            if best.map_or(true, |(b, _, _)| *v > b) {
                best = Some((*v, i, *frac_t));
            }
        }
    }
    Ok(WeylReport {
        degree,
        trials,
        included,
        max_ratio: best.map_or(0.0, |b| b.0),
        mean_ratio: if included == 0 { 0.0 } else { tree_sum(&sum) / included as f64 },
        argmax_phase: best.map(|b| phases[b.1]),
        argmax_fraction: best.map(|b| b.2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_weyl(degree: u64, p: WeylPhase) -> Complex64 {
        (1..=degree as i64)
            .map(|n| {
                // error-free products: a*m = hi + lo exactly
                let exact = |a: f64, m: f64| {
                    let hi = a * m;
                    let lo = a.mul_add(m, -hi);
                    (hi - hi.floor()) + lo
                };
                let nf = n as f64;
                cis_turns(exact(p.t, nf * nf * nf) + exact(p.b, nf * nf) + exact(p.c, nf))
            })
            .sum()
    }

    #[test]
    fn weyl_examples() {
        let zero = WeylPhase::new(0.0, 0.0, 0.0).unwrap();
        let s = weyl_sum(10, zero).unwrap();
        assert!((s - Complex64::new(10.0, 0.0)).norm() < 1e-12);
        let half = WeylPhase::new(0.5, 0.0, 0.0).unwrap();
        assert!(weyl_sum(2, half).unwrap().norm() < 1e-12);
        assert!(weyl_sum(0, zero).is_err());
    }

    #[test]
    fn weyl_matches_naive_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &n in &[1u64, 7, 64, 300] {
            for _ in 0..20 {
                let p = WeylPhase::new(rng.gen(), rng.gen(), rng.gen()).unwrap();
                let a = weyl_sum(n, p).unwrap();
                let b = naive_weyl(n, p);
                assert!((a - b).norm() <= 1e-10 * n as f64, "N={n}");
                assert!(a.norm() <= n as f64 * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn kernel_examples() {
        for n in [1u64, 5, 40] {
            let k0 = eval_kernel(n, 0.0, 0.0).unwrap();
            assert!((k0.re - (2 * n + 1) as f64).abs() <= 1e-9 * (2 * n + 1) as f64);
            let kh = eval_kernel(n, 0.5, 0.5).unwrap();
            assert!((kh.re - (2 * n + 1) as f64).abs() <= 1e-9 * (2 * n + 1) as f64);
            let a = eval_kernel(n, 0.123, 0.777).unwrap();
            let b = eval_kernel(n, -0.123, -0.777).unwrap();
            assert!((a - b.conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn delta_sequence_samples_to_one() {
        let g = sample_extremal(&CoeffSequence::delta(3).unwrap(), 8, 5).unwrap();
        assert!(g.values().iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-14));
    }

    #[test]
    fn ones_sequence_matches_kernel() {
        let n = 4usize;
        let seq = CoeffSequence::ones(n).unwrap();
        let (mx, mt) = (12, 70);
        let g = sample_extremal(&seq, mx, mt).unwrap();
        assert!((g.get(0, 0).re - 9.0).abs() < 1e-12);
        for k in (0..mt).step_by(7) {
            for j in 0..mx {
                let kv = eval_kernel(n as u64, j as f64 / mx as f64, k as f64 / mt as f64).unwrap();
                assert!((g.get(j, k) - kv).norm() <= 1e-9 * 9.0);
            }
        }
    }

    #[test]
    fn resolution_guard() {
        let seq = CoeffSequence::uniform(4).unwrap();
        assert!(matches!(sample_extremal(&seq, 8, 10), Err(LabError::Resolution(_))));
        assert!(matches!(sample_extremal(&seq, 9, 1), Err(LabError::Resolution(_))));
    }

    #[test]
    fn parseval_on_exact_grids() {
        for &n in &[4usize, 8, 16] {
            let mt = 2 * n.pow(3) + 1;
            let mx = 2 * n + 1;
            for seed in 0..50u64 {
                let seq = CoeffSequence::random_unit(n, seed).unwrap();
                assert!(seq.is_unit());
                let g = sample_extremal(&seq, mx, mt).unwrap();
                assert!((g.mean_abs_sq() - 1.0).abs() < 1e-9, "N={n} seed={seed}");
            }
        }
    }

    #[test]
    fn weyl_report_deterministic_and_gated() {
        let a = weyl_bound_report(16, 500, 7).unwrap();
        let b = weyl_bound_report(16, 500, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.max_ratio.is_finite() && a.max_ratio > 0.0);
        assert!(a.included <= a.trials);
        // t = 1/5 has denominator 5 < N² = 256 and is excluded
        let p = WeylPhase::new(0.2, 0.3, 0.1).unwrap();
        assert_eq!(weyl_ratio(16, p).unwrap(), None);
    }
}
