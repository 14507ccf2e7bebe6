//! The periodic weight `Φ(t) = Σ_{Q<=q<=5Q} Σ_{(a,q)=1} φ((t - a/q) q²)` and the
//! splitting `K_N = K_1 + K_2` with `K_1 = K_N Φ / Φ̂(0)`.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::{Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::arith::{ArithTable, FareySystem, Rational};
use crate::error::{invalid, LabError, Result};
use crate::expsum::eval_kernel;
use crate::fit::spread;
use crate::phase::{cis_turns, frac};
use crate::quad::integrate;

/// Left end, centre and half-width of the bump support `[1/200, 1/100]`.
pub const BUMP_LEFT: f64 = 1.0 / 200.0;
pub const BUMP_RIGHT: f64 = 1.0 / 100.0;
const CENTRE: f64 = 3.0 / 400.0;
const HALF_WIDTH: f64 = 1.0 / 400.0;

const MOMENTS: usize = 16;
/// Largest `|ω|` handled by the moment series of `ĝ`.
const SERIES_LIMIT: f64 = 1.0;
/// Largest transform length used by [`BumpProfile::fourier_band`].
pub const MAX_BAND_FFT: usize = 1 << 24;

/// `φ(x) = g((x - 3/400)·400)` with `g(u) = exp(-1/(1-u²))` on `(-1, 1)`.
#[derive(Debug)]
pub struct BumpProfile {
    /// `∫ u^{2m} g(u) du`.
    moments: [f64; MOMENTS],
    cache: Mutex<HashMap<u64, f64>>,
}

/// The standard bump `g(u)`, zero for `|u| >= 1`.
pub fn bump_unit(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / ((1.0 - u) * (1.0 + u))).exp()
    }
}

impl BumpProfile {
    /// The shared profile; moments are computed on first use.
    pub fn standard() -> &'static BumpProfile {
        static PROFILE: OnceLock<BumpProfile> = OnceLock::new();
        PROFILE.get_or_init(|| {
            let mut moments = [0.0; MOMENTS];
            for (m, slot) in moments.iter_mut().enumerate() {
                *slot = integrate(|u| u.powi(2 * m as i32) * bump_unit(u), -1.0, 1.0, 4, 1e-18);
            }
            BumpProfile {
                moments,
                cache: Mutex::new(HashMap::new()),
            }
        })
    }

    pub fn value(&self, x: f64) -> f64 {
        bump_unit((x - CENTRE) / HALF_WIDTH)
    }

    /// `∫ g(u) du`.
    pub fn mass(&self) -> f64 {
        self.moments[0]
    }

    /// `ĝ(ω) = ∫ g(u) cos(ωu) du`, real and even.
    pub fn unit_transform(&self, omega: f64) -> f64 {
        let w = omega.abs();
        if w <= SERIES_LIMIT {
            let w2 = w * w;
            let mut term = 1.0;
            let mut sum = 0.0;
            for (m, mu) in self.moments.iter().enumerate() {
                sum += term * mu;
                term *= -w2 / (((2 * m + 1) * (2 * m + 2)) as f64);
            }
            return sum;
        }
        let key = w.to_bits();
        if let Some(&v) = self.cache.lock().expect("cache lock").get(&key) {
            return v;
        }
        let panels = (w / 2.0).ceil() as usize + 2;
        let v = integrate(|u| bump_unit(u) * (w * u).cos(), -1.0, 1.0, panels, 1e-15);
        self.cache.lock().expect("cache lock").insert(key, v);
        v
    }

    /// `ℱφ(ξ) = ∫ φ(x) e^{-2πixξ} dx = h e^{-2πi(3/400)ξ} ĝ(2πhξ)`, `h = 1/400`.
    pub fn fourier(&self, xi: f64) -> Complex64 {
        HALF_WIDTH * self.unit_transform(TAU * HALF_WIDTH * xi) * cis_turns(-frac(CENTRE * xi))
    }

    /// `ℱφ(k/q²)` with the phase reduced exactly.
    pub fn fourier_ratio(&self, k: i64, q: u64) -> Complex64 {
        let den = 400 * (q as i128) * (q as i128);
        let num = (3 * k as i128).rem_euclid(den);
        let xi = k as f64 / (q as f64 * q as f64);
        HALF_WIDTH * self.unit_transform(TAU * HALF_WIDTH * xi) * cis_turns(-(num as f64 / den as f64))
    }

    /// `ℱφ(k/q²)` for `k = 0..=band` by a trapezoid rule evaluated with one FFT.
    pub fn fourier_band(&self, q: u64, band: usize) -> Result<Vec<Complex64>> {
        if q == 0 {
            return Err(invalid("fourier_band requires q >= 1"));
        }
        let q2 = (q * q) as usize;
        // keeps the first alias at |ω| >= 2π·0.75·2^17/400
        let len = (4 * band.max(1)).max(q2 << 17).next_power_of_two();
        if len > MAX_BAND_FFT {
            return Err(LabError::Guard {
                what: "band transform length",
                needed: len as u128,
                cap: MAX_BAND_FFT as u128,
            });
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        let lo = (BUMP_LEFT * len as f64 / q2 as f64).floor() as usize;
        let hi = ((BUMP_RIGHT * len as f64 / q2 as f64).ceil() as usize).min(len - 1);
        for (j, slot) in buf.iter_mut().enumerate().take(hi + 1).skip(lo) {
            let x = (q2 * j) as f64 / len as f64;
            *slot = Complex64::new(self.value(x), 0.0);
        }
        FftPlanner::new().plan_fft_forward(len).process(&mut buf);
        let scale = q2 as f64 / len as f64;
        Ok(buf[..=band].iter().map(|v| v * scale).collect())
    }
}

/// `Φ` for a scale `Q`, with the Farey system it sums over.
#[derive(Debug)]
pub struct PhiFunction {
    farey: FareySystem,
    values: Vec<f64>,
    table: ArithTable,
    profile: &'static BumpProfile,
}

impl PhiFunction {
    pub fn new(scale: u64) -> Result<Self> {
        let farey = FareySystem::new(scale)?;
        let values = farey.fractions().iter().map(Rational::value).collect();
        Ok(PhiFunction {
            table: ArithTable::new(5 * scale as usize),
            farey,
            values,
            profile: BumpProfile::standard(),
        })
    }

    pub fn scale(&self) -> u64 {
        self.farey.scale()
    }

    pub fn farey(&self) -> &FareySystem {
        &self.farey
    }

    pub fn profile(&self) -> &'static BumpProfile {
        self.profile
    }

    /// `Φ(t)` on the circle; at most one support interval covers any `t`.
    pub fn eval(&self, t: f64) -> f64 {
        let t = frac(t);
        let idx = self.values.partition_point(|&v| v <= t);
        let (r, shift) = if idx == 0 {
            (self.farey.fractions()[self.values.len() - 1], 1)
        } else {
            (self.farey.fractions()[idx - 1], 0)
        };
        let q = r.denom() as f64;
        let a = (r.numer() - shift * r.denom() as i64) as f64;
        let x = t.mul_add(q, -a) * q;
        self.profile.value(x)
    }

    /// `Φ̂(0) = ℱφ(0) Σ_q φ(q)/q²`.
    pub fn fourier_zero(&self) -> f64 {
        let q0 = self.scale();
        let s: f64 = (q0..=5 * q0)
            .map(|q| self.table.phi(q) as f64 / (q as f64 * q as f64))
            .sum();
        HALF_WIDTH * self.profile.mass() * s
    }

    /// Checks exactly that consecutive support intervals
    /// `[a/q + 1/(200q²), a/q + 1/(100q²)]`, including the wrap, do not meet.
    pub fn supports_disjoint(&self) -> bool {
        let fr = self.farey.fractions();
        let before = |a: i128, q: i128, b: i128, p: i128| {
            // a/q + 1/(100q²) < b/p + 1/(200p²), scaled by 200q²p²
            200 * a * q * p * p + 2 * p * p < 200 * b * p * q * q + q * q
        };
        let ok = fr.windows(2).all(|w| {
            before(w[0].numer() as i128, w[0].denom() as i128, w[1].numer() as i128, w[1].denom() as i128)
        });
        let (last, first) = (fr[fr.len() - 1], fr[0]);
        ok && before(
            last.numer() as i128,
            last.denom() as i128,
            first.numer() as i128 + first.denom() as i128,
            first.denom() as i128,
        )
    }
}

/// `Φ̂(k) = Σ_{Q<=q<=5Q} c_q(k) ℱφ(k/q²) / q²`.
pub fn phi_fourier(phi: &PhiFunction, k: i64) -> Complex64 {
    let q0 = phi.scale();
    let mut acc = Complex64::new(0.0, 0.0);
    for q in q0..=5 * q0 {
        let c = phi.table.ramanujan(q, k);
        if c != 0 {
            acc += phi.profile.fourier_ratio(k, q) * (c as f64 / (q as f64 * q as f64));
        }
    }
    acc
}

/// `Φ̂(k)` for `k = 0..=band` from banded transforms of `φ`.
pub fn phi_fourier_band(phi: &PhiFunction, band: usize) -> Result<Vec<Complex64>> {
    let q0 = phi.scale();
    let mut acc = vec![Complex64::new(0.0, 0.0); band + 1];
    for q in q0..=5 * q0 {
        let f = phi.profile.fourier_band(q, band)?;
        let w = 1.0 / (q as f64 * q as f64);
        acc.par_iter_mut().enumerate().for_each(|(k, slot)| {
            let c = phi.table.ramanujan(q, k as i64);
            if c != 0 {
                *slot += f[k] * (c as f64 * w);
            }
        });
    }
    Ok(acc)
}

/// `K_N = K_1 + K_2` at scale `Q`, with `K̂_2` tabulated for `|n_1| <= N`, `|n_2| <= N³`.
#[derive(Debug)]
pub struct KernelDecomposition {
    degree: u64,
    phi: PhiFunction,
    phi_hat0: f64,
    /// `Φ̂(k)` for `k = -2N³..=2N³`.
    spectrum: Vec<Complex64>,
}

impl KernelDecomposition {
    fn reach(&self) -> i64 {
        2 * (self.degree as i64).pow(3)
    }

    pub fn degree(&self) -> u64 {
        self.degree
    }

    pub fn scale(&self) -> u64 {
        self.phi.scale()
    }

    pub fn phi(&self) -> &PhiFunction {
        &self.phi
    }

    pub fn phi_hat0(&self) -> f64 {
        self.phi_hat0
    }

    /// `Φ̂(k)`; tabulated for `|k| <= 2N³`.
    pub fn phi_hat(&self, k: i64) -> Complex64 {
        let r = self.reach();
        if k.abs() <= r {
            self.spectrum[(k + r) as usize]
        } else {
            phi_fourier(&self.phi, k)
        }
    }

    /// `K_1(x, t) = K_N(x, t) Φ(t) / Φ̂(0)`, real valued.
    pub fn k1(&self, x: f64, t: f64) -> Result<f64> {
        let w = self.phi.eval(t);
        if w == 0.0 {
            return Ok(0.0);
        }
        Ok(eval_kernel(self.degree, x, t)?.re * w / self.phi_hat0)
    }

    /// `K̂_2(n_1, n_2)`: zero on the curve `n_2 = n_1³` and for `|n_1| > N`,
    /// `-Φ̂(n_2 - n_1³)/Φ̂(0)` otherwise.
    pub fn k2_coeff(&self, n1: i64, n2: i64) -> Complex64 {
        if n1.unsigned_abs() > self.degree {
            return Complex64::new(0.0, 0.0);
        }
        let k = n2 - n1.pow(3);
        if k == 0 {
            return Complex64::new(0.0, 0.0);
        }
        -self.phi_hat(k) / self.phi_hat0
    }

    /// `max |K̂_2|` over the table and the offset `n_2 - n_1³` attaining it.
    pub fn k2_max(&self) -> (f64, i64) {
        let r = self.reach();
        let (k, v) = (1..=r)
            .map(|k| (k, self.spectrum[(k + r) as usize].norm()))
            .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        (v / self.phi_hat0, k)
    }

    /// `max |K_1|` over `x ∈ {j/L}` and the bump peaks `t = a/q + 3/(400q²)`,
    /// with `L = 8N`; `K_1` vanishes off the supports, and `K_N` is
    /// essentially constant across each support since `1/(200q²) << N^{-3}`.
    pub fn k1_sup_grid(&self) -> Result<(f64, Rational)> {
        let d = self.degree as i64;
        let len = 8 * self.degree as usize;
        let fft = FftPlanner::new().plan_fft_inverse(len);
        let best = self
            .phi
            .farey
            .fractions()
            .par_iter()
            .map_init(
                || (vec![Complex64::new(0.0, 0.0); len], vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()]),
                |(buf, scratch), &r| {
                    let q = r.denom() as i128;
                    let den = 400 * q * q;
                    let num = 400 * r.numer() as i128 * q + 3;
                    buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                    for n in -d..=d {
                        let turns = ((n as i128).pow(3) * num).rem_euclid(den);
                        buf[n.rem_euclid(len as i64) as usize] += cis_turns(turns as f64 / den as f64);
                    }
                    fft.process_with_scratch(buf, scratch);
                    let peak = buf.iter().map(|v| v.norm()).fold(0.0, f64::max);
                    let t = r.value() + 3.0 / (400.0 * (q * q) as f64);
                    (peak * self.phi.eval(t), r)
                },
            )
            .reduce(
                || (f64::NEG_INFINITY, Rational::new(0, 1).expect("0/1")),
                |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
            );
        Ok((best.0 / self.phi_hat0, best.1))
    }

    /// Largest `|K_1 + K_2 - K_N| / (2N+1)` over `points`, with `K_2` synthesized
    /// from `K̂_2` truncated to `0 < |n_2 - n_1³| <= band`.
    pub fn synthesis_error(&self, points: &[(f64, f64)], band: usize) -> Result<f64> {
        let spec = phi_fourier_band(&self.phi, band)?;
        let d = self.degree as i64;
        let mut worst: f64 = 0.0;
        for &(x, t) in points {
            // Σ_{0<|k|<=B} Φ̂(k) e(kt), real since Φ̂(-k) = conj Φ̂(k)
            let tail: f64 = 2.0
                * spec[1..]
                    .par_iter()
                    .enumerate()
                    .map(|(i, c)| (c * cis_turns(crate::phase::frac_mul(i as i64 + 1, t))).re)
                    .sum::<f64>();
            let mut k2 = Complex64::new(0.0, 0.0);
            for n1 in -d..=d {
                let base = cis_turns(frac(crate::phase::frac_mul(n1, x) + crate::phase::frac_mul(n1.pow(3), t)));
                k2 += base * (-tail / self.phi_hat0);
            }
            let kn = eval_kernel(self.degree, x, t)?;
            let k1 = self.k1(x, t)?;
            let err = (Complex64::new(k1, 0.0) + k2 - kn).norm() / (2 * d + 1) as f64;
            worst = worst.max(err);
        }
        Ok(worst)
    }
}

/// Builds the decomposition for `N² <= Q <= N³`.
pub fn decompose_kernel(degree: u64, scale: u64) -> Result<KernelDecomposition> {
    if degree == 0 {
        return Err(invalid("N must be >= 1"));
    }
    let lo = degree.checked_pow(2).ok_or_else(|| invalid("N too large"))?;
    let hi = degree.checked_pow(3).ok_or_else(|| invalid("N too large"))?;
    if scale < lo || scale > hi {
        return Err(invalid(format!("Q = {scale} outside [N², N³] = [{lo}, {hi}]")));
    }
    let phi = PhiFunction::new(scale)?;
    let phi_hat0 = phi.fourier_zero();
    let reach = 2 * (degree as i64).pow(3);
    let positive: Vec<Complex64> = (0..=reach).into_par_iter().map(|k| phi_fourier(&phi, k)).collect();
    let spectrum = (-reach..=reach)
        .map(|k| if k < 0 { positive[(-k) as usize].conj() } else { positive[k as usize] })
        .collect();
    Ok(KernelDecomposition {
        degree,
        phi,
        phi_hat0,
        spectrum,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prop1Row {
    pub degree: u64,
    pub scale: u64,
    pub phi_hat0: f64,
    pub k1_sup: f64,
    pub k1_argmax: Rational,
    /// `sup-grid |K_1| / (N^{1/4} Q^{1/4})`.
    pub ratio1: f64,
    pub k2_max: f64,
    /// `Q · max |K̂_2|`.
    pub ratio2: f64,
    /// `ratio2 / log(2+N)`.
    pub ratio2_log: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prop1Report {
    pub rows: Vec<Prop1Row>,
    pub spread1: f64,
    pub spread2: f64,
    pub spread2_log: f64,
}

/// Largest spread across `N` tolerated for either ratio sequence.
pub const PROP1_SPREAD: f64 = 4.0;

impl Prop1Report {
    pub fn passes(&self) -> bool {
        self.spread1 < PROP1_SPREAD && self.spread2 < PROP1_SPREAD && self.spread2_log < PROP1_SPREAD
    }
}

pub fn verify_prop1(degrees: &[u64], scale_rule: impl Fn(u64) -> u64) -> Result<Prop1Report> {
    let mut rows = Vec::with_capacity(degrees.len());
    for &n in degrees {
        let q = scale_rule(n);
        let dk = decompose_kernel(n, q)?;
        let (k1_sup, k1_argmax) = dk.k1_sup_grid()?;
        let (k2_max, _) = dk.k2_max();
        let ratio1 = k1_sup / ((n as f64).powf(0.25) * (q as f64).powf(0.25));
        let ratio2 = q as f64 * k2_max;
        rows.push(Prop1Row {
            degree: n,
            scale: q,
            phi_hat0: dk.phi_hat0,
            k1_sup,
            k1_argmax,
            ratio1,
            k2_max,
            ratio2,
            ratio2_log: ratio2 / (2.0 + n as f64).ln(),
        });
    }
    let col = |f: fn(&Prop1Row) -> f64| spread(&rows.iter().map(f).collect::<Vec<_>>());
    Ok(Prop1Report {
        spread1: col(|r| r.ratio1),
        spread2: col(|r| r.ratio2),
        spread2_log: col(|r| r.ratio2_log),
        rows,
    })
}

#[cfg(test)]
fn unit_transform_reference(omega: f64) -> f64 {
    integrate(|u| bump_unit(u) * (omega * u).cos(), -1.0, 1.0, 8 + (omega.abs() / std::f64::consts::PI) as usize, 1e-16)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_support_and_positivity() {
        let p = BumpProfile::standard();
        assert_eq!(p.value(0.0), 0.0);
        assert_eq!(p.value(BUMP_LEFT), 0.0);
        assert_eq!(p.value(BUMP_RIGHT), 0.0);
        assert_eq!(p.value(0.02), 0.0);
        for i in 1..100 {
            let x = BUMP_LEFT + (BUMP_RIGHT - BUMP_LEFT) * i as f64 / 100.0;
            assert!(p.value(x) > 0.0);
        }
        assert!((p.value(CENTRE) - (-1f64).exp()).abs() < 1e-16);
        // ∫ exp(-1/(1-u²)) du over (-1, 1)
        assert!((p.mass() - 0.443_993_816_168_079_4).abs() < 1e-14, "{}", p.mass());
        // ∫ exp(-1/(1-u²)) cos(10u) du
        assert!((p.unit_transform(10.0) - 0.014_623_086_655_132_709).abs() < 1e-14);
    }

    #[test]
    fn transform_paths_agree() {
        let p = BumpProfile::standard();
        for &w in &[0.0, 0.1, 0.5, 0.999, 1.0, 1.5, 3.0, 10.0, 40.0] {
            let a = p.unit_transform(w);
            let b = unit_transform_reference(w);
            assert!((a - b).abs() < 1e-14, "ω={w}: {a} vs {b}");
        }
        // both sides of the series cutoff
        let below = p.unit_transform(SERIES_LIMIT);
        let above = p.unit_transform(SERIES_LIMIT + 1e-12);
        assert!((below - above).abs() < 1e-12);
    }

    #[test]
    fn fourier_matches_direct_integral() {
        let p = BumpProfile::standard();
        for &xi in &[0.0, 1.0, 17.5, -40.0, 300.0] {
            let re = integrate(|x| p.value(x) * (TAU * x * xi).cos(), BUMP_LEFT, BUMP_RIGHT, 16, 1e-18);
            let im = -integrate(|x| p.value(x) * (TAU * x * xi).sin(), BUMP_LEFT, BUMP_RIGHT, 16, 1e-18);
            let f = p.fourier(xi);
            assert!((f - Complex64::new(re, im)).norm() < 1e-13, "ξ={xi}");
        }
        let r = p.fourier_ratio(-7, 3);
        assert!((r - p.fourier(-7.0 / 9.0)).norm() < 1e-15);
    }

    #[test]
    fn band_transform_matches_pointwise() {
        let p = BumpProfile::standard();
        for q in [1u64, 2, 5] {
            let band = p.fourier_band(q, 2000).unwrap();
            for k in [0usize, 1, 13, 400, 1999] {
                let want = p.fourier_ratio(k as i64, q);
                assert!((band[k] - want).norm() < 1e-14, "q={q} k={k}");
            }
        }
    }

    #[test]
    fn eval_phi_examples() {
        let phi = PhiFunction::new(4).unwrap();
        assert_eq!(phi.eval(0.0), 0.0);
        let peak = (-1f64).exp();
        for r in phi.farey().fractions().iter().step_by(7) {
            let q = r.denom() as f64;
            let t = r.value() + 3.0 / (400.0 * q * q);
            assert!((phi.eval(t) - peak).abs() < 1e-9, "{r}");
            assert_eq!(phi.eval(r.value() + 1.0 / (90.0 * q * q)), 0.0);
        }
        for i in 0..10_000 {
            assert!(phi.eval(i as f64 / 10_000.0 + 1e-7) >= 0.0);
        }
    }

    #[test]
    fn eval_phi_wraps_at_one() {
        let phi = PhiFunction::new(1).unwrap();
        let peak = (-1f64).exp();
        assert!((phi.eval(3.0 / 400.0) - peak).abs() < 1e-12);
        assert!((phi.eval(1.0 + 3.0 / 400.0) - peak).abs() < 1e-12);
    }

    #[test]
    fn supports_disjoint_up_to_64() {
        for q in 1..=64u64 {
            assert!(PhiFunction::new(q).unwrap().supports_disjoint(), "Q={q}");
        }
    }

    #[test]
    fn phi_hat_zero_and_conjugate_symmetry() {
        let phi = PhiFunction::new(4).unwrap();
        let z = phi_fourier(&phi, 0);
        assert!(z.im.abs() < 1e-18);
        assert!((z.re - phi.fourier_zero()).abs() < 1e-15);
        assert!(z.re > 0.0);
        for k in 1..40 {
            assert!((phi_fourier(&phi, -k) - phi_fourier(&phi, k).conj()).norm() < 1e-16);
        }
    }

    #[test]
    fn phi_hat_zero_nearly_constant_in_q() {
        let vals: Vec<f64> = [4u64, 8, 16, 32]
            .iter()
            .map(|&q| PhiFunction::new(q).unwrap().fourier_zero())
            .collect();
        assert!(spread(&vals) < 1.2, "{vals:?}");
    }

    /// `∫Φ(t) e^{-2πikt} dt` by a trapezoid rule on `2^26` points, touching only
    /// grid points inside the supports.
    fn direct_phi_hat(phi: &PhiFunction, ks: &[i64]) -> Vec<Complex64> {
        let m: u64 = 1 << 26;
        let mut acc = vec![Complex64::new(0.0, 0.0); ks.len()];
        for r in phi.farey().fractions() {
            let q2 = (r.denom() * r.denom()) as f64;
            let lo = ((r.value() + BUMP_LEFT / q2) * m as f64).floor() as u64;
            let hi = ((r.value() + BUMP_RIGHT / q2) * m as f64).ceil() as u64;
            for j in lo..=hi {
                let v = phi.eval(j as f64 / m as f64);
                if v == 0.0 {
                    continue;
                }
                for (slot, &k) in acc.iter_mut().zip(ks) {
                    let turns = ((k as i128 * j as i128).rem_euclid(m as i128)) as f64 / m as f64;
                    *slot += v * cis_turns(-turns);
                }
            }
        }
        acc.iter().map(|v| v / m as f64).collect()
    }

    #[test]
    fn phi_hat_matches_direct_quadrature() {
        let phi = PhiFunction::new(4).unwrap();
        let ks: Vec<i64> = (-50..=50).collect();
        let direct = direct_phi_hat(&phi, &ks);
        for (k, d) in ks.iter().zip(&direct) {
            let f = phi_fourier(&phi, *k);
            assert!((f - d).norm() < 1e-8, "k={k}: {f} vs {d}");
        }
    }

    #[test]
    fn band_spectrum_matches_pointwise() {
        let phi = PhiFunction::new(1).unwrap();
        let band = phi_fourier_band(&phi, 5000).unwrap();
        for k in [0usize, 1, 2, 77, 4999] {
            assert!((band[k] - phi_fourier(&phi, k as i64)).norm() < 1e-14, "k={k}");
        }
    }

    #[test]
    fn decompose_rejects_out_of_range_scale() {
        assert!(decompose_kernel(4, 15).is_err());
        assert!(decompose_kernel(4, 65).is_err());
        assert!(decompose_kernel(0, 1).is_err());
        assert!(decompose_kernel(4, 16).is_ok());
    }

    #[test]
    fn k2_vanishes_on_curve() {
        let dk = decompose_kernel(8, 64).unwrap();
        for n in -8i64..=8 {
            assert_eq!(dk.k2_coeff(n, n.pow(3)), Complex64::new(0.0, 0.0));
            let off = dk.k2_coeff(n, n.pow(3) + 1);
            assert!((off + dk.phi_hat(1) / dk.phi_hat0()).norm() < 1e-18);
        }
        assert_eq!(dk.k2_coeff(9, 0), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn synthesis_reproduces_kernel() {
        let dk = decompose_kernel(1, 1).unwrap();
        let pts = [(0.0, 0.0), (0.3, 3.0 / 400.0), (0.71, 0.5 + 3.0 / 1600.0), (0.125, 0.2 + 0.0003), (0.9, 0.61)];
        let err = dk.synthesis_error(&pts, 1 << 20).unwrap();
        assert!(err < 1e-8, "synthesis error {err}");
    }

    #[test]
    fn k1_sup_reported_for_n8() {
        let dk = decompose_kernel(8, 64).unwrap();
        let (sup, arg) = dk.k1_sup_grid().unwrap();
        assert!(sup > 0.0 && sup.is_finite());
        assert!(arg.denom() >= 64 && arg.denom() <= 320);
        // sampled directly at the reported peak
        let q = arg.denom() as f64;
        let t = arg.value() + 3.0 / (400.0 * q * q);
        let direct = (0..64).map(|j| dk.k1(j as f64 / 64.0, t).unwrap().abs()).fold(0.0, f64::max);
        assert!((direct - sup).abs() <= 1e-9 * sup);
    }

    #[test]
    fn prop1_single_degree_is_vacuous() {
        let rep = verify_prop1(&[4], |n| n * n).unwrap();
        assert_eq!(rep.rows.len(), 1);
        assert_eq!(rep.spread1, 1.0);
        assert!(rep.passes());
    }
}
