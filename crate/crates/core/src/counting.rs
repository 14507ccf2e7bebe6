//! Exact counts of `S(N;b)`, the number of solutions of
//! `n_1+…+n_b = m_1+…+m_b`, `n_1³+…+n_b³ = m_1³+…+m_b³` with all entries in
//! `[-N, N]`. Equivalently `S(N;b) = Σ_key r_b(key)²` where `r_b` counts
//! `b`-tuples by their `(Σn, Σn³)` key.

use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{invalid, LabError, Result};
use crate::expsum::eval_kernel;
use crate::fit::{loglog_fit, LogLogFit};

/// Largest tuple count the brute-force route will enumerate.
pub const BRUTE_FORCE_GUARD: u128 = 1_000_000_000;

/// Default memory cap for counters, expressed in counter entries
/// (8 GiB at 32 bytes per entry).
pub const DEFAULT_ENTRY_CAP: u128 = (8u128 << 30) / 32;

/// `(Σn, Σn³)` packed as `s·2^64 + c`; orders lexicographically by `(s, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Key(i128);

impl Key {
    pub fn new(s: i64, c: i64) -> Self {
        Key(((s as i128) << 64) + c as i128)
    }

    pub fn sum(self) -> i64 {
        ((self.0 + (1i128 << 63)) >> 64) as i64
    }

    pub fn cubes(self) -> i64 {
        (self.0 - ((self.sum() as i128) << 64)) as i64
    }

    pub fn neg(self) -> Self {
        Key::new(-self.sum(), -self.cubes())
    }
}

/// Sparse representation function `(Σn, Σn³) → #tuples`.
#[derive(Debug, Clone, PartialEq)]
pub struct RepCounter {
    degree: u64,
    arity: u32,
    entries: HashMap<Key, u64>,
}

fn cube(n: i64) -> i64 {
    n * n * n
}

impl RepCounter {
    /// Counter of the empty tuple: `{(0,0): 1}`.
    pub fn empty(degree: u64) -> Self {
        let mut entries = HashMap::new();
        entries.insert(Key::new(0, 0), 1);
        RepCounter {
            degree,
            arity: 0,
            entries,
        }
    }

    /// Counter of single entries `n ∈ [-N, N]`.
    pub fn single(degree: u64) -> Self {
        let d = degree as i64;
        let entries = (-d..=d).map(|n| (Key::new(n, cube(n)), 1)).collect();
        RepCounter {
            degree,
            arity: 1,
            entries,
        }
    }

    /// Counter for `b`-tuples built by repeated convolution with [`RepCounter::single`].
    pub fn for_arity(degree: u64, arity: u32, entry_cap: u128) -> Result<Self> {
        let bound = counter_size_bound(degree, arity);
        if bound > entry_cap {
            return Err(LabError::Guard {
                what: "counter entries",
                needed: bound,
                cap: entry_cap,
            });
        }
        let single = Self::single(degree);
        let mut acc = Self::empty(degree);
        for _ in 0..arity {
            acc = acc.convolve(&single);
            let expected = (2 * degree as u128 + 1).pow(acc.arity);
            if acc.total_mass() != expected {
                return Err(LabError::Degenerate(format!(
                    "mass conservation failed at arity {}: {} != {expected}",
                    acc.arity,
                    acc.total_mass()
                )));
            }
        }
        Ok(acc)
    }

    /// Direct enumeration of all `(2N+1)^b` tuples, partitioned by the first coordinate.
    pub fn enumerate(degree: u64, arity: u32) -> Result<Self> {
        let tuples = (2 * degree as u128 + 1).pow(arity);
        if tuples > BRUTE_FORCE_GUARD {
            return Err(LabError::Guard {
                what: "brute-force tuples",
                needed: tuples,
                cap: BRUTE_FORCE_GUARD,
            });
        }
        if arity == 0 {
            return Ok(Self::empty(degree));
        }
        let d = degree as i64;
        let partials: Vec<HashMap<Key, u64>> = (-d..=d)
            .into_par_iter()
            .map(|lead| {
                let mut local = HashMap::new();
                let rest = arity as usize - 1;
                let mut digits = vec![-d; rest];
                loop {
                    let s = lead + digits.iter().sum::<i64>();
                    let c = cube(lead) + digits.iter().map(|&n| cube(n)).sum::<i64>();
                    *local.entry(Key::new(s, c)).or_insert(0) += 1;
                    // odometer increment
                    let mut i = 0;
                    loop {
                        if i == rest {
                            return local;
                        }
                        if digits[i] < d {
                            digits[i] += 1;
                            break;
                        }
                        digits[i] = -d;
                        i += 1;
                    }
                }
            })
            .collect();
        let mut entries = HashMap::new();
        for part in partials {
            for (k, v) in part {
                *entries.entry(k).or_insert(0) += v;
            }
        }
        Ok(RepCounter {
            degree,
            arity,
            entries,
        })
    }

    pub fn degree(&self) -> u64 {
        self.degree
    }

    pub fn arity(&self) -> u32 {
        self.arity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, s: i64, c: i64) -> u64 {
        self.entries.get(&Key::new(s, c)).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Key, u64)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }

    pub fn total_mass(&self) -> u128 {
        self.entries.values().map(|&v| v as u128).sum()
    }

    pub fn sum_of_squares(&self) -> u128 {
        self.entries.values().map(|&v| (v as u128) * (v as u128)).sum()
    }

    /// `count(s, c) = count(-s, -c)` for every key.
    pub fn is_symmetric(&self) -> bool {
        self.entries
            .iter()
            .all(|(k, v)| self.entries.get(&k.neg()) == Some(v))
    }

    /// Keys stay within `|s| <= bN`, `|c| <= bN³`.
    pub fn keys_in_range(&self) -> bool {
        let b = self.arity as i64;
        let d = self.degree as i64;
        self.entries
            .keys()
            .all(|k| k.sum().abs() <= b * d && k.cubes().abs() <= b * cube(d))
    }

    /// Sparse convolution: the counter of concatenated tuples.
    pub fn convolve(&self, other: &RepCounter) -> RepCounter {
        assert_eq!(self.degree, other.degree);
        let mut entries = HashMap::with_capacity(self.entries.len().max(other.entries.len()));
        for (ka, va) in &self.entries {
            for (kb, vb) in &other.entries {
                let k = Key::new(ka.sum() + kb.sum(), ka.cubes() + kb.cubes());
                *entries.entry(k).or_insert(0) += va * vb;
            }
        }
        RepCounter {
            degree: self.degree,
            arity: self.arity + other.arity,
            entries,
        }
    }

    /// Entries grouped by `s`, each group sorted by `c`.
    fn by_sum(&self) -> BTreeMap<i64, Vec<(i64, u64)>> {
        let mut groups: BTreeMap<i64, Vec<(i64, u64)>> = BTreeMap::new();
        for (k, v) in &self.entries {
            groups.entry(k.sum()).or_default().push((k.cubes(), *v));
        }
        for g in groups.values_mut() {
            g.sort_unstable();
        }
        groups
    }
}

/// Upper bound on the number of distinct keys for `b`-tuples.
pub fn counter_size_bound(degree: u64, arity: u32) -> u128 {
    let b = arity as u128;
    let d = degree as u128;
    let tuples = (2 * d + 1).saturating_pow(arity);
    let box_keys = (2 * b * d + 1).saturating_mul(2 * b * d * d * d + 1);
    tuples.min(box_keys)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountMethod {
    BruteForce,
    MeetInMiddle,
}

impl CountMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            CountMethod::BruteForce => "brute",
            CountMethod::MeetInMiddle => "mim",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountResult {
    pub degree: u64,
    pub arity: u32,
    pub value: u128,
    pub method: CountMethod,
    pub elapsed: Duration,
}

impl CountResult {
    /// Number of diagonal solutions `(2N+1)^b`, a lower bound for the count.
    pub fn diagonal(&self) -> u128 {
        (2 * self.degree as u128 + 1).pow(self.arity)
    }
}

fn check_args(degree: u64, arity: u32) -> Result<()> {
    if degree == 0 {
        return Err(invalid("N must be >= 1"));
    }
    if arity == 0 {
        return Err(invalid("b must be >= 1"));
    }
    Ok(())
}

/// `S(N;b)` by enumerating every `b`-tuple.
pub fn count_bruteforce(degree: u64, arity: u32) -> Result<CountResult> {
    check_args(degree, arity)?;
    let start = Instant::now();
    let counter = RepCounter::enumerate(degree, arity)?;
    Ok(CountResult {
        degree,
        arity,
        value: counter.sum_of_squares(),
        method: CountMethod::BruteForce,
        elapsed: start.elapsed(),
    })
}

pub fn count_meet_in_middle(degree: u64, arity: u32) -> Result<CountResult> {
    count_meet_in_middle_capped(degree, arity, DEFAULT_ENTRY_CAP)
}

/// `S(N;b)` by splitting tuples into `⌈b/2⌉` and `⌊b/2⌋` halves and
/// convolving their counters one sum-slice at a time.
pub fn count_meet_in_middle_capped(degree: u64, arity: u32, entry_cap: u128) -> Result<CountResult> {
    check_args(degree, arity)?;
    if arity > 6 {
        return Err(invalid("meet-in-the-middle supports b <= 6"));
    }
    let start = Instant::now();
    let big = RepCounter::for_arity(degree, arity.div_ceil(2), entry_cap)?;
    let small = RepCounter::for_arity(degree, arity / 2, entry_cap)?;
    let big_groups = big.by_sum();
    let small_groups: Vec<(i64, Vec<(i64, u64)>)> = small.by_sum().into_iter().collect();

    let d = degree as i64;
    let b = arity as i64;
    let c_max = b * cube(d);
    let width = (2 * c_max + 1) as usize;

    let totals: Vec<i64> = (-b * d..=b * d).collect();
    let per_slice: Vec<(u128, u128)> = totals
        .par_iter()
        .map_init(
            || (vec![0u64; 0], Vec::<(i64, u64)>::new()),
            |(dense, sparse), &s| {
                // the small side is iterated in the outer loop
                let pairs: Vec<(&Vec<(i64, u64)>, &Vec<(i64, u64)>)> = small_groups
                    .iter()
                    .filter_map(|(ss, sg)| big_groups.get(&(s - ss)).map(|bg| (sg, bg)))
                    .collect();
                let products: usize = pairs.iter().map(|(a, b)| a.len() * b.len()).sum();
                if products == 0 {
                    return (0, 0);
                }
                let mut sumsq = 0u128;
                let mut mass = 0u128;
                if products * 4 >= width {
                    if dense.len() != width {
                        *dense = vec![0u64; width];
                    }
                    for (sg, bg) in &pairs {
                        for &(cs, vs) in sg.iter() {
                            for &(cb, vb) in bg.iter() {
                                dense[(cs + cb + c_max) as usize] += vs * vb;
                            }
                        }
                    }
                    for v in dense.iter_mut() {
                        if *v != 0 {
                            let w = *v as u128;
                            sumsq += w * w;
                            mass += w;
                            *v = 0;
                        }
                    }
                } else {
                    sparse.clear();
                    for (sg, bg) in &pairs {
                        for &(cs, vs) in sg.iter() {
                            for &(cb, vb) in bg.iter() {
                                sparse.push((cs + cb, vs * vb));
                            }
                        }
                    }
                    sparse.sort_unstable_by_key(|e| e.0);
                    let mut i = 0;
                    while i < sparse.len() {
                        let mut w = 0u128;
                        let c = sparse[i].0;
                        while i < sparse.len() && sparse[i].0 == c {
                            w += sparse[i].1 as u128;
                            i += 1;
                        }
                        sumsq += w * w;
                        mass += w;
                    }
                }
                (sumsq, mass)
            },
        )
        .collect();

    let value: u128 = per_slice.iter().map(|p| p.0).sum();
    let mass: u128 = per_slice.iter().map(|p| p.1).sum();
    let expected = (2 * degree as u128 + 1).pow(arity);
    if mass != expected {
        return Err(LabError::Degenerate(format!(
            "mass conservation failed in final convolution: {mass} != {expected}"
        )));
    }
    Ok(CountResult {
        degree,
        arity,
        value,
        method: CountMethod::MeetInMiddle,
        elapsed: start.elapsed(),
    })
}

/// `S(N;2)` by grouping ordered pairs `(n_1, n_2)` into classes of equal
/// `(n_1+n_2, n_1³+n_2³)`.
pub fn count_pairs_by_class(degree: u64) -> u128 {
    let d = degree as i64;
    let mut classes: HashMap<(i64, i64), u128> = HashMap::new();
    for a in -d..=d {
        for b in -d..=d {
            *classes.entry((a + b, cube(a) + cube(b))).or_insert(0) += 1;
        }
    }
    classes.values().map(|v| v * v).sum()
}

/// Lower-bound diagnostics for `S(N;b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundReport {
    pub degree: u64,
    pub arity: u32,
    /// `S / (2N+1)^b`.
    pub diagonal_ratio: f64,
    /// `S / N^{2b-4}` for `b >= 3`.
    pub high_ratio: Option<f64>,
    /// `min Re K_N / (2N+1)` over a grid of the box `|x| <= 1/(60N)`, `|t| <= 1/(60N³)`.
    pub rho: f64,
    /// `c = (2ρ)^{2b} / 900`, so that `S·N⁴ >= c·N^{2b}` follows from the box bound.
    pub box_constant: f64,
    /// `S·N⁴ / N^{2b}`.
    pub box_ratio: f64,
}

impl LowerBoundReport {
    pub fn box_bound_holds(&self) -> bool {
        self.box_ratio >= self.box_constant
    }
}

/// Minimum of `Re K_N / (2N+1)` on a `points × points` grid of the box.
pub fn omega_box_rho(degree: u64, points: usize) -> Result<f64> {
    if points < 2 {
        return Err(invalid("Ω grid needs at least 2 points per axis"));
    }
    let n = degree as f64;
    let hx = 1.0 / (60.0 * n);
    let ht = 1.0 / (60.0 * n * n * n);
    let mut rho = f64::INFINITY;
    for i in 0..points {
        let x = -hx + 2.0 * hx * i as f64 / (points - 1) as f64;
        for j in 0..points {
            let t = -ht + 2.0 * ht * j as f64 / (points - 1) as f64;
            let k = eval_kernel(degree, x, t)?.re;
            rho = rho.min(k / (2.0 * n + 1.0));
        }
    }
    Ok(rho)
}

pub fn verify_lower_bound(result: &CountResult) -> Result<LowerBoundReport> {
    let n = result.degree as f64;
    let b = result.arity as i32;
    let s = result.value as f64;
    let rho = omega_box_rho(result.degree, 33)?;
    let box_constant = (2.0 * rho).powi(2 * b) / 900.0;
    Ok(LowerBoundReport {
        degree: result.degree,
        arity: result.arity,
        diagonal_ratio: s / result.diagonal() as f64,
        high_ratio: (b >= 3).then(|| s / n.powi(2 * b - 4)),
        rho,
        box_constant,
        box_ratio: s * n.powi(4) / n.powi(2 * b),
    })
}

/// Checks the cubic identities
/// `n³ - m³ - Σn_i³ = 3(m+n_1)(m+a)(n_1+a) + a³ - Σ_{i>=2} n_i³` with
/// `n = m + Σn_i`, `a = n_2+…+n_k`, and its relabelled form where the
/// leading pair is `(n_1, n_2)` and the remainder is `n_3, …, n_k, m`.
pub fn verify_cubic_identity(m: i64, ns: &[i64]) -> Result<bool> {
    if ns.len() < 2 {
        return Err(invalid("cubic identity needs k >= 2"));
    }
    let c = |v: i128| v * v * v;
    let split = |x: i128, y: i128, rest: &[i128]| -> bool {
        let r: i128 = rest.iter().sum();
        let lhs = c(x + y + r) - c(x) - c(y) - rest.iter().map(|&v| c(v)).sum::<i128>();
        let rhs = 3 * (x + y) * (x + r) * (y + r) + c(r) - rest.iter().map(|&v| c(v)).sum::<i128>();
        lhs == rhs
    };
    let m = m as i128;
    let ns: Vec<i128> = ns.iter().map(|&v| v as i128).collect();
    let first = split(m, ns[0], &ns[1..]);
    let mut rest: Vec<i128> = ns[2..].to_vec();
    rest.push(m);
    let second = split(ns[0], ns[1], &rest);
    Ok(first && second)
}

/// Least-squares slope of `ln S` against `ln N`.
pub fn scaling_fit(results: &[CountResult]) -> Result<LogLogFit> {
    let pts: Vec<(f64, f64)> = results
        .iter()
        .map(|r| (r.degree as f64, r.value as f64))
        .collect();
    loglog_fit(&pts, 4)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_packing_roundtrip() {
        for &(s, c) in &[(0i64, 0i64), (-3, 7), (5, -1_000_000), (-200, -320_000), (i32::MAX as i64, -(1 << 40))] {
            let k = Key::new(s, c);
            assert_eq!((k.sum(), k.cubes()), (s, c));
            assert_eq!(k.neg(), Key::new(-s, -c));
        }
        assert!(Key::new(-1, 100) < Key::new(0, -100));
        assert!(Key::new(0, -5) < Key::new(0, 3));
    }

    #[test]
    fn bruteforce_examples() {
        assert_eq!(count_bruteforce(1, 1).unwrap().value, 3);
        assert_eq!(count_bruteforce(1, 2).unwrap().value, 19);
        assert_eq!(count_bruteforce(2, 2).unwrap().value, 61);
    }

    #[test]
    fn meet_in_middle_examples() {
        assert_eq!(count_meet_in_middle(1, 2).unwrap().value, 19);
        assert_eq!(count_meet_in_middle(1, 1).unwrap().value, 3);
        assert!(count_meet_in_middle(1, 7).is_err());
        assert!(count_meet_in_middle(0, 2).is_err());
    }

    #[test]
    fn methods_agree_small() {
        for n in 1..=3u64 {
            for b in 1..=4u32 {
                let a = count_bruteforce(n, b).unwrap();
                let m = count_meet_in_middle(n, b).unwrap();
                assert_eq!(a.value, m.value, "N={n} b={b}");
                assert!(m.value >= m.diagonal());
            }
        }
    }

    #[test]
    fn counters_symmetric_and_conserve_mass() {
        for b in 0..=4u32 {
            let c = RepCounter::for_arity(3, b, DEFAULT_ENTRY_CAP).unwrap();
            assert!(c.is_symmetric());
            assert!(c.keys_in_range());
            assert_eq!(c.total_mass(), 7u128.pow(b));
            let e = RepCounter::enumerate(3, b).unwrap();
            assert_eq!(c, e);
        }
    }

    #[test]
    fn entry_cap_is_an_error() {
        assert!(matches!(
            count_meet_in_middle_capped(10, 4, 100),
            Err(LabError::Guard { .. })
        ));
    }

    #[test]
    fn pair_counts_match_class_enumeration() {
        for n in 1..=50u64 {
            assert_eq!(count_meet_in_middle(n, 2).unwrap().value, count_pairs_by_class(n), "N={n}");
        }
    }

    #[test]
    fn monotone_in_n() {
        for b in 1..=4u32 {
            let vals: Vec<u128> = (1..=6u64).map(|n| count_meet_in_middle(n, b).unwrap().value).collect();
            assert!(vals.windows(2).all(|w| w[0] < w[1]), "b={b}: {vals:?}");
        }
    }

    #[test]
    fn cubic_identity_examples() {
        assert!(verify_cubic_identity(0, &[0, 0]).unwrap());
        assert!(verify_cubic_identity(1, &[2, 3]).unwrap());
        // independent evaluation for (m, n1, n2) = (1, 2, 3)
        let lhs = 6i128.pow(3) - 1 - 8 - 27;
        let rhs = 3 * (1 + 2) * (1 + 3) * (2 + 3) + 27 - 27;
        assert_eq!(lhs, 180);
        assert_eq!(lhs, rhs);
        assert!(verify_cubic_identity(5, &[1]).is_err());
    }

    #[test]
    fn cubic_identity_random_tuples() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for i in 0..100_000 {
            let k = 2 + i % 5;
            let m = rng.gen_range(-1000..=1000);
            let ns: Vec<i64> = (0..k).map(|_| rng.gen_range(-1000..=1000)).collect();
            assert!(verify_cubic_identity(m, &ns).unwrap());
        }
    }

    #[test]
    fn lower_bound_report() {
        let r = count_meet_in_middle(6, 2).unwrap();
        let rep = verify_lower_bound(&r).unwrap();
        assert!(rep.diagonal_ratio >= 1.0);
        assert!(rep.high_ratio.is_none());
        let r5 = count_meet_in_middle(4, 5).unwrap();
        let rep5 = verify_lower_bound(&r5).unwrap();
        assert!(rep5.high_ratio.unwrap() > 0.0);
        assert!(rep5.box_bound_holds());
    }

    #[test]
    fn omega_rho_at_32() {
        let rho = omega_box_rho(32, 33).unwrap();
        assert!(rho >= 0.5, "rho = {rho}");
        // |tn³ + xn| <= 1/30 on the box, so every cosine is at least cos(π/15)
        assert!(rho >= (std::f64::consts::PI / 15.0).cos() - 1e-12);
    }

    #[test]
    fn scaling_fit_examples() {
        let synth: Vec<CountResult> = [2u64, 3, 5, 7]
            .iter()
            .map(|&n| CountResult {
                degree: n,
                arity: 5,
                value: (n as u128).pow(6),
                method: CountMethod::MeetInMiddle,
                elapsed: Duration::ZERO,
            })
            .collect();
        assert!((scaling_fit(&synth).unwrap().slope - 6.0).abs() < 1e-9);
        let b1: Vec<CountResult> = [100u64, 200, 400, 800]
            .iter()
            .map(|&n| count_meet_in_middle(n, 1).unwrap())
            .collect();
        let f = scaling_fit(&b1).unwrap();
        assert!((f.slope - 1.0).abs() < 0.01);
        assert!(scaling_fit(&synth[..3]).is_err());
    }
}
