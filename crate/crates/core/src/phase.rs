//! Exact reduction of phases modulo one.

use num_complex::Complex64;
use std::f64::consts::TAU;

/// `frac(k * t)` in `[0, 1)`, computed from the exact binary value of `t`
/// so that no precision is lost when `k * t` is large.
pub fn frac_mul(k: i64, t: f64) -> f64 {
    debug_assert!(t.is_finite());
    if k == 0 || t == 0.0 {
        return 0.0;
    }
    let bits = t.to_bits();
    let negative = (bits >> 63) != 0;
    let raw_exp = ((bits >> 52) & 0x7ff) as i32;
    let frac_bits = bits & ((1u64 << 52) - 1);
    let (mant, e) = if raw_exp == 0 {
        (frac_bits, -1074)
    } else {
        (frac_bits | (1u64 << 52), raw_exp - 1075)
    };
    if e >= 0 {
        return 0.0;
    }
    let mut p = k as i128 * mant as i128;
    if negative {
        p = -p;
    }
    let exp = (-e) as u32;
    let value = if exp <= 126 {
        let r = p.rem_euclid(1i128 << exp);
        r as f64 * 2f64.powi(-(exp as i32))
    } else {
        (p as f64 * 2f64.powi(-(exp as i32))).rem_euclid(1.0)
    };
    if value >= 1.0 {
        0.0
    } else {
        value
    }
}

/// `frac(x)` in `[0, 1)`.
pub fn frac(x: f64) -> f64 {
    let f = x.rem_euclid(1.0);
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

/// `e^{2πi θ}`.
#[inline]
pub fn cis_turns(turns: f64) -> Complex64 {
    let (s, c) = (TAU * turns).sin_cos();
    Complex64::new(c, s)
}

/// Table of the `m`-th roots of unity, `e^{2πi j/m}`, for exact rational phases.
#[derive(Debug, Clone)]
pub struct RootTable {
    m: u64,
    roots: Vec<Complex64>,
}

impl RootTable {
    pub fn new(m: u64) -> Self {
        assert!(m >= 1);
        let roots = (0..m).map(|j| cis_turns(j as f64 / m as f64)).collect();
        RootTable { m, roots }
    }

    pub fn modulus(&self) -> u64 {
        self.m
    }

    /// `e^{2πi j/m}` for any integer `j`.
    #[inline]
    pub fn get(&self, j: i128) -> Complex64 {
        self.roots[j.rem_euclid(self.m as i128) as usize]
    }

    /// `e^{2πi j/m}` for `0 <= j < m`.
    #[inline]
    pub fn at(&self, j: usize) -> Complex64 {
        self.roots[j]
    }
}
