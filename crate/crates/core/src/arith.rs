//! Exact integer number theory used throughout the crate: Euler phi, Möbius,
//! Ramanujan sums, divisor counts, continued-fraction approximation and
//! Farey-type fraction systems.

use std::cmp::Ordering;
use std::fmt;
use std::sync::OnceLock;

use crate::error::{invalid, LabError, Result};

const PRIME_TABLE_LIMIT: usize = 1_000_000;

/// Default cap on the number of fractions a [`FareySystem`] may hold.
pub const DEFAULT_FAREY_CAP: u64 = 50_000_000;

fn prime_table() -> &'static [u32] {
    static PRIMES: OnceLock<Vec<u32>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let mut composite = vec![false; PRIME_TABLE_LIMIT + 1];
        let mut primes = Vec::with_capacity(80_000);
        for i in 2..=PRIME_TABLE_LIMIT {
            if !composite[i] {
                primes.push(i as u32);
                let mut j = i * i;
                while j <= PRIME_TABLE_LIMIT {
                    composite[j] = true;
                    j += i;
                }
            }
        }
        primes
    })
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

/// Prime factorization `n = Π p^e`, primes ascending. `factorize(1)` is empty.
pub fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    assert!(n >= 1, "factorize requires n >= 1");
    let mut out = Vec::new();
    for &p in prime_table() {
        let p = p as u64;
        if p * p > n {
            break;
        }
        if n % p == 0 {
            let mut e = 0;
            while n % p == 0 {
                n /= p;
                e += 1;
            }
            out.push((p, e));
        }
    }
    // beyond the table: continue with odd trial divisors
    let mut d = PRIME_TABLE_LIMIT as u64 + 1;
    if d % 2 == 0 {
        d += 1;
    }
    while n > 1 && d.saturating_mul(d) <= n {
        if n % d == 0 {
            let mut e = 0;
            while n % d == 0 {
                n /= d;
                e += 1;
            }
            out.push((d, e));
        }
        d += 2;
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

/// Number of `1 <= a <= q` with `gcd(a, q) = 1`.
pub fn euler_phi(q: u64) -> u64 {
    assert!(q >= 1, "euler_phi requires q >= 1");
    factorize(q)
        .into_iter()
        .fold(q, |acc, (p, _)| acc / p * (p - 1))
}

pub fn mobius(q: u64) -> i8 {
    assert!(q >= 1, "mobius requires q >= 1");
    let mut sign = 1i8;
    for (_, e) in factorize(q) {
        if e > 1 {
            return 0;
        }
        sign = -sign;
    }
    sign
}

/// All positive divisors of `n`, ascending.
pub fn divisors(n: u64) -> Vec<u64> {
    assert!(n >= 1, "divisors requires n >= 1");
    let mut divs = vec![1u64];
    for (p, e) in factorize(n) {
        let len = divs.len();
        let mut pk = 1u64;
        for _ in 0..e {
            pk *= p;
            for i in 0..len {
                divs.push(divs[i] * pk);
            }
        }
    }
    divs.sort_unstable();
    divs
}

/// Ramanujan sum `c_q(n) = Σ_{(a,q)=1} e^{2πi a n / q}` via the divisor formula
/// `Σ_{d | gcd(q,|n|)} d μ(q/d)`. For `n = 0` this is `φ(q)`.
pub fn ramanujan_sum(q: u64, n: i64) -> i64 {
    assert!(q >= 1, "ramanujan_sum requires q >= 1");
    let g = gcd(q, n.unsigned_abs());
    divisors(g)
        .into_iter()
        .map(|d| d as i64 * mobius(q / d) as i64)
        .sum()
}

/// `#{d >= 1 : d | n, d < bound}`.
pub fn divisor_count_below(n: i64, bound: u64) -> Result<u64> {
    if n == 0 {
        return Err(invalid("divisor_count_below: n must be nonzero"));
    }
    Ok(divisors(n.unsigned_abs())
        .into_iter()
        .take_while(|&d| d < bound)
        .count() as u64)
}

/// Sieved Euler phi and Möbius values on `0..=limit`, used where many
/// Ramanujan sums with bounded modulus are needed.
#[derive(Debug, Clone)]
pub struct ArithTable {
    phi: Vec<u64>,
    mu: Vec<i8>,
}

impl ArithTable {
    pub fn new(limit: usize) -> Self {
        let mut phi: Vec<u64> = (0..=limit as u64).collect();
        let mut mu = vec![1i8; limit + 1];
        let mut is_composite = vec![false; limit + 1];
        if limit >= 1 {
            mu[0] = 0;
        }
        for p in 2..=limit {
            if is_composite[p] {
                continue;
            }
            let mut m = p;
            while m <= limit {
                if m > p {
                    is_composite[m] = true;
                }
                phi[m] = phi[m] / p as u64 * (p as u64 - 1);
                mu[m] = -mu[m];
                m += p;
            }
            let sq = p.saturating_mul(p);
            let mut m = sq;
            while m <= limit {
                mu[m] = 0;
                m += sq;
            }
        }
        ArithTable { phi, mu }
    }

    pub fn limit(&self) -> usize {
        self.phi.len() - 1
    }

    pub fn phi(&self, q: u64) -> u64 {
        self.phi[q as usize]
    }

    pub fn mu(&self, q: u64) -> i8 {
        self.mu[q as usize]
    }

    /// Ramanujan sum by von Sterneck's closed form
    /// `c_q(n) = μ(q/g) φ(q) / φ(q/g)`, `g = gcd(q, n)`.
    pub fn ramanujan(&self, q: u64, n: i64) -> i64 {
        let g = gcd(q, n.unsigned_abs());
        let r = q / g;
        let m = self.mu(r);
        if m == 0 {
            return 0;
        }
        m as i64 * (self.phi(q) / self.phi(r)) as i64
    }
}

/// `(|Σ_{Q<=q<2Q} c_q(n)|, Σ_{Q<=q<2Q} |c_q(n)|)` over a dyadic block of moduli.
pub fn dyadic_ramanujan_mass(table: &ArithTable, n: i64, scale: u64) -> (u64, u64) {
    let mut signed = 0i64;
    let mut absolute = 0u64;
    for q in scale..2 * scale {
        let c = table.ramanujan(q, n);
        signed += c;
        absolute += c.unsigned_abs();
    }
    (signed.unsigned_abs(), absolute)
}

/// A reduced fraction `a/q` with `q >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rational {
    a: i64,
    q: u64,
}

impl Rational {
    /// Builds the reduced form of `a/q`.
    pub fn new(a: i64, q: u64) -> Result<Self> {
        if q == 0 {
            return Err(invalid("rational denominator must be positive"));
        }
        let g = gcd(a.unsigned_abs(), q);
        Ok(Rational {
            a: a / g as i64,
            q: q / g,
        })
    }

    pub(crate) fn from_reduced(a: i64, q: u64) -> Self {
        debug_assert!(q >= 1 && gcd(a.unsigned_abs(), q) == 1);
        Rational { a, q }
    }

    pub fn numer(&self) -> i64 {
        self.a
    }

    pub fn denom(&self) -> u64 {
        self.q
    }

    pub fn value(&self) -> f64 {
        self.a as f64 / self.q as f64
    }
}

impl PartialOrd for Rational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rational {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.a as i128 * other.q as i128).cmp(&(other.a as i128 * self.q as i128))
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.a, self.q)
    }
}

/// Exact dyadic form `t = num / 2^exp` of a finite `t` in `[0, 1)`;
/// `None` when `exp` would exceed 120 (then `t < 2^-67`).
fn dyadic_parts(t: f64) -> Option<(u128, u32)> {
    if t == 0.0 {
        return Some((0, 0));
    }
    let bits = t.to_bits();
    let raw_exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    let (mant, e) = if raw_exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), raw_exp - 1075)
    };
    // t = mant * 2^e with e < 0 because t < 1
    let tz = mant.trailing_zeros() as i32;
    let mant = mant >> tz;
    let e = e + tz;
    if e >= 0 {
        return Some(((mant as u128) << e, 0));
    }
    let exp = (-e) as u32;
    if exp > 120 {
        None
    } else {
        Some((mant as u128, exp))
    }
}

const DIRICHLET_QMAX_LIMIT: u64 = 1 << 32;

/// Largest-denominator continued-fraction convergent `a/q` of `t` with
/// `q <= q_max`. Then `|t - a/q| <= 1/(q q_max) <= 1/q^2`.
///
/// The expansion runs on the exact binary value of `t`.
pub fn dirichlet_approx(t: f64, q_max: u64) -> Result<Rational> {
    if !t.is_finite() || !(0.0..1.0).contains(&t) {
        return Err(invalid(format!("dirichlet_approx: t = {t} not in [0,1)")));
    }
    if q_max == 0 || q_max > DIRICHLET_QMAX_LIMIT {
        return Err(invalid(format!(
            "dirichlet_approx: q_max = {q_max} outside [1, 2^32]"
        )));
    }
    let Some((num, exp)) = dyadic_parts(t) else {
        return Ok(Rational::from_reduced(0, 1));
    };
    let den: u128 = 1u128 << exp;
    let q_max = q_max as u128;

    // (p_{k-2}, q_{k-2}), (p_{k-1}, q_{k-1})
    let (mut p2, mut q2) = (0u128, 1u128);
    let (mut p1, mut q1) = (1u128, 0u128);
    let (mut x, mut y) = (num, den);
    let mut best = (0u128, 1u128);
    while y != 0 {
        let a = x / y;
        let next_q = if q1 == 0 {
            q2
        } else {
            if a > (q_max - q2) / q1 {
                break;
            }
            a * q1 + q2
        };
        if next_q > q_max {
            break;
        }
        let next_p = a * p1 + p2;
        best = (next_p, next_q);
        p2 = p1;
        q2 = q1;
        p1 = next_p;
        q1 = next_q;
        let r = x - a * y;
        x = y;
        y = r;
    }
    Ok(Rational::from_reduced(best.0 as i64, best.1 as u64))
}

/// Exact test of `|t - a/q| <= 1/(q * bound)` for finite `t` in `[0, 1)`.
pub fn approximation_within(t: f64, r: Rational, bound: u64) -> bool {
    let q = r.denom() as u128;
    let a = r.numer();
    if a < 0 {
        return false;
    }
    let a = a as u128;
    match dyadic_parts(t) {
        None => {
            // t < 2^-67: only a = 0 can qualify for q <= 2^32
            a == 0 && (t * (q as f64) * (bound as f64) <= 1.0)
        }
        Some((num, exp)) => {
            let den = 1u128 << exp;
            let lhs = num.checked_mul(q);
            let rhs = a.checked_mul(den);
            match (lhs, rhs) {
                (Some(l), Some(r)) => {
                    let diff = l.abs_diff(r);
                    // |t - a/q| = diff / (den q) <= 1/(q bound)  <=>  diff * bound <= den
                    match diff.checked_mul(bound as u128) {
                        Some(v) => v <= den,
                        None => false,
                    }
                }
                _ => false,
            }
        }
    }
}

/// Exact check of the Dirichlet-type inequality `|t - a/q| <= 1/q^2`.
pub fn satisfies_dirichlet(t: f64, r: Rational) -> bool {
    approximation_within(t, r, r.denom())
}

/// All reduced fractions `a/q` with `Q <= q <= 5Q`, `1 <= a <= q`,
/// in strictly increasing order.
#[derive(Debug, Clone)]
pub struct FareySystem {
    scale: u64,
    fractions: Vec<Rational>,
}

impl FareySystem {
    pub fn new(scale: u64) -> Result<Self> {
        Self::with_cap(scale, DEFAULT_FAREY_CAP)
    }

    pub fn with_cap(scale: u64, cap: u64) -> Result<Self> {
        if scale == 0 {
            return Err(invalid("Farey scale must be >= 1"));
        }
        let order = 5 * scale;
        let table = ArithTable::new(order as usize);
        let count: u64 = (scale..=order).map(|q| table.phi(q)).sum();
        if count > cap {
            return Err(LabError::Guard {
                what: "Farey fractions",
                needed: count as u128,
                cap: cap as u128,
            });
        }
        let mut fractions = Vec::with_capacity(count as usize);
        // next-term recurrence of the Farey sequence of order 5Q, 0/1 .. 1/1
        let (mut a, mut b, mut c, mut d) = (0u64, 1u64, 1u64, order);
        while c <= d {
            if d >= scale {
                fractions.push(Rational::from_reduced(c as i64, d));
            }
            let k = (order + b) / d;
            let (nc, nd) = (k * c - a, k * d - b);
            a = c;
            b = d;
            c = nc;
            d = nd;
            if a == 1 && b == 1 {
                break;
            }
        }
        debug_assert_eq!(fractions.len() as u64, count);
        Ok(FareySystem { scale, fractions })
    }

    pub fn scale(&self) -> u64 {
        self.scale
    }

    pub fn fractions(&self) -> &[Rational] {
        &self.fractions
    }

    pub fn len(&self) -> usize {
        self.fractions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fractions.is_empty()
    }
}

/// Convenience wrapper with the default memory cap.
pub fn farey_system(scale: u64) -> Result<FareySystem> {
    FareySystem::new(scale)
}
