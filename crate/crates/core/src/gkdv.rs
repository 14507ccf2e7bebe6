//! Fourier pseudospectral solver for `u_t + u_xxx + F(u) u_x = 0` on `x ∈ [0, 2π)`,
//! its mean-removed variant, and the gauge transform between the two.
//!
//! States hold `û(n)` for `-M/2 < n <= M/2` in FFT order, with
//! `u(x) = Σ û(n) e^{inx}`. Spatial integrals `∫_𝕋` are normalized means.

use std::fmt;
use std::io::{BufRead, Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, LabError, Result};

/// The nonlinear coefficient `F`.
#[derive(Clone)]
pub enum Nonlinearity {
    Zero,
    /// `F(u) = u^k`.
    Power(u32),
    /// `F(u) = sin u`.
    Sin,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonlinearity::Zero => write!(f, "Zero"),
            Nonlinearity::Power(k) => write!(f, "Power({k})"),
            Nonlinearity::Sin => write!(f, "Sin"),
            Nonlinearity::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Nonlinearity {
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Nonlinearity::Zero => 0.0,
            Nonlinearity::Power(k) => u.powi(*k as i32),
            Nonlinearity::Sin => u.sin(),
            Nonlinearity::Custom(f) => f(u),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Nonlinearity::Zero)
    }

    /// `F^{(order)}(u)` by central differences, `order <= 5`.
    pub fn derivative(&self, u: f64, order: u32) -> Result<f64> {
        if order > 5 {
            return Err(invalid("derivatives above order 5 are not provided"));
        }
        if order == 0 {
            return Ok(self.eval(u));
        }
        // binomial stencil with step scaled to balance truncation and rounding
        let h = f64::EPSILON.powf(1.0 / (order as f64 + 2.0)) * u.abs().max(1.0);
        let mut acc = 0.0;
        let mut binom = 1.0;
        for j in 0..=order {
            let x = u + (order as f64 / 2.0 - j as f64) * h;
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * binom * self.eval(x);
            binom = binom * (order - j) as f64 / (j + 1) as f64;
        }
        Ok(acc / h.powi(order as i32))
    }
}

/// Which equation the solver integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// `u_t + u_xxx + F(u) u_x = 0`.
    Original,
    /// `u_t + u_xxx + (F(u) - ∫F(u)) u_x = 0`.
    MeanRemoved,
}

/// Fourier coefficients of a real periodic function.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState {
    uhat: Vec<Complex64>,
    time: f64,
}

fn index(n: i64, m: usize) -> usize {
    n.rem_euclid(m as i64) as usize
}

fn freq(j: usize, m: usize) -> i64 {
    if j <= m / 2 {
        j as i64
    } else {
        j as i64 - m as i64
    }
}

/// Largest retained `|n|` under the two-thirds rule.
pub fn dealias_cutoff(m: usize) -> i64 {
    (m / 3) as i64
}

impl SpectralState {
    fn check_modes(m: usize) -> Result<()> {
        if m < 4 || !m.is_power_of_two() {
            return Err(invalid(format!("M must be a power of two >= 4, got {m}")));
        }
        Ok(())
    }

    pub fn zeros(m: usize) -> Result<Self> {
        Self::check_modes(m)?;
        Ok(SpectralState {
            uhat: vec![Complex64::new(0.0, 0.0); m],
            time: 0.0,
        })
    }

    pub fn constant(m: usize, c: f64) -> Result<Self> {
        let mut s = Self::zeros(m)?;
        s.uhat[0] = Complex64::new(c, 0.0);
        Ok(s)
    }

    /// From coefficients in FFT order; rejects non-real or non-dealiased input.
    pub fn from_coeffs(uhat: Vec<Complex64>, time: f64) -> Result<Self> {
        Self::check_modes(uhat.len())?;
        let s = SpectralState { uhat, time };
        let scale = s.max_abs().max(1.0);
        if s.reality_defect() > 1e-13 * scale {
            return Err(invalid("coefficients are not Hermitian symmetric"));
        }
        let cut = dealias_cutoff(s.modes());
        if s.uhat.iter().enumerate().any(|(j, c)| freq(j, s.modes()).abs() > cut && *c != Complex64::new(0.0, 0.0)) {
            return Err(invalid("coefficients outside the dealiased band"));
        }
        Ok(s)
    }

    /// From real grid values `u(2πj/M)`.
    pub fn from_grid(values: &[f64], time: f64) -> Result<Self> {
        let m = values.len();
        Self::check_modes(m)?;
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(m).process(&mut buf);
        let cut = dealias_cutoff(m);
        let mut s = SpectralState {
            uhat: buf.iter().map(|c| c / m as f64).collect(),
            time,
        };
        for j in 0..m {
            if freq(j, m).abs() > cut {
                s.uhat[j] = Complex64::new(0.0, 0.0);
            }
        }
        s.symmetrize();
        Ok(s)
    }

    pub fn modes(&self) -> usize {
        self.uhat.len()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.uhat
    }

    /// `û(n)` for `-M/2 < n <= M/2`, zero otherwise.
    pub fn coeff(&self, n: i64) -> Complex64 {
        let m = self.modes() as i64;
        if n <= -m / 2 || n > m / 2 {
            Complex64::new(0.0, 0.0)
        } else {
            self.uhat[index(n, self.modes())]
        }
    }

    fn max_abs(&self) -> f64 {
        self.uhat.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// `max |û(-n) - conj û(n)|`, with the Nyquist mode required real.
    pub fn reality_defect(&self) -> f64 {
        let m = self.modes();
        (0..m)
            .map(|j| (self.uhat[(m - j) % m] - self.uhat[j].conj()).norm())
            .fold(0.0, f64::max)
    }

    fn symmetrize(&mut self) {
        let m = self.modes();
        self.uhat[0].im = 0.0;
        self.uhat[m / 2].im = 0.0;
        for j in 1..m / 2 {
            let avg = 0.5 * (self.uhat[j] + self.uhat[m - j].conj());
            self.uhat[j] = avg;
            self.uhat[m - j] = avg.conj();
        }
    }

    /// `∫u`, the zero mode.
    pub fn mass(&self) -> f64 {
        self.uhat[0].re
    }

    /// `∫u²`.
    pub fn momentum(&self) -> f64 {
        self.uhat.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `(Σ ⟨n⟩^{2s} |û(n)|²)^{1/2}` with `⟨n⟩ = 1 + |n|`.
    pub fn hs_norm(&self, s: f64) -> f64 {
        let m = self.modes();
        self.uhat
            .iter()
            .enumerate()
            .map(|(j, c)| (1.0 + freq(j, m).unsigned_abs() as f64).powf(2.0 * s) * c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// `‖self - other‖_{H^s}`.
    pub fn hs_distance(&self, other: &SpectralState, s: f64) -> f64 {
        let diff = SpectralState {
            uhat: self.uhat.iter().zip(&other.uhat).map(|(a, b)| a - b).collect(),
            time: self.time,
        };
        diff.hs_norm(s)
    }

    /// Grid values `u(2πj/M)`.
    pub fn to_grid(&self) -> Vec<f64> {
        let m = self.modes();
        let mut buf = self.uhat.clone();
        FftPlanner::new().plan_fft_inverse(m).process(&mut buf);
        buf.iter().map(|c| c.re).collect()
    }

    /// `u(· - shift)`: multiplies `û(n)` by `e^{-in·shift}`.
    pub fn shifted(&self, shift: f64) -> SpectralState {
        let m = self.modes();
        SpectralState {
            uhat: self
                .uhat
                .iter()
                .enumerate()
                .map(|(j, c)| c * Complex64::from_polar(1.0, -(freq(j, m) as f64) * shift))
                .collect(),
            time: self.time,
        }
    }

    fn add_scaled(&self, other: &[Complex64], h: f64) -> Vec<Complex64> {
        self.uhat.iter().zip(other).map(|(a, b)| a + b * h).collect()
    }
}

/// Regularity, seed and amplitude of random `H^s` data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SobolevSpec {
    pub s: f64,
    pub seed: u64,
    pub amplitude: f64,
}

/// `φ̂(n) = A |n|^{-s-1/2-0.01} e^{iθ_n}` for `1 <= |n| <= M/3`, `θ_n` uniform,
/// `φ̂(-n) = conj φ̂(n)`, `φ̂(0) = 0`.
pub fn make_hs_data(m: usize, spec: SobolevSpec) -> Result<SpectralState> {
    if !(spec.s.is_finite() && spec.amplitude.is_finite()) {
        return Err(LabError::NonFinite("Sobolev data parameters".into()));
    }
    let mut state = SpectralState::zeros(m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let decay = -spec.s - 0.5 - 0.01;
    for n in 1..=dealias_cutoff(m) {
        let theta: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
        let c = Complex64::from_polar(spec.amplitude * (n as f64).powf(decay), theta);
        state.uhat[index(n, m)] = c;
        state.uhat[index(-n, m)] = c.conj();
    }
    Ok(state)
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub nonlinearity: Nonlinearity,
    pub variant: Variant,
    pub dt: f64,
    pub horizon: f64,
    /// Store a state every this many steps (the final state is always stored).
    pub store_every: usize,
    /// Conservation diagnostics every this many steps.
    pub check_every: usize,
}

impl SolverConfig {
    pub fn new(nonlinearity: Nonlinearity, dt: f64, horizon: f64) -> Self {
        SolverConfig {
            nonlinearity,
            variant: Variant::Original,
            dt,
            horizon,
            store_every: 10,
            check_every: 10,
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_store_every(mut self, every: usize) -> Self {
        self.store_every = every;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(invalid(format!("T must be non-negative, got {}", self.horizon)));
        }
        if self.store_every == 0 || self.check_every == 0 {
            return Err(invalid("store and check cadences must be >= 1"));
        }
        Ok(())
    }

    /// Number of steps and the step that lands exactly on `T`.
    pub fn steps(&self) -> (usize, f64) {
        if self.horizon == 0.0 {
            return (0, self.dt);
        }
        let n = (self.horizon / self.dt - 1e-9).ceil().max(1.0) as usize;
        (n, self.horizon / n as f64)
    }
}

/// FFT plans for a fixed number of modes.
pub struct Stepper {
    m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    nonlinearity: Nonlinearity,
    variant: Variant,
}

impl Stepper {
    pub fn new(m: usize, nonlinearity: Nonlinearity, variant: Variant) -> Result<Self> {
        SpectralState::check_modes(m)?;
        let mut planner = FftPlanner::new();
        Ok(Stepper {
            m,
            fwd: planner.plan_fft_forward(2 * m),
            inv: planner.plan_fft_inverse(2 * m),
            nonlinearity,
            variant,
        })
    }

    /// Values of `u` and `u_x` on the `2M`-point grid.
    fn padded_fields(&self, uhat: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let p = 2 * self.m;
        let cut = dealias_cutoff(self.m);
        let mut u = vec![Complex64::new(0.0, 0.0); p];
        let mut ux = vec![Complex64::new(0.0, 0.0); p];
        for n in -cut..=cut {
            let c = uhat[index(n, self.m)];
            u[index(n, p)] = c;
            ux[index(n, p)] = c * Complex64::new(0.0, n as f64);
        }
        self.inv.process(&mut u);
        self.inv.process(&mut ux);
        (u.iter().map(|c| c.re).collect(), ux.iter().map(|c| c.re).collect())
    }

    /// `∫ F(u)` on the padded grid.
    pub fn mean_f(&self, state: &SpectralState) -> f64 {
        if self.nonlinearity.is_zero() {
            return 0.0;
        }
        let (u, _) = self.padded_fields(&state.uhat);
        u.iter().map(|&v| self.nonlinearity.eval(v)).sum::<f64>() / u.len() as f64
    }

    /// `-P[(F(u) - c) u_x]^` with `c = ∫F(u)` for the mean-removed variant; the
    /// zero mode of the flux vanishes since `F(u) u_x` is an exact derivative.
    fn rhs(&self, uhat: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.m];
        if self.nonlinearity.is_zero() {
            return out;
        }
        let p = 2 * self.m;
        let (u, ux) = self.padded_fields(uhat);
        let fu: Vec<f64> = u.iter().map(|&v| self.nonlinearity.eval(v)).collect();
        let shift = match self.variant {
            Variant::Original => 0.0,
            Variant::MeanRemoved => fu.iter().sum::<f64>() / p as f64,
        };
        let mut flux: Vec<Complex64> = fu.iter().zip(&ux).map(|(f, d)| Complex64::new((f - shift) * d, 0.0)).collect();
        self.fwd.process(&mut flux);
        let cut = dealias_cutoff(self.m);
        for n in 1..=cut {
            // Hermitian part of the transform of real data
            let c = 0.5 * (flux[index(n, p)] + flux[index(-n, p)].conj()) / p as f64;
            out[index(n, self.m)] = -c;
            out[index(-n, self.m)] = -c.conj();
        }
        out
    }

    /// One integrating-factor RK4 step of size `h` for `û_t = i n³ û + N(û)`.
    pub fn step(&self, state: &SpectralState, h: f64) -> Result<SpectralState> {
        if state.modes() != self.m {
            return Err(invalid("state has a different number of modes"));
        }
        let m = self.m;
        let half: Vec<Complex64> = (0..m).map(|j| Complex64::from_polar(1.0, (freq(j, m) as f64).powi(3) * 0.5 * h)).collect();
        let full: Vec<Complex64> = half.iter().map(|e| e * e).collect();
        let v = &state.uhat;
        let mul = |e: &[Complex64], x: &[Complex64]| -> Vec<Complex64> { e.iter().zip(x).map(|(a, b)| a * b).collect() };
        let k1 = self.rhs(v);
        let a2 = mul(&half, &state.add_scaled(&k1, 0.5 * h));
        let k2 = self.rhs(&a2);
        let ev = mul(&half, v);
        let a3: Vec<Complex64> = ev.iter().zip(&k2).map(|(a, b)| a + b * (0.5 * h)).collect();
        let k3 = self.rhs(&a3);
        let ek3 = mul(&half, &k3);
        let a4: Vec<Complex64> = (0..m).map(|j| full[j] * v[j] + ek3[j] * h).collect();
        let k4 = self.rhs(&a4);
        let mut next: Vec<Complex64> = (0..m)
            .map(|j| full[j] * v[j] + (full[j] * k1[j] + half[j] * (k2[j] + k3[j]) * 2.0 + k4[j]) * (h / 6.0))
            .collect();
        let cut = dealias_cutoff(m);
        for (j, c) in next.iter_mut().enumerate() {
            if freq(j, m).abs() > cut {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        let time = state.time + h;
        if next.iter().any(|c| !(c.re.is_finite() && c.im.is_finite()) || c.norm() > 1e12) {
            return Err(LabError::BlowUp { time });
        }
        let out = SpectralState { uhat: next, time };
        let defect = out.reality_defect();
        if defect > 1e-13 * out.max_abs().max(1.0) {
            return Err(LabError::Degenerate(format!("reality symmetry lost: defect {defect:e}")));
        }
        Ok(out)
    }
}

/// Largest drifts of the conserved quantities over the checked steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservationReport {
    pub mass_drift: f64,
    pub momentum_drift: f64,
    pub checks: usize,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<SpectralState>,
    pub conservation: ConservationReport,
    pub steps: usize,
    pub dt: f64,
}

impl Trajectory {
    pub fn last(&self) -> &SpectralState {
        self.states.last().expect("trajectories hold the initial state")
    }
}

pub fn solve(initial: &SpectralState, config: &SolverConfig) -> Result<Trajectory> {
    config.validate()?;
    let stepper = Stepper::new(initial.modes(), config.nonlinearity.clone(), config.variant)?;
    let (steps, h) = config.steps();
    let mass0 = initial.mass();
    let mom0 = initial.momentum();
    let mut report = ConservationReport {
        mass_drift: 0.0,
        momentum_drift: 0.0,
        checks: 0,
    };
    let mut state = initial.clone();
    let mut states = vec![state.clone()];
    for i in 1..=steps {
        state = stepper.step(&state, h)?;
        if i == steps {
            // land exactly on T
            state.time = initial.time + config.horizon;
        }
        if i % config.check_every == 0 || i == steps {
            report.mass_drift = report.mass_drift.max((state.mass() - mass0).abs());
            report.momentum_drift = report.momentum_drift.max((state.momentum() - mom0).abs());
            report.checks += 1;
        }
        if i % config.store_every == 0 || i == steps {
            states.push(state.clone());
        }
    }
    Ok(Trajectory {
        states,
        conservation: report,
        steps,
        dt: h,
    })
}

/// `D(t_i) = ∫_0^{t_i} ∫F(w)` by the trapezoid rule on the stored states.
fn drift(states: &[SpectralState], nonlinearity: &Nonlinearity) -> Result<Vec<f64>> {
    if states.is_empty() {
        return Ok(Vec::new());
    }
    let stepper = Stepper::new(states[0].modes(), nonlinearity.clone(), Variant::Original)?;
    let means: Vec<f64> = states.par_iter().map(|s| stepper.mean_f(s)).collect();
    let mut d = vec![0.0; states.len()];
    for i in 1..states.len() {
        let dt = states[i].time - states[i - 1].time;
        d[i] = d[i - 1] + 0.5 * dt * (means[i] + means[i - 1]);
    }
    Ok(d)
}

/// `u(x, t) = v(x - D(t), t)`, `D(t) = ∫_0^t ∫F(v)`, on each stored state.
pub fn gauge_transform(v: &[SpectralState], nonlinearity: &Nonlinearity) -> Result<Vec<SpectralState>> {
    let d = drift(v, nonlinearity)?;
    Ok(v.iter().zip(&d).map(|(s, &dd)| s.shifted(dd)).collect())
}

/// `v(x, t) = u(x + D(t), t)`, `D(t) = ∫_0^t ∫F(u)`.
pub fn inverse_gauge_transform(u: &[SpectralState], nonlinearity: &Nonlinearity) -> Result<Vec<SpectralState>> {
    let d = drift(u, nonlinearity)?;
    Ok(u.iter().zip(&d).map(|(s, &dd)| s.shifted(-dd)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaugeReport {
    /// `sup_t ‖gauge(v)(t) - u(t)‖_{L²}` between the two independent runs.
    pub discrepancy: f64,
    /// `sup_t ‖inverse(gauge(v)) - v‖_{L²}`.
    pub round_trip: f64,
}

/// Solves the mean-removed equation for `v`, gauges it, and compares with a
/// direct solve of the original equation; states are stored every step.
pub fn gauge_equivalence_check(initial: &SpectralState, config: &SolverConfig) -> Result<GaugeReport> {
    let base = config.clone().with_store_every(1);
    let v = solve(initial, &base.clone().with_variant(Variant::MeanRemoved))?;
    let u = solve(initial, &base.with_variant(Variant::Original))?;
    let gauged = gauge_transform(&v.states, &config.nonlinearity)?;
    let back = inverse_gauge_transform(&gauged, &config.nonlinearity)?;
    let discrepancy = gauged.iter().zip(&u.states).map(|(a, b)| a.hs_distance(b, 0.0)).fold(0.0, f64::max);
    let round_trip = back.iter().zip(&v.states).map(|(a, b)| a.hs_distance(b, 0.0)).fold(0.0, f64::max);
    Ok(GaugeReport {
        discrepancy,
        round_trip,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub delta: f64,
    /// `sup_t ‖u - ũ‖_{H^s} / δ`, or `0` when `δ = 0`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub s: f64,
    pub data_norm: f64,
    /// Local window `T = c ‖φ‖_{H^s}^{-2}`, capped by the configured horizon.
    pub window: f64,
    pub rows: Vec<ProbeRow>,
    /// `sup_t ‖u(t)‖_{H^s} / ‖φ‖_{H^s}`.
    pub growth: f64,
    /// Time of blowup of any run, if one occurred.
    pub blowup: Option<f64>,
}

pub const PROBE_RATIO_BOUND: f64 = 10.0;
pub const PROBE_GROWTH_BOUND: f64 = 2.0;

impl ProbeReport {
    pub fn passes(&self) -> bool {
        self.blowup.is_none()
            && self.growth <= PROBE_GROWTH_BOUND
            && self.rows.iter().all(|r| r.ratio <= PROBE_RATIO_BOUND)
    }
}

/// Continuity in the data: runs `φ` and `φ + δψ`, `‖ψ‖_{H^s} = 1`, over the local window.
pub fn wellposedness_probe(
    m: usize,
    spec: SobolevSpec,
    config: &SolverConfig,
    window_constant: f64,
    deltas: &[f64],
) -> Result<ProbeReport> {
    if spec.s <= 0.5 {
        return Err(invalid(format!("probe needs s > 1/2, got {}", spec.s)));
    }
    let phi = make_hs_data(m, spec)?;
    let data_norm = phi.hs_norm(spec.s);
    let window = if data_norm > 0.0 {
        (window_constant / (data_norm * data_norm)).min(config.horizon)
    } else {
        config.horizon
    };
    let cfg = SolverConfig {
        horizon: window,
        ..config.clone()
    };
    let dir = make_hs_data(
        m,
        SobolevSpec {
            seed: spec.seed.wrapping_add(0x9e37_79b9),
            amplitude: 1.0,
            ..spec
        },
    )?;
    let unit = 1.0 / dir.hs_norm(spec.s);
    let base = match solve(&phi, &cfg) {
        Ok(t) => t,
        Err(LabError::BlowUp { time }) => {
            return Ok(ProbeReport {
                s: spec.s,
                data_norm,
                window,
                rows: Vec::new(),
                growth: f64::INFINITY,
                blowup: Some(time),
            })
        }
        Err(e) => return Err(e),
    };
    let growth = if data_norm > 0.0 {
        base.states.iter().map(|st| st.hs_norm(spec.s)).fold(0.0, f64::max) / data_norm
    } else {
        0.0
    };
    let runs: Vec<Result<(f64, Option<f64>)>> = deltas
        .par_iter()
        .map(|&delta| {
            if delta == 0.0 {
                return Ok((0.0, None));
            }
            let perturbed = SpectralState {
                uhat: phi.add_scaled(&dir.uhat, delta * unit),
                time: 0.0,
            };
            match solve(&perturbed, &cfg) {
                Ok(t) => {
                    let sup = t.states.iter().zip(&base.states).map(|(a, b)| a.hs_distance(b, spec.s)).fold(0.0, f64::max);
                    Ok((sup / delta, None))
                }
                Err(LabError::BlowUp { time }) => Ok((f64::INFINITY, Some(time))),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut rows = Vec::with_capacity(deltas.len());
    let mut blowup = None;
    for (&delta, r) in deltas.iter().zip(runs) {
        let (ratio, b) = r?;
        blowup = blowup.or(b);
        rows.push(ProbeRow { delta, ratio });
    }
    Ok(ProbeReport {
        s: spec.s,
        data_norm,
        window,
        rows,
        growth,
        blowup,
    })
}

/// Observed order `log2(e(h) / e(h/2))` against a reference at `h/8`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceReport {
    pub error_coarse: f64,
    pub error_fine: f64,
    pub order: f64,
}

pub fn self_convergence(initial: &SpectralState, config: &SolverConfig) -> Result<ConvergenceReport> {
    let run = |dt: f64| -> Result<SpectralState> {
        let cfg = SolverConfig {
            dt,
            store_every: usize::MAX,
            ..config.clone()
        };
        Ok(solve(initial, &cfg)?.last().clone())
    };
    let (n, h) = config.steps();
    if n == 0 {
        return Err(invalid("self-convergence needs T > 0"));
    }
    let reference = run(h / 8.0)?;
    let coarse = run(h)?;
    let fine = run(h / 2.0)?;
    let error_coarse = coarse.hs_distance(&reference, 0.0);
    let error_fine = fine.hs_distance(&reference, 0.0);
    Ok(ConvergenceReport {
        error_coarse,
        error_fine,
        order: (error_coarse / error_fine).log2(),
    })
}

/// Columnar text export: one `time n re im` line per mode, `n` from `-M/2+1` to `M/2`.
pub fn write_text<W: Write>(states: &[SpectralState], mut out: W) -> Result<()> {
    writeln!(out, "# time n re im")?;
    for s in states {
        let m = s.modes() as i64;
        for n in (-m / 2 + 1)..=(m / 2) {
            let c = s.coeff(n);
            writeln!(out, "{:.17e} {} {:.17e} {:.17e}", s.time, n, c.re, c.im)?;
        }
    }
    Ok(())
}

pub fn read_text<R: BufRead>(input: R) -> Result<Vec<SpectralState>> {
    let mut rows: Vec<(f64, i64, f64, f64)> = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = || LabError::Format(format!("line {}: expected `time n re im`", lineno + 1));
        if f.len() != 4 {
            return Err(bad());
        }
        rows.push((
            f[0].parse().map_err(|_| bad())?,
            f[1].parse().map_err(|_| bad())?,
            f[2].parse().map_err(|_| bad())?,
            f[3].parse().map_err(|_| bad())?,
        ));
    }
    let mut states = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let t = rows[i].0;
        let mut j = i;
        while j < rows.len() && rows[j].0.to_bits() == t.to_bits() {
            j += 1;
        }
        let m = j - i;
        SpectralState::check_modes(m)?;
        let mut uhat = vec![Complex64::new(0.0, 0.0); m];
        for &(_, n, re, im) in &rows[i..j] {
            if n <= -(m as i64) / 2 || n > m as i64 / 2 {
                return Err(LabError::Format(format!("mode {n} out of range for M = {m}")));
            }
            uhat[index(n, m)] = Complex64::new(re, im);
        }
        states.push(SpectralState { uhat, time: t });
        i = j;
    }
    Ok(states)
}

/// Magic bytes opening a binary trajectory file, padded to 16 bytes with zeros.
pub const BINARY_MAGIC: &[u8; 8] = b"GKDV0001";

/// Binary export: 16-byte header (`GKDV0001` + 8 zero bytes), then little-endian
/// `u64 M`, `u64 count`, and per state `f64 time` followed by `M` pairs
/// `f64 re, f64 im` for `n = -M/2+1 ..= M/2`.
pub fn write_binary<W: Write>(states: &[SpectralState], mut out: W) -> Result<()> {
    let m = states.first().map_or(0, |s| s.modes());
    if states.iter().any(|s| s.modes() != m) {
        return Err(invalid("all states must have the same number of modes"));
    }
    let mut header = [0u8; 16];
    header[..8].copy_from_slice(BINARY_MAGIC);
    out.write_all(&header)?;
    out.write_all(&(m as u64).to_le_bytes())?;
    out.write_all(&(states.len() as u64).to_le_bytes())?;
    for s in states {
        out.write_all(&s.time.to_le_bytes())?;
        let mi = m as i64;
        for n in (-mi / 2 + 1)..=(mi / 2) {
            let c = s.coeff(n);
            out.write_all(&c.re.to_le_bytes())?;
            out.write_all(&c.im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut input: R) -> Result<Vec<SpectralState>> {
    let mut header = [0u8; 16];
    input.read_exact(&mut header)?;
    if &header[..8] != BINARY_MAGIC || header[8..].iter().any(|&b| b != 0) {
        return Err(LabError::Format("missing GKDV0001 header".into()));
    }
    let mut word = [0u8; 8];
    let mut next = |input: &mut R| -> Result<[u8; 8]> {
        input.read_exact(&mut word)?;
        Ok(word)
    };
    let m = u64::from_le_bytes(next(&mut input)?) as usize;
    let count = u64::from_le_bytes(next(&mut input)?) as usize;
    if count > 0 {
        SpectralState::check_modes(m)?;
    }
    let mut states = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let time = f64::from_le_bytes(next(&mut input)?);
        let mut uhat = vec![Complex64::new(0.0, 0.0); m];
        let mi = m as i64;
        for n in (-mi / 2 + 1)..=(mi / 2) {
            let re = f64::from_le_bytes(next(&mut input)?);
            let im = f64::from_le_bytes(next(&mut input)?);
            uhat[index(n, m)] = Complex64::new(re, im);
        }
        states.push(SpectralState { uhat, time });
    }
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(m: usize, amp: f64, seed: u64) -> SpectralState {
        make_hs_data(m, SobolevSpec { s: 1.0, seed, amplitude: amp }).unwrap()
    }

    #[test]
    fn hs_data_examples() {
        let z = make_hs_data(64, SobolevSpec { s: 0.6, seed: 1, amplitude: 0.0 }).unwrap();
        assert_eq!(z, SpectralState::zeros(64).unwrap());
        let a = small(64, 0.3, 7);
        assert_eq!(a, small(64, 0.3, 7));
        assert_ne!(a, small(64, 0.3, 8));
        assert!(a.reality_defect() == 0.0);
        assert_eq!(a.coeff(0), Complex64::new(0.0, 0.0));
        // H^s norm from the defining sum over n
        let s = 0.6;
        let direct: f64 = (-32i64..=32).map(|n| (1.0 + n.abs() as f64).powf(2.0 * s) * a.coeff(n).norm_sqr()).sum::<f64>().sqrt();
        assert!((direct - a.hs_norm(s)).abs() < 1e-14 * direct);
        for n in 22..=32 {
            assert_eq!(a.coeff(n), Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn grid_round_trip() {
        let a = small(32, 0.5, 3);
        let b = SpectralState::from_grid(&a.to_grid(), 0.0).unwrap();
        assert!(a.hs_distance(&b, 0.0) < 1e-15);
        assert!(SpectralState::zeros(12).is_err());
    }

    #[test]
    fn linear_flow_is_exact_airy() {
        let phi = small(256, 1.0, 11);
        let cfg = SolverConfig::new(Nonlinearity::Zero, 1e-3, 0.1);
        let traj = solve(&phi, &cfg).unwrap();
        let last = traj.last();
        assert_eq!(last.time(), 0.1);
        let mut worst: f64 = 0.0;
        for n in -85i64..=85 {
            let exact = phi.coeff(n) * Complex64::from_polar(1.0, (n as f64).powi(3) * 0.1);
            worst = worst.max((last.coeff(n) - exact).norm());
        }
        assert!(worst <= 1e-9 * phi.hs_norm(0.0), "{worst}");
        for s in [0.0, 0.6, 2.0] {
            assert!((last.hs_norm(s) - phi.hs_norm(s)).abs() < 1e-12 * phi.hs_norm(s));
        }
        assert!(traj.conservation.momentum_drift < 1e-10);
    }

    #[test]
    fn constant_state_is_stationary() {
        let c = SpectralState::constant(64, 0.7).unwrap();
        for nl in [Nonlinearity::Power(3), Nonlinearity::Sin] {
            let traj = solve(&c, &SolverConfig::new(nl, 1e-3, 0.05)).unwrap();
            assert!(traj.last().hs_distance(&c, 0.0) < 1e-15);
        }
    }

    #[test]
    fn conservation_small_data() {
        for k in 1..=3u32 {
            let phi = small(128, 0.2, k as u64);
            let traj = solve(&phi, &SolverConfig::new(Nonlinearity::Power(k), 1e-4, 0.02)).unwrap();
            assert!(traj.conservation.mass_drift <= 1e-10);
            assert!(traj.conservation.momentum_drift <= 1e-8, "k={k}: {}", traj.conservation.momentum_drift);
        }
    }

    #[test]
    fn rk4_order() {
        // asymptotic regime needs dt·max|n|³ of order one
        let phi = small(64, 0.3, 5);
        let cfg = SolverConfig::new(Nonlinearity::Power(1), 5e-4, 0.1);
        let rep = self_convergence(&phi, &cfg).unwrap();
        assert!((3.5..=4.5).contains(&rep.order), "{rep:?}");
    }

    #[test]
    fn gauge_examples() {
        let phi = small(64, 0.3, 2);
        let v = solve(&phi, &SolverConfig::new(Nonlinearity::Zero, 1e-3, 0.01)).unwrap();
        let u = gauge_transform(&v.states, &Nonlinearity::Zero).unwrap();
        assert_eq!(u, v.states);
        let c = vec![SpectralState::constant(32, 0.4).unwrap(); 3];
        let gc = gauge_transform(&c, &Nonlinearity::Power(2)).unwrap();
        for s in &gc {
            assert!(s.hs_distance(&c[0], 0.0) < 1e-16);
        }
    }

    #[test]
    fn gauge_equivalence_small_data() {
        let phi = small(64, 0.3, 9);
        for k in [2u32, 3] {
            let rep = gauge_equivalence_check(&phi, &SolverConfig::new(Nonlinearity::Power(k), 1e-4, 0.02)).unwrap();
            assert!(rep.discrepancy < 1e-6, "k={k}: {rep:?}");
            assert!(rep.round_trip < 1e-9, "k={k}: {rep:?}");
        }
    }

    #[test]
    fn probe_examples() {
        let spec = SobolevSpec { s: 0.6, seed: 4, amplitude: 0.2 };
        let cfg = SolverConfig::new(Nonlinearity::Zero, 1e-3, 0.02);
        let rep = wellposedness_probe(64, spec, &cfg, 1.0, &[0.0, 1e-2, 1e-3]).unwrap();
        assert_eq!(rep.rows[0].ratio, 0.0);
        for r in &rep.rows[1..] {
            assert!((r.ratio - 1.0).abs() < 1e-9, "{r:?}");
        }
        assert!(rep.passes());
        assert!(wellposedness_probe(64, SobolevSpec { s: 0.5, ..spec }, &cfg, 1.0, &[1e-2]).is_err());
    }

    #[test]
    fn numeric_derivatives() {
        let f = Nonlinearity::Sin;
        let x: f64 = 0.3;
        let exact = [x.sin(), x.cos(), -x.sin(), -x.cos(), x.sin(), x.cos()];
        for (order, want) in exact.iter().enumerate() {
            let got = f.derivative(x, order as u32).unwrap();
            assert!((got - want).abs() < 1e-2, "order {order}: {got} vs {want}");
        }
        assert!(f.derivative(x, 6).is_err());
    }

    #[test]
    fn exports_round_trip() {
        let traj = solve(&small(16, 0.4, 1), &SolverConfig::new(Nonlinearity::Power(2), 1e-3, 0.003).with_store_every(1)).unwrap();
        let mut text = Vec::new();
        write_text(&traj.states, &mut text).unwrap();
        assert_eq!(read_text(&text[..]).unwrap(), traj.states);
        let mut bin = Vec::new();
        write_binary(&traj.states, &mut bin).unwrap();
        assert_eq!(&bin[..8], b"GKDV0001");
        assert_eq!(bin.len(), 16 + 16 + traj.states.len() * (8 + 16 * 16));
        assert_eq!(read_binary(&bin[..]).unwrap(), traj.states);
        bin[0] = b'X';
        assert!(matches!(read_binary(&bin[..]), Err(LabError::Format(_))));
    }
}
