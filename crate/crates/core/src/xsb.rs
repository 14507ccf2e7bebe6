//! Discrete `X_{s,b}` and `Y_s` norms on a periodic time window, sharp dyadic
//! projectors, and empirical checks of the linear and nonlinear estimates.
//!
//! A field holds spatial coefficients `û(n, t_i)` for `|n| <= N_x` at
//! `t_i = -T_w/2 + i Δt`. Its spectrum is `û(n, λ_j) = Δt Σ_i û(n, t_i) e^{-iλ_j t_i}`
//! on `λ_j = 2πj/T_w`, and every λ-integral is the lattice sum weighted by
//! `1/T_w = Δλ/2π`, which makes `‖u‖_{X_{0,0}}` the space-time `L²` norm.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{invalid, LabError, Result};
use crate::expsum::{tree_sum, MAX_GRID_CELLS};
use crate::fit::{loglog_fit, spread, LogLogFit};
use crate::gkdv::{dealias_cutoff, solve, Nonlinearity, SolverConfig, SpectralState};

#[inline]
fn bracket(x: f64) -> f64 {
    1.0 + x.abs()
}

fn freq(j: usize, m: usize) -> i64 {
    if j <= m / 2 {
        j as i64
    } else {
        j as i64 - m as i64
    }
}

/// Space-time data band-limited to `|n| <= N_x` on a window of length `T_w`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    nx: usize,
    window: f64,
    mt: usize,
    /// Row `n + N_x` holds the `M_t` time samples of `û(n, ·)`.
    rows: Vec<Complex64>,
}

impl SpaceTimeField {
    pub fn zeros(nx: usize, window: f64, mt: usize) -> Result<Self> {
        if !(window > 0.0 && window.is_finite()) {
            return Err(invalid(format!("window must be positive, got {window}")));
        }
        if mt < 2 || mt % 2 != 0 {
            return Err(invalid(format!("M_t must be even and >= 2, got {mt}")));
        }
        let cells = (2 * nx + 1).saturating_mul(mt);
        if cells > MAX_GRID_CELLS {
            return Err(LabError::Guard {
                what: "space-time field",
                needed: cells as u128,
                cap: MAX_GRID_CELLS as u128,
            });
        }
        Ok(SpaceTimeField {
            nx,
            window,
            mt,
            rows: vec![Complex64::new(0.0, 0.0); cells],
        })
    }

    /// Samples `û(n, t_i) = f(n, t_i)`.
    pub fn from_fn<F>(nx: usize, window: f64, mt: usize, f: F) -> Result<Self>
    where
        F: Fn(i64, f64) -> Complex64 + Sync,
    {
        let mut field = Self::zeros(nx, window, mt)?;
        let dt = field.dt();
        let t0 = -0.5 * window;
        field.rows.par_chunks_mut(mt).enumerate().for_each(|(r, row)| {
            let n = r as i64 - nx as i64;
            for (i, v) in row.iter_mut().enumerate() {
                *v = f(n, t0 + i as f64 * dt);
            }
        });
        Ok(field)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn mt(&self) -> usize {
        self.mt
    }

    pub fn dt(&self) -> f64 {
        self.window / self.mt as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        -0.5 * self.window + i as f64 * self.dt()
    }

    pub fn row(&self, n: i64) -> &[Complex64] {
        let r = (n + self.nx as i64) as usize;
        &self.rows[r * self.mt..(r + 1) * self.mt]
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        SpaceTimeField {
            rows: self.rows.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    /// Pointwise product with a real function of time.
    pub fn times(&self, g: impl Fn(f64) -> f64) -> Self {
        let weights: Vec<f64> = (0..self.mt).map(|i| g(self.time(i))).collect();
        let mut out = self.clone();
        for row in out.rows.chunks_mut(self.mt) {
            for (v, w) in row.iter_mut().zip(&weights) {
                *v *= *w;
            }
        }
        out
    }

    /// Spatial translation `u(· - a)`.
    pub fn translated(&self, a: f64) -> Self {
        let mut out = self.clone();
        for (r, row) in out.rows.chunks_mut(self.mt).enumerate() {
            let phase = Complex64::from_polar(1.0, -((r as i64 - self.nx as i64) as f64) * a);
            row.iter_mut().for_each(|v| *v *= phase);
        }
        out
    }

    /// `(∫ Σ_n |û(n, t)|² dt)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        let rows: Vec<f64> = self.rows.par_chunks(self.mt).map(|r| r.iter().map(|v| v.norm_sqr()).sum()).collect();
        (tree_sum(&rows) * self.dt()).sqrt()
    }

    pub fn spectrum(&self) -> XsbSpectrum {
        let fft = FftPlanner::new().plan_fft_forward(self.mt);
        let dt = self.dt();
        let mut rows = self.rows.clone();
        rows.par_chunks_mut(self.mt).for_each(|row| {
            fft.process(row);
            for (j, v) in row.iter_mut().enumerate() {
                // e^{-iλ_j t_0} = (-1)^j for t_0 = -T_w/2
                let sign = if freq(j, self.mt) % 2 == 0 { dt } else { -dt };
                *v *= sign;
            }
        });
        XsbSpectrum {
            nx: self.nx,
            window: self.window,
            mt: self.mt,
            rows,
        }
    }

    /// Values on the space-time grid `x_a = 2πa/P`, row-major by time sample.
    fn physical(&self, px: usize) -> Vec<Vec<Complex64>> {
        let ifft = FftPlanner::new().plan_fft_inverse(px);
        (0..self.mt)
            .into_par_iter()
            .map(|i| {
                let mut buf = vec![Complex64::new(0.0, 0.0); px];
                for n in -(self.nx as i64)..=(self.nx as i64) {
                    buf[n.rem_euclid(px as i64) as usize] += self.row(n)[i];
                }
                ifft.process(&mut buf);
                buf
            })
            .collect()
    }

    fn grid_size(&self, factor: usize) -> usize {
        (factor * self.nx + 2).next_power_of_two().max(16)
    }

    /// `(∫∫ |u|^p dx dt)^{1/p}` with normalized `dx`, on a grid fine enough that
    /// `|u|^p` is integrated exactly for even `p <= 8`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        self.mixed_norm(p, p)
    }

    /// `‖u‖_{L_t^q L_x^r}`.
    pub fn mixed_norm(&self, q: f64, r: f64) -> f64 {
        let px = self.grid_size(8);
        let slices: Vec<f64> = self
            .physical(px)
            .par_iter()
            .map(|row| {
                let mean = row.iter().map(|v| v.norm().powf(r)).sum::<f64>() / px as f64;
                mean.powf(q / r)
            })
            .collect();
        (tree_sum(&slices) * self.dt()).powf(1.0 / q)
    }
}

/// Lattice spectrum `û(n, λ_j)` of a field.
#[derive(Debug, Clone, PartialEq)]
pub struct XsbSpectrum {
    nx: usize,
    window: f64,
    mt: usize,
    rows: Vec<Complex64>,
}

impl XsbSpectrum {
    pub fn lambda(&self, j: usize) -> f64 {
        std::f64::consts::TAU * freq(j, self.mt) as f64 / self.window
    }

    /// Quadrature weight of one lattice node, `Δλ/2π = 1/T_w`.
    pub fn weight(&self) -> f64 {
        1.0 / self.window
    }

    pub fn row(&self, n: i64) -> &[Complex64] {
        let r = (n + self.nx as i64) as usize;
        &self.rows[r * self.mt..(r + 1) * self.mt]
    }

    pub fn to_field(&self) -> SpaceTimeField {
        let ifft = FftPlanner::new().plan_fft_inverse(self.mt);
        let scale = 1.0 / self.window;
        let mut rows = self.rows.clone();
        rows.par_chunks_mut(self.mt).for_each(|row| {
            for (j, v) in row.iter_mut().enumerate() {
                let sign = if freq(j, self.mt) % 2 == 0 { scale } else { -scale };
                *v *= sign;
            }
            ifft.process(row);
        });
        SpaceTimeField {
            nx: self.nx,
            window: self.window,
            mt: self.mt,
            rows,
        }
    }

    /// `Σ_n ⟨n⟩^{2s} f(n, row)` summed in a fixed order.
    fn reduce_rows(&self, s: f64, f: impl Fn(i64, &[Complex64]) -> f64 + Sync) -> f64 {
        let parts: Vec<f64> = (0..2 * self.nx + 1)
            .into_par_iter()
            .map(|r| {
                let n = r as i64 - self.nx as i64;
                bracket(n as f64).powf(2.0 * s) * f(n, self.row(n))
            })
            .collect();
        tree_sum(&parts)
    }

    /// `(Σ_n ⟨n⟩^{2s} ∫ ⟨λ - n³⟩^{2b} |û|² dλ)^{1/2}`.
    pub fn xsb(&self, s: f64, b: f64) -> f64 {
        let w = self.weight();
        self.reduce_rows(s, |n, row| {
            let n3 = (n as f64).powi(3);
            w * row
                .iter()
                .enumerate()
                .map(|(j, v)| bracket(self.lambda(j) - n3).powf(2.0 * b) * v.norm_sqr())
                .sum::<f64>()
        })
        .sqrt()
    }

    /// `(Σ_n ⟨n⟩^{2s} (∫ ⟨λ - n³⟩^{-c} |û| dλ)²)^{1/2}`.
    pub fn l2l1(&self, s: f64, c: f64) -> f64 {
        let w = self.weight();
        self.reduce_rows(s, |n, row| {
            let n3 = (n as f64).powi(3);
            let l1: f64 = row
                .iter()
                .enumerate()
                .map(|(j, v)| v.norm() * bracket(self.lambda(j) - n3).powf(-c))
                .sum();
            (w * l1).powi(2)
        })
        .sqrt()
    }

    /// `‖u‖_{X_{s,1/2}} + (Σ_n ⟨n⟩^{2s} (∫|û| dλ)²)^{1/2}`.
    pub fn ys(&self, s: f64) -> f64 {
        self.xsb(s, 0.5) + self.l2l1(s, 0.0)
    }
}

pub fn xsb_norm(field: &SpaceTimeField, s: f64, b: f64) -> f64 {
    field.spectrum().xsb(s, b)
}

pub fn ys_norm(field: &SpaceTimeField, s: f64) -> f64 {
    field.spectrum().ys(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// `P_K`: `|n| <= K`.
    Space,
    /// `Q_L`: `|λ| <= L`.
    Time,
}

/// Sharp cutoff at a dyadic scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DyadicProjector {
    pub scale: u64,
    pub axis: Axis,
}

impl DyadicProjector {
    pub fn new(scale: u64, axis: Axis) -> Result<Self> {
        if !scale.is_power_of_two() {
            return Err(invalid(format!("dyadic scale must be a power of two, got {scale}")));
        }
        Ok(DyadicProjector { scale, axis })
    }

    fn keeps(&self, spec: &XsbSpectrum, n: i64, j: usize, scale: f64) -> bool {
        match self.axis {
            Axis::Space => n.unsigned_abs() as f64 <= scale,
            Axis::Time => spec.lambda(j).abs() <= scale,
        }
    }

    fn mask(&self, spec: &XsbSpectrum, keep: impl Fn(i64, usize) -> bool) -> XsbSpectrum {
        let mut out = spec.clone();
        for (r, row) in out.rows.chunks_mut(spec.mt).enumerate() {
            let n = r as i64 - spec.nx as i64;
            for (j, v) in row.iter_mut().enumerate() {
                if !keep(n, j) {
                    *v = Complex64::new(0.0, 0.0);
                }
            }
        }
        out
    }

    /// `P_K u` or `Q_L u`.
    pub fn apply(&self, spec: &XsbSpectrum) -> XsbSpectrum {
        let k = self.scale as f64;
        self.mask(spec, |n, j| self.keeps(spec, n, j, k))
    }

    /// `P_K u - P_{K/2} u` (or `Π_L u`); the scale-one block is `P_1 u` itself.
    pub fn block(&self, spec: &XsbSpectrum) -> XsbSpectrum {
        let k = self.scale as f64;
        let below = if self.scale == 1 { -1.0 } else { k / 2.0 };
        self.mask(spec, |n, j| self.keeps(spec, n, j, k) && !self.keeps(spec, n, j, below))
    }

    /// `P_K` applied directly to the time samples of a field.
    pub fn apply_space(&self, field: &SpaceTimeField) -> SpaceTimeField {
        let mut out = field.clone();
        for (r, row) in out.rows.chunks_mut(field.mt).enumerate() {
            let n = r as i64 - field.nx as i64;
            if n.unsigned_abs() > self.scale {
                row.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            }
        }
        out
    }
}

/// Dyadic scales `1, 2, 4, ...` up to the first one covering `top`.
pub fn dyadic_scales(top: u64) -> Vec<u64> {
    let mut out = vec![1u64];
    while *out.last().unwrap() < top {
        out.push(out.last().unwrap() * 2);
    }
    out
}

/// Smooth cutoff: `1` on `|t| <= 1`, `0` on `|t| >= 2`, built from `e^{-1/x}`.
pub fn psi(t: f64) -> f64 {
    let h = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    let x = 2.0 - t.abs();
    if x >= 1.0 {
        1.0
    } else if x <= 0.0 {
        0.0
    } else {
        h(x) / (h(x) + h(1.0 - x))
    }
}

/// Power-of-two sample count giving at least 8 samples per period at `lambda_max`.
pub fn window_samples(window: f64, lambda_max: f64) -> usize {
    let need = (8.0 * lambda_max * window / std::f64::consts::TAU).ceil() as usize;
    need.max(64).next_power_of_two()
}

fn highest_mode(phi: &SpectralState) -> usize {
    let m = phi.modes() as i64;
    ((-m / 2 + 1)..=(m / 2))
        .filter(|&n| phi.coeff(n).norm() > 0.0)
        .map(|n| n.unsigned_abs() as usize)
        .max()
        .unwrap_or(0)
        .max(1)
}

/// `ℒu = ψ_δ(t) e^{-t∂³} φ`, i.e. `û(n, t) = ψ(t/δ) e^{in³t} φ̂(n)`.
pub fn linear_field(phi: &SpectralState, delta: f64, window: f64, mt: usize) -> Result<SpaceTimeField> {
    if !(delta > 0.0 && 2.0 * delta <= 0.5 * window) {
        return Err(invalid(format!("δ = {delta} does not fit the window {window}")));
    }
    SpaceTimeField::from_fn(highest_mode(phi), window, mt, |n, t| {
        phi.coeff(n) * Complex64::from_polar(psi(t / delta), (n as f64).powi(3) * t)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearEstimateReport {
    pub s: f64,
    pub data_norm: f64,
    /// `(δ, ‖ℒu‖_{Y_s} / ‖φ‖_{H^s})`.
    pub ratios: Vec<(f64, f64)>,
    pub drift: f64,
    pub mt: usize,
}

pub const LINEAR_DRIFT_BOUND: f64 = 4.0;

impl LinearEstimateReport {
    pub fn passes(&self) -> bool {
        self.drift <= LINEAR_DRIFT_BOUND
    }
}

fn check_deltas(deltas: &[f64]) -> Result<f64> {
    if deltas.is_empty() || deltas.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
        return Err(invalid("δ list must be non-empty and positive"));
    }
    Ok(deltas.iter().cloned().fold(0.0, f64::max))
}

/// `‖ψ_δ e^{-t∂³}φ‖_{Y_s} / ‖φ‖_{H^s}` on the window `T_w = 8 max δ`.
pub fn linear_estimate_check(phi: &SpectralState, s: f64, deltas: &[f64]) -> Result<LinearEstimateReport> {
    if s <= 0.5 {
        return Err(invalid(format!("the linear estimate needs s > 1/2, got {s}")));
    }
    let dmax = check_deltas(deltas)?;
    let dmin = deltas.iter().cloned().fold(f64::INFINITY, f64::min);
    let window = 8.0 * dmax;
    let nx = highest_mode(phi);
    let mt = window_samples(window, (nx as f64).powi(3) + 64.0 / dmin);
    let data_norm = phi.hs_norm(s);
    let mut ratios = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let ratio = if data_norm == 0.0 {
            0.0
        } else {
            ys_norm(&linear_field(phi, delta, window, mt)?, s) / data_norm
        };
        ratios.push((delta, ratio));
    }
    let values: Vec<f64> = ratios.iter().map(|r| r.1).collect();
    let drift = if data_norm == 0.0 { 1.0 } else { spread(&values) };
    Ok(LinearEstimateReport {
        s,
        data_norm,
        ratios,
        drift,
        mt,
    })
}

/// `w = (F(u) - ∫F(u)) u_x` for a real field, truncated to `|n| <= out_nx`.
pub fn nonlinear_w(field: &SpaceTimeField, f: &Nonlinearity, out_nx: usize) -> Result<SpaceTimeField> {
    let mut out = SpaceTimeField::zeros(out_nx, field.window, field.mt)?;
    if f.is_zero() {
        return Ok(out);
    }
    // no aliasing into |n| <= out_nx from products of band (k+1) N_x
    let px = (field.nx + 2 * out_nx + 2).next_power_of_two().max(16);
    let mut planner = FftPlanner::new();
    let inv = planner.plan_fft_inverse(px);
    let fwd = planner.plan_fft_forward(px);
    let slices: Vec<Vec<Complex64>> = (0..field.mt)
        .into_par_iter()
        .map(|i| {
            let mut u = vec![Complex64::new(0.0, 0.0); px];
            let mut ux = vec![Complex64::new(0.0, 0.0); px];
            for n in -(field.nx as i64)..=(field.nx as i64) {
                let c = field.row(n)[i];
                let k = n.rem_euclid(px as i64) as usize;
                u[k] = c;
                ux[k] = c * Complex64::new(0.0, n as f64);
            }
            inv.process(&mut u);
            inv.process(&mut ux);
            let fu: Vec<f64> = u.iter().map(|v| f.eval(v.re)).collect();
            let mean = fu.iter().sum::<f64>() / px as f64;
            let mut w: Vec<Complex64> = fu.iter().zip(&ux).map(|(a, d)| Complex64::new((a - mean) * d.re, 0.0)).collect();
            fwd.process(&mut w);
            (-(out_nx as i64)..=(out_nx as i64))
                .map(|n| w[n.rem_euclid(px as i64) as usize] / px as f64)
                .collect()
        })
        .collect();
    for (i, slice) in slices.iter().enumerate() {
        for (r, v) in slice.iter().enumerate() {
            out.rows[r * field.mt + i] = *v;
        }
    }
    Ok(out)
}

/// `‖w‖_{X_{s,-1/2}} + (Σ_n ⟨n⟩^{2s} (∫ |ŵ| / ⟨λ - n³⟩ dλ)²)^{1/2}`.
pub fn nonlinear_lhs(w: &SpaceTimeField, s: f64) -> f64 {
    let spec = w.spectrum();
    spec.xsb(s, -0.5) + spec.l2l1(s, 1.0)
}

/// Solution samples `û(n, t_i)` for `|t_i| <= t_max` (zero elsewhere); negative
/// times use the symmetry `u(x, t) ↦ u(-x, -t)` of the equation.
pub fn solver_samples(
    phi: &SpectralState,
    nonlinearity: &Nonlinearity,
    window: f64,
    mt: usize,
    t_max: f64,
) -> Result<SpaceTimeField> {
    let nx = dealias_cutoff(phi.modes()) as usize;
    let mut field = SpaceTimeField::zeros(nx, window, mt)?;
    let dt = field.dt();
    let steps = ((t_max / dt).floor() as usize).min(mt / 2 - 1);
    if steps == 0 {
        return Err(invalid("sampling window shorter than one time step"));
    }
    let mut cfg = SolverConfig::new(nonlinearity.clone(), dt, steps as f64 * dt).with_store_every(1);
    cfg.check_every = steps;
    let reflected = SpectralState::from_coeffs(phi.coeffs().iter().map(|c| c.conj()).collect(), 0.0)?;
    let (fwd, bwd) = rayon::join(|| solve(phi, &cfg), || solve(&reflected, &cfg));
    let (fwd, bwd) = (fwd?, bwd?);
    let centre = mt / 2;
    for i in 0..=steps {
        for n in -(nx as i64)..=(nx as i64) {
            let r = (n + nx as i64) as usize;
            field.rows[r * mt + centre + i] = fwd.states[i].coeff(n);
            // û(n, -t) = v̂(-n, t) with v(x, t) = u(-x, -t)
            field.rows[r * mt + centre - i] = bwd.states[i].coeff(-n);
        }
    }
    Ok(field)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub delta: f64,
    pub lhs: f64,
    pub ys: f64,
    /// `lhs / ys^{power}`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub s: f64,
    /// `k + 1` for `F(u) = u^k`, `4` otherwise.
    pub power: i32,
    pub rows: Vec<ScalingRow>,
    /// Slope of `ln ratio` against `ln δ`; `None` when `w` vanishes identically.
    pub fit: Option<LogLogFit>,
    pub mt: usize,
}

impl ScalingReport {
    pub fn theta(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    pub fn passes(&self) -> bool {
        self.theta().is_some_and(|t| t > 0.0)
    }
}

/// Largest `|n|` that `w` can reach, and the exponent on `‖u‖_{Y_s}`.
fn nonlinear_band(f: &Nonlinearity, nx: usize) -> (usize, i32) {
    match f {
        Nonlinearity::Zero => (nx, 1),
        Nonlinearity::Power(k) => ((*k as usize + 1) * nx, *k as i32 + 1),
        // non-polynomial F: truncate at the cubic band
        _ => (4 * nx, 4),
    }
}

/// Fits `θ` in `LHS(w_δ) ≲ δ^θ ‖u_δ‖_{Y_s}^{power}` with `u_δ = ψ_δ u` and `u`
/// from the solver on `|t| <= 2 max δ`.
pub fn nonlinear_scaling_check(
    phi: &SpectralState,
    nonlinearity: &Nonlinearity,
    s: f64,
    deltas: &[f64],
) -> Result<ScalingReport> {
    if s <= 0.5 {
        return Err(invalid(format!("the nonlinear estimate needs s > 1/2, got {s}")));
    }
    let dmax = check_deltas(deltas)?;
    let dmin = deltas.iter().cloned().fold(f64::INFINITY, f64::min);
    let window = 8.0 * dmax;
    let nx = dealias_cutoff(phi.modes()) as usize;
    let (out_nx, power) = nonlinear_band(nonlinearity, nx);
    let lambda_max = ((power.max(2)) as f64) * (nx as f64).powi(3) + 64.0 / dmin;
    let mt = window_samples(window, lambda_max);
    let u = solver_samples(phi, nonlinearity, window, mt, 2.0 * dmax)?;
    scaling_from_samples(&u, nonlinearity, s, deltas, out_nx, power, mt)
}

fn scaling_from_samples(
    u: &SpaceTimeField,
    nonlinearity: &Nonlinearity,
    s: f64,
    deltas: &[f64],
    out_nx: usize,
    power: i32,
    mt: usize,
) -> Result<ScalingReport> {
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let ud = u.times(|t| psi(t / delta));
        let lhs = nonlinear_lhs(&nonlinear_w(&ud, nonlinearity, out_nx)?, s);
        let ys = ys_norm(&ud, s);
        let ratio = if lhs == 0.0 { 0.0 } else { lhs / ys.powi(power) };
        rows.push(ScalingRow { delta, lhs, ys, ratio });
    }
    let fit = if rows.iter().all(|r| r.lhs == 0.0) {
        None
    } else {
        Some(loglog_fit(&rows.iter().map(|r| (r.delta, r.ratio)).collect::<Vec<_>>(), 2)?)
    };
    Ok(ScalingReport {
        s,
        power,
        rows,
        fit,
        mt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Embedding {
    /// `X_{0,1/3} ⊆ L⁴_{x,t}`.
    L4,
    /// `X_{1/4,1/2} ⊆ L⁶_{x,t}`.
    Lq,
    /// `X_{1/4,1/4} ⊆ L³_t L²_x`.
    Mixed,
}

impl Embedding {
    /// `(s, b)` of the `X` side.
    pub fn exponents(self) -> (f64, f64) {
        match self {
            Embedding::L4 => (0.0, 1.0 / 3.0),
            Embedding::Lq => (0.25, 0.5),
            Embedding::Mixed => (0.25, 0.25),
        }
    }

    pub fn lebesgue_side(self, field: &SpaceTimeField) -> f64 {
        match self {
            Embedding::L4 => field.lp_norm(4.0),
            Embedding::Lq => field.lp_norm(6.0),
            Embedding::Mixed => field.mixed_norm(3.0, 2.0),
        }
    }

    /// `‖u‖_{L-side} / ‖u‖_{X-side}`.
    pub fn ratio(self, field: &SpaceTimeField) -> f64 {
        let (s, b) = self.exponents();
        self.lebesgue_side(field) / xsb_norm(field, s, b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingReport {
    pub which: Embedding,
    /// `(N_x, max ratio over seeds)`.
    pub rows: Vec<(usize, f64)>,
    pub drift: f64,
}

pub const EMBEDDING_DRIFT_BOUND: f64 = 4.0;

impl EmbeddingReport {
    pub fn passes(&self) -> bool {
        self.drift <= EMBEDDING_DRIFT_BOUND
    }
}

/// Time-localized random field near the cubic curve:
/// `û(n, t) = ψ(t) a_n e^{in³t} (1 + e^{iω_n t}/2)`, `‖a‖₂ = 1`, `|ω_n| <= 8`.
pub fn random_field(nx: usize, seed: u64) -> Result<SpaceTimeField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a: Vec<Complex64> = (0..2 * nx + 1)
        .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
        .collect();
    let norm = a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    a.iter_mut().for_each(|c| *c /= norm);
    let omega: Vec<f64> = (0..2 * nx + 1).map(|_| 16.0 * rng.gen::<f64>() - 8.0).collect();
    let window = 8.0;
    let mt = window_samples(window, (nx as f64).powi(3) + 72.0);
    SpaceTimeField::from_fn(nx, window, mt, |n, t| {
        let r = (n + nx as i64) as usize;
        a[r] * Complex64::from_polar(psi(t), (n as f64).powi(3) * t) * (1.0 + 0.5 * Complex64::from_polar(1.0, omega[r] * t))
    })
}

pub fn embedding_check(which: Embedding, ladder: &[usize], seeds: &[u64]) -> Result<EmbeddingReport> {
    if ladder.is_empty() || seeds.is_empty() || ladder.contains(&0) {
        return Err(invalid("embedding check needs a non-empty ladder of N_x >= 1 and seeds"));
    }
    let mut rows = Vec::with_capacity(ladder.len());
    for &nx in ladder {
        let mut worst: f64 = 0.0;
        for &seed in seeds {
            worst = worst.max(which.ratio(&random_field(nx, seed)?));
        }
        rows.push((nx, worst));
    }
    let drift = spread(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
    Ok(EmbeddingReport { which, rows, drift })
}

/// Largest pointwise defect of
/// `Σ_{K_min <= K <= K_max} [F(P_K u) - F(P_{K/2} u)] + F(P_{K_min/2} u) - F(P_{K_max} u)`
/// over the physical grid, for a real field.
pub fn lp_telescope_check(field: &SpaceTimeField, f: &Nonlinearity, k_min: u64, k_max: u64) -> Result<f64> {
    if !(k_min.is_power_of_two() && k_max.is_power_of_two() && k_min <= k_max) {
        return Err(invalid(format!("need dyadic 1 <= K_min <= K_max, got {k_min}, {k_max}")));
    }
    let px = field.grid_size(2);
    // P_{K/2} for K = 1 keeps only the zero mode
    let scales: Vec<u64> = std::iter::once(0).chain(dyadic_scales(k_max)).collect();
    let values: Vec<Vec<Vec<Complex64>>> = scales
        .iter()
        .map(|&k| {
            DyadicProjector {
                scale: k.max(1),
                axis: Axis::Space,
            }
            .apply_space(&if k == 0 { zero_mode(field) } else { field.clone() })
            .physical(px)
        })
        .collect();
    let at = |k: u64| scales.iter().position(|&x| x == k).unwrap();
    let lo = at(k_min / 2);
    let hi = at(k_max);
    let mut worst: f64 = 0.0;
    for i in 0..field.mt {
        for a in 0..px {
            let fv = |level: usize| f.eval(values[level][i][a].re);
            let mut sum = 0.0;
            for level in lo + 1..=hi {
                sum += fv(level) - fv(level - 1);
            }
            worst = worst.max((sum + fv(lo) - fv(hi)).abs());
        }
    }
    Ok(worst)
}

fn zero_mode(field: &SpaceTimeField) -> SpaceTimeField {
    let mut out = field.clone();
    for (r, row) in out.rows.chunks_mut(field.mt).enumerate() {
        if r != field.nx {
            row.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        }
    }
    out
}

/// Number of dyadic increments `F(P_K u) - F(P_{K/2} u)` that are not identically zero.
pub fn nonzero_increments(field: &SpaceTimeField, f: &Nonlinearity, k_max: u64) -> usize {
    let px = field.grid_size(2);
    let mut prev = zero_mode(field).physical(px);
    let mut count = 0;
    for k in dyadic_scales(k_max) {
        let cur = DyadicProjector { scale: k, axis: Axis::Space }.apply_space(field).physical(px);
        let differs = cur.iter().zip(&prev).any(|(a, b)| a.iter().zip(b).any(|(x, y)| f.eval(x.re) != f.eval(y.re)));
        count += differs as usize;
        prev = cur;
    }
    count
}
