//! Pseudospectral time evolution, conservation monitoring, orbit distance and
//! the critical-case (α = ½) rescaling diagnostics.
//!
//! Both families are written as `û_t = Λ(ξ)û + M(ξ)·(u^k)^` with a dealiased
//! power `u^k`: fKdV has `Λ = iξβ(ξ)`, `M = -iξκ`, `k = p+1`; fBBM has
//! `Λ = M = -iξ/(1+|ξ|^α)`, `k = 2` for the linear and quadratic parts
//! respectively. A frame speed `s` adds `iξs` to `Λ`.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, NormKind, PaddedWork, C64};
use crate::specops::WaveOperator;
use crate::waves::{self, Family, ModelParams, WaveProfile};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Exponential time differencing, fourth order, contour-integral coefficients.
    Etdrk4,
    /// Integrating-factor RK4.
    Ifrk4,
    /// Classical RK4 on the full right-hand side.
    Rk4,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Etdrk4 => "etdrk4",
            Scheme::Ifrk4 => "ifrk4",
            Scheme::Rk4 => "rk4",
        }
    }

    /// Largest admissible `dt·max|Λ|`.
    pub fn envelope(self) -> f64 {
        match self {
            Scheme::Etdrk4 | Scheme::Ifrk4 => 40.0,
            Scheme::Rk4 => 2.8,
        }
    }

    /// The scheme each family uses unless told otherwise.
    pub fn default_for(params: &ModelParams) -> Self {
        match params.family {
            Family::Fbbm => Scheme::Rk4,
            _ => Scheme::Etdrk4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvolveOptions {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_final: f64,
    /// Steps between stored snapshots; the final state is always stored.
    pub stride: usize,
    pub frame_speed: f64,
    /// Stop when `‖u‖_∞` exceeds this multiple of the initial value.
    pub amplitude_guard: f64,
    /// Stop when the `D^{α/2}` seminorm exceeds this multiple of the initial value.
    pub seminorm_guard: f64,
    /// Stop when `E` drifts by more than this fraction of `max(|E(0)|, F(0))`.
    /// On a fixed grid a collapsing solution shows up here first.
    pub energy_guard: Option<f64>,
    /// Length of the diagnostics ring kept in [`EvolutionState`].
    pub ring: usize,
    /// Steps between guard and diagnostics evaluations (and observer calls);
    /// snapshot steps are always checked.
    pub check_every: usize,
}

impl EvolveOptions {
    pub fn new(scheme: Scheme, dt: f64, t_final: f64) -> Self {
        EvolveOptions {
            scheme,
            dt,
            t_final,
            stride: 100,
            frame_speed: 0.0,
            amplitude_guard: 1e3,
            seminorm_guard: 1e6,
            energy_guard: None,
            ring: 64,
            check_every: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    BlowupDetected { t: f64 },
    NonFiniteSample { t: f64 },
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub field: Field,
    pub energy: f64,
    pub mass: f64,
}

/// State handed to observers after every step.
#[derive(Clone, Debug)]
pub struct EvolutionState {
    pub u: Field,
    pub t: f64,
    pub step: usize,
    pub scheme: Scheme,
    pub dt: f64,
    /// Most recent `(t, E, F)` samples, oldest first.
    pub ring: VecDeque<(f64, f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub params: ModelParams,
    pub scheme: Scheme,
    pub dt: f64,
    pub frame_speed: f64,
    pub steps: usize,
    pub snapshots: Vec<Snapshot>,
    pub outcome: Outcome,
}

impl Trajectory {
    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectory holds at least the initial state")
    }

    pub fn is_partial(&self) -> bool {
        self.outcome != Outcome::Completed
    }
}

struct Rhs {
    grid: Arc<Grid>,
    lin: Vec<C64>,
    mult: Vec<C64>,
    power: u32,
    padded: usize,
}

impl Rhs {
    fn new(params: &ModelParams, grid: &Arc<Grid>, frame: f64) -> Self {
        let n = grid.len();
        let ny = grid.nyquist();
        let beta = grid.symbol_values(&params.dispersion());
        let (_, kappa) = params.profile_coefficients();
        let mut lin = vec![C64::new(0.0, 0.0); n];
        let mut mult = vec![C64::new(0.0, 0.0); n];
        for k in 0..n {
            if k == ny {
                continue;
            }
            let ik = C64::new(0.0, grid.wavenumber(k));
            match params.family {
                Family::Fbbm => {
                    let m = -ik / (1.0 + beta[k].re);
                    lin[k] = m + ik * frame;
                    mult[k] = m;
                }
                _ => {
                    // fBBM carries c in κ; the evolution equation does not
                    lin[k] = ik * beta[k].re + ik * frame;
                    mult[k] = -ik * kappa;
                }
            }
        }
        let power = match params.family {
            Family::Fbbm => 2,
            _ => params.p + 1,
        };
        Rhs { grid: grid.clone(), lin, mult, power, padded: grid.padded_len(power as usize) }
    }

    fn nonlinear(&self, v: &[C64], out: &mut [C64], pad: &mut PaddedWork) {
        pad.load(v);
        let k = self.power as i32;
        pad.phys.iter_mut().for_each(|x| *x = x.powi(k));
        pad.store(out);
        out.iter_mut().zip(&self.mult).for_each(|(a, m)| *a *= m);
    }

    fn full(&self, v: &[C64], out: &mut [C64], pad: &mut PaddedWork) {
        self.nonlinear(v, out, pad);
        out.iter_mut().zip(v.iter().zip(&self.lin)).for_each(|(a, (x, l))| *a += x * l);
    }

    fn stiffness(&self) -> f64 {
        self.lin.iter().fold(0.0f64, |m, z| m.max(z.norm()))
    }
}

/// ETDRK4 coefficients by the mean over 32 points on a unit circle about `hΛ`.
struct EtdCoefficients {
    e: Vec<C64>,
    e2: Vec<C64>,
    q: Vec<C64>,
    f1: Vec<C64>,
    f2: Vec<C64>,
    f3: Vec<C64>,
}

const CONTOUR_POINTS: usize = 32;

impl EtdCoefficients {
    fn new(lin: &[C64], h: f64) -> Self {
        let roots: Vec<C64> = (0..CONTOUR_POINTS)
            .map(|j| C64::from_polar(1.0, PI * (j as f64 + 0.5) / CONTOUR_POINTS as f64 * 2.0))
            .collect();
        let n = lin.len();
        let mut out = EtdCoefficients {
            e: Vec::with_capacity(n),
            e2: Vec::with_capacity(n),
            q: Vec::with_capacity(n),
            f1: Vec::with_capacity(n),
            f2: Vec::with_capacity(n),
            f3: Vec::with_capacity(n),
        };
        let m = CONTOUR_POINTS as f64;
        for l in lin {
            let hl = l * h;
            out.e.push(hl.exp());
            out.e2.push((hl * 0.5).exp());
            let (mut q, mut f1, mut f2, mut f3) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0));
            for r in &roots {
                let z = hl + r;
                let ez = z.exp();
                let z3 = z * z * z;
                q += ((z * 0.5).exp() - 1.0) / z;
                f1 += (-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3;
                f2 += (2.0 + z + ez * (z - 2.0)) / z3;
                f3 += (-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3;
            }
            out.q.push(q * (h / m));
            out.f1.push(f1 * (h / m));
            out.f2.push(f2 * (h / m));
            out.f3.push(f3 * (h / m));
        }
        out
    }
}

struct Stepper {
    rhs: Rhs,
    scheme: Scheme,
    dt: f64,
    etd: Option<EtdCoefficients>,
    pad: PaddedWork,
    buf: [Vec<C64>; 6],
}

impl Stepper {
    fn new(rhs: Rhs, scheme: Scheme, dt: f64) -> Self {
        let etd = match scheme {
            Scheme::Etdrk4 => Some(EtdCoefficients::new(&rhs.lin, dt)),
            Scheme::Ifrk4 => Some(EtdCoefficients {
                e: rhs.lin.iter().map(|l| (l * dt).exp()).collect(),
                e2: rhs.lin.iter().map(|l| (l * (0.5 * dt)).exp()).collect(),
                q: Vec::new(),
                f1: Vec::new(),
                f2: Vec::new(),
                f3: Vec::new(),
            }),
            Scheme::Rk4 => None,
        };
        let n = rhs.grid.len();
        let pad = rhs.grid.padded_work(rhs.padded);
        let buf = std::array::from_fn(|_| vec![C64::new(0.0, 0.0); n]);
        Stepper { rhs, scheme, dt, etd, pad, buf }
    }

    /// Advance the spectrum `v` by one step in place.
    fn step(&mut self, v: &mut [C64]) {
        let h = self.dt;
        let n = v.len();
        let rhs = &self.rhs;
        let pad = &mut self.pad;
        let [k1, k2, k3, k4, a, b] = &mut self.buf;
        match self.scheme {
            Scheme::Etdrk4 => {
                let c = self.etd.as_ref().expect("etd coefficients");
                rhs.nonlinear(v, k1, pad);
                (0..n).for_each(|k| a[k] = c.e2[k] * v[k] + c.q[k] * k1[k]);
                rhs.nonlinear(a, k2, pad);
                (0..n).for_each(|k| b[k] = c.e2[k] * v[k] + c.q[k] * k2[k]);
                rhs.nonlinear(b, k3, pad);
                (0..n).for_each(|k| b[k] = c.e2[k] * a[k] + c.q[k] * (k3[k] * 2.0 - k1[k]));
                rhs.nonlinear(b, k4, pad);
                (0..n).for_each(|k| {
                    v[k] = c.e[k] * v[k] + c.f1[k] * k1[k] + c.f2[k] * (k2[k] + k3[k]) * 2.0 + c.f3[k] * k4[k]
                });
            }
            Scheme::Ifrk4 => {
                let c = self.etd.as_ref().expect("integrating factors");
                rhs.nonlinear(v, k1, pad);
                (0..n).for_each(|k| a[k] = c.e2[k] * (v[k] + k1[k] * (0.5 * h)));
                rhs.nonlinear(a, k2, pad);
                (0..n).for_each(|k| b[k] = c.e2[k] * v[k] + k2[k] * (0.5 * h));
                rhs.nonlinear(b, k3, pad);
                (0..n).for_each(|k| a[k] = c.e[k] * v[k] + c.e2[k] * k3[k] * h);
                rhs.nonlinear(a, k4, pad);
                (0..n).for_each(|k| {
                    v[k] = c.e[k] * (v[k] + k1[k] * (h / 6.0)) + c.e2[k] * (k2[k] + k3[k]) * (h / 3.0) + k4[k] * (h / 6.0)
                });
            }
            Scheme::Rk4 => {
                rhs.full(v, k1, pad);
                (0..n).for_each(|k| a[k] = v[k] + k1[k] * (0.5 * h));
                rhs.full(a, k2, pad);
                (0..n).for_each(|k| b[k] = v[k] + k2[k] * (0.5 * h));
                rhs.full(b, k3, pad);
                (0..n).for_each(|k| a[k] = v[k] + k3[k] * h);
                rhs.full(a, k4, pad);
                (0..n).for_each(|k| v[k] += (k1[k] + (k2[k] + k3[k]) * 2.0 + k4[k]) * (h / 6.0));
            }
        }
    }
}

/// `dt·max|Λ|` for the given setup.
pub fn stiffness_number(params: &ModelParams, grid: &Arc<Grid>, dt: f64, frame_speed: f64) -> f64 {
    dt * Rhs::new(params, grid, frame_speed).stiffness()
}

/// `dt·ξ_max·max|∂N/∂u|`, the explicit limit the nonlinear term imposes.
pub fn advective_number(u: &Field, params: &ModelParams, dt: f64) -> f64 {
    let g = &u.grid;
    let xi_max = PI / g.dx();
    let amp = u.max_abs();
    let rate = match params.family {
        Family::Fbbm => 2.0 * amp,
        _ => {
            let (_, kappa) = params.profile_coefficients();
            kappa * (params.p + 1) as f64 * amp.powi(params.p as i32)
        }
    };
    dt * xi_max * rate
}

/// Step size keeping both the linear and the advective numbers inside the
/// scheme's envelope, the latter at `target`.
pub fn suggest_dt(u0: &Field, params: &ModelParams, scheme: Scheme, frame_speed: f64, target: f64) -> f64 {
    let lin = stiffness_number(params, &u0.grid, 1.0, frame_speed);
    let adv = advective_number(u0, params, 1.0);
    let mut dt = 0.9 * scheme.envelope() / lin.max(f64::MIN_POSITIVE);
    if adv > 0.0 {
        dt = dt.min(target / adv);
    }
    dt
}

/// Evolve `u0` to `t_final`.
pub fn evolve(u0: &Field, params: &ModelParams, opts: &EvolveOptions) -> Result<Trajectory> {
    evolve_with(u0, params, opts, &mut |_| {})
}

/// Evolve `u0`, calling `observer` after every step.
pub fn evolve_with(
    u0: &Field,
    params: &ModelParams,
    opts: &EvolveOptions,
    observer: &mut dyn FnMut(&EvolutionState),
) -> Result<Trajectory> {
    if !(opts.dt > 0.0) || !(opts.t_final >= 0.0) {
        return Err(Error::Config(format!("need dt > 0 and T >= 0, got dt = {}, T = {}", opts.dt, opts.t_final)));
    }
    let grid = u0.grid.clone();
    let rhs = Rhs::new(params, &grid, opts.frame_speed);
    let value = opts.dt * rhs.stiffness();
    if value > opts.scheme.envelope() {
        return Err(Error::StepTooLarge { dt: opts.dt, value });
    }
    let mut stepper = Stepper::new(rhs, opts.scheme, opts.dt);
    let steps = (opts.t_final / opts.dt).round() as usize;
    let stride = opts.stride.max(1);

    let mut spec = grid.forward(&u0.values);
    spec[grid.nyquist()] = C64::new(0.0, 0.0);
    let u_start = Field::new(grid.clone(), grid.inverse_real(spec.clone()))?;
    let (e0, f0) = waves::energy_mass(&u_start, params);
    let amp0 = u_start.max_abs().max(f64::MIN_POSITIVE);
    let semi0 = seminorm(&grid, &spec, params.alpha).max(f64::MIN_POSITIVE);

    let mut state = EvolutionState {
        u: u_start.clone(),
        t: 0.0,
        step: 0,
        scheme: opts.scheme,
        dt: opts.dt,
        ring: VecDeque::with_capacity(opts.ring),
    };
    state.ring.push_back((0.0, e0, f0));
    let mut snapshots = vec![Snapshot { t: 0.0, field: u_start, energy: e0, mass: f0 }];
    let mut outcome = Outcome::Completed;
    let mut done = 0;
    let mut next = spec.clone();
    for step in 1..=steps {
        next.copy_from_slice(&spec);
        stepper.step(&mut next);
        let t = step as f64 * opts.dt;
        if next.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            outcome = Outcome::NonFiniteSample { t };
            break;
        }
        let snap = step % stride == 0 || step == steps;
        if !snap && step % opts.check_every.max(1) != 0 {
            std::mem::swap(&mut spec, &mut next);
            done = step;
            continue;
        }
        let vals = grid.inverse_real(next.clone());
        if vals.iter().any(|x| !x.is_finite()) {
            outcome = Outcome::NonFiniteSample { t };
            break;
        }
        let amp = vals.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if amp > opts.amplitude_guard * amp0 || seminorm(&grid, &next, params.alpha) > opts.seminorm_guard * semi0 {
            outcome = Outcome::BlowupDetected { t };
            break;
        }
        let field = Field::new(grid.clone(), vals)?;
        let (e, f) = waves::energy_mass(&field, params);
        if let Some(tol) = opts.energy_guard {
            if (e - e0).abs() > tol * e0.abs().max(f0) {
                outcome = Outcome::BlowupDetected { t };
                break;
            }
        }
        std::mem::swap(&mut spec, &mut next);
        done = step;
        if state.ring.len() == opts.ring.max(1) {
            state.ring.pop_front();
        }
        state.ring.push_back((t, e, f));
        state.u = field;
        state.t = t;
        state.step = step;
        observer(&state);
        if snap {
            snapshots.push(Snapshot { t, field: state.u.clone(), energy: e, mass: f });
        }
    }
    if outcome != Outcome::Completed && snapshots.last().map(|s| s.t) != Some(state.t) {
        let (e, f) = waves::energy_mass(&state.u, params);
        snapshots.push(Snapshot { t: state.t, field: state.u.clone(), energy: e, mass: f });
    }
    Ok(Trajectory {
        params: params.clone(),
        scheme: opts.scheme,
        dt: opts.dt,
        frame_speed: opts.frame_speed,
        steps: done,
        snapshots,
        outcome,
    })
}

fn seminorm(grid: &Grid, spec: &[C64], alpha: f64) -> f64 {
    let s: f64 = spec.iter().enumerate().map(|(k, z)| grid.wavenumber(k).abs().powf(alpha) * z.norm_sqr()).sum();
    s * grid.dx() / grid.len() as f64
}

#[derive(Clone, Debug, Serialize)]
pub struct DriftReport {
    pub energy_drift: f64,
    pub mass_drift: f64,
    pub samples: usize,
    /// The run stopped early; drift covers the valid prefix.
    pub partial: bool,
}

/// Largest relative drift of `E` and `F` over the stored snapshots.
///
/// `E` is measured against `|E(0)|`, or against `F(0)` when the energy
/// vanishes (the critical ground state has `E = 0`).
pub fn conservation_monitor(traj: &Trajectory) -> Result<DriftReport> {
    if traj.snapshots.len() < 2 && !traj.is_partial() {
        return Err(Error::Config("conservation check needs at least two snapshots".into()));
    }
    let first = &traj.snapshots[0];
    let escale = if first.energy.abs() > 1e-12 * first.mass.abs() { first.energy.abs() } else { first.mass.abs() };
    let mut de = 0.0f64;
    let mut df = 0.0f64;
    for s in &traj.snapshots[1..] {
        de = de.max((s.energy - first.energy).abs() / escale);
        df = df.max((s.mass - first.mass).abs() / first.mass.abs());
    }
    Ok(DriftReport { energy_drift: de, mass_drift: df, samples: traj.snapshots.len(), partial: traj.is_partial() })
}

/// `(ρ, γ̂)`: the `H^{α/2}` orbit distance from `u` to the translates of the
/// profile, and the shift with `u(· + γ̂) ≈ φ`.
///
/// The squared distance is `inf_r ‖D^{α/2}(u(·+r) - φ)‖² + c_weight‖u(·+r) - φ‖²`.
pub fn orbit_distance(u: &Field, w: &WaveProfile, c_weight: f64) -> Result<(f64, f64)> {
    if *u.grid != **w.grid() {
        return Err(Error::GridMismatch);
    }
    orbit_distance_values(u.grid.as_ref(), &u.values, w.values(), w.params.alpha, c_weight)
}

fn orbit_distance_values(g: &Grid, u: &[f64], q: &[f64], alpha: f64, c_weight: f64) -> Result<(f64, f64)> {
    let n = g.len();
    let ny = g.nyquist();
    let uh = g.forward(u);
    let qh = g.forward(q);
    let weights: Vec<f64> =
        (0..n).map(|k| if k == ny { 0.0 } else { g.wavenumber(k).abs().powf(alpha) + c_weight }).collect();
    let norm = g.dx() / n as f64;
    let base: f64 = (0..n).map(|k| weights[k] * (uh[k].norm_sqr() + qh[k].norm_sqr())).sum::<f64>();
    let cross: Vec<C64> = (0..n).map(|k| uh[k] * qh[k].conj() * weights[k]).collect();
    // Σ a_k e^{iξ_k r_j} on the grid shifts r_j = j·dx
    let mut corr = cross.clone();
    g.ifft_any(&mut corr);
    let (jbest, _) = corr
        .iter()
        .enumerate()
        .map(|(j, z)| (j, z.re))
        .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let r0 = if jbest < n / 2 { jbest as f64 } else { jbest as f64 - n as f64 } * g.dx();
    let objective = |r: f64| -> f64 {
        let s: f64 = (0..n).map(|k| (cross[k] * C64::from_polar(1.0, g.wavenumber(k) * r)).re).sum();
        (base - 2.0 * s) * norm
    };
    let mut r = golden_section(&objective, r0 - g.dx(), r0 + g.dx(), 1e-9 * g.dx());
    // the objective is flat at the minimum; finish on its derivative
    for _ in 0..4 {
        let (mut d1, mut d2) = (0.0, 0.0);
        for k in 0..n {
            let xi = g.wavenumber(k);
            let z = cross[k] * C64::from_polar(1.0, xi * r);
            d1 -= xi * z.im;
            d2 -= xi * xi * z.re;
        }
        if d2 >= 0.0 {
            break;
        }
        let step = -d1 / d2;
        if step.abs() > g.dx() {
            break;
        }
        r += step;
    }
    let rho2: f64 = (0..n)
        .map(|k| weights[k] * (uh[k] * C64::from_polar(1.0, g.wavenumber(k) * r) - qh[k]).norm_sqr())
        .sum::<f64>()
        * norm;
    let l = g.half_length();
    let wrapped = (r + l).rem_euclid(2.0 * l) - l;
    Ok((rho2.sqrt(), wrapped))
}

fn golden_section(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// `(t, ρ, γ̂)` for every snapshot of a trajectory.
pub fn orbit_series(traj: &Trajectory, w: &WaveProfile, c_weight: f64) -> Result<Vec<(f64, f64, f64)>> {
    traj.snapshots
        .iter()
        .map(|s| orbit_distance(&s.field, w, c_weight).map(|(r, g)| (s.t, r, g)))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthFit {
    pub rate: f64,
    pub r_squared: f64,
    pub points: usize,
    pub window: (f64, f64),
}

/// Least-squares slope of `log ρ` against `t` over the longest run of samples
/// with `lo ≤ ρ ≤ hi`.
pub fn growth_rate_fit(series: &[(f64, f64)], window: (f64, f64)) -> Result<GrowthFit> {
    let (lo, hi) = window;
    let mut best: (usize, usize) = (0, 0);
    let mut start = None;
    for (i, &(_, r)) in series.iter().enumerate() {
        let inside = r > 0.0 && r >= lo && r <= hi;
        match (inside, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if i - s > best.1 - best.0 {
                    best = (s, i);
                }
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        if series.len() - s > best.1 - best.0 {
            best = (s, series.len());
        }
    }
    let pts = &series[best.0..best.1];
    if pts.len() < 3 {
        return Err(Error::WindowEmpty);
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1.ln()).sum::<f64>() / k;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1.ln() - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1.ln() - my).powi(2)).sum();
    let rate = sty / stt;
    let r_squared = if syy > 0.0 { sty * sty / (stt * syy) } else { 1.0 };
    Ok(GrowthFit { rate, r_squared, points: pts.len(), window })
}

#[derive(Clone, Debug, Serialize)]
pub struct SeededGrowth {
    pub dt: f64,
    pub t_final: f64,
    pub steps: usize,
    pub outcome: Outcome,
    /// Orbit distance of the seeded initial data.
    pub rho0: f64,
    pub fit: GrowthFit,
}

/// Evolve `φ + amplitude·shape` in the co-moving frame and fit the growth
/// rate of its orbit distance from `φ`.
pub fn seeded_growth(
    w: &WaveProfile,
    shape: &Field,
    amplitude: f64,
    dt: f64,
    t_final: f64,
    window: (f64, f64),
) -> Result<SeededGrowth> {
    let w = crate::criteria::evolution_profile(w)?;
    let params = &w.params;
    let u0 = Field::new(w.grid().clone(), w.values().iter().zip(&shape.values).map(|(q, v)| q + amplitude * v).collect())?;
    let mut opts = EvolveOptions::new(Scheme::default_for(params), dt, t_final);
    opts.frame_speed = params.c;
    opts.stride = ((t_final / dt) as usize / 400).max(1);
    opts.check_every = opts.stride;
    let traj = evolve(&u0, params, &opts)?;
    let weight = params.profile_coefficients().0;
    let series = orbit_series(&traj, &w, weight)?;
    let pts: Vec<(f64, f64)> = series.iter().map(|s| (s.0, s.1)).collect();
    let fit = growth_rate_fit(&pts, window)?;
    Ok(SeededGrowth {
        dt,
        t_final,
        steps: traj.steps,
        outcome: traj.outcome,
        rho0: pts.first().map(|p| p.1).unwrap_or(f64::NAN),
        fit,
    })
}

/// Critical-case diagnostics at one snapshot.
#[derive(Clone, Debug, Serialize)]
pub struct CriticalDiagnostics {
    pub t: f64,
    pub mu: f64,
    pub rho: f64,
    /// Shift of `ψ` against `Q_c`, in the `ψ` variable.
    pub gamma: f64,
    pub energy: f64,
    pub mass: f64,
    pub b_t: f64,
    /// `B̃_t[ψ] - B̃_t[Q_c]`.
    pub delta_b: f64,
    /// `½⟨L_c a, a⟩ + (2kc/‖Q_c‖²)⟨a, Q_c⟩²` for `a = ψ(·+γ) - Q_c`.
    pub quadratic_form: f64,
    /// Relative defects of the three rescaling identities.
    pub identity_mass: f64,
    pub identity_seminorm: f64,
    pub identity_energy: f64,
    /// The infimum in the orbital bound, which equals `ρ²`.
    pub orbital_bound: f64,
}

#[derive(Clone, Debug)]
pub struct CriticalOptions {
    pub k: u32,
}

impl Default for CriticalOptions {
    fn default() -> Self {
        CriticalOptions { k: 2 }
    }
}

/// Rescaled diagnostics for every snapshot of an α = ½, p = 1 run.
///
/// `ψ(x) = μ^{-1/2} u(x/μ)` is represented exactly on the grid dilated by `μ`
/// (same samples, scaled); the identities are checked there. For the distance
/// to `Q_c`, `ψ` is re-centred and evaluated on the profile grid from its
/// spectrum, keeping only modes the profile grid resolves.
pub fn critical_monitor(traj: &Trajectory, q: &WaveProfile, opts: &CriticalOptions) -> Result<Vec<CriticalDiagnostics>> {
    let params = &q.params;
    if (params.alpha - 0.5).abs() > 1e-12 || params.p != 1 || params.family == Family::Fbbm {
        return Err(Error::WrongRegime);
    }
    let g = q.grid().clone();
    let c = params.c;
    let semi_q = g.norm_sq(q.values(), NormKind::Seminorm(0.5))?;
    let mass_q = g.l2_sq(q.values());
    let (e_q, _) = waves::energy_mass(&q.field, params);
    let lin = WaveOperator::linearized(q);
    let k = opts.k as i32;
    let b_tilde = |e: f64, m: f64| e + 0.5 * c * (m / mass_q).powi(k) * (m - mass_q);
    let b_q = b_tilde(e_q, mass_q);
    let mut out = Vec::with_capacity(traj.snapshots.len());
    for s in &traj.snapshots {
        let u = &s.field;
        if *u.grid != *g {
            return Err(Error::GridMismatch);
        }
        let semi_u = g.norm_sq(&u.values, NormKind::Seminorm(0.5))?;
        let mu = (semi_u / semi_q).powi(2);
        let (e_u, _) = waves::energy_mass(u, params);
        let mass_u = g.l2_sq(&u.values);

        // centre u before dilating so the wave stays inside the profile window
        let centre = waves::locate_peak(u);
        let centred = g.shift(&u.values, -centre);
        let dg = g.dilated(mu)?;
        let amp = mu.powf(-0.5);
        let psi_vals: Vec<f64> = centred.iter().map(|v| v * amp).collect();
        let psi = Field::new(dg.clone(), psi_vals)?;
        let mass_psi = dg.l2_sq(&psi.values);
        let semi_psi = dg.norm_sq(&psi.values, NormKind::Seminorm(0.5))?;
        let (e_psi, _) = waves::energy_mass(&psi, params);
        let identity_mass = (mass_psi.sqrt() - mass_u.sqrt()).abs() / mass_u.sqrt();
        let identity_seminorm = (semi_psi - semi_q).abs() / semi_q;
        let e_ref = e_u / mu.sqrt();
        let identity_energy = (e_psi - e_ref).abs() / e_ref.abs().max(1e-300);

        // modes of ψ above the profile grid's Nyquist would alias
        let half = dg.len() / 2;
        let band = if mu >= 1.0 { half } else { ((half as f64 * mu + 1e-9).floor() as usize + 1).min(half) };
        let psi_spec = dg.forward(&psi.values);
        let inside: Vec<f64> = g.nodes().iter().map(|x| x.clamp(-dg.half_length(), dg.half_length())).collect();
        let mut resampled = dg.evaluate_spectrum(&psi_spec, &inside, band);
        for (v, x) in resampled.iter_mut().zip(g.nodes().iter()) {
            if x.abs() > dg.half_length() + 0.5 * g.dx() {
                *v = 0.0;
            }
        }
        let (rho, gamma) = orbit_distance_values(&g, &resampled, q.values(), 0.5, c)?;
        let a: Vec<f64> = g.shift(&resampled, -gamma).iter().zip(q.values()).map(|(x, y)| x - y).collect();
        let la = lin.apply(&a);
        let aq = g.dot(&a, q.values());
        let quadratic_form = 0.5 * g.dot(&la, &a) + 2.0 * opts.k as f64 * c / mass_q * aq * aq;

        let b_t = e_u / mu.sqrt() + 0.5 * c * (mass_u / mass_q).powi(k) * (mass_u - mass_q);
        out.push(CriticalDiagnostics {
            t: s.t,
            mu,
            rho,
            gamma: gamma + mu * centre,
            energy: s.energy,
            mass: s.mass,
            b_t,
            delta_b: b_tilde(e_psi, mass_psi) - b_q,
            quadratic_form,
            identity_mass,
            identity_seminorm,
            identity_energy,
            orbital_bound: rho * rho,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct ShiftReport {
    /// Slope of the unwrapped shift against time.
    pub speed: f64,
    pub expected_speed: f64,
    pub relative_error: f64,
    /// Largest `|γ(t) - cμ∫√μ| / (μ(∫√μ + ∫|μ'|/μ²))` over the series.
    pub bound_ratio: f64,
}

/// Unwrap a periodic shift series of period `2L`.
pub fn unwrap_shifts(shifts: &[f64], half_length: f64) -> Vec<f64> {
    let period = 2.0 * half_length;
    let mut out = Vec::with_capacity(shifts.len());
    let mut offset = 0.0;
    for (i, &s) in shifts.iter().enumerate() {
        if i > 0 {
            let prev = shifts[i - 1];
            if s - prev > half_length {
                offset -= period;
            } else if prev - s > half_length {
                offset += period;
            }
        }
        out.push(s + offset);
    }
    out
}

/// Compare the fitted shift speed with `c` and, given `μ(t)`, the
/// rescaled-frame bound ratio. `gamma` must already be unwrapped.
pub fn shift_tracking_check(t: &[f64], gamma: &[f64], mu: &[f64], c: f64) -> Result<ShiftReport> {
    let n = t.len();
    if n < 3 || gamma.len() != n || mu.len() != n {
        return Err(Error::WindowEmpty);
    }
    let mt = t.iter().sum::<f64>() / n as f64;
    let mg = gamma.iter().sum::<f64>() / n as f64;
    let stt: f64 = t.iter().map(|x| (x - mt).powi(2)).sum();
    let stg: f64 = t.iter().zip(gamma).map(|(x, y)| (x - mt) * (y - mg)).sum();
    let speed = stg / stt;
    let mut int_sqrt = 0.0;
    let mut int_dmu = 0.0;
    let mut ratio = 0.0f64;
    for i in 1..n {
        let h = t[i] - t[i - 1];
        int_sqrt += 0.5 * h * (mu[i].sqrt() + mu[i - 1].sqrt());
        let dmu = (mu[i] - mu[i - 1]) / h;
        int_dmu += h * dmu.abs() / (0.5 * (mu[i] + mu[i - 1])).powi(2);
        let lhs = (gamma[i] - gamma[0] - c * mu[i] * int_sqrt).abs();
        let rhs = mu[i] * (int_sqrt + int_dmu);
        if rhs > 0.0 {
            ratio = ratio.max(lhs / rhs);
        }
    }
    Ok(ShiftReport { speed, expected_speed: c, relative_error: (speed - c).abs() / c, bound_ratio: ratio })
}

/// Diagnostics CSV rows `(t, E, F, rho, gamma_hat, mu, Bt)`.
pub fn diagnostics_rows(
    traj: &Trajectory,
    w: &WaveProfile,
    critical: Option<&[CriticalDiagnostics]>,
) -> Result<Vec<[f64; 7]>> {
    let orbit = orbit_series(traj, w, w.params.c)?;
    Ok(traj
        .snapshots
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (mu, bt) = critical.map(|c| (c[i].mu, c[i].b_t)).unwrap_or((f64::NAN, f64::NAN));
            [s.t, s.energy, s.mass, orbit[i].1, orbit[i].2, mu, bt]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waves::{Normalization, SolveOptions};

    fn soliton(alpha: f64, l: f64, n: usize) -> WaveProfile {
        let params = ModelParams::fkdv(alpha, 1, 1.0, Normalization::PaperEq16).unwrap();
        let g = Grid::shared(l, n).unwrap();
        waves::solve_ground_state(&params, &g, &SolveOptions::default()).unwrap()
    }

    #[test]
    fn zero_stays_zero() {
        let w = soliton(2.0, 40.0, 256);
        let u0 = Field::zeros(w.grid());
        for scheme in [Scheme::Etdrk4, Scheme::Ifrk4] {
            let traj = evolve(&u0, &w.params, &EvolveOptions::new(scheme, 1e-2, 1.0)).unwrap();
            assert_eq!(traj.last().field.max_abs(), 0.0);
        }
    }

    #[test]
    fn kdv_soliton_travels_at_its_speed() {
        let w = soliton(2.0, 40.0, 512);
        let mut opts = EvolveOptions::new(Scheme::Etdrk4, 2e-3, 5.0);
        opts.stride = 250;
        let traj = evolve(&w.field, &w.params, &opts).unwrap();
        let g = w.grid();
        let back = g.shift(&traj.last().field.values, -5.0);
        let err: f64 = back.iter().zip(w.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let nrm: f64 = w.values().iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(err / nrm < 1e-6, "{}", err / nrm);
        let drift = conservation_monitor(&traj).unwrap();
        assert!(drift.energy_drift < 1e-8 && drift.mass_drift < 1e-10, "{drift:?}");
    }

    #[test]
    fn co_moving_frame_holds_the_soliton() {
        let w = soliton(2.0, 40.0, 512);
        let mut opts = EvolveOptions::new(Scheme::Ifrk4, 2e-3, 2.0);
        opts.frame_speed = 1.0;
        let traj = evolve(&w.field, &w.params, &opts).unwrap();
        let (rho, gamma) = orbit_distance(&traj.last().field, &w, 1.0).unwrap();
        assert!(rho < 1e-6 && gamma.abs() < 1e-6, "{rho} {gamma}");
    }

    #[test]
    fn orbit_distance_recovers_shift() {
        let w = soliton(2.0, 40.0, 512);
        let g = w.grid();
        let u = Field::new(g.clone(), g.shift(w.values(), -3.7)).unwrap();
        let (rho, gamma) = orbit_distance(&u, &w, 1.0).unwrap();
        assert!(rho < 1e-8, "{rho}");
        assert!((gamma + 3.7).abs() < 1e-6, "{gamma}");
        let (rho, gamma) = orbit_distance(&w.field.scaled(1.01), &w, 1.0).unwrap();
        assert!(rho > 0.0 && gamma.abs() < 1e-6);
    }

    #[test]
    fn orbit_distance_is_reflection_symmetric() {
        let w = soliton(2.0, 40.0, 512);
        let g = w.grid();
        let bump: Vec<f64> = g.nodes().iter().map(|x| 0.05 * (-(x - 1.3).powi(2)).exp()).collect();
        let a: Vec<f64> = w.values().iter().zip(&bump).map(|(q, b)| q + b).collect();
        let n = g.len();
        let refl: Vec<f64> = (0..n).map(|j| bump[(n - j) % n]).collect();
        let b: Vec<f64> = w.values().iter().zip(&refl).map(|(q, b)| q + b).collect();
        let ra = orbit_distance(&Field::new(g.clone(), a).unwrap(), &w, 1.0).unwrap().0;
        let rb = orbit_distance(&Field::new(g.clone(), b).unwrap(), &w, 1.0).unwrap().0;
        assert!((ra - rb).abs() < 1e-10, "{ra} {rb}");
    }

    #[test]
    fn growth_fit_of_exact_exponential() {
        let s: Vec<(f64, f64)> = (0..200).map(|i| (i as f64 * 0.1, 1e-4 * (0.3 * i as f64 * 0.1).exp())).collect();
        let f = growth_rate_fit(&s, (1e-3, 1e-1)).unwrap();
        assert!((f.rate - 0.3).abs() < 1e-6);
        assert!(matches!(growth_rate_fit(&s[..5], (1e-3, 1e-1)), Err(Error::WindowEmpty)));
    }

    #[test]
    fn step_envelope_is_enforced() {
        let w = soliton(0.75, 50.0, 2048);
        let r = evolve(&w.field, &w.params, &EvolveOptions::new(Scheme::Etdrk4, 1.0, 1.0));
        assert!(matches!(r, Err(Error::StepTooLarge { .. })));
    }

    #[test]
    fn blowup_guard_stops_before_overflow() {
        // large negative-energy data on a grid far too coarse for it
        let params = ModelParams::fkdv(0.5, 1, 1.0, Normalization::PaperEq16).unwrap();
        let g = Grid::shared(20.0, 256).unwrap();
        for amp in [20.0, 40.0, 80.0] {
            let u0 = Field::from_fn(&g, |x| amp * (-x * x).exp());
            let traj = evolve(&u0, &params, &EvolveOptions::new(Scheme::Etdrk4, 0.05, 50.0)).unwrap();
            assert!(matches!(traj.outcome, Outcome::BlowupDetected { .. }), "{:?}", traj.outcome);
            assert!(traj.snapshots.iter().all(|s| s.field.values.iter().all(|v| v.is_finite())));
            assert!(conservation_monitor(&traj).unwrap().partial);
        }
    }

    #[test]
    fn fbbm_quadratic_invariant_is_conserved() {
        let params = ModelParams::fbbm(0.6, 2.0).unwrap();
        let g = Grid::shared(64.0 * params.width_scale(), 1024).unwrap();
        let w = waves::solve_ground_state(&params, &g, &SolveOptions::default()).unwrap();
        let bump = Field::from_fn(&g, |x| 0.3 * (-(x - 2.0).powi(2) / 4.0).exp());
        let u0 = Field::new(g.clone(), w.values().iter().zip(&bump.values).map(|(a, b)| a + b).collect()).unwrap();
        let mut opts = EvolveOptions::new(Scheme::Rk4, 2e-3, 2.0);
        opts.stride = 100;
        let traj = evolve(&u0, &params, &opts).unwrap();
        let d = conservation_monitor(&traj).unwrap();
        assert!(d.mass_drift < 1e-10, "{d:?}");
        assert!(d.energy_drift < 1e-8, "{d:?}");
    }

    #[test]
    fn critical_monitor_on_the_ground_state() {
        let params = ModelParams::fkdv(0.5, 1, 1.0, Normalization::PaperEq16).unwrap();
        let g = Grid::shared(50.0, 1024).unwrap();
        let q = waves::solve_ground_state(&params, &g, &SolveOptions::default()).unwrap();
        let mut opts = EvolveOptions::new(Scheme::Etdrk4, 1e-2, 1.0);
        opts.stride = 25;
        opts.frame_speed = 1.0;
        let traj = evolve(&q.field, &params, &opts).unwrap();
        let diags = critical_monitor(&traj, &q, &CriticalOptions::default()).unwrap();
        for d in &diags {
            assert!((d.mu - 1.0).abs() < 1e-6, "{}", d.mu);
            assert!(d.rho < 1e-5, "{}", d.rho);
            assert!(d.identity_mass < 1e-10 && d.identity_seminorm < 1e-8);
        }
        let wrong = soliton(0.75, 50.0, 256);
        let t2 = evolve(&wrong.field, &wrong.params, &EvolveOptions::new(Scheme::Etdrk4, 1e-2, 0.02)).unwrap();
        assert!(matches!(critical_monitor(&t2, &wrong, &CriticalOptions::default()), Err(Error::WrongRegime)));
    }
}
