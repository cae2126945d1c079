//! Stability criteria: slope of the momentum curve, the parity rule, growing
//! modes and the moving-kernel limit.

use std::sync::Arc;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, C64};
use crate::linalg::{self, dot, norm};
use crate::specops::{self, SpectralReport, WaveOperator, DENSE_LIMIT};
use crate::waves::{self, base_grid_size, Family, ModelParams, Normalization, SolveOptions, WaveProfile};

/// `d/dc ‖φ_c‖²` from the scaling law, given the mass of the `c = 1` profile.
pub fn dfdc_closed_form(alpha: f64, p: u32, c: f64, base_mass: f64) -> f64 {
    let e = 2.0 / p as f64 - 1.0 / alpha;
    e * c.powf(e - 1.0) * base_mass
}

/// `d/dc ‖φ_c‖²` in evolution normalization (`φ = 2Q`, `p = 1`) from the
/// ground-state mass `‖Q‖²`.
pub fn dfdc_ground_state_form(alpha: f64, c: f64, q_mass: f64) -> f64 {
    4.0 * (2.0 - 1.0 / alpha) * c.powf(1.0 - 1.0 / alpha) * q_mass
}

/// Mass of the `c = 1` profile implied by the mass of a profile at speed `c`.
pub fn base_mass_from(alpha: f64, p: u32, c: f64, mass: f64) -> f64 {
    mass / c.powf(2.0 / p as f64 - 1.0 / alpha)
}

/// Slope used by the criterion: `d/dc ‖φ_c‖²` (fKdV, gfKdV) or `dM/dc` (fBBM).
pub fn slope_functional(w: &WaveProfile) -> f64 {
    match w.params.family {
        Family::Fbbm => 0.5 * (w.mass + w.seminorm),
        _ => w.mass,
    }
}

/// Centered difference of the slope functional on the grid of `w`.
pub fn dfdc_finite_difference(w: &WaveProfile, h: Option<f64>) -> Result<f64> {
    let c = w.params.c;
    let h = h.unwrap_or(1e-3 * c);
    let grid = w.grid().clone();
    let solve_at = |cc: f64| -> Result<f64> {
        let params = w.params.with_c(cc)?;
        let opts = SolveOptions { initial: Some(w.values().to_vec()), ..SolveOptions::patient() };
        let sol = waves::solve_ground_state(&params, &grid, &opts)
            .map_err(|e| Error::SolverFailure { c: cc, source: Box::new(e) })?;
        Ok(slope_functional(&sol))
    };
    let up = solve_at(c + h)?;
    let down = solve_at(c - h)?;
    Ok((up - down) / (2.0 * h))
}

/// Centered difference with the periodization error removed.
///
/// The difference is taken on the grid of `w` and on one twice as long at the
/// same spacing. Algebraic tails leave an error proportional to `L^-(1+α)`,
/// which the two values eliminate. Exponentially decaying profiles (α ≥ 2, or a
/// general symbol) just use the longer grid.
pub fn dfdc_tail_extrapolated(w: &WaveProfile, h: Option<f64>) -> Result<f64> {
    let g = w.grid();
    let long = Grid::shared(2.0 * g.half_length(), 2 * g.len())?;
    let w2 = waves::solve_ground_state(&w.params, &long, &SolveOptions::patient())
        .map_err(|e| Error::SolverFailure { c: w.params.c, source: Box::new(e) })?;
    let far = dfdc_finite_difference(&w2, h)?;
    if w.params.alpha >= 2.0 || matches!(w.params.family, Family::Gfkdv { .. }) {
        return Ok(far);
    }
    let near = dfdc_finite_difference(w, h)?;
    let r = 2f64.powf(1.0 + w.params.alpha);
    Ok((r * far - near) / (r - 1.0))
}

/// Threshold speed and the two roots of `q(c) = 6α²c² - 4αc + 1 - α`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Threshold {
    pub c0: f64,
    pub q_roots: (f64, f64),
}

pub fn fbbm_threshold_c0(alpha: f64) -> Result<Threshold> {
    if !(alpha > 1.0 / 3.0 - 1e-15 && alpha < 1.0) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    let disc = (2.0 * (3.0 * alpha - 1.0)).max(0.0);
    let c0 = (2.0 + disc.sqrt()) / (6.0 * alpha);
    // q(c) = a c² + b c + k, roots by the cancellation-free pair
    let (a, b, k) = (6.0 * alpha * alpha, -4.0 * alpha, 1.0 - alpha);
    let d = (b * b - 4.0 * a * k).max(0.0).sqrt();
    let big = (-b + d) / (2.0 * a);
    let small = if big != 0.0 { k / (a * big) } else { 0.0 };
    Ok(Threshold { c0, q_roots: (small, big) })
}

/// Bracket `p(c)` with `M(c) = ½ p(c) ‖Ψ‖²`.
pub fn fbbm_p(alpha: f64, c: f64) -> f64 {
    let a = 1.0 / alpha;
    c.powf(a - 1.0) * (c - 1.0).powf(3.0 - a) / (3.0 * alpha - 1.0) + c.powf(a) * (c - 1.0).powf(2.0 - a)
}

pub fn fbbm_p_prime(alpha: f64, c: f64) -> f64 {
    let a = 1.0 / alpha;
    let first = c.powf(a - 1.0) * (c - 1.0).powf(3.0 - a) / (3.0 * alpha - 1.0);
    let second = c.powf(a) * (c - 1.0).powf(2.0 - a);
    first * ((a - 1.0) / c + (3.0 - a) / (c - 1.0)) + second * (a / c + (2.0 - a) / (c - 1.0))
}

/// `M(c) = ½⟨(1 + D^α)ψ_c, ψ_c⟩` from the mass of the fKdV ground state `Ψ`.
pub fn fbbm_m_closed_form(alpha: f64, c: f64, psi_mass: f64) -> Result<f64> {
    if !(alpha > 1.0 / 3.0 && alpha < 1.0) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    if !(c > 1.0) {
        return Err(Error::ParamsForbidden(format!("fbbm needs c > 1, got {c}")));
    }
    Ok(0.5 * fbbm_p(alpha, c) * psi_mass)
}

pub fn fbbm_dmdc_closed_form(alpha: f64, c: f64, psi_mass: f64) -> f64 {
    0.5 * fbbm_p_prime(alpha, c) * psi_mass
}

/// Mass `‖Ψ‖²` of the `c = 1` ground state implied by an fBBM profile.
pub fn psi_mass_from(w: &WaveProfile) -> f64 {
    let c = w.params.c;
    let b = w.params.width_scale();
    w.mass / ((c - 1.0).powi(2) * b)
}

/// Closed-form slope for a profile, when a scaling law exists.
pub fn closed_form_slope(w: &WaveProfile) -> Option<f64> {
    let pr = &w.params;
    match pr.family {
        Family::Fkdv => {
            let base = base_mass_from(pr.alpha, pr.p, pr.c, w.mass);
            Some(dfdc_closed_form(pr.alpha, pr.p, pr.c, base))
        }
        Family::Fbbm => Some(fbbm_dmdc_closed_form(pr.alpha, pr.c, psi_mass_from(w))),
        Family::Gfkdv { .. } => None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeSource {
    ClosedForm,
    FiniteDifference,
    InversePairing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    LinearlyUnstable,
    CriterionSilent,
    HypothesisViolated,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::LinearlyUnstable => "LinearlyUnstable",
            Verdict::CriterionSilent => "CriterionSilent",
            Verdict::HypothesisViolated => "HypothesisViolated",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionVerdict {
    pub morse_index: usize,
    pub kernel_dim: usize,
    pub slope: f64,
    pub slope_source: SlopeSource,
    pub verdict: Verdict,
    pub rule: String,
    /// Set for `n = 1` with increasing momentum, where the orbit is stable.
    pub note: Option<String>,
}

/// Parity rule. `slope` is `d/dc` of the momentum for the closed-form and
/// finite-difference sources and `⟨L⁻¹φ, φ⟩` for the pairing source.
pub fn parity_rule(morse: usize, kernel_dim: usize, slope: f64, source: SlopeSource) -> (Verdict, String) {
    if kernel_dim != 1 {
        return (Verdict::HypothesisViolated, format!("kernel dimension {kernel_dim} != 1"));
    }
    let even = morse % 2 == 0;
    let parity = if even { "even" } else { "odd" };
    // the pairing is minus half the slope
    let s = match source {
        SlopeSource::InversePairing => -slope,
        _ => slope,
    };
    let unstable = (even && s > 0.0) || (!even && s < 0.0);
    let sign = if slope > 0.0 {
        ">0"
    } else if slope < 0.0 {
        "<0"
    } else {
        "=0"
    };
    let quantity = match source {
        SlopeSource::InversePairing => "pairing",
        _ => "slope",
    };
    let verdict = if unstable { Verdict::LinearlyUnstable } else { Verdict::CriterionSilent };
    (verdict, format!("n={morse} ({parity}), {quantity}{sign}"))
}

pub fn evaluate_criterion(report: &SpectralReport, slope: f64, source: SlopeSource) -> CriterionVerdict {
    let (verdict, rule) = parity_rule(report.morse_index, report.kernel_dim, slope, source);
    let positive_slope = match source {
        SlopeSource::InversePairing => slope < 0.0,
        _ => slope > 0.0,
    };
    let note = (verdict == Verdict::CriterionSilent && report.morse_index == 1 && positive_slope)
        .then(|| "n = 1 and increasing momentum: orbitally stable".to_string());
    CriterionVerdict {
        morse_index: report.morse_index,
        kernel_dim: report.kernel_dim,
        slope,
        slope_source: source,
        verdict,
        rule,
        note,
    }
}

/// How a growing mode was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeMethod {
    DirectEigensolve,
    ModeFamilyRootfind,
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowingMode {
    pub lambda: f64,
    pub lambda_im: f64,
    #[serde(skip)]
    pub shape: Vec<C64>,
    pub method: ModeMethod,
    /// `‖Gu - λu‖ / (|λ| ‖u‖)` for the flow generator `G`.
    pub residual: f64,
    /// Fraction of spectral energy in the lowest two thirds of the band.
    pub participation: f64,
    /// Root of `det A^λ` when the cross-check ran.
    pub crosscheck: Option<f64>,
    /// Largest distance from an eigenvalue to the nearest `-λ` partner, relative to the spectral radius.
    pub pairing_defect: f64,
}

impl GrowingMode {
    /// Real part of the mode shape as a field.
    pub fn real_field(&self, grid: &Arc<Grid>) -> Result<Field> {
        let mut v: Vec<f64> = self.shape.iter().map(|z| z.re).collect();
        let s = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if s > 0.0 {
            v.iter_mut().for_each(|x| *x /= s);
        }
        Field::new(grid.clone(), v)
    }
}

#[derive(Clone, Debug)]
pub struct GrowingModeOptions {
    /// Relative to `c`.
    pub stability_tol: f64,
    pub participation_min: f64,
    pub crosscheck: bool,
    /// Geometric scan `[lo, hi]`, in units of [`rate_scale`], for the mode-family root.
    pub scan: (f64, f64, usize),
    pub agreement: f64,
    /// Starting shifts for the iterative direct method, in units of [`rate_scale`].
    pub shifts: Vec<f64>,
}

impl Default for GrowingModeOptions {
    fn default() -> Self {
        GrowingModeOptions {
            stability_tol: 1e-6,
            participation_min: 0.9,
            crosscheck: true,
            scan: (1e-3, 1e3, 60),
            agreement: 0.02,
            shifts: vec![1e3, 1e2, 1e1, 1.0, 1e-1],
        }
    }
}

/// Natural unit of growth rates: the speed over the profile width for fKdV,
/// the excess speed `c - 1` over the width for fBBM.
pub fn rate_scale(params: &ModelParams) -> f64 {
    match params.family {
        Family::Fbbm => (params.c - 1.0) / params.width_scale(),
        Family::Gfkdv { .. } => params.c,
        _ => params.c / params.width_scale(),
    }
}

/// Grid of `n` points for dense operator work, scaled to the profile width.
pub fn operator_grid(params: &ModelParams, n: usize) -> Result<Arc<Grid>> {
    let (l, _) = base_grid_size(params.alpha);
    let scale = match params.family {
        Family::Gfkdv { .. } => 1.0,
        _ => params.width_scale(),
    };
    Grid::shared(l * scale, n)
}

/// Profile solved directly on an operator grid.
pub fn operator_profile(params: &ModelParams, n: usize) -> Result<WaveProfile> {
    let g = operator_grid(params, n)?;
    waves::solve_ground_state(params, &g, &SolveOptions::patient())
}

fn participation(grid: &Grid, v: &[C64]) -> f64 {
    let spec = grid.forward_complex(v);
    let n = grid.len();
    let cut = n / 3;
    let total: f64 = spec.iter().map(|z| z.norm_sqr()).sum();
    let low: f64 = (0..n).filter(|&k| (grid.mode(k).unsigned_abs() as usize) <= cut).map(|k| spec[k].norm_sqr()).sum();
    if total > 0.0 {
        low / total
    } else {
        0.0
    }
}

fn apply_complex(op: &WaveOperator, v: &[C64]) -> Vec<C64> {
    let re: Vec<f64> = v.iter().map(|z| z.re).collect();
    let im: Vec<f64> = v.iter().map(|z| z.im).collect();
    let a = op.apply(&re);
    let b = op.apply(&im);
    a.iter().zip(&b).map(|(x, y)| C64::new(*x, *y)).collect()
}

/// Sign and log-modulus of `det A^λ` by dense LU.
pub fn mode_family_determinant(w: &WaveProfile, lambda: f64) -> Result<(f64, f64)> {
    let m = specops::assemble_mode_family(w, lambda)?;
    Ok(det_sign_log(&m.matrix))
}

fn det_sign_log(m: &Mat<f64>) -> (f64, f64) {
    let lu = m.partial_piv_lu();
    let u = lu.U();
    let n = m.nrows();
    let mut sign = 1.0;
    let mut log = 0.0;
    for i in 0..n {
        let d = u[(i, i)];
        if d < 0.0 {
            sign = -sign;
        }
        log += d.abs().ln();
    }
    // each transposition flips the sign
    let perm = lu.P().arrays().0;
    let mut seen = vec![false; n];
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut len = 0;
        let mut j = start;
        while !seen[j] {
            seen[j] = true;
            j = perm[j];
            len += 1;
        }
        if len % 2 == 0 {
            sign = -sign;
        }
    }
    (sign, log)
}

/// Largest modulus of the principal symbol, used as an operator-norm scale.
fn symbol_scale(op: &WaveOperator) -> f64 {
    op.principal_symbol().iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

/// `v ↦ (S - shift)^{-1} v` for the principal symbol `S` of `op`.
fn symbol_solver(op: &WaveOperator, shift: f64) -> impl Fn(&[f64]) -> Vec<f64> {
    let sym = op.principal_symbol();
    let floor = 1e-12 * sym.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let g = op.grid.clone();
    move |v: &[f64]| {
        let s = g.forward(v);
        let out: Vec<C64> = s
            .iter()
            .zip(&sym)
            .map(|(z, a)| {
                let d = a - shift;
                if d.norm() > floor {
                    z / d
                } else {
                    z / floor
                }
            })
            .collect();
        g.inverse_real(out)
    }
}

/// Real eigenpair of `op` near `(b0, v0)` by Newton's method on the bordered
/// system `[A - b, -v; aᵀ, 0]` with the normalization `aᵀv = 1`.
fn bordered_eigenpair(op: &WaveOperator, anchor: &[f64], v0: &[f64], b0: f64) -> Result<(f64, Vec<f64>)> {
    let n = op.len();
    let s = dot(anchor, v0);
    if !(s.abs() > 0.0) {
        return Err(Error::Stalled("start vector orthogonal to the anchor".into()));
    }
    let mut v: Vec<f64> = v0.iter().map(|x| x / s).collect();
    let mut b = b0;
    let scale = symbol_scale(op);
    let mut prev = f64::INFINITY;
    let mut rn = f64::INFINITY;
    for _ in 0..12 {
        let av = op.apply(&v);
        let r: Vec<f64> = av.iter().zip(&v).map(|(x, y)| x - b * y).collect();
        rn = norm(&r) / (scale * norm(&v));
        if rn <= 1e-14 || (rn > 0.3 * prev && rn <= 1e-11) {
            return Ok((b, v));
        }
        prev = rn;
        let solve_m = symbol_solver(op, b);
        let z = solve_m(&v);
        let az = dot(anchor, &z);
        let vv = &v;
        let apply = |x: &[f64]| {
            let mut y = op.apply(&x[..n]);
            for k in 0..n {
                y[k] -= b * x[k] + vv[k] * x[n];
            }
            y.push(dot(anchor, &x[..n]));
            y
        };
        let precond = |x: &[f64]| {
            let y = solve_m(&x[..n]);
            let db = (x[n] - dot(anchor, &y)) / az;
            let mut out: Vec<f64> = y.iter().zip(&z).map(|(p, q)| p + q * db).collect();
            out.push(db);
            out
        };
        let mut rhs: Vec<f64> = r.iter().map(|x| -x).collect();
        rhs.push(0.0);
        let step = linalg::gmres(&apply, &precond, &rhs, None, 1e-9, 80, 800)?;
        for k in 0..n {
            v[k] += step.x[k];
        }
        b += step.x[n];
    }
    if rn <= 1e-11 {
        Ok((b, v))
    } else {
        Err(Error::ComplexNearKernelEigenvalue(rn))
    }
}

fn unit_derivative(w: &WaveProfile) -> Vec<f64> {
    let d = w.derivative();
    let s = norm(&d);
    d.iter().map(|x| x / s).collect()
}

/// Near-kernel eigenvalue of `A^λ` continued from `(b, v)` at `from` to `to`,
/// subdividing the step in `log λ` when Newton fails.
fn continue_branch(w: &WaveProfile, anchor: &[f64], from: f64, to: f64, b: f64, v: &[f64], depth: u32) -> Result<(f64, Vec<f64>)> {
    let op = WaveOperator::mode_family(w, to)?;
    match bordered_eigenpair(&op, anchor, v, b) {
        Ok(r) => Ok(r),
        Err(e) if depth == 0 => Err(e),
        Err(_) => {
            let mid = (from * to).sqrt();
            let (bm, vm) = continue_branch(w, anchor, from, mid, b, v, depth - 1)?;
            continue_branch(w, anchor, mid, to, bm, &vm, depth - 1)
        }
    }
}

/// Root in `λ` of the near-kernel eigenvalue branch of `A^λ` (or `B^λ`).
///
/// The branch is followed from `λ = lo·c` across the geometric scan; the first
/// reliable sign change is refined by Illinois false position in `log λ`.
pub fn mode_family_root(w: &WaveProfile, scan: (f64, f64, usize)) -> Result<Option<f64>> {
    let c = rate_scale(&w.params);
    let (lo, hi, count) = scan;
    let lams: Vec<f64> = (0..count)
        .map(|i| c * lo * (hi / lo).powf(i as f64 / (count - 1).max(1) as f64))
        .collect();
    let anchor = unit_derivative(w);
    let noise = 1e-10 * symbol_scale(&WaveOperator::mode_family(w, lams[0])?);
    let op = WaveOperator::mode_family(w, lams[0])?;
    let (mut b, mut v) = bordered_eigenpair(&op, &anchor, &anchor, 0.0)?;
    let mut last: Option<(f64, f64, Vec<f64>)> = (b.abs() > noise).then(|| (lams[0], b, v.clone()));
    for i in 1..count {
        let (nb, nv) = continue_branch(w, &anchor, lams[i - 1], lams[i], b, &v, 4)?;
        b = nb;
        v = nv;
        if b.abs() <= noise {
            continue;
        }
        if let Some((la, ba, va)) = &last {
            if ba.signum() != b.signum() {
                return refine_root(w, &anchor, (*la, *ba, va.clone()), (lams[i], b, v)).map(Some);
            }
        }
        last = Some((lams[i], b, v.clone()));
    }
    Ok(None)
}

fn refine_root(w: &WaveProfile, anchor: &[f64], a: (f64, f64, Vec<f64>), b: (f64, f64, Vec<f64>)) -> Result<f64> {
    let (mut xa, mut fa, mut va) = (a.0.ln(), a.1, a.2);
    let (mut xb, mut fb, mut vb) = (b.0.ln(), b.1, b.2);
    let mut side = 0;
    for _ in 0..80 {
        if (xb - xa).abs() <= 1e-12 {
            break;
        }
        let x = (xa * fb - xb * fa) / (fb - fa);
        let (b0, v0) = if (x - xa).abs() < (x - xb).abs() { (fa, &va) } else { (fb, &vb) };
        let op = WaveOperator::mode_family(w, x.exp())?;
        let (f, v) = bordered_eigenpair(&op, anchor, v0, b0)?;
        if f == 0.0 {
            return Ok(x.exp());
        }
        if f.signum() == fa.signum() {
            xa = x;
            fa = f;
            va = v;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            xb = x;
            fb = f;
            vb = v;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    Ok(((xa * fb - xb * fa) / (fb - fa)).exp())
}

/// Real eigenpair of the generator by Rayleigh quotient iteration from the
/// shift `sigma`. Returns `None` when the iteration does not settle on a real
/// eigenvalue.
fn generator_rqi(gen: &WaveOperator, sigma: f64, seed: &[f64]) -> Option<(f64, Vec<f64>, f64)> {
    let mut v: Vec<f64> = seed.to_vec();
    let s = norm(&v);
    v.iter_mut().for_each(|x| *x /= s);
    let mut shift = sigma;
    for it in 0..60 {
        let precond = symbol_solver(gen, shift);
        let apply = |x: &[f64]| {
            let mut y = gen.apply(x);
            linalg::axpy(&mut y, -shift, x);
            y
        };
        let x = linalg::gmres(&apply, &precond, &v, None, 1e-10, 80, 800).ok()?.x;
        let s = norm(&x);
        v = x.into_iter().map(|a| a / s).collect();
        let gv = gen.apply(&v);
        let q = dot(&v, &gv);
        let res = gv.iter().zip(&v).map(|(a, b)| (a - q * b).powi(2)).sum::<f64>().sqrt() / q.abs().max(f64::MIN_POSITIVE);
        if res <= 1e-10 {
            return Some((q, v, res));
        }
        // the shift is frozen once close, which keeps the inner solves well posed
        if it >= 2 && res > 1e-5 {
            shift = q;
        }
    }
    None
}

fn reflect(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|j| v[(n - j) % n]).collect()
}

/// Search for an eigenvalue of the linearized flow with positive real part.
///
/// On small grids the generator is diagonalized densely and eigenvectors whose
/// spectral energy sits in the lower two thirds of the band are kept. On large
/// grids Rayleigh quotient iteration runs from a ladder of real shifts. The
/// cross-check follows the near-kernel eigenvalue of `A^λ` to its root.
pub fn find_growing_mode(w: &WaveProfile, opts: &GrowingModeOptions) -> Result<Option<GrowingMode>> {
    let n = w.grid().len();
    let found = if n <= DENSE_LIMIT { dense_growing_mode(w, opts)? } else { iterative_growing_mode(w, opts) };
    let Some(mut mode) = found else {
        return Ok(None);
    };
    if opts.crosscheck && mode.lambda_im.abs() <= 1e-8 * mode.lambda.abs().max(1.0) {
        let root = mode_family_root(w, opts.scan)?;
        mode.crosscheck = root;
        match root {
            Some(r) if (r - mode.lambda).abs() <= opts.agreement * mode.lambda => {}
            Some(r) => return Err(Error::MethodDisagreement { direct: mode.lambda, rootfind: r }),
            None => return Err(Error::MethodDisagreement { direct: mode.lambda, rootfind: f64::NAN }),
        }
    }
    Ok(Some(mode))
}

fn dense_growing_mode(w: &WaveProfile, opts: &GrowingModeOptions) -> Result<Option<GrowingMode>> {
    let g = w.grid().clone();
    let n = g.len();
    let c = w.params.c;
    let gen = WaveOperator::generator(w);
    let m = gen.assemble();
    let (vals, vecs) = linalg::general_eigen(&m.matrix)?;
    let radius = vals.iter().fold(0.0f64, |a, z| a.max(z.norm()));
    let mut pairing_defect = 0.0f64;
    for z in &vals {
        let d = vals.iter().map(|u| (u + z).norm()).fold(f64::INFINITY, f64::min);
        pairing_defect = pairing_defect.max(d);
    }
    pairing_defect /= radius.max(f64::MIN_POSITIVE);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[b].re.partial_cmp(&vals[a].re).unwrap_or(std::cmp::Ordering::Equal));
    let tol = opts.stability_tol * c;
    for &i in &order {
        let z = vals[i];
        if z.re <= tol {
            break;
        }
        let v: Vec<C64> = (0..n).map(|r| vecs[(r, i)]).collect();
        let part = participation(&g, &v);
        if part < opts.participation_min {
            continue;
        }
        // real growth rates come with real eigenvectors up to a phase
        let phase = v.iter().max_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap()).copied().unwrap_or(C64::new(1.0, 0.0));
        let v: Vec<C64> = v.iter().map(|x| x / phase * phase.norm()).collect();
        let gv = apply_complex(&gen, &v);
        let vn = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        let r = gv.iter().zip(&v).map(|(a, b)| (a - b * z).norm_sqr()).sum::<f64>().sqrt();
        return Ok(Some(GrowingMode {
            lambda: z.re,
            lambda_im: z.im,
            shape: v,
            method: ModeMethod::DirectEigensolve,
            residual: r / (z.norm() * vn),
            participation: part,
            crosscheck: None,
            pairing_defect,
        }));
    }
    Ok(None)
}

fn iterative_growing_mode(w: &WaveProfile, opts: &GrowingModeOptions) -> Option<GrowingMode> {
    let g = w.grid().clone();
    let c = w.params.c;
    let unit = rate_scale(&w.params);
    let gen = WaveOperator::generator(w);
    let seed: Vec<f64> = w.values().iter().zip(w.derivative()).map(|(a, b)| a + 0.01 * b).collect();
    let tol = opts.stability_tol * c;
    let mut best: Option<GrowingMode> = None;
    for &s in &opts.shifts {
        let Some((lam, v, res)) = generator_rqi(&gen, s * unit, &seed) else {
            continue;
        };
        if lam <= tol || best.as_ref().is_some_and(|b| b.lambda >= lam) {
            continue;
        }
        let shape: Vec<C64> = v.iter().map(|&x| C64::new(x, 0.0)).collect();
        let part = participation(&g, &shape);
        if part < opts.participation_min {
            continue;
        }
        // the reflected mode belongs to -λ when the profile is even
        let rv = reflect(&v);
        let grv = gen.apply(&rv);
        let defect = grv.iter().zip(&rv).map(|(a, b)| (a + lam * b).powi(2)).sum::<f64>().sqrt() / (lam * norm(&rv));
        best = Some(GrowingMode {
            lambda: lam,
            lambda_im: 0.0,
            shape,
            method: ModeMethod::DirectEigensolve,
            residual: res,
            participation: part,
            crosscheck: None,
            pairing_defect: defect,
        });
    }
    best
}

/// Eigenvalue of `A^λ` (or `B^λ`) closest to zero, continued from the kernel
/// direction `φ'`. Newton's method in real arithmetic only converges to a real
/// eigenvalue, so a complex pair shows up as an error.
pub fn near_kernel_eigenvalue(w: &WaveProfile, lambda: f64) -> Result<f64> {
    let op = WaveOperator::mode_family(w, lambda)?;
    let anchor = unit_derivative(w);
    bordered_eigenpair(&op, &anchor, &anchor, 0.0).map(|(b, _)| b)
}

#[derive(Clone, Debug, Serialize)]
pub struct MovingKernel {
    pub lambdas: Vec<f64>,
    pub values: Vec<f64>,
    /// Fitted `r` in `b_λ = rλ² + sλ³`.
    pub ratio: f64,
    pub cubic: f64,
    /// Kernel eigenvalue of `L` itself, subtracted from every `b_λ`.
    pub offset: f64,
    pub predicted: f64,
    pub relative_error: f64,
}

/// Geometric `λ` list in `(0, 0.1c]` used by default, five points a factor
/// `√2` apart below `0.1` in units of [`rate_scale`].
pub fn default_lambda_list(params: &ModelParams) -> Vec<f64> {
    let top = 0.1 * rate_scale(params).min(params.c);
    (0..5).map(|i| top * 0.5f64.powf(0.5 * i as f64)).collect()
}

/// Fit the near-kernel eigenvalue of the mode family against the predicted limit.
pub fn moving_kernel_probe(w: &WaveProfile, lambdas: &[f64]) -> Result<MovingKernel> {
    let c = w.params.c;
    if lambdas.len() < 4 {
        return Err(Error::FitUnstable(format!("need at least 4 values of λ, got {}", lambdas.len())));
    }
    if lambdas.iter().any(|&l| !(l > 0.0 && l <= 0.1 * c + 1e-15)) {
        return Err(Error::FitUnstable("λ must lie in (0, 0.1c]".into()));
    }
    let values: Vec<f64> = lambdas.iter().map(|&l| near_kernel_eigenvalue(w, l)).collect::<Result<_>>()?;
    // the discrete kernel is exact only up to the profile residual
    let anchor = unit_derivative(w);
    let (offset, _) = bordered_eigenpair(&WaveOperator::linearized(w), &anchor, &anchor, 0.0)?;
    // b/λ² = r + sλ by least squares
    let ys: Vec<f64> = values.iter().zip(lambdas).map(|(b, l)| (b - offset) / (l * l)).collect();
    let k = lambdas.len() as f64;
    let sx: f64 = lambdas.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = lambdas.iter().map(|l| l * l).sum();
    let sxy: f64 = lambdas.iter().zip(&ys).map(|(l, y)| l * y).sum();
    let det = k * sxx - sx * sx;
    if !(det.abs() > 0.0) || ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::FitUnstable("degenerate design".into()));
    }
    let s = (k * sxy - sx * sy) / det;
    let r = (sy - s * sx) / k;
    let g = w.grid();
    let d = w.derivative();
    let dnorm = g.l2_sq(&d);
    let predicted = match w.params.family {
        Family::Fbbm => -closed_form_slope(w).unwrap_or(f64::NAN) / c / dnorm,
        _ => {
            let slope = match closed_form_slope(w) {
                Some(s) => s,
                None => dfdc_finite_difference(w, None)?,
            };
            -0.5 * slope / dnorm
        }
    };
    Ok(MovingKernel {
        lambdas: lambdas.to_vec(),
        values,
        ratio: r,
        cubic: s,
        offset,
        predicted,
        relative_error: (r - predicted).abs() / predicted.abs(),
    })
}

/// Full verdict for one profile, with every available slope source.
#[derive(Clone, Debug, Serialize)]
pub struct CriterionRow {
    pub family: String,
    pub alpha: f64,
    pub p: u32,
    pub c: f64,
    pub verdict: CriterionVerdict,
    pub closed_form: Option<f64>,
    pub finite_difference: Option<f64>,
    pub pairing: Option<f64>,
    pub kernel_alignment: Option<f64>,
    pub spectral_tail: f64,
    pub lambda_growth: Option<f64>,
    pub lambda_crosscheck: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct CriterionOptions {
    pub finite_difference: bool,
    /// Take the finite difference with [`dfdc_tail_extrapolated`].
    pub tail_extrapolation: bool,
    pub pairing: bool,
    pub growing_mode: Option<usize>,
}

/// Solve, diagnose and apply the parity rule at one parameter point.
pub fn criterion_row(params: &ModelParams, grid: Option<Arc<Grid>>, opts: &CriterionOptions) -> Result<CriterionRow> {
    let grid = match grid {
        Some(g) => g,
        None => waves::auto_grid(params)?,
    };
    let w = waves::solve_ground_state(params, &grid, &SolveOptions::patient())
        .map_err(|e| Error::SolverFailure { c: params.c, source: Box::new(e) })?;
    let report = specops::linearized_spectrum(&w, None)?;
    let closed = closed_form_slope(&w);
    let fd = match (opts.finite_difference || closed.is_none(), opts.tail_extrapolation) {
        (false, _) => None,
        (true, false) => Some(dfdc_finite_difference(&w, None)?),
        (true, true) => Some(dfdc_tail_extrapolated(&w, None)?),
    };
    let pairing = if opts.pairing && report.kernel_dim == 1 && params.family != Family::Fbbm {
        let op = WaveOperator::linearized(&w);
        Some(specops::solve_inverse_on_orthogonal(&op, &report, w.values())?.pairing)
    } else {
        None
    };
    let (slope, source) = match (closed, pairing, fd) {
        (Some(s), _, _) => (s, SlopeSource::ClosedForm),
        (None, Some(p), _) => (p, SlopeSource::InversePairing),
        (None, None, Some(f)) => (f, SlopeSource::FiniteDifference),
        _ => unreachable!("finite difference always runs without a closed form"),
    };
    let verdict = evaluate_criterion(&report, slope, source);
    let mut row = CriterionRow {
        family: params.family.name().to_string(),
        alpha: params.alpha,
        p: params.p,
        c: params.c,
        verdict,
        closed_form: closed,
        finite_difference: fd,
        pairing,
        kernel_alignment: report.residuals.get("kernel_alignment").copied(),
        spectral_tail: w.spectral_tail,
        lambda_growth: None,
        lambda_crosscheck: None,
    };
    if let Some(n) = opts.growing_mode {
        let wo = operator_profile(params, n)?;
        if let Some(m) = find_growing_mode(&wo, &GrowingModeOptions::default())? {
            row.lambda_growth = Some(m.lambda);
            row.lambda_crosscheck = m.crosscheck;
        }
    }
    Ok(row)
}

/// Profile in the normalization used by the evolution equation.
pub fn evolution_profile(w: &WaveProfile) -> Result<WaveProfile> {
    if w.params.nu == Normalization::PaperEq16 || w.params.family == Family::Fbbm {
        return Ok(w.clone());
    }
    let amp = Normalization::PaperEq16.from_ground_state(w.params.p) / w.params.nu.from_ground_state(w.params.p);
    let mut params = w.params.clone();
    params.nu = Normalization::PaperEq16;
    let f = Field::new(w.grid().clone(), w.values().iter().map(|v| v * amp).collect())?;
    let mut out = WaveProfile::from_field(f, params);
    out.iterations = w.iterations;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_signs() {
        assert!(dfdc_closed_form(0.4, 1, 1.0, 1.0) < 0.0);
        assert_eq!(dfdc_closed_form(0.5, 1, 3.0, 1.0), 0.0);
        assert!(dfdc_closed_form(0.75, 1, 1.0, 1.0) > 0.0);
        // evolution normalization carries ‖φ‖² = 4‖Q‖²
        let a = dfdc_closed_form(0.6, 1, 1.7, 4.0 * 2.5);
        let b = dfdc_ground_state_form(0.6, 1.7, 2.5);
        assert!((a - b).abs() < 1e-12 * b.abs());
    }

    #[test]
    fn threshold_values() {
        let t = fbbm_threshold_c0(0.4).unwrap();
        assert!((t.c0 - (2.0 + 0.4f64.sqrt()) / 2.4).abs() < 1e-15);
        assert!((t.c0 - 1.09686).abs() < 1e-5);
        assert!((t.c0 - t.q_roots.1).abs() <= 1e-12);
        assert!((fbbm_threshold_c0(1.0 / 3.0).unwrap().c0 - 1.0).abs() < 1e-12);
        assert!((fbbm_threshold_c0(0.5).unwrap().c0 - 1.0).abs() < 1e-15);
        assert!(matches!(fbbm_threshold_c0(0.2), Err(Error::AlphaOutOfRange(_))));
    }

    #[test]
    fn bracket_and_its_derivative() {
        assert!((fbbm_p(0.5, 2.0) - 8.0).abs() < 1e-12);
        assert!((fbbm_m_closed_form(0.5, 2.0, 1.0).unwrap() - 4.0).abs() < 1e-12);
        for &(a, c) in &[(0.4, 1.05), (0.4, 1.3), (0.6, 2.0), (0.45, 1.01)] {
            let h = 1e-6;
            let fd = (fbbm_p(a, c + h) - fbbm_p(a, c - h)) / (2.0 * h);
            assert!((fd - fbbm_p_prime(a, c)).abs() < 1e-6 * fd.abs().max(1.0));
        }
        assert!(fbbm_p_prime(0.4, 1.05) < 0.0);
        assert!(fbbm_p_prime(0.4, 1.3) > 0.0);
        assert!(fbbm_p_prime(0.6, 2.0) > 0.0);
    }

    #[test]
    fn derivative_sign_changes_at_threshold() {
        // p'(c) vanishes exactly where q(c) does
        for &a in &[0.36, 0.4, 0.45, 0.49] {
            let c0 = fbbm_threshold_c0(a).unwrap().c0;
            assert!(fbbm_p_prime(a, c0 * (1.0 - 1e-6)) < 0.0);
            assert!(fbbm_p_prime(a, c0 * (1.0 + 1e-6)) > 0.0);
        }
    }

    #[test]
    fn parity_table_is_total() {
        use SlopeSource::*;
        for morse in 0..4usize {
            for kernel in 0..3usize {
                for &slope in &[-1.0, 1.0] {
                    for &src in &[ClosedForm, FiniteDifference, InversePairing] {
                        let (v, _) = parity_rule(morse, kernel, slope, src);
                        let s = if src == InversePairing { -slope } else { slope };
                        let expect = if kernel != 1 {
                            Verdict::HypothesisViolated
                        } else if (morse % 2 == 0 && s > 0.0) || (morse % 2 == 1 && s < 0.0) {
                            Verdict::LinearlyUnstable
                        } else {
                            Verdict::CriterionSilent
                        };
                        assert_eq!(v, expect);
                    }
                }
            }
        }
    }

    #[test]
    fn fd_slope_matches_closed_form_for_sech() {
        let params = ModelParams::fkdv(2.0, 1, 1.0, Normalization::GroundState).unwrap();
        let g = Grid::shared(40.0, 1024).unwrap();
        let w = waves::solve_ground_state(&params, &g, &SolveOptions::default()).unwrap();
        let fd = dfdc_finite_difference(&w, None).unwrap();
        let cf = closed_form_slope(&w).unwrap();
        assert!((fd - cf).abs() < 1e-5 * cf.abs(), "{fd} {cf}");
    }

    #[test]
    fn kdv_has_no_growing_mode() {
        let params = ModelParams::fkdv(2.0, 1, 1.0, Normalization::PaperEq16).unwrap();
        let g = Grid::shared(20.0, 128).unwrap();
        let w = waves::solve_ground_state(&params, &g, &SolveOptions::default()).unwrap();
        let m = find_growing_mode(&w, &GrowingModeOptions::default()).unwrap();
        assert!(m.is_none());
    }

    #[test]
    fn determinant_sign_counts_negative_real_eigenvalues() {
        let m = Mat::<f64>::from_fn(3, 3, |i, j| [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -2.0]][i][j]);
        let (s, l) = det_sign_log(&m);
        assert_eq!(s, 1.0);
        assert!((l - 2f64.ln()).abs() < 1e-14);
    }

    fn quintic_kdv(n: usize) -> WaveProfile {
        let params = ModelParams::fkdv(2.0, 5, 1.0, Normalization::PaperEq16).unwrap();
        let g = Grid::shared(20.0, n).unwrap();
        waves::solve_ground_state(&params, &g, &SolveOptions::default()).unwrap()
    }

    #[test]
    fn supercritical_kdv_growing_mode_agrees_across_methods() {
        let w = quintic_kdv(256);
        let dense = find_growing_mode(&w, &GrowingModeOptions::default()).unwrap().expect("growing mode");
        assert!(dense.lambda_im.abs() < 1e-8, "{}", dense.lambda_im);
        assert!(dense.residual < 1e-6);
        let root = dense.crosscheck.unwrap();
        assert!((root - dense.lambda).abs() < 1e-6 * dense.lambda, "{root} {}", dense.lambda);
        let det = mode_family_determinant(&w, 0.5 * root).unwrap().0 * mode_family_determinant(&w, 2.0 * root).unwrap().0;
        assert_eq!(det, -1.0);
        let it = iterative_growing_mode(&w, &GrowingModeOptions::default()).unwrap();
        assert!((it.lambda - dense.lambda).abs() < 1e-8 * dense.lambda);
        assert!(it.pairing_defect < 1e-6);
    }

    #[test]
    fn bordered_newton_matches_dense_eigenvalue() {
        let w = quintic_kdv(128);
        for &lam in &[0.01, 0.1] {
            let b = near_kernel_eigenvalue(&w, lam).unwrap();
            let vals = WaveOperator::mode_family(&w, lam).unwrap().assemble().eigenvalues().unwrap();
            let z = vals.iter().min_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap()).unwrap();
            assert!((z.re - b).abs() < 1e-9 * (1.0 + b.abs()), "{z} {b}");
        }
    }

    #[test]
    fn moving_kernel_matches_kdv_slope() {
        let params = ModelParams::fkdv(2.0, 1, 1.0, Normalization::PaperEq16).unwrap();
        let g = Grid::shared(400.0, 8192).unwrap();
        let w = waves::solve_ground_state(&params, &g, &SolveOptions::default()).unwrap();
        let lams: Vec<f64> = (0..5).map(|i| 0.0125 * 0.5f64.powf(0.5 * i as f64)).collect();
        let mk = moving_kernel_probe(&w, &lams).unwrap();
        // ‖φ'‖² = 24/5 and d/dc ‖φ_c‖² = 36 for φ = 3 sech²(x/2)
        assert!((mk.predicted + 3.75).abs() < 1e-6, "{}", mk.predicted);
        assert!(mk.relative_error < 0.01, "{} {}", mk.ratio, mk.predicted);
    }
}
