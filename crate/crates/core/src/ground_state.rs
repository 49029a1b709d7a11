//! Ground states.
//!
//! * Free problem (`a = 0`): the least-energy standing wave on the mass sphere
//!   is found by minimizing the dilation-invariant reduced level
//!   `(2/27) A^3 / B^2` (equivalently the Weinstein quotient) with a
//!   preconditioned projected gradient method, then moving the minimizer onto
//!   `Q = 0` along its dilation orbit.
//! * Trapped problem (`a > 0`): the local minimizer of `E_a` inside the basin
//!   `A < 2k`, computed by a normalized gradient flow with the linear part
//!   treated implicitly.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{
    interaction, interaction_with_potential, kinetic, kinetic_and_laplacian, min_interaction_symbol,
    trap_moment, EnergyBreakdown, PhysParams, RegimeTag,
};
use crate::grid::{GridSpec, WaveField, C64};
use crate::rescale::isotropic_rescale;

pub const FREE_TOL: f64 = 1e-8;
pub const TRAPPED_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITERS: usize = 50_000;
/// Pohozaev residual `|Q| / A` required for convergence.
pub const Q_TOL: f64 = 1e-6;

/// Starting point of a solve.
#[derive(Debug, Clone, Default)]
pub enum InitialGuess {
    /// Gaussian chosen from the parameters (elongated along the dipole axis
    /// when `lambda2 > 0`, trap-matched when `a > 0`).
    #[default]
    Preset,
    /// Gaussian with these widths; rescaled to the right size in the free case.
    Gaussian([f64; 3]),
    /// Explicit field; its modulus is used.
    Field(WaveField),
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Residual tolerance; defaults to [`FREE_TOL`] / [`TRAPPED_TOL`].
    pub tol: Option<f64>,
    pub max_iters: usize,
    /// Basin parameter for the trapped solver; defaults to `4 A(trap Gaussian)`.
    pub k: Option<f64>,
    pub init: InitialGuess,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: None,
            max_iters: DEFAULT_MAX_ITERS,
            k: None,
            init: InitialGuess::Preset,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverReport {
    pub converged: bool,
    pub iterations: usize,
    /// Final constrained-gradient residual (dimensionless).
    pub residual: f64,
    /// `E` (free) or `E_a` (trapped) at the solution.
    pub level: f64,
    pub gamma_lower: Option<f64>,
    pub gamma_upper: Option<f64>,
    pub mu: f64,
    pub q_residual: f64,
    pub k_used: Option<f64>,
    /// `<x3^2> / <x1^2>`.
    pub anisotropy: f64,
    /// `(A/6 - 5/6 a^2 D) / c`, the closed form quoted for trapped critical points.
    pub mu_pohozaev_5_6: f64,
    /// `(A/6 - 7/6 a^2 D) / c`, obtained by eliminating `B` with `Q_a = 0`.
    pub mu_pohozaev_7_6: f64,
    /// Some rescale along the way pushed mass past the grid's resolution.
    pub resolution_warning: bool,
    /// Free solver only: derivative of the reduced level along the dilation
    /// orbit, which vanishes in the continuum. Large values flag an
    /// under-resolved grid.
    pub scale_defect: Option<f64>,
    pub energies: EnergyBreakdown,
}

/// Lagrange multiplier from the stationary equation tested against `u`:
/// `mu c = -(A/2 + a^2 D/2 + B)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Multiplier {
    pub mu: f64,
    /// `|Q_a| / A`; large values mean `u` is not close to a critical point.
    pub q_residual: f64,
    pub warning: bool,
    pub mu_pohozaev_5_6: f64,
    pub mu_pohozaev_7_6: f64,
}

pub fn lagrange_multiplier(u: &WaveField, p: &PhysParams) -> Result<Multiplier> {
    let e = crate::functionals::breakdown(u, p)?;
    Ok(multiplier_from(&e, p))
}

fn multiplier_from(e: &EnergyBreakdown, p: &PhysParams) -> Multiplier {
    let a2 = p.trap * p.trap;
    let q_residual = if e.a > 0.0 { e.q_a.abs() / e.a } else { f64::INFINITY };
    Multiplier {
        mu: -(0.5 * e.a + 0.5 * a2 * e.d + e.b) / e.mass,
        q_residual,
        warning: q_residual > 1e-4,
        mu_pohozaev_5_6: (e.a / 6.0 - 5.0 / 6.0 * a2 * e.d) / e.mass,
        mu_pohozaev_7_6: (e.a / 6.0 - 7.0 / 6.0 * a2 * e.d) / e.mass,
    }
}

/// Residual of the stationary equation `-1/2 Lap u + a^2|x|^2/2 u + w u + mu u = 0`
/// with `mu` from [`lagrange_multiplier`], relative to `|mu| |u|`.
pub fn stationary_residual(u: &WaveField, p: &PhysParams) -> f64 {
    let g = u.grid();
    let (_, lap) = kinetic_and_laplacian(u);
    let rho = u.density();
    let (_, w) = interaction_with_potential(g, &rho, p.lambda1, p.lambda2);
    let a2 = p.trap * p.trap;
    let rsq = g.rsq();
    let data = u.data();
    let mut h = vec![C64::default(); g.len()];
    g.apply(&mut h, |i, z| *z = lap[i] * 0.5 + data[i] * (0.5 * a2 * rsq[i] + w[i]));
    let mass = u.mass();
    let mu = -dot(g, data, &h) / mass;
    g.apply(&mut h, |i, z| *z += data[i] * mu);
    (dot(g, &h, &h) / mass).sqrt() / mu.abs()
}

fn anisotropy(u: &WaveField) -> f64 {
    u.axis_moment(2) / u.axis_moment(0)
}

/// The solvers work with real fields; spectral operators leave roundoff in the
/// imaginary part, which is dropped here.
fn clear_imag(u: &mut WaveField) {
    let g = u.grid().clone();
    g.apply(u.data_mut(), |_, z| z.im = 0.0);
}

fn make_real(u: &WaveField) -> WaveField {
    u.modulus()
}

fn dot(grid: &GridSpec, a: &[C64], b: &[C64]) -> f64 {
    grid.sum(a, |i, z| (z.conj() * b[i]).re) * grid.dv()
}

/// Fourier multiplier `m(|xi|^2)` applied to a grid vector.
fn apply_multiplier(grid: &GridSpec, v: &mut [C64], m: impl Fn(f64) -> f64 + Sync) {
    grid.fft_forward(v);
    let ksq = grid.ksq();
    grid.apply(v, |i, z| *z *= m(ksq[i]));
    grid.fft_inverse(v);
}

/// Generator of mass-preserving dilations, `x . grad u + (3/2) u`.
fn dilation_generator(u: &WaveField) -> Vec<C64> {
    let g = u.grid();
    let mut spec = u.data().to_vec();
    g.fft_forward(&mut spec);
    let mut out: Vec<C64> = u.data().iter().map(|z| z * 1.5).collect();
    for axis in 0..3 {
        let mut d = spec.clone();
        g.apply(&mut d, |i, z| {
            let k = if g.unravel(i)[axis] == g.n()[axis] / 2 { 0.0 } else { g.wavevector(i)[axis] };
            *z *= C64::new(0.0, k);
        });
        g.fft_inverse(&mut d);
        g.apply(&mut out, |i, z| *z += d[i] * g.position(i)[axis]);
    }
    out
}

/// Result of moving a field onto `Q = 0` along its dilation orbit.
#[derive(Debug, Clone)]
pub struct Projection {
    pub field: WaveField,
    /// Dilation factor actually applied.
    pub t: f64,
    pub lost_fraction: f64,
}

/// `Q / A` along the discrete dilation orbit.
fn q_ratio(u: &WaveField, p: &PhysParams) -> f64 {
    let a = kinetic(u);
    let b = interaction(u, p);
    (a + 1.5 * b) / a
}

/// Rescale `u` onto `V(c) = {Q = 0}`.
///
/// Starts from the closed form `t* = -2A/(3B)` and refines `t` by secant
/// iterations on the resampled field, so that `Q = 0` holds for the discrete
/// field actually returned.
pub fn project_to_v(u: &WaveField, p: &PhysParams) -> Result<Projection> {
    let t0 = crate::functionals::t_star(u, p)?;
    let q0 = q_ratio(u, p);
    if q0.abs() < 1e-14 {
        return Ok(Projection {
            field: u.clone(),
            t: 1.0,
            lost_fraction: 0.0,
        });
    }
    let mut best = isotropic_rescale(u, t0)?;
    let mut t1 = t0;
    let mut f1 = q_ratio(&best.field, p);
    let mut t_prev = t0 * (1.0 + 1e-4);
    let mut f_prev = q_ratio(&isotropic_rescale(u, t_prev)?.field, p);
    for _ in 0..30 {
        if f1.abs() < 1e-12 || f1 == f_prev {
            break;
        }
        let t_new = t1 - f1 * (t1 - t_prev) / (f1 - f_prev);
        if !(t_new.is_finite() && t_new > 0.0) {
            break;
        }
        let cand = isotropic_rescale(u, t_new)?;
        let f_new = q_ratio(&cand.field, p);
        t_prev = t1;
        f_prev = f1;
        t1 = t_new;
        f1 = f_new;
        best = cand;
    }
    Ok(Projection {
        field: best.field,
        t: t1,
        lost_fraction: best.lost_fraction,
    })
}

struct ReducedState {
    a: f64,
    b: f64,
    /// Gradient of `ln(A^3/B^2)` projected onto the tangent space of
    /// `{mass = c, Q = 0}`.
    grad: Vec<C64>,
    /// Unit normal of `Q = 0` within the mass sphere.
    normal: Vec<C64>,
    residual: f64,
}

fn log_reduced(a: f64, b: f64) -> f64 {
    3.0 * a.ln() - 2.0 * (-b).ln()
}

/// Removes from `v` its components along `u` and the unit vector `e`.
fn project_out(grid: &GridSpec, v: &mut [C64], u: &[C64], mass: f64, e: &[C64]) {
    let s = dot(grid, u, v) / mass;
    grid.apply(v, |i, z| *z -= u[i] * s);
    let s = dot(grid, e, v);
    grid.apply(v, |i, z| *z -= e[i] * s);
}

/// `A`, `B` and the gradients of `A` and `B` (up to the factors 2 and 4).
fn terms(u: &WaveField, p: &PhysParams) -> (f64, f64, Vec<C64>, Vec<f64>) {
    let (a, lap) = kinetic_and_laplacian(u);
    let rho = u.density();
    let (b, w) = interaction_with_potential(u.grid(), &rho, p.lambda1, p.lambda2);
    (a, b, lap, w)
}

/// Gradient of `Q` with its component along `u` removed.
fn q_normal(u: &WaveField, lap: &[C64], w: &[f64]) -> Vec<C64> {
    let g = u.grid();
    let data = u.data();
    let mut n = vec![C64::default(); g.len()];
    g.apply(&mut n, |i, z| *z = lap[i] * 2.0 + data[i] * (6.0 * w[i]));
    let s = dot(g, data, &n) / u.mass();
    g.apply(&mut n, |i, z| *z -= data[i] * s);
    n
}

/// Pull a field back onto `{mass = c, Q = 0}` by Newton steps along the
/// normal of `Q`. Returns `None` if the iteration does not settle.
fn retract(mut v: WaveField, p: &PhysParams) -> Option<WaveField> {
    let mut settled = false;
    clear_imag(&mut v);
    for _ in 0..30 {
        v.set_mass(p.mass);
        let (a, b, lap, w) = terms(&v, p);
        let q = a + 1.5 * b;
        if !q.is_finite() {
            return None;
        }
        // One more Newton step after reaching the tolerance leaves Q at roundoff.
        if q.abs() <= 1e-15 * a || (q.abs() <= 1e-12 * a && settled) {
            return Some(v);
        }
        settled = q.abs() <= 1e-12 * a;
        let n = q_normal(&v, &lap, &w);
        let s = -q / dot(v.grid(), &n, &n);
        let g = v.grid().clone();
        g.apply(v.data_mut(), |i, z| *z = C64::new(z.re + n[i].re * s, 0.0));
    }
    None
}

fn reduced_state(u: &WaveField, p: &PhysParams) -> Option<ReducedState> {
    let g = u.grid();
    let (a, b, lap, w) = terms(u, p);
    if !(b < 0.0 && a > 0.0) {
        return None;
    }
    let data = u.data();
    let mass = u.mass();
    let mut grad = vec![C64::default(); g.len()];
    g.apply(&mut grad, |i, z| {
        *z = lap[i] * (6.0 / a) - data[i] * (8.0 * w[i] / b);
    });
    let mut normal = q_normal(u, &lap, &w);
    let norm = dot(g, &normal, &normal).sqrt();
    g.apply(&mut normal, |_, z| *z /= norm);
    project_out(g, &mut grad, data, mass, &normal);
    let residual = (dot(g, &grad, &grad) * mass).sqrt();
    Some(ReducedState {
        a,
        b,
        grad,
        normal,
        residual,
    })
}

/// Derivative of `ln(A^3/B^2)` along the unit dilation direction, times
/// `|u|`. It vanishes in the continuum, so on a grid it measures how well the
/// field is resolved.
fn scale_defect(u: &WaveField, p: &PhysParams) -> f64 {
    let g = u.grid();
    let (a, b, lap, w) = terms(u, p);
    let data = u.data();
    let mass = u.mass();
    let mut dil = dilation_generator(u);
    let s = dot(g, data, &dil) / mass;
    g.apply(&mut dil, |i, z| *z -= data[i] * s);
    let norm = dot(g, &dil, &dil).sqrt();
    let d = g.sum(&dil, |i, z| {
        (z.conj() * (lap[i] * (6.0 / a) - data[i] * (8.0 * w[i] / b))).re
    }) * g.dv();
    (d / norm).abs() * mass.sqrt()
}

fn unit_gaussian_aspect(p: &PhysParams) -> [f64; 3] {
    if p.lambda2 > 0.0 {
        [1.0, 1.0, 2.0]
    } else if p.lambda2 < 0.0 {
        [2.0, 2.0, 1.0]
    } else {
        [1.0; 3]
    }
}

/// `-1.5 B / A` for a Gaussian of the given shape scaled by `s`; equals 1 on `Q = 0`.
fn gaussian_ratio(grid: &GridSpec, p: &PhysParams, shape: [f64; 3], s: f64) -> f64 {
    let u = WaveField::gaussian(grid, shape.map(|w| w * s), p.mass);
    -1.5 * interaction(&u, p) / kinetic(&u)
}

/// Gaussian with the given shape sized so that `Q = 0` on this grid.
///
/// Scans widths from below the grid spacing up to a third of the box and
/// bisects on the widest crossing of `-1.5 B / A = 1`. Returns the best ratio
/// seen when there is no crossing.
fn sized_gaussian(grid: &GridSpec, p: &PhysParams, shape: [f64; 3]) -> std::result::Result<WaveField, f64> {
    let longest = shape.iter().cloned().fold(0.0, f64::max);
    let dx = grid.spacing().iter().cloned().fold(f64::INFINITY, f64::min);
    let half = grid.half_lengths().iter().cloned().fold(f64::INFINITY, f64::min);
    let (lo, hi) = (0.25 * dx / longest, half / (3.0 * longest));
    let samples = 40;
    let widths: Vec<f64> = (0..=samples)
        .map(|k| lo * (hi / lo).powf(k as f64 / samples as f64))
        .collect();
    let ratios: Vec<f64> = widths.iter().map(|&s| gaussian_ratio(grid, p, shape, s)).collect();
    let best = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let Some(k) = (0..samples).rev().find(|&k| ratios[k] >= 1.0 && ratios[k + 1] < 1.0) else {
        return Err(best);
    };
    let (mut a, mut b) = (widths[k], widths[k + 1]);
    for _ in 0..60 {
        let m = (a * b).sqrt();
        if gaussian_ratio(grid, p, shape, m) >= 1.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(WaveField::gaussian(grid, shape.map(|w| w * a), p.mass))
}

/// Initial field on `{mass = c, Q = 0}` for the free problem.
fn free_initial(grid: &GridSpec, p: &PhysParams, init: &InitialGuess) -> Result<WaveField> {
    if min_interaction_symbol(grid, p.lambda1, p.lambda2) >= 0.0 {
        return Err(Error::NoDescentDirection);
    }
    let unreachable = |best_ratio: f64| Error::PohozaevUnreachable {
        mass: p.mass,
        best_ratio,
    };
    let u = match init {
        InitialGuess::Field(f) => {
            if f.grid() != grid {
                return Err(Error::GridMismatch);
            }
            let mut u = make_real(f);
            u.set_mass(p.mass);
            if interaction(&u, p) >= 0.0 {
                return Err(Error::NoDescentDirection);
            }
            u
        }
        InitialGuess::Gaussian(shape) => sized_gaussian(grid, p, *shape).map_err(|r| {
            if r <= 0.0 {
                Error::NoDescentDirection
            } else {
                unreachable(r)
            }
        })?,
        InitialGuess::Preset => {
            // Stretch the preset along its long axis until the interaction turns attractive.
            let base = unit_gaussian_aspect(p);
            let stretches: &[f64] = if base == [1.0; 3] { &[1.0] } else { &[1.0, 2.0, 4.0, 8.0, 16.0] };
            let mut best = f64::NEG_INFINITY;
            let mut found = None;
            for &stretch in stretches {
                let shape = base.map(|w| if w > 1.0 { w * stretch } else { w });
                match sized_gaussian(grid, p, shape) {
                    Ok(u) => {
                        found = Some(u);
                        break;
                    }
                    Err(r) => best = best.max(r),
                }
            }
            match found {
                Some(u) => u,
                None if best <= 0.0 => return Err(Error::NoDescentDirection),
                None => return Err(unreachable(best)),
            }
        }
    };
    retract(u, p).ok_or(Error::NoDescentDirection)
}

fn free_report(
    u: &WaveField,
    p: &PhysParams,
    iterations: usize,
    residual: f64,
    tol: f64,
    warn: bool,
) -> Result<SolverReport> {
    let e = crate::functionals::breakdown(u, &p.with_trap(0.0))?;
    let m = multiplier_from(&e, &p.with_trap(0.0));
    let q_residual = e.q.abs() / e.a;
    Ok(SolverReport {
        converged: residual <= tol && q_residual <= Q_TOL,
        iterations,
        residual,
        level: e.e,
        gamma_lower: Some(e.e),
        gamma_upper: Some(e.e),
        mu: m.mu,
        q_residual,
        k_used: None,
        anisotropy: anisotropy(u),
        mu_pohozaev_5_6: m.mu_pohozaev_5_6,
        mu_pohozaev_7_6: m.mu_pohozaev_7_6,
        resolution_warning: warn,
        scale_defect: Some(scale_defect(u, p)),
        energies: e,
    })
}

/// Minimize the reduced level `(2/27) A^3/B^2` over real fields of mass `c`
/// without checking the regime. The returned field lies on `Q = 0`.
pub fn minimize_reduced_level(
    grid: &GridSpec,
    p: &PhysParams,
    opts: &SolverOptions,
) -> Result<(WaveField, SolverReport)> {
    p.validate()?;
    let p = p.with_trap(0.0);
    let tol = opts.tol.unwrap_or(FREE_TOL);
    let mut u = free_initial(grid, &p, &opts.init)?;
    let mut warn = false;
    let mut state = reduced_state(&u, &p).ok_or(Error::NoDescentDirection)?;
    let mut step = 0.5;
    let mut iterations = 0;
    loop {
        if state.residual <= tol {
            break;
        }
        if iterations >= opts.max_iters {
            return Err(Error::MaxIterations {
                iterations,
                residual: state.residual,
            });
        }
        iterations += 1;

        let mass = u.mass();
        let kappa2 = state.a / mass;
        let mut dir = state.grad.clone();
        apply_multiplier(grid, &mut dir, |k2| 1.0 / (1.0 + k2 / kappa2));
        project_out(grid, &mut dir, u.data(), mass, &state.normal);
        let slope = dot(grid, &state.grad, &dir);
        let f0 = log_reduced(state.a, state.b);

        // Near the optimum the decrease of the level drops below roundoff;
        // then a step is accepted if it does not raise the level beyond noise
        // and lowers the residual.
        let noise = 64.0 * f64::EPSILON * f0.abs().max(1.0);
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial = u.clone();
            grid.apply(trial.data_mut(), |i, z| *z -= dir[i] * step);
            if let Some(trial) = retract(trial, &p) {
                let a = kinetic(&trial);
                let b = interaction(&trial, &p);
                if b < 0.0 {
                    let df = log_reduced(a, b) - f0;
                    if df <= -1e-4 * step * slope {
                        accepted = Some((trial, None));
                        break;
                    }
                    if step * slope < noise && df <= noise {
                        if let Some(next) = reduced_state(&trial, &p) {
                            if next.residual < state.residual {
                                accepted = Some((trial, Some(next)));
                                break;
                            }
                        }
                    }
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((next, next_state)) => {
                u = next;
                state = match next_state {
                    Some(s) => s,
                    None => reduced_state(&u, &p).ok_or(Error::NoDescentDirection)?,
                };
                step = (step * 1.5).min(4.0);
            }
            // No acceptable step at any length: the level is at its roundoff floor.
            None => break,
        }
    }
    // The iterate already satisfies Q = 0; the dilation projection is then a
    // no-op up to roundoff.
    let proj = project_to_v(&u, &p)?;
    warn |= proj.lost_fraction > crate::rescale::RESOLUTION_LOSS_THRESHOLD;
    let rep = free_report(&proj.field, &p, iterations, state.residual, tol, warn)?;
    Ok((proj.field, rep))
}

/// Free (untrapped) ground state of mass `c`: real, non-negative, on `Q = 0`,
/// with `gamma(c) = E(u)` and `mu = A / (6c) > 0`.
pub fn solve_free_ground_state(
    grid: &GridSpec,
    p: &PhysParams,
    opts: &SolverOptions,
) -> Result<(WaveField, SolverReport)> {
    p.validate()?;
    if p.regime().tag != RegimeTag::Unstable {
        return Err(Error::NotUnstableRegime {
            lambda1: p.lambda1,
            lambda2: p.lambda2,
        });
    }
    let (u, report) = minimize_reduced_level(grid, p, opts)?;
    if !report.converged {
        return Err(Error::MaxIterations {
            iterations: report.iterations,
            residual: report.residual,
        });
    }
    Ok((u, report))
}

/// Gaussian ground state of the bare trap, `exp(-a |x|^2 / 2)` at mass `c`.
pub fn trap_gaussian(grid: &GridSpec, trap: f64, mass: f64) -> WaveField {
    let w = 1.0 / trap.sqrt();
    WaveField::gaussian(grid, [w; 3], mass)
}

struct TrappedState {
    energy: f64,
    a: f64,
    /// `H u + mu u`
    resid: Vec<C64>,
    residual: f64,
}

fn trapped_state(u: &WaveField, p: &PhysParams) -> TrappedState {
    let g = u.grid();
    let (a, lap) = kinetic_and_laplacian(u);
    let rho = u.density();
    let (b, w) = interaction_with_potential(g, &rho, p.lambda1, p.lambda2);
    let d = trap_moment(u);
    let a2 = p.trap * p.trap;
    let rsq = g.rsq();
    let data = u.data();
    let mut hu = vec![C64::default(); g.len()];
    g.apply(&mut hu, |i, z| {
        *z = lap[i] * 0.5 + data[i] * (0.5 * a2 * rsq[i] + w[i]);
    });
    let mass = u.mass();
    let mu = -dot(g, data, &hu) / mass;
    g.apply(&mut hu, |i, z| *z += data[i] * mu);
    let lin = (0.5 * a + 0.5 * a2 * d) / mass;
    let residual = (dot(g, &hu, &hu) / mass).sqrt() / lin;
    TrappedState {
        energy: 0.5 * a + 0.5 * a2 * d + 0.5 * b,
        a,
        resid: hu,
        residual,
    }
}

/// Local minimizer of `E_a` on the mass sphere inside `A < 2k`.
pub fn solve_trapped_minimizer(
    grid: &GridSpec,
    p: &PhysParams,
    opts: &SolverOptions,
) -> Result<(WaveField, SolverReport)> {
    p.validate()?;
    if p.trap <= 0.0 {
        return Err(Error::InvalidParameter("trapped solver needs a > 0".into()));
    }
    let tol = opts.tol.unwrap_or(TRAPPED_TOL);
    let a2 = p.trap * p.trap;
    let matched = trap_gaussian(grid, p.trap, p.mass);
    let k = opts.k.unwrap_or_else(|| 4.0 * kinetic(&matched));
    let limit = 2.0 * k;
    let mut u = match &opts.init {
        InitialGuess::Preset => matched,
        InitialGuess::Gaussian(w) => WaveField::gaussian(grid, *w, p.mass),
        InitialGuess::Field(f) => {
            if f.grid() != grid {
                return Err(Error::GridMismatch);
            }
            let mut u = make_real(f);
            u.set_mass(p.mass);
            u
        }
    };
    let mut state = trapped_state(&u, p);
    if state.a >= limit {
        return Err(Error::BasinEscape {
            kinetic: state.a,
            limit,
        });
    }
    let mass = p.mass;
    let rsq = grid.rsq().to_vec();
    let mut tau = 1.0 / (0.5 * state.a / mass + 0.5 * a2 * trap_moment(&u) / mass);
    let tau_max = 8.0 * tau;
    let mut iterations = 0;
    loop {
        let q = {
            let e = crate::functionals::breakdown(&u, p)?;
            e.q_a.abs() / e.a
        };
        if (state.residual <= tol && q <= Q_TOL) || state.residual < 1e-13 {
            break;
        }
        if iterations >= opts.max_iters {
            return Err(Error::MaxIterations {
                iterations,
                residual: state.residual,
            });
        }
        iterations += 1;
        let mut accepted = false;
        for _ in 0..30 {
            // (1 + tau V)^{-1/2} (1 + tau T)^{-1} (1 + tau V)^{-1/2} r
            let mut dir = state.resid.clone();
            grid.apply(&mut dir, |i, z| *z /= (1.0 + tau * 0.5 * a2 * rsq[i]).sqrt());
            apply_multiplier(grid, &mut dir, |k2| 1.0 / (1.0 + tau * 0.5 * k2));
            grid.apply(&mut dir, |i, z| *z /= (1.0 + tau * 0.5 * a2 * rsq[i]).sqrt());
            let mut trial = u.clone();
            grid.apply(trial.data_mut(), |i, z| *z -= dir[i] * tau);
            clear_imag(&mut trial);
            trial.set_mass(mass);
            let next = trapped_state(&trial, p);
            if next.energy <= state.energy + 1e-13 * state.energy.abs() {
                if next.a >= limit {
                    return Err(Error::BasinEscape {
                        kinetic: next.a,
                        limit,
                    });
                }
                u = trial;
                state = next;
                accepted = true;
                tau = (tau * 1.25).min(tau_max);
                break;
            }
            tau *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let e = crate::functionals::breakdown(&u, p)?;
    let m = multiplier_from(&e, p);
    let q_residual = e.q_a.abs() / e.a;
    let report = SolverReport {
        converged: state.residual <= tol && q_residual <= Q_TOL,
        iterations,
        residual: state.residual,
        level: e.e_a,
        gamma_lower: None,
        gamma_upper: None,
        mu: m.mu,
        q_residual,
        k_used: Some(k),
        anisotropy: anisotropy(&u),
        mu_pohozaev_5_6: m.mu_pohozaev_5_6,
        mu_pohozaev_7_6: m.mu_pohozaev_7_6,
        resolution_warning: false,
        scale_defect: None,
        energies: e,
    };
    if !report.converged {
        if state.residual <= tol {
            return Err(Error::QResidualFloor { q_residual });
        }
        return Err(Error::MaxIterations {
            iterations,
            residual: state.residual,
        });
    }
    Ok((u, report))
}

/// Two-sided bounds for the trapped mountain-pass level.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GammaBracket {
    /// `gamma(c) = E(u_c)`.
    pub lower: f64,
    /// `max_t E_a(u_c^t)` over the sampled dilations.
    pub upper: f64,
    /// Dilation factor attaining the upper bound.
    pub t_max: f64,
    /// `D(u_c^{t_max})`.
    pub moment_at_max: f64,
}

impl GammaBracket {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Bracket `gamma(c) <= gamma_a(c) <= max_t E_a(u_c^t)` from a free ground state.
///
/// The dilation orbit is evaluated through the exact scaling laws,
/// `E_a(u^t) = t^2 A/2 + t^3 B/2 + a^2 D / (2 t^2)`, so a ground state with
/// `Q = 0` peaks at exactly `t = 1` when `a = 0` and the width is the trap
/// correction alone. The maximum is the local one near `t = 1`, where
/// `Q_a(u^t) = 0`.
pub fn estimate_gamma_a(p: &PhysParams, u_c: &WaveField) -> Result<GammaBracket> {
    p.validate()?;
    let base = crate::functionals::breakdown(u_c, &p.with_trap(0.0))?;
    let (a, b, d) = (base.a, base.b, base.d);
    if b >= 0.0 {
        return Err(Error::NotDefocusable(b));
    }
    let a2 = p.trap * p.trap;
    let level = |t: f64| 0.5 * t * t * a + 0.5 * t.powi(3) * b + 0.5 * a2 * d / (t * t);
    // t dE_a(u^t)/dt = Q_a(u^t)
    let slope = |t: f64| t * t * a + 1.5 * t.powi(3) * b - a2 * d / (t * t);
    let t_free = -2.0 * a / (3.0 * b);
    // The free slope peaks at 2/3 t_free; the local maximum lies above it.
    let (mut lo, mut hi) = (2.0 / 3.0 * t_free, t_free);
    if slope(lo) <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "trap a = {} is too strong for a local maximum along the dilation orbit",
            p.trap
        )));
    }
    while hi - lo > 1e-15 * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t_max = 0.5 * (lo + hi);
    Ok(GammaBracket {
        lower: base.e,
        upper: level(t_max),
        t_max,
        moment_at_max: d / (t_max * t_max),
    })
}

/// Cubic grid for the trapped problem: half-length `8 / sqrt(a)` (at least 8),
/// wide enough that the periodic images of the dipolar field do not spoil the
/// virial identity at the `1e-6` level.
pub fn suggest_trapped_grid(trap: f64, n: usize) -> Result<GridSpec> {
    if !(trap > 0.0 && trap.is_finite()) {
        return Err(Error::InvalidParameter(format!("trap frequency {trap} must be > 0")));
    }
    GridSpec::cubic(n, (8.0 / trap.sqrt()).max(8.0))
}

/// Grid sized to the free ground state of `p`: box half-lengths are a fixed
/// multiple of the width of the `Q = 0` Gaussian along each axis.
pub fn suggest_free_grid(p: &PhysParams, n: [usize; 3], box_factor: f64) -> Result<GridSpec> {
    let base = unit_gaussian_aspect(p);
    for stretch in [1.0, 2.0, 4.0, 8.0, 16.0] {
        let shape = base.map(|w| if w > 1.0 { w * stretch } else { w });
        let probe = GridSpec::new([32; 3], shape.map(|w| 5.0 * w))?;
        let u = WaveField::gaussian(&probe, shape, p.mass);
        let a = kinetic(&u);
        let b = interaction(&u, p);
        if b < 0.0 {
            let scale = 1.0 / (-2.0 * a / (3.0 * b));
            let half = shape.map(|w| box_factor * scale * w);
            return GridSpec::new(n, half);
        }
        if base == [1.0; 3] {
            break;
        }
    }
    Err(Error::NoDescentDirection)
}
