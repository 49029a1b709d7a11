//! Time evolution by Strang splitting.
//!
//! One step of size `dt` is `P(dt/2) K(dt) P(dt/2)` where `K` is the exact
//! free propagator `exp(-i dt |xi|^2 / 2)` in Fourier space and `P` the exact
//! pointwise phase `exp(-i dt (a^2|x|^2/2 + lambda1 |psi|^2 + lambda2 Phi))`.
//! `P` leaves `|psi|` unchanged, so consecutive half steps between samples are
//! fused into one full step.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{breakdown, mean_field_potential, EnergyBreakdown, PhysParams};
use crate::grid::{GridSpec, WaveField, C64};
use crate::io::fmt_f64;

pub const CSV_HEADER: &str = "t,mass,E,A,B,D,Q,variance,virial_residual,max_density,tail_fraction";

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    pub dt: f64,
    pub t_max: f64,
    /// Steps between recorded samples.
    pub sample_every: usize,
    /// Keep a copy of the field at every sample (needed for scattering).
    pub keep_snapshots: bool,
    /// Halt with `BlowUpSuspected` once `A > blowup_factor * A(0)`.
    pub blowup_factor: f64,
    /// Halt with `BlowUpSuspected` once the top-third spectral share exceeds this.
    pub tail_limit: f64,
    /// Halt with `ResolutionLost` once boundary density exceeds this fraction of the peak.
    pub boundary_limit: f64,
}

impl EvolveOptions {
    pub fn new(dt: f64, t_max: f64, sample_every: usize) -> Self {
        EvolveOptions {
            dt,
            t_max,
            sample_every,
            keep_snapshots: false,
            blowup_factor: 1e4,
            tail_limit: 0.1,
            boundary_limit: 1e-6,
        }
    }

    pub fn with_snapshots(mut self) -> Self {
        self.keep_snapshots = true;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt = {} must be > 0", self.dt)));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("tmax = {} must be > 0", self.t_max)));
        }
        if self.sample_every == 0 {
            return Err(Error::InvalidParameter("sample_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// One monitor row. `energy` and `q` are the trapped variants when `a > 0`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Sample {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub a: f64,
    pub b: f64,
    pub d: f64,
    pub q: f64,
    /// `V(t) = int |x|^2 |psi|^2`.
    pub variance: f64,
    /// `|V'' - 2Q| / (1 + |Q|)` by central differences; NaN at the end points.
    pub virial_residual: f64,
    pub max_density: f64,
    pub tail_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Completed,
    BlowUpSuspected,
    ResolutionLost,
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub params: PhysParams,
    pub dt: f64,
    pub rows: Vec<Sample>,
    pub verdict: Verdict,
    /// Time at which the run was halted, if it was.
    pub halted_at: Option<f64>,
    /// Fields at the sample times, when requested.
    pub snapshots: Vec<(f64, WaveField)>,
    pub final_field: WaveField,
}

impl TrajectoryRecord {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let cols = [
                r.t,
                r.mass,
                r.energy,
                r.a,
                r.b,
                r.d,
                r.q,
                r.variance,
                r.virial_residual,
                r.max_density,
                r.tail_fraction,
            ];
            let line: Vec<String> = cols.iter().map(|&x| fmt_f64(x)).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// Largest relative mass deviation from the first sample.
    pub fn mass_drift(&self) -> f64 {
        let m0 = self.rows[0].mass;
        self.rows.iter().map(|r| (r.mass - m0).abs() / m0).fold(0.0, f64::max)
    }

    /// Largest absolute energy deviation from the first sample.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.rows[0].energy;
        self.rows.iter().map(|r| (r.energy - e0).abs()).fold(0.0, f64::max)
    }

    pub fn max_kinetic(&self) -> f64 {
        self.rows.iter().map(|r| r.a).fold(0.0, f64::max)
    }
}

/// Precomputed propagators for a fixed grid, parameters and step.
pub struct Stepper {
    grid: GridSpec,
    params: PhysParams,
    dt: f64,
    kinetic_phase: Vec<C64>,
    trap_potential: Vec<f64>,
}

impl Stepper {
    pub fn new(grid: &GridSpec, params: &PhysParams, dt: f64) -> Self {
        let kinetic_phase = grid.ksq().iter().map(|&k2| C64::from_polar(1.0, -0.5 * dt * k2)).collect();
        let a2 = params.trap * params.trap;
        let trap_potential = grid.rsq().iter().map(|&r2| 0.5 * a2 * r2).collect();
        Stepper {
            grid: grid.clone(),
            params: *params,
            dt,
            kinetic_phase,
            trap_potential,
        }
    }

    fn potential(&self, psi: &mut [C64], tau: f64) {
        let rho: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
        let w = mean_field_potential(&self.grid, &rho, self.params.lambda1, self.params.lambda2);
        let v = &self.trap_potential;
        self.grid
            .apply(psi, |i, z| *z *= C64::from_polar(1.0, -tau * (v[i] + w[i])));
    }

    fn kinetic(&self, psi: &mut [C64]) {
        self.grid.fft_forward(psi);
        let ph = &self.kinetic_phase;
        self.grid.apply(psi, |i, z| *z *= ph[i]);
        self.grid.fft_inverse(psi);
    }

    /// `steps` Strang steps with the interior half steps fused.
    pub fn advance(&self, psi: &mut WaveField, steps: usize) {
        if steps == 0 {
            return;
        }
        let data = psi.data_mut();
        self.potential(data, 0.5 * self.dt);
        for s in 0..steps {
            self.kinetic(data);
            let tau = if s + 1 == steps { 0.5 * self.dt } else { self.dt };
            self.potential(data, tau);
        }
    }
}

fn boundary_density(u: &WaveField) -> f64 {
    let g = u.grid();
    let data = u.data();
    let mut m: f64 = 0.0;
    for (i, z) in data.iter().enumerate() {
        if g.unravel(i).contains(&0) {
            m = m.max(z.norm_sqr());
        }
    }
    m
}

fn sample(t: f64, u: &WaveField, p: &PhysParams) -> Result<(Sample, EnergyBreakdown)> {
    let e = breakdown(u, p)?;
    let tail = u.spectrum()?.tail_fraction();
    let trapped = p.trap > 0.0;
    Ok((
        Sample {
            t,
            mass: e.mass,
            energy: if trapped { e.e_a } else { e.e },
            a: e.a,
            b: e.b,
            d: e.d,
            q: if trapped { e.q_a } else { e.q },
            variance: e.d,
            virial_residual: f64::NAN,
            max_density: u.max_density(),
            tail_fraction: tail,
        },
        e,
    ))
}

/// Integrate from `u0` up to `t_max`, sampling every `sample_every` steps.
///
/// The run halts early with `BlowUpSuspected` or `ResolutionLost`; the rows
/// up to that point are kept.
pub fn evolve(u0: &WaveField, p: &PhysParams, opts: &EvolveOptions) -> Result<TrajectoryRecord> {
    opts.validate()?;
    p.validate()?;
    u0.ensure_finite()?;
    let grid = u0.grid().clone();
    let stepper = Stepper::new(&grid, p, opts.dt);
    let total_steps = (opts.t_max / opts.dt).round().max(1.0) as usize;
    let mut psi = u0.clone();
    let mut rows = Vec::new();
    let mut snapshots = Vec::new();
    let (first, _) = sample(0.0, &psi, p)?;
    let a0 = first.a;
    rows.push(first);
    if opts.keep_snapshots {
        snapshots.push((0.0, psi.clone()));
    }
    let mut verdict = Verdict::Completed;
    let mut halted_at = None;
    let check = |s: &Sample, u: &WaveField| -> Option<Verdict> {
        if s.a > opts.blowup_factor * a0 || s.tail_fraction > opts.tail_limit {
            Some(Verdict::BlowUpSuspected)
        } else if boundary_density(u) > opts.boundary_limit * s.max_density {
            Some(Verdict::ResolutionLost)
        } else {
            None
        }
    };
    if let Some(v) = check(&rows[0], &psi) {
        verdict = v;
        halted_at = Some(0.0);
    }
    let mut done = 0;
    while verdict == Verdict::Completed && done < total_steps {
        let m = opts.sample_every.min(total_steps - done);
        stepper.advance(&mut psi, m);
        done += m;
        psi.ensure_finite()?;
        let t = done as f64 * opts.dt;
        let (s, _) = sample(t, &psi, p)?;
        rows.push(s);
        if opts.keep_snapshots {
            snapshots.push((t, psi.clone()));
        }
        if let Some(v) = check(&s, &psi) {
            verdict = v;
            halted_at = Some(t);
        }
    }
    fill_virial_residuals(&mut rows);
    Ok(TrajectoryRecord {
        params: *p,
        dt: opts.dt,
        rows,
        verdict,
        halted_at,
        snapshots,
        final_field: psi,
    })
}

fn fill_virial_residuals(rows: &mut [Sample]) {
    for i in 1..rows.len().saturating_sub(1) {
        let h1 = rows[i].t - rows[i - 1].t;
        let h2 = rows[i + 1].t - rows[i].t;
        let v2 = 2.0 * (h1 * rows[i + 1].variance - (h1 + h2) * rows[i].variance + h2 * rows[i - 1].variance)
            / (h1 * h2 * (h1 + h2));
        rows[i].virial_residual = (v2 - 2.0 * rows[i].q).abs() / (1.0 + rows[i].q.abs());
    }
}

/// Max over interior samples of `|V'' - 2Q| / (1 + |Q|)`, with `V''` from
/// central differences. Meaningful for `a = 0` runs only.
pub fn virial_check(traj: &TrajectoryRecord) -> Result<f64> {
    let rows = &traj.rows;
    if rows.len() < 3 {
        return Err(Error::InsufficientSamples {
            needed: 3,
            got: rows.len(),
        });
    }
    let h = rows[1].t - rows[0].t;
    let uniform = rows.windows(2).all(|w| ((w[1].t - w[0].t) - h).abs() <= 1e-9 * h);
    if !uniform {
        return Err(Error::InvalidParameter("virial check needs uniformly spaced samples".into()));
    }
    let mut worst: f64 = 0.0;
    for i in 1..rows.len() - 1 {
        let v2 = (rows[i + 1].variance - 2.0 * rows[i].variance + rows[i - 1].variance) / (h * h);
        worst = worst.max((v2 - 2.0 * rows[i].q).abs() / (1.0 + rows[i].q.abs()));
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Certificate {
    Certified,
    NotCertified,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GlobalityCheck {
    pub certificate: Certificate,
    pub q: f64,
    pub energy: f64,
    pub gamma: f64,
}

/// Relative guard band for the strict inequalities of the certificate.
pub const CERTIFICATE_GUARD: f64 = 1e-8;

/// Global existence certificate for `a = 0`: `Q(u0) > 0` and `E(u0) < gamma(c)`.
pub fn globality_certificate(u0: &WaveField, p: &PhysParams, gamma_c: f64) -> Result<GlobalityCheck> {
    let e = breakdown(u0, &p.with_trap(0.0))?;
    let ok = e.q > CERTIFICATE_GUARD * e.a && e.e < gamma_c - CERTIFICATE_GUARD * gamma_c.abs();
    Ok(GlobalityCheck {
        certificate: if ok { Certificate::Certified } else { Certificate::NotCertified },
        q: e.q,
        energy: e.e,
        gamma: gamma_c,
    })
}

#[derive(Debug, Clone)]
pub struct ScatteringReport {
    /// Sample times of the back-propagated states.
    pub times: Vec<f64>,
    /// `|U(-t_{i+1}) psi(t_{i+1}) - U(-t_i) psi(t_i)|`, one per consecutive pair.
    pub consecutive: Vec<f64>,
    /// `|U(-t_last) psi(t_last) - U(-t_i) psi(t_i)|` for every earlier sample.
    pub to_last: Vec<f64>,
    /// Last consecutive defect divided by `|psi(0)|`.
    pub tail_defect: f64,
    /// Last back-propagated state, the estimate of the scattering state.
    pub psi_plus: WaveField,
}

impl ScatteringReport {
    /// The consecutive defects decrease over the final `window` pairs.
    pub fn decreasing_in_window(&self, window: usize) -> bool {
        let n = self.consecutive.len();
        let start = n.saturating_sub(window);
        self.consecutive[start..].windows(2).all(|w| w[1] <= w[0])
    }
}

/// `U(-t) psi`, with `U` the free propagator.
pub fn free_backpropagate(psi: &WaveField, t: f64) -> WaveField {
    let g = psi.grid();
    let mut data = psi.data().to_vec();
    g.fft_forward(&mut data);
    let ksq = g.ksq();
    g.apply(&mut data, |i, z| *z *= C64::from_polar(1.0, 0.5 * t * ksq[i]));
    g.fft_inverse(&mut data);
    WaveField::from_vec(g, data).expect("same grid")
}

/// Cauchy defects of `U(-t) psi(t)` over sampled snapshots of an `a = 0` run.
pub fn scattering_diagnostic(snapshots: &[(f64, WaveField)], p: &PhysParams) -> Result<ScatteringReport> {
    if p.trap != 0.0 {
        return Err(Error::InvalidParameter("scattering diagnostic needs a = 0".into()));
    }
    if snapshots.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: snapshots.len(),
        });
    }
    let back: Vec<WaveField> = snapshots.iter().map(|(t, f)| free_backpropagate(f, *t)).collect();
    let mut consecutive = Vec::with_capacity(back.len() - 1);
    for w in back.windows(2) {
        consecutive.push(w[1].distance(&w[0])?);
    }
    let last = back.last().expect("non-empty");
    let mut to_last = Vec::with_capacity(back.len() - 1);
    for b in &back[..back.len() - 1] {
        to_last.push(last.distance(b)?);
    }
    let norm0 = snapshots[0].1.norm();
    Ok(ScatteringReport {
        times: snapshots.iter().map(|(t, _)| *t).collect(),
        tail_defect: consecutive.last().copied().unwrap_or(0.0) / norm0,
        consecutive,
        to_last,
        psi_plus: last.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(grid: &GridSpec) -> WaveField {
        WaveField::gaussian(grid, [1.0; 3], 1.0)
    }

    #[test]
    fn free_gaussian_spreads_like_the_closed_form() {
        let grid = GridSpec::cubic(32, 10.0).unwrap();
        let p = PhysParams::free(0.0, 0.0);
        let traj = evolve(&gauss(&grid), &p, &EvolveOptions::new(0.05, 2.0, 4)).unwrap();
        assert_eq!(traj.verdict, Verdict::Completed);
        for r in &traj.rows {
            let want = 1.5 * (1.0 + r.t * r.t);
            assert!((r.variance - want).abs() <= 1e-6 * want, "t={} V={}", r.t, r.variance);
        }
        assert!(virial_check(&traj).unwrap() < 1e-6);
        assert!(traj.mass_drift() < 1e-12);
    }

    #[test]
    fn harmonic_gaussian_is_stationary_up_to_splitting_error() {
        // Strang splitting turns the exact eigenstate into a slow breather of
        // amplitude O(dt^2) in A; the energy is conserved far more tightly.
        let grid = GridSpec::cubic(32, 7.0).unwrap();
        let p = PhysParams::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let mut devs = Vec::new();
        for dt in [0.02, 0.01] {
            let traj = evolve(&gauss(&grid), &p, &EvolveOptions::new(dt, 2.0, 10)).unwrap();
            let dev = traj.rows.iter().map(|r| (r.a - 1.5).abs()).fold(0.0, f64::max);
            assert!(dev < 0.5 * dt * dt);
            assert!(traj.energy_drift() < 1e-8);
            devs.push(dev);
        }
        let ratio = devs[0] / devs[1];
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn csv_has_fixed_header_and_one_row_per_sample() {
        let grid = GridSpec::cubic(16, 8.0).unwrap();
        let p = PhysParams::free(-1.0, 0.3);
        let traj = evolve(&gauss(&grid), &p, &EvolveOptions::new(0.01, 0.05, 1)).unwrap();
        let csv = traj.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(lines.count(), traj.rows.len());
        assert!(traj.rows.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn linear_evolution_scatters_trivially() {
        let grid = GridSpec::cubic(16, 8.0).unwrap();
        let p = PhysParams::free(0.0, 0.0);
        let traj = evolve(&gauss(&grid), &p, &EvolveOptions::new(0.05, 0.5, 2).with_snapshots()).unwrap();
        let rep = scattering_diagnostic(&traj.snapshots, &p).unwrap();
        assert!(rep.consecutive.iter().all(|&d| d < 1e-12));
        assert!(scattering_diagnostic(&traj.snapshots[..1], &p).is_err());
    }

    #[test]
    fn virial_check_needs_three_samples() {
        let grid = GridSpec::cubic(16, 8.0).unwrap();
        let p = PhysParams::free(0.0, 0.0);
        let traj = evolve(&gauss(&grid), &p, &EvolveOptions::new(0.1, 0.1, 1)).unwrap();
        assert!(matches!(virial_check(&traj), Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn options_are_validated() {
        let grid = GridSpec::cubic(16, 8.0).unwrap();
        let p = PhysParams::free(0.0, 0.0);
        assert!(evolve(&gauss(&grid), &p, &EvolveOptions::new(0.0, 1.0, 1)).is_err());
        assert!(evolve(&gauss(&grid), &p, &EvolveOptions::new(0.1, 1.0, 0)).is_err());
    }

    #[test]
    fn certificate_respects_the_guard_band() {
        let grid = GridSpec::cubic(16, 8.0).unwrap();
        let p = PhysParams::free(-1.0, 0.0);
        let g = gauss(&grid);
        let e = breakdown(&g, &p).unwrap();
        assert_eq!(globality_certificate(&g, &p, e.e).unwrap().certificate, Certificate::NotCertified);
        assert_eq!(globality_certificate(&g, &p, e.e + 1.0).unwrap().certificate, Certificate::Certified);
    }
}
