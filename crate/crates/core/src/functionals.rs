//! Scalar functionals of a field: kinetic, interaction and trap terms, the
//! energies and Pohozaev functionals built from them, the Weinstein quotient,
//! regime classification and the closed-form scale maps.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, WaveField, C64};

/// Dimensionless model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    /// Contact strength.
    pub lambda1: f64,
    /// Dipolar strength.
    pub lambda2: f64,
    /// Trap frequency `a`; zero is the free problem.
    pub trap: f64,
    /// Target mass `c`.
    pub mass: f64,
}

impl PhysParams {
    pub fn new(lambda1: f64, lambda2: f64, trap: f64, mass: f64) -> Result<Self> {
        let p = PhysParams {
            lambda1,
            lambda2,
            trap,
            mass,
        };
        p.validate()?;
        Ok(p)
    }

    /// Free problem with the given couplings and unit mass.
    pub fn free(lambda1: f64, lambda2: f64) -> Self {
        PhysParams {
            lambda1,
            lambda2,
            trap: 0.0,
            mass: 1.0,
        }
    }

    pub fn with_trap(self, trap: f64) -> Self {
        PhysParams { trap, ..self }
    }

    pub fn with_mass(self, mass: f64) -> Self {
        PhysParams { mass, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1.is_finite() && self.lambda2.is_finite()) {
            return Err(Error::InvalidParameter("couplings must be finite".into()));
        }
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mass must be > 0, got {}",
                self.mass
            )));
        }
        if !(self.trap.is_finite() && self.trap >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "trap must be >= 0, got {}",
                self.trap
            )));
        }
        Ok(())
    }

    pub fn regime(&self) -> Regime {
        classify_regime(self.lambda1, self.lambda2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegimeTag {
    Unstable,
    Stable,
    Border,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub tag: RegimeTag,
    /// `lambda1 - 4 pi lambda2 / 3` for `lambda2 >= 0`, `lambda1 + 8 pi lambda2 / 3` otherwise.
    pub margin: f64,
}

/// Signed distance to the stability cone.
pub fn regime_margin(lambda1: f64, lambda2: f64) -> f64 {
    if lambda2 >= 0.0 {
        lambda1 - 4.0 * PI * lambda2 / 3.0
    } else {
        lambda1 + 8.0 * PI * lambda2 / 3.0
    }
}

pub fn classify_regime(lambda1: f64, lambda2: f64) -> Regime {
    classify_regime_with_tolerance(lambda1, lambda2, 0.0)
}

/// Like [`classify_regime`] but margins within `eps` of zero count as `Border`.
pub fn classify_regime_with_tolerance(lambda1: f64, lambda2: f64, eps: f64) -> Regime {
    let margin = regime_margin(lambda1, lambda2);
    let tag = if margin.abs() <= eps {
        RegimeTag::Border
    } else if margin < 0.0 {
        RegimeTag::Unstable
    } else {
        RegimeTag::Stable
    };
    Regime { tag, margin }
}

/// Most negative value of `lambda1 + lambda2 * K(xi)` over the grid's nonzero
/// wavenumbers. Negative exactly when some field on this grid has `B < 0`.
pub fn min_interaction_symbol(grid: &GridSpec, lambda1: f64, lambda2: f64) -> f64 {
    grid.khat()
        .iter()
        .skip(1)
        .map(|&k| lambda1 + lambda2 * k)
        .fold(f64::INFINITY, f64::min)
}

/// Per-field energy terms; the keys match the `functionals` report format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub mass: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "E_a")]
    pub e_a: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "Q_a")]
    pub q_a: f64,
    /// Weinstein quotient; `None` unless `B < 0`.
    #[serde(rename = "J")]
    pub j: Option<f64>,
    pub sigma_sq: f64,
}

impl EnergyBreakdown {
    pub fn from_terms(mass: f64, a: f64, b: f64, d: f64, trap: f64) -> Self {
        let a2 = trap * trap;
        let e = 0.5 * a + 0.5 * b;
        EnergyBreakdown {
            mass,
            a,
            b,
            d,
            e,
            e_a: e + 0.5 * a2 * d,
            q: a + 1.5 * b,
            q_a: a - a2 * d + 1.5 * b,
            j: (b < 0.0).then(|| a.powf(1.5) * mass.sqrt() / (-b)),
            sigma_sq: mass + a + d,
        }
    }

    /// `A^3 / B^2 * 2/27`, the maximum of `E` along the dilation orbit.
    pub fn peak_level(&self) -> Option<f64> {
        (self.b < 0.0).then(|| 2.0 / 27.0 * self.a.powi(3) / (self.b * self.b))
    }
}

/// Kinetic term `A = sum |xi|^2 |U|^2 dV / N` together with `-Laplace(u)`.
pub(crate) fn kinetic_and_laplacian(u: &WaveField) -> (f64, Vec<C64>) {
    let g = u.grid();
    let mut spec = u.data().to_vec();
    g.fft_forward(&mut spec);
    let ksq = g.ksq();
    let a = g.sum(&spec, |i, z| ksq[i] * z.norm_sqr()) * g.dv() / g.len() as f64;
    g.apply(&mut spec, |i, z| *z *= ksq[i]);
    g.fft_inverse(&mut spec);
    (a, spec)
}

pub fn kinetic(u: &WaveField) -> f64 {
    let g = u.grid();
    let mut spec = u.data().to_vec();
    g.fft_forward(&mut spec);
    let ksq = g.ksq();
    g.sum(&spec, |i, z| ksq[i] * z.norm_sqr()) * g.dv() / g.len() as f64
}

/// Interaction energy from a density, evaluated as one weighted spectral sum,
/// plus the real-space mean-field potential `lambda1 rho + lambda2 K * rho`.
pub(crate) fn interaction_with_potential(grid: &GridSpec, rho: &[f64], l1: f64, l2: f64) -> (f64, Vec<f64>) {
    let mut spec: Vec<C64> = rho.iter().map(|&r| C64::new(r, 0.0)).collect();
    grid.fft_forward(&mut spec);
    let khat = grid.khat();
    let b = grid.sum(&spec, |i, z| (l1 + l2 * khat[i]) * z.norm_sqr()) * grid.dv() / grid.len() as f64;
    grid.apply(&mut spec, |i, z| *z *= l1 + l2 * khat[i]);
    grid.fft_inverse(&mut spec);
    (b, spec.iter().map(|z| z.re).collect())
}

/// Mean-field potential only (no energy).
pub(crate) fn mean_field_potential(grid: &GridSpec, rho: &[f64], l1: f64, l2: f64) -> Vec<f64> {
    if l2 == 0.0 {
        return rho.iter().map(|r| l1 * r).collect();
    }
    interaction_with_potential(grid, rho, l1, l2).1
}

/// `B = (2 pi)^-3 int (lambda1 + lambda2 K) |F(|u|^2)|^2`.
pub fn interaction(u: &WaveField, p: &PhysParams) -> f64 {
    let g = u.grid();
    let rho = u.density();
    let mut spec: Vec<C64> = rho.iter().map(|&r| C64::new(r, 0.0)).collect();
    g.fft_forward(&mut spec);
    let khat = g.khat();
    let (l1, l2) = (p.lambda1, p.lambda2);
    g.sum(&spec, |i, z| (l1 + l2 * khat[i]) * z.norm_sqr()) * g.dv() / g.len() as f64
}

/// Trap moment `D = sum |x|^2 |u|^2 dV`.
pub fn trap_moment(u: &WaveField) -> f64 {
    let g = u.grid();
    let rsq = g.rsq();
    g.sum(u.data(), |i, z| rsq[i] * z.norm_sqr()) * g.dv()
}

pub fn breakdown(u: &WaveField, p: &PhysParams) -> Result<EnergyBreakdown> {
    u.ensure_finite()?;
    Ok(EnergyBreakdown::from_terms(
        u.mass(),
        kinetic(u),
        interaction(u, p),
        trap_moment(u),
        p.trap,
    ))
}

fn defocusable(u: &WaveField, p: &PhysParams) -> Result<(f64, f64)> {
    u.ensure_finite()?;
    let a = kinetic(u);
    let b = interaction(u, p);
    if b < 0.0 {
        Ok((a, b))
    } else {
        Err(Error::NotDefocusable(b))
    }
}

/// Unique `t > 0` with `Q(u^t) = 0`: `t* = -2A / (3B)`.
pub fn t_star(u: &WaveField, p: &PhysParams) -> Result<f64> {
    let (a, b) = defocusable(u, p)?;
    Ok(-2.0 * a / (3.0 * b))
}

/// `max_t E(u^t) = (2/27) A^3 / B^2`.
pub fn peak_level(u: &WaveField, p: &PhysParams) -> Result<f64> {
    let (a, b) = defocusable(u, p)?;
    Ok(2.0 / 27.0 * a.powi(3) / (b * b))
}

/// Weinstein quotient `A^{3/2} mass^{1/2} / (-B)`.
pub fn weinstein(u: &WaveField, p: &PhysParams) -> Result<f64> {
    let (a, b) = defocusable(u, p)?;
    Ok(a.powf(1.5) * u.mass().sqrt() / (-b))
}

/// `A + omega^2 D - 3 omega mass`, non-negative by the uncertainty principle.
pub fn heisenberg_residual(u: &WaveField, omega: f64) -> Result<f64> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::InvalidParameter(format!("omega must be > 0, got {omega}")));
    }
    u.ensure_finite()?;
    Ok(kinetic(u) + omega * omega * trap_moment(u) - 3.0 * omega * u.mass())
}

/// Physical inputs in any SI-coherent unit system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalInput {
    /// Planck constant as it appears in the Schrödinger operator.
    pub h: f64,
    /// Particle mass.
    pub m: f64,
    /// s-wave scattering length (signed).
    pub a_s: f64,
    /// Particle number.
    pub n: f64,
    /// Vacuum permeability.
    pub mu0: f64,
    /// Dipole moment.
    pub mu_dip: f64,
}

/// Dimensionless couplings with length unit `sqrt(h/m)`.
pub fn nondimensionalize(phys: &PhysicalInput) -> Result<(f64, f64)> {
    for (name, v) in [("h", phys.h), ("m", phys.m), ("N", phys.n)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidPhysical(format!("{name} must be > 0, got {v}")));
        }
    }
    let gamma = (phys.m / phys.h).sqrt();
    let lambda1 = 4.0 * PI * phys.a_s * phys.n * gamma;
    let lambda2 =
        phys.m * phys.n * phys.mu0 * phys.mu_dip * phys.mu_dip / (4.0 * PI * phys.h * phys.h) * gamma;
    Ok((lambda1, lambda2))
}
