//! Coordinate dilations of a field by trigonometric interpolation.
//!
//! `dilate(u, f)(x) = u(f1 x1, f2 x2, f3 x3)` is evaluated from the grid's
//! Fourier interpolant one axis at a time; the result is then renormalized to
//! the exact mass the continuum map would produce.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, WaveField, C64};

/// Share of mass that may fall outside the representable band before a
/// rescale is flagged.
pub const RESOLUTION_LOSS_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Rescaled {
    pub field: WaveField,
    /// Estimated fraction of mass pushed past Nyquist (compression) or out of
    /// the box (expansion).
    pub lost_fraction: f64,
}

impl Rescaled {
    pub fn resolution_loss(&self) -> bool {
        self.lost_fraction > RESOLUTION_LOSS_THRESHOLD
    }
}

/// Anisotropic dilation families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnisotropicVariant {
    /// `t^{5/4} v(t x1, t x2, t^{1/2} x3)`; lowers the energy without bound when `lambda2 > 0`.
    Pancake,
    /// `t^{5/4} v(t^{3/4} x1, t^{3/4} x2, t x3)`; the `lambda2 < 0` counterpart.
    Cigar,
}

impl AnisotropicVariant {
    pub fn factors(self, t: f64) -> [f64; 3] {
        match self {
            AnisotropicVariant::Pancake => [t, t, t.sqrt()],
            AnisotropicVariant::Cigar => [t.powf(0.75), t.powf(0.75), t],
        }
    }
}

fn check_scale(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidScale(t))
    }
}

/// Interpolation weights `w[j * n + m]` for evaluating at `factor * x_j` from samples at `x_m`.
fn interpolation_matrix(grid: &GridSpec, axis: usize, factor: f64) -> Vec<f64> {
    let n = grid.n()[axis];
    let l = grid.half_lengths()[axis];
    let x = grid.coords(axis);
    let base = std::f64::consts::PI / l;
    let mut w = vec![0.0; n * n];
    for j in 0..n {
        let y = factor * x[j];
        // Points mapped outside the box read zero, not a periodic image.
        if y.abs() > l * (1.0 + 1e-12) {
            continue;
        }
        for m in 0..n {
            let d = base * (y - x[m]);
            let mut s = 1.0;
            for k in 1..n / 2 {
                s += 2.0 * (k as f64 * d).cos();
            }
            s += ((n / 2) as f64 * d).cos();
            w[j * n + m] = s / n as f64;
        }
    }
    w
}

fn apply_axis(grid: &GridSpec, data: &[C64], axis: usize, mat: &[f64]) -> Vec<C64> {
    let n = grid.n();
    let len = n[axis];
    let stride = match axis {
        0 => 1,
        1 => n[0],
        _ => n[0] * n[1],
    };
    let mut out = vec![C64::default(); data.len()];
    let g = grid.clone();
    grid.apply(&mut out, |idx, z| {
        let j = g.unravel(idx)[axis];
        let start = idx - j * stride;
        let row = &mat[j * len..(j + 1) * len];
        let mut acc = C64::default();
        for (m, &w) in row.iter().enumerate() {
            acc += data[start + m * stride] * w;
        }
        *z = acc;
    });
    out
}

fn lost_fraction(u: &WaveField, factors: [f64; 3]) -> Result<f64> {
    let g = u.grid();
    let total = u.mass();
    if total <= 0.0 {
        return Ok(0.0);
    }
    let mut lost = 0.0;
    if factors.iter().any(|&f| f > 1.0) {
        let spec = u.spectrum()?;
        let nyq = g.nyquist();
        let beyond = g.sum(spec.data(), |i, z| {
            let xi = g.wavevector(i);
            let out = (0..3).any(|a| factors[a] > 1.0 && xi[a].abs() * factors[a] > nyq[a]);
            if out {
                z.norm_sqr()
            } else {
                0.0
            }
        });
        lost += beyond * g.dv() / g.len() as f64 / total;
    }
    if factors.iter().any(|&f| f < 1.0) {
        let half = g.half_lengths();
        let outside = g.sum(u.data(), |i, z| {
            let x = g.position(i);
            let out = (0..3).any(|a| factors[a] < 1.0 && x[a].abs() >= factors[a] * half[a]);
            if out {
                z.norm_sqr()
            } else {
                0.0
            }
        });
        lost += outside * g.dv() / total;
    }
    Ok(lost)
}

/// `x -> u(f1 x1, f2 x2, f3 x3)` renormalized to `target_mass`.
pub fn dilate(u: &WaveField, factors: [f64; 3], target_mass: f64) -> Result<Rescaled> {
    for &f in &factors {
        check_scale(f)?;
    }
    u.ensure_finite()?;
    let g = u.grid();
    let lost = lost_fraction(u, factors)?;
    let mut data = u.data().to_vec();
    for (axis, &f) in factors.iter().enumerate() {
        if f != 1.0 {
            let mat = interpolation_matrix(g, axis, f);
            data = apply_axis(g, &data, axis, &mat);
        }
    }
    let mut field = WaveField::from_vec(g, data)?;
    field.set_mass(target_mass);
    field.ensure_finite()?;
    Ok(Rescaled {
        field,
        lost_fraction: lost,
    })
}

/// `u^t(x) = t^{3/2} u(t x)`; mass preserving.
pub fn isotropic_rescale(u: &WaveField, t: f64) -> Result<Rescaled> {
    check_scale(t)?;
    if t == 1.0 {
        return Ok(Rescaled {
            field: u.clone(),
            lost_fraction: 0.0,
        });
    }
    dilate(u, [t; 3], u.mass())
}

/// `u_theta(x) = theta^{-1/2} u(x / theta)`; multiplies the mass by `theta^2`.
pub fn mass_rescale(u: &WaveField, theta: f64) -> Result<Rescaled> {
    check_scale(theta)?;
    if theta == 1.0 {
        return Ok(Rescaled {
            field: u.clone(),
            lost_fraction: 0.0,
        });
    }
    dilate(u, [1.0 / theta; 3], theta * theta * u.mass())
}

/// Mass-preserving anisotropic dilation.
pub fn anisotropic_rescale(u: &WaveField, t: f64, variant: AnisotropicVariant) -> Result<Rescaled> {
    check_scale(t)?;
    if t == 1.0 {
        return Ok(Rescaled {
            field: u.clone(),
            lost_fraction: 0.0,
        });
    }
    dilate(u, variant.factors(t), u.mass())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{breakdown, PhysParams};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn identity_at_unit_scale() {
        let g = GridSpec::cubic(16, 6.0).unwrap();
        let u = WaveField::gaussian(&g, [1.0, 1.2, 0.8], 2.0);
        let r = isotropic_rescale(&u, 1.0).unwrap();
        assert_eq!(r.field.distance(&u).unwrap(), 0.0);
        assert_eq!(mass_rescale(&u, 1.0).unwrap().field.distance(&u).unwrap(), 0.0);
        let r = anisotropic_rescale(&u, 1.0, AnisotropicVariant::Cigar).unwrap();
        assert_eq!(r.field.distance(&u).unwrap(), 0.0);
    }

    #[test]
    fn interpolation_reproduces_band_limited_samples() {
        // Evaluating at factor 1 must give back the samples exactly.
        let g = GridSpec::cubic(16, 4.0).unwrap();
        let u = WaveField::gaussian(&g, [1.0; 3], 1.0);
        let out = dilate(&u, [1.0 + 1e-15, 1.0, 1.0], 1.0).unwrap();
        assert!(out.field.distance(&u).unwrap() < 1e-12);
    }

    #[test]
    fn gaussian_scaling_examples() {
        let g = GridSpec::cubic(64, 8.0).unwrap();
        let u = WaveField::gaussian(&g, [1.0; 3], 1.0);
        let p = PhysParams::free(-1.0, 0.0);
        let r = isotropic_rescale(&u, 2.0).unwrap();
        assert!(!r.resolution_loss());
        let e = breakdown(&r.field, &p).unwrap();
        assert!(rel(e.a, 6.0) < 1e-6, "A = {}", e.a);
        assert!(rel(e.d, 0.375) < 1e-6, "D = {}", e.d);
        assert!(rel(e.b, -0.507_949_087_473_927_8) < 1e-6, "B = {}", e.b);
        let m = mass_rescale(&u, 2.0).unwrap();
        let e = breakdown(&m.field, &p).unwrap();
        assert!(rel(e.mass, 4.0) < 1e-12);
        assert!(rel(e.a, 1.5) < 1e-6);
        assert!(rel(e.b, -0.126_987_271_868_481_94) < 1e-6, "B = {}", e.b);
    }

    #[test]
    fn rejects_non_positive_scales() {
        let g = GridSpec::cubic(8, 4.0).unwrap();
        let u = WaveField::gaussian(&g, [1.0; 3], 1.0);
        assert!(matches!(isotropic_rescale(&u, 0.0), Err(Error::InvalidScale(_))));
        assert!(matches!(mass_rescale(&u, -1.0), Err(Error::InvalidScale(_))));
        assert!(matches!(
            anisotropic_rescale(&u, f64::NAN, AnisotropicVariant::Pancake),
            Err(Error::InvalidScale(_))
        ));
    }

    #[test]
    fn flags_compression_past_nyquist() {
        let g = GridSpec::cubic(32, 8.0).unwrap();
        let u = WaveField::gaussian(&g, [1.0; 3], 1.0);
        assert!(isotropic_rescale(&u, 15.0).unwrap().resolution_loss());
        assert!(isotropic_rescale(&u, 0.2).unwrap().resolution_loss());
        assert!(!isotropic_rescale(&u, 1.5).unwrap().resolution_loss());
    }
}
