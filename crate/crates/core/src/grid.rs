//! Periodic 3D grid, spectral transforms and the dipolar Fourier multiplier.
//!
//! The computational box is `[-L1, L1) x [-L2, L2) x [-L3, L3)` sampled with
//! `n1 x n2 x n3` points, stored x-fastest: `idx = i1 + n1 * (i2 + n2 * i3)`.
//!
//! Transforms are unnormalized forward and carry `1 / (n1 n2 n3)` on the
//! inverse. With `U = fft(u)` the discrete Plancherel identity reads
//!
//! ```text
//! sum |u|^2 dV = (2 pi)^-3 sum |dV U|^2 dxi = (dV / N) sum |U|^2
//! ```
//!
//! where `dxi = prod(pi / L_i)` is the spectral cell volume.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::par::{self, Exec};

pub type C64 = Complex<f64>;

/// Continuum range of the dipolar multiplier.
pub const KHAT_MIN: f64 = -4.0 * PI / 3.0;
pub const KHAT_MAX: f64 = 8.0 * PI / 3.0;

/// Fourier multiplier of the dipolar kernel with the dipole along x3.
///
/// `K(xi) = (4 pi / 3) (2 xi3^2 - xi1^2 - xi2^2) / |xi|^2`, with `K(0) = 0`.
pub fn dipolar_symbol(xi: [f64; 3]) -> f64 {
    let s = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
    if s == 0.0 {
        return 0.0;
    }
    let perp = xi[0] * xi[0] + xi[1] * xi[1];
    let v = 4.0 * PI / 3.0 * (2.0 * xi[2] * xi[2] - perp) / s;
    v.clamp(KHAT_MIN, KHAT_MAX)
}

struct Plans {
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

struct GridInner {
    n: [usize; 3],
    half: [f64; 3],
    spacing: [f64; 3],
    coords: [Vec<f64>; 3],
    wavenumbers: [Vec<f64>; 3],
    ksq: Vec<f64>,
    khat: Vec<f64>,
    rsq: Vec<f64>,
    plans: Plans,
    exec: Exec,
}

/// Immutable grid description; cheap to clone and share between threads.
#[derive(Clone)]
pub struct GridSpec {
    inner: Arc<GridInner>,
}

impl fmt::Debug for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridSpec")
            .field("n", &self.inner.n)
            .field("half", &self.inner.half)
            .field("exec", &self.inner.exec)
            .finish()
    }
}

impl PartialEq for GridSpec {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.n == other.inner.n
                && self
                    .inner
                    .half
                    .iter()
                    .zip(other.inner.half.iter())
                    .all(|(a, b)| a.to_bits() == b.to_bits()))
    }
}

fn signed_mode(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

impl GridSpec {
    /// Build a grid with `n[i]` points on `[-half[i], half[i])`.
    pub fn new(n: [usize; 3], half: [f64; 3]) -> Result<Self> {
        Self::with_exec(n, half, Exec::default())
    }

    /// Cubic grid shorthand.
    pub fn cubic(n: usize, half: f64) -> Result<Self> {
        Self::new([n; 3], [half; 3])
    }

    pub fn with_exec(n: [usize; 3], half: [f64; 3], exec: Exec) -> Result<Self> {
        for axis in 0..3 {
            let (m, l) = (n[axis], half[axis]);
            if m < 8 || !m.is_power_of_two() {
                return Err(Error::InvalidGrid(format!(
                    "axis {} has {m} points; need a power of two >= 8",
                    axis + 1
                )));
            }
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "axis {} half-length {l} must be finite and > 0",
                    axis + 1
                )));
            }
        }
        let spacing = [0, 1, 2].map(|a| 2.0 * half[a] / n[a] as f64);
        let coords = [0, 1, 2].map(|a| {
            (0..n[a])
                .map(|j| -half[a] + j as f64 * spacing[a])
                .collect::<Vec<_>>()
        });
        let wavenumbers = [0, 1, 2].map(|a| {
            (0..n[a])
                .map(|k| PI * signed_mode(k, n[a]) as f64 / half[a])
                .collect::<Vec<_>>()
        });
        let total = n[0] * n[1] * n[2];
        let mut ksq = vec![0.0; total];
        let mut khat = vec![0.0; total];
        let mut rsq = vec![0.0; total];
        for i3 in 0..n[2] {
            for i2 in 0..n[1] {
                let row = n[0] * (i2 + n[1] * i3);
                for i1 in 0..n[0] {
                    let xi = [wavenumbers[0][i1], wavenumbers[1][i2], wavenumbers[2][i3]];
                    ksq[row + i1] = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
                    khat[row + i1] = dipolar_symbol(xi);
                    let x = [coords[0][i1], coords[1][i2], coords[2][i3]];
                    rsq[row + i1] = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
                }
            }
        }
        let mut planner = FftPlanner::new();
        let plans = Plans {
            forward: [0, 1, 2].map(|a| planner.plan_fft_forward(n[a])),
            inverse: [0, 1, 2].map(|a| planner.plan_fft_inverse(n[a])),
        };
        Ok(GridSpec {
            inner: Arc::new(GridInner {
                n,
                half,
                spacing,
                coords,
                wavenumbers,
                ksq,
                khat,
                rsq,
                plans,
                exec,
            }),
        })
    }

    /// Same grid, different execution mode.
    pub fn exec_mode(&self, exec: Exec) -> Self {
        Self::with_exec(self.inner.n, self.inner.half, exec).expect("grid already validated")
    }

    pub fn exec(&self) -> Exec {
        self.inner.exec
    }
    pub fn n(&self) -> [usize; 3] {
        self.inner.n
    }
    pub fn half_lengths(&self) -> [f64; 3] {
        self.inner.half
    }
    pub fn spacing(&self) -> [f64; 3] {
        self.inner.spacing
    }
    pub fn len(&self) -> usize {
        let n = self.inner.n;
        n[0] * n[1] * n[2]
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    /// Volume element `dx1 dx2 dx3`.
    pub fn dv(&self) -> f64 {
        let h = self.inner.spacing;
        h[0] * h[1] * h[2]
    }
    pub fn coords(&self, axis: usize) -> &[f64] {
        &self.inner.coords[axis]
    }
    /// Wavenumbers `pi k / L` for one axis in FFT order.
    pub fn wavenumbers(&self, axis: usize) -> &[f64] {
        &self.inner.wavenumbers[axis]
    }
    /// Largest representable wavenumber per axis.
    pub fn nyquist(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| PI * (self.inner.n[a] / 2) as f64 / self.inner.half[a])
    }
    /// `|xi|^2` per spectral index.
    pub fn ksq(&self) -> &[f64] {
        &self.inner.ksq
    }
    /// Dipolar multiplier per spectral index.
    pub fn khat(&self) -> &[f64] {
        &self.inner.khat
    }
    /// `|x|^2` per grid point, box-centered.
    pub fn rsq(&self) -> &[f64] {
        &self.inner.rsq
    }

    #[inline]
    pub fn index(&self, i1: usize, i2: usize, i3: usize) -> usize {
        let n = self.inner.n;
        i1 + n[0] * (i2 + n[1] * i3)
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let n = self.inner.n;
        [idx % n[0], (idx / n[0]) % n[1], idx / (n[0] * n[1])]
    }

    pub fn position(&self, idx: usize) -> [f64; 3] {
        let [i1, i2, i3] = self.unravel(idx);
        [
            self.inner.coords[0][i1],
            self.inner.coords[1][i2],
            self.inner.coords[2][i3],
        ]
    }

    pub fn wavevector(&self, idx: usize) -> [f64; 3] {
        let [i1, i2, i3] = self.unravel(idx);
        [
            self.inner.wavenumbers[0][i1],
            self.inner.wavenumbers[1][i2],
            self.inner.wavenumbers[2][i3],
        ]
    }

    /// Whether a spectral index sits on the Nyquist plane of any axis.
    pub fn on_nyquist(&self, idx: usize) -> bool {
        let k = self.unravel(idx);
        (0..3).any(|a| k[a] == self.inner.n[a] / 2)
    }

    /// Max over axes of `|k_a| / (n_a / 2)`, in `[0, 1]`.
    pub fn relative_mode(&self, idx: usize) -> f64 {
        let k = self.unravel(idx);
        (0..3)
            .map(|a| {
                let m = self.inner.n[a];
                signed_mode(k[a], m).unsigned_abs() as f64 / (m / 2) as f64
            })
            .fold(0.0, f64::max)
    }

    /// In-place unnormalized forward transform.
    pub fn fft_forward(&self, data: &mut [C64]) {
        debug_assert_eq!(data.len(), self.len());
        for axis in 0..3 {
            self.transform_axis(data, axis, false);
        }
    }

    /// In-place inverse transform including the `1/N` factor.
    pub fn fft_inverse(&self, data: &mut [C64]) {
        debug_assert_eq!(data.len(), self.len());
        for axis in 0..3 {
            self.transform_axis(data, axis, true);
        }
        let scale = 1.0 / self.len() as f64;
        par::for_each_indexed(self.exec(), data, |_, z| *z *= scale);
    }

    fn transform_axis(&self, data: &mut [C64], axis: usize, inverse: bool) {
        let n = self.inner.n;
        let plans = &self.inner.plans;
        let fft = if inverse {
            &plans.inverse[axis]
        } else {
            &plans.forward[axis]
        };
        let exec = self.exec();
        let slab = n[0] * n[1];
        match axis {
            0 => par::for_each_block(exec, data, slab, |_, block| {
                let mut scratch = vec![C64::default(); fft.get_inplace_scratch_len()];
                fft.process_with_scratch(block, &mut scratch);
            }),
            1 => par::for_each_block(exec, data, slab, |_, block| {
                let mut buf = vec![C64::default(); slab];
                for i2 in 0..n[1] {
                    for i1 in 0..n[0] {
                        buf[i1 * n[1] + i2] = block[i1 + n[0] * i2];
                    }
                }
                let mut scratch = vec![C64::default(); fft.get_inplace_scratch_len()];
                fft.process_with_scratch(&mut buf, &mut scratch);
                for i2 in 0..n[1] {
                    for i1 in 0..n[0] {
                        block[i1 + n[0] * i2] = buf[i1 * n[1] + i2];
                    }
                }
            }),
            _ => {
                // Columns along x3 have stride n1*n2; gather n1 of them at a time.
                let src: &[C64] = data;
                let columns = par::map_range(exec, n[1], |i2| {
                    let mut buf = vec![C64::default(); n[0] * n[2]];
                    for i3 in 0..n[2] {
                        let row = n[0] * i2 + slab * i3;
                        for i1 in 0..n[0] {
                            buf[i1 * n[2] + i3] = src[row + i1];
                        }
                    }
                    let mut scratch = vec![C64::default(); fft.get_inplace_scratch_len()];
                    fft.process_with_scratch(&mut buf, &mut scratch);
                    buf
                });
                for (i2, buf) in columns.into_iter().enumerate() {
                    for i3 in 0..n[2] {
                        let row = n[0] * i2 + slab * i3;
                        for i1 in 0..n[0] {
                            data[row + i1] = buf[i1 * n[2] + i3];
                        }
                    }
                }
            }
        }
    }

    /// Deterministic sum of `f(idx, value)` over a grid-shaped slice.
    pub fn sum<T: Sync>(&self, data: &[T], f: impl Fn(usize, &T) -> f64 + Sync) -> f64 {
        par::sum_indexed(self.exec(), data, f)
    }

    /// Apply `f(idx, value)` pointwise.
    pub fn apply<T: Send>(&self, data: &mut [T], f: impl Fn(usize, &mut T) + Sync) {
        par::for_each_indexed(self.exec(), data, f)
    }

    /// The dipolar multiplier sampled on this grid.
    pub fn dipolar_multiplier(&self) -> &[f64] {
        self.khat()
    }
}

/// Complex field on a grid, physical representation.
#[derive(Clone, Debug)]
pub struct WaveField {
    grid: GridSpec,
    data: Vec<C64>,
}

/// Spectral coefficients `fft(u)` of a [`WaveField`], same layout.
#[derive(Clone, Debug)]
pub struct Spectrum {
    grid: GridSpec,
    data: Vec<C64>,
}

impl WaveField {
    pub fn zeros(grid: &GridSpec) -> Self {
        WaveField {
            grid: grid.clone(),
            data: vec![C64::default(); grid.len()],
        }
    }

    pub fn from_vec(grid: &GridSpec, data: Vec<C64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "data length {} does not match grid size {}",
                data.len(),
                grid.len()
            )));
        }
        Ok(WaveField {
            grid: grid.clone(),
            data,
        })
    }

    /// Sample `f(x)` at every grid point.
    pub fn from_fn(grid: &GridSpec, f: impl Fn([f64; 3]) -> C64 + Sync) -> Self {
        let mut field = Self::zeros(grid);
        let g = grid.clone();
        grid.apply(&mut field.data, |i, z| *z = f(g.position(i)));
        field
    }

    /// Anisotropic Gaussian `exp(-sum x_i^2 / (2 s_i^2))` normalized to `mass`.
    pub fn gaussian(grid: &GridSpec, widths: [f64; 3], mass: f64) -> Self {
        let mut field = Self::from_fn(grid, |x| {
            let e: f64 = (0..3).map(|a| x[a] * x[a] / (2.0 * widths[a] * widths[a])).sum();
            C64::new((-e).exp(), 0.0)
        });
        field.set_mass(mass);
        field
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    pub fn data(&self) -> &[C64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn ensure_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFiniteField)
        }
    }

    /// `sum |u|^2 dV`.
    pub fn mass(&self) -> f64 {
        self.grid.sum(&self.data, |_, z| z.norm_sqr()) * self.grid.dv()
    }

    pub fn norm(&self) -> f64 {
        self.mass().sqrt()
    }

    /// Rescale amplitudes so that the mass equals `target`.
    pub fn set_mass(&mut self, target: f64) {
        let m = self.mass();
        if m > 0.0 {
            let s = (target / m).sqrt();
            self.scale(s);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.grid.apply(&mut self.data, |_, z| *z *= s);
    }

    /// `sum conj(self) * other dV`.
    pub fn inner(&self, other: &WaveField) -> Result<C64> {
        self.same_grid(other)?;
        let re = self
            .grid
            .sum(&self.data, |i, z| (z.conj() * other.data[i]).re);
        let im = self
            .grid
            .sum(&self.data, |i, z| (z.conj() * other.data[i]).im);
        Ok(C64::new(re, im) * self.grid.dv())
    }

    /// `self + s * other`.
    pub fn axpy(&mut self, s: C64, other: &WaveField) -> Result<()> {
        self.same_grid(other)?;
        let o = &other.data;
        self.grid.apply(&mut self.data, |i, z| *z += s * o[i]);
        Ok(())
    }

    /// Discrete L2 distance.
    pub fn distance(&self, other: &WaveField) -> Result<f64> {
        self.same_grid(other)?;
        let d = self
            .grid
            .sum(&self.data, |i, z| (z - other.data[i]).norm_sqr());
        Ok((d * self.grid.dv()).sqrt())
    }

    pub fn same_grid(&self, other: &WaveField) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Pointwise density `|u|^2`.
    pub fn density(&self) -> Vec<f64> {
        let mut rho = vec![0.0; self.data.len()];
        let d = &self.data;
        self.grid.apply(&mut rho, |i, r| *r = d[i].norm_sqr());
        rho
    }

    pub fn max_density(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max)
    }

    /// Replace each entry by its modulus.
    pub fn modulus(&self) -> WaveField {
        let mut out = self.clone();
        self.grid
            .apply(&mut out.data, |_, z| *z = C64::new(z.norm(), 0.0));
        out
    }

    /// Multiply by a global phase `e^{i theta}`.
    pub fn rotate_phase(&mut self, theta: f64) {
        let w = C64::from_polar(1.0, theta);
        self.grid.apply(&mut self.data, |_, z| *z *= w);
    }

    /// Second moment `<x_a^2>` (unnormalized, `sum x_a^2 |u|^2 dV`).
    pub fn axis_moment(&self, axis: usize) -> f64 {
        let g = &self.grid;
        g.sum(&self.data, |i, z| {
            let x = g.position(i)[axis];
            x * x * z.norm_sqr()
        }) * g.dv()
    }

    /// Copy into a larger grid with the same spacing, centered, zero outside.
    pub fn embed(&self, target: &GridSpec) -> Result<WaveField> {
        let (src, dst) = (self.grid.n(), target.n());
        let (hs, hd) = (self.grid.spacing(), target.spacing());
        for a in 0..3 {
            if dst[a] < src[a] || (hs[a] - hd[a]).abs() > 1e-12 * hs[a] {
                return Err(Error::GridMismatch);
            }
        }
        let off = [0, 1, 2].map(|a| (dst[a] - src[a]) / 2);
        let mut out = WaveField::zeros(target);
        for (i, z) in self.data.iter().enumerate() {
            let [i1, i2, i3] = self.grid.unravel(i);
            out.data[target.index(i1 + off[0], i2 + off[1], i3 + off[2])] = *z;
        }
        Ok(out)
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        transform(self)
    }
}

impl Spectrum {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    pub fn data(&self) -> &[C64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    /// Plancherel-side mass `(dV / N) sum |U|^2`.
    pub fn mass(&self) -> f64 {
        self.grid.sum(&self.data, |_, z| z.norm_sqr()) * self.grid.dv() / self.grid.len() as f64
    }

    pub fn to_field(&self) -> Result<WaveField> {
        inverse_transform(self)
    }

    /// Share of `sum |xi|^2 |U|^2` carried by modes beyond two thirds of Nyquist.
    pub fn tail_fraction(&self) -> f64 {
        let g = &self.grid;
        let ksq = g.ksq();
        let total = g.sum(&self.data, |i, z| ksq[i] * z.norm_sqr());
        if total <= 0.0 {
            return 0.0;
        }
        let tail = g.sum(&self.data, |i, z| {
            if g.relative_mode(i) > 2.0 / 3.0 {
                ksq[i] * z.norm_sqr()
            } else {
                0.0
            }
        });
        tail / total
    }
}

/// Forward transform of a physical field.
pub fn transform(u: &WaveField) -> Result<Spectrum> {
    u.ensure_finite()?;
    let mut data = u.data.clone();
    u.grid.fft_forward(&mut data);
    Ok(Spectrum {
        grid: u.grid.clone(),
        data,
    })
}

/// Inverse transform back to a physical field.
pub fn inverse_transform(s: &Spectrum) -> Result<WaveField> {
    if !s
        .data
        .iter()
        .all(|z| z.re.is_finite() && z.im.is_finite())
    {
        return Err(Error::NonFiniteField);
    }
    let mut data = s.data.clone();
    s.grid.fft_inverse(&mut data);
    Ok(WaveField {
        grid: s.grid.clone(),
        data,
    })
}

/// Build a grid, the `make_grid` entry point.
pub fn make_grid(n: [usize; 3], half: [f64; 3]) -> Result<GridSpec> {
    GridSpec::new(n, half)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: &GridSpec, seed: u64) -> WaveField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..grid.len())
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        WaveField::from_vec(grid, data).unwrap()
    }

    #[test]
    fn spacing_is_two_l_over_n() {
        let g = make_grid([32; 3], [8.0; 3]).unwrap();
        assert_eq!(g.spacing(), [0.5; 3]);
        let g = make_grid([16, 16, 32], [4.0, 4.0, 8.0]).unwrap();
        assert_eq!(g.spacing(), [0.5; 3]);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(make_grid([7, 8, 8], [8.0; 3]), Err(Error::InvalidGrid(_))));
        assert!(matches!(make_grid([4, 8, 8], [8.0; 3]), Err(Error::InvalidGrid(_))));
        assert!(matches!(make_grid([12, 8, 8], [8.0; 3]), Err(Error::InvalidGrid(_))));
        assert!(matches!(make_grid([8; 3], [8.0, 0.0, 1.0]), Err(Error::InvalidGrid(_))));
        assert!(matches!(make_grid([8; 3], [8.0, -1.0, 1.0]), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn wavenumber_table_is_symmetric_up_to_nyquist() {
        let g = make_grid([16, 8, 32], [3.0, 2.0, 5.0]).unwrap();
        for axis in 0..3 {
            let xi = g.wavenumbers(axis);
            let n = g.n()[axis];
            assert_eq!(xi.len(), n);
            assert_eq!(xi[0], 0.0);
            for k in 1..n / 2 {
                assert_eq!(xi[k], -xi[n - k]);
            }
            assert_eq!(xi[n / 2], -g.nyquist()[axis]);
        }
    }

    #[test]
    fn constant_field_has_only_dc() {
        let g = GridSpec::cubic(8, 2.0).unwrap();
        let u = WaveField::from_fn(&g, |_| C64::new(1.0, 0.0));
        let s = transform(&u).unwrap();
        assert!((s.data()[0].re - g.len() as f64).abs() < 1e-9);
        for z in &s.data()[1..] {
            assert!(z.norm() < 1e-9);
        }
    }

    #[test]
    fn plane_wave_hits_single_mode() {
        let g = make_grid([16, 8, 8], [4.0, 3.0, 2.0]).unwrap();
        let target = g.index(3, 6, 1);
        let xi0 = g.wavevector(target);
        let u = WaveField::from_fn(&g, |x| {
            C64::from_polar(1.0, xi0[0] * x[0] + xi0[1] * x[1] + xi0[2] * x[2])
        });
        let s = transform(&u).unwrap();
        for (i, z) in s.data().iter().enumerate() {
            if i == target {
                assert!((z.norm() - g.len() as f64).abs() < 1e-9);
            } else {
                assert!(z.norm() < 1e-9, "mode {i} = {z}");
            }
        }
    }

    #[test]
    fn round_trip_and_plancherel() {
        let g = make_grid([16, 32, 8], [2.0, 5.0, 1.5]).unwrap();
        let u = random_field(&g, 7);
        let s = transform(&u).unwrap();
        let back = s.to_field().unwrap();
        let err = back.distance(&u).unwrap() / u.norm();
        assert!(err < 1e-12, "round trip {err}");
        let rel = (s.mass() - u.mass()).abs() / u.mass();
        assert!(rel < 1e-12, "plancherel {rel}");
    }

    #[test]
    fn sequential_and_parallel_transforms_agree() {
        let g = GridSpec::cubic(16, 3.0).unwrap();
        let u = random_field(&g, 11);
        let seq_grid = g.exec_mode(Exec::Sequential);
        let us = WaveField::from_vec(&seq_grid, u.data().to_vec()).unwrap();
        let a = transform(&u).unwrap();
        let b = transform(&us).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(x.re.to_bits(), y.re.to_bits());
            assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
    }

    #[test]
    fn dipolar_symbol_examples() {
        assert!((dipolar_symbol([0.0, 0.0, 1.0]) - 8.0 * PI / 3.0).abs() < 1e-12);
        assert!((dipolar_symbol([1.0, 0.0, 0.0]) + 4.0 * PI / 3.0).abs() < 1e-12);
        assert!(dipolar_symbol([1.0, 1.0, 1.0]).abs() < 1e-15);
        assert_eq!(dipolar_symbol([0.0; 3]), 0.0);
    }

    #[test]
    fn multiplier_bounds_and_symmetry() {
        let g = make_grid([16, 16, 32], [4.0, 4.0, 6.0]).unwrap();
        let k = g.dipolar_multiplier();
        assert!(k.iter().all(|&v| (KHAT_MIN..=KHAT_MAX).contains(&v)));
        assert_eq!(k[0], 0.0);
        // Even in xi3 away from the Nyquist plane.
        let n = g.n();
        for i3 in 1..n[2] / 2 {
            for i1 in 0..n[0] {
                let a = k[g.index(i1, 2, i3)];
                let b = k[g.index(i1, 2, n[2] - i3)];
                assert_eq!(a, b);
            }
        }
        // Rotation by 90 degrees about xi3 on a symmetric grid.
        for i3 in 0..n[2] {
            for i2 in 0..n[1] {
                for i1 in 0..n[0] {
                    assert_eq!(k[g.index(i1, i2, i3)], k[g.index(i2, i1, i3)]);
                }
            }
        }
    }

    #[test]
    fn embed_keeps_positions_and_mass() {
        let small = GridSpec::cubic(16, 2.0).unwrap();
        let big = GridSpec::cubic(32, 4.0).unwrap();
        let u = WaveField::gaussian(&small, [0.4; 3], 1.0);
        let v = u.embed(&big).unwrap();
        assert!((v.mass() - u.mass()).abs() < 1e-12);
        let peak = |w: &WaveField| {
            let g = w.grid();
            let i = (0..g.len()).max_by(|&a, &b| w.data()[a].norm().total_cmp(&w.data()[b].norm())).unwrap();
            g.position(i)
        };
        assert_eq!(peak(&u), peak(&v));
        assert!(matches!(v.embed(&small), Err(Error::GridMismatch)));
    }
}
