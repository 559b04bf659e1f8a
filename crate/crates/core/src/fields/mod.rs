//! Periodic-box fields: grid, spectral storage, differentiation, Leray
//! projection, 2/3 dealiasing, Sobolev norms and initial data.

pub mod checkpoint;
pub mod fft;

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Sym3, SYM_PAIRS};

use self::fft::Fft3;

pub const MAX_SOBOLEV_ORDER: u32 = 6;

/// Uniform `n^3` grid on the torus `[0, L)^3`, with cached transform plans.
#[derive(Clone)]
pub struct Grid {
    n: usize,
    box_length: f64,
    /// Integer wavenumber of each index along y and z (and x for `i < nh`).
    modes: Arc<[i64]>,
    /// Per spectral index: wavevector, derivative wavevector, `|k|^2`.
    wave: Arc<[[f64; 3]]>,
    dwave: Arc<[[f64; 3]]>,
    k_sq: Arc<[f64]>,
    retained: Arc<[bool]>,
    fft: Arc<Fft3>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.n)
            .field("box_length", &self.box_length)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Grid) -> bool {
        self.n == other.n && self.box_length == other.box_length
    }
}

impl Grid {
    /// `n` must be even and at least 8.
    pub fn new(n: usize, box_length: f64) -> Result<Self> {
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "grid size must be even and >= 8, got {n}"
            )));
        }
        if !(box_length > 0.0 && box_length.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "box length must be positive, got {box_length}"
            )));
        }
        let half = (n / 2) as i64;
        let modes: Arc<[i64]> = (0..n as i64)
            .map(|i| if i <= half { i } else { i - n as i64 })
            .collect();
        let mut grid = Grid {
            n,
            box_length,
            modes,
            wave: Arc::new([]),
            dwave: Arc::new([]),
            k_sq: Arc::new([]),
            retained: Arc::new([]),
            fft: Arc::new(Fft3::new(n)),
        };
        grid.retained = (0..grid.spectral_len())
            .map(|idx| grid.mode(idx).iter().all(|m| 3 * m.abs() <= n as i64))
            .collect();
        let s = grid.k_scale();
        let wave: Vec<[f64; 3]> = (0..grid.spectral_len())
            .map(|idx| grid.mode(idx).map(|m| m as f64 * s))
            .collect();
        grid.dwave = (0..grid.spectral_len())
            .map(|idx| grid.mode(idx).map(|m| if m == half { 0.0 } else { m as f64 * s }))
            .collect();
        grid.k_sq = wave.iter().map(|k| k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).collect();
        grid.wave = wave.into();
        Ok(grid)
    }

    /// `n^3` grid on the `2*pi` box.
    pub fn periodic(n: usize) -> Result<Self> {
        Self::new(n, TAU)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn dx(&self) -> f64 {
        self.box_length / self.n as f64
    }

    /// Volume of one grid cell, the trapezoidal quadrature weight.
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(3)
    }

    pub fn volume(&self) -> f64 {
        self.box_length.powi(3)
    }

    /// `2*pi / L`.
    pub fn k_scale(&self) -> f64 {
        TAU / self.box_length
    }

    /// Number of stored x-modes (`n/2 + 1`).
    pub fn nh(&self) -> usize {
        self.n / 2 + 1
    }

    pub fn physical_len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn spectral_len(&self) -> usize {
        self.nh() * self.n * self.n
    }

    pub(crate) fn fft(&self) -> &Fft3 {
        &self.fft
    }

    /// Integer wavevector of spectral index `idx`.
    #[inline]
    pub fn mode(&self, idx: usize) -> [i64; 3] {
        let nh = self.nh();
        let kx = idx % nh;
        let rest = idx / nh;
        [kx as i64, self.modes[rest % self.n], self.modes[rest / self.n]]
    }

    /// Physical wavevector `2*pi/L * mode`.
    #[inline]
    pub fn wavevector(&self, idx: usize) -> [f64; 3] {
        self.wave[idx]
    }

    /// `|k|^2` of spectral index `idx`.
    #[inline]
    pub fn k_sq(&self, idx: usize) -> f64 {
        self.k_sq[idx]
    }

    /// Wavevector used for first derivatives: Nyquist components zeroed so
    /// that odd derivatives of real fields stay real.
    #[inline]
    pub fn derivative_wavevector(&self, idx: usize) -> [f64; 3] {
        self.dwave[idx]
    }

    /// Multiplicity of a stored mode in the full (conjugate-symmetric) spectrum.
    #[inline]
    pub fn multiplicity(&self, idx: usize) -> f64 {
        let kx = idx % self.nh();
        if kx == 0 || kx == self.n / 2 {
            1.0
        } else {
            2.0
        }
    }

    /// 2/3 rule: `true` when every `|k_i| <= n/3`.
    #[inline]
    pub fn retains(&self, idx: usize) -> bool {
        self.retained[idx]
    }

    /// Physical coordinates of grid point `p` (x-fastest ordering).
    pub fn point(&self, p: usize) -> [f64; 3] {
        let n = self.n;
        let dx = self.dx();
        [(p % n) as f64 * dx, ((p / n) % n) as f64 * dx, (p / (n * n)) as f64 * dx]
    }

    /// Samples `f` at every grid point.
    pub fn sample<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn([f64; 3]) -> f64 + Sync,
    {
        (0..self.physical_len())
            .into_par_iter()
            .map(|p| f(self.point(p)))
            .collect()
    }

    pub fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                left: self.n,
                right: other.n,
            })
        }
    }

    /// Trapezoidal quadrature of a physical scalar over the box.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.par_iter().sum::<f64>() * self.cell_volume()
    }
}

/// Fourier coefficients of a real field with `ncomp` components.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    comps: Vec<Vec<Complex64>>,
    solenoidal: bool,
}

impl SpectralField {
    pub fn zeros(grid: &Grid, ncomp: usize) -> Self {
        SpectralField {
            grid: grid.clone(),
            comps: vec![vec![Complex64::default(); grid.spectral_len()]; ncomp],
            solenoidal: ncomp == 3,
        }
    }

    pub fn from_coeffs(grid: &Grid, comps: Vec<Vec<Complex64>>) -> Result<Self> {
        if comps.iter().any(|c| c.len() != grid.spectral_len()) {
            return Err(Error::InvalidArgument(
                "coefficient arrays do not match the grid".to_string(),
            ));
        }
        Ok(SpectralField {
            grid: grid.clone(),
            comps,
            solenoidal: false,
        })
    }

    /// Transforms physical component arrays.
    pub fn from_physical(grid: &Grid, phys: &[Vec<f64>]) -> Result<Self> {
        if phys.iter().any(|c| c.len() != grid.physical_len()) {
            return Err(Error::InvalidArgument(
                "physical arrays do not match the grid".to_string(),
            ));
        }
        let comps = phys.iter().map(|c| grid.fft().forward(c)).collect();
        Ok(SpectralField {
            grid: grid.clone(),
            comps,
            solenoidal: false,
        })
    }

    pub fn to_physical(&self) -> Vec<Vec<f64>> {
        self.comps.iter().map(|c| self.grid.fft().inverse(c)).collect()
    }

    pub fn component_physical(&self, i: usize) -> Vec<f64> {
        self.grid.fft().inverse(&self.comps[i])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn ncomp(&self) -> usize {
        self.comps.len()
    }

    pub fn component(&self, i: usize) -> &[Complex64] {
        &self.comps[i]
    }

    pub fn components(&self) -> &[Vec<Complex64>] {
        &self.comps
    }

    #[cfg(test)]
    pub(crate) fn components_mut(&mut self) -> &mut [Vec<Complex64>] {
        self.solenoidal = false;
        &mut self.comps
    }

    pub fn is_solenoidal(&self) -> bool {
        self.solenoidal
    }

    pub(crate) fn mark_solenoidal(mut self) -> Self {
        self.solenoidal = self.comps.len() == 3;
        self
    }

    /// Spectral derivative `d/dx_axis` of every component.
    pub fn derivative(&self, axis: usize) -> SpectralField {
        let grid = &self.grid;
        let comps = self
            .comps
            .iter()
            .map(|c| {
                c.par_iter()
                    .enumerate()
                    .map(|(idx, &v)| v * Complex64::new(0.0, grid.derivative_wavevector(idx)[axis]))
                    .collect()
            })
            .collect();
        SpectralField {
            grid: grid.clone(),
            comps,
            solenoidal: self.solenoidal,
        }
    }

    /// Mixed derivative along each axis in `axes`, in order.
    pub fn derivatives(&self, axes: &[usize]) -> SpectralField {
        axes.iter().fold(self.clone(), |f, &a| f.derivative(a))
    }

    pub fn scale(&self, factor: f64) -> SpectralField {
        let mut out = self.clone();
        for c in &mut out.comps {
            c.par_iter_mut().for_each(|v| *v *= factor);
        }
        out
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, factor: f64, other: &SpectralField) -> Result<SpectralField> {
        self.grid.ensure_same(&other.grid)?;
        if self.ncomp() != other.ncomp() {
            return Err(Error::InvalidArgument("component count mismatch".to_string()));
        }
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.par_iter().zip(b).map(|(x, y)| x + factor * y).collect())
            .collect();
        Ok(SpectralField {
            grid: self.grid.clone(),
            comps,
            solenoidal: self.solenoidal && other.solenoidal,
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter().map(|v| v.norm()))
            .fold(0.0, f64::max)
    }

    /// `max_k |k . u(k)|` for a 3-component field.
    pub fn divergence_max(&self) -> f64 {
        assert_eq!(self.ncomp(), 3, "divergence needs a vector field");
        (0..self.grid.spectral_len())
            .into_par_iter()
            .map(|idx| {
                let k = self.grid.wavevector(idx);
                (0..3).map(|i| self.comps[i][idx] * k[i]).sum::<Complex64>().norm()
            })
            .reduce(|| 0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.comps
            .iter()
            .all(|c| c.iter().all(|v| v.re.is_finite() && v.im.is_finite()))
    }

    /// `sum_k |u(k)|^2` over the full spectrum, weighted per mode.
    pub(crate) fn weighted_energy<W: Fn(usize) -> f64 + Sync>(&self, weight: W) -> f64 {
        let grid = &self.grid;
        (0..grid.spectral_len())
            .into_par_iter()
            .map(|idx| {
                let e: f64 = self.comps.iter().map(|c| c[idx].norm_sqr()).sum();
                if e == 0.0 {
                    0.0
                } else {
                    grid.multiplicity(idx) * weight(idx) * e
                }
            })
            .sum::<f64>()
    }
}

/// Symmetric gradient `Du` sampled on the physical grid.
#[derive(Debug, Clone)]
pub struct StrainField {
    grid: Grid,
    comps: [Vec<f64>; 6],
    mag_sq: Vec<f64>,
}

impl StrainField {
    /// Builds `Du` from the nine physical gradient components `du[i][j] = d u_i / d x_j`.
    pub fn from_gradient(grid: &Grid, du: &[Vec<f64>; 9]) -> Self {
        let comps: [Vec<f64>; 6] = std::array::from_fn(|c| {
            let (i, j) = SYM_PAIRS[c];
            if i == j {
                du[3 * i + i].clone()
            } else {
                du[3 * i + j]
                    .par_iter()
                    .zip(&du[3 * j + i])
                    .map(|(a, b)| 0.5 * (a + b))
                    .collect()
            }
        });
        Self::from_components(grid, comps)
    }

    pub fn from_components(grid: &Grid, comps: [Vec<f64>; 6]) -> Self {
        let mag_sq = (0..grid.physical_len())
            .into_par_iter()
            .map(|p| Sym3(std::array::from_fn(|c| comps[c][p])).norm_sq())
            .collect();
        StrainField {
            grid: grid.clone(),
            comps,
            mag_sq,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Component `(i, j)` over the whole grid.
    pub fn component(&self, i: usize, j: usize) -> &[f64] {
        &self.comps[crate::tensor::sym_index(i, j)]
    }

    pub fn components(&self) -> &[Vec<f64>; 6] {
        &self.comps
    }

    #[inline]
    pub fn at(&self, p: usize) -> Sym3 {
        Sym3(std::array::from_fn(|c| self.comps[c][p]))
    }

    /// `|Du|^2` per grid point.
    pub fn magnitude_sq(&self) -> &[f64] {
        &self.mag_sq
    }

    pub fn max_abs(&self) -> f64 {
        self.mag_sq.iter().cloned().fold(0.0, f64::max).sqrt()
    }

    /// `||Du||^2_{L^2}` by grid quadrature.
    pub fn l2_norm_sq(&self) -> f64 {
        self.grid.integrate(&self.mag_sq)
    }
}

/// Physical velocity gradient `du[3*i + j] = d u_i / d x_j`.
pub fn velocity_gradient(u: &SpectralField) -> [Vec<f64>; 9] {
    assert_eq!(u.ncomp(), 3, "velocity gradient needs a vector field");
    let grid = u.grid();
    let parts: Vec<Vec<f64>> = (0..9)
        .into_par_iter()
        .map(|c| {
            let (i, j) = (c / 3, c % 3);
            let spec: Vec<Complex64> = u.comps[i]
                .iter()
                .enumerate()
                .map(|(idx, &v)| v * Complex64::new(0.0, grid.derivative_wavevector(idx)[j]))
                .collect();
            grid.fft().inverse(&spec)
        })
        .collect();
    parts.try_into().expect("nine gradient components")
}

/// `Du = (grad u + grad u^T) / 2` on the physical grid.
pub fn sym_gradient(u: &SpectralField) -> StrainField {
    assert_eq!(u.ncomp(), 3, "strain needs a vector field");
    let grid = u.grid();
    let parts: Vec<Vec<f64>> = (0..6)
        .into_par_iter()
        .map(|c| {
            let (i, j) = SYM_PAIRS[c];
            let spec: Vec<Complex64> = (0..grid.spectral_len())
                .map(|idx| {
                    let k = grid.derivative_wavevector(idx);
                    let v = 0.5 * (u.comps[i][idx] * k[j] + u.comps[j][idx] * k[i]);
                    Complex64::new(-v.im, v.re)
                })
                .collect();
            grid.fft().inverse(&spec)
        })
        .collect();
    StrainField::from_components(grid, parts.try_into().expect("six strain components"))
}

/// Leray projection `u - k (k . u) / |k|^2`; the mean mode is untouched.
pub fn leray_project(v: &SpectralField) -> SpectralField {
    assert_eq!(v.ncomp(), 3, "Leray projection needs a vector field");
    let grid = v.grid.clone();
    let mut comps = v.comps.clone();
    let [c0, c1, c2] = &mut comps[..] else { unreachable!() };
    c0.par_iter_mut()
        .zip(c1.par_iter_mut())
        .zip(c2.par_iter_mut())
        .enumerate()
        .for_each(|(idx, ((a, b), c))| {
            let k = grid.wavevector(idx);
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            if k2 == 0.0 {
                return;
            }
            let kdot = (*a * k[0] + *b * k[1] + *c * k[2]) / k2;
            *a -= kdot * k[0];
            *b -= kdot * k[1];
            *c -= kdot * k[2];
        });
    SpectralField {
        grid,
        comps,
        solenoidal: true,
    }
}

/// Zeroes every mode with some `|k_i| > n/3`.
pub fn dealias(v: &SpectralField) -> SpectralField {
    let mut out = v.clone();
    dealias_in_place(&mut out);
    out
}

pub(crate) fn dealias_in_place(v: &mut SpectralField) {
    let grid = v.grid.clone();
    for c in &mut v.comps {
        c.par_iter_mut().enumerate().for_each(|(idx, z)| {
            if !grid.retains(idx) {
                *z = Complex64::default();
            }
        });
    }
}

/// `||v||_{H^l}` with Fourier weight `(1 + |k|^2)^l`, normalized so that
/// `l = 0` is the `L^2` norm over the box.
pub fn sobolev_norm(v: &SpectralField, l: u32) -> Result<f64> {
    if l > MAX_SOBOLEV_ORDER {
        return Err(Error::InvalidArgument(format!(
            "Sobolev order {l} exceeds {MAX_SOBOLEV_ORDER}"
        )));
    }
    let grid = v.grid();
    let sum = v.weighted_energy(|idx| (1.0 + grid.k_sq(idx)).powi(l as i32));
    Ok((grid.volume() * sum).sqrt())
}

/// `L^2` norm of physical component arrays by grid quadrature.
pub fn l2_quadrature(grid: &Grid, phys: &[Vec<f64>]) -> f64 {
    let sq: f64 = phys.iter().map(|c| c.par_iter().map(|v| v * v).sum::<f64>()).sum();
    (sq * grid.cell_volume()).sqrt()
}

/// Taylor-Green vortex `(sin x cos y, -cos x sin y, 0)` in box units.
pub fn taylor_green(grid: &Grid) -> SpectralField {
    let s = grid.k_scale();
    let u = grid.sample(|[x, y, _]| (s * x).sin() * (s * y).cos());
    let v = grid.sample(|[x, y, _]| -(s * x).cos() * (s * y).sin());
    let w = vec![0.0; grid.physical_len()];
    let field = SpectralField::from_physical(grid, &[u, v, w]).expect("grid-sized arrays");
    leray_project(&field)
}

const RESEED_ATTEMPTS: u64 = 10;

/// Reproducible random divergence-free field supported on
/// `1 <= |k| <= k_max`, rescaled so that its `H^3` norm equals `target_h3`.
pub fn random_solenoidal(grid: &Grid, seed: u64, k_max: usize, target_h3: f64) -> Result<SpectralField> {
    if k_max == 0 || 3 * k_max > grid.n() {
        return Err(Error::InvalidArgument(format!(
            "k_max must lie in 1..={} for n = {}, got {k_max}",
            grid.n() / 3,
            grid.n()
        )));
    }
    if !(target_h3 > 0.0 && target_h3.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "target H^3 norm must be positive, got {target_h3}"
        )));
    }
    let kmax_sq = (k_max * k_max) as i64;
    for attempt in 0..RESEED_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt.wrapping_mul(0x9e37_79b9_7f4a_7c15)));
        let mut comps = vec![vec![Complex64::default(); grid.spectral_len()]; 3];
        for idx in 0..grid.spectral_len() {
            let m = grid.mode(idx);
            let m2 = m[0] * m[0] + m[1] * m[1] + m[2] * m[2];
            if (1..=kmax_sq).contains(&m2) {
                for c in comps.iter_mut() {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    c[idx] = Complex64::new(re, im);
                }
            }
        }
        for c in comps.iter_mut() {
            hermitian_symmetrize(grid, c);
        }
        let field = leray_project(&SpectralField {
            grid: grid.clone(),
            comps,
            solenoidal: false,
        });
        let norm = sobolev_norm(&field, 3)?;
        if norm > 0.0 && norm.is_finite() {
            return Ok(field.scale(target_h3 / norm));
        }
    }
    Err(Error::Degenerate(format!(
        "random field with seed {seed} projected to zero {RESEED_ATTEMPTS} times"
    )))
}

/// Enforces `c(-k) = conj(c(k))` on the self-paired `kx = 0` and `kx = n/2` planes.
fn hermitian_symmetrize(grid: &Grid, c: &mut [Complex64]) {
    let n = grid.n();
    let nh = grid.nh();
    for kx in [0, n / 2] {
        for kz in 0..n {
            for ky in 0..n {
                let (py, pz) = ((n - ky) % n, (n - kz) % n);
                let a = kx + nh * (ky + n * kz);
                let b = kx + nh * (py + n * pz);
                if a < b {
                    let avg = 0.5 * (c[a] + c[b].conj());
                    c[a] = avg;
                    c[b] = avg.conj();
                } else if a == b {
                    c[a] = Complex64::new(c[a].re, 0.0);
                }
            }
        }
    }
}

/// Scalar spectral field from a physical scalar array.
pub fn scalar_from_physical(grid: &Grid, values: Vec<f64>) -> SpectralField {
    SpectralField::from_physical(grid, &[values]).expect("grid-sized array")
}

/// Spectral interpolation of `v` onto a finer grid with the same box:
/// coefficients are copied, new modes are zero. Coarse Nyquist modes are
/// dropped since they have no real-valued counterpart on the finer grid.
pub fn refine(v: &SpectralField, fine: &Grid) -> Result<SpectralField> {
    let coarse = v.grid();
    if fine.n() < coarse.n() || fine.box_length() != coarse.box_length() {
        return Err(Error::InvalidArgument(format!(
            "cannot refine n = {} onto n = {}",
            coarse.n(),
            fine.n()
        )));
    }
    let (nc, nhc) = (coarse.n() as i64, coarse.nh());
    let half = nc / 2;
    let comps = v
        .comps
        .iter()
        .map(|c| {
            (0..fine.spectral_len())
                .into_par_iter()
                .map(|idx| {
                    let m = fine.mode(idx);
                    if m.iter().any(|k| k.abs() >= half) {
                        return Complex64::default();
                    }
                    let [kx, ky, kz] = m.map(|k| k.rem_euclid(nc) as usize);
                    c[kx + nhc * (ky + nc as usize * kz)]
                })
                .collect()
        })
        .collect();
    Ok(SpectralField {
        grid: fine.clone(),
        comps,
        solenoidal: v.solenoidal,
    })
}
