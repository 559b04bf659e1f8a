//! Viscous stress `G[|Du|^2] Du`, its divergence, and the pointwise and
//! integral monotonicity checks for the stress map.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::constitutive::{AdmissibleLaw, ConstitutiveLaw};
use crate::error::Result;
use crate::fields::{dealias_in_place, sym_gradient, Grid, SpectralField, StrainField};
use crate::tensor::{sym_index, Sym3};

/// Symmetric stress tensor per grid point.
#[derive(Debug, Clone)]
pub struct StressField {
    grid: Grid,
    comps: [Vec<f64>; 6],
}

impl StressField {
    pub(crate) fn from_components(grid: &Grid, comps: [Vec<f64>; 6]) -> Self {
        StressField {
            grid: grid.clone(),
            comps,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn component(&self, i: usize, j: usize) -> &[f64] {
        &self.comps[sym_index(i, j)]
    }

    pub fn components(&self) -> &[Vec<f64>; 6] {
        &self.comps
    }

    #[inline]
    pub fn at(&self, p: usize) -> Sym3 {
        Sym3(std::array::from_fn(|c| self.comps[c][p]))
    }
}

/// `sigma = G[|Du|^2] Du` pointwise.
pub fn stress(law: &AdmissibleLaw, du: &StrainField) -> StressField {
    stress_with_offset(law, du, 0.0)
}

/// `(G[|Du|^2] - offset) Du` pointwise.
pub(crate) fn stress_with_offset(law: &ConstitutiveLaw, du: &StrainField, offset: f64) -> StressField {
    let coef: Vec<f64> = du
        .magnitude_sq()
        .par_iter()
        .map(|&s| law.value(s) - offset)
        .collect();
    let comps = std::array::from_fn(|c| {
        du.components()[c]
            .par_iter()
            .zip(&coef)
            .map(|(d, g)| g * d)
            .collect()
    });
    StressField {
        grid: du.grid().clone(),
        comps,
    }
}

/// `sum_j d/dx_j sigma_ij` in spectral space, dealiased.
pub(crate) fn divergence(sigma: &StressField) -> SpectralField {
    let grid = sigma.grid();
    let spec: Vec<Vec<Complex64>> = sigma
        .comps
        .par_iter()
        .map(|c| grid.fft().forward(c))
        .collect();
    let comps = (0..3)
        .map(|i| {
            (0..grid.spectral_len())
                .into_par_iter()
                .map(|idx| {
                    let k = grid.derivative_wavevector(idx);
                    let acc: Complex64 = (0..3).map(|j| spec[sym_index(i, j)][idx] * k[j]).sum();
                    Complex64::new(-acc.im, acc.re)
                })
                .collect()
        })
        .collect();
    let mut out = SpectralField::from_coeffs(grid, comps).expect("grid-sized spectra");
    dealias_in_place(&mut out);
    out
}

/// `div(G[|Du|^2] Du)` for a velocity field, dealiased.
pub fn stress_divergence(law: &AdmissibleLaw, u: &SpectralField) -> SpectralField {
    divergence(&stress(law, &sym_gradient(u)))
}

/// `G[|A|^2]|B|^2 + 2G'[|A|^2](A:B)^2 - m0|B|^2`.
pub fn coercivity_margin(law: &ConstitutiveLaw, a: &Sym3, b: &Sym3) -> f64 {
    let s = a.norm_sq();
    let b2 = b.norm_sq();
    let ab = a.dot(b);
    law.value(s) * b2 + 2.0 * law.deriv(s, 1) * ab * ab - law.m0() * b2
}

/// `int sigma(u):Du dx` by grid quadrature.
pub fn dissipation(law: &ConstitutiveLaw, du: &StrainField) -> f64 {
    let density: Vec<f64> = du
        .magnitude_sq()
        .par_iter()
        .map(|&s| law.value(s) * s)
        .collect();
    du.grid().integrate(&density)
}

/// `int (sigma(v) - sigma(w)):(Dv - Dw) dx - m0 ||Dv - Dw||^2`.
pub fn monotonicity_gap(law: &AdmissibleLaw, v: &SpectralField, w: &SpectralField) -> Result<f64> {
    v.grid().ensure_same(w.grid())?;
    let dv = sym_gradient(v);
    let dw = sym_gradient(w);
    let m0 = law.m0();
    let grid = v.grid();
    let density: Vec<f64> = (0..grid.physical_len())
        .into_par_iter()
        .map(|p| {
            let a = dv.at(p);
            let b = dw.at(p);
            let diff = a - b;
            let sa = law.value(a.norm_sq());
            let sb = law.value(b.norm_sq());
            (sa * a - sb * b).dot(&diff) - m0 * diff.norm_sq()
        })
        .collect();
    Ok(grid.integrate(&density))
}
