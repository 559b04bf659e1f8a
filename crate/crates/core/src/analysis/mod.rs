//! Numerical checks of the higher-derivative decomposition of the viscosity
//!
//! ```text
//! d^l G[|Du|^2] = 2 (G'[|Du|^2] Du : d^l Du) + E_l,
//! E_1 = 0,   E_l = 2 (d_{s(l)}(G' Du) : d^{l-1} Du) + d_{s(l)} E_{l-1}
//! ```
//!
//! for `l <= 3`, and of the pointwise bounds `|E_2| <= C G |grad Du|^2`,
//! `|E_3| <= C G (|grad Du|^3 + |grad^2 Du| |grad Du|)`.
//!
//! `E_l` is evaluated pointwise from spectrally exact derivatives of `Du`, so
//! the only error in the identity comes from differentiating the composite
//! field `G[|Du|^2]` on the grid.

pub mod jet;

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constitutive::ConstitutiveLaw;
use crate::error::{Error, Result};
use crate::fields::{scalar_from_physical, sym_gradient, Grid, SpectralField, StrainField};
use crate::tensor::Sym3;

use self::jet::{frob, Jet, SymJet};

/// Ratio denominators below this fraction of their grid maximum are skipped.
pub const DEGENERATE_FRACTION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub order: usize,
    pub dirs: Vec<usize>,
    pub residual_sup: f64,
    pub residual_rel: f64,
    pub bound_ratio: f64,
    pub n: usize,
}

fn check_dirs(dirs: &[usize]) -> Result<()> {
    if dirs.len() > 3 {
        return Err(Error::UnsupportedOrder(dirs.len()));
    }
    if dirs.is_empty() {
        return Err(Error::InvalidArgument("at least one derivative direction is required".into()));
    }
    if let Some(bad) = dirs.iter().find(|&&d| d > 2) {
        return Err(Error::InvalidArgument(format!("axis {bad} out of range 0..=2")));
    }
    Ok(())
}

fn check_velocity(u: &SpectralField) -> Result<()> {
    if u.ncomp() != 3 {
        return Err(Error::InvalidArgument(format!(
            "expected a velocity field, got {} components",
            u.ncomp()
        )));
    }
    Ok(())
}

/// Strain derivatives `d_S Du` keyed by the sorted multiset of axes `S`.
struct StrainDerivatives<'a> {
    u: &'a SpectralField,
    cache: Mutex<HashMap<Vec<usize>, std::sync::Arc<StrainField>>>,
}

impl<'a> StrainDerivatives<'a> {
    fn new(u: &'a SpectralField) -> Self {
        StrainDerivatives {
            u,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn get(&self, axes: &[usize]) -> std::sync::Arc<StrainField> {
        let mut key = axes.to_vec();
        key.sort_unstable();
        if let Some(f) = self.cache.lock().unwrap().get(&key) {
            return f.clone();
        }
        let field = std::sync::Arc::new(sym_gradient(&self.u.derivatives(&key)));
        self.cache.lock().unwrap().insert(key, field.clone());
        field
    }

    /// `d_{dirs[slot]} ...` for every subset mask of `0..dirs.len()`.
    fn subsets(&self, dirs: &[usize]) -> Vec<std::sync::Arc<StrainField>> {
        (0..1usize << dirs.len())
            .map(|mask| {
                let axes: Vec<usize> = (0..dirs.len()).filter(|s| mask >> s & 1 == 1).map(|s| dirs[s]).collect();
                self.get(&axes)
            })
            .collect()
    }
}

/// `E_l` via the recursion, at every grid point. `dirs[0]` is applied first.
pub fn e_field(law: &ConstitutiveLaw, u: &SpectralField, dirs: &[usize]) -> Result<Vec<f64>> {
    check_dirs(dirs)?;
    check_velocity(u)?;
    let derivs = StrainDerivatives::new(u);
    Ok(e_field_recursive(law, &derivs.subsets(dirs), dirs.len()))
}

fn e_field_recursive(law: &ConstitutiveLaw, subsets: &[std::sync::Arc<StrainField>], order: usize) -> Vec<f64> {
    let points = subsets[0].grid().physical_len();
    (0..points)
        .into_par_iter()
        .map(|p| e_recursion_at(law, subsets, order, p))
        .collect()
}

fn e_recursion_at(law: &ConstitutiveLaw, subsets: &[std::sync::Arc<StrainField>], order: usize, p: usize) -> f64 {
    if order < 2 {
        return 0.0;
    }
    let full = (1usize << order) - 1;
    // Du as a jet over slots 1..order (slot 0 is never differentiated
    // through G' Du, which keeps the composition within G''').
    let du_tail: SymJet = std::array::from_fn(|c| {
        let mut j = Jet::ZERO;
        for mask in (0..=full).filter(|m| m & 1 == 0) {
            j.0[mask] = subsets[mask].components()[c][p];
        }
        j
    });
    let s = frob(&du_tail, &du_tail);
    let g = law.jet(s.value());
    let g_prime = s.compose(&g[1..]);
    let flux: SymJet = std::array::from_fn(|c| g_prime * du_tail[c]);

    let mut e = Jet::ZERO;
    for m in 2..=order {
        let slot = m - 1;
        let applied = (1usize << (m - 1)) - 1;
        let remaining = full & !((1usize << m) - 1);
        let lead: SymJet = std::array::from_fn(|c| flux[c].derivative(slot));
        let lower: SymJet = std::array::from_fn(|c| {
            let mut j = Jet::ZERO;
            for mask in (0..=full).filter(|m| m & !remaining == 0) {
                j.0[mask] = subsets[mask | applied].components()[c][p];
            }
            j
        });
        e = 2.0 * frob(&lead, &lower) + e.derivative(slot);
    }
    e.value()
}

/// `E_2`, `E_3` from their fully expanded chain-rule forms; an independent
/// evaluation path for cross-checking [`e_field`].
pub fn e_field_expanded(law: &ConstitutiveLaw, u: &SpectralField, dirs: &[usize]) -> Result<Vec<f64>> {
    check_dirs(dirs)?;
    check_velocity(u)?;
    let derivs = StrainDerivatives::new(u);
    let grid = u.grid();
    let du = derivs.get(&[]);
    let points = grid.physical_len();
    match dirs {
        [_] => Ok(vec![0.0; points]),
        &[i, j] => {
            let di = derivs.get(&[i]);
            let dj = derivs.get(&[j]);
            Ok((0..points)
                .into_par_iter()
                .map(|p| {
                    let d = du.at(p);
                    let [_, g1, g2, _] = law.jet(d.norm_sq());
                    let a = d.dot(&di.at(p));
                    let b = d.dot(&dj.at(p));
                    4.0 * g2 * a * b + 2.0 * g1 * dj.at(p).dot(&di.at(p))
                })
                .collect())
        }
        &[i, j, k] => {
            let di = derivs.get(&[i]);
            let dj = derivs.get(&[j]);
            let dk = derivs.get(&[k]);
            let dji = derivs.get(&[j, i]);
            let dki = derivs.get(&[k, i]);
            let dkj = derivs.get(&[k, j]);
            Ok((0..points)
                .into_par_iter()
                .map(|p| {
                    let d = du.at(p);
                    let (di, dj, dk) = (di.at(p), dj.at(p), dk.at(p));
                    let (dji, dki, dkj) = (dji.at(p), dki.at(p), dkj.at(p));
                    let [_, g1, g2, g3] = law.jet(d.norm_sq());
                    let a = d.dot(&di);
                    let b = d.dot(&dj);
                    let c = d.dot(&dk);
                    let ji = dj.dot(&di);
                    let dk_a = dk.dot(&di) + d.dot(&dki);
                    let dk_b = dk.dot(&dj) + d.dot(&dkj);
                    let dk_e2 = 4.0 * (2.0 * g3 * c * b * a + g2 * dk_b * a + g2 * b * dk_a)
                        + 2.0 * (2.0 * g2 * c * ji + g1 * (dkj.dot(&di) + dj.dot(&dki)));
                    2.0 * (2.0 * g2 * c * d.dot(&dji) + g1 * dk.dot(&dji)) + dk_e2
                })
                .collect())
        }
        _ => unreachable!("checked above"),
    }
}

/// Pointwise `M_2 = |grad Du|^2` or `M_3 = |grad Du|^3 + |grad^2 Du| |grad Du|`.
fn bound_weight(derivs: &StrainDerivatives<'_>, order: usize) -> Vec<f64> {
    let grad: Vec<_> = (0..3).map(|m| derivs.get(&[m])).collect();
    let points = grad[0].grid().physical_len();
    let grad_sq: Vec<f64> = (0..points)
        .into_par_iter()
        .map(|p| grad.iter().map(|g| g.at(p).norm_sq()).sum())
        .collect();
    if order == 2 {
        return grad_sq;
    }
    let hess: Vec<(f64, _)> = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]
        .iter()
        .map(|&(a, b)| (if a == b { 1.0 } else { 2.0 }, derivs.get(&[a, b])))
        .collect();
    (0..points)
        .into_par_iter()
        .map(|p| {
            let h2: f64 = hess.iter().map(|(w, f)| w * f.at(p).norm_sq()).sum();
            let g = grad_sq[p].sqrt();
            g * g * g + h2.sqrt() * g
        })
        .collect()
}

fn sup_ratio(e: &[f64], law: &ConstitutiveLaw, du: &StrainField, weight: &[f64]) -> Option<f64> {
    let wmax = weight.iter().cloned().fold(0.0, f64::max);
    if wmax <= 0.0 {
        return None;
    }
    let floor = DEGENERATE_FRACTION * wmax;
    let ratio = (0..e.len())
        .into_par_iter()
        .filter(|&p| weight[p] >= floor)
        .map(|p| e[p].abs() / (law.value(du.magnitude_sq()[p]) * weight[p]))
        .reduce(|| 0.0, f64::max);
    Some(ratio)
}

/// `d^l G[|Du|^2]` by spectral differentiation of the sampled composite field.
fn composite_derivative(law: &ConstitutiveLaw, du: &StrainField, dirs: &[usize]) -> Vec<f64> {
    let grid: &Grid = du.grid();
    let mut g: Vec<f64> = du.magnitude_sq().par_iter().map(|&s| law.value(s)).collect();
    // the mean is annihilated by any derivative; removing it first keeps
    // constant fields exactly zero after the transform
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    g.par_iter_mut().for_each(|v| *v -= mean);
    scalar_from_physical(grid, g).derivatives(dirs).component_physical(0)
}

/// Compares both sides of the decomposition identity on the grid.
pub fn check_decomposition(law: &ConstitutiveLaw, u: &SpectralField, dirs: &[usize]) -> Result<DecompositionReport> {
    check_dirs(dirs)?;
    check_velocity(u)?;
    let order = dirs.len();
    let derivs = StrainDerivatives::new(u);
    let subsets = derivs.subsets(dirs);
    let du = subsets[0].clone();
    let top = subsets[(1 << order) - 1].clone();

    let lhs = composite_derivative(law, &du, dirs);
    let e = e_field_recursive(law, &subsets, order);
    let (residual_sup, lhs_sup) = (0..lhs.len())
        .into_par_iter()
        .map(|p| {
            let d: Sym3 = du.at(p);
            let g1 = law.deriv(d.norm_sq(), 1);
            let rhs = 2.0 * g1 * d.dot(&top.at(p)) + e[p];
            ((lhs[p] - rhs).abs(), lhs[p].abs())
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    let residual_rel = if lhs_sup > 0.0 { residual_sup / lhs_sup } else { residual_sup };

    let bound_ratio = if order >= 2 {
        sup_ratio(&e, law, &du, &bound_weight(&derivs, order)).unwrap_or(0.0)
    } else {
        0.0
    };

    Ok(DecompositionReport {
        order,
        dirs: dirs.to_vec(),
        residual_sup,
        residual_rel,
        bound_ratio,
        n: u.grid().n(),
    })
}

/// Largest `|E_l| / (G M_l)` over the grid and over every direction tuple of
/// length `order`.
pub fn bound_ratio_report(law: &ConstitutiveLaw, u: &SpectralField, order: usize) -> Result<f64> {
    if !(2..=3).contains(&order) {
        return Err(Error::UnsupportedOrder(order));
    }
    check_velocity(u)?;
    let derivs = StrainDerivatives::new(u);
    let du = derivs.get(&[]);
    let weight = bound_weight(&derivs, order);
    let mut worst = 0.0f64;
    for code in 0..3usize.pow(order as u32) {
        let dirs: Vec<usize> = (0..order).map(|i| code / 3usize.pow(i as u32) % 3).collect();
        let e = e_field_recursive(law, &derivs.subsets(&dirs), order);
        let ratio = sup_ratio(&e, law, &du, &weight)
            .ok_or_else(|| Error::Degenerate("strain gradients vanish everywhere".into()))?;
        worst = worst.max(ratio);
    }
    Ok(worst)
}
