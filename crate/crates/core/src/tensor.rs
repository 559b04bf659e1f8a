//! Symmetric 3x3 matrices stored as six components.

use std::ops::{Add, Index, Mul, Sub};

/// Storage order of the six independent components.
pub const SYM_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

/// Frobenius weight of each stored component (off-diagonals appear twice).
pub const SYM_WEIGHTS: [f64; 6] = [1.0, 1.0, 1.0, 2.0, 2.0, 2.0];

/// Position of `(i, j)` in [`SYM_PAIRS`].
#[inline]
pub const fn sym_index(i: usize, j: usize) -> usize {
    match (i, j) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (0, 1) | (1, 0) => 3,
        (0, 2) | (2, 0) => 4,
        _ => 5,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sym3(pub [f64; 6]);

impl Sym3 {
    pub const ZERO: Sym3 = Sym3([0.0; 6]);

    /// Symmetric part of a full matrix.
    pub fn from_full(m: [[f64; 3]; 3]) -> Self {
        let mut c = [0.0; 6];
        for (slot, &(i, j)) in c.iter_mut().zip(&SYM_PAIRS) {
            *slot = 0.5 * (m[i][j] + m[j][i]);
        }
        Sym3(c)
    }

    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        Sym3([a, b, c, 0.0, 0.0, 0.0])
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[sym_index(i, j)]
    }

    /// `A : B = sum_ij A_ij B_ij`.
    #[inline]
    pub fn dot(&self, other: &Sym3) -> f64 {
        let a = &self.0;
        let b = &other.0;
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + 2.0 * (a[3] * b[3] + a[4] * b[4] + a[5] * b[5])
    }

    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn trace(&self) -> f64 {
        self.0[0] + self.0[1] + self.0[2]
    }
}

impl Index<(usize, usize)> for Sym3 {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.0[sym_index(i, j)]
    }
}

impl Add for Sym3 {
    type Output = Sym3;

    fn add(self, rhs: Sym3) -> Sym3 {
        let mut c = self.0;
        c.iter_mut().zip(rhs.0).for_each(|(a, b)| *a += b);
        Sym3(c)
    }
}

impl Sub for Sym3 {
    type Output = Sym3;

    fn sub(self, rhs: Sym3) -> Sym3 {
        let mut c = self.0;
        c.iter_mut().zip(rhs.0).for_each(|(a, b)| *a -= b);
        Sym3(c)
    }
}

impl Mul<Sym3> for f64 {
    type Output = Sym3;

    fn mul(self, rhs: Sym3) -> Sym3 {
        Sym3(rhs.0.map(|v| self * v))
    }
}
