//! Truncated multilinear Taylor jets in up to three nilpotent directions
//! (`eps_i^2 = 0`). Coefficient `c[S]` for a bitmask `S` holds the mixed
//! partial derivative along the directions in `S`.

use std::ops::{Add, Mul, Sub};

pub const SLOTS: usize = 3;
pub const LEN: usize = 1 << SLOTS;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet(pub [f64; LEN]);

impl Jet {
    pub const ZERO: Jet = Jet([0.0; LEN]);

    pub fn constant(v: f64) -> Jet {
        let mut c = [0.0; LEN];
        c[0] = v;
        Jet(c)
    }

    pub fn value(&self) -> f64 {
        self.0[0]
    }

    /// Derivative along `slot`: `d[S] = c[S | slot]` for `S` without `slot`.
    pub fn derivative(&self, slot: usize) -> Jet {
        let bit = 1 << slot;
        let mut out = [0.0; LEN];
        for (s, o) in out.iter_mut().enumerate() {
            if s & bit == 0 {
                *o = self.0[s | bit];
            }
        }
        Jet(out)
    }

    /// `f(self)` from the derivatives `f^(0..)` at the base value. Terms
    /// beyond `derivs.len()` must vanish by nilpotency.
    pub fn compose(&self, derivs: &[f64]) -> Jet {
        let mut delta = *self;
        delta.0[0] = 0.0;
        debug_assert!(
            derivs.len() > self.active_slots(),
            "composition needs more derivatives than provided"
        );
        let mut out = Jet::constant(derivs[0]);
        let mut power = Jet::constant(1.0);
        let mut factorial = 1.0;
        for (k, &d) in derivs.iter().enumerate().skip(1) {
            power = power * delta;
            factorial *= k as f64;
            out = out + (d / factorial) * power;
        }
        out
    }

    /// Number of directions carrying a nonzero perturbation coefficient.
    fn active_slots(&self) -> usize {
        (1..LEN)
            .filter(|&s| self.0[s] != 0.0)
            .fold(0usize, |acc, s| acc | s)
            .count_ones() as usize
    }
}

impl Add for Jet {
    type Output = Jet;

    fn add(self, rhs: Jet) -> Jet {
        Jet(std::array::from_fn(|s| self.0[s] + rhs.0[s]))
    }
}

impl Sub for Jet {
    type Output = Jet;

    fn sub(self, rhs: Jet) -> Jet {
        Jet(std::array::from_fn(|s| self.0[s] - rhs.0[s]))
    }
}

impl Mul for Jet {
    type Output = Jet;

    fn mul(self, rhs: Jet) -> Jet {
        let mut out = [0.0; LEN];
        for (s, o) in out.iter_mut().enumerate() {
            // sum over submasks t of s
            let mut t = s;
            loop {
                *o += self.0[t] * rhs.0[s ^ t];
                if t == 0 {
                    break;
                }
                t = (t - 1) & s;
            }
        }
        Jet(out)
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;

    fn mul(self, rhs: Jet) -> Jet {
        Jet(rhs.0.map(|v| self * v))
    }
}

/// Symmetric tensor of jets, six stored components.
pub type SymJet = [Jet; 6];

/// Frobenius product of two symmetric jet tensors.
pub fn frob(a: &SymJet, b: &SymJet) -> Jet {
    let mut out = Jet::ZERO;
    for c in 0..6 {
        let w = crate::tensor::SYM_WEIGHTS[c];
        out = out + w * (a[c] * b[c]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    // x(t1, t2, t3) = 0.3 + t1 + 2 t2 - t3 + 0.5 t1 t2, f = exp
    #[test]
    fn composition_matches_mixed_partials() {
        let mut x = Jet::constant(0.3);
        x.0[0b001] = 1.0;
        x.0[0b010] = 2.0;
        x.0[0b100] = -1.0;
        x.0[0b011] = 0.5;
        let e = 0.3f64.exp();
        let fx = x.compose(&[e, e, e, e]);
        // d1 d2 exp(x) = exp(x) (x_1 x_2 + x_12)
        assert!((fx.0[0b011] - e * (2.0 + 0.5)).abs() < 1e-14);
        // d1 d2 d3 exp(x) = exp(x) (x_1 x_2 x_3 + x_12 x_3)
        assert!((fx.0[0b111] - e * (-2.0 - 0.5)).abs() < 1e-14);
        assert!((fx.derivative(2).0[0b011] - fx.0[0b111]).abs() == 0.0);
    }

    #[test]
    fn product_rule() {
        let mut a = Jet::constant(2.0);
        a.0[1] = 3.0;
        let mut b = Jet::constant(5.0);
        b.0[2] = 7.0;
        let p = a * b;
        assert_eq!(p.0, [10.0, 15.0, 14.0, 21.0, 0.0, 0.0, 0.0, 0.0]);
    }
}
