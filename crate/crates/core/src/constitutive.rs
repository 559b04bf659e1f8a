//! Shear-dependent viscosity laws `G[s]`, `s = |Du|^2`.
//!
//! A law exposes its value, derivatives of order 1 to 3 and the antiderivative
//! `G~[s] = int_0^s G`. The built-in families are the Newtonian constant and
//! the two power-law forms
//!
//! ```text
//! power_a:  G[s] = (m0^(2/(q-2)) + s)^((q-2)/2),     q > 2
//! power_b:  G[s] = m0 + (sigma + s)^((q-2)/2),        q > 1, sigma > 0
//! ```
//!
//! [`verify_structural`] audits the structural conditions `G >= m0` and
//! `G + 2G's >= m0` by sampling, and reports empirical derivative-ratio
//! constants.

use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

/// Relative slack used when comparing sampled minima against `m0`.
pub const STRUCTURAL_TOL: f64 = 1e-12;

/// Sample count and range used when a law is admitted for simulation.
pub const ADMISSION_SAMPLES: usize = 10_000;
pub const ADMISSION_S_MAX: f64 = 1e6;

const AUDIT_SEED: u64 = 0x6e6e_665f_6175_6474;
const ANTIDERIV_RTOL: f64 = 1e-10;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Callbacks for a law given by the caller: `G` and its first three derivatives.
#[derive(Clone)]
pub struct UserLaw {
    pub value: ScalarFn,
    pub derivs: [ScalarFn; 3],
}

impl UserLaw {
    pub fn new<G, D1, D2, D3>(value: G, d1: D1, d2: D2, d3: D3) -> Self
    where
        G: Fn(f64) -> f64 + Send + Sync + 'static,
        D1: Fn(f64) -> f64 + Send + Sync + 'static,
        D2: Fn(f64) -> f64 + Send + Sync + 'static,
        D3: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        UserLaw {
            value: Arc::new(value),
            derivs: [Arc::new(d1), Arc::new(d2), Arc::new(d3)],
        }
    }
}

impl fmt::Debug for UserLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("UserLaw { .. }")
    }
}

#[derive(Debug, Clone)]
pub enum LawKind {
    Newtonian,
    PowerA { q: f64 },
    PowerB { q: f64, sigma_reg: f64 },
    UserDefined(UserLaw),
}

#[derive(Debug, Clone)]
pub struct ConstitutiveLaw {
    m0: f64,
    kind: LawKind,
    label: String,
}

impl ConstitutiveLaw {
    pub fn newtonian(m0: f64) -> Result<Self> {
        Self::new(m0, LawKind::Newtonian, "newtonian")
    }

    pub fn power_a(q: f64, m0: f64) -> Result<Self> {
        Self::new(m0, LawKind::PowerA { q }, "power_a")
    }

    pub fn power_b(q: f64, m0: f64, sigma_reg: f64) -> Result<Self> {
        Self::new(m0, LawKind::PowerB { q, sigma_reg }, "power_b")
    }

    pub fn user_defined(m0: f64, law: UserLaw, label: impl Into<String>) -> Result<Self> {
        Self::new(m0, LawKind::UserDefined(law), label)
    }

    pub fn new(m0: f64, kind: LawKind, label: impl Into<String>) -> Result<Self> {
        if !(m0 > 0.0 && m0.is_finite()) {
            return Err(Error::InvalidArgument(format!("m0 must be positive, got {m0}")));
        }
        match kind {
            LawKind::PowerA { q } if !(q > 2.0 && q.is_finite()) => {
                return Err(Error::InvalidArgument(format!("power_a requires q > 2, got {q}")));
            }
            LawKind::PowerB { q, sigma_reg } => {
                if !(q > 1.0 && q.is_finite()) {
                    return Err(Error::InvalidArgument(format!("power_b requires q > 1, got {q}")));
                }
                if !(sigma_reg > 0.0 && sigma_reg.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "power_b requires sigma_reg > 0, got {sigma_reg}"
                    )));
                }
            }
            _ => {}
        }
        Ok(ConstitutiveLaw {
            m0,
            kind,
            label: label.into(),
        })
    }

    pub fn m0(&self) -> f64 {
        self.m0
    }

    pub fn kind(&self) -> &LawKind {
        &self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Power-law exponent `q`, when the law has one.
    pub fn exponent(&self) -> Option<f64> {
        match self.kind {
            LawKind::PowerA { q } | LawKind::PowerB { q, .. } => Some(q),
            _ => None,
        }
    }

    /// `true` when `G' == 0` identically.
    pub fn is_newtonian(&self) -> bool {
        matches!(self.kind, LawKind::Newtonian)
    }

    /// `G[s]`.
    pub fn eval(&self, s: f64) -> Result<f64> {
        check_arg(s)?;
        Ok(self.value(s))
    }

    /// `G^{(k)}[s]` for `k` in 1..=3.
    pub fn eval_deriv(&self, s: f64, k: usize) -> Result<f64> {
        if !(1..=3).contains(&k) {
            return Err(Error::UnsupportedOrder(k));
        }
        check_arg(s)?;
        Ok(self.deriv(s, k))
    }

    /// `G~[s] = int_0^s G[t] dt`.
    pub fn eval_antideriv(&self, s: f64) -> Result<f64> {
        check_arg(s)?;
        if s == 0.0 {
            return Ok(0.0);
        }
        match &self.kind {
            LawKind::Newtonian => Ok(self.m0 * s),
            LawKind::PowerA { q } => {
                let p = 0.5 * (q - 2.0);
                let a = self.m0.powf(2.0 / (q - 2.0));
                Ok(power_increment(a, s, p + 1.0) / (p + 1.0))
            }
            LawKind::PowerB { q, sigma_reg } => {
                let p = 0.5 * (q - 2.0);
                Ok(self.m0 * s + power_increment(*sigma_reg, s, p + 1.0) / (p + 1.0))
            }
            LawKind::UserDefined(user) => {
                let g = &user.value;
                quadrature::integrate(|t| g(t), 0.0, s, ANTIDERIV_RTOL)
            }
        }
    }

    /// Unchecked `G[s]`; callers guarantee `s >= 0`.
    #[inline]
    pub(crate) fn value(&self, s: f64) -> f64 {
        // NaN passes through so that the solver can report the blow-up
        debug_assert!(!(s < 0.0));
        match &self.kind {
            LawKind::Newtonian => self.m0,
            LawKind::PowerA { q } => {
                let a = self.m0.powf(2.0 / (q - 2.0));
                (a + s).powf(0.5 * (q - 2.0))
            }
            LawKind::PowerB { q, sigma_reg } => self.m0 + (sigma_reg + s).powf(0.5 * (q - 2.0)),
            LawKind::UserDefined(user) => (user.value)(s),
        }
    }

    /// Unchecked `G^{(k)}[s]`, `k` in 0..=3.
    #[inline]
    pub(crate) fn deriv(&self, s: f64, k: usize) -> f64 {
        if k == 0 {
            return self.value(s);
        }
        match &self.kind {
            LawKind::Newtonian => 0.0,
            LawKind::PowerA { q } => {
                let p = 0.5 * (q - 2.0);
                let a = self.m0.powf(2.0 / (q - 2.0));
                falling(p, k) * (a + s).powf(p - k as f64)
            }
            LawKind::PowerB { q, sigma_reg } => {
                let p = 0.5 * (q - 2.0);
                falling(p, k) * (sigma_reg + s).powf(p - k as f64)
            }
            LawKind::UserDefined(user) => (user.derivs[k - 1])(s),
        }
    }

    /// `G[s]` together with derivatives up to order 3.
    #[inline]
    pub(crate) fn jet(&self, s: f64) -> [f64; 4] {
        match &self.kind {
            LawKind::Newtonian => [self.m0, 0.0, 0.0, 0.0],
            LawKind::PowerA { q } => {
                let p = 0.5 * (q - 2.0);
                let a = self.m0.powf(2.0 / (q - 2.0));
                power_jet(a + s, p, 0.0)
            }
            LawKind::PowerB { q, sigma_reg } => power_jet(sigma_reg + s, 0.5 * (q - 2.0), self.m0),
            LawKind::UserDefined(user) => [
                (user.value)(s),
                (user.derivs[0])(s),
                (user.derivs[1])(s),
                (user.derivs[2])(s),
            ],
        }
    }

    /// Audits the law with the standard sample budget and wraps it for use in
    /// the stress evaluation and the solver.
    pub fn admit(self) -> Result<AdmissibleLaw> {
        let report = verify_structural(&self, ADMISSION_SAMPLES, ADMISSION_S_MAX)?;
        if report.passed {
            Ok(AdmissibleLaw { law: self, report })
        } else {
            Err(Error::Inadmissible(Box::new(report)))
        }
    }
}

fn check_arg(s: f64) -> Result<()> {
    if s >= 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "G (s must be a finite nonnegative number)",
            value: s,
        })
    }
}

/// p (p-1) ... (p-k+1)
fn falling(p: f64, k: usize) -> f64 {
    (0..k).map(|j| p - j as f64).product()
}

/// `(base + s)^e - base^e` without cancellation for small `s`.
fn power_increment(base: f64, s: f64, e: f64) -> f64 {
    base.powf(e) * (e * (s / base).ln_1p()).exp_m1()
}

#[inline]
fn power_jet(x: f64, p: f64, shift: f64) -> [f64; 4] {
    let xp = x.powf(p);
    let inv = 1.0 / x;
    let d1 = p * xp * inv;
    let d2 = (p - 1.0) * d1 * inv;
    let d3 = (p - 2.0) * d2 * inv;
    [shift + xp, d1, d2, d3]
}

/// A law that passed [`verify_structural`] with the admission budget.
#[derive(Debug, Clone)]
pub struct AdmissibleLaw {
    law: ConstitutiveLaw,
    report: StructuralReport,
}

impl AdmissibleLaw {
    pub fn report(&self) -> &StructuralReport {
        &self.report
    }

    pub fn law(&self) -> &ConstitutiveLaw {
        &self.law
    }
}

impl Deref for AdmissibleLaw {
    type Target = ConstitutiveLaw;

    fn deref(&self) -> &ConstitutiveLaw {
        &self.law
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StructuralReport {
    pub label: String,
    pub m0: f64,
    pub passed: bool,
    pub min_g: f64,
    /// Sample at which `min_g` was attained.
    pub argmin_g: f64,
    pub min_coercive: f64,
    /// Sample at which `min_coercive` was attained.
    pub argmin_coercive: f64,
    /// `ratio_bounds[k-1][alpha] = max |G^(k)[s] s^alpha| / |G^(k-1)[s]|`.
    pub ratio_bounds: [[f64; 2]; 3],
    pub samples_used: usize,
    pub s_max: f64,
}

/// Samples `s` on a log grid over `[0, s_max]` (with `s = 0` included) and at
/// `n_samples` uniform random points, and records the structural minima and
/// derivative ratios. Violations are reported in the result, not as errors.
pub fn verify_structural(
    law: &ConstitutiveLaw,
    n_samples: usize,
    s_max: f64,
) -> Result<StructuralReport> {
    if n_samples < 1000 {
        return Err(Error::InvalidArgument(format!(
            "structural audit needs at least 1000 samples, got {n_samples}"
        )));
    }
    if !(s_max > 0.0 && s_max.is_finite()) {
        return Err(Error::InvalidArgument(format!("s_max must be positive, got {s_max}")));
    }

    let mut samples = Vec::with_capacity(2 * n_samples + 1);
    samples.push(0.0);
    let lo = (s_max * 1e-12).ln();
    let hi = s_max.ln();
    for i in 0..n_samples {
        let frac = i as f64 / (n_samples - 1) as f64;
        samples.push((lo + frac * (hi - lo)).exp().min(s_max));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(AUDIT_SEED);
    samples.extend((0..n_samples).map(|_| rng.gen_range(0.0..=s_max)));

    let m0 = law.m0();
    let mut min_g = f64::INFINITY;
    let mut argmin_g = 0.0;
    let mut min_coercive = f64::INFINITY;
    let mut argmin_coercive = 0.0;
    let mut ratio_bounds = [[0.0f64; 2]; 3];
    let mut all_finite = true;

    for &s in &samples {
        let d = law.jet(s);
        let g = d[0];
        let coercive = g + 2.0 * d[1] * s;
        if !(g.is_finite() && coercive.is_finite()) {
            all_finite = false;
        }
        if g < min_g || g.is_nan() {
            min_g = g;
            argmin_g = s;
        }
        if coercive < min_coercive || coercive.is_nan() {
            min_coercive = coercive;
            argmin_coercive = s;
        }
        for k in 1..=3 {
            for (alpha, bound) in ratio_bounds[k - 1].iter_mut().enumerate() {
                let num = d[k].abs() * if alpha == 1 { s } else { 1.0 };
                let den = d[k - 1].abs();
                let ratio = if num == 0.0 {
                    0.0
                } else if den == 0.0 {
                    f64::INFINITY
                } else {
                    num / den
                };
                if ratio > *bound || ratio.is_nan() {
                    *bound = ratio;
                }
            }
        }
    }

    let ratios_finite = ratio_bounds.iter().flatten().all(|r| r.is_finite());
    let floor = m0 * (1.0 - STRUCTURAL_TOL);
    let passed = all_finite && ratios_finite && min_g >= floor && min_coercive >= floor;

    Ok(StructuralReport {
        label: law.label().to_string(),
        m0,
        passed,
        min_g,
        argmin_g,
        min_coercive,
        argmin_coercive,
        ratio_bounds,
        samples_used: samples.len(),
        s_max,
    })
}

/// Law description as it appears in config files and on the command line.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LawSpec {
    pub kind: String,
    pub m0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_reg: Option<f64>,
}

impl LawSpec {
    /// Builds the law. Besides the simulatable kinds `newtonian`, `power_a`
    /// and `power_b`, the kind `reciprocal` yields the user-defined law
    /// `G[s] = m0 / (1 + s)`, which violates the structural conditions and
    /// exists to exercise the audit.
    pub fn build(&self) -> Result<ConstitutiveLaw> {
        let need_q = || {
            self.q
                .ok_or_else(|| Error::Config(format!("law `{}` needs parameter q", self.kind)))
        };
        match self.kind.as_str() {
            "newtonian" => ConstitutiveLaw::newtonian(self.m0),
            "power_a" => ConstitutiveLaw::power_a(need_q()?, self.m0),
            "power_b" => {
                let sigma = self.sigma_reg.ok_or_else(|| {
                    Error::Config("law `power_b` needs parameter sigma_reg".to_string())
                })?;
                ConstitutiveLaw::power_b(need_q()?, self.m0, sigma)
            }
            "reciprocal" => {
                let m0 = self.m0;
                ConstitutiveLaw::user_defined(
                    m0,
                    UserLaw::new(
                        move |s| m0 / (1.0 + s),
                        move |s| -m0 / (1.0 + s).powi(2),
                        move |s| 2.0 * m0 / (1.0 + s).powi(3),
                        move |s| -6.0 * m0 / (1.0 + s).powi(4),
                    ),
                    "reciprocal",
                )
            }
            other => Err(Error::Config(format!(
                "unknown law kind `{other}` (expected newtonian, power_a, power_b or reciprocal)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn builtins() -> Vec<ConstitutiveLaw> {
        vec![
            ConstitutiveLaw::newtonian(1.0).unwrap(),
            ConstitutiveLaw::newtonian(2.0).unwrap(),
            ConstitutiveLaw::power_a(2.5, 1.0).unwrap(),
            ConstitutiveLaw::power_a(3.0, 1.0).unwrap(),
            ConstitutiveLaw::power_a(4.0, 1.0).unwrap(),
            ConstitutiveLaw::power_a(3.0, 0.3).unwrap(),
            ConstitutiveLaw::power_b(1.5, 1.0, 1.0).unwrap(),
            ConstitutiveLaw::power_b(3.0, 1.0, 1.0).unwrap(),
            ConstitutiveLaw::power_b(1.2, 0.5, 0.1).unwrap(),
        ]
    }

    fn reciprocal() -> ConstitutiveLaw {
        LawSpec {
            kind: "reciprocal".into(),
            m0: 1.0,
            q: None,
            sigma_reg: None,
        }
        .build()
        .unwrap()
    }

    #[test]
    fn eval_examples() {
        let a4 = ConstitutiveLaw::power_a(4.0, 1.0).unwrap();
        assert_eq!(a4.eval(0.0).unwrap(), 1.0);
        assert_relative_eq!(a4.eval(2.0).unwrap(), 3.0, max_relative = 1e-15);
        let b3 = ConstitutiveLaw::power_b(3.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(b3.eval(0.0).unwrap(), 2.0, max_relative = 1e-15);
        assert!(matches!(a4.eval(-1.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn deriv_examples() {
        let a4 = ConstitutiveLaw::power_a(4.0, 1.0).unwrap();
        assert_relative_eq!(a4.eval_deriv(5.0, 1).unwrap(), 1.0, max_relative = 1e-15);
        let n2 = ConstitutiveLaw::newtonian(2.0).unwrap();
        assert_eq!(n2.eval_deriv(7.0, 1).unwrap(), 0.0);
        let b3 = ConstitutiveLaw::power_b(3.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(b3.eval_deriv(0.0, 1).unwrap(), 0.5, max_relative = 1e-15);
        assert!(matches!(a4.eval_deriv(1.0, 0), Err(Error::UnsupportedOrder(0))));
        assert!(matches!(a4.eval_deriv(1.0, 4), Err(Error::UnsupportedOrder(4))));
    }

    #[test]
    fn antideriv_examples() {
        let n2 = ConstitutiveLaw::newtonian(2.0).unwrap();
        assert_relative_eq!(n2.eval_antideriv(3.0).unwrap(), 6.0, max_relative = 1e-15);
        let a4 = ConstitutiveLaw::power_a(4.0, 1.0).unwrap();
        assert_relative_eq!(a4.eval_antideriv(2.0).unwrap(), 4.0, max_relative = 1e-14);
        for law in builtins().into_iter().chain([reciprocal()]) {
            assert_eq!(law.eval_antideriv(0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(ConstitutiveLaw::newtonian(0.0).is_err());
        assert!(ConstitutiveLaw::power_a(2.0, 1.0).is_err());
        assert!(ConstitutiveLaw::power_b(1.0, 1.0, 1.0).is_err());
        assert!(ConstitutiveLaw::power_b(3.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn floor_holds_on_samples() {
        for law in builtins() {
            let m0 = law.m0();
            for i in 0..=600 {
                let s = if i == 0 { 0.0 } else { 10f64.powf(-6.0 + i as f64 * 0.02) };
                assert!(law.eval(s).unwrap() >= m0 - 1e-12 * m0, "{} at {s}", law.label());
            }
        }
    }

    // Centered differences of one order lower, Richardson-extrapolated.
    fn fd_deriv(law: &ConstitutiveLaw, s: f64, k: usize) -> f64 {
        let f = |x: f64| if k == 1 { law.eval(x).unwrap() } else { law.eval_deriv(x, k - 1).unwrap() };
        let cd = |h: f64| (f(s + h) - f(s - h)) / (2.0 * h);
        let h = s * 1e-3;
        if k == 1 {
            cd(s * 1e-5)
        } else {
            (4.0 * cd(h / 2.0) - cd(h)) / 3.0
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for law in builtins().into_iter().chain([reciprocal()]) {
            for &s in &[0.1, 1.0, 10.0, 100.0] {
                for k in 1..=3 {
                    let exact = law.eval_deriv(s, k).unwrap();
                    let fd = fd_deriv(&law, s, k);
                    let scale = exact.abs();
                    if scale == 0.0 {
                        assert!(fd.abs() < 1e-9, "{} k={k} s={s}: {fd}", law.label());
                        continue;
                    }
                    let rel = (fd - exact).abs() / scale;
                    assert!(rel <= 1e-6, "{} k={k} s={s}: exact {exact} fd {fd}", law.label());
                }
            }
        }
    }

    #[test]
    fn jet_matches_individual_derivatives() {
        for law in builtins() {
            for &s in &[0.0, 0.3, 7.0, 1e4] {
                let jet = law.jet(s);
                for k in 0..=3 {
                    let d = law.deriv(s, k);
                    assert!((jet[k] - d).abs() <= 1e-14 * d.abs().max(1e-300), "{} k={k}", law.label());
                }
            }
        }
    }

    #[test]
    fn antiderivative_differentiates_back() {
        for law in builtins().into_iter().chain([reciprocal()]) {
            for &s in &[0.1, 1.0, 10.0, 100.0] {
                let h = s * 1e-4;
                let slope =
                    (law.eval_antideriv(s + h).unwrap() - law.eval_antideriv(s - h).unwrap()) / (2.0 * h);
                let g = law.eval(s).unwrap();
                assert!((slope - g).abs() <= 1e-6 * g, "{} s={s}", law.label());
            }
        }
    }

    #[test]
    fn user_antiderivative_uses_quadrature() {
        let law = reciprocal();
        for &s in &[0.5, 3.0, 1e3] {
            let exact = (1.0f64 + s).ln();
            assert_relative_eq!(law.eval_antideriv(s).unwrap(), exact, max_relative = 1e-10);
        }
    }

    #[test]
    fn audit_newtonian() {
        let law = ConstitutiveLaw::newtonian(1.0).unwrap();
        let r = verify_structural(&law, 10_000, 1e6).unwrap();
        assert!(r.passed);
        assert_eq!(r.min_g, 1.0);
        assert_eq!(r.min_coercive, 1.0);
        assert_eq!(r.samples_used, 20_001);
    }

    #[test]
    fn audit_power_a_minimum_at_origin() {
        let law = ConstitutiveLaw::power_a(4.0, 1.0).unwrap();
        let r = verify_structural(&law, 10_000, 1e6).unwrap();
        assert!(r.passed);
        assert_eq!(r.min_coercive, 1.0);
        assert_eq!(r.argmin_coercive, 0.0);
        // oracle: 1 + 3s scanned directly
        let scan_min = (0..=10_000)
            .map(|i| 1.0 + 3.0 * (i as f64 * 100.0))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(r.min_coercive, scan_min);
    }

    #[test]
    fn audit_flags_reciprocal_law() {
        let r = verify_structural(&reciprocal(), 10_000, 1e6).unwrap();
        assert!(!r.passed);
        assert!(r.min_coercive < 0.0);
        assert!(r.argmin_coercive > 1.0);
        // oracle: (1 - s)/(1 + s)^2 changes sign at s = 1
        let scan = |s: f64| (1.0 - s) / (1.0 + s).powi(2);
        assert!(scan(0.999) > 0.0 && scan(1.001) < 0.0);
        assert!(matches!(reciprocal().admit(), Err(Error::Inadmissible(_))));
    }

    #[test]
    fn power_a_ratios_stay_bounded() {
        let law = ConstitutiveLaw::power_a(4.0, 1.0).unwrap();
        let small = verify_structural(&law, 10_000, 1e3).unwrap();
        let large = verify_structural(&law, 10_000, 1e6).unwrap();
        for k in 0..3 {
            for a in 0..2 {
                assert!(small.ratio_bounds[k][a].is_finite());
                assert!(large.ratio_bounds[k][a].is_finite());
                assert!(large.ratio_bounds[k][a] <= small.ratio_bounds[k][a] * 1.01 + 1e-15);
            }
        }
    }

    #[test]
    fn audit_preconditions() {
        let law = ConstitutiveLaw::newtonian(1.0).unwrap();
        assert!(verify_structural(&law, 999, 1.0).is_err());
        assert!(verify_structural(&law, 1000, 0.0).is_err());
    }

    #[test]
    fn all_builtins_admitted() {
        for law in builtins() {
            let label = law.label().to_string();
            assert!(law.admit().is_ok(), "{label}");
        }
    }

    #[test]
    fn law_spec_parsing() {
        let spec: LawSpec = serde_json::from_str(r#"{"kind":"power_b","m0":1,"q":1.5,"sigma_reg":0.5}"#).unwrap();
        let law = spec.build().unwrap();
        assert_eq!(law.label(), "power_b");
        assert_eq!(law.exponent(), Some(1.5));
        let bad = LawSpec { kind: "power_a".into(), m0: 1.0, q: None, sigma_reg: None };
        assert!(matches!(bad.build(), Err(Error::Config(_))));
    }
}
