//! Time integration on the periodic box.
//!
//! The viscous term is split as `(m0/2) Lap u + div((G - m0) Du)`. The first
//! part is integrated exactly with the factor `exp(-(m0/2)|k|^2 t)`, and the
//! remainder together with the Leray-projected convection is advanced by
//! Kutta's third-order scheme in Lawson form (all exponentials have
//! nonnegative arguments, so no mode is ever amplified).

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constitutive::{AdmissibleLaw, ConstitutiveLaw, LawSpec};
use crate::diagnostics::{self, DiagnosticsRecord, DiagnosticsSeries, RunSummary};
use crate::error::{Error, Result};
use crate::fields::{
    checkpoint, dealias, leray_project, random_solenoidal, sym_gradient, taylor_green,
    Grid, SpectralField, StrainField, MAX_SOBOLEV_ORDER,
};
use crate::stress::{divergence, stress_with_offset, StressField};
use crate::tensor::sym_index;

/// Guard added to the CFL denominators.
pub const CFL_GUARD: f64 = 1e-30;
/// Default cap on adaptive steps.
pub const DEFAULT_DT_MAX: f64 = 1e-2;

#[derive(Debug, Clone)]
pub struct SimState {
    pub u: SpectralField,
    pub t: f64,
    pub step: u64,
}

impl SimState {
    /// Initial state; `u` is projected onto divergence-free fields.
    pub fn new(u: SpectralField) -> Result<Self> {
        if u.ncomp() != 3 {
            return Err(Error::InvalidArgument(format!(
                "velocity needs 3 components, got {}",
                u.ncomp()
            )));
        }
        let u = if u.is_solenoidal() { u } else { leray_project(&u) };
        Ok(SimState { u, t: 0.0, step: 0 })
    }
}

/// Failure of a run: the last finite state and everything recorded before it.
#[derive(Debug, Clone)]
pub struct BlowUp {
    pub t: f64,
    pub step: u64,
    pub last_valid: SimState,
    pub series: DiagnosticsSeries,
}

// ---------------------------------------------------------------------------
// configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    #[serde(default = "default_box")]
    pub box_length: f64,
}

fn default_box() -> f64 {
    TAU
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub c_cfl: Option<f64>,
    pub t_end: f64,
    /// Upper bound on adaptive steps.
    #[serde(default)]
    pub dt_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitConfig {
    TaylorGreen,
    RandomSolenoidal { seed: u64, k_max: usize, target_h3: f64 },
    Checkpoint { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default = "one")]
    pub diag_every: u64,
    #[serde(default)]
    pub ckpt_every: Option<u64>,
    #[serde(default = "three")]
    pub l_max: usize,
}

fn one() -> u64 {
    1
}

fn three() -> usize {
    3
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: None,
            diag_every: 1,
            ckpt_every: None,
            l_max: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub grid: GridConfig,
    pub law: LawSpec,
    pub time: TimeConfig,
    pub init: InitConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtPolicy {
    Fixed(f64),
    Cfl { c_cfl: f64, dt_max: f64 },
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SimConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.time.t_end >= 0.0 && self.time.t_end.is_finite()) {
            return bad(format!("t_end must be finite and nonnegative, got {}", self.time.t_end));
        }
        if self.output.l_max > MAX_SOBOLEV_ORDER as usize {
            return bad(format!("l_max must not exceed {MAX_SOBOLEV_ORDER}, got {}", self.output.l_max));
        }
        if self.output.diag_every == 0 {
            return bad("diag_every must be positive".into());
        }
        if self.output.ckpt_every == Some(0) {
            return bad("ckpt_every must be positive".into());
        }
        self.dt_policy()?;
        Grid::new(self.grid.n, self.grid.box_length).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn dt_policy(&self) -> Result<DtPolicy> {
        let t = &self.time;
        match (t.dt, t.c_cfl) {
            (Some(dt), None) if dt > 0.0 && dt.is_finite() => Ok(DtPolicy::Fixed(dt)),
            (Some(dt), None) => Err(Error::Config(format!("dt must be positive, got {dt}"))),
            (None, Some(c)) if c > 0.0 && c <= 1.0 => {
                let dt_max = t.dt_max.unwrap_or(DEFAULT_DT_MAX);
                if dt_max > 0.0 && dt_max.is_finite() {
                    Ok(DtPolicy::Cfl { c_cfl: c, dt_max })
                } else {
                    Err(Error::Config(format!("dt_max must be positive, got {dt_max}")))
                }
            }
            (None, Some(c)) => Err(Error::Config(format!("c_cfl must lie in (0, 1], got {c}"))),
            _ => Err(Error::Config("exactly one of time.dt and time.c_cfl is required".into())),
        }
    }

    /// Grid, admitted law and initial state.
    pub fn build(&self) -> Result<(AdmissibleLaw, SimState)> {
        let grid = Grid::new(self.grid.n, self.grid.box_length)?;
        let law = self.law.build()?.admit()?;
        let u = match &self.init {
            InitConfig::TaylorGreen => taylor_green(&grid),
            InitConfig::RandomSolenoidal { seed, k_max, target_h3 } => {
                random_solenoidal(&grid, *seed, *k_max, *target_h3)?
            }
            InitConfig::Checkpoint { path } => {
                let ck = checkpoint::read(path)?;
                if *ck.velocity.grid() != grid {
                    return Err(Error::Config(format!(
                        "checkpoint {} has n = {}, L = {}; config asks for n = {}, L = {}",
                        path.display(),
                        ck.velocity.grid().n(),
                        ck.velocity.grid().box_length(),
                        grid.n(),
                        grid.box_length()
                    )));
                }
                ck.velocity
            }
        };
        // keep the velocity inside the resolved band
        let u = leray_project(&dealias(&u));
        Ok((law, SimState { u, t: 0.0, step: 0 }))
    }
}

// ---------------------------------------------------------------------------
// right-hand side

/// `P[div((G - m0) Du) - (u . grad) u]`, dealiased.
pub fn rhs_explicit(state: &SimState, law: &AdmissibleLaw) -> SpectralField {
    nonlinear(&state.u, law).0
}

/// Explicit term together with the strain of `u`. Convection is taken in
/// flux form `div(u (x) u)`, equal to `(u . grad) u` for solenoidal `u`, so
/// that both parts share one six-component transform.
fn nonlinear(u: &SpectralField, law: &ConstitutiveLaw) -> (SpectralField, StrainField) {
    let grid = u.grid();
    let du = sym_gradient(u);
    let vel = u.to_physical();
    let m0 = law.m0();
    let newtonian = law.is_newtonian();
    let excess: Vec<f64> = if newtonian {
        Vec::new()
    } else {
        du.magnitude_sq().par_iter().map(|&s| law.value(s) - m0).collect()
    };
    let comps: Vec<Vec<f64>> = (0..6)
        .into_par_iter()
        .map(|c| {
            let (i, j) = crate::tensor::SYM_PAIRS[c];
            let d = &du.components()[c];
            (0..grid.physical_len())
                .map(|p| {
                    let visc = if newtonian { 0.0 } else { excess[p] * d[p] };
                    visc - vel[i][p] * vel[j][p]
                })
                .collect()
        })
        .collect();
    let flux = StressField::from_components(grid, comps.try_into().expect("six flux components"));
    (leray_project(&divergence(&flux)), du)
}

/// Largest stable step for the explicit part:
/// `c_cfl * min(dx / max|u|, dx^2 / (2 max(G - m0)))`.
pub fn cfl_dt(state: &SimState, law: &ConstitutiveLaw, c_cfl: f64) -> f64 {
    assert!(c_cfl > 0.0 && c_cfl <= 1.0, "c_cfl must lie in (0, 1]");
    let grid = state.u.grid();
    let vel = state.u.to_physical();
    let umax = (0..grid.physical_len())
        .into_par_iter()
        .map(|p| (vel[0][p] * vel[0][p] + vel[1][p] * vel[1][p] + vel[2][p] * vel[2][p]).sqrt())
        .reduce(|| 0.0, f64::max);
    let excess = if law.is_newtonian() {
        0.0
    } else {
        sym_gradient(&state.u)
            .magnitude_sq()
            .par_iter()
            .map(|&s| law.value(s) - law.m0())
            .reduce(|| 0.0, f64::max)
    };
    let dx = grid.dx();
    c_cfl * (dx / (umax + CFL_GUARD)).min(dx * dx / (2.0 * excess + CFL_GUARD))
}

/// Pressure from `-Lap p = div div((u (x) u) - G Du)`, zero mean.
pub fn compute_pressure(state: &SimState, law: &AdmissibleLaw) -> SpectralField {
    let u = &state.u;
    let grid = u.grid();
    let vel = u.to_physical();
    let du = sym_gradient(u);
    let sigma = stress_with_offset(law, &du, 0.0);
    let flux: Vec<Vec<Complex64>> = (0..6)
        .into_par_iter()
        .map(|c| {
            let (i, j) = crate::tensor::SYM_PAIRS[c];
            let f: Vec<f64> = (0..grid.physical_len())
                .map(|p| sigma.components()[c][p] - vel[i][p] * vel[j][p])
                .collect();
            grid.fft().forward(&f)
        })
        .collect();
    let p: Vec<Complex64> = (0..grid.spectral_len())
        .into_par_iter()
        .map(|idx| {
            let k = grid.wavevector(idx);
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            if k2 == 0.0 || !grid.retains(idx) {
                return Complex64::default();
            }
            let mut acc = Complex64::default();
            for i in 0..3 {
                for j in 0..3 {
                    acc += flux[sym_index(i, j)][idx] * (k[i] * k[j]);
                }
            }
            acc / k2
        })
        .collect();
    SpectralField::from_coeffs(grid, vec![p]).expect("grid-sized spectrum")
}

// ---------------------------------------------------------------------------
// stepping

/// Integrating-factor tables `exp(-(m0/2)|k|^2 tau)` for `tau = h/2, h`.
struct Factors {
    h: f64,
    half: Vec<f64>,
    full: Vec<f64>,
}

impl Factors {
    fn new(grid: &Grid, m0: f64, h: f64) -> Self {
        let table = |tau: f64| -> Vec<f64> {
            (0..grid.spectral_len())
                .into_par_iter()
                .map(|idx| (-0.5 * m0 * grid.k_sq(idx) * tau).exp())
                .collect()
        };
        Factors {
            h,
            half: table(0.5 * h),
            full: table(h),
        }
    }
}

/// Coefficient-wise `f(idx, [a_0, a_1, ...])` over every component.
fn combine<F>(grid: &Grid, inputs: &[&SpectralField], f: F) -> SpectralField
where
    F: Fn(usize, &[Complex64]) -> Complex64 + Sync,
{
    let comps = (0..3)
        .map(|c| {
            (0..grid.spectral_len())
                .into_par_iter()
                .map(|idx| {
                    let vals: [Complex64; 4] =
                        std::array::from_fn(|i| inputs.get(i).map_or(Complex64::default(), |v| v.component(c)[idx]));
                    f(idx, &vals[..inputs.len()])
                })
                .collect()
        })
        .collect();
    SpectralField::from_coeffs(grid, comps)
        .expect("grid-sized spectra")
        .mark_solenoidal()
}

/// Reusable stepper that caches the integrating factors and the explicit
/// term at the current state.
pub struct Stepper<'a> {
    law: &'a ConstitutiveLaw,
    factors: Option<Factors>,
    /// `N(u)` and `Du` at the state most recently returned.
    cached: Option<(SpectralField, StrainField)>,
}

impl<'a> Stepper<'a> {
    pub fn new(law: &'a AdmissibleLaw) -> Self {
        Stepper {
            law,
            factors: None,
            cached: None,
        }
    }

    /// Explicit term at `u`, reusing the value from the last step when `u`
    /// is that step's result.
    fn explicit_at(&mut self, u: &SpectralField) -> (SpectralField, StrainField) {
        match self.cached.take() {
            Some(c) => c,
            None => nonlinear(u, self.law),
        }
    }

    /// Forgets the cached explicit term (call when the state is replaced).
    pub fn reset(&mut self) {
        self.cached = None;
    }

    /// One Runge-Kutta step of size `dt`.
    pub fn step(&mut self, state: &SimState, dt: f64) -> Result<SimState> {
        if !(dt >= 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be nonnegative, got {dt}")));
        }
        if dt == 0.0 {
            return Ok(state.clone());
        }
        let law = self.law;
        let u0 = &state.u;
        let grid = u0.grid().clone();
        if self.factors.as_ref().map_or(true, |f| f.h != dt) {
            self.factors = Some(Factors::new(&grid, law.m0(), dt));
        }
        let k1 = self.explicit_at(u0).0;
        let fac = self.factors.as_ref().expect("set above");
        let (eh, ef) = (&fac.half, &fac.full);

        let a2 = combine(&grid, &[u0, &k1], |i, v| eh[i] * (v[0] + 0.5 * dt * v[1]));
        let k2 = nonlinear(&a2, law).0;
        let a3 = combine(&grid, &[u0, &k1, &k2], |i, v| {
            ef[i] * v[0] + dt * (-ef[i] * v[1] + 2.0 * eh[i] * v[2])
        });
        let k3 = nonlinear(&a3, law).0;
        let u1 = combine(&grid, &[u0, &k1, &k2, &k3], |i, v| {
            ef[i] * v[0] + dt / 6.0 * (ef[i] * v[1] + 4.0 * eh[i] * v[2] + v[3])
        });
        if !u1.is_finite() {
            self.cached = None;
            return Err(Error::BlowUp(Box::new(BlowUp {
                t: state.t + dt,
                step: state.step + 1,
                last_valid: state.clone(),
                series: DiagnosticsSeries::new(),
            })));
        }
        self.cached = Some(nonlinear(&u1, law));
        Ok(SimState {
            u: u1,
            t: state.t + dt,
            step: state.step + 1,
        })
    }

    /// `u_t` and `Du` at the state most recently returned by [`Stepper::step`].
    fn time_derivative(&mut self, state: &SimState) -> (SpectralField, StrainField) {
        let (n, du) = self.explicit_at(&state.u);
        let m0 = self.law.m0();
        let grid = state.u.grid().clone();
        let ut = combine(&grid, &[&state.u, &n], |i, v| -0.5 * m0 * grid.k_sq(i) * v[0] + v[1]);
        self.cached = Some((n, du.clone()));
        (ut, du)
    }
}

/// One step from scratch. See [`Stepper`] for repeated stepping.
pub fn step(state: &SimState, law: &AdmissibleLaw, dt: f64) -> Result<SimState> {
    Stepper::new(law).step(state, dt)
}

// ---------------------------------------------------------------------------
// energy balance

/// `||u||^2`, dissipation `D = int G s` and `dD/dt = 2 int (G + G' s) Du : D(u_t)`.
#[derive(Debug, Clone, Copy)]
struct EnergyPoint {
    energy: f64,
    dissipation: f64,
    dissipation_rate: f64,
}

fn energy_point(state: &SimState, law: &ConstitutiveLaw, stepper: &mut Stepper<'_>) -> EnergyPoint {
    let (ut, du) = stepper.time_derivative(state);
    let dut = sym_gradient(&ut);
    let grid = state.u.grid();
    let (d, dd): (Vec<f64>, Vec<f64>) = (0..grid.physical_len())
        .into_par_iter()
        .map(|p| {
            let a = du.at(p);
            let s = a.norm_sq();
            let g = law.value(s);
            let g1 = law.deriv(s, 1);
            (g * s, 2.0 * (g + g1 * s) * a.dot(&dut.at(p)))
        })
        .unzip();
    let energy = crate::fields::sobolev_norm(&state.u, 0).expect("order 0").powi(2);
    EnergyPoint {
        energy,
        dissipation: grid.integrate(&d),
        dissipation_rate: grid.integrate(&dd),
    }
}

/// `(|u1|^2 - |u0|^2) / (2 dt)` plus the time average of the dissipation
/// over the step, by the trapezoid rule with endpoint-derivative correction.
fn energy_residual(a: &EnergyPoint, b: &EnergyPoint, dt: f64) -> f64 {
    let average =
        0.5 * (a.dissipation + b.dissipation) + dt / 12.0 * (a.dissipation_rate - b.dissipation_rate);
    (b.energy - a.energy) / (2.0 * dt) + average
}

// ---------------------------------------------------------------------------
// driver

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: SimState,
    pub series: DiagnosticsSeries,
    pub summary: RunSummary,
}

/// Integrates the configured problem to `t_end`.
pub fn run(config: &SimConfig) -> Result<RunOutput> {
    config.validate()?;
    let (law, state) = config.build()?;
    run_from(config, &law, state)
}

/// [`run`] from an explicit law and initial state (config supplies the time
/// policy and output settings).
pub fn run_from(config: &SimConfig, law: &AdmissibleLaw, mut state: SimState) -> Result<RunOutput> {
    let policy = config.dt_policy()?;
    let out = &config.output;
    let t_end = config.time.t_end;
    if let Some(dir) = &out.dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut stepper = Stepper::new(law);
    let mut series = DiagnosticsSeries::new();
    let mut point = energy_point(&state, law, &mut stepper);
    let mut max_residual: f64 = 0.0;
    series.push(diagnostics::record(&state, law, out.l_max)?);
    log::info!(
        "start: n = {}, law = {}, t_end = {t_end}",
        state.u.grid().n(),
        law.label()
    );

    let tol = 1e-12 * t_end.max(1.0);
    let outcome = loop {
        let remaining = t_end - state.t;
        if remaining <= tol {
            break Ok(());
        }
        let dt = match policy {
            DtPolicy::Fixed(dt) => dt,
            DtPolicy::Cfl { c_cfl, dt_max } => cfl_dt(&state, law, c_cfl).min(dt_max),
        };
        // land exactly on t_end instead of leaving a sliver
        let last = remaining <= dt * (1.0 + 1e-9);
        let h = if last { remaining } else { dt };
        let mut next = match stepper.step(&state, h) {
            Ok(s) => s,
            Err(e) => break Err(e),
        };
        if last {
            next.t = t_end;
        }
        let next_point = energy_point(&next, law, &mut stepper);
        let residual = energy_residual(&point, &next_point, h);
        max_residual = max_residual.max(residual.abs());
        point = next_point;
        state = next;

        let finished = t_end - state.t <= tol;
        if state.step % out.diag_every == 0 || finished {
            let mut rec = diagnostics::record(&state, law, out.l_max)?;
            rec.energy_residual = residual;
            log::debug!("t = {:.6}, step = {}, l2 = {:.6e}", rec.t, rec.step, rec.l2_norm);
            series.push(rec);
        }
        if let (Some(dir), Some(every)) = (&out.dir, out.ckpt_every) {
            if state.step % every == 0 {
                checkpoint::write(&dir.join(checkpoint_name(state.step)), &state.u, state.t, state.step)?;
            }
        }
    };

    let blow_up = outcome.is_err();
    let mut summary = RunSummary::from_series(&series, blow_up);
    // every step counts, not only the recorded ones
    summary.max_energy_residual = summary.max_energy_residual.max(max_residual);
    if let Some(dir) = &out.dir {
        diagnostics::write_series(&series, &dir.join("diagnostics.csv"))?;
        let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
        let path = dir.join("summary.json");
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        if !blow_up {
            checkpoint::write(&dir.join("final.nnf"), &state.u, state.t, state.step)?;
        }
    }
    match outcome {
        Ok(()) => {
            log::info!("finished at t = {} after {} steps", state.t, state.step);
            Ok(RunOutput { state, series, summary })
        }
        Err(Error::BlowUp(mut b)) => {
            log::error!("non-finite velocity at t = {}, step {}", b.t, b.step);
            b.series = series;
            Err(Error::BlowUp(b))
        }
        Err(e) => Err(e),
    }
}

pub fn checkpoint_name(step: u64) -> String {
    format!("ckpt_{step:08}.nnf")
}

/// Diagnostics record of `state` with the given residual, for callers that
/// drive [`Stepper`] themselves.
pub fn record_with_residual(
    state: &SimState,
    law: &ConstitutiveLaw,
    l_max: usize,
    residual: f64,
) -> Result<DiagnosticsRecord> {
    let mut r = diagnostics::record(state, law, l_max)?;
    r.energy_residual = residual;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{random_solenoidal, sobolev_norm};

    fn admitted(law: ConstitutiveLaw) -> AdmissibleLaw {
        law.admit().unwrap()
    }

    fn tg_state(n: usize) -> SimState {
        SimState::new(taylor_green(&Grid::periodic(n).unwrap())).unwrap()
    }

    fn rel_diff(a: &SpectralField, b: &SpectralField) -> f64 {
        a.add_scaled(-1.0, b).unwrap().max_abs() / b.max_abs()
    }

    fn config(json: &str) -> SimConfig {
        SimConfig::from_json(json).unwrap()
    }

    #[test]
    fn newtonian_taylor_green_has_no_explicit_term() {
        let law = admitted(ConstitutiveLaw::newtonian(1.0).unwrap());
        let n = rhs_explicit(&tg_state(32), &law);
        assert!(n.max_abs() <= 1e-10, "{}", n.max_abs());
    }

    #[test]
    fn zero_field_is_steady() {
        let g = Grid::periodic(8).unwrap();
        let s = SimState::new(SpectralField::zeros(&g, 3)).unwrap();
        let law = admitted(ConstitutiveLaw::power_a(3.0, 1.0).unwrap());
        assert_eq!(rhs_explicit(&s, &law).max_abs(), 0.0);
        let next = step(&s, &law, 1e-2).unwrap();
        assert_eq!(next.u.max_abs(), 0.0);
        assert_eq!(next.step, 1);
    }

    #[test]
    fn zero_step_is_identity() {
        let law = admitted(ConstitutiveLaw::power_a(3.0, 1.0).unwrap());
        let s = tg_state(16);
        let next = step(&s, &law, 0.0).unwrap();
        assert_eq!(next.u, s.u);
        assert_eq!((next.t, next.step), (s.t, s.step));
        assert!(step(&s, &law, -1.0).is_err());
    }

    #[test]
    fn newtonian_taylor_green_single_step() {
        let law = admitted(ConstitutiveLaw::newtonian(1.0).unwrap());
        let s = tg_state(32);
        let next = step(&s, &law, 1e-3).unwrap();
        let exact = s.u.scale((-1e-3f64).exp());
        assert!(rel_diff(&next.u, &exact) <= 1e-10);
        assert!(next.u.is_solenoidal());
    }

    // Slow oracle: the full right side of a single shear mode from
    // finite differences on a grid twice as fine.
    #[test]
    fn rhs_matches_finite_difference_oracle() {
        let grid = Grid::periodic(32).unwrap();
        let amp = 0.8;
        let u = grid.sample(|[x, y, _]| amp * (x + y).sin());
        let v = grid.sample(|[x, y, _]| -amp * (x + y).sin());
        let w = vec![0.0; grid.physical_len()];
        let field = SpectralField::from_physical(&grid, &[u, v, w]).unwrap();
        let state = SimState::new(field).unwrap();
        let law = admitted(ConstitutiveLaw::power_a(4.0, 1.0).unwrap());
        let rhs = rhs_explicit(&state, &law).to_physical();

        // u = a sin(x+y) (1, -1, 0): convection vanishes since u . grad = 0;
        // Du has D12 = 0 and D11 = a cos, D22 = -a cos; the explicit viscous
        // term is div((G - 1) Du) with G - 1 = |Du|^2 = 2 a^2 cos^2(x+y).
        let h = grid.dx() / 2.0;
        let excess = |z: f64| 2.0 * amp * amp * z.cos().powi(2);
        let flux_x = |x: f64, y: f64| excess(x + y) * amp * (x + y).cos();
        let flux_y = |x: f64, y: f64| -excess(x + y) * amp * (x + y).cos();
        // 8th-order central differences on the refined spacing
        let d = |f: &dyn Fn(f64) -> f64, x: f64| {
            const C: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
            C.iter()
                .enumerate()
                .map(|(m, c)| {
                    let s = (m + 1) as f64 * h;
                    c * (f(x + s) - f(x - s))
                })
                .sum::<f64>()
                / h
        };
        let mut err: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for p in 0..grid.physical_len() {
            let [x, y, _] = grid.point(p);
            // sigma row 1 = (flux_x, 0, 0), row 2 = (0, flux_y, 0)
            let fx = d(&|s| flux_x(s, y), x);
            let fy = d(&|s| flux_y(x, s), y);
            // the divergence (fx, fy) is parallel to (1, -1): already
            // divergence free, so the projection leaves it intact
            err = err.max((rhs[0][p] - fx).abs()).max((rhs[1][p] - fy).abs());
            scale = scale.max(fx.abs());
        }
        assert!(err <= 1e-4 * scale, "{err} vs {scale}");
    }

    #[test]
    fn cfl_examples() {
        let law = admitted(ConstitutiveLaw::newtonian(1.0).unwrap());
        let g = Grid::periodic(32).unwrap();
        let zero = SimState::new(SpectralField::zeros(&g, 3)).unwrap();
        assert!(cfl_dt(&zero, &law, 0.5) > 1e20);

        // |u| = 1 everywhere is attained by u = (sin z, cos z, 0)
        let u = g.sample(|[_, _, z]| z.sin());
        let v = g.sample(|[_, _, z]| z.cos());
        let f = SpectralField::from_physical(&g, &[u, v, vec![0.0; g.physical_len()]]).unwrap();
        let s = SimState::new(f).unwrap();
        let dt = cfl_dt(&s, &law, 0.5);
        assert!((dt - 0.5 * TAU / 32.0).abs() < 1e-12);
        assert!((dt - 0.0982).abs() < 1e-4);

        // max |Du|^2 = 4 with q = 4: the diffusive limit uses G - m0 = 4
        let pa = admitted(ConstitutiveLaw::power_a(4.0, 1.0).unwrap());
        let a = 2f64.sqrt();
        let u = g.sample(|[_, y, _]| a * y.sin());
        let f = SpectralField::from_physical(&g, &[u, vec![0.0; g.physical_len()], vec![0.0; g.physical_len()]]).unwrap();
        let s = SimState::new(f).unwrap();
        // |Du|^2 = 2 (a cos y / 2)^2 = cos^2 y <= 1; scale to reach 4
        let s = SimState::new(s.u.scale(2.0)).unwrap();
        let dx = g.dx();
        let expected = 0.5 * (dx / (2.0 * a + CFL_GUARD)).min(dx * dx / (2.0 * 4.0 + CFL_GUARD));
        assert!((cfl_dt(&s, &pa, 0.5) - expected).abs() <= 1e-9 * expected);
    }

    #[test]
    fn taylor_green_pressure() {
        let law = admitted(ConstitutiveLaw::newtonian(1.0).unwrap());
        let s = tg_state(32);
        let p = compute_pressure(&s, &law).component_physical(0);
        let g = s.u.grid();
        let expected = g.sample(|[x, y, _]| 0.25 * ((2.0 * x).cos() + (2.0 * y).cos()));
        let err = p.iter().zip(&expected).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err <= 1e-8, "{err}");

        let zero = SimState::new(SpectralField::zeros(g, 3)).unwrap();
        assert_eq!(compute_pressure(&zero, &law).max_abs(), 0.0);
    }

    #[test]
    fn pressure_restores_divergence_free_momentum() {
        let g = Grid::periodic(16).unwrap();
        let law = admitted(ConstitutiveLaw::power_a(3.0, 1.0).unwrap());
        let s = SimState::new(random_solenoidal(&g, 12, 3, 20.0).unwrap()).unwrap();
        let p = compute_pressure(&s, &law);
        // unprojected momentum: div(sigma - u (x) u) - grad p
        let vel = s.u.to_physical();
        let du = sym_gradient(&s.u);
        let sigma = stress_with_offset(&law, &du, 0.0);
        let flux: Vec<Vec<Complex64>> = (0..6)
            .map(|c| {
                let (i, j) = crate::tensor::SYM_PAIRS[c];
                let f: Vec<f64> = (0..g.physical_len()).map(|q| sigma.components()[c][q] - vel[i][q] * vel[j][q]).collect();
                g.fft().forward(&f)
            })
            .collect();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for idx in (0..g.spectral_len()).filter(|&i| g.retains(i)) {
            let k = g.wavevector(idx);
            let mut div = Complex64::default();
            for i in 0..3 {
                let mut m = Complex64::default();
                for j in 0..3 {
                    m += Complex64::new(0.0, k[j]) * flux[sym_index(i, j)][idx];
                }
                m -= Complex64::new(0.0, k[i]) * p.component(0)[idx];
                div += Complex64::new(0.0, k[i]) * m;
            }
            worst = worst.max(div.norm());
            scale = scale.max(flux.iter().map(|f| f[idx].norm()).fold(0.0, f64::max));
        }
        assert!(worst <= 1e-10 * scale.max(1.0), "{worst}");
    }

    #[test]
    fn steps_preserve_incompressibility_and_l2_decay() {
        let g = Grid::periodic(16).unwrap();
        let law = admitted(ConstitutiveLaw::power_a(3.0, 1.0).unwrap());
        let mut s = SimState::new(random_solenoidal(&g, 21, 3, 30.0).unwrap()).unwrap();
        let mut stepper = Stepper::new(&law);
        let mut prev = sobolev_norm(&s.u, 0).unwrap();
        for _ in 0..20 {
            s = stepper.step(&s, 2e-3).unwrap();
            assert!(s.u.divergence_max() <= 1e-10 * s.u.max_abs());
            let l2 = sobolev_norm(&s.u, 0).unwrap();
            assert!(l2 <= prev * (1.0 + 1e-12));
            prev = l2;
        }
    }

    #[test]
    fn cached_stepper_matches_fresh_steps() {
        let g = Grid::periodic(16).unwrap();
        let law = admitted(ConstitutiveLaw::power_a(3.0, 1.0).unwrap());
        let s0 = SimState::new(random_solenoidal(&g, 2, 3, 10.0).unwrap()).unwrap();
        let mut st = Stepper::new(&law);
        let mid = st.step(&s0, 1e-3).unwrap();
        let a = st.step(&mid, 1e-3).unwrap();
        let b = step(&step(&s0, &law, 1e-3).unwrap(), &law, 1e-3).unwrap();
        assert_eq!(a.u, b.u);
    }

    #[test]
    fn blow_up_is_reported_with_last_state() {
        let law = admitted(ConstitutiveLaw::newtonian(1.0).unwrap());
        let g = Grid::periodic(8).unwrap();
        let huge = random_solenoidal(&g, 1, 2, 1e200).unwrap();
        let s = SimState::new(huge).unwrap();
        match step(&s, &law, 10.0) {
            Err(Error::BlowUp(b)) => {
                assert_eq!(b.step, 1);
                assert_eq!(b.last_valid.u, s.u);
            }
            other => panic!("{:?}", other.map(|s| s.step)),
        }
    }

    #[test]
    fn third_order_convergence() {
        let g = Grid::periodic(16).unwrap();
        let law = admitted(ConstitutiveLaw::power_a(3.0, 1.0).unwrap());
        let s0 = SimState::new(random_solenoidal(&g, 5, 3, 40.0).unwrap()).unwrap();
        let advance = |dt: f64, n: usize| {
            let mut st = Stepper::new(&law);
            (0..n).fold(s0.clone(), |s, _| st.step(&s, dt).unwrap()).u
        };
        let reference = advance(0.1 / 64.0, 64);
        let e1 = rel_diff(&advance(0.1 / 8.0, 8), &reference);
        let e2 = rel_diff(&advance(0.1 / 16.0, 16), &reference);
        let order = (e1 / e2).log2();
        assert!(order > 2.7, "observed order {order} ({e1:e}, {e2:e})");
    }

    #[test]
    fn config_parsing_and_validation() {
        let cfg = config(
            r#"{"grid":{"n":16},"law":{"kind":"power_a","m0":1,"q":3},
                "time":{"c_cfl":0.4,"t_end":1},
                "init":{"type":"random_solenoidal","seed":3,"k_max":4,"target_h3":0.01}}"#,
        );
        assert_eq!(cfg.grid.box_length, TAU);
        assert_eq!(cfg.dt_policy().unwrap(), DtPolicy::Cfl { c_cfl: 0.4, dt_max: DEFAULT_DT_MAX });
        assert_eq!(cfg.output, OutputConfig::default());
        assert!(matches!(cfg.init, InitConfig::RandomSolenoidal { seed: 3, k_max: 4, .. }));

        let base = r#"{"grid":{"n":16},"law":{"kind":"newtonian","m0":1},"init":{"type":"taylor_green"},"#;
        for bad in [
            r#""time":{"dt":0.1,"c_cfl":0.5,"t_end":1}}"#,
            r#""time":{"t_end":1}}"#,
            r#""time":{"dt":-1,"t_end":1}}"#,
            r#""time":{"c_cfl":1.5,"t_end":1}}"#,
            r#""time":{"dt":0.1,"t_end":-1}}"#,
            r#""time":{"dt":0.1,"t_end":1},"output":{"l_max":7}}"#,
            r#""time":{"dt":0.1,"t_end":1},"bogus":1}"#,
        ] {
            let text = format!("{base}{bad}");
            assert!(matches!(SimConfig::from_json(&text), Err(Error::Config(_))), "{text}");
        }
        let odd = r#"{"grid":{"n":15},"law":{"kind":"newtonian","m0":1},"init":{"type":"taylor_green"},"time":{"dt":0.1,"t_end":1}}"#;
        assert!(matches!(SimConfig::from_json(odd), Err(Error::Config(_))));
    }

    #[test]
    fn zero_horizon_returns_initial_state() {
        let cfg = config(
            r#"{"grid":{"n":8},"law":{"kind":"newtonian","m0":1},"time":{"dt":0.1,"t_end":0},"init":{"type":"taylor_green"}}"#,
        );
        let out = run(&cfg).unwrap();
        assert_eq!(out.series.len(), 1);
        assert_eq!(out.state.step, 0);
        assert!(rel_diff(&out.state.u, &taylor_green(&Grid::periodic(8).unwrap())) < 1e-15);
    }

    #[test]
    fn run_writes_outputs_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let json = format!(
            r#"{{"grid":{{"n":16}},"law":{{"kind":"power_b","m0":0.5,"q":1.5,"sigma_reg":0.5}},
                "time":{{"c_cfl":0.5,"t_end":0.05,"dt_max":0.01}},
                "init":{{"type":"random_solenoidal","seed":8,"k_max":3,"target_h3":5}},
                "output":{{"dir":{:?},"diag_every":2,"ckpt_every":2,"l_max":4}}}}"#,
            dir.path()
        );
        let cfg = config(&json);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a.series, b.series);
        assert_eq!(a.state.t, 0.05);
        assert_eq!(a.series.last().unwrap().t, 0.05);
        let read = diagnostics::read_series(&dir.path().join("diagnostics.csv")).unwrap();
        assert_eq!(read, a.series);
        assert!(dir.path().join("summary.json").exists());
        assert!(dir.path().join(checkpoint_name(2)).exists());
        let ck = checkpoint::read(&dir.path().join("final.nnf")).unwrap();
        let last = a.series.last().unwrap();
        let l2 = sobolev_norm(&ck.velocity, 0).unwrap();
        assert!((l2 - last.l2_norm).abs() <= 1e-12 * last.l2_norm);
        for w in a.series.records.windows(2) {
            assert!(w[1].l2_norm <= w[0].l2_norm * (1.0 + 1e-12));
        }
    }

    #[test]
    fn checkpoint_init_resumes() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::periodic(16).unwrap();
        let u = random_solenoidal(&g, 4, 3, 2.0).unwrap();
        let path = dir.path().join("start.nnf");
        checkpoint::write(&path, &u, 0.0, 0).unwrap();
        let json = format!(
            r#"{{"grid":{{"n":16}},"law":{{"kind":"newtonian","m0":1}},"time":{{"dt":0.01,"t_end":0}},
                "init":{{"type":"checkpoint","path":{path:?}}}}}"#
        );
        let out = run(&config(&json)).unwrap();
        assert!(rel_diff(&out.state.u, &u) < 1e-14);
        let wrong = json.replace("\"n\":16", "\"n\":8");
        assert!(matches!(run(&config(&wrong)), Err(Error::Config(_))));
    }

    #[test]
    fn inadmissible_law_is_rejected() {
        let cfg = config(
            r#"{"grid":{"n":8},"law":{"kind":"reciprocal","m0":1},"time":{"dt":0.1,"t_end":1},"init":{"type":"taylor_green"}}"#,
        );
        assert!(matches!(run(&cfg), Err(Error::Inadmissible(_))));
    }

    #[test]
    fn energy_residual_is_small_and_converges() {
        let g = Grid::periodic(16).unwrap();
        let law = admitted(ConstitutiveLaw::power_a(3.0, 1.0).unwrap());
        let s0 = SimState::new(random_solenoidal(&g, 9, 3, 30.0).unwrap()).unwrap();
        let max_residual = |dt: f64, steps: usize| {
            let mut st = Stepper::new(&law);
            let mut s = s0.clone();
            let mut a = energy_point(&s, &law, &mut st);
            let mut worst: f64 = 0.0;
            for _ in 0..steps {
                s = st.step(&s, dt).unwrap();
                let b = energy_point(&s, &law, &mut st);
                worst = worst.max(energy_residual(&a, &b, dt).abs());
                a = b;
            }
            (worst, a.dissipation)
        };
        let (r1, d) = max_residual(4e-3, 25);
        let (r2, _) = max_residual(2e-3, 50);
        assert!(r1 < 1e-3 * d, "{r1} vs {d}");
        assert!(r1 / r2 >= 6.0, "{r1:e} {r2:e}");
    }
}
