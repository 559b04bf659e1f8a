//! Command-line interface. JSON results go to stdout, logs to stderr.

use std::f64::consts::TAU;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::analysis::check_decomposition;
use crate::constitutive::{verify_structural, LawSpec};
use crate::diagnostics::{fit_decay_rate, Quantity, RunSummary};
use crate::error::{Error, Result};
use crate::fields::{checkpoint, random_solenoidal, sobolev_norm, taylor_green, Grid};
use crate::solver::{self, SimConfig, SimState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_BLOW_UP: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "nnflow", version, about = "Shear-dependent viscous flow on the periodic box")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct LawArgs {
    /// newtonian, power_a, power_b or reciprocal
    #[arg(long)]
    pub kind: String,
    #[arg(long, default_value_t = 1.0)]
    pub m0: f64,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long = "sigma-reg")]
    pub sigma_reg: Option<f64>,
}

impl LawArgs {
    fn spec(&self) -> LawSpec {
        LawSpec {
            kind: self.kind.clone(),
            m0: self.m0,
            q: self.q,
            sigma_reg: self.sigma_reg,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulation described by a JSON config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Audit a viscosity law against the structural conditions.
    VerifyLaw {
        #[command(flatten)]
        law: LawArgs,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long = "s-max", default_value_t = 1e6)]
        s_max: f64,
    },
    /// Check the higher-derivative decomposition on a random field.
    CheckDerivatives {
        #[command(flatten)]
        law: LawArgs,
        #[arg(long, default_value_t = 48)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        order: usize,
        /// Comma-separated axes (0, 1, 2); defaults to 0,1,2 truncated to the order.
        #[arg(long, value_delimiter = ',')]
        dirs: Option<Vec<usize>>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long = "k-max", default_value_t = 2)]
        k_max: usize,
        /// H^3 norm of the test field.
        #[arg(long, default_value_t = 1.0)]
        amplitude: f64,
    },
    /// Newtonian Taylor-Green decay against the exact solution.
    TaylorGreen {
        #[arg(long, default_value_t = 32)]
        n: usize,
        #[arg(long = "t-end", default_value_t = 1.0)]
        t_end: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 1.0)]
        m0: f64,
    },
    /// Sobolev norms of a checkpoint.
    Norms {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "l-max", default_value_t = 6)]
        l_max: u32,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::BlowUp(_) => EXIT_BLOW_UP,
        Error::Numeric(_) => EXIT_RUNTIME,
        _ => EXIT_VALIDATION,
    }
}

/// Runs one command, writing its JSON result to `out`; returns the exit code.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> i32 {
    let (code, value) = match dispatch(&cli.command) {
        Ok(r) => r,
        Err(e) => {
            log::error!("{e}");
            let code = exit_code(&e);
            let mut v = json!({ "error": e.to_string() });
            match e {
                Error::BlowUp(b) => {
                    v["summary"] = serde_json::to_value(RunSummary::from_series(&b.series, true))
                        .expect("summary serializes");
                }
                Error::Inadmissible(report) => {
                    v["report"] = serde_json::to_value(*report).expect("report serializes");
                }
                _ => {}
            }
            (code, v)
        }
    };
    let text = serde_json::to_string_pretty(&value).expect("json value");
    if writeln!(out, "{text}").is_err() {
        return EXIT_RUNTIME;
    }
    code
}

fn dispatch(cmd: &Command) -> Result<(i32, Value)> {
    match cmd {
        Command::Simulate { config } => {
            let cfg = SimConfig::load(config)?;
            let out = solver::run(&cfg)?;
            Ok((EXIT_OK, serde_json::to_value(out.summary).expect("summary serializes")))
        }
        Command::VerifyLaw { law, samples, s_max } => {
            let built = law.spec().build()?;
            let report = verify_structural(&built, *samples, *s_max)?;
            let code = if report.passed { EXIT_OK } else { EXIT_VALIDATION };
            if !report.passed {
                log::warn!("law `{}` fails the structural audit", report.label);
            }
            Ok((code, serde_json::to_value(report).expect("report serializes")))
        }
        Command::CheckDerivatives {
            law,
            n,
            order,
            dirs,
            seed,
            k_max,
            amplitude,
        } => {
            let admitted = law.spec().build()?.admit()?;
            let dirs = match dirs {
                Some(d) => d.clone(),
                None if *order <= 3 => (0..*order).collect(),
                None => return Err(Error::UnsupportedOrder(*order)),
            };
            if dirs.len() != *order {
                return Err(Error::InvalidArgument(format!(
                    "--dirs has {} entries but --order is {order}",
                    dirs.len()
                )));
            }
            let grid = Grid::periodic(*n)?;
            let u = random_solenoidal(&grid, *seed, *k_max, *amplitude)?;
            let report = check_decomposition(&admitted, &u, &dirs)?;
            Ok((EXIT_OK, serde_json::to_value(report).expect("report serializes")))
        }
        Command::TaylorGreen { n, t_end, dt, m0 } => taylor_green_check(*n, *t_end, *dt, *m0),
        Command::Norms { checkpoint: path, l_max } => {
            if *l_max > crate::fields::MAX_SOBOLEV_ORDER {
                return Err(Error::InvalidArgument(format!("l_max = {l_max} exceeds 6")));
            }
            let ck = checkpoint::read(path)?;
            let mut v = json!({
                "t": ck.time,
                "step": ck.step,
                "n": ck.velocity.grid().n(),
                "l2": sobolev_norm(&ck.velocity, 0)?,
            });
            for l in 1..=*l_max {
                v[format!("h{l}")] = json!(sobolev_norm(&ck.velocity, l)?);
            }
            Ok((EXIT_OK, v))
        }
    }
}

fn taylor_green_check(n: usize, t_end: f64, dt: f64, m0: f64) -> Result<(i32, Value)> {
    let cfg = SimConfig {
        grid: solver::GridConfig { n, box_length: TAU },
        law: LawSpec {
            kind: "newtonian".into(),
            m0,
            q: None,
            sigma_reg: None,
        },
        time: solver::TimeConfig {
            dt: Some(dt),
            c_cfl: None,
            t_end,
            dt_max: None,
        },
        init: solver::InitConfig::TaylorGreen,
        output: solver::OutputConfig {
            l_max: 1,
            ..Default::default()
        },
    };
    cfg.validate()?;
    let out = solver::run(&cfg)?;
    let u0 = SimState::new(taylor_green(out.state.u.grid()))?.u;
    let exact = u0.scale((-m0 * out.state.t).exp());
    let err = sobolev_norm(&out.state.u.add_scaled(-1.0, &exact)?, 0)? / sobolev_norm(&exact, 0)?;
    let rate = fit_decay_rate(&out.series, Quantity::Sobolev(0), (0.0, out.state.t)).ok();
    Ok((
        EXIT_OK,
        json!({
            "n": n,
            "t_end": out.state.t,
            "steps": out.state.step,
            "relative_l2_error": err,
            "fitted_rate": rate,
            "expected_rate": -m0,
        }),
    ))
}

/// Caps the global thread pool when `NNF_THREADS` is set.
pub fn configure_threads() {
    if let Ok(v) = std::env::var("NNF_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size thread pool: {e}");
                }
            }
            _ => log::warn!("ignoring NNF_THREADS = {v:?}"),
        }
    }
}
