//! Time series of the quantities controlled by the energy estimates:
//! Sobolev norms, dissipation, the viscous potential and the largest
//! velocity gradient. CSV persistence and decay-rate fits.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constitutive::ConstitutiveLaw;
use crate::error::{Error, Result};
use crate::fields::{sobolev_norm, velocity_gradient, StrainField, MAX_SOBOLEV_ORDER};
use crate::solver::SimState;
use crate::stress::dissipation;

pub const CSV_HEADER: [&str; 13] = [
    "t",
    "step",
    "l2",
    "h1",
    "h2",
    "h3",
    "h4",
    "h5",
    "h6",
    "dissipation",
    "potential",
    "max_grad",
    "energy_residual",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub step: u64,
    pub l2_norm: f64,
    /// `h_norms[l - 1]` is the `H^l` norm.
    pub h_norms: Vec<f64>,
    pub dissipation: f64,
    pub potential: f64,
    pub max_grad: f64,
    pub energy_residual: f64,
}

impl DiagnosticsRecord {
    /// `H^l` norm, with `l = 0` the `L^2` norm.
    pub fn h_norm(&self, l: usize) -> Option<f64> {
        if l == 0 {
            Some(self.l2_norm)
        } else {
            self.h_norms.get(l - 1).copied()
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.t, self.l2_norm, self.dissipation, self.potential, self.max_grad, self.energy_residual]
            .iter()
            .chain(&self.h_norms)
            .all(|v| v.is_finite())
    }

    fn get(&self, q: Quantity) -> Option<f64> {
        match q {
            Quantity::Sobolev(l) => self.h_norm(l),
            Quantity::Dissipation => Some(self.dissipation),
            Quantity::Potential => Some(self.potential),
            Quantity::MaxGrad => Some(self.max_grad),
            Quantity::EnergyResidual => Some(self.energy_residual),
        }
    }
}

/// A recorded column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    /// `H^l` norm; `Sobolev(0)` is `L^2`.
    Sobolev(usize),
    Dissipation,
    Potential,
    MaxGrad,
    EnergyResidual,
}

impl Quantity {
    pub fn name(&self) -> String {
        match self {
            Quantity::Sobolev(0) => "l2".to_string(),
            Quantity::Sobolev(l) => format!("h{l}"),
            Quantity::Dissipation => "dissipation".to_string(),
            Quantity::Potential => "potential".to_string(),
            Quantity::MaxGrad => "max_grad".to_string(),
            Quantity::EnergyResidual => "energy_residual".to_string(),
        }
    }
}

/// All norms, integrals and indicators of `state`, with a zero energy
/// residual (the solver fills it in).
pub fn record(state: &SimState, law: &ConstitutiveLaw, l_max: usize) -> Result<DiagnosticsRecord> {
    if l_max > MAX_SOBOLEV_ORDER as usize {
        return Err(Error::InvalidArgument(format!(
            "l_max = {l_max} exceeds {MAX_SOBOLEV_ORDER}"
        )));
    }
    let u = &state.u;
    let grid = u.grid();
    let h_norms = (1..=l_max as u32)
        .map(|l| sobolev_norm(u, l))
        .collect::<Result<Vec<_>>>()?;
    let grad = velocity_gradient(u);
    let max_grad = (0..grid.physical_len())
        .into_par_iter()
        .map(|p| grad.iter().map(|g| g[p] * g[p]).sum::<f64>())
        .reduce(|| 0.0, f64::max)
        .sqrt();
    let du = StrainField::from_gradient(grid, &grad);
    let density = du
        .magnitude_sq()
        .par_iter()
        .map(|&s| law.eval_antideriv(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(DiagnosticsRecord {
        t: state.t,
        step: state.step,
        l2_norm: sobolev_norm(u, 0)?,
        h_norms,
        dissipation: dissipation(law, &du),
        potential: grid.integrate(&density),
        max_grad,
        energy_residual: 0.0,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSeries {
    pub records: Vec<DiagnosticsRecord>,
}

impl DiagnosticsSeries {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, r: DiagnosticsRecord) {
        self.records.push(r);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&DiagnosticsRecord> {
        self.records.last()
    }

    /// `(t, value)` pairs of one column, skipping records that lack it.
    pub fn column(&self, q: Quantity) -> Vec<(f64, f64)> {
        self.records.iter().filter_map(|r| r.get(q).map(|v| (r.t, v))).collect()
    }
}

/// Least-squares slope of `log(value)` against `t` over records with
/// `t0 <= t <= t1`.
pub fn fit_decay_rate(series: &DiagnosticsSeries, q: Quantity, window: (f64, f64)) -> Result<f64> {
    let (t0, t1) = window;
    let pts: Vec<(f64, f64)> = series
        .column(q)
        .into_iter()
        .filter(|&(t, _)| t >= t0 && t <= t1)
        .collect();
    if pts.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "decay fit needs at least 2 records in [{t0}, {t1}], found {}",
            pts.len()
        )));
    }
    if let Some(&(_, v)) = pts.iter().find(|&&(_, v)| !(v > 0.0)) {
        return Err(Error::Domain {
            what: "log in the decay fit",
            value: v,
        });
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, v) in &pts {
        sxy += (t - tm) * (v.ln() - ym);
        sxx += (t - tm) * (t - tm);
    }
    if sxx == 0.0 {
        return Err(Error::Degenerate("all records in the window share one time".into()));
    }
    Ok(sxy / sxx)
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_series(series: &DiagnosticsSeries, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let to_err = |e: csv::Error| Error::Numeric(format!("{}: {e}", path.display()));
    w.write_record(CSV_HEADER).map_err(to_err)?;
    for r in &series.records {
        let mut row = vec![fmt_f64(r.t), r.step.to_string(), fmt_f64(r.l2_norm)];
        for l in 0..MAX_SOBOLEV_ORDER as usize {
            row.push(r.h_norms.get(l).map(|&v| fmt_f64(v)).unwrap_or_default());
        }
        row.extend([r.dissipation, r.potential, r.max_grad, r.energy_residual].map(fmt_f64));
        w.write_record(&row).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_series(path: &Path) -> Result<DiagnosticsSeries> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(parse_err(1, format!("unexpected header `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut series = DiagnosticsSeries::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64> {
            row[i]
                .parse::<f64>()
                .map_err(|e| parse_err(line, format!("column `{}`: {e}", CSV_HEADER[i])))
        };
        let step = row[1]
            .parse::<u64>()
            .map_err(|e| parse_err(line, format!("column `step`: {e}")))?;
        let mut h_norms = Vec::new();
        for i in 3..9 {
            if row[i].is_empty() {
                if (i + 1..9).any(|j| !row[j].is_empty()) {
                    return Err(parse_err(line, "Sobolev columns must be contiguous".into()));
                }
                break;
            }
            h_norms.push(num(i)?);
        }
        series.push(DiagnosticsRecord {
            t: num(0)?,
            step,
            l2_norm: num(2)?,
            h_norms,
            dissipation: num(9)?,
            potential: num(10)?,
            max_grad: num(11)?,
            energy_residual: num(12)?,
        });
    }
    Ok(series)
}

/// Per-run JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub t_final: f64,
    pub steps: u64,
    pub records: usize,
    pub blow_up: bool,
    pub final_norms: BTreeMap<String, f64>,
    pub min: BTreeMap<String, f64>,
    pub max: BTreeMap<String, f64>,
    /// Fitted `d log(q)/dt` over the whole run, where defined.
    pub decay_rates: BTreeMap<String, f64>,
    pub max_energy_residual: f64,
}

impl RunSummary {
    pub fn from_series(series: &DiagnosticsSeries, blow_up: bool) -> Self {
        let l_max = series.records.iter().map(|r| r.h_norms.len()).min().unwrap_or(0);
        let mut quantities: Vec<Quantity> = (0..=l_max).map(Quantity::Sobolev).collect();
        quantities.extend([Quantity::Dissipation, Quantity::Potential, Quantity::MaxGrad]);
        let mut summary = RunSummary {
            t_final: series.last().map_or(0.0, |r| r.t),
            steps: series.last().map_or(0, |r| r.step),
            records: series.len(),
            blow_up,
            final_norms: BTreeMap::new(),
            min: BTreeMap::new(),
            max: BTreeMap::new(),
            decay_rates: BTreeMap::new(),
            max_energy_residual: series
                .records
                .iter()
                .map(|r| r.energy_residual.abs())
                .fold(0.0, f64::max),
        };
        let (t0, t1) = (
            series.records.first().map_or(0.0, |r| r.t),
            summary.t_final,
        );
        for q in quantities {
            let col = series.column(q);
            let Some(&(_, last)) = col.last() else { continue };
            let name = q.name();
            summary.final_norms.insert(name.clone(), last);
            summary.min.insert(name.clone(), col.iter().map(|p| p.1).fold(f64::INFINITY, f64::min));
            summary.max.insert(name.clone(), col.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max));
            if let Ok(rate) = fit_decay_rate(series, q, (t0, t1)) {
                summary.decay_rates.insert(name, rate);
            }
        }
        summary
    }
}
