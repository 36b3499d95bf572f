//! Alternative-specific constant calibration against observed targets.
//!
//! The update is the usual log-proportional rule
//! `asc[m] += step * ln(target_m / simulated_m)`, followed by re-pinning the
//! reference mode at zero. Trip-ratio observables use the same rule: with a
//! frozen baseline, `ratio_target / ratio_sim` equals the ratio of the
//! implied share targets, so no separate conversion step is needed.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::choice::{MnlParams, Mode, Probabilities, N_MODES};
use crate::{Error, Result};

const EPS: f64 = 1e-6;

/// Something a simulation run can be compared against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Observable {
    /// mode share as a fraction of all trips
    Share(Mode),
    /// trips relative to a baseline run
    TripsRatio(Mode),
    /// transit trips relative to baseline, under its survey name
    SubwayRidershipRatio,
}

impl Observable {
    pub fn mode(self) -> Mode {
        match self {
            Observable::Share(m) | Observable::TripsRatio(m) => m,
            Observable::SubwayRidershipRatio => Mode::Transit,
        }
    }

    pub fn share_map(shares: &Probabilities) -> BTreeMap<Observable, f64> {
        shares.iter().map(|(m, s)| (Observable::Share(m), s)).collect()
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observable::Share(m) => write!(f, "{m}_share"),
            Observable::TripsRatio(m) => write!(f, "{m}_trips_ratio"),
            Observable::SubwayRidershipRatio => f.write_str("subway_ridership_ratio"),
        }
    }
}

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "subway_ridership_ratio" {
            return Ok(Observable::SubwayRidershipRatio);
        }
        if let Some(m) = s.strip_suffix("_trips_ratio") {
            return Ok(Observable::TripsRatio(m.parse()?));
        }
        if let Some(m) = s.strip_suffix("_share") {
            return Ok(Observable::Share(m.parse()?));
        }
        Err(Error::Invalid(format!("unknown observable {s:?}")))
    }
}

impl TryFrom<String> for Observable {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Observable> for String {
    fn from(o: Observable) -> String {
        o.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<Observable, f64>", into = "BTreeMap<Observable, f64>")]
pub struct CalibrationTargets {
    targets: BTreeMap<Observable, f64>,
}

impl CalibrationTargets {
    pub fn new(targets: BTreeMap<Observable, f64>) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::Empty("calibration targets"));
        }
        for (o, &v) in &targets {
            let upper = match o {
                Observable::Share(_) => 1.0,
                _ => 2.0,
            };
            if !(v > 0.0 && v <= upper) {
                return Err(Error::Invalid(format!("target {o} = {v} outside (0, {upper}]")));
            }
        }
        Ok(Self { targets })
    }

    pub fn iter(&self) -> impl Iterator<Item = (Observable, f64)> + '_ {
        self.targets.iter().map(|(o, v)| (*o, *v))
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

impl TryFrom<BTreeMap<Observable, f64>> for CalibrationTargets {
    type Error = Error;

    fn try_from(m: BTreeMap<Observable, f64>) -> Result<Self> {
        Self::new(m)
    }
}

impl From<CalibrationTargets> for BTreeMap<Observable, f64> {
    fn from(t: CalibrationTargets) -> Self {
        t.targets
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    /// utils multiplier on the log update
    pub step: f64,
    /// convergence tolerance in percentage points
    pub tol_pp: f64,
    pub max_iter: usize,
    /// Move ridehail with car and bikeshare with bike when those are not
    /// targeted themselves.
    pub tie_offsets: bool,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            step: 1.0,
            tol_pp: 1.0,
            max_iter: 50,
            tie_offsets: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub params: MnlParams,
    /// number of ASC updates applied
    pub iterations: usize,
    pub converged: bool,
    /// simulated minus target, per observable
    pub residuals: BTreeMap<Observable, f64>,
    pub average_abs_residual: f64,
}

fn residuals(
    sim: &BTreeMap<Observable, f64>,
    targets: &CalibrationTargets,
) -> Result<BTreeMap<Observable, f64>> {
    targets
        .iter()
        .map(|(o, t)| {
            sim.get(&o)
                .map(|s| (o, s - t))
                .ok_or_else(|| Error::MissingObservable(o.to_string()))
        })
        .collect()
}

fn mean_abs(r: &BTreeMap<Observable, f64>) -> f64 {
    r.values().map(|x| x.abs()).sum::<f64>() / r.len() as f64
}

/// Perturb ASCs until `simulate` reproduces `targets` within tolerance.
///
/// `simulate` must be deterministic. The parameters with the lowest average
/// absolute residual seen are returned, so the result is never worse than
/// `base`.
pub fn calibrate_ascs<F>(
    base: &MnlParams,
    targets: &CalibrationTargets,
    opts: &CalibrationOptions,
    mut simulate: F,
) -> Result<CalibrationResult>
where
    F: FnMut(&MnlParams) -> Result<BTreeMap<Observable, f64>>,
{
    if targets.is_empty() {
        return Err(Error::Empty("calibration targets"));
    }
    let tol = opts.tol_pp / 100.0;
    let mut params = base.clone();
    let mut best: Option<CalibrationResult> = None;
    let mut iter = 0;
    loop {
        let sim = simulate(&params)?;
        let res = residuals(&sim, targets)?;
        let avg = mean_abs(&res);
        let converged = res.values().all(|r| r.abs() <= tol);
        log::debug!("calibration iteration {iter}: mean |residual| = {avg:.5}");
        if best.as_ref().is_none_or(|b| avg < b.average_abs_residual) {
            best = Some(CalibrationResult {
                params: params.clone(),
                iterations: iter,
                converged,
                residuals: res,
                average_abs_residual: avg,
            });
        }
        if converged || iter >= opts.max_iter {
            break;
        }

        let mut log_ratio = [0.0; N_MODES];
        let mut count = [0usize; N_MODES];
        for (o, t) in targets.iter() {
            let s = sim[&o].max(EPS);
            log_ratio[o.mode().index()] += (t / s).ln();
            count[o.mode().index()] += 1;
        }
        let mut delta = [0.0; N_MODES];
        for i in 0..N_MODES {
            if count[i] > 0 {
                delta[i] = opts.step * log_ratio[i] / count[i] as f64;
            }
        }
        if opts.tie_offsets {
            for (lead, follower) in [(Mode::Car, Mode::Ridehail), (Mode::Bike, Mode::Bikeshare)] {
                if count[follower.index()] == 0 {
                    delta[follower.index()] = delta[lead.index()];
                }
            }
        }
        for m in Mode::ALL {
            let d = delta[m.index()];
            if d != 0.0 {
                params.set_asc(m, params.asc(m) + d);
            }
        }
        params.renormalize();
        iter += 1;
    }
    let mut out = best.expect("at least one evaluation");
    out.iterations = iter;
    Ok(out)
}

/// Mean absolute difference between simulated and target observables.
pub fn fit_error(simulated: &BTreeMap<Observable, f64>, targets: &CalibrationTargets) -> Result<f64> {
    Ok(mean_abs(&residuals(simulated, targets)?))
}
