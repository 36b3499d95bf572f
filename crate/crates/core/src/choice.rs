//! Discrete mode choice: linear utilities, multinomial and nested logit,
//! nested-to-MNL flattening, sampling and mode-share accounting.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::calibrate::{calibrate_ascs, CalibrationOptions, CalibrationTargets, Observable};
use crate::{Error, Result};

pub const N_MODES: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Car,
    Transit,
    Walk,
    Bike,
    Ridehail,
    Bikeshare,
}

impl Mode {
    pub const ALL: [Mode; N_MODES] = [
        Mode::Car,
        Mode::Transit,
        Mode::Walk,
        Mode::Bike,
        Mode::Ridehail,
        Mode::Bikeshare,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Car => "car",
            Mode::Transit => "transit",
            Mode::Walk => "walk",
            Mode::Bike => "bike",
            Mode::Ridehail => "ridehail",
            Mode::Bikeshare => "bikeshare",
        }
    }

    /// Modes that drive on the road network.
    pub fn is_road(self) -> bool {
        matches!(self, Mode::Car | Mode::Ridehail)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown mode {s:?}")))
    }
}

/// Small bitset over [`Mode`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct ModeSet(u8);

impl ModeSet {
    pub const fn empty() -> Self {
        ModeSet(0)
    }

    pub const fn all() -> Self {
        ModeSet((1 << N_MODES) - 1)
    }

    pub fn insert(&mut self, m: Mode) {
        self.0 |= 1 << m.index();
    }

    pub fn remove(&mut self, m: Mode) {
        self.0 &= !(1 << m.index());
    }

    pub fn contains(self, m: Mode) -> bool {
        self.0 & (1 << m.index()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn intersect(self, other: ModeSet) -> ModeSet {
        ModeSet(self.0 & other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = Mode> {
        Mode::ALL.into_iter().filter(move |m| self.contains(*m))
    }
}

impl FromIterator<Mode> for ModeSet {
    fn from_iter<I: IntoIterator<Item = Mode>>(iter: I) -> Self {
        let mut s = ModeSet::empty();
        for m in iter {
            s.insert(m);
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MnlParams {
    pub asc: BTreeMap<Mode, f64>,
    /// utils per hour, non-positive
    pub beta_time: f64,
    /// utils per currency unit, non-positive
    pub beta_cost: f64,
    pub reference_mode: Mode,
}

impl MnlParams {
    pub fn asc(&self, m: Mode) -> f64 {
        self.asc.get(&m).copied().unwrap_or(0.0)
    }

    pub fn set_asc(&mut self, m: Mode, v: f64) {
        self.asc.insert(m, v);
    }

    pub fn validate(&self) -> Result<()> {
        if self.asc(self.reference_mode) != 0.0 {
            return Err(Error::Invalid(format!(
                "ASC of reference mode {} must be 0",
                self.reference_mode
            )));
        }
        if !(self.beta_time <= 0.0 && self.beta_cost <= 0.0) {
            return Err(Error::Invalid("beta_time and beta_cost must be <= 0".into()));
        }
        if self.asc.values().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("ASCs must be finite".into()));
        }
        Ok(())
    }

    /// Shift all ASCs so the reference mode sits at 0.
    pub fn renormalize(&mut self) {
        let r = self.asc(self.reference_mode);
        if r != 0.0 {
            for v in self.asc.values_mut() {
                *v -= r;
            }
        }
        self.asc.insert(self.reference_mode, 0.0);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nest {
    pub name: String,
    pub modes: Vec<Mode>,
    pub mu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NestedParams {
    pub nests: Vec<Nest>,
    pub base: MnlParams,
}

impl NestedParams {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        let mut seen = ModeSet::empty();
        for n in &self.nests {
            if !(n.mu > 0.0 && n.mu <= 1.0) {
                return Err(Error::Invalid(format!("nest {}: mu must be in (0, 1]", n.name)));
            }
            for &m in &n.modes {
                if seen.contains(m) {
                    return Err(Error::Invalid(format!("mode {m} appears in two nests")));
                }
                seen.insert(m);
            }
        }
        if seen != ModeSet::all() {
            return Err(Error::Invalid("nests must partition all modes".into()));
        }
        Ok(())
    }
}

/// Level-of-service inputs for one trip (or tour).
#[derive(Clone, Debug, PartialEq)]
pub struct TripContext {
    /// hours
    pub time: [f64; N_MODES],
    /// currency
    pub cost: [f64; N_MODES],
    pub available: ModeSet,
}

impl TripContext {
    pub fn new(available: ModeSet) -> Self {
        Self {
            time: [0.0; N_MODES],
            cost: [0.0; N_MODES],
            available,
        }
    }

    pub fn with(mut self, m: Mode, time_h: f64, cost: f64) -> Self {
        self.time[m.index()] = time_h;
        self.cost[m.index()] = cost;
        self.available.insert(m);
        self
    }
}

pub fn utility(mode: Mode, ctx: &TripContext, p: &MnlParams) -> Result<f64> {
    if !ctx.available.contains(mode) {
        return Err(Error::UnavailableMode(mode));
    }
    let i = mode.index();
    Ok(p.asc(mode) + p.beta_time * ctx.time[i] + p.beta_cost * ctx.cost[i])
}

/// Per-mode probabilities; unavailable modes hold 0.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Probabilities(pub [f64; N_MODES]);

impl Probabilities {
    pub fn get(&self, m: Mode) -> f64 {
        self.0[m.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Mode, f64)> + '_ {
        Mode::ALL.into_iter().map(|m| (m, self.0[m.index()]))
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn to_map(&self) -> BTreeMap<Mode, f64> {
        self.iter().collect()
    }
}

fn softmax_into(values: &[(Mode, f64)], scale: f64, out: &mut [f64; N_MODES]) -> f64 {
    let max = values
        .iter()
        .map(|(_, v)| v / scale)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut denom = 0.0;
    for &(m, v) in values {
        let e = (v / scale - max).exp();
        out[m.index()] = e;
        denom += e;
    }
    for &(m, _) in values {
        out[m.index()] /= denom;
    }
    // log-sum-exp of the scaled values
    max + denom.ln()
}

fn available_utilities(ctx: &TripContext, p: &MnlParams) -> Vec<(Mode, f64)> {
    ctx.available
        .iter()
        .map(|m| {
            let i = m.index();
            (m, p.asc(m) + p.beta_time * ctx.time[i] + p.beta_cost * ctx.cost[i])
        })
        .collect()
}

/// Softmax over the available modes' utilities. Panics if nothing is available.
pub fn mnl_probabilities(ctx: &TripContext, p: &MnlParams) -> Probabilities {
    assert!(!ctx.available.is_empty(), "trip context has no available mode");
    let mut out = [0.0; N_MODES];
    softmax_into(&available_utilities(ctx, p), 1.0, &mut out);
    Probabilities(out)
}

/// Two-level nested logit.
pub fn nested_probabilities(ctx: &TripContext, p: &NestedParams) -> Probabilities {
    assert!(!ctx.available.is_empty(), "trip context has no available mode");
    let utils = available_utilities(ctx, &p.base);
    let mut within = [0.0; N_MODES];
    let mut upper = Vec::with_capacity(p.nests.len());
    for (k, nest) in p.nests.iter().enumerate() {
        let members: Vec<(Mode, f64)> = utils
            .iter()
            .copied()
            .filter(|(m, _)| nest.modes.contains(m))
            .collect();
        if members.is_empty() {
            continue;
        }
        let logsum = softmax_into(&members, nest.mu, &mut within);
        upper.push((k, nest.mu * logsum));
    }
    let max = upper.iter().map(|u| u.1).fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = upper.iter().map(|u| (u.1 - max).exp()).sum();
    let mut out = [0.0; N_MODES];
    for (k, v) in upper {
        let pn = (v - max).exp() / denom;
        for &m in &p.nests[k].modes {
            if ctx.available.contains(m) {
                out[m.index()] = pn * within[m.index()];
            }
        }
    }
    Probabilities(out)
}

/// Mean probabilities over a sample of contexts.
pub fn average_probabilities<F>(sample: &[TripContext], f: F) -> Probabilities
where
    F: Fn(&TripContext) -> Probabilities,
{
    let mut acc = [0.0; N_MODES];
    for ctx in sample {
        for (a, p) in acc.iter_mut().zip(f(ctx).0) {
            *a += p;
        }
    }
    let n = sample.len().max(1) as f64;
    Probabilities(acc.map(|a| a / n))
}

/// Largest per-mode share gap (fraction) accepted by [`flatten_nested`].
pub const FLATTEN_TOLERANCE: f64 = 0.005;

/// Find MNL constants reproducing the nested model's average shares on
/// `sample`, keeping the betas fixed.
pub fn flatten_nested(p: &NestedParams, sample: &[TripContext]) -> Result<MnlParams> {
    if sample.is_empty() {
        return Err(Error::Empty("flattening sample"));
    }
    p.validate()?;
    let nested = average_probabilities(sample, |c| nested_probabilities(c, p));
    let targets = CalibrationTargets::new(
        nested
            .iter()
            .filter(|(_, s)| *s > 0.0)
            .map(|(m, s)| (Observable::Share(m), s))
            .collect(),
    )?;
    let opts = CalibrationOptions {
        step: 1.0,
        tol_pp: 0.01,
        max_iter: 500,
        tie_offsets: false,
    };
    let result = calibrate_ascs(&p.base, &targets, &opts, |params| {
        let shares = average_probabilities(sample, |c| mnl_probabilities(c, params));
        Ok(Observable::share_map(&shares))
    })?;
    let worst = result.residuals.values().fold(0.0_f64, |a, r| a.max(r.abs()));
    if worst > FLATTEN_TOLERANCE {
        return Err(Error::NonConvergence {
            iterations: result.iterations,
            residuals: result
                .residuals
                .iter()
                .map(|(o, r)| (o.to_string(), *r))
                .collect(),
        });
    }
    Ok(result.params)
}

/// Sample a mode from the MNL distribution by Gumbel-max.
///
/// One Gumbel draw is consumed per mode in [`Mode::ALL`] order, whether or not
/// the mode is available, so callers sharing a stream stay aligned.
pub fn choose_mode<R: Rng + ?Sized>(ctx: &TripContext, p: &MnlParams, rng: &mut R) -> Mode {
    assert!(!ctx.available.is_empty(), "trip context has no available mode");
    let mut best = (Mode::Car, f64::NEG_INFINITY);
    for m in Mode::ALL {
        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        if !ctx.available.contains(m) {
            continue;
        }
        let i = m.index();
        let v = p.asc(m) + p.beta_time * ctx.time[i] + p.beta_cost * ctx.cost[i] - (-u.ln()).ln();
        if v > best.1 {
            best = (m, v);
        }
    }
    best.0
}

/// Trip counts and shares per mode.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeCounts(pub [u64; N_MODES]);

impl ModeCounts {
    pub fn add(&mut self, m: Mode) {
        self.0[m.index()] += 1;
    }

    pub fn get(&self, m: Mode) -> u64 {
        self.0[m.index()]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn shares(&self) -> Result<Probabilities> {
        let total = self.total();
        if total == 0 {
            return Err(Error::Empty("trip list"));
        }
        Ok(Probabilities(self.0.map(|c| c as f64 / total as f64)))
    }
}

impl FromIterator<Mode> for ModeCounts {
    fn from_iter<I: IntoIterator<Item = Mode>>(iter: I) -> Self {
        let mut c = ModeCounts::default();
        for m in iter {
            c.add(m);
        }
        c
    }
}

pub fn mode_share(trips: &[Mode]) -> Result<Probabilities> {
    trips.iter().copied().collect::<ModeCounts>().shares()
}
