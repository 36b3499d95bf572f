//! Named reopening scenarios: phase, schedule variant, capacity factor and
//! preference set, run through WFH suppression and the simulation loop.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::Observable;
use crate::choice::{MnlParams, Mode, ModeCounts};
use crate::engine::{evolve, EventLog, IterationStats, SimConfig, SimNetwork};
use crate::netio::{load_gtfs_subset, load_road_network, GtfsOptions, RoadNetwork};
use crate::population::{apply_wfh, wfh_rate, Phase, Population, ReturnSchedule};
use crate::{Error, Result};

pub const PRECOVID_FIT: &str = "precovid_fit";
pub const COVID_FIT: &str = "covid_fit";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub phase: Phase,
    /// defaults per phase, see [`ScenarioConfig::schedule_variant`]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule_variant: Option<String>,
    #[serde(default = "one")]
    pub capacity_factor: f64,
    /// label of a parameter set in the assets
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choice_params: Option<String>,
    /// overrides the matrix seed
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn one() -> f64 {
    1.0
}

impl ScenarioConfig {
    pub fn new(name: impl Into<String>, phase: Phase, capacity_factor: f64) -> Self {
        Self {
            name: name.into(),
            phase,
            schedule_variant: None,
            capacity_factor,
            choice_params: None,
            seed: None,
        }
    }

    /// Reduced timetable while closed and in the first two phases.
    pub fn schedule_variant(&self) -> &str {
        match (&self.schedule_variant, self.phase) {
            (Some(v), _) => v,
            (None, Phase::Covid | Phase::P1 | Phase::P2) => "covid",
            (None, _) => "regular",
        }
    }

    /// Pandemic-period preferences persist through every reopening phase.
    pub fn choice_params(&self) -> &str {
        match (&self.choice_params, self.phase) {
            (Some(p), _) => p,
            (None, Phase::PreCovid) => PRECOVID_FIT,
            (None, _) => COVID_FIT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Invalid("scenario name must be nonempty".into()));
        }
        if !(self.capacity_factor > 0.0 && self.capacity_factor <= 1.0) {
            return Err(Error::Invalid(format!(
                "scenario {}: capacity_factor must be in (0, 1], got {}",
                self.name, self.capacity_factor
            )));
        }
        Ok(())
    }
}

/// Everything a scenario can reference, keyed by label.
#[derive(Clone, Debug)]
pub struct Assets {
    pub population: Population,
    pub road: RoadNetwork,
    pub networks: BTreeMap<String, SimNetwork>,
    pub params: BTreeMap<String, MnlParams>,
    pub return_schedule: ReturnSchedule,
    /// files read by [`Assets::load`]
    pub files: Vec<PathBuf>,
}

impl Assets {
    /// Load an assets directory:
    ///
    /// ```text
    /// nodes.csv  links.csv  population.json  return_schedule.csv
    /// gtfs/<variant>/...    params/<label>.json
    /// ```
    pub fn load(dir: &Path, snap_radius: f64) -> Result<Self> {
        let mut files = Vec::new();
        let nodes = dir.join("nodes.csv");
        let links = dir.join("links.csv");
        let road = load_road_network(&nodes, &links)?;
        files.extend([nodes, links]);

        let mut networks = BTreeMap::new();
        for (label, sub) in sorted_entries(&dir.join("gtfs"), true)? {
            let schedule = load_gtfs_subset(&sub, &GtfsOptions::default())?;
            for f in sorted_entries(&sub, false)? {
                files.push(f.1);
            }
            networks.insert(label, SimNetwork::new(&road, &schedule, snap_radius)?);
        }

        let mut params = BTreeMap::new();
        for (label, path) in sorted_entries(&dir.join("params"), false)? {
            let Some(label) = label.strip_suffix(".json") else { continue };
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let p: MnlParams = serde_json::from_str(&text)?;
            p.validate()?;
            params.insert(label.to_string(), p);
            files.push(path);
        }

        let pop_path = dir.join("population.json");
        let population = Population::load(&pop_path)?;
        files.push(pop_path);
        let rs_path = dir.join("return_schedule.csv");
        let return_schedule = ReturnSchedule::load_csv(&rs_path)?;
        files.push(rs_path);

        Ok(Self {
            population,
            road,
            networks,
            params,
            return_schedule,
            files,
        })
    }

    pub fn network(&self, label: &str) -> Result<&SimNetwork> {
        self.networks
            .get(label)
            .ok_or_else(|| Error::Unresolved(format!("schedule variant {label:?}")))
    }

    pub fn params(&self, label: &str) -> Result<&MnlParams> {
        self.params
            .get(label)
            .ok_or_else(|| Error::Unresolved(format!("choice parameter set {label:?}")))
    }
}

fn sorted_entries(dir: &Path, dirs: bool) -> Result<Vec<(String, PathBuf)>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for e in rd {
        let e = e.map_err(|e| Error::io(dir, e))?;
        let p = e.path();
        if p.is_dir() == dirs {
            out.push((e.file_name().to_string_lossy().into_owned(), p));
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub phase: Phase,
    pub schedule_variant: String,
    pub choice_params: String,
    pub capacity_factor: f64,
    /// trips by mode in the final iteration
    pub trips: BTreeMap<Mode, u64>,
    pub shares: BTreeMap<Mode, f64>,
    pub denied_boardings: u64,
    pub abandoned_trips: u64,
    pub stuck_trips: u64,
    /// None when the population has no workers
    pub wfh_rate: Option<f64>,
    /// highest simultaneous transit load in any iteration
    pub max_onboard: u32,
    pub seed: u64,
    pub iterations: usize,
}

impl ScenarioReport {
    /// Bare report from trip counts; the remaining fields are zeroed.
    pub fn from_counts(name: impl Into<String>, phase: Phase, counts: &ModeCounts) -> Result<Self> {
        let shares = counts.shares()?;
        Ok(Self {
            name: name.into(),
            phase,
            schedule_variant: String::new(),
            choice_params: String::new(),
            capacity_factor: 1.0,
            trips: Mode::ALL.iter().map(|&m| (m, counts.get(m))).collect(),
            shares: shares.to_map(),
            denied_boardings: 0,
            abandoned_trips: 0,
            stuck_trips: 0,
            wfh_rate: None,
            max_onboard: 0,
            seed: 0,
            iterations: 0,
        })
    }

    pub fn count(&self, m: Mode) -> u64 {
        self.trips.get(&m).copied().unwrap_or(0)
    }

    pub fn share(&self, m: Mode) -> f64 {
        self.shares.get(&m).copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scenario: String,
    pub baseline: String,
    /// scenario trips / baseline trips; None where the baseline has none
    pub ratios: BTreeMap<Mode, Option<f64>>,
    /// percentage points
    pub share_delta_pp: BTreeMap<Mode, f64>,
}

impl Comparison {
    pub fn ratio(&self, m: Mode) -> Option<f64> {
        self.ratios.get(&m).copied().flatten()
    }
}

pub fn compare(baseline: &ScenarioReport, other: &ScenarioReport) -> Comparison {
    let ratios = Mode::ALL
        .iter()
        .map(|&m| {
            let b = baseline.count(m);
            (m, (b > 0).then(|| other.count(m) as f64 / b as f64))
        })
        .collect();
    let share_delta_pp = Mode::ALL
        .iter()
        .map(|&m| (m, (other.share(m) - baseline.share(m)) * 100.0))
        .collect();
    Comparison {
        scenario: other.name.clone(),
        baseline: baseline.name.clone(),
        ratios,
        share_delta_pp,
    }
}

pub fn run_scenario(cfg: &ScenarioConfig, assets: &Assets, sim: &SimConfig, seed: u64) -> Result<ScenarioReport> {
    let params = assets.params(cfg.choice_params())?;
    run_scenario_with(cfg, assets, sim, seed, params)
}

/// A scenario's report together with its per-iteration statistics and the
/// final iteration's event log.
#[derive(Clone, Debug)]
pub struct ScenarioRun {
    pub report: ScenarioReport,
    pub stats: Vec<IterationStats>,
    pub log: EventLog,
}

/// [`run_scenario`] with an explicit preference set in place of the
/// configured one; used when calibrating.
pub fn run_scenario_with(
    cfg: &ScenarioConfig,
    assets: &Assets,
    sim: &SimConfig,
    seed: u64,
    params: &MnlParams,
) -> Result<ScenarioReport> {
    run_detailed(cfg, assets, sim, seed, params).map(|r| r.report)
}

pub fn run_detailed(
    cfg: &ScenarioConfig,
    assets: &Assets,
    sim: &SimConfig,
    seed: u64,
    params: &MnlParams,
) -> Result<ScenarioRun> {
    cfg.validate()?;
    let seed = cfg.seed.unwrap_or(seed);
    let net = assets.network(cfg.schedule_variant())?;
    let sim = SimConfig {
        capacity_factor: cfg.capacity_factor,
        ..sim.clone()
    };

    let pop = apply_wfh(&assets.population, &assets.return_schedule, cfg.phase, seed)?;
    let wfh = wfh_rate(&assets.population, &pop).ok();
    let out = evolve(&pop, net, params, &sim, seed)?;
    let last = out.stats.last().expect("at least one iteration");
    if last.planned.total() == 0 {
        return Err(Error::Empty("trips in scenario"));
    }
    let mut report = ScenarioReport::from_counts(&cfg.name, cfg.phase, &last.planned)?;
    report.schedule_variant = cfg.schedule_variant().to_string();
    report.choice_params = cfg.choice_params().to_string();
    report.capacity_factor = cfg.capacity_factor;
    report.denied_boardings = last.denied_boardings;
    report.abandoned_trips = last.abandoned.total();
    report.stuck_trips = last.stuck.total();
    report.wfh_rate = wfh;
    report.max_onboard = out.max_onboard;
    report.seed = seed;
    report.iterations = sim.iterations;
    log::info!(
        "{}: {} trips, transit share {:.4}",
        cfg.name,
        last.planned.total(),
        report.share(Mode::Transit)
    );
    Ok(ScenarioRun {
        report,
        stats: out.stats,
        log: out.last_log,
    })
}

/// Every calibration observable of `report`; trip ratios are taken against
/// `baseline`, and omitted for modes the baseline never uses.
pub fn observables(report: &ScenarioReport, baseline: &ScenarioReport) -> BTreeMap<Observable, f64> {
    let mut out = BTreeMap::new();
    for m in Mode::ALL {
        out.insert(Observable::Share(m), report.share(m));
        let b = baseline.count(m);
        if b > 0 {
            let r = report.count(m) as f64 / b as f64;
            out.insert(Observable::TripsRatio(m), r);
            if m == Mode::Transit {
                out.insert(Observable::SubwayRidershipRatio, r);
            }
        }
    }
    out
}

/// A scenario matrix document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sim: SimConfig,
    pub scenarios: Vec<ScenarioConfig>,
}

impl Matrix {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixOutput {
    pub reports: Vec<ScenarioReport>,
    /// one per report, against the pre-pandemic baseline
    pub comparisons: Vec<Comparison>,
    #[serde(skip)]
    pub stats: Vec<Vec<IterationStats>>,
    /// final-iteration event log per scenario
    #[serde(skip)]
    pub logs: Vec<EventLog>,
}

impl MatrixOutput {
    pub fn get(&self, name: &str) -> Option<(&ScenarioReport, &Comparison)> {
        let i = self.reports.iter().position(|r| r.name == name)?;
        Some((&self.reports[i], &self.comparisons[i]))
    }

    /// `scenario,mode,trips,share,ratio_vs_precovid,share_delta_pp`; an
    /// undefined ratio is left empty.
    pub fn modeshare_csv(&self) -> String {
        let mut out = String::from("scenario,mode,trips,share,ratio_vs_precovid,share_delta_pp\n");
        for (r, c) in self.reports.iter().zip(&self.comparisons) {
            for m in Mode::ALL {
                let ratio = c.ratio(m).map(|v| format!("{v:.6}")).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{},{},{},{:.6},{},{:.6}",
                    r.name,
                    m,
                    r.count(m),
                    r.share(m),
                    ratio,
                    c.share_delta_pp[&m] + 0.0
                );
            }
        }
        out
    }
}

/// Run every scenario (in parallel, results in list order) and compare each
/// against the first pre-pandemic scenario in the list.
pub fn run_matrix(scenarios: &[ScenarioConfig], assets: &Assets, sim: &SimConfig, seed: u64) -> Result<MatrixOutput> {
    sim.validate()?;
    let base_idx = scenarios
        .iter()
        .position(|s| s.phase == Phase::PreCovid)
        .ok_or_else(|| Error::Invalid("scenario matrix has no precovid baseline".into()))?;
    let mut seen = std::collections::BTreeSet::new();
    for s in scenarios {
        s.validate()?;
        if !seen.insert(s.name.as_str()) {
            return Err(Error::Invalid(format!("duplicate scenario name {:?}", s.name)));
        }
        assets.network(s.schedule_variant())?;
        assets.params(s.choice_params())?;
    }
    let runs = scenarios
        .par_iter()
        .map(|s| run_detailed(s, assets, sim, seed, assets.params(s.choice_params())?))
        .collect::<Result<Vec<_>>>()?;
    let mut out = MatrixOutput {
        reports: Vec::with_capacity(runs.len()),
        comparisons: Vec::with_capacity(runs.len()),
        stats: Vec::with_capacity(runs.len()),
        logs: Vec::with_capacity(runs.len()),
    };
    for r in runs {
        out.reports.push(r.report);
        out.stats.push(r.stats);
        out.logs.push(r.log);
    }
    out.comparisons = out.reports.iter().map(|r| compare(&out.reports[base_idx], r)).collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(pairs: &[(Mode, u64)]) -> ModeCounts {
        let mut c = ModeCounts::default();
        for &(m, n) in pairs {
            c.0[m.index()] = n;
        }
        c
    }

    #[test]
    fn default_variant_and_params() {
        let s = |p| ScenarioConfig::new("x", p, 1.0);
        assert_eq!(s(Phase::PreCovid).schedule_variant(), "regular");
        assert_eq!(s(Phase::Covid).schedule_variant(), "covid");
        assert_eq!(s(Phase::P2).schedule_variant(), "covid");
        assert_eq!(s(Phase::P3).schedule_variant(), "regular");
        assert_eq!(s(Phase::PreCovid).choice_params(), PRECOVID_FIT);
        assert_eq!(s(Phase::P4).choice_params(), COVID_FIT);
        assert!(ScenarioConfig::new("x", Phase::P4, 0.0).validate().is_err());
        assert!(ScenarioConfig::new("x", Phase::P4, 1.5).validate().is_err());
    }

    #[test]
    fn comparison_ratios_and_deltas() {
        let base = counts(&[(Mode::Transit, 1000), (Mode::Car, 1000), (Mode::Walk, 500)]);
        let other = counts(&[(Mode::Transit, 730), (Mode::Car, 1420), (Mode::Walk, 500), (Mode::Bike, 20)]);
        let b = ScenarioReport::from_counts("precovid", Phase::PreCovid, &base).unwrap();
        let o = ScenarioReport::from_counts("p4", Phase::P4, &other).unwrap();
        let c = compare(&b, &o);
        assert!((c.ratio(Mode::Transit).unwrap() - 0.73).abs() < 1e-12);
        assert!((c.ratio(Mode::Car).unwrap() - 1.42).abs() < 1e-12);
        assert_eq!(c.ratio(Mode::Bike), None);
        let sum: f64 = c.share_delta_pp.values().sum();
        assert!(sum.abs() < 1e-9);

        let same = compare(&b, &b);
        for m in Mode::ALL {
            if b.count(m) > 0 {
                assert_eq!(same.ratio(m), Some(1.0));
            }
            assert_eq!(same.share_delta_pp[&m], 0.0);
        }
    }

    #[test]
    fn matrix_json_defaults() {
        let m: Matrix = serde_json::from_str(
            r#"{"seed": 3, "scenarios": [{"name": "base", "phase": "precovid"},
                {"name": "p4_s2", "phase": "p4", "capacity_factor": 0.5}]}"#,
        )
        .unwrap();
        assert_eq!(m.seed, 3);
        assert_eq!(m.sim, SimConfig::default());
        assert_eq!(m.scenarios[0].capacity_factor, 1.0);
        assert_eq!(m.scenarios[1].capacity_factor, 0.5);
    }
}
