//! Plan execution on the multimodal network and the iterative
//! execute → score → replan loop.

mod evolve;
mod mobsim;
mod network;
mod plans;
mod router;
mod scoring;

pub use evolve::{evolve, evolve_from, EvolveOutput};
pub use mobsim::{run_mobsim, EventKind, EventLog, Location, SimEvent, MobsimOutput};
pub use network::{Pattern, Run, SimNetwork, SimStop};
pub use plans::{build_tour_context, initial_plans, replan_agent, tour_contexts, Plan, PlannedTrip, PlannedTripInput};
pub use router::{route_trip, Route, TransitFeedback, TravelTimes, TripLeg};
pub use scoring::score_plans;

use serde::{Deserialize, Serialize};

use crate::choice::{Mode, ModeCounts, ModeSet};
use crate::{Error, Result, MAX_TIME};

/// Per-mode monetary costs and fixed time overheads used to build choice contexts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModeCosts {
    pub car_per_km: f64,
    pub car_fixed: f64,
    pub transit_fare: f64,
    pub ridehail_base: f64,
    pub ridehail_per_km: f64,
    /// seconds spent waiting for a pickup
    pub ridehail_wait: f64,
    pub bikeshare_base: f64,
    /// seconds spent reaching a dock
    pub bikeshare_access: f64,
}

impl Default for ModeCosts {
    fn default() -> Self {
        Self {
            car_per_km: 0.3,
            car_fixed: 2.0,
            transit_fare: 2.75,
            ridehail_base: 4.0,
            ridehail_per_km: 1.5,
            ridehail_wait: 300.0,
            bikeshare_base: 1.5,
            bikeshare_access: 180.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// seconds; event times are rounded up to a multiple of this
    pub timestep: u32,
    pub iterations: usize,
    pub replan_fraction: f64,
    /// seconds per travel-time bin fed back to the router
    pub travel_time_bin: u32,
    /// multiplier on transit vehicle capacity
    pub capacity_factor: f64,
    /// utils per hour of activity performed
    pub score_beta_perf: f64,
    /// utils per hour travelled (subtracted)
    pub score_beta_travel: f64,
    /// utils per denied boarding (subtracted)
    pub denied_boarding_penalty: f64,
    /// seconds an agent waits at a stop before giving up after a denial
    pub max_wait: u32,
    /// seconds a blocked vehicle waits before it is removed as stuck
    pub stuck_time: u32,
    /// m/s
    pub walk_speed: f64,
    /// m/s
    pub bike_speed: f64,
    pub snap_radius: f64,
    /// simulation end, seconds from midnight
    pub end_time: u32,
    pub available_modes: Vec<Mode>,
    pub costs: ModeCosts,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            timestep: 1,
            iterations: 10,
            replan_fraction: 0.1,
            travel_time_bin: 900,
            capacity_factor: 1.0,
            score_beta_perf: 6.0,
            score_beta_travel: 6.0,
            denied_boarding_penalty: 2.0,
            max_wait: 3600,
            stuck_time: 900,
            walk_speed: 1.34,
            bike_speed: 4.0,
            snap_radius: crate::netio::DEFAULT_SNAP_RADIUS,
            end_time: MAX_TIME,
            available_modes: Mode::ALL.to_vec(),
            costs: ModeCosts::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Invalid(format!("sim config: {m}")));
        if self.iterations < 1 {
            return fail("iterations must be >= 1");
        }
        if !(self.replan_fraction > 0.0 && self.replan_fraction < 1.0) {
            return fail("replan_fraction must be in (0, 1)");
        }
        if !(self.capacity_factor > 0.0 && self.capacity_factor <= 1.0) {
            return fail("capacity_factor must be in (0, 1]");
        }
        if self.timestep == 0 || self.travel_time_bin == 0 {
            return fail("timestep and travel_time_bin must be positive");
        }
        if !(self.walk_speed > 0.0 && self.bike_speed > 0.0) {
            return fail("walk and bike speeds must be positive");
        }
        if self.available_modes.is_empty() {
            return fail("at least one mode must be available");
        }
        Ok(())
    }

    pub fn mode_set(&self) -> ModeSet {
        self.available_modes.iter().copied().collect()
    }

    /// Round a time up to the simulation timestep.
    pub(crate) fn quantize(&self, t: f64) -> u32 {
        let step = f64::from(self.timestep);
        ((t / step).ceil() * step) as u32
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub average_score: f64,
    /// planned trips by chosen mode
    pub planned: ModeCounts,
    pub arrived: ModeCounts,
    pub stuck: ModeCounts,
    /// trips given up after repeated boarding denials
    pub abandoned: ModeCounts,
    pub denied_boardings: u64,
}

impl IterationStats {
    pub const CSV_HEADER: &'static str = "iteration,average_score,mode,planned,arrived,stuck,abandoned,denied_boardings";

    /// One CSV row per mode.
    pub fn csv_rows(&self) -> Vec<String> {
        Mode::ALL
            .iter()
            .map(|&m| {
                format!(
                    "{},{:.6},{},{},{},{},{},{}",
                    self.iteration,
                    self.average_score,
                    m,
                    self.planned.get(m),
                    self.arrived.get(m),
                    self.stuck.get(m),
                    self.abandoned.get(m),
                    self.denied_boardings
                )
            })
            .collect()
    }
}

pub fn stats_csv(stats: &[IterationStats]) -> String {
    let mut out = String::from(IterationStats::CSV_HEADER);
    out.push('\n');
    for s in stats {
        for row in s.csv_rows() {
            out.push_str(&row);
            out.push('\n');
        }
    }
    out
}
