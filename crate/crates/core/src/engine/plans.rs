use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::choice::{choose_mode, MnlParams, Mode, ModeSet, TripContext};
use crate::population::{ActivityKind, Agent, Population};
use crate::seeding::derive_seed;
use crate::Result;

use super::network::SimNetwork;
use super::router::{route_trip, Route, TransitFeedback, TravelTimes, TripLeg};
use super::SimConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct PlannedTrip {
    pub origin: usize,
    pub dest: usize,
    /// index of the home-anchored tour this trip belongs to
    pub tour: usize,
    pub route: Route,
}

/// An agent's routed trips for the day; one mode per tour.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Plan {
    pub trips: Vec<PlannedTrip>,
}

impl Plan {
    pub fn modes(&self) -> impl Iterator<Item = Mode> + '_ {
        self.trips.iter().map(|t| t.route.mode)
    }
}

/// An agent's trips grouped by tour.
fn tours(agent: &Agent, net: &SimNetwork) -> Result<Vec<Vec<PlannedTripInput>>> {
    let mut out: Vec<Vec<PlannedTripInput>> = Vec::new();
    for (k, pair) in agent.agenda.windows(2).enumerate() {
        if k == 0 || pair[0].kind == ActivityKind::Home {
            out.push(Vec::new());
        }
        out.last_mut().expect("tour opened").push(PlannedTripInput {
            origin: net.node_idx(&pair[0].node)?,
            dest: net.node_idx(&pair[1].node)?,
            depart: f64::from(pair[0].end_time.unwrap_or(0)),
        });
    }
    Ok(out)
}

/// Choice context for one tour, plus the per-mode routes that produced it.
/// Modes that cannot serve every trip of the tour are left unavailable.
pub fn build_tour_context(
    trips: &[&PlannedTripInput],
    net: &SimNetwork,
    tt: &TravelTimes,
    feedback: &TransitFeedback,
    cfg: &SimConfig,
) -> (TripContext, Vec<Option<Vec<Route>>>) {
    let allowed = cfg.mode_set();
    let mut ctx = TripContext::new(ModeSet::empty());
    let mut routes: Vec<Option<Vec<Route>>> = vec![None; Mode::ALL.len()];
    let denial_hours = if cfg.score_beta_travel > 0.0 {
        cfg.denied_boarding_penalty / cfg.score_beta_travel
    } else {
        0.0
    };
    let c = &cfg.costs;
    for m in allowed.iter() {
        let mut rs = Vec::with_capacity(trips.len());
        for s in trips {
            match route_trip(net, m, s.origin, s.dest, s.depart, tt, feedback, cfg) {
                Ok(r) => rs.push(r),
                Err(_) => break,
            }
        }
        if rs.len() != trips.len() {
            continue;
        }
        let moving = rs.iter().filter(|r| !matches!(r.leg, TripLeg::Stay)).count() as f64;
        let km: f64 = rs.iter().map(|r| r.distance / 1000.0).sum();
        let mut hours: f64 = rs.iter().map(|r| r.duration / 3600.0).sum();
        let cost = match m {
            Mode::Car if moving > 0.0 => c.car_fixed + c.car_per_km * km,
            Mode::Transit => {
                hours += denial_hours * rs.iter().map(|r| r.expected_denials).sum::<f64>();
                c.transit_fare * moving
            }
            Mode::Ridehail => c.ridehail_base * moving + c.ridehail_per_km * km,
            Mode::Bikeshare => c.bikeshare_base * moving,
            _ => 0.0,
        };
        ctx = ctx.with(m, hours, cost);
        routes[m.index()] = Some(rs);
    }
    (ctx, routes)
}

/// Origin, destination and planned departure of one trip.
pub struct PlannedTripInput {
    pub origin: usize,
    pub dest: usize,
    pub depart: f64,
}

/// Draw a mode for every tour of `agent` and route its trips.
pub fn replan_agent(
    agent: &Agent,
    net: &SimNetwork,
    params: &MnlParams,
    tt: &TravelTimes,
    feedback: &TransitFeedback,
    cfg: &SimConfig,
    rng_seed: u64,
) -> Result<Plan> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut trips = Vec::with_capacity(agent.trip_count());
    for (tour, inputs) in tours(agent, net)?.into_iter().enumerate() {
        let refs: Vec<&PlannedTripInput> = inputs.iter().collect();
        let (ctx, mut routes) = build_tour_context(&refs, net, tt, feedback, cfg);
        if ctx.available.is_empty() {
            let s = &inputs[0];
            return Err(crate::Error::NoPath {
                mode: cfg.available_modes[0],
                from: net.road.nodes()[s.origin].id.clone(),
                to: net.road.nodes()[s.dest].id.clone(),
            });
        }
        let mode = choose_mode(&ctx, params, &mut rng);
        let rs = routes[mode.index()].take().expect("chosen mode is available");
        for (inp, route) in inputs.iter().zip(rs) {
            trips.push(PlannedTrip {
                origin: inp.origin,
                dest: inp.dest,
                tour,
                route,
            });
        }
    }
    Ok(Plan { trips })
}

/// Choice context and trip count of every tour `agent` makes.
pub fn tour_contexts(
    agent: &Agent,
    net: &SimNetwork,
    tt: &TravelTimes,
    feedback: &TransitFeedback,
    cfg: &SimConfig,
) -> Result<Vec<(TripContext, usize)>> {
    Ok(tours(agent, net)?
        .iter()
        .map(|inputs| {
            let refs: Vec<&PlannedTripInput> = inputs.iter().collect();
            (build_tour_context(&refs, net, tt, feedback, cfg).0, inputs.len())
        })
        .collect())
}

/// Initial plans from free-flow conditions. Agent `i` draws from a stream
/// seeded by `(seed, 0, i)`, so results do not depend on thread count.
pub fn initial_plans(
    pop: &Population,
    net: &SimNetwork,
    params: &MnlParams,
    cfg: &SimConfig,
    seed: u64,
) -> Result<Vec<Plan>> {
    let tt = TravelTimes::free_flow(net, cfg.travel_time_bin, cfg.end_time);
    let fb = TransitFeedback::empty(cfg.travel_time_bin);
    pop.agents
        .par_iter()
        .enumerate()
        .map(|(i, a)| replan_agent(a, net, params, &tt, &fb, cfg, derive_seed(seed, &[0, i as u64])))
        .collect()
}
