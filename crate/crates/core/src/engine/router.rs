//! Time-dependent least-duration routing for road modes, constant-speed
//! routing for walk and bike, and schedule-based transit legs.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};

use crate::choice::Mode;
use crate::{Error, Result};

use super::mobsim::{EventKind, EventLog, Location};
use super::network::SimNetwork;
use super::SimConfig;

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct OrdF64(pub f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Per-link, per-time-bin travel times observed in an iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct TravelTimes {
    bin: u32,
    n_bins: usize,
    tt: Vec<f64>,
}

impl TravelTimes {
    pub fn free_flow(net: &SimNetwork, bin: u32, end_time: u32) -> Self {
        let n_bins = (end_time / bin + 1) as usize;
        let tt = net
            .link_fft
            .iter()
            .flat_map(|&f| std::iter::repeat_n(f64::from(f), n_bins))
            .collect();
        Self { bin, n_bins, tt }
    }

    /// Mean traversal time per entry bin; bins without traffic stay free-flow.
    pub fn from_events(net: &SimNetwork, log: &EventLog, bin: u32, end_time: u32) -> Self {
        let mut out = Self::free_flow(net, bin, end_time);
        let mut sums: HashMap<(usize, usize), (f64, u32)> = HashMap::new();
        let mut entered: HashMap<(u32, usize), u32> = HashMap::new();
        for e in &log.events {
            let Location::Link(link) = e.loc else { continue };
            match e.kind {
                EventKind::EnterLink => {
                    entered.insert((e.agent, link), e.time);
                }
                EventKind::LeaveLink => {
                    if let Some(t0) = entered.remove(&(e.agent, link)) {
                        let s = sums.entry((link, out.bin_of(t0))).or_default();
                        s.0 += f64::from(e.time - t0);
                        s.1 += 1;
                    }
                }
                _ => {}
            }
        }
        for ((link, b), (sum, n)) in sums {
            // never faster than free flow
            let ff = f64::from(net.link_fft[link]);
            out.tt[link * out.n_bins + b] = (sum / f64::from(n)).max(ff);
        }
        out
    }

    fn bin_of(&self, t: u32) -> usize {
        ((t / self.bin) as usize).min(self.n_bins - 1)
    }

    pub fn get(&self, link: usize, t: f64) -> f64 {
        let b = self.bin_of(t.max(0.0) as u32);
        self.tt[link * self.n_bins + b]
    }

    /// Override one link's time in every bin.
    pub fn set_all(&mut self, link: usize, secs: f64) {
        for v in &mut self.tt[link * self.n_bins..(link + 1) * self.n_bins] {
            *v = secs;
        }
    }
}

/// Observed extra waiting (beyond the timetable) and denials per
/// boarding position and time bin.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TransitFeedback {
    bin: u32,
    cells: HashMap<(usize, usize, u32), (f64, f64, u32)>,
}

impl TransitFeedback {
    pub fn empty(bin: u32) -> Self {
        Self {
            bin,
            cells: HashMap::new(),
        }
    }

    pub(crate) fn record(&mut self, pattern: usize, pos: usize, arrive: u32, extra_wait: f64, denials: u32) {
        let c = self
            .cells
            .entry((pattern, pos, arrive / self.bin))
            .or_default();
        c.0 += extra_wait;
        c.1 += f64::from(denials);
        c.2 += 1;
    }

    /// (mean extra wait seconds, mean denials) for agents reaching the stop at `t`.
    pub fn get(&self, pattern: usize, pos: usize, t: u32) -> (f64, f64) {
        match self.cells.get(&(pattern, pos, t / self.bin.max(1))) {
            Some(&(w, d, n)) => (w / f64::from(n), d / f64::from(n)),
            None => (0.0, 0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TripLeg {
    /// origin and destination coincide
    Stay,
    Road {
        links: Vec<usize>,
    },
    Transit {
        pattern: usize,
        board: usize,
        alight: usize,
        access: u32,
        egress: u32,
    },
    Teleport {
        duration: u32,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Route {
    pub mode: Mode,
    pub leg: TripLeg,
    /// expected door-to-door seconds
    pub duration: f64,
    /// meters
    pub distance: f64,
    /// expected denied boardings (transit only)
    pub expected_denials: f64,
}

fn no_path(net: &SimNetwork, mode: Mode, o: usize, d: usize) -> Error {
    Error::NoPath {
        mode,
        from: net.road.nodes()[o].id.clone(),
        to: net.road.nodes()[d].id.clone(),
    }
}

/// Least expected duration path for a road mode, departing at `depart`.
fn road_path(net: &SimNetwork, o: usize, d: usize, depart: f64, tt: &TravelTimes) -> Option<(Vec<usize>, f64, f64)> {
    let n = net.node_count();
    let mut best = vec![f64::INFINITY; n];
    let mut via: Vec<Option<usize>> = vec![None; n];
    best[o] = depart;
    let mut heap = BinaryHeap::from([Reverse((OrdF64(depart), o))]);
    while let Some(Reverse((OrdF64(t), u))) = heap.pop() {
        if t > best[u] {
            continue;
        }
        if u == d {
            break;
        }
        for &l in net.road.out_links(u) {
            if !net.link_car[l] {
                continue;
            }
            let v = net.road.endpoints(l).1;
            let arr = t + tt.get(l, t);
            if arr < best[v] {
                best[v] = arr;
                via[v] = Some(l);
                heap.push(Reverse((OrdF64(arr), v)));
            }
        }
    }
    if !best[d].is_finite() {
        return None;
    }
    let mut links = Vec::new();
    let mut cur = d;
    while let Some(l) = via[cur] {
        links.push(l);
        cur = net.road.endpoints(l).0;
    }
    links.reverse();
    let dist = links.iter().map(|&l| net.road.links()[l].length).sum();
    Some((links, best[d] - depart, dist))
}

fn transit_leg(
    net: &SimNetwork,
    o: usize,
    d: usize,
    depart: f64,
    feedback: &TransitFeedback,
    cfg: &SimConfig,
) -> Option<Route> {
    let mut best: Option<(f64, Route)> = None;
    let penalty_s = if cfg.score_beta_travel > 0.0 {
        cfg.denied_boarding_penalty / cfg.score_beta_travel * 3600.0
    } else {
        0.0
    };
    for (pi, p) in net.patterns.iter().enumerate() {
        for (bi, &bs) in p.stops.iter().enumerate() {
            let access_m = net.walk_distance(o, net.stops[bs].node);
            if !access_m.is_finite() {
                continue;
            }
            let access = (access_m / cfg.walk_speed).ceil() as u32;
            let at_stop = depart.ceil() as u32 + access;
            let Some((_, run)) = p.next_departure(bi, at_stop) else { continue };
            let (extra, denials) = feedback.get(pi, bi, at_stop);
            for ai in bi + 1..p.stops.len() {
                let alight_node = net.stops[p.stops[ai]].node;
                if alight_node == net.stops[bs].node {
                    continue;
                }
                let egress_m = net.walk_distance(alight_node, d);
                if !egress_m.is_finite() {
                    continue;
                }
                let egress = (egress_m / cfg.walk_speed).ceil() as u32;
                let arrive = p.runs[run].times[ai].0;
                let duration = f64::from(arrive + egress) + extra - depart;
                let generalized = duration + denials * penalty_s;
                if best.as_ref().is_none_or(|(g, _)| generalized < *g) {
                    best = Some((
                        generalized,
                        Route {
                            mode: Mode::Transit,
                            leg: TripLeg::Transit {
                                pattern: pi,
                                board: bi,
                                alight: ai,
                                access,
                                egress,
                            },
                            duration,
                            distance: access_m + egress_m,
                            expected_denials: denials,
                        },
                    ));
                }
            }
        }
    }
    best.map(|(_, r)| r)
}

/// Route one trip. Road modes use `tt` (free-flow on the first iteration);
/// walk and bike move at constant speed over shortest link distance.
#[allow(clippy::too_many_arguments)]
pub fn route_trip(
    net: &SimNetwork,
    mode: Mode,
    origin: usize,
    dest: usize,
    depart: f64,
    tt: &TravelTimes,
    feedback: &TransitFeedback,
    cfg: &SimConfig,
) -> Result<Route> {
    if origin == dest {
        return Ok(Route {
            mode,
            leg: TripLeg::Stay,
            duration: 0.0,
            distance: 0.0,
            expected_denials: 0.0,
        });
    }
    let teleport = |speed: f64, overhead: f64| -> Result<Route> {
        let dist = net.walk_distance(origin, dest);
        if !dist.is_finite() {
            return Err(no_path(net, mode, origin, dest));
        }
        let duration = (dist / speed + overhead).ceil();
        Ok(Route {
            mode,
            leg: TripLeg::Teleport {
                duration: duration as u32,
            },
            duration,
            distance: dist,
            expected_denials: 0.0,
        })
    };
    match mode {
        Mode::Car | Mode::Ridehail => {
            let wait = if mode == Mode::Ridehail {
                cfg.costs.ridehail_wait
            } else {
                0.0
            };
            let (links, duration, distance) =
                road_path(net, origin, dest, depart + wait, tt).ok_or_else(|| no_path(net, mode, origin, dest))?;
            Ok(Route {
                mode,
                leg: TripLeg::Road { links },
                duration: duration + wait,
                distance,
                expected_denials: 0.0,
            })
        }
        Mode::Walk => teleport(cfg.walk_speed, 0.0),
        Mode::Bike => teleport(cfg.bike_speed, 0.0),
        Mode::Bikeshare => teleport(cfg.bike_speed, cfg.costs.bikeshare_access),
        Mode::Transit => transit_leg(net, origin, dest, depart, feedback, cfg)
            .ok_or_else(|| no_path(net, mode, origin, dest)),
    }
}
