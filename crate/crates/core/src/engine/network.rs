use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use crate::netio::{validate_network, LinkMode, RoadNetwork, TransitSchedule};
use crate::{Error, Result};

use super::router::OrdF64;

/// Effective vehicle length for storage capacity, meters.
pub const VEHICLE_SPACE: f64 = 7.5;

#[derive(Clone, Debug)]
pub struct SimStop {
    pub id: String,
    pub node: usize,
}

/// One vehicle run of a pattern.
#[derive(Clone, Debug)]
pub struct Run {
    pub trip_id: String,
    /// (arrival, departure) at each pattern position
    pub times: Vec<(u32, u32)>,
}

/// Trips of one route sharing the same stop sequence.
#[derive(Clone, Debug)]
pub struct Pattern {
    pub route: usize,
    pub route_id: String,
    pub capacity: u32,
    pub stops: Vec<usize>,
    pub runs: Vec<Run>,
    /// per position: (departure time, run index) sorted
    pub departures: Vec<Vec<(u32, usize)>>,
}

impl Pattern {
    /// First run leaving position `pos` at or after `t`.
    pub fn next_departure(&self, pos: usize, t: u32) -> Option<(u32, usize)> {
        let deps = &self.departures[pos];
        let i = deps.partition_point(|(d, _)| *d < t);
        deps.get(i).copied()
    }
}

/// Road and transit network in the index-based form the simulator uses.
#[derive(Clone, Debug)]
pub struct SimNetwork {
    pub road: RoadNetwork,
    /// free-flow traversal, whole seconds (rounded up)
    pub link_fft: Vec<u32>,
    pub link_storage: Vec<usize>,
    /// vehicles per second
    pub link_flow: Vec<f64>,
    pub link_car: Vec<bool>,
    /// all-pairs shortest walking distance, links treated as undirected
    walk_dist: Vec<f64>,
    pub stops: Vec<SimStop>,
    pub patterns: Vec<Pattern>,
}

impl SimNetwork {
    pub fn new(road: &RoadNetwork, schedule: &TransitSchedule, snap_radius: f64) -> Result<Self> {
        let links = road.links();
        let link_fft = links.iter().map(|l| l.freeflow_time().ceil() as u32).collect();
        let link_storage = links
            .iter()
            .map(|l| ((l.length / VEHICLE_SPACE).floor() as usize).max(1))
            .collect();
        let link_flow = links.iter().map(|l| l.capacity / 3600.0).collect();
        let link_car = links.iter().map(|l| l.modes.contains(&LinkMode::Car)).collect();

        let n = road.nodes().len();
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, l) in links.iter().enumerate() {
            let (f, t) = road.endpoints(i);
            adj[f].push((t, l.length));
            adj[t].push((f, l.length));
        }
        let mut walk_dist = vec![f64::INFINITY; n * n];
        for s in 0..n {
            let row = &mut walk_dist[s * n..(s + 1) * n];
            row[s] = 0.0;
            let mut heap = BinaryHeap::from([Reverse((OrdF64(0.0), s))]);
            while let Some(Reverse((OrdF64(d), u))) = heap.pop() {
                if d > row[u] {
                    continue;
                }
                for &(v, w) in &adj[u] {
                    if d + w < row[v] {
                        row[v] = d + w;
                        heap.push(Reverse((OrdF64(d + w), v)));
                    }
                }
            }
        }

        let report = validate_network(road, schedule, snap_radius);
        let snapped: BTreeMap<&str, usize> = report
            .snaps
            .iter()
            .map(|s| (s.stop_id.as_str(), road.node_idx(&s.node_id).expect("snapped to a known node")))
            .collect();
        let mut stops = Vec::new();
        let mut stop_index = BTreeMap::new();
        for s in &schedule.stops {
            if let Some(&node) = snapped.get(s.id.as_str()) {
                stop_index.insert(s.id.as_str(), stops.len());
                stops.push(SimStop { id: s.id.clone(), node });
            } else {
                log::warn!("stop {} could not be snapped and is not served", s.id);
            }
        }

        let mut by_key: BTreeMap<(usize, Vec<usize>), Vec<Run>> = BTreeMap::new();
        for (ri, route) in schedule.routes.iter().enumerate() {
            for trip in &route.trips {
                let served: Vec<_> = trip
                    .stop_times
                    .iter()
                    .filter_map(|st| stop_index.get(st.stop_id.as_str()).map(|&i| (i, st)))
                    .collect();
                if served.len() < 2 {
                    continue;
                }
                let key = (ri, served.iter().map(|(i, _)| *i).collect());
                by_key.entry(key).or_default().push(Run {
                    trip_id: trip.trip_id.clone(),
                    times: served.iter().map(|(_, st)| (st.arrival, st.departure)).collect(),
                });
            }
        }
        let patterns = by_key
            .into_iter()
            .map(|((ri, stop_seq), runs)| {
                let departures = (0..stop_seq.len())
                    .map(|pos| {
                        let mut d: Vec<(u32, usize)> =
                            runs.iter().enumerate().map(|(k, r)| (r.times[pos].1, k)).collect();
                        d.sort_unstable();
                        d
                    })
                    .collect();
                let route = &schedule.routes[ri];
                Pattern {
                    route: ri,
                    route_id: route.route_id.clone(),
                    capacity: route.vehicle_capacity,
                    stops: stop_seq,
                    runs,
                    departures,
                }
            })
            .collect();

        if n == 0 {
            return Err(Error::Invalid("road network has no nodes".into()));
        }
        Ok(Self {
            road: road.clone(),
            link_fft,
            link_storage,
            link_flow,
            link_car,
            walk_dist,
            stops,
            patterns,
        })
    }

    pub fn node_count(&self) -> usize {
        self.road.nodes().len()
    }

    pub fn walk_distance(&self, a: usize, b: usize) -> f64 {
        self.walk_dist[a * self.node_count() + b]
    }

    pub fn node_idx(&self, id: &str) -> Result<usize> {
        self.road
            .node_idx(id)
            .ok_or_else(|| Error::Unresolved(format!("node {id:?} is not in the road network")))
    }
}
