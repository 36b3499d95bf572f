//! Road network CSV and GTFS-subset loaders.
//!
//! Coordinates are planar meters throughout; any projection from geographic
//! coordinates has to happen before the files reach this module.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, MAX_TIME};

/// Modes a road link can carry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkMode {
    Car,
    Bus,
}

impl FromStr for LinkMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "car" => Ok(LinkMode::Car),
            "bus" => Ok(LinkMode::Bus),
            other => Err(format!("unknown link mode {other:?}")),
        }
    }
}

impl fmt::Display for LinkMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinkMode::Car => "car",
            LinkMode::Bus => "bus",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: String,
    pub from: String,
    pub to: String,
    /// meters
    pub length: f64,
    /// vehicles per hour
    pub capacity: f64,
    /// meters per second
    pub freespeed: f64,
    pub modes: BTreeSet<LinkMode>,
}

impl Link {
    pub fn freeflow_time(&self) -> f64 {
        self.length / self.freespeed
    }
}

/// Validated road network with adjacency indices.
#[derive(Clone, Debug, PartialEq)]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    links: Vec<Link>,
    node_index: HashMap<String, usize>,
    endpoints: Vec<(usize, usize)>,
    out_links: Vec<Vec<usize>>,
}

impl RoadNetwork {
    pub fn new(nodes: Vec<Node>, links: Vec<Link>) -> Result<Self> {
        let mut node_index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if !n.x.is_finite() || !n.y.is_finite() {
                return Err(Error::Invalid(format!("node {} has non-finite coordinates", n.id)));
            }
            if node_index.insert(n.id.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate node_id {:?}", n.id)));
            }
        }
        let mut seen = BTreeSet::new();
        let mut endpoints = Vec::with_capacity(links.len());
        let mut out_links = vec![Vec::new(); nodes.len()];
        for (i, l) in links.iter().enumerate() {
            if !seen.insert(l.id.as_str()) {
                return Err(Error::Invalid(format!("duplicate link_id {:?}", l.id)));
            }
            let lookup = |id: &str| {
                node_index.get(id).copied().ok_or_else(|| Error::DanglingNode {
                    link: l.id.clone(),
                    node: id.to_string(),
                })
            };
            let (f, t) = (lookup(&l.from)?, lookup(&l.to)?);
            for (name, v) in [
                ("length", l.length),
                ("capacity", l.capacity),
                ("freespeed", l.freespeed),
            ] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::Invalid(format!("link {}: {name} must be positive, got {v}", l.id)));
                }
            }
            endpoints.push((f, t));
            out_links[f].push(i);
        }
        Ok(Self {
            nodes,
            links,
            node_index,
            endpoints,
            out_links,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node_idx(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub fn endpoints(&self, link: usize) -> (usize, usize) {
        self.endpoints[link]
    }

    pub fn out_links(&self, node: usize) -> &[usize] {
        &self.out_links[node]
    }

    /// Nearest node to a point, ties broken by node order.
    pub fn nearest_node(&self, x: f64, y: f64) -> Option<(usize, f64)> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (i, (n.x - x).hypot(n.y - y)))
            .fold(None, |best: Option<(usize, f64)>, cur| match best {
                Some(b) if b.1 <= cur.1 => Some(b),
                _ => Some(cur),
            })
    }

    pub fn write_csv(&self, nodes_file: &Path, links_file: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(nodes_file)?;
        w.write_record(["node_id", "x", "y"])?;
        for n in &self.nodes {
            w.write_record([n.id.clone(), n.x.to_string(), n.y.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(nodes_file, e))?;

        let mut w = csv::Writer::from_path(links_file)?;
        w.write_record([
            "link_id",
            "from_node",
            "to_node",
            "length_m",
            "capacity_vph",
            "freespeed_mps",
            "modes",
        ])?;
        for l in &self.links {
            let modes: Vec<String> = l.modes.iter().map(|m| m.to_string()).collect();
            w.write_record([
                l.id.clone(),
                l.from.clone(),
                l.to.clone(),
                l.length.to_string(),
                l.capacity.to_string(),
                l.freespeed.to_string(),
                modes.join("|"),
            ])?;
        }
        w.flush().map_err(|e| Error::io(links_file, e))?;
        Ok(())
    }
}

/// A CSV table with named columns and 1-based source line numbers.
struct Table {
    file: String,
    columns: HashMap<String, usize>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path, required: &[&str]) -> Result<Self> {
        let file = path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(f);
        let headers = rdr
            .headers()
            .map_err(|e| Error::parse(&file, 1, e.to_string()))?
            .clone();
        let columns: HashMap<String, usize> = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim_start_matches('\u{feff}').to_string(), i))
            .collect();
        for r in required {
            if !columns.contains_key(*r) {
                return Err(Error::parse(&file, 1, format!("missing required column {r:?}")));
            }
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                Error::parse(&file, line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.iter().all(str::is_empty) {
                continue;
            }
            rows.push((line, rec));
        }
        Ok(Self { file, columns, rows })
    }

    fn get<'r>(&self, rec: &'r csv::StringRecord, line: u64, col: &str) -> Result<&'r str> {
        let idx = self.columns[col];
        rec.get(idx)
            .ok_or_else(|| Error::parse(&self.file, line, format!("missing field {col:?}")))
    }

    fn opt<'r>(&self, rec: &'r csv::StringRecord, col: &str) -> Option<&'r str> {
        self.columns
            .get(col)
            .and_then(|&i| rec.get(i))
            .filter(|s| !s.is_empty())
    }

    fn num<T: FromStr>(&self, rec: &csv::StringRecord, line: u64, col: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let raw = self.get(rec, line, col)?;
        raw.parse()
            .map_err(|e| Error::parse(&self.file, line, format!("column {col}: {raw:?}: {e}")))
    }
}

pub fn load_road_network(nodes_file: &Path, links_file: &Path) -> Result<RoadNetwork> {
    let t = Table::read(nodes_file, &["node_id", "x", "y"])?;
    let mut nodes = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        nodes.push(Node {
            id: t.get(rec, *line, "node_id")?.to_string(),
            x: t.num(rec, *line, "x")?,
            y: t.num(rec, *line, "y")?,
        });
    }

    let t = Table::read(
        links_file,
        &[
            "link_id",
            "from_node",
            "to_node",
            "length_m",
            "capacity_vph",
            "freespeed_mps",
            "modes",
        ],
    )?;
    let mut links = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        let modes = t
            .get(rec, *line, "modes")?
            .split('|')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e: String| Error::parse(&t.file, *line, e)))
            .collect::<Result<BTreeSet<_>>>()?;
        let link = Link {
            id: t.get(rec, *line, "link_id")?.to_string(),
            from: t.get(rec, *line, "from_node")?.to_string(),
            to: t.get(rec, *line, "to_node")?.to_string(),
            length: t.num(rec, *line, "length_m")?,
            capacity: t.num(rec, *line, "capacity_vph")?,
            freespeed: t.num(rec, *line, "freespeed_mps")?,
            modes,
        };
        for (name, v) in [
            ("length_m", link.length),
            ("capacity_vph", link.capacity),
            ("freespeed_mps", link.freespeed),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::parse(&t.file, *line, format!("{name} must be positive, got {v}")));
            }
        }
        links.push(link);
    }
    RoadNetwork::new(nodes, links)
}

// ---------------------------------------------------------------------------
// transit

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub id: String,
    pub x: f64,
    pub y: f64,
    /// Explicit road node for this stop; otherwise it is snapped.
    pub node: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopTime {
    pub stop_id: String,
    pub arrival: u32,
    pub departure: u32,
    pub sequence: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitTrip {
    pub trip_id: String,
    pub service_id: String,
    pub stop_times: Vec<StopTime>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitRoute {
    pub route_id: String,
    pub route_type: u32,
    /// persons per vehicle
    pub vehicle_capacity: u32,
    pub trips: Vec<TransitTrip>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransitSchedule {
    pub stops: Vec<Stop>,
    pub routes: Vec<TransitRoute>,
}

impl TransitSchedule {
    pub fn trip_count(&self) -> usize {
        self.routes.iter().map(|r| r.trips.len()).sum()
    }

    pub fn stop(&self, id: &str) -> Option<&Stop> {
        self.stops.iter().find(|s| s.id == id)
    }

    /// Write the schedule back out as a GTFS-subset feed.
    pub fn write_gtfs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut w = csv::Writer::from_path(dir.join("stops.txt"))?;
        w.write_record(["stop_id", "stop_lat", "stop_lon", "node_id"])?;
        for s in &self.stops {
            w.write_record([
                s.id.clone(),
                s.y.to_string(),
                s.x.to_string(),
                s.node.clone().unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(dir, e))?;

        let mut routes = csv::Writer::from_path(dir.join("routes.txt"))?;
        let mut trips = csv::Writer::from_path(dir.join("trips.txt"))?;
        let mut times = csv::Writer::from_path(dir.join("stop_times.txt"))?;
        let mut caps = csv::Writer::from_path(dir.join("vehicle_capacity.csv"))?;
        routes.write_record(["route_id", "route_type"])?;
        trips.write_record(["route_id", "service_id", "trip_id"])?;
        times.write_record(["trip_id", "arrival_time", "departure_time", "stop_id", "stop_sequence"])?;
        caps.write_record(["route_id", "capacity"])?;
        for r in &self.routes {
            routes.write_record([r.route_id.clone(), r.route_type.to_string()])?;
            caps.write_record([r.route_id.clone(), r.vehicle_capacity.to_string()])?;
            for t in &r.trips {
                trips.write_record([&r.route_id, &t.service_id, &t.trip_id])?;
                for st in &t.stop_times {
                    times.write_record([
                        t.trip_id.clone(),
                        format_gtfs_time(st.arrival),
                        format_gtfs_time(st.departure),
                        st.stop_id.clone(),
                        st.sequence.to_string(),
                    ])?;
                }
            }
        }
        for w in [&mut routes, &mut trips, &mut times, &mut caps] {
            w.flush().map_err(|e| Error::io(dir, e))?;
        }
        Ok(())
    }
}

/// A labelled schedule, e.g. the regular timetable versus a reduced one.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleVariant {
    pub label: String,
    pub schedule: TransitSchedule,
}

impl ScheduleVariant {
    pub fn new(label: impl Into<String>, schedule: TransitSchedule) -> Result<Self> {
        let label = label.into();
        if label.is_empty() {
            return Err(Error::Invalid("schedule variant label must be nonempty".into()));
        }
        Ok(Self { label, schedule })
    }
}

/// Capacity assumed for routes missing from `vehicle_capacity.csv`.
pub const DEFAULT_VEHICLE_CAPACITY: u32 = 100;

#[derive(Clone, Debug, Default)]
pub struct GtfsOptions {
    /// Weekday name (`monday` .. `sunday`) used to filter `calendar.txt`.
    pub service_day: Option<String>,
}

pub fn parse_gtfs_time(s: &str) -> std::result::Result<u32, String> {
    let parts: Vec<&str> = s.trim().split(':').collect();
    if parts.len() != 3 {
        return Err(format!("expected HH:MM:SS, got {s:?}"));
    }
    let mut v = [0u32; 3];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p.parse().map_err(|_| format!("expected HH:MM:SS, got {s:?}"))?;
    }
    if v[1] >= 60 || v[2] >= 60 {
        return Err(format!("minutes/seconds out of range in {s:?}"));
    }
    let t = v[0] * 3600 + v[1] * 60 + v[2];
    if t > MAX_TIME {
        return Err(format!("time {s:?} is past 30:00:00"));
    }
    Ok(t)
}

pub fn format_gtfs_time(t: u32) -> String {
    format!("{:02}:{:02}:{:02}", t / 3600, (t / 60) % 60, t % 60)
}

const WEEKDAYS: [&str; 7] = [
    "monday",
    "tuesday",
    "wednesday",
    "thursday",
    "friday",
    "saturday",
    "sunday",
];

pub fn load_gtfs_subset(feed_dir: &Path, opts: &GtfsOptions) -> Result<TransitSchedule> {
    load_gtfs_subset_with_warnings(feed_dir, opts).map(|(s, _)| s)
}

/// Like [`load_gtfs_subset`], also returning the warnings raised while loading.
pub fn load_gtfs_subset_with_warnings(
    feed_dir: &Path,
    opts: &GtfsOptions,
) -> Result<(TransitSchedule, Vec<String>)> {
    let mut warnings = Vec::new();
    for required in ["stops.txt", "routes.txt", "trips.txt", "stop_times.txt"] {
        let p = feed_dir.join(required);
        if !p.is_file() {
            return Err(Error::MissingFile(p));
        }
    }
    for ignored in ["frequencies.txt", "transfers.txt", "shapes.txt"] {
        if feed_dir.join(ignored).is_file() {
            warnings.push(format!("{ignored} is not supported and was ignored"));
        }
    }

    let t = Table::read(&feed_dir.join("stops.txt"), &["stop_id", "stop_lat", "stop_lon"])?;
    let mut stops = Vec::with_capacity(t.rows.len());
    let mut stop_ids = BTreeSet::new();
    for (line, rec) in &t.rows {
        let id = t.get(rec, *line, "stop_id")?.to_string();
        if !stop_ids.insert(id.clone()) {
            return Err(Error::parse(&t.file, *line, format!("duplicate stop_id {id:?}")));
        }
        stops.push(Stop {
            id,
            // planar meters: lat carries y, lon carries x
            y: t.num(rec, *line, "stop_lat")?,
            x: t.num(rec, *line, "stop_lon")?,
            node: t.opt(rec, "node_id").map(str::to_string),
        });
    }

    let active_services = match (&opts.service_day, feed_dir.join("calendar.txt")) {
        (Some(day), cal) if cal.is_file() => {
            let day = day.to_ascii_lowercase();
            if !WEEKDAYS.contains(&day.as_str()) {
                return Err(Error::Invalid(format!("unknown service day {day:?}")));
            }
            let t = Table::read(&cal, &["service_id", &day])?;
            let mut active = BTreeSet::new();
            for (line, rec) in &t.rows {
                if t.get(rec, *line, &day)? == "1" {
                    active.insert(t.get(rec, *line, "service_id")?.to_string());
                }
            }
            Some(active)
        }
        _ => None,
    };

    let mut capacities = BTreeMap::new();
    let cap_path = feed_dir.join("vehicle_capacity.csv");
    if cap_path.is_file() {
        let t = Table::read(&cap_path, &["route_id", "capacity"])?;
        for (line, rec) in &t.rows {
            let cap: u32 = t.num(rec, *line, "capacity")?;
            if cap == 0 {
                return Err(Error::parse(&t.file, *line, "capacity must be positive"));
            }
            capacities.insert(t.get(rec, *line, "route_id")?.to_string(), cap);
        }
    }

    let t = Table::read(&feed_dir.join("routes.txt"), &["route_id", "route_type"])?;
    let mut routes = Vec::with_capacity(t.rows.len());
    let mut route_index = HashMap::new();
    for (line, rec) in &t.rows {
        let route_id = t.get(rec, *line, "route_id")?.to_string();
        if route_index.insert(route_id.clone(), routes.len()).is_some() {
            return Err(Error::parse(&t.file, *line, format!("duplicate route_id {route_id:?}")));
        }
        routes.push(TransitRoute {
            vehicle_capacity: capacities
                .get(&route_id)
                .copied()
                .unwrap_or(DEFAULT_VEHICLE_CAPACITY),
            route_id,
            route_type: t.num(rec, *line, "route_type")?,
            trips: Vec::new(),
        });
    }

    let t = Table::read(&feed_dir.join("trips.txt"), &["route_id", "service_id", "trip_id"])?;
    // trip_id -> (route idx, trip idx)
    let mut trip_index = HashMap::new();
    let mut skipped = BTreeSet::new();
    for (line, rec) in &t.rows {
        let route_id = t.get(rec, *line, "route_id")?;
        let trip_id = t.get(rec, *line, "trip_id")?.to_string();
        let service_id = t.get(rec, *line, "service_id")?.to_string();
        let &r = route_index
            .get(route_id)
            .ok_or_else(|| Error::parse(&t.file, *line, format!("unknown route_id {route_id:?}")))?;
        if trip_index.contains_key(&trip_id) || skipped.contains(&trip_id) {
            return Err(Error::parse(&t.file, *line, format!("duplicate trip_id {trip_id:?}")));
        }
        if let Some(active) = &active_services {
            if !active.contains(&service_id) {
                skipped.insert(trip_id);
                continue;
            }
        }
        trip_index.insert(trip_id.clone(), (r, routes[r].trips.len()));
        routes[r].trips.push(TransitTrip {
            trip_id,
            service_id,
            stop_times: Vec::new(),
        });
    }

    let t = Table::read(
        &feed_dir.join("stop_times.txt"),
        &["trip_id", "arrival_time", "departure_time", "stop_id", "stop_sequence"],
    )?;
    if t.rows.is_empty() {
        warnings.push("stop_times.txt has no rows; schedule has no trips".into());
    }
    for (line, rec) in &t.rows {
        let trip_id = t.get(rec, *line, "trip_id")?;
        let Some(&(r, k)) = trip_index.get(trip_id) else {
            if skipped.contains(trip_id) {
                continue;
            }
            return Err(Error::parse(&t.file, *line, format!("unknown trip_id {trip_id:?}")));
        };
        let stop_id = t.get(rec, *line, "stop_id")?;
        if !stop_ids.contains(stop_id) {
            return Err(Error::UnknownStop {
                stop_id: stop_id.to_string(),
                line: *line,
            });
        }
        let time = |col: &str| -> Result<u32> {
            parse_gtfs_time(t.get(rec, *line, col)?).map_err(|e| Error::parse(&t.file, *line, e))
        };
        routes[r].trips[k].stop_times.push(StopTime {
            stop_id: stop_id.to_string(),
            arrival: time("arrival_time")?,
            departure: time("departure_time")?,
            sequence: t.num(rec, *line, "stop_sequence")?,
        });
    }

    for route in &mut routes {
        for trip in &mut route.trips {
            trip.stop_times.sort_by_key(|s| s.sequence);
            check_trip_times(trip)?;
        }
        // trips without any stop_times carry no service
        route.trips.retain(|t| !t.stop_times.is_empty());
    }

    for w in &warnings {
        log::warn!("{}: {w}", feed_dir.display());
    }
    Ok((TransitSchedule { stops, routes }, warnings))
}

fn check_trip_times(trip: &TransitTrip) -> Result<()> {
    let mut prev: Option<&StopTime> = None;
    for st in &trip.stop_times {
        let bad = st.departure < st.arrival
            || prev.is_some_and(|p| p.sequence == st.sequence || st.arrival <= p.departure);
        if bad {
            return Err(Error::NonIncreasingTimes {
                trip_id: trip.trip_id.clone(),
                sequence: st.sequence,
            });
        }
        prev = Some(st);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// validation

pub const DEFAULT_SNAP_RADIUS: f64 = 500.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    Invariant { message: String },
    UnsnappableStop { stop_id: String, distance: f64 },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::Invariant { message } => write!(f, "invariant violated: {message}"),
            Finding::UnsnappableStop { stop_id, distance } => {
                write!(f, "unsnappable stop {stop_id}: nearest node {distance:.1} m away")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StopSnap {
    pub stop_id: String,
    pub node_id: String,
    pub distance: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
    pub snaps: Vec<StopSnap>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

pub fn validate_network(
    road: &RoadNetwork,
    transit: &TransitSchedule,
    snap_radius: f64,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut invariant = |m: String| report.findings.push(Finding::Invariant { message: m });

    // RoadNetwork::new enforces these; re-check in case the value was built by hand
    if let Err(e) = RoadNetwork::new(road.nodes.clone(), road.links.clone()) {
        invariant(e.to_string());
    }

    let mut stop_ids = BTreeSet::new();
    for s in &transit.stops {
        if !stop_ids.insert(s.id.as_str()) {
            invariant(format!("duplicate stop_id {}", s.id));
        }
    }
    for r in &transit.routes {
        if r.vehicle_capacity == 0 {
            invariant(format!("route {} has zero vehicle capacity", r.route_id));
        }
        for t in &r.trips {
            if let Err(e) = check_trip_times(t) {
                invariant(e.to_string());
            }
            for st in &t.stop_times {
                if !stop_ids.contains(st.stop_id.as_str()) {
                    invariant(format!("trip {} references unknown stop {}", t.trip_id, st.stop_id));
                }
            }
        }
    }

    for s in &transit.stops {
        let snapped = match &s.node {
            Some(node) => road.node_idx(node).map(|i| {
                let n = &road.nodes[i];
                (i, (n.x - s.x).hypot(n.y - s.y))
            }),
            None => road.nearest_node(s.x, s.y),
        };
        match snapped {
            Some((i, d)) if d <= snap_radius => report.snaps.push(StopSnap {
                stop_id: s.id.clone(),
                node_id: road.nodes[i].id.clone(),
                distance: d,
            }),
            Some((_, d)) => report.findings.push(Finding::UnsnappableStop {
                stop_id: s.id.clone(),
                distance: d,
            }),
            None => report.findings.push(Finding::UnsnappableStop {
                stop_id: s.id.clone(),
                distance: f64::INFINITY,
            }),
        }
    }
    report
}

/// Write a text file, mapping IO errors to [`Error::Io`].
pub(crate) fn write_text(path: &Path, contents: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
}
