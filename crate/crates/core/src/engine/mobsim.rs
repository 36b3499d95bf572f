//! Event-driven execution of one simulated day.
//!
//! Road links are point queues: a vehicle becomes ready to leave once its
//! free-flow traversal time has elapsed, and leaves when the link's flow
//! capacity allows and the next link has storage left. Transit vehicles run
//! to the timetable and board waiting agents in order of arrival at the stop
//! (then agent order) up to the restricted capacity.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};
use std::io::Write;

use serde::Serialize;

use crate::choice::Mode;
use crate::population::Population;
use crate::Result;

use super::network::SimNetwork;
use super::plans::Plan;
use super::router::{TransitFeedback, TripLeg};
use super::{IterationStats, SimConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Depart,
    EnterLink,
    LeaveLink,
    Board,
    Alight,
    DeniedBoarding,
    Arrive,
    /// trip ended without arriving (blocked too long or day over)
    Stuck,
    /// trip given up after repeated boarding denials
    Abandon,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Location {
    Node(usize),
    Link(usize),
    Stop(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimEvent {
    pub time: u32,
    pub agent: u32,
    pub kind: EventKind,
    pub loc: Location,
    /// transit vehicle (global run index) for board/alight/denied events
    pub vehicle: Option<u32>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventLog {
    pub events: Vec<SimEvent>,
}

#[derive(Serialize)]
struct JsonEvent<'a> {
    t: u32,
    agent: &'a str,
    kind: EventKind,
    loc: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    veh: Option<&'a str>,
}

impl EventLog {
    /// Stream as JSON Lines: `{"t", "agent", "kind", "loc"}` plus `veh` for
    /// transit events.
    pub fn write_jsonl<W: Write>(&self, net: &SimNetwork, pop: &Population, mut w: W) -> Result<()> {
        let vehicles = net.vehicle_labels();
        for e in &self.events {
            let loc = match e.loc {
                Location::Node(i) => net.road.nodes()[i].id.as_str(),
                Location::Link(i) => net.road.links()[i].id.as_str(),
                Location::Stop(i) => net.stops[i].id.as_str(),
            };
            let rec = JsonEvent {
                t: e.time,
                agent: &pop.agents[e.agent as usize].id,
                kind: e.kind,
                loc,
                veh: e.vehicle.map(|v| vehicles[v as usize].as_str()),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n").map_err(|e| crate::Error::io("<event log>", e))?;
        }
        Ok(())
    }
}

impl SimNetwork {
    /// Offset of each pattern's first run in the global vehicle numbering.
    pub fn vehicle_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.patterns
            .iter()
            .map(|p| {
                let o = acc;
                acc += p.runs.len();
                o
            })
            .collect()
    }

    pub fn vehicle_labels(&self) -> Vec<String> {
        self.patterns
            .iter()
            .flat_map(|p| p.runs.iter().map(|r| r.trip_id.clone()))
            .collect()
    }
}

pub struct MobsimOutput {
    pub log: EventLog,
    pub stats: IterationStats,
    pub feedback: TransitFeedback,
    pub max_onboard: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Ev {
    ActEnd(u32),
    RoadStart(u32),
    StopArrive(u32),
    TeleArrive(u32),
    VehArrive(u32, u32, u32),
    VehDepart(u32, u32, u32),
    LinkWake(u32),
    /// agent, trip index: a denied agent's wait has run out
    WaitTimeout(u32, u32),
}

impl Ev {
    // same-second ordering: agents reach stops before vehicles alight, alight
    // before boarding, then road movement
    fn class(self) -> u8 {
        match self {
            Ev::ActEnd(_) | Ev::StopArrive(_) | Ev::TeleArrive(_) | Ev::RoadStart(_) => 0,
            Ev::VehArrive(..) => 1,
            Ev::VehDepart(..) | Ev::WaitTimeout(..) => 2,
            Ev::LinkWake(_) => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Idle,
    Traveling,
    Done,
}

#[derive(Clone, Debug)]
struct AgentState {
    trip: usize,
    status: Status,
    /// index into the current road route
    route_pos: usize,
    on_link: Option<usize>,
    /// arrival time at the boarding stop while waiting for a vehicle
    wait_since: Option<u32>,
    denials: u32,
    mode: Mode,
}

#[derive(Clone, Debug, Default)]
struct LinkState {
    queue: VecDeque<(u32, u32)>, // (agent, ready time)
    entry_wait: VecDeque<u32>,
    next_exit: f64,
    pending_wake: Option<u32>,
    upstream_waiting: BTreeSet<u32>,
}

struct Sim<'a> {
    net: &'a SimNetwork,
    plans: &'a [Plan],
    end_times: Vec<Vec<Option<u32>>>,
    cfg: &'a SimConfig,
    heap: BinaryHeap<Reverse<(u32, u8, u64, Ev)>>,
    seq: u64,
    agents: Vec<AgentState>,
    links: Vec<LinkState>,
    waiting: Vec<Vec<BTreeSet<(u32, u32)>>>, // [pattern][pos] -> (arrived, agent)
    onboard: Vec<Vec<u32>>,                  // [vehicle] -> agents
    veh_offset: Vec<usize>,
    log: EventLog,
    stats: IterationStats,
    feedback: TransitFeedback,
    max_onboard: u32,
}

impl<'a> Sim<'a> {
    fn push(&mut self, t: u32, ev: Ev) {
        self.seq += 1;
        self.heap.push(Reverse((t, ev.class(), self.seq, ev)));
    }

    fn emit(&mut self, time: u32, agent: u32, kind: EventKind, loc: Location, vehicle: Option<u32>) {
        self.log.events.push(SimEvent {
            time,
            agent,
            kind,
            loc,
            vehicle,
        });
    }

    fn trip(&self, agent: u32) -> &'a super::plans::PlannedTrip {
        let st = &self.agents[agent as usize];
        &self.plans[agent as usize].trips[st.trip]
    }

    /// Agent reached (or was moved to) the destination of its current trip.
    fn finish_trip(&mut self, agent: u32, t: u32) {
        let a = agent as usize;
        let st = &mut self.agents[a];
        st.trip += 1;
        st.on_link = None;
        st.status = Status::Idle;
        let next_act = st.trip; // activity index == trips completed
        match self.end_times[a].get(next_act).copied().flatten() {
            Some(end) if st.trip < self.plans[a].trips.len() => {
                let at = self.cfg.quantize(f64::from(end.max(t)));
                self.push(at, Ev::ActEnd(agent));
            }
            _ => st.status = Status::Done,
        }
    }

    fn start_trip(&mut self, agent: u32, t: u32) {
        let trip = self.trip(agent);
        let a = agent as usize;
        self.agents[a].status = Status::Traveling;
        self.agents[a].mode = trip.route.mode;
        self.agents[a].denials = 0;
        self.agents[a].wait_since = None;
        self.emit(t, agent, EventKind::Depart, Location::Node(trip.origin), None);
        match &trip.route.leg {
            TripLeg::Stay => {
                self.emit(t, agent, EventKind::Arrive, Location::Node(trip.dest), None);
                self.stats.arrived.add(trip.route.mode);
                self.finish_trip(agent, t);
            }
            TripLeg::Teleport { duration } => {
                let at = self.cfg.quantize(f64::from(t + duration));
                self.push(at, Ev::TeleArrive(agent));
            }
            TripLeg::Road { .. } => {
                let wait = if trip.route.mode == Mode::Ridehail {
                    self.cfg.costs.ridehail_wait
                } else {
                    0.0
                };
                let at = self.cfg.quantize(f64::from(t) + wait);
                self.push(at, Ev::RoadStart(agent));
            }
            TripLeg::Transit { access, .. } => {
                let at = self.cfg.quantize(f64::from(t + access));
                self.push(at, Ev::StopArrive(agent));
            }
        }
    }

    fn schedule_wake(&mut self, link: usize, at: u32) {
        let ls = &mut self.links[link];
        if ls.pending_wake.is_some_and(|p| p <= at) {
            return;
        }
        ls.pending_wake = Some(at);
        self.push(at, Ev::LinkWake(link as u32));
    }

    fn enter_link(&mut self, agent: u32, link: usize, t: u32) {
        self.emit(t, agent, EventKind::EnterLink, Location::Link(link), None);
        let ready = self.cfg.quantize(f64::from(t + self.net.link_fft[link]));
        self.links[link].queue.push_back((agent, ready));
        self.agents[agent as usize].on_link = Some(link);
        self.schedule_wake(link, ready);
    }

    fn has_room(&self, link: usize) -> bool {
        self.links[link].queue.len() < self.net.link_storage[link]
    }

    fn road_start(&mut self, agent: u32, t: u32) {
        let TripLeg::Road { links } = &self.trip(agent).route.leg else {
            unreachable!("road start on a non-road leg")
        };
        let first = links[0];
        self.agents[agent as usize].route_pos = 0;
        if self.has_room(first) && self.links[first].entry_wait.is_empty() {
            self.enter_link(agent, first, t);
        } else {
            self.links[first].entry_wait.push_back(agent);
        }
    }

    /// A vehicle left `link` at `t`: admit waiting departures, wake upstream.
    fn space_freed(&mut self, link: usize, t: u32) {
        while self.has_room(link) {
            let Some(agent) = self.links[link].entry_wait.pop_front() else { break };
            self.enter_link(agent, link, t);
        }
        let ups = std::mem::take(&mut self.links[link].upstream_waiting);
        for u in ups {
            self.schedule_wake(u as usize, t);
        }
    }

    fn leave_link(&mut self, link: usize, t: u32) -> u32 {
        let (agent, _) = self.links[link].queue.pop_front().expect("nonempty queue");
        let ls = &mut self.links[link];
        ls.next_exit = ls.next_exit.max(f64::from(t)) + 1.0 / self.net.link_flow[link];
        self.emit(t, agent, EventKind::LeaveLink, Location::Link(link), None);
        self.agents[agent as usize].on_link = None;
        agent
    }

    fn process_link(&mut self, link: usize, t: u32) {
        while let Some(&(agent, ready)) = self.links[link].queue.front() {
            if ready > t {
                self.schedule_wake(link, ready);
                break;
            }
            let next_exit = self.links[link].next_exit;
            if next_exit > f64::from(t) {
                self.schedule_wake(link, next_exit.ceil() as u32);
                break;
            }
            let trip = self.trip(agent);
            let TripLeg::Road { links } = &trip.route.leg else { unreachable!() };
            let pos = self.agents[agent as usize].route_pos;
            if pos + 1 == links.len() {
                self.leave_link(link, t);
                self.emit(t, agent, EventKind::Arrive, Location::Node(trip.dest), None);
                self.stats.arrived.add(trip.route.mode);
                self.finish_trip(agent, t);
                self.space_freed(link, t);
                continue;
            }
            let next = links[pos + 1];
            if self.has_room(next) {
                self.leave_link(link, t);
                self.agents[agent as usize].route_pos += 1;
                self.enter_link(agent, next, t);
                self.space_freed(link, t);
                continue;
            }
            if t >= ready + self.cfg.stuck_time {
                self.leave_link(link, t);
                self.emit(t, agent, EventKind::Stuck, Location::Link(link), None);
                self.stats.stuck.add(trip.route.mode);
                self.finish_trip(agent, t);
                self.space_freed(link, t);
                continue;
            }
            self.links[next].upstream_waiting.insert(link as u32);
            self.schedule_wake(link, ready + self.cfg.stuck_time);
            break;
        }
    }

    fn stop_arrive(&mut self, agent: u32, t: u32) {
        let TripLeg::Transit { pattern, board, .. } = self.trip(agent).route.leg else {
            unreachable!()
        };
        // nothing is logged until boarding or denial
        self.agents[agent as usize].wait_since = Some(t);
        self.waiting[pattern][board].insert((t, agent));
    }

    fn veh_arrive(&mut self, p: usize, run: usize, pos: usize, t: u32) {
        let veh = self.veh_offset[p] + run;
        let stop = self.net.patterns[p].stops[pos];
        let riders = std::mem::take(&mut self.onboard[veh]);
        let mut stay = Vec::with_capacity(riders.len());
        for agent in riders {
            let TripLeg::Transit { alight, egress, .. } = self.trip(agent).route.leg else {
                unreachable!()
            };
            if alight == pos {
                self.emit(t, agent, EventKind::Alight, Location::Stop(stop), Some(veh as u32));
                let at = self.cfg.quantize(f64::from(t + egress));
                self.push(at, Ev::TeleArrive(agent));
            } else {
                stay.push(agent);
            }
        }
        self.onboard[veh] = stay;
    }

    fn veh_depart(&mut self, p: usize, run: usize, pos: usize, t: u32) {
        let veh = self.veh_offset[p] + run;
        let pattern = &self.net.patterns[p];
        let stop = pattern.stops[pos];
        let cap = (f64::from(pattern.capacity) * self.cfg.capacity_factor).floor() as usize;
        let queue = std::mem::take(&mut self.waiting[p][pos]);
        let mut remaining = BTreeSet::new();
        for (arrived, agent) in queue {
            if self.onboard[veh].len() < cap {
                self.emit(t, agent, EventKind::Board, Location::Stop(stop), Some(veh as u32));
                self.agents[agent as usize].wait_since = None;
                self.onboard[veh].push(agent);
                let scheduled = pattern.next_departure(pos, arrived).map_or(t, |(d, _)| d);
                let denials = self.agents[agent as usize].denials;
                self.feedback
                    .record(p, pos, arrived, f64::from(t.saturating_sub(scheduled)), denials);
                continue;
            }
            self.emit(t, agent, EventKind::DeniedBoarding, Location::Stop(stop), Some(veh as u32));
            self.stats.denied_boardings += 1;
            self.agents[agent as usize].denials += 1;
            let deadline = arrived + self.cfg.max_wait;
            if t >= deadline {
                self.abandon(p, pos, arrived, agent, t);
            } else {
                if self.agents[agent as usize].denials == 1 {
                    let trip = self.agents[agent as usize].trip as u32;
                    let at = self.cfg.quantize(f64::from(deadline));
                    self.push(at, Ev::WaitTimeout(agent, trip));
                }
                remaining.insert((arrived, agent));
            }
        }
        self.waiting[p][pos] = remaining;
        self.max_onboard = self.max_onboard.max(self.onboard[veh].len() as u32);
    }

    /// End a denied agent's transit trip at the stop.
    fn abandon(&mut self, p: usize, pos: usize, arrived: u32, agent: u32, t: u32) {
        let stop = self.net.patterns[p].stops[pos];
        self.emit(t, agent, EventKind::Abandon, Location::Stop(stop), None);
        let scheduled = self.net.patterns[p].next_departure(pos, arrived).map_or(t, |(d, _)| d);
        let denials = self.agents[agent as usize].denials;
        // giving up costs at least another max_wait to get there some other way
        let extra = f64::from(t.saturating_sub(scheduled) + self.cfg.max_wait);
        self.feedback.record(p, pos, arrived, extra, denials);
        self.stats.abandoned.add(Mode::Transit);
        self.agents[agent as usize].wait_since = None;
        self.finish_trip(agent, t);
    }

    fn wait_timeout(&mut self, agent: u32, trip: u32, t: u32) {
        let st = &self.agents[agent as usize];
        if st.status != Status::Traveling || st.trip != trip as usize {
            return;
        }
        let Some(arrived) = st.wait_since else { return };
        let TripLeg::Transit { pattern, board, .. } = self.trip(agent).route.leg else {
            return;
        };
        if self.waiting[pattern][board].remove(&(arrived, agent)) {
            self.abandon(pattern, board, arrived, agent, t);
        }
    }

    fn run(&mut self) {
        while let Some(Reverse((t, _, _, ev))) = self.heap.pop() {
            if t > self.cfg.end_time {
                break;
            }
            match ev {
                Ev::ActEnd(a) => self.start_trip(a, t),
                Ev::RoadStart(a) => self.road_start(a, t),
                Ev::StopArrive(a) => self.stop_arrive(a, t),
                Ev::TeleArrive(a) => {
                    let trip = self.trip(a);
                    self.emit(t, a, EventKind::Arrive, Location::Node(trip.dest), None);
                    self.stats.arrived.add(trip.route.mode);
                    self.finish_trip(a, t);
                }
                Ev::VehArrive(p, r, pos) => self.veh_arrive(p as usize, r as usize, pos as usize, t),
                Ev::VehDepart(p, r, pos) => self.veh_depart(p as usize, r as usize, pos as usize, t),
                Ev::WaitTimeout(a, trip) => self.wait_timeout(a, trip, t),
                Ev::LinkWake(l) => {
                    let l = l as usize;
                    if self.links[l].pending_wake == Some(t) {
                        self.links[l].pending_wake = None;
                        self.process_link(l, t);
                    }
                }
            }
        }
        // close the day: anyone still travelling is stuck
        let end = self.cfg.end_time;
        for a in 0..self.agents.len() {
            if self.agents[a].status != Status::Traveling {
                continue;
            }
            let agent = a as u32;
            let loc = match self.agents[a].on_link {
                Some(l) => {
                    self.emit(end, agent, EventKind::LeaveLink, Location::Link(l), None);
                    Location::Link(l)
                }
                None => Location::Node(self.trip(agent).dest),
            };
            self.emit(end, agent, EventKind::Stuck, loc, None);
            let mode = self.agents[a].mode;
            self.stats.stuck.add(mode);
            self.agents[a].status = Status::Done;
        }
    }
}

/// Execute one day of `plans` (indexed like `pop.agents`). Deterministic; the
/// seed is accepted for interface stability but the queue model draws no
/// random numbers.
pub fn run_mobsim(
    pop: &Population,
    plans: &[Plan],
    net: &SimNetwork,
    cfg: &SimConfig,
    _seed: u64,
) -> MobsimOutput {
    assert_eq!(pop.agents.len(), plans.len(), "one plan per agent");
    let veh_offset = net.vehicle_offsets();
    let n_veh = net.patterns.iter().map(|p| p.runs.len()).sum();
    let mut sim = Sim {
        net,
        plans,
        end_times: pop
            .agents
            .iter()
            .map(|a| a.agenda.iter().map(|x| x.end_time).collect())
            .collect(),
        cfg,
        heap: BinaryHeap::new(),
        seq: 0,
        agents: vec![
            AgentState {
                trip: 0,
                status: Status::Idle,
                route_pos: 0,
                on_link: None,
                wait_since: None,
                denials: 0,
                mode: Mode::Car,
            };
            plans.len()
        ],
        links: vec![LinkState::default(); net.road.links().len()],
        waiting: net
            .patterns
            .iter()
            .map(|p| vec![BTreeSet::new(); p.stops.len()])
            .collect(),
        onboard: vec![Vec::new(); n_veh],
        veh_offset,
        log: EventLog::default(),
        stats: IterationStats::default(),
        feedback: TransitFeedback::empty(cfg.travel_time_bin),
        max_onboard: 0,
    };
    for plan in plans {
        for t in &plan.trips {
            sim.stats.planned.add(t.route.mode);
        }
    }
    for (p, pattern) in net.patterns.iter().enumerate() {
        for (r, run) in pattern.runs.iter().enumerate() {
            for (pos, &(arr, dep)) in run.times.iter().enumerate() {
                sim.push(arr, Ev::VehArrive(p as u32, r as u32, pos as u32));
                sim.push(dep, Ev::VehDepart(p as u32, r as u32, pos as u32));
            }
        }
    }
    for (a, agent) in pop.agents.iter().enumerate() {
        if plans[a].trips.is_empty() {
            sim.agents[a].status = Status::Done;
            continue;
        }
        let end = agent.agenda[0].end_time.unwrap_or(0);
        sim.push(cfg.quantize(f64::from(end)), Ev::ActEnd(a as u32));
    }
    sim.run();
    MobsimOutput {
        log: sim.log,
        stats: sim.stats,
        feedback: sim.feedback,
        max_onboard: sim.max_onboard,
    }
}
