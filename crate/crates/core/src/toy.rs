//! Desk-scale city used for examples and end-to-end tests: a 4×4 street
//! grid, one east-west and one north-south transit line, about ten thousand
//! agents, and two preference sets fitted to target mode shares.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;

use crate::calibrate::{calibrate_ascs, CalibrationOptions, CalibrationTargets, Observable};
use crate::choice::{mnl_probabilities, MnlParams, Mode, Probabilities};
use crate::engine::{tour_contexts, SimConfig, SimNetwork, TransitFeedback, TravelTimes};
use crate::netio::{
    write_text, Link, LinkMode, Node, RoadNetwork, Stop, StopTime, TransitRoute, TransitSchedule, TransitTrip,
};
use crate::population::{
    apply_wfh, generate_toy_population, Activity, ActivityKind, Agent, AgendaTemplate, IndustrySpec, Phase,
    Population, PopulationSpec, ReturnSchedule, TemplateActivity, ZoneSpec, ANY_INDUSTRY,
};
use crate::scenario::{Assets, Matrix, ScenarioConfig, COVID_FIT, PRECOVID_FIT};
use crate::{Error, Result};

pub const GRID: usize = 4;
pub const SPACING: f64 = 1000.0;
pub const LINK_CAPACITY: f64 = 900.0;
pub const FREESPEED: f64 = 11.0;
/// seats + standing room per toy transit vehicle
pub const TOY_VEHICLE_CAPACITY: u32 = 50;
pub const REGULAR_HEADWAY: u32 = 600;
pub const COVID_HEADWAY: u32 = 1200;

/// Return-to-work fractions of teleworkable workers, phases 1 to 4.
pub const RETURN_FRACTIONS: [f64; 4] = [0.2, 0.4, 0.6, 0.85];

/// Target trip shares in mode order car, transit, walk, bike, ridehail, bikeshare.
pub const PRECOVID_SHARES: [f64; 6] = [0.30, 0.35, 0.20, 0.07, 0.04, 0.04];
pub const COVID_SHARES: [f64; 6] = [0.40, 0.20, 0.23, 0.10, 0.03, 0.04];

fn node_id(r: usize, c: usize) -> String {
    format!("n{r}{c}")
}

/// 16 nodes, 48 directed links.
pub fn toy_road() -> RoadNetwork {
    let mut nodes = Vec::new();
    for r in 0..GRID {
        for c in 0..GRID {
            nodes.push(Node {
                id: node_id(r, c),
                x: c as f64 * SPACING,
                y: r as f64 * SPACING,
            });
        }
    }
    let mut links = Vec::new();
    let mut add = |a: (usize, usize), b: (usize, usize)| {
        for (f, t) in [(a, b), (b, a)] {
            links.push(Link {
                id: format!("{}_{}", node_id(f.0, f.1), node_id(t.0, t.1)),
                from: node_id(f.0, f.1),
                to: node_id(t.0, t.1),
                length: SPACING,
                capacity: LINK_CAPACITY,
                freespeed: FREESPEED,
                modes: BTreeSet::from([LinkMode::Car, LinkMode::Bus]),
            });
        }
    };
    for r in 0..GRID {
        for c in 0..GRID {
            if c + 1 < GRID {
                add((r, c), (r, c + 1));
            }
            if r + 1 < GRID {
                add((r, c), (r + 1, c));
            }
        }
    }
    RoadNetwork::new(nodes, links).expect("toy grid is consistent")
}

fn line_nodes(line: &str) -> Vec<(usize, usize)> {
    match line {
        // east-west along row 1, north-south along column 2
        "h" => (0..GRID).map(|c| (1, c)).collect(),
        _ => (0..GRID).map(|r| (r, 2)).collect(),
    }
}

/// Both lines in both directions, 05:00 to about 23:30 at `headway` seconds.
pub fn toy_schedule(headway: u32, capacity: u32) -> TransitSchedule {
    const RUN: u32 = 100;
    const DWELL: u32 = 20;
    let mut stops = Vec::new();
    let mut routes = Vec::new();
    for line in ["h", "v"] {
        let nodes = line_nodes(line);
        for (k, &(r, c)) in nodes.iter().enumerate() {
            stops.push(Stop {
                id: format!("{line}{k}"),
                x: c as f64 * SPACING,
                y: r as f64 * SPACING,
                node: Some(node_id(r, c)),
            });
        }
        let mut trips = Vec::new();
        for (dir, order) in [("f", (0..GRID).collect::<Vec<_>>()), ("b", (0..GRID).rev().collect())] {
            let mut start = 5 * 3600;
            let mut n = 0;
            while start <= 23 * 3600 + 1800 {
                let stop_times = order
                    .iter()
                    .enumerate()
                    .map(|(seq, &k)| {
                        let arrival = start + seq as u32 * (RUN + DWELL);
                        StopTime {
                            stop_id: format!("{line}{k}"),
                            arrival,
                            departure: arrival + DWELL,
                            sequence: seq as u32 + 1,
                        }
                    })
                    .collect();
                trips.push(TransitTrip {
                    trip_id: format!("{line}{dir}{n:03}"),
                    service_id: "wk".into(),
                    stop_times,
                });
                start += headway;
                n += 1;
            }
        }
        routes.push(TransitRoute {
            route_id: line.to_uppercase(),
            route_type: 1,
            vehicle_capacity: capacity,
            trips,
        });
    }
    TransitSchedule { stops, routes }
}

fn ta(kind: ActivityKind, end: Option<u32>, jitter: u32) -> TemplateActivity {
    TemplateActivity {
        kind,
        end_time: end,
        jitter,
    }
}

const H: u32 = 3600;

pub fn toy_population_spec(agents_per_zone: usize) -> PopulationSpec {
    use ActivityKind::*;
    let zones = (0..GRID)
        .flat_map(|r| (0..GRID).map(move |c| (r, c)))
        .map(|(r, c)| ZoneSpec {
            id: format!("z{r}{c}"),
            nodes: vec![node_id(r, c)],
            // a downtown core around the line crossing
            attraction: if (1..=2).contains(&r) && (1..=2).contains(&c) { 3.0 } else { 1.0 },
        })
        .collect();
    let industries = vec![
        IndustrySpec {
            code: "office".into(),
            share: 0.5,
            teleworkable_share: 0.68,
        },
        IndustrySpec {
            code: "retail".into(),
            share: 0.3,
            teleworkable_share: 0.2,
        },
        IndustrySpec {
            code: "health".into(),
            share: 0.2,
            teleworkable_share: 0.2,
        },
    ];
    let worker_templates = vec![
        AgendaTemplate {
            weight: 0.7,
            activities: vec![ta(Home, Some(7 * H + 1800), 2700), ta(Work, Some(17 * H), 2700), ta(Home, None, 0)],
        },
        AgendaTemplate {
            weight: 0.15,
            activities: vec![
                ta(Home, Some(7 * H + 1800), 2700),
                ta(Work, Some(12 * H), 900),
                ta(Other, Some(13 * H), 900),
                ta(Work, Some(17 * H + 1800), 2700),
                ta(Home, None, 0),
            ],
        },
        AgendaTemplate {
            weight: 0.15,
            activities: vec![
                ta(Home, Some(7 * H + 1800), 2700),
                ta(Work, Some(17 * H), 2700),
                ta(Home, Some(19 * H), 1800),
                ta(Shop, Some(20 * H), 900),
                ta(Home, None, 0),
            ],
        },
    ];
    let nonworker_templates = vec![
        AgendaTemplate {
            weight: 0.5,
            activities: vec![ta(Home, Some(10 * H), 5400), ta(Shop, Some(13 * H), 3600), ta(Home, None, 0)],
        },
        AgendaTemplate {
            weight: 0.3,
            activities: vec![
                ta(Home, Some(9 * H), 3600),
                ta(Other, Some(12 * H), 1800),
                ta(Home, Some(15 * H), 1800),
                ta(Shop, Some(16 * H + 1800), 1800),
                ta(Home, None, 0),
            ],
        },
        AgendaTemplate {
            weight: 0.2,
            activities: vec![ta(Home, Some(14 * H), 7200), ta(Other, Some(18 * H), 3600), ta(Home, None, 0)],
        },
    ];
    PopulationSpec {
        zones,
        agents_per_zone,
        worker_share: 0.6,
        industries,
        worker_templates,
        nonworker_templates,
    }
}

pub fn toy_return_schedule() -> ReturnSchedule {
    ReturnSchedule::new(
        Phase::REOPENING
            .iter()
            .zip(RETURN_FRACTIONS)
            .map(|(&p, f)| ((p, ANY_INDUSTRY.to_string()), f))
            .collect(),
    )
    .expect("fractions are monotone")
}

pub fn share_targets(shares: [f64; 6]) -> CalibrationTargets {
    CalibrationTargets::new(Mode::ALL.iter().zip(shares).map(|(&m, s)| (Observable::Share(m), s)).collect())
        .expect("valid shares")
}

/// Zero ASCs with the toy's taste coefficients.
pub fn toy_base_params() -> MnlParams {
    MnlParams {
        asc: Mode::ALL.iter().map(|&m| (m, 0.0)).collect(),
        beta_time: -2.5,
        beta_cost: -0.25,
        reference_mode: Mode::Car,
    }
}

/// Trip-weighted mean choice probabilities over free-flow tour contexts.
/// Stands in for a full simulation when fitting preference sets.
pub struct FreeFlowShares {
    tours: Vec<(crate::choice::TripContext, usize)>,
}

impl FreeFlowShares {
    pub fn new(pop: &Population, net: &SimNetwork, cfg: &SimConfig) -> Result<Self> {
        let tt = TravelTimes::free_flow(net, cfg.travel_time_bin, cfg.end_time);
        let fb = TransitFeedback::empty(cfg.travel_time_bin);
        let per_agent = pop
            .agents
            .par_iter()
            .map(|a| tour_contexts(a, net, &tt, &fb, cfg))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            tours: per_agent.into_iter().flatten().collect(),
        })
    }

    pub fn shares(&self, p: &MnlParams) -> Probabilities {
        let mut acc = [0.0; 6];
        let mut total = 0.0;
        for (ctx, n) in &self.tours {
            let pr = mnl_probabilities(ctx, p);
            for (k, v) in pr.0.iter().enumerate() {
                acc[k] += v * *n as f64;
            }
            total += *n as f64;
        }
        Probabilities(acc.map(|v| v / total))
    }

    /// Fit ASCs so free-flow shares hit `targets`.
    pub fn fit(&self, base: &MnlParams, targets: &CalibrationTargets) -> Result<MnlParams> {
        let opts = CalibrationOptions {
            step: 1.0,
            tol_pp: 0.01,
            max_iter: 500,
            tie_offsets: false,
        };
        let res = calibrate_ascs(base, targets, &opts, |p| Ok(Observable::share_map(&self.shares(p))))?;
        if !res.converged {
            return Err(Error::NonConvergence {
                iterations: res.iterations,
                residuals: res.residuals.iter().map(|(o, r)| (o.to_string(), *r)).collect(),
            });
        }
        Ok(res.params)
    }
}

/// The default scenario matrix: the six phases with full vehicle capacity,
/// and the pandemic and reopening phases again at half capacity.
pub fn toy_matrix(seed: u64, iterations: usize) -> Matrix {
    let mut scenarios = vec![ScenarioConfig::new("precovid", Phase::PreCovid, 1.0)];
    for p in [Phase::Covid, Phase::P1, Phase::P2, Phase::P3, Phase::P4] {
        scenarios.push(ScenarioConfig::new(format!("{p}_s1"), p, 1.0));
    }
    for p in [Phase::Covid, Phase::P1, Phase::P2, Phase::P3, Phase::P4] {
        scenarios.push(ScenarioConfig::new(format!("{p}_s2"), p, 0.5));
    }
    Matrix {
        seed,
        sim: SimConfig {
            iterations,
            ..SimConfig::default()
        },
        scenarios,
    }
}

#[derive(Clone, Debug)]
pub struct ToyCity {
    pub road: RoadNetwork,
    pub regular: TransitSchedule,
    pub covid: TransitSchedule,
    pub population: Population,
    pub params: BTreeMap<String, MnlParams>,
    pub return_schedule: ReturnSchedule,
    pub matrix: Matrix,
}

#[derive(Clone, Debug)]
pub struct ToyOptions {
    pub agents_per_zone: usize,
    pub seed: u64,
    pub iterations: usize,
}

impl Default for ToyOptions {
    fn default() -> Self {
        Self {
            agents_per_zone: 625,
            seed: 42,
            iterations: 50,
        }
    }
}

pub fn build_toy(opts: &ToyOptions) -> Result<ToyCity> {
    let road = toy_road();
    let regular = toy_schedule(REGULAR_HEADWAY, TOY_VEHICLE_CAPACITY);
    let covid = toy_schedule(COVID_HEADWAY, TOY_VEHICLE_CAPACITY);
    let population = generate_toy_population(&toy_population_spec(opts.agents_per_zone), opts.seed)?;
    let return_schedule = toy_return_schedule();
    let matrix = toy_matrix(opts.seed, opts.iterations);
    let cfg = &matrix.sim;

    let reg_net = SimNetwork::new(&road, &regular, cfg.snap_radius)?;
    let precovid_fit = FreeFlowShares::new(&population, &reg_net, cfg)?.fit(&toy_base_params(), &share_targets(PRECOVID_SHARES))?;
    let covid_pop = apply_wfh(&population, &return_schedule, Phase::Covid, opts.seed)?;
    let covid_net = SimNetwork::new(&road, &covid, cfg.snap_radius)?;
    let covid_fit = FreeFlowShares::new(&covid_pop, &covid_net, cfg)?.fit(&precovid_fit, &share_targets(COVID_SHARES))?;

    Ok(ToyCity {
        road,
        regular,
        covid,
        population,
        params: BTreeMap::from([(PRECOVID_FIT.to_string(), precovid_fit), (COVID_FIT.to_string(), covid_fit)]),
        return_schedule,
        matrix,
    })
}

impl ToyCity {
    /// In-memory assets equivalent to loading [`ToyCity::write`]'s output.
    pub fn assets(&self) -> Result<Assets> {
        let snap = self.matrix.sim.snap_radius;
        Ok(Assets {
            population: self.population.clone(),
            road: self.road.clone(),
            networks: BTreeMap::from([
                ("regular".to_string(), SimNetwork::new(&self.road, &self.regular, snap)?),
                ("covid".to_string(), SimNetwork::new(&self.road, &self.covid, snap)?),
            ]),
            params: self.params.clone(),
            return_schedule: self.return_schedule.clone(),
            files: Vec::new(),
        })
    }

    /// Write an assets directory readable by [`Assets::load`], plus
    /// `matrix.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mk = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
        mk(&dir.join("params"))?;
        self.road.write_csv(&dir.join("nodes.csv"), &dir.join("links.csv"))?;
        self.regular.write_gtfs(&dir.join("gtfs").join("regular"))?;
        self.covid.write_gtfs(&dir.join("gtfs").join("covid"))?;
        write(&dir.join("population.json"), &self.population.to_json()?)?;
        for (label, p) in &self.params {
            write(&dir.join("params").join(format!("{label}.json")), &serde_json::to_string_pretty(p)?)?;
        }
        self.return_schedule.write_csv(&dir.join("return_schedule.csv"))?;
        write(&dir.join("matrix.json"), &serde_json::to_string_pretty(&self.matrix)?)?;
        Ok(())
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    write_text(path, &format!("{text}\n"))
}

fn home_work_agent(id: usize, home: &str, work: &str, leave: u32, back: u32) -> Agent {
    let act = |kind, node: &str, end| Activity {
        kind,
        zone: format!("z{node}"),
        node: node.to_string(),
        end_time: end,
    };
    Agent {
        id: format!("a{id:06}"),
        home_zone: format!("z{home}"),
        industry: "office".into(),
        teleworkable: false,
        agenda: vec![
            act(ActivityKind::Home, home, Some(leave)),
            act(ActivityKind::Work, work, Some(back)),
            act(ActivityKind::Home, home, None),
        ],
    }
}

/// `n_agents` commuters all reaching stop `A` at 08:00 for a single
/// vehicle to `B` at 08:10 (and one back at 17:10).
pub fn boarding_fixture(n_agents: usize, capacity: u32) -> Result<(RoadNetwork, TransitSchedule, Population)> {
    let node = |id: &str, x| Node { id: id.into(), x, y: 0.0 };
    let link = |f: &str, t: &str| Link {
        id: format!("{f}{t}"),
        from: f.into(),
        to: t.into(),
        length: 2000.0,
        capacity: 1800.0,
        freespeed: 10.0,
        modes: BTreeSet::from([LinkMode::Car, LinkMode::Bus]),
    };
    let road = RoadNetwork::new(vec![node("A", 0.0), node("B", 2000.0)], vec![link("A", "B"), link("B", "A")])?;
    let stop = |id: &str, x| Stop {
        id: id.into(),
        x,
        y: 0.0,
        node: Some(id.into()),
    };
    let st = |stop: &str, t, seq| StopTime {
        stop_id: stop.into(),
        arrival: t,
        departure: t,
        sequence: seq,
    };
    let trip = |id: &str, from: &str, to: &str, t| TransitTrip {
        trip_id: id.into(),
        service_id: "wk".into(),
        stop_times: vec![st(from, t, 1), st(to, t + 300, 2)],
    };
    let schedule = TransitSchedule {
        stops: vec![stop("A", 0.0), stop("B", 2000.0)],
        routes: vec![TransitRoute {
            route_id: "L".into(),
            route_type: 3,
            vehicle_capacity: capacity,
            trips: vec![trip("out", "A", "B", 8 * H + 600), trip("back", "B", "A", 17 * H + 600)],
        }],
    };
    let agents = (0..n_agents).map(|i| home_work_agent(i, "A", "B", 8 * H, 17 * H)).collect();
    Ok((road, schedule, Population::new(agents, vec!["zA".into(), "zB".into()])?))
}

/// Car commuters from `O` to `D` over two routes: a short one through a
/// 300 veh/h link and a longer unconstrained detour.
pub fn bottleneck_fixture(n_agents: usize) -> Result<(RoadNetwork, Population)> {
    let node = |id: &str, x, y| Node { id: id.into(), x, y };
    let link = |f: &str, t: &str, length, capacity| Link {
        id: format!("{f}{t}"),
        from: f.into(),
        to: t.into(),
        length,
        capacity,
        freespeed: 15.0,
        modes: BTreeSet::from([LinkMode::Car]),
    };
    let road = RoadNetwork::new(
        vec![node("O", 0.0, 0.0), node("A", 3000.0, 0.0), node("B", 3000.0, 3000.0), node("D", 6000.0, 0.0)],
        vec![
            link("O", "A", 3000.0, 3600.0),
            link("A", "D", 3000.0, 300.0),
            link("O", "B", 4500.0, 3600.0),
            link("B", "D", 4500.0, 3600.0),
            link("D", "O", 6000.0, 3600.0),
        ],
    )?;
    let agents = (0..n_agents)
        .map(|i| home_work_agent(i, "O", "D", 7 * H + (i as u32 % 60) * 10, 17 * H))
        .collect();
    Ok((road, Population::new(agents, vec!["zO".into(), "zD".into()])?))
}
