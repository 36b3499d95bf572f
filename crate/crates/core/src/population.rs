//! Synthetic population: generation from templates and phase-dependent
//! work-from-home suppression of work tours.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::seeding::unit_draw;
use crate::{Error, Result, MAX_TIME};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivityKind {
    Home,
    Work,
    School,
    Shop,
    Other,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activity {
    pub kind: ActivityKind,
    pub zone: String,
    pub node: String,
    /// Seconds from midnight; `None` for the final activity of the day.
    pub end_time: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Agent {
    pub id: String,
    pub home_zone: String,
    pub industry: String,
    pub teleworkable: bool,
    pub agenda: Vec<Activity>,
}

impl Agent {
    pub fn trip_count(&self) -> usize {
        self.agenda.len().saturating_sub(1)
    }

    pub fn has_work_tour(&self) -> bool {
        self.agenda.iter().any(|a| a.kind == ActivityKind::Work)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(format!("agent {}: {m}", self.id)));
        match (self.agenda.first(), self.agenda.last()) {
            (Some(f), Some(l)) if f.kind == ActivityKind::Home && l.kind == ActivityKind::Home => {}
            _ => return bad("agenda must start and end at home"),
        }
        let mut prev = None;
        for (i, a) in self.agenda.iter().enumerate() {
            let last = i + 1 == self.agenda.len();
            match (a.end_time, last) {
                (None, false) => return bad("only the final activity may be open-ended"),
                (Some(t), _) if t > MAX_TIME => return bad("end_time past the simulated day"),
                (Some(t), _) if prev.is_some_and(|p| t <= p) => {
                    return bad("activity end times must be strictly increasing")
                }
                _ => {}
            }
            prev = a.end_time.or(prev);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Population {
    pub agents: Vec<Agent>,
    pub zones: Vec<String>,
}

impl Population {
    pub fn new(agents: Vec<Agent>, zones: Vec<String>) -> Result<Self> {
        let known: BTreeSet<&str> = zones.iter().map(String::as_str).collect();
        let mut ids = BTreeSet::new();
        for a in &agents {
            if !ids.insert(a.id.as_str()) {
                return Err(Error::Invalid(format!("duplicate agent id {}", a.id)));
            }
            a.validate()?;
            let zone_ok = known.contains(a.home_zone.as_str())
                && a.agenda.iter().all(|x| known.contains(x.zone.as_str()));
            if !zone_ok {
                return Err(Error::Invalid(format!("agent {} uses a zone outside the zone list", a.id)));
            }
        }
        Ok(Self { agents, zones })
    }

    /// Build from an agent list, taking every zone the agents mention.
    pub fn from_agents(agents: Vec<Agent>) -> Result<Self> {
        let zones: BTreeSet<String> = agents
            .iter()
            .flat_map(|a| std::iter::once(a.home_zone.clone()).chain(a.agenda.iter().map(|x| x.zone.clone())))
            .collect();
        Self::new(agents, zones.into_iter().collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.agents)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_agents(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn total_trips(&self) -> usize {
        self.agents.iter().map(Agent::trip_count).sum()
    }
}

// ---------------------------------------------------------------------------
// generation

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoneSpec {
    pub id: String,
    pub nodes: Vec<String>,
    /// relative weight as a destination for non-home activities
    pub attraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndustrySpec {
    pub code: String,
    /// share of workers
    pub share: f64,
    /// share of this industry's workers who can work from home
    pub teleworkable_share: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateActivity {
    pub kind: ActivityKind,
    pub end_time: Option<u32>,
    /// uniform +/- jitter in seconds applied to end_time
    #[serde(default)]
    pub jitter: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgendaTemplate {
    pub weight: f64,
    pub activities: Vec<TemplateActivity>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub zones: Vec<ZoneSpec>,
    pub agents_per_zone: usize,
    /// fraction of agents who are workers
    pub worker_share: f64,
    pub industries: Vec<IndustrySpec>,
    pub worker_templates: Vec<AgendaTemplate>,
    pub nonworker_templates: Vec<AgendaTemplate>,
}

/// Industry code given to agents without a job.
pub const NO_INDUSTRY: &str = "none";

fn pick_weighted<'a, T, R: Rng>(items: &'a [T], weight: impl Fn(&T) -> f64, rng: &mut R) -> &'a T {
    let total: f64 = items.iter().map(&weight).sum();
    let mut x = rng.gen_range(0.0..total);
    for it in items {
        x -= weight(it);
        if x < 0.0 {
            return it;
        }
    }
    items.last().expect("nonempty")
}

/// Largest-remainder split of `n` according to `shares`.
fn apportion(n: usize, shares: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = shares.iter().map(|s| s * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut rest = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (raw[a] - raw[a].floor(), raw[b] - raw[b].floor());
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for i in order {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    counts
}

fn check_template(t: &AgendaTemplate) -> Result<()> {
    let ok = t.weight > 0.0
        && t.activities.first().is_some_and(|a| a.kind == ActivityKind::Home)
        && t.activities.last().is_some_and(|a| a.kind == ActivityKind::Home && a.end_time.is_none())
        && t.activities[..t.activities.len() - 1].iter().all(|a| a.end_time.is_some());
    if ok {
        Ok(())
    } else {
        Err(Error::Invalid(
            "agenda templates must run home..home with only the last activity open-ended".into(),
        ))
    }
}

pub fn generate_toy_population(spec: &PopulationSpec, seed: u64) -> Result<Population> {
    if spec.zones.is_empty() {
        return Err(Error::Empty("zone list"));
    }
    if spec.zones.iter().any(|z| z.nodes.is_empty() || z.attraction.is_nan() || z.attraction < 0.0) {
        return Err(Error::Invalid("every zone needs at least one node and a non-negative attraction".into()));
    }
    if spec.zones.iter().map(|z| z.attraction).sum::<f64>() <= 0.0 {
        return Err(Error::Invalid("zone attractions sum to zero".into()));
    }
    let share_sum: f64 = spec.industries.iter().map(|i| i.share).sum();
    if spec.industries.is_empty() || (share_sum - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!("industry shares sum to {share_sum}, expected 1")));
    }
    if spec
        .industries
        .iter()
        .any(|i| !(0.0..=1.0).contains(&i.share) || !(0.0..=1.0).contains(&i.teleworkable_share))
    {
        return Err(Error::Invalid("industry shares must lie in [0, 1]".into()));
    }
    if !(0.0..=1.0).contains(&spec.worker_share) {
        return Err(Error::Invalid("worker_share must lie in [0, 1]".into()));
    }
    for t in spec.worker_templates.iter().chain(&spec.nonworker_templates) {
        check_template(t)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.zones.len() * spec.agents_per_zone;
    let n_workers = (spec.worker_share * n as f64).round() as usize;
    if n_workers > 0 && spec.worker_templates.is_empty() {
        return Err(Error::Invalid("workers requested but no worker templates".into()));
    }
    if n_workers < n && spec.nonworker_templates.is_empty() {
        return Err(Error::Invalid("non-workers requested but no non-worker templates".into()));
    }

    // exact quotas: who works, in which industry, and who can telework
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut job: Vec<Option<(usize, bool)>> = vec![None; n];
    let shares: Vec<f64> = spec.industries.iter().map(|i| i.share).collect();
    let mut cursor = order[..n_workers].iter();
    for (k, count) in apportion(n_workers, &shares).into_iter().enumerate() {
        let tele = (spec.industries[k].teleworkable_share * count as f64).round() as usize;
        for j in 0..count {
            let &agent = cursor.next().expect("quota within worker count");
            job[agent] = Some((k, j < tele));
        }
    }

    let mut agents = Vec::with_capacity(n);
    for (idx, job) in job.into_iter().enumerate() {
        let zone = &spec.zones[idx / spec.agents_per_zone];
        let home_node = zone.nodes[rng.gen_range(0..zone.nodes.len())].clone();
        let templates = if job.is_some() {
            &spec.worker_templates
        } else {
            &spec.nonworker_templates
        };
        let template = pick_weighted(templates, |t| t.weight, &mut rng);
        let work_zone = pick_weighted(&spec.zones, |z| z.attraction, &mut rng);
        let work_node = work_zone.nodes[rng.gen_range(0..work_zone.nodes.len())].clone();

        let mut agenda = Vec::with_capacity(template.activities.len());
        let mut prev_end = 0u32;
        for ta in &template.activities {
            let (z, node) = match ta.kind {
                ActivityKind::Home => (zone.id.clone(), home_node.clone()),
                ActivityKind::Work => (work_zone.id.clone(), work_node.clone()),
                _ => {
                    let z = pick_weighted(&spec.zones, |z| z.attraction, &mut rng);
                    (z.id.clone(), z.nodes[rng.gen_range(0..z.nodes.len())].clone())
                }
            };
            let end_time = ta.end_time.map(|base| {
                let j = i64::from(ta.jitter);
                let offset = if j > 0 { rng.gen_range(-j..=j) } else { 0 };
                let t = (i64::from(base) + offset).clamp(0, i64::from(MAX_TIME)) as u32;
                // keep windows ordered even under jitter
                let t = t.max(prev_end + 300).min(MAX_TIME);
                prev_end = t;
                t
            });
            agenda.push(Activity {
                kind: ta.kind,
                zone: z,
                node,
                end_time,
            });
        }
        let (industry, teleworkable) = match job {
            Some((k, tele)) => (spec.industries[k].code.clone(), tele),
            None => (NO_INDUSTRY.to_string(), false),
        };
        agents.push(Agent {
            id: format!("a{idx:06}"),
            home_zone: zone.id.clone(),
            industry,
            teleworkable,
            agenda,
        });
    }
    Population::new(agents, spec.zones.iter().map(|z| z.id.clone()).collect())
}

// ---------------------------------------------------------------------------
// phases and work-from-home

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Phase {
    PreCovid,
    Covid,
    P1,
    P2,
    P3,
    P4,
}

impl Phase {
    pub const REOPENING: [Phase; 4] = [Phase::P1, Phase::P2, Phase::P3, Phase::P4];

    pub fn name(self) -> &'static str {
        match self {
            Phase::PreCovid => "precovid",
            Phase::Covid => "covid",
            Phase::P1 => "p1",
            Phase::P2 => "p2",
            Phase::P3 => "p3",
            Phase::P4 => "p4",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "precovid" | "pre-covid" => Phase::PreCovid,
            "covid" => Phase::Covid,
            "p1" | "1" => Phase::P1,
            "p2" | "2" => Phase::P2,
            "p3" | "3" => Phase::P3,
            "p4" | "4" => Phase::P4,
            _ => return Err(Error::UnknownPhase(s.to_string())),
        })
    }
}

impl TryFrom<String> for Phase {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Phase> for String {
    fn from(p: Phase) -> String {
        p.name().to_string()
    }
}

/// Fraction of teleworkable workers commuting again, per reopening phase
/// and industry. The COVID phase is 0 everywhere.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReturnSchedule {
    fractions: BTreeMap<(Phase, String), f64>,
}

/// Industry key matching any industry without its own row.
pub const ANY_INDUSTRY: &str = "*";

impl ReturnSchedule {
    pub fn new(fractions: BTreeMap<(Phase, String), f64>) -> Result<Self> {
        for ((p, ind), f) in &fractions {
            if !matches!(p, Phase::P1 | Phase::P2 | Phase::P3 | Phase::P4) {
                return Err(Error::Invalid(format!("return schedule row for non-reopening phase {p}")));
            }
            if !(0.0..=1.0).contains(f) {
                return Err(Error::Invalid(format!("return fraction {f} for ({p}, {ind}) outside [0, 1]")));
            }
        }
        let s = Self { fractions };
        let industries: BTreeSet<&str> = s.fractions.keys().map(|(_, i)| i.as_str()).collect();
        for ind in industries {
            let mut prev = 0.0;
            for p in Phase::REOPENING {
                let f = s.fraction(p, ind);
                if f < prev {
                    return Err(Error::Invalid(format!(
                        "return fractions for {ind} decrease at phase {p}"
                    )));
                }
                prev = f;
            }
        }
        Ok(s)
    }

    /// Same fraction for every industry in every phase.
    pub fn uniform(fraction: f64) -> Result<Self> {
        Self::new(
            Phase::REOPENING
                .iter()
                .map(|p| ((*p, ANY_INDUSTRY.to_string()), fraction))
                .collect(),
        )
    }

    pub fn fraction(&self, phase: Phase, industry: &str) -> f64 {
        match phase {
            Phase::PreCovid => 1.0,
            Phase::Covid => 0.0,
            _ => self
                .fractions
                .get(&(phase, industry.to_string()))
                .or_else(|| self.fractions.get(&(phase, ANY_INDUSTRY.to_string())))
                .copied()
                .unwrap_or(0.0),
        }
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = path.display().to_string();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(path, io),
                other => Error::parse(&file, 1, format!("{other:?}")),
            })?;
        let mut fractions = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() < 3 {
                return Err(Error::parse(&file, line, "expected phase,industry,fraction"));
            }
            let phase: Phase = rec[0].parse()?;
            let f: f64 = rec[2]
                .parse()
                .map_err(|_| Error::parse(&file, line, format!("bad fraction {:?}", &rec[2])))?;
            fractions.insert((phase, rec[1].to_string()), f);
        }
        Self::new(fractions)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["phase", "industry", "fraction"])?;
        for ((p, ind), f) in &self.fractions {
            w.write_record([p.name(), ind, &f.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Whether an agent commutes in `phase`, by threshold sampling on a hash of
/// its id. The draw does not depend on the phase, so anyone returned in one
/// phase stays returned in every later phase with a higher fraction.
pub fn returns_to_work(agent_id: &str, fraction: f64, seed: u64) -> bool {
    unit_draw(agent_id, seed) < fraction
}

/// Remove every home-anchored tour containing a work activity and merge the
/// surrounding home stays.
pub fn remove_work_tours(agenda: &[Activity]) -> Vec<Activity> {
    let mut out: Vec<Activity> = Vec::with_capacity(agenda.len());
    let mut tour: Vec<&Activity> = Vec::new();
    for a in agenda {
        if a.kind != ActivityKind::Home {
            tour.push(a);
            continue;
        }
        let drop_tour = tour.iter().any(|x| x.kind == ActivityKind::Work);
        if drop_tour {
            // the agent never left: the earlier home stay absorbs this one
            let last = out.last_mut().expect("agenda starts at home");
            last.end_time = a.end_time;
        } else {
            out.extend(tour.iter().map(|x| (*x).clone()));
            out.push(a.clone());
        }
        tour.clear();
    }
    out
}

pub fn apply_wfh(
    pop: &Population,
    schedule: &ReturnSchedule,
    phase: Phase,
    seed: u64,
) -> Result<Population> {
    let mut all_day_home = 0usize;
    let agents = pop
        .agents
        .iter()
        .map(|a| {
            if !a.teleworkable || !a.has_work_tour() {
                return a.clone();
            }
            if returns_to_work(&a.id, schedule.fraction(phase, &a.industry), seed) {
                return a.clone();
            }
            let agenda = remove_work_tours(&a.agenda);
            if agenda.len() == 1 {
                all_day_home += 1;
            }
            Agent {
                agenda,
                ..a.clone()
            }
        })
        .collect();
    if all_day_home > 0 {
        log::info!("{phase}: {all_day_home} agents reduced to an all-day home activity");
    }
    Ok(Population {
        agents,
        zones: pop.zones.clone(),
    })
}

/// Share of workers who lost their work tour between `before` and `after`.
pub fn wfh_rate(before: &Population, after: &Population) -> Result<f64> {
    let after_by_id: HashMap<&str, &Agent> = after.agents.iter().map(|a| (a.id.as_str(), a)).collect();
    let mut workers = 0usize;
    let mut suppressed = 0usize;
    for a in before.agents.iter().filter(|a| a.has_work_tour()) {
        workers += 1;
        let b = after_by_id
            .get(a.id.as_str())
            .ok_or_else(|| Error::Invalid(format!("agent {} missing from second population", a.id)))?;
        if !b.has_work_tour() {
            suppressed += 1;
        }
    }
    if workers == 0 {
        return Err(Error::Empty("workers in baseline population"));
    }
    Ok(suppressed as f64 / workers as f64)
}

/// Per home zone, relative change in agents making at least one trip.
/// `None` where the baseline zone has no trip-makers.
pub fn zone_agent_delta(before: &Population, after: &Population) -> BTreeMap<String, Option<f64>> {
    fn count(p: &Population) -> BTreeMap<&str, usize> {
        let mut m = BTreeMap::new();
        for a in p.agents.iter().filter(|a| a.trip_count() > 0) {
            *m.entry(a.home_zone.as_str()).or_default() += 1;
        }
        m
    }
    let (b, a) = (count(before), count(after));
    before
        .zones
        .iter()
        .map(|z| {
            let nb = b.get(z.as_str()).copied().unwrap_or(0);
            let na = a.get(z.as_str()).copied().unwrap_or(0);
            let delta = (nb > 0).then(|| (na as f64 - nb as f64) / nb as f64);
            (z.clone(), delta)
        })
        .collect()
}
