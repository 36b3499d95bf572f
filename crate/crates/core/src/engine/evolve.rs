use rayon::prelude::*;

use crate::choice::MnlParams;
use crate::population::Population;
use crate::seeding::{derive_seed, to_unit};
use crate::Result;

use super::mobsim::{run_mobsim, EventLog};
use super::network::SimNetwork;
use super::plans::{initial_plans, replan_agent, Plan};
use super::router::{TransitFeedback, TravelTimes};
use super::scoring::score_plans;
use super::{IterationStats, SimConfig};

pub struct EvolveOutput {
    /// plans executed in the final iteration
    pub plans: Vec<Plan>,
    pub stats: Vec<IterationStats>,
    /// final-iteration scores per agent
    pub scores: Vec<f64>,
    pub last_log: EventLog,
    /// highest transit load seen in any iteration
    pub max_onboard: u32,
}

pub fn evolve(
    pop: &Population,
    net: &SimNetwork,
    params: &MnlParams,
    cfg: &SimConfig,
    seed: u64,
) -> Result<EvolveOutput> {
    cfg.validate()?;
    params.validate()?;
    let plans = initial_plans(pop, net, params, cfg, seed)?;
    evolve_from(pop, plans, net, params, cfg, seed)
}

/// Run `cfg.iterations` rounds of replan → execute → score starting from
/// `plans`. No replanning happens before the first execution.
pub fn evolve_from(
    pop: &Population,
    mut plans: Vec<Plan>,
    net: &SimNetwork,
    params: &MnlParams,
    cfg: &SimConfig,
    seed: u64,
) -> Result<EvolveOutput> {
    cfg.validate()?;
    let mut tt = TravelTimes::free_flow(net, cfg.travel_time_bin, cfg.end_time);
    let mut feedback = TransitFeedback::empty(cfg.travel_time_bin);
    let mut stats = Vec::with_capacity(cfg.iterations);
    let mut max_onboard = 0;
    let mut last = None;
    for it in 0..cfg.iterations {
        if it > 0 {
            let iter_seed = derive_seed(seed, &[it as u64]);
            plans = pop
                .agents
                .par_iter()
                .zip(plans.into_par_iter())
                .enumerate()
                .map(|(i, (agent, plan))| {
                    let draw = to_unit(derive_seed(iter_seed, &[i as u64, 0x5e1ec7]));
                    if draw < cfg.replan_fraction {
                        replan_agent(agent, net, params, &tt, &feedback, cfg, derive_seed(seed, &[it as u64, i as u64]))
                    } else {
                        Ok(plan)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
        }
        let out = run_mobsim(pop, &plans, net, cfg, derive_seed(seed, &[it as u64, 1]));
        let scores = score_plans(&out.log, pop.agents.len(), cfg);
        let mut s = out.stats;
        s.iteration = it;
        s.average_score = if scores.is_empty() {
            0.0
        } else {
            scores.iter().sum::<f64>() / scores.len() as f64
        };
        log::debug!(
            "iteration {it}: score {:.3}, denied {}",
            s.average_score,
            s.denied_boardings
        );
        stats.push(s);
        max_onboard = max_onboard.max(out.max_onboard);
        tt = TravelTimes::from_events(net, &out.log, cfg.travel_time_bin, cfg.end_time);
        feedback = out.feedback;
        last = Some((out.log, scores));
    }
    let (last_log, scores) = last.expect("iterations >= 1");
    Ok(EvolveOutput {
        plans,
        stats,
        scores,
        last_log,
        max_onboard,
    })
}
