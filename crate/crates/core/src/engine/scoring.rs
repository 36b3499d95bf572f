use crate::DAY_SECONDS;

use super::mobsim::{EventKind, EventLog};
use super::SimConfig;

/// Linear plan score per agent:
/// `beta_perf * activity hours - beta_travel * travel hours - penalty * denials`.
///
/// Activity time runs from midnight to the first departure, between trips,
/// and from the last arrival to the end of the nominal day. Agents with no
/// events spent the whole day at home.
pub fn score_plans(log: &EventLog, n_agents: usize, cfg: &SimConfig) -> Vec<f64> {
    #[derive(Clone, Copy, Default)]
    struct Acc {
        act_start: u32,
        travel_start: Option<u32>,
        act: u64,
        travel: u64,
        denied: u32,
    }
    let mut acc = vec![Acc::default(); n_agents];
    for e in &log.events {
        let a = &mut acc[e.agent as usize];
        match e.kind {
            EventKind::Depart => {
                a.act += u64::from(e.time.saturating_sub(a.act_start));
                a.travel_start = Some(e.time);
            }
            EventKind::Arrive | EventKind::Stuck | EventKind::Abandon => {
                if let Some(t0) = a.travel_start.take() {
                    a.travel += u64::from(e.time - t0);
                }
                a.act_start = e.time;
            }
            EventKind::DeniedBoarding => a.denied += 1,
            _ => {}
        }
    }
    acc.iter()
        .map(|a| {
            let tail = if a.travel_start.is_none() {
                u64::from(DAY_SECONDS.saturating_sub(a.act_start))
            } else {
                0
            };
            let act_h = (a.act + tail) as f64 / 3600.0;
            let travel_h = a.travel as f64 / 3600.0;
            cfg.score_beta_perf * act_h
                - cfg.score_beta_travel * travel_h
                - cfg.denied_boarding_penalty * f64::from(a.denied)
        })
        .collect()
}
