use serde::{Deserialize, Serialize};

use super::sim::{EventKind, Trace};
use super::{EvalError, Scenario};
use crate::routing::route_length;

const MAX_SPEED: f64 = 33.33;
const COMFORT_ACCEL: f64 = 3.0;
const COMFORT_JERK: f64 = 5.0;
const TTC_SATURATION: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub comfort: f64,
    pub efficiency: f64,
    pub safety: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self { comfort: 0.2, efficiency: 0.3, safety: 0.5 }
    }
}

impl ScoreWeights {
    pub fn check(&self) -> Result<(), EvalError> {
        let w = [self.comfort, self.efficiency, self.safety];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(EvalError::Weights(format!("weights must be nonnegative, got {w:?}")));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(EvalError::Weights(format!("weights must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrivingScore {
    pub comfort: f64,
    pub efficiency: f64,
    pub safety: f64,
    pub driving_score: f64,
    pub route_completion: f64,
    pub total_score: f64,
    pub success: bool,
    /// seconds of simulated time
    pub use_time: f64,
}

fn collided(trace: &Trace, av: &str) -> bool {
    trace.first_event(av, EventKind::Collision).is_some()
}

/// Share of the AV's preset route length covered before it stopped.
pub fn route_completion(trace: &Trace, scenario: &Scenario) -> f64 {
    let av = scenario.av_id.as_str();
    if trace.first_event(av, EventKind::Arrive).is_some() && !collided(trace, av) {
        return 1.0;
    }
    let Some(route) = scenario.av_route() else {
        return 0.0;
    };
    let Ok(total) = route_length(&scenario.network, route) else {
        return 0.0;
    };
    let Some((_, last)) = trace.states_of(av).last() else {
        return 0.0;
    };
    let net = &scenario.network;
    let mut done: f64 = route.edges[..last.route_index.min(route.edges.len())]
        .iter()
        .filter_map(|e| net.edge(e))
        .map(|e| e.length())
        .sum();
    if let Some(edge) = net.edge(&last.edge) {
        let lane_len = edge.lanes.get(last.lane as usize).map_or(0.0, |l| l.length);
        if lane_len > 0.0 {
            done += last.offset / lane_len * edge.length();
        }
    }
    if total <= 0.0 {
        return 0.0;
    }
    (done / total).clamp(0.0, 1.0)
}

/// Comfort, efficiency and safety over the AV's active steps.
pub fn driving_score(trace: &Trace, scenario: &Scenario, weights: &ScoreWeights) -> Result<DrivingScore, EvalError> {
    weights.check()?;
    let av = scenario.av_id.as_str();
    let net = &scenario.network;
    let crashed = collided(trace, av);
    let active: Vec<_> = trace.states_of(av).filter(|(_, s)| s.active).map(|(_, s)| s).collect();

    let (mut comfortable, mut ratio_sum, mut min_ttc) = (0usize, 0.0, f64::INFINITY);
    let mut prev_accel: Option<f64> = None;
    for s in &active {
        let jerk = prev_accel.map_or(0.0, |p| (s.accel - p) / trace.dt);
        prev_accel = Some(s.accel);
        if s.accel.abs() <= COMFORT_ACCEL && jerk.abs() <= COMFORT_JERK {
            comfortable += 1;
        }
        let limit = net
            .edge(&s.edge)
            .and_then(|e| e.lanes.get(s.lane as usize))
            .map_or(MAX_SPEED, |l| l.speed.min(MAX_SPEED));
        ratio_sum += (s.speed / limit).clamp(0.0, 1.0);
        if let Some(l) = s.leader {
            let closing = s.speed - l.speed;
            if l.gap <= 0.0 {
                min_ttc = 0.0;
            } else if closing > 0.0 {
                min_ttc = min_ttc.min(l.gap / closing);
            }
        }
    }
    let (comfort, efficiency) = if active.is_empty() {
        (1.0, 0.0)
    } else {
        (comfortable as f64 / active.len() as f64, ratio_sum / active.len() as f64)
    };
    let safety = if crashed { 0.0 } else { (min_ttc / TTC_SATURATION).min(1.0) };
    let driving = 100.0 * (weights.comfort * comfort + weights.efficiency * efficiency + weights.safety * safety);
    let completion = route_completion(trace, scenario);
    let depart = trace.first_event(av, EventKind::Depart).map(|e| e.time);
    let arrive = trace.first_event(av, EventKind::Arrive).map(|e| e.time);
    let success = arrive.is_some() && !crashed;
    let use_time = match (depart, arrive) {
        (Some(d), Some(a)) if success => a - d,
        _ => trace.horizon,
    };
    Ok(DrivingScore {
        comfort,
        efficiency,
        safety,
        driving_score: driving,
        route_completion: completion,
        total_score: completion * driving,
        success,
        use_time,
    })
}
