//! Scenario evaluation: a small microscopic simulator, driving scores,
//! conformity of generated scenarios to their requests, and diversity.

mod baseline;
mod metrics;
mod score;
mod sim;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diag::{DiagCode, Diagnostic};
use crate::llm::ScenarioDescription;
use crate::net::{CompiledNetwork, Route};
use crate::routing::{route_is_connected, RoutingError};

pub use baseline::{random_trip_baseline, Baseline, BaselineParams};
pub use metrics::{
    conformity_report, diversity_stats, scene_from_request, ConformityItem, ConformityReport, ConformityRow,
    DiversityStats, MeanStd,
};
pub use score::{driving_score, route_completion, DrivingScore, ScoreWeights};
pub use sim::{
    simulate, AvPolicy, EventKind, IdmParams, LeaderInfo, SimConfig, SimEvent, Trace, TraceStep, VehicleState,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid scenario: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidScenario(Vec<Diagnostic>),
    #[error("invalid simulation configuration: {0}")]
    Config(String),
    #[error("invalid score weights: {0}")]
    Weights(String),
    #[error("no scenarios to evaluate")]
    EmptyBatch,
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error("baseline could not produce {n} routable trips after {tries} seeds")]
    Baseline { n: usize, tries: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub network: CompiledNetwork,
    pub routes: Vec<Route>,
    pub av_id: String,
    pub description: Option<ScenarioDescription>,
    pub request: String,
}

impl Scenario {
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        let av_routes = self.routes.iter().filter(|r| r.vehicle_id == self.av_id).count();
        if av_routes != 1 {
            diags.push(Diagnostic::new(
                DiagCode::CountMismatch,
                self.av_id.clone(),
                format!("AV '{}' must have exactly one route, found {av_routes}", self.av_id),
            ));
        }
        let mut seen = HashSet::new();
        for r in &self.routes {
            if !seen.insert(r.vehicle_id.as_str()) {
                diags.push(Diagnostic::new(
                    DiagCode::DuplicateId,
                    r.vehicle_id.clone(),
                    format!("vehicle '{}' has more than one route", r.vehicle_id),
                ));
            }
            if r.edges.is_empty() {
                diags.push(Diagnostic::bad_attribute(r.vehicle_id.clone(), format!("route of '{}' is empty", r.vehicle_id)));
            }
            if !(r.depart_time.is_finite() && r.depart_time >= 0.0) {
                diags.push(Diagnostic::bad_attribute(
                    r.vehicle_id.clone(),
                    format!("vehicle '{}' has invalid depart time {}", r.vehicle_id, r.depart_time),
                ));
            }
            for e in &r.edges {
                if self.network.edge(e).is_none() {
                    diags.push(Diagnostic::new(
                        DiagCode::UnknownEdge,
                        e.clone(),
                        format!("route of '{}' uses unknown edge '{e}'", r.vehicle_id),
                    ));
                }
            }
            if !route_is_connected(&self.network, &r.edges) {
                diags.push(Diagnostic::new(
                    DiagCode::Unreachable,
                    r.vehicle_id.clone(),
                    format!("route of '{}' has consecutive edges without a connection", r.vehicle_id),
                ));
            }
        }
        diags
    }

    pub fn av_route(&self) -> Option<&Route> {
        self.routes.iter().find(|r| r.vehicle_id == self.av_id)
    }
}


#[cfg(test)]
pub(crate) use sim::tests as sim_fixtures;
