use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{EvalError, Scenario};
use crate::compiler::{classify_scene, CompileOptions, SceneType};
use crate::llm::ScenarioDescription;
use crate::net::network_stats;
use crate::routing::route_length;

/// Scene type named in a free-text request, if any.
pub fn scene_from_request(request: &str) -> Option<SceneType> {
    static PATTERNS: OnceLock<Vec<(Regex, SceneType)>> = OnceLock::new();
    let patterns = PATTERNS.get_or_init(|| {
        [
            (r"\b(off|on|exit|entry|entrance)[- ]?ramps?\b|\bramps?\b", SceneType::Ramp),
            (r"\bt[- ]?(intersection|junction)s?\b", SceneType::TIntersection),
            (r"\by[- ]?(intersection|junction)s?\b", SceneType::YIntersection),
            (r"\b(four|4)[- ]?way\b|\bcross[- ]?roads?\b", SceneType::FourWay),
            (r"\bforks?\b|\bforking\b", SceneType::Fork),
            (r"\bmerg(e|es|ing)\b", SceneType::Merge),
        ]
        .into_iter()
        .map(|(p, t)| (Regex::new(&format!("(?i){p}")).expect("static pattern"), t))
        .collect()
    });
    patterns.iter().find(|(re, _)| re.is_match(request)).map(|(_, t)| *t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConformityItem {
    pub request: String,
    /// Explicit scene type from the run configuration; wins over the request text.
    pub scene_hint: Option<SceneType>,
    /// Every stage succeeded on its first attempt.
    pub first_pass: bool,
    pub attempts: usize,
    pub description: Option<ScenarioDescription>,
    pub scenario: Option<Scenario>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformityRow {
    pub index: usize,
    pub generated: bool,
    pub first_pass: bool,
    pub attempts: usize,
    pub expected_scene: Option<SceneType>,
    pub actual_scene: Option<SceneType>,
    pub scene_ok: Option<bool>,
    pub lanes_ok: Option<bool>,
    pub vehicles_ok: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformityReport {
    pub attempted: usize,
    pub generated: usize,
    pub first_pass: usize,
    /// single-pass successes / attempted
    pub success_rate: f64,
    /// successes within the repair budget / attempted
    pub success_rate_with_repair: f64,
    pub scene_type_accuracy: Option<f64>,
    pub lanes_accuracy: Option<f64>,
    pub vehicles_accuracy: Option<f64>,
    pub rows: Vec<ConformityRow>,
}

fn lanes_match(desc: &ScenarioDescription, scenario: &Scenario) -> bool {
    desc.lanes_by_road.iter().all(|(road, n)| {
        scenario.network.edges.iter().any(|e| {
            let named = e.name.as_deref().is_some_and(|name| name.trim().eq_ignore_ascii_case(road.trim()));
            (named || e.id == *road) && e.num_lanes() == *n
        })
    })
}

fn ratio(flags: impl Iterator<Item = Option<bool>>) -> Option<f64> {
    let (mut yes, mut total) = (0usize, 0usize);
    for f in flags.flatten() {
        total += 1;
        yes += f as usize;
    }
    (total > 0).then(|| yes as f64 / total as f64)
}

pub fn conformity_report(batch: &[ConformityItem]) -> Result<ConformityReport, EvalError> {
    if batch.is_empty() {
        return Err(EvalError::EmptyBatch);
    }
    let opts = CompileOptions::default();
    let rows: Vec<ConformityRow> = batch
        .iter()
        .enumerate()
        .map(|(index, item)| {
            let expected = item
                .scene_hint
                .or_else(|| scene_from_request(&item.request))
                .or(item.description.as_ref().map(|d| d.scene_type));
            let mut row = ConformityRow {
                index,
                generated: item.scenario.is_some(),
                first_pass: item.first_pass && item.scenario.is_some(),
                attempts: item.attempts,
                expected_scene: expected,
                actual_scene: None,
                scene_ok: None,
                lanes_ok: None,
                vehicles_ok: None,
            };
            if let Some(s) = &item.scenario {
                let actual = classify_scene(&s.network, &opts);
                row.actual_scene = Some(actual);
                row.scene_ok = expected.map(|e| e == actual);
                if let Some(d) = &item.description {
                    row.lanes_ok = Some(lanes_match(d, s));
                    row.vehicles_ok = Some(d.vehicle_count == s.routes.len());
                }
            }
            row
        })
        .collect();
    let attempted = rows.len();
    let generated = rows.iter().filter(|r| r.generated).count();
    let first_pass = rows.iter().filter(|r| r.first_pass).count();
    Ok(ConformityReport {
        attempted,
        generated,
        first_pass,
        success_rate: first_pass as f64 / attempted as f64,
        success_rate_with_repair: generated as f64 / attempted as f64,
        scene_type_accuracy: ratio(rows.iter().map(|r| r.scene_ok)),
        lanes_accuracy: ratio(rows.iter().map(|r| r.lanes_ok)),
        vehicles_accuracy: ratio(rows.iter().map(|r| r.vehicles_ok)),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// population standard deviation
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: 0.0, std: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.max(0.0).sqrt() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityStats {
    pub scenarios: usize,
    pub lanes: MeanStd,
    pub edges: MeanStd,
    pub route_length: MeanStd,
    pub vehicles: MeanStd,
}

pub fn diversity_stats(scenarios: &[Scenario]) -> Result<DiversityStats, EvalError> {
    if scenarios.is_empty() {
        return Err(EvalError::EmptyBatch);
    }
    let mut lanes = Vec::new();
    let mut edges = Vec::new();
    let mut lengths = Vec::new();
    let mut vehicles = Vec::new();
    for s in scenarios {
        let stats = network_stats(&s.network);
        lanes.push(stats.total_lanes as f64);
        edges.push(stats.total_edges as f64);
        let route_lengths: Vec<f64> = s.routes.iter().filter_map(|r| route_length(&s.network, r).ok()).collect();
        lengths.push(MeanStd::of(&route_lengths).mean);
        vehicles.push(s.routes.len() as f64);
    }
    Ok(DiversityStats {
        scenarios: scenarios.len(),
        lanes: MeanStd::of(&lanes),
        edges: MeanStd::of(&edges),
        route_length: MeanStd::of(&lengths),
        vehicles: MeanStd::of(&vehicles),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::testnets::*;
    use crate::compiler::{compile, CompileOptions};
    use crate::eval::sim::tests::scenario;
    use crate::net::NetworkPlan;

    fn fork_scenario(vehicles: usize) -> Scenario {
        let plan = NetworkPlan {
            nodes: vec![node("s", -100.0, 0.0), node("c", 0.0, 0.0), node("l", 100.0, 60.0), node("r", 100.0, -60.0)],
            edges: vec![
                {
                    let mut e = edge("in", "s", "c", 2, 13.89);
                    e.name = Some("Main St".into());
                    e
                },
                edge("left", "c", "l", 1, 13.89),
                edge("right", "c", "r", 1, 13.89),
            ],
        };
        let net = compile(&plan, &CompileOptions::default()).unwrap();
        let routes: Vec<(String, f64)> = (0..vehicles).map(|i| (format!("v{i}"), i as f64)).collect();
        let spec: Vec<(&str, &[&str], f64)> =
            routes.iter().map(|(id, t)| (id.as_str(), &["in", "left"][..], *t)).collect();
        scenario(net, &spec, "v0")
    }

    fn desc(lanes: &[(&str, u32)], vehicles: usize) -> ScenarioDescription {
        ScenarioDescription {
            narrative: String::new(),
            scene_type: SceneType::Fork,
            lanes_by_road: lanes.iter().map(|(r, n)| (r.to_string(), *n)).collect(),
            vehicle_count: vehicles,
        }
    }

    #[test]
    fn request_scene_detection() {
        assert_eq!(scene_from_request("Generate 5 scenarios with a fork."), Some(SceneType::Fork));
        assert_eq!(scene_from_request("a freeway off-ramp please"), Some(SceneType::Ramp));
        assert_eq!(scene_from_request("T-intersection in a suburb"), Some(SceneType::TIntersection));
        assert_eq!(scene_from_request("a Y junction"), Some(SceneType::YIntersection));
        assert_eq!(scene_from_request("busy 4-way crossing"), Some(SceneType::FourWay));
        assert_eq!(scene_from_request("two roads merging"), Some(SceneType::Merge));
        assert_eq!(scene_from_request("an interesting scenario"), None);
        assert_eq!(scene_from_request("at the intersection"), None);
    }

    #[test]
    fn fork_batch_grid() {
        let mut batch = Vec::new();
        for i in 0..10 {
            let ok = i < 8;
            batch.push(ConformityItem {
                request: "Generate 10 scenarios with a fork.".into(),
                scene_hint: None,
                first_pass: ok,
                attempts: if ok { 1 } else { 3 },
                description: Some(desc(&[("Main St", 2)], 3)),
                scenario: ok.then(|| fork_scenario(3)),
            });
        }
        let r = conformity_report(&batch).unwrap();
        assert_eq!(r.success_rate, 0.8);
        assert_eq!(r.scene_type_accuracy, Some(1.0));
        assert_eq!(r.lanes_accuracy, Some(1.0));
        assert_eq!(r.vehicles_accuracy, Some(1.0));
    }

    #[test]
    fn lane_mismatch_counts_once() {
        let mut batch: Vec<ConformityItem> = (0..4)
            .map(|_| ConformityItem {
                request: "fork".into(),
                scene_hint: None,
                first_pass: true,
                attempts: 1,
                description: Some(desc(&[("Main St", 2)], 2)),
                scenario: Some(fork_scenario(2)),
            })
            .collect();
        batch[2].description = Some(desc(&[("Main St", 3)], 2));
        let r = conformity_report(&batch).unwrap();
        assert_eq!(r.lanes_accuracy, Some(0.75));
        assert_eq!(r.success_rate, 1.0);
        assert!(conformity_report(&[]).is_err());
    }

    #[test]
    fn generic_request_uses_footer() {
        let item = ConformityItem {
            request: "something interesting".into(),
            scene_hint: None,
            first_pass: false,
            attempts: 2,
            description: Some(desc(&[], 1)),
            scenario: Some(fork_scenario(1)),
        };
        let r = conformity_report(&[item]).unwrap();
        assert_eq!(r.rows[0].expected_scene, Some(SceneType::Fork));
        assert_eq!(r.scene_type_accuracy, Some(1.0));
        assert_eq!(r.success_rate, 0.0);
        assert_eq!(r.success_rate_with_repair, 1.0);
    }

    #[test]
    fn diversity_arithmetic() {
        let same = vec![fork_scenario(2), fork_scenario(2)];
        let d = diversity_stats(&same).unwrap();
        for m in [d.lanes, d.edges, d.route_length, d.vehicles] {
            assert_eq!(m.std, 0.0);
        }
        let m = MeanStd::of(&[10.0, 20.0]);
        assert_eq!((m.mean, m.std), (15.0, 5.0));
        let d = diversity_stats(&[fork_scenario(1), fork_scenario(3)]).unwrap();
        assert_eq!((d.vehicles.mean, d.vehicles.std), (2.0, 1.0));
        assert!(diversity_stats(&[]).is_err());
    }
}
