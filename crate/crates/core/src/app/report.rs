//! Loading finished runs back from disk and text tables over them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::pipeline::{BatchSummary, NET_FILE, ROUTES_FILE};
use super::AppError;
use crate::eval::{
    driving_score, random_trip_baseline, simulate, AvPolicy, BaselineParams, ConformityReport, DiversityStats,
    DrivingScore, MeanStd, Scenario, ScoreWeights, SimConfig,
};
use crate::llm::parse_description;
use crate::net::{parse_net, parse_routes};

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScenario {
    pub index: usize,
    pub dir: PathBuf,
    pub scenario: Scenario,
}

fn read(path: &Path) -> Result<String, AppError> {
    fs::read_to_string(path).map_err(AppError::io(path))
}

/// Successful scenarios of a run directory, re-read from their files.
pub fn load_batch(out_dir: &Path) -> Result<(BatchSummary, Vec<LoadedScenario>), AppError> {
    let path = out_dir.join("summary.json");
    let summary: BatchSummary = serde_json::from_str(&read(&path)?)
        .map_err(|e| AppError::Usage(format!("{}: not a run summary: {e}", path.display())))?;
    let mut out = Vec::new();
    for s in summary.scenarios.iter().filter(|s| s.success) {
        let dir = out_dir.join(&s.dir);
        let net_path = dir.join(NET_FILE);
        let net = parse_net(&read(&net_path)?).map_err(|diags| AppError::Invalid { path: net_path, diags })?;
        let routes_path = dir.join(ROUTES_FILE);
        let routes =
            parse_routes(&read(&routes_path)?).map_err(|diags| AppError::Invalid { path: routes_path.clone(), diags })?;
        let av_id = routes
            .av_id
            .ok_or_else(|| AppError::Usage(format!("{}: no vehicle has type AV", routes_path.display())))?;
        let description = fs::read_to_string(dir.join("description.txt")).ok().and_then(|t| parse_description(&t).ok());
        out.push(LoadedScenario {
            index: s.index,
            dir,
            scenario: Scenario {
                network: net.network,
                routes: routes.routes,
                av_id,
                description,
                request: summary.request.clone(),
            },
        });
    }
    Ok((summary, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengeRow {
    pub index: usize,
    pub vehicles: usize,
    pub ours: DrivingScore,
    /// `None` when no routable RandomTrip set of the same size was found.
    pub random_trip: Option<DrivingScore>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub episodes: usize,
    pub success_rate: f64,
    pub route_completion: MeanStd,
    pub driving_score: MeanStd,
    pub total_score: MeanStd,
    pub use_time: MeanStd,
}

impl Aggregate {
    fn of(scores: &[DrivingScore]) -> Option<Self> {
        if scores.is_empty() {
            return None;
        }
        let col = |f: fn(&DrivingScore) -> f64| MeanStd::of(&scores.iter().map(f).collect::<Vec<_>>());
        Some(Self {
            episodes: scores.len(),
            success_rate: scores.iter().filter(|s| s.success).count() as f64 / scores.len() as f64,
            route_completion: col(|s| s.route_completion),
            driving_score: col(|s| s.driving_score),
            total_score: col(|s| s.total_score),
            use_time: col(|s| s.use_time),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengeReport {
    pub policy: String,
    pub rows: Vec<ChallengeRow>,
    pub ours: Option<Aggregate>,
    pub random_trip: Option<Aggregate>,
}

/// Drives each generated scenario and a RandomTrip counterpart with the same
/// vehicle count on the same network.
pub fn evaluate_batch(
    scenarios: &[LoadedScenario],
    sim: &SimConfig,
    policy: AvPolicy,
    weights: &ScoreWeights,
    baseline: &BaselineParams,
    seed: u64,
) -> Result<ChallengeReport, AppError> {
    let mut rows = Vec::new();
    for s in scenarios {
        let trace = simulate(&s.scenario, sim, policy)?;
        let ours = driving_score(&trace, &s.scenario, weights)?;
        let n = s.scenario.routes.len();
        let random_trip = match random_trip_baseline(&s.scenario.network, n, seed.wrapping_add(s.index as u64), baseline) {
            Ok(b) => {
                let counterpart = Scenario { routes: b.routes, av_id: b.av_id, ..s.scenario.clone() };
                let trace = simulate(&counterpart, sim, policy)?;
                Some(driving_score(&trace, &counterpart, weights)?)
            }
            Err(e) => {
                log::warn!("scenario {}: no RandomTrip counterpart: {e}", s.index);
                None
            }
        };
        rows.push(ChallengeRow { index: s.index, vehicles: n, ours, random_trip });
    }
    let ours: Vec<DrivingScore> = rows.iter().map(|r| r.ours).collect();
    let theirs: Vec<DrivingScore> = rows.iter().filter_map(|r| r.random_trip).collect();
    Ok(ChallengeReport {
        policy: format!("{policy:?}"),
        ours: Aggregate::of(&ours),
        random_trip: Aggregate::of(&theirs),
        rows,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or("n/a".to_string(), |v| format!("{v:.2}"))
}

fn ms(m: &MeanStd) -> String {
    format!("{:.2} ± {:.2}", m.mean, m.std)
}

pub fn conformity_table(r: &ConformityReport) -> String {
    let mut out = String::from("Conformity of command\n");
    let _ = writeln!(out, "  {:<30}{}", "scenarios attempted", r.attempted);
    let _ = writeln!(out, "  {:<30}{:.2}", "success rate (single pass)", r.success_rate);
    let _ = writeln!(out, "  {:<30}{:.2}", "success rate (with repair)", r.success_rate_with_repair);
    let _ = writeln!(out, "  {:<30}{}", "scene type accuracy", opt(r.scene_type_accuracy));
    let _ = writeln!(out, "  {:<30}{}", "lanes accuracy", opt(r.lanes_accuracy));
    let _ = writeln!(out, "  {:<30}{}", "vehicles accuracy", opt(r.vehicles_accuracy));
    out.push_str("\n  #   generated  first-pass  attempts  expected         actual\n");
    for row in &r.rows {
        let scene = |s: Option<crate::compiler::SceneType>| s.map_or("-".to_string(), |s| s.to_string());
        let _ = writeln!(
            out,
            "  {:<4}{:<11}{:<12}{:<10}{:<17}{}",
            row.index + 1,
            if row.generated { "yes" } else { "no" },
            if row.first_pass { "yes" } else { "no" },
            row.attempts,
            scene(row.expected_scene),
            scene(row.actual_scene)
        );
    }
    out
}

pub fn diversity_table(d: &DiversityStats) -> String {
    let mut out = format!("Diversity of generated scenarios ({} scenarios, mean ± std)\n", d.scenarios);
    let _ = writeln!(out, "  {:<22}{}", "lanes", ms(&d.lanes));
    let _ = writeln!(out, "  {:<22}{}", "edges", ms(&d.edges));
    let _ = writeln!(out, "  {:<22}{}", "route length (m)", ms(&d.route_length));
    let _ = writeln!(out, "  {:<22}{}", "vehicles", ms(&d.vehicles));
    out
}

pub fn challenge_table(r: &ChallengeReport) -> String {
    let mut out = format!("Challenge of scenarios (AV policy {})\n", r.policy);
    let _ = writeln!(
        out,
        "  {:<14}{:<10}{:<18}{:<20}{:<20}use time (s)",
        "scenarios", "success", "route completion", "driving score", "total score"
    );
    for (name, agg) in [("generated", &r.ours), ("RandomTrip", &r.random_trip)] {
        match agg {
            Some(a) => {
                let _ = writeln!(
                    out,
                    "  {:<14}{:<10.2}{:<18}{:<20}{:<20}{}",
                    name,
                    a.success_rate,
                    ms(&a.route_completion),
                    ms(&a.driving_score),
                    ms(&a.total_score),
                    ms(&a.use_time)
                );
            }
            None => {
                let _ = writeln!(out, "  {name:<14}n/a");
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(success: bool, driving: f64, completion: f64) -> DrivingScore {
        DrivingScore {
            comfort: 1.0,
            efficiency: 1.0,
            safety: 1.0,
            driving_score: driving,
            route_completion: completion,
            total_score: driving * completion,
            success,
            use_time: 10.0,
        }
    }

    #[test]
    fn aggregate_means() {
        let a = Aggregate::of(&[score(true, 80.0, 1.0), score(false, 40.0, 0.5)]).unwrap();
        assert_eq!(a.episodes, 2);
        assert_eq!(a.success_rate, 0.5);
        assert_eq!(a.driving_score.mean, 60.0);
        assert_eq!(a.driving_score.std, 20.0);
        assert_eq!(a.total_score.mean, 50.0);
        assert!(Aggregate::of(&[]).is_none());
    }

    #[test]
    fn crowded_fork_challenge() {
        use crate::eval::sim_fixtures::crowded_fork;
        let s = LoadedScenario { index: 1, dir: PathBuf::new(), scenario: crowded_fork() };
        let r = evaluate_batch(
            &[s],
            &SimConfig::default(),
            AvPolicy::IdmFollow,
            &ScoreWeights::default(),
            &BaselineParams::default(),
            0,
        )
        .unwrap();
        assert!(!r.rows[0].ours.success);
        assert!(r.rows[0].random_trip.unwrap().success);
        assert!(challenge_table(&r).contains("RandomTrip"));
    }
}
