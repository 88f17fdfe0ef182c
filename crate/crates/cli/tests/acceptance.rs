//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Runs the full grid at R = 200 and R = 700 with the default seed. Set
//! `ACCEPTANCE_STRICT=1` to exit non-zero when any line fails.

use std::collections::BTreeMap;
use std::time::Instant;

use hidden_action_cli::{run, RunArgs};
use hidden_action_core::beliefs::{BeliefState, MemoryCapacity, Role};
use hidden_action_core::benchmark::{
    second_best_oracle_on, verify_first_best_flat_wage, BenchmarkProblem, PremiumGrid,
};
use hidden_action_core::decision::{select_mode, DecisionOptions, DegenerateMemory, SearchMode};
use hidden_action_core::engine::{run_scenario, scenario_grid, GridFilter, ScenarioConfig, SIGMA_FRACTION_GRID};
use hidden_action_core::metrics::{summarize, ScenarioSummary};
use hidden_action_core::model::ActorParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const INF: MemoryCapacity = MemoryCapacity::Unbounded;
const M1: MemoryCapacity = MemoryCapacity::Finite(1);
const M3: MemoryCapacity = MemoryCapacity::Finite(3);

/// Grid coordinates with the fractions rounded so they can key a map.
type Key = (u32, MemoryCapacity, u32, u32);

fn key(delta: f64, m: MemoryCapacity, lf: f64, sf: f64) -> Key {
    let k = |v: f64| (v * 10_000.0).round() as u32;
    (k(delta), m, k(lf), k(sf))
}

#[derive(Default)]
struct Invariants {
    memory_violations: usize,
    conservation_violations: usize,
    first_action_violations: usize,
    runs: usize,
}

struct GridRun {
    summaries: BTreeMap<Key, ScenarioSummary>,
    invariants: Invariants,
    seconds: f64,
}

fn run_grid(runs: usize) -> GridRun {
    let base = ScenarioConfig {
        runs,
        ..ScenarioConfig::default()
    };
    let start = Instant::now();
    let mut summaries = BTreeMap::new();
    let mut inv = Invariants::default();
    for cfg in scenario_grid(&base, &GridFilter::default()) {
        let k = key(cfg.delta, cfg.memory, cfg.local_fraction, cfg.sigma_fraction);
        let result = run_scenario(cfg).expect("scenario runs");
        let a_star = result.scenario.benchmark.a_star;
        let memory = result.scenario.config.memory;
        for run in &result.runs {
            inv.runs += 1;
            if run.periods[0].action > a_star + 1e-9 {
                inv.first_action_violations += 1;
            }
            for p in &run.periods {
                if !memory.admits(p.principal_memory_len) || !memory.admits(p.agent_memory_len) {
                    inv.memory_violations += 1;
                }
                if (p.u_p + p.share - p.outcome).abs() > 4.0 * f64::EPSILON * p.outcome.abs().max(1.0) {
                    inv.conservation_violations += 1;
                }
            }
        }
        let summary = summarize(result.scenario.id.as_str(), &result.action_panel(), a_star).expect("summary");
        summaries.insert(k, summary);
    }
    GridRun {
        summaries,
        invariants: inv,
        seconds: start.elapsed().as_secs_f64(),
    }
}

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: &str, pass: bool, detail: String) {
        if !pass {
            self.failed += 1;
        }
        println!("{} {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

const DELTAS: [f64; 3] = [0.25, 0.5, 0.75];
const LOCALS: [f64; 3] = [1.0 / 3.0, 1.0 / 5.0, 1.0 / 10.0];
const MEMORIES: [MemoryCapacity; 3] = [M1, M3, INF];

fn first_below(series: &[f64], threshold: f64) -> Option<usize> {
    series.iter().position(|&d| d < threshold).map(|i| i + 1)
}

fn main() {
    let mut report = Report { failed: 0 };

    let g200 = run_grid(200);
    let a20 = |k: &Key| g200.summaries[k].mean_normalized_action;
    let mut c1_bad = Vec::new();
    for &d in &DELTAS {
        for &l in &LOCALS {
            for &s in &SIGMA_FRACTION_GRID {
                let v: Vec<f64> = MEMORIES.iter().map(|&m| a20(&key(d, m, l, s))).collect();
                if !(v[0] < v[1] && v[1] < v[2]) {
                    c1_bad.push(format!(
                        "(d={d}, 1/l={l:.3}, s={s}) {:.3}/{:.3}/{:.3}",
                        v[0], v[1], v[2]
                    ));
                }
            }
        }
    }
    report.line(
        "C1 a_20 strictly increasing in m at R=200",
        c1_bad.is_empty(),
        format!("{} of 36 cells violate {:?}", c1_bad.len(), c1_bad),
    );
    report.line(
        "C1 runtime under 5 minutes",
        g200.seconds < 300.0,
        format!("{:.1} s for 108 scenarios", g200.seconds),
    );

    let g700 = run_grid(700);
    let s700 = |k: &Key| &g700.summaries[k];
    for (d, m, l, s, expected) in [
        (0.25, INF, 0.1, 0.05, 0.945),
        (0.5, INF, 1.0 / 3.0, 0.05, 0.966),
        (0.25, M1, 0.2, 0.65, 0.715),
        (0.75, M3, 0.1, 0.25, 0.863),
    ] {
        let got = s700(&key(d, m, l, s)).mean_normalized_action;
        report.line(
            &format!("C2 a_20 at (d={d}, m={m}, 1/l={l:.3}, s={s})"),
            (got - expected).abs() <= 0.05,
            format!("{got:.3} vs {expected} (tolerance 0.05)"),
        );
    }

    let ax = |k: &Key| s700(k).average_excess.unwrap_or(0.0);
    let mut c3a_bad = Vec::new();
    for &d in &DELTAS {
        for &m in &MEMORIES {
            for &l in &LOCALS {
                let v: Vec<f64> = SIGMA_FRACTION_GRID.iter().map(|&s| ax(&key(d, m, l, s))).collect();
                if !v.windows(2).all(|w| w[0] < w[1]) {
                    c3a_bad.push(format!("(d={d}, m={m}, 1/l={l:.3}) {v:.3?}"));
                }
            }
        }
    }
    report.line(
        "C3 average excess strictly increasing in sigma",
        c3a_bad.is_empty(),
        format!("{} of 27 cells violate {:?}", c3a_bad.len(), c3a_bad),
    );
    let hi = ax(&key(0.25, M1, 0.2, 0.65));
    let lo = ax(&key(0.25, M1, 0.2, 0.05));
    report.line(
        "C3 average excess ratio sigma=.65 over .05 at (d=.25, m=1, 1/l=1/5)",
        hi >= 10.0 * lo,
        format!("{hi:.4} / {lo:.4} = {:.1} (need >= 10)", hi / lo),
    );
    let px = |k: &Key| s700(k).excess_probability;
    let mut c3c_bad = Vec::new();
    let mut endpoint_bad = 0;
    for &d in &DELTAS {
        for &l in &LOCALS {
            for &s in &SIGMA_FRACTION_GRID[..3] {
                let v: Vec<f64> = MEMORIES.iter().map(|&m| px(&key(d, m, l, s))).collect();
                if v[2] <= v[0] {
                    endpoint_bad += 1;
                }
                if !(v[2] > v[1] && v[1] > v[0]) {
                    c3c_bad.push(format!(
                        "(d={d}, 1/l={l:.3}, s={s}) inf/3/1 {:.3}/{:.3}/{:.3}",
                        v[2], v[1], v[0]
                    ));
                }
            }
        }
    }
    report.line(
        "C3 excess probability strictly decreasing from m=inf to m=1 for sigma <= .45",
        c3c_bad.is_empty(),
        format!(
            "{} of 27 cells violate {:?}; m=inf above m=1 fails in {endpoint_bad}",
            c3c_bad.len(),
            c3c_bad
        ),
    );

    let threshold = 50.0;
    let crossings: Vec<(f64, Option<usize>, f64)> = LOCALS
        .iter()
        .map(|&l| {
            let ds = &s700(&key(0.5, M1, l, 0.05)).distance_series;
            (
                l,
                first_below(ds, threshold),
                ds.iter().cloned().fold(f64::INFINITY, f64::min),
            )
        })
        .collect();
    let ordered = matches!(
        (crossings[0].1, crossings[1].1, crossings[2].1),
        (Some(a), Some(b), Some(c)) if a < b && b < c
    );
    report.line(
        "C4 d_t crosses 50 earliest for 1/l=1/3, then 1/5, then 1/10 (d=.5, m=1, s=.05)",
        ordered,
        crossings
            .iter()
            .map(|(l, t, min)| format!("1/l={l:.3}: first t={t:?}, min d_t={min:.1}"))
            .collect::<Vec<_>>()
            .join("; "),
    );

    let actor = ActorParams::standard();
    let coarse = second_best_oracle_on(&actor, 0.0, &PremiumGrid::new(0.001).unwrap()).unwrap();
    let fine = second_best_oracle_on(&actor, 0.0, &PremiumGrid::new(0.0001).unwrap()).unwrap();
    report.line(
        "C5 benchmark stable under grid refinement",
        (coarse.a_star - fine.a_star).abs() <= 1e-3,
        format!("a* {:.6} at step 1e-3, {:.6} at step 1e-4", coarse.a_star, fine.a_star),
    );
    let flat: Vec<bool> = SIGMA_FRACTION_GRID
        .iter()
        .map(|&sf| {
            let problem = BenchmarkProblem::new(actor, 0.0, sf * coarse.x_star, 2.0 * coarse.a_star);
            verify_first_best_flat_wage(&problem).unwrap_or(false)
        })
        .collect();
    report.line(
        "C5 flat wage optimal with contractible action for all sigma",
        flat.iter().all(|&b| b),
        format!("{flat:?}"),
    );

    let dir = tempfile::tempdir().expect("temp dir");
    let args = |jobs: usize| RunArgs {
        config: None,
        filters: vec!["delta=0.5".into(), "lambda_frac=1/5".into()],
        runs: Some(25),
        seed: None,
        out: dir.path().join(format!("jobs{jobs}")),
        emit: "panel,summary,series".into(),
        partial: false,
        jobs: Some(jobs),
    };
    run(&args(1)).expect("run with one job");
    run(&args(8)).expect("run with eight jobs");
    let same = ["panel.csv", "summary.csv", "distance_series.csv"].iter().all(|f| {
        std::fs::read(dir.path().join("jobs1").join(f)).unwrap()
            == std::fs::read(dir.path().join("jobs8").join(f)).unwrap()
    });
    report.line(
        "C6 output bytes identical for --jobs 1 and 8",
        same,
        "12 scenarios, R=25".into(),
    );
    for (name, g) in [("R=200", &g200), ("R=700", &g700)] {
        let inv = &g.invariants;
        report.line(
            &format!("C6 memory capacity respected ({name})"),
            inv.memory_violations == 0,
            format!("{} violating periods", inv.memory_violations),
        );
        report.line(
            &format!("C6 conservation u_p + share = x ({name})"),
            inv.conservation_violations == 0,
            format!("{} violating periods", inv.conservation_violations),
        );
        report.line(
            &format!("C6 a_1 <= a* ({name})"),
            inv.first_action_violations == 0,
            format!("{} of {} runs exceed a*", inv.first_action_violations, inv.runs),
        );
        let jensen_bad: usize = g
            .summaries
            .values()
            .map(|s| {
                s.distance_series
                    .iter()
                    .zip(&s.mean_normalized_series)
                    .filter(|(d, m)| **d / (s.runs as f64) < (1.0 - **m).powi(2) - 1e-12)
                    .count()
            })
            .sum();
        report.line(
            &format!("C6 d_t/R >= (1 - a_t)^2 on every series ({name})"),
            jensen_bad == 0,
            format!("{jensen_bad} violating points"),
        );
    }
    let mut single = BeliefState::new(Role::Principal, M1);
    single.record(0.0);
    let options = DecisionOptions {
        degenerate_memory: DegenerateMemory::Bernoulli,
        ..DecisionOptions::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 100_000;
    for delta in DELTAS {
        let global = (0..n)
            .filter(|_| select_mode(0.0, &single, delta, &options, &mut rng) == SearchMode::Global)
            .count() as f64
            / n as f64;
        report.line(
            &format!("C6 Bernoulli fallback frequency at delta={delta}"),
            (global - delta).abs() <= 0.02,
            format!("{global:.4} over {n} draws"),
        );
    }

    println!("{} criterion line(s) failed", report.failed);
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && report.failed > 0 {
        std::process::exit(1);
    }
}
