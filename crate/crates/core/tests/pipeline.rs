//! End-to-end runs on the shipped 30-bus study.

use std::collections::BTreeSet;
use std::fs;

use eventmarket_core::benchmark;
use eventmarket_core::market::TABLE_LABELS;
use eventmarket_core::simulation::{emit_report, render_report, run_three_phase, write_files, RunOptions, SimulationReport, StudyInputs};
use eventmarket_milp::Limits;

fn small(event_end: usize) -> StudyInputs {
    let mut inputs = benchmark::inputs(event_end).unwrap();
    inputs.plan.scenario_count = 200;
    inputs.plan.clusters = 6;
    inputs
}

fn run(inputs: &StudyInputs) -> SimulationReport {
    run_three_phase(inputs, &RunOptions::default()).unwrap()
}

#[test]
fn null_hazard_clears_nothing() {
    let mut inputs = small(12);
    inputs.hazard.branch_overrides.clear();
    inputs.hazard.branch_fail_prob = 0.0;
    inputs.hazard.gen_fail_prob = 0.0;
    let report = run(&inputs);
    assert_eq!(report.outcome.objective, 0.0);
    assert!(report.outcome.table.iter().all(|r| r.value == 0.0));
    for r in &report.replay {
        assert_eq!(r.served_before_mwh, r.served_after_mwh);
        for h in &r.hours {
            let base = &report.baseline[h.hour - 1];
            assert_eq!(h.dc.served, base.served);
            assert!(h.fleet_capacity.iter().all(|&c| c == 0.0));
        }
    }
    let files = render_report(&inputs.case, &report, false).unwrap();
    for line in files["costs.csv"].lines().skip(1) {
        assert!(line.ends_with(",0.000000"), "{line}");
    }
}

#[test]
fn costs_file_has_the_table_rows() {
    let inputs = small(9);
    let report = run(&inputs);
    let files = render_report(&inputs.case, &report, true).unwrap();
    let costs: Vec<&str> = files["costs.csv"].lines().collect();
    assert_eq!(costs[0], "quantity,value");
    assert_eq!(costs.len(), 1 + TABLE_LABELS.len());
    for (line, label) in costs[1..].iter().zip(TABLE_LABELS) {
        assert!(line.starts_with(&format!("\"{label}\",")) || line.starts_with(&format!("{label},")), "{line}");
    }
    let names: BTreeSet<&str> = files.keys().map(|s| s.as_str()).collect();
    for want in [
        "costs.csv",
        "soc_traces.csv",
        "dispatch_traces.csv",
        "reserve_traces.csv",
        "voltages.csv",
        "scenarios.json",
        "solution.json",
        "manifest.json",
        "soc_traces.svg",
    ] {
        assert!(names.contains(want), "{want} missing");
    }
    assert!(files["soc_traces.svg"].starts_with("<svg"));
    let phases: BTreeSet<&str> = files["voltages.csv"].lines().skip(1).map(|l| &l[..1]).collect();
    assert_eq!(phases, BTreeSet::from(["1", "2", "3"]));
}

#[test]
fn traces_cover_the_horizon() {
    let inputs = small(9);
    let report = run(&inputs);
    let horizon = inputs.plan.horizon_hours;
    let storage = inputs.case.fleet.iter().filter(|r| r.kind.is_storage()).count();
    let per_scenario = report.outcome.scenarios.len() + 1;
    assert_eq!(report.traces.soc.len(), per_scenario * storage * horizon);
    assert_eq!(report.traces.dispatch.len(), per_scenario * inputs.case.fleet.len() * horizon);
    for r in &inputs.case.fleet {
        for t in 1..=horizon {
            assert!(report.traces.dispatch.iter().any(|p| p.scenario == "expected" && p.hour == t && p.resource == r.label()));
        }
    }
}

#[test]
fn replay_never_serves_less_and_storage_ends_above_floor() {
    let inputs = small(12);
    let report = run(&inputs);
    for r in &report.replay {
        assert!(r.served_after_mwh >= r.served_before_mwh - 1e-9, "scenario {}", r.scenario_id);
    }
    for s in &report.outcome.scenarios {
        for res in s.resources.iter().filter(|r| r.kind.is_storage()) {
            let f = inputs.case.fleet.iter().find(|f| f.label() == res.label).unwrap();
            let last = *res.soc.last().unwrap();
            assert!(last >= f.soc_min - 1e-9);
            if res.reserve_pu > 1e-9 {
                assert!(last > f.soc_min);
            }
        }
    }
}

#[test]
fn thread_count_does_not_change_the_answer() {
    let inputs = small(9);
    let one = run_three_phase(
        &inputs,
        &RunOptions {
            limits: Limits {
                threads: Some(1),
                ..Limits::default()
            },
            export_lp: false,
        },
    )
    .unwrap();
    let many = run_three_phase(
        &inputs,
        &RunOptions {
            limits: Limits {
                threads: Some(4),
                ..Limits::default()
            },
            export_lp: false,
        },
    )
    .unwrap();
    assert_eq!(one.outcome.objective.to_bits(), many.outcome.objective.to_bits());
    assert_eq!(one.outcome.values, many.outcome.values);
}

#[test]
fn lp_export_names_rows_by_family() {
    let inputs = small(9);
    let report = run_three_phase(
        &inputs,
        &RunOptions {
            export_lp: true,
            ..RunOptions::default()
        },
    )
    .unwrap();
    let lp = report.lp_text.as_deref().unwrap();
    assert!(lp.contains("eq6_balance_t6_s1"));
    assert!(lp.contains("eq7_reserve_t9_s1"));
    let parsed = eventmarket_milp::lp_format::parse_lp(lp).unwrap();
    assert_eq!(parsed.num_binaries(), report.build.binaries);
    assert_eq!(parsed.constraints.len(), report.build.constraints);
    let files = render_report(&inputs.case, &report, false).unwrap();
    assert!(files.contains_key("market.lp"));
}

#[test]
fn mismatched_windows_are_rejected_with_a_stage() {
    let mut inputs = small(9);
    inputs.plan.event_window = (6, 12);
    let err = run_three_phase(&inputs, &RunOptions::default()).unwrap_err();
    assert!(err.to_string().contains("plan"), "{err}");
}

#[test]
fn emitted_files_replace_the_directory_and_match_the_render() {
    let inputs = small(9);
    let report = run(&inputs);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("stale.txt"), "old").unwrap();
    let written = emit_report(&inputs.case, &report, &out, false).unwrap();
    assert!(!out.join("stale.txt").exists());
    let files = render_report(&inputs.case, &report, false).unwrap();
    assert_eq!(written.len(), files.len());
    for (name, text) in &files {
        if name != "manifest.json" {
            assert_eq!(&fs::read_to_string(out.join(name)).unwrap(), text);
        }
    }
    // no staging directory left behind
    let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(leftovers.len(), 1);
}

#[test]
fn unwritable_target_fails_without_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let files = [("a.csv".to_string(), "1\n".to_string())].into_iter().collect();
    assert!(write_files(&files, &blocker.join("out")).is_err());
    // the target is a plain file: the write fails and the file survives
    assert!(write_files(&files, &blocker).is_err());
    assert_eq!(fs::read_to_string(&blocker).unwrap(), "x");
    let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 1);
}
