use nbguard_core::conflict::ConflictType;
use nbguard_harness::scenarios::{expected_answer, rule_cases, run_all, UnknownScenario, SCENARIOS};
use nbguard_harness::run_scenario;

#[test]
fn every_scenario_passes() {
    let reports = run_all();
    assert_eq!(reports.iter().map(|r| r.scenario).collect::<Vec<_>>(), SCENARIOS);
    for r in &reports {
        let failed: Vec<_> = r.steps.iter().filter(|s| !s.ok).collect();
        assert!(r.passed, "scenario {}: {failed:?}", r.scenario);
        assert!(!r.steps.is_empty());
    }
}

#[test]
fn reports_are_deterministic() {
    for n in [1, 4] {
        assert_eq!(run_scenario(n).unwrap(), run_scenario(n).unwrap());
    }
}

#[test]
fn unknown_scenarios_are_refused() {
    assert_eq!(run_scenario(0), Err(UnknownScenario(0)));
    assert_eq!(run_scenario(7), Err(UnknownScenario(7)));
}

#[test]
fn rule_table_has_thirteen_cases_over_six_sub_scenarios() {
    let cases = rule_cases();
    assert_eq!(cases.len(), 13);
    let subs: std::collections::BTreeSet<_> = cases.iter().map(|c| c.sub_scenario).collect();
    assert_eq!(subs.len(), 6);
    let conflicts = cases.iter().filter(|c| c.expected.is_some()).count();
    assert!(conflicts > 0 && conflicts < cases.len());
    for kind in [
        ConflictType::Generalization,
        ConflictType::Redundancy,
        ConflictType::Correlation,
        ConflictType::Shadowing,
        ConflictType::Overlap,
    ] {
        assert!(cases.iter().any(|c| c.expected == Some(kind)), "{kind} never expected");
    }
}

#[test]
fn expected_answers_name_the_conflict() {
    assert_eq!(expected_answer(None), "SUCCESS");
    assert!(expected_answer(Some(ConflictType::Shadowing)).contains("Shadowing"));
}
