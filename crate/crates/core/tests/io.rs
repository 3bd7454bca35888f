use chargenet::abompn::{abompn_solve, AbompnConfig};
use chargenet::fixtures::{self, Economics};
use chargenet::generate::{generate_nd_like, NdParams};
use chargenet::io::{load_design, load_scenario, load_solution, save_scenario, save_solution};
use chargenet::Error;

fn small_solution() -> (chargenet::scenario::Scenario, String) {
    let econ = Economics {
        budget: 3,
        ..Economics::default()
    };
    let sc = fixtures::two_station(1.0, 6.0, 0.4, &econ);
    let mut cfg = AbompnConfig::default();
    cfg.optimizer.starts = 2;
    cfg.optimizer.max_evaluations = 200;
    let sol = abompn_solve(&sc, &cfg).unwrap();
    let text = save_solution(&sol, sc.network.nodes());
    (sc, text)
}

#[test]
fn generated_scenarios_round_trip() {
    for seed in 1..=5 {
        let sc = generate_nd_like(seed, &NdParams::default());
        let text = save_scenario(&sc);
        let back = load_scenario(&text).unwrap();
        assert_eq!(back, sc);
        assert_eq!(save_scenario(&back), text);
    }
    let sc = fixtures::random_grid(9);
    assert_eq!(load_scenario(&save_scenario(&sc)).unwrap(), sc);
}

#[test]
fn solution_text_is_stable_across_round_trips() {
    let (sc, text) = small_solution();
    let back = load_solution(&text).unwrap();
    assert_eq!(save_solution(&back, sc.network.nodes()), text);
    let d = load_design(&text, &sc).unwrap();
    assert_eq!(d, back.design);
}

#[test]
fn truncated_solution_is_a_parse_error() {
    let (_, text) = small_solution();
    let cut = &text[..text.find("[design]").unwrap()];
    assert!(matches!(load_solution(cut), Err(Error::Parse { .. })));
    let cut = &text[..text.len() / 2];
    assert!(matches!(load_solution(cut), Err(Error::Parse { .. })));
}

#[test]
fn newer_versions_are_refused() {
    let (_, text) = small_solution();
    let bumped = text.replacen("version = 1", "version = 2", 1);
    assert!(matches!(load_solution(&bumped), Err(Error::VersionMismatch { found: 2, .. })));
    let sc = save_scenario(&generate_nd_like(1, &NdParams::default())).replacen("version = 1", "version = 7", 1);
    assert!(matches!(load_scenario(&sc), Err(Error::VersionMismatch { found: 7, .. })));
}
