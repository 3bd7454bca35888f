//! Runs every acceptance check and prints one line per check. Exits non-zero
//! when any check fails.

use chargenet_verify as check;

fn main() {
    let mut verdicts = Vec::new();
    let mut report = |v: check::Verdict| {
        println!("{v}");
        verdicts.push(v);
    };
    report(check::oracle_equivalence());
    report(check::wardrop_certificate());
    report(check::potential_gradient());
    report(check::theta_uniqueness());

    let suite = check::nd_suite();
    report(check::rounding_gap(&suite));
    report(check::decomposition_accuracy(&suite));
    report(check::joint_dominance(&suite));
    let (plateau, sweeps) = check::budget_plateau();
    report(plateau);
    report(check::rounding_laws());
    let (determinism, emitted) = check::determinism();
    report(determinism);
    report(check::constraint_safety(&suite, &sweeps, emitted.as_ref()));

    let passed = verdicts.iter().filter(|v| v.pass).count();
    println!("acceptance: {passed}/{} checks passed", verdicts.len());
    if passed != verdicts.len() {
        std::process::exit(1);
    }
}
