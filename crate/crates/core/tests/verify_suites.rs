use crf_depth::verify::run_all;

#[test]
fn every_runtime_suite_passes() {
    let results = run_all(0);
    for r in &results {
        println!("{:<55} worst {:.3e} < {:.0e}: {}", r.name, r.worst, r.tolerance, r.passed);
    }
    assert!(results.iter().all(|r| r.passed));
}
