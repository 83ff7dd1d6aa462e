//! One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

use holderflow::selfcheck::full_suite;

fn main() {
    let scratch = tempfile::tempdir().expect("scratch directory");
    let start = std::time::Instant::now();
    let verdicts = full_suite(scratch.path());
    for v in &verdicts {
        println!("{v}");
    }
    let failed = verdicts.iter().filter(|v| !v.passed).count();
    println!(
        "acceptance: {} of {} criteria passed in {:.0} s",
        verdicts.len() - failed,
        verdicts.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
