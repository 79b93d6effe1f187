//! Acceptance criteria 1-11. Prints one PASS/FAIL line per criterion and
//! fails if any criterion fails. Full scale by default;
//! `HARTREE_LAB_ACCEPTANCE=quick` runs reduced grids for smoke checks.

use hartree_lab_cli::acceptance::{run_all, summary_line, Scale};

fn main() {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let scale = Scale::from_env();
    println!("acceptance suite ({scale:?} scale)");
    let results = run_all(scale, None);
    println!("{}", summary_line(&results));
    if results.iter().any(|r| !r.pass) {
        std::process::exit(1);
    }
}
