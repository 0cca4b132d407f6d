use std::io::Write;
use std::path::PathBuf;

use localsgd::simulator::FaultInjection;
use localsgd_cli::acceptance::{Level, Status, Suite};

fn data_dir() -> PathBuf {
    std::env::var_os("LOCALSGD_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

fn say(s: &str) {
    // libtest captures print!; a locked stdout handle is not captured
    let _ = writeln!(std::io::stdout().lock(), "{s}");
}

#[test]
fn every_criterion_at_full_level() {
    let suite = Suite::new(Level::Full, data_dir());
    let results = suite.run_all();
    for r in &results {
        say(&r.line());
    }
    let failed: Vec<_> = results.iter().filter(|r| r.status == Status::Fail).map(|r| r.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

#[test]
fn skipping_the_averaging_step_is_caught() {
    let mut suite = Suite::new(Level::Fast, data_dir());
    suite.fault = FaultInjection::SkipAveraging;
    let c2 = suite.run(2);
    let c3 = suite.run(3);
    say(&format!("with averaging disabled: {}", c2.line()));
    say(&format!("with averaging disabled: {}", c3.line()));
    assert_eq!(c2.status, Status::Fail);
    assert_eq!(c3.status, Status::Fail);
}
