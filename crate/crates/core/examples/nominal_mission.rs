//! Runs the nominal mission from `configs/` and prints the summary.
//!
//! cargo run --release --example nominal_mission -- [OUT_DIR]

use std::path::{Path, PathBuf};
use std::time::Instant;

use tray_autonomy::geometry::WorldConfig;
use tray_autonomy::mission::MissionConfig;
use tray_autonomy::sim::{check_invariants, run_mission, SimConfig};

fn main() -> tray_autonomy::Result<()> {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("nominal_mission"));
    let world = WorldConfig::load(configs.join("world.json"))?;
    let mission = MissionConfig::load(&configs.join("mission.json"))?;
    let sim = SimConfig::load(&configs.join("sim.json"))?;
    let t0 = Instant::now();
    let outcome = run_mission(&world, &mission, &sim, &out)?;
    println!("{}", serde_json::to_string_pretty(&outcome.summary)?);
    println!(
        "wall time {:.2} s, output in {}",
        t0.elapsed().as_secs_f64(),
        out.display()
    );
    let report = check_invariants(&out)?;
    for v in report.violations.iter().take(20) {
        println!("violation: {v}");
    }
    println!("{} violations", report.violations.len());
    Ok(())
}
