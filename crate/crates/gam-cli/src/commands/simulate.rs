use std::path::Path;

use anyhow::Result;
use gam_core::dynamics::{simulate_consistent_feedback, write_csv, DynamicsScenario};

use super::write_file;

#[allow(clippy::too_many_arguments)]
pub fn run(
    r: f64,
    q_noise: f64,
    y: f64,
    s0: f64,
    n: usize,
    pi0: f64,
    lambda: f64,
    out: &Path,
) -> Result<()> {
    let scenario = DynamicsScenario {
        s0,
        y,
        r,
        q_noise,
        pi0,
        n,
        lambda,
    };
    let trajectory = simulate_consistent_feedback(&scenario)?;
    let mut buf = Vec::new();
    write_csv(&trajectory, &mut buf)?;
    write_file(out, &buf)?;
    if let Some(last) = trajectory.last() {
        println!(
            "simulated {} episodes: pi={:.6} gain={:.6} s={:.6}",
            n, last.pi, last.gain, last.s
        );
    }
    println!("trajectory written to {}", out.display());
    Ok(())
}
