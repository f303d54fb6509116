use std::time::Instant;

use anyhow::{bail, Result};
use clap::Args;
use serde_json::json;
use vitmerge::selftest;

use crate::args::OutputArgs;
use crate::report::{to_rows, RunReport};

#[derive(Debug, Args)]
pub struct SelftestCmd {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Append a check that always fails (exercises the failure path)
    #[arg(long)]
    force_fail: bool,
    #[command(flatten)]
    out: OutputArgs,
}

pub fn run(cmd: SelftestCmd) -> Result<()> {
    let started = Instant::now();
    let report = selftest::run(cmd.seed, cmd.force_fail);
    let failed: Vec<&str> = report.failed().map(|c| c.name).collect();
    if cmd.out.json {
        RunReport::new(
            started,
            json!({ "seed": cmd.seed, "force_fail": cmd.force_fail }),
            to_rows(&report.checks)?,
            json!({ "passed": report.passed(), "failed": failed }),
        )?
        .print_json()?;
    } else {
        for c in &report.checks {
            println!(
                "{} {} ({} cases, {} failed)",
                if c.passed() { "PASS" } else { "FAIL" },
                c.name,
                c.cases,
                c.failures.len()
            );
            for f in c.failures.iter().take(5) {
                println!("    seed {}: {}", f.seed, f.detail);
            }
        }
    }
    if !failed.is_empty() {
        bail!("selftest failed: {}", failed.join(", "));
    }
    Ok(())
}
