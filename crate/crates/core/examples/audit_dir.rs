//! Audit a config file and write every output into a directory.
//!
//! `cargo run --example audit_dir -- data/audit_mini.json out/`

use std::path::Path;

use trusteq_core::report::{write_outputs, AuditConfig, RunOptions};
use trusteq_core::run_audit;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [config, out] = args.as_slice() else {
        return Err("usage: audit_dir CONFIG OUT_DIR".into());
    };
    let cfg = AuditConfig::load(Path::new(config))?;
    let report = run_audit(&cfg, &RunOptions::default())?;
    let files = write_outputs(Path::new(out), &report)?;
    println!("{}", files.report_json.display());
    Ok(())
}
