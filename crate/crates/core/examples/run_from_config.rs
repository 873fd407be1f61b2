//! Parse a configuration, run it, and show the artifacts. Without an argument
//! a small verify-lyapunov run is used.
//!
//! cargo run --release --example run_from_config [config.toml]

use tcsde::config::{parse_config, parse_config_str};
use tcsde::experiment::run_experiment;

const INLINE: &str = r#"
[experiment]
kind = "verify-lyapunov"

[criteria]
x_min = -3.0
x_max = 3.0
x_points = 31

[output]
dir = "target/example-run"
"#;

fn main() -> tcsde::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(p) => parse_config(p.as_ref())?,
        None => parse_config_str(INLINE, "inline")?,
    };
    let out = run_experiment(&cfg);
    println!("{}", out.summary);
    for f in &out.files {
        println!("--- {}", f.display());
        let text = std::fs::read_to_string(f)?;
        for line in text.lines().take(8) {
            println!("{line}");
        }
    }
    println!("exit code {}", out.status.code());
    Ok(())
}
