//! Grid of runs described in TOML, written as CSV to stdout.
//!
//! ```text
//! cargo run --release --example parameter_sweep -- [examples/configs/sweep.toml]
//! ```

use blockcast::experiment::SweepSpec;
use blockcast::sweep;

const DEFAULT: &str = r#"
threads = 1

[base]
seed = 3
[base.topology]
nodes = 512
[base.mining]
blocks_to_mine = 2

[grid]
protocols = ["traditional", "pichu"]
block_bytes = [1048576, 8388608]
degrees = [[5, 5], [8, 12]]
"#;

fn main() -> blockcast::Result<()> {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path)?,
        None => DEFAULT.to_string(),
    };
    let spec = SweepSpec::from_toml(&text)?;
    eprintln!("{} cells", spec.cells().len());
    let outcome = sweep(&spec);
    for f in &outcome.failures {
        eprintln!("cell {} failed: {}", f.cell, f.message);
    }
    outcome.write_csv(std::io::stdout().lock())
}
