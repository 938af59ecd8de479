//! Regenerates the two-mode reference trajectory.
//!
//! cargo run --release -p hfb-core --example two_mode_fixture [-- <dir>]

use std::path::PathBuf;

use hfb_core::oracle::two_mode;

fn main() -> hfb_core::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/two_mode"));
    let fx = two_mode::generate();
    two_mode::write_fixture(&fx, &dir)?;
    println!("wrote {} states to {} ({})", fx.states.len(), dir.display(), two_mode::generator_hash());
    Ok(())
}
