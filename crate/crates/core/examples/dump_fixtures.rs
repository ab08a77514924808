//! Regenerates the shipped fixture game files from the built-in builders.
//!
//! Usage: `cargo run -p mgid-core --example dump_fixtures [OUT_DIR]`
//! (defaults to `fixtures/` in the current directory).

use mgid_core::fixtures;
use mgid_core::game::save_game;
use std::fs;
use std::path::PathBuf;

fn main() -> std::io::Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "fixtures".into())
        .into();
    fs::create_dir_all(&out)?;
    let games = [
        ("minimal", fixtures::minimal()),
        ("pd", fixtures::pd()),
        ("chain2", fixtures::chain2()),
        ("two_source", fixtures::two_source()),
        ("chicken", fixtures::chicken()),
        ("persuasion", fixtures::persuasion()),
    ];
    for (name, game) in games {
        let path = out.join(format!("{name}.game"));
        fs::write(&path, save_game(&game))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
