//! Writes a synthetic pair as frame directories, reads it back through the
//! video loader and matches it.
//!
//! `cargo run --release --example synth_to_disk [OUT_DIR]`

use flowmatch::config::Config;
use flowmatch::eval::Homography;
use flowmatch::pipeline::run_pipeline;
use flowmatch::synth::{write_pair, PairSpec, SceneSpec};
use flowmatch::video_io::open_video;

fn main() -> flowmatch::error::Result<()> {
    let dir = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("flowmatch_pair"), Into::into);
    let spec = PairSpec::new(SceneSpec::random(256, 192, 201, 5, 6), Homography::translation(-8.0, 4.0));
    write_pair(&dir, &spec, "png")?;

    let (a, b) = (open_video(dir.join("a"))?, open_video(dir.join("b"))?);
    println!("{}: {} frames of {}x{} at {} fps", dir.display(), a.frame_count, a.width, a.height, a.fps);
    let out = run_pipeline(&a, &b, &Config::default())?;
    let file = out.match_file(out.levels.len() - 1);
    let path = dir.join(flowmatch::pipeline::MatchFile::file_name(file.level));
    file.save(&path)?;
    println!("{} finest matches written to {}", file.matches.len(), path.display());
    Ok(())
}
