//! Draws the finest-level matches of a synthetic pair side by side.
//!
//! `cargo run --release --example overlay [OUT_PNG]`

use flowmatch::config::Config;
use flowmatch::eval::Homography;
use flowmatch::overlay::render_overlay;
use flowmatch::pipeline::run_pipeline;
use flowmatch::synth::{make_pair, PairSpec, SceneSpec};
use flowmatch::video_io::FrameSource;

fn main() -> flowmatch::error::Result<()> {
    let out_path = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("flowmatch_overlay.png"), Into::into);
    let scene = SceneSpec::random(320, 240, 301, 5, 12);
    let (a, b, _) = make_pair(&PairSpec::new(scene, Homography::translation(24.0, 0.0)))?;
    let out = run_pipeline(&a, &b, &Config::default())?;
    let mut file = out.match_file(out.levels.len() - 1);
    file.matches.truncate(135);

    let mid = a.frame_count() / 2;
    let img = render_overlay(&a.read_frame(mid)?.to_gray_image(), &b.read_frame(mid)?.to_gray_image(), &file);
    img.save(&out_path).map_err(|source| flowmatch::error::Error::Decode { path: out_path.clone(), source })?;
    println!("{} matches drawn to {}", file.matches.len(), out_path.display());
    Ok(())
}
