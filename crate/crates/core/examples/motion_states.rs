//! Turns a rendered scene into per-patch binary motion signatures and prints
//! how busy each level of the pyramid is.

use flowmatch::matcher::HierarchyPlan;
use flowmatch::motion_state::{build_sequences, Thresholds};
use flowmatch::synth::{SceneSpec, SyntheticVideo};

fn main() -> flowmatch::error::Result<()> {
    let video = SyntheticVideo::scene(SceneSpec::random(256, 192, 301, 5, 3))?;
    let plan = HierarchyPlan::default();
    let set = build_sequences(&video, &plan.levels, &Thresholds::default(), None)?;

    println!("{} states per patch, segments of {}", set.len, set.seg_len);
    for level in &set.levels {
        let g = level.geometry;
        let ones: u64 = level.seqs.iter().map(|s| s.ones() as u64).sum();
        let moving = level.seqs.iter().filter(|s| s.ones() > 0).count();
        println!(
            "level {} ({}px, {}x{} grid): {moving}/{} patches ever move, {:.1}% of states on",
            level.level,
            g.patch_size,
            g.cols,
            g.rows,
            level.seqs.len(),
            100.0 * ones as f64 / (level.seqs.len() * set.len) as f64
        );
    }

    let busiest = set.levels[3].seqs.iter().max_by_key(|s| s.ones()).expect("non-empty grid");
    let strip: String = busiest.iter().take(80).map(|b| if b { '#' } else { '.' }).collect();
    println!("busiest 8px patch {:?}:\n{strip}", busiest.patch);
    Ok(())
}
