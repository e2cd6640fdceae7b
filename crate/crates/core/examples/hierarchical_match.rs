//! Coarse-to-fine matching without refinement: each level only compares the
//! children of blocks matched one level up.

use flowmatch::eval::Homography;
use flowmatch::matcher::{quadtree_total_evaluations, run_hierarchy, HierarchyPlan, MatchParams};
use flowmatch::motion_state::{build_sequences, Thresholds};
use flowmatch::synth::{make_pair, PairSpec, SceneSpec};

fn main() -> flowmatch::error::Result<()> {
    let scene = SceneSpec::random(320, 256, 401, 6, 5);
    let (a, b, _) = make_pair(&PairSpec::new(scene, Homography::translation(32.0, 0.0)))?;
    let plan = HierarchyPlan::default();
    let th = Thresholds::default();
    let sa = build_sequences(&a, &plan.levels, &th, None)?;
    let sb = build_sequences(&b, &plan.levels, &th, None)?;

    for r in run_hierarchy(&sa, &sb, &plan, &MatchParams::default())? {
        println!(
            "level {} ({}px): {} x {} candidates, {} evaluations, threshold {}, {} matches",
            r.level,
            r.spec.patch_size,
            r.a_candidates,
            r.b_candidates,
            r.evaluations,
            r.threshold.map_or("-".into(), |t| format!("{t:.3}")),
            r.triplets.len()
        );
    }
    let full = (40u64 * 32).pow(2);
    println!(
        "fully matched 8x8 tree costs {} evaluations; exhaustive matching at 8px would cost {full}",
        quadtree_total_evaluations(2, 8)
    );
    Ok(())
}
