//! Random search and neighbour propagation on the finest level: how many A
//! patches hold a match after each round.

use flowmatch::config::Config;
use flowmatch::eval::Homography;
use flowmatch::matcher::run_hierarchy_with;
use flowmatch::motion_state::build_sequences;
use flowmatch::refine::refine_level_traced;
use flowmatch::synth::{make_pair, PairSpec, SceneSpec};

fn main() -> flowmatch::error::Result<()> {
    let scene = SceneSpec::random(320, 256, 401, 6, 2);
    let (a, b, _) = make_pair(&PairSpec::new(scene, Homography::translation(16.0, 8.0)))?;
    let mut config = Config::default();
    config.refine.iterations = 5;
    let sa = build_sequences(&a, &config.plan.levels, &config.thresholds, None)?;
    let sb = build_sequences(&b, &config.plan.levels, &config.thresholds, None)?;

    run_hierarchy_with(&sa, &sb, &config.plan, &config.matching, |ctx, triplets| {
        let (refined, trace) = refine_level_traced(&triplets, ctx, &config.refine, config.rng_seed);
        println!("level {}: {} matched -> {:?} by round -> {} kept", ctx.level, triplets.len(), trace, refined.len());
        refined
    })?;
    Ok(())
}
