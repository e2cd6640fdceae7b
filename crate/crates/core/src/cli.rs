//! Command-line front end.
//!
//! ```text
//! flowmatch match   --a DIR --b DIR [--config FILE] --out DIR [--threads N]
//! flowmatch eval    --matches FILE --hom FILE --out DIR
//! flowmatch synth   (--spec pair.json | generation flags) --out DIR
//! flowmatch overlay --frame-a IMG --frame-b IMG --matches FILE --out IMG
//! ```
//!
//! Exit status is 0 on success, 1 for bad input and 2 for internal failures.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{Config, LoadedConfig};
use crate::error::{Error, Result};
use crate::eval::{score_centers, EvalReport, Homography, DEFAULT_PATCH_THRESHOLDS, DEFAULT_PX_THRESHOLDS};
use crate::overlay::render_overlay;
use crate::pipeline::{run_pipeline, MatchFile, PipelineOutput};
use crate::synth::{read_pair_spec, write_pair, Modality, PairSpec, SceneSpec};
use crate::video_io::{open_video, to_gray, FrameSource};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.json";
pub const CURVES_FILE: &str = "curves.csv";

#[derive(Debug, Parser)]
#[command(name = "flowmatch", version, about = "Match blocks between two videos by their motion signatures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Match every block of video A against video B.
    Match(MatchArgs),
    /// Score a match file against a ground-truth homography.
    Eval(EvalArgs),
    /// Render a synthetic video pair with known geometry.
    Synth(SynthArgs),
    /// Draw matches between two frames side by side.
    Overlay(OverlayArgs),
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Frame directory of video A.
    #[arg(long)]
    pub a: PathBuf,
    /// Frame directory of video B.
    #[arg(long)]
    pub b: PathBuf,
    /// `key=value` configuration; omitted keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: u16,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub matches: PathBuf,
    /// Ground truth mapping A pixels to B pixels.
    #[arg(long)]
    pub hom: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Pair description as written to `pair.json`. Overrides the generation flags.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 320)]
    pub width: usize,
    #[arg(long, default_value_t = 240)]
    pub height: usize,
    #[arg(long, default_value_t = 401)]
    pub frames: usize,
    #[arg(long, default_value_t = 6)]
    pub objects: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Gaussian noise standard deviation in gray levels.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Ground truth as a `.hom` file; otherwise a translation by `--tx`/`--ty`.
    #[arg(long)]
    pub hom: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub tx: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub ty: f64,
    /// identity, invert, gamma:G or threshold:T.
    #[arg(long, default_value = "identity", value_parser = parse_modality)]
    pub modality: Modality,
    /// States by which B lags A.
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    pub offset: i64,
    /// Frame file extension.
    #[arg(long, default_value = "png", value_parser = ["png", "pgm"])]
    pub ext: String,
}

#[derive(Debug, Args)]
pub struct OverlayArgs {
    #[arg(long)]
    pub frame_a: PathBuf,
    #[arg(long)]
    pub frame_b: PathBuf,
    #[arg(long)]
    pub matches: PathBuf,
    /// Output image; the format follows the extension.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn parse_modality(s: &str) -> std::result::Result<Modality, String> {
    let (kind, param) = match s.split_once(':') {
        Some((k, p)) => (k, Some(p)),
        None => (s, None),
    };
    match (kind, param) {
        ("identity", None) => Ok(Modality::Identity),
        ("invert", None) => Ok(Modality::Invert),
        ("gamma", Some(g)) => g.parse().map(Modality::Gamma).map_err(|e| format!("gamma: {e}")),
        ("threshold", Some(t)) => t.parse().map(Modality::Threshold).map_err(|e| format!("threshold: {e}")),
        _ => Err(format!("unknown modality {s:?}")),
    }
}

/// Parses arguments and runs the chosen command, returning the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Match(a) => cmd_match(&a).map(|_| ()),
        Command::Eval(a) => cmd_eval(&a).map(|_| ()),
        Command::Synth(a) => cmd_synth(&a),
        Command::Overlay(a) => cmd_overlay(&a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                EXIT_INPUT
            } else {
                EXIT_INTERNAL
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VideoInfo {
    pub path: PathBuf,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelSummary {
    pub level: usize,
    pub patch_size: usize,
    pub stride: usize,
    pub file: String,
    pub a_candidates: usize,
    pub b_candidates: usize,
    pub threshold: Option<f64>,
    pub evaluations: u64,
    /// Pairs retained by matching alone.
    pub matched: usize,
    /// Pairs after refinement, as written to the level file.
    pub matches: usize,
    pub refined: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelTiming {
    pub level: usize,
    pub match_s: f64,
    pub refine_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Timings {
    pub states_s: f64,
    pub levels: Vec<LevelTiming>,
    pub total_s: f64,
}

/// Everything `match` records next to the level files.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Manifest {
    pub a: VideoInfo,
    pub b: VideoInfo,
    pub config_file: Option<PathBuf>,
    /// Effective value of every key after defaults.
    pub config: BTreeMap<String, String>,
    pub defaulted: Vec<String>,
    pub states: usize,
    pub threads: usize,
    pub levels: Vec<LevelSummary>,
    pub warnings: Vec<String>,
    pub timings: Timings,
}

fn video_info(path: &Path, v: &dyn FrameSource) -> VideoInfo {
    let (width, height) = v.dimensions();
    VideoInfo { path: path.to_path_buf(), frames: v.frame_count(), width, height }
}

fn warnings_for(out: &PipelineOutput, a: &VideoInfo, b: &VideoInfo) -> Vec<String> {
    let mut w = Vec::new();
    if a.frames != b.frames {
        w.push(format!("videos differ in length ({} vs {} frames); compared {} states", a.frames, b.frames, out.states()));
    }
    let first = &out.levels[0];
    if first.a_candidates == 0 {
        w.push("video A has no moving blocks at the coarsest level".into());
    }
    if first.b_candidates == 0 {
        w.push("video B has no moving blocks at the coarsest level".into());
    }
    if out.levels.iter().all(|l| l.triplets.is_empty()) {
        w.push("no matches found".into());
    }
    w
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json { path: path.to_path_buf(), source: e })?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start {threads} worker threads: {e}")))
}

pub fn cmd_match(args: &MatchArgs) -> Result<Manifest> {
    let started = Instant::now();
    let LoadedConfig { config, defaulted } = match &args.config {
        Some(path) => Config::load(path)?,
        None => Config::parse("")?,
    };
    let a = open_video(&args.a)?;
    let b = open_video(&args.b)?;
    let threads = args.threads as usize;
    let out = thread_pool(threads)?.install(|| run_pipeline(&a, &b, &config))?;

    create_dir(&args.out)?;
    let mut levels = Vec::new();
    let mut timings = Vec::new();
    for (i, result) in out.levels.iter().enumerate() {
        let file = out.match_file(i);
        let name = MatchFile::file_name(result.level);
        file.save(args.out.join(&name))?;
        levels.push(LevelSummary {
            level: result.level,
            patch_size: result.spec.patch_size,
            stride: result.spec.stride,
            file: name,
            a_candidates: result.a_candidates,
            b_candidates: result.b_candidates,
            threshold: result.threshold,
            evaluations: result.evaluations,
            matched: result.matched.len(),
            matches: result.triplets.len(),
            refined: result.triplets.iter().filter(|t| t.refined).count(),
        });
        timings.push(LevelTiming {
            level: result.level,
            match_s: result.match_time.as_secs_f64(),
            refine_s: result.refine_time.as_secs_f64(),
        });
    }
    let (a_info, b_info) = (video_info(&args.a, &a), video_info(&args.b, &b));
    let warnings = warnings_for(&out, &a_info, &b_info);
    let manifest = Manifest {
        a: a_info,
        b: b_info,
        config_file: args.config.clone(),
        config: config.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        defaulted: defaulted.iter().map(|k| k.to_string()).collect(),
        states: out.states(),
        threads,
        levels,
        warnings,
        timings: Timings {
            states_s: out.state_time.as_secs_f64(),
            levels: timings,
            total_s: started.elapsed().as_secs_f64(),
        },
    };
    write_json(&args.out.join(MANIFEST_FILE), &manifest)?;

    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    for l in &manifest.levels {
        println!("level {} ({}px): {} matches", l.level, l.patch_size, l.matches);
    }
    Ok(manifest)
}

/// `Matches: <n>, Dist(px): <mean>`.
pub fn summary_line(report: &EvalReport) -> String {
    match report.mean_px_dist {
        Some(m) => format!("Matches: {}, Dist(px): {m:.2}", report.n_matches),
        None => format!("Matches: {}, Dist(px): n/a", report.n_matches),
    }
}

/// Accuracy curves as `curve,cum_fraction,threshold,value` rows.
pub fn curves_csv(report: &EvalReport) -> String {
    let mut s = String::from("curve,cum_fraction,threshold,value\n");
    for p in &report.acc_at {
        let _ = writeln!(s, "px,1,{},{}", p.threshold, p.fraction);
    }
    for p in &report.patch_acc_at {
        let _ = writeln!(s, "patch,1,{},{}", p.threshold, p.fraction);
    }
    for p in &report.ranked_surface {
        let _ = writeln!(s, "ranked,{},{},{}", p.cum_fraction, p.threshold, p.accuracy);
    }
    s
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport> {
    let file = MatchFile::load(&args.matches)?;
    let h = Homography::load(&args.hom)?;
    let report = score_centers(&file.centers(), &h, &DEFAULT_PX_THRESHOLDS, &DEFAULT_PATCH_THRESHOLDS)?;
    create_dir(&args.out)?;
    write_json(&args.out.join(REPORT_FILE), &report)?;
    let curves = args.out.join(CURVES_FILE);
    std::fs::write(&curves, curves_csv(&report)).map_err(|e| Error::io(&curves, e))?;
    println!("{}", summary_line(&report));
    Ok(report)
}

pub fn pair_from_flags(args: &SynthArgs) -> Result<PairSpec> {
    let mut base = SceneSpec::random(args.width, args.height, args.frames, args.objects, args.seed);
    base.noise_sigma = args.noise;
    let h = match &args.hom {
        Some(path) => Homography::load(path)?,
        None => Homography::translation(args.tx, args.ty),
    };
    Ok(PairSpec { base, h, modality: args.modality, temporal_offset_states: args.offset })
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let spec = match &args.spec {
        Some(path) => read_pair_spec(path)?,
        None => pair_from_flags(args)?,
    };
    write_pair(&args.out, &spec, &args.ext)?;
    println!(
        "wrote {} frames per view ({}x{}) to {}",
        spec.base.n_frames,
        spec.base.width,
        spec.base.height,
        args.out.display()
    );
    Ok(())
}

fn load_gray(path: &Path) -> Result<image::GrayImage> {
    if !path.is_file() {
        return Err(Error::io(path, std::io::ErrorKind::NotFound.into()));
    }
    let img = image::open(path).map_err(|source| Error::Decode { path: path.to_path_buf(), source })?;
    Ok(to_gray(img))
}

pub fn cmd_overlay(args: &OverlayArgs) -> Result<()> {
    let a = load_gray(&args.frame_a)?;
    let b = load_gray(&args.frame_b)?;
    let file = MatchFile::load(&args.matches)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    render_overlay(&a, &b, &file)
        .save(&args.out)
        .map_err(|source| Error::Decode { path: args.out.clone(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modality_flags() {
        assert_eq!(parse_modality("identity"), Ok(Modality::Identity));
        assert_eq!(parse_modality("invert"), Ok(Modality::Invert));
        assert_eq!(parse_modality("gamma:0.5"), Ok(Modality::Gamma(0.5)));
        assert_eq!(parse_modality("threshold:100"), Ok(Modality::Threshold(100)));
        assert!(parse_modality("gamma").is_err());
        assert!(parse_modality("sepia").is_err());
    }

    #[test]
    fn usage_errors_are_input_errors() {
        assert_eq!(run(["flowmatch"]), EXIT_INPUT);
        assert_eq!(run(["flowmatch", "match", "--a", "x"]), EXIT_INPUT);
        assert_eq!(run(["flowmatch", "match", "--a", "x", "--b", "y", "--out", "z", "--threads", "0"]), EXIT_INPUT);
        assert_eq!(run(["flowmatch", "--help"]), EXIT_OK);
    }

    #[test]
    fn summary_format() {
        let empty = EvalReport { n_matches: 0, mean_px_dist: None, acc_at: vec![], patch_acc_at: vec![], ranked_surface: vec![] };
        assert_eq!(summary_line(&empty), "Matches: 0, Dist(px): n/a");
        let some = EvalReport { n_matches: 135, mean_px_dist: Some(2.345), ..empty.clone() };
        assert_eq!(summary_line(&some), "Matches: 135, Dist(px): 2.35");
        assert_eq!(curves_csv(&empty), "curve,cum_fraction,threshold,value\n");
    }
}
