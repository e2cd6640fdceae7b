pub mod error;
pub mod matcher;
pub mod motion_state;
pub mod sequence;
pub mod video_io;
pub mod refine;
pub mod eval;
pub(crate) mod seed;
pub mod synth;
pub mod config;
pub mod pipeline;
pub mod overlay;
pub mod cli;
