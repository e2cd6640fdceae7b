//! Frame-sequence ingestion.
//!
//! A video is a directory of numbered raster files (`000000.pgm`, `000001.png`, ...)
//! with an optional `video.meta` sidecar. Frames are decoded on demand so that at
//! most a small window is resident at any time.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage};

use crate::error::{Error, Result};

/// Minimum number of frames: one differencing triplet.
pub const MIN_FRAMES: usize = 3;

/// Frame rate assumed when no `video.meta` is present.
pub const DEFAULT_FPS: f64 = 30.0;

pub const META_FILE: &str = "video.meta";

const EXTENSIONS: &[&str] = &["pgm", "ppm", "pnm", "pbm", "png"];

/// A single 8-bit grayscale image at one time index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub index: usize,
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Frame {
    pub fn new(index: usize, width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "frame data has {} bytes, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Frame { index, width, height, data })
    }

    pub fn filled(index: usize, width: usize, height: usize, value: u8) -> Self {
        Frame { index, width, height, data: vec![value; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn to_gray_image(&self) -> GrayImage {
        GrayImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("frame buffer length is validated at construction")
    }
}

/// Anything that can hand out frames by index: a directory on disk, a synthetic
/// renderer, or an in-memory buffer.
pub trait FrameSource: Sync {
    fn frame_count(&self) -> usize;
    fn dimensions(&self) -> (usize, usize);
    fn read_frame(&self, index: usize) -> Result<Frame>;
}

/// In-memory frame list, mostly useful in tests and small examples.
#[derive(Clone, Debug)]
pub struct MemoryVideo {
    frames: Vec<Frame>,
}

impl MemoryVideo {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        let first = frames.first().ok_or(Error::TooFewFrames { found: 0, required: MIN_FRAMES })?;
        let (w, h) = (first.width, first.height);
        for (i, f) in frames.iter().enumerate() {
            if f.width != w || f.height != h {
                return Err(Error::DimensionMismatch {
                    index: i,
                    expected_w: w,
                    expected_h: h,
                    found_w: f.width,
                    found_h: f.height,
                });
            }
        }
        let frames = frames
            .into_iter()
            .enumerate()
            .map(|(i, mut f)| {
                f.index = i;
                f
            })
            .collect();
        Ok(MemoryVideo { frames })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }
}

impl FrameSource for MemoryVideo {
    fn frame_count(&self) -> usize {
        self.frames.len()
    }

    fn dimensions(&self) -> (usize, usize) {
        (self.frames[0].width, self.frames[0].height)
    }

    fn read_frame(&self, index: usize) -> Result<Frame> {
        self.frames
            .get(index)
            .cloned()
            .ok_or(Error::FrameOutOfRange { index, count: self.frames.len() })
    }
}

/// A frame directory opened for reading.
#[derive(Clone, Debug)]
pub struct VideoSource {
    pub path: PathBuf,
    pub frame_count: usize,
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    files: Vec<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq)]
struct Meta {
    fps: Option<f64>,
    frames: Option<usize>,
}

fn parse_meta(text: &str) -> Result<Meta> {
    let mut meta = Meta::default();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            what: "video.meta",
            detail: format!("expected key=value, got {line:?}"),
        })?;
        let bad = |e: &dyn std::fmt::Display| Error::Parse {
            what: "video.meta",
            detail: format!("{key}: {e}"),
        };
        match key.trim() {
            "fps" => meta.fps = Some(value.trim().parse().map_err(|e| bad(&e))?),
            "frames" => meta.frames = Some(value.trim().parse().map_err(|e| bad(&e))?),
            other => {
                return Err(Error::Parse { what: "video.meta", detail: format!("unknown key {other:?}") })
            }
        }
    }
    Ok(meta)
}

/// Parses `NNNNNN.ext` into its index, or `None` for unrelated files.
fn frame_index(path: &Path) -> Option<usize> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    if !EXTENSIONS.contains(&ext.as_str()) {
        return None;
    }
    let stem = path.file_stem()?.to_str()?;
    if stem.len() != 6 || !stem.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    stem.parse().ok()
}

/// Opens a frame directory, validating naming, contiguity and dimensions.
pub fn open_video(path: impl AsRef<Path>) -> Result<VideoSource> {
    let path = path.as_ref();
    if !path.is_dir() {
        return Err(Error::MissingDirectory(path.to_path_buf()));
    }
    let mut indexed: Vec<(usize, PathBuf)> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter_map(|p| frame_index(&p).map(|i| (i, p)))
        .collect();
    indexed.sort();

    for (expected, (found, _)) in indexed.iter().enumerate() {
        if *found != expected {
            return Err(Error::MissingFrame { expected, found: *found });
        }
    }
    let mut files: Vec<PathBuf> = indexed.into_iter().map(|(_, p)| p).collect();

    let meta_path = path.join(META_FILE);
    let meta = if meta_path.is_file() {
        parse_meta(&fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?)?
    } else {
        Meta::default()
    };
    if let Some(n) = meta.frames {
        if n > files.len() {
            return Err(Error::Parse {
                what: "video.meta",
                detail: format!("frames={n} but only {} frame files present", files.len()),
            });
        }
        files.truncate(n);
    }

    if files.len() < MIN_FRAMES {
        return Err(Error::TooFewFrames { found: files.len(), required: MIN_FRAMES });
    }

    let dims = |p: &Path| -> Result<(usize, usize)> {
        let (w, h) =
            image::image_dimensions(p).map_err(|source| Error::Decode { path: p.to_path_buf(), source })?;
        Ok((w as usize, h as usize))
    };
    let (width, height) = dims(&files[0])?;
    for (i, p) in files.iter().enumerate().skip(1) {
        let (w, h) = dims(p)?;
        if (w, h) != (width, height) {
            return Err(Error::DimensionMismatch {
                index: i,
                expected_w: width,
                expected_h: height,
                found_w: w,
                found_h: h,
            });
        }
    }

    Ok(VideoSource {
        path: path.to_path_buf(),
        frame_count: files.len(),
        fps: meta.fps.unwrap_or(DEFAULT_FPS),
        width,
        height,
        files,
    })
}

/// Luminance with weights 0.299/0.587/0.114, rounded half up.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    let weighted = 299 * r as u32 + 587 * g as u32 + 114 * b as u32;
    ((weighted + 500) / 1000) as u8
}

/// Converts any decoded raster to 8-bit gray; gray inputs pass through untouched.
pub fn to_gray(img: DynamicImage) -> GrayImage {
    match img {
        DynamicImage::ImageLuma8(g) => g,
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) => {
            img.into_luma8()
        }
        other => {
            let rgb = other.into_rgb8();
            let (w, h) = rgb.dimensions();
            let data = rgb.pixels().map(|p| luma(p[0], p[1], p[2])).collect();
            GrayImage::from_raw(w, h, data).expect("dimensions preserved")
        }
    }
}

impl VideoSource {
    pub fn frame_path(&self, index: usize) -> Option<&Path> {
        self.files.get(index).map(PathBuf::as_path)
    }
}

impl FrameSource for VideoSource {
    fn frame_count(&self) -> usize {
        self.frame_count
    }

    fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn read_frame(&self, index: usize) -> Result<Frame> {
        let path = self
            .files
            .get(index)
            .ok_or(Error::FrameOutOfRange { index, count: self.frame_count })?;
        let img = image::open(path).map_err(|source| Error::Decode { path: path.clone(), source })?;
        let gray = to_gray(img);
        let (w, h) = (gray.width() as usize, gray.height() as usize);
        if (w, h) != (self.width, self.height) {
            return Err(Error::DimensionMismatch {
                index,
                expected_w: self.width,
                expected_h: self.height,
                found_w: w,
                found_h: h,
            });
        }
        Frame::new(index, w, h, gray.into_raw())
    }
}

/// Writes frames as `NNNNNN.<ext>` plus a `video.meta` sidecar.
pub fn write_video(
    dir: impl AsRef<Path>,
    source: &dyn FrameSource,
    fps: f64,
    extension: &str,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for i in 0..source.frame_count() {
        let frame = source.read_frame(i)?;
        let path = dir.join(format!("{i:06}.{extension}"));
        frame
            .to_gray_image()
            .save(&path)
            .map_err(|source| Error::Decode { path: path.clone(), source })?;
    }
    let meta = dir.join(META_FILE);
    fs::write(&meta, format!("fps={fps}\nframes={}\n", source.frame_count())).map_err(|e| Error::io(&meta, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};

    fn write_gray(dir: &Path, name: &str, w: u32, h: u32, v: u8) {
        GrayImage::from_pixel(w, h, image::Luma([v])).save(dir.join(name)).unwrap();
    }

    #[test]
    fn luma_weights() {
        assert_eq!(luma(255, 255, 255), 255);
        assert_eq!(luma(0, 0, 0), 0);
        assert_eq!(luma(100, 200, 50), 153);
    }

    #[test]
    fn gray_is_idempotent() {
        let g = GrayImage::from_fn(7, 5, |x, y| image::Luma([(x * 31 + y * 17) as u8]));
        let again = to_gray(DynamicImage::ImageLuma8(g.clone()));
        assert_eq!(g, again);
        let rgb = RgbImage::from_fn(7, 5, |x, y| {
            let v = (x * 31 + y * 17) as u8;
            Rgb([v, v, v])
        });
        assert_eq!(to_gray(DynamicImage::ImageRgb8(rgb)), g);
    }

    #[test]
    fn opens_and_reads_in_order() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..5 {
            write_gray(dir.path(), &format!("{i:06}.pgm"), 8, 6, i as u8 * 10);
        }
        fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let src = open_video(dir.path()).unwrap();
        assert_eq!(src.frame_count, 5);
        assert_eq!(src.fps, DEFAULT_FPS);
        assert_eq!((src.width, src.height), (8, 6));
        for i in 0..5 {
            let f = src.read_frame(i).unwrap();
            assert_eq!(f.index, i);
            assert!(f.data.iter().all(|&v| v == i as u8 * 10));
            assert_eq!(f, src.read_frame(i).unwrap());
        }
        assert!(matches!(src.read_frame(5), Err(Error::FrameOutOfRange { .. })));
    }

    #[test]
    fn color_frames_are_converted() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..3 {
            RgbImage::from_pixel(4, 4, Rgb([100, 200, 50])).save(dir.path().join(format!("{i:06}.png"))).unwrap();
        }
        let src = open_video(dir.path()).unwrap();
        assert!(src.read_frame(1).unwrap().data.iter().all(|&v| v == 153));
    }

    #[test]
    fn too_few_frames() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..2 {
            write_gray(dir.path(), &format!("{i:06}.pgm"), 4, 4, 0);
        }
        assert!(matches!(open_video(dir.path()), Err(Error::TooFewFrames { found: 2, .. })));
    }

    #[test]
    fn dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..4 {
            let (w, h) = if i == 2 { (640, 480) } else { (320, 240) };
            write_gray(dir.path(), &format!("{i:06}.pgm"), w, h, 0);
        }
        assert!(matches!(open_video(dir.path()), Err(Error::DimensionMismatch { index: 2, .. })));
    }

    #[test]
    fn missing_directory_and_gaps() {
        assert!(matches!(open_video("/nonexistent/frames"), Err(Error::MissingDirectory(_))));
        let dir = tempfile::tempdir().unwrap();
        for i in [0, 1, 3, 4] {
            write_gray(dir.path(), &format!("{i:06}.pgm"), 4, 4, 0);
        }
        assert!(matches!(open_video(dir.path()), Err(Error::MissingFrame { expected: 2, found: 3 })));
    }

    #[test]
    fn meta_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..6 {
            write_gray(dir.path(), &format!("{i:06}.pgm"), 4, 4, 0);
        }
        fs::write(dir.path().join(META_FILE), "fps=25\nframes=4\n").unwrap();
        let src = open_video(dir.path()).unwrap();
        assert_eq!(src.fps, 25.0);
        assert_eq!(src.frame_count, 4);

        fs::write(dir.path().join(META_FILE), "fps=25\nframes=9\n").unwrap();
        assert!(open_video(dir.path()).is_err());
        fs::write(dir.path().join(META_FILE), "speed=2\n").unwrap();
        assert!(open_video(dir.path()).is_err());
    }

    #[test]
    fn unreadable_file() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..3 {
            write_gray(dir.path(), &format!("{i:06}.pgm"), 4, 4, 0);
        }
        fs::write(dir.path().join("000003.png"), b"not a png").unwrap();
        assert!(matches!(open_video(dir.path()), Err(Error::Decode { .. })));
    }

    #[test]
    fn write_then_open_round_trip() {
        let frames = (0..4).map(|i| Frame::filled(i, 5, 3, 40 * i as u8)).collect();
        let video = MemoryVideo::new(frames).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_video(dir.path(), &video, 12.5, "png").unwrap();
        let src = open_video(dir.path()).unwrap();
        assert_eq!(src.fps, 12.5);
        for i in 0..4 {
            assert_eq!(src.read_frame(i).unwrap(), video.read_frame(i).unwrap());
        }
    }
}
