//! Synthetic moving-object scenes and ground-truthed view pairs.
//!
//! Frames are rendered on demand from an analytic description, so a pair of
//! long videos costs no memory beyond the frame being read. View B is view A
//! warped by a known homography, passed through a modality transform, and
//! optionally delayed by a whole number of states.

use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Homography;
use crate::seed::{mix, rng_for};
use crate::video_io::{write_video, Frame, FrameSource};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Rect,
    Ellipse,
}

/// Trajectory of an object's top-left corner, in pixels, as a function of frame time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Motion {
    /// Constant velocity, unbounded.
    Linear { x0: f64, y0: f64, vx: f64, vy: f64 },
    /// Constant speed, reflecting off the frame edges so the object stays inside.
    Bounce { x0: f64, y0: f64, vx: f64, vy: f64 },
    /// Closed polyline traversed at constant speed, looping.
    Waypoints { points: Vec<(f64, f64)>, speed: f64 },
}

/// Random cell pattern painted on an object, fixed to the object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    /// Cell size in pixels.
    pub cell: usize,
    /// Intensities the cells are drawn from.
    pub palette: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub shape: Shape,
    pub width: usize,
    pub height: usize,
    pub intensity: u8,
    #[serde(default)]
    pub texture: Option<Texture>,
    pub motion: Motion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    pub background: u8,
    pub noise_sigma: f64,
    pub seed: u64,
    pub objects: Vec<ObjectSpec>,
}

fn triangle(p: f64, span: f64) -> f64 {
    if span <= 0.0 {
        return 0.0;
    }
    let u = p.rem_euclid(2.0 * span);
    if u <= span {
        u
    } else {
        2.0 * span - u
    }
}

impl ObjectSpec {
    /// Top-left corner at frame time `t`, which may be negative.
    pub fn position(&self, t: f64, frame_w: usize, frame_h: usize) -> (f64, f64) {
        match &self.motion {
            Motion::Linear { x0, y0, vx, vy } => (x0 + vx * t, y0 + vy * t),
            Motion::Bounce { x0, y0, vx, vy } => (
                triangle(x0 + vx * t, frame_w as f64 - self.width as f64),
                triangle(y0 + vy * t, frame_h as f64 - self.height as f64),
            ),
            Motion::Waypoints { points, speed } => {
                if points.len() < 2 {
                    return points.first().copied().unwrap_or((0.0, 0.0));
                }
                let legs: Vec<((f64, f64), (f64, f64), f64)> = points
                    .iter()
                    .zip(points.iter().cycle().skip(1))
                    .map(|(&p, &q)| (p, q, (q.0 - p.0).hypot(q.1 - p.1)))
                    .collect();
                let total: f64 = legs.iter().map(|l| l.2).sum();
                if total == 0.0 {
                    return points[0];
                }
                let mut s = (speed * t).rem_euclid(total);
                for (p, q, len) in &legs {
                    if s <= *len && *len > 0.0 {
                        let f = s / len;
                        return (p.0 + (q.0 - p.0) * f, p.1 + (q.1 - p.1) * f);
                    }
                    s -= len;
                }
                points[0]
            }
        }
    }

    fn pixel_position(&self, t: f64, frame_w: usize, frame_h: usize) -> (i64, i64) {
        let (x, y) = self.position(t, frame_w, frame_h);
        (x.round() as i64, y.round() as i64)
    }

    fn covers(&self, u: usize, v: usize) -> bool {
        match self.shape {
            Shape::Rect => true,
            Shape::Ellipse => {
                let (a, b) = (self.width as f64 / 2.0, self.height as f64 / 2.0);
                let (dx, dy) = ((u as f64 + 0.5 - a) / a, (v as f64 + 0.5 - b) / b);
                dx * dx + dy * dy <= 1.0
            }
        }
    }

    /// Intensity at object-local point `(u, v)`. Cell values sit at cell
    /// centers and are blended bilinearly, so sub-pixel motion still changes
    /// the rendered pixels.
    fn shade(&self, key: u64, u: f64, v: f64) -> u8 {
        match &self.texture {
            Some(tex) if tex.cell > 0 && !tex.palette.is_empty() => {
                let cell_value = |i: i64, j: i64| {
                    let h = mix(key, &[i as u64, j as u64]);
                    tex.palette[(h % tex.palette.len() as u64) as usize] as f64
                };
                let (cu, cv) = (u / tex.cell as f64 - 0.5, v / tex.cell as f64 - 0.5);
                let (i, j) = (cu.floor(), cv.floor());
                let (fx, fy) = (cu - i, cv - j);
                let (i, j) = (i as i64, j as i64);
                let top = cell_value(i, j) * (1.0 - fx) + cell_value(i + 1, j) * fx;
                let bottom = cell_value(i, j + 1) * (1.0 - fx) + cell_value(i + 1, j + 1) * fx;
                (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8
            }
            _ => self.intensity,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidScene("frame dimensions must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidScene("noise sigma must be a non-negative number".into()));
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.width == 0 || o.height == 0 {
                return Err(Error::InvalidScene(format!("object {i} has zero size")));
            }
            let visible = (0..self.n_frames).any(|t| {
                let (x, y) = o.pixel_position(t as f64, self.width, self.height);
                x < self.width as i64 && y < self.height as i64 && x + o.width as i64 > 0 && y + o.height as i64 > 0
            });
            if !visible {
                return Err(Error::InvalidScene(format!("object {i} never enters the frame")));
            }
        }
        Ok(())
    }

    /// Noise-free frame at time `t`; objects later in the list occlude earlier ones.
    pub fn render_clean(&self, t: i64) -> Vec<u8> {
        let (w, h) = (self.width, self.height);
        let mut data = vec![self.background; w * h];
        for (i, o) in self.objects.iter().enumerate() {
            let key = mix(self.seed, &[0x7e47, i as u64]);
            let (xf, yf) = o.position(t as f64, w, h);
            let (x0, y0) = (xf.round() as i64, yf.round() as i64);
            let (ys, ye) = (y0.max(0), (y0 + o.height as i64).min(h as i64));
            let (xs, xe) = (x0.max(0), (x0 + o.width as i64).min(w as i64));
            for y in ys..ye {
                let v = (y - y0) as usize;
                let row = &mut data[y as usize * w..(y as usize + 1) * w];
                for x in xs..xe {
                    let u = (x - x0) as usize;
                    if o.covers(u, v) {
                        row[x as usize] = o.shade(key, x as f64 - xf, y as f64 - yf);
                    }
                }
            }
        }
        data
    }

    /// A scene of textured objects that bounce around or follow loops at 2 to
    /// 4 pixels per frame.
    ///
    /// Textures use four levels at least 40 apart with cells no larger than
    /// the per-frame displacement, so most covered pixels change between
    /// consecutive frames by far more than any sensible difference threshold.
    pub fn random(width: usize, height: usize, n_frames: usize, n_objects: usize, seed: u64) -> SceneSpec {
        SceneSpec::random_with_speed(width, height, n_frames, n_objects, seed, 2.0..4.0)
    }

    /// Like [`SceneSpec::random`] with per-axis speeds drawn from `speed`, in pixels per frame.
    pub fn random_with_speed(
        width: usize,
        height: usize,
        n_frames: usize,
        n_objects: usize,
        seed: u64,
        speed: std::ops::Range<f64>,
    ) -> SceneSpec {
        let mut rng = rng_for(seed, &[0x5ce4e]);
        let background = 24u8;
        let min_side = width.min(height);
        let (lo, hi) = ((min_side / 8).max(4), (min_side / 3).max(6));
        let objects = (0..n_objects)
            .map(|_| {
                let (ow, oh) = (rng.random_range(lo..=hi), rng.random_range(lo..=hi));
                let mut palette = PALETTE.to_vec();
                palette.shuffle(&mut rng);
                palette.truncate(4);
                let intensity = palette[0];
                let shape = *[Shape::Rect, Shape::Ellipse].choose(&mut rng).expect("non-empty");
                let max_x = width.saturating_sub(ow) as f64;
                let max_y = height.saturating_sub(oh) as f64;
                let motion = if rng.random_bool(0.7) {
                    let (vx, vy) = (signed_speed(&mut rng, speed.clone()), signed_speed(&mut rng, speed.clone()));
                    Motion::Bounce { x0: rng.random_range(0.0..=max_x), y0: rng.random_range(0.0..=max_y), vx, vy }
                } else {
                    let n = rng.random_range(3..=5);
                    let points = (0..n).map(|_| (rng.random_range(0.0..=max_x), rng.random_range(0.0..=max_y))).collect();
                    Motion::Waypoints { points, speed: rng.random_range(speed.clone()) * 1.2 }
                };
                ObjectSpec {
                    shape,
                    width: ow,
                    height: oh,
                    intensity,
                    texture: Some(Texture { cell: rng.random_range(2..=3), palette }),
                    motion,
                }
            })
            .collect();
        SceneSpec { width, height, n_frames, background, noise_sigma: 0.0, seed, objects }
    }
}

const PALETTE: [u8; 6] = [64, 104, 144, 184, 224, 255];

fn signed_speed(rng: &mut impl Rng, range: std::ops::Range<f64>) -> f64 {
    let s = rng.random_range(range);
    if rng.random_bool(0.5) {
        s
    } else {
        -s
    }
}

/// Intensity transform applied to view B to imitate another sensor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "param", rename_all = "snake_case")]
pub enum Modality {
    Identity,
    Invert,
    Gamma(f64),
    Threshold(u8),
}

impl Modality {
    fn lut(&self) -> [u8; 256] {
        std::array::from_fn(|v| {
            let v = v as u8;
            match *self {
                Modality::Identity => v,
                Modality::Invert => 255 - v,
                Modality::Gamma(g) => (255.0 * (v as f64 / 255.0).powf(g)).round().clamp(0.0, 255.0) as u8,
                Modality::Threshold(t) => {
                    if v > t {
                        255
                    } else {
                        0
                    }
                }
            }
        })
    }

    pub fn apply(&self, v: u8) -> u8 {
        self.lut()[v as usize]
    }
}

fn homography_rows<S: serde::Serializer>(h: &Homography, s: S) -> std::result::Result<S::Ok, S::Error> {
    h.rows().serialize(s)
}

fn homography_from_rows<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Homography, D::Error> {
    let rows = <[[f64; 3]; 3]>::deserialize(d)?;
    Homography::new(rows).map_err(serde::de::Error::custom)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub base: SceneSpec,
    /// Maps A pixel coordinates to B pixel coordinates.
    #[serde(serialize_with = "homography_rows", deserialize_with = "homography_from_rows")]
    pub h: Homography,
    pub modality: Modality,
    /// B lags A by this many states (two frames each); negative leads.
    pub temporal_offset_states: i64,
}

impl PairSpec {
    pub fn new(base: SceneSpec, h: Homography) -> Self {
        PairSpec { base, h, modality: Modality::Identity, temporal_offset_states: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        let states = self.base.n_frames.saturating_sub(1) / 2;
        if self.temporal_offset_states.unsigned_abs() as usize >= states.max(1) {
            return Err(Error::InvalidScene(format!(
                "temporal offset {} states must be below the sequence length {states}",
                self.temporal_offset_states
            )));
        }
        if let Modality::Gamma(g) = self.modality {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidScene("gamma must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Inverse-mapped bilinear warp of a `w`x`h` image; samples outside the
/// source take `fill`. Integer coordinates are pixel centers.
pub fn warp_image(src: &[u8], w: usize, h: usize, inv: &Homography, fill: u8) -> Vec<u8> {
    let mut out = vec![fill; w * h];
    let (wf, hf) = ((w - 1) as f64, (h - 1) as f64);
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, px) in row.iter_mut().enumerate() {
            let Ok((sx, sy)) = inv.apply(x as f64, y as f64) else { continue };
            if !(sx >= 0.0 && sy >= 0.0 && sx <= wf && sy <= hf) {
                continue;
            }
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            let at = |xx: usize, yy: usize| src[yy.min(h - 1) * w + xx.min(w - 1)] as f64;
            *px = if fx == 0.0 && fy == 0.0 {
                src[y0 * w + x0]
            } else {
                let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
                let bottom = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
                (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8
            };
        }
    });
    out
}

/// One rendered view of a scene.
#[derive(Clone, Debug)]
pub struct SyntheticVideo {
    scene: SceneSpec,
    inverse: Option<Homography>,
    lut: [u8; 256],
    delay_frames: i64,
    stream: u64,
}

impl SyntheticVideo {
    /// The scene as seen directly.
    pub fn scene(scene: SceneSpec) -> Result<Self> {
        scene.validate()?;
        Ok(SyntheticVideo { scene, inverse: None, lut: Modality::Identity.lut(), delay_frames: 0, stream: 0 })
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.scene
    }

    fn noise(&self, index: usize, data: &mut [u8]) {
        if self.scene.noise_sigma == 0.0 {
            return;
        }
        let normal = Normal::new(0.0, self.scene.noise_sigma).expect("sigma validated");
        let mut rng = rng_for(self.scene.seed, &[0x4015e, self.stream, index as u64]);
        for v in data.iter_mut() {
            *v = (*v as f64 + normal.sample(&mut rng)).round().clamp(0.0, 255.0) as u8;
        }
    }
}

impl FrameSource for SyntheticVideo {
    fn frame_count(&self) -> usize {
        self.scene.n_frames
    }

    fn dimensions(&self) -> (usize, usize) {
        (self.scene.width, self.scene.height)
    }

    fn read_frame(&self, index: usize) -> Result<Frame> {
        if index >= self.scene.n_frames {
            return Err(Error::FrameOutOfRange { index, count: self.scene.n_frames });
        }
        let (w, h) = (self.scene.width, self.scene.height);
        let mut data = self.scene.render_clean(index as i64 - self.delay_frames);
        if let Some(inv) = &self.inverse {
            data = warp_image(&data, w, h, inv, self.scene.background);
        }
        for v in data.iter_mut() {
            *v = self.lut[*v as usize];
        }
        self.noise(index, &mut data);
        Frame::new(index, w, h, data)
    }
}

/// Renders every frame of the directly observed scene.
pub fn render_scene(spec: &SceneSpec) -> Result<Vec<Frame>> {
    let video = SyntheticVideo::scene(spec.clone())?;
    (0..spec.n_frames).into_par_iter().map(|i| video.read_frame(i)).collect()
}

/// Views A and B of a pair plus the exact homography relating them.
pub fn make_pair(spec: &PairSpec) -> Result<(SyntheticVideo, SyntheticVideo, Homography)> {
    spec.validate()?;
    let a = SyntheticVideo::scene(spec.base.clone())?;
    let inverse = if spec.h.is_identity() { None } else { Some(spec.h.inverse()?) };
    let b = SyntheticVideo {
        scene: spec.base.clone(),
        inverse,
        lut: spec.modality.lut(),
        delay_frames: 2 * spec.temporal_offset_states,
        stream: 1,
    };
    Ok((a, b, spec.h))
}

/// Writes `a/` and `b/` frame directories, `gt.hom` and `pair.json` under `dir`.
pub fn write_pair(dir: impl AsRef<Path>, spec: &PairSpec, ext: &str) -> Result<()> {
    let dir = dir.as_ref();
    let (a, b, h) = make_pair(spec)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_video(dir.join("a"), &a, 30.0, ext)?;
    write_video(dir.join("b"), &b, 30.0, ext)?;
    h.save(dir.join("gt.hom"))?;
    let manifest = dir.join("pair.json");
    let json = serde_json::to_string_pretty(spec).map_err(|e| Error::Json { path: manifest.clone(), source: e })?;
    std::fs::write(&manifest, json + "\n").map_err(|e| Error::io(&manifest, e))
}

pub fn read_pair_spec(path: impl AsRef<Path>) -> Result<PairSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json { path: path.to_path_buf(), source: e })
}
