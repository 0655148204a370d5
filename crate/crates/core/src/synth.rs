//! Synthetic videos: textured background, moving coloured rectangles, exact
//! flow, and per-frame ground truth.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::HUE_CLASSES;
use crate::error::{Error, Result};
use crate::eval::{GroundTruth, GtFrame, GtObject};
use crate::field::Field2D;
use crate::geom::BBox;
use crate::image::{write_pgm, write_ppm, RgbImage};
use crate::motion::{save_flow, FlowField};

pub const MAX_OBJECTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthObject {
    /// One of the hue class names (`red`, `yellow`, `green`, `cyan`, `blue`, `magenta`).
    pub class: String,
    /// `[w, h]` in pixels.
    pub size: [u32; 2],
    /// Top-left corner `[x, y]` at the entry frame.
    pub start: [f64; 2],
    /// Pixels per frame.
    #[serde(default)]
    pub velocity: [f64; 2],
    /// First frame the object is present.
    #[serde(default)]
    pub enter: usize,
    /// First frame the object is gone; `None` keeps it to the end.
    #[serde(default)]
    pub exit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub background_seed: u64,
    pub objects: Vec<SynthObject>,
}

fn palette(class: &str) -> Option<[u8; 3]> {
    Some(match class {
        "red" => [220, 40, 40],
        "yellow" => [220, 210, 40],
        "green" => [40, 190, 60],
        "cyan" => [40, 200, 210],
        "blue" => [50, 70, 220],
        "magenta" => [210, 50, 200],
        _ => return None,
    })
}

fn hash(seed: u64, a: i64, b: i64) -> u64 {
    // splitmix64 over the packed inputs
    let mut z = seed
        .wrapping_add((a as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((b as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform value in `[0, 1)` for a lattice point.
fn noise(seed: u64, a: i64, b: i64) -> f64 {
    (hash(seed, a, b) >> 11) as f64 / (1u64 << 53) as f64
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.frames < 2 {
            return bad(format!("{} frames; need at least 2", self.frames));
        }
        if self.width < 16 || self.height < 16 {
            return bad(format!(
                "frame size {}x{} is below 16x16",
                self.width, self.height
            ));
        }
        if self.objects.len() > MAX_OBJECTS {
            return bad(format!(
                "{} objects; at most {MAX_OBJECTS}",
                self.objects.len()
            ));
        }
        for (i, o) in self.objects.iter().enumerate() {
            if palette(&o.class).is_none() {
                return bad(format!(
                    "object {i}: unknown class `{}` (expected one of {HUE_CLASSES:?})",
                    o.class
                ));
            }
            if o.size[0] == 0 || o.size[1] == 0 {
                return bad(format!("object {i}: zero size"));
            }
            if o.enter >= self.frames {
                return bad(format!("object {i}: enters after the last frame"));
            }
            if o.exit.is_some_and(|e| e <= o.enter) {
                return bad(format!("object {i}: exits before it enters"));
            }
            if !o.start.iter().chain(&o.velocity).all(|v| v.is_finite()) {
                return bad(format!("object {i}: non-finite position or velocity"));
            }
            for t in o.enter..o.exit.unwrap_or(self.frames).min(self.frames) {
                if self.visible_box(o, t).is_none() {
                    return bad(format!("object {i}: fully outside the frame at frame {t}"));
                }
            }
        }
        Ok(())
    }

    fn present(&self, o: &SynthObject, t: usize) -> bool {
        t >= o.enter && o.exit.is_none_or(|e| t < e)
    }

    /// Unclipped top-left corner at frame `t`.
    fn corner(&self, o: &SynthObject, t: usize) -> (i64, i64) {
        let dt = t as f64 - o.enter as f64;
        (
            (o.start[0] + o.velocity[0] * dt).round() as i64,
            (o.start[1] + o.velocity[1] * dt).round() as i64,
        )
    }

    fn visible_box(&self, o: &SynthObject, t: usize) -> Option<BBox> {
        let (x, y) = self.corner(o, t);
        let x0 = x.max(0);
        let y0 = y.max(0);
        let x1 = (x + o.size[0] as i64).min(self.width as i64);
        let y1 = (y + o.size[1] as i64).min(self.height as i64);
        (x1 > x0 && y1 > y0).then(|| BBox {
            x: x0 as u32,
            y: y0 as u32,
            w: (x1 - x0) as u32,
            h: (y1 - y0) as u32,
        })
    }
}

/// A rendered synthetic video with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticVideo {
    pub frames: Vec<RgbImage>,
    /// Flow from frame `t` to `t + 1`.
    pub flows: Vec<FlowField>,
    pub truth: GroundTruth,
    /// `masks[t][i]`: visible pixels of object `i` in frame `t`.
    pub masks: Vec<Vec<Field2D>>,
}

/// Renders `spec`. Later objects are drawn over earlier ones.
pub fn render(spec: &SyntheticSpec) -> Result<SyntheticVideo> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let background = RgbImage::from_fn(w, h, |x, y| {
        let g = 110.0 + 24.0 * (noise(spec.background_seed, x as i64, y as i64) - 0.5);
        [g as u8; 3]
    });
    let mut frames = Vec::with_capacity(spec.frames);
    let mut owners = Vec::with_capacity(spec.frames);
    let mut truth = Vec::with_capacity(spec.frames);
    let mut masks = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let mut img = background.clone();
        let mut owner = vec![usize::MAX; w * h];
        let mut gt = Vec::new();
        for (i, o) in spec.objects.iter().enumerate() {
            if !spec.present(o, t) {
                continue;
            }
            let Some(vis) = spec.visible_box(o, t) else {
                continue;
            };
            let (cx, cy) = spec.corner(o, t);
            let base = palette(&o.class).expect("validated");
            let tex_seed = spec.background_seed ^ (0xA5A5_0000 + i as u64);
            for y in vis.y..vis.y2() {
                for x in vis.x..vis.x2() {
                    // texture moves with the object
                    let shade = 0.8 + 0.2 * noise(tex_seed, x as i64 - cx, y as i64 - cy);
                    img.set(
                        x as usize,
                        y as usize,
                        base.map(|c| (c as f64 * shade) as u8),
                    );
                    owner[y as usize * w + x as usize] = i;
                }
            }
            gt.push(GtObject {
                id: i,
                class: o.class.clone(),
                bbox: vis,
            });
        }
        masks.push(
            (0..spec.objects.len())
                .map(|i| Field2D::from_fn(w, h, |x, y| (owner[y * w + x] == i) as u8 as f32))
                .collect(),
        );
        frames.push(img);
        owners.push(owner);
        truth.push(GtFrame {
            frame: t,
            objects: gt,
        });
    }
    let flows = (0..spec.frames - 1)
        .map(|t| {
            FlowField::from_fn(w, h, |x, y| {
                let i = owners[t][y * w + x];
                if i == usize::MAX {
                    return [0.0, 0.0];
                }
                let o = &spec.objects[i];
                if !spec.present(o, t + 1) {
                    return [0.0, 0.0];
                }
                let (x0, y0) = spec.corner(o, t);
                let (x1, y1) = spec.corner(o, t + 1);
                [(x1 - x0) as f32, (y1 - y0) as f32]
            })
        })
        .collect();
    Ok(SyntheticVideo {
        frames,
        flows,
        truth: GroundTruth {
            width: w,
            height: h,
            frames: truth,
        },
        masks,
    })
}

/// File name of frame `t`.
pub fn frame_name(t: usize) -> String {
    format!("frame_{t:05}.ppm")
}

/// File name of the flow from frame `t` to `t + 1`.
pub fn flow_name(t: usize) -> String {
    format!("flow_{t:05}.flo")
}

impl SyntheticVideo {
    /// Writes `frames/`, `flow/`, `masks/` and `gt.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let sub = |name: &str| -> Result<std::path::PathBuf> {
            let p = dir.join(name);
            std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
            Ok(p)
        };
        let frames_dir = sub("frames")?;
        let flow_dir = sub("flow")?;
        let mask_dir = sub("masks")?;
        for (t, f) in self.frames.iter().enumerate() {
            write_ppm(&frames_dir.join(frame_name(t)), f)?;
        }
        for (t, f) in self.flows.iter().enumerate() {
            save_flow(&flow_dir.join(flow_name(t)), f)?;
        }
        for (t, frame_masks) in self.masks.iter().enumerate() {
            for obj in &self.truth.frames[t].objects {
                write_pgm(
                    &mask_dir.join(format!("mask_{t:05}_{}.pgm", obj.id)),
                    &frame_masks[obj.id],
                )?;
            }
        }
        let gt = dir.join("gt.json");
        let json = serde_json::to_string_pretty(&self.truth)?;
        std::fs::write(&gt, json).map_err(|e| Error::io(&gt, e))
    }
}

/// Parameters of [`moving_objects_suite`].
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOptions {
    pub videos: usize,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// Minimum gap in pixels between any two object boxes in every frame.
    pub margin: u32,
    /// When set, the third object of every other three-object video enters here.
    pub enter_frame: Option<usize>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            videos: 12,
            seed: 0,
            width: 192,
            height: 192,
            margin: 16,
            enter_frame: Some(5),
        }
    }
}

/// Seeded scenes of one to three translating rectangles (`1 + index % 3`
/// objects), 9, 12 or 15 frames long. Objects have distinct classes, sizes in
/// `36..52`, integer speeds of at most 3 px per axis, stay fully visible and
/// keep `margin` pixels apart. Video `i` uses background seed `i`.
pub fn moving_objects_suite(opts: &SuiteOptions) -> Result<Vec<SyntheticSpec>> {
    const SIZE: std::ops::Range<u32> = 36..52;
    let min_side = 2 * (SIZE.end as usize + opts.margin as usize) + 16;
    if opts.width < min_side || opts.height < min_side {
        return Err(Error::InvalidSpec(format!(
            "suite frames must be at least {min_side}x{min_side}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut out = Vec::with_capacity(opts.videos);
    while out.len() < opts.videos {
        let index = out.len();
        let nobj = 1 + index % 3;
        let frames = [9, 12, 15][rng.random_range(0..3)];
        let mut classes: Vec<&str> = HUE_CLASSES.to_vec();
        let mut objects = Vec::with_capacity(nobj);
        for i in 0..nobj {
            let class = classes.swap_remove(rng.random_range(0..classes.len()));
            let size = [rng.random_range(SIZE), rng.random_range(SIZE)];
            let hi = (opts.width.min(opts.height) as f64 - 52.0).max(9.0);
            let start = [
                rng.random_range(8.0..hi).round(),
                rng.random_range(8.0..hi).round(),
            ];
            let mut velocity = [
                rng.random_range(-3i32..=3) as f64,
                rng.random_range(-3i32..=3) as f64,
            ];
            if velocity[0].abs() + velocity[1].abs() < 2.0 {
                velocity[0] = 2.0;
            }
            let enter = match opts.enter_frame {
                Some(f) if i == 2 && index % 2 == 0 && f < frames => f,
                _ => 0,
            };
            objects.push(SynthObject {
                class: class.into(),
                size,
                start,
                velocity,
                enter,
                exit: None,
            });
        }
        let spec = SyntheticSpec {
            frames,
            width: opts.width,
            height: opts.height,
            background_seed: index as u64,
            objects,
        };
        if spec.validate().is_ok() && well_separated(&spec, opts.margin) {
            out.push(spec);
        }
    }
    Ok(out)
}

fn well_separated(spec: &SyntheticSpec, margin: u32) -> bool {
    (0..spec.frames).all(|t| {
        let boxes: Vec<BBox> = spec
            .objects
            .iter()
            .filter(|o| spec.present(o, t))
            .map(|o| match spec.visible_box(o, t) {
                Some(b) if [b.w, b.h] == o.size => Some(b),
                _ => None,
            })
            .collect::<Option<_>>()
            .unwrap_or_default();
        if boxes.len() != spec.objects.iter().filter(|o| spec.present(o, t)).count() {
            return false;
        }
        boxes.iter().enumerate().all(|(i, a)| {
            boxes[i + 1..].iter().all(|b| {
                let gap_x = (b.x as i64 - a.x2() as i64).max(a.x as i64 - b.x2() as i64);
                let gap_y = (b.y as i64 - a.y2() as i64).max(a.y as i64 - b.y2() as i64);
                gap_x.max(gap_y) >= margin as i64
            })
        })
    })
}

/// A copy of `gt` with each side scaled by a factor in `[1 - spread, 1 + spread]`
/// and the centre shifted by up to `spread` of the size, clipped to the frame.
pub fn jitter_box<R: Rng + ?Sized>(
    gt: &BBox,
    spread: f64,
    width: usize,
    height: usize,
    rng: &mut R,
) -> BBox {
    let mut axis = |lo: u32, len: u32, limit: usize| {
        let len = len as f64;
        let side = (len * rng.random_range(1.0 - spread..=1.0 + spread)).max(1.0);
        let centre = lo as f64 + len / 2.0 + len * rng.random_range(-spread..=spread);
        let a = (centre - side / 2.0).round().clamp(0.0, limit as f64 - 1.0);
        let b = (centre + side / 2.0).round().clamp(a + 1.0, limit as f64);
        (a as u32, (b - a) as u32)
    };
    let (x, w) = axis(gt.x, gt.w, width);
    let (y, h) = axis(gt.y, gt.h, height);
    BBox { x, y, w, h }
}
