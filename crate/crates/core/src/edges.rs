//! Spatial edges, the spatio-temporal edge combination, and edge groups.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::field::Field2D;
use crate::geom::BBox;
use crate::image::RgbImage;

/// Non-negative edge magnitudes plus per-pixel gradient orientation.
///
/// Orientation is the direction of the intensity gradient (the edge normal),
/// folded into `[0, pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    pub magnitude: Field2D,
    pub orientation: Field2D,
}

impl EdgeMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        EdgeMap {
            magnitude: Field2D::zeros(width, height),
            orientation: Field2D::zeros(width, height),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.magnitude.dims()
    }

    /// Replaces magnitudes with an externally computed map, keeping orientation.
    pub fn with_magnitude(self, magnitude: Field2D) -> Result<EdgeMap> {
        self.magnitude.ensure_same_dims(&magnitude)?;
        Ok(EdgeMap {
            magnitude,
            orientation: self.orientation,
        })
    }
}

/// Folds an angle into `[0, pi)`.
pub fn fold_orientation(theta: f64) -> f64 {
    let t = theta.rem_euclid(PI);
    if t >= PI {
        0.0
    } else {
        t
    }
}

/// Undirected difference between two folded orientations, in `[0, pi/2]`.
pub fn orientation_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(PI);
    d.min(PI - d)
}

fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k.into_iter().map(|v| v as f32).collect()
}

/// Separable Gaussian blur with clamped borders.
pub fn gaussian_blur(f: &Field2D, sigma: f64) -> Field2D {
    if sigma <= 0.0 {
        return f.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = f.dims();
    let tmp = Field2D::from_fn(w, h, |x, y| {
        k.iter()
            .enumerate()
            .map(|(i, kv)| kv * f.get_clamped(x as isize + i as isize - r, y as isize))
            .sum()
    });
    Field2D::from_fn(w, h, |x, y| {
        k.iter()
            .enumerate()
            .map(|(i, kv)| kv * tmp.get_clamped(x as isize, y as isize + i as isize - r))
            .sum()
    })
}

/// Scharr 3x3 derivatives with clamped borders.
fn scharr(f: &Field2D) -> (Field2D, Field2D) {
    let (w, h) = f.dims();
    let at =
        |x: usize, y: usize, dx: isize, dy: isize| f.get_clamped(x as isize + dx, y as isize + dy);
    let gx = Field2D::from_fn(w, h, |x, y| {
        (3.0 * (at(x, y, 1, -1) - at(x, y, -1, -1))
            + 10.0 * (at(x, y, 1, 0) - at(x, y, -1, 0))
            + 3.0 * (at(x, y, 1, 1) - at(x, y, -1, 1)))
            / 32.0
    });
    let gy = Field2D::from_fn(w, h, |x, y| {
        (3.0 * (at(x, y, -1, 1) - at(x, y, -1, -1))
            + 10.0 * (at(x, y, 0, 1) - at(x, y, 0, -1))
            + 3.0 * (at(x, y, 1, 1) - at(x, y, 1, -1)))
            / 32.0
    });
    (gx, gy)
}

/// Default pre-smoothing for [`spatial_edge`].
pub const SPATIAL_SIGMA: f64 = 1.5;

/// Gradient-magnitude edges of an RGB frame.
///
/// Each channel is smoothed and differentiated; per pixel the channel with the
/// strongest gradient supplies magnitude and orientation. Magnitudes are
/// normalized by the frame maximum.
pub fn spatial_edge(frame: &RgbImage, sigma: f64) -> EdgeMap {
    let (w, h) = frame.dims();
    let grads: Vec<(Field2D, Field2D)> = (0..3)
        .map(|c| scharr(&gaussian_blur(&frame.channel(c), sigma)))
        .collect();
    let mut mag = Field2D::zeros(w, h);
    let mut ori = Field2D::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let (mut best, mut theta) = (0.0f32, 0.0f64);
            for (gx, gy) in &grads {
                let (a, b) = (gx.get(x, y), gy.get(x, y));
                let m = a.hypot(b);
                if m > best {
                    best = m;
                    theta = (b as f64).atan2(a as f64);
                }
            }
            mag.set(x, y, best);
            ori.set(x, y, fold_orientation(theta) as f32);
        }
    }
    EdgeMap {
        magnitude: mag.normalized(),
        orientation: ori,
    }
}

/// `E = lambda * Et + (1 - lambda) * Es`, pointwise.
///
/// Orientation follows whichever weighted term dominates at each pixel.
pub fn combine_edges(spatial: &EdgeMap, temporal: &EdgeMap, lambda: f64) -> Result<EdgeMap> {
    if !(0.0..=1.0).contains(&lambda) || lambda.is_nan() {
        return Err(Error::param(
            "lambda",
            format!("{lambda} is outside [0, 1]"),
        ));
    }
    spatial.magnitude.ensure_same_dims(&temporal.magnitude)?;
    spatial
        .orientation
        .ensure_same_dims(&temporal.orientation)?;
    let (w, h) = spatial.dims();
    let lt = lambda as f32;
    let ls = (1.0 - lambda) as f32;
    let mut mag = Field2D::zeros(w, h);
    let mut ori = Field2D::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let t = lt * temporal.magnitude.get(x, y);
            let s = ls * spatial.magnitude.get(x, y);
            mag.set(x, y, t + s);
            let o = if t > s {
                temporal.orientation.get(x, y)
            } else {
                spatial.orientation.get(x, y)
            };
            ori.set(x, y, o);
        }
    }
    Ok(EdgeMap {
        magnitude: mag,
        orientation: ori,
    })
}

/// Default threshold on `[0, 1]`-normalized magnitudes.
pub const DEFAULT_MAGNITUDE_THRESHOLD: f32 = 0.1;

/// A connected run of edge pixels with coherent orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeGroup {
    /// Member pixels `(x, y)`.
    pub pixels: Vec<(u32, u32)>,
    /// Sum of member magnitudes.
    pub magnitude: f64,
    /// Circular mean of member orientations in `[0, pi)`.
    pub orientation: f64,
    /// Mean member position `(x, y)`.
    pub centroid: (f64, f64),
    pub bbox: BBox,
}

#[derive(PartialEq)]
struct Frontier {
    cost: f64,
    index: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (cost, index)
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Groups supra-threshold pixels into orientation-coherent 8-connected groups.
///
/// Seeds are taken in raster order. A group grows greedily through its
/// 8-connected frontier, always taking the pixel whose orientation is closest
/// to the pixel it was reached from, and accumulating that difference. The
/// group closes once the next step would bring the accumulated orientation
/// change to `pi/2` or more; the remaining pixels seed later groups.
pub fn edge_groups(magnitude: &Field2D, orientation: &Field2D, threshold: f32) -> Vec<EdgeGroup> {
    let (w, h) = magnitude.dims();
    let on: Vec<bool> = magnitude.data().iter().map(|&v| v > threshold).collect();
    let mut assigned = vec![false; w * h];
    let mut groups = Vec::new();
    let ori = |i: usize| orientation.data()[i] as f64;

    for seed in 0..w * h {
        if !on[seed] || assigned[seed] {
            continue;
        }
        assigned[seed] = true;
        let mut members = vec![seed];
        let mut accumulated = 0.0f64;
        let mut heap = BinaryHeap::new();
        let push_neighbours = |i: usize, heap: &mut BinaryHeap<Frontier>, assigned: &[bool]| {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if on[j] && !assigned[j] {
                        heap.push(Frontier {
                            cost: orientation_diff(ori(i), ori(j)),
                            index: j,
                        });
                    }
                }
            }
        };
        push_neighbours(seed, &mut heap, &assigned);
        while let Some(Frontier { cost, index }) = heap.pop() {
            if assigned[index] {
                continue;
            }
            // orientations are stored in f32, so allow for their rounding
            if accumulated + cost >= FRAC_PI_2 - 1e-6 {
                break;
            }
            accumulated += cost;
            assigned[index] = true;
            members.push(index);
            push_neighbours(index, &mut heap, &assigned);
        }
        groups.push(make_group(&members, w, magnitude, orientation));
    }
    groups
}

fn make_group(
    members: &[usize],
    w: usize,
    magnitude: &Field2D,
    orientation: &Field2D,
) -> EdgeGroup {
    let mut pixels = Vec::with_capacity(members.len());
    let (mut mag, mut sx, mut sy, mut c2, mut s2) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0u32, 0u32);
    for &i in members {
        let (x, y) = ((i % w) as u32, (i / w) as u32);
        pixels.push((x, y));
        let m = magnitude.data()[i] as f64;
        mag += m;
        sx += x as f64;
        sy += y as f64;
        let t = 2.0 * orientation.data()[i] as f64;
        c2 += t.cos();
        s2 += t.sin();
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let n = members.len() as f64;
    EdgeGroup {
        pixels,
        magnitude: mag,
        orientation: fold_orientation(s2.atan2(c2) / 2.0),
        centroid: (sx / n, sy / n),
        bbox: BBox {
            x: x0,
            y: y0,
            w: x1 - x0 + 1,
            h: y1 - y0 + 1,
        },
    }
}
