//! Temporal edges from optical flow.
//!
//! Flow between consecutive frames yields a motion-boundary map. Ray-parity
//! against the thresholded boundaries marks the pixels inside moving objects;
//! averaging those masks over a short sub-sequence gives a location prior, and
//! the normalized gradient of that prior is the temporal edge map.

use std::path::Path;

use crate::edges::{fold_orientation, EdgeMap};
use crate::error::{Error, Result};
use crate::field::{Field2D, IntegralImage};
use crate::image::RgbImage;
use crate::par::{self, Execution};

/// Magic float at the start of every `.flo` file.
pub const FLO_MAGIC: f32 = 202021.25;

/// Flow vectors below this magnitude (pixels) carry no direction.
const MIN_DIRECTIONAL_FLOW: f32 = 0.05;

/// Dense forward flow: pixel `p` in frame `t` moves to `p + (ux, uy)` in `t+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    data: Vec<[f32; 2]>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            data: vec![[0.0; 2]; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<[f32; 2]>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                actual: (data.len(), 1),
            });
        }
        Ok(FlowField {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f32; 2]) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        FlowField {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 2] {
        self.data[y * self.width + x]
    }

    #[inline]
    fn get_clamped(&self, x: isize, y: isize) -> [f32; 2] {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    pub fn vectors(&self) -> &[[f32; 2]] {
        &self.data
    }

    pub fn mean(&self) -> [f64; 2] {
        let n = self.data.len().max(1) as f64;
        let (sx, sy) = self
            .data
            .iter()
            .fold((0.0, 0.0), |(a, b), v| (a + v[0] as f64, b + v[1] as f64));
        [sx / n, sy / n]
    }

    /// Nearest-neighbour resampling to a new grid; vectors are rescaled with the grid.
    pub fn resize_nearest(&self, width: usize, height: usize) -> FlowField {
        if (width, height) == self.dims() {
            return self.clone();
        }
        let sx = width as f32 / self.width as f32;
        let sy = height as f32 / self.height as f32;
        FlowField::from_fn(width, height, |x, y| {
            let ox = ((x as f64 + 0.5) * self.width as f64 / width as f64) as usize;
            let oy = ((y as f64 + 0.5) * self.height as f64 / height as f64) as usize;
            let v = self.get(ox.min(self.width - 1), oy.min(self.height - 1));
            [v[0] * sx, v[1] * sy]
        })
    }
}

/// Serializes to the Middlebury `.flo` layout (little-endian).
pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + flow.data.len() * 8);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(flow.width as i32).to_le_bytes());
    out.extend_from_slice(&(flow.height as i32).to_le_bytes());
    for v in &flow.data {
        out.extend_from_slice(&v[0].to_le_bytes());
        out.extend_from_slice(&v[1].to_le_bytes());
    }
    out
}

pub fn decode_flo(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < 12 {
        return Err(Error::Truncated {
            expected: 12,
            found: bytes.len(),
        });
    }
    let word = |i: usize| [bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]];
    let magic = f32::from_le_bytes(word(0));
    if magic != FLO_MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let w = i32::from_le_bytes(word(4));
    let h = i32::from_le_bytes(word(8));
    if w <= 0 || h <= 0 {
        return Err(Error::MalformedImage(format!("flow dimensions {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let need = 12 + w * h * 8;
    if bytes.len() < need {
        return Err(Error::Truncated {
            expected: need,
            found: bytes.len(),
        });
    }
    let data = bytes[12..need]
        .chunks_exact(8)
        .map(|c| {
            [
                f32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                f32::from_le_bytes([c[4], c[5], c[6], c[7]]),
            ]
        })
        .collect();
    FlowField::from_vec(w, h, data)
}

/// Reads a `.flo` file, optionally checking it against the frame size.
pub fn load_flow(path: &Path, expect: Option<(usize, usize)>) -> Result<FlowField> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let flow = decode_flo(&bytes)?;
    if let Some(dims) = expect {
        if flow.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: flow.dims(),
            });
        }
    }
    Ok(flow)
}

pub fn save_flow(path: &Path, flow: &FlowField) -> Result<()> {
    std::fs::write(path, encode_flo(flow)).map_err(|e| Error::io(path, e))
}

/// Candidate displacements ordered by the tie-break rule: smallest magnitude
/// first, then lexicographic `(ux, uy)`.
fn candidate_displacements(radius: i32) -> Vec<(i32, i32)> {
    let mut c: Vec<(i32, i32)> = (-radius..=radius)
        .flat_map(|dx| (-radius..=radius).map(move |dy| (dx, dy)))
        .collect();
    c.sort_by_key(|&(dx, dy)| (dx * dx + dy * dy, dx, dy));
    c
}

/// Integer-displacement flow minimizing the sum of absolute luma differences
/// over a `block` x `block` window, searched within `search_radius`.
pub fn block_matching_flow(
    f1: &RgbImage,
    f2: &RgbImage,
    search_radius: u32,
    block: u32,
    exec: Execution,
) -> Result<FlowField> {
    if f1.dims() != f2.dims() {
        return Err(Error::DimensionMismatch {
            expected: f1.dims(),
            actual: f2.dims(),
        });
    }
    if block == 0 {
        return Err(Error::param("block", "must be at least 1 pixel"));
    }
    let (w, h) = f1.dims();
    let (l1, l2) = (f1.luma(), f2.luma());
    let half = (block / 2) as usize;

    let n = w * h;
    let mut best_cost = vec![f64::INFINITY; n];
    let mut best_disp = vec![[0.0f32; 2]; n];

    for (dx, dy) in candidate_displacements(search_radius as i32) {
        let diff = Field2D::from_fn(w, h, |x, y| {
            (l1.get(x, y) - l2.get_clamped(x as isize + dx as isize, y as isize + dy as isize))
                .abs()
        });
        let ii = IntegralImage::new(&diff)?;
        // rows are independent; best_* are updated in row chunks
        let mut rows: Vec<(&mut [f64], &mut [[f32; 2]])> = best_cost
            .chunks_mut(w)
            .zip(best_disp.chunks_mut(w))
            .collect();
        par::for_each_chunk_mut(exec, &mut rows, 1, |y, chunk| {
            let (costs, disps) = &mut chunk[0];
            let y0 = y.saturating_sub(half);
            let y1 = (y + half + 1).min(h);
            for x in 0..w {
                let x0 = x.saturating_sub(half);
                let x1 = (x + half + 1).min(w);
                let c = ii.rect_sum(x0, y0, x1, y1);
                if c < costs[x] - 1e-9 {
                    costs[x] = c;
                    disps[x] = [dx as f32, dy as f32];
                }
            }
        });
    }
    FlowField::from_vec(w, h, best_disp)
}

/// Weights and threshold for motion boundaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryParams {
    /// Weight of the flow-Jacobian Frobenius norm.
    pub alpha_magnitude: f64,
    /// Weight of the maximum angular difference to 4-neighbours (radians).
    pub alpha_direction: f64,
    /// Threshold applied before inside-outside ray casting.
    pub threshold: f32,
}

impl Default for BoundaryParams {
    fn default() -> Self {
        BoundaryParams {
            alpha_magnitude: 1.0,
            alpha_direction: 0.5,
            threshold: 0.5,
        }
    }
}

fn angle_between(a: [f32; 2], b: [f32; 2]) -> f64 {
    let na = (a[0] * a[0] + a[1] * a[1]).sqrt();
    let nb = (b[0] * b[0] + b[1] * b[1]).sqrt();
    if na < MIN_DIRECTIONAL_FLOW || nb < MIN_DIRECTIONAL_FLOW {
        return 0.0;
    }
    let (ax, ay, bx, by) = (a[0] as f64, a[1] as f64, b[0] as f64, b[1] as f64);
    (ax * by - ay * bx).abs().atan2(ax * bx + ay * by)
}

/// Motion-boundary strength `1 - exp(-(a_m |J_u| + a_d dtheta))` in `[0, 1)`.
pub fn motion_boundary(flow: &FlowField, params: &BoundaryParams) -> Field2D {
    let (w, h) = flow.dims();
    Field2D::from_fn(w, h, |x, y| {
        let (xi, yi) = (x as isize, y as isize);
        let l = flow.get_clamped(xi - 1, yi);
        let r = flow.get_clamped(xi + 1, yi);
        let u = flow.get_clamped(xi, yi - 1);
        let d = flow.get_clamped(xi, yi + 1);
        let jac = [
            (r[0] - l[0]) * 0.5,
            (d[0] - u[0]) * 0.5,
            (r[1] - l[1]) * 0.5,
            (d[1] - u[1]) * 0.5,
        ];
        let frob = jac.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
        let c = flow.get(x, y);
        let mut dtheta = 0.0f64;
        for (nx, ny) in [(xi - 1, yi), (xi + 1, yi), (xi, yi - 1), (xi, yi + 1)] {
            if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                continue;
            }
            dtheta = dtheta.max(angle_between(c, flow.get(nx as usize, ny as usize)));
        }
        let e = params.alpha_magnitude * frob + params.alpha_direction * dtheta;
        (1.0 - (-e).exp()) as f32
    })
}

const RAYS: [(isize, isize); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (-1, -1),
    (1, -1),
    (-1, 1),
];

/// Marks pixels inside closed motion boundaries (1.0) by majority ray parity.
///
/// Each of the 8 rays from a pixel counts entries into the thresholded
/// boundary (a thick boundary run counts once); the pixel is inside when at
/// least 5 rays see an odd count. A frame that is boundary everywhere has no
/// entries and comes out all-outside.
pub fn inside_outside_map(boundary: &Field2D, threshold: f32) -> Field2D {
    let (w, h) = boundary.dims();
    let on: Vec<bool> = boundary.data().iter().map(|&v| v >= threshold).collect();
    let mut votes = vec![0u8; w * h];
    let mut parity = vec![0u8; w * h];
    for &(dx, dy) in &RAYS {
        // parity(p) = [!on(p) && on(p+d)] ^ parity(p+d), so visit p+d first
        let xs: Vec<usize> = if dx > 0 {
            (0..w).rev().collect()
        } else {
            (0..w).collect()
        };
        let ys: Vec<usize> = if dy > 0 {
            (0..h).rev().collect()
        } else {
            (0..h).collect()
        };
        for &y in &ys {
            for &x in &xs {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                let i = y * w + x;
                parity[i] = if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    0
                } else {
                    let j = ny as usize * w + nx as usize;
                    (u8::from(!on[i] && on[j])) ^ parity[j]
                };
            }
        }
        votes.iter_mut().zip(&parity).for_each(|(v, p)| *v += p);
    }
    Field2D::from_vec(
        w,
        h,
        votes
            .iter()
            .map(|&v| if v >= 5 { 1.0 } else { 0.0 })
            .collect(),
    )
    .expect("dimensions are consistent")
}

/// Mean of the inside-outside masks of one sub-sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationPrior {
    pub field: Field2D,
    /// First frame of the sub-sequence the prior was accumulated over.
    pub frame_index: usize,
    /// Number of masks accumulated.
    pub length: usize,
}

pub fn accumulate_prior(masks: &[Field2D], frame_index: usize) -> Result<LocationPrior> {
    let first = masks
        .first()
        .ok_or_else(|| Error::param("masks", "at least one mask is required"))?;
    let mut acc = vec![0.0f64; first.data().len()];
    for m in masks {
        first.ensure_same_dims(m)?;
        acc.iter_mut()
            .zip(m.data())
            .for_each(|(a, &v)| *a += v as f64);
    }
    let n = masks.len() as f64;
    let field = Field2D::from_vec(
        first.width(),
        first.height(),
        acc.into_iter().map(|v| (v / n) as f32).collect(),
    )?;
    Ok(LocationPrior {
        field,
        frame_index,
        length: masks.len(),
    })
}

/// Normalized gradient magnitude of the prior, with gradient orientation.
pub fn temporal_edge(prior: &LocationPrior) -> EdgeMap {
    let (gx, gy) = prior.field.central_gradient();
    let (w, h) = prior.field.dims();
    let magnitude = Field2D::from_fn(w, h, |x, y| gx.get(x, y).hypot(gy.get(x, y))).normalized();
    let orientation = Field2D::from_fn(w, h, |x, y| {
        fold_orientation((gy.get(x, y) as f64).atan2(gx.get(x, y) as f64)) as f32
    });
    EdgeMap {
        magnitude,
        orientation,
    }
}
