//! Axis-aligned boxes in integer pixel coordinates.
//!
//! Scoring works on integer boxes; Gaussian fitting and feature extraction
//! work on the real-valued `(center_x, center_y, h, w)` quadruple produced by
//! [`BBox::quad`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(center_x, center_y, height, width)` in pixels.
pub type Quad = [f64; 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Result<Self> {
        if w == 0 || h == 0 {
            return Err(Error::InvalidBox(format!("zero-area box {w}x{h}")));
        }
        Ok(BBox { x, y, w, h })
    }

    /// Exclusive right edge.
    #[inline]
    pub fn x2(&self) -> u32 {
        self.x + self.w
    }

    /// Exclusive bottom edge.
    #[inline]
    pub fn y2(&self) -> u32 {
        self.y + self.h
    }

    #[inline]
    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.x2() as usize <= width && self.y2() as usize <= height
    }

    pub fn ensure_within(&self, width: usize, height: usize) -> Result<()> {
        if self.fits(width, height) {
            Ok(())
        } else {
            Err(Error::OutOfBounds {
                bbox: (self.x, self.y, self.w, self.h),
                width,
                height,
            })
        }
    }

    pub fn intersection_area(&self, other: &BBox) -> u64 {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.x2().min(other.x2());
        let y1 = self.y2().min(other.y2());
        if x1 <= x0 || y1 <= y0 {
            0
        } else {
            (x1 - x0) as u64 * (y1 - y0) as u64
        }
    }

    pub fn contains_point(&self, px: u32, py: u32) -> bool {
        px >= self.x && px < self.x2() && py >= self.y && py < self.y2()
    }

    pub fn contains(&self, other: &BBox) -> bool {
        other.x >= self.x && other.y >= self.y && other.x2() <= self.x2() && other.y2() <= self.y2()
    }

    pub fn quad(&self) -> Quad {
        [
            self.x as f64 + self.w as f64 / 2.0,
            self.y as f64 + self.h as f64 / 2.0,
            self.h as f64,
            self.w as f64,
        ]
    }

    /// Builds the box closest to `q`, clamped to a `width` x `height` frame.
    ///
    /// Returns the box and whether clamping changed it. Width and height are
    /// floored at one pixel.
    pub fn from_quad_clamped(q: Quad, width: usize, height: usize) -> (BBox, bool) {
        let (cx, cy, h, w) = (q[0], q[1], q[2], q[3]);
        let x0 = (cx - w / 2.0).round();
        let y0 = (cy - h / 2.0).round();
        let x1 = x0 + w.round().max(1.0);
        let y1 = y0 + h.round().max(1.0);
        let (fw, fh) = (width as f64, height as f64);

        let cx0 = x0.clamp(0.0, fw - 1.0);
        let cy0 = y0.clamp(0.0, fh - 1.0);
        let cx1 = x1.clamp(cx0 + 1.0, fw);
        let cy1 = y1.clamp(cy0 + 1.0, fh);
        let clamped =
            cx0 != x0 || cy0 != y0 || cx1 != x1 || cy1 != y1 || !q.iter().all(|v| v.is_finite());
        let b = BBox {
            x: cx0 as u32,
            y: cy0 as u32,
            w: (cx1 - cx0) as u32,
            h: (cy1 - cy0) as u32,
        };
        (b, clamped)
    }

    /// Scales a box between coordinate systems of different frame sizes.
    pub fn rescale(&self, sx: f64, sy: f64) -> BBox {
        let x = (self.x as f64 * sx).round() as u32;
        let y = (self.y as f64 * sy).round() as u32;
        let x2 = ((self.x2() as f64 * sx).round() as u32).max(x + 1);
        let y2 = ((self.y2() as f64 * sy).round() as u32).max(y + 1);
        BBox {
            x,
            y,
            w: x2 - x,
            h: y2 - y,
        }
    }
}

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x: u32, y: u32, w: u32, h: u32) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = b(3, 4, 17, 9);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&b(0, 0, 10, 10), &b(20, 20, 5, 5)), 0.0);
        assert_eq!(iou(&b(0, 0, 10, 10), &b(0, 0, 5, 10)), 0.5);
    }

    #[test]
    fn zero_area_rejected() {
        assert!(BBox::new(0, 0, 0, 4).is_err());
        assert!(BBox::new(0, 0, 4, 0).is_err());
    }

    #[test]
    fn quad_round_trip() {
        let a = b(10, 20, 30, 14);
        let (back, clamped) = BBox::from_quad_clamped(a.quad(), 100, 100);
        assert_eq!(back, a);
        assert!(!clamped);
    }

    #[test]
    fn quad_clamps_to_frame() {
        let (bx, clamped) = BBox::from_quad_clamped([95.0, 5.0, 20.0, 20.0], 100, 50);
        assert!(clamped);
        assert!(bx.fits(100, 50));
        assert_eq!(bx, b(85, 0, 15, 15));
        let (tiny, _) = BBox::from_quad_clamped([10.0, 10.0, 0.1, 0.2], 100, 50);
        assert_eq!((tiny.w, tiny.h), (1, 1));
    }

    proptest! {
        #[test]
        fn iou_symmetric_bounded(
            ax in 0u32..100, ay in 0u32..100, aw in 1u32..60, ah in 1u32..60,
            bx in 0u32..100, by in 0u32..100, bw in 1u32..60, bh in 1u32..60,
        ) {
            let a = b(ax, ay, aw, ah);
            let c = b(bx, by, bw, bh);
            let v = iou(&a, &c);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, iou(&c, &a));
            prop_assert_eq!(iou(&a, &a), 1.0);
        }
    }
}
