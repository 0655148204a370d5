//! Dense row-major 2-D scalar fields and their integral images.

use crate::error::{Error, Result};
use crate::geom::BBox;

/// Row-major `height` x `width` field of `f32` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Field2D {
    pub fn zeros(width: usize, height: usize) -> Self {
        Field2D {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Field2D {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                actual: (data.len(), 1),
            });
        }
        Ok(Field2D {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Field2D {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Value at `(x, y)` with coordinates clamped to the field.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f32 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(0.0f32, f32::max)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Field2D {
        Field2D {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn ensure_same_dims(&self, other: &Field2D) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }

    /// Divides by the maximum so values land in `[0, 1]`; all-zero fields stay zero.
    pub fn normalized(mut self) -> Field2D {
        let m = self.max();
        if m > 0.0 {
            self.data.iter_mut().for_each(|v| *v /= m);
        }
        self
    }

    /// Count of non-zero entries.
    pub fn support(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0.0).count()
    }

    /// Central-difference gradient `(d/dx, d/dy)` with edge clamping.
    pub fn central_gradient(&self) -> (Field2D, Field2D) {
        let (w, h) = self.dims();
        let gx = Field2D::from_fn(w, h, |x, y| {
            let (x, y) = (x as isize, y as isize);
            (self.get_clamped(x + 1, y) - self.get_clamped(x - 1, y)) * 0.5
        });
        let gy = Field2D::from_fn(w, h, |x, y| {
            let (x, y) = (x as isize, y as isize);
            (self.get_clamped(x, y + 1) - self.get_clamped(x, y - 1)) * 0.5
        });
        (gx, gy)
    }

    /// Nearest-neighbour resampling to a new grid.
    pub fn resize_nearest(&self, width: usize, height: usize) -> Field2D {
        if (width, height) == self.dims() {
            return self.clone();
        }
        Field2D::from_fn(width, height, |x, y| {
            let ox = ((x as f64 + 0.5) * self.width as f64 / width as f64) as usize;
            let oy = ((y as f64 + 0.5) * self.height as f64 / height as f64) as usize;
            self.get(ox.min(self.width - 1), oy.min(self.height - 1))
        })
    }
}

/// Summed-area table with a zero first row and column.
#[derive(Debug, Clone)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    // (width + 1) x (height + 1), row-major
    table: Vec<f64>,
}

impl IntegralImage {
    pub fn new(field: &Field2D) -> Result<Self> {
        if field.is_empty() {
            return Err(Error::EmptyField);
        }
        let (w, h) = field.dims();
        let stride = w + 1;
        let mut table = vec![0.0f64; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0.0f64;
            for x in 0..w {
                row += field.get(x, y) as f64;
                table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row;
            }
        }
        Ok(IntegralImage {
            width: w,
            height: h,
            table,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Cumulative sum of the source over `[0, x) x [0, y)`.
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.table[y * (self.width + 1) + x]
    }

    /// Sum over the half-open rectangle `[x0, x1) x [y0, y1)`, no bounds checks
    /// beyond the table's own.
    #[inline]
    pub fn rect_sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        self.at(x1, y1) - self.at(x0, y1) - self.at(x1, y0) + self.at(x0, y0)
    }

    pub fn box_sum(&self, b: &BBox) -> Result<f64> {
        b.ensure_within(self.width, self.height)?;
        Ok(self.rect_sum(b.x as usize, b.y as usize, b.x2() as usize, b.y2() as usize))
    }

    pub fn total(&self) -> f64 {
        self.at(self.width, self.height)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(f: &Field2D, b: &BBox) -> f64 {
        let mut s = 0.0;
        for y in b.y..b.y2() {
            for x in b.x..b.x2() {
                s += f.get(x as usize, y as usize) as f64;
            }
        }
        s
    }

    #[test]
    fn empty_field_rejected() {
        assert!(matches!(
            IntegralImage::new(&Field2D::zeros(0, 0)),
            Err(Error::EmptyField)
        ));
    }

    #[test]
    fn trivial_sums() {
        let ii = IntegralImage::new(&Field2D::zeros(7, 5)).unwrap();
        assert_eq!(ii.total(), 0.0);
        let ii = IntegralImage::new(&Field2D::filled(2, 2, 1.0)).unwrap();
        assert_eq!(ii.box_sum(&BBox::new(0, 0, 2, 2).unwrap()).unwrap(), 4.0);

        let mut f = Field2D::zeros(4, 4);
        f.set(2, 1, 3.5);
        let ii = IntegralImage::new(&f).unwrap();
        assert_eq!(ii.box_sum(&BBox::new(2, 1, 1, 1).unwrap()).unwrap(), 3.5);
    }

    #[test]
    fn out_of_bounds_box() {
        let ii = IntegralImage::new(&Field2D::filled(8, 8, 1.0)).unwrap();
        assert!(ii.box_sum(&BBox::new(5, 5, 4, 1).unwrap()).is_err());
    }

    #[test]
    fn random_boxes_match_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = Field2D::from_fn(64, 64, |_, _| rng.random::<f32>());
        let ii = IntegralImage::new(&f).unwrap();
        assert!((ii.total() - f.sum()).abs() <= 1e-9 * f.sum());
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let x = rng.random_range(0..64u32);
            let y = rng.random_range(0..64u32);
            let w = rng.random_range(1..=64 - x);
            let h = rng.random_range(1..=64 - y);
            let b = BBox::new(x, y, w, h).unwrap();
            let want = brute(&f, &b);
            let got = ii.box_sum(&b).unwrap();
            assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0));
        }
    }

    proptest! {
        #[test]
        fn nested_boxes_monotone(seed in 0u64..500, x in 0u32..20, y in 0u32..20, w in 1u32..12, h in 1u32..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = Field2D::from_fn(32, 32, |_, _| rng.random::<f32>());
            let ii = IntegralImage::new(&f).unwrap();
            let inner = BBox::new(x + 1, y + 1, w, h).unwrap();
            let outer = BBox::new(x, y, w + 2, h + 2).unwrap();
            prop_assert!(ii.box_sum(&outer).unwrap() >= ii.box_sum(&inner).unwrap());
        }

        #[test]
        fn integral_is_linear(seed in 0u64..500, a in -3.0f32..3.0, b in -3.0f32..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = Field2D::from_fn(16, 12, |_, _| rng.random::<f32>());
            let g = Field2D::from_fn(16, 12, |_, _| rng.random::<f32>());
            let combo = Field2D::from_fn(16, 12, |x, y| a * f.get(x, y) + b * g.get(x, y));
            let (iif, iig, iic) = (
                IntegralImage::new(&f).unwrap(),
                IntegralImage::new(&g).unwrap(),
                IntegralImage::new(&combo).unwrap(),
            );
            for y in 0..=12 {
                for x in 0..=16 {
                    let want = a as f64 * iif.at(x, y) + b as f64 * iig.at(x, y);
                    prop_assert!((iic.at(x, y) - want).abs() <= 1e-4 * (1.0 + want.abs()));
                }
            }
        }
    }
}
