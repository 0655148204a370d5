//! Foreground location priors from a cluster's boxes and thresholded masks.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::field::Field2D;
use crate::geom::BBox;

/// Fraction of the boxes covering each pixel.
pub fn foreground_prior(boxes: &[BBox], width: usize, height: usize) -> Result<Field2D> {
    if boxes.is_empty() {
        return Err(Error::param("boxes", "a prior needs at least one box"));
    }
    // 2-D difference array, integrated afterwards
    let mut diff = vec![0i64; (width + 1) * (height + 1)];
    for b in boxes {
        b.ensure_within(width, height)?;
        let (x0, y0, x1, y1) = (b.x as usize, b.y as usize, b.x2() as usize, b.y2() as usize);
        diff[y0 * (width + 1) + x0] += 1;
        diff[y0 * (width + 1) + x1] -= 1;
        diff[y1 * (width + 1) + x0] -= 1;
        diff[y1 * (width + 1) + x1] += 1;
    }
    for y in 0..=height {
        for x in 1..=width {
            diff[y * (width + 1) + x] += diff[y * (width + 1) + x - 1];
        }
    }
    for y in 1..=height {
        for x in 0..=width {
            diff[y * (width + 1) + x] += diff[(y - 1) * (width + 1) + x];
        }
    }
    let n = boxes.len() as f64;
    Ok(Field2D::from_fn(width, height, |x, y| {
        (diff[y * (width + 1) + x] as f64 / n) as f32
    }))
}

/// `prior >= threshold` as a 0/1 mask, optionally reduced to its largest
/// 4-connected component (ties go to the component found first in raster order).
pub fn prior_mask(prior: &Field2D, threshold: f32, largest_component: bool) -> Result<Field2D> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::param(
            "threshold",
            format!("{threshold} is outside (0, 1)"),
        ));
    }
    let mask = prior.map(|v| if v >= threshold { 1.0 } else { 0.0 });
    if !largest_component {
        return Ok(mask);
    }
    Ok(keep_largest_component(&mask))
}

/// 4-connected components of the non-zero pixels: a per-pixel component index
/// (`usize::MAX` for background) and each component's size, numbered in
/// raster order of their first pixel.
pub fn connected_components(mask: &Field2D) -> (Vec<usize>, Vec<usize>) {
    let (w, h) = mask.dims();
    let mut comp = vec![usize::MAX; w * h];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if mask.data()[start] == 0.0 || comp[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut size = 0;
        comp[start] = id;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if mask.data()[j] != 0.0 && comp[j] == usize::MAX {
                    comp[j] = id;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        sizes.push(size);
    }
    (comp, sizes)
}

fn keep_largest_component(mask: &Field2D) -> Field2D {
    let (w, h) = mask.dims();
    let (comp, sizes) = connected_components(mask);
    let Some(best) = (0..sizes.len()).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)))
    else {
        return mask.clone();
    };
    Field2D::from_fn(w, h, |x, y| (comp[y * w + x] == best) as u8 as f32)
}

/// Intersection over union of two binary masks (non-zero = foreground).
pub fn mask_iou(a: &Field2D, b: &Field2D) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &q) in a.data().iter().zip(b.data()) {
        let (p, q) = (p != 0.0, q != 0.0);
        inter += (p && q) as usize;
        union += (p || q) as usize;
    }
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x: u32, y: u32, w: u32, h: u32) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn single_and_duplicate_boxes() {
        let one = foreground_prior(&[b(2, 3, 4, 5)], 10, 10).unwrap();
        assert_eq!(one.get(2, 3), 1.0);
        assert_eq!(one.get(5, 7), 1.0);
        assert_eq!(one.get(6, 7), 0.0);
        assert_eq!(one.sum(), 20.0);
        let two = foreground_prior(&[b(2, 3, 4, 5), b(2, 3, 4, 5)], 10, 10).unwrap();
        assert_eq!(one, two);
        assert!(foreground_prior(&[], 10, 10).is_err());
    }

    #[test]
    fn half_overlap() {
        let p = foreground_prior(&[b(0, 0, 4, 2), b(2, 0, 4, 2)], 8, 2).unwrap();
        assert_eq!(p.get(0, 0), 0.5);
        assert_eq!(p.get(2, 1), 1.0);
        assert_eq!(p.get(5, 0), 0.5);
        assert_eq!(p.get(7, 0), 0.0);
        let m = prior_mask(&p, 0.5, false).unwrap();
        assert_eq!(m.sum(), 12.0);
        let m = prior_mask(&p, 0.75, true).unwrap();
        assert_eq!(m.sum(), 4.0);
        assert_eq!(m.get(2, 0), 1.0);
        assert_eq!(
            prior_mask(&Field2D::zeros(5, 5), 0.5, true).unwrap().sum(),
            0.0
        );
        assert!(prior_mask(&p, 1.0, true).is_err());
    }

    #[test]
    fn largest_component_kept() {
        let p = foreground_prior(&[b(0, 0, 2, 2), b(5, 5, 4, 4)], 10, 10).unwrap();
        let m = prior_mask(&p, 0.5, true).unwrap();
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.sum(), 16.0);
        assert_eq!(mask_iou(&m, &m).unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn mask_shrinks_with_threshold(boxes in proptest::collection::vec((0u32..20, 0u32..20, 1u32..12, 1u32..12), 1..8), t1 in 0.05f32..0.95, dt in 0.0f32..0.5) {
            let boxes: Vec<BBox> = boxes.into_iter().map(|(x, y, w, h)| b(x, y, w, h)).collect();
            let p = foreground_prior(&boxes, 32, 32).unwrap();
            prop_assert!(p.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            let t2 = (t1 + dt).min(0.99);
            let lo = prior_mask(&p, t1, false).unwrap();
            let hi = prior_mask(&p, t2, false).unwrap();
            for (a, c) in lo.data().iter().zip(hi.data()) {
                prop_assert!(c <= a);
            }
            let doubled: Vec<BBox> = boxes.iter().chain(boxes.iter()).copied().collect();
            prop_assert_eq!(foreground_prior(&doubled, 32, 32).unwrap(), p);
        }
    }
}
