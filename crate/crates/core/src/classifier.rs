//! Built-in colour-rule classifier used as a ground-truth oracle on synthetic video.

use crate::error::Result;
use crate::geom::BBox;
use crate::image::RgbImage;
use crate::propagation::{Classifier, FrameRef};

/// Hue classes in score order after background.
pub const HUE_CLASSES: [&str; 6] = ["red", "yellow", "green", "cyan", "blue", "magenta"];

const MIN_SATURATION: f64 = 0.4;
const MIN_VALUE: f64 = 0.2;

/// Hue in degrees, saturation and value of an RGB pixel.
pub fn hsv(p: [u8; 3]) -> (f64, f64, f64) {
    let [r, g, b] = p.map(|c| c as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    (h, s, max)
}

/// Class index for a pixel: 0 for unsaturated or dark pixels, else the
/// nearest of the six 60-degree hue sectors plus one.
pub fn pixel_class(p: [u8; 3]) -> usize {
    let (h, s, v) = hsv(p);
    if s < MIN_SATURATION || v < MIN_VALUE {
        return 0;
    }
    1 + (((h + 30.0) / 60.0).floor() as usize % 6)
}

/// Scores each box by the fraction of its pixels falling in each class.
#[derive(Debug, Clone)]
pub struct OracleClassifier {
    classes: Vec<String>,
}

impl Default for OracleClassifier {
    fn default() -> Self {
        let mut classes = vec!["background".to_string()];
        classes.extend(HUE_CLASSES.iter().map(|s| s.to_string()));
        OracleClassifier { classes }
    }
}

impl OracleClassifier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn score_box(&self, image: &RgbImage, b: &BBox) -> Vec<f64> {
        let mut counts = vec![0usize; self.classes.len()];
        for y in b.y as usize..(b.y2() as usize).min(image.height()) {
            for x in b.x as usize..(b.x2() as usize).min(image.width()) {
                counts[pixel_class(image.get(x, y))] += 1;
            }
        }
        let total = counts.iter().sum::<usize>().max(1) as f64;
        counts.into_iter().map(|c| c as f64 / total).collect()
    }
}

impl Classifier for OracleClassifier {
    fn classes(&self) -> &[String] {
        &self.classes
    }

    fn classify(&mut self, frame: FrameRef<'_>, boxes: &[BBox]) -> Result<Vec<Vec<f64>>> {
        Ok(boxes
            .iter()
            .map(|b| self.score_box(frame.image, b))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_classes() {
        assert_eq!(pixel_class([255, 0, 0]), 1);
        assert_eq!(pixel_class([250, 240, 10]), 2);
        assert_eq!(pixel_class([0, 200, 0]), 3);
        assert_eq!(pixel_class([0, 200, 200]), 4);
        assert_eq!(pixel_class([10, 10, 220]), 5);
        assert_eq!(pixel_class([220, 0, 220]), 6);
        assert_eq!(pixel_class([120, 120, 120]), 0);
        assert_eq!(pixel_class([20, 0, 0]), 0);
        assert_eq!(pixel_class([255, 0, 40]), 1);
    }

    #[test]
    fn scores_are_fractions() {
        let img = RgbImage::from_fn(20, 10, |x, _| {
            if x < 10 {
                [230, 20, 20]
            } else {
                [100, 100, 100]
            }
        });
        let mut c = OracleClassifier::new();
        let frame = FrameRef {
            index: 0,
            image: &img,
            path: None,
            original_dims: (20, 10),
        };
        let s = c
            .classify(frame, &[BBox::new(0, 0, 20, 10).unwrap()])
            .unwrap();
        assert_eq!(s[0].len(), 7);
        assert_eq!(s[0][0], 0.5);
        assert_eq!(s[0][1], 0.5);
        assert!((s[0].iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
