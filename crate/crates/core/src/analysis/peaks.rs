use super::SampledImage;
use crate::error::{LatticeError, Result};

/// Pixel-level local maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakCandidate {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakDetection {
    /// Threshold as a fraction of the image's dynamic range above its minimum.
    pub min_prominence: f64,
    /// Non-maximum suppression radius in meters.
    pub suppression_radius: Option<f64>,
}

impl Default for PeakDetection {
    fn default() -> Self {
        Self {
            min_prominence: 0.5,
            suppression_radius: None,
        }
    }
}

/// Finds 8-connected local maxima above `min + min_prominence·(max − min)`.
/// Plateaus yield a single candidate (the first pixel in raster order). With a
/// suppression radius, weaker candidates within that distance of a stronger
/// one are dropped. Output is sorted by (row, col).
pub fn detect_peaks(image: &SampledImage, detection: &PeakDetection) -> Result<Vec<PeakCandidate>> {
    let v = &image.values;
    let (h, w) = v.dim();
    if h < 3 || w < 3 {
        return Err(LatticeError::ImageTooSmall(format!(
            "{w}x{h} is too small for peak detection"
        )));
    }
    let (min, max) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    });
    if !(max > min) || (max - min) <= 1e-12 * max.abs().max(min.abs()) {
        return Err(LatticeError::NoPeaks("image is constant".into()));
    }
    let threshold = min + detection.min_prominence * (max - min);

    let mut found = Vec::new();
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let x = v[[r, c]];
            if x < threshold {
                continue;
            }
            let mut is_max = true;
            'nb: for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let nb = v[[(r as i64 + dr) as usize, (c as i64 + dc) as usize]];
                    let earlier = dr < 0 || (dr == 0 && dc < 0);
                    if nb > x || (earlier && nb == x) {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                found.push(PeakCandidate {
                    row: r,
                    col: c,
                    value: x,
                });
            }
        }
    }

    if let Some(radius) = detection.suppression_radius {
        found = suppress(found, radius / image.pitch);
    }
    if found.is_empty() {
        return Err(LatticeError::NoPeaks(format!(
            "no local maxima above {:.0}% prominence",
            detection.min_prominence * 100.0
        )));
    }
    found.sort_by_key(|p| (p.row, p.col));
    Ok(found)
}

fn suppress(mut candidates: Vec<PeakCandidate>, radius_px: f64) -> Vec<PeakCandidate> {
    candidates.sort_by(|a, b| b.value.total_cmp(&a.value).then((a.row, a.col).cmp(&(b.row, b.col))));
    let r2 = radius_px * radius_px;
    let cell = radius_px.max(1.0);
    let mut buckets: std::collections::HashMap<(i64, i64), Vec<usize>> = Default::default();
    let mut kept: Vec<PeakCandidate> = Vec::new();
    for p in candidates {
        let key = ((p.col as f64 / cell) as i64, (p.row as f64 / cell) as i64);
        let mut blocked = false;
        'search: for dy in -1..=1 {
            for dx in -1..=1 {
                if let Some(idx) = buckets.get(&(key.0 + dx, key.1 + dy)) {
                    for &i in idx {
                        let q = &kept[i];
                        let ddx = p.col as f64 - q.col as f64;
                        let ddy = p.row as f64 - q.row as f64;
                        if ddx * ddx + ddy * ddy < r2 {
                            blocked = true;
                            break 'search;
                        }
                    }
                }
            }
        }
        if !blocked {
            buckets.entry(key).or_default().push(kept.len());
            kept.push(p);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn blob(size: usize, cx: f64, cy: f64, sigma: f64) -> SampledImage {
        let v = Array2::from_shape_fn((size, size), |(r, c)| {
            let dx = c as f64 - cx;
            let dy = r as f64 - cy;
            (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
        });
        SampledImage::new(v, 1.0, (0.0, 0.0)).unwrap()
    }

    #[test]
    fn single_blob_gives_one_candidate() {
        let img = blob(41, 20.3, 19.6, 3.0);
        let peaks = detect_peaks(&img, &PeakDetection::default()).unwrap();
        assert_eq!(peaks.len(), 1);
        assert!((peaks[0].col as f64 - 20.3).abs() <= 1.0);
        assert!((peaks[0].row as f64 - 19.6).abs() <= 1.0);
    }

    #[test]
    fn constant_image_has_no_peaks() {
        let img = SampledImage::new(Array2::from_elem((20, 20), 3.0), 1.0, (0.0, 0.0)).unwrap();
        assert!(matches!(
            detect_peaks(&img, &PeakDetection::default()),
            Err(LatticeError::NoPeaks(_))
        ));
    }

    #[test]
    fn plateau_yields_single_candidate() {
        let mut v = Array2::zeros((10, 10));
        v[[4, 4]] = 1.0;
        v[[4, 5]] = 1.0;
        v[[5, 4]] = 1.0;
        let img = SampledImage::new(v, 1.0, (0.0, 0.0)).unwrap();
        let peaks = detect_peaks(&img, &PeakDetection::default()).unwrap();
        assert_eq!(peaks.len(), 1);
        assert_eq!((peaks[0].row, peaks[0].col), (4, 4));
    }

    #[test]
    fn suppression_keeps_the_stronger_peak() {
        let mut v = Array2::zeros((20, 20));
        v[[5, 5]] = 1.0;
        v[[5, 8]] = 0.9;
        v[[15, 15]] = 0.8;
        let img = SampledImage::new(v, 2.0, (0.0, 0.0)).unwrap();
        let all = detect_peaks(&img, &PeakDetection::default()).unwrap();
        assert_eq!(all.len(), 3);
        let d = PeakDetection {
            min_prominence: 0.5,
            suppression_radius: Some(10.0),
        };
        let kept = detect_peaks(&img, &d).unwrap();
        assert_eq!(
            kept.iter().map(|p| (p.row, p.col)).collect::<Vec<_>>(),
            vec![(5, 5), (15, 15)]
        );
    }
}
