use rstar::primitives::GeomWithData;
use rstar::RTree;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::PeakFit;
use crate::error::{LatticeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpacingEstimate {
    pub mean_spacing: f64,
    /// Number of nearest-neighbour pairs averaged.
    pub sample_count: usize,
    /// RMS deviation of the pair distances about their mean.
    pub rmse: f64,
    /// Half-width of the 95% confidence interval of the mean (Student t).
    /// Zero when only one pair is available.
    pub ci95: f64,
}

fn nearest(points: &[(f64, f64)]) -> Vec<(usize, f64)> {
    let tree = RTree::bulk_load(
        points
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| GeomWithData::new([x, y], i))
            .collect(),
    );
    points
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            tree.nearest_neighbor_iter_with_distance_2([x, y])
                .find(|(p, _)| p.data != i)
                .map_or((usize::MAX, f64::INFINITY), |(p, d2)| (p.data, d2.sqrt()))
        })
        .collect()
}

/// Mean nearest-neighbour distance over mutual-nearest pairs.
///
/// Each unordered pair `(i, j)` with `nn(i) = j` and `nn(j) = i` counts once.
/// Pairs longer than 1.5× the median nearest distance are dropped, and when a
/// hint is given so are pairs outside `[0.5, 1.5]×hint`.
pub fn estimate_lattice_constant(peaks: &[PeakFit], expected_spacing_hint: Option<f64>) -> Result<SpacingEstimate> {
    if peaks.len() < 2 {
        return Err(LatticeError::InsufficientPeaks {
            needed: 2,
            got: peaks.len(),
        });
    }
    let points: Vec<(f64, f64)> = peaks.iter().map(|p| p.center).collect();
    let nn = nearest(&points);

    let mut all: Vec<f64> = nn.iter().map(|&(_, d)| d).collect();
    all.sort_by(f64::total_cmp);
    let mid = all.len() / 2;
    let median = if all.len().is_multiple_of(2) {
        0.5 * (all[mid - 1] + all[mid])
    } else {
        all[mid]
    };
    let cutoff = 1.5 * median;

    let distances: Vec<f64> = nn
        .iter()
        .enumerate()
        .filter(|&(i, &(j, _))| i < j && nn[j].0 == i)
        .map(|(_, &(_, d))| d)
        .filter(|&d| d <= cutoff)
        .filter(|&d| expected_spacing_hint.is_none_or(|h| d >= 0.5 * h && d <= 1.5 * h))
        .collect();
    if distances.is_empty() {
        return Err(LatticeError::InsufficientPeaks { needed: 2, got: 0 });
    }

    let m = distances.len() as f64;
    let mean = distances.iter().sum::<f64>() / m;
    let ss: f64 = distances.iter().map(|d| (d - mean) * (d - mean)).sum();
    let rmse = (ss / m).sqrt();
    let ci95 = if distances.len() > 1 {
        let t = StudentsT::new(0.0, 1.0, m - 1.0).expect("dof > 0").inverse_cdf(0.975);
        t * (ss / (m - 1.0)).sqrt() / m.sqrt()
    } else {
        0.0
    };
    Ok(SpacingEstimate {
        mean_spacing: mean,
        sample_count: distances.len(),
        rmse,
        ci95,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn peak(x: f64, y: f64) -> PeakFit {
        PeakFit {
            center: (x, y),
            center_px: (x, y),
            amplitude: 1.0,
            offset: 0.0,
            width_sigma: 1.0,
            ci95_center: 0.0,
            iterations: 1,
        }
    }

    #[test]
    fn two_peaks() {
        let est = estimate_lattice_constant(&[peak(0.0, 0.0), peak(3.0, 4.0)], None).unwrap();
        assert_eq!(est.mean_spacing, 5.0);
        assert_eq!(est.rmse, 0.0);
        assert_eq!(est.sample_count, 1);
    }

    #[test]
    fn too_few_peaks() {
        assert_eq!(
            estimate_lattice_constant(&[peak(0.0, 0.0)], None),
            Err(LatticeError::InsufficientPeaks { needed: 2, got: 1 })
        );
    }

    #[test]
    fn outliers_beyond_cutoff_are_discarded() {
        // two tight pairs and one pair far apart
        let pts = [
            peak(0.0, 0.0),
            peak(1.0, 0.0),
            peak(10.0, 0.0),
            peak(11.0, 0.0),
            peak(50.0, 0.0),
            peak(60.0, 0.0),
        ];
        let est = estimate_lattice_constant(&pts, None).unwrap();
        assert_eq!(est.sample_count, 2);
        assert_eq!(est.mean_spacing, 1.0);
    }

    #[test]
    fn square_grid_spacing_and_ci() {
        let mut pts = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                let jitter = ((i * 7 + j * 3) % 5) as f64 * 1e-3;
                pts.push(peak(i as f64 * 2.0 + jitter, j as f64 * 2.0));
            }
        }
        let est = estimate_lattice_constant(&pts, Some(2.0)).unwrap();
        assert!((est.mean_spacing - 2.0).abs() < 5e-3);
        assert!(est.ci95 > 0.0 && est.ci95 < 1e-2);
    }

    #[test]
    fn scaling_positions_scales_spacing_exactly() {
        let pts: Vec<PeakFit> = (0..20).map(|i| peak(i as f64 * 1.25, (i % 3) as f64 * 0.5)).collect();
        let base = estimate_lattice_constant(&pts, None).unwrap();
        let scaled: Vec<PeakFit> = pts.iter().map(|p| peak(p.center.0 * 4.0, p.center.1 * 4.0)).collect();
        let est = estimate_lattice_constant(&scaled, None).unwrap();
        assert_eq!(est.mean_spacing, 4.0 * base.mean_spacing);
    }
}
