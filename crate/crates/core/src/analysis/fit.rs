//! Isotropic 2D Gaussian + constant offset, fitted by Levenberg-Marquardt.
//!
//! f(x, y) = A·exp(−((x − x0)² + (y − y0)²) / 2σ²) + B
//!
//! The fit runs in window-local pixel coordinates so that an integer
//! translation of the image translates the result exactly. The centre
//! uncertainty comes from the linearized covariance `s²·(JᵀJ)⁻¹` with `s²`
//! the residual variance.

use nalgebra::{Matrix2, SMatrix, SVector};

use super::{PeakCandidate, SampledImage};
use crate::error::{LatticeError, Result};

type Mat5 = SMatrix<f64, 5, 5>;
type Vec5 = SVector<f64, 5>;

/// 95% quantile of the χ² distribution with two degrees of freedom, `−2 ln 0.05`.
pub const CHI2_2DOF_95: f64 = 5.991_464_547_107_979;

const MAX_ITERATIONS: usize = 200;
const MAX_RECENTER: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakFit {
    /// Physical centre (x, y) in meters.
    pub center: (f64, f64),
    /// Sub-pixel centre (col, row).
    pub center_px: (f64, f64),
    pub amplitude: f64,
    pub offset: f64,
    /// Gaussian σ in meters.
    pub width_sigma: f64,
    /// Radius of the 95% confidence region of the centre, meters.
    pub ci95_center: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy)]
struct Params {
    x0: f64,
    y0: f64,
    amp: f64,
    sigma: f64,
    bg: f64,
}

impl Params {
    fn to_vec(self) -> Vec5 {
        Vec5::new(self.x0, self.y0, self.amp, self.sigma, self.bg)
    }

    fn from_vec(v: &Vec5) -> Self {
        Self {
            x0: v[0],
            y0: v[1],
            amp: v[2],
            sigma: v[3],
            bg: v[4],
        }
    }
}

struct Window {
    /// (dx, dy, value) relative to the window centre pixel.
    samples: Vec<(f64, f64, f64)>,
}

impl Window {
    fn cost(&self, p: &Params) -> f64 {
        let inv = 1.0 / (2.0 * p.sigma * p.sigma);
        self.samples
            .iter()
            .map(|&(x, y, v)| {
                let dx = x - p.x0;
                let dy = y - p.y0;
                let r = v - (p.amp * (-(dx * dx + dy * dy) * inv).exp() + p.bg);
                r * r
            })
            .sum()
    }

    /// Returns (JᵀJ, Jᵀr, cost).
    fn normal_equations(&self, p: &Params) -> (Mat5, Vec5, f64) {
        let s2 = p.sigma * p.sigma;
        let inv = 1.0 / (2.0 * s2);
        let mut jtj = Mat5::zeros();
        let mut jtr = Vec5::zeros();
        let mut cost = 0.0;
        for &(x, y, v) in &self.samples {
            let dx = x - p.x0;
            let dy = y - p.y0;
            let d2 = dx * dx + dy * dy;
            let e = (-d2 * inv).exp();
            let ae = p.amp * e;
            let r = v - (ae + p.bg);
            let j = Vec5::new(ae * dx / s2, ae * dy / s2, e, ae * d2 / (s2 * p.sigma), 1.0);
            jtj += j * j.transpose();
            jtr += j * r;
            cost += r * r;
        }
        (jtj, jtr, cost)
    }
}

fn extract(image: &SampledImage, row: usize, col: usize, radius: usize) -> Result<Window> {
    let (h, w) = image.values.dim();
    if row < radius || col < radius || row + radius >= h || col + radius >= w {
        return Err(LatticeError::WindowOutOfBounds(format!(
            "window of radius {radius} at ({row}, {col}) exceeds {w}x{h} image"
        )));
    }
    let r = radius as i64;
    let mut samples = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
    for dy in -r..=r {
        for dx in -r..=r {
            let v = image.values[[(row as i64 + dy) as usize, (col as i64 + dx) as usize]];
            samples.push((dx as f64, dy as f64, v));
        }
    }
    Ok(Window { samples })
}

fn initial_guess(win: &Window, radius: usize) -> Result<Params> {
    let (lo, hi) = win
        .samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s.2), b.max(s.2)));
    if !(hi - lo > 1e-12 * hi.abs().max(lo.abs()).max(1e-300)) {
        return Err(LatticeError::IllConditioned("window is flat".into()));
    }
    let centre = win.samples[win.samples.len() / 2].2;
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for &(x, y, v) in &win.samples {
        let wgt = v - lo;
        sw += wgt;
        sx += wgt * x;
        sy += wgt * y;
    }
    let (x0, y0) = if sw > 0.0 {
        ((sx / sw).clamp(-1.0, 1.0), (sy / sw).clamp(-1.0, 1.0))
    } else {
        (0.0, 0.0)
    };
    Ok(Params {
        x0,
        y0,
        amp: (centre - lo).max(0.5 * (hi - lo)),
        sigma: (radius as f64 / 2.0).max(0.75),
        bg: lo,
    })
}

struct LocalFit {
    params: Params,
    cov: Mat5,
    iterations: usize,
}

fn levenberg_marquardt(win: &Window, start: Params) -> Result<LocalFit> {
    let mut p = start;
    let mut lambda = 1e-3;
    let (mut jtj, mut jtr, mut cost) = win.normal_equations(&p);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut damped = jtj;
        for i in 0..5 {
            damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
        }
        let Some(step) = damped.cholesky().map(|c| c.solve(&jtr)) else {
            lambda *= 10.0;
            if lambda > 1e16 {
                return Err(LatticeError::IllConditioned("normal matrix is singular".into()));
            }
            continue;
        };
        let trial = Params::from_vec(&(p.to_vec() + step));
        let trial_cost = if trial.sigma > 0.0 {
            win.cost(&trial)
        } else {
            f64::INFINITY
        };
        if trial_cost.is_finite() && trial_cost <= cost {
            let small_step = step.amax() < 1e-10;
            let small_gain = cost - trial_cost <= 1e-15 * cost || trial_cost < 1e-28;
            p = trial;
            (jtj, jtr, cost) = win.normal_equations(&p);
            lambda = (lambda / 10.0).max(1e-15);
            if small_step || small_gain {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e16 {
                // no downhill step left at machine precision
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(LatticeError::NonConvergence(MAX_ITERATIONS));
    }
    if !(p.amp > 0.0) || !(p.sigma > 0.0) {
        return Err(LatticeError::IllConditioned(format!(
            "fit collapsed (amplitude {:.3e}, sigma {:.3e})",
            p.amp, p.sigma
        )));
    }
    let inv = jtj
        .try_inverse()
        .ok_or_else(|| LatticeError::IllConditioned("covariance is singular".into()))?;
    let dof = win.samples.len().saturating_sub(5).max(1) as f64;
    Ok(LocalFit {
        params: p,
        cov: inv * (cost / dof),
        iterations,
    })
}

/// Fits the window of `window_radius` pixels around `candidate`. When the
/// fitted centre lands more than half a pixel away, the window is re-centred
/// on it and the fit repeated.
pub fn fit_peak_gaussian(image: &SampledImage, candidate: &PeakCandidate, window_radius: usize) -> Result<PeakFit> {
    if window_radius < 1 {
        return Err(LatticeError::InvalidSpec("window radius must be >= 1".into()));
    }
    let (mut row, mut col) = (candidate.row, candidate.col);
    let mut total_iterations = 0;
    for pass in 0..=MAX_RECENTER {
        let win = extract(image, row, col, window_radius)?;
        let start = initial_guess(&win, window_radius)?;
        let fit = levenberg_marquardt(&win, start)?;
        total_iterations += fit.iterations;
        let p = fit.params;
        let limit = window_radius as f64;
        if p.x0.abs() > limit || p.y0.abs() > limit {
            return Err(LatticeError::IllConditioned("fitted centre left the window".into()));
        }
        if (p.x0.abs() > 0.5 || p.y0.abs() > 0.5) && pass < MAX_RECENTER {
            let new_col = (col as f64 + p.x0).round();
            let new_row = (row as f64 + p.y0).round();
            if new_col < 0.0 || new_row < 0.0 {
                return Err(LatticeError::WindowOutOfBounds(
                    "re-centred window left the image".into(),
                ));
            }
            col = new_col as usize;
            row = new_row as usize;
            continue;
        }
        let cx = col as f64 + p.x0;
        let cy = row as f64 + p.y0;
        let cov_xy = Matrix2::new(fit.cov[(0, 0)], fit.cov[(0, 1)], fit.cov[(1, 0)], fit.cov[(1, 1)]);
        let lmax = cov_xy.symmetric_eigenvalues().max().max(0.0);
        return Ok(PeakFit {
            center: image.to_physical(cx, cy),
            center_px: (cx, cy),
            amplitude: p.amp,
            offset: p.bg,
            width_sigma: p.sigma * image.pitch,
            ci95_center: (CHI2_2DOF_95 * lmax).sqrt() * image.pitch,
            iterations: total_iterations,
        });
    }
    unreachable!("last pass always returns")
}
