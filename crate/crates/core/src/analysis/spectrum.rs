use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};
use std::f64::consts::PI;

use super::SampledImage;
use crate::error::{LatticeError, Result};

pub(crate) const MIN_SIZE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowFunction {
    None,
    /// Separable Hann window.
    #[default]
    RaisedCosine,
}

/// DC-centred magnitude spectrum. Bin `(row, col)` has spatial frequency
/// `((col − center.1)·step_x, (row − center.0)·step_y)` in cycles per meter.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub magnitude: Array2<f64>,
    pub step_x: f64,
    pub step_y: f64,
    /// (row, col) of the DC bin.
    pub center: (usize, usize),
}

impl Spectrum {
    pub fn frequency(&self, row: f64, col: f64) -> (f64, f64) {
        (
            (col - self.center.1 as f64) * self.step_x,
            (row - self.center.0 as f64) * self.step_y,
        )
    }

    /// Bilinear interpolation of the magnitude at physical frequency `(fx, fy)`.
    pub fn sample(&self, fx: f64, fy: f64) -> f64 {
        let c = fx / self.step_x + self.center.1 as f64;
        let r = fy / self.step_y + self.center.0 as f64;
        let (h, w) = self.magnitude.dim();
        if r < 0.0 || c < 0.0 || r > (h - 1) as f64 || c > (w - 1) as f64 {
            return 0.0;
        }
        let (r0, c0) = (r.floor() as usize, c.floor() as usize);
        let (r1, c1) = ((r0 + 1).min(h - 1), (c0 + 1).min(w - 1));
        let (tr, tc) = (r - r0 as f64, c - c0 as f64);
        let m = &self.magnitude;
        (1.0 - tr) * ((1.0 - tc) * m[[r0, c0]] + tc * m[[r0, c1]]) + tr * ((1.0 - tc) * m[[r1, c0]] + tc * m[[r1, c1]])
    }
}

/// In-place 2D FFT over rows then columns.
pub fn fft2(data: &mut Array2<Complex64>, direction: FftDirection) {
    let (h, w) = data.dim();
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft(w, direction);
    let col_fft = planner.plan_fft(h, direction);
    let mut buf = vec![Complex64::new(0.0, 0.0); w.max(h)];
    for mut row in data.axis_iter_mut(Axis(0)) {
        for (b, v) in buf.iter_mut().zip(row.iter()) {
            *b = *v;
        }
        row_fft.process(&mut buf[..w]);
        for (v, b) in row.iter_mut().zip(buf.iter()) {
            *v = *b;
        }
    }
    for mut col in data.axis_iter_mut(Axis(1)) {
        for (b, v) in buf.iter_mut().zip(col.iter()) {
            *b = *v;
        }
        col_fft.process(&mut buf[..h]);
        for (v, b) in col.iter_mut().zip(buf.iter()) {
            *v = *b;
        }
    }
}

fn window_weights(n: usize, window: WindowFunction) -> Vec<f64> {
    match window {
        WindowFunction::None => vec![1.0; n],
        WindowFunction::RaisedCosine => (0..n)
            .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / n as f64).cos()))
            .collect(),
    }
}

/// Windowed 2D DFT magnitude with the DC bin moved to `(h/2, w/2)`.
pub fn fft_spectrum(image: &SampledImage, window: WindowFunction) -> Result<Spectrum> {
    let (h, w) = image.values.dim();
    if h < MIN_SIZE || w < MIN_SIZE {
        return Err(LatticeError::ImageTooSmall(format!(
            "spectrum needs at least {MIN_SIZE}x{MIN_SIZE}, got {w}x{h}"
        )));
    }
    let wx = window_weights(w, window);
    let wy = window_weights(h, window);
    let mut data = Array2::from_shape_fn((h, w), |(r, c)| {
        Complex64::new(image.values[[r, c]] * wy[r] * wx[c], 0.0)
    });
    fft2(&mut data, FftDirection::Forward);

    let (cy, cx) = (h / 2, w / 2);
    let mut magnitude = Array2::zeros((h, w));
    for ((r, c), v) in data.indexed_iter() {
        magnitude[[(r + cy) % h, (c + cx) % w]] = v.norm();
    }
    Ok(Spectrum {
        magnitude,
        step_x: 1.0 / (w as f64 * image.pitch),
        step_y: 1.0 / (h as f64 * image.pitch),
        center: (cy, cx),
    })
}
