//! Unitary 2D Fourier transforms over real and complex grids, plus the
//! Gaussian label and window generators shared by the solver and tracker.
//!
//! Both directions are scaled by `1/sqrt(height*width)`, so `inverse(forward(g)) == g`
//! and Parseval holds without extra factors.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major real-valued grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RealGrid<T> {
    height: usize,
    width: usize,
    values: Vec<T>,
}

/// Row-major complex-valued grid, typically a spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGrid<T> {
    height: usize,
    width: usize,
    values: Vec<Complex<T>>,
}

fn check_dims(height: usize, width: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::shape(format!("degenerate grid {height}x{width}")));
    }
    if height * width != len {
        return Err(Error::shape(format!(
            "{height}x{width} grid needs {} values, got {len}",
            height * width
        )));
    }
    Ok(())
}

impl<T: Scalar> RealGrid<T> {
    pub fn from_vec(height: usize, width: usize, values: Vec<T>) -> Result<Self> {
        check_dims(height, width, values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("grid contains non-finite values"));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "degenerate grid");
        Self {
            height,
            width,
            values: vec![T::zero(); height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(height > 0 && width > 0, "degenerate grid");
        let mut values = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                values.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            values,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: T) {
        self.values[row * self.width + col] = v;
    }

    /// Value at `(row, col)` with both indices taken modulo the grid size.
    pub fn get_wrapped(&self, row: isize, col: isize) -> T {
        let r = row.rem_euclid(self.height as isize) as usize;
        let c = col.rem_euclid(self.width as isize) as usize;
        self.get(r, c)
    }

    /// Circular shift: the value at `(r, c)` moves to `(r + dr, c + dc)`.
    pub fn shifted(&self, dr: isize, dc: isize) -> Self {
        Self::from_fn(self.height, self.width, |r, c| {
            self.get_wrapped(r as isize - dr, c as isize - dc)
        })
    }

    /// First maximum in row-major order.
    pub fn argmax(&self) -> (usize, usize, T) {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        (best / self.width, best % self.width, self.values[best])
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn to_complex(&self) -> SpectralGrid<T> {
        SpectralGrid {
            height: self.height,
            width: self.width,
            values: self
                .values
                .iter()
                .map(|v| Complex::new(*v, T::zero()))
                .collect(),
        }
    }
}

impl<T: Scalar> SpectralGrid<T> {
    pub fn from_vec(height: usize, width: usize, values: Vec<Complex<T>>) -> Result<Self> {
        check_dims(height, width, values.len())?;
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "degenerate grid");
        Self {
            height,
            width,
            values: vec![Complex::new(T::zero(), T::zero()); height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.values
    }

    pub fn get(&self, row: usize, col: usize) -> Complex<T> {
        self.values[row * self.width + col]
    }

    /// Real parts, discarding imaginary residue.
    pub fn real_part(&self) -> RealGrid<T> {
        RealGrid {
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|v| v.re).collect(),
        }
    }

    pub fn energy(&self) -> T {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Largest deviation from `X[-k] == conj(X[k])`.
    pub fn conjugate_symmetry_error(&self) -> T {
        let mut worst = T::zero();
        for r in 0..self.height {
            for c in 0..self.width {
                let mr = (self.height - r) % self.height;
                let mc = (self.width - c) % self.width;
                let d = (self.get(r, c) - self.get(mr, mc).conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }
}

/// Planned unitary 2D transform for one grid shape.
#[derive(Clone)]
pub struct Fft2<T: Scalar> {
    height: usize,
    width: usize,
    rows_fwd: Arc<dyn Fft<T>>,
    rows_inv: Arc<dyn Fft<T>>,
    cols_fwd: Arc<dyn Fft<T>>,
    cols_inv: Arc<dyn Fft<T>>,
    scale: T,
}

impl<T: Scalar> std::fmt::Debug for Fft2<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

impl<T: Scalar> Fft2<T> {
    pub fn new(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "degenerate transform shape");
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            rows_fwd: planner.plan_fft(width, FftDirection::Forward),
            rows_inv: planner.plan_fft(width, FftDirection::Inverse),
            cols_fwd: planner.plan_fft(height, FftDirection::Forward),
            cols_inv: planner.plan_fft(height, FftDirection::Inverse),
            scale: T::one() / T::of((height * width) as f64).sqrt(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn run(&self, data: &mut [Complex<T>], rows: &Arc<dyn Fft<T>>, cols: &Arc<dyn Fft<T>>) {
        debug_assert_eq!(data.len(), self.height * self.width);
        rows.process(data);
        let (h, w) = (self.height, self.width);
        let mut t = vec![Complex::new(T::zero(), T::zero()); h * w];
        for r in 0..h {
            for c in 0..w {
                t[c * h + r] = data[r * w + c];
            }
        }
        cols.process(&mut t);
        for c in 0..w {
            for r in 0..h {
                data[r * w + c] = t[c * h + r] * self.scale;
            }
        }
    }

    pub fn forward_in_place(&self, data: &mut [Complex<T>]) {
        self.run(data, &self.rows_fwd, &self.cols_fwd);
    }

    pub fn inverse_in_place(&self, data: &mut [Complex<T>]) {
        self.run(data, &self.rows_inv, &self.cols_inv);
    }

    pub fn forward(&self, grid: &RealGrid<T>) -> Result<SpectralGrid<T>> {
        self.check(grid.shape())?;
        let mut out = grid.to_complex();
        self.forward_in_place(&mut out.values);
        Ok(out)
    }

    pub fn forward_complex(&self, grid: &SpectralGrid<T>) -> Result<SpectralGrid<T>> {
        self.check(grid.shape())?;
        let mut out = grid.clone();
        self.forward_in_place(&mut out.values);
        Ok(out)
    }

    pub fn inverse(&self, grid: &SpectralGrid<T>) -> Result<SpectralGrid<T>> {
        self.check(grid.shape())?;
        let mut out = grid.clone();
        self.inverse_in_place(&mut out.values);
        Ok(out)
    }

    /// Inverse transform keeping only the real part.
    pub fn inverse_real(&self, grid: &SpectralGrid<T>) -> Result<RealGrid<T>> {
        Ok(self.inverse(grid)?.real_part())
    }

    fn check(&self, shape: (usize, usize)) -> Result<()> {
        if shape != (self.height, self.width) {
            return Err(Error::shape(format!(
                "transform planned for {}x{}, got {}x{}",
                self.height, self.width, shape.0, shape.1
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// One-shot unitary transform of a complex grid. Real grids go through
/// [`RealGrid::to_complex`] or [`Fft2::forward`].
pub fn transform2d<T: Scalar>(input: &SpectralGrid<T>, direction: Direction) -> SpectralGrid<T> {
    let plan = Fft2::new(input.height, input.width);
    let mut out = input.clone();
    match direction {
        Direction::Forward => plan.forward_in_place(&mut out.values),
        Direction::Inverse => plan.inverse_in_place(&mut out.values),
    }
    out
}

pub fn forward<T: Scalar>(grid: &RealGrid<T>) -> SpectralGrid<T> {
    transform2d(&grid.to_complex(), Direction::Forward)
}

pub fn inverse<T: Scalar>(grid: &SpectralGrid<T>) -> SpectralGrid<T> {
    transform2d(grid, Direction::Inverse)
}

/// Signed circular offset of `i` from `center` on a ring of length `n`, in `(-n/2, n/2]`.
fn wrapped_offset(i: usize, center: usize, n: usize) -> f64 {
    let d = (i + n - center % n) % n;
    if 2 * d > n {
        d as f64 - n as f64
    } else {
        d as f64
    }
}

/// Gaussian desired response with peak 1.0 at `center`, wrapping around the borders.
pub fn gaussian_label<T: Scalar>(
    height: usize,
    width: usize,
    sigma: f64,
    center: (usize, usize),
) -> Result<RealGrid<T>> {
    if !(sigma > 0.0) {
        return Err(Error::param(format!("label sigma must be positive, got {sigma}")));
    }
    if height == 0 || width == 0 {
        return Err(Error::shape("degenerate label grid"));
    }
    if center.0 >= height || center.1 >= width {
        return Err(Error::param(format!(
            "label center {center:?} outside {height}x{width} grid"
        )));
    }
    let denom = 2.0 * sigma * sigma;
    Ok(RealGrid::from_fn(height, width, |r, c| {
        let dr = wrapped_offset(r, center.0, height);
        let dc = wrapped_offset(c, center.1, width);
        T::of((-(dr * dr + dc * dc) / denom).exp())
    }))
}

/// Separable Gaussian taper centered on the grid, per-axis sigma = `sigma_fraction * side`.
pub fn gaussian_window<T: Scalar>(
    height: usize,
    width: usize,
    sigma_fraction: f64,
) -> Result<RealGrid<T>> {
    if !(sigma_fraction > 0.0) {
        return Err(Error::param(format!(
            "window sigma fraction must be positive, got {sigma_fraction}"
        )));
    }
    if height == 0 || width == 0 {
        return Err(Error::shape("degenerate window grid"));
    }
    let axis = |n: usize| -> Vec<f64> {
        let sigma = sigma_fraction * n as f64;
        let mid = (n as f64 - 1.0) / 2.0;
        (0..n)
            .map(|i| {
                let d = i as f64 - mid;
                (-(d * d) / (2.0 * sigma * sigma)).exp()
            })
            .collect()
    };
    let rows = axis(height);
    let cols = axis(width);
    Ok(RealGrid::from_fn(height, width, |r, c| T::of(rows[r] * cols[c])))
}
