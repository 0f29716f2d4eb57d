use crate::error::{Error, Result};

/// Axis-aligned box with a 1-based pixel center: a box whose top-left pixel is
/// `(x, y)` (1-based) and size `(w, h)` has center `(x + w/2 - 0.5, y + h/2 - 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub center: (f64, f64),
    pub size: (f64, f64),
}

impl BoundingBox {
    pub fn new(center: (f64, f64), size: (f64, f64)) -> Result<Self> {
        if !(size.0 > 0.0 && size.1 > 0.0) || !size.0.is_finite() || !size.1.is_finite() {
            return Err(Error::param(format!("box size must be positive, got {size:?}")));
        }
        if !center.0.is_finite() || !center.1.is_finite() {
            return Err(Error::param("box center must be finite"));
        }
        Ok(Self { center, size })
    }

    /// From a `x,y,w,h` record with a 1-based top-left corner.
    pub fn from_top_left(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        Self::new((x + w / 2.0 - 0.5, y + h / 2.0 - 0.5), (w, h))
    }

    /// `(x, y, w, h)` with a 1-based top-left corner.
    pub fn top_left(&self) -> (f64, f64, f64, f64) {
        (
            self.center.0 - self.size.0 / 2.0 + 0.5,
            self.center.1 - self.size.1 / 2.0 + 0.5,
            self.size.0,
            self.size.1,
        )
    }

    /// Center in 0-based pixel coordinates, as used for sampling.
    pub fn pixel_center(&self) -> (f64, f64) {
        (self.center.0 - 1.0, self.center.1 - 1.0)
    }

    pub fn from_pixel_center(center: (f64, f64), size: (f64, f64)) -> Result<Self> {
        Self::new((center.0 + 1.0, center.1 + 1.0), size)
    }

    pub fn area(&self) -> f64 {
        self.size.0 * self.size.1
    }

    /// Half-open extent `[x0, x1) x [y0, y1)` in continuous coordinates.
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        let (x, y, w, h) = self.top_left();
        (x, y, x + w, y + h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_left_round_trip() {
        let b = BoundingBox::from_top_left(10.0, 20.0, 30.0, 40.0).unwrap();
        assert_eq!(b.center, (24.5, 39.5));
        assert_eq!(b.top_left(), (10.0, 20.0, 30.0, 40.0));
        assert_eq!(b.pixel_center(), (23.5, 38.5));
        assert!(BoundingBox::from_top_left(0.0, 0.0, 0.0, 3.0).is_err());
    }
}
