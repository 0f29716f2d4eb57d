use crate::scalar::Scalar;
use crate::solver::ResponseMap;
use crate::spectral::RealGrid;

/// Sub-cell peak estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Refinement {
    pub row: f64,
    pub col: f64,
    /// Interpolated response at `(row, col)`.
    pub value: f64,
    pub iterations: usize,
}

/// Bilinear interpolation with circular wrap-around.
pub fn sample_bilinear<T: Scalar>(grid: &RealGrid<T>, row: f64, col: f64) -> f64 {
    let r0 = row.floor();
    let c0 = col.floor();
    let (fr, fc) = (row - r0, col - c0);
    let (r0, c0) = (r0 as isize, c0 as isize);
    let g = |r: isize, c: isize| grid.get_wrapped(r, c).as_f64();
    let top = g(r0, c0) * (1.0 - fc) + g(r0, c0 + 1) * fc;
    let bottom = g(r0 + 1, c0) * (1.0 - fc) + g(r0 + 1, c0 + 1) * fc;
    top * (1.0 - fr) + bottom * fr
}

/// Newton ascent from `start` on the bilinearly interpolated response, with
/// central-difference gradient and Hessian over a one-cell stencil.
///
/// Stops when a step is shorter than `tolerance`, after `max_iters` steps, or when
/// the Hessian is not negative definite. The result never leaves the 3x3
/// neighborhood of `start`.
pub fn newton_refine<T: Scalar>(
    response: &ResponseMap<T>,
    start: (usize, usize),
    tolerance: f64,
    max_iters: usize,
) -> Refinement {
    let grid = &response.grid;
    let f = |r: f64, c: f64| sample_bilinear(grid, r, c);
    let (sr, sc) = (start.0 as f64, start.1 as f64);
    let (mut r, mut c) = (sr, sc);
    let mut iterations = 0;
    while iterations < max_iters {
        let f0 = f(r, c);
        let gr = (f(r + 1.0, c) - f(r - 1.0, c)) / 2.0;
        let gc = (f(r, c + 1.0) - f(r, c - 1.0)) / 2.0;
        let hrr = f(r + 1.0, c) - 2.0 * f0 + f(r - 1.0, c);
        let hcc = f(r, c + 1.0) - 2.0 * f0 + f(r, c - 1.0);
        let hrc = (f(r + 1.0, c + 1.0) - f(r + 1.0, c - 1.0) - f(r - 1.0, c + 1.0)
            + f(r - 1.0, c - 1.0))
            / 4.0;
        let det = hrr * hcc - hrc * hrc;
        if !(hrr < 0.0 && det > 0.0) {
            break;
        }
        let dr = -(hcc * gr - hrc * gc) / det;
        let dc = -(hrr * gc - hrc * gr) / det;
        let nr = (r + dr).clamp(sr - 1.0, sr + 1.0);
        let nc = (c + dc).clamp(sc - 1.0, sc + 1.0);
        let step = ((nr - r).powi(2) + (nc - c).powi(2)).sqrt();
        r = nr;
        c = nc;
        iterations += 1;
        if step < tolerance {
            break;
        }
    }
    Refinement {
        row: r,
        col: c,
        value: f(r, c),
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_response_returns_start() {
        let map = ResponseMap::from_grid(RealGrid::from_fn(9, 9, |_, _| 1.0f64));
        let r = newton_refine(&map, (4, 4), 1e-7, 5);
        assert_eq!((r.row, r.col, r.iterations), (4.0, 4.0, 0));
    }

    #[test]
    fn bilinear_hits_grid_values() {
        let g = RealGrid::from_fn(4, 5, |r, c| (r * 5 + c) as f64);
        assert_eq!(sample_bilinear(&g, 2.0, 3.0), 13.0);
        assert_eq!(sample_bilinear(&g, 2.5, 3.0), 15.5);
        // wraps from the last row back to the first
        assert_eq!(sample_bilinear(&g, 3.5, 0.0), 7.5);
    }
}
