//! 3x3 non-maximum suppression by scan order and the response-map reliability test.
//!
//! Rows are scanned left to right for 1D strict maxima; only those candidates are
//! checked against the row below and then the row above. Every comparison result
//! that rules out a neighbor is cached, so pixels already known to lose are never
//! compared again.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectral::RealGrid;

/// Local peaks below this fraction of the global peak are dropped by [`fast_nms_3x3`].
pub const PRUNE_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak<T> {
    pub value: T,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmsPeaks<T> {
    pub global_peak: Peak<T>,
    /// Strict local maxima other than the global peak, in row-major order.
    pub local_peaks: Vec<Peak<T>>,
    pub comparisons_used: usize,
}

impl<T: Scalar> NmsPeaks<T> {
    /// Number of local peaks `L`.
    pub fn count(&self) -> usize {
        self.local_peaks.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reliability {
    Reliable,
    Unreliable,
}

struct Counter(usize);

impl Counter {
    fn cmp<T: Scalar>(&mut self, a: T, b: T) -> Ordering {
        self.0 += 1;
        a.partial_cmp(&b).unwrap_or(Ordering::Equal)
    }
}

/// All strict 3x3 local maxima in row-major order, plus the comparison count.
fn scan<T: Scalar>(map: &RealGrid<T>) -> Result<(Vec<Peak<T>>, usize)> {
    let (h, w) = map.shape();
    if h < 3 || w < 3 {
        return Err(Error::input(format!("NMS needs a map of at least 3x3, got {h}x{w}")));
    }
    let v = map.values();
    let mut counter = Counter(0);
    let mut not_max = vec![false; h * w];
    // bit d+1 set: the pixel is known to exceed its upper neighbor at column offset d
    let mut beats_up = vec![0u8; h * w];
    let mut peaks = Vec::new();

    for r in 0..h {
        let row = r * w;
        let mut c = 0;
        let mut beats_left = false;
        while c < w {
            let i = row + c;
            if not_max[i] {
                c += 1;
                beats_left = false;
                continue;
            }
            if c + 1 < w {
                match counter.cmp(v[i], v[i + 1]) {
                    Ordering::Greater => not_max[i + 1] = true,
                    Ordering::Less => {
                        c += 1;
                        beats_left = true;
                        continue;
                    }
                    Ordering::Equal => {
                        not_max[i + 1] = true;
                        c += 2;
                        beats_left = false;
                        continue;
                    }
                }
            }
            if c > 0 && !beats_left && counter.cmp(v[i], v[i - 1]) != Ordering::Greater {
                c += 2;
                beats_left = false;
                continue;
            }
            if check_vertical(v, &mut not_max, &mut beats_up, &mut counter, (h, w), r, c) {
                peaks.push(Peak {
                    value: v[i],
                    row: r,
                    col: c,
                });
            }
            c += 2;
            beats_left = false;
        }
    }
    Ok((peaks, counter.0))
}

/// Compares a 1D row maximum against the in-bounds rows below, then above.
fn check_vertical<T: Scalar>(
    v: &[T],
    not_max: &mut [bool],
    beats_up: &mut [u8],
    counter: &mut Counter,
    (h, w): (usize, usize),
    r: usize,
    c: usize,
) -> bool {
    let i = r * w + c;
    let lo = c.saturating_sub(1);
    let hi = (c + 1).min(w - 1);
    if r + 1 < h {
        for cc in lo..=hi {
            let j = (r + 1) * w + cc;
            match counter.cmp(v[i], v[j]) {
                Ordering::Greater => not_max[j] = true,
                Ordering::Less => {
                    // (r, c) sits up and to the side of j at offset c - cc
                    beats_up[j] |= 1 << (c + 1 - cc);
                    return false;
                }
                Ordering::Equal => {
                    not_max[j] = true;
                    return false;
                }
            }
        }
    }
    if r > 0 {
        for cc in lo..=hi {
            if beats_up[i] & (1 << (cc + 1 - c)) != 0 {
                continue;
            }
            let j = (r - 1) * w + cc;
            if counter.cmp(v[i], v[j]) != Ordering::Greater {
                return false;
            }
        }
    }
    true
}

fn split_global<T: Scalar>(map: &RealGrid<T>, peaks: Vec<Peak<T>>) -> (Peak<T>, Vec<Peak<T>>) {
    let best = peaks
        .iter()
        .enumerate()
        .fold(None::<(usize, T)>, |acc, (k, p)| match acc {
            Some((_, v)) if !(p.value > v) => acc,
            _ => Some((k, p.value)),
        });
    match best {
        Some((k, _)) => {
            let mut locals = peaks;
            let global = locals.remove(k);
            (global, locals)
        }
        None => {
            let (row, col, value) = map.argmax();
            (Peak { value, row, col }, Vec::new())
        }
    }
}

/// Every strict 3x3 local maximum, without pruning.
pub fn fast_nms_3x3_unpruned<T: Scalar>(map: &RealGrid<T>) -> Result<NmsPeaks<T>> {
    let (peaks, comparisons_used) = scan(map)?;
    let (global_peak, local_peaks) = split_global(map, peaks);
    Ok(NmsPeaks {
        global_peak,
        local_peaks,
        comparisons_used,
    })
}

/// Strict 3x3 local maxima; when the global peak is positive, local peaks below
/// [`PRUNE_FRACTION`] of it are dropped. A map without strict maxima reports its
/// first row-major maximum as the global peak.
pub fn fast_nms_3x3<T: Scalar>(map: &RealGrid<T>) -> Result<NmsPeaks<T>> {
    let mut peaks = fast_nms_3x3_unpruned(map)?;
    let g = peaks.global_peak.value;
    if g > T::zero() {
        let floor = g * T::of(PRUNE_FRACTION);
        peaks.local_peaks.retain(|p| p.value >= floor);
    }
    Ok(peaks)
}

/// Unreliable iff some local peak reaches `threshold` times the global peak, or
/// the global peak is not positive.
pub fn assess_reliability<T: Scalar>(peaks: &NmsPeaks<T>, threshold: f64) -> Result<Reliability> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::param(format!("NMS threshold must be in (0, 1], got {threshold}")));
    }
    let g = peaks.global_peak.value;
    if !(g > T::zero()) {
        return Ok(Reliability::Unreliable);
    }
    let bar = g * T::of(threshold);
    if peaks.local_peaks.iter().any(|p| p.value >= bar) {
        Ok(Reliability::Unreliable)
    } else {
        Ok(Reliability::Reliable)
    }
}
