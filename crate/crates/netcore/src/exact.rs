//! Exact elementwise subtraction through a shared dyadic grid.
//!
//! For floats `a` and `b`, `(a − b) + b` is in general not bitwise equal to
//! `a`. If both values are first rounded to a common grid `u = 2^(E−52)` with
//! `2^E > |a| + |b|`, then `a − b` and `(a − b) + b` are computed without
//! rounding error. The rounding moves each value by at most `u / 2`, which is
//! on the order of one unit in the last place of `|a| + |b|`.

use crate::Mat;
use ndarray::Zip;

/// Smallest positive subnormal; grids never go below it.
const MIN_GRID: f64 = f64::from_bits(1);

/// Power-of-two spacing `2^(E−52)` with `2^E > s`, for `s >= 0`.
fn grid_for(s: f64) -> f64 {
    if s == 0.0 || !s.is_finite() {
        return MIN_GRID;
    }
    // floor(log2 s) read from the exponent bits, valid for normal s.
    let bits = s.to_bits();
    let raw_exp = ((bits >> 52) & 0x7ff) as i32;
    if raw_exp == 0 {
        return MIN_GRID;
    }
    let e = raw_exp - 1023 + 1;
    let g = 2f64.powi(e - 52);
    if g < MIN_GRID {
        MIN_GRID
    } else {
        g
    }
}

/// Elementwise grid shared by `a` and `b`.
pub fn common_grid(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.raw_dim());
    Zip::from(&mut out).and(a).and(b).for_each(|o, &x, &y| *o = grid_for(x.abs() + y.abs()));
    out
}

/// Each entry of `x` rounded to the nearest multiple of the matching grid entry.
pub fn snap_to_grid(x: &Mat, grid: &Mat) -> Mat {
    let mut out = x.clone();
    Zip::from(&mut out).and(grid).for_each(|v, &u| {
        if v.is_finite() {
            // Adding +0.0 turns a rounded -0.0 into +0.0, the sign `(a − b) + b` produces.
            *v = (*v / u).round() * u + 0.0;
        }
    });
    out
}

/// `a` and `b` rounded onto their common grid.
pub fn align(a: &Mat, b: &Mat) -> (Mat, Mat) {
    let g = common_grid(a, b);
    (snap_to_grid(a, &g), snap_to_grid(b, &g))
}
