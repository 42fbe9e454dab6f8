//! Real spherical harmonics up to degree 2.

use crate::error::{Error, Result};

const Y00: f64 = 0.282_094_791_773_878_14;
const Y1: f64 = 0.488_602_511_902_919_9;
const Y2_OFF: f64 = 1.092_548_430_592_079_2;
const Y20: f64 = 0.315_391_565_252_520_05;
const Y22: f64 = 0.546_274_215_296_039_6;

/// Nine real SH basis values of `direction`, normalized first.
///
/// Order: `Y00, Y1-1, Y10, Y11, Y2-2, Y2-1, Y20, Y21, Y22`.
pub fn sh_basis9(direction: [f64; 3]) -> Result<[f64; 9]> {
    let n = (direction[0].powi(2) + direction[1].powi(2) + direction[2].powi(2)).sqrt();
    if n.is_nan() || n <= 0.0 || !n.is_finite() {
        return Err(Error::Domain(format!("SH direction must be a nonzero finite vector, got {direction:?}")));
    }
    let (x, y, z) = (direction[0] / n, direction[1] / n, direction[2] / n);
    Ok([
        Y00,
        Y1 * y,
        Y1 * z,
        Y1 * x,
        Y2_OFF * x * y,
        Y2_OFF * y * z,
        Y20 * (3.0 * z * z - 1.0),
        Y2_OFF * x * z,
        Y22 * (x * x - y * y),
    ])
}
