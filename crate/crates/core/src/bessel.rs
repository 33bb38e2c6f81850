//! Integer-order Bessel functions of the first kind and the memory kernel
//! of the single-guide reduction.

use crate::error::{Error, Result};

/// Largest supported order.
pub const MAX_ORDER: u32 = 64;

/// Largest supported argument.
pub const MAX_ARG: f64 = 1e4;

const RESCALE_ABOVE: f64 = 1e250;

fn check_arg(x: f64) -> Result<()> {
    if !(0.0..=MAX_ARG).contains(&x) {
        return Err(Error::InvalidParams(format!("bessel argument {x} outside [0, {MAX_ARG}]")));
    }
    Ok(())
}

/// `J_0(x), ..., J_{max_order}(x)`.
///
/// Uses the ascending series below `x = 1` and otherwise one downward
/// Miller recurrence normalised with `J_0 + 2 sum_k J_2k = 1`.
pub fn bessel_j_upto(max_order: u32, x: f64) -> Result<Vec<f64>> {
    if max_order > MAX_ORDER {
        return Err(Error::OrderOutOfRange(max_order));
    }
    check_arg(x)?;
    let len = max_order as usize + 1;
    let mut out = vec![0.0; len];
    if x == 0.0 {
        out[0] = 1.0;
        return Ok(out);
    }
    if x < 1.0 {
        for (n, v) in out.iter_mut().enumerate() {
            *v = small_arg_series(n, x);
        }
        return Ok(out);
    }

    let start = (max_order as f64).max(x) + 40.0 + 10.0 * x.cbrt();
    let mut k = start.ceil() as usize;
    k += k % 2;

    let mut upper = 0.0_f64;
    let mut current = 1e-300_f64;
    let mut norm = 0.0_f64;
    while k > 0 {
        if k < len {
            out[k] = current;
        }
        if k.is_multiple_of(2) {
            norm += 2.0 * current;
        }
        let lower = 2.0 * k as f64 / x * current - upper;
        upper = current;
        current = lower;
        k -= 1;
        if current.abs() > RESCALE_ABOVE {
            let s = 1.0 / RESCALE_ABOVE;
            current *= s;
            upper *= s;
            norm *= s;
            for v in out.iter_mut() {
                *v *= s;
            }
        }
    }
    out[0] = current;
    norm += current;
    for v in out.iter_mut() {
        *v /= norm;
    }
    Ok(out)
}

// Ascending series; for x < 1 every term is below the previous one.
fn small_arg_series(n: usize, x: f64) -> f64 {
    let h = 0.5 * x;
    let mut term = 1.0;
    for i in 1..=n {
        term *= h / i as f64;
    }
    let mut sum = term;
    let mut k = 1;
    while term.abs() > 1e-18 * sum.abs() && term != 0.0 {
        term *= -h * h / (k as f64 * (k + n) as f64);
        sum += term;
        k += 1;
    }
    sum
}

/// `J_n(x)` for `0 <= n <= 64` and `0 <= x <= 1e4`.
pub fn bessel_j(order: u32, x: f64) -> Result<f64> {
    Ok(bessel_j_upto(order, x)?[order as usize])
}

/// `J_n(x)` for a signed order, via `J_{-n} = (-1)^n J_n`.
pub fn bessel_j_signed(order: i64, x: f64) -> Result<f64> {
    let n = u32::try_from(order.unsigned_abs()).map_err(|_| Error::OrderOutOfRange(u32::MAX))?;
    let v = bessel_j(n, x)?;
    Ok(if order < 0 && n % 2 == 1 { -v } else { v })
}

/// `K(x) = J_0(2 C_s x) + J_2(2 C_s x)`, the memory kernel felt by the
/// central guide when the rest of the lattice is eliminated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryKernel {
    pub c_s: f64,
}

impl MemoryKernel {
    pub fn new(c_s: f64) -> Result<Self> {
        if !(c_s.is_finite() && c_s > 0.0) {
            return Err(Error::InvalidParams(format!("kernel coupling must be positive, got {c_s}")));
        }
        Ok(Self { c_s })
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Err(Error::InvalidParams(format!("kernel argument {x} is negative")));
        }
        let j = bessel_j_upto(2, 2.0 * self.c_s * x)?;
        Ok(j[0] + j[2])
    }

    /// Kernel samples `K(k dz)` for `k = 0..len`.
    pub fn sampled(&self, dz: f64, len: usize) -> Result<Vec<f64>> {
        (0..len).map(|k| self.eval(k as f64 * dz)).collect()
    }
}
