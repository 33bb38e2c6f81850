//! Single-guide reduction of the lattice.
//!
//! Eliminating every unpumped guide from the classical field equations
//! leaves a closed equation for the central amplitude,
//!
//! `a_0'(z) = -2 C_s^2 int_0^z K(z - z') a_0(z') dz' + i g a_0^*(z)`,
//!
//! with `K` the [`MemoryKernel`]. Initial amplitudes on the other guides
//! would add a source term; all checks here start from `a_n(0) = delta_n0`
//! where that source vanishes.

use crate::bessel::MemoryKernel;
use crate::error::{Error, Result};
use crate::params::SimParams;
use crate::C64;

const I: C64 = C64::new(0.0, 1.0);

fn field_rhs(a: &[C64], c_s: f64, g: f64, out: &mut [C64]) {
    let n = a.len();
    for k in 0..n {
        let left = if k > 0 { a[k - 1] } else { C64::new(0.0, 0.0) };
        let right = if k + 1 < n { a[k + 1] } else { C64::new(0.0, 0.0) };
        out[k] = I * c_s * (left + right);
    }
    let c = n / 2;
    out[c] += I * g * a[c].conj();
}

/// Classical field of the lattice, `a_n' = i C_s (a_{n-1} + a_{n+1}) + i g delta_n0 a_0^*`,
/// integrated with RK4 at `params.dz`.
#[derive(Debug, Clone)]
pub struct ClassicalField {
    params: SimParams,
    amp: Vec<C64>,
    steps: u64,
    k: [Vec<C64>; 4],
    tmp: Vec<C64>,
}

impl ClassicalField {
    /// Unit amplitude in the pumped guide, zero elsewhere.
    pub fn centred(params: SimParams) -> Result<Self> {
        params.validate()?;
        let n = params.n_sites;
        let mut amp = vec![C64::new(0.0, 0.0); n];
        amp[n / 2] = C64::new(1.0, 0.0);
        let zero = vec![C64::new(0.0, 0.0); n];
        Ok(Self { params, amp, steps: 0, k: [zero.clone(), zero.clone(), zero.clone(), zero.clone()], tmp: zero })
    }

    pub fn z(&self) -> f64 {
        self.steps as f64 * self.params.dz
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amp
    }

    pub fn centre(&self) -> C64 {
        self.amp[self.amp.len() / 2]
    }

    /// `a_0'` at the current position.
    pub fn centre_derivative(&self) -> C64 {
        let c = self.amp.len() / 2;
        I * self.params.c_s * (self.amp[c - 1] + self.amp[c + 1]) + I * self.params.g * self.amp[c].conj()
    }

    pub fn step(&mut self) {
        let (c_s, g, h) = (self.params.c_s, self.params.g, self.params.dz);
        let [k1, k2, k3, k4] = &mut self.k;
        field_rhs(&self.amp, c_s, g, k1);
        for ((t, a), d) in self.tmp.iter_mut().zip(&self.amp).zip(k1.iter()) {
            *t = a + d * (0.5 * h);
        }
        field_rhs(&self.tmp, c_s, g, k2);
        for ((t, a), d) in self.tmp.iter_mut().zip(&self.amp).zip(k2.iter()) {
            *t = a + d * (0.5 * h);
        }
        field_rhs(&self.tmp, c_s, g, k3);
        for ((t, a), d) in self.tmp.iter_mut().zip(&self.amp).zip(k3.iter()) {
            *t = a + d * h;
        }
        field_rhs(&self.tmp, c_s, g, k4);
        for (i, a) in self.amp.iter_mut().enumerate() {
            *a += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0);
        }
        self.steps += 1;
    }

    fn steps_for(&self, z: f64) -> Result<u64> {
        if !(z.is_finite() && z >= 0.0) {
            return Err(Error::InvalidParams(format!("propagation distance must be finite and >= 0, got {z}")));
        }
        Ok((z / self.params.dz).round() as u64)
    }
}

/// Lattice amplitudes at `z` from `a_n(0) = delta_n0`. With `g = 0` this is
/// `a_n(z) = i^n J_n(2 C_s z)` until the edges are reached.
pub fn lattice_amplitude_green(params: &SimParams, z: f64) -> Result<Vec<C64>> {
    let mut field = ClassicalField::centred(*params)?;
    for _ in 0..field.steps_for(z)? {
        field.step();
    }
    Ok(field.amp)
}

/// Trapezoid approximation of `int_0^{z_k} K(z_k - z') f(z') dz'` for every
/// grid point `k`, with `kernel[j] = K(j dz)`.
pub fn trapezoid_memory(kernel: &[f64], f: &[C64], dz: f64) -> Vec<C64> {
    (0..f.len())
        .map(|k| {
            if k == 0 {
                return C64::new(0.0, 0.0);
            }
            let mut acc = 0.5 * (kernel[k] * f[0] + kernel[0] * f[k]);
            for j in 1..k {
                acc += kernel[k - j] * f[j];
            }
            acc * dz
        })
        .collect()
}

/// Largest violation on the `dz` grid up to `z_max` of the closed central
/// equation by the lattice solution started from `delta_n0`.
pub fn memory_identity_residual(params: &SimParams, z_max: f64) -> Result<f64> {
    let mut field = ClassicalField::centred(*params)?;
    let steps = field.steps_for(z_max)? as usize;
    let mut a0 = Vec::with_capacity(steps + 1);
    let mut d0 = Vec::with_capacity(steps + 1);
    a0.push(field.centre());
    d0.push(field.centre_derivative());
    for _ in 0..steps {
        field.step();
        a0.push(field.centre());
        d0.push(field.centre_derivative());
    }
    let (c_s, g, dz) = (params.c_s, params.g, params.dz);
    let memory = if c_s > 0.0 {
        let kernel = MemoryKernel::new(c_s)?.sampled(dz, steps + 1)?;
        trapezoid_memory(&kernel, &a0, dz)
    } else {
        vec![C64::new(0.0, 0.0); steps + 1]
    };
    Ok((0..=steps).map(|k| (d0[k] - I * g * a0[k].conj() + 2.0 * c_s * c_s * memory[k]).norm()).fold(0.0, f64::max))
}

/// Central amplitude of the reduced model on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTrajectory {
    pub dz: f64,
    pub amplitude: Vec<C64>,
}

impl ReducedTrajectory {
    pub fn z_at(&self, k: usize) -> f64 {
        k as f64 * self.dz
    }

    /// `|a_0(z)|^2` on the grid.
    pub fn intensity(&self) -> Vec<f64> {
        self.amplitude.iter().map(|a| a.norm_sqr()).collect()
    }
}

/// Integrates the reduced equation with pump from `a_0(0) = 1` using Heun's
/// predictor-corrector and trapezoid memory quadrature.
pub fn reduced_parametric_growth(params: &SimParams, z_max: f64) -> Result<ReducedTrajectory> {
    params.validate()?;
    if params.gamma != 0.0 {
        return Err(Error::InvalidParams("the reduced model needs a coherent pump (gamma = 0)".into()));
    }
    if !(z_max.is_finite() && z_max >= 0.0) {
        return Err(Error::InvalidParams(format!("z_max must be finite and >= 0, got {z_max}")));
    }
    let (c_s, g, dz) = (params.c_s, params.g, params.dz);
    let steps = (z_max / dz).round() as usize;
    let kernel = if c_s > 0.0 { MemoryKernel::new(c_s)?.sampled(dz, steps + 1)? } else { vec![0.0; steps + 1] };
    let w = 2.0 * c_s * c_s;

    // Memory integral at grid point k with `last` standing in for a_k.
    let memory = |a: &[C64], k: usize, last: C64| -> C64 {
        if k == 0 {
            return C64::new(0.0, 0.0);
        }
        let mut acc = 0.5 * (kernel[k] * a[0] + kernel[0] * last);
        for j in 1..k {
            acc += kernel[k - j] * a[j];
        }
        acc * dz
    };
    let force = |mem: C64, a: C64| -> C64 { -w * mem + I * g * a.conj() };

    let mut a = Vec::with_capacity(steps + 1);
    a.push(C64::new(1.0, 0.0));
    let mut f_prev = force(C64::new(0.0, 0.0), a[0]);
    for k in 1..=steps {
        let predicted = a[k - 1] + f_prev * dz;
        let f_pred = force(memory(&a, k, predicted), predicted);
        let corrected = a[k - 1] + (f_prev + f_pred) * (0.5 * dz);
        if !(corrected.re.is_finite() && corrected.im.is_finite()) {
            return Err(Error::NonFinite { z: k as f64 * dz, detail: "reduced central amplitude".into() });
        }
        a.push(corrected);
        f_prev = force(memory(&a, k, corrected), corrected);
    }
    Ok(ReducedTrajectory { dz, amplitude: a })
}
