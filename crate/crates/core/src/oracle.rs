//! Monte-Carlo route to the averaged moments.
//!
//! For a fixed pump phase history the field equations are linear in
//! `(a, a^dag)`, so every realization is an exact Bogoliubov map
//! `a(z) = mu a(0) + nu a^dag(0)`. Vacuum moments of each realization are
//! then closed-form in `(mu, nu)` and averaging them over Wiener phase
//! paths gives an estimate of the averaged moment system that never uses
//! its equations.
//!
//! Paths are reproducible: path `k` of seed `s` is drawn from ChaCha8
//! seeded with `s` on stream `k`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::SiteMatrix;
use crate::moments::MomentState;
use crate::params::{Case, SimParams};
use crate::C64;

/// Largest lattice accepted by the oracle.
pub const MAX_ORACLE_SITES: usize = 41;

/// Largest tolerated deviation from the symplectic conditions.
pub const SYMPLECTIC_TOLERANCE: f64 = 1e-6;

const PATHS_PER_CHUNK: usize = 64;

const I: C64 = C64::new(0.0, 1.0);

/// Pump phase sampled at `z = k * dz` (`phi`) and at the step midpoints
/// `z = (k + 1/2) * dz` (`mid`).
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePath {
    pub dz: f64,
    pub phi: Vec<f64>,
    pub mid: Vec<f64>,
}

impl PhasePath {
    pub fn z_max(&self) -> f64 {
        (self.phi.len() - 1) as f64 * self.dz
    }

    pub fn steps(&self) -> usize {
        self.phi.len() - 1
    }

    pub fn last(&self) -> f64 {
        *self.phi.last().expect("paths hold at least phi(0)")
    }
}

fn path_steps(dz: f64, z_max: f64) -> Result<usize> {
    if !(dz.is_finite() && dz > 0.0) {
        return Err(Error::InvalidParams(format!("path step must be positive, got {dz}")));
    }
    if !(z_max.is_finite() && z_max >= 0.0) {
        return Err(Error::InvalidParams(format!("path length must be finite and >= 0, got {z_max}")));
    }
    Ok((z_max / dz).round() as usize)
}

/// Path number `index` of the family generated by `seed`.
pub fn phase_path(gamma: f64, dz: f64, z_max: f64, seed: u64, index: u64) -> Result<PhasePath> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidParams(format!("gamma must be finite and >= 0, got {gamma}")));
    }
    let steps = path_steps(dz, z_max)?;
    let mut phi = Vec::with_capacity(steps + 1);
    let mut mid = Vec::with_capacity(steps);
    phi.push(0.0);
    if gamma == 0.0 {
        phi.resize(steps + 1, 0.0);
        mid.resize(steps, 0.0);
        return Ok(PhasePath { dz, phi, mid });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    // Half-step increments have variance 2 gamma (dz / 2).
    let half = Normal::new(0.0, (gamma * dz).sqrt()).map_err(|e| Error::InvalidParams(e.to_string()))?;
    let mut acc = 0.0;
    for _ in 0..steps {
        acc += half.sample(&mut rng);
        mid.push(acc);
        acc += half.sample(&mut rng);
        phi.push(acc);
    }
    Ok(PhasePath { dz, phi, mid })
}

/// First path of the family generated by `seed`.
pub fn sample_phase_path(gamma: f64, dz: f64, z_max: f64, seed: u64) -> Result<PhasePath> {
    phase_path(gamma, dz, z_max, seed, 0)
}

/// `a(z) = mu a(0) + nu a^dag(0)` over all modes: the guides in the
/// degenerate case, the `+w` guides followed by the `-w` guides otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct BogoliubovPropagator {
    pub mu: DMatrix<C64>,
    pub nu: DMatrix<C64>,
    pub z: f64,
}

impl BogoliubovPropagator {
    pub fn identity(modes: usize) -> Self {
        BogoliubovPropagator { mu: DMatrix::identity(modes, modes), nu: DMatrix::zeros(modes, modes), z: 0.0 }
    }

    pub fn modes(&self) -> usize {
        self.mu.nrows()
    }

    /// Largest entry of `mu mu^dag - nu nu^dag - 1` and `mu nu^T - nu mu^T`.
    pub fn symplectic_deviation(&self) -> f64 {
        let k = self.modes();
        let unit = &self.mu * self.mu.adjoint() - &self.nu * self.nu.adjoint() - DMatrix::<C64>::identity(k, k);
        let sym = &self.mu * self.nu.transpose() - &self.nu * self.mu.transpose();
        unit.iter().chain(sym.iter()).map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `<a_i^dag a_j>` for vacuum input.
    pub fn normal_moments(&self) -> DMatrix<C64> {
        self.nu.conjugate() * self.nu.transpose()
    }

    /// `<a_i a_j>` for vacuum input.
    pub fn anomalous_moments(&self) -> DMatrix<C64> {
        &self.mu * self.nu.transpose()
    }
}

struct Layout {
    sites: usize,
    blocks: usize,
}

impl Layout {
    fn new(params: &SimParams) -> Self {
        let blocks = match params.case {
            Case::Degenerate => 1,
            Case::General => 2,
        };
        Layout { sites: params.n_sites, blocks }
    }

    fn modes(&self) -> usize {
        self.sites * self.blocks
    }

    // Column-major derivative of (mu, nu) with pump factor `pump = i g e^{i phi}`.
    fn rhs(&self, c_s: f64, pump: C64, mu: &[C64], nu: &[C64], d_mu: &mut [C64], d_nu: &mut [C64]) {
        let k = self.modes();
        let n = self.sites;
        let hop = I * c_s;
        for (x, out) in [(mu, &mut *d_mu), (nu, &mut *d_nu)] {
            for (col, col_out) in x.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
                col_out[0] = hop * col[1];
                for (o, w) in col_out[1..n - 1].iter_mut().zip(col.windows(3)) {
                    *o = hop * (w[0] + w[2]);
                }
                col_out[n - 1] = hop * col[n - 2];
            }
        }
        let c = n / 2;
        let (b, partner) = if self.blocks == 1 { (c, c) } else { (c, n + c) };
        for col in 0..k {
            let at = col * k;
            d_mu[at + b] += pump * nu[at + partner].conj();
            d_nu[at + b] += pump * mu[at + partner].conj();
            if partner != b {
                d_mu[at + partner] += pump * nu[at + b].conj();
                d_nu[at + partner] += pump * mu[at + b].conj();
            }
        }
    }
}

fn offset(out: &mut [C64], x: &[C64], d: &[C64], h: f64) {
    for ((o, x), d) in out.iter_mut().zip(x).zip(d) {
        *o = x + d * h;
    }
}

fn combine(x: &mut [C64], k: [&mut Vec<C64>; 4], h: f64) {
    let [k1, k2, k3, k4] = k;
    for ((((x, a), b), c), d) in x.iter_mut().zip(k1.iter()).zip(k2.iter()).zip(k3.iter()).zip(k4.iter()) {
        *x += (a + (b + c) * 2.0 + d) * (h / 6.0);
    }
}

fn check_oracle_params(params: &SimParams) -> Result<()> {
    params.validate()?;
    if params.n_sites > MAX_ORACLE_SITES {
        return Err(Error::InvalidParams(format!(
            "oracle supports at most {MAX_ORACLE_SITES} sites, got {}",
            params.n_sites
        )));
    }
    Ok(())
}

/// RK4 integration of the Bogoliubov coefficients along `path`. The middle
/// stages use the sampled midpoint phase, so the mean pump factor over a
/// step is exact to second order in `gamma * dz`. On noisy paths the
/// symplectic defect grows like `gamma * dz^2`.
pub fn propagate_bogoliubov(path: &PhasePath, params: &SimParams) -> Result<BogoliubovPropagator> {
    let prop = propagate_unchecked(path, params)?;
    let deviation = prop.symplectic_deviation();
    if !(deviation <= SYMPLECTIC_TOLERANCE) {
        return Err(Error::SymplecticViolation { deviation });
    }
    Ok(prop)
}

fn propagate_unchecked(path: &PhasePath, params: &SimParams) -> Result<BogoliubovPropagator> {
    check_oracle_params(params)?;
    if (path.dz - params.dz).abs() > 1e-12 * params.dz {
        return Err(Error::InvalidParams(format!("path step {} differs from dz = {}", path.dz, params.dz)));
    }
    let layout = Layout::new(params);
    let k = layout.modes();
    let h = params.dz;
    let mut mu: Vec<C64> = DMatrix::<C64>::identity(k, k).as_slice().to_vec();
    let mut nu = vec![C64::new(0.0, 0.0); k * k];
    let mut stages = vec![vec![C64::new(0.0, 0.0); k * k]; 8];
    let mut tmp_mu = vec![C64::new(0.0, 0.0); k * k];
    let mut tmp_nu = vec![C64::new(0.0, 0.0); k * k];
    let pump = |phi: f64| I * params.g * C64::from_polar(1.0, phi);

    for step in 0..path.steps() {
        let (p0, p1) = (path.phi[step], path.phi[step + 1]);
        let mid = pump(path.mid[step]);
        let [k1m, k1n, k2m, k2n, k3m, k3n, k4m, k4n] = stages.as_mut_slice() else { unreachable!() };
        layout.rhs(params.c_s, pump(p0), &mu, &nu, k1m, k1n);
        offset(&mut tmp_mu, &mu, k1m, 0.5 * h);
        offset(&mut tmp_nu, &nu, k1n, 0.5 * h);
        layout.rhs(params.c_s, mid, &tmp_mu, &tmp_nu, k2m, k2n);
        offset(&mut tmp_mu, &mu, k2m, 0.5 * h);
        offset(&mut tmp_nu, &nu, k2n, 0.5 * h);
        layout.rhs(params.c_s, mid, &tmp_mu, &tmp_nu, k3m, k3n);
        offset(&mut tmp_mu, &mu, k3m, h);
        offset(&mut tmp_nu, &nu, k3n, h);
        layout.rhs(params.c_s, pump(p1), &tmp_mu, &tmp_nu, k4m, k4n);
        combine(&mut mu, [k1m, k2m, k3m, k4m], h);
        combine(&mut nu, [k1n, k2n, k3n, k4n], h);
    }
    if mu.iter().chain(&nu).any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::NonFinite { z: path.z_max(), detail: "Bogoliubov coefficients".into() });
    }
    Ok(BogoliubovPropagator { mu: DMatrix::from_vec(k, k, mu), nu: DMatrix::from_vec(k, k, nu), z: path.z_max() })
}

/// Moment components of one realization, in the storage order of the
/// moment state for `params.case`.
pub fn realization_moments(prop: &BogoliubovPropagator, phi: f64, params: &SimParams) -> Vec<SiteMatrix> {
    let n = params.n_sites;
    let normal = prop.normal_moments();
    let anomalous = prop.anomalous_moments();
    let (e1, e2) = (C64::from_polar(1.0, phi), C64::from_polar(1.0, 2.0 * phi));
    match params.case {
        Case::Degenerate => {
            let q11 = SiteMatrix::from_fn(n, |i, j| normal[(i, j)]);
            let q21 = SiteMatrix::from_fn(n, |i, j| anomalous[(i, j)]);
            vec![
                q11.clone(),
                SiteMatrix::from_fn(n, |i, j| q21[(i, j)] * e1.conj()),
                q21.clone(),
                SiteMatrix::from_fn(n, |i, j| q11[(i, j)] * e1),
                SiteMatrix::from_fn(n, |i, j| q21[(i, j)].conj() * e2),
            ]
        }
        Case::General => {
            let u11 = SiteMatrix::from_fn(n, |i, j| normal[(i, j)]);
            let u12 = SiteMatrix::from_fn(n, |i, j| normal[(n + i, n + j)]);
            let u21 = SiteMatrix::from_fn(n, |i, j| anomalous[(i, n + j)]);
            vec![
                u11.clone(),
                u12.clone(),
                SiteMatrix::from_fn(n, |i, j| u21[(i, j)] * e1.conj()),
                u21.clone(),
                SiteMatrix::from_fn(n, |i, j| u11[(i, j)] * e1),
                SiteMatrix::from_fn(n, |i, j| u12[(i, j)] * e1),
                SiteMatrix::from_fn(n, |i, j| u21[(i, j)].conj() * e2),
            ]
        }
    }
}

// Count, mean and sum of squared deviations per scalar (Chan et al.).
#[derive(Debug, Clone)]
struct Moments1 {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments1 {
    fn new(len: usize) -> Self {
        Moments1 { count: 0.0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    fn push(&mut self, x: impl Iterator<Item = f64>) {
        self.count += 1.0;
        for ((m, s), v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / self.count;
            *s += d * (v - *m);
        }
    }

    fn merge(&mut self, other: &Moments1) {
        if other.count == 0.0 {
            return;
        }
        let total = self.count + other.count;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * other.count / total;
            self.m2[i] += other.m2[i] + d * d * self.count * other.count / total;
        }
        self.count = total;
    }
}

fn flatten(parts: &[SiteMatrix]) -> impl Iterator<Item = f64> + '_ {
    parts.iter().flat_map(|p| p.as_slice().iter().flat_map(|v| [v.re, v.im]))
}

/// Ensemble mean of every moment component with per-entry standard errors.
///
/// `std_err` stores the standard error of the real part in `re` and of the
/// imaginary part in `im`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMoments {
    pub case: Case,
    pub z: f64,
    pub paths: usize,
    pub seed: u64,
    pub mean: Vec<SiteMatrix>,
    pub std_err: Vec<SiteMatrix>,
}

/// Averages the moments of `paths` realizations to distance `z`.
///
/// Paths are processed in fixed chunks and the chunk statistics merged in
/// path order, so the result does not depend on the number of workers.
/// With `gamma = 0` every path is the same deterministic realization, which
/// is computed once and reported with zero standard error.
pub fn ensemble_moments(params: &SimParams, z: f64, paths: usize, seed: u64) -> Result<EnsembleMoments> {
    check_oracle_params(params)?;
    if paths < 2 {
        return Err(Error::InvalidParams(format!("an ensemble needs at least 2 paths, got {paths}")));
    }
    let n = params.n_sites;
    let components = match params.case {
        Case::Degenerate => 5,
        Case::General => 7,
    };
    let unflatten = |flat: &[f64]| -> Vec<SiteMatrix> {
        flat.chunks_exact(2 * n * n)
            .map(|c| SiteMatrix::from_fn(n, |i, j| C64::new(c[2 * (i * n + j)], c[2 * (i * n + j) + 1])))
            .collect()
    };
    let realize = |index: u64| -> Result<Vec<SiteMatrix>> {
        let path = phase_path(params.gamma, params.dz, z, seed, index)?;
        let prop = propagate_bogoliubov(&path, params)?;
        Ok(realization_moments(&prop, path.last(), params))
    };

    if params.gamma == 0.0 {
        let mean = realize(0)?;
        let zero = vec![SiteMatrix::zeros(n); components];
        return Ok(EnsembleMoments { case: params.case, z, paths, seed, mean, std_err: zero });
    }

    let len = components * n * n * 2;
    let chunks: Vec<Result<Moments1>> = (0..paths.div_ceil(PATHS_PER_CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut acc = Moments1::new(len);
            let start = chunk * PATHS_PER_CHUNK;
            for index in start..(start + PATHS_PER_CHUNK).min(paths) {
                acc.push(flatten(&realize(index as u64)?));
            }
            Ok(acc)
        })
        .collect();
    let mut total = Moments1::new(len);
    for chunk in chunks {
        total.merge(&chunk?);
    }
    let se: Vec<f64> = total.m2.iter().map(|s| (s / (total.count - 1.0) / total.count).sqrt()).collect();
    Ok(EnsembleMoments { case: params.case, z, paths, seed, mean: unflatten(&total.mean), std_err: unflatten(&se) })
}

/// Outcome of [`EnsembleMoments::compare`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    /// Entries (real or imaginary parts) outside the allowed band.
    pub failures: usize,
    pub checked: usize,
    /// Largest `|difference| / standard error` over entries with nonzero error.
    pub worst_score: f64,
    pub max_abs_diff: f64,
    /// Component name and site indices of the worst entry.
    pub worst_entry: Option<(&'static str, i64, i64)>,
}

impl OracleComparison {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

impl EnsembleMoments {
    /// Checks every real and imaginary part of every entry of `state`
    /// against `mean +/- (sigmas * std_err + slack)`.
    pub fn compare<S: MomentState>(&self, state: &S, sigmas: f64, slack: f64) -> Result<OracleComparison> {
        if S::CASE != self.case || state.components().len() != self.mean.len() {
            return Err(Error::InvalidParams(format!(
                "cannot compare a {} state with a {} ensemble",
                S::CASE,
                self.case
            )));
        }
        let n = self.mean[0].dim();
        if state.n_sites() != n {
            return Err(Error::DimensionMismatch { expected: n, found: state.n_sites() });
        }
        let half = (n / 2) as i64;
        let mut out =
            OracleComparison { failures: 0, checked: 0, worst_score: 0.0, max_abs_diff: 0.0, worst_entry: None };
        for (c, ((ode, mean), se)) in state.components().iter().zip(&self.mean).zip(&self.std_err).enumerate() {
            for i in 0..n {
                for j in 0..n {
                    let d = ode[(i, j)] - mean[(i, j)];
                    let e = se[(i, j)];
                    for (diff, err) in [(d.re.abs(), e.re), (d.im.abs(), e.im)] {
                        out.checked += 1;
                        out.max_abs_diff = out.max_abs_diff.max(diff);
                        if diff > sigmas * err + slack {
                            out.failures += 1;
                        }
                        if err > 0.0 && diff / err > out.worst_score {
                            out.worst_score = diff / err;
                            out.worst_entry = Some((S::COMPONENT_NAMES[c], i as i64 - half, j as i64 - half));
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}
