//! Two-mode covariance matrices and logarithmic negativity.
//!
//! Quadratures are `q = (a + a^dag)/sqrt 2`, `p = i(a^dag - a)/sqrt 2`, so
//! the vacuum variance is 1/2. Single-operator means vanish for vacuum input
//! under linear dynamics; covariance assembly therefore skips the mean
//! subtraction.

use std::ops::ControlFlow;

use nalgebra::{Matrix2, Matrix4};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::moments::{DegenerateMoments, Evolver, GeneralMoments, MomentState};
use crate::params::{site_to_index, Case, SimParams};
use crate::C64;

/// Second moments of a pair of modes `a`, `b`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PairMoments {
    /// `<a^dag a>`
    pub n_a: C64,
    /// `<b^dag b>`
    pub n_b: C64,
    /// `<a^dag b>`
    pub cross_normal: C64,
    /// `<a b>`
    pub cross_anomalous: C64,
    /// `<a a>`
    pub self_a: C64,
    /// `<b b>`
    pub self_b: C64,
}

/// Moments of the pair formed by site labels `(m, n)`; see
/// [`MomentState::pair_modes`] for which modes are paired.
pub fn pair_moments<S: MomentState>(state: &S, m: i64, n: i64) -> Result<PairMoments> {
    let (a, b) = state.pair_modes(m, n)?;
    Ok(mode_pair_moments(state, a, b))
}

pub(crate) fn mode_pair_moments<S: MomentState>(state: &S, a: usize, b: usize) -> PairMoments {
    PairMoments {
        n_a: state.normal(a, a),
        n_b: state.normal(b, b),
        cross_normal: state.normal(a, b),
        cross_anomalous: state.anomalous(a, b),
        self_a: state.anomalous(a, a),
        self_b: state.anomalous(b, b),
    }
}

/// Symmetrised covariance matrix of two modes in `(q_a, p_a, q_b, p_b)` order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovMat4 {
    sigma: Matrix4<f64>,
}

/// Determinants of the blocks of `sigma = [[alpha, gamma], [gamma^T, beta]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymplecticInvariants {
    pub a_det: f64,
    pub b_det: f64,
    pub c_det: f64,
    pub sigma_det: f64,
}

impl CovMat4 {
    /// Validates symmetry, positive diagonal and the uncertainty principle.
    pub fn new(sigma: Matrix4<f64>) -> Result<Self> {
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonPhysical("non-finite entry".into()));
        }
        let scale = sigma.amax().max(1.0);
        let asym = (sigma - sigma.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::NonPhysical(format!("asymmetry {asym:e}")));
        }
        if (0..4).any(|i| sigma[(i, i)] <= 0.0) {
            return Err(Error::NonPhysical("non-positive variance".into()));
        }
        let cov = CovMat4 { sigma: 0.5 * (sigma + sigma.transpose()) };
        let inv = cov.invariants();
        // nu_- >= 1/2 iff det sigma >= 1/16 and
        // (4 nu_+^2 - 1)(nu_-^2 - 1/4) = 4 det sigma - Delta + 1/4 >= 0; this
        // avoids the square root, which is ill-conditioned near pure states.
        let delta = inv.a_det + inv.b_det + 2.0 * inv.c_det;
        let residual = 4.0 * inv.sigma_det - delta + 0.25;
        let tol = 1e-9 + 1e-13 * scale.powi(4);
        let physical =
            residual >= -tol && inv.sigma_det >= 0.0625 - tol && inv.a_det >= 0.25 - tol && inv.b_det >= 0.25 - tol;
        if !physical {
            return Err(Error::NonPhysical(format!(
                "uncertainty residual {residual:e} (nu_- = {}, det alpha = {}, det beta = {})",
                symplectic_pair(delta, inv.sigma_det).1,
                inv.a_det,
                inv.b_det
            )));
        }
        Ok(cov)
    }

    pub fn vacuum() -> Self {
        CovMat4 { sigma: Matrix4::identity() * 0.5 }
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.sigma
    }

    pub fn alpha(&self) -> Matrix2<f64> {
        self.sigma.fixed_view::<2, 2>(0, 0).into_owned()
    }

    pub fn beta(&self) -> Matrix2<f64> {
        self.sigma.fixed_view::<2, 2>(2, 2).into_owned()
    }

    pub fn gamma(&self) -> Matrix2<f64> {
        self.sigma.fixed_view::<2, 2>(0, 2).into_owned()
    }

    pub fn invariants(&self) -> SymplecticInvariants {
        SymplecticInvariants {
            a_det: self.alpha().determinant(),
            b_det: self.beta().determinant(),
            c_det: self.gamma().determinant(),
            sigma_det: self.sigma.determinant(),
        }
    }

    /// Symplectic eigenvalues `(nu_+, nu_-)` of the state itself.
    pub fn symplectic_eigenvalues(&self) -> (f64, f64) {
        let inv = self.invariants();
        symplectic_pair(inv.a_det + inv.b_det + 2.0 * inv.c_det, inv.sigma_det)
    }
}

/// Roots of `nu^4 - delta nu^2 + det = 0`; the small root uses the product
/// form to avoid cancellation on nearly pure states.
fn symplectic_pair(delta: f64, det: f64) -> (f64, f64) {
    let disc = (delta * delta - 4.0 * det).max(0.0);
    let big = 0.5 * (delta + disc.sqrt());
    let small = if big > 0.0 { det / big } else { 0.0 };
    (big.max(0.0).sqrt(), small.max(0.0).sqrt())
}

/// Covariance matrix of a zero-mean Gaussian pair from its second moments.
pub fn covariance_from_moments(m: &PairMoments) -> Result<CovMat4> {
    let (na, nb) = (m.n_a.re, m.n_b.re);
    let (x, y) = (m.cross_normal, m.cross_anomalous);
    let (sa, sb) = (m.self_a, m.self_b);
    #[rustfmt::skip]
    let sigma = Matrix4::new(
        0.5 + na + sa.re, sa.im,            x.re + y.re, x.im + y.im,
        sa.im,            0.5 + na - sa.re, y.im - x.im, x.re - y.re,
        x.re + y.re,      y.im - x.im,      0.5 + nb + sb.re, sb.im,
        x.im + y.im,      x.re - y.re,      sb.im,            0.5 + nb - sb.re,
    );
    CovMat4::new(sigma)
}

/// `E_N = max(0, -log2(2 nu~_-))` with `nu~_-` the smallest symplectic
/// eigenvalue of the partially transposed state.
pub fn log_negativity(sigma: &CovMat4) -> Result<f64> {
    let inv = sigma.invariants();
    let delta = inv.a_det + inv.b_det - 2.0 * inv.c_det;
    let disc = delta * delta - 4.0 * inv.sigma_det;
    if !disc.is_finite() || !delta.is_finite() {
        return Err(Error::NonPhysical("non-finite symplectic invariants".into()));
    }
    if disc < -1e-12 * delta.abs().max(1.0).powi(2) {
        return Err(Error::NonPhysical(format!("negative radicand {disc:e}")));
    }
    if delta <= 0.0 || inv.sigma_det <= 0.0 {
        return Err(Error::NonPhysical(format!("delta = {delta}, det sigma = {}", inv.sigma_det)));
    }
    let (_, nu_minus) = symplectic_pair(delta, inv.sigma_det);
    Ok((-(2.0 * nu_minus).log2()).max(0.0))
}

/// Logarithmic negativity of the pair `(m, n)` in `state`. Modes are taken in
/// lattice order so the result matches [`entanglement_map`] bit for bit.
pub fn pair_log_negativity<S: MomentState>(state: &S, m: i64, n: i64) -> Result<f64> {
    let (a, b) = state.pair_modes(m, n)?;
    let (a, b) = (a.min(b), a.max(b));
    log_negativity(&covariance_from_moments(&mode_pair_moments(state, a, b))?)
}

/// Pairwise logarithmic negativity over every pair of guides at one `z`.
///
/// Degenerate maps pair the single modes of two different guides; the
/// diagonal is zero. General maps pair mode `+w` of guide `m` with mode
/// `-w` of guide `n`, diagonal included.
#[derive(Debug, Clone, PartialEq)]
pub struct EntanglementMap {
    n_sites: usize,
    case: Case,
    z: f64,
    values: Vec<f64>,
}

impl EntanglementMap {
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn case(&self) -> Case {
        self.case
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn half_width(&self) -> i64 {
        (self.n_sites / 2) as i64
    }

    pub fn get(&self, m: i64, n: i64) -> Result<f64> {
        let i = site_to_index(m, self.n_sites)?;
        let j = site_to_index(n, self.n_sites)?;
        Ok(self.values[i * self.n_sites + j])
    }

    /// `(m, n, value)` triples in row-major order over site labels.
    pub fn iter(&self) -> impl Iterator<Item = (i64, i64, f64)> + '_ {
        let h = self.half_width();
        let n = self.n_sites;
        self.values.iter().enumerate().map(move |(k, v)| ((k / n) as i64 - h, (k % n) as i64 - h, *v))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }
}

pub fn entanglement_map<S: MomentState>(state: &S) -> Result<EntanglementMap> {
    let n = state.n_sites();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; n];
            for (j, slot) in row.iter_mut().enumerate() {
                let (a, b) = match S::CASE {
                    Case::Degenerate if j <= i => continue,
                    Case::Degenerate => (i, j),
                    Case::General => (i, n + j),
                };
                let cov = covariance_from_moments(&mode_pair_moments(state, a, b))?;
                *slot = log_negativity(&cov)?;
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mut values: Vec<f64> = rows.into_iter().flatten().collect();
    if S::CASE == Case::Degenerate {
        for i in 0..n {
            for j in 0..i {
                values[i * n + j] = values[j * n + i];
            }
        }
    }
    Ok(EntanglementMap { n_sites: n, case: S::CASE, z: state.z(), values })
}

/// Stopping rule for [`stationary_logneg`]: the value is stationary once
/// its spread over the trailing `window` falls below `rel_tol * value`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateauCriteria {
    pub window: f64,
    pub rel_tol: f64,
    pub sample_every: f64,
    pub z_max: f64,
}

impl Default for PlateauCriteria {
    fn default() -> Self {
        PlateauCriteria { window: 1.0, rel_tol: 1e-4, sample_every: 0.05, z_max: 60.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stationary {
    Plateau { value: f64, z: f64 },
    NonStationary { last_value: f64, z_max: f64 },
}

impl Stationary {
    pub fn value(&self) -> Option<f64> {
        match self {
            Stationary::Plateau { value, .. } => Some(*value),
            Stationary::NonStationary { .. } => None,
        }
    }
}

/// Runs `f` with an evolver over the moment system selected by `params.case`.
macro_rules! with_evolver {
    ($params:expr, |$ev:ident| $body:expr) => {
        match $params.case {
            Case::Degenerate => {
                let mut $ev = Evolver::new(DegenerateMoments::vacuum($params.n_sites), *$params)?;
                $body
            }
            Case::General => {
                let mut $ev = Evolver::new(GeneralMoments::vacuum($params.n_sites), *$params)?;
                $body
            }
        }
    };
}

/// Evolves from vacuum until `E_N(pair)` stops changing.
pub fn stationary_logneg(params: &SimParams, pair: (i64, i64), criteria: &PlateauCriteria) -> Result<Stationary> {
    with_evolver!(params, |ev| stationary_in(&mut ev, pair, criteria))
}

fn stationary_in<S: MomentState>(
    ev: &mut Evolver<S>,
    pair: (i64, i64),
    criteria: &PlateauCriteria,
) -> Result<Stationary> {
    ev.state().pair_modes(pair.0, pair.1)?;
    let mut history: Vec<(f64, f64)> = Vec::new();
    let mut outcome = None;
    let mut failure = None;
    ev.advance_to(criteria.z_max, Some(criteria.sample_every), |s| {
        let e = match pair_log_negativity(s, pair.0, pair.1) {
            Ok(e) => e,
            Err(err) => {
                failure = Some(err);
                return ControlFlow::Break(());
            }
        };
        let z = s.z();
        history.push((z, e));
        if z + 1e-9 >= criteria.window {
            let start = z - criteria.window - 1e-9;
            let window = history.iter().rev().take_while(|(zz, _)| *zz >= start);
            let (lo, hi) = window.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, v)| (lo.min(*v), hi.max(*v)));
            if hi - lo <= criteria.rel_tol * e + 1e-15 {
                outcome = Some(Stationary::Plateau { value: e, z });
                return ControlFlow::Break(());
            }
        }
        ControlFlow::Continue(())
    })?;
    if let Some(err) = failure {
        return Err(err);
    }
    Ok(outcome
        .unwrap_or(Stationary::NonStationary { last_value: history.last().map(|h| h.1).unwrap_or(0.0), z_max: ev.z() }))
}

/// Detection settings for [`survival_distance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalCriteria {
    /// `E_N` at or below this counts as zero.
    pub eps: f64,
    pub sample_every: f64,
    pub z_max: f64,
    /// Distance `E_N` must stay below `eps` before the decay is accepted.
    pub confirm_window: f64,
}

impl Default for SurvivalCriteria {
    fn default() -> Self {
        SurvivalCriteria { eps: 1e-4, sample_every: 0.1, z_max: 200.0, confirm_window: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Survival {
    /// Entanglement vanished; `z_tilde` is the last crossing of `eps`.
    Finite { z_tilde: f64, peak: f64, z_peak: f64 },
    /// Still entangled at `z_max`.
    Unbounded { last_value: f64, z_max: f64 },
    /// Never exceeded `eps` up to `z_max`.
    NeverEntangled,
}

impl Survival {
    pub fn z_tilde(&self) -> Option<f64> {
        match self {
            Survival::Finite { z_tilde, .. } => Some(*z_tilde),
            _ => None,
        }
    }
}

/// Largest distance at which `E_N(pair)` exceeds `eps`.
pub fn survival_distance(params: &SimParams, pair: (i64, i64), criteria: &SurvivalCriteria) -> Result<Survival> {
    with_evolver!(params, |ev| survival_in(&mut ev, pair, criteria))
}

fn survival_in<S: MomentState>(ev: &mut Evolver<S>, pair: (i64, i64), criteria: &SurvivalCriteria) -> Result<Survival> {
    ev.state().pair_modes(pair.0, pair.1)?;
    let eps = criteria.eps;
    let mut prev = (ev.z(), 0.0);
    let mut peak = (0.0, 0.0);
    let mut last_crossing: Option<f64> = None;
    let mut above = false;
    let mut failure = None;
    ev.advance_to(criteria.z_max, Some(criteria.sample_every), |s| {
        let e = match pair_log_negativity(s, pair.0, pair.1) {
            Ok(e) => e,
            Err(err) => {
                failure = Some(err);
                return ControlFlow::Break(());
            }
        };
        let z = s.z();
        if e > peak.0 {
            peak = (e, z);
        }
        if e > eps {
            above = true;
            last_crossing = None;
        } else if above {
            above = false;
            // linear interpolation of the downward crossing
            let (z0, e0) = prev;
            let t = if e0 > e { (e0 - eps) / (e0 - e) } else { 1.0 };
            last_crossing = Some(z0 + t * (z - z0));
        }
        prev = (z, e);
        match last_crossing {
            Some(zc) if z - zc >= criteria.confirm_window => ControlFlow::Break(()),
            _ => ControlFlow::Continue(()),
        }
    })?;
    if let Some(err) = failure {
        return Err(err);
    }
    Ok(match (above, last_crossing) {
        (true, _) => Survival::Unbounded { last_value: prev.1, z_max: ev.z() },
        (false, Some(z_tilde)) => Survival::Finite { z_tilde, peak: peak.0, z_peak: peak.1 },
        (false, None) => Survival::NeverEntangled,
    })
}
