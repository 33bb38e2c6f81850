//! Averaged second moments of the signal field and their evolution along
//! the array.
//!
//! Both moment systems are closed and linear. Writing `L` for nearest
//! neighbour transport, each component obeys
//! `X' = iC_s (L X +/- X L) - k^2 gamma X + (pump terms on row/column 0)`,
//! where `k` is the power of the pump phase factor dressing the moment.
//! Pump terms only touch the row and column of the pumped guide, so a
//! derivative costs `O(N^2)`.

use std::ops::ControlFlow;

use crate::error::{Error, Result};
use crate::lattice::SiteMatrix;
use crate::params::{site_to_index, Case, SimParams};
use crate::C64;

/// Common interface of the degenerate and general moment states.
pub trait MomentState: Clone + Send + Sync {
    const CASE: Case;

    /// Names of the stored components, in storage order.
    const COMPONENT_NAMES: &'static [&'static str];

    /// Vacuum input state: every stored moment vanishes.
    fn vacuum(n_sites: usize) -> Self;

    fn z(&self) -> f64;
    fn set_z(&mut self, z: f64);
    fn n_sites(&self) -> usize;
    fn components(&self) -> &[SiteMatrix];
    fn components_mut(&mut self) -> &mut [SiteMatrix];

    /// Writes `d(state)/dz` evaluated at `self.z()` into `out`, for the
    /// rows and columns inside `ws.window` and the components listed by
    /// [`MomentState::independent_components`].
    fn derivative_into(&self, params: &SimParams, ws: &Workset, out: &mut Self);

    /// Storage indices of the components that are integrated. With the
    /// coherent reduction the remaining ones follow from the redundancy
    /// identities of a phase-stable pump.
    fn independent_components(reduced: bool) -> &'static [usize];

    /// Rebuilds the redundant components from the independent ones using
    /// the coherent-pump identities.
    fn restore_redundant(&mut self);

    /// Normally ordered `<a_m^dag a_n>` of the (signal) modes.
    fn intensity(&self) -> &SiteMatrix;

    /// Number of bosonic modes described: `N` (degenerate) or `2N` (general).
    fn mode_count(&self) -> usize;

    /// `<a_i^dag a_j>` over mode indices.
    fn normal(&self, i: usize, j: usize) -> C64;

    /// `<a_i a_j>` over mode indices.
    fn anomalous(&self, i: usize, j: usize) -> C64;

    /// Mode indices of the pair formed by site labels `(m, n)`.
    ///
    /// Degenerate: the single modes of guides `m` and `n` (which must
    /// differ). General: mode `+w` of guide `m` and mode `-w` of guide `n`.
    fn pair_modes(&self, m: i64, n: i64) -> Result<(usize, usize)>;
}

macro_rules! component_accessors {
    ($($name:ident => $idx:expr),* $(,)?) => {
        $(
            pub fn $name(&self) -> &SiteMatrix {
                &self.parts[$idx]
            }
        )*
    };
}

/// Moment sets of the zero-sideband case.
///
/// | component | moment |
/// |-----------|--------|
/// | `q11` | `<b_m^dag b_n>` |
/// | `q12` | `<b_m b_n e^{-i phi}>` |
/// | `q21` | `<b_m b_n>` |
/// | `q22` | `<b_m^dag b_n e^{i phi}>` |
/// | `q23` | `<b_m^dag b_n^dag e^{2i phi}>` |
#[derive(Debug, Clone, PartialEq)]
pub struct DegenerateMoments {
    pub(crate) parts: [SiteMatrix; 5],
    pub(crate) z: f64,
}

impl DegenerateMoments {
    component_accessors!(q11 => 0, q12 => 1, q21 => 2, q22 => 3, q23 => 4);

    pub fn from_parts(parts: [SiteMatrix; 5], z: f64) -> Result<Self> {
        check_square_parts(&parts)?;
        Ok(DegenerateMoments { parts, z })
    }

    pub fn parts_mut(&mut self) -> &mut [SiteMatrix; 5] {
        &mut self.parts
    }
}

/// Moment sets of the non-degenerate case, `b` the `+w` and `c` the `-w`
/// sideband of each guide.
///
/// | component | moment |
/// |-----------|--------|
/// | `u11` | `<b_m^dag b_n>` |
/// | `u12` | `<c_m^dag c_n>` |
/// | `u13` | `<b_m c_n e^{-i phi}>` |
/// | `u21` | `<b_m c_n>` |
/// | `u22` | `<b_m^dag b_n e^{i phi}>` |
/// | `u23` | `<c_m^dag c_n e^{i phi}>` |
/// | `u24` | `<b_m^dag c_n^dag e^{2i phi}>` |
///
/// `<b^dag c>`, `<b b>`, `<c c>` and their dressed variants stay exactly
/// zero from vacuum input and are not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralMoments {
    pub(crate) parts: [SiteMatrix; 7],
    pub(crate) z: f64,
}

impl GeneralMoments {
    component_accessors!(u11 => 0, u12 => 1, u13 => 2, u21 => 3, u22 => 4, u23 => 5, u24 => 6);

    pub fn from_parts(parts: [SiteMatrix; 7], z: f64) -> Result<Self> {
        check_square_parts(&parts)?;
        Ok(GeneralMoments { parts, z })
    }

    pub fn parts_mut(&mut self) -> &mut [SiteMatrix; 7] {
        &mut self.parts
    }
}

fn check_square_parts(parts: &[SiteMatrix]) -> Result<()> {
    let n = parts[0].dim();
    if n < 3 || n.is_multiple_of(2) {
        return Err(Error::InvalidParams(format!("moment matrices must be odd-sized, got {n}")));
    }
    for p in parts {
        if p.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: p.dim() });
        }
    }
    Ok(())
}

/// Either moment state, as produced by [`initial_vacuum`].
#[derive(Debug, Clone, PartialEq)]
pub enum Moments {
    Degenerate(DegenerateMoments),
    General(GeneralMoments),
}

impl Moments {
    pub fn z(&self) -> f64 {
        match self {
            Moments::Degenerate(s) => s.z(),
            Moments::General(s) => s.z(),
        }
    }

    pub fn components(&self) -> &[SiteMatrix] {
        match self {
            Moments::Degenerate(s) => s.components(),
            Moments::General(s) => s.components(),
        }
    }
}

/// Vacuum input for the moment system selected by `params.case`.
pub fn initial_vacuum(params: &SimParams) -> Moments {
    match params.case {
        Case::Degenerate => Moments::Degenerate(DegenerateMoments::vacuum(params.n_sites)),
        Case::General => Moments::General(GeneralMoments::vacuum(params.n_sites)),
    }
}

const I: C64 = C64::new(0.0, 1.0);

/// Region of the moment matrices touched by a derivative evaluation.
///
/// Rows and columns outside `window` must hold zeros; with
/// `coherent_reduction` only the independent components are read and
/// written, which is exact when `gamma = 0` and the redundancy identities
/// hold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workset {
    pub window: std::ops::Range<usize>,
    pub coherent_reduction: bool,
}

impl Workset {
    pub fn full(n_sites: usize) -> Self {
        Workset { window: 0..n_sites, coherent_reduction: false }
    }
}

impl MomentState for DegenerateMoments {
    const CASE: Case = Case::Degenerate;
    const COMPONENT_NAMES: &'static [&'static str] = &["q11", "q12", "q21", "q22", "q23"];

    fn vacuum(n_sites: usize) -> Self {
        DegenerateMoments { parts: std::array::from_fn(|_| SiteMatrix::zeros(n_sites)), z: 0.0 }
    }

    fn z(&self) -> f64 {
        self.z
    }

    fn set_z(&mut self, z: f64) {
        self.z = z;
    }

    fn n_sites(&self) -> usize {
        self.parts[0].dim()
    }

    fn components(&self) -> &[SiteMatrix] {
        &self.parts
    }

    fn components_mut(&mut self) -> &mut [SiteMatrix] {
        &mut self.parts
    }

    fn derivative_into(&self, p: &SimParams, ws: &Workset, out: &mut Self) {
        let ic = I * p.c_s;
        let red = ws.coherent_reduction;
        let w = ws.window.clone();
        let [q11, q12, q21, q22, q23] = &self.parts;
        // With a coherent pump q12 = q21, q22 = q11 and q23 = conj(q21).
        let (q12, q22) = if red { (q21, q11) } else { (q12, q22) };
        let q23 = |i: usize, j: usize| if red { q21[(i, j)].conj() } else { q23[(i, j)] };
        {
            let [d11, d12, d21, d22, d23] = &mut out.parts;
            SiteMatrix::hop_window_into(q11, d11, ic, -ic, 0.0, w.clone());
            SiteMatrix::hop_window_into(q21, d21, ic, ic, 0.0, w.clone());
            if !red {
                SiteMatrix::hop_window_into(q12, d12, ic, ic, p.gamma, w.clone());
                SiteMatrix::hop_window_into(q22, d22, ic, -ic, p.gamma, w.clone());
                SiteMatrix::hop_window_into(&self.parts[4], d23, -ic, -ic, 4.0 * p.gamma, w.clone());
            }
        }
        out.z = self.z;
        if p.g == 0.0 {
            return;
        }

        let c = self.n_sites() / 2;
        let ig = I * p.g;
        let [d11, d12, d21, d22, d23] = &mut out.parts;
        for k in w {
            // row of the pumped guide (delta_{0m}), then its column (delta_{0n})
            d11[(c, k)] -= ig * q12[(c, k)];
            d21[(c, k)] += ig * q22[(c, k)];
            d11[(k, c)] += ig * q12[(k, c)].conj();
            d21[(k, c)] += ig * q22[(c, k)];
            if !red {
                d12[(c, k)] += ig * q11[(c, k)];
                d22[(c, k)] -= ig * q21[(k, c)];
                d23[(c, k)] -= ig * q22[(k, c)];
                d12[(k, c)] += ig * q11[(c, k)];
                d22[(k, c)] += ig * q23(k, c);
                d23[(k, c)] -= ig * q22[(k, c)];
            }
        }
        let coherence = (-p.gamma * self.z).exp();
        d21[(c, c)] += ig * coherence;
        if !red {
            d12[(c, c)] += ig;
            d23[(c, c)] -= ig * coherence;
        }
    }

    fn independent_components(reduced: bool) -> &'static [usize] {
        if reduced {
            &[0, 2]
        } else {
            &[0, 1, 2, 3, 4]
        }
    }

    fn restore_redundant(&mut self) {
        let [q11, q12, q21, q22, q23] = &mut self.parts;
        q12.as_mut_slice().copy_from_slice(q21.as_slice());
        q22.as_mut_slice().copy_from_slice(q11.as_slice());
        for (d, s) in q23.as_mut_slice().iter_mut().zip(q21.as_slice()) {
            *d = s.conj();
        }
    }

    fn intensity(&self) -> &SiteMatrix {
        self.q11()
    }

    fn mode_count(&self) -> usize {
        self.n_sites()
    }

    fn normal(&self, i: usize, j: usize) -> C64 {
        self.parts[0][(i, j)]
    }

    fn anomalous(&self, i: usize, j: usize) -> C64 {
        self.parts[2][(i, j)]
    }

    fn pair_modes(&self, m: i64, n: i64) -> Result<(usize, usize)> {
        let a = site_to_index(m, self.n_sites())?;
        let b = site_to_index(n, self.n_sites())?;
        if a == b {
            return Err(Error::SelfPair(m));
        }
        Ok((a, b))
    }
}

impl MomentState for GeneralMoments {
    const CASE: Case = Case::General;
    const COMPONENT_NAMES: &'static [&'static str] = &["u11", "u12", "u13", "u21", "u22", "u23", "u24"];

    fn vacuum(n_sites: usize) -> Self {
        GeneralMoments { parts: std::array::from_fn(|_| SiteMatrix::zeros(n_sites)), z: 0.0 }
    }

    fn z(&self) -> f64 {
        self.z
    }

    fn set_z(&mut self, z: f64) {
        self.z = z;
    }

    fn n_sites(&self) -> usize {
        self.parts[0].dim()
    }

    fn components(&self) -> &[SiteMatrix] {
        &self.parts
    }

    fn components_mut(&mut self) -> &mut [SiteMatrix] {
        &mut self.parts
    }

    fn derivative_into(&self, p: &SimParams, ws: &Workset, out: &mut Self) {
        let ic = I * p.c_s;
        let red = ws.coherent_reduction;
        let w = ws.window.clone();
        let [u11, u12, u13, u21, u22, u23, u24] = &self.parts;
        // With a coherent pump u13 = u21, u22 = u11, u23 = u12, u24 = conj(u21).
        let (u13, u22, u23) = if red { (u21, u11, u12) } else { (u13, u22, u23) };
        let u24 = |i: usize, j: usize| if red { u21[(i, j)].conj() } else { u24[(i, j)] };
        {
            let [d11, d12, d13, d21, d22, d23, d24] = &mut out.parts;
            SiteMatrix::hop_window_into(u11, d11, ic, -ic, 0.0, w.clone());
            SiteMatrix::hop_window_into(u12, d12, ic, -ic, 0.0, w.clone());
            SiteMatrix::hop_window_into(u21, d21, ic, ic, 0.0, w.clone());
            if !red {
                SiteMatrix::hop_window_into(u13, d13, ic, ic, p.gamma, w.clone());
                SiteMatrix::hop_window_into(u22, d22, ic, -ic, p.gamma, w.clone());
                SiteMatrix::hop_window_into(u23, d23, ic, -ic, p.gamma, w.clone());
                SiteMatrix::hop_window_into(&self.parts[6], d24, -ic, -ic, 4.0 * p.gamma, w.clone());
            }
        }
        out.z = self.z;
        if p.g == 0.0 {
            return;
        }

        let c = self.n_sites() / 2;
        let ig = I * p.g;
        let [d11, d12, d13, d21, d22, d23, d24] = &mut out.parts;
        for k in w {
            // row of the pumped guide (delta_{0m}), then its column (delta_{0n})
            d11[(c, k)] -= ig * u13[(k, c)];
            d12[(c, k)] -= ig * u13[(c, k)];
            d21[(c, k)] += ig * u23[(c, k)];
            d11[(k, c)] += ig * u13[(k, c)].conj();
            d12[(k, c)] += ig * u13[(c, k)].conj();
            d21[(k, c)] += ig * u22[(c, k)];
            if !red {
                d13[(c, k)] += ig * u12[(c, k)];
                d22[(c, k)] -= ig * u21[(k, c)];
                d23[(c, k)] -= ig * u21[(c, k)];
                d24[(c, k)] -= ig * u23[(k, c)];
                d13[(k, c)] += ig * u11[(c, k)];
                d22[(k, c)] += ig * u24(k, c);
                d23[(k, c)] += ig * u24(c, k);
                d24[(k, c)] -= ig * u22[(k, c)];
            }
        }
        let coherence = (-p.gamma * self.z).exp();
        d21[(c, c)] += ig * coherence;
        if !red {
            d13[(c, c)] += ig;
            d24[(c, c)] -= ig * coherence;
        }
    }

    fn independent_components(reduced: bool) -> &'static [usize] {
        if reduced {
            &[0, 1, 3]
        } else {
            &[0, 1, 2, 3, 4, 5, 6]
        }
    }

    fn restore_redundant(&mut self) {
        let [u11, u12, u13, u21, u22, u23, u24] = &mut self.parts;
        u13.as_mut_slice().copy_from_slice(u21.as_slice());
        u22.as_mut_slice().copy_from_slice(u11.as_slice());
        u23.as_mut_slice().copy_from_slice(u12.as_slice());
        for (d, s) in u24.as_mut_slice().iter_mut().zip(u21.as_slice()) {
            *d = s.conj();
        }
    }

    fn intensity(&self) -> &SiteMatrix {
        self.u11()
    }

    fn mode_count(&self) -> usize {
        2 * self.n_sites()
    }

    fn normal(&self, i: usize, j: usize) -> C64 {
        let n = self.n_sites();
        match (i < n, j < n) {
            (true, true) => self.parts[0][(i, j)],
            (false, false) => self.parts[1][(i - n, j - n)],
            _ => C64::new(0.0, 0.0),
        }
    }

    fn anomalous(&self, i: usize, j: usize) -> C64 {
        let n = self.n_sites();
        match (i < n, j < n) {
            (true, false) => self.parts[3][(i, j - n)],
            (false, true) => self.parts[3][(j, i - n)],
            _ => C64::new(0.0, 0.0),
        }
    }

    fn pair_modes(&self, m: i64, n: i64) -> Result<(usize, usize)> {
        let a = site_to_index(m, self.n_sites())?;
        let b = site_to_index(n, self.n_sites())?;
        Ok((a, self.n_sites() + b))
    }
}

fn check_dims<S: MomentState>(state: &S, params: &SimParams) -> Result<()> {
    if state.n_sites() != params.n_sites {
        return Err(Error::DimensionMismatch { expected: params.n_sites, found: state.n_sites() });
    }
    Ok(())
}

/// `d(state)/dz` of the degenerate system.
pub fn rhs_degenerate(state: &DegenerateMoments, params: &SimParams) -> Result<DegenerateMoments> {
    rhs(state, params)
}

/// `d(state)/dz` of the non-degenerate system.
pub fn rhs_general(state: &GeneralMoments, params: &SimParams) -> Result<GeneralMoments> {
    rhs(state, params)
}

pub fn rhs<S: MomentState>(state: &S, params: &SimParams) -> Result<S> {
    check_dims(state, params)?;
    let mut out = S::vacuum(state.n_sites());
    state.derivative_into(params, &Workset::full(state.n_sites()), &mut out);
    Ok(out)
}

/// One classical RK4 step of length `params.dz` over the full system.
pub fn rk4_step<S: MomentState>(state: &S, params: &SimParams) -> Result<S> {
    let mut ev = Evolver::with_options(state.clone(), *params, EvolverOptions::exhaustive())?;
    ev.step();
    Ok(ev.into_state())
}

/// Exact work-saving measures used by [`Evolver`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvolverOptions {
    /// Integrate only the independent components when `gamma = 0` and the
    /// initial state satisfies the redundancy identities.
    pub coherent_reduction: bool,
    /// Restrict work to the region reachable from the initial support at
    /// the maximal transverse speed `2 C_s`, plus an Airy-tail margin.
    pub light_cone: bool,
}

impl Default for EvolverOptions {
    fn default() -> Self {
        EvolverOptions { coherent_reduction: true, light_cone: true }
    }
}

impl EvolverOptions {
    /// Every component over the whole lattice.
    pub fn exhaustive() -> Self {
        EvolverOptions { coherent_reduction: false, light_cone: false }
    }
}

/// Fixed-step RK4 integrator that owns its state and stage buffers.
///
/// Positions are computed as `z0 + k * dz` so long runs do not accumulate
/// drift in `z`.
pub struct Evolver<S: MomentState> {
    params: SimParams,
    state: S,
    z0: f64,
    steps: u64,
    k: [S; 4],
    stage: S,
    reduced: bool,
    stale: bool,
    light_cone: Option<usize>,
}

/// How often the evolver scans every entry for non-finite values.
const FULL_FINITE_CHECK_EVERY: u64 = 64;

fn support_radius(parts: &[SiteMatrix]) -> usize {
    let n = parts[0].dim();
    let c = n / 2;
    let mut r = 0;
    for m in parts {
        for i in 0..n {
            for j in 0..n {
                if m[(i, j)] != C64::new(0.0, 0.0) {
                    r = r.max(i.abs_diff(c)).max(j.abs_diff(c));
                }
            }
        }
    }
    r
}

impl<S: MomentState> Evolver<S> {
    pub fn new(state: S, params: SimParams) -> Result<Self> {
        Self::with_options(state, params, EvolverOptions::default())
    }

    pub fn with_options(state: S, params: SimParams, options: EvolverOptions) -> Result<Self> {
        params.validate()?;
        check_dims(&state, &params)?;
        let n = state.n_sites();
        let z0 = state.z();
        let reduced = options.coherent_reduction
            && params.gamma == 0.0
            && invariant_deviations(&state).coherent_redundancy == 0.0;
        let light_cone = options.light_cone.then(|| support_radius(state.components()));
        Ok(Evolver {
            params,
            state,
            z0,
            steps: 0,
            k: std::array::from_fn(|_| S::vacuum(n)),
            stage: S::vacuum(n),
            reduced,
            stale: false,
            light_cone,
        })
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    /// Current state with every component populated.
    pub fn state(&mut self) -> &S {
        self.refresh();
        &self.state
    }

    pub fn z(&self) -> f64 {
        self.state.z()
    }

    pub fn into_state(mut self) -> S {
        self.refresh();
        self.state
    }

    /// Whether the coherent reduction is active.
    pub fn is_reduced(&self) -> bool {
        self.reduced
    }

    fn refresh(&mut self) {
        if self.stale {
            self.state.restore_redundant();
            self.stale = false;
        }
    }

    fn workset(&self, z_end: f64) -> Workset {
        let n = self.state.n_sites();
        let c = n / 2;
        let window = match self.light_cone {
            Some(r0) => {
                let spread = (self.params.c_s * (z_end - self.z0)).max(0.0);
                let r = r0 as f64 + 2.0 * spread + 20.0 * spread.cbrt() + 10.0;
                let r = if r >= c as f64 { c } else { r.ceil() as usize };
                c - r..c + r + 1
            }
            None => 0..n,
        };
        Workset { window, coherent_reduction: self.reduced }
    }

    pub fn step(&mut self) {
        let h = self.params.dz;
        let z = self.state.z();
        let ws = self.workset(z + h);
        let comps = S::independent_components(self.reduced);
        let [k1, k2, k3, k4] = &mut self.k;

        self.state.derivative_into(&self.params, &ws, k1);
        stage_from(&mut self.stage, &self.state, 0.5 * h, k1, z + 0.5 * h, &ws, comps);
        self.stage.derivative_into(&self.params, &ws, k2);
        stage_from(&mut self.stage, &self.state, 0.5 * h, k2, z + 0.5 * h, &ws, comps);
        self.stage.derivative_into(&self.params, &ws, k3);
        stage_from(&mut self.stage, &self.state, h, k3, z + h, &ws, comps);
        self.stage.derivative_into(&self.params, &ws, k4);

        let n = self.state.n_sites();
        let (lo, hi) = (ws.window.start, ws.window.end);
        let parts = self.state.components_mut();
        for &idx in comps {
            let (a, b, c, d) = (
                k1.components()[idx].as_slice(),
                k2.components()[idx].as_slice(),
                k3.components()[idx].as_slice(),
                k4.components()[idx].as_slice(),
            );
            let y = parts[idx].as_mut_slice();
            for i in lo..hi {
                for j in i * n + lo..i * n + hi {
                    y[j] += (a[j] + (b[j] + c[j]) * 2.0 + d[j]) * (h / 6.0);
                }
            }
        }
        self.steps += 1;
        self.stale = self.reduced;
        self.state.set_z(self.z0 + self.steps as f64 * h);
    }

    fn check_finite(&self, full: bool) -> Result<()> {
        let n = self.state.n_sites();
        let c = n / 2;
        for &idx in S::independent_components(self.reduced) {
            let m = &self.state.components()[idx];
            let v = m[(c, c)];
            let ok = if full { m.is_finite() } else { v.re.is_finite() && v.im.is_finite() };
            if !ok {
                return Err(Error::NonFinite {
                    z: self.state.z(),
                    detail: format!(
                        "component {}; dz = {} may be too large for g = {}",
                        S::COMPONENT_NAMES[idx],
                        self.params.dz,
                        self.params.g
                    ),
                });
            }
        }
        Ok(())
    }

    /// Number of whole steps needed to reach `z_target`.
    pub fn steps_to(&self, z_target: f64) -> Result<u64> {
        let span = z_target - self.state.z();
        if !(span >= -1e-12 * (1.0 + z_target.abs())) {
            return Err(Error::InvalidParams(format!(
                "target z = {z_target} lies behind the current z = {}",
                self.state.z()
            )));
        }
        Ok((span.max(0.0) / self.params.dz).round() as u64)
    }

    /// Integrates to `z_target` (rounded to whole steps), calling `observer`
    /// every `sample_every` (also rounded to whole steps) and at the end.
    ///
    /// The observer may stop the evolution early by returning
    /// `ControlFlow::Break(())`; the returned flag tells whether it did.
    pub fn advance_to<F>(&mut self, z_target: f64, sample_every: Option<f64>, mut observer: F) -> Result<bool>
    where
        F: FnMut(&S) -> ControlFlow<()>,
    {
        let total = self.steps_to(z_target)?;
        let every = sample_every.map(|s| ((s / self.params.dz).round() as u64).max(1)).unwrap_or(u64::MAX);
        for k in 1..=total {
            self.step();
            let full = k % FULL_FINITE_CHECK_EVERY == 0 || k == total;
            self.check_finite(full)?;
            if k % every == 0 || (k == total && sample_every.is_some()) {
                self.refresh();
                if observer(&self.state).is_break() {
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }
}

fn stage_from<S: MomentState>(stage: &mut S, base: &S, h: f64, slope: &S, z: f64, ws: &Workset, comps: &[usize]) {
    let n = base.n_sites();
    let (lo, hi) = (ws.window.start, ws.window.end);
    for &idx in comps {
        let y = base.components()[idx].as_slice();
        let k = slope.components()[idx].as_slice();
        let dst = stage.components_mut()[idx].as_mut_slice();
        for i in lo..hi {
            for j in i * n + lo..i * n + hi {
                dst[j] = y[j] + k[j] * h;
            }
        }
    }
    stage.set_z(z);
}

/// Integrates `state` to `z_target`, invoking `observer` every
/// `sample_every` units of `z`.
pub fn evolve<S, F>(state: S, params: &SimParams, z_target: f64, sample_every: Option<f64>, observer: F) -> Result<S>
where
    S: MomentState,
    F: FnMut(&S),
{
    let mut observer = observer;
    let mut ev = Evolver::new(state, *params)?;
    ev.advance_to(z_target, sample_every, |s| {
        observer(s);
        ControlFlow::Continue(())
    })?;
    Ok(ev.into_state())
}

/// Mean photon number `I(n, z) = <a_n^dag a_n>` of every guide.
///
/// For the general case this is the `+w` sideband; the `-w` sideband is
/// identical by symmetry of the source terms.
pub fn photon_number_profile<S: MomentState>(state: &S) -> Result<Vec<f64>> {
    state
        .intensity()
        .diagonal()
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let tol = 1e-8 * (1.0 + v.norm());
            if v.im.abs() > tol || v.re < -tol {
                return Err(Error::InvariantViolation(format!(
                    "photon number of storage site {i} is {v}, not a non-negative real"
                )));
            }
            Ok(v.re.max(0.0))
        })
        .collect()
}

/// Largest deviations from the structural invariants of a moment state,
/// each relative to `1 + max |entry|` of the matrices involved.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InvariantDeviations {
    /// Hermiticity of the normally ordered matrices.
    pub hermiticity: f64,
    /// Symmetry of the anomalous degenerate matrices.
    pub symmetry: f64,
    /// Reflection `(m, n) -> (-m, -n)` over every component.
    pub reflection: f64,
    /// Redundancy identities that hold when the pump is coherent.
    pub coherent_redundancy: f64,
}

fn rel_dev(a: &SiteMatrix, b: &SiteMatrix) -> f64 {
    a.max_abs_diff(b) / (1.0 + a.max_abs().max(b.max_abs()))
}

pub fn invariant_deviations<S: MomentState>(state: &S) -> InvariantDeviations {
    let parts = state.components();
    let herm = |m: &SiteMatrix| rel_dev(m, &m.transpose().conj());
    let sym = |m: &SiteMatrix| rel_dev(m, &m.transpose());
    let reflection = parts.iter().map(|m| rel_dev(m, &m.reflected())).fold(0.0, f64::max);
    match S::CASE {
        Case::Degenerate => {
            let [q11, q12, q21, q22, q23] = [&parts[0], &parts[1], &parts[2], &parts[3], &parts[4]];
            InvariantDeviations {
                hermiticity: herm(q11),
                symmetry: sym(q12).max(sym(q21)).max(sym(q23)),
                reflection,
                coherent_redundancy: rel_dev(q12, q21).max(rel_dev(q22, q11)).max(rel_dev(q23, &q21.conj())),
            }
        }
        Case::General => {
            let [u11, u12, u13, u21, u22, u23, u24] =
                [&parts[0], &parts[1], &parts[2], &parts[3], &parts[4], &parts[5], &parts[6]];
            InvariantDeviations {
                hermiticity: herm(u11).max(herm(u12)),
                symmetry: 0.0,
                reflection,
                coherent_redundancy: rel_dev(u13, u21)
                    .max(rel_dev(u22, u11))
                    .max(rel_dev(u23, u12))
                    .max(rel_dev(u24, &u21.conj())),
            }
        }
    }
}
