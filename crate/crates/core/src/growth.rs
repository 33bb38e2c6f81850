//! Growth classification of the central photon number and bisection for
//! the parametric threshold, on the full lattice and on the reduced model.

use std::ops::ControlFlow;

use crate::error::{Error, Result};
use crate::moments::{DegenerateMoments, Evolver, GeneralMoments, MomentState};
use crate::params::{Case, SimParams};
use crate::reduced::reduced_parametric_growth;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Growth {
    Exponential,
    SubExponential,
}

/// Log-linearity test on an intensity curve.
///
/// The log-rate is measured over `[z[0], z[1]]` and `[z[1], z[2]]`, using
/// the running maximum over the preceding `envelope` length to smooth out
/// oscillations. The curve is exponential when the late rate is at least
/// `min_rate` and at least `min_ratio` times the early rate; power-law
/// growth fails the second condition because its log-rate decays as `1/z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthTest {
    pub z: [f64; 3],
    pub envelope: f64,
    pub min_rate: f64,
    pub min_ratio: f64,
}

impl GrowthTest {
    /// Central photon number of the lattice over `z in [2, 10]`.
    pub fn lattice() -> Self {
        GrowthTest { z: [2.0, 6.0, 10.0], envelope: 0.0, min_rate: 0.3, min_ratio: 0.75 }
    }

    /// `|a_0|^2` of the reduced model over `z in [5, 20]`.
    pub fn reduced() -> Self {
        GrowthTest { z: [5.0, 12.5, 20.0], envelope: 4.0, min_rate: 0.3, min_ratio: 0.75 }
    }

    pub fn z_max(&self) -> f64 {
        self.z[2]
    }

    fn validate(&self) -> Result<()> {
        let ok = self.z[0] >= self.envelope
            && self.z[0] < self.z[1]
            && self.z[1] < self.z[2]
            && self.envelope >= 0.0
            && self.min_rate.is_finite()
            && self.min_ratio.is_finite();
        if !ok {
            return Err(Error::InvalidParams(format!("malformed growth test {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthReport {
    pub g: f64,
    pub early_rate: f64,
    pub late_rate: f64,
    pub growth: Growth,
}

/// Classifies samples `intensity[k]` taken at `z = k * dz`.
pub fn classify_samples(test: &GrowthTest, g: f64, dz: f64, intensity: &[f64]) -> Result<GrowthReport> {
    test.validate()?;
    let index = |z: f64| (z / dz).round() as usize;
    if index(test.z[2]) >= intensity.len() {
        return Err(Error::InvalidParams(format!(
            "intensity samples end at z = {}, test needs {}",
            (intensity.len().max(1) - 1) as f64 * dz,
            test.z[2]
        )));
    }
    let log_envelope = |z: f64| -> Result<f64> {
        let peak = intensity[index(z - test.envelope)..=index(z)].iter().copied().fold(0.0, f64::max);
        if !(peak > 0.0 && peak.is_finite()) {
            return Err(Error::NonPhysical(format!("intensity envelope {peak} at z = {z}")));
        }
        Ok(peak.ln())
    };
    let (l0, l1, l2) = (log_envelope(test.z[0])?, log_envelope(test.z[1])?, log_envelope(test.z[2])?);
    let early_rate = (l1 - l0) / (test.z[1] - test.z[0]);
    let late_rate = (l2 - l1) / (test.z[2] - test.z[1]);
    let exponential = late_rate >= test.min_rate && late_rate >= test.min_ratio * early_rate;
    let growth = if exponential { Growth::Exponential } else { Growth::SubExponential };
    Ok(GrowthReport { g, early_rate, late_rate, growth })
}

fn central_intensity<S: MomentState>(state: S, params: &SimParams, z_max: f64) -> Result<Vec<f64>> {
    let c = params.n_sites / 2;
    let mut samples = vec![state.intensity()[(c, c)].re];
    let mut ev = Evolver::new(state, *params)?;
    ev.advance_to(z_max, Some(params.dz), |s| {
        samples.push(s.intensity()[(c, c)].re);
        ControlFlow::Continue(())
    })?;
    Ok(samples)
}

/// Classifies `I(0, z)` of the moment system selected by `params.case`.
pub fn lattice_growth(params: &SimParams, test: &GrowthTest) -> Result<GrowthReport> {
    test.validate()?;
    let samples = match params.case {
        Case::Degenerate => central_intensity(DegenerateMoments::vacuum(params.n_sites), params, test.z_max())?,
        Case::General => central_intensity(GeneralMoments::vacuum(params.n_sites), params, test.z_max())?,
    };
    classify_samples(test, params.g, params.dz, &samples)
}

/// Classifies `|a_0(z)|^2` of the reduced model.
pub fn reduced_growth(params: &SimParams, test: &GrowthTest) -> Result<GrowthReport> {
    test.validate()?;
    let trajectory = reduced_parametric_growth(params, test.z_max())?;
    classify_samples(test, params.g, params.dz, &trajectory.intensity())
}

/// Interval `[below, above]` with sub-exponential growth at `below` and
/// exponential growth at `above`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdBracket {
    pub below: f64,
    pub above: f64,
    pub reports: Vec<GrowthReport>,
}

impl ThresholdBracket {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.below + self.above)
    }

    pub fn width(&self) -> f64 {
        self.above - self.below
    }
}

/// Bisects on `g` until the bracket is no wider than `resolution`.
pub fn bisect_threshold<F>(below: f64, above: f64, resolution: f64, mut classify: F) -> Result<ThresholdBracket>
where
    F: FnMut(f64) -> Result<GrowthReport>,
{
    if !(below < above && resolution > 0.0) {
        return Err(Error::InvalidParams(format!(
            "bisection needs below < above and resolution > 0, got [{below}, {above}] / {resolution}"
        )));
    }
    let lo = classify(below)?;
    let hi = classify(above)?;
    if lo.growth != Growth::SubExponential || hi.growth != Growth::Exponential {
        return Err(Error::InvalidParams(format!(
            "[{below}, {above}] does not straddle the threshold ({:?} at {below}, {:?} at {above})",
            lo.growth, hi.growth
        )));
    }
    let mut bracket = ThresholdBracket { below, above, reports: vec![lo, hi] };
    while bracket.width() > resolution {
        let mid = bracket.midpoint();
        let report = classify(mid)?;
        match report.growth {
            Growth::Exponential => bracket.above = mid,
            Growth::SubExponential => bracket.below = mid,
        }
        bracket.reports.push(report);
    }
    Ok(bracket)
}

/// Threshold bracket of the lattice moment system over `g`.
pub fn lattice_threshold(base: &SimParams, below: f64, above: f64, resolution: f64) -> Result<ThresholdBracket> {
    let test = GrowthTest::lattice();
    bisect_threshold(below, above, resolution, |g| lattice_growth(&base.with_g(g), &test))
}

/// Threshold bracket of the reduced model over `g`.
pub fn reduced_threshold(base: &SimParams, below: f64, above: f64, resolution: f64) -> Result<ThresholdBracket> {
    let test = GrowthTest::reduced();
    bisect_threshold(below, above, resolution, |g| reduced_growth(&base.with_g(g), &test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(dz: f64, len: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..len).map(|k| f(k as f64 * dz)).collect()
    }

    #[test]
    fn separates_exponential_from_power_law() {
        let t = GrowthTest::lattice();
        let exp = curve(0.01, 1001, |z| 0.1 * (0.8 * z).exp() * z.sqrt());
        assert_eq!(classify_samples(&t, 0.0, 0.01, &exp).unwrap().growth, Growth::Exponential);
        let power = curve(0.01, 1001, |z| z.powi(6));
        assert_eq!(classify_samples(&t, 0.0, 0.01, &power).unwrap().growth, Growth::SubExponential);
        let linear = curve(0.01, 1001, |z| 0.5 + z);
        assert_eq!(classify_samples(&t, 0.0, 0.01, &linear).unwrap().growth, Growth::SubExponential);
    }

    #[test]
    fn short_record_is_rejected() {
        let t = GrowthTest::lattice();
        assert!(classify_samples(&t, 0.0, 0.01, &[1.0; 10]).is_err());
    }

    #[test]
    fn bisection_on_a_step() {
        let step = |g: f64| {
            let growth = if g > 1.234 { Growth::Exponential } else { Growth::SubExponential };
            Ok(GrowthReport { g, early_rate: 0.0, late_rate: 0.0, growth })
        };
        let b = bisect_threshold(1.0, 2.0, 0.01, step).unwrap();
        assert!(b.below <= 1.234 && 1.234 < b.above && b.width() <= 0.01);
        assert!(bisect_threshold(1.5, 2.0, 0.01, step).is_err());
    }
}
