use crate::error::{Error, Result};

/// Largest allowed `dz * c_s`.
pub const MAX_STEP_COUPLING: f64 = 0.05;

/// Default integration step in units of `1/C_s`.
pub const DEFAULT_DZ: f64 = 1e-3;

/// Default lattice size used for desk-scale runs.
pub const DEFAULT_SITES: usize = 257;

/// Which averaged moment system is integrated.
///
/// `Degenerate` is the zero-sideband case where signal and idler coincide in
/// a single mode per guide; `General` tracks the two sideband modes `+w`
/// and `-w` of each guide separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Case {
    Degenerate,
    General,
}

impl Case {
    pub fn as_str(self) -> &'static str {
        match self {
            Case::Degenerate => "degenerate",
            Case::General => "general",
        }
    }
}

impl std::fmt::Display for Case {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "degenerate" => Ok(Case::Degenerate),
            "general" => Ok(Case::General),
            other => {
                Err(Error::InvalidParams(format!("unknown case {other:?} (expected \"degenerate\" or \"general\")")))
            }
        }
    }
}

/// Lattice geometry, pump and integration controls.
///
/// Sites are labelled `-M..=M` with `n_sites = 2M + 1`; the pump sits on
/// site 0. `c_s` may be zero only to isolate the single-guide amplifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub n_sites: usize,
    pub c_s: f64,
    pub g: f64,
    pub gamma: f64,
    pub dz: f64,
    pub case: Case,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams { n_sites: DEFAULT_SITES, c_s: 1.0, g: 1.0, gamma: 0.0, dz: DEFAULT_DZ, case: Case::Degenerate }
    }
}

impl SimParams {
    pub fn new(n_sites: usize, c_s: f64, g: f64, gamma: f64, dz: f64, case: Case) -> Result<Self> {
        let p = SimParams { n_sites, c_s, g, gamma, dz, case };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites < 3 || self.n_sites.is_multiple_of(2) {
            return Err(Error::InvalidParams(format!("n_sites must be odd and >= 3, got {}", self.n_sites)));
        }
        let finite_nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParams(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        finite_nonneg("c_s", self.c_s)?;
        finite_nonneg("g", self.g)?;
        finite_nonneg("gamma", self.gamma)?;
        if !(self.dz.is_finite() && self.dz > 0.0) {
            return Err(Error::InvalidParams(format!("dz must be > 0, got {}", self.dz)));
        }
        if self.dz * self.c_s > MAX_STEP_COUPLING * (1.0 + 1e-12) {
            return Err(Error::InvalidParams(format!(
                "dz * c_s = {} exceeds the step guard {MAX_STEP_COUPLING}",
                self.dz * self.c_s
            )));
        }
        Ok(())
    }

    /// Half-width `M` of the lattice.
    pub fn half_width(&self) -> usize {
        self.n_sites / 2
    }

    /// Storage index of a signed site label.
    pub fn site_index(&self, site: i64) -> Result<usize> {
        site_to_index(site, self.n_sites)
    }

    pub fn with_case(mut self, case: Case) -> Self {
        self.case = case;
        self
    }

    pub fn with_g(mut self, g: f64) -> Self {
        self.g = g;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_sites(mut self, n_sites: usize) -> Self {
        self.n_sites = n_sites;
        self
    }

    pub fn with_dz(mut self, dz: f64) -> Self {
        self.dz = dz;
        self
    }
}

pub(crate) fn site_to_index(site: i64, n_sites: usize) -> Result<usize> {
    let m = (n_sites / 2) as i64;
    if site < -m || site > m {
        return Err(Error::IndexOutOfRange { index: site, sites: n_sites });
    }
    Ok((site + m) as usize)
}
