//! The named experiments. Each returns its tables; sweep points run on the
//! rayon pool and are collected in input order so outputs are stable.

use std::ops::ControlFlow;

use rayon::prelude::*;
use wgent_core::bessel::bessel_j;
use wgent_core::entanglement::{
    entanglement_map, pair_log_negativity, stationary_logneg, survival_distance, PlateauCriteria, Stationary, Survival,
    SurvivalCriteria,
};
use wgent_core::growth::{lattice_threshold, reduced_threshold, Growth, ThresholdBracket};
use wgent_core::moments::photon_number_profile;
use wgent_core::oracle::ensemble_moments;
use wgent_core::reduced::{memory_identity_residual, ClassicalField};
use wgent_core::symplectic::global_purity_check;
use wgent_core::{Case, DegenerateMoments, Evolver, GeneralMoments, MomentState, SimParams};

use crate::config::{Config, Experiment};
use crate::error::CliError;
use crate::output::{Cell, Table};
use crate::progress::Progress;

type Result<T> = std::result::Result<T, CliError>;

/// Calls `$f::<S>($args)` with the moment state type of `$case`.
macro_rules! by_case {
    ($case:expr, $f:ident $(<$($rest:tt),*>)? ($($arg:expr),*)) => {
        match $case {
            Case::Degenerate => $f::<DegenerateMoments $($(, $rest)*)?>($($arg),*),
            Case::General => $f::<GeneralMoments $($(, $rest)*)?>($($arg),*),
        }
    };
}

const POINT_COLUMNS: [&str; 4] = ["case", "g", "gamma", "n_sites"];

fn point_cells(p: &SimParams) -> Vec<Cell> {
    vec![p.case.as_str().into(), p.g.into(), p.gamma.into(), p.n_sites.into()]
}

fn columns(extra: &[&'static str]) -> Vec<&'static str> {
    POINT_COLUMNS.iter().chain(extra).copied().collect()
}

fn row(p: &SimParams, extra: Vec<Cell>) -> Vec<Cell> {
    let mut cells = point_cells(p);
    cells.extend(extra);
    cells
}

/// Every `(case, g, gamma)` combination of the config, in a fixed order.
fn sweep_points(c: &Config) -> Vec<SimParams> {
    let mut points = Vec::new();
    for case in c.case.cases() {
        for gamma in c.gamma_values() {
            for g in c.g_values() {
                points.push(c.params(case, g, gamma));
            }
        }
    }
    points
}

fn par_points<T, F>(points: &[SimParams], progress: &Progress, label: &str, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&SimParams) -> Result<T> + Sync,
{
    let done = std::sync::atomic::AtomicUsize::new(0);
    points
        .par_iter()
        .map(|p| {
            let out = f(p);
            let k = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
            progress.tick(|| format!("{label}: {k}/{} points", points.len()));
            out
        })
        .collect()
}

pub fn run(config: &Config, progress: &Progress) -> Result<Vec<Table>> {
    let experiment = config.experiment();
    progress.say(|| format!("running {experiment}"));
    let tables = match experiment {
        Experiment::IntensityProfile => intensity_profile(config, progress)?,
        Experiment::IntensityVsZ => intensity_vs_z(config, progress)?,
        Experiment::EntangleMap => entangle_map(config, progress)?,
        Experiment::StationarySweep => stationary_sweep(config, progress)?,
        Experiment::SurvivalDistance => survival(config, progress)?,
        Experiment::NoiseEvolution => noise_evolution(config, progress)?,
        Experiment::OracleCheck => oracle_check(config, progress)?,
        Experiment::KernelCheck => kernel_check(config, progress)?,
        Experiment::ThresholdScan => threshold_scan(config, progress)?,
        Experiment::PurityCheck => purity_check(config, progress)?,
    };
    progress.say(|| format!("{experiment} done"));
    Ok(tables)
}

/// States at each of `zs` (sorted), from vacuum.
fn states_at<S: MomentState, T>(
    p: &SimParams,
    zs: &[f64],
    mut f: impl FnMut(&S) -> wgent_core::Result<T>,
) -> Result<Vec<T>> {
    let mut ev = Evolver::new(S::vacuum(p.n_sites), *p)?;
    let mut out = Vec::with_capacity(zs.len());
    for &z in zs {
        ev.advance_to(z, None, |_| ControlFlow::Continue(()))?;
        out.push(f(ev.state())?);
    }
    Ok(out)
}

/// Calls `f` every `every` up to `z_max`, starting with the vacuum at z = 0.
fn sampled<S: MomentState, T>(
    p: &SimParams,
    z_max: f64,
    every: f64,
    f: impl Fn(&S) -> wgent_core::Result<T>,
) -> Result<Vec<(f64, T)>> {
    let vacuum = S::vacuum(p.n_sites);
    let mut out = vec![(0.0, f(&vacuum)?)];
    let mut failure = None;
    let mut ev = Evolver::new(vacuum, *p)?;
    ev.advance_to(z_max, Some(every), |s| match f(s) {
        Ok(v) => {
            out.push((s.z(), v));
            ControlFlow::Continue(())
        }
        Err(e) => {
            failure = Some(e);
            ControlFlow::Break(())
        }
    })?;
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(out),
    }
}

fn intensity_profile(c: &Config, progress: &Progress) -> Result<Vec<Table>> {
    let zs = c.z_values();
    let points = sweep_points(c);
    let profiles = par_points(
        &points,
        progress,
        "intensity-profile",
        |p| by_case!(p.case, states_at<_>(p, &zs, photon_number_profile)),
    )?;
    let mut t = Table::new("intensity-profile", &columns(&["z", "n", "intensity"]));
    let half = (c.n_sites / 2) as i64;
    for (p, per_z) in points.iter().zip(profiles) {
        for (&z, profile) in zs.iter().zip(per_z) {
            for (k, v) in profile.into_iter().enumerate() {
                t.push(row(p, vec![z.into(), Cell::Int(k as i64 - half), v.into()]));
            }
        }
    }
    Ok(vec![t])
}

fn central_intensity<S: MomentState>(s: &S) -> wgent_core::Result<f64> {
    let c = s.n_sites() / 2;
    Ok(s.intensity()[(c, c)].re)
}

fn intensity_vs_z(c: &Config, progress: &Progress) -> Result<Vec<Table>> {
    let points = sweep_points(c);
    let curves = par_points(
        &points,
        progress,
        "intensity-vs-z",
        |p| by_case!(p.case, sampled<_>(p, c.z_max, c.sample_every, central_intensity)),
    )?;
    let mut t = Table::new("intensity-vs-z", &columns(&["z", "intensity"]));
    for (p, curve) in points.iter().zip(curves) {
        for (z, v) in curve {
            t.push(row(p, vec![z.into(), v.into()]));
        }
    }
    Ok(vec![t])
}

fn map_rows(t: &mut Table, p: &SimParams, z: f64, map: &wgent_core::entanglement::EntanglementMap) {
    for (m, n, v) in map.iter() {
        t.push(row(p, vec![z.into(), Cell::Int(m), Cell::Int(n), v.into()]));
    }
}

fn maps_table(name: &str, c: &Config, progress: &Progress, points: &[SimParams]) -> Result<Table> {
    let zs = c.z_values();
    let maps = par_points(points, progress, name, |p| by_case!(p.case, states_at<_>(p, &zs, entanglement_map)))?;
    let mut t = Table::new(name, &columns(&["z", "m", "n", "log_negativity"]));
    for (p, per_z) in points.iter().zip(maps) {
        for (&z, map) in zs.iter().zip(&per_z) {
            map_rows(&mut t, p, z, map);
        }
    }
    Ok(t)
}

fn entangle_map(c: &Config, progress: &Progress) -> Result<Vec<Table>> {
    Ok(vec![maps_table("entangle-map", c, progress, &sweep_points(c))?])
}

fn pair_cells(c: &Config) -> Vec<Cell> {
    vec![Cell::Int(c.pair[0]), Cell::Int(c.pair[1])]
}

fn stationary_sweep(c: &Config, progress: &Progress) -> Result<Vec<Table>> {
    let points = sweep_points(c);
    let criteria = PlateauCriteria {
        window: c.plateau_window,
        rel_tol: c.plateau_rel_tol,
        sample_every: c.sample_every,
        z_max: c.z_max,
    };
    let pair = (c.pair[0], c.pair[1]);
    let results = par_points(&points, progress, "stationary-sweep", |p| Ok(stationary_logneg(p, pair, &criteria)?))?;
    let mut t = Table::new("stationary-sweep", &columns(&["m", "n", "status", "log_negativity", "z"]));
    for (p, r) in points.iter().zip(results) {
        let (status, value, z) = match r {
            Stationary::Plateau { value, z } => ("plateau", value, z),
            Stationary::NonStationary { last_value, z_max } => ("non-stationary", last_value, z_max),
        };
        let mut extra = pair_cells(c);
        extra.extend([status.into(), value.into(), z.into()]);
        t.push(row(p, extra));
    }
    Ok(vec![t])
}

fn survival(c: &Config, progress: &Progress) -> Result<Vec<Table>> {
    let points = sweep_points(c);
    let criteria =
        SurvivalCriteria { eps: c.eps, sample_every: c.sample_every, z_max: c.z_max, confirm_window: c.confirm_window };
    let pair = (c.pair[0], c.pair[1]);
    let results = par_points(&points, progress, "survival-distance", |p| Ok(survival_distance(p, pair, &criteria)?))?;
    let mut t = Table::new(
        "survival-distance",
        &columns(&["m", "n", "eps", "status", "z_tilde", "peak", "z_peak", "last_value"]),
    );
    for (p, r) in points.iter().zip(results) {
        let nan = Cell::Text(String::new());
        let (status, z_tilde, peak, z_peak, last) = match r {
            Survival::Finite { z_tilde, peak, z_peak } => ("finite", z_tilde.into(), peak.into(), z_peak.into(), nan),
            Survival::Unbounded { last_value, .. } => ("unbounded", nan.clone(), nan.clone(), nan, last_value.into()),
            Survival::NeverEntangled => ("never-entangled", nan.clone(), nan.clone(), nan.clone(), nan),
        };
        let mut extra = pair_cells(c);
        extra.extend([c.eps.into(), status.into(), z_tilde, peak, z_peak, last]);
        t.push(row(p, extra));
    }
    t.note("z_max", crate::output::format_float(c.z_max));
    Ok(vec![t])
}

fn noise_evolution(c: &Config, progress: &Progress) -> Result<Vec<Table>> {
    let points = sweep_points(c);
    let (m, n) = (c.pair[0], c.pair[1]);
    fn trace<S: MomentState>(p: &SimParams, c: &Config, m: i64, n: i64) -> Result<Vec<(f64, (f64, f64))>> {
        sampled(p, c.z_max, c.sample_every, |s: &S| Ok((pair_log_negativity(s, m, n)?, central_intensity(s)?)))
    }
    let traces = par_points(&points, progress, "noise-evolution", |p| by_case!(p.case, trace(p, c, m, n)))?;
    let mut t = Table::new("noise-evolution", &columns(&["m", "n", "z", "log_negativity", "central_intensity"]));
    for (p, tr) in points.iter().zip(traces) {
        for (z, (e, i0)) in tr {
            let mut extra = pair_cells(c);
            extra.extend([z.into(), e.into(), i0.into()]);
            t.push(row(p, extra));
        }
    }
    let maps =
        if c.z_points.is_empty() { None } else { Some(maps_table("noise-evolution-maps", c, progress, &points)?) };
    Ok(std::iter::once(t).chain(maps).collect())
}

fn oracle_check(c: &Config, progress: &Progress) -> Result<Vec<Table>> {
    const SIGMAS: f64 = 3.0;
    const SLACK: f64 = 1e-8;
    let mut entries = Table::new(
        "oracle-check",
        &columns(&["z", "component", "m", "n", "part", "moments", "oracle_mean", "std_err"]),
    );
    let mut summary = Table::new(
        "oracle-check-summary",
        &columns(&["z", "paths", "seed", "checked", "failures", "worst_score", "worst_entry", "max_abs_diff"]),
    );
    for p in sweep_points(c) {
        progress.say(|| format!("oracle-check: {} g = {} gamma = {}, {} paths", p.case, p.g, p.gamma, c.paths));
        fn check<S: MomentState>(p: &SimParams, c: &Config, entries: &mut Table, summary: &mut Table) -> Result<()> {
            let mut ev = Evolver::new(S::vacuum(p.n_sites), *p)?;
            ev.advance_to(c.z_max, None, |_| ControlFlow::Continue(()))?;
            let state = ev.into_state();
            let ensemble = ensemble_moments(p, c.z_max, c.paths, c.seed)?;
            let report = ensemble.compare(&state, SIGMAS, SLACK)?;
            let half = (p.n_sites / 2) as i64;
            for (k, ((ode, mean), se)) in
                state.components().iter().zip(&ensemble.mean).zip(&ensemble.std_err).enumerate()
            {
                for i in 0..p.n_sites {
                    for j in 0..p.n_sites {
                        let parts = [
                            ("re", ode[(i, j)].re, mean[(i, j)].re, se[(i, j)].re),
                            ("im", ode[(i, j)].im, mean[(i, j)].im, se[(i, j)].im),
                        ];
                        for (part, a, b, e) in parts {
                            entries.push(row(
                                p,
                                vec![
                                    c.z_max.into(),
                                    S::COMPONENT_NAMES[k].into(),
                                    Cell::Int(i as i64 - half),
                                    Cell::Int(j as i64 - half),
                                    part.into(),
                                    a.into(),
                                    b.into(),
                                    e.into(),
                                ],
                            ));
                        }
                    }
                }
            }
            let worst = report.worst_entry.map(|(name, m, n)| format!("{name}({m},{n})")).unwrap_or_default();
            summary.push(row(
                p,
                vec![
                    c.z_max.into(),
                    c.paths.into(),
                    Cell::Text(c.seed.to_string()),
                    report.checked.into(),
                    report.failures.into(),
                    report.worst_score.into(),
                    worst.into(),
                    report.max_abs_diff.into(),
                ],
            ));
            Ok(())
        }
        by_case!(p.case, check(&p, c, &mut entries, &mut summary))?;
    }
    summary.note("band", format!("{SIGMAS} standard errors + {SLACK:e}"));
    Ok(vec![entries, summary])
}

fn kernel_check(c: &Config, progress: &Progress) -> Result<Vec<Table>> {
    let p = SimParams { g: 0.0, gamma: 0.0, ..c.params(Case::Degenerate, 0.0, 0.0) };
    let mut green =
        Table::new("kernel-check-green", &["n_sites", "c_s", "dz", "z", "a0_re", "a0_im", "j0", "abs_error"]);
    let mut field = ClassicalField::centred(p)?;
    let every = ((c.sample_every / p.dz).round() as u64).max(1);
    let total = (c.z_max / p.dz).round() as u64;
    for k in 0..=total {
        if k % every == 0 || k == total {
            let z = field.z();
            let a0 = field.centre();
            let j0 = bessel_j(0, 2.0 * p.c_s * z)?;
            green.push(vec![
                p.n_sites.into(),
                p.c_s.into(),
                p.dz.into(),
                z.into(),
                a0.re.into(),
                a0.im.into(),
                j0.into(),
                (a0 - j0).norm().into(),
            ]);
            progress.tick(|| format!("kernel-check: z = {z}"));
        }
        if k < total {
            field.step();
        }
    }
    let mut residual = Table::new("kernel-check-residual", &["n_sites", "c_s", "dz", "z_max", "residual"]);
    for dz in [p.dz, 0.5 * p.dz] {
        let q = p.with_dz(dz);
        residual.push(vec![
            q.n_sites.into(),
            q.c_s.into(),
            dz.into(),
            c.z_max.into(),
            memory_identity_residual(&q, c.z_max)?.into(),
        ]);
    }
    Ok(vec![green, residual])
}

fn threshold_scan(c: &Config, progress: &Progress) -> Result<Vec<Table>> {
    let mut brackets: Vec<(String, SimParams, ThresholdBracket)> = Vec::new();
    for case in c.case.cases() {
        let p = c.params(case, c.g, c.gamma);
        progress.say(|| format!("threshold-scan: lattice, {case}"));
        brackets.push((format!("lattice-{case}"), p, lattice_threshold(&p, c.g_below, c.g_above, c.resolution)?));
    }
    let p = c.params(Case::Degenerate, c.g, 0.0);
    progress.say(|| "threshold-scan: reduced model".to_string());
    brackets.push(("reduced".into(), p, reduced_threshold(&p, c.g_below, c.g_above, c.resolution)?));

    let model_columns = ["model", "n_sites", "c_s", "gamma", "dz"];
    let model_cells = |name: &str, p: &SimParams| -> Vec<Cell> {
        vec![name.into(), p.n_sites.into(), p.c_s.into(), p.gamma.into(), p.dz.into()]
    };
    let with = |extra: &[&'static str]| -> Vec<&'static str> { model_columns.iter().chain(extra).copied().collect() };
    let mut reports = Table::new("threshold-scan-reports", &with(&["g", "early_rate", "late_rate", "growth"]));
    let mut summary = Table::new("threshold-scan", &with(&["below", "above", "midpoint", "width"]));
    for (name, p, b) in &brackets {
        for r in &b.reports {
            let growth = match r.growth {
                Growth::Exponential => "exponential",
                Growth::SubExponential => "sub-exponential",
            };
            let mut cells = model_cells(name, p);
            cells.extend([r.g.into(), r.early_rate.into(), r.late_rate.into(), growth.into()]);
            reports.push(cells);
        }
        let mut cells = model_cells(name, p);
        cells.extend([b.below.into(), b.above.into(), b.midpoint().into(), b.width().into()]);
        summary.push(cells);
    }
    Ok(vec![summary, reports])
}

fn purity_check(c: &Config, progress: &Progress) -> Result<Vec<Table>> {
    let points = sweep_points(c);
    let curves = par_points(
        &points,
        progress,
        "purity-check",
        |p| by_case!(p.case, sampled<_>(p, c.z_max, c.sample_every, global_purity_check)),
    )?;
    let mut t = Table::new("purity-check", &columns(&["z", "max_deviation"]));
    for (p, curve) in points.iter().zip(curves) {
        for (z, v) in curve {
            t.push(row(p, vec![z.into(), v.into()]));
        }
    }
    Ok(vec![t])
}
