use wgent_core::growth::{lattice_growth, lattice_threshold, reduced_growth, Growth, GrowthTest};
use wgent_core::{Case, SimParams};

fn params(g: f64, case: Case) -> SimParams {
    SimParams { n_sites: 257, c_s: 1.0, g, gamma: 0.0, dz: 0.01, case }
}

#[test]
fn lattice_growth_changes_character_across_threshold() {
    for case in [Case::Degenerate, Case::General] {
        let below = lattice_growth(&params(1.5, case), &GrowthTest::lattice()).unwrap();
        let above = lattice_growth(&params(2.2, case), &GrowthTest::lattice()).unwrap();
        assert_eq!(below.growth, Growth::SubExponential, "{case}: {below:?}");
        assert_eq!(above.growth, Growth::Exponential, "{case}: {above:?}");
    }
}

#[test]
fn reduced_growth_changes_character_across_threshold() {
    let below = reduced_growth(&params(1.5, Case::Degenerate), &GrowthTest::reduced()).unwrap();
    let above = reduced_growth(&params(2.2, Case::Degenerate), &GrowthTest::reduced()).unwrap();
    assert_eq!(below.growth, Growth::SubExponential, "{below:?}");
    assert_eq!(above.growth, Growth::Exponential, "{above:?}");
}

#[test]
fn bisection_reports_every_probe() {
    let b = lattice_threshold(&params(0.0, Case::Degenerate).with_sites(101), 1.5, 2.5, 0.1).unwrap();
    assert!(b.width() <= 0.1 && b.below < b.above);
    assert_eq!(b.reports.len(), 2 + 4);
    assert!(b
        .reports
        .iter()
        .all(|r| r.growth == if r.g <= b.below { Growth::SubExponential } else { Growth::Exponential }));
}
