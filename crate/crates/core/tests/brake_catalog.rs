use ogc_core::brake::{brake_multiplicity, jacobi_metric, BrakeConfig, LagrangianData};
use ogc_core::geometry::{MetricField, Potential};
use ogc_core::multiplicity::MultistartConfig;

fn run(dim: usize, potential: Potential, grid: usize, max_starts: Option<usize>) -> usize {
    let l = LagrangianData::new(MetricField::euclidean(dim), potential, 0.5);
    let dom = jacobi_metric(&l, None, 256).unwrap();
    let cfg = MultistartConfig { grid, m0_grid: 8, max_starts, ..MultistartConfig::default() };
    let cat = brake_multiplicity(&l, &dom, &cfg, &BrakeConfig::default()).unwrap();
    for e in &cat.entries {
        assert!(e.report.passed);
        let [a, b] = e.jacobi_lengths;
        assert!((a - b).abs() < 1e-4 * a, "{a} {b}");
    }
    assert!(cat.failures.is_empty(), "{:?}", cat.failures);
    cat.count()
}

#[test]
fn harmonic_plane_has_two_brake_orbits() {
    assert!(run(2, Potential::Harmonic, 8, None) >= 2);
}

#[test]
fn cubic_plane_has_two_brake_orbits() {
    assert!(run(2, Potential::Cubic { epsilon: 0.01 }, 8, None) >= 2);
}

#[test]
fn harmonic_space_has_three_brake_orbits() {
    assert!(run(3, Potential::Harmonic, 4, Some(24)) >= 3);
}
