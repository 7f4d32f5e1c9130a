use effdim::concentration::{loglog_slope, scaling_experiment, NonlinearitySpec, ScalingConfig};
use effdim::entropy::{build_cover, verify_cover, volumetric_lower_bound, EllipsoidAxes};
use effdim::erm::{precondition_experiment, LossKind, PrecondConfig};
use effdim::smoothing::{smoothing_comparison, GradientBatch, SmoothExperimentConfig};
use effdim::{make_spectrum, RngStream, SpectrumKind};

#[test]
fn cover_from_axes_is_valid() {
    let e = EllipsoidAxes::new(vec![3.0, 1.5, 0.4]).unwrap();
    let cover = build_cover(&e, 1.0).unwrap();
    let report = verify_cover(&cover, &e, 20_000, &RngStream::new(1, 0)).unwrap();
    assert_eq!(report.violations, 0);
    assert!((cover.len() as f64).ln() >= volumetric_lower_bound(&e, 1.0));
}

#[test]
fn small_scaling_table_is_ordered_and_decreasing() {
    let s = make_spectrum(&SpectrumKind::Isotropic, 3, 1.0).unwrap();
    let cfg = ScalingConfig {
        spectra: vec![("iso".into(), s)],
        n_grid: vec![64, 256, 1024],
        trials: 30,
        fs: NonlinearitySpec::identity(2),
        centered: true,
        search: None,
        reference_size: 0,
        master_seed: 5,
    };
    let table = scaling_experiment(&cfg).unwrap();
    assert_eq!(table.records.len(), 90);
    assert!(table.records.windows(2).all(|w| (w[0].n, w[0].trial) < (w[1].n, w[1].trial)));
    let means: Vec<f64> = table.cells.iter().map(|c| c.mean).collect();
    assert!(means.windows(2).all(|w| w[1] < w[0]));
    let ns: Vec<usize> = table.cells.iter().map(|c| c.n).collect();
    let (slope, _, _) = loglog_slope(&ns, &means);
    assert!((-0.7..=-0.3).contains(&slope), "slope {slope}");
}

#[test]
fn preconditioning_beats_gradient_descent() {
    let s = make_spectrum(&SpectrumKind::PowerLaw { alpha: 1.0 }, 10, 1.0).unwrap();
    let cfg = PrecondConfig {
        loss: LossKind::Logistic,
        spectrum: s,
        n: 800,
        n_aux: 800,
        lambda: 1e-2,
        iters: 40,
        vanilla_factor: 10,
        target_gap: 1e-6,
        radius: None,
        truth_norm: 1.0,
        restarts: 8,
        search_iters: 40,
        probes: 20,
        inner_tol: 1e-12,
    };
    let r = precondition_experiment(&cfg, 3).unwrap();
    assert!(r.condition.l_rel <= 1.0 + 1e-9);
    assert!(r.condition.sigma_rel >= 1.0 / r.kappa_bound - 1e-9);
    assert!(r.max_ratio <= 1.0 - 1.0 / r.kappa_bound + 0.05);
    let pre = r.rounds_precond.expect("preconditioned run reaches the target");
    assert!(r.rounds_vanilla.map_or(true, |v| pre < v));
}

#[test]
fn smoothing_comparison_reaches_target() {
    let s = make_spectrum(&SpectrumKind::PowerLaw { alpha: 1.0 }, 16, 1.0).unwrap();
    let cfg = SmoothExperimentConfig {
        loss: LossKind::Hinge,
        spectrum: s,
        n: 500,
        m: 16,
        iters: 1500,
        radius: Some(1.0),
        target_gap: 2e-2,
        seeds: 3,
        truth_norm: 1.0,
        delta: 0.05,
        constant: 1.0,
        u_isotropic: None,
        u_non_isotropic: None,
        batch: GradientBatch::Single,
        reference_iters: 50_000,
    };
    let c = smoothing_comparison(&cfg, 2).unwrap();
    assert!(c.outcomes.iter().all(|o| o.reached), "{:?}", c.outcomes.iter().map(|o| o.final_gap).collect::<Vec<_>>());
    assert!(c.outcomes.iter().all(|o| o.gaps.iter().all(|&g| g >= 0.0)));
    assert!(c.u_non_isotropic > c.u_isotropic);
}
