use dpsco::epoch::{self, EpochConfig};
use dpsco::instances::{InstanceSpec, PureConvexParams, SharpParams, UniformConvexParams};
use dpsco::inv_sensitivity;
use dpsco::localization::{self, default_eta_pure, LocalizationConfig, NoiseOptions};
use dpsco::mechanisms::{empirical_dp_test, laplace_sigma, sample_noise, NoiseKind, NoiseSpec};
use dpsco::{Dataset, PrivacyParams, RngStream, Vector};

fn quadratic() -> dpsco::instances::ProblemInstance {
    InstanceSpec::UniformConvex(UniformConvexParams {
        lipschitz: 2.0,
        bias_delta: 0.5,
        ..Default::default()
    })
    .build()
    .unwrap()
}

#[test]
fn localization_is_reproducible_and_stays_feasible() {
    let inst = quadratic();
    let n = 512;
    let eta = default_eta_pure(inst.domain.diameter(), inst.lipschitz(), n, 0.1, 1.0, 1).unwrap();
    let cfg = LocalizationConfig::new(n, eta, 0.1, PrivacyParams::pure(1.0).unwrap()).unwrap();
    let go = |seed| {
        let mut rng = RngStream::new(seed, 0);
        let data = inst.draw(n, &mut rng).unwrap();
        localization::run_traced(inst.loss.as_ref(), &data, &inst.domain, &Vector::zeros(1), &cfg, &mut rng)
            .unwrap()
    };
    let (a, b, c) = (go(1), go(1), go(2));
    assert_eq!(a.x, b.x);
    assert_ne!(a.x, c.x);
    assert_eq!(a.phases.len(), cfg.k);
    for (i, p) in a.phases.iter().enumerate() {
        assert!(inst.domain.contains(&p.x, 1e-12));
        assert!((&p.xhat - &p.anchor).norm() <= p.radius + 1e-9, "phase {i}");
        if i > 0 {
            assert!((p.eta / a.phases[i - 1].eta - 1.0 / 16.0).abs() < 1e-15);
        }
    }
}

#[test]
fn noiseless_localization_improves_on_the_start() {
    let inst = quadratic();
    let n = 4096;
    let eta = default_eta_pure(inst.domain.diameter(), inst.lipschitz(), n, 0.1, 1e6, 1).unwrap();
    let noise = NoiseOptions {
        multiplier: 0.0,
        ..Default::default()
    };
    let cfg = LocalizationConfig::new(n, eta, 0.1, PrivacyParams::pure(1e6).unwrap())
        .unwrap()
        .with_noise(noise);
    let mut rng = RngStream::new(5, 0);
    let data = inst.draw(n, &mut rng).unwrap();
    let x = localization::run(inst.loss.as_ref(), &data, &inst.domain, &Vector::zeros(1), &cfg, &mut rng).unwrap();
    assert!(inst.excess_population(&x) < inst.excess_population(&Vector::zeros(1)));
}

#[test]
fn epoch_runs_shrink_their_balls() {
    let inst = quadratic();
    let n = 2048;
    let cfg = EpochConfig::new(n, 1, inst.lipschitz(), &inst.domain, 2.0, 0.1, PrivacyParams::pure(1.0).unwrap())
        .unwrap();
    let mut rng = RngStream::new(9, 0);
    let data = inst.draw(n, &mut rng).unwrap();
    let run = epoch::run_traced(inst.loss.as_ref(), &data, &inst.domain, &Vector::zeros(1), &cfg, &mut rng).unwrap();
    assert_eq!(run.epochs.len(), cfg.epochs);
    for (i, e) in run.epochs.iter().enumerate() {
        assert_eq!(e.radius, cfg.epoch_radius(i));
        assert!(e.contains(&inst.domain, e.output(), 1e-9));
        if i + 1 < run.epochs.len() {
            assert_eq!(&run.epochs[i + 1].center, e.output());
        }
    }
    assert_eq!(&run.x, run.epochs.last().unwrap().output());
    let (i0, prefix) = run.last_containing(&inst.domain, &inst.xstar).unwrap();
    assert!(prefix);
    assert!(i0 < run.epochs.len());
}

#[test]
fn grid_mechanism_concentrates_near_the_empirical_minimizer() {
    let inst = InstanceSpec::SharpGrowth(SharpParams::default()).build().unwrap();
    let mut rng = RngStream::new(4, 0);
    let data = inst.draw(2000, &mut rng).unwrap();
    let (xs, _) = inst.empirical_optimum(&data).unwrap();
    let density = inv_sensitivity::build_density(inst.loss.as_ref(), &data, &inst.domain, 0.01, 4.0, 0.0025).unwrap();
    let near = density.mass_where(|p| (p[0] - xs[0]).abs() <= 0.1);
    assert!(near > 0.9, "{near}");
    let draws: Vec<f64> = (0..200).map(|_| inv_sensitivity::sample(&density, &mut rng)[0]).collect();
    assert!(draws.iter().all(|x| x.abs() <= 1.0));
}

#[test]
fn falsifier_separates_calibrated_and_broken_laplace() {
    // Mean of n values in [0, 1]: l1 sensitivity 1/n.
    let n = 20;
    let s = Dataset::new(vec![Vector::from_element(1, 0.0); n]).unwrap();
    let t = s.with_replaced(0, Vector::from_element(1, 1.0)).unwrap();
    let eps = 1.0;
    let mean = |d: &Dataset| d.samples().iter().map(|v| v[0]).sum::<f64>() / n as f64;
    let sigma = laplace_sigma(1.0 / n as f64, eps).unwrap();
    let mech = |scale: f64| {
        move |d: &Dataset, r: &mut RngStream| {
            let spec = NoiseSpec::new(NoiseKind::LaplaceIid, sigma * scale, 1)?;
            Ok(mean(d) + sample_noise(&spec, r)[0])
        }
    };
    let rng = RngStream::new(77, 0);
    let honest = empirical_dp_test(mech(1.0), &s, &t, eps, 100_000, 20, &rng).unwrap();
    let broken = empirical_dp_test(mech(0.5), &s, &t, eps, 100_000, 20, &rng).unwrap();
    assert!(honest.pass, "{honest:?}");
    assert!(!broken.pass, "{broken:?}");
}

#[test]
fn pure_convex_excess_shrinks_with_epsilon() {
    let inst = InstanceSpec::PureConvex(PureConvexParams {
        d: 2,
        atom: 0.3,
        ..Default::default()
    })
    .build()
    .unwrap();
    let n = 1024;
    let med = |eps: f64| {
        let eta = default_eta_pure(inst.domain.diameter(), inst.lipschitz(), n, 0.1, eps, 2).unwrap();
        let cfg = LocalizationConfig::new(n, eta, 0.1, PrivacyParams::pure(eps).unwrap()).unwrap();
        let mut v: Vec<f64> = (0..41)
            .map(|seed| {
                let mut rng = RngStream::new(seed, 0);
                let data = inst.draw(n, &mut rng).unwrap();
                let x = localization::run(inst.loss.as_ref(), &data, &inst.domain, &Vector::zeros(2), &cfg, &mut rng)
                    .unwrap();
                inst.excess_population(&x)
            })
            .collect();
        v.sort_by(f64::total_cmp);
        v[20]
    };
    assert!(med(0.25) > med(4.0));
}
