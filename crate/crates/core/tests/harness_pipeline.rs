//! End-to-end harness behaviour on small configurations.

use cfd_core::editing::Method;
use cfd_core::harness::experiment::{datasets_for, evaluate_datasets, sweep_point};
use cfd_core::harness::{ExperimentConfig, SweepAxis};

fn small() -> ExperimentConfig {
    ExperimentConfig {
        train_size: 0,
        test_size: 50,
        healthy_size: 40,
        triplets: 40,
        gallery: 0,
        ..ExperimentConfig::default()
    }
}

#[test]
fn k_one_sweep_point_reproduces_naive_repaint() {
    let mut c = small();
    c.triplets = 20;
    c.mededit_resample = c.naive_resample;
    c.methods = vec![Method::MedEdit, Method::NaiveRePaint];
    let ds = datasets_for(&c).unwrap();
    let point = sweep_point(&c, SweepAxis::K, 1.0);
    let swept = evaluate_datasets(&point, &ds).unwrap();
    let base = evaluate_datasets(&c, &ds).unwrap();
    let me = swept.metrics.iter().find(|r| r.method == Method::MedEdit).unwrap();
    let nr = base.metrics.iter().find(|r| r.method == Method::NaiveRePaint).unwrap();
    assert_eq!((me.dice, me.frechet, me.indirect_error), (nr.dice, nr.frechet, nr.indirect_error));
    assert_eq!((me.k, me.u), (nr.k, nr.u));
}

#[test]
fn no_indirect_error_without_an_indirect_effect() {
    let mut c = small();
    c.triplets = 20;
    c.phantom.gain = 0.0;
    let eval = evaluate_datasets(&c, &datasets_for(&c).unwrap()).unwrap();
    for m in Method::ALL {
        let e = eval.mean(m, |r| r.indirect_error).unwrap();
        assert!(e <= 1.0, "{m}: {e}");
    }
}

#[test]
fn resampling_does_not_worsen_frechet_distance() {
    // FD against U over ten seeds: the fitted slope must not be
    // significantly positive
    let mut c = small();
    c.seeds = (0..10).collect();
    c.methods = vec![Method::MedEdit];
    let ds = datasets_for(&c).unwrap();
    let grid = [1.0, 2.0, 4.0];
    let mut points = Vec::new();
    for &u in &grid {
        let e = evaluate_datasets(&sweep_point(&c, SweepAxis::U, u), &ds).unwrap();
        for r in &e.metrics {
            points.push((u, r.frechet));
        }
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let resid: f64 = points
        .iter()
        .map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2))
        .sum::<f64>()
        / (n - 2.0);
    let se = (resid / sxx).sqrt();
    assert!(slope <= 2.0 * se, "slope {slope} se {se}");
}
