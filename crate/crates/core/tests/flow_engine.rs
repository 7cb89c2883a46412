use nalgebra::DVector;
use pqflow_core::diffgeo::{ChartPoint, ConstantMetric, MetricField, ScalarField, ScalarFn};
use pqflow_core::flow::{
    detect_omega_limit, integrate_flow, random_metric, track_z, verify_z_barrier, FlowMode,
    FlowOptions, FlowTrajectory, Method, RandomMetricSpec, StopCriteria,
};
use pqflow_core::spiral::{FDeltaField, SpiralParams};

fn point(s: f64, t: f64) -> ChartPoint {
    ChartPoint::new(vec![s, t], vec![1])
}

fn stop_at(s_stop: f64) -> StopCriteria {
    StopCriteria {
        s_stop: Some(s_stop),
        ..Default::default()
    }
}

/// Distance from `p` to the dense curve of `traj`, searched around the node
/// nearest to `p`.
fn distance_to_curve(traj: &FlowTrajectory, p: &[f64]) -> f64 {
    let d = |q: &[f64]| ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
    let k = (0..traj.len())
        .min_by(|&a, &b| d(traj.states[a].coords()).total_cmp(&d(traj.states[b].coords())))
        .unwrap();
    let lo = traj.tau[k.saturating_sub(1)];
    let hi = traj.tau[(k + 1).min(traj.len() - 1)];
    let (_, best) = pqflow_core::spiral::golden_section_minimize(
        |tau| d(&traj.coords_at(tau).unwrap()),
        lo,
        hi,
        1e-14,
    );
    best.min(d(traj.states[k].coords()))
}

fn hausdorff_on_common_range(a: &FlowTrajectory, b: &FlowTrajectory) -> f64 {
    let range = |t: &FlowTrajectory| {
        let s = t.s_values();
        (
            s.iter().cloned().fold(f64::INFINITY, f64::min),
            s.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        )
    };
    let (a0, a1) = range(a);
    let (b0, b1) = range(b);
    let (lo, hi) = (a0.max(b0), a1.min(b1));
    let one_way = |x: &FlowTrajectory, y: &FlowTrajectory| {
        (0..x.len())
            .filter(|&k| x.s(k) >= lo && x.s(k) <= hi)
            .map(|k| distance_to_curve(y, x.states[k].coords()))
            .fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}

#[test]
fn raw_and_unit_speed_orbits_coincide() {
    let f = FDeltaField(SpiralParams::new(1.0));
    let metrics: Vec<Box<dyn MetricField>> = vec![
        Box::new(ConstantMetric::euclidean(2)),
        Box::new(random_metric(RandomMetricSpec::new(7, 3, 0.2, 1.0)).unwrap()),
    ];
    for g in &metrics {
        let base = FlowOptions {
            stop: stop_at(0.2),
            ..Default::default()
        };
        let unit = integrate_flow(&f, g.as_ref(), &point(-0.6, 0.3), &base).unwrap();
        let raw = integrate_flow(
            &f,
            g.as_ref(),
            &point(-0.6, 0.3),
            &FlowOptions {
                mode: FlowMode::RawTime,
                ..base
            },
        )
        .unwrap();
        let h = hausdorff_on_common_range(&unit, &raw);
        assert!(h <= 10.0 * base.rtol, "Hausdorff distance {h:e}");
    }
}

#[test]
fn global_error_scales_with_tolerance() {
    // F = s with a position-dependent metric: the orbit is curved but known
    // only numerically, so a tight run serves as the reference.
    let f = ScalarFn::new(2, |x| x[0], |_| DVector::from_vec(vec![1.0, 0.0]));
    let g = random_metric(RandomMetricSpec::new(3, 3, 0.2, 1.0)).unwrap();
    let stop = StopCriteria {
        s_stop: None,
        max_tau: 2.0,
        ..Default::default()
    };
    for method in [Method::DormandPrince, Method::Radau] {
        let run = |rtol: f64| {
            let opts = FlowOptions {
                mode: FlowMode::RawTime,
                method,
                rtol,
                atol: rtol * 1e-2,
                stop,
                angle_index: None,
                ..Default::default()
            };
            let tr = integrate_flow(&f, &g, &point(-0.9, 0.0), &opts).unwrap();
            DVector::from_column_slice(tr.states.last().unwrap().coords())
        };
        let reference = {
            let opts = FlowOptions {
                mode: FlowMode::RawTime,
                method: Method::DormandPrince,
                rtol: 1e-13,
                atol: 1e-15,
                stop,
                ..Default::default()
            };
            let tr = integrate_flow(&f, &g, &point(-0.9, 0.0), &opts).unwrap();
            DVector::from_column_slice(tr.states.last().unwrap().coords())
        };
        let e1 = (run(1e-6) - &reference).norm();
        let e2 = (run(1e-7) - &reference).norm();
        let ratio = e1 / e2;
        assert!(
            e1 < 1e-4 && (2.0..=40.0).contains(&ratio),
            "{method:?}: errors {e1:e} {e2:e} ratio {ratio}"
        );
    }
}

#[test]
fn forward_convergence_and_monotonicity() {
    let f = FDeltaField(SpiralParams::new(1.0));
    for seed in [0, 5, 11] {
        let g = random_metric(RandomMetricSpec::new(seed, 3, 0.2, 1.0)).unwrap();
        let opts = FlowOptions::default();
        let tr = integrate_flow(&f, &g, &point(-0.7, 2.0), &opts).unwrap();
        let s_end = tr.s(tr.len() - 1);
        assert!(s_end > -opts.stop.s_stop.unwrap() && s_end < 0.0);
        assert!(tr.potential.last().unwrap().abs() <= 10.0 * opts.rtol);
        for w in tr.potential.windows(2) {
            assert!(w[1] >= w[0] - 10.0 * opts.rtol);
        }
        let lim = detect_omega_limit(&tr, 0.05, 36).unwrap();
        assert_eq!(lim.coverage, 1.0);
        assert!(verify_z_barrier(&tr, 1.25, -0.3, 1.0).unwrap().passed());
        assert!(track_z(&tr).is_finite());
    }
}

#[test]
fn backward_flow_decreases_potential() {
    let f = FDeltaField(SpiralParams::new(1.0));
    let opts = FlowOptions {
        backward: true,
        stop: StopCriteria {
            s_stop: None,
            max_arc_length: 1.0,
            ..Default::default()
        },
        ..Default::default()
    };
    let tr = integrate_flow(&f, &ConstantMetric::euclidean(2), &point(-0.3, 0.0), &opts).unwrap();
    assert!(tr.potential.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    let n = tr.len();
    assert!(tr.arc_length[n - 1] >= 1.0 && tr.arc_length[n - 2] < 1.0);
    assert!(f.value(tr.states.last().unwrap().coords()) < f.value(&[-0.3, 0.0]));
}
