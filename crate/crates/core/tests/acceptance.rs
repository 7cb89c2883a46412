//! End-to-end acceptance suite. Every criterion runs sequentially in one
//! test so that wall-clock budgets are not distorted by parallel tests, and
//! prints one PASS/FAIL line. Run with `--nocapture` to see the lines.

use std::f64::consts::{E, FRAC_PI_2, TAU};
use std::time::{Duration, Instant};

use pqflow_core::diffgeo::ChartPoint;
use pqflow_core::flow::{
    detect_omega_limit, integrate_flow, random_metric, track_z, verify_z_barrier, FlowOptions,
    RandomMetricSpec,
};
use pqflow_core::knot::{
    build_annulus_cylinder, build_plane, build_w_structures, check_extended_j, offaxis_norm_drift,
    phi_pullback_check, plane_contact, removable_singularity_check, AnnulusOptions, KnotModel,
    PlaneOptions, WSpace,
};
use pqflow_core::prequant::models::{arctan_space, constant_space};
use pqflow_core::prequant::{
    build_cylinder, hofer_energy_quadrature, holomorphy_residual, puncture_mass,
    residual_refinement, CylinderMap, CylinderOptions, FiberPerturbation, LiftedCylinder,
    PrequantSpace, ResidualGrid, SigmoidFamily,
};
use pqflow_core::spiral::{
    critical_bound, critical_bound_scaled, eval_g, golden_section_minimize, grad_g, te_lower_bound,
    AnnulusParams, FDeltaField, SpiralParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 20;
const STARTS: usize = 5;

struct Outcome {
    id: u32,
    name: &'static str,
    passed: bool,
    detail: String,
    elapsed: Duration,
    budget: Duration,
}

fn run(
    id: u32,
    name: &'static str,
    budget_s: f64,
    body: impl FnOnce() -> (bool, String),
) -> Outcome {
    let t = Instant::now();
    let (ok, detail) = body();
    let elapsed = t.elapsed();
    let budget = Duration::from_secs_f64(budget_s);
    let passed = ok && elapsed <= budget;
    println!(
        "[{}] {id:>2}. {name}: {detail} ({:.2} s of {budget_s} s)",
        if passed { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    Outcome {
        id,
        name,
        passed,
        detail,
        elapsed,
        budget,
    }
}

fn metric(seed: u64) -> pqflow_core::flow::RandomMetric {
    random_metric(RandomMetricSpec::new(seed, 3, 0.2, 1.0)).expect("metric")
}

fn starts(seed: u64) -> Vec<ChartPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    (0..STARTS)
        .map(|_| {
            ChartPoint::new(
                vec![rng.gen_range(-0.8..-0.2), rng.gen_range(0.0..TAU)],
                vec![1],
            )
        })
        .collect()
}

fn tight() -> CylinderOptions {
    CylinderOptions {
        rtol: 1e-12,
        atol: 1e-14,
        h_max: 0.01,
        ..CylinderOptions::default()
    }
}

fn criterion_1() -> (bool, String) {
    let f = FDeltaField(SpiralParams::new(1.0));
    let (mut ok, mut min_cov, mut min_wind, mut max_dz) =
        (true, f64::INFINITY, f64::INFINITY, 0.0_f64);
    for seed in 0..SEEDS {
        let g = metric(seed);
        for x0 in starts(seed) {
            let base = FlowOptions::default();
            let halved = FlowOptions {
                rtol: 0.5 * base.rtol,
                atol: 0.5 * base.atol,
                ..base
            };
            let tr = integrate_flow(&f, &g, &x0, &base).expect("flow");
            let tr2 = integrate_flow(&f, &g, &x0, &halved).expect("flow");
            let reached = tr.s(tr.len() - 1) > -0.05;
            let lim = detect_omega_limit(&tr, 0.05, 36).expect("limit");
            let (z1, z2) = (track_z(&tr), track_z(&tr2));
            let dz = (z1 - z2).abs();
            min_cov = min_cov.min(lim.coverage);
            min_wind = min_wind.min(lim.windings);
            max_dz = max_dz.max(dz);
            ok &= reached
                && lim.coverage == 1.0
                && lim.windings >= 3.0
                && z1.is_finite()
                && dz <= 1e-3;
        }
    }
    (ok, format!("{} runs, min coverage {min_cov}, min windings {min_wind:.2}, max |dz_sup| {max_dz:.2e}", SEEDS as usize * STARTS))
}

fn criterion_2() -> (bool, String) {
    let params = SpiralParams::new(1.0);
    let delta = params.delta;
    let n = 400;
    // value = m·e^k with e^k > 0, so the sign certificate is min m > 0; the
    // plain value underflows to 0 for s > −1/745
    let (mut min_mantissa, mut min_direct) = (f64::INFINITY, f64::INFINITY);
    for i in 0..n {
        let s = -delta + (delta - 1e-3) * i as f64 / (n - 1) as f64;
        for j in 0..n {
            let t = TAU * j as f64 / n as f64;
            let (m, _) = critical_bound_scaled(s, t, &params);
            min_mantissa = min_mantissa.min(m);
            if s < -1.0 / 700.0 {
                min_direct = min_direct.min(critical_bound(s, t, &params));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut max_identity: f64 = 0.0;
    for _ in 0..10_000 {
        let s = rng.gen_range(-1.0..-1e-3);
        let t = rng.gen_range(0.0..TAU);
        let (gs, gt) = grad_g(s, t).expect("s < 0");
        max_identity = max_identity.max((s * s * gs + gt + eval_g(s, t)).abs());
    }
    (
        min_mantissa > 0.0 && min_direct > 0.0 && max_identity <= 1e-10,
        format!(
            "min scaled dF(s²∂s+∂t) = {min_mantissa:.3e} (unscaled, s < -1/700: {min_direct:.3e}), max |s²G_s + G_t + G| = {max_identity:.2e}"
        ),
    )
}

fn criterion_3() -> (bool, String) {
    let f = FDeltaField(SpiralParams::new(1.0));
    let (mut violations, mut runs, mut worst_start) = (0usize, 0usize, f64::NEG_INFINITY);
    for seed in 0..SEEDS {
        let g = metric(seed);
        for x0 in starts(seed) {
            let tr = integrate_flow(&f, &g, &x0, &FlowOptions::default()).expect("flow");
            let rep = verify_z_barrier(&tr, 1.25, -0.3, 1.0).expect("barrier");
            violations += rep.violations.len();
            if rep.checked_points == 0 {
                violations += 1;
            }
            worst_start = worst_start.max(rep.s_star_effective);
            runs += 1;
        }
    }
    (
        violations == 0,
        format!(
            "{runs} runs, {violations} violations, latest effective start s = {worst_start:.3}"
        ),
    )
}

fn criterion_4() -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();

    let space = arctan_space();
    let cyl = build_cylinder(&space, &[0.0, 0.0], (-1.0, 1.0), &tight()).expect("arctan");
    let grid = ResidualGrid {
        s_range: (-0.5, 0.5),
        n_s: 21,
        n_t: 8,
    };
    let r = residual_refinement(&cyl, &space.contact(), &grid, 1e-4).expect("residual");
    let ratio = r.refinement_ratio.unwrap_or(f64::NAN);
    let bad = holomorphy_residual(
        &FiberPerturbation {
            inner: &cyl,
            amplitude: 0.1,
        },
        &space.contact(),
        &grid,
        1e-4,
    )
    .expect("control");
    ok &= r.max_residual() <= 1e-6 && (3.5..=4.5).contains(&ratio) && bad.max_residual() > 0.05;
    parts.push(format!(
        "arctan max {:.2e} ratio {ratio:.3} control {:.2e}",
        r.max_residual(),
        bad.max_residual()
    ));

    let model = KnotModel::standard(1).expect("model");
    let params = AnnulusParams::new(1.0, 2.0).expect("params");
    let opts = AnnulusOptions {
        s_range: (-2.0, 2.0),
        cylinder: tight(),
        ..AnnulusOptions::default()
    };
    let c = build_annulus_cylinder(&model, params, &[1.5, 0.0], &opts).expect("annulus");
    let contact = c.space.contact();
    // fine enough in s to resolve the two cutoff bands the lift crosses
    let grid = ResidualGrid {
        s_range: (-1.0, 1.0),
        n_s: 401,
        n_t: 8,
    };
    let r = residual_refinement(&c.cylinder, &contact, &grid, 1e-4).expect("residual");
    let ratio = r.refinement_ratio.unwrap_or(f64::NAN);
    let bad = holomorphy_residual(
        &FiberPerturbation {
            inner: &c.cylinder,
            amplitude: 0.1,
        },
        &contact,
        &grid,
        1e-4,
    )
    .expect("control");
    ok &= r.max_residual() <= 1e-6 && (3.5..=4.5).contains(&ratio) && bad.max_residual() > 0.05;
    parts.push(format!(
        "annulus max {:.2e} at s = {:.3} ratio {ratio:.3} control {:.2e}",
        r.max_residual(),
        r.argmax.0,
        bad.max_residual()
    ));
    (ok, parts.join("; "))
}

fn energy_sup(space: &PrequantSpace, cyl: &LiftedCylinder) -> (f64, f64) {
    let (lo, hi) = cyl.s_range();
    let a_mid = 0.5 * (cyl.a(lo).expect("inside") + cyl.a(hi).expect("inside"));
    let rep =
        hofer_energy_quadrature(space, cyl, &SigmoidFamily::new(a_mid), lo, hi).expect("energy");
    (rep.supremum, rep.stokes_defect)
}

fn criterion_5() -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    let mut check = |name: &str, sup: f64, stokes: f64, target: f64| {
        let gap = (sup - target).abs() / target;
        ok &= gap <= 0.01 && stokes <= 1e-6;
        parts.push(format!(
            "{name} {sup:.5} vs {target:.5} ({:.3}%)",
            100.0 * gap
        ));
    };

    let c = 0.3;
    let space = constant_space(c);
    let cyl = build_cylinder(
        &space,
        &[0.2, 0.1],
        (-5.0, 5.0),
        &CylinderOptions::default(),
    )
    .expect("trivial");
    let (sup, st) = energy_sup(&space, &cyl);
    check("trivial", sup, st, TAU * c.exp());

    let space = arctan_space();
    let opts = CylinderOptions {
        h_max: f64::INFINITY,
        ..CylinderOptions::default()
    };
    let cyl = build_cylinder(&space, &[0.0, 0.0], (-2e5, 2e5), &opts).expect("arctan");
    let (sup, st) = energy_sup(&space, &cyl);
    check("arctan", sup, st, TAU * FRAC_PI_2.exp());

    let model = KnotModel::standard(1).expect("model");
    let params = AnnulusParams::new(1.0, 2.0).expect("params");
    let ann = build_annulus_cylinder(&model, params, &[1.5, 0.0], &AnnulusOptions::default())
        .expect("annulus");
    let (sup, st) = energy_sup(&ann.space, &ann.cylinder);
    check("annulus", sup, st, TAU);

    let r0 = 1.0;
    let plane = build_plane(&model, r0, &[0.0, -3.0], &PlaneOptions::default()).expect("plane");
    let (sup, st) = energy_sup(&plane.space, &plane.cylinder);
    check("plane", sup, st, TAU * r0 * r0);
    (ok, parts.join("; "))
}

fn criterion_6() -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    let grid = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    };

    let space = constant_space(0.3);
    let cyl = build_cylinder(
        &space,
        &[0.2, 0.1],
        (-5.0, 5.0),
        &CylinderOptions::default(),
    )
    .expect("trivial");
    let m = puncture_mass(&cyl, space.lambda_f().as_ref(), &grid(-4.5, 4.5, 19)).expect("mass");
    ok &= m.nondecreasing_in_s(1e-8);
    parts.push(format!("trivial min step {:.1e}", m.min_increment));

    let space = arctan_space();
    let cyl = build_cylinder(
        &space,
        &[0.0, 0.0],
        (-100.0, 100.0),
        &CylinderOptions::default(),
    )
    .expect("arctan");
    let m = puncture_mass(&cyl, space.lambda_f().as_ref(), &grid(-95.0, 95.0, 39)).expect("mass");
    ok &= m.nondecreasing_in_s(1e-8);
    parts.push(format!("arctan min step {:.1e}", m.min_increment));

    let model = KnotModel::standard(1).expect("model");
    let params = AnnulusParams::new(1.0, 2.0).expect("params");
    let ann = build_annulus_cylinder(&model, params, &[1.5, 0.0], &AnnulusOptions::default())
        .expect("annulus");
    let m = puncture_mass(
        &ann.cylinder,
        ann.space.lambda_f().as_ref(),
        &grid(-19.0, 19.0, 77),
    )
    .expect("mass");
    ok &= m.nondecreasing_in_s(1e-8);
    parts.push(format!("annulus min step {:.1e}", m.min_increment));

    let plane = build_plane(&model, 1.0, &[0.0, -3.0], &PlaneOptions::default()).expect("plane");
    let pushed = plane.pushed();
    let lambda = plane_contact(&model, 1.0, false);
    let (lo, hi) = pushed.s_range();
    let m = puncture_mass(
        &pushed,
        lambda.lambda().as_ref(),
        &grid(lo + 0.01, hi - 0.01, 60),
    )
    .expect("mass");
    ok &= m.nondecreasing_in_s(1e-8);
    parts.push(format!("plane min step {:.1e}", m.min_increment));

    let s_puncture = 1e-3f64.ln() / TAU;
    let at = puncture_mass(&pushed, lambda.lambda().as_ref(), &[s_puncture])
        .expect("mass")
        .mass_curve[0];
    ok &= at.abs() <= 1e-5;
    parts.push(format!("plane mass at |z| = 1e-3: {at:.2e}"));
    (ok, parts.join("; "))
}

fn criterion_7() -> (bool, String) {
    let mut ok = true;
    let (mut pull, mut jsq, mut gdef, mut conj, mut sq) =
        (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    let mut finite = true;
    for n in 1..=3 {
        let (w, rep) = build_w_structures(n, None, 5).expect("w structures");
        jsq = jsq.max(rep.max_j_square_defect);
        gdef = gdef.max(rep.max_metric_defect);
        ok &= rep.max_j_square_defect <= 1e-12 && rep.max_metric_defect <= 1e-9;

        let mut rng = ChaCha8Rng::seed_from_u64(70 + n as u64);
        for _ in 0..100 {
            let mut x: Vec<f64> = (0..2 * n + 1).map(|_| rng.gen_range(-1.5..1.5)).collect();
            x[0] = rng.gen_range(0.0..TAU);
            x[1] = rng.gen_range(0.0..TAU);
            pull = pull.max(phi_pullback_check(&w, &x).max());
        }
        let model = KnotModel::standard(n).expect("model");
        // points of S¹ × R^{2n}: off the locus, and their projections onto it
        let off_y: Vec<Vec<f64>> = (0..100)
            .map(|_| {
                let mut y: Vec<f64> = (0..2 * n + 1).map(|_| rng.gen_range(-1.5..1.5)).collect();
                y[0] = rng.gen_range(0.0..TAU);
                y
            })
            .collect();
        let on_y: Vec<Vec<f64>> = off_y
            .iter()
            .map(|y| {
                let mut z = y.clone();
                z[2 * n - 1] = 0.0;
                z[2 * n] = 0.0;
                z
            })
            .collect();
        let rep = check_extended_j(&model, &off_y, &on_y).expect("extended J");
        conj = conj.max(rep.max_conjugation_defect);
        sq = sq.max(rep.max_square_defect);
        finite &= rep.all_finite;
        ok &=
            rep.max_conjugation_defect <= 1e-9 && rep.max_square_defect <= 1e-12 && rep.all_finite;
    }
    ok &= pull <= 1e-10;
    (
        ok,
        format!(
            "pullback {pull:.1e}, j1² + I {jsq:.1e}, g_j1 {gdef:.1e}, J conjugation {conj:.1e}, J² + I {sq:.1e}, finite {finite}"
        ),
    )
}

fn criterion_8() -> (bool, String) {
    let model = KnotModel::standard(1).expect("model");
    let plane = build_plane(&model, 1.0, &[0.0, -3.0], &PlaneOptions::default()).expect("plane");
    let rep = removable_singularity_check(&plane, &model, 1..=12, 16).expect("removability");
    let ok = rep.quadratic_relative_residual <= 1e-6
        && (80.0..=120.0).contains(&rep.taylor_ratio)
        && rep.coverage.fiber_coverage == 1.0
        && rep.coverage.base_coverage == 1.0;
    (
        ok,
        format!(
            "quadratic fit {:.1e}, Taylor residual {:.2e} -> {:.2e} (factor {:.2}), linear part {:.1e}, coverage {}/{}",
            rep.quadratic_relative_residual,
            rep.taylor_residual.0,
            rep.taylor_residual.1,
            rep.taylor_ratio,
            rep.linear_residual,
            rep.coverage.fiber_coverage,
            rep.coverage.base_coverage
        ),
    )
}

fn criterion_9() -> (bool, String) {
    let opts = FlowOptions {
        rtol: 1e-11,
        atol: 1e-13,
        ..FlowOptions::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut worst, mut runs) = (0.0_f64, 0);
    for n in [2usize, 3] {
        let w = WSpace::new(n, None).expect("w");
        for _ in 0..3 {
            let mut x: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-0.6..0.6)).collect();
            x[0] = rng.gen_range(0.0..TAU);
            x[2 * n - 1] = rng.gen_range(-1.5..-0.3);
            let d = offaxis_norm_drift(&w, 1.0, &x, 40.0, &opts).expect("drift");
            worst = worst.max(d.max_deviation);
            runs += 1;
        }
    }
    (
        worst <= 1e-8,
        format!("{runs} flows, max | |p| - |p0| | = {worst:.2e}"),
    )
}

fn criterion_10() -> (bool, String) {
    let (t, v) = golden_section_minimize(te_lower_bound, -10.0, 0.0, 1e-10);
    let exact = 1.0 - 9.0 / (4.0 * E);
    let ok = (t + 1.0).abs() <= 1e-6 && (v - exact).abs() <= 1e-12 && v > 0.17;
    (
        ok,
        format!("argmin {t:.9}, min {v:.12} (1 - 9/(4e) = {exact:.12})"),
    )
}

#[test]
fn acceptance() {
    let outcomes = vec![
        run(1, "circle limit set for random metrics", 60.0, criterion_1),
        run(2, "critical-set certificate", 5.0, criterion_2),
        run(3, "z barrier", 30.0, criterion_3),
        run(4, "holomorphy residual", 60.0, criterion_4),
        run(5, "energy consistency", 60.0, criterion_5),
        run(6, "mass monotonicity and puncture limit", 30.0, criterion_6),
        run(
            7,
            "W-space, Phi and extended J identities",
            20.0,
            criterion_7,
        ),
        run(8, "removable singularity", 120.0, criterion_8),
        run(9, "|p| conservation off the axis", 30.0, criterion_9),
        run(10, "lower bound 1 + (9/4) t e^t", 1.0, criterion_10),
    ];
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| {
            format!(
                "{}. {} ({}; {:.2} s of {:.0} s)",
                o.id,
                o.name,
                o.detail,
                o.elapsed.as_secs_f64(),
                o.budget.as_secs_f64()
            )
        })
        .collect();
    println!(
        "{} of {} criteria passed",
        outcomes.len() - failed.len(),
        outcomes.len()
    );
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
