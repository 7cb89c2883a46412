use std::f64::consts::{E, FRAC_PI_2, TAU};
use std::fmt::Write as _;

use anyhow::{anyhow, Result};
use pqflow_core::diffgeo::ChartPoint;
use pqflow_core::flow::{
    detect_omega_limit, integrate_flow, random_metric, track_z, verify_z_barrier, FlowOptions,
    RandomMetricSpec,
};
use pqflow_core::knot::{
    annulus_space, build_annulus_cylinder, build_plane, build_w_structures, check_extended_j,
    phi_pullback_check, plane_contact, removable_singularity_check, AnnulusOptions, KnotModel,
    PlaneOptions, WSpace,
};
use pqflow_core::prequant::models::{arctan_space, constant_space};
use pqflow_core::prequant::{
    build_cylinder, hofer_energy_formula, hofer_energy_quadrature, holomorphy_residual,
    puncture_mass, residual_refinement, CylinderMap, CylinderOptions, FiberPerturbation,
    LiftedCylinder, PrequantSpace, ResidualGrid, SigmoidFamily,
};
use pqflow_core::spiral::{
    critical_bound_scaled, eval_g, golden_section_minimize, grad_g, te_lower_bound, AnnulusParams,
    FDeltaField, SpiralParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{stream_seed, EnergyModel, Experiment, ExperimentConfig, ResolvedTolerances};
use crate::report::Recorder;

/// Files produced by an experiment, as (relative path, contents).
pub type Artifacts = Vec<(String, String)>;

fn rng(cfg: &ExperimentConfig, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, label))
}

fn flow_options(t: &ResolvedTolerances) -> FlowOptions {
    FlowOptions {
        rtol: t.rtol,
        atol: t.atol,
        ..FlowOptions::default()
    }
}

fn tight_cylinder() -> CylinderOptions {
    CylinderOptions {
        rtol: 1e-12,
        atol: 1e-14,
        h_max: 0.01,
        ..CylinderOptions::default()
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Runs one experiment, filling `rec` with numbers and checks.
pub fn execute(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<Artifacts> {
    let tol = cfg.tolerances.resolved();
    match &cfg.experiment {
        Experiment::Flow {
            delta,
            metrics,
            starts,
            fourier_modes,
            mu,
            amplitude,
            start_s,
            barrier_c,
            barrier_s_star,
        } => {
            let p = FlowParams {
                delta: *delta,
                metrics: *metrics,
                starts: *starts,
                fourier_modes: *fourier_modes,
                mu: *mu,
                amplitude: *amplitude,
                start_s: *start_s,
                barrier_c: *barrier_c,
                barrier_s_star: *barrier_s_star,
            };
            flow(cfg, &p, &tol, rec)
        }
        Experiment::AnnulusCylinder {
            n,
            r_minus,
            r_plus,
            start,
            s_range,
        } => annulus(*n, *r_minus, *r_plus, start.as_deref(), *s_range, &tol, rec),
        Experiment::Plane { n, r0, start } => plane(*n, *r0, start.as_deref(), &tol, rec),
        Experiment::Identities { n, points } => identities(cfg, *n, *points, rec),
        Experiment::Energy(model) => energy(model, rec),
    }
}

struct FlowParams {
    delta: f64,
    metrics: usize,
    starts: usize,
    fourier_modes: usize,
    mu: f64,
    amplitude: f64,
    start_s: (f64, f64),
    barrier_c: f64,
    barrier_s_star: f64,
}

fn flow(
    cfg: &ExperimentConfig,
    p: &FlowParams,
    tol: &ResolvedTolerances,
    rec: &mut Recorder,
) -> Result<Artifacts> {
    let field = FDeltaField(SpiralParams::new(p.delta));
    let base = flow_options(tol);
    let halved = FlowOptions {
        rtol: 0.5 * base.rtol,
        atol: 0.5 * base.atol,
        ..base
    };
    let mut metric_rng = rng(cfg, "metrics");
    let mut start_rng = rng(cfg, "starts");

    let mut files = Artifacts::new();
    let mut runs = String::from(
        "metric,start,metric_seed,s0,t0,s_end,coverage,windings,z_sup,dz_sup,violations\n",
    );
    let (mut min_cov, mut min_wind, mut max_dz, mut max_z) =
        (f64::INFINITY, f64::INFINITY, 0.0_f64, 0.0_f64);
    let (mut violations, mut unreached, mut max_s_end) = (0usize, 0usize, f64::NEG_INFINITY);
    for i in 0..p.metrics {
        let metric_seed: u64 = metric_rng.gen();
        let spec = RandomMetricSpec::new(metric_seed, p.fourier_modes, p.mu, p.amplitude);
        let g = random_metric(spec)?;
        for j in 0..p.starts {
            let s0 = start_rng.gen_range(p.start_s.0..p.start_s.1);
            let t0 = start_rng.gen_range(0.0..TAU);
            let x0 = ChartPoint::new(vec![s0, t0], vec![1]);
            let tr = integrate_flow(&field, &g, &x0, &base)?;
            let tr2 = integrate_flow(&field, &g, &x0, &halved)?;
            let lim = detect_omega_limit(&tr, tol.band, tol.bins)?;
            let barrier = verify_z_barrier(&tr, p.barrier_c, p.barrier_s_star, 1.0)?;
            let (z1, z2) = (track_z(&tr), track_z(&tr2));
            let dz = (z1 - z2).abs();
            let s_end = tr.s(tr.len() - 1);
            let v = barrier.violations.len() + usize::from(barrier.checked_points == 0);

            if s_end <= -tol.band {
                unreached += 1;
            }
            min_cov = min_cov.min(lim.coverage);
            min_wind = min_wind.min(lim.windings);
            max_dz = if dz.is_finite() {
                max_dz.max(dz)
            } else {
                f64::INFINITY
            };
            max_z = if z1.is_finite() {
                max_z.max(z1)
            } else {
                f64::INFINITY
            };
            max_s_end = max_s_end.max(s_end);
            violations += v;
            let _ = writeln!(
                runs,
                "{i},{j},{metric_seed},{s0:.17e},{t0:.17e},{s_end:.17e},{},{:.17e},{z1:.17e},{dz:.17e},{v}",
                lim.coverage, lim.windings
            );
            files.push((
                format!("trajectories/metric{i:02}_start{j:02}.csv"),
                tr.to_csv(),
            ));
        }
    }
    files.push(("runs.csv".into(), runs));

    rec.metric("runs", (p.metrics * p.starts) as f64);
    rec.metric("max_s_end", max_s_end);
    rec.metric("z_sup", max_z);
    rec.at_most("runs_not_reaching_band", unreached as f64, 0.0);
    rec.at_least("min_coverage", min_cov, 1.0);
    rec.at_least("min_windings", min_wind, 3.0);
    rec.at_most("max_dz_sup_halved_tolerance", max_dz, 1e-3);
    rec.at_most("barrier_violations", violations as f64, 0.0);
    Ok(files)
}

fn energy_supremum(space: &PrequantSpace, cyl: &LiftedCylinder) -> Result<(f64, f64)> {
    let (lo, hi) = cyl.s_range();
    let a = |s: f64| {
        cyl.a(s)
            .ok_or_else(|| anyhow!("cylinder undefined at s = {s}"))
    };
    let a_mid = 0.5 * (a(lo)? + a(hi)?);
    let rep = hofer_energy_quadrature(space, cyl, &SigmoidFamily::new(a_mid), lo, hi)?;
    Ok((rep.supremum, rep.stokes_defect))
}

fn record_energy(rec: &mut Recorder, sup: f64, stokes: f64, target: f64) {
    rec.metric("energy", sup);
    rec.metric("energy_target", target);
    rec.at_most("energy_relative_gap", (sup - target).abs() / target, 0.01);
    rec.at_most("stokes_defect", stokes, 1e-6);
}

fn annulus(
    n: usize,
    r_minus: f64,
    r_plus: f64,
    start: Option<&[f64]>,
    s_range: (f64, f64),
    tol: &ResolvedTolerances,
    rec: &mut Recorder,
) -> Result<Artifacts> {
    let model = KnotModel::standard(n)?;
    let params = AnnulusParams::new(r_minus, r_plus)?;
    let start = start.map(<[f64]>::to_vec).unwrap_or_else(|| {
        let mut x = vec![0.0; 2 * n];
        x[2 * n - 2] = 0.5 * (r_minus + r_plus);
        x
    });
    let opts = AnnulusOptions {
        s_range,
        flow: flow_options(tol),
        band: tol.band,
        bins: tol.bins,
        ..AnnulusOptions::default()
    };
    let c = build_annulus_cylinder(&model, params, &start, &opts)?;
    for (label, cov) in [("forward", &c.forward), ("backward", &c.backward)] {
        rec.at_least(&format!("{label}_joint_coverage"), cov.joint_coverage, 1.0);
        rec.at_least(&format!("{label}_windings"), cov.windings, 3.0);
    }
    rec.at_most("transverse_drift", c.transverse_drift, 1e-12);

    let (sup, stokes) = energy_supremum(&c.space, &c.cylinder)?;
    record_energy(rec, sup, stokes, TAU);
    rec.metric(
        "energy_formula",
        hofer_energy_formula(&c.space, &c.cylinder).value,
    );

    let (lo, hi) = c.cylinder.s_range();
    let grid = linspace(lo + 1.0, hi - 1.0, 4 * (hi - lo - 2.0).ceil() as usize + 1);
    let m = puncture_mass(&c.cylinder, c.space.lambda_f().as_ref(), &grid)?;
    rec.holds("mass_nondecreasing", m.nondecreasing_in_s(1e-8));
    rec.metric("mass_low_end", m.mass_curve[0]);
    rec.metric("mass_high_end", m.mass_curve[m.mass_curve.len() - 1]);

    // the residual needs a denser, tighter lift than the long cylinder
    let near = AnnulusOptions {
        s_range: (-2.0, 2.0),
        cylinder: tight_cylinder(),
        ..opts
    };
    let cr = build_annulus_cylinder(&model, params, &start, &near)?;
    let contact = cr.space.contact();
    let rgrid = ResidualGrid {
        s_range: (-1.0, 1.0),
        n_s: 401,
        n_t: 8,
    };
    let r = residual_refinement(&cr.cylinder, &contact, &rgrid, tol.h)?;
    let control = holomorphy_residual(
        &FiberPerturbation {
            inner: &cr.cylinder,
            amplitude: 0.1,
        },
        &contact,
        &rgrid,
        tol.h,
    )?;
    rec.metric("residual_argmax_s", r.argmax.0);
    rec.at_most("max_residual", r.max_residual(), 1e-6);
    rec.within(
        "residual_refinement_ratio",
        r.refinement_ratio.unwrap_or(f64::NAN),
        3.5,
        4.5,
    );
    rec.greater("perturbed_control_residual", control.max_residual(), 0.05);

    Ok(vec![
        ("cylinder.csv".into(), c.cylinder.to_csv()),
        ("residual.json".into(), serde_json::to_string_pretty(&r)?),
    ])
}

fn plane(
    n: usize,
    r0: f64,
    start: Option<&[f64]>,
    tol: &ResolvedTolerances,
    rec: &mut Recorder,
) -> Result<Artifacts> {
    let model = KnotModel::standard(n)?;
    let start = start.map(<[f64]>::to_vec).unwrap_or_else(|| {
        let mut x = vec![0.0; 2 * n];
        x[2 * n - 1] = -3.0 + r0.ln();
        x
    });
    let opts = PlaneOptions {
        flow: flow_options(tol),
        band: tol.band,
        bins: tol.bins,
        ..PlaneOptions::default()
    };
    let p = build_plane(&model, r0, &start, &opts)?;
    rec.at_least("joint_coverage", p.coverage.joint_coverage, 1.0);
    rec.at_least("windings", p.coverage.windings, 3.0);
    rec.metric("tail_c_fit", p.tail.c_fit);
    rec.metric("tail_c_expected", p.tail.c_expected);
    rec.at_most("tail_relative_residual", p.tail.relative_residual, 1e-6);

    let (sup, stokes) = energy_supremum(&p.space, &p.cylinder)?;
    record_energy(rec, sup, stokes, TAU * r0 * r0);

    let pushed = p.pushed();
    let lambda = plane_contact(&model, r0, false);
    let (lo, hi) = pushed.s_range();
    let m = puncture_mass(
        &pushed,
        lambda.lambda().as_ref(),
        &linspace(lo + 0.01, hi - 0.01, 60),
    )?;
    rec.holds("mass_nondecreasing", m.nondecreasing_in_s(1e-8));
    let at = puncture_mass(&pushed, lambda.lambda().as_ref(), &[1e-3f64.ln() / TAU])?.mass_curve[0];
    rec.at_most("mass_at_radius_1e-3", at.abs(), 1e-5);

    let rem = removable_singularity_check(&p, &model, 1..=12, 16)?;
    rec.metric("quadratic_coefficient", rem.quadratic_coefficient);
    rec.metric("expected_quadratic_coefficient", rem.expected_coefficient);
    rec.at_most(
        "quadratic_fit_relative_residual",
        rem.quadratic_relative_residual,
        1e-6,
    );
    rec.within("taylor_residual_factor", rem.taylor_ratio, 80.0, 120.0);
    rec.at_least(
        "removability_fiber_coverage",
        rem.coverage.fiber_coverage,
        1.0,
    );
    rec.at_least(
        "removability_base_coverage",
        rem.coverage.base_coverage,
        1.0,
    );

    Ok(vec![
        ("plane.csv".into(), p.cylinder.to_csv()),
        (
            "removability.json".into(),
            serde_json::to_string_pretty(&rem)?,
        ),
    ])
}

fn identities(
    cfg: &ExperimentConfig,
    n: usize,
    points: usize,
    rec: &mut Recorder,
) -> Result<Artifacts> {
    let mut r = rng(cfg, "identities");
    let (w, wrep) = build_w_structures(n, None, r.gen())?;
    rec.at_most("j1_square_defect", wrep.max_j_square_defect, 1e-12);
    rec.at_most("g_j1_defect", wrep.max_metric_defect, 1e-9);
    rec.at_most("dbeta_power_defect", wrep.max_volume_defect, 1e-9);
    rec.greater("min_metric_eigenvalue", wrep.min_metric_eigenvalue, 0.0);

    let mut pullback: f64 = 0.0;
    for _ in 0..points {
        let mut x: Vec<f64> = (0..2 * n + 1).map(|_| r.gen_range(-1.5..1.5)).collect();
        x[0] = r.gen_range(0.0..TAU);
        x[1] = r.gen_range(0.0..TAU);
        pullback = pullback.max(phi_pullback_check(&w, &x).max());
    }
    rec.at_most("phi_pullback", pullback, 1e-10);

    let model = KnotModel::new(WSpace::new(n, None)?);
    let off: Vec<Vec<f64>> = (0..points)
        .map(|_| {
            let mut y: Vec<f64> = (0..2 * n + 1).map(|_| r.gen_range(-1.5..1.5)).collect();
            y[0] = r.gen_range(0.0..TAU);
            y
        })
        .collect();
    let on: Vec<Vec<f64>> = off
        .iter()
        .map(|y| {
            let mut z = y.clone();
            z[2 * n - 1] = 0.0;
            z[2 * n] = 0.0;
            z
        })
        .collect();
    let j = check_extended_j(&model, &off, &on)?;
    rec.at_most("extended_j_conjugation", j.max_conjugation_defect, 1e-9);
    rec.at_most("extended_j_square", j.max_square_defect, 1e-9);
    rec.holds("extended_j_finite", j.all_finite);

    let space = annulus_space(&model, AnnulusParams::new(1.0, 2.0)?)?;
    let sample: Vec<Vec<f64>> = (0..points)
        .map(|_| (0..2 * n).map(|_| r.gen_range(-2.0..2.0)).collect())
        .collect();
    let srep = space.verify(&sample)?;
    rec.holds("prequantization_structure", srep.passed());

    let params = SpiralParams::new(1.0);
    let (mut min_mantissa, mut identity) = (f64::INFINITY, 0.0_f64);
    for _ in 0..points.max(1000) {
        let s = r.gen_range(-1.0..-1e-3);
        let t = r.gen_range(0.0..TAU);
        min_mantissa = min_mantissa.min(critical_bound_scaled(s, t, &params).0);
        let (gs, gt) = grad_g(s, t).map_err(|e| anyhow!("grad G at s = {s}: {e}"))?;
        identity = identity.max((s * s * gs + gt + eval_g(s, t)).abs());
    }
    rec.greater("critical_set_bound", min_mantissa, 0.0);
    rec.at_most("g_identity", identity, 1e-10);

    let (t, v) = golden_section_minimize(te_lower_bound, -10.0, 0.0, 1e-10);
    rec.at_most("te_bound_argmin_offset", (t + 1.0).abs(), 1e-6);
    rec.at_most(
        "te_bound_min_error",
        (v - (1.0 - 9.0 / (4.0 * E))).abs(),
        1e-12,
    );
    Ok(vec![(
        "w_structures.json".into(),
        serde_json::to_string_pretty(&wrep)?,
    )])
}

fn energy(model: &EnergyModel, rec: &mut Recorder) -> Result<Artifacts> {
    let (space, cyl, target) = match *model {
        EnergyModel::Trivial { c } => {
            let space = constant_space(c);
            let cyl = build_cylinder(
                &space,
                &[0.2, 0.1],
                (-5.0, 5.0),
                &CylinderOptions::default(),
            )?;
            (space, cyl, TAU * c.exp())
        }
        EnergyModel::Arctan { s_half } => {
            let space = arctan_space();
            let opts = CylinderOptions {
                h_max: f64::INFINITY,
                ..CylinderOptions::default()
            };
            let cyl = build_cylinder(&space, &[0.0, 0.0], (-s_half, s_half), &opts)?;
            (space, cyl, TAU * FRAC_PI_2.exp())
        }
    };
    let (sup, stokes) = energy_supremum(&space, &cyl)?;
    record_energy(rec, sup, stokes, target);
    let (lo, hi) = cyl.s_range();
    let m = puncture_mass(
        &cyl,
        space.lambda_f().as_ref(),
        &linspace(0.95 * lo, 0.95 * hi, 39),
    )?;
    rec.holds("mass_nondecreasing", m.nondecreasing_in_s(1e-8));
    rec.metric("mass_limit_estimate", m.limit_estimate);
    Ok(vec![("cylinder.csv".into(), cyl.to_csv())])
}
