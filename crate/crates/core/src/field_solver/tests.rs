use super::*;
use crate::geometry::{build_model, cell_id, slab_model, CrossbarSpec, MeshPolicy};

fn coarse() -> MeshPolicy {
    MeshPolicy { h_min: 5e-9, growth: 2.0, h_max: 400e-9, ..Default::default() }
}

fn small(rows: usize, cols: usize) -> VoxelModel {
    let mut spec = CrossbarSpec::with_size(rows, cols);
    spec.th_margin = 300e-9;
    spec.line_overhang = 100e-9;
    build_model(&spec, &coarse()).unwrap()
}

fn opts() -> SolverOptions {
    SolverOptions::with_tol(1e-10)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

// ΔT at the centre of the heated end voxel of an insulated prism whose far
// face is held at the sink; the probe sits h/2 inside, so the error is h/(2L)
fn slab_rise(nz: usize, power: f64) -> f64 {
    let (side, length) = (80e-9, 20e-9);
    let model = slab_model(side, length, nz);
    let op = HeatOperator::with_walls(&model, Walls([false, false, false, false, false, true]));
    let mut q = ScalarField::uniform(Quantity::PowerDensity, nz, 0.0);
    q.values[0] = power / model.volume(0);
    let (t, _) = solve_heat_steady_with(&model, &op, &q, 300.0, &opts(), None).unwrap();
    t.values[0] - 300.0
}

#[test]
fn slab_converges_to_analytic_resistance() {
    let exact = 20e-9 / (0.5 * 80e-9 * 80e-9);
    assert!(rel(exact, 6.25e6) < 1e-12);
    let levels = [4, 8, 16, 32, 64];
    let errors: Vec<f64> = levels.iter().map(|&n| rel(slab_rise(n, 1e-6) / 1e-6, exact)).collect();
    for w in errors.windows(2) {
        assert!(w[1] < w[0], "{errors:?}");
    }
    for (e, n) in errors.iter().zip(levels) {
        assert!((e - 0.5 / n as f64).abs() < 1e-6, "{errors:?}");
    }
    assert!(errors[4] < 0.02, "{errors:?}");
}

#[test]
fn slab_rise_is_linear_in_power() {
    let a = slab_rise(8, 1e-6);
    let b = slab_rise(8, 3e-6);
    assert!(rel(b, 3.0 * a) < 1e-8);
}

#[test]
fn zero_bias_gives_nothing() {
    let model = small(1, 1);
    let bias = BiasAssignment::grounded(1, 1);
    let e = solve_electrical(&model, &bias, &opts()).unwrap();
    assert!(e.potential.values.iter().all(|v| *v == 0.0));
    assert!(e.power_density.values.iter().all(|v| *v == 0.0));
    assert!(e.row_currents.iter().chain(&e.col_currents).all(|i| *i == 0.0));
    let (t, _) = solve_heat_steady(&model, &e.power_density, 300.0, &opts()).unwrap();
    assert!(t.values.iter().all(|v| *v == 300.0));
}

#[test]
fn all_floating_is_rejected() {
    let model = small(1, 1);
    let bias = BiasAssignment { rows: vec![None], cols: vec![None], lrs: vec![true] };
    assert!(matches!(solve_electrical(&model, &bias, &opts()), Err(Error::Argument(_))));
}

#[test]
fn single_filament_near_analytic_resistance() {
    let model = small(1, 1);
    let e = solve_electrical(&model, &BiasAssignment::all_rows(1, 1, 0.3), &opts()).unwrap();
    let r_fil = 20e-9 / (7e3 * std::f64::consts::PI * 25e-18);
    let i = e.row_currents[0];
    // filament plus electrode spreading; the filament dominates
    assert!(i < 0.3 / r_fil && i > 0.85 * 0.3 / r_fil, "{i:e}");
    assert!(rel(-e.col_currents[0], i) < 1e-3);
    assert!(rel(e.terminal_power(), 0.3 * i) < 1e-9);
    let cell = e.cell_powers(&model)[0];
    assert!(cell <= e.terminal_power() && cell > 0.9 * e.terminal_power());
}

#[test]
fn parallel_filaments_split_current() {
    let model = small(1, 2);
    let e = solve_electrical(&model, &BiasAssignment::all_rows(1, 2, 0.3), &opts()).unwrap();
    let total = e.row_currents[0];
    for i in &e.col_currents {
        assert!(rel(-i, 0.5 * total) < 0.01, "{i:e} of {total:e}");
    }
}

#[test]
fn hrs_cells_carry_almost_nothing() {
    let model = small(1, 2);
    let bias = BiasAssignment::all_rows(1, 2, 0.3).with_single_lrs(0);
    let e = solve_electrical(&model, &bias, &opts()).unwrap();
    let p = e.cell_powers(&model);
    assert!(p[1] < 1e-6 * p[0], "{p:?}");
}

#[test]
fn heat_balance_and_maximum_principle() {
    let model = small(1, 1);
    let e = solve_electrical(&model, &BiasAssignment::all_rows(1, 1, 0.3), &opts()).unwrap();
    let op = HeatOperator::new(&model);
    let (t, _) = solve_heat_steady_with(&model, &op, &e.power_density, 300.0, &opts(), None).unwrap();
    let injected = total_integral(&model, &e.power_density);
    let rise: Vec<f64> = t.values.iter().map(|v| v - 300.0).collect();
    assert!(rel(op.wall_flux(&rise), injected) < 0.01);
    assert!(t.min() >= 300.0);
    let hottest = t.values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert!(model.cells[0].filament.contains(&hottest));
}

#[test]
fn superposition_of_single_sources() {
    let model = small(1, 2);
    let single = |cell: usize| {
        let bias = BiasAssignment::single_row(1, 2, 1, 0.3).with_single_lrs(cell);
        let e = solve_electrical(&model, &bias, &opts()).unwrap();
        e.power_density
    };
    let (q0, q1) = (single(0), single(1));
    let both = ScalarField {
        quantity: Quantity::PowerDensity,
        values: q0.values.iter().zip(&q1.values).map(|(a, b)| a + 2.0 * b).collect(),
    };
    let solve = |q: &ScalarField| probe_temperatures(&model, &solve_heat_steady(&model, q, 300.0, &opts()).unwrap().0);
    let (t0, t1, tb) = (solve(&q0), solve(&q1), solve(&both));
    for n in 0..2 {
        let predicted = (t0[n] - 300.0) + 2.0 * (t1[n] - 300.0);
        assert!(rel(tb[n] - 300.0, predicted) < 1e-6);
    }
}

#[test]
fn transient_reaches_steady_state() {
    let model = small(1, 1);
    let e = solve_electrical(&model, &BiasAssignment::all_rows(1, 1, 0.3), &opts()).unwrap();
    let probes = Probe::cell_probes(&model);
    let first = solve_heat_transient(&model, &e.power_density, 300.0, &probes, &DtPolicy::default(), 20e-6, &opts())
        .unwrap();
    let t_s = first.report.t_s.expect("steady state reached");
    assert!(t_s > 0.0 && t_s < 10e-6, "t_s = {t_s:e}");
    let trace: Vec<f64> = first.trace.iter().map(|s| s.temperature).collect();
    assert!(trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    let run = solve_heat_transient(&model, &e.power_density, 300.0, &probes, &DtPolicy::default(), 2.0 * t_s, &opts())
        .unwrap();
    let last = run.trace.last().unwrap().temperature;
    assert!(rel(last - 300.0, run.steady_probe[0] - 300.0) < 0.01);
}

#[test]
fn transient_without_source_is_flat() {
    let model = small(1, 1);
    let q = ScalarField::uniform(Quantity::PowerDensity, model.n_voxels(), 0.0);
    let run = solve_heat_transient(&model, &q, 300.0, &Probe::cell_probes(&model), &DtPolicy::default(), 1e-6, &opts())
        .unwrap();
    assert!(run.trace.iter().all(|s| s.temperature == 300.0));
    assert_eq!(run.report.t_s, Some(0.0));
}

#[test]
fn coupled_single_pass_without_feedback() {
    let model = small(1, 1);
    let out = solve_coupled(&model, &BiasAssignment::all_rows(1, 1, 0.3), &CoupledOptions::default()).unwrap();
    assert_eq!(out.report.iterations, 1);
    let zero = solve_coupled(&model, &BiasAssignment::grounded(1, 1), &CoupledOptions::default()).unwrap();
    assert!(zero.cell_powers.iter().all(|p| *p == 0.0));
    assert!(zero.temperature.values.iter().all(|t| *t == 300.0));
}

#[test]
fn coupled_with_heating_conductivity_converges_hotter() {
    let model = small(1, 1);
    let bias = BiasAssignment::all_rows(1, 1, 0.3);
    let plain = solve_coupled(&model, &bias, &CoupledOptions::default()).unwrap();
    let scale = |r: Region, t: f64| if r == Region::Cf { 1.0 + 1e-3 * (t - 300.0) } else { 1.0 };
    let hot = solve_coupled_with(&model, &bias, &CoupledOptions::default(), Some(&scale)).unwrap();
    assert!(hot.report.iterations > 1);
    assert!(hot.cell_powers[0] > plain.cell_powers[0]);
}

#[test]
fn field_dump_round_trip() {
    let model = small(1, 1);
    let e = solve_electrical(&model, &BiasAssignment::all_rows(1, 1, 0.3), &opts()).unwrap();
    let mut buf = Vec::new();
    write_field(&mut buf, &model, &e.potential).unwrap();
    let back = read_field(buf.as_slice()).unwrap();
    assert_eq!(back.field, e.potential);
    assert_eq!(back.dims, model.dims());
    assert_eq!(back.axes[2], model.z);
    let text = String::from_utf8(buf).unwrap();
    let broken = text.replacen("data", "dat", 1);
    assert!(matches!(read_field(broken.as_bytes()), Err(Error::Parse { .. })));
}

#[test]
fn probe_csv_columns() {
    let trace = vec![ProbeSample { time: 1e-9, probe: "(1,1)".into(), temperature: 301.5 }];
    let mut buf = Vec::new();
    write_probe_csv(&mut buf, &trace).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text, "time_s,probe_name,T_K\n1e-9,\"(1,1)\",301.5\n");
}

#[test]
fn mirrored_array_is_symmetric() {
    let model = small(3, 3);
    let spec = &model.spec;
    let src = cell_id(spec, 2, 2).unwrap();
    let bias = BiasAssignment::single_row(3, 3, 2, 0.3).with_single_lrs(src);
    let e = solve_electrical(&model, &bias, &opts()).unwrap();
    let (t, _) = solve_heat_steady(&model, &e.power_density, 300.0, &opts()).unwrap();
    let p = probe_temperatures(&model, &t);
    let corners = [p[0], p[2], p[6], p[8]];
    let edges = [p[1], p[3], p[5], p[7]];
    for c in corners {
        assert!(rel(c, corners[0]) < 1e-6);
    }
    for e in edges {
        assert!(rel(e - 300.0, edges[0] - 300.0) < 1e-3);
    }
    assert!(p[src] > edges[0] && edges[0] > corners[0]);
}
