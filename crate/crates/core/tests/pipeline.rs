//! End-to-end checks on a coarse mesh: field solve → extraction → compact
//! network → netlist.

use xtalk_core::extraction::{extract_coupling_matrix, extract_rth, CouplingMatrix, ExtractionOptions};
use xtalk_core::field_solver::{probe_temperatures, solve_electrical, solve_heat_steady, BiasAssignment, SolverOptions};
use xtalk_core::geometry::{build_model, CrossbarSpec, MeshPolicy, VoxelModel};
use xtalk_core::thermal_network::{cell_temperatures, emit_netlist, parse_netlist, NetlistOptions, ThermalNetwork};

fn coarse(rows: usize, cols: usize) -> VoxelModel {
    let mut spec = CrossbarSpec::with_size(rows, cols);
    spec.th_margin = 300e-9;
    spec.line_overhang = 100e-9;
    let mesh = MeshPolicy { h_min: 5e-9, growth: 2.0, h_max: 400e-9, ..Default::default() };
    build_model(&spec, &mesh).unwrap()
}

fn opts() -> ExtractionOptions {
    ExtractionOptions { solver: SolverOptions::with_tol(1e-10), ..Default::default() }
}

#[test]
fn coupling_does_not_depend_on_power() {
    let model = coarse(2, 2);
    let a = extract_coupling_matrix(&model, 1e-6, &opts()).unwrap();
    let b = extract_coupling_matrix(&model, 2.45e-6, &opts()).unwrap();
    for (x, y) in a.matrix.entries.iter().zip(&b.matrix.entries) {
        assert!((x - y).abs() < 1e-6, "{x} vs {y}");
    }
    for (x, y) in a.matrix.rth.iter().zip(&b.matrix.rth) {
        assert!((x / y - 1.0).abs() < 1e-6);
    }
}

#[test]
fn sweep_fit_matches_matrix_diagonal() {
    let model = coarse(2, 2);
    let ext = extract_coupling_matrix(&model, 2.45e-6, &opts()).unwrap();
    let fit = extract_rth(&model, 3, &[0.5e-6, 1e-6, 2e-6], &opts()).unwrap();
    assert!(fit.fit_residual < 1e-6);
    assert!((fit.rth / ext.matrix.rth[3] - 1.0).abs() < 1e-6);
    assert!(fit.points.windows(2).all(|w| w[1].bias > w[0].bias));
}

#[test]
fn compact_network_reproduces_all_rows_read() {
    let model = coarse(2, 2);
    let spec = &model.spec;
    let net = ThermalNetwork::new(extract_coupling_matrix(&model, 2.45e-6, &opts()).unwrap().matrix, spec.t_amb).unwrap();
    let solver = SolverOptions::with_tol(1e-10);
    let e = solve_electrical(&model, &BiasAssignment::all_rows(2, 2, 0.3), &solver).unwrap();
    let (t, _) = solve_heat_steady(&model, &e.power_density, spec.t_amb, &solver).unwrap();
    let field = probe_temperatures(&model, &t);
    // line sharing changes each filament's field pattern a little, so this
    // is looser than pure single-source superposition
    let compact = cell_temperatures(&net, &e.cell_powers(&model)).unwrap();
    for (f, c) in field.iter().zip(&compact) {
        let (f, c) = (f - spec.t_amb, *c);
        assert!((c / f - 1.0).abs() < 0.05, "field {f:.3} K vs compact {c:.3} K");
    }
}

#[test]
fn extracted_matrix_survives_text_and_netlist() {
    let model = coarse(1, 2);
    let m = extract_coupling_matrix(&model, 2.45e-6, &opts()).unwrap().matrix;
    let mut buf = Vec::new();
    m.write_text(&mut buf, 300.0).unwrap();
    let (back, t_amb) = CouplingMatrix::read_text(buf.as_slice()).unwrap();
    assert_eq!(back, m);
    assert_eq!(t_amb, 300.0);
    let net = ThermalNetwork::new(back, t_amb).unwrap();
    let parsed = parse_netlist(&emit_netlist(&net, &NetlistOptions::default())).unwrap();
    assert_eq!(parsed.rth, m.rth);
    assert_eq!(parsed.entries, m.entries);
    assert_eq!(parsed.controlled_sources, 2);
}
