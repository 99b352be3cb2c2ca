//! Command implementations behind the `xtalk` binary.

pub mod config;
pub mod plots;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use xtalk_core::crossbar_circuit::{run_inference, InferencePattern, InferenceTrace};
use xtalk_core::extraction::{
    extract_coupling_matrix, extract_rth, sweep_spacing, write_rth_csv, write_spacing_csv, write_sweep_csv,
    CouplingMatrix,
};
use xtalk_core::field_solver::{
    solve_coupled, solve_electrical, solve_heat_transient, write_field, write_probe_csv, BiasAssignment,
    CoupledOptions, DtPolicy, Probe,
};
use xtalk_core::geometry::{build_model, cell_id, cell_label, cell_position, VoxelModel};
use xtalk_core::thermal_network::{emit_netlist, reference_network, ThermalNetwork};
use xtalk_core::{Error, Result};

pub use config::{Excitation, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SolveField,
    Extract,
    SweepSpacing,
    EmitNetlist,
    Infer,
    ShowConfig,
}

/// Command-line settings that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub quick: bool,
    pub tol: Option<f64>,
    pub coupling: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if self.quick {
            cfg.mesh = cfg.mesh.coarsened();
        }
        if let Some(tol) = self.tol {
            cfg.solver.tol = tol;
        }
        if let Some(c) = &self.coupling {
            cfg.inference.coupling = Some(c.clone());
            cfg.netlist.coupling = Some(c.clone());
        }
    }
}

/// Process exit status for an error.
///
/// 1 I/O, 2 bad input (config, arguments, files), 3 numerical failure,
/// 4 thermal runaway.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::Csv(_) => 1,
        Error::Argument(_)
        | Error::InvalidSpec(_)
        | Error::VoxelBudget { .. }
        | Error::Parse { .. }
        | Error::Config(_) => 2,
        Error::NoConvergence { .. }
        | Error::UnstableStep { .. }
        | Error::Oscillation { .. }
        | Error::FixedPoint { .. }
        | Error::Consistency(_) => 3,
        Error::Runaway { .. } => 4,
    }
}

/// Runs one command; human-readable progress goes to `log`.
pub fn run(cmd: Command, mut cfg: RunConfig, overrides: &Overrides, log: &mut (dyn Write + Send)) -> Result<()> {
    overrides.apply(&mut cfg);
    cfg.validate()?;
    if cmd == Command::ShowConfig {
        write!(log, "{}", cfg.to_toml_string()?)?;
        return Ok(());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(overrides.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Argument(format!("thread pool: {e}")))?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    pool.install(|| match cmd {
        Command::SolveField => solve_field(&cfg, log),
        Command::Extract => extract(&cfg, log),
        Command::SweepSpacing => spacing(&cfg, log),
        Command::EmitNetlist => netlist(&cfg, log),
        Command::Infer => infer(&cfg, log),
        Command::ShowConfig => unreachable!(),
    })
}

fn script(cfg: &RunConfig, name: &str, text: String) -> Result<()> {
    if cfg.plot_scripts {
        std::fs::write(cfg.out_dir.join(name), text)?;
    }
    Ok(())
}

fn create(cfg: &RunConfig, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(cfg.out_dir.join(name))?))
}

fn model(cfg: &RunConfig) -> Result<VoxelModel> {
    build_model(&cfg.crossbar, &cfg.mesh)
}

fn solve_field(cfg: &RunConfig, log: &mut dyn Write) -> Result<()> {
    let model = model(cfg)?;
    let spec = &model.spec;
    let (rows, cols) = (spec.rows, spec.cols);
    let f = &cfg.field;
    let solver = cfg.solver_options();
    let bias = match f.excitation {
        Excitation::Single => {
            let [r, c] = f.source;
            let cell = cell_id(spec, r, c)?;
            let unit = BiasAssignment::single_row(rows, cols, r, 1.0).with_single_lrs(cell);
            match f.power {
                Some(p) => {
                    // ohmic, so P scales with V²
                    let p_unit = solve_electrical(&model, &unit, &solver)?.cell_powers(&model)[cell];
                    if !(p_unit > 0.0) {
                        return Err(Error::Consistency(format!("cell {} dissipates nothing", cell_label(r, c))));
                    }
                    unit.scaled((p / p_unit).sqrt())
                }
                None => unit.scaled(f.v),
            }
        }
        Excitation::AllRows => BiasAssignment::all_rows(rows, cols, f.v),
        Excitation::Zero => BiasAssignment::grounded(rows, cols),
    };
    let sol = solve_coupled(&model, &bias, &CoupledOptions { solver, ..Default::default() })?;
    if f.dumps {
        write_field(create(cfg, "potential.dat")?, &model, &sol.electrical.potential)?;
        write_field(create(cfg, "temperature.dat")?, &model, &sol.temperature)?;
        write_field(create(cfg, "power_density.dat")?, &model, &sol.electrical.power_density)?;
    }
    let probes = Probe::cell_probes(&model);
    let mut out = csv::Writer::from_writer(create(cfg, "cells.csv")?);
    out.write_record(["cell", "row", "col", "P_W", "T_K", "dT_K"])?;
    for (n, p) in probes.iter().enumerate() {
        let (r, c) = cell_position(spec, n);
        let t = sol.temperature.mean_over(&model, &p.voxels);
        out.write_record([
            p.name.clone(),
            r.to_string(),
            c.to_string(),
            format!("{:e}", sol.cell_powers[n]),
            t.to_string(),
            (t - spec.t_amb).to_string(),
        ])?;
    }
    out.flush()?;

    let [nx, ny, nz] = model.dims();
    writeln!(log, "mesh {nx}×{ny}×{nz} = {} voxels", model.n_voxels())?;
    let v = bias.rows.iter().flatten().fold(0.0f64, |a, b| a.max(*b));
    writeln!(log, "row bias {v:.4} V, terminal power {:.4e} W", sol.electrical.terminal_power())?;
    writeln!(log, "peak temperature {:.2} K", sol.temperature.max())?;

    if f.transient {
        let run =
            solve_heat_transient(&model, &sol.electrical.power_density, spec.t_amb, &probes, &DtPolicy::default(), f.t_end, &solver)?;
        write_probe_csv(create(cfg, "probes.csv")?, &run.trace)?;
        script(cfg, "probes.gp", plots::probes(&probes.iter().map(|p| p.name.clone()).collect::<Vec<_>>()))?;
        match run.report.t_s {
            Some(t) => writeln!(log, "steady within 1% after {t:.3e} s")?,
            None => writeln!(log, "not steady by t_end = {:.3e} s", f.t_end)?,
        }
    }
    Ok(())
}

fn extract(cfg: &RunConfig, log: &mut dyn Write) -> Result<()> {
    let model = model(cfg)?;
    let spec = &model.spec;
    let opts = cfg.extraction_options();
    let cells: Vec<usize> = if cfg.extraction.rth_cells.is_empty() {
        (0..spec.n_cells()).collect()
    } else {
        cfg.extraction.rth_cells.iter().map(|[r, c]| cell_id(spec, *r, *c)).collect::<Result<_>>()?
    };
    let rth = cells
        .par_iter()
        .map(|&n| extract_rth(&model, n, &cfg.extraction.sweep, &opts))
        .collect::<Result<Vec<_>>>()?;
    write_rth_csv(create(cfg, "rth.csv")?, spec, &rth)?;
    write_sweep_csv(create(cfg, "sweep.csv")?, spec, &rth)?;
    let ext = extract_coupling_matrix(&model, cfg.extraction.p0, &opts)?;
    ext.matrix.write_csv(create(cfg, "coupling.csv")?)?;
    ext.matrix.write_text(create(cfg, "coupling.txt")?, spec.t_amb)?;
    for r in &rth {
        let (row, col) = cell_position(spec, r.cell);
        writeln!(log, "R_th{} = {:.4e} K/W (fit residual {:.1e})", cell_label(row, col), r.rth, r.fit_residual)?;
    }
    writeln!(log, "coupling asymmetry {:.3e}, reciprocity residual {:.3e}", ext.matrix.asymmetry, ext.matrix.reciprocity)?;
    Ok(())
}

fn spacing(cfg: &RunConfig, log: &mut dyn Write) -> Result<()> {
    let rows = sweep_spacing(&cfg.crossbar, &cfg.extraction.spacings, cfg.extraction.p0, &cfg.mesh, &cfg.extraction_options())?;
    write_spacing_csv(create(cfg, "spacing.csv")?, &rows)?;
    script(cfg, "spacing.gp", plots::spacing())?;
    for r in &rows {
        writeln!(log, "sp {:.0} nm: nearest coupling {:.4}, max rise {:.2} K", r.sp * 1e9, r.tc_nearest, r.max_rise)?;
    }
    Ok(())
}

fn load_network(path: &Path) -> Result<ThermalNetwork> {
    let file = File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let (matrix, t_amb) = CouplingMatrix::read_text(BufReader::new(file))?;
    ThermalNetwork::new(matrix, t_amb)
}

fn netlist(cfg: &RunConfig, log: &mut dyn Write) -> Result<()> {
    let path = cfg.netlist.coupling.clone().unwrap_or_else(|| cfg.out_dir.join("coupling.txt"));
    let net = load_network(&path)?;
    let text = emit_netlist(&net, &cfg.netlist_options());
    let mut out = create(cfg, "netlist.sp")?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    writeln!(log, "{}-cell subcircuit {} written", net.dim(), cfg.netlist.subckt)?;
    Ok(())
}

fn pattern(cfg: &RunConfig, name: &str, rows: usize, cols: usize) -> Result<InferencePattern> {
    match cfg.inference.custom.get(name) {
        Some(cells) => {
            let cells: Vec<(usize, usize)> = cells.iter().map(|[r, c]| (*r, *c)).collect();
            InferencePattern::custom(name, rows, cols, &cells)
        }
        None => InferencePattern::preset(name, rows, cols),
    }
}

fn write_trace(cfg: &RunConfig, name: &str, trace: &InferenceTrace) -> Result<()> {
    trace.write_csv(create(cfg, name)?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

fn infer(cfg: &RunConfig, log: &mut dyn Write) -> Result<()> {
    let net = match &cfg.inference.coupling {
        Some(p) => load_network(p)?,
        None => reference_network(),
    };
    let (rows, cols) = (net.coupling.rows, net.coupling.cols);
    let drift = cfg.drift();
    let opts = cfg.inference_options();
    let patterns = cfg.inference.patterns.iter().map(|p| pattern(cfg, p, rows, cols)).collect::<Result<Vec<_>>>()?;
    let alone = net.uncoupled();
    let traces = patterns
        .par_iter()
        .map(|p| Ok((run_inference(p, &net, &drift, &opts)?, run_inference(p, &alone, &drift, &opts)?)))
        .collect::<Result<Vec<_>>>()?;

    let mut summary = csv::Writer::from_writer(create(cfg, "inference_summary.csv")?);
    summary.write_record([
        "pattern",
        "cycles",
        "accuracy_coupled_pct",
        "accuracy_uncoupled_pct",
        "additional_degradation_pct",
        "max_T_K",
        "runaway_cycle",
    ])?;
    let mut runaway = None;
    for (coupled, uncoupled) in &traces {
        write_trace(cfg, &format!("inference_trace_{}.csv", coupled.pattern), coupled)?;
        write_trace(cfg, &format!("inference_trace_{}_uncoupled.csv", coupled.pattern), uncoupled)?;
        let (a, b) = (coupled.final_accuracy(), uncoupled.final_accuracy());
        let extra = match (a, b) {
            (Some(a), Some(b)) if coupled.runaway.is_none() => Some(b - a),
            _ => None,
        };
        let max_t = coupled.last().temperature.iter().fold(0.0f64, |m, t| m.max(*t));
        summary.write_record([
            coupled.pattern.clone(),
            coupled.last().cycle.to_string(),
            fmt_opt(a),
            fmt_opt(b),
            fmt_opt(extra),
            format!("{max_t:.3}"),
            coupled.runaway.map_or_else(String::new, |r| r.cycle.to_string()),
        ])?;
        match (&coupled.runaway, extra) {
            (Some(r), _) => {
                writeln!(log, "{}: thermal runaway at cycle {} ({:.1} K)", coupled.pattern, r.cycle, r.temperature)?;
                runaway.get_or_insert(*r);
            }
            (None, Some(x)) => writeln!(
                log,
                "{}: accuracy {:.3}% coupled vs {:.3}% uncoupled, {x:.3} points lost to coupling",
                coupled.pattern,
                a.unwrap_or(f64::NAN),
                b.unwrap_or(f64::NAN)
            )?,
            (None, None) => writeln!(log, "{}: reference column carries no current", coupled.pattern)?,
        }
    }
    summary.flush()?;
    let names: Vec<String> = traces.iter().map(|(t, _)| t.pattern.clone()).collect();
    script(cfg, "inference.gp", plots::inference(&names, opts.reference_column))?;
    match runaway {
        Some(r) => Err(Error::Runaway { cell: r.cell, temperature: r.temperature, cap: cfg.inference.t_cap }),
        None => Ok(()),
    }
}
