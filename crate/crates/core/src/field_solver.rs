//! Finite-volume electrical and thermal solves on a [`VoxelModel`].
//!
//! Both problems are diffusion operators `-∇·(k∇u) = s` discretized cell
//! centred with harmonic-mean face conductances, which keeps fluxes
//! conservative across the large material contrasts of the crossbar. The
//! resulting SPD systems are solved with Jacobi-preconditioned conjugate
//! gradients.
//!
//! * Electrical: house voxels are insulators and drop out of the system;
//!   driven lines are Dirichlet on their outer (terminal) faces.
//! * Thermal: every voxel participates; the outer house walls are held at
//!   the sink temperature.

use std::io::{BufRead, Write};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Region, VoxelModel};

mod stencil;
pub use stencil::{pcg, pcg_with, PcgOutcome, Preconditioner, Stencil};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Temperature,
    Potential,
    PowerDensity,
}

impl Quantity {
    pub fn tag(&self) -> &'static str {
        match self {
            Quantity::Temperature => "temperature",
            Quantity::Potential => "potential",
            Quantity::PowerDensity => "power_density",
        }
    }

    pub fn units(&self) -> &'static str {
        match self {
            Quantity::Temperature => "K",
            Quantity::Potential => "V",
            Quantity::PowerDensity => "W/m^3",
        }
    }

    fn from_tag(tag: &str) -> Option<Self> {
        [Quantity::Temperature, Quantity::Potential, Quantity::PowerDensity]
            .into_iter()
            .find(|q| q.tag() == tag)
    }
}

/// One value per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub quantity: Quantity,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn uniform(quantity: Quantity, n: usize, value: f64) -> Self {
        Self { quantity, values: vec![value; n] }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Volume-weighted mean over `voxels`.
    pub fn mean_over(&self, model: &VoxelModel, voxels: &[usize]) -> f64 {
        let (mut s, mut v) = (0.0, 0.0);
        for &i in voxels {
            let vol = model.volume(i);
            s += self.values[i] * vol;
            v += vol;
        }
        s / v
    }

    /// ∫ values dV over `voxels`.
    pub fn integral_over(&self, model: &VoxelModel, voxels: impl IntoIterator<Item = usize>) -> f64 {
        voxels.into_iter().map(|i| self.values[i] * model.volume(i)).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { quantity: self.quantity, values: self.values.iter().map(|v| v * factor).collect() }
    }

    fn check(&self) -> Result<()> {
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Consistency(format!("{} field not finite at voxel {i}", self.quantity.tag())));
        }
        if self.quantity == Quantity::Temperature && self.min() < 0.0 {
            return Err(Error::Consistency("negative absolute temperature".into()));
        }
        Ok(())
    }
}

/// Dirichlet potentials per line; `None` leaves a line floating.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasAssignment {
    /// Top-electrode lines, indexed by row − 1.
    pub rows: Vec<Option<f64>>,
    /// Bottom-electrode lines, indexed by col − 1.
    pub cols: Vec<Option<f64>>,
    /// Filament state per cell id (true = LRS). An HRS filament conducts
    /// like the surrounding oxide; its thermal properties are unchanged.
    pub lrs: Vec<bool>,
}

impl BiasAssignment {
    pub fn grounded(rows: usize, cols: usize) -> Self {
        Self { rows: vec![Some(0.0); rows], cols: vec![Some(0.0); cols], lrs: vec![true; rows * cols] }
    }

    /// Only `cell` (row-major id) keeps a conducting filament.
    pub fn with_single_lrs(mut self, cell: usize) -> Self {
        self.lrs.iter_mut().enumerate().for_each(|(i, s)| *s = i == cell);
        self
    }

    pub fn with_lrs(mut self, lrs: Vec<bool>) -> Self {
        self.lrs = lrs;
        self
    }

    /// Row `row` (1-based) at `volts`, every other line grounded.
    pub fn single_row(rows: usize, cols: usize, row: usize, volts: f64) -> Self {
        let mut b = Self::grounded(rows, cols);
        b.rows[row - 1] = Some(volts);
        b
    }

    /// Every row at `volts`, every column grounded (VMM read mode).
    pub fn all_rows(rows: usize, cols: usize, volts: f64) -> Self {
        Self { rows: vec![Some(volts); rows], ..Self::grounded(rows, cols) }
    }

    fn driven_count(&self) -> usize {
        self.rows.iter().chain(&self.cols).filter(|v| v.is_some()).count()
    }

    fn is_zero(&self) -> bool {
        self.rows.iter().chain(&self.cols).all(|v| v.map_or(true, |x| x == 0.0))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let s = |v: &Vec<Option<f64>>| v.iter().map(|x| x.map(|x| x * factor)).collect();
        Self { rows: s(&self.rows), cols: s(&self.cols), lrs: self.lrs.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual target ‖b − Ax‖ / ‖b‖.
    pub tol: f64,
    /// Iteration cap; `None` uses 50 × (nx + ny + nz).
    pub max_iter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: None }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    fn cap(&self, model: &VoxelModel) -> usize {
        let [nx, ny, nz] = model.dims();
        self.max_iter.unwrap_or(50 * (nx + ny + nz))
    }

    fn check(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Argument(format!("solver tolerance must be positive (got {})", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
    pub wall_time: Duration,
    pub time_steps: Option<usize>,
    /// Time at which every probe reached 99% of its steady rise (s).
    pub t_s: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ElectricalSolution {
    pub potential: ScalarField,
    pub power_density: ScalarField,
    /// Current flowing into the array through each row terminal (A).
    pub row_currents: Vec<f64>,
    /// Current flowing into the array through each column terminal (A).
    pub col_currents: Vec<f64>,
    pub bias: BiasAssignment,
    pub report: SolveReport,
}

impl ElectricalSolution {
    /// Σ V·I over driven terminals (W).
    pub fn terminal_power(&self) -> f64 {
        let p = |v: &[Option<f64>], i: &[f64]| -> f64 {
            v.iter().zip(i).map(|(v, i)| v.unwrap_or(0.0) * i).sum()
        };
        p(&self.bias.rows, &self.row_currents) + p(&self.bias.cols, &self.col_currents)
    }

    /// Dissipation attributed to each cell: filament plus footprint oxide (W).
    pub fn cell_powers(&self, model: &VoxelModel) -> Vec<f64> {
        cell_powers(model, &self.power_density)
    }
}

/// ∫ q dV over each cell's filament and footprint oxide.
pub fn cell_powers(model: &VoxelModel, q: &ScalarField) -> Vec<f64> {
    model
        .cells
        .iter()
        .map(|c| q.integral_over(model, c.filament.iter().chain(&c.footprint_oxide).copied()))
        .collect()
}

/// Mean temperature over each cell's probe voxels.
pub fn probe_temperatures(model: &VoxelModel, t: &ScalarField) -> Vec<f64> {
    model.cells.iter().map(|c| t.mean_over(model, &c.probe)).collect()
}

fn face_area(model: &VoxelModel, axis: usize, i: usize, j: usize, k: usize) -> f64 {
    let (x, y, z) = (&model.x, &model.y, &model.z);
    match axis {
        0 => (y[j + 1] - y[j]) * (z[k + 1] - z[k]),
        1 => (x[i + 1] - x[i]) * (z[k + 1] - z[k]),
        _ => (x[i + 1] - x[i]) * (y[j + 1] - y[j]),
    }
}

fn half_width(model: &VoxelModel, axis: usize, c: usize) -> f64 {
    let g = match axis {
        0 => &model.x,
        1 => &model.y,
        _ => &model.z,
    };
    0.5 * (g[c + 1] - g[c])
}

/// Assembles the diffusion operator for a per-voxel conductivity.
///
/// Voxels with zero conductivity are decoupled (identity rows). Outer grid
/// faces flagged in `walls` are held at zero, the rest are insulated.
fn assemble(model: &VoxelModel, k_of: &[f64], walls: Walls) -> (Stencil, Vec<f64>) {
    let [nx, ny, nz] = model.dims();
    let n = nx * ny * nz;
    let mut st = Stencil::zeros([nx, ny, nz]);
    let mut wall = vec![0.0; n];
    let stride = [1, nx, nx * ny];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let a = model.index(i, j, k);
                let ka = k_of[a];
                if ka <= 0.0 {
                    continue;
                }
                let ijk = [i, j, k];
                let dims = [nx, ny, nz];
                for axis in 0..3 {
                    let c = ijk[axis];
                    let area = face_area(model, axis, i, j, k);
                    let da = half_width(model, axis, c);
                    if c + 1 < dims[axis] {
                        let b = a + stride[axis];
                        let kb = k_of[b];
                        if kb > 0.0 {
                            let db = half_width(model, axis, c + 1);
                            let g = area / (da / ka + db / kb);
                            st.couple(axis, a, g);
                        }
                    }
                    let g = area / (da / ka);
                    if c == 0 && walls.0[2 * axis] {
                        wall[a] += g;
                    }
                    if c + 1 == dims[axis] && walls.0[2 * axis + 1] {
                        wall[a] += g;
                    }
                }
            }
        }
    }
    st.finish_diagonal(&wall);
    for (a, &k) in k_of.iter().enumerate() {
        if k <= 0.0 {
            st.diag[a] = 1.0;
        }
    }
    (st, wall)
}

fn sigma_field(model: &VoxelModel, lrs: &[bool], scale: Option<&dyn Fn(Region, usize) -> f64>) -> Vec<f64> {
    let m = model.materials();
    let mut sigma: Vec<f64> = model
        .labels
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if r.is_conductor() {
                let s = r.material(m).sigma;
                scale.map_or(s, |f| s * f(*r, i))
            } else {
                0.0
            }
        })
        .collect();
    for (cell, on) in model.cells.iter().zip(lrs) {
        if !on {
            for &v in &cell.filament {
                sigma[v] = m.oxide.sigma * scale.map_or(1.0, |f| f(Region::Oxide, v));
            }
        }
    }
    sigma
}

fn kappa_field(model: &VoxelModel) -> Vec<f64> {
    let m = model.materials();
    model.labels.iter().map(|r| r.material(m).kappa).collect()
}

fn check_bias(model: &VoxelModel, bias: &BiasAssignment) -> Result<()> {
    if bias.rows.len() != model.spec.rows || bias.cols.len() != model.spec.cols {
        return Err(Error::Argument(format!(
            "bias has {}×{} lines, array is {}×{}",
            bias.rows.len(),
            bias.cols.len(),
            model.spec.rows,
            model.spec.cols
        )));
    }
    if bias.lrs.len() != model.cells.len() {
        return Err(Error::Argument(format!(
            "bias lists {} cell states for {} cells",
            bias.lrs.len(),
            model.cells.len()
        )));
    }
    if bias.driven_count() == 0 {
        return Err(Error::Argument("every line is floating; drive at least one line".into()));
    }
    if let Some(v) = bias.rows.iter().chain(&bias.cols).flatten().find(|v| !v.is_finite()) {
        return Err(Error::Argument(format!("non-finite line potential {v}")));
    }
    Ok(())
}

/// Solves ∇·(σ∇V) = 0 with the line terminals of `bias`.
pub fn solve_electrical(model: &VoxelModel, bias: &BiasAssignment, opts: &SolverOptions) -> Result<ElectricalSolution> {
    solve_electrical_impl(model, bias, opts, None, None)
}

/// As [`solve_electrical`], starting CG from `guess`.
pub fn solve_electrical_from(
    model: &VoxelModel,
    bias: &BiasAssignment,
    opts: &SolverOptions,
    guess: &ScalarField,
) -> Result<ElectricalSolution> {
    solve_electrical_impl(model, bias, opts, Some(guess), None)
}

fn terminal_faces<'a>(
    model: &'a VoxelModel,
    bias: &'a BiasAssignment,
) -> impl Iterator<Item = (bool, usize, f64, &'a crate::geometry::TerminalFace)> + 'a {
    let rows = model.top_terminals.iter().enumerate().filter_map(|(r, faces)| bias.rows[r].map(|v| (true, r, v, faces)));
    let cols = model.bottom_terminals.iter().enumerate().filter_map(|(c, faces)| bias.cols[c].map(|v| (false, c, v, faces)));
    rows.chain(cols).flat_map(|(is_row, line, v, faces)| faces.iter().map(move |f| (is_row, line, v, f)))
}

fn solve_electrical_impl(
    model: &VoxelModel,
    bias: &BiasAssignment,
    opts: &SolverOptions,
    guess: Option<&ScalarField>,
    sigma_scale: Option<&dyn Fn(Region, usize) -> f64>,
) -> Result<ElectricalSolution> {
    opts.check()?;
    check_bias(model, bias)?;
    let start = Instant::now();
    let n = model.n_voxels();
    let sigma = sigma_field(model, &bias.lrs, sigma_scale);

    if bias.is_zero() {
        return Ok(ElectricalSolution {
            potential: ScalarField::uniform(Quantity::Potential, n, 0.0),
            power_density: ScalarField::uniform(Quantity::PowerDensity, n, 0.0),
            row_currents: vec![0.0; model.spec.rows],
            col_currents: vec![0.0; model.spec.cols],
            bias: bias.clone(),
            report: SolveReport { wall_time: start.elapsed(), ..Default::default() },
        });
    }

    let (mut st, _) = assemble(model, &sigma, Walls::NONE);
    let mut rhs = vec![0.0; n];
    for (_, _, v, f) in terminal_faces(model, bias) {
        let g = sigma[f.voxel] * f.geometric_conductance;
        st.diag[f.voxel] += g;
        rhs[f.voxel] += g * v;
    }
    let mut x = guess.map_or_else(|| vec![0.0; n], |g| g.values.clone());
    let out = pcg(&st, &rhs, &mut x, opts.tol, opts.cap(model));
    if !out.converged {
        return Err(Error::NoConvergence {
            what: "electrical solve".into(),
            iterations: out.iterations,
            residual: out.residual,
            history: out.history,
        });
    }

    let mut row_currents = vec![0.0; model.spec.rows];
    let mut col_currents = vec![0.0; model.spec.cols];
    let mut power = vec![0.0; n];
    for (is_row, line, v, f) in terminal_faces(model, bias) {
        let g = sigma[f.voxel] * f.geometric_conductance;
        let i = g * (v - x[f.voxel]);
        if is_row {
            row_currents[line] += i;
        } else {
            col_currents[line] += i;
        }
        power[f.voxel] += g * (v - x[f.voxel]).powi(2);
    }
    // Face dissipation G·ΔV², split between the two voxels in proportion to
    // their share of the face resistance.
    let [nx, ny, nz] = model.dims();
    let stride = [1, nx, nx * ny];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let a = model.index(i, j, k);
                if sigma[a] <= 0.0 {
                    continue;
                }
                let ijk = [i, j, k];
                for axis in 0..3 {
                    let g = st.coupling(axis, a);
                    if g == 0.0 {
                        continue;
                    }
                    let b = a + stride[axis];
                    let ra = half_width(model, axis, ijk[axis]) / sigma[a];
                    let rb = half_width(model, axis, ijk[axis] + 1) / sigma[b];
                    let p = g * (x[a] - x[b]).powi(2);
                    power[a] += p * ra / (ra + rb);
                    power[b] += p * rb / (ra + rb);
                }
            }
        }
    }
    let q: Vec<f64> = power.iter().enumerate().map(|(i, p)| p / model.volume(i)).collect();

    let inflow: f64 = row_currents.iter().chain(&col_currents).filter(|i| **i > 0.0).sum();
    let net: f64 = row_currents.iter().chain(&col_currents).sum();
    if inflow > 0.0 && net.abs() > inflow * 1e-3 {
        return Err(Error::Consistency(format!(
            "terminal currents do not balance: net {net:e} A of {inflow:e} A inflow"
        )));
    }

    let sol = ElectricalSolution {
        potential: ScalarField { quantity: Quantity::Potential, values: x },
        power_density: ScalarField { quantity: Quantity::PowerDensity, values: q },
        row_currents,
        col_currents,
        bias: bias.clone(),
        report: SolveReport {
            iterations: out.iterations,
            residual: out.residual,
            wall_time: start.elapsed(),
            ..Default::default()
        },
    };
    sol.potential.check()?;
    sol.power_density.check()?;
    Ok(sol)
}

/// Which outer grid faces are isothermal: `[x−, x+, y−, y+, z−, z+]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Walls(pub [bool; 6]);

impl Walls {
    pub const ALL: Walls = Walls([true; 6]);
    pub const NONE: Walls = Walls([false; 6]);
}

/// Heat operator and wall conductances, reusable across solves.
pub struct HeatOperator {
    stencil: Stencil,
    wall: Vec<f64>,
    volumes: Vec<f64>,
}

impl HeatOperator {
    /// Operator with every outer face of the house held at the sink.
    pub fn new(model: &VoxelModel) -> Self {
        Self::with_walls(model, Walls::ALL)
    }

    pub fn with_walls(model: &VoxelModel, walls: Walls) -> Self {
        let (stencil, wall) = assemble(model, &kappa_field(model), walls);
        let volumes = (0..model.n_voxels()).map(|i| model.volume(i)).collect();
        Self { stencil, wall, volumes }
    }

    /// Heat leaving through the walls for a rise field θ = T − T_sink (W).
    pub fn wall_flux(&self, rise: &[f64]) -> f64 {
        self.wall.iter().zip(rise).map(|(g, t)| g * t).sum()
    }

    fn source(&self, q: &ScalarField) -> Vec<f64> {
        q.values.iter().zip(&self.volumes).map(|(q, v)| q * v).collect()
    }
}

fn check_source(model: &VoxelModel, q: &ScalarField, sink_t: f64) -> Result<()> {
    if q.quantity != Quantity::PowerDensity || q.values.len() != model.n_voxels() {
        return Err(Error::Argument("heat source must be a power-density field over the model".into()));
    }
    if let Some(v) = q.values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::Argument(format!("heat source must be non-negative and finite (found {v})")));
    }
    if !(sink_t > 0.0) {
        return Err(Error::Argument(format!("sink temperature must be positive (got {sink_t})")));
    }
    Ok(())
}

/// Steady heat equation ∇·(κ∇T) + q = 0 with walls at `sink_t`.
pub fn solve_heat_steady(
    model: &VoxelModel,
    q: &ScalarField,
    sink_t: f64,
    opts: &SolverOptions,
) -> Result<(ScalarField, SolveReport)> {
    let op = HeatOperator::new(model);
    solve_heat_steady_with(model, &op, q, sink_t, opts, None)
}

/// Steady solve against a prebuilt operator, optionally warm-started from
/// a temperature field.
pub fn solve_heat_steady_with(
    model: &VoxelModel,
    op: &HeatOperator,
    q: &ScalarField,
    sink_t: f64,
    opts: &SolverOptions,
    guess: Option<&ScalarField>,
) -> Result<(ScalarField, SolveReport)> {
    opts.check()?;
    check_source(model, q, sink_t)?;
    let start = Instant::now();
    let b = op.source(q);
    let mut rise = guess.map_or_else(|| vec![0.0; b.len()], |g| g.values.iter().map(|t| t - sink_t).collect());
    let out = pcg(&op.stencil, &b, &mut rise, opts.tol, opts.cap(model));
    if !out.converged {
        return Err(Error::NoConvergence {
            what: "steady heat solve".into(),
            iterations: out.iterations,
            residual: out.residual,
            history: out.history,
        });
    }
    let t = ScalarField { quantity: Quantity::Temperature, values: rise.iter().map(|r| sink_t + r).collect() };
    t.check()?;
    Ok((
        t,
        SolveReport { iterations: out.iterations, residual: out.residual, wall_time: start.elapsed(), ..Default::default() },
    ))
}

/// Implicit time-step schedule: dt starts at `dt0` and grows by `growth`
/// per step up to `dt_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtPolicy {
    pub dt0: f64,
    pub growth: f64,
    pub dt_max: f64,
}

impl Default for DtPolicy {
    fn default() -> Self {
        Self { dt0: 1e-9, growth: 1.2, dt_max: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSample {
    pub time: f64,
    pub probe: String,
    pub temperature: f64,
}

#[derive(Debug, Clone)]
pub struct TransientResult {
    pub trace: Vec<ProbeSample>,
    pub final_temperature: ScalarField,
    pub steady_probe: Vec<f64>,
    pub report: SolveReport,
}

/// A named set of voxels whose mean temperature is traced.
#[derive(Debug, Clone)]
pub struct Probe {
    pub name: String,
    pub voxels: Vec<usize>,
}

impl Probe {
    /// One probe per cell filament centre, named "(r,c)".
    pub fn cell_probes(model: &VoxelModel) -> Vec<Probe> {
        model
            .cells
            .iter()
            .map(|c| Probe { name: crate::geometry::cell_label(c.row, c.col), voxels: c.probe.clone() })
            .collect()
    }
}

/// Backward-Euler integration of cρ ∂T/∂t = ∇·(κ∇T) + q from T ≡ sink_t.
pub fn solve_heat_transient(
    model: &VoxelModel,
    q: &ScalarField,
    sink_t: f64,
    probes: &[Probe],
    dt_policy: &DtPolicy,
    t_end: f64,
    opts: &SolverOptions,
) -> Result<TransientResult> {
    opts.check()?;
    check_source(model, q, sink_t)?;
    if !(t_end > 0.0) {
        return Err(Error::Argument(format!("t_end must be positive (got {t_end})")));
    }
    if !(dt_policy.dt0 > 0.0 && dt_policy.growth >= 1.0 && dt_policy.dt_max >= dt_policy.dt0) {
        return Err(Error::Argument(format!("invalid time-step policy {dt_policy:?}")));
    }
    let start = Instant::now();
    let op = HeatOperator::new(model);
    let (steady, steady_report) = solve_heat_steady_with(model, &op, q, sink_t, opts, None)?;
    let steady_probe: Vec<f64> = probes.iter().map(|p| steady.mean_over(model, &p.voxels)).collect();
    let m = model.materials();
    let capacity: Vec<f64> = model
        .labels
        .iter()
        .zip(&op.volumes)
        .map(|(r, v)| r.material(m).volumetric_heat_capacity() * v)
        .collect();
    let b = op.source(q);
    let n = b.len();

    let mut trace = Vec::new();
    let record = |time: f64, t: &[f64], trace: &mut Vec<ProbeSample>| {
        let mut temps = Vec::with_capacity(probes.len());
        for p in probes {
            let mut s = 0.0;
            let mut v = 0.0;
            for &i in &p.voxels {
                s += t[i] * op.volumes[i];
                v += op.volumes[i];
            }
            let temp = sink_t + s / v;
            trace.push(ProbeSample { time, probe: p.name.clone(), temperature: temp });
            temps.push(temp);
        }
        temps
    };

    let mut rise = vec![0.0; n];
    record(0.0, &rise, &mut trace);
    let steady_rise: Vec<f64> = steady_probe.iter().map(|t| t - sink_t).collect();
    let mut reached: Vec<Option<f64>> = steady_rise.iter().map(|r| if *r <= 0.0 { Some(0.0) } else { None }).collect();

    let mut time = 0.0;
    let mut dt = dt_policy.dt0;
    let mut steps = 0;
    let mut iterations = steady_report.iterations;
    let mut residual = 0.0;
    let mut st = op.stencil.clone();
    let mut rhs = vec![0.0; n];
    while time < t_end * (1.0 - 1e-12) {
        let step = dt.min(t_end - time);
        for i in 0..n {
            st.diag[i] = op.stencil.diag[i] + capacity[i] / step;
            rhs[i] = b[i] + capacity[i] / step * rise[i];
        }
        let out = pcg(&st, &rhs, &mut rise, opts.tol, opts.cap(model));
        if !out.converged {
            return Err(Error::NoConvergence {
                what: format!("transient heat step at t = {time:e} s"),
                iterations: out.iterations,
                residual: out.residual,
                history: out.history,
            });
        }
        iterations += out.iterations;
        residual = out.residual;
        time += step;
        steps += 1;
        let temps = record(time, &rise, &mut trace);
        for (p, temp) in temps.iter().enumerate() {
            let r = temp - sink_t;
            let target = steady_rise[p];
            if target > 0.0 && r > 1.05 * target {
                return Err(Error::UnstableStep { time, overshoot_pct: 100.0 * (r / target - 1.0) });
            }
            if reached[p].is_none() && r >= 0.99 * target {
                reached[p] = Some(time);
            }
        }
        dt = (dt * dt_policy.growth).min(dt_policy.dt_max);
    }
    let t_s = if reached.iter().all(|r| r.is_some()) {
        Some(reached.iter().map(|r| r.unwrap()).fold(0.0, f64::max))
    } else {
        None
    };
    let final_temperature =
        ScalarField { quantity: Quantity::Temperature, values: rise.iter().map(|r| sink_t + r).collect() };
    final_temperature.check()?;
    Ok(TransientResult {
        trace,
        final_temperature,
        steady_probe,
        report: SolveReport {
            iterations,
            residual,
            wall_time: start.elapsed(),
            time_steps: Some(steps),
            t_s,
        },
    })
}

#[derive(Debug, Clone)]
pub struct CoupledSolution {
    pub electrical: ElectricalSolution,
    pub temperature: ScalarField,
    pub cell_powers: Vec<f64>,
    pub report: SolveReport,
}

/// Temperature-dependent conductivity multiplier σ(T)/σ(T_amb) per region.
pub type ConductivityScale<'a> = &'a (dyn Fn(Region, f64) -> f64 + Sync);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledOptions {
    pub solver: SolverOptions,
    /// Convergence target on max per-cell |ΔP|/P between passes.
    pub tol: f64,
    /// Relaxation on the temperature update, 0 < damping ≤ 1.
    pub damping: f64,
    pub max_passes: usize,
}

impl Default for CoupledOptions {
    fn default() -> Self {
        Self { solver: SolverOptions::default(), tol: 1e-6, damping: 1.0, max_passes: 50 }
    }
}

/// Electrical and thermal solves iterated to self-consistency.
///
/// With temperature-independent materials there is no feedback path and a
/// single pass is exact.
pub fn solve_coupled(model: &VoxelModel, bias: &BiasAssignment, opts: &CoupledOptions) -> Result<CoupledSolution> {
    solve_coupled_with(model, bias, opts, None)
}

pub fn solve_coupled_with(
    model: &VoxelModel,
    bias: &BiasAssignment,
    opts: &CoupledOptions,
    sigma_of_t: Option<ConductivityScale<'_>>,
) -> Result<CoupledSolution> {
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::Argument(format!("damping must be in (0, 1] (got {})", opts.damping)));
    }
    let start = Instant::now();
    let sink_t = model.spec.t_amb;
    let op = HeatOperator::new(model);
    let mut temperature = ScalarField::uniform(Quantity::Temperature, model.n_voxels(), sink_t);
    let mut previous: Option<Vec<f64>> = None;
    let mut residuals: Vec<f64> = Vec::new();
    let mut elec_guess: Option<ScalarField> = None;
    for pass in 1..=opts.max_passes.max(1) {
        let t_now = temperature.values.clone();
        let scale_fn = sigma_of_t.map(|f| move |r: Region, i: usize| f(r, t_now[i]));
        let electrical = solve_electrical_impl(
            model,
            bias,
            &opts.solver,
            elec_guess.as_ref(),
            scale_fn.as_ref().map(|f| f as &dyn Fn(Region, usize) -> f64),
        )?;
        let (t_new, _) =
            solve_heat_steady_with(model, &op, &electrical.power_density, sink_t, &opts.solver, Some(&temperature))?;
        let powers = electrical.cell_powers(model);
        temperature = if pass == 1 || opts.damping == 1.0 {
            t_new
        } else {
            let mut t = temperature.clone();
            for (old, new) in t.values.iter_mut().zip(&t_new.values) {
                *old += opts.damping * (new - *old);
            }
            t
        };
        let change = previous.as_ref().map(|prev| {
            powers
                .iter()
                .zip(prev)
                .map(|(p, q)| if p.abs().max(q.abs()) > 0.0 { (p - q).abs() / p.abs().max(q.abs()) } else { 0.0 })
                .fold(0.0, f64::max)
        });
        let done = sigma_of_t.is_none() || change.map_or(false, |c| c < opts.tol);
        if let Some(c) = change {
            residuals.push(c);
            let n = residuals.len();
            if n >= 3 && residuals[n - 1] > residuals[n - 2] && residuals[n - 2] > residuals[n - 3] {
                return Err(Error::Oscillation { residuals, suggested_damping: opts.damping / 2.0 });
            }
        }
        if done {
            let report = SolveReport {
                iterations: if sigma_of_t.is_none() { 1 } else { pass - 1 },
                residual: change.unwrap_or(0.0),
                wall_time: start.elapsed(),
                ..Default::default()
            };
            return Ok(CoupledSolution { cell_powers: powers, electrical, temperature, report });
        }
        previous = Some(powers);
        elec_guess = Some(electrical.potential);
    }
    Err(Error::FixedPoint {
        iterations: opts.max_passes,
        previous: residuals.iter().rev().skip(1).take(1).copied().collect(),
        last: residuals.last().copied().into_iter().collect(),
    })
}

/// Writes a field as text: a self-describing header followed by one value
/// per line, x fastest.
///
/// ```text
/// # xtalk field v1
/// quantity temperature
/// units K
/// dims 120 120 58
/// x <nx+1 face coordinates, m>
/// y <ny+1 face coordinates, m>
/// z <nz+1 face coordinates, m>
/// data
/// 300
/// ...
/// ```
pub fn write_field<W: Write>(mut w: W, model: &VoxelModel, field: &ScalarField) -> Result<()> {
    let [nx, ny, nz] = model.dims();
    writeln!(w, "# xtalk field v1")?;
    writeln!(w, "quantity {}", field.quantity.tag())?;
    writeln!(w, "units {}", field.quantity.units())?;
    writeln!(w, "dims {nx} {ny} {nz}")?;
    for (name, g) in [("x", &model.x), ("y", &model.y), ("z", &model.z)] {
        write!(w, "{name}")?;
        for v in g.iter() {
            write!(w, " {v:e}")?;
        }
        writeln!(w)?;
    }
    writeln!(w, "data")?;
    for v in &field.values {
        writeln!(w, "{v:e}")?;
    }
    Ok(())
}

/// A field read back from [`write_field`] output.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub field: ScalarField,
    pub dims: [usize; 3],
    pub axes: [Vec<f64>; 3],
}

pub fn read_field<R: BufRead>(r: R) -> Result<FieldDump> {
    let mut lines = r.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, l)) => Ok((i + 1, l?)),
            None => Err(Error::Parse { line: 0, msg: format!("unexpected end of file, expected {what}") }),
        }
    };
    let bad = |line: usize, msg: &str| Error::Parse { line, msg: msg.to_string() };
    let (l, head) = next("header")?;
    if head.trim() != "# xtalk field v1" {
        return Err(bad(l, "missing field header"));
    }
    let (l, qline) = next("quantity")?;
    let quantity = qline
        .strip_prefix("quantity ")
        .and_then(|t| Quantity::from_tag(t.trim()))
        .ok_or_else(|| bad(l, "bad quantity line"))?;
    next("units")?;
    let (l, dline) = next("dims")?;
    let dims: Vec<usize> = dline
        .strip_prefix("dims ")
        .ok_or_else(|| bad(l, "bad dims line"))?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad(l, "bad dims value")))
        .collect::<Result<_>>()?;
    if dims.len() != 3 {
        return Err(bad(l, "dims needs three values"));
    }
    let mut axes: [Vec<f64>; 3] = Default::default();
    for (a, name) in ["x", "y", "z"].iter().enumerate() {
        let (l, line) = next(name)?;
        let mut it = line.split_whitespace();
        if it.next() != Some(name) {
            return Err(bad(l, &format!("expected {name} axis")));
        }
        axes[a] = it.map(|t| t.parse().map_err(|_| bad(l, "bad coordinate"))).collect::<Result<_>>()?;
        if axes[a].len() != dims[a] + 1 {
            return Err(bad(l, "axis length does not match dims"));
        }
    }
    let (l, data) = next("data")?;
    if data.trim() != "data" {
        return Err(bad(l, "expected data marker"));
    }
    let n = dims[0] * dims[1] * dims[2];
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let (l, line) = next("value")?;
        values.push(line.trim().parse().map_err(|_| bad(l, "bad value"))?);
    }
    Ok(FieldDump { field: ScalarField { quantity, values }, dims: [dims[0], dims[1], dims[2]], axes })
}

/// Probe trace CSV: `time_s,probe_name,T_K`.
pub fn write_probe_csv<W: Write>(w: W, trace: &[ProbeSample]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["time_s", "probe_name", "T_K"])?;
    for s in trace {
        out.write_record([format!("{:e}", s.time), s.probe.clone(), format!("{}", s.temperature)])?;
    }
    out.flush()?;
    Ok(())
}

/// Volume-weighted integral of a field over all voxels, in parallel.
pub fn total_integral(model: &VoxelModel, field: &ScalarField) -> f64 {
    field
        .values
        .par_chunks(4096)
        .enumerate()
        .map(|(c, chunk)| chunk.iter().enumerate().map(|(o, v)| v * model.volume(c * 4096 + o)).sum::<f64>())
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

#[cfg(test)]
mod tests;
