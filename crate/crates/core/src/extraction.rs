//! Thermal resistance and coupling-matrix extraction from field solves.
//!
//! Every excitation puts exactly one cell in LRS and drives its row while
//! all other lines are grounded, so the heat comes from that cell alone.
//! Temperatures are read at the filament centre of each cell.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field_solver::{
    probe_temperatures, solve_electrical, solve_electrical_from, solve_heat_steady_with, BiasAssignment,
    ElectricalSolution, HeatOperator, ScalarField, SolverOptions,
};
use crate::geometry::{build_model, cell_id, cell_label, cell_position, CrossbarSpec, MeshPolicy, VoxelModel};

/// Default power sweep (W).
pub const DEFAULT_SWEEP: [f64; 5] = [0.5e-6, 1.0e-6, 1.5e-6, 2.0e-6, 2.45e-6];

/// Operating point used for coupling extraction (W).
pub const DEFAULT_P0: f64 = 2.45e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionOptions {
    pub solver: SolverOptions,
    /// Largest row bias the power search may use (V).
    pub bias_cap: f64,
}

impl Default for ExtractionOptions {
    fn default() -> Self {
        Self { solver: SolverOptions::default(), bias_cap: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    /// Dissipated power in the excited cell (W).
    pub power: f64,
    /// Row bias that produced it (V).
    pub bias: f64,
    /// Temperature rise at the filament centre (K).
    pub rise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RthResult {
    pub cell: usize,
    /// Least-squares slope of ΔT against P through the origin (K/W).
    pub rth: f64,
    /// max |ΔT/(P·R_th) − 1| over the sweep.
    pub fit_residual: f64,
    pub points: Vec<SweepPoint>,
}

/// Unit-bias excitation of a single LRS cell.
struct Excitation {
    cell: usize,
    unit: ElectricalSolution,
    /// Power dissipated in the cell at 1 V (W).
    unit_power: f64,
}

impl Excitation {
    fn new(model: &VoxelModel, cell: usize, opts: &ExtractionOptions) -> Result<Self> {
        let (row, _) = cell_position(&model.spec, cell);
        let bias = BiasAssignment::single_row(model.spec.rows, model.spec.cols, row, 1.0).with_single_lrs(cell);
        let unit = solve_electrical(model, &bias, &opts.solver)?;
        let unit_power = unit.cell_powers(model)[cell];
        if !(unit_power > 0.0) {
            return Err(Error::Consistency(format!("cell {cell} dissipates no power at unit bias")));
        }
        Ok(Self { cell, unit, unit_power })
    }

    /// Bias at which the cell dissipates `power`; the device is ohmic, so
    /// P ∝ V² makes this exact.
    fn bias_for(&self, power: f64, cap: f64) -> Result<f64> {
        let v = (power / self.unit_power).sqrt();
        if !(v <= cap) {
            return Err(Error::Argument(format!(
                "{power:e} W in cell {} needs {v:.3} V, above the {cap} V bias cap",
                self.cell
            )));
        }
        Ok(v)
    }
}

fn check_cell(model: &VoxelModel, cell: usize) -> Result<()> {
    if cell >= model.cells.len() {
        return Err(Error::Argument(format!("cell {cell} outside {}-cell array", model.cells.len())));
    }
    Ok(())
}

/// Power sweep on one cell and a through-origin fit of ΔT = R_th·P.
pub fn extract_rth(model: &VoxelModel, cell: usize, sweep: &[f64], opts: &ExtractionOptions) -> Result<RthResult> {
    check_cell(model, cell)?;
    if sweep.len() < 3 {
        return Err(Error::Argument(format!("power sweep needs at least 3 points (got {})", sweep.len())));
    }
    if let Some(p) = sweep.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
        return Err(Error::Argument(format!("sweep powers must be positive (got {p})")));
    }
    let exc = Excitation::new(model, cell, opts)?;
    let biases: Vec<f64> = sweep.iter().map(|&p| exc.bias_for(p, opts.bias_cap)).collect::<Result<_>>()?;
    let op = HeatOperator::new(model);
    let t_amb = model.spec.t_amb;
    let mut points = Vec::with_capacity(sweep.len());
    let mut last: Option<(f64, ScalarField)> = None;
    for &v in &biases {
        let bias = exc.unit.bias.scaled(v);
        let guess = exc.unit.potential.scaled(v);
        let elec = solve_electrical_from(model, &bias, &opts.solver, &guess)?;
        let power = elec.cell_powers(model)[cell];
        // warm start from the previous point, rescaled to the new power
        let guess = last.as_ref().map(|(p, t)| ScalarField {
            quantity: t.quantity,
            values: t.values.iter().map(|x| t_amb + (x - t_amb) * power / p).collect(),
        });
        let (t, _) = solve_heat_steady_with(model, &op, &elec.power_density, t_amb, &opts.solver, guess.as_ref())?;
        let rise = t.mean_over(model, &model.cells[cell].probe) - t_amb;
        points.push(SweepPoint { power, bias: v, rise });
        last = Some((power, t));
    }
    let num: f64 = points.iter().map(|p| p.power * p.rise).sum();
    let den: f64 = points.iter().map(|p| p.power * p.power).sum();
    let rth = num / den;
    if !(rth > 0.0) {
        return Err(Error::Consistency(format!("non-positive thermal resistance {rth:e} for cell {cell}")));
    }
    let fit_residual = points.iter().map(|p| (p.rise / (p.power * rth) - 1.0).abs()).fold(0.0, f64::max);
    Ok(RthResult { cell, rth, fit_residual, points })
}

/// Thermal coupling matrix of an array.
///
/// `entries[n * dim + m]` is c_nm, the rise at cell n per unit self-heating
/// rise of cell m. The diagonal is exactly one. Entries satisfy
/// c_nm·R_mm = c_mn·R_nn, so the matrix is symmetric only when the cells
/// share the same R_th.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<f64>,
    /// Self-heating thermal resistance per cell (K/W).
    pub rth: Vec<f64>,
    /// max |c_ab − c_ba| before symmetrization.
    pub asymmetry: f64,
    /// max |R_ab − R_ba| / √(R_aa·R_bb) before symmetrization.
    pub reciprocity: f64,
}

impl CouplingMatrix {
    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn get(&self, n: usize, m: usize) -> f64 {
        self.entries[n * self.dim() + m]
    }

    /// Identity coupling (no crosstalk) with the given resistances.
    pub fn uncoupled(rows: usize, cols: usize, rth: Vec<f64>) -> Self {
        let dim = rows * cols;
        let mut entries = vec![0.0; dim * dim];
        for n in 0..dim {
            entries[n * dim + n] = 1.0;
        }
        Self { rows, cols, entries, rth, asymmetry: 0.0, reciprocity: 0.0 }
    }

    /// Builds a matrix from raw ratios `raw[n * dim + m]` = ΔT_n / ΔT_mm.
    ///
    /// Reciprocity holds for the mutual resistances R_nm = c_nm·R_mm, not for
    /// the ratios themselves (cells with different R_th give c_nm ≠ c_mn), so
    /// R is averaged with its transpose and divided back by R_mm. The raw
    /// max |c_ab − c_ba| and the relative reciprocity residual are recorded.
    pub fn from_raw(rows: usize, cols: usize, raw: &[f64], rth: Vec<f64>) -> Result<Self> {
        let dim = rows * cols;
        if raw.len() != dim * dim || rth.len() != dim {
            return Err(Error::Argument(format!("coupling data does not match a {rows}×{cols} array")));
        }
        let mut asymmetry: f64 = 0.0;
        let mut reciprocity: f64 = 0.0;
        let mut entries = vec![0.0; dim * dim];
        for n in 0..dim {
            for m in 0..dim {
                entries[n * dim + m] = if n == m {
                    1.0
                } else {
                    let (a, b) = (raw[n * dim + m] * rth[m], raw[m * dim + n] * rth[n]);
                    asymmetry = asymmetry.max((raw[n * dim + m] - raw[m * dim + n]).abs());
                    reciprocity = reciprocity.max((a - b).abs() / (rth[n] * rth[m]).sqrt());
                    0.5 * (a + b) / rth[m]
                };
            }
        }
        let c = Self { rows, cols, entries, rth, asymmetry, reciprocity };
        c.check()?;
        Ok(c)
    }

    /// Mutual thermal resistance R_nm = c_nm·R_mm (K/W); symmetric.
    pub fn mutual_resistance(&self, n: usize, m: usize) -> f64 {
        self.get(n, m) * self.rth[m]
    }

    pub fn check(&self) -> Result<()> {
        let dim = self.dim();
        if self.entries.len() != dim * dim || self.rth.len() != dim {
            return Err(Error::Argument("coupling matrix dimensions are inconsistent".into()));
        }
        for n in 0..dim {
            if self.get(n, n) != 1.0 {
                return Err(Error::Argument(format!("diagonal entry {n} is not 1")));
            }
            if !(self.rth[n] > 0.0 && self.rth[n].is_finite()) {
                return Err(Error::Argument(format!("thermal resistance of cell {n} must be positive")));
            }
            for m in 0..dim {
                let c = self.get(n, m);
                if !(0.0..=1.0).contains(&c) {
                    return Err(Error::Argument(format!("coupling c[{n}][{m}] = {c} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }

    /// Coupling CSV: a header of cell labels "(r,c)", one row per cell.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let dim = self.dim();
        let labels: Vec<String> = (0..dim)
            .map(|i| {
                let (r, c) = (i / self.cols + 1, i % self.cols + 1);
                cell_label(r, c)
            })
            .collect();
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["cell".to_string()];
        header.extend(labels.iter().cloned());
        out.write_record(&header)?;
        for n in 0..dim {
            let mut rec = vec![labels[n].clone()];
            rec.extend((0..dim).map(|m| format!("{}", self.get(n, m))));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Compact text form read by [`CouplingMatrix::read_text`]:
    ///
    /// ```text
    /// # xtalk coupling matrix v1
    /// array <rows> <cols>
    /// t_amb <K>
    /// asymmetry <value>
    /// reciprocity <value>
    /// rth <R_1> ... <R_i>
    /// c <c_11> ... <c_1i>
    /// ...
    /// ```
    ///
    /// Numbers use Rust's shortest round-trip formatting, so reading the
    /// file back is bit-exact.
    pub fn write_text<W: Write>(&self, mut w: W, t_amb: f64) -> Result<()> {
        let dim = self.dim();
        writeln!(w, "# xtalk coupling matrix v1")?;
        writeln!(w, "array {} {}", self.rows, self.cols)?;
        writeln!(w, "t_amb {t_amb}")?;
        writeln!(w, "asymmetry {:e}", self.asymmetry)?;
        writeln!(w, "reciprocity {:e}", self.reciprocity)?;
        write!(w, "rth")?;
        for r in &self.rth {
            write!(w, " {r:e}")?;
        }
        writeln!(w)?;
        for n in 0..dim {
            write!(w, "c")?;
            for m in 0..dim {
                write!(w, " {}", self.get(n, m))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Parses [`CouplingMatrix::write_text`] output; returns the matrix and
    /// the ambient temperature.
    pub fn read_text<R: BufRead>(r: R) -> Result<(Self, f64)> {
        let mut rows_cols: Option<(usize, usize)> = None;
        let mut t_amb: Option<f64> = None;
        let mut asymmetry = 0.0;
        let mut reciprocity = 0.0;
        let mut rth: Option<Vec<f64>> = None;
        let mut entries: Vec<f64> = Vec::new();
        let mut c_lines = 0;
        let mut last_line = 0;
        for (i, line) in r.lines().enumerate() {
            let lineno = i + 1;
            last_line = lineno;
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let mut it = t.split_whitespace();
            let key = it.next().unwrap_or_default();
            let nums = |it: std::str::SplitWhitespace| -> Result<Vec<f64>> {
                it.map(|s| {
                    s.parse::<f64>().map_err(|_| Error::Parse { line: lineno, msg: format!("bad number {s:?}") })
                })
                .collect()
            };
            match key {
                "array" => {
                    let v: Vec<usize> = it
                        .map(|s| s.parse().map_err(|_| Error::Parse { line: lineno, msg: format!("bad size {s:?}") }))
                        .collect::<Result<_>>()?;
                    if v.len() != 2 || v[0] == 0 || v[1] == 0 {
                        return Err(Error::Parse { line: lineno, msg: "array needs two positive sizes".into() });
                    }
                    rows_cols = Some((v[0], v[1]));
                }
                "t_amb" => {
                    let v = nums(it)?;
                    if v.len() != 1 {
                        return Err(Error::Parse { line: lineno, msg: "t_amb needs one value".into() });
                    }
                    t_amb = Some(v[0]);
                }
                "asymmetry" | "reciprocity" => {
                    let v = nums(it)?;
                    if v.len() != 1 {
                        return Err(Error::Parse { line: lineno, msg: format!("{key} needs one value") });
                    }
                    if key == "asymmetry" {
                        asymmetry = v[0];
                    } else {
                        reciprocity = v[0];
                    }
                }
                "rth" | "c" => {
                    let (rows, cols) = rows_cols
                        .ok_or_else(|| Error::Parse { line: lineno, msg: "array line must come first".into() })?;
                    let dim = rows * cols;
                    let v = nums(it)?;
                    if v.len() != dim {
                        return Err(Error::Parse {
                            line: lineno,
                            msg: format!("expected {dim} values, found {}", v.len()),
                        });
                    }
                    if key == "rth" {
                        rth = Some(v);
                    } else {
                        c_lines += 1;
                        if c_lines > dim {
                            return Err(Error::Parse { line: lineno, msg: format!("more than {dim} matrix rows") });
                        }
                        entries.extend(v);
                    }
                }
                other => {
                    return Err(Error::Parse { line: lineno, msg: format!("unknown key {other:?}") });
                }
            }
        }
        let missing = |what: &str| Error::Parse { line: last_line, msg: format!("missing {what}") };
        let (rows, cols) = rows_cols.ok_or_else(|| missing("array line"))?;
        let rth = rth.ok_or_else(|| missing("rth line"))?;
        if c_lines != rows * cols {
            return Err(missing(&format!("matrix rows ({c_lines} of {})", rows * cols)));
        }
        let m = Self { rows, cols, entries, rth, asymmetry, reciprocity };
        m.check().map_err(|e| Error::Parse { line: last_line, msg: e.to_string() })?;
        Ok((m, t_amb.unwrap_or(300.0)))
    }
}

/// Coupling matrix plus the raw single-source data behind it.
#[derive(Debug, Clone)]
pub struct CouplingExtraction {
    pub matrix: CouplingMatrix,
    /// Source power used for every excitation (W).
    pub power: f64,
    /// `rises[m][n]`: rise at cell n when only cell m dissipates `power`.
    pub rises: Vec<Vec<f64>>,
}

impl CouplingExtraction {
    /// Unsymmetrized ratio ΔT_n / ΔT_mm.
    pub fn raw(&self, n: usize, m: usize) -> f64 {
        self.rises[m][n] / self.rises[m][m]
    }
}

/// Single-source rises at every probe for a source dissipating `power`.
fn single_source_rises(
    model: &VoxelModel,
    op: &HeatOperator,
    cell: usize,
    power: f64,
    opts: &ExtractionOptions,
) -> Result<Vec<f64>> {
    let exc = Excitation::new(model, cell, opts)?;
    exc.bias_for(power, opts.bias_cap)?;
    let q = exc.unit.power_density.scaled(power / exc.unit_power);
    let t_amb = model.spec.t_amb;
    let (t, _) = solve_heat_steady_with(model, op, &q, t_amb, &opts.solver, None)?;
    Ok(probe_temperatures(model, &t).into_iter().map(|x| x - t_amb).collect())
}

/// Excites each cell alone at `power` and assembles the coupling matrix.
pub fn extract_coupling_matrix(model: &VoxelModel, power: f64, opts: &ExtractionOptions) -> Result<CouplingExtraction> {
    if !(power > 0.0 && power.is_finite()) {
        return Err(Error::Argument(format!("source power must be positive (got {power})")));
    }
    let op = HeatOperator::new(model);
    let dim = model.cells.len();
    let rises: Vec<Vec<f64>> = (0..dim)
        .into_par_iter()
        .map(|m| single_source_rises(model, &op, m, power, opts))
        .collect::<Result<_>>()?;
    let mut raw = vec![0.0; dim * dim];
    let mut rth = Vec::with_capacity(dim);
    for (m, r) in rises.iter().enumerate() {
        let self_rise = r[m];
        if !(self_rise > 0.0) {
            return Err(Error::Consistency(format!("self-heating rise of cell {m} is {self_rise:e} K")));
        }
        rth.push(self_rise / power);
        for n in 0..dim {
            raw[n * dim + m] = r[n] / self_rise;
        }
    }
    let matrix = CouplingMatrix::from_raw(model.spec.rows, model.spec.cols, &raw, rth)?;
    Ok(CouplingExtraction { matrix, power, rises })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacingRow {
    pub sp: f64,
    /// Coupling of the nearest neighbour of cell (1,1) to it.
    pub tc_nearest: f64,
    /// Largest single-source self-heating rise over all cells (K).
    pub max_rise: f64,
    /// Self-heating rise of the most central cell (K).
    pub center_rise: f64,
    pub asymmetry: f64,
}

/// Rebuilds the model for each spacing and extracts the coupling matrix.
pub fn sweep_spacing(
    template: &CrossbarSpec,
    spacings: &[f64],
    power: f64,
    mesh: &MeshPolicy,
    opts: &ExtractionOptions,
) -> Result<Vec<SpacingRow>> {
    if let Some(s) = spacings.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::Argument(format!("spacings must be positive (got {s})")));
    }
    for (i, a) in spacings.iter().enumerate() {
        if spacings[..i].contains(a) {
            return Err(Error::Argument(format!("spacing {a:e} listed twice")));
        }
    }
    if template.n_cells() < 2 {
        return Err(Error::Argument("spacing sweep needs at least two cells".into()));
    }
    spacings
        .iter()
        .map(|&sp| {
            let spec = template.clone().with_spacing(sp);
            let model = build_model(&spec, mesh)?;
            let ext = extract_coupling_matrix(&model, power, opts)?;
            let source = 0;
            let neighbour = if spec.cols > 1 { cell_id(&spec, 1, 2)? } else { cell_id(&spec, 2, 1)? };
            let center = cell_id(&spec, (spec.rows + 1) / 2, (spec.cols + 1) / 2)?;
            Ok(SpacingRow {
                sp,
                tc_nearest: ext.matrix.get(neighbour, source),
                max_rise: (0..spec.n_cells()).map(|m| ext.rises[m][m]).fold(0.0, f64::max),
                center_rise: ext.rises[center][center],
                asymmetry: ext.matrix.asymmetry,
            })
        })
        .collect()
}

/// `cell,row,col,rth_K_per_W,fit_residual`
pub fn write_rth_csv<W: Write>(w: W, spec: &CrossbarSpec, results: &[RthResult]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["cell", "row", "col", "rth_K_per_W", "fit_residual"])?;
    for r in results {
        let (row, col) = cell_position(spec, r.cell);
        out.write_record([
            cell_label(row, col),
            row.to_string(),
            col.to_string(),
            format!("{:e}", r.rth),
            format!("{:e}", r.fit_residual),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `cell,P_W,V_bias,dT_K` — one line per sweep point.
pub fn write_sweep_csv<W: Write>(w: W, spec: &CrossbarSpec, results: &[RthResult]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["cell", "P_W", "V_bias", "dT_K"])?;
    for r in results {
        let (row, col) = cell_position(spec, r.cell);
        for p in &r.points {
            out.write_record([
                cell_label(row, col),
                format!("{:e}", p.power),
                format!("{}", p.bias),
                format!("{}", p.rise),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// `sp_m,tc_nearest,max_dT_K,center_dT_K,asymmetry`
pub fn write_spacing_csv<W: Write>(w: W, rows: &[SpacingRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["sp_m", "tc_nearest", "max_dT_K", "center_dT_K", "asymmetry"])?;
    for r in rows {
        out.write_record([
            format!("{:e}", r.sp),
            format!("{}", r.tc_nearest),
            format!("{}", r.max_rise),
            format!("{}", r.center_rise),
            format!("{:e}", r.asymmetry),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cell() -> CouplingMatrix {
        CouplingMatrix::from_raw(1, 2, &[1.0, 0.5, 0.52, 1.0], vec![1e6, 1.1e6]).unwrap()
    }

    #[test]
    fn from_raw_symmetrizes_and_records_asymmetry() {
        let c = two_cell();
        assert_eq!(c.get(0, 0), 1.0);
        assert_eq!(c.get(1, 1), 1.0);
        // R_01 = 0.5·1.1e6 = 5.5e5, R_10 = 0.52·1e6 = 5.2e5 → mean 5.35e5
        assert!((c.get(0, 1) - 5.35e5 / 1.1e6).abs() < 1e-15);
        assert!((c.get(1, 0) - 5.35e5 / 1e6).abs() < 1e-15);
        assert!((c.mutual_resistance(0, 1) - c.mutual_resistance(1, 0)).abs() < 1e-9);
        assert!((c.asymmetry - 0.02).abs() < 1e-15);
        assert!((c.reciprocity - 3e4 / 1.1e12f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn equal_resistances_give_symmetric_matrix() {
        let c = CouplingMatrix::from_raw(1, 2, &[1.0, 0.5, 0.52, 1.0], vec![1e6, 1e6]).unwrap();
        assert_eq!(c.get(0, 1), c.get(1, 0));
        assert!((c.get(0, 1) - 0.51).abs() < 1e-15);
    }

    #[test]
    fn single_cell_text_is_just_one() {
        let c = CouplingMatrix::uncoupled(1, 1, vec![7e6]);
        let mut buf = Vec::new();
        c.write_text(&mut buf, 300.0).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().any(|l| l == "c 1"));
        let (back, t) = CouplingMatrix::read_text(text.as_bytes()).unwrap();
        assert_eq!(back, c);
        assert_eq!(t, 300.0);
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let c = CouplingMatrix::from_raw(
            2,
            2,
            &[1.0, 0.1 + 0.2, 0.123456789012345, 1.0 / 3.0, 0.3, 1.0, 0.2, 0.25, 0.1234, 0.2, 1.0, 0.7, 1.0 / 3.0, 0.25, 0.7, 1.0],
            vec![6.25e6, 7.123456789e6, 2.0 / 3.0 * 1e7, 7e6],
        )
        .unwrap();
        let mut buf = Vec::new();
        c.write_text(&mut buf, 300.0).unwrap();
        let (back, _) = CouplingMatrix::read_text(buf.as_slice()).unwrap();
        for (a, b) in back.entries.iter().zip(&c.entries) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in back.rth.iter().zip(&c.rth) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn malformed_text_reports_line() {
        let text = "# xtalk coupling matrix v1\narray 1 2\nrth 1e6 1e6\nc 1 0.5\nc 0.5 x\n";
        match CouplingMatrix::read_text(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
        let short = "array 1 2\nrth 1e6 1e6\nc 1 0.5\nc 0.5\n";
        match CouplingMatrix::read_text(short.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
        let bad_diag = "array 1 2\nrth 1e6 1e6\nc 0.9 0.5\nc 0.5 1\n";
        assert!(matches!(CouplingMatrix::read_text(bad_diag.as_bytes()), Err(Error::Parse { .. })));
    }

    #[test]
    fn csv_has_cell_labels() {
        let mut buf = Vec::new();
        two_cell().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "cell,\"(1,1)\",\"(1,2)\"");
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn sweep_arguments_are_checked() {
        let spec = CrossbarSpec::default();
        let mesh = MeshPolicy::default();
        let opts = ExtractionOptions::default();
        assert!(sweep_spacing(&spec, &[80e-9, 80e-9], 1e-6, &mesh, &opts).is_err());
        assert!(sweep_spacing(&spec, &[-1e-9], 1e-6, &mesh, &opts).is_err());
        assert!(sweep_spacing(&CrossbarSpec::with_size(1, 1), &[80e-9], 1e-6, &mesh, &opts).is_err());
    }
}
