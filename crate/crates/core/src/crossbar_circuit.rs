//! Read/VMM operation of a passive crossbar with the thermal network in the
//! loop and a thermally accelerated read-disturb drift law.
//!
//! Inference drives every row with the read voltage and grounds every
//! column. Each read pulse is long enough for the array to reach thermal
//! steady state, so a pulse sees the network's steady temperatures for the
//! conductances it starts with; the pulse then nudges every conductance
//! upward by the drift law.

use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::cell_label;
use crate::thermal_network::{solve_electrothermal, FixedPointOptions, ThermalNetwork};

/// Boltzmann constant (eV/K).
pub const K_B: f64 = 8.617_333_262e-5;

/// LRS programmed conductance (S): a 5 nm-radius, 20 nm-long filament at
/// 7e3 S/m.
pub const G_LRS: f64 = 27.5e-6;

/// LRS/HRS conductance ratio.
pub const HRS_RATIO: f64 = 1000.0;

/// Read voltage the drift law is normalized to (V).
pub const V_REF: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResistanceState {
    Lrs,
    Hrs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellState {
    pub state: ResistanceState,
    /// Present conductance (S).
    pub g: f64,
    /// Programmed conductance (S).
    pub g_prog: f64,
    /// Temperature (K).
    pub t: f64,
}

impl CellState {
    pub fn programmed(state: ResistanceState, g_lrs: f64, t_amb: f64) -> Self {
        let g = match state {
            ResistanceState::Lrs => g_lrs,
            ResistanceState::Hrs => g_lrs / HRS_RATIO,
        };
        Self { state, g, g_prog: g, t: t_amb }
    }
}

/// Conductance state of a whole array, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayState {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<CellState>,
}

impl ArrayState {
    pub fn from_pattern(pattern: &InferencePattern, g_lrs: f64, t_amb: f64) -> Self {
        let cells = pattern
            .lrs
            .iter()
            .map(|&on| CellState::programmed(if on { ResistanceState::Lrs } else { ResistanceState::Hrs }, g_lrs, t_amb))
            .collect();
        Self { rows: pattern.rows, cols: pattern.cols, cells }
    }

    pub fn conductances(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.g).collect()
    }

    pub fn programmed(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.g_prog).collect()
    }
}

/// Which cells are in LRS during inference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InferencePattern {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub lrs: Vec<bool>,
}

impl InferencePattern {
    pub fn all_lrs(rows: usize, cols: usize) -> Self {
        Self { name: "all_lrs".into(), rows, cols, lrs: vec![true; rows * cols] }
    }

    /// Three LRS cells sharing one column line (column 2, rows 1–3).
    pub fn case_a(rows: usize, cols: usize) -> Result<Self> {
        if rows < 3 || cols < 2 {
            return Err(Error::Argument(format!("case A needs at least 3 rows and 2 columns (got {rows}×{cols})")));
        }
        Self::custom("case_a", rows, cols, &[(1, 2), (2, 2), (3, 2)])
    }

    /// Three LRS cells sharing no line (the main diagonal).
    pub fn case_b(rows: usize, cols: usize) -> Result<Self> {
        if rows < 3 || cols < 3 {
            return Err(Error::Argument(format!("case B needs at least a 3×3 array (got {rows}×{cols})")));
        }
        Self::custom("case_b", rows, cols, &[(1, 1), (2, 2), (3, 3)])
    }

    /// LRS at the listed 1-based (row, col) positions, HRS elsewhere.
    pub fn custom(name: &str, rows: usize, cols: usize, cells: &[(usize, usize)]) -> Result<Self> {
        let mut lrs = vec![false; rows * cols];
        for &(r, c) in cells {
            if r == 0 || r > rows || c == 0 || c > cols {
                return Err(Error::Argument(format!("cell {} outside the {rows}×{cols} array", cell_label(r, c))));
            }
            lrs[(r - 1) * cols + c - 1] = true;
        }
        Ok(Self { name: name.into(), rows, cols, lrs })
    }

    /// Preset by name: `all_lrs`, `case_a`, `case_b`.
    pub fn preset(name: &str, rows: usize, cols: usize) -> Result<Self> {
        match name {
            "all_lrs" => Ok(Self::all_lrs(rows, cols)),
            "case_a" => Self::case_a(rows, cols),
            "case_b" => Self::case_b(rows, cols),
            other => Err(Error::Argument(format!("unknown pattern {other:?} (expected all_lrs, case_a or case_b)"))),
        }
    }
}

/// Surrogate read-disturb law:
/// G ← G·(1 + α·(v/0.3 V)^β·exp(−E_a/(k_B·T))).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftParams {
    /// Prefactor per read pulse.
    pub alpha: f64,
    /// Activation energy (eV).
    pub ea: f64,
    /// Read-voltage exponent.
    pub beta: f64,
    /// Boltzmann constant (eV/K).
    pub k_b: f64,
}

impl Default for DriftParams {
    /// Calibrated on the shipped 3×3 coupling matrix at 0.3 V reads; see
    /// [`calibrate_drift`].
    fn default() -> Self {
        Self { alpha: 395.0, ea: 0.6, beta: 2.0, k_b: K_B }
    }
}

impl DriftParams {
    pub fn check(&self) -> Result<()> {
        let ok = self.alpha >= 0.0 && self.ea > 0.0 && self.beta >= 0.0 && self.k_b > 0.0;
        if !ok || ![self.alpha, self.ea, self.beta, self.k_b].iter().all(|x| x.is_finite()) {
            return Err(Error::Argument(format!("invalid drift parameters {self:?}")));
        }
        Ok(())
    }

    /// Relative conductance increase for one pulse at `v` and `t`.
    pub fn rate(&self, v: f64, t: f64) -> f64 {
        self.alpha * (v.abs() / V_REF).powf(self.beta) * (-self.ea / (self.k_b * t)).exp()
    }
}

/// I_j = Σ_i G_ij·v_i for a row-major `rows`×`cols` conductance matrix.
pub fn ideal_currents(g: &[f64], rows: usize, v: &[f64]) -> Result<Vec<f64>> {
    if rows == 0 || v.len() != rows || g.len() % rows != 0 {
        return Err(Error::Argument(format!("{} conductances do not fit {} row voltages", g.len(), v.len())));
    }
    let cols = g.len() / rows;
    Ok((0..cols).map(|j| (0..rows).map(|i| g[i * cols + j] * v[i]).sum()).collect())
}

/// Column currents of the resistive crossbar by nodal analysis.
///
/// Row i is driven at its left end through `r_line`, each cell sits between
/// a row node and a column node, and segments of `r_line` join neighbouring
/// nodes; each column is grounded below its last row through `r_line`.
/// With `r_line = 0` the lines are ideal and the result is
/// [`ideal_currents`].
pub fn solve_array(g: &[f64], rows: usize, v: &[f64], r_line: f64) -> Result<Vec<f64>> {
    let ideal = ideal_currents(g, rows, v)?;
    if !(r_line >= 0.0 && r_line.is_finite()) {
        return Err(Error::Argument(format!("line resistance must be non-negative (got {r_line})")));
    }
    if r_line == 0.0 {
        return Ok(ideal);
    }
    let cols = ideal.len();
    let cells = rows * cols;
    let n = 2 * cells;
    let gl = 1.0 / r_line;
    // unknowns: row nodes 0..cells, column nodes cells..2·cells
    let row_node = |i: usize, j: usize| i * cols + j;
    let col_node = |i: usize, j: usize| cells + i * cols + j;
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    let mut stamp = |p: usize, q: Option<usize>, g: f64, b: &mut [f64], fixed: f64| {
        a[p * n + p] += g;
        match q {
            Some(q) => {
                a[q * n + q] += g;
                a[p * n + q] -= g;
                a[q * n + p] -= g;
            }
            None => b[p] += g * fixed,
        }
    };
    for i in 0..rows {
        stamp(row_node(i, 0), None, gl, &mut b, v[i]);
        for j in 0..cols {
            if j + 1 < cols {
                stamp(row_node(i, j), Some(row_node(i, j + 1)), gl, &mut b, 0.0);
            }
            stamp(row_node(i, j), Some(col_node(i, j)), g[i * cols + j], &mut b, 0.0);
            if i + 1 < rows {
                stamp(col_node(i, j), Some(col_node(i + 1, j)), gl, &mut b, 0.0);
            } else {
                stamp(col_node(i, j), None, gl, &mut b, 0.0);
            }
        }
    }
    let x = solve_dense(a, b)?;
    Ok((0..cols).map(|j| x[col_node(rows - 1, j)] * gl).collect())
}

// Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs())).unwrap();
        if !(a[p * n + k].abs() > 1e-14 * scale) {
            return Err(Error::NoConvergence {
                what: "crossbar nodal analysis (singular network)".into(),
                iterations: k,
                residual: f64::INFINITY,
                history: Vec::new(),
            });
        }
        if p != k {
            for c in 0..n {
                a.swap(k * n + c, p * n + c);
            }
            b.swap(k, p);
        }
        for i in k + 1..n {
            let f = a[i * n + k] / a[k * n + k];
            if f != 0.0 {
                for c in k..n {
                    a[i * n + c] -= f * a[k * n + c];
                }
                b[i] -= f * b[k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|c| a[k * n + c] * x[c]).sum();
        x[k] = (b[k] - s) / a[k * n + k];
    }
    Ok(x)
}

/// (1 − |(I_a − I_i)/(I_a + I_i)|)·100.
pub fn vmm_accuracy(actual: f64, ideal: f64) -> Result<f64> {
    let den = actual + ideal;
    if den == 0.0 || !den.is_finite() {
        return Err(Error::Argument(format!("accuracy undefined for I_actual = {actual:e}, I_ideal = {ideal:e}")));
    }
    Ok((1.0 - ((actual - ideal) / den).abs()) * 100.0)
}

/// (G_prog − G)/G_prog·100; negative when the conductance has grown.
pub fn drift_percent(g: f64, g_prog: f64) -> f64 {
    (g_prog - g) * 100.0 / g_prog
}

/// Conductance after one read pulse at `v` with the cell at `cell.t`.
pub fn drift_step(cell: &CellState, v: f64, params: &DriftParams) -> f64 {
    cell.g * (1.0 + params.rate(v, cell.t))
}

/// Which cycles get recorded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogPolicy {
    /// `per_decade` log-spaced cycles per decade, starting at 1.
    Decades { per_decade: usize },
    Every(u64),
}

impl Default for LogPolicy {
    fn default() -> Self {
        LogPolicy::Decades { per_decade: 1 }
    }
}

impl LogPolicy {
    /// Sorted cycle numbers to record in 1..=n; always includes `n`.
    pub fn cycles(&self, n: u64) -> Vec<u64> {
        let mut out: Vec<u64> = match *self {
            LogPolicy::Every(k) => (1..=n).filter(|c| c % k.max(1) == 0 || *c == 1).collect(),
            LogPolicy::Decades { per_decade } => {
                let k = per_decade.max(1) as f64;
                let mut v = Vec::new();
                let mut e = 0u32;
                loop {
                    let c = 10f64.powf(e as f64 / k).round() as u64;
                    if c > n {
                        break;
                    }
                    v.push(c);
                    e += 1;
                }
                v
            }
        };
        out.push(n);
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceOptions {
    pub v_read: f64,
    /// Read pulse width (s); the steady-state assumption needs it to exceed
    /// the array's thermal settling time.
    pub pulse_width: f64,
    pub n_cycles: u64,
    /// 1-based column used for the headline accuracy.
    pub reference_column: usize,
    /// Line segment resistance (Ω).
    pub r_line: f64,
    pub g_lrs: f64,
    pub log: LogPolicy,
    pub fixed_point: FixedPointOptions,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        Self {
            v_read: 0.3,
            pulse_width: 100e-6,
            n_cycles: 200_000,
            reference_column: 2,
            r_line: 0.0,
            g_lrs: G_LRS,
            log: LogPolicy::default(),
            fixed_point: FixedPointOptions { t_cap: 1500.0, ..Default::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub cycle: u64,
    pub i_actual: Vec<f64>,
    pub i_ideal: Vec<f64>,
    /// Per column; `None` when both currents vanish.
    pub accuracy: Vec<Option<f64>>,
    pub drift: Vec<f64>,
    pub temperature: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Runaway {
    pub cycle: u64,
    pub cell: usize,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceTrace {
    pub pattern: String,
    pub rows: usize,
    pub cols: usize,
    pub reference_column: usize,
    pub records: Vec<TraceRecord>,
    pub runaway: Option<Runaway>,
}

impl InferenceTrace {
    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("a trace always holds at least one record")
    }

    /// Reference-column accuracy at the last logged cycle.
    pub fn final_accuracy(&self) -> Option<f64> {
        self.last().accuracy[self.reference_column - 1]
    }

    /// Reference-column accuracy at the logged cycle closest to `cycle`
    /// from below.
    pub fn accuracy_at(&self, cycle: u64) -> Option<f64> {
        self.records.iter().filter(|r| r.cycle <= cycle).last()?.accuracy[self.reference_column - 1]
    }

    /// `cycle,column_id,I_actual_A,I_ideal_A,accuracy_pct` followed by one
    /// `drift_pct(r,c)` and one `T_K(r,c)` column per cell.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let labels: Vec<String> = (0..self.rows * self.cols).map(|n| cell_label(n / self.cols + 1, n % self.cols + 1)).collect();
        let mut header: Vec<String> =
            ["cycle", "column_id", "I_actual_A", "I_ideal_A", "accuracy_pct"].iter().map(|s| s.to_string()).collect();
        header.extend(labels.iter().map(|l| format!("drift_pct{l}")));
        header.extend(labels.iter().map(|l| format!("T_K{l}")));
        out.write_record(&header)?;
        for r in &self.records {
            for j in 0..self.cols {
                let mut rec = vec![
                    r.cycle.to_string(),
                    (j + 1).to_string(),
                    format!("{:e}", r.i_actual[j]),
                    format!("{:e}", r.i_ideal[j]),
                    r.accuracy[j].map_or("undefined".into(), |a| format!("{a}")),
                ];
                rec.extend(r.drift.iter().map(|d| format!("{d}")));
                rec.extend(r.temperature.iter().map(|t| format!("{t}")));
                out.write_record(&rec)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Repeated VMM reads with thermally accelerated drift.
pub fn run_inference(
    pattern: &InferencePattern,
    net: &ThermalNetwork,
    drift: &DriftParams,
    opts: &InferenceOptions,
) -> Result<InferenceTrace> {
    drift.check()?;
    let (rows, cols) = (pattern.rows, pattern.cols);
    if pattern.lrs.len() != rows * cols || net.coupling.rows != rows || net.coupling.cols != cols {
        return Err(Error::Argument(format!(
            "pattern is {rows}×{cols} but the thermal network is {}×{}",
            net.coupling.rows, net.coupling.cols
        )));
    }
    if opts.n_cycles == 0 {
        return Err(Error::Argument("at least one read cycle is required".into()));
    }
    if opts.reference_column == 0 || opts.reference_column > cols {
        return Err(Error::Argument(format!("reference column {} outside 1..={cols}", opts.reference_column)));
    }
    if !(opts.pulse_width > 0.0) {
        return Err(Error::Argument(format!("pulse width must be positive (got {})", opts.pulse_width)));
    }
    let mut state = ArrayState::from_pattern(pattern, opts.g_lrs, net.t_amb);
    let v_rows = vec![opts.v_read; rows];
    let volts = vec![opts.v_read; rows * cols];
    let i_ideal = ideal_currents(&state.programmed(), rows, &v_rows)?;
    let log = opts.log.cycles(opts.n_cycles);
    let mut next_log = 0;
    let mut records = Vec::with_capacity(log.len());
    let mut runaway = None;

    for cycle in 1..=opts.n_cycles {
        let g_now = state.conductances();
        // the cap is applied below so the offending pulse still gets logged
        let fp = FixedPointOptions { t_cap: f64::INFINITY, ..opts.fixed_point };
        let point = solve_electrothermal(net, |n, _| g_now[n], &volts, &fp)?;
        for (c, dt) in state.cells.iter_mut().zip(&point.rise) {
            c.t = net.t_amb + dt;
        }
        let hot = state.cells.iter().enumerate().find(|(_, c)| !(c.t <= opts.fixed_point.t_cap));
        if let Some((cell, c)) = hot {
            runaway = Some(Runaway { cycle, cell, temperature: c.t });
        }
        if runaway.is_some() || log.get(next_log) == Some(&cycle) {
            let i_actual = solve_array(&g_now, rows, &v_rows, opts.r_line)?;
            records.push(TraceRecord {
                cycle,
                accuracy: i_actual.iter().zip(&i_ideal).map(|(a, b)| vmm_accuracy(*a, *b).ok()).collect(),
                i_actual,
                i_ideal: i_ideal.clone(),
                drift: state.cells.iter().map(|c| drift_percent(c.g, c.g_prog)).collect(),
                temperature: state.cells.iter().map(|c| c.t).collect(),
            });
            next_log += 1;
        }
        if runaway.is_some() {
            break;
        }
        for (c, v) in state.cells.iter_mut().zip(&volts) {
            c.g = drift_step(c, *v, drift);
        }
    }
    Ok(InferenceTrace {
        pattern: pattern.name.clone(),
        rows,
        cols,
        reference_column: opts.reference_column,
        records,
        runaway,
    })
}

/// Reference-column accuracy lost to thermal coupling: the same pattern
/// run on the uncoupled network minus the coupled run, at the last cycle.
pub fn additional_degradation(
    pattern: &InferencePattern,
    net: &ThermalNetwork,
    drift: &DriftParams,
    opts: &InferenceOptions,
) -> Result<f64> {
    let coupled = run_inference(pattern, net, drift, opts)?;
    let alone = run_inference(pattern, &net.uncoupled(), drift, opts)?;
    match (alone.final_accuracy(), coupled.final_accuracy()) {
        (Some(a), Some(b)) if coupled.runaway.is_none() => Ok(a - b),
        _ => Err(Error::Argument(format!("pattern {} ran away or has no defined accuracy", pattern.name))),
    }
}

/// Picks α for a fixed E_a (β = 2) by bisection on log α so that the
/// all-LRS pattern loses `target` accuracy points to coupling after
/// `opts.n_cycles` reads.
pub fn calibrate_drift(net: &ThermalNetwork, ea: f64, target: f64, opts: &InferenceOptions) -> Result<DriftParams> {
    let pattern = InferencePattern::all_lrs(net.coupling.rows, net.coupling.cols);
    let opts = InferenceOptions { log: LogPolicy::Every(opts.n_cycles), ..*opts };
    let at = |log_alpha: f64| -> f64 {
        let d = DriftParams { alpha: log_alpha.exp(), ea, beta: 2.0, k_b: K_B };
        // runaway counts as overshooting the target
        additional_degradation(&pattern, net, &d, &opts).unwrap_or(100.0)
    };
    let (mut lo, mut hi) = (-20.0f64, 60.0f64);
    if at(lo) > target || at(hi) < target {
        return Err(Error::Argument(format!("cannot reach {target}% additional degradation with E_a = {ea} eV")));
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(DriftParams { alpha: (0.5 * (lo + hi)).exp(), ea, beta: 2.0, k_b: K_B })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::CouplingMatrix;

    #[test]
    fn ideal_current_examples() {
        let g = vec![1e-3; 9];
        assert_eq!(ideal_currents(&g, 3, &[0.3; 3]).unwrap(), vec![0.3e-3 * 3.0; 3]);
        assert_eq!(ideal_currents(&g, 3, &[0.0; 3]).unwrap(), vec![0.0; 3]);
        let mut one = vec![0.0; 9];
        one[4] = 27.5e-6;
        let i = ideal_currents(&one, 3, &[0.3; 3]).unwrap();
        assert!((i[1] - 8.25e-6).abs() < 1e-18);
    }

    #[test]
    fn series_cell() {
        let (g, r, v) = (27.5e-6, 150.0, 0.3);
        let i = solve_array(&[g], 1, &[v], r).unwrap();
        assert!((i[0] - v / (1.0 / g + 2.0 * r)).abs() < 1e-15);
    }

    // node-by-node Gauss–Seidel on the same 2×2 network
    fn relaxation_2x2(g: [f64; 4], v: [f64; 2], r: f64) -> Vec<f64> {
        let gl = 1.0 / r;
        let (mut rw, mut cl) = ([[0.0f64; 2]; 2], [[0.0f64; 2]; 2]);
        for _ in 0..100_000 {
            for i in 0..2 {
                let (g0, g1) = (g[i * 2], g[i * 2 + 1]);
                rw[i][0] = (gl * v[i] + gl * rw[i][1] + g0 * cl[i][0]) / (2.0 * gl + g0);
                rw[i][1] = (gl * rw[i][0] + g1 * cl[i][1]) / (gl + g1);
            }
            for j in 0..2 {
                let (g0, g1) = (g[j], g[2 + j]);
                cl[0][j] = (g0 * rw[0][j] + gl * cl[1][j]) / (g0 + gl);
                cl[1][j] = (g1 * rw[1][j] + gl * cl[0][j]) / (g1 + 2.0 * gl);
            }
        }
        (0..2).map(|j| cl[1][j] * gl).collect()
    }

    #[test]
    fn two_by_two_matches_relaxation_oracle() {
        let g = [1e-3, 2e-3, 0.5e-3, 4e-3];
        let v = [0.3, 0.2];
        let r = 25.0;
        let nodal = solve_array(&g, 2, &v, r).unwrap();
        let oracle = relaxation_2x2(g, v, r);
        for (a, b) in nodal.iter().zip(&oracle) {
            assert!(((a - b) / b).abs() < 1e-10, "{a} vs {b}");
        }
        let ideal = ideal_currents(&g, 2, &v).unwrap();
        assert!(nodal.iter().zip(&ideal).all(|(a, b)| a < b));
    }

    #[test]
    fn accuracy_and_drift_formulas() {
        assert_eq!(vmm_accuracy(1e-6, 1e-6).unwrap(), 100.0);
        assert_eq!(vmm_accuracy(0.0, 1e-6).unwrap(), 0.0);
        assert_eq!(vmm_accuracy(3.0, 1.0).unwrap(), 50.0);
        assert!(vmm_accuracy(0.0, 0.0).is_err());
        let g_prog = 10.0;
        assert_eq!(drift_percent(g_prog, g_prog), 0.0);
        assert_eq!(drift_percent(0.9 * g_prog, g_prog), 10.0);
        assert_eq!(drift_percent(1.2 * g_prog, g_prog), -20.0);
    }

    #[test]
    fn drift_law() {
        let cell = CellState::programmed(ResistanceState::Lrs, G_LRS, 300.0);
        let off = DriftParams { alpha: 0.0, ..Default::default() };
        assert_eq!(drift_step(&cell, 0.3, &off), cell.g);
        let p = DriftParams { alpha: 1e3, ea: 0.6, ..Default::default() };
        let hot = CellState { t: 400.0, ..cell };
        let cold_step = drift_step(&cell, 0.3, &p) / cell.g - 1.0;
        let hot_step = drift_step(&hot, 0.3, &p) / cell.g - 1.0;
        assert!(hot_step > cold_step);
        let expected = (-0.6 / (K_B * 400.0)).exp() / (-0.6 / (K_B * 300.0)).exp();
        assert!((hot_step / cold_step - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn presets() {
        let a = InferencePattern::case_a(3, 3).unwrap();
        assert_eq!(a.lrs, vec![false, true, false, false, true, false, false, true, false]);
        let b = InferencePattern::case_b(3, 3).unwrap();
        assert_eq!(b.lrs, vec![true, false, false, false, true, false, false, false, true]);
        assert!(InferencePattern::preset("nope", 3, 3).is_err());
        assert!(InferencePattern::case_b(2, 3).is_err());
    }

    #[test]
    fn decade_logging() {
        assert_eq!(LogPolicy::default().cycles(2000), vec![1, 10, 100, 1000, 2000]);
        assert_eq!(LogPolicy::Decades { per_decade: 2 }.cycles(10), vec![1, 3, 10]);
        assert_eq!(LogPolicy::Every(4).cycles(10), vec![1, 4, 8, 10]);
    }

    fn net3() -> ThermalNetwork {
        let raw: Vec<f64> = (0..81)
            .map(|k| {
                let (n, m) = (k / 9, k % 9);
                let d = (n / 3usize).abs_diff(m / 3) + (n % 3usize).abs_diff(m % 3);
                if d == 0 { 1.0 } else { 0.35 / d as f64 }
            })
            .collect();
        ThermalNetwork::new(CouplingMatrix::from_raw(3, 3, &raw, vec![7e6; 9]).unwrap(), 300.0).unwrap()
    }

    #[test]
    fn single_cycle_without_drift_is_exact() {
        let opts = InferenceOptions { n_cycles: 1, ..Default::default() };
        let d = DriftParams { alpha: 0.0, ..Default::default() };
        let t = run_inference(&InferencePattern::all_lrs(3, 3), &net3(), &d, &opts).unwrap();
        assert_eq!(t.records.len(), 1);
        assert_eq!(t.final_accuracy(), Some(100.0));
        assert!(t.last().drift.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn no_drift_no_coupling_stays_perfect() {
        let opts = InferenceOptions { n_cycles: 1000, ..Default::default() };
        let d = DriftParams { alpha: 0.0, ..Default::default() };
        let t = run_inference(&InferencePattern::all_lrs(3, 3), &net3().uncoupled(), &d, &opts).unwrap();
        for r in &t.records {
            assert!(r.accuracy.iter().all(|a| *a == Some(100.0)));
        }
    }

    #[test]
    fn runaway_is_flagged() {
        let opts = InferenceOptions { n_cycles: 100_000, ..Default::default() };
        let d = DriftParams { alpha: 1e6, ea: 0.3, ..Default::default() };
        let t = run_inference(&InferencePattern::all_lrs(3, 3), &net3(), &d, &opts).unwrap();
        let r = t.runaway.expect("runaway");
        assert!(r.temperature > 1500.0);
        assert!(r.cycle < 100_000);
        assert_eq!(t.last().cycle, r.cycle);
    }

    #[test]
    fn trace_is_deterministic_and_csv_has_blocks() {
        let opts = InferenceOptions { n_cycles: 500, ..Default::default() };
        let d = DriftParams { alpha: 1e4, ..Default::default() };
        let p = InferencePattern::case_a(3, 3).unwrap();
        let a = run_inference(&p, &net3(), &d, &opts).unwrap();
        let b = run_inference(&p, &net3(), &d, &opts).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with("cycle,column_id,I_actual_A,I_ideal_A,accuracy_pct,\"drift_pct(1,1)\""));
        assert_eq!(header.matches("T_K").count(), 9);
        assert_eq!(text.lines().count(), 1 + 3 * a.records.len());
    }
}
