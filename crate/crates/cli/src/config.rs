//! Run configuration (TOML).
//!
//! Every section is optional; missing sections and keys take defaults.
//!
//! ```toml
//! out_dir = "out"
//! plot_scripts = true
//!
//! [crossbar]
//! rows = 3
//! cols = 3
//! sp = "400 nm"
//!
//! [mesh]
//! h_min = "2.5 nm"
//!
//! [solver]
//! tol = 1e-8
//!
//! [field]
//! excitation = "single"   # single | all_rows | zero
//! source = [2, 2]
//! power = 2.45e-6         # or `v = 0.3`
//!
//! [extraction]
//! sweep = [0.5e-6, 1.0e-6, 1.5e-6, 2.0e-6, 2.45e-6]
//! p0 = 2.45e-6
//! spacings = ["80 nm", "160 nm", "400 nm"]
//!
//! [inference]
//! patterns = ["all_lrs", "case_a", "case_b"]
//! cycles = 200000
//!
//! [inference.drift]
//! alpha = 395.0
//! ea = 0.6
//!
//! [netlist]
//! prune = 0.01
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xtalk_core::crossbar_circuit::{DriftParams, InferenceOptions, LogPolicy, G_LRS, K_B};
use xtalk_core::extraction::{ExtractionOptions, DEFAULT_P0, DEFAULT_SWEEP};
use xtalk_core::field_solver::SolverOptions;
use xtalk_core::geometry::{CrossbarSpec, MeshPolicy};
use xtalk_core::thermal_network::{FixedPointOptions, NetlistOptions};
use xtalk_core::units::length_vec;
use xtalk_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    /// Also write gnuplot scripts next to the CSV outputs.
    pub plot_scripts: bool,
    pub crossbar: CrossbarSpec,
    pub mesh: MeshPolicy,
    pub solver: SolverSection,
    pub field: FieldSection,
    pub extraction: ExtractionSection,
    pub inference: InferenceSection,
    pub netlist: NetlistSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            plot_scripts: false,
            crossbar: CrossbarSpec::default(),
            mesh: MeshPolicy::default(),
            solver: SolverSection::default(),
            field: FieldSection::default(),
            extraction: ExtractionSection::default(),
            inference: InferenceSection::default(),
            netlist: NetlistSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    /// Relative residual target of the linear solves.
    pub tol: f64,
    /// Iteration cap; 0 picks 50 × (nx + ny + nz).
    pub max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Excitation {
    /// One LRS cell, its row driven, every other line grounded.
    Single,
    /// Every cell LRS, every row driven, columns grounded.
    AllRows,
    /// All lines grounded.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldSection {
    pub excitation: Excitation,
    /// 1-based (row, col) of the source for `single`.
    pub source: [usize; 2],
    /// Row bias (V).
    pub v: f64,
    /// Target source power (W); overrides `v` for `single`.
    pub power: Option<f64>,
    /// Also integrate the transient up to `t_end` (s).
    pub transient: bool,
    pub t_end: f64,
    /// Write voxel field dumps.
    pub dumps: bool,
}

impl Default for FieldSection {
    fn default() -> Self {
        Self {
            excitation: Excitation::Single,
            source: [2, 2],
            v: 0.3,
            power: Some(DEFAULT_P0),
            transient: false,
            t_end: 20e-6,
            dumps: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractionSection {
    /// Power sweep for R_th fits (W).
    pub sweep: Vec<f64>,
    /// Source power for coupling extraction (W).
    pub p0: f64,
    /// Largest row bias the power search may use (V).
    pub bias_cap: f64,
    /// Cells to sweep, 1-based (row, col); empty means every cell.
    pub rth_cells: Vec<[usize; 2]>,
    #[serde(with = "length_vec")]
    pub spacings: Vec<f64>,
}

impl Default for ExtractionSection {
    fn default() -> Self {
        Self {
            sweep: DEFAULT_SWEEP.to_vec(),
            p0: DEFAULT_P0,
            bias_cap: 5.0,
            rth_cells: Vec::new(),
            spacings: vec![80e-9, 120e-9, 160e-9, 240e-9, 400e-9],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftSection {
    pub alpha: f64,
    pub ea: f64,
    pub beta: f64,
}

impl Default for DriftSection {
    fn default() -> Self {
        let d = DriftParams::default();
        Self { alpha: d.alpha, ea: d.ea, beta: d.beta }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceSection {
    /// Preset names (`all_lrs`, `case_a`, `case_b`) or custom patterns
    /// declared under `[inference.custom]`.
    pub patterns: Vec<String>,
    /// Custom patterns: name → list of 1-based (row, col) LRS cells.
    pub custom: std::collections::BTreeMap<String, Vec<[usize; 2]>>,
    /// Coupling file; the bundled 3×3 network when absent.
    pub coupling: Option<PathBuf>,
    pub v_read: f64,
    pub pulse_width: f64,
    pub cycles: u64,
    pub reference_column: usize,
    /// Line segment resistance (Ω).
    pub r_line: f64,
    pub g_lrs: f64,
    /// Logged cycles per decade.
    pub log_per_decade: usize,
    pub t_cap: f64,
    pub drift: DriftSection,
}

impl Default for InferenceSection {
    fn default() -> Self {
        let o = InferenceOptions::default();
        Self {
            patterns: vec!["all_lrs".into(), "case_a".into(), "case_b".into()],
            custom: Default::default(),
            coupling: None,
            v_read: o.v_read,
            pulse_width: o.pulse_width,
            cycles: o.n_cycles,
            reference_column: o.reference_column,
            r_line: o.r_line,
            g_lrs: G_LRS,
            log_per_decade: 4,
            t_cap: o.fixed_point.t_cap,
            drift: DriftSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetlistSection {
    /// Coupling file to emit; `<out_dir>/coupling.txt` when absent.
    pub coupling: Option<PathBuf>,
    pub subckt: String,
    pub device: String,
    /// Couplings below this are dropped.
    pub prune: f64,
}

impl Default for NetlistSection {
    fn default() -> Self {
        let n = NetlistOptions::default();
        Self { coupling: None, subckt: n.subckt, device: n.device, prune: n.prune }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        // relative paths inside the file are relative to the file
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.inference.coupling, &mut cfg.netlist.coupling].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks cross-field constraints the types cannot express.
    pub fn validate(&self) -> Result<()> {
        let violations = xtalk_core::geometry::validate(&self.crossbar);
        if !violations.is_empty() {
            return Err(Error::InvalidSpec(violations));
        }
        let mut bad = Vec::new();
        if !(self.solver.tol > 0.0) {
            bad.push(format!("solver.tol must be positive (got {})", self.solver.tol));
        }
        if let Some(p) = self.field.power {
            if !(p > 0.0) {
                bad.push(format!("field.power must be positive (got {p})"));
            }
        }
        if !(self.extraction.p0 > 0.0) {
            bad.push(format!("extraction.p0 must be positive (got {})", self.extraction.p0));
        }
        let i = &self.inference;
        if i.cycles == 0 {
            bad.push("inference.cycles must be at least 1".into());
        }
        if !(i.drift.alpha >= 0.0 && i.drift.ea > 0.0 && i.drift.beta >= 0.0) {
            bad.push("inference.drift needs alpha ≥ 0, ea > 0, beta ≥ 0".into());
        }
        if !(0.0..1.0).contains(&self.netlist.prune) {
            bad.push(format!("netlist.prune must lie in [0, 1) (got {})", self.netlist.prune));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver.tol,
            max_iter: (self.solver.max_iter > 0).then_some(self.solver.max_iter),
        }
    }

    pub fn extraction_options(&self) -> ExtractionOptions {
        ExtractionOptions { solver: self.solver_options(), bias_cap: self.extraction.bias_cap }
    }

    pub fn drift(&self) -> DriftParams {
        let d = self.inference.drift;
        DriftParams { alpha: d.alpha, ea: d.ea, beta: d.beta, k_b: K_B }
    }

    pub fn inference_options(&self) -> InferenceOptions {
        let i = &self.inference;
        InferenceOptions {
            v_read: i.v_read,
            pulse_width: i.pulse_width,
            n_cycles: i.cycles,
            reference_column: i.reference_column,
            r_line: i.r_line,
            g_lrs: i.g_lrs,
            log: LogPolicy::Decades { per_decade: i.log_per_decade },
            fixed_point: FixedPointOptions { t_cap: i.t_cap, ..Default::default() },
        }
    }

    pub fn netlist_options(&self) -> NetlistOptions {
        NetlistOptions {
            subckt: self.netlist.subckt.clone(),
            device: self.netlist.device.clone(),
            prune: self.netlist.prune,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trip_is_a_fixed_point() {
        let text = r#"
            out_dir = "results"
            [crossbar]
            rows = 2
            sp = "80 nm"
            [mesh]
            h_max = "0.1 um"
            [extraction]
            spacings = ["80nm", 1.6e-7]
            [inference]
            patterns = ["all_lrs", "mine"]
            custom = { mine = [[1, 1], [2, 3]] }
            [inference.drift]
            ea = 0.7
        "#;
        let a = RunConfig::from_toml_str(text).unwrap();
        assert_eq!(a.crossbar.sp, 80e-9);
        assert_eq!(a.extraction.spacings, vec![80e-9, 1.6e-7]);
        let s = a.to_toml_string().unwrap();
        let b = RunConfig::from_toml_str(&s).unwrap();
        assert_eq!(a, b);
        assert_eq!(s, b.to_toml_string().unwrap());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml_str("[crossbar]\nspacing = 1").is_err());
        assert!(RunConfig::from_toml_str("colour = 1").is_err());
    }

    #[test]
    fn validation_collects_problems() {
        let mut cfg = RunConfig::default();
        cfg.field.power = Some(-1.0);
        cfg.inference.cycles = 0;
        match cfg.validate() {
            Err(Error::Config(msg)) => {
                assert!(msg.contains("field.power"));
                assert!(msg.contains("inference.cycles"));
            }
            other => panic!("{other:?}"),
        }
        cfg = RunConfig::default();
        cfg.crossbar.r_cf = 50e-9;
        assert!(matches!(cfg.validate(), Err(Error::InvalidSpec(_))));
    }
}
