//! Compact steady-state thermal network built from a coupling matrix.
//!
//! Each cell's rise is its own self-heating R_th·P plus the coupled
//! self-heating rises of every other cell:
//! ΔT_n = Σ_m c_nm · R_m · P_m.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::extraction::CouplingMatrix;
use crate::geometry::cell_label;

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalNetwork {
    pub coupling: CouplingMatrix,
    /// Ambient / sink temperature (K).
    pub t_amb: f64,
}

impl ThermalNetwork {
    pub fn new(coupling: CouplingMatrix, t_amb: f64) -> Result<Self> {
        coupling.check()?;
        if !(t_amb > 0.0 && t_amb.is_finite()) {
            return Err(Error::Argument(format!("ambient temperature must be positive (got {t_amb})")));
        }
        Ok(Self { coupling, t_amb })
    }

    pub fn dim(&self) -> usize {
        self.coupling.dim()
    }

    /// Same resistances, coupling replaced by the identity.
    pub fn uncoupled(&self) -> Self {
        let c = &self.coupling;
        Self { coupling: CouplingMatrix::uncoupled(c.rows, c.cols, c.rth.clone()), t_amb: self.t_amb }
    }
}

const REFERENCE_3X3: &str = include_str!("../data/coupling_3x3_sp400.txt");

/// Network extracted from the default 3×3 array at 400 nm spacing with the
/// default mesh; used by inference when no coupling file is given.
pub fn reference_network() -> ThermalNetwork {
    let (coupling, t_amb) = CouplingMatrix::read_text(REFERENCE_3X3.as_bytes()).expect("bundled coupling matrix parses");
    ThermalNetwork::new(coupling, t_amb).expect("bundled coupling matrix is valid")
}

/// ΔT = C · (R_th ∘ P), in K above ambient.
pub fn cell_temperatures(net: &ThermalNetwork, power: &[f64]) -> Result<Vec<f64>> {
    let dim = net.dim();
    if power.len() != dim {
        return Err(Error::Argument(format!("power vector has {} entries, network has {dim} cells", power.len())));
    }
    if let Some(p) = power.iter().find(|p| !(**p >= 0.0 && p.is_finite())) {
        return Err(Error::Argument(format!("cell powers must be non-negative (got {p})")));
    }
    Ok(rises(net, power))
}

fn rises(net: &ThermalNetwork, power: &[f64]) -> Vec<f64> {
    let c = &net.coupling;
    let dim = c.dim();
    let own: Vec<f64> = power.iter().zip(&c.rth).map(|(p, r)| p * r).collect();
    (0..dim).map(|n| c.entries[n * dim..(n + 1) * dim].iter().zip(&own).map(|(a, b)| a * b).sum()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    /// Convergence threshold on the largest ΔT update (K).
    pub tol: f64,
    /// Relaxation factor in (0, 1].
    pub damping: f64,
    pub max_iter: usize,
    /// Absolute temperature treated as thermal runaway (K).
    pub t_cap: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self { tol: 1e-6, damping: 0.5, max_iter: 200, t_cap: f64::INFINITY }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElectrothermalPoint {
    /// Rise above ambient per cell (K).
    pub rise: Vec<f64>,
    /// Dissipated power per cell (W).
    pub power: Vec<f64>,
    /// Conductance per cell at the fixed point (S).
    pub conductance: Vec<f64>,
    /// Substitution steps taken; 1 when nothing depends on temperature.
    pub iterations: usize,
}

/// Self-consistent temperatures for ohmic cells with temperature-dependent
/// conductance `g(cell, T_abs)` and cell voltages `volts`.
///
/// Successive substitution on ΔT. The first step from ambient is taken in
/// full; later steps are relaxed by `damping`. Converged when an update
/// would move no cell by more than `tol`.
pub fn solve_electrothermal<G>(
    net: &ThermalNetwork,
    g: G,
    volts: &[f64],
    opts: &FixedPointOptions,
) -> Result<ElectrothermalPoint>
where
    G: Fn(usize, f64) -> f64,
{
    let dim = net.dim();
    if volts.len() != dim {
        return Err(Error::Argument(format!("bias vector has {} entries, network has {dim} cells", volts.len())));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::Argument(format!("damping must lie in (0, 1] (got {})", opts.damping)));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Argument(format!("tolerance must be positive (got {})", opts.tol)));
    }
    let evaluate = |rise: &[f64]| -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let mut cond = Vec::with_capacity(dim);
        for (n, dt) in rise.iter().enumerate() {
            let gn = g(n, net.t_amb + dt);
            if !(gn >= 0.0 && gn.is_finite()) {
                return Err(Error::Argument(format!("conductance rule gave {gn} for cell {n}")));
            }
            cond.push(gn);
        }
        let power: Vec<f64> = cond.iter().zip(volts).map(|(g, v)| g * v * v).collect();
        let target = rises(net, &power);
        Ok((target, power, cond))
    };

    let mut rise = vec![0.0; dim];
    let mut previous = rise.clone();
    for iteration in 0..=opts.max_iter {
        let (target, power, conductance) = evaluate(&rise)?;
        let step = target.iter().zip(&rise).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if step < opts.tol {
            return Ok(ElectrothermalPoint { rise, power, conductance, iterations: iteration.max(1) });
        }
        if iteration == opts.max_iter {
            break;
        }
        let w = if iteration == 0 { 1.0 } else { opts.damping };
        previous.clone_from(&rise);
        for (r, t) in rise.iter_mut().zip(&target) {
            *r += w * (t - *r);
        }
        for (n, r) in rise.iter().enumerate() {
            let temperature = net.t_amb + r;
            if !temperature.is_finite() || temperature > opts.t_cap {
                return Err(Error::Runaway { cell: n, temperature, cap: opts.t_cap });
            }
        }
    }
    Err(Error::FixedPoint { iterations: opts.max_iter, previous, last: rise })
}

/// Netlist emission settings.
#[derive(Debug, Clone, PartialEq)]
pub struct NetlistOptions {
    /// Name of the emitted subcircuit.
    pub subckt: String,
    /// Device subcircuit with pins (top, bottom, thermal).
    pub device: String,
    /// Couplings below this value are left out.
    pub prune: f64,
}

impl Default for NetlistOptions {
    fn default() -> Self {
        Self { subckt: "xbar_thermal".into(), device: "rram".into(), prune: 0.0 }
    }
}

fn tag(rc: (usize, usize)) -> String {
    format!("{}_{}", rc.0, rc.1)
}

/// Emits the network as a circuit-simulator subcircuit.
///
/// Node voltages are temperature rises (1 V ≡ 1 K) above the `amb` rail.
/// Per cell `r_c`:
///
/// ```text
/// VS_r_c   top_r_c d_r_c DC 0                         current sense
/// XD_r_c   d_r_c bot_r_c th_r_c <device>              the device
/// BP_r_c   amb sh_r_c I=V(top_r_c,bot_r_c)*I(VS_r_c)  dissipated power
/// RTH_r_c  sh_r_c amb <R_th>                          self-heating
/// EC_r_c_R_C <out> <in> sh_R_C amb <c>                one per coupled cell
/// ```
///
/// The EC sources sit in series from `sh_r_c` up to `th_r_c`, each adding
/// c·(self-heating rise of cell R_C). With no couplings `sh_r_c` is
/// `th_r_c` itself.
pub fn emit_netlist(net: &ThermalNetwork, opts: &NetlistOptions) -> String {
    let c = &net.coupling;
    let dim = c.dim();
    let pos = |i: usize| (i / c.cols + 1, i % c.cols + 1);
    let mut out = String::new();
    let _ = writeln!(out, "* thermal coupling network, {}x{} array", c.rows, c.cols);
    let _ = writeln!(out, "* node voltages are rises above ambient: 1 V = 1 K, ambient {} K", net.t_amb);
    let _ = writeln!(out, "* array {} {}", c.rows, c.cols);
    let mut pins = Vec::with_capacity(3 * dim + 1);
    for n in 0..dim {
        let t = tag(pos(n));
        pins.push(format!("top_{t} bot_{t} th_{t}"));
    }
    pins.push("amb".into());
    let _ = writeln!(out, ".SUBCKT {} {}", opts.subckt, pins.join(" "));
    for n in 0..dim {
        let t = tag(pos(n));
        let coupled: Vec<usize> = (0..dim).filter(|&m| m != n && c.get(n, m) > 0.0 && c.get(n, m) >= opts.prune).collect();
        let sh = if coupled.is_empty() { format!("th_{t}") } else { format!("sh_{t}") };
        let _ = writeln!(out, "* cell {}", cell_label(pos(n).0, pos(n).1));
        let _ = writeln!(out, "VS_{t} top_{t} d_{t} DC 0");
        let _ = writeln!(out, "XD_{t} d_{t} bot_{t} th_{t} {}", opts.device);
        let _ = writeln!(out, "BP_{t} amb {sh} I=V(top_{t},bot_{t})*I(VS_{t})");
        let _ = writeln!(out, "RTH_{t} {sh} amb {:e}", c.rth[n]);
        let mut input = sh.clone();
        for (k, &m) in coupled.iter().enumerate() {
            let tm = tag(pos(m));
            let output = if k + 1 == coupled.len() { format!("th_{t}") } else { format!("tc_{t}_{}", k + 1) };
            let source = if coupled_has_own_sh(c, m, opts.prune) { format!("sh_{tm}") } else { format!("th_{tm}") };
            let _ = writeln!(out, "EC_{t}_{tm} {output} {input} {source} amb {}", c.get(n, m));
            input = output;
        }
    }
    let _ = writeln!(out, ".ENDS {}", opts.subckt);
    out
}

// whether cell m's self-heating node is distinct from its thermal node
fn coupled_has_own_sh(c: &CouplingMatrix, m: usize, prune: f64) -> bool {
    (0..c.dim()).any(|k| k != m && c.get(m, k) > 0.0 && c.get(m, k) >= prune)
}

/// R_th and coupling values recovered from an emitted netlist.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedNetlist {
    pub rows: usize,
    pub cols: usize,
    pub rth: Vec<f64>,
    /// Row-major coupling matrix; unit diagonal, zero where pruned.
    pub entries: Vec<f64>,
    pub current_sources: usize,
    pub resistors: usize,
    pub controlled_sources: usize,
}

fn parse_tag(s: &str, line: usize) -> Result<(usize, usize)> {
    let mut it = s.split('_');
    let mut next = || -> Result<usize> {
        it.next()
            .and_then(|x| x.parse().ok())
            .ok_or_else(|| Error::Parse { line, msg: format!("bad cell tag in {s:?}") })
    };
    Ok((next()?, next()?))
}

/// Reads back the numeric content of [`emit_netlist`] output.
pub fn parse_netlist(text: &str) -> Result<ParsedNetlist> {
    let mut dims: Option<(usize, usize)> = None;
    let mut rth: Vec<Option<f64>> = Vec::new();
    let mut entries = Vec::new();
    let (mut current_sources, mut resistors, mut controlled_sources) = (0, 0, 0);
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        let fields: Vec<&str> = t.split_whitespace().collect();
        if let Some(rest) = t.strip_prefix("* array ") {
            let v: Vec<usize> = rest.split_whitespace().filter_map(|x| x.parse().ok()).collect();
            if v.len() != 2 || v[0] == 0 || v[1] == 0 {
                return Err(Error::Parse { line, msg: "bad array line".into() });
            }
            let dim = v[0] * v[1];
            dims = Some((v[0], v[1]));
            rth = vec![None; dim];
            entries = vec![0.0; dim * dim];
            for n in 0..dim {
                entries[n * dim + n] = 1.0;
            }
            continue;
        }
        if t.is_empty() || t.starts_with('*') || t.starts_with('.') {
            continue;
        }
        let (rows, cols) = dims.ok_or_else(|| Error::Parse { line, msg: "element before the array comment".into() })?;
        let dim = rows * cols;
        let index = |rc: (usize, usize)| -> Result<usize> {
            if rc.0 == 0 || rc.0 > rows || rc.1 == 0 || rc.1 > cols {
                return Err(Error::Parse { line, msg: format!("cell ({},{}) outside the array", rc.0, rc.1) });
            }
            Ok((rc.0 - 1) * cols + rc.1 - 1)
        };
        let value = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse { line, msg: format!("bad number {s:?}") })
        };
        let name = fields[0];
        if let Some(rest) = name.strip_prefix("RTH_") {
            if fields.len() != 4 {
                return Err(Error::Parse { line, msg: "resistor needs two nodes and a value".into() });
            }
            let n = index(parse_tag(rest, line)?)?;
            rth[n] = Some(value(fields[3])?);
            resistors += 1;
        } else if let Some(rest) = name.strip_prefix("EC_") {
            if fields.len() != 6 {
                return Err(Error::Parse { line, msg: "controlled source needs four nodes and a gain".into() });
            }
            let parts: Vec<&str> = rest.split('_').collect();
            if parts.len() != 4 {
                return Err(Error::Parse { line, msg: format!("bad controlled-source name {name:?}") });
            }
            let n = index(parse_tag(&parts[..2].join("_"), line)?)?;
            let m = index(parse_tag(&parts[2..].join("_"), line)?)?;
            entries[n * dim + m] = value(fields[5])?;
            controlled_sources += 1;
        } else if name.starts_with("BP_") {
            current_sources += 1;
        } else if !(name.starts_with("VS_") || name.starts_with("XD_")) {
            return Err(Error::Parse { line, msg: format!("unexpected element {name:?}") });
        }
    }
    let (rows, cols) = dims.ok_or_else(|| Error::Parse { line: 0, msg: "missing array comment".into() })?;
    let rth = rth
        .into_iter()
        .enumerate()
        .map(|(n, r)| r.ok_or_else(|| Error::Parse { line: 0, msg: format!("no thermal resistor for cell {n}") }))
        .collect::<Result<_>>()?;
    Ok(ParsedNetlist { rows, cols, rth, entries, current_sources, resistors, controlled_sources })
}
