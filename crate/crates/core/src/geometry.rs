//! Voxelized model of a passive r×c crossbar inside its thermal house.
//!
//! Layout conventions (all lengths in metres):
//! * rows are top-electrode lines running along x, columns are
//!   bottom-electrode lines running along y;
//! * the array is centred on x = y = 0 and the oxide mid-plane is z = 0;
//! * cell (row i, col j) sits at x = x_j, y = y_i with a cylindrical
//!   filament spanning the full oxide thickness;
//! * the oxide slab and both line layers cover the line footprint, which
//!   extends `line_overhang` beyond the outermost lines; everything else
//!   inside the house walls is house material.
//!
//! Grids are generated on the positive half-axis and mirrored, so every
//! model is exactly symmetric under x → −x, y → −y and z → −z.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units;

/// Bulk material parameters of one region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    /// Electrical conductivity (S/m)
    pub sigma: f64,
    /// Thermal conductivity (W/(m·K))
    pub kappa: f64,
    /// Specific heat capacity (J/(kg·K))
    pub heat_capacity: f64,
    /// Density (kg/m³)
    pub density: f64,
}

impl MaterialParams {
    pub const fn new(sigma: f64, kappa: f64, heat_capacity: f64, density: f64) -> Self {
        Self { sigma, kappa, heat_capacity, density }
    }

    /// Volumetric heat capacity ρ·c (J/(m³·K)).
    pub fn volumetric_heat_capacity(&self) -> f64 {
        self.density * self.heat_capacity
    }

    fn violations(&self, name: &str, out: &mut Vec<String>) {
        for (field, v) in [
            ("sigma", self.sigma),
            ("kappa", self.kappa),
            ("heat_capacity", self.heat_capacity),
            ("density", self.density),
        ] {
            if !(v.is_finite() && v > 0.0) {
                out.push(format!("materials.{name}.{field} must be positive and finite (got {v})"));
            }
        }
    }
}

/// Per-region materials. The house entry's `kappa` is the thermal-house
/// conductivity; its `sigma` is unused because the house is an electrical
/// insulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialSet {
    pub cf: MaterialParams,
    pub electrode: MaterialParams,
    pub oxide: MaterialParams,
    pub house: MaterialParams,
}

impl Default for MaterialSet {
    fn default() -> Self {
        Self {
            cf: MaterialParams::new(7e3, 22.0, 445.0, 8.9e3),
            electrode: MaterialParams::new(1.23e5, 22.0, 445.0, 8.9e3),
            oxide: MaterialParams::new(7e-7, 0.5, 286.0, 9.68e3),
            // Only kappa is given for the house; c and rho are SiO2-like.
            house: MaterialParams::new(1e-12, 0.05, 730.0, 2.2e3),
        }
    }
}

/// Declarative description of a crossbar and its thermal house. Fields
/// missing from a config file take their default values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossbarSpec {
    pub rows: usize,
    pub cols: usize,
    /// Spacing between adjacent lines (edge to edge).
    #[serde(with = "units::length")]
    pub sp: f64,
    /// Electrode line width.
    #[serde(with = "units::length")]
    pub w_m: f64,
    /// Electrode line thickness.
    #[serde(with = "units::length")]
    pub h_m: f64,
    /// Oxide thickness.
    #[serde(with = "units::length")]
    pub t_ox: f64,
    /// Filament radius.
    #[serde(with = "units::length")]
    pub r_cf: f64,
    /// House margin around the line footprint on every face.
    #[serde(with = "units::length")]
    pub th_margin: f64,
    /// Length by which lines (and the oxide slab) extend past the outermost
    /// crossing. Must be shorter than `th_margin` so lines end inside the house.
    #[serde(with = "units::length", default = "default_line_overhang")]
    pub line_overhang: f64,
    /// Ambient temperature of the house walls (K).
    pub t_amb: f64,
    #[serde(default)]
    pub materials: MaterialSet,
}

fn default_line_overhang() -> f64 {
    250e-9
}

impl Default for CrossbarSpec {
    fn default() -> Self {
        Self {
            rows: 3,
            cols: 3,
            sp: 400e-9,
            w_m: 80e-9,
            h_m: 30e-9,
            t_ox: 20e-9,
            r_cf: 5e-9,
            th_margin: 1e-6,
            line_overhang: default_line_overhang(),
            t_amb: 300.0,
            materials: MaterialSet::default(),
        }
    }
}

impl CrossbarSpec {
    pub fn with_size(rows: usize, cols: usize) -> Self {
        Self { rows, cols, ..Self::default() }
    }

    pub fn with_spacing(mut self, sp: f64) -> Self {
        self.sp = sp;
        self
    }

    pub fn n_cells(&self) -> usize {
        self.rows * self.cols
    }

    /// Centre-to-centre line distance.
    pub fn pitch(&self) -> f64 {
        self.w_m + self.sp
    }

    /// x coordinate of column `col` (0-based).
    pub fn column_x(&self, col: usize) -> f64 {
        (col as f64 - (self.cols as f64 - 1.0) / 2.0) * self.pitch()
    }

    /// y coordinate of row `row` (0-based).
    pub fn row_y(&self, row: usize) -> f64 {
        (row as f64 - (self.rows as f64 - 1.0) / 2.0) * self.pitch()
    }

    /// Half extent of the line footprint along x (top lines end here).
    pub fn footprint_half_x(&self) -> f64 {
        self.column_x(self.cols - 1) + self.w_m / 2.0 + self.line_overhang
    }

    /// Half extent of the line footprint along y (bottom lines end here).
    pub fn footprint_half_y(&self) -> f64 {
        self.row_y(self.rows - 1) + self.w_m / 2.0 + self.line_overhang
    }

    pub fn z_oxide_top(&self) -> f64 {
        self.t_ox / 2.0
    }

    pub fn z_stack_top(&self) -> f64 {
        self.t_ox / 2.0 + self.h_m
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

/// All invariant violations of `spec`; empty when the spec is usable.
pub fn validate(spec: &CrossbarSpec) -> Vec<String> {
    let mut v = Vec::new();
    if spec.rows == 0 {
        v.push("rows must be positive".to_string());
    }
    if spec.cols == 0 {
        v.push("cols must be positive".to_string());
    }
    let finite = [
        ("sp", spec.sp),
        ("w_m", spec.w_m),
        ("h_m", spec.h_m),
        ("t_ox", spec.t_ox),
        ("r_cf", spec.r_cf),
        ("th_margin", spec.th_margin),
        ("line_overhang", spec.line_overhang),
        ("t_amb", spec.t_amb),
    ];
    for (name, x) in finite {
        if !x.is_finite() {
            v.push(format!("{name} must be finite"));
        }
    }
    if !(spec.r_cf > 0.0) {
        v.push("r_cf > 0".to_string());
    }
    if !(2.0 * spec.r_cf < spec.w_m) {
        v.push(format!("2·r_cf < w_m (r_cf = {:e}, w_m = {:e})", spec.r_cf, spec.w_m));
    }
    if !(spec.sp >= 0.0) {
        v.push(format!("sp ≥ 0 (got {:e})", spec.sp));
    }
    if !(spec.t_ox > 0.0) {
        v.push("t_ox > 0".to_string());
    }
    if !(spec.h_m > 0.0) {
        v.push("h_m > 0".to_string());
    }
    if !(spec.th_margin > 0.0) {
        v.push("th_margin > 0".to_string());
    }
    if !(spec.line_overhang >= 0.0 && spec.line_overhang < spec.th_margin) {
        v.push("0 ≤ line_overhang < th_margin".to_string());
    }
    if !(spec.t_amb > 0.0) {
        v.push("t_amb > 0".to_string());
    }
    let m = &spec.materials;
    m.cf.violations("cf", &mut v);
    m.electrode.violations("electrode", &mut v);
    m.oxide.violations("oxide", &mut v);
    m.house.violations("house", &mut v);
    v
}

/// Grid resolution controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshPolicy {
    /// Target voxel size inside filaments and the oxide layer.
    #[serde(with = "units::length")]
    pub h_min: f64,
    /// Maximum size ratio between neighbouring voxels away from features.
    pub growth: f64,
    /// Largest voxel size anywhere.
    #[serde(with = "units::length")]
    pub h_max: f64,
    pub max_voxels: usize,
}

impl Default for MeshPolicy {
    fn default() -> Self {
        Self { h_min: 2.5e-9, growth: 1.5, h_max: 200e-9, max_voxels: 4_000_000 }
    }
}

impl MeshPolicy {
    /// Half the resolution: doubles the minimum and maximum voxel sizes.
    pub fn coarsened(&self) -> Self {
        Self { h_min: 2.0 * self.h_min, h_max: 2.0 * self.h_max, ..*self }
    }

    fn check(&self) -> Result<()> {
        if !(self.h_min > 0.0 && self.h_max >= self.h_min && self.growth > 1.0) {
            return Err(Error::Argument(format!(
                "mesh policy needs 0 < h_min ≤ h_max and growth > 1 (got {self:?})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    Cf,
    ElectrodeTop,
    ElectrodeBottom,
    Oxide,
    House,
}

impl Region {
    pub fn material<'a>(&self, m: &'a MaterialSet) -> &'a MaterialParams {
        match self {
            Region::Cf => &m.cf,
            Region::ElectrodeTop | Region::ElectrodeBottom => &m.electrode,
            Region::Oxide => &m.oxide,
            Region::House => &m.house,
        }
    }

    pub fn is_conductor(&self) -> bool {
        !matches!(self, Region::House)
    }
}

/// A face where an electrode line is held at a fixed potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalFace {
    pub voxel: usize,
    /// Face area divided by the distance from voxel centre to the face (m).
    pub geometric_conductance: f64,
}

/// Voxel sets belonging to one crossbar cell.
#[derive(Debug, Clone)]
pub struct CellVoxels {
    /// 1-based row.
    pub row: usize,
    /// 1-based column.
    pub col: usize,
    pub center: [f64; 3],
    pub filament: Vec<usize>,
    /// Oxide voxels between the two crossing lines, filament excluded.
    pub footprint_oxide: Vec<usize>,
    /// Filament voxels closest to the filament centre; temperatures are
    /// reported as their volume-weighted mean.
    pub probe: Vec<usize>,
}

/// Voxelized crossbar. Immutable once built.
#[derive(Debug, Clone)]
pub struct VoxelModel {
    pub spec: CrossbarSpec,
    /// Face coordinates along each axis, strictly increasing.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub labels: Vec<Region>,
    /// Row-major by cell id.
    pub cells: Vec<CellVoxels>,
    /// Top face of each top-electrode line (rows), indexed by row − 1.
    pub top_terminals: Vec<Vec<TerminalFace>>,
    /// Bottom face of each bottom-electrode line (columns), indexed by col − 1.
    pub bottom_terminals: Vec<Vec<TerminalFace>>,
}

impl VoxelModel {
    pub fn dims(&self) -> [usize; 3] {
        [self.x.len() - 1, self.y.len() - 1, self.z.len() - 1]
    }

    pub fn n_voxels(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        let [nx, ny, _] = self.dims();
        i + nx * (j + ny * k)
    }

    #[inline]
    pub fn ijk(&self, idx: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims();
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    pub fn volume(&self, idx: usize) -> f64 {
        let [i, j, k] = self.ijk(idx);
        (self.x[i + 1] - self.x[i]) * (self.y[j + 1] - self.y[j]) * (self.z[k + 1] - self.z[k])
    }

    pub fn center(&self, idx: usize) -> [f64; 3] {
        let [i, j, k] = self.ijk(idx);
        [
            0.5 * (self.x[i] + self.x[i + 1]),
            0.5 * (self.y[j] + self.y[j + 1]),
            0.5 * (self.z[k] + self.z[k + 1]),
        ]
    }

    pub fn region_volume(&self, region: Region) -> f64 {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == region)
            .map(|(i, _)| self.volume(i))
            .sum()
    }

    pub fn materials(&self) -> &MaterialSet {
        &self.spec.materials
    }

    pub fn cell(&self, row: usize, col: usize) -> Result<&CellVoxels> {
        Ok(&self.cells[cell_id(&self.spec, row, col)?])
    }

    /// Smallest voxel edge anywhere in the grid.
    pub fn finest_size(&self) -> f64 {
        [&self.x, &self.y, &self.z]
            .iter()
            .flat_map(|g| g.windows(2).map(|w| w[1] - w[0]))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Row-major linear cell index; (1,1) → 0.
pub fn cell_id(spec: &CrossbarSpec, row: usize, col: usize) -> Result<usize> {
    if row == 0 || row > spec.rows || col == 0 || col > spec.cols {
        return Err(Error::Argument(format!(
            "cell ({row},{col}) outside {}×{} array",
            spec.rows, spec.cols
        )));
    }
    Ok((row - 1) * spec.cols + (col - 1))
}

/// Inverse of [`cell_id`]: 1-based (row, col).
pub fn cell_position(spec: &CrossbarSpec, id: usize) -> (usize, usize) {
    (id / spec.cols + 1, id % spec.cols + 1)
}

pub fn cell_label(row: usize, col: usize) -> String {
    format!("({row},{col})")
}

/// Cell count and size of the uniform block that resolves one filament.
///
/// The block has an even number of voxels across; the size is snapped so
/// that the centre-in-circle voxel set has exactly the circle's area.
pub fn filament_core(r_cf: f64, h_target: f64) -> (usize, f64) {
    let n = (2.0 * (r_cf / h_target).round()).max(2.0) as usize;
    let mut rho: Vec<f64> = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            let u = a as f64 - n as f64 / 2.0 + 0.5;
            let v = b as f64 - n as f64 / 2.0 + 0.5;
            rho.push(u * u + v * v);
        }
    }
    let pi = std::f64::consts::PI;
    // Self-consistent count: N voxels of size h with N·h² = π r² and exactly N
    // centres inside the circle. Among those, take the N closest to the
    // block's natural fill n²·π/4.
    let natural = (n * n) as f64 * pi / 4.0;
    let mut best: Option<(f64, f64)> = None;
    for count in 1..=n * n {
        let inside = rho.iter().filter(|&&p| p <= count as f64 / pi * (1.0 + 1e-12)).count();
        if inside == count {
            let h = r_cf * (pi / count as f64).sqrt();
            let miss = (count as f64 - natural).abs();
            if best.map_or(true, |(m, _)| miss < m) {
                best = Some((miss, h));
            }
        }
    }
    let best = best.map(|(_, h)| h);
    (n, best.unwrap_or(2.0 * r_cf / n as f64))
}

struct Feature {
    lo: f64,
    hi: f64,
    h: f64,
}

/// Builds the positive half of an axis on [0, half] and mirrors it.
fn build_axis(
    half: f64,
    breakpoints: &[f64],
    cores: &[(f64, usize, f64)],
    fine: &[Feature],
    policy: &MeshPolicy,
) -> Vec<f64> {
    let scale = policy.h_min * 1e-6;
    let mut locked: Vec<f64> = vec![0.0, half];
    locked.extend(breakpoints.iter().copied().filter(|&b| b > 0.0 && b < half));
    let mut features: Vec<Feature> = fine.iter().map(|f| Feature { ..*f }).collect();
    for &(c, n, h) in cores {
        let lo = c - n as f64 / 2.0 * h;
        for k in 0..=n {
            let f = lo + k as f64 * h;
            if f > 0.0 && f < half {
                locked.push(f);
            }
        }
        features.push(Feature { lo, hi: lo + n as f64 * h, h });
    }
    locked.sort_by(|a, b| a.partial_cmp(b).unwrap());
    locked.dedup_by(|a, b| (*a - *b).abs() <= scale);

    let size_at = |x: f64| -> f64 {
        let mut h = policy.h_max;
        for f in &features {
            let d = if x < f.lo {
                f.lo - x
            } else if x > f.hi {
                x - f.hi
            } else {
                0.0
            };
            h = h.min(f.h + (policy.growth - 1.0) * d);
        }
        h
    };
    let in_core = |a: f64, b: f64| {
        let m = 0.5 * (a + b);
        cores.iter().any(|&(c, n, h)| (m - c).abs() < n as f64 / 2.0 * h && (b - a - h).abs() <= scale)
    };

    let mut faces = vec![0.0];
    for w in locked.windows(2) {
        let (a, b) = (w[0], w[1]);
        if in_core(a, b) {
            faces.push(b);
            continue;
        }
        // cumulative ∫ dx / h(x) on a fine sample grid
        const M: usize = 256;
        let mut s = vec![0.0; M + 1];
        let dx = (b - a) / M as f64;
        for m in 0..M {
            let x0 = a + m as f64 * dx;
            let mid = 1.0 / size_at(x0) + 4.0 / size_at(x0 + dx / 2.0) + 1.0 / size_at(x0 + dx);
            s[m + 1] = s[m] + mid * dx / 6.0;
        }
        let total = s[M];
        let n = (total - 1e-9).round().max(1.0) as usize;
        let mut m = 0;
        for k in 1..n {
            let target = total * k as f64 / n as f64;
            while s[m + 1] < target {
                m += 1;
            }
            let frac = (target - s[m]) / (s[m + 1] - s[m]);
            faces.push(a + (m as f64 + frac) * dx);
        }
        faces.push(b);
    }
    let mut axis: Vec<f64> = faces.iter().rev().map(|f| -f).collect();
    axis.pop();
    axis.extend(faces);
    axis
}

/// Voxelizes `spec` on a graded tensor-product grid.
/// Homogeneous oxide prism `side`×`side`×`length` cut into `nz` equal
/// layers along z; no cells or terminals. Used as an analytic check of the
/// heat solver.
pub fn slab_model(side: f64, length: f64, nz: usize) -> VoxelModel {
    let nz = nz.max(1);
    VoxelModel {
        spec: CrossbarSpec::default(),
        x: vec![0.0, side],
        y: vec![0.0, side],
        z: (0..=nz).map(|k| length * k as f64 / nz as f64).collect(),
        labels: vec![Region::Oxide; nz],
        cells: Vec::new(),
        top_terminals: Vec::new(),
        bottom_terminals: Vec::new(),
    }
}

pub fn build_model(spec: &CrossbarSpec, mesh: &MeshPolicy) -> Result<VoxelModel> {
    let violations = validate(spec);
    if !violations.is_empty() {
        return Err(Error::InvalidSpec(violations));
    }
    mesh.check()?;
    let (n_core, h_core) = filament_core(spec.r_cf, mesh.h_min);
    let half_w = spec.w_m / 2.0;
    let fx = spec.footprint_half_x();
    let fy = spec.footprint_half_y();

    // The house wall sits th_margin beyond the outermost line edge.
    let xs: Vec<f64> = (0..spec.cols).map(|c| spec.column_x(c)).collect();
    let ys: Vec<f64> = (0..spec.rows).map(|r| spec.row_y(r)).collect();
    let house_x = fx + spec.th_margin - spec.line_overhang;
    let house_y = fy + spec.th_margin - spec.line_overhang;
    let lateral = |centers: &[f64], footprint: f64| {
        let mut bps = vec![footprint];
        let mut cores = Vec::new();
        for &c in centers {
            bps.push(c - half_w);
            bps.push(c + half_w);
            cores.push((c, n_core, h_core));
        }
        (bps, cores)
    };
    let (bx, cx) = lateral(&xs, fx);
    let (by, cy) = lateral(&ys, fy);
    let x = build_axis(house_x, &bx, &cx, &[], mesh);
    let y = build_axis(house_y, &by, &cy, &[], mesh);

    let zt = spec.z_oxide_top();
    let zs = spec.z_stack_top();
    let house_z = zs + spec.th_margin;
    let n_ox = (spec.t_ox / mesh.h_min - 1e-9).ceil().max(2.0);
    let h_ox = spec.t_ox / n_ox;
    let z = build_axis(house_z, &[zt, zs], &[], &[Feature { lo: -zt, hi: zt, h: h_ox }], mesh);

    let (nx, ny, nz) = (x.len() - 1, y.len() - 1, z.len() - 1);
    let needed = nx * ny * nz;
    if needed > mesh.max_voxels {
        return Err(Error::VoxelBudget { needed, budget: mesh.max_voxels });
    }

    let center = |g: &[f64], i: usize| 0.5 * (g[i] + g[i + 1]);
    let line_of = |c: f64, centers: &[f64]| centers.iter().position(|&lc| (c - lc).abs() < half_w);
    let r2 = spec.r_cf * spec.r_cf;

    let n_cells = spec.n_cells();
    let mut cells: Vec<CellVoxels> = (0..n_cells)
        .map(|id| {
            let (row, col) = cell_position(spec, id);
            CellVoxels {
                row,
                col,
                center: [xs[col - 1], ys[row - 1], 0.0],
                filament: Vec::new(),
                footprint_oxide: Vec::new(),
                probe: Vec::new(),
            }
        })
        .collect();
    let mut top_terminals = vec![Vec::new(); spec.rows];
    let mut bottom_terminals = vec![Vec::new(); spec.cols];
    let mut labels = Vec::with_capacity(needed);

    for k in 0..nz {
        let zc = center(&z, k);
        for j in 0..ny {
            let yc = center(&y, j);
            for i in 0..nx {
                let xc = center(&x, i);
                let idx = i + nx * (j + ny * k);
                let in_footprint = xc.abs() < fx && yc.abs() < fy;
                let label = if zc.abs() < zt {
                    if !in_footprint {
                        Region::House
                    } else {
                        match (line_of(xc, &xs), line_of(yc, &ys)) {
                            (Some(col), Some(row)) => {
                                let id = row * spec.cols + col;
                                let dx = xc - xs[col];
                                let dy = yc - ys[row];
                                if dx * dx + dy * dy <= r2 {
                                    cells[id].filament.push(idx);
                                    Region::Cf
                                } else {
                                    cells[id].footprint_oxide.push(idx);
                                    Region::Oxide
                                }
                            }
                            _ => Region::Oxide,
                        }
                    }
                } else if zc > zt && zc < zs {
                    match line_of(yc, &ys) {
                        Some(row) if xc.abs() < fx => {
                            if (z[k + 1] - zs).abs() <= 1e-6 * mesh.h_min {
                                let area = (x[i + 1] - x[i]) * (y[j + 1] - y[j]);
                                top_terminals[row].push(TerminalFace {
                                    voxel: idx,
                                    geometric_conductance: area / (zs - zc),
                                });
                            }
                            Region::ElectrodeTop
                        }
                        _ => Region::House,
                    }
                } else if zc < -zt && zc > -zs {
                    match line_of(xc, &xs) {
                        Some(col) if yc.abs() < fy => {
                            if (z[k] + zs).abs() <= 1e-6 * mesh.h_min {
                                let area = (x[i + 1] - x[i]) * (y[j + 1] - y[j]);
                                bottom_terminals[col].push(TerminalFace {
                                    voxel: idx,
                                    geometric_conductance: area / (zc + zs),
                                });
                            }
                            Region::ElectrodeBottom
                        }
                        _ => Region::House,
                    }
                } else {
                    Region::House
                };
                labels.push(label);
            }
        }
    }

    let mut model = VoxelModel {
        spec: spec.clone(),
        x,
        y,
        z,
        labels,
        cells,
        top_terminals,
        bottom_terminals,
    };
    for id in 0..n_cells {
        let c = model.cells[id].center;
        let dist = |v: usize| {
            let p = model.center(v);
            ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)).sqrt()
        };
        let best = model.cells[id].filament.iter().map(|&v| dist(v)).fold(f64::INFINITY, f64::min);
        let probe: Vec<usize> = model.cells[id]
            .filament
            .iter()
            .copied()
            .filter(|&v| dist(v) <= best * (1.0 + 1e-9))
            .collect();
        if probe.is_empty() {
            return Err(Error::Consistency(format!(
                "cell {} has no filament voxels; refine the mesh",
                cell_label(model.cells[id].row, model.cells[id].col)
            )));
        }
        model.cells[id].probe = probe;
    }
    Ok(model)
}
