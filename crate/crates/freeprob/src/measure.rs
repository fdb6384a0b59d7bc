//! Probability measures on a uniform grid and finite empirical measures.
//!
//! A [`GridMeasure`] stores one density value per cell of a uniform grid over
//! its domain. On the line and half-line the density is taken against Lebesgue
//! measure `dx`; on the circle it is taken against the normalized arc measure
//! `dθ/2π`, so the uniform circle measure has density identically `1`.
//!
//! Constructors renormalize to total mass one and reject negative densities
//! and grids with fewer than [`MIN_CELLS`] cells.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

/// Minimum number of grid cells accepted by constructors.
pub const MIN_CELLS: usize = 8;

/// Mass defect tolerated after renormalization.
pub const MASS_TOL: f64 = 1e-12;

/// Supported domains for grid measures.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    /// Interval `[a, b]` on the real line.
    Line { a: f64, b: f64 },
    /// Unit circle, parametrized by the angle interval `[-π, π)`.
    Circle,
    /// Interval `[0, b]` on the positive half-line.
    HalfLine { b: f64 },
}

impl Domain {
    /// Endpoints of the parametrizing interval.
    pub fn span(&self) -> (f64, f64) {
        match *self {
            Domain::Line { a, b } => (a, b),
            Domain::Circle => (-PI, PI),
            Domain::HalfLine { b } => (0.0, b),
        }
    }

    /// Length of the parametrizing interval.
    pub fn width(&self) -> f64 {
        let (a, b) = self.span();
        b - a
    }

    pub fn is_circle(&self) -> bool {
        matches!(self, Domain::Circle)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Domain::Line { .. } => "line",
            Domain::Circle => "circle",
            Domain::HalfLine { .. } => "halfline",
        }
    }

    fn validate(&self) -> Result<()> {
        let (a, b) = self.span();
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidParameter(format!(
                "degenerate domain [{a}, {b}]"
            )));
        }
        if let Domain::HalfLine { b } = self {
            if *b <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "half-line domain needs b > 0, got {b}"
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Domain::Line { a, b } => write!(f, "line[{a}, {b}]"),
            Domain::Circle => write!(f, "circle"),
            Domain::HalfLine { b } => write!(f, "halfline[0, {b}]"),
        }
    }
}

/// Reduce an angle to `[-π, π)`.
pub fn wrap_angle(t: f64) -> f64 {
    let w = t - 2.0 * PI * ((t + PI) / (2.0 * PI)).floor();
    // Guard against w == π from rounding at the upper seam.
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Piecewise-constant probability density on a uniform grid.
///
/// Cell `i` covers `[a + i·h, a + (i+1)·h)` with `h` the cell width. The
/// stored value is the density on that cell: against `dx` on the line and
/// half-line, against `dθ/2π` on the circle.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMeasure {
    domain: Domain,
    density: Vec<f64>,
}

impl GridMeasure {
    /// Builds a measure from raw cell densities, validating and renormalizing.
    ///
    /// # Errors
    ///
    /// Fails when the grid has fewer than [`MIN_CELLS`] cells, a density is
    /// negative or non-finite, or the total mass vanishes.
    pub fn new(domain: Domain, mut density: Vec<f64>) -> Result<Self> {
        domain.validate()?;
        if density.len() < MIN_CELLS {
            return Err(Error::TooFewCells {
                min: MIN_CELLS,
                got: density.len(),
            });
        }
        for (index, &value) in density.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidDensity { index, value });
            }
        }
        let n = density.len();
        let cell = domain.width() / n as f64;
        let weight = if domain.is_circle() {
            cell / (2.0 * PI)
        } else {
            cell
        };
        let mass: f64 = density.iter().sum::<f64>() * weight;
        if mass <= 0.0 {
            return Err(Error::ZeroMass);
        }
        for p in &mut density {
            *p /= mass;
        }
        Ok(GridMeasure { domain, density })
    }

    /// Samples `f` at cell midpoints and renormalizes.
    pub fn from_fn(domain: Domain, cells: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        domain.validate()?;
        let (a, _) = domain.span();
        let h = domain.width() / cells as f64;
        let density = (0..cells)
            .map(|i| f(a + (i as f64 + 0.5) * h))
            .collect::<Vec<_>>();
        GridMeasure::new(domain, density)
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn cells(&self) -> usize {
        self.density.len()
    }

    /// Cell width of the parametrizing interval.
    pub fn h(&self) -> f64 {
        self.domain.width() / self.cells() as f64
    }

    /// Mass carried by one unit of density in one cell:
    /// `h` on the line, `h/2π` on the circle.
    pub fn cell_weight(&self) -> f64 {
        if self.domain.is_circle() {
            self.h() / (2.0 * PI)
        } else {
            self.h()
        }
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        let (a, _) = self.domain.span();
        a + (i as f64 + 0.5) * self.h()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.cells()).map(|i| self.midpoint(i)).collect()
    }

    /// Edges `[left, right)` of cell `i`.
    pub fn cell_bounds(&self, i: usize) -> (f64, f64) {
        let (a, _) = self.domain.span();
        let h = self.h();
        (a + i as f64 * h, a + (i + 1) as f64 * h)
    }

    /// Mass of cell `i`.
    pub fn cell_mass(&self, i: usize) -> f64 {
        self.density[i] * self.cell_weight()
    }

    pub fn masses(&self) -> Vec<f64> {
        let w = self.cell_weight();
        self.density.iter().map(|p| p * w).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.cell_weight()
    }

    pub fn max_density(&self) -> f64 {
        self.density.iter().cloned().fold(0.0, f64::max)
    }

    /// Midpoint-rule integral `∫ f dμ`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let w = self.cell_weight();
        self.density
            .iter()
            .enumerate()
            .map(|(i, p)| p * w * f(self.midpoint(i)))
            .sum()
    }

    /// Exact `k`-th moment of the piecewise-constant density.
    ///
    /// Uses the polynomial antiderivative per cell, so the only error is the
    /// grid representation itself. On the circle this is the moment of the
    /// angle variable.
    pub fn moment(&self, k: u32) -> f64 {
        let w = self.cell_weight();
        let h = self.h();
        let e = k as i32 + 1;
        (0..self.cells())
            .map(|i| {
                let (a, b) = self.cell_bounds(i);
                self.density[i] * w * (b.powi(e) - a.powi(e)) / (f64::from(e) * h)
            })
            .sum()
    }

    /// Exact integral of the piecewise-constant density cubed.
    pub fn cube_integral(&self) -> f64 {
        let w = self.cell_weight();
        self.density.iter().map(|p| p * p * p * w).sum()
    }

    /// Mass of `[x0, x1]` under the piecewise-constant density (line domains).
    pub fn mass_between(&self, x0: f64, x1: f64) -> f64 {
        debug_assert!(!self.domain.is_circle());
        let (a, b) = self.domain.span();
        let lo = x0.max(a);
        let hi = x1.min(b);
        if hi <= lo {
            return 0.0;
        }
        let h = self.h();
        let i0 = (((lo - a) / h).floor() as usize).min(self.cells() - 1);
        let i1 = (((hi - a) / h).ceil() as usize).min(self.cells());
        let mut mass = 0.0;
        for i in i0..i1 {
            let (ca, cb) = self.cell_bounds(i);
            let seg = (cb.min(hi) - ca.max(lo)).max(0.0);
            mass += self.density[i] * seg;
        }
        mass
    }

    /// Rebins onto `cells / factor` cells by exact mass aggregation.
    pub fn coarsen(&self, factor: usize) -> Result<GridMeasure> {
        if factor == 0 || self.cells() % factor != 0 {
            return Err(Error::InvalidParameter(format!(
                "coarsening factor {factor} does not divide {} cells",
                self.cells()
            )));
        }
        let out = self.cells() / factor;
        let density = (0..out)
            .map(|i| {
                self.density[i * factor..(i + 1) * factor]
                    .iter()
                    .sum::<f64>()
                    / factor as f64
            })
            .collect();
        GridMeasure::new(self.domain, density)
    }

    /// Serializes to the measure CSV schema.
    ///
    /// First record is the header `domain,cells,a,b`, second the values,
    /// third the column header `x,density`, then one record per cell with the
    /// midpoint and density printed with 17 significant digits so the
    /// round-trip is exact.
    pub fn to_csv_string(&self) -> String {
        let (a, b) = self.domain.span();
        let mut s = String::with_capacity(self.cells() * 48 + 64);
        s.push_str("domain,cells,a,b\n");
        s.push_str(&format!(
            "{},{},{:.17e},{:.17e}\n",
            self.domain.label(),
            self.cells(),
            a,
            b
        ));
        s.push_str("x,density\n");
        for i in 0..self.cells() {
            s.push_str(&format!("{:.17e},{:.17e}\n", self.midpoint(i), self.density[i]));
        }
        s
    }

    /// Parses the measure CSV schema produced by [`GridMeasure::to_csv_string`].
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut records = rdr.records();
        let header = records
            .next()
            .ok_or_else(|| Error::Parse("empty measure file".into()))?
            .map_err(|e| Error::Parse(e.to_string()))?;
        if header.iter().collect::<Vec<_>>() != ["domain", "cells", "a", "b"] {
            return Err(Error::Parse(format!(
                "expected header 'domain,cells,a,b', got '{}'",
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let meta = records
            .next()
            .ok_or_else(|| Error::Parse("missing domain record".into()))?
            .map_err(|e| Error::Parse(e.to_string()))?;
        if meta.len() != 4 {
            return Err(Error::Parse("domain record needs 4 fields".into()));
        }
        let cells: usize = meta[1]
            .parse()
            .map_err(|_| Error::Parse(format!("bad cell count '{}'", &meta[1])))?;
        let a: f64 = meta[2]
            .parse()
            .map_err(|_| Error::Parse(format!("bad endpoint '{}'", &meta[2])))?;
        let b: f64 = meta[3]
            .parse()
            .map_err(|_| Error::Parse(format!("bad endpoint '{}'", &meta[3])))?;
        let domain = match &meta[0] {
            "line" => Domain::Line { a, b },
            "circle" => Domain::Circle,
            "halfline" => Domain::HalfLine { b },
            other => return Err(Error::Parse(format!("unknown domain '{other}'"))),
        };
        let col = records
            .next()
            .ok_or_else(|| Error::Parse("missing column header".into()))?
            .map_err(|e| Error::Parse(e.to_string()))?;
        if col.iter().collect::<Vec<_>>() != ["x", "density"] {
            return Err(Error::Parse("expected column header 'x,density'".into()));
        }
        let mut density = Vec::with_capacity(cells);
        for rec in records {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            if rec.len() < 2 {
                return Err(Error::Parse("data record needs 2 fields".into()));
            }
            let p: f64 = rec[1]
                .parse()
                .map_err(|_| Error::Parse(format!("bad density '{}'", &rec[1])))?;
            density.push(p);
        }
        if density.len() != cells {
            return Err(Error::Parse(format!(
                "declared {cells} cells but found {}",
                density.len()
            )));
        }
        GridMeasure::new(domain, density)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::cli::write_atomic(path.as_ref(), self.to_csv_string().as_bytes())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        GridMeasure::from_csv_str(&text)
    }
}

/// Topology tag for empirical measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Line,
    Circle,
}

/// Uniformly weighted atoms, stored sorted.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    topology: Topology,
    atoms: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new_line(mut atoms: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::ZeroMass);
        }
        if atoms.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite atom".into()));
        }
        atoms.sort_by(|x, y| x.partial_cmp(y).unwrap());
        Ok(EmpiricalMeasure {
            topology: Topology::Line,
            atoms,
        })
    }

    /// Atoms are reduced to `[-π, π)` before sorting.
    pub fn new_circle(atoms: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::ZeroMass);
        }
        if atoms.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite atom".into()));
        }
        let mut atoms: Vec<f64> = atoms.into_iter().map(wrap_angle).collect();
        atoms.sort_by(|x, y| x.partial_cmp(y).unwrap());
        Ok(EmpiricalMeasure {
            topology: Topology::Circle,
            atoms,
        })
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().sum::<f64>() / self.len() as f64
    }

    /// Histogram of the atoms on a uniform grid over `domain`.
    ///
    /// Atoms outside the domain window are dropped; the result is
    /// renormalized over the atoms that remain.
    pub fn to_grid(&self, domain: Domain, cells: usize) -> Result<GridMeasure> {
        let (a, b) = domain.span();
        let h = (b - a) / cells as f64;
        let mut counts = vec![0.0f64; cells];
        for &x in &self.atoms {
            let x = if domain.is_circle() { wrap_angle(x) } else { x };
            if x < a || x >= b {
                continue;
            }
            let i = (((x - a) / h) as usize).min(cells - 1);
            counts[i] += 1.0;
        }
        GridMeasure::new(domain, counts)
    }
}

/// Piecewise-linear quantile function, stored as graph vertices `(t, x)` with
/// `t` nondecreasing from 0 to 1. Jumps of the quantile appear as consecutive
/// vertices sharing the same `t`.
#[derive(Clone, Debug)]
pub struct QuantileTable {
    vertices: Vec<(f64, f64)>,
}

impl QuantileTable {
    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    /// Left-continuous evaluation of the quantile at `t ∈ [0, 1]`.
    pub fn value(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        let v = &self.vertices;
        let mut lo = 0;
        let mut hi = v.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if v[mid].0 < t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (t0, x0) = v[lo];
        let (t1, x1) = v[hi];
        if t1 == t0 {
            x0
        } else {
            x0 + (x1 - x0) * ((t - t0) / (t1 - t0))
        }
    }

    /// Segment list `(t0, t1, x0, x1)` with zero-length `t` segments removed.
    pub fn segments(&self) -> Vec<(f64, f64, f64, f64)> {
        let mut segs = Vec::with_capacity(self.vertices.len());
        for w in self.vertices.windows(2) {
            let (t0, x0) = w[0];
            let (t1, x1) = w[1];
            if t1 > t0 {
                segs.push((t0, t1, x0, x1));
            }
        }
        segs
    }
}

/// Quantile function of a grid measure.
///
/// The CDF of a piecewise-constant density is piecewise linear, so the
/// quantile is piecewise linear with a vertex per cell edge; cells with zero
/// density contribute quantile jumps.
pub fn cdf_quantile(mu: &GridMeasure) -> QuantileTable {
    let n = mu.cells();
    let mut vertices = Vec::with_capacity(n + 1);
    let (a, _) = mu.domain().span();
    let mut acc = 0.0;
    vertices.push((0.0, a));
    let total: f64 = mu.masses().iter().sum();
    for i in 0..n {
        acc += mu.cell_mass(i) / total;
        let (_, right) = mu.cell_bounds(i);
        let t = if i + 1 == n { 1.0 } else { acc };
        vertices.push((t, right));
    }
    QuantileTable { vertices }
}

impl QuantileTable {
    /// Builds a table from raw graph vertices.
    ///
    /// `t` must run nondecreasing from 0 to 1 and `x` must be nondecreasing;
    /// consecutive vertices sharing a `t` encode quantile jumps.
    pub fn from_vertices(vertices: Vec<(f64, f64)>) -> Result<QuantileTable> {
        if vertices.len() < 2 {
            return Err(Error::InvalidParameter(
                "quantile table needs at least two vertices".into(),
            ));
        }
        let first = vertices.first().unwrap().0;
        let last = vertices.last().unwrap().0;
        if first != 0.0 || last != 1.0 {
            return Err(Error::InvalidParameter(format!(
                "quantile table must span t ∈ [0, 1], got [{first}, {last}]"
            )));
        }
        for w in vertices.windows(2) {
            if w[1].0 < w[0].0 || w[1].1 < w[0].1 - 1e-12 {
                return Err(Error::InvalidParameter(
                    "quantile vertices must be nondecreasing in t and x".into(),
                ));
            }
        }
        Ok(QuantileTable { vertices })
    }

    /// Step quantile of an empirical measure.
    pub fn from_empirical(e: &EmpiricalMeasure) -> QuantileTable {
        let n = e.len();
        let mut vertices = Vec::with_capacity(2 * n);
        for (k, &x) in e.atoms().iter().enumerate() {
            vertices.push((k as f64 / n as f64, x));
            vertices.push(((k + 1) as f64 / n as f64, x));
        }
        QuantileTable { vertices }
    }
}

/// Semicircle law of radius `r`, exact cell averages on `[-r, r]`.
///
/// Density `(2/πr²)·√(r²−x²)`; the second moment is `r²/4`, so radius 2 is
/// the standard semicircle law with unit variance.
pub fn make_semicircle(r: f64, cells: usize) -> Result<GridMeasure> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "semicircle radius must be positive, got {r}"
        )));
    }
    let domain = Domain::Line { a: -r, b: r };
    let h = 2.0 * r / cells as f64;
    // Antiderivative of √(r²−x²): (x√(r²−x²) + r² asin(x/r)) / 2.
    let anti = |x: f64| {
        let x = x.clamp(-r, r);
        0.5 * (x * (r * r - x * x).max(0.0).sqrt() + r * r * (x / r).asin())
    };
    let scale = 2.0 / (PI * r * r);
    let density = (0..cells)
        .map(|i| {
            let a = -r + i as f64 * h;
            let b = a + h;
            scale * (anti(b) - anti(a)) / h
        })
        .collect();
    GridMeasure::new(domain, density)
}

/// Circle density `1 + (2/λ) cos θ` against `dθ/2π`, for `λ ≥ 2`.
///
/// `λ = ∞` (any non-finite positive value) yields the uniform circle measure.
pub fn make_nu_lambda(lambda: f64, cells: usize) -> Result<GridMeasure> {
    if lambda.is_nan() || lambda < 2.0 {
        return Err(Error::InvalidParameter(format!(
            "cosine family needs λ ≥ 2 (or ∞), got {lambda}"
        )));
    }
    if lambda.is_infinite() {
        return GridMeasure::from_fn(Domain::Circle, cells, |_| 1.0);
    }
    GridMeasure::from_fn(Domain::Circle, cells, |t| 1.0 + (2.0 / lambda) * t.cos())
}

/// Quarter-circle law `(ρ/2π)·√((4/ρ − y)/y)` on `(0, 4/ρ]`, the equilibrium
/// measure of the linear half-line potential `ρy`.
///
/// Cell averages are exact via the arcsine mass function
/// `M(y) = (2/π)(φ + sin φ cos φ)`, `φ = asin(√(ρy)/2)`, so the unbounded
/// edge at the origin carries its full mass.
pub fn make_quarter_circle(rho: f64, cells: usize) -> Result<GridMeasure> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "quarter-circle family needs ρ > 0, got {rho}"
        )));
    }
    let b = 4.0 / rho;
    let h = b / cells as f64;
    let mass = |y: f64| {
        let phi = (0.5 * (rho * y).max(0.0).sqrt()).min(1.0).asin();
        (phi + phi.sin() * phi.cos()) * 2.0 / PI
    };
    let density = (0..cells)
        .map(|i| {
            let a = i as f64 * h;
            (mass(a + h) - mass(a)) / h
        })
        .collect();
    GridMeasure::new(Domain::HalfLine { b }, density)
}

/// Power density `(α+1)·x^α` on `[0, 1]`, exact cell averages, for `α > -1/3`.
///
/// The lower bound keeps the density cubed integrable, which the Fisher
/// functionals require.
pub fn make_power_density(alpha: f64, cells: usize) -> Result<GridMeasure> {
    if !(alpha.is_finite() && alpha > -1.0 / 3.0) {
        return Err(Error::InvalidParameter(format!(
            "power density needs α > -1/3, got {alpha}"
        )));
    }
    let domain = Domain::HalfLine { b: 1.0 };
    let h = 1.0 / cells as f64;
    let density = (0..cells)
        .map(|i| {
            let a = i as f64 * h;
            let b = a + h;
            (b.powf(alpha + 1.0) - a.powf(alpha + 1.0)) / h
        })
        .collect();
    GridMeasure::new(domain, density)
}

/// Uniform measure on the given domain.
pub fn make_uniform(domain: Domain, cells: usize) -> Result<GridMeasure> {
    GridMeasure::from_fn(domain, cells, |_| 1.0)
}

/// Union of `k` arcs of length `2π/(k·n)` with density `n`, centered at the
/// `k`-th roots of unity. The arc centers do not depend on `n`.
///
/// Requires `cells` divisible by `2·k·n` so every arc is a whole number of
/// cells and the relative entropy against the uniform measure is exactly
/// `log n`.
pub fn make_spike(k: usize, n: usize, cells: usize) -> Result<GridMeasure> {
    if k == 0 || n == 0 {
        return Err(Error::InvalidParameter("spike family needs k, n ≥ 1".into()));
    }
    if cells % (2 * k * n) != 0 {
        return Err(Error::InvalidParameter(format!(
            "spike grid needs cells divisible by 2kn = {}, got {cells}",
            2 * k * n
        )));
    }
    let h = 2.0 * PI / cells as f64;
    let half = PI / (k as f64 * n as f64);
    let mut density = vec![0.0; cells];
    for j in 0..k {
        let center = wrap_angle(2.0 * PI * j as f64 / k as f64);
        for (i, d) in density.iter_mut().enumerate() {
            let mid = -PI + (i as f64 + 0.5) * h;
            let delta = wrap_angle(mid - center).abs();
            if delta < half {
                *d = n as f64;
            }
        }
    }
    GridMeasure::new(Domain::Circle, density)
}

/// Mass of the √-image of `mu` on the x-interval `[u, v]`, `0 ≤ u < v`.
///
/// Each source cell's mass is spread uniformly in `x = √y` over its image.
/// That choice reproduces the exact image density when the source density
/// carries a `y^{−1/2}` factor in-cell (the generic half-line edge, whose
/// image is flat) and is an exact cell average for smooth densities, so the
/// image never develops the spurious ramp that linear-in-`y` interpolation
/// produces across the many image cells of the first source cell.
fn sqrt_image_mass(mu: &GridMeasure, u: f64, v: f64) -> f64 {
    let hy = mu.h();
    let n = mu.cells();
    let j0 = ((u * u / hy) as usize).min(n.saturating_sub(1));
    let j1 = (((v * v) / hy).ceil() as usize).min(n);
    let mut acc = 0.0;
    for j in j0..j1 {
        let y0 = j as f64 * hy;
        let x0 = y0.sqrt();
        let x1 = (y0 + hy).sqrt();
        let overlap = v.min(x1) - u.max(x0);
        if overlap > 0.0 {
            acc += mu.cell_mass(j) * overlap / (x1 - x0);
        }
    }
    acc
}

/// Symmetrized square-root transform: the law of `±√Y` for `Y ~ μ` on the
/// half-line, regridded onto `cells` cells (must be even) over `[-√b, √b]`.
///
/// The density satisfies `p̃(x) = |x|·p(x²)`; cell masses come from the
/// √-aware mass map of [`sqrt_image_mass`], halved per sign.
pub fn symmetrize_sqrt(mu: &GridMeasure, cells: usize) -> Result<GridMeasure> {
    let b = match mu.domain() {
        Domain::HalfLine { b } => b,
        other => {
            return Err(Error::DomainMismatch {
                expected: "halfline",
                got: other.label(),
            })
        }
    };
    if cells % 2 != 0 {
        return Err(Error::InvalidParameter(
            "symmetrized grid needs an even cell count".into(),
        ));
    }
    let s = b.sqrt();
    let domain = Domain::Line { a: -s, b: s };
    let h = 2.0 * s / cells as f64;
    let half = cells / 2;
    let mut density = vec![0.0; cells];
    for i in 0..half {
        let u = i as f64 * h;
        let v = u + h;
        let mass = 0.5 * sqrt_image_mass(mu, u, v);
        density[half + i] = mass / h;
        density[half - 1 - i] = mass / h;
    }
    GridMeasure::new(domain, density)
}

/// Pushforward of a half-line measure under `y ↦ √y`, regridded onto
/// `[0, √b]` by the √-aware mass map of [`sqrt_image_mass`].
///
/// The density satisfies `q(y) = 2y·p(y²)`.
pub fn pushforward_sqrt(mu: &GridMeasure, cells: usize) -> Result<GridMeasure> {
    let b = match mu.domain() {
        Domain::HalfLine { b } => b,
        other => {
            return Err(Error::DomainMismatch {
                expected: "halfline",
                got: other.label(),
            })
        }
    };
    let s = b.sqrt();
    let h = s / cells as f64;
    let density = (0..cells)
        .map(|i| {
            let u = i as f64 * h;
            let v = u + h;
            sqrt_image_mass(mu, u, v) / h
        })
        .collect();
    GridMeasure::new(Domain::HalfLine { b: s }, density)
}

/// Poisson smoothing of a circle measure: Fourier mode `k` is damped by
/// `r^|k|`, which convolves the density with the Poisson kernel at radius `r`.
///
/// `r = 1` returns the measure unchanged; `r → 0` tends to the uniform
/// measure. The output density is clamped at zero (aliasing can produce
/// negligible negative undershoot) and renormalized.
pub fn poisson_smooth(mu: &GridMeasure, r: f64) -> Result<GridMeasure> {
    if !mu.domain().is_circle() {
        return Err(Error::DomainMismatch {
            expected: "circle",
            got: mu.domain().label(),
        });
    }
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::InvalidParameter(format!(
            "Poisson radius must lie in [0, 1], got {r}"
        )));
    }
    let n = mu.cells();
    let mut planner = rustfft::FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf: Vec<rustfft::num_complex::Complex<f64>> = mu
        .density()
        .iter()
        .map(|&p| rustfft::num_complex::Complex::new(p, 0.0))
        .collect();
    fwd.process(&mut buf);
    for (k, z) in buf.iter_mut().enumerate() {
        let freq = k.min(n - k) as f64;
        *z *= r.powf(freq);
    }
    inv.process(&mut buf);
    let density = buf.iter().map(|z| (z.re / n as f64).max(0.0)).collect();
    GridMeasure::new(Domain::Circle, density)
}

/// Normalized bump `φ(x) ∝ exp(-1/(1-x²))` on `[-1, 1]`, scaled to width `ε`.
struct Bump {
    /// CDF of the unit bump tabulated on a fine uniform grid over `[-1, 1]`.
    cdf: Vec<f64>,
}

impl Bump {
    const NODES: usize = 8192;

    fn new() -> Bump {
        let n = Self::NODES;
        let h = 2.0 / n as f64;
        let f = |x: f64| {
            let d = 1.0 - x * x;
            if d <= 0.0 {
                0.0
            } else {
                (-1.0 / d).exp()
            }
        };
        // Cumulative Simpson on cell halves; f is smooth and compactly supported.
        let mut cdf = Vec::with_capacity(n + 1);
        cdf.push(0.0);
        let mut acc = 0.0;
        for i in 0..n {
            let a = -1.0 + i as f64 * h;
            acc += h / 6.0 * (f(a) + 4.0 * f(a + 0.5 * h) + f(a + h));
            cdf.push(acc);
        }
        let total = acc;
        for v in &mut cdf {
            *v /= total;
        }
        Bump { cdf }
    }

    /// CDF of the width-`ε` bump at `x`.
    fn cdf_eps(&self, x: f64, eps: f64) -> f64 {
        let u = x / eps;
        if u <= -1.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return 1.0;
        }
        let pos = (u + 1.0) / 2.0 * Self::NODES as f64;
        let i = (pos as usize).min(Self::NODES - 1);
        let frac = pos - i as f64;
        self.cdf[i] + (self.cdf[i + 1] - self.cdf[i]) * frac
    }

    /// Second moment of the unit bump.
    fn second_moment(&self) -> f64 {
        // d(cdf) integration of x².
        let n = Self::NODES;
        let h = 2.0 / n as f64;
        let mut m2 = 0.0;
        for i in 0..n {
            let x = -1.0 + (i as f64 + 0.5) * h;
            m2 += x * x * (self.cdf[i + 1] - self.cdf[i]);
        }
        m2
    }
}

/// Second moment of the unit mollifier bump on `[-1, 1]`.
pub fn mollifier_second_moment() -> f64 {
    Bump::new().second_moment()
}

/// Convolution of a line measure with the smooth bump mollifier of width `ε`.
///
/// The output lives on the input window widened by `ε` on both sides, with
/// the same cell width (so the cell count grows). Cell masses are exact:
/// the convolved mass of `[u, v]` is `Σ_j m_j·(Φ_ε(v−c_j) − Φ_ε(u−c_j))`
/// up to the piecewise-linear tabulation of the bump CDF `Φ_ε`.
pub fn mollify(mu: &GridMeasure, eps: f64) -> Result<GridMeasure> {
    let (a, b) = match mu.domain() {
        Domain::Line { a, b } => (a, b),
        other => {
            return Err(Error::DomainMismatch {
                expected: "line",
                got: other.label(),
            })
        }
    };
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "mollifier width must be positive, got {eps}"
        )));
    }
    let h = mu.h();
    let pad = (eps / h).ceil() as usize;
    let n = mu.cells() + 2 * pad;
    let a_new = a - pad as f64 * h;
    let bump = Bump::new();
    let masses = mu.masses();
    let centers = mu.midpoints();
    let density: Vec<f64> = (0..n)
        .map(|i| {
            let u = a_new + i as f64 * h;
            let v = u + h;
            let mut mass = 0.0;
            for (m, c) in masses.iter().zip(&centers) {
                // Convolution against the bump centered at each source cell
                // midpoint; sub-cell structure of the source is below the
                // mollifier resolution for eps >> h.
                mass += m * (bump.cdf_eps(v - c, eps) - bump.cdf_eps(u - c, eps));
            }
            mass / h
        })
        .collect();
    GridMeasure::new(
        Domain::Line {
            a: a_new,
            b: a_new + n as f64 * h,
        },
        density,
    )
    .map(|g| {
        debug_assert!((g.domain().span().1 - (b + pad as f64 * h)).abs() < 1e-9);
        g
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn semicircle_mass_and_variance() {
        let mu = make_semicircle(2.0, 2048).unwrap();
        assert_abs_diff_eq!(mu.total_mass(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(mu.moment(2), 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(mu.moment(1), 0.0, epsilon = 1e-13);
        // Fourth moment of the unit-variance semicircle law is 2.
        assert_abs_diff_eq!(mu.moment(4), 2.0, epsilon = 1e-4);
    }

    #[test]
    fn semicircle_radius_scaling() {
        // Radius 2/√ρ has variance 1/ρ.
        let mu = make_semicircle(1.0, 1024).unwrap();
        assert_abs_diff_eq!(mu.moment(2), 0.25, epsilon = 1e-5);
    }

    #[test]
    fn cosine_family_first_fourier_mode() {
        let mu = make_nu_lambda(8.0, 1024).unwrap();
        assert_abs_diff_eq!(mu.total_mass(), 1.0, epsilon = 1e-14);
        let c1 = mu.integrate(|t| t.cos());
        assert_abs_diff_eq!(c1, 1.0 / 8.0, epsilon = 1e-13);
        let uniform = make_nu_lambda(f64::INFINITY, 256).unwrap();
        assert!(uniform.density().iter().all(|&p| (p - 1.0).abs() < 1e-14));
    }

    #[test]
    fn cosine_family_rejects_small_lambda() {
        assert!(make_nu_lambda(1.5, 256).is_err());
    }

    #[test]
    fn power_density_moments() {
        let mu = make_power_density(1.0, 2048).unwrap();
        assert_abs_diff_eq!(mu.total_mass(), 1.0, epsilon = 1e-14);
        // (α+1)/(α+2) with α = 1.
        assert_abs_diff_eq!(mu.moment(1), 2.0 / 3.0, epsilon = 1e-7);
        let flat = make_power_density(0.0, 512).unwrap();
        assert!(flat.density().iter().all(|&p| (p - 1.0).abs() < 1e-12));
    }

    #[test]
    fn spike_measure_structure() {
        let mu = make_spike(2, 8, 2 * 2 * 8 * 4).unwrap();
        assert_abs_diff_eq!(mu.total_mass(), 1.0, epsilon = 1e-14);
        let occupied = mu.density().iter().filter(|&&p| p > 0.0).count();
        assert_eq!(occupied, mu.cells() / 8);
        assert!(mu
            .density()
            .iter()
            .all(|&p| p == 0.0 || (p - 8.0).abs() < 1e-12));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mu = make_semicircle(2.0, 64).unwrap();
        let text = mu.to_csv_string();
        let back = GridMeasure::from_csv_str(&text).unwrap();
        assert_eq!(mu.domain(), back.domain());
        for (p, q) in mu.density().iter().zip(back.density()) {
            assert!((p - q).abs() <= 1e-12 * p.abs().max(1.0));
        }
        let nu = make_nu_lambda(4.0, 64).unwrap();
        let back = GridMeasure::from_csv_str(&nu.to_csv_string()).unwrap();
        assert_eq!(nu.domain(), back.domain());
        for (p, q) in nu.density().iter().zip(back.density()) {
            assert!((p - q).abs() <= 1e-12 * p.abs().max(1.0));
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        let mu = make_semicircle(2.0, 512).unwrap();
        let q = cdf_quantile(&mu);
        assert_abs_diff_eq!(q.value(0.5), 0.0, epsilon = mu.h());
        assert_abs_diff_eq!(q.value(0.0), -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.value(1.0), 2.0, epsilon = 1e-12);
        // Median splits mass in halves.
        let m = q.value(0.5);
        assert_abs_diff_eq!(mu.mass_between(-2.0, m), 0.5, epsilon = 1e-3);
    }

    #[test]
    fn quantile_jumps_across_gaps() {
        // Two uniform blocks separated by a gap.
        let mut density = vec![0.0; 32];
        for d in density.iter_mut().take(8) {
            *d = 1.0;
        }
        for d in density.iter_mut().skip(24) {
            *d = 1.0;
        }
        let mu = GridMeasure::new(Domain::Line { a: 0.0, b: 4.0 }, density).unwrap();
        let q = cdf_quantile(&mu);
        assert!(q.value(0.499) < 1.01);
        assert!(q.value(0.501) > 2.99);
    }

    #[test]
    fn symmetrize_moment_pairs() {
        let mu = make_power_density(1.0, 2048).unwrap();
        let tilde = symmetrize_sqrt(&mu, 4096).unwrap();
        assert_abs_diff_eq!(tilde.total_mass(), 1.0, epsilon = 1e-13);
        for k in 1..=3u32 {
            assert_abs_diff_eq!(tilde.moment(2 * k), mu.moment(k), epsilon = 1e-6);
        }
        assert_abs_diff_eq!(tilde.moment(1), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn pushforward_sqrt_density_shape() {
        // Uniform on [0,1] pushes forward to q(y) = 2y on [0,1]. The
        // √-uniform in-cell rule trades exactness on flat profiles near the
        // origin for exactness on inverse-square-root edges, so the first
        // moment carries an O(h^{3/2}) edge contribution (~5e-6 at 1024).
        let mu = make_power_density(0.0, 1024).unwrap();
        let hat = pushforward_sqrt(&mu, 1024).unwrap();
        assert_abs_diff_eq!(hat.moment(1), 2.0 / 3.0, epsilon = 2e-5);
        let mid = hat.cells() / 2;
        let y = hat.midpoint(mid);
        assert_abs_diff_eq!(hat.density()[mid], 2.0 * y, epsilon = 1e-3);
    }

    #[test]
    fn poisson_smoothing_damps_modes() {
        let uniform = make_uniform(Domain::Circle, 256).unwrap();
        let same = poisson_smooth(&uniform, 0.5).unwrap();
        assert!(same
            .density()
            .iter()
            .all(|&p| (p - 1.0).abs() < 1e-12));

        let mu = GridMeasure::from_fn(Domain::Circle, 256, |t| 1.0 + t.cos()).unwrap();
        let sm = poisson_smooth(&mu, 0.5).unwrap();
        for (i, &p) in sm.density().iter().enumerate() {
            let t = sm.midpoint(i);
            assert_abs_diff_eq!(p, 1.0 + 0.5 * t.cos(), epsilon = 1e-12);
        }

        let flat = poisson_smooth(&mu, 0.0).unwrap();
        assert!(flat.density().iter().all(|&p| (p - 1.0).abs() < 1e-12));
    }

    #[test]
    fn mollify_widens_support_and_keeps_mean() {
        let mu = make_semicircle(2.0, 512).unwrap();
        let sm = mollify(&mu, 0.1).unwrap();
        assert_abs_diff_eq!(sm.total_mass(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sm.moment(1), 0.0, epsilon = 1e-10);
        let (a, b) = sm.domain().span();
        assert!(a <= -2.1 + 1e-9 && b >= 2.1 - 1e-9);
        // Added variance equals the bump's second moment, scaled by ε².
        let m2 = mollifier_second_moment();
        assert_abs_diff_eq!(sm.moment(2), mu.moment(2) + 0.01 * m2, epsilon = 1e-5);
    }

    #[test]
    fn coarsen_preserves_mass_profile() {
        let mu = make_semicircle(2.0, 1024).unwrap();
        let c = mu.coarsen(4).unwrap();
        assert_eq!(c.cells(), 256);
        assert_abs_diff_eq!(c.moment(2), mu.moment(2), epsilon = 1e-4);
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(matches!(
            GridMeasure::new(Domain::Circle, vec![1.0; 4]),
            Err(Error::TooFewCells { .. })
        ));
        assert!(matches!(
            GridMeasure::new(Domain::Circle, vec![-1.0; 16]),
            Err(Error::InvalidDensity { .. })
        ));
        assert!(matches!(
            GridMeasure::new(Domain::Circle, vec![0.0; 16]),
            Err(Error::ZeroMass)
        ));
    }

    #[test]
    fn wrap_angle_range() {
        for &t in &[0.0, PI, -PI, 3.0 * PI, -3.0 * PI, 6.8, -6.8, 100.0] {
            let w = wrap_angle(t);
            assert!((-PI..PI).contains(&w), "wrap({t}) = {w}");
            assert_abs_diff_eq!((w - t).rem_euclid(2.0 * PI), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn empirical_circle_reduces_atoms() {
        let e = EmpiricalMeasure::new_circle(vec![3.0 * PI, -3.0 * PI, 0.5]).unwrap();
        assert!(e.atoms().iter().all(|&t| (-PI..PI).contains(&t)));
        assert_eq!(e.len(), 3);
    }
}
