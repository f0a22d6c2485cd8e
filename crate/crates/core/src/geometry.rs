//! Planar array geometry, array responses and direction grids.
//!
//! Conventions used throughout the crate:
//!
//! - Arrays lie in the y–z plane with broadside along +x. Columns run along
//!   y (azimuth), rows along z (elevation).
//! - Element `n` sits at column `n / rows`, row `n % rows` (column-major), so
//!   consecutive element indices walk down a column.
//! - Positions are in carrier wavelengths and centered on the array origin.
//! - The response of the element at `p` toward unit direction `u` is
//!   `exp(+j 2π <p, u>)`, with `u = (cos el cos az, cos el sin az, sin el)`.
//!
//! Angles are radians everywhere in this module. Degrees only appear at the
//! configuration and CLI boundary.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};

const GRID_TOL: f64 = 1e-9;

/// A steering direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub azimuth: f64,
    pub elevation: f64,
}

impl Direction {
    pub fn new(azimuth: f64, elevation: f64) -> Self {
        Self { azimuth, elevation }
    }

    /// Checked constructor: azimuth in [-π, π], elevation in [-π/2, π/2].
    pub fn checked(azimuth: f64, elevation: f64) -> Result<Self> {
        let eps = 1e-12;
        if !(azimuth.abs() <= PI + eps) || !(elevation.abs() <= FRAC_PI_2 + eps) {
            return Err(Error::InvalidParameter(format!(
                "direction out of range: az={azimuth} el={elevation}"
            )));
        }
        Ok(Self::new(azimuth, elevation))
    }

    pub fn from_degrees(az_deg: f64, el_deg: f64) -> Self {
        Self::new(az_deg.to_radians(), el_deg.to_radians())
    }

    pub fn to_degrees(&self) -> (f64, f64) {
        (self.azimuth.to_degrees(), self.elevation.to_degrees())
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        let (se, ce) = self.elevation.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        [ce * ca, ce * sa, se]
    }
}

fn default_spacing() -> f64 {
    0.5
}

fn is_zero3(v: &[f64; 3]) -> bool {
    v.iter().all(|&x| x == 0.0)
}

/// Uniform planar array in the y–z plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub rows: usize,
    pub cols: usize,
    /// Element pitch in carrier wavelengths.
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    /// Offset of the array centroid, in wavelengths.
    #[serde(default, skip_serializing_if = "is_zero3")]
    pub origin: [f64; 3],
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self::upa(8, 8)
    }
}

impl ArrayGeometry {
    /// Half-wavelength array centered at the origin.
    pub fn upa(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            spacing: 0.5,
            origin: [0.0; 3],
        }
    }

    pub fn with_spacing(mut self, spacing: f64) -> Self {
        self.spacing = spacing;
        self
    }

    pub fn with_origin(mut self, origin: [f64; 3]) -> Self {
        self.origin = origin;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidParameter(format!(
                "array must have at least one element, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !(self.spacing > 0.0) || !self.spacing.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "element spacing must be positive, got {}",
                self.spacing
            )));
        }
        Ok(())
    }

    pub fn num_elements(&self) -> usize {
        self.rows * self.cols
    }
}

/// Element positions in wavelengths, indexed column-major.
pub fn element_positions(geometry: &ArrayGeometry) -> Vec<[f64; 3]> {
    let (rows, cols) = (geometry.rows, geometry.cols);
    let yc = (cols as f64 - 1.0) / 2.0;
    let zc = (rows as f64 - 1.0) / 2.0;
    let o = geometry.origin;
    let mut out = Vec::with_capacity(rows * cols);
    for c in 0..cols {
        for r in 0..rows {
            out.push([
                o[0],
                o[1] + geometry.spacing * (c as f64 - yc),
                o[2] + geometry.spacing * (r as f64 - zc),
            ]);
        }
    }
    out
}

fn response_from_positions(positions: &[[f64; 3]], dir: Direction) -> CVec {
    let u = dir.unit_vector();
    CVec::from_iterator(
        positions.len(),
        positions.iter().map(|p| {
            let phase = 2.0 * PI * (p[0] * u[0] + p[1] * u[1] + p[2] * u[2]);
            Complex64::from_polar(1.0, phase)
        }),
    )
}

/// Array response vector toward `dir`; its squared norm is the element count.
pub fn array_response(geometry: &ArrayGeometry, dir: Direction) -> CVec {
    response_from_positions(&element_positions(geometry), dir)
}

/// Rectangular azimuth/elevation region sampled on a regular grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionGrid {
    pub az_start: f64,
    pub az_stop: f64,
    pub az_step: f64,
    pub el_start: f64,
    pub el_stop: f64,
    pub el_step: f64,
}

impl Default for DirectionGrid {
    /// Azimuth -60°..60° every 15°, elevation -30°..30° every 15°.
    fn default() -> Self {
        Self::from_degrees(-60.0, 60.0, 15.0, -30.0, 30.0, 15.0)
    }
}

impl DirectionGrid {
    pub fn from_degrees(
        az_start: f64,
        az_stop: f64,
        az_step: f64,
        el_start: f64,
        el_stop: f64,
        el_step: f64,
    ) -> Self {
        Self {
            az_start: az_start.to_radians(),
            az_stop: az_stop.to_radians(),
            az_step: az_step.to_radians(),
            el_start: el_start.to_radians(),
            el_stop: el_stop.to_radians(),
            el_step: el_step.to_radians(),
        }
    }
}

fn axis_points(start: f64, stop: f64, step: f64, name: &str) -> Result<Vec<f64>> {
    let span = stop - start;
    if span.abs() <= GRID_TOL {
        return Ok(vec![start]);
    }
    if !(step > 0.0) || span < 0.0 {
        return Err(Error::Grid(format!(
            "{name}: need start <= stop and a positive step (start={start}, stop={stop}, step={step})"
        )));
    }
    let ratio = span / step;
    let n = ratio.round();
    if (ratio - n).abs() > GRID_TOL * ratio.max(1.0) {
        return Err(Error::Grid(format!(
            "{name}: step {:.6}° does not evenly tile the range {:.6}°..{:.6}°",
            step.to_degrees(),
            start.to_degrees(),
            stop.to_degrees()
        )));
    }
    let n = n as usize;
    Ok((0..=n)
        .map(|k| if k == n { stop } else { start + step * k as f64 })
        .collect())
}

/// Enumerate the grid, elevation-major then azimuth ascending.
pub fn coverage_grid(grid: &DirectionGrid) -> Result<Vec<Direction>> {
    let az = axis_points(grid.az_start, grid.az_stop, grid.az_step, "azimuth")?;
    let el = axis_points(grid.el_start, grid.el_stop, grid.el_step, "elevation")?;
    let mut out = Vec::with_capacity(az.len() * el.len());
    for &e in &el {
        for &a in &az {
            out.push(Direction::checked(a, e)?);
        }
    }
    Ok(out)
}

fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![start];
    }
    (0..n)
        .map(|k| {
            if k == n - 1 {
                stop
            } else {
                start + (stop - start) * k as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Uniform `n_az x n_el` grid over the same extents as `grid`, endpoints
/// included, elevation-major.
pub fn dense_eval_grid(grid: &DirectionGrid, n_az: usize, n_el: usize) -> Vec<Direction> {
    let az = linspace(grid.az_start, grid.az_stop, n_az.max(1));
    let el = linspace(grid.el_start, grid.el_stop, n_el.max(1));
    let mut out = Vec::with_capacity(az.len() * el.len());
    for &e in &el {
        for &a in &az {
            out.push(Direction::new(a, e));
        }
    }
    out
}

/// Array responses stacked as columns, in direction order.
#[derive(Debug, Clone)]
pub struct SteeringMatrix {
    pub entries: CMat,
    pub directions: Vec<Direction>,
}

pub fn steering_matrix(geometry: &ArrayGeometry, directions: &[Direction]) -> SteeringMatrix {
    let positions = element_positions(geometry);
    let n = positions.len();
    let mut entries = DMatrix::zeros(n, directions.len());
    for (i, d) in directions.iter().enumerate() {
        entries.set_column(i, &response_from_positions(&positions, *d));
    }
    SteeringMatrix {
        entries,
        directions: directions.to_vec(),
    }
}
