//! Codebook container, conventional benchmark codebooks and the codebook
//! file format.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{array_response, ArrayGeometry, Direction};
use crate::linalg::{CMat, CVec};
use crate::quantization::{QuantizationSpec, QuantizedBeam, QuantizedWeight, Quantizer};

pub const FORMAT_VERSION: u32 = 1;

/// Allowed dip (relative to the peak) when walking a taper from its edge
/// toward its center.
const MONOTONE_TOL: f64 = 1e-3;

/// A set of beams, one per served direction, in grid-index form.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub geometry: ArrayGeometry,
    pub spec: QuantizationSpec,
    pub directions: Vec<Direction>,
    pub beams: Vec<QuantizedBeam>,
    pub label: String,
}

impl Codebook {
    /// Project each column of `weights` onto the spec's grid.
    pub fn from_weights(
        geometry: &ArrayGeometry,
        spec: &QuantizationSpec,
        directions: &[Direction],
        weights: &CMat,
        label: &str,
    ) -> Result<Self> {
        if weights.nrows() != geometry.num_elements() || weights.ncols() != directions.len() {
            return Err(Error::ShapeMismatch(format!(
                "weights are {:?}, expected {}x{}",
                weights.shape(),
                geometry.num_elements(),
                directions.len()
            )));
        }
        let q = Quantizer::new(spec);
        let beams = (0..weights.ncols())
            .map(|i| q.project_beam(&weights.column(i).into_owned()))
            .collect();
        Ok(Self {
            geometry: geometry.clone(),
            spec: *spec,
            directions: directions.to_vec(),
            beams,
            label: label.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.spec.validate()?;
        if self.beams.is_empty() {
            return Err(Error::Format("codebook has no beams".into()));
        }
        if self.beams.len() != self.directions.len() {
            return Err(Error::Format(format!(
                "{} beams for {} directions",
                self.beams.len(),
                self.directions.len()
            )));
        }
        let n = self.geometry.num_elements();
        for (i, b) in self.beams.iter().enumerate() {
            if b.len() != n {
                return Err(Error::Format(format!("beam {i} has {} weights, expected {n}", b.len())));
            }
            if b.spec != self.spec {
                return Err(Error::Format(format!("beam {i} uses a different quantization spec")));
            }
            if !b.in_range() {
                return Err(Error::Format(format!("beam {i} has an index outside the grid")));
            }
        }
        Ok(())
    }

    /// Realized beam `i`.
    pub fn beam(&self, i: usize) -> CVec {
        Quantizer::new(&self.spec).realize(&self.beams[i])
    }

    /// Realized beams stacked as columns (`N x M`).
    pub fn to_matrix(&self) -> CMat {
        let q = Quantizer::new(&self.spec);
        let n = self.geometry.num_elements();
        let mut m = CMat::zeros(n, self.beams.len());
        for (i, b) in self.beams.iter().enumerate() {
            m.set_column(i, &q.realize(b));
        }
        m
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&CodebookFile::from(self))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CodebookFile = serde_json::from_str(text)?;
        file.into_codebook()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&CodebookFile::from(self))?)
    }
}

#[derive(Serialize, Deserialize)]
struct BeamFile {
    phase_idx: Vec<u32>,
    amp_idx: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct CodebookFile {
    version: u32,
    label: String,
    geometry: ArrayGeometry,
    spec: QuantizationSpec,
    directions_deg: Vec<[f64; 2]>,
    beams: Vec<BeamFile>,
}

impl From<&Codebook> for CodebookFile {
    fn from(cb: &Codebook) -> Self {
        Self {
            version: FORMAT_VERSION,
            label: cb.label.clone(),
            geometry: cb.geometry.clone(),
            spec: cb.spec,
            directions_deg: cb
                .directions
                .iter()
                .map(|d| [d.azimuth.to_degrees(), d.elevation.to_degrees()])
                .collect(),
            beams: cb
                .beams
                .iter()
                .map(|b| BeamFile {
                    phase_idx: b.weights.iter().map(|w| w.phase_idx).collect(),
                    amp_idx: b.weights.iter().map(|w| w.amp_idx).collect(),
                })
                .collect(),
        }
    }
}

impl CodebookFile {
    fn into_codebook(self) -> Result<Codebook> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported codebook version {}", self.version)));
        }
        let mut beams = Vec::with_capacity(self.beams.len());
        for (i, b) in self.beams.into_iter().enumerate() {
            if b.phase_idx.len() != b.amp_idx.len() {
                return Err(Error::Format(format!(
                    "beam {i}: {} phase indices but {} amplitude indices",
                    b.phase_idx.len(),
                    b.amp_idx.len()
                )));
            }
            beams.push(QuantizedBeam {
                weights: b
                    .phase_idx
                    .iter()
                    .zip(&b.amp_idx)
                    .map(|(&p, &a)| QuantizedWeight {
                        phase_idx: p,
                        amp_idx: a,
                    })
                    .collect(),
                spec: self.spec,
            });
        }
        let mut directions = Vec::with_capacity(self.directions_deg.len());
        for [az, el] in self.directions_deg {
            directions.push(
                Direction::checked(az.to_radians(), el.to_radians())
                    .map_err(|e| Error::Format(e.to_string()))?,
            );
        }
        let cb = Codebook {
            geometry: self.geometry,
            spec: self.spec,
            directions,
            beams,
            label: self.label,
        };
        cb.validate()?;
        Ok(cb)
    }
}

/// Conjugate beamforming: beam `i` is the array response toward direction
/// `i`, projected onto the grid.
pub fn cbf(geometry: &ArrayGeometry, directions: &[Direction], spec: &QuantizationSpec) -> Codebook {
    let q = Quantizer::new(spec);
    Codebook {
        geometry: geometry.clone(),
        spec: *spec,
        directions: directions.to_vec(),
        beams: directions
            .iter()
            .map(|d| q.project_beam(&array_response(geometry, *d)))
            .collect(),
        label: "cbf".into(),
    }
}

/// How a 1-D taper is laid over a planar array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WindowLayout {
    /// One taper of length N over the element index order.
    #[default]
    Vectorized,
    /// Outer product of a column taper and a row taper.
    Separable,
}

fn default_nbar() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    /// Sidelobe suppression in dB (positive).
    pub sll_db: f64,
    #[serde(default = "default_nbar")]
    pub nbar: usize,
    #[serde(default)]
    pub layout: WindowLayout,
}

impl WindowSpec {
    pub fn taylor(sll_db: f64) -> Self {
        Self {
            sll_db,
            nbar: default_nbar(),
            layout: WindowLayout::default(),
        }
    }

    pub fn with_nbar(mut self, nbar: usize) -> Self {
        self.nbar = nbar;
        self
    }

    pub fn with_layout(mut self, layout: WindowLayout) -> Self {
        self.layout = layout;
        self
    }

    pub fn label(&self) -> String {
        format!("tay{}", self.sll_db.round())
    }
}

/// Taylor taper of length `n`, symmetric, peak one.
///
/// Fails when `nbar` is too large for the sidelobe level, which shows up as
/// a taper that is no longer monotone from the edges to the center.
pub fn taylor_window_1d(n: usize, window: &WindowSpec) -> Result<Vec<f64>> {
    let nbar = window.nbar;
    if !(window.sll_db > 0.0) || !window.sll_db.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "sidelobe level must be positive, got {}",
            window.sll_db
        )));
    }
    if nbar == 0 || n < nbar {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= nbar <= n, got nbar={nbar}, n={n}"
        )));
    }
    let b = 10f64.powf(window.sll_db / 20.0);
    let a = b.acosh() / PI;
    let s2 = (nbar * nbar) as f64 / (a * a + (nbar as f64 - 0.5).powi(2));

    let fm: Vec<f64> = (1..nbar)
        .map(|m| {
            let m = m as f64;
            let mut num = 1.0;
            let mut den = 1.0;
            for i in 1..nbar {
                let i = i as f64;
                num *= 1.0 - m * m / s2 / (a * a + (i - 0.5).powi(2));
                if i != m {
                    den *= 1.0 - m * m / (i * i);
                }
            }
            let sign = if (m as usize) % 2 == 1 { 1.0 } else { -1.0 };
            sign * num / (2.0 * den)
        })
        .collect();

    let mut w: Vec<f64> = (0..n)
        .map(|k| {
            let x = (k as f64 - (n as f64 - 1.0) / 2.0) / n as f64;
            1.0 + 2.0
                * fm
                    .iter()
                    .enumerate()
                    .map(|(j, f)| f * (2.0 * PI * (j + 1) as f64 * x).cos())
                    .sum::<f64>()
        })
        .collect();
    // exact mirror symmetry, independent of cosine rounding
    for k in 0..n / 2 {
        let avg = 0.5 * (w[k] + w[n - 1 - k]);
        w[k] = avg;
        w[n - 1 - k] = avg;
    }
    let peak = w.iter().cloned().fold(f64::MIN, f64::max);
    for x in &mut w {
        *x /= peak;
    }
    // Long tapers at low sidelobe levels show an edge flare of a few parts
    // in 10^4 of the peak, which is harmless; a real overshoot is far larger.
    let half = &w[..n.div_ceil(2)];
    if half.windows(2).any(|p| p[1] < p[0] - MONOTONE_TOL) || w.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "nbar = {nbar} is too large for a {} dB taper (taper is not monotone)",
            window.sll_db
        )));
    }
    Ok(w)
}

/// Per-element taper for a planar array, in element order.
pub fn window_weights(geometry: &ArrayGeometry, window: &WindowSpec) -> Result<Vec<f64>> {
    match window.layout {
        WindowLayout::Vectorized => taylor_window_1d(geometry.num_elements(), window),
        WindowLayout::Separable => {
            let along_z = taylor_window_1d(geometry.rows, &window.with_nbar(window.nbar.min(geometry.rows)))?;
            let along_y = taylor_window_1d(geometry.cols, &window.with_nbar(window.nbar.min(geometry.cols)))?;
            let mut v = Vec::with_capacity(geometry.num_elements());
            for c in 0..geometry.cols {
                for r in 0..geometry.rows {
                    v.push(along_y[c] * along_z[r]);
                }
            }
            Ok(v)
        }
    }
}

/// Conjugate beams with an element-wise amplitude taper `taper`.
pub fn tapered_cbf(
    geometry: &ArrayGeometry,
    directions: &[Direction],
    spec: &QuantizationSpec,
    taper: &[f64],
    label: &str,
) -> Result<Codebook> {
    if taper.len() != geometry.num_elements() {
        return Err(Error::ShapeMismatch(format!(
            "taper has {} entries for {} elements",
            taper.len(),
            geometry.num_elements()
        )));
    }
    let q = Quantizer::new(spec);
    let beams = directions
        .iter()
        .map(|d| {
            let mut a = array_response(geometry, *d);
            for (x, &t) in a.iter_mut().zip(taper) {
                *x *= t;
            }
            q.project_beam(&a)
        })
        .collect();
    Ok(Codebook {
        geometry: geometry.clone(),
        spec: *spec,
        directions: directions.to_vec(),
        beams,
        label: label.to_string(),
    })
}

/// Taylor-windowed conjugate beamforming.
pub fn windowed_cbf(
    geometry: &ArrayGeometry,
    directions: &[Direction],
    spec: &QuantizationSpec,
    window: &WindowSpec,
) -> Result<Codebook> {
    let taper = window_weights(geometry, window)?;
    tapered_cbf(geometry, directions, spec, &taper, &format!("cbf+{}", window.label()))
}

/// Result of [`scale`].
#[derive(Debug, Clone, PartialEq)]
pub struct Scaled {
    pub codebook: Codebook,
    /// Weights whose scaled magnitude fell below the attenuator floor.
    pub saturated: usize,
}

/// Scale every beam by `delta` and re-project.
pub fn scale(codebook: &Codebook, delta: f64) -> Result<Scaled> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParameter(format!("scale factor must lie in (0, 1], got {delta}")));
    }
    let q = Quantizer::new(&codebook.spec);
    let floor = codebook.spec.amp_floor();
    let mut saturated = 0;
    let mut beams = Vec::with_capacity(codebook.len());
    for b in &codebook.beams {
        let v = q.realize(b) * Complex64::from(delta);
        saturated += v.iter().filter(|z| z.norm() < floor * (1.0 - 1e-12)).count();
        beams.push(q.project_beam(&v));
    }
    Ok(Scaled {
        codebook: Codebook {
            beams,
            ..codebook.clone()
        },
        saturated,
    })
}
