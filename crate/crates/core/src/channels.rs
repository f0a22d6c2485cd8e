//! Self-interference channel models, channel estimation errors and user
//! channels.
//!
//! Randomness always comes from an explicit [`ChaCha8Rng`] handle. Use
//! [`stream_rng`] to derive independent, reproducible streams from a master
//! seed.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{array_response, element_positions, ArrayGeometry, Direction, DirectionGrid};
use crate::linalg::{fro_sq, top_singular, CMat, CVec};

/// An `Nr x Nt` self-interference channel.
pub type ChannelMatrix = CMat;

/// Generator for stream `stream` of master seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One draw from CN(0, 1).
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn gaussian_matrix<R: Rng + ?Sized>(nr: usize, nt: usize, rng: &mut R) -> CMat {
    // column by column so the draw order is fixed by the storage order
    let mut m = CMat::zeros(nr, nt);
    for c in 0..nt {
        for r in 0..nr {
            m[(r, c)] = complex_normal(rng);
        }
    }
    m
}

/// Scale `h` so that its squared Frobenius norm equals `Nt * Nr`.
pub fn normalize(h: &mut CMat) -> Result<()> {
    let e = fro_sq(h);
    if !(e > 0.0) || !e.is_finite() {
        return Err(Error::Degenerate("cannot normalize a zero channel".into()));
    }
    let target = (h.nrows() * h.ncols()) as f64;
    *h *= Complex64::from((target / e).sqrt());
    Ok(())
}

/// I.i.d. CN(0, 1) entries; unit average power per entry in expectation only.
pub fn draw_rayleigh<R: Rng + ?Sized>(nr: usize, nt: usize, rng: &mut R) -> ChannelMatrix {
    gaussian_matrix(nr, nt, rng)
}

/// Placement of the receive array for the near-field model: shifted along
/// +y (azimuth plane) by `separation` wavelengths from the transmit array.
pub fn receive_placement(rx: &ArrayGeometry, separation: f64) -> ArrayGeometry {
    let mut g = rx.clone();
    g.origin[1] += separation;
    g
}

/// Spherical-wave channel between the transmit array and a receive array
/// placed `separation` wavelengths along +y.
pub fn spherical_channel(
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    separation: f64,
) -> Result<ChannelMatrix> {
    if !(separation > 0.0) || !separation.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "array separation must be positive, got {separation}"
        )));
    }
    let pt = element_positions(tx);
    let pr = element_positions(&receive_placement(rx, separation));
    let mut h = CMat::zeros(pr.len(), pt.len());
    for (n, p) in pt.iter().enumerate() {
        for (m, q) in pr.iter().enumerate() {
            let r = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2) + (q[2] - p[2]).powi(2)).sqrt();
            if r <= 1e-12 {
                return Err(Error::Degenerate(format!(
                    "transmit element {n} and receive element {m} coincide"
                )));
            }
            h[(m, n)] = Complex64::from_polar(1.0 / r, -2.0 * PI * r);
        }
    }
    normalize(&mut h)?;
    Ok(h)
}

/// Number of reflected rays, fixed or drawn uniformly from an inclusive range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RayCount {
    Fixed(usize),
    Uniform([usize; 2]),
}

impl Default for RayCount {
    fn default() -> Self {
        RayCount::Uniform([1, 15])
    }
}

impl RayCount {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            RayCount::Fixed(n) => n >= 1,
            RayCount::Uniform([lo, hi]) => lo >= 1 && lo <= hi,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid ray count {self:?}")))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match *self {
            RayCount::Fixed(n) => n,
            RayCount::Uniform([lo, hi]) => rng.random_range(lo..=hi),
        }
    }
}

/// Sum of `n_rays` reflections with CN(0, 1) gains and departure/arrival
/// azimuths and elevations each uniform on (-π/2, π/2), normalized per
/// realization.
pub fn farfield_channel<R: Rng + ?Sized>(
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    n_rays: usize,
    rng: &mut R,
) -> Result<ChannelMatrix> {
    if n_rays == 0 {
        return Err(Error::InvalidParameter("n_rays must be at least 1".into()));
    }
    let mut h = CMat::zeros(rx.num_elements(), tx.num_elements());
    let scale = (1.0 / n_rays as f64).sqrt();
    for _ in 0..n_rays {
        let beta = complex_normal(rng);
        let aoa = Direction::new(
            rng.random_range(-FRAC_PI_2..FRAC_PI_2),
            rng.random_range(-FRAC_PI_2..FRAC_PI_2),
        );
        let aod = Direction::new(
            rng.random_range(-FRAC_PI_2..FRAC_PI_2),
            rng.random_range(-FRAC_PI_2..FRAC_PI_2),
        );
        let ar = array_response(rx, aoa);
        let at = array_response(tx, aod);
        h += (ar * at.adjoint()) * (beta * scale);
    }
    normalize(&mut h)?;
    Ok(h)
}

/// `sqrt(κ/(κ+1)) H_nf + sqrt(1/(κ+1)) H_ff`, not renormalized.
pub fn rician_mixture(h_nf: &CMat, h_ff: &CMat, kappa: f64) -> Result<ChannelMatrix> {
    if h_nf.shape() != h_ff.shape() {
        return Err(Error::ShapeMismatch(format!(
            "near-field {:?} vs far-field {:?}",
            h_nf.shape(),
            h_ff.shape()
        )));
    }
    if !(kappa >= 0.0) {
        return Err(Error::InvalidParameter(format!("kappa must be >= 0, got {kappa}")));
    }
    if kappa == 0.0 {
        return Ok(h_ff.clone());
    }
    let a = (kappa / (kappa + 1.0)).sqrt();
    let b = (1.0 / (kappa + 1.0)).sqrt();
    Ok(h_nf * Complex64::from(a) + h_ff * Complex64::from(b))
}

fn default_separation() -> f64 {
    10.0
}

/// Generating model for the self-interference channel.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SIChannelModel {
    #[default]
    Rayleigh,
    Spherical {
        #[serde(default = "default_separation")]
        separation_wavelengths: f64,
    },
    FarField {
        #[serde(default)]
        n_rays: RayCount,
    },
    Rician {
        /// Linear power ratio of the near-field part to the far-field part.
        kappa: f64,
        #[serde(default = "default_separation")]
        separation_wavelengths: f64,
        #[serde(default)]
        n_rays: RayCount,
    },
}

impl SIChannelModel {
    pub fn spherical() -> Self {
        SIChannelModel::Spherical {
            separation_wavelengths: default_separation(),
        }
    }

    /// Short name used in result tables.
    pub fn name(&self) -> &'static str {
        match self {
            SIChannelModel::Rayleigh => "rayleigh",
            SIChannelModel::Spherical { .. } => "spherical",
            SIChannelModel::FarField { .. } => "farfield",
            SIChannelModel::Rician { .. } => "rician",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sep_ok = |s: f64| s > 0.0 && s.is_finite();
        match self {
            SIChannelModel::Rayleigh => Ok(()),
            SIChannelModel::Spherical { separation_wavelengths } => {
                if sep_ok(*separation_wavelengths) {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter("separation must be positive".into()))
                }
            }
            SIChannelModel::FarField { n_rays } => n_rays.validate(),
            SIChannelModel::Rician {
                kappa,
                separation_wavelengths,
                n_rays,
            } => {
                if !(*kappa >= 0.0) {
                    return Err(Error::InvalidParameter("kappa must be >= 0".into()));
                }
                if !sep_ok(*separation_wavelengths) {
                    return Err(Error::InvalidParameter("separation must be positive".into()));
                }
                n_rays.validate()
            }
        }
    }

    pub fn draw<R: Rng + ?Sized>(
        &self,
        tx: &ArrayGeometry,
        rx: &ArrayGeometry,
        rng: &mut R,
    ) -> Result<ChannelMatrix> {
        self.validate()?;
        match self {
            SIChannelModel::Rayleigh => Ok(draw_rayleigh(rx.num_elements(), tx.num_elements(), rng)),
            SIChannelModel::Spherical { separation_wavelengths } => {
                spherical_channel(tx, rx, *separation_wavelengths)
            }
            SIChannelModel::FarField { n_rays } => {
                let n = n_rays.sample(rng);
                farfield_channel(tx, rx, n, rng)
            }
            SIChannelModel::Rician {
                kappa,
                separation_wavelengths,
                n_rays,
            } => {
                let nf = spherical_channel(tx, rx, *separation_wavelengths)?;
                let n = n_rays.sample(rng);
                let ff = farfield_channel(tx, rx, n, rng)?;
                rician_mixture(&nf, &ff, *kappa)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorRole {
    /// Bound assumed while designing.
    Train,
    /// Size of the error actually applied during evaluation.
    Eval,
}

/// Frobenius bound on the channel estimation error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelError {
    pub epsilon: f64,
    pub role: ErrorRole,
}

impl ChannelError {
    pub fn new(epsilon: f64, role: ErrorRole) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!("epsilon must be >= 0, got {epsilon}")));
        }
        Ok(Self { epsilon, role })
    }

    /// `epsilon` from a power figure in dB. Negative infinity gives zero.
    pub fn from_db(db: f64, role: ErrorRole) -> Result<Self> {
        Self::new(10f64.powf(db / 20.0), role)
    }
}

/// Error term with Frobenius norm exactly `epsilon` and isotropic direction.
pub fn draw_error<R: Rng + ?Sized>(nr: usize, nt: usize, epsilon: f64, rng: &mut R) -> CMat {
    let g = gaussian_matrix(nr, nt, rng);
    if epsilon == 0.0 {
        return CMat::zeros(nr, nt);
    }
    let n = fro_sq(&g).sqrt();
    g * Complex64::from(epsilon / n)
}

/// `H + sqrt(Nt Nr) Δ`.
pub fn perturb(h: &CMat, delta: &CMat) -> Result<CMat> {
    if h.shape() != delta.shape() {
        return Err(Error::ShapeMismatch(format!(
            "channel {:?} vs error {:?}",
            h.shape(),
            delta.shape()
        )));
    }
    let s = ((h.nrows() * h.ncols()) as f64).sqrt();
    Ok(h + delta * Complex64::from(s))
}

/// Rank-one error of norm `epsilon` that maximizes `‖W^H Δ F‖_F`.
///
/// `f_mat` is `Nt x Mtx`, `w_mat` is `Nr x Mrx`; the result is `Nr x Nt`.
pub fn worst_case_error(f_mat: &CMat, w_mat: &CMat, epsilon: f64) -> Result<CMat> {
    if epsilon == 0.0 {
        return Ok(CMat::zeros(w_mat.nrows(), f_mat.nrows()));
    }
    let (_, u, _) = top_singular(w_mat)
        .ok_or_else(|| Error::Degenerate("receive codebook matrix is zero".into()))?;
    let (_, v, _) = top_singular(f_mat)
        .ok_or_else(|| Error::Degenerate("transmit codebook matrix is zero".into()))?;
    Ok((u * v.adjoint()) * Complex64::from(epsilon))
}

/// Line-of-sight user channel `gain * a(direction)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UserChannel {
    pub entries: CVec,
    pub direction: Direction,
    pub gain: Complex64,
}

impl UserChannel {
    pub fn new(geometry: &ArrayGeometry, direction: Direction, gain: Complex64) -> Self {
        Self {
            entries: array_response(geometry, direction) * gain,
            direction,
            gain,
        }
    }
}

fn uniform_in<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// User placed uniformly over the region's angular extents with a CN(0, 1)
/// gain.
pub fn draw_user_channel<R: Rng + ?Sized>(
    geometry: &ArrayGeometry,
    grid: &DirectionGrid,
    rng: &mut R,
) -> UserChannel {
    let az = uniform_in(grid.az_start, grid.az_stop, rng);
    let el = uniform_in(grid.el_start, grid.el_stop, rng);
    let gain = complex_normal(rng);
    UserChannel::new(geometry, Direction::new(az, el), gain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral_norm;

    fn rank(m: &CMat) -> usize {
        let s = m.clone().svd(false, false).singular_values;
        let tol = s[0] * 1e-9;
        s.iter().filter(|&&x| x > tol).count()
    }

    #[test]
    fn rayleigh_is_deterministic() {
        let a = draw_rayleigh(8, 8, &mut stream_rng(42, 0));
        let b = draw_rayleigh(8, 8, &mut stream_rng(42, 0));
        assert_eq!(a, b);
        let c = draw_rayleigh(8, 8, &mut stream_rng(42, 1));
        assert_ne!(a, c);
    }

    #[test]
    fn rayleigh_unit_power_in_mean() {
        let mut rng = stream_rng(1, 0);
        let n = 2000;
        let mean: f64 = (0..n).map(|_| fro_sq(&draw_rayleigh(8, 8, &mut rng)) / 64.0).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.05, "{mean}");

        let m: f64 = (0..100_000).map(|_| complex_normal(&mut rng).norm_sqr()).sum::<f64>() / 1e5;
        assert!((m - 1.0).abs() < 0.02, "{m}");
    }

    #[test]
    fn single_element_spherical() {
        let g = ArrayGeometry::upa(1, 1);
        for d in [0.3, 1.0, 10.0, 12.37] {
            let h = spherical_channel(&g, &g, d).unwrap();
            assert!((h[(0, 0)].norm() - 1.0).abs() < 1e-12);
            let expect = Complex64::from_polar(1.0, -2.0 * PI * d);
            assert!((h[(0, 0)] - expect).norm() < 1e-9);
        }
    }

    #[test]
    fn spherical_is_normalized() {
        let g = ArrayGeometry::upa(8, 8);
        let h = spherical_channel(&g, &g, 10.0).unwrap();
        assert!((fro_sq(&h) / 4096.0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn spherical_reciprocity_under_mirror() {
        // Swapping roles and mirroring the placement gives the transpose:
        // distances between tx element n and rx element m are symmetric
        // under y -> -y reflection of the pair.
        let tx = ArrayGeometry::upa(2, 3);
        let rx = ArrayGeometry::upa(3, 2);
        let h = spherical_channel(&tx, &rx, 7.5).unwrap();
        let h_swapped = spherical_channel(&rx, &tx, 7.5).unwrap();
        // reflect y: column c -> cols-1-c keeps rows
        let perm = |g: &ArrayGeometry, n: usize| {
            let (c, r) = (n / g.rows, n % g.rows);
            (g.cols - 1 - c) * g.rows + r
        };
        for m in 0..rx.num_elements() {
            for n in 0..tx.num_elements() {
                let a = h[(m, n)];
                let b = h_swapped[(perm(&tx, n), perm(&rx, m))];
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn coincident_elements_rejected() {
        let g = ArrayGeometry::upa(1, 3).with_spacing(1.0);
        // shifting by one element pitch lands receive elements on transmit ones
        assert!(matches!(spherical_channel(&g, &g, 1.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn farfield_rank_and_norm() {
        let g4 = ArrayGeometry::upa(4, 4);
        let mut rng = stream_rng(9, 3);
        let h1 = farfield_channel(&g4, &g4, 1, &mut rng).unwrap();
        assert_eq!(rank(&h1), 1);
        assert!((fro_sq(&h1) / 256.0 - 1.0).abs() < 1e-9);
        let h5 = farfield_channel(&g4, &g4, 5, &mut rng).unwrap();
        assert!(rank(&h5) <= 5);
        assert!((fro_sq(&h5) / 256.0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rician_limits() {
        let g = ArrayGeometry::upa(4, 4);
        let mut rng = stream_rng(2, 0);
        let nf = spherical_channel(&g, &g, 10.0).unwrap();
        let ff = farfield_channel(&g, &g, 3, &mut rng).unwrap();
        assert_eq!(rician_mixture(&nf, &ff, 0.0).unwrap(), ff);
        let big = rician_mixture(&nf, &ff, 1e12).unwrap();
        assert!((big - &nf).iter().all(|z| z.norm() < 1e-5));
        let bad = CMat::zeros(3, 4);
        assert!(rician_mixture(&nf, &bad, 1.0).is_err());
    }

    #[test]
    fn rician_unit_power_in_mean() {
        let g = ArrayGeometry::upa(4, 4);
        let model = SIChannelModel::Rician {
            kappa: 1.0,
            separation_wavelengths: 10.0,
            n_rays: RayCount::Uniform([1, 15]),
        };
        let mut rng = stream_rng(4, 0);
        let mut acc = 0.0;
        for _ in 0..500 {
            let h = model.draw(&g, &g, &mut rng).unwrap();
            let e = fro_sq(&h);
            assert!((0.0..=4.0 * 256.0).contains(&e));
            acc += e;
        }
        let mean = acc / 500.0;
        assert!((mean / 256.0 - 1.0).abs() < 0.1, "{mean}");
    }

    #[test]
    fn error_draws_have_exact_norm() {
        let mut rng = stream_rng(5, 0);
        assert_eq!(draw_error(4, 6, 0.0, &mut rng), CMat::zeros(4, 6));
        for eps in [1e-3, 0.1, 1.0, 3.0] {
            let d = draw_error(8, 8, eps, &mut rng);
            assert!((fro_sq(&d).sqrt() / eps - 1.0).abs() < 1e-12);
            let h = draw_rayleigh(8, 8, &mut rng);
            let hb = perturb(&h, &d).unwrap();
            assert!((fro_sq(&(hb - &h)) / (eps * eps * 64.0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn worst_case_identity() {
        let eye = CMat::identity(5, 5);
        let d = worst_case_error(&eye, &eye, 0.3).unwrap();
        let cross = fro_sq(&(eye.adjoint() * &d * &eye)).sqrt();
        assert!((cross - 0.3).abs() < 1e-12);
        assert_eq!(worst_case_error(&eye, &eye, 0.0).unwrap(), CMat::zeros(5, 5));
        assert!(worst_case_error(&CMat::zeros(5, 5), &eye, 0.3).is_err());
    }

    #[test]
    fn worst_case_attains_product_of_norms() {
        let mut rng = stream_rng(6, 0);
        for _ in 0..20 {
            let f = draw_rayleigh(8, 8, &mut rng);
            let w = draw_rayleigh(8, 8, &mut rng);
            let eps = 0.37;
            let d = worst_case_error(&f, &w, eps).unwrap();
            let cross = fro_sq(&(w.adjoint() * &d * &f)).sqrt();
            let sf = f.clone().svd(false, false).singular_values[0];
            let sw = w.clone().svd(false, false).singular_values[0];
            assert!((cross / (eps * sf * sw) - 1.0).abs() < 1e-9);
            assert!((spectral_norm(&f) / sf - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn user_channel_norm() {
        let g = ArrayGeometry::upa(8, 8);
        let grid = DirectionGrid::default();
        let mut rng = stream_rng(7, 0);
        for _ in 0..50 {
            let u = draw_user_channel(&g, &grid, &mut rng);
            let e: f64 = u.entries.iter().map(|z| z.norm_sqr()).sum();
            assert!((e - u.gain.norm_sqr() * 64.0).abs() < 1e-9 * (1.0 + e));
        }
        let d = Direction::from_degrees(10.0, 5.0);
        let u = UserChannel::new(&g, d, Complex64::new(1.0, 0.0));
        assert_eq!(u.entries, array_response(&g, d));
    }

    #[test]
    fn user_azimuth_is_uniform() {
        let g = ArrayGeometry::upa(2, 2);
        let grid = DirectionGrid::default();
        let mut rng = stream_rng(8, 0);
        let n = 10_000;
        let mut az: Vec<f64> = (0..n)
            .map(|_| draw_user_channel(&g, &grid, &mut rng).direction.azimuth)
            .collect();
        az.sort_by(f64::total_cmp);
        let (lo, hi) = (grid.az_start, grid.az_stop);
        let ks = az
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let cdf = (x - lo) / (hi - lo);
                let a = (i + 1) as f64 / n as f64 - cdf;
                let b = cdf - i as f64 / n as f64;
                a.max(b)
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.02, "{ks}");
    }

    #[test]
    fn model_json_forms() {
        let m: SIChannelModel = serde_json::from_str(r#"{"type":"spherical"}"#).unwrap();
        assert_eq!(m, SIChannelModel::spherical());
        let m: SIChannelModel = serde_json::from_str(r#"{"type":"far_field","n_rays":4}"#).unwrap();
        assert_eq!(m, SIChannelModel::FarField { n_rays: RayCount::Fixed(4) });
        let m: SIChannelModel =
            serde_json::from_str(r#"{"type":"rician","kappa":2.0,"n_rays":[1,15]}"#).unwrap();
        assert_eq!(m.name(), "rician");
    }
}
