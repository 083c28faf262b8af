//! Synthetic head phantoms: an elliptical "brain" with texture, a dark CSF
//! gap, a bright skull ring and a dimmer scalp ring on a zero background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::volume_io::Volume3D;

/// Geometry of one phantom, in units of the slice half-extent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeadGeometry {
    pub center: [f64; 2],
    /// Brain semi-axes (y, x).
    pub axes: [f64; 2],
    pub angle: f64,
    pub skull_inner: f64,
    pub skull_outer: f64,
    pub scalp_outer: f64,
}

impl HeadGeometry {
    pub fn random(rng: &mut impl Rng) -> Self {
        let ay = rng.random_range(0.45..0.6);
        let ax = rng.random_range(0.4..0.55);
        Self {
            center: [rng.random_range(-0.08..0.08), rng.random_range(-0.08..0.08)],
            axes: [ay, ax],
            angle: rng.random_range(-0.4..0.4),
            skull_inner: 1.12,
            skull_outer: 1.3,
            scalp_outer: 1.45,
        }
    }

    /// Elliptical radius of a point in normalized coordinates; 1 on the
    /// brain boundary.
    fn radius(&self, y: f64, x: f64) -> f64 {
        let (s, c) = self.angle.sin_cos();
        let (dy, dx) = (y - self.center[0], x - self.center[1]);
        let (u, v) = (c * dy - s * dx, s * dy + c * dx);
        ((u / self.axes[0]).powi(2) + (v / self.axes[1]).powi(2)).sqrt()
    }
}

fn render(
    h: usize,
    w: usize,
    geo: &HeadGeometry,
    scale: f64,
    phase: f64,
    noise: &mut dyn FnMut() -> f64,
) -> (Vec<f64>, Vec<f64>) {
    let mut scan = vec![0.0; h * w];
    let mut mask = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let ny = 2.0 * (y as f64 + 0.5) / h as f64 - 1.0;
            let nx = 2.0 * (x as f64 + 0.5) / w as f64 - 1.0;
            let r = geo.radius(ny, nx) / scale;
            let i = y * w + x;
            if r <= 1.0 {
                mask[i] = 1.0;
                let texture = 0.08 * (9.0 * nx + phase).sin() * (7.0 * ny - phase).cos();
                scan[i] = 0.55 + 0.15 * (1.0 - r) + texture + noise();
            } else if r < geo.skull_inner {
                scan[i] = 0.1 + noise().abs();
            } else if r < geo.skull_outer {
                scan[i] = 1.0 + noise();
            } else if r < geo.scalp_outer {
                scan[i] = 0.35 + noise();
            }
        }
    }
    (scan, mask)
}

/// One `h x w` phantom slice and its brain mask.
pub fn phantom_slice(h: usize, w: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geo = HeadGeometry::random(&mut rng);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let normal = Normal::new(0.0, 0.02).expect("finite sigma");
    render(h, w, &geo, 1.0, phase, &mut || normal.sample(&mut rng))
}

/// A `d x h x w` phantom whose brain is an ellipsoid along the first axis.
/// Intensities are scaled to an MRI-like range (roughly 0..400).
pub fn phantom_volume(dims: [usize; 3], seed: u64) -> Result<(Volume3D, Volume3D)> {
    let [d, h, w] = dims;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geo = HeadGeometry::random(&mut rng);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let normal = Normal::new(0.0, 0.02).expect("finite sigma");
    let mut scan = Vec::with_capacity(d * h * w);
    let mut mask = Vec::with_capacity(d * h * w);
    for z in 0..d {
        // cross-section of an ellipsoid spanning 90% of the first axis
        let nz = (2.0 * (z as f64 + 0.5) / d as f64 - 1.0) / 0.9;
        let scale = (1.0 - nz * nz).max(0.0).sqrt();
        let (s, m) = if scale > 0.05 {
            render(h, w, &geo, scale, phase + z as f64 * 0.1, &mut || {
                normal.sample(&mut rng)
            })
        } else {
            (vec![0.0; h * w], vec![0.0; h * w])
        };
        scan.extend(s.into_iter().map(|v| (v * 400.0).max(0.0)));
        mask.extend(m);
    }
    let scan = Volume3D::from_f64(dims, scan)?.with_history(format!("phantom(seed={seed})"));
    let mask = Volume3D::from_f64(dims, mask)?.with_history(format!("phantom mask(seed={seed})"));
    Ok((scan, mask))
}
