use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume_io::Volume3D;

pub const MAX_ROTATION_DEG: f64 = 10.0;
pub const MAX_SHIFT: f64 = 12.0;
pub const SCALE_RANGE: (f64, f64) = (0.9, 1.1);
pub const GAMMA_RANGE: (f64, f64) = (0.8, 1.25);
pub const MAX_NOISE_SIGMA: f64 = 0.1;
pub const MAX_BIAS_AMPLITUDE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlipAxis {
    /// Reverse row order (y).
    Rows,
    /// Reverse column order (x).
    Cols,
}

/// One step of a transform chain. Spatial steps act on scan and mask,
/// intensity steps on the scan only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Primitive {
    /// In-plane rotation about the slice center, degrees.
    Rotate {
        degrees: f64,
    },
    Translate {
        dy: f64,
        dx: f64,
    },
    /// Isotropic zoom about the slice center.
    Scale {
        factor: f64,
    },
    Flip {
        axis: FlipAxis,
    },
    /// Power law on the min-max normalized intensity range.
    Gamma {
        gamma: f64,
    },
    GaussianNoise {
        sigma: f64,
    },
    /// Multiplicative linear field `1 + amplitude * r`, `r` in `[-1, 1]`
    /// along `direction_deg`.
    BiasGradient {
        amplitude: f64,
        direction_deg: f64,
    },
}

impl Primitive {
    pub fn is_spatial(&self) -> bool {
        matches!(
            self,
            Primitive::Rotate { .. } | Primitive::Translate { .. } | Primitive::Scale { .. } | Primitive::Flip { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        let within = |v: f64, lo: f64, hi: f64| v.is_finite() && v >= lo && v <= hi;
        let ok = match *self {
            Primitive::Rotate { degrees } => within(degrees, -MAX_ROTATION_DEG, MAX_ROTATION_DEG),
            Primitive::Translate { dy, dx } => within(dy, -MAX_SHIFT, MAX_SHIFT) && within(dx, -MAX_SHIFT, MAX_SHIFT),
            Primitive::Scale { factor } => within(factor, SCALE_RANGE.0, SCALE_RANGE.1),
            Primitive::Flip { .. } => true,
            Primitive::Gamma { gamma } => within(gamma, GAMMA_RANGE.0, GAMMA_RANGE.1),
            Primitive::GaussianNoise { sigma } => within(sigma, 0.0, MAX_NOISE_SIGMA),
            Primitive::BiasGradient {
                amplitude,
                direction_deg,
            } => within(amplitude, 0.0, MAX_BIAS_AMPLITUDE) && direction_deg.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("transform parameter out of range: {self:?}")))
        }
    }
}

/// An ordered transform chain plus the seed for its random parts (noise).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub primitives: Vec<Primitive>,
    pub seed: u64,
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..=hi)
}

impl TransformSpec {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn is_identity(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.primitives.iter().try_for_each(Primitive::validate)
    }

    /// Draws a chain: optional column flip, rotation, scaling, translation,
    /// gamma, noise and bias field, each parameter uniform in its range
    /// (gamma log-uniform).
    pub fn random(rng: &mut impl Rng) -> Self {
        let mut primitives = Vec::new();
        if rng.random_bool(0.5) {
            primitives.push(Primitive::Flip { axis: FlipAxis::Cols });
        }
        primitives.push(Primitive::Rotate {
            degrees: uniform(rng, -MAX_ROTATION_DEG, MAX_ROTATION_DEG),
        });
        primitives.push(Primitive::Scale {
            factor: uniform(rng, SCALE_RANGE.0, SCALE_RANGE.1),
        });
        primitives.push(Primitive::Translate {
            dy: uniform(rng, -MAX_SHIFT, MAX_SHIFT),
            dx: uniform(rng, -MAX_SHIFT, MAX_SHIFT),
        });
        primitives.push(Primitive::Gamma {
            gamma: uniform(rng, GAMMA_RANGE.0.ln(), GAMMA_RANGE.1.ln())
                .exp()
                .clamp(GAMMA_RANGE.0, GAMMA_RANGE.1),
        });
        primitives.push(Primitive::GaussianNoise {
            sigma: uniform(rng, 0.0, MAX_NOISE_SIGMA),
        });
        primitives.push(Primitive::BiasGradient {
            amplitude: uniform(rng, 0.0, MAX_BIAS_AMPLITUDE),
            direction_deg: uniform(rng, 0.0, 360.0),
        });
        Self {
            primitives,
            seed: rng.next_u64(),
        }
    }
}

/// Row-major 2x3 map `p' = A p + t` on `(y, x)` coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Affine {
    a: [[f64; 2]; 2],
    t: [f64; 2],
}

impl Affine {
    const IDENTITY: Affine = Affine {
        a: [[1.0, 0.0], [0.0, 1.0]],
        t: [0.0, 0.0],
    };

    /// Linear map `a` about `center`.
    fn about(a: [[f64; 2]; 2], center: [f64; 2]) -> Self {
        let ac = [
            a[0][0] * center[0] + a[0][1] * center[1],
            a[1][0] * center[0] + a[1][1] * center[1],
        ];
        Affine {
            a,
            t: [center[0] - ac[0], center[1] - ac[1]],
        }
    }

    /// `self` applied after `first`.
    fn after(&self, first: &Affine) -> Affine {
        let (a, b) = (&self.a, &first.a);
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        let t = [
            a[0][0] * first.t[0] + a[0][1] * first.t[1] + self.t[0],
            a[1][0] * first.t[0] + a[1][1] * first.t[1] + self.t[1],
        ];
        Affine { a: out, t }
    }

    fn inverse(&self) -> Affine {
        let [[a, b], [c, d]] = self.a;
        let det = a * d - b * c;
        let inv = [[d / det, -b / det], [-c / det, a / det]];
        let t = [
            -(inv[0][0] * self.t[0] + inv[0][1] * self.t[1]),
            -(inv[1][0] * self.t[0] + inv[1][1] * self.t[1]),
        ];
        Affine { a: inv, t }
    }

    fn apply(&self, y: f64, x: f64) -> (f64, f64) {
        (
            self.a[0][0] * y + self.a[0][1] * x + self.t[0],
            self.a[1][0] * y + self.a[1][1] * x + self.t[1],
        )
    }
}

fn primitive_affine(p: &Primitive, center: [f64; 2]) -> Option<Affine> {
    Some(match *p {
        Primitive::Rotate { degrees } => {
            let (s, c) = degrees.to_radians().sin_cos();
            Affine::about([[c, -s], [s, c]], center)
        }
        Primitive::Scale { factor } => Affine::about([[factor, 0.0], [0.0, factor]], center),
        Primitive::Flip { axis: FlipAxis::Rows } => Affine::about([[-1.0, 0.0], [0.0, 1.0]], center),
        Primitive::Flip { axis: FlipAxis::Cols } => Affine::about([[1.0, 0.0], [0.0, -1.0]], center),
        Primitive::Translate { dy, dx } => Affine {
            a: Affine::IDENTITY.a,
            t: [dy, dx],
        },
        _ => return None,
    })
}

fn sample_bilinear(src: &[f64], h: usize, w: usize, y: f64, x: f64) -> f64 {
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = (y - y0, x - x0);
    let at = |yy: f64, xx: f64| -> f64 {
        if yy < 0.0 || xx < 0.0 || yy >= h as f64 || xx >= w as f64 {
            0.0
        } else {
            src[yy as usize * w + xx as usize]
        }
    };
    let mut v = 0.0;
    for (dy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
        for (dx, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
            let wgt = wy * wx;
            if wgt != 0.0 {
                v += wgt * at(y0 + dy, x0 + dx);
            }
        }
    }
    v
}

fn sample_nearest(src: &[f64], h: usize, w: usize, y: f64, x: f64) -> f64 {
    let (yy, xx) = (y.round(), x.round());
    if yy < 0.0 || xx < 0.0 || yy >= h as f64 || xx >= w as f64 {
        0.0
    } else {
        src[yy as usize * w + xx as usize]
    }
}

fn binarize(v: f64) -> f64 {
    if v >= 0.5 {
        1.0
    } else {
        0.0
    }
}

/// Applies `spec` to one `h x w` slice. `rng` drives the noise primitive.
fn transform_slice(
    scan: &[f64],
    mask: &[f64],
    h: usize,
    w: usize,
    spec: &TransformSpec,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<f64>) {
    let center = [(h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0];
    let forward = spec
        .primitives
        .iter()
        .filter_map(|p| primitive_affine(p, center))
        .fold(Affine::IDENTITY, |acc, a| a.after(&acc));

    let (mut out_scan, out_mask) = if forward == Affine::IDENTITY {
        (scan.to_vec(), mask.iter().map(|&v| binarize(v)).collect())
    } else {
        let inv = forward.inverse();
        let mut s = vec![0.0; h * w];
        let mut m = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let (sy, sx) = inv.apply(y as f64, x as f64);
                s[y * w + x] = sample_bilinear(scan, h, w, sy, sx);
                m[y * w + x] = binarize(sample_nearest(mask, h, w, sy, sx));
            }
        }
        (s, m)
    };

    for p in spec.primitives.iter().filter(|p| !p.is_spatial()) {
        match *p {
            Primitive::Gamma { gamma } => {
                let lo = out_scan.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = out_scan.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if hi > lo {
                    for v in &mut out_scan {
                        *v = lo + (hi - lo) * ((*v - lo) / (hi - lo)).powf(gamma);
                    }
                }
            }
            Primitive::GaussianNoise { sigma } => {
                if sigma > 0.0 {
                    let normal = Normal::new(0.0, sigma).expect("finite sigma");
                    for v in &mut out_scan {
                        *v += normal.sample(rng);
                    }
                }
            }
            Primitive::BiasGradient {
                amplitude,
                direction_deg,
            } => {
                let (s, c) = direction_deg.to_radians().sin_cos();
                let reach = c.abs() * center[1] + s.abs() * center[0];
                if reach > 0.0 {
                    for y in 0..h {
                        for x in 0..w {
                            let r = (c * (x as f64 - center[1]) + s * (y as f64 - center[0])) / reach;
                            out_scan[y * w + x] *= 1.0 + amplitude * r;
                        }
                    }
                }
            }
            _ => unreachable!("spatial primitives are filtered out"),
        }
    }
    (out_scan, out_mask)
}

/// Applies `spec` to a single `h x w` slice and its mask (row-major).
pub fn apply_transform(
    scan: &[f64],
    mask: &[f64],
    h: usize,
    w: usize,
    spec: &TransformSpec,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if scan.len() != h * w || mask.len() != h * w {
        return Err(Error::contract(format!(
            "scan/mask have {}/{} values, expected {h}x{w}",
            scan.len(),
            mask.len()
        )));
    }
    spec.validate()?;
    if spec.is_identity() {
        return Ok((scan.to_vec(), mask.to_vec()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok(transform_slice(scan, mask, h, w, spec, &mut rng))
}

/// Applies `spec` to every slice along the first axis. The noise stream
/// continues from slice to slice.
pub fn apply_transform_volume(scan: &Volume3D, mask: &Volume3D, spec: &TransformSpec) -> Result<(Volume3D, Volume3D)> {
    if scan.dims() != mask.dims() {
        return Err(Error::contract(format!(
            "scan dims {:?} differ from mask dims {:?}",
            scan.dims(),
            mask.dims()
        )));
    }
    spec.validate()?;
    let [d, h, w] = scan.dims();
    if spec.is_identity() {
        return Ok((scan.as_f64(), mask.as_f64()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut s_out = Vec::with_capacity(d * h * w);
    let mut m_out = Vec::with_capacity(d * h * w);
    for z in 0..d {
        let (s, m) = transform_slice(&scan.slice_f64(z), &mask.slice_f64(z), h, w, spec, &mut rng);
        s_out.extend(s);
        m_out.extend(m);
    }
    let note = serde_json::to_string(spec).expect("spec serializes");
    let mut s = Volume3D::from_f64([d, h, w], s_out)?;
    s.provenance = scan.provenance.clone();
    let mut m = Volume3D::from_f64([d, h, w], m_out)?;
    m.provenance = mask.provenance.clone();
    Ok((
        s.with_history(format!("transform {note}")),
        m.with_history(format!("transform {note}")),
    ))
}
