use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume_io::Volume3D;

/// Smallest standard deviation accepted by [`znorm`].
pub const MIN_STD: f64 = 1e-12;

/// Voxels used for the normalization statistics.
#[derive(Clone, Copy, Debug)]
pub enum Region<'a> {
    /// Voxels where the mask is at least 0.5 (training, ground truth known).
    Mask(&'a Volume3D),
    /// Voxels with a value above zero (inference, background is zero).
    Nonzero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    Mask,
    Nonzero,
}

impl Region<'_> {
    pub fn kind(&self) -> RegionKind {
        match self {
            Region::Mask(_) => RegionKind::Mask,
            Region::Nonzero => RegionKind::Nonzero,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZNormStats {
    pub mu_brain: f64,
    pub sigma_brain: f64,
    pub region: RegionKind,
    pub count: usize,
}

/// Mean and population standard deviation over the selected voxels.
pub fn region_stats(values: &[f64], select: impl Fn(usize) -> bool) -> Result<(f64, f64, usize)> {
    let (mut n, mut sum) = (0usize, 0.0);
    for (i, &v) in values.iter().enumerate() {
        if select(i) {
            n += 1;
            sum += v;
        }
    }
    if n < 2 {
        return Err(Error::ZeroStd { std: 0.0, count: n });
    }
    let mu = sum / n as f64;
    let var = values
        .iter()
        .enumerate()
        .filter(|&(i, _)| select(i))
        .map(|(_, &v)| (v - mu) * (v - mu))
        .sum::<f64>()
        / n as f64;
    Ok((mu, var.sqrt(), n))
}

/// `(I - mu_brain) / sigma_brain` applied to every voxel, with the
/// statistics taken over `region`.
pub fn znorm(volume: &Volume3D, region: Region<'_>) -> Result<(Volume3D, ZNormStats)> {
    let values = volume.to_f64_vec();
    let (mu, sigma, count) = match region {
        Region::Mask(mask) => {
            if mask.dims() != volume.dims() {
                return Err(Error::contract(format!(
                    "mask dims {:?} differ from volume dims {:?}",
                    mask.dims(),
                    volume.dims()
                )));
            }
            let m = mask.to_f64_vec();
            region_stats(&values, |i| m[i] >= 0.5)?
        }
        Region::Nonzero => region_stats(&values, |i| values[i] > 0.0)?,
    };
    if sigma.is_nan() || sigma <= MIN_STD {
        return Err(Error::ZeroStd { std: sigma, count });
    }
    let out: Vec<f64> = values.iter().map(|&v| (v - mu) / sigma).collect();
    let mut normed = Volume3D::from_f64(volume.dims(), out)?;
    normed.provenance = volume.provenance.clone();
    let normed = normed.with_history(format!("znorm(mu={mu:e}, sigma={sigma:e})"));
    Ok((
        normed,
        ZNormStats {
            mu_brain: mu,
            sigma_brain: sigma,
            region: region.kind(),
            count,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_voxel_example() {
        let v = Volume3D::from_f64([1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let all = Volume3D::from_f64([1, 2, 2], vec![1.0; 4]).unwrap();
        let (out, stats) = znorm(&v, Region::Mask(&all)).unwrap();
        assert_eq!(stats.mu_brain, 2.5);
        assert!((stats.sigma_brain - 1.25f64.sqrt()).abs() < 1e-15);
        let expected = [
            -1.341_640_786_499_874,
            -0.447_213_595_499_958,
            0.447_213_595_499_958,
            1.341_640_786_499_874,
        ];
        for (a, b) in out.to_f64_vec().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_voxel_maps_to_zero() {
        let v = Volume3D::from_f64([1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let (out, _) = znorm(&v, Region::Nonzero).unwrap();
        assert_eq!(out.to_f64_vec()[1], 0.0);
    }

    #[test]
    fn degenerate_regions() {
        let flat = Volume3D::from_f64([2, 2, 2], vec![3.0; 8]).unwrap();
        assert!(matches!(znorm(&flat, Region::Nonzero), Err(Error::ZeroStd { .. })));
        let one = Volume3D::from_f64([1, 1, 3], vec![0.0, 0.0, 5.0]).unwrap();
        assert!(matches!(
            znorm(&one, Region::Nonzero),
            Err(Error::ZeroStd { count: 1, .. })
        ));
    }

    #[test]
    fn nonzero_region_ignores_background() {
        let v = Volume3D::from_f64([1, 1, 5], vec![0.0, 0.0, 2.0, 4.0, 6.0]).unwrap();
        let (out, stats) = znorm(&v, Region::Nonzero).unwrap();
        assert_eq!(stats.count, 3);
        assert_eq!(stats.mu_brain, 4.0);
        assert_eq!(out.to_f64_vec()[3], 0.0);
    }
}
