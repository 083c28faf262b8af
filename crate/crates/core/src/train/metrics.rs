use crate::error::{Error, Result};
use crate::ops::BCE_CLAMP;
use crate::tensor::num_like::Element;

fn same_len<T>(a: &[T], b: &[T], op: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!(
            "{op}: {} predictions vs {} targets",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Contract(format!("{op}: empty input")));
    }
    Ok(())
}

/// Mean binary cross-entropy with probabilities clamped to
/// `[1e-7, 1 - 1e-7]`.
pub fn bce_loss<T: Element>(pred: &[T], target: &[T]) -> Result<f64> {
    same_len(pred, target, "bce_loss")?;
    let (lo, hi) = (BCE_CLAMP, 1.0 - BCE_CLAMP);
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &y)| {
            let p = p.to_f64().clamp(lo, hi);
            let y = y.to_f64();
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / pred.len() as f64)
}

/// Fraction of pixels where `pred >= threshold` agrees with the binary target.
pub fn pixel_accuracy<T: Element>(pred: &[T], target: &[T], threshold: f64) -> Result<f64> {
    same_len(pred, target, "pixel_accuracy")?;
    let hits = pred
        .iter()
        .zip(target)
        .filter(|(&p, &y)| (p.to_f64() >= threshold) == (y.to_f64() >= 0.5))
        .count();
    Ok(hits as f64 / pred.len() as f64)
}

/// `2|P ∩ T| / (|P| + |T|)` for binary masks; 1.0 when both are empty.
pub fn dice_coefficient<T: Element>(pred: &[T], target: &[T]) -> Result<f64> {
    same_len(pred, target, "dice_coefficient")?;
    let (mut inter, mut p_count, mut t_count) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.iter().zip(target) {
        let (p, t) = (p.to_f64() >= 0.5, t.to_f64() >= 0.5);
        p_count += p as usize;
        t_count += t as usize;
        inter += (p && t) as usize;
    }
    if p_count + t_count == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (p_count + t_count) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_values() {
        let half = [0.5f64; 4];
        let y = [1.0, 0.0, 0.0, 1.0];
        assert!((bce_loss(&half, &y).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_loss(&[0.9, 0.1], &[1.0, 0.0]).unwrap() - 0.105_360_515_657_826_3).abs() < 1e-12);
        let perfect = bce_loss(&y, &y).unwrap();
        assert!(perfect <= 1.000_000_1e-7, "{perfect}");
        assert!(bce_loss(&[0.5], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn accuracy_values() {
        let y = [1.0f32, 1.0, 0.0, 0.0];
        assert_eq!(pixel_accuracy(&y, &y, 0.5).unwrap(), 1.0);
        let inv: Vec<f32> = y.iter().map(|v| 1.0 - v).collect();
        assert_eq!(pixel_accuracy(&inv, &y, 0.5).unwrap(), 0.0);
        assert_eq!(pixel_accuracy(&[0.6f32, 0.4, 0.7, 0.2], &y, 0.5).unwrap(), 0.5);
        // threshold is inclusive
        assert_eq!(pixel_accuracy(&[0.5f32], &[1.0], 0.5).unwrap(), 1.0);
    }

    #[test]
    fn dice_values() {
        let t = [1.0f64, 1.0, 0.0, 0.0];
        assert_eq!(dice_coefficient(&t, &t).unwrap(), 1.0);
        assert_eq!(dice_coefficient(&[0.0, 0.0, 1.0, 1.0], &t).unwrap(), 0.0);
        assert_eq!(dice_coefficient(&[1.0, 0.0, 1.0, 0.0], &t).unwrap(), 0.5);
        assert_eq!(dice_coefficient(&[0.0f64; 3], &[0.0; 3]).unwrap(), 1.0);
    }
}
