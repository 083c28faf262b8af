use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::EpochRecord;

pub const CURVES_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc,lr";

/// Renders training curves as CSV. Floats use 17 significant digits so
/// parsing them back is exact.
pub fn curves_csv(records: &[EpochRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(Error::contract("no epoch records to write"));
    }
    let mut out = String::from(CURVES_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy, r.learning_rate
        )
        .expect("write to string");
    }
    Ok(out)
}

pub fn emit_curves(records: &[EpochRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, curves_csv(records)?).map_err(|e| Error::io(path, e))
}

/// Parses a curves CSV back into records (wall time is not stored).
pub fn parse_curves(text: &str) -> Result<Vec<EpochRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(CURVES_HEADER) {
        return Err(Error::Config("curves CSV: unexpected header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::Config(format!("curves CSV: bad row `{line}`"));
            if f.len() != 6 {
                return Err(bad());
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
            Ok(EpochRecord {
                epoch: f[0].parse().map_err(|_| bad())?,
                train_loss: num(1)?,
                train_accuracy: num(2)?,
                val_loss: num(3)?,
                val_accuracy: num(4)?,
                learning_rate: num(5)?,
                wall_time_s: 0.0,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(epoch: usize) -> EpochRecord {
        EpochRecord {
            epoch,
            train_loss: 0.1 / epoch as f64 + 1e-13,
            train_accuracy: 0.9 + 0.001 * epoch as f64,
            val_loss: std::f64::consts::PI / 10.0,
            val_accuracy: 2.0 / 3.0,
            learning_rate: 1e-5 / (1.0 + 1.99e-7 * 1000.0),
            wall_time_s: 1.5,
        }
    }

    #[test]
    fn line_counts() {
        assert_eq!(curves_csv(&[record(1)]).unwrap().lines().count(), 2);
        let ten: Vec<_> = (1..=10).map(record).collect();
        assert_eq!(curves_csv(&ten).unwrap().lines().count(), 11);
        assert!(curves_csv(&[]).is_err());
    }

    #[test]
    fn round_trip_is_exact() {
        let recs: Vec<_> = (1..=4).map(record).collect();
        let back = parse_curves(&curves_csv(&recs).unwrap()).unwrap();
        for (a, b) in recs.iter().zip(&back) {
            assert_eq!(a.epoch, b.epoch);
            assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
            assert_eq!(a.val_accuracy.to_bits(), b.val_accuracy.to_bits());
            assert_eq!(a.learning_rate.to_bits(), b.learning_rate.to_bits());
        }
    }

    #[test]
    fn losses_carry_nine_significant_digits() {
        let csv = curves_csv(&[record(1)]).unwrap();
        let row = csv.lines().nth(1).unwrap();
        let mantissa = row.split(',').nth(1).unwrap().split('e').next().unwrap();
        assert!(mantissa.chars().filter(char::is_ascii_digit).count() >= 9);
    }
}
