use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gradcheck::{check_primitive, check_unet, PRIMITIVES};
use crate::unet::{build_unet, ArchitectureKind, ModelSummary, UNetConfig, UNetModel};

/// Analytic and runtime parameter counts of one architecture next to the
/// published reference.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CountRow {
    pub kind: ArchitectureKind,
    pub analytic: u64,
    pub runtime: u64,
    pub reference: u64,
}

impl CountRow {
    pub fn consistent(&self) -> bool {
        self.analytic == self.runtime
    }

    pub fn matches_reference(&self) -> bool {
        self.consistent() && self.runtime == self.reference
    }

    pub fn delta(&self) -> i64 {
        self.runtime as i64 - self.reference as i64
    }
}

impl fmt::Display for CountRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<8} analytic={} runtime={} reference={}",
            self.kind.name(),
            self.analytic,
            self.runtime,
            self.reference
        )?;
        if self.matches_reference() {
            write!(f, " {} MATCH", self.runtime)
        } else if self.consistent() {
            write!(
                f,
                " DISCREPANCY delta={} (this wiring gives {}; the published figure is {})",
                self.delta(),
                self.runtime,
                self.reference
            )
        } else {
            write!(f, " INCONSISTENT analytic != runtime")
        }
    }
}

/// Builds each architecture with `config` and counts its parameters.
pub fn cmd_count_params(kinds: &[ArchitectureKind], config: &UNetConfig) -> Result<Vec<CountRow>> {
    kinds
        .iter()
        .map(|&kind| {
            let model: UNetModel<f32> = build_unet(kind, config, 0)?;
            Ok(CountRow {
                kind,
                analytic: model.analytic_parameter_count(),
                runtime: model.runtime_parameter_count(),
                reference: kind.reference_count(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckRow {
    pub name: String,
    pub seed: u64,
    pub max_rel_err: f64,
    pub pass: bool,
}

impl fmt::Display for GradcheckRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<18} seed={:<4} max_rel_err={:.3e} {}",
            self.name,
            self.seed,
            self.max_rel_err,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

/// Gradient checks of every primitive and the three toy U-Nets for seeds
/// `seed..seed + count`.
pub fn cmd_gradcheck(seed: u64, count: u64) -> Result<Vec<GradcheckRow>> {
    if count == 0 {
        return Err(Error::Config("gradcheck needs at least one seed".into()));
    }
    let mut rows = Vec::new();
    for s in seed..seed + count {
        for name in PRIMITIVES {
            let r = check_primitive(name, s)?;
            rows.push(GradcheckRow {
                name: name.to_string(),
                seed: s,
                max_rel_err: r.max_rel_err,
                pass: r.pass,
            });
        }
        for kind in ArchitectureKind::ALL {
            let r = check_unet(kind, s)?;
            rows.push(GradcheckRow {
                name: format!("unet_{}", kind.name()),
                seed: s,
                max_rel_err: r.max_rel_err,
                pass: r.pass,
            });
        }
    }
    Ok(rows)
}

pub fn cmd_describe(kind: ArchitectureKind, config: &UNetConfig) -> Result<ModelSummary> {
    let model: UNetModel<f32> = build_unet(kind, config, 0)?;
    Ok(model.describe())
}
