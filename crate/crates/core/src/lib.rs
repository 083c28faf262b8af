//! Skull stripping of T1-weighted MRI with 2D U-Nets.
//!
//! The crate is self-contained: a small rank-4 tensor library with
//! reverse-mode differentiation, the Vanilla/Residual/Dense U-Net builders,
//! Adam training with early stopping, z-normalization and augmentation, and
//! the NIfTI/NPY plumbing the pipeline needs.

pub mod augment;
pub mod autodiff;
pub mod error;
pub mod gradcheck;
pub mod ops;
pub mod phantom;
pub mod pipeline;
pub mod tensor;
pub mod train;
pub mod unet;
pub mod volume_io;

pub use autodiff::{Gradients, Tape, Var};
pub use error::{Error, FormatError, Result};
pub use tensor::num_like::Element;
pub use tensor::{Shape4, Tensor};
pub use train::{fit, EpochRecord, FitReport, SliceDataset, TrainingConfig};
pub use unet::{build_unet, ArchitectureKind, Parameter, UNetConfig, UNetModel};
