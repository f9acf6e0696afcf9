//! Retina-inspired low-light image restoration.
//!
//! The network follows the vertical pathway of the retina: a per-channel
//! Gaussian stage models horizontal-cell feedback, a residual sum feeds the
//! bipolar cells, a difference-of-Gaussians stage models their
//! center-surround response, and a photoreceptor skip connection carries the
//! input straight to the ganglion-cell output. Every channel is processed
//! independently (depthwise), giving 108 learnable parameters in total.
//!
//! Everything here is written from scratch, including the backward pass:
//!
//! - [`image`]: tensors, PNG I/O, channel split/merge
//! - [`kernels`]: Gaussian / DoG construction and depthwise convolution with its adjoint
//! - [`model`]: the network, its bipolar-cell variants and JSON checkpoints
//! - [`training`]: MSE loss, Adam, the training loop and a finite-difference gradient check
//! - [`metrics`]: SSIM, PSNR and test-set evaluation
//! - [`dataio`]: discovery and loading of paired low/normal-light datasets

pub mod dataio;
pub mod error;
pub mod image;
pub mod kernels;
pub mod metrics;
pub mod model;
pub mod real;
pub mod training;

pub use dataio::{discover, discover_dirs, load_pair, ImagePair, PairSource, PairedDataset, PreloadedDataset, Split};
pub use error::{Error, Result};
pub use image::{decode_png, encode_png, merge_channels, split_channels, ImageTensor, Tensor};
pub use kernels::{conv2d_backward, conv2d_same, dog_kernel, gaussian_kernel, GaussianSpec, Kernel2D, PaddingMode};
pub use metrics::{evaluate, psnr, ssim, EvalReport, ImageScore};
pub use model::{
    checkpoint::{load_checkpoint, load_checkpoint_with_metadata, save_checkpoint, CheckpointMetadata},
    variants::{bc_fir, bc_recursive, bc_residual, BcVariant, VariantConfig},
    ForwardTape, ModelGrads, RetinaModel, StageParams, PARAMETER_COUNT,
};
pub use real::Real;
pub use training::{
    adam::{adam_step, AdamConfig, OptimizerState},
    grad_check::{grad_check, GradCheckReport, ParamCheck},
    mse_loss, train, train_with, TrainConfig,
};
