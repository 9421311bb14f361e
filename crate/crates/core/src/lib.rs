//! Differentiable orthographic gaussian splatting into bird's-eye-view
//! feature grids.
//!
//! Per-pixel head outputs of one or more pinhole cameras are decoded into
//! world-frame 3D gaussians ([`camera`]), rendered top-down into a metric
//! `H × W × C` feature grid ([`raster`]), and scored with segmentation and
//! depth losses ([`losses`]). Every stage has an analytic backward pass, and
//! [`fit`] chains them into a small gradient-descent harness.

pub mod camera;
pub mod fit;
pub mod gradcheck;
pub mod io;
pub mod losses;
pub mod preview;
pub mod quat;
pub mod raster;
pub mod scene;

pub use camera::{decode_camera, CameraCalib, DecodeJacobians, GeometryError, RawHeadGrid};
pub use losses::{LossError, LossParts, LossWeights, WeightMode};
pub use quat::Quat;
pub use raster::{render, render_backward, render_naive, BevGrid, GradientBundle, RasterError, RenderConfig};
pub use scene::{Gaussian, GaussianScene, SceneError};
pub use fit::{fit, FitError, FitProblem, FitReport, Mask, Preset};
pub use io::FormatError;
pub use preview::preview_pca;
pub use nalgebra;
