//! Interactive selection and segmentation of 3D Gaussian Splat scenes.
//!
//! The crate is organised around a software splat rasterizer ([`raster`])
//! that every higher level operation builds on: manual 2D to 3D projection
//! ([`selection`]), dense view generation ([`views`]), the tracked
//! multi-view segmentation pipeline with user corrections ([`autoseg`]),
//! PCA orientation ([`orientation`]) and the evaluation harness
//! ([`eval`]).

pub mod autoseg;
pub mod camera;
pub mod error;
pub mod eval;
pub mod image_io;
pub mod orientation;
pub mod ply;
pub mod raster;
pub mod scene;
pub mod selection;
pub mod sh;
pub mod synth;
pub mod views;

pub use camera::Camera;
pub use error::{Error, Result};
pub use raster::{render, render_features, render_features_grad, visibility, RenderOutputs};
pub use scene::GaussianScene;
pub use selection::{Mask2D, SelectMode, Selection3D};
