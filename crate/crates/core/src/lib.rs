//! Binary classification of multichannel sensor time series from dispersion
//! features.
//!
//! The crate covers the full chain: a surrogate generator for labelled
//! intact/broken series ([`dataset`]), windowed dispersion transforms
//! ([`transforms`]), PCA ([`pca`]), the regression-line monitor used as a
//! production baseline ([`baseline`]), four classifiers ([`logreg`],
//! [`dtree`], [`svm`], [`cnn`]) and the metrics that compare them ([`eval`]).
//! [`pipeline`] ties the stages together and backs the `tsclass` binary.

pub mod baseline;
pub mod cnn;
pub mod cv;
pub mod dataset;
pub mod dtree;
pub mod error;
pub mod eval;
pub mod io;
pub mod linalg;
pub mod logreg;
pub mod pca;
pub mod pipeline;
pub mod svm;
pub mod transforms;

pub use dataset::{Label, MultivariateSeries, NoiseLevel, Segment};
pub use error::{Error, Result};
pub use transforms::FeatureMatrix;
