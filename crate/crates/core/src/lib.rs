//! Isometry-based adversarial attacks on point-cloud classifiers.
//!
//! * [`geometry`]: rotations, reflections and the spectral-norm penalty.
//! * [`pointcloud`]: clouds, augmentation, synthetic shapes and file formats.
//! * [`bandit`]: Beta-Bernoulli Thompson sampling over an angle grid.
//! * [`model`]: the classifier interface and a small point network.
//! * [`attack`]: the black-box bandit attack and the white-box gradient attack.
//! * [`harness`]: experiment drivers, reports and the command line.

pub mod attack;
pub mod bandit;
pub mod geometry;
pub mod harness;
pub mod model;
pub mod pointcloud;
