//! Feed-forward ReLU networks trained from scratch.
//!
//! Two heads are supported: a logit classifier (sigmoid output, binary
//! cross-entropy) whose pre-activation is the test statistic, and a linear
//! regressor (mean squared error) for critical-value surfaces.

mod gradcheck;
mod io;
mod loss;
mod network;
mod train;

pub use gradcheck::{gradient_check, gradient_check_network, parameter_gradients};
pub use io::{load, load_expecting, save, MODEL_FORMAT_VERSION};
pub use loss::{bce_loss, mse_loss};
pub use network::{Dense, Head, Network, NetworkSpec, Standardizer};
pub use train::{train, train_with_validation, Dataset, TrainConfig, TrainReport};
