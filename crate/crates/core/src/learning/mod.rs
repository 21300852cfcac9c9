pub mod features;
mod learner;

pub use features::{features, FeatureMap, Weights, FEATURE_DIM, PAIRS};
pub use learner::*;
