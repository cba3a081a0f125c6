//! Layers with hand-written forward/backward rules, Adam, and a gradient checker.

pub mod activation;
pub mod batchnorm;
pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod grl;
pub mod layer;
pub mod loss;
pub mod optim;
pub mod pool;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; batch-norm running statistics are updated.
    Train,
    /// Running statistics.
    Eval,
    /// Statistics of the most recent `Train` batch; running statistics are
    /// left alone. Lets a second batch be normalized exactly like the first.
    /// Backward records the gradient with respect to those statistics, and
    /// the next `Train` backward through the same layer passes it on to the
    /// first batch's inputs, so the target pass must be back-propagated first.
    Shared,
}
