//! Event-camera object tracking toolkit: embeds asynchronous event streams
//! into grid tensors, learns edge-aware similarity with a small
//! fully-convolutional Siamese network, and tracks an arbitrary target by
//! correlation-peak localization. Ships with an ESIM-style event simulator,
//! dataset tooling, and standard single-object-tracking metrics.
//!
//! Data-parallel kernels run on rayon when the default `parallel` feature
//! is enabled and fall back to sequential loops otherwise; both paths are
//! bitwise identical.

pub mod config;
pub mod dataset;
pub mod embedding;
pub mod evaluation;
pub mod error;
pub mod events;
pub mod io;
pub mod net;
pub mod simulator;
pub mod tracker;
pub mod trainer;
mod parallel;
pub mod tensor;

pub use error::{Error, Result};
pub use events::{BoundingBox, Event, EventWindow, Polarity, RegionGeometry, SensorGeometry};
pub use tensor::{EventTensor, Real, Tensor3};

/// Cap the worker-thread fan-out of the parallel kernels. Without the
/// `parallel` feature this is a no-op. Returns whether the cap took effect.
pub fn configure_threads(threads: Option<usize>) -> bool {
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = threads {
            return rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .is_ok();
        }
        true
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}
