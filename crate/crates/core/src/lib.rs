//! Sliding-window clustering over data streams.
//!
//! * [`sw_median`] maintains an O(1)-approximate k-median (or k-means) of the
//!   last `W` points using suffix summaries and a pruned index sequence.
//! * [`sw_coreset`] maintains a (k, ε)-coreset of the last `W` points on top of
//!   merge-and-reduce over partition-based coresets ([`coreset`],
//!   [`merge_reduce`]).
//! * [`offline`] holds the exact and local-search solvers used both as
//!   subroutines and as verification oracles.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the `*64` aliases
//! below name the common double-precision instantiations.

// `!(x > 0)` style tests are how NaN parameters get rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coreset;
pub mod error;
pub mod io;
pub mod merge_reduce;
pub mod metric;
pub mod offline;
pub mod pls;
pub mod range_space;
pub mod scalar;
pub mod sw_coreset;
pub mod sw_median;
mod util;

pub use error::{Error, Result};
pub use metric::{
    assign, cost, dist, CenterSet, ClusteringAssignment, DistanceMode, Point, WeightedPoint,
    WindowStream,
};
pub use coreset::{CoresetParams, CoresetWithPartition, Technique};
pub use merge_reduce::{MergeReduce, MergeReduceConfig};
pub use scalar::Scalar;
pub use sw_coreset::{SwCoreset, SwCoresetConfig};
pub use sw_median::{SwMedian, SwMedianConfig};

pub type Point64 = Point<f64>;
pub type Point32 = Point<f32>;
pub type WeightedPoint64 = WeightedPoint<f64>;
pub type CenterSet64 = CenterSet<f64>;
pub type Summary64 = pls::Summary<f64>;
pub type Coreset64 = CoresetWithPartition<f64>;
pub type SwMedian64 = SwMedian<f64>;
pub type SwCoreset64 = SwCoreset<f64>;
pub type MergeReduce64 = MergeReduce<f64>;
