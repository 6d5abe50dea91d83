//! Linear sketches, broadcast protocols, and the reduction between them.

pub mod algebra;
pub mod compiler;
pub mod fourier;
pub mod prg;
pub mod protocol;
pub mod sketch;
pub mod stream;
pub mod zoo;

pub use algebra::{BitVec, CharacterIndex, GroupSpec, GroupVec, SubgroupEnum, SubspaceF2};
pub use compiler::{reduce, ReductionConfig, ReductionReport, Variant};
pub use fourier::{DenseFunction, NormalizedIndicator, Spectrum};
pub use prg::NisanGenerator;
pub use protocol::{BroadcastProtocol, StreamFsm};
pub use sketch::{InputDistribution, RandomizedSketch, Sketch};
pub use stream::{StreamFile, Update};
