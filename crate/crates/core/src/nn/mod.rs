//! Enhancer networks (DNN, RCED, LSTMP with residual variants), the LSTMP
//! discriminator, their building blocks and the checkpoint format.

mod brn;
mod checkpoint;
mod conv;
mod discriminator;
mod dnn;
mod layers;
mod lstm;
mod lstmp;
mod model;
mod rced;
mod seq;

pub use brn::{BatchRenorm, BrnCache, BrnConfig, Mode};
pub use checkpoint::{ModelCheckpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use conv::Conv1d;
pub use discriminator::{Discriminator, DiscriminatorCache, DiscriminatorConfig};
pub use dnn::{Dnn, DnnCache, DnnConfig};
pub use layers::{sigmoid, Activation, Affine};
pub use lstm::{LstmpConfig, LstmpNet, LstmpNetCache, Residual};
pub use lstmp::{LstmpCache, LstmpLayer};
pub use model::{copy_params, ArchConfig, Enhancer, EnhancerCache};
pub use rced::{Rced, RcedCache, RcedConfig};
pub use seq::{splice_context, SeqBatch, DEFAULT_CONTEXT};
