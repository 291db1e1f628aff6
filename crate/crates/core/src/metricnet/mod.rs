//! Dense embedding networks with hand-written backprop, triplet losses and
//! an Adam training loop.

mod checkpoint;
mod loss;
mod net;
mod optim;
mod train;
mod triplet;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use loss::{
    triplet_loss_e, triplet_loss_w, FullAttention, LossOutput, PairAttention, Triplet,
};
pub use net::{Activations, Dense, Gradients, MetricNet, NetConfig};
pub use optim::{Adam, LrSchedule};
pub use train::{train, TrainReport};
pub use triplet::{sample_triplets, sample_triplets_with};
