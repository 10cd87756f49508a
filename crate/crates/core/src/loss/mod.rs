//! Permutation-invariant graph reconstruction losses.

mod ground;
mod ot;
mod pigvae;
mod weights;

pub use ground::{ChannelBlock, GroundLoss, GroundLosses, Role};
pub use ot::{lot_at_permutation, lot_fast, lot_gradients, lot_naive, LossGradients};
pub use pigvae::{
    l_align, l_pigvae, padded_entropy, pigvae_plus, softsort_permuter, PIGVAE_PLUS_LAMBDA,
};
pub use weights::LossWeights;
