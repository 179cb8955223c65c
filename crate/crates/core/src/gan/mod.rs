//! Masked seq2seq GAN for assembly token sequences.
//!
//! The generator fills `<MASK>` positions of a function, the discriminator
//! scores each filled token, and the critic supplies the REINFORCE baseline.

mod mask;
mod model;
mod train;

pub use mask::{make_mask, mask_len, MaskError, MaskPhase, MaskVector};
pub use model::{
    apply_mask, shift_right, Critic, Discriminator, GanConfig, Generator, Sampling, SpectreGan, BOS_ID,
    CHECKPOINT_KIND,
};
pub use train::{
    adversarial, adversarial_step, critic_loss, discounted_returns, discriminator_loss, generator_nll, masked_token_probability,
    perplexity, pretrain, pretrain_step, score_function_loss, stratified_categorical, AdvLosses, Example, GanError,
    GanOptimizers, RewardSource,
};

#[cfg(test)]
mod tests;
