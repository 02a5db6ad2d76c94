//! Losses, discriminators, the Adam optimizer and the alternating training loop.

mod adam;
mod discriminator;
mod losses;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use losses::{
    dis_loss, dis_loss_value, discriminator_pass, gen_loss, gen_loss_value, generator_pass, ml_loss,
    ml_loss_value, total_losses, DisPass, GenPass, LossWeights,
};
pub use train::{Batch, StepStats, TrainConfig, TrainData, TrainError, TrainStats, Trainer};
