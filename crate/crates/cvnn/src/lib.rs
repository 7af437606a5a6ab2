//! Complex-valued convolutional U-Net for sound-field reconstruction: layers
//! with hand-written backward passes, L1 loss, Adam, a training loop with
//! early stopping and a checkpoint format.
//!
//! Gradients are stored as `∂L/∂Re + j·∂L/∂Im`, which is twice the Wirtinger
//! cotangent `∂L/∂z̄`.

pub mod adam;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod layers;
pub mod loss;
pub mod reconstruct;
pub mod scalar;
pub mod tensor;
pub mod train;
pub mod unet;

pub use adam::{Adam, AdamConfig};
pub use error::{NetError, Result};
pub use layers::Mode;
pub use reconstruct::CvnnReconstructor;
pub use tensor::{ComplexTensor, Param};
pub use train::{StopReason, TrainConfig, Trainer};
pub use unet::{LayerSpec, UNet, UNetSpec};
