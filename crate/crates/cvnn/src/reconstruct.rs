use rtf_core::dataset::{build_input, Observation};
use rtf_core::eval::Reconstructor;
use rtf_core::FieldGrid;

use crate::data::{input_tensor, tensor_to_field};
use crate::error::Result;
use crate::unet::UNet;

/// A trained network used as a reconstruction method.
#[derive(Debug, Clone)]
pub struct CvnnReconstructor {
    pub model: UNet<f32>,
}

impl CvnnReconstructor {
    pub fn new(model: UNet<f32>) -> Self {
        CvnnReconstructor { model }
    }

    pub fn predict(&self, obs: &Observation<'_>) -> Result<FieldGrid> {
        let x = input_tensor::<f32>(&build_input(&obs.masked, obs.mask)?);
        let y = self.model.infer(&x)?;
        Ok(tensor_to_field(&y, 0, obs.masked.freqs())?.with_room_id(obs.masked.room_id.clone()))
    }
}

impl Reconstructor for CvnnReconstructor {
    fn name(&self) -> &str {
        "cvnn"
    }

    fn reconstruct(&self, obs: &Observation<'_>) -> rtf_core::Result<FieldGrid> {
        self.predict(obs).map_err(|e| match e {
            crate::NetError::Core(e) => e,
            other => rtf_core::Error::Reconstruction(other.to_string()),
        })
    }
}
