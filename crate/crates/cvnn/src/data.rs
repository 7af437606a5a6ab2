//! Conversion between fields on the grid and network tensors. Grid axis `w`
//! maps to tensor rows and `h` to tensor columns, so both layouts share the
//! same memory order.

use num_complex::Complex64;
use rand::Rng;
use rtf_core::dataset::{apply_mask, build_input, sample_mask, MaskedInput, SampleRecord};
use rtf_core::FieldGrid;

use crate::error::{NetError, Result};
use crate::scalar::Real;
use crate::tensor::{cast, ComplexTensor};

pub fn input_tensor<T: Real>(input: &MaskedInput) -> ComplexTensor<T> {
    ComplexTensor {
        n: 1,
        h: input.width,
        w: input.height,
        c: input.channels,
        data: input.data.iter().map(|&z| cast(z)).collect(),
    }
}

pub fn field_tensor<T: Real>(field: &FieldGrid) -> ComplexTensor<T> {
    ComplexTensor {
        n: 1,
        h: field.width(),
        w: field.height(),
        c: field.n_freqs(),
        data: field.data().iter().map(|&z| cast(z)).collect(),
    }
}

/// Sample `index` of a batch as a field on `freqs`.
pub fn tensor_to_field<T: Real>(t: &ComplexTensor<T>, index: usize, freqs: &[f64]) -> Result<FieldGrid> {
    if t.c != freqs.len() || index >= t.n {
        return Err(NetError::Shape(format!(
            "sample {index} of a {:?} tensor against {} frequencies",
            t.shape(),
            freqs.len()
        )));
    }
    let len = t.h * t.w * t.c;
    let data: Vec<Complex64> = t.data[index * len..(index + 1) * len]
        .iter()
        .map(|&z| cast::<T, f64>(z))
        .collect();
    Ok(FieldGrid::from_data(t.h, t.w, freqs.to_vec(), data)?)
}

/// Concatenates single-sample tensors along the batch axis.
pub fn stack<T: Real>(items: &[&ComplexTensor<T>]) -> Result<ComplexTensor<T>> {
    let first = items
        .first()
        .ok_or_else(|| NetError::Shape("empty batch".into()))?;
    let mut data = Vec::with_capacity(items.iter().map(|t| t.data.len()).sum());
    let mut n = 0;
    for t in items {
        if (t.h, t.w, t.c) != (first.h, first.w, first.c) {
            return Err(NetError::Shape(format!("{:?} vs {:?}", t.shape(), first.shape())));
        }
        data.extend_from_slice(&t.data);
        n += t.n;
    }
    ComplexTensor::from_data(n, first.h, first.w, first.c, data)
}

/// Records prepared as network inputs and targets.
#[derive(Debug, Clone)]
pub struct Samples<T> {
    pub records: Vec<SampleRecord>,
    pub inputs: Vec<ComplexTensor<T>>,
    pub targets: Vec<ComplexTensor<T>>,
}

impl<T: Real> Samples<T> {
    pub fn from_records(records: &[SampleRecord]) -> Result<Self> {
        let mut inputs = Vec::with_capacity(records.len());
        let mut targets = Vec::with_capacity(records.len());
        for r in records {
            if let Some(first) = records.first() {
                if r.field.shape() != first.field.shape() || r.field.freqs() != first.field.freqs() {
                    return Err(NetError::Shape(format!(
                        "record {} has shape {:?}, expected {:?}",
                        r.field.room_id,
                        r.field.shape(),
                        first.field.shape()
                    )));
                }
            }
            inputs.push(Self::input_for(&r.field, &r.mask)?);
            targets.push(field_tensor(&r.field));
        }
        Ok(Samples {
            records: records.to_vec(),
            inputs,
            targets,
        })
    }

    fn input_for(field: &FieldGrid, mask: &rtf_core::dataset::MicMask) -> Result<ComplexTensor<T>> {
        Ok(input_tensor(&build_input(&apply_mask(field, mask)?, mask)?))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Draws a fresh mask for every record, keeping its microphone count.
    pub fn resample_masks<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        for (r, input) in self.records.iter_mut().zip(&mut self.inputs) {
            r.mask = sample_mask(rng, r.mask.m(), r.field.width(), r.field.height())?;
            *input = Self::input_for(&r.field, &r.mask)?;
        }
        Ok(())
    }

    pub fn batch(&self, indices: &[usize]) -> Result<(ComplexTensor<T>, ComplexTensor<T>)> {
        let x: Vec<_> = indices.iter().map(|&i| &self.inputs[i]).collect();
        let y: Vec<_> = indices.iter().map(|&i| &self.targets[i]).collect();
        Ok((stack(&x)?, stack(&y)?))
    }
}

