//! Complex RTF tensors over the measurement grid.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex field of shape `W × H × K`, stored with `w` outermost and the
/// frequency index innermost: `data[(w * H + h) * K + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    width: usize,
    height: usize,
    freqs: Vec<f64>,
    data: Vec<Complex64>,
    pub room_id: String,
}

impl FieldGrid {
    pub fn zeros(width: usize, height: usize, freqs: Vec<f64>) -> Result<Self> {
        let k = freqs.len();
        Self::from_data(
            width,
            height,
            freqs,
            vec![Complex64::new(0.0, 0.0); width * height * k],
        )
    }

    pub fn from_data(
        width: usize,
        height: usize,
        freqs: Vec<f64>,
        data: Vec<Complex64>,
    ) -> Result<Self> {
        if width == 0 || height == 0 || freqs.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "empty field shape {width}x{height}x{}",
                freqs.len()
            )));
        }
        if freqs.windows(2).any(|p| p[1] <= p[0]) || freqs.iter().any(|f| !f.is_finite()) {
            return Err(Error::InvalidArgument(
                "frequencies must be finite and strictly increasing".into(),
            ));
        }
        let expected = width * height * freqs.len();
        if data.len() != expected {
            return Err(Error::shape(expected, data.len()));
        }
        let grid = FieldGrid {
            width,
            height,
            freqs,
            data,
            room_id: String::new(),
        };
        grid.check_finite()?;
        Ok(grid)
    }

    pub fn with_room_id(mut self, id: impl Into<String>) -> Self {
        self.room_id = id.into();
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_freqs(&self) -> usize {
        self.freqs.len()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.freqs.len())
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    #[inline]
    pub fn index(&self, w: usize, h: usize, k: usize) -> usize {
        debug_assert!(w < self.width && h < self.height && k < self.freqs.len());
        (w * self.height + h) * self.freqs.len() + k
    }

    #[inline]
    pub fn get(&self, w: usize, h: usize, k: usize) -> Complex64 {
        self.data[self.index(w, h, k)]
    }

    #[inline]
    pub fn set(&mut self, w: usize, h: usize, k: usize, v: Complex64) {
        let i = self.index(w, h, k);
        self.data[i] = v;
    }

    /// The `W·H` values at frequency index `k`, in grid order.
    pub fn slice_at(&self, k: usize) -> Vec<Complex64> {
        let nk = self.freqs.len();
        self.data.iter().skip(k).step_by(nk).copied().collect()
    }

    pub fn same_shape(&self, other: &FieldGrid) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        Ok(())
    }

    pub fn check_finite(&self) -> Result<()> {
        let nk = self.freqs.len();
        match self
            .data
            .iter()
            .position(|z| !(z.re.is_finite() && z.im.is_finite()))
        {
            None => Ok(()),
            Some(i) => Err(Error::NonFinite {
                w: i / (self.height * nk),
                h: (i / nk) % self.height,
                k: i % nk,
            }),
        }
    }
}

/// `k` frequencies uniformly spaced on `[f_lo, f_hi]`, endpoints included.
pub fn uniform_band(f_lo: f64, f_hi: f64, k: usize) -> Result<Vec<f64>> {
    if !(f_lo > 0.0 && f_lo < f_hi && f_hi.is_finite()) || k == 0 {
        return Err(Error::InvalidArgument(format!(
            "invalid band [{f_lo}, {f_hi}] with K = {k}"
        )));
    }
    if k == 1 {
        return Ok(vec![f_lo]);
    }
    let step = (f_hi - f_lo) / (k - 1) as f64;
    Ok((0..k)
        .map(|i| {
            if i == k - 1 {
                f_hi
            } else {
                f_lo + step * i as f64
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_endpoints_and_count() {
        let f = uniform_band(30.0, 300.0, 40).unwrap();
        assert_eq!(f.len(), 40);
        assert_eq!(f[0], 30.0);
        assert_eq!(f[39], 300.0);
        assert!((f[1] - (30.0 + 270.0 / 39.0)).abs() < 1e-12);
    }

    #[test]
    fn rejects_unsorted_freqs() {
        assert!(FieldGrid::zeros(2, 2, vec![10.0, 10.0]).is_err());
        assert!(FieldGrid::zeros(2, 2, vec![20.0, 10.0]).is_err());
    }

    #[test]
    fn reports_offending_index() {
        let mut data = vec![Complex64::new(1.0, 0.0); 2 * 3 * 2];
        data[(1 * 3 + 2) * 2 + 1] = Complex64::new(f64::NAN, 0.0);
        match FieldGrid::from_data(2, 3, vec![1.0, 2.0], data) {
            Err(Error::NonFinite { w, h, k }) => assert_eq!((w, h, k), (1, 2, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn slice_extracts_one_frequency() {
        let data = (0..8).map(|i| Complex64::new(i as f64, 0.0)).collect();
        let g = FieldGrid::from_data(2, 2, vec![1.0, 2.0], data).unwrap();
        let s: Vec<f64> = g.slice_at(1).iter().map(|z| z.re).collect();
        assert_eq!(s, vec![1.0, 3.0, 5.0, 7.0]);
    }
}
