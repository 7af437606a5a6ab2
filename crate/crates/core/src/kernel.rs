//! Frequency-wise kernel ridge regression with the Helmholtz (sinc) kernel.
//!
//! For each frequency the observations `y` at positions `r_i` give coefficients
//! `α = (K + λI)⁻¹ y` with `K_ij = sinc(k‖r_i − r_j‖)`, and the field anywhere
//! is `û(q) = Σ_i α_i sinc(k‖q − r_i‖)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::dataset::Observation;
use crate::error::{Error, Result};
use crate::eval::Reconstructor;
use crate::exec::Exec;
use crate::field::FieldGrid;
use crate::modal::{grid_coordinates, grid_point};

pub const DEFAULT_LAMBDA: f64 = 0.01;

/// Diagonal multipliers tried in turn when the factorization fails.
const JITTER_STEPS: [f64; 3] = [1.0, 10.0, 100.0];

/// `sin(kd)/(kd)` with the removable singularity filled in.
pub fn helmholtz_kernel(r1: [f64; 3], r2: [f64; 3], k: f64) -> f64 {
    let d = ((r1[0] - r2[0]).powi(2) + (r1[1] - r2[1]).powi(2) + (r1[2] - r2[2]).powi(2)).sqrt();
    sinc(k * d)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-6 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// One frequency's regression problem.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelProblem {
    pub positions: Vec<[f64; 3]>,
    pub observations: Vec<Complex64>,
    pub wavenumber: f64,
    pub lambda: f64,
}

/// Fitted coefficients plus the regularization that was actually used.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelFit {
    pub alpha: Vec<Complex64>,
    pub lambda_used: f64,
}

impl KernelProblem {
    pub fn new(
        positions: Vec<[f64; 3]>,
        observations: Vec<Complex64>,
        wavenumber: f64,
        lambda: f64,
    ) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidArgument(
                "kernel problem needs at least one position".into(),
            ));
        }
        if positions.len() != observations.len() {
            return Err(Error::shape(positions.len(), observations.len()));
        }
        if !(lambda > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        if !(wavenumber >= 0.0 && wavenumber.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "invalid wavenumber {wavenumber}"
            )));
        }
        Ok(KernelProblem {
            positions,
            observations,
            wavenumber,
            lambda,
        })
    }

    pub fn for_frequency(
        positions: Vec<[f64; 3]>,
        observations: Vec<Complex64>,
        freq_hz: f64,
        c: f64,
        lambda: f64,
    ) -> Result<Self> {
        Self::new(positions, observations, 2.0 * PI * freq_hz / c, lambda)
    }

    /// Gram matrix of the sinc kernel over the observed positions.
    pub fn gram(&self) -> DMatrix<f64> {
        let m = self.positions.len();
        let mut g = DMatrix::zeros(m, m);
        for i in 0..m {
            g[(i, i)] = 1.0;
            for j in 0..i {
                let v = helmholtz_kernel(self.positions[i], self.positions[j], self.wavenumber);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    /// Solves `(K + λI) α = y` by Cholesky, escalating the diagonal to 10λ and
    /// 100λ if the factorization fails.
    pub fn fit(&self) -> Result<KernelFit> {
        let gram = self.gram();
        let m = self.positions.len();
        let rhs = DMatrix::from_fn(m, 2, |i, j| {
            if j == 0 {
                self.observations[i].re
            } else {
                self.observations[i].im
            }
        });
        for step in JITTER_STEPS {
            let lambda = self.lambda * step;
            let mut a = gram.clone();
            for i in 0..m {
                a[(i, i)] += lambda;
            }
            if let Some(chol) = a.cholesky() {
                let sol = chol.solve(&rhs);
                let alpha = (0..m)
                    .map(|i| Complex64::new(sol[(i, 0)], sol[(i, 1)]))
                    .collect();
                return Ok(KernelFit {
                    alpha,
                    lambda_used: lambda,
                });
            }
        }
        let mut a = gram;
        for i in 0..m {
            a[(i, i)] += self.lambda;
        }
        let eig = SymmetricEigen::new(a).eigenvalues;
        let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| {
            (lo.min(e.abs()), hi.max(e.abs()))
        });
        Err(Error::Factorization { condition: hi / lo })
    }

    /// `Σ_i α_i κ(q, r_i)` at every query point.
    pub fn interpolate(&self, fit: &KernelFit, queries: &[[f64; 3]]) -> Vec<Complex64> {
        queries
            .iter()
            .map(|&q| {
                self.positions
                    .iter()
                    .zip(&fit.alpha)
                    .map(|(&r, a)| a * helmholtz_kernel(q, r, self.wavenumber))
                    .sum()
            })
            .collect()
    }
}

/// Reconstructs every grid point at every frequency from the observed points.
pub fn reconstruct_field(obs: &Observation<'_>, lambda: f64, exec: Exec) -> Result<FieldGrid> {
    let room = obs.room;
    let masked = &obs.masked;
    if obs.mask.m() == 0 {
        return Err(Error::InvalidArgument("mask has no observed points".into()));
    }
    let positions: Vec<[f64; 3]> = obs
        .mask
        .observed()
        .iter()
        .map(|&(w, h)| grid_point(room, w, h))
        .collect();
    let queries = grid_coordinates(room);
    let freqs = masked.freqs();
    let columns = exec.try_map(freqs.len(), |k| {
        let y = obs
            .mask
            .observed()
            .iter()
            .map(|&(w, h)| masked.get(w, h, k))
            .collect();
        let problem = KernelProblem::for_frequency(
            positions.clone(),
            y,
            freqs[k],
            room.speed_of_sound,
            lambda,
        )?;
        let fit = problem.fit()?;
        Ok::<_, Error>(problem.interpolate(&fit, &queries))
    })?;
    let nk = freqs.len();
    let mut data = vec![Complex64::new(0.0, 0.0); queries.len() * nk];
    for (k, col) in columns.iter().enumerate() {
        for (cell, v) in col.iter().enumerate() {
            data[cell * nk + k] = *v;
        }
    }
    Ok(
        FieldGrid::from_data(masked.width(), masked.height(), freqs.to_vec(), data)?
            .with_room_id(masked.room_id.clone()),
    )
}

/// The kernel ridge baseline as a [`Reconstructor`].
#[derive(Debug, Clone, Copy)]
pub struct KernelRidge {
    pub lambda: f64,
    pub exec: Exec,
}

impl Default for KernelRidge {
    fn default() -> Self {
        KernelRidge {
            lambda: DEFAULT_LAMBDA,
            exec: Exec::Sequential,
        }
    }
}

impl Reconstructor for KernelRidge {
    fn name(&self) -> &str {
        "kernel"
    }

    fn reconstruct(&self, obs: &Observation<'_>) -> Result<FieldGrid> {
        reconstruct_field(obs, self.lambda, self.exec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::MicMask;
    use crate::modal::{synthesize_field, RoomSpec};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn kernel_values() {
        let p = [1.0, 2.0, 0.5];
        assert_eq!(helmholtz_kernel(p, p, 3.0), 1.0);
        let k = 2.0;
        let d = PI / k;
        assert!(helmholtz_kernel([0.0; 3], [d, 0.0, 0.0], k).abs() < 1e-15);
        let k = 2.0 * PI * 100.0 / 343.0;
        let x = k * 0.5;
        // frozen from an independent scalar evaluation
        assert!((x - 0.915_916_225_536_382_9).abs() < 1e-15);
        let v = helmholtz_kernel([0.0; 3], [0.3, 0.4, 0.0], k);
        assert!((v - 0.865_931_771_612_999_5).abs() < 1e-15);
    }

    #[test]
    fn single_observation_is_scaled_by_one_plus_lambda() {
        let y = c(0.3, -1.2);
        let p = KernelProblem::new(vec![[1.0, 1.0, 1.0]], vec![y], 1.5, 0.01).unwrap();
        let fit = p.fit().unwrap();
        assert!((fit.alpha[0] - y / 1.01).norm() < 1e-15);
    }

    #[test]
    fn two_observations_match_closed_form_inverse() {
        let (k, d, lambda) = (1.7, 0.8, 0.01);
        let y = [c(1.0, 0.5), c(-0.25, 2.0)];
        let p = KernelProblem::new(vec![[0.0; 3], [d, 0.0, 0.0]], y.to_vec(), k, lambda).unwrap();
        let fit = p.fit().unwrap();
        let s = (k * d).sin() / (k * d);
        let a = 1.0 + lambda;
        let det = a * a - s * s;
        let expect = [(y[0] * a - y[1] * s) / det, (y[1] * a - y[0] * s) / det];
        for i in 0..2 {
            assert!((fit.alpha[i] - expect[i]).norm() < 1e-13);
        }
    }

    #[test]
    fn large_lambda_shrinks_alpha() {
        let y = vec![c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 1.0)];
        let norm_y: f64 = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let pos = vec![[0.0; 3], [0.5, 0.0, 0.0], [0.0, 0.7, 0.0]];
        let p = KernelProblem::new(pos, y, 2.0, 1e6).unwrap();
        let fit = p.fit().unwrap();
        let norm_a: f64 = fit.alpha.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!((norm_a - norm_y / 1e6).abs() < 1e-11);
    }

    #[test]
    fn residual_of_the_linear_system_is_small() {
        let pos: Vec<[f64; 3]> = (0..20)
            .map(|i| [0.37 * i as f64 % 4.0, 0.53 * i as f64 % 3.0, 1.2])
            .collect();
        let y: Vec<Complex64> = (0..20)
            .map(|i| c((i as f64).sin(), (i as f64).cos()))
            .collect();
        let p = KernelProblem::new(pos, y.clone(), 3.0, 0.01).unwrap();
        let fit = p.fit().unwrap();
        let g = p.gram();
        let mut res = 0.0;
        for i in 0..20 {
            let mut s = fit.alpha[i] * p.lambda;
            for j in 0..20 {
                s += fit.alpha[j] * g[(i, j)];
            }
            res += (s - y[i]).norm_sqr();
        }
        let norm_y: f64 = y.iter().map(|z| z.norm_sqr()).sum();
        assert!(res.sqrt() <= 1e-8 * norm_y.sqrt());
    }

    #[test]
    fn duplicate_positions_still_factor() {
        let pos = vec![[1.0, 1.0, 1.0], [1.0, 1.0, 1.0]];
        let p = KernelProblem::new(pos, vec![c(1.0, 0.0), c(1.0, 0.0)], 2.0, 1e-14).unwrap();
        assert!(p.fit().is_ok());
    }

    #[test]
    fn zero_alpha_gives_zero_field() {
        let p = KernelProblem::new(vec![[0.0; 3]], vec![c(1.0, 1.0)], 1.0, 0.01).unwrap();
        let fit = KernelFit {
            alpha: vec![c(0.0, 0.0)],
            lambda_used: 0.01,
        };
        assert!(p
            .interpolate(&fit, &[[1.0, 2.0, 3.0], [0.0; 3]])
            .iter()
            .all(|z| z.norm() == 0.0));
    }

    #[test]
    fn single_mic_reconstruction_is_a_sinc_bump() {
        let room = RoomSpec::new([4.0, 3.0, 2.4], 0.8, [1.0, 1.0, 1.0], 1.2, 6, 5).unwrap();
        let field = synthesize_field(&room, &[80.0]).unwrap();
        let mask = MicMask::from_observed(6, 5, &[(2, 3)]).unwrap();
        let obs = Observation::new(&room, &field, &mask).unwrap();
        let rec = reconstruct_field(&obs, 0.01, Exec::Sequential).unwrap();
        let k = 2.0 * PI * 80.0 / 343.0;
        let alpha = field.get(2, 3, 0) / 1.01;
        let mic = grid_point(&room, 2, 3);
        for w in 0..6 {
            for h in 0..5 {
                let expect = alpha * helmholtz_kernel(grid_point(&room, w, h), mic, k);
                assert!((rec.get(w, h, 0) - expect).norm() <= 1e-14 * alpha.norm());
            }
        }
    }

    #[test]
    fn rigid_motion_invariance() {
        let pos: Vec<[f64; 3]> = vec![
            [0.1, 0.2, 1.0],
            [1.3, 0.4, 1.0],
            [0.7, 2.1, 1.0],
            [2.2, 1.7, 1.0],
        ];
        let y: Vec<Complex64> = (0..4).map(|i| c(1.0 + i as f64, -(i as f64))).collect();
        let q = [[0.9, 0.9, 1.0], [2.0, 0.1, 1.0]];
        let (cos, sin) = (0.6f64, 0.8f64);
        let mv = |p: [f64; 3]| {
            [
                cos * p[0] - sin * p[1] + 3.0,
                sin * p[0] + cos * p[1] - 1.0,
                p[2] + 0.5,
            ]
        };
        let a = KernelProblem::new(pos.clone(), y.clone(), 2.5, 0.01).unwrap();
        let b = KernelProblem::new(pos.iter().map(|&p| mv(p)).collect(), y, 2.5, 0.01).unwrap();
        let ua = a.interpolate(&a.fit().unwrap(), &q);
        let ub = b.interpolate(&b.fit().unwrap(), &q.map(mv));
        for (x, z) in ua.iter().zip(&ub) {
            assert!((x - z).norm() < 1e-10);
        }
    }
}
