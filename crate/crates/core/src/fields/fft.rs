//! Real-to-complex 3D FFT on an `n^3` grid.
//!
//! Physical arrays are stored x-fastest (`x + n*(y + n*z)`). The spectrum
//! keeps the non-negative half along x: index `kx + nh*(ky + n*kz)` with
//! `nh = n/2 + 1`. The forward transform is normalized by `1/n^3`, so the
//! coefficients are Fourier-series amplitudes.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

pub struct Fft3 {
    n: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("n", &self.n).finish()
    }
}

impl Fft3 {
    pub fn new(n: usize) -> Self {
        let mut real = RealFftPlanner::<f64>::new();
        let mut cplx = FftPlanner::<f64>::new();
        Fft3 {
            n,
            r2c: real.plan_fft_forward(n),
            c2r: real.plan_fft_inverse(n),
            fwd: cplx.plan_fft_forward(n),
            inv: cplx.plan_fft_inverse(n),
        }
    }

    pub fn physical_len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn spectral_len(&self) -> usize {
        (self.n / 2 + 1) * self.n * self.n
    }

    pub fn forward(&self, phys: &[f64]) -> Vec<Complex64> {
        let n = self.n;
        let nh = n / 2 + 1;
        assert_eq!(phys.len(), self.physical_len());
        let mut spec = vec![Complex64::default(); self.spectral_len()];

        spec.par_chunks_mut(nh)
            .zip(phys.par_chunks(n))
            .for_each_init(
                || (vec![0.0; n], self.r2c.make_scratch_vec()),
                |(line, scratch), (out, input)| {
                    line.copy_from_slice(input);
                    self.r2c
                        .process_with_scratch(line, out, scratch)
                        .expect("r2c length mismatch");
                },
            );
        self.axis_y(&mut spec, &self.fwd);
        self.axis_z(&mut spec, &self.fwd);

        let norm = 1.0 / self.physical_len() as f64;
        spec.par_iter_mut().for_each(|c| *c *= norm);
        spec
    }

    pub fn inverse(&self, spec: &[Complex64]) -> Vec<f64> {
        let n = self.n;
        let nh = n / 2 + 1;
        assert_eq!(spec.len(), self.spectral_len());
        let mut work = spec.to_vec();
        self.axis_z(&mut work, &self.inv);
        self.axis_y(&mut work, &self.inv);

        let mut phys = vec![0.0; self.physical_len()];
        phys.par_chunks_mut(n)
            .zip(work.par_chunks_mut(nh))
            .for_each_init(
                || self.c2r.make_scratch_vec(),
                |scratch, (out, line)| {
                    // Hermitian endpoints of a real line; roundoff may leave
                    // a tiny imaginary part after the y/z passes.
                    line[0].im = 0.0;
                    line[nh - 1].im = 0.0;
                    self.c2r
                        .process_with_scratch(line, out, scratch)
                        .expect("c2r length mismatch");
                },
            );
        phys
    }

    // FFT along y inside each z-plane.
    fn axis_y(&self, spec: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let nh = n / 2 + 1;
        spec.par_chunks_mut(nh * n).for_each_init(
            || {
                (
                    vec![Complex64::default(); nh * n],
                    vec![Complex64::default(); plan.get_inplace_scratch_len()],
                )
            },
            |(buf, scratch), plane| {
                for kx in 0..nh {
                    for y in 0..n {
                        buf[kx * n + y] = plane[kx + nh * y];
                    }
                }
                plan.process_with_scratch(buf, scratch);
                for kx in 0..nh {
                    for y in 0..n {
                        plane[kx + nh * y] = buf[kx * n + y];
                    }
                }
            },
        );
    }

    // FFT along z; gathers pencils per ky in parallel, then scatters back.
    fn axis_z(&self, spec: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let nh = n / 2 + 1;
        let plane = nh * n;
        let src: &[Complex64] = spec;
        let pencils: Vec<Vec<Complex64>> = (0..n)
            .into_par_iter()
            .map(|ky| {
                let mut buf = vec![Complex64::default(); nh * n];
                for kx in 0..nh {
                    for z in 0..n {
                        buf[kx * n + z] = src[kx + nh * ky + plane * z];
                    }
                }
                let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
                plan.process_with_scratch(&mut buf, &mut scratch);
                buf
            })
            .collect();
        spec.par_chunks_mut(plane).enumerate().for_each(|(z, dst)| {
            for (ky, buf) in pencils.iter().enumerate() {
                for kx in 0..nh {
                    dst[kx + nh * ky] = buf[kx * n + z];
                }
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_mode_lands_in_expected_bin() {
        let n = 8;
        let fft = Fft3::new(n);
        let two_pi = std::f64::consts::TAU;
        // cos(2x + 3y - z): amplitude 1/2 at k = (2, 3, -1) and its conjugate
        let mut phys = vec![0.0; n * n * n];
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let arg = two_pi * (2 * x + 3 * y) as f64 / n as f64 - two_pi * z as f64 / n as f64;
                    phys[x + n * (y + n * z)] = arg.cos();
                }
            }
        }
        let spec = fft.forward(&phys);
        let nh = n / 2 + 1;
        let idx = 2 + nh * (3 + n * (n - 1));
        assert!((spec[idx] - Complex64::new(0.5, 0.0)).norm() < 1e-14);
        let total: f64 = spec.iter().map(|c| c.norm()).sum();
        assert!((total - 0.5).abs() < 1e-13);
        let back = fft.inverse(&spec);
        for (a, b) in back.iter().zip(&phys) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
