//! Three-dimensional complex FFT on the cubic grid, built from 1-D plans.
//!
//! Forward transforms are unscaled; the inverse divides by `n^3`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct Fft3 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Clone for Fft3 {
    fn clone(&self) -> Self {
        Fft3 {
            n: self.n,
            forward: Arc::clone(&self.forward),
            inverse: Arc::clone(&self.inverse),
        }
    }
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("n", &self.n).finish()
    }
}

impl Fft3 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft3 {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
        let s = 1.0 / data.len() as f64;
        for z in data.iter_mut() {
            *z *= s;
        }
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let nn = n * n;
        assert_eq!(data.len(), nn * n, "buffer does not match grid size");
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        let mut plane = vec![Complex64::default(); nn];

        // x lines are contiguous
        plan.process_with_scratch(data, &mut scratch);

        // y lines: transpose each z-plane so j runs fastest
        for k in 0..n {
            let slab = &mut data[k * nn..(k + 1) * nn];
            for j in 0..n {
                for i in 0..n {
                    plane[i * n + j] = slab[i + n * j];
                }
            }
            plan.process_with_scratch(&mut plane, &mut scratch);
            for j in 0..n {
                for i in 0..n {
                    slab[i + n * j] = plane[i * n + j];
                }
            }
        }

        // z lines: gather one y-row of every plane at a time
        for j in 0..n {
            for k in 0..n {
                let row = &data[j * n + k * nn..j * n + k * nn + n];
                for i in 0..n {
                    plane[i * n + k] = row[i];
                }
            }
            plan.process_with_scratch(&mut plane, &mut scratch);
            for k in 0..n {
                let row = &mut data[j * n + k * nn..j * n + k * nn + n];
                for i in 0..n {
                    row[i] = plane[i * n + k];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn slow_dft(data: &[Complex64], n: usize, sign: f64) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); n * n * n];
        for k3 in 0..n {
            for k2 in 0..n {
                for k1 in 0..n {
                    let mut acc = Complex64::default();
                    for x3 in 0..n {
                        for x2 in 0..n {
                            for x1 in 0..n {
                                let ph = sign * 2.0 * PI * ((k1 * x1 + k2 * x2 + k3 * x3) % n) as f64
                                    / n as f64;
                                acc += data[x1 + n * (x2 + n * x3)] * Complex64::from_polar(1.0, ph);
                            }
                        }
                    }
                    out[k1 + n * (k2 + n * k3)] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn matches_slow_transform() {
        let n = 8;
        let data: Vec<Complex64> = (0..n * n * n)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()))
            .collect();
        let fft = Fft3::new(n);
        let mut fast = data.clone();
        fft.forward(&mut fast);
        let slow = slow_dft(&data, n, -1.0);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-11);
        }
        fft.inverse(&mut fast);
        for (a, b) in fast.iter().zip(&data) {
            assert!((a - b).norm() < 1e-13);
        }
    }
}
