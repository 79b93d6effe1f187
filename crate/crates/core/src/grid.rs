//! Periodic cubic grid on `[-L/2, L/2)^3`.
//!
//! Storage is x-fastest: the linear index of `(i, j, k)` is `i + n*(j + n*k)`,
//! where `i` runs along x. Grid point `i` sits at `-L/2 + i*h`, so the box
//! center `x = 0` is the point with index `n/2` on every axis.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    box_length: f64,
}

impl Grid {
    pub fn new(n: usize, box_length: f64) -> Result<Self> {
        if n < 8 || n % 2 != 0 {
            return Err(LabError::ParameterDomain(format!(
                "grid needs an even number of points per axis >= 8, got {n}"
            )));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(LabError::ParameterDomain(format!(
                "box length must be positive, got {box_length}"
            )));
        }
        Ok(Grid { n, box_length })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.box_length / self.n as f64
    }

    /// Quadrature weight `h^3`.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    #[inline]
    pub fn volume(&self) -> f64 {
        self.box_length.powi(3)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n * (j + self.n * k)
    }

    #[inline]
    pub fn coords_of(&self, idx: usize) -> (usize, usize, usize) {
        let n = self.n;
        (idx % n, (idx / n) % n, idx / (n * n))
    }

    /// Physical coordinate of grid index `i` along one axis.
    #[inline]
    pub fn coordinate(&self, i: usize) -> f64 {
        -0.5 * self.box_length + i as f64 * self.spacing()
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coordinate(i)).collect()
    }

    pub fn point(&self, idx: usize) -> [f64; 3] {
        let (i, j, k) = self.coords_of(idx);
        [self.coordinate(i), self.coordinate(j), self.coordinate(k)]
    }

    /// Signed integer frequency of FFT index `i` (Nyquist maps to `-n/2`).
    #[inline]
    pub fn frequency(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Per-axis wavenumbers `2*pi*f/L` in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let dk = 2.0 * PI / self.box_length;
        (0..self.n).map(|i| dk * self.frequency(i) as f64).collect()
    }

    #[inline]
    pub fn is_nyquist(&self, i: usize) -> bool {
        i == self.n / 2
    }

    pub fn max_wavenumber(&self) -> f64 {
        PI * self.n as f64 / self.box_length
    }

    /// Distance from the box center, with coordinates taken in `[-L/2, L/2)`.
    pub fn radius(&self, idx: usize) -> f64 {
        let p = self.point(idx);
        (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
    }

    /// Minimum-image displacement `x - center` on the periodic box.
    pub fn displacement(&self, idx: usize, center: [f64; 3]) -> [f64; 3] {
        let p = self.point(idx);
        let l = self.box_length;
        let mut d = [0.0; 3];
        for a in 0..3 {
            let mut t = p[a] - center[a];
            t -= l * (t / l).round();
            d[a] = t;
        }
        d
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.n == other.n && self.box_length == other.box_length
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sizes() {
        assert!(Grid::new(6, 1.0).is_err());
        assert!(Grid::new(9, 1.0).is_err());
        assert!(Grid::new(8, 0.0).is_err());
        assert!(Grid::new(8, 1.0).is_ok());
    }

    #[test]
    fn wavenumber_layout_is_symmetric() {
        let g = Grid::new(8, 4.0).unwrap();
        let k = g.wavenumbers();
        let dk = 2.0 * PI / 4.0;
        assert_eq!(k[0], 0.0);
        assert!((k[1] - dk).abs() < 1e-15);
        assert!((k[4] + 4.0 * dk).abs() < 1e-15);
        assert!((k[7] + dk).abs() < 1e-15);
        let kmax = k.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!((kmax - g.max_wavenumber()).abs() < 1e-14);
        assert_eq!(g.spacing(), 0.5);
    }

    #[test]
    fn center_is_origin() {
        let g = Grid::new(16, 10.0).unwrap();
        let c = g.index(8, 8, 8);
        assert_eq!(g.point(c), [0.0, 0.0, 0.0]);
        assert_eq!(g.coords_of(c), (8, 8, 8));
    }
}
