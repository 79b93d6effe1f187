//! Complex fields stored as the real pair `(re, im)` on a [`Grid`].
//!
//! The complex structure `J` acts as `J(a, b) = (b, -a)`, i.e. multiplication
//! by `-i`; hence `exp(-theta J)` is multiplication by `exp(i theta)`.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{LabError, Result};
use crate::grid::Grid;

#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        let len = grid.len();
        Field {
            grid,
            re: vec![0.0; len],
            im: vec![0.0; len],
        }
    }

    pub fn from_parts(grid: Grid, re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        let f = Field { grid, re, im };
        f.validate()?;
        Ok(f)
    }

    pub fn real(grid: Grid, re: Vec<f64>) -> Result<Self> {
        let im = vec![0.0; re.len()];
        Self::from_parts(grid, re, im)
    }

    /// Samples `f(x)` at every grid point.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> Complex64) -> Self {
        let mut out = Field::zeros(grid);
        for idx in 0..grid.len() {
            let z = f(grid.point(idx));
            out.re[idx] = z.re;
            out.im[idx] = z.im;
        }
        out
    }

    pub fn from_complex(grid: Grid, data: &[Complex64]) -> Self {
        Field {
            grid,
            re: data.iter().map(|z| z.re).collect(),
            im: data.iter().map(|z| z.im).collect(),
        }
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(&a, &b)| Complex64::new(a, b))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let len = self.grid.len();
        if self.re.len() != len || self.im.len() != len {
            return Err(LabError::InvalidField(format!(
                "component lengths {} / {} do not match n^3 = {len}",
                self.re.len(),
                self.im.len()
            )));
        }
        if let Some(i) = self
            .re
            .iter()
            .chain(&self.im)
            .position(|x| !x.is_finite())
        {
            return Err(LabError::InvalidField(format!(
                "non-finite entry at flat position {i}"
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.re.iter().chain(&self.im).all(|x| x.is_finite())
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(LabError::InvalidField("fields live on different grids".into()))
        }
    }

    /// Real pairing `<u, w> = h^3 sum (u1 w1 + u2 w2)`.
    pub fn dot(&self, other: &Field) -> f64 {
        let s: f64 = self
            .re
            .iter()
            .zip(&other.re)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            + self
                .im
                .iter()
                .zip(&other.im)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        s * self.grid.cell_volume()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(a, b)| (a * a + b * b).sqrt())
            .fold(0.0, f64::max)
    }

    pub fn density(&self) -> Vec<f64> {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(a, b)| a * a + b * b)
            .collect()
    }

    pub fn scale(&mut self, c: f64) {
        for x in self.re.iter_mut().chain(self.im.iter_mut()) {
            *x *= c;
        }
    }

    pub fn scaled(&self, c: f64) -> Field {
        let mut out = self.clone();
        out.scale(c);
        out
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &Field) {
        for (s, v) in self.re.iter_mut().zip(&x.re) {
            *s += a * v;
        }
        for (s, v) in self.im.iter_mut().zip(&x.im) {
            *s += a * v;
        }
    }

    pub fn add(&self, other: &Field) -> Field {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &Field) -> Field {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// `J(a, b) = (b, -a)`.
    pub fn apply_j(&self) -> Field {
        Field {
            grid: self.grid,
            re: self.im.clone(),
            im: self.re.iter().map(|x| -x).collect(),
        }
    }

    /// `exp(-theta J) psi`, i.e. multiplication by `exp(i theta)`.
    pub fn rotate_phase(&self, theta: f64) -> Field {
        let (s, c) = theta.sin_cos();
        let mut out = self.clone();
        for i in 0..self.len() {
            let (a, b) = (self.re[i], self.im[i]);
            out.re[i] = c * a - s * b;
            out.im[i] = s * a + c * b;
        }
        out
    }

    /// Pointwise multiplication by a real array.
    pub fn mul_real(&self, w: &[f64]) -> Field {
        let mut out = self.clone();
        for i in 0..self.len() {
            out.re[i] *= w[i];
            out.im[i] *= w[i];
        }
        out
    }

    /// Pointwise `u1 w1 + u2 w2`.
    pub fn pointwise_dot(&self, other: &Field) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.re[i] * other.re[i] + self.im[i] * other.im[i])
            .collect()
    }

    /// Cyclic lattice shift: `out(x) = self(x - s h)`.
    pub fn lattice_shift(&self, s: [i64; 3]) -> Field {
        let g = self.grid;
        let n = g.n() as i64;
        let mut out = Field::zeros(g);
        for idx in 0..g.len() {
            let (i, j, k) = g.coords_of(idx);
            let src = g.index(
                (i as i64 - s[0]).rem_euclid(n) as usize,
                (j as i64 - s[1]).rem_euclid(n) as usize,
                (k as i64 - s[2]).rem_euclid(n) as usize,
            );
            out.re[idx] = self.re[src];
            out.im[idx] = self.im[src];
        }
        out
    }

    /// Point reflection about the box center: `out(x) = self(-x)`.
    pub fn reflect(&self) -> Field {
        let g = self.grid;
        let n = g.n();
        let mut out = Field::zeros(g);
        for idx in 0..g.len() {
            let (i, j, k) = g.coords_of(idx);
            let src = g.index((n - i) % n, (n - j) % n, (n - k) % n);
            out.re[idx] = self.re[src];
            out.im[idx] = self.im[src];
        }
        out
    }

    pub fn write_prhf(&self, path: &Path, m: f64) -> Result<()> {
        let mut buf = Vec::with_capacity(28 + 16 * self.len());
        write_prhf_to(&mut buf, self, m)?;
        crate::io::write_atomic(path, &buf)
    }

    pub fn read_prhf(path: &Path) -> Result<(Field, f64)> {
        let mut file = std::fs::File::open(path)?;
        read_prhf_from(&mut file)
    }
}

const PRHF_MAGIC: &[u8; 4] = b"PRHF";
const PRHF_VERSION: u32 = 1;

/// Writes the PRHF binary layout: magic, version, `n`, `L`, `m`, then the
/// interleaved `(re, im)` little-endian doubles in x-fastest order.
pub fn write_prhf_to<W: Write>(w: &mut W, field: &Field, m: f64) -> Result<()> {
    w.write_all(PRHF_MAGIC)?;
    w.write_all(&PRHF_VERSION.to_le_bytes())?;
    w.write_all(&(field.grid.n() as u32).to_le_bytes())?;
    w.write_all(&field.grid.box_length().to_le_bytes())?;
    w.write_all(&m.to_le_bytes())?;
    for i in 0..field.len() {
        w.write_all(&field.re[i].to_le_bytes())?;
        w.write_all(&field.im[i].to_le_bytes())?;
    }
    Ok(())
}

pub fn read_prhf_from<R: Read>(r: &mut R) -> Result<(Field, f64)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != PRHF_MAGIC {
        return Err(LabError::Format("missing PRHF magic".into()));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != PRHF_VERSION {
        return Err(LabError::Format(format!("unsupported PRHF version {version}")));
    }
    r.read_exact(&mut b4)?;
    let n = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b8)?;
    let box_length = f64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let m = f64::from_le_bytes(b8);
    let grid = Grid::new(n, box_length)?;
    let len = grid.len();
    let mut raw = vec![0u8; 16 * len];
    r.read_exact(&mut raw)?;
    let mut re = Vec::with_capacity(len);
    let mut im = Vec::with_capacity(len);
    for chunk in raw.chunks_exact(16) {
        re.push(f64::from_le_bytes(chunk[..8].try_into().unwrap()));
        im.push(f64::from_le_bytes(chunk[8..].try_into().unwrap()));
    }
    let mut tail = [0u8; 1];
    if r.read(&mut tail)? != 0 {
        return Err(LabError::Format("trailing bytes after PRHF payload".into()));
    }
    Ok((Field::from_parts(grid, re, im)?, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(grid: Grid) -> Field {
        Field::from_fn(grid, |p| Complex64::new(p[0].sin() + p[2], (p[1] * 0.3).cos()))
    }

    #[test]
    fn prhf_round_trip() {
        let g = Grid::new(8, 5.0).unwrap();
        let f = sample(g);
        let mut buf = Vec::new();
        write_prhf_to(&mut buf, &f, 1.25).unwrap();
        assert_eq!(&buf[..4], b"PRHF");
        assert_eq!(buf.len(), 4 + 4 + 4 + 8 + 8 + 16 * 512);
        let (back, m) = read_prhf_from(&mut buf.as_slice()).unwrap();
        assert_eq!(m, 1.25);
        assert_eq!(back, f);
    }

    #[test]
    fn prhf_rejects_bad_magic_and_truncation() {
        let g = Grid::new(8, 5.0).unwrap();
        let mut buf = Vec::new();
        write_prhf_to(&mut buf, &sample(g), 1.0).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_prhf_from(&mut bad.as_slice()).is_err());
        let short = &buf[..buf.len() - 3];
        assert!(read_prhf_from(&mut &short[..]).is_err());
    }

    #[test]
    fn j_squared_is_minus_identity() {
        let g = Grid::new(8, 5.0).unwrap();
        let f = sample(g);
        let jj = f.apply_j().apply_j();
        assert_eq!(jj, f.scaled(-1.0));
    }

    #[test]
    fn phase_rotation_matches_j() {
        let g = Grid::new(8, 5.0).unwrap();
        let f = sample(g);
        let a = f.rotate_phase(std::f64::consts::FRAC_PI_2);
        let b = f.apply_j().scaled(-1.0);
        for i in 0..f.len() {
            assert!((a.re[i] - b.re[i]).abs() < 1e-15);
            assert!((a.im[i] - b.im[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_fields_are_rejected() {
        let g = Grid::new(8, 5.0).unwrap();
        assert!(Field::real(g, vec![0.0; 10]).is_err());
        let mut re = vec![0.0; 512];
        re[3] = f64::NAN;
        assert!(Field::real(g, re).is_err());
    }
}
