//! Krylov solvers and small dense helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{LabError, Result};
use crate::field::Field;

/// An orthonormal set of fields (w.r.t. the real pairing), used to project
/// out approximate kernels.
#[derive(Clone, Debug, Default)]
pub struct Deflation {
    basis: Vec<Field>,
}

impl Deflation {
    /// Orthonormalizes `vectors` by modified Gram-Schmidt (applied twice),
    /// dropping numerically dependent ones.
    pub fn new(vectors: &[Field]) -> Self {
        let mut basis: Vec<Field> = Vec::new();
        for v in vectors {
            let mut u = v.clone();
            let n0 = u.norm();
            if n0 == 0.0 {
                continue;
            }
            for _ in 0..2 {
                for b in &basis {
                    let c = b.dot(&u);
                    u.axpy(-c, b);
                }
            }
            let n1 = u.norm();
            if n1 > 1e-10 * n0 {
                u.scale(1.0 / n1);
                basis.push(u);
            }
        }
        Deflation { basis }
    }

    pub fn basis(&self) -> &[Field] {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// `u - sum_b <b, u> b`
    pub fn project(&self, u: &Field) -> Field {
        let mut out = u.clone();
        for b in &self.basis {
            let c = b.dot(&out);
            out.axpy(-c, b);
        }
        out
    }

    pub fn coefficients(&self, u: &Field) -> Vec<f64> {
        self.basis.iter().map(|b| b.dot(u)).collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct KrylovStats {
    pub iterations: usize,
    /// true residual `||b - A x|| / ||b||` at exit
    pub relative_residual: f64,
}

/// Preconditioned MINRES for a symmetric (possibly indefinite) operator with
/// a symmetric positive definite preconditioner `precond ~ A^{-1}`.
pub fn minres(
    op: &dyn Fn(&Field) -> Field,
    precond: &dyn Fn(&Field) -> Field,
    b: &Field,
    tol: f64,
    max_iter: usize,
) -> Result<(Field, KrylovStats)> {
    let bnorm = b.norm();
    let mut x = Field::zeros(b.grid);
    if bnorm == 0.0 {
        return Ok((
            x,
            KrylovStats {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let mut r1 = b.clone();
    let mut y = precond(&r1);
    let beta1_sq = r1.dot(&y);
    if beta1_sq <= 0.0 {
        return Err(LabError::ContractViolation(
            "preconditioner is not positive definite".into(),
        ));
    }
    let beta1 = beta1_sq.sqrt();
    let mut r2 = r1.clone();
    let mut oldb = 0.0;
    let mut beta = beta1;
    let mut dbar = 0.0;
    let mut epsln = 0.0;
    let mut phibar = beta1;
    let mut cs = -1.0;
    let mut sn = 0.0;
    let mut w = Field::zeros(b.grid);
    let mut w2 = Field::zeros(b.grid);
    let mut itn = 0;
    while itn < max_iter {
        itn += 1;
        let s = 1.0 / beta;
        let v = y.scaled(s);
        y = op(&v);
        if itn >= 2 {
            y.axpy(-beta / oldb, &r1);
        }
        let alfa = v.dot(&y);
        y.axpy(-alfa / beta, &r2);
        r1 = std::mem::replace(&mut r2, y);
        y = precond(&r2);
        oldb = beta;
        let bsq = r2.dot(&y);
        if bsq < 0.0 {
            return Err(LabError::ContractViolation(
                "preconditioner is not positive definite".into(),
            ));
        }
        beta = bsq.sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        let w1 = std::mem::replace(&mut w2, w);
        let mut wn = v;
        wn.axpy(-oldeps, &w1);
        wn.axpy(-delta, &w2);
        wn.scale(1.0 / gamma);
        x.axpy(phi, &wn);
        w = wn;
        if phibar <= tol * beta1 * 0.1 || beta == 0.0 {
            break;
        }
    }
    let res = b.sub(&op(&x)).norm() / bnorm;
    let stats = KrylovStats {
        iterations: itn,
        relative_residual: res,
    };
    if res > tol {
        return Err(LabError::solver("MINRES", itn, res));
    }
    Ok((x, stats))
}

/// Gram matrix `G_ij = <a_i, b_j>`.
pub fn gram(a: &[Field], b: &[Field]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| a[i].dot(&b[j]))
}

/// Cosines of the principal angles between `span(a)` and `span(b)`,
/// descending; both sets need not be orthonormal.
pub fn principal_cosines(a: &[Field], b: &[Field]) -> Vec<f64> {
    let qa = Deflation::new(a);
    let qb = Deflation::new(b);
    let m = gram(qa.basis(), qb.basis());
    let mut s: Vec<f64> = m.singular_values().iter().map(|x| x.min(1.0)).collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    s
}

/// Largest principal angle (radians) between two subspaces of equal
/// dimension.
pub fn max_principal_angle(a: &[Field], b: &[Field]) -> f64 {
    let c = principal_cosines(a, b);
    if c.len() < a.len().min(b.len()) || c.is_empty() {
        return std::f64::consts::FRAC_PI_2;
    }
    let cmin = *c.last().unwrap();
    // acos loses accuracy near 1; use the sine via 1 - c^2
    (1.0 - cmin * cmin).max(0.0).sqrt().asin()
}

/// Solves a small dense linear system, failing on singularity.
pub fn solve_dense(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| LabError::ContractViolation("singular dense system".into()))
}

pub fn mat3_solve(a: [[f64; 3]; 3], b: [f64; 3]) -> Result<[f64; 3]> {
    let m = DMatrix::from_fn(3, 3, |i, j| a[i][j]);
    let x = solve_dense(&m, &DVector::from_column_slice(&b))?;
    Ok([x[0], x[1], x[2]])
}

pub fn mat3_inverse(a: [[f64; 3]; 3]) -> Result<[[f64; 3]; 3]> {
    let m = DMatrix::from_fn(3, 3, |i, j| a[i][j]);
    let inv = m
        .try_inverse()
        .ok_or_else(|| LabError::ContractViolation("singular 3x3 matrix".into()))?;
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = inv[(i, j)];
        }
    }
    Ok(out)
}

pub fn mat3_vec(a: &[[f64; 3]; 3], x: &[f64; 3]) -> [f64; 3] {
    let mut y = [0.0; 3];
    for i in 0..3 {
        for j in 0..3 {
            y[i] += a[i][j] * x[j];
        }
    }
    y
}

pub fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm3(a: &[f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn diag_op(d: Vec<f64>) -> impl Fn(&Field) -> Field {
        move |u: &Field| u.mul_real(&d)
    }

    #[test]
    fn minres_solves_indefinite_diagonal_system() {
        let g = Grid::new(8, 4.0).unwrap();
        let d: Vec<f64> = (0..g.len()).map(|i| if i == 7 { -0.5 } else { 1.0 + (i % 13) as f64 }).collect();
        let op = diag_op(d.clone());
        let b = Field::from_fn(g, |p| num_complex::Complex64::new(p[0].cos(), p[1] + 0.1));
        let (x, stats) = minres(&op, &|u: &Field| u.clone(), &b, 1e-12, 500).unwrap();
        assert!(stats.relative_residual < 1e-12);
        for i in 0..g.len() {
            assert!((x.re[i] * d[i] - b.re[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn principal_angle_of_identical_spans_is_zero() {
        let g = Grid::new(8, 4.0).unwrap();
        let a = Field::from_fn(g, |p| num_complex::Complex64::new(p[0], 0.0));
        let b = Field::from_fn(g, |p| num_complex::Complex64::new(0.0, p[1]));
        let mixed = vec![a.add(&b), a.sub(&b.scaled(2.0))];
        assert!(max_principal_angle(&[a.clone(), b.clone()], &mixed) < 1e-7);
        // x and z are not orthogonal on the lattice (the grid is not symmetric
        // about 0), periodic modes are
        let a = Field::from_fn(g, |p| num_complex::Complex64::new((0.5 * std::f64::consts::PI * p[0]).sin(), 0.0));
        let c = Field::from_fn(g, |p| num_complex::Complex64::new((0.5 * std::f64::consts::PI * p[2]).sin(), 0.0));
        assert!((max_principal_angle(&[a.clone()], &[c]) - std::f64::consts::FRAC_PI_2).abs() < 1e-7);
    }
}
