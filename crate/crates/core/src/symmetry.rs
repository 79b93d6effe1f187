//! Exact lattice symmetries about the box center: signed axis permutations,
//! optionally combined with complex conjugation.

use crate::field::Field;
use crate::grid::Grid;

/// `out(x) = [conj] f(P x)` where `(P x)_a = sign_a * x_{perm_a}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatticeSymmetry {
    pub perm: [usize; 3],
    pub flip: [bool; 3],
    pub conj: bool,
}

impl LatticeSymmetry {
    pub const IDENTITY: LatticeSymmetry = LatticeSymmetry {
        perm: [0, 1, 2],
        flip: [false; 3],
        conj: false,
    };

    /// Per-output-axis tables: the source flat index of grid point
    /// `(i, j, k)` is `t[0][i] + t[1][j] + t[2][k]`.
    fn source_tables(&self, grid: &Grid) -> [Vec<usize>; 3] {
        let n = grid.n();
        let strides = [1, n, n * n];
        let mut tables = [vec![0; n], vec![0; n], vec![0; n]];
        for a in 0..3 {
            // source axis `a` reads output axis `perm[a]`
            let b = self.perm[a];
            for c in 0..n {
                let s = if self.flip[a] { (n - c) % n } else { c };
                tables[b][c] = strides[a] * s;
            }
        }
        tables
    }

    /// Adds `weight * (self f)` to `acc`.
    fn accumulate(&self, f: &Field, weight: f64, acc: &mut Field) {
        let g = f.grid;
        let n = g.n();
        let t = self.source_tables(&g);
        let wi = if self.conj { -weight } else { weight };
        let mut idx = 0;
        for k in 0..n {
            for j in 0..n {
                let base = t[1][j] + t[2][k];
                for i in 0..n {
                    let src = base + t[0][i];
                    acc.re[idx] += weight * f.re[src];
                    acc.im[idx] += wi * f.im[src];
                    idx += 1;
                }
            }
        }
    }

    pub fn apply(&self, f: &Field) -> Field {
        let mut out = Field::zeros(f.grid);
        self.accumulate(f, 1.0, &mut out);
        out
    }

    /// Applies the map to a real 3-vector (used for velocities): returns
    /// `P^{-1} w`, the vector whose image under the point map is `w`.
    pub fn map_vector(&self, w: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for a in 0..3 {
            let s = if self.flip[a] { -1.0 } else { 1.0 };
            out[self.perm[a]] = s * w[a];
        }
        out
    }
}

fn permutations() -> [[usize; 3]; 6] {
    [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]]
}

/// All 48 signed permutations of the axes.
pub fn octahedral_group() -> Vec<LatticeSymmetry> {
    let mut out = Vec::with_capacity(48);
    for perm in permutations() {
        for bits in 0..8u8 {
            out.push(LatticeSymmetry {
                perm,
                flip: [bits & 1 != 0, bits & 2 != 0, bits & 4 != 0],
                conj: false,
            });
        }
    }
    out
}

/// Symmetries of a state boosted along coordinate axis `axis`: the dihedral
/// group of the transverse square, times the reflection of the axis
/// combined with conjugation.
pub fn axial_group(axis: usize) -> Vec<LatticeSymmetry> {
    octahedral_group()
        .into_iter()
        .filter(|s| s.perm[axis] == axis)
        .map(|mut s| {
            s.conj = s.flip[axis];
            s
        })
        .collect()
}

/// Inversion combined with conjugation, the symmetry left for a boost in a
/// generic direction.
pub fn inversion_group() -> Vec<LatticeSymmetry> {
    vec![
        LatticeSymmetry::IDENTITY,
        LatticeSymmetry {
            perm: [0, 1, 2],
            flip: [true; 3],
            conj: true,
        },
    ]
}

/// The coordinate axis `v` points along, if any.
pub fn aligned_axis(v: [f64; 3]) -> Option<usize> {
    let nz: Vec<usize> = (0..3).filter(|&a| v[a] != 0.0).collect();
    if nz.len() == 1 {
        Some(nz[0])
    } else {
        None
    }
}

/// The symmetry group enforced for a state boosted with velocity `v`.
pub fn group_for_velocity(v: [f64; 3]) -> Vec<LatticeSymmetry> {
    if v == [0.0; 3] {
        octahedral_group()
    } else if let Some(a) = aligned_axis(v) {
        axial_group(a)
    } else {
        inversion_group()
    }
}

/// Group average, i.e. the projection onto invariant fields.
pub fn symmetrize(f: &Field, group: &[LatticeSymmetry]) -> Field {
    let mut acc = Field::zeros(f.grid);
    let w = 1.0 / group.len() as f64;
    for s in group {
        s.accumulate(f, w, &mut acc);
    }
    acc
}

/// `max_g ||g f - f||_inf / ||f||_inf`.
pub fn symmetry_defect(f: &Field, group: &[LatticeSymmetry]) -> f64 {
    let peak = f.max_abs();
    if peak == 0.0 {
        return 0.0;
    }
    group
        .iter()
        .map(|s| s.apply(f).sub(f).max_abs())
        .fold(0.0, f64::max)
        / peak
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn is_group(g: &[LatticeSymmetry], grid: &Grid) -> bool {
        let f = Field::from_fn(*grid, |p| {
            Complex64::new(p[0] + 2.0 * p[1] * p[1] + 0.3 * p[2], p[0] * p[1] - p[2])
        });
        // closure under composition, tested through the action on a generic field
        let images: Vec<Field> = g.iter().map(|s| s.apply(&f)).collect();
        for a in g {
            for b in g {
                let ab = a.apply(&b.apply(&f));
                if !images.iter().any(|im| *im == ab) {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn groups_are_closed() {
        let grid = Grid::new(8, 8.0).unwrap();
        assert_eq!(octahedral_group().len(), 48);
        assert_eq!(axial_group(2).len(), 16);
        assert!(is_group(&axial_group(2), &grid));
        assert!(is_group(&axial_group(0), &grid));
        assert!(is_group(&inversion_group(), &grid));
    }

    #[test]
    fn symmetrized_fields_are_invariant() {
        let grid = Grid::new(8, 8.0).unwrap();
        let f = Field::from_fn(grid, |p| Complex64::new((p[0] - 0.7).exp() * 0.01, p[2] * p[1]));
        for g in [octahedral_group(), axial_group(1), inversion_group()] {
            let s = symmetrize(&f, &g);
            assert!(symmetry_defect(&s, &g) < 1e-14);
        }
    }

    #[test]
    fn reflection_matches_field_reflect() {
        let grid = Grid::new(8, 8.0).unwrap();
        let f = Field::from_fn(grid, |p| Complex64::new(p[0] + 0.1 * p[1] * p[2], p[2]));
        let inv = LatticeSymmetry {
            perm: [0, 1, 2],
            flip: [true; 3],
            conj: false,
        };
        assert_eq!(inv.apply(&f), f.reflect());
    }
}
