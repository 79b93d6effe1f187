//! A table of boosted ground states along one coordinate axis, interpolated
//! to arbitrary `(v, mu)`.
//!
//! Along the axis the profile is a bicubic Hermite interpolant in the
//! signed speed and `mu`, built from the node states and their tangents
//! `d_v phi`, `d_mu phi` (the mixed derivative comes from differences of
//! tangents across nodes). Transverse velocity components enter to first
//! order through the node tangents `d_v1 phi`, `d_v2 phi`, interpolated
//! bilinearly. Tangent vectors returned with a profile are the exact
//! derivatives of this interpolant, so Newton iterations on the manifold
//! stay consistent.

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::field::Field;
use crate::functionals;
use crate::groundstate::{self, FamilyRecord, FamilyScalars, GroundState, SolverOptions, TangentFrame};
use crate::grid::Grid;
use crate::linalg;
use crate::spectral::Spectral;
use crate::symmetry::LatticeSymmetry;
use crate::symplectic::symplectic_form;

#[derive(Clone, Debug)]
struct Node {
    phi: Field,
    /// `d_{v_j} phi` for the three Cartesian components
    dv: [Field; 3],
    dmu: Field,
    /// `d_{v_axis} d_mu phi`
    dvmu: Field,
    scalars: FamilyScalars,
    residual: f64,
}

/// Profile, tangent frame and scalars at one `(v, mu)`, centered at the box
/// center with zero phase.
#[derive(Clone, Debug)]
pub struct Profile {
    pub v: [f64; 3],
    pub mu: f64,
    pub phi: Field,
    /// `(d_x1, d_x2, d_x3, d_v1, d_v2, d_v3, J, d_mu) phi`
    pub frame: Vec<Field>,
}

#[derive(Clone, Debug)]
pub struct Family {
    grid: Grid,
    m: f64,
    axis: usize,
    /// signed speeds along `axis`, ascending and uniformly spaced
    speeds: Vec<f64>,
    /// ascending, uniformly spaced
    mus: Vec<f64>,
    nodes: Vec<Node>,
    records: Vec<FamilyRecord>,
}

fn hermite(t: f64) -> ([f64; 2], [f64; 2], [f64; 2], [f64; 2]) {
    // value basis H0, H1 and slope basis K0, K1 with their t-derivatives
    let t2 = t * t;
    let t3 = t2 * t;
    let h = [2.0 * t3 - 3.0 * t2 + 1.0, -2.0 * t3 + 3.0 * t2];
    let k = [t3 - 2.0 * t2 + t, t3 - t2];
    let dh = [6.0 * t2 - 6.0 * t, -6.0 * t2 + 6.0 * t];
    let dk = [3.0 * t2 - 4.0 * t + 1.0, 3.0 * t2 - 2.0 * t];
    (h, k, dh, dk)
}

fn uniform(nodes: &[f64], what: &str) -> Result<f64> {
    if nodes.len() < 2 {
        return Err(LabError::ParameterDomain(format!("{what} table needs at least two nodes")));
    }
    let d = nodes[1] - nodes[0];
    if !(d > 0.0) || nodes.windows(2).any(|w| ((w[1] - w[0]) - d).abs() > 1e-9 * d.abs().max(1.0)) {
        return Err(LabError::ParameterDomain(format!("{what} nodes must be ascending and uniformly spaced")));
    }
    Ok(d)
}

/// Mirror `x_axis -> -x_axis`, mapping the state at `+v` to the state at `-v`.
fn mirror(axis: usize) -> LatticeSymmetry {
    let mut flip = [false; 3];
    flip[axis] = true;
    LatticeSymmetry {
        perm: [0, 1, 2],
        flip,
        conj: false,
    }
}

impl Family {
    /// Solves ground states and tangent frames at the non-negative `speeds`
    /// (which must start at 0) times `mus`, and fills in negative speeds by
    /// reflection.
    pub fn build(
        sp: &Spectral,
        axis: usize,
        speeds: &[f64],
        mus: &[f64],
        m: f64,
        opts: &SolverOptions,
    ) -> Result<Family> {
        if axis > 2 {
            return Err(LabError::ParameterDomain(format!("axis {axis} is not 0, 1 or 2")));
        }
        if speeds.first() != Some(&0.0) {
            return Err(LabError::ParameterDomain("speed nodes must start at 0".into()));
        }
        uniform(speeds, "speed")?;
        uniform(mus, "mu")?;
        // continuation in the speed at fixed mu, warm-started along mu at rest
        let mut columns: Vec<Vec<(GroundState, TangentFrame, FamilyScalars)>> = Vec::new();
        let mut rest: Option<GroundState> = None;
        for &mu in mus {
            let base = match &rest {
                Some(prev) => groundstate::refine(sp, &prev.field, [0.0; 3], mu, m, opts)?,
                None => groundstate::solve_unboosted(sp, mu, m, opts)?,
            };
            let mut col = Vec::with_capacity(speeds.len());
            let mut prev = base.clone();
            for &s in speeds {
                let mut v = [0.0; 3];
                v[axis] = s;
                let gs = if s == 0.0 { base.clone() } else { groundstate::solve_boosted(sp, v, mu, m, Some(&prev), opts)? };
                let frame = groundstate::tangent_frame(sp, &gs, opts)?;
                let scalars = groundstate::family_scalars(sp, &gs, &frame)?;
                log::info!(
                    "family node v={s:.3} mu={mu:.3}: residual {:.2e}, N {:.6}, n_mu {:.4}",
                    gs.residual,
                    scalars.n,
                    scalars.n_mu
                );
                prev = gs.clone();
                col.push((gs, frame, scalars));
            }
            rest = Some(base);
            columns.push(col);
        }
        // states[speed][mu]
        let mut states: Vec<Vec<_>> = (0..speeds.len()).map(|_| Vec::with_capacity(mus.len())).collect();
        for col in columns {
            for (i, entry) in col.into_iter().enumerate() {
                states[i].push(entry);
            }
        }
        Self::assemble(sp.grid(), axis, speeds, mus, m, states)
    }

    /// Builds the table from precomputed node data at non-negative speeds.
    pub fn assemble(
        grid: Grid,
        axis: usize,
        speeds: &[f64],
        mus: &[f64],
        m: f64,
        states: Vec<Vec<(GroundState, TangentFrame, FamilyScalars)>>,
    ) -> Result<Family> {
        let ds = uniform(speeds, "speed")?;
        let dmu = uniform(mus, "mu")?;
        let ns = speeds.len();
        let nm = mus.len();
        let refl = mirror(axis);
        let mut signed: Vec<f64> = Vec::with_capacity(2 * ns - 1);
        for i in (1..ns).rev() {
            signed.push(-speeds[i]);
        }
        signed.extend_from_slice(speeds);
        // node data in signed order, before the mixed derivative is known
        let mut nodes: Vec<Node> = Vec::with_capacity(signed.len() * nm);
        let mut records = Vec::new();
        for &s in &signed {
            let i = speeds.iter().position(|&x| (x - s.abs()).abs() < 1e-12).unwrap();
            for j in 0..nm {
                let (gs, frame, sc) = &states[i][j];
                records.push(FamilyRecord::new(gs, sc));
                let node = if s >= 0.0 {
                    Node {
                        phi: gs.field.clone(),
                        dv: [frame.dv(0).clone(), frame.dv(1).clone(), frame.dv(2).clone()],
                        dmu: frame.dmu().clone(),
                        dvmu: Field::zeros(grid),
                        scalars: sc.clone(),
                        residual: gs.residual,
                    }
                } else {
                    // phi_{-v}(x) = phi_v(R x); d_{v_axis} changes sign
                    let mut dv = [refl.apply(frame.dv(0)), refl.apply(frame.dv(1)), refl.apply(frame.dv(2))];
                    dv[axis].scale(-1.0);
                    let mut sc = sc.clone();
                    sc.n_v[axis] = -sc.n_v[axis];
                    for k in 0..3 {
                        if k != axis {
                            sc.tau[axis][k] = -sc.tau[axis][k];
                            sc.tau[k][axis] = -sc.tau[k][axis];
                            sc.tau_hessian[axis][k] = -sc.tau_hessian[axis][k];
                            sc.tau_hessian[k][axis] = -sc.tau_hessian[k][axis];
                            sc.gamma[axis][k] = -sc.gamma[axis][k];
                            sc.gamma[k][axis] = -sc.gamma[k][axis];
                        }
                    }
                    Node {
                        phi: refl.apply(&gs.field),
                        dv,
                        dmu: refl.apply(frame.dmu()),
                        dvmu: Field::zeros(grid),
                        scalars: sc,
                        residual: gs.residual,
                    }
                };
                nodes.push(node);
            }
        }
        let nsig = signed.len();
        // mixed derivative: average of the mu-difference of d_v phi and the
        // v-difference of d_mu phi
        let diff = |a: &Field, b: &Field, h: f64| {
            let mut d = a.sub(b);
            d.scale(1.0 / h);
            d
        };
        let mut mixed = Vec::with_capacity(nodes.len());
        for i in 0..nsig {
            for j in 0..nm {
                let at = |ii: usize, jj: usize| &nodes[ii * nm + jj];
                let (jl, jr) = (j.saturating_sub(1), (j + 1).min(nm - 1));
                let (il, ir) = (i.saturating_sub(1), (i + 1).min(nsig - 1));
                let a = diff(&at(i, jr).dv[axis], &at(i, jl).dv[axis], (jr - jl) as f64 * dmu);
                let b = diff(&at(ir, j).dmu, &at(il, j).dmu, (ir - il) as f64 * ds);
                let mut c = a.add(&b);
                c.scale(0.5);
                mixed.push(c);
            }
        }
        for (node, c) in nodes.iter_mut().zip(mixed) {
            node.dvmu = c;
        }
        Ok(Family {
            grid,
            m,
            axis,
            speeds: signed,
            mus: mus.to_vec(),
            nodes,
            records,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn axis(&self) -> usize {
        self.axis
    }

    /// Signed speed nodes along the axis.
    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    pub fn mus(&self) -> &[f64] {
        &self.mus
    }

    /// One record per solved node (negative speeds repeat their mirror).
    pub fn records(&self) -> &[FamilyRecord] {
        &self.records
    }

    pub fn max_node_residual(&self) -> f64 {
        self.nodes.iter().map(|n| n.residual).fold(0.0, f64::max)
    }

    /// Scalars stored at node `(i, j)` of the signed table.
    pub fn node_scalars(&self, i: usize, j: usize) -> &FamilyScalars {
        &self.nodes[i * self.mus.len() + j].scalars
    }

    /// Ground state stored at node `(i, j)` of the signed table.
    pub fn node_state(&self, i: usize, j: usize) -> &Field {
        &self.nodes[i * self.mus.len() + j].phi
    }

    fn split(&self, v: [f64; 3]) -> (f64, [usize; 2]) {
        let a = self.axis;
        let t = [(a + 1) % 3, (a + 2) % 3];
        (v[a], t)
    }

    pub fn contains(&self, v: [f64; 3], mu: f64) -> bool {
        let (s, _) = self.split(v);
        let eps = 1e-12;
        s >= self.speeds[0] - eps
            && s <= *self.speeds.last().unwrap() + eps
            && mu >= self.mus[0] - eps
            && mu <= *self.mus.last().unwrap() + eps
    }

    fn locate(&self, s: f64, mu: f64) -> Result<(usize, usize, f64, f64)> {
        if !(s.is_finite() && mu.is_finite()) || !self.contains(self.axis_vector(s), mu) {
            return Err(LabError::DomainExit(format!(
                "(v_axis, mu) = ({s}, {mu}) outside [{}, {}] x [{}, {}]",
                self.speeds[0],
                self.speeds.last().unwrap(),
                self.mus[0],
                self.mus.last().unwrap()
            )));
        }
        let cell = |nodes: &[f64], x: f64| {
            let h = nodes[1] - nodes[0];
            let i = (((x - nodes[0]) / h).floor().max(0.0) as usize).min(nodes.len() - 2);
            (i, ((x - nodes[i]) / h).clamp(0.0, 1.0))
        };
        let (i, t) = cell(&self.speeds, s);
        let (j, u) = cell(&self.mus, mu);
        Ok((i, j, t, u))
    }

    fn axis_vector(&self, s: f64) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self.axis] = s;
        v
    }

    /// Interpolated profile and its exact tangent frame.
    pub fn profile(&self, sp: &Spectral, v: [f64; 3], mu: f64) -> Result<Profile> {
        if !sp.grid().same_as(&self.grid) {
            return Err(LabError::InvalidField("spectral context and family use different grids".into()));
        }
        let (s, tr) = self.split(v);
        let (i, j, t, u) = self.locate(s, mu)?;
        let nm = self.mus.len();
        let ds = self.speeds[1] - self.speeds[0];
        let dm = self.mus[1] - self.mus[0];
        let (ht, kt, dht, dkt) = hermite(t);
        let (hu, ku, dhu, dku) = hermite(u);
        let a = self.axis;
        let g = self.grid;
        let mut phi = Field::zeros(g);
        let mut d_s = Field::zeros(g);
        let mut d_mu = Field::zeros(g);
        for p in 0..2 {
            for q in 0..2 {
                let node = &self.nodes[(i + p) * nm + (j + q)];
                let terms: [(&Field, f64, f64, f64); 4] = [
                    (&node.phi, ht[p] * hu[q], dht[p] * hu[q] / ds, ht[p] * dhu[q] / dm),
                    (&node.dv[a], ds * kt[p] * hu[q], dkt[p] * hu[q], ds * kt[p] * dhu[q] / dm),
                    (&node.dmu, dm * ht[p] * ku[q], dm * dht[p] * ku[q] / ds, ht[p] * dku[q]),
                    (&node.dvmu, ds * dm * kt[p] * ku[q], dm * dkt[p] * ku[q], ds * kt[p] * dku[q]),
                ];
                for (f, c0, cs, cm) in terms {
                    phi.axpy(c0, f);
                    d_s.axpy(cs, f);
                    d_mu.axpy(cm, f);
                }
            }
        }
        // transverse directions, bilinear in (s, mu), entering linearly in v_perp
        let mut transverse = [Field::zeros(g), Field::zeros(g)];
        let bl = [[(1.0 - t) * (1.0 - u), (1.0 - t) * u], [t * (1.0 - u), t * u]];
        let bl_s = [[-(1.0 - u) / ds, -u / ds], [(1.0 - u) / ds, u / ds]];
        let bl_m = [[-(1.0 - t) / dm, (1.0 - t) / dm], [-t / dm, t / dm]];
        for (slot, &c) in tr.iter().enumerate() {
            for p in 0..2 {
                for q in 0..2 {
                    let node = &self.nodes[(i + p) * nm + (j + q)];
                    transverse[slot].axpy(bl[p][q], &node.dv[c]);
                    if v[c] != 0.0 {
                        phi.axpy(v[c] * bl[p][q], &node.dv[c]);
                        d_s.axpy(v[c] * bl_s[p][q], &node.dv[c]);
                        d_mu.axpy(v[c] * bl_m[p][q], &node.dv[c]);
                    }
                }
            }
        }
        let grad = sp.gradient(&phi);
        let mut dv: [Field; 3] = [Field::zeros(g), Field::zeros(g), Field::zeros(g)];
        dv[a] = d_s;
        let [t0, t1] = transverse;
        dv[tr[0]] = t0;
        dv[tr[1]] = t1;
        let jphi = phi.apply_j();
        let [g0, g1, g2] = grad;
        let [v0, v1, v2] = dv;
        let frame = vec![g0, g1, g2, v0, v1, v2, jphi, d_mu];
        Ok(Profile { v, mu, phi, frame })
    }

    /// Family scalars of the interpolated profile, computed from its frame.
    pub fn scalars(&self, sp: &Spectral, v: [f64; 3], mu: f64) -> Result<FamilyScalars> {
        let p = self.profile(sp, v, mu)?;
        scalars_of_profile(&p)
    }

    /// Bicubic interpolation of stored node scalars for a velocity along the
    /// axis, rotated to the direction of `v`. Much cheaper than
    /// [`Family::scalars`]; used by the effective equations.
    pub fn table_scalars(&self, v: [f64; 3], mu: f64) -> Result<FamilyScalars> {
        let speed = linalg::norm3(&v);
        let a = self.axis;
        let (i, j, t, u) = self.locate(speed, mu)?;
        let nm = self.mus.len();
        let ns = self.speeds.len();
        let ds = self.speeds[1] - self.speeds[0];
        let dm = self.mus[1] - self.mus[0];
        let (ht, kt, _, _) = hermite(t);
        let (hu, ku, _, _) = hermite(u);
        // derivative estimates by differences over the table
        let value = |ii: usize, jj: usize, f: &dyn Fn(&FamilyScalars) -> f64| f(&self.nodes[ii * nm + jj].scalars);
        let interp = |f: &dyn Fn(&FamilyScalars) -> f64| -> f64 {
            let mut acc = 0.0;
            for p in 0..2 {
                for q in 0..2 {
                    let (ii, jj) = (i + p, j + q);
                    let (il, ir) = (ii.saturating_sub(1), (ii + 1).min(ns - 1));
                    let (jl, jr) = (jj.saturating_sub(1), (jj + 1).min(nm - 1));
                    let fv = (value(ir, jj, f) - value(il, jj, f)) / ((ir - il) as f64 * ds);
                    let fm = (value(ii, jr, f) - value(ii, jl, f)) / ((jr - jl) as f64 * dm);
                    let fvm = (value(ir, jr, f) - value(ir, jl, f) - value(il, jr, f) + value(il, jl, f))
                        / ((ir - il) as f64 * ds * (jr - jl) as f64 * dm);
                    acc += ht[p] * hu[q] * value(ii, jj, f)
                        + ds * kt[p] * hu[q] * fv
                        + dm * ht[p] * ku[q] * fm
                        + ds * dm * kt[p] * ku[q] * fvm;
                }
            }
            acc
        };
        let n = interp(&|s| s.n);
        let n_mu = interp(&|s| s.n_mu);
        let mut n_v_axis = [0.0; 3];
        let mut tau_axis = [[0.0; 3]; 3];
        for r in 0..3 {
            n_v_axis[r] = interp(&|s| s.n_v[r]);
            for c in 0..3 {
                tau_axis[r][c] = interp(&|s| s.tau[r][c]);
            }
        }
        // rotate the axis-aligned quantities to the direction of v
        let rot = rotation_to(a, v);
        let n_v = linalg::mat3_vec(&rot, &n_v_axis);
        let mut tau = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                let mut acc = 0.0;
                for x in 0..3 {
                    for y in 0..3 {
                        acc += rot[r][x] * tau_axis[x][y] * rot[c][y];
                    }
                }
                tau[r][c] = acc;
            }
        }
        let mut gamma = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                gamma[r][c] = (tau[r][c] + n_v[r] * n_v[c] / n_mu) / n;
            }
        }
        Ok(FamilyScalars {
            n,
            n_mu,
            n_v,
            tau,
            tau_hessian: tau,
            gamma,
        })
    }
}

/// Rotation taking `e_axis` to `v/|v|` (identity for `v = 0`).
fn rotation_to(axis: usize, v: [f64; 3]) -> [[f64; 3]; 3] {
    let mut id = [[0.0; 3]; 3];
    for (r, row) in id.iter_mut().enumerate() {
        row[r] = 1.0;
    }
    let s = linalg::norm3(&v);
    if s == 0.0 {
        return id;
    }
    let b = [v[0] / s, v[1] / s, v[2] / s];
    let mut e = [0.0; 3];
    e[axis] = 1.0;
    let c = linalg::dot3(&e, &b);
    if c > 1.0 - 1e-15 {
        return id;
    }
    if c < -1.0 + 1e-15 {
        // half turn about a perpendicular axis
        let mut r = id;
        for x in 0..3 {
            if x != (axis + 1) % 3 {
                r[x][x] = -1.0;
            }
        }
        return r;
    }
    // Rodrigues with k = e x b
    let k = [e[1] * b[2] - e[2] * b[1], e[2] * b[0] - e[0] * b[2], e[0] * b[1] - e[1] * b[0]];
    let kx = [[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]];
    let mut r = id;
    let f = 1.0 / (1.0 + c);
    for x in 0..3 {
        for y in 0..3 {
            let mut kk = 0.0;
            for z in 0..3 {
                kk += kx[x][z] * kx[z][y];
            }
            r[x][y] += kx[x][y] + f * kk;
        }
    }
    r
}

/// `n, n_mu, n_v, tau, gamma` from a profile's frame (no Hessian needed:
/// `tau_hessian` repeats `tau`).
pub fn scalars_of_profile(p: &Profile) -> Result<FamilyScalars> {
    let n = functionals::mass(&p.phi);
    let n_mu = p.frame[7].dot(&p.phi);
    let mut n_v = [0.0; 3];
    let mut tau = [[0.0; 3]; 3];
    for j in 0..3 {
        n_v[j] = p.frame[3 + j].dot(&p.phi);
        for k in 0..3 {
            tau[j][k] = symplectic_form(&p.frame[j], &p.frame[3 + k]);
        }
    }
    if !(n_mu > 0.0) {
        return Err(LabError::StabilityViolation { n_mu });
    }
    let mut gamma = [[0.0; 3]; 3];
    for j in 0..3 {
        for k in 0..3 {
            gamma[j][k] = (tau[j][k] + n_v[j] * n_v[k] / n_mu) / n;
        }
    }
    Ok(FamilyScalars {
        n,
        n_mu,
        n_v,
        tau,
        tau_hessian: tau,
        gamma,
    })
}

/// Summary of a family table for reports.
#[derive(Clone, Debug, Serialize)]
pub struct FamilySummary {
    pub axis: usize,
    pub speeds: Vec<f64>,
    pub mus: Vec<f64>,
    pub max_residual: f64,
}

impl From<&Family> for FamilySummary {
    fn from(f: &Family) -> Self {
        FamilySummary {
            axis: f.axis,
            speeds: f.speeds.clone(),
            mus: f.mus.clone(),
            max_residual: f.max_node_residual(),
        }
    }
}
