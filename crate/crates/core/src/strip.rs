//! Discrete planar elastic strip.
//!
//! Nodes `q_0 .. q_{n-1}` carry stretching energy on every edge, bending
//! energy at every node with two incident edges, and a lumped-mass gravity
//! potential. The two nodes at each end are clamped and form the boundary
//! (controllable) coordinates; the interior nodes are free.
//!
//! Boundary ordering is `[q_0, q_1, q_{n-2}, q_{n-1}]`; free ordering is
//! `q_2 .. q_{n-3}`, each node flattened as `(x, y)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{BandedSymmetricMatrix, SparseMatrix};

pub const DIM: usize = 2;
pub const BOUNDARY_DIM: usize = 4 * DIM;
/// Standard gravity used when converting a distributed load into masses.
pub const STANDARD_GRAVITY: f64 = 9.81;

const DEGENERATE_EDGE_FRACTION: f64 = 1e-12;

/// Physical parameters of a strip, as read from experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StripParams {
    /// Total node count, clamps included.
    pub node_count: usize,
    /// Undeformed centerline length [m].
    pub length: f64,
    /// k_s [N]. The main experimental description quotes 0.31 N, the
    /// hyperparameter table 0.314 N.
    pub stretch_stiffness: f64,
    /// k_b [N m²].
    pub bend_stiffness: f64,
    /// Mass per unit length [kg/m]; ends carry half a segment.
    pub linear_density: f64,
    /// Gravitational acceleration [m/s²].
    pub gravity: [f64; 2],
}

impl Default for StripParams {
    fn default() -> Self {
        Self {
            node_count: 101,
            length: 0.2,
            stretch_stiffness: 0.31,
            bend_stiffness: 7.85e-8,
            // k_b / (L_gb³ g) with L_gb = 0.0514 m
            linear_density: 5.89e-5,
            gravity: [0.0, 0.0],
        }
    }
}

/// Which vector a flattened coordinate lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dof {
    Free(usize),
    Boundary(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StripModel {
    node_count: usize,
    rest_edge_length: f64,
    stretch_stiffness: f64,
    bend_stiffness: f64,
    node_masses: Vec<f64>,
    gravity: [f64; 2],
}

impl StripModel {
    pub fn new(params: &StripParams) -> Result<Self> {
        if params.node_count < 5 {
            return Err(Error::InvalidInput(format!(
                "node_count must be at least 5, got {}",
                params.node_count
            )));
        }
        if !(params.length > 0.0) {
            return Err(Error::InvalidInput("strip length must be positive".into()));
        }
        if !(params.linear_density >= 0.0) {
            return Err(Error::InvalidInput("linear density must be nonnegative".into()));
        }
        let rest = params.length / (params.node_count - 1) as f64;
        let masses = lumped_masses(params.node_count, params.linear_density * rest);
        Self::from_parts(
            params.node_count,
            rest,
            params.stretch_stiffness,
            params.bend_stiffness,
            masses,
            params.gravity,
        )
    }

    pub fn from_parts(
        node_count: usize,
        rest_edge_length: f64,
        stretch_stiffness: f64,
        bend_stiffness: f64,
        node_masses: Vec<f64>,
        gravity: [f64; 2],
    ) -> Result<Self> {
        if node_count < 5 {
            return Err(Error::InvalidInput(format!("node_count must be at least 5, got {node_count}")));
        }
        if !(rest_edge_length > 0.0 && stretch_stiffness > 0.0 && bend_stiffness > 0.0) {
            return Err(Error::InvalidInput(
                "rest edge length and stiffnesses must be positive".into(),
            ));
        }
        if node_masses.len() != node_count || node_masses.iter().any(|m| !(*m >= 0.0)) {
            return Err(Error::InvalidInput("one nonnegative mass per node required".into()));
        }
        if gravity.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidInput("gravity must be finite".into()));
        }
        Ok(Self {
            node_count,
            rest_edge_length,
            stretch_stiffness,
            bend_stiffness,
            node_masses,
            gravity,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn dim(&self) -> usize {
        DIM
    }

    pub fn rest_edge_length(&self) -> f64 {
        self.rest_edge_length
    }

    pub fn length(&self) -> f64 {
        self.rest_edge_length * (self.node_count - 1) as f64
    }

    pub fn stretch_stiffness(&self) -> f64 {
        self.stretch_stiffness
    }

    pub fn bend_stiffness(&self) -> f64 {
        self.bend_stiffness
    }

    pub fn node_masses(&self) -> &[f64] {
        &self.node_masses
    }

    pub fn gravity(&self) -> [f64; 2] {
        self.gravity
    }

    pub fn free_node_count(&self) -> usize {
        self.node_count - 4
    }

    pub fn free_dim(&self) -> usize {
        self.free_node_count() * DIM
    }

    pub fn boundary_dim(&self) -> usize {
        BOUNDARY_DIM
    }

    pub fn boundary_nodes(&self) -> [usize; 4] {
        let n = self.node_count;
        [0, 1, n - 2, n - 1]
    }

    pub fn is_boundary_node(&self, i: usize) -> bool {
        i < 2 || i + 2 >= self.node_count
    }

    /// Half bandwidth of the free-DOF Hessian: bending couples nodes two
    /// apart, so the farthest coupled flattened offset is `2·dim + dim − 1`.
    pub fn half_bandwidth(&self) -> usize {
        2 * DIM + DIM - 1
    }

    pub fn dof(&self, node: usize, coord: usize) -> Dof {
        let n = self.node_count;
        match node {
            0 => Dof::Boundary(coord),
            1 => Dof::Boundary(DIM + coord),
            i if i == n - 2 => Dof::Boundary(2 * DIM + coord),
            i if i == n - 1 => Dof::Boundary(3 * DIM + coord),
            i => Dof::Free((i - 2) * DIM + coord),
        }
    }

    /// Copy of this model with masses set so the distributed weight equals
    /// `load_per_length` [N/m] under standard gravity pointing along −y.
    pub fn with_gravity_load(&self, load_per_length: f64) -> Result<Self> {
        let segment_mass = load_per_length / STANDARD_GRAVITY * self.rest_edge_length;
        Self::from_parts(
            self.node_count,
            self.rest_edge_length,
            self.stretch_stiffness,
            self.bend_stiffness,
            lumped_masses(self.node_count, segment_mass),
            [0.0, -STANDARD_GRAVITY],
        )
    }

    pub fn with_bend_stiffness(&self, bend_stiffness: f64) -> Result<Self> {
        let mut m = self.clone();
        if !(bend_stiffness > 0.0) {
            return Err(Error::InvalidInput("bend stiffness must be positive".into()));
        }
        m.bend_stiffness = bend_stiffness;
        Ok(m)
    }

    /// Straight strip at rest starting at `origin` along +x.
    pub fn straight_configuration(&self, origin: [f64; 2]) -> Configuration {
        let positions: Vec<[f64; 2]> = (0..self.node_count)
            .map(|i| [origin[0] + i as f64 * self.rest_edge_length, origin[1]])
            .collect();
        Configuration::from_positions(self, &positions)
    }
}

fn lumped_masses(node_count: usize, segment_mass: f64) -> Vec<f64> {
    let mut m = vec![segment_mass; node_count];
    m[0] *= 0.5;
    m[node_count - 1] *= 0.5;
    m
}

/// Split boundary/free coordinates of a strip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub q_b: Vec<f64>,
    pub q_f: Vec<f64>,
}

impl Configuration {
    pub fn new(model: &StripModel, q_b: Vec<f64>, q_f: Vec<f64>) -> Result<Self> {
        let cfg = Self { q_b, q_f };
        cfg.validate(model)?;
        Ok(cfg)
    }

    pub fn validate(&self, model: &StripModel) -> Result<()> {
        if self.q_b.len() != model.boundary_dim() || self.q_f.len() != model.free_dim() {
            return Err(Error::InvalidInput(format!(
                "configuration sizes ({}, {}) do not match model ({}, {})",
                self.q_b.len(),
                self.q_f.len(),
                model.boundary_dim(),
                model.free_dim()
            )));
        }
        if let Some(i) = self.q_b.iter().chain(&self.q_f).position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite coordinate at flat index {i}")));
        }
        Ok(())
    }

    pub fn from_positions(model: &StripModel, positions: &[[f64; 2]]) -> Self {
        assert_eq!(positions.len(), model.node_count());
        let mut q_b = vec![0.0; model.boundary_dim()];
        let mut q_f = vec![0.0; model.free_dim()];
        for (i, p) in positions.iter().enumerate() {
            for c in 0..DIM {
                match model.dof(i, c) {
                    Dof::Free(j) => q_f[j] = p[c],
                    Dof::Boundary(j) => q_b[j] = p[c],
                }
            }
        }
        Self { q_b, q_f }
    }

    pub fn positions(&self, model: &StripModel) -> Vec<[f64; 2]> {
        positions_of(model, &self.q_b, &self.q_f)
    }
}

pub(crate) fn positions_of(model: &StripModel, q_b: &[f64], q_f: &[f64]) -> Vec<[f64; 2]> {
    (0..model.node_count())
        .map(|i| {
            let mut p = [0.0; 2];
            for (c, pc) in p.iter_mut().enumerate() {
                *pc = match model.dof(i, c) {
                    Dof::Free(j) => q_f[j],
                    Dof::Boundary(j) => q_b[j],
                };
            }
            p
        })
        .collect()
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn cross2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn norm2(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

fn edge_length(model: &StripModel, e: [f64; 2], edge: usize) -> Result<f64> {
    let l = norm2(e);
    if !(l >= DEGENERATE_EDGE_FRACTION * model.rest_edge_length) {
        return Err(Error::DegenerateGeometry { edge, length: l });
    }
    Ok(l)
}

/// Signed turning angle between consecutive edges in (−π, π]; positive
/// for a counter-clockwise turn.
pub fn turning_angle(e_prev: [f64; 2], e_next: [f64; 2]) -> Result<f64> {
    for (k, e) in [e_prev, e_next].into_iter().enumerate() {
        let l = norm2(e);
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::DegenerateGeometry { edge: k, length: l });
        }
    }
    Ok(cross2(e_prev, e_next).atan2(dot2(e_prev, e_next)))
}

/// `T = 2 tan(φ/2) = 2 (e0 × e1) / (|e0||e1| + e0·e1)` with its gradient
/// with respect to `(e0, e1)` and, if requested, the Hessian.
struct TurningTangent {
    value: f64,
    grad: [f64; 4],
    hess: [[f64; 4]; 4],
}

fn turning_tangent(e0: [f64; 2], e1: [f64; 2], n0: f64, n1: f64, with_hessian: bool) -> TurningTangent {
    let c = cross2(e0, e1);
    let d = n0 * n1 + dot2(e0, e1);
    let t = 2.0 * c / d;

    let gc = [e1[1], -e1[0], -e0[1], e0[0]];
    let gd = [
        n1 * e0[0] / n0 + e1[0],
        n1 * e0[1] / n0 + e1[1],
        n0 * e1[0] / n1 + e0[0],
        n0 * e1[1] / n1 + e0[1],
    ];
    let mut grad = [0.0; 4];
    for a in 0..4 {
        grad[a] = 2.0 * gc[a] / d - 2.0 * c * gd[a] / (d * d);
    }

    let mut hess = [[0.0; 4]; 4];
    if with_hessian {
        let mut hc = [[0.0; 4]; 4];
        hc[0][3] = 1.0;
        hc[3][0] = 1.0;
        hc[1][2] = -1.0;
        hc[2][1] = -1.0;

        let u0 = [e0[0] / n0, e0[1] / n0];
        let u1 = [e1[0] / n1, e1[1] / n1];
        let mut hd = [[0.0; 4]; 4];
        for a in 0..2 {
            for b in 0..2 {
                let id = if a == b { 1.0 } else { 0.0 };
                hd[a][b] = n1 / n0 * (id - u0[a] * u0[b]);
                hd[2 + a][2 + b] = n0 / n1 * (id - u1[a] * u1[b]);
                hd[a][2 + b] = u0[a] * u1[b] + id;
                hd[2 + b][a] = hd[a][2 + b];
            }
        }
        let d2 = d * d;
        let d3 = d2 * d;
        for a in 0..4 {
            for b in 0..4 {
                hess[a][b] = 2.0 * hc[a][b] / d
                    - 2.0 * (gc[a] * gd[b] + gd[a] * gc[b]) / d2
                    - 2.0 * c * hd[a][b] / d2
                    + 4.0 * c * gd[a] * gd[b] / d3;
            }
        }
    }
    TurningTangent { value: t, grad, hess }
}

/// Derivative coefficients of `(e0, e1)` with respect to nodes `(i−1, i, i+1)`.
const BEND_STENCIL: [[f64; 3]; 2] = [[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0]];

/// Maps an edge-space gradient of a bending stencil to its three nodes.
fn bend_node_gradient(g: &[f64; 4]) -> [f64; 6] {
    let mut out = [0.0; 6];
    for node in 0..3 {
        for c in 0..DIM {
            out[node * DIM + c] = BEND_STENCIL[0][node] * g[c] + BEND_STENCIL[1][node] * g[DIM + c];
        }
    }
    out
}

fn bend_node_hessian(h: &[[f64; 4]; 4]) -> [[f64; 6]; 6] {
    let mut out = [[0.0; 6]; 6];
    for n in 0..3 {
        for alpha in 0..DIM {
            for m in 0..3 {
                for beta in 0..DIM {
                    let mut s = 0.0;
                    for a in 0..2 {
                        for b in 0..2 {
                            let ca = BEND_STENCIL[a][n];
                            let cb = BEND_STENCIL[b][m];
                            if ca != 0.0 && cb != 0.0 {
                                s += ca * cb * h[a * DIM + alpha][b * DIM + beta];
                            }
                        }
                    }
                    out[n * DIM + alpha][m * DIM + beta] = s;
                }
            }
        }
    }
    out
}

/// Gradient of the turning tangent `T_i` at interior node `i` with respect
/// to nodes `(i−1, i, i+1)`.
pub(crate) fn turning_tangent_node_gradient(
    model: &StripModel,
    pos: &[[f64; 2]],
    i: usize,
) -> Result<(f64, [f64; 6])> {
    let e0 = sub(pos[i], pos[i - 1]);
    let e1 = sub(pos[i + 1], pos[i]);
    let n0 = edge_length(model, e0, i - 1)?;
    let n1 = edge_length(model, e1, i)?;
    let tt = turning_tangent(e0, e1, n0, n1, false);
    Ok((tt.value, bend_node_gradient(&tt.grad)))
}

/// Energy contributions split by mechanism [J].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyParts {
    pub stretching: f64,
    pub bending: f64,
    pub gravity: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.stretching + self.bending + self.gravity
    }
}

pub fn energy_parts(model: &StripModel, cfg: &Configuration) -> Result<EnergyParts> {
    cfg.validate(model)?;
    energy_parts_of(model, &cfg.positions(model))
}

fn energy_parts_of(model: &StripModel, pos: &[[f64; 2]]) -> Result<EnergyParts> {
    let rest = model.rest_edge_length;
    let ks = model.stretch_stiffness;
    let kb_over_l = model.bend_stiffness / rest;
    let mut parts = EnergyParts::default();
    let mut lengths = Vec::with_capacity(pos.len() - 1);
    for i in 0..pos.len() - 1 {
        let e = sub(pos[i + 1], pos[i]);
        let l = edge_length(model, e, i)?;
        lengths.push(l);
        let strain = 1.0 - l / rest;
        parts.stretching += 0.5 * ks * strain * strain * rest;
    }
    for i in 1..pos.len() - 1 {
        let e0 = sub(pos[i], pos[i - 1]);
        let e1 = sub(pos[i + 1], pos[i]);
        let t = 2.0 * cross2(e0, e1) / (lengths[i - 1] * lengths[i] + dot2(e0, e1));
        parts.bending += 0.5 * kb_over_l * t * t;
    }
    parts.gravity = gravity_energy_of(model, pos);
    Ok(parts)
}

fn gravity_energy_of(model: &StripModel, pos: &[[f64; 2]]) -> f64 {
    let g = model.gravity;
    if g == [0.0, 0.0] {
        return 0.0;
    }
    -pos
        .iter()
        .zip(&model.node_masses)
        .map(|(p, m)| m * dot2(g, *p))
        .sum::<f64>()
}

/// `E_s + E_b + E_g`.
pub fn total_energy(model: &StripModel, cfg: &Configuration) -> Result<f64> {
    Ok(energy_parts(model, cfg)?.total())
}

/// `−Σ m_i gᵀ q_i` over all nodes.
pub fn gravity_energy(model: &StripModel, cfg: &Configuration) -> Result<f64> {
    cfg.validate(model)?;
    Ok(gravity_energy_of(model, &cfg.positions(model)))
}

/// Equilibrium residual `∇_{q_f} E_tot`.
pub fn residual(model: &StripModel, cfg: &Configuration) -> Result<Vec<f64>> {
    cfg.validate(model)?;
    residual_of(model, &cfg.q_b, &cfg.q_f)
}

pub(crate) fn residual_of(model: &StripModel, q_b: &[f64], q_f: &[f64]) -> Result<Vec<f64>> {
    let pos = positions_of(model, q_b, q_f);
    let rest = model.rest_edge_length;
    let ks = model.stretch_stiffness;
    let kb_over_l = model.bend_stiffness / rest;
    let mut grad = vec![0.0; model.free_dim()];
    let mut add = |node: usize, c: usize, v: f64| {
        if let Dof::Free(j) = model.dof(node, c) {
            grad[j] += v;
        }
    };

    let mut lengths = Vec::with_capacity(pos.len() - 1);
    for i in 0..pos.len() - 1 {
        let e = sub(pos[i + 1], pos[i]);
        let l = edge_length(model, e, i)?;
        lengths.push(l);
        let s = ks * (l / rest - 1.0) / l;
        for c in 0..DIM {
            add(i + 1, c, s * e[c]);
            add(i, c, -s * e[c]);
        }
    }
    for i in 1..pos.len() - 1 {
        let e0 = sub(pos[i], pos[i - 1]);
        let e1 = sub(pos[i + 1], pos[i]);
        let tt = turning_tangent(e0, e1, lengths[i - 1], lengths[i], false);
        let g = bend_node_gradient(&tt.grad);
        for (k, node) in [i - 1, i, i + 1].into_iter().enumerate() {
            for c in 0..DIM {
                add(node, c, kb_over_l * tt.value * g[k * DIM + c]);
            }
        }
    }
    let gvec = model.gravity;
    if gvec != [0.0, 0.0] {
        for (i, m) in model.node_masses.iter().enumerate() {
            for c in 0..DIM {
                add(i, c, -m * gvec[c]);
            }
        }
    }
    Ok(grad)
}

struct SecondOrder {
    hxx: Option<BandedSymmetricMatrix>,
    hxz: Option<Vec<(usize, usize, f64)>>,
}

fn scatter(model: &StripModel, out: &mut SecondOrder, nodes: &[usize], h: &dyn Fn(usize, usize) -> f64) {
    let k = nodes.len() * DIM;
    for p in 0..k {
        let gp = model.dof(nodes[p / DIM], p % DIM);
        let Dof::Free(row) = gp else { continue };
        for q in 0..k {
            let sym = 0.5 * (h(p, q) + h(q, p));
            match model.dof(nodes[q / DIM], q % DIM) {
                Dof::Free(col) if row >= col => {
                    if let Some(hxx) = out.hxx.as_mut() {
                        hxx.add(row, col, sym);
                    }
                }
                Dof::Boundary(col) => {
                    if let Some(hxz) = out.hxz.as_mut() {
                        hxz.push((row, col, sym));
                    }
                }
                Dof::Free(_) => {}
            }
        }
    }
}

fn second_order(model: &StripModel, q_b: &[f64], q_f: &[f64], want_xx: bool, want_xz: bool) -> Result<SecondOrder> {
    let pos = positions_of(model, q_b, q_f);
    let rest = model.rest_edge_length;
    let ks = model.stretch_stiffness;
    let kb_over_l = model.bend_stiffness / rest;
    let mut out = SecondOrder {
        hxx: want_xx.then(|| BandedSymmetricMatrix::zeros(model.free_dim(), model.half_bandwidth())),
        hxz: want_xz.then(Vec::new),
    };

    let mut lengths = Vec::with_capacity(pos.len() - 1);
    for i in 0..pos.len() - 1 {
        let e = sub(pos[i + 1], pos[i]);
        let l = edge_length(model, e, i)?;
        lengths.push(l);
        let u = [e[0] / l, e[1] / l];
        let mut kmat = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                let id = if a == b { 1.0 } else { 0.0 };
                kmat[a][b] = ks * ((1.0 / rest - 1.0 / l) * id + u[a] * u[b] / l);
            }
        }
        // nodes (i, i+1): [[K, −K], [−K, K]]
        let h = |p: usize, q: usize| {
            let sign = if (p / DIM) == (q / DIM) { 1.0 } else { -1.0 };
            sign * kmat[p % DIM][q % DIM]
        };
        scatter(model, &mut out, &[i, i + 1], &h);
    }
    for i in 1..pos.len() - 1 {
        let e0 = sub(pos[i], pos[i - 1]);
        let e1 = sub(pos[i + 1], pos[i]);
        let tt = turning_tangent(e0, e1, lengths[i - 1], lengths[i], true);
        let g = bend_node_gradient(&tt.grad);
        let ht = bend_node_hessian(&tt.hess);
        let h = |p: usize, q: usize| kb_over_l * (g[p] * g[q] + tt.value * ht[p][q]);
        scatter(model, &mut out, &[i - 1, i, i + 1], &h);
    }
    Ok(out)
}

/// Analytic `∇²_{q_f} E_tot`, symmetrized, in band storage.
pub fn hessian_xx(model: &StripModel, cfg: &Configuration) -> Result<BandedSymmetricMatrix> {
    cfg.validate(model)?;
    hessian_xx_of(model, &cfg.q_b, &cfg.q_f)
}

pub(crate) fn hessian_xx_of(model: &StripModel, q_b: &[f64], q_f: &[f64]) -> Result<BandedSymmetricMatrix> {
    Ok(second_order(model, q_b, q_f, true, false)?.hxx.expect("requested"))
}

/// Analytic mixed derivative `∂(∇_{q_f} E)/∂q_b` (free rows × boundary columns).
pub fn jacobian_xz(model: &StripModel, cfg: &Configuration) -> Result<SparseMatrix> {
    cfg.validate(model)?;
    jacobian_xz_of(model, &cfg.q_b, &cfg.q_f)
}

pub(crate) fn jacobian_xz_of(model: &StripModel, q_b: &[f64], q_f: &[f64]) -> Result<SparseMatrix> {
    let t = second_order(model, q_b, q_f, false, true)?.hxz.expect("requested");
    Ok(SparseMatrix::from_triplets(model.free_dim(), model.boundary_dim(), t))
}

pub(crate) fn linearize_of(
    model: &StripModel,
    q_b: &[f64],
    q_f: &[f64],
) -> Result<(BandedSymmetricMatrix, SparseMatrix)> {
    let so = second_order(model, q_b, q_f, true, true)?;
    Ok((
        so.hxx.expect("requested"),
        SparseMatrix::from_triplets(model.free_dim(), model.boundary_dim(), so.hxz.expect("requested")),
    ))
}

/// Discrete signed curvature `κ_i = 2 tan(φ_i/2) / Δl` at nodes `1..n−2`.
pub fn curvature_profile(model: &StripModel, cfg: &Configuration) -> Result<Vec<f64>> {
    cfg.validate(model)?;
    curvature_of(model, &cfg.positions(model))
}

pub(crate) fn curvature_of(model: &StripModel, pos: &[[f64; 2]]) -> Result<Vec<f64>> {
    let rest = model.rest_edge_length;
    (1..pos.len() - 1)
        .map(|i| {
            let e0 = sub(pos[i], pos[i - 1]);
            let e1 = sub(pos[i + 1], pos[i]);
            let n0 = edge_length(model, e0, i - 1)?;
            let n1 = edge_length(model, e1, i)?;
            Ok(2.0 * cross2(e0, e1) / (n0 * n1 + dot2(e0, e1)) / rest)
        })
        .collect()
}

/// `E(q_f) − E(q_f + step)` at fixed `q_b`, accumulated element by element
/// from differences so the result keeps full relative precision even when
/// it is many orders of magnitude below `E` itself. Returns −∞ if the trial
/// point folds an edge back onto its neighbour.
pub(crate) fn energy_decrease(model: &StripModel, q_b: &[f64], q_f: &[f64], step: &[f64]) -> Result<f64> {
    let pos = positions_of(model, q_b, q_f);
    let zero_b = vec![0.0; q_b.len()];
    let dpos = positions_of(model, &zero_b, step);
    let rest = model.rest_edge_length;
    let ks = model.stretch_stiffness;
    let kb_over_l = model.bend_stiffness / rest;

    let n_edges = pos.len() - 1;
    let mut e = Vec::with_capacity(n_edges);
    let mut de = Vec::with_capacity(n_edges);
    let mut len = Vec::with_capacity(n_edges);
    let mut dlen = Vec::with_capacity(n_edges);
    let mut decrease = 0.0;
    for i in 0..n_edges {
        let ei = sub(pos[i + 1], pos[i]);
        let dei = sub(dpos[i + 1], dpos[i]);
        let l = edge_length(model, ei, i)?;
        let trial = [ei[0] + dei[0], ei[1] + dei[1]];
        let lt = edge_length(model, trial, i)?;
        // lt − l = (|e+δ|² − |e|²) / (lt + l)
        let dl = (2.0 * dot2(ei, dei) + dot2(dei, dei)) / (lt + l);
        let a = l / rest;
        let da = dl / rest;
        // ½ k_s Δl [(1−a)² − (1−a−da)²]
        decrease += 0.5 * ks * rest * da * (2.0 * (1.0 - a) - da);
        e.push(ei);
        de.push(dei);
        len.push(l);
        dlen.push(dl);
    }
    for i in 1..pos.len() - 1 {
        let (e0, e1) = (e[i - 1], e[i]);
        let (d0, d1) = (de[i - 1], de[i]);
        let c = cross2(e0, e1);
        let d = len[i - 1] * len[i] + dot2(e0, e1);
        let dc = cross2(e0, d1) + cross2(d0, e1) + cross2(d0, d1);
        let dn = dlen[i - 1] * (len[i] + dlen[i]) + len[i - 1] * dlen[i];
        let dd = dn + dot2(e0, d1) + dot2(d0, e1) + dot2(d0, d1);
        let d_trial = d + dd;
        if !(d_trial > 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        let t = 2.0 * c / d;
        let dt = 2.0 * (dc * d - c * dd) / (d * d_trial);
        decrease -= 0.5 * kb_over_l * dt * (2.0 * t + dt);
    }
    let g = model.gravity;
    if g != [0.0, 0.0] {
        for (p, m) in dpos.iter().zip(&model.node_masses) {
            decrease += m * dot2(g, *p);
        }
    }
    Ok(decrease)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn model(n: usize, length: f64) -> StripModel {
        StripModel::new(&StripParams {
            node_count: n,
            length,
            ..StripParams::default()
        })
        .unwrap()
    }

    fn from_positions(m: &StripModel, pos: &[[f64; 2]]) -> Configuration {
        Configuration::from_positions(m, pos)
    }

    #[test]
    fn straight_strip_has_zero_energy_and_residual() {
        let m = model(11, 0.2);
        let cfg = m.straight_configuration([0.0, 0.0]);
        assert!(total_energy(&m, &cfg).unwrap() < 1e-30);
        assert!(residual(&m, &cfg).unwrap().iter().all(|&r| r.abs() < 1e-15));
    }

    #[test]
    fn doubled_edge_stretch_energy() {
        // one edge stretched to 2Δl inside an otherwise straight strip
        let m = model(6, 0.5);
        let mut pos: Vec<[f64; 2]> = (0..6).map(|i| [0.1 * i as f64, 0.0]).collect();
        for p in pos.iter_mut().skip(3) {
            p[0] += 0.1;
        }
        let parts = energy_parts(&m, &from_positions(&m, &pos)).unwrap();
        assert!((parts.stretching - 0.0155).abs() < 1e-15);
        assert_eq!(parts.bending, 0.0);
    }

    #[test]
    fn right_angle_bend_energy() {
        let m = model(5, 0.4);
        let pos = [[0.0, 0.0], [0.1, 0.0], [0.2, 0.0], [0.2, 0.1], [0.2, 0.2]];
        let parts = energy_parts(&m, &from_positions(&m, &pos)).unwrap();
        assert!((parts.bending - 1.57e-6).abs() < 1e-18, "{}", parts.bending);
        assert!(parts.stretching.abs() < 1e-30);
    }

    #[test]
    fn point_mass_gravity() {
        let mut masses = vec![0.0; 5];
        masses[2] = 0.01;
        let m = StripModel::from_parts(5, 0.1, 0.31, 7.85e-8, masses, [0.0, -9.81]).unwrap();
        let pos = [[-0.2, 0.0], [-0.1, 0.0], [0.0, 0.1], [0.1, 0.0], [0.2, 0.0]];
        let e = gravity_energy(&m, &from_positions(&m, &pos)).unwrap();
        assert!((e - 9.81e-3).abs() < 1e-15);
        let shifted: Vec<[f64; 2]> = pos.iter().map(|p| [p[0] + 3.0, p[1]]).collect();
        assert_eq!(gravity_energy(&m, &from_positions(&m, &shifted)).unwrap(), e);
    }

    #[test]
    fn turning_angle_conventions() {
        assert_eq!(turning_angle([1.0, 0.0], [2.0, 0.0]).unwrap(), 0.0);
        assert!((turning_angle([1.0, 0.0], [0.0, 1.0]).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!((turning_angle([1.0, 0.0], [0.0, -1.0]).unwrap() + PI / 2.0).abs() < 1e-15);
        assert!(matches!(
            turning_angle([0.0, 0.0], [1.0, 0.0]),
            Err(Error::DegenerateGeometry { .. })
        ));
    }

    #[test]
    fn zero_edge_is_degenerate() {
        let m = model(5, 0.4);
        let pos = [[0.0, 0.0], [0.1, 0.0], [0.1, 0.0], [0.2, 0.0], [0.3, 0.0]];
        assert!(matches!(
            residual(&m, &from_positions(&m, &pos)),
            Err(Error::DegenerateGeometry { edge: 1, .. })
        ));
    }

    #[test]
    fn non_finite_configuration_rejected() {
        let m = model(5, 0.4);
        let mut cfg = m.straight_configuration([0.0, 0.0]);
        cfg.q_f[1] = f64::NAN;
        assert!(matches!(total_energy(&m, &cfg), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn model_invariants_enforced() {
        assert!(StripModel::new(&StripParams { node_count: 4, ..Default::default() }).is_err());
        assert!(StripModel::from_parts(6, 0.1, 0.0, 1.0, vec![0.0; 6], [0.0; 2]).is_err());
        assert!(StripModel::from_parts(6, 0.1, 1.0, 1.0, vec![-1.0; 6], [0.0; 2]).is_err());
    }

    #[test]
    fn circle_curvature() {
        let r: f64 = 0.5;
        let dl = 0.01;
        let n = 40;
        // chord Δl subtends 2 asin(Δl / 2R)
        let dtheta = 2.0 * (dl / (2.0 * r)).asin();
        let pos: Vec<[f64; 2]> = (0..n)
            .map(|i| {
                let a = i as f64 * dtheta;
                [r * a.sin(), r * (1.0 - a.cos())]
            })
            .collect();
        let m = StripModel::from_parts(n, dl, 0.31, 7.85e-8, vec![0.0; n], [0.0; 2]).unwrap();
        let kappa = curvature_profile(&m, &from_positions(&m, &pos)).unwrap();
        assert_eq!(kappa.len(), n - 2);
        for k in &kappa {
            assert!((k - 2.0).abs() / 2.0 < 1e-3, "{k}");
        }
        let mirrored: Vec<[f64; 2]> = pos.iter().map(|p| [p[0], -p[1]]).collect();
        let km = curvature_profile(&m, &from_positions(&m, &mirrored)).unwrap();
        for (a, b) in kappa.iter().zip(&km) {
            assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn straight_stretch_hessian_blocks() {
        let m = model(9, 0.16);
        let cfg = m.straight_configuration([0.0, 0.0]);
        let h = hessian_xx(&m, &cfg).unwrap();
        let k = 2.0 * m.stretch_stiffness() / m.rest_edge_length();
        for node in 0..m.free_node_count() {
            let x = node * 2;
            assert!((h.get(x, x) - k).abs() < 1e-9 * k);
            // transverse stiffness of a straight chain comes from bending only
            assert!(h.get(x + 1, x + 1) < 1e-2 * k);
            assert_eq!(h.get(x, x + 1), 0.0);
        }
    }

    #[test]
    fn far_interior_rows_of_gz_are_zero() {
        let m = model(15, 0.2);
        let mut cfg = m.straight_configuration([0.0, 0.0]);
        for (j, q) in cfg.q_f.iter_mut().enumerate() {
            *q += 1e-4 * (j as f64).sin();
        }
        let gz = jacobian_xz(&m, &cfg).unwrap();
        // bending reaches two nodes in: free nodes 2, 3 and n−4, n−3 only
        let allowed: Vec<usize> = [2usize, 3, 15 - 4, 15 - 3]
            .iter()
            .flat_map(|&node| [(node - 2) * 2, (node - 2) * 2 + 1])
            .collect();
        for row in gz.nonzero_rows() {
            assert!(allowed.contains(&row), "row {row} should be zero");
        }
    }

    #[test]
    fn energy_decrease_matches_direct_difference() {
        let m = model(12, 0.2);
        let mut cfg = m.straight_configuration([0.0, 0.0]);
        for (j, q) in cfg.q_f.iter_mut().enumerate() {
            *q += 2e-3 * ((j as f64) * 0.7).sin();
        }
        let step: Vec<f64> = (0..m.free_dim()).map(|j| 1e-4 * ((j as f64) * 1.3).cos()).collect();
        let before = total_energy(&m, &cfg).unwrap();
        let mut moved = cfg.clone();
        for (q, s) in moved.q_f.iter_mut().zip(&step) {
            *q += s;
        }
        let after = total_energy(&m, &moved).unwrap();
        let dec = energy_decrease(&m, &cfg.q_b, &cfg.q_f, &step).unwrap();
        assert!(((before - after) - dec).abs() <= 1e-10 * dec.abs().max(1e-300), "{} vs {}", before - after, dec);
    }
}
