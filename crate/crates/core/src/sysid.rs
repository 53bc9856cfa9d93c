//! Identify the gravito-bending length `L_gb = (k_b / q)^{1/3}` from
//! observed static shapes, holding `k_b` fixed and varying the distributed
//! weight `q`.
//!
//! A snapshot is a CSV of node positions (`node,x,y`) with a JSON sidecar of
//! the same stem holding the boundary coordinates `q_b`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::solver::{solve_equilibrium, TrustRegionSettings};
use crate::strip::{Configuration, StripModel, DIM};
use crate::tasks::{pose_path, seed_bump};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub q_b: Vec<f64>,
    pub positions: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    q_b: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    node: usize,
    x: f64,
    y: f64,
}

impl Snapshot {
    pub fn from_configuration(model: &StripModel, cfg: &Configuration) -> Self {
        Self {
            q_b: cfg.q_b.clone(),
            positions: cfg.positions(model),
        }
    }

    fn check(&self, model: &StripModel) -> Result<()> {
        if self.positions.len() != model.node_count() || self.q_b.len() != model.boundary_dim() {
            return Err(Error::InvalidInput(format!(
                "snapshot has {} nodes and {} boundary coordinates, model needs {} and {}",
                self.positions.len(),
                self.q_b.len(),
                model.node_count(),
                model.boundary_dim()
            )));
        }
        if self.positions.iter().flatten().chain(&self.q_b).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("snapshot contains non-finite values".into()));
        }
        Ok(())
    }

    /// Free coordinates of the observed shape.
    fn observed_free(&self, model: &StripModel) -> Vec<f64> {
        Configuration::from_positions(model, &self.positions).q_f
    }

    pub fn write(&self, csv_path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(csv_path).map_err(|e| csv_error(csv_path, e))?;
        for (node, p) in self.positions.iter().enumerate() {
            w.serialize(Row { node, x: p[0], y: p[1] }).map_err(|e| csv_error(csv_path, e))?;
        }
        w.flush()?;
        let sidecar = serde_json::to_string_pretty(&Sidecar { q_b: self.q_b.clone() })?;
        fs::write(csv_path.with_extension("json"), sidecar + "\n")?;
        Ok(())
    }

    pub fn read(csv_path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(csv_path).map_err(|e| csv_error(csv_path, e))?;
        let mut positions = Vec::new();
        for (i, row) in r.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| csv_error(csv_path, e))?;
            if row.node != i {
                return Err(Error::Malformed {
                    path: csv_path.display().to_string(),
                    reason: format!("row {i} has node index {}", row.node),
                });
            }
            positions.push([row.x, row.y]);
        }
        let sidecar_path = csv_path.with_extension("json");
        let text = fs::read_to_string(&sidecar_path)?;
        let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Malformed {
            path: sidecar_path.display().to_string(),
            reason: e.to_string(),
        })?;
        Ok(Self {
            q_b: sidecar.q_b,
            positions,
        })
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Malformed {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

/// Every `*.csv` snapshot in `dir`, in file-name order.
pub fn load_snapshots(dir: &Path) -> Result<Vec<Snapshot>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidInput(format!("no snapshot CSV files in {}", dir.display())));
    }
    paths
        .iter()
        .enumerate()
        .map(|(index, p)| {
            Snapshot::read(p).map_err(|e| Error::Snapshot {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn write_snapshots(dir: &Path, snapshots: &[Snapshot]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    snapshots
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let p = dir.join(format!("snapshot_{i:03}.csv"));
            s.write(&p)?;
            Ok(p)
        })
        .collect()
}

/// Distributed weight `q = k_b / L_gb³` [N/m].
pub fn load_for_length(bend_stiffness: f64, l_gb: f64) -> f64 {
    bend_stiffness / l_gb.powi(3)
}

/// `L_gb = (k_b / q)^{1/3}` [m].
pub fn length_for_load(bend_stiffness: f64, load: f64) -> f64 {
    (bend_stiffness / load).cbrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SysidSettings {
    /// Search interval for `L_gb` [m].
    pub bounds: [f64; 2],
    /// Absolute tolerance on `L_gb` [m].
    pub xatol: f64,
    pub max_iterations: usize,
    pub solver: TrustRegionSettings,
}

impl Default for SysidSettings {
    fn default() -> Self {
        Self {
            bounds: [0.05, 0.10],
            xatol: 1e-4,
            max_iterations: 100,
            solver: TrustRegionSettings::default(),
        }
    }
}

/// Mean over snapshots of the mean squared free-node position error of the
/// equilibrium predicted with gravito-bending length `l_gb`, each solve
/// warm-started from the observed shape.
pub fn objective(model: &StripModel, snapshots: &[Snapshot], l_gb: f64, settings: &SysidSettings, exec: Execution) -> Result<f64> {
    if !(l_gb > 0.0) {
        return Err(Error::InvalidInput(format!("gravito-bending length must be positive, got {l_gb}")));
    }
    if snapshots.is_empty() {
        return Err(Error::InvalidInput("no snapshots".into()));
    }
    let loaded = model.with_gravity_load(load_for_length(model.bend_stiffness(), l_gb))?;
    let errors = exec.map_range(snapshots.len(), |index| {
        let snap = &snapshots[index];
        let wrap = |e: Error| Error::Snapshot {
            index,
            source: Box::new(e),
        };
        snap.check(&loaded).map_err(wrap)?;
        let observed = snap.observed_free(&loaded);
        let eq = solve_equilibrium(&loaded, &snap.q_b, &observed, &settings.solver).map_err(wrap)?;
        if !eq.converged() {
            return Err(wrap(Error::SolverFailure(format!("{:?}", eq.status))));
        }
        let sq: f64 = eq.q_f_star.iter().zip(&observed).map(|(a, b)| (a - b).powi(2)).sum();
        Ok(sq / (observed.len() / DIM) as f64)
    });
    let mut total = 0.0;
    for e in errors {
        total += e?;
    }
    Ok(total / snapshots.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SysidOutcome {
    pub l_gb: f64,
    pub load: f64,
    pub objective: f64,
    pub evaluations: usize,
    /// Every `(L_gb, J)` pair evaluated, in order.
    pub history: Vec<(f64, f64)>,
}

/// Bounded scalar minimization by golden-section search with parabolic
/// interpolation (Brent).
pub fn brent_bounded<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    lo: f64,
    hi: f64,
    xatol: f64,
    max_iterations: usize,
) -> Result<(f64, f64, usize)> {
    if !(lo < hi) || !(xatol > 0.0) {
        return Err(Error::InvalidInput(format!("bad bracket [{lo}, {hi}] or tolerance {xatol}")));
    }
    let golden = 0.5 * (3.0 - 5f64.sqrt());
    let sqrt_eps = f64::EPSILON.sqrt();
    let (mut a, mut b) = (lo, hi);
    let mut x = a + golden * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x)?;
    let (mut fw, mut fv) = (fx, fx);
    let mut evals = 1;
    let (mut d, mut e) = (0.0_f64, 0.0_f64);

    for _ in 0..max_iterations {
        let m = 0.5 * (a + b);
        let tol = sqrt_eps * x.abs() + xatol / 3.0;
        let tol2 = 2.0 * tol;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden_step = true;
        if e.abs() > tol {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_old = e;
            e = d;
            if p.abs() < (0.5 * q * e_old).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol } else { -tol };
                }
                golden_step = false;
            }
        }
        if golden_step {
            e = if x < m { b - x } else { a - x };
            d = golden * e;
        }
        let u = if d.abs() >= tol { x + d } else if d > 0.0 { x + tol } else { x - tol };
        let fu = f(u)?;
        evals += 1;
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            (v, fv) = (w, fw);
            (w, fw) = (x, fx);
            (x, fx) = (u, fu);
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                (v, fv) = (w, fw);
                (w, fw) = (u, fu);
            } else if fu <= fv || v == x || v == w {
                (v, fv) = (u, fu);
            }
        }
    }
    Ok((x, fx, evals))
}

pub fn identify(model: &StripModel, snapshots: &[Snapshot], settings: &SysidSettings, exec: Execution) -> Result<SysidOutcome> {
    let mut history = Vec::new();
    let (l_gb, j, evaluations) = brent_bounded(
        |l| {
            let j = objective(model, snapshots, l, settings, exec)?;
            history.push((l, j));
            Ok(j)
        },
        settings.bounds[0],
        settings.bounds[1],
        settings.xatol,
        settings.max_iterations,
    )?;
    Ok(SysidOutcome {
        l_gb,
        load: load_for_length(model.bend_stiffness(), l_gb),
        objective: j,
        evaluations,
        history,
    })
}

/// Clamp poses `(dx/L, dy/L, rotation)` of the right end used for synthetic
/// snapshots.
pub const SYNTHETIC_POSES: [(f64, f64, f64); 5] = [
    (-0.05, 0.0, 0.0),
    (-0.1, 0.0, 0.0),
    (-0.15, 0.0, 0.0),
    (-0.1, 0.05, 0.3),
    (-0.1, -0.05, -0.3),
];

/// Sagging equilibria of a strip with gravito-bending length `l_gb` under
/// the synthetic clamp poses.
pub fn synthetic_snapshots(model: &StripModel, l_gb: f64, settings: &TrustRegionSettings, exec: Execution) -> Result<Vec<Snapshot>> {
    let loaded = model.with_gravity_load(load_for_length(model.bend_stiffness(), l_gb))?;
    let l = loaded.length();
    exec.map(&SYNTHETIC_POSES, |&(dx, dy, angle)| {
        let mut from = loaded.straight_configuration([0.0, 0.0]);
        seed_bump(&loaded, &mut from.q_f, -1e-3 * l);
        let cfg = pose_path(&loaded, &from, (dx * l, dy * l, angle), settings)?;
        Ok(Snapshot::from_configuration(&loaded, &cfg))
    })
    .into_iter()
    .collect()
}
