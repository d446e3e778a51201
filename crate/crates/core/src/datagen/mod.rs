//! Synthetic ground truth and collocation meshes.

mod forward;
mod plate;

pub use forward::{
    dispersion, dispersion_truncated, energy_history, forward_solve_1d, max_stable_dt, output_ts, output_xs, Boundary,
    DisplacementGrid, ForwardProblem1D, Profile,
};
pub use plate::{exact_solution_2d, load_coefficient, mode_denominator, source_term_2d, PlateProblem, PlateSolution};

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("kernel `{0}` has unbounded support; pass an explicit truncation")]
    UnboundedSupport(&'static str),
    #[error("periodic domain of width {width} is too small for interaction radius {radius}")]
    PeriodicSupport { radius: f64, width: f64 },
    #[error("time step {requested} exceeds the stability limit; use dt <= {required}")]
    Unstable { requested: f64, required: f64 },
    #[error("solution became non-finite at t = {t}")]
    NonFinite { t: f64 },
    #[error("mesh: {0}")]
    Mesh(String),
    #[error("dataset line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Data point where the residual is also enforced.
    Interior,
    /// Data point on the initial time line.
    Initial,
    /// One half of an antisymmetric ghost pair outside the plate.
    BoundaryGhost,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Interior => "interior",
            Role::Initial => "initial",
            Role::BoundaryGhost => "boundary_ghost",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "interior" => Some(Role::Interior),
            "initial" => Some(Role::Initial),
            "boundary_ghost" => Some(Role::BoundaryGhost),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollocationPoint {
    pub coords: [f64; 2],
    pub role: Role,
    /// Displacement target; ghost points carry 0 and are penalized through their pair.
    pub target: f64,
    /// Index of the mirror partner for ghost points.
    pub pair: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CollocationSet {
    /// Spatial dimension of the problem (1 for `(x, t)`, 2 for `(x, y)`).
    pub dim: usize,
    pub points: Vec<CollocationPoint>,
}

impl CollocationSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points with a displacement target (everything except ghosts).
    pub fn data_points(&self) -> impl Iterator<Item = &CollocationPoint> {
        self.points.iter().filter(|p| p.role != Role::BoundaryGhost)
    }

    /// Points where the residual is enforced.
    pub fn interior_points(&self) -> impl Iterator<Item = &CollocationPoint> {
        self.points.iter().filter(|p| p.role == Role::Interior)
    }

    /// Each ghost pair once, as `(i, j)` with `i < j`.
    pub fn ghost_pairs(&self) -> Vec<(usize, usize)> {
        self.points
            .iter()
            .enumerate()
            .filter_map(|(i, p)| match (p.role, p.pair) {
                (Role::BoundaryGhost, Some(j)) if i < j => Some((i, j)),
                _ => None,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        for (i, p) in self.points.iter().enumerate() {
            if p.coords
                .iter()
                .chain(std::iter::once(&p.target))
                .any(|v| !v.is_finite())
            {
                return Err(DatagenError::Mesh(format!("point {i} is not finite")));
            }
            match (p.role, p.pair) {
                (Role::BoundaryGhost, Some(j)) => {
                    let q = self
                        .points
                        .get(j)
                        .ok_or_else(|| DatagenError::Mesh(format!("ghost {i} pairs with missing point {j}")))?;
                    if q.pair != Some(i) || q.role != Role::BoundaryGhost {
                        return Err(DatagenError::Mesh(format!("ghost pair {i}/{j} is not mutual")));
                    }
                }
                (Role::BoundaryGhost, None) => {
                    return Err(DatagenError::Mesh(format!("ghost {i} has no partner")));
                }
                (_, Some(_)) => return Err(DatagenError::Mesh(format!("non-ghost point {i} has a partner"))),
                _ => {}
            }
        }
        Ok(())
    }

    /// CSV with columns `x,t|y,role,target,pair`; floats in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let second = if self.dim == 2 { "y" } else { "t" };
        let mut s = format!("x,{second},role,target,pair\n");
        for p in &self.points {
            let pair = p.pair.map(|j| j.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{:?},{:?},{},{:?},{}",
                p.coords[0],
                p.coords[1],
                p.role.as_str(),
                p.target,
                pair
            );
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, DatagenError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(DatagenError::Parse {
            line: 1,
            msg: "empty file".into(),
        })?;
        let dim = match header.trim() {
            "x,t,role,target,pair" => 1,
            "x,y,role,target,pair" => 2,
            other => {
                return Err(DatagenError::Parse {
                    line: 1,
                    msg: format!("unexpected header `{other}`"),
                })
            }
        };
        let mut points = Vec::new();
        for (i, line) in lines {
            let n = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let bad = |msg: &str| DatagenError::Parse {
                line: n,
                msg: msg.to_string(),
            };
            if f.len() != 5 {
                return Err(bad("expected 5 fields"));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(&e.to_string()));
            let role = Role::parse(f[2].trim()).ok_or_else(|| bad("unknown role"))?;
            let pair = match f[4].trim() {
                "" => None,
                s => Some(s.parse::<usize>().map_err(|e| bad(&e.to_string()))?),
            };
            points.push(CollocationPoint {
                coords: [num(f[0])?, num(f[1])?],
                role,
                target: num(f[3])?,
                pair,
            });
        }
        let set = Self { dim, points };
        set.validate()?;
        Ok(set)
    }
}

/// Mesh resolution for [`build_collocation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshSpec {
    /// Points along `x`.
    pub nx: usize,
    /// Points along the second axis: `t` in 1D, `y` in 2D.
    pub ny: usize,
    /// Ghost samples per plate edge (2D only).
    #[serde(default = "default_ghosts")]
    pub ghosts_per_edge: usize,
}

fn default_ghosts() -> usize {
    16
}

impl Default for MeshSpec {
    fn default() -> Self {
        Self {
            nx: 50,
            ny: 20,
            ghosts_per_edge: 16,
        }
    }
}

/// What to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Line(ForwardProblem1D),
    Plate(PlateProblem),
}

/// Uniform grid with targets from the generator.
///
/// 1D: `nx × ny` points, `x` at cell centres, `t_j = jT/(ny − 1)`; `t = 0` points are tagged
/// initial, the rest interior. 2D: `nx × ny` interior points `(i·a/(nx+1), j·b/(ny+1))`,
/// followed by ghost pairs mirrored across each edge at stratified random depths
/// `ξ ∈ [0, δ*]` and uniform positions along the edge.
pub fn build_collocation(generator: &Generator, mesh: &MeshSpec, seed: u64) -> Result<CollocationSet, DatagenError> {
    if mesh.nx == 0 || mesh.ny == 0 {
        return Err(DatagenError::Mesh("mesh counts must be positive".into()));
    }
    match generator {
        Generator::Line(problem) => {
            let grid = forward_solve_1d(problem, mesh.nx, mesh.ny)?;
            let mut points = Vec::with_capacity(mesh.nx * mesh.ny);
            for (j, &t) in grid.ts.iter().enumerate() {
                for (i, &x) in grid.xs.iter().enumerate() {
                    points.push(CollocationPoint {
                        coords: [x, t],
                        role: if j == 0 { Role::Initial } else { Role::Interior },
                        target: grid.at(i, j),
                        pair: None,
                    });
                }
            }
            Ok(CollocationSet { dim: 1, points })
        }
        Generator::Plate(plate) => {
            let sol = PlateSolution::new(*plate, plate.delta_true);
            let mut points = Vec::with_capacity(mesh.nx * mesh.ny + 8 * mesh.ghosts_per_edge);
            for j in 1..=mesh.ny {
                for i in 1..=mesh.nx {
                    let x = i as f64 * plate.a / (mesh.nx + 1) as f64;
                    let y = j as f64 * plate.b / (mesh.ny + 1) as f64;
                    points.push(CollocationPoint {
                        coords: [x, y],
                        role: Role::Interior,
                        target: sol.eval(x, y),
                        pair: None,
                    });
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = mesh.ghosts_per_edge;
            for edge in 0..4 {
                for k in 0..g {
                    let xi = plate.delta_true * (k as f64 + rng.random::<f64>()) / g as f64;
                    let along = rng.random::<f64>();
                    let (p, q) = match edge {
                        0 => {
                            let y = along * plate.b;
                            ([-xi, y], [xi, y])
                        }
                        1 => {
                            let y = along * plate.b;
                            ([plate.a + xi, y], [plate.a - xi, y])
                        }
                        2 => {
                            let x = along * plate.a;
                            ([x, -xi], [x, xi])
                        }
                        _ => {
                            let x = along * plate.a;
                            ([x, plate.b + xi], [x, plate.b - xi])
                        }
                    };
                    let i = points.len();
                    for (coords, pair) in [(p, i + 1), (q, i)] {
                        points.push(CollocationPoint {
                            coords,
                            role: Role::BoundaryGhost,
                            target: 0.0,
                            pair: Some(pair),
                        });
                    }
                }
            }
            Ok(CollocationSet { dim: 2, points })
        }
    }
}

/// Generator provenance written next to a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: Generator,
    pub mesh: MeshSpec,
    pub seed: u64,
    pub points: usize,
    pub crate_version: String,
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn write_dataset(
    dir: &Path,
    stem: &str,
    set: &CollocationSet,
    provenance: &Provenance,
) -> Result<(), DatagenError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{stem}.csv")), set.to_csv())?;
    let mut json = serde_json::to_string_pretty(provenance)?;
    json.push('\n');
    std::fs::write(dir.join(format!("{stem}.json")), json)?;
    Ok(())
}

/// Reads a dataset CSV and its JSON sidecar (same stem).
pub fn read_dataset(csv_path: &Path) -> Result<(CollocationSet, Provenance), DatagenError> {
    let set = CollocationSet::from_csv(&std::fs::read_to_string(csv_path)?)?;
    let prov: Provenance = serde_json::from_str(&std::fs::read_to_string(csv_path.with_extension("json"))?)?;
    Ok((set, prov))
}
