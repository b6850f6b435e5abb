//! Staggered (MAC) grid over an axis-aligned rectangle.
//!
//! Scalars (density, viscosity, pressure) live at cell centers, the x
//! velocity component at vertical face centers, the y component at
//! horizontal face centers. Boundary faces carry Dirichlet velocity data and
//! are classified into in-flux / out-flux / tangential zones from the sign
//! of the boundary-normal velocity.

use crate::fields::{CellField, FaceField, VectorSampler};
use crate::{Error, Result};

/// Coordinate axis of a velocity face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
}

/// Identifies one velocity face. x-faces are indexed by `i ∈ 0..=nx`,
/// `j ∈ 0..ny`; y-faces by `i ∈ 0..nx`, `j ∈ 0..=ny`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FaceId {
    pub axis: Axis,
    pub i: usize,
    pub j: usize,
}

impl FaceId {
    pub fn x(i: usize, j: usize) -> Self {
        Self { axis: Axis::X, i, j }
    }

    pub fn y(i: usize, j: usize) -> Self {
        Self { axis: Axis::Y, i, j }
    }
}

/// One boundary face with its outward normal and length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    pub face: FaceId,
    pub normal: [f64; 2],
    pub length: f64,
}

/// Classification of a boundary face at a given time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceClass {
    /// Boundary-normal velocity points inward (`b·n < -τ_n`): data enters.
    Inflow,
    /// Boundary-normal velocity points outward (`b·n > τ_n`): trace recorded.
    Outflow,
    /// `|b·n| ≤ τ_n`: no transport through the face.
    Tangential,
}

/// MAC grid of `nx × ny` cells over `[origin, origin + extent]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StaggeredGrid {
    origin: [f64; 2],
    extent: [f64; 2],
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    boundary_faces: Vec<BoundaryFace>,
}

/// Build a staggered grid; fails on nonpositive extent or fewer than two
/// cells per direction.
pub fn build_grid(origin: [f64; 2], extent: [f64; 2], nx: usize, ny: usize) -> Result<StaggeredGrid> {
    StaggeredGrid::new(origin, extent, nx, ny)
}

impl StaggeredGrid {
    pub fn new(origin: [f64; 2], extent: [f64; 2], nx: usize, ny: usize) -> Result<Self> {
        for (axis, name) in [(0usize, "extent.x"), (1, "extent.y")] {
            if !(extent[axis] > 0.0) || !extent[axis].is_finite() {
                return Err(Error::Config {
                    field: name.to_string(),
                    message: format!("must be strictly positive, got {}", extent[axis]),
                });
            }
        }
        for (n, name) in [(nx, "nx"), (ny, "ny")] {
            if n < 2 {
                return Err(Error::Config {
                    field: name.to_string(),
                    message: format!("needs at least 2 cells, got {n}"),
                });
            }
        }
        let hx = extent[0] / nx as f64;
        let hy = extent[1] / ny as f64;

        // Left column, right column, bottom row, top row. Each boundary face
        // appears exactly once; interior faces never do.
        let mut boundary_faces = Vec::with_capacity(2 * nx + 2 * ny);
        for j in 0..ny {
            boundary_faces.push(BoundaryFace {
                face: FaceId::x(0, j),
                normal: [-1.0, 0.0],
                length: hy,
            });
        }
        for j in 0..ny {
            boundary_faces.push(BoundaryFace {
                face: FaceId::x(nx, j),
                normal: [1.0, 0.0],
                length: hy,
            });
        }
        for i in 0..nx {
            boundary_faces.push(BoundaryFace {
                face: FaceId::y(i, 0),
                normal: [0.0, -1.0],
                length: hx,
            });
        }
        for i in 0..nx {
            boundary_faces.push(BoundaryFace {
                face: FaceId::y(i, ny),
                normal: [0.0, 1.0],
                length: hx,
            });
        }

        Ok(Self {
            origin,
            extent,
            nx,
            ny,
            hx,
            hy,
            boundary_faces,
        })
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn extent(&self) -> [f64; 2] {
        self.extent
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_x_faces(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    pub fn n_y_faces(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    pub fn domain_area(&self) -> f64 {
        self.extent[0] * self.extent[1]
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * (self.extent[0] + self.extent[1])
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.hx,
            self.origin[1] + (j as f64 + 0.5) * self.hy,
        ]
    }

    /// Position of the grid node (cell corner) `(i, j)`, `i ∈ 0..=nx`, `j ∈ 0..=ny`.
    pub fn node_pos(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + i as f64 * self.hx,
            self.origin[1] + j as f64 * self.hy,
        ]
    }

    pub fn face_center(&self, face: FaceId) -> [f64; 2] {
        match face.axis {
            Axis::X => [
                self.origin[0] + face.i as f64 * self.hx,
                self.origin[1] + (face.j as f64 + 0.5) * self.hy,
            ],
            Axis::Y => [
                self.origin[0] + (face.i as f64 + 0.5) * self.hx,
                self.origin[1] + face.j as f64 * self.hy,
            ],
        }
    }

    pub fn face_length(&self, face: FaceId) -> f64 {
        match face.axis {
            Axis::X => self.hy,
            Axis::Y => self.hx,
        }
    }

    pub fn is_boundary_face(&self, face: FaceId) -> bool {
        match face.axis {
            Axis::X => face.i == 0 || face.i == self.nx,
            Axis::Y => face.j == 0 || face.j == self.ny,
        }
    }

    /// All boundary faces in a fixed order: left column bottom-up, right
    /// column, bottom row left-to-right, top row.
    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary_faces
    }

    /// Position of a boundary face inside [`Self::boundary_faces`], or `None`
    /// for interior faces.
    pub fn boundary_position(&self, face: FaceId) -> Option<usize> {
        match face.axis {
            Axis::X if face.i == 0 => Some(face.j),
            Axis::X if face.i == self.nx => Some(self.ny + face.j),
            Axis::Y if face.j == 0 => Some(2 * self.ny + face.i),
            Axis::Y if face.j == self.ny => Some(2 * self.ny + self.nx + face.i),
            _ => None,
        }
    }

    /// Serial face number used in output files: x-faces first, then y-faces.
    pub fn face_serial(&self, face: FaceId) -> usize {
        match face.axis {
            Axis::X => face.j * (self.nx + 1) + face.i,
            Axis::Y => self.n_x_faces() + face.j * self.nx + face.i,
        }
    }
}

/// Sign partition of the boundary at one time, with the flux-measure weights
/// `|b·n| · length` per face (Jordan decomposition of the boundary measure).
#[derive(Debug, Clone)]
pub struct BoundaryPartition {
    pub time: f64,
    pub inflow: Vec<FaceId>,
    pub outflow: Vec<FaceId>,
    pub tangential: Vec<FaceId>,
    /// Class per face, aligned with `StaggeredGrid::boundary_faces`.
    pub classes: Vec<FaceClass>,
    /// `|b·n| · length` per face, aligned with `StaggeredGrid::boundary_faces`.
    pub weights: Vec<f64>,
}

impl BoundaryPartition {
    pub fn class_of(&self, grid: &StaggeredGrid, face: FaceId) -> Option<FaceClass> {
        grid.boundary_position(face).map(|k| self.classes[k])
    }
}

/// Classify every boundary face by the sign of `b·n` at its midpoint, with a
/// dead-band `τ_n` deciding the tangential set.
pub fn classify_boundary<B: VectorSampler + ?Sized>(
    grid: &StaggeredGrid,
    b: &B,
    t: f64,
    tau_n: f64,
) -> BoundaryPartition {
    let nb = grid.boundary_faces().len();
    let mut part = BoundaryPartition {
        time: t,
        inflow: Vec::new(),
        outflow: Vec::new(),
        tangential: Vec::new(),
        classes: Vec::with_capacity(nb),
        weights: Vec::with_capacity(nb),
    };
    for bf in grid.boundary_faces() {
        let [x, y] = grid.face_center(bf.face);
        let bv = b.eval(t, x, y);
        let bn = bv[0] * bf.normal[0] + bv[1] * bf.normal[1];
        let class = if bn < -tau_n {
            FaceClass::Inflow
        } else if bn > tau_n {
            FaceClass::Outflow
        } else {
            FaceClass::Tangential
        };
        match class {
            FaceClass::Inflow => part.inflow.push(bf.face),
            FaceClass::Outflow => part.outflow.push(bf.face),
            FaceClass::Tangential => part.tangential.push(bf.face),
        }
        part.classes.push(class);
        part.weights.push(bn.abs() * bf.length);
    }
    part
}

/// Discrete divergence of a face field: per cell
/// `(u_{i+1,j} − u_{i,j})/hx + (v_{i,j+1} − v_{i,j})/hy`.
pub fn discrete_divergence(grid: &StaggeredGrid, vel: &FaceField) -> CellField {
    vel.assert_grid(grid);
    let mut out = CellField::zeros(grid);
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let d = (vel.u(i + 1, j) - vel.u(i, j)) / grid.hx()
                + (vel.v(i, j + 1) - vel.v(i, j)) / grid.hy();
            out.set(i, j, d);
        }
    }
    out
}

/// Discrete gradient of a cell field on faces. Interior faces take the
/// two-point difference; boundary faces are left at zero (velocity there is
/// prescribed, so no pressure gradient is ever needed on them).
pub fn discrete_gradient(grid: &StaggeredGrid, p: &CellField) -> FaceField {
    p.assert_grid(grid);
    let mut out = FaceField::zeros(grid);
    for j in 0..grid.ny() {
        for i in 1..grid.nx() {
            out.set_u(i, j, (p.get(i, j) - p.get(i - 1, j)) / grid.hx());
        }
    }
    for j in 1..grid.ny() {
        for i in 0..grid.nx() {
            out.set_v(i, j, (p.get(i, j) - p.get(i, j - 1)) / grid.hy());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{CellField, FaceField};
    use proptest::prelude::*;

    #[test]
    fn unit_square_counts() {
        let g = build_grid([0.0, 0.0], [1.0, 1.0], 4, 4).unwrap();
        assert_eq!(g.hx(), 0.25);
        assert_eq!(g.hy(), 0.25);
        assert_eq!(g.n_cells(), 16);
        assert_eq!(g.n_x_faces(), 20);
        assert_eq!(g.n_y_faces(), 20);
        assert_eq!(g.boundary_faces().len(), 16);
    }

    #[test]
    fn rectangular_cell_sizes() {
        let g = build_grid([0.0, 0.0], [2.0, 1.0], 4, 2).unwrap();
        assert_eq!(g.hx(), 0.5);
        assert_eq!(g.hy(), 0.5);
    }

    #[test]
    fn negative_extent_rejected() {
        let err = build_grid([0.0, 0.0], [1.0, -1.0], 4, 4).unwrap_err();
        match err {
            Error::Config { field, .. } => assert_eq!(field, "extent.y"),
            other => panic!("expected Config error, got {other}"),
        }
    }

    #[test]
    fn too_few_cells_rejected() {
        let err = build_grid([0.0, 0.0], [1.0, 1.0], 1, 4).unwrap_err();
        match err {
            Error::Config { field, .. } => assert_eq!(field, "nx"),
            other => panic!("expected Config error, got {other}"),
        }
    }

    #[test]
    fn refining_quarters_cell_area() {
        let g1 = build_grid([0.0, 0.0], [3.0, 2.0], 6, 4).unwrap();
        let g2 = build_grid([0.0, 0.0], [3.0, 2.0], 12, 8).unwrap();
        assert_eq!(g2.cell_area(), g1.cell_area() / 4.0);
        assert_eq!(g2.n_cells(), 4 * g1.n_cells());
        assert_eq!(g2.n_x_faces(), (12 + 1) * 8);
        assert_eq!(g2.n_y_faces(), 12 * (8 + 1));
        assert_eq!(g2.boundary_faces().len(), 2 * 12 + 2 * 8);
    }

    #[test]
    fn boundary_faces_unique_and_positions_consistent() {
        let g = build_grid([0.0, 0.0], [1.0, 1.0], 5, 3).unwrap();
        let mut seen = std::collections::HashSet::new();
        for (k, bf) in g.boundary_faces().iter().enumerate() {
            assert!(seen.insert(bf.face), "duplicate boundary face {:?}", bf.face);
            assert!(g.is_boundary_face(bf.face));
            assert_eq!(g.boundary_position(bf.face), Some(k));
        }
        assert_eq!(g.boundary_position(FaceId::x(2, 1)), None);
    }

    #[test]
    fn zero_velocity_is_all_tangential() {
        let g = build_grid([0.0, 0.0], [1.0, 1.0], 4, 4).unwrap();
        let part = classify_boundary(&g, &|_t: f64, _x: f64, _y: f64| [0.0, 0.0], 0.0, 1e-12);
        assert!(part.inflow.is_empty());
        assert!(part.outflow.is_empty());
        assert_eq!(part.tangential.len(), 16);
        assert!(part.weights.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn channel_flow_classification() {
        let g = build_grid([0.0, 0.0], [1.0, 1.0], 4, 4).unwrap();
        let part = classify_boundary(&g, &|_t: f64, _x: f64, _y: f64| [1.0, 0.0], 0.0, 1e-12);
        assert_eq!(part.inflow.len(), 4);
        assert_eq!(part.outflow.len(), 4);
        assert_eq!(part.tangential.len(), 8);
        assert!(part.inflow.iter().all(|f| f.axis == Axis::X && f.i == 0));
        assert!(part.outflow.iter().all(|f| f.axis == Axis::X && f.i == 4));
        // weights |b·n|·length = 1 · hy on the active faces
        for (bf, &w) in g.boundary_faces().iter().zip(&part.weights) {
            let expect = if bf.face.axis == Axis::X { 0.25 } else { 0.0 };
            assert!((w - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn outward_normal_velocity_is_all_outflow() {
        let g = build_grid([0.0, 0.0], [1.0, 1.0], 4, 3).unwrap();
        // b = n: pick the normal from the face position on the rectangle edge.
        let b = move |_t: f64, x: f64, y: f64| -> [f64; 2] {
            if x == 0.0 {
                [-1.0, 0.0]
            } else if x == 1.0 {
                [1.0, 0.0]
            } else if y == 0.0 {
                [0.0, -1.0]
            } else {
                [0.0, 1.0]
            }
        };
        let part = classify_boundary(&g, &b, 0.0, 1e-12);
        assert_eq!(part.outflow.len(), g.boundary_faces().len());
        assert!(part.inflow.is_empty() && part.tangential.is_empty());
    }

    #[test]
    fn divergence_of_constant_field_is_zero() {
        let g = build_grid([0.0, 0.0], [1.0, 1.0], 4, 4).unwrap();
        let vel = FaceField::from_fn(&g, |_x, _y| 3.0, |_x, _y| -2.0);
        let div = discrete_divergence(&g, &vel);
        assert!(div.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn divergence_of_linear_solenoidal_field_is_zero() {
        let g = build_grid([0.0, 0.0], [1.0, 1.0], 5, 3).unwrap();
        let vel = FaceField::from_fn(&g, |x, _y| x, |_x, y| -y);
        let div = discrete_divergence(&g, &vel);
        assert!(div.iter().all(|&d| d.abs() < 1e-14));
    }

    #[test]
    fn divergence_of_x_field_is_one() {
        let g = build_grid([0.0, 0.0], [2.0, 1.0], 4, 2).unwrap();
        let vel = FaceField::from_fn(&g, |x, _y| x, |_x, _y| 0.0);
        let div = discrete_divergence(&g, &vel);
        assert!(div.iter().all(|&d| (d - 1.0).abs() < 1e-14));
    }

    #[test]
    fn gradient_of_constant_pressure_vanishes() {
        let g = build_grid([0.0, 0.0], [1.0, 1.0], 4, 4).unwrap();
        let p = CellField::from_fn(&g, |_x, _y| 7.0);
        let grad = discrete_gradient(&g, &p);
        assert!(grad.u_data().iter().all(|&v| v == 0.0));
        assert!(grad.v_data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_of_linear_pressure_is_one_on_interior_x_faces() {
        let g = build_grid([0.0, 0.0], [1.0, 1.0], 4, 4).unwrap();
        let p = CellField::from_fn(&g, |x, _y| x);
        let grad = discrete_gradient(&g, &p);
        for j in 0..4 {
            for i in 1..4 {
                assert!((grad.u(i, j) - 1.0).abs() < 1e-14);
            }
            assert_eq!(grad.u(0, j), 0.0);
            assert_eq!(grad.u(4, j), 0.0);
        }
    }

    /// ⟨div v, p⟩ = −⟨v, grad p⟩ for v vanishing on boundary faces, both
    /// inner products weighted by the uniform cell area.
    #[test]
    fn divergence_gradient_adjointness() {
        let g = build_grid([0.0, 0.0], [1.0, 1.0], 4, 4).unwrap();
        let mut rng: u64 = 0x9E3779B97F4A7C15;
        let mut next = move || {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..20 {
            let mut vel = FaceField::zeros(&g);
            for j in 0..g.ny() {
                for i in 1..g.nx() {
                    vel.set_u(i, j, next());
                }
            }
            for j in 1..g.ny() {
                for i in 0..g.nx() {
                    vel.set_v(i, j, next());
                }
            }
            let mut p = CellField::zeros(&g);
            for c in p.iter_mut() {
                *c = next();
            }
            let div = discrete_divergence(&g, &vel);
            let grad = discrete_gradient(&g, &p);
            let lhs: f64 = div.iter().zip(p.iter()).map(|(d, q)| d * q).sum::<f64>();
            let rhs: f64 = grad
                .u_data()
                .iter()
                .zip(vel.u_data())
                .map(|(a, b)| a * b)
                .sum::<f64>()
                + grad
                    .v_data()
                    .iter()
                    .zip(vel.v_data())
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            assert!(
                (lhs + rhs).abs() < 1e-12,
                "adjointness defect {:e}",
                lhs + rhs
            );
        }
    }

    /// div∘grad assembled on interior unknowns is symmetric negative
    /// semidefinite (homogeneous-Neumann Laplacian up to scaling).
    #[test]
    fn div_grad_is_symmetric_negative_semidefinite() {
        let g = build_grid([0.0, 0.0], [1.0, 1.0], 4, 3).unwrap();
        let n = g.n_cells();
        let mut mat = vec![vec![0.0; n]; n];
        for k in 0..n {
            let mut p = CellField::zeros(&g);
            p.as_mut_slice()[k] = 1.0;
            let lp = discrete_divergence(&g, &discrete_gradient(&g, &p));
            for (r, &v) in lp.iter().enumerate() {
                mat[r][k] = v;
            }
        }
        for r in 0..n {
            for c in 0..n {
                assert!(
                    (mat[r][c] - mat[c][r]).abs() < 1e-12,
                    "asymmetry at ({r},{c})"
                );
            }
        }
        let mut rng: u64 = 42;
        for _ in 0..10 {
            let x: Vec<f64> = (0..n)
                .map(|_| {
                    rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    (rng >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                })
                .collect();
            let mut quad = 0.0;
            for r in 0..n {
                for c in 0..n {
                    quad += x[r] * mat[r][c] * x[c];
                }
            }
            assert!(quad <= 1e-12, "positive quadratic form {quad:e}");
        }
    }

    proptest! {
        /// The three classification sets partition the boundary for any
        /// sampler and any time.
        #[test]
        fn partition_property(
            a0 in -2.0..2.0f64, a1 in -2.0..2.0f64, a2 in -2.0..2.0f64,
            b0 in -2.0..2.0f64, b1 in -2.0..2.0f64, b2 in -2.0..2.0f64,
            t in 0.0..5.0f64,
            nx in 2usize..7, ny in 2usize..7,
        ) {
            let g = build_grid([0.0, 0.0], [1.0, 1.5], nx, ny).unwrap();
            let b = move |tt: f64, x: f64, y: f64| {
                [a0 + a1 * x + a2 * y * tt, b0 + b1 * y + b2 * x]
            };
            let part = classify_boundary(&g, &b, t, 1e-12);
            let total = part.inflow.len() + part.outflow.len() + part.tangential.len();
            prop_assert_eq!(total, g.boundary_faces().len());
            let mut all: Vec<FaceId> = part.inflow.iter()
                .chain(&part.outflow)
                .chain(&part.tangential)
                .copied()
                .collect();
            all.sort_by_key(|f| (matches!(f.axis, Axis::Y), f.i, f.j));
            all.dedup();
            prop_assert_eq!(all.len(), g.boundary_faces().len());
            for &w in &part.weights {
                prop_assert!(w >= 0.0);
            }
            // tangential faces carry sub-dead-band weight
            for (k, bf) in g.boundary_faces().iter().enumerate() {
                if part.classes[k] == FaceClass::Tangential {
                    prop_assert!(part.weights[k] <= 1e-12 * bf.length + f64::EPSILON);
                }
            }
        }
    }
}
