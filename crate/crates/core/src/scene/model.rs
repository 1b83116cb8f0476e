use std::collections::HashMap;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

/// A rigid object: vertices in meters, optional triangles, and its discrete
/// symmetry set (always containing the identity).
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectModel {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[usize; 3]>,
    pub symmetries: Vec<RigidTransform>,
    /// Max pairwise vertex distance.
    pub diameter: f64,
    /// Every edge shared by exactly two oppositely wound triangles; enables
    /// back-face culling.
    pub closed: bool,
}

impl ObjectModel {
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::Empty("model has no vertices".into()));
        }
        if vertices.iter().flat_map(|v| v.iter()).any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite vertex coordinate".into()));
        }
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= vertices.len())) {
            return Err(Error::InvalidArgument(format!(
                "triangle {t:?} indexes past {} vertices",
                vertices.len()
            )));
        }
        let diameter = diameter(&vertices);
        if diameter <= 0.0 {
            return Err(Error::InvalidArgument("model diameter is zero".into()));
        }
        let closed = !triangles.is_empty() && is_watertight(&triangles);
        Ok(Self {
            vertices,
            triangles,
            symmetries: vec![RigidTransform::identity()],
            diameter,
            closed,
        })
    }

    /// Replaces the symmetry set; the identity is added when missing.
    pub fn with_symmetries(mut self, symmetries: Vec<RigidTransform>) -> Result<Self> {
        if let Some(s) = symmetries.iter().find(|s| !s.is_valid(1e-6)) {
            return Err(Error::InvalidArgument(format!(
                "symmetry is not a rigid transform: {s:?}"
            )));
        }
        let mut set = symmetries;
        if !set.iter().any(|s| s.approx_eq(&RigidTransform::identity(), 1e-12)) {
            set.insert(0, RigidTransform::identity());
        }
        self.symmetries = set;
        Ok(self)
    }

    /// Axis-aligned box centered at the origin, outward-facing triangles.
    pub fn cuboid(sx: f64, sy: f64, sz: f64) -> Result<Self> {
        let (vertices, triangles) = box_mesh(Vector3::zeros(), Vector3::new(sx, sy, sz), 0);
        Self::new(vertices, triangles)
    }

    /// Two overlapping boxes forming an L, with no rotational symmetry.
    pub fn l_block() -> Self {
        let (mut v, mut t) = box_mesh(Vector3::new(-0.01, -0.015, 0.0), Vector3::new(0.12, 0.05, 0.05), 0);
        let (v2, t2) = box_mesh(
            Vector3::new(0.03, 0.025, -0.005),
            Vector3::new(0.04, 0.09, 0.06),
            v.len(),
        );
        v.extend(v2);
        t.extend(t2);
        Self::new(v, t).expect("fixed mesh is valid")
    }

    /// Regular-ish tetrahedron with outward faces.
    pub fn tetrahedron() -> Self {
        let v = vec![
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(0.0, 0.0, 0.0),
        ];
        let t = orient_outward(&v, vec![[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]]);
        Self::new(v, t).expect("fixed mesh is valid")
    }

    /// True when at least four vertices span a volume.
    pub fn is_solvable(&self) -> bool {
        let p0 = self.vertices[0];
        let mut basis: Vec<Vector3<f64>> = Vec::new();
        for p in &self.vertices[1..] {
            let mut d = p - p0;
            for b in &basis {
                d -= b * b.dot(&d);
            }
            if d.norm() > 1e-9 * self.diameter {
                basis.push(d.normalize());
                if basis.len() == 3 {
                    return true;
                }
            }
        }
        false
    }

    /// Vertices mapped through `g`.
    pub fn transformed(&self, g: &RigidTransform) -> Self {
        let mut out = self.clone();
        for v in &mut out.vertices {
            *v = g.transform_point(v);
        }
        out
    }
}

/// Max pairwise distance by brute force.
pub fn diameter(vertices: &[Vector3<f64>]) -> f64 {
    (0..vertices.len())
        .into_par_iter()
        .map(|i| {
            vertices[i + 1..]
                .iter()
                .map(|q| (vertices[i] - q).norm_squared())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
        .sqrt()
}

fn is_watertight(triangles: &[[usize; 3]]) -> bool {
    let mut edges: HashMap<(usize, usize), i32> = HashMap::new();
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *edges.entry((a, b)).or_default() += 1;
        }
    }
    edges
        .iter()
        .all(|(&(a, b), &n)| n == 1 && edges.get(&(b, a)) == Some(&1))
}

fn box_mesh(center: Vector3<f64>, size: Vector3<f64>, offset: usize) -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let half = size * 0.5;
    let vertices: Vec<Vector3<f64>> = (0..8)
        .map(|i| {
            let s = |bit: usize| if i & bit != 0 { 1.0 } else { -1.0 };
            center + Vector3::new(s(1) * half.x, s(2) * half.y, s(4) * half.z)
        })
        .collect();
    // quads as corner bit patterns, one per face
    let quads = [
        [0, 2, 6, 4],
        [1, 3, 7, 5],
        [0, 1, 5, 4],
        [2, 3, 7, 6],
        [0, 1, 3, 2],
        [4, 5, 7, 6],
    ];
    let tris = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    let tris = orient_outward(&vertices, tris)
        .into_iter()
        .map(|t| [t[0] + offset, t[1] + offset, t[2] + offset])
        .collect();
    (vertices, tris)
}

/// Flips triangles of a convex mesh so their normals point away from the centroid.
fn orient_outward(vertices: &[Vector3<f64>], tris: Vec<[usize; 3]>) -> Vec<[usize; 3]> {
    let c = vertices.iter().sum::<Vector3<f64>>() / vertices.len() as f64;
    tris.into_iter()
        .map(|[a, b, cc]| {
            let (pa, pb, pc) = (vertices[a], vertices[b], vertices[cc]);
            let n = (pb - pa).cross(&(pc - pa));
            let centroid = (pa + pb + pc) / 3.0;
            if n.dot(&(centroid - c)) < 0.0 {
                [a, cc, b]
            } else {
                [a, b, cc]
            }
        })
        .collect()
}
