//! Cell fields and the discrete L², H¹ and gradient operators on them.

use crate::geometry::Point2;
use crate::mesh::{EdgeRef, Mesh};
use crate::sum::{compensated_sum, CompensatedSum};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FieldError {
    #[error("field has {got} values but the mesh has {expected} cells")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value {value} in cell {cell}")]
    NonFinite { cell: usize, value: f64 },
    #[error("fields live on different meshes")]
    MeshMismatch,
}

/// One real value per control volume.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField<'m> {
    mesh: &'m Mesh,
    values: Vec<f64>,
}

impl<'m> CellField<'m> {
    pub fn new(mesh: &'m Mesh, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != mesh.num_cells() {
            return Err(FieldError::LengthMismatch { expected: mesh.num_cells(), got: values.len() });
        }
        if let Some((cell, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(FieldError::NonFinite { cell, value });
        }
        Ok(Self { mesh, values })
    }

    pub fn constant(mesh: &'m Mesh, value: f64) -> Self {
        assert!(value.is_finite(), "constant field must be finite");
        Self { mesh, values: vec![value; mesh.num_cells()] }
    }

    pub fn zeros(mesh: &'m Mesh) -> Self {
        Self::constant(mesh, 0.0)
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Applies `f` cell-wise.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Result<CellField<'m>, FieldError> {
        CellField::new(self.mesh, self.values.iter().map(|&v| f(v)).collect())
    }

    /// `self - other`, cell-wise.
    pub fn sub(&self, other: &CellField<'_>) -> Result<CellField<'m>, FieldError> {
        same_mesh(self.mesh, other.mesh)?;
        CellField::new(self.mesh, self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect())
    }

    /// `min_K u_K` and `max_K u_K`.
    pub fn range(&self) -> (f64, f64) {
        self.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

impl std::ops::Index<usize> for CellField<'_> {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.values[k]
    }
}

pub(crate) fn same_mesh(a: &Mesh, b: &Mesh) -> Result<(), FieldError> {
    if std::ptr::eq(a, b) || a == b {
        Ok(())
    } else {
        Err(FieldError::MeshMismatch)
    }
}

/// Piecewise-constant vector field on diamonds; zero on boundary edges.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeVectorField<'m> {
    mesh: &'m Mesh,
    interior: Vec<Point2>,
}

impl<'m> EdgeVectorField<'m> {
    pub fn get(&self, edge: EdgeRef) -> Point2 {
        match edge {
            EdgeRef::Interior(i) => self.interior[i],
            EdgeRef::Boundary(_) => Point2::default(),
        }
    }

    pub fn interior(&self) -> &[Point2] {
        &self.interior
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    /// `Σ_σ m_Dσ |∇_σ|²`.
    pub fn l2_norm_sq(&self) -> f64 {
        compensated_sum(self.mesh.interior_edges().iter().zip(&self.interior).map(|(e, g)| e.diamond_area * g.dot(*g)))
    }
}

pub fn l2_norm_sq(f: &CellField<'_>) -> f64 {
    compensated_sum(f.mesh.cells().iter().zip(&f.values).map(|(c, v)| c.area * v * v))
}

/// `(Σ_K m_K w_K²)^{1/2}`.
pub fn l2_norm(f: &CellField<'_>) -> f64 {
    l2_norm_sq(f).sqrt()
}

/// `Σ_K m_K |w_K|`.
pub fn l1_norm(f: &CellField<'_>) -> f64 {
    compensated_sum(f.mesh.cells().iter().zip(&f.values).map(|(c, v)| c.area * v.abs()))
}

/// `Σ_K m_K w_K`.
pub fn mass(f: &CellField<'_>) -> f64 {
    compensated_sum(f.mesh.cells().iter().zip(&f.values).map(|(c, v)| c.area * v))
}

/// `Σ_K m_K a_K b_K`.
pub fn l2_inner(a: &CellField<'_>, b: &CellField<'_>) -> Result<f64, FieldError> {
    same_mesh(a.mesh, b.mesh)?;
    Ok(compensated_sum(a.mesh.cells().iter().zip(a.values.iter().zip(&b.values)).map(|(c, (x, y))| c.area * x * y)))
}

pub fn h1_seminorm_sq(f: &CellField<'_>) -> f64 {
    compensated_sum(f.mesh.interior_edges().iter().map(|e| {
        let d = f.values[e.cells.0] - f.values[e.cells.1];
        e.transmissibility() * d * d
    }))
}

/// `(Σ_{σ=K|L} (m_σ/d_KL)(w_K - w_L)²)^{1/2}`.
pub fn h1_seminorm(f: &CellField<'_>) -> f64 {
    h1_seminorm_sq(f).sqrt()
}

/// `∇_σ w = 2 (w_L - w_K)/d_KL · n_Kσ` on interior edges, zero on the boundary.
pub fn discrete_gradient<'m>(f: &CellField<'m>) -> EdgeVectorField<'m> {
    let interior = f
        .mesh
        .interior_edges()
        .iter()
        .map(|e| e.normal * (2.0 * (f.values[e.cells.1] - f.values[e.cells.0]) / e.center_distance))
        .collect();
    EdgeVectorField { mesh: f.mesh, interior }
}

/// Both sides of the discrete integration-by-parts rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Duality {
    /// `Σ_K Σ_{σ=K|L ∈ E_K} (m_σ/d_KL)(w_K - w_L) w̃_K`
    pub lhs: f64,
    /// `Σ_{σ=K|L} (m_σ/d_KL)(w_K - w_L)(w̃_K - w̃_L)`
    pub rhs: f64,
}

pub fn duality_form(w: &CellField<'_>, wt: &CellField<'_>) -> Result<Duality, FieldError> {
    same_mesh(w.mesh, wt.mesh)?;
    let mesh = w.mesh;
    let mut lhs = CompensatedSum::new();
    for k in 0..mesh.num_cells() {
        for &r in mesh.cell_edges(k) {
            if let EdgeRef::Interior(i) = r {
                let e = &mesh.interior_edges()[i];
                let l = if e.cells.0 == k { e.cells.1 } else { e.cells.0 };
                lhs.add(e.transmissibility() * (w.values[k] - w.values[l]) * wt.values[k]);
            }
        }
    }
    let rhs = compensated_sum(mesh.interior_edges().iter().map(|e| {
        let (k, l) = e.cells;
        e.transmissibility() * (w.values[k] - w.values[l]) * (wt.values[k] - wt.values[l])
    }));
    Ok(Duality { lhs: lhs.value(), rhs })
}
