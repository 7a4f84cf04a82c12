//! Role-tagged matrices: the common carrier for endomorphisms and bilinear
//! forms.

use serde::{Deserialize, Serialize};

use crate::numkernel::{skew_residual, symmetry_residual, Matrix, Tolerance};

/// Tensor type of a structure matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TensorKind {
    /// (1,1): an endomorphism.
    #[serde(rename = "1,1")]
    Endomorphism,
    /// (2,0): a bilinear form `B(u,v) = uᵀ·S·v`.
    #[serde(rename = "2,0")]
    Bilinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Endomorphism,
    SymmetricForm,
    SkewForm,
    /// A (2,0) tensor with no symmetry assumption.
    Form,
}

impl Role {
    pub fn kind(self) -> TensorKind {
        match self {
            Role::Endomorphism => TensorKind::Endomorphism,
            _ => TensorKind::Bilinear,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureMatrix {
    pub matrix: Matrix,
    pub role: Role,
}

impl StructureMatrix {
    pub fn new(matrix: Matrix, role: Role) -> Self {
        Self { matrix, role }
    }

    pub fn endomorphism(matrix: Matrix) -> Self {
        Self::new(matrix, Role::Endomorphism)
    }

    pub fn symmetric(matrix: Matrix) -> Self {
        Self::new(matrix, Role::SymmetricForm)
    }

    pub fn skew(matrix: Matrix) -> Self {
        Self::new(matrix, Role::SkewForm)
    }

    pub fn kind(&self) -> TensorKind {
        self.role.kind()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Whether the matrix symmetry agrees with the role tag.
    pub fn role_residual(&self) -> f64 {
        match self.role {
            Role::SymmetricForm => symmetry_residual(&self.matrix),
            Role::SkewForm => skew_residual(&self.matrix),
            Role::Endomorphism | Role::Form => 0.0,
        }
    }

    pub fn role_consistent(&self, tol: Tolerance) -> bool {
        self.matrix.is_square() && self.role_residual() <= tol.threshold(self.matrix.norm())
    }
}
