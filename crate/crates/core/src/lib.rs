//! Quasi-static brittle fracture propagation driven by shape-optimization
//! descent on 2D triangle meshes.

pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod shapegrad;
pub mod optimizer;
pub mod cli;
