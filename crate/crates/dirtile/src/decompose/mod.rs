//! Tile organization: densities, size, trees and forests, the density cover,
//! the maximal organization, square functions and the interval iteration.

pub mod cover;
pub mod density;
pub mod forest;
pub mod frame;
pub mod jn;
pub mod maximal;
pub mod size;
pub mod square;
pub mod text;

pub use cover::{density_cover, CoverDiagnostics};
pub use density::{density_stats, density_stratify, DensityStats, Strata, TileStats};
pub use forest::{organize, Forest, ForestTree};
pub use jn::{john_nirenberg_levels, JnLevels};
pub use maximal::{maximal_organize, MaximalOrganization};
pub use size::{pantry_partition, size_iteration, size_of, SizeResult};
pub use square::{tree_square_function, SquareKind};
