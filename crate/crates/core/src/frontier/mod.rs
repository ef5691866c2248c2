//! Online occupancy mapping and frontier extraction.

mod dbscan;
mod extract;
mod occupancy;

pub use dbscan::{dbscan, DbscanParams};
pub use extract::{
    angular_extent, cell_iou, cluster_boundary, extract_frontiers, split_wide, Frontier,
    FrontierConfig, FrontierExtractor, FrontierSummary,
};
pub use occupancy::{MapCell, OccupancyMap, EXPLORE_RADIUS_M};
