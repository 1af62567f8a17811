//! Scan-synthesis metrics, occupancy extraction, Chamfer metrics and CFAR.

mod bev;
mod cfar;
mod chamfer;
mod image;
mod occupancy;
mod report;

pub use bev::{BevPointSet, BevSource};
pub use cfar::{cfar_detect, cfar_mask, CfarConfig};
pub use chamfer::{chamfer, relative_chamfer};
pub use image::{joint_normalize, psnr, psnr_from_mse, ssim, ssim_from_moments, ssim_image, PSNR_CAP, SSIM_WINDOW};
pub use occupancy::{extract_occupancy_bev, occupancy_on_grid, occupancy_power_contrast, BevGrid, OccupancyContrast};
pub use report::{geometry_metrics, FrameMetrics, MetricMeans, MetricReport};
