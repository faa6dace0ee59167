//! Image-similarity metrics, exact compute/communication accounting,
//! modeled energy, and two-sample statistics.

mod image;
mod ledger;
mod stats;

pub use image::{image_metrics, mae, psnr, ssim, ImageMetrics};
pub use ledger::{flops_for, CostModel, FlopCount, LedgerEntry, LedgerTotals};
pub use stats::{welch_ttest, TTestResult};
