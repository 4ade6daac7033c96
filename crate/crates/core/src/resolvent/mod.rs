//! Lattice resolvent `R0(z) = (H0 - z)^{-1}`: kernel tables, finite-section
//! operator norms, weighted (Birman–Schwinger) norms and scans over `z`.

mod fft3;
mod kernel;
mod norms;
mod scan;
mod text;

pub use fft3::{fft3_in_place, smooth_size, Fft3};
pub use kernel::{kernel, kernel_auto, kernel_time_domain, KernelMethod, ResolventGrid};
pub use norms::{
    finite_section_norm, finite_section_norm_with, holder_equivalence_test, matrix_pq_norm, pq_norm, pq_norm_from, weighted_bs_norm,
    weighted_bs_norm_with, DenseOperator, HolderResult, LinearOperator, NormEstimate, NormOptions, SectionOperator, WeightSpec,
};
pub use scan::{
    ls_slope, section_norm_scan, threshold_scan, threshold_scan_with, uniformity_scan, uniformity_z_grid, NormRow,
    NormScanReport, ThresholdScanOptions, ThresholdSlope, UniformityReport,
};
pub use text::{parse_kernel_text, write_kernel_text, MAX_TEXT_BOX_RADIUS};
