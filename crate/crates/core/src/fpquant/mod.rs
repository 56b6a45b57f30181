//! Low-bit floating-point emulation, error analysis and format search.

mod analytic;
mod format;
mod quantizer;

pub use analytic::{
    allocation_csv, allocation_errors, allocation_table, expected_relative_error,
    expected_relative_error_lognormal, expected_relative_error_lognormal_with,
    expected_relative_error_normal, expected_relative_error_normal_with, optimal_allocation,
    sigma_grid, AllocationRow, MantissaModel, Prior, ALLOCATION_CSV_HEADER, DEFAULT_SIGMA_STEP,
    MANTISSA_TERM_NO_BITS,
};
pub use format::{FpFormat, MAX_EXPONENT_BITS, MAX_MANTISSA_BITS};
pub use quantizer::{
    gradient_scale, is_representable, quantize_tensor, quantize_value, QuantStats,
    QuantizedTensor, ScaleMode,
};
