//! Streaming intensity-correlation estimators and their analysis.

mod accumulator;
mod analysis;
mod exact;
mod fit;

pub use accumulator::{CorrelationAccumulator, CorrelationMode, CorrelationReport, SiteBox};
pub use analysis::{
    delta_g, radial_autocorrelation, snr_estimate, visibility, visibility_with_error,
    IntensityMoments, SnrEstimate,
};
pub(crate) use analysis::argmax;
pub use fit::{fit_gaussian_peak, PeakFit};
