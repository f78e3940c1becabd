//! Simulation of a two-source induced-coherence interferometer and
//! reconstruction of the idler polarization state from signal fringes.

pub mod acquisition;
pub mod error;
pub mod interferometer;
pub mod optimize;
pub mod qcore;
pub mod reconstruct;
pub mod states;

pub use acquisition::{run_calibration, run_scan, Calibration, ScanPlan, ScanRecord};
pub use error::{Error, Result};
pub use interferometer::{DetectionRates, InterferometerConfig, SignalSetting};
pub use qcore::{ComplexMatrix, DensityMatrix, C64};
pub use reconstruct::{
    extract_parameters, fit_sinusoid, mle_cost, mle_reconstruct, report_fidelity,
    ReconstructionMethod, ReconstructionResult, SinusoidFit,
};
pub use states::{IdlerStateParams, SourceQ2Params, WaveplateKind, WaveplateSetting};
