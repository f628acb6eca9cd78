//! Fourier-Galerkin solver for the Leray-α regularized 3D Euler system driven
//! by transport noise, plus its linear counterpart, covariance closure and
//! change-of-measure tools.
//!
//! Fields are stored on the half shell `J_N`; the value at `−k` is the
//! complex conjugate of the stored one.

pub mod covariance;
pub mod dynamics;
pub mod error;
pub mod format;
pub mod girsanov;
pub mod init;
pub mod integrators;
pub mod noise;
pub mod spectral;
pub mod stats;

pub use covariance::{
    covariance_rhs, evolve_covariance, evolve_covariance_recorded, mc_covariance, CovarianceEstimate,
    CovarianceEvolution, CovarianceState, TimeIntegratedCovariance,
};
pub use dynamics::{diffusion_increment, energy_transfer, ito_correction, nonlinear_drift, DriftField, Dynamics};
pub use error::{Error, Result};
pub use girsanov::{drift_shift_check, novikov_bound, reweight_expectation, GirsanovAccumulator, GirsanovSample};
pub use init::{random_shell, single_mode};
pub use integrators::{
    det_rk4_step, em_step, heun_step, replay_trajectory, run_ensemble, run_ensemble_map, run_trajectory, RunConfig,
    SchemeKind, TrajectoryRecord,
};
pub use noise::{sample_increment, scalar_increment, trajectory_rng, NoiseIncrement, NoiseParams, NoiseTape, RawNoise};
pub use spectral::{project, projector_matrix, ComplexVec3, SpectralField, SpectrumLayout, WaveVector};
pub use stats::MeanEstimate;
