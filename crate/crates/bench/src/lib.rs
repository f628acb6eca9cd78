//! Shared fixtures for the criterion benches.

use std::sync::Arc;

use leray_alpha::{random_shell, CovarianceState, Dynamics, NoiseParams, SpectralField, SpectrumLayout};

pub struct Fixture {
    pub layout: Arc<SpectrumLayout>,
    pub params: NoiseParams,
    pub dynamics: Dynamics,
    pub field: SpectralField,
    pub covariance: CovarianceState,
}

/// Unit-energy random field at cutoff `n` with `σ = α = p = 1`.
pub fn fixture(n: u32) -> Fixture {
    let layout = SpectrumLayout::shared(n).expect("cutoff >= 2");
    let params = NoiseParams::new(1.0, 1.0, 1.0).expect("valid parameters");
    let field = random_shell(layout.clone(), 1.0, 42).expect("nonempty shell");
    Fixture {
        dynamics: Dynamics::new(layout.clone(), params),
        covariance: CovarianceState::from_field(&field),
        layout,
        params,
        field,
    }
}
