//! The linearized chain: exact Fourier propagation, decay measurement,
//! oscillatory integrals, resolvents and space-time norms.

pub mod oscillatory;
pub mod propagator;
pub mod resolvent;
pub mod spacetime;

pub use oscillatory::{oscillatory_integral, van_der_corput_check, PhaseInterval};
pub use propagator::{dipole, eps_t_grid, measure_decay, nu, DecayOptions, DecayFit, FourierField, LinearPropagator};
pub use resolvent::{puiseux_leading_check, resolvent_b, resolvent_kernel};
pub use spacetime::{mixed_norm, sp_temp_check, spacetime_norm, StateTrajectory};
