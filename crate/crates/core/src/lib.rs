//! Online learning dynamics of linear variational autoencoders.
//!
//! Data follow a spiked covariance model with `M*` features of strength `ρ`
//! on isotropic noise of strength `η`. A linear VAE with `M` latents is
//! trained by one-pass SGD on the β-weighted ELBO. As the input dimension
//! grows, a few overlaps between student and teacher obey a deterministic
//! ODE; this crate simulates the SGD, integrates the ODE, and analyses its
//! fixed points.
//!
//! * [`sgd`]: teacher, student, loss, gradients, SGD steps.
//! * [`macroscopic`]: order parameters, ODE right-hand side, RK4.
//! * [`stability`]: closed-form fixed points, Jacobian spectra, thresholds.
//! * [`schedule`]: β schedules for KL annealing.
//! * [`harness`]: scenarios writing CSV tables and a TOML manifest.
//!
//! ```
//! use lvae_dynamics::macroscopic::{integrate, IntegrateOptions, Layout, MacroState, OdeParams};
//! use lvae_dynamics::schedule::BetaSchedule;
//! use lvae_dynamics::sgd::InitSpec;
//!
//! let m0 = MacroState::from_init(Layout::new(1, 1), &InitSpec::default());
//! let traj = integrate(
//!     &m0,
//!     &OdeParams::first_order(1.0, 1.0),
//!     &BetaSchedule::constant(1.0),
//!     200.0,
//!     &IntegrateOptions::default().with_records(20),
//! )
//! .unwrap();
//! assert!(traj.final_eps_g() < 1e-3);
//! ```

pub mod error;
pub mod harness;
pub mod macroscopic;
pub mod rng;
pub mod schedule;
pub mod sgd;
pub mod stability;

pub use error::{Error, Result};

// compiles the code blocks of the guide as doc-tests
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/order-parameters.md")]
    mod order_parameters {}
    #[doc = include_str!("../../../book/src/fixed-points.md")]
    mod fixed_points {}
    #[doc = include_str!("../../../book/src/annealing.md")]
    mod annealing {}
    #[doc = include_str!("../../../book/src/finite-size.md")]
    mod finite_size {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
