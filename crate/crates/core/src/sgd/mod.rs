//! The microscopic model: teacher, student, loss and one-pass SGD.

mod model;
mod step;
mod teacher;

pub use model::{
    elbo_gradient, elbo_loss, init_micro, Gradient, Hyperparams, InitSpec, Loss, MicroState,
};
pub use step::{sgd_step, simulate, step_in_place};
pub use teacher::{draw_sample, GenerativeConfig, Sample, TEACHER_NORM_TOL};
