use thiserror::Error;

use crate::{atom::AtomError, io::IoError, krotov::KrotovError, propagator::PropagationError};
use crate::{pulse::PulseError, robustness::RobustnessError, spin::SpinError, stark::StarkError};

/// Any failure raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Atom(#[from] AtomError),
    #[error(transparent)]
    Stark(#[from] StarkError),
    #[error(transparent)]
    Pulse(#[from] PulseError),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error(transparent)]
    Spin(#[from] SpinError),
    #[error(transparent)]
    Krotov(#[from] KrotovError),
    #[error(transparent)]
    Robustness(#[from] RobustnessError),
    #[error(transparent)]
    Io(#[from] IoError),
}
