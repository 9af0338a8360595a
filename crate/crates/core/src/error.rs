use thiserror::Error;

use crate::eval::EvalError;
use crate::granger::GrangerError;
use crate::model::ModelError;
use crate::panel::PanelError;
use crate::sphere::SphereError;
use crate::synthetic::SyntheticError;

/// Any module error, prefixed with the module it came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error("panel-data: {0}")]
    Panel(#[from] PanelError),
    #[error("synthetic-generator: {0}")]
    Synthetic(#[from] SyntheticError),
    #[error("granger-discovery: {0}")]
    Granger(#[from] GrangerError),
    #[error("sphere-geometry: {0}")]
    Sphere(#[from] SphereError),
    #[error("csht-model: {0}")]
    Model(#[from] ModelError),
    #[error("evaluation: {0}")]
    Eval(#[from] EvalError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True when a requested date lies outside every graph window or the
    /// panel itself.
    pub fn is_date_not_covered(&self) -> bool {
        let model = match self {
            Error::Granger(GrangerError::DateNotCovered(_)) => return true,
            Error::Model(m) | Error::Eval(EvalError::Model(m)) => m,
            _ => return false,
        };
        matches!(model, ModelError::Granger(GrangerError::DateNotCovered(_)))
    }
}
