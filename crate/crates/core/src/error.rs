use thiserror::Error;

use crate::cognition::CognitionError;
use crate::config::ConfigError;
use crate::dpu::DpuError;
use crate::forecast::ForecastError;
use crate::generalization::GeneralizationError;
use crate::hypotheses::HypothesisError;
use crate::queries::QueryError;
use crate::relevancy::RelevancyError;
use crate::store::StoreError;
use crate::structures::StructureError;

/// Any module error, tagged with the module it came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error("stream_store: {0}")]
    Store(#[from] StoreError),
    #[error("cognition: {0}")]
    Cognition(#[from] CognitionError),
    #[error("structures: {0}")]
    Structures(#[from] StructureError),
    #[error("generalization: {0}")]
    Generalization(#[from] GeneralizationError),
    #[error("relevancy: {0}")]
    Relevancy(#[from] RelevancyError),
    #[error("hypotheses: {0}")]
    Hypotheses(#[from] HypothesisError),
    #[error("forecast: {0}")]
    Forecast(#[from] ForecastError),
    #[error("queries: {0}")]
    Queries(#[from] QueryError),
    #[error("dpu: {0}")]
    Dpu(#[from] DpuError),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
}

impl Error {
    pub fn module(&self) -> &'static str {
        match self {
            Error::Store(_) => "stream_store",
            Error::Cognition(_) => "cognition",
            Error::Structures(_) => "structures",
            Error::Generalization(_) => "generalization",
            Error::Relevancy(_) => "relevancy",
            Error::Hypotheses(_) => "hypotheses",
            Error::Forecast(_) => "forecast",
            Error::Queries(_) => "queries",
            Error::Dpu(_) => "dpu",
            Error::Config(_) => "config",
        }
    }
}
