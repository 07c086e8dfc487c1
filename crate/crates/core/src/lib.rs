//! Collision-risk forecasting toolkit: CDM events, dataset ingestion,
//! competition-style splitting and scoring, baseline predictors and the
//! statistics used to study how well a leaderboard generalizes.

pub mod analysis;
pub mod cdm;
pub mod ingest;
pub mod predictors;
pub mod scoring;
pub mod splitting;
pub mod synthetic;

pub use analysis::{
    aggregate_competitions, feature_relevance_aggregate, paired_t_test, pca, risk_histogram,
    run_virtual_competitions, spearman, weibull_fit, AggregateRow, AnalysisError, CompetitionOutcome,
    CompetitionResult, PcaResult, RelevanceRecord, SimulationConfig, TTest, WeibullFit,
};
pub use cdm::{
    final_risk, latest_known_risk, Cdm, CdmError, Event, RiskClass, RiskMap, DEFAULT_CUTOFF_DAYS,
    HIGH_RISK_THRESHOLD, RISK_FLOOR,
};
pub use ingest::{AssemblyConfig, AssemblyReport, DatasetSchema, IngestError};
pub use predictors::{CascadeConfig, PredictError, Predictor, PredictorSpec};
pub use scoring::{competition_loss, PredictionSet, ScoreError, ScoreOptions, ScoreReport};
pub use splitting::{CroppedEvent, DataSplit, EligibilityRule, SplitError, SplitRule};

/// Any error raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Cdm(#[from] CdmError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}
