//! Place-graph embeddings and the supervised exposure autoencoder.
//!
//! [`graph`] builds POI graphs from walking distance or transit travel time,
//! [`gcn`] trains a two-layer graph convolutional classifier whose hidden layer
//! gives 32-dimensional POI embeddings, [`features`] pools those embeddings
//! over each person's home isochrone and activity hull, and [`autoenc`] fits
//! the encoder-decoder that predicts place exposure, with the ablation and
//! cross-income transfer protocols in [`protocol`].

pub mod autoenc;
pub mod features;
pub mod gcn;
pub mod graph;
pub mod hull;
pub mod protocol;
pub mod tensors;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("non-finite loss: {0}")]
    NonFinite(String),
    #[error("input: {0}")]
    Input(String),
    #[error("format: {0}")]
    Format(String),
    #[error(transparent)]
    Places(#[from] mixcity_core::places::PlacesError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, EmbedError>;
