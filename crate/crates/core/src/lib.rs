//! Relational-phrase learning toolkit.
//!
//! Ground-truth phrase embeddings are built from `(human, verb, object)`
//! triplets by concatenating pretrained word vectors. Labels are augmented
//! by swapping slots for semantic neighbors, a phrase head is trained with a
//! distilling loss plus a margin triplet loss, and predictions are decoded
//! through a close-set lookup table.

pub mod composition;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod fixture;
pub mod gradcheck;
pub mod head;
pub mod losses;
pub mod lut;
pub mod neighborhood;
pub mod optim;
pub mod phrase;
pub mod repro;
pub mod store;
pub mod trainer;
pub mod vecmath;

pub use composition::{compose, support, CompositionConfig, CompositionSupport, Weighting};
pub use error::{Error, Result};
pub use losses::{
    distilling_loss, phrase_loss, total_loss, triplet_loss, Distance, Distilling, LabeledBatch,
    LossConfig,
};
pub use lut::{build_lut, LookUpTable, RetrievalResult};
pub use neighborhood::{build_neighborhoods, NeighborhoodConfig, NeighborhoodSet, Neighborhoods};
pub use phrase::{encode_phrase, triplet_to_phrase, ConcatEncoder, PhraseEmbedding, PhraseEncoder, RelationalPhrase};
pub use store::{EmbeddingStore, Format, OovPolicy, WordVector};
pub use vecmath::cosine_similarity;
