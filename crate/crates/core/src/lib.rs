//! NOOV: attention seq2seq translation assisted by a bilingual lexicon and a
//! phrase look-up table.
//!
//! The crate covers the whole pipeline: parallel corpus ingestion
//! ([`corpus`]), lexicon induction with IBM Model 1 ([`align`]), phrase
//! table matching ([`phrasebook`]), a small hand-differentiated LSTM
//! toolkit ([`neural`]), the encoder-decoder and its training loop
//! ([`model`]), lexicon-biased beam search with repetition repair
//! ([`decode`]) and BLEU evaluation ([`eval`]).

pub mod align;
pub mod corpus;
pub mod decode;
pub mod error;
pub mod eval;
pub mod lexicon;
pub mod model;
pub mod neural;
pub mod phrasebook;

pub use error::{Error, Result};
