//! Text-side lip reading: dictionary G2P, viseme mapping, homoviseme
//! analysis, corpus preparation, metrics and a viseme-to-character
//! sequence-to-sequence decoder.

pub mod analysis;
pub mod corpus;
pub mod lexicon;
pub mod metrics;
pub mod seq2seq;
pub mod synthetic;
