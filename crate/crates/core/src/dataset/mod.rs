//! Dataset assembly: per-sample pipeline, USTN storage, corpus builds,
//! splits and statistics.
//!
//! A corpus directory holds one sub-directory per sample,
//! `<id>/{input.ustn, target.ustn, meta.json}`, and `manifest.json`.

mod corpus;
mod sample;
pub mod tensor;

pub use corpus::{
    build_dataset, corpus_stats, split_validation, AmplitudeStats, ClassMix, CorpusStats, Histogram, ManifestEntry,
    SplitManifest, MANIFEST, VAL_FRACTION,
};
pub use sample::{
    generate_sample, read_sample, regenerate, sample_id, sample_phantom, write_sample, DatasetSample,
    PipelineConfig, SampleKey, SampleMeta,
};
