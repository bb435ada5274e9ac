//! Synthetic moving-shape clips with exact masks and paired edit targets,
//! plus the binary tensor and archive formats used for every artifact.

mod artifacts;
mod corpus;
pub mod io;
mod synthetic;

pub use artifacts::{checkpoint_archive, load_checkpoint, load_trajectory, save_checkpoint, save_trajectory};
pub use corpus::{
    load_corpus, make_corpus, synthesize, ClipShape, CorpusSample, Manifest, ManifestEntry, MANIFEST_NAME,
};
pub use io::{load_tensor, save_tensor, Archive, Stored};
pub use synthetic::{
    decode_class, encode_class, random_edit, random_spec, render, EditKind, Motion, ShapeKind, SyntheticSpec,
    BACKGROUND_COLORS, NUM_CLASSES, NUM_COLORS, NUM_KINDS, NUM_MOTIONS, OBJECT_COLORS,
};
