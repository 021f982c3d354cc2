//! Synthetic two-modality phantoms and the `.pbi` image container.

mod dataset;
mod io;
mod phantom;

pub use dataset::{
    load_dataset, load_eval_pairs, make_splits, read_manifest, write_dataset, DatasetSplit,
    Manifest, GENERATOR_VERSION,
};
pub use io::{
    decode_pbi, encode_pbi, export_png, hconcat, load_image, load_image_with_header, quantize,
    save_image, to_gray8, ImageDomain, PbiHeader,
};
pub use phantom::{generate_phantom, PhantomSample, MIN_PHANTOM_SIZE, PHANTOM_BONE_THRESHOLD};
