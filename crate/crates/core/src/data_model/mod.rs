//! Sample types, ToF decoding and refinement, preprocessing, and manifests.

mod manifest;
mod maps;
mod sample;
mod tof;

pub use manifest::{
    assign_splits, load_sample, load_samples, read_raw_tof_png, read_rgb_png, read_tof_png,
    sample_paths, split_dataset, split_samples, write_atomic, write_raw_tof_png, write_rgb_png,
    write_tof_png, Manifest, Preprocess, SampleRecord, SplitRatios, MANIFEST_FILE, SCHEMA_VERSION,
};
pub use maps::{crop, flip_horizontal, resize_map, rotate90, PlanarMap, RgbImage, ToFMap};
pub use sample::{
    crop_offsets, random_crop_pair, Label, PairSample, SampleMeta, Split, NO_DISPLAY,
};
pub use tof::{
    code_from_confidence, confidence_from_code, decode_raw_tof, decode_tof_pixel, depth_to_u8,
    encode_depth_map, encode_tof_pixel, refine_tof, DepthMap, RawToFMap, MAX_DEPTH_MM,
};
