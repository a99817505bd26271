//! File formats: PNM images and depth maps, calibration text, and the
//! on-disk dataset layout.

mod calib;
mod dataset;
mod pnm;

pub use calib::{format_calibration, parse_calibration, parse_calibration_str, CALIB_DEFECT_LIMIT};
pub use dataset::{load_sample, write_sample, DatasetIndex, SampleFiles, SAMPLE_FILES};
pub use pnm::{
    decode_depth, decode_pnm, encode_depth, encode_pnm, read_depth, read_gray, read_pnm, read_rgb,
    write_depth, write_gray, write_rgb, Pnm, DEPTH_SCALE,
};
