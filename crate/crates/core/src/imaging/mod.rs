//! Thermal frames, ROI masks and automatic segmentation.

mod frame;
mod mask;
mod mser;
mod otsu;

pub use frame::{
    frame_file_name, list_frames, read_frame, read_frame_with_range, write_frame, SensorRange, ThermalFrame,
    FRAME_EXTENSION, FRAME_MAGIC, FRAME_VERSION, INDEX_FILE,
};
pub use mask::{default_scene_mask, roi_pixels, roi_pixels_by_id, sidecar_path, RoiMaskSet};
pub use mser::{mser_regions, region_size_record, MserParams, RegionSizeSample, SegmentedRegion};
pub use otsu::{between_class_variance, otsu_histogram, otsu_multiclass, quantize, Quantization, QuantizationResult};

#[derive(Debug, thiserror::Error)]
pub enum ImagingError {
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("malformed mask: {0}")]
    MalformedMask(String),
    #[error("value {value} outside sensor range [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },
    #[error("frame is {frame:?} but mask is {mask:?} (width, height)")]
    DimensionMismatch { frame: (usize, usize), mask: (usize, usize) },
    #[error("unknown ROI id {0}")]
    UnknownRoi(u8),
    #[error("frame already written for {0}")]
    DuplicateTimestamp(String),
    #[error("insufficient contrast: {distinct} distinct levels for {classes} classes")]
    InsufficientContrast { distinct: usize, classes: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
