//! Estimation kernels shared by the sensing pipelines.

mod cfar;
mod music;
mod paths;
mod rdmap;

pub use cfar::{ca_cfar, local_maxima, threshold_factor, CellDetection};
pub use music::{
    beamscan_spectrum, covariance, find_peaks, music_spectrum, parabolic_offset, Peak,
};
pub use paths::{
    extract_paths, extract_paths_traced, extract_paths_with, label_paths, PathEstimate,
    PathExtraction, PathOrder, PathSearch,
};
pub use rdmap::{
    combine_subcarrier_detections, range_doppler_cube, range_doppler_map, range_doppler_map_with,
    subband_maps, Combine, RangeDopplerCube, RangeDopplerMap, RdOptions, Window,
};
