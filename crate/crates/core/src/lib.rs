//! Effective bit depth adaptation (EBDA) for video coding.
//!
//! Frames are reduced by one or more bits before encoding and restored after
//! decoding, either by a plain left shift or by a multi-frame CNN that sees
//! the motion-aligned previous and next frames. Around that core sit a codec
//! bridge (external encoder templates or a built-in mock), training dataset
//! generation, Bjøntegaard metrics and a pipeline that ties them together.

pub mod codec;
pub mod dataset;
pub mod ebd;
pub mod error;
pub mod flow;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod video;

pub use codec::{code_sequence, mock_codec, CodecBackend, CodecConfig, CodedSequence, EncodeResult};
pub use dataset::{
    augment_rotate, extract_triplets, read_dataset, write_dataset, Block, DatasetManifest,
    SampleMeta, TrainingSample,
};
pub use ebd::{ebd_down, ebd_restore_naive, ebd_up_naive};
pub use error::{Error, Result};
pub use flow::{estimate_flow, warp_frame, warp_plane, FlowField, FlowParams};
pub use metrics::{bd_psnr, bd_rate, psnr_luma, psnr_luma_sequence, RdCurve, RdPoint};
pub use nn::{enhance_frame, enhance_sequence, load_weights, save_weights, Model, NetworkConfig, TileConfig};
pub use pipeline::{
    run_gen_dataset, run_pipeline, select_model, GenDatasetOptions, ModelId, ModelSelector,
    PipelineConfig, Report,
};
pub use video::{
    read_yuv, read_yuv_all, write_yuv, BitDepthConfig, ChromaFormat, Frame, Plane, PlaneSel,
    VideoFormat,
};
