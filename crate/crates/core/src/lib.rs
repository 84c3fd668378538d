//! Multi-channel speaker diarization toolkit.
//!
//! The crate covers the full chain from array recordings to scored
//! diarization hypotheses:
//!
//! * [`signal`]: audio container, WAV I/O, framing, DFT.
//! * [`array`]: microphone geometry and far-field steering vectors.
//! * [`fsb`]: least-squares filter-and-sum beamformer design and application.
//! * [`svector`]: spatial embeddings from beamformed energy over look directions.
//! * [`diarize`]: segmentation, similarity matrices, late fusion, NME-SC.
//! * [`osd`]: overlapped speech detection front end, decoding, second-speaker labels.
//! * [`scoring`]: RTTM, timeline algebra, DER.
//! * [`fusion`]: overlap-aware voting across hypotheses.
//! * [`simulator`]: synthetic far-field scenes with ground truth.
//! * [`pipeline`]: configuration-driven end-to-end runs and reports.

pub mod array;
pub mod diarize;
pub mod error;
pub mod fsb;
pub mod fusion;
pub mod osd;
pub mod pipeline;
pub mod scoring;
pub mod signal;
pub mod simulator;
pub mod svector;

pub use array::{ArrayGeometry, DirectionGrid, SteeringVector};
pub use error::{Error, ErrorClass, Result};
pub use fsb::{DesignSpec, DesiredResponse, FilterBank, ResponseShape};
pub use signal::{FrameGrid, MultiChannelAudio, Spectrum, WavEncoding, Window};
