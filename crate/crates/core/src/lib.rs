//! Streaming matched-filter packet detection and link-quality estimation
//! over complex-baseband IQ streams.
//!
//! A receiver that only wants to know *who is transmitting and how strongly*
//! does not need to decode packets: every transmission from a given node
//! carries a stretch of samples that never changes (preamble, SFD, address
//! bytes). Correlating the incoming stream against one stored copy of that
//! stretch per link yields a sharp peak whenever that link transmits, even
//! under interference and at low SNR. This crate implements that idea as a
//! three-threshold cascade (energy gate, matched-filter rising-edge metric,
//! Pearson correlation gate) over a bank of per-link templates, plus the
//! pieces needed to exercise it without radio hardware:
//!
//! - [`iq`]: sample types and raw `.cf32` file I/O with sidecar metadata;
//! - [`synth`]: 802.15.4-style O-QPSK frames, GMSK and continuous-tone
//!   interferers, AWGN, and declarative scene composition;
//! - [`template`]: protocol-aware (modulated bytes) and protocol-blind
//!   (recorded clip) matched-filter templates;
//! - [`detector`]: the streaming cascade and event clustering;
//! - [`lqi`]: per-link statistics from detection events.
//!
//! The `parallel` feature (default) evaluates the template bank with rayon;
//! disabling it yields a dependency-free sequential build with identical
//! output.

pub mod detector;
pub mod error;
pub mod iq;
pub mod lqi;
pub mod synth;
pub mod template;

pub use detector::{
    detect_stream, process_stream, DetectionEvent, DetectorConfig, GatedOutputs, ProcessOutput,
    StreamProcessor,
};
pub use error::{Error, Result};
pub use iq::{read_iq_file, read_iq_file_with_rate, write_iq_file, IqSample, SampleStream};
pub use synth::{compose_scene, SceneSpec};
pub use template::Template;
