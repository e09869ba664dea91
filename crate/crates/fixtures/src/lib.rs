//! Deterministic builders for ZIP, EML, PE, PCAP and PNG evidence.
//!
//! Nothing here depends on the analysis crates, so the builders double as
//! independent oracles for their parsers.

pub mod eml;
pub mod pcap;
pub mod pe;
pub mod png;
pub mod scenario;
pub mod zip;

pub use eml::{build_eml, AttachmentSpec, EmlSpec};
pub use pcap::{build_pcap, http_get, http_response, HttpFlow};
pub use pe::{build_pe, overlay_offset, PeSpec};
pub use png::build_png;
pub use scenario::{contracts, dropper, js_charcode, ContractsScenario, DropperScenario};
pub use zip::{build_zip, CipherKeys, Method, ZipEntrySpec};
