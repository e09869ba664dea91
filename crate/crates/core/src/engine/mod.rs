//! Sessions, the artifact tree, content detection and identifier dispatch.

mod artifact;
mod detect;
mod error;
mod identifier;
mod log;
mod session;
mod transform;
mod views;

pub use artifact::{
    Artifact, ArtifactId, Confidence, ContentKind, ContentType, ParseArtifactIdError, Provenance,
};
pub use detect::{detect_type, detect_type_with, DEFAULT_TEXT_RATIO};
pub use error::EngineError;
pub use identifier::{
    AnalysisResult, Arg, ChildSpec, DataIdentifier, Delegation, FactSpec, GenericIdentifier,
    IdentifyContext, IdentifyError, Registry, RegistryError, ScanScope, TransformKind,
    TransformRequest, ViewKind, ViewerHint,
};
pub use log::{
    BehavioralAction, ChatRole, ChatTurn, ExchangeKind, LogEvent, Note, NoteKind, SessionEvent,
};
pub use session::{ArtifactReport, AnalyzeOutcome, Session};
pub use transform::{execute_transform, TransformError, TransformOutput};
pub use views::{
    hex_rows, EntropyView, HexRow, HexView, StringsView, StructuredView, DEFAULT_HEX_WINDOW,
    HEX_ROW,
};
