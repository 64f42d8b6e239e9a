//! Accessibility auditing over crawled client-side state graphs.
//!
//! A crawl explores a page through a [`crawler::PageDriver`] and builds the
//! omni graph of deduplicated states. Restricted user models are replayed
//! over that graph; states a baseline user reaches but a disability model
//! cannot are reported as violations.

pub mod analysis;
pub mod crawler;
pub mod dom;
pub mod dot;
pub mod equivalence;
pub mod graph;
pub mod report;
pub mod sim;
pub mod users;

pub use analysis::{detect_violations, score_usability, MissingCapability, ReachabilityMode, Violation};
pub use crawler::{crawl, evaluate_users, CrawlConfig, CrawlError, CrawlResult, DriverError, PageDriver};
pub use dom::{parse_snapshot, structural_signature, text_contents, DomError, DomNode, DomSnapshot, ElementProperties, NodePath};
pub use dot::{export_dot, Overlay};
pub use equivalence::{pipeline_compare, template_compare, EquivalenceConfig, PageTemplate, Strategy};
pub use graph::{best_path_score, path_score, user_subgraph, Edge, GraphError, State, StateGraph, StateId};
pub use report::{audit, emit_report, Audit, AuditOptions, Format, Report, ReportError};
pub use sim::{load_fixture, FixtureError, PageModel, SimDriver};
pub use users::{builtin_models, edge_score, AbilityScore, ActionKind, LowVisionThresholds, Target, UserModel};
