//! An embedded engine for dynamic tables: derived tables declared by a query
//! and kept equal to that query as of a recent data timestamp, maintained
//! incrementally where possible.

pub mod algebra;
pub mod differ;
pub mod engine;
pub mod iso;
pub mod refreshd;
pub mod sched;
pub mod sqlfront;
pub mod store;
pub mod types;
