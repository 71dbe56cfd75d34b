//! Relational-algebra IR and a batch evaluator.
//!
//! Output row ids are deterministic functions of input provenance: Filter,
//! Project and Window pass ids through, joins digest both input ids, groups
//! digest their key, and union branches retag unless statically disjoint.

mod eval;
mod expr;
mod plan;

pub use eval::{
    aggregate_rows, coerce_row, group_key, window_rows, EvalStats, Evaluator, JoinSpec, Relation, VersionBinding,
};
pub use expr::{BinaryOp, Expr, ScalarFunc, TimeUnit, UnaryOp};
pub use plan::{
    AggCall, AggFunc, JoinKind, NodeId, Origins, Plan, PlanBuilder, PlanKind, ScanNode, SortKey, SourceKind,
    TypeError, WindowFunc,
};

pub(crate) use eval::union_row;
pub(crate) use plan::agg_type as agg_result_type;

use crate::store::{StoreError, TableId};

#[derive(Debug, Clone, thiserror::Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("numeric overflow")]
    Overflow,
    #[error("type error: {0}")]
    Type(String),
    #[error("no version bound for table {0}")]
    MissingBinding(TableId),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl EvalError {
    /// Runtime failures caused by the data or the query, as opposed to
    /// engine invariants.
    pub fn is_user_error(&self) -> bool {
        match self {
            EvalError::DivisionByZero | EvalError::Overflow | EvalError::Type(_) => true,
            EvalError::MissingBinding(_) => false,
            EvalError::Store(e) => !e.is_internal(),
        }
    }
}
