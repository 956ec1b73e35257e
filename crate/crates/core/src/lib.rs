//! A navigational graph-query engine: Regular Queries over property graphs,
//! planned by a top-down memoizing enumerator with seeded-closure rules and
//! executed by a semi-naive fixpoint evaluator.

pub mod bench;
pub mod canon;
pub mod cost;
pub mod enumerate;
pub mod exec;
pub mod fixtures;
pub mod graph;
pub mod ir;
pub mod plan;
pub mod relation;
pub mod rules;

pub use graph::{build_catalog, ingest_rdf, load_graph, Catalog, Direction, PropertyGraph};
pub use ir::{parse_program, Program, SubQuery};
pub use plan::PlanGraph;
pub use relation::{Relation, Value};
