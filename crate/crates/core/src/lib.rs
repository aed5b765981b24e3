//! Off-device analysis and optimization of image-restoration networks for
//! mobile accelerators.
//!
//! The pipeline: build a candidate architecture ([`zoo`]), measure its MAC
//! and memory cost ([`complexity`]), predict which operators a device runtime
//! pushes back to the CPU ([`devices`]), estimate latency ([`latency`]), apply
//! portability rewrites ([`rewrite`]), prune channels to a MAC target
//! ([`pruning`]), simulate 8/16-bit fixed-point deployment ([`quant`],
//! [`interp`]) and finally sweep all combinations into a quality vs. latency
//! frontier ([`frontier`]).

pub mod complexity;
pub mod devices;
pub mod exec;
pub mod frontier;
pub mod graph;
pub mod interp;
pub mod latency;
pub mod metrics;
pub mod pruning;
pub mod quant;
pub mod rewrite;
pub mod rng;
pub mod tensor;
pub mod zoo;

pub use exec::Parallelism;
pub use graph::{DataType, Graph, GraphBuilder, GraphError, Node, OpKind, Shape, TensorSpec};
pub use tensor::Tensor;
