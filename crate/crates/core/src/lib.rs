pub mod attention;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod interval;
pub mod learner;
pub mod optim;
pub mod pipeline;
pub mod query;
pub mod rank;
pub mod rule;
pub mod scenario;
pub mod synthetic;
pub mod tfm;
pub mod timeline;
pub mod walk;
