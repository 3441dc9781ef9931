pub mod concurrency;
pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod focus;
pub mod http;
pub mod labels;
pub mod llm;
pub mod model;
pub mod pipeline;
