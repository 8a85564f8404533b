pub mod analyze;
pub mod annotate;
pub mod corpus;
pub mod dict;
pub mod localize;
pub mod pipeline;
pub mod retrieve;
pub mod serve;
pub mod synth;
