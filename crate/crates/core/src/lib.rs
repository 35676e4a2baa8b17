pub mod authorship;
pub mod blocks;
pub mod clean;
pub mod corpus;
pub mod dump;
pub mod duration;
pub mod features;
pub mod classifiers;
pub mod evaluate;
pub mod config;
pub mod pipeline;
pub mod cli;
