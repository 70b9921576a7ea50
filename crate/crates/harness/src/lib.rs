pub mod backends;
pub mod corpus_io;
pub mod server;
pub mod eval;
pub mod dialogue;
pub mod report;
pub mod cli;
