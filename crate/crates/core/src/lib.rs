pub mod canonicalizer;
pub mod cli;
pub mod clock;
pub mod crawler;
pub mod ingest;
pub mod lookup;
pub mod model;
pub mod replay;
pub mod server;
pub mod service;
pub mod sim;
pub mod warc;
