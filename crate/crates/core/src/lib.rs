pub mod agent;
pub mod bench;
pub mod clinical_tools;
pub mod mcp;
pub mod warehouse;
