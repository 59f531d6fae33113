pub mod dockerfile;
pub mod launch;
pub mod lint;
pub mod perf;
pub mod profiles;
pub mod recon;
pub mod runner;
pub mod shell;
