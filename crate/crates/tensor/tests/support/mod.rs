pub mod gradsuite;
pub mod oracles;
pub mod sweeps;
