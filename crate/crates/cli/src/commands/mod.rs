//! Subcommand implementations. Each command resolves its configuration,
//! echoes it to the run directory, and writes the documented artifacts.

pub mod bayes;
pub mod bounds;
pub mod eval;
pub mod inverse;
pub mod pipeline;
pub mod plot;
pub mod train;
