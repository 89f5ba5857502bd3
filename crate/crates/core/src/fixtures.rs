//! Bundled C sources used by tests, the acceptance suite and the CLI demo.

/// Transcription of the two-function `strcpy` example program. The slice
/// statements sit on lines 2, 4, 5, 9 (`test`) and 13, 15, 18, 19 (`main`).
pub const EXAMPLE: &str = include_str!("../data/fixtures/example.c");
pub const EXAMPLE_PATH: &str = "example.c";
