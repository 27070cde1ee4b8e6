//! Pipeline driver for swarm trajectory prediction and covert power planning.

pub mod artifacts;
pub mod commands;
pub mod config;

pub use commands::Session;
pub use config::ScenarioConfig;

/// Exit status for a failed acceptance gate.
pub const EXIT_GATE_FAILURE: u8 = 2;
/// Exit status for invalid input or any other error.
pub const EXIT_ERROR: u8 = 1;

/// Integer list given on the command line as `a..b` or `a,b,c`.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexList(pub Vec<usize>);

impl std::str::FromStr for IndexList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_index_list(s).map(IndexList)
    }
}

/// Parses `a..b`, `a..=b` (both inclusive) or a comma-separated list.
pub fn parse_index_list(text: &str) -> Result<Vec<usize>, String> {
    let text = text.trim();
    if let Some((lo, hi)) = text.split_once("..") {
        let hi = hi.strip_prefix('=').unwrap_or(hi);
        let lo: usize = lo.trim().parse().map_err(|e| format!("{lo}: {e}"))?;
        let hi: usize = hi.trim().parse().map_err(|e| format!("{hi}: {e}"))?;
        if lo > hi {
            return Err(format!("empty range {text}"));
        }
        return Ok((lo..=hi).collect());
    }
    text.split(',').map(|v| v.trim().parse().map_err(|e| format!("{v}: {e}"))).collect()
}
