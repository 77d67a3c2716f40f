//! Operator identity.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Identifies one mobile network operator within a run.
///
/// Operators are indexed from zero and rendered as letters (`A`, `B`, ...)
/// in logs and result files. Decision logic elsewhere in the crate is
/// pairwise, so runs use exactly two operators, but the id keeps larger
/// coexistence setups representable.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct OperatorId(pub u8);

impl OperatorId {
    pub const A: OperatorId = OperatorId(0);
    pub const B: OperatorId = OperatorId(1);

    /// The first `n` operator ids, in order.
    pub fn first(n: usize) -> Vec<OperatorId> {
        (0..n).map(|i| OperatorId(i as u8)).collect()
    }
}

impl fmt::Display for OperatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 < 26 {
            write!(f, "{}", (b'A' + self.0) as char)
        } else {
            write!(f, "op{}", self.0)
        }
    }
}

impl FromStr for OperatorId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = s.as_bytes();
        if bytes.len() == 1 && bytes[0].is_ascii_uppercase() {
            return Ok(OperatorId(bytes[0] - b'A'));
        }
        if let Some(rest) = s.strip_prefix("op") {
            if let Ok(n) = rest.parse::<u8>() {
                return Ok(OperatorId(n));
            }
        }
        Err(format!("not an operator id: {s:?}"))
    }
}
