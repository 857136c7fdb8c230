use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Selects between the printed form of a few identities and their corrected
/// form.
///
/// Three printed formulas disagree with the dynamics they describe: the rate
/// `(N+l)/(N k)` in the moments of the zero-sum part of a type A process (the
/// consistent rate is `(N-l)/(N k)`), the stationary determinant of the
/// zero-sum part (`y^N` instead of `y^N + (-1)^N`), and the `N = 3` freezing
/// trajectory `arcosh(3(e^{2t}-1)/2)` (instead of `arcosh((3e^{2t}-1)/2)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    #[default]
    Published,
    Corrected,
}

impl Convention {
    /// Coefficient of `1/(N k)` in the drift-free part's decay rate for `e_l`.
    pub fn cg_rate(self, n: usize, l: usize) -> f64 {
        match self {
            Convention::Published => (n + l) as f64,
            Convention::Corrected => n as f64 - l as f64,
        }
    }
}

impl FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "published" => Ok(Convention::Published),
            "corrected" => Ok(Convention::Corrected),
            _ => Err(Error::Parameter(format!(
                "unknown convention '{s}' (expected published or corrected)"
            ))),
        }
    }
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Convention::Published => "published",
            Convention::Corrected => "corrected",
        })
    }
}
