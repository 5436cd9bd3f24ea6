use serde::{Deserialize, Serialize};

/// Physical constants; natural units by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Units {
    pub hbar: f64,
    pub mass: f64,
    pub c: f64,
}

impl Default for Units {
    fn default() -> Self {
        Units { hbar: 1.0, mass: 1.0, c: 1.0 }
    }
}

impl Units {
    /// ħ²/2m, the kinetic prefactor.
    pub fn kinetic(&self) -> f64 {
        self.hbar * self.hbar / (2.0 * self.mass)
    }
}
