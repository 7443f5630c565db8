use serde::{Deserialize, Serialize};

use crate::objectives::DynamicsKind;

/// Every training algorithm and regularization variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ppo,
    Ppg,
    /// PPG with a lower discount for advantages and targets.
    PpgDr,
    /// PPG with an L2 penalty on value outputs.
    PpgAr,
    Dcpg,
    Ddcpg,
    SeparateDcpg,
    DcpgF,
    DcpgI,
    DcpgFi,
}

/// Network layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Topology {
    /// One encoder feeding policy and value heads.
    Shared,
    /// Shared trunk plus a separate value encoder and head.
    Dual,
}

impl Algorithm {
    pub const ALL: [Algorithm; 10] = [
        Algorithm::Ppo,
        Algorithm::Ppg,
        Algorithm::PpgDr,
        Algorithm::PpgAr,
        Algorithm::Dcpg,
        Algorithm::Ddcpg,
        Algorithm::SeparateDcpg,
        Algorithm::DcpgF,
        Algorithm::DcpgI,
        Algorithm::DcpgFi,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Ppo => "ppo",
            Algorithm::Ppg => "ppg",
            Algorithm::PpgDr => "ppg_dr",
            Algorithm::PpgAr => "ppg_ar",
            Algorithm::Dcpg => "dcpg",
            Algorithm::Ddcpg => "ddcpg",
            Algorithm::SeparateDcpg => "separate_dcpg",
            Algorithm::DcpgF => "dcpg_f",
            Algorithm::DcpgI => "dcpg_i",
            Algorithm::DcpgFi => "dcpg_fi",
        }
    }

    pub fn topology(self) -> Topology {
        match self {
            Algorithm::Ppg | Algorithm::PpgDr | Algorithm::PpgAr | Algorithm::SeparateDcpg => {
                Topology::Dual
            }
            _ => Topology::Shared,
        }
    }

    /// Alternates policy and auxiliary phases.
    pub fn is_phasic(self) -> bool {
        self != Algorithm::Ppo
    }

    /// PPG family: the separate value network drives advantages and the
    /// shared value head is an auxiliary head.
    pub fn is_ppg(self) -> bool {
        matches!(self, Algorithm::Ppg | Algorithm::PpgDr | Algorithm::PpgAr)
    }

    /// Shared value head trained only in the auxiliary phase.
    pub fn has_delayed_critic(self) -> bool {
        matches!(
            self,
            Algorithm::Dcpg
                | Algorithm::Ddcpg
                | Algorithm::SeparateDcpg
                | Algorithm::DcpgF
                | Algorithm::DcpgI
                | Algorithm::DcpgFi
        )
    }

    pub fn dynamics(self) -> Option<DynamicsKind> {
        match self {
            Algorithm::Ddcpg => Some(DynamicsKind::Joint),
            Algorithm::DcpgF => Some(DynamicsKind::Forward),
            Algorithm::DcpgI => Some(DynamicsKind::Inverse),
            Algorithm::DcpgFi => Some(DynamicsKind::ForwardInverse),
            _ => None,
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', '+'], "_");
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == norm)
            .ok_or_else(|| format!("unknown algorithm `{s}`"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.as_str().parse::<Algorithm>().unwrap(), a);
        }
        assert_eq!("PPG+DR".parse::<Algorithm>().unwrap(), Algorithm::PpgDr);
        assert!("a2c".parse::<Algorithm>().is_err());
    }

    #[test]
    fn topologies() {
        assert_eq!(Algorithm::Ppo.topology(), Topology::Shared);
        assert_eq!(Algorithm::Ddcpg.topology(), Topology::Shared);
        assert_eq!(Algorithm::Ppg.topology(), Topology::Dual);
        assert_eq!(Algorithm::SeparateDcpg.topology(), Topology::Dual);
        assert!(Algorithm::DcpgFi.dynamics().unwrap().needs_second_discriminator());
    }
}
