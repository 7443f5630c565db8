use serde::{Deserialize, Serialize};

/// Named loss terms tracked by [`LossBundle`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Term {
    Policy,
    Value,
    AuxValue,
    CPi,
    CV,
    Entropy,
    Dynamics,
    ActivationReg,
}

impl Term {
    /// Maximized objectives enter the combined loss negated.
    pub fn is_maximized(self) -> bool {
        matches!(self, Term::Policy | Term::Entropy | Term::Dynamics)
    }

    pub fn name(self) -> &'static str {
        match self {
            Term::Policy => "policy",
            Term::Value => "value",
            Term::AuxValue => "aux_value",
            Term::CPi => "c_pi",
            Term::CV => "c_v",
            Term::Entropy => "entropy",
            Term::Dynamics => "dynamics",
            Term::ActivationReg => "activation_reg",
        }
    }
}

/// Objective values recorded for one update with the coefficients used.
///
/// `objective` is the raw value (maximized objectives un-negated). The
/// minimized contribution of each term is `coefficient * loss` where
/// `loss = -objective` for maximized terms.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBundle {
    entries: Vec<(Term, f64, f64)>,
}

impl LossBundle {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `objective` for `term`; replaces an earlier record of the same term.
    pub fn add(&mut self, term: Term, objective: f64, coefficient: f64) {
        match self.entries.iter_mut().find(|e| e.0 == term) {
            Some(e) => *e = (term, objective, coefficient),
            None => self.entries.push((term, objective, coefficient)),
        }
    }

    pub fn objective(&self, term: Term) -> Option<f64> {
        self.entries.iter().find(|e| e.0 == term).map(|e| e.1)
    }

    pub fn coefficient(&self, term: Term) -> Option<f64> {
        self.entries.iter().find(|e| e.0 == term).map(|e| e.2)
    }

    /// The minimized form of `term`.
    pub fn loss(&self, term: Term) -> Option<f64> {
        self.objective(term)
            .map(|v| if term.is_maximized() { -v } else { v })
    }

    pub fn terms(&self) -> impl Iterator<Item = Term> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn combined(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(t, v, c)| c * if t.is_maximized() { -v } else { v })
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|e| e.1.is_finite())
    }

    /// Per-term average over the bundles that record the term.
    pub fn mean(bundles: &[LossBundle]) -> LossBundle {
        let mut out = LossBundle::new();
        if bundles.is_empty() {
            return out;
        }
        for b in bundles {
            for &(t, v, c) in &b.entries {
                match out.entries.iter_mut().find(|e| e.0 == t) {
                    Some(e) => e.1 += v,
                    None => out.entries.push((t, v, c)),
                }
            }
        }
        for e in &mut out.entries {
            let count = bundles.iter().filter(|b| b.objective(e.0).is_some()).count();
            e.1 /= count as f64;
        }
        out
    }
}
