//! Ground terms, facts and the fact store.

use std::collections::HashMap;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::engine::ArtifactId;

/// A ground value a predicate argument can take.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Term {
    Artifact(ArtifactId),
    Str(String),
    Int(i64),
}

impl Term {
    pub fn str(s: impl Into<String>) -> Self {
        Term::Str(s.into())
    }

    pub fn as_artifact(&self) -> Option<ArtifactId> {
        match self {
            Term::Artifact(id) => Some(*id),
            _ => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Artifact(id) => write!(f, "@{id}"),
            Term::Str(s) => write!(f, "{s:?}"),
            Term::Int(i) => write!(f, "{i}"),
        }
    }
}

impl From<ArtifactId> for Term {
    fn from(id: ArtifactId) -> Self {
        Term::Artifact(id)
    }
}

impl From<&str> for Term {
    fn from(s: &str) -> Self {
        Term::Str(s.to_string())
    }
}

impl From<String> for Term {
    fn from(s: String) -> Self {
        Term::Str(s)
    }
}

impl From<i64> for Term {
    fn from(i: i64) -> Self {
        Term::Int(i)
    }
}

/// Where a fact came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Origin {
    /// Produced by an identifier or generic content pass.
    Analysis,
    /// Records something the analyst did.
    Behavioral,
    /// Produced by a derivation rule.
    Derived,
}

/// A predicate applied to ground terms, without origin.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroundAtom {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl GroundAtom {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        Self {
            predicate: predicate.into(),
            args,
        }
    }

    /// Renders the atom with artifact arguments replaced by display names.
    pub fn display_with(&self, names: &dyn Fn(ArtifactId) -> Option<String>) -> String {
        let args: Vec<String> = self
            .args
            .iter()
            .map(|t| match t {
                Term::Artifact(id) => names(*id).unwrap_or_else(|| id.to_string()),
                Term::Str(s) => format!("{s:?}"),
                Term::Int(i) => i.to_string(),
            })
            .collect();
        format!("{}({})", self.predicate, args.join(", "))
    }
}

impl fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.predicate)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

/// A ground predicate instance tagged with its origin.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fact {
    pub predicate: String,
    pub args: Vec<Term>,
    pub origin: Origin,
}

impl Fact {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>, origin: Origin) -> Self {
        Self {
            predicate: predicate.into(),
            args,
            origin,
        }
    }

    pub fn analysis(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        Self::new(predicate, args, Origin::Analysis)
    }

    pub fn behavioral(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        Self::new(predicate, args, Origin::Behavioral)
    }

    pub fn atom(&self) -> GroundAtom {
        GroundAtom::new(self.predicate.clone(), self.args.clone())
    }

    /// First artifact argument, the fact's subject by convention.
    pub fn subject(&self) -> Option<ArtifactId> {
        self.args.iter().find_map(Term::as_artifact)
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.atom().fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("predicate {predicate} used with arity {found}, but the store holds it with arity {expected}")]
pub struct ArityError {
    pub predicate: String,
    pub expected: usize,
    pub found: usize,
}

/// Insertion-ordered set of base facts (analysis and behavioral).
///
/// Facts are never retracted; a predicate keeps the arity of its first use.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FactStore {
    facts: IndexMap<GroundAtom, Origin>,
    arities: HashMap<String, usize>,
}

impl FactStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `fact`; returns `Ok(false)` when the atom was already present.
    pub fn insert(&mut self, fact: Fact) -> Result<bool, ArityError> {
        let arity = fact.args.len();
        match self.arities.get(&fact.predicate) {
            Some(&expected) if expected != arity => {
                return Err(ArityError {
                    predicate: fact.predicate,
                    expected,
                    found: arity,
                })
            }
            Some(_) => {}
            None => {
                self.arities.insert(fact.predicate.clone(), arity);
            }
        }
        let atom = GroundAtom::new(fact.predicate, fact.args);
        if self.facts.contains_key(&atom) {
            return Ok(false);
        }
        self.facts.insert(atom, fact.origin);
        Ok(true)
    }

    /// Whether `fact` could be inserted without an arity conflict.
    pub fn check(&self, fact: &Fact) -> Result<(), ArityError> {
        match self.arities.get(&fact.predicate) {
            Some(&expected) if expected != fact.args.len() => Err(ArityError {
                predicate: fact.predicate.clone(),
                expected,
                found: fact.args.len(),
            }),
            _ => Ok(()),
        }
    }

    pub fn contains(&self, atom: &GroundAtom) -> bool {
        self.facts.contains_key(atom)
    }

    pub fn origin(&self, atom: &GroundAtom) -> Option<Origin> {
        self.facts.get(atom).copied()
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Fact> + '_ {
        self.facts
            .iter()
            .map(|(a, o)| Fact::new(a.predicate.clone(), a.args.clone(), *o))
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&GroundAtom, Origin)> + '_ {
        self.facts.iter().map(|(a, o)| (a, *o))
    }

    pub fn facts(&self) -> Vec<Fact> {
        self.iter().collect()
    }
}

impl FromIterator<Fact> for FactStore {
    /// Collects facts, silently skipping arity conflicts.
    fn from_iter<I: IntoIterator<Item = Fact>>(iter: I) -> Self {
        let mut store = FactStore::new();
        for f in iter {
            let _ = store.insert(f);
        }
        store
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_atoms_are_not_reinserted() {
        let mut store = FactStore::new();
        let a = ArtifactId::new(1);
        assert!(store
            .insert(Fact::analysis("IsExecutable", vec![a.into()]))
            .unwrap());
        assert!(!store
            .insert(Fact::behavioral("IsExecutable", vec![a.into()]))
            .unwrap());
        assert_eq!(store.len(), 1);
        assert_eq!(
            store.origin(&GroundAtom::new("IsExecutable", vec![a.into()])),
            Some(Origin::Analysis)
        );
    }

    #[test]
    fn arity_is_fixed_by_first_use() {
        let mut store = FactStore::new();
        let a = ArtifactId::new(1);
        store
            .insert(Fact::analysis("ImportsApi", vec![a.into(), "X".into()]))
            .unwrap();
        let err = store
            .insert(Fact::analysis("ImportsApi", vec![a.into()]))
            .unwrap_err();
        assert_eq!(err.expected, 2);
        assert_eq!(err.found, 1);
    }
}
