//! Semi-naive forward chaining, suggestion evaluation and derivation trees.
//!
//! Relations are insertion-ordered sets. Facts found during one round are
//! appended only when the round ends, so every relation splits into an *old*
//! prefix, the *delta* of the previous round and nothing else. A rule body is
//! joined once per position `i` with atom `i` over the delta, atoms before it
//! over the old prefix and atoms after it over everything; each combination
//! containing at least one delta fact is therefore enumerated exactly once.

use std::collections::{BTreeMap, HashMap};

use indexmap::{IndexMap, IndexSet};
use serde::{Deserialize, Serialize};

use super::rules::{DerivationRule, Pattern, RuleAtom, Segment, SuggestionRule};
use super::term::{Fact, FactStore, GroundAtom, Origin, Term};
use crate::engine::ArtifactId;

pub const DEFAULT_DERIVED_FACT_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InferenceError {
    #[error("derived fact cap of {limit} exceeded; most productive rule: {rule} ({produced} facts)")]
    ResourceExhausted {
        limit: usize,
        rule: String,
        produced: usize,
    },
    #[error("{0} is not a derived fact")]
    NotDerived(GroundAtom),
    #[error("template placeholder {{{0}}} has no binding")]
    UnresolvedPlaceholder(String),
}

/// The rule and premises recorded when a fact was first derived.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Derivation {
    pub rule: String,
    pub premises: Vec<GroundAtom>,
}

/// Facts derived on top of a base store, in derivation order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Fixpoint {
    derived: IndexMap<GroundAtom, Derivation>,
}

impl Fixpoint {
    pub fn len(&self) -> usize {
        self.derived.len()
    }

    pub fn is_empty(&self) -> bool {
        self.derived.is_empty()
    }

    pub fn contains(&self, atom: &GroundAtom) -> bool {
        self.derived.contains_key(atom)
    }

    pub fn derivation(&self, atom: &GroundAtom) -> Option<&Derivation> {
        self.derived.get(atom)
    }

    pub fn derived_facts(&self) -> impl Iterator<Item = Fact> + '_ {
        self.derived
            .keys()
            .map(|a| Fact::new(a.predicate.clone(), a.args.clone(), Origin::Derived))
    }

    pub fn atoms(&self) -> impl Iterator<Item = &GroundAtom> {
        self.derived.keys()
    }
}

#[derive(Debug, Clone, Copy)]
enum Window {
    Old,
    Delta,
    Full,
}

#[derive(Debug, Default)]
struct Relation {
    tuples: IndexSet<Vec<Term>>,
    delta_start: usize,
    delta_end: usize,
}

impl Relation {
    fn range(&self, w: Window) -> std::ops::Range<usize> {
        match w {
            Window::Old => 0..self.delta_start,
            Window::Delta => self.delta_start..self.delta_end,
            Window::Full => 0..self.delta_end,
        }
    }
}

type Bindings = Vec<(String, Term)>;

fn lookup<'b>(bindings: &'b Bindings, var: &str) -> Option<&'b Term> {
    bindings.iter().rev().find(|(v, _)| v == var).map(|(_, t)| t)
}

/// Extends `bindings` so that `patterns` matches `tuple`; on failure the
/// bindings are left unchanged.
fn unify(patterns: &[Pattern], tuple: &[Term], bindings: &mut Bindings) -> bool {
    if patterns.len() != tuple.len() {
        return false;
    }
    let mark = bindings.len();
    for (p, t) in patterns.iter().zip(tuple) {
        let ok = match p {
            Pattern::Wildcard => true,
            Pattern::Const(c) => c == t,
            Pattern::Var(v) => match lookup(bindings, v) {
                Some(bound) => bound == t,
                None => {
                    bindings.push((v.clone(), t.clone()));
                    true
                }
            },
        };
        if !ok {
            bindings.truncate(mark);
            return false;
        }
    }
    true
}

fn instantiate(atom: &RuleAtom, bindings: &Bindings) -> Option<GroundAtom> {
    let args = atom
        .args
        .iter()
        .map(|p| match p {
            Pattern::Const(c) => Some(c.clone()),
            Pattern::Var(v) => lookup(bindings, v).cloned(),
            Pattern::Wildcard => None,
        })
        .collect::<Option<Vec<_>>>()?;
    Some(GroundAtom::new(atom.predicate.clone(), args))
}

struct Joiner<'a> {
    rels: &'a HashMap<String, Relation>,
}

impl Joiner<'_> {
    /// Enumerates every binding of `atoms` (each over its window), calling
    /// `emit` with the bindings and the matched tuples.
    fn join(
        &self,
        atoms: &[(&RuleAtom, Window)],
        bindings: &mut Bindings,
        matched: &mut Vec<GroundAtom>,
        emit: &mut dyn FnMut(&Bindings, &[GroundAtom]),
    ) {
        let Some(((atom, window), rest)) = atoms.split_first() else {
            emit(bindings, matched);
            return;
        };
        let Some(rel) = self.rels.get(&atom.predicate) else {
            return;
        };
        for i in rel.range(*window) {
            let tuple = &rel.tuples[i];
            let mark = bindings.len();
            if unify(&atom.args, tuple, bindings) {
                matched.push(GroundAtom::new(atom.predicate.clone(), tuple.clone()));
                self.join(rest, bindings, matched, emit);
                matched.pop();
                bindings.truncate(mark);
            }
        }
    }
}

fn relations_from<'a>(atoms: impl IntoIterator<Item = &'a GroundAtom>) -> HashMap<String, Relation> {
    let mut rels: HashMap<String, Relation> = HashMap::new();
    for a in atoms {
        rels.entry(a.predicate.clone())
            .or_default()
            .tuples
            .insert(a.args.clone());
    }
    for rel in rels.values_mut() {
        rel.delta_start = 0;
        rel.delta_end = rel.tuples.len();
    }
    rels
}

/// Computes the least fixpoint of `rules` over `base`.
///
/// The returned set is independent of rule and fact order; which derivation
/// is recorded for a fact (the first one found) may depend on order.
pub fn derive_fixpoint(
    base: &FactStore,
    rules: &[&DerivationRule],
    cap: usize,
) -> Result<Fixpoint, InferenceError> {
    let mut rels = relations_from(base.atoms().map(|(a, _)| a));
    let mut derived: IndexMap<GroundAtom, Derivation> = IndexMap::new();
    let mut produced: Vec<usize> = vec![0; rules.len()];

    loop {
        let mut fresh: IndexMap<GroundAtom, Derivation> = IndexMap::new();
        {
            let joiner = Joiner { rels: &rels };
            for (ri, rule) in rules.iter().enumerate() {
                for pivot in 0..rule.body.len() {
                    let has_delta = rels
                        .get(&rule.body[pivot].predicate)
                        .is_some_and(|r| r.delta_end > r.delta_start);
                    if !has_delta {
                        continue;
                    }
                    let plan: Vec<(&RuleAtom, Window)> = rule
                        .body
                        .iter()
                        .enumerate()
                        .map(|(j, a)| {
                            let w = match j.cmp(&pivot) {
                                std::cmp::Ordering::Less => Window::Old,
                                std::cmp::Ordering::Equal => Window::Delta,
                                std::cmp::Ordering::Greater => Window::Full,
                            };
                            (a, w)
                        })
                        .collect();
                    let mut emit = |b: &Bindings, m: &[GroundAtom]| {
                        let Some(head) = instantiate(&rule.head, b) else {
                            return;
                        };
                        let known = rels
                            .get(&head.predicate)
                            .is_some_and(|r| r.tuples.contains(&head.args));
                        if known || fresh.contains_key(&head) {
                            return;
                        }
                        produced[ri] += 1;
                        fresh.insert(
                            head,
                            Derivation {
                                rule: rule.name.clone(),
                                premises: m.to_vec(),
                            },
                        );
                    };
                    joiner.join(&plan, &mut Vec::new(), &mut Vec::new(), &mut emit);
                }
            }
        }

        if fresh.is_empty() {
            break;
        }
        if derived.len() + fresh.len() > cap {
            let (best, count) = produced
                .iter()
                .enumerate()
                .max_by_key(|(i, c)| (**c, std::cmp::Reverse(*i)))
                .map(|(i, c)| (rules[i].name.clone(), *c))
                .unwrap_or_default();
            return Err(InferenceError::ResourceExhausted {
                limit: cap,
                rule: best,
                produced: count,
            });
        }

        for rel in rels.values_mut() {
            rel.delta_start = rel.delta_end;
        }
        for (atom, derivation) in fresh {
            let rel = rels.entry(atom.predicate.clone()).or_default();
            rel.tuples.insert(atom.args.clone());
            derived.insert(atom, derivation);
        }
        for rel in rels.values_mut() {
            rel.delta_end = rel.tuples.len();
        }
    }

    Ok(Fixpoint { derived })
}

/// A rendered next step produced by a suggestion rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suggestion {
    pub rule_name: String,
    pub bindings: BTreeMap<String, Term>,
    pub text: String,
    /// First artifact bound by the rule body, in order of appearance.
    pub target: Option<ArtifactId>,
    pub action: Option<GroundAtom>,
    pub provenance: Vec<Fact>,
}

impl Suggestion {
    pub fn key(&self) -> (String, BTreeMap<String, Term>) {
        (self.rule_name.clone(), self.bindings.clone())
    }
}

/// Substitutes template placeholders; artifacts render as display names.
pub fn render_suggestion(
    rule: &SuggestionRule,
    bindings: &BTreeMap<String, Term>,
    names: &dyn Fn(ArtifactId) -> Option<String>,
) -> Result<String, InferenceError> {
    let mut out = String::new();
    for seg in &rule.template.segments {
        match seg {
            Segment::Literal(s) => out.push_str(s),
            Segment::Var(v) => match bindings.get(v) {
                Some(Term::Artifact(id)) => {
                    out.push_str(&names(*id).unwrap_or_else(|| id.to_string()))
                }
                Some(Term::Str(s)) => out.push_str(s),
                Some(Term::Int(i)) => out.push_str(&i.to_string()),
                None => return Err(InferenceError::UnresolvedPlaceholder(v.clone())),
            },
        }
    }
    Ok(out)
}

/// Evaluates suggestion rules once against the fixpoint.
///
/// Output is ordered by rule declaration, then by the bound values (variables
/// taken in order of first appearance), and deduplicated on
/// `(rule_name, bindings)`.
pub fn evaluate_suggestions(
    base: &FactStore,
    fixpoint: &Fixpoint,
    rules: &[&SuggestionRule],
    names: &dyn Fn(ArtifactId) -> Option<String>,
) -> Result<Vec<Suggestion>, InferenceError> {
    let rels = relations_from(base.atoms().map(|(a, _)| a).chain(fixpoint.atoms()));
    let joiner = Joiner { rels: &rels };
    let origin_of = |a: &GroundAtom| base.origin(a).unwrap_or(Origin::Derived);
    let mut out = Vec::new();

    for rule in rules {
        let mut order: Vec<&str> = Vec::new();
        for v in rule.body.iter().flat_map(|a| a.variables()) {
            if !order.contains(&v) {
                order.push(v);
            }
        }
        let plan: Vec<(&RuleAtom, Window)> = rule.body.iter().map(|a| (a, Window::Full)).collect();
        let mut found: IndexMap<Vec<Term>, (Bindings, Vec<GroundAtom>)> = IndexMap::new();
        let mut emit = |b: &Bindings, m: &[GroundAtom]| {
            let blocked = rule.negations.iter().any(|neg| {
                let mut scratch = b.clone();
                rels.get(&neg.predicate).is_some_and(|rel| {
                    rel.tuples
                        .iter()
                        .any(|t| unify(&neg.args, t, &mut scratch))
                })
            });
            if blocked {
                return;
            }
            let key: Vec<Term> = order
                .iter()
                .filter_map(|v| lookup(b, v).cloned())
                .collect();
            found.entry(key).or_insert_with(|| (b.clone(), m.to_vec()));
        };
        joiner.join(&plan, &mut Vec::new(), &mut Vec::new(), &mut emit);
        found.sort_keys();

        for (key, (b, matched)) in found {
            let bindings: BTreeMap<String, Term> = order
                .iter()
                .map(|v| v.to_string())
                .zip(key.iter().cloned())
                .collect();
            let text = render_suggestion(rule, &bindings, names)?;
            let target = order
                .iter()
                .find_map(|v| lookup(&b, v).and_then(Term::as_artifact));
            let action = rule.action.as_ref().and_then(|a| instantiate(a, &b));
            let provenance = matched
                .iter()
                .map(|a| Fact::new(a.predicate.clone(), a.args.clone(), origin_of(a)))
                .collect();
            out.push(Suggestion {
                rule_name: rule.name.clone(),
                bindings,
                text,
                target,
                action,
                provenance,
            });
        }
    }
    Ok(out)
}

/// A fact together with the chain of rule applications that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DerivationTree {
    Leaf { fact: Fact },
    Node {
        fact: Fact,
        rule: String,
        premises: Vec<DerivationTree>,
    },
}

impl DerivationTree {
    pub fn fact(&self) -> &Fact {
        match self {
            DerivationTree::Leaf { fact } | DerivationTree::Node { fact, .. } => fact,
        }
    }

    /// Number of rule applications on the longest path to a leaf.
    pub fn depth(&self) -> usize {
        match self {
            DerivationTree::Leaf { .. } => 0,
            DerivationTree::Node { premises, .. } => {
                1 + premises.iter().map(DerivationTree::depth).max().unwrap_or(0)
            }
        }
    }

    pub fn leaves(&self) -> Vec<&Fact> {
        match self {
            DerivationTree::Leaf { fact } => vec![fact],
            DerivationTree::Node { premises, .. } => {
                premises.iter().flat_map(DerivationTree::leaves).collect()
            }
        }
    }
}

/// Expands the recorded derivation of a derived fact down to base facts.
pub fn explain_derivation(
    base: &FactStore,
    fixpoint: &Fixpoint,
    atom: &GroundAtom,
) -> Result<DerivationTree, InferenceError> {
    if base.contains(atom) || !fixpoint.contains(atom) {
        return Err(InferenceError::NotDerived(atom.clone()));
    }
    Ok(expand(base, fixpoint, atom))
}

fn expand(base: &FactStore, fixpoint: &Fixpoint, atom: &GroundAtom) -> DerivationTree {
    if let Some(origin) = base.origin(atom) {
        return DerivationTree::Leaf {
            fact: Fact::new(atom.predicate.clone(), atom.args.clone(), origin),
        };
    }
    match fixpoint.derivation(atom) {
        Some(d) => DerivationTree::Node {
            fact: Fact::new(atom.predicate.clone(), atom.args.clone(), Origin::Derived),
            rule: d.rule.clone(),
            // premises were all present before `atom` was first derived
            premises: d.premises.iter().map(|p| expand(base, fixpoint, p)).collect(),
        },
        None => DerivationTree::Leaf {
            fact: Fact::new(atom.predicate.clone(), atom.args.clone(), Origin::Derived),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::rules::{parse_rules, Rule};

    fn a(n: u64) -> Term {
        Term::Artifact(ArtifactId::new(n))
    }

    fn derivations(rules: &[Rule]) -> Vec<&DerivationRule> {
        rules
            .iter()
            .filter_map(|r| match r {
                Rule::Derivation(d) => Some(d),
                _ => None,
            })
            .collect()
    }

    fn suggestions(rules: &[Rule]) -> Vec<&SuggestionRule> {
        rules
            .iter()
            .filter_map(|r| match r {
                Rule::Suggestion(s) => Some(s),
                _ => None,
            })
            .collect()
    }

    fn names(id: ArtifactId) -> Option<String> {
        Some(format!("f{}", id.get()))
    }

    #[test]
    fn masquerade_rule_fires() {
        let rules =
            parse_rules("rule m: SuspiciousMasquerade(F) :- IsExecutable(F), HasDoubleExtension(F).").unwrap();
        let base: FactStore = [
            Fact::analysis("IsExecutable", vec![a(1)]),
            Fact::analysis("HasDoubleExtension", vec![a(1)]),
        ]
        .into_iter()
        .collect();
        let fp = derive_fixpoint(&base, &derivations(&rules), DEFAULT_DERIVED_FACT_CAP).unwrap();
        assert_eq!(
            fp.atoms().cloned().collect::<Vec<_>>(),
            vec![GroundAtom::new("SuspiciousMasquerade", vec![a(1)])]
        );
    }

    #[test]
    fn empty_rule_set_is_identity() {
        let base: FactStore = [Fact::analysis("P", vec![a(1)])].into_iter().collect();
        let fp = derive_fixpoint(&base, &[], DEFAULT_DERIVED_FACT_CAP).unwrap();
        assert!(fp.is_empty());
    }

    #[test]
    fn transitive_closure_of_five_node_chain() {
        let rules = parse_rules("rule t: Reaches(X, Z) :- Reaches(X, Y), Reaches(Y, Z).").unwrap();
        let base: FactStore = (1..5)
            .map(|i| Fact::analysis("Reaches", vec![Term::Int(i), Term::Int(i + 1)]))
            .collect();
        let fp = derive_fixpoint(&base, &derivations(&rules), DEFAULT_DERIVED_FACT_CAP).unwrap();
        // brute force: all pairs i < j over 1..=5
        let mut expected = Vec::new();
        for i in 1..=5 {
            for j in (i + 1)..=5 {
                expected.push((i, j));
            }
        }
        assert_eq!(expected.len(), 10);
        assert_eq!(base.len() + fp.len(), 10);
        for (i, j) in expected {
            let atom = GroundAtom::new("Reaches", vec![Term::Int(i), Term::Int(j)]);
            assert!(base.contains(&atom) || fp.contains(&atom), "missing {atom}");
        }
    }

    #[test]
    fn cap_reports_most_productive_rule() {
        let rules = parse_rules(
            "rule pairs: Pair(X, Y) :- N(X), N(Y).\nrule single: One(X) :- N(X).",
        )
        .unwrap();
        let base: FactStore = (0..20).map(|i| Fact::analysis("N", vec![Term::Int(i)])).collect();
        let err = derive_fixpoint(&base, &derivations(&rules), 100).unwrap_err();
        match err {
            InferenceError::ResourceExhausted { rule, produced, limit } => {
                assert_eq!(rule, "pairs");
                assert_eq!(produced, 400);
                assert_eq!(limit, 100);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn suggestion_disappears_with_negated_fact() {
        let rules = parse_rules(
            r#"suggest s: when SuspiciousMasquerade(F), not ViewedImports(F) text "Inspect imports of {F}." action ViewImports(F)."#,
        )
        .unwrap();
        let mut base: FactStore = [Fact::analysis("SuspiciousMasquerade", vec![a(1)])]
            .into_iter()
            .collect();
        let fp = Fixpoint::default();
        let s = evaluate_suggestions(&base, &fp, &suggestions(&rules), &names).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].text, "Inspect imports of f1.");
        assert_eq!(s[0].target, Some(ArtifactId::new(1)));
        assert_eq!(
            s[0].action,
            Some(GroundAtom::new("ViewImports", vec![a(1)]))
        );
        assert_eq!(s[0].provenance.len(), 1);

        base.insert(Fact::behavioral("ViewedImports", vec![a(1)])).unwrap();
        let s = evaluate_suggestions(&base, &fp, &suggestions(&rules), &names).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn empty_store_yields_no_suggestions() {
        let rules = parse_rules(r#"suggest s: when A(F) text "x"."#).unwrap();
        let s = evaluate_suggestions(&FactStore::new(), &Fixpoint::default(), &suggestions(&rules), &names)
            .unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn suggestions_are_deduplicated_and_sorted_by_binding() {
        let rules = parse_rules(r#"suggest s: when Has(F, X) text "{F}"."#).unwrap();
        let rules2 = parse_rules(r#"suggest s: when Has(F, _) text "{F}"."#).unwrap();
        let base: FactStore = [
            Fact::analysis("Has", vec![a(2), Term::str("x")]),
            Fact::analysis("Has", vec![a(1), Term::str("y")]),
            Fact::analysis("Has", vec![a(1), Term::str("x")]),
        ]
        .into_iter()
        .collect();
        let fp = Fixpoint::default();
        let s = evaluate_suggestions(&base, &fp, &suggestions(&rules), &names).unwrap();
        let texts: Vec<_> = s.iter().map(|s| (s.text.clone(), s.bindings["X"].clone())).collect();
        assert_eq!(
            texts,
            vec![
                ("f1".to_string(), Term::str("x")),
                ("f1".to_string(), Term::str("y")),
                ("f2".to_string(), Term::str("x")),
            ]
        );
        let s = evaluate_suggestions(&base, &fp, &suggestions(&rules2), &names).unwrap();
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn render_examples() {
        let rules = parse_rules(
            r#"suggest a: when P(F) text "Inspect imports of {F}".
               suggest b: when P(F) text "ok".
               suggest c: when P(F) text "{{F}}"."#,
        )
        .unwrap();
        let sr = suggestions(&rules);
        let mut b = BTreeMap::new();
        b.insert("F".to_string(), a(4));
        let contracts = |_: ArtifactId| Some("Contracts.pdf.exe".to_string());
        assert_eq!(
            render_suggestion(sr[0], &b, &contracts).unwrap(),
            "Inspect imports of Contracts.pdf.exe"
        );
        assert_eq!(render_suggestion(sr[1], &BTreeMap::new(), &contracts).unwrap(), "ok");
        assert_eq!(render_suggestion(sr[2], &BTreeMap::new(), &contracts).unwrap(), "{F}");
        assert!(matches!(
            render_suggestion(sr[0], &BTreeMap::new(), &contracts),
            Err(InferenceError::UnresolvedPlaceholder(_))
        ));
    }

    #[test]
    fn explain_chain_and_leaves() {
        let rules = parse_rules(
            "rule m: SuspiciousMasquerade(F) :- IsExecutable(F), HasDoubleExtension(F).\n\
             rule b: B(X) :- A(X).\nrule c: C(X) :- B(X).",
        )
        .unwrap();
        let base: FactStore = [
            Fact::analysis("IsExecutable", vec![a(1)]),
            Fact::analysis("HasDoubleExtension", vec![a(1)]),
            Fact::analysis("A", vec![a(1)]),
            Fact::behavioral("Opened", vec![a(1)]),
        ]
        .into_iter()
        .collect();
        let fp = derive_fixpoint(&base, &derivations(&rules), DEFAULT_DERIVED_FACT_CAP).unwrap();

        let tree = explain_derivation(&base, &fp, &GroundAtom::new("SuspiciousMasquerade", vec![a(1)])).unwrap();
        let DerivationTree::Node { rule, .. } = &tree else { panic!() };
        assert_eq!(rule, "m");
        let leaves: Vec<String> = tree.leaves().iter().map(|f| f.to_string()).collect();
        assert_eq!(leaves, vec!["IsExecutable(@a1)", "HasDoubleExtension(@a1)"]);
        assert_eq!(tree.depth(), 1);

        let chain = explain_derivation(&base, &fp, &GroundAtom::new("C", vec![a(1)])).unwrap();
        assert_eq!(chain.depth(), 2);

        assert!(matches!(
            explain_derivation(&base, &fp, &GroundAtom::new("Opened", vec![a(1)])),
            Err(InferenceError::NotDerived(_))
        ));
    }
}
