//! Fact store, rule language and forward-chaining evaluation.
//!
//! Analysis facts come from identifiers, behavioral facts record what the
//! analyst did. Derivation rules are evaluated to a least fixpoint; suggestion
//! rules are then evaluated once against that fixpoint, with negation checked
//! as failure to find a matching fact.

mod eval;
mod rules;
mod term;

pub use eval::{
    derive_fixpoint, evaluate_suggestions, explain_derivation, render_suggestion, Derivation,
    DerivationTree, Fixpoint, InferenceError, Suggestion, DEFAULT_DERIVED_FACT_CAP,
};
pub use rules::{
    parse_rules, DerivationRule, Pattern, Rule, RuleAtom, RuleError, RuleKind, RuleSet, Segment,
    Span, SuggestionRule, Template,
};
pub use term::{ArityError, Fact, FactStore, GroundAtom, Origin, Term};

/// Version tag of the bundled rule pack.
pub const DEFAULT_RULES_VERSION: u32 = 1;

/// The rule pack shipped with the engine.
pub const DEFAULT_RULES: &str = include_str!("../../assets/default.rules");

pub fn default_rules() -> RuleSet {
    RuleSet::parse(DEFAULT_RULES).expect("bundled rule pack parses")
}

#[cfg(test)]
mod tests {
    #[test]
    fn bundled_pack_is_valid() {
        let set = super::default_rules();
        assert!(set.derivations().count() >= 4);
        assert!(set.suggestions().count() >= 6);
    }
}
