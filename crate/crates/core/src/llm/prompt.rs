//! Greedy, budget-bounded prompt assembly.

use serde::{Deserialize, Serialize};

use super::context::ContextItem;
use super::LlmError;

pub const TEMPLATE_VERSION: &str = "artiscope-prompt-v1";

pub const PREAMBLE: &str = "You are assisting a forensic analyst. The CONTEXT lines are facts, findings and \
strings extracted from the artifacts under analysis, most relevant first. Answer the QUESTION using only \
this context; say so when the context is insufficient. Never suggest visiting URLs found in the evidence.";

const CONTEXT_HEADER: &str = "\n\nCONTEXT:\n";
const QUESTION_HEADER: &str = "\nQUESTION:\n";

/// Cost estimate: one unit per four characters, rounded up.
pub fn units(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBudget {
    pub max_units: usize,
    pub reserve_for_reply: usize,
}

impl PromptBudget {
    pub fn new(max_units: usize, reserve_for_reply: usize) -> Result<Self, LlmError> {
        let b = Self {
            max_units,
            reserve_for_reply,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.max_units > self.reserve_for_reply && self.reserve_for_reply > 0 {
            Ok(())
        } else {
            Err(LlmError::InvalidBudget {
                max_units: self.max_units,
                reserve: self.reserve_for_reply,
            })
        }
    }

    /// Units the prompt itself may use.
    pub fn available(&self) -> usize {
        self.max_units - self.reserve_for_reply
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub text: String,
    /// Leading items of the candidate list that were packed.
    pub included: usize,
    pub units: usize,
    pub template_version: String,
}

/// Units taken by the preamble and section headers.
pub fn fixed_units() -> usize {
    units(&format!("{PREAMBLE}{CONTEXT_HEADER}{QUESTION_HEADER}"))
}

/// Units one context line costs, newline included.
pub fn item_cost(text: &str) -> usize {
    units(&format!("{text}\n"))
}

/// Packs the longest prefix of `items` (already ranked) that fits next to
/// the preamble and question.
pub fn optimize_prompt(items: &[ContextItem], budget: &PromptBudget, question: &str) -> Result<Prompt, LlmError> {
    budget.validate()?;
    let available = budget.available();
    let needed = fixed_units() + units(question);
    if needed > available {
        return Err(LlmError::OverBudget { needed, available });
    }
    let mut used = needed;
    let mut included = 0;
    for item in items {
        let cost = item_cost(&item.text);
        if used + cost > available {
            break;
        }
        used += cost;
        included += 1;
    }
    if !items.is_empty() && included == 0 {
        return Err(LlmError::OverBudget {
            needed: needed + item_cost(&items[0].text),
            available,
        });
    }
    let mut text = String::from(PREAMBLE);
    text.push_str(CONTEXT_HEADER);
    for item in &items[..included] {
        text.push_str(&item.text);
        text.push('\n');
    }
    text.push_str(QUESTION_HEADER);
    text.push_str(question);
    Ok(Prompt {
        units: units(&text),
        text,
        included,
        template_version: TEMPLATE_VERSION.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::ArtifactId;

    fn items(n: usize, len: usize) -> Vec<ContextItem> {
        (0..n)
            .map(|i| ContextItem {
                text: format!("{i}{}", "x".repeat(len - 1)),
                relevance: (n - i) as f64,
                source: super::super::ContextSource::Fact,
                artifact: ArtifactId::new(1),
            })
            .collect()
    }

    #[test]
    fn estimator() {
        assert_eq!(units(""), 0);
        assert_eq!(units("abcd"), 1);
        assert_eq!(units("abcde"), 2);
        assert_eq!(units("éééé"), 1);
    }

    #[test]
    fn packing_count_follows_the_formula() {
        // Ten 40-char items cost ceil(41/4) = 11 units each; the question
        // costs 4, leaving 34 units of context: three items.
        let budget = PromptBudget::new(fixed_units() + 4 + 34 + 50, 50).unwrap();
        let p = optimize_prompt(&items(10, 40), &budget, "why is this bad").unwrap();
        assert_eq!(p.included, 3);
        assert!(p.units <= budget.available());
    }

    #[test]
    fn empty_context_and_layout() {
        let budget = PromptBudget::new(4096, 512).unwrap();
        let p = optimize_prompt(&[], &budget, "q?").unwrap();
        assert_eq!(p.text, format!("{PREAMBLE}\n\nCONTEXT:\n\nQUESTION:\nq?"));
        assert_eq!(p.included, 0);
    }

    #[test]
    fn too_small_budget() {
        let budget = PromptBudget::new(10, 1).unwrap();
        assert!(matches!(optimize_prompt(&[], &budget, "q"), Err(LlmError::OverBudget { .. })));
        assert!(PromptBudget::new(5, 5).is_err());
        assert!(PromptBudget::new(5, 0).is_err());
    }

    #[test]
    fn first_item_must_fit() {
        let budget = PromptBudget::new(fixed_units() + 1 + 5 + 10, 10).unwrap();
        let err = optimize_prompt(&items(1, 40), &budget, "q").unwrap_err();
        assert!(matches!(err, LlmError::OverBudget { .. }));
    }
}
