//! Every fixed prompt string in one place.
//!
//! The exact wording matters: answer normalization looks for the miss
//! phrases below, the judge parser reads the leading yes/no, and the
//! curation targets embed these strings verbatim. Change them here and
//! nowhere else.

use crate::kg::ApiRegistry;

/// Canonical "missing" answer. Generation targets and relabeled training
/// labels use exactly this string.
pub const MISS_TARGET: &str = "i don't know";

/// Normalized phrasings that count as a missing answer.
pub const DEFAULT_MISS_PHRASES: &[&str] = &["i don't know", "i do not know"];

/// System message for answer generation.
pub const ANSWER_SYSTEM_PROMPT: &str =
    "You are a question answering assistant. Use the provided context when it is relevant.";

/// Instruction appended after the question in the standard answer prompt.
pub const ANSWER_INSTRUCTION: &str = "Answer the question concisely. If the context does not \
contain the answer and you do not know it, reply exactly \"i don't know\".";

/// Instruction used when curating relabel candidates: the model must commit
/// to an answer so the judge can test whether the retrieved context (or the
/// model alone) suffices.
pub const ALWAYS_ANSWER_INSTRUCTION: &str = "Answer the question concisely. Always produce your \
best guess, even if you are unsure. Never reply \"i don't know\".";

/// Instruction appended to the function catalog when asking for an API call.
pub const CALL_INSTRUCTION: &str = "Emit exactly one function call in the form name(arg1, arg2, \
...) using the functions listed above, with string arguments in double quotes. If no function \
applies, reply with the single word None.";

/// Renders the prompt for knowledge-graph call generation.
pub fn render_call_prompt(registry: &ApiRegistry, question: &str, query_time: &str) -> String {
    format!(
        "Available functions:\n{}\nQuery time: {}\nQuestion: {}\n{}",
        crate::kg::render_catalog(registry),
        query_time,
        question,
        CALL_INSTRUCTION,
    )
}

/// Renders the yes/no grading prompt. The judge answer parser accepts only
/// a leading "yes" as correct; anything else counts as incorrect.
pub fn render_judge_prompt(question: &str, ground_truth: &str, candidate: &str) -> String {
    format!(
        "You are grading an answer to a question.\nQuestion: {question}\nReference answer: \
{ground_truth}\nCandidate answer: {candidate}\nDoes the candidate answer convey the same \
meaning as the reference answer? Reply with exactly one word: yes or no.",
    )
}
