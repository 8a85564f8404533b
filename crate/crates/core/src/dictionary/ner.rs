use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub text: String,
    /// Byte offsets into the source text.
    pub start: usize,
    pub end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
}

/// Named-entity recognizer. Returns top-level entities, deduplicated, in document order.
pub trait EntityRecognizer: Send + Sync {
    fn extract(&self, text: &str) -> Vec<EntitySpan>;
}

/// Maximal runs of capitalized tokens separated only by whitespace.
///
/// A sentence-initial token counts only if the same surface form also occurs
/// capitalized at a non-initial position somewhere in the text.
#[derive(Debug, Clone, Copy, Default)]
pub struct CapitalizationNer;

struct Tok<'a> {
    text: &'a str,
    start: usize,
    end: usize,
    initial: bool,
    /// only whitespace between this and the previous token
    joined: bool,
}

fn push_tok<'a>(text: &'a str, s: usize, e: usize, last_end: Option<usize>, toks: &mut Vec<Tok<'a>>) {
    let gap = last_end.map(|le| &text[le..s]);
    let before = text[..s].trim_end();
    let initial = before.is_empty() || before.ends_with(['.', '!', '?']);
    let joined = gap.is_some_and(|g| g.chars().all(char::is_whitespace));
    toks.push(Tok { text: &text[s..e], start: s, end: e, initial, joined });
}

fn scan(text: &str) -> Vec<Tok<'_>> {
    let mut toks = Vec::new();
    let mut start: Option<usize> = None;
    let mut last_end: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            push_tok(text, s, i, last_end, &mut toks);
            last_end = Some(i);
        }
    }
    if let Some(s) = start {
        push_tok(text, s, text.len(), last_end, &mut toks);
    }
    toks
}

fn capitalized(t: &str) -> bool {
    t.chars().next().is_some_and(char::is_uppercase)
}

impl EntityRecognizer for CapitalizationNer {
    fn extract(&self, text: &str) -> Vec<EntitySpan> {
        let toks = scan(text);
        let recurs_mid = |s: &str| toks.iter().any(|t| !t.initial && t.text == s);
        let is_entity_tok = |t: &Tok<'_>| capitalized(t.text) && (!t.initial || recurs_mid(t.text));
        let mut spans: Vec<EntitySpan> = Vec::new();
        let mut run: Option<(usize, usize)> = None;
        for t in &toks {
            if is_entity_tok(t) {
                run = match run {
                    Some((s, _)) if t.joined => Some((s, t.end)),
                    Some((s, e)) => {
                        spans.push(EntitySpan { text: text[s..e].to_string(), start: s, end: e, kind: None });
                        Some((t.start, t.end))
                    }
                    None => Some((t.start, t.end)),
                };
            } else if let Some((s, e)) = run.take() {
                spans.push(EntitySpan { text: text[s..e].to_string(), start: s, end: e, kind: None });
            }
        }
        if let Some((s, e)) = run {
            spans.push(EntitySpan { text: text[s..e].to_string(), start: s, end: e, kind: None });
        }
        let mut seen = std::collections::HashSet::new();
        spans.retain(|s| seen.insert(s.text.clone()));
        spans
    }
}
