//! Prompt templates shipped with the engine.
//!
//! Templates use `{name}` placeholders. Only the placeholders passed to
//! [`render`] are substituted, so literal JSON braces in a template survive.
//! Every data block is wrapped in a fenced section under a `# Heading` line;
//! [`fenced_section`] recovers a block from a rendered prompt.

pub const EXTRACT: &str = include_str!("../assets/extract.txt");
pub const CONSOLIDATE: &str = include_str!("../assets/consolidate.txt");
pub const SUMMARIZE: &str = include_str!("../assets/summarize.txt");
pub const FILTER: &str = include_str!("../assets/filter.txt");
pub const MERGE: &str = include_str!("../assets/merge.txt");

/// First line of each template; identifies the prompt kind.
pub const EXTRACT_TITLE: &str = "# Knowledge graph extraction";
pub const CONSOLIDATE_TITLE: &str = "# Description consolidation";
pub const SUMMARIZE_TITLE: &str = "# Community report";
pub const FILTER_HEADING: &str = "# Data tables";
pub const MERGE_HEADING: &str = "# Analyst Reports";

/// Default value for the merge prompt's `{response_format}` slot.
pub const DEFAULT_RESPONSE_FORMAT: &str = "A short direct answer followed by supporting points.";

/// Which template a rendered prompt came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    Extract,
    Consolidate,
    Summarize,
    Filter,
    Merge,
    Other,
}

pub fn classify(prompt: &str) -> PromptKind {
    let first = prompt.lines().next().unwrap_or("").trim();
    if first == EXTRACT_TITLE {
        PromptKind::Extract
    } else if first == CONSOLIDATE_TITLE {
        PromptKind::Consolidate
    } else if first == SUMMARIZE_TITLE {
        PromptKind::Summarize
    } else if has_heading(prompt, MERGE_HEADING) {
        PromptKind::Merge
    } else if has_heading(prompt, FILTER_HEADING) {
        PromptKind::Filter
    } else {
        PromptKind::Other
    }
}

fn has_heading(prompt: &str, heading: &str) -> bool {
    prompt.lines().any(|l| l.trim_end() == heading)
}

/// Substitute `{key}` placeholders. Values are sanitized so they cannot
/// close the surrounding fence.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in vars {
        let placeholder = format!("{{{key}}}");
        out = out.replace(&placeholder, &sanitize(value));
    }
    out
}

fn sanitize(value: &str) -> String {
    value.replace("```", "'''")
}

/// Contents of the fenced block that follows `heading`, if present.
pub fn fenced_section<'a>(prompt: &'a str, heading: &str) -> Option<&'a str> {
    let mut offset = 0;
    let mut lines = prompt.split_inclusive('\n');
    // locate heading
    loop {
        let line = lines.next()?;
        offset += line.len();
        if line.trim_end() == heading {
            break;
        }
    }
    // opening fence
    loop {
        let line = lines.next()?;
        offset += line.len();
        if line.trim_start().starts_with("```") {
            break;
        }
        if !line.trim().is_empty() {
            return None;
        }
    }
    let start = offset;
    for line in lines {
        if line.trim_end() == "```" {
            let body = &prompt[start..offset];
            return Some(body.strip_suffix('\n').unwrap_or(body));
        }
        offset += line.len();
    }
    None
}

/// Token overhead of a template: its size with every placeholder empty.
pub fn template_overhead(template: &str, keys: &[&str]) -> usize {
    let vars: Vec<(&str, &str)> = keys.iter().map(|k| (*k, "")).collect();
    crate::text::count_tokens(&render(template, &vars))
}
