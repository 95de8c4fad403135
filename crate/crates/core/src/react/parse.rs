use crate::domain::MalformedReason;

pub const THOUGHT: &str = "Thought:";
pub const ACTION: &str = "Action:";
pub const ACTION_INPUT: &str = "Action Input:";
pub const FINAL_ANSWER: &str = "Final Answer:";
pub const OBSERVATION: &str = "Observation:";

/// A model emission classified against the ReAct block grammar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedEmission {
    Action {
        thought: String,
        action: String,
        input: String,
    },
    Final {
        thought: String,
        answer: String,
    },
    Malformed(MalformedReason),
}

fn keyword_rest<'a>(line: &'a str, keyword: &str) -> Option<&'a str> {
    line.trim_start().strip_prefix(keyword)
}

fn is_keyword_line(line: &str) -> bool {
    [THOUGHT, ACTION, ACTION_INPUT, FINAL_ANSWER, OBSERVATION]
        .iter()
        .any(|k| keyword_rest(line, k).is_some())
}

fn thought_of(lines: &[&str]) -> String {
    let text = lines.join("\n");
    let text = text.trim();
    text.strip_prefix(THOUGHT).map_or(text, str::trim).to_string()
}

/// Text of a keyword line plus its continuation lines, up to the next
/// keyword line.
fn block(first: &str, rest: &[&str]) -> String {
    let mut parts = vec![first];
    for line in rest {
        if is_keyword_line(line) {
            break;
        }
        parts.push(line);
    }
    parts.join("\n").trim().to_string()
}

/// Classifies one emission. Keywords are case-sensitive and must open a
/// line; whichever of `Action:` / `Final Answer:` comes first decides.
/// Total: every input maps to exactly one variant.
pub fn parse_emission(text: &str, tools: &[&str]) -> ParsedEmission {
    let lines: Vec<&str> = text.lines().collect();
    let Some(pos) = lines
        .iter()
        .position(|l| keyword_rest(l, ACTION).is_some() || keyword_rest(l, FINAL_ANSWER).is_some())
    else {
        return ParsedEmission::Malformed(MalformedReason::NoKeyword);
    };
    let thought = thought_of(&lines[..pos]);

    if let Some(answer) = keyword_rest(lines[pos], FINAL_ANSWER) {
        // The answer is the rest of its line; later lines only count when
        // that line is empty.
        let answer = match answer.trim() {
            "" => block("", &lines[pos + 1..]),
            line => line.to_string(),
        };
        return ParsedEmission::Final { thought, answer };
    }

    let action = keyword_rest(lines[pos], ACTION).unwrap_or_default().trim();
    if !tools.contains(&action) {
        return ParsedEmission::Malformed(MalformedReason::UnknownTool);
    }
    let after = &lines[pos + 1..];
    let Some(ipos) = after.iter().position(|l| keyword_rest(l, ACTION_INPUT).is_some()) else {
        return ParsedEmission::Malformed(MalformedReason::MissingInput);
    };
    // An answer or another action before the input means the input is missing.
    if after[..ipos].iter().any(|l| is_keyword_line(l) && keyword_rest(l, THOUGHT).is_none()) {
        return ParsedEmission::Malformed(MalformedReason::MissingInput);
    }
    let first = keyword_rest(after[ipos], ACTION_INPUT).unwrap_or_default();
    let input = block(first, &after[ipos + 1..]);
    if input.is_empty() {
        return ParsedEmission::Malformed(MalformedReason::MissingInput);
    }
    ParsedEmission::Action {
        thought,
        action: action.to_string(),
        input,
    }
}

/// Canonical block text for a parsed emission.
pub fn render_emission(e: &ParsedEmission) -> String {
    match e {
        ParsedEmission::Action { thought, action, input } => {
            format!("{THOUGHT} {thought}\n{ACTION} {action}\n{ACTION_INPUT} {input}")
        }
        ParsedEmission::Final { thought, answer } => format!("{THOUGHT} {thought}\n{FINAL_ANSWER} {answer}"),
        ParsedEmission::Malformed(_) => String::new(),
    }
}
