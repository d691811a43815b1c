use std::sync::LazyLock;

use regex::Regex;

static SCRIPT_STYLE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<\s*(script|style)\b.*?<\s*/\s*(script|style)\s*>").unwrap());
static HTML_TABLE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<\s*table\b.*?<\s*/\s*table\s*>").unwrap());
static HTML_COMMENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<!--.*?-->").unwrap());
static BLOCK_TAG: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)<\s*/?\s*(br|p|div|tr|li|ul|ol|h[1-6]|hr|center|pre|page|body|html|title)\b[^<>]*>")
        .unwrap()
});
/// What counts as markup: `<` followed by an optional `/` and a letter,
/// `!` or `?`, up to the next `>` with no `<` in between.
static TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"<\s*/?\s*[A-Za-z!?][^<>]*>").unwrap());
static PAGE_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^(?:\d+|page\s+\d+)$").unwrap());
static COLUMN_SEP: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\t|\||\s{2,}").unwrap());
static NUMERIC_FIELD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\(?-?\$?\s*\(?-?(?:\d[\d,]*(?:\.\d+)?|\.\d+)\)?%?\)?$").unwrap());

pub fn contains_markup(text: &str) -> bool {
    TAG.is_match(text)
}

fn strip_tags(text: &str) -> String {
    let mut current = TAG.replace_all(text, "").into_owned();
    // entity decoding can manufacture new tags (`&lt;b&gt;`); iterate to a fixed point
    for _ in 0..8 {
        let decoded = html_escape::decode_html_entities(&current).into_owned();
        let stripped = TAG.replace_all(&decoded, "").into_owned();
        if stripped == current {
            break;
        }
        current = stripped;
    }
    current
}

/// Converts a raw body into plain-text lines: script/style/comment and
/// HTML `<table>` blocks are dropped, block-level tags become line breaks,
/// every other tag is removed and entities are decoded.
pub(crate) fn html_to_lines(body: &str) -> Vec<String> {
    let text = body.replace("\r\n", "\n").replace('\r', "\n");
    let text = HTML_COMMENT.replace_all(&text, " ");
    let text = SCRIPT_STYLE.replace_all(&text, " ");
    let text = HTML_TABLE.replace_all(&text, "\n\n");
    let text = BLOCK_TAG.replace_all(&text, "\n");
    let text = strip_tags(&text);
    text.lines()
        .map(|l| l.replace(['\u{a0}', '\u{200b}'], " ").trim_end().to_string())
        .collect()
}

pub fn is_page_number_line(line: &str) -> bool {
    PAGE_LINE.is_match(line.trim())
}

fn numeric_fields(line: &str) -> usize {
    let trimmed = line.trim();
    let columns: Vec<&str> = COLUMN_SEP
        .split(trimmed)
        .map(str::trim)
        .filter(|f| !f.is_empty())
        .collect();
    if columns.len() >= 2 {
        return columns.iter().filter(|f| NUMERIC_FIELD.is_match(f)).count();
    }
    // single-spaced rows ("Net sales 1,234 5,678 9,012"): numbers must be
    // at least half of the tokens
    let tokens: Vec<&str> = trimmed.split_whitespace().collect();
    let numeric = tokens.iter().filter(|t| NUMERIC_FIELD.is_match(t)).count();
    if numeric * 2 >= tokens.len() {
        numeric
    } else {
        0
    }
}

/// A line with at least three numeric fields separated by column
/// separators (tab, `|`, two or more spaces), or a single-spaced row whose
/// tokens are at least half numbers.
pub fn is_tabular_line(line: &str) -> bool {
    numeric_fields(line) >= 3
}

/// Groups lines into blocks of consecutive non-blank lines, drops page-number
/// lines, drops blocks where at least half the lines are tabular, and joins
/// each surviving block into one whitespace-normalized paragraph.
pub(crate) fn clean_region(lines: &[String]) -> Vec<String> {
    let mut paragraphs = Vec::new();
    let mut block: Vec<&str> = Vec::new();
    let mut flush = |block: &mut Vec<&str>| {
        if block.is_empty() {
            return;
        }
        let tabular = block.iter().filter(|l| is_tabular_line(l)).count();
        if tabular * 2 < block.len() {
            let joined = block.iter().flat_map(|l| l.split_whitespace()).collect::<Vec<_>>().join(" ");
            if !joined.is_empty() {
                paragraphs.push(joined);
            }
        }
        block.clear();
    };
    for line in lines {
        if line.trim().is_empty() {
            flush(&mut block);
        } else if !is_page_number_line(line) {
            block.push(line.as_str());
        }
    }
    flush(&mut block);
    paragraphs
}
