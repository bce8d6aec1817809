use super::SpeechError;

/// Turns a raw final transcript into the sentence committed to the doc:
/// trimmed, whitespace runs collapsed, first letter capitalised and a full
/// stop added unless it already ends in `.`, `!` or `?`.
pub fn finalize_segment(raw: &str) -> Result<String, SpeechError> {
    let words: Vec<&str> = raw.split_whitespace().collect();
    if words.is_empty() {
        return Err(SpeechError::EmptySegment);
    }
    let joined = words.join(" ");
    let mut out = String::with_capacity(joined.len() + 1);
    let mut capitalised = false;
    for c in joined.chars() {
        if !capitalised && c.is_alphabetic() {
            out.extend(c.to_uppercase());
            capitalised = true;
        } else {
            out.push(c);
        }
    }
    if !out.ends_with(['.', '!', '?']) {
        out.push('.');
    }
    Ok(out)
}
