//! The finalize_segment rule table. Each expectation follows directly from
//! the trim / collapse / capitalise / terminate rules.

use wizundry_core::speech::{finalize_segment, SpeechError};

pub const CASES: [(&str, Result<&str, SpeechError>); 10] = [
    ("  hello   world ", Ok("Hello world.")),
    ("ready?", Ok("Ready?")),
    ("", Err(SpeechError::EmptySegment)),
    (" \t\n ", Err(SpeechError::EmptySegment)),
    ("stop!", Ok("Stop!")),
    ("Already done.", Ok("Already done.")),
    ("123 main street", Ok("123 Main street.")),
    ("\"quoted\" text", Ok("\"Quoted\" text.")),
    ("éclair\tand\n\ncoffee", Ok("Éclair and coffee.")),
    ("is it 5 p.m", Ok("Is it 5 p.m.")),
];

/// Mismatches as `(input, got, want)`.
pub fn mismatches() -> Vec<String> {
    CASES
        .iter()
        .filter_map(|(input, want)| {
            let got = finalize_segment(input);
            let want = want.clone().map(str::to_owned);
            (got != want).then(|| format!("{input:?}: got {got:?}, want {want:?}"))
        })
        .collect()
}
