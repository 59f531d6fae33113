//! Shell word quoting for generated scripts and transcripts.

fn is_plain(c: char) -> bool {
    c.is_ascii_alphanumeric() || "_-./:=,+@%^".contains(c)
}

/// Quote one argument so a POSIX shell reads it back as a single word.
///
/// Words made only of safe characters are emitted bare. Words containing `$`
/// are double-quoted so that variable references such as `$USER` or
/// `$HOME/data` expand in the batch shell. Everything else is single-quoted.
pub fn quote(word: &str) -> String {
    if word.is_empty() {
        return "''".to_string();
    }
    if word.chars().all(is_plain) {
        return word.to_string();
    }
    if word.contains('$') {
        let mut out = String::with_capacity(word.len() + 2);
        out.push('"');
        for c in word.chars() {
            if matches!(c, '"' | '\\' | '`') {
                out.push('\\');
            }
            out.push(c);
        }
        out.push('"');
        return out;
    }
    format!("'{}'", word.replace('\'', r"'\''"))
}

/// Quote and join a list of words with single spaces.
pub fn join<S: AsRef<str>>(words: &[S]) -> String {
    words
        .iter()
        .map(|w| quote(w.as_ref()))
        .collect::<Vec<_>>()
        .join(" ")
}
