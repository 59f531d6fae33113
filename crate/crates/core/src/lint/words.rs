//! Token-level view of shell command strings: enough to recognise commands
//! and their arguments, not a shell parser.

/// Split a command string into simple commands of unquoted words. Command
/// separators are `&&`, `||`, `;`, `|`, `&`, newlines and parentheses.
/// Quotes are removed; `$(...)` and backquotes stay inside their word.
pub fn simple_commands(text: &str) -> Vec<Vec<String>> {
    let mut commands = Vec::new();
    let mut current: Vec<String> = Vec::new();
    let mut word = String::new();
    let mut in_word = false;
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;

    macro_rules! end_word {
        () => {
            if in_word {
                current.push(std::mem::take(&mut word));
                in_word = false;
            }
        };
    }
    macro_rules! end_command {
        () => {
            end_word!();
            if !current.is_empty() {
                commands.push(std::mem::take(&mut current));
            }
        };
    }

    while i < chars.len() {
        let c = chars[i];
        match c {
            '\'' => {
                in_word = true;
                i += 1;
                while i < chars.len() && chars[i] != '\'' {
                    word.push(chars[i]);
                    i += 1;
                }
            }
            '"' => {
                in_word = true;
                i += 1;
                while i < chars.len() && chars[i] != '"' {
                    if chars[i] == '\\' && i + 1 < chars.len() {
                        i += 1;
                    }
                    word.push(chars[i]);
                    i += 1;
                }
            }
            '\\' => {
                in_word = true;
                if i + 1 < chars.len() {
                    i += 1;
                    word.push(chars[i]);
                }
            }
            '$' if chars.get(i + 1) == Some(&'(') => {
                in_word = true;
                let mut depth = 0;
                while i < chars.len() {
                    word.push(chars[i]);
                    match chars[i] {
                        '(' => depth += 1,
                        ')' => {
                            depth -= 1;
                            if depth == 0 {
                                break;
                            }
                        }
                        _ => {}
                    }
                    i += 1;
                }
            }
            '`' => {
                in_word = true;
                word.push(c);
                i += 1;
                while i < chars.len() && chars[i] != '`' {
                    word.push(chars[i]);
                    i += 1;
                }
                if i < chars.len() {
                    word.push('`');
                }
            }
            ';' | '|' | '&' | '(' | ')' | '\n' => {
                end_command!();
            }
            c if c.is_whitespace() => {
                end_word!();
            }
            c => {
                in_word = true;
                word.push(c);
            }
        }
        i += 1;
    }
    if in_word {
        current.push(word);
    }
    if !current.is_empty() {
        commands.push(current);
    }
    commands
}

fn is_assignment(word: &str) -> bool {
    match word.split_once('=') {
        Some((name, _)) => {
            let mut chars = name.chars();
            chars
                .next()
                .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        }
        None => false,
    }
}

/// Leading `NAME=value` words of a simple command and the rest.
pub fn split_assignments(cmd: &[String]) -> (&[String], &[String]) {
    let n = cmd.iter().take_while(|w| is_assignment(w)).count();
    cmd.split_at(n)
}

/// Program name without its directory.
pub fn program(word: &str) -> &str {
    word.rsplit('/').next().unwrap_or(word)
}

/// Resolve `path` against `cwd` and collapse `.`, `..` and repeated slashes.
/// Paths starting with `$` or `~` are returned unchanged.
pub fn resolve(cwd: &str, path: &str) -> String {
    if path.starts_with('$') || path.starts_with('~') {
        return path.to_string();
    }
    let joined = if path.starts_with('/') {
        path.to_string()
    } else {
        format!("{cwd}/{path}")
    };
    let mut parts: Vec<&str> = Vec::new();
    for part in joined.split('/') {
        match part {
            "" | "." => {}
            ".." => {
                parts.pop();
            }
            p => parts.push(p),
        }
    }
    format!("/{}", parts.join("/"))
}

/// Glob match with `*` (any run of characters except `/`) and `?`.
pub fn glob_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = text.chars().collect();
    let (mut pi, mut ti) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && (p[pi] == '?' && t[ti] != '/' || p[pi] == t[ti] && p[pi] != '*') {
            pi += 1;
            ti += 1;
        } else if pi < p.len() && p[pi] == '*' {
            star = Some((pi, ti));
            pi += 1;
        } else if let Some((sp, st)) = star {
            if t[st] == '/' {
                return false;
            }
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    while pi < p.len() && p[pi] == '*' {
        pi += 1;
    }
    pi == p.len()
}

/// Last path component of a URL or path, without query string or fragment.
pub fn basename(url_or_path: &str) -> &str {
    let trimmed = url_or_path.split(['?', '#']).next().unwrap_or(url_or_path);
    let trimmed = trimmed.trim_end_matches('/');
    trimmed.rsplit('/').next().unwrap_or(trimmed)
}
