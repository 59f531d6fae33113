//! Dockerfile instruction AST: parsing, canonical rendering and generation.
//!
//! The parser is line based. A line ending in a backslash continues on the
//! next line; the pieces are joined with a single space. Comment lines inside
//! a continuation are dropped, as the Docker builder does. Anything that is
//! not a recognised instruction is kept verbatim as [`InstructionKind::Unknown`]
//! so that rendering never loses text.

mod generate;

use std::fmt;

use thiserror::Error;

pub use generate::{entrypoint_file_name, generate_dockerfile, GenerateError, OPENMPI_BUILD_ARG};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DockerfileError {
    #[error("line {line}: {keyword} appears before the first FROM")]
    BeforeFrom { line: usize, keyword: String },
    #[error("line {line}: the `escape` parser directive is not supported")]
    EscapeDirective { line: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InstructionKind {
    From,
    Run,
    Copy,
    Add,
    Env,
    Arg,
    Workdir,
    Entrypoint,
    Cmd,
    Expose,
    User,
    Label,
    Volume,
    Comment,
    Unknown,
}

impl InstructionKind {
    const KEYWORDS: [(InstructionKind, &'static str); 13] = [
        (InstructionKind::From, "FROM"),
        (InstructionKind::Run, "RUN"),
        (InstructionKind::Copy, "COPY"),
        (InstructionKind::Add, "ADD"),
        (InstructionKind::Env, "ENV"),
        (InstructionKind::Arg, "ARG"),
        (InstructionKind::Workdir, "WORKDIR"),
        (InstructionKind::Entrypoint, "ENTRYPOINT"),
        (InstructionKind::Cmd, "CMD"),
        (InstructionKind::Expose, "EXPOSE"),
        (InstructionKind::User, "USER"),
        (InstructionKind::Label, "LABEL"),
        (InstructionKind::Volume, "VOLUME"),
    ];

    fn from_keyword(word: &str) -> InstructionKind {
        Self::KEYWORDS
            .iter()
            .find(|(_, kw)| kw.eq_ignore_ascii_case(word))
            .map_or(InstructionKind::Unknown, |(kind, _)| *kind)
    }

    /// The instruction keyword, `None` for comments and unknown lines.
    pub fn keyword(self) -> Option<&'static str> {
        Self::KEYWORDS
            .iter()
            .find(|(kind, _)| *kind == self)
            .map(|(_, kw)| *kw)
    }

    fn accepts_exec_form(self) -> bool {
        matches!(
            self,
            InstructionKind::Run
                | InstructionKind::Cmd
                | InstructionKind::Entrypoint
                | InstructionKind::Copy
                | InstructionKind::Add
                | InstructionKind::Volume
        )
    }
}

impl fmt::Display for InstructionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InstructionKind::Comment => f.write_str("COMMENT"),
            InstructionKind::Unknown => f.write_str("UNKNOWN"),
            other => f.write_str(other.keyword().unwrap_or_default()),
        }
    }
}

/// One Dockerfile instruction.
///
/// For comments and unknown instructions `args` is the whole source text;
/// for everything else it is the text after the keyword. Exec-form arguments
/// are stored in canonical `["a", "b"]` form.
///
/// Equality ignores `line_span`: two instructions are equal when they render
/// to the same text.
#[derive(Debug, Clone, Eq)]
pub struct Instruction {
    pub kind: InstructionKind,
    pub args: String,
    pub exec_form: bool,
    /// First and last source line (1-based, inclusive).
    pub line_span: (usize, usize),
}

impl PartialEq for Instruction {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.args == other.args && self.exec_form == other.exec_form
    }
}

fn exec_tokens(args: &str) -> Option<Vec<String>> {
    if !args.starts_with('[') {
        return None;
    }
    serde_json::from_str::<Vec<String>>(args).ok()
}

/// Canonical bracketed, double-quoted token list.
pub fn render_exec(tokens: &[String]) -> String {
    let quoted: Vec<String> = tokens
        .iter()
        .map(|t| serde_json::to_string(t).expect("strings always serialize"))
        .collect();
    format!("[{}]", quoted.join(", "))
}

impl Instruction {
    /// A shell- or plain-form instruction.
    pub fn new(kind: InstructionKind, args: impl Into<String>) -> Self {
        Instruction {
            kind,
            args: args.into(),
            exec_form: false,
            line_span: (0, 0),
        }
    }

    /// An exec-form instruction with the given tokens.
    pub fn exec<S: AsRef<str>>(kind: InstructionKind, tokens: &[S]) -> Self {
        let tokens: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
        Instruction {
            kind,
            args: render_exec(&tokens),
            exec_form: true,
            line_span: (0, 0),
        }
    }

    pub fn exec_args(&self) -> Option<Vec<String>> {
        if self.exec_form {
            exec_tokens(&self.args)
        } else {
            None
        }
    }

    /// The instruction's command text: the shell string for shell form, the
    /// tokens joined by spaces for exec form.
    pub fn command_text(&self) -> String {
        match self.exec_args() {
            Some(tokens) => tokens.join(" "),
            None => self.args.clone(),
        }
    }

    /// First source line.
    pub fn line(&self) -> usize {
        self.line_span.0
    }

    fn from_text(text: &str, line_span: (usize, usize)) -> Instruction {
        let trimmed = text.trim();
        let (word, rest) = match trimmed.split_once(char::is_whitespace) {
            Some((w, r)) => (w, r.trim()),
            None => (trimmed, ""),
        };
        let kind = InstructionKind::from_keyword(word);
        if kind == InstructionKind::Unknown {
            return Instruction {
                kind,
                args: trimmed.to_string(),
                exec_form: false,
                line_span,
            };
        }
        if kind.accepts_exec_form() {
            if let Some(tokens) = exec_tokens(rest) {
                return Instruction {
                    kind,
                    args: render_exec(&tokens),
                    exec_form: true,
                    line_span,
                };
            }
        }
        Instruction {
            kind,
            args: rest.to_string(),
            exec_form: false,
            line_span,
        }
    }

    pub fn render(&self) -> String {
        match self.kind.keyword() {
            None => self.args.clone(),
            Some(kw) if self.args.is_empty() => kw.to_string(),
            Some(kw) => format!("{kw} {}", self.args),
        }
    }
}

#[derive(Debug, Clone, Default, Eq)]
pub struct DockerfileAst {
    pub instructions: Vec<Instruction>,
    pub source_name: Option<String>,
}

/// Compares instructions only; the source name is metadata.
impl PartialEq for DockerfileAst {
    fn eq(&self, other: &Self) -> bool {
        self.instructions == other.instructions
    }
}

impl DockerfileAst {
    pub fn new(instructions: Vec<Instruction>) -> Self {
        DockerfileAst {
            instructions,
            source_name: None,
        }
    }

    /// Check that only ARG and comments precede the first FROM.
    pub fn check(&self) -> Result<(), DockerfileError> {
        for ins in &self.instructions {
            match ins.kind {
                InstructionKind::From => return Ok(()),
                InstructionKind::Arg | InstructionKind::Comment => {}
                other => {
                    let keyword = match other {
                        InstructionKind::Unknown => {
                            ins.args.split_whitespace().next().unwrap_or("").to_string()
                        }
                        k => k.to_string(),
                    };
                    return Err(DockerfileError::BeforeFrom {
                        line: ins.line(),
                        keyword,
                    });
                }
            }
        }
        Ok(())
    }
}

fn is_escape_directive(comment: &str) -> bool {
    let body = comment.trim_start_matches('#').trim();
    match body.split_once('=') {
        Some((key, _)) => key.trim().eq_ignore_ascii_case("escape"),
        None => false,
    }
}

pub fn parse_dockerfile(text: &str) -> Result<DockerfileAst, DockerfileError> {
    let lines: Vec<&str> = text.lines().map(|l| l.strip_suffix('\r').unwrap_or(l)).collect();
    let mut instructions = Vec::new();
    let mut idx = 0;

    while idx < lines.len() {
        let first = idx + 1;
        let line = lines[idx].trim();
        idx += 1;
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if instructions
                .iter()
                .all(|i: &Instruction| i.kind == InstructionKind::Comment)
                && is_escape_directive(line)
            {
                return Err(DockerfileError::EscapeDirective { line: first });
            }
            instructions.push(Instruction {
                kind: InstructionKind::Comment,
                args: line.to_string(),
                exec_form: false,
                line_span: (first, first),
            });
            continue;
        }

        let mut text = String::new();
        let mut piece = line;
        let mut last = first;
        loop {
            let continued = piece.ends_with('\\');
            let body = if continued { piece[..piece.len() - 1].trim_end() } else { piece };
            if !body.is_empty() {
                if !text.is_empty() {
                    text.push(' ');
                }
                text.push_str(body);
            }
            if !continued {
                break;
            }
            // skip comment lines and blank lines inside the continuation
            let mut next = None;
            while idx < lines.len() {
                let candidate = lines[idx].trim();
                idx += 1;
                if candidate.is_empty() || candidate.starts_with('#') {
                    continue;
                }
                next = Some(candidate);
                break;
            }
            last = idx.max(first);
            match next {
                Some(n) => piece = n,
                None => break,
            }
        }

        instructions.push(Instruction::from_text(&text, (first, last)));
    }

    let ast = DockerfileAst {
        instructions,
        source_name: None,
    };
    ast.check()?;
    Ok(ast)
}

/// Canonical text: one instruction per line, LF endings.
pub fn render_dockerfile(ast: &DockerfileAst) -> String {
    let mut out = String::new();
    for ins in &ast.instructions {
        out.push_str(&ins.render());
        out.push('\n');
    }
    out
}
