//! Dockerfile smell detection.
//!
//! Docker images are append-only stacks of layers: a file written by one
//! instruction and deleted by a later one still ships in the earlier layer.
//! The rules here look for that pattern and a few related ones:
//!
//! | id  | severity | smell |
//! |-----|----------|-------|
//! | TF1 | error    | file downloaded/extracted by a `RUN` and removed by a later instruction |
//! | TF2 | warning  | local archive `COPY`'d and then extracted by a `RUN` |
//! | TF3 | warning  | package manager install without cache cleanup in the same `RUN` |
//! | P1  | warning  | `FROM` image without a version tag, or tagged `latest` |
//! | E1  | info     | `ENTRYPOINT` without a `CMD` providing default arguments |
//!
//! Detection works on shell words (see [`words`]), not full shell semantics.
//! Known false negatives: paths built from variables, files created by
//! scripts the `RUN` calls, and removals done through `find -delete` or
//! similar.

pub(crate) mod words;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::dockerfile::{DockerfileAst, Instruction, InstructionKind};
use crate::profiles::ImageRef;

use words::{basename, glob_match, program, resolve, simple_commands, split_assignments};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Severity {
    Error,
    Warning,
    Info,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
            Severity::Info => "info",
        })
    }
}

pub struct Rule {
    pub id: &'static str,
    pub severity: Severity,
    pub summary: &'static str,
}

pub const RULES: &[Rule] = &[
    Rule {
        id: "E1",
        severity: Severity::Info,
        summary: "ENTRYPOINT without CMD default arguments",
    },
    Rule {
        id: "P1",
        severity: Severity::Warning,
        summary: "base image not pinned to a version tag",
    },
    Rule {
        id: "TF1",
        severity: Severity::Error,
        summary: "temporary file removed in a later layer",
    },
    Rule {
        id: "TF2",
        severity: Severity::Warning,
        summary: "local archive copied then extracted",
    },
    Rule {
        id: "TF3",
        severity: Severity::Warning,
        summary: "package install without cache cleanup",
    },
];

pub fn rule(id: &str) -> Option<&'static Rule> {
    RULES.iter().find(|r| r.id == id)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmellFinding {
    pub rule_id: &'static str,
    pub severity: Severity,
    /// First source line of the offending instruction.
    pub line: usize,
    /// Index of the offending instruction in the AST.
    pub instruction: usize,
    pub message: String,
    pub suggestion: String,
}

impl SmellFinding {
    fn new(rule_id: &'static str, ins: (usize, &Instruction), message: String, suggestion: String) -> Self {
        SmellFinding {
            rule_id,
            severity: rule(rule_id).expect("registered rule").severity,
            line: ins.1.line(),
            instruction: ins.0,
            message,
            suggestion,
        }
    }

    /// `rule_id:severity:line:message`
    pub fn machine_line(&self) -> String {
        format!("{}:{}:{}:{}", self.rule_id, self.severity, self.line, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SmellReport {
    pub findings: Vec<SmellFinding>,
    pub counts: BTreeMap<Severity, usize>,
}

impl SmellReport {
    fn from_findings(mut findings: Vec<SmellFinding>) -> Self {
        findings.sort_by(|a, b| (a.line, a.rule_id, a.instruction).cmp(&(b.line, b.rule_id, b.instruction)));
        let mut counts: BTreeMap<Severity, usize> =
            [Severity::Error, Severity::Warning, Severity::Info].into_iter().map(|s| (s, 0)).collect();
        for f in &findings {
            *counts.entry(f.severity).or_default() += 1;
        }
        SmellReport { findings, counts }
    }

    pub fn count(&self, severity: Severity) -> usize {
        self.counts.get(&severity).copied().unwrap_or(0)
    }

    pub fn has_errors(&self) -> bool {
        self.count(Severity::Error) > 0
    }
}

/// Run every registered rule over `ast`. Findings are ordered by line, then
/// rule id. Each build stage is checked on its own.
pub fn lint(ast: &DockerfileAst) -> SmellReport {
    let mut findings = Vec::new();
    let mut stage_names: Vec<String> = Vec::new();
    for stage in stages(ast) {
        check_base_image(&stage, &mut stage_names, &mut findings);
        check_temporary_files(&stage, &mut findings);
        check_copied_archives(&stage, &mut findings);
        check_package_caches(&stage, &mut findings);
        check_entrypoint_defaults(&stage, &mut findings);
    }
    SmellReport::from_findings(findings)
}

type Stage<'a> = Vec<(usize, &'a Instruction)>;

fn stages(ast: &DockerfileAst) -> Vec<Stage<'_>> {
    let mut out: Vec<Stage<'_>> = Vec::new();
    for (i, ins) in ast.instructions.iter().enumerate() {
        if ins.kind == InstructionKind::From || out.is_empty() {
            out.push(Vec::new());
        }
        out.last_mut().expect("pushed above").push((i, ins));
    }
    out
}

fn check_base_image(stage: &Stage<'_>, stage_names: &mut Vec<String>, findings: &mut Vec<SmellFinding>) {
    let Some(&(idx, from)) = stage.iter().find(|(_, i)| i.kind == InstructionKind::From) else {
        return;
    };
    let words: Vec<&str> = from.args.split_whitespace().filter(|w| !w.starts_with("--")).collect();
    let Some(image) = words.first().copied() else {
        return;
    };
    let alias = match words.as_slice() {
        [_, kw, name, ..] if kw.eq_ignore_ascii_case("as") => Some(name.to_string()),
        _ => None,
    };
    let skip = image.contains('$') || image == "scratch" || stage_names.iter().any(|n| n == image);
    if let Some(alias) = alias {
        stage_names.push(alias);
    }
    if skip {
        return;
    }
    if let Ok(reference) = ImageRef::from_str(image) {
        if reference.is_unpinned() {
            findings.push(SmellFinding::new(
                "P1",
                (idx, from),
                format!("base image `{image}` is not pinned to a version tag"),
                format!("use an explicit version tag or digest, e.g. `{}:<version>`", reference.repository),
            ));
        }
    }
}

/// Paths a `RUN` leaves behind, keyed by resolved path, with the creating line.
#[derive(Default)]
struct CreatedFiles {
    paths: BTreeMap<String, usize>,
}

fn is_archive(name: &str) -> bool {
    [".tar", ".tar.gz", ".tgz", ".tar.bz2", ".tbz2", ".tar.xz", ".txz", ".zip"]
        .iter()
        .any(|ext| name.ends_with(ext))
}

fn archive_stem(name: &str) -> Option<&str> {
    [".tar.gz", ".tar.bz2", ".tar.xz", ".tgz", ".tbz2", ".txz", ".tar"]
        .iter()
        .find_map(|ext| name.strip_suffix(ext))
        .filter(|s| !s.is_empty())
}

fn is_tar_extract(args: &[String]) -> bool {
    args.iter().any(|a| a == "--extract" || a == "--get")
        || args.first().is_some_and(|first| {
            let flags = first.trim_start_matches('-');
            !first.starts_with("--") && flags.chars().all(|c| c.is_ascii_alphabetic()) && flags.contains('x')
        })
        || args.iter().any(|a| a == "-x")
}

/// Files a simple command writes, resolved against `cwd`.
fn created_by(cmd: &[String], cwd: &str) -> Vec<String> {
    let (_, cmd) = split_assignments(cmd);
    let Some(first) = cmd.first() else {
        return Vec::new();
    };
    let args = &cmd[1..];
    let mut out = Vec::new();
    match program(first) {
        "wget" => {
            let mut output = None;
            let mut prefix = cwd.to_string();
            let mut urls = Vec::new();
            let mut it = args.iter();
            while let Some(a) = it.next() {
                if a == "-O" || a == "--output-document" {
                    output = it.next().cloned();
                } else if let Some(v) = a.strip_prefix("--output-document=") {
                    output = Some(v.to_string());
                } else if a == "-P" || a == "--directory-prefix" {
                    if let Some(dir) = it.next() {
                        prefix = resolve(cwd, dir);
                    }
                } else if let Some(v) = a.strip_prefix("--directory-prefix=") {
                    prefix = resolve(cwd, v);
                } else if a == "-o" || a == "-a" || a == "-i" || a == "-t" || a == "-T" || a == "--header" {
                    it.next();
                } else if let Some(v) = a.strip_prefix("-O").filter(|v| !v.is_empty() && !a.starts_with("--")) {
                    output = Some(v.to_string());
                } else if !a.starts_with('-') {
                    urls.push(a.clone());
                }
            }
            match output {
                Some(o) if o != "-" => out.push(resolve(cwd, &o)),
                Some(_) => {}
                None => out.extend(urls.iter().map(|u| resolve(&prefix, basename(u)))),
            }
        }
        "curl" => {
            let mut remote_name = false;
            let mut urls = Vec::new();
            let mut it = args.iter();
            while let Some(a) = it.next() {
                if a == "-o" || a == "--output" {
                    if let Some(o) = it.next() {
                        if o != "-" {
                            out.push(resolve(cwd, o));
                        }
                    }
                } else if a == "-O" || a == "--remote-name" {
                    remote_name = true;
                } else if a.starts_with("--") {
                    if matches!(
                        a.as_str(),
                        "--header" | "--data" | "--user" | "--user-agent" | "--retry" | "--max-time" | "--request"
                    ) {
                        it.next();
                    }
                } else if let Some(flags) = a.strip_prefix('-').filter(|f| !f.is_empty()) {
                    if flags.contains('O') {
                        remote_name = true;
                    }
                    if flags.ends_with('o') {
                        if let Some(o) = it.next() {
                            if o != "-" {
                                out.push(resolve(cwd, o));
                            }
                        }
                    } else if flags.ends_with(['H', 'd', 'u', 'A', 'e', 'x', 'X', 'm']) {
                        it.next();
                    }
                } else {
                    urls.push(a.clone());
                }
            }
            if remote_name {
                out.extend(urls.iter().map(|u| resolve(cwd, basename(u))));
            }
        }
        "tar" if is_tar_extract(args) => {
            let mut target = None;
            let mut archive = None;
            let mut it = args.iter().enumerate();
            while let Some((pos, a)) = it.next() {
                if a == "-C" || a == "--directory" {
                    target = it.next().map(|(_, d)| d.clone());
                } else if let Some(d) = a.strip_prefix("--directory=") {
                    target = Some(d.to_string());
                } else if let Some(d) = a.strip_prefix("-C").filter(|d| !d.is_empty()) {
                    target = Some(d.to_string());
                } else if a == "-f" || a == "--file" {
                    archive = it.next().map(|(_, f)| f.clone());
                } else if a.starts_with('-') && a.ends_with('f') && !a.starts_with("--") || pos == 0 && a.ends_with('f') {
                    archive = it.next().map(|(_, f)| f.clone());
                } else if !a.starts_with('-') && pos > 0 && archive.is_none() && is_archive(a) {
                    archive = Some(a.clone());
                }
            }
            match target {
                Some(dir) => out.push(resolve(cwd, &dir)),
                None => {
                    if let Some(stem) = archive.as_deref().map(basename).and_then(archive_stem) {
                        out.push(resolve(cwd, stem));
                    }
                }
            }
        }
        _ => {}
    }
    out
}

/// Path patterns a simple command removes.
fn removed_by(cmd: &[String], cwd: &str) -> Vec<String> {
    let (_, cmd) = split_assignments(cmd);
    match cmd.first().map(|c| program(c)) {
        Some("rm") => cmd[1..]
            .iter()
            .filter(|a| !a.starts_with('-'))
            .map(|a| resolve(cwd, a))
            .collect(),
        _ => Vec::new(),
    }
}

fn removal_covers(pattern: &str, path: &str) -> bool {
    if pattern == path {
        return true;
    }
    // removing a directory removes what is inside it
    let mut ancestor = path;
    while let Some((parent, _)) = ancestor.rsplit_once('/') {
        if glob_match(pattern, ancestor) {
            return true;
        }
        if parent.is_empty() {
            break;
        }
        ancestor = parent;
    }
    false
}

/// Walk the simple commands of a `RUN`, tracking `cd` from the stage's
/// working directory.
fn walk_run(ins: &Instruction, workdir: &str, mut visit: impl FnMut(&[String], &str)) {
    let mut cwd = workdir.to_string();
    for cmd in simple_commands(&ins.command_text()) {
        let (_, rest) = split_assignments(&cmd);
        if rest.first().map(String::as_str) == Some("cd") {
            cwd = match rest.get(1) {
                Some(dir) => resolve(&cwd, dir),
                None => "/root".to_string(),
            };
            continue;
        }
        visit(&cmd, &cwd);
    }
}

fn check_temporary_files(stage: &Stage<'_>, findings: &mut Vec<SmellFinding>) {
    let mut created = CreatedFiles::default();
    let mut workdir = "/".to_string();
    for &(idx, ins) in stage {
        match ins.kind {
            InstructionKind::Workdir => workdir = resolve(&workdir, ins.args.trim()),
            InstructionKind::Run => {
                let mut made_here: Vec<String> = Vec::new();
                let mut late: Vec<(String, usize)> = Vec::new();
                walk_run(ins, &workdir, |cmd, cwd| {
                    for pattern in removed_by(cmd, cwd) {
                        made_here.retain(|p| !removal_covers(&pattern, p));
                        let hits: Vec<String> = created
                            .paths
                            .keys()
                            .filter(|p| removal_covers(&pattern, p))
                            .cloned()
                            .collect();
                        for path in hits {
                            let line = created.paths.remove(&path).expect("key from map");
                            late.push((path, line));
                        }
                    }
                    made_here.extend(created_by(cmd, cwd));
                });
                if !late.is_empty() {
                    let listed: Vec<String> = late
                        .iter()
                        .map(|(p, line)| format!("`{p}` (created on line {line})"))
                        .collect();
                    findings.push(SmellFinding::new(
                        "TF1",
                        (idx, ins),
                        format!(
                            "removes {} in a later layer; the space is not freed, only its reference is removed",
                            listed.join(", ")
                        ),
                        "download, use and delete the file in the same RUN instruction".to_string(),
                    ));
                }
                for path in made_here {
                    created.paths.insert(path, ins.line());
                }
            }
            _ => {}
        }
    }
}

fn copy_sources(ins: &Instruction) -> Option<Vec<String>> {
    let mut words = match ins.exec_args() {
        Some(tokens) => tokens,
        None => ins.args.split_whitespace().map(str::to_string).collect(),
    };
    if words.iter().any(|w| w.starts_with("--from")) {
        return None;
    }
    words.retain(|w| !w.starts_with("--"));
    words.pop()?;
    Some(words)
}

fn extracted_archives(cmd: &[String]) -> Vec<String> {
    let (_, cmd) = split_assignments(cmd);
    let Some(first) = cmd.first() else {
        return Vec::new();
    };
    let args = &cmd[1..];
    let extracts = match program(first) {
        "tar" => is_tar_extract(args),
        "unzip" | "gunzip" | "bunzip2" | "unxz" => true,
        "gzip" | "bzip2" | "xz" => args.iter().any(|a| a == "-d" || a == "--decompress"),
        _ => false,
    };
    if !extracts {
        return Vec::new();
    }
    args.iter()
        .filter(|a| is_archive(a) || a.ends_with(".gz"))
        .map(|a| basename(a).to_string())
        .collect()
}

fn check_copied_archives(stage: &Stage<'_>, findings: &mut Vec<SmellFinding>) {
    let mut copied: Vec<(usize, &Instruction, String)> = Vec::new();
    for &(idx, ins) in stage {
        match ins.kind {
            InstructionKind::Copy => {
                for src in copy_sources(ins).unwrap_or_default() {
                    let name = basename(&src).to_string();
                    if is_archive(&name) {
                        copied.push((idx, ins, name));
                    }
                }
            }
            InstructionKind::Run => {
                let mut extracted = Vec::new();
                for cmd in simple_commands(&ins.command_text()) {
                    extracted.extend(extracted_archives(&cmd));
                }
                copied.retain(|(copy_idx, copy_ins, name)| {
                    if !extracted.contains(name) {
                        return true;
                    }
                    let suggestion = if name.ends_with(".zip") {
                        format!("ADD does not unpack zip files; unpack `{name}` before the build or download and unpack it in one RUN")
                    } else {
                        format!("use `ADD {name} <dir>` instead of COPY so the archive is unpacked without keeping a copy")
                    };
                    findings.push(SmellFinding::new(
                        "TF2",
                        (*copy_idx, copy_ins),
                        format!("archive `{name}` is copied and then extracted on line {}; the archive stays in the image", ins.line()),
                        suggestion,
                    ));
                    false
                });
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Manager {
    Apt,
    Yum,
    Apk,
    Pip,
}

impl Manager {
    fn name(self) -> &'static str {
        match self {
            Manager::Apt => "apt-get",
            Manager::Yum => "yum/dnf",
            Manager::Apk => "apk",
            Manager::Pip => "pip",
        }
    }

    fn cleanup_hint(self) -> &'static str {
        match self {
            Manager::Apt => "&& rm -rf /var/lib/apt/lists/*",
            Manager::Yum => "&& yum clean all",
            Manager::Apk => "--no-cache",
            Manager::Pip => "--no-cache-dir",
        }
    }
}

fn pip_subcommand(cmd: &[String]) -> Option<&[String]> {
    let p = program(&cmd[0]);
    if p == "pip" || p == "pip3" || p.starts_with("pip3.") {
        return Some(&cmd[1..]);
    }
    if p.starts_with("python") && cmd.get(1).map(String::as_str) == Some("-m") && cmd.get(2).is_some_and(|m| m == "pip") {
        return Some(&cmd[3..]);
    }
    None
}

/// Package installs in a simple command, and whether the command itself
/// already avoids leaving a cache behind.
fn installs(cmd: &[String]) -> Option<(Manager, bool)> {
    let (env, cmd) = split_assignments(cmd);
    let first = cmd.first()?;
    let has = |flag: &str| cmd.iter().any(|a| a == flag);
    let sub = cmd.iter().skip(1).find(|a| !a.starts_with('-')).map(String::as_str);
    match program(first) {
        "apt-get" | "apt" if sub == Some("install") => Some((Manager::Apt, false)),
        "yum" | "dnf" | "microdnf" if sub == Some("install") => Some((Manager::Yum, false)),
        "apk" if sub == Some("add") => Some((Manager::Apk, has("--no-cache"))),
        _ => {
            let rest = pip_subcommand(cmd)?;
            if rest.iter().find(|a| !a.starts_with('-')).map(String::as_str) != Some("install") {
                return None;
            }
            let env_off = env.iter().any(|e| e.starts_with("PIP_NO_CACHE_DIR="));
            Some((Manager::Pip, has("--no-cache-dir") || env_off))
        }
    }
}

fn cleans(cmd: &[String], manager: Manager) -> bool {
    let (_, cmd) = split_assignments(cmd);
    let Some(first) = cmd.first() else {
        return false;
    };
    let p = program(first);
    let rm_targets = |prefixes: &[&str]| {
        p == "rm"
            && cmd[1..]
                .iter()
                .any(|a| prefixes.iter().any(|pre| a.starts_with(pre)))
    };
    match manager {
        Manager::Apt => {
            rm_targets(&["/var/lib/apt/lists"]) || (matches!(p, "apt-get" | "apt") && cmd.get(1).is_some_and(|s| s == "clean"))
        }
        Manager::Yum => {
            rm_targets(&["/var/cache/yum", "/var/cache/dnf"])
                || (matches!(p, "yum" | "dnf" | "microdnf") && cmd.get(1).is_some_and(|s| s == "clean"))
        }
        Manager::Apk => rm_targets(&["/var/cache/apk"]),
        Manager::Pip => {
            rm_targets(&["~/.cache/pip", "/root/.cache/pip", "$HOME/.cache/pip", "${HOME}/.cache/pip"])
                || pip_subcommand(cmd).is_some_and(|rest| rest.first().is_some_and(|s| s == "cache"))
        }
    }
}

fn env_disables_pip_cache(ins: &Instruction) -> bool {
    let args = ins.args.trim();
    let value = if let Some(rest) = args.strip_prefix("PIP_NO_CACHE_DIR=") {
        Some(rest.split_whitespace().next().unwrap_or(""))
    } else {
        args.strip_prefix("PIP_NO_CACHE_DIR ").map(str::trim)
    };
    value.is_some_and(|v| {
        let v = v.trim_matches('"').to_ascii_lowercase();
        !v.is_empty() && v != "0" && v != "false" && v != "no" && v != "off"
    })
}

fn check_package_caches(stage: &Stage<'_>, findings: &mut Vec<SmellFinding>) {
    let mut pip_cache_off = false;
    for &(idx, ins) in stage {
        match ins.kind {
            InstructionKind::Env if env_disables_pip_cache(ins) => pip_cache_off = true,
            InstructionKind::Run => {
                let cmds = simple_commands(&ins.command_text());
                let mut missing: Vec<Manager> = Vec::new();
                for cmd in &cmds {
                    let Some((manager, clean)) = installs(cmd) else {
                        continue;
                    };
                    if clean || (manager == Manager::Pip && pip_cache_off) || missing.contains(&manager) {
                        continue;
                    }
                    if !cmds.iter().any(|c| cleans(c, manager)) {
                        missing.push(manager);
                    }
                }
                if !missing.is_empty() {
                    let names: Vec<&str> = missing.iter().map(|m| m.name()).collect();
                    let hints: Vec<&str> = missing.iter().map(|m| m.cleanup_hint()).collect();
                    findings.push(SmellFinding::new(
                        "TF3",
                        (idx, ins),
                        format!("{} install leaves its package cache in the layer", names.join(", ")),
                        format!("end the same RUN with the cache cleanup ({})", hints.join("; ")),
                    ));
                }
            }
            _ => {}
        }
    }
}

fn check_entrypoint_defaults(stage: &Stage<'_>, findings: &mut Vec<SmellFinding>) {
    let entrypoint = stage.iter().rev().find(|(_, i)| i.kind == InstructionKind::Entrypoint);
    let has_cmd = stage.iter().any(|(_, i)| i.kind == InstructionKind::Cmd);
    if let (Some(&(idx, ins)), false) = (entrypoint, has_cmd) {
        findings.push(SmellFinding::new(
            "E1",
            (idx, ins),
            "ENTRYPOINT has no CMD with default arguments".to_string(),
            "add an exec-form CMD with the default arguments, which `run <image> <args>` can override".to_string(),
        ));
    }
}
