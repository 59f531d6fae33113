use crate::lint::words::{program, simple_commands, split_assignments};

/// Programs that gain or require elevated privileges.
const PRIVILEGED_PROGRAMS: &[&str] = &[
    "sudo", "su", "doas", "pkexec", "runuser", "setcap", "setuid", "chroot", "mount", "umount", "insmod",
    "modprobe", "rmmod", "sysctl", "systemctl", "service", "useradd", "usermod", "groupadd", "visudo", "passwd",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrivilegedUse {
    /// 1-based line of the script.
    pub line: usize,
    pub command: String,
    pub reason: String,
}

fn is_setuid_mode(mode: &str) -> bool {
    if mode.bytes().all(|b| b.is_ascii_digit()) {
        // 4xxx setuid, 2xxx setgid
        return mode.len() == 4 && matches!(mode.as_bytes()[0], b'2'..=b'7');
    }
    mode.split(',').any(|clause| {
        clause
            .split_once(['+', '='])
            .is_some_and(|(_, perms)| perms.contains('s'))
    })
}

/// Scan a shell script for commands that need administrator rights: the
/// programs above, `chmod`/`chown` setting setuid bits or root ownership,
/// and docker's `--privileged`. Comments are ignored.
pub fn scan_privileged(script: &str) -> Vec<PrivilegedUse> {
    let mut found = Vec::new();
    for (idx, raw) in script.lines().enumerate() {
        let line = raw.trim_start();
        if line.starts_with('#') {
            continue;
        }
        for cmd in simple_commands(line) {
            let (_, cmd) = split_assignments(&cmd);
            let Some(first) = cmd.first() else { continue };
            let name = program(first);
            let args = &cmd[1..];
            let reason = if PRIVILEGED_PROGRAMS.contains(&name) {
                Some(format!("`{name}` requires administrator rights"))
            } else if name == "chmod" && args.iter().any(|a| is_setuid_mode(a)) {
                Some("sets a setuid/setgid bit".to_string())
            } else if (name == "chown" || name == "chgrp") && args.iter().any(|a| a == "root" || a.starts_with("root:") || a == "0" || a.starts_with("0:")) {
                Some("hands files to root".to_string())
            } else if args.iter().any(|a| a == "--privileged") {
                Some("runs a privileged container".to_string())
            } else {
                None
            };
            if let Some(reason) = reason {
                found.push(PrivilegedUse {
                    line: idx + 1,
                    command: cmd.join(" "),
                    reason,
                });
            }
        }
    }
    found
}
