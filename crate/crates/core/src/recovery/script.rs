//! Line-oriented replay scripts.
//!
//! ```text
//! # open the settings page
//! TARGET com.example.Settings
//! LAUNCH
//! TAP com.example.Main.onMenu
//! NAV 2
//! BACK
//! ```

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::RecoveryError;
use crate::app_model::MethodId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Launch,
    Tap(MethodId),
    /// Index into the foreground activity's launch sites.
    Navigate(usize),
    Back,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayScript {
    pub name: String,
    pub target_activity: String,
    pub actions: Vec<Action>,
}

impl ReplayScript {
    pub fn new(name: impl Into<String>, target: impl Into<String>, actions: Vec<Action>) -> Self {
        ReplayScript {
            name: name.into(),
            target_activity: target.into(),
            actions,
        }
    }
}

fn malformed(line: usize, reason: impl Into<String>) -> RecoveryError {
    RecoveryError::MalformedScript {
        line,
        reason: reason.into(),
    }
}

/// Parses a script; its name is taken from the target activity.
pub fn parse_script(bytes: &[u8]) -> Result<ReplayScript, RecoveryError> {
    let text = std::str::from_utf8(bytes).map_err(|_| malformed(0, "not UTF-8"))?;
    let mut target = None;
    let mut actions = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (word, arg) = match line.split_once(char::is_whitespace) {
            Some((w, a)) => (w, Some(a.trim())),
            None => (line, None),
        };
        if target.is_none() {
            match (word, arg) {
                ("TARGET", Some(a)) if !a.is_empty() && !a.contains(char::is_whitespace) => {
                    target = Some(a.to_string());
                    continue;
                }
                _ => return Err(malformed(lineno, "first line must be `TARGET <activity>`")),
            }
        }
        let action = match (word, arg) {
            ("LAUNCH", None) => Action::Launch,
            ("BACK", None) => Action::Back,
            ("TAP", Some(a)) => Action::Tap(
                MethodId::parse(a)
                    .filter(|_| !a.contains(char::is_whitespace))
                    .ok_or_else(|| malformed(lineno, format!("bad method id `{a}`")))?,
            ),
            ("NAV", Some(a)) => Action::Navigate(
                a.parse::<usize>()
                    .map_err(|_| malformed(lineno, format!("bad launch-site index `{a}`")))?,
            ),
            ("TARGET", _) => return Err(malformed(lineno, "duplicate TARGET")),
            _ => return Err(malformed(lineno, format!("unrecognized line `{line}`"))),
        };
        if actions.is_empty() && action != Action::Launch {
            return Err(malformed(lineno, "first action must be LAUNCH"));
        }
        actions.push(action);
    }
    let target = target.ok_or_else(|| malformed(0, "missing TARGET line"))?;
    if actions.is_empty() {
        return Err(malformed(0, "script has no actions"));
    }
    Ok(ReplayScript {
        name: target.clone(),
        target_activity: target,
        actions,
    })
}

pub fn serialize_script(script: &ReplayScript) -> Vec<u8> {
    let mut out = String::new();
    let _ = writeln!(out, "TARGET {}", script.target_activity);
    for action in &script.actions {
        let _ = match action {
            Action::Launch => writeln!(out, "LAUNCH"),
            Action::Tap(m) => writeln!(out, "TAP {m}"),
            Action::Navigate(i) => writeln!(out, "NAV {i}"),
            Action::Back => writeln!(out, "BACK"),
        };
    }
    out.into_bytes()
}
