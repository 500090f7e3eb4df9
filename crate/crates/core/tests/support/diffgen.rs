//! Random texts and the unified diffs between them, built without the crate's
//! own diff code so the patch engine can be checked against them.

use proptest::prelude::*;

pub const CONTEXT: usize = 3;

#[derive(Debug, Clone)]
pub enum Op {
    Keep(String),
    Del(String),
    Ins(String),
}

/// A small alphabet on purpose: repeated lines make misplaced hunks visible.
fn line() -> impl Strategy<Value = String> {
    prop_oneof![
        Just(String::new()),
        "[a-d]{1,3}",
        "    [a-z_]{1,8} = [0-9]{1,2}",
    ]
}

#[derive(Debug, Clone)]
pub struct Edit {
    pub gap: usize,
    pub delete: usize,
    pub insert: Vec<String>,
}

fn edit() -> impl Strategy<Value = Edit> {
    (0usize..9, 0usize..4, prop::collection::vec(line(), 0..4))
        .prop_map(|(gap, delete, insert)| Edit { gap, delete, insert })
}

/// Walks `original`, applying each edit after skipping `gap` lines.
pub fn script(original: &[String], edits: &[Edit]) -> Vec<Op> {
    let mut ops = Vec::new();
    let mut i = 0;
    for e in edits {
        let keep = e.gap.min(original.len() - i);
        ops.extend(original[i..i + keep].iter().cloned().map(Op::Keep));
        i += keep;
        let del = e.delete.min(original.len() - i);
        ops.extend(original[i..i + del].iter().cloned().map(Op::Del));
        i += del;
        ops.extend(e.insert.iter().cloned().map(Op::Ins));
    }
    ops.extend(original[i..].iter().cloned().map(Op::Keep));
    ops
}

pub fn join(lines: &[String]) -> String {
    lines.iter().map(|l| format!("{l}\n")).collect()
}

fn side(ops: &[Op], old: bool) -> Vec<String> {
    ops.iter()
        .filter_map(|op| match (op, old) {
            (Op::Keep(s), _) | (Op::Del(s), true) | (Op::Ins(s), false) => Some(s.clone()),
            _ => None,
        })
        .collect()
}

fn range(start_before: usize, len: usize) -> String {
    // `-N,0` names the line the insertion follows.
    let start = if len == 0 { start_before } else { start_before + 1 };
    format!("{start},{len}")
}

/// Renders the edit script as a unified diff with three lines of context,
/// merging changes whose contexts touch. None when nothing changed.
pub fn unified(ops: &[Op]) -> Option<String> {
    let changed: Vec<usize> = (0..ops.len()).filter(|&k| !matches!(ops[k], Op::Keep(_))).collect();
    if changed.is_empty() {
        return None;
    }
    // Group change positions whose separation is at most 2 * CONTEXT kept lines.
    let mut groups: Vec<(usize, usize)> = Vec::new();
    for &k in &changed {
        match groups.last_mut() {
            Some((_, end)) if k - *end <= 2 * CONTEXT + 1 => *end = k,
            _ => groups.push((k, k)),
        }
    }
    let mut out = String::from("--- a/snippet.py\n+++ b/snippet.py\n");
    for (first, last) in groups {
        let lo = first.saturating_sub(CONTEXT);
        let hi = (last + CONTEXT + 1).min(ops.len());
        let before = &ops[..lo];
        let body = &ops[lo..hi];
        let old_before = side(before, true).len();
        let new_before = side(before, false).len();
        out.push_str(&format!(
            "@@ -{} +{} @@\n",
            range(old_before, side(body, true).len()),
            range(new_before, side(body, false).len())
        ));
        for op in body {
            match op {
                Op::Keep(s) => out.push_str(&format!(" {s}\n")),
                Op::Del(s) => out.push_str(&format!("-{s}\n")),
                Op::Ins(s) => out.push_str(&format!("+{s}\n")),
            }
        }
    }
    Some(out)
}

/// (old text, new text, diff) triples with at least one change.
pub fn patched_pair() -> impl Strategy<Value = (String, String, String)> {
    (prop::collection::vec(line(), 0..30), prop::collection::vec(edit(), 1..5)).prop_filter_map(
        "edit script changed nothing",
        |(original, edits)| {
            let ops = script(&original, &edits);
            let diff = unified(&ops)?;
            Some((join(&side(&ops, true)), join(&side(&ops, false)), diff))
        },
    )
}
