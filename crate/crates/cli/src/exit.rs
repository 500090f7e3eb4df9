//! Process exit codes.
//!
//! 0 means the snippet was judged correct (or the fix was confirmed), 10 that
//! a misuse was flagged, 11 and 12 are unsuccessful fix validations. Codes in
//! the 20s are errors, grouped by the part of the pipeline that failed.
//! Usage errors detected while parsing arguments exit with 2.

pub const OK: i32 = 0;
pub const FLAGGED: i32 = 10;
pub const STILL_BROKEN: i32 = 11;
pub const NEW_ERROR: i32 = 12;
/// Fallback for a code missing from the table; the tests keep this unused.
pub const UNMAPPED: i32 = 1;

pub const INPUT: i32 = 20;
pub const GATEWAY: i32 = 21;
pub const PROMPT: i32 = 22;
pub const PATCH: i32 = 23;
pub const TIMEOUT: i32 = 24;
pub const VERDICT: i32 = 25;
pub const AGENT: i32 = 26;
pub const RUNTIME: i32 = 27;
pub const DOCS: i32 = 28;
pub const EVAL: i32 = 29;

/// Every error code the library and the command line can report.
pub const EXIT_CODES: &[(&str, i32)] = &[
    ("MANIFEST_SYNTAX", INPUT),
    ("MISSING_FILE", INPUT),
    ("DUPLICATE_ID", INPUT),
    ("INVARIANT_VIOLATION", INPUT),
    ("INPUT_IO", INPUT),
    ("OUTPUT_IO", INPUT),
    ("UNKNOWN_RECORD", INPUT),
    ("PROVIDER_HTTP", GATEWAY),
    ("RATE_LIMITED", GATEWAY),
    ("REPLAY_MISMATCH", GATEWAY),
    ("MALFORMED_TOOL_CALL", GATEWAY),
    ("INVALID_CONVERSATION", GATEWAY),
    ("TRANSCRIPT", GATEWAY),
    ("PROVIDER_CONFIG", GATEWAY),
    ("EMPTY_SNIPPET", PROMPT),
    ("FEWSHOT_WITHOUT_EXEMPLARS", PROMPT),
    ("TEMPLATE_SYNTAX", PROMPT),
    ("EXEMPLAR_STORE", PROMPT),
    ("MISSING_PROBE_TARGETS", PROMPT),
    ("PATCH_APPLY_FAILED", PATCH),
    ("DIFF_SYNTAX", PATCH),
    ("HUNK_MISMATCH", PATCH),
    ("TIMEOUT", TIMEOUT),
    ("MALFORMED_VERDICT", VERDICT),
    ("NO_JSON_OBJECT", VERDICT),
    ("MISSING_CORRECT", VERDICT),
    ("INVALID_CORRECT", VERDICT),
    ("MISSING_PATCH", VERDICT),
    ("MISSING_EXPLANATION", VERDICT),
    ("AGENT_EXHAUSTED", AGENT),
    ("INVALID_CONFIG", AGENT),
    ("INTERPRETER_NOT_FOUND", RUNTIME),
    ("WORKSPACE_IO", RUNTIME),
    ("SHIM_INSTRUMENTATION_FAILED", RUNTIME),
    ("SHIM_PROTOCOL", RUNTIME),
    ("REPLAY_MISS", RUNTIME),
    ("INVALID_REQUEST", RUNTIME),
    ("INDEX_SYNTAX", DOCS),
    ("DUPLICATE_ENTRY", DOCS),
    ("MISSING_DOC_FILE", DOCS),
    ("MISSING_DOCS", DOCS),
    ("EMPTY_DATASET", EVAL),
    ("MISSING_ADJUDICATION", EVAL),
    ("INVALID_ADJUDICATION", EVAL),
    ("EVAL_CONFIG", EVAL),
    ("INVALID_COUNTS", EVAL),
    ("DEGENERATE_SAMPLE", EVAL),
    ("SAMPLE_SIZE", EVAL),
    ("GROUP_TOO_SMALL", EVAL),
    ("NON_FINITE", EVAL),
    ("BOOTSTRAP", EVAL),
];

pub fn exit_code(code: &str) -> i32 {
    EXIT_CODES
        .iter()
        .find(|(c, _)| *c == code)
        .map_or(UNMAPPED, |(_, n)| *n)
}
