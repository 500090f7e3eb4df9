//! Wire formats shared with the probe shim.
//!
//! The shim receives a [`ProbeRequest`] file and writes one line per probe on
//! standard output:
//!
//! ```text
//! @@PROBE {"v":1,"variable":"df","line":4,"type_name":"DataFrame","kind":"FRAME","detail":{...}}
//! ```
//!
//! Exit status 0 means a clean run, 2 an instrumentation failure (nothing ran
//! or a probe could not be placed), 3 a run-time exception in the snippet
//! after zero or more probes fired.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::domain::{DataDetail, DataInfo, ProbeTarget, MAX_SAMPLE_ROWS};

pub const PROBE_PREFIX: &str = "@@PROBE ";
pub const PROTOCOL_VERSION: u32 = 1;

pub const EXIT_CLEAN: i32 = 0;
pub const EXIT_INSTRUMENTATION: i32 = 2;
pub const EXIT_SNIPPET_RAISED: i32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeRequest {
    pub snippet_path: PathBuf,
    pub probes: Vec<ProbeTarget>,
    pub workspace: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub v: u32,
    pub variable: String,
    pub line: usize,
    pub type_name: String,
    #[serde(flatten)]
    pub detail: DataDetail,
}

impl From<ProbeRecord> for DataInfo {
    fn from(r: ProbeRecord) -> Self {
        DataInfo {
            target: ProbeTarget::new(r.variable, r.line),
            type_name: r.type_name,
            detail: r.detail,
        }
    }
}

impl ProbeRecord {
    pub fn from_info(info: &DataInfo) -> Self {
        ProbeRecord {
            v: PROTOCOL_VERSION,
            variable: info.target.variable_name.clone(),
            line: info.target.line_number,
            type_name: info.type_name.clone(),
            detail: info.detail.clone(),
        }
    }

    pub fn to_line(&self) -> String {
        format!(
            "{PROBE_PREFIX}{}",
            serde_json::to_string(self).expect("probe record serializes")
        )
    }
}

/// Parses one `@@PROBE` line.
pub fn parse_probe_line(line: &str) -> Result<DataInfo, String> {
    let body = line
        .strip_prefix(PROBE_PREFIX)
        .ok_or_else(|| format!("line does not start with `{}`", PROBE_PREFIX.trim_end()))?;
    let record: ProbeRecord =
        serde_json::from_str(body.trim()).map_err(|e| format!("bad probe record: {e}"))?;
    if record.v != PROTOCOL_VERSION {
        return Err(format!("unsupported probe protocol version {}", record.v));
    }
    if let DataDetail::Frame(frame) = &record.detail {
        if frame.sample_rows.len() > MAX_SAMPLE_ROWS {
            return Err(format!(
                "frame record for `{}` carries {} sample rows",
                record.variable,
                frame.sample_rows.len()
            ));
        }
    }
    Ok(record.into())
}

/// Collects every probe record in program output, in emission order.
pub fn parse_probe_output(stdout: &str) -> Result<Vec<DataInfo>, String> {
    stdout
        .lines()
        .filter(|l| l.starts_with("@@PROBE"))
        .map(parse_probe_line)
        .collect()
}

/// Program output with probe lines removed.
pub fn strip_probe_lines(stdout: &str) -> String {
    let mut out = String::with_capacity(stdout.len());
    for line in stdout.split_inclusive('\n') {
        if !line.starts_with("@@PROBE") {
            out.push_str(line);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DataKind;

    #[test]
    fn frame_line() {
        let line = r#"@@PROBE {"v":1,"variable":"df","line":4,"type_name":"DataFrame","kind":"FRAME","detail":{"columns":[{"name":"A","dtype":"float64","non_null":3},{"name":"B","dtype":"float64","non_null":0}],"row_count":4,"sample_rows":["0 1.0 NaN","1 2.0 NaN","2 3.0 NaN"]}}"#;
        let info = parse_probe_line(line).unwrap();
        assert_eq!(info.kind(), DataKind::Frame);
        assert_eq!(info.target, ProbeTarget::new("df", 4));
    }

    #[test]
    fn other_and_sequence_lines() {
        let info =
            parse_probe_line(r#"@@PROBE {"v":1,"variable":"f","line":2,"type_name":"Figure","kind":"OTHER"}"#)
                .unwrap();
        assert_eq!(info.kind(), DataKind::Other);
        let info = parse_probe_line(
            r#"@@PROBE {"v":1,"variable":"x","line":1,"type_name":"list","kind":"SEQUENCE","detail":{"length":3}}"#,
        )
        .unwrap();
        assert_eq!(info.detail, DataDetail::Sequence { length: 3 });
    }

    #[test]
    fn rejects_bad_records() {
        assert!(parse_probe_line("@@PROBE {").is_err());
        assert!(parse_probe_line(
            r#"@@PROBE {"v":2,"variable":"x","line":1,"type_name":"list","kind":"SEQUENCE","detail":{"length":3}}"#
        )
        .is_err());
        assert!(parse_probe_line(
            r#"@@PROBE {"v":1,"variable":"a","line":1,"type_name":"ndarray","kind":"NDARRAY","detail":{"shape":[-1],"dtype":"f"}}"#
        )
        .is_err());
        assert!(parse_probe_line(
            r#"@@PROBE {"v":1,"variable":"x","line":1,"type_name":"list","kind":"SET","detail":{}}"#
        )
        .is_err());
    }

    #[test]
    fn roundtrip_line() {
        let info = DataInfo {
            target: ProbeTarget::new("a", 7),
            type_name: "ndarray".into(),
            detail: DataDetail::Ndarray {
                shape: vec![2, 0],
                dtype: "int64".into(),
            },
        };
        assert_eq!(parse_probe_line(&ProbeRecord::from_info(&info).to_line()).unwrap(), info);
    }

    #[test]
    fn stripping() {
        let out = "a\n@@PROBE {}\nb\n";
        assert_eq!(strip_probe_lines(out), "a\nb\n");
    }
}
