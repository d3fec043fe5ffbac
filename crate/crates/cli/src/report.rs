use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

pub const SCHEMA: &str = "weakvis/1";

#[derive(Serialize, Debug)]
pub struct Timings {
    pub wall_ms: f64,
}

/// The machine-readable outcome of one command. Only `timings` varies
/// between runs with identical inputs.
#[derive(Serialize, Debug)]
pub struct RunReport {
    pub schema: &'static str,
    pub command: &'static str,
    pub config: Value,
    pub ok: bool,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub statistics: Value,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub verdict: Value,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub witness: Value,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub counterexample: Value,
    pub timings: Timings,
}

impl RunReport {
    pub fn new(
        command: &'static str,
        config: Value,
        ok: bool,
        started: std::time::Instant,
    ) -> Self {
        RunReport {
            schema: SCHEMA,
            command,
            config,
            ok,
            statistics: Value::Null,
            verdict: Value::Null,
            witness: Value::Null,
            counterexample: Value::Null,
            timings: Timings {
                wall_ms: started.elapsed().as_secs_f64() * 1000.0,
            },
        }
    }

    pub fn exit_code(&self) -> u8 {
        if self.ok {
            0
        } else {
            1
        }
    }

    pub fn emit(&self, out: Option<&Path>) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("report serializes") + "\n";
        match out {
            Some(p) => std::fs::write(p, text),
            None => std::io::stdout().write_all(text.as_bytes()),
        }
    }
}
