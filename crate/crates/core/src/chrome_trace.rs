//! Timeline export in the Chrome trace event format, viewable in
//! `chrome://tracing` or Perfetto. One thread row per device.

use std::io;
use std::path::Path;

use serde_json::{json, Value};

use crate::engine::SimResult;
use crate::platform::TimePs;

/// Picoseconds to microseconds with three decimals (nanosecond resolution).
pub fn ps_to_us(t: TimePs) -> f64 {
    t.as_ns_rounded() as f64 / 1000.0
}

pub fn chrome_trace_events(result: &SimResult) -> Vec<Value> {
    let mut events = Vec::with_capacity(result.devices.len() + result.timeline.len() + 1);
    events.push(json!({
        "name": "process_name", "ph": "M", "pid": 1, "tid": 0,
        "args": { "name": "hetsim" }
    }));
    for d in &result.devices {
        events.push(json!({
            "name": "thread_name", "ph": "M", "pid": 1, "tid": d.id,
            "args": { "name": d.to_string() }
        }));
    }
    for i in &result.timeline {
        let start = ps_to_us(i.start);
        let dur = (i.end.as_ns_rounded() - i.start.as_ns_rounded()) as f64 / 1000.0;
        events.push(json!({
            "name": i.label(),
            "cat": i.kind.as_str(),
            "ph": "X",
            "ts": start,
            "dur": dur,
            "pid": 1,
            "tid": i.device,
            "args": { "node": i.node, "task": i.origin }
        }));
    }
    events
}

/// One event per line inside a JSON array.
pub fn chrome_trace_json(result: &SimResult) -> String {
    let events = chrome_trace_events(result);
    let mut out = String::from("[\n");
    for (k, e) in events.iter().enumerate() {
        out.push_str(&e.to_string());
        out.push_str(if k + 1 < events.len() { ",\n" } else { "\n" });
    }
    out.push_str("]\n");
    out
}

pub fn export_chrome_trace(result: &SimResult, path: impl AsRef<Path>) -> io::Result<()> {
    std::fs::write(path, chrome_trace_json(result))
}
