use nonlocality::bounds::sig12;
use serde_json::{Map, Number, Value};

/// Rows for CSV output with a fixed column order.
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Value>,
}

impl Table {
    pub fn new(columns: &[&'static str], rows: Vec<Value>) -> Self {
        Self { columns: columns.to_vec(), rows }
    }
}

fn round(v: &Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            Number::from_f64(sig12(x)).map_or(Value::Null, Value::Number)
        }
        Value::Array(items) => Value::Array(items.iter().map(round).collect()),
        Value::Object(map) => Value::Object(map.iter().map(|(k, v)| (k.clone(), round(v))).collect::<Map<_, _>>()),
        other => other.clone(),
    }
}

fn scalar(v: &Value) -> String {
    match round(v) {
        Value::Null => String::new(),
        Value::String(s) => s,
        Value::Number(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        other => other.to_string(),
    }
}

fn csv_field(s: String) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s
    }
}

pub fn csv(config: &Value, table: &Table) -> String {
    let mut out = format!("# config: {config}\n");
    out.push_str(&table.columns.join(","));
    out.push('\n');
    for row in &table.rows {
        let fields: Vec<String> = table.columns.iter().map(|c| csv_field(scalar(row.get(*c).unwrap_or(&Value::Null)))).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn pretty_into(v: &Value, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    match v {
        Value::Object(map) => {
            for (k, item) in map {
                match item {
                    Value::Object(m) if !m.is_empty() => {
                        out.push_str(&format!("{pad}{k}:\n"));
                        pretty_into(item, indent + 1, out);
                    }
                    Value::Array(a) if a.iter().any(|x| x.is_object() || x.is_array()) => {
                        out.push_str(&format!("{pad}{k}:\n"));
                        pretty_into(item, indent + 1, out);
                    }
                    _ => out.push_str(&format!("{pad}{k}: {}\n", inline(item))),
                }
            }
        }
        Value::Array(items) => {
            for item in items {
                out.push_str(&format!("{pad}-\n"));
                pretty_into(item, indent + 1, out);
            }
        }
        other => out.push_str(&format!("{pad}{}\n", inline(other))),
    }
}

fn inline(v: &Value) -> String {
    match v {
        Value::Array(items) => format!("[{}]", items.iter().map(inline).collect::<Vec<_>>().join(", ")),
        other => {
            let s = scalar(other);
            if s.is_empty() { "-".into() } else { s }
        }
    }
}

pub fn pretty(body: &Value) -> String {
    let mut out = String::new();
    pretty_into(body, 0, &mut out);
    out
}
