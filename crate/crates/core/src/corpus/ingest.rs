use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde_json::Value;

use super::RawReview;
use crate::{Error, Result};

/// Field names of the line-delimited JSON input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestSchema {
    pub user_field: String,
    pub item_field: String,
    pub rating_field: String,
    pub text_field: String,
    pub max_rating: u32,
}

impl Default for IngestSchema {
    fn default() -> Self {
        IngestSchema {
            user_field: "user_id".into(),
            item_field: "item_id".into(),
            rating_field: "rating".into(),
            text_field: "text".into(),
            max_rating: 5,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub reviews: Vec<RawReview>,
    /// `(1-based line number, reason)` for every rejected line.
    pub malformed: Vec<(usize, String)>,
}

const MAX_MALFORMED_FRACTION: f64 = 0.10;

pub fn ingest(path: &Path, schema: &IngestSchema) -> Result<IngestReport> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(BufReader::new(file), schema).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn ingest_reader<R: BufRead>(reader: R, schema: &IngestSchema) -> Result<IngestReport> {
    let mut report = IngestReport::default();
    let mut records = 0usize;
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<input>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        records += 1;
        match parse_line(&line, schema) {
            Ok(r) => report.reviews.push(r),
            Err(reason) => report.malformed.push((n + 1, reason)),
        }
    }
    if records == 0 {
        return Err(Error::data("empty corpus"));
    }
    if report.malformed.len() as f64 > MAX_MALFORMED_FRACTION * records as f64 {
        let lines: Vec<String> = report.malformed.iter().map(|(n, _)| n.to_string()).collect();
        return Err(Error::data(format!(
            "{} of {} records malformed (lines {})",
            report.malformed.len(),
            records,
            lines.join(", ")
        )));
    }
    Ok(report)
}

fn parse_line(line: &str, schema: &IngestSchema) -> std::result::Result<RawReview, String> {
    let v: Value = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    let field = |name: &str| v.get(name).ok_or_else(|| format!("missing field {name:?}"));
    let as_id = |name: &str| -> std::result::Result<String, String> {
        match field(name)? {
            Value::String(s) if !s.is_empty() => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            _ => Err(format!("field {name:?} is not a string or number")),
        }
    };
    let user_id = as_id(&schema.user_field)?;
    let item_id = as_id(&schema.item_field)?;
    let rating = match field(&schema.rating_field)? {
        Value::Number(n) => n
            .as_f64()
            .filter(|x| x.fract() == 0.0 && *x >= 0.0)
            .map(|x| x as u32),
        Value::String(s) => s.trim().parse::<u32>().ok(),
        _ => None,
    }
    .ok_or_else(|| format!("field {:?} is not an integer", schema.rating_field))?;
    if rating < 1 || rating > schema.max_rating {
        return Err(format!("rating {rating} outside 1..={}", schema.max_rating));
    }
    let text = match field(&schema.text_field)? {
        Value::String(s) => s.clone(),
        _ => return Err(format!("field {:?} is not a string", schema.text_field)),
    };
    if text.trim().is_empty() {
        return Err("empty text".into());
    }
    Ok(RawReview {
        user_id,
        item_id,
        rating,
        text,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(input: &str) -> Result<IngestReport> {
        ingest_reader(input.as_bytes(), &IngestSchema::default())
    }

    #[test]
    fn well_formed_lines_in_order() {
        let input = r#"{"user_id":"u1","item_id":"i1","rating":5,"text":"great"}
{"user_id":"u2","item_id":"i1","rating":"3","text":"ok"}
{"user_id":"u3","item_id":7,"rating":1,"text":"bad"}
"#;
        let r = run(input).unwrap();
        assert_eq!(r.reviews.len(), 3);
        assert_eq!(r.reviews[1].rating, 3);
        assert_eq!(r.reviews[2].item_id, "7");
        assert!(r.malformed.is_empty());
    }

    #[test]
    fn missing_rating_is_reported_not_dropped() {
        let mut input = String::new();
        for i in 0..10 {
            input.push_str(&format!(
                "{{\"user_id\":\"u{i}\",\"item_id\":\"i\",\"rating\":4,\"text\":\"fine\"}}\n"
            ));
        }
        input.push_str("{\"user_id\":\"x\",\"item_id\":\"i\",\"text\":\"no rating\"}\n");
        let r = run(&input).unwrap();
        assert_eq!(r.reviews.len(), 10);
        assert_eq!(r.malformed.len(), 1);
        assert_eq!(r.malformed[0].0, 11);
        assert!(r.malformed[0].1.contains("rating"));
    }

    #[test]
    fn empty_file_is_an_error() {
        let err = run("").unwrap_err();
        assert!(err.to_string().contains("empty corpus"));
    }

    #[test]
    fn too_many_malformed_lines_is_fatal() {
        let input = "{\"user_id\":\"u\",\"item_id\":\"i\",\"rating\":4,\"text\":\"a\"}\nnot json\n";
        let err = run(input).unwrap_err();
        assert!(err.to_string().contains("lines 2"), "{err}");
    }

    #[test]
    fn custom_field_names() {
        let schema = IngestSchema {
            user_field: "reviewerID".into(),
            item_field: "asin".into(),
            rating_field: "overall".into(),
            text_field: "reviewText".into(),
            max_rating: 5,
        };
        let line = r#"{"reviewerID":"A","asin":"B","overall":5.0,"reviewText":"nice"}"#;
        let r = ingest_reader(line.as_bytes(), &schema).unwrap();
        assert_eq!(r.reviews[0].rating, 5);
    }
}
