//! Line-delimited JSON encoding of a [`Transcript`].
//!
//! A file is one `header` record, then `query` records (user-major), then
//! `answer` and `decoded` records per block, then one `summary`. Field
//! symbols are lowercase hex at the field's fixed width. There are no
//! timestamps, so equal sessions serialize to equal bytes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldElement, FieldSpec};
use crate::protocol::{AnswerShare, BlockRecord, QueryShare, Transcript};
use crate::rng::DERIVATION;
use crate::scheme::{CandidateParams, SchemeParams};
use crate::tensor::FieldVector;

pub const SCHEMA: &str = "blindpir.transcript/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case", deny_unknown_fields)]
enum Record {
    Header {
        schema: String,
        version: String,
        params: CandidateParams,
        master_seed: u64,
        derivation: String,
        thetas: Vec<usize>,
        common_randomness: bool,
        message_len: usize,
    },
    Query {
        user: usize,
        server: usize,
        vectors: Vec<Vec<String>>,
    },
    Answer {
        block: usize,
        server: usize,
        value: String,
    },
    Decoded {
        block: usize,
        symbols: Vec<String>,
    },
    Summary {
        blocks: usize,
        download_count: usize,
        rate: Option<String>,
        verified: Option<bool>,
    },
}

fn hex_all(f: FieldSpec, xs: &[FieldElement]) -> Vec<String> {
    xs.iter().map(|&x| f.to_hex(x)).collect()
}

fn parse_all(f: FieldSpec, xs: &[String]) -> Result<Vec<FieldElement>> {
    xs.iter().map(|s| f.from_hex(s)).collect()
}

pub fn to_jsonl(t: &Transcript) -> String {
    let f = t.params.field();
    let mut records = vec![Record::Header {
        schema: SCHEMA.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        params: t.params.candidate(),
        master_seed: t.master_seed,
        derivation: DERIVATION.into(),
        thetas: t.thetas.clone(),
        common_randomness: t.common_randomness,
        message_len: t.message_len,
    }];
    for q in t.queries.iter().flatten() {
        records.push(Record::Query {
            user: q.user,
            server: q.server,
            vectors: q.vectors.iter().map(|v| hex_all(f, v.as_slice())).collect(),
        });
    }
    for b in &t.blocks {
        for a in &b.answers {
            records.push(Record::Answer {
                block: b.block,
                server: a.server,
                value: f.to_hex(a.value),
            });
        }
        records.push(Record::Decoded {
            block: b.block,
            symbols: hex_all(f, &b.decoded),
        });
    }
    records.push(Record::Summary {
        blocks: t.blocks.len(),
        download_count: t.download_count(),
        rate: t.rate().map(|r| r.to_string()),
        verified: t.verified,
    });
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&r).expect("records always serialize"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl(text: &str) -> Result<Transcript> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let parse = |(i, line): (usize, &str)| -> Result<Record> {
        serde_json::from_str(line).map_err(|e| Error::Record(format!("line {}: {e}", i + 1)))
    };
    let header = lines.next().ok_or_else(|| Error::Record("empty transcript".into()))?;
    let Record::Header {
        schema,
        params,
        master_seed,
        derivation,
        thetas,
        common_randomness,
        message_len,
        ..
    } = parse(header)?
    else {
        return Err(Error::Record("first record must be a header".into()));
    };
    if schema != SCHEMA {
        return Err(Error::Record(format!("unsupported schema {schema:?}")));
    }
    if derivation != DERIVATION {
        return Err(Error::Record(format!("unknown seed derivation {derivation:?}")));
    }
    let params = SchemeParams::validate(&params)?;
    let f = params.field();
    let mut queries: Vec<Vec<QueryShare>> = vec![Vec::new(); params.users()];
    let mut blocks: Vec<BlockRecord> = Vec::new();
    let mut summary = None;
    for item in lines {
        if summary.is_some() {
            return Err(Error::Record(format!("line {}: record after summary", item.0 + 1)));
        }
        match parse(item)? {
            Record::Header { .. } => return Err(Error::Record("duplicate header".into())),
            Record::Query { user, server, vectors } => {
                let slot = user
                    .checked_sub(1)
                    .and_then(|m| queries.get_mut(m))
                    .ok_or_else(|| Error::Record(format!("query from unknown user {user}")))?;
                let vectors = vectors
                    .iter()
                    .map(|v| FieldVector::new(f, parse_all(f, v)?))
                    .collect::<Result<Vec<_>>>()?;
                slot.push(QueryShare { user, server, vectors });
            }
            Record::Answer { block, server, value } => {
                if blocks.last().is_none_or(|b| b.block != block || !b.decoded.is_empty()) {
                    if blocks.len() != block {
                        return Err(Error::Record(format!("block {block} out of order")));
                    }
                    blocks.push(BlockRecord {
                        block,
                        answers: Vec::new(),
                        decoded: Vec::new(),
                    });
                }
                blocks.last_mut().expect("just pushed").answers.push(AnswerShare {
                    server,
                    value: f.from_hex(&value)?,
                });
            }
            Record::Decoded { block, symbols } => {
                let b = blocks
                    .last_mut()
                    .filter(|b| b.block == block && b.decoded.is_empty())
                    .ok_or_else(|| Error::Record(format!("decoded record for block {block} without answers")))?;
                b.decoded = parse_all(f, &symbols)?;
            }
            Record::Summary {
                blocks: nb,
                download_count,
                rate,
                verified,
            } => summary = Some((nb, download_count, rate, verified)),
        }
    }
    let (nb, download_count, rate, verified) =
        summary.ok_or_else(|| Error::Record("missing summary record".into()))?;
    let t = Transcript {
        params,
        master_seed,
        thetas,
        common_randomness,
        message_len,
        queries,
        blocks,
        verified,
    };
    if nb != t.blocks.len()
        || download_count != t.download_count()
        || rate != t.rate().map(|r| r.to_string())
    {
        return Err(Error::Record("summary disagrees with the records".into()));
    }
    Ok(t)
}

pub fn write_file(t: &Transcript, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, to_jsonl(t))?;
    Ok(())
}

pub fn read_file(path: &std::path::Path) -> Result<Transcript> {
    from_jsonl(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{retrieve, MessageStore, RetrievalOptions};
    use crate::rng::SeedSchedule;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn session(symbols: usize) -> Transcript {
        let p = CandidateParams::new(8, &[2, 2, 2], &[1, 1, 2], 2, 13).validate().unwrap();
        let store = MessageStore::random(p.field(), p.k(), symbols, &mut ChaCha20Rng::seed_from_u64(3));
        retrieve(&p, &store, &[2, 1, 2], SeedSchedule::new(5), RetrievalOptions::default()).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for symbols in [0, 1, 5] {
            let t = session(symbols);
            let text = to_jsonl(&t);
            let back = from_jsonl(&text).unwrap();
            assert_eq!(back, t);
            assert_eq!(to_jsonl(&back), text);
        }
    }

    #[test]
    fn layout_and_encoding() {
        let text = to_jsonl(&session(3));
        let lines: Vec<&str> = text.lines().collect();
        // header + 3 users x 8 servers + 2 blocks x (8 answers + decoded) + summary
        assert_eq!(lines.len(), 1 + 24 + 18 + 1);
        let head: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(head["schema"], SCHEMA);
        assert_eq!(head["params"]["alpha"], serde_json::json!([2, 3, 4, 5, 6, 7, 8, 9]));
        let ans: serde_json::Value = serde_json::from_str(lines[25]).unwrap();
        assert_eq!(ans["record"], "answer");
        assert_eq!(ans["value"].as_str().unwrap().len(), 2);
        let tail: serde_json::Value = serde_json::from_str(lines[lines.len() - 1]).unwrap();
        assert_eq!(tail["download_count"], 16);
        assert_eq!(tail["rate"], "1/4");
        assert_eq!(tail["verified"], true);
    }

    #[test]
    fn rejects_tampered_files() {
        let text = to_jsonl(&session(2));
        assert!(from_jsonl("").is_err());
        assert!(from_jsonl(&text.replace(SCHEMA, "blindpir.transcript/0")).is_err());
        let no_summary: String = text.lines().take(text.lines().count() - 1).map(|l| format!("{l}\n")).collect();
        assert!(from_jsonl(&no_summary).is_err());
        assert!(from_jsonl(&text.replace("\"download_count\":8", "\"download_count\":9")).is_err());
        assert!(from_jsonl(&text.replace("\"rate\":\"1/4\"", "\"rate\":\"1/3\"")).is_err());
        let body: Vec<&str> = text.lines().collect();
        let truncated = [body[0], body[body.len() - 1]].join("\n");
        assert!(from_jsonl(&truncated).is_err());
        assert!(from_jsonl(&format!("{text}{}\n", body[1])).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let t = session(4);
        write_file(&t, &path).unwrap();
        assert_eq!(read_file(&path).unwrap(), t);
    }
}
