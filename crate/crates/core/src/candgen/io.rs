use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{CandGenError, CandidateSet, Provenance};
use crate::ItemId;

const VERSION: u32 = 1;

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    format: &'a str,
    version: u32,
    data: &'a T,
}

#[derive(Deserialize)]
struct EnvelopeIn<T> {
    format: String,
    version: u32,
    data: T,
}

fn io_err(path: &Path, source: std::io::Error) -> CandGenError {
    CandGenError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> CandGenError {
    CandGenError::Format {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Writes `value` as JSON wrapped in `{format, version, data}`.
pub fn save_versioned<T: Serialize>(path: &Path, format: &str, value: &T) -> Result<(), CandGenError> {
    let env = EnvelopeOut {
        format,
        version: VERSION,
        data: value,
    };
    let json = serde_json::to_vec(&env).map_err(|e| format_err(path, e.to_string()))?;
    fs::write(path, json).map_err(|e| io_err(path, e))
}

/// Reads a file written by [`save_versioned`], checking format and version.
pub fn load_versioned<T: DeserializeOwned>(path: &Path, format: &str) -> Result<T, CandGenError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let env: EnvelopeIn<T> =
        serde_json::from_slice(&bytes).map_err(|e| format_err(path, e.to_string()))?;
    if env.format != format {
        return Err(format_err(
            path,
            format!("expected format {format:?}, found {:?}", env.format),
        ));
    }
    if env.version != VERSION {
        return Err(format_err(
            path,
            format!("unsupported version {} (expected {VERSION})", env.version),
        ));
    }
    Ok(env.data)
}

const HEADER: &str = "user_id\titems\tsources\tgt_slot";

/// One line per user: `user \t id,id,... \t src,src,... \t slot|-`.
pub fn write_candidates(path: &Path, sets: &[CandidateSet]) -> Result<(), CandGenError> {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    for s in sets {
        for id in s.items() {
            if id.as_str().contains([',', '\t', '\n']) {
                return Err(format_err(path, format!("item id {id:?} cannot be written")));
            }
        }
        let items: Vec<&str> = s.items().iter().map(ItemId::as_str).collect();
        let sources: Vec<&str> = s.sources().iter().map(|p| p.as_str()).collect();
        let slot = s.gt_slot().map_or_else(|| "-".to_string(), |g| g.to_string());
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            s.user,
            items.join(","),
            sources.join(","),
            slot
        ));
    }
    w.write_all(out.as_bytes()).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_candidates(path: &Path) -> Result<Vec<CandidateSet>, CandGenError> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut sets = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let lineno = n + 1;
        if n == 0 {
            if line != HEADER {
                return Err(format_err(path, "missing candidates header"));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let bad = |msg: &str| format_err(path, format!("line {lineno}: {msg}"));
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(bad("expected 4 tab-separated fields"));
        }
        let items: Vec<ItemId> = fields[1].split(',').map(ItemId::from).collect();
        let sources = fields[2]
            .split(',')
            .map(|s| s.parse::<Provenance>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| bad(&e))?;
        if sources.len() != items.len() {
            return Err(bad("items and sources differ in length"));
        }
        let gt = match fields[3] {
            "-" => None,
            s => {
                let slot: usize = s.parse().map_err(|_| bad("bad ground-truth slot"))?;
                Some(items.get(slot).cloned().ok_or_else(|| bad("ground-truth slot out of range"))?)
            }
        };
        let set = CandidateSet::new(fields[0].into(), items, sources, gt.as_ref())
            .map_err(|e| bad(&e.to_string()))?;
        sets.push(set);
    }
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candgen::{Bm25Index, MarkovModel, PopularityTable};
    use crate::corpus::{Catalog, UserHistory};

    #[test]
    fn candidates_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.tsv");
        let a = CandidateSet::new(
            "u1".into(),
            vec!["3".into(), "1".into(), "2".into()],
            vec![Provenance::Random, Provenance::GroundTruth, Provenance::Random],
            Some(&"1".into()),
        )
        .unwrap();
        let b = CandidateSet::new(
            "u2".into(),
            vec!["5".into(), "4".into()],
            vec![Provenance::Bm25, Provenance::Pop],
            None,
        )
        .unwrap();
        write_candidates(&path, &[a.clone(), b.clone()]).unwrap();
        assert_eq!(read_candidates(&path).unwrap(), vec![a, b]);

        fs::write(&path, format!("{HEADER}\nu\t1,2\tpop\t-\n")).unwrap();
        let err = read_candidates(&path).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn versioned_models_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let catalog = Catalog::from_titles([("a", "Red Apple"), ("b", "Green Apple")].map(|(i, t)| (ItemId::from(i), t))).unwrap();
        let training = [UserHistory {
            user: "u".into(),
            items: vec!["a".into(), "b".into()],
            timestamps: vec![1, 2],
        }];

        let p = dir.path().join("bm25.json");
        let idx = Bm25Index::build(&catalog);
        save_versioned(&p, "bm25", &idx).unwrap();
        assert_eq!(load_versioned::<Bm25Index>(&p, "bm25").unwrap(), idx);
        assert!(load_versioned::<Bm25Index>(&p, "markov").is_err());

        let p = dir.path().join("pop.json");
        let pop = PopularityTable::from_training(&catalog, &training);
        save_versioned(&p, "pop", &pop).unwrap();
        let back: PopularityTable = load_versioned(&p, "pop").unwrap();
        assert_eq!(back.count(&"a".into()), 1);
        assert_eq!(back, pop);

        let p = dir.path().join("markov.json");
        let mk = MarkovModel::from_training(&training);
        save_versioned(&p, "markov", &mk).unwrap();
        assert_eq!(load_versioned::<MarkovModel>(&p, "markov").unwrap(), mk);

        fs::write(&p, r#"{"format":"markov","version":9,"data":{"transitions":{}}}"#).unwrap();
        assert!(load_versioned::<MarkovModel>(&p, "markov")
            .unwrap_err()
            .to_string()
            .contains("version 9"));
    }
}
