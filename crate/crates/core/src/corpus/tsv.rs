//! Processed-corpus cache.
//!
//! Two tab-separated files, each with a header row:
//!
//! - `items.tsv`: `item_id<TAB>title`, catalog order.
//! - `interactions.tsv`: `user_id<TAB>item_id<TAB>timestamp`, one
//!   interaction per line, in the order the pipeline consumed them.
//!
//! Tabs and line breaks inside titles are written as single spaces.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Catalog, CorpusError, Interaction};
use crate::{ItemId, UserId};

pub const ITEMS_FILE: &str = "items.tsv";
pub const INTERACTIONS_FILE: &str = "interactions.tsv";
const ITEMS_HEADER: &str = "item_id\ttitle";
const INTERACTIONS_HEADER: &str = "user_id\titem_id\ttimestamp";

pub fn write_corpus(
    dir: &Path,
    catalog: &Catalog,
    interactions: &[Interaction],
) -> Result<(), CorpusError> {
    fs::create_dir_all(dir).map_err(|e| CorpusError::io(dir, e))?;
    let items_path = dir.join(ITEMS_FILE);
    let write_items = || -> std::io::Result<()> {
        let mut w = BufWriter::new(fs::File::create(&items_path)?);
        writeln!(w, "{ITEMS_HEADER}")?;
        for item in catalog.iter() {
            let title: String = item
                .title
                .chars()
                .map(|c| if matches!(c, '\t' | '\n' | '\r') { ' ' } else { c })
                .collect();
            writeln!(w, "{}\t{}", item.id, title)?;
        }
        w.flush()
    };
    write_items().map_err(|e| CorpusError::io(&items_path, e))?;

    let ix_path = dir.join(INTERACTIONS_FILE);
    let write_ix = || -> std::io::Result<()> {
        let mut w = BufWriter::new(fs::File::create(&ix_path)?);
        writeln!(w, "{INTERACTIONS_HEADER}")?;
        for x in interactions {
            writeln!(w, "{}\t{}\t{}", x.user, x.item, x.timestamp)?;
        }
        w.flush()
    };
    write_ix().map_err(|e| CorpusError::io(&ix_path, e))
}

pub fn read_corpus(dir: &Path) -> Result<(Catalog, Vec<Interaction>), CorpusError> {
    let items_path = dir.join(ITEMS_FILE);
    let text = fs::read_to_string(&items_path).map_err(|e| CorpusError::io(&items_path, e))?;
    let mut catalog = Catalog::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        let (id, title) = line.split_once('\t').ok_or_else(|| CorpusError::Malformed {
            path: items_path.clone(),
            line: lineno + 1,
            message: "expected item_id<TAB>title".into(),
        })?;
        catalog.insert(ItemId::new(id), title)?;
    }

    let ix_path = dir.join(INTERACTIONS_FILE);
    let text = fs::read_to_string(&ix_path).map_err(|e| CorpusError::io(&ix_path, e))?;
    let mut interactions = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        let malformed = || CorpusError::Malformed {
            path: ix_path.clone(),
            line: lineno + 1,
            message: "expected user_id<TAB>item_id<TAB>timestamp".into(),
        };
        let mut fields = line.split('\t');
        let (Some(user), Some(item), Some(ts), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(malformed());
        };
        let timestamp = ts.parse().map_err(|_| malformed())?;
        interactions.push(Interaction {
            user: UserId::new(user),
            item: ItemId::new(item),
            timestamp,
        });
    }
    Ok((catalog, interactions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip(
            titles in prop::collection::vec("[A-Za-z0-9 ,.'&:()-]{1,20}", 1..8),
            rows in prop::collection::vec((0u8..4, any::<prop::sample::Index>(), -5i64..1_000_000), 0..20),
        ) {
            let titles: Vec<String> = titles
                .into_iter()
                .map(|t| if t.trim().is_empty() { "x".to_owned() } else { t })
                .collect();
            let catalog = Catalog::from_titles(
                titles.iter().enumerate().map(|(i, t)| (ItemId::new(format!("i{i}")), t.clone())),
            ).unwrap();
            let interactions: Vec<_> = rows
                .iter()
                .map(|(u, idx, t)| Interaction::new(
                    format!("u{u}").as_str(),
                    format!("i{}", idx.index(titles.len())).as_str(),
                    *t,
                ))
                .collect();
            let dir = tempfile::tempdir().unwrap();
            write_corpus(dir.path(), &catalog, &interactions).unwrap();
            let (c2, i2) = read_corpus(dir.path()).unwrap();
            prop_assert_eq!(i2, interactions);
            let a: Vec<_> = catalog.iter().map(|x| (x.id.clone(), x.title.clone())).collect();
            let b: Vec<_> = c2.iter().map(|x| (x.id.clone(), x.title.clone())).collect();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn tabs_in_titles_are_flattened() {
        let catalog = Catalog::from_titles([(ItemId::from("a"), "Tab\there")]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_corpus(dir.path(), &catalog, &[]).unwrap();
        let (c2, _) = read_corpus(dir.path()).unwrap();
        assert_eq!(c2.title(&"a".into()), Some("Tab here"));
    }
}
