//! MovieLens-1M `::`-delimited dump.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use super::{Catalog, CorpusError, Interaction, LoadedCorpus};
use crate::{ItemId, UserId};

/// Loads `ratings.dat` (`UserID::MovieID::Rating::Timestamp`) and
/// `movies.dat` (`MovieID::Title::Genres`, Latin-1 encoded).
///
/// Every rating becomes one interaction regardless of its value. The catalog
/// holds the rated movies only, in `movies.dat` order, with titles rewritten
/// by [`display_title`].
pub fn load_ml1m(ratings_path: &Path, movies_path: &Path) -> Result<LoadedCorpus, CorpusError> {
    let raw = fs::read(movies_path).map_err(|e| CorpusError::io(movies_path, e))?;
    let movies_text = decode_latin1(&raw);
    let mut titles: HashMap<ItemId, String> = HashMap::new();
    let mut order: Vec<ItemId> = Vec::new();
    for (lineno, line) in movies_text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: &str| CorpusError::Malformed {
            path: movies_path.to_path_buf(),
            line: lineno + 1,
            message: message.to_owned(),
        };
        let first = line.find("::").ok_or_else(|| malformed("expected MovieID::Title::Genres"))?;
        let last = line.rfind("::").expect("found above");
        if last == first {
            return Err(malformed("expected MovieID::Title::Genres"));
        }
        let id = line[..first].trim();
        if id.is_empty() {
            return Err(malformed("empty movie id"));
        }
        let title = display_title(&line[first + 2..last]);
        let id = ItemId::new(id);
        if titles.insert(id.clone(), title).is_some() {
            return Err(CorpusError::DuplicateItem(id));
        }
        order.push(id);
    }

    let ratings = fs::read_to_string(ratings_path).map_err(|e| CorpusError::io(ratings_path, e))?;
    let mut interactions = Vec::new();
    let mut rated: HashSet<ItemId> = HashSet::new();
    for (lineno, line) in ratings.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| CorpusError::Malformed {
            path: ratings_path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let fields: Vec<&str> = line.split("::").collect();
        if fields.len() != 4 {
            return Err(malformed(format!(
                "expected UserID::MovieID::Rating::Timestamp, found {} fields",
                fields.len()
            )));
        }
        let item = ItemId::new(fields[1].trim());
        if !titles.contains_key(&item) {
            return Err(CorpusError::UnknownItem {
                path: ratings_path.to_path_buf(),
                line: lineno + 1,
                item,
            });
        }
        fields[2]
            .trim()
            .parse::<f64>()
            .map_err(|_| malformed(format!("bad rating {:?}", fields[2])))?;
        let timestamp = fields[3]
            .trim()
            .parse::<i64>()
            .map_err(|_| malformed(format!("bad timestamp {:?}", fields[3])))?;
        rated.insert(item.clone());
        interactions.push(Interaction {
            user: UserId::new(fields[0].trim()),
            item,
            timestamp,
        });
    }

    let mut catalog = Catalog::new();
    for id in order {
        if rated.contains(&id) {
            let title = titles.remove(&id).expect("title recorded");
            catalog.insert(id, title)?;
        }
    }
    Ok(LoadedCorpus {
        catalog,
        interactions,
        skipped_records: 0,
        dropped_untitled: 0,
    })
}

fn decode_latin1(bytes: &[u8]) -> String {
    bytes.iter().map(|&b| char::from(b)).collect()
}

/// Rewrites a MovieLens title into its natural reading order: the trailing
/// release year is removed and a trailing English article moves to the
/// front (`"Matrix, The (1999)"` becomes `"The Matrix"`).
pub fn display_title(raw: &str) -> String {
    let mut title = raw.trim();
    if let Some(open) = title.rfind(" (") {
        let tail = &title[open + 2..];
        if tail.len() == 5 && tail.ends_with(')') && tail[..4].bytes().all(|b| b.is_ascii_digit()) {
            title = title[..open].trim_end();
        }
    }
    for article in ["The", "A", "An"] {
        let suffix = format!(", {article}");
        if let Some(stem) = title.strip_suffix(suffix.as_str()) {
            return format!("{article} {stem}");
        }
    }
    title.to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let path = dir.join(name);
        fs::File::create(&path).unwrap().write_all(bytes).unwrap();
        path
    }

    #[test]
    fn titles_read_naturally() {
        assert_eq!(display_title("Matrix, The (1999)"), "The Matrix");
        assert_eq!(display_title("Hard Day's Night, A (1964)"), "A Hard Day's Night");
        assert_eq!(display_title("Apple, The (Sib) (1998)"), "Apple, The (Sib)");
        assert_eq!(
            display_title("Manon of the Spring (Manon des sources) (1986)"),
            "Manon of the Spring (Manon des sources)"
        );
        assert_eq!(display_title("Roger & Me (1989)"), "Roger & Me");
        assert_eq!(display_title("Meatballs 4 (1992)"), "Meatballs 4");
    }

    #[test]
    fn two_ratings_one_user() {
        let dir = tempfile::tempdir().unwrap();
        let ratings = write(dir.path(), "ratings.dat", b"1::10::5::100\n1::11::3::50\n");
        let movies = write(
            dir.path(),
            "movies.dat",
            b"10::GoldenEye (1995)::Action\n11::American President, The (1995)::Comedy\n12::Unrated (1990)::Drama\n",
        );
        let loaded = load_ml1m(&ratings, &movies).unwrap();
        assert_eq!(loaded.interactions.len(), 2);
        assert_eq!(loaded.catalog.len(), 2);
        assert_eq!(loaded.catalog.title(&"11".into()), Some("The American President"));
        let histories = crate::corpus::build_histories(&loaded.interactions);
        assert_eq!(histories.len(), 1);
        assert_eq!(histories[0].items, vec![ItemId::from("11"), ItemId::from("10")]);
    }

    #[test]
    fn latin1_titles_decode() {
        let dir = tempfile::tempdir().unwrap();
        let ratings = write(dir.path(), "ratings.dat", b"1::1::4::1\n");
        let movies = write(dir.path(), "movies.dat", b"1::Am\xe9lie (2001)::Comedy\n");
        let loaded = load_ml1m(&ratings, &movies).unwrap();
        assert_eq!(loaded.catalog.title(&"1".into()), Some("Amélie"));
    }

    #[test]
    fn empty_ratings_file() {
        let dir = tempfile::tempdir().unwrap();
        let ratings = write(dir.path(), "ratings.dat", b"");
        let movies = write(dir.path(), "movies.dat", b"1::Heat (1995)::Action\n");
        let loaded = load_ml1m(&ratings, &movies).unwrap();
        assert!(loaded.interactions.is_empty());
        assert!(crate::corpus::build_histories(&loaded.interactions).is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let ratings = write(dir.path(), "ratings.dat", b"1::1::4::1\n1::1::4\n");
        let movies = write(dir.path(), "movies.dat", b"1::Heat (1995)::Action\n");
        match load_ml1m(&ratings, &movies) {
            Err(CorpusError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_movie_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let ratings = write(dir.path(), "ratings.dat", b"1::99::4::1\n");
        let movies = write(dir.path(), "movies.dat", b"1::Heat (1995)::Action\n");
        assert!(matches!(
            load_ml1m(&ratings, &movies),
            Err(CorpusError::UnknownItem { line: 1, .. })
        ));
    }
}
