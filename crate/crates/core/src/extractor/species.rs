use std::io::BufRead;

use serde::Deserialize;

use super::tokenize::{fold_tokens, tokenize};
use crate::lexicon::PhraseTable;

const BUNDLED: &[(&str, &[&str])] = &[
    ("human", &["human", "humans", "patient", "patients", "people", "men", "women", "homo sapiens"]),
    ("mouse", &["mouse", "mice", "murine", "mus musculus"]),
    ("rat", &["rat", "rats", "rattus norvegicus"]),
    ("macaque", &["macaque", "macaques", "monkey", "monkeys", "rhesus", "macaca mulatta"]),
    ("zebrafish", &["zebrafish", "danio rerio"]),
    ("drosophila", &["drosophila", "fruit fly", "fruit flies", "fly", "flies"]),
    ("c_elegans", &["c. elegans", "caenorhabditis elegans", "nematode", "nematodes"]),
];

#[derive(Debug, thiserror::Error)]
pub enum SpeciesError {
    #[error("species line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Surface forms of species names mapped to species ids.
#[derive(Debug, Clone)]
pub struct SpeciesLexicon {
    table: PhraseTable,
}

#[derive(Deserialize)]
struct SpeciesLine {
    species: String,
    surface_forms: Vec<String>,
}

impl SpeciesLexicon {
    pub fn new<'a, I>(species: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, Vec<String>)>,
    {
        let mut forms: Vec<(Vec<String>, String)> = Vec::new();
        for (id, surfaces) in species {
            for s in surfaces {
                let folded = fold_tokens(&s);
                // First claim wins so each form maps to exactly one species.
                if !folded.is_empty() && !forms.iter().any(|(f, _)| *f == folded) {
                    forms.push((folded, id.to_string()));
                }
            }
        }
        let table = PhraseTable::build(forms.iter().map(|(f, id)| (f.as_slice(), id.as_str())));
        SpeciesLexicon { table }
    }

    pub fn bundled() -> Self {
        SpeciesLexicon::new(
            BUNDLED
                .iter()
                .map(|(id, forms)| (*id, forms.iter().map(|s| s.to_string()).collect())),
        )
    }

    /// JSON Lines: `{"species": str, "surface_forms": [str]}`.
    pub fn read<R: BufRead>(reader: R) -> Result<Self, SpeciesError> {
        let mut lines = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: SpeciesLine = serde_json::from_str(&line).map_err(|e| SpeciesError::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
            lines.push(parsed);
        }
        Ok(SpeciesLexicon::new(
            lines.iter().map(|l| (l.species.as_str(), l.surface_forms.clone())),
        ))
    }

    /// Distinct species named in title or abstract, in order of first appearance.
    pub fn infer(&self, title: &str, abstract_text: &str) -> Vec<String> {
        let mut found: Vec<String> = Vec::new();
        let mut probes = 0;
        for text in [title, abstract_text] {
            let tokens = tokenize(text);
            let mut i = 0;
            while i < tokens.len() {
                match self.table.longest_at(&tokens, i, &mut probes) {
                    Some((label, len)) => {
                        let id = self.table.label(label);
                        if !found.iter().any(|f| f == id) {
                            found.push(id.to_string());
                        }
                        i += len;
                    }
                    None => i += 1,
                }
            }
        }
        found
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_species() {
        let sp = SpeciesLexicon::bundled();
        assert_eq!(sp.infer("Fear learning", "Tested in mice."), ["mouse"]);
        assert_eq!(sp.infer("human and mouse studies", ""), ["human", "mouse"]);
        assert!(sp.infer("A study of proteins.", "").is_empty());
        assert_eq!(sp.infer("Aging in C. elegans", "Rats too; and mice, and rats."), ["c_elegans", "rat", "mouse"]);
    }

    #[test]
    fn file_override() {
        let src = "{\"species\":\"pig\",\"surface_forms\":[\"pig\",\"pigs\",\"sus scrofa\"]}\n";
        let sp = SpeciesLexicon::read(src.as_bytes()).unwrap();
        assert_eq!(sp.infer("Sus scrofa brains", "in mice"), ["pig"]);
        assert!(SpeciesLexicon::read("nope".as_bytes()).is_err());
    }
}
