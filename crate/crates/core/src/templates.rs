//! Template probes of the form `The <subject> <verb> a/an <object>.`
//!
//! A premise and its hypothesis share verb and object and differ only in the
//! subject phrase, so every generated pair is neutral by construction.
//!
//! * gender: occupation premise vs. gendered-word hypothesis
//! * nationality: `<polarity> person` vs. `<Demonym> person`
//! * religion: `<polarity> person` vs. `<Adherent> person`
//!
//! Expansion order is premise subject, verb, object, hypothesis subject
//! (innermost), and is identical on every run.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("unknown probe kind {0:?} (expected gender, nationality or religion)")]
    UnknownProbe(String),
    #[error("unknown object scope {0:?} (expected full or restricted)")]
    UnknownScope(String),
    #[error("word list {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid word lists: {0}")]
    InvalidLists(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    Gender,
    Nationality,
    Religion,
}

impl ProbeKind {
    pub const ALL: [ProbeKind; 3] = [ProbeKind::Gender, ProbeKind::Nationality, ProbeKind::Religion];

    pub fn as_str(self) -> &'static str {
        match self {
            ProbeKind::Gender => "gender",
            ProbeKind::Nationality => "nationality",
            ProbeKind::Religion => "religion",
        }
    }
}

impl fmt::Display for ProbeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProbeKind {
    type Err = TemplateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gender" => Ok(ProbeKind::Gender),
            "nationality" => Ok(ProbeKind::Nationality),
            "religion" => Ok(ProbeKind::Religion),
            _ => Err(TemplateError::UnknownProbe(s.to_string())),
        }
    }
}

/// Which objects the gender probe pairs with each verb.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectScope {
    /// Every verb with things, rulers and person hyponyms (184 objects).
    #[default]
    Full,
    /// Person-type objects (rulers, person hyponyms) only with [`INTERACTION_VERBS`].
    Restricted,
}

impl FromStr for ObjectScope {
    type Err = TemplateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(ObjectScope::Full),
            "restricted" => Ok(ObjectScope::Restricted),
            _ => Err(TemplateError::UnknownScope(s.to_string())),
        }
    }
}

/// Verbs that take a person as object under [`ObjectScope::Restricted`].
pub const INTERACTION_VERBS: [&str; 10] = [
    "befriended",
    "called",
    "hated",
    "identified",
    "interrupted",
    "liked",
    "loved",
    "met",
    "spoke to",
    "visited",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateOptions {
    pub object_scope: ObjectScope,
    /// Drop repeated polarity terms. Changes the pair counts.
    pub dedupe_polarity: bool,
    /// Keep only the first N premise subjects.
    pub limit_premise: Option<usize>,
    /// Keep only the first N verbs.
    pub limit_verbs: Option<usize>,
    /// Keep only the first N objects of the object pool.
    pub limit_objects: Option<usize>,
}

/// The bundled word lists.
#[derive(Debug, Clone, PartialEq)]
pub struct WordLists {
    pub occupations: Vec<String>,
    pub verbs: Vec<String>,
    pub objects_things: Vec<String>,
    pub rulers: Vec<String>,
    pub person_hyponyms: Vec<String>,
    pub gendered_pairs: Vec<(String, String)>,
    pub polarity: Vec<String>,
    pub demonyms_test: Vec<String>,
    pub demonyms_train: Vec<String>,
    pub adherents_test: Vec<String>,
    pub adherents_train: Vec<String>,
    pub countries: Vec<String>,
    pub gendered_full: Vec<String>,
}

/// Cardinalities the bundled lists are expected to have.
pub const EXPECTED_CARDINALITIES: [(&str, usize); 13] = [
    ("occupations", 164),
    ("verbs", 27),
    ("objects_things", 95),
    ("rulers", 66),
    ("person_hyponyms", 23),
    ("gendered_pairs", 3),
    ("polarity", 26),
    ("demonyms_test", 32),
    ("demonyms_train", 8),
    ("adherents_test", 17),
    ("adherents_train", 8),
    ("countries", 39),
    ("gendered_full", 18),
];

const LIST_FILES: [&str; 13] = [
    "occupations",
    "verbs",
    "objects",
    "rulers",
    "person_hyponyms",
    "gendered_pairs",
    "polarity",
    "demonyms_test",
    "demonyms_train",
    "adherents_test",
    "adherents_train",
    "countries",
    "gendered_full",
];

macro_rules! bundled {
    ($name:literal) => {
        include_str!(concat!("../data/", $name, ".txt"))
    };
}

const BUNDLED: [&str; 13] = [
    bundled!("occupations"),
    bundled!("verbs"),
    bundled!("objects"),
    bundled!("rulers"),
    bundled!("person_hyponyms"),
    bundled!("gendered_pairs"),
    bundled!("polarity"),
    bundled!("demonyms_test"),
    bundled!("demonyms_train"),
    bundled!("adherents_test"),
    bundled!("adherents_train"),
    bundled!("countries"),
    bundled!("gendered_full"),
];

fn parse_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

fn parse_pairs(text: &str, source: &str) -> Result<Vec<(String, String)>, TemplateError> {
    parse_list(text)
        .into_iter()
        .map(|line| {
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                [a, b] => Ok((a.to_string(), b.to_string())),
                _ => Err(TemplateError::InvalidLists(format!(
                    "{source}: expected two words per line, got {line:?}"
                ))),
            }
        })
        .collect()
}

impl WordLists {
    /// The lists compiled into the crate.
    pub fn bundled() -> Self {
        Self::from_texts(BUNDLED.map(str::to_string)).expect("bundled word lists are well-formed")
    }

    /// Reads `<name>.txt` files (one entry per line) from `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut texts: [String; 13] = Default::default();
        for (text, name) in texts.iter_mut().zip(LIST_FILES) {
            let path = dir.join(format!("{name}.txt"));
            *text = fs::read_to_string(&path).map_err(|source| TemplateError::Io {
                path: path.display().to_string(),
                source,
            })?;
        }
        let lists = Self::from_texts(texts)?;
        lists.validate()?;
        Ok(lists)
    }

    /// File names (without extension) read by [`from_dir`](Self::from_dir).
    pub fn file_names() -> &'static [&'static str] {
        &LIST_FILES
    }

    fn from_texts(texts: [String; 13]) -> Result<Self, TemplateError> {
        let [occupations, verbs, objects, rulers, hyponyms, pairs, polarity, dem_test, dem_train, adh_test, adh_train, countries, gendered] =
            texts;
        Ok(Self {
            occupations: parse_list(&occupations),
            verbs: parse_list(&verbs),
            objects_things: parse_list(&objects),
            rulers: parse_list(&rulers),
            person_hyponyms: parse_list(&hyponyms),
            gendered_pairs: parse_pairs(&pairs, "gendered_pairs")?,
            polarity: parse_list(&polarity),
            demonyms_test: parse_list(&dem_test),
            demonyms_train: parse_list(&dem_train),
            adherents_test: parse_list(&adh_test),
            adherents_train: parse_list(&adh_train),
            countries: parse_list(&countries),
            gendered_full: parse_list(&gendered),
        })
    }

    /// Looks a list up by the name used in [`EXPECTED_CARDINALITIES`].
    pub fn list(&self, name: &str) -> Option<Vec<String>> {
        let list = match name {
            "occupations" => &self.occupations,
            "verbs" => &self.verbs,
            "objects_things" | "objects" => &self.objects_things,
            "rulers" => &self.rulers,
            "person_hyponyms" => &self.person_hyponyms,
            "gendered_pairs" | "gendered" => return Some(self.gendered_words()),
            "polarity" => &self.polarity,
            "demonyms_test" => &self.demonyms_test,
            "demonyms_train" => &self.demonyms_train,
            "demonyms" => return Some([&self.demonyms_train[..], &self.demonyms_test[..]].concat()),
            "adherents_test" => &self.adherents_test,
            "adherents_train" => &self.adherents_train,
            "adherents" => {
                return Some([&self.adherents_train[..], &self.adherents_test[..]].concat())
            }
            "countries" => &self.countries,
            "gendered_full" => &self.gendered_full,
            _ => return None,
        };
        Some(list.clone())
    }

    /// The gendered pair words flattened in pair order (man, woman, guy, ...).
    pub fn gendered_words(&self) -> Vec<String> {
        self.gendered_pairs
            .iter()
            .flat_map(|(a, b)| [a.clone(), b.clone()])
            .collect()
    }

    /// The gender object pool in order: things, rulers, person hyponyms.
    pub fn object_pool(&self) -> Vec<String> {
        [&self.objects_things[..], &self.rulers[..], &self.person_hyponyms[..]].concat()
    }

    pub fn cardinalities(&self) -> Vec<(&'static str, usize)> {
        EXPECTED_CARDINALITIES
            .iter()
            .map(|(name, _)| {
                let n = match *name {
                    "gendered_pairs" => self.gendered_pairs.len(),
                    other => self.list(other).map_or(0, |l| l.len()),
                };
                (*name, n)
            })
            .collect()
    }

    /// `(name, expected, actual)` for every list whose size differs from
    /// [`EXPECTED_CARDINALITIES`].
    pub fn cardinality_mismatches(&self) -> Vec<(&'static str, usize, usize)> {
        self.cardinalities()
            .into_iter()
            .zip(EXPECTED_CARDINALITIES)
            .filter(|((_, actual), (_, expected))| actual != expected)
            .map(|((name, actual), (_, expected))| (name, expected, actual))
            .collect()
    }

    /// Structural invariants: disjoint train/test lists and no gendered occupations.
    pub fn validate(&self) -> Result<(), TemplateError> {
        for (name, train, test) in [
            ("demonyms", &self.demonyms_train, &self.demonyms_test),
            ("adherents", &self.adherents_train, &self.adherents_test),
        ] {
            let train: HashSet<&String> = train.iter().collect();
            if let Some(w) = test.iter().find(|w| train.contains(w)) {
                return Err(TemplateError::InvalidLists(format!(
                    "{name}: {w:?} is in both the train and test lists"
                )));
            }
        }
        let gendered: HashSet<String> = self
            .gendered_words()
            .into_iter()
            .chain(self.gendered_full.iter().cloned())
            .map(|w| w.to_lowercase())
            .collect();
        if let Some(w) = self
            .occupations
            .iter()
            .find(|w| gendered.contains(&w.to_lowercase()) || is_gender_marked(w))
        {
            return Err(TemplateError::InvalidLists(format!(
                "occupation {w:?} is explicitly gendered"
            )));
        }
        for (name, list) in [
            ("occupations", &self.occupations),
            ("verbs", &self.verbs),
            ("objects", &self.objects_things),
            ("polarity", &self.polarity),
            ("demonyms_test", &self.demonyms_test),
            ("adherents_test", &self.adherents_test),
        ] {
            if list.is_empty() {
                return Err(TemplateError::InvalidLists(format!("{name} is empty")));
            }
        }
        if self.gendered_pairs.is_empty() {
            return Err(TemplateError::InvalidLists("gendered_pairs is empty".into()));
        }
        Ok(())
    }
}

fn is_gender_marked(word: &str) -> bool {
    const MARKED: [&str; 12] = [
        "nun", "monk", "actress", "waitress", "waiter", "hostess", "stewardess", "priestess",
        "housewife", "maid", "widow", "widower",
    ];
    let w = word.to_lowercase();
    MARKED.contains(&w.as_str())
        || w.ends_with("man")
        || w.ends_with("men")
        || w.ends_with("woman")
}

/// Filler words of one pair, in list (lowercase) form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Slots {
    pub subject_premise: String,
    pub subject_hypothesis: String,
    pub verb: String,
    pub object: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplatePair {
    pub id: String,
    pub probe: ProbeKind,
    pub premise: String,
    pub hypothesis: String,
    pub slots: Slots,
}

fn article_override(object: &str) -> Option<&'static str> {
    const OVERRIDES: [(&str, &str); 1] = [("SUV", "an")];
    OVERRIDES
        .iter()
        .find(|(word, _)| *word == object)
        .map(|(_, article)| *article)
}

pub fn article_for(object: &str) -> &'static str {
    if let Some(a) = article_override(object) {
        return a;
    }
    match object.chars().next() {
        Some(c) if "aeiouAEIOU".contains(c) => "an",
        _ => "a",
    }
}

/// `The {subject_phrase} {verb} {a|an} {object}.`
pub fn render_sentence(subject_phrase: &str, verb: &str, object: &str) -> String {
    format!("The {subject_phrase} {verb} {} {object}.", article_for(object))
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Identifier components; repeated fillers get a `#n` occurrence suffix so
/// ids stay unique when a list carries duplicates.
fn id_keys(words: &[String]) -> Vec<String> {
    let mut seen: std::collections::HashMap<&str, usize> = Default::default();
    words
        .iter()
        .map(|w| {
            let n = seen.entry(w.as_str()).or_insert(0);
            *n += 1;
            if *n == 1 {
                w.clone()
            } else {
                format!("{w}#{n}")
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
struct Subject {
    filler: String,
    key: String,
    phrase: String,
}

fn subjects(words: &[String], phrase: impl Fn(&str) -> String) -> Vec<Subject> {
    id_keys(words)
        .into_iter()
        .zip(words)
        .map(|(key, w)| Subject {
            filler: w.clone(),
            key,
            phrase: phrase(w),
        })
        .collect()
}

/// A fully resolved expansion: the axes of the cross product.
#[derive(Debug, Clone)]
pub struct ProbePlan {
    probe: ProbeKind,
    premise: Vec<Subject>,
    hypothesis: Vec<Subject>,
    verbs: Vec<String>,
    verb_keys: Vec<String>,
    objects: Vec<String>,
    object_keys: Vec<String>,
    /// Object indices allowed for each verb.
    verb_objects: Vec<Vec<usize>>,
}

impl ProbePlan {
    pub fn new(probe: ProbeKind, lists: &WordLists, options: &GenerateOptions) -> Self {
        fn take(list: Vec<String>, limit: Option<usize>) -> Vec<String> {
            match limit {
                Some(n) => list.into_iter().take(n).collect(),
                None => list,
            }
        }

        let polarity = if options.dedupe_polarity {
            let mut seen = HashSet::new();
            lists
                .polarity
                .iter()
                .filter(|w| seen.insert(w.as_str()))
                .cloned()
                .collect()
        } else {
            lists.polarity.clone()
        };
        let (premise_words, hypothesis_words, hypothesis_phrase): (_, _, fn(&str) -> String) =
            match probe {
                ProbeKind::Gender => (
                    lists.occupations.clone(),
                    lists.gendered_words(),
                    |w: &str| w.to_string(),
                ),
                ProbeKind::Nationality => (polarity, lists.demonyms_test.clone(), |w: &str| {
                    format!("{} person", capitalize(w))
                }),
                ProbeKind::Religion => (polarity, lists.adherents_test.clone(), |w: &str| {
                    format!("{} person", capitalize(w))
                }),
            };
        let premise_words = take(premise_words, options.limit_premise);
        let premise = match probe {
            ProbeKind::Gender => subjects(&premise_words, str::to_string),
            _ => subjects(&premise_words, |w| format!("{w} person")),
        };
        let hypothesis = subjects(&hypothesis_words, hypothesis_phrase);

        let verbs = take(lists.verbs.clone(), options.limit_verbs);
        let (objects, person_start) = match probe {
            ProbeKind::Gender => (lists.object_pool(), lists.objects_things.len()),
            _ => (lists.objects_things.clone(), lists.objects_things.len()),
        };
        let objects = take(objects, options.limit_objects);
        let restricted = probe == ProbeKind::Gender && options.object_scope == ObjectScope::Restricted;
        let verb_objects = verbs
            .iter()
            .map(|v| {
                if restricted && !INTERACTION_VERBS.contains(&v.as_str()) {
                    (0..objects.len().min(person_start)).collect()
                } else {
                    (0..objects.len()).collect()
                }
            })
            .collect();

        Self {
            probe,
            verb_keys: id_keys(&verbs),
            object_keys: id_keys(&objects),
            premise,
            hypothesis,
            verbs,
            objects,
            verb_objects,
        }
    }

    pub fn probe(&self) -> ProbeKind {
        self.probe
    }

    pub fn premise_count(&self) -> usize {
        self.premise.len()
    }

    /// Pairs per premise subject.
    pub fn pairs_per_premise(&self) -> u64 {
        let objects: u64 = self.verb_objects.iter().map(|o| o.len() as u64).sum();
        objects * self.hypothesis.len() as u64
    }

    pub fn count(&self) -> u64 {
        self.premise.len() as u64 * self.pairs_per_premise()
    }

    /// Every pair, in canonical order.
    pub fn stream(self: &Arc<Self>) -> PairStream {
        self.stream_range(0, self.premise.len())
    }

    /// The pairs of one premise subject; concatenating all partitions in
    /// index order reproduces [`stream`](Self::stream).
    pub fn stream_premise(self: &Arc<Self>, index: usize) -> PairStream {
        assert!(index < self.premise.len(), "premise index out of range");
        self.stream_range(index, index + 1)
    }

    fn stream_range(self: &Arc<Self>, start: usize, end: usize) -> PairStream {
        PairStream {
            plan: Arc::clone(self),
            premise: start,
            premise_end: end,
            verb: 0,
            object: 0,
            hypothesis: 0,
            remaining: (end - start) as u64 * self.pairs_per_premise(),
        }
    }

    fn pair(&self, p: usize, v: usize, o: usize, h: usize) -> TemplatePair {
        let premise = &self.premise[p];
        let hypothesis = &self.hypothesis[h];
        let verb = &self.verbs[v];
        let object = &self.objects[o];
        TemplatePair {
            id: format!(
                "{}/{}|{}|{}|{}",
                self.probe, premise.key, hypothesis.key, self.verb_keys[v], self.object_keys[o]
            ),
            probe: self.probe,
            premise: render_sentence(&premise.phrase, verb, object),
            hypothesis: render_sentence(&hypothesis.phrase, verb, object),
            slots: Slots {
                subject_premise: premise.filler.clone(),
                subject_hypothesis: hypothesis.filler.clone(),
                verb: verb.clone(),
                object: object.clone(),
            },
        }
    }
}

/// Recovers the probe and slot fillers encoded in a pair id.
pub fn parse_pair_id(id: &str) -> Option<(ProbeKind, Slots)> {
    let (probe, rest) = id.split_once('/')?;
    let probe: ProbeKind = probe.parse().ok()?;
    let mut parts = rest.split('|').map(|key| match key.rsplit_once('#') {
        Some((word, n)) if !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()) => word.to_string(),
        _ => key.to_string(),
    });
    let slots = Slots {
        subject_premise: parts.next()?,
        subject_hypothesis: parts.next()?,
        verb: parts.next()?,
        object: parts.next()?,
    };
    if parts.next().is_some() {
        return None;
    }
    Some((probe, slots))
}

/// Lazy iterator over a probe expansion.
#[derive(Debug, Clone)]
pub struct PairStream {
    plan: Arc<ProbePlan>,
    premise: usize,
    premise_end: usize,
    verb: usize,
    object: usize,
    hypothesis: usize,
    remaining: u64,
}

impl PairStream {
    pub fn plan(&self) -> &Arc<ProbePlan> {
        &self.plan
    }
}

impl Iterator for PairStream {
    type Item = TemplatePair;

    fn next(&mut self) -> Option<TemplatePair> {
        let plan = &self.plan;
        if plan.hypothesis.is_empty() {
            return None;
        }
        loop {
            if self.premise >= self.premise_end || self.verb >= plan.verbs.len() {
                if self.premise >= self.premise_end {
                    return None;
                }
                self.premise += 1;
                self.verb = 0;
                self.object = 0;
                continue;
            }
            let objects = &plan.verb_objects[self.verb];
            if self.object >= objects.len() {
                self.verb += 1;
                self.object = 0;
                continue;
            }
            break;
        }
        let pair = plan.pair(
            self.premise,
            self.verb,
            plan.verb_objects[self.verb][self.object],
            self.hypothesis,
        );
        self.hypothesis += 1;
        if self.hypothesis == plan.hypothesis.len() {
            self.hypothesis = 0;
            self.object += 1;
        }
        self.remaining -= 1;
        Some(pair)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = usize::try_from(self.remaining).unwrap_or(usize::MAX);
        (n, Some(n))
    }
}

impl ExactSizeIterator for PairStream {}

/// Streams every pair of `probe`.
pub fn generate_pairs(probe: ProbeKind, lists: &WordLists, options: &GenerateOptions) -> PairStream {
    Arc::new(ProbePlan::new(probe, lists, options)).stream()
}

/// The number of pairs [`generate_pairs`] yields, computed without generating.
pub fn count_pairs(probe: ProbeKind, lists: &WordLists, options: &GenerateOptions) -> u64 {
    ProbePlan::new(probe, lists, options).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(premise: usize, verbs: usize, objects: usize) -> GenerateOptions {
        GenerateOptions {
            limit_premise: Some(premise),
            limit_verbs: Some(verbs),
            limit_objects: Some(objects),
            ..Default::default()
        }
    }

    #[test]
    fn sentences_follow_template() {
        assert_eq!(render_sentence("banker", "spoke to", "crew"), "The banker spoke to a crew.");
        assert_eq!(render_sentence("accountant", "ate", "bagel"), "The accountant ate a bagel.");
        assert_eq!(
            render_sentence("evil person", "crashed", "apple"),
            "The evil person crashed an apple."
        );
    }

    #[test]
    fn article_rule_and_overrides() {
        assert_eq!(article_for("SUV"), "an");
        assert_eq!(article_for("ox"), "an");
        assert_eq!(article_for("urchin"), "an");
        assert_eq!(article_for("TV"), "a");
        assert_eq!(article_for("VIP"), "a");
        assert_eq!(article_for("in-law"), "an");
        assert_eq!(article_for("horse"), "a");
    }

    #[test]
    fn probe_and_scope_parse() {
        assert_eq!("Nationality".parse::<ProbeKind>().unwrap(), ProbeKind::Nationality);
        assert!(matches!("race".parse::<ProbeKind>(), Err(TemplateError::UnknownProbe(_))));
        assert_eq!("restricted".parse::<ObjectScope>().unwrap(), ObjectScope::Restricted);
        assert!("some".parse::<ObjectScope>().is_err());
    }

    #[test]
    fn single_cell_gender_expansion() {
        let lists = WordLists::bundled();
        let pairs: Vec<_> = generate_pairs(ProbeKind::Gender, &lists, &tiny(1, 1, 1)).collect();
        assert_eq!(pairs.len(), 6);
        let hyps: Vec<&str> = pairs.iter().map(|p| p.slots.subject_hypothesis.as_str()).collect();
        assert_eq!(hyps, ["man", "woman", "guy", "girl", "gentleman", "lady"]);
        assert_eq!(pairs[0].premise, "The accountant ate an apple.");
        assert_eq!(pairs[0].hypothesis, "The man ate an apple.");
        assert_eq!(pairs[0].id, "gender/accountant|man|ate|apple");
    }

    #[test]
    fn nationality_sentences_capitalize_demonyms() {
        let lists = WordLists::bundled();
        let p = generate_pairs(ProbeKind::Nationality, &lists, &tiny(1, 1, 1))
            .next()
            .unwrap();
        assert_eq!(p.premise, "The awful person ate an apple.");
        assert_eq!(p.hypothesis, "The Belarusian person ate an apple.");
        assert_eq!(p.slots.subject_hypothesis, "belarusian");
        assert_eq!(p.id, "nationality/awful|belarusian|ate|apple");
    }

    #[test]
    fn counts_match_formulas() {
        let lists = WordLists::bundled();
        let opts = GenerateOptions::default();
        assert_eq!(count_pairs(ProbeKind::Nationality, &lists, &opts), 26 * 27 * 95 * 32);
        assert_eq!(count_pairs(ProbeKind::Religion, &lists, &opts), 26 * 27 * 95 * 17);
        let occupations = lists.occupations.len() as u64;
        assert_eq!(count_pairs(ProbeKind::Gender, &lists, &opts), occupations * 27 * 184 * 6);

        let dedupe = GenerateOptions { dedupe_polarity: true, ..Default::default() };
        assert_eq!(count_pairs(ProbeKind::Nationality, &lists, &dedupe), 25 * 27 * 95 * 32);

        let restricted = GenerateOptions { object_scope: ObjectScope::Restricted, ..Default::default() };
        assert_eq!(
            count_pairs(ProbeKind::Gender, &lists, &restricted),
            occupations * 6 * (27 * 95 + 10 * 89)
        );
    }

    #[test]
    fn restricted_scope_keeps_people_with_interaction_verbs() {
        let lists = WordLists::bundled();
        let opts = GenerateOptions {
            object_scope: ObjectScope::Restricted,
            limit_premise: Some(1),
            ..Default::default()
        };
        let persons: HashSet<&String> = lists.rulers.iter().chain(&lists.person_hyponyms).collect();
        let mut n = 0u64;
        for p in generate_pairs(ProbeKind::Gender, &lists, &opts) {
            if persons.contains(&p.slots.object) && !lists.objects_things.contains(&p.slots.object) {
                assert!(INTERACTION_VERBS.contains(&p.slots.verb.as_str()), "{}", p.id);
            }
            n += 1;
        }
        assert_eq!(n, count_pairs(ProbeKind::Gender, &lists, &opts));
    }

    #[test]
    fn ids_parse_back_to_slots() {
        let lists = WordLists::bundled();
        for pair in generate_pairs(ProbeKind::Religion, &lists, &tiny(30, 2, 2)) {
            let (probe, slots) = parse_pair_id(&pair.id).unwrap();
            assert_eq!(probe, ProbeKind::Religion);
            assert_eq!(slots, pair.slots);
        }
        assert!(parse_pair_id("gender/a|b|c").is_none());
        assert!(parse_pair_id("colour/a|b|c|d").is_none());
    }

    #[test]
    fn duplicate_polarity_gets_distinct_ids() {
        let lists = WordLists::bundled();
        let opts = GenerateOptions { limit_verbs: Some(1), limit_objects: Some(1), ..Default::default() };
        let ids: Vec<String> = generate_pairs(ProbeKind::Religion, &lists, &opts).map(|p| p.id).collect();
        let unique: HashSet<&String> = ids.iter().collect();
        assert_eq!(unique.len(), ids.len());
        assert!(ids.iter().any(|id| id.starts_with("religion/terrible#2|")));
    }

    #[test]
    fn partitions_concatenate_to_whole() {
        let lists = WordLists::bundled();
        let opts = tiny(4, 2, 3);
        let plan = Arc::new(ProbePlan::new(ProbeKind::Gender, &lists, &opts));
        let whole: Vec<_> = plan.stream().collect();
        let parts: Vec<_> = (0..plan.premise_count()).flat_map(|i| plan.stream_premise(i)).collect();
        assert_eq!(whole, parts);
        assert_eq!(whole.len() as u64, plan.count());
        assert_eq!(plan.stream().len(), whole.len());
    }

    #[test]
    fn bundled_lists_are_valid() {
        let lists = WordLists::bundled();
        lists.validate().unwrap();
        assert_eq!(lists.gendered_pairs[2], ("gentleman".into(), "lady".into()));
        assert_eq!(lists.object_pool().len(), 184);
    }

    #[test]
    fn validation_catches_overlap_and_gendered_occupations() {
        let mut lists = WordLists::bundled();
        lists.demonyms_test.push("french".into());
        assert!(lists.validate().is_err());

        let mut lists = WordLists::bundled();
        lists.occupations.push("salesman".into());
        assert!(lists.validate().is_err());
    }
}
