//! Small built-in corpora for examples, tests and smoke runs.
//!
//! - [`painting_corpus`]: six passages around the "father of the artist
//!   who painted Head I" question, with three QA items.
//! - [`two_hop_fixture`]: 40 templated documents where each of 10
//!   questions needs one fact from each of two documents joined by a
//!   bridge person.

use crate::corpus::{Document, QAItem};
use crate::pool::Hit;

fn doc(id: &str, title: &str, text: &str) -> Document {
    Document {
        doc_id: id.into(),
        title: title.into(),
        text: text.into(),
    }
}

pub fn painting_corpus() -> Vec<Document> {
    vec![
        doc(
            "head-i",
            "Head I",
            "Head I is a small oil and tempera painting on hardboard. Head I was painted by Francis Bacon in 1948.",
        ),
        doc(
            "francis-bacon",
            "Francis Bacon",
            "Francis Bacon was the son of Sir Nicholas Bacon and Anne Cooke Bacon. Francis Bacon was born at York House near the Strand in London in 1561.",
        ),
        doc(
            "nicholas-bacon",
            "Nicholas Bacon",
            "Sir Nicholas Bacon was an English politician of the Tudor period. Nicholas Bacon served as Lord Keeper of the Great Seal.",
        ),
        doc(
            "anne-bacon",
            "Anne Bacon",
            "Anne Cooke Bacon was an English scholar and translator. Anne Cooke Bacon was born in 1528 at Gidea Hall in Essex.",
        ),
        doc(
            "york-house",
            "York House",
            "York House was a grand town house on the Strand in London. York House was later owned by George Villiers.",
        ),
        doc(
            "tate",
            "Tate Britain",
            "Tate Britain is an art museum on Millbank in London. Tate Britain holds the national collection of British art.",
        ),
    ]
}

pub fn painting_questions() -> Vec<QAItem> {
    let qa = |id: &str, q: &str, answers: &[&str], support: &[&str]| QAItem {
        question_id: id.into(),
        question: q.into(),
        gold_answers: answers.iter().map(|s| s.to_string()).collect(),
        supporting_doc_ids: support.iter().map(|s| s.to_string()).collect(),
    };
    vec![
        qa(
            "q1",
            "Who is the father of the artist who painted Head I?",
            &["Nicholas Bacon", "Sir Nicholas Bacon"],
            &["head-i", "francis-bacon"],
        ),
        qa(
            "q2",
            "Where was the painter of Head I born?",
            &["York House", "London"],
            &["head-i", "francis-bacon"],
        ),
        qa(
            "q3",
            "What office did Nicholas Bacon hold?",
            &["Lord Keeper of the Great Seal"],
            &["nicholas-bacon"],
        ),
    ]
}

const WORKS: [&str; 10] = [
    "Crimson Study", "Pale Harbor", "Silent Orchard", "Amber Tide", "Winter Lantern",
    "Copper Field", "Hollow Crown", "Violet Shore", "Iron Meadow", "Glass River",
];
const MUSEUMS: [&str; 10] = [
    "Harrow Gallery", "Linden Museum", "Corvin Hall", "Ashby Collection", "Marlow Institute",
    "Fenwick House", "Garrick Gallery", "Holloway Museum", "Bexley Hall", "Dunmore Gallery",
];
const ARTISTS: [&str; 10] = [
    "Aldric Venn", "Bertram Quill", "Cassia Lorne", "Dorian Pike", "Elspeth Moor",
    "Fabian Crane", "Greta Holm", "Hector Vale", "Imogen Reed", "Jasper Thorne",
];
const TOWNS: [&str; 10] = [
    "Port Sable", "Eastwick", "Millbrook", "Carrow Bay", "Westholm",
    "Tarnby", "Oakridge", "Brackenford", "Selby Cross", "Kingsmere",
];
const PARENTS: [&str; 10] = [
    "Oren Marsh", "Tobias Fenn", "Lucan Hale", "Mortimer Gray", "Silas Brook",
    "Roland Wick", "Edmund Shaw", "Victor Lane", "Ansel Ford", "Cedric Howe",
];
const OBJECTS: [&str; 10] = [
    "Northern Light", "Quiet Engine", "Scarlet Bell", "Lunar Garden", "Broken Compass",
    "Emerald Gate", "Falling Star", "Paper Fleet", "Stone Choir", "Velvet Storm",
];
const HALLS: [&str; 10] = [
    "Quarry Hall", "Rowan Library", "Sutton Archive", "Tilbury Hall", "Upton Gallery",
    "Vesey Museum", "Wexford Hall", "Yardley House", "Zennor Gallery", "Alder Museum",
];
const MAKERS: [&str; 10] = [
    "Lydia Frost", "Marcus Penn", "Nadia Cole", "Owen Barlow", "Petra Lind",
    "Quentin Ash", "Rosa Hart", "Stefan Rook", "Tamsin Wade", "Ulric Stone",
];
const PLACES: [&str; 10] = [
    "Ravenscar", "Fairhaven", "Glenmore", "Highcliff", "Longford",
    "Northam", "Redwater", "Southby", "Thornbury", "Whitby Vale",
];

/// One question whose answer needs a fact from each of two documents.
#[derive(Debug, Clone)]
pub struct TwoHopQuestion {
    pub qa: QAItem,
    /// Sentence of the first document naming the bridge person.
    pub first_hop: String,
    /// Sentence of the second document giving the answer.
    pub second_hop: String,
    pub bridge: String,
}

impl TwoHopQuestion {
    /// Whether a single retrieved entry carries both hop facts.
    pub fn bridged_by(&self, hit: &Hit) -> bool {
        hit.text.contains(&self.first_hop) && hit.text.contains(&self.second_hop)
    }

    pub fn answered_in(&self, hits: &[Hit]) -> bool {
        hits.iter().any(|h| self.bridged_by(h))
    }
}

#[derive(Debug, Clone)]
pub struct TwoHopFixture {
    pub docs: Vec<Document>,
    pub questions: Vec<TwoHopQuestion>,
}

/// Ten artwork → artist → parent chains (20 documents) plus 20 distractor
/// documents written in the same style.
///
/// Each document opens with a sentence that carries no hop fact, so
/// first-sentence summaries of document clusters never contain one.
pub fn two_hop_fixture() -> TwoHopFixture {
    let mut docs = Vec::new();
    let mut questions = Vec::new();
    for i in 0..10 {
        let (w, m, a, t, p) = (WORKS[i], MUSEUMS[i], ARTISTS[i], TOWNS[i], PARENTS[i]);
        let first_hop = format!("{w} was painted by {a}.");
        let second_hop = format!("{a} is the son of {p}.");
        docs.push(doc(
            &format!("work-{i}"),
            w,
            &format!("{w} is a painting held in {m}. {first_hop}"),
        ));
        docs.push(doc(
            &format!("artist-{i}"),
            a,
            &format!("{a} was born in {t}. {second_hop}"),
        ));
        questions.push(TwoHopQuestion {
            qa: QAItem {
                question_id: format!("chain-{i}"),
                question: format!("Who is the father of the artist who painted {w}?"),
                gold_answers: vec![p.to_string()],
                supporting_doc_ids: vec![format!("work-{i}"), format!("artist-{i}")],
            },
            first_hop,
            second_hop,
            bridge: a.to_string(),
        });
    }
    for i in 0..10 {
        let (o, h, k, l) = (OBJECTS[i], HALLS[i], MAKERS[i], PLACES[i]);
        docs.push(doc(
            &format!("object-{i}"),
            o,
            &format!("{o} is a tapestry displayed in {h}. {h} opened to visitors in {}.", 1890 + i),
        ));
        docs.push(doc(
            &format!("maker-{i}"),
            k,
            &format!("{k} was a weaver who lived in {l}. {k} trained many apprentices."),
        ));
    }
    TwoHopFixture { docs, questions }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_shape() {
        let f = two_hop_fixture();
        assert_eq!(f.docs.len(), 40);
        assert_eq!(f.questions.len(), 10);
        let ids: std::collections::BTreeSet<_> = f.docs.iter().map(|d| &d.doc_id).collect();
        assert_eq!(ids.len(), 40);
        // no document holds both hops
        for q in &f.questions {
            assert!(!f
                .docs
                .iter()
                .any(|d| d.text.contains(&q.first_hop) && d.text.contains(&q.second_hop)));
        }
        assert_eq!(painting_corpus().len(), 6);
        assert_eq!(painting_questions().len(), 3);
    }
}
