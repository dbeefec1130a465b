//! Prompt registry.
//!
//! Placeholders are written `{{name}}`. None of the templates contain a
//! literal `{{`, so the JSON examples embedded in the extraction prompts
//! need no escaping.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bumped whenever any template text changes; recorded in build manifests.
pub const PROMPT_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptName {
    Rewrite,
    EntityExtract,
    PropositionExtract,
    Summarize,
    Topic,
    QaAnswer,
    HierarchyLabel,
}

impl PromptName {
    pub const ALL: [PromptName; 7] = [
        PromptName::Rewrite,
        PromptName::EntityExtract,
        PromptName::PropositionExtract,
        PromptName::Summarize,
        PromptName::Topic,
        PromptName::QaAnswer,
        PromptName::HierarchyLabel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptName::Rewrite => "rewrite",
            PromptName::EntityExtract => "entity_extract",
            PromptName::PropositionExtract => "proposition_extract",
            PromptName::Summarize => "summarize",
            PromptName::Topic => "topic",
            PromptName::QaAnswer => "qa_answer",
            PromptName::HierarchyLabel => "hierarchy_label",
        }
    }
}

impl fmt::Display for PromptName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PromptName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown prompt `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedOutput {
    FreeText,
    JsonObject,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: PromptName,
    pub template: &'static str,
    pub expected_output: ExpectedOutput,
}

impl PromptTemplate {
    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        let mut rest = self.template;
        while let Some(open) = rest.find("{{") {
            let after = &rest[open + 2..];
            let Some(close) = after.find("}}") else { break };
            let name = &after[..close];
            if !out.contains(&name) {
                out.push(name);
            }
            rest = &after[close + 2..];
        }
        out
    }

    /// Substitute every placeholder. Unbound or unknown variables are errors.
    pub fn render(&self, vars: &BTreeMap<String, String>) -> Result<String> {
        let names = self.placeholders();
        if let Some(extra) = vars.keys().find(|k| !names.contains(&k.as_str())) {
            return Err(Error::Precondition(format!(
                "prompt `{}` has no placeholder `{extra}`",
                self.name
            )));
        }
        let mut out = self.template.to_string();
        for name in names {
            let value = vars.get(name).ok_or_else(|| {
                Error::Precondition(format!("prompt `{}` missing variable `{name}`", self.name))
            })?;
            out = out.replace(&format!("{{{{{name}}}}}"), value);
        }
        Ok(out)
    }
}

pub fn template(name: PromptName) -> PromptTemplate {
    let (template, expected_output) = match name {
        PromptName::Rewrite => (REWRITE, ExpectedOutput::FreeText),
        PromptName::EntityExtract => (ENTITY_EXTRACT, ExpectedOutput::JsonObject),
        PromptName::PropositionExtract => (PROPOSITION_EXTRACT, ExpectedOutput::JsonObject),
        PromptName::Summarize => (SUMMARIZE, ExpectedOutput::FreeText),
        PromptName::Topic => (TOPIC, ExpectedOutput::FreeText),
        PromptName::QaAnswer => (QA_ANSWER, ExpectedOutput::FreeText),
        PromptName::HierarchyLabel => (HIERARCHY_LABEL, ExpectedOutput::FreeText),
    };
    PromptTemplate {
        name,
        template,
        expected_output,
    }
}

pub fn registry() -> Vec<PromptTemplate> {
    PromptName::ALL.into_iter().map(template).collect()
}

const REWRITE: &str = r#"Previous paragraph from Document:
Gualala, the isolated Mendocino Coast town with a name that leaves most visitors tongue-tied, is on a new list of the 50 best places to live in the United States. Men's Journal magazine describes Gualala as an "outpost of adventure lifestyle" in its latest edition, which goes on sale today. The magazine describes Gualala (pronounced wa-LA-la by locals) as one of the "below-the-radar places to a make a move on before the word gets out." There were five such cities. The others were Homer, Alaska; Newport, Vt.; Logan, Utah; and Walla Walla, Wash. Rolling Stone magazine's Jann Wenner publishes Men's Journal, which has a paid circulation of about 620,000. Gualala joined three other California communities on the magazine's list: Santa Cruz, Mammoth Lakes and Bishop. "We were looking for places that combined affordability, proximity to outdoor adventure and a generally undiscovered quality of life," said Erica Kestenbaum, a spokeswoman for Men's Journal.
Instruction:
Rewrite the below paragraph by resolving all entity coreferences with the preceding paragraph from document.
- Resolve all inter-sentence pronoun references.
- Make sure that all pronouns in a sentence refers to some named entity with in the same sentence.
- Explicitly mention entity names wherever necessary to remove ambiguity from a sentence. Remember to make each sentence clear and unambiguous.
- For each entity, use only the one most informative name.
- Do not generate anything except the rewritten paragraph.
Paragraph:
She said isolation played a factor. "In Northern California, it's particularly difficult to find a beautiful coastal setting that isn't entirely overrun," she said. Gualala residents Monday were largely unaware of the magazine listing or the attention it could bring to the old logging town turned tourist center. A few coastal residents chuckled about any notion of affordability, given an influx of newcomers who've driven the median housing price to $580,000 compared to the median family income of $47,778. Others recalled an era when the Gualala region was better known for the logging of ancient redwoods, marijuana growing and boisterous beer drinking at the historic Gualala Hotel. Still there was a certain pride to the magazine's designation. Yvette White, a 25-year resident who works at the Gualala Sport; Tackle shop, said she's proud her town made it on the list.
Output:
Erica Kestenbaum said isolation played a factor. "In Northern California, it's particularly difficult to find a beautiful coastal setting that isn't entirely overrun," Erica Kestenbaum said. Gualala residents Monday were largely unaware of the Men's Journal magazine listing or the attention it could bring to the old logging town turned tourist center. A few coastal residents of Gualala chuckled about any notion of affordability, given an influx of newcomers who've driven the Gualala’s median housing price to $580,000 compared to the median family income of $47,778. Other Gualala residents recalled an era when the Gualala region was better known for the logging of ancient redwoods, marijuana growing and boisterous beer drinking at the historic Gualala Hotel. Still there was a certain pride to the Men's Journal magazine's designation. Yvette White, a 25-year Gualala resident who works at the Gualala Sport; Tackle shop, said she's proud her town made it on the list.
Previous paragraph from Document: {{previous_paragraph}}
Instruction:
Rewrite the below paragraph by resolving all entity coreferences with the preceding paragraph from document.
- Resolve all inter-sentence pronoun references.
- Make sure that all pronouns in a sentence refers to some named entity with in the same sentence.
- Explicitly mention entity names wherever necessary to remove ambiguity from a sentence. Remember to make each sentence clear and unambiguous.
- For each entity, use only the one most informative name.
- Do not generate anything except the rewritten paragraph.
Paragraph: {{paragraph}}
Output:
"#;

const ENTITY_EXTRACT: &str = r#"Extract all named entities from the document. Also generate the type for each entity.

Instructions

- Generate only the most informative name for each named entity. Example: if John P., Parker, John Parker are coreferential, only generate John Parker.
- Use your best understanding best on the domain of paragraph to decide appropriate entity types.
- Respond using json format provided below.

{
    "n1":{"name": "entity_name", "type": "entity_type_label"},
    "n2":{},
}

Below is an example for reference.
Paragraph: Tucked into Eli Lilly’s year-end earnings report, the company revealed positive results from Synergy-NASH - its phase 2 study of tirzepatide in adults in nonalcoholic steatohepatitis (NASH), also known as metabolic dysfunction-associated steatohepatitis (MASH).
Output:

{
    "n1": {"name": "Eli Lilly", "type": "Organization"},
    "n2": {"name": "Synergy-NASH", "type": "Clinical Trial"},
    "n4": {"name": "tirzepatide", "type": "Drug"},
    "n5": {"name": "nonalcoholic steatohepatitis", "type": "Disease"},
    "n6": {"name": "metabolic dysfunction-associated steatohepatitis", "type": "Disease"},
    "n7": {"name": "year-end earnings report", "type": "Document"}
}

Paragraph: {{paragraph}}
Output:
"#;

const PROPOSITION_EXTRACT: &str = r#"Extract all facts from the document. For each fact, also generate all semantic triplets.
Instructions
- Consistently use the most informative name for each named entity in all facts and triplets.
- Avoid pronouns or ambiguous references in facts and triplets. Instead, directly include all relevant named entities in facts.
- Ensure that each semantic triplet contains head entity, predicate, and tail entity.
- Ensure that at least one (preferably both) entity in each semantic triplet is present in the given entities list.
- Respond using json format provided below:

{
    "f1":{
        "fact": "A factual statement describing important information (preferably about some entities) from the paragraph",
        "triplets: [["entity 1", "predicate", "entity 2"], ["entity 1", "predicate", "entity 3"]]
    },
    "f2":{},
}

Below is an example for reference.
Paragraph: Locked in a heated battle with Novo Nordisk’s semaglutide franchise, Eli Lilly’s tirzepatide is beginning to come into its own - both with regards to sales and amid attempts to show the dual GIP/GLP-1 agonist can strike out beyond diabetes and obesity. As Mounjaro, tirzepatide won its first FDA nod in Type 2 diabetes back in May 2022. An obesity approval followed last November, with that formulation of tirzepatide adopting the commercial moniker Zepbound. In 2023’s fourth quarter, Mounjaro generated a whopping $2.2 billion in sales, a nearly eight-fold increase over the $279 million it pulled down during the same stretch in 2022. Year-to-date, the drug brought home around $5.2 billion in revenues, Lilly said in an earnings release Tuesday. Zepbound, for its part, generated $175.8 million during its first quarter on the market. Overall, Lilly reeled in around $9.4 billion in fourth-quarter sales, growing 28% over the $7.3 billion it made for the quarter in 2022.
Entities: Eli Lilly, Novo Nordisk, Tirzepatide, Semaglutide, GLP-1, GIP, FDA, Mounjaro, Zepbound
Output:
{
    "f1": {
        "fact": "Eli Lilly's tirzepatide is competing with Novo Nordisk's semaglutide franchise.",
        "triplets": [["Eli Lilly", "competing with", "Novo Nordisk"], ["Tirzepatide", "is competing with", "Semaglutide"]]
    },
    "f2": {
        "fact": "Eli Lilly is trying to show tirzepatide, the dual GIP/GLP-1 agonist, can strike out beyond diabetes and obesity.",
        "triplets": [["Eli Lilly", "is trying to show", "Tirzepatide"], ["Tirzepatide", "is a", "dual GIP/GLP-1 agonist"],
                     ["Tirzepatide", "can treat beyond", "Diabetes"], ["Tirzepatide", "can treat beyond", "Obesity"]]
    },
    "f3": {
        "fact": "Tirzepatide, under the brand name Mounjaro, received its first FDA approval for Type 2 diabetes in May 2022.",
        "triplets": [["Tirzepatide", "branded as", "Mounjaro"], ["Mounjaro", "won", "FDA approval"],
                     ["FDA approval", "for",  "Type 2 diabetes"], ["FDA approval", "was in", "May 2022"]]
    },
    "f4": {
        "fact": "Tirzepatide, under the brand name Zepbound, received an obesity approval in November 2022.",
        "triplets": [["Tirzepatide", "was branded as", "Zepbound"], ["Zepbound", "received", "Obesity approval"],
                     ["Obesity approval", "was in", "November 2022"]]
    },
    "f5": {
        "fact": "Mounjaro generated $2.2 billion in sales in the fourth quarter of 2023, an eight-fold increase from the $279 million during the same period in 2022.",
        "triplets": [["Mounjaro", "2023's fourth quarter sales", "$2.2 billion sales"],
        ["Mounjaro", "2022's fourth quarter sales", "$279 million"]]
    },
    "f6": {
        "fact": "Mounjaro brought in around $5.2 billion in revenues year-to-date in 2023, Lilly said in an earnings release Tuesday",
        "triplets": [["Mounjaro", "2023 sales year-to-date", "$5.2 billion revenues"]]
    },
    "f7": {
        "fact": "Zepbound generated $175.8 million in sales in its first quarter on the market.",
        "triplets": [["Zepbound", "first quarter sales", "$175.8 million"]]
    },
    "f8": {
        "fact": "Eli Lilly's fourth-quarter sales were around $9.4 billion, a 28% increase over the $7.3 billion during the same period in 2022.",
        "triplets": [["Eli Lilly", "2023 fourth-quarter sales", "$9.4 billion,"],
        ["Eli Lilly", "2022 fourth-quarter sales", "$7.3 billion,"]]
    }
}

Paragraph: {{paragraph}}
Entities: {{entities}}
Output:
"#;

const SUMMARIZE: &str = "Summarize the provided text, including as many key details as needed.\n\n{{text}}\n";

const TOPIC: &str =
    "Identify the high-level topic of this paragraph as concise as possible.\n\nParagraph: {{paragraph}}\n";

const QA_ANSWER: &str = "{{context}}\n\nQuestion: {{question}}\nAnswer this question in as fewer number of words as possible.\n";

const HIERARCHY_LABEL: &str = r#"Classify the abstractiveness of the text chunk below.
- low: the chunk describes fine-grained details about a topic.
- high: the chunk gives an overview of a topic and summarizes fine-grained details.
Respond with exactly one word: low or high.

Chunk: {{paragraph}}
Label:
"#;
