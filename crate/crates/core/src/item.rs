use std::fmt;

use serde::{Deserialize, Serialize};

use crate::convo::{PresenceEvent, Utterance};
use crate::world::{AnnotatedContext, ContextKind, Event};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    #[serde(rename = "first_order_TB")]
    FirstOrderTrueBelief,
    #[serde(rename = "first_order_FB")]
    FirstOrderFalseBelief,
    #[serde(rename = "second_order_TB")]
    SecondOrderTrueBelief,
    #[serde(rename = "second_order_FB")]
    SecondOrderFalseBelief,
    Reality,
    Memory,
    BeliefChoice,
    BeliefDist,
    AnswerabilityList,
    AnswerabilityYn,
    InfoaccessList,
    InfoaccessYn,
}

impl QuestionType {
    pub const TOMI_BELIEF: [QuestionType; 4] = [
        QuestionType::FirstOrderTrueBelief,
        QuestionType::FirstOrderFalseBelief,
        QuestionType::SecondOrderTrueBelief,
        QuestionType::SecondOrderFalseBelief,
    ];

    /// The six question types of one conversation question set.
    pub const FANTOM_SET: [QuestionType; 6] = [
        QuestionType::BeliefChoice,
        QuestionType::BeliefDist,
        QuestionType::AnswerabilityList,
        QuestionType::AnswerabilityYn,
        QuestionType::InfoaccessList,
        QuestionType::InfoaccessYn,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            QuestionType::FirstOrderTrueBelief => "first_order_TB",
            QuestionType::FirstOrderFalseBelief => "first_order_FB",
            QuestionType::SecondOrderTrueBelief => "second_order_TB",
            QuestionType::SecondOrderFalseBelief => "second_order_FB",
            QuestionType::Reality => "reality",
            QuestionType::Memory => "memory",
            QuestionType::BeliefChoice => "belief_choice",
            QuestionType::BeliefDist => "belief_dist",
            QuestionType::AnswerabilityList => "answerability_list",
            QuestionType::AnswerabilityYn => "answerability_yn",
            QuestionType::InfoaccessList => "infoaccess_list",
            QuestionType::InfoaccessYn => "infoaccess_yn",
        }
    }

    pub fn parse(s: &str) -> Option<QuestionType> {
        QuestionType::TOMI_BELIEF
            .iter()
            .chain(QuestionType::FANTOM_SET.iter())
            .chain([QuestionType::Reality, QuestionType::Memory].iter())
            .copied()
            .find(|q| q.as_str().eq_ignore_ascii_case(s))
    }

    pub fn is_tomi_belief(&self) -> bool {
        Self::TOMI_BELIEF.contains(self)
    }

    /// Length of the target chain a ToMi belief question nests over.
    pub fn belief_order(&self) -> Option<usize> {
        match self {
            QuestionType::FirstOrderTrueBelief | QuestionType::FirstOrderFalseBelief => Some(1),
            QuestionType::SecondOrderTrueBelief | QuestionType::SecondOrderFalseBelief => Some(2),
            _ => None,
        }
    }

    pub fn scenario(&self) -> Option<Scenario> {
        match self {
            QuestionType::FirstOrderTrueBelief | QuestionType::SecondOrderTrueBelief => {
                Some(Scenario::TrueBelief)
            }
            QuestionType::FirstOrderFalseBelief | QuestionType::SecondOrderFalseBelief => {
                Some(Scenario::FalseBelief)
            }
            _ => None,
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    TrueBelief,
    FalseBelief,
}

impl Scenario {
    pub fn short(&self) -> &'static str {
        match self {
            Scenario::TrueBelief => "TB",
            Scenario::FalseBelief => "FB",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChoiceLabel {
    A,
    B,
}

impl ChoiceLabel {
    pub fn letter(&self) -> char {
        match self {
            ChoiceLabel::A => 'a',
            ChoiceLabel::B => 'b',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GoldAnswer {
    /// Location answer: the believed container (in `room`) against the alternative.
    ContainerPair {
        correct: String,
        foil: Option<String>,
        room: String,
    },
    Choice {
        label: ChoiceLabel,
        option_a: String,
        option_b: String,
    },
    YesNo {
        yes: bool,
    },
    /// `cast` lists every character of the conversation; only those count as names.
    NameSet {
        names: Vec<String>,
        cast: Vec<String>,
    },
    FreeTextPair {
        gold_text: String,
        wrong_text: String,
    },
}

impl GoldAnswer {
    /// The answer a perfect respondent would give.
    pub fn canonical_answer(&self) -> String {
        match self {
            GoldAnswer::ContainerPair { correct, room, .. } => format!("In the {correct} in the {room}."),
            GoldAnswer::Choice { label, .. } => format!("({})", label.letter()),
            GoldAnswer::YesNo { yes } => if *yes { "Yes." } else { "No." }.to_string(),
            GoldAnswer::NameSet { names, .. } => {
                if names.is_empty() {
                    "None of them.".to_string()
                } else {
                    names.join(", ")
                }
            }
            GoldAnswer::FreeTextPair { gold_text, .. } => gold_text.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub question_id: String,
    pub qtype: QuestionType,
    /// Ordered agents the question nests over; empty for reality, memory and list questions.
    pub target_chain: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    /// The piece of information a conversation question set is about.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_info: Option<String>,
    pub surface_text: String,
    pub gold: GoldAnswer,
}

impl Question {
    /// Question block as it appears at the end of every answering prompt.
    pub fn query_block(&self) -> String {
        let mut out = String::new();
        match self.qtype {
            QuestionType::AnswerabilityList | QuestionType::AnswerabilityYn => {
                if let Some(info) = &self.target_info {
                    out.push_str(&format!("Target: {info}\n"));
                }
            }
            QuestionType::InfoaccessList | QuestionType::InfoaccessYn => {
                if let Some(info) = &self.target_info {
                    out.push_str(&format!("Information: {info}\n"));
                }
            }
            _ => {}
        }
        out.push_str("Question: ");
        out.push_str(&self.surface_text);
        match &self.gold {
            GoldAnswer::Choice {
                option_a, option_b, ..
            } => {
                out.push_str(&format!("\n(a) {option_a}\n(b) {option_b}"));
            }
            _ => out.push_str("\nAnswer:"),
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Generated,
    Ingested,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationSource {
    /// Computed from the event log or presence events.
    Derived,
    /// Supplied with an ingested record and taken as-is.
    Provided,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum ItemDetails {
    Story {
        events: Vec<Event>,
    },
    Conversation {
        utterances: Vec<Utterance>,
        presence_events: Vec<PresenceEvent>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub item_id: String,
    pub context: AnnotatedContext,
    pub annotation: AnnotationSource,
    pub raw_context_text: String,
    pub questions: Vec<Question>,
    #[serde(default)]
    pub scenario: Option<Scenario>,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_set_id: Option<String>,
    pub cast: Vec<String>,
    pub details: ItemDetails,
}

impl BenchmarkItem {
    pub fn kind(&self) -> ContextKind {
        self.context.kind
    }

    pub fn question(&self, question_id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.question_id == question_id)
    }

    pub fn events(&self) -> Option<&[Event]> {
        match &self.details {
            ItemDetails::Story { events } => Some(events),
            ItemDetails::Conversation { .. } => None,
        }
    }
}
