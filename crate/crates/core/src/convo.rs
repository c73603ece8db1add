//! Multi-party conversations: transcript parsing, presence intervals and
//! per-utterance audiences, plus a small template generator for
//! desk-scale conversation question sets.
//!
//! Presence follows two boundary rules. A join takes effect at the joining
//! agent's first utterance. A leave takes effect after the farewell
//! utterance, which the departing agent still hears in full. Agents whose
//! first presence event is not a join are present from the first line.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::item::{
    AnnotationSource, BenchmarkItem, ChoiceLabel, GoldAnswer, ItemDetails, Question, QuestionType, Scenario,
    Source,
};
use crate::world::{AnnotatedContext, AnnotatedUnit, ContextKind, PerceiverSet};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConvoError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("presence violation at utterance {index}: {reason}")]
    PresenceViolation { index: usize, reason: String },
    #[error("invalid conversation config: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub index: usize,
    pub speaker: String,
    /// Full line, including the `Speaker: ` prefix.
    pub text: String,
}

impl Utterance {
    pub fn new(index: usize, speaker: &str, words: &str) -> Self {
        Utterance {
            index,
            speaker: speaker.to_string(),
            text: format!("{speaker}: {words}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresenceAction {
    Join,
    Leave,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresenceEvent {
    pub agent: String,
    pub action: PresenceAction,
    /// Join: first utterance heard. Leave: last utterance heard.
    pub at_utterance_index: usize,
}

/// Agents in order of first appearance (speaking or presence event).
pub fn cast_of(utterances: &[Utterance], presence: &[PresenceEvent]) -> Vec<String> {
    fn note<'a>(pos: usize, tie: usize, name: &'a str, seen: &mut Vec<(usize, usize, &'a str)>) {
        if let Some(entry) = seen.iter_mut().find(|(_, _, n)| *n == name) {
            if (pos, tie) < (entry.0, entry.1) {
                entry.0 = pos;
                entry.1 = tie;
            }
        } else {
            seen.push((pos, tie, name));
        }
    }
    let mut first_seen: Vec<(usize, usize, &str)> = Vec::new();
    for u in utterances {
        note(u.index, 1, &u.speaker, &mut first_seen);
    }
    for p in presence {
        note(p.at_utterance_index, 0, &p.agent, &mut first_seen);
    }
    // Speakers first by their first line; stable for everything else.
    first_seen.sort_by_key(|&(pos, tie, _)| (pos, tie));
    first_seen.into_iter().map(|(_, _, n)| n.to_string()).collect()
}

/// Closed presence intervals per agent, `end` inclusive.
fn presence_intervals(
    cast: &[String],
    presence: &[PresenceEvent],
    n_utterances: usize,
) -> Result<BTreeMap<String, Vec<(usize, usize)>>, ConvoError> {
    let last = n_utterances.saturating_sub(1);
    let mut out = BTreeMap::new();
    for agent in cast {
        let events: Vec<&PresenceEvent> = presence.iter().filter(|p| &p.agent == agent).collect();
        for pair in events.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if a.action == b.action {
                return Err(ConvoError::PresenceViolation {
                    index: b.at_utterance_index,
                    reason: format!("{agent} {:?}s twice in a row", b.action).to_lowercase(),
                });
            }
            let ok = match b.action {
                // A rejoin must come strictly after the farewell line.
                PresenceAction::Join => b.at_utterance_index > a.at_utterance_index,
                PresenceAction::Leave => b.at_utterance_index >= a.at_utterance_index,
            };
            if !ok {
                return Err(ConvoError::PresenceViolation {
                    index: b.at_utterance_index,
                    reason: format!("presence events for {agent} are out of order"),
                });
            }
        }
        let mut intervals = Vec::new();
        let mut open: Option<usize> = match events.first() {
            Some(e) if e.action == PresenceAction::Join => None,
            _ => Some(0),
        };
        for e in events {
            if e.at_utterance_index >= n_utterances {
                return Err(ConvoError::PresenceViolation {
                    index: e.at_utterance_index,
                    reason: format!("presence event for {agent} points past the last utterance"),
                });
            }
            match e.action {
                PresenceAction::Join => open = Some(e.at_utterance_index),
                PresenceAction::Leave => {
                    let start = open.take().expect("alternation checked above");
                    intervals.push((start, e.at_utterance_index));
                }
            }
        }
        if let Some(start) = open {
            if n_utterances > 0 {
                intervals.push((start, last));
            }
        }
        out.insert(agent.clone(), intervals);
    }
    Ok(out)
}

/// Audience of every utterance: speaker first, then everyone else present
/// in cast order.
pub fn map_perceivers(
    utterances: &[Utterance],
    presence: &[PresenceEvent],
) -> Result<AnnotatedContext, ConvoError> {
    let cast = cast_of(utterances, presence);
    let intervals = presence_intervals(&cast, presence, utterances.len())?;
    let present = |agent: &str, i: usize| {
        intervals
            .get(agent)
            .is_some_and(|iv| iv.iter().any(|&(s, e)| s <= i && i <= e))
    };
    let mut units = Vec::with_capacity(utterances.len());
    for (i, u) in utterances.iter().enumerate() {
        if u.index != i {
            return Err(ConvoError::PresenceViolation {
                index: i,
                reason: format!("utterance carries index {}", u.index),
            });
        }
        if !present(&u.speaker, i) {
            return Err(ConvoError::PresenceViolation {
                index: i,
                reason: format!("{} speaks while absent", u.speaker),
            });
        }
        let mut perceivers = PerceiverSet::new();
        perceivers.insert(&u.speaker);
        for agent in &cast {
            if present(agent, i) {
                perceivers.insert(agent);
            }
        }
        units.push(AnnotatedUnit {
            text: u.text.clone(),
            perceivers,
        });
    }
    Ok(AnnotatedContext {
        kind: ContextKind::Conversation,
        units,
    })
}

static MARKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\[\[\s*(join|leave)\s+([^@\]]+?)\s*(?:@\s*(\d+)\s*)?\]\]$").expect("marker regex")
});
static LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([^:\[\]]{1,60}?)\s*:\s*(\S.*)$").expect("line regex"));

/// Parses `Name: words` lines and `[[join NAME]]` / `[[leave NAME]]` marker
/// lines. Markers may pin an utterance index with `@k`; otherwise a leave
/// applies to the line just before the marker and a join to the agent's
/// next line. Blank lines are ignored.
pub fn parse_transcript(text: &str) -> Result<(Vec<Utterance>, Vec<PresenceEvent>), ConvoError> {
    let mut utterances: Vec<Utterance> = Vec::new();
    // (line number, agent, explicit index) of joins waiting for the agent to speak.
    let mut pending_joins: Vec<(usize, String, usize)> = Vec::new();
    let mut presence: Vec<(usize, PresenceEvent)> = Vec::new();

    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(cap) = MARKER.captures(line) {
            let agent = cap[2].trim().to_string();
            let explicit = cap.get(3).map(|m| m.as_str().parse::<usize>()).transpose().map_err(|e| {
                ConvoError::Parse {
                    line: line_no,
                    reason: e.to_string(),
                }
            })?;
            match (&cap[1], explicit) {
                ("leave", Some(k)) | ("join", Some(k)) => {
                    let action = if &cap[1] == "leave" {
                        PresenceAction::Leave
                    } else {
                        PresenceAction::Join
                    };
                    presence.push((
                        line_no,
                        PresenceEvent {
                            agent,
                            action,
                            at_utterance_index: k,
                        },
                    ));
                }
                ("leave", None) => {
                    let k = utterances.len().checked_sub(1).ok_or_else(|| ConvoError::Parse {
                        line: line_no,
                        reason: format!("leave marker for {agent} before any utterance"),
                    })?;
                    presence.push((
                        line_no,
                        PresenceEvent {
                            agent,
                            action: PresenceAction::Leave,
                            at_utterance_index: k,
                        },
                    ));
                }
                _ => pending_joins.push((line_no, agent, utterances.len())),
            }
            continue;
        }
        if line.starts_with("[[") {
            return Err(ConvoError::Parse {
                line: line_no,
                reason: format!("unrecognized marker `{line}`"),
            });
        }
        let cap = LINE.captures(line).ok_or_else(|| ConvoError::Parse {
            line: line_no,
            reason: format!("expected `Name: words`, found `{line}`"),
        })?;
        let speaker = cap[1].trim().to_string();
        let index = utterances.len();
        if let Some(pos) = pending_joins.iter().position(|(_, a, _)| *a == speaker) {
            let (marker_line, agent, _) = pending_joins.remove(pos);
            presence.push((
                marker_line,
                PresenceEvent {
                    agent,
                    action: PresenceAction::Join,
                    at_utterance_index: index,
                },
            ));
        }
        utterances.push(Utterance::new(index, &speaker, &cap[2]));
    }

    if let Some((line, agent, _)) = pending_joins.into_iter().next() {
        return Err(ConvoError::Parse {
            line,
            reason: format!("{agent} joins but never speaks afterwards"),
        });
    }
    presence.sort_by_key(|(line, _)| *line);
    Ok((utterances, presence.into_iter().map(|(_, p)| p).collect()))
}

struct FactTemplate {
    statement: &'static str,
    recap: &'static str,
    info: &'static str,
    question: &'static str,
    topic: &'static str,
}

const FACTS: &[FactTemplate] = &[
    FactTemplate {
        statement: "I adopted a parrot named Kiwi last week.",
        recap: "I was just saying that I adopted a parrot named Kiwi last week.",
        info: "{T} adopted a parrot named Kiwi last week.",
        question: "What pet did {T} adopt last week?",
        topic: "what pet {T} adopted last week",
    },
    FactTemplate {
        statement: "I finally booked a trip to Lisbon for October.",
        recap: "I was just telling everyone that I booked a trip to Lisbon for October.",
        info: "{T} booked a trip to Lisbon for October.",
        question: "Where is {T} travelling in October?",
        topic: "where {T} is travelling in October",
    },
    FactTemplate {
        statement: "I started taking pottery classes on Thursday evenings.",
        recap: "We were talking about how I started taking pottery classes on Thursday evenings.",
        info: "{T} started taking pottery classes on Thursday evenings.",
        question: "What class did {T} start taking?",
        topic: "what class {T} started taking",
    },
    FactTemplate {
        statement: "I got a new job as a librarian downtown.",
        recap: "I was just sharing that I got a new job as a librarian downtown.",
        info: "{T} got a new job as a librarian downtown.",
        question: "What new job did {T} get?",
        topic: "what new job {T} got",
    },
    FactTemplate {
        statement: "My sister is getting married in the spring.",
        recap: "I was just mentioning that my sister is getting married in the spring.",
        info: "{T}'s sister is getting married in the spring.",
        question: "Who is getting married in the spring?",
        topic: "who is getting married in the spring",
    },
    FactTemplate {
        statement: "I have been learning to play the cello since January.",
        recap: "I was telling them that I have been learning the cello since January.",
        info: "{T} has been learning to play the cello since January.",
        question: "What instrument has {T} been learning since January?",
        topic: "what instrument {T} has been learning since January",
    },
];

const GREETINGS: &[&str] = &[
    "Hi everyone, it's great to see you all.",
    "Hello! How has everyone been?",
    "Hey there, good to be here.",
    "Hi all, what have you been up to lately?",
    "Good to see you, everyone.",
    "Hey folks, long time no see.",
];
const FAREWELL_REPLIES: &[&str] = &[
    "Sure thing, {L}. Take care!",
    "Catch you later, {L}.",
    "See you soon, {L}.",
    "Bye for now, {L}.",
    "Talk soon, {L}.",
];
const SMALL_TALK: &[&str] = &[
    "Has anyone seen a good movie lately?",
    "The weather has been lovely this week.",
    "I tried a new bakery on the corner yesterday.",
    "My garden is finally starting to bloom.",
    "I have been reading a great mystery novel.",
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiniConvoConfig {
    pub rng_seed: u64,
    pub n_agents: usize,
    pub names: Vec<String>,
}

impl MiniConvoConfig {
    pub fn with_seed(rng_seed: u64) -> Self {
        MiniConvoConfig {
            rng_seed,
            n_agents: 3,
            names: [
                "Gianna", "Sara", "Javier", "Noah", "Emma", "Mateo", "Priya", "Kenji", "Aisha", "Leo",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        }
    }
}

/// A conversation with one question set about a single piece of information.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationItem {
    pub item_id: String,
    pub utterances: Vec<Utterance>,
    pub presence_events: Vec<PresenceEvent>,
    pub annotation: AnnotatedContext,
    pub questions: Vec<Question>,
    pub question_set_id: String,
    pub scenario: Scenario,
    /// Index of the utterance stating the fact, and of its restatement (true belief only).
    pub fact_utterances: Vec<usize>,
}

impl ConversationItem {
    pub fn into_benchmark_item(self) -> BenchmarkItem {
        let cast = cast_of(&self.utterances, &self.presence_events);
        BenchmarkItem {
            item_id: self.item_id,
            raw_context_text: render_conversation(&self.utterances),
            context: self.annotation,
            annotation: AnnotationSource::Derived,
            questions: self.questions,
            scenario: Some(self.scenario),
            source: Source::Generated,
            question_set_id: Some(self.question_set_id),
            cast,
            details: ItemDetails::Conversation {
                utterances: self.utterances,
                presence_events: self.presence_events,
            },
        }
    }
}

pub fn render_conversation(utterances: &[Utterance]) -> String {
    utterances
        .iter()
        .map(|u| u.text.as_str())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Generates a templated conversation in which one agent leaves, a fact is
/// shared during the absence, and the agent rejoins. In the true-belief
/// variant the fact is restated to the returning agent.
pub fn generate_mini_conversation(
    config: &MiniConvoConfig,
    scenario: Scenario,
) -> Result<ConversationItem, ConvoError> {
    if config.n_agents < 3 {
        return Err(ConvoError::Config("a leave/rejoin pattern needs at least 3 agents".into()));
    }
    if config.names.len() < config.n_agents {
        return Err(ConvoError::Config("not enough names".into()));
    }
    if config.n_agents > GREETINGS.len() || config.n_agents > FAREWELL_REPLIES.len() + 1 {
        return Err(ConvoError::Config(format!(
            "at most {} agents are supported",
            GREETINGS.len().min(FAREWELL_REPLIES.len() + 1)
        )));
    }
    let salt: u64 = match scenario {
        Scenario::TrueBelief => 0x7B,
        Scenario::FalseBelief => 0xFB,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed.wrapping_mul(0xA24B_AED4_963E_E407) ^ salt);
    let cast: Vec<String> = config
        .names
        .choose_multiple(&mut rng, config.n_agents)
        .cloned()
        .collect();
    let leaver = cast[rng.random_range(1..cast.len())].clone();
    let others: Vec<&String> = cast.iter().filter(|a| **a != leaver).collect();
    let teller = others[rng.random_range(0..others.len())].clone();
    let listener = others.iter().find(|a| ***a != teller).expect("3+ agents").to_string();
    let fact = FACTS.choose(&mut rng).expect("facts");
    let fill = |s: &str| s.replace("{T}", &teller).replace("{L}", &leaver);

    let mut lines: Vec<(String, String)> = Vec::new();
    let mut greetings: Vec<&str> = GREETINGS.to_vec();
    greetings.shuffle(&mut rng);
    for (agent, greeting) in cast.iter().zip(greetings) {
        lines.push((agent.clone(), greeting.to_string()));
    }
    lines.push((
        leaver.clone(),
        "Sorry, I need to step away for a little while. Talk to you later!".into(),
    ));
    let mut replies: Vec<&str> = FAREWELL_REPLIES.to_vec();
    replies.shuffle(&mut rng);
    for (agent, reply) in others.iter().zip(replies) {
        lines.push((agent.to_string(), fill(reply)));
    }
    let leave_at = lines.len() - 1;

    let fact_at = lines.len();
    lines.push((teller.clone(), fact.statement.to_string()));
    lines.push((listener.clone(), format!("That's wonderful, {teller}! Tell us more.")));
    lines.push((teller.clone(), "It has been a lot of fun so far.".into()));

    let rejoin_at = lines.len();
    lines.push((leaver.clone(), "Hey everyone, I'm back. What did I miss?".into()));
    let mut fact_utterances = vec![fact_at];
    match scenario {
        Scenario::TrueBelief => {
            fact_utterances.push(lines.len());
            lines.push((teller.clone(), format!("Welcome back, {leaver}! {}", fact.recap)));
            lines.push((leaver.clone(), "Oh, that's great news!".into()));
        }
        Scenario::FalseBelief => {
            lines.push((listener.clone(), "Not much, we were just catching up.".into()));
        }
    }
    let talk = SMALL_TALK.choose(&mut rng).expect("small talk");
    lines.push((teller.clone(), format!("Anyway, {}", lowercase_first(talk))));
    lines.push((listener.clone(), "This was a great chat, everyone.".into()));

    let utterances: Vec<Utterance> = lines
        .iter()
        .enumerate()
        .map(|(i, (who, words))| Utterance::new(i, who, words))
        .collect();
    let presence_events = vec![
        PresenceEvent {
            agent: leaver.clone(),
            action: PresenceAction::Leave,
            at_utterance_index: leave_at,
        },
        PresenceEvent {
            agent: leaver.clone(),
            action: PresenceAction::Join,
            at_utterance_index: rejoin_at,
        },
    ];
    let annotation = map_perceivers(&utterances, &presence_events)?;

    let item_id = format!("convo-{}-{}", scenario.short().to_lowercase(), config.rng_seed);
    let knowers = knowers_of(&annotation, &fact_utterances, &cast);
    let leaver_knows = knowers.contains(&leaver);
    let info = fill(fact.info);
    let target_question = fill(fact.question);
    let topic = fill(fact.topic);
    let believes = format!("{leaver} believes that {info}");
    let unaware = format!("{leaver} is unaware of {topic}.");
    let (right, wrong) = if leaver_knows {
        (believes.clone(), unaware.clone())
    } else {
        (unaware.clone(), believes.clone())
    };
    let right_is_a = rng.random_bool(0.5);
    let (label, option_a, option_b) = if right_is_a {
        (ChoiceLabel::A, right.clone(), wrong.clone())
    } else {
        (ChoiceLabel::B, wrong.clone(), right.clone())
    };

    let q = |qtype: QuestionType, chain: Vec<String>, info: Option<String>, text: String, gold: GoldAnswer| Question {
        question_id: format!("{item_id}-{}", qtype.as_str()),
        qtype,
        target_chain: chain,
        object: None,
        target_info: info,
        surface_text: text,
        gold,
    };
    let l = vec![leaver.clone()];
    let questions = vec![
        q(
            QuestionType::BeliefChoice,
            l.clone(),
            Some(target_question.clone()),
            format!("What does {leaver} believe about {topic}? Choose between (a) and (b). Do not include any explanation."),
            GoldAnswer::Choice {
                label,
                option_a,
                option_b,
            },
        ),
        q(
            QuestionType::BeliefDist,
            l.clone(),
            Some(target_question.clone()),
            format!("What does {leaver} believe about {topic}? Answer in one sentence."),
            GoldAnswer::FreeTextPair {
                gold_text: right,
                wrong_text: wrong,
            },
        ),
        q(
            QuestionType::AnswerabilityList,
            vec![],
            Some(target_question.clone()),
            "List all the characters who know the precise correct answer to this question.".into(),
            GoldAnswer::NameSet {
                names: knowers.clone(),
                cast: cast.clone(),
            },
        ),
        q(
            QuestionType::AnswerabilityYn,
            l.clone(),
            Some(target_question),
            format!("Does {leaver} know the precise correct answer to this question? Answer yes or no."),
            GoldAnswer::YesNo { yes: leaver_knows },
        ),
        q(
            QuestionType::InfoaccessList,
            vec![],
            Some(info.clone()),
            "List all the characters who know this information.".into(),
            GoldAnswer::NameSet {
                names: knowers,
                cast: cast.clone(),
            },
        ),
        q(
            QuestionType::InfoaccessYn,
            l,
            Some(info),
            format!("Does {leaver} know about this information? Answer yes or no."),
            GoldAnswer::YesNo { yes: leaver_knows },
        ),
    ];

    Ok(ConversationItem {
        question_set_id: item_id.clone(),
        item_id,
        utterances,
        presence_events,
        annotation,
        questions,
        scenario,
        fact_utterances,
    })
}

/// Cast members who heard any of the given utterances, in cast order.
pub fn knowers_of(annotation: &AnnotatedContext, fact_utterances: &[usize], cast: &[String]) -> Vec<String> {
    cast.iter()
        .filter(|a| {
            fact_utterances
                .iter()
                .any(|&i| annotation.units[i].perceivers.contains(a))
        })
        .cloned()
        .collect()
}

fn lowercase_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(ctx: &AnnotatedContext, i: usize) -> Vec<&str> {
        ctx.units[i].perceivers.names().iter().map(String::as_str).collect()
    }

    #[test]
    fn monologue_is_heard_by_the_speaker_only() {
        let (u, p) = parse_transcript("Ann: one\nAnn: two\nAnn: three").unwrap();
        let ctx = map_perceivers(&u, &p).unwrap();
        assert!(p.is_empty());
        for i in 0..3 {
            assert_eq!(names(&ctx, i), ["Ann"]);
        }
    }

    #[test]
    fn plain_transcript_has_no_presence_events() {
        let (u, p) = parse_transcript("A: hi\nB: hello\nC: hey").unwrap();
        assert_eq!(u.len(), 3);
        assert!(p.is_empty());
        assert_eq!(u[1].text, "B: hello");
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let err = parse_transcript("A: hi\n\nno colon here").unwrap_err();
        assert_eq!(
            err,
            ConvoError::Parse {
                line: 3,
                reason: "expected `Name: words`, found `no colon here`".into()
            }
        );
    }

    #[test]
    fn explicit_leave_index_keeps_the_farewell() {
        let text = "Gianna: hi\nSara: hello\nGianna: bye all\nSara: bye\n[[leave Gianna @2]]\nSara: alone now";
        let (u, p) = parse_transcript(text).unwrap();
        assert_eq!(
            p,
            vec![PresenceEvent {
                agent: "Gianna".into(),
                action: PresenceAction::Leave,
                at_utterance_index: 2
            }]
        );
        let ctx = map_perceivers(&u, &p).unwrap();
        assert!(ctx.units[2].perceivers.contains("Gianna"));
        assert!(!ctx.units[3].perceivers.contains("Gianna"));
        assert_eq!(names(&ctx, 4), ["Sara"]);
    }

    #[test]
    fn speaking_while_absent_is_a_violation() {
        let text = "A: hi\nB: hello\n[[leave B]]\nA: so\nB: I'm back";
        let (u, p) = parse_transcript(text).unwrap();
        assert!(matches!(
            map_perceivers(&u, &p),
            Err(ConvoError::PresenceViolation { index: 3, .. })
        ));
    }

    #[test]
    fn double_leave_is_a_violation() {
        let text = "A: hi\nB: hello\n[[leave B]]\nA: so\n[[leave B]]\nA: ok";
        let (u, p) = parse_transcript(text).unwrap();
        assert!(matches!(
            map_perceivers(&u, &p),
            Err(ConvoError::PresenceViolation { .. })
        ));
    }

    #[test]
    fn join_without_later_line_is_a_parse_error() {
        assert!(matches!(
            parse_transcript("A: hi\n[[join B]]\nA: anyone?"),
            Err(ConvoError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_transcript("[[leave B]]\nA: hi"),
            Err(ConvoError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_transcript("A: hi\n[[wander B]]"),
            Err(ConvoError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn late_joiner_hears_from_first_line_on() {
        let text = "A: hi\nB: hello\n[[join C]]\nA: chatting\nC: you two sound busy\nB: welcome";
        let (u, p) = parse_transcript(text).unwrap();
        assert_eq!(p[0].at_utterance_index, 3);
        let ctx = map_perceivers(&u, &p).unwrap();
        assert_eq!(names(&ctx, 2), ["A", "B"]);
        assert_eq!(names(&ctx, 3), ["C", "A", "B"]);
        assert_eq!(names(&ctx, 4), ["B", "A", "C"]);
    }

    #[test]
    fn generated_false_belief_sets_exclude_the_absent_agent() {
        for seed in 0..50 {
            let item = generate_mini_conversation(&MiniConvoConfig::with_seed(seed), Scenario::FalseBelief).unwrap();
            let present: Vec<String> = item.annotation.units[item.fact_utterances[0]]
                .perceivers
                .names()
                .to_vec();
            let gold = item
                .questions
                .iter()
                .find(|q| q.qtype == QuestionType::AnswerabilityList)
                .unwrap();
            match &gold.gold {
                GoldAnswer::NameSet { names, .. } => {
                    let mut a = names.clone();
                    let mut b = present.clone();
                    a.sort();
                    b.sort();
                    assert_eq!(a, b);
                    assert!(!names.contains(&gold_chain_agent(&item)));
                }
                _ => unreachable!(),
            }
        }
    }

    fn gold_chain_agent(item: &ConversationItem) -> String {
        item.questions[0].target_chain[0].clone()
    }

    #[test]
    fn generated_true_belief_informs_the_returning_agent() {
        for seed in 0..50 {
            let item = generate_mini_conversation(&MiniConvoConfig::with_seed(seed), Scenario::TrueBelief).unwrap();
            let leaver = gold_chain_agent(&item);
            let q = item
                .questions
                .iter()
                .find(|q| q.qtype == QuestionType::InfoaccessList)
                .unwrap();
            match &q.gold {
                GoldAnswer::NameSet { names, .. } => assert!(names.contains(&leaver)),
                _ => unreachable!(),
            }
            assert_eq!(item.annotation.duplicate_text(), None);
        }
    }

    #[test]
    fn too_few_agents_is_a_config_error() {
        let mut cfg = MiniConvoConfig::with_seed(1);
        cfg.n_agents = 2;
        assert!(matches!(
            generate_mini_conversation(&cfg, Scenario::TrueBelief),
            Err(ConvoError::Config(_))
        ));
    }
}
