//! Procedural ToMi-style stories with belief questions and gold annotations.

use std::collections::{HashMap, HashSet};
use std::sync::LazyLock;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::item::{
    AnnotationSource, BenchmarkItem, GoldAnswer, ItemDetails, Question, QuestionType, Scenario, Source,
};
use crate::world::{
    annotate_story, replay, simulate_belief_annotated, AnnotatedContext, Event, EventKind, WorldError,
};

#[derive(Debug, Error)]
pub enum StoryError {
    #[error("invalid story config: {0}")]
    Config(String),
    #[error("sentence {index} does not match a story template: `{text}`")]
    Parse { index: usize, text: String },
    #[error(transparent)]
    World(#[from] WorldError),
}

const NAMES: &[&str] = &[
    "Ella", "Lucas", "Benjamin", "Olivia", "James", "Lily", "Noah", "Emma", "Amelia", "Jack", "Mia",
    "Owen", "Hannah", "Logan", "Chloe", "Aria", "Liam", "Ava", "Ethan", "Sophia",
];
const OBJECTS: &[&str] = &[
    "boots", "suit", "sweatshirt", "slacks", "skirt", "celery", "marble", "apple", "banana", "cap",
    "gloves", "hat", "jacket", "lettuce", "lime", "melon", "onion", "orange", "peach", "pear",
    "potato", "scarf", "shoes", "socks", "spinach", "sweater", "tie", "tomato", "belt", "coat",
    "carrot", "cucumber", "corn", "grapefruit", "pineapple", "plum", "strawberry", "tangerine",
    "trousers", "turnip", "watermelon", "radish", "pumpkin", "shirt", "jeans", "pajamas",
];
const CONTAINERS: &[&str] = &[
    "cupboard", "pantry", "basket", "bathtub", "box", "bucket", "cabinet", "crate", "drawer",
    "envelope", "suitcase", "bottle", "treasure_chest", "tub", "closet",
];
const ROOMS: &[&str] = &[
    "cellar", "porch", "kitchen", "garden", "hall", "lounge", "attic", "office", "bedroom",
    "bathroom", "laundry", "playroom", "garage", "sunroom", "staircase", "workshop", "basement",
    "den", "dining_room", "master_bedroom",
];
const OPINION_VERBS: &[&str] = &["likes", "loves", "hates", "dislikes"];

fn to_owned(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub names: Vec<String>,
    pub objects: Vec<String>,
    pub containers: Vec<String>,
    pub rooms: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary {
            names: to_owned(NAMES),
            objects: to_owned(OBJECTS),
            containers: to_owned(CONTAINERS),
            rooms: to_owned(ROOMS),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoryConfig {
    pub rng_seed: u64,
    pub n_rooms: usize,
    pub n_agents: usize,
    pub n_distractors: usize,
    /// Also attach reality and memory questions.
    #[serde(default)]
    pub control_questions: bool,
    #[serde(default)]
    pub vocabulary: Vocabulary,
}

impl Default for StoryConfig {
    fn default() -> Self {
        StoryConfig {
            rng_seed: 0,
            n_rooms: 2,
            n_agents: 3,
            n_distractors: 1,
            control_questions: false,
            vocabulary: Vocabulary::default(),
        }
    }
}

impl StoryConfig {
    pub fn with_seed(rng_seed: u64) -> Self {
        StoryConfig {
            rng_seed,
            ..Self::default()
        }
    }

    fn validate(&self, qtype: QuestionType) -> Result<(), StoryError> {
        let order = qtype.belief_order().ok_or_else(|| {
            StoryError::Config(format!("{qtype} is not a story belief question type"))
        })?;
        let min_agents = if order == 2 { 3 } else { 2 };
        let v = &self.vocabulary;
        let checks = [
            (self.n_rooms >= 2, "n_rooms must be at least 2".to_string()),
            (
                self.n_agents >= min_agents,
                format!("{qtype} needs at least {min_agents} agents"),
            ),
            (v.names.len() >= self.n_agents, "not enough names".to_string()),
            (v.rooms.len() >= self.n_rooms, "not enough rooms".to_string()),
            (v.containers.len() >= 2, "need at least two containers".to_string()),
            (
                v.objects.len() >= 1 + usize::from(self.n_distractors > 0),
                "not enough objects".to_string(),
            ),
            (
                self.n_distractors <= self.n_agents * (v.objects.len().saturating_sub(1)),
                "too many distractors for the vocabulary".to_string(),
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(StoryError::Config(msg));
            }
        }
        let mut all: Vec<&String> = v
            .names
            .iter()
            .chain(&v.objects)
            .chain(&v.containers)
            .chain(&v.rooms)
            .collect();
        all.sort();
        if let Some(w) = all.windows(2).find(|w| w[0] == w[1]) {
            return Err(StoryError::Config(format!("`{}` appears in two vocabularies", w[0])));
        }
        Ok(())
    }
}

fn question_rng(seed: u64, qtype: QuestionType) -> ChaCha8Rng {
    let salt = QuestionType::TOMI_BELIEF
        .iter()
        .position(|q| *q == qtype)
        .unwrap_or(7) as u64;
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (salt << 56 | salt))
}

pub fn location_question_text(chain: &[String], object: &str) -> String {
    let head = match chain {
        [a] => format!("Where will {a} look for the {object}?"),
        [a, b] => format!("Where does {a} think that {b} will look for the {object}?"),
        _ => format!("Where is the {object}?"),
    };
    format!("{head} State the most detailed position possible (e.g., in A in B). Answer in one sentence without explanation.")
}

/// Sentences joined in event order.
pub fn render_story(events: &[Event]) -> String {
    events
        .iter()
        .map(|e| e.surface_text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Generates one story realizing `qtype`.
///
/// The mover and the observer both witness the object's first placement.
/// In false-belief stories the observer leaves before the move; in
/// true-belief stories the observer is present for the move and the
/// declaration of the new container.
pub fn generate_story(config: &StoryConfig, qtype: QuestionType) -> Result<BenchmarkItem, StoryError> {
    config.validate(qtype)?;
    let mut rng = question_rng(config.rng_seed, qtype);
    let v = &config.vocabulary;
    let false_belief = qtype.scenario() == Some(Scenario::FalseBelief);

    let agents: Vec<&String> = v.names.choose_multiple(&mut rng, config.n_agents).collect();
    let rooms: Vec<&String> = v.rooms.choose_multiple(&mut rng, config.n_rooms).collect();
    let pair: Vec<&String> = v.containers.choose_multiple(&mut rng, 2).collect();
    let object = v.objects.choose(&mut rng).expect("validated");
    let (mover, observer) = (agents[0].as_str(), agents[1].as_str());
    let bystanders = &agents[2..];
    let main = rooms[0].as_str();
    let (first, second) = (pair[0].as_str(), pair[1].as_str());
    let elsewhere = |rng: &mut ChaCha8Rng| rooms[rng.random_range(1..rooms.len())].as_str();

    let mut events = Vec::new();

    let mut entries: Vec<Event> = vec![Event::enter(mover, main), Event::enter(observer, main)];
    let mut bystander_rooms = Vec::new();
    for b in bystanders {
        let room = if rng.random_bool(0.5) { main } else { elsewhere(&mut rng) };
        bystander_rooms.push((b.as_str(), room));
        entries.push(Event::enter(b, room));
    }
    entries.shuffle(&mut rng);
    events.extend(entries);

    events.push(Event::object_location(object, first));
    events.push(Event::container_location(first, main));

    for &(b, room) in &bystander_rooms {
        if rng.random_bool(0.3) {
            events.push(Event::exit(b, room));
        }
    }

    let observer_elsewhere = elsewhere(&mut rng);
    if false_belief {
        events.push(Event::exit(observer, main));
        if rng.random_bool(0.5) {
            events.push(Event::enter(observer, observer_elsewhere));
        }
    }

    events.push(Event::move_object(mover, object, first, second));
    events.push(Event::container_location(second, main));

    if !false_belief && rng.random_bool(0.5) {
        events.push(Event::exit(observer, main));
        if rng.random_bool(0.5) {
            events.push(Event::enter(observer, observer_elsewhere));
        }
    }
    if rng.random_bool(0.3) {
        events.push(Event::exit(mover, main));
    }

    insert_distractors(&mut events, config, &agents, object, &mut rng);

    let chain: Vec<String> = match qtype.belief_order() {
        Some(1) => vec![observer.to_string()],
        _ => vec![observer.to_string(), mover.to_string()],
    };
    let context = annotate_story(&events)?;
    let correct = simulate_belief_annotated(&events, &context, &chain, object)?;
    let foil = if correct == first { second } else { first };

    let item_id = format!("tomi-{}-{}", qtype.as_str(), config.rng_seed);
    let question = Question {
        question_id: format!("{item_id}-q0"),
        qtype,
        surface_text: location_question_text(&chain, object),
        target_chain: chain,
        object: Some(object.clone()),
        target_info: None,
        gold: GoldAnswer::ContainerPair {
            correct,
            foil: Some(foil.to_string()),
            room: main.to_string(),
        },
    };

    let mut item = story_item(item_id, events, context, vec![question], Source::Generated);
    item.scenario = qtype.scenario();
    if config.control_questions {
        let extra = make_reality_memory_questions(&item)?;
        item.questions.extend(extra);
    }
    Ok(item)
}

/// Agents in order of their first action.
fn story_cast(events: &[Event]) -> Vec<String> {
    let mut cast: Vec<String> = Vec::new();
    for e in events {
        if let Some(a) = e.kind.actant() {
            if !cast.iter().any(|c| c == a) {
                cast.push(a.to_string());
            }
        }
    }
    cast
}

fn story_item(
    item_id: String,
    events: Vec<Event>,
    context: AnnotatedContext,
    questions: Vec<Question>,
    source: Source,
) -> BenchmarkItem {
    BenchmarkItem {
        item_id,
        raw_context_text: render_story(&events),
        cast: story_cast(&events),
        context,
        annotation: AnnotationSource::Derived,
        scenario: questions.first().and_then(|q| q.qtype.scenario()),
        questions,
        source,
        question_set_id: None,
        details: ItemDetails::Story { events },
    }
}

static ENTER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(\w+) entered the (\w+)$").expect("static"));
static EXIT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(\w+) exited the (\w+)$").expect("static"));
static IS_IN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^The (\w+) is in the (\w+)$").expect("static"));
static MOVED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\w+) moved the (\w+) to the (\w+)$").expect("static"));
static OPINION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\w+) (likes|loves|hates|dislikes) the (\w+)$").expect("static"));

/// Splits story text into sentences ending in a period.
pub fn split_sentences(text: &str) -> Vec<String> {
    text.split_inclusive('.')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Recovers the event log of a story written in the generator's templates.
///
/// `The X is in the Y.` locates a container when X holds something else,
/// takes part in a move, or Y is a room somebody enters or exits; otherwise
/// it locates an object.
pub fn parse_story(text: &str) -> Result<Vec<Event>, StoryError> {
    let sentences = split_sentences(text);
    let bodies: Vec<&str> = sentences.iter().map(|s| s.trim_end_matches('.').trim()).collect();

    let mut rooms = HashSet::new();
    let mut containers = HashSet::new();
    for body in &bodies {
        if let Some(c) = ENTER.captures(body).or_else(|| EXIT.captures(body)) {
            rooms.insert(c[2].to_string());
        } else if let Some(c) = IS_IN.captures(body) {
            containers.insert(c[2].to_string());
        } else if let Some(c) = MOVED.captures(body) {
            containers.insert(c[3].to_string());
        }
    }

    let mut located: HashMap<String, String> = HashMap::new();
    let mut events = Vec::with_capacity(bodies.len());
    for (index, body) in bodies.iter().enumerate() {
        let event = if let Some(c) = ENTER.captures(body) {
            Event::enter(&c[1], &c[2])
        } else if let Some(c) = EXIT.captures(body) {
            Event::exit(&c[1], &c[2])
        } else if let Some(c) = IS_IN.captures(body) {
            let (x, y) = (&c[1], &c[2]);
            if containers.contains(x) || rooms.contains(y) {
                Event::container_location(x, y)
            } else {
                located.insert(x.to_string(), y.to_string());
                Event::object_location(x, y)
            }
        } else if let Some(c) = MOVED.captures(body) {
            let from = located.get(&c[2]).cloned().ok_or_else(|| StoryError::Parse {
                index,
                text: sentences[index].clone(),
            })?;
            located.insert(c[2].to_string(), c[3].to_string());
            Event::move_object(&c[1], &c[2], &from, &c[3])
        } else if let Some(c) = OPINION.captures(body) {
            Event::distractor(&c[1], &c[2], &c[3])
        } else {
            return Err(StoryError::Parse {
                index,
                text: sentences[index].clone(),
            });
        };
        if event.surface_text != sentences[index] {
            return Err(StoryError::Parse {
                index,
                text: sentences[index].clone(),
            });
        }
        events.push(event);
    }
    Ok(events)
}

/// Builds an item from a story text, with one belief question per chain.
pub fn ingest_story(
    item_id: &str,
    text: &str,
    questions: &[(Vec<String>, String)],
) -> Result<BenchmarkItem, StoryError> {
    let events = parse_story(text)?;
    let context = annotate_story(&events)?;
    let states = replay(&events)?;
    let last = states.last().expect("replay yields the initial state");
    let mut built = Vec::with_capacity(questions.len());
    for (i, (chain, object)) in questions.iter().enumerate() {
        let correct = simulate_belief_annotated(&events, &context, chain, object)?;
        let foil = last
            .object_container(object)
            .filter(|c| *c != correct)
            .map(str::to_string)
            .or_else(|| {
                events.iter().find_map(|e| match &e.kind {
                    EventKind::ObjectLocation { object: o, container } if o == object && *container != correct => {
                        Some(container.clone())
                    }
                    _ => None,
                })
            });
        let false_belief = last.object_container(object) != Some(correct.as_str());
        let qtype = match (chain.len(), false_belief) {
            (1, true) => QuestionType::FirstOrderFalseBelief,
            (1, false) => QuestionType::FirstOrderTrueBelief,
            (_, true) => QuestionType::SecondOrderFalseBelief,
            (_, false) => QuestionType::SecondOrderTrueBelief,
        };
        built.push(Question {
            question_id: format!("{item_id}-q{i}"),
            qtype,
            surface_text: location_question_text(chain, object),
            target_chain: chain.clone(),
            object: Some(object.clone()),
            target_info: None,
            gold: GoldAnswer::ContainerPair {
                room: last.container_room(&correct).unwrap_or_default().to_string(),
                correct,
                foil,
            },
        });
    }
    Ok(story_item(item_id.to_string(), events, context, built, Source::Ingested))
}

fn insert_distractors(
    events: &mut Vec<Event>,
    config: &StoryConfig,
    agents: &[&String],
    object: &str,
    rng: &mut ChaCha8Rng,
) {
    let candidates: Vec<&String> = config
        .vocabulary
        .objects
        .iter()
        .filter(|o| o.as_str() != object)
        .collect();
    let mut used: Vec<(String, String)> = Vec::new();
    while used.len() < config.n_distractors {
        let agent = agents.choose(rng).expect("agents");
        let target = candidates.choose(rng).expect("validated");
        if used.iter().any(|(a, o)| a == agent.as_str() && o == target.as_str()) {
            continue;
        }
        used.push((agent.to_string(), target.to_string()));
        let verb = OPINION_VERBS.choose(rng).expect("verbs");
        // Never split an object location from the sentence that locates its container.
        let slots: Vec<usize> = (0..=events.len())
            .filter(|&i| {
                i == 0 || !matches!(events[i - 1].kind, EventKind::ObjectLocation { .. })
            })
            .collect();
        let at = *slots.choose(rng).expect("slot 0 always legal");
        events.insert(at, Event::distractor(agent, verb, target));
    }
}

/// Reality (final container) and memory (initial container) questions for
/// the story's tracked object.
pub fn make_reality_memory_questions(item: &BenchmarkItem) -> Result<Vec<Question>, StoryError> {
    let events = item
        .events()
        .ok_or_else(|| StoryError::Config("reality questions need a story".into()))?;
    let (object, initial) = events
        .iter()
        .find_map(|e| match &e.kind {
            EventKind::ObjectLocation { object, container } => Some((object.clone(), container.clone())),
            _ => None,
        })
        .ok_or_else(|| StoryError::Config("story places no object".into()))?;
    let states = replay(events)?;
    let last = states.last().expect("replay yields the initial state");
    let final_container = last
        .object_container(&object)
        .expect("object was placed")
        .to_string();
    let room_of = |c: &str| last.container_room(c).unwrap_or_default().to_string();
    let pair = |correct: &str, other: &str| GoldAnswer::ContainerPair {
        correct: correct.to_string(),
        foil: (correct != other).then(|| other.to_string()),
        room: room_of(correct),
    };
    let detail = "State the most detailed position possible (e.g., in A in B). Answer in one sentence without explanation.";
    Ok(vec![
        Question {
            question_id: format!("{}-reality", item.item_id),
            qtype: QuestionType::Reality,
            target_chain: vec![],
            object: Some(object.clone()),
            target_info: None,
            surface_text: format!("Where is the {object} really? {detail}"),
            gold: pair(&final_container, &initial),
        },
        Question {
            question_id: format!("{}-memory", item.item_id),
            qtype: QuestionType::Memory,
            target_chain: vec![],
            object: Some(object.clone()),
            target_info: None,
            surface_text: format!("Where was the {object} at the beginning? {detail}"),
            gold: pair(&initial, &final_container),
        },
    ])
}
