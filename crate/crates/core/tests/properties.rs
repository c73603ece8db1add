use std::collections::{HashMap, HashSet};

use proptest::prelude::*;

use perceptom_core::convo::{generate_mini_conversation, MiniConvoConfig, PresenceAction};
use perceptom_core::eval::{dataset_perception_accuracy, pearson, set_all_score, tom_accuracy, GradedOutcome, QuestionSet};
use perceptom_core::item::{BenchmarkItem, GoldAnswer, ItemDetails, QuestionType, Scenario};
use perceptom_core::pipeline::{extract_perspective_context, gold_inference, normalize};
use perceptom_core::storygen::{generate_story, StoryConfig};
use perceptom_core::world::{Event, EventKind};

fn story_config() -> impl Strategy<Value = (StoryConfig, QuestionType)> {
    (any::<u64>(), 3usize..=5, 2usize..=4, 0usize..=3, 0usize..4).prop_map(|(seed, agents, rooms, distractors, q)| {
        let cfg = StoryConfig {
            n_agents: agents,
            n_rooms: rooms,
            n_distractors: distractors,
            control_questions: true,
            ..StoryConfig::with_seed(seed)
        };
        (cfg, QuestionType::TOMI_BELIEF[q])
    })
}

/// Who saw each event, recomputed from scratch: everyone in the room where
/// the event happens, the actant always, opinions only by their holder, and
/// object placements by whoever sees the container's room declared next.
fn brute_force_witnesses(events: &[Event]) -> Vec<HashSet<String>> {
    let mut room_of_agent: HashMap<String, String> = HashMap::new();
    let mut room_of_container: HashMap<String, String> = HashMap::new();
    let in_room = |rooms: &HashMap<String, String>, room: &str| -> HashSet<String> {
        rooms.iter().filter(|(_, r)| r.as_str() == room).map(|(a, _)| a.clone()).collect()
    };
    let mut seen = Vec::new();
    for event in events {
        let witnesses = match &event.kind {
            EventKind::AgentEnter { agent, room } => {
                room_of_agent.insert(agent.clone(), room.clone());
                in_room(&room_of_agent, room)
            }
            EventKind::AgentExit { agent, room } => {
                let w = in_room(&room_of_agent, room);
                room_of_agent.remove(agent);
                w
            }
            EventKind::ContainerLocation { container, room } => {
                room_of_container.insert(container.clone(), room.clone());
                in_room(&room_of_agent, room)
            }
            EventKind::ObjectLocation { .. } => HashSet::new(),
            EventKind::MoveObject { agent, from, .. } => {
                let room = room_of_container
                    .get(from)
                    .cloned()
                    .or_else(|| room_of_agent.get(agent).cloned())
                    .unwrap_or_default();
                let mut w = in_room(&room_of_agent, &room);
                w.insert(agent.clone());
                w
            }
            EventKind::Distractor { agent, .. } => HashSet::from([agent.clone()]),
        };
        seen.push(witnesses);
    }
    for i in (0..events.len()).rev() {
        if matches!(events[i].kind, EventKind::ObjectLocation { .. }) {
            seen[i] = seen.get(i + 1).cloned().unwrap_or_default();
        }
    }
    seen
}

fn brute_force_belief(events: &[Event], chain: &[String], object: &str) -> Option<String> {
    let witnesses = brute_force_witnesses(events);
    let mut believed = None;
    for (event, w) in events.iter().zip(&witnesses) {
        if !chain.iter().all(|a| w.contains(a)) {
            continue;
        }
        match &event.kind {
            EventKind::ObjectLocation { object: o, container } if o == object => believed = Some(container.clone()),
            EventKind::MoveObject { object: o, to, .. } if o == object => believed = Some(to.clone()),
            _ => {}
        }
    }
    believed
}

fn story(cfg: &StoryConfig, q: QuestionType) -> BenchmarkItem {
    generate_story(cfg, q).expect("valid config generates")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn stored_gold_equals_brute_force_replay((cfg, q) in story_config()) {
        let item = story(&cfg, q);
        let events = item.events().unwrap();
        for question in &item.questions {
            let GoldAnswer::ContainerPair { correct, .. } = &question.gold else { panic!("location gold") };
            if question.target_chain.is_empty() {
                continue;
            }
            let object = question.object.as_deref().unwrap();
            prop_assert_eq!(Some(correct.clone()), brute_force_belief(events, &question.target_chain, object));
        }
    }

    #[test]
    fn annotation_equals_brute_force_witnesses((cfg, q) in story_config()) {
        let item = story(&cfg, q);
        let witnesses = brute_force_witnesses(item.events().unwrap());
        for (unit, w) in item.context.units.iter().zip(&witnesses) {
            let got: HashSet<String> = unit.perceivers.names().iter().cloned().collect();
            prop_assert_eq!(&got, w, "{}", unit.text);
        }
    }

    #[test]
    fn gold_extraction_equals_set_filter((cfg, q) in story_config(), pick in any::<prop::sample::Index>()) {
        let item = story(&cfg, q);
        let agent = pick.get(&item.cast).clone();
        let chain = vec![agent.clone()];
        let perspective = extract_perspective_context(&item.context, &gold_inference(&item.context), &chain);
        let oracle: Vec<String> = item
            .context
            .units
            .iter()
            .filter(|u| u.perceivers.names().contains(&agent))
            .map(|u| u.text.clone())
            .collect();
        prop_assert_eq!(perspective.kept_units, oracle);
        prop_assert!(perspective.dropped_unmatched_keys.is_empty());
    }

    #[test]
    fn gold_perspective_reduces_to_true_belief((cfg, q) in story_config()) {
        let item = story(&cfg, q);
        let question = &item.questions[0];
        let object = question.object.as_deref().unwrap();
        let perspective = extract_perspective_context(&item.context, &gold_inference(&item.context), &question.target_chain);
        let kept: HashSet<&str> = perspective.kept_units.iter().map(String::as_str).collect();
        let last_seen = item
            .events()
            .unwrap()
            .iter()
            .filter(|e| kept.contains(e.surface_text.as_str()))
            .filter_map(|e| match &e.kind {
                EventKind::ObjectLocation { object: o, container } if o == object => Some(container.clone()),
                EventKind::MoveObject { object: o, to, .. } if o == object => Some(to.clone()),
                _ => None,
            })
            .last();
        let GoldAnswer::ContainerPair { correct, .. } = &question.gold else { panic!("location gold") };
        prop_assert_eq!(last_seen.as_ref(), Some(correct));
    }

    #[test]
    fn kept_units_are_an_ordered_verbatim_subsequence((cfg, q) in story_config(), pick in any::<prop::sample::Index>()) {
        let item = story(&cfg, q);
        let chain = vec![pick.get(&item.cast).clone()];
        let perspective = extract_perspective_context(&item.context, &gold_inference(&item.context), &chain);
        let mut units = item.context.texts();
        for kept in &perspective.kept_units {
            prop_assert!(units.any(|u| u == kept), "{} out of order or respelled", kept);
        }
    }

    #[test]
    fn normalization_is_idempotent(s in "[ a-zA-Z.,!?]{0,40}") {
        let once = normalize(&s);
        prop_assert_eq!(normalize(&once), once.clone());
        prop_assert_eq!(normalize(&s.to_uppercase()), normalize(&s.to_lowercase()));
    }
}

/// Presence recomputed by walking every line: present from the start unless
/// the agent's first presence event is a join, present from a join's line,
/// absent after a leave's line.
fn scan_presence(item: &BenchmarkItem) -> Vec<HashSet<String>> {
    let ItemDetails::Conversation { utterances, presence_events } = &item.details else { panic!("conversation") };
    let mut out = Vec::new();
    for i in 0..utterances.len() {
        let mut here = HashSet::new();
        for agent in &item.cast {
            let mine: Vec<_> = presence_events.iter().filter(|p| &p.agent == agent).collect();
            let mut present = mine.first().is_none_or(|p| p.action != PresenceAction::Join);
            for p in &mine {
                match p.action {
                    PresenceAction::Join if p.at_utterance_index <= i => present = true,
                    PresenceAction::Leave if p.at_utterance_index < i => present = false,
                    _ => {}
                }
            }
            if present {
                here.insert(agent.clone());
            }
        }
        out.push(here);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn conversation_audiences_equal_line_scan(seed in any::<u64>(), tb in any::<bool>(), agents in 3usize..=5) {
        let scenario = if tb { Scenario::TrueBelief } else { Scenario::FalseBelief };
        let cfg = MiniConvoConfig { n_agents: agents, ..MiniConvoConfig::with_seed(seed) };
        let item = generate_mini_conversation(&cfg, scenario).unwrap().into_benchmark_item();
        let scanned = scan_presence(&item);
        for (unit, expected) in item.context.units.iter().zip(&scanned) {
            let got: HashSet<String> = unit.perceivers.names().iter().cloned().collect();
            prop_assert_eq!(&got, expected, "{}", unit.text);
            let speaker = unit.text.split(':').next().unwrap();
            prop_assert_eq!(unit.perceivers.names()[0].as_str(), speaker);
        }
    }

    #[test]
    fn conversation_gold_extraction_equals_set_filter(seed in any::<u64>(), tb in any::<bool>()) {
        let scenario = if tb { Scenario::TrueBelief } else { Scenario::FalseBelief };
        let item = generate_mini_conversation(&MiniConvoConfig::with_seed(seed), scenario).unwrap().into_benchmark_item();
        for agent in &item.cast {
            let perspective = extract_perspective_context(&item.context, &gold_inference(&item.context), std::slice::from_ref(agent));
            let oracle: Vec<String> = item.context.units.iter()
                .filter(|u| u.perceivers.contains(agent))
                .map(|u| u.text.clone())
                .collect();
            prop_assert_eq!(perspective.kept_units, oracle);
        }
    }
}

fn computational_pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let syy: f64 = ys.iter().map(|y| y * y).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

fn outcome(correct: bool) -> GradedOutcome {
    GradedOutcome {
        question_id: String::new(),
        correct,
        grader: "fixed".into(),
        normalized_answer: String::new(),
        ungradable: false,
        notes: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn pearson_matches_computational_formula(
        xs in prop::collection::vec(0.0f64..1.0, 8),
        ys in prop::collection::vec(0.0f64..1.0, 8),
    ) {
        let r = pearson(&xs, &ys).unwrap();
        prop_assert!((r - computational_pearson(&xs, &ys)).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&r));
    }

    #[test]
    fn pearson_ignores_positive_affine_maps(
        xs in prop::collection::vec(0.0f64..1.0, 8),
        ys in prop::collection::vec(0.0f64..1.0, 8),
        a in 0.5f64..4.0,
        b in -2.0f64..2.0,
    ) {
        let scaled: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        prop_assert!((pearson(&xs, &ys).unwrap() - pearson(&scaled, &ys).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn set_all_never_exceeds_any_type_accuracy(groups in prop::collection::vec(prop::collection::vec(any::<bool>(), 6), 1..12)) {
        let sets: Vec<QuestionSet> = groups.iter().enumerate().map(|(i, g)| QuestionSet {
            set_id: format!("s{i}"),
            outcomes: QuestionType::FANTOM_SET.iter().copied().zip(g.iter().copied()).collect(),
        }).collect();
        let all = set_all_score(&sets).unwrap();
        let brute = groups.iter().filter(|g| g.iter().all(|c| *c)).count() as f64 / groups.len() as f64;
        prop_assert_eq!(all, brute);
        for t in 0..6 {
            let per_type: Vec<GradedOutcome> = groups.iter().map(|g| outcome(g[t])).collect();
            prop_assert!(all <= tom_accuracy(&per_type).unwrap());
        }
    }

    #[test]
    fn dataset_mean_matches_summation(values in prop::collection::vec(0.0f64..=1.0, 1..50)) {
        let mut total = 0.0;
        for v in values.iter().rev() {
            total += v;
        }
        let mean = dataset_perception_accuracy(&values).unwrap();
        prop_assert!((mean - total / values.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn tom_accuracy_is_order_free(mut flags in prop::collection::vec(any::<bool>(), 1..40), seed in any::<u64>()) {
        let before = tom_accuracy(&flags.iter().map(|c| outcome(*c)).collect::<Vec<_>>()).unwrap();
        let k = (seed as usize) % flags.len();
        flags.rotate_left(k);
        flags.reverse();
        let after = tom_accuracy(&flags.iter().map(|c| outcome(*c)).collect::<Vec<_>>()).unwrap();
        prop_assert_eq!(before, after);
    }
}
