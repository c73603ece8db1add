//! Event-sourced symbolic world model.
//!
//! A story is an ordered list of [`Event`]s. Replaying them from the empty
//! [`WorldState`] yields the true location of every agent, object and
//! container, the set of agents that witnessed each event, and the belief a
//! character (or a nested chain of characters) holds about an object.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorldError {
    #[error("illegal transition at event {index}: {reason}")]
    IllegalTransition { index: usize, reason: String },
    #[error("object location at event {index} is not followed by the location of container `{container}`")]
    UnpairedObjectLocation { index: usize, container: String },
    #[error("entity `{name}` is used both as {first} and as {second}")]
    KindConflict {
        name: String,
        first: EntityKind,
        second: EntityKind,
    },
    #[error("no belief about `{object}` is formed for chain {chain:?}")]
    NoBeliefFormed { object: String, chain: Vec<String> },
    #[error("belief chains must hold one or two agents, got {0}")]
    UnsupportedChain(usize),
}

/// Violated precondition of a single transition, before it is tied to a story index.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{0}")]
pub struct TransitionError(pub String);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Agent,
    Object,
    Container,
    Room,
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EntityKind::Agent => "agent",
            EntityKind::Object => "object",
            EntityKind::Container => "container",
            EntityKind::Room => "room",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Entity {
    pub name: String,
    pub kind: EntityKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    AgentEnter {
        agent: String,
        room: String,
    },
    AgentExit {
        agent: String,
        room: String,
    },
    ObjectLocation {
        object: String,
        container: String,
    },
    ContainerLocation {
        container: String,
        room: String,
    },
    MoveObject {
        agent: String,
        object: String,
        from: String,
        to: String,
    },
    /// An opinion sentence such as "Ella likes the suit.".
    Distractor {
        agent: String,
        object: String,
        verb: String,
    },
}

impl EventKind {
    /// The agent performing the event, if any.
    pub fn actant(&self) -> Option<&str> {
        match self {
            EventKind::AgentEnter { agent, .. }
            | EventKind::AgentExit { agent, .. }
            | EventKind::MoveObject { agent, .. }
            | EventKind::Distractor { agent, .. } => Some(agent),
            EventKind::ObjectLocation { .. } | EventKind::ContainerLocation { .. } => None,
        }
    }

    pub fn entities(&self) -> Vec<Entity> {
        let e = |name: &str, kind| Entity {
            name: name.to_string(),
            kind,
        };
        match self {
            EventKind::AgentEnter { agent, room } | EventKind::AgentExit { agent, room } => {
                vec![e(agent, EntityKind::Agent), e(room, EntityKind::Room)]
            }
            EventKind::ObjectLocation { object, container } => {
                vec![e(object, EntityKind::Object), e(container, EntityKind::Container)]
            }
            EventKind::ContainerLocation { container, room } => {
                vec![e(container, EntityKind::Container), e(room, EntityKind::Room)]
            }
            EventKind::MoveObject {
                agent,
                object,
                from,
                to,
            } => vec![
                e(agent, EntityKind::Agent),
                e(object, EntityKind::Object),
                e(from, EntityKind::Container),
                e(to, EntityKind::Container),
            ],
            // Distractor objects are opinion targets, not tracked objects.
            EventKind::Distractor { agent, .. } => vec![e(agent, EntityKind::Agent)],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    #[serde(flatten)]
    pub kind: EventKind,
    pub surface_text: String,
}

impl Event {
    pub fn enter(agent: &str, room: &str) -> Self {
        Event {
            surface_text: format!("{agent} entered the {room}."),
            kind: EventKind::AgentEnter {
                agent: agent.into(),
                room: room.into(),
            },
        }
    }

    pub fn exit(agent: &str, room: &str) -> Self {
        Event {
            surface_text: format!("{agent} exited the {room}."),
            kind: EventKind::AgentExit {
                agent: agent.into(),
                room: room.into(),
            },
        }
    }

    pub fn object_location(object: &str, container: &str) -> Self {
        Event {
            surface_text: format!("The {object} is in the {container}."),
            kind: EventKind::ObjectLocation {
                object: object.into(),
                container: container.into(),
            },
        }
    }

    pub fn container_location(container: &str, room: &str) -> Self {
        Event {
            surface_text: format!("The {container} is in the {room}."),
            kind: EventKind::ContainerLocation {
                container: container.into(),
                room: room.into(),
            },
        }
    }

    pub fn move_object(agent: &str, object: &str, from: &str, to: &str) -> Self {
        Event {
            surface_text: format!("{agent} moved the {object} to the {to}."),
            kind: EventKind::MoveObject {
                agent: agent.into(),
                object: object.into(),
                from: from.into(),
                to: to.into(),
            },
        }
    }

    pub fn distractor(agent: &str, verb: &str, object: &str) -> Self {
        Event {
            surface_text: format!("{agent} {verb} the {object}."),
            kind: EventKind::Distractor {
                agent: agent.into(),
                object: object.into(),
                verb: verb.into(),
            },
        }
    }
}

/// Ordered, duplicate-free set of agent names.
///
/// The order is the order of insertion (actant first, then co-located agents
/// by arrival), which is how annotations are written out. Equality between
/// sets for scoring purposes goes through [`PerceiverSet::same_members`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PerceiverSet(Vec<String>);

impl PerceiverSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str) {
        if !self.contains(name) {
            self.0.push(name.to_string());
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.iter().any(|n| n == name)
    }

    pub fn contains_ignore_case(&self, name: &str) -> bool {
        self.0.iter().any(|n| n.eq_ignore_ascii_case(name))
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Order-free, case-insensitive comparison.
    pub fn same_members<S: AsRef<str>>(&self, other: &[S]) -> bool {
        let mut a: Vec<String> = self.0.iter().map(|n| n.to_lowercase()).collect();
        let mut b: Vec<String> = other.iter().map(|n| n.as_ref().trim().to_lowercase()).collect();
        a.sort();
        a.dedup();
        b.sort();
        b.dedup();
        a == b
    }
}

impl<S: AsRef<str>> FromIterator<S> for PerceiverSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut set = PerceiverSet::new();
        for name in iter {
            set.insert(name.as_ref());
        }
        set
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextKind {
    Narrative,
    Conversation,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedUnit {
    pub text: String,
    pub perceivers: PerceiverSet,
}

/// Ordered information units with their perceivers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedContext {
    pub kind: ContextKind,
    pub units: Vec<AnnotatedUnit>,
}

impl AnnotatedContext {
    pub fn new(kind: ContextKind) -> Self {
        AnnotatedContext {
            kind,
            units: Vec::new(),
        }
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.units.iter().map(|u| u.text.as_str())
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// First repeated unit text, if any.
    pub fn duplicate_text(&self) -> Option<&str> {
        let mut seen = std::collections::HashSet::new();
        self.units
            .iter()
            .map(|u| u.text.as_str())
            .find(|t| !seen.insert(*t))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct Presence {
    room: String,
    since: u64,
}

/// Ground-truth locations at one point in a story.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    agent_location: BTreeMap<String, Presence>,
    container_room: BTreeMap<String, String>,
    object_container: BTreeMap<String, String>,
    clock: u64,
}

impl WorldState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn agent_room(&self, agent: &str) -> Option<&str> {
        self.agent_location.get(agent).map(|p| p.room.as_str())
    }

    pub fn container_room(&self, container: &str) -> Option<&str> {
        self.container_room.get(container).map(String::as_str)
    }

    pub fn object_container(&self, object: &str) -> Option<&str> {
        self.object_container.get(object).map(String::as_str)
    }

    /// Agents currently in `room`, ordered by arrival.
    pub fn occupants(&self, room: &str) -> Vec<&str> {
        let mut here: Vec<(&str, u64)> = self
            .agent_location
            .iter()
            .filter(|(_, p)| p.room == room)
            .map(|(a, p)| (a.as_str(), p.since))
            .collect();
        here.sort_by_key(|&(_, since)| since);
        here.into_iter().map(|(a, _)| a).collect()
    }
}

/// Applies one event, checking its preconditions against `state`.
pub fn apply_event(state: &WorldState, event: &Event) -> Result<WorldState, TransitionError> {
    let mut next = state.clone();
    next.clock += 1;
    match &event.kind {
        EventKind::AgentEnter { agent, room } => {
            if let Some(current) = state.agent_room(agent) {
                return Err(TransitionError(format!(
                    "{agent} enters the {room} while still in the {current}"
                )));
            }
            next.agent_location.insert(
                agent.clone(),
                Presence {
                    room: room.clone(),
                    since: next.clock,
                },
            );
        }
        EventKind::AgentExit { agent, room } => {
            if state.agent_room(agent) != Some(room.as_str()) {
                return Err(TransitionError(format!("{agent} exits the {room} without being in it")));
            }
            next.agent_location.remove(agent);
        }
        EventKind::ObjectLocation { object, container } => {
            match state.object_container(object) {
                Some(c) if c != container => {
                    return Err(TransitionError(format!(
                        "the {object} is declared in the {container} but is in the {c}"
                    )))
                }
                _ => {}
            }
            next.object_container.insert(object.clone(), container.clone());
        }
        EventKind::ContainerLocation { container, room } => {
            match state.container_room(container) {
                Some(r) if r != room => {
                    return Err(TransitionError(format!(
                        "the {container} is declared in the {room} but is in the {r}"
                    )))
                }
                _ => {}
            }
            next.container_room.insert(container.clone(), room.clone());
        }
        EventKind::MoveObject {
            agent,
            object,
            from,
            to,
        } => {
            if state.object_container(object) != Some(from.as_str()) {
                return Err(TransitionError(format!("the {object} is not in the {from}")));
            }
            if from == to {
                return Err(TransitionError(format!("the {object} is already in the {to}")));
            }
            let agent_room = state
                .agent_room(agent)
                .ok_or_else(|| TransitionError(format!("{agent} is not in any room")))?;
            if state.container_room(from) != Some(agent_room) {
                return Err(TransitionError(format!(
                    "{agent} is in the {agent_room} but the {from} is not"
                )));
            }
            if let Some(r) = state.container_room(to) {
                if r != agent_room {
                    return Err(TransitionError(format!(
                        "{agent} cannot reach the {to} in the {r}"
                    )));
                }
            }
            next.object_container.insert(object.clone(), to.clone());
        }
        EventKind::Distractor { .. } => {}
    }
    Ok(next)
}

/// Agents who witness `event`, given the state immediately before it.
pub fn perceivers_of(state: &WorldState, event: &Event) -> PerceiverSet {
    let mut set = PerceiverSet::new();
    let room: Option<&str> = match &event.kind {
        EventKind::Distractor { agent, .. } => {
            set.insert(agent);
            return set;
        }
        EventKind::AgentEnter { room, .. } | EventKind::AgentExit { room, .. } => Some(room),
        EventKind::MoveObject { agent, .. } => state.agent_room(agent),
        EventKind::ObjectLocation { container, .. } => state.container_room(container),
        EventKind::ContainerLocation { room, .. } => Some(room),
    };
    if let Some(actant) = event.kind.actant() {
        set.insert(actant);
    }
    if let Some(room) = room {
        for agent in state.occupants(room) {
            set.insert(agent);
        }
    }
    set
}

/// Checks that no name is used for two entity kinds.
pub fn story_entities(events: &[Event]) -> Result<Vec<Entity>, WorldError> {
    let mut kinds: BTreeMap<String, EntityKind> = BTreeMap::new();
    let mut ordered = Vec::new();
    for event in events {
        for entity in event.kind.entities() {
            match kinds.get(&entity.name) {
                Some(&k) if k != entity.kind => {
                    return Err(WorldError::KindConflict {
                        name: entity.name,
                        first: k,
                        second: entity.kind,
                    })
                }
                Some(_) => {}
                None => {
                    kinds.insert(entity.name.clone(), entity.kind);
                    ordered.push(entity);
                }
            }
        }
    }
    Ok(ordered)
}

/// Replays the story and returns the state after every prefix (`len + 1` states).
pub fn replay(events: &[Event]) -> Result<Vec<WorldState>, WorldError> {
    let mut states = Vec::with_capacity(events.len() + 1);
    states.push(WorldState::new());
    for (index, event) in events.iter().enumerate() {
        let next = apply_event(states.last().expect("non-empty"), event).map_err(|e| {
            WorldError::IllegalTransition {
                index,
                reason: e.0,
            }
        })?;
        states.push(next);
    }
    Ok(states)
}

/// One unit per event; object-location units take the perceivers of the
/// container-location sentence that follows them.
pub fn annotate_story(events: &[Event]) -> Result<AnnotatedContext, WorldError> {
    story_entities(events)?;
    let states = replay(events)?;
    let mut perceivers: Vec<PerceiverSet> = events
        .iter()
        .zip(&states)
        .map(|(event, before)| perceivers_of(before, event))
        .collect();

    for (index, event) in events.iter().enumerate() {
        if let EventKind::ObjectLocation { container, .. } = &event.kind {
            match events.get(index + 1).map(|e| &e.kind) {
                Some(EventKind::ContainerLocation { container: c, .. }) if c == container => {
                    perceivers[index] = perceivers[index + 1].clone();
                }
                _ => {
                    return Err(WorldError::UnpairedObjectLocation {
                        index,
                        container: container.clone(),
                    })
                }
            }
        }
    }

    Ok(AnnotatedContext {
        kind: ContextKind::Narrative,
        units: events
            .iter()
            .zip(perceivers)
            .map(|(event, perceivers)| AnnotatedUnit {
                text: event.surface_text.clone(),
                perceivers,
            })
            .collect(),
    })
}

/// Where `chain` believes `object` is.
///
/// Only events perceived by every chain member are visible; the answer is
/// the object's location as last fixed in that filtered stream.
pub fn simulate_belief(events: &[Event], chain: &[String], object: &str) -> Result<String, WorldError> {
    let context = annotate_story(events)?;
    simulate_belief_annotated(events, &context, chain, object)
}

/// [`simulate_belief`] over a story whose annotation is already known.
pub fn simulate_belief_annotated(
    events: &[Event],
    context: &AnnotatedContext,
    chain: &[String],
    object: &str,
) -> Result<String, WorldError> {
    if chain.is_empty() || chain.len() > 2 {
        return Err(WorldError::UnsupportedChain(chain.len()));
    }
    let mut believed: Option<&str> = None;
    for (event, unit) in events.iter().zip(&context.units) {
        if !chain.iter().all(|a| unit.perceivers.contains(a)) {
            continue;
        }
        match &event.kind {
            EventKind::ObjectLocation { object: o, container } if o == object => {
                believed = Some(container)
            }
            EventKind::MoveObject { object: o, to, .. } if o == object => believed = Some(to),
            _ => {}
        }
    }
    believed.map(str::to_string).ok_or_else(|| WorldError::NoBeliefFormed {
        object: object.to_string(),
        chain: chain.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn exit_removes_agent_from_room() {
        let s = apply_event(&WorldState::new(), &Event::enter("Lucas", "cellar")).unwrap();
        let s = apply_event(&s, &Event::exit("Lucas", "cellar")).unwrap();
        assert_eq!(s.agent_room("Lucas"), None);
    }

    #[test]
    fn move_updates_object_container() {
        let events = [
            Event::enter("Ella", "cellar"),
            Event::object_location("boots", "cupboard"),
            Event::container_location("cupboard", "cellar"),
            Event::move_object("Ella", "boots", "cupboard", "pantry"),
        ];
        let states = replay(&events).unwrap();
        assert_eq!(states.last().unwrap().object_container("boots"), Some("pantry"));
    }

    #[test]
    fn move_by_absent_agent_is_illegal() {
        let events = [
            Event::enter("Ella", "cellar"),
            Event::enter("Lucas", "porch"),
            Event::object_location("boots", "cupboard"),
            Event::container_location("cupboard", "cellar"),
            Event::move_object("Lucas", "boots", "cupboard", "pantry"),
        ];
        let err = replay(&events).unwrap_err();
        assert!(matches!(err, WorldError::IllegalTransition { index: 4, .. }));
    }

    #[test]
    fn exit_from_wrong_room_is_illegal() {
        let s = apply_event(&WorldState::new(), &Event::enter("Lucas", "cellar")).unwrap();
        assert!(apply_event(&s, &Event::exit("Lucas", "porch")).is_err());
    }

    #[test]
    fn distractor_is_private() {
        let s = apply_event(&WorldState::new(), &Event::enter("Lucas", "cellar")).unwrap();
        let p = perceivers_of(&s, &Event::distractor("Ella", "likes", "suit"));
        assert_eq!(p.names(), ["Ella"]);
    }

    #[test]
    fn exit_is_seen_by_everyone_in_the_room() {
        let mut s = WorldState::new();
        for e in [Event::enter("Ella", "cellar"), Event::enter("Lucas", "cellar")] {
            s = apply_event(&s, &e).unwrap();
        }
        let p = perceivers_of(&s, &Event::exit("Lucas", "cellar"));
        assert_eq!(p.names(), ["Lucas", "Ella"]);
    }

    #[test]
    fn container_declaration_in_empty_room_has_no_perceivers() {
        let p = perceivers_of(&WorldState::new(), &Event::container_location("pantry", "cellar"));
        assert!(p.is_empty());
    }

    #[test]
    fn object_location_takes_paired_perceivers() {
        let events = [
            Event::enter("Ella", "cellar"),
            Event::object_location("boots", "cupboard"),
            Event::container_location("cupboard", "cellar"),
        ];
        let ctx = annotate_story(&events).unwrap();
        assert_eq!(ctx.units[1].perceivers, ctx.units[2].perceivers);
        assert_eq!(ctx.units[1].perceivers.names(), ["Ella"]);
    }

    #[test]
    fn unpaired_object_location_is_rejected() {
        let events = [
            Event::enter("Ella", "cellar"),
            Event::object_location("boots", "cupboard"),
            Event::distractor("Ella", "likes", "suit"),
        ];
        assert!(matches!(
            annotate_story(&events),
            Err(WorldError::UnpairedObjectLocation { index: 1, .. })
        ));
    }

    #[test]
    fn kind_conflicts_are_rejected() {
        let events = [
            Event::enter("Ella", "cellar"),
            Event::object_location("boots", "cellar"),
            Event::container_location("cellar", "porch"),
        ];
        assert!(matches!(annotate_story(&events), Err(WorldError::KindConflict { .. })));
    }

    #[test]
    fn empty_story_has_empty_context() {
        assert!(annotate_story(&[]).unwrap().is_empty());
    }

    fn sally_anne() -> Vec<Event> {
        vec![
            Event::enter("Sally", "room"),
            Event::enter("Anne", "room"),
            Event::object_location("marble", "box"),
            Event::container_location("box", "room"),
            Event::exit("Sally", "room"),
            Event::move_object("Anne", "marble", "box", "basket"),
            Event::container_location("basket", "room"),
        ]
    }

    #[test]
    fn sally_keeps_the_false_belief() {
        let events = sally_anne();
        assert_eq!(simulate_belief(&events, &chain(&["Sally"]), "marble").unwrap(), "box");
        assert_eq!(simulate_belief(&events, &chain(&["Anne"]), "marble").unwrap(), "basket");
        assert_eq!(
            simulate_belief(&events, &chain(&["Anne", "Sally"]), "marble").unwrap(),
            "box"
        );
        assert_eq!(
            simulate_belief(&events, &chain(&["Sally", "Sally"]), "marble").unwrap(),
            "box"
        );
    }

    #[test]
    fn belief_needs_a_witnessed_location() {
        let mut events = vec![Event::enter("Bob", "hall")];
        events.extend(sally_anne());
        let err = simulate_belief(&events, &chain(&["Bob"]), "marble").unwrap_err();
        assert!(matches!(err, WorldError::NoBeliefFormed { .. }));
        assert!(matches!(
            simulate_belief(&events, &[], "marble"),
            Err(WorldError::UnsupportedChain(0))
        ));
    }
}
