//! The locally consistent action algebra, corruption schedules, information
//! timing, and the trace validator.
//!
//! A corrupted party never fabricates bytes: it either aborts or asks the
//! engine to materialize `next_msg` on a claimed input bit and a claimed
//! selection of genuinely received payloads. The validator independently
//! re-derives every corrupted payload from the trace to prove a strategy
//! stayed inside the model.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::protocol::{ProtocolSpec, Slot, View};
use crate::rng::CounterRng;
use crate::trace::{ExecutionTrace, Message, PartyId};

/// Claim for one inbox slot of a Select action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InboxChoice {
    /// The payload the party's honest processing accepted for this slot
    /// (first well-formed delivery; abort marker if none).
    Accepted,
    /// A specific genuinely delivered payload (verified by value).
    Payload(Vec<u8>),
    /// Claim the slot was empty.
    Empty,
}

/// Locally consistent action for one (sender, receiver, round).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LcAction {
    /// Send the abort marker.
    Abort,
    /// Send `next_msg(claimed_input, engine coins, claimed inbox)`.
    Select {
        claimed_input: u8,
        /// Slot overrides keyed by `(round, sender)`; unlisted slots claim
        /// `Accepted`.
        claimed_inbox: BTreeMap<(usize, PartyId), InboxChoice>,
    },
}

/// The abort action.
pub fn abort_action() -> LcAction {
    LcAction::Abort
}

/// A Select action with the full genuine inbox.
pub fn select_action(claimed_input: u8) -> LcAction {
    LcAction::Select {
        claimed_input: claimed_input & 1,
        claimed_inbox: BTreeMap::new(),
    }
}

/// A Select action with explicit slot overrides.
pub fn select_action_with(
    claimed_input: u8,
    overrides: BTreeMap<(usize, PartyId), InboxChoice>,
) -> LcAction {
    LcAction::Select {
        claimed_input: claimed_input & 1,
        claimed_inbox: overrides,
    }
}

/// Actions for the current round, keyed by (corrupt sender, receiver).
/// A missing key for a corrupted sender defaults to honest play: Select on
/// the party's real input with the genuine inbox.
#[derive(Debug, Default, Clone)]
pub struct ActionMap {
    pub actions: BTreeMap<(PartyId, PartyId), Vec<LcAction>>,
}

impl ActionMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, from: PartyId, to: PartyId, action: LcAction) {
        self.actions.insert((from, to), vec![action]);
    }

    pub fn push(&mut self, from: PartyId, to: PartyId, action: LcAction) {
        self.actions.entry((from, to)).or_default().push(action);
    }

    pub fn get(&self, from: PartyId, to: PartyId) -> Option<&[LcAction]> {
        self.actions.get(&(from, to)).map(|v| v.as_slice())
    }
}

/// Information timing contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Timing {
    /// Round-r choices may depend on honest round-r messages.
    Rushing,
    /// Round-r choices are a function of rounds < r only.
    NonRushing,
}

/// Corruption schedule.
#[derive(Debug, Clone)]
pub enum Schedule {
    /// The corrupt set is fixed before setup sampling.
    Static(BTreeSet<PartyId>),
    /// Starts from `initial` (corrupted before setup) and may grow at round
    /// boundaries via the behavior's `corrupt_at_boundary`.
    Adaptive { initial: BTreeSet<PartyId> },
}

impl Schedule {
    pub fn initial(&self) -> &BTreeSet<PartyId> {
        match self {
            Schedule::Static(s) => s,
            Schedule::Adaptive { initial } => initial,
        }
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(self, Schedule::Adaptive { .. })
    }
}

/// What the adversary is allowed to observe when choosing actions.
pub struct AdversaryView<'a> {
    /// Current round (for boundary calls, the round about to start).
    pub round: usize,
    pub spec: &'a ProtocolSpec,
    pub corrupted: &'a BTreeSet<PartyId>,
    /// Views of corrupted parties (indexed by zero-based party id; entries
    /// for honest parties are not exposed).
    views: &'a [View],
    /// Full delivery record: `deliveries[r-1][to][from]` lists every payload
    /// (Some) or abort (None) delivered so far; only corrupted receivers'
    /// entries may be read.
    deliveries: &'a [Vec<Vec<Vec<Slot>>>],
    /// Honest messages of the current round addressed to corrupted parties;
    /// populated only for rushing strategies during action selection.
    pub rushed: Option<&'a [Message]>,
}

impl<'a> AdversaryView<'a> {
    pub(crate) fn new(
        round: usize,
        spec: &'a ProtocolSpec,
        corrupted: &'a BTreeSet<PartyId>,
        views: &'a [View],
        deliveries: &'a [Vec<Vec<Vec<Slot>>>],
        rushed: Option<&'a [Message]>,
    ) -> Self {
        Self {
            round,
            spec,
            corrupted,
            views,
            deliveries,
            rushed,
        }
    }

    /// The view of a corrupted party. Panics if the party is honest: the
    /// model does not let the adversary read honest state.
    pub fn party(&self, p: PartyId) -> &View {
        assert!(
            self.corrupted.contains(&p),
            "adversary may only read corrupted views ({p} is honest)"
        );
        &self.views[p.idx()]
    }

    /// Every payload genuinely delivered to corrupted party `to` from `from`
    /// in `round` (None entries are aborts).
    pub fn delivered(&self, round: usize, from: PartyId, to: PartyId) -> &[Slot] {
        assert!(
            self.corrupted.contains(&to),
            "adversary may only read corrupted mailboxes ({to} is honest)"
        );
        &self.deliveries[round - 1][to.idx()][from.idx()]
    }
}

/// Per-trial adversary logic. `initial_corruptions` runs once before setup
/// sampling (static corruption may be trial-sampled but never reacts to the
/// execution); `actions` is called once per round for the currently corrupted
/// senders; `corrupt_at_boundary` is called before each round `>= 2` for
/// adaptive schedules.
pub trait TrialBehavior: Send {
    fn initial_corruptions(&mut self) -> BTreeSet<PartyId> {
        BTreeSet::new()
    }

    fn actions(&mut self, view: &AdversaryView<'_>) -> ActionMap;

    fn corrupt_at_boundary(&mut self, _view: &AdversaryView<'_>) -> BTreeSet<PartyId> {
        BTreeSet::new()
    }
}

/// Factory producing fresh per-trial behavior state.
pub trait Behavior: Send + Sync {
    fn begin_trial(&self, rng: CounterRng) -> Box<dyn TrialBehavior>;
}

/// Corruption schedule plus per-round locally consistent action chooser.
#[derive(Clone)]
pub struct AdversaryStrategy {
    pub name: String,
    /// Corruption budget `t`.
    pub budget: usize,
    pub timing: Timing,
    pub schedule: Schedule,
    behavior: Arc<dyn Behavior>,
}

impl std::fmt::Debug for AdversaryStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AdversaryStrategy")
            .field("name", &self.name)
            .field("budget", &self.budget)
            .field("timing", &self.timing)
            .field("schedule", &self.schedule)
            .finish_non_exhaustive()
    }
}

impl AdversaryStrategy {
    pub fn new(
        name: impl Into<String>,
        budget: usize,
        timing: Timing,
        schedule: Schedule,
        behavior: Arc<dyn Behavior>,
    ) -> Self {
        Self {
            name: name.into(),
            budget,
            timing,
            schedule,
            behavior,
        }
    }

    /// The vacuous adversary: corrupts nobody, does nothing.
    pub fn vacuous(budget: usize) -> Self {
        struct Noop;
        impl Behavior for Noop {
            fn begin_trial(&self, _rng: CounterRng) -> Box<dyn TrialBehavior> {
                struct T;
                impl TrialBehavior for T {
                    fn actions(&mut self, _view: &AdversaryView<'_>) -> ActionMap {
                        ActionMap::new()
                    }
                }
                Box::new(T)
            }
        }
        AdversaryStrategy::new(
            "vacuous",
            budget,
            Timing::NonRushing,
            Schedule::Static(BTreeSet::new()),
            Arc::new(Noop),
        )
    }

    pub fn begin_trial(&self, rng: CounterRng) -> Box<dyn TrialBehavior> {
        self.behavior.begin_trial(rng)
    }
}

/// Uniformly random partition of `who` into two disjoint covering halves;
/// each element lands by an independent fair bit.
pub fn split_honest(
    who: &BTreeSet<PartyId>,
    rng: &mut CounterRng,
) -> (BTreeSet<PartyId>, BTreeSet<PartyId>) {
    let mut half0 = BTreeSet::new();
    let mut half1 = BTreeSet::new();
    for &p in who {
        if rng.bit() == 0 {
            half0.insert(p);
        } else {
            half1.insert(p);
        }
    }
    (half0, half1)
}

/// Seed-token convenience wrapper around [`split_honest`].
pub fn split_honest_seeded(
    who: &BTreeSet<PartyId>,
    seed: u64,
) -> (BTreeSet<PartyId>, BTreeSet<PartyId>) {
    let prf = crate::rng::SeededPrf::new(seed);
    let mut rng = prf.stream(crate::rng::Purpose::Adversary, 0, 0, 0);
    split_honest(who, &mut rng)
}

/// Outcome of replaying a trace against the locally consistent model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub round: usize,
    pub sender: PartyId,
    pub receiver: PartyId,
    pub reason: String,
}

/// Checks that every corrupted outgoing message in the trace is an abort or
/// is reproduced by `next_msg` on some claimed input bit and some selection
/// of genuinely received payloads. The checker re-executes `next_msg` rather
/// than trusting any witness recorded by the attack code.
pub fn validate_locally_consistent(
    trace: &ExecutionTrace,
    spec: &ProtocolSpec,
    strategy: &AdversaryStrategy,
) -> Result<ValidationReport, Error> {
    if trace.n() != spec.n {
        return Err(Error::config(format!(
            "trace has {} parties, protocol {} has {}",
            trace.n(),
            spec.name,
            spec.n
        )));
    }
    if strategy.budget > spec.n {
        return Err(Error::config("corruption budget exceeds party count"));
    }

    let mut violations = Vec::new();
    let rounds = trace.mailboxes.len();

    // Reconstruct each party's accepted inbox (keep-first-well-formed rule)
    // round by round, straight from the mailbox record.
    let n = spec.n;
    let mut accepted: Vec<Vec<Vec<Slot>>> = vec![Vec::new(); n]; // [party][round-1][sender]
    let mut delivered: Vec<Vec<Vec<Vec<Vec<u8>>>>> = vec![Vec::new(); n];

    for r in 1..=rounds {
        for p in 0..n {
            accepted[p].push(vec![None; n]);
            delivered[p].push(vec![Vec::new(); n]);
        }
        for msg in &trace.mailboxes[r - 1] {
            let to = msg.to.idx();
            let from = msg.from.idx();
            if !msg.is_abort {
                if accepted[to][r - 1][from].is_none() {
                    accepted[to][r - 1][from] = Some(msg.payload.clone().into());
                }
                if !delivered[to][r - 1][from].contains(&msg.payload) {
                    delivered[to][r - 1][from].push(msg.payload.clone());
                }
            }
        }
    }

    for r in 1..=rounds {
        for msg in &trace.mailboxes[r - 1] {
            if msg.is_abort {
                continue;
            }
            let corrupted_from = match trace.corruption_log[msg.from.idx()] {
                Some(at) => at < r,
                None => false,
            };
            if !corrupted_from {
                continue;
            }
            let sender = msg.from.idx();
            if !reproducible(
                spec,
                trace,
                msg,
                &accepted[sender][..r - 1],
                &delivered[sender][..r - 1],
            ) {
                violations.push(Violation {
                    round: r,
                    sender: msg.from,
                    receiver: msg.to,
                    reason: "payload not reproduced by next_msg on any claimed input and \
                             delivered-payload selection"
                        .into(),
                });
            }
        }
    }

    Ok(ValidationReport {
        ok: violations.is_empty(),
        violations,
    })
}

/// Search claimed inputs and inbox selections for a witness reproducing the
/// payload. The selection space is the cartesian product over slots that
/// received more than one distinct payload (plus the claimed-input bit);
/// slots with a single delivery offer only that delivery, and slots with no
/// delivery offer only the abort marker.
fn reproducible(
    spec: &ProtocolSpec,
    trace: &ExecutionTrace,
    msg: &Message,
    accepted_prior: &[Vec<Slot>],
    delivered_prior: &[Vec<Vec<Vec<u8>>>],
) -> bool {
    let sender = msg.from;
    let round = msg.round;

    // Candidate payload lists per prior slot. Ambiguous slots are those with
    // more than one distinct delivered payload.
    let mut ambiguous: Vec<(usize, usize)> = Vec::new(); // (round-1, sender idx)
    for (ri, per_sender) in delivered_prior.iter().enumerate() {
        for (si, payloads) in per_sender.iter().enumerate() {
            if payloads.len() > 1 {
                ambiguous.push((ri, si));
            }
        }
    }
    // Cap the witness search; generated attacks never produce more than a
    // handful of ambiguous slots per sender.
    const MAX_AMBIGUOUS: usize = 16;
    if ambiguous.len() > MAX_AMBIGUOUS {
        return false;
    }

    let mut base_inbox: Vec<Vec<Slot>> = accepted_prior.to_vec();
    let combos: usize = ambiguous
        .iter()
        .map(|&(ri, si)| delivered_prior[ri][si].len())
        .product::<usize>()
        .max(1);

    for combo in 0..combos {
        let mut c = combo;
        for &(ri, si) in &ambiguous {
            let options = &delivered_prior[ri][si];
            base_inbox[ri][si] = Some(options[c % options.len()].clone().into());
            c /= options.len();
        }
        for claimed_input in 0..=1u8 {
            let view = View {
                input_bit: claimed_input,
                setup: trace.setup.for_party(sender).to_vec(),
                coins: (1..=round)
                    .map(|rr| trace.coins.coin(rr, sender))
                    .collect(),
                inbox: base_inbox.clone(),
            };
            let candidate = spec.next_msg(sender, msg.to, round, &view);
            if candidate == msg.payload {
                return true;
            }
        }
    }
    false
}
