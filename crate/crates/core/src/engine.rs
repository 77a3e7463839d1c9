//! Deterministic synchronous execution engine with adversary hooks, plus a
//! scripted variant simulator used by attack estimators and the conjecture
//! machinery.

use std::collections::{BTreeMap, BTreeSet};

use crate::adversary::{AdversaryStrategy, AdversaryView, InboxChoice, LcAction, Timing};
use crate::error::Error;
use crate::protocol::{pr_payload, ProtocolSpec, Slot, View};
use crate::rng::{Purpose, SeededPrf};
use crate::trace::{CoinTape, ExecutionTrace, InputVector, Message, PartyId, SetupBundle};

/// Reproducibility token: a root seed plus a trial index. Identical seeds
/// reproduce bit-identical traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seed {
    pub root: u64,
    pub trial: u64,
}

impl Seed {
    pub fn new(root: u64) -> Self {
        Seed { root, trial: 0 }
    }

    pub fn trial(self, trial: u64) -> Self {
        Seed { trial, ..self }
    }
}

/// Honest execution: all parties follow the protocol.
pub fn run_honest(
    spec: &ProtocolSpec,
    inputs: &InputVector,
    seed: Seed,
) -> Result<ExecutionTrace, Error> {
    exec(spec, inputs, None, seed)
}

/// Adversarial execution under a locally consistent strategy.
pub fn run(
    spec: &ProtocolSpec,
    inputs: &InputVector,
    strategy: &AdversaryStrategy,
    seed: Seed,
) -> Result<ExecutionTrace, Error> {
    exec(spec, inputs, Some(strategy), seed)
}

fn exec(
    spec: &ProtocolSpec,
    inputs: &InputVector,
    strategy: Option<&AdversaryStrategy>,
    seed: Seed,
) -> Result<ExecutionTrace, Error> {
    let n = spec.n;
    if inputs.len() != n {
        return Err(Error::config(format!(
            "input vector has {} bits, protocol {} expects {}",
            inputs.len(),
            spec.name,
            n
        )));
    }
    if spec.q == 0 {
        return Err(Error::config("halting budget q must be at least 1"));
    }
    if let Some(s) = strategy {
        if s.budget > n {
            return Err(Error::config("corruption budget exceeds party count"));
        }
        if s.schedule.initial().len() > s.budget {
            return Err(Error::config(format!(
                "initial corruption set exceeds budget t={}",
                s.budget
            )));
        }
        if let Some(p) = s.schedule.initial().iter().find(|p| p.0 == 0 || p.0 > n) {
            return Err(Error::config(format!("corrupted party {p} out of range")));
        }
    }

    let prf = SeededPrf::new(seed.root);

    let mut behavior =
        strategy.map(|s| s.begin_trial(prf.stream(Purpose::Adversary, seed.trial, 0, 0)));

    // The corrupt set is fixed before setup sampling; behaviors may sample it
    // per trial but cannot react to anything in the execution yet.
    let mut corrupted: BTreeSet<PartyId> = strategy
        .map(|s| s.schedule.initial().clone())
        .unwrap_or_default();
    if let Some(b) = behavior.as_mut() {
        corrupted.extend(b.initial_corruptions());
    }
    if let Some(s) = strategy {
        if corrupted.len() > s.budget {
            return Err(Error::config(format!(
                "initial corruption set exceeds budget t={}",
                s.budget
            )));
        }
        if let Some(p) = corrupted.iter().find(|p| p.0 == 0 || p.0 > n) {
            return Err(Error::config(format!("corrupted party {p} out of range")));
        }
    }
    let mut corruption_log: Vec<Option<usize>> = vec![None; n];
    for p in &corrupted {
        corruption_log[p.idx()] = Some(0);
    }

    let mut setup_rng = prf.stream(Purpose::Setup, seed.trial, 0, 0);
    let setup = spec.sample_setup(&mut setup_rng);
    if setup.per_party.len() != n {
        return Err(Error::config("setup bundle has wrong party count"));
    }

    let mut views: Vec<View> = (0..n)
        .map(|i| View {
            input_bit: inputs.bits()[i],
            setup: setup.per_party[i].clone(),
            coins: Vec::new(),
            inbox: Vec::new(),
        })
        .collect();

    let mut coins: Vec<Vec<u64>> = Vec::with_capacity(spec.q);
    let mut mailboxes: Vec<Vec<Message>> = Vec::with_capacity(spec.q);
    // deliveries[r-1][to][from]: every slot delivered (None = abort marker).
    let mut deliveries: Vec<Vec<Vec<Vec<Slot>>>> = Vec::with_capacity(spec.q);
    let mut halt_round: Vec<Option<usize>> = vec![None; n];
    let mut outputs: Vec<Option<u8>> = vec![None; n];

    for r in 1..=spec.q {
        // Adaptive corruptions at the round boundary (never during round 1:
        // pre-setup corruption covers that).
        if r >= 2 {
            if let (Some(s), Some(b)) = (strategy, behavior.as_mut()) {
                if s.schedule.is_adaptive() {
                    let view = AdversaryView::new(r, spec, &corrupted, &views, &deliveries, None);
                    let extra = b.corrupt_at_boundary(&view);
                    for p in extra {
                        if p.0 == 0 || p.0 > n {
                            return Err(Error::config(format!("corrupted party {p} out of range")));
                        }
                        if corrupted.insert(p) {
                            if corrupted.len() > s.budget {
                                return Err(Error::config(format!(
                                    "adaptive corruption exceeds budget t={}",
                                    s.budget
                                )));
                            }
                            corruption_log[p.idx()] = Some(r - 1);
                        }
                    }
                }
            }
        }

        // Every party, honest or corrupted, flips the round's coins honestly.
        let dom = spec.coin_domain(r);
        let mut round_coins = Vec::with_capacity(n);
        for i in 0..n {
            let mut rng = prf.stream(Purpose::Coin, seed.trial, i as u64 + 1, r as u64);
            let c = dom.sample(&mut rng);
            round_coins.push(c);
            views[i].coins.push(c);
        }
        coins.push(round_coins);

        // Honest senders compute their round messages first.
        let mut staged: BTreeMap<(PartyId, PartyId), Vec<u8>> = BTreeMap::new();
        for i in 0..n {
            let from = PartyId::from_idx(i);
            if corrupted.contains(&from) || halt_round[i].is_some() {
                continue;
            }
            for j in 0..n {
                if i == j {
                    continue;
                }
                let to = PartyId::from_idx(j);
                staged.insert((from, to), spec.next_msg(from, to, r, &views[i]));
            }
        }

        // The adversary chooses the corrupted parties' actions. Rushing
        // strategies observe the honest messages addressed to corrupted
        // receivers before committing.
        let action_map = match (strategy, behavior.as_mut()) {
            (Some(s), Some(b)) if !corrupted.is_empty() => {
                let rushed: Vec<Message>;
                let rushed_ref = match s.timing {
                    Timing::Rushing => {
                        rushed = staged
                            .iter()
                            .filter(|((_, to), _)| corrupted.contains(to))
                            .map(|(&(from, to), payload)| Message {
                                round: r,
                                from,
                                to,
                                payload: payload.clone(),
                                is_abort: false,
                            })
                            .collect();
                        Some(rushed.as_slice())
                    }
                    Timing::NonRushing => None,
                };
                let view =
                    AdversaryView::new(r, spec, &corrupted, &views, &deliveries, rushed_ref);
                Some(b.actions(&view))
            }
            _ => None,
        };

        // Emit all messages in canonical (sender, receiver) order so that a
        // vacuous adversary reproduces the honest trace bit-for-bit.
        let mut round_msgs: Vec<Message> = Vec::new();
        for i in 0..n {
            let from = PartyId::from_idx(i);
            if !corrupted.contains(&from) {
                if halt_round[i].is_some() {
                    continue;
                }
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let to = PartyId::from_idx(j);
                    round_msgs.push(Message {
                        round: r,
                        from,
                        to,
                        payload: staged[&(from, to)].clone(),
                        is_abort: false,
                    });
                }
                continue;
            }
            for j in 0..n {
                if i == j {
                    continue;
                }
                let to = PartyId::from_idx(j);
                let default_action = [LcAction::Select {
                    claimed_input: views[i].input_bit,
                    claimed_inbox: BTreeMap::new(),
                }];
                let actions: &[LcAction] = action_map
                    .as_ref()
                    .and_then(|m| m.get(from, to))
                    .unwrap_or(&default_action);
                for action in actions {
                    let msg = materialize(spec, r, from, to, action, &views[i], &deliveries)?;
                    round_msgs.push(msg);
                }
            }
        }

        // Delivery: honest processing accepts the first well-formed payload
        // per (round, sender) and treats everything else as the abort marker.
        // The complete per-slot record is retained for corrupted receivers
        // and for the validator.
        let mut record: Vec<Vec<Vec<Slot>>> = vec![vec![Vec::new(); n]; n];
        for m in &round_msgs {
            let slot: Slot = if m.is_abort {
                None
            } else {
                Some(m.payload.clone().into())
            };
            record[m.to.idx()][m.from.idx()].push(slot);
        }
        for (to, per_sender) in record.iter().enumerate() {
            let row: Vec<Slot> = per_sender
                .iter()
                .map(|slots| slots.iter().flatten().next().cloned())
                .collect();
            views[to].inbox.push(row);
        }
        deliveries.push(record);
        mailboxes.push(round_msgs);

        // Honest parties decide whether to produce an output and halt.
        for i in 0..n {
            let p = PartyId::from_idx(i);
            if corrupted.contains(&p) || halt_round[i].is_some() {
                continue;
            }
            if let Some(bit) = spec.output(p, &views[i]) {
                outputs[i] = Some(bit & 1);
                halt_round[i] = Some(r);
            }
        }
    }

    Ok(ExecutionTrace {
        setup,
        coins: CoinTape { per_round: coins },
        mailboxes,
        halt_round,
        outputs,
        corruption_log,
    })
}

/// Turn an action into a wire message; Select actions are rendered by
/// `next_msg` on the claimed view, so a corrupted party can never fabricate
/// payload bytes.
fn materialize(
    spec: &ProtocolSpec,
    round: usize,
    from: PartyId,
    to: PartyId,
    action: &LcAction,
    true_view: &View,
    deliveries: &[Vec<Vec<Vec<Slot>>>],
) -> Result<Message, Error> {
    match action {
        LcAction::Abort => Ok(Message::abort(round, from, to)),
        LcAction::Select {
            claimed_input,
            claimed_inbox,
        } => {
            if *claimed_input > 1 {
                return Err(Error::StrategyViolation {
                    round,
                    sender: from,
                    receiver: to,
                    reason: "claimed input is not a bit".into(),
                });
            }
            let mut inbox: Vec<Vec<Slot>> = true_view.inbox[..round - 1].to_vec();
            for (&(r_prior, sender), choice) in claimed_inbox {
                if r_prior == 0 || r_prior >= round {
                    return Err(Error::Construction(format!(
                        "inbox claim for round {r_prior} out of range in round {round}"
                    )));
                }
                let slot = &mut inbox[r_prior - 1][sender.idx()];
                match choice {
                    InboxChoice::Accepted => {}
                    InboxChoice::Empty => *slot = None,
                    InboxChoice::Payload(p) => {
                        let genuine = &deliveries[r_prior - 1][from.idx()][sender.idx()];
                        if !genuine.iter().any(|s| s.as_deref() == Some(p.as_slice())) {
                            return Err(Error::StrategyViolation {
                                round,
                                sender: from,
                                receiver: to,
                                reason: format!(
                                    "claimed round-{r_prior} payload from {sender} was never delivered"
                                ),
                            });
                        }
                        *slot = Some(p.clone().into());
                    }
                }
            }
            let view = View {
                input_bit: *claimed_input,
                setup: true_view.setup.clone(),
                coins: true_view.coins.clone(),
                inbox,
            };
            Ok(Message {
                round,
                from,
                to,
                payload: spec.next_msg(from, to, round, &view),
                is_abort: false,
            })
        }
    }
}

/// Checks the public-randomness transparency invariant on a trace: every
/// non-abort payload parses and embeds the sender's engine-sampled coins for
/// that round (and its setup string in round 1).
pub fn check_pr_transparency(trace: &ExecutionTrace, spec: &ProtocolSpec) -> Result<(), Error> {
    if !spec.public_randomness {
        return Err(Error::config(format!(
            "protocol {} is not flagged public-randomness",
            spec.name
        )));
    }
    for (ri, msgs) in trace.mailboxes.iter().enumerate() {
        let round = ri + 1;
        let dom = spec.coin_domain(round);
        for m in msgs {
            if m.is_abort {
                continue;
            }
            let decoded = pr_payload::decode(&m.payload)?;
            let expected = if dom.is_empty() {
                None
            } else {
                Some(trace.coins.coin(round, m.from))
            };
            if decoded.coin != expected {
                return Err(Error::Evaluation(format!(
                    "round-{round} payload {} -> {} does not embed the sender's coins",
                    m.from, m.to
                )));
            }
            if round == 1 && decoded.setup != trace.setup.for_party(m.from) {
                return Err(Error::Evaluation(format!(
                    "round-1 payload {} -> {} does not embed the sender's setup",
                    m.from, m.to
                )));
            }
        }
    }
    Ok(())
}

/// Deviation script for the pivot/abort protocol family: pivot parties
/// present per-cell input faces in round 1 and (for interior `d`) abort in
/// round 2; listed parties abort silently from round 2 onward.
#[derive(Debug, Clone)]
pub struct VariantScript {
    /// Zero-based pivot membership mask.
    pub pivot: Vec<bool>,
    /// Face index: cells `1..=d` receive the flipped-input face.
    pub d: usize,
    /// Total cell count `h`.
    pub h: usize,
    /// Cell id (1-based) per party; 0 for pivot members.
    pub cell_of: Vec<usize>,
    /// Parties that send nothing from round 2 onward.
    pub round2_abort: Vec<bool>,
}

impl VariantScript {
    /// Script with no deviation at all.
    pub fn honest(n: usize) -> Self {
        VariantScript {
            pivot: vec![false; n],
            d: 0,
            h: 0,
            cell_of: vec![0; n],
            round2_abort: vec![false; n],
        }
    }
}

/// Outcome of a scripted simulation.
#[derive(Debug, Clone)]
pub struct VariantOutcome {
    pub outputs: Vec<Option<u8>>,
    pub halt_round: Vec<Option<usize>>,
}

impl VariantOutcome {
    /// The common output bit over the given zero-based survivor set, if all
    /// survivors halted on the same bit.
    pub fn common_output(&self, survivors: impl Iterator<Item = usize> + Clone) -> Option<u8> {
        let mut iter = survivors;
        let first = iter.next()?;
        let bit = self.outputs[first]?;
        for i in iter {
            if self.outputs[i] != Some(bit) {
                return None;
            }
        }
        Some(bit)
    }
}

/// Deterministic scripted execution on explicit setup and coins. This is the
/// estimators' and conjecture lab's workhorse: no RNG, no adversary
/// machinery, and a multicast fast path.
pub fn run_variant(
    spec: &ProtocolSpec,
    inputs: &InputVector,
    setup: &SetupBundle,
    coins: &CoinTape,
    script: &VariantScript,
) -> VariantOutcome {
    let n = spec.n;
    debug_assert_eq!(inputs.len(), n);
    debug_assert!(coins.rounds() >= spec.q);

    let mut views: Vec<View> = (0..n)
        .map(|i| View {
            input_bit: inputs.bits()[i],
            setup: setup.per_party[i].clone(),
            coins: Vec::new(),
            inbox: Vec::new(),
        })
        .collect();
    let mut halt_round: Vec<Option<usize>> = vec![None; n];
    let mut outputs: Vec<Option<u8>> = vec![None; n];
    let interior = script.d > 0 && script.d < script.h;

    for r in 1..=spec.q {
        for (i, view) in views.iter_mut().enumerate() {
            view.coins.push(coins.per_round[r - 1][i]);
        }

        // rows[i][j] = slot delivered from i+1 to j+1 this round.
        let mut rows: Vec<Vec<Slot>> = vec![vec![None; n]; n];
        for i in 0..n {
            let from = PartyId::from_idx(i);
            if halt_round[i].is_some() {
                continue;
            }
            if r >= 2 && script.round2_abort[i] {
                continue;
            }
            if script.pivot[i] {
                if r >= 2 && interior {
                    continue; // pivot aborts in round 2 for interior d
                }
                if script.d == script.h && script.h > 0 {
                    // Fully flipped endpoint: honest play on the negated input.
                    let mut face = views[i].clone();
                    face.input_bit ^= 1;
                    send_face(spec, from, &face, r, None, &mut rows[i]);
                    continue;
                }
                if script.d == 0 || r >= 2 {
                    // Honest endpoint (d = 0), both rounds.
                    send_face(spec, from, &views[i], r, None, &mut rows[i]);
                    continue;
                }
                // Interior d, round 1: flipped face to cells 1..=d, true face
                // to the rest, nothing to fellow pivots.
                let mut flipped = views[i].clone();
                flipped.input_bit ^= 1;
                let to_flip: Vec<usize> = (0..n)
                    .filter(|&j| j != i && !script.pivot[j] && script.cell_of[j] <= script.d)
                    .collect();
                let to_true: Vec<usize> = (0..n)
                    .filter(|&j| j != i && !script.pivot[j] && script.cell_of[j] > script.d)
                    .collect();
                send_face(spec, from, &flipped, r, Some(&to_flip), &mut rows[i]);
                send_face(spec, from, &views[i], r, Some(&to_true), &mut rows[i]);
            } else {
                send_face(spec, from, &views[i], r, None, &mut rows[i]);
            }
        }

        for j in 0..n {
            let row: Vec<Slot> = (0..n).map(|i| rows[i][j].take()).collect();
            views[j].inbox.push(row);
        }

        for j in 0..n {
            if halt_round[j].is_some() {
                continue;
            }
            let p = PartyId::from_idx(j);
            let view = if script.pivot[j] && script.d == script.h && script.h > 0 {
                let mut v = views[j].clone();
                v.input_bit ^= 1;
                std::borrow::Cow::Owned(v)
            } else {
                std::borrow::Cow::Borrowed(&views[j])
            };
            if let Some(bit) = spec.output(p, &view) {
                outputs[j] = Some(bit & 1);
                halt_round[j] = Some(r);
            }
        }
    }

    VariantOutcome {
        outputs,
        halt_round,
    }
}

/// Write `from`'s round-`r` payloads into its row, computing the payload once
/// for multicast protocols. `targets = None` sends to all other parties.
fn send_face(
    spec: &ProtocolSpec,
    from: PartyId,
    view: &View,
    round: usize,
    targets: Option<&[usize]>,
    row: &mut [Slot],
) {
    let n = spec.n;
    let i = from.idx();
    if spec.multicast {
        let rep = if i == 0 { 1 } else { 0 };
        let payload: crate::protocol::Payload =
            spec.next_msg(from, PartyId::from_idx(rep), round, view).into();
        match targets {
            Some(ts) => {
                for &j in ts {
                    row[j] = Some(payload.clone());
                }
            }
            None => {
                for (j, slot) in row.iter_mut().enumerate().take(n) {
                    if j != i {
                        *slot = Some(payload.clone());
                    }
                }
            }
        }
    } else {
        match targets {
            Some(ts) => {
                for &j in ts {
                    row[j] = Some(spec.next_msg(from, PartyId::from_idx(j), round, view).into());
                }
            }
            None => {
                for j in 0..n {
                    if j != i {
                        row[j] =
                            Some(spec.next_msg(from, PartyId::from_idx(j), round, view).into());
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols;

    #[test]
    fn honest_majority_unanimous_zero() {
        let spec = protocols::one_round_majority(9).unwrap();
        let inputs = InputVector::uniform(9, 0);
        let trace = run_honest(&spec, &inputs, Seed::new(1)).unwrap();
        assert_eq!(trace.outputs, vec![Some(0); 9]);
        assert_eq!(trace.halt_round, vec![Some(1); 9]);
    }

    #[test]
    fn honest_majority_counts_votes() {
        let spec = protocols::one_round_majority(9).unwrap();
        // 0^3 1^3 0^3 -> six zeros.
        let trace = run_honest(&spec, &InputVector::parse("000111000").unwrap(), Seed::new(2)).unwrap();
        assert_eq!(trace.outputs, vec![Some(0); 9]);
        // 1^3 1^3 0^3 -> six ones.
        let trace = run_honest(&spec, &InputVector::parse("111111000").unwrap(), Seed::new(2)).unwrap();
        assert_eq!(trace.outputs, vec![Some(1); 9]);
    }

    #[test]
    fn determinism_bit_identical() {
        let spec = protocols::two_round_coin_majority(9, 2).unwrap();
        let inputs = InputVector::parse("000000011").unwrap();
        let a = run_honest(&spec, &inputs, Seed::new(77).trial(3)).unwrap();
        let b = run_honest(&spec, &inputs, Seed::new(77).trial(3)).unwrap();
        assert_eq!(a, b);
        let c = run_honest(&spec, &inputs, Seed::new(77).trial(4)).unwrap();
        assert_ne!(a.coins, c.coins);
    }

    #[test]
    fn vacuous_adversary_matches_honest_run() {
        let spec = protocols::two_round_coin_majority(9, 2).unwrap();
        let inputs = InputVector::parse("000000011").unwrap();
        let seed = Seed::new(5);
        let honest = run_honest(&spec, &inputs, seed).unwrap();
        let attacked = run(&spec, &inputs, &AdversaryStrategy::vacuous(2), seed).unwrap();
        assert_eq!(honest, attacked);
    }

    #[test]
    fn round_prefix_is_stable_under_truncation() {
        let spec = protocols::micali_lite(9, 2, 2).unwrap();
        let inputs = InputVector::parse("000111000").unwrap();
        let seed = Seed::new(11);
        let full = run_honest(&spec, &inputs, seed).unwrap();
        let short = run_honest(&spec.truncated(2), &inputs, seed).unwrap();
        assert_eq!(full.rounds_prefix(2), short.rounds_prefix(2));
        assert_eq!(&full.coins.per_round[..2], &short.coins.per_round[..2]);
    }

    #[test]
    fn halting_budget_marks_bottom() {
        // Inputs with a zero super-majority and a coin majority of one force
        // the coin protocol past round 2 on some seeds.
        let spec = protocols::two_round_coin_majority(9, 2).unwrap();
        let inputs = InputVector::parse("000000001").unwrap();
        let mut saw_bottom = false;
        let mut saw_halt = false;
        for trial in 0..200 {
            let trace = run_honest(&spec, &inputs, Seed::new(13).trial(trial)).unwrap();
            if trace.outputs.iter().all(|o| o.is_none()) {
                saw_bottom = true;
                assert_eq!(trace.halt_round, vec![None; 9]);
            } else {
                saw_halt = true;
                assert_eq!(trace.outputs, vec![Some(0); 9]);
            }
        }
        assert!(saw_bottom && saw_halt);
    }

    #[test]
    fn pr_transparency_holds_for_catalog_pr_protocols() {
        let inputs = InputVector::parse("000111000").unwrap();
        for spec in [
            protocols::two_round_coin_majority(9, 2).unwrap(),
            protocols::micali_lite(9, 2, 2).unwrap(),
        ] {
            for trial in 0..20 {
                let trace = run_honest(&spec, &inputs, Seed::new(3).trial(trial)).unwrap();
                check_pr_transparency(&trace, &spec).unwrap();
            }
        }
    }

    #[test]
    fn input_length_mismatch_is_config_error() {
        let spec = protocols::one_round_majority(9).unwrap();
        let err = run_honest(&spec, &InputVector::uniform(8, 0), Seed::new(1));
        assert!(matches!(err, Err(crate::error::Error::Config(_))));
    }

    #[test]
    fn variant_script_honest_matches_engine() {
        let spec = protocols::two_round_coin_majority(9, 2).unwrap();
        let inputs = InputVector::parse("000000011").unwrap();
        for trial in 0..50 {
            let trace = run_honest(&spec, &inputs, Seed::new(21).trial(trial)).unwrap();
            let outcome = run_variant(
                &spec,
                &inputs,
                &trace.setup,
                &trace.coins,
                &VariantScript::honest(9),
            );
            assert_eq!(outcome.outputs, trace.outputs);
            assert_eq!(outcome.halt_round, trace.halt_round);
        }
    }
}
