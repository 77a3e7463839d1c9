//! Constructive round-halting adversaries and the parameter geometry they
//! share: the first-round input-split attack, the static second-round pivot
//! attack, and the adaptive public-randomness abort attacks.
//!
//! Every strategy built here emits only locally consistent actions; the
//! `adversary` validator can re-derive each corrupted payload from the trace.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adversary::{
    abort_action, select_action, select_action_with, ActionMap, AdversaryStrategy, AdversaryView,
    Behavior, InboxChoice, LcAction, Schedule, Timing, TrialBehavior,
};
use crate::engine::{run_variant, VariantScript};
use crate::error::Error;
use crate::protocol::{pr_payload, ProtocolSpec};
use crate::rng::CounterRng;
use crate::trace::{CoinTape, InputVector, PartyId, SetupBundle};

/// Sample-count constant for the attack-internal estimators.
pub const ESTIMATION_C: f64 = 64.0;
/// Accuracy knob for the agreement attack's pre-interaction estimator.
pub const AGREEMENT_EST_ALPHA: f64 = 0.1;

/// Corruption-threshold regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `t >= n/3`.
    Third,
    /// `t >= n/4`.
    Quarter,
}

/// Which attack family the geometry parameterizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackStage {
    FirstRound,
    SecondRoundArb,
    SecondRoundPr,
}

/// Selector for the geometry's extremal input vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorSel {
    V0,
    V1,
    VStar,
}

/// The parameter bundle shared by the attack builders: pivot-set size `k`,
/// cell size `ell`, cell count `h`, bound parameter `w`, the extremal input
/// vectors, and one oriented attack pair `(from, to)` with its pivot set and
/// cell partition.
#[derive(Debug, Clone)]
pub struct AttackGeometry {
    pub n: usize,
    pub t: usize,
    pub regime: Regime,
    pub stage: AttackStage,
    pub k: usize,
    pub ell: usize,
    pub h: usize,
    pub w: usize,
    pub eps_t: f64,
    pub v0: InputVector,
    pub v1: InputVector,
    pub v_star: Option<InputVector>,
    /// Active oriented pair: the attack assumes honest runs on `from` and
    /// pivots toward `to`.
    pub from: InputVector,
    pub to: InputVector,
    /// Coordinates where `from` and `to` differ.
    pub pivot: BTreeSet<PartyId>,
    /// Partition of the pivot complement into cells `L_1..L_h` (ascending
    /// ids, last cell possibly smaller); empty for the first-round stage.
    pub cells: Vec<BTreeSet<PartyId>>,
}

fn blocks(n: usize, sizes: &[(usize, u8)]) -> InputVector {
    let mut bits = Vec::with_capacity(n);
    for &(len, b) in sizes {
        bits.extend(std::iter::repeat(b).take(len));
    }
    debug_assert_eq!(bits.len(), n);
    InputVector::new(bits).expect("block bits")
}

fn third_vectors(n: usize, k: usize) -> (InputVector, InputVector) {
    let a = (n - k).div_ceil(2);
    let b = (n - k) / 2;
    let v0 = blocks(n, &[(k, 0), (a, 1), (b, 0)]);
    let v1 = blocks(n, &[(k, 1), (a, 1), (b, 0)]);
    (v0, v1)
}

fn quarter_vectors(n: usize, k: usize) -> (InputVector, InputVector, InputVector) {
    let rest = n - 3 * k;
    let v0 = blocks(n, &[(k, 0), (k, 0), (k, 0), (rest, 1)]);
    let v1 = blocks(n, &[(k, 1), (k, 1), (k, 0), (rest, 1)]);
    let v_star = blocks(n, &[(k, 1), (k, 0), (k, 0), (rest, 1)]);
    (v0, v1, v_star)
}

fn partition_cells(n: usize, pivot: &BTreeSet<PartyId>, ell: usize) -> Vec<BTreeSet<PartyId>> {
    let rest: Vec<PartyId> = (1..=n)
        .map(PartyId)
        .filter(|p| !pivot.contains(p))
        .collect();
    rest.chunks(ell.max(1))
        .map(|c| c.iter().copied().collect())
        .collect()
}

impl AttackGeometry {
    /// Geometry from the cited closed-form parameter choices. `eps_t` is
    /// only consulted for the public-randomness stage.
    pub fn derive(
        n: usize,
        t: usize,
        regime: Regime,
        stage: AttackStage,
        eps_t: f64,
    ) -> Result<Self, Error> {
        if t == 0 || t > n {
            return Err(Error::config("t must satisfy 1 <= t <= n"));
        }
        match stage {
            AttackStage::FirstRound => {
                match regime {
                    Regime::Third if 3 * t < n => {
                        return Err(Error::config("first-round third regime needs t >= n/3"))
                    }
                    Regime::Quarter if 4 * t < n => {
                        return Err(Error::config("first-round quarter regime needs t >= n/4"))
                    }
                    Regime::Quarter if 3 * t > n => {
                        return Err(Error::config(
                            "quarter-regime block vectors need 3t <= n; use the third regime",
                        ));
                    }
                    _ => {}
                }
                let mut geom = match regime {
                    Regime::Third => {
                        let (v0, v1) = third_vectors(n, t);
                        AttackGeometry {
                            n,
                            t,
                            regime,
                            stage,
                            k: t,
                            ell: 0,
                            h: 0,
                            w: 0,
                            eps_t: 0.0,
                            v0,
                            v1,
                            v_star: None,
                            from: InputVector::uniform(n, 0),
                            to: InputVector::uniform(n, 0),
                            pivot: BTreeSet::new(),
                            cells: Vec::new(),
                        }
                    }
                    Regime::Quarter => {
                        let (v0, v1, v_star) = quarter_vectors(n, t);
                        AttackGeometry {
                            n,
                            t,
                            regime,
                            stage,
                            k: t,
                            ell: 0,
                            h: 0,
                            w: 0,
                            eps_t: 0.0,
                            v0,
                            v1,
                            v_star: Some(v_star),
                            from: InputVector::uniform(n, 0),
                            to: InputVector::uniform(n, 0),
                            pivot: BTreeSet::new(),
                            cells: Vec::new(),
                        }
                    }
                };
                geom.set_default_pair()?;
                Ok(geom)
            }
            AttackStage::SecondRoundArb => {
                if regime != Regime::Quarter {
                    return Err(Error::config(
                        "the second-round arbitrary-protocol stage uses the quarter-regime construction",
                    ));
                }
                if 4 * t <= n {
                    return Err(Error::config("second-round arbitrary stage needs t > n/4"));
                }
                let k_formula = n.div_ceil(4);
                // The cited pivot size k = ceil(n/4) leaves no room for
                // propagating cells when t - k < 1 (always the case at small
                // n with t barely above n/4); shrink k just enough, keeping
                // the validity anchor n - 3k <= t.
                let k = k_formula.min(t.saturating_sub(1));
                if k == 0 {
                    return Err(Error::config("t too small: no pivot budget left"));
                }
                if 3 * k > n {
                    return Err(Error::config("quarter-regime block vectors need 3k <= n"));
                }
                if n - 3 * k > t {
                    return Err(Error::config(
                        "validity anchor violated: dist(v0, 0^n) = n - 3k must be <= t",
                    ));
                }
                let ell = t - k;
                let h = (n - k).div_ceil(ell);
                // Bound parameter: the theorem's exact expression when its
                // denominator floor(t - n/4) is nonzero, else h + 1 from the
                // realized partition.
                let den = (4 * t).saturating_sub(n) / 4;
                let w = if den >= 1 {
                    (n - n.div_ceil(4)).div_ceil(den) + 1
                } else {
                    h + 1
                };
                let (v0, v1, v_star) = quarter_vectors(n, k);
                let mut geom = AttackGeometry {
                    n,
                    t,
                    regime,
                    stage,
                    k,
                    ell,
                    h,
                    w,
                    eps_t: 0.0,
                    v0,
                    v1,
                    v_star: Some(v_star),
                    from: InputVector::uniform(n, 0),
                    to: InputVector::uniform(n, 0),
                    pivot: BTreeSet::new(),
                    cells: Vec::new(),
                };
                geom.set_default_pair()?;
                Ok(geom)
            }
            AttackStage::SecondRoundPr => {
                if !(eps_t > 0.0) {
                    return Err(Error::config("public-randomness stage needs eps_t > 0"));
                }
                let threshold = match regime {
                    Regime::Third => 1.0 / 3.0,
                    Regime::Quarter => 0.25,
                };
                if (t as f64) < (threshold + eps_t) * n as f64 - 1e-9 {
                    return Err(Error::config(format!(
                        "public-randomness stage needs t >= ({threshold:.4} + eps_t) * n"
                    )));
                }
                let k = ((t as f64 - eps_t * n as f64) - 1e-9).ceil().max(1.0) as usize;
                let ell = (t.saturating_sub(k)) / 2;
                if ell == 0 {
                    return Err(Error::config(
                        "ell = floor((t - k)/2) = 0: the cited parameters are infeasible at this \
                         scale; use AttackGeometry::custom",
                    ));
                }
                Self::build_pr(n, t, regime, eps_t, k, ell, true)
            }
        }
    }

    /// Desk-scale geometry with caller-chosen pivot and cell sizes. Skips the
    /// theorem-proof validity anchors; structural feasibility (block layout,
    /// pivot-plus-one-cell budget) is still enforced.
    pub fn custom(
        n: usize,
        t: usize,
        regime: Regime,
        stage: AttackStage,
        k: usize,
        ell: usize,
        eps_t: f64,
    ) -> Result<Self, Error> {
        if stage == AttackStage::FirstRound {
            return Err(Error::config(
                "first-round geometry has no free parameters; use derive",
            ));
        }
        if k == 0 || ell == 0 {
            return Err(Error::config("k and ell must be positive"));
        }
        if k + ell > t {
            return Err(Error::config(format!(
                "pivot plus one cell exceeds the corruption budget: {k} + {ell} > {t}"
            )));
        }
        match regime {
            Regime::Quarter if 3 * k > n => {
                return Err(Error::config("quarter-regime block vectors need 3k <= n"))
            }
            Regime::Third if k >= n => return Err(Error::config("k must be below n")),
            _ => {}
        }
        match stage {
            AttackStage::SecondRoundArb => {
                let h = (n - k).div_ceil(ell);
                let (v0, v1, v_star) = quarter_vectors(n, k);
                let mut geom = AttackGeometry {
                    n,
                    t,
                    regime,
                    stage,
                    k,
                    ell,
                    h,
                    w: h + 1,
                    eps_t,
                    v0,
                    v1,
                    v_star: Some(v_star),
                    from: InputVector::uniform(n, 0),
                    to: InputVector::uniform(n, 0),
                    pivot: BTreeSet::new(),
                    cells: Vec::new(),
                };
                geom.set_default_pair()?;
                Ok(geom)
            }
            AttackStage::SecondRoundPr => Self::build_pr(n, t, regime, eps_t, k, ell, false),
            AttackStage::FirstRound => unreachable!(),
        }
    }

    fn build_pr(
        n: usize,
        t: usize,
        regime: Regime,
        eps_t: f64,
        k: usize,
        ell: usize,
        check_anchor: bool,
    ) -> Result<Self, Error> {
        if k + ell > t {
            return Err(Error::config(format!(
                "pivot plus one cell exceeds the corruption budget: {k} + {ell} > {t}"
            )));
        }
        let h = (n - k).div_ceil(ell);
        let mut geom = match regime {
            Regime::Third => {
                let (v0, v1) = third_vectors(n, k);
                if check_anchor && (n - k).div_ceil(2) > t {
                    return Err(Error::config(
                        "validity anchor violated: dist(v0, 0^n) must be <= t",
                    ));
                }
                AttackGeometry {
                    n,
                    t,
                    regime,
                    stage: AttackStage::SecondRoundPr,
                    k,
                    ell,
                    h,
                    w: h + 1,
                    eps_t,
                    v0,
                    v1,
                    v_star: None,
                    from: InputVector::uniform(n, 0),
                    to: InputVector::uniform(n, 0),
                    pivot: BTreeSet::new(),
                    cells: Vec::new(),
                }
            }
            Regime::Quarter => {
                if 3 * k > n {
                    return Err(Error::config("quarter-regime block vectors need 3k <= n"));
                }
                if check_anchor && n - 3 * k > t {
                    return Err(Error::config(
                        "validity anchor violated: dist(v0, 0^n) = n - 3k must be <= t",
                    ));
                }
                let (v0, v1, v_star) = quarter_vectors(n, k);
                AttackGeometry {
                    n,
                    t,
                    regime,
                    stage: AttackStage::SecondRoundPr,
                    k,
                    ell,
                    h,
                    w: h + 1,
                    eps_t,
                    v0,
                    v1,
                    v_star: Some(v_star),
                    from: InputVector::uniform(n, 0),
                    to: InputVector::uniform(n, 0),
                    pivot: BTreeSet::new(),
                    cells: Vec::new(),
                }
            }
        };
        geom.set_default_pair()?;
        Ok(geom)
    }

    fn set_default_pair(&mut self) -> Result<(), Error> {
        let (from, to) = match self.regime {
            Regime::Third => (VectorSel::V0, VectorSel::V1),
            Regime::Quarter => (VectorSel::V0, VectorSel::VStar),
        };
        self.orient_in_place(from, to)
    }

    fn vector(&self, sel: VectorSel) -> Result<InputVector, Error> {
        match sel {
            VectorSel::V0 => Ok(self.v0.clone()),
            VectorSel::V1 => Ok(self.v1.clone()),
            VectorSel::VStar => self
                .v_star
                .clone()
                .ok_or_else(|| Error::config("this regime has no v_star vector")),
        }
    }

    fn orient_in_place(&mut self, from: VectorSel, to: VectorSel) -> Result<(), Error> {
        let from_v = self.vector(from)?;
        let to_v = self.vector(to)?;
        let diff = from_v.diff_coords(&to_v);
        if diff.is_empty() {
            return Err(Error::config("attack pair vectors are identical"));
        }
        if diff.len() > self.k {
            return Err(Error::config(format!(
                "pair distance {} exceeds pivot size k = {}",
                diff.len(),
                self.k
            )));
        }
        self.pivot = diff.iter().map(|&i| PartyId::from_idx(i)).collect();
        self.cells = if self.stage == AttackStage::FirstRound {
            Vec::new()
        } else {
            partition_cells(self.n, &self.pivot, self.ell)
        };
        self.from = from_v;
        self.to = to_v;
        // The realized cell count can differ from ceil((n-k)/ell) only when
        // rounding bites; keep h consistent with the partition in play.
        if !self.cells.is_empty() {
            self.h = self.cells.len();
        }
        Ok(())
    }

    /// A copy of the geometry re-oriented to a different attack pair.
    pub fn oriented(&self, from: VectorSel, to: VectorSel) -> Result<Self, Error> {
        let mut g = self.clone();
        g.orient_in_place(from, to)?;
        Ok(g)
    }

    /// The attack pairs the regime's proof walks through, as oriented
    /// geometries: one per direction that the audit suite exercises.
    pub fn suite_orientations(&self) -> Vec<AttackGeometry> {
        let pairs: Vec<(VectorSel, VectorSel)> = match self.regime {
            Regime::Third => vec![(VectorSel::V0, VectorSel::V1), (VectorSel::V1, VectorSel::V0)],
            Regime::Quarter => vec![
                (VectorSel::V0, VectorSel::VStar),
                (VectorSel::V1, VectorSel::VStar),
                (VectorSel::VStar, VectorSel::V0),
            ],
        };
        pairs
            .into_iter()
            .filter_map(|(a, b)| self.oriented(a, b).ok())
            .collect()
    }

    /// One-based cell id of a party (0 for pivot members).
    pub fn cell_of(&self, p: PartyId) -> usize {
        self.cells
            .iter()
            .position(|c| c.contains(&p))
            .map(|i| i + 1)
            .unwrap_or(0)
    }

    /// First-round split-failure error term `2^(t-n)`.
    pub fn err_term(&self) -> f64 {
        2f64.powi(self.t as i32 - self.n as i32)
    }

    /// Scripted-variant view of this geometry for a given face `d` and abort
    /// set, consumable by [`run_variant`].
    pub fn script(&self, d: usize, abort: &BTreeSet<PartyId>) -> VariantScript {
        let n = self.n;
        let mut pivot = vec![false; n];
        for p in &self.pivot {
            pivot[p.idx()] = true;
        }
        let mut cell_of = vec![0usize; n];
        for (ci, cell) in self.cells.iter().enumerate() {
            for p in cell {
                cell_of[p.idx()] = ci + 1;
            }
        }
        let mut round2_abort = vec![false; n];
        for p in abort {
            round2_abort[p.idx()] = true;
        }
        VariantScript {
            pivot,
            d,
            h: self.h,
            cell_of,
            round2_abort,
        }
    }
}

/// Random abort set drawn from `D_{n,sigma}` conditioned on `|S| <= 2*sigma*n`.
#[derive(Debug, Clone)]
pub struct AbortSet {
    pub members: BTreeSet<PartyId>,
    pub sigma: f64,
    pub cap: usize,
}

/// Rejection-samples independent Bernoulli(sigma) memberships until the cap
/// holds. Requires `0 < sigma < 1/2`.
pub fn sample_abort_set(n: usize, sigma: f64, rng: &mut CounterRng) -> Result<AbortSet, Error> {
    if !(sigma > 0.0 && sigma < 0.5) {
        return Err(Error::config("sigma must lie in (0, 1/2)"));
    }
    let cap = (2.0 * sigma * n as f64).floor() as usize;
    loop {
        let members: BTreeSet<PartyId> = (1..=n)
            .map(PartyId)
            .filter(|_| rng.bernoulli(sigma))
            .collect();
        if members.len() <= cap {
            return Ok(AbortSet {
                members,
                sigma,
                cap,
            });
        }
    }
}

// ---------------------------------------------------------------------------
// Face tables shared by the pivot-family behaviors.
// ---------------------------------------------------------------------------

/// One face of the pivot/abort family: protocol variant `d` with the given
/// round-2 abort set.
#[derive(Debug, Clone)]
struct Face {
    d: usize,
    abort: BTreeSet<PartyId>,
}

/// Round-1 action of pivot sender `i` toward receiver `j` under variant `d`,
/// with an optional equivocation cell that receives both input faces.
fn pivot_round1_action(
    geom: &AttackGeometry,
    input_bit: u8,
    receiver: PartyId,
    d: usize,
    equivocate_cell: Option<usize>,
) -> Vec<LcAction> {
    let h = geom.h;
    if d == 0 && equivocate_cell.is_none() {
        return vec![select_action(input_bit)];
    }
    if d == h && h > 0 {
        return vec![select_action(input_bit ^ 1)];
    }
    let cell = geom.cell_of(receiver);
    if cell == 0 {
        // Fellow pivot member.
        if d == 0 {
            return vec![select_action(input_bit)];
        }
        return vec![abort_action()];
    }
    if Some(cell) == equivocate_cell {
        // True face first so honest processing matches variant d; the
        // flipped face stays claimable after the receiver is corrupted.
        return vec![select_action(input_bit), select_action(input_bit ^ 1)];
    }
    if cell <= d {
        vec![select_action(input_bit ^ 1)]
    } else {
        vec![select_action(input_bit)]
    }
}

/// Round-2 action of pivot sender under face `f`.
fn pivot_round2_action(geom: &AttackGeometry, input_bit: u8, f: &Face) -> LcAction {
    if f.d == 0 {
        select_action(input_bit)
    } else if f.d == geom.h && geom.h > 0 {
        select_action(input_bit ^ 1)
    } else {
        abort_action()
    }
}

/// Round-2 action of an equivocating cell member: acknowledge the pivot
/// round-1 face matching variant `dd`. `cell` is the member's own cell id.
fn cell_round2_action(
    geom: &AttackGeometry,
    view: &AdversaryView<'_>,
    member: PartyId,
    cell: usize,
    dd: usize,
) -> LcAction {
    let input = view.party(member).input_bit;
    if cell > dd {
        // The accepted (true-input) pivot face is already the right one.
        return select_action(input);
    }
    // Claim the flipped-face payloads delivered by each pivot sender.
    let mut overrides = BTreeMap::new();
    for &p in &geom.pivot {
        let delivered = view.delivered(1, p, member);
        let distinct: Vec<&[u8]> = {
            let mut seen: Vec<&[u8]> = Vec::new();
            for slot in delivered.iter().flatten() {
                let bytes: &[u8] = slot;
                if !seen.contains(&bytes) {
                    seen.push(bytes);
                }
            }
            seen
        };
        if distinct.len() >= 2 {
            overrides.insert((1usize, p), InboxChoice::Payload(distinct[1].to_vec()));
        }
    }
    select_action_with(input, overrides)
}

// ---------------------------------------------------------------------------
// First-round attack.
// ---------------------------------------------------------------------------

struct FirstRoundBehavior {
    spec: ProtocolSpec,
    geom: AttackGeometry,
    rushing: bool,
}

struct FirstRoundTrial {
    spec: ProtocolSpec,
    geom: AttackGeometry,
    rushing: bool,
    rng: CounterRng,
}

impl Behavior for FirstRoundBehavior {
    fn begin_trial(&self, rng: CounterRng) -> Box<dyn TrialBehavior> {
        Box::new(FirstRoundTrial {
            spec: self.spec.clone(),
            geom: self.geom.clone(),
            rushing: self.rushing,
            rng,
        })
    }
}

impl TrialBehavior for FirstRoundTrial {
    fn actions(&mut self, view: &AdversaryView<'_>) -> ActionMap {
        let mut map = ActionMap::new();
        let n = self.geom.n;
        if view.round > 1 {
            for &i in view.corrupted.iter() {
                for j in (1..=n).map(PartyId) {
                    if j != i {
                        map.set(i, j, abort_action());
                    }
                }
            }
            return map;
        }
        let honest: BTreeSet<PartyId> = (1..=n)
            .map(PartyId)
            .filter(|p| !view.corrupted.contains(p))
            .collect();
        if self.rushing && self.spec.public_randomness {
            // Rushing variant: inspect the honest round-1 messages, find a
            // face that denies halting (or failing that, forces
            // disagreement), and present it to everybody.
            let face = self.pick_rushed_face(view, &honest);
            for &i in view.corrupted.iter() {
                let claimed = face.bit(i);
                for j in (1..=n).map(PartyId) {
                    if j != i {
                        map.set(i, j, select_action(claimed));
                    }
                }
            }
            return map;
        }
        // Non-rushing: a uniformly random split of the honest parties sees
        // the `from` face; the rest see the `to` face.
        let (half0, _half1) = crate::adversary::split_honest(&honest, &mut self.rng);
        for &i in view.corrupted.iter() {
            let from_bit = self.geom.from.bit(i);
            let to_bit = self.geom.to.bit(i);
            for j in (1..=n).map(PartyId) {
                if j == i {
                    continue;
                }
                let claimed = if half0.contains(&j) { from_bit } else { to_bit };
                map.set(i, j, select_action(claimed));
            }
        }
        map
    }
}

impl FirstRoundTrial {
    /// Simulate both candidate faces on the observed honest round and choose
    /// the one that prevents halting, else forces disagreement, else `from`.
    ///
    /// Reconstruction assumes the multicast layout and the pair's intended
    /// honest inputs (the pair vectors agree outside the pivot set).
    fn pick_rushed_face(
        &self,
        view: &AdversaryView<'_>,
        honest: &BTreeSet<PartyId>,
    ) -> InputVector {
        let n = self.geom.n;
        let rushed = match view.rushed {
            Some(r) if !r.is_empty() => r,
            _ => return self.geom.from.clone(),
        };
        // One observed payload per honest sender (multicast).
        let mut observed: Vec<Option<Vec<u8>>> = vec![None; n];
        for m in rushed {
            let s = &mut observed[m.from.idx()];
            if s.is_none() {
                *s = Some(m.payload.clone());
            }
        }
        let mut setups: Vec<Vec<u8>> = vec![Vec::new(); n];
        let mut coins1: Vec<u64> = vec![0; n];
        for i in 0..n {
            if let Some(p) = &observed[i] {
                if let Ok(d) = pr_payload::decode(p) {
                    setups[i] = d.setup.to_vec();
                    coins1[i] = d.coin.unwrap_or(0);
                }
            }
        }
        for &p in view.corrupted.iter() {
            let v = view.party(p);
            setups[p.idx()] = v.setup.clone();
            coins1[p.idx()] = v.coins.first().copied().unwrap_or(0);
        }
        let setup = SetupBundle {
            source: "rushed-reconstruction".into(),
            per_party: setups,
        };
        let tape = CoinTape {
            per_round: vec![coins1],
        };
        let mut deny_halt: Option<InputVector> = None;
        let mut deny_agree: Option<InputVector> = None;
        for face in [self.geom.from.clone(), self.geom.to.clone()] {
            // Honest inputs are the pair's shared coordinates; pivot
            // coordinates take the face bits.
            let mut bits = self.geom.from.bits().to_vec();
            for &p in view.corrupted.iter() {
                bits[p.idx()] = face.bit(p);
            }
            let inputs = InputVector::new(bits).expect("bits");
            let outcome = run_variant(
                &self.spec,
                &inputs,
                &setup,
                &tape,
                &VariantScript::honest(n),
            );
            let honest_idx: Vec<usize> = honest.iter().map(|p| p.idx()).collect();
            let all_halt = honest_idx.iter().all(|&i| outcome.outputs[i].is_some());
            if !all_halt {
                deny_halt.get_or_insert(face.clone());
            } else if outcome
                .common_output(honest_idx.iter().copied())
                .is_none()
            {
                deny_agree.get_or_insert(face.clone());
            }
        }
        deny_halt
            .or(deny_agree)
            .unwrap_or_else(|| self.geom.from.clone())
    }
}

/// Static first-round attack: corrupt the pivot set, present the `from` face
/// to a random honest half and the `to` face to the rest, then abort. With
/// `rushing` on a public-randomness protocol the strategy instead inspects
/// the honest round-1 messages and commits to the single face that denies
/// halting or forces disagreement.
pub fn first_round_attack(
    spec: &ProtocolSpec,
    geom: &AttackGeometry,
    rushing: bool,
) -> Result<AdversaryStrategy, Error> {
    if geom.pivot.len() > geom.t {
        return Err(Error::config(format!(
            "pivot set of size {} exceeds budget t = {}",
            geom.pivot.len(),
            geom.t
        )));
    }
    if geom.n != spec.n {
        return Err(Error::config("geometry and protocol disagree on n"));
    }
    if rushing && !spec.public_randomness {
        return Err(Error::config(
            "the rushing face-selection variant requires a public-randomness protocol",
        ));
    }
    let timing = if rushing {
        Timing::Rushing
    } else {
        Timing::NonRushing
    };
    Ok(AdversaryStrategy::new(
        format!("first-round{}", if rushing { "-rushing" } else { "" }),
        geom.t,
        timing,
        Schedule::Static(geom.pivot.clone()),
        Arc::new(FirstRoundBehavior {
            spec: spec.clone(),
            geom: geom.clone(),
            rushing,
        }),
    ))
}

// ---------------------------------------------------------------------------
// Pivot variants (the protocol family executor) and the static second-round
// attack built from them.
// ---------------------------------------------------------------------------

struct SingleFaceBehavior {
    geom: AttackGeometry,
    face: Face,
    /// When set, `d` is re-sampled uniformly from `0..=h` each trial and the
    /// abort set stays empty (the halting-denial accounting strategy).
    random_d: bool,
}

struct SingleFaceTrial {
    geom: AttackGeometry,
    face: Face,
}

impl Behavior for SingleFaceBehavior {
    fn begin_trial(&self, mut rng: CounterRng) -> Box<dyn TrialBehavior> {
        let face = if self.random_d {
            Face {
                d: rng.below(self.geom.h as u64 + 1) as usize,
                abort: BTreeSet::new(),
            }
        } else {
            self.face.clone()
        };
        Box::new(SingleFaceTrial {
            geom: self.geom.clone(),
            face,
        })
    }
}

impl TrialBehavior for SingleFaceTrial {
    fn actions(&mut self, view: &AdversaryView<'_>) -> ActionMap {
        let mut map = ActionMap::new();
        let geom = &self.geom;
        let n = geom.n;
        for &i in view.corrupted.iter() {
            let input = view.party(i).input_bit;
            let in_pivot = geom.pivot.contains(&i);
            for j in (1..=n).map(PartyId) {
                if j == i {
                    continue;
                }
                match view.round {
                    1 => {
                        if in_pivot {
                            let actions =
                                pivot_round1_action(geom, input, j, self.face.d, None);
                            map.actions.insert((i, j), actions);
                        }
                        // Abort-set members play honestly in round 1.
                    }
                    2 => {
                        if self.face.abort.contains(&i) {
                            map.set(i, j, abort_action());
                        } else if in_pivot {
                            map.set(i, j, pivot_round2_action(geom, input, &self.face));
                        }
                    }
                    _ => {
                        map.set(i, j, abort_action());
                    }
                }
            }
        }
        map
    }
}

/// One member of the pivot/abort protocol family as a strategy: pivot
/// parties present the `d`-face split in round 1 and abort in round 2 for
/// interior `d`; abort-set members play round 1 honestly and abort in round
/// 2. The endpoints `d = 0` and `d = h` degenerate to honest play on the
/// original and pivot-flipped inputs.
pub fn pivot_variant(
    spec: &ProtocolSpec,
    geom: &AttackGeometry,
    d: usize,
    abort: &BTreeSet<PartyId>,
) -> Result<AdversaryStrategy, Error> {
    if d > geom.h {
        return Err(Error::config(format!("d = {d} out of range 0..={}", geom.h)));
    }
    if geom.n != spec.n {
        return Err(Error::config("geometry and protocol disagree on n"));
    }
    let corrupt: BTreeSet<PartyId> = geom.pivot.union(abort).copied().collect();
    if corrupt.len() > geom.t {
        return Err(Error::config(format!(
            "pivot plus abort set exceeds budget t = {}",
            geom.t
        )));
    }
    Ok(AdversaryStrategy::new(
        format!("pivot-variant-d{d}"),
        geom.t,
        Timing::NonRushing,
        Schedule::Static(corrupt),
        Arc::new(SingleFaceBehavior {
            geom: geom.clone(),
            face: Face {
                d,
                abort: abort.clone(),
            },
            random_d: false,
        }),
    ))
}

/// Halting-denial strategy: corrupt the pivot set and play a uniformly
/// random pivot variant each trial.
pub fn pivot_random_d(spec: &ProtocolSpec, geom: &AttackGeometry) -> Result<AdversaryStrategy, Error> {
    if geom.n != spec.n {
        return Err(Error::config("geometry and protocol disagree on n"));
    }
    if geom.pivot.len() > geom.t {
        return Err(Error::config("pivot set exceeds budget"));
    }
    Ok(AdversaryStrategy::new(
        "pivot-random-d",
        geom.t,
        Timing::NonRushing,
        Schedule::Static(geom.pivot.clone()),
        Arc::new(SingleFaceBehavior {
            geom: geom.clone(),
            face: Face {
                d: 0,
                abort: BTreeSet::new(),
            },
            random_d: true,
        }),
    ))
}

struct StaticTwoFaceBehavior {
    geom: AttackGeometry,
}

struct StaticTwoFaceTrial {
    geom: AttackGeometry,
    rng: CounterRng,
    d: usize,
    half0: BTreeSet<PartyId>,
    corrupt: BTreeSet<PartyId>,
}

impl Behavior for StaticTwoFaceBehavior {
    fn begin_trial(&self, mut rng: CounterRng) -> Box<dyn TrialBehavior> {
        let d = rng.below(self.geom.h as u64) as usize;
        Box::new(StaticTwoFaceTrial {
            geom: self.geom.clone(),
            rng,
            d,
            half0: BTreeSet::new(),
            corrupt: BTreeSet::new(),
        })
    }
}

impl TrialBehavior for StaticTwoFaceTrial {
    fn initial_corruptions(&mut self) -> BTreeSet<PartyId> {
        let mut corrupt = self.geom.pivot.clone();
        corrupt.extend(self.geom.cells[self.d].iter().copied());
        let honest: BTreeSet<PartyId> = (1..=self.geom.n)
            .map(PartyId)
            .filter(|p| !corrupt.contains(p))
            .collect();
        let (half0, _) = crate::adversary::split_honest(&honest, &mut self.rng);
        self.half0 = half0;
        self.corrupt = corrupt.clone();
        corrupt
    }

    fn actions(&mut self, view: &AdversaryView<'_>) -> ActionMap {
        let mut map = ActionMap::new();
        let geom = &self.geom;
        let n = geom.n;
        let d = self.d;
        for &i in view.corrupted.iter() {
            let input = view.party(i).input_bit;
            let in_pivot = geom.pivot.contains(&i);
            let own_cell = geom.cell_of(i);
            for j in (1..=n).map(PartyId) {
                if j == i {
                    continue;
                }
                // Face per receiver: half0 experiences variant d, the rest
                // experience variant d+1; corrupted receivers get the d-face
                // table plus the equivocation double-send.
                let dd = if view.corrupted.contains(&j) || self.half0.contains(&j) {
                    d
                } else {
                    d + 1
                };
                match view.round {
                    1 => {
                        if in_pivot {
                            let actions =
                                pivot_round1_action(geom, input, j, d, Some(d + 1));
                            map.actions.insert((i, j), actions);
                        }
                    }
                    2 => {
                        if in_pivot {
                            let face = Face {
                                d: dd,
                                abort: BTreeSet::new(),
                            };
                            map.set(i, j, pivot_round2_action(geom, input, &face));
                        } else if own_cell == d + 1 {
                            map.set(i, j, cell_round2_action(geom, view, i, own_cell, dd));
                        }
                    }
                    _ => {
                        map.set(i, j, abort_action());
                    }
                }
            }
        }
        map
    }
}

/// The static second-round attack: sample a boundary index `d`, corrupt the
/// pivot set together with cell `L_{d+1}`, and present variant `d` to one
/// random honest half and variant `d+1` to the other. Cell members equivocate
/// about which pivot round-1 face they acknowledge.
pub fn second_round_static_attack(
    spec: &ProtocolSpec,
    geom: &AttackGeometry,
) -> Result<AdversaryStrategy, Error> {
    if geom.stage == AttackStage::FirstRound {
        return Err(Error::config("geometry was built for the first-round stage"));
    }
    if geom.n != spec.n {
        return Err(Error::config("geometry and protocol disagree on n"));
    }
    if geom.h == 0 {
        return Err(Error::config("geometry has no cells"));
    }
    let worst = geom.k + geom.cells.iter().map(|c| c.len()).max().unwrap_or(0);
    if worst > geom.t {
        return Err(Error::config(format!(
            "pivot plus one cell exceeds budget: {worst} > t = {}",
            geom.t
        )));
    }
    Ok(AdversaryStrategy::new(
        "second-round-static",
        geom.t,
        Timing::NonRushing,
        Schedule::Static(BTreeSet::new()),
        Arc::new(StaticTwoFaceBehavior { geom: geom.clone() }),
    ))
}

// ---------------------------------------------------------------------------
// Public-randomness attacks (rushing; the halting attack is also adaptive).
// ---------------------------------------------------------------------------

/// Common preconditions for the public-randomness attack family.
///
/// Round-1 coins need not be empty: a rushing adversary observes them in the
/// round-1 messages and pins them alongside the setup, which is the same
/// recast as relocating them into the setup parameter.
fn check_pr_target(spec: &ProtocolSpec, geom: &AttackGeometry) -> Result<(), Error> {
    if geom.n != spec.n {
        return Err(Error::config("geometry and protocol disagree on n"));
    }
    if !spec.public_randomness {
        return Err(Error::config(
            "public-randomness attacks require a public-randomness protocol",
        ));
    }
    if spec.q != 2 {
        return Err(Error::config(
            "public-randomness attacks target two-round halting; truncate the protocol to q = 2",
        ));
    }
    if !spec.multicast {
        return Err(Error::config(
            "the attack's state reconstruction assumes a multicast protocol",
        ));
    }
    if geom.h < 2 {
        return Err(Error::config("geometry needs at least two cells"));
    }
    Ok(())
}

/// True when the post-round-1 tape space is a single point (no party flips
/// coins after round 1), in which case one simulated draw decides everything.
fn tape_space_trivial(spec: &ProtocolSpec) -> bool {
    (2..=spec.q).all(|r| spec.coin_domain(r).is_empty())
}

fn draw_tape(spec: &ProtocolSpec, rng: &mut CounterRng) -> CoinTape {
    let per_round = (1..=spec.q)
        .map(|r| {
            let dom = spec.coin_domain(r);
            (0..spec.n).map(|_| dom.sample(rng)).collect()
        })
        .collect();
    CoinTape { per_round }
}

/// Evaluation helper around the scripted simulator: common halting outputs of
/// pivot/abort variants over chosen survivor sets.
struct FamilyEval<'a> {
    spec: &'a ProtocolSpec,
    geom: &'a AttackGeometry,
    inputs: &'a InputVector,
    setup: &'a SetupBundle,
}

impl FamilyEval<'_> {
    fn outcome(&self, d: usize, abort: &BTreeSet<PartyId>, tape: &CoinTape) -> crate::engine::VariantOutcome {
        run_variant(
            self.spec,
            self.inputs,
            self.setup,
            tape,
            &self.geom.script(d, abort),
        )
    }

    /// The common output of all parties outside `excluded`, provided they all
    /// halted on the same bit; `None` otherwise.
    fn common_excluding(
        &self,
        outcome: &crate::engine::VariantOutcome,
        excluded: &BTreeSet<PartyId>,
    ) -> Option<u8> {
        outcome.common_output(
            (0..self.geom.n).filter(|&i| !excluded.contains(&PartyId::from_idx(i))),
        )
    }

    /// Common output of variant `d` with the given abort set, over the
    /// parties outside pivot-union-abort.
    fn variant_common(&self, d: usize, abort: &BTreeSet<PartyId>, tape: &CoinTape) -> Option<u8> {
        let mut excl = self.geom.pivot.clone();
        excl.extend(abort.iter().copied());
        let outcome = self.outcome(d, abort, tape);
        self.common_excluding(&outcome, &excl)
    }
}

/// Membership of the pair ((f,S,r), (f,0,r)) in the robust-halting family at
/// index `i`: both abort faces must halt with a per-face common output that
/// is stable across variants `i` and `i+1`.
fn robust_pair_member(commons: &dyn Fn(usize, bool) -> Option<u8>, i: usize) -> bool {
    for with_abort in [true, false] {
        let a = commons(i, with_abort);
        if a.is_none() || a != commons(i + 1, with_abort) {
            return false;
        }
    }
    true
}

#[derive(Debug, Clone)]
struct HaltingPlan {
    d: usize,
    abort: BTreeSet<PartyId>,
    setup: SetupBundle,
    /// Observed round-1 coins, pinned for all variant simulations.
    round1_coins: Vec<u64>,
    best_xi: f64,
}

struct PrHaltingBehavior {
    spec: ProtocolSpec,
    geom: AttackGeometry,
    sigma: f64,
    lambda: f64,
    delta: f64,
}

struct PrHaltingTrial {
    spec: ProtocolSpec,
    geom: AttackGeometry,
    sigma: f64,
    lambda: f64,
    delta: f64,
    rng: CounterRng,
    plan: Option<HaltingPlan>,
}

impl Behavior for PrHaltingBehavior {
    fn begin_trial(&self, rng: CounterRng) -> Box<dyn TrialBehavior> {
        Box::new(PrHaltingTrial {
            spec: self.spec.clone(),
            geom: self.geom.clone(),
            sigma: self.sigma,
            lambda: self.lambda,
            delta: self.delta,
            rng,
            plan: None,
        })
    }
}

/// Reconstruct the setup bundle and round-1 coins from rushed round-1
/// messages plus the corrupted parties' own state (multicast protocols
/// deliver every honest payload to some corrupted receiver).
fn reconstruct_observed(n: usize, view: &AdversaryView<'_>) -> (SetupBundle, Vec<u64>) {
    let mut per_party: Vec<Vec<u8>> = vec![Vec::new(); n];
    let mut coins = vec![0u64; n];
    let mut seen = vec![false; n];
    if let Some(rushed) = view.rushed {
        for m in rushed {
            let i = m.from.idx();
            if !seen[i] {
                if let Ok(d) = pr_payload::decode(&m.payload) {
                    per_party[i] = d.setup.to_vec();
                    coins[i] = d.coin.unwrap_or(0);
                    seen[i] = true;
                }
            }
        }
    }
    for &p in view.corrupted.iter() {
        let v = view.party(p);
        per_party[p.idx()] = v.setup.clone();
        coins[p.idx()] = v.coins.first().copied().unwrap_or(0);
    }
    (
        SetupBundle {
            source: "rushed-reconstruction".into(),
            per_party,
        },
        coins,
    )
}

/// Reconstruct the full coin tape: pinned round-1 coins plus the round-2
/// coins read from rushed round-2 messages and the corrupted parties' own
/// engine-sampled coins.
fn reconstruct_tape(spec: &ProtocolSpec, view: &AdversaryView<'_>, round1: &[u64]) -> CoinTape {
    let n = spec.n;
    let mut round2 = vec![0u64; n];
    if let Some(rushed) = view.rushed {
        for m in rushed {
            if let Ok(d) = pr_payload::decode(&m.payload) {
                if let Some(c) = d.coin {
                    round2[m.from.idx()] = c;
                }
            }
        }
    }
    for &p in view.corrupted.iter() {
        if let Some(&c) = view.party(p).coins.get(1) {
            round2[p.idx()] = c;
        }
    }
    CoinTape {
        per_round: vec![round1.to_vec(), round2],
    }
}

impl PrHaltingTrial {
    fn estimate_plan(&mut self, view: &AdversaryView<'_>) -> HaltingPlan {
        let geom = &self.geom;
        let h = geom.h;
        let (setup, round1_coins) = reconstruct_observed(geom.n, view);
        let eval = FamilyEval {
            spec: &self.spec,
            geom,
            inputs: &geom.from,
            setup: &setup,
        };
        let samples = if tape_space_trivial(&self.spec) {
            1
        } else {
            (ESTIMATION_C * (h as f64 / self.lambda).ln()).ceil() as usize
        };
        let mut pool_rng = self.rng.fork(0x7a9e);
        let pool: Vec<CoinTape> = (0..samples)
            .map(|_| {
                let mut t = draw_tape(&self.spec, &mut pool_rng);
                t.per_round[0].copy_from_slice(&round1_coins);
                t
            })
            .collect();

        // Abort-free variant outcomes are shared across loop iterations.
        let empty = BTreeSet::new();
        let noabort: Vec<Vec<Option<u8>>> = (0..=h)
            .map(|d| pool.iter().map(|tape| eval.variant_common(d, &empty, tape)).collect())
            .collect();

        let loop_budget = (1.0 / (self.lambda * self.delta)).ceil() as usize;
        let mut best: Option<HaltingPlan> = None;
        for _ in 0..loop_budget {
            let abort = sample_abort_set(geom.n, self.sigma, &mut self.rng)
                .expect("sigma validated at construction")
                .members;
            let aborted: Vec<Vec<Option<u8>>> = (0..=h)
                .map(|d| pool.iter().map(|tape| eval.variant_common(d, &abort, tape)).collect())
                .collect();
            let mut xi_min = f64::INFINITY;
            let mut d_min = 0usize;
            for i in 0..h {
                let hits = (0..pool.len())
                    .filter(|&ti| {
                        let commons = |j: usize, with_abort: bool| {
                            if with_abort {
                                aborted[j][ti]
                            } else {
                                noabort[j][ti]
                            }
                        };
                        robust_pair_member(&commons, i)
                    })
                    .count();
                let xi = hits as f64 / pool.len() as f64;
                if xi < xi_min {
                    xi_min = xi;
                    d_min = i;
                }
            }
            let plan = HaltingPlan {
                d: d_min,
                abort,
                setup: setup.clone(),
                round1_coins: round1_coins.clone(),
                best_xi: xi_min,
            };
            let improved = best.as_ref().map_or(true, |b| plan.best_xi < b.best_xi);
            if improved {
                best = Some(plan);
            }
            if xi_min < 2.0 * self.lambda {
                break;
            }
        }
        best.expect("loop budget is at least one")
    }

    fn round2_map(&self, view: &AdversaryView<'_>, dd: usize, abort: &BTreeSet<PartyId>) -> ActionMap {
        let geom = &self.geom;
        let plan = self.plan.as_ref().expect("round 1 ran");
        let mut map = ActionMap::new();
        for &i in view.corrupted.iter() {
            let input = view.party(i).input_bit;
            let own_cell = geom.cell_of(i);
            for j in (1..=geom.n).map(PartyId) {
                if j == i {
                    continue;
                }
                let action = if abort.contains(&i) {
                    abort_action()
                } else if geom.pivot.contains(&i) {
                    pivot_round2_action(
                        geom,
                        input,
                        &Face {
                            d: dd,
                            abort: BTreeSet::new(),
                        },
                    )
                } else if own_cell == plan.d + 1 {
                    cell_round2_action(geom, view, i, own_cell, dd)
                } else {
                    select_action(input)
                };
                map.set(i, j, action);
            }
        }
        map
    }
}

impl TrialBehavior for PrHaltingTrial {
    fn actions(&mut self, view: &AdversaryView<'_>) -> ActionMap {
        let geom = self.geom.clone();
        match view.round {
            1 => {
                let plan = self.estimate_plan(view);
                let d = plan.d;
                self.plan = Some(plan);
                let mut map = ActionMap::new();
                for &i in view.corrupted.iter() {
                    let input = view.party(i).input_bit;
                    for j in (1..=geom.n).map(PartyId) {
                        if j == i {
                            continue;
                        }
                        let actions = pivot_round1_action(&geom, input, j, d, Some(d + 1));
                        map.actions.insert((i, j), actions);
                    }
                }
                map
            }
            2 => {
                let plan = self.plan.clone().expect("round 1 ran");
                let tape = reconstruct_tape(&self.spec, view, &plan.round1_coins);
                let eval = FamilyEval {
                    spec: &self.spec,
                    geom: &geom,
                    inputs: &geom.from,
                    setup: &plan.setup,
                };
                let empty = BTreeSet::new();
                // Deny halting without aborts if the realized tape allows it.
                for a in 0..=1usize {
                    if eval.variant_common(plan.d + a, &empty, &tape).is_none() {
                        return self.round2_map(view, plan.d + a, &empty);
                    }
                }
                // Otherwise deny it through the abort set if possible.
                let mut chosen = 0usize;
                for a in 0..=1usize {
                    if eval.variant_common(plan.d + a, &plan.abort, &tape).is_none() {
                        chosen = a;
                        break;
                    }
                }
                let abort = plan.abort.clone();
                self.round2_map(view, plan.d + chosen, &abort)
            }
            _ => {
                let mut map = ActionMap::new();
                for &i in view.corrupted.iter() {
                    for j in (1..=geom.n).map(PartyId) {
                        if j != i {
                            map.set(i, j, abort_action());
                        }
                    }
                }
                map
            }
        }
    }

    fn corrupt_at_boundary(&mut self, view: &AdversaryView<'_>) -> BTreeSet<PartyId> {
        if view.round != 2 {
            return BTreeSet::new();
        }
        let plan = self.plan.as_ref().expect("round 1 ran");
        let mut extra = plan.abort.clone();
        extra.extend(self.geom.cells[plan.d].iter().copied());
        extra
    }
}

/// The adaptive rushing halting attack: corrupt the pivot set up front;
/// during round 1, observe the published setup, repeatedly sample candidate
/// abort sets and estimate how robustly each boundary variant halts, and
/// commit to the weakest boundary `d`; corrupt the abort set and cell
/// `L_{d+1}` at the round boundary; in round 2, pick the variant face (with
/// or without aborts) that the observed tape fails to halt on.
pub fn pr_halting_attack(
    spec: &ProtocolSpec,
    geom: &AttackGeometry,
    sigma: f64,
    lambda: f64,
    delta: f64,
) -> Result<AdversaryStrategy, Error> {
    check_pr_target(spec, geom)?;
    if !(sigma > 0.0 && sigma < 0.5) {
        return Err(Error::config("sigma must lie in (0, 1/2)"));
    }
    if !(lambda > 0.0 && delta > 0.0) {
        return Err(Error::config("lambda and delta must be positive"));
    }
    let cap = (2.0 * sigma * geom.n as f64).floor() as usize;
    if geom.k + geom.ell + cap > geom.t {
        return Err(Error::config(format!(
            "corruption budget violated: k + ell + floor(2 sigma n) = {} + {} + {} > t = {}",
            geom.k, geom.ell, cap, geom.t
        )));
    }
    Ok(AdversaryStrategy::new(
        "pr-halting",
        geom.t,
        Timing::Rushing,
        Schedule::Adaptive {
            initial: geom.pivot.clone(),
        },
        Arc::new(PrHaltingBehavior {
            spec: spec.clone(),
            geom: geom.clone(),
            sigma,
            lambda,
            delta,
        }),
    ))
}

/// The loop and sample budgets the halting attack will use, for reporting.
pub fn pr_halting_budgets(geom: &AttackGeometry, lambda: f64, delta: f64) -> (usize, usize) {
    let loop_budget = (1.0 / (lambda * delta)).ceil() as usize;
    let samples = (ESTIMATION_C * (geom.h as f64 / lambda).ln()).ceil() as usize;
    (loop_budget, samples)
}

struct PrAgreementBehavior {
    geom: AttackGeometry,
    sigma: f64,
    d: usize,
}

struct PrAgreementTrial {
    geom: AttackGeometry,
    sigma: f64,
    d: usize,
    rng: CounterRng,
    abort: BTreeSet<PartyId>,
}

impl Behavior for PrAgreementBehavior {
    fn begin_trial(&self, rng: CounterRng) -> Box<dyn TrialBehavior> {
        Box::new(PrAgreementTrial {
            geom: self.geom.clone(),
            sigma: self.sigma,
            d: self.d,
            rng,
            abort: BTreeSet::new(),
        })
    }
}

impl TrialBehavior for PrAgreementTrial {
    fn initial_corruptions(&mut self) -> BTreeSet<PartyId> {
        self.abort = sample_abort_set(self.geom.n, self.sigma, &mut self.rng)
            .expect("sigma validated at construction")
            .members;
        let mut corrupt = self.geom.pivot.clone();
        corrupt.extend(self.geom.cells[self.d - 1].iter().copied());
        corrupt.extend(self.abort.iter().copied());
        corrupt
    }

    fn actions(&mut self, view: &AdversaryView<'_>) -> ActionMap {
        let geom = &self.geom;
        let mut map = ActionMap::new();
        match view.round {
            1 => {
                for &i in view.corrupted.iter() {
                    if !geom.pivot.contains(&i) {
                        continue; // abort-set and cell members play honestly
                    }
                    let input = view.party(i).input_bit;
                    for j in (1..=geom.n).map(PartyId) {
                        if j != i {
                            map.actions
                                .insert((i, j), pivot_round1_action(geom, input, j, self.d, None));
                        }
                    }
                }
            }
            2 => {
                // Draw the two abort faces and a random half assignment.
                let face0_aborts = self.rng.bit() == 1;
                let face1_aborts = self.rng.bit() == 1;
                let honest: BTreeSet<PartyId> = (1..=geom.n)
                    .map(PartyId)
                    .filter(|p| !view.corrupted.contains(p))
                    .collect();
                let (half0, _) = crate::adversary::split_honest(&honest, &mut self.rng);
                for &i in view.corrupted.iter() {
                    let input = view.party(i).input_bit;
                    let in_abort = self.abort.contains(&i);
                    let in_pivot = geom.pivot.contains(&i);
                    for j in (1..=geom.n).map(PartyId) {
                        if j == i {
                            continue;
                        }
                        let face_aborts = if half0.contains(&j) {
                            face0_aborts
                        } else {
                            face1_aborts
                        };
                        let action = if in_pivot {
                            abort_action() // interior d in [1, h-1]
                        } else if in_abort && face_aborts {
                            abort_action()
                        } else {
                            select_action(input)
                        };
                        map.set(i, j, action);
                    }
                }
            }
            _ => {
                for &i in view.corrupted.iter() {
                    for j in (1..=geom.n).map(PartyId) {
                        if j != i {
                            map.set(i, j, abort_action());
                        }
                    }
                }
            }
        }
        map
    }
}

/// The static agreement attack: pick the boundary `d` whose variant most
/// often admits both output faces (estimated by pre-interaction simulation,
/// marginalized over the setup distribution), corrupt the pivot set, cell
/// `L_d`, and a random abort set, run variant `d`, and in round 2 show each
/// honest half an independently drawn abort face.
pub fn pr_agreement_attack(
    spec: &ProtocolSpec,
    geom: &AttackGeometry,
    sigma: f64,
) -> Result<AdversaryStrategy, Error> {
    check_pr_target(spec, geom)?;
    if !(sigma > 0.0 && sigma < 0.5) {
        return Err(Error::config("sigma must lie in (0, 1/2)"));
    }
    let cap = (2.0 * sigma * geom.n as f64).floor() as usize;
    if geom.k + geom.ell + cap > geom.t {
        return Err(Error::config(format!(
            "corruption budget violated: k + ell + floor(2 sigma n) = {} + {} + {} > t = {}",
            geom.k, geom.ell, cap, geom.t
        )));
    }

    // Pre-interaction estimation: disagreement opportunity per boundary.
    let alpha = AGREEMENT_EST_ALPHA;
    let samples = if tape_space_trivial(spec) {
        ((ESTIMATION_C / alpha) * (geom.h as f64 / alpha).ln()).ceil() as usize / 8
    } else {
        ((ESTIMATION_C / alpha) * (geom.h as f64 / alpha).ln()).ceil() as usize
    }
    .max(16);
    let prf = crate::rng::SeededPrf::new(0xa9_4ee);
    let mut rng = prf.stream(crate::rng::Purpose::Adversary, 0, 0, 0);
    let mut best = (1usize, -1.0f64);
    for d in 1..geom.h {
        let cell = &geom.cells[d - 1];
        let mut excl_base = geom.pivot.clone();
        excl_base.extend(cell.iter().copied());
        let mut hits = 0usize;
        for _ in 0..samples {
            let mut setup_rng = rng.fork(0x5e);
            let setup = spec.sample_setup(&mut setup_rng);
            let tape = draw_tape(spec, &mut rng);
            let abort = sample_abort_set(geom.n, sigma, &mut rng)?.members;
            let eval = FamilyEval {
                spec,
                geom,
                inputs: &geom.from,
                setup: &setup,
            };
            let c_empty =
                eval.common_excluding(&eval.outcome(d, &BTreeSet::new(), &tape), &excl_base);
            let mut excl_abort = excl_base.clone();
            excl_abort.extend(abort.iter().copied());
            let c_abort = eval.common_excluding(&eval.outcome(d, &abort, &tape), &excl_abort);
            let covered = (c_empty == Some(0) || c_abort == Some(0))
                && (c_empty == Some(1) || c_abort == Some(1));
            if covered {
                hits += 1;
            }
        }
        let xi = hits as f64 / samples as f64;
        if xi > best.1 {
            best = (d, xi);
        }
    }

    Ok(AdversaryStrategy::new(
        format!("pr-agreement-d{}", best.0),
        geom.t,
        Timing::NonRushing,
        Schedule::Static(BTreeSet::new()),
        Arc::new(PrAgreementBehavior {
            geom: geom.clone(),
            sigma,
            d: best.0,
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::validate_locally_consistent;
    use crate::engine::{run, run_honest, Seed};
    use crate::protocols;
    use crate::rng::{Purpose, SeededPrf};

    fn adv_rng(seed: u64) -> CounterRng {
        SeededPrf::new(seed).stream(Purpose::Adversary, 0, 0, 0)
    }

    #[test]
    fn geometry_second_round_arb_formulas() {
        let g = AttackGeometry::derive(100, 30, Regime::Quarter, AttackStage::SecondRoundArb, 0.0)
            .unwrap();
        assert_eq!((g.k, g.ell, g.h, g.w), (25, 5, 15, 16));
        assert_eq!(g.pivot.len(), 25);
        assert_eq!(g.cells.len(), 15);
        assert!(g.cells.iter().all(|c| c.len() == 5));
    }

    #[test]
    fn geometry_first_round_err_term() {
        let g = AttackGeometry::derive(3, 1, Regime::Third, AttackStage::FirstRound, 0.0).unwrap();
        assert_eq!(g.err_term(), 0.25);
        assert_eq!(g.v0.bits(), &[0, 1, 0]);
        assert_eq!(g.v1.bits(), &[1, 1, 0]);
    }

    #[test]
    fn geometry_pr_third_formulas() {
        // eps_t = 1/15 at (100, 40): k = ceil(40 - 100/15) = 34, ell = 3.
        let g = AttackGeometry::derive(
            100,
            40,
            Regime::Third,
            AttackStage::SecondRoundPr,
            1.0 / 15.0,
        )
        .unwrap();
        assert_eq!(g.k, 34);
        assert_eq!(g.ell, 3);
        assert_eq!(g.h, (100 - 34usize).div_ceil(3));
    }

    #[test]
    fn geometry_pr_rejects_zero_cell_size() {
        // t barely above n/4 leaves floor((t - k)/2) = 0.
        let err =
            AttackGeometry::derive(60, 16, Regime::Quarter, AttackStage::SecondRoundPr, 1.0 / 60.0);
        assert!(err.is_err());
    }

    #[test]
    fn geometry_arb_adjusts_pivot_at_small_scale() {
        // (9, 3): ceil(9/4) = 3 = t leaves no cell budget; k shrinks to 2.
        let g =
            AttackGeometry::derive(9, 3, Regime::Quarter, AttackStage::SecondRoundArb, 0.0).unwrap();
        assert_eq!((g.k, g.ell), (2, 1));
        assert_eq!(g.h, 7);
        assert_eq!(g.w, 8);
        assert_eq!(g.v0.bits(), &[0, 0, 0, 0, 0, 0, 1, 1, 1]);
        assert_eq!(g.v_star.as_ref().unwrap().bits(), &[1, 1, 0, 0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn abort_set_respects_cap_and_mean() {
        let mut rng = adv_rng(5);
        let n = 100;
        let sigma = 0.1;
        let mut total = 0usize;
        let mut empty = 0usize;
        let trials = 2_000;
        for _ in 0..trials {
            let s = sample_abort_set(n, sigma, &mut rng).unwrap();
            assert!(s.members.len() <= s.cap);
            total += s.members.len();
            if s.members.is_empty() {
                empty += 1;
            }
        }
        let mean = total as f64 / trials as f64;
        // Conditioning on |S| <= 2 sigma n barely moves the Binomial(100, .1) mean.
        assert!((mean - 10.0).abs() < 0.5, "mean {mean}");
        // Pr[S empty] = (1 - sigma)^n ~ 2.6e-5 at these parameters.
        assert!(empty <= 2);
    }

    #[test]
    fn abort_set_cap_acceptance_rate_is_high() {
        // Acceptance of the |S| <= 2 sigma n cap should be nearly certain.
        let mut rng = adv_rng(6);
        let n = 100;
        let sigma = 0.1;
        let cap = (2.0 * sigma * n as f64).floor() as usize;
        let mut over = 0usize;
        let trials = 5_000;
        for _ in 0..trials {
            let size = (1..=n).filter(|_| rng.bernoulli(sigma)).count();
            if size > cap {
                over += 1;
            }
        }
        let rate = over as f64 / trials as f64;
        assert!(rate < 0.01, "cap-overflow rate {rate}");
    }

    #[test]
    fn split_probability_of_empty_half() {
        let who: BTreeSet<PartyId> = (1..=6).map(PartyId).collect();
        let mut rng = adv_rng(7);
        let trials = 20_000u32;
        let mut empty = 0u32;
        for _ in 0..trials {
            let (h0, h1) = crate::adversary::split_honest(&who, &mut rng);
            assert_eq!(h0.len() + h1.len(), 6);
            if h0.is_empty() || h1.is_empty() {
                empty += 1;
            }
        }
        // 2 * 2^-6 = 0.03125.
        let rate = empty as f64 / trials as f64;
        assert!((rate - 0.03125).abs() < 0.005, "rate {rate}");
    }

    #[test]
    fn first_round_attack_breaks_one_round_majority() {
        let spec = protocols::one_round_majority(9).unwrap();
        let geom =
            AttackGeometry::derive(9, 3, Regime::Third, AttackStage::FirstRound, 0.0).unwrap();
        let strategy = first_round_attack(&spec, &geom, false).unwrap();
        let trials = 2_000u64;
        let mut disagreements = 0u64;
        for trial in 0..trials {
            let trace = run(&spec, &geom.v0, &strategy, Seed::new(101).trial(trial)).unwrap();
            let honest: Vec<Option<u8>> = trace
                .honest_indices()
                .iter()
                .map(|&i| trace.outputs[i])
                .collect();
            let saw0 = honest.contains(&Some(0));
            let saw1 = honest.contains(&Some(1));
            if saw0 && saw1 {
                disagreements += 1;
            }
        }
        // Vote-count oracle: the v0-face half sees six zeros among nine
        // values, the v1-face half sees six ones; disagreement whenever both
        // halves are non-empty: 1 - 2 * 2^-6.
        let rate = disagreements as f64 / trials as f64;
        assert!((rate - (1.0 - 2.0 / 64.0)).abs() < 0.02, "rate {rate}");
    }

    #[test]
    fn first_round_attack_validates() {
        let spec = protocols::one_round_majority(9).unwrap();
        let geom =
            AttackGeometry::derive(9, 3, Regime::Third, AttackStage::FirstRound, 0.0).unwrap();
        let strategy = first_round_attack(&spec, &geom, false).unwrap();
        for trial in 0..200 {
            let trace = run(&spec, &geom.v0, &strategy, Seed::new(3).trial(trial)).unwrap();
            let report = validate_locally_consistent(&trace, &spec, &strategy).unwrap();
            assert!(report.ok, "violations: {:?}", report.violations);
        }
    }

    fn arb_geometry_9_3() -> AttackGeometry {
        AttackGeometry::derive(9, 3, Regime::Quarter, AttackStage::SecondRoundArb, 0.0).unwrap()
    }

    #[test]
    fn pivot_variant_endpoint_d0_matches_honest_run() {
        let spec = protocols::two_round_coin_majority(9, 3).unwrap();
        let geom = arb_geometry_9_3();
        let strategy = pivot_variant(&spec, &geom, 0, &BTreeSet::new()).unwrap();
        for trial in 0..100 {
            let seed = Seed::new(11).trial(trial);
            let honest = run_honest(&spec, &geom.from, seed).unwrap();
            let attacked = run(&spec, &geom.from, &strategy, seed).unwrap();
            assert_eq!(honest.mailboxes, attacked.mailboxes);
            assert_eq!(honest.coins, attacked.coins);
            assert_eq!(honest.setup, attacked.setup);
            for i in attacked.honest_indices() {
                assert_eq!(honest.outputs[i], attacked.outputs[i]);
                assert_eq!(honest.halt_round[i], attacked.halt_round[i]);
            }
        }
    }

    #[test]
    fn pivot_variant_endpoint_dh_matches_flipped_honest_run() {
        let spec = protocols::two_round_coin_majority(9, 3).unwrap();
        let geom = arb_geometry_9_3();
        let strategy = pivot_variant(&spec, &geom, geom.h, &BTreeSet::new()).unwrap();
        let flipped_coords: Vec<usize> = geom.pivot.iter().map(|p| p.idx()).collect();
        let flipped = geom.from.flipped_at(&flipped_coords);
        for trial in 0..100 {
            let seed = Seed::new(12).trial(trial);
            let honest = run_honest(&spec, &flipped, seed).unwrap();
            let attacked = run(&spec, &geom.from, &strategy, seed).unwrap();
            assert_eq!(honest.mailboxes, attacked.mailboxes);
            for i in attacked.honest_indices() {
                assert_eq!(honest.outputs[i], attacked.outputs[i]);
            }
        }
    }

    #[test]
    fn pivot_variant_interior_validates_and_matches_script() {
        let spec = protocols::two_round_coin_majority(9, 3).unwrap();
        let geom = arb_geometry_9_3();
        for d in [1, 3, geom.h - 1] {
            let strategy = pivot_variant(&spec, &geom, d, &BTreeSet::new()).unwrap();
            for trial in 0..50 {
                let seed = Seed::new(13).trial(trial);
                let trace = run(&spec, &geom.from, &strategy, seed).unwrap();
                let report = validate_locally_consistent(&trace, &spec, &strategy).unwrap();
                assert!(report.ok, "d={d}: {:?}", report.violations);
                // Cross-check the engine execution against the scripted
                // simulator on the same setup and coins.
                let outcome = run_variant(
                    &spec,
                    &geom.from,
                    &trace.setup,
                    &trace.coins,
                    &geom.script(d, &BTreeSet::new()),
                );
                for i in trace.honest_indices() {
                    assert_eq!(trace.outputs[i], outcome.outputs[i], "party {i} d={d}");
                }
            }
        }
    }

    #[test]
    fn second_round_static_attack_validates() {
        let spec = protocols::two_round_coin_majority(9, 3).unwrap();
        let geom = arb_geometry_9_3();
        let strategy = second_round_static_attack(&spec, &geom).unwrap();
        for trial in 0..300 {
            let trace = run(&spec, &geom.from, &strategy, Seed::new(17).trial(trial)).unwrap();
            let report = validate_locally_consistent(&trace, &spec, &strategy).unwrap();
            assert!(report.ok, "violations: {:?}", report.violations);
        }
    }

    fn pr_geometry_9_4() -> AttackGeometry {
        AttackGeometry::custom(9, 4, Regime::Quarter, AttackStage::SecondRoundPr, 2, 1, 0.05)
            .unwrap()
    }

    #[test]
    fn pr_halting_budgets_match_cited_arithmetic() {
        let geom =
            AttackGeometry::custom(100, 40, Regime::Third, AttackStage::SecondRoundPr, 34, 3, 0.06)
                .unwrap();
        let (loop_budget, _) = pr_halting_budgets(&geom, 0.1, 0.05);
        assert_eq!(loop_budget, 200);
        // 64 * ln(15 / 0.1) with h pinned to 15 gives about 321 tapes.
        let g15 =
            AttackGeometry::custom(100, 40, Regime::Third, AttackStage::SecondRoundPr, 34, 5, 0.06)
                .unwrap();
        assert_eq!(g15.h, (100 - 34usize).div_ceil(5), "h = {}", g15.h);
        let (_, samples) = pr_halting_budgets(&g15, 0.1, 0.05);
        assert_eq!(samples, (64.0f64 * (g15.h as f64 / 0.1).ln()).ceil() as usize);
    }

    #[test]
    fn pr_halting_attack_validates_and_runs() {
        let spec = protocols::two_round_coin_majority(9, 4).unwrap();
        let geom = pr_geometry_9_4();
        let strategy = pr_halting_attack(&spec, &geom, 0.05, 0.2, 0.5).unwrap();
        for trial in 0..60 {
            let trace = run(&spec, &geom.from, &strategy, Seed::new(23).trial(trial)).unwrap();
            let report = validate_locally_consistent(&trace, &spec, &strategy).unwrap();
            assert!(report.ok, "violations: {:?}", report.violations);
        }
    }

    #[test]
    fn pr_agreement_attack_validates_and_runs() {
        let spec = protocols::two_round_coin_majority(9, 4).unwrap();
        let geom = pr_geometry_9_4();
        let strategy = pr_agreement_attack(&spec, &geom, 0.05).unwrap();
        for trial in 0..60 {
            let trace = run(&spec, &geom.from, &strategy, Seed::new(29).trial(trial)).unwrap();
            let report = validate_locally_consistent(&trace, &spec, &strategy).unwrap();
            assert!(report.ok, "violations: {:?}", report.violations);
        }
    }

    #[test]
    fn pr_attack_rejects_budget_violations() {
        let spec = protocols::two_round_coin_majority(9, 4).unwrap();
        let geom = pr_geometry_9_4();
        // sigma large enough that k + ell + floor(2 sigma n) > t.
        assert!(pr_halting_attack(&spec, &geom, 0.4, 0.2, 0.5).is_err());
        assert!(pr_agreement_attack(&spec, &geom, 0.4).is_err());
    }

    #[test]
    fn validator_flags_mutated_corrupted_payload() {
        let spec = protocols::two_round_coin_majority(9, 3).unwrap();
        let geom = arb_geometry_9_3();
        let strategy = second_round_static_attack(&spec, &geom).unwrap();
        let mut rng = adv_rng(31);
        let mut checked = 0;
        for trial in 0..40 {
            let trace = run(&spec, &geom.from, &strategy, Seed::new(37).trial(trial)).unwrap();
            assert!(validate_locally_consistent(&trace, &spec, &strategy)
                .unwrap()
                .ok);
            // Mutate one byte of one corrupted non-abort payload.
            let mut mutated = trace.clone();
            let corrupted_msgs: Vec<(usize, usize)> = mutated
                .mailboxes
                .iter()
                .enumerate()
                .flat_map(|(r, msgs)| {
                    msgs.iter().enumerate().filter_map(move |(mi, m)| {
                        (!m.is_abort && !m.payload.is_empty()).then_some((r, mi))
                    })
                })
                .filter(|&(r, mi)| {
                    let m = &mutated.mailboxes[r][mi];
                    matches!(mutated.corruption_log[m.from.idx()], Some(at) if at < m.round)
                })
                .collect();
            if corrupted_msgs.is_empty() {
                continue;
            }
            let (r, mi) = corrupted_msgs[rng.below(corrupted_msgs.len() as u64) as usize];
            let m = &mut mutated.mailboxes[r][mi];
            let byte = rng.below(m.payload.len() as u64) as usize;
            let mask = (rng.below(255) + 1) as u8;
            m.payload[byte] ^= mask;
            let report = validate_locally_consistent(&mutated, &spec, &strategy).unwrap();
            assert!(!report.ok, "mutation at round {} byte {byte} went unflagged", r + 1);
            checked += 1;
        }
        assert!(checked >= 30);
    }
}
