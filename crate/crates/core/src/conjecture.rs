//! The bot-masking set-pair lab: masked vectors over a finite alphabet,
//! canonical set families, exhaustive and Monte-Carlo evaluation of the
//! hypothesis and conclusion probabilities, and extraction of the set pairs a
//! two-round public-randomness protocol induces on its coin tapes.
//!
//! Everything here is finite-n measurement. The underlying combinatorial
//! statement is asymptotic, so a hypothesis-true/low-conclusion observation
//! at desk scale is reported as data, never as a refutation.

use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::attacks::AttackGeometry;
use crate::engine::run_variant;
use crate::error::Error;
use crate::protocol::ProtocolSpec;
use crate::stats::Estimate;
use crate::trace::{CoinTape, PartyId, SetupBundle};

/// Vector over `Sigma ∪ {⊥}`; `None` entries are the bot marker.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MaskedVector {
    pub entries: Vec<Option<u64>>,
}

impl MaskedVector {
    pub fn from_symbols(symbols: &[u64]) -> Self {
        MaskedVector {
            entries: symbols.iter().map(|&s| Some(s)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Zero-based indices carrying the bot marker.
    pub fn bot_indices(&self) -> BTreeSet<usize> {
        (0..self.len())
            .filter(|&i| self.entries[i].is_none())
            .collect()
    }
}

/// Replace the entries indexed by `s` (zero-based) with the bot marker.
pub fn mask(x: &MaskedVector, s: &BTreeSet<usize>) -> MaskedVector {
    let entries = x
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| if s.contains(&i) { None } else { *e })
        .collect();
    MaskedVector { entries }
}

/// Convenience form of [`mask`] on an unmasked symbol vector.
pub fn mask_symbols(x: &[u64], s: &BTreeSet<usize>) -> MaskedVector {
    mask(&MaskedVector::from_symbols(x), s)
}

type PredicateFn = dyn Fn(&MaskedVector) -> bool + Send + Sync;

/// Set representation: a membership predicate or an explicit enumeration.
#[derive(Clone)]
pub enum FamilyRepr {
    Predicate(Arc<PredicateFn>),
    Explicit(Arc<HashSet<MaskedVector>>),
}

impl FamilyRepr {
    fn contains(&self, x: &MaskedVector) -> bool {
        match self {
            FamilyRepr::Predicate(p) => p(x),
            FamilyRepr::Explicit(set) => set.contains(x),
        }
    }
}

/// A pair of subsets of `(Sigma ∪ {⊥})^n` under test.
#[derive(Clone)]
pub struct SetFamilyPair {
    pub name: String,
    pub n: usize,
    /// Alphabet cardinality `|Sigma|`; symbols are `0..card`.
    pub card: u64,
    a0: FamilyRepr,
    a1: FamilyRepr,
}

impl std::fmt::Debug for SetFamilyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SetFamilyPair")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("card", &self.card)
            .finish_non_exhaustive()
    }
}

impl SetFamilyPair {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        card: u64,
        a0: FamilyRepr,
        a1: FamilyRepr,
    ) -> Self {
        SetFamilyPair {
            name: name.into(),
            n,
            card,
            a0,
            a1,
        }
    }

    pub fn contains(&self, b: u8, x: &MaskedVector) -> Result<bool, Error> {
        if x.len() != self.n {
            return Err(Error::Evaluation(format!(
                "vector length {} does not match family dimension {}",
                x.len(),
                self.n
            )));
        }
        Ok(match b {
            0 => self.a0.contains(x),
            _ => self.a1.contains(x),
        })
    }
}

/// Prefix family: `A_b = b^k x (Sigma ∪ {⊥})^(n-k)`.
pub fn prefix_sets(n: usize, k: usize, card: u64) -> Result<SetFamilyPair, Error> {
    if k > n {
        return Err(Error::config("prefix length k must be at most n"));
    }
    if card < 2 {
        return Err(Error::config("prefix sets need both symbols 0 and 1"));
    }
    let make = |b: u64| -> FamilyRepr {
        FamilyRepr::Predicate(Arc::new(move |x: &MaskedVector| {
            x.entries.iter().take(k).all(|e| *e == Some(b))
        }))
    };
    Ok(SetFamilyPair::new(
        format!("prefix(k={k})"),
        n,
        card,
        make(0),
        make(1),
    ))
}

/// Ball family: `A_b` holds the vectors within the given radius of `b^n`,
/// where the distance counts every entry differing from the center and a bot
/// entry always counts as a difference.
pub fn ball_sets(n: usize, radius: usize, card: u64) -> Result<SetFamilyPair, Error> {
    if 2 * radius >= n {
        return Err(Error::config("ball radius must satisfy radius < n/2"));
    }
    if card < 2 {
        return Err(Error::config("ball sets need both symbols 0 and 1"));
    }
    let make = |b: u64| -> FamilyRepr {
        FamilyRepr::Predicate(Arc::new(move |x: &MaskedVector| {
            let dist = x.entries.iter().filter(|e| **e != Some(b)).count();
            dist <= radius
        }))
    };
    Ok(SetFamilyPair::new(
        format!("ball(r={radius})"),
        n,
        card,
        make(0),
        make(1),
    ))
}

/// Evaluation mode for the probability operators.
#[derive(Debug, Clone, Copy)]
pub enum EvalMode {
    /// Exact enumeration of all tapes and index sets.
    Exhaustive,
    /// Seeded sampling; `trials` outer draws (hypothesis mode also uses
    /// `trials` inner tape draws per index set).
    MonteCarlo { trials: usize, seed: u64 },
}

const MC_CONFIDENCE: f64 = 0.99;

/// Enumeration guard: `(|Sigma| + 1)^n` masked tapes and `2^n` index sets.
fn check_exhaustive_size(n: usize, card: u64) -> Result<(), Error> {
    let bits = ((card + 1) as f64).log2() * n as f64;
    if n > 24 || bits > 24.0 {
        return Err(Error::config(format!(
            "exhaustive mode needs n * log2(|Sigma|+1) <= 24 (got {bits:.1} at n = {n})"
        )));
    }
    Ok(())
}

fn subset_weights(n: usize, sigma: f64) -> Vec<BigRational> {
    // sigma^s (1-sigma)^(n-s), exact in the binary rational actually supplied.
    let s = BigRational::from_float(sigma).unwrap_or_else(BigRational::zero);
    let one = BigRational::one();
    let t = &one - &s;
    (0..=n)
        .map(|k| {
            let mut w = BigRational::one();
            for _ in 0..k {
                w *= &s;
            }
            for _ in 0..(n - k) {
                w *= &t;
            }
            w
        })
        .collect()
}

fn decode_tape(mut idx: u64, n: usize, card: u64, out: &mut Vec<u64>) {
    out.clear();
    for _ in 0..n {
        out.push(idx % card);
        idx /= card;
    }
}

/// Result of evaluating the hypothesis side for one `b`.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisSide {
    /// `Pr over S of [ Pr over r of (r and mask(r,S) in A_b) >= lambda ]`.
    pub level: f64,
    /// Exact rational level in exhaustive mode (decimal string).
    pub level_exact: Option<String>,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConjectureVerdict {
    pub family: String,
    pub n: usize,
    pub card: u64,
    pub sigma: f64,
    pub lambda: f64,
    pub delta: f64,
    pub mode: String,
    pub hypothesis: [HypothesisSide; 2],
    /// Probability that `{r, mask(r,S)}` touches both sets.
    pub conclusion: Estimate,
    pub conclusion_exact: Option<String>,
    /// Hypothesis held for both sides while the conclusion estimate sits
    /// below delta even after its confidence radius: the finite-n observation
    /// the search protocol must surface.
    pub flagged: bool,
}

fn rational_to_string(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Evaluate the hypothesis levels for both `b`, comparing to `1 - delta`.
pub fn hypothesis_holds(
    pair: &SetFamilyPair,
    sigma: f64,
    lambda: f64,
    delta: f64,
    mode: EvalMode,
) -> Result<[HypothesisSide; 2], Error> {
    let n = pair.n;
    let card = pair.card;
    match mode {
        EvalMode::Exhaustive => {
            check_exhaustive_size(n, card)?;
            let total_r = card.pow(n as u32);
            let weights = subset_weights(n, sigma);
            let lambda_rat = BigRational::from_float(lambda)
                .ok_or_else(|| Error::config("lambda must be finite"))?;
            let total_rat = BigRational::from_integer(BigInt::from(total_r));

            // Memoize unmasked membership per tape.
            let mut sym = Vec::with_capacity(n);
            let mut member: [Vec<bool>; 2] = [
                Vec::with_capacity(total_r as usize),
                Vec::with_capacity(total_r as usize),
            ];
            for ri in 0..total_r {
                decode_tape(ri, n, card, &mut sym);
                let mv = MaskedVector::from_symbols(&sym);
                member[0].push(pair.contains(0, &mv)?);
                member[1].push(pair.contains(1, &mv)?);
            }

            let mut levels = [BigRational::zero(), BigRational::zero()];
            let mut scratch = MaskedVector {
                entries: vec![None; n],
            };
            for s_mask in 0u32..(1u32 << n) {
                let s_size = s_mask.count_ones() as usize;
                let mut counts = [0u64; 2];
                for ri in 0..total_r {
                    decode_tape(ri, n, card, &mut sym);
                    for i in 0..n {
                        scratch.entries[i] = if s_mask & (1 << i) != 0 {
                            None
                        } else {
                            Some(sym[i])
                        };
                    }
                    for b in 0..2usize {
                        if member[b][ri as usize] && pair.contains(b as u8, &scratch)? {
                            counts[b] += 1;
                        }
                    }
                }
                for b in 0..2usize {
                    let inner = BigRational::from_integer(BigInt::from(counts[b])) / &total_rat;
                    if inner >= lambda_rat {
                        levels[b] += &weights[s_size];
                    }
                }
            }
            let one_minus_delta = BigRational::from_float(1.0 - delta)
                .ok_or_else(|| Error::config("delta must be finite"))?;
            Ok([0, 1].map(|b| HypothesisSide {
                level: rational_to_f64(&levels[b]),
                level_exact: Some(rational_to_string(&levels[b])),
                ok: levels[b] >= one_minus_delta,
            }))
        }
        EvalMode::MonteCarlo { trials, seed } => {
            if trials == 0 {
                return Err(Error::config("trials must be at least 1"));
            }
            let prf = crate::rng::SeededPrf::new(seed);
            let mut rng = prf.stream(crate::rng::Purpose::Aux, 0, 0, 0);
            let mut hits = [0usize; 2];
            let mut sym = vec![0u64; n];
            for _ in 0..trials {
                let s: BTreeSet<usize> = (0..n).filter(|_| rng.bernoulli(sigma)).collect();
                let mut inner_hits = [0usize; 2];
                for _ in 0..trials {
                    for v in sym.iter_mut() {
                        *v = rng.below(card);
                    }
                    let mv = MaskedVector::from_symbols(&sym);
                    let masked = mask(&mv, &s);
                    for b in 0..2usize {
                        if pair.contains(b as u8, &mv)? && pair.contains(b as u8, &masked)? {
                            inner_hits[b] += 1;
                        }
                    }
                }
                for b in 0..2usize {
                    if inner_hits[b] as f64 / trials as f64 >= lambda {
                        hits[b] += 1;
                    }
                }
            }
            Ok([0, 1].map(|b| {
                let level = hits[b] as f64 / trials as f64;
                HypothesisSide {
                    level,
                    level_exact: None,
                    ok: level >= 1.0 - delta,
                }
            }))
        }
    }
}

/// Probability over `(r, S)` that the pair `{r, mask(r, S)}` intersects both
/// sets. Returns the estimate and, in exhaustive mode, the exact rational.
pub fn conclusion_probability(
    pair: &SetFamilyPair,
    sigma: f64,
    mode: EvalMode,
) -> Result<(Estimate, Option<BigRational>), Error> {
    let n = pair.n;
    let card = pair.card;
    match mode {
        EvalMode::Exhaustive => {
            check_exhaustive_size(n, card)?;
            let total_r = card.pow(n as u32);
            let weights = subset_weights(n, sigma);
            let total_rat = BigRational::from_integer(BigInt::from(total_r));
            let mut prob = BigRational::zero();
            let mut sym = Vec::with_capacity(n);
            let mut scratch = MaskedVector {
                entries: vec![None; n],
            };
            let mut member: [Vec<bool>; 2] = [Vec::new(), Vec::new()];
            for ri in 0..total_r {
                decode_tape(ri, n, card, &mut sym);
                let mv = MaskedVector::from_symbols(&sym);
                member[0].push(pair.contains(0, &mv)?);
                member[1].push(pair.contains(1, &mv)?);
            }
            for s_mask in 0u32..(1u32 << n) {
                let s_size = s_mask.count_ones() as usize;
                let mut count = 0u64;
                for ri in 0..total_r {
                    decode_tape(ri, n, card, &mut sym);
                    for i in 0..n {
                        scratch.entries[i] = if s_mask & (1 << i) != 0 {
                            None
                        } else {
                            Some(sym[i])
                        };
                    }
                    let touch0 =
                        member[0][ri as usize] || pair.contains(0, &scratch)?;
                    let touch1 =
                        member[1][ri as usize] || pair.contains(1, &scratch)?;
                    if touch0 && touch1 {
                        count += 1;
                    }
                }
                prob += &weights[s_size]
                    * (BigRational::from_integer(BigInt::from(count)) / &total_rat);
            }
            let est = Estimate::exact(rational_to_f64(&prob), (total_r as usize) << n);
            Ok((est, Some(prob)))
        }
        EvalMode::MonteCarlo { trials, seed } => {
            if trials == 0 {
                return Err(Error::config("trials must be at least 1"));
            }
            let prf = crate::rng::SeededPrf::new(seed);
            let mut rng = prf.stream(crate::rng::Purpose::Aux, 1, 0, 0);
            let mut hits = 0usize;
            let mut sym = vec![0u64; n];
            for _ in 0..trials {
                for v in sym.iter_mut() {
                    *v = rng.below(card);
                }
                let s: BTreeSet<usize> = (0..n).filter(|_| rng.bernoulli(sigma)).collect();
                let mv = MaskedVector::from_symbols(&sym);
                let masked = mask(&mv, &s);
                let touch0 = pair.contains(0, &mv)? || pair.contains(0, &masked)?;
                let touch1 = pair.contains(1, &mv)? || pair.contains(1, &masked)?;
                if touch0 && touch1 {
                    hits += 1;
                }
            }
            Ok((Estimate::from_counts(hits, trials, MC_CONFIDENCE), None))
        }
    }
}

/// Hypothesis and conclusion in one verdict, with the search-protocol flag.
pub fn evaluate(
    pair: &SetFamilyPair,
    sigma: f64,
    lambda: f64,
    delta: f64,
    mode: EvalMode,
) -> Result<ConjectureVerdict, Error> {
    let hypothesis = hypothesis_holds(pair, sigma, lambda, delta, mode)?;
    let (conclusion, exact) = conclusion_probability(pair, sigma, mode)?;
    let both_hold = hypothesis[0].ok && hypothesis[1].ok;
    let flagged = both_hold && conclusion.point + conclusion.ci_radius < delta;
    Ok(ConjectureVerdict {
        family: pair.name.clone(),
        n: pair.n,
        card: pair.card,
        sigma,
        lambda,
        delta,
        mode: match mode {
            EvalMode::Exhaustive => "exhaustive".into(),
            EvalMode::MonteCarlo { trials, .. } => format!("monte-carlo({trials})"),
        },
        hypothesis,
        conclusion,
        conclusion_exact: exact.as_ref().map(rational_to_string),
        flagged,
    })
}

/// The tape set a pivot-variant execution induces for output `b`: masked
/// round-2 tapes on which every party outside pivot, cell `L_d`, and the
/// masked indices halts in round 2 with output `b`. Tapes that leave no
/// survivor are excluded for both `b`.
pub fn protocol_induced_sets(
    spec: &ProtocolSpec,
    geom: &AttackGeometry,
    setup: &SetupBundle,
    d: usize,
    b: u8,
) -> Result<Arc<PredicateFn>, Error> {
    if !spec.public_randomness {
        return Err(Error::config(
            "protocol-induced sets require a public-randomness protocol",
        ));
    }
    if spec.q != 2 {
        return Err(Error::config("protocol-induced sets assume q = 2"));
    }
    if !spec.coin_domain(1).is_empty() {
        return Err(Error::config(
            "protocol-induced sets assume coins only in round 2",
        ));
    }
    if d > geom.h {
        return Err(Error::config(format!("d = {d} out of range 0..={}", geom.h)));
    }
    let spec = spec.clone();
    let geom = geom.clone();
    let setup = setup.clone();
    let n = spec.n;
    Ok(Arc::new(move |tape: &MaskedVector| {
        if tape.len() != n {
            return false;
        }
        let masked: BTreeSet<usize> = tape.bot_indices();
        let abort: BTreeSet<PartyId> = masked.iter().map(|&i| PartyId::from_idx(i)).collect();
        let coins = CoinTape {
            per_round: vec![
                vec![0; n],
                tape.entries.iter().map(|e| e.unwrap_or(0)).collect(),
            ],
        };
        let outcome = run_variant(&spec, &geom.from, &setup, &coins, &geom.script(d, &abort));
        let mut excluded: BTreeSet<usize> = geom.pivot.iter().map(|p| p.idx()).collect();
        if d >= 1 {
            excluded.extend(geom.cells[d - 1].iter().map(|p| p.idx()));
        }
        excluded.extend(masked.iter().copied());
        let survivors: Vec<usize> = (0..n).filter(|i| !excluded.contains(i)).collect();
        if survivors.is_empty() {
            return false;
        }
        survivors.iter().all(|&i| outcome.outputs[i] == Some(b))
    }))
}

/// Both induced sets bundled as a family pair over the protocol's round-2
/// coin alphabet.
pub fn protocol_induced_pair(
    spec: &ProtocolSpec,
    geom: &AttackGeometry,
    setup: &SetupBundle,
    d: usize,
) -> Result<SetFamilyPair, Error> {
    let dom = spec.coin_domain(2);
    let card = dom
        .cardinality()
        .ok_or_else(|| Error::config("round-2 coin domain too large to treat as an alphabet"))?;
    let a0 = protocol_induced_sets(spec, geom, setup, d, 0)?;
    let a1 = protocol_induced_sets(spec, geom, setup, d, 1)?;
    Ok(SetFamilyPair::new(
        format!("induced({}, d={d})", spec.name),
        spec.n,
        card.max(1),
        FamilyRepr::Predicate(a0),
        FamilyRepr::Predicate(a1),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::{AttackStage, Regime};
    use crate::engine::{run_honest, Seed};
    use crate::protocols;
    use crate::trace::InputVector;

    fn full_space_pair(n: usize, card: u64) -> SetFamilyPair {
        let all = FamilyRepr::Predicate(Arc::new(|_: &MaskedVector| true));
        SetFamilyPair::new("full", n, card, all.clone(), all)
    }

    fn empty_pair(n: usize, card: u64) -> SetFamilyPair {
        let none = FamilyRepr::Predicate(Arc::new(|_: &MaskedVector| false));
        SetFamilyPair::new("empty", n, card, none.clone(), none)
    }

    #[test]
    fn mask_identity_and_full() {
        let x = MaskedVector::from_symbols(&[3, 1, 4, 1, 5]);
        assert_eq!(mask(&x, &BTreeSet::new()), x);
        let all: BTreeSet<usize> = (0..5).collect();
        assert!(mask(&x, &all).entries.iter().all(|e| e.is_none()));
    }

    #[test]
    fn mask_composes_as_union() {
        let x = MaskedVector::from_symbols(&[7, 7, 7, 7, 7, 7]);
        let s: BTreeSet<usize> = [0, 2].into();
        let t: BTreeSet<usize> = [2, 5].into();
        let st: BTreeSet<usize> = s.union(&t).copied().collect();
        assert_eq!(mask(&mask(&x, &s), &t), mask(&x, &st));
    }

    #[test]
    fn hypothesis_full_space_always_holds() {
        let pair = full_space_pair(6, 2);
        for mode in [
            EvalMode::Exhaustive,
            EvalMode::MonteCarlo {
                trials: 200,
                seed: 5,
            },
        ] {
            let sides = hypothesis_holds(&pair, 0.3, 1.0, 0.01, mode).unwrap();
            assert!(sides[0].ok && sides[1].ok);
            assert_eq!(sides[0].level, 1.0);
        }
    }

    #[test]
    fn hypothesis_empty_fails_for_positive_lambda() {
        let pair = empty_pair(6, 2);
        let sides = hypothesis_holds(&pair, 0.3, 1e-6, 0.5, EvalMode::Exhaustive).unwrap();
        assert!(!sides[0].ok && !sides[1].ok);
        assert_eq!(sides[0].level, 0.0);
    }

    #[test]
    fn prefix_hypothesis_threshold_by_enumeration() {
        // Level for each side is exactly Pr[S cap [k] = empty] = (1-sigma)^2
        // (about 0.64) once lambda is at most the prefix mass 1/4.
        let pair = prefix_sets(10, 2, 2).unwrap();
        let sides = hypothesis_holds(&pair, 0.2, 0.2, 0.37, EvalMode::Exhaustive).unwrap();
        assert!(sides[0].ok && sides[1].ok);
        assert!((sides[0].level - 0.64).abs() < 1e-9, "level {}", sides[0].level);
        let sides = hypothesis_holds(&pair, 0.2, 0.2, 0.35, EvalMode::Exhaustive).unwrap();
        assert!(!sides[0].ok && !sides[1].ok);
        // Above the prefix mass the level collapses to zero.
        let sides = hypothesis_holds(&pair, 0.2, 0.26, 0.5, EvalMode::Exhaustive).unwrap();
        assert_eq!(sides[0].level, 0.0);
    }

    /// Straight-line enumeration oracle for the prefix conclusion, written
    /// independently of the library's evaluator.
    fn prefix_conclusion_oracle(n: usize, k: usize, sigma: f64) -> f64 {
        let mut prob = 0.0f64;
        for s_mask in 0u32..(1u32 << n) {
            let s_size = s_mask.count_ones();
            let weight =
                sigma.powi(s_size as i32) * (1.0 - sigma).powi((n as u32 - s_size) as i32);
            let mut count = 0u64;
            for r in 0u32..(1u32 << n) {
                let bit = |i: usize| (r >> i) & 1;
                let masked = |i: usize| (s_mask >> i) & 1 == 1;
                let r_in = |b: u32| (0..k).all(|i| bit(i) == b);
                let m_in = |b: u32| (0..k).all(|i| !masked(i) && bit(i) == b);
                let touch0 = r_in(0) || m_in(0);
                let touch1 = r_in(1) || m_in(1);
                if touch0 && touch1 {
                    count += 1;
                }
            }
            prob += weight * count as f64 / (1u64 << n) as f64;
        }
        prob
    }

    #[test]
    fn prefix_conclusion_is_exactly_zero() {
        // Masking never flips a symbol, so a prefix pair can never split
        // between the two sets; the oracle and the evaluator agree on zero.
        assert_eq!(prefix_conclusion_oracle(10, 2, 0.2), 0.0);
        let pair = prefix_sets(10, 2, 2).unwrap();
        let (est, exact) = conclusion_probability(&pair, 0.2, EvalMode::Exhaustive).unwrap();
        assert_eq!(est.point, 0.0);
        assert!(exact.unwrap().is_zero());
    }

    #[test]
    fn conclusion_full_space_is_one() {
        let pair = full_space_pair(6, 2);
        let (est, exact) = conclusion_probability(&pair, 0.3, EvalMode::Exhaustive).unwrap();
        assert_eq!(est.point, 1.0);
        assert!(exact.unwrap().is_one());
    }

    #[test]
    fn conclusion_forced_split_matches_sigma_power() {
        // A_0 = unmasked vectors, A_1 = the all-bot vector: the pair touches
        // both sets exactly when S is the full index set.
        let n = 6;
        let a0 = FamilyRepr::Predicate(Arc::new(|x: &MaskedVector| {
            x.entries.iter().all(|e| e.is_some())
        }));
        let a1 = FamilyRepr::Predicate(Arc::new(|x: &MaskedVector| {
            x.entries.iter().all(|e| e.is_none())
        }));
        let pair = SetFamilyPair::new("split", n, 2, a0, a1);
        let sigma = 0.9;
        let (_, exact) = conclusion_probability(&pair, sigma, EvalMode::Exhaustive).unwrap();
        let mut expect = BigRational::one();
        let s = BigRational::from_float(sigma).unwrap();
        for _ in 0..n {
            expect *= &s;
        }
        assert_eq!(exact.unwrap(), expect);
    }

    #[test]
    fn monte_carlo_ci_covers_exhaustive_value() {
        // Overlapping pair with a nontrivial conclusion: A_0 holds vectors
        // with at most two bots, A_1 those with at least one.
        let n = 8;
        let a0 = FamilyRepr::Predicate(Arc::new(|x: &MaskedVector| {
            x.entries.iter().filter(|e| e.is_none()).count() <= 2
        }));
        let a1 = FamilyRepr::Predicate(Arc::new(|x: &MaskedVector| {
            x.entries.iter().any(|e| e.is_none())
        }));
        let pair = SetFamilyPair::new("botcount", n, 2, a0, a1);
        let sigma = 0.2;
        let (_, exact) = conclusion_probability(&pair, sigma, EvalMode::Exhaustive).unwrap();
        let exact_f = exact.unwrap().to_f64().unwrap();
        let mut covered = 0;
        for rep in 0..100 {
            let (est, _) = conclusion_probability(
                &pair,
                sigma,
                EvalMode::MonteCarlo {
                    trials: 2_000,
                    seed: 1000 + rep,
                },
            )
            .unwrap();
            if (est.point - exact_f).abs() <= est.ci_radius {
                covered += 1;
            }
        }
        assert!(covered >= 99, "covered {covered}/100");
    }

    #[test]
    fn ball_radius_zero_is_the_center_alone() {
        let pair = ball_sets(8, 0, 2).unwrap();
        let center0 = MaskedVector::from_symbols(&[0; 8]);
        let center1 = MaskedVector::from_symbols(&[1; 8]);
        assert!(pair.contains(0, &center0).unwrap());
        assert!(!pair.contains(0, &center1).unwrap());
        assert!(pair.contains(1, &center1).unwrap());
        let mut off = center0.clone();
        off.entries[3] = None;
        assert!(!pair.contains(0, &off).unwrap());
    }

    #[test]
    fn prefix_sets_are_disjoint_for_positive_k() {
        let pair = prefix_sets(6, 1, 2).unwrap();
        for r in 0u32..(1 << 6) {
            let sym: Vec<u64> = (0..6).map(|i| ((r >> i) & 1) as u64).collect();
            let mv = MaskedVector::from_symbols(&sym);
            assert!(!(pair.contains(0, &mv).unwrap() && pair.contains(1, &mv).unwrap()));
        }
    }

    #[test]
    fn evaluate_flags_is_reported_not_suppressed() {
        // Prefix at a large delta: hypothesis holds on both sides while the
        // conclusion is exactly zero. The verdict must carry the flag.
        let pair = prefix_sets(10, 2, 2).unwrap();
        let v = evaluate(&pair, 0.2, 0.2, 0.4, EvalMode::Exhaustive).unwrap();
        assert!(v.hypothesis[0].ok && v.hypothesis[1].ok);
        assert_eq!(v.conclusion.point, 0.0);
        assert!(v.flagged);
    }

    fn induced_fixture() -> (ProtocolSpec, AttackGeometry, SetupBundle) {
        let spec = protocols::two_round_coin_majority(9, 4).unwrap();
        let geom = AttackGeometry::custom(
            9,
            4,
            Regime::Quarter,
            AttackStage::SecondRoundPr,
            2,
            1,
            0.05,
        )
        .unwrap();
        let trace = run_honest(&spec, &geom.from, Seed::new(77)).unwrap();
        (spec, geom, trace.setup)
    }

    #[test]
    fn induced_sets_reject_all_masked_tape() {
        let (spec, geom, setup) = induced_fixture();
        let tape = MaskedVector {
            entries: vec![None; 9],
        };
        for b in [0u8, 1] {
            let pred = protocol_induced_sets(&spec, &geom, &setup, 1, b).unwrap();
            assert!(!pred(&tape));
        }
    }

    /// Independent oracle for the coin-majority induced sets: replays the
    /// halting rule directly from vote counts without touching the engine.
    fn coin_majority_induced_oracle(
        geom: &AttackGeometry,
        n: usize,
        t: usize,
        d: usize,
        tape: &MaskedVector,
        b: u8,
    ) -> bool {
        let inputs = &geom.from;
        let masked = tape.bot_indices();
        let pivot: Vec<usize> = geom.pivot.iter().map(|p| p.idx()).collect();
        let mut excluded: BTreeSet<usize> = pivot.iter().copied().collect();
        excluded.extend(geom.cells[d - 1].iter().map(|p| p.idx()));
        excluded.extend(masked.iter().copied());
        let survivors: Vec<usize> = (0..n).filter(|i| !excluded.contains(i)).collect();
        if survivors.is_empty() {
            return false;
        }
        // Round-2 coin senders: everyone except masked parties and the
        // (interior-d) pivot, which aborts in round 2.
        let senders: Vec<usize> = (0..n)
            .filter(|i| !masked.contains(i) && !pivot.contains(i))
            .collect();
        for &j in &survivors {
            // Round-1 votes as seen by party j (pivot face depends on cell).
            let mut zeros = 0usize;
            let mut ones = 0usize;
            for i in 0..n {
                let bit = if pivot.contains(&i) {
                    let cell = geom.cell_of(PartyId::from_idx(j));
                    if cell <= d && cell > 0 {
                        1 - inputs.bits()[i]
                    } else {
                        inputs.bits()[i]
                    }
                } else {
                    inputs.bits()[i]
                };
                if bit == 0 {
                    zeros += 1;
                } else {
                    ones += 1;
                }
            }
            let supermajority = if zeros >= n - t {
                Some(0u8)
            } else if ones >= n - t {
                Some(1u8)
            } else {
                None
            };
            // Coins visible to j: every round-2 sender's (j itself is always
            // a sender, being outside the pivot and the masked set).
            let mut c0 = 0usize;
            let mut c1 = 0usize;
            for &i in &senders {
                let coin = tape.entries[i].unwrap() & 1;
                if coin == 0 {
                    c0 += 1;
                } else {
                    c1 += 1;
                }
            }
            let maj = u8::from(c1 > c0);
            let halts = match supermajority {
                Some(v) if maj != v => false,
                _ => true,
            };
            if !halts || maj != b {
                return false;
            }
        }
        true
    }

    #[test]
    fn induced_sets_match_direct_oracle_on_coin_majority() {
        let (spec, geom, setup) = induced_fixture();
        let d = 1;
        let preds = [
            protocol_induced_sets(&spec, &geom, &setup, d, 0).unwrap(),
            protocol_induced_sets(&spec, &geom, &setup, d, 1).unwrap(),
        ];
        // All masked tapes over (Sigma u bot)^9 with Sigma = {0,1}.
        let mut both = 0usize;
        let mut hits = 0usize;
        for code in 0u64..3u64.pow(9) {
            let mut c = code;
            let entries: Vec<Option<u64>> = (0..9)
                .map(|_| {
                    let v = c % 3;
                    c /= 3;
                    if v == 2 {
                        None
                    } else {
                        Some(v)
                    }
                })
                .collect();
            let tape = MaskedVector { entries };
            let in0 = preds[0](&tape);
            let in1 = preds[1](&tape);
            assert_eq!(
                in0,
                coin_majority_induced_oracle(&geom, 9, 4, d, &tape, 0),
                "b=0 tape {tape:?}"
            );
            assert_eq!(
                in1,
                coin_majority_induced_oracle(&geom, 9, 4, d, &tape, 1),
                "b=1 tape {tape:?}"
            );
            if in0 && in1 {
                both += 1;
            }
            if in0 || in1 {
                hits += 1;
            }
        }
        // Well-defined outputs cannot land in both sets on one tape.
        assert_eq!(both, 0);
        assert!(hits > 0);
    }

    #[test]
    fn induced_split_pair_forces_disagreement_faces() {
        // A tape in one set whose masking lands in the other supports a
        // deterministic two-face disagreement: the abort-free face halts on
        // one bit, the aborted face on the opposite bit. At threshold n - t =
        // 7 no vote profile reaches a super-majority here, so every survivor
        // outputs the visible coin majority and masking can flip it.
        let spec = protocols::two_round_coin_majority(9, 2).unwrap();
        let geom = AttackGeometry::custom(
            9,
            4,
            Regime::Quarter,
            AttackStage::SecondRoundPr,
            2,
            1,
            0.05,
        )
        .unwrap();
        let setup = run_honest(&spec, &geom.from, Seed::new(77)).unwrap().setup;
        let d = 1;
        let preds = [
            protocol_induced_sets(&spec, &geom, &setup, d, 0).unwrap(),
            protocol_induced_sets(&spec, &geom, &setup, d, 1).unwrap(),
        ];
        let mut found = None;
        'outer: for code in 0u64..(1u64 << 9) {
            let sym: Vec<u64> = (0..9).map(|i| (code >> i) & 1).collect();
            let tape = MaskedVector::from_symbols(&sym);
            if !preds[1](&tape) {
                continue;
            }
            for s_mask in 1u32..(1u32 << 9) {
                let s: BTreeSet<usize> = (0..9).filter(|i| s_mask & (1 << i) != 0).collect();
                let masked = mask(&tape, &s);
                if preds[0](&masked) {
                    found = Some((tape, s));
                    break 'outer;
                }
            }
        }
        let (tape, s) = found.expect("a splitting pair exists at these parameters");
        // Replay both faces through the engine-level simulator.
        let coins = CoinTape {
            per_round: vec![
                vec![0; 9],
                tape.entries.iter().map(|e| e.unwrap()).collect(),
            ],
        };
        let abort: BTreeSet<PartyId> = s.iter().map(|&i| PartyId::from_idx(i)).collect();
        let no_abort = run_variant(&spec, &geom.from, &setup, &coins, &geom.script(d, &BTreeSet::new()));
        let with_abort = run_variant(&spec, &geom.from, &setup, &coins, &geom.script(d, &abort));
        let mut excluded: BTreeSet<usize> = geom.pivot.iter().map(|p| p.idx()).collect();
        excluded.extend(geom.cells[d - 1].iter().map(|p| p.idx()));
        let free: Vec<usize> = (0..9)
            .filter(|i| !excluded.contains(i) && !s.contains(i))
            .collect();
        assert!(free.iter().all(|&i| no_abort.outputs[i] == Some(1)));
        assert!(free.iter().all(|&i| with_abort.outputs[i] == Some(0)));
    }
}
