//! Monte-Carlo measurement with Hoeffding confidence intervals, the
//! closed-form halting-bound calculators, and the end-to-end bound audits
//! that replay each theorem's constructive adversary suite.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::AdversaryStrategy;
use crate::attacks::{
    first_round_attack, pivot_random_d, pivot_variant, pr_agreement_attack, pr_halting_attack,
    second_round_static_attack, AttackGeometry, AttackStage, Regime,
};
use crate::engine::{run, run_honest, Seed};
use crate::error::Error;
use crate::protocol::ProtocolSpec;
use crate::trace::{ExecutionTrace, InputVector};

/// Monte-Carlo point estimate with a two-sided Hoeffding confidence radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub point: f64,
    pub trials: usize,
    pub ci_radius: f64,
}

impl Estimate {
    /// Two-sided Hoeffding radius: `sqrt(ln(2 / (1 - confidence)) / (2 trials))`.
    pub fn hoeffding_radius(trials: usize, confidence: f64) -> f64 {
        if trials == 0 {
            return 1.0;
        }
        ((2.0 / (1.0 - confidence)).ln() / (2.0 * trials as f64)).sqrt()
    }

    pub fn from_counts(hits: usize, trials: usize, confidence: f64) -> Estimate {
        let point = if trials == 0 {
            0.0
        } else {
            hits as f64 / trials as f64
        };
        Estimate {
            point,
            trials,
            ci_radius: Self::hoeffding_radius(trials, confidence),
        }
    }

    /// Exact value known without sampling error.
    pub fn exact(point: f64, trials: usize) -> Estimate {
        Estimate {
            point,
            trials,
            ci_radius: 0.0,
        }
    }

    pub fn covers(&self, value: f64) -> bool {
        (self.point - value).abs() <= self.ci_radius
    }
}

/// Per-run agreement/validity/halting measurements; all three estimates share
/// the run's trial count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaMeasurement {
    pub agreement_violation: Estimate,
    pub validity_violation: Estimate,
    pub halting_by_q: Estimate,
}

fn trial_outcome(trace: &ExecutionTrace, inputs: &InputVector, q: usize) -> (bool, bool, bool) {
    let honest = trace.honest_indices();
    let outputs: Vec<Option<u8>> = honest.iter().map(|&i| trace.outputs[i]).collect();
    let agreement_violated =
        outputs.contains(&Some(0)) && outputs.contains(&Some(1));
    let unanimous = honest
        .windows(2)
        .all(|w| inputs.bits()[w[0]] == inputs.bits()[w[1]]);
    let validity_violated = if unanimous && !honest.is_empty() {
        let b = inputs.bits()[honest[0]];
        outputs.contains(&Some(1 - b))
    } else {
        false
    };
    let halted = honest
        .iter()
        .all(|&i| matches!(trace.halt_round[i], Some(r) if r <= q));
    (agreement_violated, validity_violated, halted)
}

/// Run `trials` independent seeded executions and count disagreement among
/// honest non-bottom outputs, wrong outputs on unanimous honest inputs, and
/// halting within the protocol's round budget. Trials fan out across the
/// ambient rayon pool; counts are exact sums, so the result is deterministic.
pub fn measure(
    spec: &ProtocolSpec,
    inputs: &InputVector,
    adversary: Option<&AdversaryStrategy>,
    trials: usize,
    seed: u64,
    confidence: f64,
) -> Result<BaMeasurement, Error> {
    if trials == 0 {
        return Err(Error::config("trials must be at least 1"));
    }
    let counts = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let s = Seed::new(seed).trial(trial);
            let trace = match adversary {
                Some(a) => run(spec, inputs, a, s)?,
                None => run_honest(spec, inputs, s)?,
            };
            let (agree, valid, halt) = trial_outcome(&trace, inputs, spec.q);
            Ok::<_, Error>((agree as usize, valid as usize, halt as usize))
        })
        .try_reduce_with(|a, b| Ok((a.0 + b.0, a.1 + b.1, a.2 + b.2)));
    let counts = match counts {
        Some(r) => r?,
        None => (0, 0, 0),
    };
    Ok(BaMeasurement {
        agreement_violation: Estimate::from_counts(counts.0, trials, confidence),
        validity_violation: Estimate::from_counts(counts.1, trials, confidence),
        halting_by_q: Estimate::from_counts(counts.2, trials, confidence),
    })
}

/// A calculated halting bound with its structural parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundValue {
    pub value: f64,
    pub w: Option<usize>,
    pub err: f64,
    pub branch: String,
    /// The inequality constrains nothing when the bound reaches 1.
    pub vacuous: bool,
}

/// First-round halting bound: `5a + 2b + err` for `t >= n/3`, else
/// `1/2 + 5a + b + err` for `t >= n/4`, with `err = 2^(t-n)` (zero for
/// public-randomness protocols attacked by a rushing face selector).
pub fn first_round_bound(
    n: usize,
    t: usize,
    alpha: f64,
    beta: f64,
    public_randomness: bool,
) -> Result<BoundValue, Error> {
    if 4 * t < n {
        return Err(Error::OutOfScope(
            "first-round bound requires t >= n/4".into(),
        ));
    }
    let err = if public_randomness {
        0.0
    } else {
        2f64.powi(t as i32 - n as i32)
    };
    let (value, branch) = if 3 * t >= n {
        (5.0 * alpha + 2.0 * beta + err, "third")
    } else {
        (0.5 + 5.0 * alpha + beta + err, "quarter")
    };
    Ok(BoundValue {
        value,
        w: None,
        err,
        branch: branch.into(),
        vacuous: value >= 1.0,
    })
}

/// Second-round halting bound for arbitrary protocols:
/// `1 + 2a + b/w^2 - 1/(2 w^2)` with `w = ceil((n - ceil(n/4)) / floor(t - n/4)) + 1`.
pub fn second_round_bound_arbitrary(
    n: usize,
    t: usize,
    alpha: f64,
    beta: f64,
) -> Result<BoundValue, Error> {
    if 4 * t <= n {
        return Err(Error::OutOfScope(
            "second-round bound requires t > n/4".into(),
        ));
    }
    let den = (4 * t - n) / 4; // floor(t - n/4)
    if den == 0 {
        return Err(Error::OutOfScope(
            "floor(t - n/4) = 0: the bound's cell parameter is undefined at this scale".into(),
        ));
    }
    let w = (n - n.div_ceil(4)).div_ceil(den) + 1;
    let w2 = (w * w) as f64;
    let value = 1.0 + 2.0 * alpha + beta / w2 - 1.0 / (2.0 * w2);
    Ok(BoundValue {
        value,
        w: Some(w),
        err: 0.0,
        branch: "arbitrary".into(),
        vacuous: value >= 1.0,
    })
}

/// The arbitrary-protocol bound evaluated at an explicit `w` (used by audits
/// whose geometry had to shrink the pivot because the cited `w` expression is
/// undefined at desk scale).
pub fn second_round_bound_with_w(w: usize, alpha: f64, beta: f64) -> BoundValue {
    let w2 = (w * w) as f64;
    let value = 1.0 + 2.0 * alpha + beta / w2 - 1.0 / (2.0 * w2);
    BoundValue {
        value,
        w: Some(w),
        err: 0.0,
        branch: "arbitrary".into(),
        vacuous: value >= 1.0,
    }
}

/// Thresholds of the public-randomness second-round statement for chosen
/// `eps_t`, `eps_gamma`: the validity budget `eps_gamma^2 / 200`, the two
/// conditional halting bounds, and the derived attack knobs
/// `lambda = eps_gamma / 10`, `sigma = eps_t / 4`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrBounds {
    pub beta_threshold: f64,
    pub gamma_third: f64,
    pub gamma_quarter: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub quarter_vacuous: bool,
}

pub fn second_round_bound_pr(eps_t: f64, eps_gamma: f64) -> Result<PrBounds, Error> {
    if !(eps_t > 0.0 && eps_gamma > 0.0) {
        return Err(Error::config("eps_t and eps_gamma must be positive"));
    }
    let gamma_quarter = 0.5 + eps_gamma;
    Ok(PrBounds {
        beta_threshold: eps_gamma * eps_gamma / 200.0,
        gamma_third: eps_gamma,
        gamma_quarter,
        lambda: eps_gamma / 10.0,
        sigma: eps_t / 4.0,
        quarter_vacuous: gamma_quarter >= 1.0,
    })
}

/// One suite cell: a (strategy, input vector) pair and its measurements.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditCell {
    pub adversary: String,
    pub inputs: String,
    pub measurement: BaMeasurement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Satisfied,
    Violated,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::Satisfied => "satisfied",
            Verdict::Violated => "violated",
            Verdict::Inconclusive => "inconclusive",
        };
        f.write_str(s)
    }
}

/// Deviation of the per-variant halting-denial accounting
/// `(1 - gamma_d) / (h + 1) <= 1 - gamma_rand` (plus slack), reported for
/// the static second-round stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HaltingAccounting {
    pub ok: bool,
    pub worst_margin: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub stage: String,
    pub protocol: String,
    pub n: usize,
    pub t: usize,
    pub trials: usize,
    /// Minimum measured halting over the suite.
    pub gamma_hat: Estimate,
    /// Maximum measured agreement violation over the suite (a lower bound on
    /// the protocol's true agreement error).
    pub alpha_hat: Estimate,
    /// Maximum measured validity violation over unanimous-honest-input cells.
    pub beta_hat: Estimate,
    pub bound: f64,
    pub slack: f64,
    pub verdict: Verdict,
    pub halting_accounting: Option<HaltingAccounting>,
    pub cells: Vec<AuditCell>,
}

impl AuditReport {
    pub fn csv_header() -> &'static str {
        "stage,protocol,n,t,trials,gamma_hat,alpha_hat,beta_hat,bound,slack,verdict"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            self.stage,
            self.protocol,
            self.n,
            self.t,
            self.trials,
            self.gamma_hat.point,
            self.alpha_hat.point,
            self.beta_hat.point,
            self.bound,
            self.slack,
            self.verdict
        )
    }
}

/// Knobs for the public-randomness audit stage.
#[derive(Debug, Clone, Copy)]
pub struct PrAuditKnobs {
    pub sigma: f64,
    pub lambda: f64,
    pub delta: f64,
}

impl Default for PrAuditKnobs {
    fn default() -> Self {
        PrAuditKnobs {
            sigma: 0.05,
            lambda: 0.1,
            delta: 0.5,
        }
    }
}

fn unique_inputs(geom: &AttackGeometry) -> Vec<InputVector> {
    let n = geom.n;
    let mut out: Vec<InputVector> = Vec::new();
    let mut push = |v: InputVector| {
        if !out.contains(&v) {
            out.push(v);
        }
    };
    push(geom.v0.clone());
    push(geom.v1.clone());
    if let Some(vs) = &geom.v_star {
        push(vs.clone());
    }
    push(InputVector::uniform(n, 0));
    push(InputVector::uniform(n, 1));
    out
}

/// Run a stage's full adversary suite (honest baseline included), aggregate
/// worst-case measurements, and evaluate the stage's halting inequality with
/// slack equal to the coefficient-weighted sum of the relevant confidence
/// radii.
pub fn audit(
    spec: &ProtocolSpec,
    geom: &AttackGeometry,
    trials: usize,
    seed: u64,
    confidence: f64,
    pr_knobs: PrAuditKnobs,
) -> Result<AuditReport, Error> {
    let stage = geom.stage;
    let inputs = unique_inputs(geom);

    // Build the stage's strategies.
    let mut strategies: Vec<(String, Option<AdversaryStrategy>)> = vec![("honest".into(), None)];
    let mut per_d_labels: Vec<String> = Vec::new();
    match stage {
        AttackStage::FirstRound => {
            for g in geom.suite_orientations() {
                let s = first_round_attack(spec, &g, false)?;
                strategies.push((format!("{}:{}->{}", s.name, g.from, g.to), Some(s)));
                if spec.public_randomness {
                    let s = first_round_attack(spec, &g, true)?;
                    strategies.push((format!("{}:{}->{}", s.name, g.from, g.to), Some(s)));
                }
            }
        }
        AttackStage::SecondRoundArb => {
            for d in 0..=geom.h {
                let s = pivot_variant(spec, geom, d, &Default::default())?;
                let label = format!("pivot-variant-d{d}");
                per_d_labels.push(label.clone());
                strategies.push((label, Some(s)));
            }
            strategies.push(("pivot-random-d".into(), Some(pivot_random_d(spec, geom)?)));
            strategies.push((
                "second-round-static".into(),
                Some(second_round_static_attack(spec, geom)?),
            ));
        }
        AttackStage::SecondRoundPr => {
            let s = pr_halting_attack(spec, geom, pr_knobs.sigma, pr_knobs.lambda, pr_knobs.delta)?;
            strategies.push(("pr-halting".into(), Some(s)));
            let s = pr_agreement_attack(spec, geom, pr_knobs.sigma)?;
            strategies.push(("pr-agreement".into(), Some(s)));
        }
    }

    // Measure every (strategy, input) cell.
    let mut cells: Vec<AuditCell> = Vec::new();
    for (label, strategy) in &strategies {
        let input_set: &[InputVector] = match stage {
            // The d-sweep is a halting account on the attack pair; the
            // aggregate strategies run on every suite input.
            AttackStage::SecondRoundArb if per_d_labels.contains(label) => {
                std::slice::from_ref(&geom.from)
            }
            _ => &inputs,
        };
        for iv in input_set {
            let m = measure(spec, iv, strategy.as_ref(), trials, seed, confidence)?;
            cells.push(AuditCell {
                adversary: label.clone(),
                inputs: iv.to_string(),
                measurement: m,
            });
        }
    }

    // Worst-case aggregation.
    let gamma_hat = cells
        .iter()
        .map(|c| c.measurement.halting_by_q)
        .min_by(|a, b| a.point.total_cmp(&b.point))
        .expect("suite is nonempty");
    let alpha_hat = cells
        .iter()
        .map(|c| c.measurement.agreement_violation)
        .max_by(|a, b| a.point.total_cmp(&b.point))
        .expect("suite is nonempty");
    let beta_hat = cells
        .iter()
        .map(|c| c.measurement.validity_violation)
        .max_by(|a, b| a.point.total_cmp(&b.point))
        .expect("suite is nonempty");

    let (bound, slack) = match stage {
        AttackStage::FirstRound => {
            let b = first_round_bound(
                geom.n,
                geom.t,
                alpha_hat.point,
                beta_hat.point,
                spec.public_randomness,
            )?;
            let slack = match geom.regime {
                Regime::Third => {
                    gamma_hat.ci_radius + 5.0 * alpha_hat.ci_radius + 2.0 * beta_hat.ci_radius
                }
                Regime::Quarter => {
                    gamma_hat.ci_radius + 5.0 * alpha_hat.ci_radius + beta_hat.ci_radius
                }
            };
            // The regime choice is the geometry's, not the branch picker's.
            let value = match geom.regime {
                Regime::Third => 5.0 * alpha_hat.point + 2.0 * beta_hat.point + b.err,
                Regime::Quarter => 0.5 + 5.0 * alpha_hat.point + beta_hat.point + b.err,
            };
            (value, slack)
        }
        AttackStage::SecondRoundArb => {
            let b = second_round_bound_with_w(geom.w, alpha_hat.point, beta_hat.point);
            let w2 = (geom.w * geom.w) as f64;
            let slack =
                gamma_hat.ci_radius + 2.0 * alpha_hat.ci_radius + beta_hat.ci_radius / w2;
            (b.value, slack)
        }
        AttackStage::SecondRoundPr => {
            let eps_gamma = 10.0 * pr_knobs.lambda;
            let value = match geom.regime {
                Regime::Third => eps_gamma,
                Regime::Quarter => 0.5 + eps_gamma,
            };
            (value, gamma_hat.ci_radius)
        }
    };

    let verdict = if gamma_hat.point <= bound + slack {
        Verdict::Satisfied
    } else {
        Verdict::Violated
    };

    // Halting-denial accounting for the static stage:
    // (1 - gamma_d) / (h + 1) <= 1 - gamma_rand, within radii.
    let halting_accounting = if stage == AttackStage::SecondRoundArb {
        let gamma_rand = cells
            .iter()
            .find(|c| c.adversary == "pivot-random-d" && c.inputs == geom.from.to_string())
            .map(|c| c.measurement.halting_by_q)
            .expect("random-d cell present");
        let mut ok = true;
        let mut worst: f64 = f64::NEG_INFINITY;
        for label in &per_d_labels {
            let gd = cells
                .iter()
                .find(|c| &c.adversary == label)
                .map(|c| c.measurement.halting_by_q)
                .expect("per-d cell present");
            let lhs = (1.0 - gd.point) / (geom.h as f64 + 1.0);
            let rhs = (1.0 - gamma_rand.point) + gamma_rand.ci_radius + gd.ci_radius;
            worst = worst.max(lhs - rhs);
            if lhs > rhs {
                ok = false;
            }
        }
        Some(HaltingAccounting {
            ok,
            worst_margin: worst,
        })
    } else {
        None
    };

    Ok(AuditReport {
        stage: match stage {
            AttackStage::FirstRound => "first-round".into(),
            AttackStage::SecondRoundArb => "second-round-arb".into(),
            AttackStage::SecondRoundPr => "second-round-pr".into(),
        },
        protocol: spec.name.clone(),
        n: geom.n,
        t: geom.t,
        trials,
        gamma_hat,
        alpha_hat,
        beta_hat,
        bound,
        slack,
        verdict,
        halting_accounting,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols;
    use crate::rng::{Purpose, SeededPrf};

    #[test]
    fn hoeffding_radius_formula() {
        let r = Estimate::hoeffding_radius(10_000, 0.99);
        assert!((r - ((2.0f64 / 0.01).ln() / 20_000.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn estimator_calibration_covers_true_p() {
        // Bernoulli(p) with known p: the 99% CI must cover p in at least 99%
        // of repetitions (Hoeffding is conservative, so near 100% here).
        let p = 0.37;
        let prf = SeededPrf::new(99);
        let mut covered = 0;
        let reps = 1_000;
        for rep in 0..reps {
            let mut rng = prf.stream(Purpose::Aux, rep, 0, 0);
            let trials = 500;
            let hits = (0..trials).filter(|_| rng.bernoulli(p)).count();
            let est = Estimate::from_counts(hits, trials, 0.99);
            if est.covers(p) {
                covered += 1;
            }
        }
        assert!(covered >= 990, "covered {covered}/1000");
    }

    #[test]
    fn first_round_bound_examples() {
        let b = first_round_bound(3, 1, 0.0, 0.0, false).unwrap();
        assert_eq!(b.value, 0.25);
        assert_eq!(b.branch, "third");
        let b = first_round_bound(3, 1, 0.0, 0.0, true).unwrap();
        assert_eq!(b.value, 0.0);
        // Quarter branch approaches 1/2 from above as err vanishes.
        let b = first_round_bound(1000, 260, 0.0, 0.0, false).unwrap();
        assert_eq!(b.branch, "quarter");
        assert!((b.value - 0.5).abs() < 1e-9);
        assert!(first_round_bound(100, 20, 0.0, 0.0, false).is_err());
    }

    #[test]
    fn second_round_bound_examples() {
        let b = second_round_bound_arbitrary(100, 30, 0.0, 0.0).unwrap();
        assert_eq!(b.w, Some(16));
        assert_eq!(b.value, 1.0 - 1.0 / 512.0);
        let b = second_round_bound_arbitrary(100, 50, 0.0, 0.0).unwrap();
        assert_eq!(b.w, Some(4));
        assert_eq!(b.value, 1.0 - 1.0 / 32.0);
        // beta >= 1/2 makes the bound vacuous.
        let b = second_round_bound_arbitrary(100, 30, 0.0, 0.5).unwrap();
        assert!(b.vacuous);
        // floor(t - n/4) = 0 is out of scope.
        assert!(second_round_bound_arbitrary(9, 3, 0.0, 0.0).is_err());
    }

    #[test]
    fn pr_bound_examples() {
        let b = second_round_bound_pr(0.1, 0.2).unwrap();
        assert!((b.beta_threshold - 0.0002).abs() < 1e-15);
        assert_eq!(b.gamma_third, 0.2);
        assert_eq!(b.gamma_quarter, 0.7);
        assert!((b.lambda - 0.02).abs() < 1e-15);
        assert!((b.sigma - 0.025).abs() < 1e-15);
        let b = second_round_bound_pr(0.1, 1.0).unwrap();
        assert!(b.quarter_vacuous);
    }

    #[test]
    fn measure_honest_majority_is_clean() {
        let spec = protocols::one_round_majority(9).unwrap();
        let m = measure(&spec, &InputVector::uniform(9, 0), None, 500, 7, 0.99).unwrap();
        assert_eq!(m.agreement_violation.point, 0.0);
        assert_eq!(m.validity_violation.point, 0.0);
        assert_eq!(m.halting_by_q.point, 1.0);
    }

    #[test]
    fn measure_is_deterministic() {
        let spec = protocols::two_round_coin_majority(9, 2).unwrap();
        let inputs = InputVector::parse("000000011").unwrap();
        let a = measure(&spec, &inputs, None, 300, 11, 0.99).unwrap();
        let b = measure(&spec, &inputs, None, 300, 11, 0.99).unwrap();
        assert_eq!(a.halting_by_q.point, b.halting_by_q.point);
        assert_eq!(a.agreement_violation.point, b.agreement_violation.point);
    }

    #[test]
    fn first_round_audit_is_satisfied() {
        let spec = protocols::one_round_majority(9).unwrap();
        let geom =
            AttackGeometry::derive(9, 3, Regime::Third, AttackStage::FirstRound, 0.0).unwrap();
        let report = audit(&spec, &geom, 400, 21, 0.99, PrAuditKnobs::default()).unwrap();
        assert_eq!(report.verdict, Verdict::Satisfied);
        // The attack forces heavy disagreement, so alpha_hat dominates.
        assert!(report.alpha_hat.point > 0.9, "alpha {}", report.alpha_hat.point);
        assert_eq!(report.gamma_hat.point, 1.0);
    }

    #[test]
    fn second_round_arb_audit_runs_and_accounts() {
        let spec = protocols::two_round_coin_majority(9, 3).unwrap();
        let geom =
            AttackGeometry::derive(9, 3, Regime::Quarter, AttackStage::SecondRoundArb, 0.0)
                .unwrap();
        let report = audit(&spec, &geom, 400, 23, 0.99, PrAuditKnobs::default()).unwrap();
        assert_eq!(report.verdict, Verdict::Satisfied);
        let acc = report.halting_accounting.as_ref().unwrap();
        assert!(acc.ok, "accounting margin {}", acc.worst_margin);
    }

    #[test]
    fn pr_audit_runs_on_coin_majority() {
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
        let knobs = PrAuditKnobs {
            sigma: 0.05,
            lambda: 0.2,
            delta: 0.5,
        };
        let report = audit(&spec, &geom, 150, 29, 0.99, knobs).unwrap();
        // Quarter-regime conclusion: gamma below 1/2 + 10*lambda (+slack).
        assert_eq!(report.verdict, Verdict::Satisfied);
        assert!(report.bound >= 0.5);
    }

    #[test]
    fn audit_report_csv_shape() {
        let spec = protocols::one_round_majority(9).unwrap();
        let geom =
            AttackGeometry::derive(9, 3, Regime::Third, AttackStage::FirstRound, 0.0).unwrap();
        let report = audit(&spec, &geom, 50, 31, 0.99, PrAuditKnobs::default()).unwrap();
        let row = report.csv_row();
        assert_eq!(row.split(',').count(), AuditReport::csv_header().split(',').count());
        assert!(row.starts_with("first-round,one-round-majority,9,3,50,"));
    }
}
