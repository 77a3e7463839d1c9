//! Domain types shared by the execution engine: parties, inputs, coins,
//! setup bundles, messages, and full execution traces.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// One-based party index in `[1..n]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartyId(pub usize);

impl PartyId {
    /// Zero-based index for array access.
    pub fn idx(self) -> usize {
        self.0 - 1
    }

    pub fn from_idx(i: usize) -> Self {
        PartyId(i + 1)
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

/// One input bit per party.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InputVector {
    bits: Vec<u8>,
}

impl InputVector {
    pub fn new(bits: Vec<u8>) -> Result<Self, Error> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::config("input vector entries must be bits"));
        }
        Ok(Self { bits })
    }

    /// `b^n`.
    pub fn uniform(n: usize, b: u8) -> Self {
        Self { bits: vec![b & 1; n] }
    }

    /// Parse a 0/1 string such as `"000111000"`.
    pub fn parse(s: &str) -> Result<Self, Error> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0u8),
                '1' => Ok(1u8),
                _ => Err(Error::config(format!("invalid input bit '{c}'"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { bits })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bit(&self, p: PartyId) -> u8 {
        self.bits[p.idx()]
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    /// Hamming distance to another vector of the same length.
    pub fn dist(&self, other: &InputVector) -> usize {
        assert_eq!(self.len(), other.len());
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count()
    }

    /// Indices (zero-based) where the two vectors differ.
    pub fn diff_coords(&self, other: &InputVector) -> Vec<usize> {
        assert_eq!(self.len(), other.len());
        (0..self.len())
            .filter(|&i| self.bits[i] != other.bits[i])
            .collect()
    }

    /// Copy with the given zero-based coordinates flipped.
    pub fn flipped_at(&self, coords: &[usize]) -> InputVector {
        let mut bits = self.bits.clone();
        for &i in coords {
            bits[i] ^= 1;
        }
        InputVector { bits }
    }
}

impl fmt::Display for InputVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// Per-party opaque setup strings (one joint draw; correlated values allowed).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetupBundle {
    /// Identifier of the sampling distribution.
    pub source: String,
    #[serde(with = "hex_vecs")]
    pub per_party: Vec<Vec<u8>>,
}

impl SetupBundle {
    pub fn empty(n: usize, source: &str) -> Self {
        Self {
            source: source.to_string(),
            per_party: vec![Vec::new(); n],
        }
    }

    pub fn for_party(&self, p: PartyId) -> &[u8] {
        &self.per_party[p.idx()]
    }
}

/// All coins flipped in an execution: `per_round[r-1][i]` is party `i+1`'s
/// round-`r` coin value, drawn from the round's declared domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoinTape {
    pub per_round: Vec<Vec<u64>>,
}

impl CoinTape {
    pub fn coin(&self, round: usize, p: PartyId) -> u64 {
        self.per_round[round - 1][p.idx()]
    }

    pub fn rounds(&self) -> usize {
        self.per_round.len()
    }
}

/// A single point-to-point message. `is_abort` marks the explicit abort
/// action; abort messages carry an empty payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub round: usize,
    pub from: PartyId,
    pub to: PartyId,
    #[serde(with = "hex_bytes")]
    pub payload: Vec<u8>,
    pub is_abort: bool,
}

impl Message {
    pub fn abort(round: usize, from: PartyId, to: PartyId) -> Self {
        Self {
            round,
            from,
            to,
            payload: Vec::new(),
            is_abort: true,
        }
    }
}

/// Full record of one execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub setup: SetupBundle,
    pub coins: CoinTape,
    /// All messages by round (`mailboxes[r-1]`), in deterministic order.
    pub mailboxes: Vec<Vec<Message>>,
    /// Round at which each party produced an output; `None` means it ran past
    /// the halting budget (recorded output is then `None` as well).
    pub halt_round: Vec<Option<usize>>,
    /// Per-party output bit, `None` for bottom.
    pub outputs: Vec<Option<u8>>,
    /// Round at which each party became corrupted (0 = before setup),
    /// `None` for never-corrupted parties.
    pub corruption_log: Vec<Option<usize>>,
}

impl ExecutionTrace {
    pub fn n(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_corrupted(&self, p: PartyId) -> bool {
        self.corruption_log[p.idx()].is_some()
    }

    /// Zero-based indices of never-corrupted parties.
    pub fn honest_indices(&self) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| self.corruption_log[i].is_none())
            .collect()
    }

    /// All messages delivered to `to` from `from` in `round`, in order.
    pub fn delivered(&self, round: usize, from: PartyId, to: PartyId) -> Vec<&Message> {
        self.mailboxes[round - 1]
            .iter()
            .filter(|m| m.from == from && m.to == to)
            .collect()
    }

    /// The trace restricted to rounds `< round` (mailboxes only); used by the
    /// causality checks in tests.
    pub fn rounds_prefix(&self, round: usize) -> &[Vec<Message>] {
        &self.mailboxes[..round.min(self.mailboxes.len())]
    }
}

/// Projection of the outputs onto an ordered party set.
///
/// Errors on out-of-range ids; preserves input order.
pub fn outputs_of(trace: &ExecutionTrace, who: &[PartyId]) -> Result<Vec<Option<u8>>, Error> {
    let n = trace.n();
    who.iter()
        .map(|&p| {
            if p.0 == 0 || p.0 > n {
                Err(Error::config(format!("party {p} out of range 1..={n}")))
            } else {
                Ok(trace.outputs[p.idx()])
            }
        })
        .collect()
}

/// True iff every party in `who` halted by `round`.
pub fn halted_by(trace: &ExecutionTrace, round: usize, who: &[PartyId]) -> bool {
    who.iter()
        .all(|&p| matches!(trace.halt_round[p.idx()], Some(r) if r <= round))
}

/// One line of the round-oriented trace dump (write-only).
#[derive(Debug, Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum TraceRecord<'a> {
    Header {
        n: usize,
        setup: &'a SetupBundle,
        corruption_log: &'a [Option<usize>],
    },
    Round {
        round: usize,
        coins: &'a [u64],
        messages: &'a [Message],
    },
    Outcome {
        halt_round: &'a [Option<usize>],
        outputs: &'a [Option<u8>],
    },
}

/// Serialize a trace as line-oriented JSON, one round per record.
pub fn write_trace_jsonl<W: std::io::Write>(
    trace: &ExecutionTrace,
    mut w: W,
) -> std::io::Result<()> {
    let header = TraceRecord::Header {
        n: trace.n(),
        setup: &trace.setup,
        corruption_log: &trace.corruption_log,
    };
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w)?;
    for r in 1..=trace.mailboxes.len() {
        let rec = TraceRecord::Round {
            round: r,
            coins: &trace.coins.per_round[r - 1],
            messages: &trace.mailboxes[r - 1],
        };
        serde_json::to_writer(&mut w, &rec)?;
        writeln!(w)?;
    }
    let outcome = TraceRecord::Outcome {
        halt_round: &trace.halt_round,
        outputs: &trace.outputs,
    };
    serde_json::to_writer(&mut w, &outcome)?;
    writeln!(w)
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(&s).map_err(serde::de::Error::custom)
    }
}

mod hex_vecs {
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vec<u8>], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for bytes in v {
            seq.serialize_element(&hex::encode(bytes))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<u8>>, D::Error> {
        let strings = Vec::<String>::deserialize(d)?;
        strings
            .into_iter()
            .map(|s| hex::decode(&s).map_err(serde::de::Error::custom))
            .collect()
    }
}
