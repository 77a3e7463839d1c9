//! Protocol descriptions: next-message and output functions, coin domains,
//! setup samplers, and the payload codec for public-randomness protocols.

use std::sync::Arc;

use crate::error::Error;
use crate::rng::CounterRng;
use crate::trace::{PartyId, SetupBundle};

/// Coin domain for one round: a uniform bit-string of the given width
/// (0 bits = the party flips no coin that round).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoinDomain {
    pub bits: u32,
}

impl CoinDomain {
    pub const NONE: CoinDomain = CoinDomain { bits: 0 };

    pub fn bits(bits: u32) -> Self {
        assert!(bits <= 64);
        CoinDomain { bits }
    }

    pub fn is_empty(self) -> bool {
        self.bits == 0
    }

    /// Number of values in the domain; `None` for the full 2^64 domain.
    pub fn cardinality(self) -> Option<u64> {
        if self.bits == 64 {
            None
        } else {
            Some(1u64 << self.bits)
        }
    }

    pub fn sample(self, rng: &mut CounterRng) -> u64 {
        if self.bits == 0 {
            0
        } else if self.bits == 64 {
            rng.next_u64()
        } else {
            rng.next_u64() & ((1u64 << self.bits) - 1)
        }
    }
}

/// Shared immutable payload bytes; cloning bumps a refcount, which keeps the
/// n-squared delivery fan-out allocation-free.
pub type Payload = Arc<[u8]>;

/// One inbox slot as an honest party sees it: the accepted payload, or the
/// abort marker for missing/aborted/garbled slots.
pub type Slot = Option<Payload>;

/// Everything a party knows when computing a message or an output.
#[derive(Debug, Clone)]
pub struct View {
    pub input_bit: u8,
    pub setup: Vec<u8>,
    /// Coins through the current round; `coins[r-1]` is the round-`r` value.
    pub coins: Vec<u64>,
    /// `inbox[r-1][j]` is the accepted payload from party `j+1` in round `r`
    /// (never populated for the current round while sending).
    pub inbox: Vec<Vec<Slot>>,
}

impl View {
    pub fn coin(&self, round: usize) -> u64 {
        self.coins[round - 1]
    }

    pub fn slot(&self, round: usize, from: PartyId) -> &Slot {
        &self.inbox[round - 1][from.idx()]
    }
}

pub type NextMsgFn = dyn Fn(PartyId, PartyId, usize, &View) -> Vec<u8> + Send + Sync;
pub type OutputFn = dyn Fn(PartyId, &View) -> Option<u8> + Send + Sync;
pub type SetupFn = dyn Fn(&mut CounterRng) -> SetupBundle + Send + Sync;

/// A synchronous n-party protocol under test.
///
/// `next_msg` and `output_fn` must be pure functions of their arguments;
/// the engine relies on this for replay, validation, and variant simulation.
#[derive(Clone)]
pub struct ProtocolSpec {
    pub name: String,
    pub n: usize,
    /// Halting-round budget under test; parties still running after round `q`
    /// are recorded with output bottom.
    pub q: usize,
    pub public_randomness: bool,
    /// Declared coin domain per round, `coin_domains[r-1]`; rounds beyond the
    /// vector length flip no coins.
    pub coin_domains: Vec<CoinDomain>,
    /// When set, `next_msg(i, j, r, view)` is independent of `j` for `j != i`;
    /// scripted simulations exploit this to compute each payload once.
    pub multicast: bool,
    next_msg: Arc<NextMsgFn>,
    output_fn: Arc<OutputFn>,
    setup_sampler: Arc<SetupFn>,
}

impl std::fmt::Debug for ProtocolSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProtocolSpec")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("q", &self.q)
            .field("public_randomness", &self.public_randomness)
            .field("coin_domains", &self.coin_domains)
            .finish_non_exhaustive()
    }
}

impl ProtocolSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        n: usize,
        q: usize,
        public_randomness: bool,
        coin_domains: Vec<CoinDomain>,
        multicast: bool,
        next_msg: Arc<NextMsgFn>,
        output_fn: Arc<OutputFn>,
        setup_sampler: Arc<SetupFn>,
    ) -> Self {
        Self {
            name: name.into(),
            n,
            q,
            public_randomness,
            coin_domains,
            multicast,
            next_msg,
            output_fn,
            setup_sampler,
        }
    }

    /// Protocol without a setup phase.
    #[allow(clippy::too_many_arguments)]
    pub fn plain(
        name: impl Into<String>,
        n: usize,
        q: usize,
        public_randomness: bool,
        coin_domains: Vec<CoinDomain>,
        multicast: bool,
        next_msg: Arc<NextMsgFn>,
        output_fn: Arc<OutputFn>,
    ) -> Self {
        let n_parties = n;
        Self::new(
            name,
            n,
            q,
            public_randomness,
            coin_domains,
            multicast,
            next_msg,
            output_fn,
            Arc::new(move |_rng| SetupBundle::empty(n_parties, "none")),
        )
    }

    pub fn coin_domain(&self, round: usize) -> CoinDomain {
        self.coin_domains
            .get(round - 1)
            .copied()
            .unwrap_or(CoinDomain::NONE)
    }

    pub fn next_msg(&self, from: PartyId, to: PartyId, round: usize, view: &View) -> Vec<u8> {
        (self.next_msg)(from, to, round, view)
    }

    pub fn output(&self, party: PartyId, view: &View) -> Option<u8> {
        (self.output_fn)(party, view)
    }

    pub fn sample_setup(&self, rng: &mut CounterRng) -> SetupBundle {
        (self.setup_sampler)(rng)
    }

    /// Same protocol with a different halting budget under test.
    pub fn truncated(&self, q: usize) -> ProtocolSpec {
        let mut spec = self.clone();
        spec.q = q;
        spec.name = format!("{}@q{}", self.name, q);
        spec
    }

    /// Recast a public-randomness protocol so that round-1 coins are drawn in
    /// the setup phase instead, leaving round 1 coin-free. The relocated coin
    /// rides as the last 8 bytes of each party's setup string; round-1 wire
    /// payloads carry it inside their setup field (the coin field goes
    /// empty), and views are rewritten both ways so the inner protocol logic
    /// is unchanged.
    pub fn round1_coins_to_setup(&self) -> Result<ProtocolSpec, Error> {
        let dom = self.coin_domain(1);
        if dom.is_empty() {
            return Ok(self.clone());
        }
        if !self.public_randomness {
            return Err(Error::config(
                "coin relocation rewrites public-randomness payloads; \
                 the protocol is not flagged public-randomness",
            ));
        }
        let inner_setup = Arc::clone(&self.setup_sampler);
        let inner_next = Arc::clone(&self.next_msg);
        let inner_out = Arc::clone(&self.output_fn);
        let n = self.n;

        let sampler: Arc<SetupFn> = Arc::new(move |rng: &mut CounterRng| {
            let mut bundle = (inner_setup)(rng);
            for s in bundle.per_party.iter_mut().take(n) {
                let coin = dom.sample(rng);
                s.extend_from_slice(&coin.to_le_bytes());
            }
            bundle.source = format!("{}+round1coins", bundle.source);
            bundle
        });

        fn split_setup(setup: &[u8]) -> (&[u8], u64) {
            let cut = setup.len() - 8;
            let coin = u64::from_le_bytes(setup[cut..].try_into().expect("8-byte coin tail"));
            (&setup[..cut], coin)
        }

        // Inner protocols see their original view: the relocated coin back in
        // the round-1 coin slot, the original setup, and round-1 inbox
        // payloads re-encoded in the original wire layout.
        let unwrap_view = move |view: &View| -> View {
            let mut v = view.clone();
            let (inner, coin) = split_setup(&v.setup);
            v.setup = inner.to_vec();
            if v.coins.is_empty() {
                v.coins.push(coin);
            } else {
                v.coins[0] = coin;
            }
            if let Some(round1) = v.inbox.first_mut() {
                for slot in round1.iter_mut() {
                    if let Some(payload) = slot {
                        match pr_payload::decode(payload) {
                            Ok(d) if d.coin.is_none() && d.setup.len() >= 8 => {
                                let (peer_setup, peer_coin) = split_setup(d.setup);
                                *payload = pr_payload::encode(
                                    Some(peer_coin),
                                    Some(peer_setup),
                                    d.body,
                                )
                                .into();
                            }
                            _ => *slot = None,
                        }
                    }
                }
            }
            v
        };

        let unwrap_for_out = unwrap_view;
        let next: Arc<NextMsgFn> = Arc::new(move |from, to, round, view: &View| {
            let inner_payload = (inner_next)(from, to, round, &unwrap_view(view));
            if round != 1 {
                return inner_payload;
            }
            // Re-wrap the round-1 message: the coin travels in the setup
            // field of the recast protocol.
            match pr_payload::decode(&inner_payload) {
                Ok(d) => pr_payload::encode(None, Some(&view.setup), d.body),
                Err(_) => inner_payload,
            }
        });
        let out: Arc<OutputFn> =
            Arc::new(move |party, view: &View| (inner_out)(party, &unwrap_for_out(view)));

        let mut domains = self.coin_domains.clone();
        domains[0] = CoinDomain::NONE;
        Ok(ProtocolSpec {
            name: format!("{}+setupcoins", self.name),
            n: self.n,
            q: self.q,
            public_randomness: self.public_randomness,
            coin_domains: domains,
            multicast: self.multicast,
            next_msg: next,
            output_fn: out,
            setup_sampler: sampler,
        })
    }
}

/// Wire format for public-randomness payloads:
///
/// ```text
/// [coin_len u8][coin 8 bytes if coin_len>0][setup_len u16 le][setup][body]
/// ```
///
/// The coin part carries the sender's fresh coins for the round verbatim; the
/// setup part is only populated in round 1.
pub mod pr_payload {
    use super::Error;

    pub fn encode(coin: Option<u64>, setup: Option<&[u8]>, body: &[u8]) -> Vec<u8> {
        let setup = setup.unwrap_or(&[]);
        let mut out = Vec::with_capacity(1 + 8 + 2 + setup.len() + body.len());
        match coin {
            Some(c) => {
                out.push(8);
                out.extend_from_slice(&c.to_le_bytes());
            }
            None => out.push(0),
        }
        out.extend_from_slice(&(setup.len() as u16).to_le_bytes());
        out.extend_from_slice(setup);
        out.extend_from_slice(body);
        out
    }

    pub struct Decoded<'a> {
        pub coin: Option<u64>,
        pub setup: &'a [u8],
        pub body: &'a [u8],
    }

    pub fn decode(payload: &[u8]) -> Result<Decoded<'_>, Error> {
        let err = || Error::Evaluation("malformed public-randomness payload".into());
        let (&coin_len, rest) = payload.split_first().ok_or_else(err)?;
        let (coin, rest) = match coin_len {
            0 => (None, rest),
            8 => {
                if rest.len() < 8 {
                    return Err(err());
                }
                let (c, rest) = rest.split_at(8);
                (Some(u64::from_le_bytes(c.try_into().unwrap())), rest)
            }
            _ => return Err(err()),
        };
        if rest.len() < 2 {
            return Err(err());
        }
        let (len_bytes, rest) = rest.split_at(2);
        let setup_len = u16::from_le_bytes(len_bytes.try_into().unwrap()) as usize;
        if rest.len() < setup_len {
            return Err(err());
        }
        let (setup, body) = rest.split_at(setup_len);
        Ok(Decoded { coin, setup, body })
    }
}

/// Vote-bit encoding used by the reference protocols. The bit is written
/// twice so that any single-byte corruption of a payload falls outside the
/// set of messages the sender could have produced for either input.
pub fn encode_bit(b: u8) -> [u8; 2] {
    [b & 1, b & 1]
}

/// Inverse of [`encode_bit`]; `None` for anything else.
pub fn decode_bit(bytes: &[u8]) -> Option<u8> {
    match bytes {
        [a, b] if a == b && *a <= 1 => Some(*a),
        _ => None,
    }
}
