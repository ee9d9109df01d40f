//! Event-level stochastic oracle for the analytic rate chain.
//!
//! The simulator draws time-tagged events from independent Poisson streams
//! (photon pairs, per-detector uncorrelated light, per-detector dark
//! counts), applies detection efficiency by thinning, enforces the
//! non-extending per-channel dead time explicitly, and tallies singles plus
//! windowed coincidences. Every analytic quantity of [`crate::counting`] and
//! [`crate::coincidence`] can then be checked against observed counts.
//!
//! Pair events share one timestamp on both channels and are assigned a
//! detector pair by sampling the joint probabilities. For speed the pair
//! stream is generated pre-thinned: arrivals occur at the rate of pairs with
//! at least one surviving photon (thinning a Poisson process is again
//! Poisson), and the surviving-side pattern is drawn per arrival from the
//! conditional distribution. Dead time is applied strictly before
//! windowing: an event blocked by its channel can neither trigger nor
//! complete a coincidence.
//!
//! Runs are reproducible byte-for-byte from the seed: every stream owns a
//! counter-seeded [`ChaCha12Rng`] sub-stream, so the interleaving of streams
//! cannot perturb any stream's draws.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::io::Write;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::Exp;

use crate::coincidence::CoincidenceRates;
use crate::config::ExperimentConfig;
use crate::counting::RateSet;
use crate::detector::{
    AliceDet, BobDet, Channel, Detector, DetectorPair, PerChannel, PerDetector, PerPair,
};
use crate::polarization::{joint_probabilities_closed_form, AnalyzerSetting};
use crate::QkdError;

/// Pinned generator identification for output metadata.
pub const RNG_ALGORITHM: &str = "chacha12 (rand_chacha 0.3)";

/// Counts observed in one simulated run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventTally {
    /// Accepted counts per detector.
    pub singles: PerDetector<u64>,
    /// Windowed coincidences per pair (true and accidental together).
    pub coincidences: PerPair<u64>,
    /// The subset of coincidences whose two events came from the same pair
    /// emission.
    pub true_coincidences: PerPair<u64>,
    /// Seconds each channel spent live.
    pub live_time: PerChannel<f64>,
    /// Simulated duration in seconds.
    pub duration: f64,
    /// Seed the run was generated from.
    pub seed: u64,
}

impl EventTally {
    pub fn accidental_coincidences(&self, pair: DetectorPair) -> u64 {
        self.coincidences[pair] - self.true_coincidences[pair]
    }

    pub fn live_fraction(&self, channel: Channel) -> f64 {
        self.live_time[channel] / self.duration
    }
}

/// Non-extending dead-time filter for one channel.
struct ChannelGate {
    dead_time: f64,
    last_accept: f64,
    lost: f64,
}

impl ChannelGate {
    fn new(dead_time: f64) -> ChannelGate {
        ChannelGate {
            dead_time,
            last_accept: f64::NEG_INFINITY,
            lost: 0.0,
        }
    }

    fn accept(&mut self, t: f64, duration: f64) -> bool {
        if t - self.last_accept >= self.dead_time {
            self.last_accept = t;
            self.lost += self.dead_time.min(duration - t);
            true
        } else {
            false
        }
    }
}

#[derive(Clone, Copy)]
struct PairFate {
    pair: DetectorPair,
    alice_survives: bool,
    bob_survives: bool,
}

enum StreamKind {
    Pairs {
        outcomes: Vec<PairFate>,
        dist: WeightedIndex<f64>,
    },
    Background(Detector),
}

struct Stream {
    next_time: f64,
    inter_arrival: Exp<f64>,
    rng: ChaCha12Rng,
    kind: StreamKind,
}

struct HeapKey(f64, usize);

impl PartialEq for HeapKey {
    fn eq(&self, other: &Self) -> bool {
        self.0.total_cmp(&other.0).is_eq() && self.1 == other.1
    }
}
impl Eq for HeapKey {}
impl PartialOrd for HeapKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Origin tag: pair emissions are numbered so a coincidence can be
/// classified as true (same emission on both sides) or accidental.
type Origin = Option<u64>;

struct Recent {
    window_half: f64,
    alice: VecDeque<(f64, AliceDet, Origin)>,
    bob: VecDeque<(f64, BobDet, Origin)>,
}

impl Recent {
    fn prune(&mut self, now: f64) {
        let cutoff = now - self.window_half;
        while self.alice.front().is_some_and(|&(t, _, _)| t < cutoff) {
            self.alice.pop_front();
        }
        while self.bob.front().is_some_and(|&(t, _, _)| t < cutoff) {
            self.bob.pop_front();
        }
    }
}

/// Runs one event-level simulation.
///
/// Deterministic for a given `(config, setting, duration, seed)`.
pub fn simulate(
    config: &ExperimentConfig,
    setting: &AnalyzerSetting,
    duration: f64,
    seed: u64,
) -> EventTally {
    assert!(duration > 0.0, "simulate: duration must be positive");

    let probs = joint_probabilities_closed_form(
        &config.entanglement,
        &config.pbs_a,
        &config.pbs_b,
        setting,
    );
    let survival = PerDetector::from_fn(|det| {
        let d = &config.detectors[det];
        d.eta * d.tau
    });

    let mut streams: Vec<Stream> = Vec::new();
    let make_rng = |stream_id: u64| {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        rng
    };

    // Stream 0: pair emissions with at least one surviving photon.
    let mut outcomes = Vec::with_capacity(12);
    let mut weights = Vec::with_capacity(12);
    for pair in DetectorPair::ALL {
        let p = probs.get(pair).max(0.0);
        let sa = survival[pair.alice.into()];
        let sb = survival[pair.bob.into()];
        for (alice_survives, bob_survives, w) in [
            (true, true, sa * sb),
            (true, false, sa * (1.0 - sb)),
            (false, true, (1.0 - sa) * sb),
        ] {
            outcomes.push(PairFate {
                pair,
                alice_survives,
                bob_survives,
            });
            weights.push(p * w);
        }
    }
    let observable_fraction: f64 = weights.iter().sum();
    let pair_rate = config.source.lambda_p * observable_fraction;
    if pair_rate > 0.0 {
        streams.push(Stream {
            next_time: 0.0,
            inter_arrival: Exp::new(pair_rate).expect("positive rate"),
            rng: make_rng(0),
            kind: StreamKind::Pairs {
                dist: WeightedIndex::new(&weights).expect("positive weights"),
                outcomes,
            },
        });
    }

    // Streams 1-4: thinned uncorrelated light; 5-8: dark counts.
    for (offset, thinned) in [(1u64, true), (5, false)] {
        for (idx, det) in Detector::ALL.into_iter().enumerate() {
            let d = &config.detectors[det];
            let rate = if thinned {
                survival[det] * d.lambda_u
            } else {
                d.lambda_d
            };
            if rate > 0.0 {
                streams.push(Stream {
                    next_time: 0.0,
                    inter_arrival: Exp::new(rate).expect("positive rate"),
                    rng: make_rng(offset + idx as u64),
                    kind: StreamKind::Background(det),
                });
            }
        }
    }

    let mut tally = EventTally {
        singles: PerDetector([0; 4]),
        coincidences: PerPair([0; 4]),
        true_coincidences: PerPair([0; 4]),
        live_time: PerChannel([duration; 2]),
        duration,
        seed,
    };
    let mut gates = PerChannel([
        ChannelGate::new(config.channels[Channel::Alice].dead_time),
        ChannelGate::new(config.channels[Channel::Bob].dead_time),
    ]);
    let mut recent = Recent {
        window_half: config.timing.window / 2.0,
        alice: VecDeque::new(),
        bob: VecDeque::new(),
    };
    let mut pair_counter: u64 = 0;

    let mut heap: BinaryHeap<Reverse<HeapKey>> = BinaryHeap::new();
    for (i, stream) in streams.iter_mut().enumerate() {
        let dt = stream.inter_arrival.sample(&mut stream.rng);
        stream.next_time = dt;
        if dt <= duration {
            heap.push(Reverse(HeapKey(dt, i)));
        }
    }

    while let Some(Reverse(HeapKey(t, idx))) = heap.pop() {
        recent.prune(t);

        let Stream { rng, kind, .. } = &mut streams[idx];
        match kind {
            StreamKind::Pairs { dist, outcomes } => {
                let fate = outcomes[dist.sample(rng)];
                let origin = Some(pair_counter);
                pair_counter += 1;
                if fate.alice_survives {
                    accept_alice(
                        t,
                        fate.pair.alice,
                        origin,
                        &mut gates,
                        &mut recent,
                        &mut tally,
                    );
                }
                if fate.bob_survives {
                    accept_bob(
                        t,
                        fate.pair.bob,
                        origin,
                        &mut gates,
                        &mut recent,
                        &mut tally,
                    );
                }
            }
            StreamKind::Background(det) => {
                let det = *det;
                match det {
                    Detector::A1 => {
                        accept_alice(t, AliceDet::A1, None, &mut gates, &mut recent, &mut tally)
                    }
                    Detector::A2 => {
                        accept_alice(t, AliceDet::A2, None, &mut gates, &mut recent, &mut tally)
                    }
                    Detector::B1 => {
                        accept_bob(t, BobDet::B1, None, &mut gates, &mut recent, &mut tally)
                    }
                    Detector::B2 => {
                        accept_bob(t, BobDet::B2, None, &mut gates, &mut recent, &mut tally)
                    }
                }
            }
        }

        let stream = &mut streams[idx];
        let next = stream.next_time + stream.inter_arrival.sample(&mut stream.rng);
        stream.next_time = next;
        if next <= duration {
            heap.push(Reverse(HeapKey(next, idx)));
        }
    }

    for channel in Channel::ALL {
        tally.live_time[channel] = duration - gates[channel].lost;
    }
    tally
}

fn accept_alice(
    t: f64,
    det: AliceDet,
    origin: Origin,
    gates: &mut PerChannel<ChannelGate>,
    recent: &mut Recent,
    tally: &mut EventTally,
) {
    if !gates[Channel::Alice].accept(t, tally.duration) {
        return;
    }
    tally.singles[det.into()] += 1;
    // Every Bob event still in the deque lies within the window.
    for &(_, bob, bob_origin) in &recent.bob {
        let pair = DetectorPair::new(det, bob);
        tally.coincidences[pair] += 1;
        if origin.is_some() && origin == bob_origin {
            tally.true_coincidences[pair] += 1;
        }
    }
    recent.alice.push_back((t, det, origin));
}

fn accept_bob(
    t: f64,
    det: BobDet,
    origin: Origin,
    gates: &mut PerChannel<ChannelGate>,
    recent: &mut Recent,
    tally: &mut EventTally,
) {
    if !gates[Channel::Bob].accept(t, tally.duration) {
        return;
    }
    tally.singles[det.into()] += 1;
    for &(_, alice, alice_origin) in &recent.alice {
        let pair = DetectorPair::new(alice, det);
        tally.coincidences[pair] += 1;
        if origin.is_some() && origin == alice_origin {
            tally.true_coincidences[pair] += 1;
        }
    }
    recent.bob.push_back((t, det, origin));
}

/// One observed-vs-expected row of a validation report.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub quantity: String,
    pub observed: f64,
    pub expected: f64,
    pub z: f64,
}

impl Comparison {
    /// Flags disagreement beyond three standard deviations.
    pub fn flagged(&self) -> bool {
        self.z.is_nan() || self.z.abs() > 3.0
    }
}

fn z_score(observed: f64, expected: f64, sigma: f64) -> f64 {
    if sigma > 0.0 {
        (observed - expected) / sigma
    } else if observed == expected {
        0.0
    } else {
        f64::INFINITY.copysign(observed - expected)
    }
}

/// Compares a tally against the analytic chain it was generated from.
///
/// Counts are Poisson with mean `rate * duration`, so their z-scores use
/// `sigma = sqrt(rate * duration)`; the normalized fractions `m_*` use the
/// multinomial deviation at the expected total.
pub fn compare(
    tally: &EventTally,
    rates: &RateSet,
    coincidences: &CoincidenceRates,
) -> Vec<Comparison> {
    let t = tally.duration;
    let mut rows = Vec::with_capacity(20);

    for det in Detector::ALL {
        let expected = rates.lambda_tot[det] * t;
        let observed = tally.singles[det] as f64;
        rows.push(Comparison {
            quantity: format!("singles_{det}"),
            observed,
            expected,
            z: z_score(observed, expected, expected.sqrt()),
        });
    }

    for pair in DetectorPair::ALL {
        let expected = coincidences.total_rate[pair] * t;
        let observed = tally.coincidences[pair] as f64;
        rows.push(Comparison {
            quantity: format!("coinc_{pair}"),
            observed,
            expected,
            z: z_score(observed, expected, expected.sqrt()),
        });
    }

    for pair in DetectorPair::ALL {
        let expected = coincidences.true_rate[pair] * t;
        let observed = tally.true_coincidences[pair] as f64;
        rows.push(Comparison {
            quantity: format!("true_{pair}"),
            observed,
            expected,
            z: z_score(observed, expected, expected.sqrt()),
        });
    }

    for pair in DetectorPair::ALL {
        let expected = coincidences.accidental_rate[pair] * t;
        let observed = tally.accidental_coincidences(pair) as f64;
        rows.push(Comparison {
            quantity: format!("acc_{pair}"),
            observed,
            expected,
            z: z_score(observed, expected, expected.sqrt()),
        });
    }

    let expected_total = coincidences.total_rate.sum() * t;
    let observed_total: u64 = DetectorPair::ALL
        .iter()
        .map(|&p| tally.coincidences[p])
        .sum();
    for pair in DetectorPair::ALL {
        let expected = if expected_total > 0.0 {
            coincidences.total_rate[pair] * t / expected_total
        } else {
            0.0
        };
        let observed = if observed_total > 0 {
            tally.coincidences[pair] as f64 / observed_total as f64
        } else {
            0.0
        };
        let sigma = if expected_total > 0.0 {
            (expected * (1.0 - expected) / expected_total).sqrt()
        } else {
            0.0
        };
        rows.push(Comparison {
            quantity: format!("m_{pair}"),
            observed,
            expected,
            z: z_score(observed, expected, sigma),
        });
    }

    rows
}

/// Writes a comparison table as CSV (`quantity,observed,expected,z`).
pub fn write_comparison_csv<W: Write>(rows: &[Comparison], mut out: W) -> Result<(), QkdError> {
    writeln!(out, "quantity,observed,expected,z")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{}",
            row.quantity, row.observed, row.expected, row.z
        )?;
    }
    Ok(())
}
