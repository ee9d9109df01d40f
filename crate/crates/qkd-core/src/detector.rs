//! Detector, channel and detector-pair indexing.
//!
//! Alice's analyzer feeds detectors `1a`/`2a`, Bob's feeds `1b`/`2b`;
//! detector 1 sits behind the transmitted PBS port, detector 2 behind the
//! reflected port. Coincidences are always between one Alice and one Bob
//! detector, so exactly four pairs exist.

use std::fmt;
use std::ops::{Index, IndexMut};

/// One of Alice's two detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AliceDet {
    A1,
    A2,
}

/// One of Bob's two detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BobDet {
    B1,
    B2,
}

impl AliceDet {
    pub const ALL: [AliceDet; 2] = [AliceDet::A1, AliceDet::A2];

    /// The other detector on Alice's arm.
    pub fn partner(self) -> AliceDet {
        match self {
            AliceDet::A1 => AliceDet::A2,
            AliceDet::A2 => AliceDet::A1,
        }
    }
}

impl BobDet {
    pub const ALL: [BobDet; 2] = [BobDet::B1, BobDet::B2];

    /// The other detector on Bob's arm.
    pub fn partner(self) -> BobDet {
        match self {
            BobDet::B1 => BobDet::B2,
            BobDet::B2 => BobDet::B1,
        }
    }
}

/// Any of the four detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Detector {
    A1,
    A2,
    B1,
    B2,
}

impl Detector {
    pub const ALL: [Detector; 4] = [Detector::A1, Detector::A2, Detector::B1, Detector::B2];

    pub fn channel(self) -> Channel {
        match self {
            Detector::A1 | Detector::A2 => Channel::Alice,
            Detector::B1 | Detector::B2 => Channel::Bob,
        }
    }

    fn index(self) -> usize {
        match self {
            Detector::A1 => 0,
            Detector::A2 => 1,
            Detector::B1 => 2,
            Detector::B2 => 3,
        }
    }

    /// Conventional name: `1a`, `2a`, `1b`, `2b`.
    pub fn name(self) -> &'static str {
        match self {
            Detector::A1 => "1a",
            Detector::A2 => "2a",
            Detector::B1 => "1b",
            Detector::B2 => "2b",
        }
    }
}

impl From<AliceDet> for Detector {
    fn from(d: AliceDet) -> Detector {
        match d {
            AliceDet::A1 => Detector::A1,
            AliceDet::A2 => Detector::A2,
        }
    }
}

impl From<BobDet> for Detector {
    fn from(d: BobDet) -> Detector {
        match d {
            BobDet::B1 => Detector::B1,
            BobDet::B2 => Detector::B2,
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The two measurement channels; each has its own dead time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Alice,
    Bob,
}

impl Channel {
    pub const ALL: [Channel; 2] = [Channel::Alice, Channel::Bob];

    fn index(self) -> usize {
        match self {
            Channel::Alice => 0,
            Channel::Bob => 1,
        }
    }
}

/// A coincidence pair: one Alice detector and one Bob detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DetectorPair {
    pub alice: AliceDet,
    pub bob: BobDet,
}

impl DetectorPair {
    pub const ALL: [DetectorPair; 4] = [
        DetectorPair::new(AliceDet::A1, BobDet::B1),
        DetectorPair::new(AliceDet::A1, BobDet::B2),
        DetectorPair::new(AliceDet::A2, BobDet::B1),
        DetectorPair::new(AliceDet::A2, BobDet::B2),
    ];

    pub const fn new(alice: AliceDet, bob: BobDet) -> DetectorPair {
        DetectorPair { alice, bob }
    }

    fn index(self) -> usize {
        let a = match self.alice {
            AliceDet::A1 => 0,
            AliceDet::A2 => 1,
        };
        let b = match self.bob {
            BobDet::B1 => 0,
            BobDet::B2 => 1,
        };
        2 * a + b
    }

    /// Conventional name: `1a1b`, `1a2b`, `2a1b`, `2a2b`.
    pub fn name(self) -> &'static str {
        match (self.alice, self.bob) {
            (AliceDet::A1, BobDet::B1) => "1a1b",
            (AliceDet::A1, BobDet::B2) => "1a2b",
            (AliceDet::A2, BobDet::B1) => "2a1b",
            (AliceDet::A2, BobDet::B2) => "2a2b",
        }
    }
}

impl fmt::Display for DetectorPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A value per detector, indexed by [`Detector`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PerDetector<T>(pub [T; 4]);

impl<T: Copy> PerDetector<T> {
    pub fn from_fn(mut f: impl FnMut(Detector) -> T) -> PerDetector<T> {
        PerDetector([
            f(Detector::A1),
            f(Detector::A2),
            f(Detector::B1),
            f(Detector::B2),
        ])
    }

    pub fn splat(value: T) -> PerDetector<T> {
        PerDetector([value; 4])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Detector, T)> + '_ {
        Detector::ALL.iter().map(move |&d| (d, self[d]))
    }
}

impl<T> Index<Detector> for PerDetector<T> {
    type Output = T;
    fn index(&self, d: Detector) -> &T {
        &self.0[d.index()]
    }
}

impl<T> IndexMut<Detector> for PerDetector<T> {
    fn index_mut(&mut self, d: Detector) -> &mut T {
        &mut self.0[d.index()]
    }
}

/// A value per detector pair, indexed by [`DetectorPair`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PerPair<T>(pub [T; 4]);

impl<T: Copy> PerPair<T> {
    pub fn from_fn(mut f: impl FnMut(DetectorPair) -> T) -> PerPair<T> {
        PerPair([
            f(DetectorPair::ALL[0]),
            f(DetectorPair::ALL[1]),
            f(DetectorPair::ALL[2]),
            f(DetectorPair::ALL[3]),
        ])
    }

    pub fn iter(&self) -> impl Iterator<Item = (DetectorPair, T)> + '_ {
        DetectorPair::ALL.iter().map(move |&p| (p, self[p]))
    }
}

impl PerPair<f64> {
    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl<T> Index<DetectorPair> for PerPair<T> {
    type Output = T;
    fn index(&self, p: DetectorPair) -> &T {
        &self.0[p.index()]
    }
}

impl<T> IndexMut<DetectorPair> for PerPair<T> {
    fn index_mut(&mut self, p: DetectorPair) -> &mut T {
        &mut self.0[p.index()]
    }
}

/// A value per channel, indexed by [`Channel`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PerChannel<T>(pub [T; 2]);

impl<T> Index<Channel> for PerChannel<T> {
    type Output = T;
    fn index(&self, c: Channel) -> &T {
        &self.0[c.index()]
    }
}

impl<T> IndexMut<Channel> for PerChannel<T> {
    fn index_mut(&mut self, c: Channel) -> &mut T {
        &mut self.0[c.index()]
    }
}
