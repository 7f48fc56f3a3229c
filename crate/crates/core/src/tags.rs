//! Timestamp streams: ordered photon detection records from one detector.
//!
//! All times are integer picoseconds. That resolution sits an order of
//! magnitude below the detector jitter (~13 ps) and keeps the binning
//! arithmetic exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Measuring party. Signal photons go to Alice, idler photons to Bob.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
}

/// Local measurement basis: direct arrival time, or the dispersed
/// (frequency-resolved) arrival time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Time,
    Frequency,
}

/// Detector label: which party and which basis arm the stream belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Channel {
    pub party: Party,
    pub basis: Basis,
}

impl Channel {
    pub const ALICE_T: Channel = Channel {
        party: Party::Alice,
        basis: Basis::Time,
    };
    pub const ALICE_F: Channel = Channel {
        party: Party::Alice,
        basis: Basis::Frequency,
    };
    pub const BOB_T: Channel = Channel {
        party: Party::Bob,
        basis: Basis::Time,
    };
    pub const BOB_F: Channel = Channel {
        party: Party::Bob,
        basis: Basis::Frequency,
    };

    /// Compact numeric code used by the tag file formats.
    pub fn code(&self) -> u8 {
        match (self.party, self.basis) {
            (Party::Alice, Basis::Time) => 0,
            (Party::Alice, Basis::Frequency) => 1,
            (Party::Bob, Basis::Time) => 2,
            (Party::Bob, Basis::Frequency) => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Channel> {
        match code {
            0 => Ok(Channel::ALICE_T),
            1 => Ok(Channel::ALICE_F),
            2 => Ok(Channel::BOB_T),
            3 => Ok(Channel::BOB_F),
            other => Err(Error::data(format!("unknown channel code {other}"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match (self.party, self.basis) {
            (Party::Alice, Basis::Time) => "AT",
            (Party::Alice, Basis::Frequency) => "AF",
            (Party::Bob, Basis::Time) => "BT",
            (Party::Bob, Basis::Frequency) => "BF",
        }
    }
}

/// Ordered photon detection records for one channel.
///
/// Invariants (enforced at construction): tags sorted nondecreasing, all
/// tags within `[0, duration_ps]`, and a strictly positive duration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagStream {
    channel: Channel,
    tags: Vec<u64>,
    duration_ps: u64,
}

impl TagStream {
    pub fn new(channel: Channel, tags: Vec<u64>, duration_ps: u64) -> Result<Self> {
        if duration_ps == 0 {
            return Err(Error::data("tag stream duration must be positive"));
        }
        if !tags.windows(2).all(|w| w[0] <= w[1]) {
            return Err(Error::data("tag stream is not sorted nondecreasing"));
        }
        if let Some(&last) = tags.last() {
            if last > duration_ps {
                return Err(Error::data(format!(
                    "tag {last} ps exceeds acquisition duration {duration_ps} ps"
                )));
            }
        }
        Ok(TagStream {
            channel,
            tags,
            duration_ps,
        })
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn tags(&self) -> &[u64] {
        &self.tags
    }

    pub fn duration_ps(&self) -> u64 {
        self.duration_ps
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_ps as f64 * 1e-12
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unsorted_tags() {
        let err = TagStream::new(Channel::ALICE_T, vec![10, 5], 100).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn rejects_tags_beyond_duration() {
        assert!(TagStream::new(Channel::ALICE_T, vec![10, 200], 100).is_err());
    }

    #[test]
    fn rejects_zero_duration() {
        assert!(TagStream::new(Channel::ALICE_T, vec![], 0).is_err());
    }

    #[test]
    fn accepts_empty_and_ties() {
        let s = TagStream::new(Channel::BOB_F, vec![3, 3, 7], 10).unwrap();
        assert_eq!(s.len(), 3);
        assert!(TagStream::new(Channel::BOB_F, vec![], 10)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn channel_codes_round_trip() {
        for ch in [
            Channel::ALICE_T,
            Channel::ALICE_F,
            Channel::BOB_T,
            Channel::BOB_F,
        ] {
            assert_eq!(Channel::from_code(ch.code()).unwrap(), ch);
        }
        assert!(Channel::from_code(9).is_err());
    }
}
