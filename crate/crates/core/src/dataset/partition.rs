use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::Manifest;
use crate::{Error, Result, N_DIGITS};

/// Number of balanced subsets used by cross-validation.
pub const N_SUBSETS: usize = 10;

/// Expected corpus shape: every digit, spoken `utterances` times by each of
/// `speakers` speakers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusProfile {
    pub speakers: usize,
    pub utterances: usize,
}

impl CorpusProfile {
    pub const TI46: CorpusProfile = CorpusProfile { speakers: 5, utterances: N_SUBSETS };
}

/// Ten disjoint groups of manifest indices; each holds one utterance of every
/// digit by every speaker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetPartition {
    pub subsets: Vec<Vec<usize>>,
}

impl SubsetPartition {
    /// Subset index of every manifest entry.
    pub fn assignment(&self, n_entries: usize) -> Vec<usize> {
        let mut out = vec![usize::MAX; n_entries];
        for (k, s) in self.subsets.iter().enumerate() {
            for &i in s {
                out[i] = k;
            }
        }
        out
    }
}

/// Splits a profile-conforming manifest into [`N_SUBSETS`] balanced subsets.
///
/// Within each (digit, speaker) pair the utterances are sorted by utterance
/// index, shuffled with a ChaCha20 stream seeded by `seed`, and dealt one per
/// subset.
pub fn partition_subsets(manifest: &Manifest, seed: u64, profile: CorpusProfile) -> Result<SubsetPartition> {
    if profile.utterances != N_SUBSETS {
        return Err(Error::Partition(format!(
            "profile needs {N_SUBSETS} utterances per pair, got {}",
            profile.utterances
        )));
    }
    let mut pairs: BTreeMap<(u8, &str), Vec<usize>> = BTreeMap::new();
    for (i, e) in manifest.entries.iter().enumerate() {
        pairs.entry((e.label.digit, e.label.speaker.as_str())).or_default().push(i);
    }
    let mut speakers: Vec<&str> = pairs.keys().map(|(_, s)| *s).collect();
    speakers.sort_unstable();
    speakers.dedup();
    if speakers.len() != profile.speakers {
        return Err(Error::Partition(format!("expected {} speakers, found {}", profile.speakers, speakers.len())));
    }
    for d in 0..N_DIGITS as u8 {
        for s in &speakers {
            let n = pairs.get(&(d, *s)).map_or(0, Vec::len);
            if n != profile.utterances {
                return Err(Error::Partition(format!(
                    "(digit {d}, speaker {s}) has {n} utterances, expected {}",
                    profile.utterances
                )));
            }
        }
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut subsets: Vec<Vec<usize>> = (0..N_SUBSETS).map(|_| Vec::with_capacity(N_DIGITS * profile.speakers)).collect();
    for idx in pairs.values_mut() {
        idx.sort_by_key(|&i| (manifest.entries[i].label.utterance, i));
        idx.shuffle(&mut rng);
        for (k, &i) in idx.iter().enumerate() {
            subsets[k].push(i);
        }
    }
    for s in &mut subsets {
        s.sort_unstable();
    }
    Ok(SubsetPartition { subsets })
}
