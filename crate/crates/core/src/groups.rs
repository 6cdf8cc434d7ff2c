use crate::error::ConfigError;

pub type DeviceId = u32;

/// Contiguous range of preamble IDs. The root contention pool is the full
/// range [0, N_P); group g covers [g*q, (g+1)*q).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreambleSet {
    pub start: u16,
    pub len: u16,
}

impl PreambleSet {
    pub fn all(n_preambles: u16) -> Self {
        PreambleSet {
            start: 0,
            len: n_preambles,
        }
    }

    pub fn group(group_index: u16, q: u16) -> Self {
        PreambleSet {
            start: group_index * q,
            len: q,
        }
    }

    pub fn contains(&self, preamble: u16) -> bool {
        preamble >= self.start && preamble < self.start + self.len
    }

    pub fn iter(&self) -> impl Iterator<Item = u16> {
        self.start..self.start + self.len
    }
}

/// Splits [0, n_preambles) into G = n_preambles/q consecutive q-sized sets.
pub fn derive_groups(n_preambles: u16, q: u16) -> Result<Vec<PreambleSet>, ConfigError> {
    if q == 0 || !n_preambles.is_multiple_of(q) {
        return Err(ConfigError::DivisibilityError(format!(
            "split_factor {q} does not divide n_preambles {n_preambles}"
        )));
    }
    Ok((0..n_preambles / q)
        .map(|g| PreambleSet::group(g, q))
        .collect())
}

/// A collided preamble's follow-up assignment: the contention frame one tree
/// node expands into. `members` is simulator-side bookkeeping; the eNodeB
/// only ever learns which preamble collided, never who sent it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContentionGroup {
    pub group_index: u16,
    pub preambles: PreambleSet,
    pub trao_subframe: u64,
    pub members: Vec<DeviceId>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_preambles_split_pairwise() {
        let groups = derive_groups(4, 2).unwrap();
        assert_eq!(
            groups,
            vec![
                PreambleSet { start: 0, len: 2 },
                PreambleSet { start: 2, len: 2 },
            ]
        );
        assert!(groups[0].contains(1));
        assert!(!groups[0].contains(2));
        assert_eq!(groups[1].iter().collect::<Vec<_>>(), vec![2, 3]);
    }

    #[test]
    fn degenerate_single_group() {
        let groups = derive_groups(54, 54).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0], PreambleSet { start: 0, len: 54 });
    }

    #[test]
    fn fifty_four_preambles_make_nine_groups_of_six() {
        let groups = derive_groups(54, 6).unwrap();
        assert_eq!(groups.len(), 9);
        assert!(groups.iter().all(|g| g.len == 6));
    }

    #[test]
    fn indivisible_split_is_rejected() {
        assert!(matches!(
            derive_groups(54, 4),
            Err(ConfigError::DivisibilityError(_))
        ));
        assert!(matches!(
            derive_groups(54, 0),
            Err(ConfigError::DivisibilityError(_))
        ));
    }
}
