//! Blind HIT assembly: five genuine systems plus the quality-control system, shuffled.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use thiserror::Error;

use crate::types::{Hit, HitId, SystemId, WorkerId, GENUINE_PER_HIT};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HitError {
    #[error("insufficient systems: {found} distinct genuine systems configured, need {GENUINE_PER_HIT}")]
    InsufficientSystems { found: usize },
    #[error("degraded system {0} is also listed as genuine")]
    DegradedListedAsGenuine(SystemId),
}

/// Draws five genuine systems (all of them when exactly five are configured), adds the
/// degraded system and shuffles the six slots.
pub fn assemble_hit<R: Rng + ?Sized>(
    hit_id: HitId,
    worker_id: WorkerId,
    genuine: &[SystemId],
    degraded: &SystemId,
    rng: &mut R,
) -> Result<Hit, HitError> {
    let distinct: BTreeSet<&SystemId> = genuine.iter().collect();
    if distinct.len() < GENUINE_PER_HIT || distinct.len() != genuine.len() {
        return Err(HitError::InsufficientSystems {
            found: distinct.len().min(genuine.len()),
        });
    }
    if distinct.contains(degraded) {
        return Err(HitError::DegradedListedAsGenuine(degraded.clone()));
    }

    let mut slots: Vec<SystemId> = if genuine.len() == GENUINE_PER_HIT {
        genuine.to_vec()
    } else {
        genuine
            .choose_multiple(rng, GENUINE_PER_HIT)
            .cloned()
            .collect()
    };
    slots.push(degraded.clone());
    slots.shuffle(rng);
    let degraded_slot = slots
        .iter()
        .position(|s| s == degraded)
        .expect("degraded system was inserted");

    Ok(Hit {
        hit_id,
        worker_id,
        slots,
        degraded_slot,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn systems(n: usize) -> Vec<SystemId> {
        (0..n).map(|i| SystemId::new(format!("sys{i}"))).collect()
    }

    #[test]
    fn five_genuine_form_a_permutation() {
        let genuine = systems(5);
        let q = SystemId::from("qc");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let hit = assemble_hit("h".into(), "w".into(), &genuine, &q, &mut rng).unwrap();
            let mut got = hit.slots.clone();
            got.sort();
            let mut want = genuine.clone();
            want.push(q.clone());
            want.sort();
            assert_eq!(got, want);
            assert_eq!(hit.slots[hit.degraded_slot], q);
        }
    }

    #[test]
    fn subsets_drawn_from_larger_pools() {
        let genuine = systems(10);
        let q = SystemId::from("qc");
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut seen = BTreeSet::new();
        for _ in 0..200 {
            let hit = assemble_hit("h".into(), "w".into(), &genuine, &q, &mut rng).unwrap();
            let distinct: BTreeSet<_> = hit.slots.iter().collect();
            assert_eq!(distinct.len(), 6);
            seen.extend(hit.slots.iter().cloned());
        }
        assert_eq!(seen.len(), 11);
    }

    #[test]
    fn too_few_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = assemble_hit("h".into(), "w".into(), &systems(4), &"qc".into(), &mut rng).unwrap_err();
        assert_eq!(err, HitError::InsufficientSystems { found: 4 });
        assert!(err.to_string().starts_with("insufficient systems"));
    }

    #[test]
    fn degraded_slot_is_uniform() {
        let genuine = systems(5);
        let q = SystemId::from("qc");
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut counts = [0usize; 6];
        for _ in 0..10_000 {
            counts[assemble_hit("h".into(), "w".into(), &genuine, &q, &mut rng)
                .unwrap()
                .degraded_slot] += 1;
        }
        // multinomial with p = 1/6: sd ~ 37.3, allow 3 sd
        let expected = 10_000.0 / 6.0;
        let sd = (10_000.0 * (1.0 / 6.0) * (5.0 / 6.0f64)).sqrt();
        for c in counts {
            assert!((c as f64 - expected).abs() <= 3.0 * sd, "{counts:?}");
        }
    }
}
