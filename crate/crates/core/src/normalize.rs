//! Normalization operator: maps chain-specific reporting semantics onto
//! comparable effective gas limits and effective gas prices.
//!
//! Some rollups report a gas limit far above the one they enforce, and some
//! refund the priority fee so only the base fee is charged. A [`NetworkProfile`]
//! declares which of these apply; nothing is clamped, out-of-range values are
//! flagged instead.

use crate::model::{
    FeeQuantity, Flags, GasQuantity, LimitPolicy, NormalizedBlockRecord, PriorityPolicy,
    RawBlockHeader, RecordFlag, ValidatedProfile,
};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum NormalizeError {
    #[error("header for {header} passed to the normalizer of {profile}")]
    ProfileMismatch { header: String, profile: String },
    #[error("effective gas price overflows for block {0}")]
    PriceOverflow(u64),
}

/// `min(reported, override)` under an override policy, the reported limit otherwise.
pub fn effective_gas_limit(
    header: &RawBlockHeader,
    profile: &ValidatedProfile,
) -> (GasQuantity, Flags) {
    let mut flags = Flags::new();
    let limit = match profile.limit_policy {
        LimitPolicy::Reported => header.gas_limit,
        LimitPolicy::Override(enforced) => {
            flags.insert(RecordFlag::LimitOverridden);
            header.gas_limit.min(enforced)
        }
    };
    if header.gas_used > limit {
        flags.insert(RecordFlag::UsageExceedsEffectiveLimit);
    }
    (limit, flags)
}

/// Base fee plus the observed priority fee (zero when absent), or the base fee
/// alone when the chain refunds priority fees. `reference_base_fee` is the
/// first base fee seen on the chain, used by the constancy check.
pub fn effective_gas_price(
    header: &RawBlockHeader,
    profile: &ValidatedProfile,
    reference_base_fee: Option<FeeQuantity>,
) -> Result<(FeeQuantity, Flags), NormalizeError> {
    let mut flags = Flags::new();
    let base = header.base_fee_per_gas;
    let price = match profile.priority_policy {
        PriorityPolicy::Include => base
            .checked_add(header.priority_fee_observed.unwrap_or_default())
            .ok_or(NormalizeError::PriceOverflow(header.number))?,
        PriorityPolicy::Exclude => {
            flags.insert(RecordFlag::PriorityExcluded);
            base
        }
    };
    if profile.constant_base_fee_expected {
        if let Some(reference) = reference_base_fee {
            if base.0.abs_diff(reference.0) > profile.base_fee_tolerance_wei {
                flags.insert(RecordFlag::BaseFeeDeviation);
            }
        }
    }
    Ok((price, flags))
}

/// Stateful per-chain normalizer. The only state is the first base fee seen.
#[derive(Debug, Clone)]
pub struct Normalizer {
    profile: ValidatedProfile,
    first_base_fee: Option<FeeQuantity>,
}

impl Normalizer {
    pub fn new(profile: ValidatedProfile) -> Self {
        Self {
            profile,
            first_base_fee: None,
        }
    }

    pub fn profile(&self) -> &ValidatedProfile {
        &self.profile
    }

    pub fn reference_base_fee(&self) -> Option<FeeQuantity> {
        self.first_base_fee
    }

    pub fn normalize_header(
        &mut self,
        header: RawBlockHeader,
    ) -> Result<NormalizedBlockRecord, NormalizeError> {
        if header.chain != self.profile.chain {
            return Err(NormalizeError::ProfileMismatch {
                header: header.chain.to_string(),
                profile: self.profile.chain.to_string(),
            });
        }
        let reference = *self.first_base_fee.get_or_insert(header.base_fee_per_gas);
        normalize_with_reference(header, &self.profile, reference)
    }
}

/// Pure form of [`Normalizer::normalize_header`] for a known reference base fee.
pub fn normalize_with_reference(
    header: RawBlockHeader,
    profile: &ValidatedProfile,
    reference_base_fee: FeeQuantity,
) -> Result<NormalizedBlockRecord, NormalizeError> {
    let (effective_gas_limit, mut flags) = effective_gas_limit(&header, profile);
    let (effective_gas_price, price_flags) =
        effective_gas_price(&header, profile, Some(reference_base_fee))?;
    flags.extend(price_flags);
    Ok(NormalizedBlockRecord {
        header,
        effective_gas_limit,
        effective_gas_price,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;
    use proptest::prelude::*;

    const GWEI: u64 = WEI_PER_GWEI;

    fn profile(
        name: &str,
        limit: LimitPolicy,
        priority: PriorityPolicy,
        constant: bool,
    ) -> ValidatedProfile {
        validate_profile(NetworkProfile {
            limit_policy: limit,
            priority_policy: priority,
            constant_base_fee_expected: constant,
            ..NetworkProfile::plain(ChainRef::new(name, 1), "http://localhost:8545")
        })
        .unwrap()
    }

    fn header(
        name: &str,
        used: u64,
        limit: u64,
        base: u64,
        priority: Option<u64>,
    ) -> RawBlockHeader {
        RawBlockHeader {
            chain: ChainRef::new(name, 1),
            number: 1,
            timestamp: 12,
            gas_used: GasQuantity(used),
            gas_limit: GasQuantity(limit),
            base_fee_per_gas: FeeQuantity(base),
            priority_fee_observed: priority.map(FeeQuantity),
        }
    }

    #[test]
    fn limit_policies() {
        let reported = profile("a", LimitPolicy::Reported, PriorityPolicy::Include, false);
        let (limit, flags) = effective_gas_limit(&header("a", 0, 30_000_000, 0, None), &reported);
        assert_eq!(limit, GasQuantity(30_000_000));
        assert!(flags.is_empty());

        let over = profile(
            "a",
            LimitPolicy::Override(GasQuantity(32_000_000)),
            PriorityPolicy::Include,
            false,
        );
        let (limit, flags) = effective_gas_limit(&header("a", 0, 1_125_000_000, 0, None), &over);
        assert_eq!(limit, GasQuantity(32_000_000));
        assert_eq!(flags, Flags::from([RecordFlag::LimitOverridden]));

        let (limit, flags) =
            effective_gas_limit(&header("a", 40_000_000, 1_125_000_000, 0, None), &over);
        assert_eq!(limit, GasQuantity(32_000_000));
        assert!(flags.contains(&RecordFlag::UsageExceedsEffectiveLimit));

        // honest report below the override is not inflated
        let (limit, _) = effective_gas_limit(&header("a", 0, 20_000_000, 0, None), &over);
        assert_eq!(limit, GasQuantity(20_000_000));
    }

    #[test]
    fn price_policies() {
        let exclude = profile("a", LimitPolicy::Reported, PriorityPolicy::Exclude, false);
        let (price, flags) = effective_gas_price(
            &header("a", 0, 1, GWEI / 100, Some(2 * GWEI)),
            &exclude,
            None,
        )
        .unwrap();
        assert_eq!(price, FeeQuantity(10_000_000));
        assert_eq!(flags, Flags::from([RecordFlag::PriorityExcluded]));

        let include = profile("a", LimitPolicy::Reported, PriorityPolicy::Include, false);
        let (price, flags) = effective_gas_price(
            &header("a", 0, 1, 10 * GWEI, Some(2 * GWEI)),
            &include,
            None,
        )
        .unwrap();
        assert_eq!(price, FeeQuantity(12 * GWEI));
        assert!(flags.is_empty());

        let (price, _) =
            effective_gas_price(&header("a", 0, 1, 10 * GWEI, None), &include, None).unwrap();
        assert_eq!(price, FeeQuantity(10 * GWEI));

        let overflow = header("a", 0, 1, u64::MAX, Some(1));
        assert_eq!(
            effective_gas_price(&overflow, &include, None),
            Err(NormalizeError::PriceOverflow(1))
        );
    }

    #[test]
    fn base_fee_deviation() {
        let mut p = profile(
            "linea",
            LimitPolicy::Reported,
            PriorityPolicy::Include,
            true,
        )
        .into_inner();
        let strict = validate_profile(p.clone()).unwrap();
        let (_, flags) = effective_gas_price(
            &header("linea", 0, 1, 8 * GWEI, None),
            &strict,
            Some(FeeQuantity(7 * GWEI)),
        )
        .unwrap();
        assert!(flags.contains(&RecordFlag::BaseFeeDeviation));

        p.base_fee_tolerance_wei = GWEI;
        let tolerant = validate_profile(p).unwrap();
        let (_, flags) = effective_gas_price(
            &header("linea", 0, 1, 8 * GWEI, None),
            &tolerant,
            Some(FeeQuantity(7 * GWEI)),
        )
        .unwrap();
        assert!(flags.is_empty());
    }

    #[test]
    fn normalizer_tracks_first_base_fee() {
        let p = profile(
            "linea",
            LimitPolicy::Reported,
            PriorityPolicy::Include,
            true,
        );
        let mut n = Normalizer::new(p);
        let first = n.normalize_header(header("linea", 0, 10, 7, None)).unwrap();
        assert!(!first.has(RecordFlag::BaseFeeDeviation));
        let second = n.normalize_header(header("linea", 0, 10, 8, None)).unwrap();
        assert!(second.has(RecordFlag::BaseFeeDeviation));
        let third = n.normalize_header(header("linea", 0, 10, 7, None)).unwrap();
        assert!(!third.has(RecordFlag::BaseFeeDeviation));
        assert_eq!(n.reference_base_fee(), Some(FeeQuantity(7)));
    }

    #[test]
    fn ethereum_style_passes_through() {
        let mut n = Normalizer::new(profile(
            "eth",
            LimitPolicy::Reported,
            PriorityPolicy::Include,
            false,
        ));
        let h = header("eth", 12_000_000, 30_000_000, 20 * GWEI, Some(GWEI));
        let r = n.normalize_header(h.clone()).unwrap();
        assert_eq!(r.header, h);
        assert_eq!(r.effective_gas_limit, h.gas_limit);
        assert_eq!(r.effective_gas_price, FeeQuantity(21 * GWEI));
        assert!(r.flags.is_empty());
    }

    #[test]
    fn arbitrum_style_sets_both_flags() {
        let mut n = Normalizer::new(profile(
            "arb",
            LimitPolicy::Override(GasQuantity(32_000_000)),
            PriorityPolicy::Exclude,
            false,
        ));
        let r = n
            .normalize_header(header("arb", 640_000, 1 << 50, GWEI / 100, Some(GWEI)))
            .unwrap();
        assert!(r.has(RecordFlag::LimitOverridden));
        assert!(r.has(RecordFlag::PriorityExcluded));
        assert_eq!(r.effective_gas_price, FeeQuantity(10_000_000));
    }

    #[test]
    fn mismatched_chain_is_rejected() {
        let mut n = Normalizer::new(profile(
            "a",
            LimitPolicy::Reported,
            PriorityPolicy::Include,
            false,
        ));
        assert!(matches!(
            n.normalize_header(header("b", 0, 1, 1, None)),
            Err(NormalizeError::ProfileMismatch { .. })
        ));
        // a rejected header does not set the reference
        assert_eq!(n.reference_base_fee(), None);
    }

    proptest! {
        #[test]
        fn exclude_ignores_priority(base in 0u64..1 << 60, p1 in proptest::option::of(0u64..1 << 60), p2 in proptest::option::of(0u64..1 << 60)) {
            let p = profile("a", LimitPolicy::Reported, PriorityPolicy::Exclude, false);
            let a = effective_gas_price(&header("a", 0, 1, base, p1), &p, None).unwrap();
            let b = effective_gas_price(&header("a", 0, 1, base, p2), &p, None).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn effective_limit_never_exceeds_reported(used in 0u64..1 << 40, limit in 0u64..1 << 40, over in 1u64..1 << 40) {
            let used = used.min(limit);
            for policy in [LimitPolicy::Reported, LimitPolicy::Override(GasQuantity(over))] {
                let p = profile("a", policy, PriorityPolicy::Include, false);
                let (eff, flags) = effective_gas_limit(&header("a", used, limit, 0, None), &p);
                prop_assert!(eff.0 <= limit);
                prop_assert_eq!(flags.contains(&RecordFlag::LimitOverridden), matches!(policy, LimitPolicy::Override(_)));
                if policy == LimitPolicy::Reported {
                    prop_assert!(used <= eff.0);
                }
            }
        }

        #[test]
        fn normalization_is_pure_given_reference(used in 0u64..1000, base in 0u64..1000, reference in 0u64..1000, prio in proptest::option::of(0u64..1000)) {
            let p = profile("a", LimitPolicy::Override(GasQuantity(500)), PriorityPolicy::Include, true);
            let h = header("a", used, 1000, base, prio);
            let a = normalize_with_reference(h.clone(), &p, FeeQuantity(reference)).unwrap();
            let b = normalize_with_reference(h, &p, FeeQuantity(reference)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
