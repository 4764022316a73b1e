//! Fair-share uplink against an independent processor-sharing integrator.

mod common;

use common::{oracle, simulate, Transfer};
use proptest::prelude::*;

fn transfer() -> impl Strategy<Value = Transfer> {
    (0.0..2.0f64, 1e3..1e8f64).prop_map(|(start, bits)| Transfer { start, bits })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn completions_match_processor_sharing(
        bw in 1e6..1e8f64,
        latency in 0.0..0.5f64,
        transfers in prop::collection::vec(transfer(), 1..=5),
    ) {
        let want = oracle(bw, latency, &transfers);
        let got = simulate(bw, latency, &transfers);
        for (i, (g, w)) in got.iter().zip(&want).enumerate() {
            prop_assert!((g - w).abs() <= 1e-6, "transfer {i}: sim {g} oracle {w}");
        }
    }
}

#[test]
fn simultaneous_starts_finish_in_size_order() {
    let ts = [
        Transfer { start: 0.0, bits: 1e6 },
        Transfer { start: 0.0, bits: 2e6 },
        Transfer { start: 0.0, bits: 3e6 },
    ];
    let got = simulate(1e6, 0.0, &ts);
    // Three-way share until 3 s, two-way until 5 s, then alone until 6 s.
    for (g, w) in got.iter().zip([3.0, 5.0, 6.0]) {
        assert!((g - w).abs() < 1e-9, "{g} vs {w}");
    }
}
