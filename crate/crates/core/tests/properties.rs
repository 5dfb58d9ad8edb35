use lamai_core::constellation::{Constellation, StandardConstellation};
use lamai_core::state_evolution::{log_grid, solve_fixed_point, MseFunction, Psi, PsiSpec};
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = StandardConstellation> {
    prop_oneof![
        Just(StandardConstellation::Bpsk),
        Just(StandardConstellation::Qpsk),
        Just(StandardConstellation::Psk8),
        Just(StandardConstellation::Qam16),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn psi_is_bounded_and_nondecreasing(k in kind(), log_nt in -3.0f64..0.0, seed in 0u64..1000) {
        let c = Constellation::standard(k, true);
        let nt = 10f64.powf(log_nt);
        let psi = Psi::new(&PsiSpec::monte_carlo(c, nt, 20_000, seed)).unwrap();
        let var = psi.prior_variance();
        let mut prev = 0.0;
        for s in log_grid(1e-4, 1e3, 60) {
            let p = psi.mse(s);
            prop_assert!(p >= 0.0 && p <= var * (1.0 + 1e-9), "Psi({s}) = {p}, Var = {var}");
            // common random numbers keep the curve smooth; allow a small band
            prop_assert!(p >= prev - 1e-3 * var, "Psi decreased at {s}: {prev} -> {p}");
            prev = prev.max(p);
        }
    }

    #[test]
    fn fixed_point_residual_is_tiny(
        k in kind(),
        log_nt in -3.0f64..0.0,
        beta in 0.05f64..2.0,
        log_n0 in -3.0f64..0.5,
    ) {
        let c = Constellation::standard(k, true);
        let psi = Psi::new(&PsiSpec::monte_carlo(c, 10f64.powf(log_nt), 20_000, 5)).unwrap();
        let n0 = 10f64.powf(log_n0);
        let s = solve_fixed_point(&psi, beta, n0).unwrap();
        let residual = (s - n0 - beta * psi.mse(s)).abs();
        prop_assert!(residual < 1e-8 * s, "residual {residual} at {s}");
        prop_assert!(s >= n0);
    }
}
