use proptest::prelude::*;

use trapfield::duality::{verify_duality_one, verify_duality_two};
use trapfield::environment::{build_environment, rescaled_measure, TailLaw};
use trapfield::exclusion::{check_detailed_balance, Configuration, IpsSimulator};
use trapfield::fields::theta_n;
use trapfield::fractional::{build_fin_chain, mittag_leffler};
use trapfield::harness::{ExperimentConfig, Table};
use trapfield::rng::rng_from_seed;
use trapfield::walker::RateTable;
use trapfield::{Environment, Geometry};

fn small_env() -> impl Strategy<Value = Environment> {
    (prop_oneof![Just(2usize), Just(3usize)], any::<bool>())
        .prop_flat_map(|(sites, periodic)| {
            let periodic = periodic && sites == 3;
            (Just(sites), Just(periodic), prop::collection::vec(1u64..=3, sites))
        })
        .prop_map(|(sites, periodic, alpha)| {
            let g = Geometry::chain(sites, periodic).unwrap();
            Environment::from_alpha(g, TailLaw::new(0.5).unwrap(), alpha).unwrap()
        })
}

fn configuration(env: &Environment) -> impl Strategy<Value = Vec<u64>> {
    env.alpha().iter().map(|&a| 0..=a).collect::<Vec<_>>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn detailed_balance_holds(env in small_env(), rho in 0.05f64..0.95, a in prop_oneof![Just(0.0), Just(0.5), Just(1.0), 0.0f64..1.0]) {
        prop_assert!(check_detailed_balance(&env, a, rho).unwrap() <= 1e-12);
    }

    #[test]
    fn self_duality_holds(
        (env, eta) in small_env().prop_flat_map(|e| { let c = configuration(&e); (Just(e), c) }),
        a in 0.0f64..=1.0,
        t in 0.01f64..2.0,
        x in 0usize..3,
        y in 0usize..3,
    ) {
        let sites = env.num_sites();
        let (x, y) = (x % sites, y % sites);
        let one = verify_duality_one(&env, a, &eta, x, t).unwrap();
        prop_assert!(one.pass, "{:?}", one);
        prop_assume!(x != y || env.alpha_at(x) >= 2);
        let two = verify_duality_two(&env, a, &eta, x, y, t).unwrap();
        prop_assert!(two.pass, "{:?}", two);
    }

    #[test]
    fn exclusion_conserves_particles_and_capacity(seed in any::<u64>(), a in 0.0f64..=1.0, fill in 0.0f64..=1.0) {
        let env = build_environment(1, 6, TailLaw::new(0.6).unwrap(), seed).unwrap();
        let counts: Vec<u64> = env.alpha().iter().map(|&al| (al as f64 * fill).floor() as u64).collect();
        let eta0 = Configuration::new(&env, counts).unwrap();
        let mut sim = IpsSimulator::new(&env, a, &eta0).unwrap();
        let mut rng = rng_from_seed(seed ^ 1);
        sim.advance_to(2.0, 10_000_000, &mut rng).unwrap();
        prop_assert_eq!(sim.counts().iter().sum::<u64>(), eta0.particles());
        prop_assert!(sim.counts().iter().zip(env.alpha()).all(|(c, al)| c <= al));
    }

    #[test]
    fn fin_chain_is_the_time_changed_trap_walker(seed in any::<u64>(), len in 3usize..12, n in 1.0f64..20.0) {
        let beta = 0.5;
        let law = TailLaw::new(beta).unwrap();
        let g = Geometry::chain(len, false).unwrap();
        let env = trapfield::environment::build_on(g, law, seed).unwrap();
        let chain = build_fin_chain(&rescaled_measure(&env, n).unwrap()).unwrap();
        let walker = RateTable::btm(&env, 0.0).unwrap().generator();
        let theta = theta_n(n, 1, beta).unwrap();
        let q = chain.generator();
        let index = |s: usize| chain.nearest(env.geometry.position(s, n)[0]);
        for s in 0..len {
            for r in 0..len {
                let want = theta * walker.get(s, r);
                let got = q.get(index(s), index(r));
                prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{s}->{r}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn mittag_leffler_is_a_decreasing_probability(beta in 0.05f64..=1.0, x in 0.0f64..50.0, dx in 0.0f64..5.0) {
        let a = mittag_leffler(beta, -x).unwrap();
        let b = mittag_leffler(beta, -x - dx).unwrap();
        prop_assert!(a > 0.0 && a <= 1.0);
        prop_assert!(b <= a + 1e-12);
    }

    #[test]
    fn config_hash_survives_toml_round_trip(seed in any::<u64>(), beta in 0.1f64..1.0, replicas in 1u64..1000, d in 1usize..=3) {
        let mut cfg = ExperimentConfig::from_toml("kind = \"hydro-density\"\nseed = 1\n").unwrap();
        cfg.seed = seed;
        cfg.beta = beta;
        cfg.replicas = replicas;
        cfg.d = d;
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn csv_tables_round_trip(cells in prop::collection::vec(prop::collection::vec("[a-z0-9,\" .-]{0,8}", 3), 0..6)) {
        let mut t = Table::new("probe", &["a", "b,c", "d"]);
        for row in cells {
            t.push(row);
        }
        prop_assert_eq!(Table::parse(&t.render()).unwrap(), t);
    }
}
