use gkae_core::channel::{link_sets, uav_received_power, ChannelParams, GroundLayout};
use gkae_core::lpd::{solve_uniform, LpdConfig, UavFrame};
use proptest::prelude::*;

fn arb_instance() -> impl Strategy<Value = (LpdConfig, Vec<UavFrame>)> {
    (
        6usize..30,
        100.0f64..800.0,
        1usize..6,
        5.0f64..15.0,
        0.1e-6f64..2e-6,
        any::<u64>(),
        prop::collection::vec(prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 50.0f64..300.0), 1..5), 1..4),
    )
        .prop_map(|(n, side, c, gamma_db, p_det, seed, frames)| {
            let channel = ChannelParams { gamma_tilde_db: gamma_db, ..ChannelParams::default() };
            let config = LpdConfig {
                p_max: 0.1,
                c_tilde: c,
                p_det,
                channel,
                layout: GroundLayout::random(n, side, [0.0, 0.0], seed).unwrap(),
            };
            let frames = frames
                .into_iter()
                .enumerate()
                .map(|(t, uavs)| UavFrame { t, positions: uavs.into_iter().map(|(x, y, h)| [x * side, y * side, h]).collect() })
                .collect();
            (config, frames)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn feasible_power_is_safe_and_minimal((config, frames) in arb_instance()) {
        let plan = solve_uniform(&frames, &config).unwrap();
        prop_assert_eq!(&plan, &solve_uniform(&frames, &config).unwrap());
        for (step, frame) in plan.steps.iter().zip(&frames) {
            let Some(p) = step.p_star else {
                prop_assert!(step.p_low > step.p_high);
                continue;
            };
            prop_assert!(p <= config.p_max);
            for u in &frame.positions {
                for w in &config.layout.positions {
                    let d = ((u[0] - w[0]).powi(2) + (u[1] - w[1]).powi(2) + (u[2] - w[2]).powi(2)).sqrt();
                    prop_assert!(uav_received_power(p, d, config.channel.eta_prime).unwrap() <= config.p_det);
                }
            }
            let links = link_sets(&config.layout, p, &config.channel, None).unwrap();
            prop_assert!(links.iter().all(|s| s.len() >= config.c_tilde));
            prop_assert_eq!(&links, &step.link_sets);
            let below = link_sets(&config.layout, p.next_down(), &config.channel, None).unwrap();
            prop_assert!(below.iter().any(|s| s.len() < config.c_tilde));
            prop_assert!(step.margin.unwrap() >= 0.0);
        }
    }
}
