use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::{Branch, Bus, BusKind, Generator, ModelOrder, PowerSystemCase};

/// Seed of the bundled `data/synthetic20.json`.
pub const SYNTHETIC20_SEED: u64 = 20;

/// Seeded `g`-machine test system.
///
/// Generator `i` sits on bus `i` behind a step-up transformer to network bus
/// `g + i`. The network buses form a ring with `g / 4` random chords, and
/// every other one carries a load. Bus 1 is the slack.
pub fn synthetic_case(g: usize, seed: u64) -> Result<PowerSystemCase> {
    if g < 3 {
        return Err(Error::InvalidArgument(format!(
            "synthetic systems need at least 3 machines, got {g}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);

    let mut net = Vec::with_capacity(g);
    for i in 0..g {
        let (p, q) = if i % 2 == 0 {
            let p = u(0.8, 1.6);
            (p, 0.3 * p)
        } else {
            (0.0, 0.0)
        };
        net.push(Bus {
            id: g + i + 1,
            kind: BusKind::Pq,
            p_load: round(p),
            q_load: round(q),
            p_gen: 0.0,
            v_setpoint: 1.0,
            shunt_g: 0.0,
            shunt_b: 0.0,
        });
    }
    let total: f64 = net.iter().map(|b| b.p_load).sum();
    let shares: Vec<f64> = (0..g).map(|_| u(0.7, 1.3)).collect();
    let share_sum: f64 = shares.iter().sum();

    let mut buses = Vec::with_capacity(2 * g);
    for (i, s) in shares.iter().enumerate() {
        buses.push(Bus {
            id: i + 1,
            kind: if i == 0 { BusKind::Slack } else { BusKind::Pv },
            p_load: 0.0,
            q_load: 0.0,
            p_gen: if i == 0 {
                0.0
            } else {
                round(total * s / share_sum)
            },
            v_setpoint: round(u(1.01, 1.04)),
            shunt_g: 0.0,
            shunt_b: 0.0,
        });
    }
    buses.extend(net);

    let line = |from: usize, to: usize, x: f64, b: f64| Branch {
        from,
        to,
        r: round(x / 10.0),
        x: round(x),
        b_charging: round(b),
        status: true,
    };
    let mut branches = Vec::new();
    for i in 0..g {
        branches.push(Branch {
            from: i + 1,
            to: g + i + 1,
            r: 0.0,
            x: round(u(0.05, 0.08)),
            b_charging: 0.0,
            status: true,
        });
    }
    for i in 0..g {
        branches.push(line(
            g + i + 1,
            g + (i + 1) % g + 1,
            u(0.04, 0.1),
            u(0.05, 0.15),
        ));
    }
    let mut chords = 0;
    while chords < g / 4 {
        let pair = sample(&mut rng, g, 2).into_vec();
        let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
        let adjacent = b - a == 1 || (a == 0 && b == g - 1);
        let (fa, fb) = (g + a + 1, g + b + 1);
        if adjacent || branches.iter().any(|br| br.connects(fa, fb)) {
            continue;
        }
        let x = rng.random_range(0.06..0.12);
        let bc = rng.random_range(0.05..0.15);
        branches.push(line(fa, fb, x, bc));
        chords += 1;
    }

    let generators = (0..g)
        .map(|i| {
            let xdp = rng.random_range(0.15..0.3);
            let xd = xdp * rng.random_range(3.0..5.0);
            Generator {
                id: i + 1,
                bus: i + 1,
                model_order: ModelOrder::Fourth,
                h: round(rng.random_range(3.0..9.0)),
                k_d: 0.0,
                x_d: round(xd),
                x_q: round(0.9 * xd),
                x_d_prime: round(xdp),
                x_q_prime: round(xdp),
                t_d0_prime: round(rng.random_range(4.0..8.0)),
                t_q0_prime: round(rng.random_range(0.3..1.0)),
            }
        })
        .collect();

    let case = PowerSystemCase {
        base_mva: 100.0,
        buses,
        branches,
        generators,
    };
    case.validate()?;
    Ok(case)
}

/// Four decimals, so the JSON fixture reads cleanly and round-trips exactly.
fn round(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}
