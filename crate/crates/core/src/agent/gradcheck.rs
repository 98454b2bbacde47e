//! Central finite-difference check of the actor and critic gradients.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AgentConfig, Batch, Ddpg, Mlp};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub actor_max_rel: f64,
    pub critic_max_rel: f64,
    pub checked: usize,
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn fd_max_rel(net: &Mlp, analytic: &[f64], h: f64, mut loss: impl FnMut(&Mlp) -> f64) -> f64 {
    let mut worst = 0.0f64;
    let mut probe = net.clone();
    for (k, &a) in analytic.iter().enumerate() {
        let orig = *net.params().nth(k).expect("index in range");
        *probe.params_mut().nth(k).expect("index in range") = orig + h;
        let up = loss(&probe);
        *probe.params_mut().nth(k).expect("index in range") = orig - h;
        let down = loss(&probe);
        *probe.params_mut().nth(k).expect("index in range") = orig;
        let fd = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(a, fd, 1e-7));
    }
    worst
}

/// Random toy agent: `obs_len` 6, 3 actions, two hidden layers of 8.
pub fn toy_agent(seed: u64) -> Ddpg {
    let cfg = AgentConfig {
        hidden: vec![8, 8],
        final_init: 0.5,
        batch_size: 16,
        replay_capacity: 64,
        ..AgentConfig::ieee14()
    };
    Ddpg::new(cfg, 6, 3, seed, seed ^ 0x5eed).expect("valid toy config")
}

pub fn toy_batch(rng: &mut ChaCha8Rng, obs_len: usize, act_len: usize, n: usize) -> Batch {
    let mut normal = || rng.random_range(-2.0..2.0);
    let s = Array2::from_shape_simple_fn((n, obs_len), &mut normal);
    let s_next = Array2::from_shape_simple_fn((n, obs_len), &mut normal);
    let r = Array1::from_shape_simple_fn(n, &mut normal);
    let a = Array2::from_shape_simple_fn((n, act_len), || rng.random::<f64>());
    let done =
        Array1::from_shape_simple_fn(n, || if rng.random::<f64>() < 0.3 { 1.0 } else { 0.0 });
    Batch {
        s,
        a,
        r,
        s_next,
        done,
    }
}

/// Compares every analytic parameter gradient of both networks against
/// central differences (step `h`) on one random agent and batch.
pub fn check(seed: u64, h: f64) -> GradCheck {
    let agent = toy_agent(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let batch = toy_batch(&mut rng, agent.obs_len(), agent.act_len(), 16);
    let y = agent.targets(&batch);

    let (_, gc) = agent.critic_loss_grads(&batch, &y);
    let critic_max_rel = fd_max_rel(agent.critic(), &gc.flat(), h, |c| {
        let mut probe = agent.clone();
        *probe.critic_mut() = c.clone();
        probe.critic_loss(&batch, &y)
    });

    let (_, ga) = agent.actor_objective_grads(&batch);
    let actor_max_rel = fd_max_rel(agent.actor(), &ga.flat(), h, |a| {
        let mut probe = agent.clone();
        *probe.actor_mut() = a.clone();
        -probe.actor_objective(&batch)
    });

    GradCheck {
        actor_max_rel,
        critic_max_rel,
        checked: agent.actor().n_params() + agent.critic().n_params(),
    }
}
