"""Variance protocols on a live agent: untrained (init) or trained model.

States come from the agent's own on-policy rollouts. The q-function is
either the critic's one-step advantage or a sampled Monte Carlo return.
"""

import numpy as np

from mpg.estimators import measure_variance

Q_SOURCES = ("critic", "returns")
MODES = ("init", "trained")


def rollout_states(agent, n_states, rng, steps=100):
    """Pick ``n_states`` distinct visited states from a fresh rollout segment."""
    batch = agent.collect_rollout(steps)
    states = batch.obs.reshape(-1, batch.obs.shape[-1])
    if states.shape[0] < n_states:
        raise ValueError(f"rollout produced {states.shape[0]} states, need {n_states}")
    return states[rng.choice(states.shape[0], n_states, replace=False)]


def critic_q(agent, env):
    """q(s, x) = r + gamma (1 - terminal) v(s') - v(s)."""
    gamma = agent.cfg.gamma

    def q(state, executed):
        nxt, r, term = env.transition(state, executed)
        return r + gamma * np.where(term, 0.0, agent.value(nxt)) - agent.value(state[None])[0]
    return q


def returns_q(agent, env, rng, horizon=None):
    """One sampled discounted return per draw, following the policy after x.

    Vectorised over draws; episodes still running at ``horizon`` are
    bootstrapped with the critic. Subtracts v(s) like :func:`critic_q`.
    """
    gamma = agent.cfg.gamma
    horizon = horizon or getattr(env, "max_steps", 200)
    policy = agent.policy

    def q(state, executed):
        s, r, term = env.transition(np.broadcast_to(state, np.shape(executed)), executed)
        total = r.copy()
        alive = ~term
        disc = gamma
        for _ in range(horizon - 1):
            if not alive.any():
                break
            idx = np.nonzero(alive)[0]
            out = policy.outputs(s[idx])
            x = policy.head.sample(out, policy.sigma, rng).executed
            s_new, r_new, t_new = env.transition(s[idx], x)
            total[idx] += disc * r_new
            s[idx] = s_new
            alive[idx[t_new]] = False
            disc *= gamma
        if alive.any():
            total[alive] += disc * agent.value(s[alive])
        return total - agent.value(state[None])[0]
    return q


def variance_protocol(agent, mode, n=1000, n_states=32, seed=0, q_source="critic", n_boot=1000):
    """Standard vs marginal estimator variance at the agent's current weights."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if q_source not in Q_SOURCES:
        raise ValueError(f"q_source must be one of {Q_SOURCES}")
    rng = np.random.default_rng(seed)
    trained = agent.episodes_trained
    states = rollout_states(agent, n_states, rng)
    env = agent.env_factory()
    q_fn = critic_q(agent, env) if q_source == "critic" else returns_q(agent, env, rng)
    policy = agent.policy.with_head(agent.head.with_marginal(True))
    report = measure_variance(policy, states, q_fn, n, rng, n_boot=n_boot,
                              estimator=agent.cfg.estimator.value, seed=seed, q_source=q_source)
    report.extra.update(mode=mode, n_states=n_states, draws_per_state=n,
                        episodes_trained=trained)
    return report
