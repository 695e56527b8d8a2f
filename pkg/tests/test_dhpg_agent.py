# test_dhpg_agent.py
# The DHPG / DDPG agent: config loading, loss pieces computed by hand, the identity
# homomorphism sanity case, a short smoke run and the divergence guardrail.
# Networks are kept tiny so the whole file runs in seconds.

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from run_tracker import RunTracker
from src.diff_engine import Tensor, finite_difference_grad, no_grad
from src.dhpg_agent import (
    LOG_FIELDS,
    VARIANTS,
    AgentConfig,
    DhpgAgent,
    gaussian_w2,
    homomorphism_loss,
    lax_bisimulation_loss,
    load_config,
    symmetry_report,
    train,
)
from src.envs import PendulumSwingup
from src.guardrails import NumericalDivergence, SchemaError
from src.replay_buffer import Batch, ReplayBuffer


def _config(**overrides) -> AgentConfig:
    base = dict(hidden=16, batch_size=8, buffer_capacity=1000, seed_frames=10, exploration_steps=10)
    base.update(overrides)
    return AgentConfig(**base).validate()


def _filled_buffer(n: int = 40, obs_dim: int = 3, action_dim: int = 1, seed: int = 0,
                   n_step: int = 3, zero_rewards: bool = False) -> ReplayBuffer:
    rng = np.random.default_rng(seed)
    buffer = ReplayBuffer(1000, obs_dim, action_dim, n_step=n_step, gamma=0.99)
    for _ in range(n):
        reward = 0.0 if zero_rewards else float(rng.uniform())
        buffer.add(rng.normal(size=obs_dim), rng.uniform(-1, 1, action_dim), reward, rng.normal(size=obs_dim))
    return buffer


def _zero(*modules):
    for module in modules:
        for p in module.parameters():
            p.data = np.zeros_like(p.data)


# -- Config --

def test_exploration_schedule_endpoints():
    config = AgentConfig()
    assert config.exploration_std(0) == 1.0
    assert config.exploration_std(1_000_000) == 0.1
    assert config.exploration_std(5_000_000) == 0.1
    assert config.exploration_std(500_000) == pytest.approx(0.55)


def test_shipped_configs_load():
    config = load_config("dhpg_pendulum")
    assert config.variant == "dhpg_summed"
    assert config.batch_size == 256
    assert load_config("ddpg_pendulum").variant == "ddpg"
    assert load_config("smoke", variant="dhpg_no_dpg").variant == "dhpg_no_dpg"
    # None overrides keep the file's value
    assert load_config("smoke", variant=None).variant == "dhpg_summed"


def test_config_rejects_unknown_keys_and_bad_values(tmp_path):
    path = tmp_path / "typo.json"
    path.write_text('{"learning_rat": 0.001}')
    with pytest.raises(SchemaError):
        load_config(str(path))
    with pytest.raises(SchemaError):
        load_config("no_such_config")
    with pytest.raises(SchemaError):
        AgentConfig(variant="sac").validate()
    with pytest.raises(SchemaError):
        AgentConfig(gamma=1.0).validate()
    with pytest.raises(SchemaError):
        AgentConfig(batch_size=0).validate()


# -- Pure loss pieces --

def test_w2_between_shifted_gaussians():
    zeros = Tensor(np.zeros((1, 2)))
    shifted = Tensor(np.array([[1.0, 0.0]]))
    assert gaussian_w2(zeros, zeros, shifted, zeros).numpy().tolist() == [1.0]
    assert gaussian_w2(shifted, zeros, shifted, zeros).numpy().tolist() == [0.0]
    # same means, std 1 vs e: |1 - e|
    wide = Tensor(np.array([[1.0, 0.0]]))
    assert gaussian_w2(zeros, zeros, zeros, wide).item() == pytest.approx(np.e - 1.0)


def test_lax_loss_is_zero_when_distances_match():
    z_i = Tensor(np.array([[0.0, 0.0], [1.0, 1.0]]))
    z_j = Tensor(np.array([[1.0, 0.0], [1.0, 1.0]]))
    r_i, r_j = np.array([0.5, 0.2]), np.array([1.5, 0.2])
    w2 = Tensor(np.zeros(2))
    assert lax_bisimulation_loss(z_i, z_j, r_i, r_j, w2, 0.99).item() == 0.0
    # a W2 term of 1 adds alpha to the first target: ((1 - (1 + 0.5))^2 + 0) / 2
    w2 = Tensor(np.array([1.0, 0.0]))
    assert lax_bisimulation_loss(z_i, z_j, r_i, r_j, w2, 0.5).item() == pytest.approx(0.125)


def test_homomorphism_loss_by_hand():
    encoded = Tensor(np.array([[1.0, 2.0]]))
    sample = Tensor(np.array([[0.0, 2.0]]))
    loss = homomorphism_loss(encoded, sample, np.array([1.0]), Tensor(np.array([3.0])))
    assert loss.item() == pytest.approx(1.0 + 4.0)


# -- Agent losses --

@pytest.mark.parametrize("variant", VARIANTS)
def test_every_variant_builds_and_updates(variant):
    agent = DhpgAgent(3, 1, _config(variant=variant), seed=0)
    losses = agent.update(_filled_buffer(), step=10)
    assert np.isfinite(losses["L_actual"])
    if variant == "ddpg":
        assert losses["L_abstract"] is None and losses["L_lax"] is None
        assert "abstract_critic" not in agent.named_modules()
    else:
        assert np.isfinite(losses["L_abstract"])
        assert np.isfinite(losses["value_equiv_error"])
    if variant == "dhpg_single_critic":
        assert agent.abstract_critic is agent.critic


def test_zero_critics_give_zero_critic_losses():
    agent = DhpgAgent(3, 1, _config(use_identity_homomorphism=True), seed=1)
    _zero(agent.critic, agent.critic_target, agent.abstract_critic, agent.abstract_critic_target)
    batch = _filled_buffer(zero_rewards=True).sample(8, np.random.default_rng(0))
    loss_actual, loss_abstract = agent.critic_losses(batch)
    assert loss_actual.item() == 0.0
    assert loss_abstract.item() == 0.0


def test_single_transition_critic_loss_by_hand():
    config = _config(variant="ddpg", n_step=1)
    agent = DhpgAgent(3, 1, config, seed=2)
    s, a, r, s_next = np.array([[0.1, -0.2, 0.3]]), np.array([[0.4]]), 0.7, np.array([[0.2, 0.1, -0.5]])
    batch = Batch(
        obs=s, action=a, reward_n=np.array([r]), discount=np.array([config.gamma]),
        next_obs_n=s_next, reward=np.array([r]), next_obs=s_next, indices=np.array([0]),
    )
    loss_actual, loss_abstract = agent.critic_losses(batch, std=0.0)
    assert loss_abstract is None

    with no_grad():
        a_next = np.clip(agent.actor_target(s_next).data, -1.0, 1.0)
        y = r + config.gamma * agent.critic_target(np.concatenate([s_next, a_next], axis=-1)).data[0, 0]
        q = agent.critic(np.concatenate([s, a], axis=-1)).data[0, 0]
    assert loss_actual.item() == pytest.approx((q - y) ** 2, rel=1e-12)


def test_identity_homomorphism_with_tied_critics_doubles_the_ddpg_gradient():
    agent = DhpgAgent(3, 1, _config(use_identity_homomorphism=True), seed=3)
    assert agent.state_map is None and agent.action_map is None
    agent.abstract_critic.load_state_dict(agent.critic.state_dict())
    agent.abstract_critic_target.load_state_dict(agent.critic_target.state_dict())
    batch = _filled_buffer(seed=4).sample(8, np.random.default_rng(1))

    loss_actual, loss_abstract = agent.critic_losses(batch, std=0.0)
    assert loss_actual.item() == loss_abstract.item()

    agent.actor.zero_grad()
    agent.actor_loss(batch).backward()
    summed = [p.grad.copy() for p in agent.actor.parameters()]

    agent.actor.zero_grad()
    agent._actor_term("dpg", batch.obs).backward()
    single = [p.grad.copy() for p in agent.actor.parameters()]
    agent.actor.zero_grad()

    for g_sum, g_one in zip(summed, single):
        assert np.allclose(g_sum, 2.0 * g_one, rtol=1e-12, atol=0.0)
    # the critics stay untouched by an actor backward pass
    assert all(p.grad is None for p in agent.critic.parameters())


def test_independent_variant_takes_two_actor_steps():
    agent = DhpgAgent(3, 1, _config(variant="dhpg_independent"), seed=4)
    batch = _filled_buffer().sample(8, np.random.default_rng(2))
    assert len(agent.actor_losses(batch)) == 2
    before = agent.actor_optimizer.t
    agent.update_actor(batch)
    assert agent.actor_optimizer.t == before + 2


def test_actor_loss_gradient_matches_finite_differences():
    agent = DhpgAgent(3, 1, _config(), seed=5)
    batch = _filled_buffer(seed=6).sample(8, np.random.default_rng(3))
    weight = agent.actor.weights[-1]

    agent.actor.zero_grad()
    agent.actor_loss(batch).backward()
    analytic = weight.grad.copy()
    agent.actor.zero_grad()

    def loss(values):
        saved = weight.data
        weight.data = values
        try:
            with no_grad():
                return agent.actor_loss(batch).item()
        finally:
            weight.data = saved

    numeric = finite_difference_grad(loss, weight.data.copy(), h=1e-6)
    assert np.abs(analytic - numeric).max() <= 1e-5 * max(1.0, np.abs(numeric).max())


def test_identity_pairing_gives_zero_lax_loss():
    agent = DhpgAgent(3, 1, _config(), seed=7)
    batch = _filled_buffer().sample(8, np.random.default_rng(4))
    loss_lax, loss_h = agent.homomorphism_losses(batch, permutation=np.arange(8))
    assert loss_lax.item() == 0.0
    assert np.isfinite(loss_h.item()) and loss_h.item() >= 0.0


def test_next_state_stop_gradient_toggle():
    batch = _filled_buffer().sample(8, np.random.default_rng(5))
    grads = {}
    for stop in (False, True):
        agent = DhpgAgent(3, 1, _config(hom_next_state_stop_grad=stop), seed=8)
        _, loss_h = agent.homomorphism_losses(batch, permutation=np.arange(8))
        loss_h.backward()
        grads[stop] = agent.state_map.weights[0].grad.copy()
    # same networks and noise, so only the f(s') path differs
    assert not np.allclose(grads[False], grads[True])


def test_action_map_condition_is_reported():
    agent = DhpgAgent(3, 1, _config(), seed=9)
    batch = _filled_buffer().sample(4, np.random.default_rng(6))
    cond = agent.action_map_condition(batch.obs, batch.action)
    assert cond >= 1.0
    assert DhpgAgent(3, 1, _config(variant="ddpg"), seed=9).action_map_condition(batch.obs, batch.action) is None


# -- Training loop --

def _smoke_run(tmp_path, name: str, steps: int = 150):
    tracker = RunTracker(tmp_path / name, "train", seed=0, log_fields=LOG_FIELDS)
    result = train(PendulumSwingup(), load_config("smoke"), seed=0, total_steps=steps, tracker=tracker)
    tracker.finish()
    return result, tracker


def test_smoke_training_run_is_deterministic(tmp_path):
    first, tracker = _smoke_run(tmp_path, "a")
    second, _ = _smoke_run(tmp_path, "b")
    assert len(first.rows) == 150
    assert first.rows[99]["L_actual"] is None
    assert first.rows[100]["L_actual"] is not None
    assert first.rows == second.rows
    assert (tmp_path / "a" / "log.csv").read_text() == (tmp_path / "b" / "log.csv").read_text()
    assert tracker.path("log.csv").read_text().splitlines()[0] == ",".join(LOG_FIELDS)

    report = symmetry_report(first.agent, PendulumSwingup(), n_angles=4, n_speeds=2, n_actions=3)
    assert report["available"]
    assert report["n_points"] == 24
    assert 0.0 <= report["fraction_symmetric"] <= 1.0


class _BrokenPendulum(PendulumSwingup):
    def step(self, state, action, noise=None):
        next_state, _ = super().step(state, action, noise)
        return next_state, np.nan


def test_non_finite_loss_stops_training_with_a_dump(tmp_path):
    tracker = RunTracker(tmp_path / "broken", "train", seed=0, log_fields=LOG_FIELDS)
    with pytest.raises(NumericalDivergence) as info:
        train(_BrokenPendulum(), load_config("smoke"), seed=0, total_steps=150, tracker=tracker)
    tracker.finish()
    assert info.value.dump["step"] == 100
    assert "L_actual" in info.value.dump["bad_terms"]
    assert (tmp_path / "broken" / "divergence_dump.json").exists()


if __name__ == "__main__":
    print("=" * 60)
    print("DHPG agent")
    print("=" * 60)
    test_exploration_schedule_endpoints()
    test_identity_homomorphism_with_tied_critics_doubles_the_ddpg_gradient()
    test_actor_loss_gradient_matches_finite_differences()
    print("Losses and gradients check out")
