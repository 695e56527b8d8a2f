# dhpg_agent.py
# Deep homomorphic policy gradient: an actor-critic that learns the policy and an
# MDP homomorphism at the same time, plus the DDPG baseline it is built on.
#
# How one update works:
#   1. CRITICS  -- n-step TD loss for the actual critic Q(s, a) and for the abstract
#                  critic Q_bar(f(s), g(s, a)); targets use the target actor with
#                  clipped smoothing noise.
#   2. MODEL    -- L_lax regresses |f(s_i) - f(s_j)|_1 onto |r_i - r_j| + alpha * W2 between
#                  the predicted abstract next-state Gaussians of a permuted pair;
#                  L_h makes f(s') match a sample from the transition model and
#                  R_bar(f(s)) match r.
#                  Steps 1-2 are one combined Adam step on critics, f, g, R_bar, tau_bar.
#   3. ACTOR    -- every actor_delay steps, with critics and maps frozen:
#                  L = -Q(s, pi(s)) - Q_bar(f(s), g(s, pi(s)))
#   4. TARGETS  -- every target_update_freq steps, soft update of actor and critics.
#
# Variants (which actor terms, which critics):
#   dhpg_summed         both terms in one loss
#   dhpg_independent    the two terms as two sequential actor steps
#   dhpg_no_dpg         abstract term only
#   dhpg_single_critic  one critic network scores both coordinate systems
#   ddpg                actual term only; no abstract critic, no learned maps
#
# Hyperparameters live in configs/*.json and are loaded into AgentConfig.

import json
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from src.diff_engine import (
    LOG_STD_MAX,
    LOG_STD_MIN,
    Adam,
    Mlp,
    Tensor,
    concat,
    frozen,
    gaussian_sample,
    l1_norm,
    no_grad,
    soft_update,
)
from src.envs import ContinuousEnv, PendulumSwingup
from src.guardrails import NumericalDivergence, SchemaError, TrainingGuardrails
from src.replay_buffer import Batch, ReplayBuffer

logger = logging.getLogger(__name__)

CONFIGS_DIR = Path(__file__).parent.parent / "configs"

VARIANTS = ("dhpg_summed", "dhpg_independent", "dhpg_no_dpg", "dhpg_single_critic", "ddpg")

LOG_FIELDS = [
    "step", "episode_return", "L_actual", "L_abstract", "L_lax", "L_h",
    "value_equiv_error", "exploration_std", "g_jacobian_cond",
]


# -- Config --

@dataclass
class AgentConfig:
    variant: str = "dhpg_summed"
    learning_rate: float = 1e-4
    batch_size: int = 256
    n_step: int = 3
    gamma: float = 0.99
    tau: float = 0.01
    actor_delay: int = 2
    target_update_freq: int = 2
    noise_clip: float = 0.3
    hidden: int = 256
    buffer_capacity: int = 1_000_000
    seed_frames: int = 4000
    exploration_steps: int = 2000
    std_start: float = 1.0
    std_end: float = 0.1
    std_duration: int = 1_000_000
    action_repeat: int = 1
    lax_weight: float = 0.99
    abstract_state_dim: Optional[int] = None
    abstract_action_dim: Optional[int] = None
    use_identity_homomorphism: bool = False
    hom_next_state_stop_grad: bool = False
    diagnostic_interval: int = 1000

    def validate(self) -> "AgentConfig":
        if self.variant not in VARIANTS:
            raise SchemaError(f"unknown variant {self.variant!r}; choose one of {', '.join(VARIANTS)}")
        positive = [
            "learning_rate", "batch_size", "n_step", "actor_delay", "target_update_freq",
            "hidden", "buffer_capacity", "std_duration", "action_repeat", "diagnostic_interval",
        ]
        for name in positive:
            if getattr(self, name) <= 0:
                raise SchemaError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("seed_frames", "exploration_steps", "noise_clip", "std_start", "std_end", "lax_weight"):
            if getattr(self, name) < 0:
                raise SchemaError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if not 0.0 < self.gamma < 1.0:
            raise SchemaError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0.0 < self.tau <= 1.0:
            raise SchemaError(f"tau must lie in (0, 1], got {self.tau}")
        for name in ("abstract_state_dim", "abstract_action_dim"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise SchemaError(f"{name} must be positive when set, got {value}")
        return self

    @property
    def learns_homomorphism(self) -> bool:
        return self.variant != "ddpg" and not self.use_identity_homomorphism

    def exploration_std(self, step: int) -> float:
        """linear(std_start, std_end, std_duration)"""
        mix = min(max(step / self.std_duration, 0.0), 1.0)
        return (1.0 - mix) * self.std_start + mix * self.std_end

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(name_or_path: str = "dhpg_pendulum", **overrides) -> AgentConfig:
    """
    Read an AgentConfig from configs/<name>.json (or an explicit path).
    Unknown keys are rejected so typos do not silently fall back to defaults.
    """
    path = Path(name_or_path)
    if not path.suffix:
        path = CONFIGS_DIR / f"{name_or_path}.json"
    if not path.exists():
        raise SchemaError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise SchemaError(f"{path} is not valid JSON: {err}") from err
    if not isinstance(raw, dict):
        raise SchemaError(f"{path} must hold a JSON object")

    raw.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(AgentConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise SchemaError(f"{path}: unknown config keys {unknown}")
    return AgentConfig(**raw).validate()


# -- Pure loss pieces --

def gaussian_w2(mean_a: Tensor, log_std_a: Tensor, mean_b: Tensor, log_std_b: Tensor) -> Tensor:
    """
    Row-wise 2-Wasserstein distance between diagonal Gaussians:
    W2^2 = |mu_a - mu_b|^2 + |sigma_a - sigma_b|^2
    """
    std_a = log_std_a.clip(LOG_STD_MIN, LOG_STD_MAX).exp()
    std_b = log_std_b.clip(LOG_STD_MIN, LOG_STD_MAX).exp()
    squared = (mean_a - mean_b).square().sum(axis=-1) + (std_a - std_b).square().sum(axis=-1)
    return squared.sqrt()


def lax_bisimulation_loss(z_i: Tensor, z_j: Tensor, r_i, r_j, w2: Tensor, alpha: float) -> Tensor:
    """mean[(|z_i - z_j|_1 - (|r_i - r_j| + alpha * W2))^2]"""
    distance = l1_norm(z_i - z_j, axis=-1)
    target = np.abs(np.asarray(r_i) - np.asarray(r_j)) + alpha * w2
    return (distance - target).square().mean()


def homomorphism_loss(next_encoded: Tensor, next_sample: Tensor, rewards, predicted_rewards: Tensor) -> Tensor:
    """mean[ |f(s') - s_bar'|^2 + (r - R_bar(f(s)))^2 ]"""
    transition = (next_encoded - next_sample).square().sum(axis=-1)
    reward = (predicted_rewards - np.asarray(rewards)).square()
    return (transition + reward).mean()


# -- Agent --

class DhpgAgent:
    """
    Networks, optimizers and update rules for one training run.
    Every random draw comes from a stream spawned off the run seed, one stream per
    concern, so two variants with the same seed initialize the shared networks
    identically and see the same environment and exploration draws.
    """

    STREAMS = ("actor", "critic", "abstract_critic", "state_map", "action_map",
               "reward_model", "transition_model", "environment", "exploration",
               "replay", "target_noise", "model_noise", "pairing", "diagnostics")

    def __init__(self, obs_dim: int, action_dim: int, config: AgentConfig, seed: int = 0):
        self.config = config.validate()
        self.obs_dim, self.action_dim = obs_dim, action_dim
        streams = np.random.SeedSequence(seed).spawn(len(self.STREAMS))
        self.rngs = {name: np.random.default_rng(s) for name, s in zip(self.STREAMS, streams)}

        if config.use_identity_homomorphism or config.variant == "dhpg_single_critic":
            self.abstract_state_dim, self.abstract_action_dim = obs_dim, action_dim
        else:
            self.abstract_state_dim = config.abstract_state_dim or obs_dim
            self.abstract_action_dim = config.abstract_action_dim or action_dim
        h = config.hidden

        self.actor = Mlp([obs_dim, h, action_dim], self.rngs["actor"], output_activation="tanh", final_scale=1e-2)
        self.critic = Mlp([obs_dim + action_dim, h, 1], self.rngs["critic"])
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()

        self.abstract_critic = self.abstract_critic_target = None
        self.state_map = self.action_map = self.reward_model = self.transition_model = None
        if config.variant != "ddpg":
            if config.variant == "dhpg_single_critic":
                self.abstract_critic, self.abstract_critic_target = self.critic, self.critic_target
            else:
                self.abstract_critic = Mlp(
                    [self.abstract_state_dim + self.abstract_action_dim, h, 1], self.rngs["abstract_critic"]
                )
                self.abstract_critic_target = self.abstract_critic.copy()
        if config.learns_homomorphism:
            ds, da = self.abstract_state_dim, self.abstract_action_dim
            self.state_map = Mlp([obs_dim, h, ds], self.rngs["state_map"])
            self.action_map = Mlp([obs_dim + action_dim, h, da], self.rngs["action_map"], output_activation="tanh")
            self.reward_model = Mlp([ds, h, 1], self.rngs["reward_model"])
            self.transition_model = Mlp([ds + da, h, 2 * ds], self.rngs["transition_model"])

        self.critic_optimizer = Adam(self._unique_params(self._critic_side_modules()), lr=config.learning_rate)
        self.actor_optimizer = Adam(self.actor.parameters(), lr=config.learning_rate)
        self.guardrails = TrainingGuardrails()

    # -- Module bookkeeping --

    def _critic_side_modules(self) -> list:
        mods = [self.critic, self.abstract_critic, self.state_map, self.action_map,
                self.reward_model, self.transition_model]
        return [m for m in mods if m is not None]

    @staticmethod
    def _unique_params(modules) -> list:
        seen, params = set(), []
        for m in modules:
            for p in m.parameters():
                if id(p) not in seen:
                    seen.add(id(p))
                    params.append(p)
        return params

    def named_modules(self) -> Dict[str, Mlp]:
        names = ["actor", "critic", "actor_target", "critic_target", "abstract_critic",
                 "abstract_critic_target", "state_map", "action_map", "reward_model", "transition_model"]
        named, seen = {}, set()
        for name in names:
            module = getattr(self, name)
            if module is not None and id(module) not in seen:
                seen.add(id(module))
                named[name] = module
        return named

    # -- Homomorphism maps --

    def encode(self, obs) -> Tensor:
        """s_bar = f(s)"""
        if self.state_map is None:
            return obs if isinstance(obs, Tensor) else Tensor(obs)
        return self.state_map(obs)

    def map_action(self, obs, action) -> Tensor:
        """a_bar = g(s, a)"""
        if self.action_map is None:
            return action if isinstance(action, Tensor) else Tensor(action)
        return self.action_map(concat([obs, action], axis=-1))

    def predict_transition(self, abstract_state, abstract_action):
        """Mean and clamped log-std of tau_bar(. | s_bar, a_bar)."""
        out = self.transition_model(concat([abstract_state, abstract_action], axis=-1))
        ds = self.abstract_state_dim
        return out[:, :ds], out[:, ds:].clip(LOG_STD_MIN, LOG_STD_MAX)

    def act(self, obs: np.ndarray, std: float = 0.0, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        with no_grad():
            action = self.actor(np.atleast_2d(obs)).data[0]
        if std > 0.0:
            rng = rng or self.rngs["exploration"]
            action = action + rng.normal(0.0, std, size=action.shape)
        return np.clip(action, -1.0, 1.0)

    # -- Losses --

    def _target_actions(self, next_obs: np.ndarray, std: float) -> np.ndarray:
        c = self.config.noise_clip
        noise = np.clip(self.rngs["target_noise"].normal(0.0, std, size=(next_obs.shape[0], self.action_dim)), -c, c)
        with no_grad():
            return np.clip(self.actor_target(next_obs).data + noise, -1.0, 1.0)

    def critic_losses(self, batch: Batch, std: Optional[float] = None):
        """
        (L_actual, L_abstract). L_abstract is None for ddpg.

        y     = R^(n) + gamma^n Q'(s_{t+n}, a')
        y_bar = R^(n) + gamma^n Q_bar'(f(s_{t+n}), g(s_{t+n}, a'))
        with a' = clip(pi'(s_{t+n}) + clip(N(0, std), -c, c), -1, 1).
        """
        std = self.config.std_end if std is None else std
        next_actions = self._target_actions(batch.next_obs_n, std)

        with no_grad():
            target_q = self.critic_target(np.concatenate([batch.next_obs_n, next_actions], axis=-1)).data[:, 0]
        y = batch.reward_n + batch.discount * target_q
        q = self.critic(np.concatenate([batch.obs, batch.action], axis=-1))[:, 0]
        loss_actual = (q - y).square().mean()

        if self.abstract_critic is None:
            return loss_actual, None
        with no_grad():
            next_state_bar = self.encode(batch.next_obs_n)
            next_action_bar = self.map_action(batch.next_obs_n, next_actions)
            target_q_bar = self.abstract_critic_target(concat([next_state_bar, next_action_bar], axis=-1)).data[:, 0]
        y_bar = batch.reward_n + batch.discount * target_q_bar
        q_bar = self.abstract_critic(concat([self.encode(batch.obs), self.map_action(batch.obs, batch.action)], axis=-1))[:, 0]
        loss_abstract = (q_bar - y_bar).square().mean()
        return loss_actual, loss_abstract

    def _actor_terms(self) -> List[str]:
        variant = self.config.variant
        if variant == "ddpg":
            return ["dpg"]
        if variant == "dhpg_no_dpg":
            return ["hpg"]
        return ["dpg", "hpg"]

    def _actor_term(self, term: str, obs: np.ndarray) -> Tensor:
        frozen_modules = [m for m in (self.critic, self.abstract_critic, self.state_map, self.action_map) if m is not None]
        with frozen(*frozen_modules):
            actions = self.actor(obs)
            if term == "dpg":
                return -self.critic(concat([Tensor(obs), actions], axis=-1)).mean()
            return -self.abstract_critic(concat([self.encode(obs), self.map_action(obs, actions)], axis=-1)).mean()

    def actor_losses(self, batch: Batch) -> List[Tensor]:
        """One loss per actor step: two for dhpg_independent, one otherwise."""
        terms = [self._actor_term(t, batch.obs) for t in self._actor_terms()]
        if self.config.variant == "dhpg_independent" or len(terms) == 1:
            return terms
        return [terms[0] + terms[1]]

    def actor_loss(self, batch: Batch) -> Tensor:
        """-E[Q(s, pi(s)) + Q_bar(f(s), g(s, pi(s)))] with the variant's terms."""
        losses = self.actor_losses(batch)
        total = losses[0]
        for extra in losses[1:]:
            total = total + extra
        return total

    def homomorphism_losses(self, batch: Batch, permutation: Optional[np.ndarray] = None):
        """(L_lax, L_h) on the batch paired with a permutation of itself."""
        cfg = self.config
        if permutation is None:
            permutation = self.rngs["pairing"].permutation(len(batch))
        state_bar = self.encode(batch.obs)
        action_bar = self.map_action(batch.obs, batch.action)

        # W2 sees f(s) as a constant; tau_bar and g stay live
        mean, log_std = self.predict_transition(state_bar.detach(), action_bar)
        w2 = gaussian_w2(mean, log_std, mean[permutation], log_std[permutation])
        loss_lax = lax_bisimulation_loss(
            state_bar, state_bar[permutation], batch.reward, batch.reward[permutation], w2, cfg.lax_weight,
        )

        mean_h, log_std_h = self.predict_transition(state_bar, action_bar)
        noise = self.rngs["model_noise"].standard_normal(mean_h.shape)
        next_sample = gaussian_sample(mean_h, log_std_h, noise)
        next_encoded = self.encode(batch.next_obs)
        if cfg.hom_next_state_stop_grad:
            next_encoded = next_encoded.detach()
        predicted_rewards = self.reward_model(state_bar)[:, 0]
        loss_h = homomorphism_loss(next_encoded, next_sample, batch.reward, predicted_rewards)
        return loss_lax, loss_h

    # -- Updates --

    def update(self, buffer: ReplayBuffer, step: int) -> Dict[str, Optional[float]]:
        cfg = self.config
        batch = buffer.sample(cfg.batch_size, self.rngs["replay"])
        std = cfg.exploration_std(step)

        loss_actual, loss_abstract = self.critic_losses(batch, std)
        loss_lax = loss_h = None
        total = loss_actual
        if loss_abstract is not None:
            total = total + loss_abstract
        if cfg.learns_homomorphism:
            loss_lax, loss_h = self.homomorphism_losses(batch)
            total = total + loss_lax + loss_h

        losses = {
            "L_actual": loss_actual.item(),
            "L_abstract": None if loss_abstract is None else loss_abstract.item(),
            "L_lax": None if loss_lax is None else loss_lax.item(),
            "L_h": None if loss_h is None else loss_h.item(),
        }
        self.guardrails.enforce(losses, step, lambda: self._snapshot(batch))

        self.critic_optimizer.zero_grad()
        total.backward()
        self.critic_optimizer.step()

        if step % cfg.actor_delay == 0:
            self.update_actor(batch, step)
        if step % cfg.target_update_freq == 0:
            self.update_targets()

        losses["value_equiv_error"] = self.value_equivalence_error(batch)
        return losses

    def update_actor(self, batch: Batch, step: int = 0):
        """One optimizer step per actor loss; dhpg_independent recomputes the second term after the first step."""
        if self.config.variant == "dhpg_independent":
            pending = [lambda t=t: self._actor_term(t, batch.obs) for t in self._actor_terms()]
        else:
            pending = [lambda: self.actor_loss(batch)]
        for make_loss in pending:
            loss = make_loss()
            self.guardrails.enforce({"L_actor": loss.item()}, step, lambda: self._snapshot(batch))
            self.actor_optimizer.zero_grad()
            loss.backward()
            self.actor_optimizer.step()

    def update_targets(self):
        tau = self.config.tau
        soft_update(self.actor_target, self.actor, tau)
        soft_update(self.critic_target, self.critic, tau)
        if self.abstract_critic is not None and self.abstract_critic is not self.critic:
            soft_update(self.abstract_critic_target, self.abstract_critic, tau)

    # -- Diagnostics --

    def value_equivalence_error(self, batch: Batch) -> Optional[float]:
        """mean |Q(s, a) - Q_bar(f(s), g(s, a))| over the batch, divided by the batch range of Q."""
        if self.abstract_critic is None:
            return None
        with no_grad():
            q = self.critic(np.concatenate([batch.obs, batch.action], axis=-1)).data[:, 0]
            q_bar = self.abstract_critic(
                concat([self.encode(batch.obs), self.map_action(batch.obs, batch.action)], axis=-1)
            ).data[:, 0]
        spread = max(float(q.max() - q.min()), 1e-8)
        return float(np.mean(np.abs(q - q_bar)) / spread)

    def action_map_condition(self, obs: np.ndarray, actions: np.ndarray, h: float = 1e-4) -> Optional[float]:
        """Median condition number of d g(s, a) / d a over the given points (central differences)."""
        if self.action_map is None:
            return None
        jac = np.zeros((obs.shape[0], self.abstract_action_dim, self.action_dim))
        with no_grad():
            for j in range(self.action_dim):
                step = np.zeros_like(actions)
                step[:, j] = h
                plus = self.map_action(obs, actions + step).data
                minus = self.map_action(obs, actions - step).data
                jac[:, :, j] = (plus - minus) / (2.0 * h)
        return float(np.median(np.linalg.cond(jac)))

    def _snapshot(self, batch: Batch) -> dict:
        return {
            "variant": self.config.variant,
            "batch_reward_range": [float(batch.reward.min()), float(batch.reward.max())],
            "parameter_max_abs": {
                name: float(max(np.abs(p.data).max() for p in module.parameters()))
                for name, module in self.named_modules().items()
            },
        }


# -- Training loop --

@dataclass
class TrainResult:
    rows: List[dict]
    episode_returns: List[float]
    agent: DhpgAgent

    def final_return(self, last: int = 10) -> float:
        tail = self.episode_returns[-last:]
        return float(np.mean(tail)) if tail else float("nan")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def train(env: ContinuousEnv, config: AgentConfig, seed: int, total_steps: int,
          tracker=None, verbose: bool = False) -> TrainResult:
    """
    Run the agent for total_steps agent steps (each repeated action_repeat times in the env).
    One log row per step; episode_return is filled on the step an episode ends.
    """
    config = config.validate()
    agent = DhpgAgent(env.observation_dim, env.action_dim, config, seed)
    buffer = ReplayBuffer(config.buffer_capacity, env.observation_dim, env.action_dim, config.n_step, config.gamma)
    env.rng = agent.rngs["environment"]
    explore = agent.rngs["exploration"]
    warmup = max(config.seed_frames, config.exploration_steps)

    state = env.reset()
    obs = env.observe(state)
    episode_return, episode_step = 0.0, 0
    rows: List[dict] = []
    returns: List[float] = []
    g_cond = None

    for step in range(total_steps):
        std = config.exploration_std(step)
        if step < warmup:
            action = explore.uniform(-1.0, 1.0, size=env.action_dim)
        else:
            action = agent.act(obs, std, explore)

        reward = 0.0
        for _ in range(config.action_repeat):
            state, r = env.step(state, action)
            reward += float(r)
        next_obs = env.observe(state)
        episode_step += 1
        done = episode_step * config.action_repeat >= env.episode_length
        buffer.add(obs, action, reward, next_obs, terminal=False, episode_end=done)
        episode_return += reward
        obs = next_obs

        losses = {"L_actual": None, "L_abstract": None, "L_lax": None, "L_h": None, "value_equiv_error": None}
        if step >= config.seed_frames:
            try:
                losses = agent.update(buffer, step)
            except NumericalDivergence as err:
                if tracker is not None:
                    tracker.write_json("divergence_dump.json", err.dump)
                    tracker.log_event("divergence", step=step, bad_terms=err.dump.get("bad_terms"))
                raise
            if step % config.diagnostic_interval == 0:
                batch_sample = buffer.sample(16, agent.rngs["diagnostics"])
                g_cond = agent.action_map_condition(batch_sample.obs, batch_sample.action)

        row = {
            "step": step,
            "episode_return": episode_return if done else None,
            **losses,
            "exploration_std": std,
            "g_jacobian_cond": g_cond,
        }
        rows.append(row)
        if tracker is not None:
            tracker.log_step({k: _fmt(row[k]) for k in LOG_FIELDS})

        if done:
            returns.append(episode_return)
            if tracker is not None:
                tracker.log_event("episode", step=step, episode_return=episode_return)
            if verbose:
                print(f"  step {step + 1:>8}  episode {len(returns):>4}  return {episode_return:9.2f}")
            state = env.reset()
            obs = env.observe(state)
            episode_return, episode_step = 0.0, 0

    logger.info("training finished: %d steps, %d episodes", total_steps, len(returns))
    return TrainResult(rows=rows, episode_returns=returns, agent=agent)


def symmetry_report(agent: DhpgAgent, env: PendulumSwingup, n_angles: int = 16, n_speeds: int = 8,
                    n_actions: int = 5, rel_tol: float = 0.1) -> dict:
    """
    Check the learned action map for the pendulum flip: compare g(s, a) with
    g(-s, -a) on a grid of states and actions. A pair counts as symmetric when the
    gap is within rel_tol of the action scale.
    """
    if agent.action_map is None:
        return {"available": False, "passed": False}
    thetas = np.linspace(-np.pi, np.pi, n_angles, endpoint=False) + np.pi / n_angles
    speeds = np.linspace(-env.max_speed / 2, env.max_speed / 2, n_speeds)
    actions = np.linspace(-1.0, 1.0, n_actions)
    grid = np.array([(t, v, a) for t in thetas for v in speeds for a in actions])
    states, acts = grid[:, :2], grid[:, 2:]

    with no_grad():
        g = agent.map_action(env.observe(states), acts).data
        g_flip = agent.map_action(env.observe(env.flip_state(states)), -acts).data
    gaps = np.linalg.norm(g - g_flip, axis=-1)
    scale = max(float(np.abs(g).max()), 1e-8)
    symmetric = gaps <= rel_tol * scale
    fraction = float(symmetric.mean())
    return {
        "available": True,
        "n_points": int(len(grid)),
        "fraction_symmetric": fraction,
        "median_gap": float(np.median(gaps)),
        "action_scale": scale,
        "passed": fraction >= 0.8,
    }


def training_summary(result: TrainResult, env: ContinuousEnv) -> dict:
    """What summary.json holds for a finished training run."""
    summary = {
        "episodes": len(result.episode_returns),
        "final_return_mean": result.final_return(),
    }
    if isinstance(env, PendulumSwingup):
        summary["symmetry"] = symmetry_report(result.agent, env)
    return summary
