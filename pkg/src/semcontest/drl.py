"""Diffusion-policy actor-critic.

The actor is a noise predictor conditioned on the encoded state; actions come
from running the reverse diffusion chain for ``M`` steps. The critic scores
(state, action) pairs, and the actor ascends the critic by backpropagating
through the whole sampling chain with its injected noises held fixed.
"""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field, fields

import numpy as np

from . import diffusion
from .errors import ParameterError, TrainingError
from .nn import AdamState, GradientSet, Mlp, apply_update, soft_update

log = logging.getLogger(__name__)

SAME_STATE = "same_state"
NEXT_STATE = "next_state"
NO_BOOTSTRAP = "none"
BOOTSTRAPS = (SAME_STATE, NEXT_STATE, NO_BOOTSTRAP)


@dataclass(frozen=True)
class AgentConfig:
    diffusion_steps: int = 5
    beta_min: float = 0.1
    beta_max: float = 0.5
    schedule: str = "linear"
    batch_size: int = 64
    discount: float = 0.95
    bootstrap: str = SAME_STATE
    eta: float = 0.005
    exploration: float = 0.1
    exploration_final: float = 0.01
    actor_lr: float = 1e-4
    critic_lr: float = 3e-4
    buffer_capacity: int = 10_000
    hidden: tuple = (64, 64)
    episodes: int = 200
    steps_per_episode: int = 16
    updates_per_step: int = 1
    box_penalty: float = 1.0
    box_margin: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.diffusion_steps < 1:
            raise ParameterError("diffusion_steps must be >= 1")
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")
        if not 0.0 <= self.discount <= 1.0:
            raise ParameterError("discount must lie in [0, 1]")
        if not 0.0 < self.eta <= 1.0:
            raise ParameterError("eta must lie in (0, 1]")
        if self.exploration < 0 or self.exploration_final < 0:
            raise ParameterError("exploration scales must be non-negative")
        if self.bootstrap not in BOOTSTRAPS:
            raise ParameterError(f"bootstrap must be one of {BOOTSTRAPS}")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise ParameterError("learning rates must be positive")
        if self.buffer_capacity < self.batch_size:
            raise ParameterError("buffer_capacity must be at least batch_size")
        if self.episodes < 0 or self.steps_per_episode < 1 or self.updates_per_step < 0:
            raise ParameterError("episodes >= 0, steps_per_episode >= 1, updates_per_step >= 0")
        if self.box_penalty < 0 or self.box_margin < 0:
            raise ParameterError("box_penalty and box_margin must be non-negative")
        if any(h < 1 for h in self.hidden):
            raise ParameterError("hidden widths must be >= 1")

    def make_schedule(self) -> diffusion.DiffusionSchedule:
        return diffusion.make_schedule(self.diffusion_steps, self.beta_min, self.beta_max,
                                       self.schedule)

    def replace(self, **changes) -> "AgentConfig":
        kwargs = {f.name: getattr(self, f.name) for f in fields(self)}
        kwargs.update(changes)
        return AgentConfig(**kwargs)


class ReplayBuffer:
    """Bounded FIFO of ``(state, action, reward, next_state)`` records."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ParameterError("capacity must be >= 1")
        self.capacity = int(capacity)
        self._items = deque(maxlen=self.capacity)

    def __len__(self) -> int:
        return len(self._items)

    def add(self, state, action, reward: float, next_state=None) -> None:
        state = np.asarray(state, dtype=float)
        next_state = state if next_state is None else np.asarray(next_state, dtype=float)
        self._items.append((state, np.asarray(action, dtype=float), float(reward), next_state))

    def records(self) -> list:
        return list(self._items)

    def sample(self, n: int, rng: np.random.Generator) -> tuple:
        if n > len(self._items):
            raise ParameterError(f"cannot draw {n} records from a buffer of {len(self._items)}")
        idx = rng.choice(len(self._items), size=n, replace=False)
        batch = [self._items[i] for i in idx]
        return (np.stack([b[0] for b in batch]), np.stack([b[1] for b in batch]),
                np.array([b[2] for b in batch]), np.stack([b[3] for b in batch]))


def time_features(t: int, steps: int, batch: int) -> np.ndarray:
    """One-hot encoding of the diffusion step."""
    out = np.zeros((batch, steps))
    out[:, t - 1] = 1.0
    return out


@dataclass
class ChainTape:
    schedule: diffusion.DiffusionSchedule
    states: np.ndarray
    inputs: list
    tapes: list
    pre_clip: np.ndarray
    clip: tuple | None


def policy_forward(actor: Mlp, sched: diffusion.DiffusionSchedule, states, y_T, zs,
                   clip: tuple | None = (0.0, 1.0)) -> tuple:
    """Batched reverse chain with given noises.

    ``y_T`` has shape ``(B, d)``; ``zs[k]`` is the noise injected at step
    ``T - k`` (so ``zs`` has ``T - 1`` entries). Returns the action batch and
    the tape needed by :func:`policy_backward`.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    y = np.atleast_2d(np.asarray(y_T, dtype=float))
    n_steps = sched.steps
    if len(zs) != n_steps - 1:
        raise ParameterError(f"need {n_steps - 1} injected noises, got {len(zs)}")
    batch = y.shape[0]
    inputs, tapes = [], []
    for k, t in enumerate(range(n_steps, 0, -1)):
        x = np.concatenate([y, states, time_features(t, n_steps, batch)], axis=1)
        eps_hat, tape = actor.forward(x, cache=True)
        inputs.append(x)
        tapes.append(tape)
        c_in, c_eps, c_z = diffusion.reverse_coefficients(sched, t)
        y = c_in * y - c_eps * eps_hat
        if t > 1:
            y = y + c_z * zs[k]
    out = y if clip is None else np.clip(y, clip[0], clip[1])
    return out, ChainTape(sched, states, inputs, tapes, y, clip)


def policy_backward(actor: Mlp, tape: ChainTape, upstream,
                    straight_through: bool = False) -> GradientSet:
    """Actor parameter gradient of ``sum(action * upstream)`` through the chain.

    The clip has zero derivative outside the box. With ``straight_through`` the
    upstream gradient passes the clip unchanged instead, so a chain whose raw
    output has left the box can still be pulled back.
    """
    g = np.asarray(upstream, dtype=float)
    if tape.clip is not None and not straight_through:
        inside = (tape.pre_clip >= tape.clip[0]) & (tape.pre_clip <= tape.clip[1])
        g = g * inside
    d = g.shape[1]
    total = GradientSet.zeros_like(actor)
    n_steps = tape.schedule.steps
    for k in range(n_steps - 1, -1, -1):
        t = n_steps - k
        c_in, c_eps, _ = diffusion.reverse_coefficients(tape.schedule, t)
        grads, g_in = actor.backward(tape.inputs[k], -c_eps * g, tape.tapes[k])
        total = total + grads
        g = c_in * g + g_in[:, :d]
    return total


def draw_chain_noise(rng: np.random.Generator, steps: int, batch: int, dim: int) -> tuple:
    y_T = rng.standard_normal((batch, dim))
    zs = [rng.standard_normal((batch, dim)) for _ in range(steps - 1)]
    return y_T, zs


class Agent:
    def __init__(self, state_dim: int, action_dim: int, config: AgentConfig = AgentConfig()):
        if state_dim < 1 or action_dim < 1:
            raise ParameterError("state and action dimensions must be >= 1")
        self.config = config
        self.state_dim = int(state_dim)
        self.action_dim = int(action_dim)
        self.schedule = config.make_schedule()
        self.rng = np.random.default_rng(config.seed)
        init_rng = np.random.default_rng([config.seed, 1])
        actor_in = action_dim + state_dim + config.diffusion_steps
        self.actor = Mlp.init([actor_in, *config.hidden, action_dim], init_rng, out_scale=0.1)
        self.critic = Mlp.init([state_dim + action_dim, *config.hidden, 1], init_rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = AdamState()
        self.critic_opt = AdamState()
        self.exploration = config.exploration
        self.updates = 0

    def _states(self, states) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        if states.shape[1] != self.state_dim:
            raise ParameterError(f"state width {states.shape[1]} != {self.state_dim}")
        return states

    def sample_actions(self, states, rng: np.random.Generator, target: bool = False,
                       clip: tuple | None = (0.0, 1.0)):
        states = self._states(states)
        y_T, zs = draw_chain_noise(rng, self.schedule.steps, states.shape[0], self.action_dim)
        net = self.actor_target if target else self.actor
        actions, _ = policy_forward(net, self.schedule, states, y_T, zs, clip)
        return actions

    def act(self, state, explore: bool = False, rng: np.random.Generator | None = None):
        """Sampled action in ``[0, 1]^d``.

        Exploration noise is added to the raw chain output before the clamp, so
        a policy that has committed to a face of the box stays on it under
        small noise.
        """
        rng = self.rng if rng is None else rng
        action = self.sample_actions(state, rng, clip=None)[0]
        if explore and self.exploration > 0:
            action = action + self.exploration * rng.standard_normal(self.action_dim)
        return np.clip(action, 0.0, 1.0)

    def q_values(self, states, actions, target: bool = False) -> np.ndarray:
        net = self.critic_target if target else self.critic
        x = np.concatenate([self._states(states), np.atleast_2d(actions)], axis=1)
        return net.forward(x)[:, 0]

    def train_step(self, buffer: ReplayBuffer) -> tuple:
        """One critic and one actor update.

        Returns ``(critic_loss, actor_objective, updated)``; when the buffer
        holds fewer than ``batch_size`` records nothing changes and
        ``updated`` is ``False``.
        """
        cfg = self.config
        if len(buffer) < cfg.batch_size:
            return math.nan, math.nan, False
        e, a, r, e_next = buffer.sample(cfg.batch_size, self.rng)
        n = e.shape[0]

        if cfg.bootstrap == NO_BOOTSTRAP or cfg.discount == 0.0:
            z = r
        else:
            e_boot = e if cfg.bootstrap == SAME_STATE else e_next
            a_boot = self.sample_actions(e_boot, self.rng, target=True)
            z = r + cfg.discount * self.q_values(e_boot, a_boot, target=True)

        x = np.concatenate([e, a], axis=1)
        q, tape = self.critic.forward(x, cache=True)
        err = q[:, 0] - z
        critic_loss = float(np.mean(err ** 2))
        grads, _ = self.critic.backward(x, (2.0 / n) * err[:, None], tape)
        apply_update(self.critic, grads, self.critic_opt, cfg.critic_lr)

        y_T, zs = draw_chain_noise(self.rng, self.schedule.steps, n, self.action_dim)
        actions, chain = policy_forward(self.actor, self.schedule, e, y_T, zs)
        xa = np.concatenate([e, actions], axis=1)
        qa, qtape = self.critic.forward(xa, cache=True)
        actor_objective = float(np.mean(qa))
        _, dq_dx = self.critic.backward(xa, np.full((n, 1), 1.0 / n), qtape)
        # descend the negated objective; raw chain output that strays more than
        # box_margin outside the box is pulled back toward it
        raw = chain.pre_clip
        upstream = -dq_dx[:, self.state_dim:]
        m = cfg.box_margin
        stray = raw - np.clip(raw, -m, 1.0 + m)
        upstream += (2.0 * cfg.box_penalty / n) * stray
        actor_grads = policy_backward(self.actor, chain, upstream, straight_through=True)
        apply_update(self.actor, actor_grads, self.actor_opt, cfg.actor_lr)

        soft_update(self.critic_target, self.critic, cfg.eta)
        soft_update(self.actor_target, self.actor, cfg.eta)
        self.updates += 1
        return critic_loss, actor_objective, True


@dataclass
class LearningCurve:
    episodes: list = field(default_factory=list)
    mean_reward: list = field(default_factory=list)
    std_reward: list = field(default_factory=list)
    step_rewards: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.episodes)

    def final_fraction_mean(self, fraction: float = 0.2) -> float:
        if not self.episodes:
            raise ParameterError("empty learning curve")
        k = max(1, int(round(fraction * len(self.episodes))))
        return float(np.mean(self.mean_reward[-k:]))

    def to_csv(self) -> str:
        rows = ["episode,mean_reward,std"]
        rows += [f"{e},{m!r},{s!r}" for e, m, s in
                 zip(self.episodes, self.mean_reward, self.std_reward)]
        return "\n".join(rows) + "\n"


def train(agent: Agent, env, config: AgentConfig | None = None) -> LearningCurve:
    """Run episodes of act / step / store / update and record per-episode rewards.

    ``env`` must offer ``reset()``, ``step(action) -> (outcome, done)`` and
    ``encode(state)``. The state at each episode start is kept in
    ``curve.snapshots`` for later oracle comparisons.
    """
    cfg = agent.config if config is None else config
    buffer = ReplayBuffer(cfg.buffer_capacity)
    curve = LearningCurve()
    total = cfg.episodes * cfg.steps_per_episode
    done_steps = 0
    for ep in range(cfg.episodes):
        state = env.reset()
        curve.snapshots.append(state)
        e = env.encode(state)
        rewards = []
        for _ in range(cfg.steps_per_episode):
            frac = done_steps / max(1, total - 1)
            agent.exploration = cfg.exploration + frac * (cfg.exploration_final - cfg.exploration)
            action = agent.act(e, explore=True)
            try:
                outcome, _ = env.step(action)
            except Exception as exc:
                raise TrainingError(
                    f"environment failed at episode {ep}, step {len(rewards)}: {exc}") from exc
            e_next = env.encode(outcome.state)
            buffer.add(e, action, outcome.reward, e_next)
            rewards.append(outcome.reward)
            e = e_next
            done_steps += 1
            for _ in range(cfg.updates_per_step):
                agent.train_step(buffer)
        curve.episodes.append(ep)
        curve.mean_reward.append(float(np.mean(rewards)))
        curve.std_reward.append(float(np.std(rewards)))
        curve.step_rewards.append(rewards)
        log.debug("episode %d mean reward %.6f", ep, curve.mean_reward[-1])
    return curve


def evaluate(agent: Agent, env, episodes: int, seed=None, steps: int | None = None) -> tuple:
    """Greedy rollouts; returns ``(mean, std)`` of per-step reward."""
    if episodes < 1:
        raise ParameterError("episodes must be >= 1")
    steps = agent.config.steps_per_episode if steps is None else steps
    rng = np.random.default_rng(seed)
    rewards = []
    for _ in range(episodes):
        state = env.reset()
        e = env.encode(state)
        for _ in range(steps):
            outcome, _ = env.step(agent.act(e, explore=False, rng=rng))
            rewards.append(outcome.reward)
            e = env.encode(outcome.state)
    return float(np.mean(rewards)), float(np.std(rewards))
