# ppo_agent — small nets, clipped steps, never stops exploring

"""
PPO actor-critic for a bounded continuous action.

State is squashed to [-1, 1] by the X box, the action mean comes out of tanh in the same
normalized units and gets scaled to U. One state-independent log-std, clamped from below
after every optimizer step so the exploration std can never collapse.

Everything runs in float64 on CPU. Action noise comes from the caller's numpy rng so a
seeded run replays exactly.
"""

import copy
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import torch
from torch import nn
from torch.distributions import Normal

from src.cisrl.core.errors import DimensionMismatchError, UpdateAbortedError
from src.cisrl.core.geometry import BoxSet
from src.cisrl.core.models import Hyper

log = logging.getLogger(__name__)

DTYPE = torch.float64


@dataclass(frozen=True, eq=False)
class Transition:
    """(x, u, r, x_next) plus what PPO needs to recompute the log-prob of u."""
    x: np.ndarray
    u: np.ndarray
    r: float
    x_next: np.ndarray
    logprob: float
    done: bool
    a_raw: np.ndarray  # pre-clip action in normalized units

    def __post_init__(self):
        if not math.isfinite(self.r):
            raise ValueError(f"non-finite reward {self.r}")


class Action(NamedTuple):
    u: np.ndarray
    logprob: float
    a_raw: np.ndarray


class Losses(NamedTuple):
    policy: float
    value: float
    kl: float


class LossTerms(NamedTuple):
    total: torch.Tensor
    policy: torch.Tensor
    value: torch.Tensor
    kl: torch.Tensor


class MLP(nn.Module):
    """in -> h -> h -> out, tanh between."""

    def __init__(self, n_in: int, hidden: int, n_out: int):
        super().__init__()
        self.layers = nn.Sequential(
            nn.Linear(n_in, hidden, dtype=DTYPE),
            nn.Tanh(),
            nn.Linear(hidden, hidden, dtype=DTYPE),
            nn.Tanh(),
            nn.Linear(hidden, n_out, dtype=DTYPE),
        )

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        return self.layers(z)


class ActorCritic(nn.Module):
    def __init__(self, n: int, m: int, hidden: int, std_init: float):
        super().__init__()
        self.policy = MLP(n, hidden, m)
        self.value = MLP(n, hidden, 1)
        self.log_std = nn.Parameter(torch.full((m,), math.log(std_init), dtype=DTYPE))

    def layer_sizes(self) -> list[int]:
        lin = [mod for mod in self.policy.layers if isinstance(mod, nn.Linear)]
        return [lin[0].in_features] + [mod.out_features for mod in lin]


def _init_uniform(net: nn.Module, seed: int) -> None:
    """uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias, from one seeded stream."""
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for mod in net.modules():
            if isinstance(mod, nn.Linear):
                bound = 1.0 / math.sqrt(mod.in_features)
                for t in (mod.weight, mod.bias):
                    t.copy_((torch.rand(t.shape, generator=g, dtype=DTYPE) * 2.0 - 1.0) * bound)


def _episode_key(ep: list[Transition]) -> bytes:
    return np.concatenate([np.r_[t.x, t.a_raw, t.r, t.logprob, t.done] for t in ep]).tobytes()


def returns_and_advantages(episode: list[Transition], gamma: float, lam: float, value_fn,
                           reward_scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """
    Discounted returns G and GAE advantages A for one ordered episode.
    Bootstrap from value(x_next) unless done, in which case 0.
    """
    if not episode:
        raise ValueError("empty episode")
    K = len(episode)
    X = np.array([t.x for t in episode], dtype=float)
    Xn = np.array([t.x_next for t in episode], dtype=float)
    v = np.asarray(value_fn(X), dtype=float).reshape(K)
    vn = np.asarray(value_fn(Xn), dtype=float).reshape(K)
    r = np.array([t.r for t in episode], dtype=float) * reward_scale
    done = np.array([t.done for t in episode], dtype=bool)
    boot = np.where(done, 0.0, vn)

    G = np.empty(K)
    A = np.empty(K)
    g_next = 0.0
    a_next = 0.0
    for k in range(K - 1, -1, -1):
        if done[k] or k == K - 1:
            g_next, a_next = boot[k], 0.0
        G[k] = r[k] + gamma * g_next
        delta = r[k] + gamma * boot[k] - v[k]
        A[k] = delta + gamma * lam * a_next
        g_next, a_next = G[k], A[k]
    return G, A


class PPOAgent:
    """Policy + value nets, Adam, and the clipped-surrogate update."""

    def __init__(self, x_box: BoxSet, u_box: BoxSet, hyper: Hyper | None = None, seed: int = 0):
        self.x_box = x_box
        self.u_box = u_box
        self.hyper = hyper or Hyper()
        self.seed = seed
        self.n, self.m = x_box.n, u_box.n
        self.net = ActorCritic(self.n, self.m, self.hyper.hidden, self.hyper.std_init)
        _init_uniform(self.net, seed)
        self.opt = torch.optim.Adam(self.net.parameters(), lr=self.hyper.lr)
        self.updates = 0
        self._x_lo = torch.as_tensor(x_box.lower, dtype=DTYPE)
        self._x_w = torch.as_tensor(x_box.widths, dtype=DTYPE)

    # -- forward pieces --

    def normalize(self, X) -> torch.Tensor:
        X = torch.as_tensor(np.asarray(X, dtype=float), dtype=DTYPE)
        if X.shape[-1] != self.n:
            raise DimensionMismatchError(f"state has dim {X.shape[-1]}, agent expects {self.n}")
        return 2.0 * (X - self._x_lo) / self._x_w - 1.0

    def mean(self, Z: torch.Tensor) -> torch.Tensor:
        return torch.tanh(self.net.policy(Z))

    def std(self) -> torch.Tensor:
        return torch.exp(self.net.log_std)

    def to_input(self, a) -> np.ndarray:
        """normalized action -> physical input, clipped into U."""
        a = np.asarray(a, dtype=float)
        return np.clip(self.u_box.center + self.u_box.half_width * a, self.u_box.lower, self.u_box.upper)

    def value(self, X) -> np.ndarray:
        with torch.no_grad():
            return self.net.value(self.normalize(np.atleast_2d(X))).squeeze(-1).numpy()

    def act(self, x, explore: bool, rng: np.random.Generator | None = None) -> Action:
        """Gaussian around the mean when exploring, the mean itself otherwise. logprob is pre-clip."""
        with torch.no_grad():
            mu = self.mean(self.normalize(np.asarray(x, dtype=float).reshape(1, -1)))[0]
            std = self.std()
            if explore:
                if rng is None:
                    raise ValueError("exploring needs an rng")
                a = mu + std * torch.as_tensor(rng.standard_normal(self.m), dtype=DTYPE)
            else:
                a = mu
            lp = Normal(mu, std).log_prob(a).sum()
        a_np = a.numpy().copy()
        return Action(self.to_input(a_np), float(lp), a_np)

    # -- learning --

    def loss_terms(self, X, a_raw, old_logp, adv, targets) -> LossTerms:
        """Clipped surrogate + value MSE on a flat batch. Differentiable in the net parameters."""
        Z = self.normalize(X)
        a = torch.as_tensor(np.asarray(a_raw, dtype=float), dtype=DTYPE).reshape(-1, self.m)
        old = torch.as_tensor(np.asarray(old_logp, dtype=float), dtype=DTYPE)
        A = torch.as_tensor(np.asarray(adv, dtype=float), dtype=DTYPE)
        G = torch.as_tensor(np.asarray(targets, dtype=float), dtype=DTYPE)

        logp = Normal(self.mean(Z), self.std()).log_prob(a).sum(-1)
        ratio = torch.exp(logp - old)
        clip = self.hyper.clip
        surr = torch.min(ratio * A, torch.clamp(ratio, 1.0 - clip, 1.0 + clip) * A)
        policy_loss = -surr.mean()
        value_loss = ((self.net.value(Z).squeeze(-1) - G) ** 2).mean()
        kl = (old - logp).mean()
        total = policy_loss + self.hyper.value_coef * value_loss
        return LossTerms(total, policy_loss, value_loss, kl)

    def prepare(self, batch: list[list[Transition]]):
        """Flatten episodes, compute returns and pooled-normalized advantages."""
        h = self.hyper
        Gs, As = [], []
        for ep in batch:
            G, A = returns_and_advantages(ep, h.gamma, h.gae_lambda, self.value, h.reward_scale)
            Gs.append(G)
            As.append(A)
        flat = [t for ep in batch for t in ep]
        X = np.array([t.x for t in flat], dtype=float)
        a_raw = np.array([t.a_raw for t in flat], dtype=float).reshape(-1, self.m)
        old = np.array([t.logprob for t in flat], dtype=float)
        G = np.concatenate(Gs)
        A = np.concatenate(As)
        A = A - A.mean()
        sd = A.std()
        if sd > 1e-12:
            A = A / sd
        return X, a_raw, old, A, G

    def update(self, batch: list[list[Transition]], lr: float | None = None,
               epochs: int | None = None) -> Losses:
        """
        epochs_per_update full-batch Adam steps. Non-finite loss restores the weights and raises.

        lr given: a fresh Adam at that rate for this call only (online retraining). The offline
        optimizer and its moment estimates are untouched.
        """
        # canonical episode order: any permutation of the batch gives the same weights
        batch = sorted((ep for ep in batch if ep), key=_episode_key)
        if not batch:
            raise ValueError("empty batch")
        X, a_raw, old, A, G = self.prepare(batch)

        opt = self.opt if lr is None else torch.optim.Adam(self.net.parameters(), lr=lr)
        net_state = copy.deepcopy(self.net.state_dict())
        opt_state = copy.deepcopy(opt.state_dict())
        floor = math.log(self.hyper.std_floor)

        terms = None
        for epoch in range(epochs or self.hyper.epochs_per_update):
            terms = self.loss_terms(X, a_raw, old, A, G)
            if not torch.isfinite(terms.total):
                self.net.load_state_dict(net_state)
                opt.load_state_dict(opt_state)
                log.error(f"non-finite loss at epoch {epoch}, update {self.updates} rolled back")
                raise UpdateAbortedError(f"non-finite loss at epoch {epoch}")
            opt.zero_grad()
            terms.total.backward()
            opt.step()
            with torch.no_grad():
                self.net.log_std.clamp_(min=floor)

        self.updates += 1
        return Losses(float(terms.policy), float(terms.value), float(terms.kl))

    # -- snapshots --

    def clone(self) -> "PPOAgent":
        return copy.deepcopy(self)

    def flat_params(self) -> np.ndarray:
        return nn.utils.parameters_to_vector(self.net.parameters()).detach().numpy().copy()

    def load_flat_params(self, vec) -> None:
        v = torch.as_tensor(np.asarray(vec, dtype=float), dtype=DTYPE)
        expected = sum(p.numel() for p in self.net.parameters())
        if v.numel() != expected:
            raise DimensionMismatchError(f"weight vector has {v.numel()} entries, net needs {expected}")
        with torch.no_grad():
            nn.utils.vector_to_parameters(v, self.net.parameters())
