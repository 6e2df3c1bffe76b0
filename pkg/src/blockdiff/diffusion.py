"""Noise schedules, analog structure encoding, and diffusion transitions.

Structure is diffused in analog form: edges map to +1 and non-edges to -1 so
Gaussian corruption applies directly, and decoding thresholds at zero.  The
structure channel lives on symmetric zero-diagonal matrices throughout; all
structure noise is symmetrized at the source, so every transition maps that
class to itself.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import ContractViolation, NumericFault
from .graphs import Graph

SCHEDULE_KINDS = ("linear", "cosine")

# Reference endpoints of the 1000-step linear beta ramp; shorter schedules
# scale both ends by 1000/T so total corruption stays near-complete.
_LINEAR_BETA_START = 1e-4
_LINEAR_BETA_END = 0.02
_LINEAR_REFERENCE_T = 1000
_COSINE_S = 0.008


class NoiseSchedule:
    """Per-step beta/alpha tables and cumulative gamma(t) = prod alpha_s."""

    __slots__ = ("kind", "T", "beta", "alpha", "gamma")

    def __init__(self, kind: str, beta: np.ndarray):
        T = beta.shape[0] - 1
        if T < 1:
            raise ContractViolation("schedule needs at least one step")
        if np.any(beta[1:] <= 0) or np.any(beta[1:] >= 1):
            raise ContractViolation("betas must lie strictly inside (0, 1)")
        alpha = 1.0 - beta
        gamma = np.empty(T + 1)
        gamma[0] = 1.0
        gamma[1:] = np.cumprod(alpha[1:])
        if np.any(np.diff(gamma) >= 0):
            raise ContractViolation("gamma must be strictly decreasing")
        for arr in (beta, alpha, gamma):
            arr.setflags(write=False)
        self.kind = kind
        self.T = T
        self.beta = beta
        self.alpha = alpha
        self.gamma = gamma

    def __repr__(self):
        return f"NoiseSchedule({self.kind!r}, T={self.T}, gamma_T={self.gamma[-1]:.3e})"


def make_schedule(kind: str, T: int) -> NoiseSchedule:
    """Build a linear or cosine schedule with near-total terminal corruption."""
    if T < 1:
        raise ContractViolation(f"T must be >= 1, got {T}")
    if kind not in SCHEDULE_KINDS:
        raise ContractViolation(f"unknown schedule kind {kind!r}; use one of {SCHEDULE_KINDS}")
    beta = np.zeros(T + 1)
    if kind == "linear":
        s = _LINEAR_REFERENCE_T / T
        beta[1:] = np.linspace(_LINEAR_BETA_START * s, _LINEAR_BETA_END * s, T)
        beta[1:] = np.clip(beta[1:], None, 0.999)
    else:
        ts = np.arange(T + 1) / T
        f = np.cos((ts + _COSINE_S) / (1.0 + _COSINE_S) * np.pi / 2.0) ** 2
        bar = f / f[0]
        beta[1:] = np.clip(1.0 - bar[1:] / bar[:-1], 1e-6, 0.999)
    return NoiseSchedule(kind, beta)


class StateNoise(NamedTuple):
    """Gaussian noise for one state: symmetrized structure part plus features."""

    a: np.ndarray
    x: np.ndarray


def sample_state_noise(rng: np.random.Generator, n: int, feature_dim: int) -> StateNoise:
    """Draw i.i.d. standard Gaussian noise, structure part symmetrized.

    The structure matrix is (E + E^T)/sqrt(2) with a zero diagonal, which
    keeps unit variance off the diagonal.
    """
    e = rng.standard_normal((n, n))
    a = (e + e.T) / np.sqrt(2.0)
    np.fill_diagonal(a, 0.0)
    x = rng.standard_normal((n, feature_dim)) if feature_dim > 0 else np.zeros((n, 0))
    return StateNoise(a, x)


class AnalogGraphState:
    """Continuous structure/feature state of one block at diffusion step t."""

    __slots__ = ("a", "x", "t")

    def __init__(self, a: np.ndarray, x: np.ndarray, t: int):
        a = np.asarray(a, dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ContractViolation(f"structure state must be square, got {a.shape}")
        if x.ndim != 2 or x.shape[0] != a.shape[0]:
            raise ContractViolation(
                f"feature state must have {a.shape[0]} rows, got {x.shape}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(x))):
            raise NumericFault("analog state contains non-finite values")
        if np.any(np.diag(a) != 0.0):
            raise ContractViolation("structure state must have a zero diagonal")
        if not np.array_equal(a, a.T):
            raise ContractViolation("structure state must be symmetric")
        self.a = a
        self.x = x
        self.t = int(t)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.x.shape[1]

    def __repr__(self):
        return f"AnalogGraphState(n={self.n}, F={self.feature_dim}, t={self.t})"


def encode_analog(g: Graph) -> AnalogGraphState:
    """Edges to +1, non-edges to -1 (off-diagonal), features unchanged."""
    a = 2.0 * g.adjacency.astype(np.float64) - 1.0
    np.fill_diagonal(a, 0.0)
    return AnalogGraphState(a, g.features.copy(), 0)


def decode_analog(state: AnalogGraphState) -> Graph:
    """Threshold the (symmetrized) structure channel at zero; ties to non-edge."""
    sym = (state.a + state.a.T) / 2.0
    adj = (sym > 0.0).astype(np.int8)
    np.fill_diagonal(adj, 0)
    return Graph(adj, state.x.copy())


def _check_t(t: int, T: int) -> None:
    if not 1 <= t <= T:
        raise ContractViolation(f"step t={t} outside [1, {T}]")


def forward_corrupt(state0: AnalogGraphState, t: int, noise: StateNoise,
                    schedule: NoiseSchedule) -> AnalogGraphState:
    """Closed-form forward marginal: sqrt(gamma_t) x0 + sqrt(1 - gamma_t) eps."""
    _check_t(t, schedule.T)
    if noise.a.shape != state0.a.shape or noise.x.shape != state0.x.shape:
        raise ContractViolation(
            f"noise shapes {noise.a.shape}/{noise.x.shape} do not match state "
            f"{state0.a.shape}/{state0.x.shape}")
    g = schedule.gamma[t]
    c0 = np.sqrt(g)
    c1 = np.sqrt(1.0 - g)
    a = c0 * state0.a + c1 * noise.a
    x = c0 * state0.x + c1 * noise.x
    return AnalogGraphState(a, x, t)


def ddpm_step(state_t: AnalogGraphState, pred_a0: np.ndarray, pred_x0: np.ndarray,
              t: int, schedule: NoiseSchedule, noise: StateNoise | None) -> AnalogGraphState:
    """One stochastic reverse step using the clean-state posterior.

    Posterior mean mixes the predicted clean state and the current state;
    variance is beta_t (1 - gamma_{t-1}) / (1 - gamma_t).  The terminal step
    t = 1 returns the mean with no noise.
    """
    _check_t(t, schedule.T)
    g_t = schedule.gamma[t]
    g_prev = schedule.gamma[t - 1]
    beta_t = schedule.beta[t]
    alpha_t = schedule.alpha[t]
    denom = 1.0 - g_t
    c_pred = np.sqrt(g_prev) * beta_t / denom
    c_curr = np.sqrt(alpha_t) * (1.0 - g_prev) / denom
    mean_a = c_pred * pred_a0 + c_curr * state_t.a
    mean_x = c_pred * pred_x0 + c_curr * state_t.x
    if t == 1:
        return AnalogGraphState(mean_a, mean_x, 0)
    if noise is None:
        raise ContractViolation("ddpm_step needs noise for t > 1")
    sigma = np.sqrt(beta_t * (1.0 - g_prev) / denom)
    return AnalogGraphState(mean_a + sigma * noise.a, mean_x + sigma * noise.x, t - 1)


def ddim_step(state_t: AnalogGraphState, pred_a0: np.ndarray, pred_x0: np.ndarray,
              t: int, t_next: int, schedule: NoiseSchedule) -> AnalogGraphState:
    """Deterministic reverse jump t -> t_next via the implied noise estimate."""
    _check_t(t, schedule.T)
    if not 0 <= t_next < t:
        raise ContractViolation(f"t_next={t_next} must satisfy 0 <= t_next < t={t}")
    g_t = schedule.gamma[t]
    g_next = schedule.gamma[t_next]
    if 1.0 - g_t <= 0.0:
        raise NumericFault(f"degenerate schedule: gamma({t}) = 1 with t > 0")
    scale = 1.0 / np.sqrt(1.0 - g_t)
    eps_a = (state_t.a - np.sqrt(g_t) * pred_a0) * scale
    eps_x = (state_t.x - np.sqrt(g_t) * pred_x0) * scale
    a = np.sqrt(g_next) * pred_a0 + np.sqrt(1.0 - g_next) * eps_a
    x = np.sqrt(g_next) * pred_x0 + np.sqrt(1.0 - g_next) * eps_x
    return AnalogGraphState(a, x, t_next)
