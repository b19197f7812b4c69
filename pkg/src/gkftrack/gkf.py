"""Recurrent Kalman-gain filter.

Three GRUs carry running summaries of the process-noise, state-error and
innovation covariances. The network reads difference features of the track
and emits the gain matrix used in the usual state correction
``x = x_prior + K (y - h(x_prior))``. The motion model only supplies f and h;
the filter never needs noise covariances or Jacobians of h.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .geometry import wrap_angle
from .neural import autodiff as ad
from .neural.autodiff import Tape, Var
from .neural.layers import dense_forward, dense_shapes, gru_forward, gru_shapes, uniform_init


class NonFiniteGainError(FloatingPointError):
    pass


@dataclass(frozen=True)
class GainNetConfig:
    state_dim: int
    obs_dim: int = 7
    hidden_q: int | None = None
    hidden_p: int | None = None
    hidden_s: int | None = None
    bridge_dim: int | None = None
    head_dim: int | None = None
    state_scale: tuple | None = None
    obs_scale: tuple | None = None

    def resolved(self) -> "GainNetConfig":
        m, n = self.state_dim, self.obs_dim
        hq = self.hidden_q or min(2 * m * m, 200)
        return replace(
            self,
            hidden_q=hq,
            hidden_p=self.hidden_p or hq,
            hidden_s=self.hidden_s or min(2 * n * n, 200),
            bridge_dim=self.bridge_dim or n * n,
            head_dim=self.head_dim or 2 * m * n,
            state_scale=tuple(self.state_scale) if self.state_scale else None,
            obs_scale=tuple(self.obs_scale) if self.obs_scale else None,
        )

    def arch(self) -> dict:
        d = asdict(self.resolved())
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}

    def param_shapes(self) -> dict[str, tuple]:
        c = self.resolved()
        m, n = c.state_dim, c.obs_dim
        blocks = [
            ("embed_q", dense_shapes(2 * m, c.hidden_q)),
            ("gru_q", gru_shapes(c.hidden_q, c.hidden_q)),
            ("embed_p", dense_shapes(c.hidden_q + m, c.hidden_p)),
            ("gru_p", gru_shapes(c.hidden_p, c.hidden_p)),
            ("bridge_ps", dense_shapes(c.hidden_p, c.bridge_dim)),
            ("embed_s", dense_shapes(c.bridge_dim + 2 * n, c.hidden_s)),
            ("gru_s", gru_shapes(c.hidden_s, c.hidden_s)),
            ("head_1", dense_shapes(c.hidden_p + c.hidden_s, c.head_dim)),
            ("head_2", dense_shapes(c.head_dim, m * n)),
        ]
        return {f"{blk}.{k}": s for blk, shapes in blocks for k, s in shapes.items()}


class GainNetwork:
    """Parameters of the gain network (one set shared by every object class)."""

    def __init__(self, config: GainNetConfig, params: dict[str, np.ndarray]):
        self.config = config.resolved()
        shapes = self.config.param_shapes()
        if list(params) != list(shapes):
            raise ValueError("parameter names do not match the architecture")
        for k, s in shapes.items():
            if params[k].shape != s:
                raise ValueError(f"parameter {k} has shape {params[k].shape}, expected {s}")
        self.params = params
        self._const = None

    @classmethod
    def initialize(cls, config: GainNetConfig, seed: int = 0, gain=None) -> "GainNetwork":
        """Uniform fan-in init.

        With ``gain`` (state_dim x obs_dim) the output layer starts at zero
        weights and bias ``gain``, so the untrained filter is a constant-gain
        filter rather than a random one.
        """
        rng = np.random.default_rng(seed)
        net = cls(config, {k: uniform_init(s, rng) for k, s in config.param_shapes().items()})
        if gain is not None:
            gain = np.asarray(gain, dtype=float)
            if gain.shape != (net.config.state_dim, net.config.obs_dim):
                raise ValueError(f"initial gain has shape {gain.shape}")
            net.params["head_2.b"] = gain.ravel().copy()
            net.params["head_2.W"] = np.zeros_like(net.params["head_2.W"])
        return net

    @classmethod
    def zeros(cls, config: GainNetConfig) -> "GainNetwork":
        return cls(config, {k: np.zeros(s) for k, s in config.param_shapes().items()})

    def copy(self) -> "GainNetwork":
        return GainNetwork(self.config, {k: v.copy() for k, v in self.params.items()})

    def bind(self, tape: Tape | None = None) -> dict[str, Var]:
        """Parameter Vars: watched on ``tape`` or cached constants for inference."""
        if tape is not None:
            return tape.watch_all(self.params)
        if self._const is None:
            self._const = {k: Var(v) for k, v in self.params.items()}
        return self._const

    def invalidate(self):
        """Call after mutating ``params`` in place."""
        self._const = None

    def __eq__(self, other):
        return (isinstance(other, GainNetwork) and self.config == other.config
                and all(np.array_equal(self.params[k], other.params[k]) for k in self.params))


@dataclass
class TrackHidden:
    h_q: Var
    h_p: Var
    h_s: Var
    last_posterior: Var | None = None
    last_prior: Var | None = None
    prev_posterior: Var | None = None
    last_observation: Var | None = None

    @classmethod
    def reset(cls, config: GainNetConfig, seed_state=None) -> "TrackHidden":
        c = config.resolved()
        return cls(
            Var(np.zeros(c.hidden_q)), Var(np.zeros(c.hidden_p)), Var(np.zeros(c.hidden_s)),
            last_posterior=None if seed_state is None else ad.const(np.asarray(seed_state, float)),
        )


@dataclass
class GkfFeatures:
    dx_update: Var
    dx_evolution: Var
    dy_obs: Var
    dy_innovation: Var

    def values(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k).value for k in ("dx_update", "dx_evolution", "dy_obs", "dy_innovation")}


def _diff(a: Var | None, b: Var | None, dim: int, wrap_index) -> Var:
    if a is None or b is None:
        return Var(np.zeros(dim))
    return ad.wrap_at(a - b, wrap_index)


def compute_features(hidden: TrackHidden, prior, y, model) -> GkfFeatures:
    """Difference features at lag one (the current posterior does not exist yet)."""
    m, n = model.state_dim, model.obs_dim
    prior = ad.const(prior)
    y = ad.const(y)
    hk = getattr(model, "heading_index", None)
    ok = getattr(model, "obs_heading_index", None)
    y_pred = observe(model, prior)
    return GkfFeatures(
        dx_update=_diff(hidden.last_posterior, hidden.last_prior, m, hk),
        dx_evolution=_diff(hidden.last_posterior, hidden.prev_posterior, m, hk),
        dy_obs=_diff(y, hidden.last_observation, n, ok),
        dy_innovation=ad.wrap_at(y - y_pred, ok),
    )


def selection_gain(model, value: float) -> np.ndarray:
    """``value * H^T``: each observed component corrects its own state entry."""
    return value * model.H().T


def observe(model, x: Var) -> Var:
    idx = getattr(model, "obs_indices", None)
    if idx is not None:
        return ad.take(x, idx)
    return ad.matvec(model.H(), x)


def _scaled(v: Var, scale) -> Var:
    if scale is None:
        return v
    return ad.mul(v, 1.0 / np.asarray(scale, dtype=float))


def compute_gain(net: GainNetwork, hidden: TrackHidden, feats: GkfFeatures, pv: dict | None = None):
    """Returns ``(K, hidden')`` where K has shape (state_dim, obs_dim)."""
    c = net.config
    p = pv if pv is not None else net.bind()
    dxu = _scaled(feats.dx_update, c.state_scale)
    dxe = _scaled(feats.dx_evolution, c.state_scale)
    dyo = _scaled(feats.dy_obs, c.obs_scale)
    dyi = _scaled(feats.dy_innovation, c.obs_scale)

    def gru(prefix, h, x):
        return gru_forward({k: p[f"{prefix}.{k}"] for k in ("W_z", "W_r", "W_c", "U_z", "U_r", "U_c", "b_z", "b_r", "b_c")}, h, x)

    def dense(prefix, x, act):
        return dense_forward(p[f"{prefix}.W"], p[f"{prefix}.b"], x, act)

    q_in = dense("embed_q", ad.concat([dxu, dxe]), "relu")
    h_q = gru("gru_q", hidden.h_q, q_in)
    p_in = dense("embed_p", ad.concat([h_q, dxe]), "relu")
    h_p = gru("gru_p", hidden.h_p, p_in)
    bridge = dense("bridge_ps", h_p, "relu")
    s_in = dense("embed_s", ad.concat([bridge, dyo, dyi]), "relu")
    h_s = gru("gru_s", hidden.h_s, s_in)
    k_hidden = dense("head_1", ad.concat([h_p, h_s]), "relu")
    K = ad.reshape(dense("head_2", k_hidden, "identity"), (c.state_dim, c.obs_dim))
    if not np.all(np.isfinite(K.value)):
        raise NonFiniteGainError(f"non-finite gain; features={feats.values()}")
    return K, replace(hidden, h_q=h_q, h_p=h_p, h_s=h_s)


def flip_observation(y: np.ndarray, y_pred: np.ndarray, model) -> np.ndarray:
    """Turn the observed heading by pi when it disagrees with the prediction by over pi/2."""
    k = getattr(model, "obs_heading_index", None)
    if k is None:
        return y
    if abs(wrap_angle(y[k] - y_pred[k])) > 0.5 * math.pi:
        y = y.copy()
        y[k] = wrap_angle(y[k] + math.pi)
    return y


def gkf_predict(hidden: TrackHidden, model, dt: float) -> Var:
    if hidden.last_posterior is None:
        raise ValueError("track has no posterior to predict from")
    return ad.linearized(hidden.last_posterior, lambda x: model.f(x, dt), lambda x: model.F(x, dt))


def gkf_update(net: GainNetwork, hidden: TrackHidden, prior, y, model,
               flip_heading: bool = False, pv: dict | None = None):
    """Correct ``prior`` with observation ``y``; returns ``(posterior, hidden')``."""
    prior = ad.const(prior)
    y = np.asarray(y, dtype=float)
    if flip_heading:
        y = flip_observation(y, observe(model, Var(prior.value)).value, model)
    feats = compute_features(hidden, prior, y, model)
    K, new_hidden = compute_gain(net, hidden, feats, pv)
    posterior = ad.wrap_at(prior + ad.matvec(K, feats.dy_innovation), getattr(model, "heading_index", None))
    new_hidden = replace(
        new_hidden,
        last_prior=prior,
        prev_posterior=hidden.last_posterior,
        last_posterior=posterior,
        last_observation=Var(y),
    )
    return posterior, new_hidden


def gkf_coast(hidden: TrackHidden, prior) -> tuple[Var, TrackHidden]:
    prior = ad.const(prior)
    return prior, replace(hidden, last_prior=prior, prev_posterior=hidden.last_posterior, last_posterior=prior)


def gkf_step(net: GainNetwork, hidden: TrackHidden, y, model, dt: float,
             flip_heading: bool = False, pv: dict | None = None):
    prior = gkf_predict(hidden, model, dt)
    if y is None:
        return gkf_coast(hidden, prior)
    return gkf_update(net, hidden, prior, y, model, flip_heading, pv)


def run_sequence(net: GainNetwork, model, x0, observations: Sequence, dt: float = 1.0,
                 tape: Tape | None = None, pv: dict | None = None) -> list[Var]:
    """Filter one observation sequence from initial state ``x0``; returns the posteriors."""
    if pv is None:
        pv = net.bind(tape)
    hidden = TrackHidden.reset(net.config, seed_state=x0)
    out = []
    for y in observations:
        post, hidden = gkf_step(net, hidden, y, model, dt, pv=pv)
        out.append(post)
    return out
