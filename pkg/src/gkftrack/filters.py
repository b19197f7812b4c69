"""Extended Kalman filter (the linear KF is the special case of a linear model)."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import wrap_angle

JITTER = 1e-9


@dataclass
class FilterState:
    mean: np.ndarray
    cov: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    jittered: bool = False


@dataclass
class PriorState:
    mean: np.ndarray
    cov: np.ndarray
    predicted_obs: np.ndarray
    S: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    jittered: bool = False


def init_state(model, x0, P0=None, Q=None, R=None) -> FilterState:
    return FilterState(
        mean=np.asarray(x0, dtype=float).copy(),
        cov=np.array(model.P0 if P0 is None else P0, dtype=float),
        Q=np.array(model.Q if Q is None else Q, dtype=float),
        R=np.array(model.R if R is None else R, dtype=float),
    )


def _guard_spd(P: np.ndarray) -> tuple[np.ndarray, bool]:
    P = 0.5 * (P + P.T)
    try:
        np.linalg.cholesky(P)
        return P, False
    except np.linalg.LinAlgError:
        return P + JITTER * np.eye(P.shape[0]), True


def ekf_predict(fs: FilterState, model, dt: float) -> PriorState:
    F = model.F(fs.mean, dt)
    mean = model.f(fs.mean, dt)
    cov, jittered = _guard_spd(F @ fs.cov @ F.T + fs.Q)
    H = model.H(mean)
    S = H @ cov @ H.T + fs.R
    return PriorState(mean, cov, model.h(mean), 0.5 * (S + S.T), fs.Q, fs.R, jittered or fs.jittered)


def innovation(y, predicted_obs, model, flip_heading: bool = False) -> np.ndarray:
    """Observation residual with the heading term wrapped.

    With ``flip_heading`` a residual beyond +-pi/2 is treated as a detector
    heading ambiguity and the observed heading is turned by pi first.
    """
    r = np.asarray(y, dtype=float) - predicted_obs
    k = getattr(model, "obs_heading_index", None)
    if k is not None:
        r[k] = wrap_angle(r[k])
        if flip_heading and abs(r[k]) > 0.5 * math.pi:
            r[k] = wrap_angle(r[k] + math.pi)
    return r


def ekf_update(prior: PriorState, y, model, flip_heading: bool = False) -> FilterState:
    H = model.H(prior.mean)
    S = prior.S
    jittered = prior.jittered
    try:
        # K = P H^T S^-1, solved through S (symmetric)
        K = np.linalg.solve(S, H @ prior.cov).T
        if not np.all(np.isfinite(K)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        S = S + JITTER * np.eye(S.shape[0])
        K = np.linalg.lstsq(S, H @ prior.cov, rcond=None)[0].T
        jittered = True
    r = innovation(y, prior.predicted_obs, model, flip_heading)
    mean = prior.mean + K @ r
    k = getattr(model, "heading_index", None)
    if k is not None:
        mean[k] = wrap_angle(mean[k])
    cov, flag = _guard_spd(prior.cov - K @ S @ K.T)
    return FilterState(mean, cov, prior.Q, prior.R, jittered or flag)


def coast(prior: PriorState) -> FilterState:
    return FilterState(prior.mean.copy(), prior.cov.copy(), prior.Q, prior.R, prior.jittered)


def ekf_step(fs: FilterState, y, model, dt: float, flip_heading: bool = False) -> FilterState:
    prior = ekf_predict(fs, model, dt)
    if y is None:
        return coast(prior)
    return ekf_update(prior, y, model, flip_heading)


def kalman_gain(prior: PriorState, model) -> np.ndarray:
    H = model.H(prior.mean)
    return np.linalg.solve(prior.S, H @ prior.cov).T


def with_noise(fs: FilterState, Q=None, R=None) -> FilterState:
    return replace(fs, Q=fs.Q if Q is None else np.asarray(Q, float), R=fs.R if R is None else np.asarray(R, float))
