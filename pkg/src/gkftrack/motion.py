"""State-space motion models shared by the filters and the simulator.

State layouts
-------------
CV       (x, y, z, w, l, h, yaw, vx, vy)                    m = 9
CA       CV + (ax, ay)                                       m = 11
CTRA     (x, y, z, w, l, h, v, a, yaw, omega)                m = 10
Bicycle  CTRA layout; the arc is traced by the rear-axle point
         sitting ``beta * l / 2`` behind the box center.

Every model observes (x, y, z, w, l, h, yaw).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import wrap_angle

OBS_DIM = 7
OMEGA_EPS = 1e-6
# |omega * dt| below which the arc helpers switch to their series forms
PHI_SERIES = 1e-3
KINDS = ("CV", "CA", "CTRA", "Bicycle")


@dataclass(frozen=True)
class MotionModel:
    kind: str
    beta: float = 0.5
    q_diag: tuple = ()
    r_diag: tuple = (0.5, 0.5, 0.5, 0.05, 0.05, 0.05, 0.05)
    p0_diag: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown motion model kind {self.kind!r}; expected one of {KINDS}")
        if not self.q_diag:
            object.__setattr__(self, "q_diag", _DEFAULT_Q[self.kind])
        if not self.p0_diag:
            object.__setattr__(self, "p0_diag", _DEFAULT_P0[self.kind])
        if len(self.q_diag) != self.state_dim or len(self.p0_diag) != self.state_dim:
            raise ValueError(f"{self.kind}: noise diagonals must have length {self.state_dim}")
        if len(self.r_diag) != OBS_DIM:
            raise ValueError("r_diag must have 7 entries")

    @property
    def state_dim(self) -> int:
        return {"CV": 9, "CA": 11, "CTRA": 10, "Bicycle": 10}[self.kind]

    @property
    def obs_dim(self) -> int:
        return OBS_DIM

    @property
    def heading_index(self) -> int:
        return 6 if self.kind in ("CV", "CA") else 8

    @property
    def obs_heading_index(self) -> int:
        return 6

    @property
    def obs_indices(self) -> np.ndarray:
        return np.array([0, 1, 2, 3, 4, 5, self.heading_index])

    @property
    def Q(self) -> np.ndarray:
        return np.diag(np.asarray(self.q_diag, dtype=float))

    @property
    def R(self) -> np.ndarray:
        return np.diag(np.asarray(self.r_diag, dtype=float))

    @property
    def P0(self) -> np.ndarray:
        return np.diag(np.asarray(self.p0_diag, dtype=float))

    # ------------------------------------------------------------------ f, h
    def f(self, x: np.ndarray, dt: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = x.copy()
        if self.kind == "CV":
            out[0] += x[7] * dt
            out[1] += x[8] * dt
        elif self.kind == "CA":
            out[0] += x[7] * dt + 0.5 * x[9] * dt * dt
            out[1] += x[8] * dt + 0.5 * x[10] * dt * dt
            out[7] += x[9] * dt
            out[8] += x[10] * dt
        else:
            v, a, th, om = x[6], x[7], x[8], x[9]
            dx, dy = _arc(v, a, th, om, dt)
            if self.kind == "CTRA":
                out[0] += dx
                out[1] += dy
            else:
                d = 0.5 * self.beta * x[4]
                th1 = th + om * dt
                out[0] += dx + d * (math.cos(th1) - math.cos(th))
                out[1] += dy + d * (math.sin(th1) - math.sin(th))
            out[6] = v + a * dt
            out[8] = th + om * dt
        k = self.heading_index
        out[k] = wrap_angle(out[k])
        return out

    def h(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float)[self.obs_indices]

    # ------------------------------------------------------------ Jacobians
    def F(self, x: np.ndarray, dt: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        m = self.state_dim
        J = np.eye(m)
        if self.kind == "CV":
            J[0, 7] = J[1, 8] = dt
        elif self.kind == "CA":
            J[0, 7] = J[1, 8] = dt
            J[0, 9] = J[1, 10] = 0.5 * dt * dt
            J[7, 9] = J[8, 10] = dt
        else:
            v, a, th, om = x[6], x[7], x[8], x[9]
            d_arc = _arc_jacobian(v, a, th, om, dt)  # rows dx, dy; cols v, a, th, om
            J[0:2, 6] = d_arc[:, 0]
            J[0:2, 7] = d_arc[:, 1]
            J[0:2, 8] = d_arc[:, 2]
            J[0:2, 9] = d_arc[:, 3]
            J[6, 7] = dt
            J[8, 9] = dt
            if self.kind == "Bicycle":
                d = 0.5 * self.beta * x[4]
                th1 = th + om * dt
                c0, s0, c1, s1 = math.cos(th), math.sin(th), math.cos(th1), math.sin(th1)
                J[0, 4] += 0.5 * self.beta * (c1 - c0)
                J[1, 4] += 0.5 * self.beta * (s1 - s0)
                J[0, 8] += d * (s0 - s1)
                J[1, 8] += d * (c1 - c0)
                J[0, 9] += -d * dt * s1
                J[1, 9] += d * dt * c1
        return J

    def H(self, x: np.ndarray | None = None) -> np.ndarray:
        J = np.zeros((OBS_DIM, self.state_dim))
        J[np.arange(OBS_DIM), self.obs_indices] = 1.0
        return J

    # ------------------------------------------------------------- helpers
    def state_from_box(self, obs: np.ndarray, velocity=(0.0, 0.0)) -> np.ndarray:
        """Initial state from an observation vector plus a planar velocity."""
        obs = np.asarray(obs, dtype=float)
        x = np.zeros(self.state_dim)
        x[:6] = obs[:6]
        x[self.heading_index] = wrap_angle(obs[6])
        vx, vy = float(velocity[0]), float(velocity[1])
        if self.kind in ("CV", "CA"):
            x[7], x[8] = vx, vy
        else:
            x[6] = vx * math.cos(obs[6]) + vy * math.sin(obs[6])
        return x

    def velocity(self, x: np.ndarray) -> np.ndarray:
        """Planar velocity (vx, vy) of a state."""
        if self.kind in ("CV", "CA"):
            return np.array([x[7], x[8]])
        th = x[8]
        return x[6] * np.array([math.cos(th), math.sin(th)])


_DEFAULT_Q = {
    "CV": (0.05, 0.05, 0.01, 0.01, 0.01, 0.01, 0.01, 0.5, 0.5),
    "CA": (0.05, 0.05, 0.01, 0.01, 0.01, 0.01, 0.01, 0.5, 0.5, 0.5, 0.5),
    "CTRA": (0.05, 0.05, 0.01, 0.01, 0.01, 0.01, 0.5, 0.5, 0.01, 0.05),
    "Bicycle": (0.05, 0.05, 0.01, 0.01, 0.01, 0.01, 0.5, 0.5, 0.01, 0.05),
}
_DEFAULT_P0 = {
    "CV": (1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.5, 4.0, 4.0),
    "CA": (1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.5, 4.0, 4.0, 4.0, 4.0),
    "CTRA": (1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 4.0, 4.0, 0.5, 1.0),
    "Bicycle": (1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 4.0, 4.0, 0.5, 1.0),
}


def _arc_terms(phi: float):
    """S = sin(u)/u and g = (cos(u) - S)/phi with u = phi/2, plus d/dphi of both.

    Below ``PHI_SERIES`` both use their Taylor series, which avoids the
    cancellation of the direct forms near a zero turn.
    """
    u = 0.5 * phi
    if abs(phi) < PHI_SERIES:
        u2 = u * u
        S = 1.0 - u2 / 6.0 + u2 * u2 / 120.0
        dS = 0.5 * (-u / 3.0 + u * u2 / 30.0)
        g = -u / 6.0 + u * u2 / 60.0
        dg = 0.5 * (-1.0 / 6.0 + u2 / 20.0)
        return S, dS, g, dg
    su, cu = math.sin(u), math.cos(u)
    S = su / u
    dS = 0.5 * (u * cu - su) / (u * u)
    g = (cu - S) / phi
    dg = ((-0.5 * su - dS) * phi - (cu - S)) / (phi * phi)
    return S, dS, g, dg


def _arc(v, a, th, om, dt):
    """Planar displacement of a point moving with speed v + a t and turn rate om.

    Written around the mid-turn heading m = th + om dt / 2:

        dx = v dt S cos m + a dt^2 (g sin m + S cos m / 2)
        dy = v dt S sin m + a dt^2 (-g cos m + S sin m / 2)

    which equals the closed-form arc integral and is smooth through om = 0.
    """
    S, _, g, _ = _arc_terms(om * dt)
    m = th + 0.5 * om * dt
    c, s = math.cos(m), math.sin(m)
    dx = v * dt * S * c + a * dt * dt * (g * s + 0.5 * S * c)
    dy = v * dt * S * s + a * dt * dt * (-g * c + 0.5 * S * s)
    return dx, dy


def _arc_jacobian(v, a, th, om, dt) -> np.ndarray:
    """d(dx, dy) / d(v, a, th, om) as a 2x4 array."""
    S, dS, g, dg = _arc_terms(om * dt)
    m = th + 0.5 * om * dt
    c, s = math.cos(m), math.sin(m)
    dt2 = dt * dt
    dx = v * dt * S * c + a * dt2 * (g * s + 0.5 * S * c)
    dy = v * dt * S * s + a * dt2 * (-g * c + 0.5 * S * s)
    J = np.empty((2, 4))
    J[:, 0] = (dt * S * c, dt * S * s)
    J[:, 1] = (dt2 * (g * s + 0.5 * S * c), dt2 * (-g * c + 0.5 * S * s))
    J[:, 2] = (-dy, dx)
    # d/d om = dt * d/d phi, and m moves at half that rate
    ddx = v * dt * (-0.5 * s * S + c * dS) + a * dt2 * (0.5 * c * g + s * dg - 0.25 * s * S + 0.5 * c * dS)
    ddy = v * dt * (0.5 * c * S + s * dS) + a * dt2 * (0.5 * s * g - c * dg + 0.25 * c * S + 0.5 * s * dS)
    J[:, 3] = (dt * ddx, dt * ddy)
    return J


@dataclass(frozen=True)
class LinearModel:
    """Time-invariant linear-Gaussian model (dt is ignored).

    Used for toy problems; it exposes the same surface as ``MotionModel``.
    """
    F_mat: np.ndarray
    H_mat: np.ndarray
    Q_mat: np.ndarray
    R_mat: np.ndarray
    P0_mat: np.ndarray = field(default=None)
    kind: str = "linear"
    heading_index: int | None = None
    obs_heading_index: int | None = None

    def __post_init__(self):
        for name in ("F_mat", "H_mat", "Q_mat", "R_mat"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        if self.P0_mat is None:
            object.__setattr__(self, "P0_mat", np.eye(self.state_dim))
        else:
            object.__setattr__(self, "P0_mat", np.atleast_2d(np.asarray(self.P0_mat, dtype=float)))

    @property
    def state_dim(self) -> int:
        return self.F_mat.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.H_mat.shape[0]

    @property
    def Q(self):
        return self.Q_mat

    @property
    def R(self):
        return self.R_mat

    @property
    def P0(self):
        return self.P0_mat

    def f(self, x, dt=1.0):
        return self.F_mat @ np.asarray(x, dtype=float)

    def h(self, x):
        return self.H_mat @ np.asarray(x, dtype=float)

    def F(self, x=None, dt=1.0):
        return self.F_mat.copy()

    def H(self, x=None):
        return self.H_mat.copy()


def make_model(kind: str, **kwargs) -> MotionModel:
    return MotionModel(kind=kind, **kwargs)


def f_predict(model, x, dt):
    return model.f(x, dt)


def h_observe(model, x):
    return model.h(x)


def jacobian_f(model, x, dt):
    return model.F(x, dt)


def jacobian_h(model, x=None):
    return model.H(x)
