"""Dense layers and GRU cells on top of the autodiff tape."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError(f"dense shapes inconsistent: W{self.weights.shape} b{self.bias.shape}")
        if self.activation not in ad.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class GruCell:
    W_z: np.ndarray
    W_r: np.ndarray
    W_c: np.ndarray
    U_z: np.ndarray
    U_r: np.ndarray
    U_c: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_c: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.W_z.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W_z.shape[0]


GRU_PARAMS = ("W_z", "W_r", "W_c", "U_z", "U_r", "U_c", "b_z", "b_r", "b_c")


def dense_shapes(n_in: int, n_out: int) -> dict[str, tuple]:
    return {"W": (n_out, n_in), "b": (n_out,)}


def gru_shapes(n_in: int, n_hidden: int) -> dict[str, tuple]:
    shapes = {}
    for g in "zrc":
        shapes[f"W_{g}"] = (n_hidden, n_in)
        shapes[f"U_{g}"] = (n_hidden, n_hidden)
        shapes[f"b_{g}"] = (n_hidden,)
    return shapes


def dense_forward(W, b, x, activation: str = "identity") -> Var:
    return ad.ACTIVATIONS[activation](ad.affine(W, x, b))


def gru_forward(p: dict, h, x) -> Var:
    """One GRU recurrence; ``p`` maps W_z ... b_c to Vars or arrays.

    z = sig(W_z x + U_z h + b_z), r = sig(W_r x + U_r h + b_r),
    c = tanh(W_c x + U_c (r * h) + b_c), h' = (1 - z) * h + z * c.
    """
    h = ad.const(h)
    x = ad.const(x)
    n_hidden, n_in = ad.const(p["W_z"]).shape
    if x.shape != (n_in,) or h.shape != (n_hidden,):
        raise ValueError(f"gru shape mismatch: x{x.shape} h{h.shape} for cell ({n_in}->{n_hidden})")
    z = ad.sigmoid(ad.affine(p["W_z"], x, p["b_z"]) + ad.matvec(p["U_z"], h))
    r = ad.sigmoid(ad.affine(p["W_r"], x, p["b_r"]) + ad.matvec(p["U_r"], h))
    c = ad.tanh(ad.affine(p["W_c"], x, p["b_c"]) + ad.matvec(p["U_c"], r * h))
    return h + z * (c - h)


def gru_step(cell: GruCell, h_prev, x) -> np.ndarray:
    """Plain-array GRU step (no tape)."""
    p = {k: getattr(cell, k) for k in GRU_PARAMS}
    return gru_forward(p, np.asarray(h_prev, float), np.asarray(x, float)).value


def dense(layer: DenseLayer, x) -> np.ndarray:
    return dense_forward(layer.weights, layer.bias, np.asarray(x, float), layer.activation).value


def uniform_init(shape: tuple, rng: np.random.Generator) -> np.ndarray:
    """Uniform in +-sqrt(1/fan_in) for matrices, zeros for vectors."""
    if len(shape) == 1:
        return np.zeros(shape)
    bound = np.sqrt(1.0 / shape[1])
    return rng.uniform(-bound, bound, size=shape)
