"""Hyperbox / boolean-box bound propagation through ReLU networks.

A forward pass pushes an input box through affine, conditional and switch
pushforwards to bound every pre-activation; a backward pass pushes the head
row (or a dual-ball box, for vector-valued networks) through the gradient
recursion to bound every chain-rule Jacobian entry.  Maximizing a norm over
the final gradient box gives the FastLip upper bound; the intermediate boxes
supply the finite big-M constants the MIP encodings need.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import norms
from .network import OFF, ON, ReLUNetwork

UNKNOWN = -1  # BoolBox entry '?': neuron may be on or off


@dataclass(frozen=True)
class Hyperbox:
    """Axis-aligned box given by finite lower/upper vectors l <= u."""

    l: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        l = np.asarray(self.l, dtype=float).reshape(-1)
        u = np.asarray(self.u, dtype=float).reshape(-1)
        if l.shape != u.shape:
            raise ValueError("l and u must have the same length")
        if not (np.all(np.isfinite(l)) and np.all(np.isfinite(u))):
            raise ValueError("box bounds must be finite")
        if np.any(l > u + 1e-12):
            raise ValueError("need l <= u elementwise")
        l.flags.writeable = False
        u.flags.writeable = False
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "u", u)

    @staticmethod
    def from_center_radius(center, radius) -> "Hyperbox":
        c = np.asarray(center, dtype=float).reshape(-1)
        r = np.broadcast_to(np.asarray(radius, dtype=float), c.shape)
        return Hyperbox(c - r, c + r)

    @staticmethod
    def point(x) -> "Hyperbox":
        x = np.asarray(x, dtype=float).reshape(-1)
        return Hyperbox(x, x)

    @property
    def dim(self) -> int:
        return self.l.shape[0]

    @property
    def center(self) -> np.ndarray:
        return (self.l + self.u) / 2.0

    @property
    def radius(self) -> np.ndarray:
        return (self.u - self.l) / 2.0

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float).reshape(-1)
        return bool(np.all(x >= self.l - tol) and np.all(x <= self.u + tol))

    def contains_box(self, other: "Hyperbox", tol: float = 0.0) -> bool:
        return bool(np.all(other.l >= self.l - tol) and np.all(other.u <= self.u + tol))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.l, self.u, size=(n, self.dim))


@dataclass(frozen=True)
class BoolBox:
    """Vector over {0, 1, ?} abstracting a set of binary vectors."""

    v: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=np.int8).reshape(-1)
        if not np.all(np.isin(v, (ON, OFF, UNKNOWN))):
            raise ValueError("BoolBox entries must be 0, 1 or ? (-1)")
        v.flags.writeable = False
        object.__setattr__(self, "v", v)


def _box(l: np.ndarray, u: np.ndarray) -> Hyperbox:
    """Internal constructor for already-consistent bounds (skips validation)."""
    b = object.__new__(Hyperbox)
    object.__setattr__(b, "l", l)
    object.__setattr__(b, "u", u)
    return b


def _bools(v: np.ndarray) -> BoolBox:
    b = object.__new__(BoolBox)
    object.__setattr__(b, "v", v)
    return b


def push_affine(box: Hyperbox, w, b=None) -> Hyperbox:
    """Image box of x -> Wx + b: center maps through W, radius through |W|."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[1] != box.dim:
        raise ValueError(f"matrix shape {w.shape} does not accept dim {box.dim}")
    c = w @ box.center
    if b is not None:
        c = c + np.asarray(b, dtype=float).reshape(-1)
    r = np.abs(w) @ box.radius
    return _box(c - r, c + r)


def push_conditional(box: Hyperbox) -> BoolBox:
    """Sign abstraction: 1 if l > 0, 0 if u < 0, ? otherwise.

    Boundary cases l = 0 / u = 0 map to '?', which is always sound for the
    set-valued sign at zero.
    """
    v = np.full(box.dim, UNKNOWN, dtype=np.int8)
    v[box.l > 0] = ON
    v[box.u < 0] = OFF
    return _bools(v)


def push_switch(box: Hyperbox, bools: BoolBox) -> Hyperbox:
    """Image box of (x, a) -> x * a under the given sign abstraction."""
    if bools.v.shape[0] != box.dim:
        raise ValueError("switch: box and bool vector dimensions differ")
    l = np.where(bools.v == ON, box.l, np.where(bools.v == OFF, 0.0, np.minimum(box.l, 0.0)))
    u = np.where(bools.v == ON, box.u, np.where(bools.v == OFF, 0.0, np.maximum(box.u, 0.0)))
    return _box(l, u)


@dataclass(frozen=True)
class PropagationResult:
    """All boxes produced by one forward/backward sweep.

    pre_activation_boxes[i] bounds Z_{i+1}; activation_boolboxes[i] abstracts
    the layer's on/off states; backward_boxes runs from the head seed down to
    the input, so backward_boxes[-1] bounds the chain-rule gradient rows.
    """

    pre_activation_boxes: tuple[Hyperbox, ...]
    activation_boolboxes: tuple[BoolBox, ...]
    backward_boxes: tuple[Hyperbox, ...]

    @property
    def gradient_box(self) -> Hyperbox:
        return self.backward_boxes[-1]


def head_seed_box(net: ReLUNetwork, output_norm: str | None) -> Hyperbox:
    """Box over head^T z for z in the dual ball of the output norm.

    ``None`` (scalar network) gives the degenerate box at the single head
    row.  Otherwise coordinate j ranges over +-||head[:, j]||_beta, the
    tightest box containing the seeded backward values.
    """
    if output_norm is None:
        if net.output_dim != 1:
            raise ValueError("scalar backward seed needs a single head row")
        return Hyperbox.point(net.head[0])
    gens = norms.dual_ball_generators(net.output_dim, output_norm)
    vals = gens @ net.head  # one row of head^T z per generator
    return Hyperbox(vals.min(axis=0), vals.max(axis=0))


def propagate(
    net: ReLUNetwork,
    domain: Hyperbox,
    backward_seed: Hyperbox | None = None,
    forced: dict[tuple[int, int], int] | None = None,
) -> PropagationResult:
    """Forward + backward interval sweep over the whole gradient recursion.

    ``backward_seed`` overrides the scalar head seed (used for dual-ball
    objectives).  ``forced`` pins individual neurons to 0/1 before the switch
    pushforwards; the result is then only sound for inputs consistent with
    those branch decisions (used for bound tightening during search).
    """
    if domain.dim != net.input_dim:
        raise ValueError(f"domain dim {domain.dim} != input dim {net.input_dim}")
    pre_boxes: list[Hyperbox] = []
    bool_boxes: list[BoolBox] = []
    cur = domain
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z_box = push_affine(cur, w, b)
        states = push_conditional(z_box)
        if forced:
            v = states.v.copy()
            for (lay, idx), val in forced.items():
                if lay == i:
                    v[idx] = ON if val else OFF
            states = _bools(v)
        pre_boxes.append(z_box)
        bool_boxes.append(states)
        cur = push_switch(z_box, states)

    if backward_seed is None:
        seed = head_seed_box(net, None)
    else:
        seed = backward_seed
        if seed.dim != net.layer_sizes[-1]:
            raise ValueError("backward seed dimension must match the last layer")
    back: list[Hyperbox] = [seed]
    y_box = seed
    for w, states in zip(reversed(net.weights), reversed(bool_boxes)):
        y_box = push_affine(push_switch(y_box, states), w.T)
        back.append(y_box)
    return PropagationResult(tuple(pre_boxes), tuple(bool_boxes), tuple(back))


def max_norm_over_box(box: Hyperbox, grad_norm: str) -> float:
    """Maximum of a vector norm over a box (attained at a corner)."""
    peak = np.maximum(np.abs(box.l), np.abs(box.u))
    if grad_norm == "l1":
        return float(peak.sum())
    if grad_norm == "linf":
        return float(peak.max()) if peak.size else 0.0
    raise ValueError(f"unknown gradient norm {grad_norm!r}")


def fastlip(net: ReLUNetwork, domain: Hyperbox, grad_norm: str = "l1") -> float:
    """Certified Lipschitz upper bound: max gradient norm over the propagated
    gradient box.  grad_norm="l1" bounds the linf Lipschitz constant,
    "linf" the l1 one."""
    result = propagate(net, domain)
    return max_norm_over_box(result.gradient_box, grad_norm)
