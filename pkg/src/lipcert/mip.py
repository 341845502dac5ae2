"""Mixed-integer encoding of the gradient-norm maximization.

The model unrolls both passes of a ReLU network over a box domain: forward
variables reproduce every pre-activation and post-activation, backward
variables reproduce the gradient recursion, and one binary per neuron is
shared between its forward sign constraint and its backward switch, so every
feasible point corresponds to an input x together with a legitimate chain-rule
choice at ties.  Maximizing the dual norm of the gradient variables therefore
yields the local Lipschitz constant exactly (for the scalar l1/linf cases and
for vector-valued networks over linear output norms).

All big-M constants come from interval propagation, which is what keeps each
operator encodable with a constant number of inequalities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import interval, lp, norms
from .network import ALWAYS_ZERO, ReLUNetwork, ZeroRule, chain_rule_jacobian, pattern_at, preactivations

CONTINUOUS = "continuous"
BINARY = "binary"


class ModelError(ValueError):
    """Raised when a model cannot be built (unbounded domain, bad bounds)."""


@dataclass(frozen=True)
class LinExpr:
    """Sparse linear expression: coefficient map over variable ids + constant."""

    coefs: dict[int, float]
    const: float = 0.0

    def value(self, point) -> float:
        point = np.asarray(point, dtype=float)
        return self.const + sum(c * point[v] for v, c in self.coefs.items())


@dataclass
class BinDecision:
    """A conditional's outcome: either a model binary or a fixed 0/1."""

    var: int | None = None
    fixed: int | None = None

    @property
    def is_fixed(self) -> bool:
        return self.fixed is not None


class MIPModel:
    """Linear constraints over continuous + binary variables, maximized."""

    def __init__(self):
        self.lo: list[float] = []
        self.hi: list[float] = []
        self.kinds: list[str] = []
        self.names: list[str] = []
        self.constraints: list[tuple[dict[int, float], str, float]] = []
        self.objective: dict[int, float] = {}
        self.objective_const: float = 0.0

    # -- variables / constraints --------------------------------------------

    def add_var(self, lo: float, hi: float, kind: str = CONTINUOUS, name: str = "") -> int:
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise ModelError(f"variable {name or len(self.lo)}: bounds must be finite")
        if lo > hi:
            raise ModelError(f"variable {name or len(self.lo)}: lo {lo} > hi {hi}")
        self.lo.append(float(lo))
        self.hi.append(float(hi))
        self.kinds.append(kind)
        self.names.append(name or f"v{len(self.lo) - 1}")
        return len(self.lo) - 1

    def add_binary(self, name: str = "") -> int:
        return self.add_var(0.0, 1.0, BINARY, name)

    def add_constraint(self, coefs: dict[int, float], rel: str, rhs: float) -> None:
        if rel not in ("<=", "=", ">="):
            raise ModelError(f"bad relation {rel!r}")
        for v in coefs:
            if not 0 <= v < len(self.lo):
                raise ModelError(f"constraint references undeclared variable {v}")
        self.constraints.append(({k: float(c) for k, c in coefs.items()}, rel, float(rhs)))

    def set_objective(self, coefs: dict[int, float], const: float = 0.0) -> None:
        self.objective = {k: float(c) for k, c in coefs.items()}
        self.objective_const = float(const)

    @property
    def num_vars(self) -> int:
        return len(self.lo)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    @property
    def binary_vars(self) -> list[int]:
        return [i for i, k in enumerate(self.kinds) if k == BINARY]

    # -- conversions ----------------------------------------------------------

    def lp_relaxation(self) -> "MIPModel":
        """Copy with every binary re-typed continuous on [0, 1]."""
        out = MIPModel()
        out.lo = list(self.lo)
        out.hi = list(self.hi)
        out.kinds = [CONTINUOUS for _ in self.kinds]
        out.names = list(self.names)
        out.constraints = [(dict(c), r, b) for c, r, b in self.constraints]
        out.objective = dict(self.objective)
        out.objective_const = self.objective_const
        return out

    def to_lp_problem(self) -> lp.LPProblem:
        n = self.num_vars
        c = np.zeros(n)
        for v, coef in self.objective.items():
            c[v] = coef
        m = self.num_constraints
        a = np.zeros((m, n))
        rhs = np.zeros(m)
        rels = []
        for i, (coefs, rel, b) in enumerate(self.constraints):
            for v, coef in coefs.items():
                a[i, v] = coef
            rhs[i] = b
            rels.append(rel)
        return lp.LPProblem(
            objective=c, a=a, relations=tuple(rels), rhs=rhs,
            lo=np.array(self.lo), hi=np.array(self.hi),
        )

    def check_point(self, point, tol: float = 1e-6, integrality_tol: float = 1e-6):
        """All violations of a full assignment (empty list = feasible)."""
        point = np.asarray(point, dtype=float)
        out = []
        for i in range(self.num_vars):
            if point[i] < self.lo[i] - tol or point[i] > self.hi[i] + tol:
                out.append(f"{self.names[i]}: value {point[i]} outside "
                           f"[{self.lo[i]}, {self.hi[i]}]")
            if self.kinds[i] == BINARY and min(abs(point[i]), abs(point[i] - 1)) > integrality_tol:
                out.append(f"{self.names[i]}: not integral ({point[i]})")
        for k, (coefs, rel, rhs) in enumerate(self.constraints):
            lhs = sum(c * point[v] for v, c in coefs.items())
            scale = tol * (1.0 + abs(rhs))
            if rel == "<=" and lhs > rhs + scale:
                out.append(f"row {k}: {lhs} </= {rhs}")
            elif rel == ">=" and lhs < rhs - scale:
                out.append(f"row {k}: {lhs} >/= {rhs}")
            elif rel == "=" and abs(lhs - rhs) > scale:
                out.append(f"row {k}: {lhs} != {rhs}")
        return out

    def objective_at(self, point) -> float:
        point = np.asarray(point, dtype=float)
        return self.objective_const + sum(c * point[v] for v, c in self.objective.items())

    def to_lp_format(self) -> str:
        """Deterministic export in the standard LP text format."""
        def term(coef, name, first):
            sign = "" if (first and coef >= 0) else ("+ " if coef >= 0 else "- ")
            return f"{sign}{abs(coef):.17g} {name}"

        lines = ["Maximize", " obj:"]
        parts = [
            term(self.objective[v], self.names[v], i == 0)
            for i, v in enumerate(sorted(self.objective))
        ]
        lines[-1] += " " + (" ".join(parts) if parts else "0")
        lines.append("Subject To")
        for k, (coefs, rel, rhs) in enumerate(self.constraints):
            body = " ".join(
                term(coefs[v], self.names[v], i == 0) for i, v in enumerate(sorted(coefs))
            )
            lines.append(f" c{k}: {body} {rel} {rhs:.17g}")
        lines.append("Bounds")
        for i in range(self.num_vars):
            lines.append(f" {self.lo[i]:.17g} <= {self.names[i]} <= {self.hi[i]:.17g}")
        bins = self.binary_vars
        if bins:
            lines.append("Binary")
            lines.extend(f" {self.names[v]}" for v in bins)
        lines.append("End")
        return "\n".join(lines) + "\n"


@dataclass
class EncodingContext:
    """Model under construction plus the per-variable bound records."""

    model: MIPModel = field(default_factory=MIPModel)

    def bounds(self, var: int) -> tuple[float, float]:
        return self.model.lo[var], self.model.hi[var]


# -- operator encodings -------------------------------------------------------


def encode_affine(ctx: EncodingContext, in_vars, w, b=None, prefix: str = "aff") -> list[int]:
    """Fresh out variables constrained to equal W @ in + b; bounds by
    interval arithmetic over the input variables' bounds."""
    w = np.asarray(w, dtype=float)
    in_vars = list(in_vars)
    if w.ndim != 2 or w.shape[1] != len(in_vars):
        raise ModelError(f"affine: matrix {w.shape} does not accept {len(in_vars)} inputs")
    bvec = np.zeros(w.shape[0]) if b is None else np.asarray(b, dtype=float).reshape(-1)
    in_lo = np.array([ctx.model.lo[v] for v in in_vars])
    in_hi = np.array([ctx.model.hi[v] for v in in_vars])
    box = interval.push_affine(interval.Hyperbox(in_lo, in_hi), w, bvec)
    out = []
    for r in range(w.shape[0]):
        y = ctx.model.add_var(box.l[r], box.u[r], name=f"{prefix}{r}")
        coefs = {y: 1.0}
        for c, v in enumerate(in_vars):
            if w[r, c] != 0.0:
                coefs[v] = coefs.get(v, 0.0) - w[r, c]
        ctx.model.add_constraint(coefs, "=", bvec[r])
        out.append(y)
    return out


def encode_conditional(ctx: EncodingContext, x_var: int, name: str = "a") -> BinDecision:
    """Binary a with a=1 <=> x >= 0 (both signs allowed at x = 0).

    Fixed outright when the variable's bounds decide the sign.  The free case
    uses the sound pair x >= l(1-a), x <= u a.
    """
    l, u = ctx.bounds(x_var)
    if l > u:
        raise ModelError("conditional: inverted bounds")
    if l > 0:
        return BinDecision(fixed=1)
    if u < 0:
        return BinDecision(fixed=0)
    a = ctx.model.add_binary(name)
    # x >= l(1-a)  <=>  x + l a >= l
    ctx.model.add_constraint({x_var: 1.0, a: l}, ">=", l)
    # x <= u a     <=>  x - u a <= 0
    ctx.model.add_constraint({x_var: 1.0, a: -u}, "<=", 0.0)
    return BinDecision(var=a)


def encode_switch(ctx: EncodingContext, x_var: int, dec: BinDecision, name: str = "s") -> int:
    """y = x * a for a shared binary; collapses to y=x or y=0 when fixed."""
    l, u = ctx.bounds(x_var)
    if dec.is_fixed:
        if dec.fixed == 1:
            y = ctx.model.add_var(l, u, name=name)
            ctx.model.add_constraint({y: 1.0, x_var: -1.0}, "=", 0.0)
        else:
            y = ctx.model.add_var(0.0, 0.0, name=name)
            ctx.model.add_constraint({y: 1.0}, "=", 0.0)
        return y
    a = dec.var
    lhat, uhat = min(l, 0.0), max(u, 0.0)
    y = ctx.model.add_var(lhat, uhat, name=name)
    # y >= x - u(1-a)   <=>  y - x - u a >= -u
    ctx.model.add_constraint({y: 1.0, x_var: -1.0, a: -u}, ">=", -u)
    # y <= x - l(1-a)   <=>  y - x - l a <= -l
    ctx.model.add_constraint({y: 1.0, x_var: -1.0, a: -l}, "<=", -l)
    # y >= lhat a ; y <= uhat a
    ctx.model.add_constraint({y: 1.0, a: -lhat}, ">=", 0.0)
    ctx.model.add_constraint({y: 1.0, a: -uhat}, "<=", 0.0)
    return y


def encode_switch_const(ctx: EncodingContext, value: float, dec: BinDecision,
                        name: str = "s") -> int:
    """Switch applied to a known constant: y = value * a."""
    if dec.is_fixed:
        v = value if dec.fixed == 1 else 0.0
        return ctx.model.add_var(v, v, name=name)
    y = ctx.model.add_var(min(value, 0.0), max(value, 0.0), name=name)
    ctx.model.add_constraint({y: 1.0, dec.var: -value}, "=", 0.0)
    return y


def encode_abs(ctx: EncodingContext, x_var: int, name: str = "t") -> tuple[int, int | None]:
    """y = |x| via the four-inequality piecewise encoding; returns (y, sign).

    The two branch systems y = x (a=0) and y = -x (a=1) are glued with
    zeta- = 2l, zeta+ = 2u; the nonnegative variable bounds cut the wrong
    branch, so the feasible set is exactly the graph of |.| (a free at 0).
    A sign fixed by the bounds degenerates to a single equality, no binary.
    """
    l, u = ctx.bounds(x_var)
    if l >= 0:
        y = ctx.model.add_var(l, u, name=name)
        ctx.model.add_constraint({y: 1.0, x_var: -1.0}, "=", 0.0)
        return y, None
    if u <= 0:
        y = ctx.model.add_var(-u, -l, name=name)
        ctx.model.add_constraint({y: 1.0, x_var: 1.0}, "=", 0.0)
        return y, None
    a = ctx.model.add_binary(f"{name}_sign")
    y = ctx.model.add_var(0.0, max(-l, u), name=name)
    # y >= x - 2u a ; y <= x - 2l a ; y >= -x + 2l(1-a) ; y <= -x + 2u(1-a)
    ctx.model.add_constraint({y: 1.0, x_var: -1.0, a: 2 * u}, ">=", 0.0)
    ctx.model.add_constraint({y: 1.0, x_var: -1.0, a: 2 * l}, "<=", 0.0)
    ctx.model.add_constraint({y: 1.0, x_var: 1.0, a: 2 * l}, ">=", 2 * l)
    ctx.model.add_constraint({y: 1.0, x_var: 1.0, a: 2 * u}, "<=", 2 * u)
    return y, a


def _encode_relu_expr(ctx: EncodingContext, coefs: dict[int, float], const: float,
                      l: float, u: float, name: str) -> tuple[int, int | None]:
    """s = relu(expr) for an affine expression with known bounds [l, u]."""
    if l >= 0:
        s = ctx.model.add_var(l, u, name=name)
        row = {s: 1.0}
        for v, c in coefs.items():
            row[v] = row.get(v, 0.0) - c
        ctx.model.add_constraint(row, "=", const)
        return s, None
    if u <= 0:
        return ctx.model.add_var(0.0, 0.0, name=name), None
    a = ctx.model.add_binary(f"{name}_on")
    s = ctx.model.add_var(0.0, u, name=name)
    row = {s: 1.0}
    for v, c in coefs.items():
        row[v] = row.get(v, 0.0) - c
    ctx.model.add_constraint(dict(row), ">=", const)  # s >= expr
    row_up = dict(row)
    row_up[a] = row_up.get(a, 0.0) - l
    ctx.model.add_constraint(row_up, "<=", const - l)  # s <= expr - l(1-a)
    ctx.model.add_constraint({s: 1.0, a: -u}, "<=", 0.0)  # s <= u a
    return s, a


def encode_max(ctx: EncodingContext, x_vars, name: str = "mx"):
    """t = max(x_1..x_k) via pairwise folds max(x, y) = x + relu(y - x).

    Returns (t_var, fold_steps) where fold_steps lists
    (next_var, relu_var, relu_binary, fold_var) per fold for bookkeeping.
    """
    x_vars = list(x_vars)
    if not x_vars:
        raise ModelError("max of zero variables")
    cur = x_vars[0]
    steps = []
    for step, nxt in enumerate(x_vars[1:]):
        lc, uc = ctx.bounds(cur)
        ln, un = ctx.bounds(nxt)
        s, a = _encode_relu_expr(
            ctx, {nxt: 1.0, cur: -1.0}, 0.0, ln - uc, un - lc, f"{name}_r{step}"
        )
        t = ctx.model.add_var(max(lc, ln), max(uc, un), name=f"{name}{step}")
        ctx.model.add_constraint({t: 1.0, cur: -1.0, s: -1.0}, "=", 0.0)
        steps.append((nxt, s, a, t))
        cur = t
    return cur, steps


def encode_cross_norm_ball(ctx: EncodingContext, m: int, name: str = "z"):
    """z ranging over the polytope hull of {e_i} and {e_i - e_j}.

    Split z = z+ - z- with z+, z- >= 0, sum z+ <= 1, sum z- <= 1 and
    sum z+ >= sum z-.  Returns (z_vars, pos_vars, neg_vars).
    """
    zp = [ctx.model.add_var(0.0, 1.0, name=f"{name}p{i}") for i in range(m)]
    zn = [ctx.model.add_var(0.0, 1.0, name=f"{name}n{i}") for i in range(m)]
    z = []
    for i in range(m):
        zi = ctx.model.add_var(-1.0, 1.0, name=f"{name}{i}")
        ctx.model.add_constraint({zi: 1.0, zp[i]: -1.0, zn[i]: 1.0}, "=", 0.0)
        z.append(zi)
    ctx.model.add_constraint({v: 1.0 for v in zp}, "<=", 1.0)
    ctx.model.add_constraint({v: 1.0 for v in zn}, "<=", 1.0)
    row = {v: 1.0 for v in zp}
    for v in zn:
        row[v] = -1.0
    ctx.model.add_constraint(row, ">=", 0.0)
    return z, zp, zn


def encode_dual_ball(ctx: EncodingContext, m: int, output_norm: str):
    """Variables z with ||z||_{beta*} <= 1 for a linear output norm beta.

    Returns (z_vars, pos_vars, neg_vars); the split lists are empty for the
    plain box case.
    """
    if output_norm == "l1":
        # dual ball of l1 is the linf box: plain variable bounds suffice
        return [ctx.model.add_var(-1.0, 1.0, name=f"z{i}") for i in range(m)], [], []
    if output_norm == "linf":
        # dual ball of linf is the l1 ball: positive/negative split
        zp = [ctx.model.add_var(0.0, 1.0, name=f"zp{i}") for i in range(m)]
        zn = [ctx.model.add_var(0.0, 1.0, name=f"zn{i}") for i in range(m)]
        z = []
        for i in range(m):
            zi = ctx.model.add_var(-1.0, 1.0, name=f"z{i}")
            ctx.model.add_constraint({zi: 1.0, zp[i]: -1.0, zn[i]: 1.0}, "=", 0.0)
            z.append(zi)
        row = {v: 1.0 for v in zp}
        row.update({v: 1.0 for v in zn})
        ctx.model.add_constraint(row, "<=", 1.0)
        return z, zp, zn
    if output_norm == "cross":
        return encode_cross_norm_ball(ctx, m)
    raise ModelError(f"unsupported output norm {output_norm!r}")


# -- whole-model construction --------------------------------------------------


@dataclass
class LipMIPProblem:
    """A built model plus everything the solver needs to interpret it."""

    model: MIPModel
    net: ReLUNetwork
    domain: interval.Hyperbox
    alpha: str
    output_norm: str | None
    input_vars: list[int]
    z_ball_vars: list[int]
    z_pos_vars: list[int]
    z_neg_vars: list[int]
    grad_vars: list[int]
    abs_vars: list[int]
    abs_sign_vars: list[int | None]
    max_fold_steps: list
    binary_map: dict[int, tuple[int, int]]  # binary var -> (layer, neuron)
    pre_vars: list[list[int]]
    fwd_switch_vars: list[list[int]]
    bwd_value_vars: list[list[int]]  # per layer, the backward switch inputs
    bwd_switch_vars: list[list[int]]
    fixed_on: list[np.ndarray] = field(default_factory=list)  # bounds-fixed ON neurons

    def tightened_bounds(self, fixes: dict[int, int]):
        """Variable bounds implied by forcing the given binaries.

        Re-runs interval propagation with the corresponding neurons pinned
        and maps the fresh boxes onto the model variables.  Returns
        (lo, hi, fixed_binaries) or None when the fixes contradict the
        interval analysis outright.
        """
        forced = {
            self.binary_map[v]: val for v, val in fixes.items() if v in self.binary_map
        }
        seed = None
        if self.output_norm is not None:
            seed = interval.head_seed_box(self.net, self.output_norm)
        prop = interval.propagate(self.net, self.domain, backward_seed=seed, forced=forced)
        for (layer, idx), val in forced.items():
            zbox = prop.pre_activation_boxes[layer]
            if val == 1 and zbox.u[idx] < 0:
                return None
            if val == 0 and zbox.l[idx] > 0:
                return None
        lo = np.array(self.model.lo)
        hi = np.array(self.model.hi)

        def clamp(var, lov, hiv):
            lo[var] = max(lo[var], lov)
            hi[var] = min(hi[var], hiv)

        d = self.net.depth
        for i in range(d):
            zbox = prop.pre_activation_boxes[i]
            sbox = interval.push_switch(zbox, prop.activation_boolboxes[i])
            for j, v in enumerate(self.pre_vars[i]):
                lov, hiv = zbox.l[j], zbox.u[j]
                if forced.get((i, j)) == 1:
                    lov = max(lov, 0.0)
                elif forced.get((i, j)) == 0:
                    hiv = min(hiv, 0.0)
                clamp(v, lov, hiv)
            for j, v in enumerate(self.fwd_switch_vars[i]):
                clamp(v, sbox.l[j], sbox.u[j])
        # backward_boxes[k] bounds the backward value entering layer d-1-k
        for k in range(d):
            layer = d - 1 - k
            vbox = prop.backward_boxes[k]
            sbox = interval.push_switch(vbox, prop.activation_boolboxes[layer])
            for j, v in enumerate(self.bwd_value_vars[layer]):
                clamp(v, vbox.l[j], vbox.u[j])
            for j, v in enumerate(self.bwd_switch_vars[layer]):
                clamp(v, sbox.l[j], sbox.u[j])
        gbox = prop.gradient_box
        for j, v in enumerate(self.grad_vars):
            clamp(v, gbox.l[j], gbox.u[j])
        for j, v in enumerate(self.abs_vars):
            gl, gu = gbox.l[j], gbox.u[j]
            lov = 0.0 if gl <= 0 <= gu else min(abs(gl), abs(gu))
            clamp(v, lov, max(abs(gl), abs(gu)))
        fixed_bins = {}
        for bvar, (layer, idx) in self.binary_map.items():
            state = prop.activation_boolboxes[layer].v[idx]
            if state != interval.UNKNOWN:
                fixed_bins[bvar] = int(state)
        for v, val in fixes.items():
            lo[v] = hi[v] = float(val)
        for v, val in fixed_bins.items():
            lo[v] = hi[v] = float(val)
        if np.any(lo > hi + 1e-9):
            return None
        np.minimum(lo, hi, out=lo)
        return lo, hi, fixed_bins

    def rounded_pattern_value(self, point) -> tuple[float, np.ndarray] | None:
        """Second primal heuristic: realize the node's rounded binaries.

        Rounding the LP's activation binaries proposes a sign pattern; a tiny
        feasibility LP over the inputs checks whether some x in the domain
        realizes it (ties allowed on the boundary).  If so, the pattern's
        constant Jacobian is a legitimate chain-rule outcome at that x, so
        its dual norm is an attainable objective value.
        """
        net = self.net
        mults = []
        for i in range(net.depth):
            lam = np.zeros(net.layer_sizes[i])
            mults.append(lam)
        for bvar, (i, j) in self.binary_map.items():
            mults[i][j] = 1.0 if point[bvar] >= 0.5 else 0.0
        for i in range(net.depth):
            mults[i][self.fixed_on[i]] = 1.0
        # witness LP: layer-by-layer affine maps under the proposed pattern
        rows, rhs = [], []
        m = net.weights[0]
        v = net.biases[0]
        for i in range(net.depth):
            signs = 2.0 * mults[i] - 1.0  # +1 on, -1 off
            rows.extend(signs.reshape(-1, 1) * m)
            rhs.extend(signs * -v)
            if i + 1 < net.depth:
                m = net.weights[i + 1] @ (mults[i].reshape(-1, 1) * m)
                v = net.weights[i + 1] @ (mults[i] * v) + net.biases[i + 1]
        prob = lp.LPProblem(
            objective=np.zeros(net.input_dim),
            a=np.array(rows),
            relations=tuple(">=" for _ in rows),
            rhs=np.array(rhs),
            lo=self.domain.l,
            hi=self.domain.u,
        )
        sol = lp.solve_lp(prob)
        if sol.status != lp.OPTIMAL:
            return None
        from .network import jacobian_from_multipliers

        jac = jacobian_from_multipliers(net, mults)
        return norms.operator_dual_value(jac, self.alpha, self.output_norm), sol.x

    def incumbent_from_point(self, point) -> tuple[float, np.ndarray]:
        """Exact objective of the chain-rule Jacobian at the LP point's x part.

        Any input (plus any feasible dual vector in the vector-valued case)
        yields a genuinely attainable gradient value, hence a certified lower
        bound for the maximization.
        """
        x = np.array([point[v] for v in self.input_vars])
        x = np.minimum(np.maximum(x, self.domain.l), self.domain.u)
        jac = chain_rule_jacobian(self.net, x, ALWAYS_ZERO)
        if self.output_norm is None:
            return norms.dual_vec_norm(jac[0], self.alpha), x
        z = np.array([point[v] for v in self.z_ball_vars])
        z = norms.project_to_dual_ball(z, self.output_norm)
        return norms.dual_vec_norm(jac.T @ z, self.alpha), x


def build_lipmip_model(
    net: ReLUNetwork,
    domain: interval.Hyperbox,
    alpha: str = "linf",
    output_norm: str | None = None,
    input_constraints=None,
) -> LipMIPProblem:
    """Assemble the full model whose optimum is L^alpha (or L^(alpha,beta)).

    ``alpha`` is "linf" (objective: l1 norm of the gradient) or "l1"
    (objective: max |gradient coordinate|).  ``output_norm`` switches to the
    vector-valued formulation with the head contracted against a dual-ball
    variable z.  ``input_constraints`` may add linear rows (coefs, rel, rhs)
    over the input variables to cut the box down to a polytope.
    """
    if alpha not in ("linf", "l1"):
        raise ModelError(f"alpha must be 'linf' or 'l1', got {alpha!r}")
    if domain.dim != net.input_dim:
        raise ModelError("domain dimension does not match the network")
    if output_norm is None and net.output_dim != 1:
        raise ModelError("multi-output network needs an output norm")
    ctx = EncodingContext()
    model = ctx.model

    input_vars = [
        model.add_var(domain.l[j], domain.u[j], name=f"x{j}") for j in range(domain.dim)
    ]
    for coefs, rel, rhs in input_constraints or []:
        model.add_constraint({input_vars[j]: c for j, c in coefs.items()}, rel, rhs)

    d = net.depth
    decisions: list[list[BinDecision]] = []
    binary_map: dict[int, tuple[int, int]] = {}
    pre_vars: list[list[int]] = []
    fwd_switch_vars: list[list[int]] = []
    fixed_on: list[np.ndarray] = []
    cur = input_vars
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z_vars = encode_affine(ctx, cur, w, b, prefix=f"z{i}_")
        layer_dec = []
        s_vars = []
        on_mask = np.zeros(len(z_vars), dtype=bool)
        for j, zv in enumerate(z_vars):
            dec = encode_conditional(ctx, zv, name=f"a{i}_{j}")
            if not dec.is_fixed:
                binary_map[dec.var] = (i, j)
            elif dec.fixed == 1:
                on_mask[j] = True
            layer_dec.append(dec)
            s_vars.append(encode_switch(ctx, zv, dec, name=f"p{i}_{j}"))
        decisions.append(layer_dec)
        pre_vars.append(z_vars)
        fwd_switch_vars.append(s_vars)
        fixed_on.append(on_mask)
        cur = s_vars

    # backward pass; reuses each neuron's binary in its switch
    z_ball_vars: list[int] = []
    z_pos: list[int] = []
    z_neg: list[int] = []
    bwd_value_vars: list[list[int]] = [[] for _ in range(d)]
    bwd_switch_vars: list[list[int]] = [[] for _ in range(d)]
    if output_norm is None:
        head_row = net.head[0]
        sw = [
            encode_switch_const(ctx, float(head_row[j]), decisions[d - 1][j],
                                name=f"q{d-1}_{j}")
            for j in range(len(head_row))
        ]
    else:
        z_ball_vars, z_pos, z_neg = encode_dual_ball(ctx, net.output_dim, output_norm)
        v_vars = encode_affine(ctx, z_ball_vars, net.head.T, prefix=f"y{d-1}_")
        bwd_value_vars[d - 1] = v_vars
        sw = [
            encode_switch(ctx, v, decisions[d - 1][j], name=f"q{d-1}_{j}")
            for j, v in enumerate(v_vars)
        ]
    bwd_switch_vars[d - 1] = sw
    for i in range(d - 1, 0, -1):
        v_vars = encode_affine(ctx, sw, net.weights[i].T, prefix=f"y{i-1}_")
        bwd_value_vars[i - 1] = v_vars
        sw = [
            encode_switch(ctx, v, decisions[i - 1][j], name=f"q{i-1}_{j}")
            for j, v in enumerate(v_vars)
        ]
        bwd_switch_vars[i - 1] = sw
    grad_vars = encode_affine(ctx, sw, net.weights[0].T, prefix="g")

    abs_vars: list[int] = []
    abs_signs: list[int | None] = []
    for j, g in enumerate(grad_vars):
        y, sign = encode_abs(ctx, g, name=f"ag{j}")
        abs_vars.append(y)
        abs_signs.append(sign)
    fold_steps = []
    if alpha == "linf":
        model.set_objective({v: 1.0 for v in abs_vars})
    else:
        t, fold_steps = encode_max(ctx, abs_vars, name="gmax")
        model.set_objective({t: 1.0})

    return LipMIPProblem(
        model=model,
        net=net,
        domain=domain,
        alpha=alpha,
        output_norm=output_norm,
        input_vars=input_vars,
        z_ball_vars=z_ball_vars,
        z_pos_vars=z_pos,
        z_neg_vars=z_neg,
        grad_vars=grad_vars,
        abs_vars=abs_vars,
        abs_sign_vars=abs_signs,
        max_fold_steps=fold_steps,
        binary_map=binary_map,
        pre_vars=pre_vars,
        fwd_switch_vars=fwd_switch_vars,
        bwd_value_vars=bwd_value_vars,
        bwd_switch_vars=bwd_switch_vars,
        fixed_on=fixed_on,
    )


def lp_relaxation(model: MIPModel) -> MIPModel:
    """Every binary re-typed continuous in [0, 1]."""
    return model.lp_relaxation()


def feasible_assignment(problem: LipMIPProblem, x, rule: ZeroRule = ALWAYS_ZERO,
                        z=None) -> np.ndarray:
    """Full variable assignment realizing input x under a given tie rule.

    Used to validate the feasible set: the returned point must satisfy every
    model constraint, and the model objective at it must equal the dual norm
    of the corresponding chain-rule Jacobian (contracted with z when vector
    valued).
    """
    net = problem.net
    model = problem.model
    point = np.zeros(model.num_vars)
    x = np.asarray(x, dtype=float).reshape(-1)
    for j, v in enumerate(problem.input_vars):
        point[v] = x[j]
    pattern = pattern_at(net, x, tie_tol=0.0)
    mults = []
    for i, lay in enumerate(pattern.layers):
        lam = np.zeros(lay.shape[0])
        for j in range(lay.shape[0]):
            if lay[j] == 1:
                lam[j] = 1.0
            elif lay[j] == -1:
                lam[j] = rule.value_at(i, j)
        mults.append(lam)
    zs = preactivations(net, x)
    for i in range(net.depth):
        for j, v in enumerate(problem.pre_vars[i]):
            point[v] = zs[i][j]
        for j, v in enumerate(problem.fwd_switch_vars[i]):
            point[v] = zs[i][j] * mults[i][j]
    for bvar, (i, j) in problem.binary_map.items():
        point[bvar] = mults[i][j]
    d = net.depth
    if problem.output_norm is None:
        y = net.head[0].astype(float).copy()
    else:
        if z is None:
            raise ValueError("vector-valued assignment needs a dual vector z")
        z = np.asarray(z, dtype=float).reshape(-1)
        for j, v in enumerate(problem.z_ball_vars):
            point[v] = z[j]
        for j, v in enumerate(problem.z_pos_vars):
            point[v] = max(z[j], 0.0)
        for j, v in enumerate(problem.z_neg_vars):
            point[v] = max(-z[j], 0.0)
        y = net.head.T @ z
        for j, v in enumerate(problem.bwd_value_vars[d - 1]):
            point[v] = y[j]
    sw = y * mults[d - 1]
    for j, v in enumerate(problem.bwd_switch_vars[d - 1]):
        point[v] = sw[j]
    for i in range(d - 1, 0, -1):
        y = net.weights[i].T @ sw
        for j, v in enumerate(problem.bwd_value_vars[i - 1]):
            point[v] = y[j]
        sw = y * mults[i - 1]
        for j, v in enumerate(problem.bwd_switch_vars[i - 1]):
            point[v] = sw[j]
    g = net.weights[0].T @ sw
    for j, v in enumerate(problem.grad_vars):
        point[v] = g[j]
    for j, (v, sign) in enumerate(zip(problem.abs_vars, problem.abs_sign_vars)):
        point[v] = abs(g[j])
        if sign is not None:
            point[sign] = 1.0 if g[j] < 0 else 0.0
    cur = abs(g[0]) if len(g) else 0.0
    for (nxt_var, relu_var, relu_bin, fold_var) in problem.max_fold_steps:
        nxt = point[nxt_var]
        srel = max(nxt - cur, 0.0)
        point[relu_var] = srel
        if relu_bin is not None:
            point[relu_bin] = 1.0 if nxt - cur > 0 else 0.0
        cur = cur + srel
        point[fold_var] = cur
    return point
