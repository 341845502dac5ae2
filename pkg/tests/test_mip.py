import numpy as np
import pytest

from lipcert import lp, mip, norms
from lipcert.interval import Hyperbox
from lipcert.mip import (
    BinDecision,
    EncodingContext,
    MIPModel,
    build_lipmip_model,
    encode_abs,
    encode_affine,
    encode_conditional,
    encode_cross_norm_ball,
    encode_max,
    encode_switch,
    feasible_assignment,
)
from lipcert.network import (
    ALWAYS_ONE,
    ALWAYS_ZERO,
    ZeroRule,
    affine_network,
    chain_rule_jacobian,
    identity_network,
    pattern_at,
    random_he,
)


def feasible(model, assignment, tol=1e-7):
    point = np.zeros(model.num_vars)
    for var, val in assignment.items():
        point[var] = val
    return model.check_point(point, tol=tol) == []


def value_range(model, var, fixed, tol=1e-9):
    """Min and max of one variable over the exact mixed-integer feasible set
    with some variables pinned; enumerates every free binary (tiny models)."""
    import itertools

    free_bins = [b for b in model.binary_vars if b not in fixed]
    prob = model.to_lp_problem()
    cmax = np.zeros(model.num_vars)
    cmax[var] = 1.0
    best = None
    for bits in itertools.product((0.0, 1.0), repeat=len(free_bins)):
        lo = np.array(model.lo)
        hi = np.array(model.hi)
        for v, val in fixed.items():
            lo[v] = hi[v] = val
        for v, val in zip(free_bins, bits):
            lo[v] = hi[v] = val
        prob_b = lp.LPProblem(prob.objective, prob.a, prob.relations, prob.rhs, lo, hi)
        smax = lp.SimplexSolver(prob_b).solve(objective=cmax)
        if smax.status != lp.OPTIMAL:
            continue
        smin = lp.SimplexSolver(prob_b).solve(objective=-cmax)
        pair = (-smin.objective_value, smax.objective_value)
        best = pair if best is None else (min(best[0], pair[0]), max(best[1], pair[1]))
    return best


# -- affine ---------------------------------------------------------------


def test_encode_affine_identity():
    ctx = EncodingContext()
    xs = [ctx.model.add_var(-1, 1, name=f"x{i}") for i in range(2)]
    out = encode_affine(ctx, xs, np.eye(2))
    assert feasible(ctx.model, {xs[0]: 0.3, xs[1]: -0.7, out[0]: 0.3, out[1]: -0.7})
    assert not feasible(ctx.model, {xs[0]: 0.3, xs[1]: -0.7, out[0]: 0.4, out[1]: -0.7})


def test_encode_affine_bounds_by_interval():
    ctx = EncodingContext()
    xs = [ctx.model.add_var(0, 1, name=f"x{i}") for i in range(2)]
    out = encode_affine(ctx, xs, np.array([[1.0, 1.0]]), np.array([-1.0]))
    assert ctx.model.lo[out[0]] == pytest.approx(-1.0)
    assert ctx.model.hi[out[0]] == pytest.approx(1.0)


def test_encode_affine_lp_feasibility_oracle():
    rng = np.random.Generator(np.random.Philox(key=1))
    ctx = EncodingContext()
    xs = [ctx.model.add_var(-2, 2, name=f"x{i}") for i in range(3)]
    w = rng.normal(size=(2, 3))
    b = rng.normal(size=2)
    out = encode_affine(ctx, xs, w, b)
    for _ in range(20):
        x = rng.uniform(-2, 2, size=3)
        y = w @ x + b
        good = dict(zip(xs, x)) | dict(zip(out, y))
        assert feasible(ctx.model, good)
        bad = dict(good)
        bad[out[0]] = y[0] + 1e-3
        assert not feasible(ctx.model, bad, tol=1e-5)


# -- conditional ----------------------------------------------------------


def test_conditional_fixed_positive():
    ctx = EncodingContext()
    x = ctx.model.add_var(1.0, 2.0, name="x")
    before = ctx.model.num_constraints
    dec = encode_conditional(ctx, x)
    assert dec.is_fixed and dec.fixed == 1
    assert ctx.model.num_constraints == before  # no new rows


def test_conditional_fixed_negative():
    ctx = EncodingContext()
    x = ctx.model.add_var(-2.0, -1.0, name="x")
    dec = encode_conditional(ctx, x)
    assert dec.is_fixed and dec.fixed == 0


def test_conditional_free_semantics():
    ctx = EncodingContext()
    x = ctx.model.add_var(-1.0, 1.0, name="x")
    dec = encode_conditional(ctx, x)
    a = dec.var
    assert feasible(ctx.model, {x: 0.5, a: 1})
    assert not feasible(ctx.model, {x: 0.5, a: 0})
    assert feasible(ctx.model, {x: 0.0, a: 0})
    assert feasible(ctx.model, {x: 0.0, a: 1})
    assert not feasible(ctx.model, {x: -0.5, a: 1})
    assert feasible(ctx.model, {x: -0.5, a: 0})


# -- switch ----------------------------------------------------------------


def switch_ctx(l, u):
    ctx = EncodingContext()
    x = ctx.model.add_var(l, u, name="x")
    a = ctx.model.add_binary("a")
    y = encode_switch(ctx, x, BinDecision(var=a), name="y")
    return ctx, x, a, y


def test_switch_free_semantics():
    ctx, x, a, y = switch_ctx(-2.0, 3.0)
    assert feasible(ctx.model, {x: 2.0, a: 1, y: 2.0})
    assert not feasible(ctx.model, {x: 2.0, a: 1, y: 0.0})
    assert feasible(ctx.model, {x: 2.0, a: 0, y: 0.0})
    assert not feasible(ctx.model, {x: -1.0, a: 0, y: -1.0})
    assert feasible(ctx.model, {x: -1.0, a: 0, y: 0.0})
    assert feasible(ctx.model, {x: -1.0, a: 1, y: -1.0})


def test_switch_fixed_single_equality():
    ctx = EncodingContext()
    x = ctx.model.add_var(0.5, 2.0, name="x")
    n0 = ctx.model.num_constraints
    y = encode_switch(ctx, x, BinDecision(fixed=1), name="y")
    assert ctx.model.num_constraints == n0 + 1
    assert feasible(ctx.model, {x: 1.5, y: 1.5})
    assert not feasible(ctx.model, {x: 1.5, y: 0.0})
    y0 = encode_switch(ctx, x, BinDecision(fixed=0), name="y0")
    assert feasible(ctx.model, {x: 1.5, y: 1.5, y0: 0.0})


# -- abs --------------------------------------------------------------------


def test_abs_at_zero_both_branches():
    ctx = EncodingContext()
    x = ctx.model.add_var(-1.0, 1.0, name="x")
    y, a = encode_abs(ctx, x)
    assert feasible(ctx.model, {x: 0.0, y: 0.0, a: 0})
    assert feasible(ctx.model, {x: 0.0, y: 0.0, a: 1})
    assert not feasible(ctx.model, {x: 0.0, y: 0.5, a: 0})


def test_abs_unique_value_by_enumeration():
    ctx = EncodingContext()
    x = ctx.model.add_var(-3.0, 2.0, name="x")
    y, a = encode_abs(ctx, x)
    vals = []
    for av in (0.0, 1.0):
        rng = value_range(ctx.model, y, {x: -1.5, a: av})
        if rng is not None:
            lo, hi = rng
            assert lo == pytest.approx(hi, abs=1e-8)
            vals.append(lo)
    assert vals == [pytest.approx(1.5)]  # only a=1 feasible, y forced to 1.5


def test_abs_sign_fixed_degenerates():
    ctx = EncodingContext()
    x = ctx.model.add_var(0.0, 2.0, name="x")
    nbin = len(ctx.model.binary_vars)
    y, a = encode_abs(ctx, x)
    assert a is None
    assert len(ctx.model.binary_vars) == nbin
    assert feasible(ctx.model, {x: 1.2, y: 1.2})
    assert not feasible(ctx.model, {x: 1.2, y: -1.2})


def test_abs_random_graph_check():
    rng = np.random.Generator(np.random.Philox(key=9))
    ctx = EncodingContext()
    x = ctx.model.add_var(-2.0, 5.0, name="x")
    y, a = encode_abs(ctx, x)
    for _ in range(50):
        xv = float(rng.uniform(-2, 5))
        av = 1.0 if xv < 0 else 0.0
        assert feasible(ctx.model, {x: xv, y: abs(xv), a: av})
        assert not feasible(ctx.model, {x: xv, y: abs(xv) + 0.01, a: av}, tol=1e-5)
        if xv != 0:
            assert not feasible(ctx.model, {x: xv, y: -abs(xv), a: 1 - av}, tol=1e-5)


# -- max ---------------------------------------------------------------------


def test_max_single_var_is_identity():
    ctx = EncodingContext()
    x = ctx.model.add_var(0.0, 3.0, name="x")
    t, steps = encode_max(ctx, [x])
    assert t == x and steps == []


def test_max_fixed_pair():
    ctx = EncodingContext()
    xs = [ctx.model.add_var(0.0, 5.0, name=f"x{i}") for i in range(2)]
    t, _ = encode_max(ctx, xs)
    rng = value_range(ctx.model, t, {xs[0]: 1.0, xs[1]: 3.0})
    assert rng[0] == pytest.approx(3.0, abs=1e-8)
    assert rng[1] == pytest.approx(3.0, abs=1e-8)


def test_max_random_triples_lp_oracle():
    rng = np.random.Generator(np.random.Philox(key=11))
    ctx = EncodingContext()
    xs = [ctx.model.add_var(-4.0, 4.0, name=f"x{i}") for i in range(3)]
    t, _ = encode_max(ctx, xs)
    for _ in range(15):
        vals = rng.uniform(-4, 4, size=3)
        lo, hi = value_range(ctx.model, t, dict(zip(xs, vals)))
        assert lo == pytest.approx(max(vals), abs=1e-7)
        assert hi == pytest.approx(max(vals), abs=1e-7)


# -- cross-norm polytope ----------------------------------------------------


def cross_ball_feasible(z):
    ctx = EncodingContext()
    zv, zp, zn = encode_cross_norm_ball(ctx, len(z))
    prob = ctx.model.to_lp_problem()
    lo = prob.lo.copy()
    hi = prob.hi.copy()
    for var, val in zip(zv, z):
        lo[var] = hi[var] = val
    sol = lp.SimplexSolver(
        lp.LPProblem(prob.objective, prob.a, prob.relations, prob.rhs, lo, hi)
    ).solve()
    return sol.status == lp.OPTIMAL


def test_cross_ball_members():
    assert cross_ball_feasible([1.0, 0.0, 0.0])        # e_1
    assert cross_ball_feasible([1.0, -1.0, 0.0])       # e_1 - e_2
    assert cross_ball_feasible([0.0, 0.0, 0.0])        # hull contains 0
    assert not cross_ball_feasible([-1.0, 0.0, 0.0])   # -e_1 violates sum+ >= sum-
    assert not cross_ball_feasible([1.0, 1.0, 0.0])    # sum of z+ exceeds 1


# -- full model ---------------------------------------------------------------


def test_lipmip_model_affine_lp_equals_norm():
    # all conditionals fixed -> pure LP, optimum = ||w||_1 for alpha = linf
    w = np.array([1.0, -2.5, 0.5])
    net = affine_network(w, b=0.3, bound=2.0)
    box = Hyperbox.from_center_radius(np.zeros(3), 1.0)
    prob = build_lipmip_model(net, box, alpha="linf")
    assert prob.model.binary_vars == []
    sol = lp.solve_lp(prob.model.to_lp_problem())
    assert sol.status == lp.OPTIMAL
    assert sol.objective_value == pytest.approx(np.abs(w).sum(), abs=1e-9)
    prob1 = build_lipmip_model(net, box, alpha="l1")
    sol1 = lp.solve_lp(prob1.model.to_lp_problem())
    assert sol1.objective_value == pytest.approx(np.abs(w).max(), abs=1e-9)


def test_feasible_set_contains_chain_rule_points():
    rng = np.random.Generator(np.random.Philox(key=21))
    for seed in (0, 1):
        net = random_he([3, 5, 4, 1], seed=seed)
        box = Hyperbox.from_center_radius(np.zeros(3), 1.0)
        for alpha in ("linf", "l1"):
            prob = build_lipmip_model(net, box, alpha=alpha)
            for _ in range(25):
                x = rng.uniform(box.l, box.u)
                point = feasible_assignment(prob, x, ALWAYS_ZERO)
                assert prob.model.check_point(point, tol=1e-7) == []
                jac = chain_rule_jacobian(net, x, ALWAYS_ZERO)
                expect = norms.dual_vec_norm(jac[0], alpha)
                assert prob.model.objective_at(point) == pytest.approx(expect, abs=1e-9)


def test_feasible_set_tie_rules_at_identity_zero():
    net = identity_network()
    box = Hyperbox([-1.0], [1.0])
    prob = build_lipmip_model(net, box, alpha="linf")
    for a in (0, 1):
        for b in (0, 1):
            rule = ZeroRule.per_neuron({(0, 0): a, (0, 1): b})
            point = feasible_assignment(prob, [0.0], rule)
            assert prob.model.check_point(point, tol=1e-9) == []
            assert prob.model.objective_at(point) == pytest.approx(2.0 - a - b)


def test_identity_lp_relaxation_bounds_mip():
    net = identity_network()
    prob = build_lipmip_model(net, Hyperbox([-1.0], [1.0]), alpha="linf")
    relaxed = lp.solve_lp(prob.model.lp_relaxation().to_lp_problem())
    assert relaxed.status == lp.OPTIMAL
    # integral optimum is 2 (tie point); the relaxation can only be larger
    assert relaxed.objective_value >= 2.0 - 1e-9


def test_model_size_linear_in_neurons():
    for arch in ([3, 6, 1], [4, 8, 8, 1], [5, 10, 10, 10, 1]):
        net = random_he(arch, seed=0)
        box = Hyperbox.from_center_radius(np.zeros(arch[0]), 1.0)
        prob = build_lipmip_model(net, box, alpha="linf")
        budget = 20 * (net.total_neurons + net.input_dim)
        assert prob.model.num_constraints <= budget


def test_lp_relaxation_identity_when_no_binaries():
    w = np.array([1.0, 1.0])
    net = affine_network(w, bound=2.0)
    prob = build_lipmip_model(net, Hyperbox.from_center_radius(np.zeros(2), 1.0))
    relaxed = prob.model.lp_relaxation()
    assert relaxed.num_vars == prob.model.num_vars
    assert relaxed.constraints == prob.model.constraints
    assert relaxed.binary_vars == []


def test_input_constraints_shrink_optimum():
    net = random_he([2, 4, 1], seed=3)
    box = Hyperbox.from_center_radius(np.zeros(2), 1.0)
    free = build_lipmip_model(net, box, alpha="linf")
    cut = build_lipmip_model(
        net, box, alpha="linf",
        input_constraints=[({0: 1.0, 1: 1.0}, "<=", -1.5)],
    )
    v_free = lp.solve_lp(free.model.lp_relaxation().to_lp_problem()).objective_value
    v_cut = lp.solve_lp(cut.model.lp_relaxation().to_lp_problem()).objective_value
    assert v_cut <= v_free + 1e-9


def test_lp_format_export_deterministic():
    net = identity_network()
    prob = build_lipmip_model(net, Hyperbox([-1.0], [1.0]))
    text1 = prob.model.to_lp_format()
    text2 = prob.model.to_lp_format()
    assert text1 == text2
    assert text1.startswith("Maximize")
    assert "Binary" in text1
    assert text1.endswith("End\n")


def test_unbounded_domain_rejected():
    net = identity_network()
    with pytest.raises(ValueError):
        Hyperbox([-np.inf], [1.0])
    with pytest.raises(mip.ModelError):
        build_lipmip_model(net, Hyperbox([-1.0, -1.0], [1.0, 1.0]))
