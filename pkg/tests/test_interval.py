import numpy as np
import pytest

from lipcert import interval
from lipcert.interval import (
    BoolBox,
    Hyperbox,
    UNKNOWN,
    fastlip,
    max_norm_over_box,
    propagate,
    push_affine,
    push_conditional,
    push_switch,
)
from lipcert.network import (
    ALWAYS_ONE,
    ALWAYS_ZERO,
    OFF,
    ON,
    ZeroRule,
    affine_network,
    chain_rule_jacobian,
    identity_network,
    pattern_at,
    preactivations,
    random_he,
)


def test_hyperbox_validation():
    with pytest.raises(ValueError):
        Hyperbox([0.0], [-1.0])
    with pytest.raises(ValueError):
        Hyperbox([0.0], [np.inf])
    box = Hyperbox.from_center_radius([1.0, -1.0], 0.5)
    assert box.l == pytest.approx([0.5, -1.5])
    assert box.u == pytest.approx([1.5, -0.5])


def test_push_affine_identity():
    box = Hyperbox([-1, -1], [1, 1])
    out = push_affine(box, np.eye(2), np.zeros(2))
    assert out.l == pytest.approx([-1, -1])
    assert out.u == pytest.approx([1, 1])


def test_push_affine_sum_row():
    box = Hyperbox([-1, -1], [1, 1])
    out = push_affine(box, np.array([[1.0, 1.0]]), np.array([1.0]))
    assert out.l == pytest.approx([-1.0])
    assert out.u == pytest.approx([3.0])


def test_push_affine_sampling_soundness():
    rng = np.random.Generator(np.random.Philox(key=42))
    for _ in range(5):
        n, m = int(rng.integers(2, 6)), int(rng.integers(1, 5))
        w = rng.normal(size=(m, n))
        b = rng.normal(size=m)
        box = Hyperbox(-rng.uniform(0.1, 2, n), rng.uniform(0.1, 2, n))
        out = push_affine(box, w, b)
        xs = box.sample(rng, 10 ** 4)
        ys = xs @ w.T + b
        assert np.all(ys >= out.l - 1e-9)
        assert np.all(ys <= out.u + 1e-9)


def test_push_conditional_cases():
    box = Hyperbox([1.0, -2.0, -1.0, 0.0, -3.0], [2.0, -1.0, 1.0, 2.0, 0.0])
    v = push_conditional(box).v
    assert v[0] == ON       # [1, 2]
    assert v[1] == OFF      # [-2, -1]
    assert v[2] == UNKNOWN  # [-1, 1]
    assert v[3] == UNKNOWN  # l = 0 boundary maps to ?
    assert v[4] == UNKNOWN  # u = 0 boundary maps to ?


def test_push_switch_cases():
    box = Hyperbox([2.0, -2.0, 2.0], [3.0, 3.0, 3.0])
    bools = BoolBox(np.array([OFF, UNKNOWN, UNKNOWN], dtype=np.int8))
    out = push_switch(box, bools)
    assert (out.l[0], out.u[0]) == (0.0, 0.0)
    assert (out.l[1], out.u[1]) == (-2.0, 3.0)
    assert (out.l[2], out.u[2]) == (0.0, 3.0)
    on = push_switch(Hyperbox([2.0], [3.0]), BoolBox(np.array([ON], dtype=np.int8)))
    assert (on.l[0], on.u[0]) == (2.0, 3.0)


def test_propagate_all_on_degenerates_to_jacobian():
    net = affine_network([2.0, -1.0], b=0.5, bound=3.0)
    res = propagate(net, Hyperbox([-1, -1], [1, 1]))
    assert all(np.all(bb.v == ON) for bb in res.activation_boolboxes)
    g = res.gradient_box
    assert g.l == pytest.approx([2.0, -1.0], abs=1e-12)
    assert g.u == pytest.approx([2.0, -1.0], abs=1e-12)


def test_propagate_identity_gradient_box():
    net = identity_network()
    res = propagate(net, Hyperbox([-1.0], [1.0]))
    assert res.gradient_box.l == pytest.approx([0.0])
    assert res.gradient_box.u == pytest.approx([2.0])


def test_propagate_sampling_soundness_all_rules():
    rng = np.random.Generator(np.random.Philox(key=7))
    for seed in (0, 1, 2):
        net = random_he([3, 6, 5, 1], seed=seed)
        box = Hyperbox.from_center_radius(rng.normal(size=3), 0.8)
        res = propagate(net, box)
        xs = box.sample(rng, 1000)
        for x in xs:
            for z, zbox in zip(preactivations(net, x), res.pre_activation_boxes):
                assert np.all(z >= zbox.l - 1e-9) and np.all(z <= zbox.u + 1e-9)
            for rule in (ALWAYS_ZERO, ALWAYS_ONE):
                jac = chain_rule_jacobian(net, x, rule)[0]
                gb = res.gradient_box
                assert np.all(jac >= gb.l - 1e-9) and np.all(jac <= gb.u + 1e-9)


def test_propagate_soundness_at_tie_points():
    # the identity net at 0 ties both kernels; every per-neuron rule must
    # stay inside the gradient box
    net = identity_network()
    res = propagate(net, Hyperbox([-1.0], [1.0]))
    for a in (0, 1):
        for b in (0, 1):
            rule = ZeroRule.per_neuron({(0, 0): a, (0, 1): b})
            jac = chain_rule_jacobian(net, [0.0], rule)[0]
            assert res.gradient_box.contains(jac, tol=1e-12)


def test_propagate_monotone_in_domain():
    net = random_he([3, 5, 5, 1], seed=4)
    inner = Hyperbox.from_center_radius([0.1, -0.2, 0.3], 0.4)
    outer = Hyperbox.from_center_radius([0.0, 0.0, 0.2], 1.0)
    assert outer.contains_box(inner)
    rin = propagate(net, inner)
    rout = propagate(net, outer)
    for bi, bo in zip(rin.pre_activation_boxes, rout.pre_activation_boxes):
        assert bo.contains_box(bi, tol=1e-12)
    for bi, bo in zip(rin.backward_boxes, rout.backward_boxes):
        assert bo.contains_box(bi, tol=1e-12)


def test_fastlip_affine_closed_form():
    w = np.array([1.5, -2.0, 0.25])
    net = affine_network(w, b=0.7, bound=2.0)
    box = Hyperbox.from_center_radius(np.zeros(3), 1.0)
    assert fastlip(net, box, "l1") == pytest.approx(np.abs(w).sum(), abs=1e-12)
    assert fastlip(net, box, "linf") == pytest.approx(np.abs(w).max(), abs=1e-12)


def test_fastlip_identity():
    assert fastlip(identity_network(), Hyperbox([-1.0], [1.0]), "l1") == pytest.approx(2.0)


def test_max_norm_over_box():
    box = Hyperbox([-3.0, 1.0], [2.0, 4.0])
    assert max_norm_over_box(box, "l1") == pytest.approx(7.0)
    assert max_norm_over_box(box, "linf") == pytest.approx(4.0)


def test_forced_neurons_tighten():
    net = random_he([3, 5, 1], seed=2)
    box = Hyperbox.from_center_radius(np.zeros(3), 1.0)
    base = propagate(net, box)
    free = [
        (0, int(j))
        for j in np.flatnonzero(base.activation_boolboxes[0].v == UNKNOWN)
    ]
    assert free
    forced = propagate(net, box, forced={free[0]: 0})
    gb_base = base.gradient_box
    gb_forced = forced.gradient_box
    assert np.all(gb_forced.l >= gb_base.l - 1e-12)
    assert np.all(gb_forced.u <= gb_base.u + 1e-12)
