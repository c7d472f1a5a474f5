import numpy as np

from qbayes.algebra import AlgebraElement, MultiMatrixAlgebra, matrix_units
from qbayes.channel import from_hom, is_ucp
from qbayes.errors import InternalInconsistency
from qbayes.generators import (
    epr_instance,
    nonproduct_faithful_instance,
    product_instance,
    random_complex,
    random_kraus_channel,
    random_state,
    rankdef_product_instance,
)
from qbayes.modular import (
    ac_condition_algebraic,
    ac_condition_sampled,
    corner_map,
    modular_at,
    modular_flow,
)
from qbayes.state import State, evaluate


def random_element(rng, alg):
    return AlgebraElement(alg, tuple(random_complex(rng, d, d) for d in alg.block_dims))


def test_flow_identity_at_zero():
    rng = np.random.default_rng(0)
    alg = MultiMatrixAlgebra((3,))
    omega = random_state(rng, alg)
    flow = modular_flow(omega)
    A = random_element(rng, alg)
    assert (modular_at(flow, 0.0, A) - A).norm() < 1e-12


def test_flow_fixes_commuting_elements():
    alg = MultiMatrixAlgebra((3,))
    omega = State(alg, (1.0,), (np.diag([0.5, 0.3, 0.2]),))
    flow = modular_flow(omega)
    A = AlgebraElement(alg, (np.diag([1.0, 2.0, 3.0]).astype(complex),))
    for t in (0.3, -1.1, np.pi):
        assert (modular_at(flow, t, A) - A).norm() < 1e-12


def test_flow_group_law_and_invariance():
    rng = np.random.default_rng(1)
    alg = MultiMatrixAlgebra((2, 3))
    omega = random_state(rng, alg)
    flow = modular_flow(omega)
    A = random_element(rng, alg)
    t, s = 0.3, -1.1
    lhs = modular_at(flow, t + s, A)
    rhs = modular_at(flow, t, modular_at(flow, s, A))
    assert (lhs - rhs).norm() < 1e-10
    for E in matrix_units(alg):
        for tt in (0.5, -0.5, np.pi):
            assert abs(evaluate(omega, modular_at(flow, tt, E)) - evaluate(omega, E)) < 1e-10


def test_flow_multiplicative_and_star_on_support():
    rng = np.random.default_rng(2)
    alg = MultiMatrixAlgebra((3,))
    omega = random_state(rng, alg)  # faithful
    flow = modular_flow(omega)
    A = random_element(rng, alg)
    B = random_element(rng, alg)
    t = 0.7
    lhs = modular_at(flow, t, A @ B)
    rhs = modular_at(flow, t, A) @ modular_at(flow, t, B)
    assert (lhs - rhs).norm() < 1e-10
    assert (modular_at(flow, t, A.adjoint()) - modular_at(flow, t, A).adjoint()).norm() < 1e-10


def test_flow_annihilates_off_support():
    alg = MultiMatrixAlgebra((2,))
    omega = State(alg, (1.0,), (np.diag([1.0, 0.0]),))
    flow = modular_flow(omega)
    A = AlgebraElement(alg, (np.array([[1.0, 2.0], [3.0, 4.0]], dtype=complex),))
    out = modular_at(flow, 0.8, A)
    np.testing.assert_allclose(out.blocks[0], np.diag([1.0, 0.0]), atol=1e-12)


def test_corner_map_faithful_is_the_channel_itself():
    h, omega = nonproduct_faithful_instance()
    F = from_hom(h)
    cm = corner_map(F, omega)
    assert cm.channel.close_to(F, 1e-10)
    assert cm.square_residual < 1e-10


def test_corner_map_epr_compresses_to_scalar():
    h, omega = epr_instance()
    cm = corner_map(from_hom(h), omega)
    assert cm.channel.target.block_dims == (1,)
    assert cm.channel.source.block_dims == (2,)
    assert is_ucp(cm.channel)


def test_corner_map_state_preservation():
    rng = np.random.default_rng(3)
    source = MultiMatrixAlgebra((2,))
    target = MultiMatrixAlgebra((4,))
    F = random_kraus_channel(rng, source, target, 2)
    omega = random_state(rng, target, ranks=(2,))
    cm = corner_map(F, omega)
    for E in matrix_units(cm.channel.source):
        lhs = evaluate(cm.omega_restricted, cm.channel.apply(E))
        rhs = evaluate(cm.xi_restricted, E)
        assert abs(lhs - rhs) < 1e-9


def test_ac_product_true():
    h, omega = product_instance()
    report = ac_condition_algebraic(from_hom(h), omega)
    assert report.ok
    assert report.max_residual < 1e-12


def test_ac_epr_true_nonproduct_false():
    h, omega = epr_instance()
    assert ac_condition_algebraic(from_hom(h), omega).ok
    h2, omega2 = nonproduct_faithful_instance()
    report = ac_condition_algebraic(from_hom(h2), omega2)
    assert not report.ok
    assert report.max_residual > 1e-3


def test_ac_rankdef_product_true():
    h, omega = rankdef_product_instance()
    assert ac_condition_algebraic(from_hom(h), omega).ok


def test_ac_residual_linear_in_the_probe():
    # the single-equation residual is linear in the probe element, so
    # rescaling a matrix unit rescales its residual and cannot flip verdicts
    h, omega = nonproduct_faithful_instance()
    F = from_hom(h)
    cm = corner_map(F, omega)
    chan = cm.channel
    rho = cm.omega_restricted.densities[0]
    sig = cm.xi_restricted.densities[0]

    def residual(E):
        lhs = chan.apply(AlgebraElement(chan.source, (sig @ E,))).blocks[0] @ rho
        rhs = rho @ chan.apply(AlgebraElement(chan.source, (E @ sig,))).blocks[0]
        return np.linalg.norm(lhs - rhs)

    E = np.zeros((2, 2), dtype=complex)
    E[0, 1] = 1.0
    base = residual(E)
    assert base > 0
    np.testing.assert_allclose(residual(3.7 * E), 3.7 * base, rtol=1e-10)


def test_ac_sampled_agrees_product_and_epr():
    h, omega = product_instance()
    rep = ac_condition_sampled(from_hom(h), omega)
    assert rep.ok
    h2, omega2 = epr_instance()
    assert ac_condition_sampled(from_hom(h2), omega2).ok
    h3, omega3 = nonproduct_faithful_instance()
    assert not ac_condition_sampled(from_hom(h3), omega3).ok


def test_ac_sampled_t_zero_always_passes():
    h, omega = nonproduct_faithful_instance()
    F = from_hom(h)
    algebraic = ac_condition_algebraic(F, omega)
    cm = algebraic.corner
    flow_o = modular_flow(cm.omega_restricted)
    flow_x = modular_flow(cm.xi_restricted)
    worst = 0.0
    for E in matrix_units(cm.channel.source):
        lhs = cm.channel.apply(modular_at(flow_x, 0.0, E))
        rhs = modular_at(flow_o, 0.0, cm.channel.apply(E))
        worst = max(worst, (lhs - rhs).norm())
    assert worst < 1e-12


def test_ac_dual_method_agreement_randomized():
    rng = np.random.default_rng(4)
    disagreements = 0
    for trial in range(30):
        kind = trial % 3
        if kind == 0:
            h, omega = product_instance()
            F = from_hom(h)
        elif kind == 1:
            source = MultiMatrixAlgebra((2,))
            target = MultiMatrixAlgebra((3,))
            F = random_kraus_channel(rng, source, target, 2)
            omega = random_state(rng, target)
        else:
            source = MultiMatrixAlgebra((2,))
            target = MultiMatrixAlgebra((4,))
            F = random_kraus_channel(rng, source, target, 2)
            omega = random_state(rng, target, ranks=(2,))
        try:
            ac_condition_sampled(F, omega)
        except InternalInconsistency:
            disagreements += 1
    assert disagreements == 0
