import numpy as np
import pytest

from qbayes.algebra import MultiMatrixAlgebra, matrix_units
from qbayes.bayesinv import (
    battery,
    bayes_inverse,
    compositionality_check,
    existence,
    left_right_bayes,
    verify_bayes,
)
from qbayes.channel import (
    Channel,
    LinearMap,
    compose,
    from_hom,
    hs_adjoint,
    identity_channel,
    is_ucp,
)
from qbayes.errors import ShapeMismatch
from qbayes.feasibility import bayes_feasibility
from qbayes.generators import (
    epr_instance,
    inclusion_hom,
    nonproduct_faithful_instance,
    product_instance,
    product_state_for_hom,
    random_hom,
    random_state,
    random_unitary,
    rankdef_product_instance,
)
from qbayes.jsonio import loads, problem_from_json
from qbayes.linalg import dagger, frobenius, kron, partial_trace_right
from qbayes.state import State, evaluate, pullback

from conftest import fixture_path


def pinned_counterexample():
    data = loads(fixture_path("battery_pass_no_inverse.json").read_text())
    problem = problem_from_json(data)
    return problem["channel"], problem["state"]


def test_left_right_bayes_identity_channel():
    rng = np.random.default_rng(0)
    alg = MultiMatrixAlgebra((3,))
    omega = random_state(rng, alg, ranks=(2,))
    F = identity_channel(alg)
    GL, GR = left_right_bayes(F, omega)
    # on the support both reduce to the two-sided compression
    from qbayes.state import support

    P = support(omega).projection
    for E in matrix_units(alg):
        target = P @ E @ P
        assert ((GL.apply(E) @ P) - target).norm() < 1e-9 or (
            GL.apply(E) - target
        ).norm() < 1e-9


def test_left_right_bayes_product_partial_trace():
    h, omega = product_instance()
    F = from_hom(h)
    GL, GR = left_right_bayes(F, omega)
    tau = np.diag([0.3, 0.7])
    for E in matrix_units(h.target):
        expected = partial_trace_right(
            kron(tau, np.eye(2)) @ E.blocks[0], 2, 2
        ).T  # tr_k over the tau factor leaves the source block
        # direct formula: G(A) = tr_k((tau (x) 1) A)
        got = GL.apply(E).blocks[0]
        direct = np.einsum("uw,wsut->st", tau, E.blocks[0].reshape(2, 2, 2, 2))
        np.testing.assert_allclose(got, direct, atol=1e-10)
        np.testing.assert_allclose(GR.apply(E).blocks[0], direct, atol=1e-10)


def test_left_right_pairing_residual_randomized():
    rng = np.random.default_rng(1)
    for trial in range(10):
        h = random_hom(rng, (2, 2), max_mult=2)
        omega = product_state_for_hom(rng, h)
        F = from_hom(h)
        GL, GR = left_right_bayes(F, omega)  # construction verifies pairing
        xi = pullback(omega, F)
        for E_a in list(matrix_units(h.target))[:6]:
            for E_b in list(matrix_units(h.source))[:6]:
                lhs = evaluate(omega, E_a @ F.apply(E_b))
                rhs = evaluate(xi, GL.apply(E_a) @ E_b)
                assert abs(lhs - rhs) < 1e-8


def test_battery_product_passes_with_partial_trace_formula():
    h, omega = product_instance()
    F = from_hom(h)
    analysis = battery(F, omega)
    assert analysis.passed
    for name, rep in analysis.conditions.items():
        assert rep.ok, name
        assert rep.residual < 1e-10
    tau = np.diag([0.3, 0.7])
    for E in matrix_units(h.target):
        got = analysis.support_map.apply(E).blocks[0]
        direct = np.einsum("uw,wsut->st", tau, E.blocks[0].reshape(2, 2, 2, 2))
        np.testing.assert_allclose(got, direct, atol=1e-9)


def test_battery_epr_fails_every_condition_consistently():
    h, omega = epr_instance()
    analysis = battery(from_hom(h), omega)
    assert not analysis.passed
    for name, rep in analysis.conditions.items():
        assert not rep.ok, name


def test_battery_nonproduct_faithful_fails():
    h, omega = nonproduct_faithful_instance()
    analysis = battery(from_hom(h), omega)
    assert not analysis.passed
    assert analysis.conditions["density_intertwining"].residual > 1e-4
    # no UCP candidate satisfies the pairing: independent feasibility check
    feas = bayes_feasibility(from_hom(h), omega, max_iterations=4000)
    assert feas.feasible is False


def test_battery_choi_split():
    h, omega = rankdef_product_instance()
    F = from_hom(h)
    analysis = battery(F, omega)
    assert analysis.passed
    xi = analysis.xi
    # A + B equals the unsplit forced-row Choi sum (support + co-support parts)
    from qbayes.bayesinv import _pair_data
    from qbayes.linalg import DEFAULT_TOL

    pairs = _pair_data(F, omega, xi, DEFAULT_TOL)
    for pd in pairs:
        m = pd.rho_w.shape[0]
        n = pd.sig_w.shape[0]
        full = pd.GL.transpose(0, 2, 1, 3).reshape(m * n, m * n)
        split = analysis.choi_A[(pd.x, pd.y)] + analysis.choi_B[(pd.x, pd.y)]
        assert frobenius(full - split) < 1e-12


def test_petz_formula_matches_on_faithful_instances():
    rng = np.random.default_rng(2)
    for trial in range(5):
        h, omega = product_instance()
        F = from_hom(h)
        analysis = battery(F, omega)
        assert analysis.passed
        assert analysis.petz_map is not None
        assert analysis.support_map.close_to(analysis.petz_map, 1e-9)
        report = verify_bayes(F, Channel(F.target, F.source, analysis.petz_map.tensors), omega)
        assert report.pairing_residual < 1e-8


def test_unitary_conjugation_battery_and_inverse():
    rng = np.random.default_rng(3)
    alg = MultiMatrixAlgebra((3,))
    U = random_unitary(rng, 3)
    F = Channel(
        alg, alg,
        LinearMap.from_block_fn(alg, alg, lambda x, y, E: U @ E @ dagger(U)).tensors,
    )
    omega = random_state(rng, alg, ranks=(2,))
    ok, inverse, analysis, result = bayes_inverse(F, omega)
    assert analysis.passed
    assert ok
    report = verify_bayes(F, inverse, omega)
    assert report.ok
    # the inverse acts as conjugation by U* on the support
    xi = pullback(omega, F)
    ident = identity_channel(alg)
    from qbayes.channel import ae_equal

    assert ae_equal(compose(inverse, F), ident, xi)


def test_existence_rankdef_product_constructs_and_verifies():
    h, omega = rankdef_product_instance()
    F = from_hom(h)
    analysis = battery(F, omega)
    result = existence(analysis)
    assert result.exists
    assert result.margin >= -1e-9
    assert result.verification.ok
    assert result.verification.pairing_residual < 1e-8
    assert is_ucp(result.inverse)
    feas = bayes_feasibility(F, omega)
    assert feas.feasible is True


def test_existence_pinned_counterexample():
    F, omega = pinned_counterexample()
    analysis = battery(F, omega)
    assert analysis.passed
    result = existence(analysis)
    assert not result.exists
    assert result.margin < -0.05
    feas = bayes_feasibility(F, omega, max_iterations=8000)
    assert feas.feasible is False


def test_existence_requires_passed_battery():
    h, omega = epr_instance()
    analysis = battery(from_hom(h), omega)
    with pytest.raises(ValueError):
        existence(analysis)


def test_verify_bayes_rejects_corrupted_candidate():
    h, omega = product_instance()
    F = from_hom(h)
    ok, inverse, _, _ = bayes_inverse(F, omega)
    assert ok
    # corrupt: naive normalized adjoint is not the inverse
    Fs = hs_adjoint(F)
    tensors = [[0.5 * Fs.tensors[0][0]]]
    candidate = LinearMap(F.target, F.source, tensors)
    report = verify_bayes(F, candidate, omega)
    assert not report.ok
    assert report.pairing_residual > 1e-3


def test_verify_bayes_identity():
    rng = np.random.default_rng(4)
    alg = MultiMatrixAlgebra((2, 2))
    omega = random_state(rng, alg)
    ident = identity_channel(alg)
    report = verify_bayes(ident, ident, omega)
    assert report.ok
    assert report.pairing_residual < 1e-12


def test_verify_bayes_shape_check():
    h, omega = product_instance()
    F = from_hom(h)
    with pytest.raises(ShapeMismatch):
        verify_bayes(F, F, omega)


def test_compositionality_chain_of_embeddings():
    rng = np.random.default_rng(5)
    # chain M_2 -> M_4 -> M_8 with product states built backwards
    h1 = inclusion_hom(2, 2)   # M_2 -> M_4
    h2 = inclusion_hom(2, 4)   # M_4 -> M_8
    tau1 = np.diag([0.3, 0.7])
    tau2 = np.diag([0.45, 0.55])
    sigma = np.diag([0.6, 0.4])
    rho_mid = np.kron(tau1, sigma)
    rho_top = np.kron(tau2, rho_mid)
    omega = State(h2.target, (1.0,), (rho_top,))
    F = from_hom(h2)
    G = from_hom(h1)
    report = compositionality_check(F, G, omega)
    assert report.identity_ok
    assert report.composite_ok
    assert report.composite_residual < 1e-8


def test_compositionality_two_extensions_differ_off_support():
    # a collapse channel with a singular pullback leaves strict slack in the
    # existence inequality, so distinct admissible extensions exist and agree
    # only almost everywhere
    alg = MultiMatrixAlgebra((2,))
    sigma0 = np.diag([1.0, 0.0])
    F = Channel(
        alg, alg,
        LinearMap.from_block_fn(
            alg, alg, lambda x, y, E: np.trace(sigma0 @ E) * np.eye(2)
        ).tensors,
    )
    omega = State(alg, (1.0,), (np.diag([1.0, 0.0]),))
    h_inner = inclusion_hom(1, 2)  # identity-shaped embedding M_2 -> M_2
    report = compositionality_check(F, from_hom(h_inner), omega)
    assert report.identity_ok
    assert report.composite_ok
    assert report.uniqueness_ae_ok is True
    assert report.extensions_differ is True


def test_seven_way_agreement_randomized_ensemble():
    rng = np.random.default_rng(6)
    from qbayes.errors import InternalInconsistency
    from qbayes.generators import random_kraus_channel

    inconsistencies = 0
    passes = 0
    for trial in range(40):
        kind = trial % 4
        if kind == 0:
            h, omega = product_instance()
            F = from_hom(h)
        elif kind == 1:
            F = random_kraus_channel(
                rng, MultiMatrixAlgebra((2,)), MultiMatrixAlgebra((3,)), 2
            )
            omega = random_state(rng, MultiMatrixAlgebra((3,)))
        elif kind == 2:
            F = random_kraus_channel(
                rng, MultiMatrixAlgebra((2,)), MultiMatrixAlgebra((4,)), 2
            )
            omega = random_state(rng, MultiMatrixAlgebra((4,)), ranks=(2,))
        else:
            h, omega = rankdef_product_instance()
            F = from_hom(h)
        try:
            analysis = battery(F, omega)
            passes += int(analysis.passed)
        except InternalInconsistency:
            inconsistencies += 1
    assert inconsistencies == 0
    assert passes >= 20  # the constructed instances all pass
