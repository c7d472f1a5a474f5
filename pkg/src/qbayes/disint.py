"""Disintegrations and state-preserving conditional expectations.

For a standard-form embedding with multiplicity matrix c and a state on the
target, a disintegration exists iff every weighted target density splits as
a block-diagonal stack of products q_j tau_ij (x) sigma_j over the source
sub-blocks. `factorize` extracts and verifies the certificate,
`build_disintegration` turns it into the recovery channel, and
`condexp_characterize` reaches the same verdict through an independent
sub-block product test. `takesaki_battery` and `bayes_disint_bridge` wire
the corner-map and Bayesian-inverse characterizations together and treat
any disagreement between these provably equivalent routes as a bug alarm.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .algebra import (
    HomSpec,
    MultiMatrixAlgebra,
    matrix_units,
)
from .bayesinv import battery, bayes_inverse
from .channel import (
    Channel,
    LinearMap,
    ae_deterministic,
    ae_equal,
    compose,
    from_hom,
    identity_channel,
    is_ucp,
)
from .errors import InternalInconsistency, InvalidCertificate, ShapeMismatch
from .linalg import (
    DEFAULT_TOL,
    Tolerances,
    frobenius,
    kron,
    partial_trace_left,
    partial_trace_right,
)
from .modular import ac_condition_algebraic, corner_map
from .state import State, pullback


@dataclass(frozen=True)
class FactorizationCertificate:
    """Split data p_i rho_i = (+)_j (q_j tau_ij (x) sigma_j) and its residuals.

    tau[(i, j)] is the extracted multiplicity-factor matrix (unnormalized;
    its trace is the mixing coefficient lambda_ij). Residual entries:
    `off_diagonal` for cross sub-block mass, `reconstruction` for the
    product-form defect, `trace_sum` for the per-column normalization, and
    `mixing` for the lambda/weight bookkeeping.
    """

    hom: HomSpec
    omega: State
    xi: State
    tau: dict[tuple[int, int], np.ndarray]
    lambdas: dict[tuple[int, int], float]
    mus: dict[tuple[int, int], float]
    residuals: dict[str, float]
    ok: bool


def _weighted_block(omega: State, i: int) -> np.ndarray:
    return omega.weighted_density(i)


def factorize(
    h: HomSpec, omega: State, tol: Tolerances = DEFAULT_TOL
) -> FactorizationCertificate:
    """Extract and verify the product-form certificate of a state.

    The tau candidate is the right partial trace of the weighted (i, j)
    sub-block divided by q_j; columns with q_j = 0 get zero candidates and
    are excluded from the normalization constraint. Failure is a verdict
    carried by the certificate, not an exception.
    """
    if omega.algebra.block_dims != h.target.block_dims:
        raise ShapeMismatch("state does not live on the hom's target algebra")
    xi = pullback(omega, h, tol)
    tau: dict[tuple[int, int], np.ndarray] = {}
    lambdas: dict[tuple[int, int], float] = {}
    mus: dict[tuple[int, int], float] = {}
    res = {"off_diagonal": 0.0, "reconstruction": 0.0, "trace_sum": 0.0, "mixing": 0.0}

    for i, m_i in enumerate(h.target.block_dims):
        W = _weighted_block(omega, i)
        layout = h.sub_block_layout(i)
        # cross sub-block mass must vanish
        for a, (ja, oa, sa) in enumerate(layout):
            for b, (jb, ob, sb) in enumerate(layout):
                if a == b:
                    continue
                res["off_diagonal"] = max(
                    res["off_diagonal"], frobenius(W[oa : oa + sa, ob : ob + sb])
                )
        for j, offset, size in layout:
            c = h.multiplicities[i][j]
            n_j = h.source.block_dims[j]
            S = W[offset : offset + size, offset : offset + size]
            q_j = xi.weights[j]
            if q_j > 0.0:
                t = partial_trace_right(S, c, n_j) / q_j
                sigma_j = xi.densities[j]
                recon = q_j * kron(t, sigma_j)
                res["reconstruction"] = max(res["reconstruction"], frobenius(S - recon))
            else:
                t = np.zeros((c, c), dtype=complex)
                res["reconstruction"] = max(res["reconstruction"], frobenius(S))
            tau[(i, j)] = t
            lam = float(np.trace(t).real)
            lambdas[(i, j)] = lam
            p_i = omega.weights[i]
            mus[(i, j)] = lam * q_j / p_i if p_i > 0.0 else 0.0

    for j, n_j in enumerate(h.source.block_dims):
        if xi.weights[j] <= 0.0:
            continue
        col = sum(lambdas.get((i, j), 0.0) for i in range(h.target.n_blocks))
        res["trace_sum"] = max(res["trace_sum"], abs(col - 1.0))
    for i in range(h.target.n_blocks):
        row = sum(
            lambdas.get((i, j), 0.0) * xi.weights[j]
            for j in range(h.source.n_blocks)
        )
        res["mixing"] = max(res["mixing"], abs(row - omega.weights[i]))

    ok = all(v <= tol.eps_eq for v in res.values())
    return FactorizationCertificate(
        hom=h, omega=omega, xi=xi, tau=tau, lambdas=lambdas, mus=mus,
        residuals=res, ok=ok,
    )


def build_disintegration(
    cert: FactorizationCertificate,
    h: Optional[HomSpec] = None,
    omega: Optional[State] = None,
    tol: Tolerances = DEFAULT_TOL,
) -> Channel:
    """Recovery channel from a valid certificate.

    Source sub-blocks with positive weight are recovered by the
    tau-weighted partial trace; zero-weight columns fall back to a uniform
    tau so the channel stays unital, and source blocks missed by the
    embedding entirely get the normalized-trace branch.
    """
    if not cert.ok:
        raise InvalidCertificate(
            f"certificate residuals {cert.residuals} exceed tolerance"
        )
    h = cert.hom if h is None else h
    omega = cert.omega if omega is None else omega
    xi = cert.xi
    s = h.target.n_blocks
    missed = [
        j
        for j in range(h.source.n_blocks)
        if all(h.multiplicities[i][j] == 0 for i in range(s))
    ]

    # effective tau: certificate values, with uniform fill-in where q_j = 0
    tau_eff: dict[tuple[int, int], np.ndarray] = {}
    for j, n_j in enumerate(h.source.block_dims):
        if j in missed:
            continue
        stack = sum(h.multiplicities[i][j] for i in range(s))
        for i in range(s):
            c = h.multiplicities[i][j]
            if c == 0:
                continue
            if xi.weights[j] > 0.0:
                tau_eff[(i, j)] = cert.tau[(i, j)]
            else:
                tau_eff[(i, j)] = np.eye(c, dtype=complex) / stack

    def fn(j, i, E):
        n_j = h.source.block_dims[j]
        m_i = h.target.block_dims[i]
        if j in missed:
            return np.trace(E) * np.eye(n_j, dtype=complex) / (s * m_i)
        c = h.multiplicities[i][j]
        if c == 0:
            return np.zeros((n_j, n_j), dtype=complex)
        offset = next(o for jj, o, _ in h.sub_block_layout(i) if jj == j)
        size = c * n_j
        X = E[offset : offset + size, offset : offset + size].reshape(c, n_j, c, n_j)
        return np.einsum("uw,wsut->st", tau_eff[(i, j)], X)

    lm = LinearMap.from_block_fn(h.target, h.source, fn)
    return Channel(h.target, h.source, lm.tensors, tol=tol)


@dataclass(frozen=True)
class DisintegrationReport:
    """Outcome of the independent disintegration oracle."""

    ucp_ok: bool
    state_preservation_residual: float
    ae_left_inverse_ok: bool
    exact_left_inverse: bool
    ok: bool


def verify_disintegration(
    F: LinearMap, G: LinearMap, omega: State, tol: Tolerances = DEFAULT_TOL
) -> DisintegrationReport:
    """Check (1) G UCP, (2) xi o G = omega, (3) G o F = id a.e. w.r.t. xi.

    When the source is a single matrix block, the left-inverse identity is
    additionally required to hold exactly, and the exact flag marks an
    optimal recovery in every case.
    """
    xi = pullback(omega, F, tol)
    ucp_ok = bool(is_ucp(G, tol))
    omega_back = pullback(xi, G, tol)
    state_res = max(
        frobenius(omega_back.weighted_density(x) - omega.weighted_density(x))
        for x in range(omega.algebra.n_blocks)
    )
    ident = identity_channel(MultiMatrixAlgebra(F.source.block_dims))
    roundtrip = compose(G, F)
    ae_ok = ae_equal(roundtrip, ident, xi, tol)
    exact = roundtrip.close_to(ident, tol.eps_eq)
    ok = ucp_ok and state_res <= tol.eps_eq * 10 and ae_ok
    if F.source.n_blocks == 1:
        ok = ok and exact
    return DisintegrationReport(
        ucp_ok=ucp_ok,
        state_preservation_residual=state_res,
        ae_left_inverse_ok=ae_ok,
        exact_left_inverse=exact,
        ok=ok,
    )


@dataclass(frozen=True)
class CondexpReport:
    """Direct characterization of states admitting a preserving expectation."""

    ok: bool
    off_diagonal_residual: float
    product_residual: float
    sigma_match_residual: float
    mixing_residual: float
    mus: dict[tuple[int, int], float]
    lambdas: dict[tuple[int, int], float]
    expectation: Optional[Channel]


def condexp_characterize(
    h: HomSpec, omega: State, tol: Tolerances = DEFAULT_TOL
) -> CondexpReport:
    """Sub-block product test for a state-preserving conditional expectation.

    Independently of `factorize`, each weighted diagonal sub-block must (a)
    carry no cross-column mass and (b) split as its own two partial traces,
    with the source factor proportional to the pulled-back density. On
    success the canonical expectation is emitted.
    """
    if omega.algebra.block_dims != h.target.block_dims:
        raise ShapeMismatch("state does not live on the hom's target algebra")
    xi = pullback(omega, h, tol)
    off_res = 0.0
    prod_res = 0.0
    sigma_res = 0.0
    mus: dict[tuple[int, int], float] = {}
    lambdas: dict[tuple[int, int], float] = {}

    for i in range(h.target.n_blocks):
        W = _weighted_block(omega, i)
        layout = h.sub_block_layout(i)
        for a, (ja, oa, sa) in enumerate(layout):
            for b, (jb, ob, sb) in enumerate(layout):
                if a != b:
                    off_res = max(off_res, frobenius(W[oa : oa + sa, ob : ob + sb]))
        for j, offset, size in layout:
            c = h.multiplicities[i][j]
            n_j = h.source.block_dims[j]
            S = W[offset : offset + size, offset : offset + size]
            t = float(np.trace(S).real)
            p_i = omega.weights[i]
            if t <= tol.eps_rank:
                prod_res = max(prod_res, frobenius(S))
                mus[(i, j)] = 0.0
                lambdas[(i, j)] = 0.0
                continue
            tau_part = partial_trace_right(S, c, n_j)
            sigma_part = partial_trace_left(S, c, n_j)
            prod_res = max(prod_res, frobenius(S - kron(tau_part, sigma_part) / t))
            if xi.weights[j] > 0.0:
                sigma_res = max(
                    sigma_res, frobenius(sigma_part / t - xi.densities[j])
                )
            mus[(i, j)] = t / p_i if p_i > 0.0 else 0.0
            lambdas[(i, j)] = t / xi.weights[j] if xi.weights[j] > 0.0 else 0.0

    mixing_res = 0.0
    for i in range(h.target.n_blocks):
        if omega.weights[i] > 0.0:
            row = sum(mus.get((i, j), 0.0) for j in range(h.source.n_blocks))
            mixing_res = max(mixing_res, abs(row - 1.0))
    for j in range(h.source.n_blocks):
        col = sum(
            mus.get((i, j), 0.0) * omega.weights[i]
            for i in range(h.target.n_blocks)
        )
        mixing_res = max(mixing_res, abs(col - xi.weights[j]))

    ok = (
        off_res <= tol.eps_eq
        and prod_res <= tol.eps_eq
        and sigma_res <= tol.eps_eq * 10
        and mixing_res <= tol.eps_eq * 10
    )
    expectation = None
    if ok:
        cert = factorize(h, omega, tol)
        if not cert.ok:
            raise InternalInconsistency(
                "sub-block characterization passed but the factorization "
                f"certificate failed with residuals {cert.residuals}"
            )
        G = build_disintegration(cert, tol=tol)
        expectation = compose(from_hom(h), G)
    return CondexpReport(
        ok=ok,
        off_diagonal_residual=off_res,
        product_residual=prod_res,
        sigma_match_residual=sigma_res,
        mixing_residual=mixing_res,
        mus=mus,
        lambdas=lambdas,
        expectation=expectation,
    )


@dataclass(frozen=True)
class DisintegrationResult:
    exists: bool
    recovery: Optional[Channel]
    expectation: Optional[Channel]
    certificate: FactorizationCertificate
    report: Optional[DisintegrationReport]


def disintegrate(
    h: HomSpec, omega: State, tol: Tolerances = DEFAULT_TOL
) -> DisintegrationResult:
    """Full pipeline: factorize, build, verify."""
    cert = factorize(h, omega, tol)
    if not cert.ok:
        return DisintegrationResult(
            exists=False, recovery=None, expectation=None, certificate=cert,
            report=None,
        )
    F = from_hom(h)
    G = build_disintegration(cert, tol=tol)
    report = verify_disintegration(F, G, omega, tol)
    if not report.ok:
        raise InternalInconsistency(
            "certificate passed but the built disintegration failed the "
            f"oracle: {report}"
        )
    return DisintegrationResult(
        exists=True,
        recovery=G,
        expectation=compose(F, G),
        certificate=cert,
        report=report,
    )


@dataclass(frozen=True)
class TakesakiReport:
    """Corner-map characterization of disintegrability for embeddings."""

    corner_hom: bool
    corner_hom_residual: float
    corner_intertwining: bool
    corner_intertwining_residual: float
    corner_disintegration: bool
    full_disintegration: bool


def takesaki_battery(
    h: HomSpec, omega: State, tol: Tolerances = DEFAULT_TOL
) -> TakesakiReport:
    """Test the corner map and assert the proven equivalence chain.

    (a) multiplicativity of the corner map, (b) the corner intertwining
    condition, (c) disintegrability of the corner pair, against the full
    factorization verdict: [(a) and (b)] iff (c) iff full. Violations raise
    InternalInconsistency.
    """
    F = from_hom(h)
    cm = corner_map(F, omega, tol)
    chan = cm.channel

    # (a) is the corner map multiplicative (hence a unital *-homomorphism)?
    worst = 0.0
    scale = 1.0
    units = list(matrix_units(chan.source))
    images = [chan.apply(E) for E in units]
    for a, Ea in enumerate(units):
        for b, Eb in enumerate(units):
            prod = Ea @ Eb
            diff = chan.apply(prod) - images[a] @ images[b]
            worst = max(worst, diff.norm())
            scale = max(scale, images[a].norm() * images[b].norm())
    corner_hom = worst <= tol.eps_eq * scale

    # (b) corner intertwining condition
    ac = ac_condition_algebraic(F, omega, tol, corner=cm)

    # (c) corner disintegration: faithful corner states, so a Bayesian
    # inverse (battery) together with exact multiplicativity decides it
    corner_analysis = battery(chan, cm.omega_restricted, tol)
    corner_det = ae_deterministic(chan, cm.omega_restricted, tol)
    corner_disint = corner_analysis.passed and corner_det

    full = factorize(h, omega, tol).ok

    if (corner_hom and ac.ok) != corner_disint:
        raise InternalInconsistency(
            f"corner hom+intertwining ({corner_hom}, {ac.ok}) disagrees with "
            f"corner disintegrability ({corner_disint})"
        )
    if corner_disint != full:
        raise InternalInconsistency(
            f"corner disintegrability ({corner_disint}) disagrees with the "
            f"full factorization verdict ({full})"
        )
    return TakesakiReport(
        corner_hom=corner_hom,
        corner_hom_residual=worst,
        corner_intertwining=ac.ok,
        corner_intertwining_residual=ac.max_residual,
        corner_disintegration=corner_disint,
        full_disintegration=full,
    )


@dataclass(frozen=True)
class BridgeReport:
    """Disintegration exists iff a Bayesian inverse exists and the map is
    a.e. deterministic; checked per instance across modules."""

    disintegration: bool
    bayes_inverse: bool
    deterministic: bool
    consistent: bool


def bayes_disint_bridge(
    F: Union[LinearMap, HomSpec],
    omega: State,
    tol: Tolerances = DEFAULT_TOL,
) -> BridgeReport:
    hom = F if isinstance(F, HomSpec) else None
    chan = from_hom(F) if hom is not None else F

    exists_bayes, inverse, _, _ = bayes_inverse(chan, omega, tol)
    det = ae_deterministic(chan, omega, tol)
    rhs = exists_bayes and det

    if hom is not None:
        disint = factorize(hom, omega, tol).ok
        if disint != rhs:
            raise InternalInconsistency(
                f"disintegration verdict {disint} contradicts "
                f"[Bayesian inverse {exists_bayes} and deterministic {det}]"
            )
    else:
        if rhs:
            report = verify_disintegration(chan, inverse, omega, tol)
            if not report.ok:
                raise InternalInconsistency(
                    "a deterministic channel with a Bayesian inverse must be "
                    f"disintegrated by that inverse, got {report}"
                )
            disint = True
        else:
            disint = False
    return BridgeReport(
        disintegration=disint,
        bayes_inverse=exists_bayes,
        deterministic=det,
        consistent=disint == rhs,
    )
