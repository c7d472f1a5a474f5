"""Modular flow of states and the corner-compressed intertwining condition.

For a faithful state the flow at time t conjugates each block by the
imaginary power of its density. For non-faithful states the flow becomes a
semigroup: it agrees with the corner flow on the support algebra and kills
the off-support components.

The Accardi-Cecchini (AC) condition asks a state-preserving UCP map to
intertwine the flows of the two states. Two computable forms are provided:
an algebraic single-equation test per matrix unit (the primary method), and
a sampled-t intertwining test (an independent cross-validation). They are
provably equivalent, so a disagreement raises InternalInconsistency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .algebra import AlgebraElement, HomSpec
from .channel import Channel, LinearMap, from_hom, is_ucp
from .errors import InternalInconsistency, ShapeMismatch
from .linalg import (
    ABS_FLOOR,
    DEFAULT_TOL,
    Tolerances,
    dagger,
    frobenius,
    support_eigendata,
    hermitian_eigen,
)
from .state import State, SupportData, pullback, support

DEFAULT_T_SAMPLES = (0.5, -0.5, 1.0, -1.0, 2.0, -2.0, math.pi)


@dataclass(frozen=True)
class ModularFlow:
    """Spectral data of a state's flow, one (eigenvalues, eigenvectors) per block.

    spectra[x] is None when the block carries no support; otherwise it holds
    the eigenpairs of the weighted density above the global rank cutoff. The
    flow is insensitive to the weights (imaginary powers of positive scalars
    are phases that cancel under conjugation).
    """

    state: State
    support: SupportData
    spectra: tuple[Optional[tuple[np.ndarray, np.ndarray]], ...]


def modular_flow(omega: State, tol: Tolerances = DEFAULT_TOL) -> ModularFlow:
    sup = support(omega, tol)
    lam_max = 0.0
    eigs = []
    for x in range(omega.algebra.n_blocks):
        eig = hermitian_eigen(omega.weighted_density(x), tol)
        eigs.append(eig)
        lam_max = max(lam_max, float(eig.eigenvalues.max(initial=0.0)))
    cutoff = tol.eps_rank * max(lam_max, ABS_FLOOR)
    spectra = []
    for x in range(omega.algebra.n_blocks):
        w, V = support_eigendata(omega.weighted_density(x), cutoff, tol)
        spectra.append(None if V.shape[1] == 0 else (w, V))
    return ModularFlow(state=omega, support=sup, spectra=tuple(spectra))


def modular_at(flow: ModularFlow, t: float, A: AlgebraElement) -> AlgebraElement:
    """Flow at time t: density^{it} A density^{-it} on the support, zero off it."""
    if A.algebra.block_dims != flow.state.algebra.block_dims:
        raise ShapeMismatch("element does not belong to the flow's algebra")
    blocks = []
    for x, d in enumerate(flow.state.algebra.block_dims):
        if flow.spectra[x] is None:
            blocks.append(np.zeros((d, d), dtype=complex))
            continue
        w, V = flow.spectra[x]
        phases = np.exp(1j * t * np.log(w))
        inner = dagger(V) @ A.blocks[x] @ V
        blocks.append(V @ ((phases[:, None] * inner) * np.conj(phases)[None, :]) @ dagger(V))
    return AlgebraElement(flow.state.algebra, tuple(blocks))


@dataclass(frozen=True)
class CornerMap:
    """The compression of a state-preserving UCP map between support algebras.

    channel maps the corner algebra of the pulled-back source state into the
    corner algebra of the target state. The commuting square (restricted
    target state composed with the corner map equals the restricted source
    state) is verified at construction.
    """

    channel: Channel
    omega_support: SupportData
    xi_support: SupportData
    omega_restricted: State
    xi_restricted: State
    square_residual: float


def corner_map(F: LinearMap, omega: State, tol: Tolerances = DEFAULT_TOL) -> CornerMap:
    if isinstance(F, HomSpec):
        F = from_hom(F)
    if omega.algebra.block_dims != F.target.block_dims:
        raise ShapeMismatch("state does not live on the map's target algebra")
    xi = pullback(omega, F, tol)
    sup_o = support(omega, tol)
    sup_x = support(xi, tol)

    def fn(xc, yc, E):
        src_corner = [
            np.zeros((d, d), dtype=complex) for d in sup_x.corner_algebra.block_dims
        ]
        src_corner[yc] = E
        lifted = sup_x.lift(AlgebraElement(sup_x.corner_algebra, tuple(src_corner)))
        return sup_o.compress(F.apply(lifted)).blocks[xc]

    lm = LinearMap.from_block_fn(sup_x.corner_algebra, sup_o.corner_algebra, fn)
    chan = Channel(lm.source, lm.target, lm.tensors, tol=tol)

    verdict = is_ucp(chan, tol)
    if not verdict:
        raise InternalInconsistency(
            "corner compression of a state-preserving UCP map failed the UCP "
            f"test (min Choi eigenvalue {verdict.min_choi_eigenvalue:.3e}, "
            f"unitality residual {verdict.unitality_residual:.3e})"
        )
    omega_r = sup_o.restricted_state()
    xi_r = sup_x.restricted_state()
    # commuting square: omega_r(F'(E)) = xi_r(E) on corner matrix units
    worst = 0.0
    from .state import evaluate
    from .algebra import matrix_units

    for E in matrix_units(sup_x.corner_algebra):
        lhs = evaluate(omega_r, chan.apply(E))
        rhs = evaluate(xi_r, E)
        worst = max(worst, abs(lhs - rhs))
    if worst > tol.eps_eq * 10:
        raise InternalInconsistency(
            f"corner square does not commute, residual {worst:.3e}"
        )
    return CornerMap(
        channel=chan,
        omega_support=sup_o,
        xi_support=sup_x,
        omega_restricted=omega_r,
        xi_restricted=xi_r,
        square_residual=worst,
    )


@dataclass(frozen=True)
class ACReport:
    ok: bool
    max_residual: float
    method: str
    corner: CornerMap

    def __bool__(self) -> bool:
        return self.ok


def ac_condition_algebraic(
    F: LinearMap,
    omega: State,
    tol: Tolerances = DEFAULT_TOL,
    corner: Optional[CornerMap] = None,
) -> ACReport:
    """Single-equation AC test on the corner data.

    For every corner matrix unit E and every block pair, the residual of
    corner(F)(sigma E) rho - rho corner(F)(E sigma) must vanish, where rho
    and sigma are the corner densities of the two restricted (faithful)
    states.
    """
    cm = corner if corner is not None else corner_map(F, omega, tol)
    chan = cm.channel
    rho_c = [cm.omega_restricted.densities[x] for x in range(chan.target.n_blocks)]
    sig_c = [cm.xi_restricted.densities[y] for y in range(chan.source.n_blocks)]
    worst = 0.0
    scale = 1.0
    for y, n_y in enumerate(chan.source.block_dims):
        for x in range(chan.target.n_blocks):
            T = chan.tensors[x][y]
            rho = rho_c[x]
            sig = sig_c[y]
            for i in range(n_y):
                for j in range(n_y):
                    E = np.zeros((n_y, n_y), dtype=complex)
                    E[i, j] = 1.0
                    lhs = np.einsum("iajb,ij->ab", T, sig @ E) @ rho
                    rhs = rho @ np.einsum("iajb,ij->ab", T, E @ sig)
                    worst = max(worst, frobenius(lhs - rhs))
                    scale = max(scale, frobenius(lhs), frobenius(rhs))
    return ACReport(
        ok=worst <= tol.eps_eq * scale,
        max_residual=worst,
        method="algebraic",
        corner=cm,
    )


def ac_condition_sampled(
    F: LinearMap,
    omega: State,
    t_samples: Sequence[float] = DEFAULT_T_SAMPLES,
    tol: Tolerances = DEFAULT_TOL,
) -> ACReport:
    """Sampled-t intertwining test, cross-validated against the algebraic one.

    Checks corner(F) o flow_xi^t = flow_omega^t o corner(F) on corner matrix
    units at each sampled t. The default sample set includes an irrational
    time to avoid accidental periodicity of rational spectra.
    """
    algebraic = ac_condition_algebraic(F, omega, tol)
    cm = algebraic.corner
    chan = cm.channel
    flow_o = modular_flow(cm.omega_restricted, tol)
    flow_x = modular_flow(cm.xi_restricted, tol)
    worst = 0.0
    scale = 1.0
    from .algebra import matrix_units

    units = list(matrix_units(chan.source))
    for t in t_samples:
        for E in units:
            lhs = chan.apply(modular_at(flow_x, t, E))
            rhs = modular_at(flow_o, t, chan.apply(E))
            worst = max(worst, (lhs - rhs).norm())
            scale = max(scale, lhs.norm(), rhs.norm())
    ok = worst <= tol.eps_eq * scale * 10
    if ok != algebraic.ok:
        raise InternalInconsistency(
            "AC verdicts disagree: "
            f"algebraic={algebraic.ok} (residual {algebraic.max_residual:.3e}), "
            f"sampled={ok} (residual {worst:.3e})"
        )
    return ACReport(ok=ok, max_residual=worst, method="sampled", corner=cm)
