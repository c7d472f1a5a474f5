"""States on multi-matrix algebras and their support (corner) reductions.

A state is a convex combination of block states: weights p_x >= 0 summing
to one, and one unit-trace PSD density per block with p_x > 0. Blocks with
p_x = 0 carry no density. The support projection, the compressed corner
algebra, and the compress/lift maps between them live here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .algebra import (
    AlgebraElement,
    MultiMatrixAlgebra,
)
from .errors import ShapeMismatch
from .linalg import (
    ABS_FLOOR,
    DEFAULT_TOL,
    Tolerances,
    dagger,
    frobenius,
    hermitian_eigen,
    is_hermitian,
    support_eigendata,
)


@dataclass(frozen=True)
class State:
    """The functional A -> sum_x p_x tr(rho_x A_x)."""

    algebra: MultiMatrixAlgebra
    weights: tuple[float, ...]
    densities: tuple[Optional[np.ndarray], ...]

    def __post_init__(self):
        if len(self.weights) != self.algebra.n_blocks:
            raise ShapeMismatch("one weight per block required")
        if len(self.densities) != self.algebra.n_blocks:
            raise ShapeMismatch("one density slot per block required")
        weights = tuple(float(p) for p in self.weights)
        object.__setattr__(self, "weights", weights)
        if any(p < -DEFAULT_TOL.eps_eq for p in weights):
            raise ShapeMismatch(f"negative weight in {weights}")
        if abs(sum(weights) - 1.0) > DEFAULT_TOL.eps_eq:
            raise ShapeMismatch(f"weights sum to {sum(weights)}, expected 1")
        dens = []
        for x, (d, p, rho) in enumerate(
            zip(self.algebra.block_dims, weights, self.densities)
        ):
            if p <= 0.0:
                dens.append(None)
                continue
            if rho is None:
                raise ShapeMismatch(f"block {x} has weight {p} but no density")
            rho = np.asarray(rho, dtype=complex)
            if rho.shape != (d, d):
                raise ShapeMismatch(f"density shape {rho.shape} != ({d}, {d})")
            if not is_hermitian(rho, DEFAULT_TOL.eps_eq):
                raise ShapeMismatch(f"density in block {x} is not Hermitian")
            if abs(np.trace(rho).real - 1.0) > DEFAULT_TOL.eps_eq:
                raise ShapeMismatch(
                    f"density in block {x} has trace {np.trace(rho).real}"
                )
            dens.append(rho)
        object.__setattr__(self, "densities", tuple(dens))

    def weighted_density(self, x: int) -> np.ndarray:
        """p_x * rho_x, the zero matrix when the block carries no weight."""
        d = self.algebra.block_dims[x]
        if self.densities[x] is None:
            return np.zeros((d, d), dtype=complex)
        return self.weights[x] * self.densities[x]

    def to_dict(self) -> dict:
        from .jsonio import matrix_to_json

        return {
            "weights": list(self.weights),
            "densities": [
                None if rho is None else matrix_to_json(rho) for rho in self.densities
            ],
        }


def evaluate(omega: State, A: AlgebraElement) -> complex:
    """omega(A) = sum_x p_x tr(rho_x A_x)."""
    if A.algebra.block_dims != omega.algebra.block_dims:
        raise ShapeMismatch("element does not belong to the state's algebra")
    total = 0.0 + 0.0j
    for x, rho in enumerate(omega.densities):
        if rho is not None:
            total += omega.weights[x] * np.trace(rho @ A.blocks[x])
    return complex(total)


@dataclass(frozen=True)
class SupportData:
    """Support projection plus the compressed corner algebra of a state.

    isometries[x] is an m_x x r_x matrix whose columns span the support of
    p_x rho_x (None when the block is cut entirely); for full-rank blocks it
    is the identity, so compress is literally a re-indexing for faithful
    states. kept[k] is the ambient block index of corner block k.
    """

    state: State
    projection: AlgebraElement
    corner_algebra: MultiMatrixAlgebra
    isometries: tuple[Optional[np.ndarray], ...]
    kept: tuple[int, ...]

    def is_full(self) -> bool:
        return len(self.kept) == self.state.algebra.n_blocks and all(
            V.shape[0] == V.shape[1] for V in self.isometries if V is not None
        )

    def compress(self, A: AlgebraElement) -> AlgebraElement:
        """Corner coordinates of P A P."""
        if A.algebra.block_dims != self.state.algebra.block_dims:
            raise ShapeMismatch("element does not belong to the ambient algebra")
        blocks = tuple(
            dagger(self.isometries[x]) @ A.blocks[x] @ self.isometries[x]
            for x in self.kept
        )
        return AlgebraElement(self.corner_algebra, blocks)

    def lift(self, C: AlgebraElement) -> AlgebraElement:
        """Non-unital inclusion of a corner element back into the ambient algebra."""
        if C.algebra.block_dims != self.corner_algebra.block_dims:
            raise ShapeMismatch("element does not belong to the corner algebra")
        blocks = [
            np.zeros((d, d), dtype=complex) for d in self.state.algebra.block_dims
        ]
        for k, x in enumerate(self.kept):
            V = self.isometries[x]
            blocks[x] = V @ C.blocks[k] @ dagger(V)
        return AlgebraElement(self.state.algebra, tuple(blocks))

    def restricted_state(self) -> State:
        """The induced faithful state on the corner algebra."""
        weights = []
        densities = []
        for x in self.kept:
            V = self.isometries[x]
            rho_c = dagger(V) @ self.state.densities[x] @ V
            mass = float(np.trace(rho_c).real)
            weights.append(self.state.weights[x] * mass)
            densities.append(rho_c / mass)
        total = sum(weights)
        weights = [w / total for w in weights]
        return State(self.corner_algebra, tuple(weights), tuple(densities))


def support(omega: State, tol: Tolerances = DEFAULT_TOL) -> SupportData:
    """Support projection and corner data of a state.

    The rank cutoff is relative to the global maximum eigenvalue of the
    weighted densities p_x rho_x, so comparisons between blocks are
    meaningful.
    """
    alg = omega.algebra
    eigs = []
    lam_max = 0.0
    for x in range(alg.n_blocks):
        M = omega.weighted_density(x)
        eig = hermitian_eigen(M, tol)
        eigs.append(eig)
        lam_max = max(lam_max, float(eig.eigenvalues.max(initial=0.0)))
    cutoff = tol.eps_rank * max(lam_max, ABS_FLOOR)

    proj_blocks = []
    isometries: list[Optional[np.ndarray]] = []
    kept = []
    corner_dims = []
    for x, d in enumerate(alg.block_dims):
        M = omega.weighted_density(x)
        w, V = support_eigendata(M, cutoff, tol)
        rank = V.shape[1]
        if rank == 0:
            proj_blocks.append(np.zeros((d, d), dtype=complex))
            isometries.append(None)
            continue
        if rank == d:
            V = np.eye(d, dtype=complex)  # faithful block: identity embedding
        proj_blocks.append(V @ dagger(V))
        isometries.append(V)
        kept.append(x)
        corner_dims.append(rank)
    if not kept:
        raise ShapeMismatch("state has empty support")
    return SupportData(
        state=omega,
        projection=AlgebraElement(alg, tuple(proj_blocks)),
        corner_algebra=MultiMatrixAlgebra(tuple(corner_dims)),
        isometries=tuple(isometries),
        kept=tuple(kept),
    )


def is_faithful(omega: State, tol: Tolerances = DEFAULT_TOL) -> bool:
    return support(omega, tol).is_full()


def compress(omega: State, A: AlgebraElement, tol: Tolerances = DEFAULT_TOL) -> AlgebraElement:
    """Corner coordinates of the two-sided support compression of A."""
    return support(omega, tol).compress(A)


def lift(omega: State, C: AlgebraElement, tol: Tolerances = DEFAULT_TOL) -> AlgebraElement:
    """Non-unital inclusion of a corner element back into the ambient algebra."""
    return support(omega, tol).lift(C)


def in_nullspace(
    omega: State,
    A: AlgebraElement,
    tol: Tolerances = DEFAULT_TOL,
    scale: float = 0.0,
) -> bool:
    """Nullspace membership: omega(A* A) vanishes relative to ||A||^2.

    `scale` optionally widens the reference when A itself is a residual of
    a larger computation (so numerical noise is not misclassified).
    """
    value = evaluate(omega, A.adjoint() @ A).real
    ref = max(A.norm(), scale, ABS_FLOOR)
    return value <= tol.eps_eq * ref * ref


def pullback(omega: State, F, tol: Tolerances = DEFAULT_TOL) -> State:
    """The state omega o F on the source of F (a Channel or HomSpec).

    Computed through the predual action on weighted densities; weights and
    densities are renormalized per block, and blocks whose induced weight
    vanishes are dropped.
    """
    from .algebra import HomSpec
    from .channel import from_hom

    if isinstance(F, HomSpec):
        F = from_hom(F)
    if F.target.block_dims != omega.algebra.block_dims:
        raise ShapeMismatch("state does not live on the channel's target")
    src = F.source
    raw = []
    for y, n_y in enumerate(src.block_dims):
        acc = np.zeros((n_y, n_y), dtype=complex)
        for x in range(F.target.n_blocks):
            rho_w = omega.weighted_density(x)
            if frobenius(rho_w) == 0.0:
                continue
            # predual component: tr(rho_w F_xy(B)) = tr(acc_xy B)
            T = F.tensors[x][y]
            acc += np.einsum("kalb,ab->kl", np.conj(T), rho_w)
        raw.append((acc + dagger(acc)) / 2)
    masses = np.array([max(float(np.trace(a).real), 0.0) for a in raw])
    total = masses.sum()
    weights = []
    densities: list[Optional[np.ndarray]] = []
    for y, (mass, acc) in enumerate(zip(masses, raw)):
        if mass <= tol.eps_rank * max(masses.max(initial=0.0), ABS_FLOOR):
            weights.append(0.0)
            densities.append(None)
        else:
            weights.append(mass / total)
            densities.append(acc / mass)
    return State(src, tuple(weights), tuple(densities))


def states_close(a: State, b: State, eps: float) -> bool:
    """Equality of states as functionals, via weighted densities."""
    if a.algebra.block_dims != b.algebra.block_dims:
        return False
    return all(
        frobenius(a.weighted_density(x) - b.weighted_density(x)) <= eps
        for x in range(a.algebra.n_blocks)
    )


def state_from_weighted(
    alg: MultiMatrixAlgebra,
    weighted: Sequence[np.ndarray],
    tol: Tolerances = DEFAULT_TOL,
) -> State:
    """Build a State from unnormalized per-block PSD mass matrices."""
    masses = [max(float(np.trace(W).real), 0.0) for W in weighted]
    total = sum(masses)
    weights = []
    densities: list[Optional[np.ndarray]] = []
    for W, mass in zip(weighted, masses):
        if mass <= tol.eps_rank * max(max(masses), ABS_FLOOR):
            weights.append(0.0)
            densities.append(None)
        else:
            weights.append(mass / total)
            densities.append(np.asarray(W, dtype=complex) / mass)
    return State(alg, tuple(weights), tuple(densities))
