"""Linear maps and UCP channels between multi-matrix algebras.

A map F from B = (+)_y M_{n_y} to A = (+)_x M_{m_x} is stored blockwise as
tensors[x][y] of shape (n_y, m_x, n_y, m_x) with

    tensors[x][y][i, a, j, b] = F_xy(E_ij)_{ab},

where E_ij are the source matrix units of block y and F_xy is the component
of F from source block y into target block x. The Choi block of (x, y) puts
the source units on the left:

    choi(x, y) = sum_ij E_ij (x) F_xy(E_ij),

reshaped from the tensor with row index (i, a) and column index (j, b). The
map is completely positive iff every Choi block is PSD, and unital iff
sum_y F_xy(1_{n_y}) = 1_{m_x} for every x.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .algebra import (
    AlgebraElement,
    HomSpec,
    MultiMatrixAlgebra,
    apply_hom,
)
from .errors import (
    InternalInconsistency,
    NotCP,
    NotHermitian,
    ShapeMismatch,
)
from .linalg import (
    ABS_FLOOR,
    DEFAULT_TOL,
    Tolerances,
    dagger,
    frobenius,
    hermitian_eigen,
)
from .state import State, in_nullspace, support


class LinearMap:
    """A linear map between multi-matrix algebras, stored blockwise.

    No positivity or unitality is assumed; see `Channel` for validated UCP
    carriers. Instances are immutable by convention.
    """

    __slots__ = ("source", "target", "tensors")

    def __init__(self, source: MultiMatrixAlgebra, target: MultiMatrixAlgebra, tensors):
        self.source = source
        self.target = target
        checked = []
        for x, m_x in enumerate(target.block_dims):
            row = []
            for y, n_y in enumerate(source.block_dims):
                T = np.asarray(tensors[x][y], dtype=complex)
                if T.shape != (n_y, m_x, n_y, m_x):
                    raise ShapeMismatch(
                        f"tensor ({x},{y}) has shape {T.shape}, "
                        f"expected {(n_y, m_x, n_y, m_x)}"
                    )
                row.append(T)
            checked.append(row)
        self.tensors = checked

    # -- construction -----------------------------------------------------

    @classmethod
    def from_block_fn(
        cls,
        source: MultiMatrixAlgebra,
        target: MultiMatrixAlgebra,
        fn: Callable[[int, int, np.ndarray], np.ndarray],
    ) -> "LinearMap":
        """Build tensors by evaluating fn(x, y, E_ij) on all source units."""
        tensors = []
        for x, m_x in enumerate(target.block_dims):
            row = []
            for y, n_y in enumerate(source.block_dims):
                T = np.zeros((n_y, m_x, n_y, m_x), dtype=complex)
                for i in range(n_y):
                    for j in range(n_y):
                        E = np.zeros((n_y, n_y), dtype=complex)
                        E[i, j] = 1.0
                        T[i, :, j, :] = fn(x, y, E)
                row.append(T)
            tensors.append(row)
        return cls(source, target, tensors)

    @classmethod
    def identity(cls, alg: MultiMatrixAlgebra) -> "LinearMap":
        def fn(x, y, E):
            if x == y:
                return E
            return np.zeros((alg.block_dims[x], alg.block_dims[x]))

        return cls.from_block_fn(alg, alg, fn)

    # -- basic operations --------------------------------------------------

    def apply(self, B: AlgebraElement) -> AlgebraElement:
        if B.algebra.block_dims != self.source.block_dims:
            raise ShapeMismatch("element does not belong to the map's source")
        blocks = []
        for x, m_x in enumerate(self.target.block_dims):
            out = np.zeros((m_x, m_x), dtype=complex)
            for y in range(self.source.n_blocks):
                out += np.einsum("iajb,ij->ab", self.tensors[x][y], B.blocks[y])
            blocks.append(out)
        return AlgebraElement(self.target, tuple(blocks))

    def compose(self, other: "LinearMap") -> "LinearMap":
        """self o other; other feeds into self."""
        if other.target.block_dims != self.source.block_dims:
            raise ShapeMismatch("maps are not composable")
        tensors = []
        for x in range(self.target.n_blocks):
            row = []
            for z in range(other.source.n_blocks):
                acc = None
                for y in range(self.source.n_blocks):
                    term = np.einsum(
                        "kjlc,jacb->kalb", other.tensors[y][z], self.tensors[x][y]
                    )
                    acc = term if acc is None else acc + term
                row.append(acc)
            tensors.append(row)
        return type(self)(other.source, self.target, tensors)

    def hs_adjoint(self) -> "LinearMap":
        """Adjoint for the Hilbert-Schmidt / trace pairing.

        For a *-preserving map this is also the bilinear trace adjoint:
        tr(X F(B)) = tr(F*(X) B) for all X and B.
        """
        tensors = []
        for y in range(self.source.n_blocks):
            row = []
            for x in range(self.target.n_blocks):
                T = self.tensors[x][y]
                row.append(np.conj(np.transpose(T, (1, 0, 3, 2))))
            tensors.append(row)
        return LinearMap(self.target, self.source, tensors)

    def __sub__(self, other: "LinearMap") -> "LinearMap":
        if (
            other.source.block_dims != self.source.block_dims
            or other.target.block_dims != self.target.block_dims
        ):
            raise ShapeMismatch("maps have different shapes")
        tensors = [
            [self.tensors[x][y] - other.tensors[x][y] for y in range(self.source.n_blocks)]
            for x in range(self.target.n_blocks)
        ]
        return LinearMap(self.source, self.target, tensors)

    # -- Choi data ----------------------------------------------------------

    def choi_block(self, x: int, y: int) -> np.ndarray:
        n_y = self.source.block_dims[y]
        m_x = self.target.block_dims[x]
        return self.tensors[x][y].reshape(n_y * m_x, n_y * m_x)

    def choi_hermiticity_defect(self) -> float:
        worst = 0.0
        for x in range(self.target.n_blocks):
            for y in range(self.source.n_blocks):
                C = self.choi_block(x, y)
                worst = max(worst, frobenius(C - dagger(C)))
        return worst

    def close_to(self, other: "LinearMap", eps: float) -> bool:
        if (
            other.source.block_dims != self.source.block_dims
            or other.target.block_dims != self.target.block_dims
        ):
            return False
        diff = max(
            frobenius(self.tensors[x][y] - other.tensors[x][y])
            for x in range(self.target.n_blocks)
            for y in range(self.source.n_blocks)
        )
        scale = max(
            max(
                frobenius(self.tensors[x][y])
                for x in range(self.target.n_blocks)
                for y in range(self.source.n_blocks)
            ),
            1.0,
        )
        return diff <= eps * scale


class Channel(LinearMap):
    """A blockwise linear map whose Choi blocks are Hermitian.

    Hermitian Choi blocks are exactly the *-preserving maps; complete
    positivity and unitality are checked separately by `is_ucp`, so that
    non-UCP carriers (adjoints, differences) can still be worked with.
    """

    def __init__(self, source, target, tensors, *, tol: Tolerances = DEFAULT_TOL):
        super().__init__(source, target, tensors)
        defect = self.choi_hermiticity_defect()
        scale = max(
            (
                frobenius(self.tensors[x][y])
                for x in range(target.n_blocks)
                for y in range(source.n_blocks)
            ),
            default=1.0,
        )
        if defect > tol.eps_eq * max(scale, 1.0):
            raise NotHermitian(
                f"Choi blocks deviate from Hermitian by {defect:.3e}"
            )


def identity_channel(alg: MultiMatrixAlgebra) -> Channel:
    lm = LinearMap.identity(alg)
    return Channel(alg, alg, lm.tensors)


def from_hom(h: HomSpec) -> Channel:
    """The channel of a standard-form unital *-homomorphism."""

    def fn(x, y, E):
        src = [
            np.zeros((d, d), dtype=complex) for d in h.source.block_dims
        ]
        src[y] = E
        return apply_hom(h, AlgebraElement(h.source, tuple(src))).blocks[x]

    lm = LinearMap.from_block_fn(h.source, h.target, fn)
    return Channel(h.source, h.target, lm.tensors)


def from_kraus(
    source: MultiMatrixAlgebra,
    target: MultiMatrixAlgebra,
    kraus,
) -> Channel:
    """Channel from Kraus operators, F_xy(B) = sum_k K B K^*.

    `kraus` is either a flat list of m x n matrices (both algebras single
    blocks) or a grid kraus[x][y] of lists of (m_x x n_y) matrices.
    """
    if source.n_blocks == 1 and target.n_blocks == 1 and kraus and isinstance(
        kraus[0], np.ndarray
    ):
        kraus = [[list(kraus)]]
    tensors = []
    for x, m_x in enumerate(target.block_dims):
        row = []
        for y, n_y in enumerate(source.block_dims):
            T = np.zeros((n_y, m_x, n_y, m_x), dtype=complex)
            for K in kraus[x][y]:
                K = np.asarray(K, dtype=complex)
                if K.shape != (m_x, n_y):
                    raise ShapeMismatch(
                        f"Kraus operator shape {K.shape} != ({m_x}, {n_y})"
                    )
                T += np.einsum("ai,bj->iajb", K, np.conj(K))
            row.append(T)
        tensors.append(row)
    return Channel(source, target, tensors)


def compose(F: LinearMap, G: LinearMap) -> LinearMap:
    """F o G. Preserves Channel-ness when both are channels."""
    out = F.compose(G)
    if isinstance(F, Channel) and isinstance(G, Channel):
        return Channel(out.source, out.target, out.tensors)
    return out


def hs_adjoint(F: LinearMap) -> LinearMap:
    return F.hs_adjoint()


@dataclass(frozen=True)
class UcpVerdict:
    """Outcome of the UCP test with failure witnesses."""

    ok: bool
    cp_ok: bool
    unital_ok: bool
    min_choi_eigenvalue: float
    witness_block: Optional[tuple[int, int]]
    unitality_residual: float

    def __bool__(self) -> bool:
        return self.ok


def is_ucp(F: LinearMap, tol: Tolerances = DEFAULT_TOL) -> UcpVerdict:
    """Complete positivity (all Choi blocks PSD) plus unitality."""
    min_eig = np.inf
    witness = None
    lam_max = 0.0
    for x in range(F.target.n_blocks):
        for y in range(F.source.n_blocks):
            C = F.choi_block(x, y)
            herm_defect = frobenius(C - dagger(C))
            w = np.linalg.eigvalsh((C + dagger(C)) / 2)
            lam_max = max(lam_max, float(np.abs(w).max(initial=0.0)))
            low = float(w.min(initial=0.0)) - herm_defect
            if low < min_eig:
                min_eig = low
                witness = (x, y)
    cp_ok = min_eig >= -tol.eps_rank * max(lam_max, ABS_FLOOR) - ABS_FLOOR

    unital_res = 0.0
    for x, m_x in enumerate(F.target.block_dims):
        img = sum(
            np.einsum("iaib->ab", F.tensors[x][y]) for y in range(F.source.n_blocks)
        )
        unital_res = max(unital_res, frobenius(img - np.eye(m_x)))
    unital_ok = unital_res <= tol.eps_eq * max(
        1.0, max(F.target.block_dims) ** 0.5
    )
    return UcpVerdict(
        ok=bool(cp_ok and unital_ok),
        cp_ok=bool(cp_ok),
        unital_ok=bool(unital_ok),
        min_choi_eigenvalue=float(min_eig),
        witness_block=witness,
        unitality_residual=float(unital_res),
    )


def _map_scale(D: LinearMap) -> float:
    """Largest image norm over matrix units; reference scale for residuals."""
    worst = 0.0
    for x in range(D.target.n_blocks):
        for y in range(D.source.n_blocks):
            T = D.tensors[x][y]
            n_y = D.source.block_dims[y]
            for i in range(n_y):
                for j in range(n_y):
                    worst = max(worst, frobenius(T[i, :, j, :]))
    return max(worst, 1.0)


def ae_equal(
    F: LinearMap,
    G: LinearMap,
    omega: State,
    tol: Tolerances = DEFAULT_TOL,
) -> bool:
    """Almost-everywhere equality of F and G with respect to omega.

    Primary check: omega(A (F - G)(B)) vanishes over all matrix-unit pairs.
    Cross-check: every (F - G)(B) lies in the nullspace of omega. The two
    are provably equivalent; a numerical disagreement raises
    InternalInconsistency.
    """
    D = F - G
    if omega.algebra.block_dims != D.target.block_dims:
        raise ShapeMismatch("state does not live on the maps' target algebra")
    scale = _map_scale(D)

    worst = 0.0
    for x in range(D.target.n_blocks):
        rho_w = omega.weighted_density(x)
        if frobenius(rho_w) == 0.0:
            continue
        for y in range(D.source.n_blocks):
            # omega(E_ij D(E_kl)) = p_x (D(E_kl) rho)_{ji}
            W = np.einsum("kjla,ai->ijkl", D.tensors[x][y], rho_w)
            worst = max(worst, float(np.abs(W).max(initial=0.0)))
    verdict_pairing = worst <= tol.eps_eq * scale

    verdict_nullspace = True
    for y, n_y in enumerate(D.source.block_dims):
        for i in range(n_y):
            for j in range(n_y):
                img = AlgebraElement(
                    D.target,
                    tuple(
                        D.tensors[x][y][i, :, j, :] for x in range(D.target.n_blocks)
                    ),
                )
                if not in_nullspace(omega, img, tol, scale=scale):
                    verdict_nullspace = False
                    break
            if not verdict_nullspace:
                break
        if not verdict_nullspace:
            break

    if verdict_pairing != verdict_nullspace:
        raise InternalInconsistency(
            "a.e.-equality conditions disagree: "
            f"pairing={verdict_pairing} nullspace={verdict_nullspace} "
            f"(pairing residual {worst:.3e})"
        )
    return verdict_pairing


def ae_deterministic(
    F: LinearMap,
    omega: State,
    tol: Tolerances = DEFAULT_TOL,
) -> bool:
    """Multiplicativity of F modulo the nullspace of omega.

    Checked in the support-projection form: F(B1 B2) P = F(B1) F(B2) P over
    all matrix-unit pairs, including cross-block pairs whose product is zero.
    """
    if omega.algebra.block_dims != F.target.block_dims:
        raise ShapeMismatch("state does not live on the map's target algebra")
    P = support(omega, tol).projection
    scale = _map_scale(F)
    worst = 0.0
    src = F.source
    units = [
        (y, i, j)
        for y, n_y in enumerate(src.block_dims)
        for i in range(n_y)
        for j in range(n_y)
    ]
    images = {
        (y, i, j): AlgebraElement(
            F.target,
            tuple(F.tensors[x][y][i, :, j, :] for x in range(F.target.n_blocks)),
        )
        for (y, i, j) in units
    }
    for (y1, i1, j1) in units:
        for (y2, i2, j2) in units:
            left = images[(y1, i1, j1)] @ images[(y2, i2, j2)]
            if y1 == y2 and j1 == i2:
                diff = images[(y1, i1, j2)] - left
            else:
                diff = (-1.0) * left  # cross-block product of units vanishes
            for x in range(F.target.n_blocks):
                worst = max(
                    worst, frobenius(diff.blocks[x] @ P.blocks[x])
                )
    return worst <= tol.eps_eq * scale * scale


@dataclass(frozen=True)
class StinespringFactor:
    """Dilation data of one target block: F_x = V* pi(.) V.

    pi is the standard multiplicity embedding of the source into a single
    matrix block of size d_x = sum_y r_xy n_y (r_xy = rank of the (x, y)
    Choi block), and V is a d_x x m_x isometry, V* V = identity_{m_x}.
    """

    target_index: int
    representation: HomSpec
    isometry: np.ndarray
    kraus: tuple[tuple[np.ndarray, ...], ...]


@dataclass(frozen=True)
class StinespringData:
    factors: tuple[StinespringFactor, ...]
    reconstruction_residual: float


def kraus_blocks(F: LinearMap, x: int, y: int, tol: Tolerances = DEFAULT_TOL):
    """Kraus operators of the (x, y) component from its Choi eigenbasis."""
    C = F.choi_block(x, y)
    n_y = F.source.block_dims[y]
    m_x = F.target.block_dims[x]
    eig = hermitian_eigen(C, tol)
    w, V = eig.eigenvalues, eig.eigenvectors
    lam_max = max(float(w.max(initial=0.0)), 0.0)
    if float(w.min(initial=0.0)) < -tol.eps_rank * max(lam_max, ABS_FLOOR) - ABS_FLOOR:
        raise NotCP(f"Choi block ({x},{y}) has eigenvalue {w.min():.3e}")
    ops = []
    for idx in np.argsort(-w):
        if w[idx] <= tol.eps_rank * max(lam_max, ABS_FLOOR):
            continue
        vec = np.sqrt(w[idx]) * V[:, idx]
        ops.append(vec.reshape(n_y, m_x).T.copy())
    return ops


def stinespring(F: LinearMap, tol: Tolerances = DEFAULT_TOL) -> StinespringData:
    """Stinespring dilation per target block, from Choi eigendecompositions."""
    verdict = is_ucp(F, tol)
    if not verdict.cp_ok:
        raise NotCP(
            f"channel is not CP: Choi block {verdict.witness_block} has "
            f"eigenvalue {verdict.min_choi_eigenvalue:.3e}"
        )
    factors = []
    worst = 0.0
    for x, m_x in enumerate(F.target.block_dims):
        kraus_per_y = [kraus_blocks(F, x, y, tol) for y in range(F.source.n_blocks)]
        ranks = [len(ops) for ops in kraus_per_y]
        d_x = sum(r * n for r, n in zip(ranks, F.source.block_dims))
        if d_x == 0:
            raise NotCP(f"target block {x} receives the zero map")
        rep = HomSpec(F.source, MultiMatrixAlgebra((d_x,)), (tuple(ranks),))
        V = np.vstack(
            [dagger(K) for ops in kraus_per_y for K in ops]
        )
        factors.append(
            StinespringFactor(
                target_index=x,
                representation=rep,
                isometry=V,
                kraus=tuple(tuple(ops) for ops in kraus_per_y),
            )
        )
        # reconstruction on source matrix units
        for y, n_y in enumerate(F.source.block_dims):
            for i in range(n_y):
                for j in range(n_y):
                    E = np.zeros((n_y, n_y), dtype=complex)
                    E[i, j] = 1.0
                    src = [np.zeros((d, d), dtype=complex) for d in F.source.block_dims]
                    src[y] = E
                    pi_E = apply_hom(rep, AlgebraElement(F.source, tuple(src))).blocks[0]
                    recon = dagger(V) @ pi_E @ V
                    worst = max(worst, frobenius(recon - F.tensors[x][y][i, :, j, :]))
    return StinespringData(factors=tuple(factors), reconstruction_residual=worst)
