"""Bayesian inversion of state-preserving UCP maps.

`battery` evaluates seven independently computed conditions that are
provably equivalent; `existence` decides whether the support-determined
inverse extends to a full UCP Bayesian inverse and constructs it when it
does; `verify_bayes` is the brute-force oracle behind everything.

Throughout, the weighted densities p_x rho_x and q_y sigma_y are used, so
the single-block formulas extend per (target x, source y) pair without
extra bookkeeping: positive scalars cancel in every condition.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .algebra import MultiMatrixAlgebra
from .channel import Channel, LinearMap, UcpVerdict, compose, identity_channel, is_ucp
from .errors import ExtensionFailure, InternalInconsistency, ShapeMismatch
from .linalg import (
    ABS_FLOOR,
    DEFAULT_TOL,
    Tolerances,
    dagger,
    frobenius,
    matrix_sqrt,
    partial_trace_left,
    pseudoinverse,
)
from .modular import ac_condition_algebraic
from .state import State, pullback, support

BATTERY_CONDITIONS = (
    "right_map_star_preserving",
    "left_equals_right",
    "choi_hermitian",
    "adjoint_sandwich_symmetry",
    "density_intertwining",
    "off_support_vanishing",
    "right_map_cp",
)


@dataclass(frozen=True)
class ConditionReport:
    ok: bool
    residual: float


@dataclass(frozen=True)
class PairData:
    """Per-(target x, source y) tensors entering the battery."""

    x: int
    y: int
    T: np.ndarray       # channel tensor of F_xy
    rho_w: np.ndarray   # p_x rho_x
    sig_w: np.ndarray   # q_y sigma_y
    shat_w: np.ndarray  # pseudoinverse of q_y sigma_y
    P_om: np.ndarray    # support projection of rho in block x
    P_xi: np.ndarray    # support projection of sigma in block y
    rawL: np.ndarray    # rawL[i,j] = F*(rho_w E_ij)
    rawR: np.ndarray    # rawR[i,j] = F*(E_ij rho_w)
    GL: np.ndarray      # GL[i,j] = shat_w rawL[i,j]
    GR: np.ndarray      # GR[i,j] = rawR[i,j] shat_w


def _pair_data(F: LinearMap, omega: State, xi: State, tol: Tolerances) -> list[PairData]:
    sup_o = support(omega, tol)
    sup_x = support(xi, tol)
    P_om = [np.asarray(b) for b in sup_o.projection.blocks]
    P_xi = [np.asarray(b) for b in sup_x.projection.blocks]
    out = []
    for x in range(F.target.n_blocks):
        rho_w = omega.weighted_density(x)
        for y in range(F.source.n_blocks):
            sig_w = xi.weighted_density(y)
            shat_w = pseudoinverse(sig_w, tol)
            T = F.tensors[x][y]
            Tc = np.conj(T)
            # F*(rho_w E_ij)_{kl} = sum_a conj(T[k,a,l,j]) rho_w[a,i]
            rawL = np.einsum("kalj,ai->ijkl", Tc, rho_w)
            GL = np.einsum("uk,ijkl->ijul", shat_w, rawL)
            # F*(E_ij rho_w)_{kl} = sum_b conj(T[k,i,l,b]) rho_w[j,b]
            rawR = np.einsum("kilb,jb->ijkl", Tc, rho_w)
            GR = np.einsum("ijkl,lu->ijku", rawR, shat_w)
            out.append(
                PairData(
                    x=x, y=y, T=T, rho_w=rho_w, sig_w=sig_w, shat_w=shat_w,
                    P_om=P_om[x], P_xi=P_xi[y], rawL=rawL, rawR=rawR, GL=GL, GR=GR,
                )
            )
    return out


@dataclass(frozen=True)
class BayesAnalysis:
    """Battery outcome for one (channel, state) instance."""

    F: LinearMap
    omega: State
    xi: State
    conditions: dict[str, ConditionReport]
    passed: bool
    choi_A: dict[tuple[int, int], np.ndarray]
    choi_B: dict[tuple[int, int], np.ndarray]
    support_map: Optional[LinearMap]   # Ad_{P_xi} o G^L when the battery passes
    petz_map: Optional[LinearMap]      # Ad_sqrt(sigma-hat) o F* o Ad_sqrt(rho)


def battery(F: LinearMap, omega: State, tol: Tolerances = DEFAULT_TOL) -> BayesAnalysis:
    """Evaluate the seven equivalent inversion conditions independently.

    The verdicts must agree; a disagreement beyond tolerance raises
    InternalInconsistency, because their equivalence is a theorem, not a
    numerical accident. The off-support condition is the conjunction of the
    forced-row vanishing with the corner intertwining test.
    """
    if omega.algebra.block_dims != F.target.block_dims:
        raise ShapeMismatch("state does not live on the channel's target algebra")
    xi = pullback(omega, F, tol)
    pairs = _pair_data(F, omega, xi, tol)

    res = {name: 0.0 for name in BATTERY_CONDITIONS}
    scale = 1.0
    choi_A: dict[tuple[int, int], np.ndarray] = {}
    choi_B: dict[tuple[int, int], np.ndarray] = {}
    cp_lam_max = 0.0
    cp_min_eig = 0.0

    for pd in pairs:
        m = pd.rho_w.shape[0]
        n = pd.sig_w.shape[0]
        KL = np.einsum("ijkl,lu->ijku", pd.GL, pd.P_xi)   # GL(E_ij) P
        KR = np.einsum("uk,ijkl->ijul", pd.P_xi, pd.GR)   # P GR(E_ij)
        scale = max(scale, float(np.abs(KL).max(initial=0.0)),
                    float(np.abs(KR).max(initial=0.0)))

        # (i) *-preservation of Ad_P o G^R: K(E_ji) = K(E_ij)^*
        star = KR.transpose(1, 0, 3, 2).conj()
        res["right_map_star_preserving"] = max(
            res["right_map_star_preserving"],
            float(np.abs(KR - star).max(initial=0.0)),
        )
        # (ii) left and right corner maps coincide
        res["left_equals_right"] = max(
            res["left_equals_right"], float(np.abs(KL - KR).max(initial=0.0))
        )
        # (iii) hermiticity of the corner Choi matrix
        A_mat = KL.transpose(0, 2, 1, 3).reshape(m * n, m * n)
        choi_A[(pd.x, pd.y)] = A_mat
        res["choi_hermitian"] = max(
            res["choi_hermitian"], frobenius(A_mat - dagger(A_mat))
        )
        # (iv) P F*(rho A) sigma = sigma F*(A rho) P on target units A
        lhs4 = np.einsum("uk,ijkl,lv->ijuv", pd.P_xi, pd.rawL, pd.sig_w)
        rhs4 = np.einsum("uk,ijkl,lv->ijuv", pd.sig_w, pd.rawR, pd.P_xi)
        res["adjoint_sandwich_symmetry"] = max(
            res["adjoint_sandwich_symmetry"],
            float(np.abs(lhs4 - rhs4).max(initial=0.0)),
        )
        # (v) F(sigma B) rho = rho F(B sigma) for B in the xi-support corner
        for k in range(n):
            for l in range(n):
                E = np.zeros((n, n), dtype=complex)
                E[k, l] = 1.0
                B = pd.P_xi @ E @ pd.P_xi
                lhs = np.einsum("iajb,ij->ab", pd.T, pd.sig_w @ B) @ pd.rho_w
                rhs = pd.rho_w @ np.einsum("iajb,ij->ab", pd.T, B @ pd.sig_w)
                res["density_intertwining"] = max(
                    res["density_intertwining"], frobenius(lhs - rhs)
                )
                scale = max(scale, frobenius(lhs), frobenius(rhs))
        # (vi) part 1: forced rows vanish against the omega co-support,
        # shat_w F*(rho_w E_ij P_om-perp) P_xi = 0
        Pop = np.eye(m) - pd.P_om
        V6 = np.einsum(
            "kalb,ai,jb,uk,lv->ijuv",
            np.conj(pd.T), pd.rho_w, Pop, pd.shat_w, pd.P_xi,
        )
        res["off_support_vanishing"] = max(
            res["off_support_vanishing"], float(np.abs(V6).max(initial=0.0))
        )
        # (vii) complete positivity of Ad_P o G^R
        C = KR.transpose(0, 2, 1, 3).reshape(m * n, m * n)
        herm_defect = frobenius(C - dagger(C))
        w = np.linalg.eigvalsh((C + dagger(C)) / 2)
        cp_lam_max = max(cp_lam_max, float(np.abs(w).max(initial=0.0)))
        cp_min_eig = min(cp_min_eig, float(w.min(initial=0.0)) - herm_defect)
        # forced rows off the xi support, for the existence stage
        Pxp = np.eye(n) - pd.P_xi
        BB = np.einsum("ijkl,lu->ijku", pd.GL, Pxp)
        choi_B[(pd.x, pd.y)] = BB.transpose(0, 2, 1, 3).reshape(m * n, m * n)

    res["right_map_cp"] = max(0.0, -cp_min_eig)
    thr = tol.eps_eq * scale
    verdicts = {
        name: ConditionReport(ok=res[name] <= thr, residual=res[name])
        for name in BATTERY_CONDITIONS
        if name != "right_map_cp"
    }
    cp_ok = cp_min_eig >= -tol.eps_rank * max(cp_lam_max, ABS_FLOOR) - ABS_FLOOR
    verdicts["right_map_cp"] = ConditionReport(ok=cp_ok, residual=res["right_map_cp"])

    # (vi) part 2: corner intertwining joins the off-support condition
    ac = ac_condition_algebraic(F, omega, tol)
    part1 = verdicts["off_support_vanishing"]
    verdicts["off_support_vanishing"] = ConditionReport(
        ok=part1.ok and ac.ok,
        residual=max(part1.residual, 0.0 if ac.ok else ac.max_residual),
    )

    flags = [verdicts[name].ok for name in BATTERY_CONDITIONS]
    if any(flags) != all(flags):
        detail = ", ".join(
            f"{name}: ok={verdicts[name].ok} residual={verdicts[name].residual:.3e}"
            for name in BATTERY_CONDITIONS
        )
        raise InternalInconsistency(
            f"battery verdicts disagree although provably equivalent ({detail})"
        )
    passed = all(flags)

    support_map = None
    petz_map = None
    if passed:
        tensors_s = []
        tensors_p = []
        by_pair = {(pd.x, pd.y): pd for pd in pairs}
        for y in range(F.source.n_blocks):
            row_s = []
            row_p = []
            for x in range(F.target.n_blocks):
                pd = by_pair[(x, y)]
                KL = np.einsum("ijkl,lu->ijku", pd.GL, pd.P_xi)
                row_s.append(KL.transpose(0, 2, 1, 3))
                sq_rho = matrix_sqrt(pd.rho_w, tol)
                sq_shat = matrix_sqrt(pd.shat_w, tol)
                raw = np.einsum("kalb,ai,jb->ijkl", np.conj(pd.T), sq_rho, sq_rho)
                petz = np.einsum("uk,ijkl,lv->ijuv", sq_shat, raw, sq_shat)
                row_p.append(petz.transpose(0, 2, 1, 3))
            tensors_s.append(row_s)
            tensors_p.append(row_p)
        support_map = LinearMap(F.target, F.source, tensors_s)
        petz_map = LinearMap(F.target, F.source, tensors_p)
        if not support_map.close_to(petz_map, tol.eps_eq * 100):
            raise InternalInconsistency(
                "recovery formula does not match the corner inverse "
                "although the battery passed"
            )

    return BayesAnalysis(
        F=F,
        omega=omega,
        xi=xi,
        conditions=verdicts,
        passed=passed,
        choi_A=choi_A,
        choi_B=choi_B,
        support_map=support_map,
        petz_map=petz_map,
    )


def left_right_bayes(
    F: LinearMap, omega: State, tol: Tolerances = DEFAULT_TOL
) -> tuple[LinearMap, LinearMap]:
    """The support-determined parts of the left and right Bayes maps.

    Both always exist as linear maps; each is verified against its defining
    pairing over all matrix-unit pairs at construction time.
    """
    xi = pullback(omega, F, tol)
    pairs = _pair_data(F, omega, xi, tol)
    tensors_l = [[None] * F.target.n_blocks for _ in range(F.source.n_blocks)]
    tensors_r = [[None] * F.target.n_blocks for _ in range(F.source.n_blocks)]
    worst = 0.0
    for pd in pairs:
        tensors_l[pd.y][pd.x] = pd.GL.transpose(0, 2, 1, 3)
        tensors_r[pd.y][pd.x] = pd.GR.transpose(0, 2, 1, 3)
        # omega(E_ij F(E_kl)) = xi(G^L(E_ij) E_kl), and mirrored for G^R
        W1 = np.einsum("kjla,ai->ijkl", pd.T, pd.rho_w)
        W2 = np.einsum("lb,ijbk->ijkl", pd.sig_w, pd.GL)
        worst = max(worst, float(np.abs(W1 - W2).max(initial=0.0)))
        W1r = np.einsum("ja,kali->ijkl", pd.rho_w, pd.T)
        W2r = np.einsum("ak,ijla->ijkl", pd.sig_w, pd.GR)
        worst = max(worst, float(np.abs(W1r - W2r).max(initial=0.0)))
    if worst > tol.eps_eq * 100:
        raise InternalInconsistency(
            f"left/right Bayes pairing identities failed at {worst:.3e}"
        )
    GL = LinearMap(F.target, F.source, tensors_l)
    GR = LinearMap(F.target, F.source, tensors_r)
    return GL, GR


@dataclass(frozen=True)
class VerifyBayesReport:
    """Brute-force check of the inversion pairing plus UCP and state transport."""

    pairing_residual: float
    ucp: UcpVerdict
    state_preservation_residual: float
    ok: bool


def verify_bayes(
    F: LinearMap, G: LinearMap, omega: State, tol: Tolerances = DEFAULT_TOL
) -> VerifyBayesReport:
    """Independent oracle for candidate inverses.

    Maximizes |xi(G(A) B) - omega(A F(B))| over all matrix-unit pairs, and
    additionally checks that G is UCP and pushes xi back to omega.
    """
    if (
        G.source.block_dims != F.target.block_dims
        or G.target.block_dims != F.source.block_dims
    ):
        raise ShapeMismatch("candidate inverse does not have the opposite shape")
    xi = pullback(omega, F, tol)
    worst = 0.0
    for x in range(F.target.n_blocks):
        rho_w = omega.weighted_density(x)
        for y in range(F.source.n_blocks):
            sig_w = xi.weighted_density(y)
            T = F.tensors[x][y]
            S = G.tensors[y][x]
            W1 = np.einsum("kjla,ai->ijkl", T, rho_w)
            W2 = np.einsum("lb,ibjk->ijkl", sig_w, S)
            worst = max(worst, float(np.abs(W1 - W2).max(initial=0.0)))
    ucp = is_ucp(G, tol)
    omega_back = pullback(xi, G, tol)
    state_res = max(
        frobenius(omega_back.weighted_density(x) - omega.weighted_density(x))
        for x in range(omega.algebra.n_blocks)
    )
    ok = bool(ucp) and worst <= tol.eps_eq * 10 and state_res <= tol.eps_eq * 10
    return VerifyBayesReport(
        pairing_residual=worst,
        ucp=ucp,
        state_preservation_residual=state_res,
        ok=ok,
    )


@dataclass(frozen=True)
class ExistenceResult:
    """Decision of the off-support extension problem."""

    exists: bool
    margin: float
    trace_blocks: dict[int, np.ndarray]
    inverse: Optional[Channel]
    verification: Optional[VerifyBayesReport]


def existence(
    analysis: BayesAnalysis,
    tol: Tolerances = DEFAULT_TOL,
    free_split: str = "uniform",
) -> ExistenceResult:
    """Decide and, when possible, construct a full UCP Bayesian inverse.

    Requires a passed battery. Per source block y, the compressed mass
    sum_x tr_x(B* A-hat B) must stay below the xi co-support projection;
    when it does, a Schur-complement completion of the forced Choi rows
    yields the inverse, whose Bayes pairing is then re-verified.

    free_split selects how the leftover co-support mass is spread over the
    free diagonal; any admissible choice yields an a.e.-equivalent inverse.
    """
    if not analysis.passed:
        raise ValueError("existence() requires a passed battery")
    F, omega, xi = analysis.F, analysis.omega, analysis.xi
    pairs = _pair_data(F, omega, xi, tol)
    by_pair = {(pd.x, pd.y): pd for pd in pairs}
    src_dims = F.source.block_dims
    tgt_dims = F.target.block_dims
    w_x = np.array(tgt_dims, dtype=float)
    w_x /= w_x.sum()

    trace_blocks: dict[int, np.ndarray] = {}
    sandwich: dict[tuple[int, int], np.ndarray] = {}
    margin = np.inf
    for y, n_y in enumerate(src_dims):
        if xi.weights[y] <= 0.0:
            continue
        P_xi = by_pair[(0, y)].P_xi
        Pxp = np.eye(n_y) - P_xi
        total = np.zeros((n_y, n_y), dtype=complex)
        for x, m_x in enumerate(tgt_dims):
            A_mat = analysis.choi_A[(x, y)]
            B_mat = analysis.choi_B[(x, y)]
            A_mat = (A_mat + dagger(A_mat)) / 2
            Ahat = pseudoinverse(A_mat, tol)
            X = dagger(B_mat) @ Ahat @ B_mat
            sandwich[(x, y)] = X
            total += partial_trace_left(X, m_x, n_y)
            range_defect = frobenius((np.eye(m_x * n_y) - A_mat @ Ahat) @ B_mat)
            if range_defect > tol.eps_eq * max(1.0, frobenius(B_mat)) * 100:
                raise ExtensionFailure(
                    "forced off-support rows leave the corner range in block "
                    f"({x},{y}), defect {range_defect:.3e}"
                )
        total = (total + dagger(total)) / 2
        trace_blocks[y] = total
        gap = float(np.linalg.eigvalsh(Pxp - total).min(initial=0.0))
        margin = min(margin, gap)
    if not np.isfinite(margin):
        margin = 0.0

    exists = margin >= -tol.eps_rank * 10 - ABS_FLOOR
    if not exists:
        return ExistenceResult(
            exists=False, margin=float(margin), trace_blocks=trace_blocks,
            inverse=None, verification=None,
        )

    tensors = [[None] * F.target.n_blocks for _ in range(F.source.n_blocks)]
    for y, n_y in enumerate(src_dims):
        if xi.weights[y] <= 0.0:
            # no pairing constraint: spread the normalized trace uniformly
            for x, m_x in enumerate(tgt_dims):
                S = np.zeros((m_x, n_y, m_x, n_y), dtype=complex)
                for i in range(m_x):
                    for a in range(n_y):
                        S[i, a, i, a] = w_x[x] / m_x
                tensors[y][x] = S
            continue
        P_xi = by_pair[(0, y)].P_xi
        Pxp = np.eye(n_y) - P_xi
        delta = Pxp - trace_blocks[y]
        dw, dV = np.linalg.eigh((delta + dagger(delta)) / 2)
        delta_psd = (dV * np.clip(dw, 0.0, None)) @ dagger(dV)
        for x, m_x in enumerate(tgt_dims):
            A_mat = analysis.choi_A[(x, y)]
            B_mat = analysis.choi_B[(x, y)]
            if free_split == "uniform":
                diag = np.full(m_x, 1.0 / m_x)
            elif free_split == "ramp":
                diag = np.arange(1, m_x + 1, dtype=float)
                diag /= diag.sum()
            else:
                raise ValueError(f"unknown free_split {free_split!r}")
            D_mat = sandwich[(x, y)] + np.kron(np.diag(diag * w_x[x]), delta_psd)
            C = A_mat + B_mat + dagger(B_mat) + D_mat
            tensors[y][x] = C.reshape(m_x, n_y, m_x, n_y)
    inverse = Channel(F.target, F.source, tensors, tol=tol)
    verification = verify_bayes(F, inverse, omega, tol)
    if not verification.ok:
        raise ExtensionFailure(
            "constructed extension failed verification: "
            f"pairing {verification.pairing_residual:.3e}, "
            f"state transport {verification.state_preservation_residual:.3e}, "
            f"ucp ok {bool(verification.ucp)}"
        )
    return ExistenceResult(
        exists=True,
        margin=float(margin),
        trace_blocks=trace_blocks,
        inverse=inverse,
        verification=verification,
    )


def bayes_inverse(
    F: LinearMap, omega: State, tol: Tolerances = DEFAULT_TOL
) -> tuple[bool, Optional[Channel], BayesAnalysis, Optional[ExistenceResult]]:
    """Battery + existence in one call; the common entry point."""
    analysis = battery(F, omega, tol)
    if not analysis.passed:
        return False, None, analysis, None
    result = existence(analysis, tol)
    return result.exists, result.inverse, analysis, result


@dataclass(frozen=True)
class CompositionalityReport:
    identity_ok: bool
    composite_ok: bool
    composite_residual: float
    uniqueness_ae_ok: Optional[bool]
    extensions_differ: Optional[bool]


def compositionality_check(
    F: LinearMap,
    G: LinearMap,
    omega: State,
    tol: Tolerances = DEFAULT_TOL,
) -> CompositionalityReport:
    """Functoriality checks for Bayesian inverses.

    (1) the identity channel inverts itself, (2) the composite of the two
    inverses inverts the composite channel, and (3) any two inverses of the
    same pair agree almost everywhere, while exact equality may fail off
    the support.
    """
    ident = identity_channel(MultiMatrixAlgebra(omega.algebra.block_dims))
    identity_ok = verify_bayes(ident, ident, omega, tol).ok

    xi = pullback(omega, F, tol)
    ok_f, Fbar, analysis_f, _ = bayes_inverse(F, omega, tol)
    ok_g, Gbar, _, _ = bayes_inverse(G, xi, tol)
    if not (ok_f and ok_g):
        raise ValueError("compositionality check needs two invertible inputs")
    comp = compose(F, G)
    candidate = compose(Gbar, Fbar)
    report = verify_bayes(comp, candidate, omega, tol)

    uniqueness = None
    differ = None
    alt = existence(analysis_f, tol, free_split="ramp")
    if alt.exists and alt.inverse is not None:
        from .channel import ae_equal

        uniqueness = ae_equal(Fbar, alt.inverse, xi, tol)
        differ = not Fbar.close_to(alt.inverse, tol.eps_eq)
    return CompositionalityReport(
        identity_ok=identity_ok,
        composite_ok=report.ok,
        composite_residual=report.pairing_residual,
        uniqueness_ae_ok=uniqueness,
        extensions_differ=differ,
    )
