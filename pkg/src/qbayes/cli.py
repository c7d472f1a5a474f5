"""Command-line front end.

Subcommands: `check` runs the requested analyses on a problem file and
prints a schema-versioned report; `invert` additionally writes the
constructed inverse or recovery channel; `random` mints seeded problem
files. Exit codes: 0 = analyses ran (verdicts live in the report), 2 =
input error, 3 = a proven equivalence was violated numerically (bug
alarm, distinct from a mathematical "no").
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from typing import Optional

import numpy as np

from . import __version__
from .bayesinv import battery, bayes_inverse, existence
from .disint import (
    bayes_disint_bridge,
    condexp_characterize,
    disintegrate,
    takesaki_battery,
)
from .errors import InternalInconsistency, ParseError, QBayesError, SchemaError
from .generators import (
    inclusion_hom,
    product_state_for_hom,
    random_kraus_channel,
    random_state,
)
from .jsonio import (
    ALL_ANALYSES,
    PROBLEM_SCHEMA,
    REPORT_SCHEMA,
    canonical_dumps,
    channel_to_json,
    loads,
    problem_from_json,
    state_to_json,
)
from .linalg import Tolerances
from .modular import ac_condition_algebraic, ac_condition_sampled

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INCONSISTENT = 3


def _tolerances(args, overrides: dict) -> Tolerances:
    eps_eq = overrides.get("eps_eq")
    eps_rank = overrides.get("eps_rank")
    env_eq = os.environ.get("QBAYES_EPS_EQ")
    if env_eq is not None and eps_eq is None:
        eps_eq = float(env_eq)
    if getattr(args, "eps_eq", None) is not None:
        eps_eq = args.eps_eq
    if getattr(args, "eps_rank", None) is not None:
        eps_rank = args.eps_rank
    base = Tolerances()
    return Tolerances(
        eps_rank=base.eps_rank if eps_rank is None else float(eps_rank),
        eps_eq=base.eps_eq if eps_eq is None else float(eps_eq),
        eps_recon=base.eps_recon,
    )


def _run_analyses(problem: dict, tol: Tolerances) -> dict:
    channel = problem["channel"]
    hom = problem["hom"]
    state = problem["state"]
    out: dict = {}
    for name in problem["analyses"]:
        if name == "ac":
            algebraic = ac_condition_algebraic(channel, state, tol)
            sampled = ac_condition_sampled(channel, state, tol=tol)
            out["ac"] = {
                "verdict": bool(algebraic.ok),
                "max_residual": algebraic.max_residual,
                "sampled_residual": sampled.max_residual,
            }
        elif name == "takesaki":
            rep = takesaki_battery(hom, state, tol)
            out["takesaki"] = {
                "corner_hom": rep.corner_hom,
                "corner_hom_residual": rep.corner_hom_residual,
                "ac": rep.corner_intertwining,
                "ac_residual": rep.corner_intertwining_residual,
                "corner_disintegration": rep.corner_disintegration,
                "disintegration": rep.full_disintegration,
            }
        elif name == "disintegrate":
            res = disintegrate(hom, state, tol)
            entry = {
                "exists": res.exists,
                "residuals": {k: v for k, v in sorted(res.certificate.residuals.items())},
            }
            if res.exists:
                entry["recovery"] = channel_to_json(res.recovery)
                entry["verification"] = {
                    "state_preservation_residual": res.report.state_preservation_residual,
                    "exact_left_inverse": res.report.exact_left_inverse,
                }
            out["disintegrate"] = entry
        elif name == "condexp":
            rep = condexp_characterize(hom, state, tol)
            out["condexp"] = {
                "exists": rep.ok,
                "off_diagonal_residual": rep.off_diagonal_residual,
                "product_residual": rep.product_residual,
                "mixing_residual": rep.mixing_residual,
            }
        elif name == "bayes-battery":
            analysis = battery(channel, state, tol)
            out["bayes-battery"] = {
                "passed": analysis.passed,
                "conditions": {
                    cname: {"ok": rep.ok, "residual": rep.residual}
                    for cname, rep in sorted(analysis.conditions.items())
                },
            }
        elif name == "bayes-existence":
            analysis = battery(channel, state, tol)
            entry: dict = {"battery_passed": analysis.passed}
            if analysis.passed:
                res = existence(analysis, tol)
                entry["exists"] = res.exists
                entry["margin"] = res.margin
                if res.exists:
                    entry["inverse"] = channel_to_json(res.inverse)
                    entry["pairing_residual"] = res.verification.pairing_residual
            else:
                entry["exists"] = False
            out["bayes-existence"] = entry
        elif name == "bridge":
            rep = bayes_disint_bridge(hom if hom is not None else channel, state, tol)
            out["bridge"] = {
                "disintegration": rep.disintegration,
                "bayes_inverse": rep.bayes_inverse,
                "deterministic": rep.deterministic,
                "consistent": rep.consistent,
            }
    return out


def _report(problem: dict, analyses: dict, tol: Tolerances, elapsed: float) -> dict:
    return {
        "schema": REPORT_SCHEMA,
        "tool": {"name": "qbayes", "version": __version__},
        "tolerances": {
            "eps_rank": tol.eps_rank,
            "eps_eq": tol.eps_eq,
            "eps_recon": tol.eps_recon,
        },
        "analyses": analyses,
        "timing": {"seconds": elapsed},
    }


def _print_report(report: dict, pretty: bool, stream) -> None:
    if not pretty:
        stream.write(canonical_dumps(report))
        return
    stream.write(f"qbayes {report['tool']['version']}\n")
    for name, entry in sorted(report["analyses"].items()):
        stream.write(f"[{name}]\n")
        for key, value in sorted(entry.items()):
            if isinstance(value, dict):
                stream.write(f"  {key}:\n")
                for k2, v2 in sorted(value.items()):
                    stream.write(f"    {k2}: {v2}\n")
            else:
                stream.write(f"  {key}: {value}\n")
    stream.write(f"elapsed: {report['timing']['seconds']:.3f}s\n")


def cmd_check(args) -> int:
    with open(args.problem, "r", encoding="utf-8") as fh:
        data = loads(fh.read())
    problem = problem_from_json(data)
    if args.analyses:
        requested = [a.strip() for a in args.analyses.split(",") if a.strip()]
        for a in requested:
            if a not in ALL_ANALYSES:
                raise SchemaError(f"--analyses: unknown analysis '{a}'")
            if a in ("takesaki", "disintegrate", "condexp") and problem["hom"] is None:
                raise SchemaError(f"--analyses: '{a}' needs a channel of kind 'hom'")
        problem["analyses"] = requested
    tol = _tolerances(args, problem["tolerances"])
    start = time.perf_counter()
    analyses = _run_analyses(problem, tol)
    report = _report(problem, analyses, tol, time.perf_counter() - start)
    _print_report(report, args.pretty, sys.stdout)
    return EXIT_OK


def cmd_invert(args) -> int:
    with open(args.problem, "r", encoding="utf-8") as fh:
        data = loads(fh.read())
    problem = problem_from_json(data)
    tol = _tolerances(args, problem["tolerances"])
    start = time.perf_counter()
    constructed = None
    if args.mode == "bayes":
        exists, inverse, analysis, result = bayes_inverse(problem["channel"], problem["state"], tol)
        entry = {"mode": "bayes", "battery_passed": analysis.passed, "exists": exists}
        if exists:
            entry["pairing_residual"] = result.verification.pairing_residual
            entry["margin"] = result.margin
            constructed = inverse
    else:
        if problem["hom"] is None:
            raise SchemaError("invert --mode disint needs a channel of kind 'hom'")
        res = disintegrate(problem["hom"], problem["state"], tol)
        entry = {"mode": "disint", "exists": res.exists}
        entry["residuals"] = {k: v for k, v in sorted(res.certificate.residuals.items())}
        if res.exists:
            entry["state_preservation_residual"] = res.report.state_preservation_residual
            constructed = res.recovery
    if constructed is not None:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(canonical_dumps(channel_to_json(constructed)))
        entry["written"] = args.out
    report = _report(problem, {"invert": entry}, tol, time.perf_counter() - start)
    _print_report(report, args.pretty, sys.stdout)
    return EXIT_OK


def _parse_dims(text: str) -> tuple[tuple[int, ...], tuple[int, ...]]:
    try:
        left, right = text.split("->")
        src = tuple(int(d) for d in left.split(","))
        tgt = tuple(int(d) for d in right.split(","))
    except ValueError as exc:
        raise SchemaError(f"--dims: expected 'n1,n2->m1,m2', got '{text}'") from exc
    if not src or not tgt or min(src + tgt) <= 0:
        raise SchemaError(f"--dims: dimensions must be positive in '{text}'")
    return src, tgt


def cmd_random(args) -> int:
    src, tgt = _parse_dims(args.dims)
    rng = np.random.default_rng(args.seed)
    kind = args.kind
    if kind in ("product", "nonproduct", "rankdef"):
        if len(src) != 1 or len(tgt) != 1 or tgt[0] % src[0] != 0:
            raise SchemaError(
                f"--kind {kind} needs single-block dims n->k*n, got {args.dims}"
            )
        n = src[0]
        k = tgt[0] // n
        h = inclusion_hom(k, n)
        if kind == "product":
            state = product_state_for_hom(rng, h)
        elif kind == "rankdef":
            state = product_state_for_hom(
                rng, h, tau_ranks={(0, 0): max(1, k - 1)},
                sigma_ranks=[max(1, n - 1)],
            )
        else:
            state = random_state(rng, h.target)
        channel_json = hom_problem_channel(h)
    elif kind == "kraus":
        from .algebra import MultiMatrixAlgebra

        source = MultiMatrixAlgebra(src)
        target = MultiMatrixAlgebra(tgt)
        F = random_kraus_channel(rng, source, target, n_kraus=2)
        state = random_state(rng, target)
        channel_json = channel_to_json(F)
    else:
        raise SchemaError(f"--kind: unknown kind '{kind}'")
    problem = {
        "schema": PROBLEM_SCHEMA,
        "_comment": f"generated by qbayes random --dims {args.dims} "
        f"--kind {kind} --seed {args.seed}",
        "channel": channel_json,
        "state": state_to_json(state),
    }
    text = canonical_dumps(problem)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def hom_problem_channel(h) -> dict:
    data = h.to_dict()
    data["kind"] = "hom"
    return data


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qbayes",
        description="Bayesian inverses, disintegrations, and state-preserving "
        "conditional expectations for UCP maps on multi-matrix algebras.",
    )
    parser.add_argument("--version", action="version", version=f"qbayes {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser("check", help="run analyses on a problem file")
    p_check.add_argument("problem")
    p_check.add_argument("--analyses", help="comma-separated subset to run")
    p_check.add_argument("--eps-eq", type=float, dest="eps_eq")
    p_check.add_argument("--eps-rank", type=float, dest="eps_rank")
    group = p_check.add_mutually_exclusive_group()
    group.add_argument("--json", action="store_true", help="JSON report (default)")
    group.add_argument("--pretty", action="store_true", help="human-readable report")
    p_check.set_defaults(func=cmd_check)

    p_inv = sub.add_parser("invert", help="construct and write an inverse channel")
    p_inv.add_argument("problem")
    p_inv.add_argument("--mode", choices=("bayes", "disint"), required=True)
    p_inv.add_argument("--out", required=True)
    p_inv.add_argument("--eps-eq", type=float, dest="eps_eq")
    p_inv.add_argument("--eps-rank", type=float, dest="eps_rank")
    p_inv.add_argument("--pretty", action="store_true")
    p_inv.set_defaults(func=cmd_invert)

    p_rand = sub.add_parser("random", help="generate a seeded problem file")
    p_rand.add_argument("--dims", required=True, help="source->target, e.g. 2->4")
    p_rand.add_argument(
        "--kind", required=True, choices=("product", "nonproduct", "rankdef", "kraus")
    )
    p_rand.add_argument("--seed", type=int, required=True)
    p_rand.add_argument("--out")
    p_rand.set_defaults(func=cmd_random)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, SchemaError, FileNotFoundError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except InternalInconsistency as exc:
        sys.stderr.write(f"internal inconsistency: {exc}\n")
        return EXIT_INCONSISTENT
    except QBayesError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
