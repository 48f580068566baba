"""Command-line driver: ``hhoglb {solve,stabconst,legendre,mesh-info}``."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass

import numpy as np

from .hho import DEFAULT_ALPHA, DEFAULT_C_P, DEFAULT_C_ST2, Params

log = logging.getLogger("hhoglb")


@dataclass
class RunConfig:
    domain: str = "lshape"
    p: int = 0
    mode: str = "adaptive"
    theta: float = 0.5
    alpha: float = DEFAULT_ALPHA
    c_st2: float = DEFAULT_C_ST2
    c_p: float = DEFAULT_C_P
    target_index: int = 1
    max_ndof: int = 50_000
    reference_lambda: float | None = None
    output: str | None = None

    def params(self) -> Params:
        return Params(alpha=self.alpha, c_p=self.c_p, c_st2=self.c_st2)

    def validate(self) -> None:
        if not 0 <= self.p <= 4:
            raise ValueError("p must lie in 0..4")
        if self.mode not in ("uniform", "adaptive"):
            raise ValueError("mode must be 'uniform' or 'adaptive'")
        if not 0.0 < self.theta <= 1.0:
            raise ValueError("theta must lie in (0, 1]")
        if self.target_index < 1:
            raise ValueError("target index must be positive")
        if self.max_ndof < 1:
            raise ValueError("max ndof must be positive")
        self.params()


def format_parameters(params: Params) -> str:
    return (
        f"alpha = {params.alpha:.6f}\n"
        f"C_P = {params.c_p:.6f}\n"
        f"C_st2 = {params.c_st2:.6f}\n"
        f"sigma2^2 = {params.sigma2_sq:.6f}\n"
        f"beta = {params.beta:.6f}"
    )


def format_glb_table(history, reference: dict[int, float]) -> str:
    from .assembly import glb_check

    row = history.rows[-1]
    report = glb_check(row.eigenvalues, row.hmax, history.params)
    lines = [
        f"final mesh: ndof = {row.ndof}, hmax = {row.hmax:.6g}",
        "j lambda_h GLB certified lambda_ref lambda_ref-GLB",
    ]
    for e in report.entries:
        ref = reference.get(e.index)
        ref_s = f"{ref:.17g}" if ref is not None else "-"
        err_s = f"{ref - e.glb:.6e}" if ref is not None else "-"
        lines.append(f"{e.index} {e.lambda_h:.17g} {e.glb:.17g} {'yes' if e.condition_met else 'no'} {ref_s} {err_s}")
    return "\n".join(lines)


def run(config: RunConfig, out=None) -> int:
    from .adaptive import run_history
    from .domains import load_domain

    out = sys.stdout if out is None else out

    config.validate()
    params = config.params()
    mesh, spec = load_domain(config.domain)
    reference = dict(spec.reference) if spec is not None else {}
    if config.reference_lambda is not None:
        reference[config.target_index] = config.reference_lambda
    print(format_parameters(params), file=out)
    print(f"domain = {config.domain}, p = {config.p}, mode = {config.mode}, j = {config.target_index}", file=out)

    history = run_history(
        mesh,
        config.p,
        params,
        target_index=config.target_index,
        mode=config.mode,
        theta=config.theta,
        max_ndof=config.max_ndof,
        reference=reference.get(config.target_index),
        callback=lambda r: print(
            f"ndof={r.ndof} hmax={r.hmax:.4g} lambda_h={r.lambda_h:.12g} glb={r.glb:.12g} eta2={r.eta_sq:.4g}",
            file=out,
        ),
    )
    if config.output:
        history.write_csv(config.output)
        print(f"history written to {config.output}", file=out)
    print(format_glb_table(history, reference), file=out)
    return 0


def _parse_triangle(text: str) -> np.ndarray:
    vals = [float(v) for v in text.replace(";", ",").split(",")]
    if len(vals) != 6:
        raise argparse.ArgumentTypeError("triangle needs six comma-separated coordinates")
    return np.array(vals).reshape(3, 2)


def _int_range(text: str) -> list[int]:
    """``"3"`` or ``"1-4"`` or ``"1,3,5"``."""
    out: list[int] = []
    for part in text.split(","):
        if "-" in part:
            a, b = part.split("-")
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return out


def stabconst_cmd(args, out=None) -> int:
    from . import stabconst as sc

    out = sys.stdout if out is None else out
    fem = (args.fem_degree, args.fem_refines)
    target = open(args.output, "w", newline="") if args.output else out
    try:
        if args.sweep:
            omegas = [math.radians(float(v)) for v in args.sweep.split(",")]
            for p in args.p:
                sc.write_sweep_csv(sc.angle_sweep(omegas, p, fem), p, target)
        else:
            results = [sc.compute_mp(args.triangle, p, fem, args.rayleigh_n) for p in args.p]
            sc.write_stabconst_csv(results, target)
            for r in results:
                if r.analytic:
                    log.info("p = 0: C_st2 = 1 holds exactly (analytic)")
    finally:
        if args.output:
            target.close()
    return 0


def legendre_cmd(args, out=None) -> int:
    from .legendre import growth_table

    out = sys.stdout if out is None else out
    print("p,ratio,ratio_over_sqrt_p", file=out)
    for p, ratio, scaled in growth_table(args.p):
        print(f"{p},{ratio:.12g},{scaled:.12g}", file=out)
    return 0


def mesh_info_cmd(args, out=None) -> int:
    from .domains import load_domain
    from .mesh import uniform_refine, write_mesh

    out = sys.stdout if out is None else out
    mesh, _ = load_domain(args.domain)
    for _ in range(args.refine):
        mesh = uniform_refine(mesh)
    for key, value in mesh.summary().items():
        print(f"{key}: {value}", file=out)
    if args.write:
        write_mesh(mesh, args.write)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hhoglb", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    d = RunConfig()
    s = sub.add_parser("solve", help="uniform or adaptive eigenvalue computation with lower-bound certificates")
    s.add_argument("--domain", default=d.domain, help="built-in domain name or mesh file")
    s.add_argument("--p", type=int, default=d.p, choices=range(5))
    s.add_argument("--mode", default=d.mode, choices=("uniform", "adaptive"))
    s.add_argument("--theta", type=float, default=d.theta)
    s.add_argument("--alpha", type=float, default=d.alpha)
    s.add_argument("--c-st2", type=float, default=d.c_st2)
    s.add_argument("--c-p", type=float, default=d.c_p)
    s.add_argument("--target-index", type=int, default=d.target_index)
    s.add_argument("--max-ndof", type=int, default=d.max_ndof)
    s.add_argument("--reference-lambda", type=float, default=None)
    s.add_argument("--output", default=None, help="CSV file for the convergence history")

    c = sub.add_parser("stabconst", help="stability constants on a single triangle (CSV)")
    c.add_argument("--p", type=_int_range, default=[1, 2, 3, 4])
    c.add_argument("--triangle", type=_parse_triangle, default="0,0,1,0,0,1")
    c.add_argument("--sweep", default=None, help="comma-separated apex angles in degrees")
    c.add_argument("--fem-degree", type=int, default=4)
    c.add_argument("--fem-refines", type=int, default=6)
    c.add_argument("--rayleigh-n", type=int, default=None)
    c.add_argument("--output", default=None)

    g = sub.add_parser("legendre", help="growth of projected Legendre antiderivatives")
    g.add_argument("--p", type=_int_range, default=list(range(1, 11)))

    m = sub.add_parser("mesh-info", help="summary of a built-in domain or mesh file")
    m.add_argument("domain")
    m.add_argument("--refine", type=int, default=0)
    m.add_argument("--write", default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "solve":
            config = RunConfig(
                domain=args.domain,
                p=args.p,
                mode=args.mode,
                theta=args.theta,
                alpha=args.alpha,
                c_st2=args.c_st2,
                c_p=args.c_p,
                target_index=args.target_index,
                max_ndof=args.max_ndof,
                reference_lambda=args.reference_lambda,
                output=args.output,
            )
            return run(config)
        if args.command == "stabconst":
            return stabconst_cmd(args)
        if args.command == "legendre":
            return legendre_cmd(args)
        return mesh_info_cmd(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"hhoglb: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # solver failures
        print(f"hhoglb: internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
