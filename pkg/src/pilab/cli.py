"""``pilab`` command line: build, run, sweep, perturb, verify, export-lp.

Exit codes: 0 success, 1 a check failed, 2 bad usage.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .families import DEFAULT_VARIANT, FAMILIES, VARIANTS, build, make_variant, perturb_built
from .lp import export_lp, write_lp_file
from .mdp import Reachability, dumps_mdp, reachability_as_total_reward
from .perturbation import STYLES, Adversarial, PerturbationSpec, Random, adversarial_deltas, deltas_from_json, perturb
from .policy_iteration import run, trace_to_dict
from .rational import format_q, parse_q
from .verification import CHECKS, all_passed, growth_curve, resolve_sigma, verify_family


class UsageError(Exception):
    pass


def parse_range(text: str) -> list[int]:
    """``5``, ``2..8`` or ``2,3,5``."""
    try:
        if ".." in text:
            lo, hi = text.split("..")
            return list(range(int(lo), int(hi) + 1))
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad n range {text!r}") from None


def parse_sigma(text: str):
    if text.strip().upper() == "1/N":
        return "1/N"
    try:
        return parse_q(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad sigma {text!r}") from None


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _instance(args):
    built = build(args.family, args.n)
    mdp = built.mdp
    sigma = resolve_sigma(args.sigma, built) if getattr(args, "sigma", None) is not None else None
    style = getattr(args, "style", None)
    deltas_path = getattr(args, "adversarial", None)
    if deltas_path is not None:
        if sigma is None:
            raise UsageError("--adversarial needs --sigma")
        deltas = deltas_from_json(json.loads(Path(deltas_path).read_text()))
        mdp = perturb_built(built, PerturbationSpec(sigma, Adversarial(deltas))).mdp
    elif style is not None:
        if sigma is None:
            raise UsageError("--style needs --sigma")
        if not built.gadgets:
            raise UsageError("adversarial styles apply to gadget families (robust)")
        mdp = perturb(mdp, PerturbationSpec(sigma, Adversarial(adversarial_deltas(built, sigma, style))))
    elif sigma is not None:
        mdp = perturb_built(built, PerturbationSpec(sigma, Random(args.seed))).mdp
    return built, mdp, sigma


def cmd_build(args) -> int:
    built = build(args.family, args.n)
    _emit(dumps_mdp(built.mdp) + "\n", args.out)
    return 0


def cmd_perturb(args) -> int:
    if args.sigma is None:
        raise UsageError("perturb needs --sigma")
    _, mdp, _ = _instance(args)
    _emit(dumps_mdp(mdp) + "\n", args.out)
    return 0


def cmd_run(args) -> int:
    built, mdp, sigma = _instance(args)
    variant = make_variant(args.variant or DEFAULT_VARIANT[args.family], built)
    if args.criterion == "total" and isinstance(mdp.criterion, Reachability):
        mdp = reachability_as_total_reward(mdp, mdp.criterion.target)
    elif args.criterion == "reachability" and not isinstance(mdp.criterion, Reachability):
        raise UsageError("reachability criterion needs the reachability family")
    max_iters = built.default_max_iters if args.max_iters is None else args.max_iters
    trace = run(mdp, built.start_policy, variant, max_iters=max_iters, record_values=args.values, check_monotone=False)
    data = {
        "family": args.family,
        "n": args.n,
        "states": built.num_states,
        "variant": args.variant or DEFAULT_VARIANT[args.family],
        "criterion": "reachability" if isinstance(mdp.criterion, Reachability) else "total-reward",
        "sigma": None if sigma is None else format_q(sigma),
        "seed": args.seed if sigma is not None and args.style is None and args.adversarial is None else None,
        "style": args.style,
        **trace_to_dict(trace, mdp, exact=args.exact),
    }
    text = json.dumps(data, indent=1, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    print(f"iterations={trace.iteration_count} optimal={str(trace.optimal).lower()}")
    return 0


def cmd_sweep(args) -> int:
    table = growth_curve(
        args.family, args.n, args.variant, sigma=args.sigma, seeds=list(range(args.seeds)), max_iters=args.max_iters
    )
    _emit(table.to_csv(), args.out)
    slope = table.slope
    if slope is not None:
        print(f"slope={slope:.4f}", file=sys.stderr)
    return 0


def cmd_verify(args) -> int:
    checks = None if args.checks is None else [c.strip() for c in args.checks.split(",") if c.strip()]
    reports = verify_family(args.family, args.n, checks, sigma=args.sigma, seeds=list(range(args.seeds)))
    ok = all_passed(reports)
    data = {"family": args.family, "n": args.n, "pass": ok, "reports": [r.to_dict() for r in reports]}
    _emit(json.dumps(data, indent=1, sort_keys=True) + "\n", args.out)
    return 0 if ok else 1


def cmd_export_lp(args) -> int:
    _, mdp, _ = _instance(args)
    write_lp_file(export_lp(mdp), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pilab", description="Policy-iteration lower-bound instances and checks.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, multi=False):
        sp.add_argument("--family", required=True, choices=FAMILIES)
        if multi:
            sp.add_argument("--n", required=True, type=parse_range, help="e.g. 5, 2..8 or 2,3,5")
        else:
            sp.add_argument("--n", required=True, type=int)

    def perturbation(sp):
        sp.add_argument("--sigma", type=parse_sigma, help="radius, a rational or the token 1/N")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--style", choices=STYLES, help="adversarial perturbation instead of random")
        sp.add_argument("--adversarial", metavar="DELTAS.json", help='explicit deltas keyed "state/action/slot"')

    sp = sub.add_parser("build", help="emit the MDP as JSON")
    common(sp)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_build)

    sp = sub.add_parser("run", help="run policy iteration and emit the trace")
    common(sp)
    sp.add_argument("--variant", choices=VARIANTS)
    sp.add_argument("--criterion", choices=("default", "total", "reachability"), default="default")
    sp.add_argument("--max-iters", type=int)
    sp.add_argument("--values", action="store_true", help="record values before every iteration")
    sp.add_argument("--exact", action="store_true", help="exact num/den values instead of decimals")
    sp.add_argument("--out", help="trace JSON path")
    perturbation(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="growth table as CSV")
    common(sp, multi=True)
    sp.add_argument("--variant", choices=VARIANTS)
    sp.add_argument("--sigma", type=parse_sigma)
    sp.add_argument("--seeds", type=int, default=1)
    sp.add_argument("--max-iters", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("perturb", help="emit a perturbed MDP as JSON")
    common(sp)
    perturbation(sp)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_perturb)

    sp = sub.add_parser("verify", help="run the checks and emit a JSON report")
    common(sp)
    sp.add_argument("--checks", help=f"comma list from: {', '.join(CHECKS)}")
    sp.add_argument("--sigma", type=parse_sigma)
    sp.add_argument("--seeds", type=int, default=1)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("export-lp", help="write the LP in MPS format")
    common(sp)
    perturbation(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_export_lp)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ValueError, KeyError) as exc:
        print(f"pilab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
