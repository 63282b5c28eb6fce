"""Command-line entry point: ``caperc {constants,simulate,census,convergence,verify}``.

Exit codes: 0 success, 1 verification failure, 2 usage, 3 domain, 4 resource.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import theory
from .ca_components import Partition, ca_partition, ca_partition_oracle
from .colored_graph import ColoredMultigraph, ColorParams, derive_seed, figure1_gadget
from .errors import DomainError, ResourceError
from .montecarlo import (
    ExperimentConfig,
    config_from_mapping,
    estimate,
    max_ca_scaling,
    parse_config_text,
    quantiles,
    run,
)
from .structure_census import DEFAULT_MAX_LEN, MAX_LEN_CAP, census, enumerate_cycles, max_separation

SCHEMA = "caperc/1"
SUITES = ("ca", "fig1", "separation", "fixedpoint")
CONVERGENCE_STREAM = 3


class FlagError(DomainError):
    def __init__(self, flag: str, msg: str):
        super().__init__(f"{flag}: {msg}")
        self.flag = flag


def _round(obj):
    """Round every float to 12 significant digits."""
    if isinstance(obj, float):
        if math.isfinite(obj):
            return float(f"{obj:.12g}")
        return None
    if isinstance(obj, dict):
        return {str(k): _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, np.generic):
        return _round(obj.item())
    return obj


def dumps(obj) -> str:
    return json.dumps(_round({"schema": SCHEMA, **obj}), sort_keys=True)


def _emit(text: str, out: str | None, name: str):
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    path = Path(out)
    if path.suffix == "" or path.is_dir():
        path.mkdir(parents=True, exist_ok=True)
        path = path / name
    path.write_text(text if text.endswith("\n") else text + "\n")


# ----------------------------------------------------------------------------
# flag parsing


def _params(args, required: bool = True) -> ColorParams | None:
    if args.lambdas is None:
        if required:
            raise FlagError("--lambdas", "required")
        return None
    try:
        return ColorParams.parse(args.lambdas)
    except (DomainError, ValueError) as exc:
        raise FlagError("--lambdas", str(exc)) from exc


def _max_len(args) -> int:
    m = args.max_cycle_len
    if not 3 <= m <= MAX_LEN_CAP:
        raise FlagError("--max-cycle-len", f"must lie in [3, {MAX_LEN_CAP}], got {m}")
    return m


def _positive(flag: str, value: int) -> int:
    if value < 1:
        raise FlagError(flag, f"must be positive, got {value}")
    return value


def _echo(params: ColorParams | None) -> dict:
    if params is None:
        return {}
    return {"lambdas": list(params.lambdas), "lambdas_input": list(params.input_order)}


# ----------------------------------------------------------------------------
# commands


def cmd_constants(args) -> int:
    params = _params(args)
    max_len = _max_len(args)
    if (args.q is None) != (args.lam is None):
        raise FlagError("--q" if args.q is None else "--lambda", "--q and --lambda go together")
    try:
        c = theory.constants(params, max_len, q=args.q, lam=args.lam)
    except DomainError as exc:
        raise FlagError("--q/--lambda", str(exc)) from exc
    body = c.to_json()
    body.update(_echo(params))
    body["I_lambda"] = [theory.rate_I(x) for x in params.lambdas]
    body["I_lambda_star"] = [theory.rate_I(x) for x in params.lambda_star]
    body["mu_lambda_star"] = [theory.mu(x) for x in params.lambda_star]
    body["lambda_star"] = list(params.lambda_star)
    _emit(dumps(body), args.out, "constants.json")
    return 0


def _experiment(args, measurements) -> ExperimentConfig:
    values = {}
    if getattr(args, "config", None):
        try:
            values = parse_config_text(Path(args.config).read_text())
        except OSError as exc:
            raise FlagError("--config", str(exc)) from exc
    params = _params(args, required="lambdas" not in values and getattr(args, "lambda_single", None) is None)
    if params is not None:
        values["lambdas"] = params
    if args.n is not None:
        values["n"] = args.n
    if "n" not in values:
        raise FlagError("--n", "required")
    _positive("--n", values["n"])
    if args.trials is not None:
        values["trials"] = _positive("--trials", args.trials)
    if args.seed is not None:
        values["seed"] = args.seed
    values["max_cycle_len"] = _max_len(args) if args.max_cycle_len != DEFAULT_MAX_LEN else values.get("max_cycle_len", DEFAULT_MAX_LEN)
    if getattr(args, "measurements", None):
        values["measurements"] = frozenset(x.strip() for x in args.measurements.split(",") if x.strip())
    elif "measurements" not in values:
        values["measurements"] = frozenset(measurements)
    for key in ("q_black", "lambda_single"):
        if getattr(args, key, None) is not None:
            values[key] = getattr(args, key)
    return config_from_mapping(values)


def cmd_simulate(args) -> int:
    cfg = _experiment(args, {"ca"})
    res = run(cfg, workers=args.threads, allow_large=args.allow_large)
    lines = "".join(json.dumps(_round(r.to_json()), sort_keys=True) + "\n" for r in res.records)
    config_json = dumps({"config": cfg.to_json()})
    summary_json = dumps({"config": cfg.to_json(), "summary": res.summary.to_json()})
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "trials.jsonl").write_text(lines)
        (out / "summary.csv").write_text(res.summary.csv())
        (out / "config.json").write_text(config_json + "\n")
        (out / "summary.json").write_text(summary_json + "\n")
    if args.format == "csv":
        sys.stdout.write(res.summary.csv())
    elif args.out is None:
        sys.stdout.write(lines)
        sys.stdout.write(summary_json + "\n")
    else:
        sys.stdout.write(summary_json + "\n")
    return 0


def parse_fixture(spec: str) -> ColoredMultigraph:
    name, _, rest = spec.partition(":")
    if name != "fig1":
        raise FlagError("--fixture", f"unknown fixture {name!r}")
    close = rest.endswith("+close")
    body = rest[: -len("+close")] if close else rest
    try:
        ell = int(body)
    except ValueError as exc:
        raise FlagError("--fixture", f"bad ladder length {body!r}") from exc
    if ell < 1:
        raise FlagError("--fixture", "ladder length must be at least 1")
    return figure1_gadget(ell, closing_edge=close)


def cmd_census(args) -> int:
    max_len = _max_len(args)
    if args.fixture:
        g = parse_fixture(args.fixture)
        res = census(g, max_len)
        report = ca_partition(g)
        body = {
            "fixture": args.fixture,
            "n": g.n,
            "census": res.to_json(),
            "separated_cycles": sum(res.y.values()),
            "ca_histogram": {str(s): c for s, c in sorted(report.histogram.items())},
            "cycles": [r.csv_row() for r in enumerate_cycles(g, max_len)],
        }
        _emit(dumps(body), args.out, "census.json")
        return 0
    cfg = _experiment(args, {"census", "ca"})
    res = run(cfg, workers=args.threads, allow_large=args.allow_large)
    summary = res.summary
    means = {name: {"mean": s.mean, "se": s.se} for name, s in summary.stats.items()}
    body = {"config": cfg.to_json(), "empirical": means,
            "gof": {k: {"statistic": g.statistic, "p_value": g.p_value, "dof": g.dof} for k, g in summary.gof.items()}}
    params = cfg.params
    if params is not None and theory.classify_regime(params) is theory.Regime.SUBCRITICAL:
        body["predicted"] = {"gamma": {str(m): theory.gamma_m(params, m) for m in range(2, cfg.max_cycle_len + 1)},
                             "beta_k": theory.beta_top(params)}
    if args.format == "csv":
        sys.stdout.write(summary.csv())
    else:
        _emit(dumps(body), args.out, "census.json")
    return 0


def _parse_ns(text: str) -> list[int]:
    try:
        ns = [int(float(x)) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise FlagError("--ns", f"bad list {text!r}") from exc
    if not ns or any(b <= a for a, b in zip(ns, ns[1:])) or ns[0] < 2:
        raise FlagError("--ns", "must be an ascending list of sizes >= 2")
    return ns


def convergence_table(cfg: ExperimentConfig, ns: list[int], workers: int = 1, allow_large: bool = False) -> list[dict]:
    """Per-n normalized statistics; n-th row uses master seed ``derive_seed(seed, 3, j)``."""
    rows = []
    for j, n in enumerate(ns):
        sub = ExperimentConfig(
            cfg.params, n, cfg.trials, derive_seed(cfg.master_seed, CONVERGENCE_STREAM, j),
            cfg.max_cycle_len, cfg.measurements, cfg.q_black, cfg.lambda_single, cfg.max_work,
        )
        res = run(sub, workers, allow_large)
        row = {"n": n, "trials": cfg.trials}
        if "ca" in sub.measurements and sub.params is not None:
            maxima = [r.max_ca_size for r in res.records]
            by_n = max_ca_scaling(res.records, "n")
            by_log = max_ca_scaling(res.records, "log n", sub.regime)
            q50, q90, q99 = quantiles(maxima)
            row.update(
                regime=sub.regime.value, max_ca_mean=float(np.mean(maxima)), max_ca_over_n=by_n.mean,
                max_ca_over_log_n=by_log.mean, ci_low=by_log.ci[0], ci_high=by_log.ci[1],
                q50=q50, q90=q90, q99=q99, tag=by_log.tag or "",
            )
        if sub.lambda_single is not None and "components" in sub.measurements:
            e = estimate([r.single_max / math.log(n) for r in res.records])
            row.update(single_max_over_log_n=e.mean, single_ci_low=e.ci[0], single_ci_high=e.ci[1])
        if "black_clusters" in sub.measurements:
            e = estimate([r.black_max / math.log(n) for r in res.records])
            row.update(black_max_over_log_n=e.mean, black_ci_low=e.ci[0], black_ci_high=e.ci[1])
        rows.append(row)
    return rows


def cmd_convergence(args) -> int:
    ns = _parse_ns(args.ns)
    args.n = ns[0]
    cfg = _experiment(args, {"ca"})
    rows = convergence_table(cfg, ns, args.threads, args.allow_large)
    if args.format == "json":
        _emit(dumps({"config": cfg.to_json(), "rows": rows}), args.out, "convergence.json")
        return 0
    cols = list(rows[0])
    lines = [",".join(cols)]
    for r in rows:
        lines.append(",".join(f"{v:.12g}" if isinstance(v, float) else str(v) for v in (r.get(c, "") for c in cols)))
    _emit("\n".join(lines) + "\n", args.out, "convergence.csv")
    return 0


# ----------------------------------------------------------------------------
# verify


def _suite_ca(flip: bool, seed: int = 2024, cases: int = 200):
    rng = np.random.default_rng(seed)
    ok = 0
    for c in range(cases):
        n = int(rng.integers(2, 9))
        k = int(rng.integers(2, 5))
        layers = []
        for _ in range(k):
            iu, ju = np.triu_indices(n, 1)
            keep = rng.random(len(iu)) < 0.3
            layers.append(np.stack([iu[keep], ju[keep]], axis=1))
        g = ColoredMultigraph(n, layers)
        expect = ca_partition_oracle(g)
        if flip and c == 0:
            one = Partition.one_block(n)
            expect = Partition.singletons(n) if expect == one else one
        ok += ca_partition(g).partition == expect
    return ok, cases


def _suite_fig1(flip: bool):
    ok = total = 0
    for ell in range(1, 6):
        for close in (False, True):
            g = figure1_gadget(ell, closing_edge=close)
            hist = ca_partition(g).histogram
            expect = {1: g.n - 2 * (2 * ell + 1), 2: 2 * ell + 1} if close else {1: g.n}
            if flip and total == 0:
                expect = {2: g.n // 2}
            ok += hist == expect
            total += 1
    return ok, total


SEPARATION_CASES = [
    ([{0}, {1}], 2),
    ([{0, 1}, {0}], 1),
    ([{0, 1}, {2}], 2),
    ([{0}, {1}, {2}], 3),
    ([{0}, {1}, {0}, {1}], 1),
    ([{0}, {0}, {1}, {1}], 2),
    ([{0}, {1}, {2}, {0}], 3),
    ([{0}, {0}, {1}, {1}, {2}, {2}], 3),
    ([{0}, {1}, {0}, {2}], 2),
    ([{0, 1}, {2}, {3}], 3),
]


def _suite_separation(flip: bool):
    ok = 0
    for idx, (sets, expect) in enumerate(SEPARATION_CASES):
        if flip and idx == 0:
            expect += 1
        ok += max_separation([frozenset(s) for s in sets]) == expect
    return ok, len(SEPARATION_CASES)


def _suite_fixedpoint(flip: bool):
    ok = total = 0
    for lams in ("1.5,1.5", "2,1.2", "1.3,1.3,1.3", "3,1,0.5", "0.8,0.7"):
        p = ColorParams.parse(lams)
        fps = theory.subset_fixed_points(p)
        for i in range(p.k):
            expect = 1.0 - theory.mu(p.lambda_star[i])
            if flip and total == 0:
                expect += 0.5
            ok += abs(fps[frozenset({i})] - expect) <= 1e-9
            total += 1
    for lo, hi in ((0.99, 1.01), (0.9, 1.1)):
        above = ColorParams((hi, hi))
        below = ColorParams((lo, lo))
        ok += theory.a1(above) > 0 and theory.a1(below) == 0
        total += 1
    return ok, total


SUITE_FUNCS = {"ca": _suite_ca, "fig1": _suite_fig1, "separation": _suite_separation, "fixedpoint": _suite_fixedpoint}


def cmd_verify(args) -> int:
    names = [s.strip() for s in args.suites.split(",") if s.strip()]
    bad = [s for s in names if s not in SUITE_FUNCS]
    if bad or not names:
        raise FlagError("--suites", f"unknown suites {bad}; choose from {','.join(SUITES)}")
    results = {}
    for j, name in enumerate(names):
        ok, total = SUITE_FUNCS[name](args.self_test_negative and j == 0)
        results[name] = {"passed": int(ok), "total": int(total)}
    failed = any(r["passed"] != r["total"] for r in results.values())
    if args.format == "json":
        _emit(dumps({"suites": results, "ok": not failed}), args.out, "verify.json")
    else:
        text = "".join(
            f"{name}: {r['passed']}/{r['total']} {'PASS' if r['passed'] == r['total'] else 'FAIL'}\n"
            for name, r in results.items()
        )
        _emit(text, args.out, "verify.txt")
    return 1 if failed else 0


# ----------------------------------------------------------------------------
# parser


def _shared(p: argparse.ArgumentParser, *, sim: bool = True):
    p.add_argument("--lambdas", help="comma-separated color intensities, any order")
    p.add_argument("--max-cycle-len", type=int, default=DEFAULT_MAX_LEN)
    p.add_argument("--out", help="output file or directory")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    if sim:
        p.add_argument("--n", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--measurements", help="comma list from ca,census,components,black_clusters")
        p.add_argument("--q-black", type=float)
        p.add_argument("--lambda-single", type=float)
        p.add_argument("--allow-large", action="store_true", help="lift the n*trials guard")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="caperc", description="Color-avoiding percolation on colored ER graphs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("constants", help="limit constants for given lambdas")
    _shared(p, sim=False)
    p.add_argument("--q", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("simulate", help="Monte Carlo trials")
    _shared(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("census", help="cycle and repeated-edge census")
    _shared(p)
    p.add_argument("--fixture", help="fig1:<ell>[+close]")
    p.set_defaults(func=cmd_census)

    p = sub.add_parser("convergence", help="normalized statistics across n")
    _shared(p)
    p.add_argument("--ns", required=True, help="ascending comma list of n")
    p.set_defaults(func=cmd_convergence, format="csv")

    p = sub.add_parser("verify", help="oracle and invariant suites")
    p.add_argument("--suites", default=",".join(SUITES))
    p.add_argument("--self-test-negative", action="store_true", help="flip one oracle case; must fail")
    p.add_argument("--format", choices=("json", "text"), default="text")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FlagError as exc:
        if str(exc).startswith("--lambdas: required") or str(exc).startswith("--n: required"):
            parser.error(str(exc))
        print(f"caperc: error: {exc}", file=sys.stderr)
        return 3
    except DomainError as exc:
        print(f"caperc: error: {exc}", file=sys.stderr)
        return 3
    except ResourceError as exc:
        print(f"caperc: resource guard: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
