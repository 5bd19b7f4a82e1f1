"""``ncagm`` command line.

Exit codes: 0 when every asserted verdict passes (hypotheses-unmet does not
count as a failure), 1 when any verdict fails, 2 on usage errors, 3 when a
resource cap, numeric failure or input precondition stops the run.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import generate
from .ensembles import KINDS, EnsembleSpec, check_column_norm_factor, escalate_deviation, run_deviation_experiment
from .errors import (
    InvalidArgumentError,
    NumericFailureError,
    PreconditionError,
    ResourceLimitError,
    SamplerError,
)
from .hermitian import OperatorFamily, family_from_json
from .inequalities import (
    CheckVerdict,
    check_binomial_identity,
    check_d3_closed_form,
    check_d3_order,
    check_operator_cauchy_schwarz,
    check_norm_agm,
    check_norm_chain,
    check_order_agm,
    check_partition_norm_bound,
    check_pd_two_sided_bound,
)
from .partitions import (
    MAX_D,
    MobiusCache,
    SetPartition,
    enumerate_partitions,
    mobius,
    mobius_zero_to,
    refines_leq,
)
from .products import (
    full_sum_direct,
    full_sum_embedded,
    p_d_bruteforce,
    p_d_via_mobius,
    restricted_sum,
)
from .report import ExperimentReport, dumps, write_atomic
from .rng import replicate_stream

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ABORT = 0, 1, 2, 3

CAPS = {
    "n": 100_000,
    "m": 4096,
    "d": MAX_D,
    "trials": 1_000_000,
    "samples": 1_000_000,
    "ensemble_d": 256,
}

CHECKS = (
    "norm-agm",
    "binomial-identity",
    "order-agm",
    "d3-closed-form",
    "d3-order",
    "cauchy-schwarz",
    "norm-chain",
    "partition-norm-bound",
    "pd-two-sided",
)

RANDOM_KEYS = {"n": int, "d": int, "m": int, "seed": int, "trials": int, "scale": float, "diagonal": int}
RANDOM_DEFAULTS = {"n": 6, "d": 3, "m": 3, "seed": 0, "trials": 1, "scale": 1.0, "diagonal": 0}

ORACLE_TOL = 1e-10


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    params: dict
    out: Path | None = None
    csv: Path | None = None
    seed: int | None = None
    tol: float | None = None
    timing: bool = False
    caps: dict = field(default_factory=lambda: dict(CAPS))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ncagm", description="Operator AGM inequalities: products, checks, ensembles.")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("partitions", help="list partitions of {1..d} with mu(0, pi)")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("products", help="P_d or a full sum [sigma] by every available route")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--family", type=Path, help="family JSON file")
    src.add_argument("--random", nargs="+", metavar="KEY=VALUE", help="n= m= seed= scale= diagonal=")
    what = p.add_mutually_exclusive_group(required=True)
    what.add_argument("--d", type=int)
    what.add_argument("--sigma", help='partition such as "1,3|2"')
    p.add_argument("--out", type=Path)

    p = sub.add_parser("check", help="run one inequality checker")
    p.add_argument("name", choices=CHECKS)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--family", type=Path, help="family JSON file")
    src.add_argument("--random", nargs="+", metavar="KEY=VALUE", help="n= d= m= seed= trials= scale= diagonal=")
    p.add_argument("--d", type=int, help="product degree for --family input")
    p.add_argument("--sigma", help="partition for partition-norm-bound with --family")
    p.add_argument("--t", type=float, default=1.0, help="weight t for cauchy-schwarz with --family")
    p.add_argument("--tol", type=float)
    p.add_argument("--csv", type=Path, help="also write verdicts as CSV")
    p.add_argument("--out", type=Path)

    p = sub.add_parser("ensemble", help="Monte Carlo deviation or column-norm experiment")
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=float, default=4.0)
    p.add_argument("--dprod", type=int, default=2)
    p.add_argument("--samples", type=int, default=400)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--bootstrap", type=int, default=200)
    p.add_argument("--split", action="store_true", help="estimate E P_d on a separate half of the samples")
    p.add_argument("--escalate", action="store_true", help="double n (and m) until the gate holds")
    p.add_argument("--column-norm", action="store_true", help="run the factor-6 column-norm check instead")
    p.add_argument("--timing", action="store_true", help="record wall time (breaks byte-identical reports)")
    p.add_argument("--out", type=Path)
    return parser


def _parse_random(tokens: list[str]) -> dict:
    out = dict(RANDOM_DEFAULTS)
    for tok in tokens:
        key, sep, value = tok.partition("=")
        if not sep or key not in RANDOM_KEYS:
            raise UsageError(f"bad --random item {tok!r}; expected KEY=VALUE with KEY in {sorted(RANDOM_KEYS)}")
        try:
            out[key] = RANDOM_KEYS[key](value)
        except ValueError as exc:
            raise UsageError(f"bad value in {tok!r}") from exc
    return out


def _cap(name: str, value, caps: dict, key: str | None = None):
    limit = caps[key or name]
    if value is not None and value > limit:
        raise ResourceLimitError(f"{name}={value} exceeds the cap of {limit}")


def parse_args(argv: list[str]) -> RunConfig:
    """Validate ``argv`` into a :class:`RunConfig`; raises :class:`UsageError`."""
    ns = _build_parser().parse_args(argv)
    params = {k: v for k, v in vars(ns).items() if k not in ("subcommand", "out", "csv", "tol", "timing")}
    if params.get("random") is not None:
        params["random"] = _parse_random(params["random"])
    for key in ("d", "n", "m", "samples", "dprod", "bootstrap"):
        if params.get(key) is not None and params[key] < 1:
            raise UsageError(f"--{key} must be positive")
    seed = params.get("seed")
    if seed is None and params.get("random"):
        seed = params["random"]["seed"]
    if seed is not None and not 0 <= seed < 1 << 64:
        raise UsageError("seed must be a 64-bit unsigned integer")
    return RunConfig(
        subcommand=ns.subcommand,
        params=params,
        out=getattr(ns, "out", None),
        csv=getattr(ns, "csv", None),
        seed=seed,
        tol=getattr(ns, "tol", None),
        timing=bool(getattr(ns, "timing", False)),
    )


# -- subcommands ---------------------------------------------------------------


def _load_family(path: Path) -> OperatorFamily:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read family file {path}: {exc}") from exc
    return family_from_json(obj)


def _run_partitions(cfg: RunConfig, out) -> ExperimentReport:
    d = cfg.params["d"]
    _cap("d", d, cfg.caps)
    cache = MobiusCache(d)
    bottom = SetPartition.finest(d)
    rows = []
    out.write("rgs\tblocks\tmu\n")
    for pi in enumerate_partitions(d):
        mu = mobius(bottom, pi, cache)
        rows.append({"rgs": "".join(map(str, pi.rgs)), "blocks": str(pi), "mu": mu, "mu_product": mobius_zero_to(pi)})
        out.write(f"{rows[-1]['rgs']}\t{pi}\t{mu}\n")
    abs_sum = sum(abs(r["mu"]) for r in rows)
    out.write(f"# {len(rows)} partitions, sum |mu| = {abs_sum}\n")
    report = ExperimentReport("partitions", {"d": d}, None, results={"rows": rows, "abs_mu_sum": abs_sum})
    fact = math.factorial(d)
    agree = all(r["mu"] == r["mu_product"] for r in rows)
    report.verdicts.append(CheckVerdict("mobius-abs-sum", "pass" if abs_sum == fact else "fail",
                                        abs_sum, fact, fact - abs_sum, 0.0, 1.0, f"d={d}"))
    report.verdicts.append(CheckVerdict("mobius-product-formula", "pass" if agree else "fail",
                                        0.0, 0.0, 0.0, 0.0, 1.0, f"d={d}"))
    return report


def _random_family(rand: dict, kind: str, trial: int) -> OperatorFamily:
    rng = replicate_stream(rand["seed"], trial)
    n, m, d, scale, diag = rand["n"], rand["m"], rand["d"], rand["scale"], bool(rand["diagonal"])
    if kind == "psd":
        return generate.random_psd_family(rng, n, m, diagonal=diag)
    if kind == "constrained":
        return generate.constrained_family(rng, n, m, scale, diagonal=diag)
    if kind == "centered":
        return generate.centered_family(rng, n, m, scale, diagonal=diag)
    if kind == "normalized":
        return generate.normalized_psd_family(rng, n, m, diagonal=diag)
    if kind == "order":
        return generate.order_agm_family(rng, n, d, m, diagonal=diag)
    return generate.random_family(rng, n, m, diagonal=diag)


def _agreement(name, values: dict, digest: str, tol: float) -> CheckVerdict:
    ref_key = next(iter(values))
    ref = values[ref_key]
    scale = max(1.0, float(np.linalg.norm(ref)))
    worst = max(float(np.linalg.norm(v - ref)) for v in values.values())
    status = "pass" if worst <= tol * scale else "fail"
    return CheckVerdict(name, status, worst, 0.0, -worst, tol, scale, digest,
                        {"routes": list(values), "reference": ref_key})


def _matrix_rows(mat: np.ndarray) -> list:
    return [[{"re": float(z.real), "im": float(z.imag)} for z in row] for row in mat]


def _run_products(cfg: RunConfig, out) -> ExperimentReport:
    params = cfg.params
    if params["family"] is not None:
        fam = _load_family(params["family"])
    else:
        rand = params["random"]
        _cap("n", rand["n"], cfg.caps)
        _cap("m", rand["m"], cfg.caps)
        fam = _random_family(rand, "hermitian", 0)
    config = {"family": str(params["family"]) if params["family"] else None, "random": params["random"],
              "n": fam.n, "m": fam.m}
    if params["d"] is not None:
        d = params["d"]
        _cap("d", d, cfg.caps)
        config["d"] = d
        values = {"mobius": p_d_via_mobius(fam, d), "mobius-loop": p_d_via_mobius(fam, d, method="loop")}
        try:
            values["bruteforce"] = p_d_bruteforce(fam, d)
        except ResourceLimitError:
            pass
        name, target = "average-product", values["mobius"]
    else:
        sigma = SetPartition.parse(params["sigma"])
        _cap("d", sigma.d, cfg.caps)
        config["sigma"] = str(sigma)
        values = {"einsum": full_sum_direct(fam, sigma)}
        try:
            values["loop"] = full_sum_direct(fam, sigma, method="loop")
            values["restricted"] = sum(restricted_sum(fam, pi) for pi in enumerate_partitions(sigma.d)
                                       if refines_leq(sigma, pi))
        except ResourceLimitError:
            pass
        try:
            values["embedded"] = full_sum_embedded(fam, sigma)
        except ResourceLimitError:
            pass
        name, target = "full-sum", values["einsum"]
    verdict = _agreement(f"{name}-routes", values, fam.digest(), cfg.tol or ORACLE_TOL)
    out.write(dumps({"matrix": _matrix_rows(target), "routes": list(values), "residual": verdict.lhs}, None) + "\n")
    report = ExperimentReport("products", config, cfg.seed, results={"matrix": _matrix_rows(target)})
    report.verdicts.append(verdict)
    return report


def _check_one(name: str, fam: OperatorFamily | None, d: int, tol_kw: dict, extra: dict) -> CheckVerdict:
    if name == "norm-agm":
        return check_norm_agm(fam, d, **tol_kw)
    if name == "binomial-identity":
        return check_binomial_identity(fam, d, **tol_kw)
    if name == "order-agm":
        return check_order_agm(fam, d, **tol_kw)
    if name == "d3-closed-form":
        return check_d3_closed_form(fam, **tol_kw)
    if name == "d3-order":
        return check_d3_order(fam, **tol_kw)
    if name == "cauchy-schwarz":
        return check_operator_cauchy_schwarz(extra["a"], extra["b"], extra["t"], **tol_kw)
    if name == "norm-chain":
        return check_norm_chain(fam, **tol_kw)
    if name == "partition-norm-bound":
        return check_partition_norm_bound(fam, extra["sigma"], **tol_kw)
    return check_pd_two_sided_bound(fam, d, **tol_kw)


FAMILY_KIND = {
    "norm-agm": "psd",
    "binomial-identity": "constrained",
    "order-agm": "order",
    "d3-closed-form": "constrained",
    "d3-order": "normalized",
    "norm-chain": "constrained",
    "partition-norm-bound": "hermitian",
    "pd-two-sided": "centered",
}


def _check_inputs(cfg: RunConfig):
    """Yield ``(family, d, extra)`` per trial."""
    params, name = cfg.params, cfg.params["name"]
    if params["family"] is not None:
        fam = _load_family(params["family"])
        d = params["d"] if params["d"] is not None else min(3, fam.n)
        extra = {"t": params["t"]}
        if name == "cauchy-schwarz":
            if fam.n < 2:
                raise UsageError("cauchy-schwarz needs a family with at least two members (a, b)")
            extra.update(a=fam[0], b=fam[1])
        if name == "partition-norm-bound":
            sigmas = [SetPartition.parse(params["sigma"])] if params["sigma"] else enumerate_partitions(d)
            for sigma in sigmas:
                yield fam, sigma.d, {**extra, "sigma": sigma}
            return
        yield fam, d, extra
        return
    rand = params["random"]
    for key in ("n", "m", "d", "trials"):
        _cap(key, rand[key], cfg.caps)
    for trial in range(rand["trials"]):
        rng = replicate_stream(rand["seed"], trial)
        if name == "cauchy-schwarz":
            m = rand["m"]
            a, b = (rng.standard_normal((2, m, m)) + 1j * rng.standard_normal((2, m, m))) * rand["scale"]
            yield None, rand["d"], {"a": a, "b": b, "t": float(np.exp(rng.standard_normal()))}
            continue
        fam = _random_family(rand, FAMILY_KIND[name], trial)
        extra = {}
        if name == "partition-norm-bound":
            parts = enumerate_partitions(rand["d"])
            extra["sigma"] = parts[int(rng.integers(len(parts)))]
        yield fam, rand["d"], extra


def _verdict_row(v: CheckVerdict) -> dict:
    return {"name": v.name, "status": v.status, "lhs": v.lhs, "rhs": v.rhs, "margin": v.margin,
            "tol": v.tol, "scale": v.scale, "digest": v.digest}


def _write_csv(path: Path, verdicts: list[CheckVerdict]):
    buf = io.StringIO()
    fields = ["trial", "name", "status", "lhs", "rhs", "margin", "tol", "scale", "digest"]
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for i, v in enumerate(verdicts):
        writer.writerow({"trial": i, **_verdict_row(v)})
    write_atomic(path, buf.getvalue())


def _run_check(cfg: RunConfig, out) -> ExperimentReport:
    name = cfg.params["name"]
    tol_kw = {} if cfg.tol is None else {"tol": cfg.tol}
    verdicts = []
    for trial, (fam, d, extra) in enumerate(_check_inputs(cfg)):
        v = _check_one(name, fam, d, tol_kw, extra)
        verdicts.append(v)
        out.write(dumps({"trial": trial, **v.to_dict()}, None) + "\n")
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in cfg.params.items()}
    config["tol"] = cfg.tol
    report = ExperimentReport("check", config, cfg.seed, verdicts=verdicts)
    if cfg.csv is not None:
        _write_csv(cfg.csv, verdicts)
    return report


def _run_ensemble(cfg: RunConfig, out) -> ExperimentReport:
    p = cfg.params
    _cap("n", p["n"], cfg.caps)
    _cap("samples", p["samples"], cfg.caps)
    _cap("d", p["d"], cfg.caps, "ensemble_d")
    if p["m"] is not None:
        _cap("m", p["m"], cfg.caps)
    spec = EnsembleSpec(p["kind"], p["d"], p["n"], p["p"], p["samples"], p["seed"], m=p["m"])
    if p["column_norm"]:
        report = check_column_norm_factor(spec, B=p["bootstrap"])
    elif p["escalate"]:
        report = escalate_deviation(spec, p["dprod"], split=p["split"], B=p["bootstrap"])
    else:
        report = run_deviation_experiment(spec, p["dprod"], split=p["split"], B=p["bootstrap"])
    for v in report.verdicts:
        out.write(dumps(_verdict_row(v), None) + "\n")
    return report


RUNNERS = {
    "partitions": _run_partitions,
    "products": _run_products,
    "check": _run_check,
    "ensemble": _run_ensemble,
}


def run(cfg: RunConfig, out=None, err=None) -> int:
    """Execute ``cfg``; returns the exit code and writes the report when asked."""
    out = out or sys.stdout
    err = err or sys.stderr
    start = time.perf_counter()
    try:
        report = RUNNERS[cfg.subcommand](cfg, out)
    except UsageError as exc:
        err.write(f"ncagm: {exc}\n")
        return EXIT_USAGE
    except PreconditionError as exc:
        measured = ", ".join(f"{k}={v:.3e}" if isinstance(v, float) else f"{k}={v}" for k, v in exc.measured.items())
        err.write(f"ncagm: precondition failed: {exc}" + (f" ({measured})" if measured else "") + "\n")
        return EXIT_ABORT
    except (ResourceLimitError, NumericFailureError, SamplerError) as exc:
        err.write(f"ncagm: aborted: {exc}\n")
        return EXIT_ABORT
    except InvalidArgumentError as exc:
        err.write(f"ncagm: invalid argument: {exc}\n")
        return EXIT_USAGE
    if cfg.timing:
        report.timing = {"wall_seconds": time.perf_counter() - start}
    if cfg.out is not None:
        write_atomic(cfg.out, report.to_json())
    summary = report.summary
    err.write(f"ncagm: {summary['pass']} pass, {summary['fail']} fail, {summary['hypotheses-unmet']} hypotheses-unmet\n")
    return EXIT_FAIL if report.failed else EXIT_OK


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except ResourceLimitError as exc:
        sys.stderr.write(f"ncagm: aborted: {exc}\n")
        return EXIT_ABORT
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
