"""Random operator families and Monte Carlo moment-norm experiments.

``|||X|||_q = (E ||X||^q)^{1/q}`` is estimated by the plug-in power mean over
replicates, with a nonparametric bootstrap standard error. Every replicate
draws from its own counter-based stream (see :mod:`ncagm.rng`), so results do
not depend on how many worker threads ran them; ``NCAGM_THREADS`` caps that
number.

One-sided comparisons ``lhs <= rhs`` pass when ``rhs - lhs >= -3 SE``, where
the SE is the bootstrap spread of ``rhs - lhs`` itself (both sides are
resampled with the same indices).
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Callable

import numpy as np

from .errors import InvalidArgumentError, NcagmError, SamplerError
from .hermitian import OperatorFamily, op_norm
from .inequalities import FAIL, PASS, UNMET, CheckVerdict
from .products import average_product
from .report import ExperimentReport
from .rng import bootstrap_stream, gaussians, replicate_stream, uniforms

KINDS = ("wishart", "logconcave-cube", "logconcave-ball", "degenerate")
MIN_ASSERTED_SAMPLES = 100
SE_ALLOWANCE = 3.0
MEAN_SIGMAS = 5.0
PSD_TOL = 1e-10
BOOTSTRAP = 200
MAX_THREADS = 64


@dataclass(frozen=True)
class EnsembleSpec:
    """One Monte Carlo configuration.

    ``d`` is the matrix dimension, ``n`` the family size and ``m`` the inner
    Wishart dimension (ignored otherwise). ``degenerate`` is the constant
    family ``x_i = I``, useful as a zero-variance control.
    """

    kind: str
    d: int
    n: int
    p: float
    samples: int
    seed: int
    m: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown ensemble kind {self.kind!r}; choose from {KINDS}")
        if self.d < 1 or self.n < 1:
            raise InvalidArgumentError(f"need d >= 1 and n >= 1, got d={self.d}, n={self.n}")
        if not self.p >= 2:
            raise InvalidArgumentError(f"moment order p must be >= 2, got {self.p}")
        if self.samples < 2:
            raise InvalidArgumentError(f"need at least 2 samples, got {self.samples}")
        if self.kind == "wishart" and (self.m is None or self.m < 1):
            raise InvalidArgumentError("wishart needs an inner dimension m >= 1")
        if self.kind != "wishart" and self.m is not None:
            object.__setattr__(self, "m", None)
        if not 0 <= self.seed < 1 << 64:
            raise InvalidArgumentError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MomentEstimate:
    estimate: float
    se: float
    N: int
    p: float
    B: int

    def to_dict(self) -> dict:
        return asdict(self)


# -- samplers ----------------------------------------------------------------


def _wishart_stack(spec: EnsembleSpec, replicate: int) -> np.ndarray:
    gen = replicate_stream(spec.seed, replicate)
    g = gaussians(gen, (spec.n, spec.d, spec.m)) / math.sqrt(spec.m)
    return g @ np.swapaxes(g, 1, 2)


def _isotropic_vectors(spec: EnsembleSpec, replicate: int) -> np.ndarray:
    gen = replicate_stream(spec.seed, replicate)
    if spec.kind == "logconcave-cube":
        return math.sqrt(3.0) * (2.0 * uniforms(gen, (spec.n, spec.d)) - 1.0)
    # uniform in the ball of radius sqrt(d + 2): direction times R * U^(1/d)
    z = gaussians(gen, (spec.n, spec.d))
    r = math.sqrt(spec.d + 2.0) * uniforms(gen, spec.n) ** (1.0 / spec.d)
    return z * (r / np.linalg.norm(z, axis=1))[:, None]


def _real_stack(spec: EnsembleSpec, replicate: int) -> np.ndarray:
    if spec.kind == "wishart":
        return _wishart_stack(spec, replicate)
    if spec.kind == "degenerate":
        return np.broadcast_to(np.eye(spec.d), (spec.n, spec.d, spec.d)).copy()
    y = _isotropic_vectors(spec, replicate)
    return y[:, :, None] * y[:, None, :]


def sample_wishart_family(spec: EnsembleSpec, replicate: int) -> OperatorFamily:
    """``x_i = G_i G_i^T`` with ``G_i`` a ``d x m`` Gaussian matrix over ``sqrt(m)``."""
    if spec.kind != "wishart":
        raise InvalidArgumentError(f"spec kind is {spec.kind!r}, not wishart")
    return OperatorFamily(_wishart_stack(spec, replicate))


def sample_logconcave_family(spec: EnsembleSpec, replicate: int) -> OperatorFamily:
    """Rank-one ``x_i = y_i y_i^T`` with ``y_i`` isotropic (identity covariance)."""
    if not spec.kind.startswith("logconcave"):
        raise InvalidArgumentError(f"spec kind is {spec.kind!r}, not a log-concave variant")
    y = _isotropic_vectors(spec, replicate)
    return OperatorFamily(y[:, :, None] * y[:, None, :])


def sample_family(spec: EnsembleSpec, replicate: int) -> OperatorFamily:
    return OperatorFamily(_real_stack(spec, replicate))


# -- moment norms --------------------------------------------------------------


def thread_count() -> int:
    raw = os.environ.get("NCAGM_THREADS", "1")
    try:
        count = int(raw)
    except ValueError as exc:
        raise InvalidArgumentError(f"NCAGM_THREADS must be an integer, got {raw!r}") from exc
    return max(1, min(count, MAX_THREADS))


def _map_replicates(fn: Callable[[int], object], count: int) -> list:
    """``[fn(0), ..., fn(count - 1)]``, optionally threaded; order is preserved."""

    def guarded(k):
        try:
            return fn(k)
        except NcagmError as exc:
            if isinstance(exc, SamplerError):
                raise
            raise SamplerError(f"replicate {k}: {exc}", k) from exc
        except Exception as exc:
            raise SamplerError(f"replicate {k}: {type(exc).__name__}: {exc}", k) from exc

    workers = thread_count()
    if workers == 1:
        return [guarded(k) for k in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(guarded, range(count)))


def power_mean(values: np.ndarray, q: float, axis=-1) -> np.ndarray:
    """``(mean v^q)^(1/q)`` for nonnegative ``v``, scaled by the max to avoid overflow."""
    v = np.asarray(values, dtype=float)
    top = np.max(v, axis=axis, keepdims=True)
    safe = np.where(top > 0, top, 1.0)
    out = safe * np.mean((v / safe) ** q, axis=axis, keepdims=True) ** (1.0 / q)
    out = np.where(top > 0, out, 0.0)
    return np.squeeze(out, axis=axis)


def bootstrap_indices(seed: int, N: int, B: int = BOOTSTRAP) -> np.ndarray:
    return bootstrap_stream(seed).integers(0, N, size=(B, N))


def moment_from_values(values, q: float, idx: np.ndarray) -> MomentEstimate:
    """Plug-in ``q``-th moment norm of precomputed norms with bootstrap SE."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size < 2:
        raise InvalidArgumentError("need a 1-D array of at least two norms")
    if np.any(v < 0):
        raise InvalidArgumentError("norms must be nonnegative")
    boots = power_mean(v[idx], q)
    se = float(np.std(boots, ddof=1)) if len(boots) > 1 else 0.0
    return MomentEstimate(float(power_mean(v, q)), se, int(v.size), float(q), int(idx.shape[0]))


def mc_moment_norm(
    sampler: Callable[[int], np.ndarray], p: float, N: int, seed: int, B: int = BOOTSTRAP
) -> MomentEstimate:
    """``(E ||X||^p)^{1/p}`` from ``N`` draws ``sampler(0..N-1)``."""
    if not p >= 1:
        raise InvalidArgumentError(f"p must be >= 1, got {p}")
    if N < 2:
        raise InvalidArgumentError(f"N must be >= 2, got {N}")
    norms = np.array(_map_replicates(lambda k: op_norm(sampler(k)), N))
    return moment_from_values(norms, p, bootstrap_indices(seed, N, B))


# -- per-replicate statistics ------------------------------------------------


def _replicate_stats(spec: EnsembleSpec, k: int, d_prod: int | None) -> dict:
    stack = _real_stack(spec, k)
    n, d = spec.n, spec.d
    eye = np.eye(d)
    fam = OperatorFamily(stack)
    sq = np.einsum("nij,njk->ik", stack, stack)
    centred = stack - eye
    sq_centred = np.einsum("nij,njk->ik", centred, centred)
    lam_min = np.linalg.eigvalsh(stack)[:, 0]
    norms = np.linalg.norm(stack, ord=2, axis=(1, 2))
    out = {
        "eps": op_norm(stack.mean(axis=0) - eye),
        "delta": math.sqrt(op_norm(sq)) / n,
        "sq_root": math.sqrt(op_norm(sq)),
        "sq_root_centred": math.sqrt(op_norm(sq_centred)),
        "entry_sum": stack.sum(axis=0),
        "entry_sq_sum": (stack**2).sum(axis=0),
        "trace": np.trace(stack, axis1=1, axis2=2),
        "psd_ratio": float(np.min(lam_min / np.maximum(norms, np.finfo(float).tiny))),
    }
    if d_prod is not None:
        out["pd"] = average_product(fam, d_prod)
    return out


def _collect(spec: EnsembleSpec, d_prod: int | None) -> list[dict]:
    return _map_replicates(lambda k: _replicate_stats(spec, k, d_prod), spec.samples)


def _gamma_from(stats: list[dict], p: float, idx: np.ndarray):
    eps_v = np.array([s["eps"] for s in stats])
    delta_v = np.array([s["delta"] for s in stats])
    eps = moment_from_values(eps_v, p, idx)
    delta = moment_from_values(delta_v, p, idx)
    boots = np.maximum(power_mean(eps_v[idx], p), 4.0 * power_mean(delta_v[idx], p))
    gamma = MomentEstimate(
        max(eps.estimate, 4.0 * delta.estimate), float(np.std(boots, ddof=1)), eps.N, p, eps.B
    )
    return eps, delta, gamma, boots


def estimate_gamma(spec: EnsembleSpec, B: int = BOOTSTRAP):
    """``(eps_p, delta_p, gamma_p)`` from one replicate stream.

    ``eps_p = |||mean(x) - I|||_p`` uses the exact mean ``E x_i = I``;
    ``delta_p = |||(sum x^2)^{1/2}|||_p / n``; ``gamma_p = max(eps_p, 4 delta_p)``
    is bootstrapped jointly with the other two.
    """
    stats = _collect(spec, None)
    idx = bootstrap_indices(spec.seed, spec.samples, B)
    eps, delta, gamma, _ = _gamma_from(stats, spec.p, idx)
    return eps, delta, gamma


# -- verdicts ----------------------------------------------------------------


def _mc_verdict(name, lhs, rhs, margin_boots, digest, asserted=True, **details) -> CheckVerdict:
    se = float(np.std(margin_boots, ddof=1))
    allowance = SE_ALLOWANCE * se
    margin = rhs - lhs
    if not asserted:
        status = UNMET
    else:
        status = PASS if margin >= -allowance else FAIL
    return CheckVerdict(
        name, status, float(lhs), float(rhs), float(margin), SE_ALLOWANCE, se, digest,
        {"se_margin": se, "allowance": allowance, **details},
    )


def _spec_digest(spec: EnsembleSpec) -> str:
    import hashlib

    text = repr(sorted(spec.to_dict().items()))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _sample_checks(spec: EnsembleSpec, stats: list[dict], digest: str) -> tuple[list, dict]:
    """Sample mean of ``x_i`` near ``I`` entrywise, and ``E tr x_i = d``."""
    total = spec.n * spec.samples
    s1 = sum(s["entry_sum"] for s in stats)
    s2 = sum(s["entry_sq_sum"] for s in stats)
    mean = s1 / total
    std = np.sqrt(np.maximum(s2 / total - mean**2, 0.0) * total / (total - 1))
    dev = np.abs(mean - np.eye(spec.d))
    limit = MEAN_SIGMAS * std / math.sqrt(total)
    # exact zero-variance entries (degenerate kind) must match exactly
    worst = float(np.max(np.where(limit > 0, dev / np.where(limit > 0, limit, 1.0), np.where(dev > 0, np.inf, 0.0))))
    mean_verdict = CheckVerdict(
        "sample-mean", PASS if worst <= 1.0 else FAIL, worst, 1.0, 1.0 - worst, MEAN_SIGMAS, 1.0, digest,
        {"max_abs_deviation": float(np.max(dev)), "sigmas": MEAN_SIGMAS, "observations": total},
    )
    traces = np.concatenate([s["trace"] for s in stats])
    t_mean = float(np.mean(traces))
    t_se = float(np.std(traces, ddof=1) / math.sqrt(traces.size))
    t_gap = abs(t_mean - spec.d)
    t_limit = MEAN_SIGMAS * t_se
    trace_verdict = CheckVerdict(
        "trace-mean", PASS if t_gap <= t_limit else FAIL, t_mean, float(spec.d), t_limit - t_gap,
        MEAN_SIGMAS, 1.0, digest, {"se": t_se, "sigmas": MEAN_SIGMAS},
    )
    psd = min(s["psd_ratio"] for s in stats)
    psd_verdict = CheckVerdict(
        "samples-psd", PASS if psd >= -PSD_TOL else FAIL, -psd, PSD_TOL, psd + PSD_TOL, PSD_TOL, 1.0, digest,
        {"min_lambda_over_norm": psd},
    )
    results = {
        "sample_mean": mean,
        "sample_mean_max_deviation": float(np.max(dev)),
        "trace_mean": t_mean,
        "trace_mean_se": t_se,
        "min_lambda_over_norm": psd,
    }
    return [mean_verdict, trace_verdict, psd_verdict], results


def _shape_diagnostics(spec: EnsembleSpec, eps: MomentEstimate, delta: MomentEstimate, gamma: MomentEstimate) -> dict:
    """Observed values over bound shapes evaluated with unit constants (not asserted)."""
    n, d, p = spec.n, spec.d, spec.p
    if spec.kind == "wishart":
        m = spec.m
        square_shape = ((math.sqrt(d) + math.sqrt(m)) / math.sqrt(m)) ** 2 * p / math.sqrt(n)
        log_d = math.log(d) if d > 1 else 0.0
        if p <= log_d <= n:
            mean_shape = log_d * math.sqrt(log_d / n)
            case = "q <= ln d <= n"
        else:
            mean_shape = d ** (1.0 / p) * p * max(math.sqrt(p / n), p / n)
            case = "q >= ln d"
        return {
            "delta_over_square_sum_shape": delta.estimate / square_shape,
            "square_sum_shape": square_shape,
            "eps_over_mean_deviation_shape": eps.estimate / mean_shape if mean_shape > 0 else None,
            "mean_deviation_shape": mean_shape,
            "mean_deviation_case": case,
        }
    if spec.kind.startswith("logconcave"):
        shape = math.sqrt(p) * math.sqrt(d / n) + p**2.5 * d / n
        return {
            "gamma_over_shape": gamma.estimate / shape,
            "gamma_shape": shape,
            "shape_case_p_ge_ln_n": bool(p >= math.log(n)),
        }
    return {}


def _base_report(kind: str, spec: EnsembleSpec, **extra) -> ExperimentReport:
    return ExperimentReport(kind=kind, config={"ensemble": spec.to_dict(), **extra}, seed=spec.seed)


def run_deviation_experiment(
    spec: EnsembleSpec, d_prod: int, split: bool = False, B: int = BOOTSTRAP
) -> ExperimentReport:
    """Deviation ``|||P_d - E P_d|||_{p/d} <= 3 d gamma_p`` and ``|||P_d|||_{p/d} <= 1 + 3 d gamma_p``.

    Both are asserted only when ``3 d gamma_p <= 1`` (estimated) and at least
    ``MIN_ASSERTED_SAMPLES`` replicates were drawn; otherwise they are reported
    as hypotheses-unmet. ``E P_d`` is the replicate mean; with ``split`` the
    first half of the replicates estimates it and the second half is used for
    every moment estimate.
    """
    if not 1 <= d_prod <= spec.n:
        raise InvalidArgumentError(f"need 1 <= d_prod <= n, got d_prod={d_prod}, n={spec.n}")
    if split and spec.samples < 4:
        raise InvalidArgumentError("split mode needs at least 4 samples")
    digest = _spec_digest(spec)
    stats = _collect(spec, d_prod)
    report = _base_report("deviation", spec, d_prod=d_prod, split=split, bootstrap=B)

    checks, sample_results = _sample_checks(spec, stats, digest)
    if split:
        half = spec.samples // 2
        mean_part, used = stats[:half], stats[half:]
        report.notes.append("E P_d estimated on the first half of the replicates, moments on the second half")
    else:
        mean_part = used = stats
        report.notes.append("E P_d estimated by the replicate mean of the same samples (plug-in bias accepted)")
    if spec.kind == "wishart" and spec.m < spec.n:
        report.notes.append("m < n: outside the m >= n regime assumed for Wishart families")
    N = len(used)
    idx = bootstrap_indices(spec.seed, N, B)
    eps, delta, gamma, gamma_boots = _gamma_from(used, spec.p, idx)

    q = spec.p / d_prod
    pds = np.stack([s["pd"] for s in used])
    expected = np.mean(np.stack([s["pd"] for s in mean_part]), axis=0)
    dev_norms = np.array([op_norm(P - expected) for P in pds])
    pd_norms = np.array([op_norm(P) for P in pds])
    dev = moment_from_values(dev_norms, q, idx)
    agm = moment_from_values(pd_norms, q, idx)

    bound = 3.0 * d_prod * gamma.estimate
    bound_boots = 3.0 * d_prod * gamma_boots
    gated = bound <= 1.0
    enough = N >= MIN_ASSERTED_SAMPLES
    asserted = gated and enough
    why = {}
    if not gated:
        why["reason"] = "3 d gamma_p > 1"
    elif not enough:
        why["reason"] = f"fewer than {MIN_ASSERTED_SAMPLES} samples"
    report.verdicts.append(_mc_verdict(
        "deviation", dev.estimate, bound, bound_boots - power_mean(dev_norms[idx], q), digest,
        asserted=asserted, q=q, gate=bound, **why,
    ))
    report.verdicts.append(_mc_verdict(
        "agm-up-to-eps", agm.estimate, 1.0 + bound, bound_boots - power_mean(pd_norms[idx], q), digest,
        asserted=asserted, q=q, gate=bound, **why,
    ))
    report.verdicts.extend(checks)
    report.results = {
        "gate": {"value": bound, "holds": gated},
        "epsilon_p": eps.to_dict(),
        "delta_p": delta.to_dict(),
        "gamma_p": gamma.to_dict(),
        "deviation": dev.to_dict(),
        "pd_moment": agm.to_dict(),
        "expected_pd": expected,
        "samples": sample_results,
        "shape_ratios": _shape_diagnostics(spec, eps, delta, gamma),
    }
    return report


def escalate_deviation(
    spec: EnsembleSpec, d_prod: int, split: bool = False, B: int = BOOTSTRAP, max_steps: int = 8
) -> ExperimentReport:
    """Run the deviation experiment, doubling ``n`` until the gate holds.

    For Wishart ``m`` is kept at least ``n`` (doubled alongside it). The
    returned report is the first gated rung; earlier rungs are summarised
    under ``results["ladder"]``.
    """
    ladder = []
    current = spec
    for _ in range(max_steps + 1):
        report = run_deviation_experiment(current, d_prod, split=split, B=B)
        gate = report.results["gate"]
        ladder.append({"n": current.n, "m": current.m, "gate": gate["value"], "holds": gate["holds"]})
        if gate["holds"]:
            break
        m = None if current.m is None else max(2 * current.m, 2 * current.n)
        current = replace(current, n=2 * current.n, m=m)
    report.results["ladder"] = ladder
    report.config["requested"] = spec.to_dict()
    return report


def check_column_norm_factor(spec: EnsembleSpec, B: int = BOOTSTRAP) -> ExperimentReport:
    """``|||(sum (x_i - 1)^2)^{1/2}|||_p <= 6 |||(sum x_i^2)^{1/2}|||_p`` by Monte Carlo.

    The constant family ``x_i = 0`` violates the inequality (left side
    ``sqrt(n)``, right side 0); it is recorded as a boundary case, not asserted.
    """
    digest = _spec_digest(spec)
    stats = _collect(spec, None)
    idx = bootstrap_indices(spec.seed, spec.samples, B)
    lhs_v = np.array([s["sq_root_centred"] for s in stats])
    rhs_v = np.array([s["sq_root"] for s in stats])
    lhs = moment_from_values(lhs_v, spec.p, idx)
    rhs = moment_from_values(rhs_v, spec.p, idx)
    boots = 6.0 * power_mean(rhs_v[idx], spec.p) - power_mean(lhs_v[idx], spec.p)
    enough = spec.samples >= MIN_ASSERTED_SAMPLES
    report = _base_report("column-norm", spec, bootstrap=B)
    report.verdicts.append(_mc_verdict(
        "column-norm-factor-6", lhs.estimate, 6.0 * rhs.estimate, boots, digest, asserted=enough,
        **({} if enough else {"reason": f"fewer than {MIN_ASSERTED_SAMPLES} samples"}),
    ))
    report.results = {
        "lhs": lhs.to_dict(),
        "rhs": rhs.to_dict(),
        "ratio": lhs.estimate / rhs.estimate if rhs.estimate > 0 else None,
        "boundary_case_zero_family": {"lhs": math.sqrt(spec.n), "rhs": 0.0, "asserted": False},
    }
    report.notes.append("x_i = 0 gives lhs sqrt(n) > rhs 0; the inequality is only checked on the ensembles")
    return report
