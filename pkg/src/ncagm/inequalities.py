"""Deterministic checkers for the operator AGM inequalities and identities.

Each checker returns a :class:`CheckVerdict`. Norm comparisons pass when
``margin >= -tol * scale`` with ``margin = rhs - lhs``; order comparisons use
``margin = lambda_min(rhs - lhs)``. Checkers whose inequality is conditional
return ``status="hypotheses-unmet"`` instead of asserting anything when the
measured hypotheses fail. Input violations of a plain precondition raise
:class:`~ncagm.errors.PreconditionError`.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .errors import InvalidArgumentError, PreconditionError
from .hermitian import (
    DEFAULT_TOL,
    OperatorFamily,
    as_hermitian,
    lambda_max,
    lambda_min,
    op_norm,
    sq_sum_norm,
)
from .partitions import SetPartition
from .products import average_product, falling_factorial, full_sum_direct

CONSTRAINT_TOL = 1e-10

PASS, FAIL, UNMET = "pass", "fail", "hypotheses-unmet"


@dataclass
class CheckVerdict:
    name: str
    status: str
    lhs: float | None
    rhs: float | None
    margin: float | None
    tol: float
    scale: float
    digest: str
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_dict(self) -> dict:
        return asdict(self)


def _verdict(name, lhs, rhs, margin, tol, scale, digest, **details) -> CheckVerdict:
    status = PASS if margin >= -tol * scale else FAIL
    return CheckVerdict(name, status, float(lhs), float(rhs), float(margin), tol, float(scale), digest, details)


def _unmet(name, tol, digest, reason, **measured) -> CheckVerdict:
    return CheckVerdict(name, UNMET, None, None, None, tol, 1.0, digest, {"reason": reason, **measured})


def constant_C(n: int, d: int) -> Fraction:
    """``C(n, d) = d! n^d (n - d)! / n!`` as an exact rational."""
    if not 1 <= d <= n:
        raise InvalidArgumentError(f"need 1 <= d <= n, got d={d}, n={n}")
    return Fraction(math.factorial(d) * n**d, falling_factorial(n, d))


def _constraint_defect(fam: OperatorFamily) -> float:
    return op_norm(as_hermitian(fam.total() - fam.n * np.eye(fam.m)))


def _require_constraint(fam: OperatorFamily, name: str, constraint_tol: float) -> float:
    defect = _constraint_defect(fam)
    if defect > constraint_tol * fam.n:
        raise PreconditionError(
            f"{name}: sum of members differs from n*I by {defect:.3e}", constraint_defect=defect
        )
    return defect


def check_norm_agm(fam: OperatorFamily, d: int, tol: float = DEFAULT_TOL) -> CheckVerdict:
    """``||P_d||^{1/d} <= d ||P_1||`` for PSD members.

    The details carry the sharper ``||P_d|| <= C(n, d) ||P_1||^d`` and the
    ``d! ||sum x||^d`` bound on the injective sum, with their margins.
    """
    for i, x in enumerate(fam):
        lo = lambda_min(x)
        if lo < -tol * max(1.0, op_norm(x)):
            raise PreconditionError(f"norm-agm: member {i} is not PSD (lambda_min={lo:.3e})", index=i)
    pd = average_product(fam, d)
    pd_norm = op_norm(pd)
    p1_norm = op_norm(fam.mean())
    lhs = pd_norm ** (1.0 / d)
    rhs = d * p1_norm
    sharp = float(constant_C(fam.n, d)) * p1_norm**d
    dfact = math.factorial(d) * op_norm(fam.total()) ** d
    injective = pd_norm * falling_factorial(fam.n, d)
    return _verdict(
        "norm-agm", lhs, rhs, rhs - lhs, tol, max(1.0, rhs), fam.digest(),
        d=d, n=fam.n, pd_norm=pd_norm, p1_norm=p1_norm,
        sharp_bound=sharp, sharp_margin=sharp - pd_norm,
        sharp_pass=bool(sharp - pd_norm >= -tol * max(1.0, sharp)),
        injective_sum_norm=injective, dfact_bound=dfact,
    )


def check_binomial_identity(
    fam: OperatorFamily, d: int, tol: float = DEFAULT_TOL, constraint_tol: float = CONSTRAINT_TOL
) -> CheckVerdict:
    """``P_d(x) = 1 + sum_k binom(d, k) P_k(a)`` with ``a_i = x_i - 1``."""
    defect = _require_constraint(fam, "binomial-identity", constraint_tol)
    lhs_mat = average_product(fam, d)
    a = fam.shifted(-1.0)
    rhs_mat = np.eye(fam.m, dtype=complex)
    for k in range(1, d + 1):
        rhs_mat = rhs_mat + math.comb(d, k) * average_product(a, k)
    residual = float(np.linalg.norm(lhs_mat - rhs_mat))
    scale = max(1.0, float(np.linalg.norm(lhs_mat)), float(np.linalg.norm(rhs_mat)))
    return _verdict(
        "binomial-identity", residual, 0.0, -residual, tol, scale, fam.digest(),
        d=d, constraint_defect=defect,
    )


def check_order_agm(
    fam: OperatorFamily, d: int, tol: float = DEFAULT_TOL, constraint_tol: float = CONSTRAINT_TOL
) -> CheckVerdict:
    """``P_d(x) <= 1`` given ``P_1 = 1`` and ``||(sum x^2)^{1/2}|| <= n / (3d)``."""
    n = fam.n
    defect = _constraint_defect(fam)
    s = sq_sum_norm(fam)
    limit = n / (3.0 * d)
    if defect > constraint_tol * n or s > limit or d > n:
        return _unmet(
            "order-agm", tol, fam.digest(), "P_1 = 1 and ||(sum x^2)^(1/2)|| <= n/(3d) required",
            d=d, n=n, constraint_defect=defect, sq_sum_norm=s, sq_sum_limit=limit,
        )
    pd = average_product(fam, d)
    top = lambda_max(pd)
    return _verdict(
        "order-agm", top, 1.0, 1.0 - top, tol, max(1.0, op_norm(pd)), fam.digest(),
        d=d, n=n, sq_sum_norm=s, sq_sum_limit=limit, constraint_defect=defect,
    )


def d3_closed_form(fam: OperatorFamily) -> np.ndarray:
    """``1 - 3/(n(n-1)) sum a^2 + 2/(n(n-1)(n-2)) sum a^3`` with ``a_i = x_i - 1``."""
    n = fam.n
    a = fam.shifted(-1.0).stack
    sq = np.einsum("nij,njk->ik", a, a)
    cube = np.einsum("nij,njk,nkl->il", a, a, a)
    return np.eye(fam.m) - 3.0 / (n * (n - 1)) * sq + 2.0 / (n * (n - 1) * (n - 2)) * cube


def check_d3_closed_form(
    fam: OperatorFamily, tol: float = 1e-10, constraint_tol: float = CONSTRAINT_TOL
) -> CheckVerdict:
    """Matrix identity between ``P_3(x)`` and its closed form when ``sum a_i = 0``."""
    defect = _constraint_defect(fam)
    if defect > constraint_tol * fam.n or fam.n < 3:
        return _unmet("d3-closed-form", tol, fam.digest(), "sum x_i = n I and n >= 3 required",
                      n=fam.n, constraint_defect=defect)
    p3 = average_product(fam, 3)
    closed = d3_closed_form(fam)
    residual = float(np.linalg.norm(p3 - closed))
    scale = max(1.0, float(np.linalg.norm(p3)))
    return _verdict("d3-closed-form", residual, 0.0, -residual, tol, scale, fam.digest(),
                    n=fam.n, constraint_defect=defect)


def check_d3_order(
    fam: OperatorFamily, tol: float = DEFAULT_TOL, constraint_tol: float = CONSTRAINT_TOL
) -> CheckVerdict:
    """``P_3(x) <= 1`` for ``n >= 6``, ``sum x_i = n`` and ``max ||x_i - 1|| <= n``.

    The last condition is the one the closed-form argument relies on; it holds
    automatically for PSD members.
    """
    n = fam.n
    defect = _constraint_defect(fam)
    a_max = max(op_norm(x) for x in fam.shifted(-1.0))
    if n < 6 or defect > constraint_tol * n or a_max > n:
        return _unmet("d3-order", tol, fam.digest(), "n >= 6, sum x_i = n I, max ||a_i|| <= n required",
                      n=n, constraint_defect=defect, max_a_norm=a_max)
    p3 = average_product(fam, 3)
    top = lambda_max(p3)
    return _verdict("d3-order", top, 1.0, 1.0 - top, tol, max(1.0, op_norm(p3)), fam.digest(),
                    n=n, max_a_norm=a_max)


def check_operator_cauchy_schwarz(a, b, t: float, tol: float = DEFAULT_TOL) -> CheckVerdict:
    """Operator Cauchy-Schwarz bounds for arbitrary square ``a``, ``b``.

    (1) ``-(a*a + b*b) <= a*b + b*a <= a*a + b*b``
    (2) ``ab + b*a* <= t^2 aa* + t^-2 b*b``
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgumentError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if not t > 0:
        raise InvalidArgumentError("t must be positive")
    ah, bh = a.conj().T, b.conj().T
    bound1 = as_hermitian(ah @ a + bh @ b)
    mid1 = as_hermitian(ah @ b + bh @ a)
    bound2 = as_hermitian(t * t * a @ ah + bh @ b / (t * t))
    mid2 = as_hermitian(a @ b + bh @ ah)
    upper1 = lambda_min(bound1 - mid1)
    lower1 = lambda_min(bound1 + mid1)
    part2 = lambda_min(bound2 - mid2)
    scale = max(1.0, op_norm(bound1), op_norm(bound2))
    digest = OperatorFamily([as_hermitian(a), as_hermitian(b)]).digest()
    return _verdict("cauchy-schwarz", op_norm(mid1), op_norm(bound1), min(upper1, lower1, part2), tol, scale,
                    digest, t=t, upper_margin=upper1, lower_margin=lower1, part2_margin=part2)


def check_norm_chain(
    fam: OperatorFamily, tol: float = DEFAULT_TOL, constraint_tol: float = CONSTRAINT_TOL
) -> CheckVerdict:
    """``max_i ||a_i|| <= ||sum a_i^2||^{1/2} <= ||sum x_i^2||^{1/2}``."""
    defect = _require_constraint(fam, "norm-chain", constraint_tol)
    a = fam.shifted(-1.0)
    first = max(op_norm(x) for x in a)
    middle = sq_sum_norm(a)
    last = sq_sum_norm(fam)
    margin = min(middle - first, last - middle)
    return _verdict("norm-chain", first, last, margin, tol, max(1.0, last), fam.digest(),
                    max_a_norm=first, a_sq_sum_norm=middle, x_sq_sum_norm=last,
                    constraint_defect=defect)


def check_partition_norm_bound(fam: OperatorFamily, sigma: SetPartition, tol: float = DEFAULT_TOL) -> CheckVerdict:
    """``||[sigma]|| <= ||sum x||^{#singletons} ||sum x^2||^{(d - #singletons)/2}``."""
    full = full_sum_direct(fam, sigma)
    lhs = op_norm(full)
    s = len(sigma.singletons)
    rhs = op_norm(fam.total()) ** s * sq_sum_norm(fam) ** (sigma.d - s)
    return _verdict("partition-norm-bound", lhs, rhs, rhs - lhs, tol, max(1.0, rhs), fam.digest(),
                    sigma=str(sigma), singletons=s)


def check_pd_two_sided_bound(
    fam: OperatorFamily, d: int, tol: float = DEFAULT_TOL, constraint_tol: float = CONSTRAINT_TOL
) -> CheckVerdict:
    """``-B <= P_d(a) <= B`` with ``B = (n-d)!/n! d! S^{d-2} sum a_i^2``.

    ``fam`` holds the centred ``a_i``; ``S = ||sum (a_i + 1)^2||^{1/2}``.
    """
    n = fam.n
    centre = op_norm(as_hermitian(fam.total()))
    if centre > constraint_tol * n or d > n or d < 2:
        return _unmet("pd-two-sided", tol, fam.digest(), "sum a_i = 0 and 2 <= d <= n required",
                      n=n, d=d, centre_defect=centre)
    S = sq_sum_norm(fam.shifted(1.0))
    coeff = math.factorial(d) / falling_factorial(n, d)
    bound = coeff * S ** (d - 2) * as_hermitian(fam.square_sum())
    pd = average_product(fam, d)
    upper = lambda_min(bound - pd)
    lower = lambda_min(bound + pd)
    scale = max(1.0, op_norm(bound), op_norm(pd))
    return _verdict("pd-two-sided", op_norm(pd), op_norm(bound), min(upper, lower), tol, scale,
                    fam.digest(), d=d, n=n, S=S, upper_margin=upper, lower_margin=lower)
