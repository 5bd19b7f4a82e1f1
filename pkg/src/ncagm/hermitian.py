"""Dense Hermitian matrix kernel.

Matrices are plain complex ``numpy`` arrays. :func:`as_hermitian` is the
constructor that enforces the Hermitian invariant; :class:`OperatorFamily`
stacks ``n`` such matrices of a common dimension into an ``(n, m, m)`` array.
The eigensolver is a cyclic complex Jacobi iteration.
"""
from __future__ import annotations

import hashlib
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgumentError, NumericFailureError

DEFAULT_TOL = 1e-9
MAX_SWEEPS = 100

# ``HermitianMatrix`` is a complex (m, m) ndarray produced by ``as_hermitian``.
HermitianMatrix = np.ndarray


def _square(a, name="matrix") -> np.ndarray:
    arr = np.asarray(a)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise InvalidArgumentError(f"{name} must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} has non-finite entries")
    return arr.astype(complex)


def as_hermitian(a) -> HermitianMatrix:
    """Return ``(A + A*) / 2`` as a complex array."""
    arr = _square(a)
    return 0.5 * (arr + arr.conj().T)


def hermitian_defect(a) -> float:
    """``max |A - A*|``, the raw distance from being Hermitian."""
    arr = np.asarray(a)
    return float(np.max(np.abs(arr - arr.conj().T))) if arr.size else 0.0


def is_hermitian(a, rtol: float = 1e-14) -> bool:
    arr = np.asarray(a)
    return hermitian_defect(arr) <= rtol * max(np.linalg.norm(arr), np.finfo(float).tiny)


def eig_hermitian(a, max_sweeps: int = MAX_SWEEPS) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Returns ``(w, V)`` with ``w`` ascending and ``A V = V diag(w)``.
    Each rotation first removes the phase of ``A[p, q]`` with a diagonal
    unitary, then applies the classical real rotation.
    """
    A = as_hermitian(a)
    m = A.shape[0]
    V = np.eye(m, dtype=complex)
    if m == 1:
        return A.real.diagonal().copy(), V

    frob = np.linalg.norm(A)
    if frob == 0.0:
        return np.zeros(m), V
    eps = np.finfo(float).eps
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diagonal(A)))
        if off <= eps * frob:
            break
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = A[p, q]
                mag = abs(apq)
                if mag <= eps * 1e-3 * frob:
                    A[p, q] = A[q, p] = 0.0
                    continue
                phase = apq / mag
                app, aqq = A[p, p].real, A[q, q].real
                zeta = (aqq - app) / (2.0 * mag)
                t = (1.0 if zeta >= 0 else -1.0) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # U = diag(1, conj(phase)) @ [[c, s], [-s, c]] on the (p, q) plane
                u_pp, u_pq = c, s
                u_qp, u_qq = -s * np.conj(phase), c * np.conj(phase)

                col_p = A[:, p].copy()
                col_q = A[:, q]
                A[:, p] = col_p * u_pp + col_q * u_qp
                A[:, q] = col_p * u_pq + col_q * u_qq
                row_p = A[p, :].copy()
                row_q = A[q, :]
                A[p, :] = np.conj(u_pp) * row_p + np.conj(u_qp) * row_q
                A[q, :] = np.conj(u_pq) * row_p + np.conj(u_qq) * row_q
                A[p, q] = A[q, p] = 0.0
                A[p, p] = A[p, p].real
                A[q, q] = A[q, q].real

                v_p = V[:, p].copy()
                v_q = V[:, q]
                V[:, p] = v_p * u_pp + v_q * u_qp
                V[:, q] = v_p * u_pq + v_q * u_qq
    else:
        raise NumericFailureError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")

    w = np.diagonal(A).real.copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def eigvalsh(a) -> np.ndarray:
    return eig_hermitian(a)[0]


def lambda_min(a) -> float:
    return float(eigvalsh(a)[0])


def lambda_max(a) -> float:
    return float(eigvalsh(a)[-1])


def op_norm(a) -> float:
    """Operator (spectral) norm.

    Hermitian input uses ``max |lambda|``; any other square matrix goes
    through ``sqrt(lambda_max(A* A))``.
    """
    arr = _square(a)
    if is_hermitian(arr):
        w = eigvalsh(arr)
        return float(max(abs(w[0]), abs(w[-1])))
    return float(np.sqrt(max(lambda_max(arr.conj().T @ arr), 0.0)))


def is_psd(a, tol: float = DEFAULT_TOL) -> bool:
    arr = as_hermitian(a)
    return lambda_min(arr) >= -tol * max(1.0, op_norm(arr))


def loewner_leq(a, b, tol: float = 0.0) -> bool:
    """``A <= B`` in the Loewner order, up to ``tol * max(1, |A|, |B|)``."""
    A, B = as_hermitian(a), as_hermitian(b)
    if A.shape != B.shape:
        raise InvalidArgumentError(f"dimension mismatch: {A.shape} vs {B.shape}")
    if tol < 0:
        raise InvalidArgumentError("tol must be nonnegative")
    scale = max(1.0, op_norm(A), op_norm(B))
    return lambda_min(B - A) >= -tol * scale


def sqrtm_psd(a, tol: float = DEFAULT_TOL) -> HermitianMatrix:
    """Square root of a PSD matrix; eigenvalues slightly below zero are clamped."""
    w, V = eig_hermitian(a)
    floor = -tol * max(1.0, float(np.max(np.abs(w))))
    if w[0] < floor:
        raise InvalidArgumentError(f"matrix is not PSD (lambda_min = {w[0]:.3e})")
    root = np.sqrt(np.clip(w, 0.0, None))
    return as_hermitian((V * root) @ V.conj().T)


class OperatorFamily:
    """``n`` Hermitian ``m x m`` matrices stored as an ``(n, m, m)`` stack."""

    def __init__(self, members: Iterable | np.ndarray):
        if isinstance(members, np.ndarray) and members.ndim == 3:
            stack = members.astype(complex)
        else:
            mats = [_square(x, name=f"member {i}") for i, x in enumerate(members)]
            if not mats:
                raise InvalidArgumentError("an operator family needs at least one member")
            dims = {x.shape[0] for x in mats}
            if len(dims) != 1:
                raise InvalidArgumentError(f"members have different dimensions: {sorted(dims)}")
            stack = np.stack(mats)
        if stack.shape[0] < 1 or stack.shape[1] != stack.shape[2]:
            raise InvalidArgumentError(f"bad family stack shape {stack.shape}")
        if not np.all(np.isfinite(stack)):
            raise InvalidArgumentError("family has non-finite entries")
        stack = 0.5 * (stack + np.conj(np.swapaxes(stack, 1, 2)))
        stack.setflags(write=False)
        self.stack = stack

    @property
    def n(self) -> int:
        return self.stack.shape[0]

    @property
    def m(self) -> int:
        return self.stack.shape[1]

    def __len__(self):
        return self.n

    def __getitem__(self, i):
        return self.stack[i]

    def __iter__(self):
        return iter(self.stack)

    def __repr__(self):
        return f"OperatorFamily(n={self.n}, m={self.m})"

    def total(self) -> np.ndarray:
        return self.stack.sum(axis=0)

    def mean(self) -> np.ndarray:
        return self.stack.mean(axis=0)

    def square_sum(self) -> np.ndarray:
        return np.einsum("nij,njk->ik", self.stack, self.stack)

    def shifted(self, c: float) -> "OperatorFamily":
        """The family ``x_i + c I``."""
        return OperatorFamily(self.stack + c * np.eye(self.m))

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.stack).tobytes()).hexdigest()[:16]


def sq_sum_norm(fam: OperatorFamily) -> float:
    """``|| (sum_i x_i^2)^{1/2} || = || sum_i x_i^2 ||^{1/2}``."""
    return float(np.sqrt(op_norm(as_hermitian(fam.square_sum()))))


# -- JSON --------------------------------------------------------------------


def matrix_to_json(a) -> dict:
    arr = np.asarray(a, dtype=complex)
    return {
        "m": int(arr.shape[0]),
        "re": [float(v) for v in arr.real.ravel()],
        "im": [float(v) for v in arr.imag.ravel()],
    }


def matrix_from_json(obj: dict, hermitize: bool = True) -> np.ndarray:
    """Inverse of :func:`matrix_to_json`; ``re``/``im`` may be flat or nested."""
    try:
        m = int(obj["m"])
        re = np.asarray(obj["re"], dtype=float).reshape(m, m)
        im = np.asarray(obj.get("im", np.zeros(m * m)), dtype=float).reshape(m, m)
    except (KeyError, ValueError, TypeError) as exc:
        raise InvalidArgumentError(f"malformed matrix JSON: {exc}") from exc
    arr = re + 1j * im
    return as_hermitian(arr) if hermitize else _square(arr)


def family_to_json(fam: OperatorFamily) -> dict:
    return {"n": fam.n, "m": fam.m, "members": [matrix_to_json(x) for x in fam]}


def family_from_json(obj) -> OperatorFamily:
    members = obj["members"] if isinstance(obj, dict) else obj
    if not isinstance(members, Sequence):
        raise InvalidArgumentError("family JSON must be a list of matrices or have 'members'")
    return OperatorFamily([matrix_from_json(x) for x in members])
