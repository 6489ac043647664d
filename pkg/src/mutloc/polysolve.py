"""Dense polynomial arithmetic, Sylvester resultants and real root extraction.

Coefficient arrays are always stored in ascending degree order. Univariate
polynomials are 1-D arrays, bivariate polynomials are 2-D arrays where
``c[i, j]`` multiplies ``x**i * y**j``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ZeroPolynomial

TRIM_RTOL = 1e-14
DEFLATE_RTOL = 1e-12
CLUSTER_RTOL = 1e-8
DEFAULT_IMAG_TOL = 1e-6


def _trim(c: np.ndarray, rtol: float) -> np.ndarray:
    c = np.atleast_1d(np.asarray(c, dtype=float))
    scale = np.max(np.abs(c)) if c.size else 0.0
    if scale == 0.0:
        return c[:1] * 0.0 if c.size else np.zeros(1)
    n = c.size
    while n > 1 and abs(c[n - 1]) <= rtol * scale:
        n -= 1
    return c[:n].copy()


@dataclass(frozen=True)
class UniPoly:
    """Univariate polynomial with a variable tag (``"s1"``, ``"s2"``, ``"s3"``)."""

    coeffs: np.ndarray
    var: str = "s1"

    def __post_init__(self):
        c = _trim(self.coeffs, TRIM_RTOL)
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite polynomial coefficient")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        if self.is_zero():
            return -1
        return self.coeffs.size - 1

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(x, self.coeffs)

    def derivative(self) -> "UniPoly":
        return UniPoly(np.polynomial.polynomial.polyder(self.coeffs), self.var)

    def norm_inf(self) -> float:
        return float(np.max(np.abs(self.coeffs)))


@dataclass(frozen=True)
class BiPoly:
    """Bivariate polynomial, ``coeffs[i, j]`` multiplies ``x**i * y**j``."""

    coeffs: np.ndarray
    vars: tuple = ("s1", "s3")

    def __post_init__(self):
        c = np.atleast_2d(np.array(self.coeffs, dtype=float))
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite polynomial coefficient")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def __call__(self, x, y):
        return np.polynomial.polynomial.polyval2d(x, y, self.coeffs)

    def degree_in(self, var: str) -> int:
        axis = self.vars.index(var)
        nz = np.nonzero(np.any(self.coeffs != 0.0, axis=1 - axis))[0]
        return int(nz[-1]) if nz.size else -1

    def in_second(self) -> list:
        """Coefficients of powers of the second variable, each a poly in the first."""
        return [self.coeffs[:, j].copy() for j in range(self.coeffs.shape[1])]

    def norm_inf(self) -> float:
        return float(np.max(np.abs(self.coeffs)))


@dataclass(frozen=True)
class RootSet:
    real_roots: np.ndarray
    tol: float
    degree: int

    def __len__(self):
        return len(self.real_roots)

    def __iter__(self):
        return iter(self.real_roots)


def _mul2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1] + b.shape[1] - 1))
    for (i, j), v in np.ndenumerate(a):
        if v != 0.0:
            out[i : i + b.shape[0], j : j + b.shape[1]] += v * b
    return out


def _add2(a: np.ndarray, b: np.ndarray, sign: float = 1.0) -> np.ndarray:
    out = np.zeros((max(a.shape[0], b.shape[0]), max(a.shape[1], b.shape[1])))
    out[: a.shape[0], : a.shape[1]] += a
    out[: b.shape[0], : b.shape[1]] += sign * b
    return out


def poly_det(M) -> np.ndarray:
    """Determinant of a square matrix whose entries are bivariate polynomials.

    Entries are 2-D coefficient arrays or ``None`` for structural zeros.
    Cofactor expansion along columns, memoized on the set of remaining rows,
    so an ``n x n`` matrix costs ``O(n 2^n)`` polynomial products.
    """
    n = len(M)
    memo = {}

    def minor(col: int, rows: tuple):
        if col == n:
            return np.ones((1, 1))
        if rows in memo:
            return memo[rows]
        total = None
        for k, r in enumerate(rows):
            entry = M[r][col]
            if entry is None:
                continue
            sub = minor(col + 1, rows[:k] + rows[k + 1 :])
            if sub is None:
                continue
            term = _mul2(entry, sub)
            if total is None:
                total = term if k % 2 == 0 else -term
            else:
                total = _add2(total, term, 1.0 if k % 2 == 0 else -1.0)
        memo[rows] = total
        return total

    det = minor(0, tuple(range(n)))
    return np.zeros((1, 1)) if det is None else det


def sylvester_matrix(f_desc, g_desc) -> list:
    """Sylvester matrix rows for coefficient lists in descending degree order.

    Entries are copied from the inputs, ``None`` stands for a zero entry.
    """
    m = len(f_desc) - 1
    n = len(g_desc) - 1
    size = m + n
    rows = []
    for i in range(n):
        row = [None] * size
        for k, c in enumerate(f_desc):
            row[i + k] = c
        rows.append(row)
    for i in range(m):
        row = [None] * size
        for k, c in enumerate(g_desc):
            row[i + k] = c
        rows.append(row)
    return rows


def _lift(c, axis: int) -> np.ndarray | None:
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if not np.any(c):
        return None
    return c.reshape(-1, 1) if axis == 0 else c.reshape(1, -1)


def resultant_quadratics(a, b) -> BiPoly:
    """Eliminate ``s2`` between two quadratics.

    ``a`` holds ascending coefficients ``[a0, a1, a2]`` of a quadratic in
    ``s2`` whose entries are polynomials in ``s1`` (ascending arrays or
    scalars); ``b`` does the same with entries polynomial in ``s3``. The
    returned polynomial in ``(s1, s3)`` is the 4x4 Sylvester determinant and
    vanishes exactly where the two quadratics share an ``s2`` root.
    """
    if len(a) != 3 or len(b) != 3:
        raise ValueError("expected three coefficients per quadratic")
    fa = [_lift(c, 0) for c in reversed(a)]
    fb = [_lift(c, 1) for c in reversed(b)]
    det = poly_det(sylvester_matrix(fa, fb))
    return BiPoly(det, ("s1", "s3"))


def resultant_quartic_quadratic(r, g) -> UniPoly:
    """Eliminate ``s3`` between a quartic and a quadratic, both with ``s1`` coefficients.

    ``r`` is ``[c0, c1, c2, c3, c4]`` and ``g`` is ``[d0, d1, d2]``, ascending
    in ``s3``; every entry is an ascending coefficient array in ``s1``. The
    result is the 6x6 Sylvester determinant as a polynomial in ``s1``.
    """
    r = list(r)
    if len(r) > 5:
        raise ValueError("r must have degree <= 4 in s3")
    r = r + [0.0] * (5 - len(r))
    if len(g) != 3 or not np.any(np.atleast_1d(g[2])):
        raise ValueError("g must have degree exactly 2 in s3")
    fr = [_lift(c, 0) for c in reversed(r)]
    fg = [_lift(c, 0) for c in reversed(g)]
    det = poly_det(sylvester_matrix(fr, fg))
    return UniPoly(det[:, 0], "s1")


def _companion_eigs(c: np.ndarray) -> np.ndarray:
    n = c.size - 1
    C = np.zeros((n, n))
    C[1:, :-1] = np.eye(n - 1)
    C[:, -1] = -c[:-1] / c[-1]
    # LAPACK geev balances the matrix before the QR iteration
    return np.linalg.eigvals(C)


def real_roots(p, imag_tol: float = DEFAULT_IMAG_TOL) -> RootSet:
    """All real roots of ``p`` via balanced companion-matrix eigenvalues.

    A complex eigenvalue whose imaginary part is at most
    ``imag_tol * max(1, |re|)`` is treated as real. Each accepted root gets one
    Newton step (kept only if it lowers ``|p|``) and roots closer than
    ``1e-8`` relative are merged.
    """
    coeffs = p.coeffs if isinstance(p, UniPoly) else np.asarray(p, dtype=float)
    coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
    if not np.any(coeffs):
        raise ZeroPolynomial("all coefficients vanish")
    c = _trim(coeffs, DEFLATE_RTOL)
    deg = c.size - 1
    if deg < 1:
        raise ValueError("polynomial must have degree >= 1")

    # exact zero roots are split off so the companion matrix stays regular
    nz = 0
    while c[nz] == 0.0:
        nz += 1
    eigs = _companion_eigs(c[nz:]) if c.size - nz > 1 else np.zeros(0, complex)

    cand = [0.0] * min(nz, 1)
    dc = np.polynomial.polynomial.polyder(c)
    pv = np.polynomial.polynomial.polyval
    for z in eigs:
        if abs(z.imag) > imag_tol * max(1.0, abs(z.real)):
            continue
        x = float(z.real)
        fx = pv(x, c)
        dfx = pv(x, dc)
        if dfx != 0.0 and np.isfinite(dfx):
            x1 = x - fx / dfx
            if np.isfinite(x1) and abs(pv(x1, c)) < abs(fx):
                x = x1
        cand.append(x)

    cand.sort()
    roots = []
    for x in cand:
        if roots and abs(x - roots[-1]) <= CLUSTER_RTOL * max(1.0, abs(x)):
            continue
        roots.append(x)
    return RootSet(np.array(roots, dtype=float), imag_tol, deg)
