"""Scalar kernels, quadrature, dense linear algebra and real-axis root scanning.

Everything here is model-agnostic. The fundamental pair ``(c, s)`` solves
``-u'' = z u`` with ``c(0) = 1, c'(0) = 0`` and ``s(0) = 0, s'(0) = 1``; all
per-edge solutions of the metric graph backend are expressed in that basis.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import ConfigurationError, ContractError, SingularSystem

# |z| x^2 below this uses the even power series
SERIES_THRESHOLD = 0.25
_SERIES_TERMS = 20

# reciprocal condition number below which a dense system counts as singular
RCOND_SINGULAR = 1e-13

# relative singular-value cutoff used for numerical nullity
NULLITY_RTOL = 1e-8


def exclusion_radius(z) -> float:
    """Default radius of the exclusion ball around a spectral point."""
    return 1e-6 * (1.0 + abs(z))


@dataclass(frozen=True)
class SpectralPoint:
    """A spectral parameter together with its position relative to the Dirichlet spectrum."""

    z: complex
    classification: str = "generic"  # generic | near-dirichlet-spectrum | excluded
    distance: float = math.inf

    def __post_init__(self):
        if self.classification not in ("generic", "near-dirichlet-spectrum", "excluded"):
            raise ContractError(f"unknown classification {self.classification!r}")

    @property
    def is_generic(self) -> bool:
        return self.classification == "generic"


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    order: int
    a: float = 0.0
    b: float = 1.0

    def integrate(self, values) -> complex:
        """Weighted sum of ``values`` sampled at ``nodes`` (last axis)."""
        return np.tensordot(np.asarray(values), self.weights, axes=([-1], [0]))

    def apply(self, func: Callable[[np.ndarray], np.ndarray]):
        return self.integrate(func(self.nodes))


@dataclass(frozen=True)
class RootBracket:
    """Real interval ``[a, b]`` with the scanned function's values at both ends."""

    a: float
    b: float
    fa: float
    fb: float
    exclusions: tuple = ()

    def __post_init__(self):
        if not self.a < self.b:
            raise ContractError(f"bracket requires a < b, got [{self.a}, {self.b}]")
        for c, r in self.exclusions:
            if self.a < c < self.b:
                raise ContractError(f"excluded point {c} inside bracket [{self.a}, {self.b}]")

    @property
    def has_sign_change(self) -> bool:
        return np.sign(self.fa) * np.sign(self.fb) < 0


@dataclass(frozen=True)
class Root:
    z: float
    multiplicity: int = 1
    bracket: Optional[tuple] = field(default=None, compare=False)


# --------------------------------------------------------------------------
# fundamental solutions


def fundamental_pair(z, x):
    """Return ``(c, s, c', s')`` of ``-u'' = z u`` evaluated at ``x``.

    ``c = cos(sqrt(z) x)`` and ``s = sin(sqrt(z) x) / sqrt(z)`` are even in
    ``sqrt(z)``, so no branch choice leaks into the result. For small
    ``|z| x**2`` an even power series in ``z x**2`` is used, which also
    removes the removable singularity of ``s`` at ``z = 0``.

    Parameters
    ----------
    z : complex
        Spectral parameter.
    x : float or array_like
        Arclength(s), finite.

    Returns
    -------
    c, s, dc, ds : complex ndarrays with the shape of ``x``
    """
    z = complex(z)
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)

    c = np.empty(x.shape, dtype=complex)
    s = np.empty(x.shape, dtype=complex)

    u = -z * x * x
    small = np.abs(u) < SERIES_THRESHOLD
    if np.any(small):
        us = u[small]
        tc = np.ones_like(us)
        ts = np.ones_like(us)
        sc = tc.copy()
        ss = ts.copy()
        for n in range(_SERIES_TERMS):
            tc = tc * us / ((2 * n + 1) * (2 * n + 2))
            ts = ts * us / ((2 * n + 2) * (2 * n + 3))
            sc = sc + tc
            ss = ss + ts
        c[small] = sc
        s[small] = x[small] * ss
    big = ~small
    if np.any(big):
        k = np.lib.scimath.sqrt(z)
        k = complex(k)
        kx = k * x[big]
        c[big] = np.cos(kx)
        s[big] = np.sin(kx) / k
    dc = -z * s
    ds = c.copy()
    if scalar:
        return c[0], s[0], dc[0], ds[0]
    return c, s, dc, ds


def transfer_matrix(z, length) -> np.ndarray:
    """Exact 2x2 map ``(u, u')(0) -> (u, u')(length)`` for ``-u'' = z u``."""
    c, s, dc, ds = fundamental_pair(z, length)
    return np.array([[c, s], [dc, ds]], dtype=complex)


# --------------------------------------------------------------------------
# quadrature


def gauss_rule(order: int, a: float, b: float) -> QuadratureRule:
    """Gauss-Legendre rule with ``order`` nodes on ``[a, b]``."""
    if int(order) != order or order <= 0:
        raise ConfigurationError(f"quadrature order must be a positive integer, got {order}",
                                 path="quadrature_order")
    if not a < b:
        raise ConfigurationError(f"quadrature interval requires a < b, got [{a}, {b}]")
    x, w = _leggauss(int(order))
    half = 0.5 * (b - a)
    return QuadratureRule(nodes=a + half * (x + 1.0), weights=half * w, order=int(order),
                          a=float(a), b=float(b))


_LEGGAUSS_CACHE: dict = {}


def _leggauss(n):
    if n not in _LEGGAUSS_CACHE:
        x, w = np.polynomial.legendre.leggauss(n)
        x.setflags(write=False)
        w.setflags(write=False)
        _LEGGAUSS_CACHE[n] = (x, w)
    return _LEGGAUSS_CACHE[n]


# --------------------------------------------------------------------------
# dense linear algebra


def solve_dense(A, b, *, return_rcond=False, rcond_min=RCOND_SINGULAR):
    """LU solve with partial pivoting and a 1-norm condition estimate.

    Raises
    ------
    SingularSystem
        If the reciprocal condition estimate is below ``rcond_min``.
    """
    A = np.asarray(A, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ContractError(f"solve_dense needs a square matrix, got shape {A.shape}")
    n = A.shape[0]
    if n == 0:
        x = np.zeros(b.shape, dtype=complex)
        return (x, 1.0) if return_rcond else x
    anorm = np.linalg.norm(A, 1)
    if anorm == 0.0 or not np.all(np.isfinite(A)):
        raise SingularSystem("matrix is zero or not finite", 0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lu, piv = sla.lu_factor(A, check_finite=False)
        gecon, = sla.get_lapack_funcs(("gecon",), (lu,))
        rcond, info = gecon(lu, anorm, norm="1")
    if not np.isfinite(rcond) or rcond < rcond_min:
        raise SingularSystem(f"matrix is singular to working precision (rcond {rcond:.3e})",
                             float(rcond) if np.isfinite(rcond) else 0.0)
    x = sla.lu_solve((lu, piv), b, check_finite=False)
    return (x, float(rcond)) if return_rcond else x


def adjoint(A, gram_in=None, gram_out=None) -> np.ndarray:
    """Adjoint of ``A: (C^n, gram_in) -> (C^m, gram_out)``.

    Satisfies ``<A v, w>_out = <v, A* w>_in``.
    """
    A = np.asarray(A, dtype=complex)
    AH = A.conj().T
    if gram_out is not None:
        AH = AH @ np.asarray(gram_out)
    if gram_in is not None:
        AH = solve_dense(gram_in, AH)
    return AH


def hermitian_defect(A) -> float:
    A = np.asarray(A)
    scale = max(1.0, float(np.linalg.norm(A, 2))) if A.size else 1.0
    return float(np.linalg.norm(A - A.conj().T, 2)) / scale if A.size else 0.0


def hermitian_part(A) -> np.ndarray:
    A = np.asarray(A)
    return 0.5 * (A + A.conj().T)


def hermitian_eig(A, gram=None, *, tol=1e-10):
    """Eigen-decomposition of ``A v = lambda gram v`` for Hermitian ``A``.

    Eigenvalues come back ascending; eigenvectors are ``gram``-orthonormal.

    Raises
    ------
    ContractError
        If ``A`` (or ``gram``) is not Hermitian to ``tol``, or ``gram`` is not
        positive definite.
    """
    A = np.asarray(A)
    if hermitian_defect(A) > tol:
        raise ContractError(f"matrix is not Hermitian (defect {hermitian_defect(A):.3e})")
    A = hermitian_part(A)
    if gram is None:
        return sla.eigh(A)
    gram = np.asarray(gram)
    if hermitian_defect(gram) > tol:
        raise ContractError("Gram matrix is not Hermitian")
    try:
        return sla.eigh(A, hermitian_part(gram))
    except np.linalg.LinAlgError as exc:
        raise ContractError(f"Gram matrix is not positive definite: {exc}") from exc


def numerical_nullity(M, rtol=NULLITY_RTOL) -> int:
    """Number of singular values below ``rtol * ||M||_2``."""
    M = np.asarray(M)
    if M.size == 0:
        return M.shape[1] if M.ndim == 2 else 0
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[0] == 0.0:
        return M.shape[1]
    return int(np.sum(sv <= rtol * sv[0])) + max(0, M.shape[1] - M.shape[0])


def null_space(M, rtol=NULLITY_RTOL) -> np.ndarray:
    """Orthonormal basis (columns) of the numerical kernel of ``M``."""
    M = np.asarray(M, dtype=complex)
    u, sv, vh = np.linalg.svd(M)
    if sv.size == 0 or sv[0] == 0.0:
        return np.eye(M.shape[1], dtype=complex)
    rank = int(np.sum(sv > rtol * sv[0]))
    return vh[rank:].conj().T


def negative_count(M) -> int:
    """Number of strictly negative eigenvalues of the Hermitian part of ``M``."""
    M = np.asarray(M)
    if M.size == 0:
        return 0
    return int(np.sum(np.linalg.eigvalsh(hermitian_part(M)) < 0.0))


# --------------------------------------------------------------------------
# root scanning


def _segments(window, exclusions):
    a, b = window
    balls = sorted((float(c), float(r)) for c, r in exclusions
                   if float(c) + float(r) > a and float(c) - float(r) < b)
    segs = []
    lo = a
    for c, r in balls:
        if c - r > lo:
            segs.append((lo, c - r))
        lo = max(lo, c + r)
    if lo < b:
        segs.append((lo, b))
    return segs, balls


def _allot(segs, grid):
    total = sum(hi - lo for lo, hi in segs)
    if grid < 2 * max(1, len(segs)):
        raise ConfigurationError(
            f"scan grid of {grid} points is too coarse to separate {len(segs)} segments "
            "between exclusion balls")
    return [max(2, int(math.ceil(grid * (hi - lo) / total))) for lo, hi in segs]


def _root_tol(x, tol_rel):
    return tol_rel * (1.0 + abs(x))


def bisect(F, a, b, fa=None, fb=None, tol_rel=1e-10, max_iter=200):
    """Plain bisection on a sign change of ``F`` in ``[a, b]``.

    Returns ``(root, |F| did not blow up)``; the second value is ``False``
    when the bracket closes on a pole instead of a zero.
    """
    fa = F(a) if fa is None else fa
    fb = F(b) if fb is None else fb
    scale = max(abs(fa), abs(fb))
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        if b - a <= _root_tol(m, tol_rel):
            break
        fm = F(m)
        if fm == 0.0:
            return m, True
        if np.sign(fm) == np.sign(fa):
            a, fa = m, fm
        else:
            b, fb = m, fm
    m = 0.5 * (a + b)
    return m, min(abs(fa), abs(fb)) <= scale


def scan_real_roots(F, window, exclusions: Iterable = (), grid: int = 200, *,
                    matrix: Optional[Callable] = None, tol_rel: float = 1e-10):
    """Find the real zeros of ``F`` in ``window`` by sign-change bisection.

    Grid cells whose endpoints straddle an exclusion ball are never paired,
    so poles sitting inside exclusions do not masquerade as roots. Roots
    inside exclusion balls are not reported.

    Parameters
    ----------
    F : callable float -> float
        Must be a pure function of its argument.
    window : (a, b)
    exclusions : iterable of (center, radius)
    grid : int
        Total number of grid points shared between the exclusion-free segments.
    matrix : callable float -> ndarray, optional
        When given, the multiplicity hint at each root is the numerical
        nullity of ``matrix(root)``.

    Returns
    -------
    list of Root, ascending
    """
    a, b = map(float, window)
    if a > b:
        raise ConfigurationError(f"scan window requires a <= b, got ({a}, {b})")
    if a == b:
        return []
    segs, balls = _segments((a, b), exclusions)
    if not segs:
        return []
    counts = _allot(segs, grid)
    roots = []
    for (lo, hi), n in zip(segs, counts):
        xs = np.linspace(lo, hi, n)
        fs = [float(F(x)) for x in xs]
        for i, (x, fx) in enumerate(zip(xs, fs)):
            if fx == 0.0 and 0 < i < len(xs) - 1:
                roots.append(float(x))
        for i in range(len(xs) - 1):
            if np.sign(fs[i]) * np.sign(fs[i + 1]) < 0:
                r, ok = bisect(F, xs[i], xs[i + 1], fs[i], fs[i + 1], tol_rel)
                if ok:
                    roots.append(r)
    roots = _drop_excluded(sorted(roots), balls)
    out = []
    for r in roots:
        mult = max(1, numerical_nullity(matrix(r))) if matrix is not None else 1
        out.append(Root(r, mult))
    return out


def _drop_excluded(roots, balls):
    return [r for r in roots if not any(abs(r - c) < rad for c, rad in balls)]


def scan_count_jumps(count: Callable[[float], int], window, exclusions: Iterable = (),
                     grid: int = 200, *, tol_rel: float = 1e-10, matrix=None):
    """Locate the jumps of an integer counting function by bisection.

    ``count`` is typically a negative-eigenvalue count of a Hermitian family
    that is monotone between exclusions. Each jump of size ``k`` is reported
    as a root of multiplicity ``k`` (or the nullity of ``matrix(root)`` when
    that is given and positive). Coincident roots of any multiplicity are
    resolved, which a determinant sign test cannot do for even multiplicity.
    """
    a, b = map(float, window)
    if a > b:
        raise ConfigurationError(f"scan window requires a <= b, got ({a}, {b})")
    if a == b:
        return []
    segs, balls = _segments((a, b), exclusions)
    if not segs:
        return []
    counts = _allot(segs, grid)
    found = []

    def refine(x0, n0, x1, n1):
        if n0 == n1:
            return
        m = 0.5 * (x0 + x1)
        if x1 - x0 <= _root_tol(m, tol_rel):
            found.append((m, abs(n1 - n0)))
            return
        nm = count(m)
        refine(x0, n0, m, nm)
        refine(m, nm, x1, n1)

    for (lo, hi), n in zip(segs, counts):
        xs = np.linspace(lo, hi, n)
        ns = [count(x) for x in xs]
        for i in range(len(xs) - 1):
            refine(xs[i], ns[i], xs[i + 1], ns[i + 1])
    found = [(r, k) for r, k in sorted(found)
             if not any(abs(r - c) < rad for c, rad in balls)]
    out = []
    for r, k in found:
        mult = k
        if matrix is not None:
            nul = numerical_nullity(matrix(r))
            mult = nul if nul > 0 else k
        out.append(Root(float(r), int(mult)))
    return out


def scan_inertia_roots(M: Callable[[float], np.ndarray], window, exclusions: Iterable = (),
                       grid: int = 200, *, tol_rel: float = 1e-10):
    """Real ``z`` in ``window`` where the Hermitian family ``M(z)`` is singular.

    Located through jumps of the negative-eigenvalue count; multiplicity is the
    numerical nullity of ``M`` at the root (falling back to the jump size).
    """
    return scan_count_jumps(lambda z: negative_count(M(z)), window, exclusions, grid,
                            tol_rel=tol_rel, matrix=M)


def cluster_values(values: Sequence[float], rtol: float = 1e-8):
    """Group nearly equal sorted reals into ``(mean, multiplicity)`` pairs."""
    out = []
    for v in sorted(values):
        if out and abs(v - out[-1][0]) <= rtol * (1.0 + abs(v)):
            mean, k = out[-1]
            out[-1] = ((mean * k + v) / (k + 1), k + 1)
        else:
            out.append((v, 1))
    return out


def polish_root(matrix: Callable[[float], np.ndarray], x0: float, halfwidth: float) -> float:
    """Refine a real root by minimizing the smallest singular value of ``matrix`` near ``x0``.

    Useful when the root was bracketed through a function with a pole at the
    root itself (counting functions lose precision there) but ``matrix`` is
    analytic. Returns ``x0`` unchanged if no improvement is found.
    """
    def smin(x):
        return float(np.linalg.svd(matrix(x), compute_uv=False)[-1])

    # golden section: the bounded Brent in scipy stops at ~sqrt(eps)*|x|, too coarse here
    g = (math.sqrt(5.0) - 1.0) / 2.0
    lo, hi = x0 - halfwidth, x0 + halfwidth
    c, d = hi - g * (hi - lo), lo + g * (hi - lo)
    fc, fd = smin(c), smin(d)
    tol = 4.0 * np.finfo(float).eps * (1.0 + abs(x0))
    while hi - lo > tol:
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - g * (hi - lo)
            fc = smin(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + g * (hi - lo)
            fd = smin(d)
    x = 0.5 * (lo + hi)
    return float(x) if smin(x) < smin(x0) else float(x0)
