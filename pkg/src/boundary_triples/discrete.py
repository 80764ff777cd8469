"""Finite-dimensional graph models: Gram matrices, a difference operator, boundary indices.

Notation for a model with vertex Gram ``M`` (the 0-form mass), edge Gram
``G1`` and difference matrix ``d``::

    K = d^H G1 d          stiffness
    A = K + M             Gram of the discrete H^1 inner product
    E                     selection of the boundary vertices
    Gb                    Gram of the boundary space

The trace adjoint with respect to ``A`` and ``Gb`` is ``A^{-1} E^T Gb``, so
``(gamma0 gamma0^*)^{-1} = Gb^{-1} schur(A)``, where ``schur(A)`` eliminates
the interior block. This equality is exact linear algebra.

Two DtN-like objects exist at finite size. The *naive* flux of the
``(K - zM)``-harmonic extension is ``Gb^{-1} (K u)_b``; it ignores the mass
carried by boundary vertices and converges at first order. The *consistent*
(weak) flux ``Gb^{-1} ((K - zM) u)_b`` equals the Schur complement of
``K - zM`` and converges at second order for P1 elements.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import ConfigurationError, ContractError
from .numeric import cluster_values, hermitian_defect, solve_dense

SCHEMES = ("dec-lumped", "fem-p1")


@dataclass(frozen=True, eq=False)
class DiscreteModel:
    """Finite realization of functions, 1-forms, ``d`` and the trace.

    ``d`` has one row per edge with a positive and a negative entry.
    """

    gram0: np.ndarray
    gram1: np.ndarray
    d: np.ndarray
    boundary: tuple
    boundary_gram: np.ndarray
    edge_lengths: Optional[np.ndarray] = None

    def __post_init__(self):
        n_v = self.gram0.shape[0]
        n_e = self.gram1.shape[0]
        if self.d.shape != (n_e, n_v):
            raise ContractError(f"d must be {n_e}x{n_v}, got {self.d.shape}")
        for name, G in (("gram0", self.gram0), ("gram1", self.gram1),
                        ("boundary_gram", self.boundary_gram)):
            if hermitian_defect(G) > 1e-12:
                raise ContractError(f"{name} must be Hermitian")
            if np.linalg.eigvalsh(G)[0] <= 0:
                raise ContractError(f"{name} must be positive definite")
        for k, row in enumerate(self.d):
            nz = np.flatnonzero(row)
            if len(nz) != 2 or np.sign(row[nz[0]].real) == np.sign(row[nz[1]].real):
                raise ContractError(f"row {k} of d is not an oriented incidence row")
        b = tuple(int(i) for i in self.boundary)
        if len(set(b)) != len(b) or any(not 0 <= i < n_v for i in b):
            raise ContractError("boundary indices must be distinct and in range")
        if self.boundary_gram.shape != (len(b), len(b)):
            raise ContractError("boundary Gram has the wrong size")
        object.__setattr__(self, "boundary", b)

    @property
    def n_vertices(self) -> int:
        return self.gram0.shape[0]

    @property
    def n_edges(self) -> int:
        return self.gram1.shape[0]

    @property
    def boundary_dim(self) -> int:
        return len(self.boundary)

    @property
    def interior(self) -> np.ndarray:
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[list(self.boundary)] = False
        return np.flatnonzero(mask)

    @property
    def stiffness(self) -> np.ndarray:
        return self.d.conj().T @ self.gram1 @ self.d

    @property
    def h1_gram(self) -> np.ndarray:
        return self.stiffness + self.gram0

    @property
    def trace_matrix(self) -> np.ndarray:
        E = np.zeros((self.boundary_dim, self.n_vertices))
        E[np.arange(self.boundary_dim), list(self.boundary)] = 1.0
        return E


def graph_model(n_vertices: int, edges: Sequence, boundary: Sequence[int],
                vertex_mass=None, edge_mass=None, boundary_gram=None) -> DiscreteModel:
    """Model on a combinatorial graph; ``edges`` are ``(tail, head)`` pairs, ``d`` = incidence."""
    d = np.zeros((len(edges), n_vertices))
    for k, (a, b) in enumerate(edges):
        if a == b:
            raise ContractError("self-loops have a zero difference row")
        d[k, a], d[k, b] = -1.0, 1.0
    G0 = np.eye(n_vertices) if vertex_mass is None else _as_gram(vertex_mass)
    G1 = np.eye(len(edges)) if edge_mass is None else _as_gram(edge_mass)
    Gb = np.eye(len(boundary)) if boundary_gram is None else _as_gram(boundary_gram)
    return DiscreteModel(G0, G1, d, tuple(boundary), Gb)


def _as_gram(x):
    x = np.asarray(x, dtype=float)
    return np.diag(x) if x.ndim == 1 else x


def path_model(n_vertices: int = 3) -> DiscreteModel:
    """Unweighted path with its two end vertices as boundary."""
    edges = [(i, i + 1) for i in range(n_vertices - 1)]
    return graph_model(n_vertices, edges, [0, n_vertices - 1])


def random_weighted_model(rng, n_vertices: int = 8, extra_edges: int = 4,
                          n_boundary: int = 3) -> DiscreteModel:
    """Connected random graph with random positive masses and a random boundary Gram."""
    max_extra = n_vertices * (n_vertices - 1) // 2 - (n_vertices - 1)
    if extra_edges > max_extra:
        raise ContractError(f"a simple graph on {n_vertices} vertices has room for at most "
                            f"{max_extra} edges beyond a spanning tree")
    if not 0 < n_boundary <= n_vertices:
        raise ContractError("n_boundary must be between 1 and the number of vertices")
    edges = [(int(rng.integers(0, k)), k) for k in range(1, n_vertices)]
    seen = set(edges)
    while len(edges) < n_vertices - 1 + extra_edges:
        a, b = sorted(int(v) for v in rng.choice(n_vertices, 2, replace=False))
        if (a, b) not in seen:
            seen.add((a, b))
            edges.append((a, b))
    boundary = sorted(int(v) for v in rng.choice(n_vertices, n_boundary, replace=False))
    R = rng.standard_normal((n_boundary, n_boundary))
    Gb = R @ R.T + n_boundary * np.eye(n_boundary)
    return graph_model(n_vertices, edges, boundary, rng.uniform(0.2, 2.0, n_vertices),
                       rng.uniform(0.2, 2.0, len(edges)), Gb)


def discretize(graph, n_per_edge: int, scheme: str = "fem-p1") -> DiscreteModel:
    """Subdivide each metric edge into ``n_per_edge`` elements of length ``h = l / n``.

    Original vertices keep their order and come first; subdivision nodes
    follow edge by edge. ``d`` is the incidence divided by ``h`` and the edge
    Gram is ``diag(h)``, so ``K`` is the P1 stiffness. The vertex Gram is the
    consistent P1 mass (``fem-p1``) or its row-sum lumping (``dec-lumped``).
    """
    if scheme not in SCHEMES:
        raise ConfigurationError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}",
                                 path="discretization.scheme")
    if int(n_per_edge) != n_per_edge or n_per_edge < 1:
        raise ConfigurationError("n_per_edge must be a positive integer",
                                 path="discretization.n_per_edge")
    n = int(n_per_edge)
    vid = {v: i for i, v in enumerate(graph.vertices)}
    n_v = len(graph.vertices) + graph.n_edges * (n - 1)
    rows, hs = [], []
    nxt = len(graph.vertices)
    for edge in graph.edges:
        h = edge.length / n
        nodes = [vid[edge.tail]] + list(range(nxt, nxt + n - 1)) + [vid[edge.head]]
        nxt += n - 1
        for a, b in zip(nodes[:-1], nodes[1:]):
            rows.append((a, b))
            hs.append(h)
    hs = np.array(hs)
    d = np.zeros((len(rows), n_v))
    M = np.zeros((n_v, n_v))
    for k, ((a, b), h) in enumerate(zip(rows, hs)):
        d[k, a] -= 1.0 / h
        d[k, b] += 1.0 / h
        if scheme == "fem-p1":
            M[np.ix_([a, b], [a, b])] += h / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
        else:
            M[a, a] += h / 2.0
            M[b, b] += h / 2.0
    boundary = tuple(vid[v] for v in graph.boundary)
    return DiscreteModel(M, np.diag(hs), d, boundary, np.eye(len(boundary)), hs)


# --------------------------------------------------------------------------
# Schur complement and flux DtN


@dataclass(frozen=True)
class SchurLambda:
    """``S = Gb^{-1} schur(A)``; ``schur`` is the raw boundary Schur complement of ``A``."""

    S: np.ndarray
    schur: np.ndarray

    def energy(self, phi) -> float:
        """``phi^H schur phi`` (the minimal H^1 energy of an extension)."""
        phi = np.asarray(phi, dtype=complex)
        return float(np.vdot(phi, self.schur @ phi).real)


def _schur(A, b_idx, i_idx):
    Abb = A[np.ix_(b_idx, b_idx)]
    if len(i_idx) == 0:
        return Abb.copy()
    Abi = A[np.ix_(b_idx, i_idx)]
    Aib = A[np.ix_(i_idx, b_idx)]
    Aii = A[np.ix_(i_idx, i_idx)]
    return Abb - Abi @ solve_dense(Aii, Aib)


def schur_lambda(model: DiscreteModel) -> SchurLambda:
    b = list(model.boundary)
    sch = _schur(model.h1_gram.astype(complex), b, model.interior)
    return SchurLambda(np.linalg.solve(model.boundary_gram, sch), sch)


def gamma0_adjoint(model: DiscreteModel) -> np.ndarray:
    """Adjoint of the trace from ``(C^n, A)`` to ``(C^m, Gb)``: ``A^{-1} E^T Gb``."""
    return np.linalg.solve(model.h1_gram, model.trace_matrix.T @ model.boundary_gram)


def gamma0_norm(model: DiscreteModel) -> float:
    """``||gamma0||`` from the discrete H^1 space to the boundary space."""
    E = model.trace_matrix
    vals = sla.eigh(E.T @ model.boundary_gram @ E, model.h1_gram, eigvals_only=True)
    return float(math.sqrt(max(vals[-1], 0.0)))


def harmonic_extension(model: DiscreteModel, z, phi) -> np.ndarray:
    """``u`` with ``u_b = phi`` and interior rows of ``(K - zM) u`` equal to zero.

    Raises
    ------
    SingularSystem
        If ``z`` is an eigenvalue of the interior pencil.
    """
    phi = np.asarray(phi, dtype=complex)
    b, i = list(model.boundary), model.interior
    u = np.zeros(model.n_vertices, dtype=complex)
    u[b] = phi
    if len(i):
        P = model.stiffness - complex(z) * model.gram0
        u[i] = solve_dense(P[np.ix_(i, i)], -P[np.ix_(i, b)] @ phi)
    return u


def flux_dtn(model: DiscreteModel, z, flux: str = "naive") -> np.ndarray:
    """Flux of the ``(K - zM)``-harmonic extension of each boundary unit vector.

    ``flux='naive'`` uses ``Gb^{-1} (K u)_b``; ``flux='consistent'`` uses
    ``Gb^{-1} ((K - zM) u)_b``, which equals ``Gb^{-1}`` times the Schur
    complement of ``K - zM``.
    """
    if flux not in ("naive", "consistent"):
        raise ConfigurationError(f"unknown flux {flux!r}")
    m = model.boundary_dim
    U = np.column_stack([harmonic_extension(model, z, np.eye(m)[:, j]) for j in range(m)])
    op = model.stiffness if flux == "naive" else model.stiffness - complex(z) * model.gram0
    rows = (op @ U)[list(model.boundary)]
    return np.linalg.solve(model.boundary_gram, rows)


def interior_dirichlet_eigenvalues(model: DiscreteModel) -> np.ndarray:
    i = model.interior
    if len(i) == 0:
        return np.zeros(0)
    K, M = model.stiffness, model.gram0
    return sla.eigh(K[np.ix_(i, i)], M[np.ix_(i, i)], eigvals_only=True)


# --------------------------------------------------------------------------
# convergence


@dataclass
class ConvergenceRow:
    n: int
    h: float
    error: float
    rate: Optional[float]


@dataclass
class ConvergenceTable:
    z: complex
    scheme: str
    flux: str
    rows: list = field(default_factory=list)

    @property
    def rates(self) -> list:
        return [r.rate for r in self.rows if r.rate is not None]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "h", "error", "rate"])
            for r in self.rows:
                w.writerow([r.n, repr(r.h), repr(r.error), "" if r.rate is None else repr(r.rate)])


def convergence_study(graph, z, levels: Sequence[int], scheme: str = "fem-p1",
                      flux: str = "naive") -> ConvergenceTable:
    """Entrywise max error of ``flux_dtn`` against the continuum DtN at ``z``.

    Rates are ``log(e_k / e_{k+1}) / log(n_{k+1} / n_k)``; the first level has none.
    """
    from .core import dtn

    exact = dtn(graph, z).entries
    table = ConvergenceTable(complex(z), scheme, flux)
    prev = None
    hmax = float(np.max(graph.lengths))
    for n in levels:
        err = float(np.max(np.abs(flux_dtn(discretize(graph, n, scheme), z, flux) - exact)))
        rate = None
        if prev is not None and err > 0 and prev[1] > 0:
            rate = math.log(prev[1] / err) / math.log(n / prev[0])
        table.rows.append(ConvergenceRow(int(n), hmax / n, err, rate))
        prev = (n, err)
    return table


# --------------------------------------------------------------------------
# backend


@dataclass(eq=False)
class DiscreteElement:
    """Vertex vector ``u`` with its weak Laplacian ``lap`` (``M lap = K u`` off the boundary)."""

    u: np.ndarray
    lap: np.ndarray

    def __add__(self, other):
        return DiscreteElement(self.u + other.u, self.lap + other.lap)

    def __sub__(self, other):
        return DiscreteElement(self.u - other.u, self.lap - other.lap)

    def __mul__(self, c):
        return DiscreteElement(c * self.u, c * self.lap)

    __rmul__ = __mul__

    def __neg__(self):
        return DiscreteElement(-self.u, -self.lap)


class DiscreteBackend:
    """Boundary-core backend over a :class:`DiscreteModel` with the consistent flux.

    With the consistent flux, ``dtn(-1)`` is exactly the Schur-complement
    ``S`` and Green's formula is an algebraic identity. Degree-1 objects are
    not represented, so checks that need them are skipped. The boundary Gram
    must be the identity because the core pairs boundary vectors Euclideanly.
    """

    def __init__(self, model: DiscreteModel):
        if not np.allclose(model.boundary_gram, np.eye(model.boundary_dim), atol=1e-14):
            raise ContractError("DiscreteBackend requires an identity boundary Gram")
        self.model = model
        self._K = model.stiffness.astype(complex)
        self._M = model.gram0.astype(complex)

    @property
    def boundary_dim(self) -> int:
        return self.model.boundary_dim

    def _pencil_spectrum(self, K, M, window):
        a, b = map(float, window)
        if a >= b or K.shape[0] == 0:
            return []
        vals = sla.eigh(K, M, eigvals_only=True)
        return [(float(v), k) for v, k in cluster_values([v for v in vals if a < v < b])]

    def dirichlet_spectrum(self, window, grid=None):
        i = self.model.interior
        return self._pencil_spectrum(self._K[np.ix_(i, i)], self._M[np.ix_(i, i)], window)

    def dirichlet_solve(self, z, phi):
        u = harmonic_extension(self.model, z, phi)
        return DiscreteElement(u, complex(z) * u)

    def dtn_matrix(self, z):
        return flux_dtn(self.model, z, flux="consistent")

    def trace_gamma0(self, f):
        return np.asarray(f.u[list(self.model.boundary)])

    def normal_flux(self, f):
        r = (self._K @ f.u - self._M @ f.lap)[list(self.model.boundary)]
        return np.linalg.solve(self.model.boundary_gram, r)

    def _vec(self, h):
        return h.u if isinstance(h, DiscreteElement) else np.asarray(h, dtype=complex)

    def dirichlet_resolvent(self, z, h):
        hv = self._vec(h)
        i = self.model.interior
        u = np.zeros(self.model.n_vertices, dtype=complex)
        P = self._K - complex(z) * self._M
        if len(i):
            u[i] = solve_dense(P[np.ix_(i, i)], (self._M @ hv)[i])
        return DiscreteElement(u, complex(z) * u + hv)

    def _robin_operator(self, Btilde):
        E = self.model.trace_matrix
        return E.T @ self.model.boundary_gram @ np.asarray(Btilde, dtype=complex) @ E

    def robin_resolvent_direct(self, z, Btilde, h):
        hv = self._vec(h)
        A = self._K - complex(z) * self._M - self._robin_operator(Btilde)
        u = solve_dense(A, self._M @ hv)
        return DiscreteElement(u, complex(z) * u + hv)

    def robin_spectrum_direct(self, Btilde, window, grid=None):
        R = self._robin_operator(Btilde)
        return self._pencil_spectrum(self._K - R, self._M, window)

    def inner_product(self, f, g):
        return complex(np.vdot(self._vec(f), self._M @ self._vec(g)))

    def apply_laplacian(self, f):
        return DiscreteElement(f.lap, np.full_like(f.lap, np.nan))

    def sample_values(self, f):
        return np.asarray(self._vec(f))

    def constant(self, value=1.0):
        n = self.model.n_vertices
        return DiscreteElement(np.full(n, value, dtype=complex), np.zeros(n, dtype=complex))

    def h1_inner_product(self, f, g):
        A = self.model.h1_gram
        return complex(np.vdot(self._vec(f), A @ self._vec(g)))

    def random_function(self, rng, *, zero_trace=False, kirchhoff=False, complex_=True):
        """Random vertex vector with a weak Laplacian (zero on boundary rows)."""
        n = self.model.n_vertices
        u = rng.standard_normal(n) + (1j * rng.standard_normal(n) if complex_ else 0.0)
        b, i = list(self.model.boundary), self.model.interior
        if zero_trace:
            u[b] = 0.0
        lap = np.zeros(n, dtype=complex)
        if len(i):
            lap[i] = np.linalg.solve(self._M[np.ix_(i, i)], (self._K @ u)[i])
        return DiscreteElement(np.asarray(u, dtype=complex), lap)
