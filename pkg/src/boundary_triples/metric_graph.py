"""Finite metric graphs with Kirchhoff interior vertices and a boundary-vertex set.

Functions on the graph are stored per edge in arclength ``t`` measured from
the edge tail. The boundary trace is the common vertex value; the normal
flux at a boundary vertex is the sum over incident edge ends of the
derivative taken towards the vertex (``-f'(0)`` at a tail, ``f'(l)`` at a
head). Interior vertices carry continuity plus zero flux sum.

Spectra are located with an eigenvalue counting function: for real ``lam``
off the edge-decoupled Dirichlet spectrum, the number of eigenvalues below
``lam`` equals the decoupled count plus the number of negative eigenvalues
of the vertex matrix assembled from edge-wise solutions. The counting
function is monotone, so bisection on its jumps recovers every eigenvalue
with its multiplicity, including eigenvalues sitting on decoupled poles.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Hashable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, ContractError
from .numeric import (
    fundamental_pair,
    gauss_rule,
    hermitian_defect,
    negative_count,
    numerical_nullity,
    polish_root,
    scan_count_jumps,
    solve_dense,
)

DEFAULT_QUADRATURE_ORDER = 32


@dataclass(frozen=True)
class Edge:
    tail: Hashable
    head: Hashable
    length: float


class MetricGraph:
    """Immutable metric graph; also the continuum model backend.

    Parameters
    ----------
    edges : sequence of Edge or (tail, head, length)
    boundary : sequence of vertex ids, in boundary order
    quadrature_order : int
        Gauss nodes per unit length at ``z = 0``.
    """

    def __init__(self, edges, boundary, quadrature_order=DEFAULT_QUADRATURE_ORDER,
                 vertices=None):
        edges = tuple(e if isinstance(e, Edge) else Edge(*e) for e in edges)
        if not edges:
            raise ConfigurationError("graph needs at least one edge", path="edges")
        for i, e in enumerate(edges):
            if not (isinstance(e.length, (int, float)) and math.isfinite(e.length)
                    and e.length > 0):
                raise ConfigurationError(f"edges[{i}].length must be > 0",
                                         path=f"edges[{i}].length")
        if vertices is None:
            seen = {}
            for e in edges:
                seen.setdefault(e.tail, None)
                seen.setdefault(e.head, None)
            vertices = tuple(seen)
        vertices = tuple(vertices)
        vset = set(vertices)
        for i, e in enumerate(edges):
            for side, v in (("from", e.tail), ("to", e.head)):
                if v not in vset:
                    raise ConfigurationError(f"edges[{i}].{side} refers to unknown vertex {v!r}",
                                             path=f"edges[{i}].{side}")
        boundary = tuple(boundary)
        if not boundary:
            raise ConfigurationError("boundary must not be empty", path="boundary")
        if len(set(boundary)) != len(boundary):
            raise ConfigurationError("boundary vertices must be distinct", path="boundary")
        if int(quadrature_order) != quadrature_order or quadrature_order < 1:
            raise ConfigurationError("quadrature_order must be a positive integer",
                                     path="quadrature_order")

        ends = {v: [] for v in vertices}
        for k, e in enumerate(edges):
            ends[e.tail].append((k, 0))
            ends[e.head].append((k, 1))
        for i, v in enumerate(boundary):
            if v not in vset:
                raise ConfigurationError(f"boundary[{i}] refers to unknown vertex {v!r}",
                                         path=f"boundary[{i}]")
        for v in vertices:
            if not ends[v]:
                raise ConfigurationError(f"vertex {v!r} has no incident edge", path="edges")

        self.edges = edges
        self.vertices = vertices
        self.boundary = boundary
        self.interior = tuple(v for v in vertices if v not in set(boundary))
        self.quadrature_order = int(quadrature_order)
        self.lengths = np.array([e.length for e in edges], dtype=float)
        self._ends = {v: tuple(ends[v]) for v in vertices}
        if not self._connected():
            warnings.warn("metric graph is not connected", stacklevel=2)

    def _connected(self):
        adj = {v: set() for v in self.vertices}
        for e in self.edges:
            adj[e.tail].add(e.head)
            adj[e.head].add(e.tail)
        start = self.vertices[0]
        seen, stack = {start}, [start]
        while stack:
            for w in adj[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == len(self.vertices)

    # -- structure ---------------------------------------------------------

    @property
    def boundary_dim(self) -> int:
        return len(self.boundary)

    m = boundary_dim

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def is_interval(self) -> bool:
        e = self.edges
        return (len(e) == 1 and e[0].tail != e[0].head
                and set(self.boundary) == {e[0].tail, e[0].head})

    def ends(self, v):
        return self._ends[v]

    def edge_order(self, e: int, z=0.0) -> int:
        """Gauss nodes on edge ``e``; grows with ``|z|**0.5`` for oscillatory solutions."""
        scale = max(1.0, math.sqrt(abs(z)) / 4.0)
        return max(8, int(math.ceil(self.quadrature_order * self.lengths[e] * scale)))

    def rule(self, e: int, z=0.0):
        return _cached_rule(self.edge_order(e, z), float(self.lengths[e]))

    def sample_grid(self, points_per_edge: int = 11):
        """Uniform arclength samples per edge (endpoints included)."""
        return [np.linspace(0.0, L, points_per_edge) for L in self.lengths]

    def __repr__(self):
        return (f"MetricGraph(edges={len(self.edges)}, vertices={len(self.vertices)}, "
                f"boundary={list(self.boundary)})")

    # -- backend contract ----------------------------------------------------

    def dirichlet_spectrum(self, window, grid=None):
        return dirichlet_spectrum(self, window, grid)

    def dirichlet_solve(self, z, phi):
        return dirichlet_solve(self, z, phi)

    def trace_gamma0(self, f):
        return trace_gamma0(self, f)

    def normal_flux(self, f):
        return normal_flux(self, f)

    def normal_component(self, eta):
        return normal_component(self, eta)

    def derivative(self, f):
        return DerivativeFunction(f)

    def divergence(self, eta):
        return -DerivativeFunction(eta)

    def dirichlet_resolvent(self, z, h):
        return dirichlet_resolvent(self, z, h)

    def robin_resolvent_direct(self, z, Btilde, h):
        return robin_resolvent_direct(self, z, Btilde, h)

    def robin_spectrum_direct(self, Btilde, window, grid=None):
        return robin_spectrum_direct(self, Btilde, window, grid)

    def inner_product(self, f, g, z=0.0):
        return inner_product(self, f, g, z)

    def h1_inner_product(self, f, g, z=0.0):
        return (inner_product(self, f, g, z)
                + inner_product(self, DerivativeFunction(f), DerivativeFunction(g), z))

    def apply_laplacian(self, f):
        return -DerivativeFunction(DerivativeFunction(f))

    def sample_values(self, f, points_per_edge: int = 11):
        return f.evaluate_on(self.sample_grid(points_per_edge))

    def constant(self, value=1.0):
        return PolynomialFunction(self, [np.polynomial.Polynomial([value])] * self.n_edges)

    def random_function(self, rng, **kw):
        return random_smooth_function(self, rng, **kw)

    def random_form(self, rng, **kw):
        return random_smooth_form(self, rng, **kw)


@lru_cache(maxsize=512)
def _cached_rule(order, length):
    return gauss_rule(order, 0.0, length)


def build_graph(config) -> MetricGraph:
    """Build a graph from a ``ModelConfig`` or an equivalent mapping."""
    if hasattr(config, "model_dump"):
        config = config.model_dump(by_alias=True)
    edges = config.get("edges") or []
    try:
        edges = [Edge(e["from"], e["to"], e["length"]) for e in edges]
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed edge entry: {exc}", path="edges") from exc
    return MetricGraph(edges, config.get("boundary") or [],
                       config.get("quadrature_order") or DEFAULT_QUADRATURE_ORDER)


def unit_interval(length=1.0, quadrature_order=DEFAULT_QUADRATURE_ORDER) -> MetricGraph:
    return MetricGraph([Edge(0, 1, length)], [0, 1], quadrature_order)


def star_graph(n_arms=3, length=1.0, quadrature_order=DEFAULT_QUADRATURE_ORDER) -> MetricGraph:
    """Star with a Kirchhoff centre ``'c'``; edges run centre -> leaf, leaves are boundary."""
    edges = [Edge("c", i, length) for i in range(n_arms)]
    return MetricGraph(edges, list(range(n_arms)), quadrature_order)


def path_graph(lengths=(1.0, 1.0), quadrature_order=DEFAULT_QUADRATURE_ORDER) -> MetricGraph:
    edges = [Edge(i, i + 1, L) for i, L in enumerate(lengths)]
    return MetricGraph(edges, [0, len(lengths)], quadrature_order)


# --------------------------------------------------------------------------
# functions on the graph


class GraphFunction:
    """Per-edge function of arclength. Subclasses implement ``value`` and ``deriv``."""

    graph: MetricGraph

    def value(self, e: int, t):
        raise NotImplementedError

    def deriv(self, e: int, t):
        raise NotImplementedError

    def deriv2(self, e: int, t):
        raise NotImplementedError(f"{type(self).__name__} has no second derivative")

    def deriv3(self, e: int, t):
        raise NotImplementedError(f"{type(self).__name__} has no third derivative")

    def evaluate_on(self, grid) -> np.ndarray:
        return np.concatenate([np.asarray(self.value(e, t), dtype=complex)
                               for e, t in enumerate(grid)])

    def sample(self, z=0.0, derivatives=True) -> "SampledFunction":
        nodes = [self.graph.rule(e, z).nodes for e in range(self.graph.n_edges)]
        vals = [np.asarray(self.value(e, t), dtype=complex) for e, t in enumerate(nodes)]
        ders = ([np.asarray(self.deriv(e, t), dtype=complex) for e, t in enumerate(nodes)]
                if derivatives else None)
        return SampledFunction(nodes, vals, ders)

    def __add__(self, other):
        return Combination([(1.0, self), (1.0, other)])

    def __sub__(self, other):
        return Combination([(1.0, self), (-1.0, other)])

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return Combination([(scalar, self)])

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def __neg__(self):
        return Combination([(-1.0, self)])


class Combination(GraphFunction):
    def __init__(self, terms):
        flat = []
        for coef, f in terms:
            if isinstance(f, Combination):
                flat.extend((coef * c, g) for c, g in f.terms)
            else:
                flat.append((coef, f))
        self.terms = flat
        self.graph = flat[0][1].graph

    def _sum(self, method, e, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape, dtype=complex)
        for coef, f in self.terms:
            out = out + coef * np.asarray(getattr(f, method)(e, t))
        return out

    def value(self, e, t):
        return self._sum("value", e, t)

    def deriv(self, e, t):
        return self._sum("deriv", e, t)

    def deriv2(self, e, t):
        return self._sum("deriv2", e, t)

    def deriv3(self, e, t):
        return self._sum("deriv3", e, t)


class DerivativeFunction(GraphFunction):
    """``f'`` (the exterior derivative as a 1-form along the edge orientation)."""

    def __init__(self, base: GraphFunction):
        self.base = base
        self.graph = base.graph

    def value(self, e, t):
        return self.base.deriv(e, t)

    def deriv(self, e, t):
        return self.base.deriv2(e, t)

    def deriv2(self, e, t):
        return self.base.deriv3(e, t)


class CallableFunction(GraphFunction):
    """Wraps callables ``f(e, t)``; derivatives are optional."""

    def __init__(self, graph, f, df=None, d2f=None):
        self.graph = graph
        self._f, self._df, self._d2f = f, df, d2f

    def value(self, e, t):
        return np.asarray(self._f(e, np.asarray(t, dtype=float)), dtype=complex) \
            * np.ones(np.shape(t))

    def deriv(self, e, t):
        if self._df is None:
            raise NotImplementedError("derivative not supplied")
        return np.asarray(self._df(e, np.asarray(t, dtype=float)), dtype=complex) \
            * np.ones(np.shape(t))

    def deriv2(self, e, t):
        if self._d2f is None:
            raise NotImplementedError("second derivative not supplied")
        return np.asarray(self._d2f(e, np.asarray(t, dtype=float)), dtype=complex) \
            * np.ones(np.shape(t))


def on_interval(graph, f, df=None, d2f=None) -> CallableFunction:
    """Lift single-variable callables ``f(t)`` to a graph function (all edges)."""
    lift = (lambda g: None if g is None else (lambda e, t: g(t)))
    return CallableFunction(graph, lift(f), lift(df), lift(d2f))


class PolynomialFunction(GraphFunction):
    def __init__(self, graph, polys: Sequence[np.polynomial.Polynomial]):
        if len(polys) != graph.n_edges:
            raise ContractError("one polynomial per edge required")
        self.graph = graph
        self.polys = [np.polynomial.Polynomial(p.coef.astype(complex)) for p in polys]
        self._d1 = [p.deriv(1) for p in self.polys]
        self._d2 = [p.deriv(2) for p in self.polys]
        self._d3 = [p.deriv(3) for p in self.polys]

    def value(self, e, t):
        return self.polys[e](np.asarray(t, dtype=float))

    def deriv(self, e, t):
        return self._d1[e](np.asarray(t, dtype=float))

    def deriv2(self, e, t):
        return self._d2[e](np.asarray(t, dtype=float))

    def deriv3(self, e, t):
        return self._d3[e](np.asarray(t, dtype=float))


class EdgeSolution(GraphFunction):
    """``f_e(t) = a_e c(z, t) + b_e s(z, t)`` on every edge.

    ``vertex_residual`` is the relative residual of the vertex system that
    produced the coefficients (``nan`` when built by hand).
    """

    def __init__(self, graph, z, coeffs, vertex_residual=float("nan")):
        self.graph = graph
        self.z = complex(z)
        self.coeffs = np.asarray(coeffs, dtype=complex).reshape(graph.n_edges, 2)
        self.vertex_residual = vertex_residual

    def value(self, e, t):
        c, s, _, _ = fundamental_pair(self.z, t)
        a, b = self.coeffs[e]
        return a * c + b * s

    def deriv(self, e, t):
        _, _, dc, ds = fundamental_pair(self.z, t)
        a, b = self.coeffs[e]
        return a * dc + b * ds

    def deriv2(self, e, t):
        return -self.z * self.value(e, t)

    def deriv3(self, e, t):
        return -self.z * self.deriv(e, t)


class ResolventSolution(GraphFunction):
    """Homogeneous part in the (c, s) basis plus the variation-of-parameters term.

    The particular part ``p`` solves ``-p'' - z p = h`` with ``p(0) = p'(0) = 0``::

        p(t)  = -s(t) Ic(t) + c(t) Is(t),   Ic(t) = int_0^t c h,  Is(t) = int_0^t s h
        p'(t) = -c(t) Ic(t) + c'(t) Is(t)
    """

    def __init__(self, graph, z, source: GraphFunction):
        self.graph = graph
        self.z = complex(z)
        self.source = source
        self.coeffs = np.zeros((graph.n_edges, 2), dtype=complex)
        self.vertex_residual = float("nan")

    def _integrals(self, e, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        rule = gauss_rule(self.graph.edge_order(e, self.z), 0.0, 1.0)
        tau = t[:, None] * rule.nodes[None, :]
        w = t[:, None] * rule.weights[None, :]
        h = np.asarray(self.source.value(e, tau.ravel()), dtype=complex).reshape(tau.shape)
        c, s, _, _ = fundamental_pair(self.z, tau.ravel())
        c = c.reshape(tau.shape)
        s = s.reshape(tau.shape)
        return np.sum(w * c * h, axis=1), np.sum(w * s * h, axis=1)

    def particular(self, e, t):
        shape = np.shape(t)
        Ic, Is = self._integrals(e, t)
        c, s, dc, _ = fundamental_pair(self.z, np.atleast_1d(np.asarray(t, dtype=float)))
        p = -s * Ic + c * Is
        dp = -c * Ic + dc * Is
        return p.reshape(shape), dp.reshape(shape)

    def value(self, e, t):
        c, s, _, _ = fundamental_pair(self.z, t)
        a, b = self.coeffs[e]
        return a * c + b * s + self.particular(e, t)[0]

    def deriv(self, e, t):
        _, _, dc, ds = fundamental_pair(self.z, t)
        a, b = self.coeffs[e]
        return a * dc + b * ds + self.particular(e, t)[1]

    def deriv2(self, e, t):
        return -self.z * self.value(e, t) - self.source.value(e, t)

    def deriv3(self, e, t):
        return -self.z * self.deriv(e, t) - self.source.deriv(e, t)


@dataclass
class SampledFunction:
    """Per-edge values (and optionally derivatives) on quadrature nodes."""

    nodes: list
    values: list
    derivs: Optional[list] = None

    def __post_init__(self):
        if len(self.nodes) != len(self.values) or any(
                np.shape(n) != np.shape(v) for n, v in zip(self.nodes, self.values)):
            raise ContractError("sample counts must match the edge quadrature nodes")
        if self.derivs is not None and any(
                np.shape(n) != np.shape(d) for n, d in zip(self.nodes, self.derivs)):
            raise ContractError("derivative sample counts must match the nodes")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["edge_id", "t", "value_re", "value_im"])
            for e, (ts, vs) in enumerate(zip(self.nodes, self.values)):
                for t, v in zip(ts, vs):
                    w.writerow([e, repr(float(t)), repr(float(np.real(v))),
                                repr(float(np.imag(v)))])


def inner_product(graph, f, g, z=0.0) -> complex:
    """``<f, g> = sum_e int conj(f) g`` (conjugate-linear in ``f``)."""
    total = 0.0 + 0.0j
    for e in range(graph.n_edges):
        rule = graph.rule(e, z)
        fv = np.asarray(f.value(e, rule.nodes))
        gv = np.asarray(g.value(e, rule.nodes))
        total += rule.integrate(np.conj(fv) * gv)
    return complex(total)


def norm_sq(graph, f, z=0.0) -> float:
    return inner_product(graph, f, f, z).real


# --------------------------------------------------------------------------
# vertex system


@dataclass
class VertexSystem:
    """Vertex conditions at ``z`` as a linear system in the edge coefficients.

    ``matrix @ x = rhs_base - offsets`` where ``x = (a_0, b_0, a_1, b_1, ...)``.
    ``condition_rows[i]`` is the row of the condition at boundary vertex ``i``.
    """

    z: complex
    matrix: np.ndarray
    offsets: np.ndarray
    kinds: list
    condition_rows: dict = field(default_factory=dict)

    def rhs(self, boundary_values=None):
        r = -self.offsets.copy()
        if boundary_values is not None:
            for i, row in self.condition_rows.items():
                r[row] += boundary_values[i]
        return r


def _end_forms(graph, z, particular=None):
    """Per end: (value coefficient row, value offset, outward-derivative row, offset)."""
    E = graph.n_edges
    forms = {}
    for k, edge in enumerate(graph.edges):
        c, s, dc, ds = fundamental_pair(z, edge.length)
        val0 = np.zeros(2 * E, dtype=complex)
        val0[2 * k] = 1.0
        der0 = np.zeros(2 * E, dtype=complex)
        der0[2 * k + 1] = -1.0
        val1 = np.zeros(2 * E, dtype=complex)
        val1[2 * k], val1[2 * k + 1] = c, s
        der1 = np.zeros(2 * E, dtype=complex)
        der1[2 * k], der1[2 * k + 1] = dc, ds
        p = dp = 0.0
        if particular is not None:
            p, dp = particular(k)
        forms[(k, 0)] = (val0, 0.0, der0, 0.0)
        forms[(k, 1)] = (val1, p, der1, dp)
    return forms


def vertex_system(graph, z, boundary="dirichlet", Btilde=None, particular=None) -> VertexSystem:
    """Assemble continuity, Kirchhoff and boundary rows at ``z``.

    ``boundary`` is ``'dirichlet'``, ``'robin'`` (requires ``Btilde``) or
    ``'free'`` (no boundary condition rows).
    """
    z = complex(z)
    forms = _end_forms(graph, z, particular)
    bidx = {v: i for i, v in enumerate(graph.boundary)}
    rows, offs, kinds = [], [], []
    cond = {}
    for v in graph.vertices:
        ends = graph.ends(v)
        ref = forms[ends[0]]
        for end in ends[1:]:
            f = forms[end]
            rows.append(f[0] - ref[0])
            offs.append(f[1] - ref[1])
            kinds.append(("continuity", v))
        if v in bidx:
            if boundary == "dirichlet":
                cond[bidx[v]] = len(rows)
                rows.append(ref[0])
                offs.append(ref[1])
                kinds.append(("dirichlet", v))
            elif boundary == "robin":
                i = bidx[v]
                row = sum(forms[end][2] for end in ends)
                off = sum(forms[end][3] for end in ends)
                for j, w in enumerate(graph.boundary):
                    wref = forms[graph.ends(w)[0]]
                    row = row - Btilde[i, j] * wref[0]
                    off = off - Btilde[i, j] * wref[1]
                cond[i] = len(rows)
                rows.append(row)
                offs.append(off)
                kinds.append(("robin", v))
            elif boundary != "free":
                raise ContractError(f"unknown boundary mode {boundary!r}")
        else:
            rows.append(sum(forms[end][2] for end in ends))
            offs.append(sum(forms[end][3] for end in ends))
            kinds.append(("kirchhoff", v))
    M = np.array(rows, dtype=complex).reshape(len(rows), 2 * graph.n_edges)
    return VertexSystem(z, M, np.array(offs, dtype=complex), kinds, cond)


def _solve_system(sys_: VertexSystem, rhs):
    x = solve_dense(sys_.matrix, rhs)
    res = np.linalg.norm(sys_.matrix @ x - rhs)
    scale = np.linalg.norm(sys_.matrix, 2) * np.linalg.norm(x) + np.linalg.norm(rhs)
    return x, float(res / scale) if scale > 0 else 0.0


def _check_boundary_vector(graph, phi):
    phi = np.asarray(phi, dtype=complex).reshape(-1)
    if phi.shape[0] != graph.boundary_dim:
        raise ContractError(f"boundary vector has length {phi.shape[0]}, "
                            f"expected {graph.boundary_dim}")
    return phi


def _check_btilde(graph, Btilde):
    B = np.asarray(Btilde, dtype=complex)
    m = graph.boundary_dim
    if B.shape != (m, m):
        raise ContractError(f"Robin matrix must be {m}x{m}, got {B.shape}")
    if hermitian_defect(B) > 1e-10:
        raise ContractError("Robin matrix must be Hermitian")
    return B


def dirichlet_solve(graph, z, phi) -> EdgeSolution:
    """Solve ``-f'' = z f`` edge-wise with trace ``phi``, continuity and Kirchhoff inside.

    Raises
    ------
    SingularSystem
        When ``z`` is (numerically) a Dirichlet eigenvalue.
    """
    phi = _check_boundary_vector(graph, phi)
    sys_ = vertex_system(graph, z, "dirichlet")
    x, res = _solve_system(sys_, sys_.rhs(phi))
    return EdgeSolution(graph, z, x.reshape(-1, 2), res)


def trace_gamma0(graph, f) -> np.ndarray:
    """Boundary-vertex values of ``f`` in boundary order."""
    out = np.empty(graph.boundary_dim, dtype=complex)
    for i, v in enumerate(graph.boundary):
        e, side = graph.ends(v)[0]
        t = 0.0 if side == 0 else graph.lengths[e]
        out[i] = complex(np.asarray(f.value(e, np.array([t])))[0])
    return out


def normal_component(graph, eta) -> np.ndarray:
    """Sum of outward normal components of the 1-form ``eta`` at each boundary vertex."""
    out = np.zeros(graph.boundary_dim, dtype=complex)
    for i, v in enumerate(graph.boundary):
        for e, side in graph.ends(v):
            if side == 0:
                out[i] -= complex(np.asarray(eta.value(e, np.array([0.0])))[0])
            else:
                out[i] += complex(np.asarray(eta.value(e, np.array([graph.lengths[e]])))[0])
    return out


def normal_flux(graph, f) -> np.ndarray:
    """Outward normal derivative of ``f`` summed over incident edges, per boundary vertex."""
    return normal_component(graph, DerivativeFunction(f))


def _resolvent(graph, z, h, boundary, Btilde=None) -> ResolventSolution:
    if not isinstance(h, GraphFunction):
        h = CallableFunction(graph, h)
    sol = ResolventSolution(graph, z, h)

    def particular(k):
        p, dp = sol.particular(k, np.array([graph.lengths[k]]))
        return complex(p[0]), complex(dp[0])

    sys_ = vertex_system(graph, z, boundary, Btilde, particular)
    x, res = _solve_system(sys_, sys_.rhs())
    sol.coeffs = x.reshape(-1, 2)
    sol.vertex_residual = res
    return sol


def dirichlet_resolvent(graph, z, h) -> ResolventSolution:
    """``u = (Delta^D - z)^{-1} h``: zero trace, continuity and Kirchhoff inside."""
    return _resolvent(graph, z, h, "dirichlet")


def robin_resolvent_direct(graph, z, Btilde, h) -> ResolventSolution:
    """``u = (Delta_B - z)^{-1} h`` with boundary rows ``flux(u) = Btilde trace(u)``.

    Solvable whenever ``z`` is not a Robin eigenvalue; no Dirichlet exclusion needed.
    """
    B = _check_btilde(graph, Btilde)
    return _resolvent(graph, z, h, "robin", B)


def apply_operator(f: GraphFunction, z) -> CallableFunction:
    """``-f'' - z f`` from the function's own derivative representation."""
    z = complex(z)
    return CallableFunction(f.graph, lambda e, t: -f.deriv2(e, t) - z * f.value(e, t))


def vertex_residuals(graph, f, boundary="dirichlet", phi=None, Btilde=None) -> dict:
    """Largest violation of each vertex-condition family by the evaluated function."""
    vals = {}
    ders = {}
    for k, L in enumerate(graph.lengths):
        tt = np.array([0.0, L])
        v = np.asarray(f.value(k, tt))
        d = np.asarray(f.deriv(k, tt))
        vals[(k, 0)], vals[(k, 1)] = v[0], v[1]
        ders[(k, 0)], ders[(k, 1)] = -d[0], d[1]
    out = {"continuity": 0.0, "kirchhoff": 0.0, "boundary": 0.0}
    bidx = {v: i for i, v in enumerate(graph.boundary)}
    trace = trace_gamma0(graph, f)
    flux = normal_flux(graph, f)
    for v in graph.vertices:
        ends = graph.ends(v)
        ref = vals[ends[0]]
        for end in ends[1:]:
            out["continuity"] = max(out["continuity"], abs(vals[end] - ref))
        if v not in bidx:
            out["kirchhoff"] = max(out["kirchhoff"], abs(sum(ders[e] for e in ends)))
    if boundary == "dirichlet":
        target = np.zeros(graph.boundary_dim) if phi is None else np.asarray(phi)
        out["boundary"] = float(np.max(np.abs(trace - target)))
    elif boundary == "robin":
        out["boundary"] = float(np.max(np.abs(flux - np.asarray(Btilde) @ trace)))
    return out


# --------------------------------------------------------------------------
# spectra


def decoupled_dirichlet_count(graph, lam) -> int:
    """Eigenvalues below ``lam`` of the edge-wise decoupled Dirichlet problem."""
    if lam <= 0:
        return 0
    k = math.sqrt(lam)
    total = 0
    for L in graph.lengths:
        x = L * k / math.pi
        total += max(0, int(math.ceil(x)) - 1)
    return total


def _nudge_off_poles(graph, lam):
    if lam <= 0:
        return lam
    k = math.sqrt(lam)
    for L in graph.lengths:
        x = L * k / math.pi
        n = round(x)
        if n >= 1 and abs(x - n) < 1e-13 * max(1.0, x):
            return lam * (1.0 + 4e-13)
    return lam


def vertex_matrix(graph, z, active, Btilde=None) -> np.ndarray:
    """Vertex matrix of edge-wise solutions on the ``active`` vertices.

    Entry blocks per edge are ``(1/s)[[c, -1], [-1, c]]`` with ``c, s`` at the
    edge length; vertices outside ``active`` are clamped to zero. ``Btilde``
    is subtracted on the boundary block when given.
    """
    idx = {v: i for i, v in enumerate(active)}
    n = len(active)
    M = np.zeros((n, n), dtype=complex)
    for edge in graph.edges:
        c, s, _, _ = fundamental_pair(z, edge.length)
        u, v = edge.tail, edge.head
        if u == v:
            if u in idx:
                M[idx[u], idx[u]] += 2.0 * (c - 1.0) / s
            continue
        if u in idx:
            M[idx[u], idx[u]] += c / s
        if v in idx:
            M[idx[v], idx[v]] += c / s
        if u in idx and v in idx:
            M[idx[u], idx[v]] -= 1.0 / s
            M[idx[v], idx[u]] -= 1.0 / s
    if Btilde is not None:
        for i, v in enumerate(graph.boundary):
            for j, w in enumerate(graph.boundary):
                M[idx[v], idx[w]] -= Btilde[i, j]
    return M


def eigenvalue_count(graph, lam, boundary="dirichlet", Btilde=None) -> int:
    """Number of eigenvalues strictly below real ``lam``."""
    lam = _nudge_off_poles(graph, float(lam))
    if boundary == "dirichlet":
        active = graph.interior
        B = None
    else:
        active = graph.vertices
        B = Btilde
    n_neg = negative_count(vertex_matrix(graph, lam, active, B).real) if active else 0
    return decoupled_dirichlet_count(graph, lam) + n_neg


def _scan(count, matrix, window, grid):
    # the count is monotone, so a coarse grid cannot miss eigenvalues
    roots = scan_count_jumps(count, window, (), grid or 16, matrix=matrix)
    out = []
    for r in roots:
        x = polish_root(matrix, r.z, 1e-6 * (1.0 + abs(r.z)))
        out.append((x, max(r.multiplicity, numerical_nullity(matrix(x)))))
    return out


def dirichlet_spectrum(graph, window, grid=None):
    """Dirichlet eigenvalues (Kirchhoff inside) in ``window`` as ``[(lam, multiplicity)]``."""
    a, b = map(float, window)
    if a >= b:
        return []
    return _scan(lambda x: eigenvalue_count(graph, x, "dirichlet"),
                 lambda x: vertex_system(graph, x, "dirichlet").matrix, (a, b), grid)


def robin_spectrum_direct(graph, Btilde, window, grid=None):
    """Robin eigenvalues from the vertex-condition system, without any DtN map.

    Includes eigenvalues embedded in the Dirichlet spectrum.
    """
    B = _check_btilde(graph, Btilde)
    a, b = map(float, window)
    if a >= b:
        return []
    return _scan(lambda x: eigenvalue_count(graph, x, "robin", B),
                 lambda x: vertex_system(graph, x, "robin", B).matrix, (a, b), grid)


def defect_nullity(graph, z) -> int:
    """Dimension of edge-wise solutions at ``z`` with only interior vertex conditions."""
    sys_ = vertex_system(graph, z, "free")
    if sys_.matrix.shape[0] == 0:
        return 2 * graph.n_edges
    return 2 * graph.n_edges - int(np.linalg.matrix_rank(sys_.matrix, tol=1e-10
                                                         * np.linalg.norm(sys_.matrix, 2)))


# --------------------------------------------------------------------------
# random smooth test functions


def _hermite_poly(L, v0, d0, v1, d1):
    A = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [1, L, L ** 2, L ** 3], [0, 1, 2 * L, 3 * L ** 2]],
                 dtype=float)
    coef = np.linalg.solve(A, np.array([v0, d0, v1, d1], dtype=complex))
    return np.polynomial.Polynomial(coef)


def _crandn(rng, *shape, complex_=True):
    x = rng.standard_normal(shape)
    if complex_:
        x = x + 1j * rng.standard_normal(shape)
    return x


def random_smooth_function(graph, rng, *, zero_trace=False, kirchhoff=False, degree=3,
                           complex_=True) -> PolynomialFunction:
    """Random continuous polynomial function on the graph.

    ``zero_trace`` clamps boundary values; ``kirchhoff`` makes outward
    derivatives sum to zero at interior vertices (so the derivative lies in
    the divergence domain).
    """
    vval = {v: complex(_crandn(rng, complex_=complex_)) for v in graph.vertices}
    if zero_trace:
        for v in graph.boundary:
            vval[v] = 0.0
    outward = {}
    for v in graph.vertices:
        ends = graph.ends(v)
        d = _crandn(rng, len(ends), complex_=complex_)
        if kirchhoff and v not in graph.boundary:
            d = d - d.mean()
        for end, dv in zip(ends, d):
            outward[end] = complex(dv)
    polys = []
    t = np.polynomial.Polynomial([0.0, 1.0])
    for k, edge in enumerate(graph.edges):
        L = edge.length
        base = _hermite_poly(L, vval[edge.tail], -outward[(k, 0)], vval[edge.head],
                             outward[(k, 1)])
        bump = np.polynomial.Polynomial(_crandn(rng, degree + 1, complex_=complex_))
        polys.append(base + (t * (L - t)) ** 2 * bump)
    return PolynomialFunction(graph, polys)


def random_smooth_form(graph, rng, *, kirchhoff=True, degree=4, complex_=True):
    """Random polynomial 1-form whose normal components sum to zero at interior vertices."""
    normal = {}
    for v in graph.vertices:
        ends = graph.ends(v)
        d = _crandn(rng, len(ends), complex_=complex_)
        if kirchhoff and v not in graph.boundary:
            d = d - d.mean()
        for end, dv in zip(ends, d):
            normal[end] = complex(dv)
    polys = []
    t = np.polynomial.Polynomial([0.0, 1.0])
    for k, edge in enumerate(graph.edges):
        L = edge.length
        v0, v1 = -normal[(k, 0)], normal[(k, 1)]
        lin = np.polynomial.Polynomial([v0, (v1 - v0) / L])
        bump = np.polynomial.Polynomial(_crandn(rng, degree + 1, complex_=complex_))
        polys.append(lin + t * (L - t) * bump)
    return PolynomialFunction(graph, polys)
