"""Dirac-type operator ``D(f0, f1) = (-f1', f0')`` on a single interval.

On an interval 1-forms are identified with functions, ``d = d/dx`` and
``delta = -d/dx``. The boundary maps are ``Gamma0(f0, f1) = trace(f0)`` and
``Gamma1(f0, f1) = Lambda^{-1} normal(f1)``, where ``normal`` takes the outward
normal component ``(-f1(0), f1(L))``. Boundary pairings use the metric
``<phi, Lambda psi>``.

The two form Laplacians that appear in resolvents are ordinary interval
problems: the Dirichlet realization in degree 1 carries Neumann endpoint
conditions, and the Neumann realization in degree 1 carries Dirichlet
endpoint conditions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import dtn, lambda_metric, q0, scaled_tol, spectral_point
from .errors import ConfigurationError, ContractError, DomainError, NearDirichletSpectrum
from .metric_graph import (
    DerivativeFunction,
    GraphFunction,
    MetricGraph,
    defect_nullity,
    dirichlet_resolvent,
    dirichlet_solve,
    inner_product,
    normal_component,
    robin_resolvent_direct,
    trace_gamma0,
)


def require_interval(model) -> MetricGraph:
    if not (isinstance(model, MetricGraph) and model.is_interval):
        raise ConfigurationError("dirac requires a single-interval model", path="type")
    return model


def _nonzero(w) -> complex:
    w = complex(w)
    if w == 0:
        raise DomainError("w must be non-zero")
    return w


@dataclass
class FormPair:
    """``(f0, f1)``: a function and a 1-form on the interval.

    ``in_kernel_at`` records ``w`` when the pair was constructed in ``ker(D - w)``.
    """

    f0: GraphFunction
    f1: GraphFunction
    in_kernel_at: Optional[complex] = None

    @property
    def graph(self) -> MetricGraph:
        return self.f0.graph

    def apply_d(self) -> "FormPair":
        return FormPair(-DerivativeFunction(self.f1), DerivativeFunction(self.f0))

    def __add__(self, other):
        return FormPair(self.f0 + other.f0, self.f1 + other.f1)

    def __sub__(self, other):
        return FormPair(self.f0 - other.f0, self.f1 - other.f1)

    def __mul__(self, c):
        return FormPair(c * self.f0, c * self.f1, self.in_kernel_at)

    __rmul__ = __mul__

    def sample(self, points: int = 101):
        t = np.linspace(0.0, self.graph.lengths[0], points)
        return (np.asarray(self.f0.value(0, t), dtype=complex),
                np.asarray(self.f1.value(0, t), dtype=complex))


def pair_inner(a: FormPair, b: FormPair) -> complex:
    g = a.graph
    return inner_product(g, a.f0, b.f0) + inner_product(g, a.f1, b.f1)


def graph_inner(a: FormPair, b: FormPair) -> complex:
    """Graph-norm inner product ``<a, b> + <Da, Db>``."""
    return pair_inner(a, b) + pair_inner(a.apply_d(), b.apply_d())


def sup_distance(a: FormPair, b: FormPair, points: int = 101) -> float:
    a0, a1 = a.sample(points)
    b0, b1 = b.sample(points)
    return float(max(np.max(np.abs(a0 - b0)), np.max(np.abs(a1 - b1))))


def eigen_residual(pair: FormPair, w, points: int = 101) -> float:
    """``sup |D pair - w pair|`` over uniform sample points."""
    return sup_distance(pair.apply_d(), complex(w) * pair, points)


def gamma0(pair: FormPair) -> np.ndarray:
    return trace_gamma0(pair.graph, pair.f0)


def gamma1(pair: FormPair) -> np.ndarray:
    return lambda_metric(pair.graph).solve(normal_component(pair.graph, pair.f1))


def _ode_residual(f: GraphFunction, z, points=11) -> float:
    t = np.linspace(0.0, f.graph.lengths[0], points)
    v = np.asarray(f.value(0, t))
    r = np.asarray(-f.deriv2(0, t) - z * v)
    return float(np.max(np.abs(r)) / max(1.0, np.max(np.abs(v))))


def psi_map(model, w, p: int, f: GraphFunction, check: bool = True) -> FormPair:
    """``psi_0 f = (f, f'/w)/sqrt 2`` and ``psi_1 f = (-f'/w, f)/sqrt 2``.

    Raises
    ------
    DomainError
        If ``w = 0``.
    ContractError
        If ``f`` does not solve ``-f'' = w^2 f`` to tolerance (when ``check``).
    """
    require_interval(model)
    w = _nonzero(w)
    if p not in (0, 1):
        raise ContractError(f"degree must be 0 or 1, got {p}")
    if check:
        res = _ode_residual(f, w * w)
        if res > scaled_tol(1e-8) * (1.0 + abs(w * w)):
            raise ContractError(f"element is not a solution at w^2 (residual {res:.2e})")
    r = 1.0 / math.sqrt(2.0)
    df = DerivativeFunction(f)
    if p == 0:
        return FormPair(r * f, (r / w) * df, w)
    return FormPair((-r / w) * df, r * f, w)


def beta_w(model, w, phi) -> FormPair:
    """Gamma-field ``sqrt 2 psi_0(w) beta0(w^2) phi = (h, h'/w)`` with ``h`` the Dirichlet solution."""
    require_interval(model)
    w = _nonzero(w)
    dtn(model, w * w)
    h = dirichlet_solve(model, w * w, phi)
    return FormPair(h, (1.0 / w) * DerivativeFunction(h), w)


def q_w(model, w) -> np.ndarray:
    """``Q(w) = Q0(w^2) / w``."""
    require_interval(model)
    w = _nonzero(w)
    return q0(model, w * w) / w


def q_w_direct(model, w) -> np.ndarray:
    """``Q(w)`` recomputed as ``Gamma1 beta_w`` column by column."""
    require_interval(model)
    m = model.boundary_dim
    cols = [gamma1(beta_w(model, w, np.eye(m)[:, j])) for j in range(m)]
    return np.column_stack(cols)


def dirac_dirichlet_resolvent(model, w, pair: FormPair) -> FormPair:
    """``(D^Dir - w)^{-1} pair = (D + w)(R0 g0, R1 g1)``.

    ``R0`` is the Dirichlet resolvent at ``w^2``; ``R1`` is the degree-1
    Dirichlet resolvent, i.e. the interval Laplacian with Neumann endpoints.

    Raises
    ------
    SingularSystem
        If ``w^2`` is an eigenvalue of either block.
    """
    require_interval(model)
    w = complex(w)
    z = w * w
    sp = spectral_point(model, z)
    if not sp.is_generic:
        raise NearDirichletSpectrum(z, sp.distance)
    u0 = dirichlet_resolvent(model, z, pair.f0)
    u1 = robin_resolvent_direct(model, z, np.zeros((2, 2)), pair.f1)
    du0, du1 = DerivativeFunction(u0), DerivativeFunction(u1)
    return FormPair(-du1 + w * u0, du0 + w * u1)


def apply_dirac_minus(pair: FormPair, w) -> FormPair:
    """``(D - w) pair``."""
    return pair.apply_d() - complex(w) * pair


def ordinary_green_residual(f: FormPair, g: FormPair) -> float:
    """``|<Df, g> - <f, Dg> - <G0 f, G1 g> + <G1 f, G0 g>|`` with the boundary metric."""
    metric = lambda_metric(f.graph)
    lhs = pair_inner(f.apply_d(), g) - pair_inner(f, g.apply_d())
    rhs = metric.inner(gamma0(f), gamma1(g)) - metric.inner(gamma1(f), gamma0(g))
    return float(abs(lhs - rhs))


def gamma_field_residual(model, w1, w2, phi, points: int = 101) -> float:
    """``sup |beta(w1) phi - beta(w2) phi - (w1 - w2)(D^Dir - w1)^{-1} beta(w2) phi|``."""
    b1 = beta_w(model, w1, phi)
    b2 = beta_w(model, w2, phi)
    r = dirac_dirichlet_resolvent(model, w1, b2)
    return sup_distance(b1, b2 + (complex(w1) - complex(w2)) * r, points)


def beta_gram(model, w1, w2) -> np.ndarray:
    """``Lambda^{-1} H`` with ``H_jk = <beta(w2) e_j, beta(w1) e_k>``: the matrix of ``beta(w2)^* beta(w1)``."""
    m = model.boundary_dim
    b1 = [beta_w(model, w1, np.eye(m)[:, k]) for k in range(m)]
    b2 = [beta_w(model, w2, np.eye(m)[:, j]) for j in range(m)]
    H = np.array([[pair_inner(b2[j], b1[k]) for k in range(m)] for j in range(m)])
    return lambda_metric(model).solve(H)


def _g12_norm(model, A) -> float:
    metric = lambda_metric(model)
    return float(np.linalg.norm(metric.power(0.5) @ A @ metric.power(-0.5), 2))


def q_identity_residual(model, w1, w2, sign: int) -> float:
    """Norm of ``Q(w1) - Q(conj w2)^* - sign (w1 - w2) beta(conj w2)^* beta(w1)``.

    Adjoints and the operator norm are taken in the boundary metric.
    """
    if sign not in (1, -1):
        raise ContractError("sign must be +1 or -1")
    w1, w2 = complex(w1), complex(w2)
    metric = lambda_metric(model)
    lhs = q_w(model, w1) - metric.adjoint(q_w(model, w2.conjugate()))
    rhs = (w1 - w2) * beta_gram(model, w1, w2.conjugate())
    return _g12_norm(model, lhs - sign * rhs)


def _projection_p(model, z, f):
    """``f - R(z)(Delta - z) f`` on the interval (same formula in both degrees)."""
    lf = -DerivativeFunction(DerivativeFunction(f))
    return f - dirichlet_resolvent(model, z, lf - z * f)


def pw_projection_apply(model, w, pair: FormPair) -> FormPair:
    """Projection onto ``ker(D - w)``::

        P = 1/2 [[P0, delta P1 / w], [d P0 / w, P1]]

    with ``P0, P1`` the degree-wise projections at ``w^2``. On the interval
    the degree-1 projection uses the Laplacian with Dirichlet endpoints, so
    both reduce to the same formula.
    """
    require_interval(model)
    w = _nonzero(w)
    z = w * w
    dtn(model, z)
    p0 = _projection_p(model, z, pair.f0)
    p1 = _projection_p(model, z, pair.f1)
    a = 0.5 * p0 + (-0.5 / w) * DerivativeFunction(p1)
    b = (0.5 / w) * DerivativeFunction(p0) + 0.5 * p1
    return FormPair(a, b, w)


def intrinsic_gamma1(model, f1: GraphFunction) -> np.ndarray:
    """``-trace(delta P1 f1)`` with ``P1`` the degree-1 projection at ``z = -1``."""
    p1 = _projection_p(model, -1.0, f1)
    return trace_gamma0(model, DerivativeFunction(p1))


def defect_dimensions(model) -> tuple:
    """``(dim ker(D - i), dim ker(D + i))`` from the free solution space at ``w^2 = -1``."""
    require_interval(model)
    return defect_nullity(model, (1j) ** 2), defect_nullity(model, (-1j) ** 2)


def boundary_surjectivity_rank(model) -> int:
    """Rank of ``(Gamma0, Gamma1)`` on ``ker(D - i) + ker(D + i)``."""
    require_interval(model)
    from .metric_graph import EdgeSolution

    cols = []
    for w in (1j, -1j):
        for coeffs in ([1.0, 0.0], [0.0, 1.0]):
            f = EdgeSolution(model, w * w, [coeffs])
            pair = psi_map(model, w, 0, f)
            cols.append(np.concatenate([gamma0(pair), gamma1(pair)]))
    M = np.column_stack(cols)
    return int(np.linalg.matrix_rank(M, tol=1e-10 * np.linalg.norm(M, 2)))


# --------------------------------------------------------------------------
# suite


def _random_pair(model, rng):
    from .metric_graph import random_smooth_function

    return FormPair(random_smooth_function(model, rng), random_smooth_function(model, rng))


def dirac_suite(model, *, seed: int = 0, samples: int = 10):
    """Run the Dirac-operator checks and return a :class:`VerificationReport`."""
    from .core import Check, VerificationReport, _run
    from .metric_graph import EdgeSolution

    require_interval(model)
    rng = np.random.default_rng(seed)
    rep = VerificationReport()
    upper = [complex(a, b) for a in (-1.0, 0.5) for b in (0.5, 2.0)]

    def c_psi():
        worst = 0.0
        for _ in range(samples):
            w = complex(rng.uniform(-2, 2), rng.uniform(0.3, 2))
            f = EdgeSolution(model, w * w, [rng.standard_normal(2) + 1j * rng.standard_normal(2)])
            for p in (0, 1):
                pair = psi_map(model, w, p, f)
                scale = max(1.0, np.max(np.abs(np.concatenate(pair.sample()))))
                worst = max(worst, eigen_residual(pair, w) / scale)
        return Check.measured("psi.eigen_residual", "lem:iso.psi", worst, scaled_tol(1e-9))

    def c_unitary():
        worst = 0.0
        for w in (1j, -1j):
            f = EdgeSolution(model, -1.0, [rng.standard_normal(2) + 1j * rng.standard_normal(2)])
            h1 = (inner_product(model, f, f)
                  + inner_product(model, DerivativeFunction(f), DerivativeFunction(f))).real
            for p in (0, 1):
                pair = psi_map(model, w, p, f)
                worst = max(worst, abs(graph_inner(pair, pair).real - h1) / h1)
        return Check.measured("psi.unitary", "lem:iso.psi", worst, scaled_tol(1e-9))

    def c_defect():
        d = defect_dimensions(model)
        check = Check.measured("defect.dimensions", "cor:def.ind", float(abs(d[0] - d[1])), 0.0,
                               dimensions=list(d))
        if d[0] != model.boundary_dim:
            check.status = "fail"
        return check

    def c_surj():
        r = boundary_surjectivity_rank(model)
        return Check.measured("boundary.surjectivity", "def:bd.triple",
                              float(2 * model.boundary_dim - r), 0.0, rank=r)

    def c_green():
        worst = 0.0
        for _ in range(samples):
            worst = max(worst, ordinary_green_residual(_random_pair(model, rng),
                                                       _random_pair(model, rng)))
        return Check.measured("ordinary.green", "def:bd.triple", worst, scaled_tol(1e-8))

    def c_gamma():
        worst = 0.0
        for w1 in upper:
            for w2 in upper:
                phi = rng.standard_normal(2) + 1j * rng.standard_normal(2)
                worst = max(worst, gamma_field_residual(model, w1, w2, phi))
        return Check.measured("gamma_field.transition", "lem:krein.g3", worst, scaled_tol(1e-8))

    def c_qi():
        res = float(np.linalg.norm(q_w(model, 1j) + 1j * np.eye(2), 2))
        return Check.measured("q_w.at_i", "lem:krein.q3", res, scaled_tol(1e-10))

    def c_q_routes():
        worst = 0.0
        for w in upper + [1.0, 0.7 + 0.2j]:
            a, b = q_w(model, w), q_w_direct(model, w)
            worst = max(worst, float(np.linalg.norm(a - b, 2) / np.linalg.norm(a, 2)))
        return Check.measured("q_w.two_routes", "lem:krein.q3", worst, scaled_tol(1e-9))

    def c_qid():
        pairs = [(1j, -1j), (2j, 1j), (1j, 2j), (0.5 + 1j, -1 + 0.5j), (1 + 2j, 0.3 - 1j)]
        res = {1: 0.0, -1: 0.0}
        for w1, w2 in pairs:
            for sgn in (1, -1):
                res[sgn] = max(res[sgn], q_identity_residual(model, w1, w2, sgn))
        tol = scaled_tol(1e-8)
        winners = [s for s in (1, -1) if res[s] <= tol]
        sign = winners[0] if len(winners) == 1 else None
        check = Check.measured("q_identity.sign", "lem:krein.q3",
                               res[sign] if sign else min(res.values()), tol,
                               sign=sign, residual_plus=res[1], residual_minus=res[-1])
        if sign is None:
            check.status = "fail"
        return check

    def c_pw():
        worst_idem = worst_orth = worst_fix = 0.0
        for w in (1j, -1j, 0.5 + 1j):
            pair = _random_pair(model, rng)
            p = pw_projection_apply(model, w, pair)
            pp = pw_projection_apply(model, w, p)
            worst_idem = max(worst_idem, sup_distance(pp, p))
            worst_fix = max(worst_fix, eigen_residual(p, w))
            if abs(abs(complex(w)) - 1) < 1e-14 and complex(w).real == 0:
                num = abs(graph_inner(pair - p, p))
                den = math.sqrt(graph_inner(pair, pair).real * graph_inner(p, p).real)
                worst_orth = max(worst_orth, num / den)
        return Check.measured("pw.projection", "lem:osum3", max(worst_idem, worst_orth, worst_fix),
                              scaled_tol(1e-9), idempotence=worst_idem, orthogonality=worst_orth,
                              kernel_residual=worst_fix)

    def c_intrinsic():
        from .metric_graph import random_smooth_function
        worst = 0.0
        for _ in range(samples):
            f1 = random_smooth_function(model, rng)
            a = intrinsic_gamma1(model, f1)
            b = lambda_metric(model).solve(normal_component(model, f1))
            worst = max(worst, float(np.linalg.norm(a - b) / np.linalg.norm(b)))
        return Check.measured("gamma1.intrinsic", "lem:g1.ker", worst, scaled_tol(1e-9))

    for name, anchor, fn in [
        ("psi.eigen_residual", "lem:iso.psi", c_psi),
        ("psi.unitary", "lem:iso.psi", c_unitary),
        ("defect.dimensions", "cor:def.ind", c_defect),
        ("boundary.surjectivity", "def:bd.triple", c_surj),
        ("ordinary.green", "def:bd.triple", c_green),
        ("gamma_field.transition", "lem:krein.g3", c_gamma),
        ("q_w.at_i", "lem:krein.q3", c_qi),
        ("q_w.two_routes", "lem:krein.q3", c_q_routes),
        ("q_identity.sign", "lem:krein.q3", c_qid),
        ("pw.projection", "lem:osum3", c_pw),
        ("gamma1.intrinsic", "lem:g1.ker", c_intrinsic),
    ]:
        _run(rep, name, anchor, fn)
    return rep
