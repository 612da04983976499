"""Vector fields along geodesics and derivatives of pulled-back exponentials.

Two kinds of expansion live here:

  * field_endpoint_expansion: the third-order value of a vector field W at
    the endpoint of a unit-time geodesic, from its covariant jet at the start;
  * log_pullback_derivatives: the first three derivatives in epsilon of
    zeta(eps) = exp_{y(0)}^{-1}(exp_{y(eps)} V(eps)) for a curve y and a field
    V along it, each with an O(gamma^4) remainder dropped.

The module also carries the numerical oracles used to verify both: direct
integration of the Jacobi equation, and finite-difference differentiation of
zeta realized through integrated exponentials and Newton logs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .charts import Chart, CurveJet, curvature, geodesic_integrate, log_newton

Array = np.ndarray


@dataclass(frozen=True)
class FieldJet3:
    """Covariant t-jet of a field W along a geodesic at t = 0.

    Z0 is the covariant derivative of W, n2 and n3 the second and third
    covariant derivatives; the expansion reads the derivative of Z as n2.
    """

    W0: Array
    Z0: Array
    n2: Array
    n3: Array


@dataclass(frozen=True)
class VariationJet:
    """Covariant eps-jet of a field V along a curve at eps = 0."""

    V0: Array
    nV1: Array
    nV2: Array
    nV3: Array


def _ap(gamma: Array, a: Array, b: Array) -> Array:
    return np.einsum("...kij,...i,...j->...k", gamma, a, b)


def field_endpoint_expansion(chart: Chart, b0: Array, V: Array, jet: FieldJet3) -> Array:
    """Endpoint value W(1) of a field along the geodesic with velocity V.

    Third-order accurate when all jet magnitudes and |V| are O(gamma); the
    connector block uses the start-point connector and its derivative only.
    """
    chart.check_domain(b0)
    b0 = np.asarray(b0, dtype=float)
    V = np.asarray(V, dtype=float)
    W, Z, n2, n3 = (np.asarray(a, dtype=float) for a in (jet.W0, jet.Z0, jet.n2, jet.n3))
    WZ = W + Z
    G = chart.connector(b0)
    intrinsic = W + Z + 0.5 * n2 + n3 / 6.0 + 0.5 * curvature(chart, b0, V, WZ, V)
    correction = (
        -_ap(G, WZ + 0.5 * n2, V)
        + _ap(G, _ap(G, V, WZ), V)
        - 0.5 * _ap(chart.connector_derivative(b0, WZ), V, V)
    )
    return intrinsic + correction


def jacobi_integrate(
    chart: Chart, b0: Array, V: Array, J0: Array, nJ0: Array, steps: int = 512
) -> Array:
    """J(1) from RK4 integration of the Jacobi equation along the geodesic.

    The covariant system is rewritten in coordinates with K = DJ/dt:
    J' = K - G(J, b'), K' = -R(b', J)b' - G(K, b').
    """
    chart.check_domain(b0)
    y = np.array(np.asarray(b0, dtype=float), copy=True)
    v = np.array(np.asarray(V, dtype=float), copy=True)
    y, v, J, K = (np.array(a) for a in np.broadcast_arrays(y, v, np.asarray(J0, dtype=float), np.asarray(nJ0, dtype=float)))

    def rhs(y, v, J, K):
        G = chart.connector(y)
        dy = v
        dv = -_ap(G, v, v)
        dJ = K - _ap(G, J, v)
        dK = -curvature(chart, y, v, J, v) - _ap(G, K, v)
        return dy, dv, dJ, dK

    h = 1.0 / steps
    state = (y, v, J, K)
    for _ in range(steps):
        k1 = rhs(*state)
        k2 = rhs(*(s + 0.5 * h * d for s, d in zip(state, k1)))
        k3 = rhs(*(s + 0.5 * h * d for s, d in zip(state, k2)))
        k4 = rhs(*(s + h * d for s, d in zip(state, k3)))
        state = tuple(
            s + (h / 6.0) * (a + 2 * b + 2 * c + d)
            for s, a, b, c, d in zip(state, k1, k2, k3, k4)
        )
        chart.check_domain(state[0], context="jacobi geodesic")
    return state[2]


def log_pullback_derivatives(chart: Chart, curve: CurveJet, var: VariationJet):
    """First three eps-derivatives of exp_{y(0)}^{-1}(exp_{y(eps)} V(eps)).

    Returns (z1, z2, z3), each dropping the O(gamma^4) remainder; curve and
    variation jets must be attached at the same base point.
    """
    y0 = np.asarray(curve.y, dtype=float)
    chart.check_domain(y0)
    yp = np.asarray(curve.yp, dtype=float)
    nyp = np.asarray(curve.nabla_yp, dtype=float)
    n2yp = np.asarray(curve.nabla2_yp, dtype=float)
    V = np.asarray(var.V0, dtype=float)
    nV1 = np.asarray(var.nV1, dtype=float)
    nV2 = np.asarray(var.nV2, dtype=float)
    nV3 = np.asarray(var.nV3, dtype=float)

    def R(a, b, c):
        return curvature(chart, y0, a, b, c)

    z1 = yp + nV1 - R(V, yp, V) / 3.0
    z2 = (
        nyp
        + nV2
        - R(V, nyp, V) / 3.0
        - 2.0 / 3.0 * R(nV1, yp, V)
        + R(yp, V, yp + 2.0 * nV1) / 3.0
    )
    z3 = (
        n2yp
        + nV3
        + R(yp, nV1, yp + 2.0 * nV1)
        + R(yp, V, nyp + 2.0 * nV2)
        + R(V, nV2, yp)
        + R(V, nV1, nyp)
        + 2.0 * R(nyp, V, nV1)
        - R(V, n2yp, V) / 3.0
    )
    return z1, z2, z3


# ---------------------------------------------------------------------------
# oracle machinery: polynomial curve/field realizations and their jets
# ---------------------------------------------------------------------------


def second_connector_derivative(chart: Chart, x: Array, d: Array, h: float = 1e-4) -> Array:
    """Directional second derivative D^2 Gamma(x)(d, d) by differencing the gradient."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    nd = np.linalg.norm(d, axis=-1, keepdims=True)
    unit = np.where(nd > 0, d / np.maximum(nd, 1e-300), 0.0)
    gp = chart.connector_grad(x + h * unit)
    gm = chart.connector_grad(x - h * unit)
    dgrad = (gp - gm) / (2.0 * h) * nd[..., None, None, None]
    return np.einsum("...kijl,...l->...kij", dgrad, d)


def eval_poly(coeffs: Array, eps) -> Array:
    """Evaluate c0 + eps c1 + eps^2/2 c2 + eps^3/6 c3; eps may be an array."""
    c = np.asarray(coeffs, dtype=float)
    e = np.asarray(eps, dtype=float)[..., None]
    return c[..., 0, :] + e * c[..., 1, :] + (e**2 / 2.0) * c[..., 2, :] + (e**3 / 6.0) * c[..., 3, :]


def eval_poly_derivative(coeffs: Array, eps) -> Array:
    c = np.asarray(coeffs, dtype=float)
    e = np.asarray(eps, dtype=float)[..., None]
    return c[..., 1, :] + e * c[..., 2, :] + (e**2 / 2.0) * c[..., 3, :]


def polynomial_jets(chart: Chart, y_coeffs: Array, v_coeffs: Array):
    """Covariant jets at eps = 0 of cubic coordinate polynomials y(eps), V(eps).

    Coefficient arrays have shape (..., 4, p) in the 1, eps, eps^2/2, eps^3/6
    basis.  Returns (CurveJet, VariationJet) matching log_pullback_derivatives'
    inputs; the third variation jet needs a second connector derivative, which
    is synthesized by finite differences.
    """
    yc = np.asarray(y_coeffs, dtype=float)
    vc = np.asarray(v_coeffs, dtype=float)
    c0, c1, c2, c3 = (yc[..., k, :] for k in range(4))
    d0, d1, d2, d3 = (vc[..., k, :] for k in range(4))
    chart.check_domain(c0)
    G = chart.connector(c0)
    dG_c1 = chart.connector_derivative(c0, c1)
    dG_c2 = chart.connector_derivative(c0, c2)
    d2G = second_connector_derivative(chart, c0, c1)

    # curve jets
    n1y = c2 + _ap(G, c1, c1)
    d1y_prime = c3 + _ap(dG_c1, c1, c1) + 2.0 * _ap(G, c2, c1)
    n2y = d1y_prime + _ap(G, n1y, c1)

    # variation jets: D1 = V' + G(V, y'), differentiated twice in eps
    nV1 = d1 + _ap(G, d0, c1)
    D1p = d2 + _ap(dG_c1, d0, c1) + _ap(G, d1, c1) + _ap(G, d0, c2)
    nV2 = D1p + _ap(G, nV1, c1)
    D1pp = (
        d3
        + _ap(d2G, d0, c1)
        + _ap(dG_c2, d0, c1)
        + 2.0 * _ap(dG_c1, d1, c1)
        + 2.0 * _ap(dG_c1, d0, c2)
        + _ap(G, d2, c1)
        + 2.0 * _ap(G, d1, c2)
        + _ap(G, d0, c3)
    )
    D2p = D1pp + _ap(dG_c1, nV1, c1) + _ap(G, D1p, c1) + _ap(G, nV1, c2)
    nV3 = D2p + _ap(G, nV2, c1)

    curve = CurveJet(y=c0, yp=c1, nabla_yp=n1y, nabla2_yp=n2y)
    var = VariationJet(V0=d0, nV1=nV1, nV2=nV2, nV3=nV3)
    return curve, var


def log_pullback_fd(
    chart: Chart,
    y_coeffs: Array,
    v_coeffs: Array,
    eps0: float = 1e-2,
    steps: int = 256,
    tol: float = 5e-14,
):
    """Finite-difference derivatives of zeta(eps) realized numerically.

    zeta(eps) is evaluated on a 7-point stencil through integrated
    exponentials and Newton logs; 5-point formulas give the first two
    derivatives and the 7-point formula the third.  Broadcasts over leading
    axes of the coefficient arrays.
    """
    yc = np.asarray(y_coeffs, dtype=float)
    vc = np.asarray(v_coeffs, dtype=float)
    lead = yc.shape[:-2]
    offsets = np.arange(-3, 4) * eps0

    vals = []
    for off in offsets:
        y_eps = eval_poly(yc, np.broadcast_to(off, lead))
        v_eps = eval_poly(vc, np.broadcast_to(off, lead))
        z_pt, _ = geodesic_integrate(chart, y_eps, v_eps, 1.0, steps=steps)
        vals.append(log_newton(chart, yc[..., 0, :], z_pt, steps=steps, tol=tol))
    f = np.stack(vals, axis=0)  # (7, ..., p)

    fm3, fm2, fm1, f0, fp1, fp2, fp3 = f
    d1 = (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * eps0)
    d2 = (-fp2 + 16.0 * fp1 - 30.0 * f0 + 16.0 * fm1 - fm2) / (12.0 * eps0**2)
    d3 = (fm3 - 8.0 * fm2 + 13.0 * fm1 - 13.0 * fp1 + 8.0 * fp2 - fp3) / (8.0 * eps0**3)
    return d1, d2, d3
