"""Chart-based differential geometry.

A manifold is described by a single chart: coordinates live in R^p and the
connection is encoded by a local connector Gamma(x), a bilinear map stored as
an array G[k, i, j] so that Gamma(x)(u (x) v)^k = G[k, i, j] u^i v^j.  All
operations broadcast over leading axes, so points may be passed as (p,) or
(n, p) arrays.

Conventions:
  - connectors are torsion free: G[k, i, j] == G[k, j, i];
  - the curvature tensor follows the convention in which, on the unit sphere,
    R(u, v)v = -u for orthonormal u, v, and the sectional curvature of the
    plane spanned by orthonormal u, v is <R(u, v)u, v>_g.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

Array = np.ndarray


class ChartDomainError(ValueError):
    """Raised when a point or trajectory leaves the chart's valid domain."""


class NewtonConvergenceError(RuntimeError):
    """Raised when the iterative inverse exponential fails to converge."""

    def __init__(self, message, sample_index=None):
        super().__init__(message)
        self.sample_index = sample_index


def _always_true(x: Array) -> Array:
    return np.ones(np.shape(x)[:-1], dtype=bool)


@dataclass(frozen=True)
class Chart:
    """Local-coordinate manifold description.

    connector(x) returns Gamma with shape (..., p, p, p); connector_gradient,
    when available, returns the coordinate derivative with shape
    (..., p, p, p, p) where the trailing axis indexes the differentiation
    direction.  When connector_gradient is None the directional derivative is
    synthesized by central finite differences with step fd_step * max(1, |x|).
    """

    dim: int
    connector: Callable[[Array], Array]
    connector_gradient: Optional[Callable[[Array], Array]] = None
    metric: Optional[Callable[[Array], Array]] = None
    domain_guard: Callable[[Array], Array] = _always_true
    name: str = "chart"
    flat: bool = False
    fd_step: float = 1e-5

    def check_domain(self, x: Array, context: str = "point") -> None:
        ok = np.asarray(self.domain_guard(np.asarray(x, dtype=float)))
        if not np.all(ok):
            bad = int(np.argmax(~np.atleast_1d(ok)))
            raise ChartDomainError(
                f"{context} outside domain of chart '{self.name}' (first offender index {bad})"
            )

    def connector_grad(self, x: Array) -> Array:
        """Full coordinate gradient of the connector, shape (..., p, p, p, p)."""
        x = np.asarray(x, dtype=float)
        if self.connector_gradient is not None:
            return self.connector_gradient(x)
        p = self.dim
        h = self.fd_step * np.maximum(1.0, np.linalg.norm(x, axis=-1))
        h = h[..., None]
        cols = []
        for l in range(p):
            e = np.zeros(p)
            e[l] = 1.0
            gp = self.connector(x + h * e)
            gm = self.connector(x - h * e)
            cols.append((gp - gm) / (2.0 * h[..., None, None]))
        return np.stack(cols, axis=-1)

    def connector_derivative(self, x: Array, v: Array) -> Array:
        """Directional derivative DGamma(x)(v), shape (..., p, p, p)."""
        return np.einsum("...kijl,...l->...kij", self.connector_grad(x), v)

    def norm(self, x: Array, v: Array) -> Array:
        """Metric norm of a tangent vector; requires a metric."""
        g = self.metric(np.asarray(x, dtype=float))
        return np.sqrt(np.einsum("...i,...ij,...j->...", v, g, v))


def _apply(gamma: Array, a: Array, b: Array) -> Array:
    return np.einsum("...kij,...i,...j->...k", gamma, a, b)


def covariant_derivative(chart: Chart, y: Array, yp: Array, V: Array, Vp: Array) -> Array:
    """Covariant derivative of a field V along a curve: V' + Gamma(y)(V (x) y')."""
    chart.check_domain(y)
    return np.asarray(Vp, dtype=float) + _apply(chart.connector(np.asarray(y, dtype=float)), V, yp)


def curvature(chart: Chart, x: Array, u: Array, v: Array, w: Array) -> Array:
    """Curvature tensor R(u, v)w assembled from the connector and its derivative.

    R(u, v)w = DG(v)(w (x) u) - DG(u)(w (x) v) + G(G(w (x) u) (x) v) - G(G(w (x) v) (x) u).
    The expression is alternating in u and v exactly, not just to rounding.
    """
    chart.check_domain(x)
    x = np.asarray(x, dtype=float)
    G = chart.connector(x)
    dG = chart.connector_grad(x)
    dGv = np.einsum("...kijl,...l->...kij", dG, v)
    dGu = np.einsum("...kijl,...l->...kij", dG, u)
    t1 = _apply(dGv, w, u)
    t2 = _apply(dGu, w, v)
    t3 = _apply(G, _apply(G, w, u), v)
    t4 = _apply(G, _apply(G, w, v), u)
    return (t1 - t2) + (t3 - t4)


def sectional_curvature(chart: Chart, x: Array, u: Array, v: Array) -> Array:
    """Sectional curvature of span(u, v) for a metric chart."""
    if chart.metric is None:
        raise ValueError("sectional curvature requires a metric")
    g = chart.metric(np.asarray(x, dtype=float))
    Ruvu = curvature(chart, x, u, v, u)
    num = np.einsum("...i,...ij,...j->...", Ruvu, g, v)
    uu = np.einsum("...i,...ij,...j->...", u, g, u)
    vv = np.einsum("...i,...ij,...j->...", v, g, v)
    uv = np.einsum("...i,...ij,...j->...", u, g, v)
    return num / (uu * vv - uv**2)


def exp_taylor(chart: Chart, y: Array, v: Array, t: float) -> Array:
    """Third-order expansion of the exponential map in chart coordinates."""
    chart.check_domain(y)
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    G = chart.connector(y)
    Gvv = _apply(G, v, v)
    cubic = 2.0 * _apply(G, Gvv, v) - _apply(chart.connector_derivative(y, v), v, v)
    out = y + t * v - (t**2 / 2.0) * Gvv + (t**3 / 6.0) * cubic
    chart.check_domain(out, context="exp_taylor result")
    return out


def log_taylor(chart: Chart, y: Array, z: Array) -> Array:
    """Third-order expansion of the inverse exponential map; w = z - y must be small."""
    chart.check_domain(y)
    chart.check_domain(z)
    y = np.asarray(y, dtype=float)
    w = np.asarray(z, dtype=float) - y
    G = chart.connector(y)
    Gww = _apply(G, w, w)
    cubic = _apply(chart.connector_derivative(y, w), w, w) + _apply(G, Gww, w)
    return w + 0.5 * Gww + cubic / 6.0


def _geodesic_rhs(chart: Chart, y: Array, v: Array):
    return v, -_apply(chart.connector(y), v, v)


def geodesic_integrate(chart: Chart, y: Array, v: Array, t: float, steps: int = 1024):
    """Fixed-step RK4 integration of the geodesic equation.

    Returns (b(t), b'(t)).  Broadcasts over leading axes of y and v.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    chart.check_domain(y)
    y, v = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(v, dtype=float))
    y = np.array(y)
    v = np.array(v)
    h = t / steps
    for k in range(steps):
        k1y, k1v = _geodesic_rhs(chart, y, v)
        k2y, k2v = _geodesic_rhs(chart, y + 0.5 * h * k1y, v + 0.5 * h * k1v)
        k3y, k3v = _geodesic_rhs(chart, y + 0.5 * h * k2y, v + 0.5 * h * k2v)
        k4y, k4v = _geodesic_rhs(chart, y + h * k3y, v + h * k3v)
        y = y + (h / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        v = v + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        ok = np.asarray(chart.domain_guard(y))
        if not np.all(ok):
            raise ChartDomainError(
                f"geodesic left domain of chart '{chart.name}' at step {k + 1} of {steps}"
            )
    return y, v


def geodesic_path(chart: Chart, y: Array, v: Array, t: float, steps: int = 1024) -> Array:
    """Geodesic trajectory sampled at the RK4 grid, shape (steps + 1, ..., p)."""
    chart.check_domain(y)
    y = np.asarray(y, dtype=float).copy()
    v = np.asarray(v, dtype=float).copy()
    h = t / steps
    out = [y.copy()]
    for k in range(steps):
        k1y, k1v = _geodesic_rhs(chart, y, v)
        k2y, k2v = _geodesic_rhs(chart, y + 0.5 * h * k1y, v + 0.5 * h * k1v)
        k3y, k3v = _geodesic_rhs(chart, y + 0.5 * h * k2y, v + 0.5 * h * k2v)
        k4y, k4v = _geodesic_rhs(chart, y + h * k3y, v + h * k3v)
        y = y + (h / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        v = v + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        if not np.all(chart.domain_guard(y)):
            raise ChartDomainError(f"geodesic left domain at step {k + 1}")
        out.append(y.copy())
    return np.stack(out, axis=0)


def _geodesic_var_rhs(chart: Chart, y, v, Jy, Jv):
    G = chart.connector(y)
    dG = chart.connector_grad(y)
    dy = v
    dv = -_apply(G, v, v)
    dJy = Jv
    # d/dc of -Gamma(y)(v, v) along the variation columns
    dJv = -(
        np.einsum("...kijl,...lc,...i,...j->...kc", dG, Jy, v, v)
        + 2.0 * np.einsum("...kij,...ic,...j->...kc", G, Jv, v)
    )
    return dy, dv, dJy, dJv


def exp_with_jacobian(chart: Chart, y: Array, v: Array, t: float, steps: int = 256):
    """Exponential map endpoint together with its Jacobian in the velocity.

    Returns (b(t), d b(t) / d v) with Jacobian shape (..., p, p); the Jacobian
    is propagated by the variational equation of the geodesic flow.
    """
    chart.check_domain(y)
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    y, v = np.broadcast_arrays(y, v)
    y = np.array(y)
    v = np.array(v)
    p = chart.dim
    Jy = np.zeros(y.shape + (p,))
    Jv = np.broadcast_to(np.eye(p), y.shape + (p,)).copy()
    h = t / steps
    for k in range(steps):
        a1 = _geodesic_var_rhs(chart, y, v, Jy, Jv)
        a2 = _geodesic_var_rhs(
            chart, y + 0.5 * h * a1[0], v + 0.5 * h * a1[1], Jy + 0.5 * h * a1[2], Jv + 0.5 * h * a1[3]
        )
        a3 = _geodesic_var_rhs(
            chart, y + 0.5 * h * a2[0], v + 0.5 * h * a2[1], Jy + 0.5 * h * a2[2], Jv + 0.5 * h * a2[3]
        )
        a4 = _geodesic_var_rhs(chart, y + h * a3[0], v + h * a3[1], Jy + h * a3[2], Jv + h * a3[3])
        y = y + (h / 6.0) * (a1[0] + 2 * a2[0] + 2 * a3[0] + a4[0])
        v = v + (h / 6.0) * (a1[1] + 2 * a2[1] + 2 * a3[1] + a4[1])
        Jy = Jy + (h / 6.0) * (a1[2] + 2 * a2[2] + 2 * a3[2] + a4[2])
        Jv = Jv + (h / 6.0) * (a1[3] + 2 * a2[3] + 2 * a3[3] + a4[3])
        if not np.all(chart.domain_guard(y)):
            raise ChartDomainError(f"geodesic left domain at step {k + 1}")
    return y, Jy


def log_newton(
    chart: Chart,
    y: Array,
    z: Array,
    steps: int = 256,
    tol: float = 1e-12,
    max_iter: int = 50,
) -> Array:
    """Inverse exponential map by Newton iteration on the geodesic endpoint.

    Seeded by log_taylor; each iteration integrates the geodesic variational
    equation to get the exact endpoint Jacobian.  Fails with the index of the
    first unconverged sample.  For flat charts this returns z - y directly.
    """
    chart.check_domain(y)
    chart.check_domain(z)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if chart.flat:
        return z - y
    y_b, z_b = np.broadcast_arrays(y, z)
    v = log_taylor(chart, y_b, z_b)
    for _ in range(max_iter):
        endpoint, jac = exp_with_jacobian(chart, y_b, v, 1.0, steps=steps)
        resid = endpoint - z_b
        err = np.max(np.abs(resid))
        if err <= tol:
            return v
        v = v - np.linalg.solve(jac, resid[..., None])[..., 0]
    endpoint, _ = exp_with_jacobian(chart, y_b, v, 1.0, steps=steps)
    resid = np.max(np.abs(endpoint - z_b), axis=-1)
    bad = int(np.argmax(np.atleast_1d(resid)))
    raise NewtonConvergenceError(
        f"inverse exponential did not reach tol={tol} after {max_iter} iterations "
        f"(worst residual {np.max(resid):.3e})",
        sample_index=bad,
    )


def parallel_transport_integrate(chart: Chart, path: Array, v: Array, substeps: int = 1) -> Array:
    """Parallel transport of v along a densely sampled path.

    path has shape (n + 1, p); the curve is interpolated by a cubic spline in
    the sample parameter, and V' = -Gamma(y)(V (x) y') is integrated by RK4.
    v may be a single vector (p,) or a stack (..., p) of vectors transported
    along the same path.
    """
    path = np.asarray(path, dtype=float)
    chart.check_domain(path, context="path")
    n = path.shape[0] - 1
    if n < 1:
        return np.asarray(v, dtype=float).copy()
    s = np.linspace(0.0, 1.0, n + 1)
    spline = CubicSpline(s, path, axis=0)
    dspline = spline.derivative()

    def rhs(si, V):
        y = spline(si)
        yp = dspline(si)
        return -np.einsum("kij,...i,j->...k", chart.connector(y), V, yp)

    V = np.asarray(v, dtype=float).copy()
    h = 1.0 / (n * substeps)
    si = 0.0
    for _ in range(n * substeps):
        k1 = rhs(si, V)
        k2 = rhs(si + 0.5 * h, V + 0.5 * h * k1)
        k3 = rhs(si + 0.5 * h, V + 0.5 * h * k2)
        k4 = rhs(si + h, V + h * k3)
        V = V + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        si += h
    return V


# ---------------------------------------------------------------------------
# builtin chart family
# ---------------------------------------------------------------------------


def flat_chart(dim: int = 2) -> Chart:
    p = dim

    def connector(x):
        return np.zeros(np.shape(x)[:-1] + (p, p, p))

    def gradient(x):
        return np.zeros(np.shape(x)[:-1] + (p, p, p, p))

    def metric(x):
        return np.broadcast_to(np.eye(p), np.shape(x)[:-1] + (p, p)).copy()

    return Chart(
        dim=p,
        connector=connector,
        connector_gradient=gradient,
        metric=metric,
        name=f"flat({p})",
        flat=True,
    )


def sphere_stereographic_chart(radius: float = 1.0, guard_radius: float = 6.0) -> Chart:
    """Round sphere in stereographic coordinates (projection pole excluded).

    The metric is conformal, g = c(x)^2 I with c = 2 R^2 / (R^2 + |x|^2); the
    guard keeps coordinates away from the antipode of the chart centre, where
    the projection blows up.
    """
    R2 = radius * radius
    p = 2

    def _a(x):
        r2 = np.sum(x * x, axis=-1, keepdims=True)
        return -2.0 * x / (R2 + r2)

    def connector(x):
        x = np.asarray(x, dtype=float)
        a = _a(x)
        eye = np.eye(p)
        out = (
            np.einsum("ki,...j->...kij", eye, a)
            + np.einsum("kj,...i->...kij", eye, a)
            - np.einsum("ij,...k->...kij", eye, a)
        )
        return out

    def gradient(x):
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1)[..., None, None]
        den = R2 + r2
        eye = np.eye(p)
        # A[i, l] = d a_i / d x_l
        A = -2.0 * eye / den + 4.0 * np.einsum("...i,...l->...il", x, x) / den**2
        out = (
            np.einsum("ki,...jl->...kijl", eye, A)
            + np.einsum("kj,...il->...kijl", eye, A)
            - np.einsum("ij,...kl->...kijl", eye, A)
        )
        return out

    def metric(x):
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1)
        c = 2.0 * R2 / (R2 + r2)
        return np.einsum("...,ij->...ij", c * c, np.eye(p))

    def guard(x):
        return np.linalg.norm(np.asarray(x, dtype=float), axis=-1) <= guard_radius * radius

    return Chart(
        dim=p,
        connector=connector,
        connector_gradient=gradient,
        metric=metric,
        domain_guard=guard,
        name="sphere-stereo",
    )


def poincare_half_plane_chart(floor: float = 1e-9) -> Chart:
    p = 2

    def connector(x):
        x = np.asarray(x, dtype=float)
        inv = 1.0 / x[..., 1]
        G = np.zeros(x.shape[:-1] + (p, p, p))
        G[..., 0, 0, 1] = -inv
        G[..., 0, 1, 0] = -inv
        G[..., 1, 0, 0] = inv
        G[..., 1, 1, 1] = -inv
        return G

    def gradient(x):
        x = np.asarray(x, dtype=float)
        inv2 = 1.0 / x[..., 1] ** 2
        dG = np.zeros(x.shape[:-1] + (p, p, p, p))
        dG[..., 0, 0, 1, 1] = inv2
        dG[..., 0, 1, 0, 1] = inv2
        dG[..., 1, 0, 0, 1] = -inv2
        dG[..., 1, 1, 1, 1] = inv2
        return dG

    def metric(x):
        x = np.asarray(x, dtype=float)
        inv2 = 1.0 / x[..., 1] ** 2
        return np.einsum("...,ij->...ij", inv2, np.eye(p))

    def guard(x):
        return np.asarray(x, dtype=float)[..., 1] > floor

    return Chart(
        dim=p,
        connector=connector,
        connector_gradient=gradient,
        metric=metric,
        domain_guard=guard,
        name="poincare-half-plane",
    )


def warped_r2_chart() -> Chart:
    """R^2 with metric diag(1, 1 + x1^2): curvature varies with position."""
    p = 2

    def connector(x):
        x = np.asarray(x, dtype=float)
        x1 = x[..., 0]
        G = np.zeros(x.shape[:-1] + (p, p, p))
        G[..., 0, 1, 1] = -x1
        c = x1 / (1.0 + x1 * x1)
        G[..., 1, 0, 1] = c
        G[..., 1, 1, 0] = c
        return G

    def gradient(x):
        x = np.asarray(x, dtype=float)
        x1 = x[..., 0]
        dG = np.zeros(x.shape[:-1] + (p, p, p, p))
        dG[..., 0, 1, 1, 0] = -1.0
        dc = (1.0 - x1 * x1) / (1.0 + x1 * x1) ** 2
        dG[..., 1, 0, 1, 0] = dc
        dG[..., 1, 1, 0, 0] = dc
        return dG

    def metric(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (p, p))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = 1.0 + x[..., 0] ** 2
        return out

    return Chart(
        dim=p,
        connector=connector,
        connector_gradient=gradient,
        metric=metric,
        name="warped-r2",
    )


CHART_BUILDERS = {
    "flat": flat_chart,
    "sphere-stereo": sphere_stereographic_chart,
    "poincare-half-plane": poincare_half_plane_chart,
    "warped-r2": warped_r2_chart,
}


def make_chart(name: str, **params) -> Chart:
    """Builtin chart by name: flat, sphere-stereo, poincare-half-plane, warped-r2."""
    try:
        builder = CHART_BUILDERS[name]
    except KeyError:
        raise ValueError(f"unknown chart '{name}'; available: {sorted(CHART_BUILDERS)}") from None
    return builder(**params)


def linear_reparametrization(chart: Chart, T: Array) -> Chart:
    """Chart in the coordinates x~ = T x for an invertible linear map T."""
    T = np.asarray(T, dtype=float)
    Tinv = np.linalg.inv(T)

    def connector(xt):
        x = np.einsum("ij,...j->...i", Tinv, xt)
        G = chart.connector(x)
        return np.einsum("ka,...aij,ib,jc->...kbc", T, G, Tinv, Tinv)

    def gradient(xt):
        x = np.einsum("ij,...j->...i", Tinv, xt)
        dG = chart.connector_grad(x)
        return np.einsum("ka,...aijl,ib,jc,ld->...kbcd", T, dG, Tinv, Tinv, Tinv)

    metric = None
    if chart.metric is not None:

        def metric(xt):
            x = np.einsum("ij,...j->...i", Tinv, xt)
            g = chart.metric(x)
            return np.einsum("ai,...ab,bj->...ij", Tinv, g, Tinv)

    def guard(xt):
        return chart.domain_guard(np.einsum("ij,...j->...i", Tinv, xt))

    return Chart(
        dim=chart.dim,
        connector=connector,
        connector_gradient=gradient,
        metric=metric,
        domain_guard=guard,
        name=f"{chart.name}|linear",
        flat=chart.flat,
        fd_step=chart.fd_step,
    )


def levi_civita_connector(metric: Callable[[Array], Array], x: Array, h: float = 1e-6) -> Array:
    """Christoffel symbols of a metric by central differences (test utility)."""
    x = np.asarray(x, dtype=float)
    p = x.shape[-1]
    g = metric(x)
    dg = np.zeros(x.shape[:-1] + (p, p, p))  # dg[i, j, l] = d g_ij / d x_l
    for l in range(p):
        e = np.zeros(p)
        e[l] = h
        dg[..., l] = (metric(x + e) - metric(x - e)) / (2.0 * h)
    ginv = np.linalg.inv(g)
    koszul = (
        np.einsum("...jli->...lij", dg)
        + np.einsum("...ilj->...lij", dg)
        - np.einsum("...ijl->...lij", dg)
    )
    return 0.5 * np.einsum("...kl,...lij->...kij", ginv, koszul)


@dataclass(frozen=True)
class TangentVector:
    """A vector attached to a chart point."""

    base: Array
    vec: Array

    def validate(self, chart: Chart) -> "TangentVector":
        chart.check_domain(self.base, context="tangent base")
        return self


@dataclass(frozen=True)
class CurveJet:
    """Derivatives of a C^2 path at its start: y, y', and covariant y'-derivatives."""

    y: Array
    yp: Array
    nabla_yp: Array
    nabla2_yp: Array
