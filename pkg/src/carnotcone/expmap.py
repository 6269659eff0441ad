"""Exponential charts: normal coordinates of the first kind.

theta_g(v) is the time-1 flow of sum_i v_i X_i started at g.  A Chart
bundles a frame with a base point and solver settings; it provides the
coordinate map both ways, the anisotropic quasimetric

    d_inf(u, w) = max_i |v_i|^(1/deg X_i),   v = coords of w w.r.t. u,

the approximate dilations Delta^g_eps, and samplers for the weighted box
Box(g, r).  All heavy paths accept batches of points.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np

from .errors import NoConvergence, OutOfChart
from .frame import (Frame, StructureField, eval_frame, structure_constants,
                    weighted_norm)
from .integrate import integrate

_FD_STEP = 1e-6          # central-difference fallback step
_ADMIT_SLACK = 1 + 1e-9  # tolerance on admissibility comparisons


def flow(frame: Frame, coeffs, start, t: float = 1.0, *,
         tol: float = 1e-10, guard_radius: float = None) -> np.ndarray:
    """Flow of sum_i coeffs_i X_i from start for time t.

    coeffs and start broadcast elementwise over a shared batch shape.
    guard_radius, if set, aborts with OutOfChart when any trajectory's
    sup-coordinate displacement from its start exceeds it.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    start = np.asarray(start, dtype=float)
    squeeze = coeffs.ndim == 1 and start.ndim == 1
    C, Y0 = np.broadcast_arrays(np.atleast_2d(coeffs), np.atleast_2d(start))
    C = C * t   # autonomous: time folds into the coefficients

    def rhs(y):
        return np.einsum("...ij,...i->...j", frame.fields(y), C)

    guard = None
    if guard_radius is not None:
        ref = Y0.copy()

        def guard(y):
            disp = np.max(np.abs(y - ref))
            if disp > guard_radius:
                raise OutOfChart(
                    f"flow left the chart box: displacement {disp:.4g} "
                    f"exceeds {guard_radius:.4g}")

    out = integrate(rhs, Y0, 1.0, rtol=tol, atol=tol, guard=guard)
    return out[0] if squeeze else out


def _flow_with_jacobian(frame, coeffs, start, tol):
    """Returns (endpoint, J) with J = d(endpoint)/d(coeffs), batched."""
    C = np.atleast_2d(np.asarray(coeffs, dtype=float))
    Y0 = np.broadcast_to(np.atleast_2d(np.asarray(start, dtype=float)),
                         C.shape).copy()
    b, n = C.shape
    state0 = np.concatenate([Y0, np.zeros((b, n * n))], axis=1)

    def rhs(state):
        y = state[..., :n]
        J = state[..., n:].reshape(state.shape[:-1] + (n, n))
        F = frame.fields(y)                      # rows: fields
        D = frame.dfields(y)
        dy = np.einsum("...ij,...i->...j", F, C)
        A = np.einsum("...ijk,...i->...jk", D, C)
        dJ = np.einsum("...jk,...km->...jm", A, J) + np.swapaxes(F, -1, -2)
        return np.concatenate([dy, dJ.reshape(state.shape[:-1] + (n * n,))],
                              axis=-1)

    out = integrate(rhs, state0, 1.0, rtol=tol, atol=tol)
    return out[..., :n], out[..., n:].reshape(b, n, n)


def _fd_jacobian(frame, coeffs, start, tol):
    """Central-difference d(flow)/d(coeffs); fallback when variational is off."""
    C = np.atleast_2d(np.asarray(coeffs, dtype=float))
    b, n = C.shape
    h = _FD_STEP
    eye = np.eye(n)
    plus = (C[:, None, :] + h * eye).reshape(b * n, n)
    minus = (C[:, None, :] - h * eye).reshape(b * n, n)
    starts = np.repeat(np.atleast_2d(start), n, axis=0) if np.ndim(start) == 2 \
        else np.broadcast_to(start, (b * n, n))
    yp = flow(frame, plus, starts, tol=tol)
    ym = flow(frame, minus, starts, tol=tol)
    J = (yp - ym).reshape(b, n, n) / (2 * h)
    return np.swapaxes(J, -1, -2)   # columns d/dv_m


def _newton_coords(frame, base, targets, *, tol, max_iter, variational,
                   ode_tol):
    """Solve exp_map(v) = target for each row; base may vary per row."""
    U = np.atleast_2d(np.asarray(targets, dtype=float))
    b, n = U.shape
    G = np.broadcast_to(np.asarray(base, dtype=float), U.shape)
    Fg = eval_frame(frame, G)
    V = np.linalg.solve(Fg, (U - G)[..., None])[..., 0]

    active = np.ones(b, dtype=bool)
    res = np.full(b, np.inf)
    for _ in range(max_iter):
        idx = np.nonzero(active)[0]
        if variational:
            y, J = _flow_with_jacobian(frame, V[idx], G[idx], ode_tol)
        else:
            y = flow(frame, V[idx], G[idx], tol=ode_tol)
            y = np.atleast_2d(y)
            J = _fd_jacobian(frame, V[idx], G[idx], ode_tol)
        r = y - U[idx]
        rnorm = np.max(np.abs(r), axis=-1)
        res[idx] = rnorm
        done = rnorm <= tol
        active[idx[done]] = False
        if not active.any():
            return V[0] if np.ndim(targets) == 1 else V
        keep = ~done
        idx = idx[keep]
        step = np.linalg.solve(J[keep], r[keep][..., None])[..., 0]
        lam = np.ones(len(idx))
        # damped update: backtrack rows whose residual fails to decrease
        for _ in range(6):
            V_try = V[idx] - lam[:, None] * step
            y_try = np.atleast_2d(flow(frame, V_try, G[idx], tol=ode_tol))
            r_try = np.max(np.abs(y_try - U[idx]), axis=-1)
            improved = (r_try < res[idx]) | (r_try <= tol)
            if improved.all():
                break
            lam[~improved] *= 0.5
        V[idx] = V[idx] - lam[:, None] * step
    bad = np.nonzero(active)[0]
    raise NoConvergence(
        f"Newton inversion failed for {len(bad)} of {b} points "
        f"(worst residual {res[bad].max():.3e} after {max_iter} iterations)",
        indices=bad.tolist(), residual=float(res[bad].max()))


def dilate_at(frame: Frame, base, x, eps, *, coordinate_radius: float = None,
              ode_tolerance: float = 1e-10, newton_tolerance: float = 1e-9,
              max_iterations: int = 50, variational: bool = True) -> np.ndarray:
    """Dilation by eps in the chart at base; base may vary per row.

    Scales the normal coordinates of x by eps**deg and flows back out.
    eps is a positive scalar or a per-row array.
    """
    eps = np.asarray(eps, dtype=float)
    if np.any(eps <= 0):
        raise OutOfChart(f"dilation parameter must be positive, got {eps}")
    if coordinate_radius is None:
        coordinate_radius = frame.coordinate_radius
    v = _newton_coords(frame, base, x, tol=newton_tolerance,
                       max_iter=max_iterations, variational=variational,
                       ode_tol=ode_tolerance)
    scaled = v * frame.degree_weights(eps)
    wnorm = weighted_norm(frame.degrees, scaled)
    if np.any(wnorm > coordinate_radius * _ADMIT_SLACK):
        raise OutOfChart(
            f"dilation leaves the chart: weighted norm "
            f"{float(np.max(wnorm)):.4g} exceeds {coordinate_radius:.4g}")
    base_b = np.broadcast_to(np.asarray(base, dtype=float), np.shape(scaled))
    return flow(frame, scaled, base_b, tol=ode_tolerance)


@dataclass
class Chart:
    """An exponential chart at a base point with solver settings."""

    frame: Frame
    base: np.ndarray
    coordinate_radius: float = None
    ode_tolerance: float = 1e-10
    newton_tolerance: float = 1e-9
    max_newton_iterations: int = 50
    use_variational_jacobian: bool = True
    escape_factor: float = 4.0
    _structure: StructureField = dc_field(default=None, repr=False)

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=float)
        if self.base.shape != (self.frame.dim_n,):
            raise OutOfChart(
                f"base point has shape {self.base.shape}, "
                f"expected ({self.frame.dim_n},)")
        if self.coordinate_radius is None:
            self.coordinate_radius = self.frame.coordinate_radius

    @property
    def structure(self) -> StructureField:
        """Structure constants at the base (computed on first use)."""
        if self._structure is None:
            self._structure = structure_constants(self.frame, self.base)
        return self._structure

    @cached_property
    def _guard_radius(self):
        return self.escape_factor * max(self.coordinate_radius, 1.0)

    def admissible(self, v):
        return weighted_norm(self.frame.degrees, v) \
            <= self.coordinate_radius * _ADMIT_SLACK

    def exp_map(self, v) -> np.ndarray:
        """theta_g(v); v (or a batch of v) must lie in the coordinate box."""
        v = np.asarray(v, dtype=float)
        bad = ~self.admissible(v)
        if np.any(bad):
            worst = float(np.max(weighted_norm(self.frame.degrees, v)))
            raise OutOfChart(
                f"coordinates exceed the chart radius "
                f"{self.coordinate_radius:.4g}: weighted norm {worst:.4g}")
        return flow(self.frame, v, self.base, tol=self.ode_tolerance,
                    guard_radius=self._guard_radius)

    def normal_coords(self, u) -> np.ndarray:
        """Inverse of exp_map by damped Newton (variational Jacobian)."""
        return _newton_coords(
            self.frame, self.base, u,
            tol=self.newton_tolerance,
            max_iter=self.max_newton_iterations,
            variational=self.use_variational_jacobian,
            ode_tol=self.ode_tolerance)

    def dist_from_base(self, w):
        return weighted_norm(self.frame.degrees, self.normal_coords(w))

    def dilate(self, x, eps) -> np.ndarray:
        """Delta^g_eps x = exp_map(eps^deg * coords(x)); any eps > 0."""
        return dilate_at(self.frame, self.base, x, eps,
                         coordinate_radius=self.coordinate_radius,
                         ode_tolerance=self.ode_tolerance,
                         newton_tolerance=self.newton_tolerance,
                         max_iterations=self.max_newton_iterations,
                         variational=self.use_variational_jacobian)

    def box(self, r: float) -> "Box":
        if not 0 < r <= self.coordinate_radius * _ADMIT_SLACK:
            raise OutOfChart(
                f"box radius {r:.4g} outside (0, {self.coordinate_radius:.4g}]")
        return Box(self, float(r))


@dataclass(frozen=True)
class Box:
    """The weighted coordinate box Box(g, r) with membership and sampling."""

    chart: Chart
    radius: float

    def contains(self, points) -> np.ndarray:
        v = self.chart.normal_coords(points)
        return weighted_norm(self.chart.frame.degrees, v) \
            <= self.radius * _ADMIT_SLACK

    def sample_coords(self, rng, n: int) -> np.ndarray:
        """n coordinate vectors uniform on the product box |v_i| < r^deg_i."""
        deg = np.asarray(self.chart.frame.degrees, dtype=float)
        half = self.radius ** deg
        return rng.uniform(-half, half, size=(n, len(deg)))

    def sample(self, rng, n: int) -> np.ndarray:
        return self.chart.exp_map(self.sample_coords(rng, n))


def exp_map(chart: Chart, v):
    return chart.exp_map(v)


def normal_coords(chart: Chart, u):
    return chart.normal_coords(u)


def dilation_delta_cap(chart: Chart, x, eps: float):
    return chart.dilate(x, eps)


def box(chart: Chart, r: float):
    return chart.box(r)


def dist_inf(frame: Frame, u, w, *, ode_tolerance: float = 1e-10,
             newton_tolerance: float = 1e-9, max_iterations: int = 50):
    """Quasimetric d_inf(u, w); u and w may be matched batches.

    Asymmetric by construction: the coordinates are those of w in the
    chart centred at u.
    """
    u = np.asarray(u, dtype=float)
    v = _newton_coords(frame, u, w, tol=newton_tolerance,
                       max_iter=max_iterations, variational=True,
                       ode_tol=ode_tolerance)
    return weighted_norm(frame.degrees, v)


def estimate_quasimetric_constants(frame: Frame, g, radius: float = 0.5,
                                   n: int = 200, seed: int = 0,
                                   ode_tolerance: float = 1e-10) -> dict:
    """Empirical symmetry and triangle constants of d_inf near g.

    c_sym  = max d(u,w)/d(w,u) over sampled pairs,
    Q_tri  = max d(u,w)/(d(u,v) + d(v,w)) over sampled triples.
    """
    chart = Chart(frame, g, ode_tolerance=ode_tolerance)
    rng = np.random.default_rng(seed)
    bx = chart.box(radius)
    U = bx.sample(rng, n)
    W = bx.sample(rng, n)
    V = bx.sample(rng, n)
    d_uw = dist_inf(frame, U, W, ode_tolerance=ode_tolerance)
    d_wu = dist_inf(frame, W, U, ode_tolerance=ode_tolerance)
    d_uv = dist_inf(frame, U, V, ode_tolerance=ode_tolerance)
    d_vw = dist_inf(frame, V, W, ode_tolerance=ode_tolerance)
    return {
        "c_sym": float(np.max(d_uw / d_wu)),
        "Q_tri": float(np.max(d_uw / (d_uv + d_vw))),
        "n": int(n),
    }
