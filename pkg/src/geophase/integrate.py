"""Circulation of the connection along loops and curvature flux through spheres.

Both integrals use breadth-first adaptive Gauss-Legendre quadrature: every
panel (tile) is compared against the sum of its halves (quarters) and only
the unconverged ones are split again.  All panels of one refinement level are
evaluated in a single vectorized call.  Accepted contributions are summed with
``math.fsum``, so the result does not depend on batching or thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .errors import (
    DegeneracyError,
    LoopTouchesStringError,
    OnStringError,
    QuadratureError,
    UsageError,
)
from .model import EFieldModel, eval_e, eval_e_jacobian
from .spectral import EPS_D, EPS_M, _connection, _curvature

MAX_DEPTH_LIMIT = 24


@dataclass(frozen=True)
class QuadratureSettings:
    abs_tol: float = 1e-6
    rel_tol: float = 1e-8
    max_depth: int = 12
    initial_panels: int = 8
    gauss_order: int = 7
    workers: int = 1  # threads used for batch evaluation; never changes results

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise UsageError("quadrature tolerances must be positive")
        if not 0 <= self.max_depth <= MAX_DEPTH_LIMIT:
            raise UsageError(f"max_depth must lie in [0, {MAX_DEPTH_LIMIT}]")
        if self.initial_panels < 1 or self.gauss_order < 2 or self.workers < 1:
            raise UsageError("initial_panels, gauss_order and workers must be positive")

    def echo(self) -> dict:
        return {
            "abs_tol": self.abs_tol,
            "rel_tol": self.rel_tol,
            "max_depth": self.max_depth,
            "initial_panels": self.initial_panels,
        }


def _gauss(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _map_batches(fn, points: np.ndarray, workers: int, axis_len: int) -> np.ndarray:
    """fn(points) evaluated in up to ``workers`` ordered chunks along axis 0."""
    if workers <= 1 or axis_len < 2 * workers:
        return fn(points)
    chunks = np.array_split(points, workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return np.concatenate(list(pool.map(fn, chunks)))


# --------------------------------------------------------------------------
# Loops
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ParametricLoop:
    """Closed curve t in [0, 1) -> r(t); components are expressions in parameter ``t``."""

    rx: ex.Expression
    ry: ex.Expression
    rz: ex.Expression
    params: dict = field(default_factory=dict)
    label: str = "loop"

    def __post_init__(self):
        ends = self.points(np.array([0.0, 1.0]))
        if np.max(np.abs(ends[0] - ends[1])) > 1e-12:
            raise UsageError("loop is not closed: r(0) != r(1)")

    def _at(self, t):
        return ex.EvalPoint(params={**self.params, "t": np.asarray(t, dtype=float)})

    def points(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        at = self._at(t)
        return np.stack([np.broadcast_to(ex.evaluate(c, at), t.shape)
                         for c in (self.rx, self.ry, self.rz)], axis=-1)

    def points_and_tangents(self, t):
        at = self._at(t)
        vals, ders = zip(*(ex.value_and_derivatives(c, at, wrt=("t",))
                           for c in (self.rx, self.ry, self.rz)))
        return np.stack(vals, axis=-1), np.stack([d[0] for d in ders], axis=-1)


def loop_from_strings(rx: str, ry: str, rz: str, params=None, label="loop") -> ParametricLoop:
    return ParametricLoop(ex.parse(rx), ex.parse(ry), ex.parse(rz), dict(params or {}), label)


_AXES = {"x": (1.0, 0.0, 0.0), "y": (0.0, 1.0, 0.0), "z": (0.0, 0.0, 1.0)}


def axis_vector(axis) -> np.ndarray:
    a = np.asarray(_AXES[axis] if isinstance(axis, str) else axis, dtype=float)
    if a.shape != (3,) or not np.linalg.norm(a) > 0:
        raise UsageError(f"invalid loop axis {axis!r}")
    return a / np.linalg.norm(a)


def _perpendicular_frame(a: np.ndarray):
    """u, v with (u, v, a) right-handed and orthonormal; u = x-hat, v = y-hat for a = z-hat."""
    helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    if np.array_equal(a, [0.0, 0.0, 1.0]):
        return np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
    u = helper - a * (helper @ a)
    u /= np.linalg.norm(u)
    return u, np.cross(a, u)


def circle_loop(delta: float, z0: float = 0.0, axis="z", orientation: int = -1,
                center=None) -> ParametricLoop:
    """Circle of radius ``delta`` around ``axis``, centred at ``z0`` along it.

    ``orientation=+1`` runs counterclockwise seen from the tip of the axis
    (for axis z: x = delta cos 2 pi t, y = delta sin 2 pi t).  The default -1
    runs clockwise, the orientation of the rim of a hole pierced in a sphere
    around the origin.  Next to D+ the connection tends to -grad arg(e_x + i e_y),
    so as the circle shrinks onto a string along +axis the circulation tends to
    -2 pi times the winding of e_x + i e_y along the same circle, which is 2 pi
    times the winding around the counterclockwise piercing loop.
    An explicit ``center`` point overrides ``z0``.
    """
    if not delta > 0:
        raise UsageError("loop radius delta must be positive")
    if orientation not in (1, -1):
        raise UsageError("orientation must be +1 or -1")
    a = axis_vector(axis)
    u, v = _perpendicular_frame(a)
    c = z0 * a if center is None else np.asarray(center, dtype=float)
    omega = ex.Const(2.0 * math.pi * orientation)
    angle = ex.Mul(omega, ex.Param("t"))
    cos_t, sin_t = ex.Unary("cos", angle), ex.Unary("sin", angle)
    comps = []
    for i in range(3):
        terms = []
        if c[i] != 0:
            terms.append(ex.Const(float(c[i])))
        if u[i] != 0:
            terms.append(ex.Mul(ex.Const(float(delta * u[i])), cos_t))
        if v[i] != 0:
            terms.append(ex.Mul(ex.Const(float(delta * v[i])), sin_t))
        node = terms[0] if terms else ex.Const(0.0)
        for t in terms[1:]:
            node = ex.Add(node, t)
        comps.append(node)
    label = f"circle(delta={delta!r}, center={[float(x) for x in c]}, orientation={orientation:+d})"
    return ParametricLoop(*comps, label=label)


def sphere_loop(center, radius: float, pole, delta: float, orientation: int = 1) -> ParametricLoop:
    """Circle on the sphere at geodesic distance ``delta`` around the point ``pole``.

    ``orientation=+1`` is counterclockwise seen from outside the sphere.
    """
    p = np.asarray(pole, dtype=float) - np.asarray(center, dtype=float)
    p = p / np.linalg.norm(p)
    alpha = delta / radius
    c = np.asarray(center, dtype=float) + radius * math.cos(alpha) * p
    return circle_loop(radius * math.sin(alpha), axis=p, orientation=orientation, center=c)


@dataclass(frozen=True)
class CirculationResult:
    value: float
    error: float
    min_string_proxy: float  # min over nodes of (e_x^2 + e_y^2) / e^2


def _string_proxy(model, loop, t):
    e = eval_e(model, loop.points(t))
    norm = np.linalg.norm(e, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(norm > 0, np.hypot(e[..., 0], e[..., 1]) / norm, 0.0)


def closest_approach(model: EFieldModel, loop: ParametricLoop, n: int = 2048, keep: int = 8):
    """(t, min rho/||e||) along the loop: grid scan, then golden-section on the best minima.

    At a transversal crossing of a string rho/||e|| is V-shaped in t, so the
    refinement resolves the crossing down to roundoff.
    """
    t = np.arange(n) / n
    f = _string_proxy(model, loop, t)
    local = np.flatnonzero((f <= np.roll(f, 1)) & (f <= np.roll(f, -1)))
    best = (float(t[np.argmin(f)]), float(f.min()))
    invphi = (math.sqrt(5) - 1) / 2
    for i in local[np.argsort(f[local])][:keep]:
        lo, hi = (i - 1) / n, (i + 1) / n
        for _ in range(80):
            c, d = hi - invphi * (hi - lo), lo + invphi * (hi - lo)
            fc, fd = _string_proxy(model, loop, np.array([c % 1.0, d % 1.0]))
            if fc <= fd:
                hi = d
            else:
                lo = c
        tm = 0.5 * (lo + hi) % 1.0
        fm = float(_string_proxy(model, loop, np.array([tm]))[0])
        if fm < best[1]:
            best = (tm, fm)
    return best


def circulation(model: EFieldModel, loop: ParametricLoop,
                settings: QuadratureSettings = QuadratureSettings(),
                eps_d: float = EPS_D) -> CirculationResult:
    """Adaptive quadrature of the line integral of the connection along ``loop``."""
    t_min, closest = closest_approach(model, loop)
    if closest <= eps_d:
        raise LoopTouchesStringError(
            f"loop {loop.label} meets a Dirac string near t={t_min:.6g} "
            f"(rho/||e|| = {closest:.3g})")
    xg, wg = _gauss(settings.gauss_order)
    proxy = [np.inf]

    def panel_values(a, b):
        t = a[:, None] + (b - a)[:, None] * xg
        r, dr = loop.points_and_tangents(t)

        def integrand(chunk):
            rr, dd = chunk[..., :3], chunk[..., 3:]
            e, J = eval_e_jacobian(model, rr)
            norm2 = np.sum(e * e, axis=-1)
            rho2 = e[..., 0] ** 2 + e[..., 1] ** 2
            with np.errstate(divide="ignore", invalid="ignore"):
                proxy.append(float(np.min(np.where(norm2 > 0, rho2 / norm2, 0.0))))
            return np.sum(_connection(e, J, eps_d) * dd, axis=-1)

        try:
            vals = _map_batches(integrand, np.concatenate([r, dr], axis=-1),
                                settings.workers, len(a))
        except (OnStringError, DegeneracyError) as err:
            raise LoopTouchesStringError(f"loop {loop.label} meets a Dirac string: {err}") from err
        return (b - a) * (vals @ wg)

    edges = np.linspace(0.0, 1.0, settings.initial_panels + 1)
    a, b = edges[:-1], edges[1:]
    est = panel_values(a, b)
    accepted, errors = [], []
    for depth in range(settings.max_depth + 1):
        m = 0.5 * (a + b)
        halves = panel_values(np.concatenate([a, m]), np.concatenate([m, b]))
        refined = halves[: len(a)] + halves[len(a):]
        diff = np.abs(refined - est)
        ok = diff <= np.maximum(settings.abs_tol * (b - a), settings.rel_tol * np.abs(refined))
        accepted.extend(refined[ok])
        errors.extend(diff[ok])
        if ok.all():
            break
        if depth == settings.max_depth:
            raise QuadratureError(
                f"circulation did not converge within max_depth={settings.max_depth} "
                f"(worst panel change {diff[~ok].max():.3g})")
        keep = ~ok
        a = np.concatenate([a[keep], m[keep]])
        b = np.concatenate([m[keep], b[keep]])
        est = np.concatenate([halves[: len(keep)][keep], halves[len(keep):][keep]])
    return CirculationResult(math.fsum(accepted), math.fsum(errors), min(proxy))


# --------------------------------------------------------------------------
# Sphere flux
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FluxResult:
    flux: float
    error: float
    tiles: int
    min_norm: float

    @property
    def charge(self) -> float:
        return self.flux / (4.0 * math.pi)

    @property
    def quantization_residual(self) -> float:
        return quantization_residual(self.charge)


def quantization_residual(g: float) -> float:
    return abs(2.0 * g - round(2.0 * g))


def _sphere_points(center, radius, theta, phi):
    theta, phi = np.broadcast_arrays(theta, phi)
    st = np.sin(theta)
    n = np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)
    return np.asarray(center, dtype=float) + radius * n, n


def check_surface(model: EFieldModel, center, radius: float, n: int = 64,
                  eps_m: float = EPS_M) -> float:
    """Minimum ||e|| on a (theta, phi) node grid that includes both poles."""
    theta = np.linspace(0.0, math.pi, n + 1)
    phi = np.linspace(0.0, 2 * math.pi, 2 * n, endpoint=False)
    r, _ = _sphere_points(center, radius, theta[:, None], phi[None, :])
    norms = np.linalg.norm(eval_e(model, r), axis=-1)
    low = float(norms.min())
    if low <= eps_m:
        i, j = np.unravel_index(np.argmin(norms), norms.shape)
        raise DegeneracyError(
            "flux_sphere precondition violated: degeneracy on the sphere surface near "
            f"theta={theta[i]:.6g}, phi={phi[j]:.6g}")
    return low


def flux_sphere(model: EFieldModel, center=(0.0, 0.0, 0.0), radius: float = 0.5,
                settings: QuadratureSettings = QuadratureSettings(),
                theta_range=(0.0, math.pi)) -> FluxResult:
    """Outward flux of the curvature through a sphere (or a polar zone of it).

    The (theta, phi) rectangle starts as ``initial_panels`` x ``2*initial_panels``
    tiles; each tile's product Gauss estimate is compared with its two theta
    halves and its two phi halves, and an unconverged tile is split once along
    the direction that changed most.  The curvature is smooth on the whole sphere when no
    degeneracy lies on it, so no holes around Dirac strings are needed.
    """
    if not radius > 0:
        raise UsageError("sphere radius must be positive")
    th_lo, th_hi = theta_range
    min_norm = check_surface(model, center, radius)
    xg, wg = _gauss(settings.gauss_order)
    w2 = np.outer(wg, wg)
    total_area = (th_hi - th_lo) * 2 * math.pi
    tracker = [min_norm]

    def integrand(chunk):
        theta, phi = chunk[..., 0], chunk[..., 1]
        r, n = _sphere_points(center, radius, theta, phi)
        e, J = eval_e_jacobian(model, r)
        tracker.append(float(np.linalg.norm(e, axis=-1).min()))
        B = _curvature(e, J)
        return np.sum(B * n, axis=-1) * radius ** 2 * np.sin(theta)

    def tile_values(tiles):
        t0, t1, p0, p1 = tiles.T
        theta = t0[:, None, None] + (t1 - t0)[:, None, None] * xg[None, :, None]
        phi = p0[:, None, None] + (p1 - p0)[:, None, None] * xg[None, None, :]
        theta, phi = np.broadcast_arrays(theta, phi)
        f = _map_batches(integrand, np.stack([theta, phi], axis=-1), settings.workers, len(tiles))
        return (t1 - t0) * (p1 - p0) * np.einsum("mij,ij->m", f, w2)

    nt, nphi = settings.initial_panels, 2 * settings.initial_panels
    te = np.linspace(th_lo, th_hi, nt + 1)
    pe = np.linspace(0.0, 2 * math.pi, nphi + 1)
    T0, P0 = np.meshgrid(te[:-1], pe[:-1], indexing="ij")
    T1, P1 = np.meshgrid(te[1:], pe[1:], indexing="ij")
    tiles = np.stack([T0.ravel(), T1.ravel(), P0.ravel(), P1.ravel()], axis=-1)
    est = tile_values(tiles)
    depth = np.zeros((len(tiles), 2), dtype=int)
    accepted, errors = [], []
    count = len(tiles)
    while len(tiles):
        m = len(tiles)
        t0, t1, p0, p1 = tiles.T
        tm, pm = 0.5 * (t0 + t1), 0.5 * (p0 + p1)
        halves = np.concatenate([
            np.stack([t0, tm, p0, p1], axis=-1),
            np.stack([tm, t1, p0, p1], axis=-1),
            np.stack([t0, t1, p0, pm], axis=-1),
            np.stack([t0, t1, pm, p1], axis=-1),
        ])
        hv = tile_values(halves).reshape(4, m)
        count += 4 * m
        refined = np.stack([hv[0] + hv[1], hv[2] + hv[3]])  # theta split, phi split
        diff = np.abs(refined - est)
        frac = (t1 - t0) * (p1 - p0) / total_area
        tol = np.maximum(settings.abs_tol * frac, settings.rel_tol * np.abs(refined).max(axis=0))
        ok = (diff <= tol).all(axis=0)
        best = np.argmax(diff, axis=0)
        accepted.extend(refined[best[ok], np.flatnonzero(ok)])
        errors.extend(diff.max(axis=0)[ok])
        # split the unconverged tiles once, along the direction that changed most
        need = (diff > tol).T
        if (need & (depth >= settings.max_depth)).any():
            raise QuadratureError(
                f"flux_sphere did not converge within max_depth={settings.max_depth}; "
                "a degeneracy on or very near the surface is the usual cause")
        keep = np.flatnonzero(~ok)
        d = np.argmax(np.where(need, diff.T, -1.0), axis=1)[keep]
        first = np.where(d[:, None] == 0, halves[keep], halves[2 * m + keep])
        second = np.where(d[:, None] == 0, halves[m + keep], halves[3 * m + keep])
        tiles = np.concatenate([first, second])
        est = np.concatenate([np.where(d == 0, hv[0, keep], hv[2, keep]),
                              np.where(d == 0, hv[1, keep], hv[3, keep])])
        step = np.zeros((len(keep), 2), dtype=int)
        step[np.arange(len(keep)), d] = 1
        depth = np.concatenate([depth[keep] + step] * 2)
    return FluxResult(math.fsum(accepted), math.fsum(errors), count, min(tracker))


def charge_from_flux(model: EFieldModel, radius: float = 0.5,
                     settings: QuadratureSettings = QuadratureSettings(),
                     center=(0.0, 0.0, 0.0)) -> FluxResult:
    """Flux through the sphere of ``radius``; ``.charge`` is flux / 4 pi."""
    return flux_sphere(model, center, radius, settings)
