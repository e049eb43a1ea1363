"""Dirac-string piercings of a sphere and the charge as a sum of winding numbers.

The strings D+ / D- are the curves e_x = e_y = 0 with e_z > 0 / e_z < 0.
Each D+ piercing of a sphere around the degeneracy is encircled by a small
loop on the sphere, counterclockwise seen from outside; the winding number of
Z = e_x + i e_y along that loop is an integer and the charge is half the sum.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (
    AmbiguousHemisphereError,
    GeophaseError,
    MethodError,
    UsageError,
    WindingError,
)
from .integrate import (
    ParametricLoop,
    QuadratureSettings,
    charge_from_flux,
    sphere_loop,
)
from .model import EFieldModel, eval_e, eval_e_jacobian

ROOT_TOL = 1e-10  # |Z| at a refined root, relative to max |Z| on the sphere
HEMISPHERE_TOL = 1e-10  # |e_z| at a root, relative to max ||e||, below which D+/D- is ambiguous
WINDING_MIN_Z = 1e-10
WINDING_START, WINDING_MAX = 64, 2 ** 20
AGREEMENT_WARN = 1e-3
NEWTON_ITERATIONS = 80


@dataclass
class StringPiercing:
    theta: float
    phi: float
    point: tuple[float, float, float]
    hemisphere: int  # +1 for D+, -1 for D-
    delta: float = 0.0  # geodesic radius of the encircling loop
    winding: int | None = None
    min_abs_z: float | None = None

    def to_dict(self) -> dict:
        return {
            "theta": self.theta,
            "phi": self.phi,
            "hemisphere": "+" if self.hemisphere > 0 else "-",
            "winding": self.winding,
            "delta": self.delta,
            "min_abs_z": self.min_abs_z,
        }


@dataclass
class PiercingSearch:
    piercings: list[StringPiercing]
    all_roots: int
    diagnostics: list[str] = field(default_factory=list)


# --------------------------------------------------------------------------
# Piercing search
# --------------------------------------------------------------------------

def _angles(p: np.ndarray):
    theta = np.arccos(np.clip(p[..., 2], -1.0, 1.0))
    phi = np.mod(np.arctan2(p[..., 1], p[..., 0]), 2 * math.pi)
    phi = np.where(np.hypot(p[..., 0], p[..., 1]) < 1e-12, 0.0, phi)  # longitude is arbitrary at a pole
    return theta, phi


def _unit(theta, phi):
    theta, phi = np.broadcast_arrays(theta, phi)
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def _tangent_frames(p: np.ndarray):
    """Orthonormal tangent vectors (t1, t2) at unit vectors p, batched."""
    helper = np.where(np.abs(p[..., :1]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    t1 = helper - p * np.sum(helper * p, axis=-1, keepdims=True)
    t1 /= np.linalg.norm(t1, axis=-1, keepdims=True)
    return t1, np.cross(p, t1)


def _scan_candidates(Z: np.ndarray, theta: np.ndarray, phi: np.ndarray):
    """Seed directions from a node grid of Z values (rows theta, periodic columns phi)."""
    n, m = Z.shape
    ex, ey, mag = Z.real, Z.imag, np.abs(Z)
    seeds = []

    def spans_zero(v):
        corners = np.stack([v[:-1], v[1:], np.roll(v[:-1], -1, 1), np.roll(v[1:], -1, 1)])
        return (corners.min(axis=0) <= 0) & (corners.max(axis=0) >= 0)

    cells = spans_zero(ex) & spans_zero(ey)
    i, j = np.nonzero(cells)
    dphi = phi[1] - phi[0]
    seeds.append(_unit(0.5 * (theta[i] + theta[i + 1]), phi[j] + 0.5 * dphi))

    # polar caps: the first and last rows are polygons around the poles
    for row, pole in ((0, 0.0), (n - 1, math.pi)):
        if ex[row].min() <= 0 <= ex[row].max() and ey[row].min() <= 0 <= ey[row].max():
            seeds.append(_unit(np.array([pole]), np.array([0.0])))

    # discrete local minima of |Z|; neighbours across a pole sit half a turn away
    padded = np.concatenate([np.roll(mag[:1], m // 2, 1), mag, np.roll(mag[-1:], m // 2, 1)])
    is_min = np.ones_like(mag, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == dj == 0:
                continue
            neigh = np.roll(padded, -dj, axis=1)[1 + di: 1 + di + n]
            is_min &= mag <= neigh
    i, j = np.nonzero(is_min)
    seeds.append(_unit(theta[i], phi[j]))
    return np.concatenate(seeds)


def _cluster(points: np.ndarray, scores: np.ndarray, min_angle: float) -> np.ndarray:
    """Greedy dedup by ascending score; returns indices of kept points."""
    kept = []
    for k in np.argsort(scores, kind="stable"):
        if all(math.acos(min(1.0, max(-1.0, float(points[k] @ points[q])))) >= min_angle
               for q in kept):
            kept.append(k)
    return np.array(kept, dtype=int)


def _refine(model, center, radius, p, max_step, tol):
    """Damped Gauss-Newton for e_x = e_y = 0 in tangent-plane charts on the sphere.

    Steps are in radians along the unit sphere and capped at ``max_step``.
    """
    p = p.copy()

    def residual(q):
        e = eval_e(model, center + radius * q)
        return np.hypot(e[..., 0], e[..., 1])

    res = residual(p)
    active = res > tol
    for _ in range(NEWTON_ITERATIONS):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        q = p[idx]
        e, J = eval_e_jacobian(model, center + radius * q)
        t1, t2 = _tangent_frames(q)
        Jt = radius * np.stack([np.einsum("...ij,...j->...i", J[:, :2, :], t1),
                                np.einsum("...ij,...j->...i", J[:, :2, :], t2)], axis=-1)
        step = -np.einsum("...ij,...j->...i", np.linalg.pinv(Jt, rcond=1e-14), e[:, :2])
        length = np.linalg.norm(step, axis=-1, keepdims=True)
        step *= np.minimum(1.0, max_step / np.maximum(length, 1e-300))
        scale = np.ones(len(idx))
        improved = np.zeros(len(idx), dtype=bool)
        for _ in range(12):
            trial = q + (step[:, :1] * t1 + step[:, 1:] * t2) * scale[:, None]
            trial /= np.linalg.norm(trial, axis=-1, keepdims=True)
            tr = residual(trial)
            better = (tr < res[idx]) & ~improved
            p[idx[better]] = trial[better]
            res[idx[better]] = tr[better]
            improved |= better
            if improved.all():
                break
            scale = np.where(improved, scale, 0.5 * scale)
        stalled = idx[~improved]
        active[stalled] = False
        active &= res > tol
    return p, res


def locate_piercings(model: EFieldModel, radius: float = 0.5, grid_n: int = 128,
                     hemisphere: int | None = 1, center=(0.0, 0.0, 0.0)) -> PiercingSearch:
    """Points where the strings D+ (``hemisphere=1``), D- (-1) or both (None) cross the sphere.

    Seeds come from a grid_n x 2*grid_n (theta, phi) scan: cells where both
    e_x and e_y change sign, polar caps, and discrete minima of |Z|.  Seeds
    are refined by Gauss-Newton on the sphere and deduplicated within
    2 pi / grid_n.  Loop radii are half the distance to the nearest other
    zero of Z (of either hemisphere), capped at 0.1 * radius.
    """
    if grid_n < 32:
        raise UsageError("grid_n must be at least 32")
    if hemisphere not in (1, -1, None):
        raise UsageError("hemisphere must be +1, -1 or None")
    center = np.asarray(center, dtype=float)
    dtheta = math.pi / grid_n
    theta = (np.arange(grid_n) + 0.5) * dtheta
    phi = np.arange(2 * grid_n) * dtheta
    nodes = _unit(theta[:, None], phi[None, :])
    e_nodes = eval_e(model, center + radius * nodes)
    Z = e_nodes[..., 0] + 1j * e_nodes[..., 1]
    max_z = float(np.abs(Z).max())
    max_e = float(np.linalg.norm(e_nodes, axis=-1).max())
    if max_z == 0:
        raise WindingError("e_x + i e_y vanishes on the whole scan grid")
    min_angle = 2 * math.pi / grid_n

    seeds = _scan_candidates(Z, theta, phi)
    e_seeds = eval_e(model, center + radius * seeds)
    seed_res = np.hypot(e_seeds[:, 0], e_seeds[:, 1])
    seeds = seeds[_cluster(seeds, seed_res, 0.25 * min_angle)]

    tol = ROOT_TOL * max_z
    roots, res = _refine(model, center, radius, seeds, max_step=2 * dtheta, tol=tol)
    diagnostics = []
    ok = res <= tol
    for k in np.flatnonzero(~ok):
        if ok.any() and float(np.max(roots[ok] @ roots[k])) > math.cos(min_angle):
            continue  # stalled next to a root that was found anyway
        t, f = _angles(seeds[k])
        diagnostics.append(f"seed theta={float(t):.6f} phi={float(f):.6f} did not converge "
                           f"(|Z|={res[k]:.3e})")
    roots, res = roots[ok], res[ok]
    roots = roots[_cluster(roots, res, min_angle)]

    e_roots = eval_e(model, center + radius * roots)
    ez = e_roots[:, 2]
    ambiguous = np.abs(ez) <= HEMISPHERE_TOL * max_e
    if ambiguous.any():
        t, f = _angles(roots[np.argmax(ambiguous)])
        raise AmbiguousHemisphereError(
            f"string piercing at theta={float(t):.6f}, phi={float(f):.6f} has e_z ~ 0; "
            "the sphere passes through the degeneracy set")

    piercings = []
    for k, q in enumerate(roots):
        sign = 1 if ez[k] > 0 else -1
        if hemisphere is not None and sign != hemisphere:
            continue
        others = np.delete(roots, k, axis=0)
        if len(others):
            gap = float(np.arccos(np.clip(others @ q, -1.0, 1.0)).min()) * radius
            delta = min(0.5 * gap, 0.1 * radius)
        else:
            delta = 0.1 * radius
        t, f = _angles(q)
        piercings.append(StringPiercing(float(t), float(f), tuple(map(float, center + radius * q)),
                                        sign, delta))
    piercings.sort(key=lambda s: (s.theta, s.phi))
    return PiercingSearch(piercings, len(roots), diagnostics)


# --------------------------------------------------------------------------
# Winding numbers
# --------------------------------------------------------------------------

def winding_of(z_of_t) -> tuple[int, float]:
    """Winding number of the closed curve t -> z_of_t(t), t in [0, 1).

    Phase increments are taken in (-pi, pi]; the sample count doubles from 64
    until every increment is below pi/2 and the total is within 1e-6 of a
    multiple of 2 pi.  Returns (winding, min |z| over the final samples).
    """
    n = WINDING_START
    while n <= WINDING_MAX:
        t = np.arange(n) / n
        z = z_of_t(t)
        mag = np.abs(z)
        if mag.min() <= WINDING_MIN_Z * mag.max():
            raise WindingError("loop crosses a zero of e_x + i e_y")
        steps = np.angle(np.roll(z, -1) / z)
        total = float(np.sum(steps))
        turns = round(total / (2 * math.pi))
        if abs(total - 2 * math.pi * turns) <= 1e-6 and np.abs(steps).max() < math.pi / 2:
            return int(turns), float(mag.min())
        n *= 2
    raise WindingError(f"winding number did not converge with {WINDING_MAX} samples")


def winding_number(model: EFieldModel, loop: ParametricLoop) -> int:
    """Signed number of turns of Z = e_x + i e_y around 0 as ``loop`` is traversed."""
    return _loop_winding(model, loop)[0]


def _loop_winding(model, loop):
    def z_of_t(t):
        e = eval_e(model, loop.points(t))
        return e[:, 0] + 1j * e[:, 1]

    return winding_of(z_of_t)


def _piercing_winding(model, center, radius, s: StringPiercing, delta_scale, orientation):
    loop = sphere_loop(center, radius, s.point, s.delta * delta_scale, orientation)
    return _loop_winding(model, loop)


# --------------------------------------------------------------------------
# Charges
# --------------------------------------------------------------------------

@dataclass
class WindingCharge:
    g: Fraction
    piercings: list[StringPiercing]
    diagnostics: list[str]


def charge_from_windings(model: EFieldModel, radius: float = 0.5, grid_n: int = 128,
                         center=(0.0, 0.0, 0.0), hemisphere: int = 1,
                         delta_scale: float = 1.0, workers: int = 1) -> WindingCharge:
    """g = (1/2) sum of the windings around the D+ piercings.

    With ``hemisphere=-1`` the D- piercings are used with clockwise loops,
    which gives the same charge.
    """
    center = np.asarray(center, dtype=float)
    search = locate_piercings(model, radius, grid_n, hemisphere, center)
    orientation = 1 if hemisphere == 1 else -1

    def one(s):
        return _piercing_winding(model, center, radius, s, delta_scale, orientation)

    if workers > 1 and len(search.piercings) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, search.piercings))
    else:
        results = [one(s) for s in search.piercings]
    for s, (w, zmin) in zip(search.piercings, results):
        s.winding, s.min_abs_z = w, zmin
    g = Fraction(sum(w for w, _ in results), 2)
    return WindingCharge(g, search.piercings, search.diagnostics)


@dataclass
class ChargeReport:
    g_flux: float
    g_winding: Fraction
    piercings: list[StringPiercing]
    quantization_residual: float
    method_agreement: float
    flux: float
    flux_error: float
    settings: dict
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "g_flux": self.g_flux,
            "g_winding": str(self.g_winding),
            "g_winding_float": float(self.g_winding),
            "piercings": [s.to_dict() for s in self.piercings],
            "quantization_residual": self.quantization_residual,
            "method_agreement": self.method_agreement,
            "flux": self.flux,
            "flux_error": self.flux_error,
            "settings": self.settings,
            "warnings": list(self.warnings),
        }


def full_report(model: EFieldModel, radius: float = 0.5,
                settings: QuadratureSettings = QuadratureSettings(), grid_n: int = 128,
                center=(0.0, 0.0, 0.0)) -> ChargeReport:
    """Charge by surface flux and by winding sum, with their cross-checks."""
    try:
        flux = charge_from_flux(model, radius, settings, center)
    except GeophaseError as err:
        raise MethodError("flux_sphere", err) from err
    try:
        wind = charge_from_windings(model, radius, grid_n, center, workers=settings.workers)
    except GeophaseError as err:
        raise MethodError("charge_from_windings", err) from err
    agreement = abs(flux.charge - float(wind.g))
    warnings = list(wind.diagnostics)
    if agreement > AGREEMENT_WARN:
        warnings.insert(0, f"flux and winding charges disagree by {agreement:.3e}")
    echo = {**settings.echo(), "radius": radius, "grid_n": grid_n,
            "center": [float(c) for c in center]}
    return ChargeReport(
        g_flux=flux.charge,
        g_winding=wind.g,
        piercings=wind.piercings,
        quantization_residual=flux.quantization_residual,
        method_agreement=agreement,
        flux=flux.flux,
        flux_error=flux.error,
        settings=echo,
        warnings=warnings,
    )
