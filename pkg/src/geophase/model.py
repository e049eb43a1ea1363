"""Field models e(r) defining the two-level Hamiltonian s(r) + e(r).sigma.

A model is three expressions plus an optional scalar shift.  Evaluation works
on points shaped ``(3,)`` or ``(..., 3)`` and returns arrays with the same
leading shape, so integrators can pass whole batches of quadrature nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from . import expr as ex
from .errors import ModelError, NonDifferentiableError

LAMBDA_THRESHOLD = 1e-8
ROTATION_TOL = 1e-12
# Offset used to evaluate axis-regular models on the z-axis itself (see EFieldModel).
AXIS_NUDGE = 1e-100


@dataclass(frozen=True)
class EFieldModel:
    """The three components of e(r), the shift s(r) and parameter bindings.

    ``axis_regular`` marks fields written with 1/sqrt(x^2+y^2) factors that
    have a removable singularity on the z-axis, and whose e_x, e_y vanish
    there.  Points with x = y = 0 exactly are evaluated at x = 1e-100, which
    reproduces the continuous limit of every derivative far below double
    precision; the e_x, e_y values there are set to their limit 0.
    """

    ex: ex.Expression
    ey: ex.Expression
    ez: ex.Expression
    s: ex.Expression = ex.Const(0.0)
    params: Mapping[str, float] = field(default_factory=dict)
    label: str = "custom"
    axis_regular: bool = False

    @property
    def components(self):
        return (self.ex, self.ey, self.ez)

    def echo(self) -> dict:
        return {
            "label": self.label,
            "ex": ex.to_string(self.ex),
            "ey": ex.to_string(self.ey),
            "ez": ex.to_string(self.ez),
            "s": ex.to_string(self.s),
            "params": {k: float(v) for k, v in sorted(self.params.items())},
        }


def from_strings(exs: str, eys: str, ezs: str, s: str = "0", params=None,
                 label: str = "custom") -> EFieldModel:
    model = EFieldModel(ex.parse(exs), ex.parse(eys), ex.parse(ezs), ex.parse(s),
                        dict(params or {}), label)
    missing = set().union(*(ex.parameters(c) for c in (*model.components, model.s)))
    missing -= set(model.params)
    if missing:
        raise ModelError(f"unbound parameters: {', '.join(sorted(missing))}")
    return model


# --------------------------------------------------------------------------
# Built-in families
# --------------------------------------------------------------------------

BUILTINS = {
    "diabolical": {
        "description": "generic conical contact e = (x, y, z); charge +1/2",
        "params": {},
        "safe_radius": None,
    },
    "quadratic_shift": {
        "description": "e = (x^2 + z, y^2 + z, z); charge 0, four strings in D- (D+ after a pi flip about e_x)",
        "params": {},
        "safe_radius": None,
    },
    "power_contact": {
        "description": "e = ((xy)^n, (x^2n - y^2n)/2, z); charge -1 for odd n, 0 for even n",
        "params": {"n": "integer >= 1"},
        "safe_radius": None,
    },
    "chebyshev_contact": {
        "description": "e = (rho^n C_n(x/rho), rho^n C_n(cos(pi/2n) x/rho + sin(pi/2n) y/rho), z); charge n/2",
        "params": {"n": "integer >= 1"},
        "safe_radius": 0.5,
    },
}


def _order(params: Mapping) -> int:
    if "n" not in params:
        raise ModelError("missing integer parameter 'n'")
    n = params["n"]
    if isinstance(n, bool) or not float(n).is_integer() or int(n) < 1:
        raise ModelError(f"parameter 'n' must be an integer >= 1, got {n!r}")
    return int(n)


def make_builtin(name: str, params: Mapping | None = None) -> EFieldModel:
    """One of the built-in field families, truncated at its leading terms."""
    params = dict(params or {})
    if name == "diabolical":
        return from_strings("x", "y", "z", label=name)
    if name == "quadratic_shift":
        return from_strings("x^2 + z", "y^2 + z", "z", label=name)
    if name == "power_contact":
        n = _order(params)
        m = from_strings(f"(x*y)^{n}", f"(x^{2 * n} - y^{2 * n})/2", "z", label=f"{name}(n={n})")
        return replace(m, params={"n": float(n)})
    if name == "chebyshev_contact":
        n = _order(params)
        rho = "sqrt(x^2 + y^2)"
        c, s = math.cos(math.pi / (2 * n)), math.sin(math.pi / (2 * n))
        m = from_strings(
            f"{rho}^{n}*cheb({n}, x/{rho})",
            f"{rho}^{n}*cheb({n}, {c!r}*x/{rho} + {s!r}*y/{rho})",
            "z",
            label=f"{name}(n={n})",
        )
        return replace(m, params={"n": float(n)}, axis_regular=True)
    raise ModelError(f"unknown model family {name!r}; known: {', '.join(BUILTINS)}")


def model_from_spec(spec: Mapping) -> EFieldModel:
    """Build a model from the config form ``{"builtin", "params"}`` or ``{"ex", "ey", "ez", ...}``."""
    if "builtin" in spec:
        return make_builtin(spec["builtin"], spec.get("params"))
    missing = [k for k in ("ex", "ey", "ez") if k not in spec]
    if missing:
        raise ModelError(f"model is missing {', '.join(missing)}")
    return from_strings(spec["ex"], spec["ey"], spec["ez"], spec.get("s", "0"),
                        spec.get("params"), spec.get("label", "custom"))


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------

def _point(model: EFieldModel, r) -> ex.EvalPoint:
    r = np.asarray(r, dtype=float)
    if r.shape[-1] != 3:
        raise ValueError(f"points must have a trailing axis of length 3, got shape {r.shape}")
    x, y, z = r[..., 0], r[..., 1], r[..., 2]
    if model.axis_regular:
        x = np.where((x == 0) & (y == 0), AXIS_NUDGE, x)
    return ex.EvalPoint(x, y, z, model.params)


def _on_axis_limit(model: EFieldModel, r, e: np.ndarray) -> np.ndarray:
    if model.axis_regular:
        r = np.asarray(r, dtype=float)
        axis = (r[..., 0] == 0) & (r[..., 1] == 0)
        if np.any(axis):
            e = e.copy()
            e[axis, :2] = 0.0
    return e


def eval_e(model: EFieldModel, r) -> np.ndarray:
    """e at ``r``; shape ``r.shape``."""
    at = _point(model, r)
    shape = np.shape(r)[:-1]
    e = np.stack([np.broadcast_to(ex.evaluate(c, at), shape) for c in model.components], axis=-1)
    return _on_axis_limit(model, r, e)


def eval_norm(model: EFieldModel, r) -> np.ndarray:
    return np.linalg.norm(eval_e(model, r), axis=-1)


def eval_s(model: EFieldModel, r) -> np.ndarray:
    return np.broadcast_to(ex.evaluate(model.s, _point(model, r)), np.shape(r)[:-1])


def eval_e_jacobian(model: EFieldModel, r):
    """e and its Jacobian (row i = gradient of e_i), shapes (..., 3) and (..., 3, 3)."""
    at = _point(model, r)
    vals, rows = [], []
    for c in model.components:
        v, d = ex.value_and_derivatives(c, at)
        vals.append(v)
        rows.append(np.moveaxis(d, 0, -1))
    return _on_axis_limit(model, r, np.stack(vals, axis=-1)), np.stack(rows, axis=-2)


def eval_jacobian(model: EFieldModel, r) -> np.ndarray:
    return eval_e_jacobian(model, r)[1]


# --------------------------------------------------------------------------
# Gauge rotations
# --------------------------------------------------------------------------

FLIP_X = np.diag([1.0, -1.0, -1.0])


def check_rotation(R) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ModelError(f"rotation must be 3x3, got shape {R.shape}")
    if np.max(np.abs(R.T @ R - np.eye(3))) > ROTATION_TOL:
        raise ModelError("rotation matrix is not orthogonal")
    if abs(np.linalg.det(R) - 1.0) > ROTATION_TOL:
        raise ModelError("rotation matrix must have determinant +1")
    return R


def rotation_matrix(axis, angle: float) -> np.ndarray:
    """Rotation by ``angle`` about ``axis`` (Rodrigues formula)."""
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + math.sin(angle) * K + (1 - math.cos(angle)) * (K @ K)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Haar-random rotation from the QR decomposition of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def _linear_combination(coeffs, terms) -> ex.Expression:
    out = None
    for c, t in zip(coeffs, terms):
        if c == 0:
            continue
        term = t if c == 1 else ex.Neg(t) if c == -1 else ex.Mul(ex.Const(float(c)), t)
        out = term if out is None else ex.Add(out, term)
    return out if out is not None else ex.Const(0.0)


def rotate_gauge(model: EFieldModel, R) -> EFieldModel:
    """Model with e' = R e.  Energies, curvature and charge are unchanged."""
    R = check_rotation(R)
    comps = [_linear_combination(R[i], model.components) for i in range(3)]
    label = model.label if np.array_equal(R, np.eye(3)) else f"{model.label}[rotated]"
    return replace(model, ex=comps[0], ey=comps[1], ez=comps[2], label=label)


# --------------------------------------------------------------------------
# Contact classification
# --------------------------------------------------------------------------

def contact_determinant(model: EFieldModel) -> float:
    """det of the Jacobian of e at the origin."""
    try:
        J = eval_jacobian(model, np.zeros(3))
    except NonDifferentiableError as err:
        raise NonDifferentiableError(f"model is not differentiable at the origin: {err}") from err
    return float(np.linalg.det(J))


def classify_contact(model: EFieldModel, threshold: float = LAMBDA_THRESHOLD) -> tuple[float, str]:
    lam = contact_determinant(model)
    return lam, "generic" if abs(lam) > threshold else "constrained"
