"""Pointwise spectral and geometric quantities of H(r) = s(r) + e(r).sigma.

Every function accepts a single point ``(3,)`` or a batch ``(..., 3)``.  The
gauge is the one of the standard eigenvector choice

    psi_+- = (e_x - i e_y, +-e - e_z) / sqrt(2 e (e -+ e_z)),

which is singular on the Dirac strings D+ (e_x = e_y = 0, e_z > 0) for the
upper band.  Band -1 quantities are obtained by substituting e -> -e, which
swaps the two bands of H.
"""

from __future__ import annotations

import numpy as np

from .errors import DegeneracyError, OnStringError
from .model import EFieldModel, eval_e, eval_e_jacobian, eval_s
from . import expr as ex
from .model import _point

EPS_D = 1e-10  # relative width of the on-string band
EPS_M = 1e-12  # absolute ||e|| below which a point counts as degenerate
CURL_STEP = 1e-3  # curl stencil step, relative to ||r||

SIGMA = np.array([
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)


def _check_band(band: int) -> int:
    if band not in (1, -1):
        raise ValueError(f"band must be +1 or -1, got {band!r}")
    return band


def _field(model, r, band=1, jacobian=False):
    if jacobian:
        e, J = eval_e_jacobian(model, r)
        return band * e, band * J
    return band * eval_e(model, r)


def hamiltonian_at(model: EFieldModel, r) -> np.ndarray:
    e = eval_e(model, r)
    s = eval_s(model, r)
    H = np.einsum("...i,ijk->...jk", e.astype(complex), SIGMA)
    return H + s[..., None, None] * np.eye(2)


def energies(model: EFieldModel, r):
    """(E-, E+) = (s - ||e||, s + ||e||)."""
    norm = np.linalg.norm(eval_e(model, r), axis=-1)
    s = eval_s(model, r)
    return s - norm, s + norm


def eigenvector(model: EFieldModel, r, band: int = 1, eps_d: float = EPS_D) -> np.ndarray:
    """Normalized eigenvector of the given band in the fixed gauge."""
    _check_band(band)
    e = eval_e(model, r)
    return _eigvec(e, band, eps_d)


def _gap(e, norm, band):
    """e - band*e_z without cancellation: (e_x^2 + e_y^2) / (e + band*e_z) when band*e_z > 0."""
    bz = band * e[..., 2]
    rho2 = e[..., 0] ** 2 + e[..., 1] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(bz > 0, rho2 / (norm + bz), norm - bz)


def _eigvec(e, band, eps_d=EPS_D):
    norm = np.linalg.norm(e, axis=-1)
    if np.any(norm <= EPS_M):
        raise DegeneracyError("eigenvectors are undefined at a degeneracy")
    rho2 = e[..., 0] ** 2 + e[..., 1] ** 2
    if np.any((band * e[..., 2] > 0) & (rho2 <= eps_d ** 2 * norm ** 2)):
        raise OnStringError(f"point lies on the Dirac string D{'+' if band > 0 else '-'}")
    gap = _gap(e, norm, band)
    top = e[..., 0] - 1j * e[..., 1]
    scale = 1.0 / np.sqrt(2.0 * norm * gap)
    # band*e - e_z = band * gap
    return np.stack([top * scale, band * gap * scale], axis=-1)


def on_string_mask(model: EFieldModel, r, eps_d: float = EPS_D) -> np.ndarray:
    """True where the connection is undefined (on D+ or D-, or at a degeneracy)."""
    e = eval_e(model, r)
    rho2 = e[..., 0] ** 2 + e[..., 1] ** 2
    norm2 = np.sum(e * e, axis=-1)
    return (rho2 <= eps_d ** 2 * norm2) | (np.sqrt(norm2) <= EPS_M)


def _connection(e, J, eps_d=EPS_D):
    rho2 = e[..., 0] ** 2 + e[..., 1] ** 2
    norm = np.linalg.norm(e, axis=-1)
    if np.any(norm <= EPS_M):
        raise DegeneracyError("connection is undefined at a degeneracy")
    if np.any(rho2 <= eps_d ** 2 * norm ** 2):
        raise OnStringError("point lies on a Dirac string (e_x = e_y = 0)")
    num = e[..., 1, None] * J[..., 0, :] - e[..., 0, None] * J[..., 1, :]
    # (1 + e_z/e) / rho^2 = 1 / (e (e - e_z)); the second form avoids cancellation for e_z < 0
    ez = e[..., 2]
    factor = np.where(ez >= 0, (1.0 + ez / norm) / rho2, 1.0 / (norm * (norm - np.minimum(ez, 0.0))))
    return num * (0.5 * factor)[..., None]


def berry_connection(model: EFieldModel, r, band: int = 1, eps_d: float = EPS_D) -> np.ndarray:
    """A = (e_y grad e_x - e_x grad e_y) / (2 (e_x^2 + e_y^2)) * (1 + e_z / e).

    Equals Im<psi|grad psi> for the band's eigenvector.
    """
    e, J = _field(model, r, _check_band(band), jacobian=True)
    return _connection(e, J, eps_d)


def _curvature(e, J):
    norm = np.linalg.norm(e, axis=-1)
    if np.any(norm <= EPS_M):
        raise DegeneracyError("curvature is singular at a degeneracy")
    gx, gy, gz = J[..., 0, :], J[..., 1, :], J[..., 2, :]
    total = (e[..., 0, None] * np.cross(gy, gz)
             + e[..., 1, None] * np.cross(gz, gx)
             + e[..., 2, None] * np.cross(gx, gy))
    return total / (2.0 * norm ** 3)[..., None]


def berry_curvature(model: EFieldModel, r, band: int = 1) -> np.ndarray:
    """B from e and its Jacobian; smooth everywhere except on the degeneracy set."""
    e, J = _field(model, r, _check_band(band), jacobian=True)
    return _curvature(e, J)


def berry_curvature_me(model: EFieldModel, r, band: int = 1, eps_d: float = EPS_D) -> np.ndarray:
    """B = Im(<+|grad H|-> x <-|grad H|+>) / (E+ - E-)^2 from explicit eigenvectors.

    Independent of ``berry_curvature``: goes through the eigenvectors and the
    matrix gradient of H, including the (irrelevant) gradient of s.
    """
    _check_band(band)
    e, J = _field(model, r, band, jacobian=True)
    norm = np.linalg.norm(e, axis=-1)
    if np.any(norm <= EPS_M):
        raise DegeneracyError("curvature is singular at a degeneracy")
    upper = _eigvec(e, 1, eps_d)
    lower = _eigvec(e, -1, eps_d)
    _, ds = ex.value_and_derivatives(model.s, _point(model, r))
    ds = np.broadcast_to(np.moveaxis(ds, 0, -1), e.shape)
    # dH[..., k] = ds_k I + sum_i dE_ik sigma_i
    dH = (np.einsum("...ik,ijl->...kjl", J.astype(complex), SIGMA)
          + ds[..., :, None, None] * np.eye(2))
    a = np.einsum("...j,...kjl,...l->...k", upper.conj(), dH, lower)
    b = np.einsum("...j,...kjl,...l->...k", lower.conj(), dH, upper)
    return np.imag(np.cross(a, b)) / (2.0 * norm[..., None]) ** 2


def curl_b(model: EFieldModel, r, h: float | None = None, band: int = 1) -> np.ndarray:
    """Fourth-order central-difference curl of the curvature at a single point."""
    r = np.asarray(r, dtype=float)
    if h is None:
        h = CURL_STEP * float(np.linalg.norm(r))
    if h <= 0:
        raise ValueError("curl step must be positive")
    eye = np.eye(3) * h
    B = berry_curvature(model, r + np.concatenate([eye, -eye, 2 * eye, -2 * eye]), band)
    # dB[k, i] = d B_i / d r_k with the five-point stencil (8 f(h) - 8 f(-h) - f(2h) + f(-2h)) / 12h
    dB = (8.0 * (B[:3] - B[3:6]) - (B[6:9] - B[9:])) / (12.0 * h)
    return np.array([dB[1, 2] - dB[2, 1], dB[2, 0] - dB[0, 2], dB[0, 1] - dB[1, 0]])
