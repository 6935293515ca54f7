"""Pseudospectral nonlinear operators: convection, transport, Ito corrector.

Products are formed in physical space on the native grid and truncated with
the lattice's 2/3-rule mask, which is exact for quadratic products of masked
inputs. Constant transport coefficients never touch physical space: they act
as the exact diagonal multiplier i (xi . k).
"""

from __future__ import annotations

import threading
from functools import lru_cache

import numpy as np
import scipy.fft as _fft

from .fields import (SpectralField, _leray_raw, leray_project,
                     require_same_lattice, zero_field)
from .lattice import WaveLattice

_local = threading.local()


class TransformWorkspace:
    """Per-thread scratch buffer for the physical-space product stage.

    One buffer per (thread, lattice); reuse avoids reallocating the product
    array on every nonlinear evaluation. Lattice-sized, so products formed
    here are exact for dealiased inputs under the 2/3-rule mask.
    """

    def __init__(self, lattice: WaveLattice):
        self.lattice = lattice
        self.product = np.empty((lattice.dim,) + lattice.shape, dtype=np.float64)

    @classmethod
    def for_lattice(cls, lattice: WaveLattice) -> "TransformWorkspace":
        cache = getattr(_local, "workspaces", None)
        if cache is None:
            cache = _local.workspaces = {}
        key = (lattice.dim, lattice.grid_n)
        ws = cache.get(key)
        if ws is None or ws.lattice != lattice:
            ws = cache[key] = cls(lattice)
        return ws


def _spatial_axes(lattice: WaveLattice) -> tuple[int, ...]:
    return tuple(range(1, lattice.dim + 1))


@lru_cache(maxsize=32)
def _convect_arrays(lattice: WaveLattice) -> tuple[np.ndarray, np.ndarray]:
    """Cached (i*k, n_modes * dealias_mask) multiplier arrays."""
    ik = 1j * lattice.k.astype(np.float64)
    scale = lattice.n_modes * lattice.dealias_mask.astype(np.float64)
    ik.flags.writeable = False
    scale.flags.writeable = False
    return ik, scale


def to_physical(f: SpectralField) -> np.ndarray:
    """Grid values of the field; u_hat are spectral coefficients (fft / n^d)."""
    lat = f.lattice
    phys = _fft.ifftn(f.coeffs, axes=_spatial_axes(lat)) * lat.n_modes
    return np.ascontiguousarray(phys.real)


def from_physical(lattice: WaveLattice, values: np.ndarray) -> np.ndarray:
    """Spectral coefficients of grid values (inverse of to_physical).

    The trailing `dim` axes are spatial, so both scalar fields (n, ..., n)
    and component stacks (dim, n, ..., n) are accepted.
    """
    axes = tuple(range(values.ndim - lattice.dim, values.ndim))
    return _fft.fftn(values, axes=axes) / lattice.n_modes


def dealias(f: SpectralField) -> SpectralField:
    """Zero all modes outside the 2/3-rule mask."""
    return f.with_coeffs(np.where(f.lattice.dealias_mask, f.coeffs, 0.0))


def gradient_physical(f: SpectralField, component: int) -> np.ndarray:
    """Physical-space gradient of one velocity component, shape (dim, n, ...)."""
    lat = f.lattice
    dhat = 1j * lat.k * f.coeffs[component]
    return np.ascontiguousarray(
        (_fft.ifftn(dhat, axes=_spatial_axes(lat)) * lat.n_modes).real)


def convect(u: SpectralField, v: SpectralField) -> SpectralField:
    """Leray-projected advection P((u . grad) v), dealiased.

    Advective form: the physical-space products u_j * d_j v_m are summed per
    component, transformed back, masked, and projected. Inputs are expected
    dealiased and divergence-free. All dim^2 gradient transforms are batched
    into one call.
    """
    require_same_lattice(u, v)
    lat = u.lattice
    dim = lat.dim
    axes = tuple(range(-dim, 0))
    ik, dealias_scale = _convect_arrays(lat)
    u_phys = _fft.ifftn(u.coeffs, axes=axes).real
    grad_hat = ik[None, :] * v.coeffs[:, None]  # grad_hat[m, j] = i k_j v_hat[m]
    grad = _fft.ifftn(grad_hat, axes=axes).real
    prod = TransformWorkspace.for_lattice(lat).product
    for m in range(dim):
        np.multiply(u_phys[0], grad[m, 0], out=prod[m])
        for j in range(1, dim):
            prod[m] += u_phys[j] * grad[m, j]
    out_hat = _fft.fftn(prod, axes=axes)
    out_hat *= dealias_scale  # restores the two unscaled inverse transforms, masks
    return SpectralField(lat, _leray_raw(lat, out_hat), solenoidal=True)


def transport(xi, u: SpectralField) -> SpectralField:
    """(xi . grad) u for a constant vector or spectral-field coefficient.

    Constant xi: exact diagonal multiplier i (xi . k), no transform, and the
    result stays solenoidal when u is. Non-constant xi (experimental): the
    dealiased pseudospectral product sum_j xi_j d_j u, not Leray-projected.
    """
    if isinstance(xi, SpectralField):
        require_same_lattice(xi, u)
        lat = u.lattice
        xi_phys = to_physical(xi)
        out_hat = np.empty_like(u.coeffs)
        for m in range(lat.dim):
            grad_um = gradient_physical(u, m)
            out_hat[m] = from_physical(lat, np.einsum("j...,j...->...", xi_phys, grad_um))
        out_hat = np.where(lat.dealias_mask, out_hat, 0.0)
        return SpectralField(lat, out_hat)
    vec = np.asarray(xi, dtype=np.float64)
    lat = u.lattice
    if vec.shape != (lat.dim,):
        raise ValueError(f"constant xi must have shape ({lat.dim},)")
    phase = 1j * np.einsum("j,j...->...", vec, lat.k.astype(np.float64))
    out = np.where(lat.active, u.coeffs * phase, 0.0)
    return u.with_coeffs(out)


def ito_corrector(xis, u: SpectralField, k_max: int | None = None) -> SpectralField:
    """Stratonovich-to-Ito drift 1/2 sum_k (xi_k . grad)(xi_k . grad) u.

    For constant coefficients this is the real nonpositive multiplier
    -1/2 sum_k (xi_k . k)^2 (dissipative). Mixed or spectral-field
    coefficients fall back to nested transport with dealiasing and a final
    Leray projection. An empty family returns the zero field.
    """
    xis = list(xis)
    if k_max is not None:
        xis = xis[:k_max]
    if not xis:
        return zero_field(u.lattice)
    lat = u.lattice
    constants = [x for x in xis if not isinstance(x, SpectralField)]
    if len(constants) == len(xis):
        kf = lat.k.astype(np.float64)
        mult = np.zeros(lat.shape, dtype=np.float64)
        for vec in constants:
            vec = np.asarray(vec, dtype=np.float64)
            mult -= 0.5 * np.einsum("j,j...->...", vec, kf) ** 2
        out = np.where(lat.active, u.coeffs * mult, 0.0)
        return u.with_coeffs(out)
    acc = zero_field(lat)
    for xi in xis:
        acc = acc + transport(xi, transport(xi, u))
    return leray_project(acc.with_coeffs(0.5 * acc.coeffs))
