"""Spectral vector fields on the torus lattice and the diagonal operator algebra.

A SpectralField stores the complex Fourier coefficients u_hat of a mean-free
vector field, one dim-vector per wavevector. Everything here is a Fourier
multiplier (Leray projector, Galerkin truncation, fractional Stokes powers,
Gevrey weights) or a Parseval sum, so all operations are pure and exact up to
rounding. Coefficient arrays are frozen at construction; operations return
new fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .lattice import WaveLattice

_LOG_MAX_DOUBLE = 709.0  # exp() overflows just above this


class LatticeMismatchError(ValueError):
    """Raised when combining fields from different lattices."""


class GevreyOverflowError(OverflowError):
    """Gevrey exponent exceeds the configured guard: phi too large for this lattice."""


@dataclass(frozen=True)
class GevreyWeight:
    """Parameters of the multiplier |k|^r * exp(phi * |k|^(1/s)).

    s is the Gevrey index (s=1: real-analytic class), r the Sobolev corrector
    carried by weighted norms, phi the analyticity width. exp_guard caps the
    exponent before evaluation; exceeding it raises instead of silently
    producing inf.
    """

    s: float = 1.0
    r: float = 1.0
    phi: float = 0.0
    exp_guard: float = 650.0

    def __post_init__(self):
        if self.s <= 0:
            raise ValueError(f"Gevrey index s must be > 0, got {self.s}")
        if self.r < 0 or self.phi < 0:
            raise ValueError("Sobolev corrector r and width phi must be >= 0")

    def with_phi(self, phi: float) -> "GevreyWeight":
        return replace(self, phi=phi)

    def exponent(self, abs_k: np.ndarray) -> np.ndarray:
        """phi * |k|^(1/s) per mode, unclamped."""
        if self.phi == 0.0:
            return np.zeros_like(abs_k)
        return self.phi * np.power(abs_k, 1.0 / self.s)

    def multiplier(self, abs_k: np.ndarray) -> np.ndarray:
        """|k|^r * exp(min(phi |k|^(1/s), exp_guard)) per mode."""
        out = np.exp(np.minimum(self.exponent(abs_k), self.exp_guard))
        if self.r != 0.0:
            out = out * np.power(np.maximum(abs_k, 1e-300), self.r)
            out = np.where(abs_k > 0, out, 0.0)
        return out

    def max_exponent(self, lattice: WaveLattice) -> float:
        kmax = float(lattice.abs_k.max())
        return float(self.phi * kmax ** (1.0 / self.s))


@dataclass(frozen=True)
class SpectralField:
    """Fourier coefficients of a mean-free vector field, shape (dim, n, ..., n).

    Invariants (enforced by the constructors here, checked by
    validate_physical): Hermitian symmetry conj(u_hat[k]) == u_hat[-k],
    u_hat[0] == 0, Nyquist rows zero; if solenoidal, k . u_hat[k] == 0.
    """

    lattice: WaveLattice
    coeffs: np.ndarray = field(repr=False)
    solenoidal: bool = False

    def __post_init__(self):
        expected = (self.lattice.dim,) + self.lattice.shape
        if self.coeffs.shape != expected:
            raise ValueError(f"coeffs shape {self.coeffs.shape} != {expected}")
        if self.coeffs.dtype != np.complex128:
            object.__setattr__(self, "coeffs", self.coeffs.astype(np.complex128))
        self.coeffs.flags.writeable = False

    def with_coeffs(self, coeffs: np.ndarray, solenoidal: bool | None = None) -> "SpectralField":
        sol = self.solenoidal if solenoidal is None else solenoidal
        return SpectralField(self.lattice, coeffs, solenoidal=sol)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        require_same_lattice(self, other)
        return SpectralField(self.lattice, self.coeffs + other.coeffs,
                             solenoidal=self.solenoidal and other.solenoidal)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        require_same_lattice(self, other)
        return SpectralField(self.lattice, self.coeffs - other.coeffs,
                             solenoidal=self.solenoidal and other.solenoidal)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.lattice, self.coeffs * scalar, solenoidal=self.solenoidal)

    __rmul__ = __mul__


def zero_field(lattice: WaveLattice) -> SpectralField:
    return SpectralField(lattice, np.zeros((lattice.dim,) + lattice.shape, dtype=np.complex128),
                         solenoidal=True)


def require_same_lattice(f: SpectralField, g: SpectralField) -> None:
    if f.lattice != g.lattice:
        raise LatticeMismatchError(
            f"lattice mismatch: ({f.lattice.dim},{f.lattice.grid_n}) vs "
            f"({g.lattice.dim},{g.lattice.grid_n})")


def hermitize(lattice: WaveLattice, coeffs: np.ndarray) -> np.ndarray:
    """Symmetrize so conj(u_hat[k]) == u_hat[-k]; zero inactive modes."""
    sym = 0.5 * (coeffs + np.conj(lattice.reflect(coeffs)))
    return np.where(lattice.active, sym, 0.0)


# ---------------------------------------------------------------------------
# projectors and multipliers

@lru_cache(maxsize=32)
def _leray_arrays(lattice: WaveLattice) -> tuple[np.ndarray, np.ndarray]:
    """Cached (k/|k|^2, active-mask float) arrays of the Leray multiplier."""
    ksq_safe = np.where(lattice.ksq > 0, lattice.ksq, 1).astype(np.float64)
    k_over_ksq = lattice.k / ksq_safe
    act = lattice.active.astype(np.float64)
    k_over_ksq.flags.writeable = False
    act.flags.writeable = False
    return k_over_ksq, act


def _leray_raw(lattice: WaveLattice, coeffs: np.ndarray) -> np.ndarray:
    """Leray multiplier without the active-mask pass (inputs already masked)."""
    k_over_ksq, _ = _leray_arrays(lattice)
    k_dot_u = np.einsum("j...,j...->...", lattice.k, coeffs)
    return coeffs - k_over_ksq * k_dot_u


def leray_project(f: SpectralField) -> SpectralField:
    """Project onto divergence-free fields: u_hat -> u_hat - k (k.u_hat)/|k|^2."""
    lat = f.lattice
    _, act = _leray_arrays(lat)
    out = _leray_raw(lat, f.coeffs) * act
    return f.with_coeffs(out, solenoidal=True)


def galerkin_project(f: SpectralField, cutoff: int) -> SpectralField:
    """Keep exactly the modes with |k| <= cutoff."""
    mask = f.lattice.ball_mask(cutoff)
    return f.with_coeffs(np.where(mask, f.coeffs, 0.0))


def galerkin_complement(f: SpectralField, cutoff: int) -> SpectralField:
    """The tail I - P^N: modes with |k| > cutoff."""
    mask = f.lattice.active & ~f.lattice.ball_mask(cutoff)
    return f.with_coeffs(np.where(mask, f.coeffs, 0.0))


def mode_weight(lattice: WaveLattice, r: float) -> np.ndarray:
    """|k|^(2r) per mode (zero on inactive modes), the H^r Parseval weight."""
    if r == 0.0:
        return lattice.active.astype(np.float64)
    w = np.zeros(lattice.shape, dtype=np.float64)
    act = lattice.active
    w[act] = np.power(lattice.ksq[act].astype(np.float64), r)
    return w


def stokes_power(f: SpectralField, r: float) -> SpectralField:
    """Fractional Stokes power: scale mode k by |k|^(2r); r=0 is the identity."""
    if r == 0.0:
        return f.with_coeffs(np.where(f.lattice.active, f.coeffs, 0.0))
    return f.with_coeffs(f.coeffs * mode_weight(f.lattice, r))


def gevrey_apply(f: SpectralField, w: GevreyWeight) -> SpectralField:
    """Apply the exponential multiplier exp(phi |k|^(1/s)); requires w.r == 0.

    Raises GevreyOverflowError when phi * max|k|^(1/s) exceeds the guard,
    signalling that phi is too large for this lattice.
    """
    if w.r != 0.0:
        raise ValueError("gevrey_apply expects a weight with r=0; use stokes_power for the Sobolev part")
    if w.phi == 0.0:
        return f.with_coeffs(np.where(f.lattice.active, f.coeffs, 0.0))
    if w.max_exponent(f.lattice) > w.exp_guard:
        raise GevreyOverflowError(
            f"Gevrey exponent {w.max_exponent(f.lattice):.1f} exceeds guard {w.exp_guard}")
    mult = np.exp(w.exponent(f.lattice.abs_k))
    out = np.where(f.lattice.active, f.coeffs * mult, 0.0)
    return f.with_coeffs(out)


# ---------------------------------------------------------------------------
# norms and inner products

def _mod_sq(coeffs: np.ndarray) -> np.ndarray:
    """Per-mode squared vector modulus |u_hat[k]|^2."""
    return np.sum(coeffs.real**2 + coeffs.imag**2, axis=0)


def sobolev_norm_sq(f: SpectralField, r: float) -> float:
    """Squared homogeneous H^r norm: sum_k |k|^(2r) |u_hat[k]|^2."""
    return float(np.sum(mode_weight(f.lattice, r) * _mod_sq(f.coeffs)))


def sobolev_norm(f: SpectralField, r: float) -> float:
    return math.sqrt(sobolev_norm_sq(f, r))


def gevrey_sobolev_norm_sq(f: SpectralField, w: GevreyWeight) -> float:
    """Squared Gevrey norm ||exp(phi A^(1/2s)) f||_{H^r}^2 via log-sum-exp.

    Accumulates in log space so large phi yields a finite value or a
    GevreyOverflowError, never a silent inf.
    """
    lat = f.lattice
    mod_sq = _mod_sq(f.coeffs)
    sel = lat.active & (mod_sq > 0.0)
    if not np.any(sel):
        return 0.0
    abs_k = lat.abs_k[sel]
    log_terms = 2.0 * w.exponent(abs_k) + np.log(mod_sq[sel])
    if w.r != 0.0:
        log_terms = log_terms + (2.0 * w.r) * np.log(abs_k)
    peak = float(log_terms.max())
    log_sq = peak + math.log(float(np.sum(np.exp(log_terms - peak))))
    if log_sq > _LOG_MAX_DOUBLE or w.max_exponent(lat) > w.exp_guard:
        raise GevreyOverflowError(
            f"Gevrey-H^r norm overflows double range (log norm^2 = {log_sq:.1f})")
    return math.exp(log_sq)


def gevrey_sobolev_norm(f: SpectralField, w: GevreyWeight) -> float:
    return math.sqrt(gevrey_sobolev_norm_sq(f, w))


def weighted_inner(f: SpectralField, g: SpectralField, r: float = 0.0,
                   w: GevreyWeight | None = None) -> float:
    """Real inner product <A^r e^{phi A^(1/2s)} f, A^r e^{phi A^(1/2s)} g>_{L^2}.

    Computed with explicit multipliers; raises GevreyOverflowError when the
    squared weight leaves double range.
    """
    require_same_lattice(f, g)
    lat = f.lattice
    weight = mode_weight(lat, 2.0 * r)
    if w is not None and w.phi > 0.0:
        if w.max_exponent(lat) > w.exp_guard or 2.0 * w.max_exponent(lat) > _LOG_MAX_DOUBLE - 30.0:
            raise GevreyOverflowError("squared Gevrey weight overflows double range")
        weight = weight * np.exp(2.0 * w.exponent(lat.abs_k))
    cross = np.sum(f.coeffs * np.conj(g.coeffs), axis=0).real
    return float(np.sum(weight * cross))


def l2_inner(f: SpectralField, g: SpectralField) -> float:
    return weighted_inner(f, g, r=0.0)


# ---------------------------------------------------------------------------
# validation and field construction

@dataclass(frozen=True)
class PhysicalReport:
    """Residuals of the SpectralField invariants; a pure check."""

    hermitian_residual: float
    mean_residual: float
    nyquist_residual: float
    divergence_residual: float | None  # None when not tagged solenoidal
    max_modulus: float

    def ok(self, tol: float = 1e-12) -> bool:
        scale = max(self.max_modulus, 1.0)
        res = [self.hermitian_residual, self.mean_residual, self.nyquist_residual]
        if self.divergence_residual is not None:
            res.append(self.divergence_residual)
        return all(v <= tol * scale for v in res)


def validate_physical(f: SpectralField) -> PhysicalReport:
    """Report how far f is from satisfying the field invariants."""
    lat = f.lattice
    herm = float(np.abs(np.conj(lat.reflect(f.coeffs)) - f.coeffs).max())
    zero_idx = (slice(None),) + (0,) * lat.dim
    mean = float(np.abs(f.coeffs[zero_idx]).max())
    nyq = np.any(np.abs(lat.k) == lat.grid_n // 2, axis=0)
    nyquist = float(np.abs(f.coeffs[:, nyq]).max()) if nyq.any() else 0.0
    div = None
    if f.solenoidal:
        div = float(np.abs(np.sum(lat.k * f.coeffs, axis=0)).max())
    return PhysicalReport(
        hermitian_residual=herm,
        mean_residual=mean,
        nyquist_residual=nyquist,
        divergence_residual=div,
        max_modulus=float(np.abs(f.coeffs).max()),
    )


def random_field(lattice: WaveLattice, rng: np.random.Generator,
                 envelope=None, solenoidal: bool = True) -> SpectralField:
    """Random Hermitian field; envelope(|k|) optionally shapes the spectrum."""
    shape = (lattice.dim,) + lattice.shape
    raw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    coeffs = hermitize(lattice, raw)
    if envelope is not None:
        env = np.zeros(lattice.shape)
        env[lattice.active] = envelope(lattice.abs_k[lattice.active])
        coeffs = coeffs * env
    f = SpectralField(lattice, coeffs)
    return leray_project(f) if solenoidal else f


def random_h1_field(lattice: WaveLattice, seed: int, beta: float = 2.2,
                    k0: float = 1.0) -> SpectralField:
    """Initial-condition generator: random phases, |u_hat[k]| = a |k|^-beta.

    Solenoidal, Hermitian, rescaled so the squared H^1 norm equals k0 exactly.
    beta ~ 2.2 gives H^1-regular but non-analytic data.
    """
    rng = np.random.default_rng(seed)
    f = random_field(lattice, rng, solenoidal=True)
    mod = np.sqrt(_mod_sq(f.coeffs))
    target = np.zeros(lattice.shape)
    act = lattice.active & (mod > 0)
    target[act] = np.power(lattice.abs_k[act], -beta)
    scale = np.where(act, target / np.where(act, mod, 1.0), 0.0)
    f = f.with_coeffs(f.coeffs * scale, solenoidal=True)
    h1 = sobolev_norm_sq(f, 1.0)
    if h1 <= 0:
        raise ValueError("degenerate random field")
    return f.with_coeffs(f.coeffs * math.sqrt(k0 / h1), solenoidal=True)


def restrict_to(f: SpectralField, lattice: WaveLattice) -> SpectralField:
    """Copy f's coefficients at the wavevectors shared with a coarser lattice.

    Modes outside the target lattice are dropped; the target's Nyquist rows
    and zero mode stay zero. Solenoidality and Hermitian symmetry survive
    because restriction acts mode by mode.
    """
    src = f.lattice
    if lattice.dim != src.dim:
        raise LatticeMismatchError("restriction requires equal dimension")
    if lattice.grid_n > src.grid_n:
        raise LatticeMismatchError("target lattice must not be finer than the source")
    from .lattice import _int_frequencies
    freq = _int_frequencies(lattice.grid_n)
    src_idx = [freq % src.grid_n for _ in range(lattice.dim)]
    gathered = f.coeffs[(slice(None),) + np.ix_(*src_idx)]
    gathered = np.where(lattice.active, gathered, 0.0)
    return SpectralField(lattice, gathered, solenoidal=f.solenoidal)


def single_mode_field(lattice: WaveLattice, kvec, amplitude,
                      solenoidal: bool = True) -> SpectralField:
    """Field with one Hermitian mode pair: u_hat[k] = amplitude, u_hat[-k] = conj."""
    kvec = tuple(int(v) for v in kvec)
    amplitude = np.asarray(amplitude, dtype=np.complex128)
    if amplitude.shape != (lattice.dim,):
        raise ValueError(f"amplitude must have shape ({lattice.dim},)")
    coeffs = np.zeros((lattice.dim,) + lattice.shape, dtype=np.complex128)
    idx = tuple(v % lattice.grid_n for v in kvec)
    neg = tuple((-v) % lattice.grid_n for v in kvec)
    coeffs[(slice(None),) + idx] = amplitude
    coeffs[(slice(None),) + neg] = np.conj(amplitude)
    coeffs = np.where(lattice.active, coeffs, 0.0)
    f = SpectralField(lattice, coeffs)
    return leray_project(f) if solenoidal else f
