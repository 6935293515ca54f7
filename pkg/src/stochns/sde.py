"""Time integration of the Galerkin-truncated stochastic system.

The state lives on the modes |k| <= N. One step of the exponential
Euler-Maruyama scheme applies the exact viscous semigroup to everything
explicit:

    u+ = exp(-nu A dt) [ u + dt (drift(u) + nu A u) + sum_k diffusion_k(u) dW_k ]

with drift = -P^N P((u.grad)u) - nu A u + 1/2 sum_k P^N P((xi_k.grad)(xi_k.grad)u)
and diffusion_k = P^N P[g_k(u) - (xi_k.grad)u]. Budgets (the Gevrey-H^1 sup
and the nu-weighted Gevrey-H^2 time integral) are accumulated with
left-endpoint quadrature and the stopping monitors are evaluated at step
boundaries; integration continues past a trigger, only the record is kept.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .brownian import IncrementBlock, PathSpec, increments
from .fields import (GevreyWeight, SpectralField, galerkin_project,
                     leray_project, mode_weight, sobolev_norm_sq, zero_field)
from .lattice import WaveLattice
from .noise import CONSTANT, NoiseSystem
from . import nonlinear


class NonFiniteError(RuntimeError):
    """A coefficient turned NaN/Inf; carries the partial trajectory when raised by integrate."""

    def __init__(self, message: str, trajectory: "Trajectory | None" = None):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass(frozen=True)
class StepperConfig:
    """Numerical and monitoring parameters of one Galerkin integration."""

    nu: float
    dt: float
    t_end: float
    cutoff: int
    gevrey: GevreyWeight = GevreyWeight(s=1.0, r=1.0, phi=0.0)
    phi_cap: float = 0.5
    budget_m: float = 2.0        # M > 1, threshold above the initial enstrophy
    h2_r: float = float("inf")   # R > 0, threshold on the H^2 time integral
    k_max: int = 4
    convection: bool = True
    k0: float | None = None      # optional cap on the initial squared H^1 norm

    def __post_init__(self):
        if self.nu <= 0 or self.dt <= 0 or self.t_end < 0:
            raise ValueError("nu, dt must be positive and t_end >= 0")
        if self.budget_m <= 1:
            raise ValueError("budget threshold M must exceed 1")
        if self.h2_r <= 0:
            raise ValueError("H^2 integral threshold R must be positive")

    @property
    def n_steps(self) -> int:
        n = int(round(self.t_end / self.dt))
        if abs(n * self.dt - self.t_end) > 1e-9 * max(1.0, self.t_end):
            raise ValueError(f"t_end={self.t_end} is not a multiple of dt={self.dt}")
        return n

    def phi_at(self, t: float) -> float:
        return min(t, self.phi_cap)


@dataclass(frozen=True)
class StopRecord:
    monitor: str     # "budget" or "h2"
    time: float
    step: int
    value: float


@dataclass(frozen=True)
class SimState:
    """Galerkin state at one time with the running budgets and stop records."""

    t: float
    step: int
    u: SpectralField
    budget_sup: float   # running sup of the squared Gevrey-H^1 norm
    budget_int: float   # running nu * integral of the squared Gevrey-H^2 norm
    h2_int: float       # running integral of the plain squared H^2 norm
    initial_h1_sq: float
    stops: tuple[StopRecord, ...] = ()

    def stop_for(self, monitor: str) -> StopRecord | None:
        for rec in self.stops:
            if rec.monitor == monitor:
                return rec
        return None


@dataclass
class Trajectory:
    """Snapshots plus per-step scalar series of one integration."""

    cfg: StepperConfig
    states: list[SimState]
    series: dict[str, np.ndarray]
    stops: tuple[StopRecord, ...]
    path: PathSpec | None = None

    @property
    def final(self) -> SimState:
        return self.states[-1]

    @property
    def times(self) -> np.ndarray:
        return self.series["t"]


# ---------------------------------------------------------------------------
# stability rule (advective CFL C_adv = 1, noise quadratic-variation rate)

def dt_stability_bound(cfg: StepperConfig, system: NoiseSystem, h1_norm: float) -> float:
    """Documented step-size rule: dt <= min(0.5/(N ||u||_H1), 0.1/noise_rate)."""
    adv = 0.5 / max(cfg.cutoff * max(h1_norm, 1e-30), 1e-30)
    rate = 0.0
    if system.xi.variant == CONSTANT:
        rate += sum((np.linalg.norm(v) * cfg.cutoff) ** 2 for v in system.xi.vectors)
    if system.g.variant == "linear":
        rate += sum(c * c for c in system.g.coefficients)
    noise = 0.1 / rate if rate > 0 else float("inf")
    return min(adv, noise)


def warn_if_unstable(cfg: StepperConfig, system: NoiseSystem, h1_norm: float) -> None:
    bound = dt_stability_bound(cfg, system, h1_norm)
    if cfg.dt > bound:
        warnings.warn(
            f"dt={cfg.dt} exceeds the stability rule bound {bound:.3g} "
            f"(N={cfg.cutoff}, ||u0||_H1={h1_norm:.3g})", RuntimeWarning, stacklevel=2)


# ---------------------------------------------------------------------------
# the stepping engine

class _Stepper:
    """Precomputed multiplier arrays for one (config, system, lattice) triple."""

    def __init__(self, cfg: StepperConfig, system: NoiseSystem, lattice: WaveLattice):
        self.cfg = cfg
        self.system = system
        self.lattice = lattice
        self.ball = lattice.ball_mask(cfg.cutoff)
        self.decay = np.where(self.ball,
                              np.exp(-cfg.nu * cfg.dt * lattice.ksq.astype(np.float64)), 0.0)
        self.w_h1 = mode_weight(lattice, 1.0)
        self.w_h2 = mode_weight(lattice, 2.0)
        self.visc = np.where(lattice.active, lattice.ksq.astype(np.float64), 0.0)
        abs_ball = lattice.abs_k[self.ball]
        max_k = float(abs_ball.max()) if abs_ball.size else 0.0
        if cfg.phi_cap * max_k ** (1.0 / cfg.gevrey.s) > cfg.gevrey.exp_guard:
            raise ValueError("phi_cap too large for this lattice/cutoff (Gevrey guard)")

        # transport multipliers i(xi.k) per family position; None marks spectral xi
        kf = lattice.k.astype(np.float64)
        self.xi_mult: list[np.ndarray | None] = []
        self.xi_phase: list[np.ndarray | None] = []   # the real array (xi.k)
        corrector = np.zeros(lattice.shape)
        self.spectral_xis = []
        for pos in range(len(system.xi.index_set)):
            coef = system.xi.coefficient(pos)
            if isinstance(coef, SpectralField):
                self.xi_mult.append(None)
                self.xi_phase.append(None)
                self.spectral_xis.append(coef)
            else:
                phase = np.einsum("j,j...->...", np.asarray(coef, dtype=np.float64), kf)
                self.xi_mult.append(1j * phase)
                self.xi_phase.append(phase)
                corrector -= 0.5 * phase ** 2
        self.corrector_mult = corrector if not self.spectral_xis else None

        # additive sigma fields arrive pre-projected onto the ball
        self.additive_hat = None
        if system.g.variant == "additive":
            self.additive_hat = [
                np.where(self.ball, leray_project(sig).coeffs, 0.0)
                for sig in system.g.sigmas
            ]

    # -- pieces -------------------------------------------------------------

    def explicit_drift(self, c: np.ndarray) -> np.ndarray:
        """Drift without the viscous term: -P^N P((u.grad)u) + Ito corrector."""
        lat = self.lattice
        out = np.zeros_like(c)
        if self.cfg.convection and np.any(c):
            conv = nonlinear.convect(SpectralField(lat, c, solenoidal=True),
                                     SpectralField(lat, c, solenoidal=True))
            out -= np.where(self.ball, conv.coeffs, 0.0)
        if self.corrector_mult is not None:
            out += np.where(self.ball, c * self.corrector_mult, 0.0)
        elif self.system.xi.index_set:
            corr = nonlinear.ito_corrector(
                [self.system.xi.coefficient(p) for p in range(len(self.system.xi.index_set))],
                SpectralField(lat, c, solenoidal=True))
            out += np.where(self.ball, corr.coeffs, 0.0)
        return out

    def drift(self, c: np.ndarray) -> np.ndarray:
        return self.explicit_drift(c) - self.cfg.nu * self.visc * c

    def diffusion_term(self, k_index: int, c: np.ndarray) -> np.ndarray | None:
        """P^N P[g_k(u) - (xi_k.grad)u]; None when index k drives nothing."""
        sys_ = self.system
        term = None
        gpos = sys_.g_position(k_index)
        if gpos is not None:
            if sys_.g.variant == "linear":
                term = sys_.g.coefficients[gpos] * c
            elif sys_.g.variant == "additive":
                term = self.additive_hat[gpos].copy()
        xpos = sys_.xi_position(k_index)
        if xpos is not None:
            mult = self.xi_mult[xpos]
            if mult is not None:
                tr = c * mult
            else:
                lat = self.lattice
                tr = leray_project(nonlinear.transport(
                    sys_.xi.coefficient(xpos), SpectralField(lat, c, solenoidal=True))).coeffs
            term = -tr if term is None else term - tr
        if term is None:
            return None
        return np.where(self.ball, term, 0.0)

    def noise_sum(self, c: np.ndarray, dw_row: np.ndarray) -> np.ndarray:
        """sum_k diffusion_k(u) dW_k, fused into one diagonal multiply where possible."""
        sys_ = self.system
        lin = 0.0
        diag_im = None
        acc = None
        for pos, k_index in enumerate(sys_.xi.index_set):
            dw = float(dw_row[k_index])
            if dw == 0.0:
                continue
            phase = self.xi_phase[pos]
            if phase is None:
                tr = leray_project(nonlinear.transport(
                    sys_.xi.coefficient(pos),
                    SpectralField(self.lattice, c, solenoidal=True))).coeffs
                contrib = (-dw) * np.where(self.ball, tr, 0.0)
                acc = contrib if acc is None else acc + contrib
            elif diag_im is None:
                diag_im = (-dw) * phase
            else:
                diag_im -= dw * phase
        if sys_.g.variant == "linear":
            for pos, k_index in enumerate(sys_.g.index_set):
                lin += float(dw_row[k_index]) * sys_.g.coefficients[pos]
        elif sys_.g.variant == "additive":
            for pos, k_index in enumerate(sys_.g.index_set):
                dw = float(dw_row[k_index])
                if dw == 0.0:
                    continue
                contrib = dw * self.additive_hat[pos]
                acc = contrib if acc is None else acc + contrib
        if diag_im is not None:
            term = c * (lin + 1j * diag_im)
        elif lin != 0.0:
            term = c * lin
        else:
            term = None
        if term is None and acc is None:
            return np.zeros_like(c)
        if term is None:
            return acc
        return term if acc is None else term + acc

    def step_coeffs(self, c: np.ndarray, dw_row: np.ndarray) -> np.ndarray:
        pre = c + self.cfg.dt * self.explicit_drift(c)
        if self.system.n_wiener and dw_row.size:
            pre += self.noise_sum(c, dw_row)
        return self.decay * pre  # decay is zero off the Galerkin ball

    # -- scalar observables ---------------------------------------------------

    def gevrey_factor(self, phi: float) -> np.ndarray:
        if phi == 0.0:
            return np.ones(self.lattice.shape)
        return np.exp((2.0 * phi) * np.power(self.lattice.abs_k, 1.0 / self.cfg.gevrey.s))

    def observables(self, c: np.ndarray, phi: float) -> dict[str, float]:
        mod = np.sum(c.real**2 + c.imag**2, axis=0)
        gev = self.gevrey_factor(phi)
        return {
            "l2_sq": float(np.sum(mod * self.lattice.active)),
            "h1_sq": float(np.sum(self.w_h1 * mod)),
            "h2_sq": float(np.sum(self.w_h2 * mod)),
            "gevrey_h1_sq": float(np.sum(self.w_h1 * gev * mod)),
            "gevrey_h2_sq": float(np.sum(self.w_h2 * gev * mod)),
        }


def _advance(state: SimState, stepper: _Stepper, dw_row: np.ndarray,
             obs_now: dict | None = None) -> tuple[SimState, dict]:
    """One step; returns the new state and its observables (reusable by the
    caller as the next step's obs_now to avoid recomputation)."""
    cfg = stepper.cfg
    c = state.u.coeffs
    if obs_now is None:
        obs_now = stepper.observables(c, cfg.phi_at(state.t))
    budget_int = state.budget_int + cfg.dt * cfg.nu * obs_now["gevrey_h2_sq"]
    h2_int = state.h2_int + cfg.dt * obs_now["h2_sq"]

    c_new = stepper.step_coeffs(c, dw_row)
    if not np.all(np.isfinite(c_new.view(np.float64))):
        raise NonFiniteError(f"non-finite coefficient at t={state.t + cfg.dt:.6g} "
                             f"(step {state.step + 1})")
    t_new = state.t + cfg.dt
    step_new = state.step + 1
    obs_new = stepper.observables(c_new, cfg.phi_at(t_new))
    budget_sup = max(state.budget_sup, obs_new["gevrey_h1_sq"])

    stops = state.stops
    if state.stop_for("budget") is None:
        value = budget_sup + budget_int
        if value > state.initial_h1_sq + cfg.budget_m:
            stops = stops + (StopRecord("budget", t_new, step_new, value),)
    if state.stop_for("h2") is None and h2_int >= cfg.h2_r:
        stops = stops + (StopRecord("h2", t_new, step_new, h2_int),)

    u_new = SpectralField(stepper.lattice, c_new, solenoidal=True)
    new_state = SimState(t=t_new, step=step_new, u=u_new, budget_sup=budget_sup,
                         budget_int=budget_int, h2_int=h2_int,
                         initial_h1_sq=state.initial_h1_sq, stops=stops)
    return new_state, obs_new


# ---------------------------------------------------------------------------
# public operations

def drift(u: SpectralField, cfg: StepperConfig, system: NoiseSystem) -> SpectralField:
    """Full drift including the viscous term, supported on |k| <= N."""
    stepper = _Stepper(cfg, system, u.lattice)
    c = np.where(stepper.ball, u.coeffs, 0.0)
    return SpectralField(u.lattice, stepper.drift(c), solenoidal=True)


def diffusion(u: SpectralField, cfg: StepperConfig, system: NoiseSystem) -> list[SpectralField]:
    """One diffusion field per Wiener index: P^N P[g_k(u) - (xi_k.grad)u]."""
    stepper = _Stepper(cfg, system, u.lattice)
    c = np.where(stepper.ball, u.coeffs, 0.0)
    out = []
    for k_index in range(system.n_wiener):
        term = stepper.diffusion_term(k_index, c)
        if term is None:
            out.append(zero_field(u.lattice))
        else:
            out.append(SpectralField(u.lattice, term, solenoidal=True))
    return out


def initial_state(u0: SpectralField, cfg: StepperConfig, t0: float = 0.0) -> SimState:
    """Project u0 onto the Galerkin ball and open the budget accounting.

    At t=0 the budget sup equals the initial squared H^1 norm exactly since
    phi(0) = 0.
    """
    u = galerkin_project(leray_project(u0), cfg.cutoff)
    h1_sq = sobolev_norm_sq(u, 1.0)
    if cfg.k0 is not None and h1_sq > cfg.k0 * (1.0 + 1e-9):
        raise ValueError(f"||u0^N||_H1^2 = {h1_sq:.6g} exceeds configured K0 = {cfg.k0}")
    return SimState(t=t0, step=int(round(t0 / cfg.dt)), u=u,
                    budget_sup=h1_sq, budget_int=0.0, h2_int=0.0,
                    initial_h1_sq=h1_sq)


def step(state: SimState, cfg: StepperConfig, system: NoiseSystem,
         dw_row: np.ndarray) -> SimState:
    """One exponential Euler-Maruyama step; budgets and monitors updated."""
    dw_row = np.asarray(dw_row, dtype=np.float64)
    if dw_row.shape != (system.n_wiener,):
        raise ValueError(f"dW row must have length {system.n_wiener}")
    stepper = _Stepper(cfg, system, state.u.lattice)
    return _advance(state, stepper, dw_row)[0]


_SERIES_KEYS = ("t", "l2_sq", "h1_sq", "h2_sq", "gevrey_h1_sq", "gevrey_h2_sq",
                "budget_sup", "budget_int", "h2_int")


def integrate(cfg: StepperConfig, system: NoiseSystem, path: PathSpec,
              u0: SpectralField, store_every: int = 1,
              resume: SimState | None = None,
              driving: IncrementBlock | None = None,
              check_stability: bool = True) -> Trajectory:
    """Integrate one path from u0 (or a checkpoint) to t_end.

    Increments are drawn by absolute step index, so resuming from a
    checkpoint is bit-compatible with the uninterrupted run. A pre-built
    (e.g. bridge-refined) IncrementBlock can be supplied via `driving`;
    otherwise the base stream for `path` is used. NonFinite coefficients
    abort with the partial trajectory attached to the error.
    """
    if not system.validated:
        raise ValueError("NoiseSystem must pass validate_system before integration")
    if path.n_processes != system.n_wiener:
        raise ValueError("PathSpec.n_processes must equal the system's Wiener count")
    stepper = _Stepper(cfg, system, u0.lattice if resume is None else resume.u.lattice)

    if resume is None:
        state = initial_state(u0, cfg)
    else:
        state = resume
    if check_stability:
        warn_if_unstable(cfg, system, math.sqrt(max(state.initial_h1_sq, 0.0)))

    total_steps = cfg.n_steps
    start_step = state.step
    remaining = total_steps - start_step
    if remaining < 0:
        raise ValueError("checkpoint lies beyond t_end")
    if driving is not None:
        if abs(driving.dt - cfg.dt) > 1e-12 * cfg.dt:
            raise ValueError("driving block dt does not match the stepper dt")
        if driving.step0 != start_step or driving.n_steps < remaining:
            raise ValueError("driving block does not cover the requested steps")
        if driving.increments.shape[1] != system.n_wiener:
            raise ValueError("driving block has the wrong Wiener count")
        block = driving
    else:
        block = increments(path, start_step * cfg.dt, cfg.dt, remaining)

    states = [state]
    obs = stepper.observables(state.u.coeffs, cfg.phi_at(state.t))
    series = {key: [_series_row(state, obs)[key]] for key in _SERIES_KEYS}

    for i in range(remaining):
        try:
            state, obs = _advance(state, stepper, block.increments[i], obs_now=obs)
        except NonFiniteError as err:
            err.trajectory = _finish(cfg, states, series, state, path)
            raise
        row = _series_row(state, obs)
        for key in _SERIES_KEYS:
            series[key].append(row[key])
        if state.step % store_every == 0 or state.step == total_steps:
            states.append(state)
    if states[-1] is not state:
        states.append(state)
    return _finish(cfg, states, series, state, path)


def _series_row(state: SimState, obs: dict) -> dict[str, float]:
    row = dict(obs)
    row["t"] = state.t
    row["budget_sup"] = state.budget_sup
    row["budget_int"] = state.budget_int
    row["h2_int"] = state.h2_int
    return row


def _finish(cfg, states, series, last_state, path) -> Trajectory:
    arrays = {key: np.asarray(vals, dtype=np.float64) for key, vals in series.items()}
    return Trajectory(cfg=cfg, states=states, series=arrays,
                      stops=last_state.stops, path=path)


# ---------------------------------------------------------------------------
# exact linear oracle and the coupled-pair stopping monitor

def linear_exact(u0: SpectralField, xi, nu: float, w_value: float,
                 t: float) -> SpectralField:
    """Closed form for the linear system (no convection, g = 0, one constant xi).

    Mode-wise u_hat(t) = u_hat(0) exp(-nu |k|^2 t - i (xi.k) W_t); the modulus
    decays like the heat semigroup on every path.
    """
    lat = u0.lattice
    vec = np.asarray(xi, dtype=np.float64)
    theta = np.einsum("j,j...->...", vec, lat.k.astype(np.float64))
    factor = np.exp(-nu * lat.ksq.astype(np.float64) * t - 1j * theta * w_value)
    return u0.with_coeffs(np.where(lat.active, u0.coeffs * factor, 0.0))


def monitor_tau_R(traj_n: Trajectory, traj_ref: Trajectory, r_threshold: float) -> float:
    """First time the paired H^2 integral reaches R, else the common horizon.

    Both trajectories must share the time grid (and, for the coupling to mean
    anything, the Brownian path). Left-endpoint quadrature, stop resolved to
    step boundaries; doubling R never decreases the result.
    """
    t_n, t_ref = traj_n.times, traj_ref.times
    if t_n.shape != t_ref.shape or not np.allclose(t_n, t_ref, rtol=0, atol=1e-12):
        raise ValueError("trajectories do not share a time grid")
    if r_threshold < 0:
        raise ValueError("R must be >= 0")
    dt = traj_n.cfg.dt
    integrand = traj_n.series["h2_sq"] + traj_ref.series["h2_sq"]
    acc = 0.0
    for j in range(len(t_n) - 1):
        acc += dt * integrand[j]
        if acc >= r_threshold:
            return float(t_n[j + 1])
    return float(t_n[-1])
