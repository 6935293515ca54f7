"""Experiment engines behind the CLI commands.

Each engine is a pure function of a validated ExperimentConfig returning
plain result objects; the CLI layer only serializes them. Ensembles are
dispatched to a thread pool and reassembled in path order, so results are
independent of the worker count (the Wiener driver is counter-based and the
per-path work shares no mutable state).
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics, nonlinear
from .brownian import increments, refine
from .config import ConfigError, ExperimentConfig
from .fields import (GevreyWeight, SpectralField, galerkin_complement,
                     galerkin_project, leray_project, mode_weight, random_field,
                     sobolev_norm_sq, weighted_inner, validate_physical)
from .noise import validate_system
from .sde import (NonFiniteError, StepperConfig, Trajectory, _Stepper, _advance,
                  initial_state, integrate, linear_exact)


def _run_indexed(worker, n_paths: int, workers: int) -> list:
    """Run worker(path_index) for every path; results ordered by index."""
    if workers <= 1:
        return [worker(i) for i in range(n_paths)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, range(n_paths)))


def prepare(config: ExperimentConfig):
    """Shared setup: lattice, validated noise system, initial field."""
    lattice = config.build_lattice()
    system = config.build_noise_system(lattice)
    system, report = validate_system(system, lattice, config.gevrey_weight(phi=0.0))
    if not system.validated:
        raise ConfigError(f"noise system failed validation: {report.summary()}")
    u0 = config.initial_field(lattice)
    return lattice, system, u0, report


# ---------------------------------------------------------------------------
# simulate

@dataclass
class PathResult:
    path_index: int
    trajectory: Trajectory | None
    nonfinite: str | None = None
    spectra: list = field(default_factory=list)        # ShellSpectrum per snapshot
    radius_fits: list = field(default_factory=list)    # (t, FitResult) per usable snapshot


@dataclass
class SimulateResult:
    paths: list[PathResult]
    cutoff: int

    @property
    def nonfinite_paths(self) -> list[int]:
        return [p.path_index for p in self.paths if p.nonfinite]


def simulate(config: ExperimentConfig) -> SimulateResult:
    """Ensemble run at N = n_ref with shell spectra and radius fits per path."""
    lattice, system, u0, _ = prepare(config)
    cutoff = config["galerkin.n_ref"]
    cfg = config.stepper_config(cutoff)
    stride = config["outputs.snapshot_stride"]
    burn_in = config.burn_in_time()

    def worker(path_index: int) -> PathResult:
        path = config.path_spec(path_index, system.n_wiener)
        try:
            traj = integrate(cfg, system, path, u0, store_every=stride)
        except NonFiniteError as err:
            return PathResult(path_index=path_index, trajectory=err.trajectory,
                              nonfinite=str(err))
        result = PathResult(path_index=path_index, trajectory=traj)
        for state in traj.states:
            spec = diagnostics.shell_spectrum(state.u, t=state.t)
            result.spectra.append(spec)
            if state.t >= burn_in:
                try:
                    result.radius_fits.append((state.t, diagnostics.fit_radius(spec)))
                except diagnostics.FitRefusedError:
                    pass
        return result

    paths = _run_indexed(worker, config["ensemble.n_paths"], config["ensemble.workers"])
    return SimulateResult(paths=paths, cutoff=cutoff)


# ---------------------------------------------------------------------------
# Galerkin decay study (common-path coupling across cutoffs)

@dataclass
class DecayPathOutcome:
    path_index: int
    errors_sq: dict      # cutoff -> ||u_ref - u_N||_{H^1}^2 at T ^ tau_R
    stop_times: dict     # cutoff -> tau_R (== t_end when never triggered)
    ref_tail_sq: float   # ||Q^{max cutoff} u_ref(T)||_{H^1}^2 (reference headroom)
    nonfinite: str | None = None


@dataclass
class DecayResult:
    cutoffs: list[int]
    n_ref: int
    outcomes: list[DecayPathOutcome]
    mean_errors: list[float]
    std_errors: list[float]
    fit: diagnostics.FitResult | None


def decay_study(config: ExperimentConfig) -> DecayResult:
    """Integrate every cutoff and the reference on identical Wiener paths.

    All resolutions advance in lockstep consuming the same increment rows,
    which realizes the coupled difference system. Per path and cutoff the
    squared H^1 error is taken at t_end ^ tau_R, where tau_R is the first
    time the paired H^2 integral reaches R (left-endpoint quadrature, stop at
    step boundaries).
    """
    lattice, system, u0, _ = prepare(config)
    cutoffs = sorted(config["galerkin.cutoffs"])
    if len(cutoffs) < 3:
        raise ConfigError("decay study needs at least 3 cutoffs")
    n_ref = config["galerkin.n_ref"]
    r_threshold = config["monitors.h2_r"]
    w_h1 = mode_weight(lattice, 1.0)

    def h1_err_sq(a: SpectralField, b: SpectralField) -> float:
        diff = a.coeffs - b.coeffs
        return float(np.sum(w_h1 * np.sum(diff.real**2 + diff.imag**2, axis=0)))

    def worker(path_index: int) -> DecayPathOutcome:
        path = config.path_spec(path_index, system.n_wiener)
        cfg_ref = config.stepper_config(n_ref)
        steppers = {n: _Stepper(config.stepper_config(n), system, lattice) for n in cutoffs}
        steppers[n_ref] = _Stepper(cfg_ref, system, lattice)
        states = {n: initial_state(u0, config.stepper_config(n)) for n in (*cutoffs, n_ref)}
        n_steps = cfg_ref.n_steps
        block = increments(path, 0.0, cfg_ref.dt, n_steps)
        errors: dict = {}
        stop_times: dict = {}
        obs = {n: None for n in (*cutoffs, n_ref)}
        try:
            for i in range(n_steps):
                row = block.increments[i]
                for n in (*cutoffs, n_ref):
                    states[n], obs[n] = _advance(states[n], steppers[n], row,
                                                 obs_now=obs[n])
                for n in cutoffs:
                    if n in stop_times:
                        continue
                    paired = states[n].h2_int + states[n_ref].h2_int
                    if paired >= r_threshold:
                        stop_times[n] = states[n].t
                        errors[n] = h1_err_sq(states[n_ref].u, states[n].u)
        except NonFiniteError as err:
            return DecayPathOutcome(path_index=path_index, errors_sq={}, stop_times={},
                                    ref_tail_sq=float("nan"), nonfinite=str(err))
        for n in cutoffs:
            if n not in stop_times:
                stop_times[n] = states[n_ref].t
                errors[n] = h1_err_sq(states[n_ref].u, states[n].u)
        tail = galerkin_complement(states[n_ref].u, max(cutoffs))
        return DecayPathOutcome(path_index=path_index, errors_sq=errors,
                                stop_times=stop_times,
                                ref_tail_sq=sobolev_norm_sq(tail, 1.0))

    outcomes = _run_indexed(worker, config["ensemble.n_paths"], config["ensemble.workers"])
    usable = [o for o in outcomes if not o.nonfinite]
    mean_errors, std_errors = [], []
    for n in cutoffs:
        vals = [o.errors_sq[n] for o in usable]
        mean, se = diagnostics.ensemble_mean(vals) if len(vals) >= 2 else (vals[0], 0.0)
        mean_errors.append(mean)
        std_errors.append(se)
    fit = None
    if all(e > 0 for e in mean_errors):
        try:
            fit = diagnostics.fit_exp_rate(cutoffs, mean_errors)
        except diagnostics.FitRefusedError:
            fit = None
    return DecayResult(cutoffs=cutoffs, n_ref=n_ref, outcomes=outcomes,
                       mean_errors=mean_errors, std_errors=std_errors, fit=fit)


# ---------------------------------------------------------------------------
# linear oracle

@dataclass
class OracleResult:
    dts: list[float]
    strong_errors: list[float]     # ensemble mean endpoint L^2 error vs closed form
    modulus_errors: list[float]    # ensemble mean max per-mode modulus error
    strong_slope: float
    modulus_slope: float
    machine_precision: bool        # xi = 0 degenerate case


def linear_oracle_study(config: ExperimentConfig) -> OracleResult:
    """Strong dt-convergence against the closed-form linear solution.

    Requires convection off, zero g and exactly one constant xi; paths are
    coupled across dt levels by Brownian-bridge refinement of the base
    increments. The endpoint Wiener value is level-independent because
    refinement preserves block sums.
    """
    if config["physics.convection"]:
        raise ConfigError("linear oracle requires physics.convection = false")
    if config["noise.multiplicative.variant"] != "zero":
        raise ConfigError("linear oracle requires zero multiplicative noise")
    lattice, system, u0, _ = prepare(config)
    if len(system.xi.index_set) != 1 or system.xi.variant != "constant":
        raise ConfigError("linear oracle requires exactly one constant transport vector")
    xi_vec = np.asarray(system.xi.vectors[0])
    cutoff = config["galerkin.n_ref"]
    nu = config["physics.nu"]
    t_end = config["physics.t_end"]
    dt0 = config["physics.dt"]
    levels = config["oracle.refinements"] + 1
    dts = [dt0 / 2**lvl for lvl in range(levels)]
    n_paths = config["ensemble.n_paths"]

    def worker(path_index: int):
        path = config.path_spec(path_index, system.n_wiener)
        block = increments(path, 0.0, dt0, int(round(t_end / dt0)))
        strong = np.zeros(levels)
        modulus = np.zeros(levels)
        for lvl in range(levels):
            cfg = StepperConfig(
                nu=nu, dt=dts[lvl], t_end=t_end, cutoff=cutoff,
                gevrey=config.gevrey_weight(), phi_cap=config["gevrey.phi_cap"],
                budget_m=config["monitors.budget_m"], h2_r=config["monitors.h2_r"],
                k_max=1, convection=False, k0=config["initial.k0"])
            traj = integrate(cfg, system, path, u0, store_every=10**9,
                             driving=block, check_stability=False)
            w_end = float(block.increments[:, 0].sum())
            exact = linear_exact(traj.states[0].u, xi_vec, nu, w_end, t_end)
            strong[lvl] = math.sqrt(sobolev_norm_sq(traj.final.u - exact, 0.0))
            heat = np.abs(linear_exact(traj.states[0].u, xi_vec, nu, 0.0, t_end).coeffs)
            modulus[lvl] = float(np.abs(np.abs(traj.final.u.coeffs) - heat).max())
            if lvl + 1 < levels:
                block = refine(block, 2)
        return strong, modulus

    results = _run_indexed(worker, n_paths, config["ensemble.workers"])
    strong = np.mean([r[0] for r in results], axis=0)
    modulus = np.mean([r[1] for r in results], axis=0)
    eps_scale = 1e-12 * math.sqrt(sobolev_norm_sq(u0, 0.0))
    machine = bool(np.all(strong < eps_scale))
    if machine:
        s_slope = m_slope = 0.0
    else:
        s_slope = float(np.polyfit(np.log(dts), np.log(np.maximum(strong, 1e-300)), 1)[0])
        m_slope = float(np.polyfit(np.log(dts), np.log(np.maximum(modulus, 1e-300)), 1)[0])
    return OracleResult(dts=dts, strong_errors=list(strong), modulus_errors=list(modulus),
                        strong_slope=s_slope, modulus_slope=m_slope,
                        machine_precision=machine)


# ---------------------------------------------------------------------------
# budget-monitor exceedance study

@dataclass
class ExceedanceResult:
    cutoffs: list[int]
    horizons: list[float]
    fractions: dict        # (cutoff, horizon) -> fraction of paths with budget stop <= horizon
    initial_budgets: list[float]


def budget_exceedance(config: ExperimentConfig, cutoffs, horizons) -> ExceedanceResult:
    """Empirical exceedance fractions of the budget monitor per cutoff/horizon.

    One integration per (path, cutoff) over the longest horizon; the stop
    record gives exceedance at every shorter horizon for free, and the
    fraction is automatically nonincreasing as the horizon shrinks because
    the budget is nondecreasing.
    """
    lattice, system, u0, _ = prepare(config)
    horizons = sorted(horizons, reverse=True)
    t_max = horizons[0]
    fractions = {}
    initial_budgets = []
    n_paths = config["ensemble.n_paths"]
    for cutoff in cutoffs:
        cfg = dataclasses.replace(config.stepper_config(cutoff), t_end=t_max)

        def worker(path_index: int, cfg=cfg):
            path = config.path_spec(path_index, system.n_wiener)
            traj = integrate(cfg, system, path, u0, store_every=10**9,
                             check_stability=False)
            rec = traj.final.stop_for("budget")
            return rec.time if rec else float("inf"), traj.states[0].budget_sup
        rows = _run_indexed(worker, n_paths, config["ensemble.workers"])
        stop_times = [r[0] for r in rows]
        initial_budgets.append(rows[0][1])
        for horizon in horizons:
            frac = sum(1 for t in stop_times if t <= horizon + 1e-12) / n_paths
            fractions[(cutoff, horizon)] = frac
    return ExceedanceResult(cutoffs=list(cutoffs), horizons=horizons,
                            fractions=fractions, initial_budgets=initial_budgets)


# ---------------------------------------------------------------------------
# structural invariant checks (the `invariants` command)

@dataclass
class CheckResult:
    name: str
    value: float
    threshold: float
    passed: bool
    informational: bool = False
    detail: str = ""


def invariant_checks(config: ExperimentConfig, seed: int = 12) -> list[CheckResult]:
    """Aggregate the module-level structural identities into one pass/fail table."""
    lattice = config.build_lattice()
    system = config.build_noise_system(lattice)
    w = config.gevrey_weight()
    rng = np.random.default_rng(seed)
    results: list[CheckResult] = []

    def add(name, value, threshold, informational=False, detail=""):
        results.append(CheckResult(name=name, value=float(value), threshold=threshold,
                                   passed=bool(value <= threshold) or informational,
                                   informational=informational, detail=detail))

    f = random_field(lattice, rng, envelope=lambda k: k**-1.5)
    scale = math.sqrt(sobolev_norm_sq(f, 0.0))

    p1 = leray_project(f)
    add("leray_idempotent",
        math.sqrt(sobolev_norm_sq(leray_project(p1) - p1, 0.0)) / scale, 1e-13)

    from .fields import gevrey_apply, stokes_power
    pure = GevreyWeight(s=w.s, r=0.0, phi=0.1, exp_guard=w.exp_guard)
    a = galerkin_project(stokes_power(gevrey_apply(p1, pure), 0.5), 6)
    b = gevrey_apply(stokes_power(galerkin_project(p1, 6), 0.5), pure)
    add("projector_multiplier_commute",
        math.sqrt(sobolev_norm_sq(a - b, 0.0)) / scale, 1e-13)

    ok = True
    for n in (2, 4, 8):
        for r in (0.0, 0.5, 1.0, 1.5, 2.0):
            for s in (r, min(r + 0.5, 2.0), 2.0):
                pn = galerkin_project(f, n)
                qn = galerkin_complement(f, n)
                lhs = sobolev_norm_sq(pn, s)
                rhs = float(n) ** (2 * (s - r)) * sobolev_norm_sq(pn, r)
                ok &= lhs <= rhs
                lhs2 = sobolev_norm_sq(qn, r)
                rhs2 = float(n) ** (2 * (r - s)) * sobolev_norm_sq(qn, s)
                ok &= lhs2 <= rhs2
                ok &= sobolev_norm_sq(pn, r) <= sobolev_norm_sq(f, r)
                ok &= sobolev_norm_sq(qn, r) <= sobolev_norm_sq(f, r)
    add("mode_trading_and_continuity_exact", 0.0 if ok else 1.0, 0.5)

    g = random_field(lattice, rng, envelope=lambda k: k**-1.0)
    inner = abs(weighted_inner(galerkin_project(f, 8), galerkin_complement(g, 8),
                               r=1.0, w=pure))
    add("pn_qn_orthogonal", inner / max(sobolev_norm_sq(f, 1.0), 1e-30), 1e-13)

    f_n, f_m = galerkin_project(f, 12), galerkin_project(g, 6)
    lhs = sobolev_norm_sq(f_n - f_m, 1.0)
    rhs = (sobolev_norm_sq(galerkin_complement(f_n, 6), 1.0)
           + sobolev_norm_sq(galerkin_project(f_n, 6) - f_m, 1.0))
    add("projection_identity", abs(lhs - rhs) / max(lhs, 1e-30), 1e-12)

    phys = nonlinear.to_physical(f)
    add("parseval",
        abs(float(np.mean(np.sum(phys**2, axis=0))) - sobolev_norm_sq(f, 0.0))
        / sobolev_norm_sq(f, 0.0), 1e-12)

    u = nonlinear.dealias(leray_project(random_field(lattice, rng,
                                                     envelope=lambda k: np.exp(-0.4 * k))))
    worst = 0.0
    for r in (0.0, 0.5, 1.0):
        for phi in (0.0, 0.1, 0.3):
            worst = max(worst, diagnostics.check_cancellation(
                np.array([0.7, -0.2] if lattice.dim == 2 else [0.7, -0.2, 0.4]),
                u, GevreyWeight(s=1.0, r=1.0, phi=phi), r))
    add("transport_cancellation", worst, 1e-12)

    tu = nonlinear.transport(np.array([0.5, 0.8] if lattice.dim == 2 else [0.5, 0.8, -0.1]), u)
    add("transport_skew_adjoint",
        abs(weighted_inner(tu, u, r=1.0, w=pure)) / sobolev_norm_sq(u, 1.0), 1e-12)

    cu = nonlinear.convect(u, u)
    add("convective_energy_orthogonality",
        abs(weighted_inner(cu, u)) / sobolev_norm_sq(u, 1.0), 1e-11)

    sys_v, report = validate_system(system, lattice, config.gevrey_weight(phi=0.0))
    add("noise_orthogonality", 0.0 if report.orthogonality.ok else report.orthogonality.worst_inner,
        1e-12, detail="structural" if report.orthogonality.structural else "evaluated")
    add("noise_growth_lipschitz_finite",
        0.0 if report.growth_lipschitz.finite else 1.0, 0.5)
    if system.g.variant == "linear":
        expected = sum(abs(c) for c in system.g.coefficients)
        add("linear_lipschitz_equals_sum",
            abs(report.growth_lipschitz.c_lipschitz - expected) / max(expected, 1e-30), 1e-12)
    if report.commutativity_residuals:
        add("commutativity_constant_xi", max(report.commutativity_residuals), 1e-10)

    xi_field = leray_project(nonlinear.dealias(
        random_field(lattice, rng, envelope=lambda k: np.exp(-1.0 * k))))
    from .noise import validate_commutativity
    add("commutativity_spectral_xi_experimental",
        validate_commutativity(xi_field, u, w, r=1.0), float("inf"),
        informational=True, detail="experimental, reported only")

    if sys_v.validated:
        cfg = config.stepper_config(min(config["galerkin.cutoffs"]))
        u0 = config.initial_field(lattice)
        state = initial_state(u0, cfg)
        stepper = _Stepper(cfg, sys_v, lattice)
        row = increments(config.path_spec(0, sys_v.n_wiener), 0.0, cfg.dt, 3)
        worst_div = worst_mean = 0.0
        for i in range(3):
            state, _ = _advance(state, stepper, row.increments[i])
            rep = validate_physical(state.u)
            worst_div = max(worst_div, rep.divergence_residual or 0.0)
            worst_mean = max(worst_mean, rep.mean_residual)
        step_scale = max(float(np.abs(state.u.coeffs).max()), 1e-30)
        add("step_preserves_divergence_free", worst_div / step_scale, 1e-12)
        add("step_preserves_mean_free", worst_mean / step_scale, 1e-12)
    else:
        add("noise_system_gate", 1.0, 0.5, detail="validation failed; integrator gated")

    return results
