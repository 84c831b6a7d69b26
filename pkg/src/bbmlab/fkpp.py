"""Log-domain finite-difference solver for the rightmost-particle CDF front.

The CDF u(x, t) of the rightmost position solves a semilinear
reaction-diffusion equation; we evolve L = ln u instead, where the equation
becomes  L_t = (sigma2/2)(L_xx + L_x^2) + e^L - 1.  The quantities of
interest sit near e^{-200}, far below what a linear-domain solver retains.

Scheme notes (these are constraints, not history):
  * Diffusion is Crank-Nicolson on a tridiagonal system; the quadratic
    transport term and the reaction are explicit with a two-stage
    (predictor/corrector) evaluation, so the overall step is second order.
  * The transport slope is centered where the per-cell jump is mild and
    one-sided toward the right (the upwind side: tail characteristics move
    left) where it is steep; the blend keeps the update monotone.
  * The transport term carries a CFL limit that the nominal dt violates
    while the smoothed step relaxes, so advances subcycle on an adaptive
    sub-step until the field flattens enough.  With subcycling disabled a
    per-step jump above MAX_STEP_JUMP raises SolverInstabilityError.
  * L is a CDF in x: nondecreasing.  Each substep measures the pre-repair
    violation; anything above MONO_TOL invalidates the run, below it the
    field is re-monotonized by a running maximum.
  * The initial profile ln(Phi(x/eps)) is clipped at tail_floor; values
    below are smaller than every measurable target by hundreds of e-folds
    and their exact shape cannot influence the probes (tail characteristics
    point outward and the excess mass is ~ e^{tail_floor}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import lapack
from scipy.special import logsumexp

from .model import ModelParams
from .varopt import log_normal_cdf

_LN_HALF = math.log(0.5)

MAX_STEP_JUMP = 10.0    # |dL| above this in a full-dt step means dt is too large
MONO_TOL = 1e-9         # pre-repair monotonicity violations above this abort the run


class SolverInstabilityError(RuntimeError):
    """The time stepper produced non-finite, jumpy, or non-monotone output."""


class DomainOverflowError(ValueError):
    """A probe or quadrature point falls outside (or too close to) the grid."""


class FrontNotBracketedError(RuntimeError):
    """The field does not cross the half level anywhere on the grid."""


class RankDeficientFitError(ValueError):
    """Least-squares design matrix is rank deficient (samples too clustered)."""


class InsufficientSamplesError(ValueError):
    """Too few samples, or too narrow a time span, for a meaningful fit."""


@dataclass(frozen=True)
class Grid:
    """Uniform spatial grid and nominal time step."""

    x_min: float
    x_max: float
    dx: float
    dt: float

    def __post_init__(self) -> None:
        if not (self.x_min < 0.0 < self.x_max):
            raise ValueError(f"grid must straddle the origin, got [{self.x_min}, {self.x_max}]")
        if not (self.dx > 0.0 and math.isfinite(self.dx)):
            raise ValueError(f"dx must be positive, got {self.dx!r}")
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        span = self.x_max - self.x_min
        if abs(span / self.dx - round(span / self.dx)) > 1e-6:
            raise ValueError("x_max - x_min must be an integer multiple of dx")
        if self.n_points < 8:
            raise ValueError("grid needs at least 8 points")

    @property
    def n_points(self) -> int:
        return int(round((self.x_max - self.x_min) / self.dx)) + 1

    def xs(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    @classmethod
    def build(cls, x_min: float, x_max: float, dx: float, dt: float) -> "Grid":
        """Grid with x_max snapped up to the dx lattice based at x_min."""
        n_cells = max(7, int(math.ceil((x_max - x_min) / dx - 1e-9)))
        return cls(x_min=x_min, x_max=x_min + n_cells * dx, dx=dx, dt=dt)


def default_dt(dx: float, sigma2: float) -> float:
    """Nominal step: quarter of the diffusive limit, capped at 0.01."""
    return min(0.25 * dx * dx / sigma2, 0.01)


@dataclass
class LogField:
    """ln u sampled on a grid at one instant."""

    L: np.ndarray
    time: float
    grid: Grid
    max_violation: float = 0.0  # worst pre-repair monotonicity defect so far

    def copy(self) -> "LogField":
        return LogField(self.L.copy(), self.time, self.grid, self.max_violation)

    def validate(self, pinned_right: bool = True) -> None:
        if self.L.shape != (self.grid.n_points,):
            raise ValueError("field length does not match grid")
        if not np.all(np.isfinite(self.L)):
            raise ValueError("field contains non-finite values")
        if np.any(self.L > 1e-12):
            raise ValueError("ln u must be <= 0 everywhere")
        viol = float(np.max(self.L[:-1] - self.L[1:], initial=0.0))
        if viol > MONO_TOL:
            raise ValueError(f"field is non-monotone by {viol:.3e}")
        if pinned_right and self.L[-1] < -1e-6:
            raise ValueError("right boundary is not pinned near u = 1; widen the domain")


def init_field(grid: Grid, smoothing_eps: float, tail_floor: float = -700.0) -> LogField:
    """Smoothed-step initial data L(x) = ln(Phi(x / eps)), clipped at tail_floor.

    eps must lie in [dx/2, 4 dx]: narrower is unresolvable, wider visibly
    biases the O(1) prefactor.  The exact indicator initial condition would
    put L = -inf left of the origin; the smoothing shifts prefactors only.
    """
    if not (0.5 * grid.dx - 1e-12 <= smoothing_eps <= 4.0 * grid.dx + 1e-12):
        raise ValueError(
            f"smoothing_eps must lie in [dx/2, 4*dx] = "
            f"[{0.5 * grid.dx}, {4.0 * grid.dx}], got {smoothing_eps!r}"
        )
    if not tail_floor <= -50.0:
        raise ValueError(f"tail_floor must be <= -50, got {tail_floor!r}")
    L = log_normal_cdf(grid.xs() / smoothing_eps)
    np.maximum(L, tail_floor, out=L)
    np.minimum(L, 0.0, out=L)
    fld = LogField(L=L, time=0.0, grid=grid)
    fld.validate()
    return fld


@dataclass
class Stepper:
    """Advances a LogField in time under fixed model parameters."""

    params: ModelParams
    grid: Grid
    reaction: bool = True
    cfl_subcycle: bool = True
    cfl_safety: float = 0.5

    def __post_init__(self) -> None:
        # Keeps the Crank-Nicolson update sign-definite (explicit half positive).
        if self.grid.dt > self.grid.dx ** 2 / self.params.sigma2 * (1.0 + 1e-12):
            raise ValueError(
                f"dt={self.grid.dt!r} exceeds the diffusive margin "
                f"dx^2/sigma2={self.grid.dx ** 2 / self.params.sigma2!r}"
            )
        self._nu = 0.5 * self.params.sigma2
        self._dx = self.grid.dx
        n = self.grid.n_points
        # scratch buffers; the stepper is not thread-safe across one instance
        self._fwd = np.empty(n)
        self._ctr = np.empty(n)
        self._gap = np.empty(n)
        self._gr = np.empty(n)
        self._tmp = np.empty(n)
        self._g1 = np.empty(n)
        self._g2 = np.empty(n)
        self._gm = np.empty(n)
        self._rhs = np.empty(n - 2)
        self._rhs_tmp = np.empty(n - 2)
        self._fact_cache: dict[float, tuple] = {}

    # -- explicit terms ----------------------------------------------------

    def _explicit_rhs(self, F: np.ndarray, out: np.ndarray) -> np.ndarray:
        dx = self._dx
        fwd, ctr, gap, gr = self._fwd, self._ctr, self._gap, self._gr
        np.subtract(F[1:], F[:-1], out=fwd[:-1])
        fwd[:-1] *= 1.0 / dx
        fwd[-1] = 0.0
        np.subtract(F[2:], F[:-2], out=ctr[1:-1])
        ctr[1:-1] *= 0.5 / dx
        ctr[0] = fwd[0]
        ctr[-1] = 0.0
        # per-point steepness: the larger adjacent jump, in L units
        np.multiply(fwd, dx, out=gr)
        gap[0] = gr[0]
        np.maximum(gr[1:], gr[:-1], out=gap[1:])
        # blend weight: 0 (centered) below a jump of 0.5, 1 (upwind) above 2
        gap -= 0.5
        gap *= 1.0 / 1.5
        np.clip(gap, 0.0, 1.0, out=gap)
        np.subtract(fwd, ctr, out=fwd)
        fwd *= gap
        np.add(ctr, fwd, out=out)  # slope = ctr + w*(fwd - ctr)
        np.multiply(out, out, out=out)
        out *= self._nu
        if self.reaction:
            # expm1 is -1 to machine precision below L = -40; skip the deep tail
            i0 = int(np.searchsorted(F, -40.0))
            beta = self.params.branch_rate
            if i0 > 0:
                out[:i0] -= beta
            if i0 < F.size:
                e = np.expm1(F[i0:])
                e *= beta
                out[i0:] += e
        return out

    # -- Crank-Nicolson diffusion solve ------------------------------------

    def _factors(self, dt_s: float):
        entry = self._fact_cache.get(dt_s)
        if entry is None:
            r = 0.5 * self._nu * dt_s / self._dx ** 2
            n_i = self.grid.n_points - 2
            dl = np.full(n_i - 1, -r)
            d = np.full(n_i, 1.0 + 2.0 * r)
            du = np.full(n_i - 1, -r)
            dlf, df, duf, du2, ipiv, info = lapack.dgttrf(dl, d, du)
            if info != 0:
                raise SolverInstabilityError(f"tridiagonal factorization failed (info={info})")
            if len(self._fact_cache) >= 16:
                self._fact_cache.clear()
            entry = ((dlf, df, duf, du2, ipiv), r)
            self._fact_cache[dt_s] = entry
        return entry

    def _cn_solve(self, L_old: np.ndarray, G: np.ndarray, left_val: float, dt_s: float) -> np.ndarray:
        (dlf, df, duf, du2, ipiv), r = self._factors(dt_s)
        rhs, tmp = self._rhs, self._rhs_tmp
        np.add(L_old[:-2], L_old[2:], out=rhs)
        rhs *= r
        np.multiply(L_old[1:-1], 1.0 - 2.0 * r, out=tmp)
        rhs += tmp
        np.multiply(G[1:-1], dt_s, out=tmp)
        rhs += tmp
        rhs[0] += r * left_val  # new left value, eliminated from the system
        # new right value is the Dirichlet zero; contributes nothing
        sol, info = lapack.dgttrs(dlf, df, duf, du2, ipiv, rhs)
        if info != 0:
            raise SolverInstabilityError(f"tridiagonal solve failed (info={info})")
        out = np.empty_like(L_old)
        out[0] = left_val
        out[-1] = 0.0
        out[1:-1] = sol
        return out

    def _substep(self, L: np.ndarray, dt_s: float) -> np.ndarray:
        nu, dx2 = self._nu, self._dx ** 2
        g1 = self._explicit_rhs(L, self._g1)
        # left boundary: explicit update with the curvature copied from i=1
        c1 = (L[0] - 2.0 * L[1] + L[2]) / dx2
        b1 = nu * c1 + g1[0]
        left1 = L[0] + dt_s * b1
        L1 = self._cn_solve(L, g1, left1, dt_s)
        g2 = self._explicit_rhs(L1, self._g2)
        c2 = (L1[0] - 2.0 * L1[1] + L1[2]) / dx2
        b2 = nu * c2 + g2[0]
        left2 = L[0] + 0.5 * dt_s * (b1 + b2)
        np.add(g1, g2, out=self._gm)
        self._gm *= 0.5
        return self._cn_solve(L, self._gm, left2, dt_s)

    # -- time marching ------------------------------------------------------

    def advance(self, fld: LogField, amount: float, end_time: float | None = None) -> LogField:
        """Advance by `amount` time units (chunked by grid.dt and the CFL limit)."""
        if amount < 0.0:
            raise ValueError("cannot advance backwards")
        fld.validate(pinned_right=False)
        L = fld.L.copy()
        worst = fld.max_violation
        dt, dx, sigma2 = self.grid.dt, self._dx, self.params.sigma2
        remaining = float(amount)
        budget = 20000 + 100 * int(math.ceil(remaining / dt))
        nsub = 0
        diff = self._tmp[: L.size - 1]
        while remaining > 0.0:
            # snap the final chunk so float residue cannot spawn micro-substeps
            chunk = remaining if remaining <= dt * (1.0 + 1e-9) else dt
            np.subtract(L[1:], L[:-1], out=diff)
            s_max = float(diff.max(initial=0.0)) / dx
            cfl_limited = False
            dt_s = chunk
            if self.cfl_subcycle and s_max > 0.0:
                dt_cfl = self.cfl_safety * dx / (sigma2 * s_max)
                if dt_cfl < chunk:
                    dt_s = dt_cfl
                    cfl_limited = True
            L_new = self._substep(L, dt_s)
            if not math.isfinite(float(L_new[0])) or not np.all(np.isfinite(L_new)):
                raise SolverInstabilityError("non-finite values after a substep")
            if not cfl_limited:
                np.subtract(L_new, L, out=self._tmp)
                np.abs(self._tmp, out=self._tmp)
                jump = float(self._tmp.max())
                if jump > MAX_STEP_JUMP:
                    raise SolverInstabilityError(
                        f"|dL| = {jump:.3g} in one step of dt = {dt_s:.3g}; reduce dt"
                    )
            np.subtract(L_new[:-1], L_new[1:], out=diff)
            viol = float(diff.max(initial=0.0))
            if viol > MONO_TOL:
                raise SolverInstabilityError(
                    f"monotonicity violated by {viol:.3e} (tolerance {MONO_TOL:g})"
                )
            if viol > 0.0:
                np.maximum.accumulate(L_new, out=L_new)
                worst = max(worst, viol)
            np.minimum(L_new, 0.0, out=L_new)
            L = L_new
            remaining -= dt_s
            nsub += 1
            if nsub > budget:
                raise SolverInstabilityError("subcycle budget exhausted; field too steep")
        t_new = fld.time + amount if end_time is None else end_time
        return LogField(L=L, time=t_new, grid=self.grid, max_violation=worst)


def step(
    fld: LogField,
    params: ModelParams | None = None,
    *,
    reaction: bool = True,
    cfl_subcycle: bool = True,
) -> LogField:
    """Advance a field by one nominal grid.dt."""
    params = params if params is not None else ModelParams()
    stepper = Stepper(params=params, grid=fld.grid, reaction=reaction, cfl_subcycle=cfl_subcycle)
    return stepper.advance(fld, fld.grid.dt)


# -- measurements ------------------------------------------------------------


def probe_log_u(fld: LogField, x: float) -> float:
    """ln u at x, linearly interpolated in L (never in u: the tail underflows)."""
    if not (fld.grid.x_min <= x <= fld.grid.x_max):
        raise DomainOverflowError(
            f"x={x!r} outside grid [{fld.grid.x_min}, {fld.grid.x_max}]"
        )
    return float(np.interp(x, fld.grid.xs(), fld.L))


def front_position(fld: LogField) -> float:
    """x where L crosses ln(1/2), linearly interpolated."""
    L = fld.L
    if L[0] > _LN_HALF or L[-1] < _LN_HALF:
        raise FrontNotBracketedError("field does not bracket the half level")
    i = int(np.searchsorted(L, _LN_HALF))
    if i == 0:
        return float(fld.grid.x_min)
    lo, hi = L[i - 1], L[i]
    frac = 0.0 if hi == lo else (_LN_HALF - lo) / (hi - lo)
    return float(fld.grid.x_min + fld.grid.dx * (i - 1 + frac))


def renewal_quadrature(fld: LogField, x: float, tau: float, params: ModelParams) -> float:
    """log of exp(-tau) * E[u(x - G, fld.time)] with G ~ N(0, sigma2 * tau).

    Trapezoid quadrature on the field's own lattice, carried out in log
    space.  Serves both the renewal inequality check and as the independent
    reference for the scenario estimator.
    """
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    sig2t = params.sigma2 * tau
    half = 12.0 * math.sqrt(sig2t)
    dy = fld.grid.dx
    n = int(math.ceil(2.0 * half / dy)) + 1
    y = -half + dy * np.arange(n)
    lo, hi = x - y[-1], x - y[0]
    if lo < fld.grid.x_min or hi > fld.grid.x_max:
        raise DomainOverflowError("quadrature support exceeds the field's grid")
    log_gauss = -0.5 * y * y / sig2t - 0.5 * math.log(2.0 * math.pi * sig2t)
    vals = log_gauss + np.interp(x - y, fld.grid.xs(), fld.L)
    return -params.branch_rate * tau + float(logsumexp(vals)) + math.log(dy)


# -- front trace and tail series ---------------------------------------------


@dataclass
class FrontTrace:
    """Sampled half-level positions with an affine + log fit."""

    times: np.ndarray
    positions: np.ndarray
    fitted_speed: float | None = None
    log_coeff: float | None = None
    offset: float | None = None

    def position_at(self, t: float) -> float:
        if not (self.times[0] <= t <= self.times[-1]):
            raise ValueError(f"t={t!r} outside sampled range")
        return float(np.interp(t, self.times, self.positions))

    def fit_window(self, t_lo: float, t_hi: float) -> tuple[float, float, float]:
        """Least squares of position against {t, ln t, 1} on [t_lo, t_hi]."""
        sel = (self.times >= t_lo) & (self.times <= t_hi) & (self.times > 0.0)
        t = self.times[sel]
        if t.size < 8:
            raise InsufficientSamplesError("need at least 8 front samples in the window")
        X = np.column_stack([t, np.log(t), np.ones_like(t)])
        beta, _, rank, _ = np.linalg.lstsq(X, self.positions[sel], rcond=None)
        if rank < 3:
            raise RankDeficientFitError("front fit design matrix is rank deficient")
        return float(beta[0]), float(beta[1]), float(beta[2])


@dataclass
class TailSeries:
    """ln u sampled along the ray x = alpha * sqrt(2 sigma2) * t."""

    alpha: float
    times: np.ndarray
    log_u: np.ndarray
    x_probe: np.ndarray
    fit: "TailFit | None" = None


@dataclass(frozen=True)
class TailFit:
    """Coefficients of -ln u ~ a*t + b*ln t + c with standard errors."""

    a: float
    b: float
    c: float
    se_a: float
    se_b: float
    se_c: float
    residual_norm: float
    with_log_term: bool


def fit_tail_series(series: TailSeries, with_log_term: bool = True) -> TailFit:
    """Least-squares fit of -ln u against {t, ln t, 1} (or {t, 1})."""
    t = np.asarray(series.times, dtype=float)
    y = -np.asarray(series.log_u, dtype=float)
    if t.size < 5:
        raise InsufficientSamplesError(f"need at least 5 samples, got {t.size}")
    if float(np.max(t)) < 4.0 * float(np.min(t)) - 1e-12:
        raise InsufficientSamplesError("samples must span at least a factor 4 in t")
    if with_log_term:
        X = np.column_stack([t, np.log(t), np.ones_like(t)])
    else:
        X = np.column_stack([t, np.ones_like(t)])
    beta, _, rank, sv = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1] or sv[-1] <= 1e-12 * sv[0]:
        raise RankDeficientFitError("tail fit design matrix is rank deficient")
    resid = y - X @ beta
    rss = float(resid @ resid)
    dof = t.size - X.shape[1]
    s2 = rss / dof if dof > 0 else float("nan")
    cov = s2 * np.linalg.inv(X.T @ X)
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    if with_log_term:
        a, b, c = (float(v) for v in beta)
        se_a, se_b, se_c = (float(v) for v in se)
    else:
        a, c = (float(v) for v in beta)
        b, se_b = 0.0, 0.0
        se_a, se_c = float(se[0]), float(se[1])
    return TailFit(
        a=a, b=b, c=c, se_a=se_a, se_b=se_b, se_c=se_c,
        residual_norm=math.sqrt(rss), with_log_term=with_log_term,
    )


# -- full solve ---------------------------------------------------------------


@dataclass
class SolveResult:
    front: FrontTrace | None
    tails: list[TailSeries]
    snapshots: dict[float, LogField]
    grid: Grid
    smoothing_eps: float
    params: ModelParams

    def tail_for(self, alpha: float) -> TailSeries:
        for series in self.tails:
            if series.alpha == alpha:
                return series
        raise KeyError(f"no tail series for alpha={alpha!r}")


def solve(
    params: ModelParams,
    t_final: float,
    probes: Sequence[tuple[float, float]] = (),
    *,
    dx: float = 0.05,
    dt: float | None = None,
    smoothing_eps: float | None = None,
    tail_floor: float = -700.0,
    snapshot_times: Sequence[float] = (),
    track_front: bool = True,
    front_samples: int = 400,
    x_min: float | None = None,
    x_max: float | None = None,
) -> SolveResult:
    """Evolve from the smoothed step to t_final, recording probes on the way.

    probes are (alpha, t) pairs; each records ln u at x = alpha*sqrt(2
    sigma2)*t by linear interpolation of L.  The domain is auto-sized so
    every probe stays at least 20 sigma sqrt(t) above the left edge (and
    the x bounds can be overridden, at which point that margin is checked
    and DomainOverflowError raised if violated).
    """
    if not (math.isfinite(t_final) and t_final >= 0.0):
        raise ValueError(f"t_final must be nonnegative, got {t_final!r}")
    crit = params.critical_velocity
    sigma = params.sigma
    probes = [(float(a), float(tp)) for a, tp in probes]
    for a, tp in probes:
        if not a < 1.0:
            raise ValueError(f"probe alpha must be < 1, got {a!r}")
        if not 0.0 <= tp <= t_final + 1e-12:
            raise ValueError(f"probe time {tp!r} outside [0, {t_final!r}]")
    snapshot_times = [float(ts) for ts in snapshot_times]
    for ts in snapshot_times:
        if not 0.0 <= ts <= t_final + 1e-12:
            raise ValueError(f"snapshot time {ts!r} outside [0, {t_final!r}]")

    if dt is None:
        dt = default_dt(dx, params.sigma2)
    v_min = min([0.0] + [a * crit for a, _ in probes])
    root_t = math.sqrt(t_final) if t_final > 0.0 else 0.0
    lo = x_min if x_min is not None else min(v_min * t_final - 20.0 * sigma * root_t - 10.0 * sigma, -10.0 * sigma)
    hi = x_max if x_max is not None else max(crit * t_final + 20.0 * sigma * root_t, 10.0 * sigma)
    grid = Grid.build(lo, hi, dx, dt)

    for a, tp in probes:
        xp = a * crit * tp
        if xp - 20.0 * sigma * math.sqrt(tp) < grid.x_min - 1e-9:
            raise DomainOverflowError(
                f"probe (alpha={a}, t={tp}) closer than 20*sigma*sqrt(t) to x_min"
            )
        if xp > grid.x_max + 1e-9:
            raise DomainOverflowError(f"probe (alpha={a}, t={tp}) beyond x_max")

    eps = smoothing_eps if smoothing_eps is not None else dx
    fld = init_field(grid, eps, tail_floor=tail_floor)
    stepper = Stepper(params=params, grid=grid)

    front_set: set[float] = set()
    if track_front and t_final > 0.0:
        front_set = {float(ts) for ts in np.linspace(0.0, t_final, front_samples + 1)}
    elif track_front:
        front_set = {0.0}
    probe_at: dict[float, list[int]] = {}
    for idx, (_, tp) in enumerate(probes):
        probe_at.setdefault(tp, []).append(idx)
    snap_set = set(snapshot_times)

    events = sorted(front_set | set(probe_at) | snap_set | {t_final})
    xs = grid.xs()
    front_t: list[float] = []
    front_x: list[float] = []
    probe_val: dict[int, float] = {}
    snapshots: dict[float, LogField] = {}

    for T in events:
        if T > fld.time:
            fld = stepper.advance(fld, T - fld.time, end_time=T)
        if T in front_set:
            front_t.append(T)
            front_x.append(front_position(fld))
        for idx in probe_at.get(T, ()):
            a, tp = probes[idx]
            probe_val[idx] = float(np.interp(a * crit * tp, xs, fld.L))
        if T in snap_set:
            snapshots[T] = fld.copy()

    front = None
    if track_front:
        front = FrontTrace(times=np.asarray(front_t), positions=np.asarray(front_x))
        window_lo = max(1.0, 0.1 * t_final)
        in_window = (front.times >= window_lo) & (front.times > 0.0)
        if int(np.count_nonzero(in_window)) >= 8:
            speed, log_coeff, offset = front.fit_window(window_lo, t_final)
            front.fitted_speed, front.log_coeff, front.offset = speed, log_coeff, offset

    by_alpha: dict[float, list[int]] = {}
    for idx, (a, _) in enumerate(probes):
        by_alpha.setdefault(a, []).append(idx)
    tails = []
    for a in sorted(by_alpha):
        idxs = sorted(by_alpha[a], key=lambda i: probes[i][1])
        times = np.asarray([probes[i][1] for i in idxs])
        logu = np.asarray([probe_val[i] for i in idxs])
        tails.append(
            TailSeries(alpha=a, times=times, log_u=logu, x_probe=times * a * crit)
        )
    return SolveResult(
        front=front, tails=tails, snapshots=snapshots, grid=grid,
        smoothing_eps=eps, params=params,
    )


# -- tabular output -----------------------------------------------------------

PROBE_CSV_HEADER = "alpha,t,x_probe,ln_u,dx,dt,eps"


def probe_csv_lines(result: SolveResult) -> list[str]:
    """One CSV row per tail sample: alpha,t,x_probe,ln_u,dx,dt,eps."""
    from .serialize import fmt_float

    lines = [PROBE_CSV_HEADER]
    for series in result.tails:
        for t, xp, lu in zip(series.times, series.x_probe, series.log_u):
            lines.append(
                ",".join(
                    fmt_float(v)
                    for v in (series.alpha, t, xp, lu, result.grid.dx, result.grid.dt, result.smoothing_eps)
                )
            )
    return lines


def write_probe_csv(path, result: SolveResult) -> None:
    with open(path, "w") as fh:
        fh.write("\n".join(probe_csv_lines(result)) + "\n")
