"""Limiting Brownian variational problems and the coupled zoom construction.

Three grid argmax problems drive the free-energy expansion: the location u*
of sup_{0<=u<=c_h} (X1_u + X2_{c_h-u}), the second-order window value

    W2^K = max_{|u|,|v|<=K} { Y_u - Y_{-v} - chi(B_u + B_v)
                              - 3 pi^2 / (beta c_h^4 sqrt(2)) (u+v)^2 },

and the parabolic-drift argmax sup_s (W_s - c s^2) of the model with a fixed
left endpoint. `build_coupled_system` realizes the finite-n coupling: a
two-sided Bessel-3 path is pasted into the Brownian pair on a dyadic window
around u*, the outer parts are completed with conditioned meander kernels,
and the zoom identities hold exactly on the grid by construction.

All solvers share one scheme: coarse scan, bisection refinement inside the
winning cell (conditioned bridge midpoints once the stored resolution is
exhausted), deterministic tie-break toward the smallest |coordinate|.

Stream salts under MODULE_VARPROB: 0 arcsine draws for u*, 1 zoom Bessel,
2 zoom Brownian motion, 3/4 left/right meander completion, 5 Brownian
increments of Y outside the window, 6 path extension beyond c_h; solver
bridge midpoints use 7/17 (u* problem), 8/28 (window problem) and 37
(parabolic drift), each keyed by (level, lattice offset) so overlapping
windows and repeated calls agree draw for draw.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .env import env_from_brownian
from .rng import MODULE_VARPROB, stream
from .stochproc import (
    ProcessPath,
    sample_two_sided_bessel,
    sample_two_sided_bm,
)

_SQRT2 = math.sqrt(2.0)


def _child_seed(master: int, *keys: int) -> int:
    """Stable derived master seed for a sampler that keys its own stream."""
    ss = np.random.SeedSequence(master, spawn_key=(MODULE_VARPROB, *map(int, keys)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _meander_completion(tgrid: np.ndarray, T: float, s0: float, x0: float,
                        rng: np.random.Generator) -> np.ndarray:
    """Meander of duration T given the value x0 at time s0, at times tgrid.

    Exact two-stage draw: the time-T endpoint comes from the normalized
    killed-kernel density phi_tau(y - x0) - phi_tau(y + x0) (Rayleigh when
    x0 = s0 = 0), and the interior is the modulus of a 3d Gaussian bridge,
    which is the Bessel-3 bridge and hence the conditioned-positive law.
    """
    tau = T - s0
    u = float(rng.random())
    if x0 <= 0.0:
        y = math.sqrt(-2.0 * tau * math.log1p(-u))
    else:
        rt2 = math.sqrt(2.0 * tau)
        total = math.erf(x0 / rt2)

        def shifted(yv: float) -> float:
            return (0.5 * math.erf((yv - x0) / rt2)
                    - 0.5 * math.erf((yv + x0) / rt2) + (1.0 - u) * total)

        hi = x0 + 12.0 * math.sqrt(tau)
        while shifted(hi) < 0.0:
            hi *= 2.0
        y = brentq(shifted, 0.0, hi, xtol=1e-13 * max(1.0, hi))
    # endpoint direction on the radius-y sphere, tilted toward the start by
    # the heat kernel: cos(angle) has density prop. to exp(x0 y mu / tau)
    if x0 > 0.0 and y > 0.0:
        kappa = x0 * y / tau
        uu = float(rng.random())
        if kappa > 1e-8:
            mu = 1.0 + math.log1p((uu - 1.0) * -math.expm1(-2.0 * kappa)) / kappa
        else:
            mu = 2.0 * uu - 1.0
    else:
        mu = 1.0
    b1 = y * mu
    b2 = y * math.sqrt(max(0.0, 1.0 - mu * mu))
    s = np.asarray(tgrid, dtype=float) - s0
    pinned = abs(s[-1] - tau) <= 1e-9 * tau
    if not pinned:
        s = np.append(s, tau)
    ds = np.diff(np.concatenate([[0.0], s]))
    w = np.cumsum(rng.standard_normal((s.size, 3)) * np.sqrt(ds)[:, None], axis=0)
    fluct = w - (s / tau)[:, None] * w[-1]
    frac = s / tau
    c1 = x0 + frac * (b1 - x0) + fluct[:, 0]
    c2 = frac * b2 + fluct[:, 1]
    vals = np.sqrt(c1**2 + c2**2 + fluct[:, 2] ** 2)
    vals[-1] = y
    return vals if pinned else vals[:-1]


def c_h_of(h: float) -> float:
    """Continuum range-size scale (pi^2 / h)^(1/3)."""
    if h <= 0:
        raise ValueError("h must be positive")
    return (math.pi**2 / h) ** (1.0 / 3.0)


def simplified_drift(h: float, beta: float) -> float:
    """Parabola coefficient 3 pi^2 / (2 beta c_h^4) of the fixed-endpoint model."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    return 3.0 * math.pi**2 / (2.0 * beta * c_h_of(h) ** 4)


# ---------------------------------------------------------------------------
# Solution container


@dataclass(frozen=True)
class VariationalSolution:
    """Value and argmax of one grid variational problem.

    `grid_resolution` is the spacing of the finest probe around the reported
    argmax; `boundary` flags an argmax pinned to the scan edge; `stabilized`
    is None unless the solver ran a window sweep.
    """

    value: float
    argmax: float | tuple[float, float]
    grid_resolution: float
    refinement_depth: int
    boundary: bool = False
    stabilized: bool | None = None
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        arg = self.argmax
        payload = {
            "value": self.value,
            "argmax": list(arg) if isinstance(arg, tuple) else arg,
            "grid_resolution": self.grid_resolution,
            "refinement_depth": self.refinement_depth,
            "boundary": self.boundary,
            "stabilized": self.stabilized,
            "metadata": {k: self.metadata[k] for k in sorted(self.metadata)},
        }
        return json.dumps(payload, sort_keys=True)


# ---------------------------------------------------------------------------
# Shared grid machinery


def _path_arrays(path) -> tuple[np.ndarray, np.ndarray]:
    """Times and values with the origin made explicit.

    Accepts anything with .times/.values. A path starting at t > 0 gets the
    point (0, 0) prepended (Brownian convention); a path that already carries
    t = 0 is used as is, so profile-level constant shifts stay representable.
    """
    t = np.asarray(path.times, dtype=float)
    v = np.asarray(path.values, dtype=float)
    if t.ndim != 1 or t.shape != v.shape or t.size == 0:
        raise ValueError("path needs matching 1d times and values")
    if t[0] > 0:
        t = np.concatenate([[0.0], t])
        v = np.concatenate([[0.0], v])
    return t, v


def _uniform_step(t: np.ndarray) -> float:
    if t.size < 2:
        raise ValueError("path too short")
    p = float(t[1] - t[0])
    if not np.allclose(np.diff(t), p, rtol=1e-9, atol=0.0):
        raise ValueError("path grid must be uniform")
    return p


def _tie_pick_1d(ts: np.ndarray, vals: np.ndarray) -> int:
    """Index of the max; exact ties resolved toward smallest |t|, then t."""
    best = vals.max()
    cand = np.flatnonzero(vals == best)
    order = np.lexsort((ts[cand], np.abs(ts[cand])))
    return int(cand[order[0]])


def _bridge_mid(rng: np.random.Generator, ta: float, xa: float,
                tb: float, xb: float) -> float:
    """Brownian bridge midpoint between two pinned path points."""
    var = (tb - ta) / 4.0
    return 0.5 * (xa + xb) + math.sqrt(var) * rng.standard_normal()


def _bessel_bridge_mid(rng: np.random.Generator, ta: float, ra: float,
                       tb: float, rb: float) -> float:
    """Bessel-3 bridge midpoint: modulus of a 3d Brownian bridge between
    radial endpoints placed on a common axis."""
    sd = math.sqrt((tb - ta) / 4.0)
    g = rng.standard_normal(3)
    return math.hypot(0.5 * (ra + rb) + sd * g[0], sd * g[1], sd * g[2])


class _RefinableLine:
    """Values of one stored process on a uniform grid, extendable below the
    grid by conditioned bridge midpoints (memoized, keyed by location so
    repeated lookups and overlapping windows agree draw for draw)."""

    def __init__(self, t0: float, step: float, values: np.ndarray,
                 seed: int, salt: int, kind: str):
        self.t0 = t0
        self.step = step
        self.values = values
        self.seed = seed
        self.salt = salt
        self.kind = kind
        self.cache: dict[tuple[int, int], float] = {}

    def value(self, t: float, level: int) -> float:
        """Value at t, where t sits on the dyadic lattice step/2^level.

        Keys canonicalize (even offsets drop to the coarser level), so a
        point reached through different windows or levels always resolves to
        the same stored value or the same memoized draw.
        """
        denom = self.step / (1 << level)
        k = (t - self.t0) / denom
        ki = int(round(k))
        if abs(k - ki) > 1e-6:
            raise ValueError("refinement point off the dyadic lattice")
        while level > 0 and ki % 2 == 0:
            ki //= 2
            level -= 1
        if level == 0:
            return float(self.values[ki])
        key = (ki, level)
        if key in self.cache:
            return self.cache[key]
        par = self.step / (1 << (level - 1))
        lo_t = self.t0 + (ki // 2) * par
        hi_t = lo_t + par
        xa = self.value(lo_t, level - 1)
        xb = self.value(hi_t, level - 1)
        rng = stream(self.seed, MODULE_VARPROB, self.salt, level, ki)
        if self.kind == "bessel":
            val = _bessel_bridge_mid(rng, lo_t, xa, hi_t, xb)
        else:
            val = _bridge_mid(rng, lo_t, xa, hi_t, xb)
        self.cache[key] = val
        return val

    def flat_between(self, ta: float, tb: float) -> bool:
        i = max(0, int(math.floor((ta - self.t0) / self.step)))
        j = min(self.values.size - 1, int(math.ceil((tb - self.t0) / self.step)))
        if j <= i:
            return True
        seg = self.values[i:j + 1]
        return bool(seg.max() == seg.min())


# ---------------------------------------------------------------------------
# First-order problem: argmax of X1_u + X2_{c_h - u}


def solve_ustar(x1, x2, c_h: float, grid: float | None = None,
                refinements: int = 2, seed: int = 0) -> VariationalSolution:
    """Grid argmax of the tilted profile X_u = X1_u + X2_{c_h-u} on [0, c_h].

    The coarse scan runs at `grid` resolution (path resolution when None);
    each refinement halves the probe spacing inside the winning cell, using
    stored values while they exist and Brownian-bridge midpoints below the
    path grid. Ties break toward the smallest u. A boundary argmax is
    reported, not raised.
    """
    t1, v1 = _path_arrays(x1)
    t2, v2 = _path_arrays(x2)
    p = _uniform_step(t1)
    if not math.isclose(p, _uniform_step(t2), rel_tol=1e-9):
        raise ValueError("paths must share one grid step")
    m = int(round(c_h / p))
    if m < 1 or abs(m * p - c_h) > 1e-6 * p:
        raise ValueError("c_h must sit on the path grid")
    if t1.size < m + 1 or t2.size < m + 1:
        raise ValueError("paths must cover [0, c_h]")
    prof = v1[:m + 1] + v2[m::-1]
    ts = np.arange(m + 1) * p

    stride = 1 if grid is None else max(1, int(round(grid / p)))
    idx = np.arange(0, m + 1, stride)
    if idx[-1] != m:
        idx = np.append(idx, m)
    k = idx[_tie_pick_1d(ts[idx], prof[idx])]
    value = float(prof[k])
    coarse_argmax = k * p
    res = stride * p

    line1 = _RefinableLine(0.0, p, v1, seed, 7, "bm")
    line2 = _RefinableLine(0.0, p, v2, seed, 17, "bm")
    best_t = k * p
    level = 0
    done = 0
    for _ in range(refinements):
        if stride > 1:
            nstride = max(1, stride // 2)
            lo, hi = max(0, k - stride), min(m, k + stride)
            sub = np.arange(lo, hi + 1, nstride)
            sub = np.unique(np.append(sub, [k, hi]))
            k = sub[_tie_pick_1d(ts[sub], prof[sub])]
            value = float(prof[k])
            best_t = k * p
            stride = nstride
            res = stride * p
            done += 1
            continue
        # below the stored grid: conditioned midpoints on both paths
        half = res / 2.0
        lo_t, hi_t = max(0.0, best_t - res), min(c_h, best_t + res)
        if (line1.flat_between(lo_t, hi_t)
                and line2.flat_between(c_h - hi_t, c_h - lo_t)):
            break  # nothing to resolve in a flat cell
        level += 1
        cands = [best_t - half, best_t + half]
        for u in cands:
            if u <= 0.0 or u >= c_h:
                continue
            xv = line1.value(u, level) + line2.value(c_h - u, level)
            if xv > value or (xv == value and (abs(u), u) < (abs(best_t), best_t)):
                value = float(xv)
                best_t = u
        res = half
        done += 1

    boundary = best_t <= 0.0 or best_t >= c_h
    return VariationalSolution(
        value=value, argmax=float(best_t), grid_resolution=float(res),
        refinement_depth=done, boundary=boundary,
        metadata={"coarse_argmax": float(coarse_argmax), "path_step": p})


# ---------------------------------------------------------------------------
# The coupled system


@dataclass(frozen=True)
class CoupledLimitSystem:
    """Brownian pair with the zoom processes pasted in around u*.

    `c_h` is the continuum scale snapped to the path grid (u_star_index and
    the swap symmetry are then exact in index arithmetic); `bessel` stores B
    with chi(B) the standard two-sided Bessel-3 actually drawn, so the pasted
    decrement of X equals sqrt(2) chi B verbatim. `window_steps` counts the
    pasted grid offsets per side; `delta0` is the dyadic coupling radius.
    """

    n: int
    h: float
    c_h: float
    u_star: float
    u_star_index: int
    delta0: float
    window_steps: int
    bessel: ProcessPath
    ybm: ProcessPath
    x1: ProcessPath
    x2: ProcessPath
    grid_step: float
    zoom_step: float
    zoom_refine: int
    resamples: int
    seed: int

    def __post_init__(self):
        if not 0.0 < self.u_star < self.c_h:
            raise ValueError("u_star must lie inside (0, c_h)")
        if self.delta0 <= 0.0:
            raise ValueError("delta0 must be positive")
        if self.bessel.kind != "two_sided_bessel" or self.ybm.kind != "bm_two_sided":
            raise ValueError("zoom paths have the wrong kinds")
        if self.x1.kind != "bm" or self.x2.kind != "bm":
            raise ValueError("x1, x2 must be Brownian paths")

    # -- derived views ------------------------------------------------------

    def chi(self, u) -> np.ndarray:
        """Side-dependent normalization (sqrt(c_h-u*) 1{u>=0} + sqrt(u*) 1{u<0})^(-1)."""
        u = np.asarray(u, dtype=float)
        return np.where(u >= 0,
                        1.0 / math.sqrt(self.c_h - self.u_star),
                        1.0 / math.sqrt(self.u_star))

    @property
    def profile_size(self) -> int:
        return int(round(self.c_h / self.grid_step)) + 1

    def x_values(self) -> np.ndarray:
        """X_u = X1_u + X2_{c_h-u} on the path grid over [0, c_h]."""
        m = self.profile_size - 1
        return self.x1.values[:m + 1] + self.x2.values[m::-1]

    def y_values(self) -> np.ndarray:
        """Y_u = X1_u - X2_{c_h-u} on the path grid over [0, c_h]."""
        m = self.profile_size - 1
        return self.x1.values[:m + 1] - self.x2.values[m::-1]

    @property
    def x_at_ustar(self) -> float:
        return float(self.x_values()[self.u_star_index])

    def env_pair(self):
        """(minus, plus) views starting at one grid step, for the field coupling."""
        minus = _Trimmed(self.x1.times[1:], self.x1.values[1:])
        plus = _Trimmed(self.x2.times[1:], self.x2.values[1:])
        return minus, plus

    def environment(self):
        return env_from_brownian(self.n, self.env_pair())

    def manifest(self) -> dict:
        return {
            "n": self.n,
            "h": self.h,
            "c_h": self.c_h,
            "u_star": self.u_star,
            "u_star_index": self.u_star_index,
            "delta0": self.delta0,
            "window_steps": self.window_steps,
            "grid_step": self.grid_step,
            "zoom_step": self.zoom_step,
            "zoom_refine": self.zoom_refine,
            "resamples": self.resamples,
            "seed": self.seed,
            "extent": float(self.x1.times[-1]),
            "zoom_extent": float(self.bessel.times[-1]),
        }


class _Trimmed:
    """Bare times/values view handed to the environment coupling."""

    __slots__ = ("times", "values")

    def __init__(self, times, values):
        self.times = times
        self.values = values


def build_coupled_system(n: int, seed: int, h: float = 1.0,
                         zoom_extent: float = 20.0, zoom_refine: int = 4,
                         extent: float | None = None) -> CoupledLimitSystem:
    """Draw the coupled pair (X1, X2) with the zoom processes pasted near u*.

    u* is arcsine on [0, c_h] snapped to the n^(-1/3) grid (a draw within one
    cell of either endpoint is resampled and counted); delta0 is the largest
    dyadic radius at most min(u*, c_h - u*)/4. Inside the window the
    decrement of X rides on a standard two-sided Bessel-3 path and the
    increment of Y on an independent two-sided Brownian path; outside, X is
    completed with duration-(u*) and duration-(c_h - u*) meander kernels
    conditioned on the pasted edge values, and Y with fresh Brownian
    increments. Levels are pinned by X1_0 = X2_0 = 0, and the paths continue
    past c_h to `extent` (default: the field-coverage reach 2 c_h) with fresh
    increments. The grid coupling identities are verified before returning.
    """
    if n < 1:
        raise ValueError("n must be positive")
    ch_exact = c_h_of(h)
    g = float(n) ** (-1.0 / 3.0)
    m = int(round(ch_exact / g))
    if m < 8:
        raise ValueError("n too small: fewer than 8 grid cells in [0, c_h]")
    c = m * g

    rng_u = stream(seed, MODULE_VARPROB, 0)
    resamples = 0
    while True:
        k = int(round(m * math.sin(math.pi * rng_u.uniform() / 2.0) ** 2))
        if 2 <= k <= m - 2:
            break
        resamples += 1
        if resamples > 10_000:
            raise RuntimeError("arcsine resampling did not terminate")
    u_star = k * g
    delta0 = 2.0 ** math.floor(math.log2(min(u_star, c - u_star) / 4.0))
    d = int(math.floor(delta0 / g + 1e-9))

    # zoom grid: step n^(-2/9)/zoom_refine so every pasted offset j n^(-2/9)
    # sits on it; extent covers both the window and the requested scan range
    r = int(zoom_refine)
    if r < 1:
        raise ValueError("zoom_refine must be a positive integer")
    dz = float(n) ** (-2.0 / 9.0) / r
    mz = max(int(math.ceil(zoom_extent / dz)), d * r)
    zgrid = np.arange(-mz, mz + 1) * dz
    rbes = sample_two_sided_bessel(zgrid, _child_seed(seed, 1))
    ybm = sample_two_sided_bm(zgrid, _child_seed(seed, 2))
    i0 = mz
    rvals = rbes.values
    s18 = float(n) ** (-1.0 / 18.0)
    # stored Bessel is B = R/chi so chi B is the standard path actually drawn
    chivals = np.where(zgrid >= 0.0, math.sqrt(c - u_star), math.sqrt(u_star))
    bes = ProcessPath(zgrid, rvals * chivals, "two_sided_bessel",
                      duration=float(zgrid[-1]))

    # decrement (X_{u*} - X_u)/sqrt(2) and increment Y_u - Y_{u*} on the grid
    dec = np.empty(m + 1)
    inc = np.empty(m + 1)
    j = np.arange(-d, d + 1)
    dec[k + j] = s18 * rvals[i0 + j * r]
    inc[k + j] = _SQRT2 * s18 * ybm.values[i0 + j * r]

    left = np.arange(d + 1, k + 1) * g
    if left.size:
        dec[k - np.arange(d + 1, k + 1)] = _meander_completion(
            left, u_star, d * g, dec[k - d], stream(seed, MODULE_VARPROB, 3))
    right = np.arange(d + 1, m - k + 1) * g
    if right.size:
        dec[k + np.arange(d + 1, m - k + 1)] = _meander_completion(
            right, (m - k) * g, d * g, dec[k + d], stream(seed, MODULE_VARPROB, 4))

    rng_y = stream(seed, MODULE_VARPROB, 5)
    if k - d > 0:
        steps = _SQRT2 * math.sqrt(g) * rng_y.standard_normal(k - d)
        inc[np.arange(k - d - 1, -1, -1)] = inc[k - d] + np.cumsum(steps)
    if m - k - d > 0:
        steps = _SQRT2 * math.sqrt(g) * rng_y.standard_normal(m - k - d)
        inc[np.arange(k + d + 1, m + 1)] = inc[k + d] + np.cumsum(steps)

    # levels: X1_0 = 0 and X2_0 = 0 pin both additive constants
    x1v = 0.5 * (_SQRT2 * (dec[0] - dec) + (inc - inc[0]))
    x2v = 0.5 * (_SQRT2 * (dec[m] - dec[::-1]) + (inc[m] - inc[::-1]))
    x1v[0] = 0.0
    x2v[0] = 0.0

    reach = 2.0 * ch_exact if extent is None else float(extent)
    total = max(m, int(math.ceil(reach / g)) + 2)
    if total > m:
        rng_x = stream(seed, MODULE_VARPROB, 6)
        ext1 = x1v[m] + np.cumsum(math.sqrt(g) * rng_x.standard_normal(total - m))
        ext2 = x2v[m] + np.cumsum(math.sqrt(g) * rng_x.standard_normal(total - m))
        x1v = np.concatenate([x1v, ext1])
        x2v = np.concatenate([x2v, ext2])
    times = np.arange(total + 1) * g
    x1 = ProcessPath(times, x1v, "bm", duration=float(times[-1]))
    x2 = ProcessPath(times, x2v, "bm", duration=float(times[-1]))

    system = CoupledLimitSystem(
        n=int(n), h=float(h), c_h=c, u_star=u_star, u_star_index=k,
        delta0=delta0, window_steps=d, bessel=bes, ybm=ybm, x1=x1, x2=x2,
        grid_step=g, zoom_step=dz, zoom_refine=r, resamples=resamples,
        seed=int(seed))
    _verify_coupling(system)
    return system


def _verify_coupling(system: CoupledLimitSystem) -> None:
    """Assert the construction invariants: grid coupling identities inside
    the window and a strict profile maximum at u*."""
    n = system.n
    k = system.u_star_index
    d = system.window_steps
    r = system.zoom_refine
    xs = system.x_values()
    ys = system.y_values()
    if int(np.argmax(xs)) != k or np.count_nonzero(xs == xs[k]) != 1:
        raise RuntimeError("constructed profile is not uniquely maximal at u*")
    j = np.arange(-d, d + 1)
    i0 = (system.bessel.times.size - 1) // 2
    scale = float(n) ** (1.0 / 18.0)
    zt = system.bessel.times[i0 + j * r]
    lhs_x = scale * (xs[k] - xs[k + j])
    rhs_x = _SQRT2 * system.chi(zt) * system.bessel.values[i0 + j * r]
    lhs_y = scale * (ys[k + j] - ys[k])
    rhs_y = _SQRT2 * system.ybm.values[i0 + j * r]
    tol = 1e-9 * max(1.0, float(np.abs(xs).max()) * scale)
    if np.abs(lhs_x - rhs_x).max() > tol or np.abs(lhs_y - rhs_y).max() > tol:
        raise RuntimeError("grid coupling identities violated")


# ---------------------------------------------------------------------------
# Second-order window problem


def _zoom_index(system: CoupledLimitSystem) -> int:
    return (system.bessel.times.size - 1) // 2


def solve_w2(system: CoupledLimitSystem, beta: float, h: float | None = None,
             K: float = 4.0, grid: float | None = None, refinements: int = 2,
             seed: int | None = None) -> VariationalSolution:
    """Window value W2^K on [-K, K]^2 for the stored zoom pair.

    The scanned surface is Y_u - Y_{-v} - chi(B_u + B_v) minus the parabola
    3 pi^2/(beta c_h^4 sqrt(2)) (u+v)^2. Ties break toward the smallest
    (|u|, u, |v|, v); refinement draws are keyed by location, so two calls
    whose windows share the winning cell return identical values.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if K <= 1:
        raise ValueError("window K must exceed 1")
    if h is not None and abs(c_h_of(h) - system.c_h) > 2.0 * system.grid_step:
        raise ValueError("h inconsistent with the system's c_h")
    zt = system.bessel.times
    if K > zt[-1] * (1 + 1e-12):
        raise ValueError("zoom extent smaller than the requested window")
    seed = system.seed if seed is None else seed
    c = system.c_h
    coeff = 3.0 * math.pi**2 / (beta * c**4 * _SQRT2)
    dz = system.zoom_step
    i0 = _zoom_index(system)
    rv = system.chi(zt) * system.bessel.values  # standard Bessel again
    yv = system.ybm.values

    kk = int(math.floor(K / dz + 1e-9))
    stride = 1 if grid is None else max(1, int(round(grid / dz)))
    offs = np.arange(-(kk // stride) * stride, kk + 1, stride)
    ids = i0 + offs
    ts = zt[ids]
    a_side = yv[ids] - rv[ids]                   # Y_u - chi B_u
    b_side = -yv[2 * i0 - ids] - rv[ids]         # -Y_{-v} - chi B_v
    tot = a_side[:, None] + b_side[None, :] - coeff * (ts[:, None] + ts[None, :]) ** 2

    best = tot.max()
    ii, jj = np.nonzero(tot == best)
    pick = np.lexsort((ts[jj], np.abs(ts[jj]), ts[ii], np.abs(ts[ii])))[0]
    iu, iv = int(ii[pick]), int(jj[pick])
    u0, v0 = float(ts[iu]), float(ts[iv])
    value = float(best)
    res = stride * dz
    coarse = (u0, v0)

    line_y = _RefinableLine(float(zt[0]), dz, yv, seed, 8, "bm")
    line_r = _RefinableLine(float(zt[0]), dz, rv, seed, 28, "bessel")

    def surf(u: float, v: float, level: int) -> float:
        return (line_y.value(u, level) - line_y.value(-v, level)
                - line_r.value(u, level) - line_r.value(v, level)
                - coeff * (u + v) ** 2)

    done = 0
    level = 0
    cur_stride = stride
    for _ in range(refinements):
        if cur_stride > 1:
            nstride = max(1, cur_stride // 2)
            su = np.unique(np.clip(np.arange(-cur_stride, cur_stride + 1, nstride)
                                   + int(round(u0 / dz)), -kk, kk))
            sv = np.unique(np.clip(np.arange(-cur_stride, cur_stride + 1, nstride)
                                   + int(round(v0 / dz)), -kk, kk))
            tu = su * dz
            tv = sv * dz
            sub = (yv[i0 + su][:, None] - rv[i0 + su][:, None]
                   - yv[2 * i0 - (i0 + sv)][None, :] - rv[i0 + sv][None, :]
                   - coeff * (tu[:, None] + tv[None, :]) ** 2)
            bb = sub.max()
            si, sj = np.nonzero(sub == bb)
            pk = np.lexsort((tv[sj], np.abs(tv[sj]), tu[si], np.abs(tu[si])))[0]
            if bb > value or (bb == value
                              and (abs(tu[si[pk]]), tu[si[pk]], abs(tv[sj[pk]]), tv[sj[pk]])
                              < (abs(u0), u0, abs(v0), v0)):
                value = float(bb)
                u0, v0 = float(tu[si[pk]]), float(tv[sj[pk]])
            cur_stride = nstride
            res = cur_stride * dz
            done += 1
            continue
        window = res
        flat = (line_y.flat_between(u0 - window, u0 + window)
                and line_y.flat_between(-v0 - window, -v0 + window)
                and line_r.flat_between(u0 - window, u0 + window)
                and line_r.flat_between(v0 - window, v0 + window))
        if flat:
            break
        level += 1
        half = res / 2.0
        lim = kk * dz
        cu = [u0 - half, u0, u0 + half]
        cv = [v0 - half, v0, v0 + half]
        for u in cu:
            if abs(u) > lim:
                continue
            for v in cv:
                if abs(v) > lim or (u == u0 and v == v0):
                    continue
                sv_ = surf(u, v, level)
                if sv_ > value or (sv_ == value
                                   and (abs(u), u, abs(v), v) < (abs(u0), u0, abs(v0), v0)):
                    value = float(sv_)
                    u0, v0 = u, v
        res = half
        done += 1

    boundary = max(abs(u0), abs(v0)) >= kk * dz * (1 - 1e-12)
    return VariationalSolution(
        value=value, argmax=(u0, v0), grid_resolution=float(res),
        refinement_depth=done, boundary=boundary,
        metadata={"K": float(K), "coarse_argmax": [coarse[0], coarse[1]],
                  "drift_coeff": coeff})


def solve_w2_sweep(system: CoupledLimitSystem, beta: float, h: float | None = None,
                   k_start: float = 2.0, k_max: float = 16.0, tol: float = 0.0,
                   grid: float | None = None, refinements: int = 2,
                   seed: int | None = None) -> VariationalSolution:
    """Double the window until the value stops moving (within tol).

    Returns the last window's solution with `stabilized` set; when even the
    largest window keeps changing the value, stabilized is False and the
    sweep history sits in the metadata.
    """
    ks: list[float] = []
    vals: list[float] = []
    k = k_start
    last = None
    stabilized = False
    extent = float(system.bessel.times[-1])
    while True:
        k_eff = min(k, extent)
        sol = solve_w2(system, beta, h=h, K=k_eff, grid=grid,
                       refinements=refinements, seed=seed)
        ks.append(k_eff)
        vals.append(sol.value)
        if last is not None and abs(sol.value - last.value) <= tol:
            stabilized = True
            break
        last = sol
        if k_eff >= min(k_max, extent):
            break
        k = min(2 * k, k_max)
    meta = dict(sol.metadata)
    meta.update({"k_values": ks, "values": vals, "k_final": ks[-1]})
    return VariationalSolution(
        value=sol.value, argmax=sol.argmax, grid_resolution=sol.grid_resolution,
        refinement_depth=sol.refinement_depth, boundary=sol.boundary,
        stabilized=stabilized, metadata=meta)


# ---------------------------------------------------------------------------
# Parabolic-drift argmax (model with a fixed left endpoint)


def solve_chernoff(w_path, drift_coeff: float, grid: float | None = None,
                   refinements: int = 2, seed: int = 0,
                   window: float = 1.0) -> VariationalSolution:
    """Argmax of W_s - drift_coeff s^2 over a two-sided Brownian path.

    The scan window doubles until the value stops changing; if the stored
    path runs out first, the solution is reported with stabilized False.
    Refinement behaves as in the other solvers.
    """
    if drift_coeff <= 0:
        raise ValueError("drift coefficient must be positive")
    t = np.asarray(w_path.times, dtype=float)
    v = np.asarray(w_path.values, dtype=float)
    if t[0] >= 0 or t[-1] <= 0:
        raise ValueError("need a two-sided path")
    p = _uniform_step(t)
    i0 = int(round(-t[0] / p))
    if abs(t[i0]) > 1e-9 * p:
        raise ValueError("grid must contain s = 0")
    prof = v - drift_coeff * t**2
    stride = 1 if grid is None else max(1, int(round(grid / p)))
    max_reach = min(i0, t.size - 1 - i0)

    s_win = window
    last_val = None
    stabilized = False
    while True:
        reach = min(int(math.floor(s_win / p + 1e-9)), max_reach)
        edge = (reach // stride) * stride
        offs = np.arange(-edge, reach + 1, stride)
        ids = i0 + offs
        j = ids[_tie_pick_1d(t[ids], prof[ids])]
        val = float(prof[j])
        if last_val is not None and val == last_val:
            stabilized = True
            break
        last_val = val
        if reach >= max_reach:
            break
        s_win *= 2.0

    k = j
    best_s = float(t[k])
    value = float(prof[k])
    res = stride * p
    coarse = best_s
    scan_edge = edge * p
    line = _RefinableLine(float(t[0]), p, v, seed, 37, "bm")
    done = 0
    level = 0
    cur_stride = stride
    for _ in range(refinements):
        if cur_stride > 1:
            nstride = max(1, cur_stride // 2)
            lo = max(i0 - max_reach, k - cur_stride)
            hi = min(i0 + max_reach, k + cur_stride)
            sub = np.unique(np.append(np.arange(lo, hi + 1, nstride), [k, hi]))
            k = sub[_tie_pick_1d(t[sub], prof[sub])]
            best_s = float(t[k])
            value = float(prof[k])
            cur_stride = nstride
            res = cur_stride * p
            done += 1
            continue
        if line.flat_between(best_s - res, best_s + res):
            break
        level += 1
        half = res / 2.0
        for s in (best_s - half, best_s + half):
            if abs(s) > t[-1]:
                continue
            sv = line.value(s, level) - drift_coeff * s**2
            if sv > value or (sv == value and (abs(s), s) < (abs(best_s), best_s)):
                value = float(sv)
                best_s = s
        res = half
        done += 1

    return VariationalSolution(
        value=value, argmax=float(best_s), grid_resolution=float(res),
        refinement_depth=done, boundary=abs(best_s) >= scan_edge * (1 - 1e-12),
        stabilized=stabilized,
        metadata={"window": float(s_win), "coarse_argmax": float(coarse),
                  "drift_coeff": float(drift_coeff)})
