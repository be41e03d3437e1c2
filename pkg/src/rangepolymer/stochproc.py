"""Grid samplers for Brownian motion, meander, Bessel-3, excursion, and the
pathwise couplings between them.

Conventions. phi_t(x) is the N(0,t) density and Phi_t(y) = int_0^y phi_t; so
Phi_t(y) = erf(y / sqrt(2t)) / 2. The meander of duration T starts at 0, is
positive on (0,T], and has transition kernel

    p+(s,x,t,y) = [phi_{t-s}(x-y) - phi_{t-s}(x+y)] Phi_{T-t}(y) / Phi_{T-s}(x)

with time-0 marginal 2 y t^{-3/2} e^{-y^2/2t} Phi_{T-t}(y) (duration 1; other
durations by diffusive rescaling). Sampling inverts per-step CDFs that are
written in closed form through the bivariate normal CDF, so there is no time
discretization error in any marginal.
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import erf, owens_t
from scipy.stats import maxwell, norm

from .rng import MODULE_STOCHPROC, stream

_ONE_SIDED = {"bm", "meander", "bessel3", "excursion"}
_TWO_SIDED = {"bm_two_sided", "two_sided_bessel"}


@dataclass
class ProcessPath:
    """A sampled path on a strictly increasing time grid.

    One-sided kinds start at time 0; two-sided kinds span negative and
    positive times and must contain 0. Positivity constraints depend on kind
    and are enforced at construction.
    """

    times: np.ndarray
    values: np.ndarray
    kind: str
    duration: float

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.ndim != 1 or self.times.shape != self.values.shape:
            raise ValueError("times and values must be matching 1d arrays")
        if (np.diff(self.times) <= 0).any():
            raise ValueError("time grid must be strictly increasing")
        if self.kind in _ONE_SIDED:
            if self.times[0] != 0.0:
                raise ValueError(f"{self.kind} path must start at time 0")
            if self.values[0] != 0.0:
                raise ValueError(f"{self.kind} path must start at value 0")
        elif self.kind in _TWO_SIDED:
            if self.times[0] >= 0 or self.times[-1] <= 0:
                raise ValueError("two-sided path must straddle time 0")
        else:
            raise ValueError(f"unknown path kind {self.kind!r}")
        if self.kind in ("meander", "bessel3", "two_sided_bessel", "excursion"):
            if (self.values < 0).any():
                raise ValueError(f"{self.kind} values must be nonnegative")
        if self.kind == "excursion" and self.times[-1] == self.duration:
            if self.values[-1] != 0.0:
                raise ValueError("excursion must end at 0")

    def value_at(self, t) -> np.ndarray:
        """Linear interpolation inside the grid (exact at grid times)."""
        return np.interp(t, self.times, self.values)

    # -- serialization ------------------------------------------------------

    MAGIC = b"RPLPATH1"

    def to_binary(self) -> bytes:
        buf = io.BytesIO()
        kind = self.kind.encode()
        buf.write(self.MAGIC)
        buf.write(struct.pack("<H", len(kind)))
        buf.write(kind)
        buf.write(struct.pack("<dQ", self.duration, len(self.times)))
        pairs = np.empty((len(self.times), 2))
        pairs[:, 0] = self.times
        pairs[:, 1] = self.values
        buf.write(np.ascontiguousarray(pairs, dtype="<f8").tobytes())
        return buf.getvalue()

    @classmethod
    def from_binary(cls, blob: bytes) -> "ProcessPath":
        if blob[:8] != cls.MAGIC:
            raise ValueError("bad magic; not a path file")
        off = 8
        (klen,) = struct.unpack_from("<H", blob, off)
        off += 2
        kind = blob[off:off + klen].decode()
        off += klen
        duration, npts = struct.unpack_from("<dQ", blob, off)
        off += 16
        pairs = np.frombuffer(blob, dtype="<f8", offset=off, count=2 * npts)
        pairs = pairs.reshape(npts, 2)
        return cls(times=pairs[:, 0].copy(), values=pairs[:, 1].copy(),
                   kind=kind, duration=duration)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_binary())

    @classmethod
    def load(cls, path) -> "ProcessPath":
        with open(path, "rb") as fh:
            return cls.from_binary(fh.read())

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t,value\n")
            for t, v in zip(self.times, self.values):
                fh.write(f"{float(t)!r},{float(v)!r}\n")


def _check_grid(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise ValueError("grid must be a nonempty 1d array")
    if (np.diff(g) <= 0).any():
        raise ValueError("grid must be strictly increasing")
    return g


# ---------------------------------------------------------------------------
# Brownian motion and bridge refinement


def _bm_values(grid: np.ndarray, rng: np.random.Generator, size: int) -> np.ndarray:
    """BM at grid times (grid[0] > 0 allowed); shape (size, len(grid))."""
    dt = np.diff(np.concatenate([[0.0], grid]))
    inc = np.sqrt(dt) * rng.standard_normal((size, grid.size))
    return np.cumsum(inc, axis=1)


def sample_bm(grid, seed: int) -> ProcessPath:
    """Standard Brownian path at the given times (0 prepended)."""
    g = _check_grid(grid)
    if g[0] < 0:
        raise ValueError("grid must be nonnegative; use sample_two_sided_bm")
    if g[0] == 0.0:
        g = g[1:]
    rng = stream(seed, MODULE_STOCHPROC, 0)
    vals = _bm_values(g, rng, 1)[0]
    return ProcessPath(times=np.concatenate([[0.0], g]),
                       values=np.concatenate([[0.0], vals]),
                       kind="bm", duration=float(g[-1]))


def refine_bridge(path: ProcessPath, interval, new_grid, seed: int = 0) -> ProcessPath:
    """Insert new times into a BM path using the Brownian-bridge law.

    Existing grid values are carried over untouched; each inserted time is
    drawn conditionally on its in-fill neighbors, so the output restricted to
    the old grid is the old path bit for bit.
    """
    if path.kind not in ("bm", "bm_two_sided"):
        raise ValueError("bridge refinement applies to Brownian paths")
    lo, hi = interval
    if lo < path.times[0] or hi > path.times[-1]:
        raise ValueError("refinement interval outside path domain")
    new = np.asarray(new_grid, dtype=float)
    if ((new < lo) | (new > hi)).any():
        raise ValueError("new grid leaves the refinement interval")
    new = np.setdiff1d(new, path.times)
    if new.size == 0:
        return ProcessPath(path.times.copy(), path.values.copy(), path.kind,
                           path.duration)
    rng = stream(seed, MODULE_STOCHPROC, 9)
    times = path.times.copy()
    values = path.values.copy()
    for tau in np.sort(new):
        j = np.searchsorted(times, tau)
        s, u = times[j - 1], times[j]
        a, b = values[j - 1], values[j]
        mean = a + (b - a) * (tau - s) / (u - s)
        var = (tau - s) * (u - tau) / (u - s)
        v = mean + math.sqrt(var) * rng.standard_normal()
        times = np.insert(times, j, tau)
        values = np.insert(values, j, v)
    return ProcessPath(times, values, path.kind, path.duration)


def sample_two_sided_bm(grid, seed: int) -> ProcessPath:
    """Two independent Brownian halves glued at time 0 (value 0 there)."""
    g = _check_grid(grid)
    if g[0] >= 0 or g[-1] <= 0:
        raise ValueError("two-sided grid must straddle 0")
    rng = stream(seed, MODULE_STOCHPROC, 4)
    neg = -g[g < 0][::-1]
    pos = g[g > 0]
    vneg = _bm_values(neg, rng, 1)[0]
    vpos = _bm_values(pos, rng, 1)[0]
    times = np.concatenate([g[g < 0], [0.0], pos])
    values = np.concatenate([vneg[::-1], [0.0], vpos])
    return ProcessPath(times, values, "bm_two_sided",
                       duration=float(g[-1] - g[0]))


# ---------------------------------------------------------------------------
# Bessel-3 as the modulus of 3d Brownian motion


def _bessel3_values(grid: np.ndarray, rng: np.random.Generator,
                    size: int) -> np.ndarray:
    dt = np.diff(np.concatenate([[0.0], grid]))
    inc = np.sqrt(dt)[None, :, None] * rng.standard_normal((size, grid.size, 3))
    return np.linalg.norm(np.cumsum(inc, axis=1), axis=2)


def sample_bessel3(grid, seed: int) -> ProcessPath:
    g = _check_grid(grid)
    if g[0] < 0:
        raise ValueError("grid must be nonnegative")
    if g[0] == 0.0:
        g = g[1:]
    rng = stream(seed, MODULE_STOCHPROC, 2)
    vals = _bessel3_values(g, rng, 1)[0]
    return ProcessPath(times=np.concatenate([[0.0], g]),
                       values=np.concatenate([[0.0], vals]),
                       kind="bessel3", duration=float(g[-1]))


def sample_two_sided_bessel(grid, seed: int) -> ProcessPath:
    """Independent Bessel-3 halves on each side of 0."""
    g = _check_grid(grid)
    if g[0] >= 0 or g[-1] <= 0:
        raise ValueError("two-sided grid must straddle 0")
    rng = stream(seed, MODULE_STOCHPROC, 3)
    neg = -g[g < 0][::-1]
    pos = g[g > 0]
    vneg = _bessel3_values(neg, rng, 1)[0]
    vpos = _bessel3_values(pos, rng, 1)[0]
    times = np.concatenate([g[g < 0], [0.0], pos])
    values = np.concatenate([vneg[::-1], [0.0], vpos])
    return ProcessPath(times, values, "two_sided_bessel",
                       duration=float(g[-1] - g[0]))


# ---------------------------------------------------------------------------
# Meander: densities, closed-form marginal CDF, kernel-step sampling


def _phi_int(v: float, y) -> np.ndarray:
    """Phi_v(y) = int_0^y N(0,v) density; v = 0 gives the a.e. limit 1/2."""
    y = np.asarray(y, dtype=float)
    if v <= 0.0:
        return np.where(y > 0, 0.5, 0.0)
    return 0.5 * erf(y / math.sqrt(2.0 * v))


def meander_marginal_density(t: float, y, T: float = 1.0) -> np.ndarray:
    """Density of the duration-T meander at time t, vectorized over y."""
    if not 0.0 < t <= T:
        raise ValueError("need 0 < t <= T")
    y = np.asarray(y, dtype=float)
    u = t / T
    z = y / math.sqrt(T)
    p1 = 2.0 * z * u**-1.5 * np.exp(-z**2 / (2 * u)) * _phi_int(1.0 - u, z)
    out = p1 / math.sqrt(T)
    return np.where(y >= 0, out, 0.0)


def _meander_marginal_cdf(u: float, z) -> np.ndarray:
    """P(M_u <= z) for the duration-1 meander; closed form.

    Antiderivative of the marginal: erf(z / sqrt(2u(1-u)))
    - u^{-1/2} e^{-z^2/2u} erf(z / sqrt(2(1-u))); the u = 1 limit is the
    Rayleigh CDF.
    """
    z = np.maximum(np.asarray(z, dtype=float), 0.0)
    if u >= 1.0:
        return 1.0 - np.exp(-(z**2) / 2.0)
    a = erf(z / math.sqrt(2.0 * u * (1.0 - u)))
    b = u**-0.5 * np.exp(-(z**2) / (2 * u)) * erf(z / math.sqrt(2.0 * (1.0 - u)))
    return np.clip(a - b, 0.0, 1.0)


def _bvn_cdf(h, k, rho: float) -> np.ndarray:
    """P(Z1 <= h, Z2 <= k) under correlation rho, via Owen's T.

    Arguments at exactly 0 are nudged by 1e-14 (error < 1e-14 in the CDF),
    which keeps the delta term of the Owen decomposition unambiguous.
    """
    h = np.asarray(h, dtype=float)
    k = np.asarray(k, dtype=float)
    if not -1.0 < rho < 1.0:
        raise ValueError("|rho| must be < 1")
    s = math.sqrt(1.0 - rho * rho)
    hh = np.where(np.abs(h) < 1e-14, 1e-14, h)
    kk = np.where(np.abs(k) < 1e-14, 1e-14, k)
    ah = (kk - rho * hh) / (hh * s)
    ak = (hh - rho * kk) / (kk * s)
    val = 0.5 * (norm.cdf(hh) + norm.cdf(kk)) - owens_t(hh, ah) - owens_t(kk, ak)
    val = val - np.where(hh * kk < 0, 0.5, 0.0)
    return np.clip(val, 0.0, 1.0)


class MeanderKernel:
    """Transition and marginal densities of the duration-T meander."""

    def __init__(self, duration: float = 1.0):
        if duration <= 0:
            raise ValueError("duration must be positive")
        self.duration = float(duration)

    def marginal_density(self, t: float, y) -> np.ndarray:
        return meander_marginal_density(t, y, self.duration)

    def transition_density(self, s: float, x: float, t: float, y) -> np.ndarray:
        T = self.duration
        if not 0.0 < s < t <= T:
            raise ValueError("need 0 < s < t <= T")
        if x <= 0:
            raise ValueError("meander is positive at interior times")
        y = np.asarray(y, dtype=float)
        d = t - s
        gauss = (np.exp(-((x - y) ** 2) / (2 * d)) - np.exp(-((x + y) ** 2) / (2 * d)))
        gauss /= math.sqrt(2 * math.pi * d)
        out = gauss * _phi_int(T - t, y) / _phi_int(T - s, np.array([x]))[0]
        return np.where(y >= 0, out, 0.0)


def _step_cdf_unnormalized(y, x, s: float, t: float):
    """int_0^y of the duration-1 kernel numerator, batched over (y, x).

    The integral of [phi_d(u-x) - phi_d(u+x)] Phi_{1-t}(u) du splits into
    bivariate normal rectangles (through int phi(z) Phi(a+bz) dz) plus plain
    normal CDF terms from the constant -1/2 in Phi_v(u) = Phi(u/sqrt(v)) - 1/2.
    """
    v = 1.0 - t
    d = t - s
    rd = math.sqrt(d)
    if v <= 1e-14:
        # killed kernel: Phi_0(u) = 1/2 for u > 0
        n = 0.5 * (norm.cdf((y - x) / rd) - norm.cdf(-x / rd)
                   - norm.cdf((y + x) / rd) + norm.cdf(x / rd))
        return n
    c = x / math.sqrt(v + d)
    rho = -math.sqrt(d / (v + d))
    i1 = _bvn_cdf((y - x) / rd, c, rho) - _bvn_cdf(-x / rd, c, rho)
    i2 = _bvn_cdf((y + x) / rd, -c, rho) - _bvn_cdf(x / rd, -c, rho)
    g = 0.5 * (norm.cdf((y - x) / rd) - norm.cdf(-x / rd)
               - norm.cdf((y + x) / rd) + norm.cdf(x / rd))
    return i1 - i2 - g


def _invert_cdf(fun, u: np.ndarray, hi: np.ndarray, iters: int = 64) -> np.ndarray:
    """Vector bisection of fun (a CDF normalized to fun(hi)) at levels u."""
    total = fun(hi)
    if (total <= 0).any():
        raise RuntimeError("meander step CDF collapsed; inversion aborted")
    target = np.maximum(u, 1e-300) * total
    lo = np.zeros_like(hi)
    hi = hi.copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        go_up = fun(mid) < target
        lo = np.where(go_up, mid, lo)
        hi = np.where(go_up, hi, mid)
    return 0.5 * (lo + hi)


def _meander_batch(grid1: np.ndarray, rng: np.random.Generator,
                   size: int, start: tuple[float, np.ndarray] | None = None
                   ) -> np.ndarray:
    """Duration-1 meander values at grid1 (subset of (0,1]); (size, npts).

    start = (s0, x0 array) continues existesting trajectories from time s0.
    """
    npts = grid1.size
    out = np.empty((size, npts))
    if start is None:
        t0 = float(grid1[0])
        u = rng.random(size)
        x = _invert_cdf(lambda z: _meander_marginal_cdf(t0, z), u,
                        np.full(size, 16.0 * math.sqrt(t0) + 1.0))
        out[:, 0] = x
        s, k0 = t0, 1
    else:
        s, x = start
        x = np.broadcast_to(np.asarray(x, dtype=float), (size,)).copy()
        k0 = 0
    for k in range(k0, npts):
        t = float(grid1[k])
        u = rng.random(size)
        hi = x + 16.0 * math.sqrt(t - s)
        x = _invert_cdf(lambda z: _step_cdf_unnormalized(z, x, s, t), u, hi)
        out[:, k] = x
        s = t
    return out


def sample_meander_batch(grid, T: float, seed: int, size: int) -> np.ndarray:
    """Marginal-exact meander draws at the grid times; shape (size, len(grid))."""
    g = _check_grid(grid)
    if g[0] <= 0 or g[-1] > T * (1 + 1e-12):
        raise ValueError("grid must lie in (0, T]")
    rng = stream(seed, MODULE_STOCHPROC, 1)
    vals = _meander_batch(np.minimum(g / T, 1.0), rng, size)
    return math.sqrt(T) * vals


def sample_meander(grid, T: float, seed: int) -> ProcessPath:
    g = _check_grid(grid)
    vals = sample_meander_batch(g, T, seed, 1)[0]
    return ProcessPath(times=np.concatenate([[0.0], g]),
                       values=np.concatenate([[0.0], vals]),
                       kind="meander", duration=float(T))


def sample_meander_from(grid, T: float, s0: float, x0, seed: int,
                        size: int = 1) -> np.ndarray:
    """Meander of duration T conditioned on M_{s0} = x0, at times grid > s0."""
    g = _check_grid(grid)
    if not 0 < s0 < g[0] or g[-1] > T * (1 + 1e-12):
        raise ValueError("need s0 < grid <= T")
    x0 = np.asarray(x0, dtype=float)
    if (x0 <= 0).any():
        raise ValueError("conditioning value must be positive")
    rng = stream(seed, MODULE_STOCHPROC, 1, 1)
    vals = _meander_batch(np.minimum(g / T, 1.0), rng, size,
                          start=(s0 / T, x0 / math.sqrt(T)))
    return math.sqrt(T) * vals


# ---------------------------------------------------------------------------
# Excursion and the couplings


def _bridge3_moduli(sgrid: np.ndarray, start: np.ndarray, T: float,
                    rng: np.random.Generator) -> np.ndarray:
    """|3d Brownian bridge| from start (batch,3) to 0 over [0,T] at sgrid.

    sgrid must start at 0; returns (batch, len(sgrid)).
    """
    batch = start.shape[0]
    inner = sgrid[1:]
    dt = np.diff(np.concatenate([[0.0], inner]))
    inc = np.sqrt(dt)[None, :, None] * rng.standard_normal((batch, inner.size, 3))
    w = np.cumsum(inc, axis=1)
    if inner.size and inner[-1] == T:
        w_end = w[:, -1, :]
    else:
        extra = math.sqrt(T - (inner[-1] if inner.size else 0.0))
        w_end = (w[:, -1, :] if inner.size else 0.0) \
            + extra * rng.standard_normal((batch, 3))
    frac = (inner / T)[None, :, None]
    drift = start[:, None, :] * (1.0 - frac) - frac * w_end[:, None, :]
    vals = np.linalg.norm(w + drift, axis=2)
    return np.concatenate([np.linalg.norm(start, axis=1)[:, None], vals], axis=1)


def _excursion_batch(grid: np.ndarray, rng: np.random.Generator,
                     size: int) -> np.ndarray:
    """Excursion values at grid (subset of [0,1]); two Bessel bridges of
    duration 1/2 joined at V with density 16/sqrt(2 pi) v^2 e^{-2 v^2}."""
    V = maxwell(scale=0.5).ppf(rng.random(size))
    out = np.empty((size, grid.size))
    left = grid[grid <= 0.5]
    right = grid[grid > 0.5]
    # left half time-reversed: e_t = |bridge from (V,0,0) to 0 at 0.5 - t|
    sg_l = np.concatenate([[0.0], np.sort(0.5 - left)])
    start = np.zeros((size, 3))
    start[:, 0] = V
    mod_l = _bridge3_moduli(np.unique(sg_l), start, 0.5, rng)
    ul = np.unique(sg_l)
    pos_l = np.searchsorted(ul, 0.5 - left)
    out[:, :left.size] = mod_l[:, pos_l]
    if right.size:
        sg_r = np.concatenate([[0.0], np.sort(right - 0.5)])
        start2 = np.zeros((size, 3))
        start2[:, 0] = V
        ur = np.unique(sg_r)
        mod_r = _bridge3_moduli(ur, start2, 0.5, rng)
        pos_r = np.searchsorted(ur, right - 0.5)
        out[:, left.size:] = mod_r[:, pos_r]
    return out


def sample_excursion_batch(grid, seed: int, size: int) -> np.ndarray:
    g = _check_grid(grid)
    if g[0] < 0 or g[-1] > 1.0:
        raise ValueError("grid must lie in [0, 1]")
    rng = stream(seed, MODULE_STOCHPROC, 5)
    return _excursion_batch(g, rng, size)


def sample_excursion(grid, seed: int) -> ProcessPath:
    g = _check_grid(grid)
    vals = sample_excursion_batch(g, seed, 1)[0]
    if g[0] != 0.0:
        g = np.concatenate([[0.0], g])
        vals = np.concatenate([[0.0], vals])
    return ProcessPath(times=g, values=vals, kind="excursion", duration=1.0)


def meander_from_excursion(excursion: ProcessPath, u: float) -> ProcessPath:
    """Paste the excursion into a meander: the path equals the excursion up
    to time u and continues as e_u + e_{1-(t-u)} afterwards (evaluated by
    interpolation off-grid)."""
    if excursion.kind != "excursion":
        raise ValueError("input must be an excursion path")
    if not 0.0 <= u <= 1.0:
        raise ValueError("u must lie in [0, 1]")
    t = excursion.times
    e_u = excursion.value_at(u)
    tail = e_u + excursion.value_at(1.0 - (t - u))
    vals = np.where(t <= u, excursion.values, tail)
    return ProcessPath(times=t.copy(), values=vals, kind="meander",
                       duration=1.0)


class BesselExcursionCoupling(NamedTuple):
    excursion: ProcessPath
    bessel: ProcessPath
    eps: float
    tau_refined: float
    resamples: int


def couple_bessel_excursion(grid, seed: int,
                            max_step: float = 1.0001e-4) -> BesselExcursionCoupling:
    """Excursion and Bessel-3 built to agree on [0, eps].

    Two 3d bridges (from W_{1/2} and from a uniform point at radius
    V ~ 16/sqrt(2 pi) v^2 e^{-2v^2}) run to 0 over [0, 1/2]; their moduli
    cross at some tau < 1/2 a.s. Splicing the second onto the first past the
    first grid crossing and reading both moduli backwards gives a Bessel-3
    and an excursion first half that agree on [0, eps], eps = 1/2 - (splice
    time). tau_refined is the linear-interpolated crossing inside the step.
    """
    g = _check_grid(grid)
    if g[0] < 0 or g[-1] > 1.0:
        raise ValueError("grid must lie in [0, 1]")
    if np.diff(g).max() > max_step:
        raise ValueError(f"grid resolution must be <= {max_step}")
    if g[0] > max_step or g[g <= 0.5].size == 0 or g[g <= 0.5][-1] < 0.5 - max_step:
        raise ValueError("grid must cover [0, 1/2] for crossing detection")
    left = g[g <= 0.5]
    sg = np.unique(np.concatenate([[0.0, 0.5], 0.5 - left]))
    resamples = 0
    while True:
        rng = stream(seed, MODULE_STOCHPROC, 6, resamples)
        x = math.sqrt(0.5) * rng.standard_normal((1, 3))
        V = maxwell(scale=0.5).ppf(rng.random(1))
        ydir = rng.standard_normal((1, 3))
        y = V[:, None] * ydir / np.linalg.norm(ydir, axis=1, keepdims=True)
        rng_x = stream(seed, MODULE_STOCHPROC, 6, resamples, 1)
        rng_y = stream(seed, MODULE_STOCHPROC, 6, resamples, 2)
        mx = _bridge3_moduli(sg, x, 0.5, rng_x)[0]
        my = _bridge3_moduli(sg, y, 0.5, rng_y)[0]
        diff = mx - my
        s0 = np.sign(diff[0])
        cross = np.flatnonzero(np.sign(diff[1:-1]) != s0) + 1
        if cross.size == 0:
            resamples += 1
            if resamples > 50:
                raise RuntimeError("no modulus crossing after 50 resamples")
            continue
        k = int(cross[0])
        frac = diff[k - 1] / (diff[k - 1] - diff[k])
        tau_ref = float(sg[k - 1] + frac * (sg[k] - sg[k - 1]))
        tau_grid = float(sg[k])
        spliced = np.where(sg >= tau_grid, mx, my)
        # reversed time: bessel(t) = |X_{1/2 - t}|, excursion first half from
        # the spliced bridge; they agree for 1/2 - t >= tau_grid
        eps = 0.5 - tau_grid
        idx = np.searchsorted(sg, 0.5 - left)
        exc_left = spliced[idx]
        bes_vals = mx[idx]
        right = g[g > 0.5]
        if right.size:
            rng_z = stream(seed, MODULE_STOCHPROC, 6, resamples, 3)
            zdir = rng_z.standard_normal((1, 3))
            z = V[:, None] * zdir / np.linalg.norm(zdir, axis=1, keepdims=True)
            sg_r = np.unique(np.concatenate([[0.0], right - 0.5]))
            mod_r = _bridge3_moduli(sg_r, z, 0.5, rng_z)[0]
            exc_right = mod_r[np.searchsorted(sg_r, right - 0.5)]
            exc_vals = np.concatenate([exc_left, exc_right])
        else:
            exc_vals = exc_left
        et = g.copy()
        if et[0] != 0.0:
            et = np.concatenate([[0.0], et])
            exc_vals = np.concatenate([[0.0], exc_vals])
        exc = ProcessPath(times=et, values=exc_vals, kind="excursion",
                          duration=1.0)
        bt = left.copy()
        bv = bes_vals
        if bt.size == 0 or bt[0] != 0.0:
            bt = np.concatenate([[0.0], bt])
            bv = np.concatenate([[0.0], bv])
        bes = ProcessPath(times=bt, values=bv, kind="bessel3", duration=0.5)
        return BesselExcursionCoupling(excursion=exc, bessel=bes,
                                       eps=float(eps), tau_refined=tau_ref,
                                       resamples=resamples)


# ---------------------------------------------------------------------------
# Brownian motion decomposed at its maximum


class MaxDecomposition(NamedTuple):
    sigma: float
    left: ProcessPath
    right: ProcessPath


class BoundaryMaxError(RuntimeError):
    """Grid argmax fell on the boundary of [0,1]; caller should resample."""


def decompose_bm_at_max(path: ProcessPath, seed: int = 0) -> MaxDecomposition:
    """Split a Brownian path on [0,1] at its maximum into two meanders.

    sigma is the grid argmax refined one bridge level (midpoints of the two
    neighboring steps); the outputs are W_sigma - W_{sigma -+ s} as
    duration-sigma and duration-(1-sigma) meander paths on the grid times.
    Ties break toward the smallest time.
    """
    if path.kind != "bm":
        raise ValueError("decomposition applies to one-sided Brownian paths")
    if abs(path.times[-1] - 1.0) > 1e-12:
        raise ValueError("path must live on [0, 1]")
    i = int(np.argmax(path.values))
    if i == 0 or i == len(path.values) - 1:
        raise BoundaryMaxError(f"grid argmax at boundary time {path.times[i]}")
    rng = stream(seed, MODULE_STOCHPROC, 7)
    cand_t = [path.times[i]]
    cand_v = [path.values[i]]
    for a, b in ((i - 1, i), (i, i + 1)):
        s, u = path.times[a], path.times[b]
        va, vb = path.values[a], path.values[b]
        tm = 0.5 * (s + u)
        mean = 0.5 * (va + vb)
        sd = 0.5 * math.sqrt(u - s)
        cand_t.append(tm)
        cand_v.append(mean + sd * rng.standard_normal())
    j = int(np.argmax(cand_v))
    sigma, top = float(cand_t[j]), float(cand_v[j])
    lmask = path.times < sigma
    lt = path.times[lmask]
    lv = path.values[lmask]
    left = ProcessPath(
        times=np.concatenate([[0.0], sigma - lt[::-1]]),
        values=np.concatenate([[0.0], top - lv[::-1]]),
        kind="meander", duration=sigma)
    rmask = path.times > sigma
    rt = path.times[rmask]
    rv = path.values[rmask]
    right = ProcessPath(
        times=np.concatenate([[0.0], rt - sigma]),
        values=np.concatenate([[0.0], top - rv]),
        kind="meander", duration=1.0 - sigma)
    return MaxDecomposition(sigma=sigma, left=left, right=right)


# ---------------------------------------------------------------------------
# Inequality spot checks for the meander


@dataclass
class BoundCheck:
    name: str
    params: dict
    lhs: float
    rhs: float
    mc_se: float
    holds: bool


def meander_bound_checks(samples: int = 10**5, seed: int = 0,
                         grid_step: float = 1e-3) -> list[BoundCheck]:
    """Monte Carlo checks of the reflection bound, the small-value bound, and
    the exponential-moment bound. Each row reports LHS <= RHS + 3 se.

    Paths come from the excursion pasting (cheap and exact in law); sups and
    infs over the sample grid underestimate their continuum versions, so a
    pass is conservative.
    """
    if samples < 10**4:
        raise ValueError("MC budget too small for stable bounds")
    rng = stream(seed, MODULE_STOCHPROC, 8)
    grid = np.arange(grid_step, 1.0 + grid_step / 2, grid_step)
    npts = grid.size
    sup_half = np.empty(samples)
    inf_win = np.empty(samples)
    chunk = max(1, int(2e7 // (6 * npts)))
    done = 0
    swin = (grid >= 0.2) & (grid <= 0.4)
    t_half = int(round(0.5 / grid_step)) - 1
    while done < samples:
        b = min(chunk, samples - done)
        e = _excursion_batch(grid, rng, b)
        u = rng.random(b)
        lo_u = np.clip(np.searchsorted(grid, u) - 1, 0, npts - 2)
        w_u = np.clip((u - grid[lo_u]) / (grid[lo_u + 1] - grid[lo_u]), 0, 1)
        rr = np.arange(b)
        eu = e[rr, lo_u] * (1 - w_u) + e[rr, lo_u + 1] * w_u
        m = np.where(grid[None, :] <= u[:, None], e, np.nan)
        tail_t = 1.0 - (grid[None, :] - u[:, None])
        lo = np.clip(np.searchsorted(grid, tail_t) - 1, 0, npts - 2)
        w = np.clip((tail_t - grid[lo]) / (grid[lo + 1] - grid[lo]), 0, 1)
        r = np.arange(b)[:, None]
        tail = eu[:, None] + e[r, lo] * (1 - w) + e[r, lo + 1] * w
        m = np.where(np.isnan(m), tail, m)
        sup_half[done:done + b] = m[:, :t_half + 1].max(axis=1)
        inf_win[done:done + b] = m[:, swin].min(axis=1)
        done += b
    out = []

    # reflection principle at (t, b) = (0.5, 1.0)
    lhs = float((sup_half >= 1.0).mean())
    rhs = float(2.0 * (1.0 - _meander_marginal_cdf(0.5, np.array([1.0]))[0]))
    se = math.sqrt(lhs * (1 - lhs) / samples)
    out.append(BoundCheck("reflection_sup", {"t": 0.5, "b": 1.0}, lhs, rhs,
                          se, lhs <= rhs + 3 * se))

    # interval small-value bound at (s, t, a, lambda) = (0.2, 0.4, 0.15, 2)
    s_, t_, a_, lam = 0.2, 0.4, 0.15, 2.0
    lhs = float((inf_win <= a_).mean())
    gap = t_ - s_
    rhs = float(_meander_marginal_cdf(s_, np.array([lam * a_]))[0]
                + _meander_marginal_cdf(t_, np.array([lam * a_]))[0]
                + (4 * a_ * math.sqrt(2 * t_) / gap)
                * math.exp(-2 * a_**2 * (lam - 1) ** 2 / gap)
                / (1 - math.exp(-2 * a_**2 * lam**2 / gap)))
    se = math.sqrt(max(lhs * (1 - lhs), 1e-12) / samples)
    out.append(BoundCheck("interval_inf", {"s": s_, "t": t_, "a": a_,
                                           "lambda": lam}, lhs, rhs, se,
                          lhs <= rhs + 3 * se))

    # closed-form small-value bound at (t, a) = (0.4, 0.1): no MC needed
    t_, a_ = 0.4, 0.1
    lhs = float(_meander_marginal_cdf(t_, np.array([a_]))[0])
    rhs = (4 * a_ / math.sqrt(math.pi * t_)) * min(1.0, a_**2 / (2 * t_))
    out.append(BoundCheck("small_value", {"t": t_, "a": a_}, lhs, rhs, 0.0,
                          lhs <= rhs))

    # exponential moment at (a, r) = (0.2, 0.5): exact marginal sampler
    a_, r_ = 0.2, 0.5
    uu = rng.random(samples)
    mr = _invert_cdf(lambda z: _meander_marginal_cdf(r_, z), uu,
                     np.full(samples, 16.0))
    ex = np.exp(a_ * mr**2)
    lhs = float(ex.mean())
    rhs = (1.0 - 2.0 * r_ * a_) ** -1.5
    se = float(ex.std(ddof=1) / math.sqrt(samples))
    out.append(BoundCheck("exp_moment", {"a": a_, "r": r_}, lhs, rhs, se,
                          lhs <= rhs + 3 * se))
    return out
