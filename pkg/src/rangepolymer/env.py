"""Disorder fields: generation, prefix sums, Brownian coupling, embedding.

An Environment is an i.i.d. field omega indexed by integer sites on a finite
window. Supported laws: gaussian (standard normal), coupled_gaussian (built
from a Brownian pair so the prefix-sum identity holds exactly), two_point
(+-1), uniform (mean 0, variance 1), and stable(alpha, p, q) with exact
power tails P(omega > t) = p t^{-alpha} for t >= 1.

The Skorokhod embedding draws a stopping time tau and value xi per sample so
that xi follows the target law and E[tau] = E[xi^2], using the randomized
exit-interval construction with exact exit-time sampling (no path
discretization anywhere).
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .rng import MODULE_ENV, stream

# ---------------------------------------------------------------------------
# Law descriptors


@dataclass(frozen=True)
class Gaussian:
    sigma: float = 1.0

    def tag(self) -> str:
        return f"gaussian({self.sigma!r})"

    def second_moment(self) -> float:
        return self.sigma**2


@dataclass(frozen=True)
class TwoPoint:
    """Centered two-point law on {a, b} with a < 0 < b."""

    a: float = -1.0
    b: float = 1.0

    def __post_init__(self):
        if not (self.a < 0.0 < self.b):
            raise ValueError("two-point support must straddle 0")

    def prob_high(self) -> float:
        return -self.a / (self.b - self.a)

    def tag(self) -> str:
        return f"two_point({self.a!r},{self.b!r})"

    def second_moment(self) -> float:
        p = self.prob_high()
        return p * self.b**2 + (1 - p) * self.a**2


@dataclass(frozen=True)
class Uniform:
    """Uniform on [-half, half]; the default has unit variance."""

    half: float = math.sqrt(3.0)

    def __post_init__(self):
        if self.half <= 0:
            raise ValueError("half-width must be positive")

    def tag(self) -> str:
        return f"uniform({self.half!r})"

    def second_moment(self) -> float:
        return self.half**2 / 3.0


@dataclass(frozen=True)
class Delta0:
    def tag(self) -> str:
        return "delta0"

    def second_moment(self) -> float:
        return 0.0


@dataclass(frozen=True)
class Stable:
    """Mean-zero law with exact Pareto tails and an optional uniform bulk.

    P(omega > t) = p t^{-alpha} and P(omega < -t) = q t^{-alpha} hold exactly
    for every t >= 1. The remaining weight 1 - p - q sits uniformly on an
    interval inside [-1, 1] positioned so the total mean vanishes.
    """

    alpha: float
    p: float = 0.5
    q: float = 0.5

    def __post_init__(self):
        if not (1.0 < self.alpha < 2.0):
            raise ValueError("alpha must lie in (1, 2)")
        if self.p < 0 or self.q < 0 or self.p + self.q > 1.0 + 1e-12:
            raise ValueError("need p, q >= 0 and p + q <= 1")
        w = 1.0 - self.p - self.q
        if w <= 1e-12:
            if abs(self.p - self.q) > 1e-12:
                raise ValueError("p + q = 1 requires p = q for a centered law")
        else:
            if abs(self.bulk_center()) >= 1.0:
                raise ValueError("tail imbalance too large to center with the bulk")

    def bulk_weight(self) -> float:
        return max(0.0, 1.0 - self.p - self.q)

    def bulk_center(self) -> float:
        w = 1.0 - self.p - self.q
        mean_tails = (self.p - self.q) * self.alpha / (self.alpha - 1.0)
        return -mean_tails / w if w > 1e-12 else 0.0

    def bulk_halfwidth(self) -> float:
        return 1.0 - abs(self.bulk_center())

    def tag(self) -> str:
        return f"stable({self.alpha!r},{self.p!r},{self.q!r})"

    def cdf(self, t: np.ndarray) -> np.ndarray:
        """Closed-form CDF (used by the tests as the independent oracle)."""
        t = np.asarray(t, dtype=float)
        out = np.empty_like(t)
        w = self.bulk_weight()
        m, d = self.bulk_center(), self.bulk_halfwidth()
        neg = t <= -1.0
        out[neg] = self.q * np.abs(t[neg]) ** -self.alpha
        pos = t >= 1.0
        out[pos] = 1.0 - self.p * t[pos] ** -self.alpha
        mid = ~(neg | pos)
        if w > 0 and d > 0:
            frac = np.clip((t[mid] - (m - d)) / (2 * d), 0.0, 1.0)
        else:
            frac = 0.0
        out[mid] = self.q + w * frac
        return out


LAWS = {"gaussian": Gaussian, "two_point": TwoPoint, "uniform": Uniform,
        "stable": Stable, "delta0": Delta0}


def _draw(law, rng: np.random.Generator, size: int) -> np.ndarray:
    if isinstance(law, Gaussian):
        return law.sigma * rng.standard_normal(size)
    if isinstance(law, TwoPoint):
        u = rng.random(size)
        return np.where(u < law.prob_high(), law.b, law.a)
    if isinstance(law, Uniform):
        return rng.uniform(-law.half, law.half, size)
    if isinstance(law, Delta0):
        return np.zeros(size)
    if isinstance(law, Stable):
        u = rng.random(size)
        comp = rng.random(size)
        out = np.empty(size)
        hi = comp < law.p
        lo = comp >= 1.0 - law.q
        mid = ~(hi | lo)
        out[hi] = u[hi] ** (-1.0 / law.alpha)
        out[lo] = -(u[lo] ** (-1.0 / law.alpha))
        m, d = law.bulk_center(), law.bulk_halfwidth()
        out[mid] = m + d * (2.0 * u[mid] - 1.0)
        return out
    raise TypeError(f"unknown law {law!r}")


# ---------------------------------------------------------------------------
# Environment


@dataclass
class Environment:
    """I.i.d. field on the integer window z_lo..z_hi (inclusive)."""

    values: np.ndarray
    z_lo: int
    z_hi: int
    law_tag: str
    seed: int

    def __post_init__(self):
        if len(self.values) != self.z_hi - self.z_lo + 1:
            raise ValueError("window does not match value count")

    def omega(self, z) -> np.ndarray:
        z = np.asarray(z)
        if (z < self.z_lo).any() or (z > self.z_hi).any():
            raise IndexError("site outside environment window")
        return self.values[z - self.z_lo]

    def covers(self, n: int, h: float = 1.0) -> bool:
        reach = 2.0 * (math.pi**2 / h) ** (1 / 3) * n ** (1 / 3)
        return self.z_lo <= -reach and self.z_hi >= reach - 1

    # -- serialization ----------------------------------------------------

    MAGIC = b"RPLENV1"

    def to_binary(self) -> bytes:
        buf = io.BytesIO()
        tag = self.law_tag.encode()
        buf.write(self.MAGIC)
        buf.write(struct.pack("<H", len(tag)))
        buf.write(tag)
        buf.write(struct.pack("<qqq", self.z_lo, self.z_hi, self.seed))
        buf.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        return buf.getvalue()

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_binary())

    @classmethod
    def from_binary(cls, blob: bytes) -> "Environment":
        if blob[:7] != cls.MAGIC:
            raise ValueError("bad magic; not an environment file")
        off = 7
        (taglen,) = struct.unpack_from("<H", blob, off)
        off += 2
        tag = blob[off:off + taglen].decode()
        off += taglen
        z_lo, z_hi, seed = struct.unpack_from("<qqq", blob, off)
        off += 24
        values = np.frombuffer(blob, dtype="<f8", offset=off).copy()
        return cls(values=values, z_lo=z_lo, z_hi=z_hi, law_tag=tag, seed=seed)

    @classmethod
    def load(cls, path) -> "Environment":
        with open(path, "rb") as fh:
            return cls.from_binary(fh.read())

    def to_csv(self, path) -> None:
        z = np.arange(self.z_lo, self.z_hi + 1)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("z,omega\n")
            for zi, v in zip(z, self.values):
                fh.write(f"{zi},{float(v)!r}\n")


def generate_environment(law, window: tuple[int, int], seed: int,
                         replica: int = 0) -> Environment:
    """Draw an i.i.d. environment of the given law on window (z_lo, z_hi)."""
    z_lo, z_hi = window
    if z_hi < z_lo:
        raise ValueError("empty window")
    rng = stream(seed, MODULE_ENV, 0, replica)
    vals = _draw(law, rng, z_hi - z_lo + 1)
    return Environment(values=vals, z_lo=z_lo, z_hi=z_hi, law_tag=law.tag(),
                       seed=seed)


# ---------------------------------------------------------------------------
# Prefix sums


@dataclass
class PrefixSums:
    """sigma_plus[j] = omega_0 + ... + omega_j;
    sigma_minus[j] = omega_{-1} + ... + omega_{-j} (so sigma_minus[0] = 0)."""

    sigma_plus: np.ndarray
    sigma_minus: np.ndarray

    def weight(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Field sum over the sites of the interval [-x, y]."""
        return self.sigma_minus[np.asarray(x)] + self.sigma_plus[np.asarray(y)]

    def envelope(self) -> tuple[np.ndarray, np.ndarray]:
        """Running maxima (prefix-max of each side), for tail certification."""
        return (np.maximum.accumulate(self.sigma_minus),
                np.maximum.accumulate(self.sigma_plus))


def prefix_sums(env: Environment) -> PrefixSums:
    if env.z_lo > 0 or env.z_hi < 0:
        raise IndexError("window must contain site 0")
    plus = np.cumsum(env.values[-env.z_lo:])
    minus_vals = env.values[:-env.z_lo][::-1]  # omega_{-1}, omega_{-2}, ...
    minus = np.concatenate([[0.0], np.cumsum(minus_vals)])
    return PrefixSums(sigma_plus=plus, sigma_minus=minus)


def env_from_brownian(n: int, bm_pair) -> Environment:
    """Build the Gaussian field whose prefix sums ride on a Brownian pair.

    bm_pair = (minus_path, plus_path), each with .times and .values on the
    grid k * n^{-1/3}, k = 1, 2, ...; site sums then satisfy, exactly in
    floating point,

        sigma_minus[j] = n^{1/6} * minus.values[j - 1]   (time j n^{-1/3})
        sigma_plus[y]  = n^{1/6} * plus.values[y]        (time (y+1) n^{-1/3})

    The plus side is shifted by one grid step because the sum starting at
    site 0 has y + 1 terms; each omega is an exact standard Gaussian.
    """
    minus_path, plus_path = bm_pair
    g = n ** (-1.0 / 3.0)
    for path in (minus_path, plus_path):
        t = np.asarray(path.times)
        if t.size < 2:
            raise ValueError("paths too short for an environment")
        k = np.arange(1, t.size + 1)
        if np.max(np.abs(t - k * g)) > 1e-9 * g:
            raise ValueError("path grid step must be exactly n^(-1/3)")
    scale = n ** (1.0 / 6.0)
    vp = np.asarray(plus_path.values, dtype=float)
    vm = np.asarray(minus_path.values, dtype=float)
    omega_plus = scale * np.diff(np.concatenate([[0.0], vp]))
    omega_minus = scale * np.diff(np.concatenate([[0.0], vm]))
    # omega_minus[z-1] is the field at site -z
    values = np.concatenate([omega_minus[::-1], omega_plus])
    z_lo = -len(omega_minus)
    z_hi = len(omega_plus) - 1
    return Environment(values=values, z_lo=z_lo, z_hi=z_hi,
                       law_tag="coupled_gaussian", seed=-1)


# ---------------------------------------------------------------------------
# Skorokhod embedding


def _interval_exit_survival(t: np.ndarray) -> np.ndarray:
    """P(exit time of (-1,1) from 0 exceeds t), exact alternating series."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    big = t >= 0.3
    if big.any():
        tb = t[big]
        acc = np.zeros_like(tb)
        for k in range(0, 12):
            acc += ((-1) ** k / (2 * k + 1)) * np.exp(
                -((2 * k + 1) ** 2) * math.pi**2 * tb / 8.0
            )
        out[big] = (4.0 / math.pi) * acc
    if (~big).any():
        ts = t[~big]
        # reflection series: P(sup |B| < 1) as signed Gaussian layers
        acc = np.zeros_like(ts)
        with np.errstate(divide="ignore"):
            rt = np.sqrt(np.maximum(ts, 1e-300))
        for k in range(-8, 9):
            acc += (-1) ** k * (
                norm.cdf((2 * k + 1) / rt) - norm.cdf((2 * k - 1) / rt)
            )
        out[~big] = acc
    return np.clip(out, 0.0, 1.0)


def _sample_unit_exit_time(rng: np.random.Generator, size: int) -> np.ndarray:
    """Exact draws of the exit time of (-1,1) by inverting the survival."""
    u = rng.random(size)
    lo = np.full(size, 1e-6)
    hi = np.full(size, 80.0)
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        s = _interval_exit_survival(mid)
        take_hi = s > u  # survival decreasing: S(mid) > u means t* > mid
        lo = np.where(take_hi, mid, lo)
        hi = np.where(take_hi, hi, mid)
    return 0.5 * (lo + hi)


def _sample_exit_pair(law, rng: np.random.Generator, size: int):
    """Draw (a, b), a <= 0 <= b, from the (b - a)-biased product law."""
    if isinstance(law, Delta0):
        return np.zeros(size), np.zeros(size)
    if isinstance(law, TwoPoint):
        return np.full(size, law.a), np.full(size, law.b)
    if isinstance(law, Uniform):
        a = np.empty(size)
        b = np.empty(size)
        need = np.arange(size)
        while need.size:
            ca = -law.half * rng.random(need.size)
            cb = law.half * rng.random(need.size)
            acc = rng.random(need.size) < (cb - ca) / (2.0 * law.half)
            a[need[acc]] = ca[acc]
            b[need[acc]] = cb[acc]
            need = need[~acc]
        return a, b
    if isinstance(law, Gaussian):
        # (b - a) phi(a) phi(b) splits into two equal-weight size-biased halves
        pick = rng.random(size) < 0.5
        ray = law.sigma * np.sqrt(2.0 * rng.standard_exponential(size))
        half = law.sigma * np.abs(rng.standard_normal(size))
        b = np.where(pick, ray, half)
        a = -np.where(pick, half, ray)
        return a, b
    raise TypeError(f"law {law!r} not supported for embedding")


@dataclass
class EmbeddingRecord:
    stop_times: np.ndarray
    embedded_values: np.ndarray
    target_law: str
    target_second_moment: float


def skorokhod_embed(target_law, count: int, seed: int) -> EmbeddingRecord:
    """Embed `count` i.i.d. draws of the target law into Brownian exit times.

    For each sample, an interval (a, b) is drawn from the (b-a)-biased pair
    law; the Brownian exit of (a, b) is realized as a chain of exact
    symmetric-interval exits, so both the exit value and the total exit time
    are exact in law. E[tau] = E[xi^2] is then an identity, not an
    approximation.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    rng = stream(seed, MODULE_ENV, 1, 0)
    a, b = _sample_exit_pair(target_law, rng, count)
    x = np.zeros(count)
    tau = np.zeros(count)
    active = (b - a) > 0.0
    guard = 0
    while active.any():
        guard += 1
        if guard > 400:
            raise RuntimeError("symmetric-exit chain failed to terminate")
        idx = np.flatnonzero(active)
        d = np.minimum(x[idx] - a[idx], b[idx] - x[idx])
        tau[idx] += d**2 * _sample_unit_exit_time(rng, idx.size)
        sgn = np.where(rng.random(idx.size) < 0.5, 1.0, -1.0)
        nx = x[idx] + sgn * d
        # snap float dust onto the boundary that was targeted
        nx = np.where(nx <= a[idx], a[idx], nx)
        nx = np.where(nx >= b[idx], b[idx], nx)
        x[idx] = nx
        active[idx[(nx == a[idx]) | (nx == b[idx])]] = False
    return EmbeddingRecord(
        stop_times=tau,
        embedded_values=x,
        target_law=target_law.tag(),
        target_second_moment=target_law.second_moment(),
    )
