"""Exact laws of the range endpoints of the simple random walk.

The walk S has steps +-1 with probability 1/2. The central objects are

- stay_probability(n, x, y): probability that the walk stays inside the
  integer interval [-x, y] for n steps,
- exact_range_law(n, x, y): probability that the *range* after n steps is
  exactly {-x, ..., y} (both endpoints attained),
- halfline_range_law(n, T): same for the walk constrained to stay >= 0 with
  maximum exactly T.

Everything is computed spectrally: the walk killed outside an interval of K
sites has eigenvalues cos(j pi/(K+1)) with sine eigenvectors, so the stay
probability is a short exponential sum once modes below a relative floor are
dropped. For range sizes T ~ n^{1/3} the four-term inclusion-exclusion loses
roughly 2 log10(T^3/(n pi^2)) digits to cancellation; all shell arithmetic is
done in extended precision with per-shell scaling to keep 15+ digits.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

LD = np.longdouble
_PI = LD("3.141592653589793238462643383279502884")
# Modes with |lambda_j / lambda_1|^n below this floor cannot move the sum at
# extended precision; keeping them only adds roundoff.
_MODE_FLOOR_LOG = LD(-50.7)  # log(1e-22)


def feasible_range(n: int, x: int, y: int) -> bool:
    """Can an n-step walk have range exactly {-x, ..., y}?

    The shortest walk visiting both endpoints has x + y + min(x, y) steps
    (sweep the near endpoint first); any surplus is spent pacing inside the
    interval, which is possible whenever the interval has at least two sites.
    """
    if x < 0 or y < 0:
        return False
    if x == 0 and y == 0:
        return n == 0
    return n >= x + y + min(x, y)


def feasible_halfline(n: int, T: int) -> bool:
    # Reaching T is the only constraint; pacing absorbs surplus steps.
    return T >= 1 and n >= T


def _stay_rows(n: int, num_sites: int, scale_log: LD) -> np.ndarray:
    """Stay probabilities for every start site, scaled by exp(-scale_log).

    Returns the length-num_sites array r with
    r[i] = P(walk from site i stays n steps in an interval of num_sites
    sites) / exp(scale_log). Extended precision throughout.
    """
    K = num_sites
    if K <= 0:
        return np.zeros(0, dtype=LD)
    if n == 0:
        return np.exp(LD(0) - scale_log) * np.ones(K, dtype=LD)
    j = np.arange(1, K + 1)
    theta = j * (_PI / LD(K + 1))
    lam = np.cos(theta)
    odd = j % 2 == 1
    with np.errstate(divide="ignore"):
        loglam = np.where(np.abs(lam) > 0, np.log(np.abs(lam) + (np.abs(lam) == 0)), LD(-np.inf))
    log_lead = np.log(np.cos(_PI / LD(K + 1))) if K >= 2 else loglam[0]
    keep = odd & (n * (loglam - log_lead) >= _MODE_FLOOR_LOG)
    if not keep.any():
        return np.zeros(K, dtype=LD)
    jk = j[keep]
    lamk = lam[keep]
    with np.errstate(under="ignore"):
        powers = np.exp(n * loglam[keep] - scale_log)
    if n % 2 == 1:
        powers = powers * np.sign(lamk)
    half = jk * (_PI / LD(2 * (K + 1)))
    colsum = np.cos(half) / np.sin(half)  # sum of the sine eigenvector entries
    i = np.arange(K)
    sines = np.sin(np.outer(jk, (i + 1)) * (_PI / LD(K + 1)))
    coef = (LD(2) / LD(K + 1)) * powers * colsum
    return coef @ sines


def _lead_log(n: int, num_sites: int) -> LD:
    """log of the dominant eigenvalue power for an interval of num_sites."""
    if num_sites <= 0:
        return LD(-np.inf)
    if num_sites == 1:
        return LD(0) if n == 0 else LD(-np.inf)
    return n * np.log(np.cos(_PI / LD(num_sites + 1)))


def stay_probability(n: int, x: int, y: int) -> float:
    """log P(-x <= min S, max S <= y over the first n steps)."""
    if n < 0 or x < 0 or y < 0:
        raise ValueError("n, x, y must be nonnegative")
    K = x + y + 1
    s = _lead_log(n, K)
    if not np.isfinite(s):
        return -math.inf
    rows = _stay_rows(n, K, s)
    q = rows[x]
    if q <= 0:
        return -math.inf
    return float(s + np.log(q))


def stay_probability_dp(n: int, x: int, y: int) -> float:
    """log of the same stay probability by direct vector iteration.

    O(n K) extended-precision dynamic program; cross-check for the spectral
    route and the workhorse for mid-size n.
    """
    if n < 0 or x < 0 or y < 0:
        raise ValueError("n, x, y must be nonnegative")
    K = x + y + 1
    p = np.zeros(K, dtype=LD)
    p[x] = LD(1)
    # Renormalize on the fly so the vector never underflows.
    log_scale = LD(0)
    for _ in range(n):
        q = np.zeros(K, dtype=LD)
        q[1:] += LD(0.5) * p[:-1]
        q[:-1] += LD(0.5) * p[1:]
        p = q
        m = p.max()
        if m == 0:
            return -math.inf
        if m < LD(1e-200):
            p /= m
            log_scale += np.log(m)
    total = p.sum()
    if total <= 0:
        return -math.inf
    return float(log_scale + np.log(total))


def range_law_flag_dp(n: int, x: int, y: int) -> float:
    """log P(range exactly {-x,..,y}) by a DP over (site, endpoints seen).

    No inclusion-exclusion, hence no cancellation: the endpoint-visit flags
    are carried in the state. O(n K) with a 4x constant; the refuge for cells
    where the subtractive routes lose too many digits, and an independent
    oracle elsewhere.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not feasible_range(n, x, y):
        return -math.inf
    K = x + y + 1
    # p[a, b, i]: at site i (0 = -x), a = visited -x, b = visited y
    p = np.zeros((2, 2, K), dtype=LD)
    a0 = 1 if x == 0 else 0
    b0 = 1 if y == 0 else 0
    p[a0, b0, x] = LD(1)
    log_scale = LD(0)
    for _ in range(n):
        q = np.zeros_like(p)
        q[:, :, 1:] += LD(0.5) * p[:, :, :-1]
        q[:, :, :-1] += LD(0.5) * p[:, :, 1:]
        # landing on an endpoint raises its flag
        low = q[0, :, 0].copy()
        q[0, :, 0] = 0
        q[1, :, 0] += low
        high = q[:, 0, K - 1].copy()
        q[:, 0, K - 1] = 0
        q[:, 1, K - 1] += high
        p = q
        m = p.max()
        if m == 0:
            return -math.inf
        if m < LD(1e-200):
            p /= m
            log_scale += np.log(m)
    total = p[1, 1, :].sum()
    if total <= 0:
        return -math.inf
    return float(log_scale + np.log(total))


# Relative size of the inclusion-exclusion difference under which the shell
# escalates to the flag DP (subtractive digits no longer certifiable).
_ESCALATE_FLOOR = 1e-8


def _shell_ie(n: int, T: int):
    """Inclusion-exclusion core shared by the shell evaluators.

    Returns (s, d, mag, feasible) with d the second difference of stay
    probabilities scaled by exp(-s) and mag the sum of term magnitudes, or
    None when the whole shell is unreachable.
    """
    s = _lead_log(n, T + 1)
    if not np.isfinite(s):
        return None
    a = _stay_rows(n, T + 1, s)
    b = _stay_rows(n, T, s)
    c = _stay_rows(n, T - 1, s)
    x = np.arange(T + 1)
    d = a.copy()
    mag = np.abs(a)
    if T >= 1:
        d[1:] -= b  # start index x-1 in the (T)-site interval
        d[:-1] -= b  # start index x in the (T)-site interval
        mag[1:] += np.abs(b)
        mag[:-1] += np.abs(b)
    if T >= 2:
        d[1:-1] += c
        mag[1:-1] += np.abs(c)
    feas = np.array([feasible_range(n, xi, T - xi) for xi in x])
    return s, d, mag, feas


def _range_shell(n: int, T: int) -> np.ndarray:
    """log P(R_n = {-x, ..., T - x}) for x = 0..T, as a float64 array."""
    out = np.full(T + 1, -np.inf)
    if T < 1 or T > n:
        return out
    core = _shell_ie(n, T)
    if core is None:
        return out
    s, d, mag, feas = core
    ok = feas & (d > _ESCALATE_FLOOR * mag)
    vals = np.where(ok, d, LD(1))
    out[ok] = (s + np.log(vals))[ok].astype(float)
    for xi in np.nonzero(feas & ~ok)[0]:
        out[xi] = range_law_flag_dp(n, int(xi), int(T - xi))
    return out


# Partition sums tolerate far looser per-cell precision than the table path.
# The spectral sums behind the inclusion-exclusion carry ~10 modes of unit
# size, so the absolute rounding error of d is a few tens of extended ulps of
# mag; accepting differences down to 1e-13 of mag still certifies ~4 digits.
# Below that the difference is noise: if the flag DP fits the ops budget the
# cell escalates as usual, otherwise it is clamped to twice the floor (a
# certified upper bound) and flagged so the caller can move its weight into a
# truncation certificate instead of stalling on an O(n K) refuge per cell.
_RELAXED_FLOOR = 1e-13
_DP_OPS_BUDGET = 500_000


def _range_shell_relaxed(n: int, T: int) -> tuple[np.ndarray, np.ndarray]:
    """(log shell, clamped mask) trading tail-cell precision for speed."""
    out = np.full(T + 1, -np.inf)
    clamped = np.zeros(T + 1, dtype=bool)
    if T < 1 or T > n:
        return out, clamped
    core = _shell_ie(n, T)
    if core is None:
        return out, clamped
    s, d, mag, feas = core
    if n * (T + 1) <= _DP_OPS_BUDGET:
        ok = feas & (d > _ESCALATE_FLOOR * mag)
        vals = np.where(ok, d, LD(1))
        out[ok] = (s + np.log(vals))[ok].astype(float)
        for xi in np.nonzero(feas & ~ok)[0]:
            out[xi] = range_law_flag_dp(n, int(xi), int(T - xi))
        return out, clamped
    floor = _RELAXED_FLOOR * mag
    ok = feas & (d > floor)
    vals = np.where(ok, d, LD(1))
    out[ok] = (s + np.log(vals))[ok].astype(float)
    rest = feas & ~ok & (mag > 0)
    if rest.any():
        bound = np.where(rest, LD(2) * floor, LD(1))
        out[rest] = (s + np.log(bound))[rest].astype(float)
        clamped[rest] = True
    return out, clamped


def exact_range_law(n: int, x: int, y: int) -> float:
    """log P(range of the n-step walk is exactly {-x, ..., y})."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if x < 0 or y < 0:
        return -math.inf
    if not feasible_range(n, x, y):
        return -math.inf
    return float(_range_shell(n, x + y)[x])


def halfline_flag_dp(n: int, T: int) -> float:
    """log P(stay >= 0, max = T) by DP with a visited-top flag; cancellation-free."""
    if not feasible_halfline(n, T):
        return -math.inf
    K = T + 1
    p = np.zeros((2, K), dtype=LD)
    p[1 if T == 0 else 0, 0] = LD(1)
    log_scale = LD(0)
    for _ in range(n):
        q = np.zeros_like(p)
        q[:, 1:] += LD(0.5) * p[:, :-1]
        q[:, :-1] += LD(0.5) * p[:, 1:]
        top = q[0, K - 1].copy()
        q[0, K - 1] = 0
        q[1, K - 1] += top
        p = q
        m = p.max()
        if m == 0:
            return -math.inf
        if m < LD(1e-200):
            p /= m
            log_scale += np.log(m)
    total = p[1, :].sum()
    if total <= 0:
        return -math.inf
    return float(log_scale + np.log(total))


def halfline_range_law(n: int, T: int) -> float:
    """log P(S stays >= 0 for n steps and max S = T)."""
    if n < 1 or T < 1:
        raise ValueError("n >= 1 and T >= 1 required")
    if not feasible_halfline(n, T):
        return -math.inf
    s = _lead_log(n, T + 1)
    a = _stay_rows(n, T + 1, s)[0]
    b = _stay_rows(n, T, s)[0] if T >= 1 else LD(0)
    d = a - b
    if d <= _ESCALATE_FLOOR * (abs(a) + abs(b)):
        return halfline_flag_dp(n, T)
    return float(s + np.log(d))


def halfline_shell(n: int, t_lo: int, t_hi: int) -> np.ndarray:
    """log P(stay >= 0, max = T) for T = t_lo..t_hi (vectorized over T)."""
    out = np.full(t_hi - t_lo + 1, -np.inf)
    for k, T in enumerate(range(t_lo, t_hi + 1)):
        if feasible_halfline(n, T):
            out[k] = halfline_range_law(n, T)
    return out


def range_law_enumeration(n: int) -> dict[tuple[int, int], Fraction]:
    """Exact range law by iterating all 2^n walks; dyadic rationals.

    Intended for n <= 20 or so; the acceptance gate uses n <= 14.
    """
    if n < 1 or n > 24:
        raise ValueError("enumeration supported for 1 <= n <= 24")
    m = 1 << n
    bits = ((np.arange(m)[:, None] >> np.arange(n)[None, :]) & 1).astype(np.int8)
    steps = 2 * bits - 1
    paths = np.cumsum(steps, axis=1)
    mins = np.minimum(paths.min(axis=1), 0)
    maxs = np.maximum(paths.max(axis=1), 0)
    counts: dict[tuple[int, int], int] = {}
    for xm, ym in zip(-mins, maxs):
        counts[(int(xm), int(ym))] = counts.get((int(xm), int(ym)), 0) + 1
    return {k: Fraction(v, m) for k, v in sorted(counts.items())}


def stay_log_upper_bound(n: int, T: int) -> float:
    """Certified log upper bound on the whole shell x + y = T of range laws.

    P(R_n = {-x,..,y}) <= stay probability <= C(K) lambda_1^n with
    C(K) = 2 (1 + log(K+1)) bounding the sum of mode coefficients; the factor
    (T+1) counts the cells of the shell.
    """
    if T < 1:
        return -math.inf
    K = T + 1
    lead = _lead_log(n, K)
    if not np.isfinite(lead):
        return -math.inf
    return float(lead + math.log(2.0 * (1.0 + math.log(K + 1))) + math.log(T + 1))


# ---------------------------------------------------------------------------
# Asymptotic kernel


@dataclass(frozen=True)
class AsymptoticKernel:
    """Closed-form quantities driving the large-n shape of the range law."""

    h: float
    n: int

    @property
    def c_h(self) -> float:
        return (math.pi**2 / self.h) ** (1.0 / 3.0)

    @property
    def T_star(self) -> float:
        return self.c_h * self.n ** (1.0 / 3.0)

    @property
    def psi_h(self) -> float:
        return (4.0 / math.pi) * math.exp(-self.h) * (math.expm1(self.h)) ** 2

    def g(self, T: float) -> float:
        return -math.log(math.cos(math.pi / T))

    def phi(self, T: float) -> float:
        return self.h * T + self.n * math.pi**2 / (2.0 * T**2)

    def curvature(self, T: float) -> float:
        """Second derivative of phi at T."""
        return 3.0 * self.n * math.pi**2 / T**4

    @property
    def delta_scale(self) -> float:
        """Standard deviation of the range-size fluctuation, 1/sqrt(phi'')."""
        return self.curvature(self.T_star) ** -0.5


def theta_asymptotic(n: int, h: float, x: int, y: int) -> float:
    """Closed-form log approximation of the shell weight at (x, y).

    Returns log[(4/pi)(e^h - 1)(e^h sin(pi(x+1)/T) - sin(pi x/T))] - n g(T)
    with T = x + y, exactly as the asymptotic prefactor is printed. The
    bracket can vanish or turn negative at the boundary columns; those inputs
    raise.
    """
    T = x + y
    if T < 3 or not (1 <= x <= T - 1):
        raise ValueError("interior column 1 <= x <= T-1 with T >= 3 required")
    bracket = math.exp(h) * math.sin(math.pi * (x + 1) / T) - math.sin(math.pi * x / T)
    if bracket <= 0:
        raise ValueError("prefactor degenerates at this boundary column")
    g = -math.log(math.cos(math.pi / T))
    return math.log((4.0 / math.pi) * math.expm1(h) * bracket) - n * g


# ---------------------------------------------------------------------------
# Tables


@dataclass(frozen=True)
class FullWindow:
    """Exhaustive window: every shell T <= n."""

    tol: float = 1e-12


@dataclass(frozen=True)
class WeightedWindow:
    """Window sized for the h-penalized model around the optimal shell.

    The window is grown outward from T* until the certified bound on the
    weighted mass of the dropped shells, relative to the kept ones, is below
    tol. Weights are exp(-h(T+1)) times an optional environment allowance
    log_extra(T) (e.g. a prefix-max envelope scaled by the coupling strength).
    """

    h: float
    tol: float = 1e-10
    halfwidth_extra: int = 0
    log_extra: object = None  # callable T -> float, optional


@dataclass(frozen=True)
class ExplicitWindow:
    t_lo: int
    t_hi: int


@dataclass
class RangeLawTable:
    n: int
    shells: dict[int, np.ndarray] = field(default_factory=dict)
    window: tuple[int, int] = (0, 0)
    truncation_error: float = 0.0
    mode: str = "exact_spectral"
    cancel_floor_hits: int = 0

    def logp(self, x: int, y: int) -> float:
        sh = self.shells.get(x + y)
        if sh is None:
            return -math.inf
        return float(sh[x])

    def items(self):
        for T in sorted(self.shells):
            sh = self.shells[T]
            for x in range(T + 1):
                yield x, T - x, float(sh[x])

    def total_mass(self) -> float:
        vals = [v for _, _, v in self.items() if v > -math.inf]
        if not vals:
            return 0.0
        return float(np.exp(np.logaddexp.reduce(np.array(vals))))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "logp"])
            for x, y, v in self.items():
                w.writerow([x, y, repr(v)])

    @classmethod
    def from_csv(cls, path, n: int) -> "RangeLawTable":
        shells: dict[int, list] = {}
        with open(path, newline="") as fh:
            rd = csv.reader(fh)
            next(rd)
            rows = [(int(x), int(y), float(v)) for x, y, v in rd]
        ts = sorted({x + y for x, y, _ in rows})
        out = {}
        for T in ts:
            out[T] = np.full(T + 1, -np.inf)
        for x, y, v in rows:
            out[x + y][x] = v
        return cls(n=n, shells=out, window=(min(ts), max(ts)), mode="exact_spectral")

    def save_npz(self, path) -> None:
        payload = {f"T{T}": sh for T, sh in self.shells.items()}
        payload["meta"] = np.array(
            [self.n, self.window[0], self.window[1], self.cancel_floor_hits]
        )
        payload["trunc"] = np.array([self.truncation_error])
        np.savez_compressed(path, **payload)

    @classmethod
    def load_npz(cls, path) -> "RangeLawTable":
        with np.load(path) as z:
            meta = z["meta"]
            shells = {
                int(k[1:]): z[k] for k in z.files if k.startswith("T") and k != "trunc"
            }
            return cls(
                n=int(meta[0]),
                shells=shells,
                window=(int(meta[1]), int(meta[2])),
                truncation_error=float(z["trunc"][0]),
                cancel_floor_hits=int(meta[3]),
            )


def _enumeration_table(n: int) -> RangeLawTable:
    law = range_law_enumeration(n)
    shells: dict[int, np.ndarray] = {}
    for (x, y), p in law.items():
        T = x + y
        if T == 0:
            continue
        shells.setdefault(T, np.full(T + 1, -np.inf))
        shells[T][x] = math.log(p)
    return RangeLawTable(
        n=n, shells=shells, window=(min(shells), max(shells)), truncation_error=0.0,
        mode="enumeration",
    )


def _dp_rows(n: int, num_sites: int) -> tuple[LD, np.ndarray]:
    """Survival probabilities for all start sites at once, by adjoint DP.

    Returns (log_scale, u) with u[i] * exp(log_scale) = P(stay n steps from
    site i in an interval of num_sites sites). Extended precision.
    """
    K = num_sites
    if K <= 0:
        return LD(0), np.zeros(0, dtype=LD)
    u = np.ones(K, dtype=LD)
    log_scale = LD(0)
    for _ in range(n):
        v = np.zeros(K, dtype=LD)
        v[:-1] += LD(0.5) * u[1:]
        v[1:] += LD(0.5) * u[:-1]
        u = v
        m = u.max()
        if m == 0:
            return LD(-np.inf), u
        if m < LD(1e-200):
            u /= m
            log_scale += np.log(m)
    return log_scale, u


def _dp_shell(n: int, T: int) -> np.ndarray:
    """Same combination as the spectral shell, from the DP rows."""
    out = np.full(T + 1, -np.inf)
    if T < 1 or T > n:
        return out
    s1, a = _dp_rows(n, T + 1)
    s2, b = _dp_rows(n, T)
    s3, c = _dp_rows(n, T - 1)
    scales = [s for s in (s1, s2, s3) if np.isfinite(s)]
    if not scales:
        return out
    s = max(scales)
    with np.errstate(under="ignore"):
        a = a * np.exp(s1 - s) if np.isfinite(s1) else np.zeros_like(a)
        b = b * np.exp(s2 - s) if np.isfinite(s2) else np.zeros_like(b)
        c = c * np.exp(s3 - s) if np.isfinite(s3) else np.zeros_like(c)
    d = a.copy()
    mag = np.abs(a)
    d[1:] -= b
    d[:-1] -= b
    mag[1:] += np.abs(b)
    mag[:-1] += np.abs(b)
    if T >= 2:
        d[1:-1] += c
        mag[1:-1] += np.abs(c)
    x = np.arange(T + 1)
    feas = np.array([feasible_range(n, xi, T - xi) for xi in x])
    ok = feas & (d > _ESCALATE_FLOOR * mag)
    vals = np.where(ok, d, LD(1))
    out[ok] = (s + np.log(vals))[ok].astype(float)
    for xi in x[feas & ~ok]:
        out[xi] = range_law_flag_dp(n, int(xi), int(T - xi))
    return out


def build_table(n: int, policy, method: str = "spectral") -> RangeLawTable:
    """Range-law table over a window of shells, with certified truncation.

    policy is FullWindow, WeightedWindow, or ExplicitWindow. method selects
    the evaluation route (spectral is exact to roundoff; dp and enumeration
    are the independent slow routes used by the test suite).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if method == "enumeration":
        return _enumeration_table(n)

    shell_fn = _range_shell if method == "spectral" else _dp_shell

    if isinstance(policy, FullWindow):
        t_lo, t_hi = 1, n
    elif isinstance(policy, ExplicitWindow):
        t_lo, t_hi = max(1, policy.t_lo), min(n, policy.t_hi)
    elif isinstance(policy, WeightedWindow):
        t_lo, t_hi = _weighted_window(n, policy)
    else:
        raise TypeError(f"unknown window policy {policy!r}")

    shells = {}
    hits = 0
    for T in range(t_lo, t_hi + 1):
        sh = shell_fn(n, T)
        feas = sum(
            1 for x in range(T + 1) if feasible_range(n, x, T - x)
        )
        hits += int(feas - np.isfinite(sh).sum())
        shells[T] = sh

    table = RangeLawTable(
        n=n, shells=shells, window=(t_lo, t_hi),
        mode="exact_spectral" if method == "spectral" else "exact_dp",
        cancel_floor_hits=hits,
    )
    if isinstance(policy, (FullWindow, ExplicitWindow)):
        # Walk-mass semantics: probability of range sizes outside the window.
        table.truncation_error = _walk_mass_outside(n, t_lo, t_hi)
    else:
        table.truncation_error = _weighted_tail(n, policy, t_lo, t_hi, shells)
    return table


def _walk_mass_outside(n: int, t_lo: int, t_hi: int) -> float:
    if t_lo <= 1 and t_hi >= n:
        return 0.0
    out = 0.0
    # Below the window the range is contained in some shorter interval.
    if t_lo > 1:
        out += math.exp(min(0.0, stay_probability(n, t_lo - 1, t_lo - 1)))
    # Above the window, bound each shell by its certified cap.
    for T in range(t_hi + 1, n + 1):
        out += math.exp(stay_log_upper_bound(n, T))
    return min(1.0, out)


def _weighted_window(n: int, pol: WeightedWindow) -> tuple[int, int]:
    kern = AsymptoticKernel(h=pol.h, n=n)
    t_star = kern.T_star

    def log_w(T: int) -> float:
        extra = float(pol.log_extra(T)) if pol.log_extra is not None else 0.0
        return stay_log_upper_bound(n, T) - pol.h * (T + 1) + extra

    center = max(1, int(round(t_star)))
    log_peak = -1.5 * pol.h * t_star  # leading size of the kept weight
    budget = math.log(pol.tol) + log_peak
    t_hi = center
    while t_hi < n and log_w(t_hi + 1) > budget - math.log(max(n, 2)):
        t_hi += 1
    t_lo = center
    while t_lo > 1 and log_w(t_lo - 1) > budget - math.log(max(n, 2)):
        t_lo -= 1
    t_hi = min(n, t_hi + pol.halfwidth_extra)
    t_lo = max(1, t_lo - pol.halfwidth_extra)
    return t_lo, t_hi


def _weighted_tail(n, pol: WeightedWindow, t_lo, t_hi, shells) -> float:
    """Certified relative bound on the weighted mass of the dropped shells."""

    def log_w(T: int) -> float:
        extra = float(pol.log_extra(T)) if pol.log_extra is not None else 0.0
        return stay_log_upper_bound(n, T) - pol.h * (T + 1) + extra

    tail = []
    T = t_hi + 1
    while T <= n:
        lw = log_w(T)
        tail.append(lw)
        # The bound decreases at least geometrically past the window: stop
        # once 1000 further shells cannot matter.
        if lw < math.log(pol.tol) - 60 - math.log(max(n, 2)):
            remaining = n - T
            if remaining > 0:
                tail.append(lw + math.log(remaining))
            break
        T += 1
    for T in range(1, t_lo):
        tail.append(log_w(T))
    if not tail:
        return 0.0
    log_tail = float(np.logaddexp.reduce(np.array(tail)))

    kept = []
    for T, sh in shells.items():
        fin = sh[np.isfinite(sh)]
        if fin.size:
            extra = float(pol.log_extra(T)) if pol.log_extra is not None else 0.0
            kept.append(
                float(np.logaddexp.reduce(fin)) - pol.h * (T + 1) + extra * 0.0
            )
    if not kept:
        return math.inf
    log_kept = float(np.logaddexp.reduce(np.array(kept)))
    return math.exp(min(log_tail - log_kept, 700.0))
