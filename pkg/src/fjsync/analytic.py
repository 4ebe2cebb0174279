"""Closed-form waiting-time distributions at the marked-pair synchronizer.

Each branch of the fork-join network is an M/M/N queue; the sojourn time of
a job in a branch has a (generalized) hyperexponential density.  The wait of
the first partner at the synchronizer is |t_a - t_b|, whose density is again
a signed mixture of decaying exponentials.  Everything here is exact algebra
on such mixtures: cross-correlation-style convolution of the two branch
densities, folding to [0, inf), means, CDFs and quantiles.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

INFINITE = math.inf

# relative rate gap below which two exponents are treated as colliding
_RATE_COLLISION_RTOL = 1e-9


def _is_infinite(n) -> bool:
    return n == INFINITE


def _check_server_count(n, name: str) -> None:
    if _is_infinite(n):
        return
    if int(n) != n or n < 1:
        raise ValueError(f"{name} must be an integer >= 1 or infinity, got {n!r}")


@dataclass(frozen=True)
class NetworkParams:
    """Fork-join network parameters: arrival rate and per-branch (N, mu).

    Server counts may be ``math.inf`` for infinite-server branches.
    Stability of every finite branch (psi_i = lam / (n_i mu_i) < 1) is
    enforced at construction.
    """

    lam: float
    n_a: float
    mu_a: float
    n_b: float
    mu_b: float

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError(f"arrival rate must be positive, got {self.lam}")
        if self.mu_a <= 0 or self.mu_b <= 0:
            raise ValueError("service rates must be positive")
        _check_server_count(self.n_a, "n_a")
        _check_server_count(self.n_b, "n_b")
        for name, psi in (("a", self.psi_a), ("b", self.psi_b)):
            if psi >= 1:
                raise ValueError(f"branch {name} unstable: psi_{name} = {psi} >= 1")

    @property
    def psi_a(self) -> float:
        return 0.0 if _is_infinite(self.n_a) else self.lam / (self.n_a * self.mu_a)

    @property
    def psi_b(self) -> float:
        return 0.0 if _is_infinite(self.n_b) else self.lam / (self.n_b * self.mu_b)

    def swapped(self) -> "NetworkParams":
        return NetworkParams(self.lam, self.n_b, self.mu_b, self.n_a, self.mu_a)

    @classmethod
    def from_utilization(cls, lam, n_a, psi_a, n_b, psi_b) -> "NetworkParams":
        """Build params from branch utilizations instead of service rates."""
        if _is_infinite(n_a) or _is_infinite(n_b):
            raise ValueError("utilization parametrization needs finite server counts")
        return cls(lam, n_a, lam / (n_a * psi_a), n_b, lam / (n_b * psi_b))

    def as_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "n_a": None if _is_infinite(self.n_a) else int(self.n_a),
            "mu_a": self.mu_a,
            "n_b": None if _is_infinite(self.n_b) else int(self.n_b),
            "mu_b": self.mu_b,
            "psi_a": self.psi_a,
            "psi_b": self.psi_b,
        }


@dataclass(frozen=True)
class BranchOccupancy:
    """Empty-system and nonempty-queue probabilities of one M/M/N branch."""

    p0: float
    p_queue: float


def _merge_terms(terms) -> tuple:
    """Sort terms by rate, merge equal rates, drop vanishing coefficients."""
    cleaned = []
    for c, r in sorted(terms, key=lambda t: t[1]):
        if r <= 0:
            raise ValueError(f"exponential rate must be positive, got {r}")
        if cleaned and abs(r - cleaned[-1][1]) <= _RATE_COLLISION_RTOL * r:
            cleaned[-1][0] += c
        else:
            cleaned.append([c, r])
    scale = max((abs(c) for c, _ in cleaned), default=0.0)
    return tuple((c, r) for c, r in cleaned if abs(c) > 1e-14 * scale)


@dataclass(frozen=True)
class ExpMixture:
    """Signed mixture of decaying exponentials.

    ``right`` terms (c, r) contribute c*exp(-r*t) for t >= 0, ``left`` terms
    contribute c*exp(+r*t) for t < 0.  A one-sided mixture has no left terms.
    Coefficients may be negative (generalized hyperexponential); equal rates
    on a side are merged at construction.
    """

    right: tuple = ()
    left: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "right", _merge_terms(self.right))
        object.__setattr__(self, "left", _merge_terms(self.left))

    @classmethod
    def one_sided(cls, terms) -> "ExpMixture":
        return cls(right=tuple(terms))

    @property
    def is_two_sided(self) -> bool:
        return bool(self.left)

    @property
    def total_mass(self) -> float:
        return sum(c / r for c, r in self.right) + sum(c / r for c, r in self.left)

    @property
    def min_rate(self) -> float:
        return min(r for _, r in self.right + self.left)

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        pos = t >= 0
        for c, r in self.right:
            out[pos] += c * np.exp(-r * t[pos])
        neg = ~pos
        for c, r in self.left:
            out[neg] += c * np.exp(r * t[neg])
        return out if out.ndim else float(out)

    def cdf(self, t):
        if self.is_two_sided:
            raise ValueError("cdf defined for one-sided mixtures only")
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("cdf argument must be nonnegative")
        out = np.zeros_like(t)
        for c, r in self.right:
            out += (c / r) * (1.0 - np.exp(-r * t))
        return out if out.ndim else float(out)

    def mean(self) -> float:
        if self.is_two_sided:
            raise ValueError("mean defined for one-sided mixtures only")
        return sum(c / r**2 for c, r in self.right)

    def quantile(self, p: float) -> float:
        return mixture_quantile(self, p)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n variates by inverting the CDF on uniform draws."""
        return _invert_cdf(self, rng.random(n))

    def to_json(self) -> str:
        terms = [{"c": c, "r": r, "side": "right"} for c, r in self.right]
        terms += [{"c": c, "r": r, "side": "left"} for c, r in self.left]
        return json.dumps(terms)

    @classmethod
    def from_json(cls, text: str) -> "ExpMixture":
        right, left = [], []
        for term in json.loads(text):
            (right if term["side"] == "right" else left).append((term["c"], term["r"]))
        return cls(right=tuple(right), left=tuple(left))


def erlang_idle_prob(lam: float, mu: float, n: int) -> float:
    """Probability that an M/M/N branch is completely empty.

    Evaluated through a log-domain recurrence on the Poisson terms
    (lam/mu)^k / k!, so large N and large offered load do not overflow.
    """
    _check_server_count(n, "n")
    if _is_infinite(n):
        raise ValueError("idle probability formula requires a finite server count")
    n = int(n)
    psi = lam / (n * mu)
    if psi >= 1:
        raise ValueError(f"unstable branch: psi = {psi} >= 1")
    if lam <= 0 or mu <= 0:
        raise ValueError("rates must be positive")
    a = lam / mu
    log_term = 0.0          # log of a^k / k!, starting at k=0
    log_acc = 0.0           # log of the partial sum over k < n
    for k in range(1, n):
        log_term += math.log(a / k)
        log_acc = np.logaddexp(log_acc, log_term)
    log_tail = log_term + math.log(a / n) - math.log1p(-psi)
    return float(math.exp(-np.logaddexp(log_acc, log_tail)))


def queue_nonempty_prob(lam: float, mu: float, n: int) -> float:
    """Probability that the queue (excluding servers) of an M/M/N branch is nonempty."""
    _check_server_count(n, "n")
    if _is_infinite(n):
        return 0.0
    n = int(n)
    psi = lam / (n * mu)
    if psi >= 1:
        raise ValueError(f"unstable branch: psi = {psi} >= 1")
    a = lam / mu
    log_term = 0.0
    log_acc = 0.0
    for k in range(1, n):
        log_term += math.log(a / k)
        log_acc = np.logaddexp(log_acc, log_term)
    log_tail = log_term + math.log(a / n) - math.log1p(-psi)
    return float(math.exp(log_tail - np.logaddexp(log_acc, log_tail)))


def branch_occupancy(lam: float, mu: float, n: int) -> BranchOccupancy:
    return BranchOccupancy(erlang_idle_prob(lam, mu, n), queue_nonempty_prob(lam, mu, n))


def branch_sojourn_density(lam: float, mu: float, n) -> ExpMixture:
    """One-sided sojourn-time density of a single M/M/N branch.

    Infinite-server: the service exponential mu*exp(-mu t).  Finite N: a
    two-term signed mixture with rates mu and (mu*N - lam); at N = 1 the
    mu-rate coefficient vanishes and the density is the M/M/1 exponential
    (mu - lam)*exp(-(mu - lam) t).
    """
    if lam <= 0 or mu <= 0:
        raise ValueError("rates must be positive")
    _check_server_count(n, "n")
    if _is_infinite(n):
        return ExpMixture.one_sided([(mu, mu)])
    n = int(n)
    psi = lam / (n * mu)
    if psi >= 1:
        raise ValueError(f"unstable branch: psi = {psi} >= 1")
    if n == 1:
        return ExpMixture.one_sided([(mu - lam, mu - lam)])
    p_queue = queue_nonempty_prob(lam, mu, n)
    queue_rate = mu * n - lam
    # exponent collision (queue_rate == mu): nudge the queue rate by a
    # relative 1e-9; the coefficient pair below keeps normalization exact
    # and the induced density error is O(1e-9).
    if abs(queue_rate - mu) <= _RATE_COLLISION_RTOL * mu:
        queue_rate = mu * (1.0 + 2.0 * _RATE_COLLISION_RTOL)
    gap = queue_rate - mu  # equals mu*(n-1) - lam away from the nudge
    c_service = mu * (1.0 + p_queue * mu / gap)
    c_queue = -p_queue * mu * queue_rate / gap
    return ExpMixture.one_sided([(c_service, mu), (c_queue, queue_rate)])


def cross_convolve(fa: ExpMixture, fb: ExpMixture) -> ExpMixture:
    """Density of t_a - t_b for independent branch sojourns, on all of R.

    For terms (A, a) of fa and (B, b) of fb the integral
    int fb(tau) fa(tau + t) dtau contributes A*B/(a+b) times
    exp(-a t) for t >= 0 and exp(+b t) for t < 0.
    """
    if fa.is_two_sided or fb.is_two_sided:
        raise ValueError("cross_convolve expects one-sided mixtures")
    right = []
    left = []
    for coef_a, rate_a in fa.right:
        acc = sum(coef_b / (rate_a + rate_b) for coef_b, rate_b in fb.right)
        right.append((coef_a * acc, rate_a))
    for coef_b, rate_b in fb.right:
        acc = sum(coef_a / (rate_a + rate_b) for coef_a, rate_a in fa.right)
        left.append((coef_b * acc, rate_b))
    return ExpMixture(right=tuple(right), left=tuple(left))


def fold_to_waiting_density(ft: ExpMixture) -> ExpMixture:
    """Fold a two-sided gap density onto [0, inf): f(t) = ft(t) + ft(-t)."""
    return ExpMixture.one_sided(ft.right + ft.left)


def waiting_time_density(params: NetworkParams) -> ExpMixture:
    """Synchronizer waiting-time density under the branch-independence approximation."""
    fa = branch_sojourn_density(params.lam, params.mu_a, params.n_a)
    fb = branch_sojourn_density(params.lam, params.mu_b, params.n_b)
    return fold_to_waiting_density(cross_convolve(fa, fb))


def mixture_mean(f: ExpMixture) -> float:
    return f.mean()


def waiting_time_mean(params: NetworkParams) -> float:
    return waiting_time_density(params).mean()


def mixture_cdf(f: ExpMixture, t) -> float:
    return f.cdf(t)


def mixture_quantile(f: ExpMixture, p: float) -> float:
    """Inverse CDF of a one-sided mixture, |F(t) - p| <= 1e-12."""
    if not 0 <= p < 1:
        raise ValueError(f"quantile level must lie in [0, 1), got {p}")
    if p == 0:
        return 0.0
    return float(_invert_cdf(f, np.array([p]))[0])


def _invert_cdf(f: ExpMixture, p: np.ndarray) -> np.ndarray:
    """Vectorized bracketing bisection on the monotone mixture CDF."""
    if f.is_two_sided:
        raise ValueError("quantiles defined for one-sided mixtures only")
    lo = np.zeros_like(p)
    # crude upper envelope: exponential tail of the slowest rate
    hi = np.full_like(p, 1.0 / f.min_rate)
    for _ in range(200):
        under = f.cdf(hi) < p
        if not under.any():
            break
        hi[under] *= 2.0
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        below = f.cdf(mid) < p
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.max(hi - lo) <= 1e-16 * np.max(hi):
            break
    return 0.5 * (lo + hi)


def little_occupancy(lam: float, t_mean: float) -> float:
    """Little's law: mean number of first partners held by the synchronizer."""
    if lam <= 0:
        raise ValueError("arrival rate must be positive")
    if t_mean < 0:
        raise ValueError("mean waiting time must be nonnegative")
    return lam * t_mean
