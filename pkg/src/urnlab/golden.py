"""Canonical showcase models for the verification suite.

Four recursions with pinned parameters, each probing one regime boundary:
a defective drift matrix whose coordinates converge at different rates, a
complex-eigenvalue drift that rotates forever on the log-time scale, a
noise-free scalar decay whose rate is dented by a slowly varying factor,
and a critical scalar recursion driven by deterministic remainders. Two
stock urn models round out the set.
"""

import functools
import math

import numpy as np

from .errors import InvalidArgumentError
from .sa import GaussianNoise, LinearDrift, SAProcessSpec
from .urn import DeterministicRule, UrnSpec

# start point of the damped decay model; loglog(1/x) is exactly 2 here
DECAY_START = math.exp(-math.e ** 2)

# diagonalizing-to-chain basis for the defective drift [[lam,-1],[0,lam]]
JORDAN_CHAIN_BASIS = np.diag([1.0, -1.0])


def jordan_chain_spec(lam=0.5):
    """Two coordinates coupled through one off-diagonal unit: the first is
    an autonomous scalar recursion, the second drags a log factor behind it.
    Noise enters the first coordinate only."""
    if not 0.0 < lam < 1.0:
        raise InvalidArgumentError(f"lam must lie in (0, 1), got {lam}")
    A = np.array([[lam, -1.0], [0.0, lam]])
    return SAProcessSpec(dim=2, drift=LinearDrift(A), theta0=[0.0, 0.0],
                         noise=GaussianNoise([[1.0, 0.0]]),
                         theta_star=[0.0, 0.0], label=f"jordan-chain-{lam:g}")


def rotation_spec(lam=0.3):
    """Drift lam [[1,-1],[1,1]]: eigenvalues lam (1 +- i), so the scaled
    path keeps rotating with log-time phase lam and never settles to a
    single limit direction. Full-rank noise."""
    if not 0.0 < lam < 0.5:
        raise InvalidArgumentError(f"lam must lie in (0, 0.5), got {lam}")
    A = lam * np.array([[1.0, -1.0], [1.0, 1.0]])
    return SAProcessSpec(dim=2, drift=LinearDrift(A), theta0=[0.0, 0.0],
                         noise=GaussianNoise(np.eye(2)),
                         theta_star=[0.0, 0.0], label=f"rotation-{lam:g}")


@functools.lru_cache(maxsize=1)
def _phi_grid(step=1e-3, lo=math.e ** 2, hi=100.0):
    """Grid of phi(L) = e^L * integral_L^inf e^{-w}/log(w) dw.

    Backward in L: phi(L) = I(L) + e^{-step} phi(L + step), with each panel
    I(L) = integral_0^step e^{-t}/log(L+t) dt done by Simpson. The constant
    coefficient makes the whole sweep a scaled reverse cumsum. Anchored at
    hi by the two-term tail expansion, whose error decays like e^{-(hi-L)}
    by the time it reaches usable L.
    """
    n = int(round((hi - lo) / step))
    L = lo + step * np.arange(n + 1)
    mid = L[:-1] + 0.5 * step
    panels = (step / 6.0) * (1.0 / np.log(L[:-1])
                             + 4.0 * math.exp(-0.5 * step) / np.log(mid)
                             + math.exp(-step) / np.log(L[1:]))
    top = float(L[-1])
    lg = math.log(top)
    anchor = (1.0 / lg - 1.0 / (top * lg * lg)
              + (1.0 + 2.0 / lg) / (top * top * lg * lg))
    w = np.exp(-step * np.arange(n + 1))
    c = panels * w[:-1]
    tails = np.concatenate([c[::-1].cumsum()[::-1], [0.0]])
    phi = tails / w + anchor * w[::-1]
    return float(lo), float(step), phi.tolist()


class LogDampedDrift:
    """h(theta) = rho * integral_0^theta (1 - f(x)) dx with the damping
    f(x) = 1/loglog(1/min(x, x0)), x0 = DECAY_START.

    The derivative at zero equals rho exactly, yet f pushes the decay off
    the clean power law by a slowly varying factor. Accepts either a length-
    one row (engine calls) or a plain float (tight scalar loops)."""

    def __init__(self, rho):
        if not 0.0 < rho <= 0.5:
            raise InvalidArgumentError(f"rho must lie in (0, 0.5], got {rho}")
        self.rho = float(rho)
        self.x0 = DECAY_START
        self._l0, self._step, self._phi = _phi_grid()
        self._hi_l = self._l0 + self._step * (len(self._phi) - 1)
        self._g0 = self.x0 * self._phi[0]

    def _correction(self, th):
        # G(th) = integral_0^th f(x) dx; th * phi(-log th) below x0
        if th >= self.x0:
            return self._g0 + 0.5 * (th - self.x0)
        L = -math.log(th)
        if L >= self._hi_l - self._step:
            lg = math.log(L)
            return th * (1.0 / lg - 1.0 / (L * lg * lg)
                         + (1.0 + 2.0 / lg) / (L * L * lg * lg))
        u = (L - self._l0) / self._step
        i = int(u)
        fr = u - i
        return th * (self._phi[i] * (1.0 - fr) + self._phi[i + 1] * fr)

    def _h(self, th):
        if th <= 0.0:
            return self.rho * th  # the damping integral vanishes left of zero
        return self.rho * (th - self._correction(th))

    def __call__(self, theta):
        if isinstance(theta, np.ndarray):
            return np.array([self._h(float(theta[0]))])
        return self._h(float(theta))

    def digest_parts(self):
        return f"rho={self.rho!r};x0={self.x0!r}"


def decay_spec(rho=0.5, damped=False):
    """Scalar noise-free recursion from DECAY_START with drift slope rho at
    zero. Undamped: h(theta) = rho theta, a clean n^{-rho} power decay.
    Damped: the LogDampedDrift correction slows that decay by an
    exp(rho log n / loglog n) factor even though Dh(0) is unchanged."""
    if damped:
        drift = LogDampedDrift(rho)
    else:
        if not 0.0 < rho <= 0.5:
            raise InvalidArgumentError(f"rho must lie in (0, 0.5], got {rho}")
        drift = LinearDrift([[rho]])
    return SAProcessSpec(dim=1, drift=drift, theta0=[DECAY_START],
                         theta_star=[0.0],
                         label=f"decay-{rho:g}-{'damped' if damped else 'pure'}")


def scalar_decay_path(spec, n_max, checkpoints):
    """Noise-free scalar recursion in plain float arithmetic.

    Bit-identical to run_sa for dim-1 specs without noise or remainder
    (the update is the same two IEEE operations per step), but an order of
    magnitude faster, which matters at horizons around 1e7.
    """
    if spec.dim != 1 or spec.noise is not None or spec.remainder is not None:
        raise InvalidArgumentError(
            "scalar fast path needs a dim-1 spec without noise or remainder")
    drift = spec.drift
    if isinstance(drift, LinearDrift):
        a = float(drift.matrix[0, 0])
        h = lambda t: a * t
    else:
        h = drift  # must accept and return plain floats
    n_max = int(n_max)
    plan = sorted({int(c) for c in checkpoints})
    if plan and (plan[0] < 0 or plan[-1] > n_max):
        raise InvalidArgumentError(
            f"checkpoints must lie in [0, {n_max}], got [{plan[0]}, {plan[-1]}]")
    th = float(spec.theta0[0])
    out = []
    pi = 0
    if pi < len(plan) and plan[pi] == 0:
        out.append((0, th))
        pi += 1
    for k in range(n_max):
        th = th - h(th) / (k + 1.0)
        if pi < len(plan) and plan[pi] == k + 1:
            out.append((k + 1, th))
            pi += 1
    return out


class InverseSqrtLogRemainder:
    """r_k = 1/sqrt(k log(k+1)); the +1 keeps the k = 1 term finite."""

    def __call__(self, k):
        j = np.asarray(k, dtype=float)
        return np.atleast_1d(1.0 / np.sqrt(j * np.log1p(j)))

    def digest_parts(self):
        return "inv-sqrt-log"


class InverseSqrtLogLogRemainder:
    """r_k = 1/(sqrt(k) max(loglog k, 1)); the clamp stands in for the
    double log where it is undefined or below one (k < e^e)."""

    def __call__(self, k):
        j = np.atleast_1d(np.asarray(k, dtype=float))
        ll = np.ones_like(j)
        big = j >= 2.0
        ll[big] = np.maximum(np.log(np.log(j[big])), 1.0)
        return 1.0 / (np.sqrt(j) * ll)

    def digest_parts(self):
        return "inv-sqrt-loglog"


def remainder_drive_spec(kind="zero"):
    """Critical scalar recursion theta_{n+1} = theta_n - theta_n/(2(n+1))
    + (eps_{n+1} + r_{n+1})/(n+1) with unit Gaussian noise.

    kind selects the deterministic remainder: "zero" (pure noise,
    sqrt(n/log n) theta_n is asymptotically standard normal),
    "inv-sqrt-loglog" (same scaling escapes to +infinity), or
    "inv-sqrt-log" (the scaled mean converges to 2 instead of 0).
    """
    schedules = {
        "zero": None,
        "inv-sqrt-log": InverseSqrtLogRemainder(),
        "inv-sqrt-loglog": InverseSqrtLogLogRemainder(),
    }
    if kind not in schedules:
        raise InvalidArgumentError(
            f"kind must be one of {sorted(schedules)}, got {kind!r}")
    return SAProcessSpec(dim=1, drift=LinearDrift([[0.5]]), theta0=[0.0],
                         noise=GaussianNoise([[1.0]]), remainder=schedules[kind],
                         theta_star=[0.0], label=f"remainder-{kind}")


def friedman_urn(y0=(1.0, 1.0)):
    """Two-color urn that always adds one ball of the opposite color."""
    H = np.array([[0.0, 1.0], [1.0, 0.0]])
    return UrnSpec(d=2, Y0=np.asarray(y0, dtype=float),
                   adding_rule=DeterministicRule(H), generating_matrix=H,
                   label="friedman")


def mixing_urn(off_diag, y0=(1.0, 1.0)):
    """Symmetric two-color urn adding 1-a of the drawn color and a of the
    other; the spectral gap 2a sets the convergence regime (a = 0.25 is
    the critical boundary, smaller a is slower)."""
    a = float(off_diag)
    if not 0.0 < a < 1.0:
        raise InvalidArgumentError(f"off_diag must lie in (0, 1), got {a}")
    H = np.array([[1.0 - a, a], [a, 1.0 - a]])
    return UrnSpec(d=2, Y0=np.asarray(y0, dtype=float),
                   adding_rule=DeterministicRule(H), generating_matrix=H,
                   label=f"mixing-{a:g}")
