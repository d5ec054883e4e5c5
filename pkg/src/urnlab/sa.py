"""Simulation of the stochastic approximation recursion

    theta_{n+1} = theta_n - h(theta_n)/(n+1) + (dM_{n+1} + r_{n+1})/(n+1)

with pluggable drift h, martingale-difference noise, and deterministic
remainder schedule. Three engines share the same frozen noise blocks:

  run_sa                scalar reference loop, any drift, replay support;
  linear_paths          closed-form batch solver for linear drift h = theta A
                        (used for long horizons and Monte Carlo fan-out);
  exact_mean_recursion  noise-free mean iteration, with a chunked scalar
                        fast path that reaches n = 1e8 in seconds.

run_sa and linear_paths agree on the same (seed, replicate) to near machine
precision; bit-exactness is promised only for replaying a recorded
trajectory through run_sa itself.
"""

import dataclasses
import hashlib

import numpy as np

from .asymptotics import _snap_block_form, spectral_profile
from .errors import ChainBasisRequiredError, DivergenceError, InvalidArgumentError
from .linalg import _check_square, check_sym_psd
from .rng import BlockSource, StreamRng


def _as_row(x, dim, name):
    v = np.asarray(x, dtype=float)
    if v.shape != (dim,):
        raise InvalidArgumentError(f"{name} must have shape ({dim},), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidArgumentError(f"{name} contains non-finite entries")
    return v


def _callable_tag(f):
    if f is None:
        return "none"
    mod = getattr(f, "__module__", "")
    qn = getattr(f, "__qualname__", type(f).__name__)
    extra = ""
    parts = getattr(f, "digest_parts", None)
    if callable(parts):
        extra = ":" + parts()
    return f"{mod}.{qn}{extra}"


class GaussianNoise:
    """Martingale difference dM = z @ root with z iid standard normal.

    root has shape (m, d) and Cov(dM^T dM) = root^T root; rank-deficient
    covariances use m < d rows so each step consumes only m stream values.
    """

    def __init__(self, root):
        root = np.atleast_2d(np.asarray(root, dtype=float))
        if not np.all(np.isfinite(root)):
            raise InvalidArgumentError("noise root contains non-finite entries")
        self.root = root
        self.values_per_step = root.shape[0]
        self.gamma = root.T @ root

    @classmethod
    def from_cov(cls, gamma):
        Gs = check_sym_psd(gamma, "Gamma")
        w, V = np.linalg.eigh(Gs)
        keep = w > 1e-12 * max(w[-1], 0.0)
        root = np.sqrt(w[keep])[:, None] * V[:, keep].T
        return cls(root)

    def __call__(self, rng, k, theta):
        z = rng.gaussians(self.values_per_step)
        return z @ self.root

    def digest_parts(self):
        return self.root.tobytes().hex()


class LinearDrift:
    """h(theta) = theta @ A. Declaring the matrix lets batch tooling route
    the model through the closed-form path engine."""

    def __init__(self, A):
        self.matrix = _check_square(A, "A").astype(float)

    def __call__(self, theta):
        return theta @ self.matrix

    def digest_parts(self):
        return self.matrix.tobytes().hex()


@dataclasses.dataclass(frozen=True)
class SAProcessSpec:
    """Problem statement for one recursion: dimension, drift, noise sampler
    (callable (rng, step, theta) -> row, or None for no noise), remainder
    schedule (callable n -> row, or None), start point, and optionally the
    known equilibrium."""

    dim: int
    drift: object
    theta0: np.ndarray
    noise: object = None
    remainder: object = None
    theta_star: object = None
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "theta0", _as_row(self.theta0, self.dim, "theta0"))
        if self.theta_star is not None:
            ts = _as_row(self.theta_star, self.dim, "theta_star")
            object.__setattr__(self, "theta_star", ts)
            hv = np.asarray(self.drift(ts), dtype=float)
            if np.linalg.norm(hv) > 1e-12:
                raise InvalidArgumentError(
                    f"drift at theta_star has norm {np.linalg.norm(hv):.3e}, "
                    "expected 0 within 1e-12")

    def digest(self):
        h = hashlib.sha256()
        parts = [
            str(self.dim),
            self.theta0.tobytes().hex(),
            "" if self.theta_star is None else self.theta_star.tobytes().hex(),
            self.label,
            _callable_tag(self.drift),
            _callable_tag(self.noise),
            _callable_tag(self.remainder),
        ]
        h.update("|".join(parts).encode())
        return h.hexdigest()


@dataclasses.dataclass(frozen=True)
class Trajectory:
    """Checkpointed path of one run; optionally carries every increment so
    the recursion can be replayed and checked bit for bit."""

    checkpoints: tuple
    seed: int
    spec_digest: str
    increments: object = None

    def __post_init__(self):
        ns = [n for n, _ in self.checkpoints]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise InvalidArgumentError("checkpoint indices must be strictly increasing")

    def values(self):
        return np.array([th for _, th in self.checkpoints])

    def indices(self):
        return np.array([n for n, _ in self.checkpoints], dtype=np.int64)


def _checkpoint_plan(plan, n_max):
    out = sorted({int(c) for c in plan})
    if out and (out[0] < 0 or out[-1] > n_max):
        raise InvalidArgumentError(
            f"checkpoints must lie in [0, {n_max}], got range [{out[0]}, {out[-1]}]")
    return out


def run_sa(spec, n_max, seed, checkpoint_plan, replicate=0, record_increments=False):
    """Iterate the recursion once, step by step.

    Deterministic given (spec, seed, replicate): noise comes from the frozen
    per-replicate stream. Raises a divergence error naming the first step
    index whose state is non-finite.
    """
    n_max = int(n_max)
    if n_max < 1:
        raise InvalidArgumentError(f"n_max must be >= 1, got {n_max}")
    plan = _checkpoint_plan(checkpoint_plan, n_max)
    rng = StreamRng(seed, replicate, "gaussian") if spec.noise is not None else None
    theta = spec.theta0.copy()
    zero = np.zeros(spec.dim)
    cps = []
    incs = [] if record_increments else None
    pi = 0
    if pi < len(plan) and plan[pi] == 0:
        cps.append((0, theta.copy()))
        pi += 1
    for k in range(n_max):
        np1 = k + 1.0
        hv = np.asarray(spec.drift(theta), dtype=float)
        dm = np.asarray(spec.noise(rng, k + 1, theta), dtype=float) if spec.noise else zero
        r = np.asarray(spec.remainder(k + 1), dtype=float) if spec.remainder else zero
        inc = dm + r
        theta = theta - hv / np1 + inc / np1
        if not np.all(np.isfinite(theta)):
            raise DivergenceError(
                f"state became non-finite at step {k + 1}", first_bad_index=k + 1)
        if record_increments:
            incs.append((dm.copy(), r.copy()))
        if pi < len(plan) and plan[pi] == k + 1:
            cps.append((k + 1, theta.copy()))
            pi += 1
    return Trajectory(checkpoints=tuple(cps), seed=int(seed),
                      spec_digest=spec.digest(), increments=incs)


def replay(spec, traj):
    """Re-apply the recursion from theta_0 using the recorded increments.

    Returns True when every checkpoint is reproduced bit-exactly; raises
    otherwise. The arithmetic mirrors run_sa operation for operation.
    """
    if traj.increments is None:
        raise InvalidArgumentError("trajectory was recorded without increments")
    theta = spec.theta0.copy()
    by_n = dict((n, th) for n, th in traj.checkpoints)
    if 0 in by_n and not np.array_equal(by_n[0], theta):
        raise InvalidArgumentError("checkpoint 0 does not match theta0")
    for k, (dm, r) in enumerate(traj.increments):
        np1 = k + 1.0
        hv = np.asarray(spec.drift(theta), dtype=float)
        inc = dm + r
        theta = theta - hv / np1 + inc / np1
        want = by_n.get(k + 1)
        if want is not None and not np.array_equal(want, theta):
            raise InvalidArgumentError(f"replay diverged from checkpoint at n={k + 1}")
    return True


def normalized_error(traj, theta_star, regime, nu, rho=None):
    """Apply the regime's scaling to theta_n - theta* at each checkpoint.

    Standard: sqrt(n); Critical: sqrt(n)/(log n)^{nu-1/2};
    Slow: n^rho/(log n)^{nu-1} (rho must be given).
    """
    if not traj.checkpoints:
        raise InvalidArgumentError("trajectory has no checkpoints")
    ts = np.asarray(theta_star, dtype=float)
    tag = regime.tag
    needs_log = tag in ("Critical", "Slow") and not (tag == "Slow" and nu == 1)
    out = []
    for n, th in traj.checkpoints:
        if n < 1 or (needs_log and n < 3):
            raise InvalidArgumentError(
                f"checkpoint n={n} is too small for the {tag} scaling")
        if tag == "Standard":
            f = np.sqrt(n)
        elif tag == "Critical":
            f = np.sqrt(n) / np.log(n) ** (nu - 0.5)
        elif tag == "Slow":
            if rho is None:
                raise InvalidArgumentError("slow-regime scaling needs rho")
            f = n ** rho / (np.log(n) ** (nu - 1) if nu > 1 else 1.0)
        else:
            raise InvalidArgumentError(f"unknown regime tag {tag!r}")
        out.append((n, f * (th - ts)))
    return out


# ==== deterministic mean recursion ====

def _mean_recursion_scalar(a, remainder, x0, n_max, plan, chunk=1 << 22):
    """Closed form E theta_n = P_n x0 + P_n sum_k r_k/(k P_k), chunked.

    Valid for 0 <= a < 1 so every factor (1 - a/k) stays positive.
    """
    out = []
    pi = 0
    if pi < len(plan) and plan[pi] == 0:
        out.append((0, np.array([x0])))
        pi += 1
    logP = 0.0
    S = 0.0  # sum of r_k / (k P_k)
    done = 0
    while done < n_max:
        hi = min(done + chunk, n_max)
        j = np.arange(done + 1, hi + 1, dtype=float)
        cl = logP + np.cumsum(np.log1p(-a / j))
        if remainder is not None:
            rk = np.asarray(remainder(j), dtype=float)
            terms = rk / (j * np.exp(cl))
            tcum = S + np.cumsum(terms)
        else:
            tcum = None
        while pi < len(plan) and plan[pi] <= hi:
            idx = plan[pi] - done - 1
            val = np.exp(cl[idx]) * (x0 + (tcum[idx] if tcum is not None else 0.0))
            out.append((plan[pi], np.array([val])))
            pi += 1
        logP = cl[-1]
        if tcum is not None:
            S = tcum[-1]
        done = hi
    return out


def exact_mean_recursion(A, remainder, theta0, n_max, checkpoints=None):
    """Mean path of the linear recursion:
    E theta_{n+1} = E theta_n (I - A/(n+1)) + r_{n+1}/(n+1).

    Returns [(n, E theta_n)] at the requested checkpoints (default: n_max
    only). The one-dimensional case with A[0,0] in [0, 1) is evaluated in
    vectorized chunks, so horizons up to 1e8 are practical; the remainder
    schedule must then accept an index array.
    """
    A = _check_square(A, "A").astype(float)
    d = A.shape[0]
    x = _as_row(theta0, d, "theta0")
    n_max = int(n_max)
    if n_max < 1:
        raise InvalidArgumentError(f"n_max must be >= 1, got {n_max}")
    plan = _checkpoint_plan(checkpoints if checkpoints is not None else [n_max], n_max)

    if d == 1 and 0.0 <= A[0, 0] < 1.0:
        return _mean_recursion_scalar(float(A[0, 0]), remainder, float(x[0]),
                                      n_max, plan)

    out = []
    pi = 0
    if pi < len(plan) and plan[pi] == 0:
        out.append((0, x.copy()))
        pi += 1
    eye = np.eye(d)
    for k in range(n_max):
        np1 = k + 1.0
        r = np.asarray(remainder(k + 1), dtype=float) if remainder is not None else 0.0
        x = x @ (eye - A / np1) + r / np1
        if pi < len(plan) and plan[pi] == k + 1:
            out.append((k + 1, x.copy()))
            pi += 1
    return out


# ==== closed-form linear engine ====

def _slot_structure(A, basis):
    """Transform basis for the linear engine: A = T J T^{-1} with J
    block-canonical. Returns (T, Tinv, lam per slot, link per slot)."""
    if basis is not None:
        blocks, Tinv = _snap_block_form(A, basis)
        T = np.asarray(basis, dtype=complex)
        d = A.shape[0]
        lam = np.empty(d, dtype=complex)
        link = np.zeros(d, dtype=bool)
        for b_lam, start, size in blocks:
            lam[start:start + size] = b_lam
            link[start + 1:start + size] = True
        return T, Tinv, lam, link
    profile = spectral_profile(A)
    if any(max(g.block_sizes) > 1 for g in profile.groups):
        raise ChainBasisRequiredError(
            "drift matrix is defective; supply a basis realizing its block form")
    w, V = np.linalg.eig(A.astype(float))
    T = V.astype(complex)
    return T, np.linalg.inv(T), w.astype(complex), np.zeros(A.shape[0], dtype=bool)


def _slot_chunk_path(lam_q, x_in, j, s):
    """x_t = x_{t-1} (1 - lam/j_t) + s_t in closed form over one chunk.

    An exact zero step factor (integer eigenvalue) makes the prefix
    products singular; the recursion restarts from s_t there, so the
    chunk splits at that index and each piece solves independently."""
    mfac = 1.0 - lam_q / j
    zeros = np.flatnonzero(mfac == 0.0)
    if zeros.size == 0:
        Pl = np.cumprod(mfac)
        return Pl[None, :] * (x_in[:, None] + np.cumsum(s / Pl[None, :], axis=1))
    t0 = int(zeros[0])
    path = np.empty_like(s)
    if t0 > 0:
        path[:, :t0] = _slot_chunk_path(lam_q, x_in, j[:t0], s[:, :t0])
    path[:, t0] = s[:, t0]
    if t0 + 1 < j.size:
        path[:, t0 + 1:] = _slot_chunk_path(
            lam_q, path[:, t0], j[t0 + 1:], s[:, t0 + 1:])
    return path


def linear_paths(A, theta0, n_max, seed, checkpoints, replicates=1,
                 gamma_root=None, basis=None, chunk=1 << 16):
    """Exact paths of theta_{k+1} = theta_k (I - A/(k+1)) + dM_{k+1}/(k+1)
    for a batch of replicates, without stepping through every state.

    In the coordinates phi = theta T the recursion decouples into scalar
    chains solved by prefix products and sums, one chunk at a time; each
    replicate consumes exactly the noise values the step engine would.
    Returns [(n, array of shape (R, d))] at the requested checkpoints.
    """
    A = _check_square(A, "A").astype(float)
    d = A.shape[0]
    x0 = _as_row(theta0, d, "theta0")
    n_max = int(n_max)
    if n_max < 1:
        raise InvalidArgumentError(f"n_max must be >= 1, got {n_max}")
    plan = [c for c in _checkpoint_plan(checkpoints, n_max) if c >= 1]
    if np.isscalar(replicates):
        repl = np.arange(int(replicates))
    else:
        repl = np.asarray(list(replicates), dtype=np.int64)
    R = repl.size

    # keep per-chunk working set near 256 MB; chunking is a deterministic
    # function of the call signature, so results stay reproducible
    chunk = min(int(chunk), max(1024, (1 << 28) // max(1, R * d * 16 * 4)))

    T, Tinv, lam, link = _slot_structure(A, basis)
    # an exact integer eigenvalue zeroes one step factor, which the solver
    # handles by restarting there; one that is merely close leaves a tiny
    # factor the prefix products cannot divide through
    for q in range(d):
        jr = lam[q].real
        rj = round(jr)
        near = abs(lam[q].imag) < 1e-9 and abs(jr - rj) < 1e-9 and 1 <= rj <= n_max
        exact = lam[q].imag == 0.0 and jr == rj
        if near and not exact:
            raise InvalidArgumentError(
                f"eigenvalue {lam[q]:.6g} is too close to the integer {rj} "
                "(step factor nearly zero); use the step engine")

    root = None
    m = 0
    if gamma_root is not None:
        root = np.atleast_2d(np.asarray(gamma_root, dtype=float))
        if root.shape[1] != d:
            raise InvalidArgumentError(
                f"gamma_root must have {d} columns, got {root.shape[1]}")
        m = root.shape[0]
        src = BlockSource(seed, repl, "gaussian")
        rootT = root.astype(complex) @ T  # (m, d) into transformed coords

    x = np.tile(x0.astype(complex) @ T, (R, 1))  # (R, d)
    out = []
    pi = 0
    done = 0
    while done < n_max:
        hi = min(done + chunk, n_max)
        width = hi - done
        j = np.arange(done + 1, hi + 1, dtype=float)
        if root is not None and m > 0:
            z = src.take(width * m).reshape(R, width, m)
            phi_src = (z.astype(complex) @ rootT) / j[None, :, None]
        else:
            phi_src = None

        x_new = np.empty_like(x)
        prev_path = None
        for q in range(d):
            s = phi_src[:, :, q].copy() if phi_src is not None else np.zeros((R, width), dtype=complex)
            if link[q]:
                prev_states = np.concatenate([x[:, q - 1][:, None], prev_path[:, :-1]], axis=1)
                s -= prev_states / j[None, :]
            path = _slot_chunk_path(lam[q], x[:, q], j, s)
            prev_path = path
            x_new[:, q] = path[:, -1]
            if q == 0:
                paths = [path]
            else:
                paths.append(path)
        while pi < len(plan) and plan[pi] <= hi:
            col = plan[pi] - done - 1
            phi = np.stack([p[:, col] for p in paths], axis=1)
            out.append((plan[pi], np.ascontiguousarray((phi @ Tinv).real)))
            pi += 1
        x = x_new
        done = hi
    return out
