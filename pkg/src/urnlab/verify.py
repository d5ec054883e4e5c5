"""Monte Carlo and single-path verification harness.

Empirical covariance of scaled errors against the predicted limit,
Kolmogorov-Smirnov normality per coordinate, dyadic-checkpoint convergence
with a fitted rate exponent, and phase fitting for complex-eigenvalue
rotation. Everything is deterministic given a seed: replicate r always
reads the same noise stream no matter how the work is scheduled.
"""

import dataclasses
import math

import numpy as np

from .asymptotics import classify_regime, spectral_profile
from .errors import InvalidArgumentError, NonConvergenceError
from .sa import (GaussianNoise, LinearDrift, SAProcessSpec,
                 exact_mean_recursion, linear_paths, run_sa)
from .urn import UrnSpec, DeterministicRule, run_urn, run_urn_batch, urn_asymptotics


@dataclasses.dataclass(frozen=True)
class MCConfig:
    replicates: int
    horizons: tuple
    seed: int
    parallelism: int = 1  # scheduling hint; never changes results

    def __post_init__(self):
        if self.replicates < 1:
            raise InvalidArgumentError("replicates must be >= 1")
        hs = tuple(int(h) for h in self.horizons)
        if not hs or any(b <= a for a, b in zip(hs, hs[1:])) or hs[0] < 1:
            raise InvalidArgumentError("horizons must be increasing and >= 1")
        object.__setattr__(self, "horizons", hs)
        if self.parallelism < 1:
            raise InvalidArgumentError("parallelism must be >= 1")


@dataclasses.dataclass(frozen=True)
class MCSample:
    """Scaled errors at one horizon with divergence accounting."""

    horizon: int
    errors: np.ndarray  # (kept, d)
    excluded: int
    replicates: int

    def __post_init__(self):
        if self.errors.shape[0] + self.excluded != self.replicates:
            raise InvalidArgumentError("kept + excluded must equal replicates")


@dataclasses.dataclass(frozen=True)
class MCReport:
    horizon: int
    empirical_mean: np.ndarray
    empirical_cov: np.ndarray
    predicted_cov: np.ndarray
    rel_frobenius: float
    ks_results: tuple
    verdict: dict

    def to_dict(self):
        return {
            "horizon": self.horizon,
            "empirical_mean": self.empirical_mean.tolist(),
            "empirical_cov": self.empirical_cov.tolist(),
            "predicted_cov": self.predicted_cov.tolist(),
            "rel_frobenius": self.rel_frobenius,
            "ks_results": list(self.ks_results),
            "verdict": self.verdict,
        }


@dataclasses.dataclass(frozen=True)
class RateFit:
    checkpoints: tuple
    fitted_exponent: object
    cauchy_gaps: tuple
    converged: bool
    tolerance: float

    def to_dict(self):
        return {
            "checkpoints": [[int(n), np.asarray(x).tolist()]
                            for n, x in self.checkpoints],
            "fitted_exponent": self.fitted_exponent,
            "cauchy_gaps": list(self.cauchy_gaps),
            "converged": self.converged,
            "tolerance": self.tolerance,
        }


def _scale_factor(n, regime_tag, nu, rho):
    ln = math.log(n)
    if regime_tag == "Standard":
        return math.sqrt(n)
    if regime_tag == "Critical":
        return math.sqrt(n) / ln ** (nu - 0.5)
    if rho is None:
        raise InvalidArgumentError("slow regime scaling needs rho")
    return n ** rho / ln ** (nu - 1)


def _resolve_sa_regime(model, regime, nu, rho):
    if regime is None:
        if not isinstance(model.drift, LinearDrift):
            raise InvalidArgumentError(
                "regime must be supplied for non-linear drifts")
        profile = spectral_profile(model.drift.matrix)
        regime = classify_regime(profile)
        return regime.tag, profile.nu, profile.rho
    tag = getattr(regime, "tag", regime)
    return tag, (1 if nu is None else nu), rho


def mc_sample(model, horizon, config, regime=None, nu=None, rho=None,
              basis=None):
    """Scaled errors over config.replicates trajectories at one horizon.

    Linear drifts with Gaussian noise run through the closed-form batch
    engine (basis is forwarded there for defective drift matrices); urns
    with fixed addition matrices run through the lockstep urn engine;
    everything else steps replicates one by one. Divergent replicates are
    dropped and counted; more than 1% of them is a failure.
    """
    horizon = int(horizon)
    R = config.replicates
    if isinstance(model, UrnSpec):
        rep = urn_asymptotics(model)
        star = np.concatenate([rep.v, rep.v])
        tag = rep.regime.tag
        nu_ = rep.nu
        rho_ = None if rep.lambda_sec is None else 1.0 - rep.lambda_sec
        if isinstance(model.adding_rule, DeterministicRule):
            (_, Y, N), = run_urn_batch(model, horizon, config.seed,
                                       [horizon], R)
            theta = np.hstack([Y, N]) / horizon
        else:
            theta = np.empty((R, 2 * model.d))
            for r in range(R):
                st = run_urn(model, horizon, config.seed, [horizon],
                             replicate=r).checkpoints[-1]
                theta[r] = np.concatenate([st.Y, st.N]) / horizon
    elif isinstance(model, SAProcessSpec):
        tag, nu_, rho_ = _resolve_sa_regime(model, regime, nu, rho)
        star = model.theta_star
        if star is None:
            if not isinstance(model.drift, LinearDrift):
                raise InvalidArgumentError("model needs theta_star")
            star = np.zeros(model.dim)
        fast = (isinstance(model.drift, LinearDrift)
                and model.remainder is None
                and (model.noise is None or isinstance(model.noise, GaussianNoise)))
        if fast:
            root = None if model.noise is None else model.noise.root
            try:
                (_, theta), = linear_paths(model.drift.matrix, model.theta0,
                                           horizon, config.seed, [horizon],
                                           replicates=R, gamma_root=root,
                                           basis=basis)
            except InvalidArgumentError:
                fast = False  # near-integer eigenvalue; step through instead
        if not fast:
            theta = np.empty((R, model.dim))
            for r in range(R):
                try:
                    traj = run_sa(model, horizon, config.seed, [horizon],
                                  replicate=r)
                    theta[r] = traj.checkpoints[-1][1]
                except Exception:
                    theta[r] = np.nan
    else:
        raise InvalidArgumentError(f"unsupported model type {type(model).__name__}")

    good = np.all(np.isfinite(theta), axis=1)
    excluded = int(R - good.sum())
    if excluded > 0.01 * R:
        raise NonConvergenceError(
            f"{excluded} of {R} replicates diverged at horizon {horizon}")
    errors = (theta[good] - star) * _scale_factor(horizon, tag, nu_, rho_)
    return MCSample(horizon=horizon, errors=errors, excluded=excluded,
                    replicates=R)


def compare_covariance(emp, pred):
    """|emp - pred|_F / max(|pred|_F, 1e-12)."""
    emp = np.asarray(emp, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if emp.shape != pred.shape:
        raise InvalidArgumentError(
            f"shape mismatch: {emp.shape} vs {pred.shape}")
    return float(np.linalg.norm(emp - pred)
                 / max(np.linalg.norm(pred), 1e-12))


def _normal_cdf(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def _kolmogorov_pvalue(t, terms=120):
    """P(sup |B| > t) from the Kolmogorov distribution.

    The alternating series converges fast for t away from 0; for small t
    the theta-function form of the CDF is summed instead.
    """
    if t <= 0.0:
        return 1.0
    if t < 0.3:
        cdf = 0.0
        for k in range(1, terms + 1):
            cdf += math.exp(-((2 * k - 1) ** 2) * math.pi ** 2 / (8.0 * t * t))
        cdf *= math.sqrt(2.0 * math.pi) / t
        return min(1.0, max(0.0, 1.0 - cdf))
    s = 0.0
    for k in range(1, terms + 1):
        s += (-1.0) ** (k - 1) * math.exp(-2.0 * k * k * t * t)
    return min(1.0, max(0.0, 2.0 * s))


def ks_normal(samples, mu, sigma2):
    """One-sample Kolmogorov-Smirnov statistic and asymptotic p-value
    against N(mu, sigma2)."""
    x = np.sort(np.asarray(samples, dtype=float).reshape(-1))
    n = x.size
    if n == 0:
        raise InvalidArgumentError("samples must be nonempty")
    if sigma2 <= 0.0:
        raise InvalidArgumentError(f"sigma2 must be positive, got {sigma2}")
    sd = math.sqrt(sigma2)
    stat = 0.0
    for i in range(n):
        F = _normal_cdf((x[i] - mu) / sd)
        stat = max(stat, F - i / n, (i + 1) / n - F)
    return stat, _kolmogorov_pvalue(math.sqrt(n) * stat)


def make_mc_report(sample, predicted_cov, rel_tol=0.15, p_min=0.005):
    """Aggregate an MCSample against the predicted limit covariance."""
    X = sample.errors
    predicted_cov = np.asarray(predicted_cov, dtype=float)
    mean = X.mean(axis=0)
    C = X - mean
    emp = C.T @ C / max(X.shape[0] - 1, 1)
    emp = 0.5 * (emp + emp.T)
    rel = compare_covariance(emp, predicted_cov)
    ks = []
    worst_p = 1.0
    for j in range(X.shape[1]):
        s2 = float(predicted_cov[j, j])
        if s2 <= 1e-12:
            ks.append({"coordinate": j, "statistic": None, "p_value": None})
            continue
        stat, p = ks_normal(X[:, j], 0.0, s2)
        worst_p = min(worst_p, p)
        ks.append({"coordinate": j, "statistic": stat, "p_value": p})
    verdict = {
        "passed": bool(rel <= rel_tol and worst_p >= p_min),
        "rel_tol": rel_tol,
        "p_min": p_min,
        "rel_frobenius": rel,
        "min_p_value": worst_p,
        "excluded": sample.excluded,
        "note": "weak-convergence check with deterministic noise covariance",
    }
    return MCReport(horizon=sample.horizon, empirical_mean=mean,
                    empirical_cov=emp, predicted_cov=predicted_cov,
                    rel_frobenius=rel, ks_results=tuple(ks), verdict=verdict)


def path_convergence(checkpoints, tol=0.05, relative=False):
    """RateFit over dyadic checkpoints (each n doubling the last).

    Convergence means the final gap is inside the tolerance and the gap
    sequence is headed down (last below first, or negative fitted slope);
    single noisy bumps do not disqualify a path.
    """
    pts = [(int(n), np.asarray(x, dtype=float).reshape(-1))
           for n, x in checkpoints]
    if len(pts) < 4:
        raise InvalidArgumentError("need at least 4 dyadic checkpoints")
    for (a, _), (b, _) in zip(pts, pts[1:]):
        if b != 2 * a:
            raise InvalidArgumentError(
                f"checkpoints must double: {a} followed by {b}")
    gaps = []
    for (_, xa), (nb, xb) in zip(pts, pts[1:]):
        g = float(np.linalg.norm(xb - xa))
        if relative:
            g /= max(float(np.linalg.norm(xb)), 1e-12)
        gaps.append(g)

    ns = np.array([n for n, _ in pts], dtype=float)
    norms = np.array([np.linalg.norm(x) for _, x in pts])
    pos = norms > 0.0
    exponent = None
    if pos.sum() >= 2:
        exponent = float(np.polyfit(np.log(ns[pos]), np.log(norms[pos]), 1)[0])

    gp = np.array(gaps)
    nz = gp > 0.0
    slope = -math.inf
    if nz.sum() >= 2:
        slope = float(np.polyfit(np.log(ns[1:][nz]), np.log(gp[nz]), 1)[0])
    headed_down = gaps[-1] < gaps[0] or not nz.any() or slope < 0.0
    converged = bool(gaps[-1] <= tol and headed_down)
    return RateFit(checkpoints=tuple(pts), fitted_exponent=exponent,
                   cauchy_gaps=tuple(gaps), converged=converged, tolerance=tol)


def rotation_fit(checkpoints, lambda_im):
    """Least squares of x_n on sqrt(2) cos(lambda_im log n) and
    sqrt(2) sin(lambda_im log n); the residual trend over three index
    windows shows whether the phase model explains the tail."""
    ns = np.array([float(n) for n, _ in checkpoints])
    xs = np.array([float(x) for _, x in checkpoints])
    if ns.size < 8:
        raise InvalidArgumentError("need at least 8 checkpoints")
    if np.any(np.diff(ns) <= 0.0):
        raise InvalidArgumentError("checkpoints must be increasing")
    if math.log10(ns[-1] / ns[0]) < 3.0:
        raise InvalidArgumentError("checkpoints must span at least 3 decades")
    ln = np.log(ns)
    design = np.column_stack([np.sqrt(2.0) * np.cos(lambda_im * ln),
                              np.sqrt(2.0) * np.sin(lambda_im * ln)])
    if np.linalg.matrix_rank(design) < 2:
        raise InvalidArgumentError(
            "degenerate design: phase regressors are not independent")
    coef, _, _, _ = np.linalg.lstsq(design, xs, rcond=None)
    resid = xs - design @ coef
    thirds = np.array_split(np.arange(ns.size), 3)
    trend = [float(np.sqrt(np.mean(resid[idx] ** 2))) for idx in thirds]
    return {"xi1": float(coef[0]), "xi2": float(coef[1]),
            "residual_trend": trend, "residuals": resid.tolist()}


# ==== showcase suite ====

@dataclasses.dataclass(frozen=True)
class SuiteReport:
    """Outcome of the canonical showcase run: one graded entry per
    criterion, an overall verdict, and the names of any failures."""

    criteria: tuple
    passed: bool
    failures: tuple
    note: str

    def to_dict(self):
        return {
            "criteria": [dict(c) for c in self.criteria],
            "passed": self.passed,
            "failures": list(self.failures),
            "note": self.note,
        }


def golden_suite(config):
    """Run the four showcase recursions and grade their documented
    behaviors.

    Monte Carlo effort (replicates, horizons, seed) comes from config; the
    deterministic long-horizon checks run at their pinned scales (single
    paths to 2^22, exact means to 1e8, the damped decay to 1e7). The report
    names every failing criterion.
    """
    from .golden import (JORDAN_CHAIN_BASIS, decay_spec, jordan_chain_spec,
                         remainder_drive_spec, rotation_spec,
                         scalar_decay_path)

    horizons = config.horizons
    h_last = horizons[-1]
    criteria = []

    def grade(name, passed, **details):
        criteria.append({"name": name, "passed": bool(passed),
                         "details": details})

    # defective critical drift: the two coordinates carry different log
    # powers, so each gets its own scaling before the variance check
    spec = jordan_chain_spec(0.5)
    pred = np.array([[0.0, 0.0], [0.0, 1.0 / 3.0]])
    var_first = var_second = None
    ratios = []
    report = None
    for h in horizons:
        s = mc_sample(spec, h, config, basis=JORDAN_CHAIN_BASIS)
        X = s.errors
        var_first = float(np.var(X[:, 0] * math.log(h), ddof=1))
        var_second = float(np.var(X[:, 1], ddof=1))
        ratios.append(3.0 * var_second)
        report = make_mc_report(s, pred, rel_tol=0.25, p_min=0.0)
    trend_ok = len(ratios) < 2 or abs(ratios[-1] - 1.0) <= abs(ratios[-2] - 1.0)
    grade("jordan-critical-variance",
          abs(var_first - 1.0) <= 0.15
          and abs(var_second - 1.0 / 3.0) <= 0.25 / 3.0 and trend_ok,
          horizon=h_last, var_first=var_first, var_second=var_second,
          scaled_second_ratios=ratios, report=report.to_dict())

    # same drift below the critical line: scaled path settles on a random
    # limit, so dyadic gaps shrink while independent streams disagree
    spec_slow = jordan_chain_spec(0.3)
    n_path = 1 << 22
    root = spec_slow.noise.root
    dyadic = [1 << k for k in range(10, 23)]
    pts = linear_paths(spec_slow.drift.matrix, spec_slow.theta0, n_path,
                       config.seed, dyadic, replicates=[0], gamma_root=root,
                       basis=JORDAN_CHAIN_BASIS)
    fit_first = path_convergence(
        [(n, [n ** 0.3 * x[0, 0]]) for n, x in pts], tol=0.05)
    fit_second = path_convergence(
        [(n, [n ** 0.3 / math.log(n) * x[0, 1]]) for n, x in pts], tol=0.05)
    (_, finals), = linear_paths(spec_slow.drift.matrix, spec_slow.theta0,
                                n_path, config.seed, [n_path], replicates=20,
                                gamma_root=root, basis=JORDAN_CHAIN_BASIS)
    spread = float(np.var(n_path ** 0.3 * finals[:, 0], ddof=1))
    grade("jordan-slow-path",
          fit_first.converged and fit_second.converged and spread > 0.0,
          final_gaps=[fit_first.cauchy_gaps[-1], fit_second.cauchy_gaps[-1]],
          stream_variance=spread,
          rate_fits=[fit_first.to_dict(), fit_second.to_dict()])

    # complex pair: no normalizing constant exists, so grade the phase fit
    # and boundedness of the scaled path instead of a limit value
    spec_rot = rotation_spec(0.3)
    pts = linear_paths(spec_rot.drift.matrix, spec_rot.theta0, n_path,
                       config.seed, [1 << k for k in range(7, 23)],
                       replicates=[0], gamma_root=spec_rot.noise.root)
    scaled = [(n, n ** 0.3 * x[0]) for n, x in pts]
    fit = rotation_fit([(n, v[0]) for n, v in scaled], 0.3)
    trend = fit["residual_trend"]
    norms = [float(np.linalg.norm(v)) for _, v in scaled]
    ratio_bound = max(norms) / float(np.median(norms))
    grade("rotation-bounded-residual",
          trend[0] > trend[1] > trend[2] and ratio_bound <= 10.0,
          residual_trend=trend, max_over_median=ratio_bound,
          xi=[fit["xi1"], fit["xi2"]])

    # noise-free decay, clean power law: n^rho theta_n has settled by 1e6
    ms = exact_mean_recursion([[0.5]], None, decay_spec(0.5).theta0, 10 ** 7,
                              checkpoints=[10 ** 6, 10 ** 7])
    vals = [n ** 0.5 * float(x[0]) for n, x in ms]
    ratio = vals[1] / vals[0]
    grade("decay-pure-rate", 0.99 <= ratio <= 1.01,
          ratio=ratio, scaled_values=vals)

    # same drift slope with the log-log damping: the slowly varying factor
    # must show up in both decade trends
    damped = decay_spec(0.5, damped=True)
    cps = scalar_decay_path(damped, 10 ** 7, [10 ** k for k in range(4, 8)])
    drop_series = [n ** 0.45 * th for n, th in cps]
    rise_series = [n ** 0.5 * th / math.log(n) for n, th in cps]
    drop_ok = all(b <= 0.9 * a for a, b in zip(drop_series, drop_series[1:]))
    rise_ok = all(b > a for a, b in zip(rise_series, rise_series[1:]))
    grade("decay-damped-rates", drop_ok and rise_ok,
          drop_series=drop_series, rise_series=rise_series,
          drop_ok=drop_ok, rise_ok=rise_ok)

    # deterministic remainders at the critical slope: exact means
    decades = [10 ** k for k in range(4, 9)]
    spec_r = remainder_drive_spec("inv-sqrt-log")
    ms = exact_mean_recursion(spec_r.drift.matrix, spec_r.remainder,
                              spec_r.theta0, decades[-1], checkpoints=decades)
    n_f, x_f = ms[-1]
    mean_ratio = float(x_f[0]) / (2.0 * math.sqrt(math.log(n_f) / n_f))
    grade("remainder-mean-sqrt-log", 0.9 <= mean_ratio <= 1.05,
          ratio=mean_ratio, horizon=n_f)

    spec_ll = remainder_drive_spec("inv-sqrt-loglog")
    ms = exact_mean_recursion(spec_ll.drift.matrix, spec_ll.remainder,
                              spec_ll.theta0, decades[-1], checkpoints=decades)
    series = [math.sqrt(n / math.log(n)) * float(x[0]) for n, x in ms]
    grade("remainder-mean-loglog",
          all(b > a for a, b in zip(series, series[1:])),
          scaled_means=series)

    # no remainder: the scaled sample should pass a normality check
    s = mc_sample(remainder_drive_spec("zero"), h_last, config)
    stat, p = ks_normal(s.errors[:, 0], 0.0, 1.0)
    rep = make_mc_report(s, np.array([[1.0]]), rel_tol=0.15, p_min=0.01)
    grade("remainder-zero-normality", p > 0.01,
          ks_statistic=stat, p_value=p, report=rep.to_dict())

    failures = tuple(c["name"] for c in criteria if not c["passed"])
    return SuiteReport(
        criteria=tuple(criteria), passed=not failures, failures=failures,
        note="weak-convergence check with deterministic noise covariance")
