"""Command-line front end: structured configs in, canonical artifacts out.

Subcommands: analyze (limit analysis of the configured model), simulate
(recursion trajectories), urn / gauss / ode (their trajectories), verify
(Monte Carlo limit-law check), suite (the canonical showcase criteria).
Exit status 0 on success, 1 when a verification ran and failed, 2 for any
configuration problem.

Artifacts are byte-deterministic in (config, seed): reports embed the
config digest and tool version but never timestamps or host data. The
--threads flag is a scheduling hint and cannot change results.
"""

import argparse
import os
import sys

import numpy as np

from . import __version__
from .asymptotics import analyze as analyze_drift
from .config import load_config, validate_config
from .errors import ConfigError, UrnlabError
from .gauss import simulate_paths
from .ode import flow_identity_residual, integrate_flow
from .report import (emit_report, flow_csv, gauss_csv, matrix_csv,
                     provenance, trajectory_csv, urn_csv, write_text)
from .sa import run_sa
from .urn import run_urn, urn_asymptotics, urn_eigenstructure
from .verify import MCConfig, golden_suite, make_mc_report, mc_sample

_FORMAT_FLAG = {"json": ["json"], "csv": ["csv"], "both": ["json", "csv"]}


def _env_seed():
    raw = os.environ.get("URNLAB_SEED")
    if raw is None:
        return 0
    try:
        seed = int(raw.strip(), 10)
    except ValueError:
        raise ConfigError(
            f"URNLAB_SEED must be a nonnegative integer, got {raw!r}") from None
    if seed < 0:
        raise ConfigError(
            f"URNLAB_SEED must be a nonnegative integer, got {raw!r}")
    return seed


def _resolve(args):
    """Load the document and fold in the flag overrides.

    Seed priority: --seed, then a seed pinned in the file, then the
    URNLAB_SEED environment variable, then 0.
    """
    cfg = load_config(args.config) if args.config else validate_config({})
    if args.seed is not None:
        seed = args.seed
    elif "/run/seed" in cfg.explicit:
        seed = cfg.run["seed"]
    else:
        seed = _env_seed()
    cfg = cfg.with_seed(seed)
    if args.out is not None:
        cfg = cfg.with_output(dir=args.out)
    if args.format is not None:
        cfg = cfg.with_output(formats=_FORMAT_FLAG[args.format])
    return cfg


def _outdir(cfg):
    path = cfg.output["dir"]
    os.makedirs(path, exist_ok=True)
    return path


def _need_model(cfg, kinds, command):
    if cfg.model is None:
        raise ConfigError('missing required section "/model"', path="/model")
    kind = cfg.model["kind"]
    if kind not in kinds:
        raise ConfigError(
            f'command "{command}" needs a model of kind '
            f'{" or ".join(sorted(kinds))}, got "{kind}"', path="/model/kind")
    return kind


def _need_n(cfg):
    n = cfg.run["n"]
    if n is None:
        raise ConfigError('missing required key "/run/n"', path="/run/n")
    return n


def _emit(payload, path):
    emit_report(payload, "json", path)
    print(path)


def _write(path, text):
    write_text(path, text)
    print(path)


# ==== analyze ====

def _drift_report(A, Gamma, analysis):
    basis = (None if analysis["chain_basis"] is None
             else np.array(analysis["chain_basis"]))
    rep = analyze_drift(A, Gamma, rho_tol=analysis["rho_tol"],
                        chain_basis=basis)
    return rep, {
        "regime": rep.regime.tag.lower(),
        "scaling": rep.regime.scaling,
        "profile": rep.profile.to_dict(),
        "covariance": (None if rep.covariance is None
                       else rep.covariance.tolist()),
        "slow_descriptor": (None if rep.slow_descriptor is None
                            else rep.slow_descriptor.to_dict()),
        "as_rate_exponent": rep.as_rate_exponent,
    }


def _cmd_analyze(args):
    cfg = _resolve(args)
    kind = _need_model(cfg, {"sa", "urn", "gauss", "ode"}, "analyze")
    m = cfg.model
    d = m["d"]
    matrix = None
    if kind == "sa":
        if isinstance(m["drift"], dict):
            raise ConfigError('"/model/drift": limit analysis needs a linear '
                              "coefficient matrix", path="/model/drift")
        Gamma = (np.zeros((d, d)) if m["noise"] is None
                 else np.array(m["noise"]))
        rep, payload = _drift_report(np.array(m["drift"]), Gamma,
                                     cfg.analysis)
        payload["kind"] = "sa"
        matrix = rep.covariance
    elif kind == "gauss":
        rep, payload = _drift_report(np.array(m["H"]), np.array(m["gamma"]),
                                     cfg.analysis)
        payload["kind"] = "gauss"
        matrix = rep.covariance
    elif kind == "urn":
        rep = urn_asymptotics(cfg.build_model())
        payload = {
            "kind": "urn",
            "alpha": rep.alpha,
            "v": rep.v.tolist(),
            "u": rep.u.tolist(),
            "lambda_sec": rep.lambda_sec,
            "nu": rep.nu,
            "regime": rep.regime.tag.lower(),
            "scaling": rep.regime.scaling,
            "Dh_star": rep.Dh_star.tolist(),
            "Gamma": rep.Gamma.tolist(),
            "sigma_tilde": (None if rep.Sigma_tilde is None
                            else rep.Sigma_tilde.tolist()),
            "slow_descriptor": (None if rep.slow_descriptor is None
                                else rep.slow_descriptor.to_dict()),
        }
        matrix = rep.Sigma_tilde
    else:
        alpha, v, u, lambda_sec, nu = urn_eigenstructure(np.array(m["H"]))
        payload = {"kind": "ode", "alpha": alpha, "v": v.tolist(),
                   "u": u.tolist(), "lambda_sec": lambda_sec, "nu": nu}
    payload["provenance"] = provenance(cfg.digest(), cfg.run["seed"])
    out = _outdir(cfg)
    if "json" in cfg.output["formats"]:
        _emit(payload, os.path.join(out, "analyze.json"))
    if "csv" in cfg.output["formats"] and matrix is not None:
        path = os.path.join(out, "covariance.csv")
        emit_report(matrix, "csv", path)
        print(path)
    return 0


# ==== trajectory commands ====

def _cmd_simulate(args):
    cfg = _resolve(args)
    _need_model(cfg, {"sa"}, "simulate")
    n = _need_n(cfg)
    spec = cfg.build_model()
    plan = cfg.checkpoint_plan()
    seed = cfg.run["seed"]
    R = cfg.run["replicates"]
    out = _outdir(cfg)
    trajs = [run_sa(spec, n, seed, plan, replicate=r) for r in range(R)]
    files = []
    if "csv" in cfg.output["formats"]:
        for r, traj in enumerate(trajs):
            name = f"trajectory-{r}.csv"
            _write(os.path.join(out, name), trajectory_csv(traj))
            files.append(name)
    manifest = {
        "command": "simulate",
        "n": n,
        "replicates": R,
        "seed": seed,
        "checkpoints": plan,
        "model_digest": spec.digest(),
        "files": files,
        "provenance": provenance(cfg.digest(), seed),
    }
    if "json" in cfg.output["formats"]:
        manifest["trajectories"] = [
            {"replicate": r,
             "checkpoints": [[int(k), th.tolist()]
                             for k, th in traj.checkpoints]}
            for r, traj in enumerate(trajs)]
    _emit(manifest, os.path.join(out, "run.json"))
    return 0


def _cmd_urn(args):
    cfg = _resolve(args)
    _need_model(cfg, {"urn"}, "urn")
    n = _need_n(cfg)
    spec = cfg.build_model()
    plan = cfg.checkpoint_plan()
    seed = cfg.run["seed"]
    R = cfg.run["replicates"]
    out = _outdir(cfg)
    trajs = [run_urn(spec, n, seed, plan, replicate=r) for r in range(R)]
    files = []
    if "csv" in cfg.output["formats"]:
        for r, traj in enumerate(trajs):
            name = f"urn-{r}.csv"
            _write(os.path.join(out, name), urn_csv(traj))
            files.append(name)
    manifest = {
        "command": "urn",
        "n": n,
        "replicates": R,
        "seed": seed,
        "checkpoints": plan,
        "files": files,
        "provenance": provenance(cfg.digest(), seed),
    }
    if "json" in cfg.output["formats"]:
        manifest["trajectories"] = [
            {"replicate": r,
             "checkpoints": [st.to_dict() for st in traj.checkpoints]}
            for r, traj in enumerate(trajs)]
    _emit(manifest, os.path.join(out, "run.json"))
    return 0


def _cmd_gauss(args):
    cfg = _resolve(args)
    _need_model(cfg, {"gauss"}, "gauss")
    spec = cfg.build_model()
    seed = cfg.run["seed"]
    R = cfg.run["replicates"]
    out = _outdir(cfg)
    paths = simulate_paths(spec, seed, R)
    files = []
    if "csv" in cfg.output["formats"]:
        for r in range(R):
            name = f"gauss-{r}.csv"
            pairs = [(float(t), paths[r, k]) for k, t in enumerate(spec.grid)]
            _write(os.path.join(out, name), gauss_csv(pairs))
            files.append(name)
    manifest = {
        "command": "gauss",
        "grid": spec.grid.tolist(),
        "replicates": R,
        "seed": seed,
        "files": files,
        "provenance": provenance(cfg.digest(), seed),
    }
    if "json" in cfg.output["formats"]:
        manifest["paths"] = [
            {"replicate": r,
             "path": [[float(t), paths[r, k].tolist()]
                      for k, t in enumerate(spec.grid)]}
            for r in range(R)]
    _emit(manifest, os.path.join(out, "run.json"))
    return 0


def _cmd_ode(args):
    cfg = _resolve(args)
    _need_model(cfg, {"ode"}, "ode")
    n = _need_n(cfg)
    prob = cfg.build_model()
    seed = cfg.run["seed"]
    out = _outdir(cfg)
    states = integrate_flow(prob["theta0"], prob["H"], float(n),
                            tol=prob["tol"])
    files = []
    if "csv" in cfg.output["formats"]:
        _write(os.path.join(out, "flow.csv"), flow_csv(states))
        files.append("flow.csv")
    manifest = {
        "command": "ode",
        "s_max": float(n),
        "tol": prob["tol"],
        "steps": len(states),
        "identity_residual": flow_identity_residual(states, prob["theta0"],
                                                    prob["H"]),
        "final_theta": states[-1].theta.tolist(),
        "files": files,
        "provenance": provenance(cfg.digest(), seed),
    }
    if "json" in cfg.output["formats"]:
        manifest["states"] = [st.to_dict() for st in states]
    _emit(manifest, os.path.join(out, "run.json"))
    return 0


# ==== verification commands ====

def _cmd_verify(args):
    cfg = _resolve(args)
    kind = _need_model(cfg, {"sa", "urn"}, "verify")
    n = _need_n(cfg)
    seed = cfg.run["seed"]
    mc = MCConfig(replicates=cfg.run["replicates"], horizons=(n,),
                  seed=seed, parallelism=max(1, args.threads))
    spec = cfg.build_model()
    basis = None
    if kind == "sa":
        m = cfg.model
        if isinstance(m["drift"], dict):
            raise ConfigError('"/model/drift": verification needs a linear '
                              "coefficient matrix", path="/model/drift")
        d = m["d"]
        Gamma = (np.zeros((d, d)) if m["noise"] is None
                 else np.array(m["noise"]))
        rep, _ = _drift_report(np.array(m["drift"]), Gamma, cfg.analysis)
        predicted = rep.covariance
        basis = (None if cfg.analysis["chain_basis"] is None
                 else np.array(cfg.analysis["chain_basis"]))
    else:
        predicted = urn_asymptotics(spec).Sigma_tilde
    if predicted is None:
        raise ConfigError("the configured model is in the slow regime and "
                          "has no limit covariance to verify against",
                          path="/model")
    sample = mc_sample(spec, n, mc, basis=basis)
    tol = cfg.analysis["tolerances"]
    report = make_mc_report(sample, predicted,
                            rel_tol=tol["rel_frobenius"], p_min=tol["p_min"])
    payload = report.to_dict()
    payload["provenance"] = provenance(cfg.digest(), seed)
    out = _outdir(cfg)
    _emit(payload, os.path.join(out, "verify.json"))
    if "csv" in cfg.output["formats"]:
        path = os.path.join(out, "samples.csv")
        write_text(path, matrix_csv(sample.errors))
        print(path)
    if report.verdict["passed"]:
        return 0
    print(f"verify: failed (rel_frobenius {report.rel_frobenius:.4g}, "
          f"min p {report.verdict['min_p_value']:.4g})", file=sys.stderr)
    return 1


def _cmd_suite(args):
    cfg = _resolve(args)
    seed = cfg.run["seed"]
    R = (cfg.run["replicates"] if "/run/replicates" in cfg.explicit else 2000)
    if "/run/n" in cfg.explicit:
        n = cfg.run["n"]
        horizons = (max(1, n // 10), n) if n >= 10 else (n,)
    else:
        horizons = (10 ** 4, 10 ** 5)
    mc = MCConfig(replicates=R, horizons=horizons, seed=seed,
                  parallelism=max(1, args.threads))
    report = golden_suite(mc)
    payload = report.to_dict()
    payload["replicates"] = R
    payload["horizons"] = list(horizons)
    payload["provenance"] = provenance(cfg.digest(), seed)
    out = _outdir(cfg)
    _emit(payload, os.path.join(out, "suite.json"))
    if report.passed:
        return 0
    print(f"suite: {len(report.failures)} of {len(report.criteria)} criteria "
          f"failed: {', '.join(report.failures)}", file=sys.stderr)
    return 1


# ==== entry point ====

_COMMANDS = [
    ("analyze", _cmd_analyze, True,
     "limit analysis of the configured model"),
    ("simulate", _cmd_simulate, True,
     "run recursion trajectories to the configured horizon"),
    ("urn", _cmd_urn, True, "run urn composition trajectories"),
    ("gauss", _cmd_gauss, True,
     "sample the limiting Gaussian process on its grid"),
    ("ode", _cmd_ode, True, "integrate the mean flow"),
    ("verify", _cmd_verify, True,
     "Monte Carlo check of the predicted limit covariance"),
    ("suite", _cmd_suite, False,
     "grade the canonical showcase criteria"),
]


def _parser():
    p = argparse.ArgumentParser(
        prog="urnlab",
        description="Stochastic approximation and adaptive urn toolkit")
    p.add_argument("--version", action="version",
                   version=f"urnlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, handler, need_config, help_text in _COMMANDS:
        q = sub.add_parser(name, help=help_text)
        q.add_argument("--config", required=need_config, metavar="PATH",
                       help="JSON run-configuration document")
        q.add_argument("--out", metavar="DIR",
                       help="artifact directory (overrides output.dir)")
        q.add_argument("--seed", type=int,
                       help="seed override (wins over config and URNLAB_SEED)")
        q.add_argument("--threads", type=int, default=1, metavar="N",
                       help="worker hint; results never depend on it")
        q.add_argument("--format", choices=["json", "csv", "both"],
                       help="artifact formats (overrides output.formats)")
        q.set_defaults(handler=handler)
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"urnlab: config error: {exc}", file=sys.stderr)
        return 2
    except UrnlabError as exc:
        print(f"urnlab: error [{exc.code}]: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"urnlab: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
