"""Command line front end: configuration ingestion, certificates, reports.

Heavy imports live inside the command handlers so that the REEB_THREADS
cap can land in the environment before the numerics stack initializes its
thread pools.
"""

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

EXIT_CERTIFIED = 0
EXIT_ERROR = 1
EXIT_NOT_CERTIFIED = 2
EXIT_INCONCLUSIVE = 3

_COMMON_KEYS = {"family", "criteria", "seed", "tol", "budget", "out"}

_FAMILIES = {
    "revolution": {"required": {"c"}, "optional": set(),
                   "criteria": {"pinching", "Ksigma"},
                   "default_criteria": ["pinching"]},
    "ellipsoid": {"required": {"a"}, "optional": set(),
                  "criteria": {"convex", "kappa"},
                  "default_criteria": ["convex"]},
    "perturbed_ball": {"required": {"coeffs"}, "optional": {"tau_min"},
                       "criteria": {"convex"},
                       "default_criteria": ["convex"]},
    "hopf": {"required": set(), "optional": set(),
             "criteria": {"kappa"},
             "default_criteria": ["kappa"]},
}

_SAMPLING_CRITERIA = {"Ksigma", "kappa"}


class ConfigError(ValueError):
    pass


def _apply_thread_cap():
    cap = os.environ.get("REEB_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, cap)


def _load_config(path):
    raw = Path(path).read_bytes()
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    family = cfg.get("family")
    if family not in _FAMILIES:
        raise ConfigError(f"unknown family {family!r}; expected one of "
                          f"{sorted(_FAMILIES)}")
    schema = _FAMILIES[family]
    allowed = _COMMON_KEYS | schema["required"] | schema["optional"]
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    missing = schema["required"] - set(cfg)
    if missing:
        raise ConfigError(f"family {family!r} needs keys {sorted(missing)}")
    _validate_parameters(cfg)
    criteria = cfg.get("criteria", schema["default_criteria"])
    if (not isinstance(criteria, list) or not criteria
            or not all(isinstance(c, str) for c in criteria)):
        raise ConfigError("criteria must be a non-empty list of names")
    bad = [c for c in criteria if c not in schema["criteria"]]
    if bad:
        raise ConfigError(f"criteria {bad} not available for family "
                          f"{family!r}; choose from {sorted(schema['criteria'])}")
    cfg["criteria"] = criteria
    if "seed" in cfg and not isinstance(cfg["seed"], int):
        raise ConfigError("seed must be an integer")
    return cfg, hashlib.sha256(raw).hexdigest()


def _validate_parameters(cfg):
    family = cfg["family"]
    if family == "revolution":
        c = cfg["c"]
        if not isinstance(c, (int, float)) or not 0.0 < c:
            raise ConfigError("c must be a positive number")
    elif family == "ellipsoid":
        a = cfg["a"]
        if (not isinstance(a, list) or len(a) != 2
                or not all(isinstance(v, (int, float)) and v > 0 for v in a)):
            raise ConfigError("a must be a list of two positive numbers")
    elif family == "perturbed_ball":
        coeffs = cfg["coeffs"]
        if (not isinstance(coeffs, list) or len(coeffs) != 4
                or not all(isinstance(v, (int, float)) for v in coeffs)):
            raise ConfigError("coeffs must be a list of four numbers")
        tau = cfg.get("tau_min")
        if tau is not None and (not isinstance(tau, (int, float)) or tau <= 0):
            raise ConfigError("tau_min must be a positive number")


def _tool_version():
    import reebcert
    return reebcert.__version__


def _jsonable(obj):
    import numpy as np
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def _write_json(path, payload):
    text = json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n"
    Path(path).write_text(text)


def _fmt_cell(v):
    import numpy as np
    if isinstance(v, (bool, int, str)):
        return v
    if isinstance(v, np.integer):
        return int(v)
    return repr(float(v))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt_cell(v) for v in row])


def _certificate_payload(cert, seed, cfg_hash, artifacts):
    return {
        "criterion": cert.criterion,
        "inputs": cert.inputs,
        "seed": seed,
        "measured": cert.measured,
        "threshold": cert.threshold,
        "margin": cert.margin,
        "error_budget": cert.error_budget,
        "verdict": cert.verdict,
        "artifacts": artifacts,
        "config_sha256": cfg_hash,
        "tool_version": _tool_version(),
    }


def _build_metric(cfg):
    from reebcert import geometry2d as g2
    return g2.RevolutionMetric(cfg["c"])


def _build_body(cfg):
    from reebcert import convex4d as c4
    if cfg["family"] == "ellipsoid":
        return c4.Ellipsoid(*cfg["a"])
    return c4.PerturbedBall(cfg["coeffs"])


def _build_flow(cfg):
    from reebcert import sections_linking as sl
    family = cfg["family"]
    if family == "hopf":
        return sl.hopf_flow()
    if family == "ellipsoid":
        return sl.ellipsoid_flow(*cfg["a"])
    if family == "revolution":
        if cfg["c"] != 1.0:
            raise ConfigError("the lifted model flow is available for c = 1.0 "
                              "only; other c need the geometry audit instead")
        return sl.lifted_round_flow()
    raise ConfigError(f"no model flow for family {cfg['family']!r}")


def _need_seed(cfg, args, criterion):
    seed = args.seed if args.seed is not None else cfg.get("seed")
    if seed is None and criterion in _SAMPLING_CRITERIA:
        raise ConfigError(f"criterion {criterion!r} samples and needs a seed "
                          "(--seed or config key)")
    return seed


def _run_criterion(criterion, cfg, args):
    from reebcert import certify as ce
    seed = _need_seed(cfg, args, criterion)
    budget = args.budget if args.budget is not None else cfg.get("budget")
    if criterion == "pinching":
        return ce.certify_pinching(_build_metric(cfg)), seed
    if criterion == "Ksigma":
        metric = _build_metric(cfg)
        k_sigma = ce.sample_k_sigma(metric, budget=budget or 4096, seed=seed)
        tau = ce.revolution_tau_min(metric)
        return ce.certify_Ksigma(k_sigma, tau), seed
    if criterion == "convex":
        body = _build_body(cfg)
        kwargs = {"budget": budget} if budget else {}
        return ce.certify_convex(body, tau_min=cfg.get("tau_min"),
                                 **kwargs), seed
    if criterion == "kappa":
        from reebcert import sections_linking as sl
        flow = _build_flow(cfg)
        est = ce.estimate_kappa(flow, sl.DiskPage(flow),
                                budget=budget or 256, seed=seed)
        return ce.certify_kappa(est), seed
    raise ConfigError(f"unknown criterion {criterion!r}")


def _exit_for(verdicts):
    if any(v == "not-certified" for v in verdicts):
        return EXIT_NOT_CERTIFIED
    if any(v == "inconclusive" for v in verdicts):
        return EXIT_INCONCLUSIVE
    return EXIT_CERTIFIED


def _out_dir(cfg, args):
    out = Path(args.out if args.out is not None else cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_certify(args):
    cfg, cfg_hash = _load_config(args.config)
    out = _out_dir(cfg, args)
    verdicts = []
    for criterion in cfg["criteria"]:
        cert, seed = _run_criterion(criterion, cfg, args)
        payload = _certificate_payload(cert, seed, cfg_hash, [])
        path = out / f"certificate_{criterion}.json"
        _write_json(path, payload)
        verdicts.append(cert.verdict)
        print(f"{criterion}: {cert.verdict} (margin {cert.margin:+.6f}, "
              f"budget {cert.error_budget:.2e}) -> {path}")
    return _exit_for(verdicts)


def _render_audit_plot(report, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    ss = [row["s"] for row in report["grid"]]
    ds = [row["ds"] for row in report["grid"]]
    L = report["L_hat"]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.scatter(ss, ds, s=14, label="canonical displacement")
    ax.axhline(2 * L / 3, color="tab:red", ls="--", lw=1, label="window")
    ax.axhline(3 * L / 2, color="tab:red", ls="--", lw=1)
    ax.axhline(L - report["displacement_radius"], color="tab:gray", ls=":",
               lw=1, label="corollary band")
    ax.axhline(L + report["displacement_radius"], color="tab:gray", ls=":",
               lw=1)
    ax.set_xlabel("s")
    ax.set_ylabel("displacement")
    ax.set_title(f"return displacements, c = {report['c']}")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_audit(args):
    from reebcert import certify as ce
    cfg, cfg_hash = _load_config(args.config)
    if cfg["family"] != "revolution":
        raise ConfigError("the geometry audit needs a revolution metric")
    out = _out_dir(cfg, args)
    metric = _build_metric(cfg)
    kwargs = {}
    if args.tol is not None:
        kwargs["tol"] = args.tol
    seed = args.seed if args.seed is not None else cfg.get("seed")
    if seed is not None:
        kwargs["seed"] = seed
    report = ce.audit_geometry(metric, **kwargs)

    returns_csv = out / "returns.csv"
    _write_csv(returns_csv,
               ["s", "theta", "s_prime", "theta_prime", "tau", "ds"],
               [(r["s"], r["theta"], r["s1"], r["theta1"], r["tau"], r["ds"])
                for r in report["grid"]])
    linking_csv = out / "linking.csv"
    _write_csv(linking_csv,
               ["pair", "gauss_raw", "gauss_int", "crossing_count"],
               [(i, r["gauss_raw"], r["gauss_int"], r["M"])
                for i, r in enumerate(report["bookkeeping"])])
    plot_png = out / "audit.png"
    _render_audit_plot(report, plot_png)

    payload = dict(report)
    payload["artifacts"] = [returns_csv.name, linking_csv.name, plot_png.name]
    payload["config_sha256"] = cfg_hash
    payload["tool_version"] = _tool_version()
    path = out / "audit.json"
    _write_json(path, payload)
    status = "ok" if report["all_ok"] else \
        f"VIOLATIONS: {', '.join(report['violations'])}"
    print(f"audit c={report['c']}: {status} -> {path}")
    return EXIT_CERTIFIED if report["all_ok"] else EXIT_NOT_CERTIFIED


def _render_kappa_plot(est, path):
    import numpy as np
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(est.t_grid, est.infima, "o-", label="sampled infimum")
    ax.axhline(2 * np.pi, color="tab:red", ls="--", lw=1, label="threshold")
    ax.set_xlabel("T")
    ax.set_ylabel("twist per link")
    ax.set_title(f"stabilization {est.stabilization:.2e}")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_kappa(args):
    from reebcert import certify as ce
    from reebcert import sections_linking as sl
    cfg, cfg_hash = _load_config(args.config)
    out = _out_dir(cfg, args)
    seed = _need_seed(cfg, args, "kappa")
    budget = args.budget if args.budget is not None else cfg.get("budget")
    flow = _build_flow(cfg)
    est = ce.estimate_kappa(flow, sl.DiskPage(flow), budget=budget or 256,
                            seed=seed)
    cert = ce.certify_kappa(est)

    per_t_csv = out / "kappa_per_T.csv"
    _write_csv(per_t_csv, ["T", "infimum"],
               list(zip(est.t_grid, est.infima)))
    plot_png = out / "kappa.png"
    _render_kappa_plot(est, plot_png)

    payload = _certificate_payload(cert, seed, cfg_hash,
                                   [per_t_csv.name, plot_png.name])
    path = out / "kappa.json"
    _write_json(path, payload)
    print(f"kappa: {est.kappa:.6f} ({est.kappa / 3.141592653589793:.4f} pi), "
          f"stabilization {est.stabilization:.2e}, verdict {cert.verdict} "
          f"-> {path}")
    return _exit_for([cert.verdict])


def cmd_delta_star(args):
    from reebcert import certify as ce
    x_star, d_star = ce.delta_star()
    residual = abs(ce.pinching_polynomial(x_star))
    print(f"x* = {x_star!r}")
    print(f"delta* = {d_star!r}")
    print(f"residual |P(x*)| = {residual:.3e}")
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "delta_star.json",
                    {"x_star": x_star, "delta_star": d_star,
                     "residual": residual, "tool_version": _tool_version()})
    return EXIT_CERTIFIED


def _add_common(sub, config_required=True):
    if config_required:
        sub.add_argument("--config", required=True,
                         help="JSON run configuration")
    sub.add_argument("--tol", type=float, default=None,
                     help="integration tolerance override")
    sub.add_argument("--seed", type=int, default=None,
                     help="sampling seed (mandatory for sampling runs)")
    sub.add_argument("--budget", type=int, default=None,
                     help="sample budget override")
    sub.add_argument("--out", default=None,
                     help="output directory (default: config key or cwd)")


def main(argv=None):
    _apply_thread_cap()
    parser = argparse.ArgumentParser(
        prog="reebcert",
        description="certificates and audits for right-handed Reeb flows")
    subs = parser.add_subparsers(dest="command", required=True)
    handlers = {}
    for name, fn, needs_config in (("certify", cmd_certify, True),
                                   ("audit", cmd_audit, True),
                                   ("kappa", cmd_kappa, True),
                                   ("delta-star", cmd_delta_star, False)):
        sub = subs.add_parser(name)
        _add_common(sub, config_required=needs_config)
        handlers[name] = fn
    args = parser.parse_args(argv)
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports all
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
