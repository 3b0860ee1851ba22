"""Command-line front end.

    bulksurf <command> [--config FILE] [--key value ...]

Config files hold ``key = value`` lines (``#`` starts a comment); flags
override the file.  Each run writes ``<out>.csv`` and ``<out>.json``.

Exit codes: 0 success, 1 configuration error, 2 solver error, 3 a check-style
command whose verdict failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BulkSurfError, ConfigError, ConfigTypeError, MissingKey, UnknownKey

log = logging.getLogger("bulksurf")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERDICT = 0, 1, 2, 3
REQUIRED = object()


# ---------------------------------------------------------------- parameter types


def _int(lo=None):
    def conv(s):
        v = int(s)
        if lo is not None and v < lo:
            raise ValueError(f"must be >= {lo}")
        return v

    conv.__name__ = "int"
    return conv


def _float(positive=False):
    def conv(s):
        v = float(s)
        if not math.isfinite(v):
            raise ValueError("must be finite")
        if positive and v <= 0:
            raise ValueError("must be positive")
        return v

    conv.__name__ = "float"
    return conv


def _choice(*options):
    def conv(s):
        if s not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return s

    conv.__name__ = "choice"
    return conv


def _float_list(s):
    vals = [float(x) for x in str(s).replace(" ", "").split(",") if x]
    if not vals or not all(math.isfinite(v) for v in vals):
        raise ValueError("must be a comma-separated list of finite numbers")
    return vals


def _int_list(s):
    vals = [int(x) for x in str(s).replace(" ", "").split(",") if x]
    if not vals or min(vals) < 1:
        raise ValueError("must be a comma-separated list of positive integers")
    return vals


def _seed(s):
    v = int(s)
    if not 0 <= v < 2**64:
        raise ValueError("must fit in 64 unsigned bits")
    return v


_COUPLING = {"c_i": (_float(), 0.0), "c_b": (_float(), 0.0)}
_GRID_N = {"grid_n": (_int(64), 4096)}

SCHEMA = {
    "eigen-ball": {"d": (_int(2), REQUIRED), **_COUPLING, "R": (_float(True), 1.0), **_GRID_N},
    "eigen-fem": {
        **_COUPLING,
        "domain": (_choice("disk", "rectangle"), "disk"),
        "h": (_float(True), 0.02),
        "a": (_float(True), 1.0),
        "b": (_float(True), 1.0),
        "tol": (_float(True), 1e-2),
    },
    "hessian": {"d": (_int(2), REQUIRED), **_COUPLING, "k_max": (_int(1), 10), **_GRID_N},
    "hessian-fd": {
        **_COUPLING,
        "k_list": (_int_list, [1, 2, 3]),
        "t": (_float(True), 1e-2),
        "h": (_float(True), 0.02),
        "profile": (_choice("quintic", "smooth"), "quintic"),
        "rel_tol": (_float(True), 0.05),
    },
    "regime-scan": {"d": (_int(2), REQUIRED), **_COUPLING, "k_max": (_int(2), 60), **_GRID_N},
    "talenti": {
        "kind": (_choice("robin", "dirichlet", "coupled"), "robin"),
        "trials": (_int(1), 50),
        "seed": (_seed, 0),
        "n_r": (_int(32), 96),
        "m": (_int(32), 128),
        "robin_beta": (_float(True), 1.0),
        "tol": (_float(True), 1e-8),
    },
    "nonexistence": {
        "c_i": (_float(), 1.0),
        "c_b": (_float(), 0.0),
        "aspects": (_float_list, [1.0, 4.0, 16.0, 64.0]),
        "h": (_float(True), 0.05),
        "slack": (_float(True), 1e-2),
        "ratio": (_float(True), 0.25),
    },
    "fk-check": {
        "trials": (_int(1), 20),
        "seed": (_seed, 0),
        "n_r": (_int(32), 128),
        "m": (_int(32), 128),
        "f_max": (_float(True), 5.0),
        "g_max": (_float(True), 5.0),
        "tol": (_float(True), 1e-6),
    },
    "limit-gap": {
        "d": (_int(2), 2),
        "c_i_list": (_float_list, [-1.0, -5.0, -20.0, -80.0, -200.0]),
        **_GRID_N,
        "rel_tol": (_float(True), 1e-2),
    },
}
COMMON = {"out": (str, None)}


@dataclass
class RunConfig:
    command: str
    parameters: dict = field(default_factory=dict)

    @property
    def out(self) -> Path:
        return Path(self.parameters.get("out") or self.command)


def _read_config_file(path) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def _flag_pairs(tokens) -> dict:
    out = {}
    it = iter(tokens)
    for tok in it:
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            try:
                value = next(it)
            except StopIteration:
                raise ConfigTypeError(f"flag --{key} needs a value", key) from None
        out[key] = value
    return out


def parse_config(argv, config_file=None) -> RunConfig:
    """Build a validated RunConfig from ``argv`` (without the program name)."""
    parser = argparse.ArgumentParser(prog="bulksurf", add_help=True, allow_abbrev=False)
    parser.add_argument("command", choices=sorted(SCHEMA))
    parser.add_argument("--config", default=None)
    args, rest = parser.parse_known_args(list(argv))
    config_file = args.config or config_file
    raw = _read_config_file(config_file) if config_file else {}
    raw.update(_flag_pairs(rest))
    schema = {**SCHEMA[args.command], **COMMON}
    params = {}
    for key, value in raw.items():
        if key not in schema:
            raise UnknownKey(f"unknown key '{key}' for command {args.command}", key)
        conv, _ = schema[key]
        try:
            params[key] = conv(value)
        except (TypeError, ValueError) as exc:
            raise ConfigTypeError(f"bad value {value!r} for key '{key}': {exc}", key) from None
    for key, (_, default) in schema.items():
        if key in params:
            continue
        if default is REQUIRED:
            raise MissingKey(f"missing required key '{key}' for command {args.command}", key)
        params[key] = default
    return RunConfig(args.command, params)


# ---------------------------------------------------------------- commands


def _cmd_eigen_ball(p):
    from .ball_radial import solve_principal_ball

    eig = solve_principal_ball(p["d"], p["R"], p["c_i"], p["c_b"], p["grid_n"])
    rows = [{"r": r, "u": u, "du": du} for r, u, du in zip(eig.r, eig.u, eig.du)]
    head = {
        "lambda": eig.lam,
        "lambda_bar": eig.lambda_bar,
        "lambda_tilde": eig.lambda_tilde,
        "v": eig.v,
        "u_at_R": eig.u_at_R,
        "du_at_R": eig.du_at_R,
        "residual": eig.residual,
    }
    return rows, head, {}


def _cmd_eigen_fem(p):
    from .ball_radial import solve_principal_ball
    from .fem2d import lambda_fem, make_disk_mesh, make_rectangle_mesh

    if p["domain"] == "disk":
        mesh = make_disk_mesh(p["h"])
    else:
        mesh = make_rectangle_mesh(p["a"], p["b"], p["h"])
    lam, _ = lambda_fem(mesh, p["c_i"], p["c_b"])
    head = {"lambda_h": lam, "n_vertices": mesh.n_vertices, "area": mesh.area,
            "perimeter": mesh.perimeter}
    verdicts = {}
    if p["domain"] == "disk":
        ref = solve_principal_ball(2, 1.0, p["c_i"], p["c_b"]).lam
        head["lambda_radial"] = ref
        head["cross_check_delta"] = abs(lam - ref)
        verdicts["cross_check"] = abs(lam - ref) <= p["tol"]
    rows = [{"domain": p["domain"], "h": p["h"], **head}]
    return rows, head, verdicts


def _cmd_hessian(p):
    from .ball_radial import solve_principal_ball
    from .shape_hessian import ball_coefficients, hessian_row

    eig = solve_principal_ball(p["d"], 1.0, p["c_i"], p["c_b"], p["grid_n"])
    co = ball_coefficients(eig)
    rows = []
    for k in range(1, p["k_max"] + 1):
        row = hessian_row(k, eig, co)
        rows.append({"k": k, "sigma_k": row.sigma_k, "d_k": row.d_k, "p_k1": row.p_k1,
                     "q_k": row.q_k, "a_k": row.a_k})
    head = {"lambda": eig.lam, "mu": co.mu, "coeff_alpha": co.coeff_alpha,
            "coeff_beta": co.coeff_beta, "coeff_gamma": co.coeff_gamma,
            "coeff_delta": co.coeff_delta}
    return rows, head, {}


def _cmd_hessian_fd(p):
    from .ball_radial import solve_principal_ball
    from .fem2d import hessian_fd, make_disk_mesh
    from .shape_hessian import ball_coefficients, hessian_row

    eig = solve_principal_ball(2, 1.0, p["c_i"], p["c_b"])
    co = ball_coefficients(eig)
    ref = make_disk_mesh(p["h"])
    a2 = hessian_row(2, eig, co).a_k
    rows, verdicts = [], {}
    for k in p["k_list"]:
        fd = hessian_fd(k, p["c_i"], p["c_b"], p["t"], p["h"], co.mu, p["profile"], reference=ref)
        ak = hessian_row(k, eig, co).a_k
        if k == 1:
            err = abs(fd) / abs(a2)
        else:
            err = abs(fd - ak) / abs(ak)
        rows.append({"k": k, "fd": fd, "analytic": ak, "rel_error": err})
        verdicts[f"k{k}"] = err <= p["rel_tol"]
    head = {"mu": co.mu, "a_2": a2, "max_rel_error": max(r["rel_error"] for r in rows)}
    return rows, head, verdicts


def _cmd_regime_scan(p):
    from .shape_hessian import regime_scan

    scan = regime_scan(p["d"], p["c_i"], p["c_b"], p["k_max"], p["grid_n"])
    rows = [{"k": r.k, "sigma_k": r.sigma_k, "a_k": r.a_k, "ratio": r.a_k / (1.0 + r.sigma_k)}
            for r in scan.rows]
    head = {"min_ratio": scan.min_ratio, "argmin_k": scan.argmin_k, "mu": scan.coefficients.mu}
    verdicts = {"regime": scan.verdict, "tail": scan.tail, "proven_regime": scan.proven_regime}
    if scan.note:
        verdicts["note"] = scan.note
    return rows, head, verdicts


def _cmd_talenti(p):
    from .suites import talenti_suite

    rows = talenti_suite(p["kind"], p["trials"], p["seed"], p["n_r"], p["m"], p["robin_beta"], p["tol"])
    head = {"worst_deficit": min(r["worst_deficit"] for r in rows),
            "violations": sum(not r["holds"] for r in rows)}
    verdicts = {"comparison_holds": head["violations"] == 0}
    if p["kind"] == "robin":
        zero = [r for r in rows if r["w_zero"]]
        if zero:
            dev = max(abs(r["integral_u"] - r["integral_v"]) for r in zero)
            head["integral_defect_w0"] = dev
            verdicts["integral_equal_w0"] = dev <= 1e-8
        rigid = [r["norm_v_2"] - r["norm_u_2"] for r in rows if r["asymmetry"] >= 0.1]
        if rigid:
            head["min_l2_margin"] = min(rigid)
            verdicts["strict_l2"] = min(rigid) > 0.0
    return rows, head, verdicts


def _cmd_nonexistence(p):
    from .fem2d import nonexistence_scan

    table = nonexistence_scan(p["c_i"], p["c_b"], p["aspects"], p["h"])
    rows = [vars(r) for r in table]
    gaps = [r.lam_h + p["c_b"] for r in table]
    head = {"gap_first": gaps[0], "gap_last": gaps[-1], "gap_ratio": gaps[-1] / gaps[0]}
    verdicts = {
        "above_minus_c_b": all(g > 0 for g in gaps),
        "below_upper_bound": all(r.lam_h <= r.upper_bound + p["slack"] for r in table),
        "gap_decreasing": all(b < a for a, b in zip(gaps, gaps[1:])),
        "gap_ratio": head["gap_ratio"] <= p["ratio"],
    }
    return rows, head, verdicts


def _cmd_fk_check(p):
    from .suites import fk_suite

    rows = fk_suite(p["trials"], p["seed"], p["n_r"], p["m"], p["f_max"], p["g_max"])
    worst = min(r["slack"] for r in rows)
    return rows, {"min_slack": worst}, {"fk_holds": worst >= -p["tol"]}


def _cmd_limit_gap(p):
    from .ball_radial import limit_gap_scan, robin_eigenvalue

    table = limit_gap_scan(p["d"], p["c_i_list"], p["grid_n"])
    lam_r = robin_eigenvalue(p["d"], 1.0, p["grid_n"])
    rows = [{"c_i": c, "gap": g} for c, g in table]
    gaps = [g for _, g in table]
    rel = abs(gaps[-1] - lam_r) / lam_r
    head = {"lambda_robin": lam_r, "last_gap": gaps[-1], "relative_distance": rel}
    verdicts = {
        "monotone": all(b >= a for a, b in zip(gaps, gaps[1:])),
        "close_to_robin": rel <= p["rel_tol"],
    }
    return rows, head, verdicts


COMMANDS = {
    "eigen-ball": _cmd_eigen_ball,
    "eigen-fem": _cmd_eigen_fem,
    "hessian": _cmd_hessian,
    "hessian-fd": _cmd_hessian_fd,
    "regime-scan": _cmd_regime_scan,
    "talenti": _cmd_talenti,
    "nonexistence": _cmd_nonexistence,
    "fk-check": _cmd_fk_check,
    "limit-gap": _cmd_limit_gap,
}


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_csv(path, rows):
    path = Path(path)
    fields = list(rows[0]) if rows else []
    for r in rows:
        fields += [k for k in r if k not in fields]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(r.get(k, "")) for k in fields])


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if hasattr(v, "item"):
        return v.item()
    return v


def run(config: RunConfig) -> int:
    t0 = time.perf_counter()
    try:
        rows, head, verdicts = COMMANDS[config.command](config.parameters)
    except BulkSurfError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_SOLVER
    out = config.out
    out.parent.mkdir(parents=True, exist_ok=True)
    csv_path = out.with_name(out.name + ".csv")
    json_path = out.with_name(out.name + ".json")
    write_csv(csv_path, rows)
    summary = {
        "command": config.command,
        "parameters": _jsonable(config.parameters),
        "headline_numbers": _jsonable(head),
        "verdicts": _jsonable(verdicts),
        "wall_time": time.perf_counter() - t0,
    }
    json_path.write_text(json.dumps(summary, indent=2) + "\n")
    failed = [k for k, v in verdicts.items() if v is False]
    if failed:
        log.warning("failed verdicts: %s", ", ".join(failed))
        return EXIT_VERDICT
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    argv = sys.argv[1:] if argv is None else argv
    try:
        config = parse_config(argv)
    except ConfigError as exc:
        print(f"bulksurf: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"bulksurf: cannot read config file: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
