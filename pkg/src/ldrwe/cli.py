"""Command-line front end: ``ldrwe <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .averaged import log_mgf, rate_averaged, tilted_step_kernel
from .config import PRESETS, ExperimentConfig, preset
from .entropy import sc_entropy_decomposition
from .environment import EnvKind, sample_environment
from .errors import ConfigError, LdrweError, NotInRelativeInterior, ZeroProbabilityStep
from .geometry import in_relative_interior
from .paths import (
    dimension_gap_probe,
    endpoint_law,
    importance_sample,
    ldp_slope,
    log_un_concentration,
    log_window_prob,
    nearest_neighbor_steps,
    ordered_map,
    simulate_endpoints,
    slope_correction_constant,
)
from .quenched import jensen_gap, lambda_quenched, rate_quenched
from .tilted import doob_residual, log_u_n, sc_mu_family, sc_nu_kernel
from .verify import format_report, run_identity_suite

COMMANDS = (
    "rate-curve",
    "tilt",
    "entropy-decompose",
    "simulate",
    "is-estimate",
    "ldp-slope",
    "concentration",
    "dim-probe",
    "verify",
)
TOL_KEYS = {"newton": "tol_newton", "identity": "tol_identity"}
DOOB_HORIZON = 6
U_TRACE_MAX = 10


# ---------------------------------------------------------------------------
# argument handling


def _vector(text: str, field: str) -> list[float]:
    try:
        v = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(field, f"cannot parse {text!r} as a comma-separated vector") from None
    if not v:
        raise ConfigError(field, "empty vector")
    return v


def _horizons(values: list[str]) -> list[int]:
    out = []
    for text in values:
        for t in text.split(","):
            try:
                out.append(int(t))
            except ValueError:
                raise ConfigError("n", f"cannot parse {t!r} as an integer horizon") from None
    return out


def _tolerances(values: list[str]) -> dict[str, float]:
    out = {}
    for item in values:
        key, sep, val = item.partition("=")
        if not sep or key not in TOL_KEYS:
            raise ConfigError("tol", f"expected KEY=VALUE with KEY in {sorted(TOL_KEYS)}, got {item!r}")
        try:
            out[TOL_KEYS[key]] = float(val)
        except ValueError:
            raise ConfigError("tol", f"cannot parse {val!r} as a number") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ldrwe", description="Large-deviation rates for random walks in dynamic random environments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="TOML experiment file")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--xi", action="append", default=[], help="velocity, comma separated; repeatable")
    p.add_argument("--rho", action="append", default=[], help="tilt, comma separated; repeatable")
    p.add_argument("--n", action="append", default=[], help="horizon(s), comma separated; repeatable")
    p.add_argument("--replicas", type=int)
    p.add_argument("--samples", type=int, help="environment samples for quenched slopes")
    p.add_argument("--seed", type=int, help="64-bit unsigned seed")
    p.add_argument("--radius", type=float, help="window radius")
    p.add_argument("--epsilon", type=float, help="concentration threshold per step")
    p.add_argument("--law", choices=("averaged", "quenched-constant"), default="averaged")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--tol", action="append", default=[], help="tolerance override KEY=VALUE (newton, identity)")
    return p


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config and args.preset:
        raise ConfigError("config", "give either --config or --preset, not both")
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        cfg = preset(args.preset or "symmetric-binary")
    over = dict(
        xi=[_vector(t, "xi") for t in args.xi] or None,
        rho=[_vector(t, "rho") for t in args.rho] or None,
        horizons=_horizons(args.n) or None,
        replicas=args.replicas,
        samples=args.samples,
        seed=args.seed,
        window_radius=args.radius,
        epsilon=args.epsilon,
        format=args.format,
    )
    over.update(_tolerances(args.tol))
    return cfg.with_overrides(**over)


def checked_xi(cfg: ExperimentConfig) -> list[np.ndarray]:
    steps, geom = cfg.step_set(), cfg.geometry()
    pts = cfg.xi_points()
    for k, xi in enumerate(pts):
        if not in_relative_interior(xi, geom, steps):
            raise ConfigError(f"xi[{k}]", f"{xi.tolist()} is not in the relative interior of the step hull")
    return pts


def _rhos(cfg: ExperimentConfig) -> list[np.ndarray]:
    if cfg.rho:
        return [np.asarray(r, dtype=float) for r in cfg.rho]
    return [cfg.geometry().project_l(np.ones(cfg.step_set().dim))]


def _need_constant(cfg: ExperimentConfig, what: str) -> None:
    if cfg.env_kind == EnvKind.SPATIAL_IID.value:
        raise ConfigError("env_kind", f"{what} needs a deterministic or spatially-constant environment")


def _vec_cols(prefix: str, d: int) -> list[str]:
    return [f"{prefix}_{i + 1}" for i in range(d)]


# ---------------------------------------------------------------------------
# commands; each returns (columns, rows) or a JSON-ready object


def cmd_rate_curve(cfg, args):
    steps, geom, mixture = cfg.step_set(), cfg.geometry(), cfg.mixture()
    qhat = mixture.averaged()
    d = steps.dim
    pts = checked_xi(cfg)
    if args.law == "averaged":
        cols = _vec_cols("xi", d) + _vec_cols("rho", d) + ["i_avg", "residual"]

        def row(xi):
            s = rate_averaged(xi, qhat, geom, steps, tol=cfg.tol_newton)
            return [*s.xi, *s.rho, s.value, s.residual]

    else:
        _need_constant(cfg, "the quenched-constant law")
        cols = _vec_cols("xi", d) + _vec_cols("rho_q", d) + ["i_avg", "i_quenched", "gap", "residual"]

        def row(xi):
            a = rate_averaged(xi, qhat, geom, steps, tol=cfg.tol_newton)
            q = rate_quenched(xi, mixture, geom, steps, tol=cfg.tol_newton)
            return [*q.xi, *q.rho, a.value, q.value, q.value - a.value, q.residual]

    return cols, ordered_map(row, pts)


def cmd_tilt(cfg, args):
    steps, geom, mixture = cfg.step_set(), cfg.geometry(), cfg.mixture()
    qhat = mixture.averaged()
    spec = cfg.environment()
    out = []
    for xi in checked_xi(cfg):
        sol = rate_averaged(xi, qhat, geom, steps, tol=cfg.tol_newton)
        rec = {
            "xi": sol.xi.tolist(),
            "rho": sol.rho.tolist(),
            "i_avg": sol.value,
            "log_phi_a": log_mgf(sol.rho, qhat, steps),
            "steps": steps.tolist(),
            "mu_kernel": tilted_step_kernel(sol.rho, qhat, steps).probs.tolist(),
        }
        if mixture.kernels.min() > 0 and cfg.env_kind != EnvKind.SPATIAL_IID.value:
            rec["mu_atom_kernels"] = [k.probs.tolist() for k in sc_mu_family(xi, mixture, geom, steps).kernels]
            nu = sc_nu_kernel(xi, mixture, geom, steps)
            rec["nu_rho"] = nu.rho.tolist()
            rec["nu_atom_kernels"] = [k.probs.tolist() for k in nu.kernels]
            rec["jensen_gap"] = jensen_gap(sol.rho, mixture, steps)
        horizon = min(cfg.horizons[0], DOOB_HORIZON)
        windows = [sample_environment(spec, horizon, steps.dim, replica=r) for r in range(4)]
        rec["doob_horizon"] = horizon
        rec["doob_residual_u_one"] = doob_residual(sol.rho, qhat, lambda w: 1.0, windows, steps)
        trace_n = min(cfg.horizons[0], U_TRACE_MAX)
        env = sample_environment(spec, trace_n, steps.dim, replica=0)
        rec["u_n_trace"] = [math.exp(log_u_n(sol.rho, env, n, steps, qhat)) for n in range(1, trace_n + 1)]
        out.append(rec)
    return out


def cmd_entropy(cfg, args):
    _need_constant(cfg, "entropy-decompose")
    steps, geom, mixture = cfg.step_set(), cfg.geometry(), cfg.mixture()
    d = steps.dim
    cols = _vec_cols("xi", d) + _vec_cols("rho", d) + ["h_env", "h_q", "sum", "i_avg", "i_quenched", "residual"]

    def row(xi):
        r = sc_entropy_decomposition(xi, mixture, geom, steps, with_quenched=True)
        return [*r.xi, *r.rho, r.h_env, r.h_q, r.sum, r.i_avg, r.i_quenched, r.residual]

    return cols, ordered_map(row, checked_xi(cfg))


def cmd_simulate(cfg, args):
    steps = cfg.step_set()
    spec = cfg.environment()
    d = steps.dim
    cols = ["n", *_vec_cols("x", d), "count", "frequency", "exact_probability"]
    rows = []
    for n in cfg.horizons:
        env = sample_environment(spec, n, d, replica=0)
        x = simulate_endpoints(env, n, steps, cfg.replicas, cfg.seed)
        law = endpoint_law(env, n, steps)
        pts, counts = np.unique(x, axis=0, return_counts=True)
        exact = np.exp(law.log_prob_at(pts))
        for p, c, e in zip(pts, counts, exact):
            rows.append([n, *(int(v) for v in p), int(c), c / cfg.replicas, float(e)])
    return cols, rows


def cmd_is_estimate(cfg, args):
    steps, geom = cfg.step_set(), cfg.geometry()
    qhat = cfg.mixture().averaged()
    d = steps.dim
    cols = ["n", *_vec_cols("xi", d), "radius", "exact", "tilted_mean", "tilted_stderr", "tilted_rel_stderr",
            "tilted_z", "naive_mean", "naive_stderr", "naive_rel_stderr", "replicas", "seed"]
    rows = []
    for xi in checked_xi(cfg):
        for n in cfg.horizons:
            exact = math.exp(log_window_prob(endpoint_law(qhat, n, steps), xi, cfg.window_radius))
            t = importance_sample(qhat, n, xi, steps, geom, cfg.replicas, cfg.seed, cfg.window_radius)
            nv = importance_sample(qhat, n, xi, steps, geom, cfg.replicas, cfg.seed, cfg.window_radius, rho=np.zeros(d))
            z = abs(t.mean - exact) / t.stderr if t.stderr > 0 else (0.0 if t.mean == exact else math.inf)
            rows.append([n, *xi, cfg.window_radius, exact, t.mean, t.stderr, t.rel_stderr, z,
                         nv.mean, nv.stderr, nv.rel_stderr, cfg.replicas, cfg.seed])
    return cols, rows


def cmd_ldp_slope(cfg, args):
    steps, geom, mixture = cfg.step_set(), cfg.geometry(), cfg.mixture()
    qhat = mixture.averaged()
    spec = cfg.environment()
    d = steps.dim
    random_env = cfg.env_kind != EnvKind.DETERMINISTIC.value
    cols = ["n", *_vec_cols("xi", d), "averaged_slope", "i_avg", "slope_correction_c",
            "quenched_slope_mean", "quenched_slope_stderr", "i_quenched"]
    rows = []
    for xi in checked_xi(cfg):
        avg = ldp_slope(qhat, xi, cfg.horizons, steps, cfg.window_radius)
        i_avg = rate_averaged(xi, qhat, geom, steps, tol=cfg.tol_newton).value
        c = slope_correction_constant(avg, i_avg)
        i_q = ""
        if mixture.kernels.min() > 0 and cfg.env_kind != EnvKind.SPATIAL_IID.value:
            i_q = rate_quenched(xi, mixture, geom, steps, tol=cfg.tol_newton).value
        for (n, s) in avg:
            q_mean, q_se = "", ""
            if random_env:
                q = np.array(
                    ordered_map(
                        lambda r: ldp_slope(sample_environment(spec, n, d, replica=r), xi, [n], steps, cfg.window_radius)[0][1],
                        range(cfg.samples),
                    )
                )
                q_mean = float(q.mean())
                q_se = float(q.std(ddof=1) / math.sqrt(len(q))) if len(q) > 1 else ""
            rows.append([n, *xi, s, i_avg, c, q_mean, q_se, i_q])
    return cols, rows


def cmd_concentration(cfg, args):
    _need_constant(cfg, "concentration")
    steps, mixture = cfg.step_set(), cfg.mixture()
    qhat = mixture.averaged()
    cols = ["n", *_vec_cols("rho", steps.dim), "epsilon", "mean_log_un", "stderr_log_un", "expected_log_un",
            "mean_log_un_over_n", "limit_over_n", "tail_frequency", "log_tail_slope", "replicas", "seed"]
    rows = []
    for rho in _rhos(cfg):
        eps = cfg.epsilon or 0.5 * jensen_gap(rho, mixture, steps)
        rep = log_un_concentration(rho, mixture, steps, cfg.horizons, cfg.replicas, eps, cfg.seed)
        limit = lambda_quenched(rho, mixture, steps).lambda_value - log_mgf(rho, qhat, steps)
        for r in rep.rows:
            rows.append([r.n, *rho, eps, r.mean_log_un, r.stderr_log_un, r.expected_log_un, r.mean_log_un / r.n,
                         limit, r.tail_frequency, rep.log_tail_slope, cfg.replicas, cfg.seed])
    return cols, rows


def cmd_dim_probe(cfg, args):
    steps = cfg.step_set()
    d = steps.dim
    if steps != nearest_neighbor_steps(d):
        raise ConfigError("steps", "dim-probe needs nearest-neighbour steps +e1, -e1, +e2, -e2, ...")
    cols = ["n", *_vec_cols("xi", d), "averaged_slope", "quenched_slope", "quenched_stderr", "gap", "z_score", "samples"]
    n = cfg.horizons[0]
    rows = dimension_gap_probe(d, cfg.mixture(), checked_xi(cfg), n, cfg.samples, cfg.seed, cfg.window_radius)
    return cols, [[n, *r.xi, r.averaged_slope, r.quenched_slope, r.quenched_stderr, r.gap, r.z_score, cfg.samples] for r in rows]


HANDLERS = {
    "rate-curve": cmd_rate_curve,
    "tilt": cmd_tilt,
    "entropy-decompose": cmd_entropy,
    "simulate": cmd_simulate,
    "is-estimate": cmd_is_estimate,
    "ldp-slope": cmd_ldp_slope,
    "concentration": cmd_concentration,
    "dim-probe": cmd_dim_probe,
}


# ---------------------------------------------------------------------------
# emission


def _cell(v):
    if isinstance(v, (np.floating, float)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def render(result, fmt: str) -> str:
    if isinstance(result, list) and (not result or isinstance(result[0], dict)):
        return json.dumps(result, indent=2) + "\n"
    cols, rows = result
    if fmt == "json":
        recs = [{c: (float(v) if isinstance(v, np.floating) else int(v) if isinstance(v, np.integer) else v) for c, v in zip(cols, r)} for r in rows]
        return json.dumps(recs, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def run_command(argv: list[str]) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        if args.command == "verify":
            lines: list[str] = []
            ok = format_report(run_identity_suite(cfg), lines.append)
            text = "\n".join(lines) + "\n"
            sys.stdout.write(text)
            if args.out:
                Path(args.out).write_text(text)
            return 0 if ok else 1
        _emit(render(HANDLERS[args.command](cfg, args), cfg.format), args.out)
        return 0
    except ConfigError as exc:
        print(f"ldrwe: config error: {exc}", file=sys.stderr)
        return 2
    except (NotInRelativeInterior, ZeroProbabilityStep) as exc:
        print(f"ldrwe: config error: {exc}", file=sys.stderr)
        return 2
    except LdrweError as exc:
        print(f"ldrwe: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main(argv: list[str] | None = None) -> None:
    sys.exit(run_command(sys.argv[1:] if argv is None else argv))


if __name__ == "__main__":
    main()
