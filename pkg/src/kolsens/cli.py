"""Command-line front end: JSON-configured runs with reproducible artifacts.

One config file describes the experiment (model, boundary, evaluation point,
uncertainty weights, estimator and FD parameters); the command selects what
to compute. Every artifact embeds the package version, a hash of the
semantically meaningful configuration, and the base seed, so a result file
can always be traced back to an exact, re-runnable setup. Reruns with the
same config and seed produce byte-identical output except for the wall-clock
runtime fields.

Exit codes: 0 success; 2 configuration or validation problem (including FD
stability refusals); 3 numerical failure (NaN/Inf mid-computation); 4
expansion regime violated with --strict.
"""

import argparse
import hashlib
import importlib
import json
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import (quartic_sensitivity_quadrature, quartic_v0, sine_sensitivity_quadrature,
                       sine_v0)
from .engine import (McConfig, SensitivityReport, compute_report, predicted_complexity,
                     repeated_runs, v0_mc)
from .errors import NumericError, ValidationError
from .fd1d import FdProblem1d, epsilon_sweep, fd_problem_from_model, solve
from .model import (BaselineModel, BoundaryFunction, EvalPoint, UncertaintySpec,
                    check_boundary, generate_normalized_model, lambda_min, quartic_boundary,
                    sine_boundary, validate_expansion_regime)
from .sampling import build_time_grid, draw_samples

COMMANDS = ("value", "sensitivity", "approx", "eps-sweep", "dim-sweep",
            "fd-solve", "complexity")

EPS_SWEEP_HEADER = "epsilon,v_fd,approx,abs_error"
DIM_SWEEP_HEADER = ("d,v0_mean,v0_std,sens_drift_mean,sens_drift_std,"
                    "sens_vol_mean,sens_vol_std,lambda_min,runtime_mean_seconds")

_TOP_KEYS = {"model", "boundary", "point", "uncertainty", "mc", "fd", "sweep",
             "dims", "seed", "runs", "output"}


def _expect_keys(section: dict, allowed: set, where: str) -> None:
    extra = set(section) - allowed
    if extra:
        raise ValidationError(f"unknown key(s) {sorted(extra)} in {where} "
                              f"(allowed: {sorted(allowed)})")


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ValidationError("config root must be a JSON object")
    _expect_keys(raw, _TOP_KEYS, "config root")
    return raw


def _build_model(raw: dict):
    spec = raw.get("model")
    if spec is None:
        raise ValidationError("config needs a 'model' section")
    _expect_keys(spec, {"kind", "drift", "vol", "horizon", "dim", "seed"}, "model")
    kind = spec.get("kind", "normalized" if "dim" in spec else "explicit")
    horizon = float(spec.get("horizon", 1.0))
    if kind == "explicit":
        for key in ("drift", "vol"):
            if key not in spec:
                raise ValidationError(f"explicit model needs '{key}'")
        model = BaselineModel(drift=np.asarray(spec["drift"], dtype=float),
                              vol=np.asarray(spec["vol"], dtype=float),
                              horizon=horizon)
    elif kind == "normalized":
        if "dim" not in spec:
            raise ValidationError("normalized model needs 'dim'")
        model = generate_normalized_model(int(spec["dim"]), int(spec.get("seed", 0)),
                                          horizon=horizon)
    else:
        raise ValidationError(f"model kind must be 'explicit' or 'normalized', got {kind!r}")
    return model, kind


def _external_boundary(ref: str, dim: int) -> BoundaryFunction:
    module_name, _, attr = ref.partition(":")
    if not module_name or not attr:
        raise ValidationError(f"external boundary ref must look like 'module:attr', got {ref!r}")
    try:
        obj = getattr(importlib.import_module(module_name), attr)
    except (ImportError, AttributeError) as exc:
        raise ValidationError(f"cannot load external boundary {ref!r}: {exc}") from None
    if callable(obj) and not isinstance(obj, BoundaryFunction):
        obj = obj(dim)
    if not isinstance(obj, BoundaryFunction):
        raise ValidationError(f"external boundary {ref!r} is not a BoundaryFunction")
    probe = check_boundary(obj)
    if not probe.ok:
        raise ValidationError(
            f"external boundary {ref!r} failed consistency probes: "
            f"gradient err {probe.max_gradient_rel_err:.2e}, "
            f"hessian err {probe.max_hessian_rel_err:.2e}, "
            f"asymmetry {probe.max_hessian_asym:.2e}")
    return obj


def _boundary_spec(raw: dict):
    spec = raw.get("boundary", "quartic")
    if isinstance(spec, str):
        spec = {"kind": spec}
    _expect_keys(spec, {"kind", "ref"}, "boundary")
    kind = spec.get("kind")
    if kind not in ("quartic", "sine", "external"):
        raise ValidationError(f"boundary kind must be quartic/sine/external, got {kind!r}")
    if kind == "external" and "ref" not in spec:
        raise ValidationError("external boundary needs a 'ref' of the form 'module:attr'")
    return kind, spec.get("ref")


def _make_boundary(kind: str, ref, dim: int) -> BoundaryFunction:
    if kind == "quartic":
        if dim != 1:
            raise ValidationError(f"quartic boundary is 1-D, model has dim {dim}")
        return quartic_boundary()
    if kind == "sine":
        return sine_boundary(dim)
    return _external_boundary(ref, dim)


def _build_point(raw: dict, dim: int) -> EvalPoint:
    spec = raw.get("point", {})
    _expect_keys(spec, {"t", "x"}, "point")
    t = float(spec.get("t", 0.0))
    x = np.asarray(spec.get("x", np.zeros(dim)), dtype=float)
    return EvalPoint(t=t, x=x)


def _build_unc(raw: dict) -> UncertaintySpec:
    spec = raw.get("uncertainty", {})
    _expect_keys(spec, {"gamma", "eta", "epsilon"}, "uncertainty")
    return UncertaintySpec(gamma=float(spec.get("gamma", 1.0)),
                           eta=float(spec.get("eta", 1.0)),
                           epsilon=float(spec.get("epsilon", 0.05)))


def _build_mc(raw: dict, args) -> McConfig:
    spec = raw.get("mc", {})
    _expect_keys(spec, {"n_steps", "m0", "m1", "h", "independent_inner",
                        "kernel", "fd_scheme", "force_fd"}, "mc")
    cfg = McConfig(
        n_steps=int(spec.get("n_steps", 100)),
        m0=int(spec.get("m0", 3_000_000)),
        m1=int(spec.get("m1", 30_000)),
        h=float(spec["h"]) if spec.get("h") is not None else None,
        sampling="scaled",
        force_fd=bool(spec.get("force_fd", False)),
        fd_scheme=str(spec.get("fd_scheme", "forward")),
        independent_inner=bool(spec.get("independent_inner", False)),
        kernel=str(spec.get("kernel", "auto")))
    overrides = {}
    if args.h is not None:
        overrides["h"] = args.h
    if args.sampling is not None:
        overrides["sampling"] = args.sampling
    if args.force_fd:
        overrides["force_fd"] = True
    return replace(cfg, **overrides) if overrides else cfg


def _fd_params(raw: dict) -> dict:
    spec = raw.get("fd", {})
    _expect_keys(spec, {"half_width", "nx", "nt", "safety", "allow_nonconvex"}, "fd")
    out = {}
    if spec.get("half_width") is not None:
        out["half_width"] = float(spec["half_width"])
    if "nx" in spec:
        out["nx"] = int(spec["nx"])
    if spec.get("nt") is not None:
        out["nt"] = int(spec["nt"])
    if "safety" in spec:
        out["safety"] = float(spec["safety"])
    if "allow_nonconvex" in spec:
        out["allow_nonconvex"] = bool(spec["allow_nonconvex"])
    return out


def config_hash(raw: dict, command: str, seed: int, runs: int, mc: McConfig) -> str:
    """Hash of everything that can change a result (output routing excluded)."""
    semantic = {k: v for k, v in raw.items() if k != "output"}
    semantic["_effective"] = {
        "command": command, "seed": seed, "runs": runs,
        "h": mc.h, "sampling": mc.sampling, "force_fd": mc.force_fd,
        "fd_scheme": mc.fd_scheme, "kernel": mc.kernel,
        "independent_inner": mc.independent_inner,
        "n_steps": mc.n_steps, "m0": mc.m0, "m1": mc.m1,
    }
    blob = json.dumps(semantic, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------
# per-command runners
# --------------------------------------------------------------------------

def _stats_doc(values) -> dict:
    arr = np.asarray(values, dtype=float)
    std = float(np.std(arr, ddof=1)) if arr.size > 1 else float("nan")
    return {"runs": int(arr.size), "mean": float(np.mean(arr)), "std_dev": std}


def _repeated_reports(model, boundary, point, mc: McConfig, unc, runs: int,
                      base_seed: int) -> list:
    reports = []
    for r in range(runs):
        seed = base_seed + r
        try:
            reports.append(compute_report(model, boundary, point,
                                          replace(mc, seed=seed), unc=unc))
        except Exception as exc:
            raise NumericError(f"estimator run with seed {seed} failed: {exc}") from exc
    return reports


def _mean_report(reports: list, base_seed: int) -> SensitivityReport:
    first = reports[0]
    return replace(first,
                   v0=float(np.mean([r.v0 for r in reports])),
                   sens_drift=float(np.mean([r.sens_drift for r in reports])),
                   sens_vol=float(np.mean([r.sens_vol for r in reports])),
                   runtime_seconds=math.fsum(r.runtime_seconds for r in reports),
                   seed=base_seed)


def _run_value(ctx) -> dict:
    t0 = time.perf_counter()

    def one(seed: int) -> float:
        grid = build_time_grid(ctx["point"].t, ctx["model"].horizon, ctx["mc"].n_steps)
        samples = draw_samples(ctx["model"], grid, ctx["mc"].m0, 1, seed)
        return v0_mc(ctx["model"], ctx["boundary"], ctx["point"], samples)

    stats = repeated_runs(one, ctx["runs"], ctx["seed"])
    return {"seed": ctx["seed"], "d": ctx["model"].dim, "N": ctx["mc"].n_steps,
            "M0": ctx["mc"].m0,
            "stats": {"runs": stats.runs, "mean": stats.mean, "std_dev": stats.std_dev},
            "runtime_seconds": time.perf_counter() - t0}


def _run_sensitivity(ctx, with_regime: bool) -> dict:
    model, unc = ctx["model"], ctx["unc"]
    reports = _repeated_reports(model, ctx["boundary"], ctx["point"], ctx["mc"],
                                unc, ctx["runs"], ctx["seed"])
    mean = _mean_report(reports, ctx["seed"])
    doc = {"report": mean.to_document(unc),
           "stats": {"v0": _stats_doc([r.v0 for r in reports]),
                     "sens_drift": _stats_doc([r.sens_drift for r in reports]),
                     "sens_vol": _stats_doc([r.sens_vol for r in reports]),
                     "approx": _stats_doc([r.approx(unc.gamma, unc.eta, unc.epsilon)
                                           for r in reports])}}
    if with_regime:
        regime = validate_expansion_regime(model, unc)
        doc["regime"] = {"ok": regime.ok, "epsilon": regime.epsilon,
                         "bound": regime.bound}
        if not regime.ok:
            print(f"warning: epsilon={unc.epsilon} is not below the expansion "
                  f"bound {regime.bound:.6g}", file=sys.stderr)
            if ctx["strict"]:
                doc["_strict_violation"] = True
    return doc


def _analytic_first_order(ctx) -> tuple:
    """(v0, weighted total sensitivity) from the quadrature oracles."""
    model, unc, kind = ctx["model"], ctx["unc"], ctx["boundary_kind"]
    T = model.horizon
    if kind == "quartic":
        t, x = ctx["point"].t, float(ctx["point"].x[0])
        b0, s0 = float(model.drift[0]), float(model.vol[0, 0])
        v0 = quartic_v0(t, x, b0, s0, T)
        sd = quartic_sensitivity_quadrature("drift", t, x, b0, s0, T)
        sv = quartic_sensitivity_quadrature("vol", t, x, b0, s0, T)
    elif kind == "sine":
        if ctx["model_kind"] != "normalized":
            raise ValidationError("analytic sine values assume a normalized model; "
                                  "use approx_source='engine' instead")
        if ctx["point"].t != 0.0 or np.any(ctx["point"].x != 0.0):
            raise ValidationError("analytic sine values assume the point (t, x) = (0, 0)")
        d = model.dim
        v0 = sine_v0(T)
        sd = sine_sensitivity_quadrature(T, d, "drift")
        sv = sine_sensitivity_quadrature(T, d, "vol")
    else:
        raise ValidationError("approx_source='analytic' supports the built-in "
                              "boundaries only; use approx_source='engine'")
    return v0, unc.gamma * sd + unc.eta * sv


def _run_eps_sweep(ctx) -> dict:
    raw = ctx["raw"]
    spec = raw.get("sweep", {})
    _expect_keys(spec, {"epsilons", "approx_source", "anchor"}, "sweep")
    if "epsilons" not in spec:
        raise ValidationError("eps-sweep needs sweep.epsilons in the config")
    epsilons = [float(e) for e in spec["epsilons"]]
    anchor = spec.get("anchor", "fd")
    source = spec.get("approx_source",
                      "analytic" if ctx["boundary_kind"] in ("quartic", "sine")
                      else "engine")
    if source == "analytic":
        v0, total = _analytic_first_order(ctx)
    elif source == "engine":
        report = compute_report(ctx["model"], ctx["boundary"], ctx["point"],
                                ctx["mc"], unc=ctx["unc"])
        v0 = report.v0
        total = report.sens_total(ctx["unc"].gamma, ctx["unc"].eta)
    else:
        raise ValidationError(f"approx_source must be 'analytic' or 'engine', got {source!r}")

    template = fd_problem_from_model(ctx["model"], ctx["boundary"], ctx["unc"],
                                     **ctx["fd"])
    if ctx["point"].t != 0.0:
        raise ValidationError("eps-sweep evaluates at t = 0; set point.t to 0")
    template = replace(template, x_center=float(ctx["point"].x[0]))
    result = epsilon_sweep(template, epsilons, v0=float(v0),
                           sensitivity=float(total), anchor=anchor)
    return {"seed": ctx["seed"], "approx_source": source, "anchor": anchor,
            "anchor_value": float(result.anchor_value), "slope": result.slope,
            "half_width": result.half_width,
            "table": [{"epsilon": e, "v_fd": v, "approx": a, "abs_error": err}
                      for e, v, a, err in zip(result.epsilons, result.fd_values,
                                              result.approx_values, result.abs_errors)]}


def _run_dim_sweep(ctx) -> dict:
    raw = ctx["raw"]
    dims = raw.get("dims")
    if not dims:
        raise ValidationError("dim-sweep needs a nonempty 'dims' list in the config")
    dims = [int(d) for d in dims]
    if ctx["boundary_kind"] == "quartic":
        raise ValidationError("dim-sweep needs a dimension-parametric boundary "
                              "(sine or external factory)")
    model_spec = raw.get("model", {})
    model_seed = int(model_spec.get("seed", 0))
    horizon = float(model_spec.get("horizon", 1.0))
    rows = []
    for d in dims:
        model = generate_normalized_model(d, model_seed + d, horizon=horizon)
        boundary = _make_boundary(ctx["boundary_kind"], ctx["boundary_ref"], d)
        point = EvalPoint(t=0.0, x=np.zeros(d))
        reports = _repeated_reports(model, boundary, point, ctx["mc"], ctx["unc"],
                                    ctx["runs"], ctx["seed"])
        v0s = [r.v0 for r in reports]
        sds = [r.sens_drift for r in reports]
        svs = [r.sens_vol for r in reports]
        rows.append({
            "d": d,
            "v0_mean": float(np.mean(v0s)),
            "v0_std": float(np.std(v0s, ddof=1)) if len(v0s) > 1 else float("nan"),
            "sens_drift_mean": float(np.mean(sds)),
            "sens_drift_std": float(np.std(sds, ddof=1)) if len(sds) > 1 else float("nan"),
            "sens_vol_mean": float(np.mean(svs)),
            "sens_vol_std": float(np.std(svs, ddof=1)) if len(svs) > 1 else float("nan"),
            "lambda_min": lambda_min(model),
            "runtime_mean_seconds": float(np.mean([r.runtime_seconds for r in reports])),
        })
    return {"seed": ctx["seed"], "runs": ctx["runs"], "rows": rows}


def _run_fd_solve(ctx) -> dict:
    if ctx["point"].t != 0.0:
        raise ValidationError("fd-solve evaluates at t = 0; set point.t to 0")
    problem = fd_problem_from_model(ctx["model"], ctx["boundary"], ctx["unc"],
                                    **ctx["fd"])
    problem = replace(problem, x_center=float(ctx["point"].x[0]))
    solution = solve(problem, store="ends")
    return {"seed": ctx["seed"], "v_fd": solution.at(0.0, problem.x_center),
            "x": problem.x_center, "half_width": problem.resolved_half_width(),
            "nx": problem.nx, "nt": solution.nt, "epsilon": problem.epsilon,
            "gamma": problem.gamma, "eta": problem.eta}


def _run_complexity(ctx) -> dict:
    mc, d = ctx["mc"], ctx["model"].dim
    return {"predicted_ops": predicted_complexity(d, mc.n_steps, mc.m0, mc.m1),
            "d": d, "N": mc.n_steps, "M0": mc.m0, "M1": mc.m1}


# --------------------------------------------------------------------------
# output formatting
# --------------------------------------------------------------------------

def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        Path(out).write_text(text if text.endswith("\n") else text + "\n",
                             encoding="utf-8")


def _json_text(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _csv_text(header: str, rows: list) -> str:
    cols = header.split(",")
    lines = [header]
    for row in rows:
        lines.append(",".join(repr(row[c]) if isinstance(row[c], float)
                              else str(row[c]) for c in cols))
    return "\n".join(lines) + "\n"


def _guard_output_path(target: Path, config_path: str) -> None:
    if target.resolve() == Path(config_path).resolve():
        raise ValidationError(f"output path {target} would overwrite the "
                              f"config file; choose a different --out")


def _write_sweep_csv(doc: dict, header: str, rows: list, out: str | None,
                     config_path: str) -> None:
    if out is None:
        raise ValidationError("--format csv needs --out for sweep commands")
    summary_path = Path(out).with_suffix(".json")
    _guard_output_path(Path(out), config_path)
    _guard_output_path(summary_path, config_path)
    _emit(_csv_text(header, rows), out)
    summary = {k: v for k, v in doc.items() if k not in ("table", "rows")}
    _emit(_json_text(summary), str(summary_path))


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kolsens",
        description="Monte Carlo sensitivity analysis of Kolmogorov PDEs "
                    "under drift and volatility uncertainty")
    parser.add_argument("--config", required=True, help="path to the JSON run config")
    parser.add_argument("--command", required=True, choices=COMMANDS,
                        help="what to compute")
    parser.add_argument("--seed", type=int, default=None,
                        help="base seed (overrides the config)")
    parser.add_argument("--runs", type=int, default=None,
                        help="number of repeated runs (overrides the config)")
    parser.add_argument("--out", default=None, help="output file (default: stdout)")
    parser.add_argument("--format", choices=("json", "csv"), default="json",
                        help="output format (csv for sweep commands only)")
    parser.add_argument("--strict", action="store_true",
                        help="exit 4 when the expansion regime is violated")
    parser.add_argument("--force-fd", action="store_true",
                        help="use the finite-difference Jacobian branch even "
                             "when a Hessian is available")
    parser.add_argument("--h", type=float, default=None,
                        help="finite-difference bump for the Jacobian branch")
    parser.add_argument("--sampling", choices=("scaled", "path"), default=None,
                        help="displacement sampling mode")
    return parser


def _build_context(args) -> dict:
    raw = load_config(args.config)
    model, model_kind = _build_model(raw)
    boundary_kind, boundary_ref = _boundary_spec(raw)
    boundary = (None if args.command == "dim-sweep"
                else _make_boundary(boundary_kind, boundary_ref, model.dim))
    point = _build_point(raw, model.dim)
    mc = _build_mc(raw, args)
    seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
    runs = args.runs if args.runs is not None else int(raw.get("runs", 10))
    if runs < 1:
        raise ValidationError(f"runs must be >= 1, got {runs}")
    mc = replace(mc, seed=seed)
    return {"raw": raw, "model": model, "model_kind": model_kind,
            "boundary": boundary, "boundary_kind": boundary_kind,
            "boundary_ref": boundary_ref, "point": point,
            "unc": _build_unc(raw), "mc": mc, "fd": _fd_params(raw),
            "seed": seed, "runs": runs, "strict": args.strict}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        ctx = _build_context(args)
        runner = {
            "value": lambda: _run_value(ctx),
            "sensitivity": lambda: _run_sensitivity(ctx, with_regime=False),
            "approx": lambda: _run_sensitivity(ctx, with_regime=True),
            "eps-sweep": lambda: _run_eps_sweep(ctx),
            "dim-sweep": lambda: _run_dim_sweep(ctx),
            "fd-solve": lambda: _run_fd_solve(ctx),
            "complexity": lambda: _run_complexity(ctx),
        }[args.command]
        payload = runner()
        strict_violation = payload.pop("_strict_violation", False)
        doc = {"version": __version__,
               "config_hash": config_hash(ctx["raw"], args.command, ctx["seed"],
                                          ctx["runs"], ctx["mc"]),
               "command": args.command}
        doc.update(payload)
        if args.format == "csv":
            if args.command == "eps-sweep":
                _write_sweep_csv(doc, EPS_SWEEP_HEADER, doc["table"], args.out,
                                 args.config)
            elif args.command == "dim-sweep":
                _write_sweep_csv(doc, DIM_SWEEP_HEADER, doc["rows"], args.out,
                                 args.config)
            else:
                raise ValidationError(f"--format csv is not supported for "
                                      f"'{args.command}'")
        else:
            if args.out is not None:
                _guard_output_path(Path(args.out), args.config)
            _emit(_json_text(doc), args.out)
        if strict_violation:
            return 4
        return 0
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
