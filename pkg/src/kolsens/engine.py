"""Nested Monte Carlo estimators for the first-order model-risk expansion.

`v0_mc` estimates the baseline value v0(t,x) = E[f(x + X_T) | X_t = 0] from
the terminal displacements of a sample grid. `sensitivity_mc` estimates the
two factors of the first-order sensitivity,

    sens_drift = E[ int_t^T |w(s, x + X_s)|      ds ]      (gamma-part)
    sens_vol   = E[ int_t^T ||J_x w(s, x+X_s) S||_F ds ]   (eta-part)

where w is the gradient of the linear-problem value function and S the
baseline volatility. Both are computed by a nested estimator: for each grid
node i an inner sample mean over m approximates w (and its Jacobian, either
from the boundary Hessian or by a forward-difference bump of size h), and an
outer mean over j approximates the s-expectation. The time integral is a
left-endpoint Riemann sum over i = 0..N-1.

The perturbation weights never enter the estimators; a SensitivityReport
recombines the two factors linearly for any (gamma, eta, epsilon).

Determinism contract: given a fixed seed, results are bit-identical for any
worker count (KOLSENS_WORKERS or the `workers` argument). Per-node partial
results are combined in index order with compensated summation, inner/outer
reductions use numpy's pairwise sums over fixed block shapes, and matrix
mixes avoid BLAS (see sampling module).
"""

import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ValidationError
from .model import (BaselineModel, BoundaryFunction, EvalPoint, UncertaintySpec,
                    validate_expansion_regime)
from .sampling import SampleGrid, build_time_grid, draw_samples

Array = np.ndarray

_PAIR_BUDGET = 1 << 23   # doubles per pairwise work buffer (~64 MB); fixed for determinism
_V0_BLOCK = 1 << 16

WORKERS_ENV = "KOLSENS_WORKERS"


def _resolve_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    if workers < 1:
        raise ValidationError(f"worker count must be >= 1, got {workers}")
    return workers


def default_bump(point: EvalPoint) -> float:
    """Default FD bump for the Jacobian branch: 1e-3 * max(1, |x|_inf)."""
    return 1e-3 * max(1.0, float(np.max(np.abs(point.x))) if point.x.size else 1.0)


def predicted_complexity(d: int, n_steps: int, m0: int, m1: int) -> int:
    """Number of samples/evaluations the nested scheme touches, exactly.

    Three components: the plain value estimate (m0*d), the inner/outer
    gradient stage (N*M1*(M1+1)*d) and the Jacobian stage
    (N*M1*(M1+1+d)*d^2). Python integers, so there is no overflow to guard.
    """
    vals = {"d": d, "n_steps": n_steps, "m0": m0, "m1": m1}
    for name, v in vals.items():
        if int(v) != v or v < 1:
            raise ValidationError(f"{name} must be an integer >= 1, got {v}")
    d, n, m0, m1 = int(d), int(n_steps), int(m0), int(m1)
    return m0 * d + n * m1 * (m1 + 1) * d + n * m1 * (m1 + 1 + d) * d * d


def _check_compatible(model: BaselineModel, boundary: BoundaryFunction,
                      point: EvalPoint, samples: SampleGrid) -> None:
    if boundary.dim != model.dim:
        raise ValidationError(f"boundary dim {boundary.dim} != model dim {model.dim}")
    if point.x.shape[0] != model.dim:
        raise ValidationError(f"point dim {point.x.shape[0]} != model dim {model.dim}")
    sm = samples.model
    if not (np.array_equal(sm.drift, model.drift) and np.array_equal(sm.vol, model.vol)
            and sm.horizon == model.horizon):
        raise ValidationError("samples were drawn for a different model")
    if abs(point.t - samples.grid.t_start) > 1e-12 * max(1.0, abs(point.t)):
        raise ValidationError(
            f"point.t={point.t} does not match the sample grid start {samples.grid.t_start}")
    if point.t >= model.horizon:
        raise ValidationError(f"need t < horizon, got t={point.t}, T={model.horizon}")


def v0_mc(model: BaselineModel, boundary: BoundaryFunction, point: EvalPoint,
          samples: SampleGrid) -> float:
    """Plain Monte Carlo estimate of the baseline value v0(t, x).

    Averages f(x + X_N(j)) over all m0 samples; unbiased since the terminal
    displacement has the exact law of X_T - x given X_t = 0.
    """
    _check_compatible(model, boundary, point, samples)
    samples.ensure_mixed()
    n = samples.grid.n_steps
    partials = []
    for lo in range(0, samples.m0, _V0_BLOCK):
        hi = min(lo + _V0_BLOCK, samples.m0)
        vals = boundary.value(point.x + samples.displacement(n, start=lo, stop=hi))
        if not np.isfinite(vals).all():
            j = lo + int(np.flatnonzero(~np.isfinite(vals))[0])
            raise NumericError(f"boundary value non-finite at sample {j}")
        partials.append(float(np.sum(vals)))
    return math.fsum(partials) / samples.m0


def _norm_rows(a: Array) -> Array:
    return np.sqrt(np.sum(a * a, axis=-1))


def _generic_node_terms(boundary, x, out_disp, in_disp, vol_mat, need_drift,
                        need_vol, use_hessian, h, fd_scheme):
    """One grid node of the nested estimator, black-box boundary evaluators.

    Returns (sum_j |w_hat(j)|, sum_j ||Jw_hat(j) vol||_F) over the outer pool,
    blocked so the pairwise tensor stays within the fixed memory budget.
    """
    m1, d = out_disp.shape
    per_row = m1 * d * (d if (need_vol and use_hessian) else 1)
    bj = max(1, _PAIR_BUDGET // per_row)
    want_w = need_drift or (need_vol and not use_hessian and fd_scheme == "forward")
    drift_parts, vol_parts = [], []
    for lo in range(0, m1, bj):
        q = x + out_disp[lo:lo + bj, None, :] + in_disp[None, :, :]
        w = boundary.gradient(q).mean(axis=1) if want_w else None
        if need_drift:
            drift_parts.append(float(np.sum(_norm_rows(w))))
        if need_vol:
            if use_hessian:
                jw = boundary.hessian(q).mean(axis=1)
            else:
                jw = np.empty((q.shape[0], d, d))
                for l in range(d):
                    shift = np.zeros(d)
                    shift[l] = h
                    wp = boundary.gradient(q + shift).mean(axis=1)
                    if fd_scheme == "central":
                        wm = boundary.gradient(q - shift).mean(axis=1)
                        jw[:, :, l] = (wp - wm) / (2.0 * h)
                    else:
                        jw[:, :, l] = (wp - w) / h
            js = np.einsum("bkl,lm->bkm", jw, vol_mat, optimize=False)
            vol_parts.append(float(np.sum(np.sqrt(np.sum(js * js, axis=(-2, -1))))))
    return math.fsum(drift_parts), math.fsum(vol_parts)


def _ridge_node_terms(ridge, x, out_disp, in_disp, vol_mat, need_drift,
                      need_vol, use_hessian, h, fd_scheme):
    """Same sums as the generic kernel for ridge boundaries f(x) = phi(a.x).

    Everything factors through the scalar projection s = a.(x + X_i(j) +
    X_{N-i}(m)): w_hat = mean(phi'(s)) a, Jw_hat = mean(phi''(s)) a a^T, so
    |w_hat| = |mean phi'| |a| and ||Jw_hat vol||_F = |mean phi''| |a| |vol^T a|.
    The pairwise work is then independent of the dimension.
    """
    a = ridge.direction
    m1 = out_disp.shape[0]
    anorm = math.sqrt(float(a @ a))
    sig_a = np.einsum("lk,l->k", vol_mat, a, optimize=False)     # vol^T a
    signorm = math.sqrt(float(sig_a @ sig_a))
    s_out = float(x @ a) + np.einsum("jd,d->j", out_disp, a, optimize=False)
    s_in = np.einsum("jd,d->j", in_disp, a, optimize=False)
    bj = max(1, _PAIR_BUDGET // m1)
    want_u = need_drift or (need_vol and not use_hessian and fd_scheme == "forward")
    shifts = np.unique(a) if (need_vol and not use_hessian) else None
    drift_parts, vol_parts = [], []
    for lo in range(0, m1, bj):
        s = s_out[lo:lo + bj, None] + s_in[None, :]
        u = ridge.d1(s).mean(axis=1) if want_u else None
        if need_drift:
            drift_parts.append(anorm * float(np.sum(np.abs(u))))
        if need_vol:
            if use_hessian:
                v = ridge.d2(s).mean(axis=1)
                vol_parts.append(anorm * signorm * float(np.sum(np.abs(v))))
            else:
                # one shifted pass per *distinct* direction entry, then expand
                per_shift = {}
                for hv in shifts:
                    up = ridge.d1(s + h * hv).mean(axis=1)
                    if fd_scheme == "central":
                        um = ridge.d1(s - h * hv).mean(axis=1)
                        per_shift[hv] = (up - um) / (2.0 * h)
                    else:
                        per_shift[hv] = (up - u) / h
                g = np.stack([per_shift[hv] for hv in a], axis=1)   # (b, d)
                gs = np.einsum("bl,lm->bm", g, vol_mat, optimize=False)
                vol_parts.append(anorm * float(np.sum(_norm_rows(gs))))
    return math.fsum(drift_parts), math.fsum(vol_parts)


def sensitivity_mc(model: BaselineModel, boundary: BoundaryFunction, point: EvalPoint,
                   samples: SampleGrid, h: float | None = None, force_fd: bool = False,
                   fd_scheme: str = "forward", kernel: str = "auto",
                   workers: int | None = None,
                   parts: tuple = ("drift", "vol")) -> tuple[float, float, bool]:
    """Nested MC estimate of (sens_drift, sens_vol); returns the branch taken.

    Parameters
    ----------
    h : FD bump for the Jacobian fallback; default 1e-3 * max(1, |x|_inf).
    force_fd : take the finite-difference branch even when a Hessian exists.
    fd_scheme : "forward" (as in the derivation) or "central".
    kernel : "auto" uses the ridge shortcut when the boundary declares one,
        "generic"/"ridge" force a kernel (ridge requires the declaration).
    parts : which factors to compute; skipped parts come back as 0.0.

    Returns (sens_drift, sens_vol, used_hessian_path).
    """
    _check_compatible(model, boundary, point, samples)
    need_drift = "drift" in parts
    need_vol = "vol" in parts
    if not (need_drift or need_vol):
        return 0.0, 0.0, False
    if fd_scheme not in ("forward", "central"):
        raise ValidationError(f"fd_scheme must be 'forward' or 'central', got {fd_scheme!r}")
    if kernel not in ("auto", "generic", "ridge"):
        raise ValidationError(f"unknown kernel {kernel!r}")
    if kernel == "ridge" and boundary.ridge is None:
        raise ValidationError("kernel='ridge' requires a boundary with a ridge declaration")

    use_hessian = boundary.hessian is not None and not force_fd
    if need_vol and not use_hessian:
        if h is None:
            h = default_bump(point)
        if not (np.isfinite(h) and h > 0):
            raise ValidationError(f"FD bump h must be > 0, got {h}")

    use_ridge = boundary.ridge is not None and kernel in ("auto", "ridge")
    node_terms = _ridge_node_terms if use_ridge else _generic_node_terms
    first_arg = boundary.ridge if use_ridge else boundary

    samples.ensure_mixed()
    n, m1, dt = samples.grid.n_steps, samples.m1, samples.grid.dt
    x, vol_mat = point.x, model.vol

    def per_node(i: int):
        out_disp = samples.displacement(i, stop=m1)
        in_disp = samples.displacement(n - i, stop=m1, pool="inner")
        return node_terms(first_arg, x, out_disp, in_disp, vol_mat, need_drift,
                          need_vol, use_hessian, h, fd_scheme)

    n_workers = _resolve_workers(workers)
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            node_vals = list(pool.map(per_node, range(n)))
    else:
        node_vals = [per_node(i) for i in range(n)]

    for i, (dv, vv) in enumerate(node_vals):
        if not (math.isfinite(dv) and math.isfinite(vv)):
            raise NumericError(f"non-finite sensitivity contribution at time index {i}")
    sens_drift = dt * math.fsum(dv for dv, _ in node_vals) / m1 if need_drift else 0.0
    sens_vol = dt * math.fsum(vv for _, vv in node_vals) / m1 if need_vol else 0.0
    return sens_drift, sens_vol, bool(use_hessian and need_vol)


# --------------------------------------------------------------------------
# reports and repetition
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SensitivityReport:
    """One estimator run: baseline value, the two sensitivity factors, metadata."""

    v0: float
    sens_drift: float
    sens_vol: float
    used_hessian_path: bool
    runtime_seconds: float
    predicted_ops: int
    d: int
    n_steps: int
    m0: int
    m1: int
    h: float
    seed: int

    def sens_total(self, gamma: float, eta: float) -> float:
        return gamma * self.sens_drift + eta * self.sens_vol

    def approx(self, gamma: float, eta: float, epsilon: float) -> float:
        return self.v0 + epsilon * self.sens_total(gamma, eta)

    def to_document(self, unc: UncertaintySpec) -> dict:
        """Serialize with the uncertainty weights applied (stable field set)."""
        return {
            "v0": self.v0,
            "sens_drift": self.sens_drift,
            "sens_vol": self.sens_vol,
            "gamma": unc.gamma,
            "eta": unc.eta,
            "epsilon": unc.epsilon,
            "approx": self.approx(unc.gamma, unc.eta, unc.epsilon),
            "used_hessian_path": self.used_hessian_path,
            "runtime_seconds": self.runtime_seconds,
            "predicted_ops": self.predicted_ops,
            "seed": self.seed,
            "d": self.d,
            "N": self.n_steps,
            "M0": self.m0,
            "M1": self.m1,
            "h": self.h,
        }


def first_order_approx(report: SensitivityReport, unc: UncertaintySpec,
                       model: BaselineModel | None = None) -> float:
    """v0 + eps*(gamma*sens_drift + eta*sens_vol); warns outside the valid regime."""
    if model is not None:
        regime = validate_expansion_regime(model, unc)
        if not regime.ok:
            warnings.warn(
                f"epsilon={unc.epsilon} is not below the expansion bound "
                f"{regime.bound:.6g}; the first-order approximation is unsupported here",
                stacklevel=2)
    return report.approx(unc.gamma, unc.eta, unc.epsilon)


@dataclass(frozen=True)
class EstimatorStats:
    """Mean and sample standard deviation over repeated seeded runs."""

    runs: int
    mean: float
    std_dev: float


def repeated_runs(job, runs: int, base_seed: int) -> EstimatorStats:
    """Run `job(seed)` for seeds base_seed..base_seed+runs-1 and aggregate.

    Any single-run failure aborts with the offending seed in the message.
    std_dev uses ddof=1 and is NaN for a single run.
    """
    if int(runs) != runs or runs < 1:
        raise ValidationError(f"runs must be an integer >= 1, got {runs}")
    vals = []
    for r in range(int(runs)):
        seed = base_seed + r
        try:
            vals.append(float(job(seed)))
        except Exception as exc:
            raise NumericError(f"estimator run with seed {seed} failed: {exc}") from exc
    arr = np.asarray(vals)
    std = float(np.std(arr, ddof=1)) if len(vals) > 1 else float("nan")
    return EstimatorStats(runs=int(runs), mean=float(np.mean(arr)), std_dev=std)


@dataclass(frozen=True)
class McConfig:
    """Estimator parameters: grid size, sample counts, bump, seed, mode flags."""

    n_steps: int = 100
    m0: int = 3_000_000
    m1: int = 30_000
    h: float | None = None
    seed: int = 0
    sampling: str = "scaled"
    force_fd: bool = False
    fd_scheme: str = "forward"
    independent_inner: bool = False
    kernel: str = "auto"

    def __post_init__(self):
        if self.m0 < self.m1:
            raise ValidationError(f"need m0 >= m1, got m0={self.m0}, m1={self.m1}")


def compute_report(model: BaselineModel, boundary: BoundaryFunction, point: EvalPoint,
                   cfg: McConfig, unc: UncertaintySpec | None = None,
                   workers: int | None = None) -> SensitivityReport:
    """Draw samples and run both estimators once, timed, as a SensitivityReport.

    When `unc` is given with gamma = eta = 0 the sensitivity stage is skipped
    entirely (the sensitivity is identically zero at radius zero weights).
    """
    t0 = time.perf_counter()
    grid = build_time_grid(point.t, model.horizon, cfg.n_steps)
    samples = draw_samples(model, grid, cfg.m0, cfg.m1, cfg.seed, mode=cfg.sampling,
                           independent_inner=cfg.independent_inner)
    v0 = v0_mc(model, boundary, point, samples)
    parts = ("drift", "vol")
    if unc is not None and unc.gamma == 0.0 and unc.eta == 0.0:
        parts = ()
    sens_drift, sens_vol, used_hessian = sensitivity_mc(
        model, boundary, point, samples, h=cfg.h, force_fd=cfg.force_fd,
        fd_scheme=cfg.fd_scheme, kernel=cfg.kernel, workers=workers, parts=parts)
    runtime = time.perf_counter() - t0
    return SensitivityReport(
        v0=v0, sens_drift=sens_drift, sens_vol=sens_vol,
        used_hessian_path=used_hessian, runtime_seconds=runtime,
        predicted_ops=predicted_complexity(model.dim, cfg.n_steps, cfg.m0, cfg.m1),
        d=model.dim, n_steps=cfg.n_steps, m0=cfg.m0, m1=cfg.m1,
        h=cfg.h if cfg.h is not None else default_bump(point), seed=cfg.seed)
