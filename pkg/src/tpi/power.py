"""Symmetric and asymmetric third-order power iteration with trace capture.

The basic update is

    x <- T(I, x, x) / ||T(I, x, x)||

which, for a factored tensor with component matrix A and unit weights, is the
O(dk) map ``x <- A (A^T x)^{*2} / ||.||`` (elementwise square).  The engine
records per-step scalars (and optionally the full iterate and its factored
intermediates) so dynamics can be analyzed offline.

Overcomplete caveat: when k > d the true components are close to, but not
exactly, fixed points of this map.  At small d the iterates typically climb
toward a component and then drift or escape; the trace exists so callers can
see exactly that.  Convergence claims should always be read off the recorded
correlations, not assumed.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateIterateError, InvalidArgumentError
from .tensors import FactoredTensor3, PerturbedTensor, contract_1

_FLOAT_FMT = "%.17g"


def default_max_iters(d):
    """Iteration budget ceil(4*log2(log2(max(d, 4)))) + 10 (log-log growth plus slack)."""
    dd = max(int(d), 4)
    return int(math.ceil(4.0 * math.log2(math.log2(dd)))) + 10


@dataclass
class PowerConfig:
    """Knobs for a power-iteration run.

    max_iters of None resolves to ``default_max_iters(d)`` at run time.
    convergence_gamma is the early-stop margin: a tracked run halts once
    |<x, a_target>| >= 1 - gamma.  trace_level is "none", "norms", or "full".
    """

    max_iters: int | None = None
    convergence_gamma: float = 0.05
    trace_level: str = "norms"
    track_target: int | None = None

    def __post_init__(self):
        if not (0.0 < self.convergence_gamma < 1.0):
            raise InvalidArgumentError("convergence_gamma must lie in (0, 1)")
        if self.max_iters is not None and self.max_iters < 1:
            raise InvalidArgumentError("max_iters must be >= 1")
        if self.trace_level not in ("none", "norms", "full"):
            raise InvalidArgumentError(f"unknown trace_level {self.trace_level!r}")


class IterationTrace:
    """Per-step record of a power run.  Step 0 is the initialization.

    Scalars are kept for every step at trace_level "norms"/"full"; the
    iterates x (and, for factored runs, y = A^T x and w = square of y with
    the first entry removed) only at "full".
    """

    def __init__(self, trace_level):
        self.trace_level = trace_level
        self.unnormalized_norms = []
        self.target_correlations = []
        self.noise_component_norms = []
        self.xs = []
        self.ys = []
        self.ws = []
        self.final_x = None
        self.stop_reason = "max-iters"

    def _append(self, x, unnorm, corr, xi_norm, tensor):
        self.final_x = x
        if self.trace_level == "none":
            return
        self.unnormalized_norms.append(unnorm)
        self.target_correlations.append(corr)
        self.noise_component_norms.append(xi_norm)
        if self.trace_level == "full":
            self.xs.append(x.copy())
            if isinstance(tensor, FactoredTensor3):
                y = tensor.components_b.T @ x
                self.ys.append(y)
                self.ws.append(y[1:] ** 2)

    def __len__(self):
        if self.trace_level == "none":
            return self._n
        return len(self.target_correlations)

    @property
    def correlations(self):
        return np.array(self.target_correlations, dtype=float)

    @property
    def noise_norms(self):
        return np.array(self.noise_component_norms, dtype=float)

    def final_correlation(self):
        c = self.target_correlations[-1]
        return abs(c) if c == c else float("nan")

    def peak_correlation(self):
        c = self.correlations
        return float(np.nanmax(np.abs(c))) if len(c) else float("nan")

    def steps(self):
        """Yield per-step dicts (iteration, correlation, unnorm norm, noise norm)."""
        for i in range(len(self.target_correlations)):
            yield {
                "iteration": i,
                "correlation": self.target_correlations[i],
                "unnormalized_norm": self.unnormalized_norms[i],
                "noise_norm": self.noise_component_norms[i],
            }

    def to_jsonl(self, path):
        with open(path, "w", newline="\n") as fh:
            for rec in self.steps():
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("iteration,correlation,unnormalized_norm,noise_norm\n")
            for rec in self.steps():
                fh.write(
                    "%d,%s,%s,%s\n"
                    % (
                        rec["iteration"],
                        _FLOAT_FMT % rec["correlation"],
                        _FLOAT_FMT % rec["unnormalized_norm"],
                        _FLOAT_FMT % rec["noise_norm"],
                    )
                )


def _check_unit(x, tol=1e-8):
    x = np.asarray(x, dtype=np.float64)
    if abs(float(np.linalg.norm(x)) - 1.0) > tol:
        raise InvalidArgumentError("iterate must be unit norm")
    return x


def power_step(tensor, x):
    """One update: returns (T(I,x,x)/||T(I,x,x)||, ||T(I,x,x)||)."""
    x = _check_unit(x)
    v = contract_1(tensor, x, x)
    nrm = float(np.linalg.norm(v))
    if nrm < 1e-300:
        raise DegenerateIterateError("T(I, x, x) vanished; caller owns the restart policy")
    return v / nrm, nrm


def _target_column(ground_truth, config, mode="a"):
    if config.track_target is None:
        return None
    if ground_truth is None:
        raise InvalidArgumentError("track_target set but no ground truth supplied")
    j = config.track_target
    if not (0 <= j < ground_truth.rank):
        raise InvalidArgumentError("track_target out of range")
    mats = {
        "a": ground_truth.components,
        "b": ground_truth.components_b,
        "c": ground_truth.components_c,
    }
    return mats[mode][:, j]


def run_power(tensor, x0, config=None, ground_truth=None):
    """Iterate power updates from x0, recording a trace.

    Stops early when the tracked correlation reaches 1 - gamma, or when
    successive iterates agree up to sign to 1e-12 (a fixed point).  Always
    runs at most ``max_iters`` updates.
    """
    config = config or PowerConfig()
    x = _check_unit(x0).copy()
    n_iters = config.max_iters or default_max_iters(tensor.dim)
    target = _target_column(ground_truth, config, "a")
    corr = float(x @ target) if target is not None else float("nan")

    trace = IterationTrace(config.trace_level)
    trace._append(x, float("nan"), corr, 0.0, tensor)
    count = 1
    if target is not None and abs(corr) >= 1.0 - config.convergence_gamma:
        trace.stop_reason = "target-correlation"
        trace._n = count
        return trace
    for _ in range(n_iters):
        x_prev = x
        x, unnorm = power_step(tensor, x)
        corr = float(x @ target) if target is not None else float("nan")
        trace._append(x, unnorm, corr, 0.0, tensor)
        count += 1
        if target is not None and abs(corr) >= 1.0 - config.convergence_gamma:
            trace.stop_reason = "target-correlation"
            break
        if min(np.linalg.norm(x - x_prev), np.linalg.norm(x + x_prev)) < 1e-12:
            trace.stop_reason = "fixed-point"
            break
    trace._n = count
    return trace


def _mode_contractions(t, x1, x2, x3):
    """All three one-mode-open contractions, each from the same (x1, x2, x3)."""
    pa = t.components.T @ x1
    pb = t.components_b.T @ x2
    pc = t.components_c.T @ x3
    v1 = t.components @ (t.weights * pb * pc)
    v2 = t.components_b @ (t.weights * pa * pc)
    v3 = t.components_c @ (t.weights * pa * pb)
    return v1, v2, v3


def run_power_asymmetric(tensor, x0, y0, z0, config=None, ground_truth=None):
    """Three-vector power iteration for per-mode component matrices.

    Each sweep computes x1 <- T(I, x2, x3), x2 <- T(x1, I, x3),
    x3 <- T(x1, x2, I) simultaneously — every right-hand side uses the
    iterates from the previous sweep, so with identical component matrices
    and identical starts each mode reproduces the symmetric run exactly.
    Returns one trace per mode.
    """
    if not isinstance(tensor, FactoredTensor3):
        raise InvalidArgumentError("asymmetric runs need a FactoredTensor3")
    config = config or PowerConfig()
    n_iters = config.max_iters or default_max_iters(tensor.dim)
    vecs = [_check_unit(v).copy() for v in (x0, y0, z0)]
    targets = [_target_column(ground_truth, config, m) for m in ("a", "b", "c")]

    traces = [IterationTrace(config.trace_level) for _ in range(3)]
    for tr, v, tg in zip(traces, vecs, targets):
        corr = float(v @ tg) if tg is not None else float("nan")
        tr._append(v, float("nan"), corr, 0.0, None)
        tr._n = 1
    for _ in range(n_iters):
        updates = _mode_contractions(tensor, *vecs)
        prev = vecs
        vecs = []
        done_fixed = True
        done_target = targets[0] is not None
        for i, (tr, raw, tg) in enumerate(zip(traces, updates, targets)):
            nrm = float(np.linalg.norm(raw))
            if nrm < 1e-300:
                raise DegenerateIterateError(f"mode-{i + 1} contraction vanished")
            v = raw / nrm
            corr = float(v @ tg) if tg is not None else float("nan")
            tr._append(v, nrm, corr, 0.0, None)
            tr._n += 1
            vecs.append(v)
            if min(np.linalg.norm(v - prev[i]), np.linalg.norm(v + prev[i])) >= 1e-12:
                done_fixed = False
            if tg is not None and abs(corr) < 1.0 - config.convergence_gamma:
                done_target = False
        if done_fixed:
            for tr in traces:
                tr.stop_reason = "fixed-point"
            break
        if done_target:
            for tr in traces:
                tr.stop_reason = "target-correlation"
            break
    return tuple(traces)


def run_power_with_shadow(perturbed, x0, config=None, ground_truth=None):
    """Noisy power iteration with an exact-tensor shadow decomposition.

    Runs the update on T + E while maintaining the split
    ``x_hat = x + xi``: the shadow x is advanced by the exact-tensor update
    applied to the current shadow and renormalized by the *noisy* update's
    norm (so the split reproduces the noisy iteration identically), and
    ``xi = x_hat - x`` is the accumulated noise component.  With E = 0 the
    two trajectories coincide bitwise and ||xi|| is exactly 0 at every step.

    The recorded iterate and correlations refer to the noisy trajectory;
    ``noise_component_norms`` carries ||xi||.  Once ||xi|| is of order one
    the shadow has decohered from the noisy run and its norm grows or decays
    doubly exponentially — the trace reports this honestly rather than
    clamping it.
    """
    if not isinstance(perturbed, PerturbedTensor):
        raise InvalidArgumentError("run_power_with_shadow needs a PerturbedTensor")
    config = config or PowerConfig()
    n_iters = config.max_iters or default_max_iters(perturbed.dim)
    target = _target_column(ground_truth, config, "a")

    x_hat = _check_unit(x0).copy()
    shadow = x_hat.copy()
    corr = float(x_hat @ target) if target is not None else float("nan")
    trace = IterationTrace(config.trace_level)
    trace._append(x_hat, float("nan"), corr, 0.0, perturbed.signal)
    count = 1
    if target is not None and abs(corr) >= 1.0 - config.convergence_gamma:
        trace.stop_reason = "target-correlation"
        trace._n = count
        return trace
    for _ in range(n_iters):
        nu = contract_1(perturbed, x_hat, x_hat)
        nrm = float(np.linalg.norm(nu))
        if nrm < 1e-300:
            raise DegenerateIterateError("noisy contraction vanished")
        prev = x_hat
        x_hat = nu / nrm
        shadow = contract_1(perturbed.signal, shadow, shadow) / nrm
        xi_norm = float(np.linalg.norm(x_hat - shadow))
        corr = float(x_hat @ target) if target is not None else float("nan")
        trace._append(x_hat, nrm, corr, xi_norm, perturbed.signal)
        count += 1
        if target is not None and abs(corr) >= 1.0 - config.convergence_gamma:
            trace.stop_reason = "target-correlation"
            break
        if min(np.linalg.norm(x_hat - prev), np.linalg.norm(x_hat + prev)) < 1e-12:
            trace.stop_reason = "fixed-point"
            break
    trace._n = count
    return trace
