"""Finite-width Monte-Carlo engine for random dropout networks.

Samples networks with weights W^l_ij ~ N(0, sigma_w^2/N) and biases
b^l_i ~ N(0, sigma_b^2), propagates one or two inputs forward through

    z^l = (1/rho) W^l (p^l . y^{l-1}) + b^l,     y^l = phi(z^l),

with per-layer Bernoulli(rho) masks p^l, and backpropagates the squared
loss E = sum_i (z^L_i)^2 (zero labels, no softmax) through the SAME weights
and the SAME stored masks:

    delta^L = 2 z^L
    delta^l = phi'(z^l) . (p^{l+1}/rho) . (W^{l+1})^T delta^{l+1}
    dE/dW^l_ij = (p^l_j / rho) phi(z^{l-1}_j) delta^l_i

Randomness and reproducibility
------------------------------
All randomness is drawn as scale-free primitives -- standard normals for
weights, biases and input directions, uniforms for masks -- from streams
keyed by (seed, instance, role, layer) through numpy's SeedSequence
spawn-key mechanism driving SFC64.  Hyperparameters (sigma_w, sigma_b, rho,
activation, input norms) are applied as deterministic transforms of those
primitives.  Consequences:

  * everything is reproducible bit-for-bit from (seed, instance);
  * configs sharing (seed, width, depth) consume identical primitives, so a
    multi-config ensemble can generate each weight matrix once and reuse it
    across configs -- bit-identical to running the configs separately, at a
    fraction of the cost (weight generation dominates the runtime);
  * weight matrices are regenerated from their per-layer stream on the fly
    in both passes instead of being stored (L*N^2 doubles would not fit in
    memory at depth-200/width-1000 scale).

Scaling is folded into the layer input vector rather than the N x N matrix
(W @ v with W = s*G equals G @ (s*v) exactly as evaluated here), which both
passes and the fused multi-config path share, keeping them bit-identical.

All arithmetic is float64; gradient products across hundreds of layers
underflow float32.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator, SFC64, SeedSequence

from .activations import Activation
from .errors import ConfigError, DegenerateStateError
from .meanfield import MeanFieldParams, q_fixed_point
from .quadrature import QuadratureRule, make_rule

ROLE_WEIGHTS = 1
ROLE_BIAS = 2
ROLE_MASK_A = 3
ROLE_MASK_B = 4
ROLE_INPUT = 5

METRIC_NAMES = ("q_aa", "c_ab", "g_aa", "g_ab", "g_tilde_ab")

_MASK64 = (1 << 64) - 1


def stream(seed: int, instance: int, role: int, layer: int = 0) -> Generator:
    """The random stream for one (instance, role, layer) slot.

    SFC64 seeded through SeedSequence(seed, spawn_key=(instance, role,
    layer)); both algorithms are documented and version-stable in numpy, so
    any consumer can regenerate any slot independently.
    """
    ss = SeedSequence(entropy=int(seed) & _MASK64, spawn_key=(instance, role, layer))
    return Generator(SFC64(ss))


@dataclass(frozen=True)
class NetworkConfig:
    """One simulated ensemble member family: geometry, parameters, seed."""

    depth_L: int
    width_N: int
    params: MeanFieldParams
    activation: Activation
    seed: int = 0

    def __post_init__(self):
        if self.depth_L < 1:
            raise ConfigError(f"depth_L must be >= 1, got {self.depth_L}")
        if self.width_N < 1:
            raise ConfigError(f"width_N must be >= 1, got {self.width_N}")


@dataclass(frozen=True)
class NetworkInstance:
    """One sampled random network, materialized lazily from its streams.

    weight(l) and bias(l) regenerate the same arrays on every call; this is
    the storage contract that lets deep/wide networks run in bounded memory.
    """

    config: NetworkConfig
    instance: int = 0

    def weight_std(self, layer: int) -> np.ndarray:
        """Unscaled standard-normal weight matrix of layer `layer` (1-based)."""
        if not (1 <= layer <= self.config.depth_L):
            raise ConfigError(f"layer must be in [1, {self.config.depth_L}], got {layer}")
        n = self.config.width_N
        return stream(self.config.seed, self.instance, ROLE_WEIGHTS, layer).standard_normal((n, n))

    def weight(self, layer: int) -> np.ndarray:
        """W^layer with entries N(0, sigma_w^2/N)."""
        scale = math.sqrt(self.config.params.sigma_w_sq / self.config.width_N)
        return self.weight_std(layer) * scale

    def bias_std_block(self) -> np.ndarray:
        """Standard-normal (L, N) bias block; bias(l) = sigma_b * block[l-1]."""
        cfg = self.config
        return stream(cfg.seed, self.instance, ROLE_BIAS).standard_normal(
            (cfg.depth_L, cfg.width_N)
        )

    def bias(self, layer: int) -> np.ndarray:
        if not (1 <= layer <= self.config.depth_L):
            raise ConfigError(f"layer must be in [1, {self.config.depth_L}], got {layer}")
        sb = math.sqrt(self.config.params.sigma_b_sq)
        return self.bias_std_block()[layer - 1] * sb


def sample_network(cfg: NetworkConfig, instance: int = 0) -> NetworkInstance:
    """Instance `instance` of the ensemble defined by cfg; deterministic."""
    if instance < 0:
        raise ConfigError(f"instance must be >= 0, got {instance}")
    return NetworkInstance(config=cfg, instance=instance)


def sample_inputs(
    width_N: int,
    q0: float,
    c0: float,
    seed: int,
    instance: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Two inputs with exact norm (1/N)|x|^2 = q0 and exact correlation c0.

    Gaussian directions, rescaled so the norm holds exactly, with a
    Gram-Schmidt correction so (1/N) x_a . x_b = c0 * q0 exactly.
    """
    if q0 <= 0.0:
        raise ConfigError(f"q0 must be > 0, got {q0!r}")
    if abs(c0) > 1.0:
        raise ConfigError(f"|c0| must be <= 1, got {c0!r}")
    g = stream(seed, instance, ROLE_INPUT).standard_normal((2, width_N))
    target = math.sqrt(q0 * width_N)
    x_a = g[0] * (target / np.linalg.norm(g[0]))
    if abs(c0) == 1.0:
        return x_a, math.copysign(1.0, c0) * x_a
    if width_N < 2:
        raise ConfigError("width_N must be >= 2 for |c0| < 1")
    u = g[1] - (np.dot(g[1], x_a) / np.dot(x_a, x_a)) * x_a
    e = u * (target / np.linalg.norm(u))
    x_b = c0 * x_a + math.sqrt(1.0 - c0 * c0) * e
    return x_a, x_b


@dataclass
class ForwardTrace:
    """Per-layer pre-activations and the dropout masks drawn for one input."""

    config: NetworkConfig
    instance: int
    input_id: str
    x: np.ndarray
    pre_activations: np.ndarray = field(repr=False)  # (L, N)
    masks: np.ndarray = field(repr=False)  # (L, N) bool


@dataclass
class GradientTrace:
    """Backpropagated errors and the input-side gradient factors.

    dE/dW^l is the rank-one product deltas[l-1] (outer) input_factors[l-1];
    weight_grad(l) materializes it (O(N^2), meant for small networks).
    """

    config: NetworkConfig
    instance: int
    input_id: str
    deltas: np.ndarray = field(repr=False)  # (L, N)
    input_factors: np.ndarray = field(repr=False)  # (L, N): (p^l/rho) * y^{l-1}

    def weight_grad(self, layer: int) -> np.ndarray:
        if not (1 <= layer <= self.config.depth_L):
            raise ConfigError(f"layer must be in [1, {self.config.depth_L}], got {layer}")
        return np.outer(self.deltas[layer - 1], self.input_factors[layer - 1])


def _mask_block(cfg: NetworkConfig, instance: int, mask_role: int) -> np.ndarray:
    u = stream(cfg.seed, instance, mask_role).random((cfg.depth_L, cfg.width_N))
    return u < cfg.params.rho


def _forward_kernel(w_std, y_prev, mask_row, bias_std_row, s_in, sigma_b):
    """z = W_std @ ((mask * y) * s_in) + sigma_b * bias_std.

    s_in folds sqrt(sigma_w^2/N)/rho into the layer input so the N x N
    matrix itself never needs scaling.  Shared verbatim by the single-trace
    and fused multi-config paths to keep them bit-identical.
    """
    v = (mask_row * y_prev) * s_in
    return w_std @ v + sigma_b * bias_std_row


def _backward_kernel(w_std_next, delta_next, dphi_z, mask_next_row, s_in):
    """delta^l from delta^{l+1} using the transposed (regenerated) weights."""
    t = w_std_next.T @ delta_next
    return dphi_z * (mask_next_row * t) * s_in


def _input_scale(cfg: NetworkConfig) -> float:
    return math.sqrt(cfg.params.sigma_w_sq / cfg.width_N) / cfg.params.rho


def forward(net: NetworkInstance, x: np.ndarray, mask_role: int) -> ForwardTrace:
    """Propagate one input, drawing masks from the given role stream.

    mask_role is an arbitrary integer naming the mask stream (ensembles use
    ROLE_MASK_A / ROLE_MASK_B for their two inputs).
    """
    cfg = net.config
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (cfg.width_N,):
        raise ConfigError(f"input must have shape ({cfg.width_N},), got {x.shape}")
    masks = _mask_block(cfg, net.instance, mask_role)
    bias_std = net.bias_std_block()
    s_in = _input_scale(cfg)
    sb = math.sqrt(cfg.params.sigma_b_sq)
    z = np.empty((cfg.depth_L, cfg.width_N))
    y = x
    for l in range(1, cfg.depth_L + 1):
        w_std = net.weight_std(l)
        z[l - 1] = _forward_kernel(w_std, y, masks[l - 1], bias_std[l - 1], s_in, sb)
        y = cfg.activation.value_at(z[l - 1])
    input_id = {ROLE_MASK_A: "a", ROLE_MASK_B: "b"}.get(mask_role, str(mask_role))
    return ForwardTrace(
        config=cfg,
        instance=net.instance,
        input_id=input_id,
        x=x,
        pre_activations=z,
        masks=masks,
    )


def backward(net: NetworkInstance, trace: ForwardTrace) -> GradientTrace:
    """Exact backpropagation of E = sum (z^L)^2 through the trace's network.

    Reuses the trace's stored masks and regenerates the same weights from
    their per-layer streams.
    """
    cfg = net.config
    if trace.config != cfg or trace.instance != net.instance:
        raise ConfigError("trace was produced by a different network instance")
    L, N = cfg.depth_L, cfg.width_N
    act = cfg.activation
    s_in = _input_scale(cfg)
    z = trace.pre_activations
    masks = trace.masks
    deltas = np.empty((L, N))
    deltas[L - 1] = 2.0 * z[L - 1]
    for l in range(L - 1, 0, -1):
        w_std_next = net.weight_std(l + 1)
        deltas[l - 1] = _backward_kernel(
            w_std_next, deltas[l], act.derivative_at(z[l - 1]), masks[l], s_in
        )
    factors = np.empty((L, N))
    inv_rho = 1.0 / cfg.params.rho
    y_prev = trace.x
    for l in range(1, L + 1):
        factors[l - 1] = (masks[l - 1] * y_prev) * inv_rho
        y_prev = act.value_at(z[l - 1])
    return GradientTrace(
        config=cfg,
        instance=net.instance,
        input_id=trace.input_id,
        deltas=deltas,
        input_factors=factors,
    )


def gradient_metrics(ga: GradientTrace, gb: GradientTrace) -> dict[str, np.ndarray]:
    """Per-layer gradient metrics from two traces of the same instance.

    dE/dW^l is rank one, so the N^2 sums factor exactly into vector products:
      g_aa       (1/N^2) sum_ij (dE_a/dW_ij)^2
      g_ab       |(1/N^2) sum_ij dE_a/dW_ij * dE_b/dW_ij|
      g_tilde_ab (1/N^2) sum_ij |dE_a/dW_ij * dE_b/dW_ij|
    """
    if ga.config != gb.config or ga.instance != gb.instance:
        raise ConfigError("gradient traces come from different network instances")
    n_sq = float(ga.config.width_N) ** 2
    da, db = ga.deltas, gb.deltas
    va, vb = ga.input_factors, gb.input_factors
    g_aa = np.einsum("li,li->l", da, da) * np.einsum("li,li->l", va, va) / n_sq
    g_ab = np.abs(np.einsum("li,li->l", da, db) * np.einsum("li,li->l", va, vb)) / n_sq
    g_tilde = (
        np.einsum("li->l", np.abs(da * db)) * np.einsum("li->l", np.abs(va * vb)) / n_sq
    )
    return {"g_aa": g_aa, "g_ab": g_ab, "g_tilde_ab": g_tilde}


@dataclass(frozen=True)
class EnsembleStats:
    """Per-layer mean/variance/stderr of one metric over instances."""

    metric_name: str
    per_layer_mean: np.ndarray
    per_layer_variance: np.ndarray
    per_layer_stderr: np.ndarray
    n_instances: int


def _validate_metrics(metrics) -> tuple[str, ...]:
    names = tuple(metrics)
    for m in names:
        if m not in METRIC_NAMES:
            raise ConfigError(f"unknown metric {m!r}; expected subset of {METRIC_NAMES}")
    if not names:
        raise ConfigError("at least one metric is required")
    return names


def _instance_metrics_many(configs, instance, c0, q0s, metrics):
    """All requested per-layer metrics for one instance of every config.

    Configs share (seed, width, depth); each weight matrix is generated once
    per layer and reused across configs and passes, which is bit-identical
    to running each config alone because the primitive streams are
    scale-free.
    """
    base = configs[0]
    L, N = base.depth_L, base.width_N
    seed = base.seed
    n_cfg = len(configs)

    need_b = any(m in ("c_ab", "g_ab", "g_tilde_ab") for m in metrics)
    need_grad = any(m in ("g_aa", "g_ab", "g_tilde_ab") for m in metrics)

    g_raw = stream(seed, instance, ROLE_INPUT).standard_normal((2, N))
    u_a = stream(seed, instance, ROLE_MASK_A).random((L, N))
    u_b = stream(seed, instance, ROLE_MASK_B).random((L, N)) if need_b else None
    bias_std = stream(seed, instance, ROLE_BIAS).standard_normal((L, N))

    # per-config state
    xs, masks_a, masks_b, s_ins, sbs = [], [], [], [], []
    z_a = [np.empty((L, N)) for _ in range(n_cfg)]
    z_b = [np.empty((L, N)) for _ in range(n_cfg)] if need_b else None
    y_a = [None] * n_cfg
    y_b = [None] * n_cfg
    for k, cfg in enumerate(configs):
        x_a, x_b = _inputs_from_primitives(g_raw, N, q0s[k], c0)
        xs.append((x_a, x_b))
        masks_a.append(u_a < cfg.params.rho)
        masks_b.append(u_b < cfg.params.rho if need_b else None)
        s_ins.append(_input_scale(cfg))
        sbs.append(math.sqrt(cfg.params.sigma_b_sq))
        y_a[k] = x_a
        y_b[k] = x_b

    for l in range(1, L + 1):
        w_std = stream(seed, instance, ROLE_WEIGHTS, l).standard_normal((N, N))
        for k, cfg in enumerate(configs):
            z_a[k][l - 1] = _forward_kernel(
                w_std, y_a[k], masks_a[k][l - 1], bias_std[l - 1], s_ins[k], sbs[k]
            )
            y_a[k] = cfg.activation.value_at(z_a[k][l - 1])
            if need_b:
                z_b[k][l - 1] = _forward_kernel(
                    w_std, y_b[k], masks_b[k][l - 1], bias_std[l - 1], s_ins[k], sbs[k]
                )
                y_b[k] = cfg.activation.value_at(z_b[k][l - 1])

    out = [dict() for _ in range(n_cfg)]
    for k in range(n_cfg):
        if "q_aa" in metrics:
            out[k]["q_aa"] = np.einsum("li,li->l", z_a[k], z_a[k]) / N
        if "c_ab" in metrics:
            qa = np.einsum("li,li->l", z_a[k], z_a[k])
            qb = np.einsum("li,li->l", z_b[k], z_b[k])
            cross = np.einsum("li,li->l", z_a[k], z_b[k])
            denom = np.sqrt(qa * qb)
            if np.any(denom == 0.0):
                raise DegenerateStateError("zero-length layer; correlation undefined")
            out[k]["c_ab"] = cross / denom

    if not need_grad:
        return out

    d_a = [2.0 * z_a[k][L - 1] for k in range(n_cfg)]
    d_b = [2.0 * z_b[k][L - 1] for k in range(n_cfg)] if need_b else None
    deltas_a = [np.empty((L, N)) for _ in range(n_cfg)]
    deltas_b = [np.empty((L, N)) for _ in range(n_cfg)] if need_b else None
    for k in range(n_cfg):
        deltas_a[k][L - 1] = d_a[k]
        if need_b:
            deltas_b[k][L - 1] = d_b[k]
    for l in range(L - 1, 0, -1):
        w_std = stream(seed, instance, ROLE_WEIGHTS, l + 1).standard_normal((N, N))
        for k, cfg in enumerate(configs):
            act = cfg.activation
            deltas_a[k][l - 1] = _backward_kernel(
                w_std, deltas_a[k][l], act.derivative_at(z_a[k][l - 1]),
                masks_a[k][l], s_ins[k],
            )
            if need_b:
                deltas_b[k][l - 1] = _backward_kernel(
                    w_std, deltas_b[k][l], act.derivative_at(z_b[k][l - 1]),
                    masks_b[k][l], s_ins[k],
                )

    for k, cfg in enumerate(configs):
        act = cfg.activation
        inv_rho = 1.0 / cfg.params.rho
        va = np.empty((L, N))
        vb = np.empty((L, N)) if need_b else None
        ya, yb = xs[k][0], xs[k][1]
        for l in range(1, L + 1):
            va[l - 1] = (masks_a[k][l - 1] * ya) * inv_rho
            ya = act.value_at(z_a[k][l - 1])
            if need_b:
                vb[l - 1] = (masks_b[k][l - 1] * yb) * inv_rho
                yb = act.value_at(z_b[k][l - 1])
        n_sq = float(N) ** 2
        if "g_aa" in metrics:
            out[k]["g_aa"] = (
                np.einsum("li,li->l", deltas_a[k], deltas_a[k])
                * np.einsum("li,li->l", va, va)
                / n_sq
            )
        if "g_ab" in metrics:
            out[k]["g_ab"] = np.abs(
                np.einsum("li,li->l", deltas_a[k], deltas_b[k])
                * np.einsum("li,li->l", va, vb)
            ) / n_sq
        if "g_tilde_ab" in metrics:
            out[k]["g_tilde_ab"] = (
                np.einsum("li->l", np.abs(deltas_a[k] * deltas_b[k]))
                * np.einsum("li->l", np.abs(va * vb))
                / n_sq
            )
    return out


def _inputs_from_primitives(g_raw, N, q0, c0):
    """sample_inputs applied to pre-drawn direction primitives."""
    target = math.sqrt(q0 * N)
    x_a = g_raw[0] * (target / np.linalg.norm(g_raw[0]))
    if abs(c0) == 1.0:
        return x_a, math.copysign(1.0, c0) * x_a
    u = g_raw[1] - (np.dot(g_raw[1], x_a) / np.dot(x_a, x_a)) * x_a
    e = u * (target / np.linalg.norm(u))
    return x_a, c0 * x_a + math.sqrt(1.0 - c0 * c0) * e


def default_q0(cfg: NetworkConfig, rule: QuadratureRule | None = None) -> float:
    """Input norm at the length fixed point, so layer statistics start there."""
    rule = rule or make_rule(64)
    q_star, _ = q_fixed_point(cfg.params, cfg.activation, rule)
    return q_star


def ensemble_run_many(
    configs: list[NetworkConfig],
    n_instances: int,
    c0: float = 0.9,
    metrics=("q_aa",),
    q0s: list[float] | None = None,
    threads: int = 1,
) -> list[dict[str, EnsembleStats]]:
    """Ensemble statistics for several configs sharing (seed, width, depth).

    Weight generation dominates the cost and is shared across configs (see
    module docstring); results are bit-identical to running each config
    through ensemble_run separately with the same seed.
    """
    if not configs:
        raise ConfigError("at least one config is required")
    if n_instances < 2:
        raise ConfigError(f"n_instances must be >= 2, got {n_instances}")
    if abs(c0) > 1.0:
        raise ConfigError(f"|c0| must be <= 1, got {c0!r}")
    base = configs[0]
    for cfg in configs[1:]:
        if (cfg.seed, cfg.width_N, cfg.depth_L) != (base.seed, base.width_N, base.depth_L):
            raise ConfigError(
                "shared ensemble requires identical (seed, width_N, depth_L) across configs"
            )
    names = _validate_metrics(metrics)
    if q0s is None:
        q0s = [default_q0(cfg) for cfg in configs]
    elif len(q0s) != len(configs):
        raise ConfigError("q0s must match configs in length")

    def worker(i):
        return _instance_metrics_many(configs, i, c0, q0s, names)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_instance = list(pool.map(worker, range(n_instances)))
    else:
        per_instance = [worker(i) for i in range(n_instances)]

    results = []
    for k in range(len(configs)):
        stats = {}
        for m in names:
            data = np.stack([per_instance[i][k][m] for i in range(n_instances)])
            mean = data.mean(axis=0)
            var = data.var(axis=0, ddof=1)
            stats[m] = EnsembleStats(
                metric_name=m,
                per_layer_mean=mean,
                per_layer_variance=var,
                per_layer_stderr=np.sqrt(var / n_instances),
                n_instances=n_instances,
            )
        results.append(stats)
    return results


def ensemble_run(
    cfg: NetworkConfig,
    n_instances: int,
    c0: float = 0.9,
    metrics=("q_aa",),
    q0: float | None = None,
    threads: int = 1,
) -> dict[str, EnsembleStats]:
    """Ensemble statistics for one config; see ensemble_run_many."""
    q0s = None if q0 is None else [q0]
    return ensemble_run_many([cfg], n_instances, c0=c0, metrics=metrics, q0s=q0s, threads=threads)[0]
