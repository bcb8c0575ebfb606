"""Multi-agent attention model: attention encoder plus a round-robin multi-vehicle decoder.

Tensors are batched over instances that share the customer count and fleet
size. Weights use the row-vector convention ``y = x @ W + b``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .packing import CompletionGuard
from .problem import CAPACITY_EPS, Instance, Solution, evaluate_solution

N_FEATURES = 5  # x, y, demand, e, l


class InfeasibleDecodeError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 128
    n_layers: int = 3
    n_heads: int = 8
    fleet_size: int = 2
    ff_dim: Optional[int] = None
    # value used as the depot's window close feature
    horizon: float = 10.0
    # None keeps tanh logits in (-1, 1); a number C gives C * tanh(.)
    logit_scale: Optional[float] = None
    packing_guard: bool = True
    # "acting_first": vehicle slots start at the vehicle whose turn it is;
    # "fixed": slots always in vehicle order 1..M
    context_order: str = "acting_first"
    # True restricts the glimpse to nodes the acting vehicle may still choose
    glimpse_mask: bool = False

    def __post_init__(self):
        if self.context_order not in ("acting_first", "fixed"):
            raise ValueError(f"unknown context_order {self.context_order!r}")
        if self.embed_dim < 1 or self.n_heads < 1 or self.embed_dim % self.n_heads:
            raise ValueError("embed_dim must be a positive multiple of n_heads")
        if self.n_layers < 0 or self.fleet_size < 1:
            raise ValueError("n_layers must be >= 0 and fleet_size >= 1")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.n_heads

    @property
    def hidden_dim(self) -> int:
        return self.ff_dim or 4 * self.embed_dim

    @property
    def context_dim(self) -> int:
        return self.embed_dim * (self.fleet_size + 1) + self.fleet_size


def param_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    d, f = cfg.embed_dim, cfg.hidden_dim
    shapes = {"init.W": (N_FEATURES, d), "init.b": (d,)}
    for k in range(cfg.n_layers):
        p = f"enc{k}."
        shapes.update({p + "Wq": (d, d), p + "Wk": (d, d), p + "Wv": (d, d), p + "Wo": (d, d),
                       p + "ff1.W": (d, f), p + "ff1.b": (f,), p + "ff2.W": (f, d), p + "ff2.b": (d,)})
    shapes.update({"dec.glimpse.Wq": (cfg.context_dim, d), "dec.glimpse.Wk": (d, d),
                   "dec.glimpse.Wv": (d, d), "dec.glimpse.Wo": (d, d),
                   "dec.Wq": (d, d), "dec.Wk": (d, d)})
    return shapes


def init_params(cfg: ModelConfig, seed: int = 0) -> dict[str, Tensor]:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)); a bias shares its weight matrix's fan-in."""
    rng = np.random.Generator(np.random.PCG64(seed))
    out = {}
    fan = None
    for name, shape in param_shapes(cfg).items():
        if len(shape) == 2:
            fan = shape[0]
        bound = 1.0 / math.sqrt(fan)
        out[name] = Tensor(rng.uniform(-bound, bound, shape), requires_grad=True)
    return out


# ---------------------------------------------------------------- encoder

@dataclass
class EncoderOutput:
    node_embeddings: Tensor   # (B, N+1, d); row 0 is the depot
    graph_embedding: Tensor   # (B, d); mean over customer rows


def features(instances: Sequence[Instance], cfg: ModelConfig) -> np.ndarray:
    return np.stack([inst.features(cfg.horizon) for inst in instances])


def embed_inputs(x, params) -> Tensor:
    return ad.matmul(x, params["init.W"]) + params["init.b"]


def _split_heads(x: Tensor, Z: int) -> Tensor:
    B, n, d = x.shape
    return x.reshape(B, n, Z, d // Z).transpose(0, 2, 1, 3)


def _merge_heads(x: Tensor) -> Tensor:
    B, Z, n, dk = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, n, Z * dk)


def attention_layer(h: Tensor, params, prefix: str, n_heads: int) -> Tensor:
    """Multi-head self-attention with skip connection, then the ReLU feed-forward with skip."""
    dk = h.shape[-1] // n_heads
    q = _split_heads(h @ params[prefix + "Wq"], n_heads)
    k = _split_heads(h @ params[prefix + "Wk"], n_heads)
    v = _split_heads(h @ params[prefix + "Wv"], n_heads)
    scores = ad.scale(q @ k.transpose(0, 1, 3, 2), 1.0 / math.sqrt(dk))
    heads = ad.softmax(scores) @ v
    # concatenated heads times Wo == sum over heads of W_z^O h'_z
    h_hat = h + _merge_heads(heads) @ params[prefix + "Wo"]
    hidden = ad.relu(h_hat @ params[prefix + "ff1.W"] + params[prefix + "ff1.b"])
    return h_hat + (hidden @ params[prefix + "ff2.W"] + params[prefix + "ff2.b"])


def encode(instances: Sequence[Instance], params, cfg: ModelConfig) -> EncoderOutput:
    h = embed_inputs(features(instances, cfg), params)
    for k in range(cfg.n_layers):
        h = attention_layer(h, params, f"enc{k}.", cfg.n_heads)
    return EncoderOutput(h, ad.mean(h[:, 1:, :], axis=1))


# ---------------------------------------------------------------- decoder

@dataclass
class DecoderState:
    """Batched decoding state; index b is one instance."""

    instances: list
    visited: np.ndarray      # (B, N+1) bool, depot always set
    remaining: np.ndarray    # (B, M) remaining capacity
    last: np.ndarray         # (B, M) last node per vehicle (0 = depot)
    elapsed: np.ndarray      # (B, M) travel time so far
    arrival: np.ndarray      # (B, N+1)
    active: np.ndarray       # (B,) vehicle whose turn it is
    retired: np.ndarray      # (B, M) bool
    guards: list
    routes: list
    t: int = 0
    clamp_events: int = 0

    @classmethod
    def initial(cls, instances: Sequence[Instance], packing_guard: bool = True) -> "DecoderState":
        B, n, M = len(instances), instances[0].n, instances[0].fleet_size
        if any(i.n != n or i.fleet_size != M for i in instances):
            raise ValueError("a decoding batch needs a common customer count and fleet size")
        visited = np.zeros((B, n + 1), dtype=bool)
        visited[:, 0] = True
        caps = np.array([[i.capacity] * M for i in instances])
        return cls(
            instances=list(instances),
            visited=visited,
            remaining=caps,
            last=np.zeros((B, M), dtype=np.int64),
            elapsed=np.zeros((B, M)),
            arrival=np.zeros((B, n + 1)),
            active=np.zeros(B, dtype=np.int64),
            retired=np.zeros((B, M), dtype=bool),
            guards=[CompletionGuard(i.demands, i.capacity, M, enabled=packing_guard) for i in instances],
            routes=[[[] for _ in range(M)] for _ in instances],
        )

    @property
    def done(self) -> bool:
        return bool(self.visited.all())

    def admissible_mask(self) -> np.ndarray:
        """Advance each instance to its next vehicle that can act; True marks masked nodes.

        Vehicles with no admissible customer are retired and skipped without
        using up a timestep.
        """
        B, M = self.retired.shape
        mask = np.ones_like(self.visited)
        for b in range(B):
            if self.visited[b].all():
                continue
            guard = self.guards[b]
            m = int(self.active[b])
            for _ in range(M + 1):
                if self.retired[b, m]:
                    m = (m + 1) % M
                    continue
                allowed = guard.allowed(m)
                if allowed:
                    break
                guard.retire(m)
                self.retired[b, m] = True
                m = (m + 1) % M
            else:
                raise InfeasibleDecodeError(
                    f"instance {b}: every vehicle retired with customers "
                    f"{sorted(np.flatnonzero(~self.visited[b]).tolist())} unserved")
            if self.retired[b].all():
                raise InfeasibleDecodeError(f"instance {b}: every vehicle retired")
            self.active[b] = m
            mask[b, allowed] = False
        return mask

    def apply(self, chosen: np.ndarray) -> None:
        B, M = self.retired.shape
        for b in range(B):
            inst = self.instances[b]
            m, c = int(self.active[b]), int(chosen[b])
            if self.visited[b, c]:
                raise AssertionError(f"instance {b}: customer {c} selected twice")
            d = inst.demands[c]
            if self.remaining[b, m] - d < -CAPACITY_EPS:
                self.clamp_events += 1
            self.remaining[b, m] = max(0.0, self.remaining[b, m] - d)
            self.elapsed[b, m] += inst.dist[self.last[b, m], c]
            self.arrival[b, c] = self.elapsed[b, m]
            self.last[b, m] = c
            self.visited[b, c] = True
            self.guards[b].commit(m, c)
            self.routes[b][m].append(c)
            nxt = (m + 1) % M
            for _ in range(M):
                if not self.retired[b, nxt]:
                    break
                nxt = (nxt + 1) % M
            self.active[b] = nxt
        self.t += 1


@dataclass
class DecoderCache:
    """Projections of the final node embeddings reused at every step."""

    enc: EncoderOutput
    glimpse_k: Tensor   # (B, Z, N+1, dk)
    glimpse_v: Tensor   # (B, Z, N+1, dk)
    logit_k: Tensor     # (B, N+1, d)


def precompute(enc: EncoderOutput, params, cfg: ModelConfig) -> DecoderCache:
    h = enc.node_embeddings
    return DecoderCache(
        enc,
        _split_heads(h @ params["dec.glimpse.Wk"], cfg.n_heads),
        _split_heads(h @ params["dec.glimpse.Wv"], cfg.n_heads),
        h @ params["dec.Wk"],
    )


def context_vehicles(state: DecoderState, order: str = "acting_first") -> np.ndarray:
    """(B, M) vehicle index placed in each context slot."""
    B, M = state.last.shape
    slots = np.tile(np.arange(M), (B, 1))
    if order == "acting_first":
        slots = (slots + state.active[:, None]) % M
    return slots


def build_context(state: DecoderState, enc: EncoderOutput, order: str = "acting_first") -> Tensor:
    """[graph; h_last; cap; ...] with one (last node, remaining capacity) pair per vehicle slot.

    Shape (B, d(M+1)+M). With ``order="acting_first"`` the first pair belongs to
    the vehicle about to move and the rest follow in round-robin order, so the
    query can tell which vehicle it is choosing for.
    """
    h = enc.node_embeddings
    B, M = state.last.shape
    rows = np.arange(B)
    slots = context_vehicles(state, order)
    parts = [enc.graph_embedding]
    for j in range(M):
        m = slots[:, j]
        parts.append(h[rows, state.last[rows, m]])
        parts.append(Tensor(state.remaining[rows, m][:, None].copy()))
    return ad.concat(parts, axis=-1)


def step_log_probs(state: DecoderState, cache: DecoderCache, params, cfg: ModelConfig,
                   mask: np.ndarray) -> Tensor:
    """Log-probabilities over nodes (B, N+1) for the active vehicles; masked nodes get ~ -inf."""
    ctx = build_context(state, cache.enc, cfg.context_order)
    B = ctx.shape[0]
    Z, dk, d = cfg.n_heads, cfg.head_dim, cfg.embed_dim
    # one-query cross-attention glimpse over the node embeddings
    q = (ctx @ params["dec.glimpse.Wq"]).reshape(B, Z, 1, dk)
    scores = ad.scale(q @ cache.glimpse_k.transpose(0, 1, 3, 2), 1.0 / math.sqrt(dk))
    if cfg.glimpse_mask:
        scores = ad.masked_fill(scores, mask[:, None, None, :], -np.inf)
    att = ad.softmax(scores)
    glimpse = (att @ cache.glimpse_v).reshape(B, d) @ params["dec.glimpse.Wo"]
    qc = (glimpse @ params["dec.Wq"]).reshape(B, d, 1)
    compat = (cache.logit_k @ qc).reshape(B, -1)
    u = ad.tanh(ad.scale(compat, 1.0 / math.sqrt(d)))
    if cfg.logit_scale is not None:
        u = ad.scale(u, cfg.logit_scale)
    return ad.log_softmax(ad.masked_fill(u, mask, -np.inf))


def choose(logp: np.ndarray, mask: np.ndarray, mode: str, rng: Optional[np.random.Generator]) -> np.ndarray:
    if mode == "greedy":
        # argmax returns the first maximum, i.e. the lowest node id on ties
        return np.argmax(np.where(mask, -np.inf, logp), axis=1)
    if mode != "sample":
        raise ValueError(f"unknown decode mode {mode!r}")
    p = np.where(mask, 0.0, np.exp(logp))
    cum = np.cumsum(p, axis=1)
    u = rng.random(len(p)) * cum[:, -1]
    idx = np.array([np.searchsorted(cum[b], u[b], side="right") for b in range(len(p))])
    last_ok = p.shape[1] - 1 - np.argmax((~mask)[:, ::-1], axis=1)
    return np.minimum(idx, last_ok)


def decode_step(state: DecoderState, cache: DecoderCache, params, cfg: ModelConfig,
                mode: str, rng: Optional[np.random.Generator] = None, forced: Optional[np.ndarray] = None):
    """Pick one customer for every instance's active vehicle.

    ``forced`` replays given choices instead of picking. Returns (chosen
    nodes, log-prob tensor of the choices (B,), full log-prob tensor (B, N+1),
    mask, acting vehicles); ``state`` is advanced in place.
    """
    mask = state.admissible_mask()
    acting = state.active.copy()
    logp = step_log_probs(state, cache, params, cfg, mask)
    if forced is not None:
        chosen = np.asarray(forced, dtype=np.int64)
        if mask[np.arange(len(chosen)), chosen].any():
            raise ValueError(f"replayed action is not admissible at step {state.t}")
    else:
        chosen = choose(logp.data, mask, mode, rng)
    picked = logp[np.arange(len(chosen)), chosen]
    state.apply(chosen)
    return chosen, picked, logp, mask, acting


@dataclass
class RolloutResult:
    solution: Solution
    log_prob: float
    per_step_probs: Optional[list] = field(default=None, repr=False)


def rollout_batch(instances: Sequence[Instance], params, cfg: ModelConfig, mode: str = "greedy",
                  rng: Optional[np.random.Generator] = None, trace: bool = False,
                  actions: Optional[np.ndarray] = None):
    """Decode a batch; returns (solutions, summed log-prob tensor (B,), state, traces).

    ``actions`` (B, N) replays recorded customer sequences (in decode order)
    so their log-probability can be differentiated.
    """
    if instances[0].fleet_size != cfg.fleet_size:
        raise ValueError(f"model built for {cfg.fleet_size} vehicles, instance has {instances[0].fleet_size}")
    if mode == "sample" and rng is None:
        raise ValueError("sample mode needs a random generator")
    enc = encode(instances, params, cfg)
    cache = precompute(enc, params, cfg)
    state = DecoderState.initial(instances, cfg.packing_guard)
    total = None
    traces = [[] for _ in instances] if trace else None
    while not state.done:
        forced = None if actions is None else np.asarray(actions)[:, state.t]
        chosen, picked, logp, mask, acting = decode_step(state, cache, params, cfg, mode, rng, forced)
        total = picked if total is None else total + picked
        if trace:
            probs = np.where(mask, 0.0, np.exp(logp.data))
            for b in range(len(instances)):
                traces[b].append((int(acting[b]), int(chosen[b]), probs[b]))
    if total is None:
        total = Tensor(np.zeros(len(instances)))
    sols = [evaluate_solution(inst, routes) for inst, routes in zip(instances, state.routes)]
    return sols, total, state, traces


def rollout(inst: Instance, params, cfg: ModelConfig, mode: str = "greedy",
            rng: Optional[np.random.Generator] = None, trace: bool = False) -> RolloutResult:
    with ad.no_grad():
        sols, lp, _, traces = rollout_batch([inst], params, cfg, mode, rng, trace)
    return RolloutResult(sols[0], float(lp.data[0]), traces[0] if traces else None)


# ---------------------------------------------------------------- model wrapper

class MAAM:
    """Parameters plus configuration, with batched greedy/sample solving."""

    def __init__(self, cfg: ModelConfig, params: Optional[dict] = None, seed: int = 0):
        self.cfg = cfg
        self.params = params if params is not None else init_params(cfg, seed)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def clone(self) -> "MAAM":
        return MAAM(self.cfg, {k: Tensor(v.data.copy(), requires_grad=True) for k, v in self.params.items()})

    def load_state(self, other: "MAAM") -> None:
        for k, v in other.params.items():
            self.params[k].data[...] = v.data

    def solve(self, instances: Sequence[Instance], mode: str = "greedy", samples: int = 1,
              seed: int = 0, batch_size: int = 256) -> list[Solution]:
        """Greedy decode, or the best of ``samples`` sampled decodes per instance."""
        rng = np.random.Generator(np.random.PCG64(seed))
        out: list[Optional[Solution]] = [None] * len(instances)
        groups: dict[int, list[int]] = {}
        for i, inst in enumerate(instances):
            groups.setdefault(inst.n, []).append(i)
        with ad.no_grad():
            for idx in groups.values():
                for s in range(0, len(idx), batch_size):
                    chunk = idx[s:s + batch_size]
                    batch = [instances[i] for i in chunk]
                    reps = 1 if mode == "greedy" else samples
                    for _ in range(reps):
                        sols, _, _, _ = rollout_batch(batch, self.params, self.cfg, mode, rng)
                        for i, sol in zip(chunk, sols):
                            if out[i] is None or sol.cost.total < out[i].cost.total:
                                out[i] = sol
        return out

    def save(self, path) -> None:
        ad.save_tensors(path, {k: v.data for k, v in self.params.items()},
                        {"model_config": asdict(self.cfg)})

    @classmethod
    def load(cls, path) -> "MAAM":
        meta, _ = ad.load_tensors(path)
        try:
            cfg = ModelConfig(**meta["model_config"])
        except (KeyError, TypeError) as exc:
            raise ad.CheckpointError(f"{path}: missing or invalid model_config header") from exc
        _, arrays = ad.load_tensors(path, param_shapes(cfg))
        return cls(cfg, {k: Tensor(arrays[k], requires_grad=True) for k in param_shapes(cfg)})
