"""Joint NE + GC model: parameters, forward/backward, training and checkpoints.

Checkpoint schema (``.npz``): one array per parameter name below plus
``__config__``, a JSON string with the :class:`GSGConfig` fields.

====================  ==========================
name                  shape
====================  ==========================
ne_W, ne_b            h_rb x 9, 9
le_W                  9 x h_le (causal models only)
head_W1, head_b1      h_gc x h_mlp, h_mlp
head_W2, head_b2      h_mlp x h_bi, h_bi
tail_*                as head_*
U1, U2, b             2 x h_bi x h_bi, 2 x 2h_bi, 2
====================  ==========================
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..errors import ContractViolation
from . import numeric as nm

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GSGConfig:
    h_rb: int = nm.H_RB
    h_bi: int = nm.H_BI
    h_le: int = nm.H_LE
    h_mlp: Optional[int] = None
    tau: float = nm.TAU
    causal: bool = True

    @property
    def h_gc(self) -> int:
        return self.h_rb + self.h_le if self.causal else self.h_rb

    @property
    def hidden(self) -> int:
        return self.h_mlp or self.h_bi


@dataclass
class TrainingExample:
    features: np.ndarray   # n x h_rb
    gold_ne: np.ndarray    # n
    gold_gc: np.ndarray    # n x n bool


@dataclass
class Forward:
    ne_logits: np.ndarray
    gc_probs: np.ndarray
    sample: Optional[np.ndarray]
    H_rb: np.ndarray
    biaffine_cache: tuple = field(repr=False)


class GSGModel:
    def __init__(self, config: GSGConfig, params: dict[str, np.ndarray]):
        self.config = config
        self.params = params
        self._check()

    @classmethod
    def init(cls, config: GSGConfig = GSGConfig(), seed: int = 0) -> "GSGModel":
        rng = np.random.default_rng(seed)
        c = config
        params = {
            "ne_W": rng.normal(0, 1 / np.sqrt(c.h_rb), (c.h_rb, nm.NUM_LABELS)),
            "ne_b": np.zeros(nm.NUM_LABELS),
        }
        if c.causal:
            params["le_W"] = nm.LabelTransferParams.init(c.h_le, c.tau, rng).W_le
        bi = nm.BiaffineParams.init(c.h_gc, c.h_bi, c.hidden, rng)
        for side, mlp in (("head", bi.head), ("tail", bi.tail)):
            for k in ("W1", "b1", "W2", "b2"):
                params[f"{side}_{k}"] = getattr(mlp, k)
        params.update(U1=bi.U1, U2=bi.U2, b=bi.b)
        return cls(config, params)

    def _check(self):
        expected = self.expected_shapes()
        missing = set(expected) - set(self.params)
        if missing:
            raise ContractViolation(f"checkpoint lacks parameters {sorted(missing)}")
        for k, shape in expected.items():
            if self.params[k].shape != shape:
                raise ContractViolation(f"parameter {k} has shape {self.params[k].shape}, expected {shape}")
            if not np.all(np.isfinite(self.params[k])):
                raise ContractViolation(f"parameter {k} is not finite")

    def expected_shapes(self) -> dict[str, tuple]:
        c = self.config
        L = nm.NUM_LABELS
        shapes = {"ne_W": (c.h_rb, L), "ne_b": (L,)}
        if c.causal:
            shapes["le_W"] = (L, c.h_le)
        for side in ("head", "tail"):
            shapes.update({f"{side}_W1": (c.h_gc, c.hidden), f"{side}_b1": (c.hidden,),
                           f"{side}_W2": (c.hidden, c.h_bi), f"{side}_b2": (c.h_bi,)})
        shapes.update(U1=(2, c.h_bi, c.h_bi), U2=(2, 2 * c.h_bi), b=(2,))
        return shapes

    # -- views -------------------------------------------------------------

    @property
    def biaffine(self) -> nm.BiaffineParams:
        p = self.params
        mlp = lambda s: nm.MLP(p[f"{s}_W1"], p[f"{s}_b1"], p[f"{s}_W2"], p[f"{s}_b2"])  # noqa: E731
        return nm.BiaffineParams(mlp("head"), mlp("tail"), p["U1"], p["U2"], p["b"])

    @property
    def label_transfer(self) -> Optional[nm.LabelTransferParams]:
        if not self.config.causal:
            return None
        return nm.LabelTransferParams(self.params["le_W"], self.config.tau)

    # -- forward / backward --------------------------------------------------

    def forward(self, H_rb: np.ndarray, noise: nm.NoiseSource = None) -> Forward:
        H_rb = np.asarray(H_rb, dtype=np.float64)
        if H_rb.ndim != 2 or H_rb.shape[1] != self.config.h_rb:
            raise ContractViolation(f"features must be n x {self.config.h_rb}")
        ne_logits = H_rb @ self.params["ne_W"] + self.params["ne_b"]
        lt = self.label_transfer
        sample = None
        if lt is not None:
            sample = nm.gumbel_sample(nm.NeLabelTable(ne_logits), lt, noise)
            H_gc = np.concatenate([H_rb, sample @ lt.W_le], axis=1)
        else:
            H_gc = H_rb
        probs, cache = nm.biaffine_forward(H_gc, self.biaffine)
        return Forward(ne_logits, probs, sample, H_rb, cache)

    def backward(self, fwd: Forward, d_ne_logits=None, d_gc_probs=None) -> dict[str, np.ndarray]:
        """Gradients of a loss given its partials wrt NE logits and GC probabilities.

        The returned dict also carries ``H_rb`` (gradient wrt the input
        features), which the training loop ignores.
        """
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        d_ne = np.zeros_like(fwd.ne_logits) if d_ne_logits is None else np.array(d_ne_logits, dtype=np.float64)
        d_H = np.zeros_like(fwd.H_rb)
        if d_gc_probs is not None:
            g_bi, d_Hgc = nm.biaffine_backward(fwd.biaffine_cache, d_gc_probs, self.biaffine)
            grads.update(g_bi)
            lt = self.label_transfer
            if lt is not None:
                d_H_part, d_sample, d_le = nm.label_transfer_backward(fwd.sample, d_Hgc, lt)
                grads["le_W"] = d_le
                d_ne = d_ne + nm.gumbel_sample_backward(fwd.sample, d_sample, lt.tau)
                d_H = d_H + d_H_part
            else:
                d_H = d_H + d_Hgc
        grads["ne_W"] = fwd.H_rb.T @ d_ne
        grads["ne_b"] = d_ne.sum(0)
        d_H = d_H + d_ne @ self.params["ne_W"].T
        grads["H_rb"] = d_H
        return grads

    def losses(self, fwd: Forward, gold_ne, gold_gc) -> dict[str, float]:
        ne = nm.NeLabelTable(fwd.ne_logits, gold_ne)
        gc = nm.GcScoreTable(fwd.gc_probs, gold_gc)
        out = {"ne": nm.ne_loss(ne), "tb": nm.table_loss(gc), "sym": nm.symmetry_loss(gc)}
        out["gc"] = out["tb"] + out["sym"]
        out["gsg"] = out["ne"] + out["gc"]
        return out

    def loss_and_grad(self, examples: Sequence[TrainingExample], noises: Sequence[nm.NoiseSource]):
        """Mean l_gsg over `examples` and its gradient wrt the parameters."""
        total = 0.0
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        for ex, noise in zip(examples, noises):
            fwd = self.forward(ex.features, noise)
            total += self.losses(fwd, ex.gold_ne, ex.gold_gc)["gsg"]
            ne = nm.NeLabelTable(fwd.ne_logits, ex.gold_ne)
            gc = nm.GcScoreTable(fwd.gc_probs, ex.gold_gc)
            d_gc = nm.table_loss_grad(gc) + nm.symmetry_loss_grad(gc)
            g = self.backward(fwd, nm.ne_loss_grad(ne), d_gc)
            for k in grads:
                grads[k] += g[k]
        m = len(examples)
        return total / m, {k: v / m for k, v in grads.items()}

    def mean_loss(self, examples, noises) -> float:
        # summed in the same order as loss_and_grad so the two agree bit for bit
        total = 0.0
        for ex, nz in zip(examples, noises):
            total += self.losses(self.forward(ex.features, nz), ex.gold_ne, ex.gold_gc)["gsg"]
        return total / len(examples)

    def predict(self, H_rb: np.ndarray) -> tuple[nm.NeLabelTable, nm.GcScoreTable]:
        """Noise-free inference: the label sample is softmax(Y_ne / tau)."""
        fwd = self.forward(H_rb, None)
        return nm.NeLabelTable(fwd.ne_logits), nm.GcScoreTable(fwd.gc_probs)

    # -- persistence ---------------------------------------------------------

    def save(self, path) -> None:
        arrays = dict(self.params)
        arrays["__config__"] = np.array(json.dumps(asdict(self.config), sort_keys=True))
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path) -> "GSGModel":
        with np.load(path, allow_pickle=False) as data:
            if "__config__" not in data:
                raise ContractViolation(f"{path} is not a model checkpoint (no __config__)")
            config = GSGConfig(**json.loads(str(data["__config__"])))
            params = {k: np.array(data[k], dtype=np.float64) for k in data.files if k != "__config__"}
        return cls(config, params)


# -- training ------------------------------------------------------------------

@dataclass
class AdamW:
    """Decoupled weight decay Adam; defaults follow the reported GSG setting."""

    lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.9
    weight_decay: float = 1e-5
    eps: float = 1e-8

    def __post_init__(self):
        self._m: dict = {}
        self._v: dict = {}
        self._t = 0

    def step(self, params, grads):
        self._t += 1
        for k, p in params.items():
            g = grads[k]
            m = self._m.setdefault(k, np.zeros_like(p))
            v = self._v.setdefault(k, np.zeros_like(p))
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            mhat = m / (1 - self.beta1 ** self._t)
            vhat = v / (1 - self.beta2 ** self._t)
            p *= 1 - self.lr * self.weight_decay
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


DEFAULT_LR = {"gd": 0.5, "adamw": 0.01}


def train(model: GSGModel, examples: Sequence[TrainingExample], steps: int = 200,
          method: str = "adamw", lr: Optional[float] = None, seed: int = 0,
          fixed_noise: bool = True, monotone: bool = True, max_halvings: int = 30) -> list[float]:
    """Full-batch training; returns the loss before each step plus the final loss.

    `method` picks the update direction: ``"adamw"`` (:class:`AdamW`) or
    ``"gd"`` (plain gradient).  With `monotone` every proposed update is
    halved until the objective does not increase (and dropped if that never
    happens), so the history is non-increasing.  That needs a fixed
    objective, hence `fixed_noise` draws one Gumbel noise matrix per example
    up front.  The L1 symmetry term is non-smooth, and plain gradient steps
    tend to stall on its kinks; AdamW does not.
    """
    if method not in DEFAULT_LR:
        raise ContractViolation(f"unknown training method {method!r}")
    if monotone and not fixed_noise:
        raise ContractViolation("monotone training needs fixed noise")
    lr = DEFAULT_LR[method] if lr is None else lr
    rng = np.random.default_rng(seed)

    def draw():
        return [nm.gumbel_noise((ex.features.shape[0], nm.NUM_LABELS), rng) for ex in examples]

    noises = draw() if fixed_noise else None
    opt = AdamW(lr=lr) if method == "adamw" else None
    gd_rate = lr
    history = []
    for step in range(steps):
        cur_noise = noises if fixed_noise else draw()
        loss, grads = model.loss_and_grad(examples, cur_noise)
        history.append(loss)
        old = {k: v.copy() for k, v in model.params.items()}
        if opt is not None:
            opt.step(model.params, grads)
            delta = {k: model.params[k] - old[k] for k in old}
        else:
            delta = {k: -gd_rate * grads[k] for k in old}
            for k in old:
                model.params[k] = old[k] + delta[k]
        if not monotone:
            continue
        scale = 1.0
        for _ in range(max_halvings):
            if model.mean_loss(examples, cur_noise) <= loss:
                break
            scale *= 0.5
            for k in old:
                model.params[k] = old[k] + scale * delta[k]
        else:
            model.params.update(old)
            scale = 0.0
        if opt is None:
            # let the rate recover after a shrink, never past the base rate
            gd_rate = min(lr, max(gd_rate * scale, lr * 2.0 ** -max_halvings) * 2.0)
        if step % 50 == 0:
            log.debug("step %d loss %.6f scale %.3g", step, loss, scale)
    history.append(model.mean_loss(examples, noises if fixed_noise else draw()))
    return history
