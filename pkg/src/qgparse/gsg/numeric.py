"""Losses, biaffine table scoring and gumbel-softmax label transfer.

Every differentiable forward function has a hand-written backward
counterpart; ``tests/test_gradients.py`` checks them against central
finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ..errors import ContractViolation

LABELS = ("O", "B-V", "I-V", "B-E", "I-E", "B-T", "I-T", "B-VT", "I-VT")
NUM_LABELS = len(LABELS)
LABEL_INDEX = {name: i for i, name in enumerate(LABELS)}

PROB_FLOOR = 1e-12

# Table 6 defaults
H_RB = 1024
H_BI = 256
H_LE = 256
TAU = 0.05


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - np.max(x, axis=axis, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))


def softmax_backward(probs: np.ndarray, dprobs: np.ndarray) -> np.ndarray:
    """Gradient wrt logits given the gradient wrt softmax outputs (last axis)."""
    return probs * (dprobs - np.sum(dprobs * probs, axis=-1, keepdims=True))


# -- tables ------------------------------------------------------------------

@dataclass
class QuestionEncoding:
    tokens: list
    features: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] != len(self.tokens):
            raise ContractViolation("features must be an n x h matrix with one row per token")
        if self.features.shape[0] < 2:
            raise ContractViolation("an encoding needs [CLS] plus at least one token")
        if not np.all(np.isfinite(self.features)):
            raise ContractViolation("non-finite token features")

    @property
    def n(self) -> int:
        return self.features.shape[0]


@dataclass
class NeLabelTable:
    logits: np.ndarray
    gold: Optional[np.ndarray] = None

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64)
        if self.logits.ndim != 2 or self.logits.shape[1] != NUM_LABELS:
            raise ContractViolation(f"NE logits must be n x {NUM_LABELS}, got {self.logits.shape}")
        if self.gold is not None:
            self.gold = np.asarray(self.gold, dtype=np.int64)

    @property
    def n(self) -> int:
        return self.logits.shape[0]

    def predictions(self) -> np.ndarray:
        return np.argmax(self.logits, axis=1)


@dataclass
class GcScoreTable:
    probs: np.ndarray
    gold: Optional[np.ndarray] = None

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        p = self.probs
        if p.ndim != 3 or p.shape[0] != p.shape[1] or p.shape[2] != 2:
            raise ContractViolation(f"GC table must be n x n x 2, got {p.shape}")
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=2) - 1.0) > 1e-9):
            raise ContractViolation("GC table cells must be probability pairs")
        if self.gold is not None:
            self.gold = np.asarray(self.gold, dtype=bool)
            if self.gold.shape != p.shape[:2]:
                raise ContractViolation("gold table shape does not match the score table")

    @property
    def n(self) -> int:
        return self.probs.shape[0]

    @property
    def edge(self) -> np.ndarray:
        """n x n probability of the edge class."""
        return self.probs[:, :, 1]


# -- losses ------------------------------------------------------------------

def _check_ne_gold(t: NeLabelTable) -> np.ndarray:
    if t.gold is None:
        raise ContractViolation("NE loss needs gold labels")
    g = t.gold
    if g.shape != (t.n,):
        raise ContractViolation("gold NE labels must be an n-vector")
    if np.any(g < 0) or np.any(g >= NUM_LABELS):
        raise ContractViolation("gold NE label index out of range")
    return g


def ne_loss(t: NeLabelTable) -> float:
    g = _check_ne_gold(t)
    lp = log_softmax(t.logits, axis=1)
    return float(-np.mean(lp[np.arange(t.n), g]))


def ne_loss_grad(t: NeLabelTable) -> np.ndarray:
    g = _check_ne_gold(t)
    d = softmax(t.logits, axis=1)
    d[np.arange(t.n), g] -= 1.0
    return d / t.n


def _check_gc_gold(t: GcScoreTable) -> np.ndarray:
    if t.gold is None:
        raise ContractViolation("table loss needs a gold table")
    if not np.array_equal(t.gold, t.gold.T):
        raise ContractViolation("gold GC table must be symmetric")
    return t.gold.astype(np.int64)


def table_loss(t: GcScoreTable) -> float:
    g = _check_gc_gold(t)
    n = t.n
    picked = np.take_along_axis(t.probs, g[:, :, None], axis=2)[:, :, 0]
    return float(-np.sum(np.log(np.maximum(picked, PROB_FLOOR))) / (n * n))


def table_loss_grad(t: GcScoreTable) -> np.ndarray:
    """Gradient of the table loss wrt the probability table."""
    g = _check_gc_gold(t)
    n = t.n
    d = np.zeros_like(t.probs)
    picked = np.take_along_axis(t.probs, g[:, :, None], axis=2)[:, :, 0]
    live = picked > PROB_FLOOR
    vals = np.where(live, -1.0 / (n * n * np.where(live, picked, 1.0)), 0.0)
    np.put_along_axis(d, g[:, :, None], vals[:, :, None], axis=2)
    return d


def symmetry_loss(t: GcScoreTable) -> float:
    p = t.probs
    n = t.n
    return float(np.sum(np.abs(p - p.transpose(1, 0, 2))) / (n * n))


def symmetry_loss_grad(t: GcScoreTable) -> np.ndarray:
    p = t.probs
    n = t.n
    s = np.sign(p - p.transpose(1, 0, 2))
    return (s - s.transpose(1, 0, 2)) / (n * n)


def gc_loss(t: GcScoreTable) -> float:
    return table_loss(t) + symmetry_loss(t)


def gsg_loss(ne: NeLabelTable, gc: GcScoreTable) -> float:
    return ne_loss(ne) + gc_loss(gc)


# -- biaffine table filler -----------------------------------------------------

@dataclass
class MLP:
    """One hidden tanh layer: x -> tanh(x W1 + b1) W2 + b2."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @classmethod
    def init(cls, d_in, d_hidden, d_out, rng):
        return cls(rng.normal(0, 1 / np.sqrt(d_in), (d_in, d_hidden)), np.zeros(d_hidden),
                   rng.normal(0, 1 / np.sqrt(d_hidden), (d_hidden, d_out)), np.zeros(d_out))

    @property
    def d_in(self):
        return self.W1.shape[0]

    @property
    def d_out(self):
        return self.W2.shape[1]

    def forward(self, x):
        h = np.tanh(x @ self.W1 + self.b1)
        return h @ self.W2 + self.b2, (x, h)

    def backward(self, cache, dout):
        x, h = cache
        da = (dout @ self.W2.T) * (1.0 - h * h)
        grads = {"W1": x.T @ da, "b1": da.sum(0), "W2": h.T @ dout, "b2": dout.sum(0)}
        return grads, da @ self.W1.T


@dataclass
class BiaffineParams:
    head: MLP
    tail: MLP
    U1: np.ndarray  # 2 x h_bi x h_bi
    U2: np.ndarray  # 2 x 2h_bi
    b: np.ndarray   # 2

    @classmethod
    def init(cls, h_gc, h_bi=H_BI, hidden=None, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        hidden = hidden or h_bi
        return cls(MLP.init(h_gc, hidden, h_bi, rng), MLP.init(h_gc, hidden, h_bi, rng),
                   rng.normal(0, 1 / h_bi, (2, h_bi, h_bi)),
                   rng.normal(0, 1 / np.sqrt(2 * h_bi), (2, 2 * h_bi)), np.zeros(2))

    @property
    def h_bi(self):
        return self.U1.shape[1]

    def check(self, h_gc):
        h = self.h_bi
        if self.head.d_in != h_gc or self.tail.d_in != h_gc:
            raise ContractViolation(f"MLP input width {self.head.d_in}/{self.tail.d_in} != {h_gc}")
        if (self.head.d_out != h or self.tail.d_out != h or self.U1.shape != (2, h, h)
                or self.U2.shape != (2, 2 * h) or self.b.shape != (2,)):
            raise ContractViolation("biaffine parameter shapes are inconsistent")


def biaffine_scores(x: np.ndarray, y: np.ndarray, p: BiaffineParams) -> np.ndarray:
    """Biaff(x, y) = x^T U1 y + U2 (x ++ y) + b for one head/tail pair."""
    return np.einsum("a,kab,b->k", x, p.U1, y) + p.U2 @ np.concatenate([x, y]) + p.b


def biaffine_forward(H_gc: np.ndarray, p: BiaffineParams):
    H_gc = np.asarray(H_gc, dtype=np.float64)
    if H_gc.ndim != 2:
        raise ContractViolation("H_gc must be an n x h_gc matrix")
    p.check(H_gc.shape[1])
    h = p.h_bi
    hh, head_cache = p.head.forward(H_gc)
    ht, tail_cache = p.tail.forward(H_gc)
    left = np.einsum("kab,jb->jka", p.U1, ht)          # n x 2 x h
    z = np.einsum("ia,jka->ijk", hh, left)
    z += (hh @ p.U2[:, :h].T)[:, None, :]
    z += (ht @ p.U2[:, h:].T)[None, :, :]
    z += p.b
    probs = softmax(z, axis=-1)
    return probs, (H_gc, hh, ht, head_cache, tail_cache, probs)


def biaffine_table(H_gc: np.ndarray, p: BiaffineParams) -> GcScoreTable:
    probs, _ = biaffine_forward(H_gc, p)
    return GcScoreTable(probs)


def biaffine_backward(cache, dprobs: np.ndarray, p: BiaffineParams):
    """Return (named parameter gradients, dH_gc) for an upstream dL/dY_gc."""
    _, hh, ht, head_cache, tail_cache, probs = cache
    h = p.h_bi
    dz = softmax_backward(probs, dprobs)
    grads = {
        "U1": np.einsum("ijk,ia,jb->kab", dz, hh, ht, optimize=True),
        "U2": np.concatenate([np.einsum("ijk,ia->ka", dz, hh),
                              np.einsum("ijk,jb->kb", dz, ht)], axis=1),
        "b": dz.sum(axis=(0, 1)),
    }
    dhh = np.einsum("ijk,kab,jb->ia", dz, p.U1, ht, optimize=True) + np.einsum("ijk,ka->ia", dz, p.U2[:, :h])
    dht = np.einsum("ijk,kab,ia->jb", dz, p.U1, hh, optimize=True) + np.einsum("ijk,kb->jb", dz, p.U2[:, h:])
    g_head, dx_head = p.head.backward(head_cache, dhh)
    g_tail, dx_tail = p.tail.backward(tail_cache, dht)
    for k, v in g_head.items():
        grads[f"head_{k}"] = v
    for k, v in g_tail.items():
        grads[f"tail_{k}"] = v
    return grads, dx_head + dx_tail


# -- label transfer -------------------------------------------------------------

@dataclass
class LabelTransferParams:
    W_le: np.ndarray  # |L| x h_le
    tau: float = TAU

    def __post_init__(self):
        if not self.tau > 0:
            raise ContractViolation(f"gumbel temperature must be positive, got {self.tau}")
        if self.W_le.ndim != 2 or self.W_le.shape[0] != NUM_LABELS:
            raise ContractViolation("label embedding must have one row per label")

    @classmethod
    def init(cls, h_le=H_LE, tau=TAU, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        return cls(rng.normal(0, 1 / np.sqrt(h_le), (NUM_LABELS, h_le)), tau)


NoiseSource = Union[None, np.ndarray, np.random.Generator]


def gumbel_noise(shape, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. Gumbel(0, 1) variates as -ln(-ln u) with u uniform on (0, 1)."""
    u = rng.random(shape)
    u = np.clip(u, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
    return -np.log(-np.log(u))


def resolve_noise(noise: NoiseSource, shape) -> np.ndarray:
    if noise is None:
        return np.zeros(shape)
    if isinstance(noise, np.random.Generator):
        return gumbel_noise(shape, noise)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != tuple(shape):
        raise ContractViolation(f"noise shape {noise.shape} != {tuple(shape)}")
    return noise


def gumbel_sample(t: NeLabelTable, p: LabelTransferParams, noise: NoiseSource = None) -> np.ndarray:
    """Row-stochastic relaxed sample softmax((Y_ne + g) / tau).

    `noise` is a Generator (fresh Gumbel draws), an explicit noise array, or
    None for zero noise.
    """
    if not p.tau > 0:
        raise ContractViolation("gumbel temperature must be positive")
    g = resolve_noise(noise, t.logits.shape)
    return softmax((t.logits + g) / p.tau, axis=1)


def gumbel_sample_backward(sample: np.ndarray, dsample: np.ndarray, tau: float) -> np.ndarray:
    return softmax_backward(sample, dsample) / tau


def label_transfer(enc: QuestionEncoding, sample: Optional[np.ndarray], p: Optional[LabelTransferParams]) -> np.ndarray:
    """H_gc = H_rb ++ (sample @ W_le); with `p` None returns H_rb unchanged."""
    if p is None:
        return enc.features
    sample = np.asarray(sample, dtype=np.float64)
    if sample.shape != (enc.n, NUM_LABELS):
        raise ContractViolation(f"label sample must be {enc.n} x {NUM_LABELS}, got {sample.shape}")
    return np.concatenate([enc.features, sample @ p.W_le], axis=1)


def label_transfer_backward(sample: np.ndarray, dH_gc: np.ndarray, p: LabelTransferParams):
    """Return (dH_rb, dsample, dW_le)."""
    h_le = p.W_le.shape[1]
    h_rb = dH_gc.shape[1] - h_le
    de = dH_gc[:, h_rb:]
    return dH_gc[:, :h_rb], de @ p.W_le.T, sample.T @ de
