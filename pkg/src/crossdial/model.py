"""From-scratch attentive sequence-to-sequence model on numpy float64.

A small GRU encoder-decoder with additive attention, trained by manual
reverse-mode differentiation.  The backward pass is hand-written so it can
be audited against centered finite differences (``gradient_check``); with
float64 throughout, training and generation are bit-reproducible for a
fixed seed.

Layout of one forward pass:

    encoder   h_t   = GRU(E[src_t], h_{t-1})              (masked carry)
    init      s_0   = tanh(h_last W_s0 + b_s0)
    attention e_t,i = v . tanh(enc_i A_enc + s_{t-1} A_dec + a_bias)
              c_t   = sum_i softmax(e_t)_i enc_i          (masked softmax)
    decoder   s_t   = GRU([E[y_{t-1}]; c_t], s_{t-1})     (masked carry)
    readout   logit = [s_t; c_t] W_out + b_out

The cross-entropy loss is the mean over non-pad target tokens.
"""

from __future__ import annotations

import base64
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .corpus import Corpus

log = logging.getLogger(__name__)

CONTROL_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")
PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3

MODEL_FORMAT = "attentive-seq2seq-v1"


class ModelError(ValueError):
    """Raised for invalid model configuration or inputs."""


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the optimizer step it happened at."""

    def __init__(self, step: int, loss: float):
        super().__init__(f"training diverged at step {step} (loss={loss!r})")
        self.step = step
        self.loss = loss


# ---------------------------------------------------------------------------
# Vocabulary


@dataclass(frozen=True)
class Vocabulary:
    """Whitespace-token vocabulary with fixed control ids 0..3.

    Unknown tokens encode to ``<unk>``; decoding keeps ``<unk>`` visible
    (it is evidence, not padding) and drops pad/bos/eos.
    """

    tokens: tuple[str, ...]

    def __post_init__(self):
        if self.tokens[: len(CONTROL_TOKENS)] != CONTROL_TOKENS:
            raise ModelError(f"vocabulary must start with the control tokens {CONTROL_TOKENS}")
        if len(set(self.tokens)) != len(self.tokens):
            raise ModelError("vocabulary contains duplicate tokens")
        object.__setattr__(self, "_index", {tok: i for i, tok in enumerate(self.tokens)})

    @classmethod
    def build(cls, corpora: Iterable[Corpus], extra_texts: Iterable[str] = ()) -> "Vocabulary":
        """Collect every whitespace token in the corpora (plus any extra
        texts, e.g. prompt pieces), sorted for a deterministic id order."""
        seen: set[str] = set()
        for corpus in corpora:
            for pair in corpus:
                seen.update(pair.context.split())
                seen.update(pair.response.split())
        for text in extra_texts:
            seen.update(text.split())
        content = sorted(seen - set(CONTROL_TOKENS))
        if not content:
            raise ModelError("no tokens to build a vocabulary from")
        return cls(tokens=CONTROL_TOKENS + tuple(content))

    def encode(self, text: str) -> list[int]:
        index = self._index  # type: ignore[attr-defined]
        return [index.get(tok, UNK_ID) for tok in text.split()]

    def decode(self, ids: Iterable[int]) -> str:
        out = []
        for i in ids:
            if i in (PAD_ID, BOS_ID, EOS_ID):
                continue
            out.append(self.tokens[i])
        return " ".join(out)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index  # type: ignore[attr-defined]


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class ModelConfig:
    embedding_size: int = 32
    hidden_size: int = 64  # also the additive-attention width
    seed: int = 0

    def __post_init__(self):
        if self.embedding_size < 1 or self.hidden_size < 1:
            raise ModelError("embedding_size and hidden_size must be positive")


@dataclass(frozen=True)
class OptimizerConfig:
    """AdamW hyperparameters plus the epoch/batch/length budget of a stage."""

    learning_rate: float
    epochs: int
    batch_size: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    max_length: int = 64  # sequences are truncated to this many tokens

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ModelError("learning_rate must be positive")
        if self.epochs < 0:
            raise ModelError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ModelError("batch_size must be >= 1")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ModelError("betas must lie in [0, 1)")
        if self.eps <= 0 or self.weight_decay < 0:
            raise ModelError("eps must be positive and weight_decay non-negative")
        if self.max_length < 1:
            raise ModelError("max_length must be >= 1")


# Stage defaults: lr 5e-5 / 5 epochs / batch 8 for pretraining and source
# training, lr 1e-4 / 6 epochs / batch 4 for few-shot target adaptation.
PRETRAIN_DEFAULTS = OptimizerConfig(learning_rate=5e-5, epochs=5, batch_size=8)
SOURCE_TRAIN_DEFAULTS = OptimizerConfig(learning_rate=5e-5, epochs=5, batch_size=8)
TARGET_ADAPT_DEFAULTS = OptimizerConfig(learning_rate=1e-4, epochs=6, batch_size=4)


# ---------------------------------------------------------------------------
# Batching


@dataclass(frozen=True)
class Batch:
    src: np.ndarray       # (B, S) int64, pad = 0
    src_mask: np.ndarray  # (B, S) float64 in {0, 1}
    tgt_in: np.ndarray    # (B, T) int64, starts with <bos>
    tgt_out: np.ndarray   # (B, T) int64, ends with <eos>
    tgt_mask: np.ndarray  # (B, T) float64 in {0, 1}

    @property
    def token_count(self) -> float:
        return float(self.tgt_mask.sum())


def encode_pairs(
    vocabulary: Vocabulary, data: Sequence[tuple[str, str]], max_length: int
) -> list[tuple[list[int], list[int]]]:
    encoded = []
    for source, target in data:
        src_ids = vocabulary.encode(source)[:max_length]
        if not src_ids:
            raise ModelError(f"empty source text {source!r}")
        tgt_ids = vocabulary.encode(target)[:max_length]
        encoded.append((src_ids, tgt_ids))
    return encoded


def batch_from_encoded(encoded: Sequence[tuple[list[int], list[int]]]) -> Batch:
    if not encoded:
        raise ModelError("cannot build an empty batch")
    n = len(encoded)
    s_len = max(len(src) for src, _ in encoded)
    t_len = max(len(tgt) for _, tgt in encoded) + 1  # room for <bos>/<eos>
    src = np.full((n, s_len), PAD_ID, dtype=np.int64)
    src_mask = np.zeros((n, s_len))
    tgt_in = np.full((n, t_len), PAD_ID, dtype=np.int64)
    tgt_out = np.full((n, t_len), PAD_ID, dtype=np.int64)
    tgt_mask = np.zeros((n, t_len))
    for i, (src_ids, tgt_ids) in enumerate(encoded):
        src[i, : len(src_ids)] = src_ids
        src_mask[i, : len(src_ids)] = 1.0
        tgt_in[i, 0] = BOS_ID
        tgt_in[i, 1 : len(tgt_ids) + 1] = tgt_ids
        tgt_out[i, : len(tgt_ids)] = tgt_ids
        tgt_out[i, len(tgt_ids)] = EOS_ID
        tgt_mask[i, : len(tgt_ids) + 1] = 1.0
    return Batch(src, src_mask, tgt_in, tgt_out, tgt_mask)


def make_training_batch(
    vocabulary: Vocabulary, data: Sequence[tuple[str, str]], max_length: int = 64
) -> Batch:
    return batch_from_encoded(encode_pairs(vocabulary, data, max_length))


# ---------------------------------------------------------------------------
# Model


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # two-branch form: never exponentiates a positive argument
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class _ForwardCache:
    batch: Batch
    enc_caches: list
    enc_out: np.ndarray
    enc_proj: np.ndarray
    h_last: np.ndarray
    s0: np.ndarray
    dec_steps: list
    token_count: float


class AttentiveSeq2Seq:
    """GRU encoder-decoder with additive attention; parameters live in a
    plain dict of float64 arrays so they can be snapshotted, flattened and
    probed component-wise."""

    def __init__(self, vocabulary: Vocabulary, config: ModelConfig = ModelConfig()):
        self.vocabulary = vocabulary
        self.config = config
        v = len(vocabulary)
        d = config.embedding_size
        h = config.hidden_size
        a = h
        rng = np.random.default_rng(config.seed)
        p: dict[str, np.ndarray] = {}
        p["E"] = rng.normal(0.0, 0.1, size=(v, d))
        for prefix, in_dim in (("enc_", d), ("dec_", d + h)):
            for gate in ("z", "r", "n"):
                p[f"{prefix}W{gate}"] = _glorot(rng, in_dim, h)
            for gate in ("z", "r", "n"):
                p[f"{prefix}U{gate}"] = _glorot(rng, h, h)
            for gate in ("z", "r", "n"):
                p[f"{prefix}b{gate}"] = np.zeros(h)
        p["W_s0"] = _glorot(rng, h, h)
        p["b_s0"] = np.zeros(h)
        p["A_enc"] = _glorot(rng, h, a)
        p["A_dec"] = _glorot(rng, h, a)
        p["a_bias"] = np.zeros(a)
        p["a_v"] = rng.normal(0.0, 1.0 / math.sqrt(a), size=a)
        p["W_out"] = _glorot(rng, 2 * h, v)
        p["b_out"] = np.zeros(v)
        self.params = p
        self._param_order = tuple(p)

    # -- bookkeeping ---------------------------------------------------

    @property
    def parameter_count(self) -> int:
        return sum(arr.size for arr in self.params.values())

    def flat_slices(self) -> dict[str, tuple[int, int]]:
        """Half-open [start, stop) of each parameter in the flat vector."""
        out = {}
        offset = 0
        for name in self._param_order:
            size = self.params[name].size
            out[name] = (offset, offset + size)
            offset += size
        return out

    def parameters_flat(self) -> np.ndarray:
        return np.concatenate([self.params[name].ravel() for name in self._param_order])

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in self.params.items()}

    def load_snapshot(self, snapshot: dict[str, np.ndarray]) -> None:
        if set(snapshot) != set(self.params):
            raise ModelError("snapshot parameter names do not match the model")
        for name, arr in snapshot.items():
            self.params[name][...] = arr

    # -- building blocks -----------------------------------------------

    def _gru_forward(self, x, h_prev, prefix, mask_col):
        p = self.params
        az = x @ p[prefix + "Wz"] + h_prev @ p[prefix + "Uz"] + p[prefix + "bz"]
        z = _sigmoid(az)
        ar = x @ p[prefix + "Wr"] + h_prev @ p[prefix + "Ur"] + p[prefix + "br"]
        r = _sigmoid(ar)
        rh = r * h_prev
        an = x @ p[prefix + "Wn"] + rh @ p[prefix + "Un"] + p[prefix + "bn"]
        n = np.tanh(an)
        h_new = (1.0 - z) * n + z * h_prev
        h = mask_col * h_new + (1.0 - mask_col) * h_prev  # carry state over pads
        return h, (x, h_prev, z, r, n, rh, mask_col)

    def _gru_backward(self, dh, cache, prefix, grads):
        p = self.params
        x, h_prev, z, r, n, rh, mask_col = cache
        dh_new = dh * mask_col
        dh_prev = dh * (1.0 - mask_col)
        dz = dh_new * (h_prev - n)
        dn = dh_new * (1.0 - z)
        dh_prev = dh_prev + dh_new * z
        dan = dn * (1.0 - n * n)
        grads[prefix + "Wn"] += x.T @ dan
        grads[prefix + "Un"] += rh.T @ dan
        grads[prefix + "bn"] += dan.sum(axis=0)
        drh = dan @ p[prefix + "Un"].T
        dh_prev = dh_prev + drh * r
        dr = drh * h_prev
        dx = dan @ p[prefix + "Wn"].T
        daz = dz * z * (1.0 - z)
        grads[prefix + "Wz"] += x.T @ daz
        grads[prefix + "Uz"] += h_prev.T @ daz
        grads[prefix + "bz"] += daz.sum(axis=0)
        dx += daz @ p[prefix + "Wz"].T
        dh_prev = dh_prev + daz @ p[prefix + "Uz"].T
        dar = dr * r * (1.0 - r)
        grads[prefix + "Wr"] += x.T @ dar
        grads[prefix + "Ur"] += h_prev.T @ dar
        grads[prefix + "br"] += dar.sum(axis=0)
        dx += dar @ p[prefix + "Wr"].T
        dh_prev = dh_prev + dar @ p[prefix + "Ur"].T
        return dx, dh_prev

    def _attention_forward(self, s_prev, enc_proj, enc_out, src_mask):
        p = self.params
        q = s_prev @ p["A_dec"]
        u = np.tanh(enc_proj + q[:, None, :] + p["a_bias"])
        e = u @ p["a_v"]
        e = np.where(src_mask > 0, e, -1e30)  # pads never win the softmax
        e = e - e.max(axis=1, keepdims=True)
        w = np.exp(e) * src_mask
        alpha = w / w.sum(axis=1, keepdims=True)
        c = np.einsum("bs,bsh->bh", alpha, enc_out)
        return c, alpha, (s_prev, u, alpha)

    def _attention_backward(self, dc, att_cache, enc_out, grads):
        p = self.params
        s_prev, u, alpha = att_cache
        dalpha = np.einsum("bh,bsh->bs", dc, enc_out)
        denc = alpha[:, :, None] * dc[:, None, :]
        de = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
        grads["a_v"] += np.einsum("bsa,bs->a", u, de)
        dpre = de[:, :, None] * p["a_v"] * (1.0 - u * u)
        grads["a_bias"] += dpre.sum(axis=(0, 1))
        dq = dpre.sum(axis=1)
        grads["A_dec"] += s_prev.T @ dq
        ds_prev = dq @ p["A_dec"].T
        return ds_prev, denc, dpre

    def _run_encoder(self, src, src_mask):
        p = self.params
        n, s_len = src.shape
        h = np.zeros((n, self.config.hidden_size))
        enc_out = np.empty((n, s_len, self.config.hidden_size))
        caches = []
        src_emb = p["E"][src]
        for t in range(s_len):
            h, cache = self._gru_forward(src_emb[:, t], h, "enc_", src_mask[:, t : t + 1])
            caches.append(cache)
            enc_out[:, t] = h
        return enc_out, h, caches

    # -- loss ------------------------------------------------------------

    def forward(self, batch: Batch) -> tuple[float, _ForwardCache]:
        p = self.params
        n = batch.src.shape[0]
        t_len = batch.tgt_in.shape[1]
        token_count = batch.token_count
        if token_count <= 0:
            raise ModelError("batch has no target tokens")
        if (batch.src_mask.sum(axis=1) < 1).any():
            raise ModelError("batch has a row with an empty source")

        enc_out, h_last, enc_caches = self._run_encoder(batch.src, batch.src_mask)
        s0 = np.tanh(h_last @ p["W_s0"] + p["b_s0"])
        enc_proj = enc_out @ p["A_enc"]

        s = s0
        rows = np.arange(n)
        dec_steps = []
        total_nll = 0.0
        for t in range(t_len):
            emb = p["E"][batch.tgt_in[:, t]]
            s_prev = s
            c, _, att_cache = self._attention_forward(s_prev, enc_proj, enc_out, batch.src_mask)
            x = np.concatenate([emb, c], axis=1)
            s, gru_cache = self._gru_forward(x, s_prev, "dec_", batch.tgt_mask[:, t : t + 1])
            o = np.concatenate([s, c], axis=1)
            logits = o @ p["W_out"] + p["b_out"]
            logits -= logits.max(axis=1, keepdims=True)
            ex = np.exp(logits)
            probs = ex / ex.sum(axis=1, keepdims=True)
            picked = probs[rows, batch.tgt_out[:, t]]
            total_nll += float(-(np.log(np.maximum(picked, 1e-300)) * batch.tgt_mask[:, t]).sum())
            dec_steps.append((att_cache, gru_cache, o, probs))
        loss = total_nll / token_count
        cache = _ForwardCache(batch, enc_caches, enc_out, enc_proj, h_last, s0, dec_steps, token_count)
        return loss, cache

    def backward(self, cache: _ForwardCache) -> dict[str, np.ndarray]:
        p = self.params
        batch = cache.batch
        n, s_len = batch.src.shape
        t_len = batch.tgt_in.shape[1]
        h = self.config.hidden_size
        d = self.config.embedding_size
        rows = np.arange(n)
        grads = {name: np.zeros_like(arr) for name, arr in p.items()}

        ds_next = np.zeros((n, h))
        d_proj = np.zeros_like(cache.enc_proj)
        denc = np.zeros_like(cache.enc_out)
        for t in reversed(range(t_len)):
            att_cache, gru_cache, o, probs = cache.dec_steps[t]
            dlogits = probs.copy()
            dlogits[rows, batch.tgt_out[:, t]] -= 1.0
            dlogits *= (batch.tgt_mask[:, t] / cache.token_count)[:, None]
            grads["W_out"] += o.T @ dlogits
            grads["b_out"] += dlogits.sum(axis=0)
            do = dlogits @ p["W_out"].T
            ds = ds_next + do[:, :h]
            dc = do[:, h:].copy()
            dx, ds_prev = self._gru_backward(ds, gru_cache, "dec_", grads)
            np.add.at(grads["E"], batch.tgt_in[:, t], dx[:, :d])
            dc += dx[:, d:]
            ds_prev_att, denc_t, dpre = self._attention_backward(dc, att_cache, cache.enc_out, grads)
            denc += denc_t
            d_proj += dpre
            ds_next = ds_prev + ds_prev_att

        da0 = ds_next * (1.0 - cache.s0 * cache.s0)
        grads["W_s0"] += cache.h_last.T @ da0
        grads["b_s0"] += da0.sum(axis=0)
        dh = da0 @ p["W_s0"].T

        grads["A_enc"] += np.einsum("bsh,bsa->ha", cache.enc_out, d_proj)
        denc += d_proj @ p["A_enc"].T

        for t in reversed(range(s_len)):
            dx, dh = self._gru_backward(denc[:, t] + dh, cache.enc_caches[t], "enc_", grads)
            np.add.at(grads["E"], batch.src[:, t], dx)
        return grads

    def loss_and_grads(self, batch: Batch) -> tuple[float, dict[str, np.ndarray]]:
        loss, cache = self.forward(batch)
        return loss, self.backward(cache)

    def nll(self, batch: Batch) -> float:
        loss, _ = self.forward(batch)
        return loss


# ---------------------------------------------------------------------------
# Optimizer


class AdamW:
    """Adam with decoupled weight decay (decay applied to the parameter,
    not folded into the gradient)."""

    def __init__(
        self,
        params: dict[str, np.ndarray],
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.params = params
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = {name: np.zeros_like(arr) for name, arr in params.items()}
        self.v = {name: np.zeros_like(arr) for name, arr in params.items()}
        self.t = 0

    @classmethod
    def from_config(cls, params: dict[str, np.ndarray], config: OptimizerConfig) -> "AdamW":
        return cls(
            params,
            learning_rate=config.learning_rate,
            beta1=config.beta1,
            beta2=config.beta2,
            eps=config.eps,
            weight_decay=config.weight_decay,
        )

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bias1 = 1.0 - self.beta1**self.t
        bias2 = 1.0 - self.beta2**self.t
        for name, param in self.params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            if self.weight_decay:
                param -= self.learning_rate * self.weight_decay * param
            param -= self.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


# ---------------------------------------------------------------------------
# Training


@dataclass(frozen=True)
class Checkpoint:
    step: int
    valid_loss: float
    params: dict[str, np.ndarray] = field(repr=False)


@dataclass
class TrainResult:
    model: AttentiveSeq2Seq
    checkpoints: list[Checkpoint]
    train_losses: list[tuple[int, float]]  # (step, batch loss before the update)
    valid_losses: list[tuple[int, float]]


def evaluate_nll(model: AttentiveSeq2Seq, data: Sequence[tuple[str, str]], config: OptimizerConfig) -> float:
    """Token-mean negative log likelihood over a corpus (batch-size free)."""
    if not data:
        raise ModelError("cannot evaluate on an empty set")
    encoded = encode_pairs(model.vocabulary, data, config.max_length)
    total = 0.0
    count = 0.0
    for start in range(0, len(encoded), config.batch_size):
        batch = batch_from_encoded(encoded[start : start + config.batch_size])
        loss = model.nll(batch)
        total += loss * batch.token_count
        count += batch.token_count
    return total / count


def train(
    model: AttentiveSeq2Seq,
    train_data: Sequence[tuple[str, str]],
    valid_data: Sequence[tuple[str, str]],
    config: OptimizerConfig,
    eval_every: int | None = None,
    shuffle_each_epoch: bool = False,
    seed: int = 0,
) -> TrainResult:
    """Fine-tune in place on (source, target) text pairs.

    Data order is preserved exactly as given (so externally arranged
    schedules, e.g. interleavings, survive every epoch); pass
    ``shuffle_each_epoch=True`` for an epoch-wise seeded permutation.
    A validation checkpoint (deep parameter copy) is recorded at step 0,
    every ``eval_every`` optimizer steps (end of each epoch when None),
    and after the final step.  ``epochs=0`` or empty ``train_data`` is an
    explicit no-op that still records the step-0 checkpoint.
    """
    if not valid_data:
        raise ModelError("validation set must not be empty")
    if eval_every is not None and eval_every < 1:
        raise ModelError("eval_every must be >= 1")
    encoded = encode_pairs(model.vocabulary, train_data, config.max_length)
    rng = np.random.default_rng(seed)
    optimizer = AdamW.from_config(model.params, config)
    checkpoints: list[Checkpoint] = []
    train_losses: list[tuple[int, float]] = []
    valid_losses: list[tuple[int, float]] = []

    def take_checkpoint(step: int) -> None:
        loss = evaluate_nll(model, valid_data, config)
        if not math.isfinite(loss):
            raise TrainingDivergedError(step, loss)
        valid_losses.append((step, loss))
        checkpoints.append(Checkpoint(step=step, valid_loss=loss, params=model.snapshot()))
        log.info("step %d: valid loss %.6f", step, loss)

    step = 0
    take_checkpoint(0)
    last_eval = 0
    for _ in range(config.epochs):
        if not encoded:
            break
        order = rng.permutation(len(encoded)) if shuffle_each_epoch else np.arange(len(encoded))
        for start in range(0, len(encoded), config.batch_size):
            batch = batch_from_encoded([encoded[i] for i in order[start : start + config.batch_size]])
            loss, grads = model.loss_and_grads(batch)
            if not math.isfinite(loss):
                raise TrainingDivergedError(step, loss)
            optimizer.step(grads)
            step += 1
            train_losses.append((step, loss))
            if eval_every is not None and step % eval_every == 0:
                take_checkpoint(step)
                last_eval = step
        if eval_every is None and step > last_eval:
            take_checkpoint(step)
            last_eval = step
    if step > last_eval:
        take_checkpoint(step)
    return TrainResult(model, checkpoints, train_losses, valid_losses)


def select_best_checkpoint(checkpoints: Sequence[Checkpoint]) -> Checkpoint:
    """Lowest validation loss; exact ties resolve to the earliest step."""
    if not checkpoints:
        raise ModelError("no checkpoints to select from")
    return min(checkpoints, key=lambda ck: (ck.valid_loss, ck.step))


def restore_checkpoint(model: AttentiveSeq2Seq, checkpoint: Checkpoint) -> None:
    model.load_snapshot(checkpoint.params)


# ---------------------------------------------------------------------------
# Span-corruption pretraining


def pretrain_span_corruption(
    model: AttentiveSeq2Seq,
    corpora: Sequence[Corpus],
    config: OptimizerConfig,
    corruption_rate: float = 0.15,
    mean_span_length: float = 3.0,
    template=None,
    seed: int = 0,
    eval_every: int | None = None,
) -> TrainResult:
    """Denoising pretraining on raw "context response" texts.

    Every epoch corrupts the pool afresh (new spans, new order), so the
    model sees each text under several maskings; a fixed corrupted sample
    of at most 64 texts serves as the validation monitor.  Texts shorter
    than two tokens are skipped.  Identity corruptions (an empty target)
    teach nothing and are dropped.
    """
    from .prompting import DEFAULT_TEMPLATE, corrupt_spans

    if template is None:
        template = DEFAULT_TEMPLATE
    missing = [s for s in (template.sentinel0, template.sentinel1) if s not in model.vocabulary]
    if missing:
        # sentinels absent from the vocabulary encode to <unk>, so the
        # model would learn to emit <unk> instead of the span markers
        log.warning("sentinel token(s) %s not in the model vocabulary", missing)
    texts = [f"{pair.context} {pair.response}" for corpus in corpora for pair in corpus]
    usable = [text for text in texts if len(text.split()) >= 2]
    if not usable:
        raise ModelError("no texts with at least two tokens to pretrain on")
    if len(usable) < len(texts):
        log.warning("skipping %d single-token texts", len(texts) - len(usable))
    rng = np.random.default_rng(seed)

    def corrupted(text: str) -> tuple[str, str] | None:
        ex = corrupt_spans(text, corruption_rate, mean_span_length, template, seed=int(rng.integers(2**31)))
        if ex.identity_corruption:
            return None
        return ex.source, ex.target

    valid_idx = rng.choice(len(usable), size=min(64, len(usable)), replace=False)
    valid = [ex for ex in (corrupted(usable[int(i)]) for i in sorted(valid_idx)) if ex is not None]
    if not valid and config.epochs > 0:
        raise ModelError("corruption produced no usable examples; increase corruption_rate")

    train_pairs: list[tuple[str, str]] = []
    dropped = 0
    for _ in range(config.epochs):
        for i in rng.permutation(len(usable)):
            ex = corrupted(usable[int(i)])
            if ex is None:
                dropped += 1
            else:
                train_pairs.append(ex)
    if dropped:
        log.info("dropped %d identity corruptions", dropped)

    if config.epochs == 0:
        # explicit no-op: still produce the step-0 checkpoint
        valid = valid or [(usable[0], usable[0])]
    flat_config = dataclasses.replace(config, epochs=1 if train_pairs else 0)
    return train(model, train_pairs, valid, flat_config, eval_every=eval_every)


# ---------------------------------------------------------------------------
# Generation


@dataclass(frozen=True)
class GenerationResult:
    text: str
    token_ids: tuple[int, ...]
    distributions: tuple[np.ndarray, ...]  # softmax at every decode step


def generate_greedy(model: AttentiveSeq2Seq, source_text: str, max_length: int = 64) -> GenerationResult:
    """Greedy decoding; argmax ties resolve to the lowest token id."""
    p = model.params
    src_ids = model.vocabulary.encode(source_text)[:max_length]
    if not src_ids:
        raise ModelError(f"empty source text {source_text!r}")
    src = np.array([src_ids], dtype=np.int64)
    src_mask = np.ones((1, len(src_ids)))
    enc_out, h_last, _ = model._run_encoder(src, src_mask)
    s = np.tanh(h_last @ p["W_s0"] + p["b_s0"])
    enc_proj = enc_out @ p["A_enc"]
    live = np.ones((1, 1))
    prev = BOS_ID
    ids: list[int] = []
    dists: list[np.ndarray] = []
    for _ in range(max_length):
        emb = p["E"][np.array([prev])]
        c, _, _ = model._attention_forward(s, enc_proj, enc_out, src_mask)
        x = np.concatenate([emb, c], axis=1)
        s, _ = model._gru_forward(x, s, "dec_", live)
        o = np.concatenate([s, c], axis=1)
        logits = (o @ p["W_out"] + p["b_out"])[0]
        logits -= logits.max()
        ex = np.exp(logits)
        probs = ex / ex.sum()
        dists.append(probs)
        nxt = int(np.argmax(probs))
        if nxt == EOS_ID:
            break
        ids.append(nxt)
        prev = nxt
    return GenerationResult(model.vocabulary.decode(ids), tuple(ids), tuple(dists))


def generate_corpus(model: AttentiveSeq2Seq, sources: Iterable[str], max_length: int = 64) -> list[str]:
    return [generate_greedy(model, source, max_length=max_length).text for source in sources]


# ---------------------------------------------------------------------------
# Gradient verification


@dataclass(frozen=True)
class GradientProbe:
    name: str
    flat_index: int
    analytic: float
    numeric: float
    relative_error: float


@dataclass(frozen=True)
class GradientCheckReport:
    max_relative_error: float
    probes: tuple[GradientProbe, ...]
    eps: float


def gradient_check(
    model: AttentiveSeq2Seq,
    batch: Batch,
    probe_count: int = 50,
    eps: float = 1e-4,
    seed: int = 0,
    flat_indices: Sequence[int] | None = None,
    analytic: dict[str, np.ndarray] | None = None,
) -> GradientCheckReport:
    """Compare backprop against centered finite differences.

    Probes ``probe_count`` randomly chosen parameter components (or the
    given ``flat_indices``).  Relative error is |a - n| / max(|a|, |n|,
    1e-6), so a sign-flipped gradient component reads as exactly 2.  An
    ``analytic`` gradient dict may be supplied to audit the auditor.
    """
    _, cache = model.forward(batch)
    grads = model.backward(cache) if analytic is None else analytic
    slices = model.flat_slices()
    total = model.parameter_count
    if flat_indices is None:
        rng = np.random.default_rng(seed)
        flat_indices = sorted(int(i) for i in rng.choice(total, size=min(probe_count, total), replace=False))
    probes = []
    for flat in flat_indices:
        if not (0 <= flat < total):
            raise ModelError(f"flat index {flat} out of range")
        name = next(nm for nm, (start, stop) in slices.items() if start <= flat < stop)
        local = flat - slices[name][0]
        param = model.params[name]
        original = float(param.flat[local])
        ana = float(grads[name].flat[local])
        param.flat[local] = original + eps
        loss_plus = model.nll(batch)
        param.flat[local] = original - eps
        loss_minus = model.nll(batch)
        param.flat[local] = original
        numeric = (loss_plus - loss_minus) / (2.0 * eps)
        rel = abs(ana - numeric) / max(abs(ana), abs(numeric), 1e-6)
        probes.append(GradientProbe(name, flat, ana, numeric, rel))
    return GradientCheckReport(max(pr.relative_error for pr in probes), tuple(probes), eps)


# ---------------------------------------------------------------------------
# Serialization (canonical JSON -> byte-identical files)


def save_model(model: AttentiveSeq2Seq, path: str) -> None:
    payload = {
        "format": MODEL_FORMAT,
        "config": {
            "embedding_size": model.config.embedding_size,
            "hidden_size": model.config.hidden_size,
            "seed": model.config.seed,
        },
        "vocabulary": list(model.vocabulary.tokens),
        "params": {
            name: {
                "shape": list(arr.shape),
                "data": base64.b64encode(np.ascontiguousarray(arr).astype("<f8").tobytes()).decode("ascii"),
            }
            for name, arr in model.params.items()
        },
    }
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")


def load_model(path: str) -> AttentiveSeq2Seq:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != MODEL_FORMAT:
        raise ModelError(f"{path}: not a {MODEL_FORMAT} file")
    vocabulary = Vocabulary(tuple(payload["vocabulary"]))
    config = ModelConfig(**payload["config"])
    model = AttentiveSeq2Seq(vocabulary, config)
    stored = payload["params"]
    if set(stored) != set(model.params):
        raise ModelError(f"{path}: parameter names do not match the architecture")
    for name, entry in stored.items():
        arr = np.frombuffer(base64.b64decode(entry["data"]), dtype="<f8").astype(np.float64)
        arr = arr.reshape(entry["shape"])
        if arr.shape != model.params[name].shape:
            raise ModelError(f"{path}: parameter {name!r} has shape {arr.shape}, expected {model.params[name].shape}")
        model.params[name] = arr.copy()
    return model
