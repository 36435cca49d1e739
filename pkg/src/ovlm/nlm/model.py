"""Single-layer GRU language model over subword units."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from ..bpe import END, UNK_CHAR, BpeModel
from ..errors import OvlmError
from ..lexer import escape
from . import kernels

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
CLIP_NORM = 5.0
INIT_SCALE = 0.05


@dataclass(frozen=True)
class NlmConfig:
    vocab_size: int
    embed_dim: int = 512
    hidden_dim: int = 512
    dropout_rate: float = 0.5
    learning_rate: float = 0.1
    batch_size: int = 32
    unroll_len: int = 200
    max_epochs: int = 50
    max_lr_halvings: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.vocab_size <= 0:
            raise OvlmError("empty-vocab", "vocab_size must be positive")
        if min(self.embed_dim, self.hidden_dim, self.batch_size, self.unroll_len) <= 0:
            raise OvlmError("bad-config", "dimensions must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise OvlmError("bad-config", "dropout_rate must be in [0, 1)")
        if self.learning_rate <= 0:
            raise OvlmError("bad-config", "learning_rate must be positive")


PARAM_NAMES = ("embedding", "W_z", "U_z", "b_z", "W_r", "U_r", "b_r",
               "W_h", "U_h", "b_h", "W_out", "b_out")


@dataclass
class NlmParams:
    embedding: np.ndarray  # vocab x embed
    W_z: np.ndarray        # embed x hidden
    U_z: np.ndarray        # hidden x hidden
    b_z: np.ndarray
    W_r: np.ndarray
    U_r: np.ndarray
    b_r: np.ndarray
    W_h: np.ndarray
    U_h: np.ndarray
    b_h: np.ndarray
    W_out: np.ndarray      # hidden x vocab
    b_out: np.ndarray

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.U_z.shape[0]

    @property
    def dtype(self) -> np.dtype:
        return self.embedding.dtype

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, n) for n in PARAM_NAMES]

    def astype(self, dtype) -> "NlmParams":
        return NlmParams(*(np.ascontiguousarray(a, dtype=dtype) for a in self.arrays()))

    def copy(self) -> "NlmParams":
        return NlmParams(*(a.copy() for a in self.arrays()))

    def zeros_like(self) -> "NlmParams":
        return NlmParams(*(np.zeros_like(a) for a in self.arrays()))

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())

    def global_norm(self) -> float:
        return float(np.sqrt(sum(float(np.vdot(a, a)) for a in self.arrays())))

    def equal(self, other: "NlmParams") -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))


def init_model(config: NlmConfig, dtype=np.float32) -> NlmParams:
    """Uniform(-0.05, 0.05) weights from the seeded generator, zero biases."""
    V, D, H = config.vocab_size, config.embed_dim, config.hidden_dim
    rng = np.random.default_rng(config.seed)

    def u(*shape):
        return rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape).astype(dtype)

    def zero(n):
        return np.zeros(n, dtype=dtype)

    return NlmParams(
        embedding=u(V, D),
        W_z=u(D, H), U_z=u(H, H), b_z=zero(H),
        W_r=u(D, H), U_r=u(H, H), b_r=zero(H),
        W_h=u(D, H), U_h=u(H, H), b_h=zero(H),
        W_out=u(H, V), b_out=zero(V),
    )


# --- unit vocabulary ------------------------------------------------------


@dataclass
class UnitVocab:
    """Subword units indexed for the model; ``</t>`` doubles as the file start."""

    units: list[str]
    index: dict[str, int] = field(init=False, repr=False)
    is_end: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.index = {u: i for i, u in enumerate(self.units)}
        if len(self.index) != len(self.units):
            raise OvlmError("bad-vocab", "duplicate units")
        self.is_end = np.array([u.endswith(END) for u in self.units], dtype=bool)

    @classmethod
    def from_bpe(cls, bpe: BpeModel) -> "UnitVocab":
        return cls([UNK_CHAR] + bpe.subword_vocabulary())

    def __len__(self) -> int:
        return len(self.units)

    @property
    def bos(self) -> int:
        return self.index[END]

    @property
    def sha256(self) -> str:
        h = hashlib.sha256()
        for u in self.units:
            h.update(escape(u, space=True).encode("utf-8") + b"\n")
        return h.hexdigest()

    def encode(self, units: Iterable[str]) -> np.ndarray:
        try:
            return np.fromiter((self.index[u] for u in units), dtype=np.int64)
        except KeyError as exc:
            raise OvlmError("bad-unit", f"unit {exc.args[0]!r} not in vocabulary") from None

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.units[i] for i in ids]


@dataclass
class LanguageModel:
    """Parameters, hyperparameters and unit vocabulary travelling together."""

    params: NlmParams
    config: NlmConfig
    vocab: UnitVocab
    meta: dict[str, str] = field(default_factory=dict)

    def copy(self) -> "LanguageModel":
        return LanguageModel(self.params.copy(), self.config, self.vocab, dict(self.meta))


# --- forward --------------------------------------------------------------


def _f64(params: NlmParams) -> NlmParams:
    if params.dtype == np.float64 and all(a.flags.c_contiguous for a in params.arrays()):
        return params
    return params.astype(np.float64)


def _gates(p: NlmParams):
    return (p.W_z, p.U_z, p.b_z, p.W_r, p.U_r, p.b_r, p.W_h, p.U_h, p.b_h)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    shifted = logits - m
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _check_ids(ids: np.ndarray, vocab_size: int) -> None:
    if ids.size and (ids.min() < 0 or ids.max() >= vocab_size):
        raise OvlmError("bad-id", f"unit id out of range [0, {vocab_size})")


def step_batch(params: NlmParams, unit_ids, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Advance ``n`` independent states by one unit each (eval mode).

    Returns next-unit distributions ``(n, V)`` and new states ``(n, H)``.
    """
    p = _f64(params)
    ids = np.asarray(unit_ids, dtype=np.int64).reshape(-1)
    _check_ids(ids, p.vocab_size)
    x = np.ascontiguousarray(p.embedding[ids][None])
    h0 = np.ascontiguousarray(states, dtype=np.float64).reshape(len(ids), p.hidden_dim)
    hs, _, _, _ = kernels.gru_forward(x, h0, *_gates(p))
    h1 = hs[1]
    return softmax(h1 @ p.W_out + p.b_out), h1


def forward_step(params: NlmParams, unit_id: int, state: np.ndarray | None = None,
                 train_mode: bool = False, dropout_rate: float = 0.0,
                 rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Consume one unit; return the next-unit distribution and the new state."""
    p = _f64(params)
    if not 0 <= unit_id < p.vocab_size:
        raise OvlmError("bad-id", f"unit id {unit_id} out of range [0, {p.vocab_size})")
    h = np.zeros(p.hidden_dim) if state is None else np.asarray(state, dtype=np.float64)
    x = p.embedding[unit_id].copy()
    drop = train_mode and dropout_rate > 0
    if drop:
        rng = rng or np.random.default_rng()
        x *= _mask(rng, x.shape, dropout_rate)
    hs, _, _, _ = kernels.gru_forward(x.reshape(1, 1, -1), h.reshape(1, -1).copy(), *_gates(p))
    h1 = hs[1, 0]
    o = h1 * _mask(rng, h1.shape, dropout_rate) if drop else h1
    return softmax(o @ p.W_out + p.b_out), h1


def run_sequence(params: NlmParams, unit_ids: Sequence[int],
                 state: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Feed a unit sequence in eval mode.

    Returns ``log_probs`` of shape ``(T, V)`` (natural log; row t is the
    distribution after consuming ``unit_ids[t]``) and the states ``(T+1, H)``
    with ``states[0]`` the initial state.
    """
    p = _f64(params)
    ids = np.asarray(unit_ids, dtype=np.int64)
    _check_ids(ids, p.vocab_size)
    h0 = np.zeros((1, p.hidden_dim)) if state is None else np.asarray(state, dtype=np.float64).reshape(1, -1).copy()
    if len(ids) == 0:
        return np.empty((0, p.vocab_size)), h0
    x = np.ascontiguousarray(p.embedding[ids][:, None, :])
    hs, _, _, _ = kernels.gru_forward(x, h0, *_gates(p))
    states = hs[:, 0, :]
    return log_softmax(states[1:] @ p.W_out + p.b_out), states


# --- loss and gradients ---------------------------------------------------


def _mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _window_grads(p: NlmParams, inputs: np.ndarray, targets: np.ndarray, h0: np.ndarray,
                  scale: float, grads: NlmParams, dropout_rate: float,
                  rng: np.random.Generator | None) -> tuple[float, np.ndarray]:
    """Accumulate ``scale`` x gradient of the summed NLL of one window into ``grads``.

    ``inputs``/``targets`` are ``(B, T)``. Returns the summed NLL (nats) and
    the final states, detached.
    """
    B, T = inputs.shape
    V, D = p.embedding.shape
    H = p.hidden_dim
    ids_tm = inputs.T  # (T, B)
    x = p.embedding[ids_tm]  # (T, B, D)
    drop = dropout_rate > 0 and rng is not None
    if drop:
        mx = _mask(rng, x.shape, dropout_rate)
        x = x * mx
    x = np.ascontiguousarray(x)
    hs, zs, rs, cs = kernels.gru_forward(x, np.ascontiguousarray(h0), *_gates(p))
    out = hs[1:]
    if drop:
        mo = _mask(rng, out.shape, dropout_rate)
        out = out * mo
    o2 = out.reshape(T * B, H)
    logp = log_softmax(o2 @ p.W_out + p.b_out)
    tgt = targets.T.reshape(-1)
    rows = np.arange(T * B)
    loss = -float(logp[rows, tgt].sum())

    dlogits = np.exp(logp)
    dlogits[rows, tgt] -= 1.0
    dlogits *= scale
    grads.W_out += o2.T @ dlogits
    grads.b_out += dlogits.sum(axis=0)
    dout = (dlogits @ p.W_out.T).reshape(T, B, H)
    if drop:
        dout *= mo
    res = kernels.gru_backward(x, hs, zs, rs, cs, np.ascontiguousarray(dout),
                               p.W_z, p.U_z, p.W_r, p.U_r, p.W_h, p.U_h)
    dx = res[0]
    for name, g in zip(("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_h"), res[1:10]):
        getattr(grads, name)[...] += g
    if drop:
        dx = dx * mx
    np.add.at(grads.embedding, ids_tm.reshape(-1), dx.reshape(T * B, D))
    return loss, hs[-1].copy()


def clip_gradients(grads: NlmParams, max_norm: float = CLIP_NORM) -> float:
    """Scale ``grads`` in place to global norm ``max_norm``; return the old norm."""
    norm = grads.global_norm()
    if norm > max_norm:
        f = max_norm / norm
        for a in grads.arrays():
            a *= f
    return norm


def loss_and_grads(params: NlmParams, unit_ids: Sequence[int], config: NlmConfig, *,
                   train_mode: bool = False, rng: np.random.Generator | None = None,
                   clip_norm: float | None = CLIP_NORM) -> tuple[float, NlmParams]:
    """Mean NLL (nats) of predicting ``unit_ids[1:]`` and its gradient.

    Backpropagation is truncated every ``config.unroll_len`` steps; the state
    is carried across windows. Gradients are float64 and clipped to global
    norm ``clip_norm`` unless it is None.
    """
    ids = np.asarray(unit_ids, dtype=np.int64)
    if len(ids) < 2:
        raise OvlmError("short-sequence", "need at least two units")
    p = _f64(params)
    _check_ids(ids, p.vocab_size)
    if train_mode and rng is None:
        rng = np.random.default_rng(config.seed)
    rate = config.dropout_rate if train_mode else 0.0
    grads = p.zeros_like()
    n = len(ids) - 1
    h = np.zeros((1, p.hidden_dim))
    total = 0.0
    for s in range(0, n, config.unroll_len):
        e = min(s + config.unroll_len, n)
        loss, h = _window_grads(p, ids[None, s:e], ids[None, s + 1:e + 1], h, 1.0 / n,
                                grads, rate, rng)
        total += loss
    if clip_norm is not None:
        clip_gradients(grads, clip_norm)
    return total / n, grads


def sgd_step(params: NlmParams, grads: NlmParams, lr: float) -> None:
    for a, g in zip(params.arrays(), grads.arrays()):
        a -= lr * g


# --- evaluation helpers ---------------------------------------------------


def sequence_entropy_bits(params: NlmParams, unit_ids: Sequence[int]) -> float:
    """Mean bits per predicted unit of ``unit_ids[1:]`` given the prefix."""
    ids = np.asarray(unit_ids, dtype=np.int64)
    if len(ids) < 2:
        raise OvlmError("short-sequence", "need at least two units")
    logp, _ = run_sequence(params, ids[:-1])
    nll = -logp[np.arange(len(ids) - 1), ids[1:]]
    return float(nll.mean() / np.log(2.0))


# --- training -------------------------------------------------------------


@dataclass
class LrSchedule:
    """Halve the learning rate whenever validation entropy gets worse.

    After ``max_halvings`` halvings, the next degradation stops training.
    """

    lr: float
    max_halvings: int = 4
    halvings: int = 0
    previous: float | None = None
    stopped: bool = False

    def update(self, valid_entropy: float) -> bool:
        """Record one epoch; return False when training should stop."""
        if self.previous is not None and valid_entropy > self.previous:
            if self.halvings >= self.max_halvings:
                self.stopped = True
                return False
            self.lr /= 2.0
            self.halvings += 1
        self.previous = valid_entropy
        return True


def _lanes(ids: np.ndarray, batch_size: int) -> np.ndarray:
    B = max(1, min(batch_size, len(ids) // 2))
    n_lane = len(ids) // B
    return ids[: B * n_lane].reshape(B, n_lane)


def run_epoch(p: NlmParams, ids: np.ndarray, config: NlmConfig, lr: float,
              rng: np.random.Generator | None, unroll_len: int | None = None,
              batch_size: int | None = None) -> float:
    """One SGD pass over contiguous lanes of ``ids``; updates ``p`` in place.

    Returns the mean training NLL in nats.
    """
    T = unroll_len or config.unroll_len
    data = _lanes(ids, batch_size or config.batch_size)
    B, n_lane = data.shape
    h = np.zeros((B, p.hidden_dim))
    total, count = 0.0, 0
    rate = config.dropout_rate if rng is not None else 0.0
    for s in range(0, n_lane - 1, T):
        e = min(s + T, n_lane - 1)
        grads = p.zeros_like()
        n = B * (e - s)
        loss, h = _window_grads(p, data[:, s:e], data[:, s + 1:e + 1], h, 1.0 / n,
                                grads, rate, rng)
        clip_gradients(grads)
        sgd_step(p, grads, lr)
        total += loss
        count += n
    return total / max(count, 1)


def train(params: NlmParams, train_units: Sequence[int], valid_units: Sequence[int],
          config: NlmConfig, *, schedule: LrSchedule | None = None,
          on_epoch: Callable[[int, float, float, float], None] | None = None
          ) -> tuple[NlmParams, list[float]]:
    """Train with SGD and the halving schedule; return the best-validation params.

    History holds the validation entropy (bits per unit) after every epoch.
    """
    train_ids = np.asarray(train_units, dtype=np.int64)
    valid_ids = np.asarray(valid_units, dtype=np.int64)
    if len(train_ids) < 2 or len(valid_ids) < 2:
        raise OvlmError("empty-split", "train and validation need at least two units")
    dtype = params.dtype
    p = params.astype(np.float64)
    _check_ids(train_ids, p.vocab_size)
    _check_ids(valid_ids, p.vocab_size)
    rng = np.random.default_rng(config.seed) if config.dropout_rate > 0 else None
    schedule = schedule or LrSchedule(config.learning_rate, config.max_lr_halvings)

    history: list[float] = []
    best, best_params = np.inf, p.copy()
    for epoch in range(config.max_epochs):
        train_nll = run_epoch(p, train_ids, config, schedule.lr, rng)
        if not p.is_finite():
            raise OvlmError("diverged", f"non-finite parameters after epoch {epoch}")
        valid = sequence_entropy_bits(p, valid_ids)
        history.append(valid)
        log.info("epoch %d lr=%.4g train=%.4f bits valid=%.4f bits",
                 epoch, schedule.lr, train_nll / np.log(2), valid)
        if on_epoch is not None:
            on_epoch(epoch, schedule.lr, train_nll / np.log(2), valid)
        if valid < best:
            best, best_params = valid, p.copy()
        if not schedule.update(valid):
            break
    return best_params.astype(dtype), history


# --- checkpoints ----------------------------------------------------------


_HEADER_INTS = ("vocab_size", "embed_dim", "hidden_dim", "batch_size", "unroll_len",
                "max_epochs", "max_lr_halvings", "seed")
_HEADER_FLOATS = ("dropout_rate", "learning_rate")


def _shapes(config: NlmConfig) -> list[tuple[int, ...]]:
    V, D, H = config.vocab_size, config.embed_dim, config.hidden_dim
    gate = [(D, H), (H, H), (H,)]
    return [(V, D)] + gate * 3 + [(H, V), (V,)]


def save_checkpoint(params: NlmParams, config: NlmConfig, path: str | Path,
                    vocab: UnitVocab | None = None, meta: dict[str, str] | None = None) -> None:
    """Write a ``.nlm`` file: ``key=value`` header, blank line, float32 LE weights."""
    header = {"format_version": str(FORMAT_VERSION)}
    for f in fields(config):
        header[f.name] = repr(getattr(config, f.name))
    header["vocab_sha256"] = vocab.sha256 if vocab is not None else ""
    for k, v in (meta or {}).items():
        header[f"meta.{k}"] = v
    for a, shape in zip(params.arrays(), _shapes(config)):
        if a.shape != shape:
            raise OvlmError("bad-config", f"parameter shape {a.shape} != {shape}")
    with open(path, "wb") as f:
        f.write("".join(f"{k}={v}\n" for k, v in header.items()).encode("utf-8"))
        f.write(b"\n")
        for a in params.arrays():
            f.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path, expected_vocab: UnitVocab | str | None = None
                    ) -> tuple[NlmParams, NlmConfig, dict[str, str]]:
    """Read a ``.nlm`` file; returns params (float32), config and header."""
    blob = Path(path).read_bytes()
    sep = blob.find(b"\n\n")
    if not blob or sep < 0:
        raise OvlmError("corrupt", "missing header")
    try:
        header = dict(line.split("=", 1) for line in blob[:sep].decode("utf-8").split("\n"))
    except (UnicodeDecodeError, ValueError):
        raise OvlmError("corrupt", "unreadable header") from None
    if header.get("format_version") != str(FORMAT_VERSION):
        raise OvlmError("bad-version", f"format_version={header.get('format_version')}")
    try:
        kwargs = {k: int(header[k]) for k in _HEADER_INTS}
        kwargs.update({k: float(header[k]) for k in _HEADER_FLOATS})
        config = NlmConfig(**kwargs)
    except (KeyError, ValueError) as exc:
        raise OvlmError("corrupt", f"bad header field {exc}") from None
    if expected_vocab is not None:
        want = expected_vocab if isinstance(expected_vocab, str) else expected_vocab.sha256
        if header.get("vocab_sha256") != want:
            raise OvlmError("vocab-mismatch", "checkpoint was trained with another unit vocabulary")
    data = blob[sep + 2:]
    shapes = _shapes(config)
    need = sum(int(np.prod(s)) for s in shapes) * 4
    if len(data) != need:
        raise OvlmError("corrupt", f"expected {need} weight bytes, found {len(data)}")
    flat = np.frombuffer(data, dtype="<f4")
    arrays, off = [], 0
    for s in shapes:
        n = int(np.prod(s))
        arrays.append(flat[off:off + n].reshape(s).astype(np.float32))
        off += n
    return NlmParams(*arrays), config, header


def save_model(model: LanguageModel, path: str | Path) -> None:
    save_checkpoint(model.params, model.config, path, model.vocab, model.meta)


def load_model(path: str | Path, vocab: UnitVocab) -> LanguageModel:
    params, config, header = load_checkpoint(path, vocab)
    meta = {k[5:]: v for k, v in header.items() if k.startswith("meta.")}
    return LanguageModel(params, config, vocab, meta)


def adapt(model: LanguageModel, project_unit_streams: Iterable[Sequence[int]],
          adapt_unroll: int = 20, learning_rate: float | None = None,
          dropout: bool = False) -> LanguageModel:
    """Return a copy of ``model`` after one SGD pass over a project.

    Each stream is walked in windows of ``adapt_unroll`` units with one
    gradient step per window; the state carries across windows of a stream.
    The input model is not modified.
    """
    lr = model.config.learning_rate if learning_rate is None else learning_rate
    p = model.params.astype(np.float64)
    rng = np.random.default_rng(model.config.seed) if dropout and model.config.dropout_rate > 0 else None
    touched = False
    for stream in project_unit_streams:
        ids = np.asarray(stream, dtype=np.int64)
        if len(ids) < 2:
            continue
        _check_ids(ids, p.vocab_size)
        run_epoch(p, ids, model.config, lr, rng, unroll_len=adapt_unroll, batch_size=1)
        touched = True
    if not touched:
        return model.copy()
    return LanguageModel(p.astype(model.params.dtype), model.config, model.vocab, dict(model.meta))
