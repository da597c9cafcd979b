"""Predictor, joint network, lattice loss, and greedy decoding.

The lattice loss marginalizes over all monotonic alignments between T frames
and U labels with the usual forward recursion over log-probabilities; all
recursion arithmetic runs in float64 regardless of the model precision. The
emission regularizer (``fastemit_lambda``) adds a label-transitions-only path
score so that low-latency label emission is rewarded; it is an honest scalar
function of the lattice (value and gradient agree under finite differences)
and vanishes identically at lambda = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionError, ParameterError, VocabularyError
from .rng import CounterRng
from .tensor import (
    Tensor,
    add,
    concat,
    embedding,
    linear,
    log_softmax,
    matmul,
    mul,
    record_op,
    reshape,
    sigmoid,
    slice_cols,
    tanh,
    uniform_init,
    zeros_init,
)

BLANK_ID = 0


@dataclass(frozen=True)
class Vocabulary:
    """Ordered token list; index 0 is the blank and never a target symbol."""

    symbols: Tuple[str, ...]

    def __post_init__(self):
        if len(self.symbols) < 2:
            raise VocabularyError("vocabulary needs the blank plus >= 1 symbol")
        if len(set(self.symbols)) != len(self.symbols):
            raise VocabularyError("duplicate symbols in vocabulary")

    @property
    def size(self) -> int:
        return len(self.symbols)

    @property
    def blank_id(self) -> int:
        return BLANK_ID

    def encode(self, text: str) -> List[int]:
        ids = []
        lookup = {s: i for i, s in enumerate(self.symbols)}
        for word in text.split():
            if word not in lookup or lookup[word] == BLANK_ID:
                raise VocabularyError(f"token {word!r} not in vocabulary")
            ids.append(lookup[word])
        return ids

    def decode(self, ids: Sequence[int]) -> str:
        words = []
        for i in ids:
            if not 0 < i < self.size:
                raise VocabularyError(f"token id {i} out of range [1, {self.size})")
            words.append(self.symbols[i])
        return " ".join(words)


class Predictor:
    """Single-layer LSTM over label history; blank embedding doubles as SOS."""

    def __init__(self, vocab_size: int, hidden: int, rng: CounterRng):
        self.vocab_size = vocab_size
        self.hidden = hidden
        self.params = {}
        self.emb = uniform_init(rng.derive("emb"), (vocab_size, hidden), hidden)
        self.wx = uniform_init(rng.derive("wx"), (hidden, 4 * hidden), hidden)
        self.wh = uniform_init(rng.derive("wh"), (hidden, 4 * hidden), hidden)
        self.b = zeros_init((4 * hidden,))
        self.params.update({"emb": self.emb, "wx": self.wx, "wh": self.wh, "b": self.b})

    def initial_state(self, dtype=np.float32) -> tuple:
        z = np.zeros((1, self.hidden), dtype=dtype)
        return Tensor(z.copy()), Tensor(z.copy())

    def step(self, token_id: int, state: tuple) -> tuple:
        """One LSTM step; returns (output [1, hidden], new (h, c) state)."""
        if not 0 <= token_id < self.vocab_size:
            raise VocabularyError(
                f"token id {token_id} out of range [0, {self.vocab_size})"
            )
        h_prev, c_prev = state
        x = embedding(self.emb, [token_id])
        gates = add(add(matmul(x, self.wx), matmul(h_prev, self.wh)), self.b)
        hid = self.hidden
        i_g = sigmoid(slice_cols(gates, 0, hid))
        f_g = sigmoid(slice_cols(gates, hid, 2 * hid))
        g_g = tanh(slice_cols(gates, 2 * hid, 3 * hid))
        o_g = sigmoid(slice_cols(gates, 3 * hid, 4 * hid))
        c = add(mul(f_g, c_prev), mul(i_g, g_g))
        h = mul(o_g, tanh(c))
        return h, (h, c)

    def run(self, target_ids: Sequence[int]) -> Tensor:
        """Outputs for SOS plus each target prefix: [len(targets)+1, hidden]."""
        state = self.initial_state(dtype=self.emb.data.dtype)
        outs = []
        g, state = self.step(BLANK_ID, state)
        outs.append(g)
        for tok in target_ids:
            g, state = self.step(int(tok), state)
            outs.append(g)
        if len(outs) == 1:
            return outs[0]
        return concat(outs, axis=0)


class Joint:
    """Sum of encoder-side and predictor-side projections, tanh, then logits."""

    def __init__(self, enc_dim: int, pred_dim: int, joint_dim: int, vocab_size: int, rng: CounterRng):
        self.enc_dim = enc_dim
        self.pred_dim = pred_dim
        self.joint_dim = joint_dim
        self.vocab_size = vocab_size
        self.params = {}
        self.we = uniform_init(rng.derive("we"), (enc_dim, joint_dim), enc_dim)
        self.be = zeros_init((joint_dim,))
        self.wp = uniform_init(rng.derive("wp"), (pred_dim, joint_dim), pred_dim)
        self.bp = zeros_init((joint_dim,))
        self.wo = uniform_init(rng.derive("wo"), (joint_dim, vocab_size), joint_dim)
        self.bo = zeros_init((vocab_size,))
        self.params.update(
            {"enc.w": self.we, "enc.b": self.be, "pred.w": self.wp, "pred.b": self.bp,
             "out.w": self.wo, "out.b": self.bo}
        )

    def logits(self, h_row: Tensor, g_row: Tensor) -> Tensor:
        """[1, V] logits for a single (frame, label-state) pair."""
        if h_row.shape[-1] != self.enc_dim or g_row.shape[-1] != self.pred_dim:
            raise DimensionError(
                f"joint got widths {h_row.shape[-1]}/{g_row.shape[-1]}, expected "
                f"{self.enc_dim}/{self.pred_dim}"
            )
        pre = add(linear(h_row, self.we, self.be), linear(g_row, self.wp, self.bp))
        return linear(tanh(pre), self.wo, self.bo)

    def lattice_log_probs(self, enc: Tensor, pred: Tensor) -> Tensor:
        """Log-softmax joint outputs at every lattice node: [T, U+1, V]."""
        if enc.shape[-1] != self.enc_dim or pred.shape[-1] != self.pred_dim:
            raise DimensionError(
                f"lattice got widths {enc.shape[-1]}/{pred.shape[-1]}, expected "
                f"{self.enc_dim}/{self.pred_dim}"
            )
        t_len, u_len = enc.shape[0], pred.shape[0]
        e = linear(enc, self.we, self.be)
        p = linear(pred, self.wp, self.bp)
        pre = add(
            reshape(e, (t_len, 1, self.joint_dim)), reshape(p, (1, u_len, self.joint_dim))
        )
        act = tanh(reshape(pre, (t_len * u_len, self.joint_dim)))
        logits = linear(act, self.wo, self.bo)
        return reshape(log_softmax(logits), (t_len, u_len, self.vocab_size))


# ---------------------------------------------------------------------------
# lattice loss
# ---------------------------------------------------------------------------


def _validate_lattice(log_probs: Tensor, targets: Sequence[int]) -> tuple:
    if log_probs.data.ndim != 3:
        raise DimensionError(f"lattice must be [T, U+1, V], got {log_probs.shape}")
    t_len, u_rows, vocab = log_probs.shape
    if t_len < 1:
        raise DimensionError("lattice needs at least one time step")
    if u_rows != len(targets) + 1:
        raise DimensionError(
            f"lattice has {u_rows} label rows but target length is {len(targets)}"
        )
    for tok in targets:
        if not 0 < tok < vocab:
            raise VocabularyError(f"target id {tok} out of range [1, {vocab})")
    return t_len, len(targets), vocab


def _forward_vars(blank_lp: np.ndarray, label_lp: np.ndarray) -> np.ndarray:
    """alpha[t, u]: log-probability of consuming t frames and u labels."""
    t_len, u_rows = blank_lp.shape
    alpha = np.full((t_len, u_rows), -np.inf)
    alpha[0, 0] = 0.0
    for u in range(1, u_rows):
        alpha[0, u] = alpha[0, u - 1] + label_lp[0, u - 1]
    for t in range(1, t_len):
        alpha[t, 0] = alpha[t - 1, 0] + blank_lp[t - 1, 0]
        for u in range(1, u_rows):
            alpha[t, u] = np.logaddexp(
                alpha[t - 1, u] + blank_lp[t - 1, u],
                alpha[t, u - 1] + label_lp[t, u - 1],
            )
    return alpha


def _backward_vars(blank_lp: np.ndarray, label_lp: np.ndarray) -> np.ndarray:
    """beta[t, u]: log-probability of completing from node (t, u)."""
    t_len, u_rows = blank_lp.shape
    u_len = u_rows - 1
    beta = np.full((t_len, u_rows), -np.inf)
    beta[t_len - 1, u_len] = blank_lp[t_len - 1, u_len]
    for u in range(u_len - 1, -1, -1):
        beta[t_len - 1, u] = beta[t_len - 1, u + 1] + label_lp[t_len - 1, u]
    for t in range(t_len - 2, -1, -1):
        beta[t, u_len] = beta[t + 1, u_len] + blank_lp[t, u_len]
        for u in range(u_len - 1, -1, -1):
            beta[t, u] = np.logaddexp(
                beta[t + 1, u] + blank_lp[t, u],
                beta[t, u + 1] + label_lp[t, u],
            )
    return beta


def forward_backward(log_probs: np.ndarray, targets: Sequence[int], blank: int = BLANK_ID):
    """(alpha, beta, total log-likelihood) for tests and diagnostics."""
    t_len, u_rows = log_probs.shape[0], log_probs.shape[1]
    blank_lp = log_probs[:, :, blank].astype(np.float64)
    if targets:
        label_lp = np.stack(
            [log_probs[:, u, targets[u]].astype(np.float64) for u in range(len(targets))],
            axis=1,
        )
    else:
        label_lp = np.full((t_len, 0), -np.inf)
    # label transitions exist only for u < U; pad so indexing [t, u] is valid.
    label_ext = np.concatenate(
        [label_lp, np.full((t_len, 1), -np.inf)], axis=1
    )
    alpha = _forward_vars(blank_lp, label_ext)
    beta = _backward_vars(blank_lp, label_ext)
    return alpha, beta, beta[0, 0]


def rnnt_loss(
    log_probs: Tensor,
    targets: Sequence[int],
    blank: int = BLANK_ID,
    fastemit_lambda: float = 0.0,
) -> Tensor:
    """Negative log-likelihood over all monotonic alignments, optionally with
    the emission regularizer added (see module docstring).

    Gradients with respect to every lattice entry are computed analytically
    from the forward/backward variables; recursion math is float64.
    """
    if fastemit_lambda < 0:
        raise ParameterError(f"fastemit_lambda must be >= 0, got {fastemit_lambda}")
    if blank != BLANK_ID:
        raise ParameterError(f"blank id is fixed to {BLANK_ID}, got {blank}")
    t_len, u_len, vocab = _validate_lattice(log_probs, targets)
    targets = [int(x) for x in targets]

    lp = log_probs.data.astype(np.float64)
    blank_lp = lp[:, :, BLANK_ID]
    if u_len:
        label_lp = np.stack([lp[:, u, targets[u]] for u in range(u_len)], axis=1)
    else:
        label_lp = np.zeros((t_len, 0))
    label_ext = np.concatenate([label_lp, np.full((t_len, 1), -np.inf)], axis=1)

    alpha = _forward_vars(blank_lp, label_ext)
    beta = _backward_vars(blank_lp, label_ext)
    total = beta[0, 0]
    loss_val = -total

    if fastemit_lambda > 0.0:
        zeros_blank = np.zeros_like(blank_lp)
        alpha_e = _forward_vars(zeros_blank, label_ext)
        beta_e = _backward_vars(zeros_blank, label_ext)
        total_e = beta_e[0, 0]
        loss_val = loss_val + fastemit_lambda * (-total_e)

    out = Tensor(
        np.asarray(loss_val).reshape(()), dtype=log_probs.data.dtype
    )
    out.requires_grad = log_probs.requires_grad

    def vjp(g):
        grad = np.zeros((t_len, u_len + 1, vocab), dtype=np.float64)
        # blank transitions: (t, u) -> (t+1, u); completion from (t+1, u).
        with np.errstate(invalid="ignore"):
            beta_next = np.vstack([beta[1:], np.full((1, u_len + 1), -np.inf)])
            beta_next[t_len - 1, u_len] = 0.0
            grad[:, :, BLANK_ID] = -np.exp(alpha + blank_lp + beta_next - total)
            for u in range(u_len):
                grad[:, u, targets[u]] += -np.exp(
                    alpha[:, u] + label_lp[:, u] + beta[:, u + 1] - total
                )
            if fastemit_lambda > 0.0:
                # label-only term: no blank gradient by construction
                for u in range(u_len):
                    grad[:, u, targets[u]] += -fastemit_lambda * np.exp(
                        alpha_e[:, u] + label_lp[:, u] + beta_e[:, u + 1] - total_e
                    )
        scaled = grad * float(np.asarray(g).reshape(()))
        return (scaled.astype(log_probs.data.dtype),)

    return record_op(out, (log_probs,), vjp)


def fastemit(log_probs: Tensor, targets: Sequence[int], lam: float) -> Tensor:
    """Lattice loss with the emission regularizer; lam = 0 is exactly rnnt_loss."""
    return rnnt_loss(log_probs, targets, fastemit_lambda=lam)


# ---------------------------------------------------------------------------
# greedy decoding
# ---------------------------------------------------------------------------


@dataclass
class Emission:
    token_id: int
    frame_index: int


def greedy_step(
    joint: Joint,
    predictor: Predictor,
    h_row: Tensor,
    pred_out: Tensor,
    state: tuple,
    frame_index: int,
    max_symbols_per_frame: int,
) -> tuple:
    """Greedy emissions for one frame; returns (emissions, pred_out, state).

    Repeatedly takes the argmax of the joint logits; blank advances to the
    next frame, any other symbol is emitted and advances the predictor, up to
    ``max_symbols_per_frame`` emissions on one frame. numpy argmax resolves
    ties toward the lowest index, so blank wins ties.
    """
    emissions = []
    while len(emissions) < max_symbols_per_frame:
        logits = joint.logits(h_row, pred_out)
        best = int(np.argmax(logits.data[0]))
        if best == BLANK_ID:
            break
        emissions.append(Emission(best, frame_index))
        pred_out, state = predictor.step(best, state)
    return emissions, pred_out, state


def greedy_decode(
    joint: Joint,
    predictor: Predictor,
    enriched: Tensor,
    max_symbols_per_frame: int = 5,
) -> List[Emission]:
    """Frame-synchronous greedy search over context-enriched embeddings."""
    if max_symbols_per_frame < 1:
        raise ParameterError(
            f"max_symbols_per_frame must be >= 1, got {max_symbols_per_frame}"
        )
    state = predictor.initial_state(dtype=enriched.data.dtype)
    pred_out, state = predictor.step(BLANK_ID, state)
    out: List[Emission] = []
    for t in range(enriched.shape[0]):
        h_row = Tensor(enriched.data[t : t + 1], dtype=enriched.data.dtype)
        ems, pred_out, state = greedy_step(
            joint, predictor, h_row, pred_out, state, t, max_symbols_per_frame
        )
        out.extend(ems)
    return out
