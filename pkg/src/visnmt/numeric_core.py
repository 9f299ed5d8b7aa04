"""Dense tensor math with a reverse-mode gradient tape.

Everything runs in float64 on top of numpy. A :class:`Tape` records each
primitive as it executes; ``Tape.backward`` replays the records in reverse
and accumulates gradients additively into ``Tensor.grad`` buffers. Shapes
are explicit everywhere: the only broadcast allowed is adding a bias vector
to the rows of a matrix.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "AdamState",
    "adam_step",
    "gru_cell",
    "GruParams",
    "grad_check",
    "save_checkpoint",
    "load_checkpoint",
]


class Tensor:
    """A float64 array (up to 3 axes) with an optional gradient buffer."""

    __slots__ = ("value", "grad")

    def __init__(self, value):
        self.value = np.asarray(value, dtype=np.float64)
        if self.value.ndim > 3:
            raise ValueError(f"tensor rank {self.value.ndim} > 3")
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.value.shape})"


def _require_same_shape(a, b, op):
    if a.value.shape != b.value.shape:
        raise ValueError(f"{op}: shape mismatch {a.value.shape} vs {b.value.shape}")


class Tape:
    """Ordered record of primitive operations and their backward rules."""

    def __init__(self):
        self._records = []

    def record(self, backward_fn):
        self._records.append(backward_fn)

    def __len__(self):
        return len(self._records)

    # ------------------------------------------------------------------
    # primitives (forward + recorded backward)
    # ------------------------------------------------------------------

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        av, bv = a.value, b.value
        if av.shape[-1] != bv.shape[0]:
            raise ValueError(f"matmul: shape mismatch {av.shape} vs {bv.shape}")
        out = Tensor(av @ bv)

        def backward():
            g = out.grad
            if g is None:
                return
            if av.ndim == 2 and bv.ndim == 2:
                a.accumulate(g @ bv.T)
                b.accumulate(av.T @ g)
            elif av.ndim == 2 and bv.ndim == 1:
                a.accumulate(np.outer(g, bv))
                b.accumulate(av.T @ g)
            elif av.ndim == 1 and bv.ndim == 2:
                a.accumulate(g @ bv.T)
                b.accumulate(np.outer(av, g))
            else:  # vector . vector -> scalar
                a.accumulate(g * bv)
                b.accumulate(g * av)

        self.record(backward)
        return out

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        av, bv = a.value, b.value
        if av.shape != bv.shape:
            # bias-vector add: matrix rows + vector
            if not (av.ndim == 2 and bv.ndim == 1 and av.shape[1] == bv.shape[0]):
                raise ValueError(f"add: shape mismatch {av.shape} vs {bv.shape}")
        out = Tensor(av + bv)

        def backward():
            g = out.grad
            if g is None:
                return
            a.accumulate(g)
            if av.shape == bv.shape:
                b.accumulate(g)
            else:
                b.accumulate(g.sum(axis=0))

        self.record(backward)
        return out

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        return self.add(a, self.scale(b, -1.0))

    def hadamard(self, a: Tensor, b: Tensor) -> Tensor:
        _require_same_shape(a, b, "hadamard")
        out = Tensor(a.value * b.value)

        def backward():
            g = out.grad
            if g is None:
                return
            a.accumulate(g * b.value)
            b.accumulate(g * a.value)

        self.record(backward)
        return out

    def scale(self, a: Tensor, c: float) -> Tensor:
        out = Tensor(a.value * c)

        def backward():
            if out.grad is not None:
                a.accumulate(out.grad * c)

        self.record(backward)
        return out

    def smul(self, s: Tensor, a: Tensor) -> Tensor:
        """Multiply tensor `a` by a scalar (0-d) tensor `s`."""
        if s.value.ndim != 0:
            raise ValueError(f"smul: scalar expected, got shape {s.value.shape}")
        out = Tensor(s.value * a.value)

        def backward():
            g = out.grad
            if g is None:
                return
            s.accumulate(np.asarray((g * a.value).sum()))
            a.accumulate(g * s.value)

        self.record(backward)
        return out

    def concat(self, a: Tensor, b: Tensor) -> Tensor:
        """Concatenate two vectors."""
        if a.value.ndim != 1 or b.value.ndim != 1:
            raise ValueError("concat: expects vectors")
        na = a.value.shape[0]
        out = Tensor(np.concatenate([a.value, b.value]))

        def backward():
            g = out.grad
            if g is None:
                return
            a.accumulate(g[:na])
            b.accumulate(g[na:])

        self.record(backward)
        return out

    def slice(self, a: Tensor, key) -> Tensor:
        out = Tensor(a.value[key])

        def backward():
            g = out.grad
            if g is None:
                return
            full = np.zeros_like(a.value)
            full[key] = g
            a.accumulate(full)

        self.record(backward)
        return out

    def row(self, a: Tensor, i: int) -> Tensor:
        return self.slice(a, i)

    def stack(self, rows) -> Tensor:
        """Stack a sequence of equal-length vectors into a matrix."""
        rows = list(rows)
        out = Tensor(np.stack([r.value for r in rows]))

        def backward():
            g = out.grad
            if g is None:
                return
            for i, r in enumerate(rows):
                r.accumulate(g[i])

        self.record(backward)
        return out

    def transpose(self, a: Tensor) -> Tensor:
        out = Tensor(a.value.T)

        def backward():
            if out.grad is not None:
                a.accumulate(out.grad.T)

        self.record(backward)
        return out

    def mean(self, a: Tensor, axis: int) -> Tensor:
        n = a.value.shape[axis]
        out = Tensor(a.value.mean(axis=axis))

        def backward():
            g = out.grad
            if g is None:
                return
            a.accumulate(np.expand_dims(g, axis).repeat(n, axis=axis) / n)

        self.record(backward)
        return out

    def tanh(self, a: Tensor) -> Tensor:
        y = np.tanh(a.value)
        out = Tensor(y)

        def backward():
            if out.grad is not None:
                a.accumulate(out.grad * (1.0 - y * y))

        self.record(backward)
        return out

    def sigmoid(self, a: Tensor) -> Tensor:
        y = 1.0 / (1.0 + np.exp(-a.value))
        out = Tensor(y)

        def backward():
            if out.grad is not None:
                a.accumulate(out.grad * y * (1.0 - y))

        self.record(backward)
        return out

    def softmax(self, a: Tensor) -> Tensor:
        """Softmax over the last axis, stabilized by max-subtraction."""
        v = a.value
        shifted = v - v.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        # exactly-rounded denominator keeps the weights bit-identical under
        # permutation of the inputs
        denom = np.apply_along_axis(math.fsum, -1, e)
        y = e / np.expand_dims(denom, -1)
        out = Tensor(y)

        def backward():
            g = out.grad
            if g is None:
                return
            dot = (g * y).sum(axis=-1, keepdims=True)
            a.accumulate(y * (g - dot))

        self.record(backward)
        return out

    def log_softmax(self, a: Tensor) -> Tensor:
        v = a.value
        shifted = v - v.max(axis=-1, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        y = shifted - lse
        out = Tensor(y)

        def backward():
            g = out.grad
            if g is None:
                return
            soft = np.exp(y)
            a.accumulate(g - soft * g.sum(axis=-1, keepdims=True))

        self.record(backward)
        return out

    def pick(self, a: Tensor, i: int) -> Tensor:
        """Select one element of a vector as a scalar."""
        return self.slice(a, i)

    # ------------------------------------------------------------------

    def backward(self, loss: Tensor):
        """Run all recorded backward rules in reverse order from `loss`."""
        if loss.value.ndim != 0:
            raise ValueError("backward: loss must be scalar")
        loss.grad = np.ones_like(loss.value)
        for fn in reversed(self._records):
            fn()


# ----------------------------------------------------------------------
# GRU cell
# ----------------------------------------------------------------------


@dataclass
class GruParams:
    """Weights of one GRU cell: gates z, r and the candidate state."""

    Wz: Tensor
    Uz: Tensor
    bz: Tensor
    Wr: Tensor
    Ur: Tensor
    br: Tensor
    Wh: Tensor
    Uh: Tensor
    bh: Tensor

    @staticmethod
    def create(rng, input_dim: int, hidden_dim: int) -> "GruParams":
        def w(rows, cols):
            s = 1.0 / np.sqrt(cols)
            return Tensor(rng.uniform(-s, s, size=(rows, cols)))

        def b():
            return Tensor(np.zeros(hidden_dim))

        return GruParams(
            Wz=w(hidden_dim, input_dim), Uz=w(hidden_dim, hidden_dim), bz=b(),
            Wr=w(hidden_dim, input_dim), Ur=w(hidden_dim, hidden_dim), br=b(),
            Wh=w(hidden_dim, input_dim), Uh=w(hidden_dim, hidden_dim), bh=b(),
        )

    def tensors(self):
        return [self.Wz, self.Uz, self.bz, self.Wr, self.Ur, self.br,
                self.Wh, self.Uh, self.bh]


def gru_cell(tape: Tape, x: Tensor, h_prev: Tensor, p: GruParams) -> Tensor:
    """One GRU step: h' = (1-z)*h + z*tanh(W x + U (r*h) + b)."""
    z = tape.sigmoid(tape.add(tape.add(tape.matmul(p.Wz, x), tape.matmul(p.Uz, h_prev)), p.bz))
    r = tape.sigmoid(tape.add(tape.add(tape.matmul(p.Wr, x), tape.matmul(p.Ur, h_prev)), p.br))
    h_tilde = tape.tanh(tape.add(tape.add(tape.matmul(p.Wh, x), tape.matmul(p.Uh, tape.hadamard(r, h_prev))), p.bh))
    one_minus_z = tape.add(tape.scale(z, -1.0), Tensor(np.ones_like(z.value)))
    return tape.add(tape.hadamard(one_minus_z, h_prev), tape.hadamard(z, h_tilde))


# ----------------------------------------------------------------------
# Adam
# ----------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, state: AdamState):
    """Apply one bias-corrected Adam update using each tensor's .grad.

    `params` maps name -> Tensor; tensors with grad None are treated as
    zero-gradient (their moments still decay).
    """
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = p.grad
        if g is None:
            g = np.zeros_like(p.value)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.value)
            state.v[name] = np.zeros_like(p.value)
        state.m[name] = state.beta1 * state.m[name] + (1 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1 - state.beta2) * g * g
        m_hat = state.m[name] / (1 - state.beta1 ** t)
        v_hat = state.v[name] / (1 - state.beta2 ** t)
        p.value -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def clip_gradients(params: dict, max_norm: float):
    """Scale all gradients down so their global L2 norm is <= max_norm."""
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = np.sqrt(total)
    if norm > max_norm and norm > 0:
        factor = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad *= factor
    return norm


# ----------------------------------------------------------------------
# finite-difference gradient checking
# ----------------------------------------------------------------------


def grad_check(fn, inputs, h: float = 1e-5, max_coords: int | None = None, rng=None,
               floor: float = 1e-6):
    """Compare tape gradients of a scalar-valued `fn` against central differences.

    `fn(tape) -> Tensor` must rebuild the graph from the current values of
    `inputs` (a list of Tensors) each call. Returns the maximum relative
    error over the checked coordinates.
    """
    tape = Tape()
    loss = fn(tape)
    for t in inputs:
        t.zero_grad()
    tape.backward(loss)
    analytic = [np.zeros_like(t.value) if t.grad is None else t.grad.copy() for t in inputs]

    max_rel = 0.0
    for t, a_grad in zip(inputs, analytic):
        flat = t.value.reshape(-1)
        n = flat.size
        if max_coords is not None and n > max_coords:
            picker = rng if rng is not None else np.random.default_rng(0)
            idxs = picker.choice(n, size=max_coords, replace=False)
        else:
            idxs = range(n)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(fn(Tape()).value)
            flat[i] = orig - h
            f_minus = float(fn(Tape()).value)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2 * h)
            a = a_grad.reshape(-1)[i]
            # floor guards coordinates whose true gradient sits below the
            # central-difference roundoff noise
            denom = max(abs(a), abs(numeric), floor)
            max_rel = max(max_rel, abs(a - numeric) / denom)
    return max_rel


# ----------------------------------------------------------------------
# checkpoint format: magic "CKPT", length-prefixed named tensor list
# ----------------------------------------------------------------------

_CKPT_MAGIC = b"CKPT"


def save_checkpoint(path, params: dict):
    """Write name->Tensor map; values stored as float32 little-endian."""
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<I", len(params)))
        for name, t in params.items():
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            shape = t.value.shape
            f.write(struct.pack("<I", len(shape)))
            for d in shape:
                f.write(struct.pack("<I", d))
            f.write(t.value.astype("<f4").tobytes())


def load_checkpoint(path) -> dict:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != _CKPT_MAGIC:
        raise ValueError(f"bad checkpoint magic at offset 0: {data[:4]!r}")
    off = 4
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", data, off)
        off += 4
        name = data[off:off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<I", data, off)
        off += 4
        shape = struct.unpack_from("<" + "I" * ndim, data, off)
        off += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        vals = np.frombuffer(data, dtype="<f4", count=n, offset=off)
        off += 4 * n
        out[name] = Tensor(vals.astype(np.float64).reshape(shape))
    return out
