"""Multimodal translation network.

Pipeline per sentence: a bi-directional GRU text encoder produces hidden
states C; the text-aware attentive visual encoder fuses the m retrieved
region-feature matrices into one, weighting each image by the scaled dot
product between its projected region-mean and the average-pooled text
state; bi-directional attention aligns text states with projected regions
and residually enhances both; a two-block conditional GRU decoder attends
separately over the enhanced text and visual states at every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import BOS, EOS
from .numeric_core import (
    GruParams,
    Tape,
    Tensor,
    gru_cell,
    load_checkpoint,
    save_checkpoint,
)

__all__ = ["ModelConfig", "MMTModel", "FusedRepresentations"]


@dataclass
class ModelConfig:
    src_vocab: int
    tgt_vocab: int
    emb_dim: int = 256
    enc_hidden: int = 256  # per direction; text state dim is 2x this
    dec_hidden: int = 512
    attn_dim: int = 256
    out_dim: int = 256
    feat_rows: int = 196
    feat_cols: int = 1024
    images_per_sentence: int = 5

    @property
    def text_dim(self):
        return 2 * self.enc_hidden

    def to_kv(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in vars(self).items())

    @classmethod
    def from_kv(cls, text: str) -> "ModelConfig":
        kwargs = {}
        for line in text.splitlines():
            if "=" in line:
                k, v = line.split("=", 1)
                kwargs[k.strip()] = int(v.strip())
        return cls(**kwargs)


@dataclass
class FusedRepresentations:
    text: Tensor      # N x d_c enhanced text states
    visual: Tensor    # L x d_c enhanced projected region states
    alignment: Tensor  # N x L
    t2v_weights: Tensor  # N x L, rows sum to 1
    v2t_weights: Tensor  # L x N, rows sum to 1


class MMTModel:
    """Holds all learnable tensors and the per-sentence forward passes."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        c = config
        d_c = c.text_dim

        def w(rows, cols):
            s = 1.0 / np.sqrt(cols)
            return Tensor(rng.uniform(-s, s, size=(rows, cols)))

        def vec(n, fan_in):
            s = 1.0 / np.sqrt(fan_in)
            return Tensor(rng.uniform(-s, s, size=n))

        # declaration order fixes which values each tensor draws from the rng
        self.params = {}
        p = self.params
        p["src_emb"] = w(c.src_vocab, c.emb_dim)
        self.enc_fwd = self._gru(rng, c.emb_dim, c.enc_hidden, "enc_fwd")
        self.enc_bwd = self._gru(rng, c.emb_dim, c.enc_hidden, "enc_bwd")
        p["vis_attn_W"] = w(d_c, c.feat_cols)
        p["region_proj"] = w(d_c, c.feat_cols)
        p["att_text.W"] = w(c.attn_dim, c.dec_hidden)
        p["att_text.U"] = w(c.attn_dim, d_c)
        p["att_text.v"] = vec(c.attn_dim, c.attn_dim)
        p["att_img.W"] = w(c.attn_dim, c.dec_hidden)
        p["att_img.U"] = w(c.attn_dim, d_c)
        p["att_img.v"] = vec(c.attn_dim, c.attn_dim)
        p["tgt_emb"] = w(c.tgt_vocab, c.emb_dim)
        self.dec_gru1 = self._gru(rng, c.emb_dim, c.dec_hidden, "dec_gru1")
        self.dec_gru2 = self._gru(rng, 2 * d_c, c.dec_hidden, "dec_gru2")
        p["out.Ws"] = w(c.out_dim, c.dec_hidden)
        p["out.We"] = w(c.out_dim, c.emb_dim)
        p["out.Wc"] = w(c.out_dim, d_c)
        p["out.Wi"] = w(c.out_dim, d_c)
        p["out.Wo"] = w(c.tgt_vocab, c.out_dim)

    def _gru(self, rng, input_dim, hidden_dim, prefix) -> GruParams:
        g = GruParams.create(rng, input_dim, hidden_dim)
        for name in ("Wz", "Uz", "bz", "Wr", "Ur", "br", "Wh", "Uh", "bh"):
            self.params[f"{prefix}.{name}"] = getattr(g, name)
        return g

    def zero_grads(self):
        for t in self.params.values():
            t.zero_grad()

    # ------------------------------------------------------------------
    # encoder
    # ------------------------------------------------------------------

    def encode_text(self, tape: Tape, src_ids) -> Tensor:
        """Bi-GRU over the source tokens; row n is fwd_n concat bwd_n."""
        if not len(src_ids):
            raise ValueError("empty source sentence")
        c = self.config
        embs = [tape.row(self.params["src_emb"], i) for i in src_ids]
        h = Tensor(np.zeros(c.enc_hidden))
        fwd = []
        for e in embs:
            h = gru_cell(tape, e, h, self.enc_fwd)
            fwd.append(h)
        h = Tensor(np.zeros(c.enc_hidden))
        bwd = [None] * len(embs)
        for n in range(len(embs) - 1, -1, -1):
            h = gru_cell(tape, embs[n], h, self.enc_bwd)
            bwd[n] = h
        return tape.stack([tape.concat(f, b) for f, b in zip(fwd, bwd)])

    @staticmethod
    def average_pool(tape: Tape, states: Tensor) -> Tensor:
        return tape.mean(states, axis=0)

    # ------------------------------------------------------------------
    # text-aware attentive visual encoder
    # ------------------------------------------------------------------

    def visual_attend(self, tape: Tape, matrices, pooled_text: Tensor):
        """Fuse the m region matrices into one, softmax-weighted by the
        scaled dot product of each image's projected region-mean with the
        pooled text state. Returns (fused R x D matrix, weight vector)."""
        if not matrices:
            raise ValueError("bundle has no images")
        d_c = self.config.text_dim
        W = self.params["vis_attn_W"]
        scores = []
        for mat in matrices:
            pooled = tape.mean(mat, axis=0)
            proj = tape.matmul(W, pooled)
            scores.append(tape.scale(tape.matmul(proj, pooled_text), 1.0 / np.sqrt(d_c)))
        alpha = tape.softmax(tape.stack(scores))
        fused = None
        for m, mat in enumerate(matrices):
            term = tape.smul(tape.pick(alpha, m), mat)
            fused = term if fused is None else tape.add(fused, term)
        return fused, alpha

    # ------------------------------------------------------------------
    # bi-directional attention
    # ------------------------------------------------------------------

    def bi_attention(self, tape: Tape, text_states: Tensor, fused: Tensor) -> FusedRepresentations:
        d_c = self.config.text_dim
        proj = tape.matmul(fused, tape.transpose(self.params["region_proj"]))  # L x d_c
        S = tape.scale(tape.matmul(text_states, tape.transpose(proj)), 1.0 / np.sqrt(d_c))
        w_t2v = tape.softmax(S)                      # N x L
        w_v2t = tape.softmax(tape.transpose(S))      # L x N
        text_bar = tape.add(text_states, tape.matmul(w_t2v, proj))
        visual_bar = tape.add(proj, tape.matmul(w_v2t, text_states))
        return FusedRepresentations(text=text_bar, visual=visual_bar, alignment=S,
                                    t2v_weights=w_t2v, v2t_weights=w_v2t)

    # ------------------------------------------------------------------
    # decoder
    # ------------------------------------------------------------------

    def attention_context(self, tape: Tape, states: Tensor, proposal: Tensor, which: str) -> Tensor:
        """Additive attention over the rows of `states` driven by the
        decoder's hidden-state proposal."""
        if states.value.shape[0] == 0:
            raise ValueError("attention over empty states")
        W = self.params[f"att_{which}.W"]
        U = self.params[f"att_{which}.U"]
        v = self.params[f"att_{which}.v"]
        keys = tape.matmul(states, tape.transpose(U))          # K x attn
        drive = tape.matmul(W, proposal)                       # attn
        energies = tape.matmul(tape.tanh(tape.add(keys, drive)), v)  # K
        weights = tape.softmax(energies)
        return tape.matmul(weights, states)

    def decoder_step(self, tape: Tape, y_prev: int, s_prev: Tensor,
                     fused: FusedRepresentations):
        """One conditional-GRU step; returns (next state, log-probabilities)."""
        p = self.params
        emb = tape.row(p["tgt_emb"], y_prev)
        proposal = gru_cell(tape, emb, s_prev, self.dec_gru1)
        c_t = self.attention_context(tape, fused.text, proposal, "text")
        i_t = self.attention_context(tape, fused.visual, proposal, "img")
        s_t = gru_cell(tape, tape.concat(c_t, i_t), proposal, self.dec_gru2)
        pre = tape.add(tape.add(tape.matmul(p["out.Ws"], s_t), tape.matmul(p["out.We"], emb)),
                       tape.add(tape.matmul(p["out.Wc"], c_t), tape.matmul(p["out.Wi"], i_t)))
        logits = tape.matmul(p["out.Wo"], tape.tanh(pre))
        return s_t, tape.log_softmax(logits)

    # ------------------------------------------------------------------
    # end to end
    # ------------------------------------------------------------------

    def fuse(self, tape: Tape, src_ids, bundle_matrices):
        """Shared front half: encode, pool, visually attend, bi-attend.

        `bundle_matrices` may be a FeatureBundle, a list of FeatureMatrix,
        or a list of plain arrays/Tensors.
        """
        if hasattr(bundle_matrices, "matrices"):
            bundle_matrices = bundle_matrices.matrices
        consts = []
        for m in bundle_matrices:
            if hasattr(m, "values"):
                m = m.values
            consts.append(m if isinstance(m, Tensor) else Tensor(m))
        C = self.encode_text(tape, src_ids)
        pooled = self.average_pool(tape, C)
        fused_img, alpha = self.visual_attend(tape, consts, pooled)
        return self.bi_attention(tape, C, fused_img), alpha

    def sequence_loss(self, tape: Tape, src_ids, tgt_ids, bundle_matrices) -> Tensor:
        """Teacher-forced mean negative log-likelihood of the gold tokens."""
        if not len(tgt_ids):
            raise ValueError("empty target sentence")
        fused, _ = self.fuse(tape, src_ids, bundle_matrices)
        tokens = [BOS] + list(tgt_ids) + [EOS]
        s = Tensor(np.zeros(self.config.dec_hidden))
        total = None
        for t in range(len(tokens) - 1):
            s, logp = self.decoder_step(tape, tokens[t], s, fused)
            nll = tape.scale(tape.pick(logp, tokens[t + 1]), -1.0)
            total = nll if total is None else tape.add(total, nll)
        return tape.scale(total, 1.0 / (len(tokens) - 1))

    def greedy_decode(self, src_ids, bundle_matrices, max_len: int = 50) -> list:
        """Argmax decoding from BOS until EOS or max_len; returns token ids."""
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        tape = Tape()
        fused, _ = self.fuse(tape, src_ids, bundle_matrices)
        s = Tensor(np.zeros(self.config.dec_hidden))
        y = BOS
        out = []
        for _ in range(max_len):
            s, logp = self.decoder_step(tape, y, s, fused)
            y = int(np.argmax(logp.value))
            if y == EOS:
                break
            out.append(y)
        return out

    # ------------------------------------------------------------------
    # persistence
    # ------------------------------------------------------------------

    def save(self, path):
        save_checkpoint(path, self.params)
        Path(str(path) + ".cfg").write_text(self.config.to_kv(), encoding="utf-8")

    def load_params(self, path):
        loaded = load_checkpoint(path)
        if set(loaded) != set(self.params):
            missing = set(self.params) ^ set(loaded)
            raise ValueError(f"checkpoint parameter mismatch: {sorted(missing)}")
        for name, t in loaded.items():
            self.params[name].value[...] = t.value

    @classmethod
    def from_checkpoint(cls, path) -> "MMTModel":
        cfg = ModelConfig.from_kv(Path(str(path) + ".cfg").read_text(encoding="utf-8"))
        model = cls(cfg)
        model.load_params(path)
        return model
