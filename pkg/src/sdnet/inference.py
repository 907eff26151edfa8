"""Set inference: decode (speaker, direction) token pairs from mixture features.

A bidirectional recurrent context encoder feeds two attentive LSTM decoders
that run in lockstep, one over speaker tokens and one over direction tokens.
Each step blends the previous step's argmax embedding with its
probability-weighted average embedding (a gate mitigating exposure bias) and
emits a 256-dim source mask as the sum of the two blended embeddings.
Decoding stops when either stream emits EOS; the EOS step carries no mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn


@dataclass
class SourceMask:
    sm: torch.Tensor  # (embedding_dim,)
    speaker_token: int
    direction_token: int


@dataclass
class StepOutput:
    y_spk: torch.Tensor  # (V_spk,) probabilities
    y_dir: torch.Tensor  # (V_dir,) probabilities
    mask: torch.Tensor | None  # (embedding_dim,) or None on the EOS step
    speaker_token: int
    direction_token: int


@dataclass
class InferenceResult:
    steps: list[StepOutput] = field(default_factory=list)
    log_score: float = 0.0
    truncated: bool = False

    @property
    def masks(self) -> list[SourceMask]:
        return [
            SourceMask(s.mask, s.speaker_token, s.direction_token)
            for s in self.steps
            if s.mask is not None
        ]

    @property
    def n_sources(self) -> int:
        return sum(1 for s in self.steps if s.mask is not None)

    @property
    def speaker_tokens(self) -> list[int]:
        return [s.speaker_token for s in self.steps if s.mask is not None]

    @property
    def direction_tokens(self) -> list[int]:
        return [s.direction_token for s in self.steps if s.mask is not None]


class AdditiveAttention(nn.Module):
    """Per-frame scores v^T tanh(W1 s + U1 h_i), softmax-normalized."""

    def __init__(self, state_dim: int, context_dim: int, attn_dim: int):
        super().__init__()
        self.w_state = nn.Linear(state_dim, attn_dim, bias=False)
        self.u_context = nn.Linear(context_dim, attn_dim, bias=False)
        self.v = nn.Linear(attn_dim, 1, bias=False)

    def project_context(self, h: torch.Tensor) -> torch.Tensor:
        """Precompute U1 h for reuse across decoding steps. h: (B, T, C)."""
        return self.u_context(h)

    def forward(
        self, s_top: torch.Tensor, h: torch.Tensor, h_proj: torch.Tensor | None = None
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """s_top: (B, D), h: (B, T, C) -> (alpha (B, T), context (B, C))."""
        if h_proj is None:
            h_proj = self.project_context(h)
        scores = self.v(torch.tanh(self.w_state(s_top).unsqueeze(1) + h_proj)).squeeze(-1)
        alpha = torch.softmax(scores, dim=-1)
        context = torch.bmm(alpha.unsqueeze(1), h).squeeze(1)
        return alpha, context


class GlobalEmbedding(nn.Module):
    """Gated blend of the argmax-token embedding with the weighted average.

    e_avg = sum_j y_prev[j] e_j; e_top = table[chosen or argmax(y_prev)];
    output g * e_top + (1 - g) * e_avg with g = sigmoid(W2 e_top + U2 e_avg + b).
    """

    def __init__(self, vocab: int, dim: int):
        super().__init__()
        self.table = nn.Embedding(vocab, dim)
        self.w_top = nn.Linear(dim, dim, bias=False)
        self.u_avg = nn.Linear(dim, dim, bias=True)

    def forward(self, y_prev: torch.Tensor, chosen: torch.Tensor | None = None) -> torch.Tensor:
        """y_prev: (B, V) probabilities; chosen: optional (B,) token override."""
        sums = y_prev.sum(dim=-1)
        if torch.any((sums - 1.0).abs() > 1e-4):
            raise ValueError("y_prev rows must sum to 1")
        e_avg = y_prev @ self.table.weight
        idx = y_prev.argmax(dim=-1) if chosen is None else chosen
        e_top = self.table(idx)
        gate = torch.sigmoid(self.w_top(e_top) + self.u_avg(e_avg))
        return gate * e_top + (1.0 - gate) * e_avg


class AttentiveDecoder(nn.Module):
    """Three-layer LSTM decoder over one token stream.

    Vocabulary layout: 0..n_tokens-1 are real tokens, then BOS, then EOS.
    The output softmax covers the full vocabulary; token selection at decode
    time never picks BOS.
    """

    def __init__(
        self,
        n_tokens: int,
        context_dim: int = 512,
        hidden: int = 512,
        layers: int = 3,
        embedding_dim: int = 256,
        attn_dim: int = 256,
        proj_dim: int = 256,
        output_activation: str = "tanh",
    ):
        super().__init__()
        if output_activation not in ("tanh", "relu"):
            raise ValueError(f"unknown output activation {output_activation!r}")
        self.n_tokens = n_tokens
        self.vocab = n_tokens + 2
        self.bos = n_tokens
        self.eos = n_tokens + 1
        self.hidden = hidden
        self.layers = layers
        self.output_activation = output_activation
        self.embed = GlobalEmbedding(self.vocab, embedding_dim)
        self.attention = AdditiveAttention(hidden, context_dim, attn_dim)
        self.lstm = nn.LSTM(embedding_dim + context_dim, hidden, layers, batch_first=True)
        self.w_state = nn.Linear(hidden, proj_dim, bias=False)
        self.w_context = nn.Linear(context_dim, proj_dim, bias=False)
        self.w_out = nn.Linear(proj_dim, self.vocab, bias=False)

    def init_state(self, batch: int, device=None, dtype=None) -> tuple[torch.Tensor, torch.Tensor]:
        kw = {"device": device, "dtype": dtype}
        return (
            torch.zeros(self.layers, batch, self.hidden, **kw),
            torch.zeros(self.layers, batch, self.hidden, **kw),
        )

    def bos_distribution(self, batch: int, device=None, dtype=None) -> torch.Tensor:
        y = torch.zeros(batch, self.vocab, device=device, dtype=dtype)
        y[:, self.bos] = 1.0
        return y

    def decoder_step(
        self,
        state: tuple[torch.Tensor, torch.Tensor],
        e_s: torch.Tensor,
        context: torch.Tensor,
    ) -> tuple[tuple[torch.Tensor, torch.Tensor], torch.Tensor, torch.Tensor]:
        """One recurrent update. Returns (new_state, y (B, V), log_y (B, V))."""
        x = torch.cat([e_s, context], dim=-1).unsqueeze(1)
        out, new_state = self.lstm(x, state)
        s_top = out.squeeze(1)
        act = torch.tanh if self.output_activation == "tanh" else torch.relu
        logits = self.w_out(act(self.w_state(s_top) + self.w_context(context)))
        log_y = torch.log_softmax(logits, dim=-1)
        return new_state, log_y.exp(), log_y

    def pick_tokens(self, log_y: torch.Tensor) -> torch.Tensor:
        """Argmax over the vocabulary excluding BOS. log_y: (B, V) -> (B,)."""
        masked = log_y.clone()
        masked[:, self.bos] = float("-inf")
        return masked.argmax(dim=-1)


@dataclass
class _StreamState:
    state: tuple[torch.Tensor, torch.Tensor]
    y_prev: torch.Tensor  # (B, V)
    chosen: torch.Tensor | None  # (B,) previous tokens, None at step 1


@dataclass
class _Hypothesis:
    spk: _StreamState
    dir: _StreamState
    steps: list[StepOutput]
    score: float
    truncated: bool = False


class SetInference(nn.Module):
    """Context encoder plus lockstep speaker/direction decoders."""

    def __init__(
        self,
        feature_dim: int = 768,
        blstm_hidden: int = 256,
        blstm_layers: int = 3,
        n_speakers: int = 30,
        n_directions: int = 37,
        decoder_hidden: int = 512,
        decoder_layers: int = 3,
        embedding_dim: int = 256,
        attn_dim: int = 256,
        proj_dim: int = 256,
        output_activation: str = "tanh",
        max_steps: int = 5,
    ):
        super().__init__()
        self.context_dim = 2 * blstm_hidden
        self.embedding_dim = embedding_dim
        self.max_steps = max_steps
        self.blstm = nn.LSTM(
            feature_dim, blstm_hidden, blstm_layers, bidirectional=True, batch_first=True
        )
        kw = dict(
            context_dim=self.context_dim,
            hidden=decoder_hidden,
            layers=decoder_layers,
            embedding_dim=embedding_dim,
            attn_dim=attn_dim,
            proj_dim=proj_dim,
            output_activation=output_activation,
        )
        self.spk_decoder = AttentiveDecoder(n_speakers, **kw)
        self.dir_decoder = AttentiveDecoder(n_directions, **kw)

    def encode_context(self, features: torch.Tensor) -> torch.Tensor:
        """features: (T, D) or (B, T, D) -> hidden states (..., T, 2*blstm_hidden)."""
        single = features.dim() == 2
        x = features.unsqueeze(0) if single else features
        if x.shape[1] < 1:
            raise ValueError("empty feature sequence")
        h, _ = self.blstm(x)
        return h.squeeze(0) if single else h

    def _init_streams(self, batch: int, device, dtype) -> tuple[_StreamState, _StreamState]:
        streams = []
        for dec in (self.spk_decoder, self.dir_decoder):
            streams.append(
                _StreamState(
                    state=dec.init_state(batch, device=device, dtype=dtype),
                    y_prev=dec.bos_distribution(batch, device=device, dtype=dtype),
                    chosen=None,
                )
            )
        return streams[0], streams[1]

    def _advance(
        self,
        h: torch.Tensor,
        h_proj: tuple[torch.Tensor, torch.Tensor],
        spk: _StreamState,
        dir_: _StreamState,
    ):
        """Advance both decoders one step.

        Returns (new_spk, new_dir, y/log_y pairs, mask (B, D)). The mask is
        formed from this step's blended embeddings, i.e. before the step's
        own tokens are known; callers drop it on EOS steps.
        """
        outs = []
        mask_parts = []
        for dec, stream, proj in (
            (self.spk_decoder, spk, h_proj[0]),
            (self.dir_decoder, dir_, h_proj[1]),
        ):
            e = dec.embed(stream.y_prev, chosen=stream.chosen)
            s_top = stream.state[0][-1]
            _, context = dec.attention(s_top, h, proj)
            new_state, y, log_y = dec.decoder_step(stream.state, e, context)
            outs.append((new_state, y, log_y))
            mask_parts.append(e)
        mask = mask_parts[0] + mask_parts[1]
        return outs[0], outs[1], mask

    def teacher_forced_batch(
        self,
        features: torch.Tensor,
        spk_labels: torch.Tensor,
        dir_labels: torch.Tensor,
        embedding_source: str = "model",
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Run len(labels)+1 decoding steps on a batch with a shared source count.

        features: (B, T, D); labels: (B, n). Returns (spk_dists (B, n+1, V),
        dir_dists (B, n+1, V), masks (B, n, embedding_dim)). The extra step
        scores EOS and emits no mask. With embedding_source="model" the
        global embedding consumes the model's own previous distribution; with
        "labels" it consumes one-hot ground truth (oracle mode).
        """
        if embedding_source not in ("model", "labels"):
            raise ValueError(f"unknown embedding_source {embedding_source!r}")
        if spk_labels.shape != dir_labels.shape:
            raise ValueError("speaker and direction label sequences must align")
        batch, n_src = spk_labels.shape
        h = self.encode_context(features)
        h_proj = (
            self.spk_decoder.attention.project_context(h),
            self.dir_decoder.attention.project_context(h),
        )
        spk, dir_ = self._init_streams(batch, h.device, h.dtype)

        spk_dists, dir_dists, masks = [], [], []
        for t in range(n_src + 1):
            (spk_out, dir_out, mask) = self._advance(h, h_proj, spk, dir_)
            (spk_state, y_spk, _), (dir_state, y_dir, _) = spk_out, dir_out
            spk_dists.append(y_spk)
            dir_dists.append(y_dir)
            if t < n_src:
                masks.append(mask)
                if embedding_source == "model":
                    spk = _StreamState(spk_state, y_spk, self.spk_decoder.pick_tokens(y_spk.log()))
                    dir_ = _StreamState(dir_state, y_dir, self.dir_decoder.pick_tokens(y_dir.log()))
                else:
                    spk = _StreamState(
                        spk_state,
                        nn.functional.one_hot(spk_labels[:, t], self.spk_decoder.vocab).to(y_spk.dtype),
                        spk_labels[:, t],
                    )
                    dir_ = _StreamState(
                        dir_state,
                        nn.functional.one_hot(dir_labels[:, t], self.dir_decoder.vocab).to(y_dir.dtype),
                        dir_labels[:, t],
                    )
        return torch.stack(spk_dists, dim=1), torch.stack(dir_dists, dim=1), torch.stack(masks, dim=1)

    @torch.no_grad()
    def infer_sources(
        self,
        features: torch.Tensor,
        mode: str = "greedy",
        spk_labels=None,
        dir_labels=None,
        embedding_source: str = "model",
    ) -> InferenceResult:
        """Decode one example. mode: "greedy" or "teacher_forced".

        Greedy decoding stops when either stream's picked token is EOS (that
        step emits no mask) or flags truncation after max_steps. Teacher
        forcing runs len(labels)+1 scored steps.
        """
        if mode == "greedy":
            return self._greedy_single(features)
        if mode == "teacher_forced":
            if spk_labels is None or dir_labels is None:
                raise ValueError("teacher_forced mode requires label sequences")
            if len(spk_labels) != len(dir_labels):
                raise ValueError("speaker and direction label sequences must align")
            spk_t = torch.as_tensor(spk_labels, dtype=torch.long).unsqueeze(0)
            dir_t = torch.as_tensor(dir_labels, dtype=torch.long).unsqueeze(0)
            spk_d, dir_d, masks = self.teacher_forced_batch(
                features.unsqueeze(0), spk_t, dir_t, embedding_source=embedding_source
            )
            steps = []
            score = 0.0
            n_src = len(spk_labels)
            for t in range(n_src + 1):
                y_spk, y_dir = spk_d[0, t], dir_d[0, t]
                tok_s = int(self.spk_decoder.pick_tokens(y_spk.log().unsqueeze(0))[0])
                tok_d = int(self.dir_decoder.pick_tokens(y_dir.log().unsqueeze(0))[0])
                target_s = spk_labels[t] if t < n_src else self.spk_decoder.eos
                target_d = dir_labels[t] if t < n_src else self.dir_decoder.eos
                score += float(y_spk[target_s].log() + y_dir[target_d].log())
                steps.append(
                    StepOutput(
                        y_spk=y_spk.detach(),
                        y_dir=y_dir.detach(),
                        mask=masks[0, t].detach() if t < n_src else None,
                        speaker_token=tok_s,
                        direction_token=tok_d,
                    )
                )
            return InferenceResult(steps=steps, log_score=score)
        raise ValueError(f"unknown inference mode {mode!r}")

    def _greedy_single(self, features: torch.Tensor) -> InferenceResult:
        results = self.greedy_decode_batch(features.unsqueeze(0))
        return results[0]

    @torch.no_grad()
    def greedy_decode_batch(self, features: torch.Tensor) -> list[InferenceResult]:
        """Greedy decoding over a batch of equal-length examples."""
        batch = features.shape[0]
        h = self.encode_context(features)
        h_proj = (
            self.spk_decoder.attention.project_context(h),
            self.dir_decoder.attention.project_context(h),
        )
        spk, dir_ = self._init_streams(batch, h.device, h.dtype)

        all_steps: list[list[StepOutput]] = [[] for _ in range(batch)]
        scores = [0.0] * batch
        stopped = [False] * batch
        for _ in range(self.max_steps):
            (spk_state, y_spk, log_spk), (dir_state, y_dir, log_dir), mask = self._advance(
                h, h_proj, spk, dir_
            )
            tok_s = self.spk_decoder.pick_tokens(log_spk)
            tok_d = self.dir_decoder.pick_tokens(log_dir)
            for b in range(batch):
                if stopped[b]:
                    continue
                ts, td = int(tok_s[b]), int(tok_d[b])
                is_eos = ts == self.spk_decoder.eos or td == self.dir_decoder.eos
                scores[b] += float(log_spk[b, ts]) + float(log_dir[b, td])
                all_steps[b].append(
                    StepOutput(
                        y_spk=y_spk[b].detach(),
                        y_dir=y_dir[b].detach(),
                        mask=None if is_eos else mask[b].detach(),
                        speaker_token=ts,
                        direction_token=td,
                    )
                )
                if is_eos:
                    stopped[b] = True
            if all(stopped):
                break
            spk = _StreamState(spk_state, y_spk, tok_s)
            dir_ = _StreamState(dir_state, y_dir, tok_d)

        return [
            InferenceResult(steps=all_steps[b], log_score=scores[b], truncated=not stopped[b])
            for b in range(batch)
        ]

    @torch.no_grad()
    def beam_search(self, features: torch.Tensor, width: int = 3) -> InferenceResult:
        """Joint beam over synchronized (speaker, direction) pairs.

        Hypothesis score is the running sum of both streams' token
        log-probabilities; a hypothesis terminates when either stream picks
        EOS. Returns the best terminated hypothesis (best truncated one if
        nothing terminates within max_steps). width=1 reproduces greedy.
        """
        if width < 1:
            raise ValueError("beam width must be >= 1")
        h = self.encode_context(features.unsqueeze(0) if features.dim() == 2 else features)
        h_proj = (
            self.spk_decoder.attention.project_context(h),
            self.dir_decoder.attention.project_context(h),
        )
        spk0, dir0 = self._init_streams(1, h.device, h.dtype)
        live = [_Hypothesis(spk=spk0, dir=dir0, steps=[], score=0.0)]
        best_done: _Hypothesis | None = None

        for _ in range(self.max_steps):
            candidates: list[_Hypothesis] = []
            for hyp in live:
                (spk_state, y_spk, log_spk), (dir_state, y_dir, log_dir), mask = self._advance(
                    h, h_proj, hyp.spk, hyp.dir
                )
                k_s = min(width, self.spk_decoder.vocab - 1)
                k_d = min(width, self.dir_decoder.vocab - 1)
                masked_s = log_spk[0].clone()
                masked_s[self.spk_decoder.bos] = float("-inf")
                masked_d = log_dir[0].clone()
                masked_d[self.dir_decoder.bos] = float("-inf")
                top_s = torch.topk(masked_s, k_s)
                top_d = torch.topk(masked_d, k_d)
                for ls, ts in zip(top_s.values.tolist(), top_s.indices.tolist()):
                    for ld, td in zip(top_d.values.tolist(), top_d.indices.tolist()):
                        is_eos = ts == self.spk_decoder.eos or td == self.dir_decoder.eos
                        step = StepOutput(
                            y_spk=y_spk[0].detach(),
                            y_dir=y_dir[0].detach(),
                            mask=None if is_eos else mask[0].detach(),
                            speaker_token=ts,
                            direction_token=td,
                        )
                        child = _Hypothesis(
                            spk=_StreamState(spk_state, y_spk, torch.tensor([ts])),
                            dir=_StreamState(dir_state, y_dir, torch.tensor([td])),
                            steps=hyp.steps + [step],
                            score=hyp.score + ls + ld,
                        )
                        if is_eos:
                            if best_done is None or child.score > best_done.score:
                                best_done = child
                        else:
                            candidates.append(child)
            candidates.sort(key=lambda c: c.score, reverse=True)
            live = candidates[:width]
            if not live:
                break

        if best_done is None:
            best = max(live, key=lambda c: c.score)
            return InferenceResult(steps=best.steps, log_score=best.score, truncated=True)
        return InferenceResult(steps=best_done.steps, log_score=best_done.score)
