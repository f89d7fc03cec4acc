"""The three encoders: two-part text, hierarchical-window video, cross-modal.

Text runs sentence-local attention first (per-sentence [CLS] outputs become
sentence representations), then paragraph-wide attention behind a prepended
global [CLS] built as the mean of the sentence [CLS] vectors. Video stacks
window-attention stages with spatial patch merging in between; the stage
whose temporal window equals the per-clip frame count yields clip
representations, the final stage the video representation. The cross-modal
encoder joins pooled video tokens to the paragraph-level text tokens with
full self-attention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import params as P
from .attention import WindowSpec, multi_head_attention, windowed_mha
from .config import CLS_ID, DataConfig, ModelConfig, PAD_ID, clip_stage_index
from .engine import DiffArray, ShapeError
from .engine import ops as O


# ---------------------------------------------------------------------------
# shared transformer pieces (pre-norm blocks)
# ---------------------------------------------------------------------------


def linear(x: DiffArray, p: dict) -> DiffArray:
    return O.add(O.matmul(x, p["w"]), p["b"])


def _ffn(x: DiffArray, p: dict) -> DiffArray:
    return linear(O.gelu(linear(x, p["fc1"])), p["fc2"])


def _block_params(rng: np.random.Generator, dim: int, heads: int, ffn_ratio: int, window: tuple[int, int, int] | None = None) -> dict:
    from .attention import init_attention_params

    return {
        "ln1": P.layernorm_init(dim),
        "attn": init_attention_params(rng, dim, heads, window=window),
        "ln2": P.layernorm_init(dim),
        "fc1": P.linear_init(rng, dim, ffn_ratio * dim),
        "fc2": P.linear_init(rng, ffn_ratio * dim, dim),
    }


def _full_attention_block(x: DiffArray, p: dict, heads: int, add_mask: np.ndarray | None) -> DiffArray:
    h = O.layernorm(x, p["ln1"]["g"], p["ln1"]["b"])
    x = O.add(x, multi_head_attention(h, p["attn"], heads, add_mask))
    h = O.layernorm(x, p["ln2"]["g"], p["ln2"]["b"])
    return O.add(x, _ffn(h, p))


def _windowed_block(x: DiffArray, p: dict, heads: int, spec: WindowSpec) -> DiffArray:
    h = O.layernorm(x, p["ln1"]["g"], p["ln1"]["b"])
    x = O.add(x, windowed_mha(h, spec, p["attn"], heads).a)
    h = O.layernorm(x, p["ln2"]["g"], p["ln2"]["b"])
    return O.add(x, _ffn(h, p))


def _key_mask_to_additive(allowed: np.ndarray) -> np.ndarray:
    # (B, n) boolean keys -> (B, 1, 1, n) additive mask
    return np.where(allowed[:, None, None, :], 0.0, -1e9)


# ---------------------------------------------------------------------------
# text encoder
# ---------------------------------------------------------------------------


@dataclass
class TextOutput:
    sentence_feats: DiffArray  # (B, M, d) per-sentence [CLS] after part 1
    paragraph_feat: DiffArray  # (B, d) global [CLS] after part 2
    tokens: DiffArray  # (B, 1 + M*L, d) part-2 outputs, global [CLS] first
    key_mask: np.ndarray  # (B, 1 + M*L) True where attendable


class TextEncoder:
    """Sentence-local layers, then paragraph-wide layers over all tokens."""

    def __init__(self, model_cfg: ModelConfig, data_cfg: DataConfig, rng: np.random.Generator):
        t = model_cfg.text
        self.cfg = t
        self.sentences = data_cfg.clips
        self.max_tokens = data_cfg.max_tokens
        self.vocab = data_cfg.vocab_size
        d = t.dim
        self.params = {
            "tok_emb": P.normal(rng, (self.vocab, d)),
            "pos_emb": P.normal(rng, (self.max_tokens, d)),
            "seg_emb": P.normal(rng, (self.sentences, d)),
            "sentence_blocks": {
                str(i): _block_params(rng, d, t.heads, t.ffn_ratio) for i in range(t.sentence_layers)
            },
            "paragraph_blocks": {
                str(i): _block_params(rng, d, t.heads, t.ffn_ratio) for i in range(t.paragraph_layers)
            },
            "ln_out": P.layernorm_init(d),
        }

    def _sentence_mask(self, pad: np.ndarray) -> np.ndarray:
        # Block-diagonal per sentence; pad keys masked everywhere.
        B, M, L = pad.shape
        n = M * L
        same = np.zeros((n, n), dtype=bool)
        for m in range(M):
            same[m * L : (m + 1) * L, m * L : (m + 1) * L] = True
        allowed = same[None, :, :] & pad.reshape(B, 1, n)
        return np.where(allowed[:, None, :, :], 0.0, -1e9)

    def forward(self, token_ids: np.ndarray, pad_mask: np.ndarray | None = None) -> TextOutput:
        """token_ids: (B, M, L) ints; pad_mask True at real tokens."""
        B, M, L = token_ids.shape
        if M != self.sentences or L != self.max_tokens:
            raise ShapeError(f"expected (B, {self.sentences}, {self.max_tokens}) token ids, got {token_ids.shape}")
        if (token_ids[:, :, 0] != CLS_ID).any():
            raise ShapeError("every sentence must start with [CLS]")
        if token_ids.max() >= self.vocab or token_ids.min() < 0:
            raise ShapeError(f"token ids out of range [0, {self.vocab})")
        if pad_mask is None:
            pad_mask = token_ids != PAD_ID
        pad_mask = pad_mask.astype(bool)

        t = self.cfg
        p = self.params
        x = O.embedding(p["tok_emb"], token_ids.reshape(B, M * L))  # (B, n, d)
        pos = O.reshape(p["pos_emb"], (1, 1, L, t.dim))
        x = O.add(O.reshape(x, (B, M, L, t.dim)), pos)
        x = O.reshape(x, (B, M * L, t.dim))

        mask1 = self._sentence_mask(pad_mask)
        for i in range(t.sentence_layers):
            x = _full_attention_block(x, p["sentence_blocks"][str(i)], t.heads, mask1)

        cls_positions = np.arange(M) * L
        sentence_feats = O.take(x, cls_positions, axis=1)  # (B, M, d)

        seg = O.reshape(p["seg_emb"], (1, M, 1, t.dim))
        x2 = O.add(O.reshape(x, (B, M, L, t.dim)), seg)
        x2 = O.reshape(x2, (B, M * L, t.dim))
        global_cls = O.mean(sentence_feats, axis=1, keepdims=True)  # (B, 1, d)
        x2 = O.concat([global_cls, x2], axis=1)  # (B, 1 + n, d)

        key_mask = np.concatenate([np.ones((B, 1), dtype=bool), pad_mask.reshape(B, M * L)], axis=1)
        mask2 = _key_mask_to_additive(key_mask)
        for i in range(t.paragraph_layers):
            x2 = _full_attention_block(x2, p["paragraph_blocks"][str(i)], t.heads, mask2)
        x2 = O.layernorm(x2, p["ln_out"]["g"], p["ln_out"]["b"])

        paragraph = O.reshape(O.take(x2, np.array([0]), axis=1), (B, t.dim))
        return TextOutput(sentence_feats=sentence_feats, paragraph_feat=paragraph, tokens=x2, key_mask=key_mask)


# ---------------------------------------------------------------------------
# video encoder
# ---------------------------------------------------------------------------


@dataclass
class VideoOutput:
    clip_feats: DiffArray  # (B, M, d_clip)
    video_feat: DiffArray  # (B, d_final)
    feature_map: DiffArray  # (B, T, Hf, Wf, d_final)
    stage_maps: list[DiffArray]  # per-stage outputs (kept for locality tests)


def _mean_pool_2x2(x: DiffArray) -> DiffArray:
    B, T, H, W, C = x.shape
    r = O.reshape(x, (B, T, H // 2, 2, W // 2, 2, C))
    r = O.mean(r, axis=3)
    return O.mean(r, axis=4)


class VideoEncoder:
    """Staged windowed attention over a (B, T, H, W, patch_dim) grid."""

    def __init__(self, model_cfg: ModelConfig, data_cfg: DataConfig, rng: np.random.Generator):
        v = model_cfg.video
        self.schedule = v.schedule
        self.ffn_ratio = v.ffn_ratio
        self.clip_pool_steps = v.clip_pool_steps
        self.frames = data_cfg.frames
        self.frames_per_clip = data_cfg.frames_per_clip
        self.clips = data_cfg.clips
        self.grid = (data_cfg.patch_rows, data_cfg.patch_cols)
        self.patch_dim = data_cfg.patch_dim
        self.clip_stage = clip_stage_index(self.schedule, self.frames_per_clip)
        self.schedule.validate(self.frames, self.grid)

        stages: dict = {}
        d_in = self.patch_dim
        h, w = self.grid
        for i, s in enumerate(self.schedule.stages):
            h, w = h // s.merge, w // s.merge
            sp: dict = {}
            if s.merge > 1 or d_in != s.dim:
                sp["merge"] = P.linear_init(rng, d_in * s.merge * s.merge, s.dim)
            if i == 0:
                # Spatial positions are absolute; temporal position enters
                # only through the per-window relative bias, which keeps the
                # trunk translation-equivariant across aligned clips.
                sp["space_emb"] = P.normal(rng, (h * w, s.dim))
            sh, sw = s.spatial_window if s.spatial_window is not None else (h, w)
            sp["blocks"] = {
                str(j): _block_params(rng, s.dim, s.heads, self.ffn_ratio, window=(s.temporal_window, sh, sw))
                for j in range(s.layers)
            }
            stages[str(i)] = sp
            d_in = s.dim
        self.params = {"stages": stages, "ln_out": P.layernorm_init(self.schedule.stages[-1].dim)}

    def _merge_tokens(self, x: DiffArray, merge: int) -> DiffArray:
        # (B, T, H, W, C) -> (B, T, H/m, W/m, m*m*C): concat m x m neighbors.
        B, T, H, W, C = x.shape
        r = O.reshape(x, (B, T, H // merge, merge, W // merge, merge, C))
        r = O.transpose(r, (0, 1, 2, 4, 3, 5, 6))
        return O.reshape(r, (B, T, H // merge, W // merge, merge * merge * C))

    def feature_maps(self, patches: DiffArray) -> list[DiffArray]:
        """Trunk forward only: the per-stage output grids."""
        B, T, H, W, C = patches.shape
        if T != self.frames or (H, W) != self.grid or C != self.patch_dim:
            raise ShapeError(
                f"expected (B, {self.frames}, {self.grid[0]}, {self.grid[1]}, {self.patch_dim}) patches, got {patches.shape}"
            )
        x = patches
        maps: list[DiffArray] = []
        h, w = self.grid
        for i, s in enumerate(self.schedule.stages):
            sp = self.params["stages"][str(i)]
            if s.merge > 1:
                x = self._merge_tokens(x, s.merge)
            h, w = h // s.merge, w // s.merge
            if "merge" in sp:
                x = linear(x, sp["merge"])
            if i == 0:
                space = O.reshape(sp["space_emb"], (1, 1, h, w, s.dim))
                x = O.add(x, space)
            spec = WindowSpec(temporal=s.temporal_window, spatial=s.spatial_window)
            for j in range(s.layers):
                x = _windowed_block(x, sp["blocks"][str(j)], s.heads, spec)
            maps.append(x)
        return maps

    def forward(self, patches: DiffArray) -> VideoOutput:
        maps = self.feature_maps(patches)
        final = O.layernorm(maps[-1], self.params["ln_out"]["g"], self.params["ln_out"]["b"])

        clip_map = maps[self.clip_stage]
        for _ in range(self.clip_pool_steps):
            clip_map = _mean_pool_2x2(clip_map)
        B, T, Hc, Wc, Dc = clip_map.shape
        per_clip = O.reshape(clip_map, (B, self.clips, self.frames_per_clip * Hc * Wc, Dc))
        clip_feats = O.mean(per_clip, axis=2)  # (B, M, d_clip)

        B, T, Hf, Wf, Df = final.shape
        video_feat = O.mean(O.reshape(final, (B, T * Hf * Wf, Df)), axis=1)
        return VideoOutput(clip_feats=clip_feats, video_feat=video_feat, feature_map=final, stage_maps=maps)


# ---------------------------------------------------------------------------
# cross-modal encoder
# ---------------------------------------------------------------------------


@dataclass
class CrossOutput:
    tokens: DiffArray  # (B, n, d)
    cls_feat: DiffArray  # (B, d)
    text_span: tuple[int, int]  # [start, stop) of text tokens in the sequence
    video_span: tuple[int, int]


class CrossEncoder:
    """Joint self-attention over [CLS] + text tokens + pooled video tokens."""

    def __init__(self, model_cfg: ModelConfig, data_cfg: DataConfig, rng: np.random.Generator):
        c = model_cfg.cross
        self.cfg = c
        self.frames = data_cfg.frames
        fh, fw = model_cfg.video.schedule.grid_after(
            len(model_cfg.video.schedule.stages) - 1, (data_cfg.patch_rows, data_cfg.patch_cols)
        )
        ph = (fh - c.pool_window[0]) // c.pool_stride[0] + 1
        pw = (fw - c.pool_window[1]) // c.pool_stride[1] + 1
        self.video_tokens_per_frame = ph * pw
        self.text_tokens = 1 + data_cfg.clips * data_cfg.max_tokens
        self.total_tokens = self.text_tokens + self.frames * self.video_tokens_per_frame
        d_text = model_cfg.text.dim
        d_video = model_cfg.video.schedule.stages[-1].dim
        self.params = {
            "text_adapter": P.linear_init(rng, d_text, c.dim),
            "video_adapter": P.linear_init(rng, d_video, c.dim),
            "pos_emb": P.normal(rng, (self.total_tokens, c.dim)),
            "blocks": {str(i): _block_params(rng, c.dim, c.heads, c.ffn_ratio) for i in range(c.layers)},
            "ln_out": P.layernorm_init(c.dim),
        }

    def pool_video(self, feature_map: DiffArray) -> DiffArray:
        """(B, T, Hf, Wf, d) -> (B, T * tokens_per_frame, d) via spatial maxpool."""
        c = self.cfg
        pooled = O.maxpool2d(feature_map, c.pool_window, c.pool_stride)
        B, T, ph, pw, d = pooled.shape
        return O.reshape(pooled, (B, T * ph * pw, d))

    def forward(
        self,
        text_tokens: DiffArray,
        text_key_mask: np.ndarray,
        video_feature_map: DiffArray,
        video_key_mask: np.ndarray | None = None,
    ) -> CrossOutput:
        c = self.cfg
        B = text_tokens.shape[0]
        if text_tokens.shape[1] != self.text_tokens:
            raise ShapeError(f"expected {self.text_tokens} text tokens, got {text_tokens.shape[1]}")
        vtok = self.pool_video(video_feature_map)
        n_v = vtok.shape[1]
        x = O.concat([linear(text_tokens, self.params["text_adapter"]), linear(vtok, self.params["video_adapter"])], axis=1)
        x = O.add(x, O.reshape(self.params["pos_emb"], (1, self.total_tokens, c.dim)))

        video_allowed = np.ones((B, n_v), dtype=bool) if video_key_mask is None else video_key_mask.astype(bool)
        key_mask = np.concatenate([text_key_mask.astype(bool), video_allowed], axis=1)
        add_mask = _key_mask_to_additive(key_mask)
        for i in range(c.layers):
            x = _full_attention_block(x, self.params["blocks"][str(i)], c.heads, add_mask)
        x = O.layernorm(x, self.params["ln_out"]["g"], self.params["ln_out"]["b"])
        cls = O.reshape(O.take(x, np.array([0]), axis=1), (B, c.dim))
        return CrossOutput(
            tokens=x,
            cls_feat=cls,
            text_span=(0, self.text_tokens),
            video_span=(self.text_tokens, self.total_tokens),
        )


# ---------------------------------------------------------------------------
# projection heads and the paired encoding
# ---------------------------------------------------------------------------


class ContrastiveHeads:
    """Linear projections to the shared contrastive space, then L2 norm.

    One text head serves sentence and paragraph features (equal dims); the
    video side needs separate clip/global heads because the clip stage and
    the final stage can differ in width.
    """

    def __init__(self, model_cfg: ModelConfig, data_cfg: DataConfig, rng: np.random.Generator):
        dc = model_cfg.contrastive_dim
        d_text = model_cfg.text.dim
        clip_stage = clip_stage_index(model_cfg.video.schedule, data_cfg.frames_per_clip)
        d_clip = model_cfg.video.schedule.stages[clip_stage].dim
        d_video = model_cfg.video.schedule.stages[-1].dim
        self.params = {
            "text": P.linear_init(rng, d_text, dc),
            "clip": P.linear_init(rng, d_clip, dc),
            "video": P.linear_init(rng, d_video, dc),
        }

    def project_text(self, feats: DiffArray) -> DiffArray:
        return O.l2_normalize(linear(feats, self.params["text"]))

    def project_clip(self, feats: DiffArray) -> DiffArray:
        return O.l2_normalize(linear(feats, self.params["clip"]))

    def project_video(self, feats: DiffArray) -> DiffArray:
        return O.l2_normalize(linear(feats, self.params["video"]))


class CrossHeads:
    """Vocabulary head for masked-token prediction and the 2-class match head."""

    def __init__(self, cross_dim: int, vocab_size: int, rng: np.random.Generator):
        self.params = {
            "mlm": P.linear_init(rng, cross_dim, vocab_size),
            "vtm": P.linear_init(rng, cross_dim, 2),
        }

    def mlm_logits(self, token_feats: DiffArray) -> DiffArray:
        return linear(token_feats, self.params["mlm"])

    def vtm_logits(self, cls_feat: DiffArray) -> DiffArray:
        return linear(cls_feat, self.params["vtm"])


@dataclass
class EncodedPair:
    """Stage-one representations of a batch, all rows unit-norm."""

    sentence_reps: DiffArray  # (B, M, dc)
    paragraph_rep: DiffArray  # (B, dc)
    clip_reps: DiffArray  # (B, M, dc)
    video_rep: DiffArray  # (B, dc)
    text: TextOutput
    video: VideoOutput


def encode_pair(
    text_enc: TextEncoder,
    video_enc: VideoEncoder,
    heads: ContrastiveHeads,
    token_ids: np.ndarray,
    pad_mask: np.ndarray,
    patches: DiffArray,
) -> EncodedPair:
    tout = text_enc.forward(token_ids, pad_mask)
    vout = video_enc.forward(patches)
    return EncodedPair(
        sentence_reps=heads.project_text(tout.sentence_feats),
        paragraph_rep=heads.project_text(tout.paragraph_feat),
        clip_reps=heads.project_clip(vout.clip_feats),
        video_rep=heads.project_video(vout.video_feat),
        text=tout,
        video=vout,
    )
