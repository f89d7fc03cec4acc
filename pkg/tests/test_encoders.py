"""Encoder contracts: sentence-local masking, clip/video representation
extraction, cross-modal joining, and the paper-shaped smoke test."""

import numpy as np
import pytest

from longvid.config import (
    CLS_ID,
    NUM_SPECIAL,
    PAD_ID,
    build_config,
    default_config,
    merge_config_dict,
    paper_shaped_overlay,
)
from longvid.encoders import (
    ContrastiveHeads,
    CrossEncoder,
    TextEncoder,
    VideoEncoder,
    encode_pair,
)
from longvid.engine import ShapeError, constant, no_tape


@pytest.fixture(scope="module")
def toy():
    cfg = default_config()
    rng = np.random.default_rng(0)
    return cfg, {
        "text": TextEncoder(cfg.model, cfg.data, rng),
        "video": VideoEncoder(cfg.model, cfg.data, rng),
        "cross": CrossEncoder(cfg.model, cfg.data, rng),
        "heads": ContrastiveHeads(cfg.model, cfg.data, rng),
    }


def make_tokens(cfg, rng, batch=2):
    d = cfg.data
    ids = rng.integers(NUM_SPECIAL, d.vocab_size, size=(batch, d.clips, d.max_tokens))
    ids[:, :, 0] = CLS_ID
    ids[:, :, -1] = PAD_ID  # exercise padding
    return ids, ids != PAD_ID


def make_patches(cfg, rng, batch=2):
    d = cfg.data
    return rng.normal(size=(batch, d.frames, d.patch_rows, d.patch_cols, d.patch_dim))


# ---------------------------------------------------------------------------
# text encoder
# ---------------------------------------------------------------------------


def test_text_paper_config_sequence_length():
    doc = merge_config_dict(paper_shaped_overlay())
    cfg = build_config(doc)
    assert 1 + cfg.data.clips * cfg.data.max_tokens == 201


def test_text_identical_sentences_identical_reps(toy):
    cfg, enc = toy
    rng = np.random.default_rng(1)
    ids, pad = make_tokens(cfg, rng, batch=1)
    ids[0] = ids[0, 0]  # repeat sentence 0 across all slots
    pad = ids != PAD_ID
    out = enc["text"].forward(ids, pad)
    reps = out.sentence_feats.data[0]
    for m in range(1, cfg.data.clips):
        assert np.allclose(reps[m], reps[0], atol=1e-12)


def test_text_sentence_isolation_in_part_one(toy):
    cfg, enc = toy
    rng = np.random.default_rng(2)
    ids, pad = make_tokens(cfg, rng, batch=1)
    out0 = enc["text"].forward(ids, pad).sentence_feats.data[0, 0]
    mutated = ids.copy()
    body = slice(1, cfg.data.max_tokens - 1)
    mutated[0, 1, body] = NUM_SPECIAL + (mutated[0, 1, body] - NUM_SPECIAL + 1) % cfg.data.content_vocab
    out1 = enc["text"].forward(mutated, mutated != PAD_ID).sentence_feats.data[0, 0]
    assert np.array_equal(out0, out1)


def test_text_paragraph_depends_on_every_sentence(toy):
    cfg, enc = toy
    rng = np.random.default_rng(3)
    ids, pad = make_tokens(cfg, rng, batch=1)
    base = enc["text"].forward(ids, pad).paragraph_feat.data
    for m in range(cfg.data.clips):
        mutated = ids.copy()
        mutated[0, m, 1] = NUM_SPECIAL + (mutated[0, m, 1] - NUM_SPECIAL + 1) % cfg.data.content_vocab
        changed = enc["text"].forward(mutated, mutated != PAD_ID).paragraph_feat.data
        assert not np.array_equal(base, changed)


def test_text_rejects_missing_cls(toy):
    cfg, enc = toy
    rng = np.random.default_rng(4)
    ids, pad = make_tokens(cfg, rng)
    ids[0, 0, 0] = NUM_SPECIAL
    with pytest.raises(ShapeError, match="CLS"):
        enc["text"].forward(ids, pad)


def test_text_rejects_overlong_ids(toy):
    cfg, enc = toy
    rng = np.random.default_rng(5)
    ids, pad = make_tokens(cfg, rng)
    ids[0, 0, 1] = cfg.data.vocab_size
    with pytest.raises(ShapeError, match="range"):
        enc["text"].forward(ids, pad)


def test_text_sentence_rep_count(toy):
    cfg, enc = toy
    rng = np.random.default_rng(6)
    ids, pad = make_tokens(cfg, rng, batch=3)
    out = enc["text"].forward(ids, pad)
    assert out.sentence_feats.shape == (3, cfg.data.clips, cfg.model.text.dim)
    assert out.tokens.shape == (3, 1 + cfg.data.clips * cfg.data.max_tokens, cfg.model.text.dim)


# ---------------------------------------------------------------------------
# video encoder
# ---------------------------------------------------------------------------


def test_video_shapes_and_clip_count(toy):
    cfg, enc = toy
    rng = np.random.default_rng(7)
    out = enc["video"].forward(constant(make_patches(cfg, rng, batch=2)))
    assert out.clip_feats.shape == (2, cfg.data.clips, 32)
    assert out.video_feat.shape == (2, 32)
    assert out.feature_map.shape == (2, cfg.data.frames, 1, 1, 32)


def test_video_constant_input_equal_clip_reps(toy):
    cfg, enc = toy
    patches = np.ones((1, cfg.data.frames, cfg.data.patch_rows, cfg.data.patch_cols, cfg.data.patch_dim))
    out = enc["video"].forward(constant(patches))
    clips = out.clip_feats.data[0]
    for m in range(1, cfg.data.clips):
        assert np.allclose(clips[m], clips[0], atol=1e-9)


def test_video_clip_rep_locality(toy):
    # The clip stage (window == frames per clip, cumulative coverage == one
    # clip) must keep clip representations independent across clips.
    cfg, enc = toy
    rng = np.random.default_rng(8)
    patches = make_patches(cfg, rng, batch=1)
    base = enc["video"].forward(constant(patches)).clip_feats.data[0]
    bumped = patches.copy()
    n = cfg.data.frames_per_clip
    bumped[0, 2 * n : 3 * n] = 0.0  # zero out clip 2
    out = enc["video"].forward(constant(bumped)).clip_feats.data[0]
    assert not np.array_equal(out[2], base[2])
    assert np.array_equal(out[0], base[0])
    assert np.array_equal(out[1], base[1])


def test_video_rejects_wrong_frame_count(toy):
    cfg, enc = toy
    rng = np.random.default_rng(9)
    bad = rng.normal(size=(1, cfg.data.frames - 1, cfg.data.patch_rows, cfg.data.patch_cols, cfg.data.patch_dim))
    with pytest.raises(ShapeError):
        enc["video"].forward(constant(bad))


# ---------------------------------------------------------------------------
# cross-modal encoder
# ---------------------------------------------------------------------------


def test_cross_token_count_toy(toy):
    cfg, enc = toy
    rng = np.random.default_rng(10)
    ids, pad = make_tokens(cfg, rng, batch=2)
    tout = enc["text"].forward(ids, pad)
    vout = enc["video"].forward(constant(make_patches(cfg, rng, batch=2)))
    out = enc["cross"].forward(tout.tokens, tout.key_mask, vout.feature_map)
    expected = 1 + cfg.data.clips * cfg.data.max_tokens + cfg.data.frames * enc["cross"].video_tokens_per_frame
    assert out.tokens.shape[1] == expected
    assert out.video_span[1] - out.video_span[0] == cfg.data.frames * enc["cross"].video_tokens_per_frame


def test_cross_paper_token_count():
    doc = merge_config_dict(paper_shaped_overlay())
    cfg = build_config(doc)
    rng = np.random.default_rng(0)
    cross = CrossEncoder(cfg.model, cfg.data, rng)
    assert cross.video_tokens_per_frame == 6
    assert cross.total_tokens == 1 + 50 * 4 + 32 * 6


def test_cross_masking_video_reduces_to_text_only(toy):
    cfg, enc = toy
    rng = np.random.default_rng(11)
    ids, pad = make_tokens(cfg, rng, batch=2)
    tout = enc["text"].forward(ids, pad)
    vout = enc["video"].forward(constant(make_patches(cfg, rng, batch=2)))

    n_v = cfg.data.frames * enc["cross"].video_tokens_per_frame
    masked = enc["cross"].forward(
        tout.tokens, tout.key_mask, vout.feature_map, video_key_mask=np.zeros((2, n_v), dtype=bool)
    )
    zero_video = enc["cross"].forward(
        tout.tokens, tout.key_mask, constant(np.zeros(vout.feature_map.shape)),
        video_key_mask=np.zeros((2, n_v), dtype=bool),
    )
    # With all video keys masked, the [CLS] output is a function of text only.
    assert np.abs(masked.cls_feat.data - zero_video.cls_feat.data).max() < 1e-12
    text_positions = masked.tokens.data[:, : masked.text_span[1]]
    zero_positions = zero_video.tokens.data[:, : zero_video.text_span[1]]
    assert np.abs(text_positions - zero_positions).max() < 1e-12


@pytest.mark.parametrize("seed", range(10))
def test_cross_sensitive_to_both_modalities(toy, seed):
    cfg, enc = toy
    rng = np.random.default_rng(100 + seed)
    ids, pad = make_tokens(cfg, rng, batch=2)
    patches = make_patches(cfg, rng, batch=2)
    tout = enc["text"].forward(ids, pad)
    vout = enc["video"].forward(constant(patches))
    base = enc["cross"].forward(tout.tokens, tout.key_mask, vout.feature_map).cls_feat.data

    ids2 = ids.copy()
    ids2[0, 0, 1] = NUM_SPECIAL + (ids2[0, 0, 1] - NUM_SPECIAL + 1) % cfg.data.content_vocab
    tout2 = enc["text"].forward(ids2, ids2 != PAD_ID)
    out_text = enc["cross"].forward(tout2.tokens, tout2.key_mask, vout.feature_map).cls_feat.data
    assert not np.array_equal(base[0], out_text[0])

    vout2 = enc["video"].forward(constant(patches + rng.normal(scale=0.5, size=patches.shape)))
    out_video = enc["cross"].forward(tout.tokens, tout.key_mask, vout2.feature_map).cls_feat.data
    assert not np.array_equal(base[0], out_video[0])


# ---------------------------------------------------------------------------
# projection heads
# ---------------------------------------------------------------------------


def test_all_projected_reps_unit_norm(toy):
    cfg, enc = toy
    rng = np.random.default_rng(12)
    ids, pad = make_tokens(cfg, rng, batch=3)
    pair = encode_pair(enc["text"], enc["video"], enc["heads"], ids, pad, constant(make_patches(cfg, rng, batch=3)))
    for reps in (pair.sentence_reps, pair.paragraph_rep, pair.clip_reps, pair.video_rep):
        norms = np.linalg.norm(reps.data, axis=-1)
        assert np.abs(norms - 1.0).max() < 1e-9


# ---------------------------------------------------------------------------
# paper-shaped configuration
# ---------------------------------------------------------------------------


def test_paper_shaped_config_passes_shape_checks():
    doc = merge_config_dict(paper_shaped_overlay())
    cfg = build_config(doc)
    sched = cfg.model.video.schedule
    assert sched.temporal_windows == (2, 4, 8, 16, 32)
    assert sched.grid_after(len(sched.stages) - 1, (24, 40)) == (3, 5)
    assert [s.dim for s in sched.stages] == [128, 256, 512, 512, 1024]


@pytest.mark.slow
def test_paper_shaped_forward_smoke():
    doc = merge_config_dict(paper_shaped_overlay())
    cfg = build_config(doc)
    rng = np.random.default_rng(0)
    text = TextEncoder(cfg.model, cfg.data, rng)
    video = VideoEncoder(cfg.model, cfg.data, rng)
    cross = CrossEncoder(cfg.model, cfg.data, rng)

    ids = rng.integers(NUM_SPECIAL, cfg.data.vocab_size, size=(1, 4, 50))
    ids[:, :, 0] = CLS_ID
    patches = rng.normal(size=(1, 32, 24, 40, 192))
    with no_tape():
        tout = text.forward(ids, ids != PAD_ID)
        vout = video.forward(constant(patches))
        out = cross.forward(tout.tokens, tout.key_mask, vout.feature_map)
    assert tout.tokens.shape == (1, 201, 1024)
    assert vout.clip_feats.shape == (1, 4, 512)
    assert vout.video_feat.shape == (1, 1024)
    assert vout.feature_map.shape == (1, 32, 3, 5, 1024)
    assert out.tokens.shape == (1, 393, 1024)
    assert np.isfinite(out.tokens.data).all()
