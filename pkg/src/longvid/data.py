"""Synthetic long-form video/paragraph data with controllable temporal
alignment.

Each sample carries M latent topic vectors produced by a bounded-step random
walk, so temporal distance and topic distance correlate. Clip m's frames are
noisy linear images of topic m; sentence m's tokens are drawn from a
topic-conditioned vocabulary distribution. The latent script is retained as
ground truth for probes.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import CLS_ID, DataConfig, MASK_ID, NUM_SPECIAL, PAD_ID

# rng stream tags (mixed into the seed sequence so streams never collide)
_GLOBAL_STREAM = 101
_SAMPLE_STREAM = 102

SHARD_MAGIC = b"LVDS"
SHARD_VERSION = 1


@dataclass(frozen=True)
class LatentScript:
    """Ground-truth topics for one sample: (M, topic_dim), unit rows."""

    sample_id: int
    topics: np.ndarray


@dataclass(frozen=True)
class PairedSample:
    """One aligned long-form sample: M clips of N frames + M sentences."""

    sample_id: int
    topics: np.ndarray  # (M, topic_dim)
    patches: np.ndarray  # (M, N, H, W, patch_dim) float64
    tokens: np.ndarray  # (M, L) int64, [CLS] first, [PAD] tail
    lengths: np.ndarray  # (M,) int64 real token counts incl. [CLS]

    @property
    def script(self) -> LatentScript:
        return LatentScript(self.sample_id, self.topics)


@dataclass
class MaskedBatch:
    """Token grid after masking-for-prediction."""

    token_ids: np.ndarray  # (B, M, L) with replacements applied
    positions: np.ndarray  # (k, 3) rows of (batch, sentence, token)
    labels: np.ndarray  # (k,) original ids at the masked positions


class GeneratorMatrices:
    """Seed-fixed structure shared by every sample of a dataset: topic-to-
    patch and topic-to-token-logit maps, plus the shared opening anchors.

    Walks start near one of a small set of openings, so a single clip (or
    sentence) is ambiguous across samples and only longer context identifies
    an item; that is what makes more frames genuinely worth having.
    """

    def __init__(self, cfg: DataConfig, seed: int):
        rng = np.random.default_rng([seed, _GLOBAL_STREAM])
        self.patch_map = rng.normal(size=(cfg.patch_dim, cfg.topic_dim)) / np.sqrt(cfg.topic_dim)
        self.token_map = rng.normal(size=(cfg.content_vocab, cfg.topic_dim)) / np.sqrt(cfg.topic_dim)
        anchors = rng.normal(size=(cfg.openings, cfg.topic_dim))
        self.opening_anchors = anchors / np.linalg.norm(anchors, axis=1, keepdims=True)


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _walk_topics(cfg: DataConfig, mats: GeneratorMatrices, rng: np.random.Generator) -> np.ndarray:
    topics = np.empty((cfg.clips, cfg.topic_dim))
    start = mats.opening_anchors[int(rng.integers(cfg.openings))]
    z = _unit(start + cfg.opening_jitter * rng.normal(size=cfg.topic_dim))
    topics[0] = z
    for m in range(1, cfg.clips):
        z = _unit(z + cfg.walk_step * rng.normal(size=cfg.topic_dim))
        topics[m] = z
    return topics


def generate_sample(cfg: DataConfig, mats: GeneratorMatrices, seed: int, sample_id: int) -> PairedSample:
    rng = np.random.default_rng([seed, _SAMPLE_STREAM, sample_id])
    topics = _walk_topics(cfg, mats, rng)

    patches = np.empty((cfg.clips, cfg.frames_per_clip, cfg.patch_rows, cfg.patch_cols, cfg.patch_dim))
    for m in range(cfg.clips):
        base = mats.patch_map @ topics[m]
        noise = rng.normal(scale=cfg.patch_noise, size=patches[m].shape)
        patches[m] = base + noise

    tokens = np.full((cfg.clips, cfg.max_tokens), PAD_ID, dtype=np.int64)
    lengths = np.empty(cfg.clips, dtype=np.int64)
    for m in range(cfg.clips):
        logits = mats.token_map @ topics[m] / cfg.token_temperature
        probs = np.exp(logits - logits.max())
        probs /= probs.sum()
        length = int(rng.integers(cfg.min_tokens, cfg.max_tokens + 1))
        tokens[m, 0] = CLS_ID
        # Distinct tokens per sentence: degenerate one-word sentences would
        # otherwise recur verbatim across samples with nearby topics.
        tokens[m, 1:length] = NUM_SPECIAL + rng.choice(cfg.content_vocab, size=length - 1, p=probs, replace=False)
        lengths[m] = length
    return PairedSample(sample_id=sample_id, topics=topics, patches=patches, tokens=tokens, lengths=lengths)


def generate(cfg: DataConfig, seed: int) -> tuple[list[PairedSample], list[PairedSample]]:
    """Deterministic train/eval datasets with disjoint sample ids."""
    mats = GeneratorMatrices(cfg, seed)
    train = [generate_sample(cfg, mats, seed, i) for i in range(cfg.train_samples)]
    eval_ = [
        generate_sample(cfg, mats, seed, cfg.train_samples + i) for i in range(cfg.eval_samples)
    ]
    return train, eval_


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------


def stack_batch(samples: list[PairedSample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(token_ids (B, M, L), pad_mask, patches (B, M*N, H, W, p))."""
    tokens = np.stack([s.tokens for s in samples])
    pad = tokens != PAD_ID
    patches = np.stack([s.patches.reshape(-1, *s.patches.shape[2:]) for s in samples])
    return tokens, pad, patches


def truncate_clips(sample: PairedSample, clips: int) -> PairedSample:
    """Short-form view of a long-form sample: its first `clips` pairs.

    Used by the frame-count comparison: a model trained on fewer frames gets
    to see only this much of each item, train and eval alike.
    """
    if not 1 <= clips <= sample.topics.shape[0]:
        raise ValueError(f"cannot take {clips} clips from {sample.topics.shape[0]}")
    return PairedSample(
        sample_id=sample.sample_id,
        topics=sample.topics[:clips].copy(),
        patches=sample.patches[:clips].copy(),
        tokens=sample.tokens[:clips].copy(),
        lengths=sample.lengths[:clips].copy(),
    )


# ---------------------------------------------------------------------------
# masking for masked-token prediction
# ---------------------------------------------------------------------------


def mask_tokens(token_ids: np.ndarray, rate: float, rng: np.random.Generator, vocab_size: int) -> MaskedBatch:
    """BERT-style masking of non-special tokens.

    Selects positions at `rate`; of those, 80% become [MASK], 10% a random
    content token, 10% stay unchanged. Special tokens are never selected.
    """
    if not 0.0 < rate < 1.0:
        raise ValueError(f"mask rate must be in (0, 1), got {rate}")
    out = token_ids.copy()
    maskable = token_ids >= NUM_SPECIAL
    coins = rng.random(token_ids.shape)
    chosen = maskable & (coins < rate)
    positions = np.argwhere(chosen)
    labels = token_ids[chosen]

    action = rng.random(len(positions))
    replace_random = rng.integers(NUM_SPECIAL, vocab_size, size=len(positions))
    for i, (pos, a) in enumerate(zip(positions, action)):
        idx = tuple(pos)
        if a < 0.8:
            out[idx] = MASK_ID
        elif a < 0.9:
            out[idx] = replace_random[i]
        # else: keep the original token
    return MaskedBatch(token_ids=out, positions=positions, labels=labels)


# ---------------------------------------------------------------------------
# matched/mismatched pairing for the matching task
# ---------------------------------------------------------------------------


def vtm_pairs(patches: np.ndarray, prob: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Replace each sample's video by another sample's with probability
    `prob`; returns (patches, labels) with label 0 at replaced rows."""
    B = patches.shape[0]
    if B < 2:
        raise ValueError(f"pairing needs a batch of >= 2, got {B}")
    if not 0.0 <= prob <= 1.0:
        raise ValueError(f"replace probability must be in [0, 1], got {prob}")
    out = patches.copy()
    labels = np.ones(B, dtype=np.int64)
    for i in range(B):
        if rng.random() < prob:
            donor = int(rng.integers(B - 1))
            if donor >= i:
                donor += 1
            out[i] = patches[donor]
            labels[i] = 0
    return out, labels


# ---------------------------------------------------------------------------
# shard file format (little-endian, versioned header)
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4sI9I")  # magic, version, M N H W p L vocab count topic_dim


def write_shard(path: str | Path, samples: list[PairedSample], cfg: DataConfig) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                SHARD_MAGIC,
                SHARD_VERSION,
                cfg.clips,
                cfg.frames_per_clip,
                cfg.patch_rows,
                cfg.patch_cols,
                cfg.patch_dim,
                cfg.max_tokens,
                cfg.vocab_size,
                len(samples),
                cfg.topic_dim,
            )
        )
        for s in samples:
            fh.write(struct.pack("<Q", s.sample_id))
            fh.write(s.topics.astype("<f8").tobytes())
            fh.write(s.patches.astype("<f8").tobytes())
            fh.write(s.tokens.astype("<u4").tobytes())
            fh.write(s.lengths.astype("<u4").tobytes())


def read_shard(path: str | Path) -> tuple[list[PairedSample], dict]:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise ValueError(f"{path}: truncated shard header")
        magic, version, M, N, H, W, p, L, vocab, count, dz = _HEADER.unpack(head)
        if magic != SHARD_MAGIC:
            raise ValueError(f"{path}: not a data shard (magic {magic!r})")
        if version != SHARD_VERSION:
            raise ValueError(f"{path}: unsupported shard version {version}")
        meta = {
            "clips": M,
            "frames_per_clip": N,
            "patch_rows": H,
            "patch_cols": W,
            "patch_dim": p,
            "max_tokens": L,
            "vocab_size": vocab,
            "count": count,
            "topic_dim": dz,
        }
        samples = []
        for _ in range(count):
            (sid,) = struct.unpack("<Q", fh.read(8))
            topics = np.frombuffer(fh.read(8 * M * dz), dtype="<f8").reshape(M, dz).copy()
            patches = (
                np.frombuffer(fh.read(8 * M * N * H * W * p), dtype="<f8").reshape(M, N, H, W, p).copy()
            )
            tokens = np.frombuffer(fh.read(4 * M * L), dtype="<u4").reshape(M, L).astype(np.int64)
            lengths = np.frombuffer(fh.read(4 * M), dtype="<u4").astype(np.int64)
            samples.append(PairedSample(sid, topics, patches, tokens, lengths))
        trailing = fh.read(1)
        if trailing:
            warnings.warn(f"{path}: trailing bytes after {count} samples", stacklevel=2)
    return samples, meta


# ---------------------------------------------------------------------------
# probes (sanity that the alignment task is solvable)
# ---------------------------------------------------------------------------


def clip_observation(sample: PairedSample) -> np.ndarray:
    """Mean patch vector of each clip: (M, patch_dim)."""
    return sample.patches.mean(axis=(1, 2, 3))


def sentence_observation(sample: PairedSample, vocab_size: int) -> np.ndarray:
    """Normalized content-token histogram of each sentence: (M, vocab)."""
    M, L = sample.tokens.shape
    hist = np.zeros((M, vocab_size))
    for m in range(M):
        real = sample.tokens[m, 1 : sample.lengths[m]]
        for t in real:
            hist[m, t] += 1.0
        hist[m] /= max(1, len(real))
    return hist


def nearest_topic_accuracy(observations: np.ndarray, fit_targets: np.ndarray, samples: list[PairedSample]) -> float:
    """Fit a least-squares linear probe from observations to topics, then
    score nearest-neighbor matching against each sample's own M topics."""
    probe, *_ = np.linalg.lstsq(observations, fit_targets, rcond=None)
    predicted = observations @ probe
    M = samples[0].topics.shape[0]
    hits = 0
    total = 0
    for i, s in enumerate(samples):
        for m in range(M):
            z = predicted[i * M + m]
            dists = np.linalg.norm(s.topics - z, axis=1)
            hits += int(np.argmin(dists) == m)
            total += 1
    return hits / total
