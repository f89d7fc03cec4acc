"""Two-stage trainer, retrieval evaluation, and the gradient-check harness.

Stage one trains the text and video encoders with the global + temporal
contrastive objective. Stage two freezes them (outputs computed off-tape and
excluded from the optimizer) and trains the cross-modal encoder with
masked-token prediction and video-text matching. Every random draw is keyed
by (seed, stream, step), so identical config + seed reproduces metrics and
checkpoints byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import struct
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import Config, ConfigError, build_config, merge_config_dict
from .data import PairedSample, generate, mask_tokens, stack_batch, vtm_pairs
from .encoders import (
    ContrastiveHeads,
    CrossEncoder,
    CrossHeads,
    TextEncoder,
    VideoEncoder,
    encode_pair,
)
from .engine import DiffArray, Tape, constant, no_tape
from .objectives import (
    MtcSampling,
    global_contrastive_loss,
    mlm_loss,
    mtc_loss,
    stage1_loss,
    stage2_loss,
    vtm_accuracy,
    vtm_loss,
)
from .params import flatten_params

# rng stream tags
_INIT_STREAM = 201
_EPOCH_STREAM = 202
_MTC_STREAM = 203
_MASK_STREAM = 204
_VTM_STREAM = 205
_GRADCHECK_STREAM = 206

METRICS_COLUMNS = ["step", "lr", "loss_total", "loss_global", "loss_mtc", "loss_mlm", "loss_vtm"]

CKPT_MAGIC = b"LVCK"
CKPT_VERSION = 1


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss; the last good state was saved."""


class MissingCheckpointError(FileNotFoundError):
    """A required checkpoint file does not exist."""


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------


@dataclass
class Stage1Model:
    text: TextEncoder
    video: VideoEncoder
    heads: ContrastiveHeads

    def param_tree(self) -> dict:
        return {"text": self.text.params, "video": self.video.params, "heads": self.heads.params}

    def params(self) -> dict[str, DiffArray]:
        return flatten_params(self.param_tree())


@dataclass
class Stage2Model:
    stage1: Stage1Model
    cross: CrossEncoder
    cross_heads: CrossHeads

    def param_tree(self) -> dict:
        tree = self.stage1.param_tree()
        tree["cross"] = self.cross.params
        tree["cross_heads"] = self.cross_heads.params
        return tree

    def params(self) -> dict[str, DiffArray]:
        return flatten_params(self.param_tree())


STAGE2_FROZEN_PREFIXES = ("text.", "video.", "heads.")


def build_stage1_model(cfg: Config, seed: int) -> Stage1Model:
    rng = np.random.default_rng([seed, _INIT_STREAM, 1])
    return Stage1Model(
        text=TextEncoder(cfg.model, cfg.data, rng),
        video=VideoEncoder(cfg.model, cfg.data, rng),
        heads=ContrastiveHeads(cfg.model, cfg.data, rng),
    )


def build_stage2_model(cfg: Config, seed: int, stage1_params: dict[str, np.ndarray]) -> Stage2Model:
    stage1 = build_stage1_model(cfg, seed)
    load_params(stage1.params(), stage1_params, required_prefixes=STAGE2_FROZEN_PREFIXES)
    rng = np.random.default_rng([seed, _INIT_STREAM, 2])
    cross = CrossEncoder(cfg.model, cfg.data, rng)
    cross_heads = CrossHeads(cfg.model.cross.dim, cfg.data.vocab_size, rng)
    return Stage2Model(stage1=stage1, cross=cross, cross_heads=cross_heads)


def load_params(target: dict[str, DiffArray], source: dict[str, np.ndarray], required_prefixes=()) -> None:
    for path, p in target.items():
        if path in source:
            if source[path].shape != p.data.shape:
                raise ConfigError(f"checkpoint {path}: shape {source[path].shape} != model {p.data.shape}")
            p.data = np.ascontiguousarray(source[path], dtype=np.float64)
        elif any(path.startswith(pref) for pref in required_prefixes):
            raise ConfigError(f"checkpoint missing required parameter {path}")


# ---------------------------------------------------------------------------
# optimizer and schedule
# ---------------------------------------------------------------------------


@dataclass
class TrainState:
    params: dict[str, DiffArray]
    adam_m: dict[str, np.ndarray]
    adam_v: dict[str, np.ndarray]
    step: int
    stage: str
    frozen: tuple[str, ...] = ()
    seed: int = 0

    @classmethod
    def fresh(cls, params: dict[str, DiffArray], stage: str, seed: int, frozen=()) -> "TrainState":
        trainables = [k for k in params if not any(k.startswith(p) for p in frozen)]
        return cls(
            params=params,
            adam_m={k: np.zeros_like(params[k].data) for k in trainables},
            adam_v={k: np.zeros_like(params[k].data) for k in trainables},
            step=0,
            stage=stage,
            frozen=tuple(frozen),
            seed=seed,
        )

    @property
    def trainable_paths(self) -> list[str]:
        return sorted(self.adam_m)


def lr_at(step: int, total_steps: int, warmup_steps: int, peak: float) -> float:
    """Linear warmup to the peak, then linear decay toward zero."""
    if warmup_steps > 0 and step < warmup_steps:
        return peak * (step + 1) / warmup_steps
    remaining = max(1, total_steps - warmup_steps)
    return peak * max(0.0, (total_steps - step) / remaining)


def adamw_step(state: TrainState, lr: float, cfg: Config) -> None:
    """One decoupled-weight-decay adaptive update; missing grads count as 0."""
    t = state.step + 1
    b1, b2 = cfg.train.beta1, cfg.train.beta2
    eps = cfg.train.adam_eps
    wd = cfg.train.weight_decay
    for path in state.trainable_paths:
        p = state.params[path]
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = state.adam_m[path]
        v = state.adam_v[path]
        m[:] = b1 * m + (1 - b1) * g
        v[:] = b2 * v + (1 - b2) * (g * g)
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        p.data -= lr * (mhat / (np.sqrt(vhat) + eps) + wd * p.data)
    state.step = t


def batch_indices(n: int, batch_size: int, steps: int, seed: int):
    """Fixed-size minibatches, reshuffled each epoch, tail dropped."""
    if batch_size > n:
        raise ConfigError(f"batch size {batch_size} exceeds dataset size {n}")
    order = np.empty(0, dtype=np.int64)
    pos = 0
    epoch = 0
    for _ in range(steps):
        if pos + batch_size > len(order):
            order = np.random.default_rng([seed, _EPOCH_STREAM, epoch]).permutation(n)
            epoch += 1
            pos = 0
        yield order[pos : pos + batch_size]
        pos += batch_size


# ---------------------------------------------------------------------------
# metrics / checkpoint io
# ---------------------------------------------------------------------------


def write_metrics_csv(path: str | Path, rows: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in METRICS_COLUMNS])


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def save_checkpoint(path: str | Path, params: dict, stage: str, step: int) -> None:
    """Versioned binary map of parameter path to float64 array."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    items = sorted((k, (v.data if isinstance(v, DiffArray) else np.asarray(v, dtype=np.float64))) for k, v in params.items())
    with open(path, "wb") as fh:
        stage_b = stage.encode()
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<IHQI", CKPT_VERSION, len(stage_b), step, len(items)))
        fh.write(stage_b)
        for key, arr in items:
            kb = key.encode()
            fh.write(struct.pack("<H", len(kb)))
            fh.write(kb)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
            fh.write(arr.astype("<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], str, int]:
    path = Path(path)
    if not path.exists():
        raise MissingCheckpointError(f"checkpoint not found: {path}")
    with open(path, "rb") as fh:
        if fh.read(4) != CKPT_MAGIC:
            raise ConfigError(f"{path}: not a checkpoint file")
        version, stage_len, step, count = struct.unpack("<IHQI", fh.read(18))
        if version != CKPT_VERSION:
            raise ConfigError(f"{path}: unsupported checkpoint version {version}")
        stage = fh.read(stage_len).decode()
        params: dict[str, np.ndarray] = {}
        for _ in range(count):
            (klen,) = struct.unpack("<H", fh.read(2))
            key = fh.read(klen).decode()
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim)) if ndim else ()
            n = int(np.prod(shape)) if shape else 1
            params[key] = np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(shape).copy()
    return params, stage, step


def digest_params(params: dict, prefixes: tuple[str, ...] = ()) -> str:
    """sha256 over sorted (path, bytes); restricted to prefixes if given."""
    h = hashlib.sha256()
    for key in sorted(params):
        if prefixes and not any(key.startswith(p) for p in prefixes):
            continue
        arr = params[key].data if isinstance(params[key], DiffArray) else np.asarray(params[key])
        h.update(key.encode())
        h.update(arr.tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# stage-one training
# ---------------------------------------------------------------------------


def stage1_batch_loss(model: Stage1Model, cfg: Config, tokens, pad, patches, step: int, seed: int):
    """Forward of one stage-one batch; returns (total, global, mtc) losses."""
    lo = cfg.losses
    pair = encode_pair(model.text, model.video, model.heads, tokens, pad, constant(patches))
    l_global = global_contrastive_loss(pair.video_rep, pair.paragraph_rep, lo.temperature)
    l_mtc = None
    if lo.mtc_weight > 0.0:
        sampling = MtcSampling(lo.anchor_count, lo.candidate_count, lo.cross_negative_count)
        l_mtc = mtc_loss(
            pair.clip_reps, pair.sentence_reps, sampling, lo.temperature, seed_key=(seed, _MTC_STREAM, step)
        )
    total = stage1_loss(l_global, l_mtc, lo.mtc_weight)
    return total, l_global, l_mtc


def train_stage1(
    cfg: Config,
    train_data: list[PairedSample],
    out_dir: str | Path | None = None,
    steps: int | None = None,
) -> tuple[Stage1Model, TrainState, list[dict]]:
    seed = cfg.seed
    model = build_stage1_model(cfg, seed)
    state = TrainState.fresh(model.params(), stage="stage1", seed=seed)
    total_steps = steps if steps is not None else cfg.train.stage1_steps
    steps_per_epoch = max(1, len(train_data) // cfg.train.batch_size)
    warmup = round(cfg.train.warmup_epochs * steps_per_epoch)
    rows: list[dict] = []

    for step, idx in enumerate(batch_indices(len(train_data), cfg.train.batch_size, total_steps, seed)):
        lr = lr_at(step, total_steps, warmup, cfg.train.learning_rate)
        tokens, pad, patches = stack_batch([train_data[i] for i in idx])
        for p in state.params.values():
            p.zero_grad()
        with Tape() as tape:
            total, l_global, l_mtc = stage1_batch_loss(model, cfg, tokens, pad, patches, step, seed)
            loss_val = total.item()
            if not np.isfinite(loss_val):
                _abort_divergence(out_dir, state, step)
            tape.backward(total)
        adamw_step(state, lr, cfg)
        rows.append(
            {
                "step": step,
                "lr": lr,
                "loss_total": loss_val,
                "loss_global": l_global.item(),
                "loss_mtc": None if l_mtc is None else l_mtc.item(),
                "loss_mlm": None,
                "loss_vtm": None,
            }
        )

    if out_dir is not None:
        out_dir = Path(out_dir)
        write_metrics_csv(out_dir / "stage1_metrics.csv", rows)
        save_checkpoint(out_dir / "stage1.ckpt", state.params, "stage1", state.step)
    return model, state, rows


def _abort_divergence(out_dir, state: TrainState, step: int):
    if out_dir is not None:
        save_checkpoint(Path(out_dir) / f"{state.stage}_lastgood.ckpt", state.params, state.stage, step)
    raise DivergenceError(f"non-finite loss at step {step}; last good parameters saved")


# ---------------------------------------------------------------------------
# stage-two training
# ---------------------------------------------------------------------------


def stage2_batch_loss(model: Stage2Model, cfg: Config, batch: list[PairedSample], step: int, seed: int):
    """Two cross-modal forwards per step: masked-token prediction over the
    matched pair, and matching over probabilistically replaced videos.
    Frozen encoders run off-tape, so their outputs are constants."""
    lo = cfg.losses
    tokens, pad, patches = stack_batch(batch)
    masked = mask_tokens(tokens, lo.mask_rate, np.random.default_rng([seed, _MASK_STREAM, step]), cfg.data.vocab_size)
    mixed, labels = vtm_pairs(patches, lo.vtm_replace_prob, np.random.default_rng([seed, _VTM_STREAM, step]))

    with no_tape():
        tout_masked = model.stage1.text.forward(masked.token_ids, pad)
        vout = model.stage1.video.forward(constant(patches))
        tout = model.stage1.text.forward(tokens, pad)
        vout_mixed = model.stage1.video.forward(constant(mixed))

    cross_m = model.cross.forward(tout_masked.tokens, tout_masked.key_mask, vout.feature_map)
    L = cfg.data.max_tokens
    joint_positions = np.stack(
        [masked.positions[:, 0], 1 + masked.positions[:, 1] * L + masked.positions[:, 2]], axis=1
    ) if len(masked.positions) else np.zeros((0, 2), dtype=np.int64)
    l_mlm = mlm_loss(cross_m.tokens, joint_positions, masked.labels, model.cross_heads.params["mlm"])

    cross_v = model.cross.forward(tout.tokens, tout.key_mask, vout_mixed.feature_map)
    l_vtm = vtm_loss(cross_v.cls_feat, labels, model.cross_heads.params["vtm"])
    return stage2_loss(l_mlm, l_vtm, lo.vtm_weight), l_mlm, l_vtm


def train_stage2(
    cfg: Config,
    stage1_params: dict[str, np.ndarray],
    train_data: list[PairedSample],
    out_dir: str | Path | None = None,
    steps: int | None = None,
) -> tuple[Stage2Model, TrainState, list[dict]]:
    seed = cfg.seed
    model = build_stage2_model(cfg, seed, stage1_params)
    state = TrainState.fresh(model.params(), stage="stage2", seed=seed, frozen=STAGE2_FROZEN_PREFIXES)
    total_steps = steps if steps is not None else cfg.train.stage2_steps
    steps_per_epoch = max(1, len(train_data) // cfg.train.batch_size)
    warmup = round(cfg.train.warmup_epochs * steps_per_epoch)
    rows: list[dict] = []

    for step, idx in enumerate(batch_indices(len(train_data), cfg.train.batch_size, total_steps, seed)):
        lr = lr_at(step, total_steps, warmup, cfg.train.learning_rate)
        batch = [train_data[i] for i in idx]
        for p in state.params.values():
            p.zero_grad()
        with Tape() as tape:
            total, l_mlm, l_vtm = stage2_batch_loss(model, cfg, batch, step, seed)
            loss_val = total.item()
            if not np.isfinite(loss_val):
                _abort_divergence(out_dir, state, step)
            tape.backward(total)
        adamw_step(state, lr, cfg)
        rows.append(
            {
                "step": step,
                "lr": lr,
                "loss_total": loss_val,
                "loss_global": None,
                "loss_mtc": None,
                "loss_mlm": l_mlm.item(),
                "loss_vtm": l_vtm.item(),
            }
        )

    if out_dir is not None:
        out_dir = Path(out_dir)
        write_metrics_csv(out_dir / "stage2_metrics.csv", rows)
        save_checkpoint(out_dir / "stage2.ckpt", state.params, "stage2", state.step)
    return model, state, rows


def vtm_eval_accuracy(model: Stage2Model, cfg: Config, eval_data: list[PairedSample], seed: int = 9) -> float:
    """Matching accuracy on held-out pairs at the configured replace rate."""
    rng = np.random.default_rng([seed, _VTM_STREAM, 10**6])
    correct = 0
    total = 0
    B = cfg.train.batch_size
    with no_tape():
        for start in range(0, len(eval_data) - B + 1, B):
            batch = eval_data[start : start + B]
            tokens, pad, patches = stack_batch(batch)
            mixed, labels = vtm_pairs(patches, cfg.losses.vtm_replace_prob, rng)
            tout = model.stage1.text.forward(tokens, pad)
            vout = model.stage1.video.forward(constant(mixed))
            out = model.cross.forward(tout.tokens, tout.key_mask, vout.feature_map)
            correct += vtm_accuracy(out.cls_feat, labels, model.cross_heads.params["vtm"]) * len(batch)
            total += len(batch)
    return correct / max(1, total)


# ---------------------------------------------------------------------------
# retrieval evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RetrievalReport:
    r_at_1: float
    r_at_5: float
    median_rank: float
    count: int


def encode_eval(model: Stage1Model, samples: list[PairedSample], batch_size: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Paragraph and video representations of an eval split (no tape)."""
    paras, vids = [], []
    with no_tape():
        for start in range(0, len(samples), batch_size):
            batch = samples[start : start + batch_size]
            tokens, pad, patches = stack_batch(batch)
            pair = encode_pair(model.text, model.video, model.heads, tokens, pad, constant(patches))
            paras.append(pair.paragraph_rep.data.copy())
            vids.append(pair.video_rep.data.copy())
    return np.concatenate(paras), np.concatenate(vids)


def ranks_from_similarity(sim: np.ndarray) -> np.ndarray:
    """1-based rank of the matching column for each row (strict comparisons,
    so any strictly monotone transform of sim leaves ranks unchanged)."""
    n = sim.shape[0]
    diag = sim[np.arange(n), np.arange(n)]
    return (sim > diag[:, None]).sum(axis=1) + 1


def retrieval_report(sim: np.ndarray) -> RetrievalReport:
    ranks = ranks_from_similarity(sim)
    return RetrievalReport(
        r_at_1=float((ranks <= 1).mean()),
        r_at_5=float((ranks <= 5).mean()),
        median_rank=float(np.median(ranks)),
        count=int(len(ranks)),
    )


def eval_retrieval(model: Stage1Model, eval_data: list[PairedSample], batch_size: int = 16) -> RetrievalReport:
    """Rank all eval videos for each paragraph by global similarity."""
    if not eval_data:
        raise ConfigError("eval split is empty")
    paras, vids = encode_eval(model, eval_data, batch_size)
    return retrieval_report(paras @ vids.T)


def write_retrieval_csv(path: str | Path, report: RetrievalReport) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["r_at_1", "r_at_5", "median_rank", "count"])
        writer.writerow([repr(report.r_at_1), repr(report.r_at_5), repr(report.median_rank), report.count])


# ---------------------------------------------------------------------------
# gradient-check harness
# ---------------------------------------------------------------------------


@dataclass
class GradcheckFailure:
    path: str
    flat_index: int
    analytic: float
    numeric: float


@dataclass
class GradcheckReport:
    seeds: tuple[int, ...]
    checked: int
    failures: list[GradcheckFailure] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def render(self) -> str:
        lines = [f"gradcheck: {self.checked} entries over seeds {list(self.seeds)}"]
        if self.ok:
            lines.append("result: PASS (0 failures)")
        else:
            lines.append(f"result: FAIL ({len(self.failures)} failures)")
            for f in self.failures[:50]:
                lines.append(f"  {f.path}[{f.flat_index}]: analytic={f.analytic!r} numeric={f.numeric!r}")
        return "\n".join(lines)


def gradcheck_config(base: Config) -> Config:
    """Tiny-dims profile derived from a config: same loss surface, desk-size
    everything else, so exhaustive head checks stay fast."""
    doc = merge_config_dict({})
    doc["seed"] = base.seed
    doc["losses"] = dict(base.raw["losses"])
    doc["losses"]["anchor_count"] = min(base.losses.anchor_count, 2)
    doc["losses"]["candidate_count"] = min(base.losses.candidate_count, 2)
    doc["data"].update(
        {
            "train_samples": 4,
            "eval_samples": 2,
            "clips": 2,
            "frames_per_clip": 2,
            "patch_rows": 2,
            "patch_cols": 2,
            "patch_dim": 4,
            "max_tokens": 4,
            "min_tokens": 3,
            "content_vocab": 16,
            "topic_dim": 4,
        }
    )
    doc["model"] = {
        "contrastive_dim": 8,
        "text": {"dim": 8, "heads": 2, "sentence_layers": 1, "paragraph_layers": 1, "ffn_ratio": 2},
        "video": {
            "ffn_ratio": 2,
            "clip_pool_steps": 0,
            "stages": [
                {"layers": 1, "dim": 8, "heads": 2, "temporal_window": 2, "merge": 2, "spatial_window": "full"},
                {"layers": 1, "dim": 8, "heads": 2, "temporal_window": 4, "merge": 1, "spatial_window": "full"},
            ],
        },
        "cross": {"dim": 8, "heads": 2, "layers": 1, "ffn_ratio": 2, "pool_window": [1, 1], "pool_stride": [1, 1]},
    }
    doc["train"] = dict(base.raw["train"])
    doc["train"]["batch_size"] = 2
    return build_config(doc)


def gradcheck_stage1(
    cfg: Config,
    seeds: tuple[int, ...] = (0, 1, 2),
    sample_fraction: float = 0.01,
    max_random_entries: int = 200,
    rtol: float = 1e-3,
    atol: float = 1e-6,
    h: float = 1e-5,
    head_prefixes: tuple[str, ...] = ("heads.",),
) -> GradcheckReport:
    """End-to-end finite differences of the stage-one loss.

    Checks every entry of the loss-head parameters plus a seeded random
    fraction of everything else, per seed.
    """
    report = GradcheckReport(seeds=tuple(seeds), checked=0)
    for seed in seeds:
        run_cfg = replace(cfg, seed=seed)
        model = build_stage1_model(run_cfg, seed)
        data, _ = generate(run_cfg.data, seed)
        batch = data[: run_cfg.train.batch_size]
        tokens, pad, patches = stack_batch(batch)
        flat = model.params()

        def compute_loss() -> DiffArray:
            total, _, _ = stage1_batch_loss(model, run_cfg, tokens, pad, patches, step=0, seed=seed)
            return total

        for p in flat.values():
            p.zero_grad()
        with Tape() as tape:
            tape.backward(compute_loss())
        analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for k, p in flat.items()}

        entries: list[tuple[str, int]] = []
        for path, p in flat.items():
            if any(path.startswith(pre) for pre in head_prefixes):
                entries.extend((path, i) for i in range(p.size))
        rest = [(path, i) for path, p in flat.items() if not any(path.startswith(pre) for pre in head_prefixes) for i in range(p.size)]
        rng = np.random.default_rng([seed, _GRADCHECK_STREAM])
        want = min(max_random_entries, max(1, int(len(rest) * sample_fraction)))
        pick = rng.choice(len(rest), size=min(want, len(rest)), replace=False)
        entries.extend(rest[i] for i in sorted(pick))

        with no_tape():
            for path, idx in entries:
                buf = flat[path].data.reshape(-1)
                keep = buf[idx]
                buf[idx] = keep + h
                up = compute_loss().item()
                buf[idx] = keep - h
                down = compute_loss().item()
                buf[idx] = keep
                numeric = (up - down) / (2 * h)
                a = float(analytic[path].reshape(-1)[idx])
                if abs(a - numeric) > atol + rtol * abs(numeric):
                    report.failures.append(GradcheckFailure(path, idx, a, numeric))
                report.checked += 1
    return report
