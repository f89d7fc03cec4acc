import time, sys, numpy as np
from dataclasses import replace
from longvid.config import default_config, build_config, merge_config_dict
from longvid import pipeline as PL
from longvid.data import generate, truncate_clips

def frames8_config(seed, train_samples):
    doc = merge_config_dict({
        "data": {"clips": 1, "frames_per_clip": 8, "train_samples": train_samples},
        "model": {"video": {"stages": [
            {"layers": 1, "dim": 32, "heads": 4, "temporal_window": 2, "merge": 2, "spatial_window": "full"},
            {"layers": 1, "dim": 32, "heads": 4, "temporal_window": 4, "merge": 2, "spatial_window": "full"},
            {"layers": 1, "dim": 32, "heads": 4, "temporal_window": 8, "merge": 1, "spatial_window": "full"},
        ]}},
        "losses": {"mtc_weight": 0.0, "anchor_count": 1, "candidate_count": 1},
    })
    doc["seed"] = seed
    return build_config(doc)

def run_variant(train_samples, steps, seeds):
    res = {"mtc32": [], "glob32": [], "glob8": []}
    for seed in seeds:
        t0 = time.time()
        cfg = replace(default_config(), seed=seed)
        cfg = replace(cfg, data=replace(cfg.data, train_samples=train_samples))
        train, ev = generate(cfg.data, seed)
        m, _, _ = PL.train_stage1(cfg, train, steps=steps)
        res["mtc32"].append(PL.eval_retrieval(m, ev).r_at_1)
        cfg_g = replace(cfg, losses=replace(cfg.losses, mtc_weight=0.0))
        m, _, _ = PL.train_stage1(cfg_g, train, steps=steps)
        res["glob32"].append(PL.eval_retrieval(m, ev).r_at_1)
        # 8-frame model: first-clip views of the SAME items, train and eval
        cfg8 = frames8_config(seed, train_samples)
        train8 = [truncate_clips(s, 1) for s in train]
        ev8 = [truncate_clips(s, 1) for s in ev]
        m, _, _ = PL.train_stage1(cfg8, train8, steps=steps)
        res["glob8"].append(PL.eval_retrieval(m, ev8).r_at_1)
        print(f"  seed {seed}: mtc32={res['mtc32'][-1]:.2f} glob32={res['glob32'][-1]:.2f} glob8={res['glob8'][-1]:.2f} ({time.time()-t0:.0f}s)", flush=True)
    print(f"  -> mtc32 {np.mean(res['mtc32']):.3f}  glob32 {np.mean(res['glob32']):.3f}  glob8 {np.mean(res['glob8']):.3f}"
          f"  gap_mtc {np.mean(res['mtc32'])-np.mean(res['glob32']):+.3f}  gap_frames {np.mean(res['glob32'])-np.mean(res['glob8']):+.3f}", flush=True)

for (n, steps) in [(128, 1000), (256, 1500)]:
    print(f"variant train={n} steps={steps}", flush=True)
    run_variant(n, steps, seeds=(0, 1))
