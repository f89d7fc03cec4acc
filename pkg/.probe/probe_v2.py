import time, numpy as np
from dataclasses import replace
from longvid.config import default_config, build_config, merge_config_dict
from longvid import pipeline as PL
from longvid.data import generate

STEPS = 1000

def frames8_config(seed):
    doc = merge_config_dict({
        "data": {"clips": 1, "frames_per_clip": 8},
        "model": {"video": {"stages": [
            {"layers": 1, "dim": 32, "heads": 4, "temporal_window": 2, "merge": 2, "spatial_window": "full"},
            {"layers": 1, "dim": 32, "heads": 4, "temporal_window": 4, "merge": 2, "spatial_window": "full"},
            {"layers": 1, "dim": 32, "heads": 4, "temporal_window": 8, "merge": 1, "spatial_window": "full"},
        ]}},
        "losses": {"mtc_weight": 0.0, "anchor_count": 1, "candidate_count": 1},
    })
    doc["seed"] = seed
    return build_config(doc)

t00 = time.time()
res = {"mtc32": [], "glob32": [], "glob8": []}
for seed in range(5):
    t0 = time.time()
    cfg = replace(default_config(), seed=seed)
    train, ev = generate(cfg.data, seed)
    m, _, _ = PL.train_stage1(cfg, train, steps=STEPS)
    res["mtc32"].append(PL.eval_retrieval(m, ev).r_at_1)
    cfg_g = replace(cfg, losses=replace(cfg.losses, mtc_weight=0.0))
    m, _, _ = PL.train_stage1(cfg_g, train, steps=STEPS)
    res["glob32"].append(PL.eval_retrieval(m, ev).r_at_1)
    cfg8 = frames8_config(seed)
    train8, ev8 = generate(cfg8.data, seed)
    m, _, _ = PL.train_stage1(cfg8, train8, steps=STEPS)
    res["glob8"].append(PL.eval_retrieval(m, ev8).r_at_1)
    print(f"seed {seed}: mtc32={res['mtc32'][-1]:.2f} glob32={res['glob32'][-1]:.2f} glob8={res['glob8'][-1]:.2f} ({time.time()-t0:.0f}s)", flush=True)
for k, v in res.items():
    print(k, [round(x,2) for x in v], "mean", round(float(np.mean(v)),3))
print("gap mtc-glob:", round(float(np.mean(res['mtc32'])-np.mean(res['glob32'])),3))
print("gap 32-8:", round(float(np.mean(res['glob32'])-np.mean(res['glob8'])),3))
print("total", round(time.time()-t00), "s")
