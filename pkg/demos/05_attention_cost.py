"""The exact attention cost model vs the instrumented engine counter.

Analytic multiply-add counts must equal what the engine actually executes,
to the last integer; the hierarchical window schedule then undercuts any
fixed full-size window.
"""

import numpy as np

from longvid.config import default_config
from longvid.costmodel import attention_flops, fixed_window_schedule, render_table, schedule_cost
from longvid.encoders import VideoEncoder
from longvid.engine import constant, count_multiply_adds

cfg = default_config()
grid = (cfg.data.patch_rows, cfg.data.patch_cols)
schedule = cfg.model.video.schedule

report = schedule_cost(schedule, cfg.data.frames, grid, cfg.data.patch_dim, cfg.model.video.ffn_ratio)
print(render_table(report))

# Instrumented oracle: run the real trunk forward under the matmul counter.
rng = np.random.default_rng(0)
encoder = VideoEncoder(cfg.model, cfg.data, rng)
patches = constant(rng.normal(size=(1, cfg.data.frames, *grid, cfg.data.patch_dim)))
with count_multiply_adds() as counter:
    encoder.feature_maps(patches)
print(f"\ninstrumented multiply-adds: {counter.multiply_adds}")
print(f"analytic total:             {report.total}")
print(f"exact match: {counter.multiply_adds == report.total}")

# Score+sum cost is linear in the temporal window at fixed dims.
a2 = attention_flops(32, 15, 512, 8, 2)
a32 = attention_flops(32, 15, 512, 8, 32)
print(f"\nscore+sum at w=32 vs w=2 (T=32, S=15, d=512): {a32.score_sum // a2.score_sum}x")

# Fixed windows get strictly more expensive as they grow; the hierarchy
# stays below the full-window cost.
print("\nwindow   total multiply-adds")
for w in (4, 8, 16, 32):
    fixed = schedule_cost(fixed_window_schedule(schedule, w), cfg.data.frames, grid, cfg.data.patch_dim)
    print(f"fixed-{w:<3} {fixed.total:>12}")
print(f"2->32    {report.total:>12}  (hierarchical)")
