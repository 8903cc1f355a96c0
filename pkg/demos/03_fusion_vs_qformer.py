"""
Adding evidence without shortening the sequence
===============================================

Inject-and-add writes the CED contribution onto the token stream at audio
positions and leaves the length alone. A window-level Q-Former summarises
each window with a few learned queries and shrinks it.
"""

import numpy as np

from evafuse.diagnostics import format_table, sequence_length_report
from evafuse.fusion import QFormerParams
from evafuse.pipeline import PipelineConfig, generate_inputs, init_params, run_pipeline

# %% The full path on a 6 s clip
cfg = PipelineConfig(seed=3, duration_s=6.0)
layers, e_w, e_tok = generate_inputs(cfg)
agg, fus = init_params(cfg)
res = run_pipeline(layers, e_w, e_tok, agg, fus)
print(f"T_c={res.h_agg.T}  T_w={e_w.T}  fused={res.fused.T}")

# %% The gate alpha scales the CED term; alpha=0 and dropping the branch agree
zero = type(fus)(fus.proj_w, fus.proj_c, 0.0)
a = run_pipeline(layers, e_w, e_tok, agg, zero).fused.data
b = run_pipeline(layers, e_w, e_tok, agg, fus, mask_ced=True).fused.data
print("alpha=0 vs masked CED, max |diff|:", np.abs(a - b).max())
print("CED share of the fused energy at alpha=0.01:",
      round(float(np.sum((res.fused.data - a) ** 2) / np.sum(res.fused.data ** 2)), 6))

# %% Lengths side by side
qf = QFormerParams.init(np.random.default_rng(0), 16, window=8, num_queries=1)
rows = sequence_length_report([1, 8, 100, 750], qf)
print(format_table(rows, ["T", "fused_length", "qformer_length", "ratio"]))
