"""
Putting CED features on the Whisper clock
=========================================

The CED path emits one vector every 160 ms, the Whisper path one every 80 ms.
Coverage-weighted interpolation resamples the slower stream onto the faster
timeline, trusting each window in proportion to how much real audio it saw.
"""

import numpy as np

from evafuse.alignment import coverage_weights, interp_plan, time_aware_interpolate, whisper_centers
from evafuse.features import TemporalSequence, TimelineSpec

# %% Timelines in mel frames (10 ms each)
# Four CED windows of 16 frames; the last one runs past the end of a
# 60-frame clip, so only part of it covers audio.
starts = np.arange(4) * 16
ends = starts + 15
cov = coverage_weights(starts, ends, t_sz=16, T_mel=60)
t_c = (starts + ends) / 2
t_w = whisper_centers(8)
print("CED centers     ", t_c)
print("coverage        ", cov)
print("Whisper centers ", t_w)

# %% One scalar feature per window makes the weights easy to read
h = TemporalSequence(np.array([[0.0], [1.0], [2.0], [3.0]]), TimelineSpec(t_c, cov))
aligned = time_aware_interpolate(h, t_w)
plan = interp_plan(t_c, cov, t_w)
for k in range(len(t_w)):
    print(f"t={t_w[k]:5.1f}  {plan.a[k]:.3f}*x[{plan.left[k]}] + {plan.b[k]:.3f}*x[{plan.right[k]}]"
          f"  = {aligned.data[k, 0]:.4f}")

# %% The partly padded last window pulls less weight than plain linear
# interpolation would give it, and targets past the end clamp to it.
plain = np.interp(t_w, t_c, h.data[:, 0])
print("linear          ", np.round(plain, 4))
print("coverage-aware  ", np.round(aligned.data[:, 0], 4))
