"""
Collapsing frequency bands, then fusing depth
=============================================

Each CED layer keeps four frequency bands. A per-layer softmax gate pools
them, then the final layer attends to the middle layer and the result
attends to the shallow layer.
"""

import numpy as np

from evafuse.aggregator import AggregatorParams, GateParams, aggregate, frequency_gated_pool, gate_weights
from evafuse.features import PlantedEvent, random_signature, synth_ced_features

rng = np.random.default_rng(0)
D = 16

# %% A 3.2 s clip with one event confined to the 4-6 kHz band
sig = random_signature(rng, D)
event = PlantedEvent(band_index=2, center_time=160.0, width=16.0, amplitude=8.0, signature=sig)
layers, timeline = synth_ced_features(seed=1, duration_s=3.2, D=D, events=[event])
print({lid: m.data.shape for lid, m in layers.items()})

# %% A gate aligned with the event signature leans on band 2 where the event is
gate = GateParams(0.5 * sig)
w = gate_weights(layers[12].data, gate)
t_event = int(np.argmin(np.abs(timeline.centers - event.center_time)))
print("band weights at the event:", np.round(w[t_event], 3))
print("band weights far from it: ", np.round(w[0], 3))

# %% A zero gate is plain band averaging
pooled = frequency_gated_pool(layers[12], GateParams.zeros(D)).data
print("zero gate == band mean:", np.allclose(pooled, layers[12].data.mean(axis=1)))

# %% Full aggregation keeps the final layer's length and timeline
params = AggregatorParams.init(rng, D, num_heads=4)
h_agg = aggregate(layers, params)
cos = h_agg.data @ sig / np.linalg.norm(h_agg.data, axis=1)
print("H_agg", h_agg.data.shape, "peak cosine with the event at step", int(cos.argmax()), "of", h_agg.T)
