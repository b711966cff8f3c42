"""
The comparator loss on a handful of scores
==========================================

A scoring model maps one recording to one number.  The comparator loss
never looks at that number on its own: it only asks whether, for two
recordings with different ordinal labels, the more severe one scored at
least ``epsilon`` higher.
"""

import numpy as np

from comparator import comparator_batch_loss, comparator_pair_loss, multi_ordering_loss
from comparator.ordering import OrderingSystem, active_pairs, normalize_channel

# %%
# One pair at a time
# ------------------
# Sample ``a`` is healthy (order 0) and ``b`` is diagnosed (order 1), but
# ``a`` scored higher.  The hinge is active and pushes the scores apart.

r = comparator_pair_loss(0.5, 0.2, order_a=0, order_b=1, epsilon=1.0)
print(f"loss {r.loss:.2f}, d/da {r.grad_a:+.0f}, d/db {r.grad_b:+.0f}")

# Once ``b`` leads by the full margin the pair is satisfied.
print("satisfied pair:", comparator_pair_loss(0.0, 1.5, 0, 1).loss)

# %%
# A whole batch
# -------------
# The batch loss sums the hinge over every pair with distinct labels.  Three
# equal scores with orders 0, 1, 2 give three violated pairs.

batch = comparator_batch_loss([0.0, 0.0, 0.0], [0, 1, 2])
print("batch loss", batch.loss, "gradient", batch.grad, "pairs", batch.n_pairs)

# %%
# Subscores run the other way
# ---------------------------
# A speech item of 4 means normal and 0 means worst, so the channel is
# declared ``lower_is_more_severe`` and negated before any comparison.

speech = OrderingSystem("speech", "integer_scale", "lower_is_more_severe")
diagnosis = OrderingSystem("diagnosis", "diagnosis")
raw_speech = [None, None, 4, 2, 0]
raw_dx = [0, 0, 1, 1, 1]
channels = [normalize_channel(raw_dx, diagnosis), normalize_channel(raw_speech, speech)]
print("normalised speech ordinals:", channels[1].as_optional())
n, pairs = active_pairs(channels[1])
print(f"speech pairs: {n} -> {list(pairs)}")

# %%
# Several orderings at once
# -------------------------
# Channels are averaged.  Controls carry no speech label, so they only
# take part through the diagnosis channel.

scores = np.array([0.1, -0.2, 0.3, 0.9, 1.4])
combined = multi_ordering_loss(scores, channels)
print(f"combined loss {combined.loss:.3f} over channels {combined.channels}")
print("gradient per sample:", np.round(combined.grad, 3))
