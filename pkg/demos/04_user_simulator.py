"""Fit the offline user simulator and roll one interactive episode.

The simulator is a biased matrix-factorization model of held-out ratings.
Each step returns the normalized instinctive feedback plus a sequential
bonus/penalty from the running satisfaction streak, so the same item can
be worth more after a string of good recommendations.
"""

import numpy as np

from kgrec.simulator import EpisodeState, fit_mf, step
from kgrec.synth import SynthSpec, generate

spec = SynthSpec(clusters=3, items_per_cluster=5, users=30, noise=0.3, seed=5)
data = generate(spec)
n_items = spec.clusters * spec.items_per_cluster

model = fit_mf(data.users, data.items, data.ratings, n_users=30, n_items=n_items,
               dim=8, epochs=60, learning_rate=0.02, seed=0, eta=0.1, horizon=10)
print(f"simulator fit: train rmse {model.train_rmse:.3f} on {len(data.ratings)} ratings")
print(f"rating scale [{model.rating_min}, {model.rating_max}], "
      f"hit above {model.hit_threshold}")

user = 4
home = data.cluster_of_user[user]
# serve the user's home cluster first, then drift off-cluster
plan = [i for i in range(n_items) if data.cluster_of_item[i] == home]
plan += [i for i in range(n_items) if data.cluster_of_item[i] != home]

state = EpisodeState(user=user)
print(f"\nepisode for user {user} (home cluster {home}):")
print(f"{'step':>4} {'item':>4} {'cluster':>7} {'raw':>6} {'reward':>7}  streaks")
for item in plan[: model.horizon]:
    reward, state = step(state, model, item)
    rec = state.records[-1]
    print(f"{state.t:>4} {item:>4} {data.cluster_of_item[item]:>7} "
          f"{rec.raw:>6.2f} {reward:>7.3f}  +{state.pos_streak}/-{state.neg_streak}")

hits = sum(rec.hit for rec in state.records)
print(f"\ndone={state.done}, {hits}/{model.horizon} hits, clicked history {state.clicked}")
