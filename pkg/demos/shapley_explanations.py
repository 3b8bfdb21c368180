"""
Which sprites drove this action?
================================

Exact Shapley values for a fitted tree, summed up per sprite.  The values for
each action add up to the tree's probability for that action, minus what it
predicts on average.
"""

import numpy as np

from spritesurrogate.envharness import MiniPong, make_policy, sample_suite
from spritesurrogate.features import assemble_dataset, build_schema
from spritesurrogate.shap import rank_sprites, tree_shap
from spritesurrogate.trees import fit_tree

env = MiniPong()
policy = make_policy("scripted-tracker", env.game_id)
trajs = sample_suite(env, policy, 0, 9, seed=1, max_steps=400)
schema = build_schema([d for t in trajs for d in t.decompositions], False, env.n_actions, env.role)
data = assemble_dataset(trajs, schema)
tree = fit_tree(data)

# pick a state where the player moves
row = int(np.flatnonzero(data.labels != 0)[5])
attr = tree_shap(tree, data.X[row])
action = attr.predicted_class
print(f"state t={data.t[row]} of k={data.traj[row]}: tree says {env.action_names[action]!r} "
      f"with p={attr.output[action]:.3f}, on average p={attr.base_value[action]:.3f}")

###############################################################################
# Local accuracy holds to rounding error.

print(f"base + sum(values) - output: {attr.local_accuracy_error():.1e}")

###############################################################################
# Rank the sprites present in the state by their strongest feature.

names = schema.readable_columns
ranking = rank_sprites(attr, schema)
for rank, slot, value in zip(ranking.ranks, ranking.slots, ranking.max_abs_shap):
    cols = schema.slot_columns(slot)
    best = cols.start + int(np.argmax(np.abs(attr.values[cols, action])))
    print(f"  {rank}. {names[best]:28s} |shap|={value:.3f}")
