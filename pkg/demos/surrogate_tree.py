"""
A decision tree that imitates a policy
=======================================

We record a scripted pong player from thirty noop starts, turn every frame
into a symbolic state, and ask how well one CART tree predicts the player's
actions on trajectories it never saw.
"""

from spritesurrogate.envharness import MiniPong, make_policy, sample_suite
from spritesurrogate.features import assemble_dataset, build_schema
from spritesurrogate.trees import export_tree, fit_tree, holdout_evaluate, kfold_evaluate

env = MiniPong()
policy = make_policy("scripted-tracker", env.game_id)
trajs = sample_suite(env, policy, 0, 29, seed=0)
print("trajectory lengths:", [len(t) for t in trajs])

###############################################################################
# One slot per sprite instance, five numbers per slot: present, x, y and the
# change in x and y since the previous frame.

schema = build_schema([d for t in trajs for d in t.decompositions], False, env.n_actions, env.role)
data = assemble_dataset(trajs, schema)
print(f"{len(data)} rows x {schema.n_features} features")

###############################################################################
# Five shuffled folds over noop starts 0..24, then the honest test: train on
# those and predict starts 25..29.

kf = kfold_evaluate(data.where_traj(lambda t: t < 25), 5)
held = holdout_evaluate(data, 25)
print(f"5-fold   accuracy {100 * kf['accuracy']:.2f}% +- {100 * kf['accuracy_stderr']:.2f}, "
      f"cross entropy {kf['cross_entropy']:.3f}")
print(f"held-out accuracy {100 * held['accuracy']:.2f}% +- {100 * held['accuracy_stderr']:.2f}, "
      f"cross entropy {held['cross_entropy']:.3f}")

###############################################################################
# The top of the tree reads like the policy's own rule: where is the ball
# relative to the paddle?

tree = fit_tree(data.where_traj(lambda t: t < 25))
print(f"tree: {tree.n_nodes} nodes, depth {tree.max_depth}")
print(export_tree(tree, 2, schema.readable_columns, env.action_names))
