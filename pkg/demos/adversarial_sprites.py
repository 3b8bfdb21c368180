"""
Swapping sprites to flip the policy
====================================

The surrogate points at the sprites it thinks matter most.  We overwrite them
with values borrowed from other recorded states, keep the swap that the
surrogate likes least, and then ask the real (scripted) policy whether it
changes its mind.  The policy is never consulted while searching.
"""

from spritesurrogate.adversarial import generate_adversarial, measure_action_change
from spritesurrogate.envharness import MiniPong, make_policy, sample_suite
from spritesurrogate.features import assemble_dataset, build_schema
from spritesurrogate.trees import fit_ensemble

env = MiniPong()
policy = make_policy("scripted-tracker", env.game_id)
trajs = sample_suite(env, policy, 0, 24, seed=0, max_steps=400)
schema = build_schema([d for t in trajs for d in t.decompositions], False, env.n_actions, env.role)
data = assemble_dataset(trajs, schema)

# a smaller forest than the full study, to keep the demo quick
ensemble = fit_ensemble(data, n_trees=25, seed=0)

###############################################################################
# One origin state in detail.

origin = data.X[(data.traj == 24)][40]
cand = generate_adversarial(origin, ensemble, data, seed=0)
print(f"swapped slots {cand.selected_slots} from donor {cand.donor}, "
      f"{cand.n_candidates} candidates")
print(f"surrogate p({env.action_names[cand.predicted_action]}) "
      f"{cand.origin_prob:.3f} -> {cand.original_action_prob:.3f}")
print("policy before:", env.action_names[policy.act_symbolic(origin, schema)],
      " after:", env.action_names[policy.act_symbolic(cand.permuted_state, schema)])

###############################################################################
# The surrogate can be fooled where the policy is not: a swap that drives the
# surrogate's confidence to zero may still leave the ball on the same side of
# the paddle.  How often it does flip the policy is a question for many states,
# here a stretch of the k=24 trajectory.

report = measure_action_change(policy, ensemble, data, k=24, pairs=100, seed=0)
print(f"Agent action changed: {100 * report.change_rate:.1f}% "
      f"({report.changed}/{report.pairs_evaluated})")
