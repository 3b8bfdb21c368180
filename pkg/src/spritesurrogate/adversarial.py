"""Adversarial sprite permutations guided by a tree ensemble.

For an origin state the surrogate's Shapley values pick the most influential
present sprites.  Every tree's first three split levels cut the dataset into
up to eight regions; one donor state is drawn from each, and the chosen
sprites' features are copied from the donor into the origin.  The candidate
that most lowers the ensemble's probability of the origin's predicted action
wins.  Only the surrogate is consulted while searching; the target policy is
asked afterwards, to see whether the permutation changed its action.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .shap import ensemble_shap, rank_sprites
from .trees import LEAF, TreeEnsemble, TreeModel, predict_proba

__all__ = [
    "AdversarialError",
    "AdversarialCandidate",
    "CandidatePool",
    "PermutationReport",
    "three_ply_subsets",
    "donor_regions",
    "candidate_pool",
    "generate_adversarial",
    "measure_action_change",
    "TOP_FRACTION",
    "PLY",
]

TOP_FRACTION = 0.1
PLY = 3


class AdversarialError(ValueError):
    pass


def three_ply_subsets(tree: TreeModel, X, ply: int = PLY) -> list[np.ndarray]:
    """Row indices of ``X`` grouped by the node they reach after ``ply`` splits.

    Regions come back left to right and empty ones are dropped, so a full
    depth-3 tree gives at most eight.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    node = np.zeros(len(X), dtype=np.int64)
    # route bits, left = 0; rows parked at a shallow leaf keep appending 0s,
    # so sorting the codes orders regions left to right whatever the node ids
    code = np.zeros(len(X), dtype=np.int64)
    for _ in range(ply):
        code <<= 1
        inner = tree.feature[node] != LEAF
        rows = np.flatnonzero(inner)
        n = node[rows]
        go_left = X[rows, tree.feature[n]] <= tree.threshold[n]
        node[rows] = np.where(go_left, tree.left[n], tree.right[n])
        code[rows] |= (~go_left).astype(np.int64)
    return [np.flatnonzero(code == c) for c in np.unique(code)]


def donor_regions(ensemble: TreeEnsemble, X) -> list[list[np.ndarray]]:
    """``three_ply_subsets`` for every tree; independent of the origin state."""
    return [three_ply_subsets(tree, X) for tree in ensemble.trees]


@dataclass(frozen=True, eq=False)
class CandidatePool:
    donors: np.ndarray  # dataset row of each candidate's donor
    tree_index: np.ndarray
    region_index: np.ndarray
    states: np.ndarray  # permuted states, one row per candidate
    swapped_columns: np.ndarray

    def __len__(self):
        return len(self.donors)


@dataclass(frozen=True, eq=False)
class AdversarialCandidate:
    origin_state: np.ndarray
    permuted_state: np.ndarray
    donor: tuple[int, int]  # (trajectory id, timestep)
    original_action_prob: float  # ensemble probability of the origin's action, after permuting
    origin_prob: float
    predicted_action: int
    selected_slots: tuple[int, ...]
    n_candidates: int
    tree_index: int
    region_index: int


def _selected_columns(slots) -> np.ndarray:
    return np.concatenate([np.arange(5 * s, 5 * s + 5) for s in slots]).astype(np.int64)


def candidate_pool(origin, slots, data, regions, rng: np.random.Generator) -> CandidatePool:
    """One donor per non-empty region, in tree then region order."""
    origin = np.asarray(origin, dtype=np.float64)
    cols = _selected_columns(slots)
    donors, trees, region_ids = [], [], []
    for t, subsets in enumerate(regions):
        for r, rows in enumerate(subsets):
            if len(rows) == 0:
                continue
            donors.append(int(rows[rng.integers(len(rows))]))
            trees.append(t)
            region_ids.append(r)
    donors = np.array(donors, dtype=np.int64)
    states = np.repeat(origin[None, :], len(donors), axis=0)
    states[:, cols] = data.X[donors][:, cols]
    return CandidatePool(donors, np.array(trees), np.array(region_ids), states, cols)


def generate_adversarial(
    origin,
    ensemble: TreeEnsemble,
    data,
    schema=None,
    seed: int = 0,
    regions: list | None = None,
    top_fraction: float = TOP_FRACTION,
) -> AdversarialCandidate:
    """Best sprite-swap candidate for ``origin`` under the ensemble.

    ``regions`` may carry a precomputed ``donor_regions(ensemble, data.X)``.
    Ties between equally good candidates go to the lowest tree, then region.
    """
    schema = schema or data.schema
    if len(data) == 0:
        raise AdversarialError("cannot draw donors from an empty dataset")
    origin = np.asarray(origin, dtype=np.float64)
    attr = ensemble_shap(ensemble, origin)
    ranking = rank_sprites(attr, schema)
    if len(ranking) == 0:
        raise AdversarialError("origin state has no present sprite to permute")
    slots = ranking.top(top_fraction)
    if regions is None:
        regions = donor_regions(ensemble, data.X)
    pool = candidate_pool(origin, slots, data, regions, np.random.default_rng(seed))
    action = attr.predicted_class
    scores = predict_proba(ensemble, pool.states)[:, action]
    best = int(np.argmin(scores))
    row = int(pool.donors[best])
    return AdversarialCandidate(
        origin_state=origin,
        permuted_state=pool.states[best].copy(),
        donor=(int(data.traj[row]), int(data.t[row])),
        original_action_prob=float(scores[best]),
        origin_prob=float(attr.output[action]),
        predicted_action=action,
        selected_slots=tuple(slots),
        n_candidates=len(pool),
        tree_index=int(pool.tree_index[best]),
        region_index=int(pool.region_index[best]),
    )


@dataclass
class PermutationReport:
    pairs_evaluated: int
    changed: int
    seed: int = 0
    config: dict = field(default_factory=dict)
    details: list = field(default_factory=list, repr=False)

    @property
    def change_rate(self) -> float:
        return self.changed / self.pairs_evaluated if self.pairs_evaluated else 0.0

    def to_text(self) -> str:
        lines = [
            f"pairs_evaluated={self.pairs_evaluated}",
            f"changed={self.changed}",
            f"change_rate={self.change_rate!r}",
            f"seed={self.seed}",
        ]
        lines.extend(f"config.{key}={value}" for key, value in sorted(self.config.items()))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PermutationReport":
        values, config = {}, {}
        for line in text.splitlines():
            if not line.strip():
                continue
            key, _, value = line.partition("=")
            if key.startswith("config."):
                config[key[len("config."):]] = value
            else:
                values[key] = value
        report = cls(int(values["pairs_evaluated"]), int(values["changed"]), int(values["seed"]), config)
        if abs(report.change_rate - float(values["change_rate"])) > 1e-12:
            raise AdversarialError("change_rate does not match changed / pairs_evaluated")
        return report

    def details_table(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["t", "origin_action", "permuted_action", "changed", "donor_traj", "donor_t",
             "slots", "origin_prob", "permuted_prob", "candidates"]
        )
        for d in self.details:
            writer.writerow([
                d["t"], d["origin_action"], d["permuted_action"], int(d["changed"]),
                d["donor"][0], d["donor"][1], " ".join(map(str, d["slots"])),
                format(d["origin_prob"], ".17g"), format(d["permuted_prob"], ".17g"), d["candidates"],
            ])
        return buf.getvalue()


def measure_action_change(
    policy,
    ensemble: TreeEnsemble,
    data,
    k: int = 24,
    pairs: int = 200,
    seed: int = 0,
    top_fraction: float = TOP_FRACTION,
) -> PermutationReport:
    """Permute up to ``pairs`` states of trajectory ``k`` and count policy changes.

    The states are the first ``pairs`` timesteps of the trajectory; the policy
    judges origin and permuted states with identically seeded generators so a
    stochastic policy only differs where the state does.
    """
    rows = np.flatnonzero(data.traj == k)
    if len(rows) == 0:
        raise AdversarialError(f"dataset has no trajectory k={k}")
    rows = rows[np.argsort(data.t[rows], kind="stable")][:pairs]
    regions = donor_regions(ensemble, data.X)
    seeds = np.random.SeedSequence(seed).spawn(len(rows))
    report = PermutationReport(0, 0, seed, {"k": k, "pairs": pairs, "top_fraction": top_fraction})
    for row, ss in zip(rows, seeds):
        search_ss, policy_ss = ss.spawn(2)
        origin = data.X[row]
        if not np.any(origin[0 : 5 * len(data.schema.slots) : 5] > 0.5):
            continue  # nothing to permute
        search_seed = int(search_ss.generate_state(1)[0])
        cand = generate_adversarial(origin, ensemble, data, data.schema, search_seed, regions, top_fraction)
        before = policy.act_symbolic(origin, data.schema, np.random.default_rng(policy_ss))
        after = policy.act_symbolic(cand.permuted_state, data.schema, np.random.default_rng(policy_ss))
        report.pairs_evaluated += 1
        report.changed += int(before != after)
        report.details.append({
            "t": int(data.t[row]),
            "origin_action": int(before),
            "permuted_action": int(after),
            "changed": before != after,
            "donor": cand.donor,
            "slots": cand.selected_slots,
            "origin_prob": cand.origin_prob,
            "permuted_prob": cand.original_action_prob,
            "candidates": cand.n_candidates,
        })
    return report
