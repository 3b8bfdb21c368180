"""Fixed-schema symbolic features from sprite decompositions.

Each schema slot is one (signature, instance index) pair and contributes five
columns: presence flag, anchor x, anchor y, vx and vy.  Instances of a
signature fill its slots in ``(x, y)`` anchor order; velocities pair slot ``i``
at ``t - 1`` with slot ``i`` at ``t``.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

from .sprites import Signature, SpriteDecomposition, identify_sprites

__all__ = [
    "SchemaError",
    "Slot",
    "FeatureSchema",
    "LabeledDataset",
    "SLOT_FIELDS",
    "build_schema",
    "vectorize",
    "assemble_dataset",
    "decompose_frames",
    "save_dataset",
    "load_dataset",
]

log = logging.getLogger(__name__)

SLOT_FIELDS = ("present", "x", "y", "vx", "vy")
_FIELD_TEXT = {
    "present": "present",
    "x": "X position",
    "y": "Y position",
    "vx": "X velocity",
    "vy": "Y velocity",
}
META_COLUMNS = ("label", "traj", "t")


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class Slot:
    signature: Signature
    index: int

    @property
    def prefix(self) -> str:
        return f"{self.signature.hash}_{self.index}"


@dataclass(frozen=True)
class FeatureSchema:
    slots: tuple[Slot, ...]
    include_last_action: bool
    action_count: int
    # signature hash -> human readable entity name, e.g. "paddle"
    roles: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def n_features(self) -> int:
        return 5 * len(self.slots) + int(self.include_last_action)

    @cached_property
    def columns(self) -> tuple[str, ...]:
        cols = [f"{slot.prefix}_{name}" for slot in self.slots for name in SLOT_FIELDS]
        if self.include_last_action:
            cols.append("last_action")
        return tuple(cols)

    @cached_property
    def readable_columns(self) -> tuple[str, ...]:
        labels = self._entity_labels()
        names = []
        for slot in self.slots:
            entity = labels[slot.signature]
            if self._instances(slot.signature) > 1:
                entity = f"{entity} {slot.index}"
            names.extend(f"{entity} {_FIELD_TEXT[name]}" for name in SLOT_FIELDS)
        if self.include_last_action:
            names.append("Last action")
        return tuple(names)

    def _entity_labels(self) -> dict:
        """Role name per signature, qualified by size (then hash) when shared."""
        sigs = list(dict.fromkeys(s.signature for s in self.slots))
        role = {sig: self.roles.get(sig.hash, f"sprite {sig.hash}") for sig in sigs}
        labels = {}
        for sig in sigs:
            text = f"{role[sig][:1].upper()}{role[sig][1:]}"
            same_role = [o for o in sigs if role[o] == role[sig]]
            if len(same_role) > 1:
                # e.g. a paddle whose shape changes while it moves
                text = f"{text} {sig.width}x{sig.height}"
                if sum((o.width, o.height) == (sig.width, sig.height) for o in same_role) > 1:
                    text = f"{text} {sig.hash[:4]}"
            labels[sig] = text
        return labels

    def _instances(self, signature: Signature) -> int:
        return sum(1 for s in self.slots if s.signature == signature)

    @cached_property
    def slot_lookup(self) -> dict:
        """signature -> list of slot indices in instance order."""
        lookup = defaultdict(list)
        for i, slot in enumerate(self.slots):
            lookup[slot.signature].append(i)
        return dict(lookup)

    def slot_role(self, i: int) -> str | None:
        return self.roles.get(self.slots[i].signature.hash)

    def slot_columns(self, i: int) -> slice:
        return slice(5 * i, 5 * i + 5)

    def to_json(self) -> dict:
        return {
            "include_last_action": self.include_last_action,
            "action_count": self.action_count,
            "slots": [
                {
                    "hash": s.signature.hash,
                    "index": s.index,
                    "color": s.signature.color,
                    "offsets": [list(o) for o in s.signature.offsets],
                    "role": self.roles.get(s.signature.hash),
                }
                for s in self.slots
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FeatureSchema":
        slots = []
        roles = {}
        for rec in obj["slots"]:
            sig = Signature(int(rec["color"]), tuple(tuple(o) for o in rec["offsets"]))
            if sig.hash != rec["hash"]:
                raise SchemaError(f"signature hash mismatch for slot {rec['hash']}")
            slots.append(Slot(sig, int(rec["index"])))
            if rec.get("role") is not None:
                roles[sig.hash] = rec["role"]
        return cls(tuple(slots), bool(obj["include_last_action"]), int(obj["action_count"]), roles)

    @cached_property
    def hash(self) -> str:
        text = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha1(text.encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Rows of symbolic states with action labels.

    ``traj`` holds the trajectory id, which is the trajectory's noop-start
    count; ``t`` is the timestep within it.
    """

    schema: FeatureSchema
    X: np.ndarray
    labels: np.ndarray
    traj: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        n = len(self.labels)
        if self.X.shape != (n, self.schema.n_features):
            raise SchemaError(
                f"feature matrix shape {self.X.shape} does not match {n} rows x "
                f"{self.schema.n_features} schema columns"
            )
        if len(self.traj) != n or len(self.t) != n:
            raise SchemaError("row metadata length mismatch")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.schema.action_count):
            raise SchemaError("action label outside [0, action_count)")

    def __len__(self):
        return len(self.labels)

    def subset(self, rows) -> "LabeledDataset":
        rows = np.asarray(rows)
        return LabeledDataset(self.schema, self.X[rows], self.labels[rows], self.traj[rows], self.t[rows])

    def where_traj(self, predicate: Callable[[np.ndarray], np.ndarray]) -> "LabeledDataset":
        return self.subset(np.flatnonzero(predicate(self.traj)))


def build_schema(
    decompositions: Sequence[SpriteDecomposition],
    include_last_action: bool,
    action_count: int,
    roles: Callable[[Signature], str | None] | None = None,
) -> FeatureSchema:
    """One slot per signature instance, up to the largest per-frame count seen."""
    if not decompositions:
        raise SchemaError("cannot build a schema from an empty corpus")
    max_count: dict[Signature, int] = {}
    for d in decompositions:
        for sig, count in Counter(s.signature for s in d.sprites).items():
            if count > max_count.get(sig, 0):
                max_count[sig] = count
    slots = [Slot(sig, i) for sig, n in max_count.items() for i in range(n)]
    slots.sort(key=lambda s: (s.signature.hash, s.index))
    role_map = {}
    if roles is not None:
        for sig in max_count:
            role = roles(sig)
            if role is not None:
                role_map[sig.hash] = role
    return FeatureSchema(tuple(slots), include_last_action, action_count, role_map)


def _slot_anchors(d: SpriteDecomposition, schema: FeatureSchema, dropped: Counter | None) -> dict:
    by_sig = defaultdict(list)
    for s in d.sprites:
        by_sig[s.signature].append(s.anchor)
    anchors = {}
    lookup = schema.slot_lookup
    for sig, found in by_sig.items():
        slots = lookup.get(sig)
        if slots is None:
            if dropped is not None:
                dropped[sig.hash] += len(found)
            log.debug("dropping %d sprite(s) with unknown signature %s", len(found), sig.hash)
            continue
        found.sort()  # (x, y) order
        if len(found) > len(slots):
            if dropped is not None:
                dropped[sig.hash] += len(found) - len(slots)
            log.debug("dropping %d surplus instance(s) of %s", len(found) - len(slots), sig.hash)
        for slot_idx, anchor in zip(slots, found):
            anchors[slot_idx] = anchor
    return anchors


def vectorize(
    d: SpriteDecomposition,
    prev: SpriteDecomposition | None,
    schema: FeatureSchema,
    last_action: int | None = None,
    dropped: Counter | None = None,
) -> np.ndarray:
    if schema.include_last_action and last_action is None:
        raise SchemaError("schema expects a last action but none was given")
    out = np.zeros(schema.n_features, dtype=np.float64)
    now = _slot_anchors(d, schema, dropped)
    before = _slot_anchors(prev, schema, None) if prev is not None else {}
    for i, (x, y) in now.items():
        base = 5 * i
        out[base] = 1.0
        out[base + 1] = x
        out[base + 2] = y
        if i in before:
            px, py = before[i]
            out[base + 3] = x - px
            out[base + 4] = y - py
    if schema.include_last_action:
        out[-1] = last_action
    return out


def decompose_frames(frames: Iterable) -> list[SpriteDecomposition]:
    return [identify_sprites(f) for f in frames]


def assemble_dataset(
    trajectories: Sequence,
    schema: FeatureSchema,
    decompositions: Sequence[Sequence[SpriteDecomposition]] | None = None,
    dropped: Counter | None = None,
) -> LabeledDataset:
    """Stack every timestep of every trajectory into one labeled dataset.

    Each trajectory needs ``frames``, ``actions`` (the executed actions, used as
    labels) and ``k``.  Velocities and the last action never cross trajectory
    boundaries; the first row of a trajectory uses noop (0) as last action.
    """
    rows, labels, trajs, steps = [], [], [], []
    for n, traj in enumerate(trajectories):
        if len(traj.frames) != len(traj.actions):
            raise SchemaError(
                f"trajectory k={traj.k}: {len(traj.frames)} frames but {len(traj.actions)} actions"
            )
        if decompositions is not None:
            decs = decompositions[n]
        elif len(getattr(traj, "decompositions", ())) == len(traj.frames):
            decs = traj.decompositions
        else:
            decs = decompose_frames(traj.frames)
        prev = None
        last = 0
        for t, (d, action) in enumerate(zip(decs, traj.actions)):
            rows.append(vectorize(d, prev, schema, last if schema.include_last_action else None, dropped))
            labels.append(action)
            trajs.append(traj.k)
            steps.append(t)
            prev, last = d, action
    X = np.array(rows, dtype=np.float64).reshape(len(rows), schema.n_features)
    return LabeledDataset(
        schema,
        X,
        np.array(labels, dtype=np.int64),
        np.array(trajs, dtype=np.int64),
        np.array(steps, dtype=np.int64),
    )


def _fmt(v: float) -> str:
    return format(float(v) + 0.0, ".17g")


def schema_path(path: str | os.PathLike) -> str:
    return os.fspath(path) + ".schema.json"


def save_dataset(data: LabeledDataset, path: str | os.PathLike) -> None:
    """Write ``path`` (delimited table) plus ``path.schema.json``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(data.schema.columns) + list(META_COLUMNS))
    for row, label, traj, t in zip(data.X, data.labels, data.traj, data.t):
        writer.writerow([_fmt(v) for v in row] + [int(label), int(traj), int(t)])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())
    with open(schema_path(path), "w") as fh:
        json.dump(data.schema.to_json(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_dataset(path: str | os.PathLike) -> LabeledDataset:
    with open(schema_path(path)) as fh:
        schema = FeatureSchema.from_json(json.load(fh))
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expected = list(schema.columns) + list(META_COLUMNS)
        if header != expected:
            raise SchemaError(f"{path}: header does not match schema {schema.hash}")
        body = [r for r in reader if r]
    n_feat = schema.n_features
    table = np.array(body, dtype=np.float64).reshape(len(body), n_feat + 3)
    return LabeledDataset(
        schema,
        np.ascontiguousarray(table[:, :n_feat]),
        table[:, n_feat].astype(np.int64),
        table[:, n_feat + 1].astype(np.int64),
        table[:, n_feat + 2].astype(np.int64),
    )
