from collections import Counter
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spritesurrogate.features import (
    LabeledDataset,
    SchemaError,
    assemble_dataset,
    build_schema,
    load_dataset,
    save_dataset,
    vectorize,
)
from spritesurrogate.pixelgrid import Frame
from spritesurrogate.sprites import Sprite, SpriteDecomposition, identify_sprites

BG, RED, BLUE = 0x000000, 0xC84848, 0x4248C8


def dec(*sprites):
    return SpriteDecomposition(tuple(sprites), BG, 80, 105)


def dot(x, y, color=RED):
    return Sprite(color, ((x, y),))


def bar(x, y, color=BLUE):
    return Sprite(color, ((x, y), (x + 1, y)))


def slot_values(x, schema, slot):
    return x[schema.slot_columns(slot)].tolist()


def test_max_count_rule():
    schema = build_schema([dec(dot(1, 1)), dec(dot(1, 1), dot(5, 1), dot(9, 1)), dec()], False, 3)
    assert [s.index for s in schema.slots] == [0, 1, 2]
    assert schema.n_features == 15


def test_two_signatures_slot_count():
    schema = build_schema([dec(dot(1, 1), bar(10, 10), bar(20, 10))], True, 3)
    assert len(schema.slots) == 3
    assert schema.n_features == 16
    assert schema.columns[-1] == "last_action"
    # ordered by signature hash, then instance
    keys = [(s.signature.hash, s.index) for s in schema.slots]
    assert keys == sorted(keys)


def test_empty_corpus():
    with pytest.raises(SchemaError):
        build_schema([], False, 3)
    assert build_schema([dec(), dec()], False, 3).slots == ()


def test_velocity_difference_rule():
    schema = build_schema([dec(dot(5, 10))], False, 3)
    x = vectorize(dec(dot(7, 10)), dec(dot(5, 10)), schema)
    assert slot_values(x, schema, 0) == [1, 7, 10, 2, 0]
    first = vectorize(dec(dot(7, 10)), None, schema)
    assert slot_values(first, schema, 0) == [1, 7, 10, 0, 0]


def test_absent_slot_is_all_zero():
    schema = build_schema([dec(dot(5, 10), bar(1, 1))], False, 3)
    x = vectorize(dec(bar(3, 3)), dec(dot(5, 10), bar(1, 1)), schema)
    absent = [i for i, s in enumerate(schema.slots) if s.signature.color == RED][0]
    assert slot_values(x, schema, absent) == [0, 0, 0, 0, 0]


def test_instances_fill_slots_in_anchor_order():
    aliens = [dot(40, 7), dot(20, 7), dot(60, 7)]
    schema = build_schema([dec(*aliens)], False, 3)
    x = vectorize(dec(*aliens), None, schema)
    assert [x[5 * i + 1] for i in range(3)] == [20, 40, 60]


def test_permuting_sprites_does_not_change_vector():
    sprites = [dot(40, 7), bar(3, 3), dot(20, 7), dot(20, 2)]
    schema = build_schema([dec(*sprites)], False, 3)
    a = vectorize(dec(*sprites), dec(*sprites[::-1]), schema)
    b = vectorize(dec(*sprites[::-1]), dec(*sprites), schema)
    assert np.array_equal(a, b)


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(0, 70), st.integers(0, 100)), min_size=1, max_size=4, unique=True),
       st.lists(st.tuples(st.integers(0, 70), st.integers(0, 100)), min_size=1, max_size=4, unique=True))
def test_velocity_antisymmetry(now, before):
    d_now = dec(*(dot(x, y) for x, y in now))
    d_before = dec(*(dot(x, y) for x, y in before))
    schema = build_schema([d_now, d_before], False, 3)
    fwd = vectorize(d_now, d_before, schema)
    back = vectorize(d_before, d_now, schema)
    for i in range(len(schema.slots)):
        if fwd[5 * i] and back[5 * i]:
            assert fwd[5 * i + 3] == -back[5 * i + 3]
            assert fwd[5 * i + 4] == -back[5 * i + 4]


def test_unknown_signatures_dropped_and_counted():
    schema = build_schema([dec(dot(1, 1))], False, 3)
    dropped = Counter()
    x = vectorize(dec(dot(1, 1), dot(4, 4), bar(9, 9)), None, schema, dropped=dropped)
    assert x[0] == 1 and x[1] == 1
    assert sum(dropped.values()) == 2


def test_missing_last_action():
    schema = build_schema([dec(dot(1, 1))], True, 3)
    with pytest.raises(SchemaError):
        vectorize(dec(dot(1, 1)), None, schema)
    assert vectorize(dec(dot(1, 1)), None, schema, last_action=2)[-1] == 2


@dataclass
class FakeTraj:
    k: int
    frames: list
    actions: list


def frame_with(x, y):
    colors = np.zeros((10, 10), dtype=np.int64)
    colors[y, x] = RED
    return Frame.from_colors(colors)


def make_trajs():
    t0 = FakeTraj(0, [frame_with(i % 10, 2) for i in range(10)], [i % 3 for i in range(10)])
    t1 = FakeTraj(7, [frame_with(3, i) for i in range(5)], [1] * 5)
    return [t0, t1]


def test_assemble_dataset_rows_and_boundaries():
    trajs = make_trajs()
    decs = [identify_sprites(f) for t in trajs for f in t.frames]
    schema = build_schema(decs, True, 3)
    data = assemble_dataset(trajs, schema)
    assert len(data) == 15
    assert sorted(set(data.traj.tolist())) == [0, 7]
    first = [np.flatnonzero(data.traj == k)[0] for k in (0, 7)]
    for row in first:
        assert data.X[row, 3] == 0 and data.X[row, 4] == 0
        assert data.X[row, -1] == 0  # noop before the first step
    # velocity never crosses the trajectory boundary; last action lags by one
    assert data.X[10, 4] == 0 and data.X[11, 4] == 1
    assert data.X[1:10, -1].tolist() == data.labels[0:9].tolist()
    assert data.t.tolist() == list(range(10)) + list(range(5))


def test_misaligned_trajectory():
    t = FakeTraj(3, [frame_with(1, 1)] * 3, [0, 0])
    schema = build_schema([identify_sprites(frame_with(1, 1))], False, 3)
    with pytest.raises(SchemaError, match="k=3"):
        assemble_dataset([t], schema)


def test_dataset_validation():
    schema = build_schema([dec(dot(1, 1))], False, 3)
    with pytest.raises(SchemaError):
        LabeledDataset(schema, np.zeros((2, 4)), np.zeros(2, int), np.zeros(2, int), np.zeros(2, int))
    with pytest.raises(SchemaError):
        LabeledDataset(schema, np.zeros((1, 5)), np.array([3]), np.zeros(1, int), np.zeros(1, int))


def test_save_load_roundtrip(tmp_path):
    trajs = make_trajs()
    schema = build_schema([identify_sprites(f) for t in trajs for f in t.frames], True, 3, lambda s: "ball")
    data = assemble_dataset(trajs, schema)
    path = tmp_path / "d.csv"
    save_dataset(data, path)
    back = load_dataset(path)
    assert back.schema == schema and back.schema.hash == schema.hash
    assert back.schema.roles == schema.roles
    for name in ("X", "labels", "traj", "t"):
        assert np.array_equal(getattr(back, name), getattr(data, name))
    header = path.read_text().splitlines()[0].split(",")
    assert header[-4:] == ["last_action", "label", "traj", "t"]
    assert header[0] == f"{schema.slots[0].signature.hash}_0_present"


def test_load_rejects_header_mismatch(tmp_path):
    trajs = make_trajs()
    schema = build_schema([identify_sprites(f) for t in trajs for f in t.frames], False, 3)
    path = tmp_path / "d.csv"
    save_dataset(assemble_dataset(trajs, schema), path)
    text = path.read_text().splitlines()
    text[0] = text[0].replace("present", "here", 1)
    path.write_text("\n".join(text) + "\n")
    with pytest.raises(SchemaError):
        load_dataset(path)


def test_readable_columns():
    schema = build_schema([dec(dot(1, 1), bar(5, 5), Sprite(BLUE, ((9, 9), (9, 10))))], True, 3,
                          lambda s: "ball" if s.color == RED else "paddle")
    names = schema.readable_columns
    assert "Ball X position" in names
    assert "Paddle 2x1 Y velocity" in names and "Paddle 1x2 present" in names
    assert names[-1] == "Last action"
