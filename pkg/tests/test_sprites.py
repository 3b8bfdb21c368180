import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from spritesurrogate.pixelgrid import Frame
from spritesurrogate.sprites import (
    InvariantError,
    Signature,
    Sprite,
    SpriteDecomposition,
    identify_sprites,
    infer_background,
    reconstruct,
)

A, B, C = 0x000000, 0xFFFFFF, 0x3366CC


def frame_of(rows):
    return Frame.from_colors(np.array(rows, dtype=np.int64))


def random_frame(rng, h, w, n_colors=4, bg_share=0.6):
    palette = rng.choice(0xFFFFFF, size=n_colors + 1, replace=False)
    colors = rng.choice(palette[1:], size=(h, w))
    colors[rng.random((h, w)) < bg_share] = palette[0]
    return Frame.from_colors(colors)


def test_background_majority_and_uniform():
    colors = np.full((10, 10), A)
    colors[0, :] = B
    assert infer_background(Frame.from_colors(colors)) == A
    assert infer_background(Frame.filled(3, 3, C)) == C


def test_background_tie_goes_to_smallest_color():
    f = frame_of([[C, B], [B, C]])
    counts = {c: int(np.sum(f.colors == c)) for c in (B, C)}
    assert counts[B] == counts[C]
    assert infer_background(f) == min(B, C)


def test_single_block():
    colors = np.full((4, 4), A)
    colors[1:3, 1:3] = B
    d = identify_sprites(Frame.from_colors(colors))
    assert d.background == A and len(d.sprites) == 1
    s = d.sprites[0]
    assert len(s) == 4 and s.anchor == (1, 1) and s.color == B


def test_diagonal_pixels_are_separate_sprites():
    colors = np.full((4, 4), A)
    colors[0, 0] = colors[1, 1] = B
    d = identify_sprites(Frame.from_colors(colors))
    assert [s.anchor for s in d.sprites] == [(0, 0), (1, 1)]


def test_uniform_frame_has_no_sprites():
    assert identify_sprites(Frame.filled(5, 3, C)).sprites == ()


def test_anchor_is_topmost_then_leftmost():
    # an L shape whose top row starts right of its leftmost column
    colors = np.full((5, 5), A)
    colors[1, 2:4] = B
    colors[1:4, 3] = B
    colors[3, 1:4] = B
    s = identify_sprites(Frame.from_colors(colors)).sprites[0]
    assert s.anchor == (2, 1)
    assert s.anchor in s.pixels


def test_sprites_sorted_by_x_then_y():
    colors = np.full((6, 8), A)
    colors[0, 6] = B
    colors[4, 1] = B
    colors[2, 1] = C
    d = identify_sprites(Frame.from_colors(colors))
    assert [s.anchor for s in d.sprites] == [(1, 2), (1, 4), (6, 0)]


def test_signature_translation_invariant():
    s1 = Sprite(B, ((3, 4), (4, 4), (4, 5)))
    s2 = Sprite(B, ((10, 0), (11, 0), (11, 1)))
    assert s1.signature == s2.signature and s1.signature.hash == s2.signature.hash
    assert s1.signature != Sprite(C, s1.pixels).signature
    assert (s1.signature.width, s1.signature.height, s1.signature.size) == (2, 2, 3)
    assert len(s1.signature.hash) == 10


def test_large_sprite_does_not_recurse():
    colors = np.full((200, 200), A)
    colors[1:, 1:] = B  # one sprite covering most of the frame, but not the plurality
    colors[100:, :] = A
    d = identify_sprites(Frame.from_colors(colors))
    assert len(d.sprites) == 1 and len(d.sprites[0]) == 99 * 199


def test_reconstruct_examples():
    empty = SpriteDecomposition((), C, 3, 3)
    assert reconstruct(empty) == Frame.filled(3, 3, C)
    colors = np.full((4, 4), A)
    colors[1:3, 1:3] = B
    f = Frame.from_colors(colors)
    assert reconstruct(identify_sprites(f)) == f


def test_reconstruct_rejects_overlap_and_out_of_bounds():
    s = Sprite(B, ((0, 0), (1, 0)))
    with pytest.raises(InvariantError):
        reconstruct(SpriteDecomposition((s, Sprite(C, ((1, 0),))), A, 3, 3))
    with pytest.raises(InvariantError):
        reconstruct(SpriteDecomposition((Sprite(B, ((3, 0),)),), A, 3, 3))
    with pytest.raises(InvariantError):
        Sprite(B, ())


def components_oracle(colors, background):
    """Independent connected-component count via scipy, one color at a time."""
    four = ndimage.generate_binary_structure(2, 1)
    found = set()
    for color in np.unique(colors):
        if color == background:
            continue
        labels, n = ndimage.label(colors == color, structure=four)
        for i in range(1, n + 1):
            ys, xs = np.nonzero(labels == i)
            found.add((int(color), frozenset(zip(xs.tolist(), ys.tolist()))))
    return found


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 24), st.integers(1, 24), st.integers(1, 5))
def test_partition_matches_scipy_labelling(seed, h, w, n_colors):
    rng = np.random.default_rng(seed)
    f = random_frame(rng, h, w, n_colors, bg_share=rng.uniform(0.0, 0.9))
    d = identify_sprites(f)
    got = {(s.color, frozenset(s.pixels)) for s in d.sprites}
    assert got == components_oracle(f.colors, d.background)
    # disjoint, and the union is the non-background set
    seen = set()
    for s in d.sprites:
        assert seen.isdisjoint(s.pixels)
        seen.update(s.pixels)
    ys, xs = np.nonzero(f.colors != d.background)
    assert seen == set(zip(xs.tolist(), ys.tolist()))
    assert reconstruct(d) == f


def test_decomposition_is_deterministic_and_text_record():
    f = random_frame(np.random.default_rng(3), 20, 20)
    d1, d2 = identify_sprites(f), identify_sprites(f)
    assert d1 == d2
    text = d1.to_text()
    assert text.splitlines()[0].startswith("# background=")
    assert len(text.splitlines()) == len(d1.sprites) + 1
