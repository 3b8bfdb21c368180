"""
From pixels to sprites
======================

A mini-pong observation is a 105x80 grid of colors.  Here we cut it into
sprites, look at what comes out, and check that the sprites put back
together give the very same frame.
"""

import numpy as np

from spritesurrogate.envharness import MiniPong
from spritesurrogate.sprites import identify_sprites, reconstruct

# Play a few noops so the ball has left the serve position.
env = MiniPong()
obs = env.reset(4)
for _ in range(6):
    obs, _, _ = env.step(0)
print(f"observation: {obs.width}x{obs.height} pixels")

###############################################################################
# The background is the most common color; everything else groups into
# same-colored, 4-connected blobs.

d = identify_sprites(obs)
print(f"background #{d.background:06x}, {len(d.sprites)} sprites")
for s in d.sprites:
    sig = s.signature
    print(f"  {env.role(sig) or '?':9s} anchor={s.anchor} size={sig.width}x{sig.height} "
          f"pixels={len(s)} signature={sig.hash}")

###############################################################################
# Nothing is lost: painting the sprites over the background rebuilds the frame.

assert reconstruct(d) == obs
print("reconstruct(identify_sprites(frame)) == frame")

###############################################################################
# Sprites with the same color and shape share a signature wherever they are,
# which is what lets a fixed feature vector describe every frame.

later = identify_sprites(env.step(1)[0])
ball_now = [s for s in d.sprites if env.role(s.signature) == "ball"]
ball_later = [s for s in later.sprites if env.role(s.signature) == "ball"]
if ball_now and ball_later:
    print("ball moved", np.subtract(ball_later[0].anchor, ball_now[0].anchor),
          "with signature unchanged:", ball_now[0].signature == ball_later[0].signature)
