"""Built-in Atari-style mini games, scripted target policies and trajectory sampling.

Both games render 210x160 raw frames on a black background.  One environment
step repeats the action for four raw frames and observes
``downsample(framemax(raw3, raw4))``, a 105x80 frame.  Every entity is an
axis-aligned, uniformly colored rectangle at even raw coordinates, so the
observation's sprites line up with the game's entities; the only merge is
the Breakout ball touching the same-colored paddle.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .pixelgrid import Frame, downsample, framemax, pack_rgb, read_image, unpack_rgb, write_image
from .sprites import Signature, SpriteDecomposition, identify_sprites

__all__ = [
    "EnvError",
    "RAW_HEIGHT",
    "RAW_WIDTH",
    "FRAME_SKIP",
    "MiniEnv",
    "MiniPong",
    "MiniBreakout",
    "make_env",
    "TargetPolicy",
    "ScriptedTracker",
    "ScriptedEpsilon",
    "make_policy",
    "Trajectory",
    "sample_trajectory",
    "sample_suite",
    "save_trajectory",
    "load_trajectory",
    "GAMES",
    "POLICIES",
]

RAW_HEIGHT, RAW_WIDTH = 210, 160
FRAME_SKIP = 4
MAX_NOOPS = 29
NOOP = 0


class EnvError(RuntimeError):
    pass


@dataclass(frozen=True)
class Entity:
    name: str
    color: int
    x: int
    y: int
    w: int
    h: int

    def obs_rect(self) -> tuple[int, int, int, int] | None:
        """Footprint ``(c0, r0, c1, r1)`` after stride-2 subsampling, or None."""
        x0, x1 = max(self.x, 0), min(self.x + self.w, RAW_WIDTH)
        y0, y1 = max(self.y, 0), min(self.y + self.h, RAW_HEIGHT)
        c0, c1 = (x0 + 1) // 2, (x1 + 1) // 2
        r0, r1 = (y0 + 1) // 2, (y1 + 1) // 2
        if c0 >= c1 or r0 >= r1:
            return None
        return c0, r0, c1, r1


def _touching(a, b) -> bool:
    # 4-connected contact or overlap between half-open rectangles
    x_overlap = max(a[0], b[0]) < min(a[2], b[2])
    y_overlap = max(a[1], b[1]) < min(a[3], b[3])
    x_touch = max(a[0], b[0]) <= min(a[2], b[2])
    y_touch = max(a[1], b[1]) <= min(a[3], b[3])
    return (x_overlap and y_touch) or (y_overlap and x_touch)


class MiniEnv:
    """Base class: frame skip, max-pooled observation and the ground-truth oracle."""

    game_id = ""
    action_names: tuple[str, ...] = ()

    def __init__(self):
        self.rng = np.random.default_rng(0)
        self.done = True
        self._snapshots: list[list[Entity]] = []

    # -- game specific -------------------------------------------------
    def _reset_state(self) -> None:
        raise NotImplementedError

    def _advance(self, action: int) -> float:
        raise NotImplementedError

    def entities(self) -> list[Entity]:
        raise NotImplementedError

    def role(self, signature: Signature) -> str | None:
        raise NotImplementedError

    def _is_over(self) -> bool:
        raise NotImplementedError

    # -- shared ----------------------------------------------------------
    @property
    def n_actions(self) -> int:
        return len(self.action_names)

    def render(self, entities: Sequence[Entity] | None = None) -> Frame:
        """Raw 210x160 frame of the given entities (default: current state)."""
        return Frame(self._paint(self.entities() if entities is None else entities))

    @staticmethod
    def _paint(entities: Sequence[Entity]) -> np.ndarray:
        rgb = np.zeros((RAW_HEIGHT, RAW_WIDTH, 3), dtype=np.uint8)
        for e in entities:
            x0, x1 = max(e.x, 0), min(e.x + e.w, RAW_WIDTH)
            y0, y1 = max(e.y, 0), min(e.y + e.h, RAW_HEIGHT)
            if x0 < x1 and y0 < y1:
                rgb[y0:y1, x0:x1] = unpack_rgb(e.color)
        return rgb

    def reset(self, rng: np.random.Generator | int | None = None) -> Frame:
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self._reset_state()
        self.done = False
        snap = self.entities()
        self._snapshots = [snap, snap]
        return downsample(self.render(snap))

    def step(self, action: int) -> tuple[Frame, float, bool]:
        if self.done:
            raise EnvError("step() called on a terminated episode; call reset() first")
        if not 0 <= action < self.n_actions:
            raise EnvError(f"invalid action {action} for {self.game_id}")
        reward = 0.0
        snaps = []
        for i in range(FRAME_SKIP):
            reward += self._advance(action)
            if i >= FRAME_SKIP - 2:
                snaps.append(self.entities())
        self._snapshots = snaps
        obs = downsample(framemax(Frame(self._paint(snaps[0])), Frame(self._paint(snaps[1]))))
        self.done = self._is_over()
        return obs, reward, self.done

    def sprite_oracle(self) -> dict:
        """Expected sprites in the latest observation, from entity geometry alone.

        Returns ``count`` (expected connected components), ``live`` (entities
        visible in either pooled raw frame) and ``merges``: the entity-name sets
        of components that contain more than one entity.
        """
        rects = []  # (entity name, color, rect)
        for snap in self._snapshots:
            for e in snap:
                r = e.obs_rect()
                if r is not None:
                    rects.append((e.name, e.color, r))
        parent = list(range(len(rects)))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for i in range(len(rects)):
            for j in range(i + 1, len(rects)):
                if rects[i][1] == rects[j][1] and _touching(rects[i][2], rects[j][2]):
                    parent[find(i)] = find(j)
        groups: dict[int, set] = {}
        for i, (name, _, _) in enumerate(rects):
            groups.setdefault(find(i), set()).add(name)
        live = {name for name, _, _ in rects}
        return {
            "count": len(groups),
            "live": len(live),
            "merges": [frozenset(g) for g in groups.values() if len(g) > 1],
        }


class MiniPong(MiniEnv):
    """Player paddle on the right, lagging opponent on the left, one ball.

    First side to ``points_to_win`` ends the episode.
    """

    game_id = "mini-pong"
    action_names = ("noop", "up", "down")

    BALL = pack_rgb((236, 236, 236))
    PLAYER = pack_rgb((92, 186, 92))
    OPPONENT = pack_rgb((213, 130, 74))
    PADDLE_W, PADDLE_H = 4, 16
    BALL_SIZE = 4
    PLAYER_X, OPPONENT_X = 140, 16
    SPEED = 4
    OPPONENT_SPEED = 2
    BALL_MAX_Y = 200  # lowest ball top edge; walls sit on the lattice
    PADDLE_MAX_Y = 192

    def __init__(self, points_to_win: int = 40):
        super().__init__()
        self.points_to_win = points_to_win

    def _serve(self):
        # serve on the 8-pixel lattice; with 2 px per frame and mirrored
        # bounces the ball stays on it at every observation
        self.ball = [78, 8 * int(self.rng.integers(5, 22))]
        self.vel = [int(self.rng.choice((-2, 2))), int(self.rng.choice((-2, 2)))]
        self.ball_alive = True

    def _reset_state(self):
        self.player_y = 96
        self.opponent_y = 96
        self.score = [0, 0]  # player, opponent
        self.tick = 0
        self._serve()

    def entities(self):
        out = [
            Entity("opponent", self.OPPONENT, self.OPPONENT_X, self.opponent_y, self.PADDLE_W, self.PADDLE_H),
            Entity("player", self.PLAYER, self.PLAYER_X, self.player_y, self.PADDLE_W, self.PADDLE_H),
        ]
        if self.ball_alive:
            out.append(Entity("ball", self.BALL, self.ball[0], self.ball[1], self.BALL_SIZE, self.BALL_SIZE))
        return out

    def role(self, signature):
        return {self.BALL: "ball", self.PLAYER: "paddle", self.OPPONENT: "opponent"}.get(signature.color)

    def _is_over(self):
        return max(self.score) >= self.points_to_win

    @staticmethod
    def _clamp_paddle(y):
        return min(max(y, 0), MiniPong.PADDLE_MAX_Y)

    def _advance(self, action):
        self.tick += 1
        if not self.ball_alive:
            self._serve()
        if action == 1:
            self.player_y = self._clamp_paddle(self.player_y - self.SPEED)
        elif action == 2:
            self.player_y = self._clamp_paddle(self.player_y + self.SPEED)

        bx, by = self.ball
        # opponent reacts only to an approaching ball, and only every other tick
        if self.vel[0] < 0 and bx < 110 and self.tick % 2 == 0:
            centre = self.opponent_y + self.PADDLE_H // 2 - self.BALL_SIZE // 2
            if by < centre - 2:
                self.opponent_y = self._clamp_paddle(self.opponent_y - self.OPPONENT_SPEED)
            elif by > centre + 2:
                self.opponent_y = self._clamp_paddle(self.opponent_y + self.OPPONENT_SPEED)

        nx, ny = bx + self.vel[0], by + self.vel[1]
        if ny < 0 or ny > self.BALL_MAX_Y:
            self.vel[1] = -self.vel[1]
            ny = -ny if ny < 0 else 2 * self.BALL_MAX_Y - ny

        def hits(px, py):
            return (
                nx < px + self.PADDLE_W
                and nx + self.BALL_SIZE > px
                and ny < py + self.PADDLE_H
                and ny + self.BALL_SIZE > py
            )

        if self.vel[0] > 0 and bx + self.BALL_SIZE <= self.PLAYER_X and hits(self.PLAYER_X, self.player_y):
            nx = self.PLAYER_X - self.BALL_SIZE
            self.vel[0] = -self.vel[0]
            self.vel[1] = -2 if ny + 2 < self.player_y + self.PADDLE_H // 2 else 2
        elif (
            self.vel[0] < 0
            and bx >= self.OPPONENT_X + self.PADDLE_W
            and hits(self.OPPONENT_X, self.opponent_y)
        ):
            nx = self.OPPONENT_X + self.PADDLE_W
            self.vel[0] = -self.vel[0]
        self.ball = [nx, ny]

        if nx >= RAW_WIDTH:
            self.score[1] += 1
            self.ball_alive = False
            return -1.0
        if nx + self.BALL_SIZE <= 0:
            self.score[0] += 1
            self.ball_alive = False
            return 1.0
        return 0.0


class MiniBreakout(MiniEnv):
    """Paddle, ball and three rows of bricks; five lives."""

    game_id = "mini-breakout"
    action_names = ("noop", "left", "right")

    PADDLE = pack_rgb((200, 72, 72))  # the ball shares the paddle's color
    BRICK_COLORS = (pack_rgb((66, 72, 200)), pack_rgb((72, 160, 72)), pack_rgb((180, 122, 48)))
    BRICK_NAMES = ("blue brick", "green brick", "orange brick")
    PADDLE_Y, PADDLE_W, PADDLE_H = 190, 24, 4
    BALL_SIZE = 4
    TOP = 16
    BRICK_W, BRICK_H = 22, 6
    SPEED = 4

    def __init__(self, lives: int = 5):
        super().__init__()
        self.start_lives = lives

    def _serve(self):
        self.ball = [2 * int(self.rng.integers(10, 68)), 100]
        self.vel = [int(self.rng.choice((-2, 2))), 2]
        self.ball_alive = True

    def _reset_state(self):
        self.paddle_x = 68
        self.lives = self.start_lives
        self.bricks = [
            (row, 8 + 24 * col, 40 + 8 * row) for row in range(3) for col in range(6)
        ]
        self.alive = [True] * len(self.bricks)
        self._serve()

    def entities(self):
        out = []
        for i, (row, x, y) in enumerate(self.bricks):
            if self.alive[i]:
                out.append(Entity(f"brick{i}", self.BRICK_COLORS[row], x, y, self.BRICK_W, self.BRICK_H))
        out.append(Entity("paddle", self.PADDLE, self.paddle_x, self.PADDLE_Y, self.PADDLE_W, self.PADDLE_H))
        if self.ball_alive:
            out.append(Entity("ball", self.PADDLE, self.ball[0], self.ball[1], self.BALL_SIZE, self.BALL_SIZE))
        return out

    def role(self, signature):
        if signature.color == self.PADDLE:
            return "paddle" if signature.width >= 6 else "ball"
        if signature.color in self.BRICK_COLORS:
            return self.BRICK_NAMES[self.BRICK_COLORS.index(signature.color)]
        return None

    def _is_over(self):
        return self.lives <= 0 or not any(self.alive)

    def _advance(self, action):
        if not self.ball_alive:
            if self.lives <= 0:
                return 0.0
            self._serve()
        if action == 1:
            self.paddle_x = max(self.paddle_x - self.SPEED, 0)
        elif action == 2:
            self.paddle_x = min(self.paddle_x + self.SPEED, RAW_WIDTH - self.PADDLE_W)

        bx, by = self.ball
        nx, ny = bx + self.vel[0], by + self.vel[1]
        if nx < 0 or nx > RAW_WIDTH - self.BALL_SIZE:
            self.vel[0] = -self.vel[0]
            nx = min(max(nx, 0), RAW_WIDTH - self.BALL_SIZE)
        if ny < self.TOP:
            self.vel[1] = -self.vel[1]
            ny = self.TOP

        s = self.BALL_SIZE
        for i, (_, x, y) in enumerate(self.bricks):
            if self.alive[i] and nx < x + self.BRICK_W and nx + s > x and ny < y + self.BRICK_H and ny + s > y:
                # bounce without entering the brick
                self.alive[i] = False
                self.vel[1] = -self.vel[1]
                return 1.0

        if (
            self.vel[1] > 0
            and by + s <= self.PADDLE_Y
            and ny + s > self.PADDLE_Y
            and nx < self.paddle_x + self.PADDLE_W
            and nx + s > self.paddle_x
        ):
            ny = self.PADDLE_Y - s
            self.vel[1] = -self.vel[1]
            self.vel[0] = -2 if nx + s // 2 < self.paddle_x + self.PADDLE_W // 2 else 2
        self.ball = [nx, ny]
        if ny >= RAW_HEIGHT:
            self.ball_alive = False
            self.lives -= 1
        return 0.0


GAMES = {MiniPong.game_id: MiniPong, MiniBreakout.game_id: MiniBreakout}


def make_env(game: str) -> MiniEnv:
    try:
        return GAMES[game]()
    except KeyError:
        raise ValueError(f"unknown game {game!r}; choose from {sorted(GAMES)}") from None


# -- target policies ---------------------------------------------------------


class TargetPolicy:
    """A stand-in for the agent being explained.

    Policies see only sprite anchors, so the same decision can be taken from a
    decomposition (while playing) or from a symbolic feature vector.
    """

    policy_id = ""

    def __init__(self, game: str):
        self.env = make_env(game)
        self.game = game

    def decide(self, anchors: dict[str, tuple[int, int]], rng: np.random.Generator | None) -> int:
        raise NotImplementedError

    def act(self, d: SpriteDecomposition, rng: np.random.Generator | None = None) -> int:
        anchors: dict[str, tuple[int, int]] = {}
        for s in d.sprites:  # sprites are sorted by (x, y) anchor
            role = self.env.role(s.signature)
            if role is not None and role not in anchors:
                anchors[role] = s.anchor
        return self.decide(anchors, rng)

    def act_symbolic(self, state: np.ndarray, schema, rng: np.random.Generator | None = None) -> int:
        found: dict[str, list] = {}
        for i, slot in enumerate(schema.slots):
            base = 5 * i
            if state[base] > 0.5:
                role = self.env.role(slot.signature)
                if role is not None:
                    found.setdefault(role, []).append((int(state[base + 1]), int(state[base + 2])))
        anchors = {role: min(v) for role, v in found.items()}
        return self.decide(anchors, rng)


class ScriptedTracker(TargetPolicy):
    """Move the paddle toward the ball when outside a deadzone, else noop."""

    policy_id = "scripted-tracker"

    def __init__(self, game: str, deadzone: int = 2):
        super().__init__(game)
        self.deadzone = deadzone

    def decide(self, anchors, rng=None):
        ball, paddle = anchors.get("ball"), anchors.get("paddle")
        if ball is None or paddle is None:
            return NOOP
        if self.game == "mini-pong":
            # paddle is 8 observed pixels tall, the ball 2
            offset = ball[1] - (paddle[1] + 3)
        else:
            # paddle is 12 observed pixels wide
            offset = ball[0] - (paddle[0] + 5)
        if offset < -self.deadzone:
            return 1
        if offset > self.deadzone:
            return 2
        return NOOP


class ScriptedEpsilon(ScriptedTracker):
    """Tracker that takes a uniformly random action with probability ``epsilon``."""

    policy_id = "scripted-epsilon"

    def __init__(self, game: str, deadzone: int = 2, epsilon: float = 0.1):
        super().__init__(game, deadzone)
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        self.epsilon = epsilon

    def decide(self, anchors, rng=None):
        if rng is None:
            raise ValueError("scripted-epsilon needs a random generator")
        greedy = super().decide(anchors)
        if rng.random() < self.epsilon:
            return int(rng.integers(self.env.n_actions))
        return greedy


POLICIES = {ScriptedTracker.policy_id: ScriptedTracker, ScriptedEpsilon.policy_id: ScriptedEpsilon}


def make_policy(policy: str, game: str, **params) -> TargetPolicy:
    try:
        cls = POLICIES[policy]
    except KeyError:
        raise ValueError(f"unknown policy {policy!r}; choose from {sorted(POLICIES)}") from None
    return cls(game, **params)


# -- trajectories --------------------------------------------------------------


@dataclass
class Trajectory:
    game: str
    policy: str
    k: int
    sticky: bool
    zeta: float
    seed: int
    frames: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    agent_actions: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    # sprite decompositions of ``frames``, filled while sampling; not persisted
    decompositions: list = field(default_factory=list, repr=False, compare=False)

    def __len__(self):
        return len(self.frames)


def sample_trajectory(
    env: MiniEnv,
    policy: TargetPolicy,
    k: int,
    sticky: bool = False,
    zeta: float = 0.25,
    seed: int = 0,
    max_steps: int = 1000,
) -> Trajectory:
    """Reset, execute ``k`` noops, then record until termination or ``max_steps``.

    With ``sticky`` set, the previously executed action replaces the policy's
    choice with probability ``zeta``.
    """
    if not 0 <= k <= MAX_NOOPS:
        raise ValueError(f"noop start k={k} outside [0, {MAX_NOOPS}]")
    if not 0.0 <= zeta < 1.0:
        raise ValueError(f"zeta={zeta} outside [0, 1)")
    env_ss, sticky_ss, policy_ss = np.random.SeedSequence(seed).spawn(3)
    sticky_rng = np.random.default_rng(sticky_ss)
    policy_rng = np.random.default_rng(policy_ss)

    obs = env.reset(np.random.default_rng(env_ss))
    done = False
    for _ in range(k):
        obs, _, done = env.step(NOOP)
        if done:
            break

    traj = Trajectory(env.game_id, policy.policy_id, k, sticky, zeta, seed)
    previous = NOOP
    while not done and len(traj.frames) < max_steps:
        d = identify_sprites(obs)
        intended = policy.act(d, policy_rng)
        executed = intended
        if sticky and sticky_rng.random() < zeta:
            executed = previous
        traj.frames.append(obs)
        traj.decompositions.append(d)
        traj.actions.append(executed)
        traj.agent_actions.append(intended)
        obs, reward, done = env.step(executed)
        traj.rewards.append(reward)
        previous = executed
    return traj


def derive_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, k]).generate_state(1, dtype=np.uint32)[0])


def sample_suite(
    env: MiniEnv,
    policy: TargetPolicy,
    k_from: int,
    k_to: int,
    sticky: bool = False,
    seed: int = 0,
    zeta: float = 0.25,
    max_steps: int = 1000,
) -> list[Trajectory]:
    if k_from > k_to:
        raise ValueError(f"empty noop range {k_from}..{k_to}")
    return [
        sample_trajectory(env, policy, k, sticky, zeta, derive_seed(seed, k), max_steps)
        for k in range(k_from, k_to + 1)
    ]


def save_trajectory(traj: Trajectory, directory: str | os.PathLike) -> None:
    os.makedirs(directory, exist_ok=True)
    manifest = {
        "game": traj.game,
        "policy": traj.policy,
        "k": traj.k,
        "sticky": int(traj.sticky),
        "zeta": repr(float(traj.zeta)),
        "seed": traj.seed,
        "length": len(traj),
    }
    with open(os.path.join(directory, "manifest"), "w") as fh:
        fh.writelines(f"{key}={value}\n" for key, value in manifest.items())
    with open(os.path.join(directory, "actions"), "w") as fh:
        fh.write("step,executed,intended,reward\n")
        for i, (a, b, r) in enumerate(zip(traj.actions, traj.agent_actions, traj.rewards)):
            fh.write(f"{i},{a},{b},{float(r)!r}\n")
    for i, frame in enumerate(traj.frames):
        write_image(frame, os.path.join(directory, f"frame_{i:05d}.ppm"))


def read_manifest(directory: str | os.PathLike) -> dict:
    out = {}
    with open(os.path.join(directory, "manifest")) as fh:
        for line in fh:
            line = line.strip()
            if line:
                key, _, value = line.partition("=")
                out[key] = value
    return out


def load_trajectory(directory: str | os.PathLike, frames: bool = True) -> Trajectory:
    m = read_manifest(directory)
    traj = Trajectory(m["game"], m["policy"], int(m["k"]), bool(int(m["sticky"])), float(m["zeta"]), int(m["seed"]))
    with open(os.path.join(directory, "actions")) as fh:
        next(fh)
        for line in fh:
            if line.strip():
                _, a, b, r = line.strip().split(",")
                traj.actions.append(int(a))
                traj.agent_actions.append(int(b))
                traj.rewards.append(float(r))
    length = int(m["length"])
    if len(traj.actions) != length:
        raise EnvError(f"{directory}: manifest length {length} but {len(traj.actions)} actions")
    if frames:
        traj.frames = [read_image(os.path.join(directory, f"frame_{i:05d}.ppm")) for i in range(length)]
    return traj
