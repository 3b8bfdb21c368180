"""Command-line pipeline: record, dataset, train-eval, explain, adversarial, export-tree.

Stages talk to each other only through files under ``<workdir>/<output>``::

    config.txt                 resolved run configuration
    trajectories/kNN/          one recorded trajectory per noop start
    dataset.csv                symbolic states (+ dataset.csv.schema.json, dataset.csv.meta)
    tree.json, ensemble.json   fitted surrogates
    reports/                   text tables, delimited tables, overlays, graphs

Settings come from built-in defaults, then ``--config FILE`` (flat
``key=value`` lines), then ``SPRITESURROGATE_<KEY>`` environment variables,
then command-line flags; later sources win.

Exit status: 0 on success, 1 for invalid configuration or arguments, 2 when a
stage fails on its inputs or outputs.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import logging
import os
import sys
from collections import Counter
from dataclasses import dataclass, fields

import numpy as np

from . import envharness as eh
from .adversarial import AdversarialError, PermutationReport, measure_action_change
from .features import (
    FeatureSchema,
    SchemaError,
    assemble_dataset,
    build_schema,
    load_dataset,
    save_dataset,
    vectorize,
)
from .pixelgrid import Frame, ImageFormatError, read_image, write_image
from .shap import ShapError, ensemble_shap, rank_sprites, tree_shap
from .sprites import identify_sprites
from .trees import (
    TreeEnsemble,
    TreeError,
    export_tree,
    fit_ensemble,
    fit_tree,
    holdout_evaluate,
    kfold_evaluate,
    load_model,
    save_model,
)

log = logging.getLogger("spritesurrogate")

ENV_PREFIX = "SPRITESURROGATE_"
EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2


class ConfigError(ValueError):
    """Invalid configuration; reported with exit status 1."""


class StageError(RuntimeError):
    """A pipeline stage could not run on its inputs; exit status 2."""


@dataclass(frozen=True)
class RunConfig:
    game: str = "mini-pong"
    policy: str = "scripted-tracker"
    deadzone: int = 2
    epsilon: float = 0.1
    k_from: int = 0
    k_to: int = 29
    sticky: bool = False
    zeta: float = 0.25
    last_action: bool | None = None  # None ("auto") follows the sticky flag
    seed: int = 0
    folds: int = 5
    holdout_from: int = 25
    n_trees: int = 100
    max_steps: int = 1000
    adversarial_k: int = 24
    pairs: int = 200
    output: str = "run"

    def __post_init__(self):
        self.validate()

    @property
    def include_last_action(self) -> bool:
        return self.sticky if self.last_action is None else self.last_action

    def validate(self) -> None:
        if self.game not in eh.GAMES:
            raise ConfigError(f"game must be one of {sorted(eh.GAMES)}, got {self.game!r}")
        if self.policy not in eh.POLICIES:
            raise ConfigError(f"policy must be one of {sorted(eh.POLICIES)}, got {self.policy!r}")
        if not 0 <= self.k_from <= self.k_to <= eh.MAX_NOOPS:
            raise ConfigError(f"noop range {self.k_from}..{self.k_to} must lie within 0..{eh.MAX_NOOPS}")
        if not 0.0 <= self.zeta < 1.0:
            raise ConfigError(f"zeta must lie in [0, 1), got {self.zeta}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.deadzone < 0:
            raise ConfigError("deadzone must be non-negative")
        if self.folds < 2:
            raise ConfigError("folds must be at least 2")
        for name in ("n_trees", "max_steps", "pairs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if not self.output or os.path.isabs(self.output) or ".." in self.output.split(os.sep):
            raise ConfigError("output must be a relative directory inside the workdir")

    def policy_params(self) -> dict:
        params = {"deadzone": self.deadzone}
        if self.policy == "scripted-epsilon":
            params["epsilon"] = self.epsilon
        return params

    def to_text(self) -> str:
        return "".join(f"{f.name}={_format_value(getattr(self, f.name))}\n" for f in fields(self))

    @classmethod
    def from_mapping(cls, values: dict, base: "RunConfig | None" = None) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        current = dataclasses.asdict(base) if base is not None else {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"unknown configuration key {key!r}")
            current[key] = _parse_value(key, raw, known[key].type)
        return cls(**current)

    @classmethod
    def from_text(cls, text: str, base: "RunConfig | None" = None) -> "RunConfig":
        return cls.from_mapping(parse_config_text(text), base)


def _format_value(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


_TRUE, _FALSE = {"1", "true", "yes", "on"}, {"0", "false", "no", "off"}


def _parse_value(key: str, raw, kind: str):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if kind.startswith("bool"):
            if kind.endswith("None") and text.lower() == "auto":
                return None
            if text.lower() in _TRUE:
                return True
            if text.lower() in _FALSE:
                return False
            raise ValueError(text)
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from None
    return text


def parse_config_text(text: str) -> dict:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"config line {n}: expected key=value, got {line!r}")
        out[key.strip()] = value.strip()
    return out


def resolve_config(config_path: str | None, overrides: dict, environ=None) -> RunConfig:
    """Defaults < config file < environment < flags."""
    environ = os.environ if environ is None else environ
    merged = {}
    if config_path:
        try:
            with open(config_path) as fh:
                merged.update(parse_config_text(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
    for f in fields(RunConfig):
        if ENV_PREFIX + f.name.upper() in environ:
            merged[f.name] = environ[ENV_PREFIX + f.name.upper()]
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_mapping(merged)


# -- paths and small helpers ---------------------------------------------------------


class Layout:
    def __init__(self, workdir: str, cfg: RunConfig):
        self.root = os.path.join(workdir, cfg.output)

    def path(self, *parts) -> str:
        return os.path.join(self.root, *parts)

    @property
    def trajectories(self) -> str:
        return self.path("trajectories")

    def trajectory(self, k: int) -> str:
        return self.path("trajectories", f"k{k:02d}")

    @property
    def dataset(self) -> str:
        return self.path("dataset.csv")

    @property
    def reports(self) -> str:
        return self.path("reports")


def _resolve(workdir: str, layout: Layout, given: str | None, default: str) -> str:
    if given is None:
        return default
    return given if os.path.isabs(given) else os.path.join(workdir, given)


def _write(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _table(header, rows) -> str:
    cells = [list(map(str, header))] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths))) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _dataset_meta(cfg: RunConfig, schema: FeatureSchema) -> str:
    return (
        f"game={cfg.game}\npolicy={cfg.policy}\nsticky={_format_value(cfg.sticky)}\n"
        f"last_action={_format_value(cfg.include_last_action)}\nschema={schema.hash}\n"
    )


def _check_dataset(cfg: RunConfig, path: str):
    try:
        data = load_dataset(path)
    except (OSError, ValueError) as exc:
        raise StageError(f"cannot load dataset {path}: {exc}") from None
    meta_path = path + ".meta"
    if os.path.exists(meta_path):
        with open(meta_path) as fh:
            meta = parse_config_text(fh.read())
        expected = parse_config_text(_dataset_meta(cfg, data.schema))
        for key in ("game", "last_action", "schema"):
            if meta.get(key) != expected[key]:
                raise StageError(
                    f"dataset {path} was built with {key}={meta.get(key)} but the run expects {expected[key]}"
                )
    elif data.schema.include_last_action != cfg.include_last_action:
        raise StageError(f"dataset {path} last-action column does not match the configuration")
    return data


# -- commands ------------------------------------------------------------------------


def cmd_record(cfg: RunConfig, layout: Layout, out=sys.stdout) -> str:
    env = eh.make_env(cfg.game)
    policy = eh.make_policy(cfg.policy, cfg.game, **cfg.policy_params())
    rows = []
    for k in range(cfg.k_from, cfg.k_to + 1):
        traj = eh.sample_trajectory(env, policy, k, cfg.sticky, cfg.zeta, eh.derive_seed(cfg.seed, k), cfg.max_steps)
        eh.save_trajectory(traj, layout.trajectory(k))
        substituted = sum(a != b for a, b in zip(traj.actions, traj.agent_actions))
        rows.append((k, len(traj), substituted, f"{sum(traj.rewards):g}"))
    header = ("k", "length", "sticky_substitutions", "return")
    _write(layout.path("reports", "record.csv"), _csv(header, rows))
    out.write(_table(header, rows))
    return layout.trajectories


def _trajectory_dirs(layout: Layout) -> list[str]:
    root = layout.trajectories
    if not os.path.isdir(root):
        raise StageError(f"no recorded trajectories under {root}; run 'record' first")
    dirs = sorted(os.path.join(root, d) for d in os.listdir(root) if os.path.isfile(os.path.join(root, d, "manifest")))
    if not dirs:
        raise StageError(f"no recorded trajectories under {root}; run 'record' first")
    return dirs


def cmd_dataset(cfg: RunConfig, layout: Layout, out=sys.stdout) -> str:
    env = eh.make_env(cfg.game)
    trajs, decs = [], []
    for d in _trajectory_dirs(layout):
        traj = eh.load_trajectory(d)
        if traj.game != cfg.game:
            raise StageError(f"{d} holds a {traj.game} trajectory, configuration says {cfg.game}")
        trajs.append(traj)
        decs.append([identify_sprites(f) for f in traj.frames])
    trajs_decs = sorted(zip(trajs, decs), key=lambda p: p[0].k)
    trajs = [t for t, _ in trajs_decs]
    decs = [d for _, d in trajs_decs]
    schema = build_schema([d for ds in decs for d in ds], cfg.include_last_action, env.n_actions, env.role)
    dropped = Counter()
    data = assemble_dataset(trajs, schema, decs, dropped)
    save_dataset(data, layout.dataset)
    _write(layout.dataset + ".meta", _dataset_meta(cfg, schema))
    out.write(
        f"dataset: {len(data)} rows, {schema.n_features} features, {len(schema.slots)} sprite slots, "
        f"{len(trajs)} trajectories, schema {schema.hash}\n"
    )
    return layout.dataset


def _metric_rows(label: str, m: dict | None):
    if m is None:
        return []
    return [(label, f"{100 * m['accuracy']:.2f}", f"{100 * m['accuracy_stderr']:.2f}",
             f"{m['cross_entropy']:.4f}", f"{m['cross_entropy_stderr']:.4f}")]


def cmd_train_eval(cfg: RunConfig, layout: Layout, dataset: str, out=sys.stdout) -> dict:
    data = _check_dataset(cfg, dataset)
    train = data.where_traj(lambda k: k < cfg.holdout_from)
    if len(train) < cfg.folds:
        raise StageError(f"only {len(train)} training rows for {cfg.folds}-fold evaluation")
    kfold = kfold_evaluate(train, cfg.folds, cfg.seed)
    held = holdout_evaluate(data, cfg.holdout_from, cfg.seed)

    suffix = " (Sticky)" if cfg.sticky else ""
    header = ("evaluation", f"Accuracy (%){suffix}", "stderr", f"Cross Entropy{suffix}", "stderr")
    text = [f"# {cfg.game} / {cfg.policy}{' / sticky zeta=' + repr(cfg.zeta) if cfg.sticky else ''}\n\n"]
    text.append(f"{cfg.folds}-fold split over trajectories k<{cfg.holdout_from} ({len(train)} rows)\n")
    text.append(_table(header, _metric_rows(f"{cfg.folds}-fold", kfold)))
    text.append("\n")
    if held is None:
        text.append("no held-out trajectories\n")
    else:
        text.append(f"held-out trajectories k>={cfg.holdout_from} ({held['n_test']} rows)\n")
        text.append(_table(header, _metric_rows("held-out", held)))
    rows = _metric_rows("kfold", kfold) + _metric_rows("holdout", held)

    tree = fit_tree(train, seed=cfg.seed)
    save_model(tree, layout.path("tree.json"))
    ensemble = fit_ensemble(train, n_trees=cfg.n_trees, seed=cfg.seed)
    save_model(ensemble, layout.path("ensemble.json"))
    text.append(
        f"\nsurrogates: tree.json ({tree.n_nodes} nodes, depth {tree.max_depth}), "
        f"ensemble.json ({len(ensemble)} trees)\n"
    )
    report = "".join(text)
    _write(os.path.join(layout.reports, "train_eval.txt"), report)
    _write(os.path.join(layout.reports, "train_eval.csv"), _csv(
        ("evaluation", "accuracy_pct", "accuracy_stderr_pct", "cross_entropy", "cross_entropy_stderr"), rows))
    out.write(report)
    return {"kfold": kfold, "holdout": held}


_KIND = {"present": "presence", "x": "coordinate", "y": "coordinate", "vx": "velocity", "vy": "velocity"}
_HIGHLIGHT = (255, 255, 0)


def _slot_sprites(d, schema: FeatureSchema) -> dict:
    """schema slot index -> sprite filling it in decomposition ``d``."""
    by_sig: dict = {}
    for s in d.sprites:  # already in (x, y) anchor order
        by_sig.setdefault(s.signature, []).append(s)
    out = {}
    for sig, slots in schema.slot_lookup.items():
        for slot, sprite in zip(slots, by_sig.get(sig, ())):
            out[slot] = sprite
    return out


def overlay(frame: Frame, sprites) -> Frame:
    """Dim the frame, keep the given sprites at full brightness and box them."""
    rgb = (frame.rgb.astype(np.uint16) // 3).astype(np.uint8)
    h, w = rgb.shape[:2]
    for sprite in sprites:
        xs = np.array([p[0] for p in sprite.pixels])
        ys = np.array([p[1] for p in sprite.pixels])
        x0, x1 = max(xs.min() - 1, 0), min(xs.max() + 1, w - 1)
        y0, y1 = max(ys.min() - 1, 0), min(ys.max() + 1, h - 1)
        rgb[y0, x0 : x1 + 1] = _HIGHLIGHT
        rgb[y1, x0 : x1 + 1] = _HIGHLIGHT
        rgb[y0 : y1 + 1, x0] = _HIGHLIGHT
        rgb[y0 : y1 + 1, x1] = _HIGHLIGHT
        rgb[ys, xs] = frame.rgb[ys, xs]
    return Frame(rgb)


def cmd_explain(cfg: RunConfig, layout: Layout, model_path: str, trajectory: str, timestep: int,
                dataset: str, out=sys.stdout) -> list:
    data = _check_dataset(cfg, dataset)
    schema = data.schema
    try:
        model = load_model(model_path, schema.hash)
        traj = eh.load_trajectory(trajectory, frames=False)
    except (OSError, ValueError, KeyError) as exc:
        raise StageError(f"cannot load inputs: {exc}") from None
    if not 0 <= timestep < len(traj.actions):
        raise StageError(f"timestep {timestep} outside 0..{len(traj.actions) - 1}")
    frame_path = os.path.join(trajectory, f"frame_{timestep:05d}.ppm")
    frame = read_image(frame_path)
    d = identify_sprites(frame)
    prev = identify_sprites(read_image(os.path.join(trajectory, f"frame_{timestep - 1:05d}.ppm"))) if timestep else None
    last = traj.actions[timestep - 1] if timestep else 0
    x = vectorize(d, prev, schema, last if schema.include_last_action else None)

    attr = ensemble_shap(model, x) if isinstance(model, TreeEnsemble) else tree_shap(model, x)
    ranking = rank_sprites(attr, schema)
    cls = ranking.predicted_class
    env = eh.make_env(cfg.game)
    names = list(schema.readable_columns)
    sprites = _slot_sprites(d, schema)
    rows = []
    for rank, slot, value in zip(ranking.ranks[:5], ranking.slots[:5], ranking.max_abs_shap[:5]):
        cols = schema.slot_columns(slot)
        local = int(np.argmax(np.abs(attr.values[cols, cls])))
        field_name = ("present", "x", "y", "vx", "vy")[local]
        ax, ay = int(x[cols.start + 1]), int(x[cols.start + 2])
        rows.append((rank, schema.slot_role(slot) or schema.slots[slot].prefix, _KIND[field_name],
                     names[cols.start + local], f"{value:.6f}", ax, ay))
    header = ("rank", "sprite", "kind", "feature", "max_abs_shap", "x", "y")
    action_name = env.action_names[cls]
    text = (
        f"# state t={timestep} of {os.path.relpath(trajectory, layout.root)}\n"
        f"predicted action: {action_name} (p={attr.output[cls]:.4f}), "
        f"base value {attr.base_value[cls]:.4f}\n\n" + _table(header, rows)
    )
    stem = os.path.join(layout.reports, f"explain_k{traj.k:02d}_t{timestep:05d}")
    _write(stem + ".txt", text)
    _write(stem + ".csv", _csv(header, rows))
    top = [sprites[s] for s in ranking.slots[:5] if s in sprites]
    write_image(overlay(frame, top), stem + "_overlay.ppm")
    out.write(text)
    return rows


def cmd_adversarial(cfg: RunConfig, layout: Layout, model_path: str, dataset: str, out=sys.stdout) -> PermutationReport:
    data = _check_dataset(cfg, dataset)
    try:
        model = load_model(model_path, data.schema.hash)
    except (OSError, ValueError, KeyError) as exc:
        raise StageError(f"cannot load model: {exc}") from None
    if not isinstance(model, TreeEnsemble):
        model = TreeEnsemble([model])
    policy = eh.make_policy(cfg.policy, cfg.game, **cfg.policy_params())
    report = measure_action_change(policy, model, data, cfg.adversarial_k, cfg.pairs, cfg.seed)
    report.config.update({"game": cfg.game, "policy": cfg.policy, "trees": len(model)})
    header = ("game", "pairs", "changed", "Agent action changed %")
    rows = [(cfg.game, report.pairs_evaluated, report.changed, f"{100 * report.change_rate:.1f}")]
    text = report.to_text() + "\n" + _table(header, rows)
    _write(os.path.join(layout.reports, "adversarial.txt"), text)
    _write(os.path.join(layout.reports, "adversarial_pairs.csv"), report.details_table())
    out.write(_table(header, rows))
    return report


def cmd_export_tree(cfg: RunConfig, layout: Layout, model_path: str, depth: int, dataset: str | None,
                    tree_index: int = 0, out=sys.stdout) -> str:
    try:
        model = load_model(model_path)
    except (OSError, ValueError, KeyError) as exc:
        raise StageError(f"cannot load model: {exc}") from None
    if isinstance(model, TreeEnsemble):
        if not 0 <= tree_index < len(model):
            raise StageError(f"tree index {tree_index} outside 0..{len(model) - 1}")
        model = model.trees[tree_index]
    names = None
    if dataset and os.path.exists(dataset):
        schema = load_dataset(dataset).schema
        if schema.hash == model.schema_hash:
            names = schema.readable_columns
    classes = eh.make_env(cfg.game).action_names
    try:
        dot = export_tree(model, depth, names, classes if len(classes) == model.n_classes else None)
    except TreeError as exc:
        raise ConfigError(str(exc)) from None
    path = os.path.join(layout.reports, "tree.dot")
    _write(path, dot)
    out.write(f"wrote {path}\n")
    return path


# -- argument parsing -----------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _bool_flag(text: str) -> str:
    if text.lower() not in _TRUE | _FALSE | {"auto"}:
        raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")
    return text


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--workdir", default=".", help="root for every relative path (default: .)")
    common.add_argument("--config", help="flat key=value configuration file")
    common.add_argument("-v", "--verbose", action="store_true")
    group = common.add_argument_group("run configuration (overrides config file and environment)")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type.startswith("bool"):
            group.add_argument(flag, dest=f.name, type=_bool_flag, metavar="BOOL")
        else:
            group.add_argument(flag, dest=f.name, metavar=f.name.upper())

    parser = _Parser(prog="spritesurrogate", description="Sprite-based surrogate models for game-playing policies.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("record", parents=[common], help="sample trajectories for the noop range")
    sub.add_parser("dataset", parents=[common], help="build the symbolic dataset from recorded trajectories")
    p = sub.add_parser("train-eval", parents=[common], help="k-fold and held-out evaluation; fit surrogates")
    p.add_argument("--dataset", help="dataset path (default: <output>/dataset.csv)")
    p = sub.add_parser("explain", parents=[common], help="Shapley ranking and overlay for one state")
    p.add_argument("--model", help="model path (default: <output>/tree.json)")
    p.add_argument("--trajectory", help="trajectory directory (default: <output>/trajectories/k<adversarial-k>)")
    p.add_argument("--timestep", type=int, required=True)
    p.add_argument("--dataset")
    p = sub.add_parser("adversarial", parents=[common], help="sprite-permutation study on one trajectory")
    p.add_argument("--model", help="ensemble path (default: <output>/ensemble.json)")
    p.add_argument("--dataset")
    p = sub.add_parser("export-tree", parents=[common], help="graph description of the first tree levels")
    p.add_argument("--model", help="model path (default: <output>/tree.json)")
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--tree-index", type=int, default=0, help="tree to export from an ensemble")
    p.add_argument("--dataset")
    return parser


def run(argv=None, out=sys.stdout, environ=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)}
        cfg = resolve_config(_resolve(args.workdir, None, args.config, None), overrides, environ)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    layout = Layout(args.workdir, cfg)
    try:
        os.makedirs(layout.root, exist_ok=True)
        _write(layout.path("config.txt"), cfg.to_text())
        dataset = _resolve(args.workdir, layout, getattr(args, "dataset", None), layout.dataset)
        if args.command == "record":
            cmd_record(cfg, layout, out)
        elif args.command == "dataset":
            cmd_dataset(cfg, layout, out)
        elif args.command == "train-eval":
            cmd_train_eval(cfg, layout, dataset, out)
        elif args.command == "explain":
            model = _resolve(args.workdir, layout, args.model, layout.path("tree.json"))
            traj = _resolve(args.workdir, layout, args.trajectory, layout.trajectory(cfg.adversarial_k))
            cmd_explain(cfg, layout, model, traj, args.timestep, dataset, out)
        elif args.command == "adversarial":
            model = _resolve(args.workdir, layout, args.model, layout.path("ensemble.json"))
            cmd_adversarial(cfg, layout, model, dataset, out)
        elif args.command == "export-tree":
            model = _resolve(args.workdir, layout, args.model, layout.path("tree.json"))
            cmd_export_tree(cfg, layout, model, args.depth, dataset, args.tree_index, out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (StageError, OSError, ImageFormatError, SchemaError, TreeError, ShapError,
            AdversarialError, eh.EnvError, ValueError) as exc:
        print(f"{args.command} failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
