"""Config-driven command line: ``gen-data``, ``train``, ``sample``, ``eval``, ``verify``.

Experiments are described by an INI-style file (sections of ``key = value``
lines); see :data:`DEFAULT_CONFIG` for every key and its default.  The output
root is ``[experiment] output_dir`` unless ``BRIDGE_RESULTS_DIR`` is set.

Layout under the output root::

    data/train, data/test      tensor pairs + manifest.tsv
    model/                     MLP weights, manifest.txt, loss.csv
    samples/<method>_N<N>/     <id>.bin, <id>.pgm, trajectories/<id>/
    eval/metrics.csv
    verify/                    text + CSV reports of the three suites
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import diagnostics
from .degrade import DegradeSpec, load_dataset, make_toy_dataset, save_dataset
from .metrics import GlcmConfig, haralick_distance, rmse, ssim
from .mlp import TrainConfig, TrainingDivergedError, load_mlp, save_mlp, train_tiny_mlp
from .posterior import GnPolicy
from .predictor import Condition, GaussianPairModel, cheat_oracle, gaussian_analytic_oracle
from .sampler import SamplerConfig, generate, write_trajectory
from .schedule import BetaSchedule, build_grid, build_schedule
from .streams import stream
from .tensor_io import export_pgm, read_tensor, write_tensor

log = logging.getLogger("i3sb")

DEFAULT_CONFIG = """\
[experiment]
task = denoise
output_dir = results

[dataset]
kind = texture_field
train_count = 16
test_count = 4
size = 64
seed = 0

[degrade]
noise_sigma = 0.5
seed = 1

[schedule]
beta_kind = symmetric_triangular
beta_min = 1e-4
beta_max = 0.15
spacing = quadratic
t_min = 1e-4
train_N = 1000
train_t_min = 1e-6

[predictor]
kind = mlp
patch = 5
hidden = 64, 64
lr = 1e-3
batch = 64
iters = 3000
seed = 0
mu0 = 0.0
s0sq = 1.0
s1sq = 0.25

[sampler]
N = 20, 50, 100
policies = i2sb_equivalent, step_function
r = 0.2
seed = 0
record_trajectory = false
clamp_x0_hat = none

[metrics]
levels = 32
window = -1.0, 1.0
data_range = 2.0

[verify]
trials = 1000
M = 100000
seed = 7
e2e_M = 20000
e2e_N = 20
"""

TASKS = {"denoise": ("gaussian_noise", "QD"), "super_resolve": ("downsample4x", "LR")}
METHOD_NAMES = {"i2sb_equivalent": "I2SB", "step_function": "I3SB", "custom_table": "custom"}


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.split(",") if v.strip())


@dataclass
class Experiment:
    cp: configparser.ConfigParser
    path: Path | None = None

    def get(self, section, key):
        try:
            return self.cp.get(section, key)
        except (configparser.NoSectionError, configparser.NoOptionError) as exc:
            raise ConfigError(f"missing [{section}] {key}") from exc

    def num(self, section, key, kind=float):
        raw = self.get(section, key)
        try:
            return kind(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid {kind.__name__}") from exc

    @property
    def root(self) -> Path:
        env = os.environ.get("BRIDGE_RESULTS_DIR")
        return Path(env) if env else Path(self.get("experiment", "output_dir"))

    @property
    def task(self) -> str:
        task = self.get("experiment", "task")
        if task not in TASKS:
            raise ConfigError(f"[experiment] task must be one of {sorted(TASKS)}, got {task!r}")
        return task

    def beta(self) -> BetaSchedule:
        try:
            return BetaSchedule(self.get("schedule", "beta_kind"), self.num("schedule", "beta_min"),
                                self.num("schedule", "beta_max"))
        except ValueError as exc:
            raise ConfigError(f"[schedule] {exc}") from exc

    def schedule(self, N: int):
        grid = build_grid(N, self.get("schedule", "spacing"), self.num("schedule", "t_min"))
        return build_schedule(self.beta(), grid)

    def degrade(self) -> DegradeSpec:
        kind = TASKS[self.task][0]
        return DegradeSpec(kind, self.num("degrade", "noise_sigma"), self.num("degrade", "seed", int))

    def dataset_args(self):
        size = self.num("dataset", "size", int)
        if size % 4:
            raise ConfigError(f"[dataset] size = {size} must be divisible by 4")
        return self.get("dataset", "kind"), size, self.num("dataset", "seed", int)

    def steps(self) -> tuple:
        Ns = _ints(self.get("sampler", "N"))
        if not Ns or min(Ns) < 1:
            raise ConfigError("[sampler] N must list positive integers")
        if self.cp.has_option("schedule", "N"):
            fixed = self.num("schedule", "N", int)
            if any(N != fixed for N in Ns):
                raise ConfigError(f"[schedule] N = {fixed} does not match [sampler] N = {Ns}")
        return Ns

    def policies(self) -> list:
        r = self.num("sampler", "r")
        out = []
        for kind in (k.strip() for k in self.get("sampler", "policies").split(",")):
            try:
                out.append(GnPolicy(kind, r if kind == "step_function" else 0.2))
            except ValueError as exc:
                raise ConfigError(f"[sampler] policies: {exc}") from exc
        return out

    def glcm(self) -> GlcmConfig:
        return GlcmConfig(levels=self.num("metrics", "levels", int), window=_floats(self.get("metrics", "window")))

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lr=self.num("predictor", "lr"),
            batch=self.num("predictor", "batch", int),
            iters=self.num("predictor", "iters", int),
            seed=self.num("predictor", "seed", int),
            patch=self.num("predictor", "patch", int),
            hidden=_ints(self.get("predictor", "hidden")),
            train_N=self.num("schedule", "train_N", int),
            train_t_min=self.num("schedule", "train_t_min"),
        )


def load_config(path=None) -> Experiment:
    cp = configparser.ConfigParser()
    cp.read_string(DEFAULT_CONFIG)
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        cp.read(path)
    return Experiment(cp, path)


def dump_config(exp: Experiment) -> str:
    lines = []
    for section in exp.cp.sections():
        lines.append(f"[{section}]")
        lines.extend(f"{k} = {v}" for k, v in exp.cp.items(section))
        lines.append("")
    return "\n".join(lines)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# --------------------------------------------------------------------------
# commands


def cmd_gen_data(exp: Experiment, force: bool = False) -> int:
    kind, size, seed = exp.dataset_args()
    degrade = exp.degrade()
    splits = {
        "train": make_toy_dataset(kind, exp.num("dataset", "train_count", int), size, seed, degrade),
        "test": make_toy_dataset(kind, exp.num("dataset", "test_count", int), size, seed + 1_000_003,
                                 DegradeSpec(degrade.kind, degrade.noise_sigma, degrade.seed + 1_000_003)),
    }
    for name, pairs in splits.items():
        target = exp.root / "data" / name
        manifest = target / "manifest.tsv"
        if manifest.exists() and not force:
            tmp = exp.root / "data" / f".{name}.check"
            digest = save_dataset(pairs, tmp)
            for f in tmp.iterdir():
                f.unlink()
            tmp.rmdir()
            if digest != _sha256(manifest):
                raise ConfigError(f"{target} exists with different content; rerun with --force to overwrite")
            log.info("%s up to date (%s)", target, digest[:12])
            continue
        digest = save_dataset(pairs, target)
        log.info("wrote %d pairs to %s (manifest %s)", len(pairs), target, digest[:12])
    return 0


def _require_dataset(exp: Experiment, split: str):
    directory = exp.root / "data" / split
    if not (directory / "manifest.tsv").exists():
        raise ConfigError(f"dataset {directory} missing; run gen-data first")
    return load_dataset(directory)


def cmd_train(exp: Experiment, resume: bool = False) -> int:
    if resume:
        raise ConfigError("--resume is not supported: training always starts from the configured seed")
    kind = exp.get("predictor", "kind")
    if kind != "mlp":
        log.info("predictor kind %r needs no training", kind)
        return 0
    data = _require_dataset(exp, "train")
    out = exp.root / "model"
    try:
        net, loss_log = train_tiny_mlp([(c, x) for _, c, x in data], exp.beta(), exp.train_config())
    except TrainingDivergedError as exc:
        log.error("training diverged: %s", exc)
        return 2
    save_mlp(net, out)
    with open(out / "loss.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "loss"])
        writer.writerows([it, f"{loss:.8g}"] for it, loss in loss_log)
    log.info("trained: loss %.4f at iter %d -> %.4f at iter %d",
             loss_log[0][1], loss_log[0][0], loss_log[-1][1], loss_log[-1][0])
    return 0


def _predictor_factory(exp: Experiment):
    kind = exp.get("predictor", "kind")
    if kind == "cheat":
        return lambda clean, s: cheat_oracle(clean, s)
    if kind == "analytic":
        model = GaussianPairModel(exp.num("predictor", "mu0"), exp.num("predictor", "s0sq"), exp.num("predictor", "s1sq"))
        return lambda clean, s: gaussian_analytic_oracle(model, s)
    if kind == "mlp":
        model_dir = exp.root / "model"
        if not (model_dir / "manifest.txt").exists():
            raise ConfigError(f"no trained model in {model_dir}; run train first")
        net = load_mlp(model_dir)
        return lambda clean, s: net
    raise ConfigError(f"[predictor] kind must be cheat, analytic or mlp, got {kind!r}")


def _method_dir(exp: Experiment, policy: GnPolicy, N: int) -> Path:
    return exp.root / "samples" / f"{METHOD_NAMES[policy.kind]}_N{N}"


def cmd_sample(exp: Experiment, jobs: int = 1) -> int:
    steps, policies = exp.steps(), exp.policies()
    data = _require_dataset(exp, "test")
    make_predictor = _predictor_factory(exp)
    seed = exp.num("sampler", "seed", int)
    record = exp.cp.getboolean("sampler", "record_trajectory")
    clamp_raw = exp.get("sampler", "clamp_x0_hat").strip().lower()
    clamp = None if clamp_raw in ("", "none") else _floats(clamp_raw)
    for N in steps:
        s = exp.schedule(N)
        for policy in policies:
            out_dir = _method_dir(exp, policy, N)
            out_dir.mkdir(parents=True, exist_ok=True)

            def run(item, _s=s, _policy=policy, _N=N):
                index, (ident, clean, corrupted) = item
                cfg = SamplerConfig(N=_N, policy=_policy, seed=seed, record_trajectory=record, clamp_x0_hat=clamp)
                restored, rec = generate(corrupted, make_predictor(clean, _s), _s, cfg,
                                         Condition(xN=corrupted), rng=stream(seed, index))
                return ident, corrupted, restored, rec

            with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
                results = list(pool.map(run, enumerate(data)))
            for ident, corrupted, restored, rec in results:
                write_tensor(restored, out_dir / f"{ident}.bin")
                export_pgm(restored, out_dir / f"{ident}.pgm", restored.range_min, restored.range_max)
                if rec is not None:
                    write_trajectory(rec, out_dir / "trajectories" / ident, corrupted)
            log.info("sampled %d images into %s", len(results), out_dir)
    return 0


def _eval_row(ident, method, N, test, ref, exp):
    data_range, cfg = exp.num("metrics", "data_range"), exp.glcm()
    return {
        "image_id": ident,
        "method": method,
        "N": N,
        "ssim": ssim(test, ref, data_range),
        "haralick_distance": haralick_distance(test, ref, cfg),
        "rmse": rmse(test, ref),
    }


def cmd_eval(exp: Experiment, jobs: int = 1) -> int:
    steps, policies = exp.steps(), exp.policies()
    data = _require_dataset(exp, "test")
    refs = {ident: clean for ident, clean, _ in data}
    baseline = TASKS[exp.task][1]
    jobs_list = [(ident, baseline, "", corrupted, refs[ident]) for ident, _, corrupted in data]
    for N in steps:
        for policy in policies:
            out_dir = _method_dir(exp, policy, N)
            produced = sorted(p.stem for p in out_dir.glob("*.bin")) if out_dir.exists() else []
            missing_refs = [i for i in produced if i not in refs]
            if missing_refs:
                raise ConfigError(f"no reference image for ids {missing_refs}")
            missing_out = [i for i in refs if i not in produced]
            if missing_out:
                raise ConfigError(f"{out_dir}: restored images missing for ids {missing_out}; run sample first")
            for ident in produced:
                jobs_list.append((ident, METHOD_NAMES[policy.kind], N, read_tensor(out_dir / f"{ident}.bin"), refs[ident]))

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        rows = list(pool.map(lambda j: _eval_row(*j, exp), jobs_list))

    groups = {}
    for row in rows:
        groups.setdefault((row["method"], row["N"]), []).append(row)
    out = exp.root / "eval"
    out.mkdir(parents=True, exist_ok=True)
    fields = ["image_id", "method", "N", "ssim", "haralick_distance", "rmse"]
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            writer.writerow([row["image_id"], row["method"], row["N"]] +
                            [f"{row[k]:.8g}" for k in fields[3:]])
        for (method, N), grp in groups.items():
            for stat, fn in (("mean", np.mean), ("std", np.std)):
                writer.writerow([stat, method, N] + [f"{fn([r[k] for r in grp]):.8g}" for k in fields[3:]])
    log.info("wrote %d rows to %s", len(rows), out / "metrics.csv")
    return 0


def cmd_verify(exp: Experiment, mutate: bool = False) -> int:
    out = exp.root / "verify"
    out.mkdir(parents=True, exist_ok=True)
    seed = exp.num("verify", "seed", int)
    coeff = diagnostics.coeff_identity_suite(exp.num("verify", "trials", int), seed, mutate="b" if mutate else None)
    marg = diagnostics.marginal_suite(M=exp.num("verify", "M", int), seed=seed,
                                      mutate="skip_draw" if mutate else None)
    e2e_N = exp.num("verify", "e2e_N", int)
    e2e = []
    for i, policy in enumerate([GnPolicy("i2sb_equivalent"), GnPolicy("step_function", exp.num("sampler", "r"))]):
        cfg = SamplerConfig(N=e2e_N, policy=policy, seed=diagnostics.derive_seed(seed, i),
                            mutate="scale_b" if mutate else None)
        e2e.append(diagnostics.end_to_end_gaussian(GaussianPairModel(), exp.schedule(e2e_N), cfg,
                                                   exp.num("verify", "e2e_M", int), pair_seed=seed))
    reports = {"coeff_identity": [coeff], "marginal": [marg], "end_to_end": e2e}
    summary = []
    for name, reps in reports.items():
        (out / f"{name}.txt").write_text("".join(r.to_text() for r in reps))
        (out / f"{name}.csv").write_text("".join(r.to_csv() for r in reps))
        ok = all(r.passed for r in reps)
        summary.append(f"{name}: {'PASS' if ok else 'FAIL'}")
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    for line in summary:
        print(line)
    return 0 if all(r.passed for reps in reports.values() for r in reps) else 1


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="i3sb", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("gen-data", "train", "sample", "eval", "verify"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None, help="experiment config file")
        if name == "gen-data":
            p.add_argument("--force", action="store_true", help="overwrite existing data")
        if name == "train":
            p.add_argument("--resume", action="store_true", help=argparse.SUPPRESS)
        if name in ("sample", "eval"):
            p.add_argument("--jobs", type=int, default=1, metavar="K")
        if name == "verify":
            p.add_argument("--mutate", action="store_true", help="inject known faults; suites must fail")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        exp = load_config(args.config)
        if args.command == "gen-data":
            return cmd_gen_data(exp, force=args.force)
        if args.command == "train":
            return cmd_train(exp, resume=args.resume)
        if args.command == "sample":
            return cmd_sample(exp, jobs=args.jobs)
        if args.command == "eval":
            return cmd_eval(exp, jobs=args.jobs)
        return cmd_verify(exp, mutate=args.mutate)
    except (ConfigError, ValueError, configparser.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
