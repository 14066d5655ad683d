"""Experiment protocols: fin study, media transfer and the synthetic suite.

Every random stream hangs off the master seed:

* session ``k`` learns with seed ``derive_seed(master, 0, k)`` and starts
  from parameters drawn from that seed's ``(0, 2)`` stream, so all fins and
  media share session seeds and initializations;
* transfer evaluations use ``derive_seed(master, 2, k, iteration, rep)``;
* synthetic stub ``i``, seed ``s`` uses the ``(3, i, s)`` sub-tree.

Sessions are independent jobs. Results are collected in submission order,
so running them in parallel does not change any output byte.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import BaselineConfig, diagonal_gaussian_ps, random_search
from .config import ExperimentConfig
from .learner import LearnConfig, LearningTrace, learn
from .plotting import curve_stats
from .policy import CRAWLER_GROUPS, BasisConfig, GroupStructure, initial_params
from .seeding import derive_seed, rng_at
from .sim import BACKEND, Calibration, CrawlerEnv, load_calibration
from .stubs import PlantedSubspaceEnv, QuadraticEnv, subspace_angle_deg

log = logging.getLogger(__name__)

_SESSION, _TRANSFER, _SYNTH = 0, 2, 3
STUBS = ("quadratic", "planted")
METHODS = ("groups", "diagonal_gaussian", "random_search")


def session_seed(master_seed: int, k: int) -> int:
    return derive_seed(master_seed, _SESSION, k)


def session_init(config: ExperimentConfig, seed: int):
    return initial_params(CRAWLER_GROUPS, config.basis, K=config.K, tau=config.init_tau,
                          w_scale=config.init_w_scale, rng=rng_at(seed, 0, 2))


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


@dataclass
class RunManifest:
    kind: str
    config: dict
    calibration_hash: str
    calibration_source: str
    session_seeds: list
    tool_version: str = __version__
    kernel_backend: str = BACKEND
    python: str = field(default_factory=platform.python_version)
    started: str = ""
    wall_clock_s: float = 0.0
    executions: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"

    @classmethod
    def read(cls, path: str | Path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))


def _calibration(config: ExperimentConfig, calibration: Calibration | None) -> Calibration:
    if calibration is not None:
        return calibration
    return load_calibration(config.calibration_path)


def _make_env(config: ExperimentConfig, cal: Calibration, media: str, fin: str) -> CrawlerEnv:
    over = {} if config.heterogeneity is None else {"heterogeneity": config.heterogeneity}
    return CrawlerEnv.from_presets(media, fin, cal, **over)


def _fin_session(job):
    config, cal, media, fin, k = job
    seed = session_seed(config.master_seed, k)
    env = _make_env(config, cal, media, fin)
    lc = LearnConfig(config.iterations, config.H, config.hyper, config.exploration)
    trace = learn(env, session_init(config, seed), lc, seed)
    if env.calls != trace.executions:
        raise RuntimeError(f"{media}/{fin} session {k}: {env.calls} executions, trace records {trace.executions}")
    return trace


def trace_path(out_dir: Path, media: str, fin: str, k: int, ext: str = "jsonl") -> Path:
    return Path(out_dir) / "traces" / f"{media}_{fin}_session{k}.{ext}"


@dataclass
class StudyResult:
    traces: dict                # (media, fin) -> list of LearningTrace
    paths: list
    manifest: RunManifest

    def executions(self, media: str, fin: str) -> int:
        return sum(t.executions for t in self.traces[(media, fin)])


def run_fin_study(config: ExperimentConfig, calibration: Calibration | None = None,
                  out_dir: str | Path | None = None) -> StudyResult:
    """Learn every fin on every medium for ``config.sessions`` sessions.

    Writes per-session traces (JSONL and CSV), ``summary.csv`` with the
    across-session mean and sample std per iteration, ``final.csv`` with the
    same for the last iteration, and ``manifest.json``.
    """
    t0, started = time.perf_counter(), datetime.now(timezone.utc).isoformat(timespec="seconds")
    cal = _calibration(config, calibration)
    out = Path(out_dir if out_dir is not None else config.output_dir)
    cells = [(m, f) for m in config.media for f in config.fins]
    jobs = [(config, cal, m, f, k) for m, f in cells for k in range(config.sessions)]
    results = _map(_fin_session, jobs, config.workers)
    traces = {c: [] for c in cells}
    for (_, _, m, f, _), tr in zip(jobs, results):
        traces[(m, f)].append(tr)

    paths, unit, scale = [], config.reward_unit, config.reward_scale
    for (m, f), trs in traces.items():
        for k, tr in enumerate(trs):
            paths.append(_write(trace_path(out, m, f, k), tr.to_jsonl()))
            paths.append(_write(trace_path(out, m, f, k, "csv"), tr.to_csv(scale)))
    summary, final = [], []
    for (m, f), trs in traces.items():
        R = np.array([tr.mean_rewards() for tr in trs]) * scale
        mean, std = curve_stats(R)
        for i in range(R.shape[1]):
            summary.append([m, f, i + 1, len(trs), mean[i], std[i]])
        final.append([m, f, len(trs), mean[-1], std[-1]])
    paths.append(_write(out / "summary.csv", _csv_text(
        ["media", "fin", "iteration", "sessions", f"mean_reward_{unit}", f"std_reward_{unit}"], summary)))
    paths.append(_write(out / "final.csv", _csv_text(
        ["media", "fin", "sessions", f"final_mean_{unit}", f"final_std_{unit}"], final)))

    manifest = RunManifest(
        kind="fin_study", config=config.to_dict(), calibration_hash=cal.content_hash,
        calibration_source=cal.source,
        session_seeds=[session_seed(config.master_seed, k) for k in range(config.sessions)],
        started=started,
        executions={f"{m}/{f}": sum(t.executions for t in trs) for (m, f), trs in traces.items()},
    )
    manifest.outputs = [str(p) for p in paths] + [str(out / "manifest.json")]
    manifest.wall_clock_s = round(time.perf_counter() - t0, 3)
    paths.append(_write(out / "manifest.json", manifest.to_json()))
    return StudyResult(traces, paths, manifest)


def load_traces(run_dir: str | Path, media: str, fin: str, sessions: int) -> list[LearningTrace]:
    out = []
    for k in range(sessions):
        p = trace_path(Path(run_dir), media, fin, k)
        if not p.is_file():
            raise FileNotFoundError(f"transfer source run is missing {p}")
        out.append(LearningTrace.from_jsonl(p.read_text()))
    return out


@dataclass
class TransferResult:
    rows: list                  # [fin, session, iteration, PP, PS, SS]
    columns: tuple
    paths: list
    manifest: RunManifest

    def column(self, fin: str, iteration: int, j: int) -> np.ndarray:
        return np.array([r[3 + j] for r in self.rows if r[0] == fin and r[2] == iteration])


def _eval_mean(env: CrawlerEnv, M, basis: BasisConfig, seeds) -> float:
    return float(np.mean([env.evaluate(M, basis, s) for s in seeds]))


def run_transfer(config: ExperimentConfig, calibration: Calibration | None = None,
                 out_dir: str | Path | None = None) -> TransferResult:
    """Evaluate policies learned on the source medium on the target medium.

    The source traces come from ``config.source_dir`` (a fin-study run on the
    source medium) or, when that is unset, from a fresh run written under
    ``source/``. An in-situ run on the target medium with identical seeds and
    initialization lands under ``insitu/``. Each per-iteration mean policy is
    executed ``n_eval`` times on fresh seeds shared by all three columns.
    """
    t0, started = time.perf_counter(), datetime.now(timezone.utc).isoformat(timespec="seconds")
    cal = _calibration(config, calibration)
    out = Path(out_dir if out_dir is not None else config.output_dir)
    P, S = config.media
    paths = []
    if config.source_dir is not None:
        src = {f: load_traces(config.source_dir, P, f, config.sessions) for f in config.fins}
    else:
        res = run_fin_study(config.replace(experiment="fin_study", media=(P,)), cal, out / "source")
        src = {f: res.traces[(P, f)] for f in config.fins}
        paths += res.paths
    ins = run_fin_study(config.replace(experiment="insitu", media=(S,)), cal, out / "insitu")
    paths += ins.paths

    basis, scale, rows = config.basis, config.reward_scale, []
    for f in config.fins:
        env_p, env_s = _make_env(config, cal, P, f), _make_env(config, cal, S, f)
        for k in range(config.sessions):
            tp, ts = src[f][k], ins.traces[(S, f)][k]
            if len(tp.records) < config.iterations:
                raise ValueError(f"source session {k} of fin {f} has only {len(tp.records)} iterations")
            for i in range(config.iterations):
                seeds = [derive_seed(config.master_seed, _TRANSFER, k, i + 1, r) for r in range(config.n_eval)]
                Mp, Ms = tp.records[i].params["M"], ts.records[i].params["M"]
                rows.append([f, k, i + 1, _eval_mean(env_p, Mp, basis, seeds) * scale,
                             _eval_mean(env_s, Mp, basis, seeds) * scale,
                             _eval_mean(env_s, Ms, basis, seeds) * scale])
    unit = config.reward_unit
    cols = (f"{P}_on_{P}_{unit}", f"{P}_on_{S}_{unit}", f"{S}_on_{S}_{unit}")
    paths.append(_write(out / "transfer.csv", _csv_text(["fin", "session", "iteration", *cols], rows)))
    summary = []
    for f in config.fins:
        for i in range(1, config.iterations + 1):
            block = np.array([r[3:] for r in rows if r[0] == f and r[2] == i])
            mean, std = curve_stats(block)
            summary.append([f, i, *mean, *std, *np.median(block, axis=0)])
    head = ["fin", "iteration"] + [f"mean_{c}" for c in cols] + [f"std_{c}" for c in cols] + [f"median_{c}" for c in cols]
    paths.append(_write(out / "transfer_summary.csv", _csv_text(head, summary)))

    manifest = RunManifest(
        kind="transfer", config=config.to_dict(), calibration_hash=cal.content_hash,
        calibration_source=cal.source,
        session_seeds=[session_seed(config.master_seed, k) for k in range(config.sessions)],
        started=started, executions=dict(ins.manifest.executions),
    )
    manifest.outputs = [str(p) for p in paths] + [str(out / "manifest.json")]
    manifest.wall_clock_s = round(time.perf_counter() - t0, 3)
    paths.append(_write(out / "manifest.json", manifest.to_json()))
    return TransferResult(rows, cols, paths, manifest)


def pair_groups(dim: int) -> GroupStructure:
    """Consecutive index pairs (plus a trailing singleton for odd ``dim``)."""
    groups = [tuple(range(i, min(i + 2, dim))) for i in range(0, dim, 2)]
    return GroupStructure(tuple(groups))


def make_stub(name: str, config: ExperimentConfig, s: int):
    """Environment and initial parameters for seed ``s`` of a synthetic stub."""
    syn = config.synthetic
    rng = rng_at(config.master_seed, _SYNTH, STUBS.index(name), s)
    basis = BasisConfig(config.T, config.J)
    if name == "quadratic":
        env = QuadraticEnv(syn.quadratic_scale * rng.standard_normal((syn.quadratic_dim, config.J)))
        gs = pair_groups(syn.quadratic_dim)
    elif name == "planted":
        env = PlantedSubspaceEnv.random(syn.planted_dim, config.J, rng)
        gs = pair_groups(syn.planted_dim)
    else:
        raise ValueError(f"unknown stub {name!r}")
    init = initial_params(gs, basis, K=config.K, tau=1.0, w_scale=config.init_w_scale, rng=rng)
    return env, init


def _synthetic_job(job):
    config, name, s, method = job
    env, init = make_stub(name, config, s)
    seed = derive_seed(config.master_seed, _SYNTH, STUBS.index(name), s, 1)
    if method == "groups":
        return learn(env, init, LearnConfig(config.iterations, config.H, config.hyper, config.exploration), seed)
    var = float(1.0 / np.mean(init.tau))
    bc = BaselineConfig(method, config.iterations, config.H, sigma=config.synthetic.random_search_sigma,
                        init_var=var)
    fn = diagonal_gaussian_ps if method == "diagonal_gaussian" else random_search
    return fn(env, init.M, bc, seed)


@dataclass
class SyntheticResult:
    traces: dict                # (stub, method) -> list of LearningTrace
    angles: list                # GrouPS angle per planted seed
    wins: dict                  # stub -> GrouPS final > diagonal final, per seed
    paths: list

    @property
    def median_angle(self) -> float:
        return float(np.median(self.angles))


def run_synthetic(config: ExperimentConfig, out_dir: str | Path | None = None) -> SyntheticResult:
    """GrouPS and both baselines on the stub suite at equal rollout budget."""
    t0, started = time.perf_counter(), datetime.now(timezone.utc).isoformat(timespec="seconds")
    out = Path(out_dir if out_dir is not None else config.output_dir)
    n = config.synthetic.seeds
    jobs = [(config, st, s, m) for st in STUBS for m in METHODS for s in range(n)]
    results = _map(_synthetic_job, jobs, config.workers)
    traces = {}
    for (_, st, s, m), tr in zip(jobs, results):
        traces.setdefault((st, m), []).append(tr)

    rows, angles = [], []
    for (st, m), trs in traces.items():
        for s, tr in enumerate(trs):
            best = -np.inf
            u = make_stub(st, config, s)[0].u if (st == "planted" and m == "groups") else None
            for rec in tr.records:
                best = max(best, rec.mean_policy_reward)
                ang = subspace_angle_deg(np.array(rec.params["W"]), u) if u is not None else ""
                rows.append([st, m, s, rec.iteration, rec.mean_policy_reward, best, ang])
            if u is not None:
                angles.append(rows[-1][-1])
    wins = {st: [traces[(st, "groups")][s].records[-1].mean_policy_reward
                 > traces[(st, "diagonal_gaussian")][s].records[-1].mean_policy_reward for s in range(n)]
            for st in STUBS}
    paths = [_write(out / "synthetic.csv", _csv_text(
        ["stub", "method", "seed", "iteration", "mean_policy_reward", "best_reward", "subspace_angle_deg"], rows))]
    summary = []
    for (st, m), trs in traces.items():
        final = np.array([t.records[-1].mean_policy_reward for t in trs])
        w = sum(wins[st]) if m == "groups" else ""
        ang = float(np.median(angles)) if (st == "planted" and m == "groups") else ""
        summary.append([st, m, n, float(np.median(final)), w, ang])
    paths.append(_write(out / "synthetic_summary.csv", _csv_text(
        ["stub", "method", "seeds", "final_reward_median", "wins_vs_diagonal", "median_angle_deg"], summary)))
    manifest = RunManifest(kind="synthetic", config=config.to_dict(), calibration_hash="",
                           calibration_source="", session_seeds=[], started=started)
    manifest.outputs = [str(p) for p in paths] + [str(out / "manifest.json")]
    manifest.wall_clock_s = round(time.perf_counter() - t0, 3)
    paths.append(_write(out / "manifest.json", manifest.to_json()))
    return SyntheticResult(traces, angles, wins, paths)


def render_run(run_dir: str | Path, out_dir: str | Path | None = None) -> list[Path]:
    """Render the learning-curve SVGs for a finished run directory."""
    from .plotting import plot_bands, render_curves

    run = Path(run_dir)
    mpath = run / "manifest.json"
    if not mpath.is_file():
        raise FileNotFoundError(f"{run} has no manifest.json")
    man = RunManifest.read(mpath)
    cfg = ExperimentConfig.from_dict({k: v for k, v in man.config.items() if v is not None})
    out = Path(out_dir) if out_dir is not None else run
    unit, paths = cfg.reward_unit, []
    if man.kind in ("fin_study", "insitu"):
        for m in cfg.media:
            series = {f"fin {f}": [trace_path(run, m, f, k, "csv") for k in range(cfg.sessions)] for f in cfg.fins}
            paths.append(render_curves(series, out / f"curves_{m}.svg", title=m, ylabel=f"reward ({unit})"))
    elif man.kind == "transfer":
        with open(run / "transfer.csv", newline="") as fh:
            head, *rows = list(csv.reader(fh))
        for f in cfg.fins:
            fr = [r for r in rows if r[0] == f]
            curves = {}
            for j, col in enumerate(head[3:]):
                by_s = {}
                for r in fr:
                    by_s.setdefault(int(r[1]), {})[int(r[2])] = float(r[3 + j])
                curves[col] = np.array([[by_s[s][i] for i in sorted(by_s[s])] for s in sorted(by_s)])
            paths.append(plot_bands(curves, out / f"transfer_{f}.svg", title=f"fin {f}", ylabel=f"reward ({unit})"))
    elif man.kind == "synthetic":
        with open(run / "synthetic.csv", newline="") as fh:
            _, *rows = list(csv.reader(fh))
        for st in STUBS:
            sub = [r for r in rows if r[0] == st]
            curves = {}
            for m in METHODS:
                by_s = {}
                for r in sub:
                    if r[1] == m:
                        by_s.setdefault(int(r[2]), {})[int(r[3])] = float(r[4])
                if by_s:
                    curves[m] = np.array([[by_s[s][i] for i in sorted(by_s[s])] for s in sorted(by_s)])
            if curves:
                paths.append(plot_bands(curves, out / f"synthetic_{st}.svg", title=st))
    else:
        raise ValueError(f"{mpath}: unknown run kind {man.kind!r}")
    return paths
