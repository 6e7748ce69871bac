"""Experiment orchestration: seeded replications across policies, per-round
CSV records, aggregate regret curves, and plot-data / metadata persistence.

Seeding: every (replication, policy) pair owns one stream seeded with
derive_seed(master_seed, replication, policy_tag); that stream feeds the
policy's own draws and its reward noise. Contexts come from a separate stream
seeded with derive_seed(master_seed, replication, "env") and are shared by
all policies in the replication, so adding or removing policies never
perturbs anyone else's run.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from typing import Iterator

import numpy as np

from . import environment, policies
from .errors import ConfigError, ConsistencyError, ReplicationError
from .policies import CfMvts, MvtsD, MvtsDn, TsA, UniformRandom, dn_constants, ts_a_scale
from .sampling import NOISE_TAGS, NoiseKind, RngStream, derive_seed

CSV_HEADER = "replication,round,policy,chosen_arm,optimal_arm,reward,regret,cum_regret"

WORKERS_ENV_VAR = "MVBANDIT_WORKERS"

_REQUIRED_KEYS = ("n_arms", "dim", "horizon", "rho", "replications", "policies", "master_seed")


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one experiment; flat, picklable, text round-trip."""

    n_arms: int
    dim: int
    horizon: int
    rho: float
    replications: int
    policies: tuple[str, ...]
    master_seed: int
    noise: str = "gaussian"
    trunc_lo: float = -5.0
    trunc_hi: float = 5.0
    r_sub_gaussian: float = 1.0
    epsilon: float = 0.25
    delta: float = 0.1
    mvts_dn_u: float | None = None
    mvts_dn_v: float | None = None
    ts_a_v: float | None = None
    truths: str = "builtin"
    allow_large_mean: bool = False

    def __post_init__(self):
        object.__setattr__(self, "policies", tuple(self.policies))
        if self.n_arms < 1 or self.dim < 1:
            raise ConfigError(f"need n_arms >= 1 and dim >= 1, got {self.n_arms}, {self.dim}")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.replications < 1:
            raise ConfigError(f"replications must be >= 1, got {self.replications}")
        if self.rho < 0.0:
            raise ConfigError(f"rho must be >= 0, got {self.rho}")
        if not self.policies:
            raise ConfigError("policy list is empty")
        for tag in self.policies:
            if tag not in policies.POLICY_TAGS:
                raise ConfigError(f"unknown policy {tag!r}, expected one of {policies.POLICY_TAGS}")
        if len(set(self.policies)) != len(self.policies):
            raise ConfigError(f"duplicate policy tags in {self.policies}")
        if self.noise not in NOISE_TAGS:
            raise ConfigError(f"unknown noise kind {self.noise!r}, expected one of {NOISE_TAGS}")
        if not 0 <= self.master_seed < (1 << 64):
            raise ConfigError(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}")

    @property
    def noise_kind(self) -> NoiseKind:
        return NoiseKind(self.noise, self.trunc_lo, self.trunc_hi)


def resolve_truths(config: ExperimentConfig) -> list[environment.ArmTruth]:
    """Arm truths for a config, checking K and d against the source."""
    if config.truths == "builtin":
        truths = environment.builtin_truths(config.noise_kind)
    else:
        truths = environment.load_truths(config.truths, config.noise_kind,
                                         config.allow_large_mean)
    if len(truths) != config.n_arms:
        raise ConfigError(f"truth source has {len(truths)} arms but config says {config.n_arms}")
    if truths[0].mu.size != config.dim:
        raise ConfigError(f"truth source has dim {truths[0].mu.size} but config says {config.dim}")
    return truths


def resolve_constants(config: ExperimentConfig) -> dict[str, dict[str, float]]:
    """Per-policy constants actually used, deriving defaults where needed."""
    out: dict[str, dict[str, float]] = {}
    for tag in config.policies:
        if tag == "mvts_dn":
            if config.mvts_dn_u is None or config.mvts_dn_v is None:
                u, v = dn_constants(config.r_sub_gaussian, config.epsilon, config.delta,
                                    config.dim, config.n_arms)
                u = config.mvts_dn_u if config.mvts_dn_u is not None else u
                v = config.mvts_dn_v if config.mvts_dn_v is not None else v
            else:
                u, v = config.mvts_dn_u, config.mvts_dn_v
            out[tag] = {"u": u, "v": v}
        elif tag == "ts_a":
            v = config.ts_a_v
            if v is None:
                v = ts_a_scale(config.r_sub_gaussian, config.epsilon, config.delta, config.dim)
            out[tag] = {"v": v}
        elif tag in ("mvts_d", "cf_mvts"):
            out[tag] = {"rho": config.rho}
        else:
            out[tag] = {}
    return out


def make_policy(config: ExperimentConfig, tag: str, sampler: RngStream):
    """Instantiate one policy from the config with its resolved constants."""
    consts = resolve_constants(config).get(tag, {})
    if tag == "mvts_d":
        return MvtsD(config.n_arms, config.dim, config.rho, sampler)
    if tag == "mvts_dn":
        return MvtsDn(config.n_arms, config.dim, config.rho, consts["u"], consts["v"], sampler)
    if tag == "ts_a":
        return TsA(config.n_arms, config.dim, consts["v"], sampler)
    if tag == "cf_mvts":
        return CfMvts(config.n_arms, config.rho, sampler)
    if tag == "uniform":
        return UniformRandom(config.n_arms, sampler)
    raise ConfigError(f"unknown policy {tag!r}")


# -- config text format -------------------------------------------------------

_BOOL_WORDS = {"true": True, "false": False, "yes": True, "no": False, "1": True, "0": False}


def config_to_text(config: ExperimentConfig) -> str:
    """Flat key = value rendering; parse_config_text inverts it exactly."""
    lines = []
    for f in fields(config):
        value = getattr(config, f.name)
        if value is None:
            continue
        if f.name == "policies":
            value = ",".join(value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse the flat key = value format (``#`` starts a comment)."""
    field_types = {f.name: f for f in fields(ExperimentConfig)}
    seen: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in field_types:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"config line {lineno}: duplicate key {key!r}")
        seen[key] = _parse_value(key, value, lineno)
    missing = [k for k in _REQUIRED_KEYS if k not in seen]
    if missing:
        raise ConfigError(f"config is missing required keys: {', '.join(missing)}")
    return ExperimentConfig(**seen)


def _parse_value(key: str, value: str, lineno: int):
    try:
        if key == "policies":
            return tuple(tag.strip() for tag in value.split(",") if tag.strip())
        if key in ("n_arms", "dim", "horizon", "replications", "master_seed"):
            return int(value)
        if key == "allow_large_mean":
            return _BOOL_WORDS[value.lower()]
        if key in ("noise", "truths"):
            return value
        return float(value)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"config line {lineno}: bad value for {key!r}: {value!r}") from exc


def load_config(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


# -- records and traces --------------------------------------------------------

@dataclass(frozen=True)
class RoundRecord:
    """One logged simulation step; round 0 rows are the forced initialization
    pulls and carry zero regret by convention (they are outside the regret sum)."""

    replication: int
    round: int
    policy: str
    chosen_arm: int
    optimal_arm: int
    reward: float
    regret: float
    cum_regret: float


@dataclass
class PolicyTrace:
    """Array-backed log of one policy within one replication.

    Index layout: the first n_arms entries are the round-0 initialization
    pulls, followed by rounds 1..horizon in order.
    """

    policy: str
    rounds: np.ndarray
    chosen: np.ndarray
    optimal: np.ndarray
    rewards: np.ndarray
    regrets: np.ndarray
    cum_regrets: np.ndarray

    def records(self, replication: int) -> Iterator[RoundRecord]:
        for i in range(self.rounds.size):
            yield RoundRecord(
                replication=replication,
                round=int(self.rounds[i]),
                policy=self.policy,
                chosen_arm=int(self.chosen[i]),
                optimal_arm=int(self.optimal[i]),
                reward=float(self.rewards[i]),
                regret=float(self.regrets[i]),
                cum_regret=float(self.cum_regrets[i]),
            )


@dataclass
class ReplicationResult:
    replication: int
    traces: list[PolicyTrace]
    final_states: dict[str, list[dict]]

    def records(self) -> Iterator[RoundRecord]:
        for trace in self.traces:
            yield from trace.records(self.replication)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    replications: list[ReplicationResult]
    curves: dict[str, np.ndarray]

    def records(self) -> Iterator[RoundRecord]:
        for rep in self.replications:
            yield from rep.records()


def run_replication(config: ExperimentConfig, replication: int,
                    truths: list[environment.ArmTruth] | None = None) -> ReplicationResult:
    """Simulate one seeded replication of every configured policy.

    All policies see the same per-round contexts; each draws its own rewards
    and Thompson samples from its own stream. Round 0 forces one pull of
    every arm per policy (logged with round = 0, regret 0); rounds 1..horizon
    are scored against the exact mean-variance oracle.
    """
    if truths is None:
        truths = resolve_truths(config)
    n_arms, horizon, rho = config.n_arms, config.horizon, config.rho
    mu_matrix = np.array([t.mu for t in truths])
    sigma2s = np.array([t.sigma2 for t in truths])

    env_rng = RngStream(derive_seed(config.master_seed, replication, "env"))
    policy_list = [
        make_policy(config, tag, RngStream(derive_seed(config.master_seed, replication, tag)))
        for tag in config.policies
    ]

    total = n_arms + horizon
    traces = [
        PolicyTrace(policy=p.tag,
                    rounds=np.empty(total, dtype=np.int64),
                    chosen=np.empty(total, dtype=np.int64),
                    optimal=np.empty(total, dtype=np.int64),
                    rewards=np.empty(total),
                    regrets=np.empty(total),
                    cum_regrets=np.empty(total))
        for p in policy_list
    ]

    contexts0 = environment.gen_contexts(n_arms, config.dim, env_rng)
    optimal0 = int(np.argmax(environment.mv_scores(contexts0, mu_matrix, sigma2s, rho)))
    for policy, trace in zip(policy_list, traces):
        rewards0 = np.array([
            environment.draw_reward(truths[i], contexts0[i], policy.sampler)
            for i in range(n_arms)
        ])
        policy.start(contexts0, rewards0)
        trace.rounds[:n_arms] = 0
        trace.chosen[:n_arms] = np.arange(n_arms)
        trace.optimal[:n_arms] = optimal0
        trace.rewards[:n_arms] = rewards0
        trace.regrets[:n_arms] = 0.0
        trace.cum_regrets[:n_arms] = 0.0

    cum = [0.0] * len(policy_list)
    for t in range(1, horizon + 1):
        contexts = environment.gen_contexts(n_arms, config.dim, env_rng)
        scores = environment.mv_scores(contexts, mu_matrix, sigma2s, rho)
        optimal = int(np.argmax(scores))
        best = scores[optimal]
        row = n_arms + t - 1
        for k, (policy, trace) in enumerate(zip(policy_list, traces)):
            arm = policy.choose(contexts).arm
            reward = environment.draw_reward(truths[arm], contexts[arm], policy.sampler)
            policy.update(arm, contexts[arm], reward)
            step_regret = float(best - scores[arm])
            if step_regret < 0.0:
                raise ConsistencyError(
                    f"negative regret {step_regret!r} at round {t} for {policy.tag}")
            cum[k] += step_regret
            trace.rounds[row] = t
            trace.chosen[row] = arm
            trace.optimal[row] = optimal
            trace.rewards[row] = reward
            trace.regrets[row] = step_regret
            trace.cum_regrets[row] = cum[k]

    final_states = {p.tag: p.state_snapshot() for p in policy_list}
    return ReplicationResult(replication=replication, traces=traces,
                             final_states=final_states)


def _replication_task(args: tuple[ExperimentConfig, int]) -> ReplicationResult:
    config, replication = args
    try:
        return run_replication(config, replication)
    except Exception as exc:
        raise ReplicationError(f"replication {replication} failed: {exc}") from exc


def resolve_workers(workers: int | None = None) -> int:
    """Worker count: explicit argument, else the MVBANDIT_WORKERS environment
    variable, else 1 (serial)."""
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV_VAR, "1"))
    if workers < 1:
        raise ConfigError(f"worker count must be >= 1, got {workers}")
    return workers


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> ExperimentResult:
    """Run all replications and aggregate mean cumulative-regret curves.

    Replications are independent; with workers > 1 they execute in a process
    pool. Results are assembled in replication order, so output is identical
    for any worker count.
    """
    resolve_truths(config)  # fail fast on truth/config mismatch
    workers = resolve_workers(workers)
    tasks = [(config, r) for r in range(config.replications)]
    if workers == 1 or config.replications == 1:
        results = [_replication_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replication_task, tasks))
    results.sort(key=lambda rr: rr.replication)

    n_arms = config.n_arms
    curves: dict[str, np.ndarray] = {}
    for k, tag in enumerate(config.policies):
        stack = np.stack([rr.traces[k].cum_regrets[n_arms:] for rr in results])
        curves[tag] = stack.mean(axis=0)
    return ExperimentResult(config=config, replications=results, curves=curves)


# -- persistence ----------------------------------------------------------------

def _iter_records(source) -> Iterator[RoundRecord]:
    if isinstance(source, (ExperimentResult, ReplicationResult)):
        yield from source.records()
        return
    for item in source:
        if isinstance(item, ReplicationResult):
            yield from item.records()
        else:
            yield item


def write_csv(source, path: str) -> None:
    """Write records as CSV with the fixed header; reals use 17 significant
    digits so parsing the file back reproduces them exactly.

    source may be an ExperimentResult, a ReplicationResult (or list of them),
    or any iterable of RoundRecord.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        if isinstance(source, (ExperimentResult, ReplicationResult)):
            reps = source.replications if isinstance(source, ExperimentResult) else [source]
            for rr in reps:
                for trace in rr.traces:
                    _write_trace_rows(fh, rr.replication, trace)
        else:
            for rec in _iter_records(source):
                fh.write(f"{rec.replication},{rec.round},{rec.policy},{rec.chosen_arm},"
                         f"{rec.optimal_arm},{rec.reward:.17g},{rec.regret:.17g},"
                         f"{rec.cum_regret:.17g}\n")


def _write_trace_rows(fh, replication: int, trace: PolicyTrace) -> None:
    rounds = trace.rounds.tolist()
    chosen = trace.chosen.tolist()
    optimal = trace.optimal.tolist()
    rewards = trace.rewards.tolist()
    regrets = trace.regrets.tolist()
    cums = trace.cum_regrets.tolist()
    tag = trace.policy
    fh.writelines(
        f"{replication},{rounds[i]},{tag},{chosen[i]},{optimal[i]},"
        f"{rewards[i]:.17g},{regrets[i]:.17g},{cums[i]:.17g}\n"
        for i in range(len(rounds))
    )


def read_csv(path: str) -> list[RoundRecord]:
    """Parse a CSV written by write_csv back into records."""
    records = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != CSV_HEADER:
            raise ConfigError(f"unexpected CSV header: {header!r}")
        for line in fh:
            rep, rnd, tag, chosen, optimal, reward, reg, cum = line.rstrip("\n").split(",")
            records.append(RoundRecord(
                replication=int(rep), round=int(rnd), policy=tag,
                chosen_arm=int(chosen), optimal_arm=int(optimal),
                reward=float(reward), regret=float(reg), cum_regret=float(cum)))
    return records


def emit_plot_data(curves: dict[str, np.ndarray], path: str) -> None:
    """Whitespace-separated plot data: column 1 is the round, then one column
    of mean cumulative regret per policy."""
    tags = list(curves)
    arrays = [np.asarray(curves[tag], dtype=float) for tag in tags]
    if len({a.size for a in arrays}) > 1:
        raise ValueError("curves have mismatched lengths")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# round " + " ".join(tags) + "\n")
        columns = [a.tolist() for a in arrays]
        for t in range(arrays[0].size):
            vals = " ".join(f"{col[t]:.17g}" for col in columns)
            fh.write(f"{t + 1} {vals}\n")


def read_plot_data(path: str) -> tuple[list[str], np.ndarray]:
    """Inverse of emit_plot_data: (policy tags, data matrix incl. round column)."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("# round"):
            raise ConfigError(f"unexpected plot-data header: {header!r}")
        tags = header.split()[2:]
        data = np.loadtxt(fh, ndmin=2)
    return tags, data


def write_metadata(config: ExperimentConfig, path: str) -> None:
    """Config sidecar: comment lines with resolved per-policy constants and
    the seeding scheme, then the config in its own text format (so the file
    parses back into the identical config)."""
    lines = ["# mvbandit run metadata",
             "# seeding: policy stream = derive_seed(master_seed, replication, policy_tag),",
             "#          context stream = derive_seed(master_seed, replication, 'env');",
             "#          reward noise is drawn from each policy's own stream (independent across policies)"]
    for tag, consts in resolve_constants(config).items():
        if consts:
            rendered = ", ".join(f"{k}={v!r}" for k, v in consts.items())
            lines.append(f"# constants[{tag}]: {rendered}")
    text = "\n".join(lines) + "\n" + config_to_text(config)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def run_to_directory(config: ExperimentConfig, out_dir: str,
                     workers: int | None = None) -> ExperimentResult:
    """Run an experiment and persist everything under out_dir: records.csv,
    curves.dat, metadata.txt, and final_states.json (last replication)."""
    os.makedirs(out_dir, exist_ok=True)
    result = run_experiment(config, workers=workers)
    write_csv(result, os.path.join(out_dir, "records.csv"))
    emit_plot_data(result.curves, os.path.join(out_dir, "curves.dat"))
    write_metadata(config, os.path.join(out_dir, "metadata.txt"))
    with open(os.path.join(out_dir, "final_states.json"), "w", encoding="utf-8") as fh:
        json.dump(result.replications[-1].final_states, fh, indent=1)
    return result
