"""Experiment orchestration: config files, ingestion, runs, comparison.

Configs are flat UTF-8 `key = value` text; unknown keys are rejected so
typos fail loudly. A (config, seed) pair determines every byte of the
learning-curve CSV. All result files are written atomically.
"""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .agent import (CurvePoint, Environment, TrainConfig, evaluate_policy,
                    save_checkpoint, train)
from .graph import KnowledgeGraph, build_graph, _parse_tsv
from .metrics import EvaluationReport, build_report, wilcoxon_signed_rank
from .simulator import fit_mf, popularity_table, split_users

logger = logging.getLogger("kgrec.experiments")

ETA_CHOICES = (0.0, 0.1, 0.2)


@dataclass
class ExperimentConfig:
    """Everything a run needs, addressable from a flat config file."""

    ratings: str = ""
    triples: str = ""
    links: str = ""
    out_dir: str = "runs/exp"
    seeds: tuple[int, ...] = (0, 1, 2)
    seed: int = 0
    eta: float = 0.1
    horizon: int = 32
    hops: int = 2
    candidate_size: str = "1000"
    candidate_sizes: str = "5,10,20,50,all"
    kg_embeddings: bool = True
    gcn_propagation: bool = True
    candidate_selection: bool = True
    train_fraction: float = 0.8
    simulator_fit_scope: str = "all"
    sim_dim: int = 20
    sim_epochs: int = 50
    sim_lr: float = 0.01
    sim_reg: float = 0.02
    rating_min: float | None = None
    rating_max: float | None = None
    hit_threshold: float | None = None
    min_user_interactions: int = 0
    binarize_threshold: float | None = None
    budget: int = 10_000
    eval_every: int = 1000
    gamma: float = 0.99
    eval_gamma: float | None = None
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_fraction: float = 0.2
    tau: float = 0.01
    batch_size: int = 128
    buffer_capacity: int = 10_000
    learning_rate: float = 0.001
    embedding_dim: int = 50
    hidden_width: int = 64
    updates_per_episode: int = 1
    value_input: str = "state"
    advantage_center: bool = False
    transe_epochs: int = 100
    transe_margin: float = 1.0
    transe_negatives: int = 1
    transe_lr: float = 0.001
    init_mf_epochs: int = 50
    init_mf_lr: float = 0.01
    init_mf_reg: float = 0.02

    def validate(self) -> None:
        if not self.ratings:
            raise ValueError("config needs a ratings path")
        if not any(abs(self.eta - v) < 1e-12 for v in ETA_CHOICES):
            raise ValueError(f"eta must be one of {ETA_CHOICES}, got {self.eta}")
        if self.kg_embeddings and not (self.triples and self.links):
            raise ValueError("kg_embeddings requires triples and links paths")
        if self.simulator_fit_scope not in ("all", "train"):
            raise ValueError(f"simulator_fit_scope must be 'all' or 'train', "
                             f"got {self.simulator_fit_scope!r}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if not self.seeds:
            raise ValueError("need at least one run seed")
        if self.budget < 1 or self.eval_every < 1:
            raise ValueError("budget and eval_every must be positive")
        if self.min_user_interactions < 0:
            raise ValueError("min_user_interactions must be >= 0")
        _parse_size(self.candidate_size)
        parse_sizes(self.candidate_sizes)
        for path in (self.ratings, self.triples, self.links):
            if path and not os.path.exists(path):
                raise ValueError(f"referenced path does not exist: {path}")
        self.train_config().validate()

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            gamma=self.gamma, epsilon_start=self.epsilon_start, epsilon_end=self.epsilon_end,
            epsilon_decay_fraction=self.epsilon_decay_fraction, tau=self.tau,
            batch_size=self.batch_size, buffer_capacity=self.buffer_capacity,
            learning_rate=self.learning_rate, hops=self.hops,
            candidate_size=_parse_size(self.candidate_size), horizon=self.horizon,
            embedding_dim=self.embedding_dim, hidden_width=self.hidden_width,
            updates_per_episode=self.updates_per_episode, value_input=self.value_input,
            advantage_center=self.advantage_center, kg_embeddings=self.kg_embeddings,
            gcn_propagation=self.gcn_propagation, candidate_selection=self.candidate_selection,
            interaction_budget=self.budget, eval_every=self.eval_every,
            eval_gamma=self.eval_gamma, transe_epochs=self.transe_epochs,
            transe_margin=self.transe_margin, transe_negatives=self.transe_negatives,
            transe_lr=self.transe_lr, init_mf_epochs=self.init_mf_epochs,
            init_mf_lr=self.init_mf_lr, init_mf_reg=self.init_mf_reg)

    def canonical_text(self) -> str:
        """Stable `key = value` rendering; parsing it back round-trips."""
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            lines.append(f"{f.name} = {_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode("utf-8")).hexdigest()[:16]


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def _parse_size(token: str) -> int | None:
    token = str(token).strip()
    if token == "all":
        return None
    size = int(token)
    if size < 1:
        raise ValueError(f"candidate size must be positive or 'all', got {token!r}")
    return size


def parse_sizes(text: str) -> list[int | None]:
    sizes = [_parse_size(tok) for tok in str(text).split(",") if tok.strip()]
    if not sizes:
        raise ValueError("empty candidate size list")
    return sizes


_BOOL_TOKENS = {"true": True, "false": False, "1": True, "0": False,
                "yes": True, "no": False}

_PATH_KEYS = ("ratings", "triples", "links", "out_dir")


def _cast(name: str, kind: str, value: str):
    if kind in ("float | None", "int | None") and value.lower() in ("none", "auto"):
        return None
    try:
        if kind == "int":
            return int(value)
        if kind in ("float", "float | None"):
            return float(value)
        if kind == "bool":
            token = value.lower()
            if token not in _BOOL_TOKENS:
                raise ValueError
            return _BOOL_TOKENS[token]
        if kind == "tuple[int, ...]":
            return tuple(int(tok) for tok in value.split(",") if tok.strip())
        return value
    except ValueError:
        raise ValueError(f"cannot parse {value!r} for key {name!r}") from None


def parse_config_text(text: str, base_dir: str = ".", source: str = "<config>") -> ExperimentConfig:
    """Parse flat `key = value` config text. Unknown keys are rejected;
    relative dataset paths resolve against base_dir."""
    kinds = {f.name: f.type for f in fields(ExperimentConfig)}
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in kinds:
            raise ValueError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ValueError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = _cast(key, kinds[key], value)
    for key in _PATH_KEYS:
        if key in values and values[key]:
            # absolute so the snapshot re-parses from any directory
            values[key] = os.path.abspath(os.path.join(base_dir, values[key]))
    return ExperimentConfig(**values)


def parse_config(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config_text(text, base_dir=os.path.dirname(os.path.abspath(path)), source=path)


# -- ingestion -----------------------------------------------------------


@dataclass
class Dataset:
    """Dense-id interactions plus the (optional) aligned knowledge graph."""

    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    n_users: int
    n_items: int
    graph: KnowledgeGraph | None
    linked_items: np.ndarray
    unlinked_count: int
    user_tokens: list[str]
    item_tokens: list[str]


def ingest(config: ExperimentConfig) -> Dataset:
    """Load and filter the ratings file, then attach the graph.

    Rows may carry an optional fourth timestamp column used only for
    ordering. The min-interaction filter drops sparse users before ids
    are assigned; binarization maps ratings to {0, 1} around a threshold.
    Items with no graph link are retained in the catalog but counted and
    excluded from graph-based candidate selection.
    """
    rows = []
    with open(config.ratings, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) not in (3, 4):
                raise ValueError(f"{config.ratings}:{lineno}: expected "
                                 f"user<TAB>item<TAB>rating[<TAB>timestamp], got {len(parts)} fields")
            try:
                rating = float(parts[2])
                stamp = float(parts[3]) if len(parts) == 4 else 0.0
            except ValueError:
                raise ValueError(f"{config.ratings}:{lineno}: non-numeric rating or timestamp") from None
            rows.append((stamp, lineno, parts[0], parts[1], rating))
    if not rows:
        raise ValueError(f"{config.ratings}: no interactions")
    rows.sort(key=lambda row: (row[0], row[1]))

    if config.min_user_interactions > 0:
        counts: dict[str, int] = {}
        for _, _, user, _, _ in rows:
            counts[user] = counts.get(user, 0) + 1
        before = len({user for _, _, user, _, _ in rows})
        rows = [row for row in rows if counts[row[2]] >= config.min_user_interactions]
        if not rows:
            raise ValueError(f"min_user_interactions={config.min_user_interactions} "
                             "filtered out every user")
        kept = len({user for _, _, user, _, _ in rows})
        if kept < before:
            logger.info("min-interaction filter dropped %d of %d users", before - kept, before)

    user_ids: dict[str, int] = {}
    item_ids: dict[str, int] = {}
    users, items, ratings = [], [], []
    for _, _, user, item, rating in rows:
        users.append(user_ids.setdefault(user, len(user_ids)))
        items.append(item_ids.setdefault(item, len(item_ids)))
        if config.binarize_threshold is not None:
            rating = 1.0 if rating >= config.binarize_threshold else 0.0
        ratings.append(rating)

    graph = None
    linked = np.empty(0, dtype=np.int64)
    unlinked_count = len(item_ids)
    if config.triples and config.links:
        triple_rows = _parse_tsv(config.triples, 3, "a triple")
        link_rows = _parse_tsv(config.links, 2, "a link")
        links: dict[int, str] = {}
        for item_tok, ent_tok in link_rows:
            dense = item_ids.get(item_tok)
            if dense is None:
                logger.info("link for item %r ignored: item absent from interactions", item_tok)
                continue
            if dense in links and links[dense] != ent_tok:
                raise ValueError(f"link map not a function: item {item_tok!r} "
                                 "linked to two entities")
            links[dense] = ent_tok
        graph = build_graph(triple_rows, links)
        linked = np.asarray(sorted(links), dtype=np.int64)
        unlinked_count = len(item_ids) - len(links)
        if unlinked_count:
            logger.warning("%d of %d items have no graph link; they stay in the catalog "
                           "but not in graph candidate sets", unlinked_count, len(item_ids))

    return Dataset(users=np.asarray(users, dtype=np.int64),
                   items=np.asarray(items, dtype=np.int64),
                   ratings=np.asarray(ratings, dtype=np.float64),
                   n_users=len(user_ids), n_items=len(item_ids), graph=graph,
                   linked_items=linked, unlinked_count=unlinked_count,
                   user_tokens=list(user_ids), item_tokens=list(item_ids))


def build_environment(ds: Dataset, config: ExperimentConfig) -> Environment:
    """Split users, fit the feedback simulator, assemble the world.

    The action universe is the linked item set when graph embeddings are
    on (there is no representation to score unlinked items with),
    otherwise the whole catalog; preference denominators always count
    the whole catalog.
    """
    all_users = np.arange(ds.n_users)
    train_users, test_users = split_users(all_users, config.train_fraction, seed=config.seed)
    if config.simulator_fit_scope == "train":
        mask = np.isin(ds.users, train_users)
        if not mask.any():
            raise ValueError("no training-user interactions to fit the simulator on")
        fit_u, fit_i, fit_r = ds.users[mask], ds.items[mask], ds.ratings[mask]
    else:
        fit_u, fit_i, fit_r = ds.users, ds.items, ds.ratings
    model = fit_mf(fit_u, fit_i, fit_r, n_users=ds.n_users, n_items=ds.n_items,
                   dim=config.sim_dim, epochs=config.sim_epochs, learning_rate=config.sim_lr,
                   reg=config.sim_reg, seed=np.random.SeedSequence([config.seed, 1]),
                   rating_min=config.rating_min, rating_max=config.rating_max,
                   hit_threshold=config.hit_threshold, eta=config.eta, horizon=config.horizon)
    catalog = np.arange(ds.n_items)
    universe = ds.linked_items if config.kg_embeddings else catalog
    if len(universe) < config.horizon:
        raise ValueError(f"action universe has {len(universe)} items; "
                         f"episodes need at least horizon={config.horizon}")
    train_mask = np.isin(ds.users, train_users)
    if not train_mask.any():
        raise ValueError("empty training split")
    popularity = popularity_table(ds.items[train_mask], restrict_to=universe)
    return Environment(model=model, popularity=popularity, train_users=train_users,
                       test_users=test_users, items=np.asarray(universe, dtype=np.int64),
                       train_interactions=(ds.users[train_mask], ds.items[train_mask],
                                           ds.ratings[train_mask]),
                       catalog=catalog)


# -- run orchestration ---------------------------------------------------


@dataclass
class RunArtifacts:
    seed: int
    run_dir: str
    curve_path: str
    report_path: str
    per_user_path: str
    checkpoint_path: str
    config_hash: str
    report: EvaluationReport
    curve: list[CurvePoint] = field(default_factory=list)


def curve_csv_text(curve: list[CurvePoint], seed: int) -> str:
    lines = ["interactions,reward,precision,recall,seed"]
    for pt in curve:
        lines.append(f"{pt.interactions},{pt.reward!r},{pt.precision!r},{pt.recall!r},{seed}")
    return "\n".join(lines) + "\n"


def read_curve(path: str) -> list[CurvePoint]:
    points = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "interactions,reward,precision,recall,seed":
            raise ValueError(f"{path}: unexpected curve header {header!r}")
        for line in fh:
            if not line.strip():
                continue
            inter, reward, precision, recall, _ = line.strip().split(",")
            points.append(CurvePoint(interactions=int(inter), reward=float(reward),
                                     precision=float(precision), recall=float(recall)))
    return points


def interactions_to_threshold(curve: list[CurvePoint], threshold: float) -> int | None:
    """Interaction count at the FIRST crossing of the reward threshold;
    None when the curve never reaches it."""
    for pt in curve:
        if pt.reward >= threshold:
            return pt.interactions
    return None


def _atomic_write(path: str, text: str) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def run_single_seed(env: Environment, graph: KnowledgeGraph | None,
                    config: ExperimentConfig, seed: int, run_dir: str) -> RunArtifacts:
    os.makedirs(run_dir, exist_ok=True)
    cfg = config.train_config()
    cfg_hash = config.config_hash()
    params, target, curve = train(env, graph, cfg, seed)
    curve_path = os.path.join(run_dir, "curve.csv")
    _atomic_write(curve_path, curve_csv_text(curve, seed))
    logs = evaluate_policy(params, env, graph, cfg, mode="greedy")
    report = build_report(env.test_users, logs, env.test_preference_counts(),
                          cfg.resolved_eval_gamma(),
                          interactions=curve[-1].interactions, config_hash=cfg_hash)
    report_path = os.path.join(run_dir, "report.txt")
    per_user_path = os.path.join(run_dir, "report_users.csv")
    _atomic_write(report_path, report.flat_text())
    _atomic_write(per_user_path, report.per_user_csv())
    checkpoint_path = os.path.join(run_dir, "checkpoint.npz")
    save_checkpoint(checkpoint_path, params, target, cfg, config_hash=cfg_hash,
                    interactions=curve[-1].interactions)
    _atomic_write(os.path.join(run_dir, "config.snapshot"), config.canonical_text())
    return RunArtifacts(seed=seed, run_dir=run_dir, curve_path=curve_path,
                        report_path=report_path, per_user_path=per_user_path,
                        checkpoint_path=checkpoint_path, config_hash=cfg_hash,
                        report=report, curve=curve)


def run_experiment(config: ExperimentConfig) -> list[RunArtifacts]:
    """Train/evaluate once per seed; write per-seed artifacts plus an
    aggregate CSV with mean and standard-deviation rows."""
    config.validate()
    ds = ingest(config)
    env = build_environment(ds, config)
    graph = ds.graph
    os.makedirs(config.out_dir, exist_ok=True)
    _atomic_write(os.path.join(config.out_dir, "config.snapshot"), config.canonical_text())
    artifacts = []
    for seed in config.seeds:
        run_dir = os.path.join(config.out_dir, f"seed_{seed}")
        logger.info("running seed %d -> %s", seed, run_dir)
        artifacts.append(run_single_seed(env, graph, config, seed, run_dir))
    rows = ["seed,reward,precision,recall"]
    finals = np.array([[a.report.average_reward, a.report.precision, a.report.recall]
                       for a in artifacts])
    for a in artifacts:
        rows.append(f"{a.seed},{a.report.average_reward!r},"
                    f"{a.report.precision!r},{a.report.recall!r}")
    mean = [float(v) for v in finals.mean(axis=0)]
    std = [float(v) for v in finals.std(axis=0)]
    rows.append(f"mean,{mean[0]!r},{mean[1]!r},{mean[2]!r}")
    rows.append(f"std,{std[0]!r},{std[1]!r},{std[2]!r}")
    _atomic_write(os.path.join(config.out_dir, "aggregate.csv"), "\n".join(rows) + "\n")
    return artifacts


# -- comparison ----------------------------------------------------------


def _read_per_user(path: str) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    users, rewards, precisions, recalls = [], [], [], []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "user,reward,precision,recall":
            raise ValueError(f"{path}: unexpected per-user header {header!r}")
        for line in fh:
            if not line.strip():
                continue
            user, reward, precision, recall = line.strip().split(",")
            users.append(int(user))
            rewards.append(float(reward))
            precisions.append(float(precision))
            recalls.append(float(recall))
    return (np.asarray(users), np.asarray(rewards), np.asarray(precisions),
            np.asarray(recalls))


def _seed_dirs(run_dir: str) -> list[str]:
    out = []
    for name in sorted(os.listdir(run_dir)):
        path = os.path.join(run_dir, name)
        if name.startswith("seed_") and os.path.isdir(path):
            out.append(path)
    if not out:
        raise ValueError(f"{run_dir}: no seed_* run directories")
    return out


@dataclass(frozen=True)
class MetricComparison:
    metric: str
    mean_a: float
    mean_b: float
    statistic: float
    p_value: float
    significant: bool


def compare(dir_a: str, dir_b: str, alpha: float = 0.05) -> list[MetricComparison]:
    """Paired per-user Wilcoxon over matching seed runs of two experiments.

    Pairs are (seed position, user) observations; both experiments must
    hold the same number of seed runs over identical user sets.
    """
    dirs_a, dirs_b = _seed_dirs(dir_a), _seed_dirs(dir_b)
    if len(dirs_a) != len(dirs_b):
        raise ValueError(f"seed run count mismatch: {len(dirs_a)} vs {len(dirs_b)}")
    columns_a: list[list[np.ndarray]] = [[], [], []]
    columns_b: list[list[np.ndarray]] = [[], [], []]
    for da, db in zip(dirs_a, dirs_b):
        ua, *vals_a = _read_per_user(os.path.join(da, "report_users.csv"))
        ub, *vals_b = _read_per_user(os.path.join(db, "report_users.csv"))
        if ua.shape != ub.shape or not np.array_equal(ua, ub):
            raise ValueError(f"user sets differ between {da} and {db}")
        for k in range(3):
            columns_a[k].append(vals_a[k])
            columns_b[k].append(vals_b[k])
    out = []
    for k, name in enumerate(("reward", "precision", "recall")):
        a = np.concatenate(columns_a[k])
        b = np.concatenate(columns_b[k])
        stat, p = wilcoxon_signed_rank(a, b)
        out.append(MetricComparison(metric=name, mean_a=float(a.mean()),
                                    mean_b=float(b.mean()), statistic=stat,
                                    p_value=p, significant=bool(p < alpha)))
    return out


def comparison_text(results: list[MetricComparison]) -> str:
    lines = ["metric,mean_a,mean_b,statistic,p_value,significant"]
    for r in results:
        flag = "yes" if r.significant else "no"
        lines.append(f"{r.metric},{r.mean_a!r},{r.mean_b!r},{r.statistic!r},{r.p_value!r},{flag}")
    return "\n".join(lines) + "\n"


# -- candidate-size sweep -------------------------------------------------


def sweep_candidates(config: ExperimentConfig, sizes: list[int | None] | None = None
                     ) -> dict[str, list[RunArtifacts]]:
    """Re-run the experiment across candidate sizes (Fig.-style sweep).

    Each size gets its own out_dir suffix; returns artifacts keyed by the
    size token ('all' for the unrestricted run). A sweep.csv summary with
    one row per (size, seed) final evaluation lands in out_dir.
    """
    config.validate()
    if not config.candidate_selection:
        raise ValueError("candidate sweep needs candidate_selection enabled")
    if sizes is None:
        sizes = parse_sizes(config.candidate_sizes)
    results: dict[str, list[RunArtifacts]] = {}
    rows = ["size,seed,reward,precision,recall"]
    os.makedirs(config.out_dir, exist_ok=True)
    for size in sizes:
        token = "all" if size is None else str(size)
        sub = replace(config, candidate_size=token,
                      out_dir=os.path.join(config.out_dir, f"size_{token}"))
        results[token] = run_experiment(sub)
        for a in results[token]:
            rows.append(f"{token},{a.seed},{a.report.average_reward!r},"
                        f"{a.report.precision!r},{a.report.recall!r}")
    _atomic_write(os.path.join(config.out_dir, "sweep.csv"), "\n".join(rows) + "\n")
    return results
