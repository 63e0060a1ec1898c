"""Stage runners, pipeline configuration and the resumable one-shot runner.

Each ``stage_*`` function reads its inputs from files and writes its outputs
to new files; the command line subcommands are thin wrappers around them.
"""
from __future__ import annotations

import configparser
import csv
import hashlib
import logging
import os
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import labelgen
from .dataset import SplitConfig, label_distribution, split_dataset
from .errors import ConfigError, LengthMismatchError, PipelineError
from .evaluation import MetricsReport, compare_models, comparison_rows, evaluate
from .features import FeaturizerConfig
from .ingest import TOKEN_ENV, ApiConfig, IngestLog, fetch_courses, read_raw_store, write_raw_store
from .jsonl import read_json, read_jsonl, write_json, write_jsonl
from .labelgen import KeywordOracle, LabeledCourse, LiveBackend, LlmParams
from .model import DecisionRule, TrainConfig, decide_many, load_model, predict_scores_many, save_model, train
from .preprocess import CleanCourse, FilterConfig, clean, degree_distribution

logger = logging.getLogger(__name__)

LLM_TOKEN_ENV = "SDG_LLM_TOKEN"


def synthetic_catalog_path():
    return Path(str(resources.files("course_sdg") / "data" / "synthetic_catalog.jsonl"))


def parse_years(text):
    m = re.fullmatch(r"\s*(\d{4})\s*(?:\.\.|-|:)\s*(\d{4})\s*", str(text))
    if m:
        lo, hi = int(m.group(1)), int(m.group(2))
    elif re.fullmatch(r"\s*\d{4}\s*", str(text)):
        lo = hi = int(text)
    else:
        raise ConfigError(f"bad year range {text!r}, expected e.g. 2021..2023")
    if lo > hi:
        raise ConfigError(f"empty year range {text!r}")
    return lo, hi


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _safe_name(course_id):
    return re.sub(r"[^A-Za-z0-9._-]", "_", course_id)


# -- stages -------------------------------------------------------------------

def stage_ingest(api: ApiConfig, years, out):
    log = IngestLog()
    courses = fetch_courses(api, years, log=log)
    write_raw_store(out, courses)
    Path(str(out) + ".log").write_text(log.render(), encoding="utf-8")
    return courses, log


def stage_clean(in_path, out, config: FilterConfig, stats_path=None, degrees_csv=None, top_n=15):
    courses, stats = clean(read_raw_store(in_path), config)
    write_jsonl(out, [c.to_dict() for c in courses])
    if stats_path:
        write_json(stats_path, stats.to_dict())
    if degrees_csv:
        write_csv(degrees_csv, ["degree", "count"], degree_distribution(courses, top_n))
    return courses, stats


def read_clean(path):
    return [CleanCourse.from_dict(d) for d in read_jsonl(path)]


def read_labeled(path):
    return [LabeledCourse.from_dict(d) for d in read_jsonl(path)]


def make_backend(kind, max_labels, endpoint=None, response_field="text", auth_token=None):
    if kind == "oracle":
        return KeywordOracle(max_labels=max_labels)
    if kind == "live":
        if not endpoint:
            raise ConfigError("live backend needs an endpoint url")
        return LiveBackend(endpoint, response_field, auth_token or os.environ.get(LLM_TOKEN_ENV))
    raise ConfigError(f"unknown backend {kind!r} (expected live or oracle)")


def stage_label(in_path, out, backend, params: LlmParams, max_labels=5, max_attempts=3,
                max_in_flight=4, corrections=None, responses_dir=None, review_queue=None, backoff=0.0):
    courses = read_clean(in_path)
    labeled = labelgen.generate_labels(
        courses, backend, params, max_labels=max_labels,
        max_attempts=max_attempts, max_in_flight=max_in_flight, backoff=backoff,
    )
    if responses_dir:
        rdir = Path(responses_dir)
        rdir.mkdir(parents=True, exist_ok=True)
        for lc in labeled:
            (rdir / f"{_safe_name(lc.id)}.txt").write_text(lc.raw_response or "", encoding="utf-8")
    if corrections:
        labeled = labelgen.apply_corrections(labeled, labelgen.load_corrections(corrections))
    pending = [lc for lc in labeled if lc.needs_review]
    if review_queue:
        write_jsonl(review_queue, [{"course_id": lc.id, "raw_response": lc.raw_response} for lc in pending])
    if pending:
        logger.warning("%d course(s) need manual labels; see the review queue", len(pending))
    write_jsonl(out, [lc.to_dict() for lc in labeled])
    return labeled


SPLIT_FILES = ("train.jsonl", "val.jsonl", "test.jsonl")


def stage_split(in_path, out_dir, config: SplitConfig, distribution_csv=None):
    labeled = [lc for lc in read_labeled(in_path) if not lc.needs_review]
    bundle = split_dataset(labeled, config)
    out_dir = Path(out_dir)
    for name, part in zip(SPLIT_FILES, (bundle.train, bundle.validation, bundle.test)):
        write_jsonl(out_dir / name, [lc.to_dict() for lc in part])
    dist = label_distribution(bundle.train)
    write_csv(distribution_csv or out_dir / "distribution.csv", ["goal", "count", "percent"],
              [(g, c, f"{p:.6f}") for g, c, p in dist])
    return bundle


def stage_train(train_path, val_path, out, config: TrainConfig, featurizer_config=None, rule=None):
    featurizer, model = train(read_labeled(train_path), read_labeled(val_path) if val_path else [],
                              config, featurizer_config, rule)
    save_model(out, featurizer, model)
    return featurizer, model


def stage_predict(model_path, in_path, out, rule: DecisionRule):
    featurizer, model = load_model(model_path)
    records = read_jsonl(in_path)
    courses = [CleanCourse.from_dict(d) for d in records]
    scores = predict_scores_many(model, featurizer, [c.combined_text for c in courses])
    vectors = decide_many(scores, rule)
    rows = [
        {"id": c.id, "labels": list(labelgen.decode_labels(v)), "label_vector": list(v),
         "scores": [float(s) for s in row]}
        for c, v, row in zip(courses, vectors, scores)
    ]
    write_jsonl(out, rows)
    return rows


def stage_evaluate(pred_path, gold_path, out, name, per_goal_csv=None):
    preds = {d["id"]: d for d in read_jsonl(pred_path)}
    gold = read_labeled(gold_path)
    missing = [g.id for g in gold if g.id not in preds]
    if missing or len(preds) != len(gold):
        raise LengthMismatchError(
            f"{len(preds)} predictions vs {len(gold)} gold courses; "
            f"{len(missing)} gold ids without prediction"
        )
    pred_vectors = [tuple(preds[g.id]["label_vector"]) for g in gold]
    report = evaluate(pred_vectors, [g.labels for g in gold], name, Path(gold_path).stem)
    write_json(out, report.to_dict())
    if per_goal_csv is None:
        per_goal_csv = Path(out).with_suffix(".per_goal.csv")
    write_csv(per_goal_csv, ["goal", "f1", "support"],
              [(r.goal, f"{r.f1:.6f}", r.support) for r in report.per_goal])
    return report


def load_report(path):
    return MetricsReport.from_dict(read_json(path))


def stage_compare(report_paths, out):
    ranked, best = compare_models([load_report(p) for p in report_paths])
    write_csv(out, ["model", "precision", "recall", "f1"], comparison_rows(ranked))
    return ranked, best


def stage_report(out_dir, clean_path=None, train_path=None, report_paths=(), top_n=15):
    """Render every figure whose inputs are given; returns written paths."""
    from . import plotting

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if clean_path:
        rows = degree_distribution(read_clean(clean_path), top_n)
        write_csv(out_dir / "degree_distribution.csv", ["degree", "count"], rows)
        written += [out_dir / "degree_distribution.csv",
                    plotting.plot_degree_distribution(rows, out_dir / "degree_distribution.png")]
    if train_path:
        dist = label_distribution(read_labeled(train_path))
        write_csv(out_dir / "label_distribution.csv", ["goal", "count", "percent"],
                  [(g, c, f"{p:.6f}") for g, c, p in dist])
        written += [out_dir / "label_distribution.csv",
                    plotting.plot_label_distribution(dist, out_dir / "label_distribution.png")]
    if report_paths:
        ranked, _ = stage_compare(report_paths, out_dir / "model_comparison.csv")
        written += [out_dir / "model_comparison.csv",
                    plotting.plot_model_comparison(ranked, out_dir / "model_comparison.png")]
        with_goals = [r for r in ranked if r.per_goal]
        if with_goals:
            rows = [(r.model_name, g.goal, f"{g.f1:.6f}", g.support) for r in with_goals for g in r.per_goal]
            write_csv(out_dir / "per_goal_f1.csv", ["model", "goal", "f1", "support"], rows)
            written += [out_dir / "per_goal_f1.csv",
                        plotting.plot_per_goal_f1(with_goals, out_dir / "per_goal_f1.png")]
    return written


# -- configuration --------------------------------------------------------------

@dataclass
class PipelineConfig:
    work_dir: Path = Path("work")
    api: ApiConfig = field(default_factory=lambda: ApiConfig(synthetic_catalog_path().as_uri()))
    years: tuple = (2021, 2023)
    filter: FilterConfig = field(default_factory=FilterConfig)
    llm: LlmParams = field(default_factory=LlmParams)
    backend: str = "oracle"
    endpoint: str | None = None
    response_field: str = "text"
    llm_token: str | None = field(default=None, repr=False)
    max_labels: int = 5
    max_attempts: int = 3
    label_in_flight: int = 4
    label_backoff: float = 1.0
    corrections: Path | None = None
    split: SplitConfig = field(default_factory=SplitConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    featurizer: FeaturizerConfig = field(default_factory=FeaturizerConfig)
    rule: DecisionRule = field(default_factory=DecisionRule)
    model_name: str = "ovr-logistic-tfidf"

    def path(self, name):
        return Path(self.work_dir) / name


def load_config(path=None, env=None, overrides=None):
    """Build a PipelineConfig from an INI file, environment and overrides.

    Precedence: overrides (command line flags) > file > defaults. Secrets are
    read from SDG_API_TOKEN and SDG_LLM_TOKEN only.
    """
    env = os.environ if env is None else env
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    cp = configparser.ConfigParser()
    if path is not None:
        if not Path(path).exists():
            raise ConfigError(f"config file not found: {path}")
        cp.read(path, encoding="utf-8")

    def get(section, key, default, conv=str):
        flag = f"{section}.{key}"
        if flag in overrides:
            raw = overrides[flag]
        elif cp.has_option(section, key):
            raw = cp.get(section, key)
        else:
            return default
        try:
            return conv(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from None

    def as_bool(v):
        if isinstance(v, bool):
            return v
        return str(v).strip().lower() in ("1", "true", "yes", "on")

    def as_ratios(v):
        return tuple(float(x) for x in str(v).split(","))

    base_dir = Path(path).parent if path else Path.cwd()

    def as_path(v):
        p = Path(v)
        return p if p.is_absolute() else base_dir / p

    try:
        catalog = get("api", "catalog", None, as_path)
        base_url = get("api", "base_url", None)
        if catalog is not None:
            base_url = catalog.resolve().as_uri()
        elif not base_url:
            base_url = synthetic_catalog_path().as_uri()
        cfg = PipelineConfig(
            work_dir=get("paths", "work_dir", Path("work"), as_path),
            api=ApiConfig(
                base_url=base_url,
                page_size=get("api", "page_size", 100, int),
                max_retries=get("api", "max_retries", 3, int),
                backoff_base=get("api", "backoff_base", 0.5, float),
                max_in_flight=get("api", "max_in_flight", 4, int),
                auth_token=env.get(TOKEN_ENV),
            ),
            years=get("filter", "years", (2021, 2023), parse_years),
            llm=LlmParams(
                temperature=get("llm", "temperature", 0.2, float),
                token_limit=get("llm", "token_limit", 500, int),
                model_name=get("llm", "model_name", "text-bison-32k"),
            ),
            backend=get("llm", "backend", "oracle"),
            endpoint=get("llm", "endpoint", None),
            response_field=get("llm", "response_field", "text"),
            llm_token=env.get(LLM_TOKEN_ENV),
            max_labels=get("llm", "max_labels", 5, int),
            max_attempts=get("llm", "max_attempts", 3, int),
            label_in_flight=get("llm", "max_in_flight", 4, int),
            label_backoff=get("llm", "backoff", 1.0, float),
            corrections=get("paths", "corrections", None, as_path),
            split=SplitConfig(
                ratios=get("split", "ratios", (0.70, 0.15, 0.15), as_ratios),
                seed=get("split", "seed", 42, int),
            ),
            train=TrainConfig(
                learning_rate=get("train", "lr", 0.1, float),
                epochs=get("train", "epochs", 300, int),
                l2=get("train", "l2", 1e-4, float),
                seed=get("train", "seed", 7, int),
            ),
            featurizer=FeaturizerConfig(
                min_df=get("train", "min_df", 2, int),
                bigrams=get("train", "bigrams", False, as_bool),
            ),
            rule=get("decision", "rule", DecisionRule(), DecisionRule.parse),
            model_name=get("evaluate", "name", "ovr-logistic-tfidf"),
        )
        cfg.filter = FilterConfig(
            year_min=cfg.years[0], year_max=cfg.years[1],
            min_combined_chars=get("filter", "min_chars", 500, int),
            max_combined_chars=get("filter", "max_chars", 2000, int),
            required_language=get("filter", "language", "english"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.backend not in ("oracle", "live"):
        raise ConfigError(f"unknown backend {cfg.backend!r}")
    if cfg.backend == "live" and not cfg.endpoint:
        raise ConfigError("[llm] endpoint is required for the live backend")
    if cfg.corrections is not None and not Path(cfg.corrections).exists():
        raise ConfigError(f"corrections file not found: {cfg.corrections}")
    return cfg


# -- runner -------------------------------------------------------------------

class StageFailed(PipelineError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage} failed: {cause}")


@dataclass
class Stage:
    name: str
    inputs: list
    outputs: list  # first output is the stage's manifest artifact
    action: object

    def is_fresh(self):
        if not all(Path(p).exists() for p in self.outputs):
            return False
        inputs = [Path(p) for p in self.inputs if p is not None]
        if not inputs:
            return True
        if not all(p.exists() for p in inputs):
            return False
        newest_in = max(p.stat().st_mtime_ns for p in inputs)
        oldest_out = min(Path(p).stat().st_mtime_ns for p in self.outputs)
        return oldest_out >= newest_in


@dataclass
class RunResult:
    status: int
    manifest: dict
    stage_status: dict
    failed_stage: str | None = None
    error: str | None = None


def _catalog_file(api):
    if api.base_url.startswith("file:"):
        from urllib.parse import unquote, urlparse

        return Path(unquote(urlparse(api.base_url).path))
    return None


def build_stages(cfg: PipelineConfig):
    p = cfg.path
    splits = [p("splits") / n for n in SPLIT_FILES]
    catalog = _catalog_file(cfg.api)

    def ingest():
        if catalog is not None and not catalog.exists():
            raise FileNotFoundError(f"catalog file not found: {catalog}")
        stage_ingest(cfg.api, cfg.years, p("raw.jsonl"))

    def label():
        backend = make_backend(cfg.backend, cfg.max_labels, cfg.endpoint, cfg.response_field, cfg.llm_token)
        stage_label(p("clean.jsonl"), p("labeled.jsonl"), backend, cfg.llm, cfg.max_labels,
                    cfg.max_attempts, cfg.label_in_flight, cfg.corrections,
                    p("responses"), p("review_queue.jsonl"), cfg.label_backoff)

    return [
        Stage("ingest", [catalog], [p("raw.jsonl")], ingest),
        Stage("clean", [p("raw.jsonl")], [p("clean.jsonl")],
              lambda: stage_clean(p("raw.jsonl"), p("clean.jsonl"), cfg.filter,
                                  p("clean_stats.json"), p("degree_distribution.csv"))),
        Stage("label", [p("clean.jsonl"), cfg.corrections], [p("labeled.jsonl")], label),
        Stage("split", [p("labeled.jsonl")], splits,
              lambda: stage_split(p("labeled.jsonl"), p("splits"), cfg.split)),
        Stage("train", splits[:2], [p("model.bin")],
              lambda: stage_train(splits[0], splits[1], p("model.bin"), cfg.train, cfg.featurizer, cfg.rule)),
        Stage("predict", [p("model.bin"), splits[2]], [p("preds.jsonl")],
              lambda: stage_predict(p("model.bin"), splits[2], p("preds.jsonl"), cfg.rule)),
        Stage("evaluate", [p("preds.jsonl"), splits[2]], [p("report.json")],
              lambda: stage_evaluate(p("preds.jsonl"), splits[2], p("report.json"), cfg.model_name)),
    ]


def build_manifest(cfg, stages):
    root = Path(cfg.work_dir)
    artifacts = []
    for st in stages:
        files = [Path(o) for o in st.outputs]
        if len(files) == 1:
            f = files[0]
            artifacts.append({"stage": st.name, "path": f.relative_to(root).as_posix(),
                              "sha256": sha256_file(f), "bytes": f.stat().st_size})
        else:
            # multi-file output: hash over the member name/hash lines
            members = [{"path": f.relative_to(root).as_posix(), "sha256": sha256_file(f)} for f in files]
            digest = hashlib.sha256(
                "".join(f"{m['path']}:{m['sha256']}\n" for m in members).encode()
            ).hexdigest()
            artifacts.append({"stage": st.name, "path": files[0].parent.relative_to(root).as_posix() + "/",
                              "sha256": digest, "bytes": sum(f.stat().st_size for f in files),
                              "files": members})
    return {"format": 1, "artifacts": artifacts}


def run_pipeline(cfg: PipelineConfig, force=False):
    """Run every stage in order, skipping fresh ones unless ``force``.

    Returns a RunResult; status 0 on success, 3 on a stage failure. Outputs of
    completed stages stay on disk so a later run resumes from the failure.
    """
    Path(cfg.work_dir).mkdir(parents=True, exist_ok=True)
    stages = build_stages(cfg)
    status = {}
    for st in stages:
        if not force and st.is_fresh():
            logger.info("stage %s: up to date, skipped", st.name)
            status[st.name] = "skipped"
            continue
        logger.info("stage %s: running", st.name)
        try:
            st.action()
        except (PipelineError, OSError, ValueError, KeyError) as exc:
            logger.error("stage %s failed: %s", st.name, exc)
            status[st.name] = "failed"
            return RunResult(3, {}, status, st.name, f"{type(exc).__name__}: {exc}")
        status[st.name] = "ran"
    manifest = build_manifest(cfg, stages)
    write_json(cfg.path("manifest.json"), manifest)
    return RunResult(0, manifest, status)
