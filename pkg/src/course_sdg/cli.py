"""Command line entry point: ``course-sdg <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 stage failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import pipeline
from .errors import ConfigError, PipelineError
from .model import DecisionRule

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3

log = logging.getLogger("course_sdg")


def _pick(flag, default):
    return default if flag is None else flag


def _add_globals(p, suppress):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="INI configuration file")
    p.add_argument("--seed", type=int, default=d, help="seed for split and training")
    p.add_argument("--force", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="rerun stages even when outputs are up to date")
    p.add_argument("-v", "--verbose", action="store_true",
                   default=argparse.SUPPRESS if suppress else False)


def build_parser():
    parser = argparse.ArgumentParser(prog="course-sdg", description=__doc__.splitlines()[0])
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def cmd(name, help_):
        p = sub.add_parser(name, help=help_)
        _add_globals(p, suppress=True)
        return p

    p = cmd("ingest", "fetch raw courses from the catalog API")
    p.add_argument("--base-url", help="http(s):// API url or file:// catalog")
    p.add_argument("--years")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--page-size", type=int)
    p.add_argument("--max-retries", type=int)
    p.add_argument("--backoff-base", type=float)
    p.add_argument("--max-in-flight", type=int)

    p = cmd("clean", "filter raw courses into clean English courses")
    p.add_argument("--in", dest="inp", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--stats", type=Path)
    p.add_argument("--degrees", type=Path, help="degree histogram CSV")
    p.add_argument("--top-n", type=int, default=15)
    p.add_argument("--min-chars", type=int)
    p.add_argument("--max-chars", type=int)
    p.add_argument("--years")

    p = cmd("label", "generate SDG labels for clean courses")
    p.add_argument("--in", dest="inp", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--backend", choices=["live", "oracle"])
    p.add_argument("--endpoint")
    p.add_argument("--response-field")
    p.add_argument("--model-name")
    p.add_argument("--temperature", type=float)
    p.add_argument("--token-limit", type=int)
    p.add_argument("--max-labels", type=int)
    p.add_argument("--max-attempts", type=int)
    p.add_argument("--retry-backoff", type=float, help="fixed pause in seconds between attempts")
    p.add_argument("--max-in-flight", type=int)
    p.add_argument("--corrections", type=Path)
    p.add_argument("--responses-dir", type=Path, help="default: responses/ next to --out")
    p.add_argument("--review-queue", type=Path)

    p = cmd("split", "split labeled courses into train/val/test")
    p.add_argument("--in", dest="inp", required=True, type=Path)
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--ratios")

    p = cmd("train", "train the one-vs-rest classifier")
    p.add_argument("--train", dest="train_path", required=True, type=Path)
    p.add_argument("--val", type=Path)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--l2", type=float)
    p.add_argument("--min-df", type=int)
    p.add_argument("--rule")
    p.add_argument("--out", required=True, type=Path)

    p = cmd("predict", "predict label vectors for courses")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--in", dest="inp", required=True, type=Path)
    p.add_argument("--rule")
    p.add_argument("--out", required=True, type=Path)

    p = cmd("evaluate", "score predictions against gold labels")
    p.add_argument("--pred", required=True, type=Path)
    p.add_argument("--gold", required=True, type=Path)
    p.add_argument("--name")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--per-goal-csv", type=Path)

    p = cmd("compare", "rank metric reports by micro F1")
    p.add_argument("--reports", nargs="+", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)

    p = cmd("report", "render figures and plot-ready CSVs")
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--clean", type=Path, help="clean.jsonl for the degree histogram")
    p.add_argument("--train", dest="train_path", type=Path, help="train split for the label distribution")
    p.add_argument("--reports", nargs="*", type=Path, default=[])
    p.add_argument("--top-n", type=int, default=15)

    p = cmd("run", "run the whole pipeline, skipping up-to-date stages")
    p.add_argument("--work-dir", type=Path)
    p.add_argument("--catalog", type=Path, help="local catalog JSONL (overrides [api])")

    return parser


def _config(args):
    overrides = {}
    if args.seed is not None:
        overrides["split.seed"] = args.seed
        overrides["train.seed"] = args.seed
    return pipeline.load_config(args.config, overrides=overrides)


def _dispatch(args):
    cfg = _config(args)
    c = args.command

    if c == "ingest":
        url = _pick(args.base_url, cfg.api.base_url)
        if url and "://" not in url:
            url = Path(url).resolve().as_uri()
        api = replace(
            cfg.api, base_url=url,
            page_size=_pick(args.page_size, cfg.api.page_size),
            max_retries=_pick(args.max_retries, cfg.api.max_retries),
            backoff_base=_pick(args.backoff_base, cfg.api.backoff_base),
            max_in_flight=_pick(args.max_in_flight, cfg.api.max_in_flight),
        )
        years = pipeline.parse_years(args.years) if args.years else cfg.years
        courses, ilog = pipeline.stage_ingest(api, years, args.out)
        print(f"ingested {len(courses)} courses over {len(ilog.pages)} page(s) -> {args.out}")

    elif c == "clean":
        years = pipeline.parse_years(args.years) if args.years else cfg.years
        fcfg = replace(
            cfg.filter, year_min=years[0], year_max=years[1],
            min_combined_chars=_pick(args.min_chars, cfg.filter.min_combined_chars),
            max_combined_chars=_pick(args.max_chars, cfg.filter.max_combined_chars),
        )
        courses, stats = pipeline.stage_clean(args.inp, args.out, fcfg, args.stats, args.degrees, args.top_n)
        print(f"retained {stats.retained} of {stats.input}; dropped {stats.dropped}")

    elif c == "label":
        params = replace(
            cfg.llm,
            temperature=_pick(args.temperature, cfg.llm.temperature),
            token_limit=_pick(args.token_limit, cfg.llm.token_limit),
            model_name=_pick(args.model_name, cfg.llm.model_name),
        )
        max_labels = _pick(args.max_labels, cfg.max_labels)
        backend = pipeline.make_backend(
            _pick(args.backend, cfg.backend), max_labels, _pick(args.endpoint, cfg.endpoint),
            _pick(args.response_field, cfg.response_field), cfg.llm_token,
        )
        out_dir = args.out.parent
        labeled = pipeline.stage_label(
            args.inp, args.out, backend, params, max_labels,
            _pick(args.max_attempts, cfg.max_attempts), _pick(args.max_in_flight, cfg.label_in_flight),
            _pick(args.corrections, cfg.corrections),
            _pick(args.responses_dir, out_dir / "responses"),
            _pick(args.review_queue, out_dir / "review_queue.jsonl"),
            _pick(args.retry_backoff, cfg.label_backoff),
        )
        pending = sum(lc.needs_review for lc in labeled)
        print(f"labelled {len(labeled) - pending} courses, {pending} queued for review -> {args.out}")

    elif c == "split":
        scfg = cfg.split
        if args.ratios:
            scfg = replace(scfg, ratios=tuple(float(x) for x in args.ratios.split(",")))
        b = pipeline.stage_split(args.inp, args.out_dir, scfg)
        print(f"train={len(b.train)} val={len(b.validation)} test={len(b.test)} -> {args.out_dir}")

    elif c == "train":
        tcfg = replace(
            cfg.train,
            learning_rate=_pick(args.lr, cfg.train.learning_rate),
            epochs=_pick(args.epochs, cfg.train.epochs),
            l2=_pick(args.l2, cfg.train.l2),
        )
        fcfg = replace(cfg.featurizer, min_df=_pick(args.min_df, cfg.featurizer.min_df))
        rule = DecisionRule.parse(args.rule) if args.rule else cfg.rule
        featurizer, model = pipeline.stage_train(args.train_path, args.val, args.out, tcfg, fcfg, rule)
        vf1 = model.metadata["val_micro_f1"]
        tail = f", final val micro-F1 {vf1[-1]:.3f}" if vf1 else ""
        print(f"trained on {featurizer.corpus_size} docs, {featurizer.n_features} features, "
              f"loss {model.metadata['final_loss']:.4f}{tail} -> {args.out}")

    elif c == "predict":
        rule = DecisionRule.parse(args.rule) if args.rule else cfg.rule
        rows = pipeline.stage_predict(args.model, args.inp, args.out, rule)
        print(f"predicted {len(rows)} courses with rule {rule} -> {args.out}")

    elif c == "evaluate":
        r = pipeline.stage_evaluate(args.pred, args.gold, args.out, _pick(args.name, cfg.model_name),
                                    args.per_goal_csv)
        print(f"{r.model_name}: P={r.micro_precision:.3f} R={r.micro_recall:.3f} F1={r.micro_f1:.3f}")

    elif c == "compare":
        ranked, best = pipeline.stage_compare(args.reports, args.out)
        for r in ranked:
            print(f"{r.model_name:<16} {r.micro_precision:.3f} {r.micro_recall:.3f} {r.micro_f1:.3f}")
        print(f"best: {best.model_name}")

    elif c == "report":
        written = pipeline.stage_report(args.out_dir, args.clean, args.train_path, args.reports, args.top_n)
        for w in written:
            print(w)

    elif c == "run":
        if args.work_dir is not None:
            cfg.work_dir = args.work_dir
        if args.catalog is not None:
            cfg.api = replace(cfg.api, base_url=args.catalog.resolve().as_uri())
        result = pipeline.run_pipeline(cfg, force=args.force)
        for name, st in result.stage_status.items():
            print(f"{name:<9} {st}")
        if result.status != EXIT_OK:
            print(f"error: stage {result.failed_stage} failed: {result.error}", file=sys.stderr)
            return result.status
        print(f"manifest: {cfg.path('manifest.json')}")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PipelineError, OSError, ValueError, KeyError) as exc:
        print(f"error in {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
