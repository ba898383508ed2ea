"""gelid command line: stage-by-stage artifacts or the whole pipeline.

Subcommands: ingest, segment, features, train, classify, group, cluster,
run, eval, report. Exit codes: 0 success, 1 usage/config error, 2
data/format error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import clustering, features, models, stats
from .config import load_config
from .errors import ConfigError, DataError, GelidError
from .frames import load_track, write_descriptor_csv
from .pipeline import (ClassifierBundle, classify_segments, export_report,
                       hierarchy_to_json, load_manifest, parse_subtitle_file,
                       run_pipeline)
from .segmentation import (read_segments_jsonl, segment_video,
                           write_segments_jsonl)
from .subtitles import transcript_to_dict

log = logging.getLogger("gelid")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")


def _read_json(path: str):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from None


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_inputs(args, config):
    manifest = load_manifest(args.manifest)
    transcripts, tracks = {}, {}
    for entry in manifest.videos:
        transcripts[entry.video_id] = parse_subtitle_file(entry.subtitles,
                                                          entry.video_id)
        tracks[entry.video_id] = load_track(entry.frames, entry.video_id,
                                            entry.duration_ms,
                                            config.bins_per_channel)
    return manifest, transcripts, tracks


def cmd_ingest(args) -> int:
    config = load_config(args.config, seed_override=args.seed)
    manifest, transcripts, tracks = _load_inputs(args, config)
    out = _out_dir(args)
    for entry in manifest.videos:
        _write(out / f"{entry.video_id}.transcript.json",
               json.dumps(transcript_to_dict(transcripts[entry.video_id]),
                          sort_keys=True, indent=2) + "\n")
        write_descriptor_csv(tracks[entry.video_id],
                             out / f"{entry.video_id}.descriptors.csv")
    print(f"ingested {len(manifest.videos)} video(s) into {out}")
    return 0


def cmd_segment(args) -> int:
    config = load_config(args.config, seed_override=args.seed)
    manifest, transcripts, tracks = _load_inputs(args, config)
    seg_cfg = config.segmenter_config()
    segments = []
    for entry in manifest.videos:
        segments += segment_video(tracks[entry.video_id],
                                  transcripts[entry.video_id], seg_cfg)
    out = _out_dir(args)
    _write(out / "segments.jsonl", write_segments_jsonl(segments))
    print(f"wrote {len(segments)} segment(s) to {out / 'segments.jsonl'}")
    return 0


def _read_segments(path: str):
    return read_segments_jsonl(Path(path).read_text(encoding="utf-8"))


def cmd_features(args) -> int:
    config = load_config(args.config, seed_override=args.seed)
    _, transcripts, tracks = _load_inputs(args, config)
    segments = _read_segments(args.segments)
    stopwords = config.stopword_set()
    vocab = features.fit_vocabulary(
        [features.segment_text(s, transcripts[s.video_id]) for s in segments],
        ngram_max=config.ngram_max, stopwords=stopwords, min_df=config.min_df)
    table = (features.load_embedding_table(config.embedding_path)
             if config.embedding_path else None)
    vectors = [features.assemble_features(
        s, transcripts[s.video_id], tracks[s.video_id], vocab=vocab,
        table=table, ngram_max=config.ngram_max, stopwords=stopwords,
        groups=config.feature_group_list()) for s in segments]
    out = _out_dir(args)
    _write(out / "features.csv", features.write_feature_csv(vectors))
    _write(out / "vocabulary.json",
           json.dumps(vocab.to_dict(), sort_keys=True, indent=2) + "\n")
    print(f"wrote features for {len(vectors)} segment(s) to {out}")
    return 0


def _read_segment_labels(path: str) -> dict[str, str]:
    labels = {}
    for line_no, line in enumerate(
            Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        obj = json.loads(line)
        if "segment_id" not in obj or "label" not in obj:
            raise DataError(f"{path}:{line_no}: need segment_id and label")
        labels[obj["segment_id"]] = obj["label"]
    return labels


def cmd_train(args) -> int:
    config = load_config(args.config, seed_override=args.seed)
    vectors = features.read_feature_csv(
        Path(args.features).read_text(encoding="utf-8"))
    vocab = features.Vocabulary.from_dict(_read_json(args.vocabulary))
    labels = _read_segment_labels(args.labels)
    labeled = [fv for fv in vectors if fv.segment_id in labels]
    if not labeled:
        raise DataError("no feature rows match the provided labels")
    matrix, names = features.feature_matrix(labeled)
    y = np.array([labels[fv.segment_id] for fv in labeled])
    from .pipeline import _maybe_smote
    matrix, y = _maybe_smote(matrix, y, config)
    model = models.train(config.model_kind, matrix, y,
                         hyper=config.model_hyper(), seed=config.seed,
                         feature_names=names)
    table = (features.load_embedding_table(config.embedding_path)
             if config.embedding_path else None)
    bundle = ClassifierBundle(model=model, vocabulary=vocab,
                              feature_groups=config.feature_group_list(),
                              ngram_max=config.ngram_max,
                              stopwords=config.stopword_set(),
                              embedding=table)
    out = Path(args.out)
    _write(out, bundle.to_json() + "\n")
    print(f"trained {config.model_kind} on {matrix.shape[0]} row(s); "
          f"model at {out}")
    return 0


def _load_bundle(path: str) -> ClassifierBundle:
    from .pipeline import load_bundle
    return load_bundle(path)


def cmd_classify(args) -> int:
    config = load_config(args.config, seed_override=args.seed)
    _, transcripts, tracks = _load_inputs(args, config)
    segments = _read_segments(args.segments)
    bundle = _load_bundle(args.model)
    predictions = classify_segments(segments, transcripts, tracks, bundle)
    out = _out_dir(args)
    lines = [json.dumps({"segment_id": sid, "label": predictions[sid]},
                        sort_keys=True)
             for sid in sorted(predictions)]
    _write(out / "labels.jsonl", "\n".join(lines) + "\n")
    print(f"classified {len(predictions)} segment(s)")
    return 0


def _keyframe_lookup(segments, tracks):
    lookup = {}
    for seg in segments:
        track = tracks[seg.video_id]
        by_ts = {f.timestamp_ms: f.histogram for f in track.frames}
        rows = [by_ts[ts] for ts in seg.keyframe_timestamps if ts in by_ts]
        if rows:
            lookup[seg.segment_id] = np.stack(rows)
    return lookup


def _require_labels(segments, labels: dict[str, str]) -> None:
    missing = [s.segment_id for s in segments if s.segment_id not in labels]
    if missing:
        raise DataError(f"labels file is missing segment(s): "
                        f"{missing[:5]}{'...' if len(missing) > 5 else ''}")


def cmd_group(args) -> int:
    config = load_config(args.config, seed_override=args.seed)
    _, _, tracks = _load_inputs(args, config)
    segments = _read_segments(args.segments)
    labels = _read_segment_labels(args.labels)
    _require_labels(segments, labels)
    informative = [s for s in segments
                   if labels[s.segment_id]
                   != models.IssueLabel.NON_INFORMATIVE.value]
    lookup = _keyframe_lookup(informative, tracks)
    ids = [s.segment_id for s in informative if s.segment_id in lookup]
    assignment = clustering.group_by_context(
        ids, lookup, algorithm=config.context_algorithm,
        params=config.context_params())
    out = _out_dir(args)
    _write(out / "contexts.json",
           json.dumps(assignment.to_dict(), sort_keys=True, indent=2) + "\n")
    print(f"grouped {len(ids)} segment(s) into "
          f"{len(assignment.clusters())} context(s) "
          f"+ {len(assignment.noise())} noise")
    return 0


def cmd_cluster(args) -> int:
    config = load_config(args.config, seed_override=args.seed)
    manifest, transcripts, tracks = _load_inputs(args, config)
    segments = _read_segments(args.segments)
    labels = _read_segment_labels(args.labels)
    _require_labels(segments, labels)
    bundle = _load_bundle(args.model)
    from .pipeline import build_hierarchy  # stage shares the run logic
    hierarchy = build_hierarchy(segments, labels, transcripts, tracks,
                                config, bundle)
    out = _out_dir(args)
    _write(out / "hierarchy.json", hierarchy_to_json(hierarchy))
    print(f"wrote hierarchy with {hierarchy['counts']['n_contexts']} "
          f"context(s) to {out / 'hierarchy.json'}")
    return 0


def cmd_run(args) -> int:
    config = load_config(args.config, seed_override=args.seed)
    if args.model:
        config.model_path = args.model
    manifest = load_manifest(args.manifest)
    result = run_pipeline(manifest, config)
    out = _out_dir(args)
    _write(out / "segments.jsonl", write_segments_jsonl(result.segments))
    lines = [json.dumps({"segment_id": sid,
                         "label": result.predictions[sid]}, sort_keys=True)
             for sid in sorted(result.predictions)]
    _write(out / "labels.jsonl", "\n".join(lines) + "\n")
    _write(out / "hierarchy.json", hierarchy_to_json(result.hierarchy))
    _write(out / "model.json", result.bundle.to_json() + "\n")
    _write(out / "run_report.json",
           json.dumps(result.run_report, sort_keys=True, indent=2) + "\n")
    export_report(result.hierarchy, "html", out / "report.html")
    counts = result.hierarchy["counts"]
    print(f"run complete: {counts['n_segments']} segments, "
          f"{counts['n_informative']} informative, "
          f"{counts['n_contexts']} contexts -> {out}")
    return 0


def cmd_report(args) -> int:
    hierarchy = _read_json(args.hierarchy)
    export_report(hierarchy, args.format, args.out)
    print(f"wrote {args.format} report to {args.out}")
    return 0


def _read_json_array(path: str) -> list:
    obj = _read_json(path)
    if not isinstance(obj, list):
        raise DataError(f"{path}: expected a JSON array")
    return obj


def _partition_from_file(path: str) -> stats.Partition:
    obj = _read_json(path)
    if "groups" in obj:
        return stats.Partition.from_groups(obj["groups"])
    if "mapping" in obj:
        return stats.Partition.from_mapping(obj["mapping"])
    raise DataError(f"{path}: partition file needs 'groups' or 'mapping'")


def cmd_eval(args) -> int:
    stat = args.stat
    if stat == "mojofm":
        a = _partition_from_file(args.partition_a)
        b = _partition_from_file(args.partition_b)
        mno_value = (stats.mno_enumerated(a, b) if args.oracle
                     else stats.mno(a, b))
        result = {"stat": stat, "mno": mno_value,
                  "max_mno": stats.max_mno(b),
                  "mojofm": stats.mojo_fm(a, b),
                  "oracle": bool(args.oracle)}
    elif stat == "mno":
        a = _partition_from_file(args.partition_a)
        b = _partition_from_file(args.partition_b)
        value = (stats.mno_enumerated(a, b) if args.oracle
                 else stats.mno(a, b))
        result = {"stat": stat, "mno": value, "oracle": bool(args.oracle)}
    elif stat == "kappa":
        result = {"stat": stat,
                  "kappa": stats.cohens_kappa(_read_json_array(args.x),
                                              _read_json_array(args.y))}
    elif stat == "mann-whitney":
        r = stats.mann_whitney_u(_read_json_array(args.x),
                                 _read_json_array(args.y))
        result = {"stat": stat, "u": r.u, "p_value": r.p_value,
                  "exact": r.exact}
    elif stat == "cliffs-delta":
        r = stats.cliffs_delta(_read_json_array(args.x),
                               _read_json_array(args.y))
        result = {"stat": stat, "delta": r.delta, "magnitude": r.magnitude}
    elif stat == "bh":
        result = {"stat": stat,
                  "adjusted": stats.benjamini_hochberg(
                      _read_json_array(args.p))}
    elif stat == "margin":
        result = {"stat": stat,
                  "margin_of_error": stats.margin_of_error(args.n,
                                                           args.confidence)}
    elif stat == "likert-std":
        r = stats.simulate_likert_std(args.sims, args.group_size,
                                      seed=args.sim_seed)
        result = {"stat": stat, "min": r.min, "max": r.max, "mean": r.mean}
    elif stat == "power":
        r = stats.simulate_power(args.group_size, args.shift, args.sd,
                                 args.alpha, n_sims=args.sims,
                                 seed=args.sim_seed)
        result = {"stat": stat, "power": r.power,
                  "power_mann_whitney": r.power_mann_whitney,
                  "n_sims": r.n_sims}
    elif stat == "atomicity":
        result = {"stat": stat, "score": stats.atomicity_score(args.extras)}
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown stat {stat!r}")
    text = json.dumps(result, sort_keys=True, indent=2) + "\n"
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gelid",
                     description="Mine gameplay-video derivatives for "
                                 "issue reports.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, manifest=True, config=True, out=True):
        if manifest:
            p.add_argument("--manifest", required=True,
                           help="dataset manifest JSON")
        if config:
            p.add_argument("--config", default=None,
                           help="flat key=value run config")
            p.add_argument("--seed", type=int, default=None,
                           help="seed override (mandatory somewhere)")
        if out:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("ingest", help="normalize subtitles and descriptors")
    common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("segment", help="detect cut points and segments")
    common(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("features", help="fit vocabulary and emit features")
    common(p)
    p.add_argument("--segments", required=True, help="segments.jsonl")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train a classifier bundle")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--features", required=True, help="features.csv")
    p.add_argument("--vocabulary", required=True, help="vocabulary.json")
    p.add_argument("--labels", required=True,
                   help="JSONL of {segment_id, label}")
    p.add_argument("--out", required=True, help="model JSON path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="label segments with a trained model")
    common(p)
    p.add_argument("--segments", required=True)
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("group", help="cluster informative segments by context")
    common(p)
    p.add_argument("--segments", required=True)
    p.add_argument("--labels", required=True)
    p.set_defaults(func=cmd_group)

    p = sub.add_parser("cluster", help="full hierarchy: contexts, categories, "
                                       "issue clusters")
    common(p)
    p.add_argument("--segments", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("run", help="all stages end to end")
    common(p)
    p.add_argument("--model", default=None, help="pretrained bundle JSON")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="render a hierarchy JSON")
    p.add_argument("--hierarchy", required=True)
    p.add_argument("--format", choices=("json", "html"), default="html")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("eval", help="statistics harness")
    p.add_argument("--stat", required=True,
                   choices=("mojofm", "mno", "kappa", "mann-whitney",
                            "cliffs-delta", "bh", "margin", "likert-std",
                            "power", "atomicity"))
    p.add_argument("--partition-a", help="partition JSON (groups or mapping)")
    p.add_argument("--partition-b", help="partition JSON (groups or mapping)")
    p.add_argument("--x", help="JSON array of values")
    p.add_argument("--y", help="JSON array of values")
    p.add_argument("--p", help="JSON array of p-values")
    p.add_argument("--n", type=int, help="sample size (margin)")
    p.add_argument("--confidence", type=float, default=0.95)
    p.add_argument("--group-size", type=int, default=200)
    p.add_argument("--shift", type=float, default=0.5)
    p.add_argument("--sd", type=float, default=1.41)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--sims", type=int, default=1000)
    p.add_argument("--sim-seed", type=int, default=0)
    p.add_argument("--extras", type=int, default=0)
    p.add_argument("--oracle", action="store_true",
                   help="use enumeration oracles (test builds)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except GelidError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
